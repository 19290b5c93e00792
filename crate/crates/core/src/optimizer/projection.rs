use ndarray::{Array1, Array2, ArrayView1};

use super::DecisionVars;

/// Euclidean projection of one vector onto `{x >= 0, ||x|| <= 1}`: clip to the
/// orthant, then scale back into the unit ball.
pub fn project_ball_orthant(r: ArrayView1<f64>) -> Array1<f64> {
    let pos = r.mapv(|x| x.max(0.0));
    let norm = pos.iter().map(|x| x * x).sum::<f64>().sqrt();
    if norm > 1.0 {
        pos / norm
    } else {
        pos
    }
}

pub(crate) fn project_theta(theta: &Array2<f64>) -> Array2<f64> {
    let mut out = theta.clone();
    for mut row in out.rows_mut() {
        let p = project_ball_orthant(row.view());
        row.assign(&p);
    }
    out
}

/// Projection onto the convex part of the feasible set: per-AP power ball
/// intersected with the nonnegative orthant for `theta`, the unit box for `z`.
/// The two blocks separate, and each AP row separates.
pub fn project(r: &DecisionVars) -> DecisionVars {
    DecisionVars { theta: project_theta(&r.theta), z: r.z.mapv(|x| x.clamp(0.0, 1.0)) }
}
