//! Number formatting shared by every CSV/JSON writer.

/// Nine significant digits in scientific notation, e.g. `1.23456789e-3`.
pub fn sig9(x: f64) -> String {
    if x == 0.0 {
        return "0".to_string();
    }
    if !x.is_finite() {
        return x.to_string();
    }
    format!("{:.8e}", x)
}

/// Rounds to nine significant digits for JSON summaries.
pub fn round9(x: f64) -> f64 {
    if x == 0.0 || !x.is_finite() {
        return x;
    }
    sig9(x).parse().unwrap_or(x)
}
