//! Runs the gradient and projection self-checks.
//!
//! cargo run --release --example gradient_and_projection

use cfsec::validation::{check_gradient, check_projection};

fn main() -> cfsec::Result<()> {
    println!("{}", check_gradient(1, 20)?);
    println!("{}", check_projection(1, 200)?);
    Ok(())
}
