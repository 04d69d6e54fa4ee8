//! Central finite-difference utilities for gradient checking.
//!
//! These exist for tests and the acceptance suite: every analytic gradient
//! in the crate is validated against them.

use super::Dense;

/// Central-difference gradient of a scalar function at `x`, step `h`.
pub fn central_gradient(f: &mut impl FnMut(&Dense) -> f64, x: &Dense, h: f64) -> Dense {
    let mut grad = Dense::zeros(x.raw_dim());
    let mut probe = x.clone();
    for ix in 0..x.len() {
        let (r, c) = (ix / x.ncols(), ix % x.ncols());
        let orig = probe[[r, c]];
        probe[[r, c]] = orig + h;
        let up = f(&probe);
        probe[[r, c]] = orig - h;
        let down = f(&probe);
        probe[[r, c]] = orig;
        grad[[r, c]] = (up - down) / (2.0 * h);
    }
    grad
}

/// Largest elementwise relative error, with |a|,|b| ≤ 1 treated as
/// absolute error so near-zero gradients do not blow the ratio up.
pub fn max_rel_error(a: &Dense, b: &Dense) -> f64 {
    assert_eq!(a.dim(), b.dim(), "shape mismatch in max_rel_error");
    a.iter()
        .zip(b.iter())
        .map(|(&x, &y)| (x - y).abs() / x.abs().max(y.abs()).max(1.0))
        .fold(0.0, f64::max)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::dense;

    #[test]
    fn quadratic_gradient_recovered() {
        // f = Σ x², ∇f = 2x.
        let x = dense(&[&[1.0, -2.0], &[0.5, 3.0]]);
        let g = central_gradient(&mut |m| m.iter().map(|v| v * v).sum(), &x, 1e-6);
        let expected = x.mapv(|v| 2.0 * v);
        assert!(max_rel_error(&g, &expected) < 1e-8);
    }
}
