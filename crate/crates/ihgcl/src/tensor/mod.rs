//! Dense matrices, row masks, and the reverse-mode gradient tape.
//!
//! Everything numeric in this crate is 64-bit: the model is small enough
//! that determinism and finite-difference fidelity are worth more than
//! memory. [`Dense`] is a row-major `ndarray` matrix; [`tape::Tape`]
//! records the forward pass and replays it backwards for gradients.

pub mod fd;
mod mask;
pub mod tape;

pub use mask::{sample_mask, RowMask};
pub use tape::{Gradients, Tape, Var};

/// Row-major dense matrix of finite 64-bit reals.
pub type Dense = ndarray::Array2<f64>;

/// Zero matrix of the given shape.
pub fn zeros(rows: usize, cols: usize) -> Dense {
    Dense::zeros((rows, cols))
}

/// Build a matrix from nested rows; panics on ragged input.
pub fn dense(rows: &[&[f64]]) -> Dense {
    let r = rows.len();
    let c = rows.first().map_or(0, |row| row.len());
    let mut out = zeros(r, c);
    for (i, row) in rows.iter().enumerate() {
        assert_eq!(row.len(), c, "ragged row {i}");
        for (j, &v) in row.iter().enumerate() {
            out[[i, j]] = v;
        }
    }
    out
}

/// Largest absolute elementwise difference between two equal-shape matrices.
pub fn max_abs_diff(a: &Dense, b: &Dense) -> f64 {
    assert_eq!(a.dim(), b.dim(), "shape mismatch in max_abs_diff");
    a.iter()
        .zip(b.iter())
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn dense_builder_round_trips() {
        let m = dense(&[&[1.0, 2.0], &[3.0, 4.0]]);
        assert_eq!(m[[0, 1]], 2.0);
        assert_eq!(m[[1, 0]], 3.0);
        assert_eq!(m.dim(), (2, 2));
    }

    #[test]
    #[should_panic(expected = "ragged")]
    fn dense_builder_rejects_ragged_rows() {
        dense(&[&[1.0, 2.0], &[3.0]]);
    }
}
