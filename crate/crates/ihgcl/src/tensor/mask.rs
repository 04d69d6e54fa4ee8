//! Row masks for the masked-autoencoder views.

use rand::Rng;

/// A fixed-size subset of row indices selected for masking.
///
/// The subset always has exactly `round_ties_even(ratio · size)` elements,
/// drawn uniformly without replacement, so two draws with the same seed are
/// identical and the masked count never wobbles between steps.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RowMask {
    size: usize,
    masked: Vec<u32>,
    member: Vec<bool>,
}

impl RowMask {
    /// Mask covering no rows.
    pub fn none(size: usize) -> Self {
        RowMask {
            size,
            masked: Vec::new(),
            member: vec![false; size],
        }
    }

    /// Total number of rows the mask is defined over.
    pub fn size(&self) -> usize {
        self.size
    }

    /// Masked row indices, ascending.
    pub fn masked_rows(&self) -> &[u32] {
        &self.masked
    }

    pub fn len(&self) -> usize {
        self.masked.len()
    }

    pub fn is_empty(&self) -> bool {
        self.masked.is_empty()
    }

    pub fn contains(&self, row: usize) -> bool {
        self.member[row]
    }
}

/// Draw a uniform mask of exactly `round_ties_even(ratio · size)` rows.
///
/// `ratio` must lie in `[0, 1]`; 0 masks nothing and 1 masks every row.
pub fn sample_mask(size: usize, ratio: f64, rng: &mut impl Rng) -> RowMask {
    assert!(
        (0.0..=1.0).contains(&ratio),
        "mask ratio {ratio} outside [0, 1]"
    );
    let count = (ratio * size as f64).round_ties_even() as usize;

    // Partial Fisher-Yates: after `count` swaps the prefix is a uniform
    // sample without replacement.
    let mut pool: Vec<u32> = (0..size as u32).collect();
    for i in 0..count {
        let j = rng.gen_range(i..size);
        pool.swap(i, j);
    }
    let mut masked: Vec<u32> = pool[..count].to_vec();
    masked.sort_unstable();

    let mut member = vec![false; size];
    for &row in &masked {
        member[row as usize] = true;
    }
    RowMask {
        size,
        masked,
        member,
    }
}
