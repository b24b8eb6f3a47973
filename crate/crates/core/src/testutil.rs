//! Shared fixtures for unit tests.

use rand::{Rng, SeedableRng};

use crate::mask::{keep_largest_component, BinaryMask};

/// Union of a few random discs on a 48x48 canvas, reduced to its largest
/// component.
pub fn random_blob_mask(seed: u64) -> BinaryMask {
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let discs: Vec<(f64, f64, f64)> = (0..rng.random_range(2..6))
        .map(|_| (rng.random_range(8.0..40.0), rng.random_range(8.0..40.0), rng.random_range(2.0..9.0)))
        .collect();
    let m = BinaryMask::from_fn(48, 48, |r, c| {
        discs.iter().any(|&(cr, cc, rad)| {
            let (dr, dc) = (r as f64 - cr, c as f64 - cc);
            dr * dr + dc * dc <= rad * rad
        })
    })
    .unwrap();
    keep_largest_component(&m).unwrap()
}
