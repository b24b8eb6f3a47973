//! Pixel coordinates and small raster helpers shared by every stage.

use serde::{Deserialize, Serialize};

/// A raster coordinate, origin top-left. Serialized as `[row, col]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(from = "[usize; 2]", into = "[usize; 2]")]
pub struct Pixel {
    pub row: usize,
    pub col: usize,
}

impl Pixel {
    pub const fn new(row: usize, col: usize) -> Self {
        Self { row, col }
    }

    /// Chebyshev (chessboard) distance.
    pub fn chebyshev(self, other: Pixel) -> usize {
        self.row.abs_diff(other.row).max(self.col.abs_diff(other.col))
    }

    /// True when the two pixels touch under 8-connectivity (and are distinct).
    pub fn is_adjacent(self, other: Pixel) -> bool {
        self.chebyshev(other) == 1
    }

    /// Offset by `(dr, dc)`, returning `None` when the result leaves the
    /// `height x width` frame.
    pub fn offset(self, dr: isize, dc: isize, height: usize, width: usize) -> Option<Pixel> {
        let r = self.row.checked_add_signed(dr)?;
        let c = self.col.checked_add_signed(dc)?;
        (r < height && c < width).then_some(Pixel::new(r, c))
    }
}

impl From<[usize; 2]> for Pixel {
    fn from([row, col]: [usize; 2]) -> Self {
        Pixel::new(row, col)
    }
}

impl From<Pixel> for [usize; 2] {
    fn from(p: Pixel) -> Self {
        [p.row, p.col]
    }
}

impl From<(usize, usize)> for Pixel {
    fn from((row, col): (usize, usize)) -> Self {
        Pixel::new(row, col)
    }
}

/// The eight neighbour offsets in clockwise order (image coordinates, y down),
/// starting at north.
pub const NEIGHBOURS_CW: [(isize, isize); 8] = [
    (-1, 0),
    (-1, 1),
    (0, 1),
    (1, 1),
    (1, 0),
    (1, -1),
    (0, -1),
    (-1, -1),
];

/// Converts a row index to the upward-pointing y coordinate used for angles
/// and monotonicity: `y = (height - 1) - row`.
pub fn math_y(row: usize, height: usize) -> f64 {
    (height as f64 - 1.0) - row as f64
}

/// Centered moving average with a window that shrinks at the ends of the
/// series, so the output has the input's length and no zero-padding bias.
pub fn moving_average(values: &[f64], window: usize) -> Vec<f64> {
    let n = values.len();
    let half = window / 2;
    let mut prefix = Vec::with_capacity(n + 1);
    prefix.push(0.0);
    for v in values {
        prefix.push(prefix.last().unwrap() + v);
    }
    (0..n)
        .map(|i| {
            let lo = i.saturating_sub(half);
            let hi = (i + half + 1).min(n);
            (prefix[hi] - prefix[lo]) / (hi - lo) as f64
        })
        .collect()
}
