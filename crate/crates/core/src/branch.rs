//! Splitting a skeleton into junction-free branches and ordering each one
//! into a polyline with per-pixel widths.

use std::collections::{BTreeSet, HashSet, VecDeque};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geom::{Pixel, NEIGHBOURS_CW};
use crate::morphology::Skeleton;

#[derive(Debug, Error, PartialEq)]
pub enum BranchError {
    #[error("skeleton has no pixels outside intersections")]
    Degenerate,
    #[error("unsectioned branch: pixel {0:?} has more than two neighbours in its branch")]
    Unsectioned(Pixel),
    #[error("branch pixels are not a single connected curve")]
    Disconnected,
    #[error("empty branch pixel set")]
    Empty,
    #[error("no skeleton distance for pixel {0:?}")]
    MissingDistance(Pixel),
}

/// An unordered set of branch pixels as produced by labelling.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BranchPixels {
    pub label: u32,
    pub pixels: BTreeSet<Pixel>,
}

/// An ordered branch polyline. `widths_px[i]` is the local width at
/// `pixels[i]`, twice the skeleton distance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Branch {
    pub label: u32,
    pub pixels: Vec<Pixel>,
    pub widths_px: Vec<f64>,
}

impl Branch {
    pub fn length_px(&self) -> usize {
        self.pixels.len()
    }

    pub fn first(&self) -> Pixel {
        self.pixels[0]
    }

    pub fn last(&self) -> Pixel {
        self.pixels[self.pixels.len() - 1]
    }

    pub fn endpoints(&self) -> (Pixel, Pixel) {
        (self.first(), self.last())
    }

    pub fn mean_width(&self) -> f64 {
        self.widths_px.iter().sum::<f64>() / self.widths_px.len() as f64
    }

    pub fn max_width(&self) -> f64 {
        self.widths_px.iter().copied().fold(0.0, f64::max)
    }

    /// The same branch traversed in the opposite direction.
    pub fn reversed(&self) -> Branch {
        let mut b = self.clone();
        b.pixels.reverse();
        b.widths_px.reverse();
        b
    }

    /// True when consecutive pixels are 8-adjacent and no pixel repeats.
    pub fn is_well_ordered(&self) -> bool {
        let unique: HashSet<_> = self.pixels.iter().collect();
        unique.len() == self.pixels.len() && self.pixels.windows(2).all(|w| w[0].is_adjacent(w[1]))
    }
}

/// Labels the 8-connected components of `skeleton \ intersections`, numbered
/// 1..n in raster order of their first pixel.
pub fn section_branches(
    skeleton: &Skeleton,
    intersections: &BTreeSet<Pixel>,
) -> Result<Vec<BranchPixels>, BranchError> {
    let (h, w) = skeleton.parent_dims();
    let member = |p: Pixel| skeleton.contains(p) && !intersections.contains(&p);
    let mut seen: HashSet<Pixel> = HashSet::new();
    let mut out = Vec::new();
    for start in skeleton.pixels() {
        if !member(start) || seen.contains(&start) {
            continue;
        }
        let mut pixels = BTreeSet::new();
        let mut queue = VecDeque::from([start]);
        seen.insert(start);
        while let Some(p) = queue.pop_front() {
            pixels.insert(p);
            for &(dr, dc) in &NEIGHBOURS_CW {
                if let Some(q) = p.offset(dr, dc, h, w) {
                    if member(q) && seen.insert(q) {
                        queue.push_back(q);
                    }
                }
            }
        }
        out.push(BranchPixels {
            label: out.len() as u32 + 1,
            pixels,
        });
    }
    if out.is_empty() {
        return Err(BranchError::Degenerate);
    }
    Ok(out)
}

fn in_set_neighbours(set: &BTreeSet<Pixel>, p: Pixel) -> usize {
    NEIGHBOURS_CW
        .iter()
        .filter_map(|&(dr, dc)| p.offset(dr, dc, usize::MAX, usize::MAX))
        .filter(|q| set.contains(q))
        .count()
}

fn direction_index(from: Pixel, to: Pixel) -> usize {
    let dr = to.row as isize - from.row as isize;
    let dc = to.col as isize - from.col as isize;
    NEIGHBOURS_CW.iter().position(|&d| d == (dr, dc)).expect("pixels are adjacent")
}

/// Orders a one-pixel-wide curve by Moore-neighbour tracing.
///
/// Open curves start at their smallest `(row, col)` endpoint; the trace walks
/// out and back and is cut when the start pixel is reached again. Closed
/// loops start at their topmost-leftmost pixel and run clockwise.
pub fn order_branch_pixels(pixels: &BTreeSet<Pixel>) -> Result<Vec<Pixel>, BranchError> {
    let mut counts = Vec::with_capacity(pixels.len());
    for &p in pixels {
        let n = in_set_neighbours(pixels, p);
        if n > 2 {
            return Err(BranchError::Unsectioned(p));
        }
        counts.push((p, n));
    }
    let Some(&(first, _)) = counts.first() else {
        return Err(BranchError::Empty);
    };
    let start = counts.iter().find(|&&(_, n)| n <= 1).map_or(first, |&(p, _)| p);

    // pretend we arrived from the west so the first scan begins at north-west
    let mut back = 6usize;
    let mut current = start;
    let mut trace = vec![start];
    for _ in 0..2 * pixels.len() + 2 {
        let next = (1..=8).map(|k| (back + k) % 8).find_map(|d| {
            let (dr, dc) = NEIGHBOURS_CW[d];
            current
                .offset(dr, dc, usize::MAX, usize::MAX)
                .filter(|q| pixels.contains(q))
        });
        let Some(next) = next else { break };
        back = direction_index(next, current);
        current = next;
        if current == start {
            break;
        }
        trace.push(current);
    }

    let mut seen = HashSet::with_capacity(trace.len());
    trace.retain(|p| seen.insert(*p));
    if trace.len() != pixels.len() {
        return Err(BranchError::Disconnected);
    }
    Ok(trace)
}

/// Pairs an ordered pixel list with widths read from the skeleton.
pub fn attach_widths(label: u32, pixels: Vec<Pixel>, skeleton: &Skeleton) -> Result<Branch, BranchError> {
    if pixels.is_empty() {
        return Err(BranchError::Empty);
    }
    let widths_px = pixels
        .iter()
        .map(|&p| skeleton.distance(p).map(|d| 2.0 * d).ok_or(BranchError::MissingDistance(p)))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(Branch {
        label,
        pixels,
        widths_px,
    })
}

/// Orders every section and attaches widths, in parallel; output follows
/// label order.
pub fn build_branches(skeleton: &Skeleton, sections: &[BranchPixels]) -> Result<Vec<Branch>, BranchError> {
    sections
        .par_iter()
        .map(|s| attach_widths(s.label, order_branch_pixels(&s.pixels)?, skeleton))
        .collect()
}
