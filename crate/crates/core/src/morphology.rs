//! Medial axis extraction: exact Euclidean distance transform followed by
//! distance-ordered, topology-preserving thinning, plus 3x3 neighbour-count
//! classification of the resulting skeleton pixels.

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;
use std::sync::OnceLock;

use serde::Serialize;
use thiserror::Error;

use crate::geom::{Pixel, NEIGHBOURS_CW};
use crate::mask::BinaryMask;

#[derive(Debug, Error)]
pub enum MorphologyError {
    #[error("empty mask")]
    EmptyMask,
    #[error("failed to write distance map: {0}")]
    Export(String),
}

/// One-pixel-wide skeleton with the distance transform value (distance to
/// the nearest background pixel centre) at each skeleton pixel.
#[derive(Debug, Clone, PartialEq)]
pub struct Skeleton {
    height: usize,
    width: usize,
    on: Vec<bool>,
    distance: Vec<f64>,
}

impl Skeleton {
    /// Assembles a skeleton from explicit pixels and distances.
    pub fn from_pixels(
        height: usize,
        width: usize,
        pixels: impl IntoIterator<Item = (Pixel, f64)>,
    ) -> Self {
        let mut on = vec![false; height * width];
        let mut distance = vec![0.0; height * width];
        for (p, d) in pixels {
            on[p.row * width + p.col] = true;
            distance[p.row * width + p.col] = d;
        }
        Self {
            height,
            width,
            on,
            distance,
        }
    }

    /// `(height, width)` of the source mask.
    pub fn parent_dims(&self) -> (usize, usize) {
        (self.height, self.width)
    }

    pub fn contains(&self, p: Pixel) -> bool {
        p.row < self.height && p.col < self.width && self.on[p.row * self.width + p.col]
    }

    /// Distance at a skeleton pixel; `None` off the skeleton.
    pub fn distance(&self, p: Pixel) -> Option<f64> {
        self.contains(p).then(|| self.distance[p.row * self.width + p.col])
    }

    /// Skeleton pixels in row-major order.
    pub fn pixels(&self) -> Vec<Pixel> {
        self.on
            .iter()
            .enumerate()
            .filter(|(_, &v)| v)
            .map(|(i, _)| Pixel::new(i / self.width, i % self.width))
            .collect()
    }

    pub fn len(&self) -> usize {
        self.on.iter().filter(|&&v| v).count()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Number of skeleton pixels among the 8 neighbours of `p`.
    pub fn neighbour_count(&self, p: Pixel) -> usize {
        NEIGHBOURS_CW
            .iter()
            .filter_map(|&(dr, dc)| p.offset(dr, dc, self.height, self.width))
            .filter(|&q| self.contains(q))
            .count()
    }

    /// Writes the skeleton as a 16-bit PGM holding `distance x 100`
    /// (saturating); background is 0.
    pub fn write_distance_pgm(&self, path: &Path) -> Result<(), MorphologyError> {
        let mut bytes = format!("P5\n{} {}\n65535\n", self.width, self.height).into_bytes();
        for i in 0..self.width * self.height {
            let v = if self.on[i] {
                (self.distance[i] * 100.0).round().min(u16::MAX as f64) as u16
            } else {
                0
            };
            bytes.extend_from_slice(&v.to_be_bytes());
        }
        std::fs::write(path, bytes).map_err(|e| MorphologyError::Export(e.to_string()))
    }
}

/// Exact Euclidean distance transform. Every foreground pixel receives the
/// distance to the nearest background pixel centre; pixels outside the frame
/// count as background.
pub fn distance_transform(mask: &BinaryMask) -> Vec<f64> {
    let (h, w) = (mask.height(), mask.width());
    // padded by one background pixel on every side
    let (ph, pw) = (h + 2, w + 2);
    // finite stand-in for infinity, small enough to keep q^2 terms exact
    let inf = (2 * (ph + pw) * (ph + pw)) as f64;
    let mut grid = vec![0.0f64; ph * pw];
    for r in 0..h {
        for c in 0..w {
            if mask.get(r, c) {
                grid[(r + 1) * pw + c + 1] = inf;
            }
        }
    }
    let mut f = vec![0.0; ph.max(pw)];
    let mut out = vec![0.0; ph.max(pw)];
    let mut v = vec![0usize; ph.max(pw)];
    let mut z = vec![0.0; ph.max(pw) + 1];
    for c in 0..pw {
        for r in 0..ph {
            f[r] = grid[r * pw + c];
        }
        squared_edt_1d(&f[..ph], &mut out[..ph], &mut v, &mut z);
        for r in 0..ph {
            grid[r * pw + c] = out[r];
        }
    }
    for r in 0..ph {
        f[..pw].copy_from_slice(&grid[r * pw..(r + 1) * pw]);
        squared_edt_1d(&f[..pw], &mut out[..pw], &mut v, &mut z);
        grid[r * pw..(r + 1) * pw].copy_from_slice(&out[..pw]);
    }
    let mut dist = vec![0.0; h * w];
    for r in 0..h {
        for c in 0..w {
            dist[r * w + c] = grid[(r + 1) * pw + c + 1].sqrt();
        }
    }
    dist
}

/// Lower envelope of parabolas (Felzenszwalb & Huttenlocher).
fn squared_edt_1d(f: &[f64], d: &mut [f64], v: &mut [usize], z: &mut [f64]) {
    let n = f.len();
    let intersect = |q: usize, p: usize| {
        ((f[q] + (q * q) as f64) - (f[p] + (p * p) as f64)) / (2.0 * (q as f64 - p as f64))
    };
    let mut k = 0usize;
    v[0] = 0;
    z[0] = f64::NEG_INFINITY;
    z[1] = f64::INFINITY;
    for q in 1..n {
        let mut s = intersect(q, v[k]);
        while s <= z[k] {
            k -= 1;
            s = intersect(q, v[k]);
        }
        k += 1;
        v[k] = q;
        z[k] = s;
        z[k + 1] = f64::INFINITY;
    }
    k = 0;
    for (q, dq) in d.iter_mut().enumerate().take(n) {
        while z[k + 1] < q as f64 {
            k += 1;
        }
        let diff = q as f64 - v[k] as f64;
        *dq = diff * diff + f[v[k]];
    }
}

/// Neighbourhood bit `k` is set when neighbour `NEIGHBOURS_CW[k]` is on.
/// A pixel is simple when its foreground neighbours form exactly one
/// 8-connected group and its background neighbours that 4-touch it form
/// exactly one 4-connected group.
fn simple_table() -> &'static [bool; 256] {
    static TABLE: OnceLock<[bool; 256]> = OnceLock::new();
    TABLE.get_or_init(|| {
        let mut table = [false; 256];
        for (bits, entry) in table.iter_mut().enumerate() {
            let fg = |k: usize| bits & (1 << k) != 0;
            let fg_groups = ring_groups(fg, |a, b| {
                let (pa, pb) = (NEIGHBOURS_CW[a], NEIGHBOURS_CW[b]);
                (pa.0 - pb.0).abs() <= 1 && (pa.1 - pb.1).abs() <= 1
            }, |_| true);
            let bg_groups = ring_groups(|k| !fg(k), |a, b| {
                let (pa, pb) = (NEIGHBOURS_CW[a], NEIGHBOURS_CW[b]);
                (pa.0 - pb.0).abs() + (pa.1 - pb.1).abs() == 1
            }, |k| k % 2 == 0);
            *entry = fg_groups == 1 && bg_groups == 1;
        }
        table
    })
}

/// Counts connected groups among ring positions selected by `member`,
/// counting only groups containing at least one position accepted by `anchor`.
fn ring_groups(
    member: impl Fn(usize) -> bool,
    adjacent: impl Fn(usize, usize) -> bool,
    anchor: impl Fn(usize) -> bool,
) -> usize {
    let mut seen = [false; 8];
    let mut groups = 0;
    for start in 0..8 {
        if !member(start) || seen[start] {
            continue;
        }
        seen[start] = true;
        let mut stack = vec![start];
        let mut anchored = false;
        while let Some(a) = stack.pop() {
            anchored |= anchor(a);
            for (b, s) in seen.iter_mut().enumerate() {
                if !*s && member(b) && adjacent(a, b) {
                    *s = true;
                    stack.push(b);
                }
            }
        }
        groups += anchored as usize;
    }
    groups
}

struct Padded {
    pw: usize,
    on: Vec<bool>,
}

impl Padded {
    fn bits(&self, i: usize) -> u8 {
        let pw = self.pw as isize;
        let mut bits = 0u8;
        for (k, &(dr, dc)) in NEIGHBOURS_CW.iter().enumerate() {
            let j = (i as isize + dr * pw + dc) as usize;
            if self.on[j] {
                bits |= 1 << k;
            }
        }
        bits
    }

    /// Index of the neighbour named by the lowest set bit of `bits`.
    fn neighbour_index(&self, i: usize, bits: u8) -> Option<usize> {
        let k = (bits != 0).then(|| bits.trailing_zeros() as usize)?;
        let (dr, dc) = NEIGHBOURS_CW[k];
        Some((i as isize + dr * self.pw as isize + dc) as usize)
    }
}

/// Medial axis transform of a single-component mask.
///
/// Foreground pixels are visited in order of increasing distance and removed
/// whenever removal preserves topology. A curve end is kept only when it is
/// the centre of a maximal disc and was not merely exposed, within its own
/// distance level, as the rim of a deeper pixel. This keeps the result
/// independent of the visiting order among equal distances. Passes
/// repeat until stable; any surviving 2x2 blocks are then thinned.
pub fn medial_axis_transform(mask: &BinaryMask) -> Result<Skeleton, MorphologyError> {
    let (h, w) = (mask.height(), mask.width());
    let distance = distance_transform(mask);
    let squared: Vec<i64> = distance.iter().map(|d| (d * d).round() as i64).collect();
    let pw = w + 2;
    let mut padded = Padded {
        pw,
        on: vec![false; (h + 2) * pw],
    };
    let mut order = Vec::new();
    for r in 0..h {
        for c in 0..w {
            if mask.get(r, c) {
                let pi = (r + 1) * pw + c + 1;
                padded.on[pi] = true;
                order.push((r * w + c, pi));
            }
        }
    }
    if order.is_empty() {
        return Err(MorphologyError::EmptyMask);
    }
    order.sort_by(|a, b| squared[a.0].cmp(&squared[b.0]).then(a.0.cmp(&b.0)));

    let table = simple_table();
    let discs = DiscTest { squared: &squared, height: h, width: w };
    let mut was_end = Vec::new();
    loop {
        let mut changed = false;
        for level in order.chunk_by(|a, b| squared[a.0] == squared[b.0]) {
            was_end.clear();
            was_end.extend(level.iter().map(|&(_, pi)| padded.bits(pi).count_ones() <= 1));
            for (&(i, pi), &end_at_start) in level.iter().zip(&was_end) {
                if !padded.on[pi] {
                    continue;
                }
                let bits = padded.bits(pi);
                if !table[bits as usize] {
                    continue;
                }
                if bits.count_ones() == 1 && discs.is_maximal(i) {
                    // an end exposed within this level only survives if it is
                    // not just the rim of something deeper
                    let deeper = padded.neighbour_index(pi, bits).is_some_and(|qi| {
                        let (r, c) = (qi / pw - 1, qi % pw - 1);
                        squared[r * w + c] > squared[i]
                    });
                    if end_at_start || !deeper {
                        continue;
                    }
                }
                padded.on[pi] = false;
                changed = true;
            }
        }
        if !changed {
            break;
        }
    }
    remove_blocks(&mut padded, &order, table);

    let mut on = vec![false; h * w];
    for &(i, pi) in &order {
        on[i] = padded.on[pi];
    }
    Ok(Skeleton {
        height: h,
        width: w,
        on,
        distance,
    })
}

/// Discrete maximal-disc test over the squared distance map. The disc at a
/// pixel is the set of pixel centres strictly closer than its distance value.
struct DiscTest<'a> {
    squared: &'a [i64],
    height: usize,
    width: usize,
}

impl DiscTest<'_> {
    /// True when no 8-neighbour's disc contains this pixel's disc.
    fn is_maximal(&self, i: usize) -> bool {
        let p = Pixel::new(i / self.width, i % self.width);
        let dp = self.squared[i];
        for &(dr, dc) in &NEIGHBOURS_CW {
            let Some(q) = p.offset(dr, dc, self.height, self.width) else {
                continue;
            };
            let dq = self.squared[q.row * self.width + q.col];
            if dq <= dp {
                continue;
            }
            let step = ((dr * dr + dc * dc) as f64).sqrt();
            let covers = {
                let outer = (dp as f64).sqrt() + step;
                dq as f64 >= outer * outer || self.contains_disc(dp, dq, -(dr as i64), -(dc as i64))
            };
            if covers {
                return false;
            }
        }
        true
    }

    /// Exact check that every offset `v` with |v|^2 < dp satisfies
    /// |v + (p - q)|^2 < dq.
    fn contains_disc(&self, dp: i64, dq: i64, oy: i64, ox: i64) -> bool {
        let r = (dp as f64).sqrt().ceil() as i64;
        for vy in -r..=r {
            for vx in -r..=r {
                if vy * vy + vx * vx < dp {
                    let (y, x) = (vy + oy, vx + ox);
                    if y * y + x * x >= dq {
                        return false;
                    }
                }
            }
        }
        true
    }
}

fn remove_blocks(padded: &mut Padded, order: &[(usize, usize)], table: &[bool; 256]) {
    let pw = padded.pw;
    loop {
        let mut changed = false;
        for &(_, pi) in order {
            if !padded.on[pi] {
                continue;
            }
            let block = [pi, pi + 1, pi + pw, pi + pw + 1];
            if block.iter().all(|&j| padded.on[j]) {
                if let Some(&j) = block.iter().find(|&&j| table[padded.bits(j) as usize]) {
                    padded.on[j] = false;
                    changed = true;
                }
            }
        }
        if !changed {
            break;
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum PixelKind {
    /// No skeleton neighbours: the whole skeleton is this one pixel.
    Isolated,
    EndPoint,
    BodyPoint,
    TJunction,
    Block,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct PixelClass {
    pub kind: PixelKind,
    pub neighbour_count: u8,
}

impl PixelClass {
    pub fn from_count(count: usize) -> Self {
        let kind = match count {
            0 => PixelKind::Isolated,
            1 => PixelKind::EndPoint,
            2 => PixelKind::BodyPoint,
            3 => PixelKind::TJunction,
            _ => PixelKind::Block,
        };
        Self {
            kind,
            neighbour_count: count as u8,
        }
    }

    pub fn is_intersection(&self) -> bool {
        matches!(self.kind, PixelKind::TJunction | PixelKind::Block)
    }
}

/// Per-pixel classes of a skeleton.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct PixelClasses {
    classes: BTreeMap<Pixel, PixelClass>,
}

impl PixelClasses {
    pub fn get(&self, p: Pixel) -> Option<PixelClass> {
        self.classes.get(&p).copied()
    }

    pub fn iter(&self) -> impl Iterator<Item = (Pixel, PixelClass)> + '_ {
        self.classes.iter().map(|(&p, &c)| (p, c))
    }

    pub fn len(&self) -> usize {
        self.classes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.classes.is_empty()
    }

    /// T-junction and block pixels.
    pub fn intersections(&self) -> BTreeSet<Pixel> {
        self.iter()
            .filter(|(_, c)| c.is_intersection())
            .map(|(p, _)| p)
            .collect()
    }

    pub fn endpoints(&self) -> BTreeSet<Pixel> {
        self.iter()
            .filter(|(_, c)| c.kind == PixelKind::EndPoint)
            .map(|(p, _)| p)
            .collect()
    }
}

/// 3x3 neighbour-count classification of every skeleton pixel.
pub fn classify_pixels(skeleton: &Skeleton) -> PixelClasses {
    PixelClasses {
        classes: skeleton
            .pixels()
            .into_iter()
            .map(|p| (p, PixelClass::from_count(skeleton.neighbour_count(p))))
            .collect(),
    }
}
