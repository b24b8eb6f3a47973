//! Annotated PNG of a run: mask or photo, skeleton, windows and the perch.

use std::path::Path;

use image::imageops::{self, FilterType};
use image::{Rgb, RgbImage};
use thiserror::Error;

use crate::geom::Pixel;
use crate::pipeline::PipelineOutput;

pub const BACKGROUND: Rgb<u8> = Rgb([0, 0, 0]);
pub const FOREGROUND: Rgb<u8> = Rgb([90, 90, 90]);
pub const SKELETON: Rgb<u8> = Rgb([255, 255, 255]);
pub const VIABLE_WINDOW: Rgb<u8> = Rgb([0, 200, 0]);
pub const FAILED_WINDOW: Rgb<u8> = Rgb([220, 0, 0]);
/// Never produced by anything but the marker: photo backgrounds are dimmed
/// so no channel reaches 255.
pub const MARKER: Rgb<u8> = Rgb([255, 0, 255]);

const PHOTO_DIM: f32 = 0.6;

#[derive(Debug, Error)]
pub enum OverlayError {
    #[error("could not write overlay {path}: {source}")]
    Write { path: String, source: image::ImageError },
}

/// Half side of the square marker.
fn marker_radius(out: &PipelineOutput) -> usize {
    (out.window.window_px / 8).clamp(2, 12)
}

fn paint(img: &mut RgbImage, p: Pixel, colour: Rgb<u8>) {
    if (p.col as u32) < img.width() && (p.row as u32) < img.height() {
        img.put_pixel(p.col as u32, p.row as u32, colour);
    }
}

/// Draws the overlay. `photo`, when given, is resized to the mask and dimmed
/// as the background; otherwise the mask is drawn in grey. Failing windows
/// are shown only when `verbose` is set.
pub fn render_overlay(out: &PipelineOutput, photo: Option<&RgbImage>, verbose: bool) -> RgbImage {
    let (w, h) = (out.mask.width() as u32, out.mask.height() as u32);
    let mut img = match photo {
        Some(p) => {
            let mut bg = imageops::resize(p, w, h, FilterType::Nearest);
            for px in bg.pixels_mut() {
                for c in px.0.iter_mut() {
                    *c = (*c as f32 * PHOTO_DIM) as u8;
                }
            }
            bg
        }
        None => RgbImage::from_fn(w, h, |x, y| {
            if out.mask.get(y as usize, x as usize) {
                FOREGROUND
            } else {
                BACKGROUND
            }
        }),
    };

    if let Some(s) = &out.skeleton {
        for p in s.pixels() {
            paint(&mut img, p, SKELETON);
        }
    }

    if let Some(g) = &out.graph {
        let window_pixels = |w: &crate::pipeline::AssessedWindow| {
            g.edges
                .get(&w.profile.branch_label)
                .map(|e| &e.branch.pixels[w.profile.start_index..=w.profile.end_index])
                .unwrap_or(&[])
        };
        if verbose {
            for w in out.windows.iter().filter(|w| !w.verdict.passes()) {
                for &p in window_pixels(w) {
                    paint(&mut img, p, FAILED_WINDOW);
                }
            }
        }
        for w in out.windows.iter().filter(|w| w.verdict.passes()) {
            for &p in window_pixels(w) {
                paint(&mut img, p, VIABLE_WINDOW);
            }
        }
    }

    if let Some(m) = out.result.midpoint_px {
        let r = marker_radius(out);
        for row in m.row.saturating_sub(r)..=m.row + r {
            for col in m.col.saturating_sub(r)..=m.col + r {
                paint(&mut img, Pixel::new(row, col), MARKER);
            }
        }
    }
    img
}

pub fn write_overlay(img: &RgbImage, path: &Path) -> Result<(), OverlayError> {
    img.save(path).map_err(|source| OverlayError::Write {
        path: path.display().to_string(),
        source,
    })
}

/// Number of 8-connected blobs of `colour`.
pub fn count_blobs(img: &RgbImage, colour: Rgb<u8>) -> usize {
    let (w, h) = (img.width() as usize, img.height() as usize);
    let mut seen = vec![false; w * h];
    let mut blobs = 0;
    for start in 0..w * h {
        if seen[start] || img.get_pixel((start % w) as u32, (start / w) as u32) != &colour {
            continue;
        }
        blobs += 1;
        seen[start] = true;
        let mut stack = vec![start];
        while let Some(i) = stack.pop() {
            let p = Pixel::new(i / w, i % w);
            for dr in -1..=1 {
                for dc in -1..=1 {
                    if let Some(q) = p.offset(dr, dc, h, w) {
                        let j = q.row * w + q.col;
                        if !seen[j] && img.get_pixel(q.col as u32, q.row as u32) == &colour {
                            seen[j] = true;
                            stack.push(j);
                        }
                    }
                }
            }
        }
    }
    blobs
}
