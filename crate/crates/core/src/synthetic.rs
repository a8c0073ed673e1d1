//! Procedural stand-ins for MNIST-style data, used for desk-scale runs
//! when no IDX files are at hand.
//!
//! `digits` renders ten stroke templates (seven-segment style plus two
//! diagonals) with per-sample jitter. `garments` renders filled blobs and
//! bars with a very different pixel distribution, playing the role of an
//! out-of-distribution evaluation set. Both emit integer pixels in
//! `[0, 255]` so they can be written as IDX files.

use ndarray::Array2;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::data::ImageDataset;

type Segment = ((f64, f64), (f64, f64));

/// Fraction of the image side covered by the glyph box; the rest is an
/// empty frame, as in MNIST (20 of 28 pixels).
const GLYPH_BOX: f64 = 20.0 / 28.0;

// Corner points of a digit box in unit coordinates (x right, y down).
const TL: (f64, f64) = (0.25, 0.15);
const TR: (f64, f64) = (0.75, 0.15);
const ML: (f64, f64) = (0.25, 0.5);
const MR: (f64, f64) = (0.75, 0.5);
const BL: (f64, f64) = (0.25, 0.85);
const BR: (f64, f64) = (0.75, 0.85);

fn template(class: u8) -> Vec<Segment> {
    let top = (TL, TR);
    let mid = (ML, MR);
    let bot = (BL, BR);
    let ul = (TL, ML);
    let ur = (TR, MR);
    let ll = (ML, BL);
    let lr = (MR, BR);
    match class {
        0 => vec![top, bot, ul, ur, ll, lr],
        1 => vec![((0.5, 0.15), (0.5, 0.85)), ((0.35, 0.3), (0.5, 0.15))],
        2 => vec![top, ur, mid, ll, bot],
        3 => vec![top, ur, mid, lr, bot],
        4 => vec![ul, mid, ur, lr],
        5 => vec![top, ul, mid, lr, bot],
        6 => vec![top, ul, ll, bot, lr, mid],
        7 => vec![top, (TR, (0.4, 0.85))],
        8 => vec![top, mid, bot, ul, ur, ll, lr],
        _ => vec![top, ul, ur, mid, lr, bot],
    }
}

fn dist_to_segment(p: (f64, f64), seg: Segment) -> f64 {
    let ((x0, y0), (x1, y1)) = seg;
    let (dx, dy) = (x1 - x0, y1 - y0);
    let len2 = dx * dx + dy * dy;
    let t = if len2 == 0.0 { 0.0 } else { (((p.0 - x0) * dx + (p.1 - y0) * dy) / len2).clamp(0.0, 1.0) };
    let (qx, qy) = (x0 + t * dx, y0 + t * dy);
    ((p.0 - qx).powi(2) + (p.1 - qy).powi(2)).sqrt()
}

/// `n` digit-like images of `side × side` pixels with labels `0..10`.
pub fn digits(n: usize, side: usize, seed: u64) -> ImageDataset {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let d = side * side;
    let mut images = Array2::zeros((n, d));
    let mut labels = Vec::with_capacity(n);
    for mut row in images.outer_iter_mut() {
        let class: u8 = rng.gen_range(0..10);
        labels.push(class);
        let segs = template(class);
        let (sx, sy) = (rng.gen_range(0.8..1.1), rng.gen_range(0.8..1.1));
        let (ox, oy) = (rng.gen_range(-0.1..0.1), rng.gen_range(-0.1..0.1));
        let shear = rng.gen_range(-0.2..0.2);
        let thick = rng.gen_range(0.07..0.13);
        let gain = rng.gen_range(0.75..1.0);
        for i in 0..side {
            for j in 0..side {
                // pixel centre in glyph-box coords, mapped back into template space
                let u = ((j as f64 + 0.5) / side as f64 - 0.5) / GLYPH_BOX + 0.5;
                let v = ((i as f64 + 0.5) / side as f64 - 0.5) / GLYPH_BOX + 0.5;
                let ty = (v - 0.5 - oy) / sy + 0.5;
                let tx = (u - 0.5 - ox - shear * (v - 0.5)) / sx + 0.5;
                let dist = segs.iter().map(|&s| dist_to_segment((tx, ty), s)).fold(f64::INFINITY, f64::min);
                let ink = (1.0 - (dist - thick).max(0.0) / thick).clamp(0.0, 1.0);
                let noise: f64 = rng.gen_range(0.0..12.0);
                row[i * side + j] = (255.0 * gain * ink + if ink > 0.0 { noise } else { 0.0 }).round().min(255.0);
            }
        }
    }
    ImageDataset::new(images, labels, side, side, "synthetic-digits").expect("shapes agree")
}

/// `n` garment-like images: filled ellipses, bars and trapezoids with
/// textured interiors. Labels `0..3` name the shape family.
pub fn garments(n: usize, side: usize, seed: u64) -> ImageDataset {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let d = side * side;
    let mut images = Array2::zeros((n, d));
    let mut labels = Vec::with_capacity(n);
    for mut row in images.outer_iter_mut() {
        let kind: u8 = rng.gen_range(0..3);
        labels.push(kind);
        let (cx, cy) = (rng.gen_range(0.4..0.6), rng.gen_range(0.4..0.6));
        let (rx, ry) = (rng.gen_range(0.25..0.48), rng.gen_range(0.25..0.48));
        let base = rng.gen_range(90.0..230.0);
        let stripe = rng.gen_range(0.0..60.0);
        for i in 0..side {
            for j in 0..side {
                let u = (j as f64 + 0.5) / side as f64;
                let v = (i as f64 + 0.5) / side as f64;
                let inside = match kind {
                    0 => ((u - cx) / rx).powi(2) + ((v - cy) / ry).powi(2) <= 1.0,
                    1 => (u - cx).abs() <= rx && (v - cy).abs() <= ry * 0.6,
                    _ => {
                        let half = rx * (0.5 + 0.5 * (v - (cy - ry)) / (2.0 * ry));
                        (v - cy).abs() <= ry && (u - cx).abs() <= half
                    }
                };
                if inside {
                    let texture = if (i + j) % 2 == 0 { stripe } else { 0.0 };
                    let jitter: f64 = rng.gen_range(0.0..20.0);
                    row[i * side + j] = (base + texture + jitter).round().min(255.0);
                }
            }
        }
    }
    ImageDataset::new(images, labels, side, side, "synthetic-garments").expect("shapes agree")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn generators_are_deterministic_and_byte_valued() {
        let a = digits(50, 8, 3);
        assert_eq!(a, digits(50, 8, 3));
        assert_ne!(a.images, digits(50, 8, 4).images);
        for ds in [a, garments(50, 8, 3)] {
            assert!(ds.images.iter().all(|&p| (0.0..=255.0).contains(&p) && p.fract() == 0.0));
            assert!(ds.images.iter().any(|&p| p > 100.0));
        }
    }

    #[test]
    fn all_digit_classes_appear() {
        let ds = digits(500, 8, 1);
        for c in 0..10u8 {
            assert!(ds.labels.contains(&c));
        }
    }
}
