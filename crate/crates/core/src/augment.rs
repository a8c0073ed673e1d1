//! Query-input construction from a base image set.
//!
//! Every strategy keeps a fixed row layout so that cardinalities are exact
//! and every row's randomness can be re-derived from `(seed, row index)`:
//!
//! | strategy                          | rows                                      |
//! |-----------------------------------|-------------------------------------------|
//! | identity                          | originals                                 |
//! | random rotations (`copies`)       | originals, then `copies` rotated blocks   |
//! | horizontal/vertical flips         | originals, h-flipped, v-flipped           |
//! | uniform noise (`copies`)          | originals, then `copies` noisy blocks     |
//! | biased noise `u`                  | originals, `+U[0,u]`, `−U[0,u]`           |
//! | grid composition                  | `count` composed images                   |
//! | grid composition + biased noise   | composed, composed `+U[0,u]`, `−U[0,u]`   |
//!
//! Noise is added in standardised units and never clipped.

use std::fmt;

use ndarray::{Array2, ArrayView1, ArrayViewMut1};
use rand::distributions::{Distribution, Uniform};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::data::ImageDataset;
use crate::error::{Error, Result};

/// Strategy plus parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "strategy", rename_all = "snake_case", deny_unknown_fields)]
pub enum AugmentationKind {
    Identity,
    RandomRotations { copies: usize },
    HvFlips,
    UniformNoise { lo: f64, hi: f64, copies: usize },
    BiasedNoise { magnitude: f64 },
    GridComposition { grid_x: usize, grid_y: usize, count: usize },
    GridCompositionBiasedNoise { grid_x: usize, grid_y: usize, count: usize, magnitude: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AugmentationSpec {
    #[serde(flatten)]
    pub kind: AugmentationKind,
    #[serde(default)]
    pub seed: u64,
}

impl fmt::Display for AugmentationSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        use AugmentationKind::*;
        match &self.kind {
            Identity => write!(f, "identity")?,
            RandomRotations { copies } => write!(f, "random_rotations(copies={copies})")?,
            HvFlips => write!(f, "hv_flips")?,
            UniformNoise { lo, hi, copies } => write!(f, "uniform_noise(lo={lo},hi={hi},copies={copies})")?,
            BiasedNoise { magnitude } => write!(f, "biased_noise(u={magnitude})")?,
            GridComposition { grid_x, grid_y, count } => {
                write!(f, "grid_composition({grid_x}x{grid_y},count={count})")?
            }
            GridCompositionBiasedNoise { grid_x, grid_y, count, magnitude } => {
                write!(f, "grid_composition_biased_noise({grid_x}x{grid_y},count={count},u={magnitude})")?
            }
        }
        write!(f, "[seed={}]", self.seed)
    }
}

impl AugmentationSpec {
    pub fn new(kind: AugmentationKind, seed: u64) -> Self {
        Self { kind, seed }
    }

    /// Checks parameter invariants against an image geometry.
    pub fn validate(&self, height: usize, width: usize) -> Result<()> {
        use AugmentationKind::*;
        let arg = |m: String| Err(Error::Argument(m));
        match self.kind {
            RandomRotations { copies } | UniformNoise { copies, .. } if copies == 0 => {
                return arg("copies must be >= 1".into())
            }
            _ => {}
        }
        match self.kind {
            UniformNoise { lo, hi, .. } if !(lo < hi) => arg(format!("uniform noise needs lo < hi (got {lo}, {hi})")),
            BiasedNoise { magnitude } | GridCompositionBiasedNoise { magnitude, .. } if !(magnitude > 0.0) => {
                arg(format!("noise magnitude must be > 0 (got {magnitude})"))
            }
            GridComposition { grid_x, grid_y, count } | GridCompositionBiasedNoise { grid_x, grid_y, count, .. } => {
                if count == 0 {
                    arg("grid count must be >= 1".into())
                } else if grid_x == 0 || grid_y == 0 || grid_x > width || grid_y > height {
                    arg(format!("grid {grid_x}x{grid_y} does not fit {height}x{width} images"))
                } else {
                    Ok(())
                }
            }
            _ => Ok(()),
        }
    }

    /// Number of rows this spec produces from `n` base images.
    pub fn output_len(&self, n: usize) -> usize {
        use AugmentationKind::*;
        match self.kind {
            Identity => n,
            RandomRotations { copies } | UniformNoise { copies, .. } => (copies + 1) * n,
            HvFlips | BiasedNoise { .. } => 3 * n,
            GridComposition { count, .. } => count,
            GridCompositionBiasedNoise { count, .. } => 3 * count,
        }
    }

    /// Builds the query inputs. `fill` is the background value used for
    /// pixels rotated in from outside the frame.
    pub fn apply(&self, ds: &ImageDataset, fill: f64) -> Result<AugmentedSet> {
        use AugmentationKind::*;
        self.validate(ds.height, ds.width)?;
        let seed = self.seed;
        let mut out = match self.kind {
            Identity => identity(ds),
            RandomRotations { copies } => random_rotations(ds, copies, seed, fill)?,
            HvFlips => hv_flips(ds),
            UniformNoise { lo, hi, copies } => uniform_noise(ds, lo, hi, copies, seed)?,
            BiasedNoise { magnitude } => biased_noise(ds, magnitude, seed)?,
            GridComposition { grid_x, grid_y, count } => grid_composition(ds, grid_x, grid_y, count, seed)?,
            GridCompositionBiasedNoise { grid_x, grid_y, count, magnitude } => {
                grid_composition_biased_noise(ds, grid_x, grid_y, count, magnitude, seed)?
            }
        };
        out.spec = self.clone();
        Ok(out)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AugmentedSet {
    /// `Q × d` query inputs.
    pub inputs: Array2<f64>,
    /// Base-image indices each row was built from.
    pub source_indices: Vec<Vec<usize>>,
    pub spec: AugmentationSpec,
}

impl AugmentedSet {
    pub fn len(&self) -> usize {
        self.inputs.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Independent stream per output row; rows can be generated in any order.
fn row_rng(seed: u64, row: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(row as u64);
    rng
}

/// Splits `len` pixels into `k` contiguous bands; the first `len % k` bands
/// are one pixel longer. Returns `(start, size)` pairs.
pub fn bands(len: usize, k: usize) -> Vec<(usize, usize)> {
    let (base, extra) = (len / k, len % k);
    let mut start = 0;
    (0..k)
        .map(|i| {
            let size = base + usize::from(i < extra);
            let band = (start, size);
            start += size;
            band
        })
        .collect()
}

/// Allocates the output with the originals in the first block.
fn with_originals(ds: &ImageDataset, blocks: usize) -> (Array2<f64>, Vec<Vec<usize>>) {
    let n = ds.len();
    let mut inputs = Array2::zeros((blocks * n, ds.dim()));
    let mut sources = Vec::with_capacity(blocks * n);
    for b in 0..blocks {
        for i in 0..n {
            inputs.row_mut(b * n + i).assign(&ds.images.row(i));
            sources.push(vec![i]);
        }
    }
    (inputs, sources)
}

fn placeholder_spec(kind: AugmentationKind, seed: u64) -> AugmentationSpec {
    AugmentationSpec { kind, seed }
}

pub fn identity(ds: &ImageDataset) -> AugmentedSet {
    AugmentedSet {
        inputs: ds.images.clone(),
        source_indices: (0..ds.len()).map(|i| vec![i]).collect(),
        spec: placeholder_spec(AugmentationKind::Identity, 0),
    }
}

/// Rotates a `height × width` image by `angle_rad` about its centre with
/// bilinear interpolation; samples outside the frame read `fill`.
pub fn rotate_image(src: ArrayView1<f64>, height: usize, width: usize, angle_rad: f64, fill: f64, mut dst: ArrayViewMut1<f64>) {
    let (sin, cos) = angle_rad.sin_cos();
    let cx = (width as f64 - 1.0) / 2.0;
    let cy = (height as f64 - 1.0) / 2.0;
    let at = |y: isize, x: isize| -> f64 {
        if y < 0 || x < 0 || y >= height as isize || x >= width as isize {
            fill
        } else {
            src[y as usize * width + x as usize]
        }
    };
    for i in 0..height {
        for j in 0..width {
            let dx = j as f64 - cx;
            let dy = i as f64 - cy;
            // inverse rotation: where does this output pixel come from
            let sx = cos * dx + sin * dy + cx;
            let sy = -sin * dx + cos * dy + cy;
            let (x0, y0) = (sx.floor(), sy.floor());
            let (fx, fy) = (sx - x0, sy - y0);
            let (x0, y0) = (x0 as isize, y0 as isize);
            let top = at(y0, x0) * (1.0 - fx) + if fx > 0.0 { at(y0, x0 + 1) * fx } else { 0.0 };
            let v = if fy > 0.0 {
                let bottom = at(y0 + 1, x0) * (1.0 - fx) + if fx > 0.0 { at(y0 + 1, x0 + 1) * fx } else { 0.0 };
                top * (1.0 - fy) + bottom * fy
            } else {
                top
            };
            dst[i * width + j] = v;
        }
    }
}

pub fn random_rotations(ds: &ImageDataset, copies: usize, seed: u64, fill: f64) -> Result<AugmentedSet> {
    if copies == 0 {
        return Err(Error::Argument("copies must be >= 1".into()));
    }
    let n = ds.len();
    let (mut inputs, sources) = with_originals(ds, copies + 1);
    for row in n..(copies + 1) * n {
        let angle = row_rng(seed, row).gen_range(0.0..std::f64::consts::TAU);
        let src = ds.images.row(row % n);
        rotate_image(src, ds.height, ds.width, angle, fill, inputs.row_mut(row));
    }
    Ok(AugmentedSet { inputs, source_indices: sources, spec: placeholder_spec(AugmentationKind::RandomRotations { copies }, seed) })
}

/// Mirrors left-right in place.
pub fn flip_horizontal(mut img: ArrayViewMut1<f64>, height: usize, width: usize) {
    for i in 0..height {
        for j in 0..width / 2 {
            img.swap(i * width + j, i * width + width - 1 - j);
        }
    }
}

/// Mirrors top-bottom in place.
pub fn flip_vertical(mut img: ArrayViewMut1<f64>, height: usize, width: usize) {
    for i in 0..height / 2 {
        for j in 0..width {
            img.swap(i * width + j, (height - 1 - i) * width + j);
        }
    }
}

pub fn hv_flips(ds: &ImageDataset) -> AugmentedSet {
    let n = ds.len();
    let (mut inputs, sources) = with_originals(ds, 3);
    for i in 0..n {
        flip_horizontal(inputs.row_mut(n + i), ds.height, ds.width);
        flip_vertical(inputs.row_mut(2 * n + i), ds.height, ds.width);
    }
    AugmentedSet { inputs, source_indices: sources, spec: placeholder_spec(AugmentationKind::HvFlips, 0) }
}

fn add_noise(mut row: ArrayViewMut1<f64>, lo: f64, hi: f64, rng: &mut ChaCha8Rng) {
    let dist = Uniform::new(lo, hi);
    for p in row.iter_mut() {
        *p += dist.sample(rng);
    }
}

pub fn uniform_noise(ds: &ImageDataset, lo: f64, hi: f64, copies: usize, seed: u64) -> Result<AugmentedSet> {
    let spec = placeholder_spec(AugmentationKind::UniformNoise { lo, hi, copies }, seed);
    spec.validate(ds.height, ds.width)?;
    let n = ds.len();
    let (mut inputs, sources) = with_originals(ds, copies + 1);
    for row in n..(copies + 1) * n {
        add_noise(inputs.row_mut(row), lo, hi, &mut row_rng(seed, row));
    }
    Ok(AugmentedSet { inputs, source_indices: sources, spec })
}

/// Appends `+U[0,u]` and `−U[0,u]` copies of the first `n` rows; the
/// output must already hold three copies of those rows.
fn biased_blocks(inputs: &mut Array2<f64>, n: usize, u: f64, seed: u64) {
    for i in 0..n {
        let pos = n + i;
        add_noise(inputs.row_mut(pos), 0.0, u, &mut row_rng(seed, pos));
        let neg = 2 * n + i;
        add_noise(inputs.row_mut(neg), -u, 0.0, &mut row_rng(seed, neg));
    }
}

pub fn biased_noise(ds: &ImageDataset, u: f64, seed: u64) -> Result<AugmentedSet> {
    let spec = placeholder_spec(AugmentationKind::BiasedNoise { magnitude: u }, seed);
    spec.validate(ds.height, ds.width)?;
    let n = ds.len();
    let (mut inputs, sources) = with_originals(ds, 3);
    biased_blocks(&mut inputs, n, u, seed);
    Ok(AugmentedSet { inputs, source_indices: sources, spec })
}

/// Assembles one image whose cell `(band_y, band_x)` is copied from the same
/// region of `sources[band_y * grid_x + band_x]`.
pub fn compose_grid(ds: &ImageDataset, grid_x: usize, grid_y: usize, sources: &[usize], mut dst: ArrayViewMut1<f64>) {
    debug_assert_eq!(sources.len(), grid_x * grid_y);
    let w = ds.width;
    for (cy, &(y0, hy)) in bands(ds.height, grid_y).iter().enumerate() {
        for (cx, &(x0, wx)) in bands(w, grid_x).iter().enumerate() {
            let src = ds.images.row(sources[cy * grid_x + cx]);
            for i in y0..y0 + hy {
                for j in x0..x0 + wx {
                    dst[i * w + j] = src[i * w + j];
                }
            }
        }
    }
}

pub fn grid_composition(ds: &ImageDataset, grid_x: usize, grid_y: usize, count: usize, seed: u64) -> Result<AugmentedSet> {
    let spec = placeholder_spec(AugmentationKind::GridComposition { grid_x, grid_y, count }, seed);
    spec.validate(ds.height, ds.width)?;
    if ds.is_empty() {
        return Err(Error::Argument("grid composition needs at least one base image".into()));
    }
    let cells = grid_x * grid_y;
    let mut inputs = Array2::zeros((count, ds.dim()));
    let mut source_indices = Vec::with_capacity(count);
    for t in 0..count {
        let mut rng = row_rng(seed, t);
        let sources: Vec<usize> = (0..cells).map(|_| rng.gen_range(0..ds.len())).collect();
        compose_grid(ds, grid_x, grid_y, &sources, inputs.row_mut(t));
        source_indices.push(sources);
    }
    Ok(AugmentedSet { inputs, source_indices, spec })
}

pub fn grid_composition_biased_noise(
    ds: &ImageDataset,
    grid_x: usize,
    grid_y: usize,
    count: usize,
    u: f64,
    seed: u64,
) -> Result<AugmentedSet> {
    let spec = placeholder_spec(AugmentationKind::GridCompositionBiasedNoise { grid_x, grid_y, count, magnitude: u }, seed);
    spec.validate(ds.height, ds.width)?;
    let grid = grid_composition(ds, grid_x, grid_y, count, seed)?;
    let mut inputs = Array2::zeros((3 * count, ds.dim()));
    let mut source_indices = Vec::with_capacity(3 * count);
    for b in 0..3 {
        for t in 0..count {
            inputs.row_mut(b * count + t).assign(&grid.inputs.row(t));
            source_indices.push(grid.source_indices[t].clone());
        }
    }
    biased_blocks(&mut inputs, count, u, seed);
    Ok(AugmentedSet { inputs, source_indices, spec })
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::Array1;

    fn ramp(n: usize, h: usize, w: usize) -> ImageDataset {
        let images = Array2::from_shape_fn((n, h * w), |(r, p)| (r * 100 + p) as f64 * 0.01 - 1.0);
        ImageDataset::new(images, vec![0; n], h, w, "ramp").unwrap()
    }

    #[test]
    fn band_split() {
        assert_eq!(bands(28, 3), vec![(0, 10), (10, 9), (19, 9)]);
        assert_eq!(bands(8, 3), vec![(0, 3), (3, 3), (6, 2)]);
        assert_eq!(bands(5, 1), vec![(0, 5)]);
    }

    #[test]
    fn identity_is_exact() {
        let ds = ramp(4, 3, 3);
        let out = identity(&ds);
        assert_eq!(out.inputs, ds.images);
        let empty = ImageDataset::new(Array2::zeros((0, 9)), vec![], 3, 3, "e").unwrap();
        assert!(identity(&empty).is_empty());
    }

    #[test]
    fn zero_rotation_is_identity() {
        let ds = ramp(1, 6, 5);
        let mut dst = Array1::zeros(30);
        rotate_image(ds.images.row(0), 6, 5, 0.0, -9.0, dst.view_mut());
        for (a, b) in dst.iter().zip(ds.images.row(0)) {
            assert!((a - b).abs() < 1e-9);
        }
    }

    #[test]
    fn rotation_preserves_centre_pixel() {
        let mut img = Array1::zeros(25);
        img[12] = 5.0;
        let mut dst = Array1::zeros(25);
        for k in 0..36 {
            let angle = k as f64 * 0.1745;
            rotate_image(img.view(), 5, 5, angle, 0.0, dst.view_mut());
            assert!((dst[12] - 5.0).abs() < 1e-6, "angle {angle}: {}", dst[12]);
        }
    }

    #[test]
    fn flips_are_involutions() {
        let ds = ramp(1, 4, 5);
        let mut img = ds.images.row(0).to_owned();
        flip_horizontal(img.view_mut(), 4, 5);
        assert_ne!(img, ds.images.row(0));
        flip_horizontal(img.view_mut(), 4, 5);
        assert_eq!(img, ds.images.row(0));
        flip_vertical(img.view_mut(), 4, 5);
        flip_vertical(img.view_mut(), 4, 5);
        assert_eq!(img, ds.images.row(0));

        // left-right symmetric image
        let sym = Array1::from_vec(vec![1.0, 2.0, 1.0, 3.0, 4.0, 3.0]);
        let mut f = sym.clone();
        flip_horizontal(f.view_mut(), 2, 3);
        assert_eq!(f, sym);
    }

    #[test]
    fn vanishing_uniform_noise() {
        let ds = ramp(3, 2, 2);
        let out = uniform_noise(&ds, -1e-12, 1e-12, 2, 4).unwrap();
        for r in 0..out.len() {
            for (a, b) in out.inputs.row(r).iter().zip(ds.images.row(r % 3)) {
                assert!((a - b).abs() < 1e-11);
            }
        }
    }

    #[test]
    fn uniform_noise_mean_is_centered() {
        let ds = ImageDataset::new(Array2::zeros((1000, 100)), vec![0; 1000], 10, 10, "z").unwrap();
        let out = uniform_noise(&ds, -1.0, 1.0, 1, 8).unwrap();
        let block = out.inputs.slice(ndarray::s![1000.., ..]);
        let mean = block.sum() / block.len() as f64;
        assert!(mean.abs() < 0.02, "{mean}");
        assert!(block.iter().all(|v| (-1.0..=1.0).contains(v)));
    }

    #[test]
    fn biased_noise_support() {
        let ds = ramp(5, 3, 3);
        for u in [0.5, 1.0, 2.0] {
            let out = biased_noise(&ds, u, 1).unwrap();
            assert_eq!(out.len(), 15);
            for i in 0..5 {
                for p in 0..9 {
                    let base = ds.images[[i, p]];
                    let up = out.inputs[[5 + i, p]] - base;
                    let down = out.inputs[[10 + i, p]] - base;
                    assert!((0.0..=u).contains(&up));
                    assert!((-u..=0.0).contains(&down));
                }
            }
        }
        assert!(biased_noise(&ds, 0.0, 1).is_err());
    }

    #[test]
    fn grid_one_by_one_copies_a_base_image() {
        let ds = ramp(4, 3, 3);
        let out = grid_composition(&ds, 1, 1, 10, 2).unwrap();
        for (row, src) in out.inputs.outer_iter().zip(&out.source_indices) {
            assert_eq!(row, ds.images.row(src[0]));
        }
    }

    #[test]
    fn spec_validation() {
        let bad = AugmentationSpec::new(AugmentationKind::UniformNoise { lo: 1.0, hi: 1.0, copies: 1 }, 0);
        assert!(bad.validate(3, 3).is_err());
        let bad = AugmentationSpec::new(AugmentationKind::GridComposition { grid_x: 4, grid_y: 1, count: 1 }, 0);
        assert!(bad.validate(3, 3).is_err());
        let bad = AugmentationSpec::new(AugmentationKind::RandomRotations { copies: 0 }, 0);
        assert!(bad.validate(3, 3).is_err());
        let ok = AugmentationSpec::new(AugmentationKind::GridCompositionBiasedNoise { grid_x: 3, grid_y: 3, count: 1, magnitude: 1.0 }, 0);
        assert!(ok.validate(28, 28).is_ok());
    }
}
