//! One-hidden-layer perceptron with the asymmetric activation
//! `g(z) = softplus(z) + sigmoid(4z)`.
//!
//! Parameters are stored row-major:
//!
//! - `w`: `r × d` hidden input weights
//! - `b`: `r` hidden biases
//! - `a`: `c × r` output weights (column `i` is the outgoing vector of hidden neuron `i`)
//! - `c_out`: `c` output biases
//!
//! All arithmetic is `f64`. Matrix products go through `ndarray`, which is
//! single-threaded and therefore bitwise reproducible run to run.

use std::io::{Cursor, Read, Write};
use std::path::Path;

use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};
use ndarray::{Array1, Array2, ArrayView2, Axis, Zip};
use rand::distributions::{Distribution, Uniform};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{shape_err, Error, Result};
use crate::io_util::write_atomic;

/// Above this magnitude softplus switches to its asymptotic branch.
const SOFTPLUS_BRANCH: f64 = 30.0;

const MODEL_MAGIC: &[u8; 8] = b"ECMODEL\0";
const MODEL_VERSION: u32 = 1;

#[inline]
pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

#[inline]
pub fn softplus(z: f64) -> f64 {
    if z > SOFTPLUS_BRANCH {
        z + (-z).exp().ln_1p()
    } else {
        z.exp().ln_1p()
    }
}

/// `g(z) = softplus(z) + sigmoid(4z)`.
#[inline]
pub fn activation(z: f64) -> f64 {
    activation_with_slope(z).0
}

/// `g'(z) = sigmoid(z) + 4·sigmoid(4z)·(1 − sigmoid(4z))`.
#[inline]
pub fn activation_prime(z: f64) -> f64 {
    activation_with_slope(z).1
}

/// `(g(z), g'(z))` from a single exponential: with `e = exp(-|z|)`,
/// `softplus(z) = max(z, 0) + ln(1 + e)` and `exp(-4|z|) = e⁴`.
#[inline]
pub fn activation_with_slope(z: f64) -> (f64, f64) {
    let e = (-z.abs()).exp();
    let e4 = (e * e) * (e * e);
    let (p, q) = (1.0 + e, 1.0 + e4);
    let inv = 1.0 / (p * q);
    let (inv_p, inv_q) = (q * inv, p * inv);
    let (s1, s4) = if z >= 0.0 { (inv_p, inv_q) } else { (e * inv_p, e4 * inv_q) };
    let g = z.max(0.0) + e.ln_1p() + s4;
    let slope = s1 + 4.0 * e4 * inv_q * inv_q;
    (g, slope)
}

pub fn activation_array(z: &Array2<f64>) -> Array2<f64> {
    z.mapv(activation)
}

pub fn activation_prime_array(z: &Array2<f64>) -> Array2<f64> {
    z.mapv(activation_prime)
}

/// Weight initialisation schemes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum InitScheme {
    /// `U[-s, s]` with `s = sqrt(1 / fan_in)` per layer, zero biases.
    #[default]
    UniformFanIn,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Mlp {
    pub w: Array2<f64>,
    pub b: Array1<f64>,
    pub a: Array2<f64>,
    pub c_out: Array1<f64>,
}

/// Intermediate values of a batched forward pass.
#[derive(Debug, Clone)]
pub struct ForwardTrace {
    /// `batch × r` pre-activations `x·wᵢ + bᵢ`.
    pub pre: Array2<f64>,
    /// `batch × r` hidden activations `g(pre)`.
    pub hidden: Array2<f64>,
    /// `batch × r` activation slopes `g'(pre)`.
    pub slope: Array2<f64>,
    /// `batch × c` logits.
    pub out: Array2<f64>,
}

/// Gradient blocks, shaped like the corresponding [`Mlp`] fields.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub w: Array2<f64>,
    pub b: Array1<f64>,
    pub a: Array2<f64>,
    pub c_out: Array1<f64>,
}

impl Gradients {
    pub fn zeros_like(net: &Mlp) -> Self {
        Self {
            w: Array2::zeros(net.w.raw_dim()),
            b: Array1::zeros(net.b.raw_dim()),
            a: Array2::zeros(net.a.raw_dim()),
            c_out: Array1::zeros(net.c_out.raw_dim()),
        }
    }

    pub fn slices(&self) -> [&[f64]; 4] {
        [
            self.w.as_slice().expect("standard layout"),
            self.b.as_slice().expect("standard layout"),
            self.a.as_slice().expect("standard layout"),
            self.c_out.as_slice().expect("standard layout"),
        ]
    }

    pub fn max_abs(&self) -> f64 {
        self.slices()
            .iter()
            .flat_map(|s| s.iter())
            .fold(0.0_f64, |m, v| m.max(v.abs()))
    }
}

impl Mlp {
    pub fn new(w: Array2<f64>, b: Array1<f64>, a: Array2<f64>, c_out: Array1<f64>) -> Result<Self> {
        let (r, _d) = w.dim();
        let (c, r_a) = a.dim();
        if b.len() != r {
            return Err(shape_err(format!("bias length {} != hidden width {r}", b.len())));
        }
        if r_a != r {
            return Err(shape_err(format!("output weights have {r_a} columns, expected {r}")));
        }
        if c_out.len() != c {
            return Err(shape_err(format!("output bias length {} != output dim {c}", c_out.len())));
        }
        // as_standard_layout keeps slices() valid for views built from transposes.
        Ok(Self {
            w: w.as_standard_layout().into_owned(),
            b,
            a: a.as_standard_layout().into_owned(),
            c_out,
        })
    }

    pub fn zeros(r: usize, d: usize, c: usize) -> Self {
        Self {
            w: Array2::zeros((r, d)),
            b: Array1::zeros(r),
            a: Array2::zeros((c, r)),
            c_out: Array1::zeros(c),
        }
    }

    /// Random initialisation, deterministic under `seed`.
    pub fn init(r: usize, d: usize, c: usize, scheme: InitScheme, seed: u64) -> Result<Self> {
        if r == 0 || d == 0 || c == 0 {
            return Err(Error::Argument(format!("dimensions must be >= 1 (r={r}, d={d}, c={c})")));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        match scheme {
            InitScheme::UniformFanIn => {
                let s_in = (1.0 / d as f64).sqrt();
                let s_out = (1.0 / r as f64).sqrt();
                let u_in = Uniform::new_inclusive(-s_in, s_in);
                let u_out = Uniform::new_inclusive(-s_out, s_out);
                let w = Array2::from_shape_simple_fn((r, d), || u_in.sample(&mut rng));
                let a = Array2::from_shape_simple_fn((c, r), || u_out.sample(&mut rng));
                Ok(Self { w, b: Array1::zeros(r), a, c_out: Array1::zeros(c) })
            }
        }
    }

    pub fn hidden_width(&self) -> usize {
        self.w.nrows()
    }

    pub fn input_dim(&self) -> usize {
        self.w.ncols()
    }

    pub fn output_dim(&self) -> usize {
        self.a.nrows()
    }

    pub fn param_count(&self) -> usize {
        self.w.len() + self.b.len() + self.a.len() + self.c_out.len()
    }

    pub fn is_finite(&self) -> bool {
        self.slices().iter().all(|s| s.iter().all(|v| v.is_finite()))
    }

    pub fn slices(&self) -> [&[f64]; 4] {
        [
            self.w.as_slice().expect("standard layout"),
            self.b.as_slice().expect("standard layout"),
            self.a.as_slice().expect("standard layout"),
            self.c_out.as_slice().expect("standard layout"),
        ]
    }

    pub fn slices_mut(&mut self) -> [&mut [f64]; 4] {
        [
            self.w.as_slice_mut().expect("standard layout"),
            self.b.as_slice_mut().expect("standard layout"),
            self.a.as_slice_mut().expect("standard layout"),
            self.c_out.as_slice_mut().expect("standard layout"),
        ]
    }

    fn check_input(&self, x: &ArrayView2<f64>) -> Result<()> {
        if x.ncols() != self.input_dim() {
            return Err(shape_err(format!(
                "input has {} columns, network expects {}",
                x.ncols(),
                self.input_dim()
            )));
        }
        Ok(())
    }

    /// Pre-activations `X·Wᵀ + b`, shape `batch × r`.
    pub fn preactivations(&self, x: ArrayView2<f64>) -> Result<Array2<f64>> {
        self.check_input(&x)?;
        let mut pre = x.dot(&self.w.t());
        pre += &self.b;
        Ok(pre)
    }

    pub fn forward(&self, x: ArrayView2<f64>) -> Result<ForwardTrace> {
        let pre = self.preactivations(x)?;
        let mut hidden = Array2::zeros(pre.raw_dim());
        let mut slope = Array2::zeros(pre.raw_dim());
        Zip::from(&mut hidden).and(&mut slope).and(&pre).for_each(|h, s, &z| (*h, *s) = activation_with_slope(z));
        let mut out = hidden.dot(&self.a.t());
        out += &self.c_out;
        Ok(ForwardTrace { pre, hidden, slope, out })
    }

    /// Logits only.
    pub fn predict(&self, x: ArrayView2<f64>) -> Result<Array2<f64>> {
        let hidden = self.preactivations(x)?.mapv_into(activation);
        let mut out = hidden.dot(&self.a.t());
        out += &self.c_out;
        Ok(out)
    }

    /// Back-propagates an output gradient `∂L/∂out` through a recorded trace.
    pub fn backward_from_output(
        &self,
        x: ArrayView2<f64>,
        trace: &ForwardTrace,
        d_out: &Array2<f64>,
    ) -> Gradients {
        let d_a = d_out.t().dot(&trace.hidden);
        let d_c = d_out.sum_axis(Axis(0));
        let mut d_pre = d_out.dot(&self.a);
        d_pre *= &trace.slope;
        let d_w = d_pre.t().dot(&x);
        let d_b = d_pre.sum_axis(Axis(0));
        Gradients {
            w: d_w.as_standard_layout().into_owned(),
            b: d_b,
            a: d_a.as_standard_layout().into_owned(),
            c_out: d_c,
        }
    }

    /// Imitation loss `(1/Q) Σᵢ ‖out(xᵢ) − yᵢ‖²` and its exact gradient.
    pub fn backward_mse(&self, x: ArrayView2<f64>, y: ArrayView2<f64>) -> Result<(Gradients, f64)> {
        let trace = self.forward(x)?;
        if y.dim() != trace.out.dim() {
            return Err(shape_err(format!(
                "targets are {:?}, logits are {:?}",
                y.dim(),
                trace.out.dim()
            )));
        }
        let q = x.nrows().max(1) as f64;
        let diff = &trace.out - &y;
        let loss = diff.iter().map(|e| e * e).sum::<f64>() / q;
        let d_out = diff * (2.0 / q);
        Ok((self.backward_from_output(x, &trace, &d_out), loss))
    }

    /// Imitation loss against `y` without gradients.
    pub fn mse(&self, x: ArrayView2<f64>, y: ArrayView2<f64>) -> Result<f64> {
        let out = self.predict(x)?;
        if y.dim() != out.dim() {
            return Err(shape_err(format!("targets are {:?}, logits are {:?}", y.dim(), out.dim())));
        }
        let q = x.nrows().max(1) as f64;
        Ok(Zip::from(&out).and(&y).fold(0.0, |acc, o, t| acc + (o - t) * (o - t)) / q)
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut buf = Vec::with_capacity(48 + 8 * self.param_count());
        buf.extend_from_slice(MODEL_MAGIC);
        buf.write_u32::<LittleEndian>(MODEL_VERSION).unwrap();
        for dim in [self.hidden_width(), self.input_dim(), self.output_dim()] {
            buf.write_u64::<LittleEndian>(dim as u64).unwrap();
        }
        for block in self.slices() {
            for v in block {
                buf.write_f64::<LittleEndian>(*v).unwrap();
            }
        }
        let crc = crc32fast::hash(&buf);
        buf.write_u32::<LittleEndian>(crc).unwrap();
        buf
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < MODEL_MAGIC.len() + 4 + 24 + 4 {
            return Err(Error::Format("model file too short".into()));
        }
        let (body, tail) = bytes.split_at(bytes.len() - 4);
        let mut cur = Cursor::new(body);
        let mut magic = [0u8; 8];
        cur.read_exact(&mut magic)?;
        if &magic != MODEL_MAGIC {
            return Err(Error::Format("bad model magic".into()));
        }
        let version = cur.read_u32::<LittleEndian>()?;
        if version != MODEL_VERSION {
            return Err(Error::Format(format!("unsupported model version {version}")));
        }
        let r = cur.read_u64::<LittleEndian>()? as usize;
        let d = cur.read_u64::<LittleEndian>()? as usize;
        let c = cur.read_u64::<LittleEndian>()? as usize;
        let n_params = r
            .checked_mul(d)
            .and_then(|rd| rd.checked_add(r))
            .and_then(|p| c.checked_mul(r).and_then(|cr| p.checked_add(cr)))
            .and_then(|p| p.checked_add(c))
            .ok_or_else(|| Error::Format("model dims overflow".into()))?;
        let remaining = body.len() - cur.position() as usize;
        if remaining != 8 * n_params {
            return Err(Error::Format(format!(
                "payload holds {remaining} bytes, dims r={r} d={d} c={c} need {}",
                8 * n_params
            )));
        }
        let stored = u32::from_le_bytes(tail.try_into().unwrap());
        if crc32fast::hash(body) != stored {
            return Err(Error::Format("model checksum mismatch".into()));
        }
        let mut net = Mlp::zeros(r, d, c);
        for block in net.slices_mut() {
            cur.read_f64_into::<LittleEndian>(block)?;
        }
        Ok(net)
    }

    /// Writes the model atomically.
    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        write_atomic(path.as_ref(), &self.to_bytes())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let bytes = std::fs::read(path)?;
        Self::from_bytes(&bytes)
    }

    /// Writes the model to an arbitrary sink (no atomicity).
    pub fn write_to(&self, mut sink: impl Write) -> Result<()> {
        sink.write_all(&self.to_bytes())?;
        Ok(())
    }
}
