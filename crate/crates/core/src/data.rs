//! Image datasets in IDX format, global standardisation, seeded subsets and
//! the query-set container.
//!
//! Query-set file layout (all integers little-endian):
//!
//! | offset | size      | field                          |
//! |--------|-----------|--------------------------------|
//! | 0      | 8         | magic `ECQUERY\0`              |
//! | 8      | 4         | version (`1`)                  |
//! | 12     | 8         | `Q` rows                       |
//! | 20     | 8         | `d` input columns              |
//! | 28     | 8         | `c` target columns             |
//! | 36     | 8         | provenance length `p` in bytes |
//! | 44     | p         | provenance, UTF-8              |
//! | 44+p   | 8·Q·d     | inputs, f64 row-major          |
//! | ...    | 8·Q·c     | targets, f64 row-major         |
//! | end-4  | 4         | CRC-32 of all preceding bytes  |

use std::io::{Cursor, Read};
use std::path::Path;

use byteorder::{BigEndian, LittleEndian, ReadBytesExt, WriteBytesExt};
use ndarray::{s, Array2, Axis};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::io_util::write_atomic;

pub const IDX_IMAGES_MAGIC: u32 = 0x0000_0803;
pub const IDX_LABELS_MAGIC: u32 = 0x0000_0801;

const QUERY_MAGIC: &[u8; 8] = b"ECQUERY\0";
const QUERY_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct ImageDataset {
    /// `n_samples × (height·width)`, row-major pixels.
    pub images: Array2<f64>,
    pub labels: Vec<u8>,
    pub height: usize,
    pub width: usize,
    pub name: String,
}

/// Global pixel statistics used to standardise a dataset.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct Standardization {
    pub mean: f64,
    pub std: f64,
}

impl Standardization {
    pub fn apply(&self, ds: &ImageDataset) -> ImageDataset {
        let mut out = ds.clone();
        out.images.mapv_inplace(|p| (p - self.mean) / self.std);
        out
    }

    /// Standardised value of a raw zero pixel.
    pub fn background(&self) -> f64 {
        -self.mean / self.std
    }
}

impl ImageDataset {
    pub fn new(images: Array2<f64>, labels: Vec<u8>, height: usize, width: usize, name: impl Into<String>) -> Result<Self> {
        if images.ncols() != height * width {
            return Err(Error::Shape(format!(
                "{} pixel columns but {height}x{width} images",
                images.ncols()
            )));
        }
        if labels.len() != images.nrows() {
            return Err(Error::Consistency(format!(
                "{} labels for {} images",
                labels.len(),
                images.nrows()
            )));
        }
        Ok(Self { images, labels, height, width, name: name.into() })
    }

    pub fn len(&self) -> usize {
        self.images.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn dim(&self) -> usize {
        self.height * self.width
    }

    pub fn n_classes(&self) -> usize {
        self.labels.iter().copied().max().map_or(0, |m| m as usize + 1)
    }

    /// Rows selected by index, in the given order.
    pub fn select(&self, indices: &[usize]) -> ImageDataset {
        ImageDataset {
            images: self.images.select(Axis(0), indices),
            labels: indices.iter().map(|&i| self.labels[i]).collect(),
            height: self.height,
            width: self.width,
            name: self.name.clone(),
        }
    }

    /// Average-pools each image over `factor × factor` blocks. Trailing
    /// rows/columns that do not fill a block are dropped.
    pub fn downsample(&self, factor: usize) -> Result<ImageDataset> {
        if factor == 0 || factor > self.height || factor > self.width {
            return Err(Error::Argument(format!("downsample factor {factor} invalid for {}x{}", self.height, self.width)));
        }
        if factor == 1 {
            return Ok(self.clone());
        }
        let (h, w) = (self.height / factor, self.width / factor);
        let norm = (factor * factor) as f64;
        let mut out = Array2::zeros((self.len(), h * w));
        for (src, mut dst) in self.images.outer_iter().zip(out.outer_iter_mut()) {
            for i in 0..h {
                for j in 0..w {
                    let mut acc = 0.0;
                    for di in 0..factor {
                        for dj in 0..factor {
                            acc += src[(i * factor + di) * self.width + j * factor + dj];
                        }
                    }
                    dst[i * w + j] = acc / norm;
                }
            }
        }
        ImageDataset::new(out, self.labels.clone(), h, w, self.name.clone())
    }
}

fn read_header(cur: &mut Cursor<&[u8]>, expected: u32, what: &str) -> Result<()> {
    let magic = cur.read_u32::<BigEndian>()?;
    if magic != expected {
        return Err(Error::Format(format!("{what}: magic {magic:#010x}, expected {expected:#010x}")));
    }
    Ok(())
}

/// Reads an IDX image/label file pair. Pixels stay in `[0, 255]`.
pub fn load_idx(images_path: impl AsRef<Path>, labels_path: impl AsRef<Path>) -> Result<ImageDataset> {
    let images_path = images_path.as_ref();
    let img_bytes = std::fs::read(images_path)?;
    let lbl_bytes = std::fs::read(labels_path.as_ref())?;

    let mut cur = Cursor::new(img_bytes.as_slice());
    read_header(&mut cur, IDX_IMAGES_MAGIC, "images")?;
    let n = cur.read_u32::<BigEndian>()? as usize;
    let rows = cur.read_u32::<BigEndian>()? as usize;
    let cols = cur.read_u32::<BigEndian>()? as usize;

    let mut lcur = Cursor::new(lbl_bytes.as_slice());
    read_header(&mut lcur, IDX_LABELS_MAGIC, "labels")?;
    let n_labels = lcur.read_u32::<BigEndian>()? as usize;
    if n_labels != n {
        return Err(Error::Consistency(format!("images header has {n} samples, labels header has {n_labels}")));
    }

    let d = rows * cols;
    let mut pixels = vec![0u8; n * d];
    cur.read_exact(&mut pixels)?;
    let mut labels = vec![0u8; n];
    lcur.read_exact(&mut labels)?;

    let images = Array2::from_shape_vec((n, d), pixels.into_iter().map(f64::from).collect())
        .expect("length checked by read_exact");
    let name = images_path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    ImageDataset::new(images, labels, rows, cols, name)
}

/// Writes a raw dataset as an IDX pair. Every pixel must be an integer in `[0, 255]`.
pub fn write_idx(ds: &ImageDataset, images_path: impl AsRef<Path>, labels_path: impl AsRef<Path>) -> Result<()> {
    let mut img = Vec::with_capacity(16 + ds.images.len());
    img.write_u32::<BigEndian>(IDX_IMAGES_MAGIC)?;
    img.write_u32::<BigEndian>(ds.len() as u32)?;
    img.write_u32::<BigEndian>(ds.height as u32)?;
    img.write_u32::<BigEndian>(ds.width as u32)?;
    for &p in ds.images.iter() {
        if !(0.0..=255.0).contains(&p) || p.fract() != 0.0 {
            return Err(Error::Argument(format!("pixel {p} is not a byte value")));
        }
        img.push(p as u8);
    }
    let mut lbl = Vec::with_capacity(8 + ds.len());
    lbl.write_u32::<BigEndian>(IDX_LABELS_MAGIC)?;
    lbl.write_u32::<BigEndian>(ds.len() as u32)?;
    lbl.extend_from_slice(&ds.labels);
    write_atomic(images_path.as_ref(), &img)?;
    write_atomic(labels_path.as_ref(), &lbl)
}

/// Global mean and population standard deviation over every pixel.
pub fn pixel_moments(ds: &ImageDataset) -> (f64, f64) {
    let n = ds.images.len() as f64;
    if n == 0.0 {
        return (f64::NAN, f64::NAN);
    }
    let mean = ds.images.iter().sum::<f64>() / n;
    let var = ds.images.iter().map(|p| (p - mean) * (p - mean)).sum::<f64>() / n;
    (mean, var.sqrt())
}

/// Shifts and scales all pixels by one global mean and std.
pub fn standardize(raw: &ImageDataset) -> Result<(ImageDataset, Standardization)> {
    let (mean, std) = pixel_moments(raw);
    if !(std > 0.0) || !std.is_finite() {
        return Err(Error::DegenerateData(format!("pixel std is {std}")));
    }
    let stats = Standardization { mean, std };
    Ok((stats.apply(raw), stats))
}

/// `k` rows sampled without replacement, deterministic under `seed`.
pub fn subset(ds: &ImageDataset, k: usize, seed: u64) -> Result<ImageDataset> {
    if k == 0 || k > ds.len() {
        return Err(Error::Argument(format!("subset size {k} outside 1..={}", ds.len())));
    }
    let mut idx: Vec<usize> = (0..ds.len()).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    idx.shuffle(&mut rng);
    idx.truncate(k);
    Ok(ds.select(&idx))
}

/// Query inputs paired with the teacher's logits.
#[derive(Debug, Clone, PartialEq)]
pub struct QuerySet {
    pub inputs: Array2<f64>,
    pub targets: Array2<f64>,
    pub provenance: String,
}

impl QuerySet {
    pub fn new(inputs: Array2<f64>, targets: Array2<f64>, provenance: impl Into<String>) -> Result<Self> {
        if inputs.nrows() != targets.nrows() {
            return Err(Error::Shape(format!("{} inputs vs {} targets", inputs.nrows(), targets.nrows())));
        }
        Ok(Self { inputs, targets, provenance: provenance.into() })
    }

    pub fn len(&self) -> usize {
        self.inputs.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Rows `start..end` as a new set.
    pub fn slice_rows(&self, start: usize, end: usize) -> QuerySet {
        QuerySet {
            inputs: self.inputs.slice(s![start..end, ..]).to_owned(),
            targets: self.targets.slice(s![start..end, ..]).to_owned(),
            provenance: self.provenance.clone(),
        }
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let (q, d) = self.inputs.dim();
        let c = self.targets.ncols();
        let prov = self.provenance.as_bytes();
        let mut buf = Vec::with_capacity(48 + prov.len() + 8 * q * (d + c));
        buf.extend_from_slice(QUERY_MAGIC);
        buf.write_u32::<LittleEndian>(QUERY_VERSION).unwrap();
        for v in [q, d, c, prov.len()] {
            buf.write_u64::<LittleEndian>(v as u64).unwrap();
        }
        buf.extend_from_slice(prov);
        for v in self.inputs.iter().chain(self.targets.iter()) {
            buf.write_f64::<LittleEndian>(*v).unwrap();
        }
        let crc = crc32fast::hash(&buf);
        buf.write_u32::<LittleEndian>(crc).unwrap();
        buf
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        const HEADER: usize = 8 + 4 + 32;
        if bytes.len() < HEADER + 4 {
            return Err(Error::Format("query file truncated".into()));
        }
        let (body, tail) = bytes.split_at(bytes.len() - 4);
        let mut cur = Cursor::new(body);
        let mut magic = [0u8; 8];
        cur.read_exact(&mut magic)?;
        if &magic != QUERY_MAGIC {
            return Err(Error::Format("bad query-set magic".into()));
        }
        let version = cur.read_u32::<LittleEndian>()?;
        if version != QUERY_VERSION {
            return Err(Error::Format(format!("unsupported query-set version {version}")));
        }
        let q = cur.read_u64::<LittleEndian>()? as usize;
        let d = cur.read_u64::<LittleEndian>()? as usize;
        let c = cur.read_u64::<LittleEndian>()? as usize;
        let p = cur.read_u64::<LittleEndian>()? as usize;
        let payload = q
            .checked_mul(d.checked_add(c).ok_or_else(|| Error::Format("dims overflow".into()))?)
            .and_then(|n| n.checked_mul(8))
            .and_then(|n| n.checked_add(p))
            .ok_or_else(|| Error::Format("dims overflow".into()))?;
        if body.len() - HEADER != payload {
            return Err(Error::Format(format!(
                "query file holds {} payload bytes, header promises {payload}",
                body.len() - HEADER
            )));
        }
        if crc32fast::hash(body) != u32::from_le_bytes(tail.try_into().unwrap()) {
            return Err(Error::Format("query-set checksum mismatch".into()));
        }
        let mut prov = vec![0u8; p];
        cur.read_exact(&mut prov)?;
        let provenance = String::from_utf8(prov).map_err(|e| Error::Format(format!("provenance: {e}")))?;
        let mut inputs = vec![0.0; q * d];
        cur.read_f64_into::<LittleEndian>(&mut inputs)?;
        let mut targets = vec![0.0; q * c];
        cur.read_f64_into::<LittleEndian>(&mut targets)?;
        Ok(QuerySet {
            inputs: Array2::from_shape_vec((q, d), inputs).unwrap(),
            targets: Array2::from_shape_vec((q, c), targets).unwrap(),
            provenance,
        })
    }
}

pub fn save_queryset(qs: &QuerySet, path: impl AsRef<Path>) -> Result<()> {
    write_atomic(path.as_ref(), &qs.to_bytes())
}

pub fn load_queryset(path: impl AsRef<Path>) -> Result<QuerySet> {
    QuerySet::from_bytes(&std::fs::read(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    fn tiny(values: &[f64], h: usize, w: usize) -> ImageDataset {
        let n = values.len() / (h * w);
        ImageDataset::new(
            Array2::from_shape_vec((n, h * w), values.to_vec()).unwrap(),
            vec![0; n],
            h,
            w,
            "tiny",
        )
        .unwrap()
    }

    #[test]
    fn idx_zero_pair_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let ds = tiny(&[0.0; 2 * 9], 3, 3);
        let (ip, lp) = (dir.path().join("i.idx"), dir.path().join("l.idx"));
        write_idx(&ds, &ip, &lp).unwrap();
        let back = load_idx(&ip, &lp).unwrap();
        assert_eq!(back.len(), 2);
        assert_eq!(back.dim(), 9);
        assert!(back.images.iter().all(|&p| p == 0.0));
    }

    #[test]
    fn idx_count_mismatch_is_consistency_error() {
        let dir = tempfile::tempdir().unwrap();
        let (ip, lp) = (dir.path().join("i.idx"), dir.path().join("l.idx"));
        let mut img = vec![0, 0, 8, 3, 0, 0, 0, 10, 0, 0, 0, 2, 0, 0, 0, 2];
        img.extend(std::iter::repeat(7u8).take(40));
        let mut lbl = vec![0, 0, 8, 1, 0, 0, 0, 9];
        lbl.extend(std::iter::repeat(1u8).take(9));
        std::fs::write(&ip, &img).unwrap();
        std::fs::write(&lp, &lbl).unwrap();
        assert!(matches!(load_idx(&ip, &lp), Err(Error::Consistency(_))));
    }

    #[test]
    fn idx_magic_and_truncation() {
        let dir = tempfile::tempdir().unwrap();
        let (ip, lp) = (dir.path().join("i.idx"), dir.path().join("l.idx"));
        std::fs::write(&ip, [0, 0, 8, 1, 0, 0, 0, 1, 0, 0, 0, 1, 0, 0, 0, 1, 5]).unwrap();
        std::fs::write(&lp, [0, 0, 8, 1, 0, 0, 0, 1, 3]).unwrap();
        assert!(matches!(load_idx(&ip, &lp), Err(Error::Format(_))));

        // header promises 2 images of 2x2, payload has 5 bytes
        std::fs::write(&ip, [0, 0, 8, 3, 0, 0, 0, 2, 0, 0, 0, 2, 0, 0, 0, 2, 1, 2, 3, 4, 5]).unwrap();
        std::fs::write(&lp, [0, 0, 8, 1, 0, 0, 0, 2, 3, 4]).unwrap();
        assert!(matches!(load_idx(&ip, &lp), Err(Error::Io(_))));
    }

    #[test]
    fn standardize_two_pixels() {
        let (ds, stats) = standardize(&tiny(&[0.0, 2.0], 1, 1)).unwrap();
        assert_eq!(ds.images, array![[-1.0], [1.0]]);
        assert_eq!(stats, Standardization { mean: 1.0, std: 1.0 });
        assert_eq!(stats.background(), -1.0);
    }

    #[test]
    fn standardize_rejects_constant() {
        assert!(matches!(standardize(&tiny(&[3.0; 8], 2, 2)), Err(Error::DegenerateData(_))));
    }

    #[test]
    fn subset_contract() {
        let ds = tiny(&(0..20).map(f64::from).collect::<Vec<_>>(), 1, 1);
        let full = subset(&ds, 20, 1).unwrap();
        let mut v: Vec<f64> = full.images.iter().copied().collect();
        v.sort_by(f64::total_cmp);
        assert_eq!(v, (0..20).map(f64::from).collect::<Vec<_>>());
        assert_eq!(subset(&ds, 5, 7).unwrap(), subset(&ds, 5, 7).unwrap());
        assert!(matches!(subset(&ds, 0, 1), Err(Error::Argument(_))));
        assert!(matches!(subset(&ds, 21, 1), Err(Error::Argument(_))));
    }

    #[test]
    fn downsample_averages_blocks() {
        let ds = tiny(&[1.0, 3.0, 5.0, 7.0], 2, 2);
        let small = ds.downsample(2).unwrap();
        assert_eq!(small.images, array![[4.0]]);
        assert_eq!((small.height, small.width), (1, 1));
    }

    #[test]
    fn queryset_round_trip_and_corruption() {
        let qs = QuerySet::new(
            array![[1.0, -2.5], [f64::MIN_POSITIVE, 3.0]],
            array![[0.25], [-7.0]],
            "",
        )
        .unwrap();
        let bytes = qs.to_bytes();
        let back = QuerySet::from_bytes(&bytes).unwrap();
        assert_eq!(back, qs);
        assert_eq!(back.provenance, "");

        assert!(matches!(QuerySet::from_bytes(&bytes[..bytes.len() - 9]), Err(Error::Format(_))));
        let mut bad = bytes.clone();
        bad[50] ^= 1;
        assert!(matches!(QuerySet::from_bytes(&bad), Err(Error::Format(_))));
    }
}
