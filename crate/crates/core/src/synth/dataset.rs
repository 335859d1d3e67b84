//! Dataset container and its binary file format.
//!
//! ```text
//! "CSID" | u32 version=1 | u32 count | u32 planes=2 | u32 h | u32 w
//! | u8 split tag x count
//! | f32 sample data x count*2*h*w   (sample-major, plane-major, row-major)
//! | f64 offset, f64 scale x count   (normalization records)
//! ```
//!
//! All numbers are little-endian. The normalization trailer is optional on
//! read; files without it get [`Normalization::CENTERED`].

use std::fs;
use std::path::Path;

use crate::binio::{put_u32, Reader};
use crate::error::{Error, Result};

use super::{CsiMatrix, Normalization};

pub const DATASET_MAGIC: &[u8; 4] = b"CSID";
pub const DATASET_VERSION: u32 = 1;
/// Reals per sample in the flat import layout (2 planes of 32x32).
pub const FLAT_SAMPLE_LEN: usize = 2048;
const FLAT_SIDE: usize = 32;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Split {
    Train = 0,
    Validation = 1,
    Test = 2,
}

impl Split {
    fn from_tag(tag: u8) -> Option<Split> {
        match tag {
            0 => Some(Split::Train),
            1 => Some(Split::Validation),
            2 => Some(Split::Test),
            _ => None,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Validation => "validation",
            Split::Test => "test",
        }
    }
}

impl std::str::FromStr for Split {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "train" => Ok(Split::Train),
            "validation" | "val" => Ok(Split::Validation),
            "test" => Ok(Split::Test),
            other => Err(Error::Config(format!("unknown split {other:?}"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct SplitCounts {
    pub train: usize,
    pub validation: usize,
    pub test: usize,
}

impl SplitCounts {
    /// 5 : 1 : 1 partition, so 2800 samples give 2000 / 400 / 400.
    pub fn proportional(total: usize) -> Self {
        let validation = (total as f64 / 7.0).round() as usize;
        let test = validation.min(total - validation);
        SplitCounts {
            train: total - validation - test,
            validation,
            test,
        }
    }

    pub fn total(&self) -> usize {
        self.train + self.validation + self.test
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct Dataset {
    samples: Vec<CsiMatrix>,
    splits: Vec<Split>,
}

impl Dataset {
    pub fn push(&mut self, sample: CsiMatrix, split: Split) {
        self.samples.push(sample);
        self.splits.push(split);
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn samples(&self) -> &[CsiMatrix] {
        &self.samples
    }

    pub fn tags(&self) -> &[Split] {
        &self.splits
    }

    /// Samples of one split, in file order.
    pub fn split(&self, split: Split) -> Vec<&CsiMatrix> {
        self.samples
            .iter()
            .zip(&self.splits)
            .filter(|(_, &s)| s == split)
            .map(|(x, _)| x)
            .collect()
    }

    pub fn count(&self, split: Split) -> usize {
        self.splits.iter().filter(|&&s| s == split).count()
    }

    /// Side length shared by all samples (32 for an empty dataset).
    pub fn side(&self) -> usize {
        self.samples.first().map_or(FLAT_SIDE, CsiMatrix::side)
    }
}

pub fn encode_dataset(ds: &Dataset) -> Result<Vec<u8>> {
    let side = ds.side();
    if let Some(i) = ds.samples.iter().position(|x| x.side() != side) {
        return Err(Error::Shape(format!(
            "sample {i} has side {}, dataset side is {side}",
            ds.samples[i].side()
        )));
    }
    let per = 2 * side * side;
    let mut out = Vec::with_capacity(24 + ds.len() * (1 + per * 4 + 16));
    out.extend_from_slice(DATASET_MAGIC);
    put_u32(&mut out, DATASET_VERSION);
    put_u32(&mut out, ds.len() as u32);
    put_u32(&mut out, 2);
    put_u32(&mut out, side as u32);
    put_u32(&mut out, side as u32);
    out.extend(ds.splits.iter().map(|&s| s as u8));
    for x in &ds.samples {
        for &v in x.planes() {
            out.extend_from_slice(&(v as f32).to_le_bytes());
        }
    }
    for x in &ds.samples {
        let n = x.normalization();
        out.extend_from_slice(&n.offset.to_le_bytes());
        out.extend_from_slice(&n.scale.to_le_bytes());
    }
    Ok(out)
}

pub fn decode_dataset(bytes: &[u8]) -> Result<Dataset> {
    let mut r = Reader::new(bytes);
    r.magic(DATASET_MAGIC)?;
    r.expect_u32(DATASET_VERSION, "dataset version")?;
    let count = r.u32("sample count")? as usize;
    r.expect_u32(2, "plane count")?;
    let h_at = r.offset();
    let h = r.u32("height")? as usize;
    let w = r.u32("width")? as usize;
    if h != w || h == 0 {
        return Err(Error::Parse {
            offset: h_at,
            msg: format!("samples must be square and non-empty, got {h}x{w}"),
        });
    }
    let mut splits = Vec::with_capacity(count);
    for _ in 0..count {
        let at = r.offset();
        let tag = r.u8("split tag")?;
        splits.push(Split::from_tag(tag).ok_or_else(|| Error::Parse {
            offset: at,
            msg: format!("unknown split tag {tag}"),
        })?);
    }
    let per = 2 * h * w;
    let need = count * per * 4;
    if r.remaining() < need {
        return Err(Error::Parse {
            offset: r.offset(),
            msg: format!("truncated file: sample data needs {need} bytes, {} remain", r.remaining()),
        });
    }
    let mut planes = Vec::with_capacity(count);
    for _ in 0..count {
        let p = (0..per).map(|_| r.f32("sample data").map(f64::from)).collect::<Result<Vec<_>>>()?;
        planes.push(p);
    }
    let norms = if r.remaining() == 0 {
        vec![Normalization::CENTERED; count]
    } else {
        (0..count)
            .map(|_| {
                Ok(Normalization {
                    offset: r.f64("normalization offset")?,
                    scale: r.f64("normalization scale")?,
                })
            })
            .collect::<Result<Vec<_>>>()?
    };
    if r.remaining() != 0 {
        return Err(Error::Parse {
            offset: r.offset(),
            msg: format!("{} trailing bytes", r.remaining()),
        });
    }
    let samples = planes
        .into_iter()
        .zip(norms)
        .map(|(p, n)| CsiMatrix::new(h, p, n))
        .collect::<Result<Vec<_>>>()?;
    Ok(Dataset { samples, splits })
}

pub fn write_dataset(path: impl AsRef<Path>, ds: &Dataset) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, encode_dataset(ds)?).map_err(|e| Error::io(path, e))
}

pub fn read_dataset(path: impl AsRef<Path>) -> Result<Dataset> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_dataset(&bytes)
}

/// Reads `count` flat samples of 2048 little-endian f32 values each. Value
/// `i` of a sample goes to plane `i / 1024`, row `(i % 1024) / 32`, column
/// `i % 32`. Samples are assumed centered (zero at 0.5) and are all tagged
/// `split`.
pub fn import_flat_samples(path: impl AsRef<Path>, count: usize, split: Split) -> Result<Dataset> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    let expected = count * FLAT_SAMPLE_LEN * 4;
    if bytes.len() != expected {
        return Err(Error::Parse {
            offset: bytes.len().min(expected) as u64,
            msg: format!(
                "flat sample file holds {} bytes, {count} samples need {expected}",
                bytes.len()
            ),
        });
    }
    let mut ds = Dataset::default();
    for chunk in bytes.chunks_exact(FLAT_SAMPLE_LEN * 4) {
        let planes = chunk
            .chunks_exact(4)
            .map(|b| f64::from(f32::from_le_bytes(b.try_into().unwrap())))
            .collect();
        ds.push(CsiMatrix::new(FLAT_SIDE, planes, Normalization::CENTERED)?, split);
    }
    Ok(ds)
}
