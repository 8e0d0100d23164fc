//! MNIST IDX files, pixel normalization and image selection.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::network::InputVector;

pub const IMAGE_MAGIC: u32 = 0x0000_0803;
pub const LABEL_MAGIC: u32 = 0x0000_0801;
pub const SIDE: usize = 28;
pub const PIXELS: usize = SIDE * SIDE;

/// A 28×28 image, row-major, pixel `28·row + col` with row 0 at the top.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ByteGrid(pub Vec<u8>);

impl ByteGrid {
    pub fn new(bytes: Vec<u8>) -> Result<Self> {
        if bytes.len() != PIXELS {
            return Err(Error::NonSquare(bytes.len()));
        }
        Ok(Self(bytes))
    }

    pub fn bytes(&self) -> &[u8] {
        &self.0
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MnistSet {
    pub images: Vec<ByteGrid>,
    pub labels: Vec<u8>,
}

impl MnistSet {
    /// Loads `<prefix>-images-idx3-ubyte` and `<prefix>-labels-idx1-ubyte`.
    pub fn load(prefix: impl AsRef<Path>) -> Result<Self> {
        let (images_path, labels_path) = idx_paths(prefix.as_ref());
        let images = read_idx_images(images_path)?;
        let labels = read_idx_labels(labels_path)?;
        if images.len() != labels.len() {
            return Err(Error::Shape(format!(
                "{} images but {} labels",
                images.len(),
                labels.len()
            )));
        }
        Ok(Self { images, labels })
    }

    pub fn len(&self) -> usize {
        self.images.len()
    }

    pub fn is_empty(&self) -> bool {
        self.images.is_empty()
    }

    /// Index of the first image carrying `digit`.
    pub fn first_of(&self, digit: u8) -> Option<usize> {
        self.labels.iter().position(|&l| l == digit)
    }
}

pub fn idx_paths(prefix: &Path) -> (PathBuf, PathBuf) {
    let s = prefix.as_os_str().to_string_lossy();
    (
        PathBuf::from(format!("{s}-images-idx3-ubyte")),
        PathBuf::from(format!("{s}-labels-idx1-ubyte")),
    )
}

fn be_u32(bytes: &[u8], at: usize) -> Result<u32> {
    bytes
        .get(at..at + 4)
        .map(|b| u32::from_be_bytes([b[0], b[1], b[2], b[3]]))
        .ok_or(Error::Truncated {
            expected: at + 4,
            found: bytes.len(),
        })
}

fn check_magic(bytes: &[u8], expected: u32) -> Result<()> {
    let found = be_u32(bytes, 0)?;
    if found != expected {
        return Err(Error::BadMagic { found, expected });
    }
    Ok(())
}

pub fn parse_idx_images(bytes: &[u8]) -> Result<Vec<ByteGrid>> {
    check_magic(bytes, IMAGE_MAGIC)?;
    let count = be_u32(bytes, 4)? as usize;
    let rows = be_u32(bytes, 8)?;
    let cols = be_u32(bytes, 12)?;
    if rows as usize != SIDE || cols as usize != SIDE {
        return Err(Error::UnexpectedDimensions { rows, cols });
    }
    let payload = &bytes[16..];
    let expected = count * PIXELS;
    if payload.len() < expected {
        return Err(Error::Truncated {
            expected,
            found: payload.len(),
        });
    }
    Ok(payload[..expected]
        .chunks_exact(PIXELS)
        .map(|c| ByteGrid(c.to_vec()))
        .collect())
}

pub fn parse_idx_labels(bytes: &[u8]) -> Result<Vec<u8>> {
    check_magic(bytes, LABEL_MAGIC)?;
    let count = be_u32(bytes, 4)? as usize;
    let payload = &bytes[8..];
    if payload.len() < count {
        return Err(Error::Truncated {
            expected: count,
            found: payload.len(),
        });
    }
    let labels = payload[..count].to_vec();
    if let Some(&bad) = labels.iter().find(|&&l| l > 9) {
        return Err(Error::LabelValue(bad));
    }
    Ok(labels)
}

pub fn read_idx_images(path: impl AsRef<Path>) -> Result<Vec<ByteGrid>> {
    let path = path.as_ref();
    parse_idx_images(&std::fs::read(path).map_err(|e| Error::io(path, e))?)
}

pub fn read_idx_labels(path: impl AsRef<Path>) -> Result<Vec<u8>> {
    let path = path.as_ref();
    parse_idx_labels(&std::fs::read(path).map_err(|e| Error::io(path, e))?)
}

pub fn encode_idx_images(images: &[ByteGrid]) -> Vec<u8> {
    let mut out = Vec::with_capacity(16 + images.len() * PIXELS);
    for v in [IMAGE_MAGIC, images.len() as u32, SIDE as u32, SIDE as u32] {
        out.extend_from_slice(&v.to_be_bytes());
    }
    images.iter().for_each(|g| out.extend_from_slice(&g.0));
    out
}

pub fn encode_idx_labels(labels: &[u8]) -> Vec<u8> {
    let mut out = Vec::with_capacity(8 + labels.len());
    out.extend_from_slice(&LABEL_MAGIC.to_be_bytes());
    out.extend_from_slice(&(labels.len() as u32).to_be_bytes());
    out.extend_from_slice(labels);
    out
}

/// Flattens row-major and scales bytes to `[0, 1]` by `/255`.
pub fn normalize(grid: &ByteGrid) -> InputVector {
    InputVector::new(grid.0.iter().map(|&b| f64::from(b) / 255.0).collect())
}

pub fn denormalize(values: &[f64]) -> Vec<u8> {
    values
        .iter()
        .map(|v| (v * 255.0).round().clamp(0.0, 255.0) as u8)
        .collect()
}

/// `idx:<path-prefix>:<index>` or `digit:<d>`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ImageSelector {
    Idx { prefix: PathBuf, index: usize },
    Digit(u8),
}

impl ImageSelector {
    /// Short name used for output directories.
    pub fn tag(&self) -> String {
        match self {
            ImageSelector::Idx { index, .. } => format!("idx{index}"),
            ImageSelector::Digit(d) => format!("digit{d}"),
        }
    }

    /// Resolves the selector; `digit:` selectors search `default_set`.
    pub fn resolve(&self, default_set: Option<&Path>) -> Result<(ByteGrid, u8)> {
        let (set, index) = match self {
            ImageSelector::Idx { prefix, index } => (MnistSet::load(prefix)?, *index),
            ImageSelector::Digit(d) => {
                let prefix = default_set.ok_or_else(|| {
                    Error::Usage("digit:<d> selectors need a dataset (--data <prefix>)".into())
                })?;
                let set = MnistSet::load(prefix)?;
                let index = set.first_of(*d).ok_or_else(|| {
                    Error::Usage(format!("no image labelled {d} in {}", prefix.display()))
                })?;
                (set, index)
            }
        };
        if index >= set.len() {
            return Err(Error::IndexOutOfRange {
                index,
                limit: set.len(),
            });
        }
        Ok((set.images[index].clone(), set.labels[index]))
    }
}

impl fmt::Display for ImageSelector {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ImageSelector::Idx { prefix, index } => write!(f, "idx:{}:{index}", prefix.display()),
            ImageSelector::Digit(d) => write!(f, "digit:{d}"),
        }
    }
}

impl FromStr for ImageSelector {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::Usage(format!("bad image selector '{s}'"));
        if let Some(rest) = s.strip_prefix("digit:") {
            let d: u8 = rest.parse().map_err(|_| bad())?;
            if d > 9 {
                return Err(bad());
            }
            return Ok(ImageSelector::Digit(d));
        }
        if let Some(rest) = s.strip_prefix("idx:") {
            let (prefix, index) = rest.rsplit_once(':').ok_or_else(bad)?;
            if prefix.is_empty() {
                return Err(bad());
            }
            return Ok(ImageSelector::Idx {
                prefix: PathBuf::from(prefix),
                index: index.parse().map_err(|_| bad())?,
            });
        }
        Err(bad())
    }
}
