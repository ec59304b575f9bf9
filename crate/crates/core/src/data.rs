//! IDX ingestion, binarization and class prototypes.
//!
//! Images are stored row-major: pixel index `i = row * cols + col`.

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};

pub const IMAGES_MAGIC: u32 = 0x0000_0803;
pub const LABELS_MAGIC: u32 = 0x0000_0801;

/// Default grayscale threshold; pixels at or above it become +1.
pub const DEFAULT_THRESHOLD: u8 = 128;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RawImage {
    pub rows: usize,
    pub cols: usize,
    pub pixels: Vec<u8>,
}

impl RawImage {
    pub fn new(rows: usize, cols: usize, pixels: Vec<u8>) -> Result<Self> {
        if rows == 0 || cols == 0 || rows * cols != pixels.len() {
            return Err(Error::Shape(format!(
                "{} pixels for a {rows}x{cols} image",
                pixels.len()
            )));
        }
        Ok(Self { rows, cols, pixels })
    }

    pub fn len(&self) -> usize {
        self.pixels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pixels.is_empty()
    }
}

/// A vector of spins in {-1, +1} with an optional class label.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BipolarImage {
    spins: Vec<i8>,
    pub label: Option<usize>,
}

impl BipolarImage {
    pub fn new(spins: Vec<i8>, label: Option<usize>) -> Result<Self> {
        if spins.is_empty() {
            return Err(Error::Empty("bipolar image"));
        }
        if let Some(i) = spins.iter().position(|&s| s != 1 && s != -1) {
            return Err(Error::Param(format!(
                "spin {} at index {i} is not +-1",
                spins[i]
            )));
        }
        Ok(Self { spins, label })
    }

    /// Build from booleans, `true` meaning +1.
    pub fn from_bits(bits: impl IntoIterator<Item = bool>, label: Option<usize>) -> Self {
        let spins: Vec<i8> = bits.into_iter().map(|b| if b { 1 } else { -1 }).collect();
        Self { spins, label }
    }

    pub fn spins(&self) -> &[i8] {
        &self.spins
    }

    pub fn len(&self) -> usize {
        self.spins.len()
    }

    pub fn is_empty(&self) -> bool {
        self.spins.is_empty()
    }

    pub fn to_f64(&self) -> Vec<f64> {
        self.spins.iter().map(|&s| f64::from(s)).collect()
    }

    pub fn with_label(mut self, label: Option<usize>) -> Self {
        self.label = label;
        self
    }

    /// Inverts the spins at the given indices.
    pub fn flip(&mut self, indices: &[usize]) {
        for &i in indices {
            self.spins[i] = -self.spins[i];
        }
    }

    /// Re-embeds as bytes: +1 -> 255, -1 -> 0.
    pub fn to_bytes(&self) -> Vec<u8> {
        self.spins
            .iter()
            .map(|&s| if s > 0 { 255 } else { 0 })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Prototype {
    pub class_id: usize,
    pub spins: Vec<i8>,
}

impl Prototype {
    pub fn to_image(&self) -> BipolarImage {
        BipolarImage {
            spins: self.spins.clone(),
            label: Some(self.class_id),
        }
    }

    pub fn to_f64(&self) -> Vec<f64> {
        self.spins.iter().map(|&s| f64::from(s)).collect()
    }
}

fn read_file(path: &Path) -> Result<Vec<u8>> {
    fs::read(path).map_err(|e| Error::io(path, e))
}

fn be_u32(bytes: &[u8], offset: usize) -> Result<u32> {
    bytes
        .get(offset..offset + 4)
        .map(|b| u32::from_be_bytes([b[0], b[1], b[2], b[3]]))
        .ok_or(Error::Length {
            expected: offset + 4,
            actual: bytes.len(),
        })
}

pub fn parse_idx_images(bytes: &[u8]) -> Result<Vec<RawImage>> {
    let magic = be_u32(bytes, 0)?;
    if magic != IMAGES_MAGIC {
        return Err(Error::Magic {
            expected: IMAGES_MAGIC,
            found: magic,
        });
    }
    let count = be_u32(bytes, 4)? as usize;
    let rows = be_u32(bytes, 8)? as usize;
    let cols = be_u32(bytes, 12)? as usize;
    let size = rows * cols;
    if size == 0 {
        return Err(Error::Shape(format!("{rows}x{cols} images")));
    }
    let expected = 16 + count * size;
    if bytes.len() != expected {
        return Err(Error::Length {
            expected,
            actual: bytes.len(),
        });
    }
    Ok(bytes[16..]
        .chunks_exact(size)
        .map(|px| RawImage {
            rows,
            cols,
            pixels: px.to_vec(),
        })
        .collect())
}

pub fn load_idx_images(path: impl AsRef<Path>) -> Result<Vec<RawImage>> {
    parse_idx_images(&read_file(path.as_ref())?)
}

/// Parses an IDX label file. With `n_classes` set, every label must be below it.
pub fn parse_idx_labels(bytes: &[u8], n_classes: Option<usize>) -> Result<Vec<usize>> {
    let magic = be_u32(bytes, 0)?;
    if magic != LABELS_MAGIC {
        return Err(Error::Magic {
            expected: LABELS_MAGIC,
            found: magic,
        });
    }
    let count = be_u32(bytes, 4)? as usize;
    let expected = 8 + count;
    if bytes.len() != expected {
        return Err(Error::Length {
            expected,
            actual: bytes.len(),
        });
    }
    let labels: Vec<usize> = bytes[8..].iter().map(|&b| b as usize).collect();
    if let Some(n) = n_classes {
        if let Some(index) = labels.iter().position(|&l| l >= n) {
            return Err(Error::LabelRange {
                index,
                label: labels[index],
                n_classes: n,
            });
        }
    }
    Ok(labels)
}

pub fn load_idx_labels(path: impl AsRef<Path>, n_classes: Option<usize>) -> Result<Vec<usize>> {
    parse_idx_labels(&read_file(path.as_ref())?, n_classes)
}

pub fn encode_idx_images(rows: usize, cols: usize, images: &[RawImage]) -> Result<Vec<u8>> {
    let mut out = Vec::with_capacity(16 + images.len() * rows * cols);
    out.extend_from_slice(&IMAGES_MAGIC.to_be_bytes());
    out.extend_from_slice(&(images.len() as u32).to_be_bytes());
    out.extend_from_slice(&(rows as u32).to_be_bytes());
    out.extend_from_slice(&(cols as u32).to_be_bytes());
    for (i, img) in images.iter().enumerate() {
        if img.rows != rows || img.cols != cols {
            return Err(Error::Shape(format!(
                "image {i} is {}x{}, expected {rows}x{cols}",
                img.rows, img.cols
            )));
        }
        out.extend_from_slice(&img.pixels);
    }
    Ok(out)
}

pub fn encode_idx_labels(labels: &[usize]) -> Result<Vec<u8>> {
    let mut out = Vec::with_capacity(8 + labels.len());
    out.extend_from_slice(&LABELS_MAGIC.to_be_bytes());
    out.extend_from_slice(&(labels.len() as u32).to_be_bytes());
    for &l in labels {
        let b = u8::try_from(l).map_err(|_| Error::Param(format!("label {l} exceeds a byte")))?;
        out.push(b);
    }
    Ok(out)
}

pub fn binarize(img: &RawImage, threshold: u8) -> BipolarImage {
    BipolarImage::from_bits(img.pixels.iter().map(|&p| p >= threshold), None)
}

/// Per-pixel sign of the class mean; a zero mean maps to +1.
pub fn compute_prototype(images: &[BipolarImage], class_id: usize) -> Result<Prototype> {
    let first = images.first().ok_or(Error::Empty("prototype images"))?;
    let p = first.len();
    let mut sums = vec![0i64; p];
    for (i, img) in images.iter().enumerate() {
        if img.len() != p {
            return Err(Error::Shape(format!(
                "image {i} has {} pixels, expected {p}",
                img.len()
            )));
        }
        if let Some(l) = img.label {
            if l != class_id {
                return Err(Error::Param(format!(
                    "image {i} has label {l}, expected {class_id}"
                )));
            }
        }
        for (acc, &s) in sums.iter_mut().zip(img.spins()) {
            *acc += i64::from(s);
        }
    }
    Ok(Prototype {
        class_id,
        spins: sums.iter().map(|&s| if s >= 0 { 1 } else { -1 }).collect(),
    })
}

/// A binarized, labeled image set with its geometry.
#[derive(Debug, Clone)]
pub struct Dataset {
    pub rows: usize,
    pub cols: usize,
    pub images: Vec<BipolarImage>,
}

impl Dataset {
    pub fn from_raw(
        raw: &[RawImage],
        labels: &[usize],
        threshold: u8,
    ) -> Result<Self> {
        if raw.len() != labels.len() {
            return Err(Error::Shape(format!(
                "{} images but {} labels",
                raw.len(),
                labels.len()
            )));
        }
        let first = raw.first().ok_or(Error::Empty("image file"))?;
        let images = raw
            .iter()
            .zip(labels)
            .map(|(img, &l)| binarize(img, threshold).with_label(Some(l)))
            .collect();
        Ok(Self {
            rows: first.rows,
            cols: first.cols,
            images,
        })
    }

    pub fn load(
        images: impl AsRef<Path>,
        labels: impl AsRef<Path>,
        threshold: u8,
        n_classes: usize,
    ) -> Result<Self> {
        let raw = load_idx_images(images)?;
        let labels = load_idx_labels(labels, Some(n_classes))?;
        Self::from_raw(&raw, &labels, threshold)
    }

    pub fn pixels(&self) -> usize {
        self.rows * self.cols
    }

    pub fn len(&self) -> usize {
        self.images.len()
    }

    pub fn is_empty(&self) -> bool {
        self.images.is_empty()
    }

    /// One prototype per class `0..n_classes`.
    pub fn prototypes(&self, n_classes: usize) -> Result<Vec<Prototype>> {
        (0..n_classes)
            .map(|k| {
                let members: Vec<BipolarImage> = self
                    .images
                    .iter()
                    .filter(|img| img.label == Some(k))
                    .cloned()
                    .collect();
                compute_prototype(&members, k)
            })
            .collect()
    }
}

/// Environment variable naming the directory with the four MNIST files.
pub const DATA_DIR_ENV: &str = "OSCNET_DATA_DIR";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Split {
    Train,
    Test,
}

impl Split {
    /// Standard (uncompressed) MNIST file names: images, labels.
    pub fn file_names(self) -> (&'static str, &'static str) {
        match self {
            Split::Train => ("train-images-idx3-ubyte", "train-labels-idx1-ubyte"),
            Split::Test => ("t10k-images-idx3-ubyte", "t10k-labels-idx1-ubyte"),
        }
    }
}

impl Dataset {
    pub fn load_split(dir: impl AsRef<Path>, split: Split, threshold: u8, n_classes: usize) -> Result<Self> {
        let (images, labels) = split.file_names();
        let dir = dir.as_ref();
        Self::load(dir.join(images), dir.join(labels), threshold, n_classes)
    }
}

/// Stores prototypes as an IDX image file (class k at position k, +1 as 255).
pub fn encode_prototypes(rows: usize, cols: usize, protos: &[Prototype]) -> Result<Vec<u8>> {
    let raw: Vec<RawImage> = protos
        .iter()
        .map(|p| RawImage::new(rows, cols, p.to_image().to_bytes()))
        .collect::<Result<_>>()?;
    encode_idx_images(rows, cols, &raw)
}

pub fn load_prototypes(path: impl AsRef<Path>) -> Result<(usize, usize, Vec<Prototype>)> {
    let raw = load_idx_images(path)?;
    let first = raw.first().ok_or(Error::Empty("prototype file"))?;
    let (rows, cols) = (first.rows, first.cols);
    let protos = raw
        .iter()
        .enumerate()
        .map(|(k, img)| Prototype {
            class_id: k,
            spins: binarize(img, DEFAULT_THRESHOLD).spins,
        })
        .collect();
    Ok((rows, cols, protos))
}

/// Binary PGM (P5) rendering: +1 white, -1 black.
pub fn encode_pgm(img: &BipolarImage, rows: usize, cols: usize) -> Result<Vec<u8>> {
    if rows * cols != img.len() {
        return Err(Error::Shape(format!(
            "{} spins for a {rows}x{cols} image",
            img.len()
        )));
    }
    let mut out = format!("P5\n{cols} {rows}\n255\n").into_bytes();
    out.extend(img.to_bytes());
    Ok(out)
}

pub fn write_file(path: impl AsRef<Path>, bytes: &[u8]) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}
