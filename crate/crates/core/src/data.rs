//! IDX (MNIST, Fashion-MNIST) and CIFAR-10 binary loaders.
//!
//! Every parser works on an in-memory byte slice; the `load_*` wrappers only
//! add file reading. Pixels are scaled by `1/255` into `[0, 1]`.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use thiserror::Error;

use crate::linalg::Matrix;

pub const IDX_IMAGES_MAGIC: u32 = 0x0000_0803;
pub const IDX_LABELS_MAGIC: u32 = 0x0000_0801;
pub const CIFAR10_PIXELS: usize = 3072;
pub const CIFAR10_RECORD: usize = CIFAR10_PIXELS + 1;
pub const CIFAR10_CLASSES: usize = 10;

#[derive(Debug, Error)]
pub enum DataError {
    #[error("cannot read {}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("bad magic number: expected {expected:#010x}, found {found:#010x}")]
    BadMagic { expected: u32, found: u32 },
    #[error("truncated data: expected {expected} bytes, found {found}")]
    Truncated { expected: usize, found: usize },
    #[error("header dimensions {dims:?} overflow the addressable size")]
    DimensionOverflow { dims: Vec<u32> },
    #[error("{extra} unexpected bytes after the payload")]
    TrailingBytes { extra: usize },
    #[error("CIFAR-10 data of {len} bytes is not a whole number of {CIFAR10_RECORD}-byte records")]
    CifarLength { len: usize },
    #[error("label {label} of record {index} is outside 0..{num_classes}")]
    LabelOutOfRange {
        index: usize,
        label: usize,
        num_classes: usize,
    },
    #[error("{images} images but {labels} labels")]
    CountMismatch { images: usize, labels: usize },
    #[error("feature {value} at row {row}, column {col} is outside [0, 1]")]
    FeatureOutOfRange { row: usize, col: usize, value: f64 },
    #[error("unknown dataset {0:?} (expected mnist, fashion or cifar10)")]
    UnknownDataset(String),
}

pub type Result<T> = std::result::Result<T, DataError>;

/// Normalized features with integer labels.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    x: Matrix,
    labels: Vec<usize>,
    num_classes: usize,
    name: String,
}

impl Dataset {
    pub fn new(x: Matrix, labels: Vec<usize>, num_classes: usize, name: impl Into<String>) -> Result<Self> {
        if x.rows() != labels.len() {
            return Err(DataError::CountMismatch {
                images: x.rows(),
                labels: labels.len(),
            });
        }
        if let Some(i) = labels.iter().position(|&l| l >= num_classes) {
            return Err(DataError::LabelOutOfRange {
                index: i,
                label: labels[i],
                num_classes,
            });
        }
        let cols = x.cols().max(1);
        if let Some(k) = x.as_slice().iter().position(|v| !(0.0..=1.0).contains(v)) {
            return Err(DataError::FeatureOutOfRange {
                row: k / cols,
                col: k % cols,
                value: x.as_slice()[k],
            });
        }
        Ok(Self {
            x,
            labels,
            num_classes,
            name: name.into(),
        })
    }

    pub fn x(&self) -> &Matrix {
        &self.x
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn feature_dim(&self) -> usize {
        self.x.cols()
    }

    /// The first `n` samples (all of them if `n` exceeds the length).
    pub fn head(&self, n: usize) -> Self {
        let n = n.min(self.len());
        Self {
            x: self.x.head_rows(n),
            labels: self.labels[..n].to_vec(),
            num_classes: self.num_classes,
            name: self.name.clone(),
        }
    }

    /// Same labels over replacement features, re-validated.
    pub fn with_features(&self, x: Matrix) -> Result<Self> {
        Self::new(x, self.labels.clone(), self.num_classes, self.name.clone())
    }
}

fn read_file(path: &Path) -> Result<Vec<u8>> {
    std::fs::read(path).map_err(|source| DataError::Io {
        path: path.to_path_buf(),
        source,
    })
}

fn read_u32_be(bytes: &[u8], offset: usize) -> Result<u32> {
    bytes
        .get(offset..offset + 4)
        .map(|b| u32::from_be_bytes([b[0], b[1], b[2], b[3]]))
        .ok_or(DataError::Truncated {
            expected: offset + 4,
            found: bytes.len(),
        })
}

/// Checks magic and returns the header dimensions and payload offset.
fn idx_header(bytes: &[u8], magic: u32, ndims: usize) -> Result<(Vec<u32>, usize)> {
    let found = read_u32_be(bytes, 0)?;
    if found != magic {
        return Err(DataError::BadMagic { expected: magic, found });
    }
    let dims = (0..ndims)
        .map(|i| read_u32_be(bytes, 4 + 4 * i))
        .collect::<Result<Vec<_>>>()?;
    Ok((dims, 4 + 4 * ndims))
}

fn payload<'a>(bytes: &'a [u8], offset: usize, dims: &[u32]) -> Result<&'a [u8]> {
    let len = dims
        .iter()
        .try_fold(1usize, |acc, &d| acc.checked_mul(d as usize))
        .filter(|len| len.checked_add(offset).is_some())
        .ok_or_else(|| DataError::DimensionOverflow { dims: dims.to_vec() })?;
    let available = bytes.len() - offset;
    if available < len {
        return Err(DataError::Truncated {
            expected: offset + len,
            found: bytes.len(),
        });
    }
    if available > len {
        return Err(DataError::TrailingBytes { extra: available - len });
    }
    Ok(&bytes[offset..])
}

fn normalize(bytes: &[u8]) -> Vec<f64> {
    bytes.iter().map(|&b| f64::from(b) / 255.0).collect()
}

/// Decoded IDX image file: one row per image, `rows × cols` features.
#[derive(Debug, Clone, PartialEq)]
pub struct IdxImages {
    pub images: Matrix,
    pub rows: usize,
    pub cols: usize,
}

pub fn parse_idx_images(bytes: &[u8]) -> Result<IdxImages> {
    let (dims, offset) = idx_header(bytes, IDX_IMAGES_MAGIC, 3)?;
    let pixels = payload(bytes, offset, &dims)?;
    let (count, rows, cols) = (dims[0] as usize, dims[1] as usize, dims[2] as usize);
    let images = Matrix::from_vec(count, rows * cols, normalize(pixels))
        .expect("payload length checked against the header");
    Ok(IdxImages { images, rows, cols })
}

pub fn load_idx_images(path: impl AsRef<Path>) -> Result<Matrix> {
    Ok(parse_idx_images(&read_file(path.as_ref())?)?.images)
}

pub fn parse_idx_labels(bytes: &[u8]) -> Result<Vec<usize>> {
    let (dims, offset) = idx_header(bytes, IDX_LABELS_MAGIC, 1)?;
    Ok(payload(bytes, offset, &dims)?.iter().map(|&b| b as usize).collect())
}

pub fn load_idx_labels(path: impl AsRef<Path>) -> Result<Vec<usize>> {
    parse_idx_labels(&read_file(path.as_ref())?)
}

/// Concatenates CIFAR-10 binary batches. Pixels keep their on-disk
/// channel-major order (R plane, G plane, B plane).
pub fn parse_cifar10<'a>(batches: impl IntoIterator<Item = &'a [u8]>) -> Result<(Matrix, Vec<usize>)> {
    let mut pixels = Vec::new();
    let mut labels = Vec::new();
    for bytes in batches {
        if bytes.len() % CIFAR10_RECORD != 0 {
            return Err(DataError::CifarLength { len: bytes.len() });
        }
        for record in bytes.chunks_exact(CIFAR10_RECORD) {
            let label = record[0] as usize;
            if label >= CIFAR10_CLASSES {
                return Err(DataError::LabelOutOfRange {
                    index: labels.len(),
                    label,
                    num_classes: CIFAR10_CLASSES,
                });
            }
            labels.push(label);
            pixels.extend(record[1..].iter().map(|&b| f64::from(b) / 255.0));
        }
    }
    let x = Matrix::from_vec(labels.len(), CIFAR10_PIXELS, pixels).expect("whole records only");
    Ok((x, labels))
}

pub fn load_cifar10<P: AsRef<Path>>(paths: &[P]) -> Result<Dataset> {
    let files = paths
        .iter()
        .map(|p| read_file(p.as_ref()))
        .collect::<Result<Vec<_>>>()?;
    let (x, labels) = parse_cifar10(files.iter().map(Vec::as_slice))?;
    Dataset::new(x, labels, CIFAR10_CLASSES, "cifar10")
}

/// Pairs an image file with its label file.
pub fn load_idx_dataset(
    images: impl AsRef<Path>,
    labels: impl AsRef<Path>,
    num_classes: usize,
    name: &str,
) -> Result<Dataset> {
    let x = load_idx_images(images)?;
    let labels = load_idx_labels(labels)?;
    if x.rows() != labels.len() {
        return Err(DataError::CountMismatch {
            images: x.rows(),
            labels: labels.len(),
        });
    }
    Dataset::new(x, labels, num_classes, name)
}

/// Fixture emitter: inverse of [`parse_idx_images`] for byte-valued pixels.
pub fn encode_idx_images(x: &Matrix, rows: usize, cols: usize) -> Vec<u8> {
    assert_eq!(x.cols(), rows * cols, "image shape does not match feature width");
    let mut out = Vec::with_capacity(16 + x.as_slice().len());
    for v in [IDX_IMAGES_MAGIC, x.rows() as u32, rows as u32, cols as u32] {
        out.extend(v.to_be_bytes());
    }
    out.extend(x.as_slice().iter().map(|&v| to_byte(v)));
    out
}

pub fn encode_idx_labels(labels: &[usize]) -> Vec<u8> {
    let mut out = Vec::with_capacity(8 + labels.len());
    out.extend(IDX_LABELS_MAGIC.to_be_bytes());
    out.extend((labels.len() as u32).to_be_bytes());
    out.extend(labels.iter().map(|&l| u8::try_from(l).expect("IDX labels are single bytes")));
    out
}

pub fn encode_cifar10(x: &Matrix, labels: &[usize]) -> Vec<u8> {
    assert_eq!(x.cols(), CIFAR10_PIXELS);
    assert_eq!(x.rows(), labels.len());
    let mut out = Vec::with_capacity(labels.len() * CIFAR10_RECORD);
    for (i, &label) in labels.iter().enumerate() {
        out.push(u8::try_from(label).expect("CIFAR-10 labels are single bytes"));
        out.extend(x.row(i).iter().map(|&v| to_byte(v)));
    }
    out
}

fn to_byte(v: f64) -> u8 {
    (v * 255.0).round().clamp(0.0, 255.0) as u8
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum DatasetKind {
    Mnist,
    Fashion,
    Cifar10,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Split {
    Train,
    Test,
}

impl DatasetKind {
    pub const ALL: [DatasetKind; 3] = [DatasetKind::Mnist, DatasetKind::Fashion, DatasetKind::Cifar10];

    pub fn name(self) -> &'static str {
        match self {
            DatasetKind::Mnist => "mnist",
            DatasetKind::Fashion => "fashion",
            DatasetKind::Cifar10 => "cifar10",
        }
    }

    /// Files expected under the data directory for a split.
    pub fn files(self, split: Split) -> Vec<&'static str> {
        match (self, split) {
            (DatasetKind::Cifar10, Split::Train) => vec![
                "data_batch_1.bin",
                "data_batch_2.bin",
                "data_batch_3.bin",
                "data_batch_4.bin",
                "data_batch_5.bin",
            ],
            (DatasetKind::Cifar10, Split::Test) => vec!["test_batch.bin"],
            (_, Split::Train) => vec!["train-images-idx3-ubyte", "train-labels-idx1-ubyte"],
            (_, Split::Test) => vec!["t10k-images-idx3-ubyte", "t10k-labels-idx1-ubyte"],
        }
    }

    /// Loads one split from `dir`. CIFAR-10 batches may also sit in the
    /// `cifar-10-batches-bin` subdirectory the official archive unpacks to.
    pub fn load(self, dir: impl AsRef<Path>, split: Split) -> Result<Dataset> {
        let dir = dir.as_ref();
        match self {
            DatasetKind::Cifar10 => {
                let nested = dir.join("cifar-10-batches-bin");
                let base = if nested.is_dir() { nested } else { dir.to_path_buf() };
                let paths: Vec<PathBuf> = self.files(split).iter().map(|f| base.join(f)).collect();
                load_cifar10(&paths)
            }
            _ => {
                let files = self.files(split);
                load_idx_dataset(dir.join(files[0]), dir.join(files[1]), 10, self.name())
            }
        }
    }
}

impl fmt::Display for DatasetKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for DatasetKind {
    type Err = DataError;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "mnist" => Ok(DatasetKind::Mnist),
            "fashion" | "fashion-mnist" | "fashion_mnist" => Ok(DatasetKind::Fashion),
            "cifar10" | "cifar-10" => Ok(DatasetKind::Cifar10),
            _ => Err(DataError::UnknownDataset(s.to_string())),
        }
    }
}
