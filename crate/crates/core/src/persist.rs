//! Binary model files.
//!
//! Layout, all integers and floats little-endian:
//!
//! ```text
//! "VDNN" | version u32 | input_dim u64 | d u64 | classes u64 | seed u64
//!        | solver tag u32 | solver param f64 | payload
//! ```
//!
//! Tags 0, 1, 2 are the analytic readouts (SVD, LU, Cholesky); the payload is
//! `W₂` (`d × classes`, row-major). `W₁` and `b₁` are not stored: they are
//! regenerated from the seed. Tag 3 is the SGD baseline: `d` is the hidden
//! width, the param is the learning rate, and the payload is
//! `epochs u64 | batch u64 | W₁ | b₁ | W₂ | b₂`.
//!
//! Timings are not stored, so equal models always encode to equal bytes.

use std::path::{Path, PathBuf};

use thiserror::Error;

use crate::baseline::{MlpHyper, MlpModel, MlpParams};
use crate::elm::{self, ElmError, VoodooModel};
use crate::linalg::{Matrix, SolverKind};

pub const MAGIC: [u8; 4] = *b"VDNN";
pub const VERSION: u32 = 1;
pub const TAG_SVD: u32 = 0;
pub const TAG_LU: u32 = 1;
pub const TAG_CHOLESKY: u32 = 2;
pub const TAG_SGD_MLP: u32 = 3;
pub const HEADER_LEN: usize = 4 + 4 + 8 * 4 + 4 + 8;
/// Largest `input_dim × d` projection that [`SavedModel::into_model`] will regenerate.
pub const MAX_PROJECTION_ENTRIES: u64 = 1 << 28;

#[derive(Debug, Error)]
pub enum PersistError {
    #[error("cannot access {}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("not a model file: magic {0:?}")]
    BadMagic([u8; 4]),
    #[error("unsupported model file version {0}")]
    UnsupportedVersion(u32),
    #[error("unknown solver tag {0}")]
    UnknownSolverTag(u32),
    #[error("truncated model file: expected {expected} bytes, found {found}")]
    Truncated { expected: u64, found: usize },
    #[error("{extra} unexpected bytes after the payload")]
    TrailingBytes { extra: usize },
    #[error("header sizes overflow")]
    SizeOverflow,
    #[error("invalid header: {0}")]
    InvalidHeader(String),
    #[error("model weights contain NaN or infinity")]
    NonFinite,
    #[error(transparent)]
    Elm(#[from] ElmError),
}

pub type Result<T> = std::result::Result<T, PersistError>;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ModelHeader {
    pub version: u32,
    pub input_dim: u64,
    pub d: u64,
    pub num_classes: u64,
    pub seed: u64,
    pub tag: u32,
    pub param: f64,
}

/// A decoded file whose projection has not been regenerated yet.
#[derive(Debug, Clone, PartialEq)]
pub enum SavedModel {
    Voodoo {
        header: ModelHeader,
        solver: SolverKind,
        w2: Matrix,
    },
    Mlp {
        header: ModelHeader,
        hyper: MlpHyper,
        params: MlpParams,
    },
}

#[derive(Debug, Clone)]
pub enum LoadedModel {
    Voodoo(VoodooModel),
    Mlp(MlpModel),
}

impl LoadedModel {
    /// The final weight matrix (`W₂` for both families).
    pub fn readout(&self) -> &Matrix {
        match self {
            LoadedModel::Voodoo(m) => m.w2(),
            LoadedModel::Mlp(m) => &m.params().w2,
        }
    }

    pub fn family(&self) -> &'static str {
        match self {
            LoadedModel::Voodoo(_) => "voodoo",
            LoadedModel::Mlp(_) => "sgd",
        }
    }
}

fn solver_tag(kind: SolverKind) -> u32 {
    match kind {
        SolverKind::SvdPinv { .. } => TAG_SVD,
        SolverKind::NormalLu { .. } => TAG_LU,
        SolverKind::NormalCholesky { .. } => TAG_CHOLESKY,
    }
}

fn put_header(out: &mut Vec<u8>, h: &ModelHeader) {
    out.extend_from_slice(&MAGIC);
    out.extend(h.version.to_le_bytes());
    for v in [h.input_dim, h.d, h.num_classes, h.seed] {
        out.extend(v.to_le_bytes());
    }
    out.extend(h.tag.to_le_bytes());
    out.extend(h.param.to_le_bytes());
}

fn put_f64s(out: &mut Vec<u8>, values: &[f64]) {
    for v in values {
        out.extend(v.to_le_bytes());
    }
}

pub fn encode_voodoo(model: &VoodooModel) -> Vec<u8> {
    let layer = model.layer();
    let solver = model.solver_used();
    let header = ModelHeader {
        version: VERSION,
        input_dim: layer.input_dim() as u64,
        d: layer.dim() as u64,
        num_classes: model.num_classes() as u64,
        seed: layer.seed(),
        tag: solver_tag(solver),
        param: solver.param(),
    };
    let mut out = Vec::with_capacity(HEADER_LEN + 8 * model.w2().as_slice().len());
    put_header(&mut out, &header);
    put_f64s(&mut out, model.w2().as_slice());
    out
}

pub fn encode_mlp(model: &MlpModel) -> Vec<u8> {
    let p = model.params();
    let hyper = model.hyper();
    let header = ModelHeader {
        version: VERSION,
        input_dim: p.input_dim() as u64,
        d: p.hidden() as u64,
        num_classes: p.num_classes() as u64,
        seed: hyper.seed,
        tag: TAG_SGD_MLP,
        param: hyper.learning_rate,
    };
    let mut out = Vec::new();
    put_header(&mut out, &header);
    out.extend((hyper.epochs as u64).to_le_bytes());
    out.extend((hyper.batch_size as u64).to_le_bytes());
    put_f64s(&mut out, p.w1.as_slice());
    put_f64s(&mut out, &p.b1);
    put_f64s(&mut out, p.w2.as_slice());
    put_f64s(&mut out, &p.b2);
    out
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).ok_or(PersistError::SizeOverflow)?;
        let slice = self.bytes.get(self.pos..end).ok_or(PersistError::Truncated {
            expected: end as u64,
            found: self.bytes.len(),
        })?;
        self.pos = end;
        Ok(slice)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn remaining(&self) -> usize {
        self.bytes.len() - self.pos
    }

    fn f64s(&mut self, n: usize) -> Result<Vec<f64>> {
        let raw = self.take(n.checked_mul(8).ok_or(PersistError::SizeOverflow)?)?;
        let values: Vec<f64> = raw
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect();
        if values.iter().any(|v| !v.is_finite()) {
            return Err(PersistError::NonFinite);
        }
        Ok(values)
    }
}

fn to_usize(v: u64) -> Result<usize> {
    usize::try_from(v).map_err(|_| PersistError::SizeOverflow)
}

fn checked_len(dims: &[u64]) -> Result<u64> {
    dims.iter()
        .try_fold(1u64, |acc, &d| acc.checked_mul(d))
        .ok_or(PersistError::SizeOverflow)
}

/// Decodes bytes without regenerating the projection. Sizes are validated
/// against the byte length before anything is allocated.
pub fn parse_model(bytes: &[u8]) -> Result<SavedModel> {
    let mut r = Reader { bytes, pos: 0 };
    let magic: [u8; 4] = r.take(4)?.try_into().unwrap();
    if magic != MAGIC {
        return Err(PersistError::BadMagic(magic));
    }
    let version = r.u32()?;
    if version != VERSION {
        return Err(PersistError::UnsupportedVersion(version));
    }
    let header = ModelHeader {
        version,
        input_dim: r.u64()?,
        d: r.u64()?,
        num_classes: r.u64()?,
        seed: r.u64()?,
        tag: r.u32()?,
        param: r.f64()?,
    };
    if header.input_dim == 0 || header.d == 0 || header.num_classes == 0 {
        return Err(PersistError::InvalidHeader(format!(
            "input_dim, d and classes must be >= 1, got {}, {}, {}",
            header.input_dim, header.d, header.num_classes
        )));
    }

    let payload_f64s = match header.tag {
        TAG_SVD | TAG_LU | TAG_CHOLESKY => checked_len(&[header.d, header.num_classes])?,
        TAG_SGD_MLP => {
            let w1 = checked_len(&[header.input_dim, header.d])?;
            let w2 = checked_len(&[header.d, header.num_classes])?;
            [w1, header.d, w2, header.num_classes]
                .iter()
                .try_fold(0u64, |acc, &v| acc.checked_add(v))
                .ok_or(PersistError::SizeOverflow)?
        }
        other => return Err(PersistError::UnknownSolverTag(other)),
    };
    let extra = if header.tag == TAG_SGD_MLP { 16 } else { 0 };
    let expected = payload_f64s
        .checked_mul(8)
        .and_then(|v| v.checked_add(extra))
        .ok_or(PersistError::SizeOverflow)?;
    let available = r.remaining() as u64;
    if available < expected {
        return Err(PersistError::Truncated {
            expected: HEADER_LEN as u64 + expected,
            found: bytes.len(),
        });
    }
    if available > expected {
        return Err(PersistError::TrailingBytes {
            extra: (available - expected) as usize,
        });
    }

    let d = to_usize(header.d)?;
    let c = to_usize(header.num_classes)?;
    let saved = if header.tag == TAG_SGD_MLP {
        let input_dim = to_usize(header.input_dim)?;
        let epochs = to_usize(r.u64()?)?;
        let batch_size = to_usize(r.u64()?)?;
        let hyper = MlpHyper {
            hidden: d,
            epochs,
            learning_rate: header.param,
            batch_size,
            seed: header.seed,
        };
        hyper
            .validate()
            .map_err(|e| PersistError::InvalidHeader(e.to_string()))?;
        let w1 = Matrix::from_vec(input_dim, d, r.f64s(input_dim * d)?).expect("sized");
        let b1 = r.f64s(d)?;
        let w2 = Matrix::from_vec(d, c, r.f64s(d * c)?).expect("sized");
        let b2 = r.f64s(c)?;
        SavedModel::Mlp {
            header,
            hyper,
            params: MlpParams { w1, b1, w2, b2 },
        }
    } else {
        let base = match header.tag {
            TAG_SVD => SolverKind::svd(),
            TAG_LU => SolverKind::lu(),
            _ => SolverKind::cholesky(),
        };
        let solver = base.with_param(header.param);
        solver
            .validate()
            .map_err(|e| PersistError::InvalidHeader(e.to_string()))?;
        let w2 = Matrix::from_vec(d, c, r.f64s(d * c)?).expect("sized");
        SavedModel::Voodoo { header, solver, w2 }
    };
    debug_assert_eq!(r.remaining(), 0);
    Ok(saved)
}

impl SavedModel {
    pub fn header(&self) -> &ModelHeader {
        match self {
            SavedModel::Voodoo { header, .. } | SavedModel::Mlp { header, .. } => header,
        }
    }

    /// Builds the runnable model, regenerating `W₁, b₁` for analytic models.
    pub fn into_model(self) -> Result<LoadedModel> {
        match self {
            SavedModel::Voodoo { header, solver, w2 } => {
                if checked_len(&[header.input_dim, header.d])? > MAX_PROJECTION_ENTRIES {
                    return Err(PersistError::InvalidHeader(format!(
                        "projection {} x {} exceeds the regeneration limit",
                        header.input_dim, header.d
                    )));
                }
                let layer = elm::init_galactic(to_usize(header.input_dim)?, to_usize(header.d)?, header.seed)?;
                Ok(LoadedModel::Voodoo(VoodooModel::from_parts(layer, w2, solver)?))
            }
            SavedModel::Mlp { hyper, params, .. } => Ok(LoadedModel::Mlp(MlpModel::from_parts(params, hyper))),
        }
    }
}

pub fn decode_model(bytes: &[u8]) -> Result<LoadedModel> {
    parse_model(bytes)?.into_model()
}

pub fn save_bytes(path: impl AsRef<Path>, bytes: &[u8]) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, bytes).map_err(|source| PersistError::Io {
        path: path.to_path_buf(),
        source,
    })
}

pub fn load_model(path: impl AsRef<Path>) -> Result<LoadedModel> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|source| PersistError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    decode_model(&bytes)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::GaussianRng;
    use proptest::prelude::*;

    fn toy_voodoo(kind: SolverKind) -> VoodooModel {
        let mut rng = GaussianRng::new(3);
        let x = Matrix::from_fn(12, 5, |_, _| rng.next_uniform());
        let labels: Vec<usize> = (0..12).map(|i| i % 3).collect();
        elm::train(&x, &labels, 3, 8, 77, kind).unwrap()
    }

    fn toy_mlp() -> MlpModel {
        let mut rng = GaussianRng::new(4);
        let hyper = MlpHyper {
            hidden: 4,
            epochs: 2,
            learning_rate: 0.05,
            batch_size: 8,
            seed: 9,
        };
        MlpModel::from_parts(MlpParams::he_init(3, 4, 2, &mut rng), hyper)
    }

    #[test]
    fn header_layout_is_byte_exact() {
        let model = toy_voodoo(SolverKind::svd());
        let bytes = encode_voodoo(&model);
        assert_eq!(&bytes[..4], b"VDNN");
        assert_eq!(u32::from_le_bytes(bytes[4..8].try_into().unwrap()), 1);
        assert_eq!(u64::from_le_bytes(bytes[8..16].try_into().unwrap()), 5);
        assert_eq!(u64::from_le_bytes(bytes[16..24].try_into().unwrap()), 8);
        assert_eq!(u64::from_le_bytes(bytes[24..32].try_into().unwrap()), 3);
        assert_eq!(u64::from_le_bytes(bytes[32..40].try_into().unwrap()), 77);
        assert_eq!(u32::from_le_bytes(bytes[40..44].try_into().unwrap()), TAG_SVD);
        assert_eq!(f64::from_le_bytes(bytes[44..52].try_into().unwrap()), 1e-12);
        assert_eq!(bytes.len(), HEADER_LEN + 8 * 8 * 3);
        let first = f64::from_le_bytes(bytes[52..60].try_into().unwrap());
        assert_eq!(first, model.w2().get(0, 0));
    }

    #[test]
    fn voodoo_round_trip_regenerates_projection() {
        for kind in [SolverKind::svd(), SolverKind::lu(), SolverKind::cholesky()] {
            let model = toy_voodoo(kind);
            let LoadedModel::Voodoo(back) = decode_model(&encode_voodoo(&model)).unwrap() else {
                panic!("wrong family");
            };
            assert_eq!(back.layer(), model.layer());
            assert_eq!(back.w2(), model.w2());
            assert_eq!(back.solver_used(), model.solver_used());
            assert_eq!(encode_voodoo(&back), encode_voodoo(&model));
        }
    }

    #[test]
    fn mlp_round_trip() {
        let model = toy_mlp();
        let bytes = encode_mlp(&model);
        let LoadedModel::Mlp(back) = decode_model(&bytes).unwrap() else {
            panic!("wrong family");
        };
        assert_eq!(back.params(), model.params());
        assert_eq!(back.hyper(), model.hyper());
        assert_eq!(encode_mlp(&back), bytes);
    }

    #[test]
    fn corrupt_files_rejected() {
        let bytes = encode_voodoo(&toy_voodoo(SolverKind::svd()));
        let mut bad = bytes.clone();
        bad[0] = b'X';
        assert!(matches!(parse_model(&bad), Err(PersistError::BadMagic(_))));
        let mut bad = bytes.clone();
        bad[4] = 9;
        assert!(matches!(parse_model(&bad), Err(PersistError::UnsupportedVersion(9))));
        let mut bad = bytes.clone();
        bad[40] = 7;
        assert!(matches!(parse_model(&bad), Err(PersistError::UnknownSolverTag(7))));
        assert!(matches!(parse_model(&bytes[..bytes.len() - 1]), Err(PersistError::Truncated { .. })));
        let mut long = bytes.clone();
        long.push(0);
        assert!(matches!(parse_model(&long), Err(PersistError::TrailingBytes { extra: 1 })));
        let mut nan = bytes.clone();
        nan[52..60].copy_from_slice(&f64::NAN.to_le_bytes());
        assert!(matches!(parse_model(&nan), Err(PersistError::NonFinite)));
        let mut neg = bytes.clone();
        neg[44..52].copy_from_slice(&(-1.0f64).to_le_bytes());
        assert!(matches!(parse_model(&neg), Err(PersistError::InvalidHeader(_))));
        let mut huge = bytes;
        huge[16..24].copy_from_slice(&u64::MAX.to_le_bytes());
        assert!(matches!(parse_model(&huge), Err(PersistError::SizeOverflow)));
    }

    #[test]
    fn missing_file_names_the_path() {
        let err = load_model("/nonexistent/model.vdnn").unwrap_err();
        assert!(err.to_string().contains("/nonexistent/model.vdnn"));
    }

    proptest! {
        #[test]
        fn parser_never_panics(bytes in proptest::collection::vec(any::<u8>(), 0..128)) {
            let _ = parse_model(&bytes);
        }

        #[test]
        fn header_fuzz_after_valid_magic(tail in proptest::collection::vec(any::<u8>(), 0..96)) {
            let mut bytes = b"VDNN\x01\0\0\0".to_vec();
            bytes.extend(tail);
            if let Ok(saved) = parse_model(&bytes) {
                let h = *saved.header();
                prop_assert!(h.d >= 1 && h.num_classes >= 1);
            }
        }
    }
}
