//! Binary checkpoint format.
//!
//! Layout (all integers little-endian):
//! `"TFCK"` · version u32 · config digest u64 · tensor count u64 · entries.
//! Each entry: name length u32 · UTF-8 name · dtype code u8 · rank u32 ·
//! dims u64 each · raw little-endian scalars. Optimizer state travels as
//! ordinary tensors under the reserved `opt/` prefix.

use crate::model::{ModelConfig, TfcModel};
use crate::tensor::{Dtype, Scalar, Tensor};
use crate::train::Adam;
use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::Path;
use thiserror::Error;

pub const CHECKPOINT_MAGIC: &[u8; 4] = b"TFCK";
pub const CHECKPOINT_VERSION: u32 = 1;
const OPT_PREFIX: &str = "opt/";

#[derive(Debug, Error)]
pub enum CheckpointError {
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("not a checkpoint (bad magic)")]
    BadMagic,
    #[error("unsupported checkpoint version {0}")]
    BadVersion(u32),
    #[error("config digest mismatch: checkpoint {found:016x}, expected {expected:016x}")]
    DigestMismatch { expected: u64, found: u64 },
    #[error("checkpoint truncated while reading {0}")]
    Truncated(String),
    #[error("unknown dtype code {0}")]
    BadDtype(u8),
    #[error("checkpoint stores {found:?} tensors but the model uses {expected:?}")]
    DtypeMismatch { expected: Dtype, found: Dtype },
    #[error("tensor {0} missing from checkpoint")]
    MissingTensor(String),
    #[error("tensor {0} not present in the model")]
    UnknownTensor(String),
    #[error("tensor {name}: checkpoint shape {found:?}, model shape {expected:?}")]
    ShapeMismatch {
        name: String,
        expected: Vec<usize>,
        found: Vec<usize>,
    },
    #[error("checkpoint has optimizer state but none was requested")]
    UnexpectedOptimizerState,
}

type Result<T> = std::result::Result<T, CheckpointError>;

/// FNV-1a over a canonical rendering of the architecture, so checkpoints
/// refuse to load into a differently shaped model.
pub fn config_digest(config: &ModelConfig) -> u64 {
    let mut text = format!(
        "name={};d={};window={};in={};spatial={:?};fc={:?};",
        config.name,
        config.d,
        config.window_len,
        config.in_features,
        config.spatial,
        config.block.fc_features,
    );
    for c in &config.block.cells {
        text.push_str(&format!(
            "cell={},{},{},{},{:?},{:?};",
            c.n1, c.n2, c.s1, c.s2, c.k1, c.k2
        ));
    }
    let i = &config.incriminator;
    text.push_str(&format!(
        "incr={},{},{},{},{},{};cls={:?};",
        i.r, i.t, i.n_hidden, i.primed, i.s, i.out_features, config.classifier
    ));
    let mut hash: u64 = 0xcbf29ce484222325;
    for b in text.bytes() {
        hash ^= b as u64;
        hash = hash.wrapping_mul(0x100000001b3);
    }
    hash
}

fn write_tensor<S: Scalar>(out: &mut Vec<u8>, name: &str, tensor: &Tensor<S>) {
    out.extend_from_slice(&(name.len() as u32).to_le_bytes());
    out.extend_from_slice(name.as_bytes());
    out.push(S::DTYPE.code());
    out.extend_from_slice(&(tensor.shape().len() as u32).to_le_bytes());
    for &d in tensor.shape() {
        out.extend_from_slice(&(d as u64).to_le_bytes());
    }
    for &v in tensor.data() {
        out.extend_from_slice(&v.to_le_bytes_vec());
    }
}

pub fn save_checkpoint<S: Scalar>(
    path: &Path,
    config: &ModelConfig,
    model: &mut TfcModel<S>,
    optimizer: Option<&Adam<S>>,
) -> Result<()> {
    let mut body = Vec::new();
    let mut count: u64 = 0;
    model.visit_params(&mut |name, value, _| {
        write_tensor(&mut body, name, value);
        count += 1;
    });
    if let Some(opt) = optimizer {
        let step = Tensor::<S>::full(&[1], S::from_f64(opt.step_count() as f64));
        write_tensor(&mut body, &format!("{OPT_PREFIX}step"), &step);
        count += 1;
        for (name, m, v) in opt.export_state() {
            write_tensor(&mut body, &format!("{OPT_PREFIX}m/{name}"), &m);
            write_tensor(&mut body, &format!("{OPT_PREFIX}v/{name}"), &v);
            count += 2;
        }
    }

    let mut file = fs::File::create(path)?;
    file.write_all(CHECKPOINT_MAGIC)?;
    file.write_all(&CHECKPOINT_VERSION.to_le_bytes())?;
    file.write_all(&config_digest(config).to_le_bytes())?;
    file.write_all(&count.to_le_bytes())?;
    file.write_all(&body)?;
    Ok(())
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        if self.pos + n > self.bytes.len() {
            return Err(CheckpointError::Truncated(what.to_string()));
        }
        let slice = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(slice)
    }

    fn u32(&mut self, what: &str) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4, what)?.try_into().unwrap()))
    }

    fn u64(&mut self, what: &str) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8, what)?.try_into().unwrap()))
    }
}

fn read_tensors<S: Scalar>(bytes: &[u8]) -> Result<BTreeMap<String, Tensor<S>>> {
    let mut r = Reader { bytes, pos: 0 };
    if r.take(4, "magic")? != CHECKPOINT_MAGIC {
        return Err(CheckpointError::BadMagic);
    }
    let version = r.u32("version")?;
    if version != CHECKPOINT_VERSION {
        return Err(CheckpointError::BadVersion(version));
    }
    // Digest is validated by the caller against its config.
    let _digest = r.u64("digest")?;
    let count = r.u64("tensor count")?;
    let mut out = BTreeMap::new();
    for _ in 0..count {
        let name_len = r.u32("name length")? as usize;
        let name = std::str::from_utf8(r.take(name_len, "name")?)
            .map_err(|_| CheckpointError::Truncated("name".into()))?
            .to_string();
        let code = r.take(1, "dtype")?[0];
        let dtype = Dtype::from_code(code).ok_or(CheckpointError::BadDtype(code))?;
        if dtype != S::DTYPE {
            return Err(CheckpointError::DtypeMismatch {
                expected: S::DTYPE,
                found: dtype,
            });
        }
        let rank = r.u32("rank")? as usize;
        let mut shape = Vec::with_capacity(rank);
        for _ in 0..rank {
            shape.push(r.u64("dim")? as usize);
        }
        let count: usize = shape.iter().product();
        let width = S::DTYPE.size_of();
        let raw = r.take(count * width, &name)?;
        let mut tensor = Tensor::<S>::zeros(&shape);
        for (dst, chunk) in tensor.data_mut().iter_mut().zip(raw.chunks_exact(width)) {
            *dst = S::from_le_slice(chunk);
        }
        out.insert(name, tensor);
    }
    Ok(out)
}

fn checkpoint_digest(bytes: &[u8]) -> Result<u64> {
    let mut r = Reader { bytes, pos: 0 };
    if r.take(4, "magic")? != CHECKPOINT_MAGIC {
        return Err(CheckpointError::BadMagic);
    }
    let version = r.u32("version")?;
    if version != CHECKPOINT_VERSION {
        return Err(CheckpointError::BadVersion(version));
    }
    r.u64("digest")
}

/// Restores every model tensor (bit-exactly) and, when requested, the
/// optimizer moments. Any name the model does not declare is rejected.
pub fn load_checkpoint<S: Scalar>(
    path: &Path,
    config: &ModelConfig,
    model: &mut TfcModel<S>,
    mut optimizer: Option<&mut Adam<S>>,
) -> Result<()> {
    let bytes = fs::read(path)?;
    let found = checkpoint_digest(&bytes)?;
    let expected = config_digest(config);
    if found != expected {
        return Err(CheckpointError::DigestMismatch { expected, found });
    }
    let mut tensors = read_tensors::<S>(&bytes)?;

    let mut failure: Option<CheckpointError> = None;
    model.visit_params(&mut |name, value, _| {
        if failure.is_some() {
            return;
        }
        match tensors.remove(name) {
            None => failure = Some(CheckpointError::MissingTensor(name.to_string())),
            Some(t) if t.shape() != value.shape() => {
                failure = Some(CheckpointError::ShapeMismatch {
                    name: name.to_string(),
                    expected: value.shape().to_vec(),
                    found: t.shape().to_vec(),
                })
            }
            Some(t) => value.data_mut().copy_from_slice(t.data()),
        }
    });
    if let Some(err) = failure {
        return Err(err);
    }

    let has_opt_state = tensors.keys().any(|k| k.starts_with(OPT_PREFIX));
    if let Some(opt) = optimizer.as_deref_mut() {
        if has_opt_state {
            let step = tensors
                .remove(&format!("{OPT_PREFIX}step"))
                .ok_or_else(|| CheckpointError::MissingTensor(format!("{OPT_PREFIX}step")))?
                .data()[0]
                .as_f64() as u64;
            let mut entries = Vec::new();
            let names: Vec<String> = tensors
                .keys()
                .filter_map(|k| k.strip_prefix(&format!("{OPT_PREFIX}m/")))
                .map(str::to_string)
                .collect();
            for name in names {
                let m = tensors.remove(&format!("{OPT_PREFIX}m/{name}")).unwrap();
                let v = tensors
                    .remove(&format!("{OPT_PREFIX}v/{name}"))
                    .ok_or_else(|| {
                        CheckpointError::MissingTensor(format!("{OPT_PREFIX}v/{name}"))
                    })?;
                entries.push((name, m, v));
            }
            opt.import_state(step, entries);
        }
    } else if has_opt_state {
        // Loading for evaluation: optimizer state is present but unused.
        tensors.retain(|k, _| !k.starts_with(OPT_PREFIX));
    }
    if let Some(name) = tensors.keys().next() {
        return Err(CheckpointError::UnknownTensor(name.clone()));
    }
    Ok(())
}
