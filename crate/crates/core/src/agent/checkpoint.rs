//! Versioned binary checkpoints for training state.
//!
//! A checkpoint is a single little-endian file carrying the policy and
//! value networks, the state normalizer, progress counters, and a hash of
//! the generating configuration so stale checkpoints are rejected instead
//! of silently resumed. Writes go through a temporary sibling file and an
//! atomic rename, so an interrupted save never corrupts an existing
//! checkpoint.
//!
//! # Byte layout (version 1)
//!
//! All integers and floats are little-endian. Dense weight matrices are
//! serialized row-major.
//!
//! ```text
//! offset  size          field
//! 0       8             magic bytes "HYRISCKP"
//! 8       4             format version, u32 (currently 1)
//! 12      8             config hash, u64 (FNV-1a of the canonical config)
//! 20      8             environment steps collected, u64
//! 28      8             training iterations completed, u64
//! 36      4             normalizer dimension D, u32
//! 40      8             normalizer sample count, u64
//! 48      8·D           normalizer running means, f64
//! 48+8D   8·D           normalizer M₂ (squared-deviation sums), f64
//! then    4             action head count H, u32
//! then    4·H           per-head cardinalities, u32
//! then    net block     policy network
//! then    net block     value network (always 1 output)
//! EOF                   exactly at the end of the value block
//! ```
//!
//! A net block is:
//!
//! ```text
//! 4    input dimension I, u32
//! 4    hidden dimension Hd, u32
//! 4    output dimension O, u32
//! 8·Hd·I   first-layer weights, row-major f64
//! 8·Hd     first-layer bias, f64
//! 8·O·Hd   output-layer weights, row-major f64
//! 8·O      output-layer bias, f64
//! ```
//!
//! Trailing bytes after the value block are an error, as is any truncation;
//! every load therefore reads the whole file or fails.

use std::fs;
use std::path::Path;

use nalgebra::{DMatrix, DVector};

use super::net::Dense;
use super::normalizer::Normalizer;
use super::policy::{ActionLayout, PolicyNet, ValueNet};
use super::AgentError;

/// File signature.
pub const MAGIC: [u8; 8] = *b"HYRISCKP";
/// Current format version.
pub const VERSION: u32 = 1;

/// 64-bit FNV-1a hash, used to fingerprint the canonical configuration
/// text a checkpoint was trained under.
pub fn fnv1a_64(bytes: &[u8]) -> u64 {
    let mut hash = 0xcbf2_9ce4_8422_2325u64;
    for &b in bytes {
        hash ^= b as u64;
        hash = hash.wrapping_mul(0x0000_0100_0000_01b3);
    }
    hash
}

/// Complete resumable training state.
#[derive(Debug, Clone)]
pub struct Checkpoint {
    /// FNV-1a hash of the canonical configuration text.
    pub config_hash: u64,
    /// Environment steps collected so far.
    pub env_steps: u64,
    /// Training iterations completed so far.
    pub iterations: u64,
    /// State normalizer.
    pub normalizer: Normalizer,
    /// Policy network with its head layout.
    pub policy: PolicyNet,
    /// Value network.
    pub value: ValueNet,
}

impl Checkpoint {
    /// Serializes to `path` via a temporary file and atomic rename.
    pub fn save(&self, path: &Path) -> Result<(), AgentError> {
        let mut buf = Vec::with_capacity(self.encoded_len());
        buf.extend_from_slice(&MAGIC);
        put_u32(&mut buf, VERSION);
        put_u64(&mut buf, self.config_hash);
        put_u64(&mut buf, self.env_steps);
        put_u64(&mut buf, self.iterations);

        put_u32(&mut buf, cast_u32(self.normalizer.dim(), "normalizer dimension")?);
        put_u64(&mut buf, self.normalizer.count());
        for &v in self.normalizer.mean() {
            put_f64(&mut buf, v);
        }
        for &v in self.normalizer.m2() {
            put_f64(&mut buf, v);
        }

        let sizes = self.policy.layout().head_sizes();
        put_u32(&mut buf, cast_u32(sizes.len(), "head count")?);
        for &s in sizes {
            put_u32(&mut buf, cast_u32(s, "head size")?);
        }

        put_dense(&mut buf, &self.policy.net)?;
        put_dense(&mut buf, &self.value.net)?;

        let tmp = path.with_extension("tmp");
        fs::write(&tmp, &buf)?;
        fs::rename(&tmp, path)?;
        Ok(())
    }

    /// Loads a checkpoint. When `expected_hash` is given, a differing
    /// stored hash is an error — resuming under a changed configuration
    /// must be an explicit decision, not an accident.
    pub fn load(path: &Path, expected_hash: Option<u64>) -> Result<Self, AgentError> {
        let bytes = fs::read(path)?;
        let mut r = Reader { bytes: &bytes, pos: 0 };

        let magic = r.take(8)?;
        if magic != MAGIC {
            return Err(AgentError::BadCheckpoint(format!(
                "bad magic {:02x?}; not a checkpoint file",
                &magic[..8.min(magic.len())]
            )));
        }
        let version = r.u32()?;
        if version != VERSION {
            return Err(AgentError::BadCheckpoint(format!(
                "unsupported checkpoint version {version} (this build reads {VERSION})"
            )));
        }
        let config_hash = r.u64()?;
        if let Some(expected) = expected_hash {
            if expected != config_hash {
                return Err(AgentError::ConfigHashMismatch { expected, found: config_hash });
            }
        }
        let env_steps = r.u64()?;
        let iterations = r.u64()?;

        let dim = r.u32()? as usize;
        let count = r.u64()?;
        let mean = r.f64s(dim)?;
        let m2 = r.f64s(dim)?;
        let normalizer = Normalizer::from_parts(mean, m2, count)?;

        let heads = r.u32()? as usize;
        let mut sizes = Vec::with_capacity(heads);
        for _ in 0..heads {
            let s = r.u32()? as usize;
            if s == 0 {
                return Err(AgentError::BadCheckpoint("zero-size action head".into()));
            }
            sizes.push(s);
        }
        let layout = ActionLayout::new(sizes);

        let policy_net = read_dense(&mut r)?;
        let value_net = read_dense(&mut r)?;
        if r.pos != bytes.len() {
            return Err(AgentError::BadCheckpoint(format!(
                "{} trailing bytes after the value network",
                bytes.len() - r.pos
            )));
        }
        if value_net.output_dim() != 1 {
            return Err(AgentError::BadCheckpoint(format!(
                "value network output must be scalar, got {}",
                value_net.output_dim()
            )));
        }
        if policy_net.input_dim() != normalizer.dim() || value_net.input_dim() != normalizer.dim() {
            return Err(AgentError::BadCheckpoint(
                "network input dimensions disagree with the normalizer".into(),
            ));
        }
        if !policy_net.is_finite() || !value_net.is_finite() {
            return Err(AgentError::BadCheckpoint("non-finite network parameter".into()));
        }

        Ok(Self {
            config_hash,
            env_steps,
            iterations,
            normalizer,
            policy: PolicyNet::from_parts(policy_net, layout)?,
            value: ValueNet { net: value_net },
        })
    }

    fn encoded_len(&self) -> usize {
        let dense_len =
            |d: &Dense| 12 + 8 * (d.w1.len() + d.b1.len() + d.w2.len() + d.b2.len());
        36 + 4 + 8 + 16 * self.normalizer.dim()
            + 4
            + 4 * self.policy.layout().num_heads()
            + dense_len(&self.policy.net)
            + dense_len(&self.value.net)
    }
}

fn cast_u32(v: usize, what: &str) -> Result<u32, AgentError> {
    u32::try_from(v)
        .map_err(|_| AgentError::BadCheckpoint(format!("{what} {v} exceeds the u32 format field")))
}

fn put_u32(buf: &mut Vec<u8>, v: u32) {
    buf.extend_from_slice(&v.to_le_bytes());
}

fn put_u64(buf: &mut Vec<u8>, v: u64) {
    buf.extend_from_slice(&v.to_le_bytes());
}

fn put_f64(buf: &mut Vec<u8>, v: f64) {
    buf.extend_from_slice(&v.to_le_bytes());
}

fn put_dense(buf: &mut Vec<u8>, net: &Dense) -> Result<(), AgentError> {
    put_u32(buf, cast_u32(net.input_dim(), "net input")?);
    put_u32(buf, cast_u32(net.hidden_dim(), "net hidden")?);
    put_u32(buf, cast_u32(net.output_dim(), "net output")?);
    for i in 0..net.w1.nrows() {
        for j in 0..net.w1.ncols() {
            put_f64(buf, net.w1[(i, j)]);
        }
    }
    for &v in net.b1.iter() {
        put_f64(buf, v);
    }
    for i in 0..net.w2.nrows() {
        for j in 0..net.w2.ncols() {
            put_f64(buf, net.w2[(i, j)]);
        }
    }
    for &v in net.b2.iter() {
        put_f64(buf, v);
    }
    Ok(())
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], AgentError> {
        if self.pos + n > self.bytes.len() {
            return Err(AgentError::BadCheckpoint(format!(
                "truncated file: wanted {n} bytes at offset {}, have {}",
                self.pos,
                self.bytes.len() - self.pos
            )));
        }
        let out = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(out)
    }

    fn u32(&mut self) -> Result<u32, AgentError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64, AgentError> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn f64(&mut self) -> Result<f64, AgentError> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn f64s(&mut self, n: usize) -> Result<Vec<f64>, AgentError> {
        let mut out = Vec::with_capacity(n);
        for _ in 0..n {
            out.push(self.f64()?);
        }
        Ok(out)
    }
}

fn read_dense(r: &mut Reader) -> Result<Dense, AgentError> {
    let input = r.u32()? as usize;
    let hidden = r.u32()? as usize;
    let output = r.u32()? as usize;
    let w1 = read_matrix(r, hidden, input)?;
    let b1 = DVector::from_vec(r.f64s(hidden)?);
    let w2 = read_matrix(r, output, hidden)?;
    let b2 = DVector::from_vec(r.f64s(output)?);
    Ok(Dense { w1, b1, w2, b2 })
}

fn read_matrix(r: &mut Reader, rows: usize, cols: usize) -> Result<DMatrix<f64>, AgentError> {
    let data = r.f64s(rows * cols)?;
    Ok(DMatrix::from_row_slice(rows, cols, &data))
}
