//! Binary container for trained networks and analytic oracles.
//!
//! Layout, all integers and reals little-endian:
//!
//! ```text
//! "DCOP" | version u32 | kind u8 | n_dims u32 | dims u32* |
//! embedding tag u8 | embedding width u32 |
//! n_params u64 | params f64* |
//! n_meta u32 | (key_len u32 | key | val_len u32 | val)* |
//! fnv1a-64 of everything before it, u64
//! ```

use std::path::Path;

use crate::error::{Error, Result};
use crate::neural::{Head, MlpModel, TimeEmbedding};

pub const MAGIC: &[u8; 4] = b"DCOP";
pub const VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ArtifactKind {
    Classifier = 0,
    Velocity = 1,
    MixtureTOracle = 2,
    GaussianOracle = 3,
}

impl ArtifactKind {
    fn from_tag(tag: u8) -> Result<Self> {
        Ok(match tag {
            0 => ArtifactKind::Classifier,
            1 => ArtifactKind::Velocity,
            2 => ArtifactKind::MixtureTOracle,
            3 => ArtifactKind::GaussianOracle,
            t => return Err(Error::format(format!("unknown artifact kind {t}"))),
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub kind: ArtifactKind,
    pub dims: Vec<u32>,
    pub embedding: TimeEmbedding,
    pub params: Vec<f64>,
    /// Ordered key/value metadata; values are plain strings.
    pub metadata: Vec<(String, String)>,
}

fn fnv1a(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in bytes {
        h ^= *b as u64;
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

fn embedding_tag(e: TimeEmbedding) -> (u8, u32) {
    match e {
        TimeEmbedding::None => (0, 0),
        TimeEmbedding::ScalarAppend => (1, 1),
        TimeEmbedding::Sinusoidal(w) => (2, w as u32),
    }
}

impl Checkpoint {
    pub fn meta(&self, key: &str) -> Option<&str> {
        self.metadata.iter().find(|(k, _)| k == key).map(|(_, v)| v.as_str())
    }

    pub fn meta_f64(&self, key: &str) -> Result<f64> {
        self.meta(key)
            .ok_or_else(|| Error::format(format!("checkpoint lacks metadata {key:?}")))?
            .parse()
            .map_err(|_| Error::format(format!("metadata {key:?} is not a number")))
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut b = Vec::with_capacity(64 + 8 * self.params.len());
        b.extend_from_slice(MAGIC);
        b.extend_from_slice(&VERSION.to_le_bytes());
        b.push(self.kind as u8);
        b.extend_from_slice(&(self.dims.len() as u32).to_le_bytes());
        for d in &self.dims {
            b.extend_from_slice(&d.to_le_bytes());
        }
        let (tag, width) = embedding_tag(self.embedding);
        b.push(tag);
        b.extend_from_slice(&width.to_le_bytes());
        b.extend_from_slice(&(self.params.len() as u64).to_le_bytes());
        for p in &self.params {
            b.extend_from_slice(&p.to_le_bytes());
        }
        b.extend_from_slice(&(self.metadata.len() as u32).to_le_bytes());
        for (k, v) in &self.metadata {
            for s in [k, v] {
                b.extend_from_slice(&(s.len() as u32).to_le_bytes());
                b.extend_from_slice(s.as_bytes());
            }
        }
        let sum = fnv1a(&b);
        b.extend_from_slice(&sum.to_le_bytes());
        b
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < 8 + MAGIC.len() {
            return Err(Error::format("checkpoint truncated"));
        }
        let (body, tail) = bytes.split_at(bytes.len() - 8);
        let mut r = Reader { buf: body, pos: 0 };
        if r.take(4)? != MAGIC {
            return Err(Error::format("bad checkpoint magic"));
        }
        let version = r.u32()?;
        if version != VERSION {
            return Err(Error::format(format!(
                "checkpoint version {version} unsupported (expected {VERSION})"
            )));
        }
        let want = u64::from_le_bytes(tail.try_into().expect("8 bytes"));
        if fnv1a(body) != want {
            return Err(Error::format("checkpoint checksum mismatch (truncated or corrupt)"));
        }
        let kind = ArtifactKind::from_tag(r.u8()?)?;
        let n_dims = r.u32()? as usize;
        let dims = (0..n_dims).map(|_| r.u32()).collect::<Result<Vec<_>>>()?;
        let tag = r.u8()?;
        let width = r.u32()?;
        let embedding = match tag {
            0 => TimeEmbedding::None,
            1 => TimeEmbedding::ScalarAppend,
            2 => TimeEmbedding::Sinusoidal(width as usize),
            t => return Err(Error::format(format!("unknown embedding tag {t}"))),
        };
        let n_params = r.u64()? as usize;
        if n_params > r.remaining() / 8 {
            return Err(Error::format("parameter count exceeds file size"));
        }
        let params = (0..n_params).map(|_| r.f64()).collect::<Result<Vec<_>>>()?;
        let n_meta = r.u32()? as usize;
        let mut metadata = Vec::with_capacity(n_meta.min(1024));
        for _ in 0..n_meta {
            let k = r.string()?;
            let v = r.string()?;
            metadata.push((k, v));
        }
        if r.remaining() != 0 {
            return Err(Error::format("trailing bytes in checkpoint"));
        }
        Ok(Self {
            kind,
            dims,
            embedding,
            params,
            metadata,
        })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_bytes())?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_bytes(&std::fs::read(path)?)
    }
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn remaining(&self) -> usize {
        self.buf.len() - self.pos
    }

    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.remaining() < n {
            return Err(Error::format("checkpoint truncated"));
        }
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }

    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }

    fn string(&mut self) -> Result<String> {
        let n = self.u32()? as usize;
        String::from_utf8(self.take(n)?.to_vec()).map_err(|_| Error::format("metadata is not UTF-8"))
    }
}

impl MlpModel {
    pub fn to_checkpoint(&self, metadata: Vec<(String, String)>) -> Checkpoint {
        Checkpoint {
            kind: match self.head() {
                Head::SoftmaxClasses(_) => ArtifactKind::Classifier,
                Head::Velocity(_) => ArtifactKind::Velocity,
            },
            dims: self.layer_dims().iter().map(|&d| d as u32).collect(),
            embedding: self.time_embedding(),
            params: self.params().to_vec(),
            metadata,
        }
    }

    pub fn from_checkpoint(ck: &Checkpoint) -> Result<Self> {
        let dims: Vec<usize> = ck.dims.iter().map(|&d| d as usize).collect();
        let out = *dims
            .last()
            .ok_or_else(|| Error::format("checkpoint has no layer dims"))?;
        let head = match ck.kind {
            ArtifactKind::Classifier => Head::SoftmaxClasses(out),
            ArtifactKind::Velocity => Head::Velocity(out),
            k => return Err(Error::format(format!("checkpoint holds {k:?}, not a network"))),
        };
        MlpModel::from_parts(dims, ck.params.clone(), head, ck.embedding)
            .map_err(|e| Error::format(format!("inconsistent checkpoint: {e}")))
    }
}

pub fn save_checkpoint(model: &MlpModel, metadata: Vec<(String, String)>, path: impl AsRef<Path>) -> Result<()> {
    model.to_checkpoint(metadata).save(path)
}

pub fn load_checkpoint(path: impl AsRef<Path>) -> Result<(MlpModel, Checkpoint)> {
    let ck = Checkpoint::load(path)?;
    Ok((MlpModel::from_checkpoint(&ck)?, ck))
}
