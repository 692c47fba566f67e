//! TRMF: the little-endian binary container used for every persisted artifact.
//!
//! ```text
//! magic  "TRMF" (0x54 0x52 0x4D 0x46)
//! u32    version = 1
//! u32    modality code
//! ...    modality payload
//! ```
//!
//! Feature payloads (modalities 0–2) are `u32 dim, u32 count, count×dim f32,
//! count f64 timestamps`.

use std::fs;
use std::io::Write;
use std::path::Path;

use thiserror::Error;

pub const MAGIC: [u8; 4] = *b"TRMF";
pub const VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum TrmfError {
    #[error("bad magic {0:02x?}")]
    BadMagic([u8; 4]),
    #[error("unsupported version {0}")]
    Version(u32),
    #[error("expected modality {expected:?}, found code {found}")]
    Modality { expected: Modality, found: u32 },
    #[error("truncated payload: needed {needed} bytes at offset {offset}")]
    Truncated { offset: usize, needed: usize },
    #[error("{0} trailing bytes after payload")]
    Trailing(usize),
    #[error("malformed payload: {0}")]
    Malformed(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u32)]
pub enum Modality {
    TextFeatures = 0,
    AudioFeatures = 1,
    MotionFeatures = 2,
    Pca = 3,
    Checkpoint = 4,
    Graph = 5,
}

impl Modality {
    pub fn code(self) -> u32 {
        self as u32
    }
}

#[derive(Debug, Default)]
pub struct Writer {
    buf: Vec<u8>,
}

impl Writer {
    pub fn new(modality: Modality) -> Writer {
        let mut w = Writer { buf: Vec::new() };
        w.buf.extend_from_slice(&MAGIC);
        w.u32(VERSION);
        w.u32(modality.code());
        w
    }

    pub fn u32(&mut self, v: u32) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }

    pub fn f32(&mut self, v: f32) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }

    pub fn f64(&mut self, v: f64) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }

    pub fn f32s(&mut self, vs: &[f32]) {
        self.buf.reserve(vs.len() * 4);
        for v in vs {
            self.f32(*v);
        }
    }

    pub fn bytes(&mut self, b: &[u8]) {
        self.buf.extend_from_slice(b);
    }

    pub fn finish(self) -> Vec<u8> {
        self.buf
    }
}

#[derive(Debug)]
pub struct Reader<'a> {
    data: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    /// Checks magic, version and modality, leaving the cursor at the payload.
    pub fn open(data: &'a [u8], expected: Modality) -> Result<Reader<'a>, TrmfError> {
        let mut r = Reader { data, pos: 0 };
        let magic: [u8; 4] = r.take(4)?.try_into().expect("length checked");
        if magic != MAGIC {
            return Err(TrmfError::BadMagic(magic));
        }
        let version = r.u32()?;
        if version != VERSION {
            return Err(TrmfError::Version(version));
        }
        let found = r.u32()?;
        if found != expected.code() {
            return Err(TrmfError::Modality { expected, found });
        }
        Ok(r)
    }

    fn take(&mut self, n: usize) -> Result<&'a [u8], TrmfError> {
        if self.data.len() - self.pos < n {
            return Err(TrmfError::Truncated {
                offset: self.pos,
                needed: n,
            });
        }
        let s = &self.data[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    pub fn u32(&mut self) -> Result<u32, TrmfError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    pub fn f32(&mut self) -> Result<f32, TrmfError> {
        Ok(f32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    pub fn f64(&mut self) -> Result<f64, TrmfError> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }

    pub fn f32s(&mut self, n: usize) -> Result<Vec<f32>, TrmfError> {
        let bytes = self.take(n.checked_mul(4).ok_or_else(|| {
            TrmfError::Malformed(format!("element count {n} overflows"))
        })?)?;
        Ok(bytes
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes")))
            .collect())
    }

    pub fn bytes(&mut self, n: usize) -> Result<&'a [u8], TrmfError> {
        self.take(n)
    }

    pub fn remaining(&self) -> usize {
        self.data.len() - self.pos
    }

    pub fn finish(self) -> Result<(), TrmfError> {
        match self.remaining() {
            0 => Ok(()),
            n => Err(TrmfError::Trailing(n)),
        }
    }
}

/// Per-sentence (or per-clip) feature vectors with timestamps.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureSet {
    pub dim: usize,
    /// Row-major `[count × dim]`.
    pub vectors: Vec<f32>,
    pub timestamps: Vec<f64>,
}

impl FeatureSet {
    pub fn new(dim: usize) -> FeatureSet {
        FeatureSet {
            dim,
            vectors: Vec::new(),
            timestamps: Vec::new(),
        }
    }

    pub fn push(&mut self, v: &[f32], timestamp: f64) {
        assert_eq!(v.len(), self.dim, "feature dimension mismatch");
        self.vectors.extend_from_slice(v);
        self.timestamps.push(timestamp);
    }

    pub fn len(&self) -> usize {
        self.timestamps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.timestamps.is_empty()
    }

    pub fn row(&self, i: usize) -> &[f32] {
        &self.vectors[i * self.dim..(i + 1) * self.dim]
    }

    pub fn encode(&self, modality: Modality) -> Vec<u8> {
        let mut w = Writer::new(modality);
        w.u32(self.dim as u32);
        w.u32(self.len() as u32);
        w.f32s(&self.vectors);
        for t in &self.timestamps {
            w.f64(*t);
        }
        w.finish()
    }

    pub fn decode(data: &[u8], modality: Modality) -> Result<FeatureSet, TrmfError> {
        let mut r = Reader::open(data, modality)?;
        let dim = r.u32()? as usize;
        let count = r.u32()? as usize;
        let vectors = r.f32s(dim.checked_mul(count).ok_or_else(|| {
            TrmfError::Malformed("dim × count overflows".into())
        })?)?;
        let timestamps = (0..count).map(|_| r.f64()).collect::<Result<Vec<_>, _>>()?;
        r.finish()?;
        Ok(FeatureSet {
            dim,
            vectors,
            timestamps,
        })
    }

    pub fn load(path: &Path, modality: Modality) -> Result<FeatureSet, TrmfError> {
        FeatureSet::decode(&fs::read(path)?, modality)
    }

    pub fn save(&self, path: &Path, modality: Modality) -> Result<(), TrmfError> {
        write_atomic(path, &self.encode(modality))
    }
}

/// Writes through a sibling temp file and renames it into place.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<(), TrmfError> {
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".tmp");
    let tmp = std::path::PathBuf::from(tmp);
    {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
    }
    fs::rename(&tmp, path)?;
    Ok(())
}
