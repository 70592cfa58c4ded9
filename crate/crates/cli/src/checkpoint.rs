//! NADF checkpoints: `NADF1\n`, an ASCII header line
//! `d k m method pe_bands pe_norm hidden layers param_count\n`, then
//! `param_count` little-endian f32 parameters.
//!
//! `pe_norm` is the normalization order, 0 when the encoding is plain. The
//! method `oracle` with `param_count = 0` marks a pseudo-checkpoint that
//! evaluates the exact antiderivative of the configured signal.

use std::io::{Read, Write};
use std::path::Path;

use antideriv_core::{FieldConfig, Method, NeuralField};
use thiserror::Error;

pub const MAGIC: &str = "NADF";
pub const VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum CheckpointError {
    #[error("not a checkpoint")]
    NotACheckpoint,
    #[error("version mismatch: file is version {found}, expected {VERSION}")]
    VersionMismatch { found: String },
    #[error("corrupt header: {0}")]
    CorruptHeader(String),
    #[error("truncated payload: expected {expected} bytes, found {found}")]
    TruncatedPayload { expected: usize, found: usize },
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CheckpointMethod {
    Trained(Method),
    Oracle,
}

impl std::fmt::Display for CheckpointMethod {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CheckpointMethod::Trained(m) => m.fmt(f),
            CheckpointMethod::Oracle => f.write_str("oracle"),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub d: usize,
    pub k: u32,
    pub m: usize,
    pub method: CheckpointMethod,
    pub pe_bands: usize,
    pub pe_norm: u32,
    pub hidden: usize,
    pub layers: usize,
    pub theta: Vec<f32>,
}

impl Checkpoint {
    pub fn from_field(method: Method, k: u32, m: usize, field: &NeuralField) -> Self {
        let c = field.config();
        Self {
            d: c.in_dims,
            k,
            m,
            method: CheckpointMethod::Trained(method),
            pe_bands: c.pe_bands,
            pe_norm: if c.pe_normalized { c.pe_norm_order } else { 0 },
            hidden: c.hidden_width,
            layers: c.hidden_layers,
            theta: field.theta().iter().map(|&t| t as f32).collect(),
        }
    }

    pub fn oracle(d: usize, k: u32, m: usize) -> Self {
        Self { d, k, m, method: CheckpointMethod::Oracle, pe_bands: 0, pe_norm: 0, hidden: 0, layers: 0, theta: Vec::new() }
    }

    pub fn field_config(&self) -> Option<FieldConfig> {
        let CheckpointMethod::Trained(method) = self.method else { return None };
        Some(FieldConfig {
            in_dims: self.d,
            out_dims: method.field_outputs(self.d, self.k, self.m),
            hidden_layers: self.layers,
            hidden_width: self.hidden,
            pe_bands: self.pe_bands,
            pe_normalized: self.pe_norm > 0,
            pe_norm_order: self.pe_norm,
        })
    }

    /// The stored field, widened back to f64. `None` for oracle checkpoints.
    pub fn field(&self) -> Option<antideriv_core::Result<NeuralField>> {
        let cfg = self.field_config()?;
        Some(NeuralField::from_parts(cfg, self.theta.iter().map(|&t| f64::from(t)).collect()))
    }

    pub fn write_to(&self, mut w: impl Write) -> std::io::Result<()> {
        writeln!(w, "{MAGIC}{VERSION}")?;
        writeln!(
            w,
            "{} {} {} {} {} {} {} {} {}",
            self.d,
            self.k,
            self.m,
            self.method,
            self.pe_bands,
            self.pe_norm,
            self.hidden,
            self.layers,
            self.theta.len()
        )?;
        let mut buf = Vec::with_capacity(4 * self.theta.len());
        for t in &self.theta {
            buf.extend_from_slice(&t.to_le_bytes());
        }
        w.write_all(&buf)
    }

    pub fn read_from(mut r: impl Read) -> Result<Self, CheckpointError> {
        let mut bytes = Vec::new();
        r.read_to_end(&mut bytes)?;
        Self::from_bytes(&bytes)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, CheckpointError> {
        if !bytes.starts_with(MAGIC.as_bytes()) {
            return Err(CheckpointError::NotACheckpoint);
        }
        let rest = &bytes[MAGIC.len()..];
        let nl = rest.iter().position(|&b| b == b'\n').ok_or(CheckpointError::NotACheckpoint)?;
        let version = String::from_utf8_lossy(&rest[..nl]).into_owned();
        if version != VERSION.to_string() {
            return Err(CheckpointError::VersionMismatch { found: version });
        }
        let rest = &rest[nl + 1..];
        let nl = rest
            .iter()
            .position(|&b| b == b'\n')
            .ok_or_else(|| CheckpointError::CorruptHeader("missing header line".into()))?;
        let header = std::str::from_utf8(&rest[..nl]).map_err(|_| CheckpointError::CorruptHeader("not ASCII".into()))?;
        let payload = &rest[nl + 1..];
        let f: Vec<&str> = header.split(' ').collect();
        if f.len() != 9 {
            return Err(CheckpointError::CorruptHeader(format!("expected 9 fields, found {}", f.len())));
        }
        fn num<T: std::str::FromStr>(s: &str, what: &str) -> Result<T, CheckpointError> {
            s.parse().map_err(|_| CheckpointError::CorruptHeader(format!("bad {what} `{s}`")))
        }
        let method = match f[3] {
            "oracle" => CheckpointMethod::Oracle,
            s => CheckpointMethod::Trained(
                s.parse().map_err(|_| CheckpointError::CorruptHeader(format!("unknown method `{s}`")))?,
            ),
        };
        let ck = Checkpoint {
            d: num(f[0], "d")?,
            k: num(f[1], "k")?,
            m: num(f[2], "m")?,
            method,
            pe_bands: num(f[4], "pe_bands")?,
            pe_norm: num(f[5], "pe_norm")?,
            hidden: num(f[6], "hidden")?,
            layers: num(f[7], "layers")?,
            theta: Vec::new(),
        };
        let count: usize = num(f[8], "param_count")?;
        let expected_params = match ck.field_config() {
            None => 0,
            Some(cfg) => {
                cfg.validate().map_err(|e| CheckpointError::CorruptHeader(e.to_string()))?;
                cfg.param_count()
            }
        };
        if count != expected_params {
            return Err(CheckpointError::CorruptHeader(format!(
                "param_count {count} does not match the architecture ({expected_params})"
            )));
        }
        let expected = count * 4;
        if payload.len() < expected {
            return Err(CheckpointError::TruncatedPayload { expected, found: payload.len() });
        }
        if payload.len() > expected {
            return Err(CheckpointError::CorruptHeader(format!("{} trailing bytes", payload.len() - expected)));
        }
        let theta =
            payload.chunks_exact(4).map(|c| f32::from_le_bytes(c.try_into().expect("4-byte chunk"))).collect();
        Ok(Checkpoint { theta, ..ck })
    }

    pub fn save(&self, path: &Path) -> std::io::Result<()> {
        let mut buf = Vec::new();
        self.write_to(&mut buf)?;
        std::fs::write(path, buf)
    }

    pub fn load(path: &Path) -> Result<Self, CheckpointError> {
        Self::from_bytes(&std::fs::read(path)?)
    }
}
