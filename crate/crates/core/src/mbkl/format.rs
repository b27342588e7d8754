//! Versioned little-endian model container, plus a JSON rendering.
//!
//! ```text
//! "MBKL" u32:version u8:kind u32:d u32:K' u32:C
//! C x (u32:len utf8)                 class names
//! f64:c1 f64:c2
//! u8:has_norm [d x f64 center, d x f64 scale]
//! K' x (u32:feature f64:threshold)   stump table
//! K' x f64                           theta
//! C x (u32:len len x f64, f64:bias)  per-class weights and bias
//! ```
//!
//! The linear baseline uses the same layout with `K' = 0` and per-class
//! weights over the `d` features.

use std::fs;
use std::io::{Read, Write};
use std::path::Path;

use serde::Serialize;

use super::{BankKind, LinearOvr, MbklModel, Prediction, StumpBank};
use crate::data::NormalizationParams;
use crate::error::{MbklError, Result};
use crate::linsvm::LinearModel;
use crate::matrix::Matrix;
use crate::stumps::{FeatureSource, Stump};

const MAGIC: &[u8; 4] = b"MBKL";
const VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum ModelKind {
    Mbkl,
    Theta1,
    L1Bits,
    Linear,
}

impl ModelKind {
    fn byte(self) -> u8 {
        match self {
            ModelKind::Mbkl => 0,
            ModelKind::Theta1 => 1,
            ModelKind::L1Bits => 2,
            ModelKind::Linear => 3,
        }
    }

    fn from_byte(b: u8) -> Result<Self> {
        Ok(match b {
            0 => ModelKind::Mbkl,
            1 => ModelKind::Theta1,
            2 => ModelKind::L1Bits,
            3 => ModelKind::Linear,
            other => return Err(MbklError::Format(format!("unknown model kind {other}"))),
        })
    }
}

impl std::fmt::Display for ModelKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            ModelKind::Mbkl => "mbkl",
            ModelKind::Theta1 => "theta1",
            ModelKind::L1Bits => "l1bits",
            ModelKind::Linear => "linear",
        })
    }
}

/// Any trained classifier the CLI can persist.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(untagged)]
pub enum Model {
    Bank(MbklModel),
    Linear(LinearOvr),
}

impl Model {
    pub fn kind(&self) -> ModelKind {
        match self {
            Model::Bank(m) => match m.kind {
                BankKind::Mbkl => ModelKind::Mbkl,
                BankKind::Theta1 => ModelKind::Theta1,
                BankKind::L1Bits => ModelKind::L1Bits,
            },
            Model::Linear(_) => ModelKind::Linear,
        }
    }

    pub fn n_features(&self) -> usize {
        match self {
            Model::Bank(m) => m.n_features,
            Model::Linear(m) => m.n_features,
        }
    }

    pub fn class_names(&self) -> &[String] {
        match self {
            Model::Bank(m) => &m.class_names,
            Model::Linear(m) => &m.class_names,
        }
    }

    /// Number of active stumps; zero for the linear baseline.
    pub fn n_active(&self) -> usize {
        match self {
            Model::Bank(m) => m.bank.len(),
            Model::Linear(_) => 0,
        }
    }

    pub fn predict<S: FeatureSource + ?Sized>(&self, x: &S) -> Result<Prediction> {
        match self {
            Model::Bank(m) => m.predict(x),
            Model::Linear(m) => m.predict(x),
        }
    }

    pub fn predict_matrix(&self, x: &Matrix) -> Result<Vec<usize>> {
        match self {
            Model::Bank(m) => m.predict_matrix(x),
            Model::Linear(m) => (0..x.rows()).map(|i| m.predict(x.row(i)).map(|p| p.class)).collect(),
        }
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut w = Writer(Vec::new());
        w.0.extend_from_slice(MAGIC);
        w.u32(VERSION);
        w.0.push(self.kind().byte());
        let (d, names, norm, c1, c2) = match self {
            Model::Bank(m) => (m.n_features, &m.class_names, &m.normalization, m.c1, m.c2),
            Model::Linear(m) => (m.n_features, &m.class_names, &m.normalization, 0.0, m.c),
        };
        w.u32(d as u32);
        w.u32(self.n_active() as u32);
        w.u32(names.len() as u32);
        for n in names {
            w.u32(n.len() as u32);
            w.0.extend_from_slice(n.as_bytes());
        }
        w.f64(c1);
        w.f64(c2);
        match norm {
            Some(p) => {
                w.0.push(1);
                p.center.iter().for_each(|&v| w.f64(v));
                p.scale.iter().for_each(|&v| w.f64(v));
            }
            None => w.0.push(0),
        }
        match self {
            Model::Bank(m) => {
                for s in &m.bank.stumps {
                    w.u32(s.feature as u32);
                    w.f64(s.threshold);
                }
                m.bank.theta.iter().for_each(|&t| w.f64(t));
                for (wc, &b) in m.weights.iter().zip(&m.biases) {
                    w.f64s(wc);
                    w.f64(b);
                }
            }
            Model::Linear(m) => {
                for lm in &m.models {
                    w.f64s(&lm.weights);
                    w.f64(lm.bias);
                }
            }
        }
        w.0
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Model> {
        let mut r = Reader { buf: bytes, pos: 0 };
        if r.take(4)? != MAGIC {
            return Err(MbklError::Format("bad magic".into()));
        }
        let version = r.u32()?;
        if version != VERSION {
            return Err(MbklError::Format(format!("unsupported version {version}")));
        }
        let kind = ModelKind::from_byte(r.take(1)?[0])?;
        let d = r.u32()? as usize;
        let k = r.u32()? as usize;
        let n_classes = r.u32()? as usize;
        let mut class_names = Vec::with_capacity(n_classes.min(1 << 16));
        for _ in 0..n_classes {
            let len = r.u32()? as usize;
            let s = std::str::from_utf8(r.take(len)?).map_err(|e| MbklError::Format(e.to_string()))?;
            class_names.push(s.to_string());
        }
        let c1 = r.f64()?;
        let c2 = r.f64()?;
        let normalization = match r.take(1)?[0] {
            0 => None,
            1 => {
                let center = r.f64_n(d)?;
                let scale = r.f64_n(d)?;
                Some(NormalizationParams { center, scale })
            }
            other => return Err(MbklError::Format(format!("bad normalization flag {other}"))),
        };
        let model = if kind == ModelKind::Linear {
            let mut models = Vec::with_capacity(n_classes);
            for _ in 0..n_classes {
                let weights = r.f64s()?;
                if weights.len() != d {
                    return Err(MbklError::Format("linear weight length does not match d".into()));
                }
                models.push(LinearModel {
                    weights,
                    bias: r.f64()?,
                    objective: f64::NAN,
                    converged: true,
                });
            }
            Model::Linear(LinearOvr {
                n_features: d,
                class_names,
                normalization,
                models,
                c: c2,
            })
        } else {
            let mut stumps = Vec::with_capacity(k.min(1 << 24));
            for _ in 0..k {
                let feature = r.u32()? as usize;
                if feature >= d {
                    return Err(MbklError::Format(format!("stump feature {feature} out of range")));
                }
                stumps.push(Stump::new(feature, r.f64()?));
            }
            let theta = r.f64_n(k)?;
            let bank = StumpBank::new(stumps, theta).map_err(|e| MbklError::Format(e.to_string()))?;
            let mut weights = Vec::with_capacity(n_classes);
            let mut biases = Vec::with_capacity(n_classes);
            for _ in 0..n_classes {
                let wc = r.f64s()?;
                if wc.len() != 2 * k {
                    return Err(MbklError::Format("weight length is not 2 K'".into()));
                }
                weights.push(wc);
                biases.push(r.f64()?);
            }
            Model::Bank(MbklModel {
                kind: match kind {
                    ModelKind::Theta1 => BankKind::Theta1,
                    ModelKind::L1Bits => BankKind::L1Bits,
                    _ => BankKind::Mbkl,
                },
                n_features: d,
                class_names,
                normalization,
                bank,
                weights,
                biases,
                c1,
                c2,
                cuts: Default::default(),
            })
        };
        if r.pos != bytes.len() {
            return Err(MbklError::Format("trailing bytes".into()));
        }
        Ok(model)
    }

    pub fn to_json(&self) -> String {
        #[derive(Serialize)]
        struct Export<'a> {
            model_type: ModelKind,
            #[serde(flatten)]
            model: &'a Model,
        }
        // Serialization of plain structs with finite floats cannot fail.
        serde_json::to_string_pretty(&Export {
            model_type: self.kind(),
            model: self,
        })
        .unwrap_or_default()
    }
}

pub fn save_model(model: &Model, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut f = fs::File::create(path).map_err(|e| MbklError::io(path, e))?;
    f.write_all(&model.to_bytes()).map_err(|e| MbklError::io(path, e))
}

pub fn load_model(path: impl AsRef<Path>) -> Result<Model> {
    let path = path.as_ref();
    let mut bytes = Vec::new();
    fs::File::open(path)
        .and_then(|mut f| f.read_to_end(&mut bytes))
        .map_err(|e| MbklError::io(path, e))?;
    Model::from_bytes(&bytes)
}

struct Writer(Vec<u8>);

impl Writer {
    fn u32(&mut self, v: u32) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }

    fn f64(&mut self, v: f64) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }

    fn f64s(&mut self, v: &[f64]) {
        self.u32(v.len() as u32);
        v.iter().for_each(|&x| self.f64(x));
    }
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.buf.len())
            .ok_or_else(|| MbklError::Format("truncated file".into()))?;
        let s = &self.buf[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        let b = self.take(4)?;
        Ok(u32::from_le_bytes([b[0], b[1], b[2], b[3]]))
    }

    fn f64(&mut self) -> Result<f64> {
        let mut a = [0u8; 8];
        a.copy_from_slice(self.take(8)?);
        Ok(f64::from_le_bytes(a))
    }

    fn f64_n(&mut self, n: usize) -> Result<Vec<f64>> {
        if n.saturating_mul(8) > self.buf.len() - self.pos {
            return Err(MbklError::Format("truncated file".into()));
        }
        (0..n).map(|_| self.f64()).collect()
    }

    fn f64s(&mut self) -> Result<Vec<f64>> {
        let n = self.u32()? as usize;
        self.f64_n(n)
    }
}
