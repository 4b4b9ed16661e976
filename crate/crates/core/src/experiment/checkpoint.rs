//! Binary checkpoints. All integers and reals are little-endian.
//!
//! ```text
//! "CRLU" | version u32 | seed u64 | epoch u64 | config: str
//! params: u32 count, then records
//! optimizer: u8 tag (0 none, 1 sgd, 2 adam) and its state
//! str    = u32 byte length, UTF-8 bytes
//! record = name: str | rank u32 | dims u64×rank | payload f64×len
//! ```

use std::path::Path;

use crate::error::{Error, Result};
use crate::nn::Params;
use crate::optim::{Adam, Optimizer, Sgd};
use crate::tensor::Tensor;

pub const MAGIC: &[u8; 4] = b"CRLU";
pub const VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub seed: u64,
    pub epoch: u64,
    /// Canonical experiment configuration text.
    pub config: String,
    pub params: Params,
    pub optimizer: Option<Optimizer>,
}

struct Writer(Vec<u8>);

impl Writer {
    fn u8(&mut self, v: u8) {
        self.0.push(v);
    }
    fn u32(&mut self, v: u32) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }
    fn u64(&mut self, v: u64) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }
    fn f64(&mut self, v: f64) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }
    fn str(&mut self, s: &str) {
        self.u32(s.len() as u32);
        self.0.extend_from_slice(s.as_bytes());
    }
    fn record(&mut self, name: &str, t: &Tensor) {
        self.str(name);
        self.u32(t.rank() as u32);
        for &d in t.shape() {
            self.u64(d as u64);
        }
        for &v in t.data() {
            self.f64(v);
        }
    }
    fn records(&mut self, names: &[String], ts: &[Tensor]) {
        self.u32(ts.len() as u32);
        for (n, t) in names.iter().zip(ts) {
            self.record(n, t);
        }
    }
}

struct Reader<'a> {
    buf: &'a [u8],
    at: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.at.checked_add(n).filter(|&e| e <= self.buf.len());
        let end = end.ok_or_else(|| Error::Format(format!("checkpoint truncated at byte {}", self.at)))?;
        let s = &self.buf[self.at..end];
        self.at = end;
        Ok(s)
    }
    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
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
    fn str(&mut self) -> Result<String> {
        let n = self.u32()? as usize;
        String::from_utf8(self.take(n)?.to_vec()).map_err(|_| Error::Format("checkpoint string is not UTF-8".into()))
    }
    fn record(&mut self) -> Result<(String, Tensor)> {
        let name = self.str()?;
        let rank = self.u32()? as usize;
        let dims = (0..rank)
            .map(|_| self.u64().map(|d| d as usize))
            .collect::<Result<Vec<_>>>()?;
        let len = dims
            .iter()
            .try_fold(1usize, |a, &d| a.checked_mul(d))
            .filter(|&l| l.checked_mul(8).is_some_and(|b| b <= self.buf.len() - self.at))
            .ok_or_else(|| Error::Format(format!("record {name:?} has an impossible size")))?;
        let data = self.take(len * 8)?.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect();
        Ok((name, Tensor::new(dims, data)?))
    }
    fn records(&mut self) -> Result<(Vec<String>, Vec<Tensor>)> {
        let n = self.u32()?;
        let mut names = Vec::new();
        let mut ts = Vec::new();
        for _ in 0..n {
            let (a, b) = self.record()?;
            names.push(a);
            ts.push(b);
        }
        Ok((names, ts))
    }
}

fn slot_names(prefix: &str, n: usize) -> Vec<String> {
    (0..n).map(|i| format!("{prefix}.{i}")).collect()
}

impl Checkpoint {
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut w = Writer(Vec::new());
        w.0.extend_from_slice(MAGIC);
        w.u32(VERSION);
        w.u64(self.seed);
        w.u64(self.epoch);
        w.str(&self.config);
        w.records(&self.params.names, &self.params.tensors);
        match &self.optimizer {
            None => w.u8(0),
            Some(Optimizer::Sgd(o)) => {
                w.u8(1);
                for v in [o.lr, o.momentum, o.weight_decay] {
                    w.f64(v);
                }
                w.records(&slot_names("velocity", o.velocity.len()), &o.velocity);
            }
            Some(Optimizer::Adam(o)) => {
                w.u8(2);
                for v in [o.lr, o.beta1, o.beta2, o.eps, o.weight_decay] {
                    w.f64(v);
                }
                w.u64(o.step);
                w.records(&slot_names("m", o.m.len()), &o.m);
                w.records(&slot_names("v", o.v.len()), &o.v);
            }
        }
        w.0
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader { buf: bytes, at: 0 };
        if r.take(4)? != MAGIC {
            return Err(Error::Format("not a CRLU checkpoint".into()));
        }
        let version = r.u32()?;
        if version != VERSION {
            return Err(Error::Format(format!("unsupported checkpoint version {version}")));
        }
        let seed = r.u64()?;
        let epoch = r.u64()?;
        let config = r.str()?;
        let (names, tensors) = r.records()?;
        let optimizer = match r.u8()? {
            0 => None,
            1 => {
                let (lr, momentum, weight_decay) = (r.f64()?, r.f64()?, r.f64()?);
                Some(Optimizer::Sgd(Sgd {
                    lr,
                    momentum,
                    weight_decay,
                    velocity: r.records()?.1,
                }))
            }
            2 => {
                let (lr, beta1, beta2, eps, weight_decay) = (r.f64()?, r.f64()?, r.f64()?, r.f64()?, r.f64()?);
                let step = r.u64()?;
                let m = r.records()?.1;
                let v = r.records()?.1;
                Some(Optimizer::Adam(Adam {
                    lr,
                    beta1,
                    beta2,
                    eps,
                    weight_decay,
                    step,
                    m,
                    v,
                }))
            }
            t => return Err(Error::Format(format!("unknown optimizer tag {t}"))),
        };
        if r.at != bytes.len() {
            return Err(Error::Format(format!("{} trailing bytes after checkpoint", bytes.len() - r.at)));
        }
        Ok(Checkpoint {
            seed,
            epoch,
            config,
            params: Params { names, tensors },
            optimizer,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_bytes()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_bytes(&std::fs::read(path).map_err(|e| Error::io(path, e))?)
    }
}
