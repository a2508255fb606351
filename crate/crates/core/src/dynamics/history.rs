use std::fmt::Write as _;
use std::path::Path;

use super::NewmarkState;
use crate::{Error, Result};

pub const SFRH_MAGIC: &[u8; 4] = b"SFRH";
pub const SFRH_VERSION: u32 = 1;
const HEADER_LEN: usize = 4 + 4 + 4 + 4 + 8;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Quantity {
    Displacement,
    Velocity,
    Acceleration,
}

/// Floor response histories, story-major: `u[s * n_steps + t]`.
#[derive(Debug, Clone, PartialEq)]
pub struct ResponseHistory {
    dt: f64,
    n_stories: usize,
    n_steps: usize,
    u: Vec<f64>,
    v: Vec<f64>,
    a: Vec<f64>,
}

impl ResponseHistory {
    pub fn zeros(n_stories: usize, n_steps: usize, dt: f64) -> Self {
        let len = n_stories * n_steps;
        Self {
            dt,
            n_stories,
            n_steps,
            u: vec![0.0; len],
            v: vec![0.0; len],
            a: vec![0.0; len],
        }
    }

    pub fn from_parts(
        dt: f64,
        n_stories: usize,
        n_steps: usize,
        u: Vec<f64>,
        v: Vec<f64>,
        a: Vec<f64>,
    ) -> Result<Self> {
        let len = n_stories * n_steps;
        if u.len() != len || v.len() != len || a.len() != len {
            return Err(Error::Format(format!(
                "history arrays must have {len} entries, got {}/{}/{}",
                u.len(),
                v.len(),
                a.len()
            )));
        }
        let h = Self {
            dt,
            n_stories,
            n_steps,
            u,
            v,
            a,
        };
        if !h.is_finite() {
            return Err(Error::Format("history contains non-finite values".into()));
        }
        Ok(h)
    }

    pub(super) fn record(&mut self, t: usize, s: &NewmarkState, ag: f64) {
        let n = self.n_steps;
        for i in 0..self.n_stories {
            self.u[i * n + t] = s.u[i];
            self.v[i * n + t] = s.v[i];
            self.a[i * n + t] = s.a[i] + ag;
        }
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn n_stories(&self) -> usize {
        self.n_stories
    }

    pub fn n_steps(&self) -> usize {
        self.n_steps
    }

    pub fn get(&self, q: Quantity) -> &[f64] {
        match q {
            Quantity::Displacement => &self.u,
            Quantity::Velocity => &self.v,
            Quantity::Acceleration => &self.a,
        }
    }

    pub fn story(&self, q: Quantity, s: usize) -> &[f64] {
        &self.get(q)[s * self.n_steps..(s + 1) * self.n_steps]
    }

    pub fn u(&self) -> &[f64] {
        &self.u
    }

    pub fn v(&self) -> &[f64] {
        &self.v
    }

    pub fn a(&self) -> &[f64] {
        &self.a
    }

    pub fn is_finite(&self) -> bool {
        self.u.iter().chain(&self.v).chain(&self.a).all(|x| x.is_finite())
    }

    pub fn peak(&self, q: Quantity, s: usize) -> f64 {
        self.story(q, s).iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    /// Encodes the binary block: magic, version, sizes, dt, then u, v, a as
    /// little-endian f32.
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(HEADER_LEN + 12 * self.u.len());
        out.extend_from_slice(SFRH_MAGIC);
        out.extend_from_slice(&SFRH_VERSION.to_le_bytes());
        out.extend_from_slice(&(self.n_stories as u32).to_le_bytes());
        out.extend_from_slice(&(self.n_steps as u32).to_le_bytes());
        out.extend_from_slice(&self.dt.to_le_bytes());
        for arr in [&self.u, &self.v, &self.a] {
            for x in arr.iter() {
                out.extend_from_slice(&(*x as f32).to_le_bytes());
            }
        }
        out
    }

    /// Decodes one block from the start of `bytes`, returning it and the
    /// number of bytes consumed.
    pub fn from_bytes(bytes: &[u8]) -> Result<(Self, usize)> {
        let fmt = |m: String| Error::Format(format!("response block: {m}"));
        if bytes.len() < HEADER_LEN {
            return Err(fmt(format!("truncated header ({} bytes)", bytes.len())));
        }
        if &bytes[..4] != SFRH_MAGIC {
            return Err(fmt("bad magic".into()));
        }
        let word = |o: usize| u32::from_le_bytes(bytes[o..o + 4].try_into().unwrap());
        let version = word(4);
        if version != SFRH_VERSION {
            return Err(fmt(format!("unsupported version {version}")));
        }
        let n_stories = word(8) as usize;
        let n_steps = word(12) as usize;
        let dt = f64::from_le_bytes(bytes[16..24].try_into().unwrap());
        let len = n_stories * n_steps;
        let total = HEADER_LEN + 12 * len;
        if bytes.len() < total {
            return Err(fmt(format!(
                "truncated payload: need {total} bytes, have {}",
                bytes.len()
            )));
        }
        let read = |k: usize| -> Vec<f64> {
            let start = HEADER_LEN + 4 * len * k;
            bytes[start..start + 4 * len]
                .chunks_exact(4)
                .map(|c| f32::from_le_bytes(c.try_into().unwrap()) as f64)
                .collect()
        };
        let h = Self::from_parts(dt, n_stories, n_steps, read(0), read(1), read(2))?;
        Ok((h, total))
    }

    pub fn write_sfrh(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_bytes()).map_err(|e| Error::io(path, e))
    }

    pub fn read_sfrh(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        Ok(Self::from_bytes(&bytes)?.0)
    }

    /// One row per step: time, then one column per story.
    pub fn to_csv(&self, q: Quantity) -> String {
        let mut out = String::from("time_s");
        for s in 0..self.n_stories {
            let _ = write!(out, ",story_{}", s + 1);
        }
        out.push('\n');
        let data = self.get(q);
        for t in 0..self.n_steps {
            let _ = write!(out, "{}", t as f64 * self.dt);
            for s in 0..self.n_stories {
                let _ = write!(out, ",{:e}", data[s * self.n_steps + t]);
            }
            out.push('\n');
        }
        out
    }
}

/// Inter-story drift ratios, story-major like the history arrays.
pub fn interstory_drift(r: &ResponseHistory, floor_height: f64) -> Vec<f64> {
    let n = r.n_steps;
    let u = &r.u;
    let mut out = vec![0.0; u.len()];
    for s in 0..r.n_stories {
        for t in 0..n {
            let below = if s == 0 { 0.0 } else { u[(s - 1) * n + t] };
            out[s * n + t] = (u[s * n + t] - below) / floor_height;
        }
    }
    out
}
