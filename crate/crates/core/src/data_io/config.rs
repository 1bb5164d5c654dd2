use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Whether class embeddings are treated as spherically symmetric (`s = p`) or not (`s = 1`).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Symmetry {
    #[default]
    One,
    Dim,
}

impl Symmetry {
    /// Numeric `s` for embedding dimension `p`.
    pub fn value(self, p: usize) -> f64 {
        match self {
            Symmetry::One => 1.0,
            Symmetry::Dim => p as f64,
        }
    }
}

impl FromStr for Symmetry {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "1" | "one" => Ok(Symmetry::One),
            "p" | "dim" => Ok(Symmetry::Dim),
            other => Err(Error::InvalidConfig(format!(
                "symmetry must be 1 or p, got {other:?}"
            ))),
        }
    }
}

/// Every numeric knob of a run. Loaded from a flat `key = value` file and
/// then overridden by command-line flags.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub seed: u64,
    pub k: usize,
    pub n: usize,
    pub n_test: usize,
    pub episodes: usize,
    /// Confidence parameter δ of the bounds.
    pub delta: f64,
    /// Soft-margin Δ; `None` lets each bound pick its own.
    pub margin: Option<f64>,
    pub phi: f64,
    pub alpha: f64,
    /// Input-norm bound B; `None` derives it from the data.
    pub b: Option<f64>,
    pub symmetry: Symmetry,
    pub trials: usize,
    pub exact_cap: f64,
    pub eig_tol: f64,
    pub rank_tol: f64,
    /// Theorem-3 margin convention: `false` puts Λ/√n on the plug-in loss, `true` on Δ itself.
    pub theorem3_literal: bool,
    /// Network depth and complexity, when no weights file is given.
    pub q: Option<usize>,
    pub cf: Option<f64>,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            k: 5,
            n: 1,
            n_test: 100,
            episodes: 100,
            delta: 0.01,
            margin: None,
            phi: 0.5,
            alpha: 1.0,
            b: None,
            symmetry: Symmetry::One,
            trials: 10_000,
            exact_cap: 1e8,
            eig_tol: 1e-12,
            rank_tol: 1e-10,
            theorem3_literal: false,
            q: None,
            cf: None,
        }
    }
}

/// Splits `key = value` lines; `#` starts a comment.
pub fn parse_kv(text: &str) -> Result<Vec<(String, String)>> {
    let mut out = Vec::new();
    for (no, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| Error::InvalidConfig(format!("line {}: expected key=value", no + 1)))?;
        out.push((k.trim().to_string(), v.trim().to_string()));
    }
    Ok(out)
}

pub(crate) fn parse_value<T: FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .parse()
        .map_err(|_| Error::InvalidConfig(format!("{key}: cannot parse {value:?}")))
}

impl RunConfig {
    pub fn from_file(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| match e.kind() {
            std::io::ErrorKind::NotFound => Error::FileNotFound(path.to_path_buf()),
            _ => e.into(),
        })?;
        Self::parse(&text)
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut cfg = Self::default();
        for (k, v) in parse_kv(text)? {
            cfg.set(&k, &v)?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    /// Sets one key. Unknown keys are rejected.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        match key {
            "seed" => self.seed = parse_value(key, value)?,
            "k" => self.k = parse_value(key, value)?,
            "n" => self.n = parse_value(key, value)?,
            "n_test" => self.n_test = parse_value(key, value)?,
            "episodes" => self.episodes = parse_value(key, value)?,
            "delta" => self.delta = parse_value(key, value)?,
            "margin" => self.margin = Some(parse_value(key, value)?),
            "phi" => self.phi = parse_value(key, value)?,
            "alpha" => self.alpha = parse_value(key, value)?,
            "b" | "B" => self.b = Some(parse_value(key, value)?),
            "symmetry" | "s" => self.symmetry = value.parse()?,
            "trials" => self.trials = parse_value(key, value)?,
            "exact_cap" => self.exact_cap = parse_value(key, value)?,
            "eig_tol" => self.eig_tol = parse_value(key, value)?,
            "rank_tol" => self.rank_tol = parse_value(key, value)?,
            "theorem3_literal" => self.theorem3_literal = parse_value(key, value)?,
            "q" => self.q = Some(parse_value(key, value)?),
            "cf" => self.cf = Some(parse_value(key, value)?),
            other => return Err(Error::InvalidConfig(format!("unknown key {other:?}"))),
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        let counts = [
            ("k", self.k),
            ("n", self.n),
            ("n_test", self.n_test),
            ("episodes", self.episodes),
            ("trials", self.trials),
        ];
        for (name, v) in counts {
            if v < 1 {
                return Err(Error::InvalidConfig(format!("{name} must be >= 1")));
            }
        }
        if !(self.delta > 0.0 && self.delta < 1.0) {
            return Err(Error::InvalidConfig(format!(
                "delta must be in (0,1), got {}",
                self.delta
            )));
        }
        if let Some(m) = self.margin {
            if !(m >= 0.0) {
                return Err(Error::InvalidConfig(format!(
                    "margin must be >= 0, got {m}"
                )));
            }
        }
        if let Some(b) = self.b {
            if !(b > 0.0) {
                return Err(Error::InvalidConfig(format!("B must be > 0, got {b}")));
            }
        }
        if !(self.phi > 0.0) {
            return Err(Error::InvalidConfig(format!(
                "phi must be > 0, got {}",
                self.phi
            )));
        }
        if !(self.alpha >= 0.0) {
            return Err(Error::InvalidConfig(format!(
                "alpha must be >= 0, got {}",
                self.alpha
            )));
        }
        if self.q == Some(0) {
            return Err(Error::InvalidConfig("q must be >= 1".into()));
        }
        Ok(())
    }
}
