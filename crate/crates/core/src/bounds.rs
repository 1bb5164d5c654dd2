//! Closed-form transfer-error bounds with per-term breakdowns.
//!
//! All logarithms are natural. `⌈C(f)⌉` is applied wherever the network norm
//! enters a complexity term. Nothing is clamped: totals above 1 are reported
//! as they are and flagged `vacuous`.

use std::f64::consts::{LN_2, PI};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::metrics::PairwiseReport;

/// Pairwise statistics for one ordered pair of source classes.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PairStat {
    pub i: usize,
    pub j: usize,
    pub lambda_ij: f64,
    pub v_ij: f64,
    pub v_ji: f64,
}

/// Builds the ordered-pair table from a pairwise report. Fails if any CDNV is undefined.
pub fn pairs_from_report(r: &PairwiseReport) -> Result<Vec<PairStat>> {
    r.pairs
        .iter()
        .map(|e| {
            let v_ij = e.cdnv.ok_or_else(|| {
                Error::UndefinedCdnv(r.class_ids[e.i].clone(), r.class_ids[e.j].clone())
            })?;
            let v_ji = r.pair(e.j, e.i).cdnv.ok_or_else(|| {
                Error::UndefinedCdnv(r.class_ids[e.j].clone(), r.class_ids[e.i].clone())
            })?;
            Ok(PairStat {
                i: e.i,
                j: e.j,
                lambda_ij: e.lambda,
                v_ij,
                v_ji,
            })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundInputs {
    /// Target task width.
    pub k: usize,
    /// Shots per class.
    pub n: usize,
    /// Source samples per class.
    pub m: usize,
    /// Number of source classes.
    pub l: usize,
    /// Embedding dimension.
    pub p: usize,
    /// Network depth.
    pub q: usize,
    /// Input-norm bound.
    pub b: f64,
    /// Network complexity `C(f)`; the bounds use its ceiling.
    pub cf: f64,
    /// Confidence parameter.
    pub delta: f64,
    /// Minimum pairwise distance of source class means.
    pub lambda: f64,
    pub phi: f64,
    /// `s = p` under spherical symmetry, else 1.
    pub s: f64,
    pub avg_cdnv: f64,
    /// `Avg E_{φΛ}` over ordered source pairs.
    pub avg_margin_error_phi: Option<f64>,
    pub pairs: Vec<PairStat>,
}

impl Default for BoundInputs {
    fn default() -> Self {
        Self {
            k: 5,
            n: 1,
            m: 100,
            l: 10,
            p: 1,
            q: 1,
            b: 1.0,
            cf: 1.0,
            delta: 0.01,
            lambda: 1.0,
            phi: 0.5,
            s: 1.0,
            avg_cdnv: 0.0,
            avg_margin_error_phi: None,
            pairs: Vec::new(),
        }
    }
}

impl BoundInputs {
    pub fn kappa(&self) -> f64 {
        self.m as f64 / (self.m - self.n) as f64
    }

    fn ceil_c(&self) -> f64 {
        self.cf.ceil()
    }

    fn log_pq(&self) -> f64 {
        self.q as f64 * LN_2 + (self.p as f64).ln()
    }

    fn require(&self, checks: &[(bool, String)]) -> Result<()> {
        let bad: Vec<&str> = checks
            .iter()
            .filter(|c| !c.0)
            .map(|c| c.1.as_str())
            .collect();
        if bad.is_empty() {
            Ok(())
        } else {
            Err(Error::PreconditionViolated(bad.join("; ")))
        }
    }

    fn check_common(&self) -> Result<()> {
        self.require(&[
            (self.k >= 2, format!("k >= 2 (k={})", self.k)),
            (self.l >= 2, format!("l >= 2 (l={})", self.l)),
            (self.p >= 1, format!("p >= 1 (p={})", self.p)),
            (self.q >= 1, format!("q >= 1 (q={})", self.q)),
            (self.b > 0.0, format!("B > 0 (B={})", self.b)),
            (
                self.cf >= 0.0 && self.cf.is_finite(),
                format!("C(f) >= 0 (C(f)={})", self.cf),
            ),
            (
                self.delta > 0.0 && self.delta < 1.0,
                format!("0 < delta < 1 (delta={})", self.delta),
            ),
        ])
    }

    fn check_sampling(&self) -> Result<()> {
        let (n, m) = (self.n, self.m);
        self.require(&[
            (n >= 1, format!("n >= 1 (n={n})")),
            (n * n <= m, format!("n <= sqrt(m) (n={n}, m={m})")),
            (m > n, format!("m > n (n={n}, m={m})")),
        ])
    }

    fn check_lambda(&self) -> Result<()> {
        self.require(&[(
            self.lambda > 0.0 && self.lambda.is_finite(),
            format!("Lambda > 0 (Lambda={})", self.lambda),
        )])
    }

    fn check_margin(margin: f64) -> Result<()> {
        if margin > 0.0 && margin.is_finite() {
            Ok(())
        } else {
            Err(Error::PreconditionViolated(format!(
                "margin > 0 (margin={margin})"
            )))
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Term {
    pub name: String,
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundReport {
    pub name: String,
    /// Margin Δ used by the complexity terms, if any.
    pub margin: Option<f64>,
    /// Plug-in value for the loss term, if any.
    pub plug_in: Option<f64>,
    pub terms: Vec<Term>,
    pub total: f64,
    pub vacuous: bool,
    pub notes: Vec<String>,
}

impl BoundReport {
    fn new(name: &str, terms: Vec<(&str, f64)>) -> Self {
        let terms: Vec<Term> = terms
            .into_iter()
            .map(|(n, v)| Term {
                name: n.into(),
                value: v,
            })
            .collect();
        let total = terms.iter().map(|t| t.value).sum();
        Self {
            name: name.into(),
            margin: None,
            plug_in: None,
            terms,
            total,
            vacuous: total >= 1.0,
            notes: Vec::new(),
        }
    }

    pub fn term(&self, name: &str) -> Option<f64> {
        self.terms.iter().find(|t| t.name == name).map(|t| t.value)
    }

    fn with_margin(mut self, margin: f64, plug_in: f64) -> Self {
        self.margin = Some(margin);
        self.plug_in = Some(plug_in);
        self
    }

    fn note(mut self, s: impl Into<String>) -> Self {
        self.notes.push(s.into());
        self
    }
}

/// `Avg ℓ_{4Δ}` plug-in of the composition used by the CDNV theorem.
pub fn cdnv_plug_in(n: usize, avg_cdnv: f64) -> f64 {
    (12.0 + 212.0 / n as f64) * avg_cdnv
}

/// Theorem 1 with explicit constants, written out directly (not via [`compose_transfer_bound`]).
pub fn theorem1_bound(x: &BoundInputs) -> Result<BoundReport> {
    x.check_common()?;
    x.check_sampling()?;
    x.check_lambda()?;
    x.require(&[(
        x.avg_cdnv >= 0.0 && x.avg_cdnv.is_finite(),
        format!("avg CDNV finite and >= 0 (avg CDNV={})", x.avg_cdnv),
    )])?;
    let k1 = (x.k - 1) as f64;
    let n = x.n as f64;
    let m = x.m as f64;
    let l = x.l as f64;
    let c = x.ceil_c();
    let b = x.b;
    let lam = x.lambda;
    let kappa = 1.0 + n / (m - n);
    let log_lb = (lam / (40.0 * b)).ln().abs() + 2.0;

    let cdnv_term = k1 * kappa * (48.0 + 848.0 / n) * x.avg_cdnv;
    let delta_term = k1 * m * x.delta * x.delta / (m - n);
    let m_term_1 = 320.0 * k1 * c * b * m.sqrt() * (2.0 * n + 4.0).powi(2) / ((m - n) * lam)
        * (PI * x.log_pq() * (2.0 * m).ln()).sqrt();
    let m_term_2 = 640.0 * k1 * c * b * m.sqrt() / ((m - n) * lam)
        * (2.0 * (6.0 * l * l * (c + 1.0).powi(2) * log_lb * log_lb / x.delta).ln()).sqrt();
    let l_term = k1 * c * b / (lam * l.sqrt())
        * (14200.0 * (l.ln() * x.log_pq()).sqrt()
            + 660.0 * ((2.0 * 3f64.sqrt() * (c + 1.0) * log_lb / x.delta).ln()).sqrt());

    Ok(BoundReport::new(
        "theorem1",
        vec![
            ("cdnv_term", cdnv_term),
            ("delta_term", delta_term),
            ("m_term_1", m_term_1),
            ("m_term_2", m_term_2),
            ("l_term", l_term),
        ],
    )
    .with_margin(0.025 * lam, cdnv_plug_in(x.n, x.avg_cdnv)))
}

struct Complexity {
    m_term_1: f64,
    m_term_2: f64,
    l_term: f64,
}

fn composition_complexity(x: &BoundInputs, margin: f64) -> Complexity {
    let k1 = (x.k - 1) as f64;
    let n = x.n as f64;
    let m = x.m as f64;
    let l = x.l as f64;
    let c = x.ceil_c();
    let b = x.b;
    let log_db = (margin / b).ln().abs() + 2.0;
    Complexity {
        m_term_1: 8.0 * k1 * c * b * m.sqrt() * (2.0 * n + 4.0).powi(2) / ((m - n) * margin)
            * (PI * x.log_pq() * (2.0 * m).ln()).sqrt(),
        m_term_2: 16.0 * k1 * c * b * m.sqrt() / ((m - n) * margin)
            * (2.0 * (6.0 * l * l * (c + 1.0).powi(2) * log_db * log_db / x.delta).ln()).sqrt(),
        l_term: k1 * c * b / (margin * l.sqrt())
            * (355.0 * (l.ln() * x.log_pq()).sqrt()
                + 16.5 * ((2.0 * 3f64.sqrt() * (c + 1.0) * log_db / x.delta).ln()).sqrt()),
    }
}

/// Composite bound in terms of `Avg ℓ_{4Δ}` over source pairs:
/// `4(k−1)κ(avg + δ²/4)` plus three complexity terms.
pub fn compose_transfer_bound(
    x: &BoundInputs,
    margin: f64,
    avg_loss_4delta: f64,
) -> Result<BoundReport> {
    x.check_common()?;
    x.check_sampling()?;
    BoundInputs::check_margin(margin)?;
    compose_unchecked(x, margin, vec![("loss_term", avg_loss_4delta)], "compose")
}

/// `plug` lists the pieces of `Avg ℓ_{4Δ}`; each becomes its own term.
fn compose_unchecked(
    x: &BoundInputs,
    margin: f64,
    plug: Vec<(&str, f64)>,
    name: &str,
) -> Result<BoundReport> {
    let k1 = (x.k - 1) as f64;
    let kappa = x.kappa();
    let cx = composition_complexity(x, margin);
    let plug_in: f64 = plug.iter().map(|p| p.1).sum();
    let mut terms: Vec<(&str, f64)> = plug
        .into_iter()
        .map(|(n, v)| (n, 4.0 * k1 * kappa * v))
        .collect();
    terms.extend([
        ("delta_term", k1 * kappa * x.delta * x.delta),
        ("m_term_1", cx.m_term_1),
        ("m_term_2", cx.m_term_2),
        ("l_term", cx.l_term),
    ]);
    Ok(BoundReport::new(name, terms).with_margin(margin, plug_in))
}

/// Margin-error theorem: composition at `Δ = φΛ/8` with the first part of
/// the margin-error lemma at margin `φΛ/2`.
pub fn theorem2_bound(x: &BoundInputs) -> Result<BoundReport> {
    x.check_common()?;
    x.check_sampling()?;
    x.check_lambda()?;
    x.require(&[
        (x.phi > 0.0, format!("phi > 0 (phi={})", x.phi)),
        (!x.pairs.is_empty(), "pairwise table supplied".into()),
    ])?;
    let e = x
        .avg_margin_error_phi
        .ok_or_else(|| Error::PreconditionViolated("Avg E at margin phi*Lambda supplied".into()))?;
    let n = x.n as f64;
    let plug_margin = x.phi * x.lambda / 2.0;
    let tail = x
        .pairs
        .iter()
        .map(|pr| {
            4.0 * pr.lambda_ij.powi(2) / (n * n * plug_margin * plug_margin) * (pr.v_ij + pr.v_ji)
        })
        .sum::<f64>()
        / x.pairs.len() as f64;
    let phi = x.phi;
    Ok(compose_unchecked(
        x,
        x.phi * x.lambda / 8.0,
        vec![("margin_error_term", e), ("cdnv_term", tail)],
        "theorem2",
    )?
    .note(format!(
        "derived constants: margin_error_term = 4(k-1)kappa*AvgE; cdnv_term = {}(k-1)kappa/n^2 * Avg[(Lambda_ij/Lambda)^2 (V_ij+V_ji)]",
        64.0 / (phi * phi)
    ))
    .note(format!(
        "complexity constants: m_term_1 {}/Lambda, m_term_2 {}/Lambda, l_term ({}, {})/Lambda",
        64.0 / phi,
        128.0 / phi,
        2840.0 / phi,
        132.0 / phi
    )))
}

/// Where `Λ/√n` enters the spherical-symmetry theorem.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
pub enum Theorem3Margin {
    /// Plug-in loss margin `4Δ = Λ/√n`, so the lemma's margin matches the loss consumed.
    #[default]
    PlugIn,
    /// Composition margin `Δ = Λ/√n` (plug-in margin `4Λ/√n`).
    Literal,
}

/// Spherical-symmetry theorem: composition with the second part of the
/// margin-error lemma for every ordered pair.
pub fn theorem3_bound(x: &BoundInputs, convention: Theorem3Margin) -> Result<BoundReport> {
    x.check_common()?;
    x.check_sampling()?;
    x.check_lambda()?;
    x.require(&[
        (x.s >= 1.0, format!("s >= 1 (s={})", x.s)),
        (!x.pairs.is_empty(), "pairwise table supplied".into()),
    ])?;
    let n = x.n as f64;
    let plug_margin = match convention {
        Theorem3Margin::PlugIn => x.lambda / n.sqrt(),
        Theorem3Margin::Literal => 4.0 * x.lambda / n.sqrt(),
    };
    let mut first = 0.0;
    let mut tail = 0.0;
    for pr in &x.pairs {
        if plug_margin > pr.lambda_ij / 4.0 {
            return Err(Error::PreconditionViolated(format!(
                "plug-in margin <= Lambda_ij/4 for pair ({}, {}): {} > {}",
                pr.i,
                pr.j,
                plug_margin,
                pr.lambda_ij / 4.0
            )));
        }
        first += 64.0 * (1.0 / x.s + (plug_margin / pr.lambda_ij).powi(2)) * pr.v_ij;
        tail +=
            4.0 * pr.lambda_ij.powi(2) / (n * n * plug_margin * plug_margin) * (pr.v_ij + pr.v_ji);
    }
    let np = x.pairs.len() as f64;
    let label = match convention {
        Theorem3Margin::PlugIn => {
            "plug-in margin Lambda/sqrt(n), composition margin Lambda/(4 sqrt(n))"
        }
        Theorem3Margin::Literal => {
            "composition margin Lambda/sqrt(n), plug-in margin 4 Lambda/sqrt(n)"
        }
    };
    let rep = compose_unchecked(
        x,
        plug_margin / 4.0,
        vec![("cdnv_term", first / np), ("cdnv_tail_term", tail / np)],
        "theorem3",
    )?
    .note(label);
    Ok(rep.note(match convention {
        Theorem3Margin::PlugIn => {
            "derived constants: loss = (k-1)kappa * Avg[(256/s + 256 Lambda^2/(n Lambda_ij^2)) V_ij + 16 Lambda_ij^2/(n Lambda^2) (V_ij+V_ji)]"
        }
        Theorem3Margin::Literal => {
            "derived constants: loss = (k-1)kappa * Avg[(256/s + 4096 Lambda^2/(n Lambda_ij^2)) V_ij + Lambda_ij^2/(n Lambda^2) (V_ij+V_ji)]"
        }
    }))
}

/// Source-distribution bound in terms of `Avg ℓ_{2Δ}` over source class pairs.
pub fn lemma3_rhs(x: &BoundInputs, margin: f64, avg_loss_2delta: f64) -> Result<BoundReport> {
    x.check_common()?;
    BoundInputs::check_margin(margin)?;
    let k1 = (x.k - 1) as f64;
    let l = x.l as f64;
    let c = x.ceil_c();
    let log_db = (margin / x.b).ln().abs() + 2.0;
    let l_term = k1 * c * x.b / (margin * l.sqrt())
        * (355.0 * (l.ln() * x.log_pq()).sqrt()
            + 16.5 * ((3f64.sqrt() * (c + 1.0) * log_db / x.delta).ln()).sqrt());
    Ok(BoundReport::new(
        "lemma3",
        vec![
            ("loss_term", k1 * avg_loss_2delta),
            ("delta_term", k1 * x.delta * x.delta),
            ("l_term", l_term),
        ],
    )
    .with_margin(margin, avg_loss_2delta))
}

/// Per-pair sample bound in terms of the empirical `ℓ_{2Δ}(S_i, S_j)`.
pub fn lemma4_rhs(x: &BoundInputs, margin: f64, loss_2delta: f64) -> Result<BoundReport> {
    x.check_common()?;
    x.check_sampling()?;
    BoundInputs::check_margin(margin)?;
    let n = x.n as f64;
    let m = x.m as f64;
    let c = x.ceil_c();
    let b = x.b;
    let log_db = (margin / b).ln().abs() + 2.0;
    let m_term_1 = 16.0 * c * b * m.sqrt() * (2.0 * n + 4.0).powi(2) / ((m - n) * margin)
        * (PI * x.log_pq() * (2.0 * m).ln()).sqrt();
    let m_term_2 = 32.0 * c * b * m.sqrt() / ((m - n) * margin)
        * (2.0 * (3.0 * (c + 1.0).powi(2) * log_db * log_db / x.delta).ln()).sqrt();
    Ok(BoundReport::new(
        "lemma4",
        vec![
            ("loss_term", 4.0 * (1.0 + n / (m - n)) * loss_2delta),
            ("m_term_1", m_term_1),
            ("m_term_2", m_term_2),
        ],
    )
    .with_margin(margin, loss_2delta))
}

/// CDNV bound on `ℓ_Δ(Q_i, Q_j)`. The caller enforces `Δ ≤ 0.1‖μ_i−μ_j‖`
/// (general) or `Δ ≤ 0.1‖μ_i−μ_j‖/p` (symmetric).
pub fn lemma5_rhs(v_ij: f64, v_ji: f64, n: usize, p: usize, symmetric: bool) -> f64 {
    let n = n as f64;
    let tail = 100.0 / n * (v_ij + v_ji);
    if symmetric {
        128.0 * (1.0 / n + 1.0 / p as f64) * v_ij + tail
    } else {
        12.0 * (1.0 / n + 1.0) * v_ij + tail
    }
}

/// Largest margin for which [`lemma5_rhs`] applies.
pub fn lemma5_max_margin(mu_dist: f64, p: usize, symmetric: bool) -> f64 {
    if symmetric {
        0.1 * mu_dist / p as f64
    } else {
        0.1 * mu_dist
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Lemma6Part {
    /// First part, with the measured `E_{2Δ}`.
    WithE(f64),
    /// Second part, CDNV only; needs `Δ ≤ ‖μ_i−μ_j‖/4`.
    PureCdnv,
}

pub fn lemma6_rhs(
    v_ij: f64,
    v_ji: f64,
    mu_dist: f64,
    n: usize,
    margin: f64,
    s: f64,
    part: Lemma6Part,
) -> Result<f64> {
    if !(margin > 0.0) {
        return Err(Error::BadMargin(margin));
    }
    let n = n as f64;
    let tail = 4.0 * mu_dist * mu_dist / (n * n * margin * margin) * (v_ij + v_ji);
    match part {
        Lemma6Part::WithE(e) => Ok(e + tail),
        Lemma6Part::PureCdnv => {
            if margin > mu_dist / 4.0 {
                return Err(Error::PreconditionViolated(format!(
                    "margin <= mu_dist/4 ({margin} > {})",
                    mu_dist / 4.0
                )));
            }
            Ok(64.0 * (1.0 / s + (margin / mu_dist).powi(2)) * v_ij + tail)
        }
    }
}

/// `V^{ij} = Var_i / (‖μ_i−μ_j‖ − Δ)²`.
pub fn lemma7_v(var_i: f64, mu_dist: f64, margin: f64) -> f64 {
    var_i / (mu_dist - margin).powi(2)
}

/// Gaussian bound `3 exp(−p/(32V)) / (e V)^{p/2}`, evaluated in log space.
pub fn lemma7_rhs(var_i: f64, mu_dist: f64, margin: f64, p: usize) -> Result<f64> {
    if !(margin < mu_dist) {
        return Err(Error::PreconditionViolated(format!(
            "margin < mu_dist ({margin} >= {mu_dist})"
        )));
    }
    let v = lemma7_v(var_i, mu_dist, margin);
    if v > 1.0 / 16.0 {
        return Err(Error::PreconditionViolated(format!(
            "V^ij <= 1/16 (V^ij={v})"
        )));
    }
    if v == 0.0 {
        return Ok(0.0);
    }
    let p = p as f64;
    let ln = 3f64.ln() - p / (32.0 * v) - p / 2.0 * (1.0 + v.ln());
    Ok(ln.exp())
}

/// `α √(2 l (q ln 2 + ln p)) · max ‖x_c‖`.
pub fn rademacher_term(alpha: f64, l: usize, q: usize, p: usize, max_norm: f64) -> f64 {
    alpha * (2.0 * l as f64 * (q as f64 * LN_2 + (p as f64).ln())).sqrt() * max_norm
}

/// `steps` evenly spaced points from `lo` to `hi` inclusive.
pub fn linspace(lo: f64, hi: f64, steps: usize) -> Vec<f64> {
    match steps {
        0 => Vec::new(),
        1 => vec![lo],
        _ => (0..steps)
            .map(|i| lo + (hi - lo) * i as f64 / (steps - 1) as f64)
            .collect(),
    }
}
