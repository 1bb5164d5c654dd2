//! Synthetic Gaussian worlds, analytic oracles and Monte Carlo checks of the
//! pairwise soft-margin lemmas.

use std::fmt::Write as _;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::function::erf::erfc;

use crate::bounds::{lemma5_max_margin, lemma5_rhs, lemma6_rhs, lemma7_rhs, lemma7_v, Lemma6Part};
use crate::data_io::{parse_kv, parse_value, ClassSamples, EmbeddingDataset};
use crate::error::{Error, Result};
use crate::ncc::{fewshot_soft_margin_distributional, margin_error_mc, ClassSampler, McEstimate};
use crate::numerics::{sq_dist, Matrix, Rng};

/// Law of class means.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MeanLaw {
    /// `μ ~ N(0, τ²/p · I)`, so `E‖μ‖² = τ²`.
    Gaussian { tau: f64 },
    /// Draws distinct entries of a fixed list.
    Fixed { means: Vec<Vec<f64>> },
    /// Vertices of a regular simplex; pairwise distance `scale·√2`.
    SimplexEtf { scale: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticWorld {
    pub p: usize,
    pub mean_law: MeanLaw,
    /// Total standard deviation: every class has `Var = σ²`.
    pub sigma: f64,
    /// Optional per-coordinate stretch, rescaled to mean square 1.
    pub stretch: Option<Vec<f64>>,
}

impl SyntheticWorld {
    pub fn new(p: usize, mean_law: MeanLaw, sigma: f64) -> Result<Self> {
        let w = Self {
            p,
            mean_law,
            sigma,
            stretch: None,
        };
        w.validate()?;
        Ok(w)
    }

    pub fn with_stretch(mut self, stretch: Vec<f64>) -> Result<Self> {
        self.stretch = Some(stretch);
        self.validate()?;
        Ok(self)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |s: String| Err(Error::InvalidConfig(s));
        if self.p == 0 {
            return bad("p must be >= 1".into());
        }
        if !(self.sigma >= 0.0 && self.sigma.is_finite()) {
            return bad(format!("sigma must be >= 0, got {}", self.sigma));
        }
        match &self.mean_law {
            MeanLaw::Gaussian { tau } if !(*tau > 0.0) => {
                return bad(format!("tau must be > 0, got {tau}"))
            }
            MeanLaw::SimplexEtf { scale } if !(*scale > 0.0) => {
                return bad(format!("scale must be > 0, got {scale}"))
            }
            MeanLaw::Fixed { means } => {
                if means.is_empty() {
                    return bad("fixed mean list is empty".into());
                }
                if let Some(m) = means.iter().find(|m| m.len() != self.p) {
                    return bad(format!(
                        "fixed mean has {} coordinates, p = {}",
                        m.len(),
                        self.p
                    ));
                }
            }
            _ => {}
        }
        if let Some(s) = &self.stretch {
            if s.len() != self.p {
                return bad(format!("stretch has {} entries, p = {}", s.len(), self.p));
            }
            if s.iter().any(|v| !(v.is_finite() && *v >= 0.0)) || s.iter().all(|v| *v == 0.0) {
                return bad("stretch entries must be >= 0 and not all zero".into());
            }
        }
        Ok(())
    }

    /// Per-coordinate standard deviations.
    pub fn coord_std(&self) -> Vec<f64> {
        let base = self.sigma / (self.p as f64).sqrt();
        match &self.stretch {
            None => vec![base; self.p],
            Some(s) => {
                let ms = (s.iter().map(|v| v * v).sum::<f64>() / self.p as f64).sqrt();
                s.iter().map(|v| base * v / ms).collect()
            }
        }
    }

    /// Parses a flat `key = value` world spec. Keys: `p`, `sigma`,
    /// `mean_law` (`gaussian` | `fixed` | `etf`), `tau`, `scale`,
    /// `means` (`a,b;c,d`), `stretch` (`a,b,...`).
    pub fn parse(text: &str) -> Result<Self> {
        let mut p = None;
        let mut sigma = 1.0;
        let mut law = "gaussian".to_string();
        let mut tau = 1.0;
        let mut scale = 1.0;
        let mut means = None;
        let mut stretch = None;
        for (k, v) in parse_kv(text)? {
            match k.as_str() {
                "p" => p = Some(parse_value(&k, &v)?),
                "sigma" => sigma = parse_value(&k, &v)?,
                "mean_law" => law = v,
                "tau" => tau = parse_value(&k, &v)?,
                "scale" => scale = parse_value(&k, &v)?,
                "means" => {
                    means = Some(
                        v.split(';')
                            .map(|row| parse_list(&k, row))
                            .collect::<Result<Vec<_>>>()?,
                    )
                }
                "stretch" => stretch = Some(parse_list(&k, &v)?),
                other => return Err(Error::InvalidConfig(format!("unknown world key {other:?}"))),
            }
        }
        let mean_law = match law.as_str() {
            "gaussian" => MeanLaw::Gaussian { tau },
            "etf" | "simplex_etf" => MeanLaw::SimplexEtf { scale },
            "fixed" => MeanLaw::Fixed {
                means: means
                    .ok_or_else(|| Error::InvalidConfig("mean_law=fixed needs means".into()))?,
            },
            other => return Err(Error::InvalidConfig(format!("unknown mean_law {other:?}"))),
        };
        let p = match (p, &mean_law) {
            (Some(p), _) => p,
            (None, MeanLaw::Fixed { means }) => means[0].len(),
            (None, _) => return Err(Error::InvalidConfig("world spec needs p".into())),
        };
        let w = Self {
            p,
            mean_law,
            sigma,
            stretch,
        };
        w.validate()?;
        Ok(w)
    }

    /// Inverse of [`SyntheticWorld::parse`].
    pub fn to_kv(&self) -> String {
        let join = |v: &[f64]| {
            v.iter()
                .map(|x| format!("{x:?}"))
                .collect::<Vec<_>>()
                .join(",")
        };
        let mut s = String::new();
        let _ = writeln!(s, "p = {}", self.p);
        let _ = writeln!(s, "sigma = {:?}", self.sigma);
        match &self.mean_law {
            MeanLaw::Gaussian { tau } => {
                let _ = writeln!(s, "mean_law = gaussian\ntau = {tau:?}");
            }
            MeanLaw::SimplexEtf { scale } => {
                let _ = writeln!(s, "mean_law = etf\nscale = {scale:?}");
            }
            MeanLaw::Fixed { means } => {
                let rows: Vec<String> = means.iter().map(|m| join(m)).collect();
                let _ = writeln!(s, "mean_law = fixed\nmeans = {}", rows.join(";"));
            }
        }
        if let Some(st) = &self.stretch {
            let _ = writeln!(s, "stretch = {}", join(st));
        }
        s
    }
}

fn parse_list(key: &str, text: &str) -> Result<Vec<f64>> {
    text.split(',')
        .map(|v| parse_value(key, v.trim()))
        .collect()
}

/// Gaussian class-conditional with diagonal covariance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GaussianClass {
    mean: Vec<f64>,
    std: Vec<f64>,
    var: f64,
}

impl GaussianClass {
    /// Spherical Gaussian with total variance `sigma²`.
    pub fn spherical(mean: Vec<f64>, sigma: f64) -> Self {
        let p = mean.len();
        let s = sigma / (p as f64).sqrt();
        Self {
            mean,
            std: vec![s; p],
            var: sigma * sigma,
        }
    }

    pub fn with_coord_std(mean: Vec<f64>, std: Vec<f64>) -> Result<Self> {
        if mean.len() != std.len() {
            return Err(Error::DimensionMismatch {
                expected: mean.len(),
                got: std.len(),
            });
        }
        let var = std.iter().map(|s| s * s).sum();
        Ok(Self { mean, std, var })
    }

    pub fn mean(&self) -> &[f64] {
        &self.mean
    }

    pub fn total_variance(&self) -> f64 {
        self.var
    }

    pub fn draw(&self, m: usize, rng: &mut Rng) -> Matrix {
        let p = self.mean.len();
        let mut out = Matrix::zeros(m, p);
        for i in 0..m {
            self.sample_into(rng, out.row_mut(i));
        }
        out
    }
}

impl ClassSampler for GaussianClass {
    fn dim(&self) -> usize {
        self.mean.len()
    }

    fn sample_into(&self, rng: &mut Rng, out: &mut [f64]) {
        for ((o, m), s) in out.iter_mut().zip(&self.mean).zip(&self.std) {
            *o = m + s * rng.standard_normal();
        }
    }
}

/// Regular-simplex vertices `e_c − 1/K`, written in a Helmert basis of the
/// sum-zero subspace and padded to `p` coordinates.
pub fn simplex_etf(count: usize, p: usize, scale: f64) -> Result<Vec<Vec<f64>>> {
    if count == 0 || count > p + 1 {
        return Err(Error::InvalidArgument(format!(
            "simplex of {count} vertices needs 1 <= count <= p+1 (p={p})"
        )));
    }
    Ok((0..count)
        .map(|c| {
            let mut v = vec![0.0; p];
            for r in 1..count {
                let norm = ((r * (r + 1)) as f64).sqrt();
                v[r - 1] = scale
                    * match c.cmp(&r) {
                        std::cmp::Ordering::Less => 1.0 / norm,
                        std::cmp::Ordering::Equal => -(r as f64) / norm,
                        std::cmp::Ordering::Greater => 0.0,
                    };
            }
            v
        })
        .collect())
}

/// Draws `count` class generators from the world.
pub fn draw_classes(
    world: &SyntheticWorld,
    count: usize,
    rng: &mut Rng,
) -> Result<Vec<GaussianClass>> {
    world.validate()?;
    let p = world.p;
    let means: Vec<Vec<f64>> = match &world.mean_law {
        MeanLaw::Gaussian { tau } => {
            let s = tau / (p as f64).sqrt();
            (0..count)
                .map(|_| (0..p).map(|_| s * rng.standard_normal()).collect())
                .collect()
        }
        MeanLaw::Fixed { means } => {
            if count > means.len() {
                return Err(Error::NotEnoughClasses {
                    needed: count,
                    available: means.len(),
                });
            }
            rng.choose_distinct(means.len(), count)
                .into_iter()
                .map(|i| means[i].clone())
                .collect()
        }
        MeanLaw::SimplexEtf { scale } => simplex_etf(count, p, *scale)?,
    };
    let std = world.coord_std();
    means
        .into_iter()
        .map(|m| GaussianClass::with_coord_std(m, std.clone()))
        .collect()
}

/// Samples `m` points from each of `classes` fresh classes of the world.
pub fn generate_dataset(
    world: &SyntheticWorld,
    classes: usize,
    m: usize,
    rng: &Rng,
) -> Result<EmbeddingDataset> {
    Ok(generate_dataset_with_classes(world, classes, m, rng)?.1)
}

/// [`generate_dataset`], also returning the generators behind each class.
pub fn generate_dataset_with_classes(
    world: &SyntheticWorld,
    classes: usize,
    m: usize,
    rng: &Rng,
) -> Result<(Vec<GaussianClass>, EmbeddingDataset)> {
    let gens = draw_classes(world, classes, &mut rng.child_named("means"))?;
    let out = gens
        .iter()
        .enumerate()
        .map(|(c, g)| ClassSamples {
            id: format!("c{c}"),
            samples: g.draw(m, &mut rng.child(c as u64)),
        })
        .collect();
    let ds = EmbeddingDataset::new(world.p, out)?;
    Ok((gens, ds))
}

/// Standard normal CDF.
pub fn normal_cdf(x: f64) -> f64 {
    0.5 * erfc(-x / std::f64::consts::SQRT_2)
}

/// Two-class NCC error with true means for spherical Gaussians of total std
/// `sigma_total`: `Φ(−Λ√p / (2σ))`.
pub fn analytic_ncc_error_known_means(lambda: f64, sigma_total: f64, p: usize) -> Result<f64> {
    if !(sigma_total > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "sigma must be > 0, got {sigma_total}"
        )));
    }
    Ok(normal_cdf(
        -lambda * (p as f64).sqrt() / (2.0 * sigma_total),
    ))
}

/// `Var(g_i) / ‖μ_i − μ_j‖²`.
pub fn analytic_cdnv(gi: &GaussianClass, gj: &GaussianClass) -> Result<f64> {
    let var = gi.total_variance();
    let d2 = sq_dist(&gi.mean, &gj.mean);
    if d2 == 0.0 {
        if var == 0.0 {
            return Err(Error::UndefinedCdnv(
                "generator i".into(),
                "generator j".into(),
            ));
        }
        return Ok(f64::INFINITY);
    }
    Ok(var / d2)
}

/// Monte Carlo NCC error of a point from `gi` against the true means; ties count as errors.
pub fn known_means_ncc_error_mc(
    gi: &GaussianClass,
    gj: &GaussianClass,
    trials: usize,
    rng: &Rng,
) -> Result<McEstimate> {
    margin_error_mc(gi, &gi.mean, &gj.mean, 0.0, trials, rng)
}

/// Monte Carlo NCC error of a `k`-way task with true means, averaged over
/// the true class of the test point.
pub fn known_means_multiclass_error_mc(
    gens: &[GaussianClass],
    trials: usize,
    rng: &Rng,
) -> Result<McEstimate> {
    let centers: Vec<&[f64]> = gens.iter().map(|g| g.mean()).collect();
    crate::ncc::monte_carlo(trials, rng, |r| {
        let c = r.below(gens.len());
        let x = gens[c].sample(r);
        if crate::ncc::nearest(&centers, &x) == c {
            0.0
        } else {
            1.0
        }
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LemmaId {
    Lemma5,
    Lemma5Symmetric,
    Lemma6Part1,
    Lemma6Part2,
    Lemma7,
}

impl LemmaId {
    pub const ALL: [LemmaId; 5] = [
        LemmaId::Lemma5,
        LemmaId::Lemma5Symmetric,
        LemmaId::Lemma6Part1,
        LemmaId::Lemma6Part2,
        LemmaId::Lemma7,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            LemmaId::Lemma5 => "lemma5",
            LemmaId::Lemma5Symmetric => "lemma5-symmetric",
            LemmaId::Lemma6Part1 => "lemma6-part1",
            LemmaId::Lemma6Part2 => "lemma6-part2",
            LemmaId::Lemma7 => "lemma7",
        }
    }
}

impl FromStr for LemmaId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        LemmaId::ALL
            .into_iter()
            .find(|l| l.as_str() == s)
            .ok_or_else(|| Error::InvalidArgument(format!("unknown lemma {s:?}")))
    }
}

/// One configuration of a spherical Gaussian pair: `μ_i = 0`, `μ_j = d·e_1`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LemmaPoint {
    pub p: usize,
    pub n: usize,
    pub mu_dist: f64,
    pub var_i: f64,
    pub var_j: f64,
    pub margin: f64,
}

impl LemmaPoint {
    fn generators(&self) -> (GaussianClass, GaussianClass) {
        let mut mj = vec![0.0; self.p];
        mj[0] = self.mu_dist;
        (
            GaussianClass::spherical(vec![0.0; self.p], self.var_i.sqrt()),
            GaussianClass::spherical(mj, self.var_j.sqrt()),
        )
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValidationRow {
    pub lemma: LemmaId,
    pub point: LemmaPoint,
    /// Estimate of `ℓ_Δ(Q_i, Q_j)`.
    pub mc: Option<McEstimate>,
    pub rhs: Option<f64>,
    /// Standard error of `mc − rhs` (includes the measured `E_{2Δ}` for the first part of lemma 6).
    pub se: Option<f64>,
    pub dominated: Option<bool>,
    pub skipped: Option<String>,
}

impl ValidationRow {
    fn skip(lemma: LemmaId, point: LemmaPoint, reason: String) -> Self {
        Self {
            lemma,
            point,
            mc: None,
            rhs: None,
            se: None,
            dominated: None,
            skipped: Some(reason),
        }
    }
}

const MARGIN_SLACK: f64 = 1e-12;

fn precondition(lemma: LemmaId, x: &LemmaPoint) -> std::result::Result<(), String> {
    if x.p == 0 || x.n == 0 {
        return Err("p >= 1 and n >= 1".into());
    }
    if !(x.mu_dist > 0.0) {
        return Err(format!("distinct means (mu_dist={})", x.mu_dist));
    }
    if !(x.margin > 0.0) {
        return Err(format!("margin > 0 (margin={})", x.margin));
    }
    if !(x.var_i >= 0.0 && x.var_j >= 0.0) {
        return Err("variances >= 0".into());
    }
    let limit = match lemma {
        LemmaId::Lemma5 => lemma5_max_margin(x.mu_dist, x.p, false),
        LemmaId::Lemma5Symmetric => lemma5_max_margin(x.mu_dist, x.p, true),
        LemmaId::Lemma6Part1 => f64::INFINITY,
        LemmaId::Lemma6Part2 => x.mu_dist / 4.0,
        LemmaId::Lemma7 => {
            if x.margin >= x.mu_dist {
                return Err(format!("margin < mu_dist ({} >= {})", x.margin, x.mu_dist));
            }
            let v = lemma7_v(x.var_i, x.mu_dist, x.margin);
            if v > 1.0 / 16.0 {
                return Err(format!("V^ij <= 1/16 (V^ij={v})"));
            }
            f64::INFINITY
        }
    };
    if x.margin > limit * (1.0 + MARGIN_SLACK) {
        return Err(format!("margin <= {limit} (margin={})", x.margin));
    }
    Ok(())
}

fn validate_point(
    lemma: LemmaId,
    x: LemmaPoint,
    trials: usize,
    rng: &Rng,
) -> Result<ValidationRow> {
    if let Err(reason) = precondition(lemma, &x) {
        return Ok(ValidationRow::skip(lemma, x, reason));
    }
    let (gi, gj) = x.generators();
    let mc = fewshot_soft_margin_distributional(&gi, &gj, x.n, x.margin, trials, &rng.child(0))?;
    let d2 = x.mu_dist * x.mu_dist;
    let (v_ij, v_ji) = (x.var_i / d2, x.var_j / d2);
    let (rhs, se) = match lemma {
        LemmaId::Lemma5 => (lemma5_rhs(v_ij, v_ji, x.n, x.p, false), mc.std_error),
        LemmaId::Lemma5Symmetric => (lemma5_rhs(v_ij, v_ji, x.n, x.p, true), mc.std_error),
        LemmaId::Lemma6Part1 => {
            let e = margin_error_mc(
                &gi,
                gi.mean(),
                gj.mean(),
                2.0 * x.margin,
                trials,
                &rng.child(1),
            )?;
            let rhs = lemma6_rhs(
                v_ij,
                v_ji,
                x.mu_dist,
                x.n,
                x.margin,
                1.0,
                Lemma6Part::WithE(e.value),
            )?;
            (rhs, mc.std_error.hypot(e.std_error))
        }
        LemmaId::Lemma6Part2 => (
            lemma6_rhs(
                v_ij,
                v_ji,
                x.mu_dist,
                x.n,
                x.margin,
                x.p as f64,
                Lemma6Part::PureCdnv,
            )?,
            mc.std_error,
        ),
        LemmaId::Lemma7 => (lemma7_rhs(x.var_i, x.mu_dist, x.margin, x.p)?, mc.std_error),
    };
    Ok(ValidationRow {
        lemma,
        point: x,
        mc: Some(mc),
        rhs: Some(rhs),
        se: Some(se),
        dominated: Some(mc.value <= rhs + 3.0 * se),
        skipped: None,
    })
}

/// Checks `MC ℓ_Δ ≤ RHS + 3·SE` at every grid point; points that violate the
/// lemma's preconditions are skipped with a reason.
pub fn lemma_validation_run(
    lemma: LemmaId,
    grid: &[LemmaPoint],
    trials: usize,
    rng: &Rng,
) -> Result<Vec<ValidationRow>> {
    grid.par_iter()
        .enumerate()
        .map(|(i, x)| validate_point(lemma, *x, trials, &rng.child(i as u64)))
        .collect()
}

/// Small fixed grid satisfying each lemma's preconditions.
pub fn default_grid(lemma: LemmaId) -> Vec<LemmaPoint> {
    let mut out = Vec::new();
    let d = 1.0;
    match lemma {
        LemmaId::Lemma7 => {
            for v in [1.0 / 32.0, 1.0 / 64.0] {
                for p in [4, 16] {
                    for n in [1, 5] {
                        let margin = 0.1 * d;
                        let var = v * (d - margin) * (d - margin);
                        out.push(LemmaPoint {
                            p,
                            n,
                            mu_dist: d,
                            var_i: var,
                            var_j: var,
                            margin,
                        });
                    }
                }
            }
        }
        _ => {
            for p in [1, 4, 16] {
                for n in [1, 2, 5] {
                    for v in [0.005, 0.02, 0.05] {
                        let margins: Vec<f64> = match lemma {
                            LemmaId::Lemma5 => vec![0.1 * d],
                            LemmaId::Lemma5Symmetric => vec![0.1 * d / p as f64],
                            _ => vec![0.05 * d, 0.1 * d, 0.25 * d],
                        };
                        for margin in margins {
                            out.push(LemmaPoint {
                                p,
                                n,
                                mu_dist: d,
                                var_i: v * d * d,
                                var_j: v * d * d,
                                margin,
                            });
                        }
                    }
                }
            }
        }
    }
    out
}

/// `count` random configurations satisfying the lemma's preconditions, with
/// CDNV at most 0.05 for lemmas 5 and 6.
pub fn random_grid(lemma: LemmaId, count: usize, rng: &mut Rng) -> Vec<LemmaPoint> {
    (0..count)
        .map(|_| {
            let d = 0.5 + 4.5 * rng.uniform();
            let n = 1 + rng.below(5);
            match lemma {
                LemmaId::Lemma7 => {
                    let v = [1.0 / 32.0, 1.0 / 64.0][rng.below(2)];
                    let p = [4, 16][rng.below(2)];
                    let margin = 0.5 * d * rng.uniform();
                    let var = v * (d - margin) * (d - margin);
                    LemmaPoint {
                        p,
                        n,
                        mu_dist: d,
                        var_i: var,
                        var_j: var,
                        margin,
                    }
                }
                _ => {
                    let p = 1 + rng.below(32);
                    let var_i = 0.05 * rng.uniform() * d * d;
                    let var_j = 0.05 * rng.uniform() * d * d;
                    let margin = match lemma {
                        LemmaId::Lemma5 => 0.1 * d,
                        LemmaId::Lemma5Symmetric => 0.1 * d / p as f64,
                        _ => 0.25 * d * (1.0 - rng.uniform()),
                    };
                    LemmaPoint {
                        p,
                        n,
                        mu_dist: d,
                        var_i,
                        var_j,
                        margin,
                    }
                }
            }
        })
        .collect()
}
