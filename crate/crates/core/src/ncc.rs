//! Nearest-class-center classification, margin losses and the n-shot
//! soft-margin error (exact enumeration and Monte Carlo).

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data_io::EmbeddingDataset;
use crate::error::{Error, Result};
use crate::metrics::class_stats;
use crate::numerics::{dist, sq_dist, Matrix, Rng};

pub const DEFAULT_EXACT_CAP: f64 = 1e8;

/// Trials per Monte Carlo work unit. Chunk `c` always draws from `rng.child(c)`,
/// so the estimate does not depend on the thread count.
const MC_CHUNK: usize = 4096;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NccModel {
    ids: Vec<String>,
    centers: Vec<Vec<f64>>,
}

impl NccModel {
    pub fn new(ids: Vec<String>, centers: Vec<Vec<f64>>) -> Result<Self> {
        if centers.len() < 2 {
            return Err(Error::NotEnoughClasses {
                needed: 2,
                available: centers.len(),
            });
        }
        if ids.len() != centers.len() {
            return Err(Error::ShapeMismatch(format!(
                "{} ids for {} centers",
                ids.len(),
                centers.len()
            )));
        }
        let p = centers[0].len();
        if let Some(c) = centers.iter().find(|c| c.len() != p) {
            return Err(Error::DimensionMismatch {
                expected: p,
                got: c.len(),
            });
        }
        Ok(Self { ids, centers })
    }

    /// Centers with ids `"0"`, `"1"`, ...
    pub fn from_centers(centers: Vec<Vec<f64>>) -> Result<Self> {
        let ids = (0..centers.len()).map(|i| i.to_string()).collect();
        Self::new(ids, centers)
    }

    pub fn from_dataset(ds: &EmbeddingDataset) -> Self {
        let stats = class_stats(ds);
        let ids = stats.iter().map(|s| s.class_id.clone()).collect();
        let centers = stats.into_iter().map(|s| s.mu).collect();
        Self { ids, centers }
    }

    pub fn ids(&self) -> &[String] {
        &self.ids
    }

    pub fn centers(&self) -> &[Vec<f64>] {
        &self.centers
    }

    /// Index of the nearest center; the lowest index wins ties.
    pub fn predict(&self, u: &[f64]) -> usize {
        nearest(&self.centers, u)
    }

    pub fn predict_id(&self, u: &[f64]) -> &str {
        &self.ids[self.predict(u)]
    }
}

pub(crate) fn nearest<C: AsRef<[f64]>>(centers: &[C], u: &[f64]) -> usize {
    let mut best = 0;
    let mut best_d = f64::INFINITY;
    for (i, c) in centers.iter().enumerate() {
        let d = sq_dist(c.as_ref(), u);
        if d < best_d {
            best = i;
            best_d = d;
        }
    }
    best
}

pub fn ncc_predict(model: &NccModel, u: &[f64]) -> usize {
    model.predict(u)
}

/// Soft-margin loss `ℓ_Δ(r)`.
pub fn soft_margin_loss(r: f64, delta: f64) -> Result<f64> {
    if !(delta > 0.0) {
        return Err(Error::BadMargin(delta));
    }
    Ok(ell(r, delta))
}

#[inline]
pub(crate) fn ell(r: f64, delta: f64) -> f64 {
    if r > 0.0 {
        1.0
    } else if r < -delta {
        0.0
    } else {
        1.0 + r / delta
    }
}

/// Fraction of rows `x` of `samples_i` with `||x − μ_j|| ≤ ||x − μ_i|| + Δ`.
pub fn margin_error(samples_i: &Matrix, mu_i: &[f64], mu_j: &[f64], delta: f64) -> f64 {
    let hits = samples_i
        .row_iter()
        .filter(|x| dist(x, mu_j) <= dist(x, mu_i) + delta)
        .count();
    hits as f64 / samples_i.rows() as f64
}

/// `E_Δ(S_i; μ_i, μ_j)` for every ordered pair, `i`-major, using the class
/// means of the dataset.
pub fn margin_error_table(ds: &EmbeddingDataset, delta: f64) -> Vec<f64> {
    let stats = class_stats(ds);
    let l = stats.len();
    let pairs: Vec<(usize, usize)> = (0..l)
        .flat_map(|i| (0..l).filter(move |&j| j != i).map(move |j| (i, j)))
        .collect();
    pairs
        .par_iter()
        .map(|&(i, j)| margin_error(&ds.classes()[i].samples, &stats[i].mu, &stats[j].mu, delta))
        .collect()
}

pub fn avg_margin_error(ds: &EmbeddingDataset, delta: f64) -> f64 {
    let t = margin_error_table(ds, delta);
    t.iter().sum::<f64>() / t.len() as f64
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct McEstimate {
    pub value: f64,
    pub std_error: f64,
    pub trials: usize,
}

impl McEstimate {
    fn from_sums(sum: f64, sumsq: f64, trials: usize) -> Self {
        let n = trials as f64;
        let value = sum / n;
        let std_error = if trials > 1 {
            let var = ((sumsq - sum * sum / n) / (n - 1.0)).max(0.0);
            (var / n).sqrt()
        } else {
            0.0
        };
        Self {
            value,
            std_error,
            trials,
        }
    }

    /// Average of independent estimates, with standard errors combined in quadrature.
    pub fn average(items: &[McEstimate]) -> McEstimate {
        let k = items.len() as f64;
        McEstimate {
            value: items.iter().map(|e| e.value).sum::<f64>() / k,
            std_error: items
                .iter()
                .map(|e| e.std_error * e.std_error)
                .sum::<f64>()
                .sqrt()
                / k,
            trials: items.iter().map(|e| e.trials).sum(),
        }
    }
}

/// Runs `trials` independent draws of `f` in fixed-size chunks, each with its
/// own child stream of `rng`.
pub fn monte_carlo<F>(trials: usize, rng: &Rng, f: F) -> Result<McEstimate>
where
    F: Fn(&mut Rng) -> f64 + Sync,
{
    if trials == 0 {
        return Err(Error::InvalidArgument("trials must be >= 1".into()));
    }
    let chunks = trials.div_ceil(MC_CHUNK);
    let parts: Vec<(f64, f64)> = (0..chunks)
        .into_par_iter()
        .map(|c| {
            let mut r = rng.child(c as u64);
            let len = MC_CHUNK.min(trials - c * MC_CHUNK);
            let mut s = 0.0;
            let mut ss = 0.0;
            for _ in 0..len {
                let v = f(&mut r);
                s += v;
                ss += v * v;
            }
            (s, ss)
        })
        .collect();
    let (sum, sumsq) = parts.iter().fold((0.0, 0.0), |a, b| (a.0 + b.0, a.1 + b.1));
    Ok(McEstimate::from_sums(sum, sumsq, trials))
}

/// A source of i.i.d. draws from one class-conditional distribution.
pub trait ClassSampler: Sync {
    fn dim(&self) -> usize;
    fn sample_into(&self, rng: &mut Rng, out: &mut [f64]);

    fn sample(&self, rng: &mut Rng) -> Vec<f64> {
        let mut v = vec![0.0; self.dim()];
        self.sample_into(rng, &mut v);
        v
    }
}

/// Uniform distribution over the rows of a finite sample, `U[S]`.
#[derive(Debug, Clone, Copy)]
pub struct EmpiricalSampler<'a> {
    samples: &'a Matrix,
}

impl<'a> EmpiricalSampler<'a> {
    pub fn new(samples: &'a Matrix) -> Result<Self> {
        if samples.rows() == 0 {
            return Err(Error::EmptyClass("empirical sampler".into()));
        }
        Ok(Self { samples })
    }
}

impl ClassSampler for EmpiricalSampler<'_> {
    fn dim(&self) -> usize {
        self.samples.cols()
    }

    fn sample_into(&self, rng: &mut Rng, out: &mut [f64]) {
        out.copy_from_slice(self.samples.row(rng.below(self.samples.rows())));
    }
}

fn shot_mean<S: ClassSampler + ?Sized>(
    g: &S,
    n: usize,
    rng: &mut Rng,
    buf: &mut [f64],
    acc: &mut [f64],
) {
    acc.iter_mut().for_each(|v| *v = 0.0);
    for _ in 0..n {
        g.sample_into(rng, buf);
        acc.iter_mut().zip(buf.iter()).for_each(|(a, b)| *a += b);
    }
    acc.iter_mut().for_each(|v| *v /= n as f64);
}

fn check_fewshot(n: usize, delta: f64) -> Result<()> {
    if n == 0 {
        return Err(Error::InvalidArgument("n must be >= 1".into()));
    }
    if !(delta > 0.0) {
        return Err(Error::BadMargin(delta));
    }
    Ok(())
}

/// Monte Carlo estimate of the n-shot soft-margin error between two
/// distributions: centers are means of `n` draws each, the test point is one
/// more draw from `gi`.
pub fn fewshot_soft_margin_distributional<A, B>(
    gi: &A,
    gj: &B,
    n: usize,
    delta: f64,
    trials: usize,
    rng: &Rng,
) -> Result<McEstimate>
where
    A: ClassSampler + ?Sized,
    B: ClassSampler + ?Sized,
{
    check_fewshot(n, delta)?;
    let p = gi.dim();
    if gj.dim() != p {
        return Err(Error::DimensionMismatch {
            expected: p,
            got: gj.dim(),
        });
    }
    monte_carlo(trials, rng, |r| {
        let mut buf = vec![0.0; p];
        let mut ci = vec![0.0; p];
        let mut cj = vec![0.0; p];
        shot_mean(gi, n, r, &mut buf, &mut ci);
        shot_mean(gj, n, r, &mut buf, &mut cj);
        gi.sample_into(r, &mut buf);
        ell(dist(&buf, &ci) - dist(&buf, &cj), delta)
    })
}

/// Monte Carlo estimate of the n-shot soft-margin error with `Q = U[S]`.
pub fn fewshot_soft_margin_mc(
    si: &Matrix,
    sj: &Matrix,
    n: usize,
    delta: f64,
    trials: usize,
    rng: &Rng,
) -> Result<McEstimate> {
    let gi = EmpiricalSampler::new(si)?;
    let gj = EmpiricalSampler::new(sj)?;
    fewshot_soft_margin_distributional(&gi, &gj, n, delta, trials, rng)
}

/// Monte Carlo estimate of `E_Δ` for a distribution with fixed centers.
pub fn margin_error_mc<S: ClassSampler + ?Sized>(
    gi: &S,
    mu_i: &[f64],
    mu_j: &[f64],
    delta: f64,
    trials: usize,
    rng: &Rng,
) -> Result<McEstimate> {
    monte_carlo(trials, rng, |r| {
        let x = gi.sample(r);
        if dist(&x, mu_j) <= dist(&x, mu_i) + delta {
            1.0
        } else {
            0.0
        }
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
pub enum Enumeration {
    /// Multisets when they are cheaper than tuples.
    #[default]
    Auto,
    Tuples,
    Multisets,
}

/// All size-`n` supports drawn with replacement from the rows of `s`, as
/// (mean, probability) pairs.
fn supports(s: &Matrix, n: usize, multisets: bool) -> Vec<(Vec<f64>, f64)> {
    let m = s.rows();
    let p = s.cols();
    let mut out = Vec::new();
    let mut idx = vec![0usize; n];
    let total = (m as f64).powi(n as i32);
    let log_fact = |k: usize| (1..=k).map(|v| (v as f64).ln()).sum::<f64>();
    let ln_n_fact = log_fact(n);
    loop {
        let mut mu = vec![0.0; p];
        for &i in &idx {
            mu.iter_mut().zip(s.row(i)).for_each(|(a, b)| *a += b);
        }
        mu.iter_mut().for_each(|v| *v /= n as f64);
        let weight = if multisets {
            // n! / ∏ c!
            let mut ln_w = ln_n_fact;
            let mut run = 1;
            for t in 1..=n {
                if t < n && idx[t] == idx[t - 1] {
                    run += 1;
                } else {
                    ln_w -= log_fact(run);
                    run = 1;
                }
            }
            ln_w.exp().round()
        } else {
            1.0
        };
        out.push((mu, weight / total));

        // advance the odometer
        let mut pos = n;
        loop {
            if pos == 0 {
                return out;
            }
            pos -= 1;
            if idx[pos] + 1 < m {
                idx[pos] += 1;
                let start = if multisets { idx[pos] } else { 0 };
                idx[pos + 1..].iter_mut().for_each(|v| *v = start);
                break;
            }
        }
    }
}

fn binom(n: usize, k: usize) -> f64 {
    (0..k).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64)
}

/// Exact n-shot soft-margin error with `Q = U[S]`, sampling with replacement.
pub fn fewshot_soft_margin_exact(
    si: &Matrix,
    sj: &Matrix,
    n: usize,
    delta: f64,
    cap: f64,
) -> Result<f64> {
    fewshot_soft_margin_exact_with(si, sj, n, delta, cap, Enumeration::Auto)
}

pub fn fewshot_soft_margin_exact_with(
    si: &Matrix,
    sj: &Matrix,
    n: usize,
    delta: f64,
    cap: f64,
    how: Enumeration,
) -> Result<f64> {
    check_fewshot(n, delta)?;
    let (mi, mj) = (si.rows(), sj.rows());
    if mi == 0 || mj == 0 {
        return Err(Error::EmptyClass("few-shot support".into()));
    }
    if si.cols() != sj.cols() {
        return Err(Error::DimensionMismatch {
            expected: si.cols(),
            got: sj.cols(),
        });
    }
    let terms = (mi as f64).powi(n as i32) * (mj as f64).powi(n as i32) * mi as f64;
    if terms > cap {
        return Err(Error::TooLarge { terms, cap });
    }
    let multisets = match how {
        Enumeration::Tuples => false,
        Enumeration::Multisets => true,
        Enumeration::Auto => binom(mi + n - 1, n) < (mi as f64).powi(n as i32),
    };
    let ai = supports(si, n, multisets);
    let aj = supports(sj, n, multisets);
    let per_x: Vec<f64> = (0..mi)
        .into_par_iter()
        .map(|x| {
            let x = si.row(x);
            let dj: Vec<f64> = aj.iter().map(|(mu, _)| dist(x, mu)).collect();
            let mut acc = 0.0;
            for (mu_a, wa) in &ai {
                let da = dist(x, mu_a);
                let inner: f64 = dj
                    .iter()
                    .zip(&aj)
                    .map(|(d, (_, wb))| wb * ell(da - d, delta))
                    .sum();
                acc += wa * inner;
            }
            acc
        })
        .collect();
    Ok(per_x.iter().sum::<f64>() / mi as f64)
}

/// Average over ordered class pairs of the n-shot soft-margin error with `Q = U[S_c]`.
pub fn avg_fewshot_soft_margin_mc(
    ds: &EmbeddingDataset,
    n: usize,
    delta: f64,
    trials: usize,
    rng: &Rng,
) -> Result<McEstimate> {
    let cls = ds.classes();
    let l = cls.len();
    let mut per_pair = Vec::with_capacity(l * (l - 1));
    for i in 0..l {
        for j in 0..l {
            if i != j {
                let r = rng.child((i * l + j) as u64);
                per_pair.push(fewshot_soft_margin_mc(
                    &cls[i].samples,
                    &cls[j].samples,
                    n,
                    delta,
                    trials,
                    &r,
                )?);
            }
        }
    }
    Ok(McEstimate::average(&per_pair))
}
