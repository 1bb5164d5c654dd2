//! Collapse statistics: per-class mean/variance, CDNV, pairwise class-mean
//! distances and the two comparison measures (Goldblum ratio, Papyan trace).

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data_io::EmbeddingDataset;
use crate::error::{Error, Result};
use crate::numerics::{
    covariance, dist, pinv, rows_mean, rows_total_variance, sq_dist, sym_eig, Matrix,
};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassStats {
    pub class_id: String,
    pub mu: Vec<f64>,
    pub var: f64,
    pub count: usize,
}

impl ClassStats {
    pub fn from_samples(class_id: impl Into<String>, samples: &Matrix) -> Result<Self> {
        let class_id = class_id.into();
        if samples.rows() == 0 {
            return Err(Error::EmptyClass(class_id));
        }
        Ok(Self {
            mu: rows_mean(samples)?,
            var: rows_total_variance(samples)?,
            count: samples.rows(),
            class_id,
        })
    }
}

pub fn class_stats(ds: &EmbeddingDataset) -> Vec<ClassStats> {
    ds.classes()
        .par_iter()
        .map(|c| {
            ClassStats::from_samples(c.id.clone(), &c.samples)
                .expect("dataset classes are nonempty")
        })
        .collect()
}

/// `Var_i / ||μ_i − μ_j||²`. Zero variance gives 0 (distinct means), and
/// coincident means give +Inf, or `UndefinedCDNV` when the variance is also zero.
pub fn cdnv(si: &ClassStats, sj: &ClassStats) -> Result<f64> {
    let d2 = sq_dist(&si.mu, &sj.mu);
    if d2 == 0.0 {
        if si.var == 0.0 {
            return Err(Error::UndefinedCdnv(
                si.class_id.clone(),
                sj.class_id.clone(),
            ));
        }
        return Ok(f64::INFINITY);
    }
    Ok(si.var / d2)
}

/// Average CDNV over all ordered pairs.
pub fn avg_cdnv_from_stats(stats: &[ClassStats]) -> Result<f64> {
    let l = stats.len();
    if l < 2 {
        return Err(Error::NotEnoughClasses {
            needed: 2,
            available: l,
        });
    }
    let mut total = 0.0;
    for i in 0..l {
        for j in 0..l {
            if i != j {
                total += cdnv(&stats[i], &stats[j])?;
            }
        }
    }
    Ok(total / (l * (l - 1)) as f64)
}

pub fn avg_cdnv(ds: &EmbeddingDataset) -> Result<f64> {
    avg_cdnv_from_stats(&class_stats(ds))
}

/// One ordered pair `(i, j)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairEntry {
    pub i: usize,
    pub j: usize,
    /// `V_f(S_i, S_j)`; `None` when undefined (0/0).
    pub cdnv: Option<f64>,
    /// `Λ_ij`.
    pub lambda: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairwiseReport {
    pub class_ids: Vec<String>,
    pub pairs: Vec<PairEntry>,
    /// `None` if any pair is undefined.
    pub avg_cdnv: Option<f64>,
    /// `Λ = min Λ_ij`.
    pub lambda: f64,
}

impl PairwiseReport {
    pub fn class_count(&self) -> usize {
        self.class_ids.len()
    }

    /// Entry for ordered pair `(i, j)`, `i != j`.
    pub fn pair(&self, i: usize, j: usize) -> &PairEntry {
        let l = self.class_count();
        assert!(i != j && i < l && j < l);
        let idx = i * (l - 1) + if j < i { j } else { j - 1 };
        &self.pairs[idx]
    }

    pub fn lambda_ij(&self, i: usize, j: usize) -> f64 {
        self.pair(i, j).lambda
    }
}

pub fn pairwise_report_from_stats(stats: &[ClassStats]) -> Result<PairwiseReport> {
    let l = stats.len();
    if l < 2 {
        return Err(Error::NotEnoughClasses {
            needed: 2,
            available: l,
        });
    }
    let mut pairs = Vec::with_capacity(l * (l - 1));
    let mut lambda = f64::INFINITY;
    let mut sum = Some(0.0);
    for i in 0..l {
        for j in 0..l {
            if i == j {
                continue;
            }
            let lam = dist(&stats[i].mu, &stats[j].mu);
            lambda = lambda.min(lam);
            let v = cdnv(&stats[i], &stats[j]).ok();
            sum = match (sum, v) {
                (Some(s), Some(v)) => Some(s + v),
                _ => None,
            };
            pairs.push(PairEntry {
                i,
                j,
                cdnv: v,
                lambda: lam,
            });
        }
    }
    Ok(PairwiseReport {
        class_ids: stats.iter().map(|s| s.class_id.clone()).collect(),
        pairs,
        avg_cdnv: sum.map(|s| s / (l * (l - 1)) as f64),
        lambda,
    })
}

/// Pairwise CDNV and distance table. Never fails on coincident means; the
/// affected CDNV entries are `None`.
pub fn lambda_table(ds: &EmbeddingDataset) -> PairwiseReport {
    pairwise_report_from_stats(&class_stats(ds)).expect("dataset has at least two classes")
}

fn global_mean(stats: &[ClassStats]) -> Vec<f64> {
    let p = stats[0].mu.len();
    let mut g = vec![0.0; p];
    for s in stats {
        for (a, b) in g.iter_mut().zip(&s.mu) {
            *a += b;
        }
    }
    g.iter_mut().for_each(|v| *v /= stats.len() as f64);
    g
}

/// `l · Avg_i Var_i / Avg_i ||μ_i − μ_G||²`.
pub fn goldblum_ratio(ds: &EmbeddingDataset) -> Result<f64> {
    let stats = class_stats(ds);
    let l = stats.len() as f64;
    let g = global_mean(&stats);
    let num = stats.iter().map(|s| s.var).sum::<f64>() / l;
    let den = stats.iter().map(|s| sq_dist(&s.mu, &g)).sum::<f64>() / l;
    if den == 0.0 {
        return Err(Error::DegenerateMeans);
    }
    Ok(l * num / den)
}

/// `tr(Σ_W Σ_B†) / l` with biased covariances.
pub fn papyan_trace(ds: &EmbeddingDataset, rank_tol: f64) -> Result<f64> {
    let stats = class_stats(ds);
    let l = stats.len();
    let p = ds.dim();
    let g = global_mean(&stats);

    let mut sw = Matrix::zeros(p, p);
    for c in ds.classes() {
        let cov = covariance(&c.samples)?;
        for (a, b) in sw.as_mut_slice().iter_mut().zip(cov.as_slice()) {
            *a += b / l as f64;
        }
    }
    let mut sb = Matrix::zeros(p, p);
    for s in &stats {
        let d: Vec<f64> = s.mu.iter().zip(&g).map(|(a, b)| a - b).collect();
        for r in 0..p {
            for c in 0..p {
                sb[(r, c)] += d[r] * d[c] / l as f64;
            }
        }
    }
    let prod = sw.matmul(&pinv(&sb, rank_tol)?)?;
    Ok(prod.trace() / l as f64)
}

/// `λ_min / λ_max` of the class covariance; 0 for a zero covariance.
pub fn isotropy_score(samples: &Matrix, eig_tol: f64) -> Result<f64> {
    let cov = covariance(samples)?;
    let eig = sym_eig(&cov, eig_tol)?;
    let max = eig.values[0];
    let min = eig.values[eig.values.len() - 1];
    if max <= 0.0 {
        return Ok(0.0);
    }
    Ok((min / max).max(0.0))
}

pub fn mean_norms(stats: &[ClassStats]) -> Vec<f64> {
    stats.iter().map(|s| crate::numerics::norm(&s.mu)).collect()
}
