use super::{Matrix, Rng};
use crate::error::{Error, Result};

fn mean_of<'a>(points: impl Iterator<Item = &'a [f64]>, dim: usize) -> Result<Vec<f64>> {
    let mut acc = vec![0.0; dim];
    let mut count = 0usize;
    for p in points {
        if p.len() != dim {
            return Err(Error::DimensionMismatch {
                expected: dim,
                got: p.len(),
            });
        }
        for (a, v) in acc.iter_mut().zip(p) {
            *a += v;
        }
        count += 1;
    }
    if count == 0 {
        return Err(Error::EmptyClass("mean of an empty point set".into()));
    }
    let inv = 1.0 / count as f64;
    acc.iter_mut().for_each(|a| *a *= inv);
    Ok(acc)
}

fn total_variance_of<'a>(
    points: impl Iterator<Item = &'a [f64]> + Clone,
    dim: usize,
) -> Result<f64> {
    let mu = mean_of(points.clone(), dim)?;
    let mut sum = 0.0;
    let mut count = 0usize;
    for p in points {
        sum += super::sq_dist(p, &mu);
        count += 1;
    }
    Ok(sum / count as f64)
}

/// Coordinatewise arithmetic mean.
pub fn mean<P: AsRef<[f64]>>(points: &[P]) -> Result<Vec<f64>> {
    let dim = points.first().map_or(0, |p| p.as_ref().len());
    mean_of(points.iter().map(|p| p.as_ref()), dim)
}

/// `E||x - mu||^2` under the empirical distribution (biased, divides by count).
pub fn total_variance<P: AsRef<[f64]>>(points: &[P]) -> Result<f64> {
    let dim = points.first().map_or(0, |p| p.as_ref().len());
    total_variance_of(points.iter().map(|p| p.as_ref()), dim)
}

/// Mean of the rows of `m`.
pub fn rows_mean(m: &Matrix) -> Result<Vec<f64>> {
    mean_of(m.row_iter(), m.cols())
}

/// Total variance of the rows of `m`.
pub fn rows_total_variance(m: &Matrix) -> Result<f64> {
    total_variance_of(m.row_iter(), m.cols())
}

/// Biased covariance `E[(x - mu)(x - mu)^T]` of the rows of `m`.
pub fn covariance(m: &Matrix) -> Result<Matrix> {
    let mu = rows_mean(m)?;
    let p = m.cols();
    let mut centred = Matrix::zeros(m.rows(), p);
    for (i, r) in m.row_iter().enumerate() {
        for (dst, (x, c)) in centred.row_mut(i).iter_mut().zip(r.iter().zip(&mu)) {
            *dst = x - c;
        }
    }
    Ok(centred.gram().scaled(1.0 / m.rows() as f64))
}

/// One draw of `N(mean, per_coord_std^2 I)`.
pub fn gaussian(rng: &mut Rng, mean: &[f64], per_coord_std: f64) -> Vec<f64> {
    mean.iter()
        .map(|&m| m + per_coord_std * rng.standard_normal())
        .collect()
}
