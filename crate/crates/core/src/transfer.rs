//! Episodic k-way n-shot evaluation with NCC and ridge heads.

use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data_io::EmbeddingDataset;
use crate::error::{Error, Result};
use crate::ncc::nearest;
use crate::numerics::{ridge_solve, rows_mean, Matrix, Rng};
use crate::synth::{draw_classes, GaussianClass, SyntheticWorld};

/// Where episode classes come from.
#[derive(Debug, Clone, Copy)]
pub enum Source<'a> {
    /// Finite labelled embeddings; support and query are disjoint.
    Dataset(&'a EmbeddingDataset),
    /// Fixed pool of generators; `k` of them are picked per episode.
    Pool(&'a [GaussianClass]),
    /// Fresh classes drawn from the world every episode.
    World(&'a SyntheticWorld),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Episode {
    pub class_ids: Vec<String>,
    /// Per class, `n × p`.
    pub support: Vec<Matrix>,
    /// Per class, `n_test × p`.
    pub query: Vec<Matrix>,
    /// Population means of the selected classes.
    pub true_means: Vec<Vec<f64>>,
    /// Stream id of the generator that drew this episode.
    pub stream: u64,
}

impl Episode {
    pub fn k(&self) -> usize {
        self.class_ids.len()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum Head {
    Ncc,
    /// Ridge regression on one-hot targets, `λ = α√(kn)`.
    Ridge {
        alpha: f64,
    },
    /// NCC with the population means (the `n → ∞` limit).
    KnownMeans,
}

impl fmt::Display for Head {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Head::Ncc => write!(f, "ncc"),
            Head::Ridge { alpha } => write!(f, "ridge(alpha={alpha})"),
            Head::KnownMeans => write!(f, "known-means"),
        }
    }
}

impl FromStr for Head {
    type Err = Error;

    /// `ncc`, `known-means`, `ridge` (α = 1) or `ridge:<alpha>`.
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "ncc" => Ok(Head::Ncc),
            "known-means" => Ok(Head::KnownMeans),
            "ridge" => Ok(Head::Ridge { alpha: 1.0 }),
            _ => match s.strip_prefix("ridge:") {
                Some(a) => Ok(Head::Ridge {
                    alpha: a
                        .parse()
                        .map_err(|_| Error::InvalidArgument(format!("bad ridge alpha {a:?}")))?,
                }),
                None => Err(Error::InvalidArgument(format!("unknown head {s:?}"))),
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeResult {
    pub episode: usize,
    pub stream: u64,
    pub error: f64,
}

pub fn sample_episode(
    source: Source<'_>,
    k: usize,
    n: usize,
    n_test: usize,
    rng: &mut Rng,
) -> Result<Episode> {
    if k < 2 {
        return Err(Error::InvalidArgument(format!("k must be >= 2, got {k}")));
    }
    if n == 0 || n_test == 0 {
        return Err(Error::InvalidArgument("n and n_test must be >= 1".into()));
    }
    let stream = rng.stream_id();
    match source {
        Source::Dataset(ds) => {
            if ds.class_count() < k {
                return Err(Error::NotEnoughClasses {
                    needed: k,
                    available: ds.class_count(),
                });
            }
            let picked = rng.choose_distinct(ds.class_count(), k);
            let mut ep = Episode {
                class_ids: Vec::with_capacity(k),
                support: Vec::with_capacity(k),
                query: Vec::with_capacity(k),
                true_means: Vec::with_capacity(k),
                stream,
            };
            for c in picked {
                let cls = &ds.classes()[c];
                if cls.count() < n + n_test {
                    return Err(Error::NotEnoughSamples {
                        class: cls.id.clone(),
                        needed: n + n_test,
                        available: cls.count(),
                    });
                }
                let idx = rng.choose_distinct(cls.count(), n + n_test);
                let rows = |ix: &[usize]| {
                    Matrix::from_rows(&ix.iter().map(|&i| cls.samples.row(i)).collect::<Vec<_>>())
                };
                ep.support.push(rows(&idx[..n])?);
                ep.query.push(rows(&idx[n..])?);
                ep.true_means.push(rows_mean(&cls.samples)?);
                ep.class_ids.push(cls.id.clone());
            }
            Ok(ep)
        }
        Source::Pool(pool) => {
            if pool.len() < k {
                return Err(Error::NotEnoughClasses {
                    needed: k,
                    available: pool.len(),
                });
            }
            let picked = rng.choose_distinct(pool.len(), k);
            let gens: Vec<&GaussianClass> = picked.iter().map(|&i| &pool[i]).collect();
            let ids = picked.iter().map(|i| format!("c{i}")).collect();
            Ok(from_generators(&gens, ids, n, n_test, rng, stream))
        }
        Source::World(world) => {
            let gens = draw_classes(world, k, rng)?;
            let refs: Vec<&GaussianClass> = gens.iter().collect();
            let ids = (0..k).map(|i| format!("w{i}")).collect();
            Ok(from_generators(&refs, ids, n, n_test, rng, stream))
        }
    }
}

fn from_generators(
    gens: &[&GaussianClass],
    class_ids: Vec<String>,
    n: usize,
    n_test: usize,
    rng: &mut Rng,
    stream: u64,
) -> Episode {
    let support = gens.iter().map(|g| g.draw(n, rng)).collect();
    let query = gens.iter().map(|g| g.draw(n_test, rng)).collect();
    Episode {
        class_ids,
        support,
        query,
        true_means: gens.iter().map(|g| g.mean().to_vec()).collect(),
        stream,
    }
}

fn error_rate(ep: &Episode, mut predict: impl FnMut(&[f64]) -> usize) -> f64 {
    let mut wrong = 0usize;
    let mut total = 0usize;
    for (c, q) in ep.query.iter().enumerate() {
        for x in q.row_iter() {
            if predict(x) != c {
                wrong += 1;
            }
            total += 1;
        }
    }
    wrong as f64 / total as f64
}

/// Query error of NCC with support means as centers.
pub fn eval_ncc(ep: &Episode) -> Result<f64> {
    let centers = ep
        .support
        .iter()
        .map(rows_mean)
        .collect::<Result<Vec<_>>>()?;
    Ok(error_rate(ep, |x| nearest(&centers, x)))
}

pub fn eval_known_means(ep: &Episode) -> f64 {
    error_rate(ep, |x| nearest(&ep.true_means, x))
}

/// Ridge weights `(XᵀX + λI)⁻¹ XᵀY` on the stacked support with `λ = α√(kn)`.
pub fn ridge_weights(ep: &Episode, alpha: f64) -> Result<Matrix> {
    let k = ep.k();
    let rows: Vec<&[f64]> = ep.support.iter().flat_map(|s| s.row_iter()).collect();
    let x = Matrix::from_rows(&rows)?;
    let mut y = Matrix::zeros(rows.len(), k);
    let mut r = 0;
    for (c, s) in ep.support.iter().enumerate() {
        for _ in 0..s.rows() {
            y[(r, c)] = 1.0;
            r += 1;
        }
    }
    let lambda = if alpha.is_infinite() {
        f64::INFINITY
    } else {
        alpha * (rows.len() as f64).sqrt()
    };
    ridge_solve(&x, &y, lambda)
}

/// Query error of the ridge head; argmax ties go to the lowest class index.
pub fn eval_ridge(ep: &Episode, alpha: f64) -> Result<f64> {
    if !(alpha >= 0.0) {
        return Err(Error::InvalidArgument(format!(
            "alpha must be >= 0, got {alpha}"
        )));
    }
    let w = ridge_weights(ep, alpha)?;
    let wt = w.transpose();
    Ok(error_rate(ep, |x| {
        let scores = wt.mat_vec(x).expect("query dimension matches support");
        let mut best = 0;
        for (c, &s) in scores.iter().enumerate() {
            if s > scores[best] {
                best = c;
            }
        }
        best
    }))
}

pub fn eval_head(ep: &Episode, head: Head) -> Result<f64> {
    match head {
        Head::Ncc => eval_ncc(ep),
        Head::Ridge { alpha } => eval_ridge(ep, alpha),
        Head::KnownMeans => Ok(eval_known_means(ep)),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct EpisodeSpec {
    pub k: usize,
    pub n: usize,
    pub n_test: usize,
    pub episodes: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransferSummary {
    pub head: Head,
    pub mean: f64,
    pub std_error: f64,
    /// Half-width of the normal 95% interval, `1.96·SE`.
    pub ci95: f64,
    pub episodes: Vec<EpisodeResult>,
}

fn summarize(head: Head, episodes: Vec<EpisodeResult>) -> TransferSummary {
    let e = episodes.len() as f64;
    let mean = episodes.iter().map(|r| r.error).sum::<f64>() / e;
    let std_error = if episodes.len() > 1 {
        let var = episodes
            .iter()
            .map(|r| (r.error - mean).powi(2))
            .sum::<f64>()
            / (e - 1.0);
        (var / e).sqrt()
    } else {
        0.0
    };
    TransferSummary {
        head,
        mean,
        std_error,
        ci95: 1.96 * std_error,
        episodes,
    }
}

/// Evaluates every head on the same episodes; episode `i` is drawn from `rng.child(i)`.
pub fn transfer_errors(
    source: Source<'_>,
    spec: EpisodeSpec,
    heads: &[Head],
    rng: &Rng,
) -> Result<Vec<TransferSummary>> {
    if spec.episodes == 0 {
        return Err(Error::InvalidArgument("episodes must be >= 1".into()));
    }
    let per_episode: Vec<Vec<EpisodeResult>> = (0..spec.episodes)
        .into_par_iter()
        .map(|i| {
            let mut r = rng.child(i as u64);
            let ep = sample_episode(source, spec.k, spec.n, spec.n_test, &mut r)?;
            heads
                .iter()
                .map(|&h| {
                    Ok(EpisodeResult {
                        episode: i,
                        stream: ep.stream,
                        error: eval_head(&ep, h)?,
                    })
                })
                .collect()
        })
        .collect::<Result<_>>()?;
    Ok(heads
        .iter()
        .enumerate()
        .map(|(h, &head)| summarize(head, per_episode.iter().map(|row| row[h].clone()).collect()))
        .collect())
}

pub fn transfer_error(
    source: Source<'_>,
    spec: EpisodeSpec,
    head: Head,
    rng: &Rng,
) -> Result<TransferSummary> {
    Ok(transfer_errors(source, spec, &[head], rng)?.remove(0))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth::MeanLaw;

    fn spec(k: usize, n: usize, n_test: usize, episodes: usize) -> EpisodeSpec {
        EpisodeSpec {
            k,
            n,
            n_test,
            episodes,
        }
    }

    fn grid_dataset(classes: usize, m: usize) -> EmbeddingDataset {
        let rows = (0..classes)
            .map(|c| {
                (
                    format!("k{c}"),
                    (0..m)
                        .map(|i| vec![c as f64 * 10.0, i as f64])
                        .collect::<Vec<_>>(),
                )
            })
            .collect();
        EmbeddingDataset::from_class_rows(rows).unwrap()
    }

    #[test]
    fn all_classes_selected_and_deterministic() {
        let ds = grid_dataset(4, 10);
        let a = sample_episode(Source::Dataset(&ds), 4, 2, 3, &mut Rng::new(1)).unwrap();
        let mut ids = a.class_ids.clone();
        ids.sort();
        assert_eq!(ids, vec!["k0", "k1", "k2", "k3"]);
        let b = sample_episode(Source::Dataset(&ds), 4, 2, 3, &mut Rng::new(1)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn support_query_disjoint() {
        let ds = grid_dataset(3, 12);
        let root = Rng::new(2);
        for e in 0..1000 {
            let ep = sample_episode(Source::Dataset(&ds), 2, 4, 8, &mut root.child(e)).unwrap();
            for c in 0..2 {
                let mut seen: Vec<f64> = ep.support[c].row_iter().map(|r| r[1]).collect();
                seen.extend(ep.query[c].row_iter().map(|r| r[1]));
                seen.sort_by(f64::total_cmp);
                seen.dedup();
                assert_eq!(seen.len(), 12);
            }
        }
    }

    #[test]
    fn episode_errors() {
        let ds = grid_dataset(3, 5);
        assert!(matches!(
            sample_episode(Source::Dataset(&ds), 4, 1, 1, &mut Rng::new(0)),
            Err(Error::NotEnoughClasses { .. })
        ));
        assert!(matches!(
            sample_episode(Source::Dataset(&ds), 2, 3, 3, &mut Rng::new(0)),
            Err(Error::NotEnoughSamples { .. })
        ));
    }

    #[test]
    fn collapse_gives_zero_error() {
        let w = SyntheticWorld::new(8, MeanLaw::SimplexEtf { scale: 1.0 }, 0.0).unwrap();
        let rng = Rng::new(3);
        let out = transfer_errors(
            Source::World(&w),
            spec(5, 1, 20, 100),
            &[Head::Ncc, Head::Ridge { alpha: 1.0 }, Head::KnownMeans],
            &rng,
        )
        .unwrap();
        for s in out {
            assert_eq!((s.mean, s.ci95), (0.0, 0.0), "{}", s.head);
        }
    }

    #[test]
    fn identical_classes_near_half() {
        let g = GaussianClass::spherical(vec![0.0; 3], 1.0);
        let pool = vec![g.clone(), g];
        let s = transfer_error(
            Source::Pool(&pool),
            spec(2, 1, 50, 400),
            Head::Ncc,
            &Rng::new(4),
        )
        .unwrap();
        assert!(
            (s.mean - 0.5).abs() <= 3.0 * s.std_error,
            "{} ± {}",
            s.mean,
            s.std_error
        );
    }

    #[test]
    fn infinite_alpha_predicts_class_zero() {
        let w = SyntheticWorld::new(4, MeanLaw::Gaussian { tau: 3.0 }, 0.5).unwrap();
        let ep = sample_episode(Source::World(&w), 4, 2, 10, &mut Rng::new(5)).unwrap();
        assert_eq!(eval_ridge(&ep, f64::INFINITY).unwrap(), 0.75);
        assert!(eval_ridge(&ep, -1.0).is_err());
    }

    #[test]
    fn ridge_matches_hand_solution() {
        // support rows e1, e2, e3 (one per class), α = 1, k = 3, n = 1: λ = √3
        let eye = |i: usize| {
            let mut v = vec![0.0; 3];
            v[i] = 1.0;
            Matrix::from_rows(&[v]).unwrap()
        };
        let ep = Episode {
            class_ids: vec!["a".into(), "b".into(), "c".into()],
            support: (0..3).map(eye).collect(),
            query: (0..3).map(eye).collect(),
            true_means: vec![vec![0.0; 3]; 3],
            stream: 0,
        };
        let w = ridge_weights(&ep, 1.0).unwrap();
        let d = 1.0 / (1.0 + 3f64.sqrt());
        for i in 0..3 {
            for j in 0..3 {
                let want = if i == j { d } else { 0.0 };
                assert!((w[(i, j)] - want).abs() < 1e-14);
            }
        }
        assert_eq!(eval_ridge(&ep, 1.0).unwrap(), 0.0);
    }

    #[test]
    fn ncc_two_class_matches_loop() {
        let w = SyntheticWorld::new(3, MeanLaw::Gaussian { tau: 1.5 }, 1.0).unwrap();
        let root = Rng::new(6);
        for e in 0..50 {
            let ep = sample_episode(Source::World(&w), 2, 3, 20, &mut root.child(e)).unwrap();
            let m0 = rows_mean(&ep.support[0]).unwrap();
            let m1 = rows_mean(&ep.support[1]).unwrap();
            let mut correct = 0;
            for (c, q) in ep.query.iter().enumerate() {
                for x in q.row_iter() {
                    let d0 = crate::numerics::sq_dist(x, &m0);
                    let d1 = crate::numerics::sq_dist(x, &m1);
                    let pred = if d1 < d0 { 1 } else { 0 };
                    correct += usize::from(pred == c);
                }
            }
            let acc = correct as f64 / 40.0;
            assert!((eval_ncc(&ep).unwrap() - (1.0 - acc)).abs() < 1e-15);
        }
    }

    #[test]
    fn head_parsing() {
        assert_eq!("ncc".parse::<Head>().unwrap(), Head::Ncc);
        assert_eq!(
            "ridge:0.5".parse::<Head>().unwrap(),
            Head::Ridge { alpha: 0.5 }
        );
        assert_eq!("known-means".parse::<Head>().unwrap(), Head::KnownMeans);
        assert!("svm".parse::<Head>().is_err());
    }

    #[test]
    fn parallel_determinism() {
        let w = SyntheticWorld::new(6, MeanLaw::Gaussian { tau: 2.0 }, 1.0).unwrap();
        let a = transfer_error(
            Source::World(&w),
            spec(3, 2, 10, 64),
            Head::Ncc,
            &Rng::new(7),
        )
        .unwrap();
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(1)
            .build()
            .unwrap();
        let b = pool
            .install(|| {
                transfer_error(
                    Source::World(&w),
                    spec(3, 2, 10, 64),
                    Head::Ncc,
                    &Rng::new(7),
                )
            })
            .unwrap();
        assert_eq!(a, b);
    }
}
