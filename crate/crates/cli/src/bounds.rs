use std::path::PathBuf;

use anyhow::{bail, Context, Result};
use clap::{Args, ValueEnum};
use ncbound_core::bounds::{
    compose_transfer_bound, lemma3_rhs, lemma4_rhs, lemma5_rhs, lemma6_rhs, lemma7_rhs,
    pairs_from_report, theorem1_bound, theorem2_bound, theorem3_bound, BoundInputs, BoundReport,
    Lemma6Part, Theorem3Margin,
};
use ncbound_core::data_io::{load_weights, EmbeddingDataset, RunConfig};
use ncbound_core::metrics::{class_stats, lambda_table, PairwiseReport};
use ncbound_core::ncc::{
    avg_fewshot_soft_margin_mc, avg_margin_error, fewshot_soft_margin_mc, margin_error, McEstimate,
};
use ncbound_core::numerics::Rng;
use ncbound_core::relu_net::FeatureMap;
use ncbound_core::Error;
use serde::Serialize;
use serde_json::json;

use crate::metrics::load;
use crate::report::{num, opt_num, Failure, Output, Table};
use crate::Sweep;

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum BoundKind {
    Theorem1,
    Theorem2,
    Theorem3,
    Compose,
    Lemma3,
    Lemma4,
}

impl BoundKind {
    fn name(self) -> &'static str {
        match self {
            BoundKind::Theorem1 => "theorem1",
            BoundKind::Theorem2 => "theorem2",
            BoundKind::Theorem3 => "theorem3",
            BoundKind::Compose => "compose",
            BoundKind::Lemma3 => "lemma3",
            BoundKind::Lemma4 => "lemma4",
        }
    }
}

#[derive(Args, Debug)]
pub struct BoundsArgs {
    /// Source embeddings, or raw inputs when `--weights` is given.
    #[arg(long)]
    pub embeddings: PathBuf,
    /// ReLU network applied to the inputs; sets q and C(f).
    #[arg(long)]
    pub weights: Option<PathBuf>,
    /// Bounds to evaluate; repeatable. Defaults to all.
    #[arg(long = "bound", value_enum)]
    pub bounds: Vec<BoundKind>,
    /// Skip the per-pair lemma table.
    #[arg(long)]
    pub no_pairs: bool,
    /// CSV inputs start with a header row.
    #[arg(long)]
    pub csv_header: bool,
}

#[derive(Serialize)]
struct BoundEntry {
    bound: String,
    status: String,
    error: Option<Failure>,
    report: Option<BoundReport>,
}

#[derive(Serialize)]
struct PairLemmas {
    i: usize,
    j: usize,
    class_i: String,
    class_j: String,
    lambda_ij: f64,
    cdnv_ij: Option<f64>,
    cdnv_ji: Option<f64>,
    /// Δ = 0.1·Λ_ij, the largest margin the general CDNV lemma allows.
    margin: f64,
    ell: McEstimate,
    lemma5: Option<f64>,
    /// Holds for Δ ≤ 0.1·Λ_ij/p only.
    lemma5_symmetric: Option<f64>,
    lemma5_symmetric_margin: f64,
    margin_error_2delta: f64,
    lemma6_part1: Option<f64>,
    lemma6_part2: Option<f64>,
    lemma7: Option<f64>,
    lemma7_skipped: Option<String>,
}

#[derive(Serialize)]
struct Symmetrized {
    i: usize,
    j: usize,
    ell_ij: f64,
    ell_ji: f64,
    mean: f64,
}

#[derive(Serialize)]
struct SweepRow {
    param: String,
    value: f64,
    bound: String,
    status: String,
    total: Option<f64>,
    vacuous: Option<bool>,
    terms: Vec<(String, f64)>,
}

/// Everything measured once on the source data.
struct Measured {
    ds: EmbeddingDataset,
    table: PairwiseReport,
    base: BoundInputs,
    network: serde_json::Value,
}

fn measure(args: &BoundsArgs, cfg: &RunConfig) -> Result<Measured> {
    let raw = load(&args.embeddings, args.csv_header)?;
    let (ds, q, cf, b, network) = match &args.weights {
        Some(path) => {
            let w = load_weights(path)
                .with_context(|| format!("loading weights {}", path.display()))?;
            let map = FeatureMap::new(w);
            let ds = map
                .embed_dataset(&raw)
                .context("applying network to inputs")?;
            let b = cfg.b.unwrap_or_else(|| raw.max_norm());
            let net =
                json!({"source": "weights", "depth": map.depth(), "complexity": map.complexity()});
            (ds, map.depth(), map.complexity(), b, net)
        }
        None => {
            let p = raw.dim();
            let q = cfg.q.unwrap_or(1);
            let cf = cfg.cf.unwrap_or((p as f64).sqrt());
            let b = cfg.b.unwrap_or_else(|| raw.max_norm());
            let net = json!({"source": if cfg.cf.is_some() { "flag" } else { "identity" }, "depth": q, "complexity": cf});
            (raw, q, cf, b, net)
        }
    };
    let table = lambda_table(&ds);
    let base = BoundInputs {
        k: cfg.k,
        n: cfg.n,
        m: ds.min_class_size(),
        l: ds.class_count(),
        p: ds.dim(),
        q,
        b,
        cf,
        delta: cfg.delta,
        lambda: table.lambda,
        phi: cfg.phi,
        s: cfg.symmetry.value(ds.dim()),
        avg_cdnv: table.avg_cdnv.unwrap_or(f64::NAN),
        avg_margin_error_phi: None,
        pairs: Vec::new(),
    };
    Ok(Measured {
        ds,
        table,
        base,
        network,
    })
}

fn default_margin(x: &BoundInputs, cfg: &RunConfig) -> f64 {
    cfg.margin.filter(|m| *m > 0.0).unwrap_or(0.025 * x.lambda)
}

/// MC plug-in `Avg ℓ_{margin}` over ordered source pairs.
fn plug_in(
    ds: &EmbeddingDataset,
    n: usize,
    margin: f64,
    trials: usize,
    rng: &Rng,
) -> ncbound_core::Result<McEstimate> {
    if !(margin > 0.0) {
        return Err(Error::BadMargin(margin));
    }
    avg_fewshot_soft_margin_mc(ds, n, margin, trials, rng)
}

fn evaluate(
    kind: BoundKind,
    m: &Measured,
    x: &BoundInputs,
    cfg: &RunConfig,
    margin: f64,
    rng: &Rng,
) -> ncbound_core::Result<BoundReport> {
    let undefined = || {
        let e = m
            .table
            .pairs
            .iter()
            .find(|p| p.cdnv.is_none())
            .expect("undefined pair present");
        Error::UndefinedCdnv(
            m.table.class_ids[e.i].clone(),
            m.table.class_ids[e.j].clone(),
        )
    };
    match kind {
        BoundKind::Theorem1 => {
            if x.avg_cdnv.is_nan() {
                return Err(undefined());
            }
            theorem1_bound(x)
        }
        BoundKind::Theorem2 => {
            let pairs = pairs_from_report(&m.table)?;
            let e = avg_margin_error(&m.ds, x.phi * x.lambda);
            theorem2_bound(&BoundInputs {
                pairs,
                avg_margin_error_phi: Some(e),
                ..x.clone()
            })
        }
        BoundKind::Theorem3 => {
            let pairs = pairs_from_report(&m.table)?;
            let conv = if cfg.theorem3_literal {
                Theorem3Margin::Literal
            } else {
                Theorem3Margin::PlugIn
            };
            theorem3_bound(&BoundInputs { pairs, ..x.clone() }, conv)
        }
        BoundKind::Compose => {
            let est = plug_in(
                &m.ds,
                x.n,
                4.0 * margin,
                cfg.trials,
                &rng.child_named("compose"),
            )?;
            let mut r = compose_transfer_bound(x, margin, est.value)?;
            r.notes.push(format!(
                "loss_term from Monte Carlo: {} ± {} (SE, {} trials per pair)",
                est.value, est.std_error, cfg.trials
            ));
            Ok(r)
        }
        BoundKind::Lemma3 | BoundKind::Lemma4 => {
            let est = plug_in(
                &m.ds,
                x.n,
                2.0 * margin,
                cfg.trials,
                &rng.child_named("lemma3"),
            )?;
            let mut r = if kind == BoundKind::Lemma3 {
                lemma3_rhs(x, margin, est.value)?
            } else {
                let mut r = lemma4_rhs(x, margin, est.value)?;
                r.notes.push(
                    "evaluated at the pair-averaged loss; the right-hand side is affine in it"
                        .into(),
                );
                r
            };
            r.notes.push(format!(
                "loss_term from Monte Carlo: {} ± {} (SE, {} trials per pair)",
                est.value, est.std_error, cfg.trials
            ));
            Ok(r)
        }
    }
}

fn entry(
    kind: BoundKind,
    r: ncbound_core::Result<BoundReport>,
    errors: &mut Vec<Failure>,
) -> BoundEntry {
    match r {
        Ok(rep) => BoundEntry {
            bound: kind.name().into(),
            status: "ok".into(),
            error: None,
            report: Some(rep),
        },
        Err(e) => {
            let f = Failure::new(format!("bound:{}", kind.name()), &e);
            errors.push(f.clone());
            BoundEntry {
                bound: kind.name().into(),
                status: "error".into(),
                error: Some(f),
                report: None,
            }
        }
    }
}

fn pair_lemmas(m: &Measured, cfg: &RunConfig, rng: &Rng) -> Result<Vec<PairLemmas>> {
    let stats = class_stats(&m.ds);
    let cls = m.ds.classes();
    let (n, p) = (cfg.n, m.ds.dim());
    let s = cfg.symmetry.value(p);
    let mut out = Vec::with_capacity(m.table.pairs.len());
    for e in &m.table.pairs {
        let (i, j) = (e.i, e.j);
        let lam = e.lambda;
        let cdnv_ji = m.table.pair(j, i).cdnv;
        let margin = 0.1 * lam;
        let ell = if margin > 0.0 {
            let l = cls.len();
            fewshot_soft_margin_mc(
                &cls[i].samples,
                &cls[j].samples,
                n,
                margin,
                cfg.trials,
                &rng.child((i * l + j) as u64),
            )?
        } else {
            McEstimate {
                value: f64::NAN,
                std_error: f64::NAN,
                trials: 0,
            }
        };
        let both = e.cdnv.zip(cdnv_ji).filter(|_| lam > 0.0);
        let e2 = margin_error(&cls[i].samples, &stats[i].mu, &stats[j].mu, 2.0 * margin);
        let (lemma7, lemma7_skipped) = match lemma7_rhs(stats[i].var, lam, margin, p) {
            Ok(v) => (Some(v), None),
            Err(err) => (None, Some(err.to_string())),
        };
        out.push(PairLemmas {
            i,
            j,
            class_i: m.table.class_ids[i].clone(),
            class_j: m.table.class_ids[j].clone(),
            lambda_ij: lam,
            cdnv_ij: e.cdnv,
            cdnv_ji,
            margin,
            ell,
            lemma5: both.map(|(a, b)| lemma5_rhs(a, b, n, p, false)),
            lemma5_symmetric: both.map(|(a, b)| lemma5_rhs(a, b, n, p, true)),
            lemma5_symmetric_margin: 0.1 * lam / p as f64,
            margin_error_2delta: e2,
            lemma6_part1: both
                .and_then(|(a, b)| lemma6_rhs(a, b, lam, n, margin, s, Lemma6Part::WithE(e2)).ok()),
            lemma6_part2: both
                .and_then(|(a, b)| lemma6_rhs(a, b, lam, n, margin, s, Lemma6Part::PureCdnv).ok()),
            lemma7,
            lemma7_skipped,
        });
    }
    Ok(out)
}

pub fn run(args: &BoundsArgs, cfg: &RunConfig, sweep: Option<&Sweep>) -> Result<Output> {
    let m = measure(args, cfg)?;
    let kinds: Vec<BoundKind> = if args.bounds.is_empty() {
        BoundKind::value_variants().to_vec()
    } else {
        args.bounds.clone()
    };
    let rng = Rng::new(cfg.seed);
    let margin = default_margin(&m.base, cfg);
    let mut errors = Vec::new();

    let entries: Vec<BoundEntry> = kinds
        .iter()
        .map(|&k| {
            entry(
                k,
                evaluate(k, &m, &m.base, cfg, margin, &rng.child_named(k.name())),
                &mut errors,
            )
        })
        .collect();

    let mut bounds_t = Table::new("bounds", &["bound", "status", "term", "value"]);
    for e in &entries {
        match &e.report {
            Some(r) => {
                for t in &r.terms {
                    bounds_t.push(vec![
                        e.bound.clone(),
                        e.status.clone(),
                        t.name.clone(),
                        num(t.value),
                    ]);
                }
                bounds_t.push(vec![
                    e.bound.clone(),
                    e.status.clone(),
                    "total".into(),
                    num(r.total),
                ]);
            }
            None => {
                let msg = e.error.as_ref().map(|f| f.code.clone()).unwrap_or_default();
                bounds_t.push(vec![e.bound.clone(), e.status.clone(), msg, String::new()]);
            }
        }
    }
    let mut tables = vec![bounds_t];

    let mut pairs = Vec::new();
    let mut symmetrized = Vec::new();
    if !args.no_pairs {
        pairs = pair_lemmas(&m, cfg, &rng.child_named("pairs"))?;
        let mut t = Table::new(
            "pairs",
            &[
                "i",
                "j",
                "class_i",
                "class_j",
                "lambda_ij",
                "cdnv_ij",
                "cdnv_ji",
                "margin",
                "ell",
                "ell_se",
                "lemma5",
                "lemma5_symmetric",
                "lemma6_part1",
                "lemma6_part2",
                "lemma7",
            ],
        );
        for r in &pairs {
            t.push(vec![
                r.i.to_string(),
                r.j.to_string(),
                r.class_i.clone(),
                r.class_j.clone(),
                num(r.lambda_ij),
                opt_num(r.cdnv_ij),
                opt_num(r.cdnv_ji),
                num(r.margin),
                num(r.ell.value),
                num(r.ell.std_error),
                opt_num(r.lemma5),
                opt_num(r.lemma5_symmetric),
                opt_num(r.lemma6_part1),
                opt_num(r.lemma6_part2),
                opt_num(r.lemma7),
            ]);
        }
        tables.push(t);
        let mut st = Table::new("symmetrized", &["i", "j", "ell_ij", "ell_ji", "mean"]);
        for r in pairs.iter().filter(|r| r.i < r.j) {
            let back = pairs
                .iter()
                .find(|b| b.i == r.j && b.j == r.i)
                .expect("ordered table is complete");
            let s = Symmetrized {
                i: r.i,
                j: r.j,
                ell_ij: r.ell.value,
                ell_ji: back.ell.value,
                mean: 0.5 * (r.ell.value + back.ell.value),
            };
            st.push(vec![
                s.i.to_string(),
                s.j.to_string(),
                num(s.ell_ij),
                num(s.ell_ji),
                num(s.mean),
            ]);
            symmetrized.push(s);
        }
        tables.push(st);
    }

    let mut sweep_rows = Vec::new();
    if let Some(sw) = sweep {
        let mut t = Table::new(
            "sweep",
            &["param", "value", "bound", "status", "term", "term_value"],
        );
        for (step, &v) in sw.values.iter().enumerate() {
            let srng = rng.child_named("sweep").child(step as u64);
            let (x, margin_v, kinds): (BoundInputs, f64, Vec<BoundKind>) = match sw.param.as_str() {
                "margin" => (
                    m.base.clone(),
                    v,
                    vec![BoundKind::Compose, BoundKind::Lemma3],
                ),
                "phi" => (
                    BoundInputs {
                        phi: v,
                        ..m.base.clone()
                    },
                    margin,
                    vec![BoundKind::Theorem2],
                ),
                "delta" => (
                    BoundInputs {
                        delta: v,
                        ..m.base.clone()
                    },
                    margin,
                    vec![BoundKind::Theorem1, BoundKind::Theorem3],
                ),
                other => {
                    bail!("InvalidArgument: bounds can sweep margin, phi or delta, not {other:?}")
                }
            };
            for k in kinds {
                let r = evaluate(k, &m, &x, cfg, margin_v, &srng.child_named(k.name()));
                let row = match r {
                    Ok(rep) => SweepRow {
                        param: sw.param.clone(),
                        value: v,
                        bound: k.name().into(),
                        status: "ok".into(),
                        total: Some(rep.total),
                        vacuous: Some(rep.vacuous),
                        terms: rep
                            .terms
                            .iter()
                            .map(|t| (t.name.clone(), t.value))
                            .collect(),
                    },
                    Err(e) => {
                        errors.push(Failure::new(
                            format!("sweep:{}={v}:{}", sw.param, k.name()),
                            &e,
                        ));
                        SweepRow {
                            param: sw.param.clone(),
                            value: v,
                            bound: k.name().into(),
                            status: e.code().into(),
                            total: None,
                            vacuous: None,
                            terms: Vec::new(),
                        }
                    }
                };
                for (name, tv) in &row.terms {
                    t.push(vec![
                        row.param.clone(),
                        num(v),
                        row.bound.clone(),
                        row.status.clone(),
                        name.clone(),
                        num(*tv),
                    ]);
                }
                t.push(vec![
                    row.param.clone(),
                    num(v),
                    row.bound.clone(),
                    row.status.clone(),
                    "total".into(),
                    opt_num(row.total),
                ]);
                sweep_rows.push(row);
            }
        }
        tables.push(t);
    }

    let x = &m.base;
    Ok(Output {
        inputs: json!({
            "embeddings": args.embeddings.display().to_string(),
            "weights": args.weights.as_ref().map(|p| p.display().to_string()),
            "bounds": kinds.iter().map(|k| k.name()).collect::<Vec<_>>(),
            "k": x.k,
            "n": x.n,
            "delta": x.delta,
            "phi": x.phi,
            "margin": margin,
            "trials": cfg.trials,
            "symmetry": cfg.symmetry,
            "theorem3_literal": cfg.theorem3_literal,
            "sweep": sweep.map(|s| json!({"param": s.param, "values": s.values})),
        }),
        outputs: json!({
            "measured": {
                "m": x.m,
                "l": x.l,
                "p": x.p,
                "q": x.q,
                "b": x.b,
                "cf": x.cf,
                "s": x.s,
                "lambda": x.lambda,
                "avg_cdnv": m.table.avg_cdnv,
                "network": m.network,
            },
            "bounds": entries,
            "pairs": pairs,
            "symmetrized": symmetrized,
            "sweep": sweep_rows,
        }),
        tables,
        errors,
    })
}
