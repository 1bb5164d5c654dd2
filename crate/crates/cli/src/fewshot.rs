use std::path::PathBuf;

use anyhow::{bail, Context, Result};
use clap::Args;
use ncbound_core::data_io::RunConfig;
use ncbound_core::numerics::Rng;
use ncbound_core::synth::{draw_classes, SyntheticWorld};
use ncbound_core::transfer::{transfer_errors, EpisodeSpec, Head, Source, TransferSummary};
use serde::Serialize;
use serde_json::json;

use crate::metrics::load;
use crate::report::{num, Output, Table};
use crate::Sweep;

#[derive(Args, Debug)]
pub struct FewshotArgs {
    /// Embedding file; repeat to evaluate several independently trained models.
    #[arg(long, conflicts_with = "world")]
    pub embeddings: Vec<PathBuf>,
    /// Synthetic world spec (`key = value` file).
    #[arg(long)]
    pub world: Option<PathBuf>,
    /// With `--world`: draw this many classes once and pick episode classes from them.
    #[arg(long, requires = "world")]
    pub pool: Option<usize>,
    /// `ncc`, `ridge`, `ridge:<alpha>` or `known-means`; repeatable.
    #[arg(long = "head", default_values_t = vec!["ncc".to_string()])]
    pub heads: Vec<String>,
    /// CSV inputs start with a header row.
    #[arg(long)]
    pub csv_header: bool,
}

#[derive(Serialize)]
struct HeadSummary {
    head: String,
    mean_error: f64,
    accuracy: f64,
    std_error: f64,
    ci95: f64,
}

#[derive(Serialize)]
struct SourceResult {
    source: String,
    summaries: Vec<HeadSummary>,
}

#[derive(Serialize)]
struct SweepRow {
    param: String,
    value: f64,
    source: String,
    head: String,
    mean_error: f64,
    std_error: f64,
    ci95: f64,
}

enum Loaded {
    Datasets(Vec<(String, ncbound_core::data_io::EmbeddingDataset)>),
    World(String, SyntheticWorld, Option<usize>),
}

fn parse_heads(args: &FewshotArgs, cfg: &RunConfig) -> Result<Vec<Head>> {
    args.heads
        .iter()
        .map(|h| {
            // A bare `ridge` takes its α from the run configuration.
            if h == "ridge" {
                Ok(Head::Ridge { alpha: cfg.alpha })
            } else {
                h.parse::<Head>().map_err(Into::into)
            }
        })
        .collect()
}

fn summarize(head: Head, s: &TransferSummary) -> HeadSummary {
    HeadSummary {
        head: head.to_string(),
        mean_error: s.mean,
        accuracy: 1.0 - s.mean,
        std_error: s.std_error,
        ci95: s.ci95,
    }
}

/// Runs every head on one source; episode streams depend only on `rng`.
fn evaluate(
    loaded: &Loaded,
    idx: usize,
    spec: EpisodeSpec,
    heads: &[Head],
    rng: &Rng,
) -> Result<(String, Vec<TransferSummary>)> {
    match loaded {
        Loaded::Datasets(list) => {
            let (name, ds) = &list[idx];
            let out = transfer_errors(Source::Dataset(ds), spec, heads, rng)
                .with_context(|| format!("few-shot evaluation on {name}"))?;
            Ok((name.clone(), out))
        }
        Loaded::World(name, world, pool) => {
            let out = match pool {
                Some(size) => {
                    let gens = draw_classes(world, *size, &mut rng.child_named("pool"))?;
                    transfer_errors(
                        Source::Pool(&gens),
                        spec,
                        heads,
                        &rng.child_named("episodes"),
                    )?
                }
                None => transfer_errors(
                    Source::World(world),
                    spec,
                    heads,
                    &rng.child_named("episodes"),
                )?,
            };
            Ok((name.clone(), out))
        }
    }
}

pub fn run(args: &FewshotArgs, cfg: &RunConfig, sweep: Option<&Sweep>) -> Result<Output> {
    let heads = parse_heads(args, cfg)?;
    let loaded = match &args.world {
        Some(path) => {
            let text = std::fs::read_to_string(path)
                .with_context(|| format!("reading world spec {}", path.display()))?;
            let world = SyntheticWorld::parse(&text)
                .with_context(|| format!("parsing world spec {}", path.display()))?;
            Loaded::World(path.display().to_string(), world, args.pool)
        }
        None => {
            if args.embeddings.is_empty() {
                bail!("InvalidArgument: give --embeddings or --world");
            }
            Loaded::Datasets(
                args.embeddings
                    .iter()
                    .map(|p| Ok((p.display().to_string(), load(p, args.csv_header)?)))
                    .collect::<Result<_>>()?,
            )
        }
    };
    let sources = match &loaded {
        Loaded::Datasets(v) => v.len(),
        Loaded::World(..) => 1,
    };
    let base = EpisodeSpec {
        k: cfg.k,
        n: cfg.n,
        n_test: cfg.n_test,
        episodes: cfg.episodes,
    };
    let root = Rng::new(cfg.seed);

    let mut results = Vec::new();
    let mut summary_t = Table::new(
        "summary",
        &[
            "source",
            "head",
            "mean_error",
            "accuracy",
            "std_error",
            "ci95",
        ],
    );
    let mut episode_t = Table::new(
        "episodes",
        &["source", "head", "episode", "stream", "error"],
    );
    for idx in 0..sources {
        let (name, out) = evaluate(&loaded, idx, base, &heads, &root.child(idx as u64))?;
        let mut summaries = Vec::new();
        for (head, s) in heads.iter().zip(&out) {
            let h = summarize(*head, s);
            summary_t.push(vec![
                name.clone(),
                h.head.clone(),
                num(h.mean_error),
                num(h.accuracy),
                num(h.std_error),
                num(h.ci95),
            ]);
            for e in &s.episodes {
                episode_t.push(vec![
                    name.clone(),
                    h.head.clone(),
                    e.episode.to_string(),
                    e.stream.to_string(),
                    num(e.error),
                ]);
            }
            summaries.push(h);
        }
        results.push((
            SourceResult {
                source: name,
                summaries,
            },
            out,
        ));
    }

    // Across independently trained models: mean and normal CI over per-source means.
    let mut across = Vec::new();
    if sources > 1 {
        for (h, head) in heads.iter().enumerate() {
            let means: Vec<f64> = results.iter().map(|r| r.1[h].mean).collect();
            let k = means.len() as f64;
            let mean = means.iter().sum::<f64>() / k;
            let var = means.iter().map(|m| (m - mean).powi(2)).sum::<f64>() / (k - 1.0);
            let se = (var / k).sqrt();
            across.push(HeadSummary {
                head: head.to_string(),
                mean_error: mean,
                accuracy: 1.0 - mean,
                std_error: se,
                ci95: 1.96 * se,
            });
        }
        for h in &across {
            summary_t.push(vec![
                "all".into(),
                h.head.clone(),
                num(h.mean_error),
                num(h.accuracy),
                num(h.std_error),
                num(h.ci95),
            ]);
        }
    }

    let mut tables = vec![summary_t, episode_t];
    let mut sweep_rows = Vec::new();
    if let Some(sw) = sweep {
        let mut t = Table::new(
            "sweep",
            &[
                "param",
                "value",
                "source",
                "head",
                "mean_error",
                "std_error",
                "ci95",
            ],
        );
        for (step, &v) in sw.values.iter().enumerate() {
            let mut spec = base;
            let mut step_heads = heads.clone();
            match sw.param.as_str() {
                "n" => {
                    if v < 1.0 || v.fract() != 0.0 {
                        bail!("InvalidArgument: sweep over n needs positive integers, got {v}");
                    }
                    spec.n = v as usize;
                }
                "alpha" => {
                    for h in step_heads.iter_mut() {
                        if let Head::Ridge { alpha } = h {
                            *alpha = v;
                        }
                    }
                }
                other => bail!("InvalidArgument: fewshot can sweep n or alpha, not {other:?}"),
            }
            let rng = Rng::new(cfg.seed).child_named("sweep").child(step as u64);
            for idx in 0..sources {
                let (name, out) =
                    evaluate(&loaded, idx, spec, &step_heads, &rng.child(idx as u64))?;
                for (head, s) in step_heads.iter().zip(&out) {
                    let row = SweepRow {
                        param: sw.param.clone(),
                        value: v,
                        source: name.clone(),
                        head: head.to_string(),
                        mean_error: s.mean,
                        std_error: s.std_error,
                        ci95: s.ci95,
                    };
                    t.push(vec![
                        row.param.clone(),
                        num(row.value),
                        row.source.clone(),
                        row.head.clone(),
                        num(row.mean_error),
                        num(row.std_error),
                        num(row.ci95),
                    ]);
                    sweep_rows.push(row);
                }
            }
        }
        tables.push(t);
    }

    let per_source: Vec<serde_json::Value> = results
        .iter()
        .map(|(r, out)| {
            json!({
                "source": r.source,
                "summaries": r.summaries,
                "episodes": heads.iter().zip(out).map(|(h, s)| json!({
                    "head": h.to_string(),
                    "errors": s.episodes.iter().map(|e| e.error).collect::<Vec<_>>(),
                    "streams": s.episodes.iter().map(|e| e.stream).collect::<Vec<_>>(),
                })).collect::<Vec<_>>(),
            })
        })
        .collect();
    let (source_kind, pool) = match &loaded {
        Loaded::Datasets(_) => ("embeddings", None),
        Loaded::World(_, _, pool) => ("world", *pool),
    };
    Ok(Output {
        inputs: json!({
            "source": source_kind,
            "files": results.iter().map(|r| r.0.source.clone()).collect::<Vec<_>>(),
            "pool": pool,
            "k": cfg.k,
            "n": cfg.n,
            "n_test": cfg.n_test,
            "episodes": cfg.episodes,
            "heads": heads.iter().map(|h| h.to_string()).collect::<Vec<_>>(),
            "sweep": sweep.map(|s| json!({"param": s.param, "values": s.values})),
        }),
        outputs: json!({
            "sources": per_source,
            "across_sources": across,
            "sweep": sweep_rows,
        }),
        tables,
        errors: Vec::new(),
    })
}
