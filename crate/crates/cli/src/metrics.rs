use std::path::PathBuf;

use anyhow::{Context, Result};
use clap::Args;
use ncbound_core::data_io::{load_embeddings_with, EmbeddingDataset, RunConfig};
use ncbound_core::metrics::{
    class_stats, goldblum_ratio, isotropy_score, lambda_table, mean_norms, papyan_trace,
};
use serde::Serialize;
use serde_json::json;

use crate::report::{num, opt_num, Failure, Output, Table};

#[derive(Args, Debug)]
pub struct MetricsArgs {
    /// Embedding file; repeat for a series of snapshots.
    #[arg(long, required = true)]
    pub embeddings: Vec<PathBuf>,
    /// CSV inputs start with a header row.
    #[arg(long)]
    pub csv_header: bool,
}

#[derive(Serialize)]
struct ClassRow {
    id: String,
    count: usize,
    var: f64,
    mean_norm: f64,
    isotropy: Option<f64>,
}

#[derive(Serialize)]
struct PairRow {
    i: usize,
    j: usize,
    id_i: String,
    id_j: String,
    cdnv: Option<f64>,
    lambda_ij: f64,
}

#[derive(Serialize)]
struct Snapshot {
    snapshot: usize,
    file: String,
    classes: usize,
    p: usize,
    min_class_size: usize,
    avg_cdnv: Option<f64>,
    lambda: f64,
    goldblum: Option<f64>,
    papyan: Option<f64>,
    class_stats: Vec<ClassRow>,
    pairs: Vec<PairRow>,
}

pub fn load(path: &PathBuf, csv_header: bool) -> Result<EmbeddingDataset> {
    load_embeddings_with(path, csv_header)
        .with_context(|| format!("loading embeddings {}", path.display()))
}

fn snapshot(
    idx: usize,
    file: &PathBuf,
    ds: &EmbeddingDataset,
    cfg: &RunConfig,
    errors: &mut Vec<Failure>,
) -> Snapshot {
    let scope = |what: &str| format!("metrics[{idx}]:{what}");
    let table = lambda_table(ds);
    let stats = class_stats(ds);
    let norms = mean_norms(&stats);
    if table.avg_cdnv.is_none() {
        let (i, j) = table
            .pairs
            .iter()
            .find(|p| p.cdnv.is_none())
            .map(|p| (p.i, p.j))
            .unwrap_or((0, 1));
        let e = ncbound_core::Error::UndefinedCdnv(
            table.class_ids[i].clone(),
            table.class_ids[j].clone(),
        );
        errors.push(Failure::new(scope("avg_cdnv"), &e));
    }
    let mut soft = |what: &str, r: ncbound_core::Result<f64>| match r {
        Ok(v) => Some(v),
        Err(e) => {
            errors.push(Failure::new(scope(what), &e));
            None
        }
    };
    let goldblum = soft("goldblum", goldblum_ratio(ds));
    let papyan = soft("papyan", papyan_trace(ds, cfg.rank_tol));
    let class_rows = ds
        .classes()
        .iter()
        .zip(&stats)
        .zip(&norms)
        .map(|((c, s), &nrm)| ClassRow {
            id: c.id.clone(),
            count: s.count,
            var: s.var,
            mean_norm: nrm,
            isotropy: soft(
                &format!("isotropy:{}", c.id),
                isotropy_score(&c.samples, cfg.eig_tol),
            ),
        })
        .collect();
    let pairs = table
        .pairs
        .iter()
        .map(|p| PairRow {
            i: p.i,
            j: p.j,
            id_i: table.class_ids[p.i].clone(),
            id_j: table.class_ids[p.j].clone(),
            cdnv: p.cdnv,
            lambda_ij: p.lambda,
        })
        .collect();
    Snapshot {
        snapshot: idx,
        file: file.display().to_string(),
        classes: ds.class_count(),
        p: ds.dim(),
        min_class_size: ds.min_class_size(),
        avg_cdnv: table.avg_cdnv,
        lambda: table.lambda,
        goldblum,
        papyan,
        class_stats: class_rows,
        pairs,
    }
}

pub fn run(args: &MetricsArgs, cfg: &RunConfig) -> Result<Output> {
    let mut errors = Vec::new();
    let mut snaps = Vec::new();
    for (idx, path) in args.embeddings.iter().enumerate() {
        let ds = load(path, args.csv_header)?;
        snaps.push(snapshot(idx, path, &ds, cfg, &mut errors));
    }

    let mut summary = Table::new(
        "snapshots",
        &[
            "snapshot",
            "file",
            "classes",
            "p",
            "min_class_size",
            "avg_cdnv",
            "lambda",
            "goldblum",
            "papyan",
        ],
    );
    let mut classes = Table::new(
        "classes",
        &["snapshot", "class", "count", "var", "mean_norm", "isotropy"],
    );
    let mut pairs = Table::new(
        "pairs",
        &[
            "snapshot",
            "i",
            "j",
            "class_i",
            "class_j",
            "cdnv",
            "lambda_ij",
        ],
    );
    for s in &snaps {
        summary.push(vec![
            s.snapshot.to_string(),
            s.file.clone(),
            s.classes.to_string(),
            s.p.to_string(),
            s.min_class_size.to_string(),
            opt_num(s.avg_cdnv),
            num(s.lambda),
            opt_num(s.goldblum),
            opt_num(s.papyan),
        ]);
        for c in &s.class_stats {
            classes.push(vec![
                s.snapshot.to_string(),
                c.id.clone(),
                c.count.to_string(),
                num(c.var),
                num(c.mean_norm),
                opt_num(c.isotropy),
            ]);
        }
        for p in &s.pairs {
            pairs.push(vec![
                s.snapshot.to_string(),
                p.i.to_string(),
                p.j.to_string(),
                p.id_i.clone(),
                p.id_j.clone(),
                opt_num(p.cdnv),
                num(p.lambda_ij),
            ]);
        }
    }

    // serde_json maps +Inf CDNV entries to null; keep the raw value visible as a flag.
    let outputs = json!({
        "snapshots": serde_json::to_value(&snaps)?,
        "infinite_cdnv_pairs": snaps.iter().map(|s| s.pairs.iter().filter(|p| p.cdnv == Some(f64::INFINITY)).count()).collect::<Vec<_>>(),
    });
    Ok(Output {
        inputs: json!({
            "embeddings": args.embeddings.iter().map(|p| p.display().to_string()).collect::<Vec<_>>(),
            "rank_tol": cfg.rank_tol,
            "eig_tol": cfg.eig_tol,
        }),
        outputs,
        tables: vec![summary, classes, pairs],
        errors,
    })
}
