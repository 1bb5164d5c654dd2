use std::path::PathBuf;

use anyhow::{Context, Result};
use clap::{Args, Subcommand, ValueEnum};
use ncbound_core::data_io::{save_embeddings, save_embeddings_csv, RunConfig};
use ncbound_core::metrics::lambda_table;
use ncbound_core::numerics::Rng;
use ncbound_core::synth::{
    analytic_cdnv, analytic_ncc_error_known_means, default_grid, generate_dataset_with_classes,
    known_means_ncc_error_mc, lemma_validation_run, random_grid, GaussianClass, LemmaId,
    SyntheticWorld, ValidationRow,
};
use serde::Serialize;
use serde_json::json;

use crate::report::{num, opt_num, Output, Table};

#[derive(Subcommand, Debug)]
pub enum SynthCommand {
    /// Sample a labelled dataset from a world and write it to disk.
    Generate(GenerateArgs),
    /// Monte Carlo check of the per-pair lemmas on Gaussian pairs.
    ValidateLemmas(ValidateArgs),
    /// Known-means NCC error of two spherical Gaussians: closed form and Monte Carlo.
    Oracle(OracleArgs),
}

impl SynthCommand {
    pub fn name(&self) -> &'static str {
        match self {
            SynthCommand::Generate(_) => "synth generate",
            SynthCommand::ValidateLemmas(_) => "synth validate-lemmas",
            SynthCommand::Oracle(_) => "synth oracle",
        }
    }
}

#[derive(Args, Debug)]
pub struct GenerateArgs {
    /// World spec (`key = value` file).
    #[arg(long)]
    pub world: PathBuf,
    #[arg(long)]
    pub classes: usize,
    /// Samples per class.
    #[arg(long)]
    pub m: usize,
    /// Output dataset; `.csv` writes CSV, anything else the binary format.
    #[arg(long)]
    pub dataset: PathBuf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum GridKind {
    Default,
    Random,
}

#[derive(Args, Debug)]
pub struct ValidateArgs {
    /// Lemma to check; repeatable. Defaults to all.
    #[arg(long = "lemma")]
    pub lemmas: Vec<String>,
    #[arg(long, value_enum, default_value_t = GridKind::Default)]
    pub grid: GridKind,
    /// Points per lemma for the random grid.
    #[arg(long, default_value_t = 100)]
    pub count: usize,
}

#[derive(Args, Debug)]
pub struct OracleArgs {
    /// Distance between the two means.
    #[arg(long)]
    pub lambda: f64,
    /// Total standard deviation (E‖x−μ‖² = σ²).
    #[arg(long)]
    pub sigma: f64,
    #[arg(long)]
    pub p: usize,
}

pub fn run(cmd: &SynthCommand, cfg: &RunConfig) -> Result<Output> {
    match cmd {
        SynthCommand::Generate(a) => generate(a, cfg),
        SynthCommand::ValidateLemmas(a) => validate(a, cfg),
        SynthCommand::Oracle(a) => oracle(a, cfg),
    }
}

fn avg_analytic_cdnv(gens: &[GaussianClass]) -> Option<f64> {
    let l = gens.len();
    let mut sum = 0.0;
    for i in 0..l {
        for j in 0..l {
            if i != j {
                sum += analytic_cdnv(&gens[i], &gens[j]).ok()?;
            }
        }
    }
    Some(sum / (l * (l - 1)) as f64)
}

fn generate(a: &GenerateArgs, cfg: &RunConfig) -> Result<Output> {
    let text = std::fs::read_to_string(&a.world)
        .with_context(|| format!("reading world spec {}", a.world.display()))?;
    let world = SyntheticWorld::parse(&text)
        .with_context(|| format!("parsing world spec {}", a.world.display()))?;
    let (gens, ds) = generate_dataset_with_classes(&world, a.classes, a.m, &Rng::new(cfg.seed))?;
    let is_csv = a
        .dataset
        .extension()
        .is_some_and(|e| e.eq_ignore_ascii_case("csv"));
    if is_csv {
        save_embeddings_csv(&a.dataset, &ds)
    } else {
        save_embeddings(&a.dataset, &ds)
    }
    .with_context(|| format!("writing {}", a.dataset.display()))?;
    let table = lambda_table(&ds);
    let analytic = avg_analytic_cdnv(&gens);
    let mut t = Table::new(
        "generate",
        &[
            "dataset",
            "classes",
            "m",
            "p",
            "avg_cdnv",
            "avg_cdnv_analytic",
            "lambda",
        ],
    );
    t.push(vec![
        a.dataset.display().to_string(),
        a.classes.to_string(),
        a.m.to_string(),
        world.p.to_string(),
        opt_num(table.avg_cdnv),
        opt_num(analytic),
        num(table.lambda),
    ]);
    Ok(Output {
        inputs: json!({
            "world": a.world.display().to_string(),
            "world_spec": world.to_kv(),
            "classes": a.classes,
            "m": a.m,
            "dataset": a.dataset.display().to_string(),
        }),
        outputs: json!({
            "p": world.p,
            "avg_cdnv": table.avg_cdnv,
            "avg_cdnv_analytic": analytic,
            "lambda": table.lambda,
        }),
        tables: vec![t],
        errors: Vec::new(),
    })
}

#[derive(Serialize)]
struct LemmaSummary {
    lemma: LemmaId,
    points: usize,
    evaluated: usize,
    skipped: usize,
    dominated: usize,
    dominated_fraction: Option<f64>,
}

fn validate(a: &ValidateArgs, cfg: &RunConfig) -> Result<Output> {
    let lemmas: Vec<LemmaId> = if a.lemmas.is_empty() {
        LemmaId::ALL.to_vec()
    } else {
        a.lemmas
            .iter()
            .map(|s| s.parse())
            .collect::<ncbound_core::Result<_>>()?
    };
    let root = Rng::new(cfg.seed);
    let mut rows: Vec<ValidationRow> = Vec::new();
    let mut summaries = Vec::new();
    for (li, &lemma) in lemmas.iter().enumerate() {
        let grid = match a.grid {
            GridKind::Default => default_grid(lemma),
            GridKind::Random => random_grid(
                lemma,
                a.count,
                &mut root.child_named("grid").child(li as u64),
            ),
        };
        let out =
            lemma_validation_run(lemma, &grid, cfg.trials, &root.child_named(lemma.as_str()))?;
        let evaluated = out.iter().filter(|r| r.dominated.is_some()).count();
        let dominated = out.iter().filter(|r| r.dominated == Some(true)).count();
        summaries.push(LemmaSummary {
            lemma,
            points: out.len(),
            evaluated,
            skipped: out.len() - evaluated,
            dominated,
            dominated_fraction: (evaluated > 0).then(|| dominated as f64 / evaluated as f64),
        });
        rows.extend(out);
    }
    let mut t = Table::new(
        "lemmas",
        &[
            "lemma",
            "p",
            "n",
            "mu_dist",
            "var_i",
            "var_j",
            "margin",
            "mc",
            "mc_se",
            "rhs",
            "se",
            "dominated",
            "skipped",
        ],
    );
    for r in &rows {
        let x = &r.point;
        t.push(vec![
            r.lemma.as_str().into(),
            x.p.to_string(),
            x.n.to_string(),
            num(x.mu_dist),
            num(x.var_i),
            num(x.var_j),
            num(x.margin),
            opt_num(r.mc.map(|m| m.value)),
            opt_num(r.mc.map(|m| m.std_error)),
            opt_num(r.rhs),
            opt_num(r.se),
            r.dominated.map(|d| d.to_string()).unwrap_or_default(),
            r.skipped.clone().unwrap_or_default(),
        ]);
    }
    let mut st = Table::new(
        "lemma_summary",
        &[
            "lemma",
            "points",
            "evaluated",
            "skipped",
            "dominated",
            "dominated_fraction",
        ],
    );
    for s in &summaries {
        st.push(vec![
            s.lemma.as_str().into(),
            s.points.to_string(),
            s.evaluated.to_string(),
            s.skipped.to_string(),
            s.dominated.to_string(),
            opt_num(s.dominated_fraction),
        ]);
    }
    Ok(Output {
        inputs: json!({
            "lemmas": lemmas.iter().map(|l| l.as_str()).collect::<Vec<_>>(),
            "grid": match a.grid { GridKind::Default => "default", GridKind::Random => "random" },
            "count": a.count,
            "trials": cfg.trials,
        }),
        outputs: json!({ "summary": summaries, "rows": rows }),
        tables: vec![st, t],
        errors: Vec::new(),
    })
}

fn oracle(a: &OracleArgs, cfg: &RunConfig) -> Result<Output> {
    let analytic = analytic_ncc_error_known_means(a.lambda, a.sigma, a.p)?;
    let mut mj = vec![0.0; a.p];
    mj[0] = a.lambda;
    let gi = GaussianClass::spherical(vec![0.0; a.p], a.sigma);
    let gj = GaussianClass::spherical(mj, a.sigma);
    let mc = known_means_ncc_error_mc(&gi, &gj, cfg.trials, &Rng::new(cfg.seed))?;
    let z = (mc.value - analytic) / mc.std_error;
    let mut t = Table::new(
        "oracle",
        &["lambda", "sigma", "p", "analytic", "mc", "mc_se", "trials"],
    );
    t.push(vec![
        num(a.lambda),
        num(a.sigma),
        a.p.to_string(),
        num(analytic),
        num(mc.value),
        num(mc.std_error),
        mc.trials.to_string(),
    ]);
    Ok(Output {
        inputs: json!({"lambda": a.lambda, "sigma": a.sigma, "p": a.p, "trials": cfg.trials}),
        outputs: json!({
            "analytic": analytic,
            "analytic_6sf": format!("{analytic:.6}"),
            "mc": mc,
            "z_score": crate::report::json_num(z),
        }),
        tables: vec![t],
        errors: Vec::new(),
    })
}
