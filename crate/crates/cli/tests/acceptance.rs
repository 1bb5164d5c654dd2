//! Acceptance suite. Runs every criterion in sequence, prints one PASS/FAIL
//! line each, and exits nonzero if any fails. Tolerances and budgets are the
//! constants below.

use std::path::Path;
use std::process::Command;
use std::time::{Duration, Instant};

use ncbound_core::bounds::{cdnv_plug_in, compose_transfer_bound, theorem1_bound, BoundInputs};
use ncbound_core::data_io::{save_embeddings_csv, ReluNetWeights};
use ncbound_core::metrics::lambda_table;
use ncbound_core::ncc::{fewshot_soft_margin_exact, fewshot_soft_margin_mc, soft_margin_loss};
use ncbound_core::numerics::{norm, Matrix, Rng};
use ncbound_core::relu_net::FeatureMap;
use ncbound_core::synth::{
    analytic_ncc_error_known_means, draw_classes, generate_dataset,
    known_means_multiclass_error_mc, known_means_ncc_error_mc, lemma_validation_run, random_grid,
    GaussianClass, LemmaId, MeanLaw, SyntheticWorld,
};
use ncbound_core::transfer::{transfer_error, transfer_errors, EpisodeSpec, Head, Source};
use serde_json::Value;

const SEED: u64 = 20240611;

// Criterion 1
const A1_PAIRS: usize = 100_000;
const A1_BUDGET: Duration = Duration::from_secs(1);
// Criterion 2
const A2_INSTANCES: usize = 100;
const A2_TRIALS: usize = 100_000;
const A2_SE_MULT: f64 = 4.0;
const A2_MIN_AGREE: usize = 99;
const A2_BUDGET: Duration = Duration::from_secs(30);
// Criterion 3
const A3_CONFIGS: usize = 100;
const A3_TRIALS: usize = 10_000;
const A3_MIN_DOMINATED: usize = 99;
const A3_BUDGET: Duration = Duration::from_secs(120);
// Criterion 4
const A4_TRIALS: usize = 100_000;
const A4_SE_MULT: f64 = 3.0;
const A4_STATED: f64 = 0.158655;
const A4_BUDGET: Duration = Duration::from_secs(5);
// Criterion 5
const A5_POOL: usize = 20;
const A5_P: usize = 32;
const A5_K: usize = 5;
const A5_SIGMA: f64 = 1.33;
const A5_EPISODES: usize = 500;
const A5_N_TEST: usize = 100;
const A5_SHOTS: [usize; 4] = [1, 2, 5, 10];
const A5_LARGE_N: usize = 200;
const A5_KM_TRIALS: usize = 1_000_000;
const A5_SE_MULT: f64 = 3.0;
const A5_BUDGET: Duration = Duration::from_secs(60);
// Criterion 6
const A6_TUPLES: usize = 50;
const A6_REL_TOL: f64 = 1e-12;
const A6_BUDGET: Duration = Duration::from_secs(1);
// Criterion 7
const A7_BUDGET: Duration = Duration::from_secs(60);
// Criterion 8
const A8_EPISODES: usize = 100;
const A8_BUDGET: Duration = Duration::from_secs(5);
// Criterion 9
const A9_MAPS: usize = 1_000;
const A9_REL_TOL: f64 = 1e-9;
const A9_BUDGET: Duration = Duration::from_secs(5);

struct Outcome {
    pass: bool,
    detail: String,
}

fn run(id: u32, title: &str, budget: Option<Duration>, f: impl FnOnce() -> Outcome) -> bool {
    let t = Instant::now();
    let out = f();
    let el = t.elapsed();
    let in_budget = budget.is_none_or(|b| el <= b);
    let pass = out.pass && in_budget;
    let timing = match budget {
        Some(b) => format!("{:.2}s, budget {}s", el.as_secs_f64(), b.as_secs()),
        None => format!("{:.2}s", el.as_secs_f64()),
    };
    println!(
        "A{id:<2} {} {title}: {} ({timing}{})",
        if pass { "PASS" } else { "FAIL" },
        out.detail,
        if in_budget { "" } else { ", over budget" }
    );
    pass
}

fn a1() -> Outcome {
    let mut rng = Rng::new(SEED).child(1);
    let mut violations = 0;
    for _ in 0..A1_PAIRS {
        let r = 10.0 * (2.0 * rng.uniform() - 1.0);
        let delta = 5.0 * rng.uniform() + f64::MIN_POSITIVE;
        let v = soft_margin_loss(r, delta).expect("positive margin");
        let lo = if r > 0.0 { 1.0 } else { 0.0 };
        let hi = if r > -delta { 1.0 } else { 0.0 };
        if !(lo <= v && v <= hi) {
            violations += 1;
        }
    }
    Outcome {
        pass: violations == 0,
        detail: format!("{violations} violations in {A1_PAIRS} pairs"),
    }
}

fn gaussian_matrix(rows: usize, cols: usize, shift: &[f64], rng: &mut Rng) -> Matrix {
    let mut m = Matrix::zeros(rows, cols);
    for r in 0..rows {
        for (c, v) in m.row_mut(r).iter_mut().enumerate() {
            *v = shift[c] + rng.standard_normal();
        }
    }
    m
}

fn a2() -> Outcome {
    let root = Rng::new(SEED).child(2);
    let mut agree = 0;
    let mut worst: f64 = 0.0;
    for i in 0..A2_INSTANCES {
        let mut rng = root.child(i as u64).child_named("instance");
        let p = 1 + rng.below(8);
        let n = 1 + rng.below(2);
        let mi = 1 + rng.below(20);
        let mj = 1 + rng.below(20);
        let shift: Vec<f64> = (0..p).map(|_| 2.0 * rng.standard_normal()).collect();
        let si = gaussian_matrix(mi, p, &vec![0.0; p], &mut rng);
        let sj = gaussian_matrix(mj, p, &shift, &mut rng);
        let delta = 0.05 + 1.5 * rng.uniform();
        let exact = fewshot_soft_margin_exact(&si, &sj, n, delta, 1e8).expect("small instance");
        let mc = fewshot_soft_margin_mc(
            &si,
            &sj,
            n,
            delta,
            A2_TRIALS,
            &root.child(i as u64).child_named("mc"),
        )
        .expect("valid instance");
        let diff = (mc.value - exact).abs();
        if diff <= A2_SE_MULT * mc.std_error {
            agree += 1;
        }
        if mc.std_error > 0.0 {
            worst = worst.max(diff / mc.std_error);
        }
    }
    Outcome {
        pass: agree >= A2_MIN_AGREE,
        detail: format!("{agree}/{A2_INSTANCES} within {A2_SE_MULT} SE (max |z| {worst:.2})"),
    }
}

fn a3() -> Outcome {
    let root = Rng::new(SEED).child(3);
    let mut parts = Vec::new();
    let mut pass = true;
    for (li, lemma) in [
        LemmaId::Lemma5,
        LemmaId::Lemma6Part1,
        LemmaId::Lemma6Part2,
        LemmaId::Lemma7,
    ]
    .into_iter()
    .enumerate()
    {
        let grid = random_grid(
            lemma,
            A3_CONFIGS,
            &mut root.child(li as u64).child_named("grid"),
        );
        let rows = lemma_validation_run(
            lemma,
            &grid,
            A3_TRIALS,
            &root.child(li as u64).child_named("mc"),
        )
        .expect("grid evaluates");
        let skipped = rows.iter().filter(|r| r.skipped.is_some()).count();
        let dominated = rows.iter().filter(|r| r.dominated == Some(true)).count();
        pass &= dominated >= A3_MIN_DOMINATED && skipped == 0;
        parts.push(format!("{} {dominated}/{}", lemma.as_str(), rows.len()));
    }
    Outcome {
        pass,
        detail: format!("dominated: {}", parts.join(", ")),
    }
}

fn spherical_pair(p: usize, lambda: f64, sigma: f64) -> (GaussianClass, GaussianClass) {
    let mut mj = vec![0.0; p];
    mj[0] = lambda;
    (
        GaussianClass::spherical(vec![0.0; p], sigma),
        GaussianClass::spherical(mj, sigma),
    )
}

// With noise parameterised by total variance σ² (per-coordinate σ²/p), the
// known-means error is Φ(−Λ√p/(2σ)). At p=16, σ=1, Λ=1 that is Φ(−2), not the
// stated Φ(−1) = 0.158655; Φ(−1) is reached at Λ=0.5. Both are checked.
fn a4() -> Outcome {
    let root = Rng::new(SEED).child(4);
    let (p, sigma) = (16, 1.0);
    let formula = analytic_ncc_error_known_means(1.0, sigma, p).expect("sigma > 0");
    let (gi, gj) = spherical_pair(p, 1.0, sigma);
    let mc = known_means_ncc_error_mc(&gi, &gj, A4_TRIALS, &root.child(0)).expect("trials > 0");
    let z1 = (mc.value - formula) / mc.std_error;

    let half = analytic_ncc_error_known_means(0.5, sigma, p).expect("sigma > 0");
    let (hi, hj) = spherical_pair(p, 0.5, sigma);
    let mc_half =
        known_means_ncc_error_mc(&hi, &hj, A4_TRIALS, &root.child(1)).expect("trials > 0");
    let z2 = (mc_half.value - A4_STATED) / mc_half.std_error;
    let stated_6sf = format!("{half:.6}") == format!("{A4_STATED:.6}");

    let z_literal = (mc.value - A4_STATED) / mc.std_error;
    Outcome {
        pass: z1.abs() <= A4_SE_MULT && z2.abs() <= A4_SE_MULT && stated_6sf,
        detail: format!(
            "Lambda=1: MC {:.6} vs formula {formula:.6} (z {z1:.2}); Lambda=0.5: MC {:.6} vs {A4_STATED} (z {z2:.2}), formula {half:.6}; literal Lambda=1 vs {A4_STATED}: z {z_literal:.1}",
            mc.value, mc_half.value
        ),
    }
}

fn a5() -> Outcome {
    let root = Rng::new(SEED).child(5);
    let world = SyntheticWorld::new(A5_P, MeanLaw::SimplexEtf { scale: 1.0 }, A5_SIGMA)
        .expect("valid world");
    let pool = draw_classes(&world, A5_POOL, &mut root.child_named("pool")).expect("pool fits");
    let mut means = Vec::new();
    let mut line = Vec::new();
    for &n in A5_SHOTS.iter().chain([A5_LARGE_N].iter()) {
        let spec = EpisodeSpec {
            k: A5_K,
            n,
            n_test: A5_N_TEST,
            episodes: A5_EPISODES,
        };
        let s = transfer_error(Source::Pool(&pool), spec, Head::Ncc, &root.child(n as u64))
            .expect("episodes run");
        line.push(format!("n={n}: {:.4}±{:.4}", s.mean, s.ci95));
        means.push(s);
    }
    // ETF pool: every k-subset is congruent, so one subset gives the known-means value.
    let km =
        known_means_multiclass_error_mc(&pool[..A5_K], A5_KM_TRIALS, &root.child_named("known"))
            .expect("trials > 0");
    let mut monotone = true;
    for w in means[..A5_SHOTS.len()].windows(2) {
        monotone &= w[1].mean <= w[0].mean + w[0].ci95 + w[1].ci95;
    }
    let big = &means[A5_SHOTS.len()];
    let se = big.std_error.hypot(km.std_error);
    let z = (big.mean - km.value) / se;
    Outcome {
        pass: monotone && z.abs() <= A5_SE_MULT,
        detail: format!(
            "{}; known-means {:.4}, n={A5_LARGE_N} z {z:.2}; nonincreasing {monotone}",
            line.join(", "),
            km.value
        ),
    }
}

fn random_inputs(rng: &mut Rng) -> BoundInputs {
    let n = 1 + rng.below(10);
    let m_lo = (n * n).max(n + 1);
    BoundInputs {
        k: 2 + rng.below(9),
        n,
        m: m_lo + rng.below(5000 - m_lo + 1),
        l: 2 + rng.below(199),
        p: 1 + rng.below(1024),
        q: 1 + rng.below(30),
        b: 0.1 + 9.9 * rng.uniform(),
        cf: 0.5 + 99.5 * rng.uniform(),
        delta: 1e-4 + (0.5 - 1e-4) * rng.uniform(),
        lambda: 0.01 + 9.99 * rng.uniform(),
        avg_cdnv: rng.uniform(),
        ..Default::default()
    }
}

fn a6() -> Outcome {
    let mut rng = Rng::new(SEED).child(6);
    let mut worst: f64 = 0.0;
    let mut decreasing = 0;
    for _ in 0..A6_TUPLES {
        let x = random_inputs(&mut rng);
        let t = theorem1_bound(&x).expect("valid tuple");
        let c = compose_transfer_bound(&x, 0.025 * x.lambda, cdnv_plug_in(x.n, x.avg_cdnv))
            .expect("valid tuple");
        for (a, b) in [
            ("cdnv_term", "loss_term"),
            ("delta_term", "delta_term"),
            ("m_term_1", "m_term_1"),
            ("m_term_2", "m_term_2"),
            ("l_term", "l_term"),
        ] {
            let (va, vb) = (t.term(a).unwrap(), c.term(b).unwrap());
            let scale = va.abs().max(vb.abs());
            if scale > 0.0 {
                worst = worst.max((va - vb).abs() / scale);
            }
        }
        let more_m = theorem1_bound(&BoundInputs {
            m: 2 * x.m,
            ..x.clone()
        })
        .unwrap()
        .total;
        let more_l = theorem1_bound(&BoundInputs {
            l: 2 * x.l,
            ..x.clone()
        })
        .unwrap()
        .total;
        if more_m < t.total && more_l < t.total {
            decreasing += 1;
        }
    }
    Outcome {
        pass: worst <= A6_REL_TOL && decreasing == A6_TUPLES,
        detail: format!("max term rel diff {worst:.1e}; decreasing under m->2m and l->2l on {decreasing}/{A6_TUPLES}"),
    }
}

fn a7() -> Outcome {
    let root = Rng::new(SEED).child(7);
    let (p, l, m, k, n) = (16, 30, 400, 5, 5);
    let world = SyntheticWorld::new(p, MeanLaw::Gaussian { tau: 3.0 }, 1.0).expect("valid world");
    let source = generate_dataset(&world, l, m, &root.child_named("source")).expect("source data");
    let table = lambda_table(&source);
    // f is the identity on embeddings: depth 1, C(f) = ‖I_p‖_F = √p.
    let x = BoundInputs {
        k,
        n,
        m,
        l,
        p,
        q: 1,
        b: source.max_norm(),
        cf: (p as f64).sqrt(),
        delta: 0.01,
        lambda: table.lambda,
        avg_cdnv: table.avg_cdnv.expect("defined CDNV"),
        ..Default::default()
    };
    let bound = theorem1_bound(&x).expect("preconditions hold");
    let spec = EpisodeSpec {
        k,
        n,
        n_test: 100,
        episodes: 200,
    };
    let measured = transfer_error(
        Source::World(&world),
        spec,
        Head::Ncc,
        &root.child_named("target"),
    )
    .expect("episodes run");
    Outcome {
        pass: measured.mean <= bound.total,
        detail: format!(
            "transfer error {:.4} <= bound {:.4e} (n={n}, m={m}, l={l})",
            measured.mean, bound.total
        ),
    }
}

fn a8() -> Outcome {
    let root = Rng::new(SEED).child(8);
    let world =
        SyntheticWorld::new(32, MeanLaw::SimplexEtf { scale: 1.0 }, 0.0).expect("valid world");
    let pool = draw_classes(&world, 20, &mut root.child_named("pool")).expect("pool fits");
    let spec = EpisodeSpec {
        k: 5,
        n: 1,
        n_test: 10,
        episodes: A8_EPISODES,
    };
    let out = transfer_errors(
        Source::Pool(&pool),
        spec,
        &[Head::Ridge { alpha: 1.0 }],
        &root,
    )
    .expect("episodes run");
    let acc = 1.0 - out[0].mean;
    Outcome {
        pass: acc == 1.0,
        detail: format!("accuracy {acc} over {A8_EPISODES} episodes"),
    }
}

fn a9() -> Outcome {
    let mut rng = Rng::new(SEED).child(9);
    let mut worst = f64::NEG_INFINITY;
    let mut bad = 0;
    for _ in 0..A9_MAPS {
        let q = 1 + rng.below(4);
        let mut prev = 1 + rng.below(32);
        let input = prev;
        let mut layers = Vec::with_capacity(q);
        for _ in 0..q {
            let out = 1 + rng.below(32);
            let data = (0..out * prev).map(|_| rng.standard_normal()).collect();
            layers.push(Matrix::from_vec(out, prev, data).expect("shape"));
            prev = out;
        }
        let map = FeatureMap::new(ReluNetWeights::new(layers).expect("chain"));
        let x: Vec<f64> = (0..input).map(|_| 3.0 * rng.standard_normal()).collect();
        let y = map.forward(&x).expect("dims");
        let (ny, bound) = (norm(&y), map.complexity() * norm(&x));
        if ny > bound * (1.0 + A9_REL_TOL) {
            bad += 1;
        }
        if bound > 0.0 {
            worst = worst.max(ny / bound);
        }
    }
    Outcome {
        pass: bad == 0,
        detail: format!("{bad} violations in {A9_MAPS} maps (max ratio {worst:.3})"),
    }
}

fn ncbound(dir: &Path, threads: &str, args: &[&str]) -> (bool, Value) {
    let out = Command::new(env!("CARGO_BIN_EXE_ncbound"))
        .current_dir(dir)
        .env("RAYON_NUM_THREADS", threads)
        .args(args)
        .output()
        .expect("binary runs");
    let mut v: Value = serde_json::from_slice(&out.stdout).unwrap_or(Value::Null);
    if let Some(o) = v.as_object_mut() {
        o.remove("wall_time_s");
    }
    (out.status.success(), v)
}

fn a10() -> Outcome {
    let dir = tempfile::tempdir().expect("temp dir");
    let d = dir.path();
    std::fs::write(
        d.join("w.cfg"),
        "p = 6\nsigma = 0.8\nmean_law = gaussian\ntau = 2\n",
    )
    .unwrap();
    let ds = generate_dataset(
        &SyntheticWorld::parse("p = 6\nsigma = 0.8\nmean_law = gaussian\ntau = 2\n").unwrap(),
        8,
        40,
        &Rng::new(SEED),
    )
    .unwrap();
    save_embeddings_csv(d.join("e.csv"), &ds).unwrap();
    let commands: Vec<Vec<&str>> = vec![
        vec!["--seed", "5", "metrics", "--embeddings", "e.csv"],
        vec![
            "--seed",
            "5",
            "--episodes",
            "40",
            "--k",
            "3",
            "--n",
            "2",
            "--n-test",
            "10",
            "fewshot",
            "--embeddings",
            "e.csv",
            "--head",
            "ncc",
            "--head",
            "ridge",
        ],
        vec![
            "--seed",
            "5",
            "--episodes",
            "40",
            "--n-test",
            "10",
            "--sweep",
            "n=1:3:2",
            "fewshot",
            "--world",
            "w.cfg",
            "--pool",
            "12",
        ],
        vec![
            "--seed",
            "5",
            "--keep-going",
            "--trials",
            "500",
            "--n",
            "2",
            "--sweep",
            "margin=0.01:0.05:2",
            "bounds",
            "--embeddings",
            "e.csv",
        ],
        vec![
            "--seed",
            "5",
            "synth",
            "generate",
            "--world",
            "w.cfg",
            "--classes",
            "4",
            "--m",
            "30",
            "--dataset",
            "g.csv",
        ],
        vec![
            "--seed",
            "5",
            "--trials",
            "2000",
            "synth",
            "validate-lemmas",
            "--grid",
            "random",
            "--count",
            "10",
        ],
        vec![
            "--seed", "5", "--trials", "20000", "synth", "oracle", "--lambda", "1", "--sigma", "1",
            "--p", "4",
        ],
    ];
    let mut same = 0;
    let mut names = Vec::new();
    for args in &commands {
        let (ok1, r1) = ncbound(d, "1", args);
        let file1 = std::fs::read(d.join("g.csv")).ok();
        let (ok2, r2) = ncbound(d, "4", args);
        let file2 = std::fs::read(d.join("g.csv")).ok();
        let name = r1["command"].as_str().unwrap_or("?").to_string();
        if ok1 && ok2 && r1 != Value::Null && r1 == r2 && file1 == file2 {
            same += 1;
        } else {
            names.push(name);
        }
    }
    Outcome {
        pass: same == commands.len(),
        detail: if names.is_empty() {
            format!(
                "{same}/{} commands identical across runs (1 vs 4 threads)",
                commands.len()
            )
        } else {
            format!(
                "{same}/{} identical; differing: {}",
                commands.len(),
                names.join(", ")
            )
        },
    }
}

fn main() {
    // Runs as a plain binary; ignore libtest flags such as --nocapture.
    println!("acceptance suite (seed {SEED})");
    let results = [
        run(1, "soft-margin sandwich", Some(A1_BUDGET), a1),
        run(
            2,
            "exact vs Monte Carlo few-shot error",
            Some(A2_BUDGET),
            a2,
        ),
        run(3, "lemma dominance on Gaussian pairs", Some(A3_BUDGET), a3),
        run(4, "Gaussian known-means NCC oracle", Some(A4_BUDGET), a4),
        run(5, "transfer-error trend in n", Some(A5_BUDGET), a5),
        run(6, "theorem 1 composition identity", Some(A6_BUDGET), a6),
        run(
            7,
            "theorem 1 dominance on synthetic data",
            Some(A7_BUDGET),
            a7,
        ),
        run(8, "ridge head on perfect collapse", Some(A8_BUDGET), a8),
        run(9, "ReLU Lipschitz invariant", Some(A9_BUDGET), a9),
        run(10, "CLI determinism", None, a10),
    ];
    let passed = results.iter().filter(|&&p| p).count();
    println!("{passed}/{} criteria passed", results.len());
    if passed != results.len() {
        std::process::exit(1);
    }
}
