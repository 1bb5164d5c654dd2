use ncbound_core::bounds::{lemma3_rhs, lemma4_rhs, lemma7_rhs, theorem1_bound, BoundInputs};
use ncbound_core::ncc::{
    fewshot_soft_margin_exact, fewshot_soft_margin_exact_with, fewshot_soft_margin_mc, Enumeration,
};
use ncbound_core::numerics::{dist, Matrix, Rng};
use ncbound_core::synth::{
    analytic_ncc_error_known_means, known_means_ncc_error_mc, GaussianClass,
};

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs().max(1e-300)
}

fn fixed() -> BoundInputs {
    BoundInputs {
        k: 5,
        n: 5,
        m: 600,
        l: 64,
        p: 256,
        q: 28,
        b: 1.0,
        cf: 10.0,
        delta: 0.01,
        lambda: 1.0,
        avg_cdnv: 0.1,
        ..Default::default()
    }
}

// Frozen values from a separate scripted implementation of the closed forms.
#[test]
fn theorem1_matches_scripted_oracle() {
    let r = theorem1_bound(&fixed()).unwrap();
    let want = [
        ("cdnv_term", 87.77142857142857),
        ("delta_term", 0.00040336134453781514),
        ("m_term_1", 2434944.622419178),
        ("m_term_2", 7145.944126251467),
        ("l_term", 733714.224518223),
    ];
    for (name, v) in want {
        assert!(
            rel(r.term(name).unwrap(), v) < 1e-10,
            "{name}: {} vs {v}",
            r.term(name).unwrap()
        );
    }
    assert!(rel(r.total, 3175892.562895586) < 1e-10);
    assert!(r.vacuous);
}

#[test]
fn lemma3_and_lemma4_match_scripted_oracle() {
    let x = fixed();
    let l3 = lemma3_rhs(&x, 0.1, 0.2).unwrap();
    assert!(rel(l3.total, 183299.15399725165) < 1e-10, "{}", l3.total);
    let l4 = lemma4_rhs(&x, 0.1, 0.2).unwrap();
    assert!(rel(l4.total, 305051.32945480413) < 1e-10, "{}", l4.total);
}

#[test]
fn lemma7_matches_scripted_oracle() {
    // V = 1/32 with zero margin: var 1/32 at unit distance.
    let v = lemma7_rhs(1.0 / 32.0, 1.0, 0.0, 16).unwrap();
    assert!(rel(v, 124.52412983561162) < 1e-10, "{v}");
}

fn soft(r: f64, d: f64) -> f64 {
    if r < -d {
        0.0
    } else if r > 0.0 {
        1.0
    } else {
        1.0 + r / d
    }
}

fn mean2(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| 0.5 * (x + y)).collect()
}

// Straight nested loops over every ordered pair of shots and every test point.
fn brute_two_shot(si: &Matrix, sj: &Matrix, delta: f64) -> f64 {
    let (mi, mj) = (si.rows(), sj.rows());
    let mut acc = 0.0;
    for a1 in 0..mi {
        for a2 in 0..mi {
            let ci = mean2(si.row(a1), si.row(a2));
            for b1 in 0..mj {
                for b2 in 0..mj {
                    let cj = mean2(sj.row(b1), sj.row(b2));
                    for x in 0..mi {
                        let u = si.row(x);
                        acc += soft(dist(u, &ci) - dist(u, &cj), delta);
                    }
                }
            }
        }
    }
    acc / (mi * mi * mj * mj * mi) as f64
}

fn random_matrix(rows: usize, cols: usize, rng: &mut Rng) -> Matrix {
    let data = (0..rows * cols).map(|_| rng.standard_normal()).collect();
    Matrix::from_vec(rows, cols, data).unwrap()
}

#[test]
fn exact_enumeration_matches_brute_force() {
    let mut rng = Rng::new(11);
    for _ in 0..10 {
        let p = 1 + rng.below(4);
        let si = random_matrix(2 + rng.below(4), p, &mut rng);
        let sj = random_matrix(2 + rng.below(4), p, &mut rng);
        let delta = 0.05 + rng.uniform();
        let want = brute_two_shot(&si, &sj, delta);
        for how in [
            Enumeration::Tuples,
            Enumeration::Multisets,
            Enumeration::Auto,
        ] {
            let got = fewshot_soft_margin_exact_with(&si, &sj, 2, delta, 1e9, how).unwrap();
            assert!((got - want).abs() < 1e-12, "{how:?}: {got} vs {want}");
        }
    }
}

#[test]
fn monte_carlo_tracks_exact_value() {
    let mut rng = Rng::new(5);
    let si = random_matrix(20, 3, &mut rng);
    let sj = random_matrix(20, 3, &mut rng).scaled(0.5);
    let exact = fewshot_soft_margin_exact(&si, &sj, 1, 0.3, 1e9).unwrap();
    let mc = fewshot_soft_margin_mc(&si, &sj, 1, 0.3, 100_000, &Rng::new(9)).unwrap();
    assert!(
        (mc.value - exact).abs() <= 4.0 * mc.std_error,
        "{} vs {exact}",
        mc.value
    );
}

#[test]
fn known_means_error_matches_normal_tail() {
    // Per-coordinate std 0.5, distance 1: error Phi(-1).
    let gi = GaussianClass::spherical(vec![0.0, 0.0, 0.0, 0.0], 1.0);
    let gj = GaussianClass::spherical(vec![1.0, 0.0, 0.0, 0.0], 1.0);
    let want = analytic_ncc_error_known_means(1.0, 1.0, 4).unwrap();
    assert!((want - 0.15865525393145707).abs() < 1e-9);
    let mc = known_means_ncc_error_mc(&gi, &gj, 100_000, &Rng::new(3)).unwrap();
    assert!(
        (mc.value - want).abs() <= 3.0 * mc.std_error,
        "{} vs {want}",
        mc.value
    );
}
