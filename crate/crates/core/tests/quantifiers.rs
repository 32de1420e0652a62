mod common;

use common::{rng, SimplexGaussians};
use graphquant::classifier::PosteriorMatrix;
use graphquant::quantifiers::{
    hdy_binary, make_quantifier, Aggregation, DmHistogramFit, Flag, PaccFit, QuantifierConfig, SolverConfig,
};

fn pm(rows: &[[f64; 2]]) -> PosteriorMatrix {
    PosteriorMatrix::new(rows.iter().map(|r| r.to_vec()).collect(), 2).unwrap()
}

fn on_simplex(q: &[f64]) -> bool {
    q.iter().all(|&x| x >= -1e-12) && (q.iter().sum::<f64>() - 1.0).abs() <= 1e-9
}

#[test]
fn pacc_matches_grid_oracle() {
    // Class 0 rows average (0.8, 0.2); class 1 rows average (0.3, 0.7).
    let train = pm(&[[0.9, 0.1], [0.7, 0.3], [0.4, 0.6], [0.2, 0.8]]);
    let labels = [0, 0, 1, 1];
    let test = pm(&[[0.6, 0.4], [0.5, 0.5], [0.3, 0.7]]);
    let fit = PaccFit::fit(&train, &labels, None).unwrap();
    let q = fit.quantify(&test, &SolverConfig::default()).unwrap().prevalence;

    let m = &fit.confusion;
    let observed = [(0.6 + 0.5 + 0.3) / 3.0, (0.4 + 0.5 + 0.7) / 3.0];
    let objective = |a: f64| {
        (0..2)
            .map(|j| {
                let r = m[j][0] * a + m[j][1] * (1.0 - a) - observed[j];
                r * r
            })
            .sum::<f64>()
    };
    let (best_a, best_f) = (0..=10_000)
        .map(|s| s as f64 / 10_000.0)
        .map(|a| (a, objective(a)))
        .fold((0.0, f64::INFINITY), |acc, x| if x.1 < acc.1 { x } else { acc });

    // Hand solve: 0.8a + 0.3(1-a) = 7/15 gives a = 1/3.
    assert!((q[0] - 1.0 / 3.0).abs() < 1e-6, "{q:?}");
    assert!((q[0] - best_a).abs() <= 1e-4);
    assert!((objective(q[0]) - best_f).abs() <= 1e-6);
}

#[test]
fn acc_solver_objective_matches_grid_when_clipped() {
    // The unconstrained solution lies outside the simplex.
    let train = pm(&[[0.9, 0.1], [0.8, 0.2], [0.4, 0.6], [0.3, 0.7]]);
    let labels = [0, 0, 1, 1];
    let test = pm(&[[0.95, 0.05], [0.9, 0.1]]);
    let fit = PaccFit::fit(&train, &labels, None).unwrap();
    let q = fit.quantify(&test, &SolverConfig::default()).unwrap().prevalence;
    let m = &fit.confusion;
    let observed = [0.925, 0.075];
    let objective = |a: f64| {
        (0..2)
            .map(|j| (m[j][0] * a + m[j][1] * (1.0 - a) - observed[j]).powi(2))
            .sum::<f64>()
    };
    let grid_best = (0..=10_000)
        .map(|s| objective(s as f64 / 10_000.0))
        .fold(f64::INFINITY, f64::min);
    assert!((objective(q[0]) - grid_best).abs() <= 1e-6);
    assert!((q[0] - 1.0).abs() < 1e-6);
}

#[test]
fn dm_concat_agrees_with_hdy_on_two_classes() {
    let gen = SimplexGaussians::peaked(2, 0.75, 0.15);
    let mut r = rng(11);
    let (train, labels) = gen.sample(&[600, 600], &mut r);
    for (seed, counts) in [(1, [300, 700]), (2, [550, 450]), (3, [150, 850])] {
        let (test, _) = gen.sample(&counts, &mut rng(seed));
        let hdy = hdy_binary(&train, &labels, &test, 8, 1000).unwrap().prevalence;
        let dm = DmHistogramFit::fit(&train, &labels, 8, Aggregation::Concat)
            .unwrap()
            .quantify(&test, &SolverConfig::default())
            .unwrap()
            .prevalence;
        assert!((hdy[1] - dm[1]).abs() <= 2e-3, "hdy {hdy:?} dm {dm:?}");
    }
}

#[test]
fn dm_recovers_delta_like_classes() {
    let gen = SimplexGaussians::peaked(3, 0.96, 0.005);
    let (train, labels) = gen.sample(&[500, 500, 500], &mut rng(5));
    let truth = [0.2, 0.3, 0.5];
    let (test, _) = gen.sample(&[1000, 1500, 2500], &mut rng(6));
    let q = DmHistogramFit::fit(&train, &labels, 8, Aggregation::Concat)
        .unwrap()
        .quantify(&test, &SolverConfig::default())
        .unwrap()
        .prevalence;
    for (a, b) in q.as_slice().iter().zip(truth) {
        assert!((a - b).abs() < 0.01, "{q:?}");
    }
}

#[test]
fn dm_average_cannot_tell_symmetric_classes_apart() {
    // Averaging over dimensions maps every class of a symmetric generator to
    // the same histogram.
    let gen = SimplexGaussians::peaked(3, 0.96, 0.005);
    let (train, labels) = gen.sample(&[500, 500, 500], &mut rng(5));
    let (test, _) = gen.sample(&[100, 150, 250], &mut rng(6));
    let out = DmHistogramFit::fit(&train, &labels, 8, Aggregation::Average)
        .unwrap()
        .quantify(&test, &SolverConfig::default())
        .unwrap();
    assert!(out.flags.contains(&Flag::Unidentifiable));
    assert_eq!(out.prevalence.as_slice(), &[1.0 / 3.0; 3]);
}

#[test]
fn hdy_half_mixture_of_separated_classes() {
    let gen = SimplexGaussians::peaked(2, 0.9, 0.02);
    let (train, labels) = gen.sample(&[400, 400], &mut rng(21));
    let (test, _) = gen.sample(&[1000, 1000], &mut rng(22));
    let q = hdy_binary(&train, &labels, &test, 8, 1000).unwrap().prevalence;
    assert!((q[1] - 0.5).abs() <= 1e-3, "{q:?}");
}

fn permute(m: &PosteriorMatrix, perm: &[usize]) -> PosteriorMatrix {
    let rows = m
        .rows()
        .iter()
        .map(|row| {
            let mut out = vec![0.0; row.len()];
            for (c, &v) in row.iter().enumerate() {
                out[perm[c]] = v;
            }
            out
        })
        .collect();
    PosteriorMatrix::new(rows, m.num_classes()).unwrap()
}

#[test]
fn outputs_are_permutation_equivariant_and_on_simplex() {
    let gen = SimplexGaussians::peaked(3, 0.6, 0.12);
    let (train, labels) = gen.sample(&[200, 150, 250], &mut rng(31));
    let (test, _) = gen.sample(&[60, 100, 40], &mut rng(32));
    let perm = [2, 0, 1];
    let p_train = permute(&train, &perm);
    let p_test = permute(&test, &perm);
    let p_labels: Vec<usize> = labels.iter().map(|&c| perm[c]).collect();

    for kind in ["cc", "pcc", "acc", "pacc", "dm-hist", "kdey"] {
        let cfg = QuantifierConfig::of_kind(kind);
        let q = make_quantifier(&cfg, &train, &labels, None)
            .unwrap()
            .quantify(&test)
            .unwrap()
            .prevalence;
        let p = make_quantifier(&cfg, &p_train, &p_labels, None)
            .unwrap()
            .quantify(&p_test)
            .unwrap()
            .prevalence;
        assert!(on_simplex(q.as_slice()) && on_simplex(p.as_slice()), "{kind}");
        for c in 0..3 {
            assert!((q[c] - p[perm[c]]).abs() <= 1e-6, "{kind}: {q:?} vs {p:?}");
        }
    }
}

#[test]
fn hdy_swap_equivariance_within_grid() {
    let gen = SimplexGaussians::peaked(2, 0.7, 0.15);
    let (train, labels) = gen.sample(&[300, 300], &mut rng(41));
    let (test, _) = gen.sample(&[120, 280], &mut rng(42));
    let perm = [1, 0];
    let swapped: Vec<usize> = labels.iter().map(|&c| perm[c]).collect();
    let q = hdy_binary(&train, &labels, &test, 8, 1000).unwrap().prevalence;
    let p = hdy_binary(&permute(&train, &perm), &swapped, &permute(&test, &perm), 8, 1000)
        .unwrap()
        .prevalence;
    assert!((q[0] - p[1]).abs() <= 2e-3, "{q:?} vs {p:?}");
}
