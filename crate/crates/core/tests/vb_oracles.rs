//! Brute-force and structural checks of the variational updates.

use dpvb::dpmech::{privatize, NoisyMarginals};
use dpvb::nbmodel::{sample_counts, sample_model_params, ModelShape, PriorSpec};
use dpvb::simplexopt::{maximize, SimplexObjective};
use dpvb::statdist::{dirichlet_entropy, dirichlet_expected_log, sample_dirichlet, DirichletParams, RngStream};
use dpvb::vbengine::*;
use proptest::prelude::*;
use rand::Rng;

fn random_problem(rng: &mut RngStream, classes: usize) -> (VariationalState, NoisyMarginals, PriorSpec) {
    let n = rng.random_range(5..=300);
    let levels = (0..rng.random_range(1..=3)).map(|_| rng.random_range(2..=4)).collect();
    let shape = ModelShape::new(classes, levels, n).unwrap();
    let priors = PriorSpec::symmetric(&shape, rng.random_range(0.5..2.0)).unwrap();
    let p = sample_model_params(&shape, &PriorSpec::uniform(&shape).unwrap(), rng).unwrap();
    let truth = sample_counts(&p, &shape, rng).unwrap();
    let eps = [0.01, 0.1, 1.0, 10.0][rng.random_range(0..4)];
    let noisy = privatize(&truth, eps, rng).unwrap();

    let mut state = initialize(&noisy, &priors, InitMode::Uniform).unwrap();
    let interior = |v: Vec<f64>| -> Vec<f64> {
        let w: Vec<f64> = v.iter().map(|x| 0.98 * x + 0.02 / v.len() as f64).collect();
        let t: f64 = w.iter().sum();
        w.iter().map(|x| x / t).collect()
    };
    let flat = |len: usize| DirichletParams::symmetric(len, 1.0).unwrap();
    state.theta_class = interior(sample_dirichlet(&flat(classes), rng));
    for table in state.theta_cond.iter_mut() {
        for row in table.iter_mut() {
            *row = interior(sample_dirichlet(&flat(row.len()), rng));
        }
    }
    let mut random_gamma = |len: usize| DirichletParams::new((0..len).map(|_| rng.random_range(0.3..50.0)).collect()).unwrap();
    state.gamma_class = random_gamma(classes);
    for table in state.gamma_cond.iter_mut() {
        for g in table.iter_mut() {
            *g = random_gamma(g.len());
        }
    }
    state.beta_mean = update_q_beta(&state, &noisy);
    state.bound = monitored_bound(&state, &noisy, &priors).unwrap();
    (state, noisy, priors)
}

fn assert_not_below(after: f64, before: f64, what: &str) {
    assert!(after >= before - 1e-9 * before.abs(), "{what}: {before} -> {after}");
}

#[test]
fn each_update_does_not_decrease_the_bound() {
    let mut rng = RngStream::new(100, 0);
    let cfg = FitConfig::default();
    for _ in 0..50 {
        let classes = rng.random_range(2..=4);
        let (mut s, noisy, priors) = random_problem(&mut rng, classes);
        let n = noisy.shape().total;
        let bound = |s: &VariationalState| monitored_bound(s, &noisy, &priors).unwrap();

        let before = bound(&s);
        s.beta_mean = update_q_beta(&s, &noisy);
        assert_not_below(bound(&s), before, "q(beta)");

        let before = bound(&s);
        s.gamma_cond = update_q_p_cond(&s, &priors, n).unwrap();
        assert_not_below(bound(&s), before, "q(p_cond)");

        let before = bound(&s);
        s.gamma_class = update_q_p_class(&s, &priors, n).unwrap();
        assert_not_below(bound(&s), before, "q(p_class)");

        for k in 0..s.theta_cond.len() {
            for i in 0..classes {
                let before = bound(&s);
                s.theta_cond[k][i] = theta_cond_step(&s, &noisy, i, k, &cfg).unwrap();
                assert_not_below(bound(&s), before, "theta_cond");
            }
        }
        let before = bound(&s);
        s.theta_class = theta_class_step(&s, &noisy, &cfg).unwrap();
        assert_not_below(bound(&s), before, "theta_class");
    }
}

#[test]
fn subproblem_coefficients_follow_the_update_formulas() {
    let mut rng = RngStream::new(101, 0);
    for _ in 0..20 {
        let classes = rng.random_range(2..=4);
        let (s, noisy, _) = random_problem(&mut rng, classes);
        let n = noisy.shape().total as f64;
        let b2 = noisy.scale().powi(2);
        let close = |x: f64, y: f64| (x - y).abs() <= 1e-10 * (1.0 + x.abs().max(y.abs()));
        let mut d = vec![0.0; classes];
        let mut e = vec![0.0; classes];
        for (k, table) in noisy.values().iter().enumerate() {
            for (i, m) in table.iter().enumerate() {
                let obj = theta_cond_objective(&s, &noisy, i, k).unwrap();
                let elog = dirichlet_expected_log(&s.gamma_cond[k][i]).unwrap();
                let ti = s.theta_class[i];
                for j in 0..m.len() {
                    let beta = s.beta_mean[k][i][j];
                    let t = s.theta_cond[k][i][j];
                    assert!(close(obj.quadratic()[j], -n * (n - 1.0) * ti * ti * beta / (2.0 * b2)));
                    let lin = -n * ti * beta / (2.0 * b2) + n * m[j] * ti * beta / b2 + n * ti * elog[j];
                    assert!(close(obj.linear()[j], lin));
                    assert!(close(obj.entropy()[j], -n * ti));
                    d[i] -= n * (n - 1.0) * t * t * beta / (2.0 * b2);
                    e[i] += n * t * (-beta / (2.0 * b2) + m[j] * beta / b2 + elog[j] - t.ln());
                }
            }
        }
        let elog = dirichlet_expected_log(&s.gamma_class).unwrap();
        let obj = theta_class_objective(&s, &noisy).unwrap();
        for i in 0..classes {
            assert!(close(obj.quadratic()[i], d[i]));
            assert!(close(obj.linear()[i], e[i] + n * elog[i]));
            assert!(close(obj.entropy()[i], -n));
        }
    }
}

fn two_level_value(a: &[f64], b: &[f64], c: &[f64], x: f64) -> f64 {
    let plogp = |t: f64| if t > 0.0 { t * t.ln() } else { 0.0 };
    let y = 1.0 - x;
    a[0] * x * x + b[0] * x + c[0] * plogp(x) + a[1] * y * y + b[1] * y + c[1] * plogp(y)
}

fn grid_argmax(a: &[f64], b: &[f64], c: &[f64]) -> f64 {
    (0..=10_000)
        .map(|s| s as f64 * 1e-4)
        .max_by(|x, y| two_level_value(a, b, c, *x).total_cmp(&two_level_value(a, b, c, *y)))
        .unwrap()
}

#[test]
fn theta_cond_matches_grid_search_on_a_worked_instance() {
    // N = 20, θ_i = 0.5, E[β] = (1, 1), b = 2, m = (12, 8), E[log p] = (−0.6, −0.8)
    let (n, ti, b2) = (20.0_f64, 0.5, 4.0);
    let m = [12.0, 8.0];
    let elog = [-0.6, -0.8];
    let a = vec![-n * (n - 1.0) * ti * ti / (2.0 * b2); 2];
    let lin: Vec<f64> = (0..2).map(|j| -n * ti / (2.0 * b2) + n * m[j] * ti / b2 + n * ti * elog[j]).collect();
    let c = vec![-n * ti; 2];
    let best = grid_argmax(&a, &lin, &c);
    let cfg = FitConfig::default();
    let sol = maximize(
        &SimplexObjective::new(a, lin, c).unwrap(),
        &[0.5, 0.5],
        &cfg.line_search,
        cfg.solver_tol,
        cfg.solver_max_iter,
    )
    .unwrap();
    assert!((sol.theta[0] - best).abs() <= 1e-3, "{} vs grid {best}", sol.theta[0]);
}

#[test]
fn theta_class_matches_grid_search_on_two_class_instances() {
    let mut rng = RngStream::new(102, 0);
    let cfg = FitConfig::default();
    for _ in 0..10 {
        let (s, noisy, _) = random_problem(&mut rng, 2);
        let obj = theta_class_objective(&s, &noisy).unwrap();
        let best = grid_argmax(obj.quadratic(), obj.linear(), obj.entropy());
        let step = theta_class_step(&s, &noisy, &cfg).unwrap();
        assert!((step[0] - best).abs() <= 1e-3, "{} vs grid {best}", step[0]);
    }
}

/// `Σ_j (c_j − 1) E[log p_j] + H` for `q = Beta(g)`: the part of the bound
/// that depends on one two-level `q(p)` factor, with `c = mass + α`.
fn dirichlet_block_value(c: &[f64], g: &[f64]) -> f64 {
    let q = DirichletParams::new(g.to_vec()).unwrap();
    let elog = dirichlet_expected_log(&q).unwrap();
    (c[0] - 1.0) * elog[0] + (c[1] - 1.0) * elog[1] + dirichlet_entropy(&q).unwrap()
}

fn refine(c: &[f64], centre: (f64, f64), half: f64, step: f64) -> (f64, f64) {
    let n = (2.0 * half / step).round() as i64;
    let mut best = (f64::NEG_INFINITY, centre);
    for i in 0..=n {
        for j in 0..=n {
            let g = (centre.0 - half + i as f64 * step, centre.1 - half + j as f64 * step);
            if g.0 <= 0.0 || g.1 <= 0.0 {
                continue;
            }
            let v = dirichlet_block_value(c, &[g.0, g.1]);
            if v > best.0 {
                best = (v, g);
            }
        }
    }
    best.1
}

#[test]
fn q_p_cond_matches_grid_search_over_beta_family() {
    let mut rng = RngStream::new(103, 0);
    for _ in 0..4 {
        let shape = ModelShape::new(2, vec![2], rng.random_range(1..=30)).unwrap();
        let priors = PriorSpec::symmetric(&shape, rng.random_range(0.5..2.0)).unwrap();
        let mut s = initialize(
            &NoisyMarginals::new(shape.clone(), vec![vec![vec![0.0; 2]; 2]], 1.0).unwrap(),
            &priors,
            InitMode::Uniform,
        )
        .unwrap();
        let x = rng.random_range(0.1..0.9);
        s.theta_class = vec![x, 1.0 - x];
        let y = rng.random_range(0.1..0.9);
        s.theta_cond[0][0] = vec![y, 1.0 - y];
        let gamma = update_q_p_cond(&s, &priors, shape.total).unwrap();
        let n = shape.total as f64;
        let alpha = priors.alpha_cond[0][0].alpha();
        let c = [n * x * y + alpha[0], n * x * (1.0 - y) + alpha[1]];
        let coarse = refine(&c, (20.0, 20.0), 19.9, 0.05);
        let fine = refine(&c, coarse, 0.06, 2e-4);
        let got = gamma[0][0].alpha();
        assert!((got[0] - fine.0).abs() <= 1e-3 && (got[1] - fine.1).abs() <= 1e-3, "{got:?} vs grid {fine:?}");
    }
}

#[test]
fn relabelling_classes_relabels_the_fit() {
    let mut rng = RngStream::new(104, 0);
    for _ in 0..5 {
        let (_, noisy, _) = random_problem(&mut rng, 3);
        let priors = PriorSpec::symmetric(noisy.shape(), 1.0).unwrap();
        let perm = [2, 0, 1];
        let cfg = FitConfig::default();
        let base = fit(&noisy, &priors, &cfg).unwrap().state;
        let moved = fit(&noisy.permute_classes(&perm).unwrap(), &priors, &cfg).unwrap().state;
        for (c, &old) in perm.iter().enumerate() {
            assert!((moved.theta_class[c] - base.theta_class[old]).abs() < 1e-6);
            for k in 0..base.theta_cond.len() {
                for (a, b) in moved.theta_cond[k][c].iter().zip(&base.theta_cond[k][old]) {
                    assert!((a - b).abs() < 1e-6);
                }
                for (a, b) in moved.beta_mean[k][c].iter().zip(&base.beta_mean[k][old]) {
                    assert!((a - b).abs() <= 1e-6 * b);
                }
            }
        }
    }
}

#[test]
fn fitted_state_stays_interior() {
    let mut rng = RngStream::new(105, 0);
    for _ in 0..20 {
        let classes = rng.random_range(2..=4);
        let (_, noisy, priors) = random_problem(&mut rng, classes);
        let s = fit(&noisy, &priors, &FitConfig::default()).unwrap().state;
        let simplex = |v: &[f64]| v.iter().all(|&t| t > 0.0 && t < 1.0) && (v.iter().sum::<f64>() - 1.0).abs() < 1e-9;
        assert!(simplex(&s.theta_class));
        assert!(s.theta_cond.iter().flatten().all(|r| simplex(r)));
        assert!(s.beta_mean.iter().flatten().flatten().all(|&b| b > 0.0 && b.is_finite()));
        assert!(s.gamma_cond.iter().flatten().all(|g| g.alpha().iter().all(|&a| a > 0.0)));
    }
}

proptest! {
    #[test]
    fn collapsed_beta_term_is_the_best_quadratic_minorizer(
        m in -50.0f64..50.0, n in 0.0f64..40.0, b in 0.1f64..50.0, scale in 0.05f64..20.0,
    ) {
        let r = (m - n).abs().max(1e-6);
        let tight = quadratic_minorizer(m, n, r, b).unwrap();
        prop_assert!((tight + r / b).abs() <= 1e-12 * (1.0 + r / b));
        prop_assert!(quadratic_minorizer(m, n, r * scale, b).unwrap() <= tight + 1e-12);
    }

    #[test]
    fn sq_deviation_is_nonnegative(
        ti in 1e-6f64..1.0, tij in 1e-6f64..1.0, m in -100.0f64..300.0, n in 0u64..300,
    ) {
        prop_assert!(expected_sq_deviation(ti, tij, m, n) >= -1e-9);
    }
}
