mod common;

use common::{complex_matrix, rng};
use dlpa_core::metrics::{check_power_constraint, normalize_full_power, sinr_from_gains, sinr_per_user, sum_rate, LinkGains, PowerAllocation};
use dlpa_core::pso::{equal_power_from_gains, evaluate_raw, pso_optimize, PsoConfig};
use ndarray::Array2;
use num_complex::Complex64;
use proptest::prelude::*;
use rand::Rng;

fn random_link(seed: u64, k: usize, m: usize, n_rf: usize) -> (Array2<Complex64>, Array2<Complex64>, Array2<Complex64>) {
    let mut g = rng(seed);
    (complex_matrix(&mut g, k, m), complex_matrix(&mut g, m, n_rf), complex_matrix(&mut g, n_rf, k))
}

fn alloc(powers: Vec<f64>) -> PowerAllocation {
    PowerAllocation { raw: powers.clone(), powers_mw: powers }
}

/// Per-term accumulation of `|h_kᵀ F b_t|²`, independent of matrix products.
fn scalar_sinr(h: &Array2<Complex64>, f: &Array2<Complex64>, b: &Array2<Complex64>, p: &[f64], sigma2: f64) -> Vec<f64> {
    let (k, m) = h.dim();
    let n_rf = f.ncols();
    let gain = |user: usize, beam: usize| {
        let mut acc = Complex64::new(0.0, 0.0);
        for a in 0..m {
            for r in 0..n_rf {
                acc += h[[user, a]] * f[[a, r]] * b[[r, beam]];
            }
        }
        acc.norm_sqr()
    };
    (0..k)
        .map(|u| {
            let interference: f64 = (0..k).filter(|&t| t != u).map(|t| p[t] * gain(u, t)).sum();
            p[u] * gain(u, u) / (interference + sigma2)
        })
        .collect()
}

#[test]
fn sinr_matches_scalar_loop() {
    let (h, f, b) = random_link(1, 3, 6, 4);
    let p = vec![0.7, 1.9, 0.2];
    let fast = sinr_per_user(h.view(), f.view(), b.view(), &alloc(p.clone()), 0.3).unwrap();
    let slow = scalar_sinr(&h, &f, &b, &p, 0.3);
    for (a, s) in fast.iter().zip(&slow) {
        assert!((a - s).abs() <= 1e-12 * s.abs().max(1.0));
    }
}

fn permute_cols(m: &Array2<Complex64>, perm: &[usize]) -> Array2<Complex64> {
    Array2::from_shape_fn(m.dim(), |(r, c)| m[[r, perm[c]]])
}

fn permute_rows(m: &Array2<Complex64>, perm: &[usize]) -> Array2<Complex64> {
    Array2::from_shape_fn(m.dim(), |(r, c)| m[[perm[r], c]])
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn sum_rate_ignores_user_order(seed in any::<u64>(), k in 2usize..5, shift in 1usize..4) {
        let (h, f, b) = random_link(seed, k, 6, 5);
        let p: Vec<f64> = (0..k).map(|i| 0.1 + i as f64).collect();
        let perm: Vec<usize> = (0..k).map(|i| (i + shift) % k).collect();
        let base = sum_rate(&sinr_per_user(h.view(), f.view(), b.view(), &alloc(p.clone()), 0.05).unwrap());
        let pp: Vec<f64> = perm.iter().map(|&i| p[i]).collect();
        let moved = sum_rate(&sinr_per_user(permute_rows(&h, &perm).view(), f.view(), permute_cols(&b, &perm).view(), &alloc(pp), 0.05).unwrap());
        prop_assert!((base - moved).abs() < 1e-10);
    }

    #[test]
    fn sinr_ignores_beam_phase(seed in any::<u64>(), user in 0usize..3, phase in -3.2f64..3.2) {
        let (h, f, mut b) = random_link(seed, 3, 6, 4);
        let p = vec![1.0, 0.5, 2.0];
        let before = sinr_per_user(h.view(), f.view(), b.view(), &alloc(p.clone()), 0.1).unwrap();
        let rot = Complex64::from_polar(1.0, phase);
        b.column_mut(user).mapv_inplace(|v| v * rot);
        let after = sinr_per_user(h.view(), f.view(), b.view(), &alloc(p), 0.1).unwrap();
        for (x, y) in before.iter().zip(&after) {
            prop_assert!((x - y).abs() <= 1e-10 * x.max(1.0));
        }
    }

    #[test]
    fn scaling_powers_up_raises_every_sinr(seed in any::<u64>(), alpha in 1.01f64..10.0) {
        let (h, f, b) = random_link(seed, 3, 6, 4);
        let gains = LinkGains::new(h.view(), f.view(), b.view()).unwrap();
        let p = vec![0.3, 1.0, 0.6];
        let scaled: Vec<f64> = p.iter().map(|v| v * alpha).collect();
        let s0 = sinr_from_gains(gains.gain_sq.view(), &p, 0.2);
        let s1 = sinr_from_gains(gains.gain_sq.view(), &scaled, 0.2);
        prop_assert!(s0.iter().zip(&s1).all(|(a, b)| b > a));
    }

    #[test]
    fn normalization_consumes_exactly_the_budget(seed in any::<u64>(), k in 1usize..7) {
        let (_, f, b) = random_link(seed, k, 8, 8);
        let mut g = rng(seed ^ 1);
        let raw: Vec<f64> = (0..k).map(|_| g.random_range(0.01..1.0)).collect();
        let gains: Vec<f64> = b.columns().into_iter().map(|c| c.iter().map(|v| v.norm_sqr()).sum()).collect();
        let a = normalize_full_power(&raw, &gains, 100.0).unwrap();
        let report = check_power_constraint(&a, b.view(), f.view(), 100.0);
        prop_assert!((report.consumed_unitary_mw - 100.0).abs() <= 1e-10 * 100.0);
        prop_assert!(a.powers_mw.iter().all(|&p| p >= 0.0));
    }

    #[test]
    fn consumption_forms_agree_for_unitary_rf(seed in any::<u64>()) {
        // a unitary F from a DFT matrix
        let n = 6;
        let f = Array2::from_shape_fn((n, n), |(a, r)| Complex64::from_polar(1.0 / (n as f64).sqrt(), -2.0 * std::f64::consts::PI * (a * r) as f64 / n as f64));
        let b = complex_matrix(&mut rng(seed), n, 3);
        let report = check_power_constraint(&alloc(vec![1.0, 2.0, 3.0]), b.view(), f.view(), 1e6);
        prop_assert!(report.forms_relative_gap() < 1e-10);
    }
}

fn synthetic_gains(g: &mut impl Rng, k: usize) -> LinkGains {
    let gain_sq = Array2::from_shape_fn((k, k), |(i, j)| if i == j { g.random_range(0.5..2.0) } else { g.random_range(0.0..0.3) });
    LinkGains { gain_sq, bb_gains: (0..k).map(|_| g.random_range(0.2..3.0)).collect() }
}

fn grid_best(gains: &LinkGains, sigma2: f64, p_total: f64) -> f64 {
    (0..=1000)
        .map(|i| {
            let share = i as f64 / 1000.0;
            evaluate_raw(gains, &[share, 1.0 - share], sigma2, p_total)
        })
        .fold(f64::NEG_INFINITY, f64::max)
}

#[test]
fn two_user_pso_reaches_grid_optimum() {
    let mut g = rng(21);
    for i in 0..50 {
        let gains = synthetic_gains(&mut g, 2);
        let res = pso_optimize(&gains, 0.05, 1.0, &PsoConfig::default().with_seed(i)).unwrap();
        assert!(res.best_fitness >= grid_best(&gains, 0.05, 1.0) - 1e-3, "instance {i}");
    }
}

#[test]
fn restarts_agree_within_a_tenth_of_a_percent() {
    let gains = synthetic_gains(&mut rng(8), 4);
    let fits: Vec<f64> = (0..5)
        .map(|s| pso_optimize(&gains, 0.02, 1.0, &PsoConfig::default().with_seed(100 + s)).unwrap().best_fitness)
        .collect();
    let (lo, hi) = fits.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(l, h), &v| (l.min(v), h.max(v)));
    assert!((hi - lo) / hi < 1e-3, "{fits:?}");
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn pso_dominates_equal_power_and_stays_in_box(seed in any::<u64>(), k in 1usize..6) {
        let gains = synthetic_gains(&mut rng(seed), k);
        let cfg = PsoConfig { max_iters: 60, ..PsoConfig::default().with_seed(seed) };
        let res = pso_optimize(&gains, 0.01, 10.0, &cfg).unwrap();
        let eq = equal_power_from_gains(&gains.bb_gains, 10.0).unwrap();
        prop_assert!(res.best_fitness >= gains.sum_rate(&eq.powers_mw, 0.01));
        prop_assert!(res.best_raw.iter().all(|r| (0.0..=1.0).contains(r)));
        prop_assert!(res.fitness_trace.windows(2).all(|w| w[1] >= w[0]));
        let a = res.allocation(&gains, 10.0).unwrap();
        let used: f64 = a.powers_mw.iter().zip(&gains.bb_gains).map(|(p, g)| p * g).sum();
        prop_assert!((used - 10.0).abs() <= 1e-9 * 10.0);
    }
}
