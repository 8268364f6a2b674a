mod common;

use common::{counts_of, gaussian, naive_log_likelihood, random_arms, random_history};
use mnl_bai::estimator::{fit_mle, fit_mle_default, hessian, log_likelihood, score, ChoiceCounts, DEFAULT_TOL};
use mnl_bai::model::{mnl_probs, sample_winner, FeedbackSample, History};
use mnl_bai::rng::seeded;
use nalgebra::DVector;
use rand::Rng;

#[test]
fn log_likelihood_matches_direct_enumeration() {
    let mut rng = seeded(100);
    for _ in 0..20 {
        let arms = random_arms(6, 3, &mut rng);
        let h = random_history(6, 3, 50, &mut rng);
        let theta = gaussian(3, 1.0, &mut rng);
        let naive = naive_log_likelihood(&arms, &h, &theta, 0.3);
        let fast = log_likelihood(&h, &arms, &theta, 0.3).unwrap();
        let grouped = log_likelihood(&counts_of(&h), &arms, &theta, 0.3).unwrap();
        assert!((naive - fast).abs() <= 1e-10 * naive.abs().max(1.0));
        assert!((naive - grouped).abs() <= 1e-10 * naive.abs().max(1.0));
    }
}

#[test]
fn score_matches_finite_differences() {
    let mut rng = seeded(101);
    let mut worst: f64 = 0.0;
    for _ in 0..20 {
        let d = rng.gen_range(2..6);
        let arms = random_arms(7, d, &mut rng);
        let h = random_history(7, rng.gen_range(2..5), 60, &mut rng);
        let theta = gaussian(d, 1.0, &mut rng);
        let g = score(&h, &arms, &theta, 1e-2).unwrap();
        let eps = 1e-6;
        for i in 0..d {
            let mut up = theta.clone();
            up[i] += eps;
            let mut dn = theta.clone();
            dn[i] -= eps;
            let fd = (naive_log_likelihood(&arms, &h, &up, 1e-2) - naive_log_likelihood(&arms, &h, &dn, 1e-2)) / (2.0 * eps);
            worst = worst.max((fd - g[i]).abs() / g[i].abs().max(1.0));
        }
    }
    assert!(worst <= 1e-5, "{worst:e}");
}

#[test]
fn hessian_matches_finite_differences_and_is_negative_definite() {
    let mut rng = seeded(102);
    for _ in 0..20 {
        let d = rng.gen_range(2..6);
        let arms = random_arms(7, d, &mut rng);
        let h = random_history(7, 3, 60, &mut rng);
        let theta = gaussian(d, 1.0, &mut rng);
        let lambda = 1e-2;
        let hm = hessian(&h, &arms, &theta, lambda).unwrap();
        let eps = 1e-5;
        for j in 0..d {
            let mut up = theta.clone();
            up[j] += eps;
            let mut dn = theta.clone();
            dn[j] -= eps;
            let col = (score(&h, &arms, &up, lambda).unwrap() - score(&h, &arms, &dn, lambda).unwrap()) / (2.0 * eps);
            for i in 0..d {
                assert!((col[i] - hm[(i, j)]).abs() <= 1e-4 * hm[(i, j)].abs().max(1.0));
            }
        }
        assert!((&hm - hm.transpose()).norm() <= 1e-12 * hm.norm());
        let eig = hm.clone().symmetric_eigen().eigenvalues;
        assert!(eig.iter().all(|&e| e <= -lambda * (1.0 - 1e-9)), "{eig}");
    }
}

/// Coarse grid then successively finer grids around the best point.
fn grid_argmax(f: impl Fn(f64, f64) -> f64) -> (f64, f64) {
    let (mut cx, mut cy, mut half) = (0.0, 0.0, 4.0);
    for _ in 0..12 {
        let n = 40;
        let mut best = (f64::NEG_INFINITY, cx, cy);
        for i in 0..=n {
            for j in 0..=n {
                let x = cx - half + 2.0 * half * i as f64 / n as f64;
                let y = cy - half + 2.0 * half * j as f64 / n as f64;
                let v = f(x, y);
                if v > best.0 {
                    best = (v, x, y);
                }
            }
        }
        cx = best.1;
        cy = best.2;
        half *= 0.25;
    }
    (cx, cy)
}

#[test]
fn d2_mle_agrees_with_grid_oracle() {
    let mut rng = seeded(103);
    for _ in 0..5 {
        let arms = random_arms(5, 2, &mut rng);
        let truth = gaussian(2, 0.8, &mut rng);
        let mut h = History::new();
        for _ in 0..400 {
            let a = mnl_bai::design::random_action(5, 3, &mut rng).unwrap();
            let p = mnl_probs(&arms, &truth, &a).unwrap();
            let w = sample_winner(&p, &mut rng).unwrap();
            h.push(FeedbackSample::new(a, w).unwrap());
        }
        let fit = fit_mle_default(&h, &arms, 1e-2, &DVector::zeros(2)).unwrap();
        assert!(fit.converged);
        let (x, y) = grid_argmax(|x, y| naive_log_likelihood(&arms, &h, &DVector::from_vec(vec![x, y]), 1e-2));
        let err = (fit.theta_hat[0] - x).abs().max((fit.theta_hat[1] - y).abs());
        assert!(err <= 1e-3, "{} vs ({x}, {y})", fit.theta_hat);
    }
}

#[test]
fn objective_trace_is_monotone() {
    let mut rng = seeded(104);
    for _ in 0..30 {
        let d = rng.gen_range(2..7);
        let arms = random_arms(8, d, &mut rng);
        let h = random_history(8, 3, rng.gen_range(5..200), &mut rng);
        let init = gaussian(d, 3.0, &mut rng);
        let fit = fit_mle(&h, &arms, 1e-4, DEFAULT_TOL, 100, &init).unwrap();
        for w in fit.objective_trace.windows(2) {
            // steps below the objective's resolution may lose a few ulps
            let slack = 8.0 * f64::EPSILON * w[0].abs().max(1.0);
            assert!(w[1] >= w[0] - slack, "{:?}", fit.objective_trace);
        }
        let end = log_likelihood(&h, &arms, &fit.theta_hat, 1e-4).unwrap();
        assert!(end >= log_likelihood(&h, &arms, &init, 1e-4).unwrap());
    }
}

#[test]
fn warm_start_from_the_optimum_stays_put() {
    let mut rng = seeded(105);
    let arms = random_arms(6, 3, &mut rng);
    let h = random_history(6, 3, 300, &mut rng);
    let first = fit_mle_default(&h, &arms, 1e-2, &DVector::zeros(3)).unwrap();
    assert!(first.converged);
    let second = fit_mle_default(&h, &arms, 1e-2, &first.theta_hat).unwrap();
    assert!(second.converged);
    assert!(second.iterations <= 1);
    assert!((&second.theta_hat - &first.theta_hat).norm() <= 1e-8);
}

#[test]
fn history_order_does_not_matter() {
    let mut rng = seeded(106);
    let arms = random_arms(6, 3, &mut rng);
    let h = random_history(6, 3, 200, &mut rng);
    let mut samples: Vec<FeedbackSample> = h.samples().to_vec();
    samples.reverse();
    let a = fit_mle_default(&h, &arms, 1e-2, &DVector::zeros(3)).unwrap();
    let b = fit_mle_default(samples.as_slice(), &arms, 1e-2, &DVector::zeros(3)).unwrap();
    let mut counts = ChoiceCounts::new();
    for s in &samples {
        counts.record_sample(s);
    }
    let c = fit_mle_default(&counts, &arms, 1e-2, &DVector::zeros(3)).unwrap();
    assert!((&a.theta_hat - &b.theta_hat).norm() <= 1e-8);
    assert!((&a.theta_hat - &c.theta_hat).norm() <= 1e-8);
    assert_eq!(counts.total(), 200);
}

#[test]
fn stationarity_at_the_fit() {
    let mut rng = seeded(107);
    let arms = random_arms(6, 4, &mut rng);
    let h = random_history(6, 3, 200, &mut rng);
    let fit = fit_mle_default(&h, &arms, 1e-3, &DVector::zeros(4)).unwrap();
    let g = score(&h, &arms, &fit.theta_hat, 1e-3).unwrap();
    assert!(g.norm() <= DEFAULT_TOL);
    assert!((g.norm() - fit.grad_norm).abs() <= 1e-12);
}

#[test]
fn estimate_approaches_truth_with_data() {
    let mut rng = seeded(108);
    let arms = random_arms(8, 3, &mut rng);
    let truth = DVector::from_vec(vec![1.0, -0.5, 0.3]);
    let mut h = History::new();
    let mut errs = Vec::new();
    for n in [500usize, 5000, 50_000] {
        while h.len() < n {
            let a = mnl_bai::design::random_action(8, 3, &mut rng).unwrap();
            let w = sample_winner(&mnl_probs(&arms, &truth, &a).unwrap(), &mut rng).unwrap();
            h.push(FeedbackSample::new(a, w).unwrap());
        }
        let fit = fit_mle_default(&counts_of(&h), &arms, 1e-4, &DVector::zeros(3)).unwrap();
        errs.push((&fit.theta_hat - &truth).norm());
    }
    assert!(errs[2] < errs[0], "{errs:?}");
    assert!(errs[2] < 0.15, "{errs:?}");
}

#[test]
fn invalid_inputs_are_rejected() {
    let mut rng = seeded(109);
    let arms = random_arms(4, 2, &mut rng);
    let h = random_history(4, 2, 10, &mut rng);
    assert!(fit_mle_default(&h, &arms, -1.0, &DVector::zeros(2)).is_err());
    assert!(fit_mle_default(&h, &arms, 1e-2, &DVector::zeros(3)).is_err());
    assert!(fit_mle_default(&h, &arms, 1e-2, &DVector::from_vec(vec![f64::NAN, 0.0])).is_err());
}
