//! Fast self-checks behind `mnl-bai verify`.
//!
//! Each check draws a handful of random cases from a fixed seed and compares
//! an implementation against a slower or closed-form reference. The full
//! property suites live in the crate's integration tests.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;

use crate::algorithms::glm_pair_reduction;
use crate::design::{self, DesignState, Direction, GapSet};
use crate::error::Result;
use crate::estimator::{hessian, log_likelihood, score, ChoiceCounts};
use crate::model::{mnl_probs, ArmSet, Instance, SubsetAction};
use crate::rng::{seeded, SimRng};
use crate::theory::{f_alpha, kl_mnl_subset, lower_bound_value, make_perturbation};

#[derive(Debug, Clone, PartialEq)]
pub struct Check {
    pub name: &'static str,
    pub passed: bool,
    /// Worst observed error against the check's tolerance.
    pub detail: String,
}

fn check(name: &'static str, worst: f64, tol: f64) -> Check {
    Check {
        name,
        passed: worst <= tol,
        detail: format!("worst {worst:.3e} (tol {tol:.0e})"),
    }
}

fn gaussian_vec(d: usize, scale: f64, rng: &mut SimRng) -> DVector<f64> {
    DVector::from_fn(d, |_, _| scale * rng.sample::<f64, _>(StandardNormal))
}

fn unit_ball_arms(n: usize, d: usize, rng: &mut SimRng) -> ArmSet {
    let arms = (0..n)
        .map(|_| {
            let v = gaussian_vec(d, 1.0, rng);
            let norm = v.norm();
            v / norm * rng.gen_range(0.3..1.0)
        })
        .collect();
    ArmSet::new(arms).expect("valid arms")
}

fn random_counts(n: usize, k: usize, steps: usize, rng: &mut SimRng) -> ChoiceCounts {
    let mut c = ChoiceCounts::new();
    for _ in 0..steps {
        let a = design::random_action(n, k, rng).expect("n >= 2");
        c.record(&a, rng.gen_range(0..k));
    }
    c
}

fn simplex() -> Result<Check> {
    let mut rng = seeded(11);
    let mut worst: f64 = 0.0;
    for _ in 0..200 {
        let arms = unit_ball_arms(6, 3, &mut rng);
        let theta = gaussian_vec(3, 5.0, &mut rng);
        let a = design::random_action(6, 4, &mut rng)?;
        let p = mnl_probs(&arms, &theta, &a)?;
        worst = worst.max((p.iter().sum::<f64>() - 1.0).abs());
        if p.iter().any(|&x| !(x > 0.0)) {
            worst = f64::INFINITY;
        }
    }
    Ok(check("mnl probabilities lie on the simplex", worst, 1e-12))
}

fn score_fd() -> Result<Check> {
    let mut rng = seeded(12);
    let mut worst: f64 = 0.0;
    for _ in 0..20 {
        let arms = unit_ball_arms(5, 3, &mut rng);
        let obs = random_counts(5, 3, 40, &mut rng);
        let theta = gaussian_vec(3, 1.0, &mut rng);
        let g = score(&obs, &arms, &theta, 1e-3)?;
        let h = 1e-6;
        for i in 0..3 {
            let mut up = theta.clone();
            up[i] += h;
            let mut dn = theta.clone();
            dn[i] -= h;
            let fd = (log_likelihood(&obs, &arms, &up, 1e-3)? - log_likelihood(&obs, &arms, &dn, 1e-3)?) / (2.0 * h);
            worst = worst.max((fd - g[i]).abs() / g[i].abs().max(1.0));
        }
    }
    Ok(check("score matches finite differences", worst, 1e-5))
}

fn hessian_fd() -> Result<Check> {
    let mut rng = seeded(13);
    let mut worst: f64 = 0.0;
    for _ in 0..20 {
        let arms = unit_ball_arms(5, 3, &mut rng);
        let obs = random_counts(5, 3, 40, &mut rng);
        let theta = gaussian_vec(3, 1.0, &mut rng);
        let hm = hessian(&obs, &arms, &theta, 1e-3)?;
        let h = 1e-5;
        for j in 0..3 {
            let mut up = theta.clone();
            up[j] += h;
            let mut dn = theta.clone();
            dn[j] -= h;
            let col = (score(&obs, &arms, &up, 1e-3)? - score(&obs, &arms, &dn, 1e-3)?) / (2.0 * h);
            for i in 0..3 {
                worst = worst.max((col[i] - hm[(i, j)]).abs() / hm[(i, j)].abs().max(1.0));
            }
        }
    }
    Ok(check("hessian matches finite differences", worst, 1e-4))
}

fn sherman_morrison() -> Result<Check> {
    let mut rng = seeded(14);
    let arms = unit_ball_arms(8, 4, &mut rng);
    let mut state = DesignState::ridge_init(4, 1e-4)?;
    for _ in 0..1000 {
        let a = design::random_action(8, 3, &mut rng)?;
        state.add_action(&arms, &a);
    }
    let dense = state.v().clone().try_inverse().expect("V is positive definite");
    let worst = (state.v_inv() - &dense).norm() / dense.norm();
    Ok(check("incremental inverse matches dense inverse", worst, 1e-8))
}

fn greedy_exhaustive() -> Result<Check> {
    let mut rng = seeded(15);
    let mut worst: f64 = 0.0;
    for _ in 0..20 {
        let arms = unit_ball_arms(6, 3, &mut rng);
        let mut state = DesignState::ridge_init(3, 1e-4)?;
        for _ in 0..rng.gen_range(3..15) {
            state.add_action(&arms, &design::random_action(6, 3, &mut rng)?);
        }
        let gaps = GapSet::all_pairs(&(0..6).collect::<Vec<_>>());
        let dirs: Vec<Direction> = gaps.pairs().iter().map(|&(i, j)| Direction::Diff(i, j)).collect();
        let fast = design::candidate_objectives(&state.arm_gram(&arms), &dirs);
        for (k, &f) in fast.iter().enumerate() {
            let mut trial = state.clone();
            trial.add_arm(arms.get(k));
            let inv: DMatrix<f64> = trial.v().clone().try_inverse().expect("positive definite");
            let exact = dirs
                .iter()
                .map(|g| {
                    let v = g.vector(&arms);
                    v.dot(&(&inv * &v))
                })
                .fold(f64::NEG_INFINITY, f64::max);
            worst = worst.max((exact - f).abs() / exact.abs().max(1e-12));
        }
    }
    Ok(check("greedy trial objectives match dense recomputation", worst, 1e-8))
}

fn kl_closed_form() -> Result<Check> {
    let mut rng = seeded(16);
    let mut worst: f64 = 0.0;
    for _ in 0..30 {
        let d = rng.gen_range(2..5);
        let arms = unit_ball_arms(d, d, &mut rng);
        let theta = gaussian_vec(d, 0.3, &mut rng);
        let Ok(inst) = Instance::new(arms, theta, 3, 0.05) else { continue };
        let best = crate::model::best_arm(&inst);
        let j = (best + 1) % d;
        let rep = match make_perturbation(&inst, j, 0.05) {
            Ok(r) => r,
            Err(_) => continue,
        };
        let alpha = rep.epsilon + rep.gap;
        let others: Vec<usize> = (0..d).filter(|&i| i != j).collect();
        let s = SubsetAction::new(vec![j, others[rng.gen_range(0..others.len())], others[0]], d)?;
        let mu_j = mnl_probs(inst.arms(), inst.theta_star(), &s)?[0];
        let kl = kl_mnl_subset(inst.arms(), &s, inst.theta_star(), &rep.theta_j)?;
        worst = worst.max((kl - f_alpha(alpha, mu_j)?).abs());
        worst = worst.max(rep.equality_residual).max(rep.margin_residual.abs());
    }
    Ok(check("perturbation KL equals its closed form", worst, 1e-10))
}

fn lower_bound_example() -> Result<Check> {
    // Delta + epsilon = 1 with theta = [0.9, 0] and epsilon = 0.1.
    let arms = ArmSet::from_rows(&[vec![1.0, 0.0], vec![0.0, 1.0]])?;
    let inst = Instance::new(arms, DVector::from_vec(vec![0.9, 0.0]), 2, 0.05)?;
    let rep = lower_bound_value(&inst, 0.1, 0.05)?;
    Ok(check("lower bound on the two-arm example", (rep.total - 0.39001).abs(), 1e-4))
}

fn reduction_identity() -> Result<Check> {
    let mut rng = seeded(17);
    let mut worst: f64 = 0.0;
    for _ in 0..20 {
        let arms = unit_ball_arms(5, 3, &mut rng);
        let theta = gaussian_vec(3, 1.5, &mut rng);
        let Ok(inst) = Instance::new(arms, theta, 2, 0.05) else { continue };
        let problem = glm_pair_reduction(&inst)?;
        for &pair in problem.pairs() {
            let u = problem.feature(pair).dot(inst.theta_star());
            let sigmoid = 1.0 / (1.0 + (-u).exp());
            worst = worst.max((problem.success_probability(pair)? - sigmoid).abs());
        }
    }
    Ok(check("pairwise reduction matches the logistic link", worst, 1e-12))
}

/// Runs every fast check.
pub fn run_fast_checks() -> Result<Vec<Check>> {
    Ok(vec![
        simplex()?,
        score_fd()?,
        hessian_fd()?,
        sherman_morrison()?,
        greedy_exhaustive()?,
        kl_closed_form()?,
        lower_bound_example()?,
        reduction_identity()?,
    ])
}
