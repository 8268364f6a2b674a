//! Sample-complexity bounds and confidence diagnostics.
//!
//! The lower-bound construction perturbs `theta*` so that a chosen
//! sub-optimal arm `j` overtakes the best arm by `epsilon` while every other
//! arm keeps its utility. Under that perturbation the MNL winner distribution
//! of a subset changes only if it contains `j`, and then its KL divergence has
//! the closed form `f_c(mu_j)` with `f_c(x) = ln(1 + x (e^c - 1)) - c x`.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimator::Observations;
use crate::model::{best_arm, mnl_probs, softmax_in_place, ArmSet, Instance, SubsetAction};

/// `f_alpha(x) = ln(1 + x (e^alpha - 1)) - alpha x` on `x in [0, 1]`.
pub fn f_alpha(alpha: f64, x: f64) -> Result<f64> {
    if !(alpha > 0.0 && alpha.is_finite()) {
        return Err(Error::invalid(format!("alpha must be positive, got {alpha}")));
    }
    if !(0.0..=1.0).contains(&x) {
        return Err(Error::invalid(format!("x must lie in [0, 1], got {x}")));
    }
    Ok((x * alpha.exp_m1()).ln_1p() - alpha * x)
}

/// Maximizer of [`f_alpha`]: `1/alpha - 1/(e^alpha - 1)`.
pub fn f_alpha_argmax(alpha: f64) -> f64 {
    1.0 / alpha - 1.0 / alpha.exp_m1()
}

/// `sum_i p_i ln(p_i / q_i)` with `0 ln 0 = 0`.
pub fn kl_categorical(p: &[f64], q: &[f64]) -> Result<f64> {
    if p.len() != q.len() {
        return Err(Error::invalid("distributions have different lengths"));
    }
    let mut total = 0.0;
    for (i, (&pi, &qi)) in p.iter().zip(q).enumerate() {
        if pi < 0.0 || qi < 0.0 || !pi.is_finite() || !qi.is_finite() {
            return Err(Error::invalid(format!("entry {i} is not a probability")));
        }
        if pi == 0.0 {
            continue;
        }
        if qi == 0.0 {
            return Err(Error::invalid(format!("q vanishes at {i} where p does not")));
        }
        total += pi * (pi / qi).ln();
    }
    Ok(total.max(0.0))
}

/// KL divergence between the winner distributions of `action` under two
/// parameters.
pub fn kl_mnl_subset(arms: &ArmSet, action: &SubsetAction, theta1: &DVector<f64>, theta2: &DVector<f64>) -> Result<f64> {
    let p = mnl_probs(arms, theta1, action)?;
    let q = mnl_probs(arms, theta2, action)?;
    kl_categorical(&p, &q)
}

/// Arm matrix as `d x N` columns.
fn columns(arms: &ArmSet, skip: Option<usize>) -> DMatrix<f64> {
    let cols: Vec<&DVector<f64>> = (0..arms.len()).filter(|&i| Some(i) != skip).map(|i| arms.get(i)).collect();
    DMatrix::from_columns(&cols.iter().map(|c| (*c).clone()).collect::<Vec<_>>())
}

fn check_full_rank_square(instance: &Instance) -> Result<()> {
    if instance.n_arms() != instance.dim() {
        return Err(Error::invalid(format!(
            "the lower-bound construction needs N = d, got N = {} and d = {}",
            instance.n_arms(),
            instance.dim()
        )));
    }
    let a = columns(instance.arms(), None);
    let svd = a.svd(false, false);
    let smax = svd.singular_values.max();
    let smin = svd.singular_values.min();
    if !(smin > 1e-10 * smax.max(1.0)) {
        return Err(Error::invalid("arms are not linearly independent"));
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PerturbationReport {
    pub j: usize,
    pub best: usize,
    pub delta_j: DVector<f64>,
    pub theta_j: DVector<f64>,
    pub epsilon: f64,
    /// `Delta_{1j} = <theta*, a_1 - a_j>`.
    pub gap: f64,
    /// `max |<a_i, delta_j>|` over the arms other than `j`.
    pub equality_residual: f64,
    /// `<a_1 - a_j, delta_j> - (epsilon + Delta_{1j})`.
    pub margin_residual: f64,
}

/// Closest parameter to `theta*` under which arm `j` beats the best arm by
/// `epsilon` while every other arm keeps its utility.
pub fn make_perturbation(instance: &Instance, j: usize, epsilon: f64) -> Result<PerturbationReport> {
    if !(epsilon > 0.0) {
        return Err(Error::invalid("epsilon must be positive"));
    }
    if j >= instance.n_arms() {
        return Err(Error::invalid(format!("arm {j} out of range")));
    }
    let best = best_arm(instance);
    if j == best {
        return Err(Error::invalid("j must differ from the best arm"));
    }
    check_full_rank_square(instance)?;
    let arms = instance.arms();
    let d = instance.dim();
    let others = columns(arms, Some(j));
    let gram = others.transpose() * &others;
    let gram_inv = gram
        .cholesky()
        .ok_or_else(|| Error::invalid("the remaining arms are rank deficient"))?
        .inverse();
    let projector = DMatrix::identity(d, d) - &others * gram_inv * others.transpose();
    let diff = arms.get(best) - arms.get(j);
    let projected = &projector * &diff;
    let norm_sq = diff.dot(&projected);
    if !(norm_sq > 1e-24) {
        return Err(Error::DegenerateDirection(format!(
            "a_best - a_{j} is annihilated by the projection"
        )));
    }
    let gap = diff.dot(instance.theta_star());
    let delta_j = projected * ((epsilon + gap) / norm_sq);
    let theta_j = instance.theta_star() - &delta_j;
    let equality_residual = (0..arms.len())
        .filter(|&i| i != j)
        .map(|i| arms.get(i).dot(&delta_j).abs())
        .fold(0.0, f64::max);
    let margin_residual = diff.dot(&delta_j) - (epsilon + gap);
    Ok(PerturbationReport {
        j,
        best,
        delta_j,
        theta_j,
        epsilon,
        gap,
        equality_residual,
        margin_residual,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LowerBoundReport {
    /// Sub-optimal arms in index order.
    pub arms: Vec<usize>,
    /// `1 / (Delta_{1j} + epsilon)^2` per arm.
    pub per_j_terms: Vec<f64>,
    /// `f_{Delta_{1j} + epsilon}(e / (K - 1))`, when `e / (K - 1) <= 1`.
    pub kl_caps: Vec<Option<f64>>,
    pub total: f64,
    pub warnings: Vec<String>,
}

/// Lower bound on the expected number of steps:
/// `(1 - 1/K) / e * sum_j (Delta_{1j} + epsilon)^{-2} * ln(1 / (2.4 delta))`.
pub fn lower_bound_value(instance: &Instance, epsilon: f64, delta: f64) -> Result<LowerBoundReport> {
    if !(epsilon > 0.0) {
        return Err(Error::invalid("epsilon must be positive"));
    }
    if !(delta > 0.0 && delta < 1.0) {
        return Err(Error::invalid("delta must lie in (0, 1)"));
    }
    check_full_rank_square(instance)?;
    let best = best_arm(instance);
    let k = instance.k() as f64;
    let arms = instance.arms();
    let mut warnings = Vec::new();
    if instance.k() < 12 {
        warnings.push(format!(
            "K = {} is below 12, the smallest K with e/(K-1) <= 1/4",
            instance.k()
        ));
    }
    let x_cap = std::f64::consts::E / (k - 1.0);
    let mut ids = Vec::new();
    let mut terms = Vec::new();
    let mut caps = Vec::new();
    for j in (0..instance.n_arms()).filter(|&j| j != best) {
        let c = (arms.get(best) - arms.get(j)).dot(instance.theta_star()) + epsilon;
        if c > 1.0 {
            warnings.push(format!("Delta + epsilon = {c} exceeds 1 for arm {j}"));
        }
        ids.push(j);
        terms.push(1.0 / (c * c));
        caps.push(if x_cap <= 1.0 { Some(f_alpha(c, x_cap)?) } else { None });
    }
    let total = (1.0 - 1.0 / k) / std::f64::consts::E * terms.iter().sum::<f64>() * (1.0 / (2.4 * delta)).ln();
    Ok(LowerBoundReport {
        arms: ids,
        per_j_terms: terms,
        kl_caps: caps,
        total,
        warnings,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct UpperBoundParams {
    pub d: usize,
    pub k: usize,
    pub n: usize,
    pub delta: f64,
    pub kappa_alpha: f64,
    pub delta_min: f64,
    pub beta: f64,
}

impl UpperBoundParams {
    fn validate(&self) -> Result<()> {
        let positive = [self.delta, self.kappa_alpha, self.delta_min];
        if self.d == 0 || self.k == 0 || self.n == 0 || positive.iter().any(|v| !(*v > 0.0)) || self.beta < 0.0 {
            return Err(Error::invalid("upper-bound parameters must be positive"));
        }
        Ok(())
    }
}

/// `512 (1 + beta) / (kappa^2 Delta_min^2) * (d + ln(3 N^2 tau^2 / delta)) * d / K`.
pub fn upper_bound_value(p: &UpperBoundParams, tau: f64) -> Result<f64> {
    p.validate()?;
    if !(tau > 0.0) {
        return Err(Error::invalid("tau must be positive"));
    }
    let (d, k, n) = (p.d as f64, p.k as f64, p.n as f64);
    let log_term = (3.0 * n * n * tau * tau / p.delta).ln();
    Ok(512.0 * (1.0 + p.beta) / (p.kappa_alpha.powi(2) * p.delta_min.powi(2)) * (d + log_term) * d / k)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FixedPoint {
    pub value: f64,
    pub iterations: usize,
    pub converged: bool,
}

/// Iterates `tau <- upper_bound_value(tau)` until the relative change drops
/// below `1e-6`, for at most 100 iterations.
pub fn upper_bound_fixed_point(p: &UpperBoundParams, tau_guess: f64) -> Result<FixedPoint> {
    let mut tau = tau_guess;
    for it in 1..=100 {
        let next = upper_bound_value(p, tau)?;
        let change = (next - tau).abs() / next.abs().max(f64::MIN_POSITIVE);
        tau = next;
        if change < 1e-6 {
            return Ok(FixedPoint {
                value: tau,
                iterations: it,
                converged: true,
            });
        }
    }
    Ok(FixedPoint {
        value: tau,
        iterations: 100,
        converged: false,
    })
}

/// Gauss-Legendre nodes and weights on `[0, 1]`.
pub fn gauss_legendre_unit(n: usize) -> (Vec<f64>, Vec<f64>) {
    assert!(n >= 1, "need at least one node");
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    let nf = n as f64;
    for i in 0..n.div_ceil(2) {
        // Tricomi initial guess, then Newton on P_n
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (nf + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, x);
            for m in 2..=n {
                let mf = m as f64;
                let p2 = ((2.0 * mf - 1.0) * x * p1 - (mf - 1.0) * p0) / mf;
                p0 = p1;
                p1 = p2;
            }
            let pn = if n == 1 { x } else { p1 };
            let pn1 = if n == 1 { 1.0 } else { p0 };
            dp = nf * (x * pn - pn1) / (x * x - 1.0);
            let dx = pn / dp;
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        nodes[i] = 0.5 * (1.0 - x);
        nodes[n - 1 - i] = 0.5 * (1.0 + x);
        weights[i] = 0.5 * w;
        weights[n - 1 - i] = 0.5 * w;
    }
    (nodes, weights)
}

/// `sum_s X_s' X_s` plus `ridge * I` over grouped observations.
fn information_matrix<O: Observations + ?Sized>(arms: &ArmSet, obs: &O, ridge: f64) -> DMatrix<f64> {
    let d = arms.dim();
    let mut v = DMatrix::identity(d, d) * ridge;
    obs.visit_groups(&mut |indices, wins| {
        let n: f64 = wins.iter().sum();
        for &i in indices {
            v.ger(n, arms.get(i), arms.get(i), 1.0);
        }
    });
    v
}

/// `F(theta1, theta2) = sum_s X_s M_s X_s'` with `M_s` the average of the
/// softmax Jacobian along the segment from `theta2` to `theta1`, integrated
/// with the given quadrature rule.
pub fn jacobian_integral<O: Observations + ?Sized>(
    arms: &ArmSet,
    obs: &O,
    theta1: &DVector<f64>,
    theta2: &DVector<f64>,
    nodes: &[f64],
    weights: &[f64],
) -> DMatrix<f64> {
    let d = arms.dim();
    let mut f = DMatrix::zeros(d, d);
    let mut mu = Vec::new();
    let mut mean = DVector::zeros(d);
    for (&q, &w) in nodes.iter().zip(weights) {
        let theta = theta1 * q + theta2 * (1.0 - q);
        obs.visit_groups(&mut |indices, wins| {
            let n: f64 = wins.iter().sum();
            mu.clear();
            mu.extend(indices.iter().map(|&i| arms.utility(&theta, i)));
            softmax_in_place(&mut mu);
            mean.fill(0.0);
            for (k, &i) in indices.iter().enumerate() {
                let x = arms.get(i);
                mean.axpy(mu[k], x, 1.0);
                f.ger(w * n * mu[k], x, x, 1.0);
            }
            f.ger(-w * n, &mean, &mean, 1.0);
        });
    }
    f
}

/// Smallest eigenvalue of `L^{-1} F L^{-T}` where `V = L L'`.
fn relative_min_eigenvalue(f: &DMatrix<f64>, v: &DMatrix<f64>) -> Result<f64> {
    let l = v
        .clone()
        .cholesky()
        .ok_or_else(|| Error::invalid("information matrix is not positive definite"))?
        .l();
    let l_inv = l
        .try_inverse()
        .ok_or_else(|| Error::invalid("information matrix factor is singular"))?;
    let mut m = &l_inv * f * l_inv.transpose();
    let n = m.nrows();
    for i in 0..n {
        for j in 0..i {
            let s = 0.5 * (m[(i, j)] + m[(j, i)]);
            m[(i, j)] = s;
            m[(j, i)] = s;
        }
    }
    Ok(m.symmetric_eigenvalues().min())
}

/// Sampled lower estimate of the curvature constant relating `F(theta, theta*)`
/// to the ridged information matrix over the ball `|theta - theta*| <= radius`.
///
/// This is a diagnostic, not a certificate: the true constant is an infimum
/// over the whole ball and sampling can only over-estimate it.
#[allow(clippy::too_many_arguments)]
pub fn empirical_kappa<O: Observations + ?Sized, R: Rng + ?Sized>(
    instance: &Instance,
    obs: &O,
    alpha_ball: f64,
    n_theta_samples: usize,
    quadrature_nodes: usize,
    ridge: f64,
    rng: &mut R,
) -> Result<f64> {
    if obs.is_empty() {
        return Err(Error::invalid("history is empty"));
    }
    if !(alpha_ball >= 0.0) || n_theta_samples == 0 || quadrature_nodes == 0 || !(ridge > 0.0) {
        return Err(Error::invalid("invalid empirical-kappa settings"));
    }
    let arms = instance.arms();
    let d = instance.dim();
    let v = information_matrix(arms, obs, ridge);
    let (nodes, weights) = gauss_legendre_unit(quadrature_nodes);
    let mut kappa = f64::INFINITY;
    for _ in 0..n_theta_samples {
        let theta = if alpha_ball == 0.0 {
            instance.theta_star().clone()
        } else {
            let dir = DVector::from_fn(d, |_, _| rng.sample::<f64, _>(StandardNormal));
            let r = alpha_ball * rng.gen::<f64>().powf(1.0 / d as f64);
            instance.theta_star() + dir.normalize() * r
        };
        let f = jacobian_integral(arms, obs, &theta, instance.theta_star(), &nodes, &weights);
        kappa = kappa.min(relative_min_eigenvalue(&f, &v)?);
    }
    Ok(kappa)
}

/// `lambda_min` of `V^{-1/2} F(theta, theta) V^{-1/2}` in closed form (no
/// quadrature), for checking [`empirical_kappa`].
pub fn kappa_at<O: Observations + ?Sized>(instance: &Instance, obs: &O, theta: &DVector<f64>, ridge: f64) -> Result<f64> {
    let arms = instance.arms();
    let v = information_matrix(arms, obs, ridge);
    let f = jacobian_integral(arms, obs, theta, theta, &[0.5], &[1.0]);
    relative_min_eigenvalue(&f, &v)
}
