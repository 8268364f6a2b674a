//! Regularized maximum-likelihood estimation from winner-only feedback.
//!
//! The log-likelihood of a set of observations is
//! `sum_s log mu_{winner(s)}(theta) - (lambda / 2) |theta|^2`, concave in
//! `theta` and strictly concave for `lambda > 0`. Its maximizer is found with
//! damped Newton steps and Armijo backtracking.
//!
//! The likelihood only depends on which arms were played together and how
//! often each slot won, so observations can be stored as a histogram over
//! distinct subsets ([`ChoiceCounts`]). Refits during a run cost
//! `O(#distinct subsets)` instead of `O(t)`.

use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{ArmSet, FeedbackSample, History, SubsetAction};

pub const DEFAULT_LAMBDA: f64 = 1e-4;
pub const DEFAULT_TOL: f64 = 1e-8;
pub const DEFAULT_MAX_ITER: usize = 100;

const ARMIJO_C: f64 = 1e-4;
const MAX_HALVINGS: usize = 60;

/// A source of grouped observations: for each played subset, the arm indices
/// and the number of wins recorded for every slot.
pub trait Observations {
    fn visit_groups(&self, f: &mut dyn FnMut(&[usize], &[f64]));

    fn is_empty(&self) -> bool;
}

impl Observations for History {
    fn visit_groups(&self, f: &mut dyn FnMut(&[usize], &[f64])) {
        let mut wins = Vec::new();
        for s in self.samples() {
            wins.clear();
            wins.resize(s.action().len(), 0.0);
            wins[s.winner()] = 1.0;
            f(s.action().indices(), &wins);
        }
    }

    fn is_empty(&self) -> bool {
        History::is_empty(self)
    }
}

impl Observations for [FeedbackSample] {
    fn visit_groups(&self, f: &mut dyn FnMut(&[usize], &[f64])) {
        let mut wins = Vec::new();
        for s in self {
            wins.clear();
            wins.resize(s.action().len(), 0.0);
            wins[s.winner()] = 1.0;
            f(s.action().indices(), &wins);
        }
    }

    fn is_empty(&self) -> bool {
        <[FeedbackSample]>::is_empty(self)
    }
}

/// Win counts keyed by the sorted multiset of arms in a subset.
///
/// Duplicated arms in one subset share a feature vector, so a win is filed
/// under the first slot holding the winning arm.
#[derive(Debug, Clone, Default)]
pub struct ChoiceCounts {
    groups: BTreeMap<Vec<usize>, Vec<f64>>,
    total: u64,
}

impl ChoiceCounts {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn record(&mut self, action: &SubsetAction, winner: usize) {
        let winner_arm = action.indices()[winner];
        let mut key = action.indices().to_vec();
        key.sort_unstable();
        let slot = key.iter().position(|&i| i == winner_arm).expect("winner is in the action");
        let len = key.len();
        let wins = self.groups.entry(key).or_insert_with(|| vec![0.0; len]);
        wins[slot] += 1.0;
        self.total += 1;
    }

    pub fn record_sample(&mut self, sample: &FeedbackSample) {
        self.record(sample.action(), sample.winner());
    }

    /// Number of observations recorded.
    pub fn total(&self) -> u64 {
        self.total
    }

    pub fn distinct_subsets(&self) -> usize {
        self.groups.len()
    }

    pub fn clear(&mut self) {
        self.groups.clear();
        self.total = 0;
    }
}

impl From<&History> for ChoiceCounts {
    fn from(h: &History) -> Self {
        let mut c = ChoiceCounts::new();
        for s in h.samples() {
            c.record_sample(s);
        }
        c
    }
}

impl Observations for ChoiceCounts {
    fn visit_groups(&self, f: &mut dyn FnMut(&[usize], &[f64])) {
        for (k, w) in &self.groups {
            f(k, w);
        }
    }

    fn is_empty(&self) -> bool {
        self.total == 0
    }
}

/// Fitted parameter and optimizer diagnostics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub theta_hat: DVector<f64>,
    pub grad_norm: f64,
    pub iterations: usize,
    pub converged: bool,
    /// Regularized log-likelihood at the start and after every accepted step.
    pub objective_trace: Vec<f64>,
}

#[derive(Clone, Copy, PartialEq, Eq)]
enum Order {
    Value,
    Gradient,
    Hessian,
}

struct Evaluation {
    value: f64,
    gradient: DVector<f64>,
    hessian: DMatrix<f64>,
}

fn check_inputs<O: Observations + ?Sized>(obs: &O, arms: &ArmSet, theta: &DVector<f64>, lambda: f64) -> Result<()> {
    if obs.is_empty() {
        return Err(Error::invalid("history is empty"));
    }
    if theta.len() != arms.dim() {
        return Err(Error::invalid("theta dimension does not match the arms"));
    }
    if theta.iter().any(|v| !v.is_finite()) {
        return Err(Error::invalid("theta has a non-finite entry"));
    }
    if !(lambda >= 0.0 && lambda.is_finite()) {
        return Err(Error::invalid(format!("lambda must be >= 0, got {lambda}")));
    }
    Ok(())
}

fn evaluate<O: Observations + ?Sized>(
    obs: &O,
    arms: &ArmSet,
    theta: &DVector<f64>,
    lambda: f64,
    order: Order,
) -> Evaluation {
    let d = arms.dim();
    let mut value = 0.0;
    let mut gradient = DVector::zeros(if order == Order::Value { 0 } else { d });
    let mut hessian = DMatrix::zeros(if order == Order::Hessian { d } else { 0 }, if order == Order::Hessian { d } else { 0 });
    let mut mean = DVector::zeros(d);
    let mut probs: Vec<f64> = Vec::new();

    obs.visit_groups(&mut |indices, wins| {
        probs.clear();
        probs.extend(indices.iter().map(|&i| arms.utility(theta, i)));
        let max = probs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let mut z = 0.0;
        for p in probs.iter_mut() {
            *p = (*p - max).exp();
            z += *p;
        }
        let log_z = max + z.ln();
        let mut n = 0.0;
        for (k, &w) in wins.iter().enumerate() {
            if w != 0.0 {
                value += w * (arms.utility(theta, indices[k]) - log_z);
                n += w;
            }
        }
        if order == Order::Value {
            return;
        }
        for p in probs.iter_mut() {
            *p /= z;
        }
        mean.fill(0.0);
        for (k, &i) in indices.iter().enumerate() {
            let x = arms.get(i);
            mean.axpy(probs[k], x, 1.0);
            if wins[k] != 0.0 {
                gradient.axpy(wins[k], x, 1.0);
            }
        }
        gradient.axpy(-n, &mean, 1.0);
        if order == Order::Hessian {
            for (k, &i) in indices.iter().enumerate() {
                let x = arms.get(i);
                hessian.ger(-n * probs[k], x, x, 1.0);
            }
            hessian.ger(n, &mean, &mean, 1.0);
        }
    });

    value -= 0.5 * lambda * theta.norm_squared();
    if order != Order::Value {
        gradient.axpy(-lambda, theta, 1.0);
    }
    if order == Order::Hessian {
        for i in 0..d {
            hessian[(i, i)] -= lambda;
        }
        // exact symmetry
        for i in 0..d {
            for j in 0..i {
                let v = 0.5 * (hessian[(i, j)] + hessian[(j, i)]);
                hessian[(i, j)] = v;
                hessian[(j, i)] = v;
            }
        }
    }
    Evaluation {
        value,
        gradient,
        hessian,
    }
}

/// Regularized log-likelihood `sum_s log mu_winner(theta) - lambda/2 |theta|^2`.
pub fn log_likelihood<O: Observations + ?Sized>(obs: &O, arms: &ArmSet, theta: &DVector<f64>, lambda: f64) -> Result<f64> {
    check_inputs(obs, arms, theta, lambda)?;
    Ok(evaluate(obs, arms, theta, lambda, Order::Value).value)
}

/// Gradient of [`log_likelihood`]: `sum_s X_s (y_s - mu_s(theta)) - lambda theta`.
pub fn score<O: Observations + ?Sized>(obs: &O, arms: &ArmSet, theta: &DVector<f64>, lambda: f64) -> Result<DVector<f64>> {
    check_inputs(obs, arms, theta, lambda)?;
    Ok(evaluate(obs, arms, theta, lambda, Order::Gradient).gradient)
}

/// Hessian of [`log_likelihood`]:
/// `-sum_s X_s (diag(mu_s) - mu_s mu_s') X_s' - lambda I`.
pub fn hessian<O: Observations + ?Sized>(obs: &O, arms: &ArmSet, theta: &DVector<f64>, lambda: f64) -> Result<DMatrix<f64>> {
    check_inputs(obs, arms, theta, lambda)?;
    Ok(evaluate(obs, arms, theta, lambda, Order::Hessian).hessian)
}

/// Maximizes the regularized log-likelihood starting from `init`.
///
/// Running out of iterations is reported through `converged = false`, not as
/// an error. When `-H` is not numerically positive definite the iteration
/// takes a gradient step instead of a Newton step.
pub fn fit_mle<O: Observations + ?Sized>(
    obs: &O,
    arms: &ArmSet,
    lambda: f64,
    tol: f64,
    max_iter: usize,
    init: &DVector<f64>,
) -> Result<Estimate> {
    check_inputs(obs, arms, init, lambda)?;
    let mut theta = init.clone();
    let mut eval = evaluate(obs, arms, &theta, lambda, Order::Hessian);
    let mut trace = vec![eval.value];
    let mut iterations = 0;

    while iterations < max_iter {
        let grad_norm = eval.gradient.norm();
        if grad_norm <= tol {
            break;
        }
        let neg_h = -&eval.hessian;
        let mut direction = match neg_h.cholesky() {
            Some(ch) => ch.solve(&eval.gradient),
            None => eval.gradient.clone(),
        };
        let mut slope = eval.gradient.dot(&direction);
        if !(slope > 0.0) || direction.iter().any(|v| !v.is_finite()) {
            direction = eval.gradient.clone();
            slope = grad_norm * grad_norm;
        }
        // The predicted increase is below what the objective can resolve, so
        // Armijo cannot discriminate; take the full step if it shrinks the
        // gradient and the objective holds within rounding.
        let resolution = 8.0 * f64::EPSILON * eval.value.abs().max(1.0);
        if slope <= resolution {
            let candidate = &theta + &direction;
            let next = evaluate(obs, arms, &candidate, lambda, Order::Hessian);
            if next.value.is_finite() && next.value >= eval.value - resolution && next.gradient.norm() < grad_norm {
                theta = candidate;
                eval = next;
                trace.push(eval.value);
                iterations += 1;
                continue;
            }
            break;
        }

        let mut step = 1.0;
        let mut accepted = None;
        for _ in 0..MAX_HALVINGS {
            let candidate = &theta + step * &direction;
            let value = evaluate(obs, arms, &candidate, lambda, Order::Value).value;
            if value.is_finite() && value >= eval.value + ARMIJO_C * step * slope {
                accepted = Some(candidate);
                break;
            }
            step *= 0.5;
        }
        let Some(next) = accepted else { break };
        theta = next;
        eval = evaluate(obs, arms, &theta, lambda, Order::Hessian);
        trace.push(eval.value);
        iterations += 1;
    }

    let grad_norm = eval.gradient.norm();
    Ok(Estimate {
        theta_hat: theta,
        grad_norm,
        iterations,
        converged: grad_norm <= tol,
        objective_trace: trace,
    })
}

/// [`fit_mle`] with the default tolerance and iteration cap.
pub fn fit_mle_default<O: Observations + ?Sized>(obs: &O, arms: &ArmSet, lambda: f64, init: &DVector<f64>) -> Result<Estimate> {
    fit_mle(obs, arms, lambda, DEFAULT_TOL, DEFAULT_MAX_ITER, init)
}
