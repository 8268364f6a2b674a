//! Confidence widths, the stopping rule and the elimination test.
//!
//! For a direction `g` after `t` steps the width is
//! `(8 / kappa) * sqrt(d + ln(3 N^2 t^2 / delta)) * |g|_{V^{-1}}`.
//! Arm `i` can be declared best once every gap `a_i - a_j` has width at most
//! the estimated advantage `<theta_hat, a_i - a_j>`.

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::design::DesignState;
use crate::error::{Error, Result};
use crate::model::ArmSet;

pub const DEFAULT_KAPPA_ALPHA: f64 = 0.5;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConfidenceConfig {
    pub kappa_alpha: f64,
    pub delta: f64,
    pub n_arms: usize,
    pub dim: usize,
}

impl ConfidenceConfig {
    pub fn new(kappa_alpha: f64, delta: f64, n_arms: usize, dim: usize) -> Result<Self> {
        if !(kappa_alpha > 0.0 && kappa_alpha <= 1.0) {
            return Err(Error::invalid(format!("kappa_alpha must lie in (0, 1], got {kappa_alpha}")));
        }
        if !(delta > 0.0 && delta < 1.0) {
            return Err(Error::invalid(format!("delta must lie in (0, 1), got {delta}")));
        }
        Ok(ConfidenceConfig {
            kappa_alpha,
            delta,
            n_arms,
            dim,
        })
    }

    /// The multiplier of `|g|_{V^{-1}}` at step `t`.
    pub fn radius(&self, t: usize) -> f64 {
        let n = self.n_arms as f64;
        let t = t.max(1) as f64;
        let log_term = (3.0 * n * n * t * t / self.delta).ln();
        8.0 / self.kappa_alpha * (self.dim as f64 + log_term).sqrt()
    }
}

/// Confidence width of the gap direction `g` after `t` steps.
pub fn width(cfg: &ConfidenceConfig, t: usize, state: &DesignState, g: &DVector<f64>) -> f64 {
    cfg.radius(t) * state.mahalanobis(g).sqrt()
}

/// `width(a_k - a_i) <= <theta_hat, a_k - a_i>`: `k` certifiably beats `i`.
fn certifies(cfg_radius: f64, state: &DesignState, theta_hat: &DVector<f64>, arms: &ArmSet, k: usize, i: usize) -> bool {
    let g = arms.get(k) - arms.get(i);
    let w = cfg_radius * state.mahalanobis(&g).sqrt();
    w <= g.dot(theta_hat)
}

/// Lowest-index arm of `active` whose estimated advantage over every other
/// active arm exceeds the corresponding width.
pub fn stopping_check(
    cfg: &ConfidenceConfig,
    t: usize,
    state: &DesignState,
    theta_hat: &DVector<f64>,
    active: &[usize],
    arms: &ArmSet,
) -> Option<usize> {
    let r = cfg.radius(t);
    active.iter().copied().find(|&i| {
        active
            .iter()
            .all(|&j| j == i || certifies(r, state, theta_hat, arms, i, j))
    })
}

/// Whether some other active arm certifiably beats arm `i`.
pub fn dominated(
    cfg: &ConfidenceConfig,
    t: usize,
    state: &DesignState,
    theta_hat: &DVector<f64>,
    i: usize,
    active: &[usize],
    arms: &ArmSet,
) -> bool {
    let r = cfg.radius(t);
    active
        .iter()
        .any(|&k| k != i && certifies(r, state, theta_hat, arms, k, i))
}
