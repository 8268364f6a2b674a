#![allow(dead_code)]

use mnl_bai::design::random_action;
use mnl_bai::estimator::ChoiceCounts;
use mnl_bai::model::{ArmSet, FeedbackSample, History, SubsetAction};
use mnl_bai::rng::SimRng;
use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;

pub fn gaussian(d: usize, scale: f64, rng: &mut SimRng) -> DVector<f64> {
    DVector::from_fn(d, |_, _| scale * rng.sample::<f64, _>(StandardNormal))
}

/// `n` arms with norms drawn from `[0.2, 1)`.
pub fn random_arms(n: usize, d: usize, rng: &mut SimRng) -> ArmSet {
    ArmSet::new(
        (0..n)
            .map(|_| {
                let v = gaussian(d, 1.0, rng);
                let norm = v.norm();
                v / norm * rng.gen_range(0.2..1.0)
            })
            .collect(),
    )
    .unwrap()
}

pub fn random_history(n: usize, k: usize, steps: usize, rng: &mut SimRng) -> History {
    (0..steps)
        .map(|_| {
            let a = random_action(n, k, rng).unwrap();
            FeedbackSample::new(a, rng.gen_range(0..k)).unwrap()
        })
        .collect()
}

pub fn counts_of(h: &History) -> ChoiceCounts {
    ChoiceCounts::from(h)
}

pub fn action(idx: &[usize], n: usize) -> SubsetAction {
    SubsetAction::new(idx.to_vec(), n).unwrap()
}

/// Inverse by Gauss-Jordan elimination with partial pivoting, independent of
/// the library's factorizations.
pub fn gauss_jordan_inverse(m: &DMatrix<f64>) -> DMatrix<f64> {
    let n = m.nrows();
    let mut a = m.clone();
    let mut inv = DMatrix::identity(n, n);
    for c in 0..n {
        let p = (c..n).max_by(|&i, &j| a[(i, c)].abs().total_cmp(&a[(j, c)].abs())).unwrap();
        a.swap_rows(c, p);
        inv.swap_rows(c, p);
        let piv = a[(c, c)];
        for j in 0..n {
            a[(c, j)] /= piv;
            inv[(c, j)] /= piv;
        }
        for r in 0..n {
            if r != c {
                let f = a[(r, c)];
                if f != 0.0 {
                    for j in 0..n {
                        a[(r, j)] -= f * a[(c, j)];
                        inv[(r, j)] -= f * inv[(c, j)];
                    }
                }
            }
        }
    }
    inv
}

/// Plain softmax over utilities, written out directly.
pub fn naive_probs(arms: &ArmSet, theta: &DVector<f64>, idx: &[usize]) -> Vec<f64> {
    let e: Vec<f64> = idx.iter().map(|&i| arms.get(i).dot(theta).exp()).collect();
    let z: f64 = e.iter().sum();
    e.iter().map(|v| v / z).collect()
}

/// Sum of `log mu_winner` over the history, by direct enumeration.
pub fn naive_log_likelihood(arms: &ArmSet, h: &History, theta: &DVector<f64>, lambda: f64) -> f64 {
    let mut total = 0.0;
    for s in h.samples() {
        let p = naive_probs(arms, theta, s.action().indices());
        total += p[s.winner()].ln();
    }
    total - 0.5 * lambda * theta.norm_squared()
}
