//! Problem instances and the feedback simulator.
//!
//! An instance is a finite arm set in `R^d`, a hidden parameter `theta_star`,
//! a subset size `K` and a failure probability `delta`. Playing a subset of
//! `K` arms returns a single winner drawn from the multinomial-logit (softmax)
//! distribution over the subset's utilities, or, for robustness studies, the
//! argmax of Gaussian-perturbed utilities.

use nalgebra::DVector;
use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const NORM_SLACK: f64 = 1e-12;

/// A finite set of arm feature vectors of common dimension.
#[derive(Debug, Clone, PartialEq)]
pub struct ArmSet {
    arms: Vec<DVector<f64>>,
    dim: usize,
}

impl ArmSet {
    pub fn new(arms: Vec<DVector<f64>>) -> Result<Self> {
        let dim = arms
            .first()
            .map(|a| a.len())
            .ok_or_else(|| Error::invalid("arm set is empty"))?;
        if dim == 0 {
            return Err(Error::invalid("arms must have positive dimension"));
        }
        for (i, a) in arms.iter().enumerate() {
            if a.len() != dim {
                return Err(Error::invalid(format!(
                    "arm {i} has dimension {} but arm 0 has {dim}",
                    a.len()
                )));
            }
            if a.iter().any(|v| !v.is_finite()) {
                return Err(Error::invalid(format!("arm {i} has a non-finite entry")));
            }
        }
        Ok(ArmSet { arms, dim })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        Self::new(rows.iter().map(|r| DVector::from_column_slice(r)).collect())
    }

    pub fn len(&self) -> usize {
        self.arms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.arms.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn get(&self, i: usize) -> &DVector<f64> {
        &self.arms[i]
    }

    pub fn iter(&self) -> impl Iterator<Item = &DVector<f64>> {
        self.arms.iter()
    }

    pub fn utility(&self, theta: &DVector<f64>, i: usize) -> f64 {
        self.arms[i].dot(theta)
    }

    pub fn to_rows(&self) -> Vec<Vec<f64>> {
        self.arms.iter().map(|a| a.iter().copied().collect()).collect()
    }
}

/// A linear-MNL best-arm identification problem.
#[derive(Debug, Clone, PartialEq)]
pub struct Instance {
    arms: ArmSet,
    theta_star: DVector<f64>,
    k: usize,
    delta: f64,
}

impl Instance {
    pub fn new(arms: ArmSet, theta_star: DVector<f64>, k: usize, delta: f64) -> Result<Self> {
        if arms.len() < 2 {
            return Err(Error::invalid("an instance needs at least two arms"));
        }
        if k < 2 {
            return Err(Error::invalid(format!("subset size K must be >= 2, got {k}")));
        }
        if !(delta > 0.0 && delta < 1.0) {
            return Err(Error::invalid(format!("delta must lie in (0, 1), got {delta}")));
        }
        if theta_star.len() != arms.dim() {
            return Err(Error::invalid(format!(
                "theta_star has dimension {} but arms have {}",
                theta_star.len(),
                arms.dim()
            )));
        }
        if theta_star.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("theta_star has a non-finite entry"));
        }
        for (i, a) in arms.iter().enumerate() {
            if a.norm() > 1.0 + NORM_SLACK {
                return Err(Error::invalid(format!(
                    "arm {i} has norm {} > 1",
                    a.norm()
                )));
            }
        }
        let mut utilities: Vec<f64> = (0..arms.len()).map(|i| arms.utility(&theta_star, i)).collect();
        utilities.sort_by(|a, b| b.total_cmp(a));
        if utilities[0] - utilities[1] <= 0.0 {
            return Err(Error::invalid("the best arm under theta_star is not unique"));
        }
        Ok(Instance {
            arms,
            theta_star,
            k,
            delta,
        })
    }

    pub fn arms(&self) -> &ArmSet {
        &self.arms
    }

    pub fn theta_star(&self) -> &DVector<f64> {
        &self.theta_star
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn delta(&self) -> f64 {
        self.delta
    }

    pub fn n_arms(&self) -> usize {
        self.arms.len()
    }

    pub fn dim(&self) -> usize {
        self.arms.dim()
    }

    /// Same arms and parameter with a different subset size.
    pub fn with_k(&self, k: usize) -> Result<Self> {
        Instance::new(self.arms.clone(), self.theta_star.clone(), k, self.delta)
    }

    pub fn with_theta(&self, theta_star: DVector<f64>) -> Result<Self> {
        Instance::new(self.arms.clone(), theta_star, self.k, self.delta)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(&InstanceFile::from(self))?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let file: InstanceFile = serde_json::from_str(s)?;
        file.try_into()
    }
}

/// On-disk form of an [`Instance`]; arms are row-major.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct InstanceFile {
    pub arms: Vec<Vec<f64>>,
    pub theta_star: Vec<f64>,
    #[serde(rename = "K")]
    pub k: usize,
    pub delta: f64,
}

impl From<&Instance> for InstanceFile {
    fn from(inst: &Instance) -> Self {
        InstanceFile {
            arms: inst.arms.to_rows(),
            theta_star: inst.theta_star.iter().copied().collect(),
            k: inst.k,
            delta: inst.delta,
        }
    }
}

impl TryFrom<InstanceFile> for Instance {
    type Error = Error;

    fn try_from(f: InstanceFile) -> Result<Self> {
        let arms = ArmSet::from_rows(&f.arms)?;
        Instance::new(arms, DVector::from_vec(f.theta_star), f.k, f.delta)
    }
}

/// The `K` arm indices played at one step. Repeats are allowed, but not a
/// subset made of a single arm repeated `K` times.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct SubsetAction {
    indices: Vec<usize>,
}

impl SubsetAction {
    pub fn new(indices: Vec<usize>, n_arms: usize) -> Result<Self> {
        if indices.len() < 2 {
            return Err(Error::invalid("an action needs at least two slots"));
        }
        if let Some(&bad) = indices.iter().find(|&&i| i >= n_arms) {
            return Err(Error::invalid(format!(
                "arm index {bad} out of range for {n_arms} arms"
            )));
        }
        if indices.iter().all(|&i| i == indices[0]) {
            return Err(Error::invalid(
                "all slots hold the same arm; such a subset carries no information",
            ));
        }
        Ok(SubsetAction { indices })
    }

    pub fn indices(&self) -> &[usize] {
        &self.indices
    }

    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }
}

/// One played action and the local index of its winner.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FeedbackSample {
    action: SubsetAction,
    winner: usize,
}

impl FeedbackSample {
    pub fn new(action: SubsetAction, winner: usize) -> Result<Self> {
        if winner >= action.len() {
            return Err(Error::invalid(format!(
                "winner {winner} out of range for an action of size {}",
                action.len()
            )));
        }
        Ok(FeedbackSample { action, winner })
    }

    pub fn action(&self) -> &SubsetAction {
        &self.action
    }

    pub fn winner(&self) -> usize {
        self.winner
    }

    pub fn winner_arm(&self) -> usize {
        self.action.indices[self.winner]
    }
}

/// Append-only record of observations.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct History {
    samples: Vec<FeedbackSample>,
}

impl History {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, sample: FeedbackSample) {
        self.samples.push(sample);
    }

    pub fn samples(&self) -> &[FeedbackSample] {
        &self.samples
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn clear(&mut self) {
        self.samples.clear();
    }
}

impl FromIterator<FeedbackSample> for History {
    fn from_iter<I: IntoIterator<Item = FeedbackSample>>(iter: I) -> Self {
        History {
            samples: iter.into_iter().collect(),
        }
    }
}

fn utilities(arms: &ArmSet, theta: &DVector<f64>, action: &SubsetAction) -> Result<Vec<f64>> {
    if theta.len() != arms.dim() {
        return Err(Error::invalid("theta dimension does not match the arms"));
    }
    if theta.iter().any(|v| !v.is_finite()) {
        return Err(Error::invalid("theta has a non-finite entry"));
    }
    let mut out = Vec::with_capacity(action.len());
    for &i in action.indices() {
        if i >= arms.len() {
            return Err(Error::invalid(format!("arm index {i} out of range")));
        }
        let u = arms.utility(theta, i);
        if !u.is_finite() {
            return Err(Error::invalid("non-finite utility"));
        }
        out.push(u);
    }
    Ok(out)
}

/// In-place softmax with max subtraction.
pub(crate) fn softmax_in_place(values: &mut [f64]) {
    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut total = 0.0;
    for v in values.iter_mut() {
        *v = (*v - max).exp();
        total += *v;
    }
    for v in values.iter_mut() {
        *v /= total;
    }
}

/// Winner probabilities for `action` under `theta`.
pub fn mnl_probs(arms: &ArmSet, theta: &DVector<f64>, action: &SubsetAction) -> Result<Vec<f64>> {
    let mut u = utilities(arms, theta, action)?;
    softmax_in_place(&mut u);
    Ok(u)
}

/// Draws an index from a categorical distribution.
pub fn sample_winner<R: Rng + ?Sized>(probs: &[f64], rng: &mut R) -> Result<usize> {
    if probs.is_empty() {
        return Err(Error::invalid("empty probability vector"));
    }
    if probs.iter().any(|p| !p.is_finite() || *p < 0.0) {
        return Err(Error::invalid("probabilities must be finite and non-negative"));
    }
    let total: f64 = probs.iter().sum();
    if (total - 1.0).abs() > 1e-9 {
        return Err(Error::invalid(format!("probabilities sum to {total}, not 1")));
    }
    let u: f64 = rng.gen();
    let mut acc = 0.0;
    let mut last_positive = 0;
    for (i, &p) in probs.iter().enumerate() {
        if p > 0.0 {
            last_positive = i;
        }
        acc += p;
        if u < acc {
            return Ok(i);
        }
    }
    // u landed in the rounding gap above the cumulative sum
    Ok(last_positive)
}

/// Winner under a Gaussian random-utility model: the argmax of
/// `<theta, x_i> + eta_i` with `eta_i ~ N(0, sigma^2)` i.i.d.
pub fn sample_rum_winner<R: Rng + ?Sized>(
    arms: &ArmSet,
    theta: &DVector<f64>,
    sigma: f64,
    action: &SubsetAction,
    rng: &mut R,
) -> Result<usize> {
    if !(sigma > 0.0 && sigma.is_finite()) {
        return Err(Error::invalid(format!("sigma must be positive, got {sigma}")));
    }
    let u = utilities(arms, theta, action)?;
    let noise = Normal::new(0.0, sigma).map_err(|e| Error::invalid(e.to_string()))?;
    let mut best = 0;
    let mut best_value = f64::NEG_INFINITY;
    for (i, ui) in u.iter().enumerate() {
        let v = ui + noise.sample(rng);
        if v > best_value {
            best = i;
            best_value = v;
        }
    }
    Ok(best)
}

/// Index of the arm with the highest utility; the lowest index wins ties.
pub fn argmax_utility(arms: &ArmSet, theta: &DVector<f64>, candidates: &[usize]) -> Option<usize> {
    let mut best: Option<(usize, f64)> = None;
    for &i in candidates {
        let u = arms.utility(theta, i);
        match best {
            Some((_, bu)) if u <= bu => {}
            _ => best = Some((i, u)),
        }
    }
    best.map(|(i, _)| i)
}

pub fn best_arm(instance: &Instance) -> usize {
    let all: Vec<usize> = (0..instance.n_arms()).collect();
    argmax_utility(instance.arms(), instance.theta_star(), &all).expect("instance has arms")
}

/// How the environment turns a played subset into a winner.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
#[serde(tag = "model", rename_all = "snake_case")]
pub enum FeedbackModel {
    #[default]
    Mnl,
    GaussianRum { sigma: f64 },
}

impl FeedbackModel {
    pub fn sample<R: Rng + ?Sized>(
        &self,
        arms: &ArmSet,
        theta: &DVector<f64>,
        action: &SubsetAction,
        rng: &mut R,
    ) -> Result<usize> {
        match *self {
            FeedbackModel::Mnl => {
                let probs = mnl_probs(arms, theta, action)?;
                sample_winner(&probs, rng)
            }
            FeedbackModel::GaussianRum { sigma } => sample_rum_winner(arms, theta, sigma, action, rng),
        }
    }
}
