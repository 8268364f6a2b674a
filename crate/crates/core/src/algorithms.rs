//! Allocation strategies.
//!
//! * [`run_static`]: random exploration, then greedy subsets over the full gap
//!   set until the stopping rule fires.
//! * [`run_random`]: the same stopping rule with uniformly random subsets.
//! * [`run_adaptive`]: static allocation inside batches; between batches the
//!   data is dropped after eliminating dominated arms, and the run ends when
//!   one arm survives.
//!
//! [`glm_pair_reduction`] exposes the `K = 2` special case as a binary
//! generalized-linear problem over difference arms `a_i - a_j`.

use nalgebra::DVector;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::confidence::{dominated, stopping_check, ConfidenceConfig, DEFAULT_KAPPA_ALPHA};
use crate::design::{self, rho, DesignState, Direction, GapSet, DEFAULT_RIDGE};
use crate::error::{Error, Result};
use crate::estimator::{fit_mle, ChoiceCounts, DEFAULT_LAMBDA, DEFAULT_MAX_ITER, DEFAULT_TOL};
use crate::model::{argmax_utility, best_arm, mnl_probs, FeedbackModel, Instance, SubsetAction};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum SelectionRule {
    /// Greedy over pairwise gap directions.
    #[default]
    GapGreedy,
    /// Greedy over the arm vectors themselves.
    ArmGreedy,
    Random,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RunConfig {
    pub explore_steps: usize,
    pub lambda: f64,
    pub ridge: f64,
    pub kappa_alpha: f64,
    /// Batch-shrink factor of the adaptive strategy.
    pub alpha: f64,
    pub max_steps: usize,
    pub selection_rule: SelectionRule,
    pub record_trajectory: bool,
    pub feedback: FeedbackModel,
    pub mle_tol: f64,
    pub mle_max_iter: usize,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            explore_steps: 5,
            lambda: DEFAULT_LAMBDA,
            ridge: DEFAULT_RIDGE,
            kappa_alpha: DEFAULT_KAPPA_ALPHA,
            alpha: 0.25,
            max_steps: 5_000_000,
            selection_rule: SelectionRule::GapGreedy,
            record_trajectory: false,
            feedback: FeedbackModel::Mnl,
            mle_tol: DEFAULT_TOL,
            mle_max_iter: DEFAULT_MAX_ITER,
        }
    }
}

impl RunConfig {
    pub fn validate(&self) -> Result<()> {
        if self.explore_steps < 1 {
            return Err(Error::invalid("explore_steps must be >= 1"));
        }
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(Error::invalid(format!("alpha must lie in (0, 1), got {}", self.alpha)));
        }
        if self.max_steps < self.explore_steps {
            return Err(Error::invalid("max_steps must be >= explore_steps"));
        }
        if !(self.lambda >= 0.0) {
            return Err(Error::invalid("lambda must be >= 0"));
        }
        if let FeedbackModel::GaussianRum { sigma } = self.feedback {
            if !(sigma > 0.0) {
                return Err(Error::invalid("RUM sigma must be positive"));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BatchRecord {
    pub j: usize,
    pub n_j: usize,
    pub rho_j: f64,
    pub survivors: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunResult {
    pub returned_arm: usize,
    pub tau: usize,
    /// Slot occurrences per arm, summed over all steps.
    pub pull_counts: Vec<u64>,
    pub correct: bool,
    pub truncated: bool,
    pub batches: Vec<BatchRecord>,
    /// Incumbent `argmax <theta_hat, a>` after every step.
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub trajectory: Option<Vec<usize>>,
}

/// State shared by the per-step loops.
struct Runner<'a> {
    instance: &'a Instance,
    cfg: &'a RunConfig,
    conf: ConfidenceConfig,
    pulls: Vec<u64>,
    steps: usize,
    trajectory: Option<Vec<usize>>,
}

impl<'a> Runner<'a> {
    fn new(instance: &'a Instance, cfg: &'a RunConfig) -> Result<Self> {
        cfg.validate()?;
        let conf = ConfidenceConfig::new(cfg.kappa_alpha, instance.delta(), instance.n_arms(), instance.dim())?;
        Ok(Runner {
            instance,
            cfg,
            conf,
            pulls: vec![0; instance.n_arms()],
            steps: 0,
            trajectory: cfg.record_trajectory.then(Vec::new),
        })
    }

    /// Plays `action`, records the outcome and updates the design.
    fn play<R: Rng + ?Sized>(
        &mut self,
        action: &SubsetAction,
        state: &mut DesignState,
        counts: &mut ChoiceCounts,
        rng: &mut R,
    ) -> Result<()> {
        let arms = self.instance.arms();
        let winner = self.cfg.feedback.sample(arms, self.instance.theta_star(), action, rng)?;
        state.add_action(arms, action);
        counts.record(action, winner);
        for &i in action.indices() {
            self.pulls[i] += 1;
        }
        self.steps += 1;
        Ok(())
    }

    fn refit(&self, counts: &ChoiceCounts, warm: &DVector<f64>) -> Result<DVector<f64>> {
        let est = fit_mle(
            counts,
            self.instance.arms(),
            self.cfg.lambda,
            self.cfg.mle_tol,
            self.cfg.mle_max_iter,
            warm,
        )?;
        Ok(est.theta_hat)
    }

    fn record(&mut self, theta: &DVector<f64>, candidates: &[usize]) {
        if let Some(traj) = self.trajectory.as_mut() {
            traj.push(argmax_utility(self.instance.arms(), theta, candidates).expect("non-empty candidates"));
        }
    }

    fn finish(self, returned_arm: usize, truncated: bool, batches: Vec<BatchRecord>) -> RunResult {
        RunResult {
            returned_arm,
            tau: self.steps,
            pull_counts: self.pulls,
            correct: returned_arm == best_arm(self.instance),
            truncated,
            batches,
            trajectory: self.trajectory,
        }
    }
}

fn select<R: Rng + ?Sized>(
    rule: SelectionRule,
    instance: &Instance,
    state: &DesignState,
    gaps: &GapSet,
    active: &[usize],
    rng: &mut R,
) -> Result<SubsetAction> {
    let arms = instance.arms();
    match rule {
        SelectionRule::GapGreedy => design::greedy_select_subset(state, arms, gaps, instance.k()),
        SelectionRule::ArmGreedy if active.len() == arms.len() => {
            design::greedy_select_subset_alt(state, arms, instance.k())
        }
        SelectionRule::ArmGreedy => {
            let dirs: Vec<Direction> = active.iter().map(|&i| Direction::Arm(i)).collect();
            design::greedy_select_for(state, arms, &dirs, instance.k())
        }
        SelectionRule::Random => design::random_action(arms.len(), instance.k(), rng),
    }
}

fn run_fixed_design<R: Rng + ?Sized>(instance: &Instance, cfg: &RunConfig, rule: SelectionRule, rng: &mut R) -> Result<RunResult> {
    let mut runner = Runner::new(instance, cfg)?;
    let n = instance.n_arms();
    let all: Vec<usize> = (0..n).collect();
    let gaps = GapSet::all_pairs(&all);
    let mut state = DesignState::ridge_init(instance.dim(), cfg.ridge)?;
    let mut counts = ChoiceCounts::new();
    let mut theta = DVector::zeros(instance.dim());

    while runner.steps < cfg.max_steps {
        let exploring = runner.steps < cfg.explore_steps;
        let action = if exploring {
            design::random_action(n, instance.k(), rng)?
        } else {
            select(rule, instance, &state, &gaps, &all, rng)?
        };
        runner.play(&action, &mut state, &mut counts, rng)?;
        if exploring && !cfg.record_trajectory {
            continue;
        }
        theta = runner.refit(&counts, &theta)?;
        runner.record(&theta, &all);
        if !exploring {
            if let Some(winner) = stopping_check(&runner.conf, runner.steps, &state, &theta, &all, instance.arms()) {
                return Ok(runner.finish(winner, false, Vec::new()));
            }
        }
    }
    if counts.total() > 0 && theta.iter().all(|&v| v == 0.0) {
        theta = runner.refit(&counts, &theta)?;
    }
    let incumbent = argmax_utility(instance.arms(), &theta, &all).expect("arms");
    Ok(runner.finish(incumbent, true, Vec::new()))
}

/// Static greedy allocation with the fixed-confidence stopping rule.
///
/// `cfg.selection_rule` picks between gap-greedy and arm-greedy subsets;
/// `Random` behaves like [`run_random`].
pub fn run_static<R: Rng + ?Sized>(instance: &Instance, cfg: &RunConfig, rng: &mut R) -> Result<RunResult> {
    run_fixed_design(instance, cfg, cfg.selection_rule, rng)
}

/// Uniformly random subsets with the same estimator and stopping rule.
pub fn run_random<R: Rng + ?Sized>(instance: &Instance, cfg: &RunConfig, rng: &mut R) -> Result<RunResult> {
    run_fixed_design(instance, cfg, SelectionRule::Random, rng)
}

/// Batched elimination.
///
/// Each batch starts from a fresh ridge design and an empty history, explores
/// for `explore_steps` random steps, and then allocates greedily over the gaps
/// between surviving arms. A batch of length `t` ends once
/// `rho_j / t < alpha * rho_{j-1} / n_{j-1}` (checked after the exploration
/// prefix), where `rho_j` is the largest squared `V^{-1}`-norm over those
/// gaps. The estimate fitted on the batch then eliminates every dominated arm.
pub fn run_adaptive<R: Rng + ?Sized>(instance: &Instance, cfg: &RunConfig, rng: &mut R) -> Result<RunResult> {
    let mut runner = Runner::new(instance, cfg)?;
    let n = instance.n_arms();
    let d = instance.dim();
    let mut active: Vec<usize> = (0..n).collect();
    let mut rho_prev = 1.0;
    let mut n_prev = (d * (d + 1) + 1) as f64;
    let mut batches = Vec::new();
    let mut theta = DVector::zeros(d);
    let mut counts = ChoiceCounts::new();

    while active.len() > 1 {
        let gaps = GapSet::all_pairs(&active);
        let mut state = DesignState::ridge_init(d, cfg.ridge)?;
        counts.clear();
        let mut t = 0usize;
        let mut rho_j;
        loop {
            if runner.steps >= cfg.max_steps {
                let incumbent = if counts.total() > 0 {
                    let th = runner.refit(&counts, &theta)?;
                    argmax_utility(instance.arms(), &th, &active).expect("active arms")
                } else {
                    argmax_utility(instance.arms(), &theta, &active).expect("active arms")
                };
                return Ok(runner.finish(incumbent, true, batches));
            }
            let exploring = t < cfg.explore_steps;
            let action = if exploring {
                design::random_action(n, instance.k(), rng)?
            } else {
                select(cfg.selection_rule, instance, &state, &gaps, &active, rng)?
            };
            runner.play(&action, &mut state, &mut counts, rng)?;
            t += 1;
            rho_j = rho(&state, &gaps, instance.arms())?;
            if cfg.record_trajectory {
                theta = runner.refit(&counts, &theta)?;
                runner.record(&theta, &active);
            }
            if t > cfg.explore_steps && rho_j / (t as f64) < cfg.alpha * rho_prev / n_prev {
                break;
            }
        }

        theta = runner.refit(&counts, &theta)?;
        let survivors: Vec<usize> = active
            .iter()
            .copied()
            .filter(|&i| !dominated(&runner.conf, t, &state, &theta, i, &active, instance.arms()))
            .collect();
        if survivors.is_empty() {
            return Err(Error::Invariant("elimination removed every arm".into()));
        }
        batches.push(BatchRecord {
            j: batches.len() + 1,
            n_j: t,
            rho_j,
            survivors: survivors.clone(),
        });
        rho_prev = rho_j;
        n_prev = t as f64;
        active = survivors;
    }

    let winner = active[0];
    Ok(runner.finish(winner, false, batches))
}

/// A difference arm `b_ij = a_i - a_j` of the pairwise problem.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct PairArm {
    pub i: usize,
    pub j: usize,
}

/// The `K = 2` problem seen as binary feedback on difference arms: querying
/// `b_ij` plays the subset `{a_i, a_j}` and reports success when `a_i` wins,
/// which happens with probability `sigmoid(<theta*, a_i - a_j>)`.
#[derive(Debug, Clone)]
pub struct PairwiseProblem {
    instance: Instance,
    pairs: Vec<PairArm>,
}

pub fn glm_pair_reduction(instance: &Instance) -> Result<PairwiseProblem> {
    if instance.k() != 2 {
        return Err(Error::invalid(format!(
            "the pairwise reduction needs K = 2, got {}",
            instance.k()
        )));
    }
    let n = instance.n_arms();
    let pairs = (0..n)
        .flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| PairArm { i, j }))
        .collect();
    Ok(PairwiseProblem {
        instance: instance.clone(),
        pairs,
    })
}

impl PairwiseProblem {
    pub fn pairs(&self) -> &[PairArm] {
        &self.pairs
    }

    pub fn instance(&self) -> &Instance {
        &self.instance
    }

    pub fn feature(&self, pair: PairArm) -> DVector<f64> {
        self.instance.arms().get(pair.i) - self.instance.arms().get(pair.j)
    }

    pub fn action(&self, pair: PairArm) -> Result<SubsetAction> {
        SubsetAction::new(vec![pair.i, pair.j], self.instance.n_arms())
    }

    /// Probability that querying `pair` reports success.
    pub fn success_probability(&self, pair: PairArm) -> Result<f64> {
        let probs = mnl_probs(self.instance.arms(), self.instance.theta_star(), &self.action(pair)?)?;
        Ok(probs[0])
    }

    /// Plays `{a_i, a_j}` under the MNL model; `true` when `a_i` wins.
    pub fn query<R: Rng + ?Sized>(&self, pair: PairArm, rng: &mut R) -> Result<bool> {
        let action = self.action(pair)?;
        let w = FeedbackModel::Mnl.sample(self.instance.arms(), self.instance.theta_star(), &action, rng)?;
        Ok(w == 0)
    }
}
