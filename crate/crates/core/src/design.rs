//! Information matrix bookkeeping and greedy allocation.
//!
//! `V = ridge * I + sum_s X_s X_s'` is kept together with its inverse, which
//! is updated with one Sherman-Morrison step per played arm and refreshed from
//! a Cholesky factorization every [`REFRESH_EVERY`] rank-one updates.
//!
//! Greedy subset selection fills the `K` slots one at a time. For each slot it
//! picks the arm `a` minimizing `max_g g'(V + aa')^{-1} g` over a set of
//! directions `g`, then commits `a` before filling the next slot. Candidate
//! scores come from `P = A V^{-1} A'` (one row per arm) and the identity
//! `g'(V + aa')^{-1} g = g'V^{-1}g - (g'V^{-1}a)^2 / (1 + a'V^{-1}a)`, so a
//! trial update never forms an inverse.

use nalgebra::{DMatrix, DVector};
use rand::Rng;

use crate::error::{Error, Result};
use crate::model::{ArmSet, SubsetAction};

pub const DEFAULT_RIDGE: f64 = 1e-4;

/// Rank-one updates between dense refreshes of the stored inverse.
pub const REFRESH_EVERY: usize = 1000;

const TIE_RTOL: f64 = 1e-12;

#[derive(Debug, Clone)]
pub struct DesignState {
    v: DMatrix<f64>,
    v_inv: DMatrix<f64>,
    t: usize,
    ridge: f64,
    since_refresh: usize,
}

impl DesignState {
    /// `V = ridge * I`.
    pub fn ridge_init(d: usize, ridge: f64) -> Result<Self> {
        if !(ridge > 0.0 && ridge.is_finite()) {
            return Err(Error::invalid(format!("ridge must be positive, got {ridge}")));
        }
        if d == 0 {
            return Err(Error::invalid("dimension must be positive"));
        }
        Ok(DesignState {
            v: DMatrix::identity(d, d) * ridge,
            v_inv: DMatrix::identity(d, d) / ridge,
            t: 0,
            ridge,
            since_refresh: 0,
        })
    }

    pub fn v(&self) -> &DMatrix<f64> {
        &self.v
    }

    pub fn v_inv(&self) -> &DMatrix<f64> {
        &self.v_inv
    }

    /// Number of actions added.
    pub fn t(&self) -> usize {
        self.t
    }

    pub fn ridge(&self) -> f64 {
        self.ridge
    }

    pub fn dim(&self) -> usize {
        self.v.nrows()
    }

    /// Adds `x x'` to `V`.
    pub fn add_arm(&mut self, x: &DVector<f64>) {
        self.v.ger(1.0, x, x, 1.0);
        let w = &self.v_inv * x;
        let denom = 1.0 + x.dot(&w);
        debug_assert!(denom >= 1.0 - 1e-9, "V^-1 lost positive definiteness");
        self.v_inv.ger(-1.0 / denom, &w, &w, 1.0);
        symmetrize(&mut self.v);
        symmetrize(&mut self.v_inv);
        self.since_refresh += 1;
        if self.since_refresh >= REFRESH_EVERY {
            self.refresh();
        }
    }

    /// Adds every arm of `action` and advances the step counter.
    pub fn add_action(&mut self, arms: &ArmSet, action: &SubsetAction) {
        for &i in action.indices() {
            self.add_arm(arms.get(i));
        }
        self.t += 1;
    }

    /// Recomputes the inverse from a Cholesky factorization of `V`.
    pub fn refresh(&mut self) {
        if let Some(ch) = self.v.clone().cholesky() {
            self.v_inv = ch.inverse();
            symmetrize(&mut self.v_inv);
        }
        self.since_refresh = 0;
    }

    /// `g' V^{-1} g`, the squared `V^{-1}`-norm of `g`.
    pub fn mahalanobis(&self, g: &DVector<f64>) -> f64 {
        self.v_inv.quadratic_form(g).max(0.0)
    }

    /// `P = A V^{-1} A'` for the given arm set.
    pub fn arm_gram(&self, arms: &ArmSet) -> DMatrix<f64> {
        let n = arms.len();
        let w: Vec<DVector<f64>> = arms.iter().map(|a| &self.v_inv * a).collect();
        let mut p = DMatrix::zeros(n, n);
        for i in 0..n {
            for j in i..n {
                let v = arms.get(i).dot(&w[j]);
                p[(i, j)] = v;
                p[(j, i)] = v;
            }
        }
        p
    }
}

trait QuadraticForm {
    fn quadratic_form(&self, g: &DVector<f64>) -> f64;
}

impl QuadraticForm for DMatrix<f64> {
    fn quadratic_form(&self, g: &DVector<f64>) -> f64 {
        g.dot(&(self * g))
    }
}

fn symmetrize(m: &mut DMatrix<f64>) {
    let n = m.nrows();
    for i in 0..n {
        for j in 0..i {
            let v = 0.5 * (m[(i, j)] + m[(j, i)]);
            m[(i, j)] = v;
            m[(j, i)] = v;
        }
    }
}

/// Ordered pairs `(i, j)` standing for the directions `a_i - a_j`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GapSet {
    pairs: Vec<(usize, usize)>,
}

impl GapSet {
    pub fn new(pairs: Vec<(usize, usize)>) -> Result<Self> {
        let mut seen = std::collections::HashSet::new();
        for &(i, j) in &pairs {
            if i == j {
                return Err(Error::invalid(format!("pair ({i}, {j}) is not a gap")));
            }
            if !seen.insert((i.min(j), i.max(j))) {
                return Err(Error::invalid(format!("duplicate pair ({i}, {j})")));
            }
        }
        Ok(GapSet { pairs })
    }

    /// Every unordered pair drawn from `active`, in order of appearance.
    pub fn all_pairs(active: &[usize]) -> Self {
        let mut pairs = Vec::with_capacity(active.len() * active.len().saturating_sub(1) / 2);
        for (x, &i) in active.iter().enumerate() {
            for &j in &active[x + 1..] {
                pairs.push((i, j));
            }
        }
        GapSet { pairs }
    }

    pub fn pairs(&self) -> &[(usize, usize)] {
        &self.pairs
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    pub fn vector(arms: &ArmSet, (i, j): (usize, usize)) -> DVector<f64> {
        arms.get(i) - arms.get(j)
    }
}

/// `max_{g in gaps} g' V^{-1} g`.
pub fn rho(state: &DesignState, gaps: &GapSet, arms: &ArmSet) -> Result<f64> {
    if gaps.is_empty() {
        return Err(Error::invalid("gap set is empty"));
    }
    Ok(gaps
        .pairs()
        .iter()
        .map(|&p| state.mahalanobis(&GapSet::vector(arms, p)))
        .fold(f64::NEG_INFINITY, f64::max))
}

/// A direction scored by the greedy allocator.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Direction {
    /// `a_i - a_j`
    Diff(usize, usize),
    /// `a_i`
    Arm(usize),
}

impl Direction {
    pub fn vector(&self, arms: &ArmSet) -> DVector<f64> {
        match *self {
            Direction::Diff(i, j) => arms.get(i) - arms.get(j),
            Direction::Arm(i) => arms.get(i).clone(),
        }
    }

    fn current(&self, p: &DMatrix<f64>) -> f64 {
        match *self {
            Direction::Diff(i, j) => p[(i, i)] + p[(j, j)] - 2.0 * p[(i, j)],
            Direction::Arm(i) => p[(i, i)],
        }
    }

    fn cross(&self, p: &DMatrix<f64>, k: usize) -> f64 {
        match *self {
            Direction::Diff(i, j) => p[(i, k)] - p[(j, k)],
            Direction::Arm(i) => p[(i, k)],
        }
    }
}

fn gap_directions(gaps: &GapSet) -> Vec<Direction> {
    gaps.pairs().iter().map(|&(i, j)| Direction::Diff(i, j)).collect()
}

/// `max_g g'(V + a_k a_k')^{-1} g` for every candidate arm `k`, given
/// `P = A V^{-1} A'`.
pub fn candidate_objectives(p: &DMatrix<f64>, directions: &[Direction]) -> Vec<f64> {
    candidate_scores(p, directions).into_iter().map(|s| s.max).collect()
}

/// Trial value of one candidate: the greedy objective and, as a secondary key
/// for candidates tied on it, the sum over all directions.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CandidateScore {
    pub max: f64,
    pub sum: f64,
}

pub fn candidate_scores(p: &DMatrix<f64>, directions: &[Direction]) -> Vec<CandidateScore> {
    let n = p.nrows();
    let current: Vec<f64> = directions.iter().map(|g| g.current(p)).collect();
    (0..n)
        .map(|k| {
            let scale = 1.0 / (1.0 + p[(k, k)]);
            let mut score = CandidateScore {
                max: f64::NEG_INFINITY,
                sum: 0.0,
            };
            for (g, &q) in directions.iter().zip(&current) {
                let c = g.cross(p, k);
                let v = (q - c * c * scale).max(0.0);
                score.max = score.max.max(v);
                score.sum += v;
            }
            score
        })
        .collect()
}

/// `P <- P - P[:,k] P[k,:] / (1 + P[k,k])`, the effect of adding `a_k a_k'`.
fn commit(p: &mut DMatrix<f64>, k: usize) {
    let col = p.column(k).clone_owned();
    let scale = 1.0 / (1.0 + p[(k, k)]);
    p.ger(-scale, &col, &col, 1.0);
    symmetrize(p);
}

fn tied(a: f64, b: f64) -> bool {
    (a - b).abs() <= TIE_RTOL * a.abs().max(b.abs())
}

/// Best candidate, skipping `skip`: smallest `max`; among (near-)ties on it,
/// smallest `sum`; then lowest index.
///
/// The `sum` key matters on plateaus. When the largest trial value is shared
/// by directions no single arm can shrink together (say `e_4 - e_5` and
/// `e_6 - e_7`), every candidate scores the same `max`, and a pure
/// lowest-index rule would keep adding the same arm forever.
fn argmin_lowest(scores: &[CandidateScore], skip: Option<usize>) -> Option<usize> {
    let mut best: Option<usize> = None;
    for (k, s) in scores.iter().enumerate() {
        if Some(k) == skip {
            continue;
        }
        let better = match best {
            None => true,
            Some(b) => {
                let cur = scores[b];
                if tied(s.max, cur.max) {
                    !tied(s.sum, cur.sum) && s.sum < cur.sum
                } else {
                    s.max < cur.max
                }
            }
        };
        if better {
            best = Some(k);
        }
    }
    best
}

/// Greedy subset for an arbitrary list of directions.
pub fn greedy_select_for(state: &DesignState, arms: &ArmSet, directions: &[Direction], k: usize) -> Result<SubsetAction> {
    if arms.len() < 2 {
        return Err(Error::invalid("greedy selection needs at least two distinct arms"));
    }
    if directions.is_empty() {
        return Err(Error::invalid("no directions to allocate for"));
    }
    if k < 2 {
        return Err(Error::invalid("subset size must be >= 2"));
    }
    let mut p = state.arm_gram(arms);
    let mut chosen = Vec::with_capacity(k);
    for slot in 0..k {
        let scores = candidate_scores(&p, directions);
        let mut pick = argmin_lowest(&scores, None).expect("at least two arms");
        if slot + 1 == k && chosen.iter().all(|&c| c == pick) {
            pick = argmin_lowest(&scores, Some(pick)).expect("at least two arms");
        }
        chosen.push(pick);
        if slot + 1 < k {
            commit(&mut p, pick);
        }
    }
    SubsetAction::new(chosen, arms.len())
}

/// Greedy subset for the gap directions in `gaps`.
pub fn greedy_select_subset(state: &DesignState, arms: &ArmSet, gaps: &GapSet, k: usize) -> Result<SubsetAction> {
    if gaps.is_empty() {
        return Err(Error::invalid("gap set is empty"));
    }
    greedy_select_for(state, arms, &gap_directions(gaps), k)
}

/// Greedy subset balancing the arms themselves rather than their differences.
pub fn greedy_select_subset_alt(state: &DesignState, arms: &ArmSet, k: usize) -> Result<SubsetAction> {
    let directions: Vec<Direction> = (0..arms.len()).map(Direction::Arm).collect();
    greedy_select_for(state, arms, &directions, k)
}

/// `K` indices drawn uniformly with replacement, redrawn while all identical.
pub fn random_action<R: Rng + ?Sized>(n: usize, k: usize, rng: &mut R) -> Result<SubsetAction> {
    if n < 2 {
        return Err(Error::invalid("random actions need at least two arms"));
    }
    if k < 2 {
        return Err(Error::invalid("subset size must be >= 2"));
    }
    loop {
        let idx: Vec<usize> = (0..k).map(|_| rng.gen_range(0..n)).collect();
        if idx.iter().any(|&i| i != idx[0]) {
            return SubsetAction::new(idx, n);
        }
    }
}
