//! Experiment orchestration: instance generation, replication, aggregation
//! and output files.
//!
//! An [`ExperimentSpec`] names a grid (over `d`, `K` or the RUM noise level),
//! a list of strategies and a seed count. [`run_experiment`] runs every
//! (grid point, strategy, seed) triple, seeding replication `s` with stream
//! `s` of the base seed so that strategies see paired random streams, and
//! returns the raw records in grid, strategy, seed order together with one
//! [`AggregateRow`] per (grid point, strategy). [`write_outputs`] renders the
//! JSON-lines, CSV and SVG files.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use nalgebra::DVector;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::algorithms::{glm_pair_reduction, run_adaptive, run_random, run_static, PairwiseProblem, RunConfig, RunResult};
use crate::error::{Error, Result};
use crate::estimator::{fit_mle, ChoiceCounts};
use crate::model::{argmax_utility, best_arm, ArmSet, FeedbackModel, Instance};
use crate::parallel;
use crate::rng::replication_rng;

pub const DEFAULT_OMEGA: f64 = 0.01;

/// `a_i = e_i` for `i < d`, `a_d = [cos w, sin w, 0, ...]`, `theta* = 2 e_1`.
///
/// Arm 0 is best; arm `d` trails it by `2 (1 - cos w)`.
pub fn standard_instance(d: usize, omega: f64, k: usize, delta: f64) -> Result<Instance> {
    if d < 2 {
        return Err(Error::invalid(format!("the standard instance needs d >= 2, got {d}")));
    }
    let mut rows: Vec<Vec<f64>> = (0..d)
        .map(|i| {
            let mut r = vec![0.0; d];
            r[i] = 1.0;
            r
        })
        .collect();
    let mut last = vec![0.0; d];
    last[0] = omega.cos();
    last[1] = omega.sin();
    rows.push(last);
    let mut theta = DVector::zeros(d);
    theta[0] = 2.0;
    Instance::new(ArmSet::from_rows(&rows)?, theta, k, delta)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ExperimentKind {
    #[serde(rename = "sweep-d")]
    SweepD,
    #[serde(rename = "sweep-K")]
    SweepK,
    #[serde(rename = "profile")]
    Profile,
    #[serde(rename = "robustness")]
    Robustness,
    #[serde(rename = "trajectory")]
    Trajectory,
    #[serde(rename = "single")]
    Single,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Strategy {
    Random,
    Static,
    Adaptive,
    /// Uniformly random pairs through the `K = 2` reduction, run for a fixed
    /// horizon; a stand-in for an external pairwise baseline.
    UniformPair,
}

impl Strategy {
    pub fn name(self) -> &'static str {
        match self {
            Strategy::Random => "random",
            Strategy::Static => "static",
            Strategy::Adaptive => "adaptive",
            Strategy::UniformPair => "uniform-pair",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum GridAxis {
    #[serde(rename = "d")]
    D,
    #[serde(rename = "K")]
    K,
    #[serde(rename = "sigma")]
    Sigma,
}

impl GridAxis {
    pub fn name(self) -> &'static str {
        match self {
            GridAxis::D => "d",
            GridAxis::K => "K",
            GridAxis::Sigma => "sigma",
        }
    }
}

/// File names, relative to the output directory.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct OutputPaths {
    pub raw: String,
    pub aggregate: String,
    pub svg: Option<String>,
    pub trajectory: String,
}

impl Default for OutputPaths {
    fn default() -> Self {
        OutputPaths {
            raw: "raw.jsonl".into(),
            aggregate: "aggregate.csv".into(),
            svg: Some("plot.svg".into()),
            trajectory: "trajectory.csv".into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentSpec {
    pub kind: ExperimentKind,
    /// Dimensions; `sweep-d` runs every entry, other kinds use the first.
    pub d_values: Vec<usize>,
    /// Subset sizes; `sweep-K` runs every entry, other kinds use the first.
    pub k_values: Vec<usize>,
    #[serde(default = "default_omega")]
    pub omega: f64,
    /// Noise level of the Gaussian RUM used by the `robustness` kind.
    #[serde(default = "default_sigma")]
    pub sigma: f64,
    #[serde(default = "default_delta")]
    pub delta: f64,
    pub seeds: usize,
    #[serde(default)]
    pub base_seed: u64,
    /// Defaults depend on the kind, see [`ExperimentSpec::effective_strategies`].
    #[serde(default)]
    pub strategies: Vec<Strategy>,
    #[serde(default)]
    pub run: RunConfig,
    /// Steps recorded by the `trajectory` kind and played by `uniform-pair`.
    #[serde(default = "default_horizon")]
    pub horizon: usize,
    /// Keep per-step incumbents in the raw records.
    #[serde(default)]
    pub keep_trajectories: bool,
    #[serde(default)]
    pub outputs: OutputPaths,
}

fn default_omega() -> f64 {
    DEFAULT_OMEGA
}

fn default_sigma() -> f64 {
    1.0
}

fn default_delta() -> f64 {
    0.05
}

fn default_horizon() -> usize {
    2000
}

impl ExperimentSpec {
    pub fn from_json(s: &str) -> Result<Self> {
        let spec: ExperimentSpec = serde_json::from_str(s)?;
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if self.d_values.is_empty() || self.k_values.is_empty() {
            return Err(Error::invalid("d_values and k_values must be non-empty"));
        }
        if self.seeds == 0 {
            return Err(Error::invalid("seeds must be >= 1"));
        }
        if self.d_values.iter().any(|&d| d < 2) {
            return Err(Error::invalid("every d must be >= 2"));
        }
        if self.k_values.iter().any(|&k| k < 2) {
            return Err(Error::invalid("every K must be >= 2"));
        }
        if !(self.sigma > 0.0) {
            return Err(Error::invalid("sigma must be positive"));
        }
        if self.horizon == 0 {
            return Err(Error::invalid("horizon must be >= 1"));
        }
        if self.effective_strategies().contains(&Strategy::UniformPair) && self.k_values[0] != 2 {
            return Err(Error::invalid("the uniform-pair baseline needs K = 2"));
        }
        self.run.validate()
    }

    pub fn effective_strategies(&self) -> Vec<Strategy> {
        if !self.strategies.is_empty() {
            return self.strategies.clone();
        }
        match self.kind {
            ExperimentKind::Profile => vec![Strategy::Static, Strategy::Adaptive],
            ExperimentKind::Trajectory => vec![Strategy::Static, Strategy::Adaptive, Strategy::UniformPair],
            _ => vec![Strategy::Random, Strategy::Static, Strategy::Adaptive],
        }
    }

    pub fn axis(&self) -> GridAxis {
        match self.kind {
            ExperimentKind::SweepK => GridAxis::K,
            ExperimentKind::Robustness => GridAxis::Sigma,
            _ => GridAxis::D,
        }
    }

    /// `(d, K, feedback, grid value)` per grid point.
    fn grid(&self) -> Vec<(usize, usize, FeedbackModel, f64)> {
        let (d0, k0) = (self.d_values[0], self.k_values[0]);
        let fb = self.run.feedback;
        match self.kind {
            ExperimentKind::SweepD => self.d_values.iter().map(|&d| (d, k0, fb, d as f64)).collect(),
            ExperimentKind::SweepK => self.k_values.iter().map(|&k| (d0, k, fb, k as f64)).collect(),
            ExperimentKind::Robustness => vec![(d0, k0, FeedbackModel::GaussianRum { sigma: self.sigma }, self.sigma)],
            _ => vec![(d0, k0, fb, d0 as f64)],
        }
    }

    /// Replaces the grids with the paper-scale ones.
    pub fn full_scale(&mut self) {
        match self.kind {
            ExperimentKind::SweepD => {
                self.d_values = (4..=10).collect();
                self.k_values = vec![3];
                self.seeds = self.seeds.max(10);
            }
            ExperimentKind::SweepK => {
                self.d_values = vec![7];
                self.k_values = (2..=7).collect();
                self.seeds = self.seeds.max(10);
            }
            ExperimentKind::Profile => {
                self.d_values = vec![5];
                self.k_values = vec![3];
                self.seeds = self.seeds.max(10);
            }
            ExperimentKind::Robustness => {
                self.d_values = vec![7];
                self.k_values = vec![3];
                self.seeds = self.seeds.max(10);
            }
            ExperimentKind::Trajectory => {
                self.d_values = vec![8];
                self.k_values = vec![2];
                self.seeds = self.seeds.max(100);
            }
            ExperimentKind::Single => {}
        }
    }
}

/// One run together with where it sits in the experiment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RawRecord {
    pub strategy: Strategy,
    pub grid_axis: GridAxis,
    pub grid_value: f64,
    pub seed: u64,
    #[serde(flatten)]
    pub result: RunResult,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AggregateRow {
    pub strategy: Strategy,
    pub grid_axis: GridAxis,
    pub grid_value: f64,
    pub n_seeds: usize,
    pub mean_tau: f64,
    pub stderr_tau: f64,
    pub frac_correct: f64,
    /// Per-arm share of slots, averaged over seeds.
    pub pull_fracs: Vec<f64>,
}

/// Fraction of runs whose incumbent is the best arm after each step.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryCurve {
    pub strategy: Strategy,
    pub grid_value: f64,
    pub frac_correct: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentOutput {
    pub records: Vec<RawRecord>,
    pub rows: Vec<AggregateRow>,
    pub curves: Vec<TrajectoryCurve>,
}

/// Uniformly random pair queries for `horizon` steps, refitting the MLE after
/// each and recording the incumbent. Never stops early.
pub fn run_uniform_pairs<R: Rng + ?Sized>(
    problem: &PairwiseProblem,
    horizon: usize,
    cfg: &RunConfig,
    rng: &mut R,
) -> Result<RunResult> {
    let instance = problem.instance();
    let arms = instance.arms();
    let all: Vec<usize> = (0..instance.n_arms()).collect();
    let mut counts = ChoiceCounts::new();
    let mut pulls = vec![0u64; instance.n_arms()];
    let mut theta = DVector::zeros(instance.dim());
    let mut trajectory = cfg.record_trajectory.then(|| Vec::with_capacity(horizon));
    for _ in 0..horizon {
        let pair = problem.pairs()[rng.gen_range(0..problem.pairs().len())];
        let success = problem.query(pair, rng)?;
        counts.record(&problem.action(pair)?, usize::from(!success));
        pulls[pair.i] += 1;
        pulls[pair.j] += 1;
        theta = fit_mle(&counts, arms, cfg.lambda, cfg.mle_tol, cfg.mle_max_iter, &theta)?.theta_hat;
        if let Some(t) = trajectory.as_mut() {
            t.push(argmax_utility(arms, &theta, &all).expect("arms"));
        }
    }
    let returned_arm = argmax_utility(arms, &theta, &all).expect("arms");
    Ok(RunResult {
        returned_arm,
        tau: horizon,
        pull_counts: pulls,
        correct: returned_arm == best_arm(instance),
        truncated: true,
        batches: Vec::new(),
        trajectory,
    })
}

/// Runs one strategy on one instance with the given stream.
pub fn run_strategy<R: Rng + ?Sized>(
    strategy: Strategy,
    instance: &Instance,
    cfg: &RunConfig,
    horizon: usize,
    rng: &mut R,
) -> Result<RunResult> {
    match strategy {
        Strategy::Random => run_random(instance, cfg, rng),
        Strategy::Static => run_static(instance, cfg, rng),
        Strategy::Adaptive => run_adaptive(instance, cfg, rng),
        Strategy::UniformPair => run_uniform_pairs(&glm_pair_reduction(instance)?, horizon, cfg, rng),
    }
}

pub fn run_experiment(spec: &ExperimentSpec) -> Result<ExperimentOutput> {
    spec.validate()?;
    let strategies = spec.effective_strategies();
    let trajectories = spec.kind == ExperimentKind::Trajectory;
    let mut cells = Vec::new();
    for (d, k, feedback, value) in spec.grid() {
        let instance = standard_instance(d, spec.omega, k, spec.delta)?;
        let cfg = RunConfig {
            feedback,
            record_trajectory: trajectories || spec.keep_trajectories,
            ..spec.run
        };
        for &s in &strategies {
            cells.push((instance.clone(), cfg, value, s));
        }
    }

    let seeds = spec.seeds;
    let results = parallel::replicate(cells.len() * seeds, |job| {
        let (instance, cfg, _, strategy) = &cells[job / seeds];
        let seed = (job % seeds) as u64;
        let mut rng = replication_rng(spec.base_seed, seed);
        run_strategy(*strategy, instance, cfg, spec.horizon, &mut rng)
    });

    let axis = spec.axis();
    let mut records = Vec::with_capacity(results.len());
    for (job, r) in results.into_iter().enumerate() {
        let (_, _, value, strategy) = &cells[job / seeds];
        records.push(RawRecord {
            strategy: *strategy,
            grid_axis: axis,
            grid_value: *value,
            seed: (job % seeds) as u64,
            result: r?,
        });
    }

    let mut rows = Vec::with_capacity(cells.len());
    let mut curves = Vec::new();
    for (c, (instance, _, value, strategy)) in cells.iter().enumerate() {
        let group = &records[c * seeds..(c + 1) * seeds];
        rows.push(aggregate(*strategy, axis, *value, group));
        if trajectories {
            curves.push(TrajectoryCurve {
                strategy: *strategy,
                grid_value: *value,
                frac_correct: fraction_correct_curve(group, best_arm(instance), spec.horizon),
            });
        }
    }
    if !spec.keep_trajectories {
        for r in &mut records {
            r.result.trajectory = None;
        }
    }
    Ok(ExperimentOutput { records, rows, curves })
}

/// Mean, standard error, correctness and mean pull shares over `group`.
pub fn aggregate(strategy: Strategy, axis: GridAxis, value: f64, group: &[RawRecord]) -> AggregateRow {
    let n = group.len();
    let taus: Vec<f64> = group.iter().map(|r| r.result.tau as f64).collect();
    let mean = taus.iter().sum::<f64>() / n as f64;
    let stderr = if n > 1 {
        let var = taus.iter().map(|t| (t - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
        (var / n as f64).sqrt()
    } else {
        0.0
    };
    let correct = group.iter().filter(|r| r.result.correct).count() as f64 / n as f64;
    let arms = group.first().map_or(0, |r| r.result.pull_counts.len());
    let mut fracs = vec![0.0; arms];
    for r in group {
        let total: u64 = r.result.pull_counts.iter().sum();
        if total > 0 {
            for (f, &c) in fracs.iter_mut().zip(&r.result.pull_counts) {
                *f += c as f64 / total as f64;
            }
        }
    }
    for f in &mut fracs {
        *f /= n as f64;
    }
    AggregateRow {
        strategy,
        grid_axis: axis,
        grid_value: value,
        n_seeds: n,
        mean_tau: mean,
        stderr_tau: stderr,
        frac_correct: correct,
        pull_fracs: fracs,
    }
}

/// Entry `t` is the fraction of runs whose incumbent after step `t + 1` is
/// `best`. A run that stopped earlier keeps its returned arm.
pub fn fraction_correct_curve(group: &[RawRecord], best: usize, horizon: usize) -> Vec<f64> {
    let mut hits = vec![0usize; horizon];
    for r in group {
        let traj = r.result.trajectory.as_deref().unwrap_or(&[]);
        for (t, h) in hits.iter_mut().enumerate() {
            let arm = traj.get(t).copied().unwrap_or(r.result.returned_arm);
            if arm == best {
                *h += 1;
            }
        }
    }
    hits.iter().map(|&h| h as f64 / group.len().max(1) as f64).collect()
}

/// OLS slope of `ln(mean_tau)` against `ln(grid_value)`.
pub fn fit_scaling_exponent(rows: &[AggregateRow], axis: GridAxis) -> Result<f64> {
    if rows.iter().any(|r| r.grid_axis != axis) {
        return Err(Error::invalid(format!("rows mix axes; expected {}", axis.name())));
    }
    if let Some(first) = rows.first() {
        if rows.iter().any(|r| r.strategy != first.strategy) {
            return Err(Error::invalid("rows mix strategies"));
        }
    }
    let mut xs: Vec<f64> = rows.iter().map(|r| r.grid_value).collect();
    xs.sort_by(f64::total_cmp);
    xs.dedup();
    if xs.len() < 3 {
        return Err(Error::invalid("a scaling fit needs at least 3 distinct grid points"));
    }
    if rows.iter().any(|r| !(r.grid_value > 0.0 && r.mean_tau > 0.0)) {
        return Err(Error::invalid("grid values and mean stopping times must be positive"));
    }
    let pts: Vec<(f64, f64)> = rows.iter().map(|r| (r.grid_value.ln(), r.mean_tau.ln())).collect();
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    Ok(sxy / sxx)
}

pub const CSV_HEADER: &str = "strategy,grid_axis,grid_value,n_seeds,mean_tau,stderr_tau,frac_correct,pull_fracs";

pub fn aggregate_csv(rows: &[AggregateRow]) -> String {
    let mut out = String::from(CSV_HEADER);
    out.push('\n');
    for r in rows {
        let fracs: Vec<String> = r.pull_fracs.iter().map(|f| f.to_string()).collect();
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{}",
            r.strategy.name(),
            r.grid_axis.name(),
            r.grid_value,
            r.n_seeds,
            r.mean_tau,
            r.stderr_tau,
            r.frac_correct,
            fracs.join(";")
        );
    }
    out
}

pub fn raw_jsonl(records: &[RawRecord]) -> Result<String> {
    let mut out = String::new();
    for r in records {
        out.push_str(&serde_json::to_string(r)?);
        out.push('\n');
    }
    Ok(out)
}

pub fn trajectory_csv(curves: &[TrajectoryCurve]) -> String {
    let mut out = String::from("strategy,grid_value,t,frac_correct\n");
    for c in curves {
        for (t, f) in c.frac_correct.iter().enumerate() {
            let _ = writeln!(out, "{},{},{},{}", c.strategy.name(), c.grid_value, t + 1, f);
        }
    }
    out
}

fn write_file(path: &Path, contents: &str) -> Result<()> {
    fs::write(path, contents).map_err(|e| Error::io(path, e))
}

/// Writes the raw records, the aggregate table, the trajectory curves (if
/// any) and the chart into `dir`. Returns the paths written.
pub fn write_outputs(spec: &ExperimentSpec, out: &ExperimentOutput, dir: &Path) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut written = Vec::new();
    let raw = dir.join(&spec.outputs.raw);
    write_file(&raw, &raw_jsonl(&out.records)?)?;
    written.push(raw);
    let agg = dir.join(&spec.outputs.aggregate);
    write_file(&agg, &aggregate_csv(&out.rows))?;
    written.push(agg);
    if !out.curves.is_empty() {
        let p = dir.join(&spec.outputs.trajectory);
        write_file(&p, &trajectory_csv(&out.curves))?;
        written.push(p);
    }
    if let Some(svg) = &spec.outputs.svg {
        let p = dir.join(svg);
        emit_svg(&out.rows, spec.axis(), &p)?;
        written.push(p);
    }
    Ok(written)
}

const SVG_W: f64 = 640.0;
const SVG_H: f64 = 420.0;
const MARGIN: f64 = 60.0;
const PALETTE: [&str; 4] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd"];

/// Renders `mean_tau` against the grid value on log-log axes, one polyline per
/// strategy with `+-stderr` bars.
pub fn render_svg(rows: &[AggregateRow], axis: GridAxis) -> Result<String> {
    if rows.is_empty() {
        return Err(Error::invalid("no rows to plot"));
    }
    let xs: Vec<f64> = rows.iter().map(|r| r.grid_value.max(f64::MIN_POSITIVE).log10()).collect();
    let lo_y = |r: &AggregateRow| (r.mean_tau - r.stderr_tau).max(r.mean_tau * 0.5).max(1e-12).log10();
    let hi_y = |r: &AggregateRow| (r.mean_tau + r.stderr_tau).max(1e-12).log10();
    let (mut x0, mut x1) = span(xs.iter().copied());
    let (mut y0, mut y1) = span(rows.iter().flat_map(|r| [lo_y(r), hi_y(r)]));
    if x1 - x0 < 1e-9 {
        x0 -= 0.1;
        x1 += 0.1;
    }
    if y1 - y0 < 1e-9 {
        y0 -= 0.1;
        y1 += 0.1;
    }
    let px = |x: f64| MARGIN + (x - x0) / (x1 - x0) * (SVG_W - 2.0 * MARGIN);
    let py = |y: f64| SVG_H - MARGIN - (y - y0) / (y1 - y0) * (SVG_H - 2.0 * MARGIN);

    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{SVG_W}" height="{SVG_H}" viewBox="0 0 {SVG_W} {SVG_H}">"#
    );
    let _ = writeln!(s, r#"<rect width="100%" height="100%" fill="white"/>"#);
    let _ = writeln!(
        s,
        r#"<path d="M{m} {m} V{b} H{r}" fill="none" stroke="black"/>"#,
        m = MARGIN,
        b = SVG_H - MARGIN,
        r = SVG_W - MARGIN
    );
    let _ = writeln!(
        s,
        r#"<text x="{:.2}" y="{:.2}" text-anchor="middle" font-size="13">{} (log)</text>"#,
        SVG_W / 2.0,
        SVG_H - 15.0,
        axis.name()
    );
    let _ = writeln!(
        s,
        r#"<text x="15" y="{:.2}" font-size="13" transform="rotate(-90 15 {:.2})" text-anchor="middle">mean stopping time (log)</text>"#,
        SVG_H / 2.0,
        SVG_H / 2.0
    );
    for (label, x) in [(x0, px(x0)), (x1, px(x1))] {
        let _ = writeln!(
            s,
            r#"<text x="{x:.2}" y="{:.2}" text-anchor="middle" font-size="11">{:.3}</text>"#,
            SVG_H - MARGIN + 16.0,
            10f64.powf(label)
        );
    }
    for (label, y) in [(y0, py(y0)), (y1, py(y1))] {
        let _ = writeln!(
            s,
            r#"<text x="{:.2}" y="{y:.2}" text-anchor="end" font-size="11">{:.4e}</text>"#,
            MARGIN - 4.0,
            10f64.powf(label)
        );
    }

    let mut strategies: Vec<Strategy> = rows.iter().map(|r| r.strategy).collect();
    strategies.sort();
    strategies.dedup();
    for (n, strat) in strategies.iter().enumerate() {
        let color = PALETTE[n % PALETTE.len()];
        let mut pts: Vec<&AggregateRow> = rows.iter().filter(|r| r.strategy == *strat).collect();
        pts.sort_by(|a, b| a.grid_value.total_cmp(&b.grid_value));
        let coords: Vec<String> = pts
            .iter()
            .map(|r| format!("{:.2},{:.2}", px(r.grid_value.log10()), py(r.mean_tau.max(1e-12).log10())))
            .collect();
        let _ = writeln!(
            s,
            r#"<polyline fill="none" stroke="{color}" stroke-width="2" points="{}"/>"#,
            coords.join(" ")
        );
        for r in &pts {
            let x = px(r.grid_value.log10());
            let _ = writeln!(
                s,
                r#"<line x1="{x:.2}" y1="{:.2}" x2="{x:.2}" y2="{:.2}" stroke="{color}"/>"#,
                py(lo_y(r)),
                py(hi_y(r))
            );
        }
        let _ = writeln!(
            s,
            r#"<text x="{:.2}" y="{:.2}" font-size="12" fill="{color}">{}</text>"#,
            SVG_W - MARGIN + 5.0 - 55.0,
            MARGIN + 16.0 * n as f64,
            strat.name()
        );
    }
    s.push_str("</svg>\n");
    Ok(s)
}

fn span(values: impl Iterator<Item = f64>) -> (f64, f64) {
    values.fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| (lo.min(v), hi.max(v)))
}

/// [`render_svg`] written to `path`. Nothing is created when `rows` is empty.
pub fn emit_svg(rows: &[AggregateRow], axis: GridAxis, path: &Path) -> Result<()> {
    let svg = render_svg(rows, axis)?;
    write_file(path, &svg)
}
