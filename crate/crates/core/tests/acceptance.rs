//! Acceptance suite: one PASS/FAIL line per criterion.
//!
//! Runs with `cargo test -p mnl-bai --release --test acceptance`. Pass
//! criterion numbers after `--` to run a subset, e.g. `-- 7 8 9 10 11`.
//! Set `MNL_BAI_BLESS=1` to (re)write the golden files used by criterion 11.
//! The process exits non-zero if any selected criterion fails.

mod common;

use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Instant;

use common::{action, gauss_jordan_inverse, gaussian, naive_log_likelihood, naive_probs, random_arms, random_history};
use mnl_bai::algorithms::glm_pair_reduction;
use mnl_bai::design::{self, greedy_select_subset, rho, DesignState, GapSet};
use mnl_bai::estimator::{fit_mle, fit_mle_default, hessian, score, ChoiceCounts, DEFAULT_TOL};
use mnl_bai::harness::{
    fit_scaling_exponent, run_experiment, standard_instance, write_outputs, AggregateRow, ExperimentOutput,
    ExperimentSpec, GridAxis, Strategy,
};
use mnl_bai::model::{best_arm, mnl_probs, sample_winner, ArmSet, FeedbackModel, FeedbackSample, History, Instance};
use mnl_bai::rng::seeded;
use mnl_bai::theory::{f_alpha, kappa_at, kl_mnl_subset, lower_bound_value, make_perturbation};
use nalgebra::{dvector, DMatrix, DVector};
use rand::Rng;

struct Outcome {
    passed: bool,
    detail: String,
}

fn outcome(passed: bool, detail: impl Into<String>) -> Outcome {
    Outcome {
        passed,
        detail: detail.into(),
    }
}

fn note(msg: &str) {
    let _ = writeln!(std::io::stderr(), "    {msg}");
}

fn spec(json: &str) -> ExperimentSpec {
    ExperimentSpec::from_json(json).expect("valid acceptance spec")
}

fn run(spec: &ExperimentSpec) -> ExperimentOutput {
    run_experiment(spec).expect("experiment runs")
}

fn row(out: &ExperimentOutput, s: Strategy) -> &AggregateRow {
    out.rows.iter().find(|r| r.strategy == s).expect("strategy row")
}

fn describe(rows: &[AggregateRow]) {
    for r in rows {
        note(&format!(
            "{:<9} {}={:<4} mean_tau={:<10.1} stderr={:<9.1} correct={:.3} pulls=[{}]",
            r.strategy.name(),
            r.grid_axis.name(),
            r.grid_value,
            r.mean_tau,
            r.stderr_tau,
            r.frac_correct,
            r.pull_fracs.iter().map(|f| format!("{f:.3}")).collect::<Vec<_>>().join(", ")
        ));
    }
}

fn truncations(out: &ExperimentOutput) -> usize {
    out.records.iter().filter(|r| r.result.truncated).count()
}

/// Curvature of the static greedy design's information on the standard
/// instance, as a diagnostic for the configured kappa.
fn kappa_diagnostic(d: usize) -> f64 {
    let inst = standard_instance(d, 0.01, 3, 0.05).unwrap();
    let all: Vec<usize> = (0..inst.n_arms()).collect();
    let gaps = GapSet::all_pairs(&all);
    let mut state = DesignState::ridge_init(d, 1e-4).unwrap();
    let mut counts = ChoiceCounts::new();
    let mut rng = seeded(1);
    for _ in 0..2000 {
        let a = greedy_select_subset(&state, inst.arms(), &gaps, 3).unwrap();
        let w = FeedbackModel::Mnl.sample(inst.arms(), inst.theta_star(), &a, &mut rng).unwrap();
        state.add_action(inst.arms(), &a);
        counts.record(&a, w);
    }
    kappa_at(&inst, &counts, inst.theta_star(), 1e-4).unwrap()
}

fn criterion_1() -> Outcome {
    let start = Instant::now();
    let out = run(&spec(
        r#"{"kind":"single","d_values":[4],"k_values":[3],"seeds":200,"base_seed":1,"strategies":["static","adaptive"]}"#,
    ));
    let secs = start.elapsed().as_secs_f64();
    describe(&out.rows);
    note(&format!("truncated runs: {}", truncations(&out)));
    note(&format!("kappa at theta* for the static design (configured 0.5): {:.3e}", kappa_diagnostic(4)));
    let bound = 0.05 + 3.0 * (0.05f64 * 0.95 / 200.0).sqrt();
    let wrong: Vec<f64> = out.rows.iter().map(|r| 1.0 - r.frac_correct).collect();
    let ok = wrong.iter().all(|&w| w <= bound) && secs <= 300.0;
    outcome(
        ok,
        format!(
            "incorrect static={:.3} adaptive={:.3} (bound {bound:.3}), {secs:.0}s (target 300s)",
            wrong[0], wrong[1]
        ),
    )
}

fn criterion_2() -> Outcome {
    let start = Instant::now();
    let out = run(&spec(
        r#"{"kind":"sweep-d","d_values":[4,6,8,10],"k_values":[3],"seeds":10,"base_seed":1,"strategies":["static"]}"#,
    ));
    let secs = start.elapsed().as_secs_f64();
    describe(&out.rows);
    let slope = fit_scaling_exponent(&out.rows, GridAxis::D).unwrap();
    outcome(
        (1.5..=2.5).contains(&slope) && secs <= 600.0,
        format!("slope {slope:.3} (want [1.5, 2.5]), {secs:.0}s (target 600s)"),
    )
}

fn criterion_3() -> Outcome {
    let out = run(&spec(
        r#"{"kind":"sweep-K","d_values":[7],"k_values":[2,3,5,7],"seeds":10,"base_seed":1,"strategies":["static"]}"#,
    ));
    describe(&out.rows);
    let slope = fit_scaling_exponent(&out.rows, GridAxis::K).unwrap();
    outcome((-1.6..=-0.4).contains(&slope), format!("slope {slope:.3} (want [-1.6, -0.4])"))
}

fn d7_mnl() -> ExperimentOutput {
    run(&spec(r#"{"kind":"single","d_values":[7],"k_values":[3],"seeds":10,"base_seed":1}"#))
}

fn criterion_4(mnl: &ExperimentOutput) -> Outcome {
    let ratio = row(mnl, Strategy::Adaptive).mean_tau / row(mnl, Strategy::Static).mean_tau;
    outcome(ratio <= 0.5, format!("tau(adaptive)/tau(static) = {ratio:.3} (want <= 0.5)"))
}

fn criterion_5(mnl: &ExperimentOutput) -> Outcome {
    let rum = run(&spec(
        r#"{"kind":"robustness","d_values":[7],"k_values":[3],"sigma":1.0,"seeds":10,"base_seed":1}"#,
    ));
    describe(&mnl.rows);
    describe(&rum.rows);
    let order = |o: &ExperimentOutput| {
        let (a, s, r) = (
            row(o, Strategy::Adaptive).mean_tau,
            row(o, Strategy::Static).mean_tau,
            row(o, Strategy::Random).mean_tau,
        );
        (a < s && s < r, format!("adaptive {a:.0}, static {s:.0}, random {r:.0}"))
    };
    let (ok_m, m) = order(mnl);
    let (ok_r, r) = order(&rum);
    outcome(ok_m && ok_r, format!("MNL: {m}; RUM: {r} (want adaptive < static < random)"))
}

fn criterion_6() -> Outcome {
    let out = run(&spec(r#"{"kind":"profile","d_values":[5],"k_values":[3],"seeds":10,"base_seed":1}"#));
    describe(&out.rows);
    let a = row(&out, Strategy::Adaptive).pull_fracs[1];
    let s = row(&out, Strategy::Static).pull_fracs[1];
    outcome(a > s, format!("a_2 share adaptive {a:.4} vs static {s:.4}"))
}

fn criterion_7() -> Outcome {
    let mut rng = seeded(700);
    let (mut score_err, mut hess_err): (f64, f64) = (0.0, 0.0);
    for _ in 0..20 {
        let d = rng.gen_range(2..6);
        let arms = random_arms(7, d, &mut rng);
        let h = random_history(7, 3, 60, &mut rng);
        let theta = gaussian(d, 1.0, &mut rng);
        let g = score(&h, &arms, &theta, 1e-2).unwrap();
        let hm = hessian(&h, &arms, &theta, 1e-2).unwrap();
        for i in 0..d {
            let e = 1e-6;
            let mut up = theta.clone();
            up[i] += e;
            let mut dn = theta.clone();
            dn[i] -= e;
            let fd = (naive_log_likelihood(&arms, &h, &up, 1e-2) - naive_log_likelihood(&arms, &h, &dn, 1e-2)) / (2.0 * e);
            score_err = score_err.max((fd - g[i]).abs() / g[i].abs().max(1.0));
            let e = 1e-5;
            let mut up = theta.clone();
            up[i] += e;
            let mut dn = theta.clone();
            dn[i] -= e;
            let col = (score(&h, &arms, &up, 1e-2).unwrap() - score(&h, &arms, &dn, 1e-2).unwrap()) / (2.0 * e);
            for r in 0..d {
                hess_err = hess_err.max((col[r] - hm[(r, i)]).abs() / hm[(r, i)].abs().max(1.0));
            }
        }
    }

    // d = 2 grid oracle
    let mut grid_err: f64 = 0.0;
    for _ in 0..3 {
        let arms = random_arms(5, 2, &mut rng);
        let truth = gaussian(2, 0.8, &mut rng);
        let mut h = History::new();
        for _ in 0..300 {
            let a = design::random_action(5, 3, &mut rng).unwrap();
            let w = sample_winner(&mnl_probs(&arms, &truth, &a).unwrap(), &mut rng).unwrap();
            h.push(FeedbackSample::new(a, w).unwrap());
        }
        let fit = fit_mle_default(&h, &arms, 1e-2, &DVector::zeros(2)).unwrap();
        let f = |x: f64, y: f64| naive_log_likelihood(&arms, &h, &dvector![x, y], 1e-2);
        let (mut cx, mut cy, mut half) = (0.0, 0.0, 4.0);
        for _ in 0..12 {
            let mut best = (f64::NEG_INFINITY, cx, cy);
            for i in 0..=40 {
                for j in 0..=40 {
                    let x = cx - half + half * i as f64 / 20.0;
                    let y = cy - half + half * j as f64 / 20.0;
                    let v = f(x, y);
                    if v > best.0 {
                        best = (v, x, y);
                    }
                }
            }
            (cx, cy) = (best.1, best.2);
            half *= 0.25;
        }
        grid_err = grid_err.max((fit.theta_hat[0] - cx).abs().max((fit.theta_hat[1] - cy).abs()));
    }

    let mut monotone = true;
    for _ in 0..30 {
        let d = rng.gen_range(2..7);
        let arms = random_arms(8, d, &mut rng);
        let h = random_history(8, 3, rng.gen_range(5..200), &mut rng);
        let fit = fit_mle(&h, &arms, 1e-4, DEFAULT_TOL, 100, &gaussian(d, 3.0, &mut rng)).unwrap();
        monotone &= fit
            .objective_trace
            .windows(2)
            .all(|w| w[1] >= w[0] - 8.0 * f64::EPSILON * w[0].abs().max(1.0));
    }
    outcome(
        score_err <= 1e-5 && hess_err <= 1e-4 && grid_err <= 1e-3 && monotone,
        format!("score {score_err:.1e}, hessian {hess_err:.1e}, grid oracle {grid_err:.1e}, monotone {monotone}"),
    )
}

fn dense_v(d: usize, ridge: f64, added: &[DVector<f64>]) -> DMatrix<f64> {
    let mut v = DMatrix::identity(d, d) * ridge;
    for x in added {
        v += x * x.transpose();
    }
    v
}

fn criterion_8() -> Outcome {
    let mut rng = seeded(800);
    let arms = random_arms(10, 5, &mut rng);
    let mut state = DesignState::ridge_init(5, 1e-4).unwrap();
    let mut added = Vec::new();
    for _ in 0..1000 {
        let i = rng.gen_range(0..10);
        state.add_arm(arms.get(i));
        added.push(arms.get(i).clone());
    }
    let inv = gauss_jordan_inverse(&dense_v(5, 1e-4, &added));
    let sm_err = (state.v_inv() - &inv).norm() / inv.norm();

    // per-slot greedy choice against exhaustive dense evaluation
    let mut greedy_ok = 0;
    for _ in 0..50 {
        let (d, n) = (rng.gen_range(2..5), rng.gen_range(3..7));
        let arms = random_arms(n, d, &mut rng);
        let mut state = DesignState::ridge_init(d, 1e-2).unwrap();
        let mut committed = Vec::new();
        for _ in 0..rng.gen_range(0..10) {
            let i = rng.gen_range(0..n);
            state.add_arm(arms.get(i));
            committed.push(arms.get(i).clone());
        }
        let gaps = GapSet::all_pairs(&(0..n).collect::<Vec<_>>());
        let gv: Vec<DVector<f64>> = gaps.pairs().iter().map(|&p| GapSet::vector(&arms, p)).collect();
        let chosen = greedy_select_subset(&state, &arms, &gaps, 2).unwrap();
        let first = chosen.indices()[0];
        let objective = |k: usize| {
            let mut all = committed.clone();
            all.push(arms.get(k).clone());
            let inv = gauss_jordan_inverse(&dense_v(d, 1e-2, &all));
            gv.iter().map(|g| g.dot(&(&inv * g))).fold(f64::NEG_INFINITY, f64::max)
        };
        let best = (0..n).map(objective).fold(f64::INFINITY, f64::min);
        if objective(first) <= best * (1.0 + 1e-9) {
            greedy_ok += 1;
        }
    }

    let arms = random_arms(6, 4, &mut rng);
    let gaps = GapSet::all_pairs(&(0..6).collect::<Vec<_>>());
    let mut state = DesignState::ridge_init(4, 1e-4).unwrap();
    let mut prev = rho(&state, &gaps, &arms).unwrap();
    let mut rho_ok = true;
    for _ in 0..100 {
        let a = greedy_select_subset(&state, &arms, &gaps, 3).unwrap();
        state.add_action(&arms, &a);
        let r = rho(&state, &gaps, &arms).unwrap();
        rho_ok &= r <= prev * (1.0 + 1e-12);
        prev = r;
    }
    outcome(
        sm_err <= 1e-8 && greedy_ok == 50 && rho_ok,
        format!("Sherman-Morrison {sm_err:.1e}, greedy {greedy_ok}/50 exhaustive, rho monotone {rho_ok}"),
    )
}

fn criterion_9() -> Outcome {
    let mut rng = seeded(900);
    let (mut kl_err, mut zero_err, mut resid): (f64, f64, f64) = (0.0, 0.0, 0.0);
    let mut done = 0;
    while done < 100 {
        let d = rng.gen_range(2..7);
        let arms = random_arms(d, d, &mut rng);
        let m = DMatrix::from_columns(&arms.iter().cloned().collect::<Vec<_>>());
        if m.determinant().abs() < 1e-3 {
            continue;
        }
        let Ok(inst) = Instance::new(arms, gaussian(d, 0.5, &mut rng), 3, 0.05) else { continue };
        let best = best_arm(&inst);
        let j = (best + 1 + rng.gen_range(0..d - 1)) % d;
        let rep = make_perturbation(&inst, j, rng.gen_range(0.01..0.5)).unwrap();
        resid = resid.max(rep.equality_residual).max(rep.margin_residual.abs());
        let others: Vec<usize> = (0..d).filter(|&i| i != j).collect();
        let idx = vec![j, others[rng.gen_range(0..others.len())], others[rng.gen_range(0..others.len())]];
        let mu_j = naive_probs(inst.arms(), inst.theta_star(), &idx)[0];
        let kl = kl_mnl_subset(inst.arms(), &action(&idx, d), inst.theta_star(), &rep.theta_j).unwrap();
        kl_err = kl_err.max((kl - f_alpha(rep.epsilon + rep.gap, mu_j).unwrap()).abs());
        if others.len() >= 2 {
            let s = action(&[others[0], others[1]], d);
            zero_err = zero_err.max(kl_mnl_subset(inst.arms(), &s, inst.theta_star(), &rep.theta_j).unwrap());
        }
        done += 1;
    }

    let mut ortho_err: f64 = 0.0;
    for d in 2..8 {
        let rows: Vec<Vec<f64>> = (0..d).map(|i| (0..d).map(|c| f64::from(u8::from(c == i))).collect()).collect();
        let mut theta = gaussian(d, 0.3, &mut rng);
        theta[0] = 1.0;
        let inst = Instance::new(ArmSet::from_rows(&rows).unwrap(), theta.clone(), 2, 0.05).unwrap();
        for j in 1..d {
            let rep = make_perturbation(&inst, j, 0.05).unwrap();
            let mut expect = DVector::zeros(d);
            expect[j] = -(0.05 + theta[0] - theta[j]);
            ortho_err = ortho_err.max((&rep.delta_j - expect).amax());
        }
    }

    let two = Instance::new(ArmSet::from_rows(&[vec![1.0, 0.0], vec![0.0, 1.0]]).unwrap(), dvector![0.9, 0.0], 2, 0.05).unwrap();
    let lb = lower_bound_value(&two, 0.1, 0.05).unwrap().total;
    outcome(
        kl_err <= 1e-10 && zero_err <= 1e-10 && resid <= 1e-8 && ortho_err <= 1e-10 && (lb - 0.39001).abs() <= 1e-4,
        format!(
            "KL {kl_err:.1e}, j not in S {zero_err:.1e}, residuals {resid:.1e}, orthonormal {ortho_err:.1e}, lower bound {lb:.5}"
        ),
    )
}

fn criterion_10() -> Outcome {
    let mut rng = seeded(1000);
    let mut simplex: f64 = 0.0;
    for _ in 0..1000 {
        let arms = random_arms(6, 3, &mut rng);
        let theta = gaussian(3, 10.0, &mut rng);
        let p = mnl_probs(&arms, &theta, &design::random_action(6, 4, &mut rng).unwrap()).unwrap();
        simplex = simplex.max((p.iter().sum::<f64>() - 1.0).abs());
    }

    let arms = random_arms(5, 3, &mut rng);
    let theta = gaussian(3, 1.5, &mut rng);
    let mut worst_z: f64 = 0.0;
    for idx in [vec![0, 1], vec![1, 2, 3], vec![0, 4, 4, 2]] {
        let a = action(&idx, 5);
        let p = mnl_probs(&arms, &theta, &a).unwrap();
        let n = 100_000;
        let mut hits = vec![0usize; idx.len()];
        for _ in 0..n {
            hits[FeedbackModel::Mnl.sample(&arms, &theta, &a, &mut rng).unwrap()] += 1;
        }
        for (h, &q) in hits.iter().zip(&p) {
            let sd = (q * (1.0 - q) / n as f64).sqrt();
            worst_z = worst_z.max((*h as f64 / n as f64 - q).abs() / sd);
        }
    }

    let mut glm: f64 = 0.0;
    let mut pairs = 0;
    while pairs < 100 {
        let arms = random_arms(4, 3, &mut rng);
        let Ok(inst) = Instance::new(arms, gaussian(3, 1.5, &mut rng), 2, 0.05) else { continue };
        let problem = glm_pair_reduction(&inst).unwrap();
        for &pair in problem.pairs() {
            let u = problem.feature(pair).dot(inst.theta_star());
            glm = glm.max((problem.success_probability(pair).unwrap() - 1.0 / (1.0 + (-u).exp())).abs());
            pairs += 1;
        }
    }
    outcome(
        simplex <= 1e-12 && worst_z <= 3.0 && glm <= 1e-12,
        format!("simplex {simplex:.1e}, Monte Carlo max |z| {worst_z:.2}, GLM identity {glm:.1e} over {pairs} pairs"),
    )
}

fn golden_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/golden")
}

fn criterion_11() -> Outcome {
    let s = spec(
        r#"{"kind":"sweep-d","d_values":[2,3],"k_values":[3],"seeds":3,"base_seed":11,"run":{"max_steps":20000},
            "outputs":{"raw":"raw.jsonl","aggregate":"aggregate.csv","svg":null,"trajectory":"trajectory.csv"}}"#,
    );
    let dirs = [tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap()];
    let mut files = Vec::new();
    for dir in &dirs {
        files.push(write_outputs(&s, &run(&s), dir.path()).unwrap());
    }
    let read = |p: &PathBuf| std::fs::read(p).unwrap();
    let same_twice = files[0].len() == files[1].len() && files[0].iter().zip(&files[1]).all(|(a, b)| read(a) == read(b));

    let golden = golden_dir();
    if std::env::var_os("MNL_BAI_BLESS").is_some() {
        std::fs::create_dir_all(&golden).unwrap();
        for f in &files[0] {
            std::fs::copy(f, golden.join(f.file_name().unwrap())).unwrap();
        }
        note("golden files rewritten");
    }
    let mut golden_ok = true;
    for f in &files[0] {
        let g = golden.join(f.file_name().unwrap());
        let matches = std::fs::read(&g).map(|bytes| bytes == read(f)).unwrap_or(false);
        if !matches {
            note(&format!("differs from {}", g.display()));
        }
        golden_ok &= matches;
    }
    outcome(
        same_twice && golden_ok,
        format!("two invocations identical: {same_twice}; matches checked-in golden files: {golden_ok}"),
    )
}

fn main() -> ExitCode {
    let selected: Vec<u32> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let want = |n: u32| selected.is_empty() || selected.contains(&n);
    let mut all_passed = true;
    let mut report = |n: u32, name: &str, f: &mut dyn FnMut() -> Outcome| {
        if !want(n) {
            return;
        }
        let _ = writeln!(std::io::stderr(), "criterion {n}: {name}");
        let start = Instant::now();
        let o = f();
        all_passed &= o.passed;
        let _ = writeln!(
            std::io::stdout(),
            "criterion {n:>2} {:<30} {} ({:.1}s) {}",
            name,
            if o.passed { "PASS" } else { "FAIL" },
            start.elapsed().as_secs_f64(),
            o.detail
        );
        let _ = std::io::stdout().flush();
    };

    report(1, "delta-correctness", &mut criterion_1);
    report(2, "d^2 scaling", &mut criterion_2);
    report(3, "1/K scaling", &mut criterion_3);
    let mut mnl = None;
    report(4, "adaptive speedup", &mut || criterion_4(mnl.get_or_insert_with(d7_mnl)));
    report(5, "strategy ordering", &mut || criterion_5(mnl.get_or_insert_with(d7_mnl)));
    report(6, "arm-pull profile", &mut criterion_6);
    report(7, "estimator suite", &mut criterion_7);
    report(8, "design suite", &mut criterion_8);
    report(9, "theory suite", &mut criterion_9);
    report(10, "model suite", &mut criterion_10);
    report(11, "determinism", &mut criterion_11);

    if all_passed {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
