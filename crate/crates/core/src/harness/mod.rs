//! Experiment runner: Monte-Carlo trials, CSV/JSON artifacts, SVG figures,
//! constants reports and batch verification suites.

mod config;
pub mod plot;
pub mod verify;

pub use config::ExperimentSpec;

use crate::error::{Error, Result};
use crate::estimation::{min_samples, psi_inverse};
use crate::oracles::{mix_seed, problem, Problem};
use crate::solver::{calibrate, reliable_fw_calibrated, Calibration, RunConfig, RunOutput, Variant};
use plot::Series;
use rayon::prelude::*;
use serde::Serialize;
use std::fs::{self, File};
use std::io::BufWriter;
use std::path::Path;

pub fn build_problem(spec: &ExperimentSpec) -> Result<Problem> {
    problem(&spec.problem, spec.dim, spec.m, spec.problem_seed)
}

/// Seed of trial `i` under the master seed.
pub fn trial_seed(master: u64, i: usize) -> u64 {
    mix_seed(master, i as u64)
}

/// Two-sided Wilson score interval for `k` successes in `n` trials.
pub fn wilson_interval(k: usize, n: usize, z: f64) -> (f64, f64) {
    if n == 0 {
        return (0.0, 1.0);
    }
    let nf = n as f64;
    let p = k as f64 / nf;
    let denom = 1.0 + z * z / nf;
    let center = (p + z * z / (2.0 * nf)) / denom;
    let half = z * (p * (1.0 - p) / nf + z * z / (4.0 * nf * nf)).sqrt() / denom;
    let lo = if k == 0 { 0.0 } else { (center - half).max(0.0) };
    let hi = if k == n { 1.0 } else { (center + half).min(1.0) };
    (lo, hi)
}

#[derive(Debug, Clone, Serialize)]
pub struct TrialSummary {
    pub trial: usize,
    pub seed: u64,
    pub variant: Variant,
    pub horizon: usize,
    pub t0: usize,
    pub x_out: Vec<f64>,
    pub f_out: f64,
    pub safe: bool,
    pub unsafe_steps: usize,
    pub min_true_residual: f64,
    pub nfo_count: String,
    pub sfo_count: u64,
    pub guard_trips: u64,
    pub error: Option<String>,
}

impl TrialSummary {
    fn from_output(trial: usize, seed: u64, variant: Variant, out: &RunOutput, problem: &Problem) -> Self {
        let min_res = out.trace.rows.iter().map(|r| r.min_true_residual).fold(f64::INFINITY, f64::min);
        TrialSummary {
            trial,
            seed,
            variant,
            horizon: out.trace.len(),
            t0: out.t0,
            x_out: out.x_out.iter().copied().collect(),
            f_out: problem.objective.value(&out.x_out),
            safe: out.safe(),
            unsafe_steps: out.trace.unsafe_steps(),
            min_true_residual: min_res,
            nfo_count: out.nfo_count.to_string(),
            sfo_count: out.sfo_count,
            guard_trips: out.guard_trips,
            error: None,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct Summary {
    pub problem: String,
    pub variant: Variant,
    pub config: RunConfig,
    pub horizon: usize,
    pub horizon_formula: f64,
    pub horizon_overridden: bool,
    pub fgap: f64,
    pub fgap_estimated: bool,
    pub trials: usize,
    pub failed_trials: usize,
    pub violations: usize,
    pub violation_fraction: f64,
    pub violation_ci95: (f64, f64),
    pub mean_f_out: f64,
    pub total_guard_trips: u64,
    pub per_trial: Vec<TrialSummary>,
}

impl Summary {
    pub fn safe_fraction(&self) -> f64 {
        1.0 - self.violation_fraction
    }
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    Ok(BufWriter::new(File::create(path)?))
}

/// Runs every trial, writes artifacts under `spec.out` and returns the summary.
pub fn run(spec: &ExperimentSpec) -> Result<Summary> {
    spec.validate()?;
    let problem = build_problem(spec)?;
    let cal = calibrate(&spec.config, &problem)?;
    fs::create_dir_all(&spec.out)?;
    fs::write(spec.out.join("experiment.conf"), spec.to_text())?;
    fs::write(spec.out.join("constants.txt"), cal.constants.ledger())?;

    let results: Vec<(TrialSummary, Option<RunOutput>)> = (0..spec.trials)
        .into_par_iter()
        .map(|i| {
            let seed = trial_seed(spec.config.seed, i);
            let cfg = RunConfig { seed, ..spec.config.clone() };
            match reliable_fw_calibrated(&cfg, &problem, cal.clone()) {
                Ok(out) => {
                    let s = TrialSummary::from_output(i, seed, cfg.variant, &out, &problem);
                    (s, Some(out))
                }
                Err(e) => (
                    TrialSummary {
                        trial: i,
                        seed,
                        variant: cfg.variant,
                        horizon: cal.horizon,
                        t0: 0,
                        x_out: Vec::new(),
                        f_out: f64::NAN,
                        safe: false,
                        unsafe_steps: 0,
                        min_true_residual: f64::NAN,
                        nfo_count: "0".into(),
                        sfo_count: 0,
                        guard_trips: 0,
                        error: Some(e.to_string()),
                    },
                    None,
                ),
            }
        })
        .collect();

    results
        .par_iter()
        .filter_map(|(s, out)| out.as_ref().map(|o| (s.trial, o)))
        .try_for_each(|(i, out)| -> Result<()> {
            out.trace.write_csv(create(&spec.out.join(format!("trace_{i:04}.csv")))?)?;
            out.trace
                .write_diagnostics_csv(create(&spec.out.join(format!("diagnostics_{i:04}.csv")))?)?;
            out.trace
                .write_measurements_csv(create(&spec.out.join(format!("measurements_{i:04}.csv")))?)?;
            Ok(())
        })?;

    let per_trial: Vec<TrialSummary> = results.iter().map(|(s, _)| s.clone()).collect();
    let trials = per_trial.len();
    let violations = per_trial.iter().filter(|s| !s.safe).count();
    let completed: Vec<&TrialSummary> = per_trial.iter().filter(|s| s.error.is_none()).collect();
    let mean_f_out = completed.iter().map(|s| s.f_out).sum::<f64>() / completed.len().max(1) as f64;
    let summary = Summary {
        problem: problem.id.clone(),
        variant: spec.config.variant,
        config: spec.config.clone(),
        horizon: cal.horizon,
        horizon_formula: cal.horizon_formula,
        horizon_overridden: cal.horizon_overridden,
        fgap: cal.fgap,
        fgap_estimated: cal.fgap_estimated,
        trials,
        failed_trials: trials - completed.len(),
        violations,
        violation_fraction: violations as f64 / trials as f64,
        violation_ci95: wilson_interval(violations, trials, 1.96),
        mean_f_out,
        total_guard_trips: per_trial.iter().map(|s| s.guard_trips).sum(),
        per_trial,
    };
    fs::write(spec.out.join("summary.json"), serde_json::to_string_pretty(&summary)?)?;
    write_summary_csv(&summary, &spec.out.join("summary.csv"))?;

    if spec.plots {
        let outputs: Vec<&RunOutput> = results.iter().filter_map(|(_, o)| o.as_ref()).collect();
        write_plots(spec, &problem, &outputs)?;
    }
    Ok(summary)
}

fn write_summary_csv(summary: &Summary, path: &Path) -> Result<()> {
    use std::io::Write;
    let mut w = create(path)?;
    writeln!(w, "trial,seed,variant,T,t0,f_out,safe,unsafe_steps,min_true_residual,nfo_count,sfo_count,guard_trips,x_out")?;
    for s in &summary.per_trial {
        let x: Vec<String> = s.x_out.iter().map(|v| format!("{v:e}")).collect();
        writeln!(
            w,
            "{},{},{},{},{},{:e},{},{},{:e},{},{},{},{}",
            s.trial,
            s.seed,
            s.variant,
            s.horizon,
            s.t0,
            s.f_out,
            s.safe,
            s.unsafe_steps,
            s.min_true_residual,
            s.nfo_count,
            s.sfo_count,
            s.guard_trips,
            x.join(";")
        )?;
    }
    Ok(())
}

fn write_plots(spec: &ExperimentSpec, problem: &Problem, outputs: &[&RunOutput]) -> Result<()> {
    let shown = outputs.iter().take(COLORS_SHOWN);
    let f_series: Vec<Series> = shown
        .clone()
        .enumerate()
        .map(|(k, o)| Series {
            label: format!("trial {k}"),
            points: o.trace.rows.iter().map(|r| (r.nfo_count as f64, r.f)).collect(),
        })
        .collect();
    fs::write(
        spec.out.join("f_vs_nfo.svg"),
        plot::line_plot(&format!("{}: objective", problem.id), "NFO calls", "f(x_t)", &f_series, true, false),
    )?;
    let gap_series: Vec<Series> = shown
        .enumerate()
        .map(|(k, o)| Series {
            label: format!("trial {k}"),
            points: o.trace.rows.iter().map(|r| ((r.t + 1) as f64, r.fw_gap_true)).collect(),
        })
        .collect();
    fs::write(
        spec.out.join("gap_vs_t.svg"),
        plot::line_plot(&format!("{}: FW gap", problem.id), "t + 1", "FW gap", &gap_series, true, true),
    )?;
    if problem.polytope.d() == 2 {
        if let Some(o) = outputs.first() {
            let est = o.final_estimate.as_ref().map(|e| e.polytope()).transpose()?;
            let mut path: Vec<_> = o.trace.rows.iter().map(|r| r.x.clone()).collect();
            path.extend(o.trace.x_final.clone());
            let svg = plot::region_plot(&format!("{}: feasible region", problem.id), &problem.polytope, est.as_ref(), &path)?;
            fs::write(spec.out.join("region.svg"), svg)?;
        }
    }
    Ok(())
}

const COLORS_SHOWN: usize = 6;

/// Flat `key = value` report of the constants, the horizon and first sample counts.
pub fn constants_report(problem: &Problem, config: &RunConfig) -> Result<String> {
    let cal = calibrate(config, problem)?;
    Ok(constants_text(&cal, config, problem))
}

fn constants_text(cal: &Calibration, config: &RunConfig, problem: &Problem) -> String {
    let c = &cal.constants;
    let d = problem.polytope.d();
    let n0_theory = min_samples(config.variant, 0, c.c2, d, 1.0).map(|n| n.to_string()).unwrap_or_else(|e| e.to_string());
    let n0_practical = min_samples(config.variant, 0, c.c2, d, config.scale)
        .map(|n| n.to_string())
        .unwrap_or_else(|e| e.to_string());
    let mut s = String::new();
    s.push_str(&format!("problem = {}\n", problem.id));
    s.push_str(&format!("variant = {}\n", config.variant));
    s.push_str(&c.ledger());
    s.push_str(&format!("rho_min = {:e}\n", cal.geom.rho_min));
    s.push_str(&format!("fgap = {:e}\n", cal.fgap));
    s.push_str(&format!("fgap_estimated = {}\n", cal.fgap_estimated));
    s.push_str(&format!("T_formula = {:e}\n", cal.horizon_formula));
    s.push_str(&format!("T = {}\n", cal.horizon));
    s.push_str(&format!("T_overridden = {}\n", cal.horizon_overridden));
    s.push_str(&format!("n0_theory = {n0_theory}\n"));
    s.push_str(&format!("n0_practical = {n0_practical}\n"));
    s.push_str(&format!("scale = {}\n", config.scale));
    s
}

/// ψ⁻¹ at level ζ/m, i.e. the per-constraint ellipsoid radius used for joint coverage.
pub fn joint_radius(n: f64, zeta: f64, m: usize, d: usize) -> Result<f64> {
    if m == 0 {
        return Err(Error::InvalidArgument("m must be ≥ 1".into()));
    }
    psi_inverse(n, zeta / m as f64, d)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn wilson_examples() {
        let (lo, hi) = wilson_interval(0, 200, 1.96);
        assert_eq!(lo, 0.0);
        assert!(hi > 0.0 && hi < 0.03);
        let (lo, hi) = wilson_interval(50, 100, 1.96);
        assert_relative_eq!(0.5 - lo, hi - 0.5, epsilon = 1e-12);
    }

    #[test]
    fn run_writes_artifacts_and_is_reproducible() {
        let dir = tempfile::tempdir().unwrap();
        let mut spec = ExperimentSpec {
            problem: "quad-box".into(),
            trials: 2,
            plots: true,
            out: dir.path().join("a"),
            ..ExperimentSpec::default()
        };
        spec.config.variant = Variant::NonconvexDeterministic;
        spec.config.horizon = Some(30);
        spec.config.scale = 1e-3;
        let s = run(&spec).unwrap();
        assert_eq!(s.trials, 2);
        let trace = fs::read_to_string(spec.out.join("trace_0000.csv")).unwrap();
        assert_eq!(trace.lines().count(), 31);
        assert!(trace.starts_with(crate::solver::IterateTrace::HEADER));
        for f in ["summary.json", "summary.csv", "constants.txt", "f_vs_nfo.svg", "region.svg", "measurements_0001.csv"] {
            assert!(spec.out.join(f).exists(), "{f}");
        }
        spec.out = dir.path().join("b");
        run(&spec).unwrap();
        let again = fs::read_to_string(spec.out.join("trace_0000.csv")).unwrap();
        assert_eq!(trace, again);
    }

    #[test]
    fn constants_report_lists_both_sample_counts() {
        let p = crate::oracles::cutting_machine_problem([150.0, 0.09]);
        let cfg = RunConfig { delta: 0.01, horizon: Some(100), scale: 1e-12, ..RunConfig::default() };
        let text = constants_report(&p, &cfg).unwrap();
        for key in ["eps0", "l_a", "kappa", "c0", "c9", "n0_theory", "n0_practical"] {
            assert!(text.lines().any(|l| l.starts_with(&format!("{key} ="))), "{key}");
        }
    }

    #[test]
    fn infeasible_start_is_rejected() {
        let mut p = crate::oracles::cutting_machine_problem([150.0, 0.09]);
        p.x0[0] = 250.0;
        assert!(matches!(constants_report(&p, &RunConfig::default()), Err(Error::InfeasibleStart(_))));
    }
}
