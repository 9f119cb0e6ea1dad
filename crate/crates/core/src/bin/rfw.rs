use clap::{Args, Parser, Subcommand};
use reliable_fw::harness::{self, verify, ExperimentSpec};
use reliable_fw::Error;
use std::path::PathBuf;
use std::process::ExitCode;

#[derive(Parser)]
#[command(name = "rfw", version, about = "Reliable Frank-Wolfe experiments", allow_negative_numbers = true)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one or more seeded trials and write traces, summary and plots.
    Run(Overrides),
    /// Run verification suites and report pass/fail per suite.
    Verify {
        /// Suite ids, or `all`.
        #[arg(default_values_t = vec!["all".to_string()])]
        suites: Vec<String>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Write the reports as JSON to this file.
        #[arg(long)]
        json: Option<PathBuf>,
    },
    /// Print the constants ledger for a problem and configuration.
    Constants(Overrides),
}

#[derive(Args, Default)]
struct Overrides {
    /// key = value experiment file; flags override its entries.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    problem: Option<String>,
    #[arg(long)]
    dim: Option<usize>,
    #[arg(long)]
    m: Option<usize>,
    #[arg(long)]
    problem_seed: Option<u64>,
    /// nonconvex-stochastic, nonconvex-deterministic, convex-stochastic,
    /// convex-deterministic, or 1-4.
    #[arg(long)]
    variant: Option<String>,
    #[arg(long)]
    eps: Option<f64>,
    #[arg(long)]
    delta: Option<f64>,
    #[arg(long)]
    tau: Option<f64>,
    #[arg(long)]
    sigma: Option<f64>,
    #[arg(long)]
    sigma0: Option<f64>,
    #[arg(long)]
    r0: Option<f64>,
    #[arg(long)]
    trials: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    scale: Option<f64>,
    #[arg(long)]
    horizon: Option<usize>,
    #[arg(long)]
    box_factor: Option<f64>,
    /// per-iteration or global.
    #[arg(long)]
    confidence: Option<String>,
    #[arg(long)]
    fgap: Option<f64>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    plots: bool,
    #[arg(long)]
    strict_vicinity: bool,
}

impl Overrides {
    fn spec(&self) -> Result<ExperimentSpec, Error> {
        let mut spec = match &self.config {
            Some(path) => ExperimentSpec::from_file(path)?,
            None => ExperimentSpec::default(),
        };
        let pairs: Vec<(&str, Option<String>)> = vec![
            ("problem", self.problem.clone()),
            ("dim", self.dim.map(|v| v.to_string())),
            ("m", self.m.map(|v| v.to_string())),
            ("problem_seed", self.problem_seed.map(|v| v.to_string())),
            ("variant", self.variant.clone()),
            ("eps", self.eps.map(|v| v.to_string())),
            ("delta", self.delta.map(|v| v.to_string())),
            ("tau", self.tau.map(|v| v.to_string())),
            ("sigma", self.sigma.map(|v| v.to_string())),
            ("sigma0", self.sigma0.map(|v| v.to_string())),
            ("r0", self.r0.map(|v| v.to_string())),
            ("trials", self.trials.map(|v| v.to_string())),
            ("seed", self.seed.map(|v| v.to_string())),
            ("scale", self.scale.map(|v| v.to_string())),
            ("horizon", self.horizon.map(|v| v.to_string())),
            ("box_factor", self.box_factor.map(|v| v.to_string())),
            ("confidence", self.confidence.clone()),
            ("fgap", self.fgap.map(|v| v.to_string())),
            ("out", self.out.as_ref().map(|p| p.display().to_string())),
        ];
        for (k, v) in pairs {
            if let Some(v) = v {
                spec.set(k, &v)?;
            }
        }
        if self.plots {
            spec.plots = true;
        }
        if self.strict_vicinity {
            spec.set("strict_vicinity", "true")?;
        }
        spec.validate()?;
        Ok(spec)
    }
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Config(_)
        | Error::InvalidArgument(_)
        | Error::InvalidPolytope(_)
        | Error::InfeasibleStart(_)
        | Error::Unknown { .. }
        | Error::Json(_)
        | Error::Dimension { .. } => 2,
        _ => 1,
    }
}

fn run(cli: Cli) -> Result<bool, Error> {
    match cli.command {
        Command::Run(o) => {
            let spec = o.spec()?;
            let s = harness::run(&spec)?;
            println!(
                "{} {} T={} trials={} violations={} ({:.4}, 95% CI [{:.4}, {:.4}]) failed={} mean f(x_out)={:.6e}",
                s.problem,
                s.variant,
                s.horizon,
                s.trials,
                s.violations,
                s.violation_fraction,
                s.violation_ci95.0,
                s.violation_ci95.1,
                s.failed_trials,
                s.mean_f_out
            );
            if s.fgap_estimated {
                println!("note: f(x0) - f* was estimated from the vertex set ({:.6e})", s.fgap);
            }
            if s.horizon_overridden {
                println!("note: horizon overridden (formula gives {:.3e})", s.horizon_formula);
            }
            println!("artifacts written to {}", spec.out.display());
            Ok(s.failed_trials == 0)
        }
        Command::Verify { suites, seed, json } => {
            let ids: Vec<String> = if suites.iter().any(|s| s == "all") {
                verify::SUITES.iter().map(|s| s.to_string()).collect()
            } else {
                suites
            };
            let mut reports = Vec::new();
            for id in &ids {
                let r = verify::run_suite(id, seed)?;
                println!("{}", r.line());
                reports.push(r);
            }
            if let Some(path) = json {
                std::fs::write(path, serde_json::to_string_pretty(&reports)?)?;
            }
            Ok(reports.iter().all(|r| r.passed))
        }
        Command::Constants(o) => {
            let spec = o.spec()?;
            let problem = harness::build_problem(&spec)?;
            print!("{}", harness::constants_report(&problem, &spec.config)?);
            Ok(true)
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    match run(cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
