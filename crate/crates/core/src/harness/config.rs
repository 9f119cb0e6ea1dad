use crate::error::{Error, Result};
use crate::oracles::VicinityGuard;
use crate::solver::RunConfig;
use std::path::{Path, PathBuf};

/// One experiment: a problem, a solver configuration and where to write.
#[derive(Debug, Clone)]
pub struct ExperimentSpec {
    pub problem: String,
    pub dim: usize,
    pub m: usize,
    pub problem_seed: u64,
    pub config: RunConfig,
    pub trials: usize,
    pub out: PathBuf,
    pub plots: bool,
}

impl Default for ExperimentSpec {
    fn default() -> Self {
        ExperimentSpec {
            problem: "cutting-machine".into(),
            dim: 2,
            m: 4,
            problem_seed: 0,
            config: RunConfig::default(),
            trials: 1,
            out: PathBuf::from("out"),
            plots: false,
        }
    }
}

fn parse<T: std::str::FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .parse()
        .map_err(|_| Error::Config(format!("invalid value for {key}: {value:?}")))
}

fn parse_bool(key: &str, value: &str) -> Result<bool> {
    match value {
        "true" | "1" | "yes" | "on" => Ok(true),
        "false" | "0" | "no" | "off" => Ok(false),
        _ => Err(Error::Config(format!("invalid value for {key}: {value:?}"))),
    }
}

fn optional<T: std::str::FromStr>(key: &str, value: &str) -> Result<Option<T>> {
    if value == "auto" || value == "none" || value.is_empty() {
        Ok(None)
    } else {
        parse(key, value).map(Some)
    }
}

impl ExperimentSpec {
    /// Sets one field from its key. Dashes and underscores are interchangeable.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let key = key.trim().replace('-', "_");
        let value = value.trim();
        let c = &mut self.config;
        match key.as_str() {
            "problem" => self.problem = value.into(),
            "dim" | "d" => self.dim = parse(&key, value)?,
            "m" => self.m = parse(&key, value)?,
            "problem_seed" => self.problem_seed = parse(&key, value)?,
            "trials" => self.trials = parse(&key, value)?,
            "out" => self.out = PathBuf::from(value),
            "plots" => self.plots = parse_bool(&key, value)?,
            "variant" => c.variant = value.parse()?,
            "eps" => c.eps = parse(&key, value)?,
            "delta" => c.delta = parse(&key, value)?,
            "tau" => c.tau = optional(&key, value)?,
            "sigma" => c.sigma = parse(&key, value)?,
            "sigma0" => c.sigma0 = parse(&key, value)?,
            "r0" => c.r0 = parse(&key, value)?,
            "seed" => c.seed = parse(&key, value)?,
            "scale" => c.scale = parse(&key, value)?,
            "horizon" => c.horizon = optional(&key, value)?,
            "box_factor" => c.box_factor = parse(&key, value)?,
            "confidence" => c.confidence = value.parse()?,
            "fgap" => c.fgap = optional(&key, value)?,
            "strict_vicinity" => {
                c.guard = if parse_bool(&key, value)? { VicinityGuard::Abort } else { VicinityGuard::Off }
            }
            "vicinity" => {
                c.guard = match value {
                    "off" => VicinityGuard::Off,
                    "record" => VicinityGuard::Record,
                    "abort" => VicinityGuard::Abort,
                    _ => return Err(Error::Config(format!("invalid value for vicinity: {value:?}"))),
                }
            }
            _ => return Err(Error::Config(format!("unknown key {key:?}"))),
        }
        Ok(())
    }

    /// Applies a `key = value` text block. Blank lines and `#` comments are skipped.
    pub fn apply_text(&mut self, text: &str) -> Result<()> {
        for (no, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("line {}: expected key = value", no + 1)))?;
            self.set(k, v)?;
        }
        Ok(())
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        let mut spec = ExperimentSpec::default();
        spec.apply_text(&std::fs::read_to_string(path)?)?;
        Ok(spec)
    }

    /// The spec as a `key = value` block that [`ExperimentSpec::apply_text`] reads back.
    pub fn to_text(&self) -> String {
        let c = &self.config;
        let opt = |v: Option<String>| v.unwrap_or_else(|| "auto".into());
        let guard = match c.guard {
            VicinityGuard::Off => "off",
            VicinityGuard::Record => "record",
            VicinityGuard::Abort => "abort",
        };
        let lines = [
            ("problem", self.problem.clone()),
            ("dim", self.dim.to_string()),
            ("m", self.m.to_string()),
            ("problem_seed", self.problem_seed.to_string()),
            ("variant", c.variant.to_string()),
            ("eps", c.eps.to_string()),
            ("delta", c.delta.to_string()),
            ("tau", opt(c.tau.map(|v| v.to_string()))),
            ("sigma", c.sigma.to_string()),
            ("sigma0", c.sigma0.to_string()),
            ("r0", c.r0.to_string()),
            ("seed", c.seed.to_string()),
            ("scale", c.scale.to_string()),
            ("horizon", opt(c.horizon.map(|v| v.to_string()))),
            ("box_factor", c.box_factor.to_string()),
            ("confidence", c.confidence.to_string()),
            ("fgap", opt(c.fgap.map(|v| v.to_string()))),
            ("vicinity", guard.into()),
            ("trials", self.trials.to_string()),
            ("out", self.out.display().to_string()),
            ("plots", self.plots.to_string()),
        ];
        lines.iter().map(|(k, v)| format!("{k} = {v}\n")).collect()
    }

    pub fn validate(&self) -> Result<()> {
        if self.trials == 0 {
            return Err(Error::Config("trials must be ≥ 1".into()));
        }
        self.config.validate()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::solver::Variant;

    #[test]
    fn text_round_trip() {
        let mut spec = ExperimentSpec::default();
        spec.apply_text("# study\nproblem = quad-box\ndim = 3\nvariant = 4\nhorizon = 50\ntau = 0.01 # shrink\nstrict-vicinity = true\n")
            .unwrap();
        assert_eq!(spec.dim, 3);
        assert_eq!(spec.config.variant, Variant::ConvexDeterministic);
        assert_eq!(spec.config.horizon, Some(50));
        assert_eq!(spec.config.guard, VicinityGuard::Abort);
        let mut back = ExperimentSpec::default();
        back.apply_text(&spec.to_text()).unwrap();
        assert_eq!(back.to_text(), spec.to_text());
    }

    #[test]
    fn rejects_bad_input() {
        let mut spec = ExperimentSpec::default();
        assert!(spec.apply_text("nonsense").is_err());
        assert!(spec.set("colour", "red").is_err());
        assert!(spec.set("eps", "x").is_err());
        spec.trials = 0;
        assert!(spec.validate().is_err());
    }
}
