//! Flat `key = value` experiment configuration.
//!
//! Blank lines and lines starting with `#` are ignored. Every key may appear
//! at most once; unknown keys and invalid values are reported with their
//! line number.

use std::collections::HashSet;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::grid::io::read_text;
use crate::metrics::Unit;
use crate::scenegen::SceneSpec;
use crate::solver::SolverConfig;

/// Keys owned by the experiment itself rather than the scene or solver.
pub const EXPERIMENT_KEYS: &[&str] = &["output_dir", "snapshot_interval", "unit"];

#[derive(Clone, Debug, Default, PartialEq)]
pub struct ExperimentConfig {
    pub scene: SceneSpec,
    pub solver: SolverConfig,
    pub output_dir: Option<PathBuf>,
    /// Write alpha and gamma snapshots every this many steps; 0 disables them.
    pub snapshot_interval: usize,
    pub unit: Unit,
}

impl ExperimentConfig {
    pub fn parse(text: &str) -> Result<Self> {
        let mut cfg = Self::default();
        let mut seen = HashSet::new();
        for (index, raw) in text.lines().enumerate() {
            let line = index + 1;
            let trimmed = raw.trim();
            if trimmed.is_empty() || trimmed.starts_with('#') {
                continue;
            }
            let err = |message: String| Error::Config { line, message };
            let (key, value) = trimmed
                .split_once('=')
                .ok_or_else(|| err(format!("expected `key = value`, got {trimmed:?}")))?;
            let (key, value) = (key.trim(), value.trim());
            if !seen.insert(key.to_string()) {
                return Err(err(format!("duplicate key {key:?}")));
            }
            let known = cfg.set(key, value).map_err(|e| err(e.to_string()))?;
            if !known {
                return Err(err(format!("unknown key {key:?}")));
            }
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::parse(&read_text(path)?).map_err(|e| match e {
            Error::Config { line, message } => Error::Config {
                line,
                message: format!("{}: {message}", path.display()),
            },
            other => other,
        })
    }

    /// Sets one key. Returns `Ok(false)` for unknown keys.
    pub fn set(&mut self, key: &str, value: &str) -> Result<bool> {
        match key {
            "output_dir" => self.output_dir = Some(PathBuf::from(value)),
            "snapshot_interval" => {
                self.snapshot_interval = value.parse().map_err(|_| {
                    Error::InvalidArgument(format!("invalid value {value:?} for snapshot_interval"))
                })?
            }
            "unit" => self.unit = value.parse()?,
            _ => return Ok(self.scene.set(key, value)? || self.solver.set(key, value)?),
        }
        Ok(true)
    }

    /// Uses `seed` for both scene generation and the solver.
    pub fn override_seed(&mut self, seed: u64) {
        self.scene.seed = seed;
        self.solver.seed = seed;
    }

    pub fn validate(&self) -> Result<()> {
        self.scene.validate()?;
        self.solver.validate()
    }

    /// Every key with its current value, in a form [`ExperimentConfig::parse`] accepts.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for (k, v) in self.scene.to_pairs() {
            out.push_str(&format!("{k} = {v}\n"));
        }
        for (k, v) in self.solver_pairs() {
            out.push_str(&format!("{k} = {v}\n"));
        }
        if let Some(dir) = &self.output_dir {
            out.push_str(&format!("output_dir = {}\n", dir.display()));
        }
        out.push_str(&format!("snapshot_interval = {}\n", self.snapshot_interval));
        let unit = match self.unit {
            Unit::Meters => "m",
            Unit::Millimeters => "mm",
        };
        out.push_str(&format!("unit = {unit}\n"));
        out
    }

    fn solver_pairs(&self) -> Vec<(&'static str, String)> {
        let s = &self.solver;
        vec![
            ("max_steps", s.max_steps.to_string()),
            ("step_size", s.step_size.to_string()),
            ("step_decay", s.step_decay.to_string()),
            ("max_log_step", s.max_log_step.to_string()),
            ("init_mode", s.init_mode.to_string()),
            ("weighting", s.weighting.to_string()),
            ("convergence_tol", s.convergence_tol.to_string()),
            ("a0", s.alpha_cfg.a0.to_string()),
            ("b0", s.alpha_cfg.b0.to_string()),
            ("eps", s.alpha_cfg.eps.to_string()),
            ("c_i", s.gamma_cfg.c_i.to_string()),
            ("c_z", s.gamma_cfg.c_z.to_string()),
            ("w_ph", s.loss_weights.w_ph.to_string()),
            ("w_z", s.loss_weights.w_z.to_string()),
            ("w_sm", s.loss_weights.w_sm.to_string()),
            ("solver_depth_min", s.depth_min.to_string()),
            ("solver_depth_max", s.depth_max.to_string()),
            ("solver_seed", s.seed.to_string()),
        ]
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scenegen::Layout;
    use crate::solver::Weighting;

    #[test]
    fn empty_text_gives_defaults() {
        assert_eq!(
            ExperimentConfig::parse("").unwrap(),
            ExperimentConfig::default()
        );
    }

    #[test]
    fn parses_keys_and_comments() {
        let cfg = ExperimentConfig::parse(
            "# experiment\n\nlayout = staircase\nweighting = static\n  c_i = 0.7  \nsnapshot_interval = 100\nunit = mm\n",
        )
        .unwrap();
        assert_eq!(cfg.scene.layout, Layout::Staircase);
        assert_eq!(cfg.solver.weighting, Weighting::Static);
        assert_eq!(cfg.solver.gamma_cfg.c_i, 0.7);
        assert_eq!(cfg.snapshot_interval, 100);
        assert_eq!(cfg.unit, Unit::Millimeters);
    }

    #[test]
    fn unknown_key_reports_line() {
        match ExperimentConfig::parse("layout = staircase\n\nbogus = 1\n") {
            Err(Error::Config { line, message }) => {
                assert_eq!(line, 3);
                assert!(message.contains("bogus"));
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn bad_values_and_syntax_report_line() {
        for (text, expected) in [
            ("width = -3\n", 1),
            ("a = 1 = 2\nweighting = sometimes\n", 1),
            ("seed = 1\nno equals sign\n", 2),
            ("seed = 1\nseed = 2\n", 2),
        ] {
            match ExperimentConfig::parse(text) {
                Err(Error::Config { line, .. }) => assert_eq!(line, expected, "{text}"),
                other => panic!("{text}: {other:?}"),
            }
        }
    }

    #[test]
    fn invariants_are_checked_before_use() {
        assert!(ExperimentConfig::parse("max_steps = 0\n").is_err());
        assert!(ExperimentConfig::parse("convergence_tol = 0\n").is_err());
        assert!(ExperimentConfig::parse("depth_min = 9\ndepth_max = 3\n").is_err());
    }

    #[test]
    fn text_round_trip() {
        let mut cfg = ExperimentConfig::parse(
            "box_depth = 3.25\nw_sm = 0.004\nsparse_pattern = jittered-grid\n",
        )
        .unwrap();
        cfg.override_seed(77);
        cfg.output_dir = Some(PathBuf::from("runs/a"));
        assert_eq!(ExperimentConfig::parse(&cfg.to_text()).unwrap(), cfg);
    }

    #[test]
    fn every_declared_key_is_accepted() {
        let cfg = ExperimentConfig::default();
        let text = cfg.to_text();
        let keys: HashSet<&str> = text
            .lines()
            .filter_map(|l| l.split_once(" = "))
            .map(|(k, _)| k)
            .collect();
        for k in SceneSpec::KEYS
            .iter()
            .chain(SolverConfig::KEYS)
            .chain(EXPERIMENT_KEYS)
        {
            if *k != "output_dir" {
                assert!(keys.contains(k), "{k}");
            }
        }
    }
}
