//! Run configuration, profiles and the config hash stamped on artifacts.

use std::path::Path;

use lhz_protocols::cohort::BalanceMethod;
use lhz_protocols::dynamics::EvolveOptions;
use lhz_protocols::library::LibraryConfig;
use lhz_protocols::model::DEFAULT_CONSTRAINT_STRENGTH;
use lhz_protocols::optimize::DcrabConfig;
use lhz_protocols::schedule::CouplingMode;
use lhz_protocols::spectrum::MIN_GRID_POINTS;
use lhz_protocols::{Error, Result};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

#[derive(Clone, Copy, Debug, PartialEq, Eq, clap::ValueEnum)]
pub enum Profile {
    /// 4000 instances, 6 groups of 50, reduced optimizer budgets.
    Desk,
    /// 40000 instances, 6 groups of 400, full optimizer budgets.
    Paper,
}

/// Seeds of the stochastic stages. `--seed S` sets them to `S, S+1, S+2, S+3`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Seeds {
    pub sample: u64,
    pub split: u64,
    pub dcrab: u64,
    pub library: u64,
}

impl Seeds {
    pub fn from_master(seed: u64) -> Self {
        Self {
            sample: seed,
            split: seed.wrapping_add(1),
            dcrab: seed.wrapping_add(2),
            library: seed.wrapping_add(3),
        }
    }
}

/// Everything a pipeline run depends on. The optimizer and library seeds
/// inside `dcrab` and `library` are replaced by `seeds` at use.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub n_logical: usize,
    pub sample_size: usize,
    pub n_groups: usize,
    pub quota: usize,
    pub constraint_strength: f64,
    pub coupling: CouplingMode,
    pub grid_points: usize,
    pub levels: usize,
    pub balance: BalanceMethod,
    pub histogram_bins: usize,
    /// Instances fed to the library stage.
    pub library_stream: usize,
    pub seeds: Seeds,
    pub dcrab: DcrabConfig,
    pub library: LibraryConfig,
}

impl RunConfig {
    pub fn profile(profile: Profile) -> Self {
        match profile {
            Profile::Desk => Self {
                n_logical: 5,
                sample_size: 4000,
                n_groups: 6,
                quota: 50,
                constraint_strength: DEFAULT_CONSTRAINT_STRENGTH,
                coupling: CouplingMode::Decoupled,
                grid_points: 101,
                levels: 2,
                balance: BalanceMethod::Greedy,
                histogram_bins: 40,
                library_stream: 300,
                seeds: Seeds::from_master(7),
                dcrab: DcrabConfig {
                    n_superiterations: 3,
                    inner_max_evaluations: 20,
                    objective_subsample: Some(10),
                    evolve: EvolveOptions {
                        steps_per_unit: 3.0,
                        min_steps: 100,
                        ..Default::default()
                    },
                    ..Default::default()
                },
                library: LibraryConfig::default(),
            },
            Profile::Paper => Self {
                sample_size: 40_000,
                quota: 400,
                histogram_bins: 60,
                dcrab: DcrabConfig::default(),
                ..Self::profile(Profile::Desk)
            },
        }
    }

    /// Profile defaults overlaid with the fields present in a JSON file.
    pub fn load(path: Option<&Path>, profile: Profile, seed: Option<u64>) -> Result<Self> {
        let mut value = serde_json::to_value(Self::profile(profile))?;
        if let Some(path) = path {
            let text = std::fs::read_to_string(path)?;
            let overlay: serde_json::Value =
                serde_json::from_str(&text).map_err(|e| Error::Config(vec![format!("{}: {e}", path.display())]))?;
            merge(&mut value, overlay);
        }
        let mut cfg: Self = serde_json::from_value(value).map_err(|e| Error::Config(vec![e.to_string()]))?;
        if let Some(seed) = seed {
            cfg.seeds = Seeds::from_master(seed);
        }
        cfg.validate()?;
        Ok(cfg)
    }

    /// Every violated field, not just the first.
    pub fn validate(&self) -> Result<()> {
        let mut errors = Vec::new();
        if !(3..=5).contains(&self.n_logical) {
            errors.push(format!("n_logical must lie in 3..=5, got {}", self.n_logical));
        }
        for (name, v) in [
            ("sample_size", self.sample_size),
            ("n_groups", self.n_groups),
            ("quota", self.quota),
            ("histogram_bins", self.histogram_bins),
            ("library_stream", self.library_stream),
        ] {
            if v == 0 {
                errors.push(format!("{name} must be positive"));
            }
        }
        if self.sample_size < 2 * self.n_groups * self.quota {
            errors.push(format!(
                "sample_size {} cannot fill {} training and test groups of {}",
                self.sample_size, self.n_groups, self.quota
            ));
        }
        if !(self.constraint_strength > 0.0 && self.constraint_strength.is_finite()) {
            errors.push(format!("constraint_strength must be positive, got {}", self.constraint_strength));
        }
        if self.grid_points < MIN_GRID_POINTS {
            errors.push(format!("grid_points must be at least {MIN_GRID_POINTS}, got {}", self.grid_points));
        }
        if self.levels < 2 {
            errors.push(format!("levels must be at least 2, got {}", self.levels));
        }
        if self.dcrab.constraint_strength != self.constraint_strength || self.dcrab.coupling != self.coupling {
            errors.push("dcrab.constraint_strength and dcrab.coupling must match the top-level values".into());
        }
        for nested in [("dcrab", self.dcrab.validate()), ("library", self.library.validate())] {
            if let (name, Err(Error::Config(list))) = nested {
                errors.extend(list.into_iter().map(|e| format!("{name}.{e}")));
            }
        }
        if errors.is_empty() {
            Ok(())
        } else {
            Err(Error::Config(errors))
        }
    }

    pub fn dcrab(&self) -> DcrabConfig {
        DcrabConfig {
            seed: self.seeds.dcrab,
            ..self.dcrab.clone()
        }
    }

    pub fn library(&self) -> LibraryConfig {
        LibraryConfig {
            stream_seed: self.seeds.library,
            ..self.library.clone()
        }
    }

    /// SHA-256 of the canonical JSON form, hex encoded.
    pub fn hash(&self) -> String {
        let text = serde_json::to_string(self).expect("config serializes");
        Sha256::digest(text.as_bytes()).iter().map(|b| format!("{b:02x}")).collect()
    }
}

fn merge(base: &mut serde_json::Value, overlay: serde_json::Value) {
    match (base, overlay) {
        (serde_json::Value::Object(b), serde_json::Value::Object(o)) => {
            for (k, v) in o {
                match b.get_mut(&k) {
                    Some(slot) => merge(slot, v),
                    None => {
                        b.insert(k, v);
                    }
                }
            }
        }
        (slot, v) => *slot = v,
    }
}
