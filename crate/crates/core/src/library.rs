//! Greedy protocol library grown from a stream of instances.
//!
//! Each instance is tried against the stored protocols. A protocol reaching
//! `f_minus` consumes the instance; otherwise a fresh single-instance
//! optimization, escalated until `f_plus`, adds a new entry. The library is
//! saturated once `saturation_window` consecutive instances add nothing.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dynamics::{evolve_with, EvolveOptions};
use crate::error::{Error, Result};
use crate::model::{map_logical_to_physical, LogicalInstance, PassageHamiltonian};
use crate::optimize::{escalate_with, DcrabConfig, GroupObjective};
use crate::schedule::{ProtocolFile, Schedule};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MatchOrder {
    /// Oldest entry first; the first one above threshold wins.
    #[default]
    Insertion,
    /// Every entry is tried and the highest fidelity wins.
    Best,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LibraryConfig {
    pub f_minus: f64,
    pub f_plus: f64,
    pub saturation_window: usize,
    pub stream_seed: u64,
    pub match_order: MatchOrder,
}

impl Default for LibraryConfig {
    fn default() -> Self {
        Self {
            f_minus: 0.66,
            f_plus: 0.9,
            saturation_window: 50,
            stream_seed: 0,
            match_order: MatchOrder::Insertion,
        }
    }
}

impl LibraryConfig {
    pub fn validate(&self) -> Result<()> {
        let mut errors = Vec::new();
        if !(0.0 < self.f_minus && self.f_minus < self.f_plus && self.f_plus < 1.0) {
            errors.push(format!(
                "thresholds need 0 < f_minus < f_plus < 1, got f_minus={} f_plus={}",
                self.f_minus, self.f_plus
            ));
        }
        if self.saturation_window == 0 {
            errors.push("saturation_window must be positive".to_string());
        }
        if errors.is_empty() {
            Ok(())
        } else {
            Err(Error::Config(errors))
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct LibraryEntry {
    /// Carries its own annealing time.
    pub protocol: Schedule,
    pub parent_id: String,
}

impl LibraryEntry {
    pub fn annealing_time(&self) -> f64 {
        self.protocol.annealing_time()
    }
}

/// What happened to one stream instance.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "decision", rename_all = "snake_case")]
pub enum Decision {
    Matched { entry: usize, fidelity: f64 },
    NewProtocol { entry: usize, fidelity: f64 },
    /// Optimization hit the time cap; the instance was skipped.
    Hard { best_fidelity: f64 },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GrowthStep {
    pub instance_id: String,
    #[serde(flatten)]
    pub decision: Decision,
    /// Library size after this instance.
    pub size: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ProtocolLibrary {
    pub config: LibraryConfig,
    pub entries: Vec<LibraryEntry>,
    pub growth_log: Vec<GrowthStep>,
    pub saturated: bool,
    /// Propagation settings used for every fidelity the library reports.
    pub evolve: EvolveOptions,
}

impl ProtocolLibrary {
    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Library size after each consumed instance.
    pub fn growth_curve(&self) -> Vec<usize> {
        self.growth_log.iter().map(|s| s.size).collect()
    }

    /// Number of trailing instances that added no entry.
    pub fn trailing_without_growth(&self) -> usize {
        self.growth_log
            .iter()
            .rev()
            .take_while(|s| !matches!(s.decision, Decision::NewProtocol { .. }))
            .count()
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(&LibraryFile::from(self))?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let file: LibraryFile = serde_json::from_str(text)?;
        file.config.validate()?;
        let entries = file
            .entries
            .into_iter()
            .map(|e| {
                let protocol = Schedule::try_from(e.protocol)?;
                if (protocol.annealing_time() - e.t).abs() > 1e-12 * e.t.abs().max(1.0) {
                    return Err(Error::InvalidProtocol(format!(
                        "entry T={} disagrees with protocol T={}",
                        e.t,
                        protocol.annealing_time()
                    )));
                }
                Ok(LibraryEntry {
                    protocol,
                    parent_id: e.parent_id,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            config: file.config,
            entries,
            growth_log: file.growth_log,
            saturated: file.saturated,
            evolve: file.evolve,
        })
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
struct EntryFile {
    protocol: ProtocolFile,
    #[serde(rename = "T")]
    t: f64,
    parent_id: String,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
struct LibraryFile {
    config: LibraryConfig,
    entries: Vec<EntryFile>,
    growth_log: Vec<GrowthStep>,
    saturated: bool,
    #[serde(default)]
    evolve: EvolveOptions,
}

impl From<&ProtocolLibrary> for LibraryFile {
    fn from(lib: &ProtocolLibrary) -> Self {
        Self {
            config: lib.config.clone(),
            entries: lib
                .entries
                .iter()
                .map(|e| EntryFile {
                    protocol: ProtocolFile::from(&e.protocol),
                    t: e.annealing_time(),
                    parent_id: e.parent_id.clone(),
                })
                .collect(),
            growth_log: lib.growth_log.clone(),
            saturated: lib.saturated,
            evolve: lib.evolve.clone(),
        }
    }
}

/// Outcome of trying every entry on one instance.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Classification {
    /// First entry (insertion order) at or above the threshold.
    pub matched: Option<usize>,
    pub fidelities: Vec<f64>,
}

fn entry_fidelity(entry: &LibraryEntry, ham: &PassageHamiltonian, evolve: &EvolveOptions) -> Result<f64> {
    Ok(evolve_with(ham, &entry.protocol, evolve)?.fidelity)
}

/// Fidelity of `inst` under every entry of `lib`.
pub fn classify_instance(inst: &LogicalInstance, lib: &ProtocolLibrary, threshold: f64) -> Result<Classification> {
    if lib.is_empty() {
        return Err(Error::Domain("cannot classify against an empty library".into()));
    }
    let strength = lib.entries[0].protocol.constraint_strength();
    let ham = PassageHamiltonian::new(&map_logical_to_physical(inst, strength)?);
    let fidelities = lib
        .entries
        .par_iter()
        .map(|e| entry_fidelity(e, &ham, &lib.evolve))
        .collect::<Result<Vec<_>>>()?;
    Ok(Classification {
        matched: fidelities.iter().position(|&f| f >= threshold),
        fidelities,
    })
}

/// Tries entries in insertion order, a thread-count chunk at a time, and
/// stops at the first chunk containing a match.
fn find_match(
    entries: &[LibraryEntry],
    ham: &PassageHamiltonian,
    cfg: &LibraryConfig,
    evolve: &EvolveOptions,
) -> Result<Option<(usize, f64)>> {
    match cfg.match_order {
        MatchOrder::Insertion => {
            let chunk = rayon::current_num_threads().max(1);
            for (c, block) in entries.chunks(chunk).enumerate() {
                let values = block
                    .par_iter()
                    .map(|e| entry_fidelity(e, ham, evolve))
                    .collect::<Result<Vec<_>>>()?;
                if let Some(i) = values.iter().position(|&f| f >= cfg.f_minus) {
                    return Ok(Some((c * chunk + i, values[i])));
                }
            }
            Ok(None)
        }
        MatchOrder::Best => {
            let values = entries
                .par_iter()
                .map(|e| entry_fidelity(e, ham, evolve))
                .collect::<Result<Vec<_>>>()?;
            let best = values
                .iter()
                .enumerate()
                .filter(|(_, &f)| f >= cfg.f_minus)
                .fold(None, |acc: Option<(usize, f64)>, (i, &f)| match acc {
                    Some((_, bf)) if bf >= f => acc,
                    _ => Some((i, f)),
                });
            Ok(best)
        }
    }
}

/// Consumes `stream` in order. `opt_cfg.target_fidelity` is replaced by
/// `cfg.f_plus` for the single-instance optimizations.
pub fn build_library(stream: &[LogicalInstance], cfg: &LibraryConfig, opt_cfg: &DcrabConfig) -> Result<ProtocolLibrary> {
    if stream.is_empty() {
        return Err(Error::Domain("library stream is empty".into()));
    }
    cfg.validate()?;
    let opt = DcrabConfig {
        target_fidelity: cfg.f_plus,
        objective_subsample: None,
        ..opt_cfg.clone()
    };
    opt.validate()?;

    let mut lib = ProtocolLibrary {
        config: cfg.clone(),
        entries: Vec::new(),
        growth_log: Vec::with_capacity(stream.len()),
        saturated: false,
        evolve: opt.evolve.clone(),
    };
    for inst in stream {
        let ham = PassageHamiltonian::new(&map_logical_to_physical(inst, opt.constraint_strength)?);
        let decision = match find_match(&lib.entries, &ham, cfg, &opt.evolve)? {
            Some((entry, fidelity)) => Decision::Matched { entry, fidelity },
            None => {
                let objective = GroupObjective::from_hamiltonians(vec![ham], opt.evolve.clone());
                match escalate_with(&objective, &opt) {
                    Ok(found) => {
                        lib.entries.push(LibraryEntry {
                            protocol: found.record.best_schedule,
                            parent_id: inst.id.clone(),
                        });
                        Decision::NewProtocol {
                            entry: lib.entries.len() - 1,
                            fidelity: found.record.best_objective,
                        }
                    }
                    Err(Error::Hardness { best_fidelity, .. }) => Decision::Hard { best_fidelity },
                    Err(e) => return Err(e),
                }
            }
        };
        lib.growth_log.push(GrowthStep {
            instance_id: inst.id.clone(),
            decision,
            size: lib.entries.len(),
        });
        if !lib.entries.is_empty() && lib.trailing_without_growth() >= cfg.saturation_window {
            lib.saturated = true;
        }
    }
    Ok(lib)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn thresholds_are_validated() {
        assert!(LibraryConfig::default().validate().is_ok());
        let bad = LibraryConfig {
            f_minus: 0.95,
            saturation_window: 0,
            ..Default::default()
        };
        match bad.validate() {
            Err(Error::Config(errors)) => assert_eq!(errors.len(), 2),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn decisions_serialize_flat() {
        let step = GrowthStep {
            instance_id: "inst-000001".into(),
            decision: Decision::Matched { entry: 0, fidelity: 0.7 },
            size: 1,
        };
        let text = serde_json::to_string(&step).unwrap();
        assert_eq!(text, r#"{"instance_id":"inst-000001","decision":"matched","entry":0,"fidelity":0.7,"size":1}"#);
        assert_eq!(serde_json::from_str::<GrowthStep>(&text).unwrap(), step);
    }
}
