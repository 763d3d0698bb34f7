//! Annealing protocols `s(tau)` with `A = 1 - s`, `B = s`.
//!
//! A schedule is a guess (the linear ramp or another schedule) dressed with
//! a chopped random Fourier basis,
//!
//! `s(tau) = g(tau) + tau (1 - tau) sum_n [a_n sin(2 pi w_n tau) + b_n cos(2 pi w_n tau)]`,
//!
//! optionally clamped into `[0, 1]`. The boundary factor vanishes at both
//! ends, so `s(0) = 0` and `s(1) = 1` hold exactly for every representable
//! schedule.

use std::f64::consts::TAU;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::DEFAULT_CONSTRAINT_STRENGTH;

/// How the constraint term enters the passage Hamiltonian.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CouplingMode {
    /// `c(tau) = tau * C`, independent of `s`.
    #[default]
    Decoupled,
    /// Constraint nested inside the problem ramp: `c(tau) = s(tau) * C`.
    Nested,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BasisTerm {
    pub omega: f64,
    pub a: f64,
    pub b: f64,
}

impl BasisTerm {
    #[inline]
    fn value(&self, tau: f64) -> f64 {
        let (sin, cos) = (TAU * self.omega * tau).sin_cos();
        self.a * sin + self.b * cos
    }

    #[inline]
    fn derivative(&self, tau: f64) -> f64 {
        let (sin, cos) = (TAU * self.omega * tau).sin_cos();
        TAU * self.omega * (self.a * cos - self.b * sin)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum Guess {
    Linear,
    Protocol(Box<Schedule>),
}

#[derive(Clone, Debug, PartialEq)]
pub struct Schedule {
    annealing_time: f64,
    constraint_strength: f64,
    coupling: CouplingMode,
    guess: Guess,
    basis: Vec<BasisTerm>,
    clamp: bool,
}

impl Schedule {
    /// `s(tau) = tau` over annealing time `t_anneal`.
    pub fn linear(t_anneal: f64, constraint_strength: f64) -> Result<Self> {
        check_time(t_anneal)?;
        if !(constraint_strength >= 0.0 && constraint_strength.is_finite()) {
            return Err(Error::Domain(format!("constraint strength {constraint_strength}")));
        }
        Ok(Self {
            annealing_time: t_anneal,
            constraint_strength,
            coupling: CouplingMode::Decoupled,
            guess: Guess::Linear,
            basis: Vec::new(),
            clamp: true,
        })
    }

    pub fn with_coupling(mut self, coupling: CouplingMode) -> Self {
        self.coupling = coupling;
        self
    }

    pub fn with_clamp(mut self, clamp: bool) -> Self {
        self.clamp = clamp;
        self
    }

    /// Same shape over a different annealing time (applied to the whole
    /// guess lineage).
    pub fn with_annealing_time(&self, t_anneal: f64) -> Result<Self> {
        check_time(t_anneal)?;
        let mut out = self.clone();
        let mut node = &mut out;
        loop {
            node.annealing_time = t_anneal;
            match &mut node.guess {
                Guess::Protocol(inner) => node = inner.as_mut(),
                Guess::Linear => break,
            }
        }
        Ok(out)
    }

    /// New schedule whose guess is `self`, carrying `basis` on top.
    pub fn dressed(&self, basis: Vec<BasisTerm>) -> Self {
        Self {
            annealing_time: self.annealing_time,
            constraint_strength: self.constraint_strength,
            coupling: self.coupling,
            guess: Guess::Protocol(Box::new(self.clone())),
            basis,
            clamp: self.clamp,
        }
    }

    pub fn annealing_time(&self) -> f64 {
        self.annealing_time
    }

    pub fn constraint_strength(&self) -> f64 {
        self.constraint_strength
    }

    pub fn coupling(&self) -> CouplingMode {
        self.coupling
    }

    pub fn guess(&self) -> &Guess {
        &self.guess
    }

    pub fn basis(&self) -> &[BasisTerm] {
        &self.basis
    }

    pub fn clamp(&self) -> bool {
        self.clamp
    }

    /// Number of dressing levels above the linear ramp.
    pub fn depth(&self) -> usize {
        match &self.guess {
            Guess::Linear => 0,
            Guess::Protocol(inner) => 1 + inner.depth(),
        }
    }

    /// Basis of every level, innermost first.
    pub fn lineage(&self) -> Vec<&[BasisTerm]> {
        let mut out = match &self.guess {
            Guess::Linear => Vec::new(),
            Guess::Protocol(inner) => inner.lineage(),
        };
        out.push(&self.basis);
        out
    }

    /// Whether every level carries an empty basis, i.e. the schedule is the
    /// linear ramp.
    pub fn is_linear(&self) -> bool {
        self.lineage().iter().all(|b| b.is_empty())
    }

    pub fn evaluate(&self, tau: f64) -> Result<f64> {
        check_tau(tau)?;
        Ok(self.value(tau))
    }

    /// `s(tau)` without the domain check; `tau` must lie in `[0, 1]`.
    #[inline]
    pub fn value(&self, tau: f64) -> f64 {
        let raw = self.unclamped(tau);
        if self.clamp {
            raw.clamp(0.0, 1.0)
        } else {
            raw
        }
    }

    #[inline]
    fn guess_value(&self, tau: f64) -> f64 {
        match &self.guess {
            Guess::Linear => tau,
            Guess::Protocol(inner) => inner.value(tau),
        }
    }

    #[inline]
    fn unclamped(&self, tau: f64) -> f64 {
        let g = self.guess_value(tau);
        if self.basis.is_empty() {
            return g;
        }
        let envelope = tau * (1.0 - tau);
        g + envelope * self.basis.iter().map(|t| t.value(tau)).sum::<f64>()
    }

    /// `ds/dtau`; zero wherever the clamp is active.
    pub fn derivative(&self, tau: f64) -> Result<f64> {
        check_tau(tau)?;
        Ok(self.derivative_unchecked(tau))
    }

    fn derivative_unchecked(&self, tau: f64) -> f64 {
        if self.clamp {
            let raw = self.unclamped(tau);
            if !(0.0..=1.0).contains(&raw) {
                return 0.0;
            }
        }
        let dg = match &self.guess {
            Guess::Linear => 1.0,
            Guess::Protocol(inner) => inner.derivative_unchecked(tau),
        };
        if self.basis.is_empty() {
            return dg;
        }
        let envelope = tau * (1.0 - tau);
        let d_envelope = 1.0 - 2.0 * tau;
        let sum: f64 = self.basis.iter().map(|t| t.value(tau)).sum();
        let d_sum: f64 = self.basis.iter().map(|t| t.derivative(tau)).sum();
        dg + d_envelope * sum + envelope * d_sum
    }

    /// Constraint coefficient `c(tau)`.
    pub fn constraint_ramp(&self, tau: f64) -> Result<f64> {
        check_tau(tau)?;
        Ok(self.constraint_value(tau, self.value(tau)))
    }

    /// `c(tau)` given an already evaluated `s(tau)`.
    #[inline]
    pub fn constraint_value(&self, tau: f64, s: f64) -> f64 {
        match self.coupling {
            CouplingMode::Decoupled => tau * self.constraint_strength,
            CouplingMode::Nested => s * self.constraint_strength,
        }
    }

    /// `dc/dtau`.
    pub fn constraint_derivative(&self, tau: f64) -> Result<f64> {
        check_tau(tau)?;
        Ok(match self.coupling {
            CouplingMode::Decoupled => self.constraint_strength,
            CouplingMode::Nested => self.constraint_strength * self.derivative_unchecked(tau),
        })
    }

    /// `(s, c)` pair driving the passage Hamiltonian at `tau`.
    #[inline]
    pub fn controls(&self, tau: f64) -> (f64, f64) {
        let s = self.value(tau);
        (s, self.constraint_value(tau, s))
    }

    /// Whether `s` is non-decreasing on a uniform grid of `points` samples.
    pub fn is_monotone(&self, points: usize) -> bool {
        let grid = uniform_grid(points.max(2));
        grid.windows(2).all(|w| self.value(w[1]) >= self.value(w[0]))
    }

    /// `(tau, s(tau))` on a uniform grid.
    pub fn samples(&self, points: usize) -> Vec<(f64, f64)> {
        uniform_grid(points.max(2))
            .into_iter()
            .map(|t| (t, self.value(t)))
            .collect()
    }

    /// Checks the invariants a deserialized schedule must satisfy.
    pub fn validate(&self) -> Result<()> {
        check_time(self.annealing_time)?;
        if !(self.constraint_strength >= 0.0 && self.constraint_strength.is_finite()) {
            return Err(Error::InvalidProtocol(format!(
                "constraint strength {}",
                self.constraint_strength
            )));
        }
        if self
            .basis
            .iter()
            .any(|t| !(t.omega.is_finite() && t.a.is_finite() && t.b.is_finite()))
        {
            return Err(Error::InvalidProtocol("non-finite basis term".into()));
        }
        if let Guess::Protocol(inner) = &self.guess {
            inner.validate()?;
        }
        let (start, end) = (self.value(0.0), self.value(1.0));
        if start != 0.0 || end != 1.0 {
            return Err(Error::InvalidProtocol(format!(
                "endpoints s(0) = {start}, s(1) = {end}; expected 0 and 1"
            )));
        }
        Ok(())
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(&ProtocolFile::from(self))?)
    }

    pub fn to_json_pretty(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(&ProtocolFile::from(self))?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let file: ProtocolFile = serde_json::from_str(text)?;
        Schedule::try_from(file)
    }
}

/// Uniform grid on `[0, 1]` with both endpoints exact.
pub fn uniform_grid(points: usize) -> Vec<f64> {
    assert!(points >= 2);
    let last = (points - 1) as f64;
    (0..points)
        .map(|i| if i + 1 == points { 1.0 } else { i as f64 / last })
        .collect()
}

fn check_tau(tau: f64) -> Result<()> {
    if (0.0..=1.0).contains(&tau) {
        Ok(())
    } else {
        Err(Error::Domain(format!("tau = {tau} outside [0, 1]")))
    }
}

fn check_time(t: f64) -> Result<()> {
    if t > 0.0 && t.is_finite() {
        Ok(())
    } else {
        Err(Error::Domain(format!("annealing time {t} must be positive")))
    }
}

/// Protocol file layout:
/// `{T, C, mode: decoupled|nested, guess: "linear" | <protocol>, basis: [{omega, a, b}], clamp}`.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ProtocolFile {
    #[serde(rename = "T")]
    pub t: f64,
    #[serde(rename = "C")]
    pub c: f64,
    pub mode: CouplingMode,
    pub guess: GuessFile,
    pub basis: Vec<BasisTerm>,
    pub clamp: bool,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(untagged)]
pub enum GuessFile {
    Named(String),
    Protocol(Box<ProtocolFile>),
}

impl From<&Schedule> for ProtocolFile {
    fn from(s: &Schedule) -> Self {
        Self {
            t: s.annealing_time,
            c: s.constraint_strength,
            mode: s.coupling,
            guess: match &s.guess {
                Guess::Linear => GuessFile::Named("linear".into()),
                Guess::Protocol(inner) => GuessFile::Protocol(Box::new(ProtocolFile::from(inner.as_ref()))),
            },
            basis: s.basis.clone(),
            clamp: s.clamp,
        }
    }
}

impl TryFrom<ProtocolFile> for Schedule {
    type Error = Error;

    fn try_from(file: ProtocolFile) -> Result<Self> {
        let guess = match file.guess {
            GuessFile::Named(name) if name == "linear" => Guess::Linear,
            GuessFile::Named(name) => {
                return Err(Error::InvalidProtocol(format!("unknown guess {name:?}")));
            }
            GuessFile::Protocol(inner) => Guess::Protocol(Box::new(Schedule::try_from(*inner)?)),
        };
        let schedule = Schedule {
            annealing_time: file.t,
            constraint_strength: file.c,
            coupling: file.mode,
            guess,
            basis: file.basis,
            clamp: file.clamp,
        };
        schedule.validate()?;
        Ok(schedule)
    }
}

impl Default for Schedule {
    fn default() -> Self {
        Schedule::linear(1.0, DEFAULT_CONSTRAINT_STRENGTH).expect("valid defaults")
    }
}
