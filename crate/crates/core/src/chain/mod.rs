//! The partitioned Markov chain: one background state plus three chained
//! impulsive systems whose state rings trace a damped oscillation.
//!
//! State indices are laid out as `0` for the background followed by
//! `states_per_system` consecutive indices for system 1, then system 2, then
//! system 3. The 6-state configuration therefore has 19 states.

mod analysis;
mod generate;

pub use analysis::{
    absorption_times, loop_period, loop_period_closed_form, mean_sojourn, oscillation_stay_prob,
};
pub use generate::{generate, LabeledImpulse, StatePath};

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Number of impulsive systems (and impulse groups) in the model.
pub const SYSTEM_COUNT: usize = 3;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ChainError {
    #[error("invalid chain configuration: `{field}` {reason}")]
    InvalidConfig { field: String, reason: String },
    #[error(
        "infeasible oscillation in system {system}: stay probability {stay_prob} plus exit \
         probability {exit_prob} exceeds 1"
    )]
    InfeasibleOscillation {
        system: usize,
        stay_prob: f64,
        exit_prob: f64,
    },
    #[error("domain error: {0}")]
    Domain(String),
}

impl ChainError {
    pub fn code(&self) -> &'static str {
        match self {
            ChainError::InvalidConfig { .. } => "InvalidConfig",
            ChainError::InfeasibleOscillation { .. } => "InfeasibleOscillation",
            ChainError::Domain(_) => "DomainError",
        }
    }

    fn invalid(field: impl Into<String>, reason: impl Into<String>) -> Self {
        ChainError::InvalidConfig {
            field: field.into(),
            reason: reason.into(),
        }
    }
}

/// Number of states in each impulsive ring.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(try_from = "u32", into = "u32")]
pub enum StatesPerSystem {
    Four,
    #[default]
    Six,
}

impl StatesPerSystem {
    pub fn count(self) -> usize {
        match self {
            StatesPerSystem::Four => 4,
            StatesPerSystem::Six => 6,
        }
    }
}

impl TryFrom<u32> for StatesPerSystem {
    type Error = String;

    fn try_from(value: u32) -> Result<Self, Self::Error> {
        match value {
            4 => Ok(StatesPerSystem::Four),
            6 => Ok(StatesPerSystem::Six),
            other => Err(format!("states per system must be 4 or 6, got {other}")),
        }
    }
}

impl From<StatesPerSystem> for u32 {
    fn from(value: StatesPerSystem) -> Self {
        value.count() as u32
    }
}

/// Emission and exit parameters of one impulsive system.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SystemConfig {
    /// Mean impulse amplitude of the group this system represents.
    pub amplitude_mean: f64,
    /// Variance of the impulse amplitude of the group.
    pub amplitude_variance: f64,
    /// Per-step probability of leaving the system, attached to every state.
    pub exit_prob: f64,
}

/// Full parameterization of the partitioned chain.
///
/// `systems[0]` is system 1 (smallest amplitude, feeds the background) and
/// `systems[2]` is system 3 (largest amplitude). `entry_probs` uses the same
/// indexing.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChainConfig {
    pub states_per_system: StatesPerSystem,
    pub background_variance: f64,
    pub stay_prob: f64,
    pub entry_probs: [f64; SYSTEM_COUNT],
    pub sampling_rate_hz: f64,
    pub systems: [SystemConfig; SYSTEM_COUNT],
}

impl ChainConfig {
    /// Checks every invariant; the first violation is reported with the field
    /// it concerns.
    pub fn validate(&self) -> Result<(), ChainError> {
        if !(self.background_variance.is_finite() && self.background_variance > 0.0) {
            return Err(ChainError::invalid(
                "background_variance",
                format!("must be positive, got {}", self.background_variance),
            ));
        }
        if !(self.sampling_rate_hz.is_finite() && self.sampling_rate_hz > 0.0) {
            return Err(ChainError::invalid(
                "sampling_rate_hz",
                format!("must be positive, got {}", self.sampling_rate_hz),
            ));
        }
        if !(0.0..1.0).contains(&self.stay_prob) {
            return Err(ChainError::invalid(
                "stay_prob",
                format!("must lie in [0, 1), got {}", self.stay_prob),
            ));
        }
        for (i, sys) in self.systems.iter().enumerate() {
            let n = i + 1;
            if !(sys.amplitude_mean.is_finite() && sys.amplitude_mean > 0.0) {
                return Err(ChainError::invalid(
                    format!("systems[{n}].amplitude_mean"),
                    format!("must be positive, got {}", sys.amplitude_mean),
                ));
            }
            if !(sys.amplitude_variance.is_finite() && sys.amplitude_variance > 0.0) {
                return Err(ChainError::invalid(
                    format!("systems[{n}].amplitude_variance"),
                    format!("must be positive, got {}", sys.amplitude_variance),
                ));
            }
            if !(sys.exit_prob > 0.0 && sys.exit_prob <= 1.0) {
                return Err(ChainError::invalid(
                    format!("systems[{n}].exit_prob"),
                    format!("must lie in (0, 1], got {}", sys.exit_prob),
                ));
            }
        }
        for i in 1..SYSTEM_COUNT {
            let (lower, upper) = (
                self.systems[i - 1].amplitude_mean,
                self.systems[i].amplitude_mean,
            );
            if upper <= lower {
                return Err(ChainError::invalid(
                    "systems.amplitude_mean",
                    format!(
                        "must strictly decrease along the damping chain: system {} mean {upper} \
                         is not above system {i} mean {lower}",
                        i + 1
                    ),
                ));
            }
        }
        for (i, &p) in self.entry_probs.iter().enumerate() {
            if !(p.is_finite() && p >= 0.0) {
                return Err(ChainError::invalid(
                    format!("entry_probs[{}]", i + 1),
                    format!("must be non-negative, got {p}"),
                ));
            }
        }
        let entry_total: f64 = self.entry_probs.iter().sum();
        if entry_total >= 1.0 {
            return Err(ChainError::invalid(
                "entry_probs",
                format!("must sum below 1, got {entry_total}"),
            ));
        }
        for (i, sys) in self.systems.iter().enumerate() {
            if self.stay_prob + sys.exit_prob > 1.0 + 1e-12 {
                return Err(ChainError::InfeasibleOscillation {
                    system: i + 1,
                    stay_prob: self.stay_prob,
                    exit_prob: sys.exit_prob,
                });
            }
        }
        Ok(())
    }

    pub fn background_stay_prob(&self) -> f64 {
        1.0 - self.entry_probs.iter().sum::<f64>()
    }

    /// Probability of moving to the next state of the ring in system `system` (1-based).
    pub fn advance_prob(&self, system: usize) -> f64 {
        (1.0 - self.stay_prob - self.systems[system - 1].exit_prob).max(0.0)
    }

    pub fn state_count(&self) -> usize {
        1 + SYSTEM_COUNT * self.states_per_system.count()
    }
}

/// Gaussian emission of one state.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StateEmission {
    pub mean: f64,
    pub variance: f64,
}

/// A state of the chain.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum State {
    Background,
    /// `system` is 1-based; `phase` is the position in the ring, 0 being the entry state.
    Impulsive {
        system: u8,
        phase: u8,
    },
}

impl State {
    pub fn is_impulsive(self) -> bool {
        matches!(self, State::Impulsive { .. })
    }
}

/// A validated chain with its explicit transition matrix.
#[derive(Debug, Clone)]
pub struct PartitionedChain {
    config: ChainConfig,
    transitions: DMatrix<f64>,
    emissions: Vec<StateEmission>,
}

/// Validates `config` and assembles the dense row-stochastic transition matrix.
pub fn build_chain(config: ChainConfig) -> Result<PartitionedChain, ChainError> {
    config.validate()?;
    let k = config.states_per_system.count();
    let n = config.state_count();
    let mut p = DMatrix::<f64>::zeros(n, n);

    p[(0, 0)] = config.background_stay_prob();
    for system in 1..=SYSTEM_COUNT {
        p[(0, index_of(k, system, 0))] = config.entry_probs[system - 1];
    }

    for system in 1..=SYSTEM_COUNT {
        let exit = config.systems[system - 1]
            .exit_prob
            .min(1.0 - config.stay_prob);
        let advance = config.advance_prob(system);
        let exit_target = if system == 1 {
            0
        } else {
            index_of(k, system - 1, 0)
        };
        for phase in 0..k {
            let row = index_of(k, system, phase);
            p[(row, row)] += config.stay_prob;
            p[(row, index_of(k, system, (phase + 1) % k))] += advance;
            p[(row, exit_target)] += exit;
        }
    }

    let emissions = emission_table(&config);
    Ok(PartitionedChain {
        config,
        transitions: p,
        emissions,
    })
}

fn index_of(states_per_system: usize, system: usize, phase: usize) -> usize {
    1 + (system - 1) * states_per_system + phase
}

fn emission_table(config: &ChainConfig) -> Vec<StateEmission> {
    let bg = config.background_variance;
    let mut out = Vec::with_capacity(config.state_count());
    out.push(StateEmission {
        mean: 0.0,
        variance: bg,
    });
    for sys in &config.systems {
        let m = sys.amplitude_mean;
        let v = sys.amplitude_variance;
        let ring: &[(f64, f64)] = match config.states_per_system {
            StatesPerSystem::Four => &[(0.0, bg), (m, v), (0.0, bg), (-m, v)],
            StatesPerSystem::Six => &[
                (m / 2.0, bg),
                (m, v),
                (m / 2.0, bg),
                (-m / 2.0, bg),
                (-m, v),
                (-m / 2.0, bg),
            ],
        };
        out.extend(
            ring.iter()
                .map(|&(mean, variance)| StateEmission { mean, variance }),
        );
    }
    out
}

impl PartitionedChain {
    pub fn config(&self) -> &ChainConfig {
        &self.config
    }

    pub fn transition_matrix(&self) -> &DMatrix<f64> {
        &self.transitions
    }

    pub fn emissions(&self) -> &[StateEmission] {
        &self.emissions
    }

    pub fn state_count(&self) -> usize {
        self.transitions.nrows()
    }

    pub fn state_index(&self, state: State) -> usize {
        match state {
            State::Background => 0,
            State::Impulsive { system, phase } => index_of(
                self.config.states_per_system.count(),
                system as usize,
                phase as usize,
            ),
        }
    }

    pub fn state_at(&self, index: usize) -> State {
        state_from_index(self.config.states_per_system.count(), index)
    }

    /// Stationary distribution of the chain, solved from `pi P = pi` with the
    /// normalization constraint replacing one balance equation.
    pub fn stationary_distribution(&self) -> DVector<f64> {
        let n = self.state_count();
        let mut a = self.transitions.transpose() - DMatrix::<f64>::identity(n, n);
        let mut b = DVector::<f64>::zeros(n);
        for j in 0..n {
            a[(n - 1, j)] = 1.0;
        }
        b[n - 1] = 1.0;
        a.lu()
            .solve(&b)
            .expect("an irreducible chain has a unique stationary distribution")
    }

    /// Long-run fraction of samples emitted by impulsive states.
    pub fn impulse_sample_fraction(&self) -> f64 {
        let pi = self.stationary_distribution();
        1.0 - pi[0]
    }

    /// Expected number of samples a group-`group` impulse spends in the chain
    /// before returning to the background.
    pub fn expected_impulse_duration(&self, group: usize) -> f64 {
        (1..=group)
            .map(|s| {
                1.0 / self.config.systems[s - 1]
                    .exit_prob
                    .min(1.0 - self.config.stay_prob)
            })
            .sum()
    }
}

pub(crate) fn state_from_index(states_per_system: usize, index: usize) -> State {
    if index == 0 {
        State::Background
    } else {
        let offset = index - 1;
        State::Impulsive {
            system: (offset / states_per_system + 1) as u8,
            phase: (offset % states_per_system) as u8,
        }
    }
}
