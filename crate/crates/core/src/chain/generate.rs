use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use super::{state_from_index, PartitionedChain, State};
use crate::trace::NoiseTrace;

/// Ground-truth state labels of a generated trace, one per sample.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StatePath {
    states: Vec<u8>,
    states_per_system: usize,
}

/// A maximal run of impulsive labels in a [`StatePath`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LabeledImpulse {
    pub start: usize,
    pub duration: usize,
    /// System entered from the background, i.e. the impulse group.
    pub group: usize,
}

impl StatePath {
    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    pub fn index(&self, i: usize) -> usize {
        self.states[i] as usize
    }

    pub fn state(&self, i: usize) -> State {
        state_from_index(self.states_per_system, self.index(i))
    }

    pub fn is_impulsive(&self, i: usize) -> bool {
        self.states[i] != 0
    }

    pub fn impulsive_count(&self) -> usize {
        self.states.iter().filter(|&&s| s != 0).count()
    }

    /// Runs of consecutive impulsive samples.
    pub fn impulses(&self) -> Vec<LabeledImpulse> {
        let mut out = Vec::new();
        let mut i = 0;
        while i < self.states.len() {
            if self.states[i] == 0 {
                i += 1;
                continue;
            }
            let start = i;
            let group = (self.states[i] as usize - 1) / self.states_per_system + 1;
            while i < self.states.len() && self.states[i] != 0 {
                i += 1;
            }
            out.push(LabeledImpulse {
                start,
                duration: i - start,
                group,
            });
        }
        out
    }
}

/// Simulates `n` steps of the chain starting in the background state.
///
/// Each step emits one Gaussian draw from the current state and then moves
/// according to the transition matrix. The output depends only on
/// `(chain, n, seed)`.
pub fn generate(chain: &PartitionedChain, n: usize, seed: u64) -> (NoiseTrace, StatePath) {
    let count = chain.state_count();
    // Sparse cumulative rows; the self-transition is tested first.
    let rows: Vec<Vec<(u8, f64)>> = (0..count)
        .map(|r| {
            let mut targets: Vec<(usize, f64)> = (0..count)
                .map(|c| (c, chain.transition_matrix()[(r, c)]))
                .filter(|&(_, p)| p > 0.0)
                .collect();
            targets.sort_by_key(|&(c, _)| if c == r { 0 } else { 1 + c });
            let mut acc = 0.0;
            targets
                .into_iter()
                .map(|(c, p)| {
                    acc += p;
                    (c as u8, acc)
                })
                .collect()
        })
        .collect();
    let emissions: Vec<(f64, f64)> = chain
        .emissions()
        .iter()
        .map(|e| (e.mean, e.variance.sqrt()))
        .collect();

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut samples = Vec::with_capacity(n);
    let mut states = Vec::with_capacity(n);
    let mut current = 0u8;
    for _ in 0..n {
        let (mean, sd) = emissions[current as usize];
        let z: f64 = rng.sample(StandardNormal);
        samples.push((mean + sd * z) as f32);
        states.push(current);

        let u: f64 = rng.random();
        let row = &rows[current as usize];
        // Rounding can leave the last cumulative entry a hair under 1.
        current = row
            .iter()
            .find(|&&(_, cum)| u < cum)
            .unwrap_or_else(|| row.last().expect("row has a positive entry"))
            .0;
    }

    (
        NoiseTrace::new(samples, chain.config().sampling_rate_hz),
        StatePath {
            states,
            states_per_system: chain.config().states_per_system.count(),
        },
    )
}
