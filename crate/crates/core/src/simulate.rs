//! Generation-based Monte Carlo simulation of the branching random walk, for
//! estimating global, finite-typeset, and infinite-typeset extinction
//! probabilities.
//!
//! Trials are independent work items: trial `i` draws from a ChaCha stream
//! derived from `(seed, i)`, so estimates are deterministic, shard-mergeable,
//! and identical under any scheduling. The `parallel` feature fans trials out
//! over rayon; the sequential path is always available and produces bit-identical
//! tallies.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Binomial, Distribution};
use serde::{Deserialize, Serialize};

use crate::law::OffspringLaw;

/// Per-pair particle count at which stepping switches from per-particle draws
/// to one multinomial split (distribution-identical, far fewer RNG calls).
const BATCH_THRESHOLD: u64 = 16;

/// Two-sided 95% normal quantile for the Wilson interval.
const Z_95: f64 = 1.959_963_984_540_054;

/// Which typeset extinction is measured over.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TypesetSpec {
    /// The whole population.
    Global,
    /// Types in `lo..=hi`.
    FiniteRange { lo: usize, hi: usize },
    /// The infinite typeset `{ t : t % modulus == residue }`.
    Arithmetic { residue: usize, modulus: usize },
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct SimConfig {
    pub trials: u64,
    pub seed: u64,
    pub max_generations: u32,
    pub max_population: u64,
    pub typeset: TypesetSpec,
    pub initial_type: usize,
}

impl Default for SimConfig {
    fn default() -> Self {
        SimConfig {
            trials: 10_000,
            seed: 0,
            max_generations: 500,
            max_population: 1_000_000,
            typeset: TypesetSpec::Global,
            initial_type: 1,
        }
    }
}

/// Particle counts by type for one generation.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Population {
    counts: BTreeMap<usize, u64>,
    generation: u32,
    total: u64,
}

impl Population {
    pub fn single(initial_type: usize) -> Self {
        let mut counts = BTreeMap::new();
        counts.insert(initial_type, 1);
        Population {
            counts,
            generation: 0,
            total: 1,
        }
    }

    pub fn counts(&self) -> &BTreeMap<usize, u64> {
        &self.counts
    }
    pub fn generation(&self) -> u32 {
        self.generation
    }
    pub fn total(&self) -> u64 {
        self.total
    }
    pub fn is_empty(&self) -> bool {
        self.total == 0
    }
    /// Smallest occupied type; `None` when extinct. Never decreases across a
    /// step, since children sit at or above their parent's type.
    pub fn min_type(&self) -> Option<usize> {
        self.counts.keys().next().copied()
    }
}

/// Draw one offspring outcome by CDF inversion on the canonical entry order.
pub fn sample_entry(law: &OffspringLaw, uniform: f64) -> usize {
    let mut acc = 0.0;
    for (idx, e) in law.entries().iter().enumerate() {
        acc += e.prob;
        if uniform < acc {
            return idx;
        }
    }
    law.entries().len() - 1
}

/// Split `n` trials over the entry probabilities by sequential binomials
/// (exactly a multinomial draw).
fn multinomial_split(n: u64, law: &OffspringLaw, rng: &mut ChaCha8Rng) -> Vec<u64> {
    let entries = law.entries();
    let mut out = vec![0u64; entries.len()];
    let mut left = n;
    let mut remaining = 1.0f64;
    for (idx, e) in entries.iter().enumerate() {
        if left == 0 {
            break;
        }
        if idx == entries.len() - 1 {
            out[idx] = left;
            break;
        }
        let p = (e.prob / remaining).clamp(0.0, 1.0);
        let drawn = Binomial::new(left, p)
            .expect("probability clamped to [0, 1]")
            .sample(rng);
        out[idx] = drawn;
        left -= drawn;
        remaining -= e.prob;
    }
    out
}

fn place_children(
    next: &mut BTreeMap<usize, u64>,
    parent_type: usize,
    entry_idx: usize,
    multiplier: u64,
    law: &OffspringLaw,
) {
    for (offset, &c) in law.entries()[entry_idx].counts.iter().enumerate() {
        if c > 0 {
            *next.entry(parent_type + offset).or_insert(0) += u64::from(c) * multiplier;
        }
    }
}

/// Advance one generation: every particle of type `i` independently draws an
/// outcome and places its children at types `i + k - 1`. Large same-type blocks
/// are advanced by one multinomial split instead of per-particle draws; the
/// resulting offspring distribution is identical.
pub fn step(pop: &Population, law: &OffspringLaw, rng: &mut ChaCha8Rng) -> Population {
    let mut next = BTreeMap::new();
    for (&ty, &count) in &pop.counts {
        if count >= BATCH_THRESHOLD {
            let split = multinomial_split(count, law, rng);
            for (entry_idx, &n) in split.iter().enumerate() {
                if n > 0 {
                    place_children(&mut next, ty, entry_idx, n, law);
                }
            }
        } else {
            for _ in 0..count {
                let entry_idx = sample_entry(law, rng.random::<f64>());
                place_children(&mut next, ty, entry_idx, 1, law);
            }
        }
    }
    let total = next.values().sum();
    Population {
        counts: next,
        generation: pop.generation + 1,
        total,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TrialOutcome {
    /// Population emptied at this generation.
    ExtinctAt(u32),
    /// The tracked typeset emptied irreversibly while the population survives.
    LocalExtinct(u32),
    /// Caps hit with the population (and typeset, where tracked) still alive.
    Survived,
}

fn rng_for_trial(seed: u64, trial_index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(trial_index);
    rng
}

/// Run one trial to a definite outcome or to the caps.
///
/// Global: extinct when the population empties, survived at the caps.
/// Finite range: locally extinct once every particle sits above the range
/// (irreversible, since types never decrease); a globally extinct trial counts
/// through its `ExtinctAt` outcome.
/// Arithmetic typeset: the event is asymptotic, so the trial is classified by
/// its global outcome — survivors stand proxy for local survival.
pub fn run_trial(law: &OffspringLaw, config: &SimConfig, trial_index: u64) -> TrialOutcome {
    let mut rng = rng_for_trial(config.seed, trial_index);
    let mut pop = Population::single(config.initial_type);
    loop {
        if pop.is_empty() {
            return TrialOutcome::ExtinctAt(pop.generation);
        }
        if let TypesetSpec::FiniteRange { hi, .. } = config.typeset {
            if pop.min_type().expect("non-empty") > hi {
                return TrialOutcome::LocalExtinct(pop.generation);
            }
        }
        if pop.generation >= config.max_generations || pop.total > config.max_population {
            return TrialOutcome::Survived;
        }
        pop = step(&pop, law, &mut rng);
    }
}

/// Commutative trial tally; merging shards equals running the full range.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct TrialTally {
    pub extinct: u64,
    pub survived: u64,
    pub local_extinct_global_alive: u64,
}

impl TrialTally {
    fn record(mut self, outcome: TrialOutcome) -> Self {
        match outcome {
            TrialOutcome::ExtinctAt(_) => self.extinct += 1,
            TrialOutcome::LocalExtinct(_) => self.local_extinct_global_alive += 1,
            TrialOutcome::Survived => self.survived += 1,
        }
        self
    }

    pub fn merge(self, other: TrialTally) -> TrialTally {
        TrialTally {
            extinct: self.extinct + other.extinct,
            survived: self.survived + other.survived,
            local_extinct_global_alive: self.local_extinct_global_alive
                + other.local_extinct_global_alive,
        }
    }

    pub fn trials(&self) -> u64 {
        self.extinct + self.survived + self.local_extinct_global_alive
    }
}

/// Tally a contiguous range of trial indices, sequentially.
pub fn run_shard_sequential(
    law: &OffspringLaw,
    config: &SimConfig,
    range: std::ops::Range<u64>,
) -> TrialTally {
    range.fold(TrialTally::default(), |t, i| {
        t.record(run_trial(law, config, i))
    })
}

#[cfg(feature = "parallel")]
/// Tally a contiguous range of trial indices over the rayon pool.
pub fn run_shard(
    law: &OffspringLaw,
    config: &SimConfig,
    range: std::ops::Range<u64>,
) -> TrialTally {
    use rayon::prelude::*;
    range
        .into_par_iter()
        .fold(TrialTally::default, |t, i| {
            t.record(run_trial(law, config, i))
        })
        .reduce(TrialTally::default, TrialTally::merge)
}

#[cfg(not(feature = "parallel"))]
pub fn run_shard(
    law: &OffspringLaw,
    config: &SimConfig,
    range: std::ops::Range<u64>,
) -> TrialTally {
    run_shard_sequential(law, config, range)
}

/// Monte Carlo extinction estimate with a Wilson 95% interval.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ExtinctionEstimate {
    pub config: SimConfig,
    pub p_hat: f64,
    pub wilson_ci_95: (f64, f64),
    pub counts: TrialTally,
    /// True when any trial hit the caps: survivors are censored observations,
    /// biasing the extinction estimate down by far less than the interval width
    /// at the default caps.
    pub censored: bool,
}

fn wilson_interval(successes: u64, n: u64) -> (f64, f64) {
    let n = n as f64;
    let p = successes as f64 / n;
    let z2 = Z_95 * Z_95;
    let denom = 1.0 + z2 / n;
    let center = p + z2 / (2.0 * n);
    let rad = Z_95 * (p * (1.0 - p) / n + z2 / (4.0 * n * n)).sqrt();
    (
        ((center - rad) / denom).max(0.0),
        ((center + rad) / denom).min(1.0),
    )
}

fn estimate_from_tally(config: &SimConfig, counts: TrialTally) -> ExtinctionEstimate {
    let trials = counts.trials();
    assert!(trials >= 1, "estimate needs at least one trial");
    let successes = match config.typeset {
        TypesetSpec::Global | TypesetSpec::Arithmetic { .. } => counts.extinct,
        TypesetSpec::FiniteRange { .. } => counts.extinct + counts.local_extinct_global_alive,
    };
    ExtinctionEstimate {
        config: *config,
        p_hat: successes as f64 / trials as f64,
        wilson_ci_95: wilson_interval(successes, trials),
        counts,
        censored: counts.survived > 0,
    }
}

/// Estimate the extinction probability for the configured typeset. Uses the
/// rayon pool when the `parallel` feature is on.
pub fn estimate_extinction(law: &OffspringLaw, config: &SimConfig) -> ExtinctionEstimate {
    estimate_from_tally(config, run_shard(law, config, 0..config.trials))
}

/// Sequential twin of [`estimate_extinction`]; bit-identical results.
pub fn estimate_extinction_sequential(
    law: &OffspringLaw,
    config: &SimConfig,
) -> ExtinctionEstimate {
    estimate_from_tally(config, run_shard_sequential(law, config, 0..config.trials))
}
