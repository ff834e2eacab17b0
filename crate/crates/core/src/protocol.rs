//! Time-stepped Monte Carlo engine for one buffer window of a first-level
//! repeater: two end nodes with `M` memories each and one swapping station.
//!
//! Every step, each link side first purifies until at most one pair is left
//! and then lets all free memories attempt generation. After `N_buffer`
//! steps a final purification round runs and, if both sides hold a pair, a
//! single swap is attempted.
//!
//! Fidelities are updated lazily: a stored pair is decayed only right before
//! it takes part in purification or swapping, by the number of steps since
//! its last update.
//!
//! Each trial draws from its own ChaCha8 stream selected by the trial index,
//! so batch results do not depend on how trials are scheduled across threads.

use std::collections::BTreeMap;
use std::fmt;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::ops::{self, GenerationParams, OperationNoise};
use crate::states::{MemoryQuality, NoisyBellState, StateFamily};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
pub enum Side {
    Left,
    Right,
}

impl fmt::Display for Side {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.pad(match self {
            Side::Left => "left",
            Side::Right => "right",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StoredPair {
    pub side: Side,
    /// Index of the end-node memory holding this pair.
    pub memory: usize,
    pub state: NoisyBellState,
    pub created_step: u64,
    pub last_update_step: u64,
}

impl StoredPair {
    fn refresh(&mut self, step: u64, quality: &MemoryQuality) {
        debug_assert!(step >= self.last_update_step);
        self.state = self.state.decayed(step - self.last_update_step, quality);
        self.last_update_step = step;
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimConfig {
    pub family: StateFamily,
    pub generation: GenerationParams,
    pub noise: OperationNoise,
    pub quality: MemoryQuality,
    /// Memories per end node.
    pub memories: usize,
    /// Buffer window length in time steps.
    pub buffer_steps: u64,
    pub trials: u64,
    pub seed: u64,
}

impl SimConfig {
    pub fn validate(&self) -> Result<()> {
        self.generation.validate()?;
        self.noise.check_supported(self.family)?;
        if self.memories == 0 {
            return Err(Error::Usage(
                "at least one memory per end node is required".into(),
            ));
        }
        if self.buffer_steps == 0 {
            return Err(Error::Usage("buffer time must be at least one step".into()));
        }
        if self.trials == 0 {
            return Err(Error::Usage("at least one trial is required".into()));
        }
        Ok(())
    }

    /// Buffer window length in seconds.
    pub fn buffer_time(&self) -> f64 {
        self.buffer_steps as f64 * self.quality.tau()
    }

    pub fn with_buffer_steps(&self, buffer_steps: u64) -> Self {
        Self {
            buffer_steps,
            ..self.clone()
        }
    }

    pub fn with_memories(&self, memories: usize) -> Self {
        Self {
            memories,
            ..self.clone()
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TrialOutcome {
    pub success: bool,
    /// Delivered fidelity, or [`TrialOutcome::FAILED`] when nothing was
    /// delivered.
    pub fidelity: f64,
    pub purifications_left: u32,
    pub purifications_right: u32,
}

impl TrialOutcome {
    pub const FAILED: f64 = -1.0;

    pub fn purifications(&self) -> u32 {
        self.purifications_left + self.purifications_right
    }
}

/// Something that happened during a trial, reported to an observer.
#[derive(Debug, Clone, PartialEq)]
pub enum Event {
    Generated {
        step: u64,
        side: Side,
        memory: usize,
        fidelity: f64,
    },
    Purified {
        step: u64,
        side: Side,
        kept_memory: usize,
        sacrificed_memory: usize,
        /// Input fidelities after decay to `step`.
        kept_fidelity: f64,
        sacrificed_fidelity: f64,
        success_prob: f64,
        /// Output fidelity on success.
        outcome: Option<f64>,
    },
    Swapped {
        step: u64,
        left_fidelity: f64,
        right_fidelity: f64,
        outcome: Option<f64>,
    },
    SwapSkipped {
        step: u64,
        left_pairs: usize,
        right_pairs: usize,
    },
}

impl fmt::Display for Event {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match *self {
            Event::Generated {
                step,
                side,
                memory,
                fidelity,
            } => write!(
                f,
                "step {step:>3} {side:<5} generate   memory {memory} F={fidelity:.6}"
            ),
            Event::Purified {
                step,
                side,
                kept_memory,
                sacrificed_memory,
                kept_fidelity,
                sacrificed_fidelity,
                success_prob,
                outcome,
            } => {
                write!(
                    f,
                    "step {step:>3} {side:<5} purify     keep memory {kept_memory} (F={kept_fidelity:.6}) \
                     sacrifice memory {sacrificed_memory} (F={sacrificed_fidelity:.6}) p={success_prob:.6} -> "
                )?;
                match outcome {
                    Some(out) => write!(f, "success F={out:.6}"),
                    None => write!(f, "failure, both freed"),
                }
            }
            Event::Swapped {
                step,
                left_fidelity,
                right_fidelity,
                outcome,
            } => {
                write!(
                    f,
                    "step {step:>3}       swap       left F={left_fidelity:.6} right F={right_fidelity:.6} -> "
                )?;
                match outcome {
                    Some(out) => write!(f, "success F={out:.6}"),
                    None => write!(f, "failure"),
                }
            }
            Event::SwapSkipped {
                step,
                left_pairs,
                right_pairs,
            } => write!(
                f,
                "step {step:>3}       no swap    left holds {left_pairs}, right holds {right_pairs}"
            ),
        }
    }
}

/// Pairs and memories of one elementary link, seen from its end node.
#[derive(Debug, Clone)]
pub struct LinkSide {
    side: Side,
    /// Ordered by creation step, oldest first.
    pairs: Vec<StoredPair>,
    occupied: Vec<bool>,
    purification_attempts: u32,
}

impl LinkSide {
    fn new(side: Side, memories: usize) -> Self {
        Self {
            side,
            pairs: Vec::with_capacity(memories),
            occupied: vec![false; memories],
            purification_attempts: 0,
        }
    }

    pub fn side(&self) -> Side {
        self.side
    }

    pub fn pairs(&self) -> &[StoredPair] {
        &self.pairs
    }

    pub fn capacity(&self) -> usize {
        self.occupied.len()
    }

    pub fn free_memories(&self) -> usize {
        self.occupied.iter().filter(|&&o| !o).count()
    }

    pub fn purification_attempts(&self) -> u32 {
        self.purification_attempts
    }

    /// Held pairs and free memories add up to the capacity, and every pair
    /// sits on its own occupied memory.
    pub fn memory_is_consistent(&self) -> bool {
        if self.pairs.len() + self.free_memories() != self.capacity() {
            return false;
        }
        let mut seen = vec![false; self.capacity()];
        self.pairs.iter().all(|p| {
            let ok = p.side == self.side && self.occupied[p.memory] && !seen[p.memory];
            seen[p.memory] = true;
            ok
        })
    }
}

/// A validated configuration with precomputed generation tables.
#[derive(Debug, Clone)]
pub struct Simulator {
    config: SimConfig,
    seed_key: [u8; 32],
    generation_prob: f64,
    /// `generation_cdf[f][k] = P(at most k successes among f attempts)`.
    generation_cdf: Vec<Vec<f64>>,
}

impl Simulator {
    pub fn new(config: SimConfig) -> Result<Self> {
        config.validate()?;
        let generation_prob = config.generation.success_prob();
        let generation_cdf = (0..=config.memories)
            .map(|f| binomial_cdf(f, generation_prob))
            .collect();
        let mut seed_key = [0u8; 32];
        ChaCha8Rng::seed_from_u64(config.seed).fill(&mut seed_key);
        Ok(Self {
            config,
            seed_key,
            generation_prob,
            generation_cdf,
        })
    }

    pub fn config(&self) -> &SimConfig {
        &self.config
    }

    pub fn generation_prob(&self) -> f64 {
        self.generation_prob
    }

    /// The random stream used by trial number `trial` of a batch.
    pub fn trial_rng(&self, trial: u64) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::from_seed(self.seed_key);
        rng.set_stream(trial);
        rng
    }

    pub fn start_trial<R: Rng>(&self, rng: R) -> Trial<'_, R> {
        Trial {
            sim: self,
            rng,
            step: 0,
            left: LinkSide::new(Side::Left, self.config.memories),
            right: LinkSide::new(Side::Right, self.config.memories),
        }
    }

    pub fn run_trial<R: Rng>(&self, rng: &mut R) -> TrialOutcome {
        self.run_trial_traced(rng, |_| {})
    }

    pub fn run_trial_traced<R: Rng, O: FnMut(&Event)>(
        &self,
        rng: &mut R,
        mut observer: O,
    ) -> TrialOutcome {
        let mut trial = self.start_trial(rng);
        while !trial.window_elapsed() {
            trial.advance(&mut observer);
        }
        trial.finish(&mut observer)
    }

    /// Runs all configured trials. The result depends only on the
    /// configuration, not on the size of the current rayon pool.
    pub fn run_batch(&self) -> BatchResult {
        let outcomes: Vec<TrialOutcome> = (0..self.config.trials)
            .into_par_iter()
            .map(|i| self.run_trial(&mut self.trial_rng(i)))
            .collect();
        BatchResult::from_outcomes(&outcomes)
    }

    fn draw_generated<R: Rng>(&self, free: usize, rng: &mut R) -> usize {
        let u: f64 = rng.random();
        let cdf = &self.generation_cdf[free];
        cdf.iter().position(|&c| u < c).unwrap_or(free)
    }
}

fn binomial_cdf(n: usize, p: f64) -> Vec<f64> {
    let mut pmf = vec![0.0; n + 1];
    pmf[0] = 1.0;
    for _ in 0..n {
        for k in (0..=n).rev() {
            let stay = pmf[k] * (1.0 - p);
            let up = if k > 0 { pmf[k - 1] * p } else { 0.0 };
            pmf[k] = stay + up;
        }
    }
    let mut acc = 0.0;
    let mut cdf: Vec<f64> = pmf
        .iter()
        .map(|m| {
            acc += m;
            acc
        })
        .collect();
    // Guard against rounding leaving the last entry just below 1.
    cdf[n] = f64::INFINITY;
    cdf
}

/// One buffer window in progress.
#[derive(Debug)]
pub struct Trial<'a, R> {
    sim: &'a Simulator,
    rng: R,
    step: u64,
    left: LinkSide,
    right: LinkSide,
}

impl<R: Rng> Trial<'_, R> {
    /// Index of the next step to run; equals `N_buffer` once the window has
    /// elapsed.
    pub fn step(&self) -> u64 {
        self.step
    }

    pub fn side(&self, side: Side) -> &LinkSide {
        match side {
            Side::Left => &self.left,
            Side::Right => &self.right,
        }
    }

    pub fn window_elapsed(&self) -> bool {
        self.step >= self.sim.config.buffer_steps
    }

    /// Runs one time step: purification then generation on each side.
    pub fn advance<O: FnMut(&Event)>(&mut self, observer: &mut O) {
        assert!(!self.window_elapsed(), "buffer window already elapsed");
        let step = self.step;
        for side in [Side::Left, Side::Right] {
            self.purify_side(side, step, observer);
            self.generate_side(side, step, observer);
        }
        self.step += 1;
    }

    /// Final purification round and swap at step `N_buffer`.
    pub fn finish<O: FnMut(&Event)>(mut self, observer: &mut O) -> TrialOutcome {
        while !self.window_elapsed() {
            self.advance(observer);
        }
        let step = self.step;
        self.purify_side(Side::Left, step, observer);
        self.purify_side(Side::Right, step, observer);

        let cfg = &self.sim.config;
        let mut outcome = TrialOutcome {
            success: false,
            fidelity: TrialOutcome::FAILED,
            purifications_left: self.left.purification_attempts,
            purifications_right: self.right.purification_attempts,
        };
        match (
            self.left.pairs.as_mut_slice(),
            self.right.pairs.as_mut_slice(),
        ) {
            ([left], [right]) => {
                left.refresh(step, &cfg.quality);
                right.refresh(step, &cfg.quality);
                let heralded = self.rng.random::<f64>() < cfg.generation.swap_success;
                let delivered = heralded.then(|| {
                    ops::swap(&left.state, &right.state, &cfg.noise)
                        .expect("configuration validated")
                        .fidelity()
                });
                observer(&Event::Swapped {
                    step,
                    left_fidelity: left.state.fidelity(),
                    right_fidelity: right.state.fidelity(),
                    outcome: delivered,
                });
                if let Some(fidelity) = delivered {
                    outcome.success = true;
                    outcome.fidelity = fidelity;
                }
            }
            (l, r) => observer(&Event::SwapSkipped {
                step,
                left_pairs: l.len(),
                right_pairs: r.len(),
            }),
        }
        outcome
    }

    fn purify_side<O: FnMut(&Event)>(&mut self, side: Side, step: u64, observer: &mut O) {
        let cfg = &self.sim.config;
        let link = match side {
            Side::Left => &mut self.left,
            Side::Right => &mut self.right,
        };
        while link.pairs.len() >= 2 {
            let mut older = link.pairs.remove(0);
            let mut newer = link.pairs.remove(0);
            older.refresh(step, &cfg.quality);
            newer.refresh(step, &cfg.quality);
            link.purification_attempts += 1;
            let (kept_fidelity, sacrificed_fidelity) =
                (newer.state.fidelity(), older.state.fidelity());

            let result = ops::purify(&newer.state, &older.state, &cfg.noise)
                .expect("configuration validated");
            let success = self.rng.random::<f64>() < result.success_prob;
            link.occupied[older.memory] = false;
            let event_outcome = if success {
                let out = result.state.fidelity();
                newer.state = result.state;
                link.pairs.insert(0, newer);
                Some(out)
            } else {
                link.occupied[newer.memory] = false;
                None
            };
            observer(&Event::Purified {
                step,
                side,
                kept_memory: newer.memory,
                sacrificed_memory: older.memory,
                kept_fidelity,
                sacrificed_fidelity,
                success_prob: result.success_prob,
                outcome: event_outcome,
            });
        }
    }

    fn generate_side<O: FnMut(&Event)>(&mut self, side: Side, step: u64, observer: &mut O) {
        let link = match side {
            Side::Left => &mut self.left,
            Side::Right => &mut self.right,
        };
        let free = link.free_memories();
        if free == 0 {
            return;
        }
        let generated = self.sim.draw_generated(free, &mut self.rng);
        if generated == 0 {
            return;
        }
        let cfg = &self.sim.config;
        let fresh = NoisyBellState::new(cfg.family, cfg.generation.raw_fidelity)
            .expect("configuration validated");
        let slots: Vec<usize> = (0..link.capacity())
            .filter(|&m| !link.occupied[m])
            .take(generated)
            .collect();
        for memory in slots {
            link.occupied[memory] = true;
            link.pairs.push(StoredPair {
                side,
                memory,
                state: fresh,
                created_step: step,
                last_update_step: step,
            });
            observer(&Event::Generated {
                step,
                side,
                memory,
                fidelity: fresh.fidelity(),
            });
        }
    }
}

/// Aggregated outcome of a batch of trials.
#[derive(Debug, Clone, PartialEq)]
pub struct BatchResult {
    pub trials: u64,
    /// Successful trials, in trial order.
    pub delivered: Vec<TrialOutcome>,
    /// Number of trials per purification-attempt count, per side.
    pub purifications_left: BTreeMap<u32, u64>,
    pub purifications_right: BTreeMap<u32, u64>,
}

impl BatchResult {
    pub fn from_outcomes(outcomes: &[TrialOutcome]) -> Self {
        let mut result = Self {
            trials: outcomes.len() as u64,
            delivered: Vec::new(),
            purifications_left: BTreeMap::new(),
            purifications_right: BTreeMap::new(),
        };
        for o in outcomes {
            *result
                .purifications_left
                .entry(o.purifications_left)
                .or_default() += 1;
            *result
                .purifications_right
                .entry(o.purifications_right)
                .or_default() += 1;
            if o.success {
                result.delivered.push(*o);
            }
        }
        result
    }

    pub fn successes(&self) -> u64 {
        self.delivered.len() as u64
    }

    pub fn success_prob(&self) -> f64 {
        if self.trials == 0 {
            0.0
        } else {
            self.successes() as f64 / self.trials as f64
        }
    }

    /// Fidelities of the delivered pairs.
    pub fn fidelities(&self) -> Vec<f64> {
        self.delivered.iter().map(|o| o.fidelity).collect()
    }
}

pub fn run_trial<R: Rng>(config: &SimConfig, rng: &mut R) -> Result<TrialOutcome> {
    Ok(Simulator::new(config.clone())?.run_trial(rng))
}

pub fn run_batch(config: &SimConfig) -> Result<BatchResult> {
    Ok(Simulator::new(config.clone())?.run_batch())
}
