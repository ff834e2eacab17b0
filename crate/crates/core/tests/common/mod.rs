//! Protocol invariant checks shared by the property tests and the
//! acceptance run.

#![allow(dead_code)]

use std::collections::BTreeMap;

use proptest::prelude::*;
use repeater_core::ops;
use repeater_core::protocol::{BatchResult, Event, Side, SimConfig, Simulator, StoredPair};
use repeater_core::{GenerationParams, MemoryQuality, NoisyBellState, OperationNoise, StateFamily};

pub const SIDES: [Side; 2] = [Side::Left, Side::Right];

fn side_index(side: Side) -> usize {
    match side {
        Side::Left => 0,
        Side::Right => 1,
    }
}

/// Random but valid simulator configurations, including certain generation
/// so that memories fill up and purification chains get long.
pub fn sim_configs(trials: u64) -> impl Strategy<Value = SimConfig> {
    let family = prop_oneof![Just(StateFamily::Dephased), Just(StateFamily::Werner)];
    let length = prop_oneof![Just(1e-300), 0.1..40.0f64];
    (
        family,
        length,
        0.0..=1.0f64,
        0.5..=1.0f64,
        0.0..=1.0f64,
        (0.7..=1.0f64, 0.7..=1.0f64),
        0.0..20.0f64,
        1e-4..1e-2f64,
        1usize..=6,
        1u64..=40,
        any::<u64>(),
    )
        .prop_map(
            move |(family, l0, eta_h, f0, p_s, (p, eta), kappa, tau, memories, buffer, seed)| {
                SimConfig {
                    family,
                    generation: GenerationParams {
                        link_length_km: l0,
                        attenuation_length_km: 20.0,
                        hardware_efficiency: eta_h,
                        raw_fidelity: f0,
                        swap_success: p_s,
                    },
                    noise: match family {
                        StateFamily::Dephased => OperationNoise::perfect(),
                        StateFamily::Werner => OperationNoise::new(p, eta).unwrap(),
                    },
                    quality: MemoryQuality::new(kappa, tau).unwrap(),
                    memories,
                    buffer_steps: buffer,
                    trials,
                    seed,
                }
            },
        )
}

/// Expected contents of one end node, rebuilt from the event stream.
#[derive(Debug, Clone, Default)]
struct Shadow {
    /// memory -> (state, created_step, last_update_step)
    pairs: BTreeMap<usize, (NoisyBellState, u64, u64)>,
}

impl Shadow {
    fn take(
        &mut self,
        memory: usize,
        step: u64,
        quality: &MemoryQuality,
    ) -> Result<(NoisyBellState, u64), String> {
        let (state, created, last) = self
            .pairs
            .remove(&memory)
            .ok_or_else(|| format!("memory {memory} used while empty"))?;
        Ok((state.decayed(step - last, quality), created))
    }

    fn matches(&self, actual: &[StoredPair]) -> bool {
        actual.len() == self.pairs.len()
            && actual.iter().all(|p| {
                self.pairs.get(&p.memory) == Some(&(p.state, p.created_step, p.last_update_step))
            })
    }
}

/// Replays `events` on the shadows, checking every purification input
/// against lazy decay of the stored state and every output against `ops`.
fn replay(shadows: &mut [Shadow; 2], events: &[Event], cfg: &SimConfig) -> Result<(), String> {
    for event in events {
        match *event {
            Event::Generated {
                step,
                side,
                memory,
                fidelity,
            } => {
                let shadow = &mut shadows[side_index(side)];
                if shadow.pairs.len() >= cfg.memories || fidelity != cfg.generation.raw_fidelity {
                    return Err(format!("bad generation {event:?}"));
                }
                let state = NoisyBellState::new(cfg.family, fidelity).unwrap();
                if shadow.pairs.insert(memory, (state, step, step)).is_some() {
                    return Err(format!("generated into occupied memory {event:?}"));
                }
            }
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
                let shadow = &mut shadows[side_index(side)];
                let (kept, kept_created) = shadow.take(kept_memory, step, &cfg.quality)?;
                let (sacrificed, sacrificed_created) =
                    shadow.take(sacrificed_memory, step, &cfg.quality)?;
                if kept.fidelity() != kept_fidelity || sacrificed.fidelity() != sacrificed_fidelity
                {
                    return Err(format!(
                        "purification inputs are not lazily decayed states {event:?}"
                    ));
                }
                if kept_created < sacrificed_created {
                    return Err(format!("the earlier pair was kept {event:?}"));
                }
                let expected = ops::purify(&kept, &sacrificed, &cfg.noise).unwrap();
                if expected.success_prob != success_prob {
                    return Err(format!("success probability mismatch {event:?}"));
                }
                if let Some(out) = outcome {
                    if out != expected.state.fidelity() {
                        return Err(format!("purified fidelity mismatch {event:?}"));
                    }
                    shadow
                        .pairs
                        .insert(kept_memory, (expected.state, kept_created, step));
                }
            }
            Event::Swapped {
                step,
                left_fidelity,
                right_fidelity,
                outcome,
            } => {
                let mut inputs = [0.0; 2];
                let mut states = Vec::new();
                for (i, shadow) in shadows.iter_mut().enumerate() {
                    let memory = match shadow.pairs.keys().copied().collect::<Vec<_>>().as_slice() {
                        [m] => *m,
                        other => {
                            return Err(format!("swap with {} pairs on one side", other.len()))
                        }
                    };
                    let (state, _) = shadow.take(memory, step, &cfg.quality)?;
                    inputs[i] = state.fidelity();
                    states.push(state);
                }
                if inputs != [left_fidelity, right_fidelity] {
                    return Err(format!(
                        "swap inputs are not lazily decayed states {event:?}"
                    ));
                }
                if let Some(out) = outcome {
                    if out
                        != ops::swap(&states[0], &states[1], &cfg.noise)
                            .unwrap()
                            .fidelity()
                    {
                        return Err(format!("swapped fidelity mismatch {event:?}"));
                    }
                }
            }
            Event::SwapSkipped {
                left_pairs,
                right_pairs,
                ..
            } => {
                let held = [shadows[0].pairs.len(), shadows[1].pairs.len()];
                if held != [left_pairs, right_pairs] || held == [1, 1] {
                    return Err(format!("swap skipped while holding {held:?} {event:?}"));
                }
            }
        }
    }
    Ok(())
}

/// Steps one trial by hand and checks memory conservation, the lazy-update
/// contract, at most one pair per side entering the swap, and that a single
/// memory never purifies. Also checks that the traced trial matches the
/// untraced one.
pub fn check_trial(sim: &Simulator, index: u64) -> Result<(), String> {
    let cfg = sim.config();
    let mut rng = sim.trial_rng(index);
    let mut trial = sim.start_trial(&mut rng);
    let mut shadows = [Shadow::default(), Shadow::default()];
    let fail = |step: u64, msg: String| format!("trial {index} step {step}: {msg}");

    while !trial.window_elapsed() {
        let step = trial.step();
        let mut events = Vec::new();
        trial.advance(&mut |e: &Event| events.push(e.clone()));
        replay(&mut shadows, &events, cfg).map_err(|m| fail(step, m))?;
        for side in SIDES {
            let link = trial.side(side);
            if !link.memory_is_consistent()
                || link.pairs().len() + link.free_memories() != cfg.memories
            {
                return Err(fail(step, format!("{side}: memory accounting broken")));
            }
            if !shadows[side_index(side)].matches(link.pairs()) {
                return Err(fail(
                    step,
                    format!("{side}: stored pairs changed outside an operation"),
                ));
            }
            if cfg.memories == 1 && link.purification_attempts() != 0 {
                return Err(fail(step, "purification with a single memory".into()));
            }
        }
    }

    let step = trial.step();
    let mut events = Vec::new();
    let outcome = trial.finish(&mut |e: &Event| events.push(e.clone()));
    let swap_at = events
        .iter()
        .position(|e| matches!(e, Event::Swapped { .. } | Event::SwapSkipped { .. }))
        .ok_or_else(|| fail(step, "no swap decision".into()))?;
    if swap_at != events.len() - 1 {
        return Err(fail(step, "events after the swap decision".into()));
    }
    replay(&mut shadows, &events[..swap_at], cfg).map_err(|m| fail(step, m))?;
    let held = [shadows[0].pairs.len(), shadows[1].pairs.len()];
    if held.iter().any(|&h| h > 1) {
        return Err(fail(step, format!("{held:?} pairs entering the swap")));
    }
    replay(&mut shadows, &events[swap_at..], cfg).map_err(|m| fail(step, m))?;
    let delivered = matches!(
        events[swap_at],
        Event::Swapped {
            outcome: Some(_),
            ..
        }
    );
    if delivered != outcome.success {
        return Err(fail(step, "outcome disagrees with the swap event".into()));
    }
    if cfg.memories == 1 && outcome.purifications() != 0 {
        return Err(fail(step, "purifications with M = 1".into()));
    }
    let untraced = sim.run_trial(&mut sim.trial_rng(index));
    if untraced != outcome {
        return Err(fail(
            step,
            format!("traced {outcome:?} vs untraced {untraced:?}"),
        ));
    }
    Ok(())
}

pub fn batch_on_threads(sim: &Simulator, threads: usize) -> BatchResult {
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .expect("thread pool builds")
        .install(|| sim.run_batch())
}

/// All invariants for every trial of `cfg`, plus batch equality on one and
/// several worker threads.
pub fn check_config(cfg: &SimConfig) -> Result<(), String> {
    let sim = Simulator::new(cfg.clone()).map_err(|e| e.to_string())?;
    for i in 0..cfg.trials {
        check_trial(&sim, i)?;
    }
    let single = batch_on_threads(&sim, 1);
    let multi = batch_on_threads(&sim, 4);
    if single != multi {
        return Err("batch differs between 1 and 4 threads".into());
    }
    if cfg.memories == 1
        && single
            .purifications_left
            .keys()
            .chain(single.purifications_right.keys())
            .any(|&k| k != 0)
    {
        return Err("batch reports purifications with M = 1".into());
    }
    Ok(())
}
