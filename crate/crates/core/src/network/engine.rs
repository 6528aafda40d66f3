//! Time-driven execution of a feed-forward TDE population.
//!
//! Events are binned to Euler steps (`floor(t / dt)`). Within a step every FAC
//! increment is applied before any TRG increment, then each unit takes one
//! Euler step and spikes are stamped with the step end time. Units are split
//! into contiguous ranges, one per worker; each worker replays the full event
//! sequence for its own units, so results do not depend on the partition.

use serde::{Deserialize, Serialize};

use super::{route, NetworkConfig, NetworkError, Port, Result};
use crate::events::EventStream;
use crate::tde::{Euler, TdeState};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct OutputSpike {
    /// Step end time, us.
    pub t: u64,
    pub unit_id: u32,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RunOptions {
    pub workers: usize,
    /// Stop after the last step ending at or before this time. Without it the
    /// run continues until every unit has returned to rest.
    pub until_us: Option<u64>,
}

impl Default for RunOptions {
    fn default() -> Self {
        Self { workers: 1, until_us: None }
    }
}

pub fn run(stream: &EventStream, config: &NetworkConfig) -> Result<Vec<OutputSpike>> {
    run_with(stream, config, RunOptions::default())
}

/// Output spikes sorted by `(t, unit_id)`.
pub fn run_with(stream: &EventStream, config: &NetworkConfig, options: RunOptions) -> Result<Vec<OutputSpike>> {
    if stream.geometry() != config.geometry {
        return Err(NetworkError::GeometryMismatch { stream: stream.geometry(), network: config.geometry });
    }
    if options.workers == 0 {
        return Err(NetworkError::Workers);
    }
    config.validate()?;
    let euler = Euler::new(config.params, config.dt)?;
    let n = config.len();
    if n == 0 {
        return Ok(Vec::new());
    }
    let routing = route(config);
    let workers = options.workers.min(n);
    let chunk = n.div_ceil(workers);
    let ranges: Vec<(usize, usize)> = (0..workers)
        .map(|w| (w * chunk, ((w + 1) * chunk).min(n)))
        .filter(|(lo, hi)| lo < hi)
        .collect();

    let job = |(lo, hi): (usize, usize)| {
        let inputs = collect_inputs(stream, config, &routing, lo, hi, euler.dt_us());
        simulate(&euler, &inputs, hi - lo, options.until_us)
            .into_iter()
            .map(|(t, local)| OutputSpike { t, unit_id: config.placements[lo + local as usize].unit_id })
            .collect::<Vec<_>>()
    };

    let mut spikes: Vec<OutputSpike> = if ranges.len() == 1 {
        job(ranges[0])
    } else {
        std::thread::scope(|scope| {
            let handles: Vec<_> = ranges.iter().map(|&r| scope.spawn(move || job(r))).collect();
            handles
                .into_iter()
                .flat_map(|h| h.join().expect("network worker panicked"))
                .collect()
        })
    };
    spikes.sort_unstable();
    Ok(spikes)
}

#[derive(Debug, Clone, Copy)]
struct Input {
    step: u64,
    unit: u32,
    port: Port,
}

fn collect_inputs(
    stream: &EventStream,
    config: &NetworkConfig,
    routing: &super::RoutingIndex,
    lo: usize,
    hi: usize,
    dt_us: u64,
) -> Vec<Input> {
    let mut inputs = Vec::new();
    for e in stream.events() {
        if !config.polarity.accepts(e.p) {
            continue;
        }
        let step = e.t / dt_us;
        for &(unit, port) in routing.targets(e.x, e.y) {
            let unit = unit as usize;
            if unit >= lo && unit < hi {
                inputs.push(Input { step, unit: (unit - lo) as u32, port });
            }
        }
    }
    inputs
}

/// Runs `units` fresh units over step-sorted inputs. Returns `(t, local unit)`.
fn simulate(euler: &Euler, inputs: &[Input], units: usize, until_us: Option<u64>) -> Vec<(u64, u32)> {
    let params = *euler.params();
    let dt_us = euler.dt_us();
    let mut states = vec![TdeState::default(); units];
    let mut is_active = vec![false; units];
    let mut active: Vec<u32> = Vec::new();
    let mut spikes = Vec::new();
    let mut cursor = 0usize;
    let mut k = match inputs.first() {
        Some(i) => i.step,
        None => return spikes,
    };

    loop {
        if active.is_empty() {
            // Nothing evolves until the next input.
            match inputs.get(cursor) {
                Some(i) => k = k.max(i.step),
                None => break,
            }
        }
        let now = (k + 1) * dt_us;
        if until_us.is_some_and(|u| now > u) {
            break;
        }

        let end = cursor + inputs[cursor..].partition_point(|i| i.step <= k);
        let batch = &inputs[cursor..end];
        for port in [Port::Fac, Port::Trg] {
            for input in batch.iter().filter(|i| i.port == port) {
                let u = input.unit as usize;
                match port {
                    Port::Fac => states[u].facilitate(&params),
                    Port::Trg => states[u].trigger(&params),
                }
                if !is_active[u] && !states[u].is_zero() {
                    is_active[u] = true;
                    active.push(input.unit);
                }
            }
        }
        cursor = end;

        // An all-zero state is a fixed point of the Euler step, so idle units
        // can be skipped without changing any result.
        active.retain(|&u| {
            let s = &mut states[u as usize];
            if euler.step(s, now) {
                spikes.push((now, u));
            }
            let keep = !s.is_zero();
            if !keep {
                is_active[u as usize] = false;
            }
            keep
        });
        k += 1;
    }
    spikes
}
