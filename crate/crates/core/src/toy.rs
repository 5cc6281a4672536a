//! The reflecting random walk on `{0, ..., n}` driven by one fair coin per
//! step, with its exact CFTP sampler and three broken variants that are kept
//! on purpose to demonstrate their bias.

use crate::cftp::{run_monotone_cftp, BoundPair, CftpOptions, MonotoneModel, RunDiagnostics};
use crate::error::{param, Error, Result};
use crate::rng::{uniform01, StreamPath};

const FRESH_CHANNEL: u64 = 1;
const FORWARD_CHANNEL: u64 = 2;
/// Forward runs give up after this many steps.
const FORWARD_STEP_LIMIT: u64 = 1 << 40;

/// The randomizing operation: step by `u` and clamp to `[0, n]`.
pub fn toy_phi(x: u32, u: i8, n: u32) -> u32 {
    let y = x as i64 + u as i64;
    y.clamp(0, n as i64) as u32
}

/// The coin at a path: -1 or +1 with probability 1/2 each.
pub fn coin(path: StreamPath) -> i8 {
    if uniform01(path) < 0.5 {
        -1
    } else {
        1
    }
}

#[derive(Debug, Clone, Copy)]
pub struct ToyWalk {
    pub n: u32,
}

impl ToyWalk {
    pub fn new(n: u32) -> Result<Self> {
        if n == 0 {
            return param("toy walk needs n >= 1");
        }
        Ok(Self { n })
    }
}

impl MonotoneModel for ToyWalk {
    type State = u32;

    fn initial_bounds(&self) -> BoundPair<u32> {
        BoundPair::new(0, self.n)
    }

    fn update(&self, b: &mut BoundPair<u32>, at: StreamPath) -> Result<()> {
        let u = coin(at);
        b.lower = toy_phi(b.lower, u, self.n);
        b.upper = toy_phi(b.upper, u, self.n);
        Ok(())
    }

    fn is_coalesced(&self, b: &BoundPair<u32>) -> bool {
        b.lower == b.upper
    }
}

/// Exact uniform sample on `{0, ..., n}`; only the top and bottom
/// trajectories are tracked.
pub fn run_toy_cftp(n: u32, seed: u64) -> Result<(u32, RunDiagnostics)> {
    run_monotone_cftp(&ToyWalk::new(n)?, seed, CftpOptions::default())
}

/// Biased: CFTP that draws brand-new coins for every start time instead of
/// reusing the old ones.
pub fn run_fresh_coins_variant(n: u32, seed: u64) -> Result<u32> {
    let walk = ToyWalk::new(n)?;
    let base = StreamPath::new(seed).with_channel(FRESH_CHANNEL);
    for attempt in 0..40u64 {
        let start = 1u64 << attempt;
        let mut b = walk.initial_bounds();
        for t in (1..=start).rev() {
            walk.update(&mut b, base.with_epoch(attempt).with_step(t))?;
        }
        if walk.is_coalesced(&b) {
            return Ok(b.lower);
        }
    }
    Err(Error::NonCoalescence {
        limit: 40,
        unit: "fresh-coin attempts",
    })
}

/// Runs every state forward from time 0 until they coincide; returns the
/// coalescence time and the common trajectory's sample path continuation.
fn forward_to_coalescence(walk: &ToyWalk, base: StreamPath) -> Result<(u64, u32)> {
    let mut states: Vec<u32> = (0..=walk.n).collect();
    for t in 1..=FORWARD_STEP_LIMIT {
        let u = coin(base.with_step(t));
        for x in states.iter_mut() {
            *x = toy_phi(*x, u, walk.n);
        }
        if states.iter().all(|&x| x == states[0]) {
            return Ok((t, states[0]));
        }
    }
    Err(Error::NonCoalescence {
        limit: FORWARD_STEP_LIMIT,
        unit: "forward steps",
    })
}

/// Biased: run forward to the coalescence time `tau`, keep going to the first
/// power of two `>= tau`, and output that state.
pub fn run_forward_doubling_variant(n: u32, seed: u64) -> Result<u32> {
    let walk = ToyWalk::new(n)?;
    let base = StreamPath::new(seed).with_channel(FORWARD_CHANNEL);
    let (tau, mut x) = forward_to_coalescence(&walk, base)?;
    let stop = tau.next_power_of_two();
    for t in tau + 1..=stop {
        x = toy_phi(x, coin(base.with_step(t)), n);
    }
    Ok(x)
}

/// Biased: output the state at the forward coalescence time. Always 0 or n.
pub fn run_forward_coalescence_only(n: u32, seed: u64) -> Result<u32> {
    let walk = ToyWalk::new(n)?;
    forward_to_coalescence(&walk, StreamPath::new(seed).with_channel(FORWARD_CHANNEL)).map(|(_, x)| x)
}
