//! Coupling from the past.
//!
//! [`run_monotone_cftp`] is the doubling driver over a bound pair: start at
//! time `-1`, then `-2`, `-4`, ... until the bounds meet at time 0. The
//! randomness for time `-t` is addressed by `(epoch, step) = (ceil(log2 t), t)`
//! so every restart replays the same updates at the same times.
//!
//! [`run_composite_cftp`] handles models whose random maps can certify
//! coalescence by themselves: search back for the most recent coalescent map
//! and push its output forward.

use crate::error::{Error, Result};
use crate::rng::StreamPath;

/// Coordinatewise lower and upper bounds on the state of the chain.
#[derive(Debug, Clone, PartialEq)]
pub struct BoundPair<S> {
    pub lower: S,
    pub upper: S,
}

impl<S: PartialEq> BoundPair<S> {
    pub fn new(lower: S, upper: S) -> Self {
        Self { lower, upper }
    }
}

/// A chain that can be driven by monotone (or anti-monotone) CFTP.
///
/// `update` must be a deterministic function of the bounds and the path, and
/// must keep a coalesced pair coalesced.
pub trait MonotoneModel {
    type State: Clone;

    fn initial_bounds(&self) -> BoundPair<Self::State>;

    /// One randomizing operation applied to both bounds. `at` carries the
    /// master seed, epoch and step; the model fills in site/draw/channel.
    fn update(&self, bounds: &mut BoundPair<Self::State>, at: StreamPath) -> Result<()>;

    fn is_coalesced(&self, bounds: &BoundPair<Self::State>) -> bool;
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RunDiagnostics {
    /// Smallest start time in the final doubling window that coalesces.
    /// `None` when the search was switched off.
    pub t_star: Option<u64>,
    /// Updates simulated by the doubling schedule, `2^(K+1) - 1`.
    pub total_updates: u64,
    pub epochs_tried: u32,
}

#[derive(Debug, Clone, Copy)]
pub struct CftpOptions {
    pub max_epochs: u32,
    /// Bisect the last doubling window for the minimal coalescing start time.
    /// Costs about `log2(T) * T` extra updates, not counted in
    /// `total_updates`.
    pub resolve_t_star: bool,
}

impl Default for CftpOptions {
    fn default() -> Self {
        Self {
            max_epochs: 40,
            resolve_t_star: true,
        }
    }
}

/// Epoch of time `-t`: 0 for t = 1, otherwise `ceil(log2 t)`.
pub fn epoch_of(t: u64) -> u64 {
    debug_assert!(t >= 1);
    (64 - (t - 1).leading_zeros()) as u64
}

/// Runs the model from time `-start` to 0 from its initial bounds.
pub fn run_from<M: MonotoneModel>(
    model: &M,
    seed: u64,
    start: u64,
) -> Result<BoundPair<M::State>> {
    let mut bounds = model.initial_bounds();
    let base = StreamPath::new(seed);
    for t in (1..=start).rev() {
        model.update(&mut bounds, base.with_epoch(epoch_of(t)).with_step(t))?;
    }
    Ok(bounds)
}

/// Monotone CFTP with doubling start times. Returns the time-0 state.
pub fn run_monotone_cftp<M: MonotoneModel>(
    model: &M,
    seed: u64,
    opts: CftpOptions,
) -> Result<(M::State, RunDiagnostics)> {
    let mut total = 0u64;
    for epoch in 0..opts.max_epochs {
        let start = 1u64 << epoch;
        let bounds = run_from(model, seed, start)?;
        total += start;
        if model.is_coalesced(&bounds) {
            let t_star = if opts.resolve_t_star {
                Some(minimal_start(model, seed, start)?)
            } else {
                None
            };
            return Ok((
                bounds.lower,
                RunDiagnostics {
                    t_star,
                    total_updates: total,
                    epochs_tried: epoch + 1,
                },
            ));
        }
    }
    Err(Error::NonCoalescence {
        limit: 1u64 << opts.max_epochs.saturating_sub(1).min(63),
        unit: "steps back in time",
    })
}

/// Smallest start time in `(hi / 2, hi]` from which the model coalesces,
/// given that it does from `hi`.
fn minimal_start<M: MonotoneModel>(model: &M, seed: u64, hi: u64) -> Result<u64> {
    let (mut lo, mut hi) = (hi / 2, hi);
    while hi - lo > 1 {
        let mid = lo + (hi - lo) / 2;
        if model.is_coalesced(&run_from(model, seed, mid)?) {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Ok(hi)
}

/// One random map of a composite chain.
pub trait CompositeMap<S> {
    /// The common image when the map sends every state to one point.
    fn coalesced_output(&self) -> Option<&S>;

    fn apply(&self, state: &S) -> Result<S>;
}

/// Result of a composite run; `maps_back` is the index `T` of the first
/// coalescent map found going back in time.
#[derive(Debug, Clone, PartialEq)]
pub struct CompositeRun<S> {
    pub state: S,
    pub maps_back: u64,
}

/// CFTP over self-certifying random maps. `make(k)` builds the map at time
/// `-k`; each index is requested once and the maps are kept until the
/// forward pass.
pub fn run_composite_cftp<S, M, F>(mut make: F, max_maps: u64) -> Result<CompositeRun<S>>
where
    S: Clone,
    M: CompositeMap<S>,
    F: FnMut(u64) -> Result<M>,
{
    let mut later: Vec<M> = Vec::new();
    for back in 1..=max_maps {
        let map = make(back)?;
        if let Some(out) = map.coalesced_output() {
            let mut state = out.clone();
            for m in later.iter().rev() {
                state = m.apply(&state)?;
            }
            return Ok(CompositeRun {
                state,
                maps_back: back,
            });
        }
        later.push(map);
    }
    Err(Error::NonCoalescence {
        limit: max_maps,
        unit: "composite maps",
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::uniform01;

    #[test]
    fn epochs_of_times() {
        assert_eq!(epoch_of(1), 0);
        assert_eq!(epoch_of(2), 1);
        assert_eq!(epoch_of(3), 2);
        assert_eq!(epoch_of(4), 2);
        assert_eq!(epoch_of(5), 3);
        assert_eq!(epoch_of(1 << 40), 40);
    }

    struct Coin {
        p: f64,
        seed: u64,
    }

    struct CoinMap {
        out: Option<u64>,
        tag: u64,
    }

    impl CompositeMap<u64> for CoinMap {
        fn coalesced_output(&self) -> Option<&u64> {
            self.out.as_ref()
        }
        fn apply(&self, s: &u64) -> Result<u64> {
            Ok(self.out.unwrap_or(s.wrapping_mul(31).wrapping_add(self.tag)))
        }
    }

    impl Coin {
        fn map(&self, k: u64) -> Result<CoinMap> {
            let u = uniform01(StreamPath::new(self.seed).with_step(k));
            Ok(CoinMap {
                out: (u < self.p).then_some(k),
                tag: k,
            })
        }
    }

    #[test]
    fn composite_all_coalescent_takes_one_map() {
        let c = Coin { p: 1.0, seed: 1 };
        let run = run_composite_cftp(|k| c.map(k), 10).unwrap();
        assert_eq!(run.maps_back, 1);
        assert_eq!(run.state, 1);
    }

    #[test]
    fn composite_half_coalescent_mean_two() {
        let n = 10_000;
        let mut sum = 0u64;
        for seed in 0..n {
            let c = Coin { p: 0.5, seed };
            sum += run_composite_cftp(|k| c.map(k), 1000).unwrap().maps_back;
        }
        let mean = sum as f64 / n as f64;
        assert!((mean - 2.0).abs() < 0.05, "{mean}");
    }

    #[test]
    fn composite_pushes_forward_through_later_maps() {
        // map 3 coalesces to 3; maps 2 and 1 transform it in order
        struct Fixed;
        impl Fixed {
            fn map(&self, k: u64) -> Result<CoinMap> {
                Ok(CoinMap {
                    out: (k == 3).then_some(3),
                    tag: k,
                })
            }
        }
        let run = run_composite_cftp(|k| Fixed.map(k), 10).unwrap();
        assert_eq!(run.maps_back, 3);
        assert_eq!(run.state, (3 * 31 + 2) * 31 + 1);
        let err = run_composite_cftp(|k| Coin { p: 0.0, seed: 0 }.map(k), 5).unwrap_err();
        assert!(matches!(err, Error::NonCoalescence { limit: 5, .. }));
    }

    /// Never coalesces.
    struct Stuck;

    impl MonotoneModel for Stuck {
        type State = (u8, u8);
        fn initial_bounds(&self) -> BoundPair<(u8, u8)> {
            BoundPair::new((0, 0), (1, 1))
        }
        fn update(&self, _: &mut BoundPair<(u8, u8)>, _: StreamPath) -> Result<()> {
            Ok(())
        }
        fn is_coalesced(&self, b: &BoundPair<(u8, u8)>) -> bool {
            b.lower == b.upper
        }
    }

    #[test]
    fn monotone_gives_up_with_an_error() {
        let opts = CftpOptions {
            max_epochs: 6,
            resolve_t_star: false,
        };
        assert!(matches!(
            run_monotone_cftp(&Stuck, 0, opts),
            Err(Error::NonCoalescence { limit: 32, .. })
        ));
    }
}
