use crate::cftp::{run_monotone_cftp, BoundPair, CftpOptions, MonotoneModel, RunDiagnostics};
use crate::coupler::{normal_coupler, ShiftMap};
use crate::error::{param, Result};
use crate::rng::StreamPath;

use super::graph::{HeightConfig, InteractionGraph};

/// Initial half-width of the truncated sampler's box.
pub const DEFAULT_TRUNCATION: f64 = 1e6;

fn site_map(graph: &InteractionGraph, i: usize, at: StreamPath) -> Result<ShiftMap> {
    normal_coupler(graph.strength(i).powf(-0.5), at.with_site(i as u64))
}

/// One Gibbs sweep over the free sites applied to a bound pair, the same
/// normal shift map driving both bounds at each site. Negative springs take
/// the opposite bound, so the pair stays ordered for mixed-sign graphs too.
pub fn bound_sweep(
    graph: &InteractionGraph,
    bounds: &mut BoundPair<HeightConfig>,
    at: StreamPath,
) -> Result<()> {
    for i in (0..graph.len()).filter(|&i| i != graph.root()) {
        let map = site_map(graph, i, at)?;
        let (mut lo, mut hi) = (0.0, 0.0);
        for &(j, f) in graph.neighbors(i) {
            if f >= 0.0 {
                lo += bounds.lower[j] * f;
                hi += bounds.upper[j] * f;
            } else {
                lo += bounds.upper[j] * f;
                hi += bounds.lower[j] * f;
            }
        }
        let s = graph.strength(i);
        bounds.lower[i] = map.apply(lo / s);
        bounds.upper[i] = map.apply(hi / s);
    }
    Ok(())
}

/// The same sweep on a single configuration. For nonnegative springs it does
/// exactly the arithmetic `bound_sweep` does on each bound.
pub fn gibbs_sweep(graph: &InteractionGraph, x: &mut [f64], at: StreamPath) -> Result<()> {
    for i in (0..graph.len()).filter(|&i| i != graph.root()) {
        let map = site_map(graph, i, at)?;
        let mut acc = 0.0;
        for &(j, f) in graph.neighbors(i) {
            acc += x[j] * f;
        }
        x[i] = map.apply(acc / graph.strength(i));
    }
    Ok(())
}

pub fn bounds_coalesced(b: &BoundPair<HeightConfig>) -> bool {
    b.lower
        .iter()
        .zip(&b.upper)
        .all(|(l, u)| l.to_bits() == u.to_bits())
}

/// Gibbs sampler started from the box `[-bound, bound]` at every free site.
/// Only approximately exact: mass outside the box is ignored.
#[derive(Debug, Clone)]
pub struct TruncatedField<'a> {
    pub graph: &'a InteractionGraph,
    pub bound: f64,
}

impl MonotoneModel for TruncatedField<'_> {
    type State = HeightConfig;

    fn initial_bounds(&self) -> BoundPair<HeightConfig> {
        let root = self.graph.root();
        let fill = |v: f64| {
            (0..self.graph.len())
                .map(|i| if i == root { 0.0 } else { v })
                .collect::<Vec<_>>()
        };
        BoundPair::new(fill(-self.bound), fill(self.bound))
    }

    fn update(&self, bounds: &mut BoundPair<HeightConfig>, at: StreamPath) -> Result<()> {
        bound_sweep(self.graph, bounds, at)
    }

    fn is_coalesced(&self, bounds: &BoundPair<HeightConfig>) -> bool {
        bounds_coalesced(bounds)
    }
}

pub fn run_truncated_cftp(
    graph: &InteractionGraph,
    seed: u64,
    bound: f64,
) -> Result<(HeightConfig, RunDiagnostics)> {
    if !(bound > 0.0 && bound.is_finite()) {
        return param(format!("truncation bound must be positive and finite, got {bound}"));
    }
    graph.validate()?;
    run_monotone_cftp(&TruncatedField { graph, bound }, seed, CftpOptions::default())
}
