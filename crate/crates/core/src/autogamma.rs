//! Exact sampling from the autogamma random field.
//!
//! Given the other sites, `x_i` is `Gamma(alpha_i)` scaled down by
//! `beta_i + sum_j beta_ij x_j`. The field is repulsive, so CFTP tracks a
//! lower and an upper bound per site and feeds the neighbours' upper bounds
//! into the new lower bound and vice versa. The top state is plain IEEE
//! `+inf`: its inverse scale is `+inf`, the scale is `0`, and the multiscale
//! coupler maps `0` to `0`, so no special first sweep is needed.

use std::path::Path;

use crate::cftp::{run_monotone_cftp, BoundPair, CftpOptions, MonotoneModel, RunDiagnostics};
use crate::coupler::{gamma_scale_coupler, ScaledGammaMap};
use crate::error::{param, Error, Result};
use crate::rng::StreamPath;

/// The ten-pump reliability posterior as an autogamma field: site 0 is the
/// shared rate hyperparameter, sites 1..=10 the pump failure rates.
pub const PUMPS: &str = include_str!("../data/pumps.field");

#[derive(Debug, Clone, PartialEq)]
pub struct GammaField {
    alpha: Vec<f64>,
    beta: Vec<f64>,
    /// Nonzero interactions only; `beta_ij * inf` must never see a zero.
    neighbors: Vec<Vec<(usize, f64)>>,
}

impl GammaField {
    pub fn new(alpha: Vec<f64>, beta: Vec<f64>) -> Result<Self> {
        if alpha.len() != beta.len() || alpha.is_empty() {
            return param("alpha and beta must be non-empty and of equal length");
        }
        if let Some(i) = (0..alpha.len()).find(|&i| !(alpha[i] > 0.0 && beta[i] > 0.0)) {
            return param(format!(
                "site {i}: alpha and beta must be positive (got {}, {})",
                alpha[i], beta[i]
            ));
        }
        let n = alpha.len();
        Ok(Self {
            alpha,
            beta,
            neighbors: vec![Vec::new(); n],
        })
    }

    /// Adds a symmetric interaction `beta_ij` between sites `i` and `j`.
    pub fn add_pair(&mut self, i: usize, j: usize, beta_ij: f64) -> Result<()> {
        let n = self.len();
        if i >= n || j >= n || i == j {
            return param(format!("bad pair ({i}, {j}) for a field of {n} sites"));
        }
        if !(beta_ij >= 0.0 && beta_ij.is_finite()) {
            return param(format!("interaction must be finite and >= 0, got {beta_ij}"));
        }
        if self.neighbors[i].iter().any(|&(k, _)| k == j) {
            return param(format!("pair ({i}, {j}) given twice"));
        }
        if beta_ij > 0.0 {
            self.neighbors[i].push((j, beta_ij));
            self.neighbors[j].push((i, beta_ij));
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.alpha.len()
    }

    pub fn is_empty(&self) -> bool {
        self.alpha.is_empty()
    }

    pub fn alpha(&self, i: usize) -> f64 {
        self.alpha[i]
    }

    pub fn beta(&self, i: usize) -> f64 {
        self.beta[i]
    }

    pub fn neighbors(&self, i: usize) -> &[(usize, f64)] {
        &self.neighbors[i]
    }

    /// `beta_i + sum_j beta_ij x_j`; infinite heights give `+inf`.
    pub fn inv_scale(&self, i: usize, heights: &[f64]) -> f64 {
        self.neighbors[i]
            .iter()
            .fold(self.beta[i], |acc, &(j, b)| acc + b * heights[j])
    }

    /// Parses lines `site i alpha beta` and `pair i j beta_ij`; `#` starts a
    /// comment. Sites must be numbered `0..n` without gaps.
    pub fn parse(text: &str) -> Result<Self> {
        let mut sites: Vec<Option<(f64, f64)>> = Vec::new();
        let mut pairs = Vec::new();
        for (lineno, raw) in text.lines().enumerate() {
            let line = lineno + 1;
            let body = raw.split('#').next().unwrap_or("").trim();
            if body.is_empty() {
                continue;
            }
            let toks: Vec<&str> = body.split_whitespace().collect();
            let bad = |msg: String| Error::Parse { line, msg };
            match toks.as_slice() {
                ["site", i, a, b] => {
                    let i: usize = i.parse().map_err(|_| bad(format!("bad site index {i:?}")))?;
                    let a: f64 = a.parse().map_err(|_| bad(format!("bad alpha {a:?}")))?;
                    let b: f64 = b.parse().map_err(|_| bad(format!("bad beta {b:?}")))?;
                    if sites.len() <= i {
                        sites.resize(i + 1, None);
                    }
                    if sites[i].replace((a, b)).is_some() {
                        return Err(bad(format!("site {i} defined twice")));
                    }
                }
                ["pair", i, j, b] => {
                    let i: usize = i.parse().map_err(|_| bad(format!("bad site index {i:?}")))?;
                    let j: usize = j.parse().map_err(|_| bad(format!("bad site index {j:?}")))?;
                    let b: f64 = b.parse().map_err(|_| bad(format!("bad interaction {b:?}")))?;
                    pairs.push((line, i, j, b));
                }
                _ => return Err(bad(format!("unrecognised line {body:?}"))),
            }
        }
        let mut alpha = Vec::with_capacity(sites.len());
        let mut beta = Vec::with_capacity(sites.len());
        for (i, s) in sites.iter().enumerate() {
            let (a, b) = s.ok_or_else(|| Error::Parse {
                line: 0,
                msg: format!("site {i} missing"),
            })?;
            alpha.push(a);
            beta.push(b);
        }
        let mut field = Self::new(alpha, beta)?;
        for (line, i, j, b) in pairs {
            field.add_pair(i, j, b).map_err(|e| Error::Parse {
                line,
                msg: e.to_string(),
            })?;
        }
        Ok(field)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::parse(&std::fs::read_to_string(path)?)
    }

    pub fn pumps() -> Self {
        Self::parse(PUMPS).expect("bundled pump field parses")
    }
}

/// Per-site bounds `0 <= lower <= upper <= +inf`.
pub type IntervalState = BoundPair<Vec<f64>>;

/// Anti-monotone heat-bath update of site `i` with a coupler built for
/// shape `alpha_i`.
pub fn antimonotone_site_update(
    field: &GammaField,
    i: usize,
    bounds: &mut IntervalState,
    map: &ScaledGammaMap,
) -> Result<()> {
    let from_lower = 1.0 / field.inv_scale(i, &bounds.lower);
    let from_upper = 1.0 / field.inv_scale(i, &bounds.upper);
    bounds.upper[i] = map.apply(from_lower)?;
    bounds.lower[i] = map.apply(from_upper)?;
    Ok(())
}

impl MonotoneModel for GammaField {
    type State = Vec<f64>;

    fn initial_bounds(&self) -> IntervalState {
        BoundPair::new(vec![0.0; self.len()], vec![f64::INFINITY; self.len()])
    }

    fn update(&self, bounds: &mut IntervalState, at: StreamPath) -> Result<()> {
        for i in 0..self.len() {
            let map = gamma_scale_coupler(self.alpha[i], at.with_site(i as u64))?;
            antimonotone_site_update(self, i, bounds, &map)?;
        }
        Ok(())
    }

    fn is_coalesced(&self, b: &IntervalState) -> bool {
        b.lower
            .iter()
            .zip(&b.upper)
            .all(|(l, u)| l.to_bits() == u.to_bits())
    }
}

/// Exact draw from the field. The diagnostics' `t_star` is the number of
/// sweeps back in time needed to coalesce.
pub fn run_autogamma(field: &GammaField, seed: u64) -> Result<(Vec<f64>, RunDiagnostics)> {
    run_monotone_cftp(field, seed, CftpOptions::default())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::uniform01;

    fn two_site() -> GammaField {
        let mut f = GammaField::new(vec![2.0, 3.0], vec![1.0, 2.0]).unwrap();
        f.add_pair(0, 1, 0.5).unwrap();
        f
    }

    #[test]
    fn inv_scale_cases() {
        let f = two_site();
        assert_eq!(f.inv_scale(0, &[7.0, 0.0]), 1.0);
        assert_eq!(f.inv_scale(0, &[0.0, f64::INFINITY]), f64::INFINITY);
        assert_eq!(f.inv_scale(0, &[0.0, 2.0]), 2.0);
    }

    #[test]
    fn infinite_neighbour_pins_lower_to_zero() {
        let f = two_site();
        let mut b = f.initial_bounds();
        let map = gamma_scale_coupler(2.0, StreamPath::new(1)).unwrap();
        antimonotone_site_update(&f, 0, &mut b, &map).unwrap();
        assert_eq!(b.lower[0], 0.0);
        assert!(b.upper[0].is_finite() && b.upper[0] > 0.0);
    }

    #[test]
    fn coalesced_neighbours_coalesce_the_site() {
        let f = two_site();
        let mut b = BoundPair::new(vec![0.0, 1.25], vec![9.0, 1.25]);
        let map = gamma_scale_coupler(2.0, StreamPath::new(2)).unwrap();
        antimonotone_site_update(&f, 0, &mut b, &map).unwrap();
        assert_eq!(b.lower[0].to_bits(), b.upper[0].to_bits());
    }

    #[test]
    fn sandwich_holds_over_random_updates() {
        let f = GammaField::pumps();
        for k in 0..10_000u64 {
            let p = StreamPath::new(k);
            let mut b = f.initial_bounds();
            // random nested bounds, some infinite
            for i in 0..f.len() {
                let l = 3.0 * uniform01(p.with_site(i as u64).with_channel(1));
                let u = if uniform01(p.with_site(i as u64).with_channel(2)) < 0.2 {
                    f64::INFINITY
                } else {
                    l + 3.0 * uniform01(p.with_site(i as u64).with_channel(3))
                };
                b.lower[i] = l;
                b.upper[i] = u;
            }
            for step in 0..10 {
                f.update(&mut b, p.with_step(step)).unwrap();
                for i in 0..f.len() {
                    assert!(b.lower[i] <= b.upper[i]);
                }
            }
        }
    }

    #[test]
    fn top_state_is_gone_after_one_sweep() {
        let f = GammaField::pumps();
        let mut b = f.initial_bounds();
        f.update(&mut b, StreamPath::new(4)).unwrap();
        assert!(b.upper.iter().all(|u| u.is_finite()));
    }

    #[test]
    fn parse_errors_and_round_trip() {
        let f = GammaField::parse("site 0 2 1\nsite 1 3 2 # comment\npair 0 1 0.5\n").unwrap();
        assert_eq!(f, two_site());
        assert!(matches!(GammaField::parse("site 0 2 1\nsite 2 1 1"), Err(Error::Parse { .. })));
        assert!(matches!(GammaField::parse("site 0 2"), Err(Error::Parse { line: 1, .. })));
        assert!(GammaField::parse("site 0 -1 1").is_err());
        assert!(GammaField::parse("site 0 1 1\nsite 1 1 1\npair 0 1 -2").is_err());
        let pumps = GammaField::pumps();
        assert_eq!(pumps.len(), 11);
        assert_eq!(pumps.neighbors(0).len(), 10);
    }

    #[test]
    fn exact_draws_are_replayable() {
        let f = GammaField::pumps();
        let a = run_autogamma(&f, 12).unwrap();
        let b = run_autogamma(&f, 12).unwrap();
        assert_eq!(a, b);
        assert!(a.1.total_updates <= 4 * a.1.t_star.unwrap());
    }

    #[test]
    fn single_site_mean() {
        let f = GammaField::new(vec![3.0], vec![2.0]).unwrap();
        let n = 20_000;
        let mean = (0..n).map(|s| run_autogamma(&f, s).unwrap().0[0]).sum::<f64>() / n as f64;
        assert!((mean - 1.5).abs() < 0.03, "{mean}");
    }
}
