//! Exact sampling without truncation: an independence-sampler proposal caps
//! the energy, the energy cap gives a finite box, and Gibbs bound sweeps
//! from that box decide coalescence of one composite map.

use std::collections::VecDeque;

use nalgebra::DMatrix;

use crate::cftp::{run_composite_cftp, BoundPair, CompositeMap, CompositeRun};
use crate::error::{param, Error, Result};
use crate::rng::{normal01, uniform01, StreamPath};

use super::graph::{energy, HeightConfig, InteractionGraph};
use super::sweep::{bound_sweep, bounds_coalesced, gibbs_sweep};

const T_PROPOSAL: u64 = 1;
const T_SWEEPS: u64 = 2;
const B_PROPOSAL: u64 = 3;
const B_SWEEPS: u64 = 4;
const MH_COIN: u64 = 5;

/// Cap on the sweeps used to measure one map's coalescence time.
pub const SWEEP_CAP: u64 = 1_000_000;

/// Relative widening of the energy box, to absorb rounding in the energy and
/// the square root.
const BOX_SLACK: f64 = 1e-9;

/// Breadth-first spanning tree from the root over positive springs.
#[derive(Debug, Clone, PartialEq)]
pub struct SpanningTree {
    /// Sites in the order they were reached; parents come first.
    pub order: Vec<usize>,
    /// `(parent, F)` for each non-root site.
    pub parent: Vec<Option<(usize, f64)>>,
    /// Sum of `1/F` along the path to the root.
    pub resistance: Vec<f64>,
}

impl SpanningTree {
    pub fn new(graph: &InteractionGraph) -> Result<Self> {
        let n = graph.len();
        let root = graph.root();
        let mut parent = vec![None; n];
        let mut resistance = vec![f64::NAN; n];
        let mut order = Vec::with_capacity(n);
        let mut queue = VecDeque::from([root]);
        resistance[root] = 0.0;
        while let Some(v) = queue.pop_front() {
            order.push(v);
            for &(w, f) in graph.neighbors(v) {
                if f > 0.0 && w != root && parent[w].is_none() {
                    parent[w] = Some((v, f));
                    resistance[w] = resistance[v] + 1.0 / f;
                    queue.push_back(w);
                }
            }
        }
        if order.len() != n {
            return Err(Error::Model(
                "positive springs do not connect every site to the root".into(),
            ));
        }
        Ok(Self {
            order,
            parent,
            resistance,
        })
    }

    /// Energy in the tree springs only.
    pub fn tree_energy(&self, x: &[f64]) -> f64 {
        self.parent
            .iter()
            .enumerate()
            .filter_map(|(v, p)| p.map(|(u, f)| 0.5 * f * (x[v] - x[u]).powi(2)))
            .sum()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProposalOutcome {
    pub config: HeightConfig,
    pub energy: f64,
    pub tree_energy: f64,
    /// `2 E(B) - E_tree(B)`: no state can leave the update above this.
    pub e_max: f64,
}

/// Proposal: walk down the tree, each child `Normal(parent, 2/F)`.
pub fn tree_proposal(
    graph: &InteractionGraph,
    tree: &SpanningTree,
    path: StreamPath,
) -> ProposalOutcome {
    let mut x = graph.zeros();
    for &v in &tree.order {
        if let Some((u, f)) = tree.parent[v] {
            x[v] = x[u] + (2.0 / f).sqrt() * normal01(path.with_site(v as u64));
        }
    }
    let e = energy(graph, &x);
    let et = tree.tree_energy(&x);
    ProposalOutcome {
        config: x,
        energy: e,
        tree_energy: et,
        e_max: 2.0 * e - et,
    }
}

/// Least energy of a chain of springs with resistances `1/F_k` whose ends
/// are held at 0 and `x`.
pub fn min_chain_energy(resistances: &[f64], x: f64) -> Result<f64> {
    if resistances.is_empty() {
        return param("chain needs at least one spring");
    }
    if let Some(r) = resistances.iter().find(|r| !(**r > 0.0 && r.is_finite())) {
        return param(format!("resistances must be positive and finite, got {r}"));
    }
    Ok(0.5 * x * x / resistances.iter().sum::<f64>())
}

/// `|x_v| <= sqrt(2 e_max rho_v)` for every state with energy at most `e_max`.
pub fn coordinate_box(tree: &SpanningTree, e_max: f64) -> Vec<f64> {
    tree.resistance
        .iter()
        .map(|r| (2.0 * e_max.max(0.0) * r).sqrt())
        .collect()
}

/// Metropolis–Hastings acceptance probability for moving from a state with
/// energies `(e_a, tree_a)` to the proposal.
pub fn acceptance_probability(e_a: f64, tree_a: f64, proposal: &ProposalOutcome) -> f64 {
    if e_a >= proposal.e_max {
        return 1.0;
    }
    let log_ratio = (e_a - tree_a / 2.0) - (proposal.energy - proposal.tree_energy / 2.0);
    log_ratio.exp().min(1.0)
}

pub fn mh_accept_with(
    graph: &InteractionGraph,
    tree: &SpanningTree,
    current: &[f64],
    proposal: &ProposalOutcome,
    u: f64,
) -> HeightConfig {
    let a = acceptance_probability(energy(graph, current), tree.tree_energy(current), proposal);
    if u < a {
        proposal.config.clone()
    } else {
        current.to_vec()
    }
}

pub fn mh_accept(
    graph: &InteractionGraph,
    tree: &SpanningTree,
    current: &[f64],
    proposal: &ProposalOutcome,
    path: StreamPath,
) -> HeightConfig {
    mh_accept_with(graph, tree, current, proposal, uniform01(path))
}

fn box_bounds(graph: &InteractionGraph, tree: &SpanningTree, e_max: f64) -> BoundPair<HeightConfig> {
    let half: Vec<f64> = coordinate_box(tree, e_max)
        .into_iter()
        .map(|b| b * (1.0 + BOX_SLACK))
        .collect();
    let mut lower: Vec<f64> = half.iter().map(|b| -b).collect();
    lower[graph.root()] = 0.0;
    let mut upper = half;
    upper[graph.root()] = 0.0;
    BoundPair::new(lower, upper)
}

/// One composite random map. Everything except the current state is drawn
/// up front, so the map can be applied to any number of inputs.
#[derive(Debug, Clone)]
pub struct FieldMap<'a> {
    graph: &'a InteractionGraph,
    tree: &'a SpanningTree,
    at: StreamPath,
    sweeps: u64,
    proposal: ProposalOutcome,
    mh_uniform: f64,
    bounds: BoundPair<HeightConfig>,
}

/// Builds the composite map at `at` (which should carry the seed and the
/// map index as epoch).
pub fn composite_update<'a>(
    graph: &'a InteractionGraph,
    tree: &'a SpanningTree,
    at: StreamPath,
) -> Result<FieldMap<'a>> {
    // T phase: measure a coalescence time from an independent box.
    let t_prop = tree_proposal(graph, tree, at.with_channel(T_PROPOSAL));
    let mut t_bounds = box_bounds(graph, tree, t_prop.e_max);
    let mut sweeps = 0;
    while !bounds_coalesced(&t_bounds) {
        if sweeps == SWEEP_CAP {
            return Err(Error::NonCoalescence {
                limit: SWEEP_CAP,
                unit: "Gibbs sweeps",
            });
        }
        sweeps += 1;
        bound_sweep(graph, &mut t_bounds, at.with_channel(T_SWEEPS).with_step(sweeps))?;
    }
    // B phase: fresh proposal and box, then the same number of sweeps.
    let proposal = tree_proposal(graph, tree, at.with_channel(B_PROPOSAL));
    let mut bounds = box_bounds(graph, tree, proposal.e_max);
    for k in 1..=sweeps {
        bound_sweep(graph, &mut bounds, at.with_channel(B_SWEEPS).with_step(k))?;
    }
    Ok(FieldMap {
        graph,
        tree,
        at,
        sweeps,
        mh_uniform: uniform01(at.with_channel(MH_COIN)),
        proposal,
        bounds,
    })
}

impl FieldMap<'_> {
    /// Number of Gibbs sweeps `C` measured in the T phase.
    pub fn sweeps(&self) -> u64 {
        self.sweeps
    }

    pub fn proposal(&self) -> &ProposalOutcome {
        &self.proposal
    }

    pub fn is_coalesced(&self) -> bool {
        bounds_coalesced(&self.bounds)
    }

    /// The box after the B-phase sweeps.
    pub fn bounds(&self) -> &BoundPair<HeightConfig> {
        &self.bounds
    }

    /// Metropolis–Hastings step only, before any sweeps.
    pub fn after_mh(&self, x: &[f64]) -> HeightConfig {
        mh_accept_with(self.graph, self.tree, x, &self.proposal, self.mh_uniform)
    }

    /// Runs the map on `x`, calling `visit(k, state)` after each sweep `k`.
    pub fn apply_visiting(
        &self,
        x: &[f64],
        mut visit: impl FnMut(u64, &[f64]),
    ) -> Result<HeightConfig> {
        let mut y = self.after_mh(x);
        visit(0, &y);
        for k in 1..=self.sweeps {
            gibbs_sweep(self.graph, &mut y, self.at.with_channel(B_SWEEPS).with_step(k))?;
            visit(k, &y);
        }
        Ok(y)
    }

    /// Bound trajectory of the B phase, step by step; index 0 is the box.
    pub fn bound_trajectory(&self) -> Result<Vec<BoundPair<HeightConfig>>> {
        let mut b = box_bounds(self.graph, self.tree, self.proposal.e_max);
        let mut out = vec![b.clone()];
        for k in 1..=self.sweeps {
            bound_sweep(self.graph, &mut b, self.at.with_channel(B_SWEEPS).with_step(k))?;
            out.push(b.clone());
        }
        Ok(out)
    }
}

impl CompositeMap<HeightConfig> for FieldMap<'_> {
    fn coalesced_output(&self) -> Option<&HeightConfig> {
        self.is_coalesced().then_some(&self.bounds.lower)
    }

    fn apply(&self, x: &HeightConfig) -> Result<HeightConfig> {
        self.apply_visiting(x, |_, _| {})
    }
}

/// Exact sampler for a graph with nonnegative springs.
#[derive(Debug, Clone)]
pub struct ExactSampler<'a> {
    graph: &'a InteractionGraph,
    tree: SpanningTree,
    pub max_maps: u64,
}

impl<'a> ExactSampler<'a> {
    pub fn new(graph: &'a InteractionGraph) -> Result<Self> {
        if graph.has_negative_springs() {
            return param("the exact sampler needs nonnegative spring constants");
        }
        graph.validate()?;
        Ok(Self {
            graph,
            tree: SpanningTree::new(graph)?,
            max_maps: 1 << 20,
        })
    }

    pub fn tree(&self) -> &SpanningTree {
        &self.tree
    }

    /// The composite map at time `-index`.
    pub fn map(&self, seed: u64, index: u64) -> Result<FieldMap<'_>> {
        composite_update(self.graph, &self.tree, StreamPath::new(seed).with_epoch(index))
    }

    pub fn sample(&self, seed: u64) -> Result<CompositeRun<HeightConfig>> {
        run_composite_cftp(|k| self.map(seed, k), self.max_maps)
    }
}

pub fn run_exact_autonormal(
    graph: &InteractionGraph,
    seed: u64,
) -> Result<CompositeRun<HeightConfig>> {
    ExactSampler::new(graph)?.sample(seed)
}

/// Covariance of the free sites (root row and column removed, other sites in
/// index order), by inverting the graph Laplacian.
pub fn exact_covariance(graph: &InteractionGraph) -> Result<DMatrix<f64>> {
    if graph.has_negative_springs() {
        return param("covariance oracle needs nonnegative spring constants");
    }
    let root = graph.root();
    let free: Vec<usize> = (0..graph.len()).filter(|&i| i != root).collect();
    let slot = |i: usize| if i < root { i } else { i - 1 };
    let m = free.len();
    let mut precision = DMatrix::<f64>::zeros(m, m);
    for &i in &free {
        precision[(slot(i), slot(i))] = graph.strength(i);
        for &(j, f) in graph.neighbors(i) {
            if j != root {
                precision[(slot(i), slot(j))] = -f;
            }
        }
    }
    let chol = precision
        .cholesky()
        .ok_or_else(|| Error::Model("precision matrix is singular; is the graph connected?".into()))?;
    Ok(chol.inverse())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pair(f: f64) -> InteractionGraph {
        let mut g = InteractionGraph::empty(2, 0).unwrap();
        g.add_edge(0, 1, f).unwrap();
        g
    }

    fn path3() -> InteractionGraph {
        let mut g = InteractionGraph::empty(3, 0).unwrap();
        g.add_edge(0, 1, 1.0).unwrap();
        g.add_edge(1, 2, 1.0).unwrap();
        g
    }

    #[test]
    fn tree_resistances() {
        let g = InteractionGraph::grid(3, 3, 2.0, true).unwrap();
        let t = SpanningTree::new(&g).unwrap();
        assert_eq!(t.order[0], 0);
        assert_eq!(t.resistance[0], 0.0);
        for v in 1..9 {
            let (u, f) = t.parent[v].unwrap();
            assert_eq!(t.resistance[v], t.resistance[u] + 1.0 / f);
        }
        assert_eq!(t.resistance[4], 1.0);
    }

    #[test]
    fn chain_energy_cases() {
        assert_eq!(min_chain_energy(&[1.0], 2.0).unwrap(), 2.0);
        assert_eq!(min_chain_energy(&[1.0, 1.0], 2.0).unwrap(), 1.0);
        assert!((min_chain_energy(&[0.5, 1.0 / 3.0], 1.0).unwrap() - 0.6).abs() < 1e-15);
        assert!(min_chain_energy(&[1.0, 0.0], 1.0).is_err());
        assert!(min_chain_energy(&[], 1.0).is_err());
    }

    #[test]
    fn box_cases() {
        let t = SpanningTree::new(&pair(2.0)).unwrap();
        assert_eq!(coordinate_box(&t, 4.0), vec![0.0, 2.0]);
        assert_eq!(coordinate_box(&t, 0.0), vec![0.0, 0.0]);
    }

    #[test]
    fn low_energy_states_lie_in_the_box() {
        // 5-site tree: path 0-1-2 plus 1-3, 3-4
        let mut g = InteractionGraph::empty(5, 0).unwrap();
        for (i, j, f) in [(0, 1, 1.5), (1, 2, 0.7), (1, 3, 2.0), (3, 4, 0.4)] {
            g.add_edge(i, j, f).unwrap();
        }
        let t = SpanningTree::new(&g).unwrap();
        let e_max = 1.0;
        let b = coordinate_box(&t, e_max);
        let mut kept = 0;
        let mut k = 0u64;
        while kept < 10_000 {
            let p = StreamPath::new(k).with_channel(31);
            k += 1;
            let x: Vec<f64> = (0..5)
                .map(|i| if i == 0 { 0.0 } else { 6.0 * uniform01(p.with_site(i)) - 3.0 })
                .collect();
            if energy(&g, &x) <= e_max {
                kept += 1;
                assert!(x.iter().zip(&b).all(|(v, bound)| v.abs() <= *bound));
            }
        }
    }

    #[test]
    fn proposal_difference_has_variance_two() {
        let g = pair(1.0);
        let t = SpanningTree::new(&g).unwrap();
        let d: Vec<f64> = (0..100_000)
            .map(|k| {
                let p = tree_proposal(&g, &t, StreamPath::new(k));
                assert!(p.e_max >= p.energy);
                p.config[1] - p.config[0]
            })
            .collect();
        let sd = 2f64.sqrt();
        let r = crate::stats::ks_test(&d, |v| {
            statrs::function::erf::erfc(-v / sd / 2f64.sqrt()) / 2.0
        })
        .unwrap();
        assert!(r.p_value > 1e-3, "{r:?}");
    }

    #[test]
    fn proposal_density_on_a_slice() {
        // path 0-1-2: given x1 near 0.5, x2 - x1 is Normal(0, 2); compare a
        // histogram of x2 on draws with x1 in a thin slice
        let g = path3();
        let t = SpanningTree::new(&g).unwrap();
        let mut hist = [0u64; 8];
        let mut total = 0u64;
        for k in 0..2_000_000u64 {
            let p = tree_proposal(&g, &t, StreamPath::new(k));
            if (p.config[1] - 0.5).abs() < 0.05 {
                total += 1;
                let d = p.config[2] - p.config[1];
                let bin = ((d + 2.0) / 0.5).floor();
                if (0.0..8.0).contains(&bin) {
                    hist[bin as usize] += 1;
                }
            }
        }
        for (b, &c) in hist.iter().enumerate() {
            let lo = -2.0 + 0.5 * b as f64;
            // density exp(-E_tree/2) ~ exp(-d^2/4) along the slice
            let mass: f64 = (0..100)
                .map(|s| {
                    let d = lo + (s as f64 + 0.5) * 0.005;
                    (-d * d / 4.0).exp() * 0.005
                })
                .sum::<f64>()
                / (4.0 * std::f64::consts::PI).sqrt();
            let expected = mass * total as f64;
            assert!((c as f64 - expected).abs() < 4.0 * expected.sqrt() + 1.0, "bin {b}");
        }
    }

    #[test]
    fn mh_cases() {
        let g = InteractionGraph::grid(3, 3, 1.0, true).unwrap();
        let t = SpanningTree::new(&g).unwrap();
        let prop = tree_proposal(&g, &t, StreamPath::new(2));
        // same state: ratio 1
        assert_eq!(
            acceptance_probability(prop.energy, prop.tree_energy, &prop),
            1.0
        );
        let mut hot = g.zeros();
        hot[4] = 1e3;
        assert!(energy(&g, &hot) >= prop.e_max);
        for k in 0..100 {
            assert_eq!(mh_accept(&g, &t, &hot, &prop, StreamPath::new(k)), prop.config);
        }
    }

    #[test]
    fn detailed_balance_on_two_sites() {
        let g = pair(1.3);
        let t = SpanningTree::new(&g).unwrap();
        let outcome = |x: f64| {
            let c = vec![0.0, x];
            let e = energy(&g, &c);
            let et = t.tree_energy(&c);
            ProposalOutcome {
                config: c,
                energy: e,
                tree_energy: et,
                e_max: 2.0 * e - et,
            }
        };
        for k in 0..1000u64 {
            let p = StreamPath::new(k);
            let a = outcome(4.0 * uniform01(p.with_draw(0)) - 2.0);
            let b = outcome(4.0 * uniform01(p.with_draw(1)) - 2.0);
            let pi = |o: &ProposalOutcome| (-o.energy).exp();
            let q = |o: &ProposalOutcome| (-o.tree_energy / 2.0).exp();
            let lhs = pi(&a) * q(&b) * acceptance_probability(a.energy, a.tree_energy, &b);
            let rhs = pi(&b) * q(&a) * acceptance_probability(b.energy, b.tree_energy, &a);
            assert!((lhs - rhs).abs() < 1e-12, "{lhs} {rhs}");
        }
    }

    #[test]
    fn coalesced_maps_forget_the_input() {
        let g = InteractionGraph::grid(3, 3, 1.0, true).unwrap();
        let s = ExactSampler::new(&g).unwrap();
        let mut coalesced = 0;
        for k in 1..=300u64 {
            let m = s.map(4, k).unwrap();
            let mut a = g.zeros();
            a[3] = 2.5;
            let mut b = g.zeros();
            b[7] = -40.0;
            let (ya, yb) = (m.apply(&a).unwrap(), m.apply(&b).unwrap());
            if m.is_coalesced() {
                coalesced += 1;
                assert_eq!(ya, yb);
                assert_eq!(&ya, m.coalesced_output().unwrap());
            }
            let post = m.after_mh(&a);
            assert!(energy(&g, &post) <= m.proposal().e_max * (1.0 + 1e-12));
        }
        assert!(coalesced > 100);
    }

    #[test]
    fn sandwich_through_the_b_phase() {
        let g = InteractionGraph::grid(3, 3, 1.0, true).unwrap();
        let s = ExactSampler::new(&g).unwrap();
        let mut x = g.zeros();
        for k in 1..=300u64 {
            let m = s.map(6, k).unwrap();
            let traj = m.bound_trajectory().unwrap();
            assert_eq!(&traj[traj.len() - 1], m.bounds());
            x = m
                .apply_visiting(&x, |step, y| {
                    let b = &traj[step as usize];
                    for ((l, v), u) in b.lower.iter().zip(y).zip(&b.upper) {
                        assert!(l <= v && v <= u);
                    }
                })
                .unwrap();
        }
    }

    #[test]
    fn covariance_cases() {
        let c = exact_covariance(&pair(4.0)).unwrap();
        assert!((c[(0, 0)] - 0.25).abs() < 1e-15);
        let c = exact_covariance(&path3()).unwrap();
        for (k, v) in [1.0, 1.0, 1.0, 2.0].iter().enumerate() {
            assert!((c[(k / 2, k % 2)] - v).abs() < 1e-12);
        }
        let mut neg = pair(1.0);
        neg.add_edge(0, 1, -3.0).unwrap();
        assert!(exact_covariance(&neg).is_err());
        let c = exact_covariance(&InteractionGraph::grid(4, 3, 0.7, false).unwrap()).unwrap();
        for i in 0..11 {
            assert!(c[(i, i)] > 0.0);
            for j in 0..11 {
                assert!((c[(i, j)] - c[(j, i)]).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn exact_two_site_variance() {
        let g = pair(1.0);
        let s = ExactSampler::new(&g).unwrap();
        let sq: Vec<f64> = (0..10_000)
            .map(|seed| {
                let x = s.sample(seed).unwrap().state;
                (x[1] - x[0]).powi(2)
            })
            .collect();
        let (v, se) = crate::stats::mean_with_ci(&sq).unwrap();
        assert!((v - 1.0).abs() < 3.0 * se, "{v} {se}");
    }

    #[test]
    fn rejects_negative_springs() {
        let mut g = InteractionGraph::empty(3, 0).unwrap();
        g.add_edge(0, 1, 1.0).unwrap();
        g.add_edge(0, 2, 1.0).unwrap();
        g.add_edge(1, 2, -0.2).unwrap();
        assert!(run_exact_autonormal(&g, 0).is_err());
    }
}
