use std::collections::VecDeque;
use std::path::Path;

use crate::error::{param, Error, Result};

/// Per-site heights; the root entry is always 0.
pub type HeightConfig = Vec<f64>;

/// Spring constants on an undirected graph with one pinned site.
#[derive(Debug, Clone, PartialEq)]
pub struct InteractionGraph {
    root: usize,
    adjacency: Vec<Vec<(usize, f64)>>,
    /// `sum_j F_ij` per site.
    strength: Vec<f64>,
}

impl InteractionGraph {
    /// A graph with `n` sites and no springs yet.
    pub fn empty(n: usize, root: usize) -> Result<Self> {
        if n < 2 {
            return param(format!("a field needs at least two sites, got {n}"));
        }
        if root >= n {
            return param(format!("root {root} out of range for {n} sites"));
        }
        Ok(Self {
            root,
            adjacency: vec![Vec::new(); n],
            strength: vec![0.0; n],
        })
    }

    /// Adds `f` to the spring between `i` and `j`. Repeated edges add up,
    /// which is what a torus of side 2 needs.
    pub fn add_edge(&mut self, i: usize, j: usize, f: f64) -> Result<()> {
        let n = self.len();
        if i >= n || j >= n || i == j {
            return param(format!("bad edge ({i}, {j}) for {n} sites"));
        }
        if !f.is_finite() {
            return param(format!("spring constant must be finite, got {f}"));
        }
        if f == 0.0 {
            return Ok(());
        }
        for (a, b) in [(i, j), (j, i)] {
            match self.adjacency[a].iter_mut().find(|(k, _)| *k == b) {
                Some(e) => e.1 += f,
                None => self.adjacency[a].push((b, f)),
            }
            self.strength[a] += f;
        }
        for a in [i, j] {
            self.adjacency[a].retain(|&(_, g)| g != 0.0);
        }
        Ok(())
    }

    /// Checks that the graph is connected and that every free site has
    /// positive total strength.
    pub fn validate(&self) -> Result<()> {
        let n = self.len();
        let mut seen = vec![false; n];
        let mut queue = VecDeque::from([self.root]);
        seen[self.root] = true;
        while let Some(v) = queue.pop_front() {
            for &(w, _) in &self.adjacency[v] {
                if !seen[w] {
                    seen[w] = true;
                    queue.push_back(w);
                }
            }
        }
        if let Some(v) = seen.iter().position(|s| !s) {
            return Err(Error::Model(format!("site {v} is not connected to the root")));
        }
        if let Some(v) = (0..n).find(|&v| v != self.root && !(self.strength[v] > 0.0)) {
            return Err(Error::Model(format!(
                "site {v} has total spring strength {} <= 0",
                self.strength[v]
            )));
        }
        Ok(())
    }

    /// `W x H` grid of unit-free springs `f`, row-major, root at site 0.
    pub fn grid(width: usize, height: usize, f: f64, torus: bool) -> Result<Self> {
        if width == 0 || height == 0 {
            return param("grid sides must be positive");
        }
        if torus && (width < 2 || height < 2) {
            return param("a torus needs both sides >= 2");
        }
        let mut g = Self::empty(width * height, 0)?;
        let id = |x: usize, y: usize| y * width + x;
        for y in 0..height {
            for x in 0..width {
                if x + 1 < width {
                    g.add_edge(id(x, y), id(x + 1, y), f)?;
                } else if torus {
                    g.add_edge(id(x, y), id(0, y), f)?;
                }
                if y + 1 < height {
                    g.add_edge(id(x, y), id(x, y + 1), f)?;
                } else if torus {
                    g.add_edge(id(x, y), id(x, 0), f)?;
                }
            }
        }
        g.validate()?;
        Ok(g)
    }

    /// Parses a graph file: either a header `n <count> root <index>` followed
    /// by `edge i j F` lines, or a single `grid W H F [torus]` line. `#`
    /// starts a comment.
    pub fn parse(text: &str) -> Result<Self> {
        let mut graph: Option<Self> = None;
        let mut from_grid = false;
        for (lineno, raw) in text.lines().enumerate() {
            let line = lineno + 1;
            let body = raw.split('#').next().unwrap_or("").trim();
            if body.is_empty() {
                continue;
            }
            let bad = |msg: String| Error::Parse { line, msg };
            let toks: Vec<&str> = body.split_whitespace().collect();
            let num = |s: &str| -> Result<usize> {
                s.parse().map_err(|_| bad(format!("bad integer {s:?}")))
            };
            let real = |s: &str| -> Result<f64> {
                s.parse().map_err(|_| bad(format!("bad number {s:?}")))
            };
            match toks.as_slice() {
                ["n", n, "root", r] if graph.is_none() => {
                    graph = Some(Self::empty(num(n)?, num(r)?).map_err(|e| bad(e.to_string()))?);
                }
                ["grid", w, h, f, rest @ ..] if graph.is_none() => {
                    let torus = match rest {
                        [] => false,
                        ["torus"] => true,
                        _ => return Err(bad(format!("unrecognised grid option {rest:?}"))),
                    };
                    graph = Some(
                        Self::grid(num(w)?, num(h)?, real(f)?, torus)
                            .map_err(|e| bad(e.to_string()))?,
                    );
                    from_grid = true;
                }
                ["edge", i, j, f] if !from_grid => {
                    let g = graph
                        .as_mut()
                        .ok_or_else(|| bad("edge before the `n .. root ..` header".into()))?;
                    g.add_edge(num(i)?, num(j)?, real(f)?)
                        .map_err(|e| bad(e.to_string()))?;
                }
                _ => return Err(bad(format!("unexpected line {body:?}"))),
            }
        }
        let g = graph.ok_or(Error::Parse {
            line: 0,
            msg: "empty graph file".into(),
        })?;
        g.validate()?;
        Ok(g)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::parse(&std::fs::read_to_string(path)?)
    }

    /// Named graphs: `gridN` is an `N x N` torus of unit springs.
    pub fn builtin(name: &str) -> Option<Self> {
        let side: usize = name.strip_prefix("grid")?.parse().ok()?;
        Self::grid(side, side, 1.0, true).ok()
    }

    pub fn len(&self) -> usize {
        self.adjacency.len()
    }

    pub fn is_empty(&self) -> bool {
        self.adjacency.is_empty()
    }

    pub fn root(&self) -> usize {
        self.root
    }

    pub fn neighbors(&self, i: usize) -> &[(usize, f64)] {
        &self.adjacency[i]
    }

    pub fn strength(&self, i: usize) -> f64 {
        self.strength[i]
    }

    /// Spring constant between `i` and `j`, 0 when absent.
    pub fn spring(&self, i: usize, j: usize) -> f64 {
        self.adjacency[i]
            .iter()
            .find(|&&(k, _)| k == j)
            .map_or(0.0, |&(_, f)| f)
    }

    pub fn has_negative_springs(&self) -> bool {
        self.adjacency.iter().flatten().any(|&(_, f)| f < 0.0)
    }

    /// Each undirected edge once, as `(i, j, F)` with `i < j`.
    pub fn edges(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        self.adjacency
            .iter()
            .enumerate()
            .flat_map(|(i, nb)| nb.iter().filter(move |&&(j, _)| i < j).map(move |&(j, f)| (i, j, f)))
    }

    /// The all-zero configuration.
    pub fn zeros(&self) -> HeightConfig {
        vec![0.0; self.len()]
    }
}

/// `sum_{i<j} F_ij (x_i - x_j)^2 / 2`.
pub fn energy(graph: &InteractionGraph, x: &[f64]) -> f64 {
    graph
        .edges()
        .map(|(i, j, f)| 0.5 * f * (x[i] - x[j]).powi(2))
        .sum()
}

/// Mean and variance of site `i` given all the others.
pub fn conditional_params(graph: &InteractionGraph, i: usize, x: &[f64]) -> Result<(f64, f64)> {
    if i == graph.root() {
        return param("the root height is pinned");
    }
    let s = graph.strength(i);
    if !(s > 0.0) {
        return Err(Error::Model(format!("site {i} has total strength {s} <= 0")));
    }
    let weighted: f64 = graph.neighbors(i).iter().map(|&(j, f)| f * x[j]).sum();
    Ok((weighted / s, 1.0 / s))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pair(f: f64) -> InteractionGraph {
        let mut g = InteractionGraph::empty(2, 0).unwrap();
        g.add_edge(0, 1, f).unwrap();
        g
    }

    #[test]
    fn energy_cases() {
        let g = pair(1.0);
        assert_eq!(energy(&g, &[0.0, 0.0]), 0.0);
        assert_eq!(energy(&g, &[0.0, 2.0]), 2.0);
    }

    #[test]
    fn conditional_cases() {
        let mut g = InteractionGraph::empty(3, 0).unwrap();
        g.add_edge(0, 1, 3.0).unwrap();
        g.add_edge(1, 2, 3.0).unwrap();
        assert_eq!(conditional_params(&g, 2, &[0.0, 4.5, 9.0]).unwrap(), (4.5, 1.0 / 3.0));
        assert_eq!(conditional_params(&g, 1, &[0.0, 7.0, 2.0]).unwrap(), (1.0, 1.0 / 6.0));
        assert!(conditional_params(&g, 0, &[0.0; 3]).is_err());
    }

    #[test]
    fn conditional_matches_quadrature() {
        // 3-site triangle, site 2 free given x0 = 0, x1 = 1.3
        let mut g = InteractionGraph::empty(3, 0).unwrap();
        g.add_edge(0, 1, 0.7).unwrap();
        g.add_edge(0, 2, 1.1).unwrap();
        g.add_edge(1, 2, 2.4).unwrap();
        let mut x = vec![0.0, 1.3, 0.0];
        let (m, v) = conditional_params(&g, 2, &x).unwrap();
        let h = 1e-4;
        let (mut z, mut s1, mut s2) = (0.0, 0.0, 0.0);
        for k in -200_000..=200_000 {
            x[2] = m + k as f64 * h;
            let w = (-energy(&g, &x)).exp();
            z += w;
            s1 += w * x[2];
            s2 += w * x[2] * x[2];
        }
        let mean = s1 / z;
        let var = s2 / z - mean * mean;
        assert!((mean - m).abs() < 1e-6);
        assert!((var - v).abs() < 1e-6);
    }

    #[test]
    fn parse_formats() {
        let g = InteractionGraph::parse("n 3 root 1\nedge 0 1 2\nedge 1 2 0.5 # tail\n").unwrap();
        assert_eq!(g.root(), 1);
        assert_eq!(g.spring(2, 1), 0.5);
        assert_eq!(g.edges().count(), 2);
        let t = InteractionGraph::parse("grid 3 3 1 torus").unwrap();
        assert_eq!(t.edges().count(), 18);
        assert!(t.neighbors(4).len() == 4);
        assert_eq!(InteractionGraph::builtin("grid3"), Some(t));
        let open = InteractionGraph::parse("grid 3 2 1").unwrap();
        assert_eq!(open.edges().count(), 7);
        assert!(matches!(
            InteractionGraph::parse("n 3 root 0\nedge 0 1 1"),
            Err(Error::Model(_))
        ));
        assert!(matches!(InteractionGraph::parse("edge 0 1 1"), Err(Error::Parse { line: 1, .. })));
        assert!(InteractionGraph::parse("n 2 root 5").is_err());
        assert!(InteractionGraph::builtin("grid").is_none());
    }

    #[test]
    fn small_torus_doubles_springs() {
        let g = InteractionGraph::grid(2, 2, 1.0, true).unwrap();
        assert_eq!(g.spring(0, 1), 2.0);
        assert_eq!(g.strength(0), 4.0);
    }
}
