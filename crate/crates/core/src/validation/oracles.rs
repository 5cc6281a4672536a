//! Independent reference computations for the acceptance checks.

use nalgebra::{DMatrix, DVector};

use crate::autogamma::GammaField;
use crate::error::{param, Result};
use crate::rng::{gamma, StreamPath};
use crate::toy::toy_phi;

/// Distribution over `(lowest, highest)` trajectory pairs of the toy walk.
/// Monotonicity makes the pair enough to decide coalescence and the output.
struct PairDist {
    n: u32,
    p: Vec<f64>,
}

impl PairDist {
    fn full(n: u32) -> Self {
        let mut p = vec![0.0; ((n + 1) * (n + 1)) as usize];
        p[n as usize] = 1.0;
        Self { n, p }
    }

    fn idx(&self, lo: u32, hi: u32) -> usize {
        (lo * (self.n + 1) + hi) as usize
    }

    fn step(&self) -> Self {
        let mut q = vec![0.0; self.p.len()];
        for lo in 0..=self.n {
            for hi in lo..=self.n {
                let w = self.p[self.idx(lo, hi)];
                if w == 0.0 {
                    continue;
                }
                for u in [-1i8, 1] {
                    let (a, b) = (toy_phi(lo, u, self.n), toy_phi(hi, u, self.n));
                    q[self.idx(a, b)] += w / 2.0;
                }
            }
        }
        Self { n: self.n, p: q }
    }

    /// Takes the coalesced mass out, returning it per state.
    fn drain_coalesced(&mut self) -> Vec<f64> {
        (0..=self.n)
            .map(|x| {
                let i = self.idx(x, x);
                std::mem::take(&mut self.p[i])
            })
            .collect()
    }

    fn mass(&self) -> f64 {
        self.p.iter().sum()
    }
}

/// Law of the walk after `steps` fair steps from each state in `start`.
fn walk_forward(n: u32, start: &[f64], steps: u64) -> Vec<f64> {
    let mut d = start.to_vec();
    for _ in 0..steps {
        let mut e = vec![0.0; d.len()];
        for (x, &w) in d.iter().enumerate() {
            for u in [-1i8, 1] {
                e[toy_phi(x as u32, u, n) as usize] += w / 2.0;
            }
        }
        d = e;
    }
    d
}

/// Exact output law of the forward-doubling variant, enumerating every coin
/// sequence whose coalescence time is at most `depth`. Also returns the
/// mass of longer sequences, which is left out.
pub fn forward_doubling_exact(n: u32, depth: u64) -> (Vec<f64>, f64) {
    let mut law = vec![0.0; n as usize + 1];
    let mut open = PairDist::full(n);
    for t in 1..=depth {
        open = open.step();
        let hit = open.drain_coalesced();
        let tail = walk_forward(n, &hit, t.next_power_of_two() - t);
        for (l, h) in law.iter_mut().zip(tail) {
            *l += h;
        }
    }
    (law, open.mass())
}

/// Exact output law of CFTP with fresh coins at every restart, truncated
/// after `attempts` restarts (start times `1, 2, ..., 2^(attempts-1)`).
pub fn fresh_coins_exact(n: u32, attempts: u32) -> (Vec<f64>, f64) {
    let mut law = vec![0.0; n as usize + 1];
    let mut survive = 1.0;
    for k in 0..attempts {
        let mut d = PairDist::full(n);
        for _ in 0..1u64 << k {
            d = d.step();
        }
        let hit = d.drain_coalesced();
        let c: f64 = hit.iter().sum();
        for (l, h) in law.iter_mut().zip(&hit) {
            *l += survive * h;
        }
        survive *= 1.0 - c;
    }
    (law, survive)
}

/// Value of a binary fraction written as `0.b1b2b3...`.
pub fn binary_fraction(digits: &str) -> Result<f64> {
    let tail = digits
        .strip_prefix("0.")
        .ok_or_else(|| crate::Error::Parameter(format!("not a binary fraction: {digits}")))?;
    let mut v = 0.0;
    let mut w = 0.5;
    for c in tail.chars() {
        match c {
            '0' => {}
            '1' => v += w,
            _ => return param(format!("bad binary digit {c:?}")),
        }
        w /= 2.0;
    }
    Ok(v)
}

/// Plain Gibbs sampler for an autogamma field: `sweeps` sweeps after
/// `burn_in`, keeping every `thin`-th state.
pub fn gibbs_chain(
    field: &GammaField,
    seed: u64,
    burn_in: u64,
    sweeps: u64,
    thin: u64,
) -> Result<Vec<Vec<f64>>> {
    if thin == 0 {
        return param("thinning interval must be positive");
    }
    let base = StreamPath::new(seed).with_channel(41);
    let mut x = vec![1.0; field.len()];
    let mut kept = Vec::with_capacity((sweeps / thin) as usize);
    for t in 1..=burn_in + sweeps {
        for i in 0..field.len() {
            let g = gamma(base.with_step(t).with_site(i as u64), field.alpha(i))?;
            x[i] = g / field.inv_scale(i, &x);
        }
        if t > burn_in && (t - burn_in).is_multiple_of(thin) {
            kept.push(x.clone());
        }
    }
    Ok(kept)
}

/// Least energy of a chain of springs `F_k = 1/r_k` with ends at 0 and `x`,
/// by solving for the interior heights where the gradient vanishes.
pub fn chain_energy_by_solve(resistances: &[f64], x: f64) -> f64 {
    let f: Vec<f64> = resistances.iter().map(|r| 1.0 / r).collect();
    let k = f.len();
    let m = k - 1;
    let mut heights = vec![0.0; k + 1];
    heights[k] = x;
    if m > 0 {
        // interior node j (1..k-1): F_j (y_j - y_{j-1}) + F_{j+1} (y_j - y_{j+1}) = 0
        let mut a = DMatrix::<f64>::zeros(m, m);
        let mut b = DVector::<f64>::zeros(m);
        for j in 1..k {
            let r = j - 1;
            a[(r, r)] = f[j - 1] + f[j];
            if j > 1 {
                a[(r, r - 1)] = -f[j - 1];
            }
            if j + 1 < k {
                a[(r, r + 1)] = -f[j];
            } else {
                b[r] = f[j] * x;
            }
        }
        let y = a.lu().solve(&b).expect("tridiagonal system is nonsingular");
        heights[1..k].copy_from_slice(y.as_slice());
    }
    (0..k)
        .map(|i| 0.5 * f[i] * (heights[i + 1] - heights[i]).powi(2))
        .sum()
}
