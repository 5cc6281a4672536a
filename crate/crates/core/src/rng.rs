//! Counter-based random draws addressed by [`StreamPath`].
//!
//! Coupling from the past revisits old epochs out of order and must see the
//! very same coins every time. Instead of a stateful generator plus a table of
//! saved seeds, every draw here is a pure function of its address: the master
//! seed and the (epoch, step, site, draw, channel) coordinates are absorbed one
//! at a time through a bijective 64-bit mixer, so equal paths give equal bits
//! and a change to any single coordinate always gives different bits.

use crate::error::{param, Result};

const SEED_TAG: u64 = 0x6A09_E667_F3BC_C909;
const GAMMA_TAG: u64 = 0xB7E1_5162_8AED_2A6B;
const GOLDEN: u64 = 0x9E37_79B9_7F4A_7C15;

/// SplitMix64 finalizer. A bijection on `u64`.
#[inline]
pub fn mix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

#[inline]
fn absorb(h: u64, v: u64) -> u64 {
    mix64(h.rotate_left(23) ^ v.wrapping_mul(GOLDEN).wrapping_add(GOLDEN))
}

/// Seed for the `index`-th independent replication under `master`.
pub fn derive_seed(master: u64, index: u64) -> u64 {
    absorb(absorb(mix64(master ^ 0x243F_6A88_85A3_08D3), index), 0x1319_8A2E)
}

/// Address of one random draw.
///
/// `epoch` is the doubling level of a CFTP restart, `step` the Markov time,
/// `site` a spatial index, `draw` a counter for several draws made by one
/// update, and `channel` separates otherwise identical sub-streams.
///
/// Couplers consume consecutive `draw` values starting at the `draw` of the
/// path they are handed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub struct StreamPath {
    pub master_seed: u64,
    pub epoch: u64,
    pub step: u64,
    pub site: u64,
    pub draw: u64,
    pub channel: u64,
}

impl StreamPath {
    pub fn new(master_seed: u64) -> Self {
        Self {
            master_seed,
            ..Self::default()
        }
    }

    pub fn with_epoch(self, epoch: u64) -> Self {
        Self { epoch, ..self }
    }

    pub fn with_step(self, step: u64) -> Self {
        Self { step, ..self }
    }

    pub fn with_site(self, site: u64) -> Self {
        Self { site, ..self }
    }

    pub fn with_draw(self, draw: u64) -> Self {
        Self { draw, ..self }
    }

    pub fn with_channel(self, channel: u64) -> Self {
        Self { channel, ..self }
    }

    /// The path `k` draws further along.
    pub fn offset(self, k: u64) -> Self {
        Self {
            draw: self.draw.wrapping_add(k),
            ..self
        }
    }

    /// The 64-bit word at this address.
    pub fn word(&self) -> u64 {
        let mut h = mix64(self.master_seed ^ SEED_TAG);
        for v in [self.epoch, self.step, self.site, self.draw, self.channel] {
            h = absorb(h, v);
        }
        h
    }
}

/// Maps a 64-bit word into the open interval (0, 1): the top 52 bits plus a
/// half-ulp offset, so neither endpoint is reachable.
#[inline]
pub fn unit_open(word: u64) -> f64 {
    ((word >> 12) as f64 + 0.5) * (1.0 / (1u64 << 52) as f64)
}

pub fn uniform01(path: StreamPath) -> f64 {
    unit_open(path.word())
}

/// Standard normal variate from exactly one uniform (inverse CDF).
pub fn normal01(path: StreamPath) -> f64 {
    normal_quantile(uniform01(path))
}

/// Exponential variate with the given mean, `-mean * ln(U)`.
pub fn exponential(path: StreamPath, mean: f64) -> Result<f64> {
    if !(mean > 0.0 && mean.is_finite()) {
        return param(format!("exponential mean must be positive, got {mean}"));
    }
    Ok(exponential_from_uniform(uniform01(path), mean))
}

#[inline]
pub fn exponential_from_uniform(u: f64, mean: f64) -> f64 {
    -mean * u.ln()
}

/// Unit-scale gamma variate (Marsaglia–Tsang squeeze with rejection).
///
/// Attempts read their coins from words derived from this path's word, so the
/// number of attempts varies but the result is a fixed function of the path.
pub fn gamma(path: StreamPath, shape: f64) -> Result<f64> {
    if !(shape > 0.0 && shape.is_finite()) {
        return param(format!("gamma shape must be positive, got {shape}"));
    }
    let base = absorb(path.word(), GAMMA_TAG);
    if shape < 1.0 {
        // Gamma(a) = Gamma(a + 1) * U^(1/a)
        let boost = unit_open(absorb(base, u64::MAX));
        return Ok(marsaglia_tsang(base, shape + 1.0) * boost.powf(1.0 / shape));
    }
    Ok(marsaglia_tsang(base, shape))
}

fn marsaglia_tsang(base: u64, shape: f64) -> f64 {
    let d = shape - 1.0 / 3.0;
    let c = 1.0 / (9.0 * d).sqrt();
    let mut attempt = 0u64;
    loop {
        let x = normal_quantile(unit_open(absorb(base, 2 * attempt)));
        let u = unit_open(absorb(base, 2 * attempt + 1));
        attempt += 1;
        let t = 1.0 + c * x;
        if t <= 0.0 {
            continue;
        }
        let v = t * t * t;
        let x2 = x * x;
        if u < 1.0 - 0.0331 * x2 * x2 || u.ln() < 0.5 * x2 + d * (1.0 - v + v.ln()) {
            return d * v;
        }
    }
}

/// Inverse of the standard normal CDF (Wichura's AS 241, PPND16).
///
/// Relative accuracy about 1e-16 over (0, 1).
#[allow(clippy::excessive_precision)] // published coefficients
pub fn normal_quantile(p: f64) -> f64 {
    let q = p - 0.5;
    if q.abs() <= 0.425 {
        let r = 0.180625 - q * q;
        let num = (((((((2.509_080_928_730_122_672_7e3 * r + 3.343_057_558_358_812_810_5e4) * r
            + 6.726_577_092_700_870_085_3e4)
            * r
            + 4.592_195_393_154_987_145_7e4)
            * r
            + 1.373_169_376_550_946_112_5e4)
            * r
            + 1.971_590_950_306_551_442_7e3)
            * r
            + 1.331_416_678_917_843_774_5e2)
            * r
            + 3.387_132_872_796_366_608_0)
            * q;
        let den = ((((((5.226_495_278_852_854_561_0e3 * r + 2.872_908_573_572_194_267_4e4) * r
            + 3.930_789_580_009_271_061_0e4)
            * r
            + 2.121_379_430_158_659_586_7e4)
            * r
            + 5.394_196_021_424_751_107_7e3)
            * r
            + 6.871_870_074_920_579_083_0e2)
            * r
            + 4.231_333_070_160_091_125_2e1)
            * r
            + 1.0;
        return num / den;
    }
    let tail = if q < 0.0 { p } else { 1.0 - p };
    let mut r = (-tail.ln()).sqrt();
    let val = if r <= 5.0 {
        r -= 1.6;
        let num = ((((((7.745_450_142_783_414_076_4e-4 * r + 2.272_384_498_926_918_458_33e-2) * r
            + 2.417_807_251_774_506_117_7e-1)
            * r
            + 1.270_458_252_452_368_382_58)
            * r
            + 3.647_848_324_763_204_605_04)
            * r
            + 5.769_497_221_460_691_405_5)
            * r
            + 4.630_337_846_156_545_295_9)
            * r
            + 1.423_437_110_749_683_577_34;
        let den = ((((((1.050_750_071_644_416_843_24e-9 * r + 5.475_938_084_995_344_946e-4) * r
            + 1.519_866_656_361_645_719_66e-2)
            * r
            + 1.481_039_764_274_800_745_9e-1)
            * r
            + 6.897_673_349_851_000_045_5e-1)
            * r
            + 1.676_384_830_183_803_849_4)
            * r
            + 2.053_191_626_637_758_821_87)
            * r
            + 1.0;
        num / den
    } else {
        r -= 5.0;
        let num = ((((((2.010_334_399_292_288_132_65e-7 * r + 2.711_555_568_743_487_578_15e-5) * r
            + 1.242_660_947_388_078_438_6e-3)
            * r
            + 2.653_218_952_657_612_309_3e-2)
            * r
            + 2.965_605_718_285_048_912_3e-1)
            * r
            + 1.784_826_539_917_291_335_8)
            * r
            + 5.463_784_911_164_114_369_9)
            * r
            + 6.657_904_643_501_103_777_2;
        let den = ((((((2.044_263_103_389_939_785_64e-15 * r + 1.421_511_758_316_445_888_7e-7)
            * r
            + 1.846_318_317_510_054_681_8e-5)
            * r
            + 7.868_691_311_456_132_591e-4)
            * r
            + 1.487_536_129_085_061_485_25e-2)
            * r
            + 1.369_298_809_227_358_053_1e-1)
            * r
            + 5.998_322_065_558_879_376_9e-1)
            * r
            + 1.0;
        num / den
    };
    if q < 0.0 {
        -val
    } else {
        val
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn same_path_same_value() {
        let p = StreamPath::new(7).with_epoch(3).with_step(11).with_site(2);
        assert_eq!(uniform01(p).to_bits(), uniform01(p).to_bits());
        assert_eq!(gamma(p, 2.5).unwrap().to_bits(), gamma(p, 2.5).unwrap().to_bits());
    }

    #[test]
    fn single_field_changes_always_change_the_word() {
        let p = StreamPath::new(1).with_epoch(2).with_step(3).with_site(4).with_draw(5).with_channel(6);
        let w = p.word();
        for q in [
            p.with_epoch(9),
            p.with_step(9),
            p.with_site(9),
            p.with_draw(9),
            p.with_channel(9),
            StreamPath { master_seed: 9, ..p },
        ] {
            assert_ne!(q.word(), w);
        }
    }

    #[test]
    fn uniform_mean_and_open_interval() {
        let n = 1_000_000u64;
        let base = StreamPath::new(42);
        let mut sum = 0.0;
        let mut lo = 1.0f64;
        let mut hi = 0.0f64;
        for d in 0..n {
            let u = uniform01(base.with_draw(d));
            sum += u;
            lo = lo.min(u);
            hi = hi.max(u);
        }
        assert!((sum / n as f64 - 0.5).abs() < 0.002);
        assert!(lo > 0.0 && hi < 1.0);
        assert!(unit_open(0) > 0.0 && unit_open(u64::MAX) < 1.0);
    }

    #[test]
    fn quantile_frozen_values() {
        // reference values from scipy.special.ndtri
        assert_eq!(normal_quantile(0.5), 0.0);
        assert!((normal_quantile(0.975) - 1.959963984540054).abs() < 1e-12);
        assert!((normal_quantile(0.3) + 0.5244005127080409).abs() < 1e-12);
        assert!((normal_quantile(0.9) - 1.2815515655446004).abs() < 1e-12);
        assert!((normal_quantile(1e-10) + 6.361340902404056).abs() < 1e-10);
    }

    #[test]
    fn quantile_is_monotone_on_a_fine_grid() {
        let mut prev = f64::NEG_INFINITY;
        for k in 1..200_000u64 {
            let p = k as f64 / 200_000.0;
            let z = normal_quantile(p);
            assert!(z >= prev, "p = {p}");
            prev = z;
        }
        // region boundaries at |q| = 0.425 and r = 5
        for p in [0.075, 0.925, (-25.0f64).exp()] {
            for w in [-1e-13, 0.0, 1e-13] {
                let a = normal_quantile(p + w);
                let b = normal_quantile(p + w + 1e-15);
                assert!(b >= a);
            }
        }
    }

    #[test]
    fn exponential_examples() {
        assert!((exponential_from_uniform((-1.0f64).exp(), 1.0) - 1.0).abs() < 1e-15);
        let near_one = unit_open(u64::MAX);
        assert!(exponential_from_uniform(near_one, 1.0) > 0.0);
        assert!(exponential(StreamPath::new(0), 0.0).is_err());
        assert!(exponential(StreamPath::new(0), -1.0).is_err());

        let base = StreamPath::new(5);
        let n = 1_000_000;
        let mean: f64 = (0..n).map(|d| exponential(base.with_draw(d), 2.0).unwrap()).sum::<f64>() / n as f64;
        assert!((mean - 2.0).abs() < 0.01, "{mean}");
    }

    #[test]
    fn gamma_mean_and_errors() {
        assert!(gamma(StreamPath::new(0), 0.0).is_err());
        let base = StreamPath::new(6);
        let n = 1_000_000;
        let mean: f64 = (0..n).map(|d| gamma(base.with_draw(d), 3.0).unwrap()).sum::<f64>() / n as f64;
        assert!((mean - 3.0).abs() < 0.02, "{mean}");
        let small: f64 = (0..n).map(|d| gamma(base.with_draw(d), 0.4).unwrap()).sum::<f64>() / n as f64;
        assert!((small - 0.4).abs() < 0.01, "{small}");
    }
}
