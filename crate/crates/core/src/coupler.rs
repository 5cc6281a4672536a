//! Layered multishift and multiscale couplers.
//!
//! A coupler draws a random monotone step function `f` such that `f(s) - s`
//! (or `f(s) / s` for the multiscale gamma coupler) has the same law for
//! every `s`. Every shift coupler here reduces to a rectangle `[L, R]` with a
//! point `X` inside it, and
//!
//! ```text
//! f(s) = floor((s + R - X) / (R - L)) * (R - L) + X
//! ```
//!
//! Constructors read their coins from consecutive `draw` offsets of the
//! path they are given, in a fixed order (the variate `X` first).

use crate::error::{param, Error, Result};
use crate::rng::{exponential, gamma, normal01, uniform01, StreamPath};

/// The step function `f_{L,R,X}`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ShiftMap {
    pub left: f64,
    pub right: f64,
    pub anchor: f64,
}

impl ShiftMap {
    pub fn new(left: f64, right: f64, anchor: f64) -> Result<Self> {
        if !(left < right) || !left.is_finite() || !right.is_finite() || !anchor.is_finite() {
            return param(format!(
                "shift map needs finite L < R, got L = {left}, R = {right}, X = {anchor}"
            ));
        }
        Ok(Self {
            left,
            right,
            anchor,
        })
    }

    /// Step width `R - L`.
    pub fn width(&self) -> f64 {
        self.right - self.left
    }

    /// Index of the step containing `s`.
    #[inline]
    pub fn cell(&self, s: f64) -> f64 {
        ((s + self.right - self.anchor) / self.width()).floor()
    }

    #[inline]
    pub fn apply(&self, s: f64) -> f64 {
        self.cell(s) * self.width() + self.anchor
    }

    /// Number of distinct values `f` takes on `[a, b]`.
    pub fn image_count(&self, a: f64, b: f64) -> Result<u64> {
        if a > b {
            return param(format!("image interval needs a <= b, got [{a}, {b}]"));
        }
        Ok((self.cell(b) - self.cell(a)) as u64 + 1)
    }

    /// The distinct values of `f` on `[a, b]`, increasing.
    pub fn image_points(&self, a: f64, b: f64) -> Result<Vec<f64>> {
        let count = self.image_count(a, b)?;
        let first = self.cell(a);
        let w = self.width();
        Ok((0..count).map(|k| (first + k as f64) * w + self.anchor).collect())
    }
}

pub fn apply_shift(map: &ShiftMap, s: f64) -> f64 {
    map.apply(s)
}

pub fn image_points(map: &ShiftMap, a: f64, b: f64) -> Result<Vec<f64>> {
    map.image_points(a, b)
}

/// Coupler for the rectangular distribution on `[left, right)`.
pub fn rect_coupler(left: f64, right: f64, path: StreamPath) -> Result<ShiftMap> {
    rect_map(left, right, uniform01(path))
}

/// Rectangle map with `X = L + (R - L) u`.
pub fn rect_map(left: f64, right: f64, u: f64) -> Result<ShiftMap> {
    if !(left < right) {
        return param(format!("rectangle needs L < R, got [{left}, {right}]"));
    }
    ShiftMap::new(left, right, left + (right - left) * u)
}

/// `left`, forced strictly below `x`. The cell of the anchor is
/// `(x - R, x - L]` in shift terms, so `L = x` would move it.
fn below(left: f64, x: f64) -> f64 {
    if left < x {
        left
    } else {
        x.next_down()
    }
}

/// Rectangle of the reflected normal layering through the point `x`, with
/// `u` the uniform that places the point vertically.
///
/// `ln(1 - y)` goes through `ln_1p` so the short side stays accurate when
/// `y` is tiny.
pub fn normal_layer(sigma: f64, x: f64, u: f64) -> ShiftMap {
    let y = (-(x / sigma).powi(2) / 2.0).exp() * u;
    let near = sigma * (-2.0 * y.ln()).sqrt();
    let far = sigma * (-2.0 * (-y).ln_1p()).sqrt();
    // Reflected left half: Y := 1 - Y, which swaps the two roles.
    let (left, right) = if x < 0.0 { (-near, far) } else { (-far, near) };
    ShiftMap {
        left: below(left, x),
        right: right.max(x),
        anchor: x,
    }
}

/// Layered multishift coupler for `Normal(0, sigma^2)`.
///
/// Draws: `X` at offset 0, the layer height at offset 1. The step width is
/// never below `2 sigma sqrt(ln 4)`.
pub fn normal_coupler(sigma: f64, path: StreamPath) -> Result<ShiftMap> {
    if !(sigma > 0.0 && sigma.is_finite()) {
        return param(format!("sigma must be positive, got {sigma}"));
    }
    let x = sigma * normal01(path);
    let u = uniform01(path.offset(1));
    Ok(normal_layer(sigma, x, u))
}

/// Minimum step width of the normal coupler, `2 sigma sqrt(ln 4)`.
pub fn normal_min_width(sigma: f64) -> f64 {
    2.0 * sigma * 4f64.ln().sqrt()
}

/// Direction of an exponential shift.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Sign {
    Plus,
    Minus,
}

/// The simplified exponential coupler from its two exponential draws.
pub fn exponential_map(rise: f64, fall: f64, sign: Sign) -> Result<ShiftMap> {
    let w = rise + fall;
    match sign {
        Sign::Plus => ShiftMap::new(0.0, w, rise),
        Sign::Minus => ShiftMap::new(-w, 0.0, -fall),
    }
}

/// Layered coupler for the exponential distribution with mean `mu`.
///
/// `Sign::Plus` gives `f(s) - s ~ Exp(mu)`, `Sign::Minus` gives
/// `s - f(s) ~ Exp(mu)`. Draws: `X1` at offset 0, `X2` at offset 1.
pub fn exponential_coupler(mu: f64, path: StreamPath, sign: Sign) -> Result<ShiftMap> {
    if !(mu > 0.0 && mu.is_finite()) {
        return param(format!("exponential mean must be positive, got {mu}"));
    }
    let rise = exponential(path, mu)?;
    let fall = exponential(path.offset(1), mu)?;
    exponential_map(rise, fall, sign)
}

/// Multiscale step function for the gamma distribution,
///
/// ```text
/// g(s) = G exp(floor((ln s + X2) / (X1 + X2)) (X1 + X2) - X2)
/// ```
///
/// Maps built ex post facto carry a pivot `(s0, g(s0))` and are evaluated
/// relative to it so the pivot is reproduced exactly.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScaledGammaMap {
    /// `G`, a Gamma(alpha + 1) variate.
    pub gain: f64,
    /// `X1`, exponential with mean `1 / alpha`.
    pub rise: f64,
    /// `X2`, exponential with mean `1 / alpha`.
    pub fall: f64,
    pub alpha: f64,
    pivot: Option<(f64, f64)>,
}

impl ScaledGammaMap {
    pub fn new(gain: f64, rise: f64, fall: f64, alpha: f64) -> Result<Self> {
        if !(gain > 0.0 && rise >= 0.0 && fall >= 0.0 && alpha > 0.0 && rise + fall > 0.0) {
            return param(format!(
                "scaled gamma map needs G > 0, X1, X2 >= 0 and alpha > 0 (G = {gain}, X1 = {rise}, X2 = {fall}, alpha = {alpha})"
            ));
        }
        Ok(Self {
            gain,
            rise,
            fall,
            alpha,
            pivot: None,
        })
    }

    pub fn log_width(&self) -> f64 {
        self.rise + self.fall
    }

    /// Ex post facto anchor `(s0, g(s0))`, if any.
    pub fn pivot(&self) -> Option<(f64, f64)> {
        self.pivot
    }

    #[inline]
    fn log_cell(&self, s: f64) -> f64 {
        let ls = match self.pivot {
            Some((s0, _)) => (s / s0).ln(),
            None => s.ln(),
        };
        ((ls + self.fall) / self.log_width()).floor()
    }

    /// Evaluates the map. `s = 0` gives 0 through `ln 0 = -inf`.
    pub fn apply(&self, s: f64) -> Result<f64> {
        if s < 0.0 || s.is_nan() {
            return Err(Error::Domain(format!("scale argument must be >= 0, got {s}")));
        }
        let w = self.log_width();
        let k = self.log_cell(s);
        Ok(match self.pivot {
            Some((_, at_pivot)) => at_pivot * (k * w).exp(),
            None => self.gain * (k * w - self.fall).exp(),
        })
    }

    /// Number of distinct values on `[a, b]` with `0 < a <= b`.
    pub fn image_count(&self, a: f64, b: f64) -> Result<u64> {
        if !(a > 0.0 && a <= b) {
            return param(format!("scale interval needs 0 < a <= b, got [{a}, {b}]"));
        }
        Ok((self.log_cell(b) - self.log_cell(a)) as u64 + 1)
    }
}

pub fn apply_scale(map: &ScaledGammaMap, s: f64) -> Result<f64> {
    map.apply(s)
}

/// Multiscale coupler: `apply_scale(m, s) / s ~ Gamma(alpha, 1)` for every
/// `s > 0`. Draws: `G` at offset 0, `X1` at 1, `X2` at 2.
pub fn gamma_scale_coupler(alpha: f64, path: StreamPath) -> Result<ScaledGammaMap> {
    if !(alpha > 0.0 && alpha.is_finite()) {
        return param(format!("gamma shape must be positive, got {alpha}"));
    }
    let gain = gamma(path, alpha + 1.0)?;
    let rise = exponential(path.offset(1), 1.0 / alpha)?;
    let fall = exponential(path.offset(2), 1.0 / alpha)?;
    ScaledGammaMap::new(gain, rise, fall, alpha)
}

/// A unimodal density together with what the layered coupler needs from it.
///
/// The density may be unnormalized. `sample` must read only the words of the
/// path it is given (or words derived from that path). The default inverses
/// bisect to a relative tolerance of 1e-12.
pub trait Unimodal {
    fn density(&self, x: f64) -> f64;

    fn mode(&self) -> f64;

    fn sample(&self, path: StreamPath) -> Result<f64>;

    fn peak(&self) -> f64 {
        self.density(self.mode())
    }

    /// Leftmost `x <= mode` with `density(x) >= y`.
    fn left_inverse(&self, y: f64) -> Result<f64> {
        bisect_inverse(self, y, -1.0)
    }

    /// Rightmost `x >= mode` with `density(x) >= y`.
    fn right_inverse(&self, y: f64) -> Result<f64> {
        bisect_inverse(self, y, 1.0)
    }
}

fn bisect_inverse<D: Unimodal + ?Sized>(spec: &D, y: f64, dir: f64) -> Result<f64> {
    let mode = spec.mode();
    let peak = spec.peak();
    if !(y > 0.0 && y <= peak) {
        return Err(Error::Numeric { y });
    }
    if y == peak {
        return Ok(mode);
    }
    // bracket: `inside` has density >= y, `outside` has density < y
    let inside = mode;
    let mut step = 1.0;
    let mut outside = mode + dir * step;
    let mut expansions = 0;
    while spec.density(outside) >= y {
        step *= 2.0;
        outside = mode + dir * step;
        expansions += 1;
        if expansions > 1100 || !outside.is_finite() {
            return Err(Error::Numeric { y });
        }
    }
    let (mut a, mut b) = (inside, outside);
    for _ in 0..2000 {
        let mid = 0.5 * (a + b);
        if (b - a).abs() <= 1e-12 * mid.abs().max(1.0) || mid == a || mid == b {
            break;
        }
        if spec.density(mid) >= y {
            a = mid;
        } else {
            b = mid;
        }
    }
    let x = 0.5 * (a + b);
    if x.is_finite() {
        Ok(x)
    } else {
        Err(Error::Numeric { y })
    }
}

/// `Normal(0, sigma^2)` with density `exp(-(x / sigma)^2 / 2)`.
#[derive(Debug, Clone, Copy)]
pub struct NormalSpec {
    pub sigma: f64,
}

impl Unimodal for NormalSpec {
    fn density(&self, x: f64) -> f64 {
        (-(x / self.sigma).powi(2) / 2.0).exp()
    }

    fn mode(&self) -> f64 {
        0.0
    }

    fn sample(&self, path: StreamPath) -> Result<f64> {
        Ok(self.sigma * normal01(path))
    }

    fn left_inverse(&self, y: f64) -> Result<f64> {
        if !(y > 0.0 && y <= 1.0) {
            return Err(Error::Numeric { y });
        }
        Ok(-self.sigma * (-2.0 * y.ln()).sqrt())
    }

    fn right_inverse(&self, y: f64) -> Result<f64> {
        Ok(-self.left_inverse(y)?)
    }
}

/// Exponential with the given mean, density `exp(-x / mean)` on `x >= 0`.
#[derive(Debug, Clone, Copy)]
pub struct ExponentialSpec {
    pub mean: f64,
}

impl Unimodal for ExponentialSpec {
    fn density(&self, x: f64) -> f64 {
        if x < 0.0 {
            0.0
        } else {
            (-x / self.mean).exp()
        }
    }

    fn mode(&self) -> f64 {
        0.0
    }

    fn sample(&self, path: StreamPath) -> Result<f64> {
        exponential(path, self.mean)
    }

    fn left_inverse(&self, y: f64) -> Result<f64> {
        if !(y > 0.0 && y <= 1.0) {
            return Err(Error::Numeric { y });
        }
        Ok(0.0)
    }

    fn right_inverse(&self, y: f64) -> Result<f64> {
        if !(y > 0.0 && y <= 1.0) {
            return Err(Error::Numeric { y });
        }
        Ok(-self.mean * y.ln())
    }
}

/// How the region under the density is cut into layers.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Layering {
    /// Left of the mode is flipped upside down; widths are bounded below.
    Reflected,
    /// Plain horizontal slices; a maximal coupling of any two shifts.
    Maximal,
}

fn layer_through<D: Unimodal + ?Sized>(
    spec: &D,
    x: f64,
    u: f64,
    layering: Layering,
) -> Result<(f64, f64)> {
    let mut y = spec.density(x) * u;
    let (left, right) = match layering {
        Layering::Reflected => {
            let peak = spec.peak();
            if x < spec.mode() {
                y = peak - y;
            }
            (spec.left_inverse(peak - y)?, spec.right_inverse(y)?)
        }
        Layering::Maximal => (spec.left_inverse(y)?, spec.right_inverse(y)?),
    };
    // inverses found by bisection may land a tolerance short of x
    Ok((below(left, x), right.max(x)))
}

/// Layered multishift coupler for a generic unimodal distribution.
/// Draws: the variate at offset 0, the layer height at offset 1.
pub fn unimodal_coupler<D: Unimodal + ?Sized>(
    spec: &D,
    path: StreamPath,
    layering: Layering,
) -> Result<ShiftMap> {
    let x = spec.sample(path)?;
    let u = uniform01(path.offset(1));
    let (left, right) = layer_through(spec, x, u, layering)?;
    ShiftMap::new(left, right, x)
}

/// Reflected layered coupler conditioned on `f(s0) = x0`.
///
/// When `x0 - s0` is drawn from the base distribution the returned map has
/// the law of [`unimodal_coupler`]. Reads the layer height at offset 1 of
/// `path`, matching the unconditioned coupler.
pub fn epf_shift<D: Unimodal + ?Sized>(
    spec: &D,
    s0: f64,
    x0: f64,
    path: StreamPath,
) -> Result<ShiftMap> {
    let x = x0 - s0;
    if !(spec.density(x) > 0.0) {
        return Err(Error::Domain(format!(
            "x0 - s0 = {x} lies outside the support"
        )));
    }
    let u = uniform01(path.offset(1));
    let (left, right) = layer_through(spec, x, u, Layering::Reflected)?;
    ShiftMap::new(left, right, x0)
}

/// Multiscale gamma coupler conditioned on `g(s0) = g_star`.
///
/// With `g_star = s0 * Gamma(alpha)` the result has the law of
/// [`gamma_scale_coupler`]. Draws: the exponential increment at offset 0,
/// `X1` at offset 1.
pub fn epf_gamma(alpha: f64, s0: f64, g_star: f64, path: StreamPath) -> Result<ScaledGammaMap> {
    if !(alpha > 0.0 && s0 > 0.0 && g_star > 0.0) {
        return param(format!(
            "ex post facto gamma needs alpha, s0, G* > 0 (got {alpha}, {s0}, {g_star})"
        ));
    }
    let g_alpha = g_star / s0;
    let increment = exponential(path, 1.0)?;
    let gain = g_alpha + increment;
    let fall = (increment / g_alpha).ln_1p();
    let rise = exponential(path.offset(1), 1.0 / alpha)?;
    let mut map = ScaledGammaMap::new(gain, rise, fall, alpha)?;
    map.pivot = Some((s0, g_star));
    Ok(map)
}

/// Product of independent coordinate shift maps.
#[derive(Debug, Clone, PartialEq)]
pub struct BoxMap {
    pub coords: Vec<ShiftMap>,
}

impl BoxMap {
    pub fn apply(&self, s: &[f64]) -> Result<Vec<f64>> {
        if s.len() != self.coords.len() {
            return param(format!(
                "point has {} coordinates, map has {}",
                s.len(),
                self.coords.len()
            ));
        }
        Ok(self.coords.iter().zip(s).map(|(m, &x)| m.apply(x)).collect())
    }

    /// Volume of each cell that is mapped to a single point.
    pub fn cell_volume(&self) -> f64 {
        self.coords.iter().map(ShiftMap::width).product()
    }
}

/// Spherical normal coupler in `d` dimensions; coordinate `k` reads draws
/// `2k` and `2k + 1`.
pub fn multidim_normal_coupler(sigma_coord: f64, d: usize, path: StreamPath) -> Result<BoxMap> {
    if d == 0 {
        return param("dimension must be at least 1");
    }
    let coords = (0..d as u64)
        .map(|k| normal_coupler(sigma_coord, path.offset(2 * k)))
        .collect::<Result<Vec<_>>>()?;
    Ok(BoxMap { coords })
}
