//! Radial dispersion profile of the linearized ion system.
//!
//! `λ(x) = x·q(x)` with `q(x) = √((2+x²)/(1+x²))`. The group velocity `λ′`
//! decreases from `√2` at the origin to its minimum at the degenerate radius
//! `γ₀ = √(1+√7)` and then increases towards `1` at infinity. Everything in
//! this module is a pure function of its arguments.

use crate::error::{Error, Result};

/// Default half-width of the window around `γ₀` used by [`pi_map`] and the
/// space-resonance root search.
pub const DEFAULT_WINDOW: f64 = 0.5;

/// The literal window `2^{-D₁/3}` with `D₁ = 10³`.
pub fn proof_pi_window() -> f64 {
    2f64.powf(-1000.0 / 3.0)
}

/// The literal window `2^{-D₁}` of the space-resonance root statements.
pub fn proof_root_window() -> f64 {
    2f64.powi(-1000)
}

/// Sign of an interacting wave: `+1` for `U`, `-1` for `Ū`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, serde::Serialize, serde::Deserialize)]
pub enum Sign {
    Plus,
    Minus,
}

impl Sign {
    pub fn value(self) -> f64 {
        match self {
            Sign::Plus => 1.0,
            Sign::Minus => -1.0,
        }
    }

    pub fn flip(self) -> Sign {
        match self {
            Sign::Plus => Sign::Minus,
            Sign::Minus => Sign::Plus,
        }
    }
}

/// The pair `(ι₁, ι₂)` selecting a branch of the quadratic resonance function.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, serde::Serialize, serde::Deserialize)]
pub struct SignPair {
    pub iota1: Sign,
    pub iota2: Sign,
}

impl SignPair {
    pub const PP: SignPair = SignPair { iota1: Sign::Plus, iota2: Sign::Plus };
    pub const PM: SignPair = SignPair { iota1: Sign::Plus, iota2: Sign::Minus };
    pub const MP: SignPair = SignPair { iota1: Sign::Minus, iota2: Sign::Plus };
    pub const MM: SignPair = SignPair { iota1: Sign::Minus, iota2: Sign::Minus };

    pub fn new(iota1: Sign, iota2: Sign) -> Self {
        Self { iota1, iota2 }
    }

    pub fn equal(self) -> bool {
        self.iota1 == self.iota2
    }

    pub fn swapped(self) -> Self {
        Self { iota1: self.iota2, iota2: self.iota1 }
    }
}

/// A strictly positive radial frequency.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd)]
pub struct RadialPoint(f64);

impl RadialPoint {
    pub fn new(x: f64) -> Result<Self> {
        if x > 0.0 && x.is_finite() {
            Ok(Self(x))
        } else {
            Err(Error::Domain(format!("radial point must be positive and finite, got {x}")))
        }
    }

    pub fn get(self) -> f64 {
        self.0
    }
}

#[inline]
fn s_ratio(x2: f64) -> f64 {
    (2.0 + x2) / (1.0 + x2)
}

/// `q(x) = √((2+x²)/(1+x²))`; `q(0) = √2`.
#[inline]
pub fn q(x: f64) -> f64 {
    s_ratio(x * x).sqrt()
}

/// `λ(x) = x q(x)`.
#[inline]
pub fn lambda(x: f64) -> f64 {
    x * q(x)
}

/// `λ′(x)`; finite at `x = 0` where it equals `√2`.
#[inline]
pub fn dlambda(x: f64) -> f64 {
    let x2 = x * x;
    let a = 1.0 + x2;
    (x2 * x2 + 2.0 * x2 + 2.0) / (a * a * s_ratio(x2).sqrt())
}

#[inline]
pub fn d2lambda(x: f64) -> f64 {
    let x2 = x * x;
    let a = 1.0 + x2;
    let s = s_ratio(x2);
    x * (x2 * x2 - 2.0 * x2 - 6.0) / (a.powi(4) * s * s.sqrt())
}

#[inline]
pub fn d3lambda(x: f64) -> f64 {
    let x2 = x * x;
    let x3 = x2 * x;
    let x4 = x2 * x2;
    let a = 1.0 + x2;
    let s = s_ratio(x2);
    let num = -3.0 * (x4 - 2.0 * x3 - 4.0 * x - 2.0) * (x4 + 2.0 * x3 + 4.0 * x - 2.0);
    num / (a.powi(6) * s * s * s.sqrt())
}

#[inline]
pub fn d4lambda(x: f64) -> f64 {
    let x2 = x * x;
    let x4 = x2 * x2;
    let x6 = x4 * x2;
    let x8 = x4 * x4;
    let x10 = x8 * x2;
    let a = 1.0 + x2;
    let s = s_ratio(x2);
    let num = 3.0 * x * (4.0 * x10 - 29.0 * x8 - 180.0 * x6 - 252.0 * x4 + 140.0);
    num / (a.powi(8) * s.powi(3) * s.sqrt())
}

/// `λ^{(order)}(x)` for `x > 0` and `order ∈ 0..=4`.
///
/// Orders 3 and 4 come from hand-differentiating the closed form; they are
/// cross-checked against finite differences in the tests.
pub fn lambda_eval(x: f64, order: u32) -> Result<f64> {
    if !(x > 0.0) || !x.is_finite() {
        return Err(Error::Domain(format!("lambda_eval needs x > 0, got {x}")));
    }
    Ok(match order {
        0 => lambda(x),
        1 => dlambda(x),
        2 => d2lambda(x),
        3 => d3lambda(x),
        4 => d4lambda(x),
        _ => return Err(Error::Domain(format!("derivative order {order} not in 0..=4"))),
    })
}

/// The degenerate radius `γ₀ = √(1+√7)`, the positive root of `λ″`.
pub fn gamma0() -> f64 {
    (1.0 + 7.0_f64.sqrt()).sqrt()
}

/// Minimum of the group velocity, attained at `γ₀`.
pub fn min_group_velocity() -> f64 {
    dlambda(gamma0())
}

/// Supremum of `λ′` over `(0, ∞)`: the limit `√2` at the origin.
pub const MAX_GROUP_VELOCITY: f64 = std::f64::consts::SQRT_2;

/// Bisection on `[lo, hi]` where `f(lo)` and `f(hi)` have opposite signs (or one
/// vanishes). Stops at bracket width `1e-14` (relative to the scale of the
/// bracket) and returns the midpoint.
pub(crate) fn bisect<F: Fn(f64) -> f64>(f: F, mut lo: f64, mut hi: f64) -> f64 {
    let mut flo = f(lo);
    if flo == 0.0 {
        return lo;
    }
    if f(hi) == 0.0 {
        return hi;
    }
    let tol = 1e-14 * lo.abs().max(hi.abs()).max(1.0);
    for _ in 0..400 {
        if (hi - lo).abs() <= tol {
            break;
        }
        let mid = 0.5 * (lo + hi);
        let fm = f(mid);
        if fm == 0.0 {
            return mid;
        }
        if (fm > 0.0) == (flo > 0.0) {
            lo = mid;
            flo = fm;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

/// One guarded Newton step: accepted only if it stays within `[lo, hi]` and
/// does not increase the residual.
fn newton_polish<F, D>(x: f64, f: F, df: D, lo: f64, hi: f64) -> f64
where
    F: Fn(f64) -> f64,
    D: Fn(f64) -> f64,
{
    let fx = f(x);
    let d = df(x);
    if d == 0.0 || !d.is_finite() {
        return x;
    }
    let y = x - fx / d;
    let (a, b) = if lo < hi { (lo, hi) } else { (hi, lo) };
    if y >= a && y <= b && f(y).abs() <= fx.abs() {
        y
    } else {
        x
    }
}

/// Radii on the branch `(0, γ₀)` (`left = true`) or `(γ₀, ∞)` where `λ′`
/// equals `target`, if any.
pub fn invert_group_velocity(target: f64, left: bool) -> Option<f64> {
    let g0 = gamma0();
    let vmin = dlambda(g0);
    if !(target >= vmin) {
        return None;
    }
    if target == vmin {
        return Some(g0);
    }
    let f = |y: f64| dlambda(y) - target;
    if left {
        if target >= MAX_GROUP_VELOCITY {
            return None;
        }
        // λ′ decreasing on (0, γ₀): f(0⁺) > 0, f(γ₀) < 0.
        let lo = 0.0;
        let r = bisect(f, lo, g0);
        Some(newton_polish(r, f, d2lambda, lo, g0))
    } else {
        if target >= 1.0 {
            return None;
        }
        let mut hi = 2.0 * g0;
        while f(hi) < 0.0 {
            hi *= 2.0;
            if hi > 1e12 {
                return None;
            }
        }
        let r = bisect(f, g0, hi);
        Some(newton_polish(r, f, d2lambda, g0, hi))
    }
}

/// Reflection across `γ₀` preserving the group velocity: the unique `y` on the
/// other side of `γ₀` with `λ′(y) = λ′(x)`.
///
/// `window` bounds `|x − γ₀|`; [`DEFAULT_WINDOW`] is the practical choice.
pub fn pi_map(x: RadialPoint, window: f64) -> Result<f64> {
    let x = x.get();
    let g0 = gamma0();
    if (x - g0).abs() >= window {
        return Err(Error::Domain(format!(
            "pi_map argument {x} outside window |x - gamma0| < {window}"
        )));
    }
    if x == g0 {
        return Ok(g0);
    }
    let target = dlambda(x);
    invert_group_velocity(target, x > g0).ok_or_else(|| {
        Error::NoRoot(format!(
            "lambda'({x}) = {target} outside the range of the opposite branch"
        ))
    })
}

/// Roots of the space-resonance equations near `γ₀`.
///
/// * equal signs: `λ′(s−r) = λ′(r)`, with `r` and `s−r` in `B(γ₀, window)`.
///   One root is `s/2`; for `s > 2γ₀` two more solve `x + π(x) = s`.
/// * opposite signs: `λ′(r−s) = λ′(r)`, with `r` and `r−s` in the window; the
///   root solves `x − π(x) = s` with `x > γ₀`.
///
/// Returned roots are sorted and each has residual below `1e-12`. An empty
/// vector means no root lies in the window.
pub fn space_resonance_roots(s: f64, signs: SignPair, window: f64) -> Result<Vec<f64>> {
    if !(s > 0.0) || !s.is_finite() {
        return Err(Error::Domain(format!("space_resonance_roots needs s > 0, got {s}")));
    }
    let g0 = gamma0();
    let inside = |r: f64| (r - g0).abs() < window;
    let mut roots = Vec::new();
    if signs.equal() {
        let half = 0.5 * s;
        if inside(half) {
            roots.push(half);
        }
        if s > 2.0 * g0 {
            // h(x) = x + π(x) − s on the left branch; h(γ₀) = 2γ₀ − s < 0 and h
            // increases as x moves away from γ₀.
            let h = |x: f64| match invert_group_velocity(dlambda(x), false) {
                Some(y) => x + y - s,
                None => f64::INFINITY,
            };
            let lo = (g0 - window).max(1e-12);
            if h(lo) > 0.0 {
                let x = bisect(h, lo, g0);
                // π(x) = s − x up to rounding; use s − x so the pair is exact.
                let partner = s - x;
                if inside(x) && inside(partner) {
                    roots.push(x);
                    roots.push(partner);
                }
            }
        }
    } else {
        // g(x) = x − π(x) − s on the right branch, g(γ₀) = −s < 0, increasing.
        let g = |x: f64| match invert_group_velocity(dlambda(x), true) {
            Some(y) => x - y - s,
            None => f64::INFINITY,
        };
        let hi = g0 + window;
        if g(hi) > 0.0 {
            let x = bisect(g, g0, hi);
            if inside(x) && inside(x - s) {
                roots.push(x);
            }
        }
    }
    roots.sort_by(f64::total_cmp);
    Ok(roots)
}

/// Radial multipliers used throughout the crate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub enum Symbol {
    /// Dispersion relation `Λ(ξ) = λ(|ξ|)`.
    Lambda,
    /// `q(ξ)`.
    Q,
    /// `L(ξ) = ⟨ξ⟩^{-2}|ξ|`.
    L,
    /// `(1 − Δ)^{-1}`, i.e. `(1+|ξ|²)^{-1}`.
    InvOneMinusLaplacian,
}

/// Value of a radial multiplier at `xi`.
pub fn symbol_eval(xi: [f64; 2], which: Symbol) -> f64 {
    let r = xi[0].hypot(xi[1]);
    radial_symbol(r, which)
}

/// Same as [`symbol_eval`] with the radius given directly.
pub fn radial_symbol(r: f64, which: Symbol) -> f64 {
    match which {
        Symbol::Lambda => lambda(r),
        Symbol::Q => q(r),
        Symbol::L => r / (1.0 + r * r),
        Symbol::InvOneMinusLaplacian => 1.0 / (1.0 + r * r),
    }
}

/// Radii where `λ′(ρ) = r_prime`: empty below `λ′(γ₀)`, `{γ₀}` at the
/// minimum, otherwise one root per monotone branch that attains the value.
pub fn stationary_points(r_prime: f64) -> Vec<f64> {
    let vmin = min_group_velocity();
    if !(r_prime >= vmin) {
        return Vec::new();
    }
    if r_prime == vmin {
        return vec![gamma0()];
    }
    let mut out = Vec::new();
    if let Some(r) = invert_group_velocity(r_prime, true) {
        out.push(r);
    }
    if let Some(r) = invert_group_velocity(r_prime, false) {
        out.push(r);
    }
    out
}
