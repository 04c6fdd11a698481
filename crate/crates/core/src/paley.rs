//! Littlewood–Paley cutoffs, dyadic localizations and the weighted norms.
//!
//! The bump `φ` equals 1 on `[0, 5/4]` and vanishes beyond `3/2`, with the
//! exponential smooth-step in between. From it:
//!
//! * `φ_k(r) = φ(r/2^k)`, `ψ_k = φ_k − φ_{k−1}`;
//! * `φ^l_k = ψ_k` for `k > l`, `φ_l` for `k = l`;
//! * `φ̃^l_k = ψ_k` for `k < l`, `1 − φ_{l−1}` for `k = l`.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::dispersion::gamma0;
use crate::error::{Error, Result};
use crate::field::{l2_of_spectrum, Grid, SpectralField};
use crate::par;

const PLATEAU: f64 = 1.25;
const SUPPORT: f64 = 1.5;

/// Exponential smooth step: 0 for `t ≤ 0`, 1 for `t ≥ 1`.
pub fn smooth_step(t: f64) -> f64 {
    if t <= 0.0 {
        return 0.0;
    }
    if t >= 1.0 {
        return 1.0;
    }
    let g = |s: f64| (-1.0 / s).exp();
    let (a, b) = (g(t), g(1.0 - t));
    a / (a + b)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum CutoffKind {
    Phi,
    /// `φ_k`
    PhiK(i32),
    /// `ψ_k`
    Psi(i32),
    /// `φ^l_k`, requires `k ≥ l`
    Varphi { l: i32, k: i32 },
    /// `φ̃^l_k`, requires `k ≤ l`
    TildeVarphi { l: i32, k: i32 },
}

/// The cutoff family built on one bump; the plateau and support radii are
/// fixed at `5/4` and `3/2`.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct CutoffFamily;

impl CutoffFamily {
    pub fn phi(&self, r: f64) -> f64 {
        smooth_step((SUPPORT - r.abs()) / (SUPPORT - PLATEAU))
    }

    pub fn phi_k(&self, k: i32, r: f64) -> f64 {
        self.phi(r / 2f64.powi(k))
    }

    pub fn psi(&self, k: i32, r: f64) -> f64 {
        self.phi_k(k, r) - self.phi_k(k - 1, r)
    }

    pub fn varphi(&self, l: i32, k: i32, r: f64) -> Result<f64> {
        match k.cmp(&l) {
            std::cmp::Ordering::Greater => Ok(self.psi(k, r)),
            std::cmp::Ordering::Equal => Ok(self.phi_k(l, r)),
            std::cmp::Ordering::Less => Err(Error::InvalidInput(format!(
                "varphi^l_k needs k >= l, got l={l} k={k}"
            ))),
        }
    }

    pub fn tilde_varphi(&self, l: i32, k: i32, r: f64) -> Result<f64> {
        match k.cmp(&l) {
            std::cmp::Ordering::Less => Ok(self.psi(k, r)),
            std::cmp::Ordering::Equal => Ok(1.0 - self.phi_k(l - 1, r)),
            std::cmp::Ordering::Greater => Err(Error::InvalidInput(format!(
                "tilde varphi^l_k needs k <= l, got l={l} k={k}"
            ))),
        }
    }

    /// `P_{[a,b]} = Σ_{a≤k≤b} ψ_k = φ_b − φ_{a−1}`.
    pub fn band(&self, a: i32, b: i32, r: f64) -> f64 {
        self.phi_k(b, r) - self.phi_k(a - 1, r)
    }

    /// Radii outside which `ψ_k` vanishes.
    pub fn psi_support(&self, k: i32) -> (f64, f64) {
        (PLATEAU * 2f64.powi(k - 1), SUPPORT * 2f64.powi(k))
    }
}

pub fn cutoff_eval(family: &CutoffFamily, kind: CutoffKind, point: f64) -> Result<f64> {
    match kind {
        CutoffKind::Phi => Ok(family.phi(point)),
        CutoffKind::PhiK(k) => Ok(family.phi_k(k, point)),
        CutoffKind::Psi(k) => Ok(family.psi(k, point)),
        CutoffKind::Varphi { l, k } => family.varphi(l, k, point),
        CutoffKind::TildeVarphi { l, k } => family.tilde_varphi(l, k, point),
    }
}

/// Frequency shell `k`, spatial shell `j`, and `γ₀`-distance shell `n`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct DyadicIndex {
    pub k: i32,
    pub j: i32,
    pub n: u32,
}

impl DyadicIndex {
    pub fn new(k: i32, j: i32, n: u32) -> Self {
        Self { k, j, n }
    }

    /// Lowest spatial shell index paired with frequency shell `k`.
    pub fn spatial_floor(k: i32) -> i32 {
        (-k).max(0)
    }

    pub fn is_admissible(&self) -> bool {
        self.j >= Self::spatial_floor(self.k)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct NormParams {
    pub delta: f64,
    #[serde(rename = "N0")]
    pub n0: f64,
    #[serde(rename = "N1")]
    pub n1: f64,
    #[serde(rename = "N2")]
    pub n2: f64,
    #[serde(rename = "N3")]
    pub n3: f64,
    pub gamma_scale: f64,
}

impl Default for NormParams {
    fn default() -> Self {
        Self { delta: 1e-5, n0: 6.0, n1: 4.0, n2: 3.0, n3: 2.0, gamma_scale: 64.0 }
    }
}

impl NormParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.delta > 0.0 && self.delta < 1.0) {
            return Err(Error::InvalidInput(format!("delta must lie in (0,1), got {}", self.delta)));
        }
        if !(self.n0 > self.n1 && self.n1 > self.n2 && self.n2 > self.n3 && self.n3 > 0.0) {
            return Err(Error::InvalidInput("need N0 > N1 > N2 > N3 > 0".into()));
        }
        if !(self.gamma_scale > 0.0) || !self.gamma_scale.is_finite() {
            return Err(Error::InvalidInput("gamma_scale must be positive".into()));
        }
        Ok(())
    }

    /// Weight `2^{10k₊} 2^{δk} 2^{(1−20δ)(j+k)}`.
    pub fn z_weight(&self, j: i32, k: i32) -> f64 {
        let kp = k.max(0) as f64;
        let (j, k) = (j as f64, k as f64);
        (10.0 * kp + self.delta * k + (1.0 - 20.0 * self.delta) * (j + k)).exp2()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Projection {
    P,
    Q,
    QStar,
    AQStar,
}

fn check_frequency_shell(grid: &Grid, k: i32) -> Result<()> {
    let (lo, hi) = CutoffFamily.psi_support(k);
    if lo >= grid.nyquist() {
        return Err(Error::Unresolvable(format!("frequency shell {k} lies above the grid Nyquist frequency")));
    }
    if hi <= grid.dk() {
        return Err(Error::Unresolvable(format!("frequency shell {k} lies below the grid's lowest frequency")));
    }
    Ok(())
}

fn check_spatial_shell(grid: &Grid, j: i32, l: i32) -> Result<()> {
    if j < l {
        return Err(Error::InvalidInput(format!("spatial shell {j} below floor {l}")));
    }
    let inner = if j == l { 0.0 } else { CutoffFamily.psi_support(j).0 };
    if inner >= grid.max_radius() {
        return Err(Error::Unresolvable(format!("spatial shell {j} lies outside the domain")));
    }
    let outer = SUPPORT * 2f64.powi(j);
    if outer <= grid.dx() {
        return Err(Error::Unresolvable(format!("spatial shell {j} is below the grid spacing")));
    }
    Ok(())
}

fn check_gamma_shell(grid: &Grid, n: u32, params: &NormParams) -> Result<()> {
    let width = SUPPORT * 2f64.powi(-(n as i32)) / params.gamma_scale;
    if width < grid.dk() {
        return Err(Error::Unresolvable(format!(
            "gamma0 shell {n} (width {width:.3e}) is finer than the frequency spacing"
        )));
    }
    Ok(())
}

/// Spatial cutoff value for shell `j` paired with frequency shell `k`.
pub fn spatial_cutoff(j: i32, k: i32, r: f64) -> f64 {
    let l = DyadicIndex::spatial_floor(k);
    if j == l {
        CutoffFamily.phi_k(l, r)
    } else {
        CutoffFamily.psi(j, r)
    }
}

/// Multiplier of `A_n`: `φ̃⁰_{−n}(γs(|ξ|−γ₀))`.
pub fn gamma_shell(n: u32, gamma_scale: f64, r: f64) -> f64 {
    let arg = gamma_scale * (r - gamma0());
    CutoffFamily
        .tilde_varphi(0, -(n as i32), arg)
        .expect("k = -n <= 0 = l")
}

pub fn project(
    field: &SpectralField,
    index: DyadicIndex,
    which: Projection,
    params: &NormParams,
) -> Result<SpectralField> {
    let grid = *field.grid();
    let DyadicIndex { k, j, n } = index;
    check_frequency_shell(&grid, k)?;
    let pk = field.apply_radial(|r| CutoffFamily.psi(k, r));
    if which == Projection::P {
        return Ok(pk);
    }
    let l = DyadicIndex::spatial_floor(k);
    check_spatial_shell(&grid, j, l)?;
    let q = pk.apply_physical(|[a, b]| Complex64::new(spatial_cutoff(j, k, a.hypot(b)), 0.0));
    match which {
        Projection::Q => Ok(q),
        Projection::QStar => Ok(q.apply_radial(|r| CutoffFamily.band(k - 2, k + 2, r))),
        Projection::AQStar => {
            check_gamma_shell(&grid, n, params)?;
            let gs = params.gamma_scale;
            Ok(q.apply_radial(|r| CutoffFamily.band(k - 2, k + 2, r) * gamma_shell(n, gs, r)))
        }
        Projection::P => unreachable!(),
    }
}

/// Shells `k` whose `ψ_k` support meets the grid's frequencies.
pub fn resolvable_k(grid: &Grid) -> std::ops::RangeInclusive<i32> {
    let lo = (grid.dk() / SUPPORT).log2().floor() as i32 + 1;
    let hi = (grid.nyquist() / PLATEAU).log2().ceil() as i32;
    lo..=hi
}

/// Shells `j` whose spatial cutoff meets the domain (for `k ≥ 0`).
pub fn resolvable_j(grid: &Grid) -> std::ops::RangeInclusive<i32> {
    let hi = (grid.max_radius() / PLATEAU).log2().ceil() as i32;
    0..=hi
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ZNorm {
    pub value: f64,
    /// `(j, k)` attaining the supremum.
    pub argmax: Option<(i32, i32)>,
}

/// Truncated `Z`-norm: `sup 2^{10k₊}2^{δk}2^{(1−20δ)(j+k)}‖Q_{jk}f‖₂` over
/// the admissible, resolvable part of the given ranges.
pub fn z_norm(
    profile: &SpectralField,
    params: &NormParams,
    k_range: std::ops::RangeInclusive<i32>,
    j_range: std::ops::RangeInclusive<i32>,
) -> ZNorm {
    let grid = *profile.grid();
    let mut best = ZNorm { value: 0.0, argmax: None };
    for k in k_range {
        if check_frequency_shell(&grid, k).is_err() {
            continue;
        }
        let pk = profile.apply_radial(|r| CutoffFamily.psi(k, r));
        let phys = pk.physical();
        let l = DyadicIndex::spatial_floor(k);
        for j in j_range.clone() {
            if j < l || check_spatial_shell(&grid, j, l).is_err() {
                continue;
            }
            let s = par::chunked_sum(grid.len(), |i| {
                let [a, b] = grid.x(i);
                let c = spatial_cutoff(j, k, a.hypot(b));
                c * c * phys[i].norm_sqr()
            });
            let v = params.z_weight(j, k) * (s * grid.cell_area()).sqrt();
            if v > best.value {
                best = ZNorm { value: v, argmax: Some((j, k)) };
            }
        }
    }
    best
}

/// Full resolvable ranges for [`z_norm`].
pub fn z_norm_full(profile: &SpectralField, params: &NormParams) -> ZNorm {
    let g = *profile.grid();
    let k = resolvable_k(&g);
    let jmax = *resolvable_j(&g).end();
    let jmin = 0.max(-*k.end());
    z_norm(profile, params, k.clone(), jmin..=jmax.max(-*k.start()))
}

/// Relative content thresholds beyond which `Ω` is not trusted on the grid.
pub const BOUNDARY_STRIP: f64 = 0.1;
pub const ALIAS_TOL: f64 = 1e-8;

/// `Ωf = x₁∂₂f − x₂∂₁f` with spectral derivatives; errors when the field
/// reaches the periodic boundary or the top third of the spectrum.
pub fn omega(field: &SpectralField) -> Result<SpectralField> {
    let g = *field.grid();
    let edge = field.boundary_mass_fraction(BOUNDARY_STRIP * g.length);
    if edge > ALIAS_TOL {
        return Err(Error::Aliasing(format!(
            "rotation field needs decay at the boundary, boundary strip holds {edge:.2e} of the mass"
        )));
    }
    let hf = field.high_frequency_fraction(2.0 / 3.0);
    if hf > ALIAS_TOL {
        return Err(Error::Aliasing(format!(
            "rotation field needs spectral decay, top third of the spectrum holds {hf:.2e}"
        )));
    }
    let d1 = field.derivative(0);
    let d2 = field.derivative(1);
    let phys: Vec<Complex64> = (0..g.len())
        .map(|i| {
            let [a, b] = g.x(i);
            d2.physical()[i] * a - d1.physical()[i] * b
        })
        .collect();
    SpectralField::from_physical(g, phys)
}

fn weighted_l2(field: &SpectralField, w: impl Fn(f64) -> f64 + Sync + Send) -> f64 {
    let g = *field.grid();
    let spec = field.spectrum();
    let s = par::chunked_sum(g.len(), |i| {
        let m = w(g.xi_norm(i));
        m * m * spec[i].norm_sqr()
    });
    (s * g.cell_area() / g.len() as f64).sqrt()
}

/// `‖(|D|^δ + |D|^{N₀})f‖₂ + ‖|D|^δ Ω^{n_rot} f‖₂`.
pub fn energy_norm(field: &SpectralField, params: &NormParams, n_rot: u32) -> Result<f64> {
    params.validate()?;
    let (d, n0) = (params.delta, params.n0);
    let pow = |r: f64, e: f64| if r == 0.0 { 0.0 } else { r.powf(e) };
    let base = weighted_l2(field, |r| pow(r, d) + pow(r, n0));
    let mut rot = field.clone();
    for _ in 0..n_rot {
        rot = omega(&rot)?;
    }
    Ok(base + weighted_l2(&rot, |r| pow(r, d)))
}

/// `‖f‖₂` via the spectrum.
pub fn l2(field: &SpectralField) -> f64 {
    l2_of_spectrum(field.grid(), field.spectrum())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::C64;

    #[test]
    fn bump_plateau_and_support() {
        let f = CutoffFamily;
        assert_eq!(f.phi(1.0), 1.0);
        assert_eq!(f.phi(1.25), 1.0);
        assert_eq!(f.phi(1.6), 0.0);
        assert_eq!(f.phi(1.5), 0.0);
        assert!(f.phi(1.4) > 0.0 && f.phi(1.4) < 1.0);
        assert_eq!(f.phi(-1.0), 1.0);
    }

    #[test]
    fn index_errors() {
        let f = CutoffFamily;
        assert!(cutoff_eval(&f, CutoffKind::Varphi { l: 2, k: 1 }, 1.0).is_err());
        assert!(cutoff_eval(&f, CutoffKind::TildeVarphi { l: 0, k: 1 }, 1.0).is_err());
        assert_eq!(cutoff_eval(&f, CutoffKind::Varphi { l: 0, k: 0 }, 0.1).unwrap(), 1.0);
    }

    #[test]
    fn gamma_shells_partition() {
        for &r in &[1.0, 1.9, 1.91, 1.95, 2.5] {
            let s: f64 = (0..40).map(|n| gamma_shell(n, 64.0, r)).sum();
            assert!((s - 1.0).abs() < 1e-12, "r={r} sum={s}");
        }
    }

    #[test]
    fn params_validation() {
        assert!(NormParams::default().validate().is_ok());
        let bad = NormParams { n1: 7.0, ..Default::default() };
        assert!(bad.validate().is_err());
        let parsed: NormParams = serde_json::from_str(r#"{"delta": 0.01, "N0": 5}"#).unwrap();
        assert_eq!(parsed.n0, 5.0);
        assert!(serde_json::from_str::<NormParams>(r#"{"bogus": 1}"#).is_err());
    }

    #[test]
    fn plane_wave_is_eigenfunction() {
        let g = Grid::new(64, 2.0 * std::f64::consts::PI * 8.0).unwrap();
        // |ξ₀| = 1 = 2^0
        let f = SpectralField::from_fn(g, |[a, _]| C64::from_polar(1.0, a));
        let p = project(&f, DyadicIndex::new(0, 0, 0), Projection::P, &NormParams::default()).unwrap();
        let m = CutoffFamily.psi(0, 1.0);
        for (x, y) in f.physical().iter().zip(p.physical()) {
            assert!((x * m - y).norm() < 1e-12);
        }
    }

    #[test]
    fn radial_field_is_rotation_invariant() {
        let g = Grid::new(128, 40.0).unwrap();
        let f = SpectralField::from_fn(g, |[a, b]| C64::new((-(a * a + b * b) / 8.0).exp(), 0.0));
        let w = omega(&f).unwrap();
        assert!(w.sup_norm() < 1e-10);
    }

    #[test]
    fn omega_rejects_boundary_content() {
        let g = Grid::new(32, 10.0).unwrap();
        let f = SpectralField::from_fn(g, |[a, _]| C64::new(a.cos(), 0.0));
        assert!(matches!(omega(&f), Err(Error::Aliasing(_))));
    }
}
