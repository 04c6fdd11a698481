//! The linear flow `e^{itΛ(D)}` and sup-norm decay probes.

use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, StudentsT};

use crate::dispersion::{gamma0, lambda, MAX_GROUP_VELOCITY};
use crate::error::{Error, Result};
use crate::field::{fft_inverse, l2_of_spectrum, Grid, SpectralField, C64};
use crate::paley::{smooth_step, CutoffFamily};
use crate::par;

pub use crate::dispersion::stationary_points;

/// Multiply a spectrum by `e^{itλ(|ξ|)}` in place.
pub fn propagate_spectrum(grid: &Grid, spec: &mut [C64], t: f64) {
    let g = *grid;
    par::for_each_row(spec, g.n, |r, row| {
        let b = g.wavenumber(r);
        for (c, z) in row.iter_mut().enumerate() {
            let a = g.wavenumber(c);
            *z *= C64::from_polar(1.0, t * lambda(a.hypot(b)));
        }
    });
}

/// `e^{itΛ(D)} f`.
pub fn propagate(profile: &SpectralField, t: f64) -> SpectralField {
    let g = *profile.grid();
    let mut spec = profile.spectrum().to_vec();
    propagate_spectrum(&g, &mut spec, t);
    SpectralField::from_spectrum(g, spec).expect("same grid")
}

/// Radial frequency profiles for the decay probe.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DecayProfile {
    /// `ψ_k(|ξ|)`
    Shell { k: i32 },
    /// Flat on `[inner, outer]` with smooth edges of width `edge`.
    Annulus { inner: f64, outer: f64, edge: f64 },
    /// `φ(2^n γs (|ξ| − γ₀))`: the aggregate of the `γ₀` shells `n' ≥ n`.
    Gamma0Ball { n: u32, gamma_scale: f64 },
    /// `exp(−(|ξ| − center)²/(2 width²))`.
    Gaussian { center: f64, width: f64 },
}

/// Gaussian profiles are cut at this many widths (relative size 1e-32).
const GAUSSIAN_CUT: f64 = 12.0;

impl DecayProfile {
    /// Flat `[0.4, 0.6]` annulus with edges of width 0.2, clear of `γ₀`.
    pub fn generic() -> Self {
        DecayProfile::Annulus { inner: 0.4, outer: 0.6, edge: 0.2 }
    }

    /// Gaussian bump of width 0.05 centered on `|ξ| = γ₀`.
    pub fn gamma0_bump() -> Self {
        DecayProfile::Gaussian { center: gamma0(), width: 0.025 }
    }

    pub fn eval(&self, r: f64) -> f64 {
        match *self {
            DecayProfile::Shell { k } => CutoffFamily.psi(k, r),
            DecayProfile::Annulus { inner, outer, edge } => {
                smooth_step((r - inner + edge) / edge) * smooth_step((outer + edge - r) / edge)
            }
            DecayProfile::Gamma0Ball { n, gamma_scale } => {
                CutoffFamily.phi(2f64.powi(n as i32) * gamma_scale * (r - gamma0()))
            }
            DecayProfile::Gaussian { center, width } => {
                let u = (r - center) / width;
                if u.abs() > GAUSSIAN_CUT {
                    0.0
                } else {
                    (-0.5 * u * u).exp()
                }
            }
        }
    }

    /// Radii outside which the profile vanishes.
    pub fn support(&self) -> (f64, f64) {
        match *self {
            DecayProfile::Shell { k } => CutoffFamily.psi_support(k),
            DecayProfile::Annulus { inner, outer, edge } => ((inner - edge).max(0.0), outer + edge),
            DecayProfile::Gamma0Ball { n, gamma_scale } => {
                let w = 1.5 / (2f64.powi(n as i32) * gamma_scale);
                ((gamma0() - w).max(0.0), gamma0() + w)
            }
            DecayProfile::Gaussian { center, width } => {
                ((center - GAUSSIAN_CUT * width).max(0.0), center + GAUSSIAN_CUT * width)
            }
        }
    }

    /// `true` when the support stays clear of `γ₀`.
    pub fn avoids_gamma0(&self) -> bool {
        let (a, b) = self.support();
        !(a <= gamma0() && gamma0() <= b)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DecayProbeSpec {
    pub profile: DecayProfile,
    pub times: Vec<f64>,
    pub domain_length: f64,
    pub grid: usize,
}

impl DecayProbeSpec {
    /// Smallest domain satisfying the no-wrap rule `L ≥ 4√2 t_max`.
    pub fn min_domain(t_max: f64) -> f64 {
        4.0 * MAX_GROUP_VELOCITY * t_max
    }

    /// Log-spaced times on `[t_min, t_max]` and the smallest admissible domain.
    pub fn log_spaced(profile: DecayProfile, t_min: f64, t_max: f64, count: usize, grid: usize) -> Self {
        let count = count.max(2);
        let times = (0..count)
            .map(|i| t_min * (t_max / t_min).powf(i as f64 / (count - 1) as f64))
            .collect();
        Self { profile, times, domain_length: Self::min_domain(t_max), grid }
    }

    pub fn validate(&self) -> Result<Grid> {
        if !self.grid.is_power_of_two() || self.grid < 4 {
            return Err(Error::InvalidInput(format!("grid must be a power of two, got {}", self.grid)));
        }
        if self.times.is_empty() || self.times.iter().any(|&t| !(t > 0.0) || !t.is_finite()) {
            return Err(Error::InvalidInput("times must be positive and finite".into()));
        }
        if self.times.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::InvalidInput("times must be increasing".into()));
        }
        let t_max = *self.times.last().expect("nonempty");
        if self.domain_length < Self::min_domain(t_max) * (1.0 - 1e-12) {
            return Err(Error::InvalidInput(format!(
                "domain length {} violates the no-wrap rule (needs >= {})",
                self.domain_length,
                Self::min_domain(t_max)
            )));
        }
        let grid = Grid::new(self.grid, self.domain_length)?;
        let (lo, hi) = self.profile.support();
        if hi >= grid.nyquist() {
            return Err(Error::UnderResolved(format!(
                "profile support reaches {hi:.3}, grid Nyquist is {:.3}",
                grid.nyquist()
            )));
        }
        if hi - lo < 4.0 * grid.dk() {
            return Err(Error::UnderResolved("profile narrower than four frequency cells".into()));
        }
        Ok(grid)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SlopeFit {
    pub slope: f64,
    pub intercept: f64,
    /// 95% confidence interval for the slope.
    pub ci95: (f64, f64),
    pub points: usize,
}

/// Least-squares fit of `log y` against `log t`.
pub fn fit_loglog(t: &[f64], y: &[f64]) -> Result<SlopeFit> {
    let n = t.len();
    if n < 2 || y.len() != n {
        return Err(Error::InvalidInput("log-log fit needs at least two points".into()));
    }
    let xs: Vec<f64> = t.iter().map(|v| v.ln()).collect();
    let ys: Vec<f64> = y.iter().map(|v| v.ln()).collect();
    let mx = xs.iter().sum::<f64>() / n as f64;
    let my = ys.iter().sum::<f64>() / n as f64;
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let ci95 = if n > 2 {
        let sse: f64 = xs.iter().zip(&ys).map(|(x, y)| (y - intercept - slope * x).powi(2)).sum();
        let se = (sse / (n - 2) as f64 / sxx).sqrt();
        let q = StudentsT::new(0.0, 1.0, (n - 2) as f64)
            .expect("positive degrees of freedom")
            .inverse_cdf(0.975);
        (slope - q * se, slope + q * se)
    } else {
        (slope, slope)
    };
    Ok(SlopeFit { slope, intercept, ci95, points: n })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecayReport {
    pub times: Vec<f64>,
    pub sup_norms: Vec<f64>,
    pub l2_norms: Vec<f64>,
    /// Fit over the last decade of `times`.
    pub late: SlopeFit,
    /// Fit over the first decade of `times`, when it differs from `late`.
    pub early: Option<SlopeFit>,
    /// Relative change of the final sup-norm when sampling on the doubled grid.
    pub refinement_change: f64,
    pub max_boundary_fraction: f64,
    pub domain_length: f64,
    pub grid: usize,
}

impl DecayReport {
    pub fn slope(&self) -> f64 {
        self.late.slope
    }

    pub fn resolved(&self) -> bool {
        self.refinement_change < REFINEMENT_TOL
    }
}

pub const WRAP_TOL: f64 = 1e-6;
pub const REFINEMENT_TOL: f64 = 0.02;
/// Width of the boundary strip, as a fraction of the domain length.
pub const WRAP_STRIP: f64 = 0.125;

/// Unit-L² spectrum of the radial profile, centered at the grid origin.
fn initial_spectrum(grid: &Grid, profile: &DecayProfile) -> Vec<C64> {
    let g = *grid;
    let mut spec = vec![C64::new(0.0, 0.0); g.len()];
    par::for_each_row(&mut spec, g.n, |r, row| {
        let b = g.wavenumber(r);
        let sr = if g.mode(r) % 2 == 0 { 1.0 } else { -1.0 };
        for (c, z) in row.iter_mut().enumerate() {
            if r == g.n / 2 || c == g.n / 2 {
                continue;
            }
            let a = g.wavenumber(c);
            let sc = if g.mode(c) % 2 == 0 { 1.0 } else { -1.0 };
            *z = C64::new(profile.eval(a.hypot(b)) * sr * sc, 0.0);
        }
    });
    let norm = l2_of_spectrum(&g, &spec);
    if norm > 0.0 {
        for z in spec.iter_mut() {
            *z /= norm;
        }
    }
    spec
}

fn boundary_fraction(grid: &Grid, phys: &[C64]) -> f64 {
    let half = grid.length / 2.0;
    let w = WRAP_STRIP * grid.length;
    let total = par::chunked_sum(phys.len(), |i| phys[i].norm_sqr());
    let edge = par::chunked_sum(phys.len(), |i| {
        let [a, b] = grid.x(i);
        if a.abs().max(b.abs()) >= half - w {
            phys[i].norm_sqr()
        } else {
            0.0
        }
    });
    edge / total.max(1e-300)
}

fn sup_abs(phys: &[C64]) -> f64 {
    par::chunked_max(phys.len(), |i| phys[i].norm())
}

/// Sup-norm of `e^{itΛ}f` at every probe time, with the log-log slope fits.
pub fn decay_exponent_probe(spec: &DecayProbeSpec) -> Result<DecayReport> {
    let grid = spec.validate()?;
    let f0 = initial_spectrum(&grid, &spec.profile);
    let mut work = vec![C64::new(0.0, 0.0); grid.len()];
    let mut sups = Vec::with_capacity(spec.times.len());
    let mut l2s = Vec::with_capacity(spec.times.len());
    let mut max_edge: f64 = 0.0;
    let load = |work: &mut [C64], t: f64, shift: [f64; 2]| {
        let g = grid;
        par::for_each_row(work, g.n, |r, row| {
            let b = g.wavenumber(r);
            for (c, z) in row.iter_mut().enumerate() {
                let a = g.wavenumber(c);
                let i = r * g.n + c;
                *z = f0[i] * C64::from_polar(1.0, t * lambda(a.hypot(b)) + a * shift[0] + b * shift[1]);
            }
        });
        fft_inverse(&g, work);
    };
    for &t in &spec.times {
        load(&mut work, t, [0.0, 0.0]);
        let edge = boundary_fraction(&grid, &work);
        max_edge = max_edge.max(edge);
        if edge > WRAP_TOL {
            return Err(Error::WrapAround(format!(
                "boundary strip holds {edge:.2e} of the mass at t = {t}"
            )));
        }
        sups.push(sup_abs(&work));
        let s = par::chunked_sum(work.len(), |i| work[i].norm_sqr());
        l2s.push((s * grid.cell_area()).sqrt());
    }
    // the union of four half-cell shifted grids is the doubled grid
    let t_last = *spec.times.last().expect("nonempty");
    let base = *sups.last().expect("nonempty");
    let h = grid.dx() / 2.0;
    let mut fine = base;
    for shift in [[h, 0.0], [0.0, h], [h, h]] {
        load(&mut work, t_last, shift);
        fine = fine.max(sup_abs(&work));
    }
    let refinement_change = (fine - base) / fine;
    drop(work);

    let window = |lo: f64, hi: f64| -> (Vec<f64>, Vec<f64>) {
        spec.times
            .iter()
            .zip(&sups)
            .filter(|(t, _)| **t >= lo * (1.0 - 1e-12) && **t <= hi * (1.0 + 1e-12))
            .map(|(t, s)| (*t, *s))
            .unzip()
    };
    let (lt, ls) = window(t_last / 10.0, t_last);
    let late = fit_loglog(&lt, &ls)?;
    let t_first = spec.times[0];
    let early = if t_last > 10.0 * t_first * (1.0 + 1e-9) {
        let (et, es) = window(t_first, 10.0 * t_first);
        fit_loglog(&et, &es).ok()
    } else {
        None
    };
    Ok(DecayReport {
        times: spec.times.clone(),
        sup_norms: sups,
        l2_norms: l2s,
        late,
        early,
        refinement_change,
        max_boundary_fraction: max_edge,
        domain_length: spec.domain_length,
        grid: spec.grid,
    })
}
