//! The electron-equilibrium Poisson equation `Δφ = e^φ − 1 − ñ`.
//!
//! Written as `φ = (1−Δ)^{-1}(ñ − [e^x]_{≥2}(φ))` with `[e^x]_{≥2}(φ) =
//! e^φ − 1 − φ`, the right side is a contraction for small `ñ`. The
//! nonlinearity is evaluated on a zero-padded grid and truncated back.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::{drop_nyquist, l2_of_spectrum, Grid, Padding, SpectralField, C64};
use crate::par;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scheme {
    FixedPoint,
    Newton,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EllipticConfig {
    pub tol: f64,
    pub max_iter: usize,
    pub scheme: Scheme,
    pub padding: f64,
    /// Largest admissible `sup |ñ|`.
    pub smallness: f64,
}

impl Default for EllipticConfig {
    fn default() -> Self {
        Self { tol: 1e-11, max_iter: 500, scheme: Scheme::FixedPoint, padding: 2.0, smallness: 0.5 }
    }
}

impl EllipticConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.tol > 0.0) {
            return Err(Error::InvalidInput("elliptic tol must be positive".into()));
        }
        if self.max_iter < 1 {
            return Err(Error::InvalidInput("elliptic max_iter must be at least 1".into()));
        }
        if !(self.padding >= 1.0) {
            return Err(Error::InvalidInput("padding factor must be >= 1".into()));
        }
        if !(self.smallness > 0.0) {
            return Err(Error::InvalidInput("smallness threshold must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EllipticStats {
    pub iterations: usize,
    pub residual: f64,
    /// Largest observed `‖φ_{m+1}−φ_m‖ / ‖φ_m−φ_{m−1}‖` (fixed point only).
    pub contraction_ratio: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct EllipticSolution {
    pub phi: SpectralField,
    pub stats: EllipticStats,
}

/// `e^u − Σ_{m<order} u^m/m!`, accurate for small `u`.
pub fn exp_tail(u: f64, order: u32) -> f64 {
    if u.abs() < 0.5 {
        let mut term = 1.0;
        for m in 1..=order {
            term *= u / m as f64;
        }
        let mut sum = 0.0_f64;
        let mut m = order;
        while term.abs() > 1e-18 * sum.abs() && term != 0.0 {
            sum += term;
            m += 1;
            term *= u / m as f64;
        }
        sum
    } else {
        let mut head = 0.0;
        let mut term = 1.0;
        for m in 0..order {
            if m > 0 {
                term *= u / m as f64;
            }
            head += term;
        }
        u.exp() - head
    }
}

fn helmholtz(grid: &Grid, i: usize) -> f64 {
    let [a, b] = grid.xi(i);
    1.0 + a * a + b * b
}

struct Problem<'a> {
    grid: Grid,
    n_spec: &'a [C64],
    pad: Padding,
}

impl Problem<'_> {
    /// Spectrum of `e^φ − 1 − φ`.
    fn nonlinear(&self, phi: &[C64]) -> Vec<C64> {
        self.pad.map(phi, |u| exp_tail(u, 2))
    }

    /// Spectrum of `−Δφ + e^φ − 1 − ñ`.
    fn residual(&self, phi: &[C64]) -> Vec<C64> {
        let nl = self.nonlinear(phi);
        (0..self.grid.len())
            .map(|i| phi[i] * helmholtz(&self.grid, i) + nl[i] - self.n_spec[i])
            .collect()
    }

    fn norm(&self, spec: &[C64]) -> f64 {
        l2_of_spectrum(&self.grid, spec)
    }
}

fn check_finite(spec: &[C64]) -> Result<()> {
    if spec.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
        return Err(Error::NonFinite("elliptic iterate overflowed".into()));
    }
    Ok(())
}

/// Solve on spectra; `n_spec` is the spectrum of `ñ` on `grid`.
pub fn solve_phi_spectrum(
    grid: &Grid,
    n_spec: &[C64],
    phi_guess: Option<&[C64]>,
    cfg: &EllipticConfig,
) -> Result<(Vec<C64>, EllipticStats)> {
    cfg.validate()?;
    let n = grid.n;
    let mut n_clean = n_spec.to_vec();
    drop_nyquist(&mut n_clean, n);
    let pb = Problem { grid: *grid, n_spec: &n_clean, pad: Padding::new(n, cfg.padding) };
    let mut phi: Vec<C64> = match phi_guess {
        Some(g) => {
            let mut g = g.to_vec();
            drop_nyquist(&mut g, n);
            g
        }
        None => (0..grid.len()).map(|i| n_clean[i] / helmholtz(grid, i)).collect(),
    };
    match cfg.scheme {
        Scheme::FixedPoint => fixed_point(&pb, &mut phi, cfg),
        Scheme::Newton => newton(&pb, &mut phi, cfg),
    }
    .map(|stats| (phi, stats))
}

fn fixed_point(pb: &Problem, phi: &mut Vec<C64>, cfg: &EllipticConfig) -> Result<EllipticStats> {
    let g = pb.grid;
    let mut prev_step: Option<f64> = None;
    let mut ratio: Option<f64> = None;
    let scale = pb.norm(pb.n_spec).max(1e-300);
    for it in 1..=cfg.max_iter {
        let nl = pb.nonlinear(phi);
        check_finite(&nl)?;
        let next: Vec<C64> = (0..g.len()).map(|i| (pb.n_spec[i] - nl[i]) / helmholtz(&g, i)).collect();
        let diff: Vec<C64> = next.iter().zip(phi.iter()).map(|(a, b)| a - b).collect();
        let step = pb.norm(&diff);
        // residual of the current iterate equals (1−Δ)(φ_next − φ)
        let res = {
            let w: Vec<C64> = (0..g.len()).map(|i| diff[i] * helmholtz(&g, i)).collect();
            pb.norm(&w)
        };
        if let Some(p) = prev_step {
            if p > 1e-13 * scale && step > 1e-13 * scale {
                let r = step / p;
                ratio = Some(ratio.map_or(r, |q: f64| q.max(r)));
            }
        }
        prev_step = Some(step);
        *phi = next;
        if res <= cfg.tol {
            let residual = pb.norm(&pb.residual(phi));
            return Ok(EllipticStats { iterations: it, residual, contraction_ratio: ratio });
        }
        if !res.is_finite() {
            return Err(Error::NonFinite("elliptic residual is not finite".into()));
        }
    }
    Err(Error::NonConvergence { iterations: cfg.max_iter, residual: pb.norm(&pb.residual(phi)) })
}

fn dot(a: &[C64], b: &[C64]) -> f64 {
    par::chunked_sum(a.len(), |i| (a[i].conj() * b[i]).re)
}

fn newton(pb: &Problem, phi: &mut Vec<C64>, cfg: &EllipticConfig) -> Result<EllipticStats> {
    let g = pb.grid;
    let len = g.len();
    for it in 1..=cfg.max_iter {
        let r = pb.residual(phi);
        check_finite(&r)?;
        let res = pb.norm(&r);
        if res <= cfg.tol {
            return Ok(EllipticStats { iterations: it - 1, residual: res, contraction_ratio: None });
        }
        // (−Δ + e^φ) δ = −r by PCG with (1−Δ)^{-1} as preconditioner
        let weight = pb.pad.to_fine(phi).into_iter().map(|z| z.re.exp()).collect::<Vec<f64>>();
        let apply = |x: &[C64]| -> Vec<C64> {
            let mut fine = pb.pad.to_fine(x);
            for (z, w) in fine.iter_mut().zip(&weight) {
                *z = C64::new(z.re * w, 0.0);
            }
            let prod = pb.pad.to_coarse(fine);
            (0..len)
                .map(|i| {
                    let [a, b] = g.xi(i);
                    x[i] * (a * a + b * b) + prod[i]
                })
                .collect()
        };
        let precond = |x: &[C64]| -> Vec<C64> { (0..len).map(|i| x[i] / helmholtz(&g, i)).collect() };
        let mut delta = vec![C64::new(0.0, 0.0); len];
        let mut rr: Vec<C64> = r.iter().map(|z| -z).collect();
        let mut z = precond(&rr);
        let mut p = z.clone();
        let mut rz = dot(&rr, &z);
        let inner_tol = (1e-3 * res * res.min(1.0)).max(0.1 * cfg.tol);
        for _ in 0..200 {
            let ap = apply(&p);
            let alpha = rz / dot(&p, &ap);
            for i in 0..len {
                delta[i] += p[i] * alpha;
                rr[i] -= ap[i] * alpha;
            }
            if pb.norm(&rr) <= inner_tol {
                break;
            }
            z = precond(&rr);
            let rz_new = dot(&rr, &z);
            let beta = rz_new / rz;
            rz = rz_new;
            for i in 0..len {
                p[i] = z[i] + p[i] * beta;
            }
        }
        for i in 0..len {
            phi[i] += delta[i];
        }
        drop_nyquist(phi, g.n);
    }
    let residual = pb.norm(&pb.residual(phi));
    if residual <= cfg.tol {
        return Ok(EllipticStats { iterations: cfg.max_iter, residual, contraction_ratio: None });
    }
    Err(Error::NonConvergence { iterations: cfg.max_iter, residual })
}

/// Solve for `φ` given a real field `ñ`.
pub fn solve_phi(n_tilde: &SpectralField, cfg: &EllipticConfig) -> Result<EllipticSolution> {
    let sup = n_tilde.physical().iter().map(|z| z.re.abs()).fold(0.0, f64::max);
    if !sup.is_finite() {
        return Err(Error::NonFinite("density contains non-finite values".into()));
    }
    if sup > cfg.smallness {
        return Err(Error::Smallness { sup, threshold: cfg.smallness });
    }
    let grid = *n_tilde.grid();
    let (phi, stats) = solve_phi_spectrum(&grid, n_tilde.spectrum(), None, cfg)?;
    let phi = SpectralField::from_spectrum(grid, phi)?;
    Ok(EllipticSolution { phi: real_part(phi), stats })
}

fn real_part(f: SpectralField) -> SpectralField {
    let g = *f.grid();
    SpectralField::from_real(g, &f.real_part()).expect("same grid")
}

/// `‖Δφ − e^φ + 1 + ñ‖₂`, dealiased with the given padding factor.
pub fn residual(phi: &SpectralField, n_tilde: &SpectralField, padding: f64) -> f64 {
    let g = *phi.grid();
    let mut n_spec = n_tilde.spectrum().to_vec();
    drop_nyquist(&mut n_spec, g.n);
    let pb = Problem { grid: g, n_spec: &n_spec, pad: Padding::new(g.n, padding) };
    let mut p = phi.spectrum().to_vec();
    drop_nyquist(&mut p, g.n);
    pb.norm(&pb.residual(&p))
}

/// `E_i = (Δ−1)^{-1}[e^x]_{≥i}(φ)` with the tail evaluated on a 2× padded grid.
pub fn phi_expansion_terms(phi: &SpectralField, order: u32) -> Result<SpectralField> {
    if !(2..=4).contains(&order) {
        return Err(Error::InvalidInput(format!("expansion order must be 2, 3 or 4, got {order}")));
    }
    let g = *phi.grid();
    let mut spec = phi.spectrum().to_vec();
    drop_nyquist(&mut spec, g.n);
    let tail = Padding::new(g.n, 2.0).map(&spec, |u| exp_tail(u, order));
    let out: Vec<C64> = (0..g.len()).map(|i| -tail[i] / helmholtz(&g, i)).collect();
    Ok(real_part(SpectralField::from_spectrum(g, out)?))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exp_tail_matches_direct_formula() {
        for &u in &[-0.7_f64, -0.3, -1e-4, 0.0, 2e-3, 0.4, 1.2] {
            let direct2 = u.exp_m1() - u;
            assert!((exp_tail(u, 2) - direct2).abs() < 1e-15);
            let direct3 = direct2 - u * u / 2.0;
            assert!((exp_tail(u, 3) - direct3).abs() < 1e-15);
        }
        let u = 1e-3_f64;
        let series = u.powi(4) / 24.0 * (1.0 + u / 5.0 + u * u / 30.0);
        assert!((exp_tail(u, 4) / series - 1.0).abs() < 1e-10);
    }

    #[test]
    fn zero_density_gives_zero_potential() {
        let g = Grid::new(16, 10.0).unwrap();
        let sol = solve_phi(&SpectralField::zeros(g), &EllipticConfig::default()).unwrap();
        assert_eq!(sol.stats.iterations, 1);
        assert!(sol.phi.physical().iter().all(|z| z.norm() == 0.0));
    }

    #[test]
    fn constant_density() {
        let g = Grid::new(16, 10.0).unwrap();
        let c = 0.1;
        let n = SpectralField::from_real(g, &vec![c; g.len()]).unwrap();
        for scheme in [Scheme::FixedPoint, Scheme::Newton] {
            let cfg = EllipticConfig { scheme, tol: 1e-13, ..Default::default() };
            let sol = solve_phi(&n, &cfg).unwrap();
            for z in sol.phi.physical() {
                assert!((z.re - c.ln_1p()).abs() < 1e-12);
            }
            assert!(residual(&sol.phi, &n, 2.0) < 1e-12);
        }
    }

    #[test]
    fn smallness_guard() {
        let g = Grid::new(8, 10.0).unwrap();
        let n = SpectralField::from_real(g, &vec![0.6; g.len()]).unwrap();
        assert!(matches!(solve_phi(&n, &EllipticConfig::default()), Err(Error::Smallness { .. })));
    }

    #[test]
    fn bad_expansion_order() {
        let g = Grid::new(8, 10.0).unwrap();
        assert!(phi_expansion_terms(&SpectralField::zeros(g), 5).is_err());
    }
}
