//! Pseudo-spectral integration of the ion system on a periodic box.
//!
//! State variables are real `(ρ, ψ)` with `ñ = |D|ρ`:
//!
//! ```text
//! ρ_t = −(div/|D|)((1+ñ)∇ψ)
//! ψ_t = −|∇ψ|²/2 − log(1+ñ) − φ,      Δφ = e^φ − 1 − ñ
//! ```
//!
//! The linear part is `U_t = iλ(D)U` for `U = ψ + iq(D)ρ`, which rotates the
//! real pair `(ψ, qρ)`. Steps are Lawson RK4: the rotation is applied exactly
//! and RK4 acts on the nonlinear remainder. Products, `log(1+ñ)` and `e^φ`
//! are evaluated on a zero-padded grid; the Nyquist modes of the state are
//! kept at zero.

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::dispersion::{gamma0, lambda, q};
use crate::elliptic::{self, EllipticConfig};
use crate::error::{Error, Result};
use crate::field::{drop_nyquist, Grid, Padding, SpectralField, C64};
use crate::paley::{self, NormParams};
use crate::par::{self, chunk_rng};
use crate::semigroup::propagate_spectrum;

/// `1 + ñ` must stay above this on the padded grid.
pub const VACUUM_THRESHOLD: f64 = 0.5;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Dealias {
    /// Zero-padding factor for pointwise nonlinearities.
    pub padding: f64,
    /// Order `p` of the filter `exp(−36 (|ξ|∞/ξ_N)^p)` on the nonlinear
    /// terms; 0 disables it.
    pub filter_order: u32,
}

impl Default for Dealias {
    fn default() -> Self {
        Self { padding: 2.0, filter_order: 0 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Shape {
    /// Smooth radial band `k_min ≤ |ξ| ≤ k_max`.
    Band { k_min: f64, k_max: f64 },
    /// Band concentrated on `||ξ| − γ₀| ≤ width`.
    Gamma0 { width: f64 },
}

impl Shape {
    fn support(&self) -> (f64, f64) {
        match *self {
            Shape::Band { k_min, k_max } => (k_min, k_max),
            Shape::Gamma0 { width } => (gamma0() - width, gamma0() + width),
        }
    }

    fn weight(&self, r: f64) -> f64 {
        let (a, b) = self.support();
        if r <= a || r >= b {
            return 0.0;
        }
        let t = (r - a) / (b - a);
        // C^∞ bump on (a, b)
        (-1.0 / (t * (1.0 - t)) + 4.0).exp()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Normalization {
    /// `energy_norm(U₀) = amplitude`
    Energy,
    /// `sup |ñ₀| = amplitude`
    SupDensity,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct InitialData {
    pub amplitude: f64,
    pub normalization: Normalization,
    pub shape: Shape,
    /// Width of the Gaussian envelope in physical space.
    pub envelope: f64,
    pub seed: u64,
}

impl Default for InitialData {
    fn default() -> Self {
        Self {
            amplitude: 1e-2,
            normalization: Normalization::Energy,
            shape: Shape::Band { k_min: 0.6, k_max: 2.6 },
            envelope: 3.0,
            seed: 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SimConfig {
    pub grid: usize,
    pub domain_length: f64,
    pub dt: f64,
    pub t_end: f64,
    pub dealias: Dealias,
    pub diagnostics_every: usize,
    /// Snapshot cadence in steps for the CLI; 0 writes none.
    pub snapshot_every: usize,
    pub nonlinear: bool,
    pub initial_data: InitialData,
    pub elliptic: EllipticConfig,
    pub norm_params: NormParams,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            grid: 256,
            domain_length: 80.0,
            dt: 0.1,
            t_end: 10.0,
            dealias: Dealias::default(),
            diagnostics_every: 10,
            snapshot_every: 0,
            nonlinear: true,
            initial_data: InitialData::default(),
            elliptic: EllipticConfig::default(),
            norm_params: NormParams::default(),
        }
    }
}

impl SimConfig {
    pub fn validate(&self) -> Result<Grid> {
        let bad = |m: String| Err(Error::InvalidInput(m));
        if !self.grid.is_power_of_two() || self.grid < 4 {
            return bad(format!("grid must be a power of two >= 4, got {}", self.grid));
        }
        if !(self.domain_length > 0.0) || !self.domain_length.is_finite() {
            return bad("domain_length must be positive".into());
        }
        if !(self.dt > 0.0) || !self.dt.is_finite() {
            return bad(format!("dt must be positive, got {}", self.dt));
        }
        if !(self.t_end >= 0.0) || !self.t_end.is_finite() {
            return bad("t_end must be nonnegative".into());
        }
        if self.diagnostics_every == 0 {
            return bad("diagnostics_every must be at least 1".into());
        }
        if !(self.dealias.padding >= 1.0) {
            return bad("dealias padding must be >= 1".into());
        }
        let id = &self.initial_data;
        if !(id.amplitude >= 0.0) || !id.amplitude.is_finite() {
            return bad("amplitude must be nonnegative".into());
        }
        if !(id.envelope > 0.0) {
            return bad("envelope must be positive".into());
        }
        let (a, b) = id.shape.support();
        if !(a >= 0.0 && b > a) {
            return bad("initial shape support must be a nonempty interval in [0, inf)".into());
        }
        self.elliptic.validate()?;
        self.norm_params.validate()?;
        Grid::new(self.grid, self.domain_length)
    }

    pub fn steps(&self) -> usize {
        (self.t_end / self.dt - 1e-9).ceil().max(0.0) as usize
    }
}

/// `(ρ, ψ)` with the matching `φ`.
#[derive(Debug, Clone, PartialEq)]
pub struct SimState {
    pub rho: SpectralField,
    pub psi: SpectralField,
    pub t: f64,
    pub phi: SpectralField,
}

impl SimState {
    pub fn grid(&self) -> &Grid {
        self.rho.grid()
    }

    /// `ñ = |D|ρ`
    pub fn density(&self) -> SpectralField {
        self.rho.apply_radial(|r| r)
    }

    /// `U = ψ + iq(D)ρ`
    pub fn u(&self) -> SpectralField {
        let g = *self.grid();
        let (r, p) = (self.rho.spectrum(), self.psi.spectrum());
        let spec = (0..g.len()).map(|i| p[i] + C64::i() * q(g.xi_norm(i)) * r[i]).collect();
        SpectralField::from_spectrum(g, spec).expect("finite")
    }

    /// `V = e^{−itλ(D)}U`
    pub fn profile(&self) -> SpectralField {
        let g = *self.grid();
        let mut spec = self.u().into_spectrum();
        propagate_spectrum(&g, &mut spec, -self.t);
        SpectralField::from_spectrum(g, spec).expect("finite")
    }
}

/// `∫ñ dx` by grid sum.
pub fn mass(state: &SimState) -> f64 {
    let n = state.density();
    par::chunked_sum(n.grid().len(), |i| n.physical()[i].re) * state.grid().cell_area()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiagnosticsRecord {
    pub t: f64,
    pub mass: f64,
    pub hamiltonian: f64,
    pub l2_u: f64,
    pub energy_norm: f64,
    pub z_norm: f64,
    pub sup_n: f64,
    pub sup_gradpsi: f64,
    /// Set on the final record of a run stopped by a guard.
    pub flag: Option<String>,
}

impl DiagnosticsRecord {
    pub const CSV_HEADER: &'static str = "t,mass,hamiltonian,l2_u,energy_norm,z_norm,sup_n,sup_gradpsi,flag";

    pub fn csv_row(&self) -> String {
        let f = |v: f64| format!("{v:e}");
        format!(
            "{},{},{},{},{},{},{},{},{}",
            f(self.t),
            f(self.mass),
            f(self.hamiltonian),
            f(self.l2_u),
            f(self.energy_norm),
            f(self.z_norm),
            f(self.sup_n),
            f(self.sup_gradpsi),
            self.flag.as_deref().unwrap_or("").replace(',', ";")
        )
    }

    pub fn is_finite(&self) -> bool {
        [self.t, self.mass, self.hamiltonian, self.l2_u, self.energy_norm, self.z_norm, self.sup_n, self.sup_gradpsi]
            .iter()
            .all(|v| v.is_finite())
    }
}

type Pair = (Vec<C64>, Vec<C64>);

/// Time stepper for one configuration.
#[derive(Debug, Clone)]
pub struct Simulator {
    grid: Grid,
    pad: Padding,
    phi_pad: Padding,
    elliptic: EllipticConfig,
    norm_params: NormParams,
    filter_order: u32,
    nonlinear: bool,
    lam: Vec<f64>,
    qs: Vec<f64>,
}

fn zeros(n: usize) -> Vec<C64> {
    vec![C64::new(0.0, 0.0); n]
}

impl Simulator {
    pub fn new(cfg: &SimConfig) -> Result<Self> {
        let grid = cfg.validate()?;
        let lam = (0..grid.len()).map(|i| lambda(grid.xi_norm(i))).collect();
        let qs = (0..grid.len()).map(|i| q(grid.xi_norm(i))).collect();
        Ok(Self {
            grid,
            pad: Padding::new(grid.n, cfg.dealias.padding),
            phi_pad: Padding::new(grid.n, cfg.elliptic.padding),
            elliptic: cfg.elliptic,
            norm_params: cfg.norm_params,
            filter_order: cfg.dealias.filter_order,
            nonlinear: cfg.nonlinear,
            lam,
            qs,
        })
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    /// State from spectra of `ρ` and `ψ`, solving for `φ`.
    pub fn state(&self, rho: SpectralField, psi: SpectralField, t: f64) -> Result<SimState> {
        let (mut r, mut p) = (rho.into_spectrum(), psi.into_spectrum());
        drop_nyquist(&mut r, self.grid.n);
        drop_nyquist(&mut p, self.grid.n);
        let phi = self.solve_phi(&r, None)?;
        let f = |s| SpectralField::from_spectrum(self.grid, s);
        Ok(SimState { rho: f(r)?, psi: f(p)?, t, phi: f(phi)? })
    }

    fn density_spec(&self, rho: &[C64]) -> Vec<C64> {
        (0..self.grid.len()).map(|i| rho[i] * self.grid.xi_norm(i)).collect()
    }

    fn solve_phi(&self, rho: &[C64], guess: Option<&[C64]>) -> Result<Vec<C64>> {
        let n = self.density_spec(rho);
        let fine = self.pad.to_fine(&n);
        let (lo, hi) = fine.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), z| (a.min(z.re), b.max(z.re)));
        if !(lo.is_finite() && hi.is_finite()) {
            return Err(Error::NonFinite("density is not finite".into()));
        }
        if 1.0 + lo <= VACUUM_THRESHOLD {
            return Err(Error::Vacuum { min_density: 1.0 + lo, threshold: VACUUM_THRESHOLD });
        }
        let sup = lo.abs().max(hi.abs());
        if sup > self.elliptic.smallness {
            return Err(Error::Smallness { sup, threshold: self.elliptic.smallness });
        }
        let (phi, _) = elliptic::solve_phi_spectrum(&self.grid, &n, guess, &self.elliptic)?;
        Ok(phi)
    }

    fn filter(&self, spec: &mut [C64]) {
        if self.filter_order == 0 {
            return;
        }
        let g = self.grid;
        let p = self.filter_order as i32;
        for (i, z) in spec.iter_mut().enumerate() {
            let [a, b] = g.xi(i);
            let r = a.abs().max(b.abs()) / g.nyquist();
            *z *= (-36.0 * r.powi(p)).exp();
        }
    }

    /// Nonlinear parts `(N_ρ, N_ψ)` and `φ`, all as spectra.
    fn nonlinear_terms(&self, rho: &[C64], psi: &[C64], guess: Option<&[C64]>) -> Result<(Vec<C64>, Vec<C64>, Vec<C64>)> {
        let g = self.grid;
        let len = g.len();
        let phi = self.solve_phi(rho, guess)?;
        let n = self.density_spec(rho);
        let grad = |axis: usize| -> Vec<C64> {
            (0..len).map(|i| psi[i] * C64::new(0.0, g.xi(i)[axis])).collect()
        };
        let nf = self.pad.to_fine(&n);
        let g1 = self.pad.to_fine(&grad(0));
        let g2 = self.pad.to_fine(&grad(1));
        let m = self.pad.m * self.pad.m;
        let mut f1 = zeros(m);
        let mut f2 = zeros(m);
        let mut pot = zeros(m);
        for k in 0..m {
            let (nn, a, b) = (nf[k].re, g1[k].re, g2[k].re);
            f1[k] = C64::new(nn * a, 0.0);
            f2[k] = C64::new(nn * b, 0.0);
            pot[k] = C64::new(-0.5 * (a * a + b * b) - (nn.ln_1p() - nn), 0.0);
        }
        let (f1, f2, pot) = (self.pad.to_coarse(f1), self.pad.to_coarse(f2), self.pad.to_coarse(pot));
        let mut n_rho = zeros(len);
        let mut n_psi = zeros(len);
        for i in 0..len {
            let r = g.xi_norm(i);
            if r > 0.0 {
                let [a, b] = g.xi(i);
                n_rho[i] = -(C64::i() * (a * f1[i] + b * f2[i])) / r;
            }
            n_psi[i] = pot[i] - (phi[i] - n[i] / (1.0 + r * r));
        }
        self.filter(&mut n_rho);
        self.filter(&mut n_psi);
        Ok((n_rho, n_psi, phi))
    }

    /// `(dρ/dt, dψ/dt)`.
    pub fn rhs(&self, state: &SimState) -> Result<(SpectralField, SpectralField)> {
        let g = self.grid;
        let (r, p) = (state.rho.spectrum(), state.psi.spectrum());
        let (mut dr, mut dp): Pair = if self.nonlinear {
            let (a, b, _) = self.nonlinear_terms(r, p, Some(state.phi.spectrum()))?;
            (a, b)
        } else {
            (zeros(g.len()), zeros(g.len()))
        };
        for i in 0..g.len() {
            let x = g.xi_norm(i);
            dr[i] += p[i] * x;
            dp[i] -= r[i] * x * self.qs[i] * self.qs[i];
        }
        drop_nyquist(&mut dr, g.n);
        drop_nyquist(&mut dp, g.n);
        Ok((SpectralField::from_spectrum(g, dr)?, SpectralField::from_spectrum(g, dp)?))
    }

    /// Nonlinear forcing of `(ψ, qρ)`.
    fn forcing(&self, y: &Pair, guess: &[C64]) -> Result<(Pair, Vec<C64>)> {
        let len = self.grid.len();
        if !self.nonlinear {
            return Ok(((zeros(len), zeros(len)), guess.to_vec()));
        }
        let rho: Vec<C64> = (0..len).map(|i| y.1[i] / self.qs[i]).collect();
        let (nr, np, phi) = self.nonlinear_terms(&rho, &y.0, Some(guess))?;
        let w: Vec<C64> = (0..len).map(|i| nr[i] * self.qs[i]).collect();
        Ok(((np, w), phi))
    }

    /// `(ψ, w) ↦ e^{iλτ}(ψ + iw)` split into real parts.
    fn rotate(&self, y: &Pair, tau: f64) -> Pair {
        let len = self.grid.len();
        let mut a = zeros(len);
        let mut b = zeros(len);
        for i in 0..len {
            let (s, c) = (tau * self.lam[i]).sin_cos();
            a[i] = y.0[i] * c - y.1[i] * s;
            b[i] = y.0[i] * s + y.1[i] * c;
        }
        (a, b)
    }

    fn axpy(y: &Pair, h: f64, k: &Pair) -> Pair {
        let f = |u: &[C64], v: &[C64]| u.iter().zip(v).map(|(a, b)| a + b * h).collect::<Vec<_>>();
        (f(&y.0, &k.0), f(&y.1, &k.1))
    }

    /// One Lawson RK4 step of size `dt` (negative allowed).
    pub fn step(&self, state: &SimState, dt: f64) -> Result<SimState> {
        let g = self.grid;
        let len = g.len();
        let y: Pair = (
            state.psi.spectrum().to_vec(),
            (0..len).map(|i| state.rho.spectrum()[i] * self.qs[i]).collect(),
        );
        let guess = state.phi.spectrum();
        let h = dt;
        let (k1, phi1) = self.forcing(&y, guess)?;
        let y2 = self.rotate(&Self::axpy(&y, h / 2.0, &k1), h / 2.0);
        let (k2, phi2) = self.forcing(&y2, &phi1)?;
        let yh = self.rotate(&y, h / 2.0);
        let y3 = Self::axpy(&yh, h / 2.0, &k2);
        let (k3, phi3) = self.forcing(&y3, &phi2)?;
        let y4 = Self::axpy(&self.rotate(&y, h), h, &self.rotate(&k3, h / 2.0));
        let (k4, _) = self.forcing(&y4, &phi3)?;
        let r1 = self.rotate(&k1, h);
        let r23 = self.rotate(&Self::axpy(&k2, 1.0, &k3), h / 2.0);
        let mut out = self.rotate(&y, h);
        for i in 0..len {
            out.0[i] += (r1.0[i] + r23.0[i] * 2.0 + k4.0[i]) * (h / 6.0);
            out.1[i] += (r1.1[i] + r23.1[i] * 2.0 + k4.1[i]) * (h / 6.0);
        }
        let mut rho: Vec<C64> = (0..len).map(|i| out.1[i] / self.qs[i]).collect();
        let mut psi = out.0;
        drop_nyquist(&mut rho, g.n);
        drop_nyquist(&mut psi, g.n);
        let phi = if self.nonlinear { self.solve_phi(&rho, Some(&phi3))? } else { self.solve_phi(&rho, Some(guess))? };
        for v in rho.iter().chain(&psi) {
            if !(v.re.is_finite() && v.im.is_finite()) {
                return Err(Error::NonFinite(format!("state blew up at t = {}", state.t + dt)));
            }
        }
        let f = |s| SpectralField::from_spectrum(g, s);
        Ok(SimState { rho: f(rho)?, psi: f(psi)?, t: state.t + dt, phi: f(phi)? })
    }

    /// `H = ∫(1+ñ)|∇ψ|²/2 + (1+ñ)log(1+ñ) − ñ + |∇φ|²/2 + φe^φ − e^φ + 1`.
    ///
    /// Pointwise terms are summed on the padded grids used by the flow, so
    /// `H` is an exact invariant of the semi-discrete system.
    pub fn hamiltonian(&self, state: &SimState) -> f64 {
        let g = self.grid;
        let len = g.len();
        let psi = state.psi.spectrum();
        let n = self.density_spec(state.rho.spectrum());
        let grad = |axis: usize| -> Vec<C64> { (0..len).map(|i| psi[i] * C64::new(0.0, g.xi(i)[axis])).collect() };
        let nf = self.pad.to_fine(&n);
        let g1 = self.pad.to_fine(&grad(0));
        let g2 = self.pad.to_fine(&grad(1));
        let m = self.pad.m;
        let fine_area = g.length * g.length / (m * m) as f64;
        let flow = par::chunked_sum(m * m, |k| {
            let (nn, a, b) = (nf[k].re, g1[k].re, g2[k].re);
            (1.0 + nn) * (a * a + b * b) / 2.0 + (1.0 + nn) * nn.ln_1p() - nn
        }) * fine_area;
        let phi = state.phi.spectrum();
        let dirichlet = par::chunked_sum(len, |i| {
            let r = g.xi_norm(i);
            r * r * phi[i].norm_sqr()
        }) * g.cell_area()
            / len as f64
            / 2.0;
        let pf = self.phi_pad.to_fine(phi);
        let mp = self.phi_pad.m;
        let phi_area = g.length * g.length / (mp * mp) as f64;
        let pot = par::chunked_sum(mp * mp, |k| {
            let p = pf[k].re;
            (p - 1.0) * p.exp_m1() + p
        }) * phi_area;
        flow + dirichlet + pot
    }

    /// Records `energy_norm` and the truncated `‖Ω^{[0,N₂]}V‖_Z`, both on
    /// the profile `V`: the energy norm is unchanged by `e^{−itλ}` and `V`
    /// stays localized. The `Z` sup runs over shells inside the dealiased
    /// band (see [`z_shells`]).
    pub fn diagnostics(&self, state: &SimState) -> Result<DiagnosticsRecord> {
        let v = state.profile();
        let energy = paley::energy_norm(&v, &self.norm_params, self.norm_params.n1 as u32)?;
        let (ks, js) = z_shells(&self.grid);
        let mut z = 0.0_f64;
        let mut layer = v;
        for a in 0..=self.norm_params.n2 as u32 {
            if a > 0 {
                layer = paley::omega(&layer)?;
            }
            z = z.max(paley::z_norm(&layer, &self.norm_params, ks.clone(), js.clone()).value);
        }
        let mut rec = self.partial_record(state);
        rec.hamiltonian = self.hamiltonian(state);
        rec.energy_norm = energy;
        rec.z_norm = z;
        Ok(rec)
    }

    /// Record with the `φ`-free quantities only; the rest is NaN.
    pub fn partial_record(&self, state: &SimState) -> DiagnosticsRecord {
        let n = state.density();
        let g = self.grid;
        let gp = |axis| state.psi.derivative(axis);
        let (a, b) = (gp(0), gp(1));
        let sup_grad = par::chunked_max(g.len(), |i| a.physical()[i].re.hypot(b.physical()[i].re));
        DiagnosticsRecord {
            t: state.t,
            mass: mass(state),
            hamiltonian: f64::NAN,
            l2_u: state.u().l2_spectral(),
            energy_norm: f64::NAN,
            z_norm: f64::NAN,
            sup_n: n.sup_norm(),
            sup_gradpsi: sup_grad,
            flag: None,
        }
    }
}

/// Frequency shells whose support lies below `2/3` of the Nyquist
/// frequency, and the spatial shells that fit the box. Above that band the
/// grid content is rounding noise, which `2^{10k₊}` and `Ω` amplify.
pub fn z_shells(grid: &Grid) -> (std::ops::RangeInclusive<i32>, std::ops::RangeInclusive<i32>) {
    let kr = paley::resolvable_k(grid);
    let cap = 2.0 / 3.0 * grid.nyquist();
    let mut khi = *kr.start();
    for k in kr.clone() {
        if paley::CutoffFamily.psi_support(k).1 <= cap {
            khi = k;
        }
    }
    let jhi = *paley::resolvable_j(grid).end();
    let jlo = 0.max(-khi);
    (*kr.start()..=khi, jlo.min(jhi)..=jhi.max(-*kr.start()))
}

/// Seeded initial `(ρ₀, ψ₀)`: band-limited Gaussian random fields times a
/// Gaussian envelope, scaled per [`Normalization`].
pub fn initial_fields(cfg: &SimConfig) -> Result<(SpectralField, SpectralField)> {
    let grid = cfg.validate()?;
    let id = cfg.initial_data;
    if id.amplitude == 0.0 {
        return Ok((SpectralField::zeros(grid), SpectralField::zeros(grid)));
    }
    let len = grid.len();
    let env = id.envelope;
    let make = |stream: u64| -> Result<SpectralField> {
        let mut rng = chunk_rng(id.seed, stream);
        let spec: Vec<C64> = (0..len)
            .map(|i| {
                let w = id.shape.weight(grid.xi_norm(i));
                let (a, b): (f64, f64) = (rng.sample(StandardNormal), rng.sample(StandardNormal));
                C64::new(a, b) * w
            })
            .collect();
        let f = SpectralField::from_spectrum(grid, spec)?;
        let phys: Vec<f64> = (0..len)
            .map(|i| {
                let [x, y] = grid.x(i);
                f.physical()[i].re * (-(x * x + y * y) / (2.0 * env * env)).exp()
            })
            .collect();
        let mut s = SpectralField::from_real(grid, &phys)?.into_spectrum();
        drop_nyquist(&mut s, grid.n);
        SpectralField::from_spectrum(grid, s)
    };
    let psi = make(0)?;
    let w = make(1)?;
    let rho = w.apply_radial(|r| 1.0 / q(r));
    let size = match id.normalization {
        Normalization::Energy => {
            let u = SpectralField::from_spectrum(
                grid,
                (0..len).map(|i| psi.spectrum()[i] + C64::i() * w.spectrum()[i]).collect(),
            )?;
            paley::energy_norm(&u, &cfg.norm_params, cfg.norm_params.n1 as u32)?
        }
        Normalization::SupDensity => rho.apply_radial(|r| r).sup_norm(),
    };
    if size == 0.0 {
        return Ok((SpectralField::zeros(grid), SpectralField::zeros(grid)));
    }
    let c = C64::new(id.amplitude / size, 0.0);
    Ok((rho.scale(c), psi.scale(c)))
}

/// What a run produced: all records, and the guard or failure that stopped
/// it early, if any (its final record then carries the flag).
#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub records: Vec<DiagnosticsRecord>,
    pub error: Option<Error>,
    pub final_state: Option<SimState>,
}

/// Run with a callback after each step (`step index, state`) and each record.
pub fn run_observed(
    cfg: &SimConfig,
    mut on_step: impl FnMut(usize, &SimState) -> Result<()>,
    mut on_record: impl FnMut(&DiagnosticsRecord) -> Result<()>,
) -> Result<RunOutcome> {
    let sim = Simulator::new(cfg)?;
    let (rho, psi) = initial_fields(cfg)?;
    let mut records = Vec::new();
    let mut state = match sim.state(rho.clone(), psi.clone(), 0.0) {
        Ok(s) => s,
        Err(e) if e.is_numeric_guard() => {
            let bare = SimState { rho, psi, t: 0.0, phi: SpectralField::zeros(*sim.grid()) };
            let mut rec = sim.partial_record(&bare);
            rec.flag = Some(e.to_string());
            on_record(&rec)?;
            records.push(rec);
            return Ok(RunOutcome { records, error: Some(e), final_state: None });
        }
        Err(e) => return Err(e),
    };
    let steps = cfg.steps();
    let mut k = 0;
    let stop = loop {
        if k % cfg.diagnostics_every == 0 || k == steps {
            match sim.diagnostics(&state) {
                Ok(r) => {
                    on_record(&r)?;
                    records.push(r);
                }
                Err(e) => break e,
            }
        }
        on_step(k, &state)?;
        if k == steps {
            return Ok(RunOutcome { records, error: None, final_state: Some(state) });
        }
        k += 1;
        let h = if k == steps { cfg.t_end - state.t } else { cfg.dt };
        match sim.step(&state, h) {
            Ok(mut s) => {
                s.t = if k == steps { cfg.t_end } else { k as f64 * cfg.dt };
                state = s;
            }
            Err(e) => break e,
        }
    };
    if !stop.is_numeric_guard() {
        return Err(stop);
    }
    let mut rec = sim.partial_record(&state);
    rec.hamiltonian = sim.hamiltonian(&state);
    rec.flag = Some(stop.to_string());
    on_record(&rec)?;
    records.push(rec);
    Ok(RunOutcome { records, error: Some(stop), final_state: Some(state) })
}

pub fn run(cfg: &SimConfig) -> Result<RunOutcome> {
    run_observed(cfg, |_, _| Ok(()), |_| Ok(()))
}

/// Largest `dt ≤ dt_max` (to bisection accuracy) whose Hamiltonian drift over
/// `steps` steps from the configured initial data is below `tol`.
pub fn stable_dt(cfg: &SimConfig, dt_max: f64, steps: usize, tol: f64) -> Result<f64> {
    let sim = Simulator::new(cfg)?;
    let (rho, psi) = initial_fields(cfg)?;
    let s0 = sim.state(rho, psi, 0.0)?;
    let h0 = sim.hamiltonian(&s0);
    let drift = |dt: f64| -> f64 {
        let mut s = s0.clone();
        for _ in 0..steps {
            match sim.step(&s, dt) {
                Ok(n) => s = n,
                Err(_) => return f64::INFINITY,
            }
        }
        let h = sim.hamiltonian(&s);
        if h0 == 0.0 {
            h.abs()
        } else {
            ((h - h0) / h0).abs()
        }
    };
    let mut hi = dt_max;
    if drift(hi) < tol {
        return Ok(hi);
    }
    let mut lo = hi / 2.0;
    let mut tries = 0;
    while drift(lo) >= tol {
        hi = lo;
        lo /= 2.0;
        tries += 1;
        if tries > 20 {
            return Err(Error::NonConvergence { iterations: tries, residual: lo });
        }
    }
    for _ in 0..3 {
        let mid = 0.5 * (lo + hi);
        if drift(mid) < tol {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(lo)
}
