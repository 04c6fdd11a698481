//! Periodic square grids, 2D FFTs and fields carried in both representations.
//!
//! Conventions:
//! * the grid has `n × n` points on `[-L/2, L/2)²`, row-major with the row
//!   index along `x₂` and the column index along `x₁`; the origin sits at
//!   index `(n/2, n/2)`;
//! * spectra are unnormalized DFTs `F(ξ) = Σ f(x) e^{-i x·ξ}` (phases measured
//!   from the grid origin at index 0), and the inverse carries the `1/n²`;
//! * discrete L² norms use the cell area, `‖f‖₂² = dx² Σ|f|²`.

use std::collections::HashMap;
use std::f64::consts::PI;
use std::sync::{Arc, Mutex, OnceLock};

use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

use crate::error::{Error, Result};
use crate::par;

pub type C64 = Complex64;

/// A square periodic grid.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct Grid {
    pub n: usize,
    pub length: f64,
}

impl Grid {
    pub fn new(n: usize, length: f64) -> Result<Self> {
        if n < 2 || n % 2 != 0 {
            return Err(Error::InvalidInput(format!("grid size must be even and >= 2, got {n}")));
        }
        if !(length > 0.0) || !length.is_finite() {
            return Err(Error::InvalidInput(format!("domain length must be positive, got {length}")));
        }
        Ok(Self { n, length })
    }

    pub fn len(&self) -> usize {
        self.n * self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn dx(&self) -> f64 {
        self.length / self.n as f64
    }

    pub fn cell_area(&self) -> f64 {
        self.dx() * self.dx()
    }

    /// Fundamental wavenumber `2π/L`.
    pub fn dk(&self) -> f64 {
        2.0 * PI / self.length
    }

    /// Largest wavenumber along an axis, `π/dx`.
    pub fn nyquist(&self) -> f64 {
        PI / self.dx()
    }

    /// Signed mode number of index `i` in FFT order.
    #[inline]
    pub fn mode(&self, i: usize) -> i64 {
        let n = self.n as i64;
        let i = i as i64;
        if i < n / 2 {
            i
        } else {
            i - n
        }
    }

    /// Wavenumber of index `i`; the Nyquist index maps to `-π/dx`.
    #[inline]
    pub fn wavenumber(&self, i: usize) -> f64 {
        self.mode(i) as f64 * self.dk()
    }

    /// Wavenumber used by odd operators (derivatives): zero at Nyquist.
    #[inline]
    pub fn derivative_wavenumber(&self, i: usize) -> f64 {
        if i == self.n / 2 {
            0.0
        } else {
            self.wavenumber(i)
        }
    }

    #[inline]
    pub fn is_nyquist(&self, idx: usize) -> bool {
        let (r, c) = (idx / self.n, idx % self.n);
        r == self.n / 2 || c == self.n / 2
    }

    /// `(ξ₁, ξ₂)` of flat spectral index `idx`.
    #[inline]
    pub fn xi(&self, idx: usize) -> [f64; 2] {
        [self.wavenumber(idx % self.n), self.wavenumber(idx / self.n)]
    }

    #[inline]
    pub fn xi_norm(&self, idx: usize) -> f64 {
        let [a, b] = self.xi(idx);
        a.hypot(b)
    }

    /// Physical coordinate of index `i` along an axis.
    #[inline]
    pub fn coord(&self, i: usize) -> f64 {
        (i as f64 - (self.n / 2) as f64) * self.dx()
    }

    /// `(x₁, x₂)` of flat physical index `idx`.
    #[inline]
    pub fn x(&self, idx: usize) -> [f64; 2] {
        [self.coord(idx % self.n), self.coord(idx / self.n)]
    }

    /// Largest `|x|` on the grid (a corner).
    pub fn max_radius(&self) -> f64 {
        (self.length / 2.0) * std::f64::consts::SQRT_2
    }

    /// Largest `|ξ|` on the grid (a spectral corner).
    pub fn max_frequency(&self) -> f64 {
        self.nyquist() * std::f64::consts::SQRT_2
    }
}

/// Cached forward/inverse FFT plans for one transform length.
pub struct Fft2 {
    n: usize,
    fwd: Arc<dyn Fft<f64>>,
    inv: Arc<dyn Fft<f64>>,
}

fn plan_cache() -> &'static Mutex<HashMap<usize, Arc<Fft2>>> {
    static CACHE: OnceLock<Mutex<HashMap<usize, Arc<Fft2>>>> = OnceLock::new();
    CACHE.get_or_init(|| Mutex::new(HashMap::new()))
}

impl Fft2 {
    /// Shared plan for an `n × n` transform.
    pub fn get(n: usize) -> Arc<Fft2> {
        let mut cache = plan_cache().lock().expect("fft plan cache poisoned");
        cache
            .entry(n)
            .or_insert_with(|| {
                let mut planner = FftPlanner::new();
                Arc::new(Fft2 {
                    n,
                    fwd: planner.plan_fft_forward(n),
                    inv: planner.plan_fft_inverse(n),
                })
            })
            .clone()
    }

    fn rows(&self, data: &mut [C64], plan: &Arc<dyn Fft<f64>>) {
        let n = self.n;
        let scratch_len = plan.get_inplace_scratch_len();
        par::for_each_row(data, n, |_, row| {
            let mut scratch = vec![C64::new(0.0, 0.0); scratch_len];
            plan.process_with_scratch(row, &mut scratch);
        });
    }

    fn rows_seq(&self, data: &mut [C64], plan: &Arc<dyn Fft<f64>>) {
        let n = self.n;
        let mut scratch = vec![C64::new(0.0, 0.0); plan.get_inplace_scratch_len()];
        for row in data.chunks_mut(n) {
            plan.process_with_scratch(row, &mut scratch);
        }
    }

    fn transform(&self, data: &mut [C64], inverse: bool, parallel: bool) {
        assert_eq!(data.len(), self.n * self.n, "buffer does not match plan size");
        let plan = if inverse { &self.inv } else { &self.fwd };
        if parallel {
            self.rows(data, plan);
            transpose_in_place(data, self.n);
            self.rows(data, plan);
            transpose_in_place(data, self.n);
        } else {
            self.rows_seq(data, plan);
            transpose_in_place(data, self.n);
            self.rows_seq(data, plan);
            transpose_in_place(data, self.n);
        }
        if inverse {
            let s = 1.0 / (self.n * self.n) as f64;
            for v in data.iter_mut() {
                *v *= s;
            }
        }
    }

    pub fn forward(&self, data: &mut [C64]) {
        self.transform(data, false, true);
    }

    /// Inverse transform including the `1/n²` normalization.
    pub fn inverse(&self, data: &mut [C64]) {
        self.transform(data, true, true);
    }

    /// Single-threaded forward transform (benchmark reference).
    pub fn forward_seq(&self, data: &mut [C64]) {
        self.transform(data, false, false);
    }

    pub fn inverse_seq(&self, data: &mut [C64]) {
        self.transform(data, true, false);
    }
}

fn transpose_in_place(data: &mut [C64], n: usize) {
    const B: usize = 32;
    for bi in (0..n).step_by(B) {
        for bj in (bi..n).step_by(B) {
            for i in bi..(bi + B).min(n) {
                let j0 = if bi == bj { i + 1 } else { bj };
                for j in j0..(bj + B).min(n) {
                    data.swap(i * n + j, j * n + i);
                }
            }
        }
    }
}

pub fn fft_forward(grid: &Grid, data: &mut [C64]) {
    Fft2::get(grid.n).forward(data);
}

pub fn fft_inverse(grid: &Grid, data: &mut [C64]) {
    Fft2::get(grid.n).inverse(data);
}

/// Size of the zero-padded grid for a padding factor (rounded up to even).
pub fn padded_size(n: usize, factor: f64) -> usize {
    let m = (n as f64 * factor.max(1.0)).ceil() as usize;
    m + (m % 2)
}

/// Embed an `n × n` spectrum into an `m × m` one (`m ≥ n`), dropping the
/// Nyquist row and column and rescaling so physical values are preserved.
pub fn pad_spectrum(src: &[C64], n: usize, m: usize) -> Vec<C64> {
    let mut out = vec![C64::new(0.0, 0.0); m * m];
    let scale = (m * m) as f64 / (n * n) as f64;
    let h = n as i64 / 2;
    for r in 0..n {
        let kr = if r < n / 2 { r as i64 } else { r as i64 - n as i64 };
        if kr == -h {
            continue;
        }
        let rr = kr.rem_euclid(m as i64) as usize;
        for c in 0..n {
            let kc = if c < n / 2 { c as i64 } else { c as i64 - n as i64 };
            if kc == -h {
                continue;
            }
            let cc = kc.rem_euclid(m as i64) as usize;
            out[rr * m + cc] = src[r * n + c] * scale;
        }
    }
    out
}

/// Inverse of [`pad_spectrum`]: keep the modes representable on `n × n`
/// (excluding Nyquist) and rescale.
pub fn truncate_spectrum(src: &[C64], m: usize, n: usize) -> Vec<C64> {
    let mut out = vec![C64::new(0.0, 0.0); n * n];
    let scale = (n * n) as f64 / (m * m) as f64;
    let h = n as i64 / 2;
    for r in 0..n {
        let kr = if r < n / 2 { r as i64 } else { r as i64 - n as i64 };
        if kr == -h {
            continue;
        }
        let rr = kr.rem_euclid(m as i64) as usize;
        for c in 0..n {
            let kc = if c < n / 2 { c as i64 } else { c as i64 - n as i64 };
            if kc == -h {
                continue;
            }
            let cc = kc.rem_euclid(m as i64) as usize;
            out[r * n + c] = src[rr * m + cc] * scale;
        }
    }
    out
}

/// Zero the Nyquist row and column of a spectrum in place.
pub fn drop_nyquist(spec: &mut [C64], n: usize) {
    let h = n / 2;
    for c in 0..n {
        spec[h * n + c] = C64::new(0.0, 0.0);
    }
    for r in 0..n {
        spec[r * n + h] = C64::new(0.0, 0.0);
    }
}

/// Transfer between an `n × n` spectrum and physical samples on a zero-padded
/// `m × m` grid, for dealiased pointwise nonlinearities.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Padding {
    pub n: usize,
    pub m: usize,
}

impl Padding {
    pub fn new(n: usize, factor: f64) -> Self {
        Self { n, m: padded_size(n, factor) }
    }

    /// Physical samples on the fine grid of a coarse spectrum.
    pub fn to_fine(&self, spec: &[C64]) -> Vec<C64> {
        let mut out = pad_spectrum(spec, self.n, self.m);
        Fft2::get(self.m).inverse(&mut out);
        out
    }

    /// Coarse spectrum of fine physical samples (Nyquist dropped).
    pub fn to_coarse(&self, mut phys: Vec<C64>) -> Vec<C64> {
        Fft2::get(self.m).forward(&mut phys);
        truncate_spectrum(&phys, self.m, self.n)
    }

    /// Spectrum of `f(u)` with `f` applied pointwise on the fine grid.
    pub fn map(&self, spec: &[C64], f: impl Fn(f64) -> f64 + Sync + Send) -> Vec<C64> {
        let mut fine = self.to_fine(spec);
        par::for_each_row(&mut fine, self.m, |_, row| {
            for z in row.iter_mut() {
                *z = C64::new(f(z.re), 0.0);
            }
        });
        self.to_coarse(fine)
    }
}

/// A complex field on a periodic grid, stored in both physical and spectral
/// representation. Constructors and mutators keep the two in sync.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectralField {
    grid: Grid,
    phys: Vec<C64>,
    spec: Vec<C64>,
}

impl SpectralField {
    pub fn zeros(grid: Grid) -> Self {
        let z = vec![C64::new(0.0, 0.0); grid.len()];
        Self { grid, phys: z.clone(), spec: z }
    }

    pub fn from_physical(grid: Grid, phys: Vec<C64>) -> Result<Self> {
        if phys.len() != grid.len() {
            return Err(Error::InvalidInput(format!(
                "physical buffer has {} values, grid needs {}",
                phys.len(),
                grid.len()
            )));
        }
        let mut spec = phys.clone();
        fft_forward(&grid, &mut spec);
        Ok(Self { grid, phys, spec })
    }

    pub fn from_real(grid: Grid, values: &[f64]) -> Result<Self> {
        Self::from_physical(grid, values.iter().map(|&v| C64::new(v, 0.0)).collect())
    }

    pub fn from_spectrum(grid: Grid, spec: Vec<C64>) -> Result<Self> {
        if spec.len() != grid.len() {
            return Err(Error::InvalidInput(format!(
                "spectral buffer has {} values, grid needs {}",
                spec.len(),
                grid.len()
            )));
        }
        let mut phys = spec.clone();
        fft_inverse(&grid, &mut phys);
        Ok(Self { grid, phys, spec })
    }

    /// Sample `f(x)` at the grid points.
    pub fn from_fn(grid: Grid, f: impl Fn([f64; 2]) -> C64) -> Self {
        let phys: Vec<C64> = (0..grid.len()).map(|i| f(grid.x(i))).collect();
        Self::from_physical(grid, phys).expect("sizes match by construction")
    }

    /// Build from spectral samples `g(ξ)` given in continuum normalization
    /// `f̂(ξ) = (2π)^{-2}∫ f e^{-ix·ξ}`, corrected for the off-centre origin.
    pub fn from_continuum_spectrum(grid: Grid, g: impl Fn([f64; 2]) -> C64) -> Self {
        let scale = (2.0 * PI).powi(2) / grid.cell_area();
        let shift = grid.length / 2.0;
        let spec: Vec<C64> = (0..grid.len())
            .map(|i| {
                let xi = grid.xi(i);
                // physical index 0 sits at x = -L/2
                let phase = C64::from_polar(1.0, (xi[0] + xi[1]) * shift);
                g(xi) * phase * scale
            })
            .collect();
        Self::from_spectrum(grid, spec).expect("sizes match by construction")
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn physical(&self) -> &[C64] {
        &self.phys
    }

    pub fn spectrum(&self) -> &[C64] {
        &self.spec
    }

    pub fn into_spectrum(self) -> Vec<C64> {
        self.spec
    }

    pub fn real_part(&self) -> Vec<f64> {
        self.phys.iter().map(|z| z.re).collect()
    }

    /// Multiply the spectrum by `m(ξ)`.
    pub fn apply_multiplier(&self, m: impl Fn([f64; 2]) -> C64 + Sync + Send) -> Self {
        let g = self.grid;
        let spec: Vec<C64> = par::map_chunks(g.len(), 1 << 14, |_, s, e| {
            (s..e).map(|i| self.spec[i] * m(g.xi(i))).collect::<Vec<_>>()
        })
        .concat();
        Self::from_spectrum(g, spec).expect("sizes match by construction")
    }

    /// Multiply the spectrum by a radial multiplier `m(|ξ|)`.
    pub fn apply_radial(&self, m: impl Fn(f64) -> f64 + Sync + Send) -> Self {
        self.apply_multiplier(|xi| C64::new(m(xi[0].hypot(xi[1])), 0.0))
    }

    /// Multiply pointwise in physical space by `w(x)`.
    pub fn apply_physical(&self, w: impl Fn([f64; 2]) -> C64 + Sync + Send) -> Self {
        let g = self.grid;
        let phys: Vec<C64> = par::map_chunks(g.len(), 1 << 14, |_, s, e| {
            (s..e).map(|i| self.phys[i] * w(g.x(i))).collect::<Vec<_>>()
        })
        .concat();
        Self::from_physical(g, phys).expect("sizes match by construction")
    }

    pub fn scale(&self, c: C64) -> Self {
        Self {
            grid: self.grid,
            phys: self.phys.iter().map(|z| z * c).collect(),
            spec: self.spec.iter().map(|z| z * c).collect(),
        }
    }

    pub fn add(&self, other: &Self) -> Result<Self> {
        self.combine(other, |a, b| a + b)
    }

    pub fn sub(&self, other: &Self) -> Result<Self> {
        self.combine(other, |a, b| a - b)
    }

    fn combine(&self, other: &Self, op: impl Fn(C64, C64) -> C64) -> Result<Self> {
        if self.grid != other.grid {
            return Err(Error::InvalidInput("fields live on different grids".into()));
        }
        Ok(Self {
            grid: self.grid,
            phys: self.phys.iter().zip(&other.phys).map(|(a, b)| op(*a, *b)).collect(),
            spec: self.spec.iter().zip(&other.spec).map(|(a, b)| op(*a, *b)).collect(),
        })
    }

    /// `‖f‖₂` from the physical samples.
    pub fn l2_physical(&self) -> f64 {
        let s = par::chunked_sum(self.phys.len(), |i| self.phys[i].norm_sqr());
        (s * self.grid.cell_area()).sqrt()
    }

    /// `‖f‖₂` from the spectrum (Parseval).
    pub fn l2_spectral(&self) -> f64 {
        l2_of_spectrum(&self.grid, &self.spec)
    }

    pub fn sup_norm(&self) -> f64 {
        par::chunked_max(self.phys.len(), |i| self.phys[i].norm())
    }

    /// 90° rotation `f(x) → f(R⁻¹x)` about the grid origin; exact on the grid.
    pub fn rotate90(&self) -> Self {
        let n = self.grid.n;
        let mut phys = vec![C64::new(0.0, 0.0); n * n];
        for r in 0..n {
            for c in 0..n {
                // (x1, x2) = (c - n/2, r - n/2) maps to (-x2, x1)
                let nc = (n - r) % n;
                let nr = c;
                phys[nr * n + nc] = self.phys[r * n + c];
            }
        }
        Self::from_physical(self.grid, phys).expect("sizes match by construction")
    }

    /// `∂ⱼ f` by spectral differentiation (Nyquist mode dropped).
    pub fn derivative(&self, axis: usize) -> Self {
        let g = self.grid;
        let spec: Vec<C64> = (0..g.len())
            .map(|i| {
                let k = if axis == 0 {
                    g.derivative_wavenumber(i % g.n)
                } else {
                    g.derivative_wavenumber(i / g.n)
                };
                self.spec[i] * C64::new(0.0, k)
            })
            .collect();
        Self::from_spectrum(g, spec).expect("sizes match by construction")
    }

    /// Fraction of the L² mass within `width` of the domain boundary.
    pub fn boundary_mass_fraction(&self, width: f64) -> f64 {
        let g = self.grid;
        let half = g.length / 2.0;
        let total = par::chunked_sum(g.len(), |i| self.phys[i].norm_sqr());
        if total == 0.0 {
            return 0.0;
        }
        let edge = par::chunked_sum(g.len(), |i| {
            let [a, b] = g.x(i);
            if a.abs().max(b.abs()) >= half - width {
                self.phys[i].norm_sqr()
            } else {
                0.0
            }
        });
        edge / total
    }

    /// Fraction of spectral energy in modes with `max(|ξ₁|,|ξ₂|) ≥ frac·π/dx`.
    pub fn high_frequency_fraction(&self, frac: f64) -> f64 {
        let g = self.grid;
        let cut = frac * g.nyquist();
        let total = par::chunked_sum(g.len(), |i| self.spec[i].norm_sqr());
        if total == 0.0 {
            return 0.0;
        }
        let hi = par::chunked_sum(g.len(), |i| {
            let [a, b] = g.xi(i);
            if a.abs().max(b.abs()) >= cut {
                self.spec[i].norm_sqr()
            } else {
                0.0
            }
        });
        hi / total
    }
}

/// `‖f‖₂` of a field given by its spectrum.
pub fn l2_of_spectrum(grid: &Grid, spec: &[C64]) -> f64 {
    let s = par::chunked_sum(spec.len(), |i| spec[i].norm_sqr());
    (s * grid.cell_area() / grid.len() as f64).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn gaussian(grid: Grid, s: f64) -> SpectralField {
        SpectralField::from_fn(grid, |[a, b]| C64::new((-(a * a + b * b) / (2.0 * s * s)).exp(), 0.0))
    }

    #[test]
    fn fft_roundtrip_and_parseval() {
        let g = Grid::new(64, 20.0).unwrap();
        let f = SpectralField::from_fn(g, |[a, b]| {
            C64::new((-(a * a + 2.0 * b * b) / 4.0).exp() * (1.3 * a).cos(), 0.2 * (0.5 * b).sin())
        });
        let back = SpectralField::from_spectrum(g, f.spectrum().to_vec()).unwrap();
        for (x, y) in f.physical().iter().zip(back.physical()) {
            assert!((x - y).norm() < 1e-13);
        }
        let (p, s) = (f.l2_physical(), f.l2_spectral());
        assert!((p - s).abs() <= 1e-12 * p);
    }

    #[test]
    fn sequential_and_parallel_fft_agree() {
        let g = Grid::new(32, 10.0).unwrap();
        let f = gaussian(g, 1.5);
        let mut a = f.physical().to_vec();
        let mut b = a.clone();
        let plan = Fft2::get(32);
        plan.forward(&mut a);
        plan.forward_seq(&mut b);
        assert_eq!(a, b);
    }

    #[test]
    fn continuum_spectrum_of_gaussian() {
        // f = e^{-|x|²/2} has f̂ = (2π)^{-1} e^{-|ξ|²/2} in the (2π)^{-2} convention
        let g = Grid::new(64, 30.0).unwrap();
        let direct = gaussian(g, 1.0);
        let built = SpectralField::from_continuum_spectrum(g, |[a, b]| {
            C64::new((-(a * a + b * b) / 2.0).exp() / (2.0 * PI), 0.0)
        });
        for (x, y) in direct.physical().iter().zip(built.physical()) {
            assert!((x - y).norm() < 1e-10, "{x} vs {y}");
        }
    }

    #[test]
    fn padding_preserves_values() {
        let g = Grid::new(16, 8.0).unwrap();
        let f = gaussian(g, 1.2);
        let mut spec = f.spectrum().to_vec();
        drop_nyquist(&mut spec, 16);
        let m = padded_size(16, 1.5);
        assert_eq!(m, 24);
        let padded = pad_spectrum(&spec, 16, m);
        let back = truncate_spectrum(&padded, m, 16);
        for (a, b) in spec.iter().zip(&back) {
            assert!((a - b).norm() < 1e-12);
        }
        // padded physical samples at coincident points agree
        let mut phys_m = padded.clone();
        Fft2::get(m).inverse(&mut phys_m);
        let refreshed = SpectralField::from_spectrum(g, spec).unwrap();
        // grid point 0 is common to both grids
        assert!((phys_m[0] - refreshed.physical()[0]).norm() < 1e-12);
    }

    #[test]
    fn rotation_is_grid_permutation() {
        let g = Grid::new(16, 8.0).unwrap();
        let f = SpectralField::from_fn(g, |[a, b]| C64::new(a + 2.0 * b, 0.0));
        let r = f.rotate90();
        let n = 16;
        // value at x=(1,0)dx rotated to (0,1)dx
        let i_src = (n / 2) * n + n / 2 + 1;
        let i_dst = (n / 2 + 1) * n + n / 2;
        assert_eq!(f.physical()[i_src], r.physical()[i_dst]);
        let four = r.rotate90().rotate90().rotate90();
        for (a, b) in f.physical().iter().zip(four.physical()) {
            assert_eq!(a, b);
        }
    }

    #[test]
    fn spectral_derivative_of_gaussian() {
        let g = Grid::new(64, 24.0).unwrap();
        let f = gaussian(g, 1.5);
        let d = f.derivative(0);
        for i in 0..g.len() {
            let [a, b] = g.x(i);
            let exact = -a / 2.25 * (-(a * a + b * b) / 4.5).exp();
            assert!((d.physical()[i].re - exact).abs() < 1e-10);
        }
    }
}
