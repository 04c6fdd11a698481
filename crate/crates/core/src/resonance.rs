//! Quadratic and cubic resonance functions and sampling verifiers.
//!
//! * `Φ_{ι₁ι₂}(ξ,η) = −Λ(ξ) + ι₁Λ(ξ−η) + ι₂Λ(η)`, `Ξ = ∇_η Φ`;
//! * `Φ̃_{ι₁ι₂ι₃}(ξ,η,σ) = −Λ(ξ) + ι₁Λ(ξ−η) + ι₂Λ(η−σ) + ι₃Λ(σ)`,
//!   `Ξ̃ = (∇_η Φ̃, ∇_σ Φ̃)`.
//!
//! Verifiers draw samples in fixed chunks, each chunk with its own ChaCha
//! stream, so reports are reproducible for a given seed and independent of
//! the thread count.

use std::collections::BTreeMap;
use std::f64::consts::{PI, SQRT_2};

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dispersion::{
    d3lambda, dlambda, gamma0, lambda, pi_map, q, space_resonance_roots, RadialPoint, Sign, SignPair,
};
use crate::error::{Error, Result};
use crate::par::{self, chunk_rng, SAMPLE_CHUNK};

pub type V2 = [f64; 2];

#[inline]
fn norm(v: V2) -> f64 {
    v[0].hypot(v[1])
}

#[inline]
fn sub(a: V2, b: V2) -> V2 {
    [a[0] - b[0], a[1] - b[1]]
}

#[inline]
fn add(a: V2, b: V2) -> V2 {
    [a[0] + b[0], a[1] + b[1]]
}

#[inline]
fn scale(c: f64, v: V2) -> V2 {
    [c * v[0], c * v[1]]
}

#[inline]
fn dot(a: V2, b: V2) -> f64 {
    a[0] * b[0] + a[1] * b[1]
}

#[inline]
fn polar(r: f64, th: f64) -> V2 {
    [r * th.cos(), r * th.sin()]
}

/// `Λ(v) = λ(|v|)`.
#[inline]
pub fn big_lambda(v: V2) -> f64 {
    lambda(norm(v))
}

/// `∇Λ(v) = λ′(|v|) v/|v|`.
#[inline]
pub fn grad_lambda(v: V2) -> V2 {
    let r = norm(v);
    scale(dlambda(r) / r, v)
}

fn nonzero(v: V2, what: &str) -> Result<()> {
    if norm(v) == 0.0 || !v[0].is_finite() || !v[1].is_finite() {
        return Err(Error::Domain(format!("{what} must be a nonzero finite frequency")));
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FreqPair {
    pub xi: V2,
    pub eta: V2,
}

impl FreqPair {
    pub fn new(xi: V2, eta: V2) -> Self {
        Self { xi, eta }
    }

    pub fn first_input(&self) -> V2 {
        sub(self.xi, self.eta)
    }

    fn check(&self) -> Result<()> {
        nonzero(self.xi, "xi")?;
        nonzero(self.eta, "eta")?;
        nonzero(self.first_input(), "xi - eta")
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FreqTriple {
    pub xi: V2,
    pub eta: V2,
    pub sigma: V2,
}

impl FreqTriple {
    pub fn new(xi: V2, eta: V2, sigma: V2) -> Self {
        Self { xi, eta, sigma }
    }

    /// `(ξ−η, η−σ, σ)`
    pub fn inputs(&self) -> [V2; 3] {
        [sub(self.xi, self.eta), sub(self.eta, self.sigma), self.sigma]
    }

    fn check(&self) -> Result<()> {
        nonzero(self.xi, "xi")?;
        let [a, b, c] = self.inputs();
        nonzero(a, "xi - eta")?;
        nonzero(b, "eta - sigma")?;
        nonzero(c, "sigma")
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct SignTriple {
    pub iota1: Sign,
    pub iota2: Sign,
    pub iota3: Sign,
}

impl SignTriple {
    pub fn new(iota1: Sign, iota2: Sign, iota3: Sign) -> Self {
        Self { iota1, iota2, iota3 }
    }

    /// The patterns for which `Φ̃` can be small on the `γ₀` annuli.
    pub fn is_degenerate(&self) -> bool {
        use Sign::*;
        matches!(
            (self.iota1, self.iota2, self.iota3),
            (Plus, Plus, Minus) | (Plus, Minus, Plus) | (Minus, Plus, Plus)
        )
    }

    pub fn all() -> Vec<SignTriple> {
        let s = [Sign::Plus, Sign::Minus];
        let mut v = Vec::with_capacity(8);
        for a in s {
            for b in s {
                for c in s {
                    v.push(SignTriple::new(a, b, c));
                }
            }
        }
        v
    }
}

impl std::str::FromStr for SignTriple {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        let signs: Vec<Sign> = s.chars().map(parse_sign).collect::<Result<_>>()?;
        match signs[..] {
            [a, b, c] => Ok(SignTriple::new(a, b, c)),
            _ => Err(Error::InvalidInput(format!("expected three signs, got {s:?}"))),
        }
    }
}

pub fn parse_sign(c: char) -> Result<Sign> {
    match c {
        '+' | 'p' => Ok(Sign::Plus),
        '-' | 'm' => Ok(Sign::Minus),
        _ => Err(Error::InvalidInput(format!("bad sign {c:?}"))),
    }
}

pub fn parse_sign_pair(s: &str) -> Result<SignPair> {
    let signs: Vec<Sign> = s.chars().map(parse_sign).collect::<Result<_>>()?;
    match signs[..] {
        [a, b] => Ok(SignPair::new(a, b)),
        _ => Err(Error::InvalidInput(format!("expected two signs, got {s:?}"))),
    }
}

pub fn phi(fp: &FreqPair, signs: SignPair) -> Result<f64> {
    fp.check()?;
    Ok(phi_unchecked(fp.xi, fp.eta, signs))
}

#[inline]
fn phi_unchecked(xi: V2, eta: V2, s: SignPair) -> f64 {
    -big_lambda(xi) + s.iota1.value() * big_lambda(sub(xi, eta)) + s.iota2.value() * big_lambda(eta)
}

/// `Ξ = ∇_η Φ = −ι₁∇Λ(ξ−η) + ι₂∇Λ(η)`.
pub fn grad_eta(fp: &FreqPair, signs: SignPair) -> Result<V2> {
    fp.check()?;
    Ok(grad_eta_unchecked(fp.xi, fp.eta, signs))
}

#[inline]
fn grad_eta_unchecked(xi: V2, eta: V2, s: SignPair) -> V2 {
    add(scale(-s.iota1.value(), grad_lambda(sub(xi, eta))), scale(s.iota2.value(), grad_lambda(eta)))
}

pub fn phi_tilde(ft: &FreqTriple, signs: SignTriple) -> Result<f64> {
    ft.check()?;
    Ok(phi_tilde_unchecked(ft, signs))
}

#[inline]
fn phi_tilde_unchecked(ft: &FreqTriple, s: SignTriple) -> f64 {
    let [a, b, c] = ft.inputs();
    -big_lambda(ft.xi)
        + s.iota1.value() * big_lambda(a)
        + s.iota2.value() * big_lambda(b)
        + s.iota3.value() * big_lambda(c)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TildeGradients {
    pub xi: V2,
    pub eta: V2,
    pub sigma: V2,
}

impl TildeGradients {
    /// `|Ξ̃| = |(∇_η, ∇_σ)|`.
    pub fn xi_tilde_norm(&self) -> f64 {
        (dot(self.eta, self.eta) + dot(self.sigma, self.sigma)).sqrt()
    }
}

pub fn phi_tilde_grads(ft: &FreqTriple, signs: SignTriple) -> Result<TildeGradients> {
    ft.check()?;
    Ok(tilde_grads_unchecked(ft, signs))
}

#[inline]
fn tilde_grads_unchecked(ft: &FreqTriple, s: SignTriple) -> TildeGradients {
    let [a, b, c] = ft.inputs();
    let (ga, gb, gc) = (grad_lambda(a), grad_lambda(b), grad_lambda(c));
    let (i1, i2, i3) = (s.iota1.value(), s.iota2.value(), s.iota3.value());
    TildeGradients {
        xi: add(scale(-1.0, grad_lambda(ft.xi)), scale(i1, ga)),
        eta: add(scale(-i1, ga), scale(i2, gb)),
        sigma: add(scale(-i2, gb), scale(i3, gc)),
    }
}

/// `λ(x) − λ(y)` given `x − y` computed stably by the caller.
fn lambda_diff(x: f64, y: f64, x_minus_y: f64) -> f64 {
    let (qx, qy) = (q(x), q(y));
    let q2diff = -(x_minus_y * (x + y)) / ((1.0 + x * x) * (1.0 + y * y));
    x_minus_y * qx + y * q2diff / (qx + qy)
}

/// `(Λ(a)+Λ(b)−Λ(a+b)) / RHS` with
/// `RHS = |a|(2 − ĉ·â − ĉ·b̂) + |b||c|/(1+|b||c|) · |a|/(1+|a|²)`.
pub fn time_resonance_ratio(a: V2, b: V2) -> Result<f64> {
    nonzero(a, "a")?;
    nonzero(b, "b")?;
    let c = add(a, b);
    nonzero(c, "a + b")?;
    let (na, nb, nc) = (norm(a), norm(b), norm(c));
    if na > nb || na > nc {
        return Err(Error::InvalidInput(format!(
            "time-resonance ratio needs |a| <= min(|b|, |a+b|), got {na}, {nb}, {nc}"
        )));
    }
    Ok(time_ratio_unchecked(a, b))
}

fn time_ratio_unchecked(a: V2, b: V2) -> f64 {
    let c = add(a, b);
    let (na, nb, nc) = (norm(a), norm(b), norm(c));
    // |b| − |c| without cancellation
    let b_minus_c = -(2.0 * dot(a, b) + na * na) / (nb + nc);
    let lhs = lambda(na) + lambda_diff(nb, nc, b_minus_c);
    let ca = (dot(c, a) / (nc * na)).min(1.0);
    let cb = (dot(c, b) / (nc * nb)).min(1.0);
    // 1 − cos computed from the cross product for near-aligned pairs
    let one_minus = |cos: f64, u: V2, v: V2, nu: f64, nv: f64| -> f64 {
        if cos > 0.5 {
            let s = (u[0] * v[1] - u[1] * v[0]) / (nu * nv);
            s * s / (1.0 + cos)
        } else {
            1.0 - cos
        }
    };
    let angular = one_minus(ca, c, a, nc, na) + one_minus(cb, c, b, nc, nb);
    let bc = nb * nc;
    let rhs = na * angular + bc / (1.0 + bc) * na / (1.0 + na * na);
    lhs / rhs
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerificationReport {
    pub lemma: String,
    /// Samples drawn.
    pub samples: u64,
    /// Samples satisfying the lemma's constraints.
    pub admissible: u64,
    /// Smallest observed ratio (the normalized quantity the lemma bounds
    /// from below); `inf` when nothing was admissible.
    #[serde(with = "finite_or_null")]
    pub min_ratio: f64,
    /// Frequencies at which `min_ratio` is attained, flattened.
    pub argmin: Vec<f64>,
    /// Empirical constant implied by the extremum.
    #[serde(with = "finite_or_null")]
    pub constant_estimate: f64,
    pub vacuous: bool,
    pub flag: Option<String>,
    pub window: Option<f64>,
    pub seed: u64,
    pub extras: BTreeMap<String, f64>,
}

/// Non-finite values as JSON `null`, read back as `+inf`.
mod finite_or_null {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &f64, s: S) -> Result<S::Ok, S::Error> {
        if v.is_finite() {
            s.serialize_f64(*v)
        } else {
            s.serialize_none()
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        Ok(Option::<f64>::deserialize(d)?.unwrap_or(f64::INFINITY))
    }
}

#[derive(Debug, Clone)]
struct Extremum {
    value: f64,
    arg: Vec<f64>,
    admissible: u64,
}

impl Extremum {
    fn empty() -> Self {
        Self { value: f64::INFINITY, arg: Vec::new(), admissible: 0 }
    }

    fn offer(&mut self, value: f64, arg: impl FnOnce() -> Vec<f64>) {
        self.admissible += 1;
        if value < self.value {
            self.value = value;
            self.arg = arg();
        }
    }

    fn merge(parts: Vec<Extremum>) -> Extremum {
        let mut out = Extremum::empty();
        for p in parts {
            out.admissible += p.admissible;
            if p.value < out.value {
                out.value = p.value;
                out.arg = p.arg;
            }
        }
        out
    }
}

fn log_uniform(rng: &mut ChaCha8Rng, lo: f64, hi: f64) -> f64 {
    (rng.random_range(lo.ln()..hi.ln())).exp()
}

fn signed(rng: &mut ChaCha8Rng, x: f64) -> f64 {
    if rng.random_bool(0.5) {
        x
    } else {
        -x
    }
}

/// Draw one time-resonance pair from the generic, collinear and small-|a|
/// families.
fn time_sample(rng: &mut ChaCha8Rng) -> (V2, V2) {
    let family = rng.random_range(0..4u8);
    let (na, ratio, rel) = match family {
        0 | 1 => (
            log_uniform(rng, 1e-3, 1e2),
            log_uniform(rng, 1.0, 1e4),
            rng.random_range(0.0..2.0 * PI),
        ),
        2 => {
            // near-collinear, parallel or antiparallel
            let m = log_uniform(rng, 1e-8, 1e-1);
            let tilt = signed(rng, m);
            let base = if rng.random_bool(0.8) { 0.0 } else { PI };
            (log_uniform(rng, 1e-3, 1e2), log_uniform(rng, 1.0, 1e4), base + tilt)
        }
        _ => {
            let tilt = if rng.random_bool(0.5) {
                let m = log_uniform(rng, 1e-8, 1e-1);
                signed(rng, m)
            } else {
                rng.random_range(0.0..2.0 * PI)
            };
            (log_uniform(rng, 1e-6, 1e-3), log_uniform(rng, 1.0, 1e6), tilt)
        }
    };
    let th = rng.random_range(0.0..2.0 * PI);
    (polar(na, th), polar(na * ratio, th + rel))
}

/// Minimum of [`time_resonance_ratio`] over `n_samples` admissible pairs.
pub fn verify_time_resonance(n_samples: u64, seed: u64) -> VerificationReport {
    let total = n_samples as usize;
    let parts = par::map_chunks(total, SAMPLE_CHUNK, |chunk, s, e| {
        let mut rng = chunk_rng(seed, chunk as u64);
        let mut ext = Extremum::empty();
        let mut rejected = 0u64;
        for _ in s..e {
            loop {
                let (a, b) = time_sample(&mut rng);
                let c = add(a, b);
                let na = norm(a);
                if na > norm(b) || na > norm(c) || norm(c) == 0.0 {
                    rejected += 1;
                    continue;
                }
                let r = time_ratio_unchecked(a, b);
                ext.offer(r, || vec![a[0], a[1], b[0], b[1]]);
                break;
            }
        }
        (ext, rejected)
    });
    let rejected: u64 = parts.iter().map(|p| p.1).sum();
    let ext = Extremum::merge(parts.into_iter().map(|p| p.0).collect());
    let mut extras = BTreeMap::new();
    extras.insert("rejected".into(), rejected as f64);
    VerificationReport {
        lemma: "time".into(),
        samples: n_samples + rejected,
        admissible: ext.admissible,
        min_ratio: ext.value,
        argmin: ext.arg,
        constant_estimate: ext.value,
        vacuous: ext.admissible == 0,
        flag: if ext.value > 0.0 { None } else { Some("non-positive ratio".into()) },
        window: None,
        seed,
        extras,
    }
}

/// Below this `|ξ|` the space-resonance check uses the low-frequency branch.
pub const LOW_FREQUENCY: f64 = 0.5;

#[derive(Debug, Clone, Copy)]
struct SpaceSetup {
    xi: V2,
    s: f64,
    dir: V2,
    perp: V2,
    kappa: f64,
    signs: SignPair,
    window: f64,
    low: bool,
}

impl SpaceSetup {
    fn admissible_inputs(&self, eta: V2) -> bool {
        let g = gamma0();
        let z = sub(self.xi, eta);
        (norm(eta) - g).abs() < self.window && (norm(z) - g).abs() < self.window
    }

    /// Normalized distance components to the nearest predicted point.
    fn distances(&self, eta: V2, roots: &[f64]) -> Option<(f64, f64)> {
        let mut best: Option<(f64, f64)> = None;
        let mut consider = |p: V2| {
            let d = sub(eta, p);
            let (dpar, dperp) = (dot(d, self.dir).abs(), dot(d, self.perp).abs());
            let pair = if self.low {
                let n = norm(d) * self.s / self.kappa;
                (n, n)
            } else {
                let w = self.kappa.powf(2.0 / 3.0) + (self.s - 2.0 * gamma0()).abs();
                (dperp / self.kappa, dpar * w / self.kappa)
            };
            if best.is_none_or(|b| pair.0.max(pair.1) < b.0.max(b.1)) {
                best = Some(pair);
            }
        };
        for &r in roots {
            let p = scale(r, self.dir);
            consider(p);
            if self.low {
                consider(sub(self.xi, p));
            }
        }
        best
    }
}

struct SpaceStats {
    admissible: u64,
    perp: f64,
    par: f64,
    worst: f64,
    arg: Vec<f64>,
    orphan: u64,
    edge_par: f64,
    edge_perp: f64,
}

impl SpaceStats {
    fn new() -> Self {
        Self { admissible: 0, perp: 0.0, par: 0.0, worst: 0.0, arg: Vec::new(), orphan: 0, edge_par: 0.0, edge_perp: 0.0 }
    }

    fn merge(parts: Vec<SpaceStats>) -> SpaceStats {
        let mut o = SpaceStats::new();
        for p in parts {
            o.admissible += p.admissible;
            o.orphan += p.orphan;
            o.perp = o.perp.max(p.perp);
            o.par = o.par.max(p.par);
            o.edge_par = o.edge_par.max(p.edge_par);
            o.edge_perp = o.edge_perp.max(p.edge_perp);
            if p.worst > o.worst {
                o.worst = p.worst;
                o.arg = p.arg;
            }
        }
        o
    }
}

fn space_accept(setup: &SpaceSetup, eta: V2, roots: &[f64], st: &mut SpaceStats) -> bool {
    if !setup.admissible_inputs(eta) {
        return false;
    }
    let z = sub(setup.xi, eta);
    if norm(z) == 0.0 || norm(eta) == 0.0 {
        return false;
    }
    let g = grad_eta_unchecked(setup.xi, eta, setup.signs);
    if norm(g) > setup.kappa {
        return false;
    }
    st.admissible += 1;
    match setup.distances(eta, roots) {
        Some((a, b)) => {
            st.perp = st.perp.max(a);
            st.par = st.par.max(b);
            if a.max(b) > st.worst {
                st.worst = a.max(b);
                st.arg = vec![setup.xi[0], setup.xi[1], eta[0], eta[1]];
            }
        }
        None => {
            st.orphan += 1;
            st.worst = f64::INFINITY;
            st.arg = vec![setup.xi[0], setup.xi[1], eta[0], eta[1]];
        }
    }
    true
}

/// Sample `η` near the space-resonant set `|Ξ(ξ,η)| ≤ κ` and measure its
/// distance to the predicted points `p(ξ)` built from the roots of
/// `λ′(s−r) = λ′(r)` (equal signs) or `λ′(r−s) = λ′(r)` (opposite signs).
///
/// Half the samples are spread over the whole admissible region; the rest go
/// to boxes around each predicted point, which are doubled until no accepted
/// sample comes near their edge. `min_ratio` is the reciprocal of the largest
/// normalized distance.
pub fn verify_space_resonance(
    xi: V2,
    kappa: f64,
    signs: SignPair,
    n_samples: u64,
    window: f64,
    seed: u64,
) -> Result<VerificationReport> {
    nonzero(xi, "xi")?;
    if !(kappa > 0.0) || !(window > 0.0) {
        return Err(Error::InvalidInput("kappa and window must be positive".into()));
    }
    let s = norm(xi);
    let dir = scale(1.0 / s, xi);
    let setup = SpaceSetup {
        xi,
        s,
        dir,
        perp: [-dir[1], dir[0]],
        kappa,
        signs,
        window,
        low: s < LOW_FREQUENCY,
    };
    let roots = space_resonance_roots(s, signs, window)?;
    let g0 = gamma0();
    let n_global = (n_samples / 2) as usize;
    let global = par::map_chunks(n_global, SAMPLE_CHUNK, |chunk, a, b| {
        let mut rng = chunk_rng(seed, chunk as u64);
        let mut st = SpaceStats::new();
        for _ in a..b {
            let r = g0 + rng.random_range(-window..window);
            let th = if rng.random_bool(0.5) {
                rng.random_range(0.0..2.0 * PI)
            } else {
                {
                    let m = log_uniform(&mut rng, 1e-9, 0.5);
                    signed(&mut rng, m) + if rng.random_bool(0.5) { 0.0 } else { PI }
                }
            };
            let eta = polar(r, th);
            let eta = [eta[0] * dir[0] - eta[1] * dir[1], eta[0] * dir[1] + eta[1] * dir[0]];
            space_accept(&setup, eta, &roots, &mut st);
        }
        st
    });
    let mut all = vec![SpaceStats::merge(global)];

    let n_local = n_samples as usize - n_global;
    let mut passes = 0u32;
    if !roots.is_empty() {
        let per_root = n_local / roots.len();
        let w = if setup.low { s } else { kappa.powf(2.0 / 3.0) + (s - 2.0 * g0).abs() };
        for (ri, &r) in roots.iter().enumerate() {
            let centers: Vec<V2> = if setup.low {
                vec![scale(r, dir), sub(xi, scale(r, dir))]
            } else {
                vec![scale(r, dir)]
            };
            for (ci, &c) in centers.iter().enumerate() {
                let (mut hpar, mut hperp) = (4.0 * kappa / w, 4.0 * kappa);
                let n_box = per_root / centers.len();
                for pass in 0..16u64 {
                    passes += 1;
                    let stream_base = 1 << 40 | (ri as u64) << 32 | (ci as u64) << 28 | pass << 20;
                    let parts = par::map_chunks(n_box, SAMPLE_CHUNK, |chunk, a, b| {
                        let mut rng = chunk_rng(seed, stream_base + chunk as u64);
                        let mut st = SpaceStats::new();
                        for _ in a..b {
                            let (u, v) = (rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0));
                            let eta = add(c, add(scale(u * hpar, dir), scale(v * hperp, setup.perp)));
                            if space_accept(&setup, eta, &roots, &mut st) {
                                st.edge_par = st.edge_par.max(u.abs());
                                st.edge_perp = st.edge_perp.max(v.abs());
                            }
                        }
                        st
                    });
                    let st = SpaceStats::merge(parts);
                    let (ep, eq) = (st.edge_par, st.edge_perp);
                    let last = pass == 15;
                    if (ep > 0.8 || eq > 0.8) && !last {
                        if ep > 0.8 {
                            hpar *= 2.0;
                        }
                        if eq > 0.8 {
                            hperp *= 2.0;
                        }
                        continue;
                    }
                    all.push(st);
                    break;
                }
            }
        }
    }
    let st = SpaceStats::merge(all);
    let vacuous = st.admissible == 0;
    let constant = if vacuous { 0.0 } else { st.worst };
    let mut extras = BTreeMap::new();
    extras.insert("perp_constant".into(), st.perp);
    extras.insert("par_constant".into(), st.par);
    extras.insert("roots".into(), roots.len() as f64);
    extras.insert("orphans".into(), st.orphan as f64);
    extras.insert("box_passes".into(), passes as f64);
    extras.insert("kappa".into(), kappa);
    extras.insert("xi_norm".into(), s);
    let flag = if vacuous {
        Some("vacuous: no sample satisfies |Xi| <= kappa".into())
    } else if st.orphan > 0 {
        Some("near-resonant samples without a predicted root".into())
    } else {
        None
    };
    Ok(VerificationReport {
        lemma: "space".into(),
        samples: n_samples,
        admissible: st.admissible,
        min_ratio: if vacuous { f64::INFINITY } else { 1.0 / constant },
        argmin: st.arg,
        constant_estimate: constant,
        vacuous,
        flag,
        window: Some(window),
        seed,
        extras,
    })
}

/// One-dimensional families on which `Ξ̃` vanishes: all inputs parallel to a
/// direction `e`, with `σ = z e`, `η−σ = ι₂ι₃ y e`, `ξ−η = ι₁ι₃ x e` and
/// `y ∈ {z, π(z)}`, `x ∈ {y, π(y)}`.
fn tilde_family(z: f64, fam: u8, s: SignTriple, window: f64) -> Option<[f64; 3]> {
    let pi = |v: f64| RadialPoint::new(v).ok().and_then(|p| pi_map(p, window).ok());
    let y = if fam & 1 == 0 { Some(z) } else { pi(z) }?;
    let x = if fam & 2 == 0 { Some(y) } else { pi(y) }?;
    let (i1, i2, i3) = (s.iota1.value(), s.iota2.value(), s.iota3.value());
    Some([z, i2 * i3 * y, i1 * i3 * x])
}

fn iterated_sample(
    rng: &mut ChaCha8Rng,
    signs: SignTriple,
    kappa1: f64,
    window: f64,
) -> Option<FreqTriple> {
    let g0 = gamma0();
    let l3 = d3lambda(g0);
    let th = rng.random_range(0.0..2.0 * PI);
    if rng.random_range(0.0..1.0) < 0.05 {
        // unconstrained draw from the annuli
        let draw = |rng: &mut ChaCha8Rng| polar(g0 + rng.random_range(-window..window), rng.random_range(0.0..2.0 * PI));
        let (c, b, a) = (draw(rng), draw(rng), draw(rng));
        let sigma = c;
        let eta = add(sigma, b);
        return Some(FreqTriple::new(add(eta, a), eta, sigma));
    }
    let m = log_uniform(rng, 1e-4, 0.95 * window);
    let d = signed(rng, m);
    let fam = rng.random_range(0..4u8);
    let [cz, cy, cx] = tilde_family(g0 + d, fam, signs, window)?;
    // radial perturbations move Ξ̃ at rate ~λ‴|d|, angular ones at rate ~1
    let spread = log_uniform(rng, 0.05, 20.0);
    let rad = spread * kappa1 / (l3 * d.abs());
    let ang = spread * kappa1;
    let pert = |len: f64, rng: &mut ChaCha8Rng| -> V2 {
        let (dr, dt) = (rng.random_range(-rad..rad), rng.random_range(-ang..ang));
        let r = len.abs() + dr;
        polar(r * len.signum(), th + dt)
    };
    let sigma = pert(cz, rng);
    let b = pert(cy, rng);
    let a = pert(cx, rng);
    let eta = add(sigma, b);
    Some(FreqTriple::new(add(eta, a), eta, sigma))
}

fn in_annuli(ft: &FreqTriple, window: f64) -> bool {
    let g0 = gamma0();
    ft.inputs().iter().all(|v| (norm(*v) - g0).abs() < window) && norm(ft.xi) > 0.0
}

/// Minimum of `|Φ̃|/κ₂^{3/2}` over samples with inputs in the `γ₀` annuli,
/// `|Ξ̃| ≤ κ₁` and `|∇_ξΦ̃| ≥ κ₂`.
///
/// For degenerate sign patterns samples are concentrated near the families of
/// [`tilde_family`], perturbed on the scales at which `Ξ̃` reaches `κ₁`. For
/// the other patterns the report is flagged and carries `min |Φ̃|` over the
/// unconstrained annuli.
pub fn verify_iterated_resonance(
    kappa1: f64,
    kappa2: f64,
    signs: SignTriple,
    n_samples: u64,
    window: f64,
    seed: u64,
) -> Result<VerificationReport> {
    if !(kappa1 > 0.0 && kappa2 > kappa1) || !(window > 0.0) {
        return Err(Error::InvalidInput("need 0 < kappa1 < kappa2 and a positive window".into()));
    }
    let g0 = gamma0();
    let total = n_samples as usize;
    if !signs.is_degenerate() {
        let parts = par::map_chunks(total, SAMPLE_CHUNK, |chunk, a, b| {
            let mut rng = chunk_rng(seed, chunk as u64);
            let mut ext = Extremum::empty();
            for _ in a..b {
                let mut draw = || polar(g0 + rng.random_range(-window..window), rng.random_range(0.0..2.0 * PI));
                let (c, bb, aa) = (draw(), draw(), draw());
                let eta = add(c, bb);
                let ft = FreqTriple::new(add(eta, aa), eta, c);
                if norm(ft.xi) == 0.0 {
                    continue;
                }
                let v = phi_tilde_unchecked(&ft, signs).abs();
                ext.offer(v, || flatten(&ft));
            }
            ext
        });
        let ext = Extremum::merge(parts);
        let mut extras = BTreeMap::new();
        extras.insert("min_abs_phi_tilde".into(), ext.value);
        return Ok(VerificationReport {
            lemma: "iterated".into(),
            samples: n_samples,
            admissible: ext.admissible,
            min_ratio: ext.value,
            argmin: ext.arg,
            constant_estimate: ext.value,
            vacuous: ext.admissible == 0,
            flag: Some("non-degenerate: |Phi~| >~ 1".into()),
            window: Some(window),
            seed,
            extras,
        });
    }
    let k32 = kappa2.powf(1.5);
    let parts = par::map_chunks(total, SAMPLE_CHUNK, |chunk, a, b| {
        let mut rng = chunk_rng(seed, chunk as u64);
        let mut ext = Extremum::empty();
        for _ in a..b {
            let Some(ft) = iterated_sample(&mut rng, signs, kappa1, window) else { continue };
            if !in_annuli(&ft, window) {
                continue;
            }
            let gr = tilde_grads_unchecked(&ft, signs);
            if gr.xi_tilde_norm() > kappa1 || norm(gr.xi) < kappa2 {
                continue;
            }
            let v = phi_tilde_unchecked(&ft, signs).abs() / k32;
            ext.offer(v, || flatten(&ft));
        }
        ext
    });
    let ext = Extremum::merge(parts);
    let mut extras = BTreeMap::new();
    extras.insert("kappa1".into(), kappa1);
    extras.insert("kappa2".into(), kappa2);
    if ext.admissible > 0 {
        extras.insert("min_abs_phi_tilde".into(), ext.value * k32);
    }
    let vacuous = ext.admissible == 0;
    Ok(VerificationReport {
        lemma: "iterated".into(),
        samples: n_samples,
        admissible: ext.admissible,
        min_ratio: ext.value,
        argmin: ext.arg,
        constant_estimate: ext.value,
        vacuous,
        flag: if vacuous { Some("vacuous: constraint set not reached".into()) } else { None },
        window: Some(window),
        seed,
        extras,
    })
}

fn flatten(ft: &FreqTriple) -> Vec<f64> {
    vec![ft.xi[0], ft.xi[1], ft.eta[0], ft.eta[1], ft.sigma[0], ft.sigma[1]]
}

/// Fitted exponent of `min |Φ̃|` against `κ₂`, with the per-`κ₂` reports.
pub fn iterated_exponent(
    kappa1: f64,
    kappa2s: &[f64],
    signs: SignTriple,
    n_samples: u64,
    window: f64,
    seed: u64,
) -> Result<(f64, Vec<VerificationReport>)> {
    let mut reps = Vec::new();
    for &k2 in kappa2s {
        let r = verify_iterated_resonance(kappa1, k2, signs, n_samples, window, seed)?;
        if r.vacuous {
            return Err(Error::InvalidInput(format!("constraint set empty at kappa2 = {k2}")));
        }
        reps.push(r);
    }
    let xs: Vec<f64> = kappa2s.to_vec();
    let ys: Vec<f64> = reps.iter().map(|r| r.extras["min_abs_phi_tilde"]).collect();
    let fit = crate::semigroup::fit_loglog(&xs, &ys)?;
    Ok((fit.slope, reps))
}

/// Functions certified by [`certify_min_on_box`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum BoxFunction {
    /// `|Φ|` as a function of `(ξ₁, ξ₂, η₁, η₂)`.
    Phi { signs: SignPair },
    /// `|Φ̃|` as a function of `(ξ₁, ξ₂, η₁, η₂, σ₁, σ₂)`.
    PhiTilde { signs: SignTriple },
}

impl BoxFunction {
    pub fn dim(&self) -> usize {
        match self {
            BoxFunction::Phi { .. } => 4,
            BoxFunction::PhiTilde { .. } => 6,
        }
    }

    /// Valid Lipschitz constant from `sup λ′ = √2`.
    pub fn lipschitz(&self) -> f64 {
        match self {
            // each of ∇_ξ, ∇_η is a sum of two unit-bounded gradients
            BoxFunction::Phi { .. } => (2.0 * (2.0 * SQRT_2).powi(2)).sqrt(),
            BoxFunction::PhiTilde { .. } => (3.0 * (2.0 * SQRT_2).powi(2)).sqrt(),
        }
    }

    fn eval(&self, p: &[f64]) -> f64 {
        match *self {
            BoxFunction::Phi { signs } => phi_unchecked([p[0], p[1]], [p[2], p[3]], signs).abs(),
            BoxFunction::PhiTilde { signs } => {
                let ft = FreqTriple::new([p[0], p[1]], [p[2], p[3]], [p[4], p[5]]);
                phi_tilde_unchecked(&ft, signs).abs()
            }
        }
    }

    /// Input frequencies as linear combinations of the coordinates.
    fn inputs(&self) -> Vec<Vec<f64>> {
        match self {
            BoxFunction::Phi { .. } => vec![vec![1.0, 0.0], vec![0.0, 1.0], vec![1.0, -1.0]],
            BoxFunction::PhiTilde { .. } => vec![
                vec![1.0, 0.0, 0.0],
                vec![1.0, -1.0, 0.0],
                vec![0.0, 1.0, -1.0],
                vec![0.0, 0.0, 1.0],
            ],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FreqBox {
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Certificate {
    /// `min over grid − L·h·√d`; the function is `≥ bound` on the box.
    pub bound: f64,
    pub grid_min: f64,
    pub argmin: Vec<f64>,
    pub points: u64,
    pub inconclusive: bool,
}

/// Lipschitz grid certificate for a lower bound of `f` on an axis-aligned box.
/// Degenerate axes (`lo = hi`) do not count towards the dimension `d`.
pub fn certify_min_on_box(f: BoxFunction, bx: &FreqBox, lipschitz: f64, grid_step: f64) -> Result<Certificate> {
    let dim = f.dim();
    if bx.lo.len() != dim || bx.hi.len() != dim {
        return Err(Error::InvalidInput(format!("box must have {dim} coordinates")));
    }
    if !(grid_step > 0.0) || !(lipschitz >= 0.0) {
        return Err(Error::InvalidInput("grid step must be positive and lipschitz nonnegative".into()));
    }
    if bx.lo.iter().zip(&bx.hi).any(|(a, b)| !(a <= b) || !a.is_finite() || !b.is_finite()) {
        return Err(Error::InvalidInput("box is empty or unbounded".into()));
    }
    // each input frequency ranges over a box; it must stay clear of 0
    for comb in f.inputs() {
        let range = |axis: usize| -> (f64, f64) {
            let mut lo = 0.0;
            let mut hi = 0.0;
            for (v, &c) in comb.iter().enumerate() {
                let (a, b) = (bx.lo[2 * v + axis], bx.hi[2 * v + axis]);
                let (x, y) = if c >= 0.0 { (c * a, c * b) } else { (c * b, c * a) };
                lo += x;
                hi += y;
            }
            (lo, hi)
        };
        let (r0, r1) = (range(0), range(1));
        if r0.0 <= 0.0 && 0.0 <= r0.1 && r1.0 <= 0.0 && 0.0 <= r1.1 {
            return Err(Error::InvalidInput("box contains a zero input frequency".into()));
        }
    }
    let counts: Vec<usize> = bx
        .lo
        .iter()
        .zip(&bx.hi)
        .map(|(a, b)| ((b - a) / grid_step * (1.0 + 1e-12)).floor() as usize + 1)
        .collect();
    let d_eff = bx.lo.iter().zip(&bx.hi).filter(|(a, b)| b > a).count();
    let total: usize = counts.iter().product();
    if total > 1 << 34 {
        return Err(Error::InvalidInput(format!("certificate grid too large ({total} points)")));
    }
    let point = |mut idx: usize, buf: &mut [f64]| {
        for k in 0..dim {
            let i = idx % counts[k];
            idx /= counts[k];
            buf[k] = (bx.lo[k] + i as f64 * grid_step).min(bx.hi[k]);
        }
    };
    let parts = par::map_chunks(total, 1 << 16, |_, s, e| {
        let mut buf = vec![0.0; dim];
        let mut best = (f64::INFINITY, Vec::new());
        for i in s..e {
            point(i, &mut buf);
            let v = f.eval(&buf);
            if v < best.0 || v.is_nan() {
                best = (v, buf.clone());
            }
        }
        best
    });
    let (grid_min, argmin) = parts
        .into_iter()
        .fold((f64::INFINITY, Vec::new()), |acc, p| if p.0 < acc.0 || p.0.is_nan() { p } else { acc });
    if grid_min.is_nan() {
        return Err(Error::NonFinite("function evaluated to NaN on the box".into()));
    }
    let bound = grid_min - lipschitz * grid_step * (d_eff as f64).sqrt();
    Ok(Certificate { bound, grid_min, argmin, points: total as u64, inconclusive: bound <= 0.0 })
}
