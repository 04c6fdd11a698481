use std::f64::consts::PI;

use ionlab::dispersion::{dlambda, gamma0, lambda, min_group_velocity};
use ionlab::error::Error;
use ionlab::field::C64;
use ionlab::paley::omega;
use ionlab::semigroup::*;
use ionlab::{Grid, SpectralField};

fn packet(grid: Grid, xi0: [f64; 2], s: f64) -> SpectralField {
    SpectralField::from_fn(grid, |[a, b]| {
        C64::from_polar((-(a * a + b * b) / (2.0 * s * s)).exp(), xi0[0] * a + xi0[1] * b)
    })
}

#[test]
fn unitary_group_with_inverse() {
    let g = Grid::new(128, 60.0).unwrap();
    let f = packet(g, [0.7, -0.4], 3.0);
    let n0 = f.l2_spectral();
    assert_eq!(propagate(&f, 0.0).spectrum(), f.spectrum());
    for &t in &[0.3, 7.0, 55.0, -12.0] {
        let u = propagate(&f, t);
        assert!((u.l2_spectral() / n0 - 1.0).abs() < 1e-12);
    }
    let ab = propagate(&propagate(&f, 2.5), 4.0);
    let direct = propagate(&f, 6.5);
    assert!(ab.sub(&direct).unwrap().l2_physical() < 1e-10 * n0);
    let back = propagate(&propagate(&f, 9.0), -9.0);
    assert!(back.sub(&f).unwrap().l2_physical() < 1e-10 * n0);
}

#[test]
fn plane_wave_phase() {
    let g = Grid::new(32, 2.0 * PI * 4.0).unwrap();
    let k = [0.75, 0.5];
    let f = SpectralField::from_fn(g, |[a, b]| C64::from_polar(1.0, k[0] * a + k[1] * b));
    let t = 3.7;
    let u = propagate(&f, t);
    let ph = C64::from_polar(1.0, t * lambda(k[0].hypot(k[1])));
    for (x, y) in f.physical().iter().zip(u.physical()) {
        assert!((x * ph - y).norm() < 1e-12);
    }
}

#[test]
fn commutes_with_grid_rotation_and_omega() {
    let g = Grid::new(128, 80.0).unwrap();
    let f = SpectralField::from_fn(g, |[a, b]| {
        C64::new((-((a - 2.0).powi(2) + b * b) / 8.0).exp() * (0.9 * a + 0.3 * b).cos(), 0.0)
    });
    let t = 4.0;
    let a = propagate(&f.rotate90(), t);
    let b = propagate(&f, t).rotate90();
    assert!(a.sub(&b).unwrap().sup_norm() < 1e-13);
    // Ω needs spatial decay; keep the spectrum away from the cone point ξ = 0
    let f = packet(g, [1.5, 0.5], 4.0);
    let c = omega(&propagate(&f, t)).unwrap();
    let d = propagate(&omega(&f).unwrap(), t);
    assert!(c.sub(&d).unwrap().l2_physical() < 1e-10 * c.l2_physical());
}

#[test]
fn packet_moves_at_group_velocity() {
    let g = Grid::new(512, 400.0).unwrap();
    let xi0 = [1.0, 0.0];
    let f = packet(g, xi0, 10.0);
    let center = |u: &SpectralField| -> [f64; 2] {
        let (mut m, mut x, mut y) = (0.0, 0.0, 0.0);
        for (i, z) in u.physical().iter().enumerate() {
            let [a, b] = g.x(i);
            let w = z.norm_sqr();
            m += w;
            x += a * w;
            y += b * w;
        }
        [x / m, y / m]
    };
    let (c10, c100) = (center(&propagate(&f, 10.0)), center(&propagate(&f, 100.0)));
    let v = [(c100[0] - c10[0]) / 90.0, (c100[1] - c10[1]) / 90.0];
    // e^{itΛ} carries e^{iξ₀·x} along −∇Λ(ξ₀)
    assert!((-v[0] / dlambda(1.0) - 1.0).abs() < 0.02, "v = {v:?}");
    assert!(v[1].abs() < 0.02 * dlambda(1.0));
}

#[test]
fn stationary_point_cases() {
    assert_eq!(stationary_points(min_group_velocity()), vec![gamma0()]);
    assert!(stationary_points(min_group_velocity() - 1e-3).is_empty());
    // λ′(1) exceeds the right-branch supremum 1, so only the left root exists
    let r = stationary_points(dlambda(1.0));
    assert_eq!(r.len(), 1);
    assert!((r[0] - 1.0).abs() < 1e-12);
    let two = stationary_points(0.99);
    assert_eq!(two.len(), 2);
    for x in two {
        assert!((dlambda(x) - 0.99).abs() < 1e-12);
    }
}

/// `J₀(z) = (1/π)∫₀^π cos(z sin θ) dθ`, trapezoid rule (spectrally accurate).
fn bessel_j0(z: f64) -> f64 {
    let m = 64 + (z.abs() as usize) * 2;
    let h = PI / m as f64;
    let mut s = 0.5 * (1.0 + 1.0);
    for i in 1..m {
        s += (z * (i as f64 * h).sin()).cos();
    }
    s * h / PI
}

/// `sup_ρ |u(ρ,t)| / ‖u‖₂` for the radial field with spectrum `p(|ξ|)`.
fn hankel_sup(p: &DecayProfile, t: f64, rho_max: f64) -> f64 {
    let (lo, hi) = p.support();
    let nr = 1500;
    let h = (hi - lo) / nr as f64;
    let rs: Vec<f64> = (0..=nr).map(|i| lo + i as f64 * h).collect();
    let w: Vec<f64> = rs.iter().map(|&r| p.eval(r) * r * h).collect();
    let u = |rho: f64| -> f64 {
        let mut acc = C64::new(0.0, 0.0);
        for (r, wi) in rs.iter().zip(&w) {
            acc += C64::from_polar(wi * bessel_j0(r * rho), t * lambda(*r));
        }
        acc.norm() * 2.0 * PI
    };
    let norm2: f64 = rs.iter().map(|&r| p.eval(r).powi(2) * r * h).sum::<f64>() * (2.0 * PI).powi(3);
    let mut best = (0.0, 0.0);
    let mut rho = 0.0;
    while rho <= rho_max {
        let v = u(rho);
        if v > best.1 {
            best = (rho, v);
        }
        rho += 1.0;
    }
    let mut r = (best.0 - 1.0).max(0.0);
    while r <= best.0 + 1.0 {
        best.1 = best.1.max(u(r));
        r += 0.02;
    }
    best.1 / norm2.sqrt()
}

#[test]
fn probe_sup_matches_hankel_oracle() {
    let p = DecayProfile::generic();
    let spec = DecayProbeSpec { profile: p, times: vec![25.0, 50.0, 100.0], domain_length: 800.0, grid: 1024 };
    let rep = decay_exponent_probe(&spec).unwrap();
    for (t, s) in rep.times.iter().zip(&rep.sup_norms) {
        let want = hankel_sup(&p, *t, 1.5 * t + 20.0);
        assert!((s / want - 1.0).abs() < 0.01, "t={t}: {s} vs {want}");
    }
    for l in &rep.l2_norms {
        assert!((l - 1.0).abs() < 1e-12);
    }
    assert!(rep.resolved());
}

#[test]
fn boundary_mass_aborts_probe() {
    let p = DecayProfile::Annulus { inner: 0.2, outer: 0.9, edge: 0.1 };
    let spec = DecayProbeSpec::log_spaced(p, 1.0, 100.0, 11, 1024);
    assert!(matches!(decay_exponent_probe(&spec), Err(Error::WrapAround(_))));
}

/// Low-frequency shell decay. At |ξ| ~ 1/8 the flow stays wave-like up to
/// t ~ 10⁴; the t^{-1} regime needs a grid this machine cannot hold.
#[test]
#[ignore = "asymptotic regime out of reach at 4096^2"]
fn low_frequency_shell_decays_like_inverse_time() {
    let spec = DecayProbeSpec::log_spaced(DecayProfile::Shell { k: -3 }, 1e3, 1e4, 21, 4096);
    let rep = decay_exponent_probe(&spec).unwrap();
    eprintln!("k=-3 slope {:?}", rep.late);
    assert!((rep.slope() + 1.0).abs() <= 0.15, "slope {}", rep.slope());
}
