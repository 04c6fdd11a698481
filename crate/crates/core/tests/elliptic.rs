use std::f64::consts::PI;

use ionlab::elliptic::*;
use ionlab::field::C64;
use ionlab::{Grid, SpectralField};

/// Periodic 1D solve of `φ'' = e^φ − 1 − ε cos x` on `[0, 2π)` by Newton
/// iteration on a fourth-order finite-difference discretization with dense
/// Gaussian elimination.
fn oracle_1d(eps: f64, m: usize) -> Vec<f64> {
    let h = 2.0 * PI / m as f64;
    let x: Vec<f64> = (0..m).map(|i| i as f64 * h).collect();
    let mut phi: Vec<f64> = x.iter().map(|&t| 0.5 * eps * t.cos()).collect();
    let stencil = [-1.0 / 12.0, 4.0 / 3.0, -5.0 / 2.0, 4.0 / 3.0, -1.0 / 12.0];
    for _ in 0..30 {
        let lap = |i: usize, v: &[f64]| -> f64 {
            (0..5).map(|s| stencil[s] * v[(i + m + s - 2) % m]).sum::<f64>() / (h * h)
        };
        let f: Vec<f64> = (0..m)
            .map(|i| lap(i, &phi) - phi[i].exp_m1() + eps * x[i].cos())
            .collect();
        if f.iter().map(|v| v.abs()).fold(0.0, f64::max) < 1e-15 {
            break;
        }
        let mut a = vec![vec![0.0; m + 1]; m];
        for i in 0..m {
            for s in 0..5 {
                a[i][(i + m + s - 2) % m] += stencil[s] / (h * h);
            }
            a[i][i] -= phi[i].exp();
            a[i][m] = -f[i];
        }
        for c in 0..m {
            let piv = (c..m).max_by(|&p, &q| a[p][c].abs().total_cmp(&a[q][c].abs())).unwrap();
            a.swap(c, piv);
            for r in c + 1..m {
                let fct = a[r][c] / a[c][c];
                if fct != 0.0 {
                    for k in c..=m {
                        a[r][k] -= fct * a[c][k];
                    }
                }
            }
        }
        let mut d = vec![0.0; m];
        for r in (0..m).rev() {
            let s: f64 = (r + 1..m).map(|k| a[r][k] * d[k]).sum();
            d[r] = (a[r][m] - s) / a[r][r];
        }
        for i in 0..m {
            phi[i] += d[i];
        }
    }
    phi
}

fn cosine_density(eps: f64, n: usize) -> SpectralField {
    let g = Grid::new(n, 2.0 * PI).unwrap();
    SpectralField::from_fn(g, |[a, _]| C64::new(eps * a.cos(), 0.0))
}

#[test]
fn first_order_response_and_quadratic_remainder() {
    let n = 32;
    let mut rem = Vec::new();
    let epss = [1e-2, 5e-3, 2.5e-3];
    for &eps in &epss {
        let dens = cosine_density(eps, n);
        let sol = solve_phi(&dens, &EllipticConfig { tol: 1e-14, ..Default::default() }).unwrap();
        let g = *dens.grid();
        let m = 256;
        let oracle = oracle_1d(eps, m);
        let mut worst: f64 = 0.0;
        let mut r: f64 = 0.0;
        for i in 0..g.len() {
            let [a, _] = g.x(i);
            let k = ((a / (2.0 * PI) * m as f64).round() as i64).rem_euclid(m as i64) as usize;
            let got = sol.phi.physical()[i].re;
            worst = worst.max((got - oracle[k]).abs());
            r = r.max((got - 0.5 * eps * a.cos()).abs());
        }
        assert!(worst < 1e-8 * eps, "eps={eps} oracle gap {worst}");
        rem.push(r);
    }
    let slope = ((rem[0] / rem[2]).ln()) / ((epss[0] / epss[2]).ln());
    assert!((slope - 2.0).abs() < 0.05, "remainder exponent {slope}");
}

fn bumpy_density(amp: f64) -> SpectralField {
    let g = Grid::new(64, 20.0).unwrap();
    let f = SpectralField::from_fn(g, |[a, b]| {
        let r2 = a * a + b * b;
        C64::new((-r2 / 6.0).exp() * (1.3 * a).cos() - 0.6 * (-((a - 2.0).powi(2) + b * b) / 3.0).exp(), 0.0)
    });
    let sup = f.physical().iter().map(|z| z.re.abs()).fold(0.0, f64::max);
    f.scale(C64::new(amp / sup, 0.0))
}

#[test]
fn contraction_at_smallness_threshold() {
    let dens = bumpy_density(0.5);
    let sol = solve_phi(&dens, &EllipticConfig::default()).unwrap();
    let r = sol.stats.contraction_ratio.expect("ratio measured");
    assert!(r < 1.0, "ratio {r}");
    assert!(sol.stats.residual <= 1e-11);
}

#[test]
fn schemes_agree() {
    let dens = bumpy_density(0.3);
    let tol = 1e-11;
    let fp = solve_phi(&dens, &EllipticConfig { tol, ..Default::default() }).unwrap();
    let nw = solve_phi(&dens, &EllipticConfig { tol, scheme: Scheme::Newton, ..Default::default() }).unwrap();
    let gap = fp.phi.sub(&nw.phi).unwrap().l2_physical();
    assert!(gap <= 10.0 * tol, "gap {gap}");
    assert!(nw.stats.iterations < fp.stats.iterations);
}

#[test]
fn residual_recomputed_independently() {
    let dens = bumpy_density(0.2);
    let cfg = EllipticConfig::default();
    let sol = solve_phi(&dens, &cfg).unwrap();
    assert!(residual(&sol.phi, &dens, cfg.padding) <= cfg.tol);
}

#[test]
fn potential_bounded_by_density() {
    let c: Vec<f64> = [0.2, 0.1, 0.05]
        .iter()
        .map(|&a| {
            let d = bumpy_density(a);
            solve_phi(&d, &EllipticConfig::default()).unwrap().phi.l2_physical() / d.l2_physical()
        })
        .collect();
    assert!(c.iter().all(|&v| v < 1.0));
    assert!((c[1] / c[2] - 1.0).abs() < 0.1 && (c[0] / c[1] - 1.0).abs() < 0.1);
}

#[test]
fn expansion_terms() {
    let g = Grid::new(64, 24.0).unwrap();
    let base = SpectralField::from_fn(g, |[a, b]| C64::new(0.2 * (-(a * a + b * b) / 4.0).exp(), 0.0));
    assert!(phi_expansion_terms(&SpectralField::zeros(g), 2).unwrap().sup_norm() == 0.0);

    let e2 = phi_expansion_terms(&base, 2).unwrap();
    let half = phi_expansion_terms(&base.scale(C64::new(0.5, 0.0)), 2).unwrap();
    let ratio = half.l2_physical() / e2.l2_physical();
    assert!((ratio / 0.25 - 1.0).abs() < 0.05, "ratio {ratio}");

    let e3 = phi_expansion_terms(&base, 3).unwrap();
    let sq = SpectralField::from_fn(g, |[a, b]| {
        let p = 0.2 * (-(a * a + b * b) / 4.0).exp();
        C64::new(p * p / 2.0, 0.0)
    });
    let want = sq.apply_radial(|r| -1.0 / (1.0 + r * r));
    let gap = e2.sub(&e3).unwrap().sub(&want).unwrap().l2_physical();
    assert!(gap < 1e-12, "gap {gap}");
}
