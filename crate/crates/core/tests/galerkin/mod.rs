//! Galerkin model of the semi-discrete system on the modes `{−1,0,1}²`,
//! written independently of the library.

use std::f64::consts::PI;

/// Galerkin model of the semi-discrete flow on the modes `{−1,0,1}²` of a
/// periodic square, with integrals by an 8×8 midpoint-free rectangle rule.
pub struct Galerkin {
    pub l: f64,
    ks: Vec<[f64; 2]>,
}

const M: usize = 8;

impl Galerkin {
    pub fn new(l: f64) -> Self {
        let w = 2.0 * PI / l;
        let ks = vec![[1.0, 0.0], [0.0, 1.0], [1.0, 1.0], [1.0, -1.0]].into_iter().map(|[a, b]| [a * w, b * w]).collect();
        Self { l, ks }
    }

    /// dof layout: [const, cos k₁, sin k₁, cos k₂, sin k₂, ...]
    pub fn dofs(&self) -> usize {
        1 + 2 * self.ks.len()
    }

    pub fn points(&self) -> Vec<[f64; 2]> {
        let h = self.l / M as f64;
        (0..M * M).map(|i| [(i / M) as f64 * h - self.l / 2.0, (i % M) as f64 * h - self.l / 2.0]).collect()
    }

    pub fn eval(&self, c: &[f64], x: [f64; 2]) -> f64 {
        let mut v = c[0];
        for (n, k) in self.ks.iter().enumerate() {
            let th = k[0] * x[0] + k[1] * x[1];
            v += c[1 + 2 * n] * th.cos() + c[2 + 2 * n] * th.sin();
        }
        v
    }

    pub fn grad(&self, c: &[f64], x: [f64; 2]) -> [f64; 2] {
        let mut g = [0.0, 0.0];
        for (n, k) in self.ks.iter().enumerate() {
            let th = k[0] * x[0] + k[1] * x[1];
            let d = -c[1 + 2 * n] * th.sin() + c[2 + 2 * n] * th.cos();
            g[0] += k[0] * d;
            g[1] += k[1] * d;
        }
        g
    }

    pub fn project(&self, f: &[f64]) -> Vec<f64> {
        let pts = self.points();
        let mut c = vec![0.0; self.dofs()];
        for (x, v) in pts.iter().zip(f) {
            c[0] += v;
            for (n, k) in self.ks.iter().enumerate() {
                let th = k[0] * x[0] + k[1] * x[1];
                c[1 + 2 * n] += 2.0 * v * th.cos();
                c[2 + 2 * n] += 2.0 * v * th.sin();
            }
        }
        c.iter().map(|v| v / (M * M) as f64).collect()
    }

    /// Radial multiplier `m(|k|)` on coefficients.
    pub fn radial(&self, c: &[f64], m: impl Fn(f64) -> f64) -> Vec<f64> {
        let mut o = c.to_vec();
        o[0] *= m(0.0);
        for (n, k) in self.ks.iter().enumerate() {
            let r = k[0].hypot(k[1]);
            o[1 + 2 * n] *= m(r);
            o[2 + 2 * n] *= m(r);
        }
        o
    }

    /// Divergence of a projected vector field.
    pub fn div(&self, f1: &[f64], f2: &[f64]) -> Vec<f64> {
        let mut o = vec![0.0; self.dofs()];
        for (n, k) in self.ks.iter().enumerate() {
            // ∂ cos = −k sin, ∂ sin = k cos
            o[1 + 2 * n] = k[0] * f1[2 + 2 * n] + k[1] * f2[2 + 2 * n];
            o[2 + 2 * n] = -(k[0] * f1[1 + 2 * n] + k[1] * f2[1 + 2 * n]);
        }
        o
    }

    pub fn phi(&self, n: &[f64]) -> Vec<f64> {
        let d = self.dofs();
        let pts = self.points();
        let g = |p: &[f64]| -> Vec<f64> {
            let e: Vec<f64> = pts.iter().map(|&x| self.eval(p, x).exp()).collect();
            let pe = self.project(&e);
            let lap = self.radial(p, |r| -r * r);
            (0..d).map(|i| lap[i] - pe[i] + if i == 0 { 1.0 } else { 0.0 } + n[i]).collect()
        };
        let mut p = vec![0.0; d];
        for _ in 0..40 {
            let r = g(&p);
            if r.iter().map(|v| v.abs()).fold(0.0, f64::max) < 1e-15 {
                break;
            }
            let h = 1e-7;
            let mut jac = vec![vec![0.0; d + 1]; d];
            for j in 0..d {
                let (mut a, mut b) = (p.clone(), p.clone());
                a[j] += h;
                b[j] -= h;
                let (ga, gb) = (g(&a), g(&b));
                for i in 0..d {
                    jac[i][j] = (ga[i] - gb[i]) / (2.0 * h);
                }
            }
            for i in 0..d {
                jac[i][d] = -r[i];
            }
            let dx = solve_dense(jac);
            for i in 0..d {
                p[i] += dx[i];
            }
        }
        p
    }

    pub fn density(&self, rho: &[f64]) -> Vec<f64> {
        self.radial(rho, |r| r)
    }

    /// `(ρ_t, ψ_t)` in coefficients.
    pub fn flow(&self, rho: &[f64], psi: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let pts = self.points();
        let n = self.density(rho);
        let phi = self.phi(&n);
        let (mut f1, mut f2, mut pot) = (vec![], vec![], vec![]);
        for &x in &pts {
            let nn = self.eval(&n, x);
            let g = self.grad(psi, x);
            f1.push((1.0 + nn) * g[0]);
            f2.push((1.0 + nn) * g[1]);
            pot.push((g[0] * g[0] + g[1] * g[1]) / 2.0 + nn.ln_1p());
        }
        let dv = self.div(&self.project(&f1), &self.project(&f2));
        let rho_t = self.radial(&dv, |r| if r == 0.0 { 0.0 } else { -1.0 / r });
        let pp = self.project(&pot);
        let psi_t = (0..self.dofs()).map(|i| -pp[i] - phi[i]).collect();
        (rho_t, psi_t)
    }

    pub fn hamiltonian(&self, rho: &[f64], psi: &[f64]) -> f64 {
        let pts = self.points();
        let n = self.density(rho);
        let phi = self.phi(&n);
        let area = self.l * self.l / (M * M) as f64;
        let mut h = 0.0;
        for &x in &pts {
            let nn = self.eval(&n, x);
            let g = self.grad(psi, x);
            let p = self.eval(&phi, x);
            let gp = self.grad(&phi, x);
            h += (1.0 + nn) * (g[0] * g[0] + g[1] * g[1]) / 2.0 + (1.0 + nn) * nn.ln_1p() - nn
                + (gp[0] * gp[0] + gp[1] * gp[1]) / 2.0
                + p * p.exp() - p.exp() + 1.0;
        }
        h * area
    }
}

pub fn solve_dense(mut a: Vec<Vec<f64>>) -> Vec<f64> {
    let d = a.len();
    for c in 0..d {
        let piv = (c..d).max_by(|&p, &q| a[p][c].abs().total_cmp(&a[q][c].abs())).unwrap();
        a.swap(c, piv);
        for r in c + 1..d {
            let f = a[r][c] / a[c][c];
            for k in c..=d {
                a[r][k] -= f * a[c][k];
            }
        }
    }
    let mut x = vec![0.0; d];
    for r in (0..d).rev() {
        let s: f64 = (r + 1..d).map(|k| a[r][k] * x[k]).sum();
        x[r] = (a[r][d] - s) / a[r][r];
    }
    x
}

pub fn galerkin_data() -> (Galerkin, Vec<f64>, Vec<f64>) {
    let gk = Galerkin::new(7.0);
    let rho = vec![0.3, 0.05, -0.04, 0.03, 0.06, -0.02, 0.05, 0.04, -0.03];
    let psi = vec![0.1, -0.06, 0.03, 0.05, -0.04, 0.07, 0.02, -0.05, 0.03];
    (gk, rho, psi)
}

/// `(dH/dt, Σ|∂H/∂y_i ẏ_i|)` along the model flow, gradient by central differences.
pub fn hamiltonian_rate(gk: &Galerkin, rho: &[f64], psi: &[f64]) -> (f64, f64) {
    let (rt, pt) = gk.flow(rho, psi);
    let d = gk.dofs();
    let h = 1e-5;
    let mut dhdt = 0.0;
    let mut scale = 0.0;
    for i in 0..2 * d {
        let (mut ra, mut pa, mut rb, mut pb) = (rho.to_vec(), psi.to_vec(), rho.to_vec(), psi.to_vec());
        let rate = if i < d {
            ra[i] += h;
            rb[i] -= h;
            rt[i]
        } else {
            pa[i - d] += h;
            pb[i - d] -= h;
            pt[i - d]
        };
        let dh = (gk.hamiltonian(&ra, &pa) - gk.hamiltonian(&rb, &pb)) / (2.0 * h);
        dhdt += dh * rate;
        scale += (dh * rate).abs();
    }
    (dhdt, scale)
}
