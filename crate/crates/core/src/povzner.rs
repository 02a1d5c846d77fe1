//! Binary collision geometry, the energy/null-form split of the post-collisional
//! energy, and the Povzner weight G_rq with its upper bound.

use crate::error::{Error, Result};
use crate::kernels::{sphere_area, CollisionKernel, EpsilonSequence};
use crate::quad::{integrate, QuadOptions};
use crate::rng;
use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub(crate) fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// ⟨v⟩² = 1 + |v|².
pub fn bracket_sq(v: &[f64]) -> f64 {
    1.0 + dot(v, v)
}

/// |v × w| in any dimension (area of the spanned parallelogram).
pub fn cross_norm(v: &[f64], w: &[f64]) -> f64 {
    let vv = dot(v, v);
    let ww = dot(w, w);
    let vw = dot(v, w);
    (vv * ww - vw * vw).max(0.0).sqrt()
}

/// Some unit vector orthogonal to `n` (|n| = 1).
pub fn any_orthogonal(n: &[f64]) -> Vec<f64> {
    let d = n.len();
    let i = (0..d).min_by(|&a, &b| n[a].abs().total_cmp(&n[b].abs())).unwrap_or(0);
    let mut e = vec![0.0; d];
    e[i] = 1.0;
    let c = n[i];
    for (x, y) in e.iter_mut().zip(n) {
        *x -= c * y;
    }
    let l = norm(&e);
    e.iter_mut().for_each(|x| *x /= l);
    e
}

/// Uniform unit vector on the sphere of directions orthogonal to `n`.
pub fn random_orthogonal_unit<R: Rng + ?Sized>(n: &[f64], rng: &mut R) -> Vec<f64> {
    loop {
        let mut w: Vec<f64> = (0..n.len()).map(|_| rng.sample(StandardNormal)).collect();
        let c = dot(&w, n);
        for (x, y) in w.iter_mut().zip(n) {
            *x -= c * y;
        }
        let l = norm(&w);
        if l > 1e-12 {
            w.iter_mut().for_each(|x| *x /= l);
            return w;
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CollisionGeometry {
    pub v: Vec<f64>,
    pub v_star: Vec<f64>,
    pub theta: f64,
    pub omega: Vec<f64>,
}

impl CollisionGeometry {
    pub fn new(v: Vec<f64>, v_star: Vec<f64>, theta: f64, omega: Vec<f64>) -> Result<Self> {
        let d = v.len();
        if d < 2 || v_star.len() != d || omega.len() != d {
            return Err(Error::domain("velocity and omega dimensions must agree and be >= 2"));
        }
        if !(0.0..=PI).contains(&theta) {
            return Err(Error::domain(format!("theta must lie in [0, pi], got {theta}")));
        }
        if (norm(&omega) - 1.0).abs() > 1e-9 {
            return Err(Error::domain("omega must be a unit vector"));
        }
        let g = CollisionGeometry {
            v,
            v_star,
            theta,
            omega,
        };
        if let Some(uh) = g.unit_relative() {
            if dot(&uh, &g.omega).abs() > 1e-9 {
                return Err(Error::domain("omega must be orthogonal to the relative velocity"));
            }
        }
        Ok(g)
    }

    pub fn dim(&self) -> usize {
        self.v.len()
    }

    pub fn relative(&self) -> Vec<f64> {
        self.v.iter().zip(&self.v_star).map(|(a, b)| a - b).collect()
    }

    pub fn unit_relative(&self) -> Option<Vec<f64>> {
        let u = self.relative();
        let l = norm(&u);
        (l > 0.0).then(|| u.iter().map(|x| x / l).collect())
    }

    pub fn center(&self) -> Vec<f64> {
        self.v.iter().zip(&self.v_star).map(|(a, b)| 0.5 * (a + b)).collect()
    }

    /// h = |v × v_*|.
    pub fn h(&self) -> f64 {
        cross_norm(&self.v, &self.v_star)
    }

    /// σ = cos θ û + sin θ ω.
    pub fn sigma(&self) -> Option<Vec<f64>> {
        let uh = self.unit_relative()?;
        let (s, c) = self.theta.sin_cos();
        Some(uh.iter().zip(&self.omega).map(|(u, w)| c * u + s * w).collect())
    }

    /// Unit vector along the part of V orthogonal to û; fixed orthogonal unit when that part vanishes.
    pub fn azimuth_axis(&self) -> Vec<f64> {
        let uh = match self.unit_relative() {
            Some(u) => u,
            None => {
                let mut e = vec![0.0; self.dim()];
                e[0] = 1.0;
                return e;
            }
        };
        let vc = self.center();
        let c = dot(&vc, &uh);
        let perp: Vec<f64> = vc.iter().zip(&uh).map(|(x, u)| x - c * u).collect();
        let l = norm(&perp);
        if l > 1e-14 * norm(&vc).max(1e-300) {
            perp.iter().map(|x| x / l).collect()
        } else {
            any_orthogonal(&uh)
        }
    }
}

/// Post-collisional velocities v' = V + |u|σ/2, v'_* = V − |u|σ/2.
pub fn post_collision(g: &CollisionGeometry) -> (Vec<f64>, Vec<f64>) {
    let sigma = match g.sigma() {
        Some(s) => s,
        None => return (g.v.clone(), g.v_star.clone()),
    };
    let half = 0.5 * norm(&g.relative());
    let vc = g.center();
    let vp = vc.iter().zip(&sigma).map(|(c, s)| c + half * s).collect();
    let vsp = vc.iter().zip(&sigma).map(|(c, s)| c - half * s).collect();
    (vp, vsp)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EnergySplit {
    /// Convex combination cos²(θ/2)⟨v⟩² + sin²(θ/2)⟨v_*⟩².
    pub e: f64,
    /// The same combination at π − θ, carried by v'_*.
    pub e_star: f64,
    /// Null form h sin θ (j·ω).
    pub p: f64,
}

pub fn energy_split(g: &CollisionGeometry) -> EnergySplit {
    let a = bracket_sq(&g.v);
    let b = bracket_sq(&g.v_star);
    let s = (0.5 * g.theta).sin().powi(2);
    let c = 1.0 - s;
    let j = g.azimuth_axis();
    let p = g.h() * g.theta.sin() * dot(&j, &g.omega);
    EnergySplit {
        e: c * a + s * b,
        e_star: s * a + c * b,
        p,
    }
}

/// (1 + z)^p − 1 − p z.
fn taylor_remainder(p: f64, z: f64) -> f64 {
    if z.abs() < 0.1 {
        let mut term = p;
        let mut sum = 0.0;
        for k in 1..200 {
            let kf = k as f64;
            term *= (p - kf) * z / (kf + 1.0);
            sum += term;
            if term.abs() <= 1e-18 * sum.abs() || term == 0.0 {
                break;
            }
        }
        // term carried z^k / ... without the leading z factor
        return sum * z;
    }
    (p * z.ln_1p()).exp_m1() - p * z
}

/// (y + dy)^p − y^p without cancellation.
fn pow_diff(y: f64, dy: f64, p: f64) -> f64 {
    y.powf(p) * (p * (dy / y).ln_1p()).exp_m1()
}

/// Average of g(j·ω) over ω uniform on S^{d−2}.
fn azimuthal_average<G: Fn(f64) -> f64>(dim: usize, g: G) -> f64 {
    match dim {
        2 => 0.5 * (g(1.0) + g(-1.0)),
        3 => {
            let mut n = 8usize;
            let mut prev = trapezoid_cos(&g, n);
            loop {
                n *= 2;
                let cur = trapezoid_cos(&g, n);
                if (cur - prev).abs() <= 1e-15 * cur.abs().max(1e-300) || n >= 4096 {
                    return cur;
                }
                prev = cur;
            }
        }
        _ => {
            let k = dim as i32 - 3;
            let opts = QuadOptions::new(1e-300, 1e-14);
            let num = integrate(|phi: f64| g(phi.cos()) * phi.sin().powi(k), 0.0, PI, &opts)
                .map(|r| r.value)
                .unwrap_or(f64::NAN);
            let den = integrate(|phi: f64| phi.sin().powi(k), 0.0, PI, &opts)
                .map(|r| r.value)
                .unwrap_or(f64::NAN);
            num / den
        }
    }
}

fn trapezoid_cos<G: Fn(f64) -> f64>(g: &G, n: usize) -> f64 {
    let h = 2.0 * PI / n as f64;
    (0..n).map(|k| g((h * (k as f64 + 0.5)).cos())).sum::<f64>() / n as f64
}

/// G_rq(v, v_*) = |u|^γ ∫_{S^{d−1}} b(cos θ)(⟨v'⟩^{rq} + ⟨v'_*⟩^{rq} − ⟨v⟩^{rq} − ⟨v_*⟩^{rq}) dσ.
///
/// The ω-average is taken before the θ integral: the term linear in the null
/// form averages to zero exactly and is dropped, leaving an integrand of
/// order sin²θ at grazing angles.
pub fn g_weight_direct(k: &CollisionKernel, v: &[f64], v_star: &[f64], rq: f64, tol: f64) -> Result<f64> {
    if !(rq > 0.0) {
        return Err(Error::domain(format!("rq must be positive, got {rq}")));
    }
    if v.len() != k.dim() || v_star.len() != k.dim() {
        return Err(Error::domain("velocity dimension does not match the kernel"));
    }
    let u: Vec<f64> = v.iter().zip(v_star).map(|(a, b)| a - b).collect();
    let un = norm(&u);
    if un == 0.0 || rq == 2.0 {
        return Ok(0.0);
    }
    let a = bracket_sq(v);
    let b = bracket_sq(v_star);
    let p = 0.5 * rq;
    let h = cross_norm(v, v_star);
    let dim = k.dim();
    let integrand = |theta: f64| {
        let s = (0.5 * theta).sin().powi(2);
        let e1 = a + (b - a) * s;
        let e2 = b + (a - b) * s;
        let i1 = pow_diff(a, (b - a) * s, p) + pow_diff(b, (a - b) * s, p);
        let p0 = h * theta.sin();
        let avg = if p0 == 0.0 {
            0.0
        } else {
            let e1p = e1.powf(p);
            let e2p = e2.powf(p);
            azimuthal_average(dim, |x| {
                e1p * taylor_remainder(p, p0 * x / e1) + e2p * taylor_remainder(p, -p0 * x / e2)
            })
        };
        i1 + avg
    };
    let scale = sphere_area(dim - 2) * un.powf(k.gamma);
    let opts = QuadOptions::new(tol / scale, 0.0).with_max_intervals(4000);
    let r = k
        .angular
        .integrate_weighted(integrand, 2.0, &opts)
        .map_err(|e| match e {
            Error::ToleranceNotMet { achieved, .. } => Error::ToleranceNotMet {
                achieved: achieved * scale,
                requested: tol,
            },
            other => other,
        })?;
    Ok(scale * r.value)
}

/// Right side of the Povzner estimate with A₂ and the ε sequence resolved once.
#[derive(Debug, Clone)]
pub struct PovznerBound {
    pub kernel: CollisionKernel,
    pub a2: f64,
    eps: EpsilonSequence,
}

impl PovznerBound {
    pub fn new(kernel: CollisionKernel, eps: EpsilonSequence) -> Result<Self> {
        let a2 = kernel.angular.a_beta(2.0)?;
        Ok(PovznerBound { kernel, a2, eps })
    }

    pub fn evaluate(&self, v: &[f64], v_star: &[f64], rq: f64) -> Result<f64> {
        if !(rq >= 2.0) {
            return Err(Error::domain(format!("bound requires rq >= 2, got {rq}")));
        }
        let u: Vec<f64> = v.iter().zip(v_star).map(|(a, b)| a - b).collect();
        let ug = norm(&u).powf(self.kernel.gamma);
        let a = bracket_sq(v);
        let b = bracket_sq(v_star);
        let p = 0.5 * rq;
        let a2 = self.a2;
        let mut val = -a2 * (a.powf(p) + b.powf(p)) + a2 * (a.powf(p - 1.0) * b + a * b.powf(p - 1.0));
        if p != 1.0 {
            let e = self.eps.get(p)?;
            val += e * a2 * p * (p - 1.0) * a * b * (a + b).powf(p - 2.0);
        }
        Ok(ug * val)
    }
}

pub fn g_weight_bound(k: &CollisionKernel, eps: &EpsilonSequence, v: &[f64], v_star: &[f64], rq: f64) -> Result<f64> {
    PovznerBound::new(*k, eps.clone())?.evaluate(v, v_star, rq)
}

/// Both sides of the symmetrized convex binomial estimate; lhs ≤ rhs is the claim.
pub fn convex_binomial_gap(a: f64, b: f64, t: f64, p: f64) -> Result<(f64, f64)> {
    if !(a >= 0.0 && b >= 0.0) {
        return Err(Error::domain("a and b must be nonnegative"));
    }
    if !(0.0..=1.0).contains(&t) {
        return Err(Error::domain(format!("t must lie in [0, 1], got {t}")));
    }
    if !(p > 0.0) || (p > 1.0 && p < 2.0) {
        return Err(Error::domain(format!("p must lie in (0, 1] or [2, inf), got {p}")));
    }
    let pw = |x: f64| x.powf(p);
    // y·x^{p−1} with the 0·∞ = 0 convention
    let mixed = |x: f64, y: f64| if y == 0.0 { 0.0 } else { y * x.powf(p - 1.0) };
    let lhs = pw(t * a + (1.0 - t) * b) + pw((1.0 - t) * a + t * b) - pw(a) - pw(b);
    let w = 2.0 * t * (1.0 - t);
    let rhs = -w * (pw(a) + pw(b)) + w * (mixed(b, a) + mixed(a, b));
    Ok((lhs, rhs))
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PovznerSample {
    pub v: Vec<f64>,
    pub v_star: Vec<f64>,
    pub rq: f64,
    pub direct: f64,
    pub bound: f64,
    pub margin: f64,
}

/// Random velocity pair: Gaussian direction scaled by a uniform speed factor in [0, spread).
pub fn random_pair<R: Rng + ?Sized>(dim: usize, spread: f64, rng: &mut R) -> (Vec<f64>, Vec<f64>) {
    let mut draw = || {
        let s: f64 = rng.random::<f64>() * spread;
        (0..dim)
            .map(|_| s * rng.sample::<f64, _>(StandardNormal))
            .collect::<Vec<f64>>()
    };
    let v = draw();
    let w = draw();
    (v, w)
}

/// Direct weight vs bound on `n` random configurations per rq; the tolerance
/// handed to the quadrature is `rel_tol` times the size of the bound's terms.
pub fn povzner_sweep(
    bound: &PovznerBound,
    rq_values: &[f64],
    n: usize,
    spread: f64,
    seed: u64,
    rel_tol: f64,
) -> Result<Vec<PovznerSample>> {
    let dim = bound.kernel.dim();
    let jobs: Vec<(usize, f64)> = rq_values
        .iter()
        .enumerate()
        .flat_map(|(i, &rq)| (0..n).map(move |c| (i * n + c, rq)))
        .collect();
    jobs.par_iter()
        .map(|&(idx, rq)| {
            let mut r = rng::stream(seed, rng::streams::SWEEP ^ idx as u64);
            let (v, w) = random_pair(dim, spread, &mut r);
            let b = bound.evaluate(&v, &w, rq)?;
            let p = 0.5 * rq;
            let scale = norm(&v.iter().zip(&w).map(|(x, y)| x - y).collect::<Vec<_>>()).powf(bound.kernel.gamma)
                * bound.a2
                * (bracket_sq(&v).powf(p) + bracket_sq(&w).powf(p));
            let tol = (rel_tol * scale).max(1e-300);
            let d = g_weight_direct(&bound.kernel, &v, &w, rq, tol)?;
            Ok(PovznerSample {
                v,
                v_star: w,
                rq,
                direct: d,
                bound: b,
                margin: b - d,
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernels::AngularKernel;
    use proptest::prelude::*;
    use rand::Rng;

    fn hs3() -> CollisionKernel {
        CollisionKernel::new(1.0, AngularKernel::bounded(1.0, 3).unwrap()).unwrap()
    }

    fn close(a: &[f64], b: &[f64], tol: f64) -> bool {
        a.iter().zip(b).all(|(x, y)| (x - y).abs() <= tol)
    }

    #[test]
    fn head_on_reversal() {
        let g = CollisionGeometry::new(vec![1.0, 0.0, 0.0], vec![-1.0, 0.0, 0.0], PI, vec![0.0, 1.0, 0.0]).unwrap();
        let (vp, vsp) = post_collision(&g);
        assert!(close(&vp, &[-1.0, 0.0, 0.0], 1e-15));
        assert!(close(&vsp, &[1.0, 0.0, 0.0], 1e-15));
    }

    #[test]
    fn identity_scattering() {
        let g = CollisionGeometry::new(vec![0.3, -1.0, 2.0], vec![1.0, 0.5, 0.0], 0.0, {
            let u = [-0.7, -1.5, 2.0];
            any_orthogonal(&u.iter().map(|x| x / norm(&u)).collect::<Vec<_>>())
        })
        .unwrap();
        let (vp, vsp) = post_collision(&g);
        assert!(close(&vp, &g.v, 1e-15));
        assert!(close(&vsp, &g.v_star, 1e-15));
    }

    #[test]
    fn equal_velocities_are_unchanged() {
        let g = CollisionGeometry::new(vec![1.0, 2.0], vec![1.0, 2.0], 1.0, vec![0.0, 1.0]).unwrap();
        assert_eq!(post_collision(&g), (g.v.clone(), g.v_star.clone()));
    }

    #[test]
    fn conservation_on_named_geometry() {
        let v = vec![1.0, 1.0, 0.0];
        let vs = vec![0.0, 0.0, 1.0];
        let u: Vec<f64> = v.iter().zip(&vs).map(|(a, b)| a - b).collect();
        let un = norm(&u);
        let uh: Vec<f64> = u.iter().map(|x| x / un).collect();
        // ω = û × (v × v_*) normalized
        let cx = [
            v[1] * vs[2] - v[2] * vs[1],
            v[2] * vs[0] - v[0] * vs[2],
            v[0] * vs[1] - v[1] * vs[0],
        ];
        let w = [
            uh[1] * cx[2] - uh[2] * cx[1],
            uh[2] * cx[0] - uh[0] * cx[2],
            uh[0] * cx[1] - uh[1] * cx[0],
        ];
        let wn = norm(&w);
        let omega: Vec<f64> = w.iter().map(|x| x / wn).collect();
        let g = CollisionGeometry::new(v.clone(), vs.clone(), PI / 3.0, omega).unwrap();
        let (vp, vsp) = post_collision(&g);
        for i in 0..3 {
            assert!((vp[i] + vsp[i] - v[i] - vs[i]).abs() < 1e-15);
        }
        let e0 = dot(&v, &v) + dot(&vs, &vs);
        let e1 = dot(&vp, &vp) + dot(&vsp, &vsp);
        assert!(((e1 - e0) / e0).abs() < 1e-15);
        let moved: Vec<f64> = vp.iter().zip(&v).map(|(a, b)| a - b).collect();
        assert!((norm(&moved) - un * (PI / 6.0).sin()).abs() < 1e-14);
    }

    #[test]
    fn geometry_validation() {
        assert!(CollisionGeometry::new(vec![1.0, 0.0], vec![0.0, 0.0], 0.5, vec![1.0, 0.0]).is_err());
        assert!(CollisionGeometry::new(vec![1.0, 0.0], vec![0.0, 0.0], 4.0, vec![0.0, 1.0]).is_err());
        assert!(CollisionGeometry::new(vec![1.0, 0.0], vec![0.0], 1.0, vec![0.0, 1.0]).is_err());
    }

    #[test]
    fn energy_split_identity_at_zero_angle() {
        let u = [1.0, -2.0, 0.5];
        let un = norm(&u);
        let uh: Vec<f64> = u.iter().map(|x| x / un).collect();
        let g = CollisionGeometry::new(vec![1.0, -1.0, 1.0], vec![0.0, 1.0, 0.5], 0.0, any_orthogonal(&uh)).unwrap();
        let s = energy_split(&g);
        assert_eq!(s.p, 0.0);
        assert!((s.e - bracket_sq(&g.v)).abs() < 1e-15);
    }

    #[test]
    fn collinear_null_form_vanishes() {
        let v = vec![1.0, 2.0, 3.0];
        let vs = vec![-0.5, -1.0, -1.5];
        let u: Vec<f64> = v.iter().zip(&vs).map(|(a, b)| a - b).collect();
        let uh: Vec<f64> = u.iter().map(|x| x / norm(&u)).collect();
        let mut r = rng::stream(1, 0);
        for _ in 0..20 {
            let omega = random_orthogonal_unit(&uh, &mut r);
            let g = CollisionGeometry::new(v.clone(), vs.clone(), r.random::<f64>() * PI, omega).unwrap();
            assert_eq!(energy_split(&g).p.abs(), 0.0);
        }
    }

    #[test]
    fn null_form_averages_to_zero() {
        let mut r = rng::stream(11, 0);
        let v = vec![0.4, -1.3, 2.2];
        let vs = vec![1.1, 0.7, -0.3];
        let u: Vec<f64> = v.iter().zip(&vs).map(|(a, b)| a - b).collect();
        let uh: Vec<f64> = u.iter().map(|x| x / norm(&u)).collect();
        let theta = 1.1;
        let m = 10_000;
        let ps: Vec<f64> = (0..m)
            .map(|_| {
                let omega = random_orthogonal_unit(&uh, &mut r);
                energy_split(&CollisionGeometry::new(v.clone(), vs.clone(), theta, omega).unwrap()).p
            })
            .collect();
        let mean = ps.iter().sum::<f64>() / m as f64;
        let sd = (ps.iter().map(|p| (p - mean).powi(2)).sum::<f64>() / (m - 1) as f64).sqrt();
        assert!(mean.abs() <= 3.0 * sd / (m as f64).sqrt());
    }

    #[test]
    fn direct_weight_trivial_cases() {
        let k = hs3();
        assert_eq!(
            g_weight_direct(&k, &[1.0, 2.0, 0.0], &[0.0, -1.0, 3.0], 2.0, 1e-12).unwrap(),
            0.0
        );
        assert_eq!(
            g_weight_direct(&k, &[1.0, 2.0, 0.0], &[1.0, 2.0, 0.0], 6.0, 1e-12).unwrap(),
            0.0
        );
        assert!(g_weight_direct(&k, &[1.0, 2.0, 0.0], &[0.0, 0.0, 0.0], 0.0, 1e-12).is_err());
    }

    // Raw post-collisional difference on a dense midpoint grid in (θ, φ).
    fn brute_force_weight(v: &[f64; 3], vs: &[f64; 3], rq: f64, n: usize) -> f64 {
        let u: Vec<f64> = (0..3).map(|i| v[i] - vs[i]).collect();
        let un = norm(&u);
        let uh: Vec<f64> = u.iter().map(|x| x / un).collect();
        let e1 = any_orthogonal(&uh);
        let e2 = [
            uh[1] * e1[2] - uh[2] * e1[1],
            uh[2] * e1[0] - uh[0] * e1[2],
            uh[0] * e1[1] - uh[1] * e1[0],
        ];
        let vc: Vec<f64> = (0..3).map(|i| 0.5 * (v[i] + vs[i])).collect();
        let p = rq / 2.0;
        let a = bracket_sq(v).powf(p);
        let b = bracket_sq(vs).powf(p);
        let (dt, dp) = (PI / n as f64, 2.0 * PI / n as f64);
        let mut total = 0.0;
        for i in 0..n {
            let th = (i as f64 + 0.5) * dt;
            let (st, ct) = th.sin_cos();
            let mut row = 0.0;
            for j in 0..n {
                let ph = (j as f64 + 0.5) * dp;
                let (sp, cp) = ph.sin_cos();
                let mut vp = [0.0; 3];
                let mut vsp = [0.0; 3];
                for k in 0..3 {
                    let sig = ct * uh[k] + st * (cp * e1[k] + sp * e2[k]);
                    vp[k] = vc[k] + 0.5 * un * sig;
                    vsp[k] = vc[k] - 0.5 * un * sig;
                }
                row += bracket_sq(&vp).powf(p) + bracket_sq(&vsp).powf(p) - a - b;
            }
            total += row * dp * st * dt;
        }
        un * total
    }

    #[test]
    fn direct_weight_matches_dense_sphere_quadrature() {
        let v = [1.0, 0.0, 0.0];
        let vs = [0.0, 1.0, 0.0];
        let oracle = brute_force_weight(&v, &vs, 4.0, 1000);
        let d = g_weight_direct(&hs3(), &v, &vs, 4.0, 1e-12).unwrap();
        assert!((d - oracle).abs() < 1e-6 * oracle.abs(), "{d} vs {oracle}");
        let v = [0.5, -1.0, 2.0];
        let vs = [-1.5, 0.3, 0.1];
        let oracle = brute_force_weight(&v, &vs, 9.4, 1000);
        let d = g_weight_direct(&hs3(), &v, &vs, 9.4, 1e-9).unwrap();
        assert!((d - oracle).abs() < 1e-6 * oracle.abs(), "{d} vs {oracle}");
    }

    #[test]
    fn two_dimensional_weight_matches_brute_force() {
        let k = CollisionKernel::new(0.7, AngularKernel::bounded(1.0, 2).unwrap()).unwrap();
        let v = [1.0, 0.5];
        let vs = [-0.5, 0.2];
        let u = [1.5, 0.3];
        let un = norm(&u);
        let uh = [u[0] / un, u[1] / un];
        let e = [-uh[1], uh[0]];
        let vc = [0.25, 0.35];
        let p = 3.0;
        let n = 20_000;
        let mut tot = 0.0;
        for i in 0..n {
            let th = (i as f64 + 0.5) * PI / n as f64;
            for sgn in [-1.0, 1.0] {
                let sig = [
                    th.cos() * uh[0] + sgn * th.sin() * e[0],
                    th.cos() * uh[1] + sgn * th.sin() * e[1],
                ];
                let vp = [vc[0] + 0.5 * un * sig[0], vc[1] + 0.5 * un * sig[1]];
                let vsp = [vc[0] - 0.5 * un * sig[0], vc[1] - 0.5 * un * sig[1]];
                tot += bracket_sq(&vp).powf(p) + bracket_sq(&vsp).powf(p)
                    - bracket_sq(&v).powf(p)
                    - bracket_sq(&vs).powf(p);
            }
        }
        let oracle = un.powf(0.7) * tot * PI / n as f64;
        let d = g_weight_direct(&k, &v, &vs, 6.0, 1e-11).unwrap();
        assert!((d - oracle).abs() < 1e-7 * oracle.abs(), "{d} vs {oracle}");
    }

    #[test]
    fn four_dimensional_average_is_consistent() {
        // a polynomial weight in j·ω: E[x²] = 1/(d−1) on S^{d−2}
        let m = azimuthal_average(4, |x| x * x);
        assert!((m - 1.0 / 3.0).abs() < 1e-13);
        let m = azimuthal_average(3, |x| x * x);
        assert!((m - 0.5).abs() < 1e-15);
    }

    #[test]
    fn bound_at_conserved_weight_is_zero() {
        let k = hs3();
        let b = PovznerBound::new(k, EpsilonSequence::new(2.0)).unwrap();
        assert_eq!(b.evaluate(&[1.0, 2.0, -1.0], &[0.3, 0.0, 0.2], 2.0).unwrap(), 0.0);
        assert!(b.evaluate(&[1.0, 2.0, -1.0], &[0.3, 0.0, 0.2], 1.5).is_err());
        assert!(matches!(
            b.evaluate(&[1.0, 2.0, -1.0], &[0.3, 0.0, 0.2], 4.0),
            Err(Error::MissingEpsilon(_))
        ));
    }

    #[test]
    fn bound_vanishes_at_rest() {
        let k = hs3();
        let mut eps = EpsilonSequence::new(2.0);
        eps.insert(3.0, k.angular.epsilon_q(3.0).unwrap());
        let v = g_weight_bound(&k, &eps, &[0.0; 3], &[0.0; 3], 6.0).unwrap();
        assert_eq!(v, 0.0);
    }

    #[test]
    fn bound_dominates_direct_on_a_few_configurations() {
        for ang in [
            AngularKernel::bounded(1.0, 3).unwrap(),
            AngularKernel::power_law(1.0, 3).unwrap(),
        ] {
            let k = CollisionKernel::new(1.0, ang).unwrap();
            let eps = EpsilonSequence::compute(&ang, 2.0, &[2.0, 3.0, 4.7]).unwrap();
            let b = PovznerBound::new(k, eps).unwrap();
            let s = povzner_sweep(&b, &[4.0, 6.0, 9.4], 40, 4.0, 5, 1e-10).unwrap();
            assert_eq!(s.len(), 120);
            for x in &s {
                assert!(x.direct <= x.bound + 1e-9 * x.bound.abs().max(1.0), "{x:?}");
            }
        }
    }

    #[test]
    fn convex_gap_trivial_cases() {
        assert_eq!(convex_binomial_gap(3.0, 5.0, 0.0, 3.7).unwrap(), (0.0, 0.0));
        let (l, r) = convex_binomial_gap(2.0, 2.0, 0.3, 8.0).unwrap();
        assert!(l.abs() < 1e-12 && r.abs() < 1e-12);
        assert!(convex_binomial_gap(1.0, 2.0, 0.5, 1.5).is_err());
        assert!(convex_binomial_gap(1.0, 2.0, 1.5, 2.0).is_err());
        assert!(convex_binomial_gap(-1.0, 2.0, 0.5, 2.0).is_err());
        let (l, r) = convex_binomial_gap(0.0, 2.0, 0.5, 0.3).unwrap();
        assert!(l <= r);
    }

    #[test]
    fn mixed_term_needs_the_complementary_weight() {
        // with weight t instead of 1 − t the bound breaks at t = 1, θ = π/2
        let r = 3.0;
        let v = vec![r, 0.0, 0.0];
        let w = vec![0.0, r, 0.0];
        let omega = vec![0.5f64.sqrt(), 0.5f64.sqrt(), 0.0];
        let g = CollisionGeometry::new(v.clone(), w.clone(), PI / 2.0, omega).unwrap();
        let s = energy_split(&g);
        let total = bracket_sq(&v) + bracket_sq(&w);
        assert!(s.e + s.p > total * 0.75);
        assert!(s.e + s.p <= total);
    }

    #[test]
    fn taylor_remainder_branches_agree() {
        for &p in &[0.5, 2.0, 4.7] {
            for &z in &[0.0999f64, 0.1001, -0.0999, -0.1001] {
                let exact = (1.0 + z).powf(p) - 1.0 - p * z;
                assert!((taylor_remainder(p, z) - exact).abs() < 1e-14);
            }
        }
        assert_eq!(taylor_remainder(2.0, 0.01), 0.01 * 0.01);
    }

    proptest! {
        #[test]
        fn post_collision_conserves(
            v in prop::array::uniform3(-10.0f64..10.0),
            w in prop::array::uniform3(-10.0f64..10.0),
            theta in 0.0f64..PI,
            seed in any::<u64>(),
        ) {
            let u: Vec<f64> = (0..3).map(|i| v[i] - w[i]).collect();
            prop_assume!(norm(&u) > 1e-6);
            let uh: Vec<f64> = u.iter().map(|x| x / norm(&u)).collect();
            let omega = random_orthogonal_unit(&uh, &mut rng::stream(seed, 0));
            let g = CollisionGeometry::new(v.to_vec(), w.to_vec(), theta, omega).unwrap();
            let (vp, vsp) = post_collision(&g);
            let e0 = dot(&v, &v) + dot(&w, &w);
            let e1 = dot(&vp, &vp) + dot(&vsp, &vsp);
            prop_assert!((e1 - e0).abs() <= 1e-12 * e0.max(1e-300));
            for i in 0..3 {
                prop_assert!((vp[i] + vsp[i] - v[i] - w[i]).abs() <= 1e-12 * (1.0 + v[i].abs() + w[i].abs()));
            }
            let s = energy_split(&g);
            let a = bracket_sq(&vp);
            let b = bracket_sq(&vsp);
            prop_assert!((s.e + s.p - a).abs() <= 1e-12 * a);
            prop_assert!((s.e_star - s.p - b).abs() <= 1e-12 * b);
            prop_assert!((a + b - bracket_sq(&v) - bracket_sq(&w)).abs() <= 1e-12 * (a + b));
        }

        #[test]
        fn mixed_term_bound(
            v in prop::array::uniform3(-10.0f64..10.0),
            w in prop::array::uniform3(-10.0f64..10.0),
            theta in 0.0f64..PI,
            t in 0.0f64..1.0,
            seed in any::<u64>(),
        ) {
            let u: Vec<f64> = (0..3).map(|i| v[i] - w[i]).collect();
            prop_assume!(norm(&u) > 1e-6);
            let uh: Vec<f64> = u.iter().map(|x| x / norm(&u)).collect();
            let omega = random_orthogonal_unit(&uh, &mut rng::stream(seed, 1));
            let g = CollisionGeometry::new(v.to_vec(), w.to_vec(), theta, omega).unwrap();
            let s = energy_split(&g);
            let lhs = (s.e + t * s.p).abs();
            let rhs = (bracket_sq(&v) + bracket_sq(&w)) * (1.0 - 0.25 * (1.0 - t) * theta.sin().powi(2));
            prop_assert!(lhs <= rhs * (1.0 + 1e-12));
            prop_assert!(s.e + t * s.p >= -1e-12 * rhs);
        }
    }
}
