//! Angular collision kernels and their weighted angular integrals.

use crate::error::{Error, Result};
use crate::quad::{integrate, integrate_endpoint_power, QuadOptions, QuadResult};
use crate::specfun::gamma_fn;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

/// Surface area of the unit sphere S^n ⊂ R^{n+1}.
pub fn sphere_area(n: usize) -> f64 {
    let h = (n as f64 + 1.0) / 2.0;
    2.0 * PI.powf(h) / gamma_fn(h).expect("positive argument")
}

/// Normalizing constant in front of A_β and ε_q: |S^{d−2}|/2.
pub fn angular_normalization(dim: usize) -> f64 {
    0.5 * sphere_area(dim - 2)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum AngularFamily {
    /// b(cos θ) sin^{d−2}θ = c·θ^{−1−ν} on (0, π].
    PowerLawSingular { nu: f64, c: f64 },
    /// b ≡ b0.
    GradBounded { b0: f64 },
    /// c·θ^{−1−ν} on [θ_min, π], zero below.
    TruncatedSingular { nu: f64, theta_min: f64, c: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AngularKernel {
    pub family: AngularFamily,
    pub dim: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CollisionKernel {
    pub gamma: f64,
    pub angular: AngularKernel,
}

impl CollisionKernel {
    pub fn new(gamma: f64, angular: AngularKernel) -> Result<Self> {
        if !(gamma > 0.0 && gamma <= 1.0) {
            return Err(Error::domain(format!(
                "potential exponent must lie in (0, 1], got {gamma}"
            )));
        }
        Ok(CollisionKernel { gamma, angular })
    }

    pub fn dim(&self) -> usize {
        self.angular.dim
    }
}

fn quad_opts() -> QuadOptions {
    QuadOptions::new(0.0, 1e-12).with_max_intervals(20_000)
}

impl AngularKernel {
    pub fn new(family: AngularFamily, dim: usize) -> Result<Self> {
        if dim < 2 {
            return Err(Error::domain(format!("dimension must be >= 2, got {dim}")));
        }
        let nu_ok = |nu: f64| nu > 0.0 && nu < 2.0;
        match family {
            AngularFamily::PowerLawSingular { nu, c } => {
                if !nu_ok(nu) || !(c > 0.0) {
                    return Err(Error::domain(format!(
                        "power-law kernel needs nu in (0,2), c > 0; got nu={nu}, c={c}"
                    )));
                }
            }
            AngularFamily::GradBounded { b0 } => {
                if !(b0 > 0.0 && b0.is_finite()) {
                    return Err(Error::domain(format!("bounded kernel needs b0 > 0, got {b0}")));
                }
            }
            AngularFamily::TruncatedSingular { nu, theta_min, c } => {
                if !nu_ok(nu) || !(c > 0.0) || !(theta_min > 0.0 && theta_min < PI) {
                    return Err(Error::domain(format!(
                        "truncated kernel needs nu in (0,2), c > 0, theta_min in (0, pi); got nu={nu}, theta_min={theta_min}, c={c}"
                    )));
                }
            }
        }
        Ok(AngularKernel { family, dim })
    }

    pub fn power_law(nu: f64, dim: usize) -> Result<Self> {
        Self::new(AngularFamily::PowerLawSingular { nu, c: 1.0 }, dim)
    }

    pub fn bounded(b0: f64, dim: usize) -> Result<Self> {
        Self::new(AngularFamily::GradBounded { b0 }, dim)
    }

    pub fn truncated(nu: f64, theta_min: f64, dim: usize) -> Result<Self> {
        Self::new(AngularFamily::TruncatedSingular { nu, theta_min, c: 1.0 }, dim)
    }

    /// Same family with a different truncation angle (identity for other families).
    pub fn with_theta_min(&self, theta_min: f64) -> Result<Self> {
        match self.family {
            AngularFamily::TruncatedSingular { nu, c, .. } => {
                Self::new(AngularFamily::TruncatedSingular { nu, theta_min, c }, self.dim)
            }
            _ => Ok(*self),
        }
    }

    /// Singularity exponent ν; zero for the bounded family.
    pub fn nu(&self) -> f64 {
        match self.family {
            AngularFamily::PowerLawSingular { nu, .. } | AngularFamily::TruncatedSingular { nu, .. } => nu,
            AngularFamily::GradBounded { .. } => 0.0,
        }
    }

    pub fn lower_support(&self) -> f64 {
        match self.family {
            AngularFamily::TruncatedSingular { theta_min, .. } => theta_min,
            _ => 0.0,
        }
    }

    /// Angular density b(cos θ) sin^{d−2}θ.
    pub fn density(&self, theta: f64) -> f64 {
        match self.family {
            AngularFamily::PowerLawSingular { nu, c } => {
                if theta <= 0.0 {
                    f64::INFINITY
                } else {
                    c * theta.powf(-1.0 - nu)
                }
            }
            AngularFamily::GradBounded { b0 } => b0 * theta.sin().powi(self.dim as i32 - 2),
            AngularFamily::TruncatedSingular { nu, theta_min, c } => {
                if theta < theta_min {
                    0.0
                } else {
                    c * theta.powf(-1.0 - nu)
                }
            }
        }
    }

    pub fn is_singular(&self) -> bool {
        matches!(self.family, AngularFamily::PowerLawSingular { .. })
    }

    /// ∫ density(θ)·w(θ) dθ over the support, where w(θ) ~ θ^{w_order} at 0.
    pub(crate) fn integrate_weighted<W: Fn(f64) -> f64 + Sync>(
        &self,
        w: W,
        w_order: f64,
        opts: &QuadOptions,
    ) -> Result<QuadResult> {
        match self.family {
            AngularFamily::PowerLawSingular { nu, .. } => {
                let k = w_order - nu;
                if !(k > 0.0) {
                    return Err(Error::Divergence(format!(
                        "weight order {w_order} does not beat singularity nu={nu}"
                    )));
                }
                // θ^{-1-ν}·w = θ^{k-1}·(w/θ^{w_order}); the smooth factor is
                // evaluated off the origin where w/θ^{w_order} has reached its limit
                let c = match self.family {
                    AngularFamily::PowerLawSingular { c, .. } => c,
                    _ => unreachable!(),
                };
                integrate_endpoint_power(
                    |t: f64| {
                        let t = t.max(1e-150);
                        c * w(t) * t.powf(-w_order)
                    },
                    0.0,
                    PI,
                    k - 1.0,
                    opts,
                )
            }
            AngularFamily::GradBounded { .. } => integrate(|t| self.density(t) * w(t), 0.0, PI, opts),
            AngularFamily::TruncatedSingular { theta_min, .. } => {
                // θ = e^u flattens the θ^{-1-ν} growth near θ_min
                let r = integrate(
                    |u: f64| {
                        let t = u.exp();
                        self.density(t) * w(t) * t
                    },
                    theta_min.ln(),
                    PI.ln(),
                    opts,
                )?;
                Ok(r)
            }
        }
    }

    /// ∫_0^π density dθ; finite only for non-singular families.
    pub fn angular_mass(&self) -> Result<f64> {
        if self.is_singular() {
            return Err(Error::Divergence("power-law kernel has infinite angular mass".into()));
        }
        Ok(self.integrate_weighted(|_| 1.0, 0.0, &quad_opts())?.value)
    }

    /// A_β = (|S^{d−2}|/2) ∫_0^π b(cos θ) sin^β θ sin^{d−2}θ dθ, with its error estimate.
    pub fn a_beta_detailed(&self, beta: f64) -> Result<QuadResult> {
        if !(beta > 0.0 && beta <= 2.0) {
            return Err(Error::domain(format!("beta must lie in (0, 2], got {beta}")));
        }
        if self.is_singular() && beta <= self.nu() {
            return Err(Error::Divergence(format!(
                "A_beta diverges for beta={beta} <= nu={}",
                self.nu()
            )));
        }
        let v = angular_normalization(self.dim);
        let r = self.integrate_weighted(|t| t.sin().powf(beta), beta, &quad_opts())?;
        Ok(QuadResult {
            value: v * r.value,
            error: v * r.error,
            evaluations: r.evaluations,
        })
    }

    pub fn a_beta(&self, beta: f64) -> Result<f64> {
        self.a_beta_detailed(beta).map(|r| r.value)
    }

    /// ε_q for q ≥ 2.
    pub fn epsilon_q(&self, q: f64) -> Result<f64> {
        if !(q >= 2.0) {
            return Err(Error::domain(format!("epsilon_q requires q >= 2, got {q}")));
        }
        self.epsilon_q_extended(q)
    }

    /// ε_q for any q > 1; the defining integral converges there too.
    pub fn epsilon_q_extended(&self, q: f64) -> Result<f64> {
        if !(q > 1.0 && q.is_finite()) {
            return Err(Error::domain(format!("epsilon needs q > 1, got {q}")));
        }
        let opts = quad_opts();
        let w2 = |t: f64| t.sin().powi(2);
        let den = self.integrate_weighted(w2, 2.0, &opts)?.value;
        let num = self
            .integrate_weighted(|t| inner_weight(t, q) * t.sin().powi(2), 2.0, &opts)?
            .value;
        Ok(2.0 * num / den)
    }
}

/// J_q(θ) = ∫_0^1 t (1 − c t)^{q−2} dt with c = sin²θ / 2, for q > 1.
pub fn inner_weight(theta: f64, q: f64) -> f64 {
    let s = theta.sin();
    let c = 0.5 * s * s;
    let p = q - 2.0;
    if c == 0.0 {
        return 0.5;
    }
    if c * (p.abs() + 1.0) <= 0.5 {
        // Σ_j C(p, j)(−c)^j / (j + 2)
        let mut term = 1.0;
        let mut sum = 0.5;
        for j in 0..200 {
            let jf = j as f64;
            term *= -(p - jf) * c / (jf + 1.0);
            let add = term / (jf + 3.0);
            sum += add;
            if add.abs() <= 1e-18 * sum.abs() {
                break;
            }
        }
        return sum;
    }
    // [1 − (1−c)^{p+1}(1 + c(p+1))] / (c²(p+1)(p+2))
    let ln_x = (p + 1.0) * (-c).ln_1p() + (c * (p + 1.0)).ln_1p();
    -ln_x.exp_m1() / (c * c * (p + 1.0) * (p + 2.0))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpsilonSequence {
    values: Vec<(f64, f64)>,
    pub beta: f64,
}

impl EpsilonSequence {
    pub fn new(beta: f64) -> Self {
        EpsilonSequence {
            values: Vec::new(),
            beta,
        }
    }

    /// Evaluates ε on every q of the grid (in parallel, order preserved).
    pub fn compute(kernel: &AngularKernel, beta: f64, q_grid: &[f64]) -> Result<Self> {
        let vals: Result<Vec<(f64, f64)>> = q_grid
            .par_iter()
            .map(|&q| kernel.epsilon_q_extended(q).map(|e| (q, e)))
            .collect();
        let mut s = EpsilonSequence::new(beta);
        for (q, e) in vals? {
            s.insert(q, e);
        }
        Ok(s)
    }

    pub fn insert(&mut self, q: f64, eps: f64) {
        match self.values.binary_search_by(|(x, _)| x.total_cmp(&q)) {
            Ok(i) => self.values[i].1 = eps,
            Err(i) => self.values.insert(i, (q, eps)),
        }
    }

    pub fn get(&self, q: f64) -> Result<f64> {
        let tol = 1e-9 * q.abs().max(1.0);
        self.values
            .iter()
            .find(|(x, _)| (x - q).abs() <= tol)
            .map(|&(_, e)| e)
            .ok_or(Error::MissingEpsilon(q))
    }

    pub fn entries(&self) -> &[(f64, f64)] {
        &self.values
    }

    /// (q, ε_q·q^{1−β/2}) pairs.
    pub fn normalized(&self) -> Vec<(f64, f64)> {
        self.values
            .iter()
            .map(|&(q, e)| (q, e * q.powf(1.0 - self.beta / 2.0)))
            .collect()
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EpsilonProfile {
    pub sequence: EpsilonSequence,
    pub normalized: Vec<(f64, f64)>,
    /// Smallest grid q from which the normalized sequence never increases.
    pub nonincreasing_from: Option<f64>,
    pub final_over_initial: f64,
}

impl EpsilonProfile {
    pub fn is_nonincreasing_from(&self, q0: f64) -> bool {
        self.nonincreasing_from.is_some_and(|q| q <= q0)
    }

    /// normalized(last) / normalized(q_ref).
    pub fn final_over(&self, q_ref: f64) -> Option<f64> {
        let at = self.normalized.iter().find(|(q, _)| (q - q_ref).abs() < 1e-9)?.1;
        Some(self.normalized.last()?.1 / at)
    }
}

/// ε_q and ε_q·q^{1−β/2} over a grid, with monotonicity diagnostics.
pub fn epsilon_decay_profile(kernel: &AngularKernel, beta: f64, q_grid: &[f64]) -> Result<EpsilonProfile> {
    if q_grid.is_empty() {
        return Err(Error::domain("empty q grid"));
    }
    if let Some(q) = q_grid.iter().find(|q| !(**q >= 2.0)) {
        return Err(Error::domain(format!("epsilon grid must have q >= 2, got {q}")));
    }
    kernel.a_beta(beta)?;
    let sequence = EpsilonSequence::compute(kernel, beta, q_grid)?;
    let normalized = sequence.normalized();
    let mut start = normalized.len() - 1;
    while start > 0 && normalized[start - 1].1 >= normalized[start].1 {
        start -= 1;
    }
    let nonincreasing_from = if normalized.len() > 1 && start < normalized.len() - 1 {
        Some(normalized[start].0)
    } else {
        None
    };
    let final_over_initial = normalized.last().unwrap().1 / normalized[0].1;
    Ok(EpsilonProfile {
        sequence,
        normalized,
        nonincreasing_from,
        final_over_initial,
    })
}

/// β used in the singularity condition for tail order s: 2 for s ≤ 1, 4/s − 2 for s ∈ (1, 2).
pub fn admissible_beta(s: f64) -> Result<f64> {
    if !(s > 0.0 && s < 2.0) {
        return Err(Error::domain(format!("tail order must lie in (0, 2), got {s}")));
    }
    Ok(if s <= 1.0 { 2.0 } else { 4.0 / s - 2.0 })
}

/// {4, 8, …, 1024}.
pub fn doubling_grid(lo: f64, hi: f64) -> Vec<f64> {
    let mut g = Vec::new();
    let mut q = lo;
    while q <= hi * (1.0 + 1e-12) {
        g.push(q);
        q *= 2.0;
    }
    g
}
