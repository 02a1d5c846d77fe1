//! Mittag-Leffler partial sums, the bootstrap scan over a trajectory, and the
//! tail order estimator.

use crate::error::{Error, Result};
use crate::kernels::EpsilonSequence;
use crate::moment_bounds::{k_index, BoundConstants, MomentSnapshot, MomentTrajectory};
use crate::specfun::{ln_gamma_fn, LogSum, MLSpec};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

/// Number of terms used for the initial Mittag-Leffler mass M₀.
pub const M0_TERMS: u32 = 200;

/// Default order window of the tail fit, in q (moments m_{2q}).
pub const TAIL_RANGE: (u32, u32) = (10, 40);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SumMode {
    /// Σ m_{2q}α^{aq}/Γ(aq+1).
    Propagation,
    /// Σ m_{γq}(αt)^q/q!.
    Generation,
}

/// Eⁿ and Iⁿ at one time, kept as logarithms.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PartialSumState {
    pub n: u32,
    pub a: f64,
    /// α in propagation mode, the ramp αt in generation mode.
    pub alpha: f64,
    pub ln_e_n: f64,
    pub ln_i_n: f64,
    pub mode: SumMode,
}

impl PartialSumState {
    pub fn e_n(&self) -> f64 {
        self.ln_e_n.exp()
    }

    pub fn i_n(&self) -> f64 {
        self.ln_i_n.exp()
    }
}

#[derive(Debug, Clone, Copy)]
enum Weights {
    Ml { a: f64, ln_alpha: f64 },
    Ramp { ln_x: f64, gamma: f64 },
}

impl Weights {
    fn propagation(spec: &MLSpec) -> Self {
        Weights::Ml {
            a: spec.a(),
            ln_alpha: spec.alpha().ln(),
        }
    }

    fn generation(gamma: f64, ramp: f64) -> Self {
        Weights::Ramp { ln_x: ramp.ln(), gamma }
    }

    fn ln_weight(&self, q: u32) -> f64 {
        let qf = f64::from(q);
        match *self {
            Weights::Ml { a, ln_alpha } => a * qf * ln_alpha - ln_gamma_fn(a * qf + 1.0).expect("positive argument"),
            Weights::Ramp { ln_x, .. } => {
                if q == 0 {
                    0.0
                } else {
                    qf * ln_x - ln_gamma_fn(qf + 1.0).expect("positive argument")
                }
            }
        }
    }

    /// Moment order carried by term q, with the γ shift for I.
    fn order(&self, q: u32, shifted: Option<f64>) -> f64 {
        let qf = f64::from(q);
        let base = match *self {
            Weights::Ml { .. } => 2.0 * qf,
            Weights::Ramp { gamma, .. } => gamma * qf,
        };
        base + shifted.unwrap_or(0.0)
    }
}

/// ln of the prefix sums Σ_{q ≤ k} for k = 0..=n.
fn ln_prefix(snap: &MomentSnapshot, w: &Weights, n: u32, shift: Option<f64>) -> Result<Vec<f64>> {
    let orders: Vec<f64> = (0..=n).map(|q| w.order(q, shift)).collect();
    let mut missing = Vec::new();
    let mut ln_m = Vec::with_capacity(orders.len());
    for &o in &orders {
        match snap.lookup(o) {
            Some(l) => ln_m.push(l.ln_value),
            None => missing.push(o),
        }
    }
    if !missing.is_empty() {
        return Err(Error::MissingMoments { orders: missing });
    }
    let mut acc = LogSum::new();
    Ok((0..=n)
        .map(|q| {
            acc.add_ln(ln_m[q as usize] + w.ln_weight(q));
            acc.ln()
        })
        .collect())
}

fn ln_sum(snap: &MomentSnapshot, w: &Weights, n: u32, shift: Option<f64>) -> Result<f64> {
    Ok(*ln_prefix(snap, w, n, shift)?.last().expect("n + 1 terms"))
}

/// ln Eⁿ_a(α) = ln Σ_{q=0}^n m_{2q}α^{aq}/Γ(aq+1).
pub fn ln_partial_sum_e(snap: &MomentSnapshot, spec: &MLSpec, n: u32) -> Result<f64> {
    ln_sum(snap, &Weights::propagation(spec), n, None)
}

/// ln Iⁿ_{a,γ}(α) = ln Σ_{q=0}^n m_{2q+γ}α^{aq}/Γ(aq+1).
pub fn ln_partial_sum_i(snap: &MomentSnapshot, spec: &MLSpec, gamma: f64, n: u32) -> Result<f64> {
    ln_sum(snap, &Weights::propagation(spec), n, Some(gamma))
}

pub fn partial_sum_e(m: &MomentTrajectory, spec: &MLSpec, n: u32, t: f64) -> Result<f64> {
    ln_partial_sum_e(&m.snapshot(t)?, spec, n).map(f64::exp)
}

pub fn partial_sum_i(m: &MomentTrajectory, spec: &MLSpec, gamma: f64, n: u32, t: f64) -> Result<f64> {
    ln_partial_sum_i(&m.snapshot(t)?, spec, gamma, n).map(f64::exp)
}

pub fn propagation_state(snap: &MomentSnapshot, spec: &MLSpec, gamma: f64, n: u32) -> Result<PartialSumState> {
    Ok(PartialSumState {
        n,
        a: spec.a(),
        alpha: spec.alpha(),
        ln_e_n: ln_partial_sum_e(snap, spec, n)?,
        ln_i_n: ln_partial_sum_i(snap, spec, gamma, n)?,
        mode: SumMode::Propagation,
    })
}

/// Eⁿ_γ(αt, t) = Σ m_{γq}(αt)^q/q! and Iⁿ_{γ,γ} = Σ m_{γq+γ}(αt)^q/q! at the snapshot time.
pub fn generation_state(snap: &MomentSnapshot, gamma: f64, alpha: f64, n: u32) -> Result<PartialSumState> {
    if !(gamma > 0.0 && gamma <= 1.0) {
        return Err(Error::domain(format!("gamma must lie in (0, 1], got {gamma}")));
    }
    if !(alpha > 0.0 && snap.t >= 0.0) {
        return Err(Error::domain("generation sums need alpha > 0 and t >= 0"));
    }
    let ramp = alpha * snap.t;
    let w = Weights::generation(gamma, ramp);
    Ok(PartialSumState {
        n,
        a: 2.0 / gamma,
        alpha: ramp,
        ln_e_n: ln_sum(snap, &w, n, None)?,
        ln_i_n: ln_sum(snap, &w, n, Some(gamma))?,
        mode: SumMode::Generation,
    })
}

/// α^{−γ/2}(Eⁿ − m₀e^{α^{a−1}}), a lower bound for Iⁿ_{a,γ}.
pub fn lower_bound_check(e_n: f64, m0: f64, spec: &MLSpec, gamma: f64) -> f64 {
    let alpha = spec.alpha();
    alpha.powf(-gamma / 2.0) * (e_n - m0 * alpha.powf(spec.a() - 1.0).exp())
}

/// M₀ = E^{200}_a(α₀) on the initial snapshot.
pub fn initial_ml_mass(m: &MomentTrajectory, spec: &MLSpec) -> Result<f64> {
    ln_partial_sum_e(&m.snapshot_at(0), spec, M0_TERMS).map(f64::exp)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BootstrapVerdict {
    /// T_n reaches the horizon for every n.
    Bounded,
    /// Some T_n stops short of the horizon.
    Collapse,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BootstrapReport {
    pub mode: SumMode,
    pub s: f64,
    pub alpha: f64,
    pub m0_big: f64,
    pub threshold: f64,
    pub horizon: f64,
    pub n_grid: Vec<u32>,
    pub t_n: Vec<f64>,
    pub verdict: BootstrapVerdict,
}

fn scan_times(times: &[f64], ln_prefix_by_time: &[Vec<f64>], ln_threshold: f64, horizon: f64, n_max: u32) -> Vec<f64> {
    (0..=n_max as usize)
        .map(|n| {
            times
                .iter()
                .zip(ln_prefix_by_time)
                .find(|(_, p)| p[n] >= ln_threshold)
                .map_or(horizon, |(&t, _)| t)
        })
        .collect()
}

fn verdict(t_n: &[f64], horizon: f64) -> BootstrapVerdict {
    if t_n.iter().all(|&t| t == horizon) {
        BootstrapVerdict::Bounded
    } else {
        BootstrapVerdict::Collapse
    }
}

/// T_n for n = 0..=n_max: the first grid time with Eⁿ_a(α, t) ≥ 4M₀, or the horizon.
pub fn bootstrap_scan(m: &MomentTrajectory, spec: &MLSpec, m0_big: f64, n_max: u32) -> Result<BootstrapReport> {
    if !(m0_big > 0.0) {
        return Err(Error::domain(format!("M0 must be positive, got {m0_big}")));
    }
    let w = Weights::propagation(spec);
    let prefixes: Result<Vec<Vec<f64>>> = (0..m.times.len())
        .into_par_iter()
        .map(|i| ln_prefix(&m.snapshot_at(i), &w, n_max, None))
        .collect();
    let prefixes = prefixes?;
    let threshold = 4.0 * m0_big;
    let horizon = m.horizon();
    let t_n = scan_times(&m.times, &prefixes, threshold.ln(), horizon, n_max);
    Ok(BootstrapReport {
        mode: SumMode::Propagation,
        s: spec.s(),
        alpha: spec.alpha(),
        m0_big,
        threshold,
        verdict: verdict(&t_n, horizon),
        horizon,
        n_grid: (0..=n_max).collect(),
        t_n,
    })
}

/// Generation analogue on [0, min(T, 1)] with threshold 4M₀*, M₀* = m₂(0).
pub fn generation_scan(m: &MomentTrajectory, gamma: f64, alpha: f64, n_max: u32) -> Result<BootstrapReport> {
    if !(gamma > 0.0 && gamma <= 1.0 && alpha > 0.0) {
        return Err(Error::domain("generation scan needs gamma in (0, 1] and alpha > 0"));
    }
    let m0_star = m.snapshot_at(0).moment(2.0)?;
    let idx: Vec<usize> = (0..m.times.len()).filter(|&i| m.times[i] <= 1.0).collect();
    let prefixes: Result<Vec<Vec<f64>>> = idx
        .par_iter()
        .map(|&i| {
            let snap = m.snapshot_at(i);
            let w = Weights::generation(gamma, alpha * snap.t);
            ln_prefix(&snap, &w, n_max, None)
        })
        .collect();
    let prefixes = prefixes?;
    let times: Vec<f64> = idx.iter().map(|&i| m.times[i]).collect();
    let horizon = *times.last().expect("t = 0 is on the grid");
    let threshold = 4.0 * m0_star;
    let t_n = scan_times(&times, &prefixes, threshold.ln(), horizon, n_max);
    Ok(BootstrapReport {
        mode: SumMode::Generation,
        s: gamma,
        alpha,
        m0_big: m0_star,
        threshold,
        verdict: verdict(&t_n, horizon),
        horizon,
        n_grid: (0..=n_max).collect(),
        t_n,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AlphaSearch {
    pub alpha0: f64,
    pub m0_big: f64,
    /// (α, verdict) for every α tried, largest first.
    pub tried: Vec<(f64, BootstrapVerdict)>,
    /// Largest α tried whose scan stays bounded.
    pub alpha: Option<f64>,
}

/// Halves α from α₀ until the bootstrap scan stays bounded for every n ≤ n_max.
pub fn propagation_search(m: &MomentTrajectory, s: f64, alpha0: f64, n_max: u32, halvings: u32) -> Result<AlphaSearch> {
    let spec0 = MLSpec::new(s, alpha0)?;
    let m0_big = initial_ml_mass(m, &spec0)?;
    let mut tried = Vec::new();
    let mut found = None;
    for k in 0..=halvings {
        let alpha = alpha0 * 0.5f64.powi(k as i32);
        let report = bootstrap_scan(m, &spec0.with_alpha(alpha)?, m0_big, n_max)?;
        tried.push((alpha, report.verdict));
        if report.verdict == BootstrapVerdict::Bounded {
            found = Some(alpha);
            break;
        }
    }
    Ok(AlphaSearch {
        alpha0,
        m0_big,
        tried,
        alpha: found,
    })
}

/// Parameters of the propagation argument. The constants routinely exceed the
/// `f64` range, so they are carried as logarithms.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PropagationChoice {
    pub q0: u32,
    pub ln_c_q0: f64,
    pub ln_k0: f64,
    /// ln of the supremum of α with m₀e^{α^{a−1}} + 2α^{γ/2}K₀/K₁ < 3M₀.
    pub ln_alpha1: f64,
    /// (ln 2)^{1/a}.
    pub alpha2: f64,
    pub ln_alpha: f64,
}

/// Smallest q₀ on the ε grid with K₁ − 4ε_{q₀}q₀^{2−a}C_aK₃M₀ > K₁/2, and the rate it allows.
pub fn propagation_parameters(
    c: &BoundConstants,
    eps: &EpsilonSequence,
    a: f64,
    c_a: f64,
    m0_big: f64,
    alpha0: f64,
) -> Result<Option<PropagationChoice>> {
    if !(a > 1.0 && c_a > 0.0 && m0_big > 0.0 && alpha0 > 0.0) {
        return Err(Error::domain("need a > 1 and positive C_a, M0, alpha0"));
    }
    let q0 = eps.entries().iter().find_map(|&(q, e)| {
        let qi = q.round();
        let ok =
            qi >= 2.0 && (q - qi).abs() < 1e-9 && c.k1 - 4.0 * e * qi.powf(2.0 - a) * c_a * c.k3 * m0_big > c.k1 / 2.0;
        ok.then_some(qi as u32)
    });
    let Some(q0) = q0 else { return Ok(None) };
    let ln_c_q0 = c.ln_c_q0(q0);
    let ln_k0 = ln_add(
        std::f64::consts::LN_2 + ln_c_q0 + c.k1.ln_1p(),
        (4.0 * c.k2 * m0_big).ln(),
    );
    let ln_k0_over_k1 = ln_k0 - c.k1.ln();
    let ok = |x: f64| {
        let first = c.m0 * ((a - 1.0) * x).exp().exp();
        let second = (std::f64::consts::LN_2 + c.gamma / 2.0 * x + ln_k0_over_k1).exp();
        first + second < 3.0 * m0_big
    };
    let ln_alpha1 = sup_ln(ok);
    let alpha2 = 2f64.ln().powf(1.0 / a);
    Ok(Some(PropagationChoice {
        q0,
        ln_c_q0,
        ln_k0,
        ln_alpha1,
        alpha2,
        ln_alpha: alpha0.ln().min(ln_alpha1).min((alpha2 * (1.0 - 1e-12)).ln()),
    }))
}

fn ln_add(x: f64, y: f64) -> f64 {
    let m = x.max(y);
    if m == f64::NEG_INFINITY {
        return m;
    }
    m + ((x - m).exp() + (y - m).exp()).ln()
}

/// Largest x (to bisection precision) with `ok(x)`, for `ok` monotone and true
/// far to the left; `-inf` when it fails at x = −1e6.
fn sup_ln<F: Fn(f64) -> bool>(ok: F) -> f64 {
    let mut lo = -1e6;
    if !ok(lo) {
        return f64::NEG_INFINITY;
    }
    let mut hi = 1.0;
    while ok(hi) {
        lo = hi;
        hi *= 2.0;
        if hi > 700.0 {
            return lo;
        }
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if ok(mid) {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo < 1e-13 * lo.abs().max(1.0) {
            break;
        }
    }
    lo
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GenerationChoice {
    pub q0: u32,
    pub ln_c_star: f64,
    pub ln_k_q0: f64,
    /// K₁ − 8M₀*ε_{γq₀/2}C K₃ − K₁/2, the room left for α.
    pub slack: f64,
    pub ln_alpha: f64,
}

/// Smallest q₀ with K₁ − 8M₀*ε_{γq₀/2}CK₃ > K₁/2 and α below both K₁M₀*/(2𝒦_{q₀}) and the slack.
pub fn generation_parameters(
    c: &BoundConstants,
    eps: &EpsilonSequence,
    c_comb: f64,
    m0_star: f64,
    q0_max: u32,
) -> Result<Option<GenerationChoice>> {
    if !(c_comb > 0.0 && m0_star > 0.0) {
        return Err(Error::domain("need positive combinatoric constant and M0*"));
    }
    for q0 in 1..=q0_max {
        let Ok(e) = eps.get(c.gamma * f64::from(q0) / 2.0) else {
            continue;
        };
        let slack = c.k1 - 8.0 * m0_star * e * c_comb * c.k3 - c.k1 / 2.0;
        if slack <= 0.0 {
            continue;
        }
        let ln_c_star = c.ln_c_star_q0(q0);
        let ln_k_q0 = ln_add(ln_c_star + (2.0 + 2.0 * c.k1).ln(), (4.0 * m0_star * c.k2).ln());
        let ln_bound = ((c.k1 * m0_star / 2.0).ln() - ln_k_q0).min(slack.ln());
        return Ok(Some(GenerationChoice {
            q0,
            ln_c_star,
            ln_k_q0,
            slack,
            ln_alpha: ln_bound + (-1e-9f64).ln_1p(),
        }));
    }
    Ok(None)
}

/// k_{q*} = ⌊q/4 − 1/γ + 3/2⌋.
pub fn generation_sum_limit(q: f64, gamma: f64) -> i64 {
    (q / 4.0 - 1.0 / gamma + 1.5).floor() as i64
}

/// 1 + k_{q/2 − 2/s}, or 0 when q/2 − 2/s < 0.
pub fn combinatoric_sum_limit(q: f64, s: f64) -> i64 {
    let p = q / 2.0 - 2.0 / s;
    if p < 0.0 {
        0
    } else {
        1 + k_index(p)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TailFit {
    pub s_hat: f64,
    pub alpha_hat: f64,
    pub s_stderr: f64,
    pub alpha_stderr: f64,
    /// Coefficients of (q ln q, q, ln q, 1).
    pub coefficients: [f64; 4],
    pub q_range: (u32, u32),
    pub rms_residual: f64,
}

/// Fits ln m_{2q} ≈ ln Γ(aq + 1) − aq ln α + c(ln q) + d over q ∈ q_range, a = 2/s.
pub fn estimate_tail_order(m: &MomentTrajectory, t: f64, q_range: (u32, u32)) -> Result<TailFit> {
    fit_snapshot(&m.snapshot(t)?, q_range)
}

pub fn fit_snapshot(snap: &MomentSnapshot, q_range: (u32, u32)) -> Result<TailFit> {
    let (lo, hi) = q_range;
    if hi < lo || hi - lo + 1 < 5 {
        return Err(Error::FitDegenerate(format!(
            "q range [{lo}, {hi}] has fewer than 5 points"
        )));
    }
    let qs: Vec<f64> = (lo.max(1)..=hi).map(f64::from).collect();
    let orders: Vec<f64> = qs.iter().map(|q| 2.0 * q).collect();
    let mut y = Vec::with_capacity(qs.len());
    let mut missing = Vec::new();
    for &o in &orders {
        match snap.lookup(o) {
            Some(l) if !l.interpolated => y.push(l.ln_value),
            _ => missing.push(o),
        }
    }
    if !missing.is_empty() {
        return Err(Error::MissingMoments { orders: missing });
    }
    if qs.len() < 5 {
        return Err(Error::FitDegenerate("fewer than 5 positive orders".into()));
    }
    if y.iter().any(|v| !v.is_finite()) {
        return Err(Error::FitDegenerate("moments must be positive and finite".into()));
    }
    for w in y.windows(3) {
        let d2 = w[0] - 2.0 * w[1] + w[2];
        if d2 < -1e-9 * w[1].abs().max(1.0) {
            return Err(Error::FitDegenerate("moments are not log-convex in the order".into()));
        }
    }
    let x: Vec<[f64; 4]> = qs.iter().map(|&q| [q * q.ln(), q, q.ln(), 1.0]).collect();
    let (beta, cov, rms) = least_squares(&x, &y)?;
    let a = beta[0];
    if !(a > 0.0) {
        return Err(Error::FitDegenerate(format!(
            "fitted Mittag-Leffler parameter {a} is not positive"
        )));
    }
    let b = beta[1];
    let ln_alpha = a.ln() - 1.0 - b / a;
    let alpha_hat = ln_alpha.exp();
    let s_hat = 2.0 / a;
    let s_stderr = 2.0 / (a * a) * cov[0][0].sqrt();
    let g = [1.0 / a + b / (a * a), -1.0 / a];
    let var_ln_alpha = g[0] * g[0] * cov[0][0] + 2.0 * g[0] * g[1] * cov[0][1] + g[1] * g[1] * cov[1][1];
    Ok(TailFit {
        s_hat,
        alpha_hat,
        s_stderr,
        alpha_stderr: alpha_hat * var_ln_alpha.max(0.0).sqrt(),
        coefficients: beta,
        q_range,
        rms_residual: rms,
    })
}

type Fit4 = ([f64; 4], [[f64; 4]; 4], f64);

/// Ordinary least squares by Householder QR on column-scaled data.
fn least_squares(x: &[[f64; 4]], y: &[f64]) -> Result<Fit4> {
    let n = x.len();
    let mut scale = [0.0; 4];
    for j in 0..4 {
        scale[j] = x.iter().map(|r| r[j] * r[j]).sum::<f64>().sqrt();
        if scale[j] == 0.0 {
            return Err(Error::FitDegenerate("zero design column".into()));
        }
    }
    let mut a: Vec<[f64; 4]> = x.iter().map(|r| std::array::from_fn(|j| r[j] / scale[j])).collect();
    let mut b = y.to_vec();
    let mut r = [[0.0; 4]; 4];
    for k in 0..4 {
        let norm = (k..n).map(|i| a[i][k] * a[i][k]).sum::<f64>().sqrt();
        if norm == 0.0 {
            return Err(Error::FitDegenerate("rank-deficient design".into()));
        }
        let alpha = if a[k][k] > 0.0 { -norm } else { norm };
        let mut v: Vec<f64> = (k..n).map(|i| a[i][k]).collect();
        v[0] -= alpha;
        let vv: f64 = v.iter().map(|t| t * t).sum();
        for j in k..4 {
            let d: f64 = (k..n).map(|i| v[i - k] * a[i][j]).sum::<f64>() * 2.0 / vv;
            for i in k..n {
                a[i][j] -= d * v[i - k];
            }
        }
        let d: f64 = (k..n).map(|i| v[i - k] * b[i]).sum::<f64>() * 2.0 / vv;
        for i in k..n {
            b[i] -= d * v[i - k];
        }
        for j in k..4 {
            r[k][j] = a[k][j];
        }
    }
    if (0..4).any(|k| r[k][k].abs() < 1e-13 * r[0][0].abs()) {
        return Err(Error::FitDegenerate("ill-conditioned design".into()));
    }
    let mut coef = [0.0; 4];
    for k in (0..4).rev() {
        let s: f64 = (k + 1..4).map(|j| r[k][j] * coef[j]).sum();
        coef[k] = (b[k] - s) / r[k][k];
    }
    let rss: f64 = b[4..].iter().map(|t| t * t).sum();
    let dof = n - 4;
    let sigma2 = if dof > 0 { rss / dof as f64 } else { f64::NAN };
    // R^{-1}, then cov = σ² R^{-1}R^{-T}
    let mut rinv = [[0.0; 4]; 4];
    for c in 0..4 {
        for k in (0..=c).rev() {
            let rhs = if k == c { 1.0 } else { 0.0 };
            let s: f64 = (k + 1..=c).map(|j| r[k][j] * rinv[j][c]).sum();
            rinv[k][c] = (rhs - s) / r[k][k];
        }
    }
    let mut cov = [[0.0; 4]; 4];
    for i in 0..4 {
        for j in 0..4 {
            let s: f64 = (0..4).map(|k| rinv[i][k] * rinv[j][k]).sum();
            cov[i][j] = sigma2 * s / (scale[i] * scale[j]);
        }
    }
    let beta = std::array::from_fn(|j| coef[j] / scale[j]);
    Ok((beta, cov, (rss / n as f64).sqrt()))
}
