//! Moment trajectories, the polynomial-moment differential inequalities, and
//! the Bernoulli comparison envelopes built on one shared constant ledger.

use crate::error::{Error, Result};
use crate::kernels::EpsilonSequence;
use crate::specfun::binomial;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Provenance {
    Simulated,
    AnalyticMaxwellian { temperature: f64 },
    SyntheticTail { s: f64, alpha: f64 },
}

/// m_q(t) on a time grid × order grid, stored as logarithms.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MomentTrajectory {
    pub times: Vec<f64>,
    pub orders: Vec<f64>,
    /// ln m_q(t), indexed `[time][order]`.
    pub ln_values: Vec<Vec<f64>>,
    /// Standard error of m_q(t) (same layout), when sampled.
    pub stderr: Option<Vec<Vec<f64>>>,
    pub provenance: Provenance,
}

const ORDER_MATCH: f64 = 1e-9;

fn strictly_increasing(x: &[f64]) -> bool {
    x.windows(2).all(|w| w[0] < w[1])
}

impl MomentTrajectory {
    pub fn from_ln(
        times: Vec<f64>,
        orders: Vec<f64>,
        ln_values: Vec<Vec<f64>>,
        stderr: Option<Vec<Vec<f64>>>,
        provenance: Provenance,
    ) -> Result<Self> {
        if times.is_empty() || orders.is_empty() {
            return Err(Error::domain("trajectory needs at least one time and one order"));
        }
        if !strictly_increasing(&times) || times[0] < 0.0 {
            return Err(Error::domain("times must be nonnegative and strictly increasing"));
        }
        if !strictly_increasing(&orders) || orders[0] < 0.0 {
            return Err(Error::domain("orders must be nonnegative and strictly increasing"));
        }
        let shape_ok = |m: &Vec<Vec<f64>>| m.len() == times.len() && m.iter().all(|r| r.len() == orders.len());
        if !shape_ok(&ln_values) || stderr.as_ref().is_some_and(|s| !shape_ok(s)) {
            return Err(Error::domain("moment table shape does not match the grids"));
        }
        if ln_values.iter().flatten().any(|v| v.is_nan() || *v == f64::INFINITY) {
            return Err(Error::domain("moment table contains NaN or infinite logarithms"));
        }
        Ok(MomentTrajectory {
            times,
            orders,
            ln_values,
            stderr,
            provenance,
        })
    }

    pub fn from_values(
        times: Vec<f64>,
        orders: Vec<f64>,
        values: Vec<Vec<f64>>,
        provenance: Provenance,
    ) -> Result<Self> {
        if values.iter().flatten().any(|v| !(*v >= 0.0)) {
            return Err(Error::domain("moments must be nonnegative"));
        }
        let ln = values.iter().map(|r| r.iter().map(|v| v.ln()).collect()).collect();
        Self::from_ln(times, orders, ln, None, provenance)
    }

    /// The same snapshot repeated on every time of the grid.
    pub fn stationary(times: Vec<f64>, snapshot: &MomentSnapshot, provenance: Provenance) -> Result<Self> {
        let rows = vec![snapshot.ln_values.clone(); times.len()];
        Self::from_ln(times, snapshot.orders.clone(), rows, None, provenance)
    }

    pub fn horizon(&self) -> f64 {
        *self.times.last().expect("nonempty")
    }

    pub fn time_index(&self, t: f64) -> Result<usize> {
        let tol = 1e-12 * t.abs().max(1.0);
        self.times
            .iter()
            .position(|&x| (x - t).abs() <= tol)
            .ok_or(Error::MissingTime(t))
    }

    pub fn snapshot_at(&self, index: usize) -> MomentSnapshot {
        MomentSnapshot {
            t: self.times[index],
            orders: self.orders.clone(),
            ln_values: self.ln_values[index].clone(),
        }
    }

    pub fn snapshot(&self, t: f64) -> Result<MomentSnapshot> {
        Ok(self.snapshot_at(self.time_index(t)?))
    }

    pub fn order_index(&self, q: f64) -> Option<usize> {
        self.orders
            .iter()
            .position(|&x| (x - q).abs() <= ORDER_MATCH * q.max(1.0))
    }
}

/// Moments at one time.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MomentSnapshot {
    pub t: f64,
    pub orders: Vec<f64>,
    pub ln_values: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LookedUp {
    pub ln_value: f64,
    pub interpolated: bool,
}

impl MomentSnapshot {
    pub fn new(t: f64, orders: Vec<f64>, ln_values: Vec<f64>) -> Result<Self> {
        if orders.len() != ln_values.len() || orders.is_empty() || !strictly_increasing(&orders) {
            return Err(Error::domain(
                "snapshot orders must be strictly increasing and match the values",
            ));
        }
        Ok(MomentSnapshot { t, orders, ln_values })
    }

    pub fn from_fn<F: Fn(f64) -> f64>(t: f64, orders: Vec<f64>, ln_m: F) -> Result<Self> {
        let v = orders.iter().map(|&q| ln_m(q)).collect();
        Self::new(t, orders, v)
    }

    /// ln m_q, log-linearly interpolated between stored orders when needed.
    pub fn lookup(&self, q: f64) -> Option<LookedUp> {
        let i = self.orders.partition_point(|&x| x < q - ORDER_MATCH * q.max(1.0));
        if i < self.orders.len() && (self.orders[i] - q).abs() <= ORDER_MATCH * q.max(1.0) {
            return Some(LookedUp {
                ln_value: self.ln_values[i],
                interpolated: false,
            });
        }
        if i == 0 || i == self.orders.len() {
            return None;
        }
        let (q0, q1) = (self.orders[i - 1], self.orders[i]);
        let w = (q - q0) / (q1 - q0);
        Some(LookedUp {
            ln_value: (1.0 - w) * self.ln_values[i - 1] + w * self.ln_values[i],
            interpolated: true,
        })
    }

    pub fn ln_moment(&self, q: f64) -> Result<f64> {
        self.lookup(q)
            .map(|l| l.ln_value)
            .ok_or_else(|| Error::MissingMoments { orders: vec![q] })
    }

    pub fn moment(&self, q: f64) -> Result<f64> {
        self.ln_moment(q).map(f64::exp)
    }

    /// All requested moments, or one error listing every absent order.
    pub fn require(&self, orders: &[f64]) -> Result<Vec<f64>> {
        let mut missing = Vec::new();
        let mut out = Vec::with_capacity(orders.len());
        for &q in orders {
            match self.lookup(q) {
                Some(l) => out.push(l.ln_value.exp()),
                None => {
                    if !missing.iter().any(|&m: &f64| (m - q).abs() <= ORDER_MATCH) {
                        missing.push(q);
                    }
                }
            }
        }
        if missing.is_empty() {
            Ok(out)
        } else {
            missing.sort_by(f64::total_cmp);
            Err(Error::MissingMoments { orders: missing })
        }
    }

    /// m_q nondecreasing in q (exact comparison of stored values).
    pub fn is_monotone_in_order(&self) -> bool {
        self.ln_values.windows(2).all(|w| w[0] <= w[1])
    }
}

/// Constants shared by every moment inequality.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundConstants {
    pub a2: f64,
    pub gamma: f64,
    pub c_gamma: f64,
    pub k1: f64,
    pub k2: f64,
    pub k3: f64,
    pub m0: f64,
    pub m2_0: f64,
}

impl BoundConstants {
    pub fn new(a2: f64, gamma: f64, m0: f64, m2_0: f64) -> Result<Self> {
        if !(a2 > 0.0 && a2.is_finite()) {
            return Err(Error::domain(format!("A2 must be positive and finite, got {a2}")));
        }
        if !(gamma > 0.0 && gamma <= 1.0) {
            return Err(Error::domain(format!("gamma must lie in (0, 1], got {gamma}")));
        }
        if !(m0 > 0.0 && m2_0 >= m0) {
            return Err(Error::domain(format!("need m0 > 0 and m2(0) >= m0, got {m0}, {m2_0}")));
        }
        let c_gamma = 1f64.min(2f64.powf(1.0 - gamma));
        Ok(BoundConstants {
            a2,
            gamma,
            c_gamma,
            k1: a2 * c_gamma * m0,
            k2: a2 * (1.0 + 2.0 / c_gamma) * m2_0,
            k3: a2 / c_gamma,
            m0,
            m2_0,
        })
    }

    /// B_rp = K₂ + 2^{rp}K₃.
    pub fn b_rp(&self, rp: f64) -> f64 {
        self.k2 + 2f64.powf(rp) * self.k3
    }

    /// ln 𝐁_rp for the generation envelope.
    pub fn ln_generation_constant(&self, rp: f64) -> Result<f64> {
        if !(rp > 0.0) {
            return Err(Error::domain(format!("rp must be positive, got {rp}")));
        }
        Ok(ln_bernoulli_constant(self.k1, self.gamma, self.b_rp(rp), rp))
    }

    pub fn generation_constant(&self, rp: f64) -> Result<f64> {
        let l = self.ln_generation_constant(rp)?;
        if l > crate::specfun::LN_F64_MAX {
            return Err(Error::Overflow {
                what: format!("generation constant at rp={rp}"),
                threshold: crate::specfun::LN_F64_MAX,
            });
        }
        Ok(l.exp())
    }

    /// c_{q0} = max over p ∈ {0, …, 2q0+1} of max(𝐁_p, B_p𝐁_p); the p = 0 entry is the mass.
    pub fn c_q0(&self, q0: u32) -> Result<f64> {
        finite_exp(self.ln_c_q0(q0), "c_q0")
    }

    pub fn ln_c_q0(&self, q0: u32) -> f64 {
        self.ln_controlled_max((0..=2 * q0 + 1).map(f64::from))
    }

    /// Generation analogue: max over q ∈ {0, …, q0−1} of max(𝐁_{γq}, B_{γq}𝐁_{γq}).
    pub fn c_star_q0(&self, q0: u32) -> Result<f64> {
        finite_exp(self.ln_c_star_q0(q0), "c*_q0")
    }

    pub fn ln_c_star_q0(&self, q0: u32) -> f64 {
        let g = self.gamma;
        self.ln_controlled_max((0..q0).map(|q| g * f64::from(q)))
    }

    fn ln_controlled_max<I: Iterator<Item = f64>>(&self, orders: I) -> f64 {
        orders
            .map(|p| {
                if p == 0.0 {
                    self.m0.ln()
                } else {
                    let bb = ln_bernoulli_constant(self.k1, self.gamma, self.b_rp(p), p);
                    bb + self.b_rp(p).ln().max(0.0)
                }
            })
            .fold(f64::NEG_INFINITY, f64::max)
    }
}

fn finite_exp(l: f64, what: &str) -> Result<f64> {
    if l > crate::specfun::LN_F64_MAX {
        return Err(Error::Overflow {
            what: what.to_string(),
            threshold: crate::specfun::LN_F64_MAX,
        });
    }
    Ok(l.exp())
}

/// k_p = ⌊(p + 1)/2⌋.
pub fn k_index(p: f64) -> i64 {
    ((p + 1.0) / 2.0).floor() as i64
}

/// Right side of the m_{2q} inequality.
pub fn ode_rhs_propagation(
    c: &BoundConstants,
    eps: &EpsilonSequence,
    m: &MomentSnapshot,
    q: u32,
    gamma: f64,
) -> Result<f64> {
    if q < 2 {
        return Err(Error::domain(format!("q must be >= 2, got {q}")));
    }
    let qf = f64::from(q);
    let kq = k_index(qf) as u32;
    let mut orders = vec![2.0 * qf + gamma, 2.0 * qf];
    for k in 1..=kq {
        let kf = f64::from(k);
        orders.extend([2.0 * kf + gamma, 2.0 * (qf - kf), 2.0 * kf, 2.0 * (qf - kf) + gamma]);
    }
    let v = m.require(&orders)?;
    let e = eps.get(qf)?;
    let mut sum = 0.0;
    for k in 1..=kq {
        let i = 2 + 4 * (k as usize - 1);
        sum += binomial(qf - 2.0, k - 1) * (v[i] * v[i + 1] + v[i + 2] * v[i + 3]);
    }
    Ok(-c.k1 * v[0] + c.k2 * v[1] + c.k3 * e * qf * (qf - 1.0) * sum)
}

/// Right side of the m_{γq} inequality; the ε factor is looked up at qγ/2.
pub fn ode_rhs_generation(
    c: &BoundConstants,
    eps: &EpsilonSequence,
    m: &MomentSnapshot,
    q: u32,
    gamma: f64,
) -> Result<f64> {
    let qf = f64::from(q);
    let p = qf / 2.0 - 2.0 / gamma;
    let mut orders = vec![gamma * qf + gamma, gamma * qf];
    let upper = if p < 0.0 { 0 } else { 1 + k_index(p) as u32 };
    for k in 1..=upper {
        let kf = f64::from(k);
        let g2k = 2.0 * gamma * kf;
        orders.extend([g2k + gamma, gamma * qf - g2k, g2k, gamma * qf - g2k + gamma]);
    }
    let v = m.require(&orders)?;
    let mut val = -c.k1 * v[0] + c.k2 * v[1];
    if upper > 0 {
        let h = qf * gamma / 2.0;
        let e = eps.get(h)?;
        let mut sum = 0.0;
        for k in 1..=upper {
            let i = 2 + 4 * (k as usize - 1);
            sum += binomial(p, k - 1) * (v[i] * v[i + 1] + v[i + 2] * v[i + 3]);
        }
        val += c.k3 * e * h * (h - 1.0) * sum;
    }
    Ok(val)
}

/// Closed-form upper solution of y′ = By − Ay^{1+c}, c = γ/rp.
///
/// With `m_rp_0 = Some(y0)` this is the propagation envelope; with `None` it
/// is the generation envelope 𝐁_rp·max{1, t^{−rp/γ}}, which is `+inf` at t = 0.
pub fn bernoulli_envelope(c: &BoundConstants, b_rp: f64, rp: f64, m_rp_0: Option<f64>, t: f64) -> Result<f64> {
    if !(b_rp > 0.0 && rp > 0.0) {
        return Err(Error::domain(format!("need B_rp > 0 and rp > 0, got {b_rp}, {rp}")));
    }
    if !(t >= 0.0) {
        return Err(Error::domain(format!("time must be nonnegative, got {t}")));
    }
    let ce = c.gamma / rp;
    match m_rp_0 {
        Some(y0) => {
            if !(y0 > 0.0) {
                return Err(Error::domain(format!("initial moment must be positive, got {y0}")));
            }
            let x = t * b_rp * ce;
            let base = y0.powf(-ce) * (-x).exp() + (c.k1 / b_rp) * (-(-x).exp_m1());
            Ok(base.powf(-1.0 / ce))
        }
        None => {
            if t == 0.0 {
                return Ok(f64::INFINITY);
            }
            let ln_b = ln_bernoulli_constant(c.k1, c.gamma, b_rp, rp);
            Ok((ln_b + (-1.0 / ce) * t.ln().min(0.0)).exp())
        }
    }
}

/// ln of (A/B)^{−1/c}·max{(e^{cB}/(cB))^{−1/c}, (1 − e^{−cB})^{−1/c}}, c = γ/rp.
fn ln_bernoulli_constant(a: f64, gamma: f64, b: f64, rp: f64) -> f64 {
    let c = gamma / rp;
    let x = c * b;
    let first = x - x.ln();
    let second = (-(-x).exp_m1()).ln();
    -((a / b).ln() + first.min(second)) / c
}

/// Jensen lower bound m₀^{−γ/rp}·m_rp^{1+γ/rp} for m_{rp+γ}.
pub fn jensen_lower(m0: f64, m_rp: f64, rp: f64, gamma: f64) -> Result<f64> {
    if !(m0 > 0.0 && m_rp > 0.0 && rp > 0.0 && gamma > 0.0) {
        return Err(Error::domain("jensen_lower needs positive inputs"));
    }
    let c = gamma / rp;
    Ok((-c * m0.ln() + (1.0 + c) * m_rp.ln()).exp())
}

/// (C_γ⟨v⟩^γ − ⟨v_*⟩^γ, |v − v_*|^γ, C_γ^{−1}(⟨v⟩^γ + ⟨v_*⟩^γ)).
pub fn potential_sandwich(v: &[f64], v_star: &[f64], gamma: f64) -> (f64, f64, f64) {
    let cg = 1f64.min(2f64.powf(1.0 - gamma));
    let bv = (1.0 + v.iter().map(|x| x * x).sum::<f64>()).powf(gamma / 2.0);
    let bw = (1.0 + v_star.iter().map(|x| x * x).sum::<f64>()).powf(gamma / 2.0);
    let u = v
        .iter()
        .zip(v_star)
        .map(|(a, b)| (a - b) * (a - b))
        .sum::<f64>()
        .powf(gamma / 2.0);
    (cg * bv - bw, u, (bv + bw) / cg)
}

/// ((x + y)^{γq/2−2}, (x^γ + y^γ)^{q/2−2/γ}) for x = ⟨v⟩², y = ⟨v_*⟩².
pub fn weight_comparison(x: f64, y: f64, gamma: f64, q: f64) -> (f64, f64) {
    let lhs = (x + y).powf(gamma * q / 2.0 - 2.0);
    let rhs = (x.powf(gamma) + y.powf(gamma)).powf(q / 2.0 - 2.0 / gamma);
    (lhs, rhs)
}

/// Smallest grid order q such that K₁m_{2q'+γ} > K₂m_{2q'} for every q' ≥ q up to `q_max`.
pub fn dominance_threshold(c: &BoundConstants, m: &MomentSnapshot, q_max: u32) -> Result<Option<u32>> {
    let mut threshold = None;
    for q in (1..=q_max).rev() {
        let qf = f64::from(q);
        let v = m.require(&[2.0 * qf + c.gamma, 2.0 * qf])?;
        if c.k1 * v[0] > c.k2 * v[1] {
            threshold = Some(q);
        } else {
            break;
        }
    }
    Ok(threshold)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EnvelopeRow {
    pub t: f64,
    pub q: f64,
    pub value: f64,
    pub stderr: f64,
    pub envelope: f64,
    pub margin: f64,
}

/// Trajectory moments against the generation envelope (order rp = `q`).
pub fn envelope_table(traj: &MomentTrajectory, c: &BoundConstants, orders: &[f64]) -> Result<Vec<EnvelopeRow>> {
    let mut rows = Vec::new();
    for &q in orders {
        let j = traj
            .order_index(q)
            .ok_or_else(|| Error::MissingMoments { orders: vec![q] })?;
        let b = c.b_rp(q);
        for (i, &t) in traj.times.iter().enumerate() {
            let value = traj.ln_values[i][j].exp();
            let stderr = traj.stderr.as_ref().map_or(0.0, |s| s[i][j]);
            let envelope = bernoulli_envelope(c, b, q, None, t)?;
            rows.push(EnvelopeRow {
                t,
                q,
                value,
                stderr,
                envelope,
                margin: envelope - value,
            });
        }
    }
    Ok(rows)
}

/// Fraction of rows with value ≤ envelope + `sigmas`·stderr.
pub fn envelope_coverage(rows: &[EnvelopeRow], sigmas: f64) -> f64 {
    if rows.is_empty() {
        return 1.0;
    }
    let ok = rows
        .iter()
        .filter(|r| r.value <= r.envelope + sigmas * r.stderr)
        .count();
    ok as f64 / rows.len() as f64
}
