//! Radially symmetric reference densities and their moments by log-domain
//! radial quadrature.

use crate::error::{Error, Result};
use crate::kernels::sphere_area;
use crate::moment_bounds::{MomentSnapshot, MomentTrajectory, Provenance};
use crate::quad::{integrate, QuadOptions};
use crate::specfun::ln_mittag_leffler;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "profile", rename_all = "snake_case")]
pub enum RadialProfile {
    /// N(0, T·I).
    Maxwellian { temperature: f64 },
    /// ∝ exp(−α⟨v⟩^s).
    StretchedExp { s: f64, alpha: f64 },
}

/// Unit-mass radially symmetric density on R^d.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RadialDensity {
    pub profile: RadialProfile,
    pub dim: usize,
    ln_norm: f64,
}

const DROP: f64 = 760.0;

impl RadialDensity {
    pub fn new(profile: RadialProfile, dim: usize) -> Result<Self> {
        if dim < 1 {
            return Err(Error::domain("dimension must be >= 1"));
        }
        match profile {
            RadialProfile::Maxwellian { temperature } if !(temperature > 0.0) => {
                return Err(Error::domain(format!(
                    "temperature must be positive, got {temperature}"
                )))
            }
            RadialProfile::StretchedExp { s, alpha } if !(s > 0.0 && alpha > 0.0) => {
                return Err(Error::domain(format!("need s > 0 and alpha > 0, got {s}, {alpha}")))
            }
            _ => {}
        }
        let mut d = RadialDensity {
            profile,
            dim,
            ln_norm: 0.0,
        };
        d.ln_norm = d.ln_expectation(|_| 0.0)?;
        Ok(d)
    }

    pub fn maxwellian(temperature: f64, dim: usize) -> Result<Self> {
        Self::new(RadialProfile::Maxwellian { temperature }, dim)
    }

    pub fn stretched(s: f64, alpha: f64, dim: usize) -> Result<Self> {
        Self::new(RadialProfile::StretchedExp { s, alpha }, dim)
    }

    /// ln of the unnormalized density at radius r.
    pub fn ln_profile(&self, r: f64) -> f64 {
        match self.profile {
            RadialProfile::Maxwellian { temperature } => -r * r / (2.0 * temperature),
            RadialProfile::StretchedExp { s, alpha } => -alpha * (1.0 + r * r).powf(s / 2.0),
        }
    }

    /// ln ∫ f(v)·exp(ln_w(|v|)) dv.
    pub fn ln_expectation<W: Fn(f64) -> f64>(&self, ln_w: W) -> Result<f64> {
        let d1 = self.dim as f64 - 1.0;
        let h = |r: f64| {
            if r <= 0.0 {
                if d1 == 0.0 {
                    self.ln_profile(0.0) + ln_w(0.0)
                } else {
                    f64::NEG_INFINITY
                }
            } else {
                d1 * r.ln() + self.ln_profile(r) + ln_w(r)
            }
        };
        // coarse geometric scan for the peak, then golden-section refinement
        let mut best = (f64::NEG_INFINITY, 0.0);
        let mut r = 1e-6;
        let mut prev_r = 0.0;
        let mut bracket = (0.0, 1e-6);
        loop {
            let v = h(r);
            if v.is_nan() {
                return Err(Error::domain("radial integrand is NaN"));
            }
            if v > best.0 {
                best = (v, r);
                bracket = (prev_r, r * 1.05);
            }
            if (best.0 > f64::NEG_INFINITY && v < best.0 - DROP && r > best.1) || r > 1e12 {
                break;
            }
            prev_r = r;
            r *= 1.05;
        }
        if best.0 == f64::NEG_INFINITY || r > 1e12 {
            return Err(Error::Divergence("radial integrand does not decay".into()));
        }
        let (mut lo, mut hi) = bracket;
        let g = 0.5 * (5f64.sqrt() - 1.0);
        for _ in 0..200 {
            let a = hi - g * (hi - lo);
            let b = lo + g * (hi - lo);
            if h(a) < h(b) {
                lo = a;
            } else {
                hi = b;
            }
            if hi - lo <= 1e-15 * hi {
                break;
            }
        }
        let peak = 0.5 * (lo + hi);
        let hmax = h(peak).max(best.0);
        // outer cut where the integrand has dropped by DROP in log
        let mut r_hi = peak.max(1e-6) * 1.01;
        while h(r_hi) > hmax - DROP {
            r_hi = r_hi * 1.1 + 1e-3;
        }
        let mut r_lo = peak;
        while r_lo > 1e-300 && h(r_lo) > hmax - DROP {
            r_lo *= 0.5;
        }
        let r_lo = if r_lo <= 1e-300 { 0.0 } else { r_lo };
        let opts = QuadOptions::new(0.0, 1e-13).with_max_intervals(10_000);
        let f = |r: f64| {
            let v = h(r) - hmax;
            if v < -DROP {
                0.0
            } else {
                v.exp()
            }
        };
        let left = integrate(f, r_lo, peak, &opts)?.value;
        let right = integrate(f, peak, r_hi, &opts)?.value;
        let area = if self.dim == 1 { 2.0 } else { sphere_area(self.dim - 1) };
        Ok(hmax + (left + right).ln() + area.ln() - self.ln_norm)
    }

    /// ln m_q = ln ∫ f⟨v⟩^q dv.
    pub fn ln_moment(&self, q: f64) -> Result<f64> {
        self.ln_expectation(|r| 0.5 * q * (r * r).ln_1p())
    }

    /// ln ∫ f·E_a(α^a⟨v⟩²) dv.
    pub fn ln_ml_moment(&self, a: f64, alpha: f64) -> Result<f64> {
        let scale = alpha.powf(a);
        let failed = std::cell::Cell::new(false);
        let v = self.ln_expectation(|r| match ln_mittag_leffler(a, scale * (1.0 + r * r)) {
            Ok(x) => x,
            Err(_) => {
                failed.set(true);
                f64::MAX
            }
        });
        if failed.get() {
            return Err(Error::Divergence(format!(
                "Mittag-Leffler moment with a={a}, alpha={alpha} is not representable"
            )));
        }
        v
    }

    pub fn snapshot(&self, t: f64, orders: &[f64]) -> Result<MomentSnapshot> {
        let v: Result<Vec<f64>> = orders.iter().map(|&q| self.ln_moment(q)).collect();
        MomentSnapshot::new(t, orders.to_vec(), v?)
    }

    pub fn provenance(&self) -> Provenance {
        match self.profile {
            RadialProfile::Maxwellian { temperature } => Provenance::AnalyticMaxwellian { temperature },
            RadialProfile::StretchedExp { s, alpha } => Provenance::SyntheticTail { s, alpha },
        }
    }

    /// Time-independent trajectory carrying this density's moments.
    pub fn trajectory(&self, times: Vec<f64>, orders: &[f64]) -> Result<MomentTrajectory> {
        let snap = self.snapshot(0.0, orders)?;
        MomentTrajectory::stationary(times, &snap, self.provenance())
    }

    /// Radial CDF table (r_i, F(r_i)) on `n` points covering the mass to 1 − 1e-14.
    pub fn radial_cdf(&self, n: usize) -> Result<Vec<(f64, f64)>> {
        let d1 = self.dim as f64 - 1.0;
        let h = |r: f64| {
            if r <= 0.0 {
                f64::NEG_INFINITY
            } else {
                d1 * r.ln() + self.ln_profile(r)
            }
        };
        let mut r_hi = 1.0;
        let peak = {
            let mut best = (f64::NEG_INFINITY, 0.0);
            let mut r = 1e-6;
            while r < 1e9 {
                if h(r) > best.0 {
                    best = (h(r), r);
                }
                if h(r) < best.0 - 40.0 && r > best.1 {
                    break;
                }
                r *= 1.02;
            }
            best
        };
        while h(r_hi) > peak.0 - 40.0 || r_hi < peak.1 {
            r_hi *= 1.2;
        }
        let opts = QuadOptions::new(0.0, 1e-12);
        let f = |r: f64| (h(r) - peak.0).exp();
        let mut table = Vec::with_capacity(n);
        let mut acc = 0.0;
        let mut prev = 0.0;
        table.push((0.0, 0.0));
        for i in 1..n {
            let r = r_hi * i as f64 / (n - 1) as f64;
            acc += integrate(f, prev, r, &opts)?.value;
            table.push((r, acc));
            prev = r;
        }
        let total = acc;
        Ok(table.into_iter().map(|(r, c)| (r, c / total)).collect())
    }
}

/// m_0, m_2, m_4 of N(0, T·I) in closed form.
pub fn maxwellian_low_moments(temperature: f64, dim: usize) -> [f64; 3] {
    let d = dim as f64;
    let t = temperature;
    [1.0, 1.0 + d * t, 1.0 + 2.0 * d * t + d * (d + 2.0) * t * t]
}
