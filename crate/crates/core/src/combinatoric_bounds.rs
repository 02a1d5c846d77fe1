//! Combinatoric sums of Beta functions, their Laplace-type asymptotics, and two
//! polynomial inequalities used to compare products of moments.

use crate::error::{Error, Result};
use crate::moment_bounds::k_index;
use crate::quad::{integrate, QuadOptions};
use crate::specfun::{binomial, ln_beta, ln_binomial, ln_gamma_fn, LogSum};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BetaSumRecord {
    pub q: u32,
    pub a: f64,
    pub sum: f64,
    /// sum·(aq)^{1+a}.
    pub bound_ratio: f64,
}

/// Σ_{k=1}^{k_q} C(q−2, k−1)·B(ak+1, a(q−k)+1).
pub fn beta_sum_a4(q: u32, a: f64) -> Result<BetaSumRecord> {
    if q < 3 {
        return Err(Error::domain(format!("q must be >= 3, got {q}")));
    }
    if !(a >= 1.0 && a.is_finite()) {
        return Err(Error::domain(format!("a must be >= 1, got {a}")));
    }
    let qf = f64::from(q);
    let mut acc = LogSum::new();
    for k in 1..=k_index(qf) as u32 {
        let kf = f64::from(k);
        acc.add_ln(ln_binomial(qf - 2.0, k - 1)? + ln_beta(a * kf + 1.0, a * (qf - kf) + 1.0)?);
    }
    let ln_sum = acc.ln();
    Ok(BetaSumRecord {
        q,
        a,
        sum: ln_sum.exp(),
        bound_ratio: (ln_sum + (1.0 + a) * (a * qf).ln()).exp(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BetaSumA5Record {
    pub q: u32,
    pub s: f64,
    pub sum: f64,
    /// sum·q³.
    pub bound_ratio: f64,
}

/// Σ_{k=1}^{1+k_{q/2−2/s}} C(q/2 − 2/s, k−1)·B(2k+1, q−2k+1); the empty sum when q/2 < 2/s.
pub fn beta_sum_a5(q: u32, s: f64) -> Result<BetaSumA5Record> {
    if q < 3 {
        return Err(Error::domain(format!("q must be >= 3, got {q}")));
    }
    if !(s > 0.0 && s <= 1.0) {
        return Err(Error::domain(format!("s must lie in (0, 1], got {s}")));
    }
    let qf = f64::from(q);
    let p = qf / 2.0 - 2.0 / s;
    let mut acc = LogSum::new();
    if p >= 0.0 {
        for k in 1..=(1 + k_index(p)) as u32 {
            let kf = f64::from(k);
            acc.add_ln(ln_binomial(p, k - 1)? + ln_beta(2.0 * kf + 1.0, qf - 2.0 * kf + 1.0)?);
        }
    }
    let sum = acc.value();
    Ok(BetaSumA5Record {
        q,
        s,
        sum,
        bound_ratio: sum * qf.powi(3),
    })
}

/// ∫₀¹ x^a(1−x)^a(x^a + (1−x)^a)^{q−2} dx, the single-integral majorant of the A.4 sum.
pub fn beta_sum_integral_bound(q: u32, a: f64) -> Result<f64> {
    let qf = f64::from(q);
    let f = |x: f64| {
        if x <= 0.0 || x >= 1.0 {
            return 0.0;
        }
        let y = 1.0 - x;
        (a * (x.ln() + y.ln()) + (qf - 2.0) * (x.powf(a) + y.powf(a)).ln()).exp()
    };
    let opts = QuadOptions::new(0.0, 1e-12).with_max_intervals(4000);
    let mut total = 0.0;
    for w in laplace_breaks(a, qf).windows(2) {
        total += integrate(f, w[0], w[1], &opts)?.value;
    }
    Ok(2.0 * total)
}

/// S(x) = ln(x^a + (1−x)^a).
pub fn laplace_phase(a: f64, x: f64) -> f64 {
    (x.powf(a) + (1.0 - x).powf(a)).ln()
}

fn laplace_breaks(a: f64, q: f64) -> Vec<f64> {
    let scale = 1.0 / (a * q);
    let mut b = vec![0.0];
    for m in [0.1, 1.0, 5.0, 20.0, 80.0] {
        let x = m * scale;
        if x < 0.5 {
            b.push(x);
        }
    }
    b.push(0.5);
    b
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LaplaceRow {
    pub q: u32,
    pub integral: f64,
    /// Γ(a+1)(aq)^{−(a+1)}.
    pub reference: f64,
    pub ratio: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LaplaceReport {
    pub a: f64,
    pub rows: Vec<LaplaceRow>,
    /// |ratio_{i+1} − ratio_i| along the grid.
    pub differences: Vec<f64>,
    pub differences_shrink: bool,
}

/// ∫₀^{1/2} x^a g(x)e^{qS(x)} dx against its Laplace asymptote on a grid of q.
pub fn laplace_asymptotic_check(a: f64, q_grid: &[u32]) -> Result<LaplaceReport> {
    if !(a > 1.0) {
        return Err(Error::domain(format!("a must exceed 1, got {a}")));
    }
    if q_grid.is_empty() || !q_grid.windows(2).all(|w| w[0] < w[1]) {
        return Err(Error::domain("q grid must be nonempty and increasing"));
    }
    let ln_g1 = ln_gamma_fn(a + 1.0)?;
    let rows: Result<Vec<LaplaceRow>> = q_grid
        .par_iter()
        .map(|&q| {
            let qf = f64::from(q);
            let f = |x: f64| {
                if x <= 0.0 {
                    return 0.0;
                }
                let y = 1.0 - x;
                let sum = x.powf(a) + y.powf(a);
                (a * x.ln() + a * y.ln() - 2.0 * sum.ln() + qf * sum.ln()).exp()
            };
            let opts = QuadOptions::new(0.0, 1e-12).with_max_intervals(4000);
            let mut integral = 0.0;
            for w in laplace_breaks(a, qf).windows(2) {
                integral += integrate(f, w[0], w[1], &opts)?.value;
            }
            let reference = (ln_g1 - (a + 1.0) * (a * qf).ln()).exp();
            Ok(LaplaceRow {
                q,
                integral,
                reference,
                ratio: integral / reference,
            })
        })
        .collect();
    let rows = rows?;
    let differences: Vec<f64> = rows.windows(2).map(|w| (w[1].ratio - w[0].ratio).abs()).collect();
    let differences_shrink = differences.windows(2).all(|w| w[1] < w[0]);
    Ok(LaplaceReport {
        a,
        rows,
        differences,
        differences_shrink,
    })
}

/// Whether x^a y^{s−a} + x^{s−a}y^a ≤ x^b y^{s−b} + x^{s−b}y^b up to 1e-12 of the larger side.
pub fn poly_inequality_a1(x: f64, y: f64, a: f64, b: f64, s: f64) -> Result<bool> {
    if !(b <= a && a <= s / 2.0) {
        return Err(Error::domain(format!("need b <= a <= s/2, got b={b}, a={a}, s={s}")));
    }
    if !(x >= 0.0 && y >= 0.0) {
        return Err(Error::domain("x and y must be nonnegative"));
    }
    let lhs = x.powf(a) * y.powf(s - a) + x.powf(s - a) * y.powf(a);
    let rhs = x.powf(b) * y.powf(s - b) + x.powf(s - b) * y.powf(b);
    Ok(lhs <= rhs + 1e-12 * lhs.max(rhs))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PolyChain {
    pub lower: f64,
    pub mid: f64,
    pub upper: f64,
    /// The sum from k = 0 to k_p.
    pub full: f64,
    /// 2(x + y)^p.
    pub full_bound: f64,
}

impl PolyChain {
    /// lower ≤ mid ≤ upper and full ≤ full_bound, each with relative slack `rel`.
    pub fn holds(&self, rel: f64) -> bool {
        self.lower <= self.mid * (1.0 + rel)
            && self.mid <= self.upper * (1.0 + rel)
            && self.full <= self.full_bound * (1.0 + rel)
    }
}

/// The two binomial partial sums around (x + y)^p − x^p − y^p.
pub fn poly_inequality_a2(x: f64, y: f64, p: f64) -> Result<PolyChain> {
    if !(p > 1.0) {
        return Err(Error::domain(format!("p must exceed 1, got {p}")));
    }
    if !(x > 0.0 && y > 0.0) {
        return Err(Error::domain("x and y must be positive"));
    }
    let kp = k_index(p) as u32;
    let term = |k: u32| {
        let kf = f64::from(k);
        binomial(p, k) * (x.powf(kf) * y.powf(p - kf) + x.powf(p - kf) * y.powf(kf))
    };
    let lower: f64 = (1..kp).map(term).sum();
    let upper = lower + term(kp);
    let full = upper + term(0);
    let (big, small) = if x >= y { (x, y) } else { (y, x) };
    let r = small / big;
    let mid = big.powf(p) * ((p * r.ln_1p()).exp_m1() - r.powf(p));
    Ok(PolyChain {
        lower,
        mid,
        upper,
        full,
        full_bound: 2.0 * (x + y).powf(p),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub q: u32,
    pub param: f64,
    pub sum: f64,
    pub normalized: f64,
}

pub fn sweep_a4(a: f64, q_grid: &[u32]) -> Result<Vec<SweepRow>> {
    q_grid
        .par_iter()
        .map(|&q| {
            beta_sum_a4(q, a).map(|r| SweepRow {
                q,
                param: a,
                sum: r.sum,
                normalized: r.bound_ratio,
            })
        })
        .collect()
}

pub fn sweep_a5(s: f64, q_grid: &[u32]) -> Result<Vec<SweepRow>> {
    q_grid
        .par_iter()
        .map(|&q| {
            beta_sum_a5(q, s).map(|r| SweepRow {
                q,
                param: s,
                sum: r.sum,
                normalized: r.bound_ratio,
            })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SliceSummary {
    pub param: f64,
    pub max: f64,
    pub min: f64,
    pub max_over_min: f64,
    /// Last grid q ≥ `from` at which the normalized ratio increased.
    pub last_increase: Option<u32>,
    pub nonincreasing_from: u32,
    /// Measured constant: the largest normalized ratio on the slice.
    pub constant: f64,
}

impl SliceSummary {
    pub fn eventually_nonincreasing(&self) -> bool {
        self.last_increase.is_none()
    }
}

/// Summary of one slice; rows with a zero (empty) sum are skipped.
pub fn summarize_slice(rows: &[SweepRow], from: u32) -> Result<SliceSummary> {
    let live: Vec<&SweepRow> = rows.iter().filter(|r| r.sum > 0.0).collect();
    if live.is_empty() {
        return Err(Error::domain("slice has no nonzero sums"));
    }
    let max = live.iter().map(|r| r.normalized).fold(f64::NEG_INFINITY, f64::max);
    let min = live.iter().map(|r| r.normalized).fold(f64::INFINITY, f64::min);
    let last_increase = live
        .windows(2)
        .filter(|w| w[0].q >= from && w[1].normalized > w[0].normalized)
        .map(|w| w[1].q)
        .next_back();
    Ok(SliceSummary {
        param: live[0].param,
        max,
        min,
        max_over_min: max / min,
        last_increase,
        nonincreasing_from: from,
        constant: max,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};

    #[derive(Debug, Clone, Copy, PartialEq)]
    struct Frac(u128, u128);

    fn gcd(a: u128, b: u128) -> u128 {
        if b == 0 {
            a
        } else {
            gcd(b, a % b)
        }
    }

    impl Frac {
        fn new(n: u128, d: u128) -> Frac {
            let g = gcd(n, d);
            Frac(n / g, d / g)
        }
        fn add(self, o: Frac) -> Frac {
            let g = gcd(self.1, o.1);
            Frac::new(self.0 * (o.1 / g) + o.0 * (self.1 / g), self.1 / g * o.1)
        }
        fn mul_int(self, k: u128) -> Frac {
            Frac::new(self.0 * k, self.1)
        }
        fn value(self) -> f64 {
            self.0 as f64 / self.1 as f64
        }
    }

    fn fact(n: u128) -> u128 {
        (1..=n).product()
    }

    fn choose(n: u128, k: u128) -> u128 {
        fact(n) / (fact(k) * fact(n - k))
    }

    /// B(m, n) = (m−1)!(n−1)!/(m+n−1)! for positive integers.
    fn beta_exact(m: u128, n: u128) -> Frac {
        Frac::new(fact(m - 1) * fact(n - 1), fact(m + n - 1))
    }

    fn a4_exact(q: u128, a: u128) -> Frac {
        let kq = q.div_ceil(2);
        (1..=kq).fold(Frac(0, 1), |acc, k| {
            acc.add(beta_exact(a * k + 1, a * (q - k) + 1).mul_int(choose(q - 2, k - 1)))
        })
    }

    #[test]
    fn a4_small_anchors() {
        let r = beta_sum_a4(3, 2.0).unwrap();
        assert_eq!(a4_exact(3, 2), Frac::new(2, 105));
        assert!((r.sum / (2.0 / 105.0) - 1.0).abs() < 1e-12);
        assert_eq!(a4_exact(4, 1), Frac::new(7, 60));
        assert!((beta_sum_a4(4, 1.0).unwrap().sum / (7.0 / 60.0) - 1.0).abs() < 1e-12);
        for (q, a) in [(5, 2), (7, 3), (9, 2), (10, 1)] {
            let exact = a4_exact(q, a).value();
            let got = beta_sum_a4(q as u32, a as f64).unwrap().sum;
            assert!((got / exact - 1.0).abs() < 1e-12, "q={q} a={a}");
        }
        let r = beta_sum_a4(3, 2.0).unwrap();
        assert!((r.bound_ratio - r.sum * 6f64.powi(3)).abs() < 1e-12);
    }

    #[test]
    fn a5_small_anchor() {
        // s = 1, q = 8: C(2,0)B(3,7) + C(2,1)B(5,5)
        let exact = beta_exact(3, 7).add(beta_exact(5, 5).mul_int(2));
        let got = beta_sum_a5(8, 1.0).unwrap();
        assert!((got.sum / exact.value() - 1.0).abs() < 1e-12);
        assert!((got.bound_ratio - got.sum * 512.0).abs() < 1e-12);
    }

    #[test]
    fn a5_empty_sum() {
        for q in 3..8 {
            assert_eq!(beta_sum_a5(q, 0.5).unwrap().sum, 0.0);
        }
        assert_eq!(beta_sum_a5(3, 1.0).unwrap().sum, 0.0);
        assert!(beta_sum_a5(4, 1.0).unwrap().sum > 0.0);
        assert!(beta_sum_a5(10, 1.5).is_err());
    }

    #[test]
    fn a4_below_single_integral() {
        for a in [1.1, 2.0, 3.0] {
            for q in [3, 4, 10, 50, 200] {
                let s = beta_sum_a4(q, a).unwrap().sum;
                let bound = beta_sum_integral_bound(q, a).unwrap();
                assert!(s <= bound * (1.0 + 1e-10), "a={a} q={q}: {s} vs {bound}");
            }
        }
    }

    #[test]
    fn laplace_ratio_at_a2() {
        let r = laplace_asymptotic_check(2.0, &[200]).unwrap();
        assert!((r.rows[0].ratio - 1.0).abs() < 0.1, "{}", r.rows[0].ratio);
    }

    #[test]
    fn laplace_differences_shrink_near_one() {
        let r = laplace_asymptotic_check(1.1, &[50, 100, 200, 400, 800]).unwrap();
        assert!(r.differences_shrink, "{:?}", r.differences);
    }

    #[test]
    fn phase_slope_at_origin() {
        for a in [2.0, 3.0] {
            let h = 1e-6;
            let slope = (laplace_phase(a, h) - laplace_phase(a, 0.0)) / h;
            assert!((slope + a).abs() < 1e-5, "a={a}: {slope}");
        }
    }

    #[test]
    fn a1_equality_cases_and_domain() {
        assert!(poly_inequality_a1(2.0, 2.0, 1.0, 0.5, 4.0).unwrap());
        assert!(poly_inequality_a1(3.0, 0.7, 1.2, 1.2, 5.0).unwrap());
        assert!(poly_inequality_a1(1.0, 1.0, 3.0, 1.0, 4.0).is_err());
        assert!(poly_inequality_a1(1.0, 1.0, 1.0, 2.0, 4.0).is_err());
    }

    #[test]
    fn a2_exact_cases() {
        let c = poly_inequality_a2(1.5, 0.5, 2.0).unwrap();
        assert_eq!(c.lower, 0.0);
        assert!((c.mid - 2.0 * 0.75).abs() < 1e-15);
        assert!((c.upper - 4.0 * 0.75).abs() < 1e-15);
        let c = poly_inequality_a2(1.0, 1.0, 3.0).unwrap();
        assert_eq!((c.lower, c.upper), (6.0, 12.0));
        assert!((c.mid - 6.0).abs() < 1e-14);
        assert!(c.holds(1e-15));
    }

    #[test]
    fn a2_stable_mid_matches_direct_form_when_well_conditioned() {
        let (x, y, p) = (1.3, 0.9, 4.5);
        let c = poly_inequality_a2(x, y, p).unwrap();
        let direct = (x + y).powf(p) - x.powf(p) - y.powf(p);
        assert!((c.mid / direct - 1.0).abs() < 1e-13);
    }

    #[test]
    fn random_sweeps_hold() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        for _ in 0..20_000 {
            let s = rng.random_range(0.0..20.0);
            let a = rng.random_range(0.0..=s / 2.0);
            let b = rng.random_range(0.0..=a);
            let x = rng.random_range(0.0..10.0);
            let y = rng.random_range(0.0..10.0);
            assert!(poly_inequality_a1(x, y, a, b, s).unwrap());
            let p = rng.random_range(1.0..=40.0f64).max(1.0 + 1e-9);
            let c = poly_inequality_a2(x.max(1e-3), y.max(1e-3), p).unwrap();
            assert!(c.holds(1e-12), "{x} {y} {p}: {c:?}");
        }
    }

    #[test]
    fn slices_are_bounded() {
        let grid: Vec<u32> = (3..=300).collect();
        for a in [1.5, 2.0, 3.0] {
            let s = summarize_slice(&sweep_a4(a, &grid).unwrap(), 32).unwrap();
            assert!(s.max_over_min <= 20.0, "a={a}: {}", s.max_over_min);
            assert!(s.eventually_nonincreasing(), "a={a}: {:?}", s.last_increase);
        }
        let grid: Vec<u32> = (8..=400).collect();
        for sv in [0.5, 1.0] {
            let s = summarize_slice(&sweep_a5(sv, &grid).unwrap(), 32).unwrap();
            assert!(s.max_over_min <= 20.0, "s={sv}: {}", s.max_over_min);
        }
    }

    proptest! {
        #[test]
        fn binomial_monotone_in_upper(k in 0u32..12, base in 0.0f64..30.0, extra in 0.0f64..30.0) {
            let a = f64::from(k) + base;
            let at = a + extra;
            prop_assert!(binomial(a, k) <= binomial(at, k) * (1.0 + 1e-13));
        }

        #[test]
        fn beta_gamma_bridge(q in 2u32..300, kf in 0.0f64..1.0, a in 1.0f64..4.0) {
            let k = 1 + ((f64::from(q - 1)) * kf) as u32;
            let (x, y) = (a * f64::from(k) + 1.0, a * f64::from(q - k) + 1.0);
            let lhs = ln_beta(x, y).unwrap() + ln_gamma_fn(a * f64::from(q) + 2.0).unwrap();
            let rhs = ln_gamma_fn(x).unwrap() + ln_gamma_fn(y).unwrap();
            prop_assert!((lhs - rhs).abs() <= 1e-10 * rhs.abs().max(1.0));
        }

        #[test]
        fn a1_holds(s in 0.0f64..20.0, fa in 0.0f64..1.0, fb in 0.0f64..1.0, x in 0.0f64..10.0, y in 0.0f64..10.0) {
            let a = fa * s / 2.0;
            let b = fb * a;
            prop_assert!(poly_inequality_a1(x, y, a, b, s).unwrap());
        }
    }
}
