//! Direct simulation Monte Carlo for the space-homogeneous Boltzmann equation
//! with hard potentials and angularly truncated kernels.
//!
//! Each step shuffles the particles, pairs neighbours, and lets every pair
//! collide with probability dt·Λ·|u|^γ·(N−1)/N. Pairs are processed in fixed
//! chunks, each with its own counter-based random block, so results do not
//! depend on the number of worker threads.

use crate::analytic::RadialDensity;
use crate::error::{Error, Result};
use crate::kernels::{sphere_area, AngularFamily, AngularKernel, CollisionKernel};
use crate::moment_bounds::{MomentTrajectory, Provenance};
use crate::povzner::any_orthogonal;
use crate::quad::{integrate, QuadOptions};
use crate::rng::{self, streams};
use crate::specfun::LogSum;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;
use std::sync::Arc;

pub const MIN_PARTICLES: usize = 1000;
pub const MAX_DIM: usize = 8;
/// Upper limit on dt·Λ·(2 max|v|)^γ.
pub const MAJORANT_LIMIT: f64 = 0.1;
const PAIRS_PER_CHUNK: usize = 1024;
const MOMENT_CHUNK: usize = 4096;
const TABLE_SIZE: usize = 4096;

/// Rows indexed by snapshot, columns by order.
type Grid = Vec<Vec<f64>>;

/// Inverse-CDF table for θ under the angular density b(cos θ)sin^{d−2}θ.
#[derive(Debug, Clone, PartialEq)]
pub struct AngularSampler {
    thetas: Vec<f64>,
    cdf: Vec<f64>,
    /// ∫ density over the support.
    pub mass: f64,
    pub floor: f64,
}

impl AngularSampler {
    pub fn new(kernel: &AngularKernel) -> Result<Self> {
        let floor = match kernel.family {
            AngularFamily::PowerLawSingular { .. } => {
                return Err(Error::domain("DSMC needs a truncated or bounded angular kernel"))
            }
            AngularFamily::GradBounded { .. } => 0.0,
            AngularFamily::TruncatedSingular { theta_min, .. } => theta_min,
        };
        let thetas: Vec<f64> = if floor > 0.0 {
            let r = (PI / floor).ln();
            (0..TABLE_SIZE)
                .map(|i| floor * (r * i as f64 / (TABLE_SIZE - 1) as f64).exp())
                .collect()
        } else {
            (0..TABLE_SIZE)
                .map(|i| PI * i as f64 / (TABLE_SIZE - 1) as f64)
                .collect()
        };
        let opts = QuadOptions::new(0.0, 1e-13);
        let mut cdf = Vec::with_capacity(TABLE_SIZE);
        cdf.push(0.0);
        let mut acc = 0.0;
        for w in thetas.windows(2) {
            acc += integrate(|t| kernel.density(t), w[0], w[1], &opts)?.value;
            cdf.push(acc);
        }
        if !(acc > 0.0 && acc.is_finite()) {
            return Err(Error::domain("angular kernel has no finite positive mass"));
        }
        cdf.iter_mut().for_each(|c| *c /= acc);
        Ok(AngularSampler {
            thetas,
            cdf,
            mass: acc,
            floor,
        })
    }

    /// θ with P(θ ≤ sample(u)) = u.
    pub fn sample(&self, u: f64) -> f64 {
        let i = self.cdf.partition_point(|&c| c < u).clamp(1, TABLE_SIZE - 1);
        let (c0, c1) = (self.cdf[i - 1], self.cdf[i]);
        let w = if c1 > c0 { (u - c0) / (c1 - c0) } else { 0.0 };
        self.thetas[i - 1] + w.clamp(0.0, 1.0) * (self.thetas[i] - self.thetas[i - 1])
    }

    /// Λ = |S^{d−2}|·∫ b sin^{d−2}: the total collision rate per unit |u|^γ.
    pub fn rate_constant(&self, dim: usize) -> f64 {
        sphere_area(dim - 2) * self.mass
    }

    /// Fraction of the mass at angles ≥ θ.
    pub fn mass_above(&self, theta: f64) -> f64 {
        if theta <= self.floor {
            return 1.0;
        }
        let i = self.thetas.partition_point(|&t| t < theta).clamp(1, TABLE_SIZE - 1);
        let (t0, t1) = (self.thetas[i - 1], self.thetas[i]);
        let w = ((theta - t0) / (t1 - t0)).clamp(0.0, 1.0);
        1.0 - (self.cdf[i - 1] + w * (self.cdf[i] - self.cdf[i - 1]))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum InitialCondition {
    Maxwellian {
        temperature: f64,
    },
    /// Half the particles around +Δv/2·e₁ at T₁, half around −Δv/2·e₁ at T₂.
    ShiftedBiMaxwellian {
        t1: f64,
        t2: f64,
        shift: f64,
    },
    /// Uniform in the ball of radius R.
    CompactSupport {
        radius: f64,
    },
    /// Radial density ∝ exp(−α₀⟨v⟩^{s₀}).
    HeavyTail {
        s0: f64,
        alpha0: f64,
    },
}

impl InitialCondition {
    fn validate(&self) -> Result<()> {
        let ok = match *self {
            InitialCondition::Maxwellian { temperature } => temperature > 0.0,
            InitialCondition::ShiftedBiMaxwellian { t1, t2, shift } => t1 > 0.0 && t2 > 0.0 && shift.is_finite(),
            InitialCondition::CompactSupport { radius } => radius > 0.0 && radius.is_finite(),
            InitialCondition::HeavyTail { s0, alpha0 } => s0 > 0.0 && s0 <= 2.0 && alpha0 > 0.0,
        };
        if ok {
            Ok(())
        } else {
            Err(Error::domain(format!("invalid initial condition {self:?}")))
        }
    }

    /// N velocities in R^d, recentred to zero total momentum.
    pub fn sample(&self, n: usize, dim: usize, seed: u64) -> Result<Vec<f64>> {
        self.validate()?;
        if !(2..=MAX_DIM).contains(&dim) {
            return Err(Error::domain(format!("dimension must lie in 2..={MAX_DIM}, got {dim}")));
        }
        let mut rng = rng::stream(seed, streams::INITIAL_CONDITION);
        let mut v = vec![0.0; n * dim];
        let gauss = |rng: &mut ChaCha8Rng| -> f64 { rng.sample(StandardNormal) };
        match *self {
            InitialCondition::Maxwellian { temperature } => {
                let s = temperature.sqrt();
                v.iter_mut().for_each(|x| *x = s * gauss(&mut rng));
            }
            InitialCondition::ShiftedBiMaxwellian { t1, t2, shift } => {
                for (i, p) in v.chunks_exact_mut(dim).enumerate() {
                    let (s, c) = if i % 2 == 0 {
                        (t1.sqrt(), 0.5 * shift)
                    } else {
                        (t2.sqrt(), -0.5 * shift)
                    };
                    p.iter_mut().for_each(|x| *x = s * gauss(&mut rng));
                    p[0] += c;
                }
            }
            InitialCondition::CompactSupport { radius } => {
                for p in v.chunks_exact_mut(dim) {
                    let r = radius * rng.random::<f64>().powf(1.0 / dim as f64);
                    random_direction(p, &mut rng);
                    p.iter_mut().for_each(|x| *x *= r);
                }
            }
            InitialCondition::HeavyTail { s0, alpha0 } => {
                let table = RadialDensity::stretched(s0, alpha0, dim)?.radial_cdf(8192)?;
                for p in v.chunks_exact_mut(dim) {
                    let u: f64 = rng.random();
                    let i = table.partition_point(|&(_, c)| c < u).clamp(1, table.len() - 1);
                    let ((r0, c0), (r1, c1)) = (table[i - 1], table[i]);
                    let w = if c1 > c0 { (u - c0) / (c1 - c0) } else { 0.0 };
                    let r = r0 + w * (r1 - r0);
                    random_direction(p, &mut rng);
                    p.iter_mut().for_each(|x| *x *= r);
                }
            }
        }
        for j in 0..dim {
            let mean = v.iter().skip(j).step_by(dim).sum::<f64>() / n as f64;
            v.iter_mut().skip(j).step_by(dim).for_each(|x| *x -= mean);
        }
        Ok(v)
    }
}

fn random_direction(p: &mut [f64], rng: &mut ChaCha8Rng) {
    loop {
        p.iter_mut().for_each(|x| *x = rng.sample(StandardNormal));
        let l = p.iter().map(|x| x * x).sum::<f64>().sqrt();
        if l > 1e-12 {
            p.iter_mut().for_each(|x| *x /= l);
            return;
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct StepStats {
    pub dt: f64,
    pub majorant: f64,
    pub collisions: u64,
}

#[derive(Debug, Clone)]
pub struct ParticleEnsemble {
    pub dim: usize,
    velocities: Vec<f64>,
    scratch: Vec<f64>,
    pub t: f64,
    pub seed: u64,
    pub steps: u64,
    pub collisions: u64,
    pub kernel: CollisionKernel,
    sampler: Arc<AngularSampler>,
}

impl ParticleEnsemble {
    pub fn new(velocities: Vec<f64>, kernel: CollisionKernel, seed: u64) -> Result<Self> {
        let dim = kernel.dim();
        if !(2..=MAX_DIM).contains(&dim) {
            return Err(Error::domain(format!("dimension must lie in 2..={MAX_DIM}, got {dim}")));
        }
        if !velocities.len().is_multiple_of(dim) || velocities.iter().any(|x| !x.is_finite()) {
            return Err(Error::domain(
                "velocities must be finite and a multiple of the dimension",
            ));
        }
        let sampler = Arc::new(AngularSampler::new(&kernel.angular)?);
        Ok(ParticleEnsemble {
            dim,
            scratch: vec![0.0; velocities.len()],
            velocities,
            t: 0.0,
            seed,
            steps: 0,
            collisions: 0,
            kernel,
            sampler,
        })
    }

    pub fn from_initial(ic: &InitialCondition, kernel: CollisionKernel, n: usize, seed: u64) -> Result<Self> {
        if n < MIN_PARTICLES {
            return Err(Error::domain(format!(
                "need at least {MIN_PARTICLES} particles, got {n}"
            )));
        }
        Self::new(ic.sample(n, kernel.dim(), seed)?, kernel, seed)
    }

    pub fn len(&self) -> usize {
        self.velocities.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.velocities.is_empty()
    }

    pub fn velocities(&self) -> &[f64] {
        &self.velocities
    }

    pub fn sampler(&self) -> &AngularSampler {
        &self.sampler
    }

    pub fn rate_constant(&self) -> f64 {
        self.sampler.rate_constant(self.dim)
    }

    pub fn max_speed(&self) -> f64 {
        self.velocities
            .par_chunks(self.dim * MOMENT_CHUNK)
            .map(|c| {
                c.chunks_exact(self.dim)
                    .map(|p| p.iter().map(|x| x * x).sum::<f64>())
                    .fold(0.0, f64::max)
            })
            .reduce(|| 0.0, f64::max)
            .sqrt()
    }

    /// dt·Λ·(2 max|v|)^γ.
    pub fn majorant(&self, dt: f64) -> f64 {
        dt * self.rate_constant() * (2.0 * self.max_speed()).powf(self.kernel.gamma)
    }

    /// Largest dt with majorant ≤ `fraction`·limit.
    pub fn stable_dt(&self, fraction: f64) -> f64 {
        let m = self.rate_constant() * (2.0 * self.max_speed()).powf(self.kernel.gamma);
        if m > 0.0 {
            fraction * MAJORANT_LIMIT / m
        } else {
            f64::INFINITY
        }
    }

    pub fn step(&mut self, dt: f64) -> Result<StepStats> {
        let sampler = Arc::clone(&self.sampler);
        self.step_coupled(dt, &sampler, sampler.floor)
    }

    /// One step with angles drawn from `sampler` and collisions at θ < `accept_floor` discarded.
    fn step_coupled(&mut self, dt: f64, sampler: &AngularSampler, accept_floor: f64) -> Result<StepStats> {
        if !(dt > 0.0 && dt.is_finite()) {
            return Err(Error::domain(format!("dt must be positive, got {dt}")));
        }
        let lambda = sampler.rate_constant(self.dim);
        let v_max = self.max_speed();
        let majorant = dt * lambda * (2.0 * v_max).powf(self.kernel.gamma);
        if majorant > MAJORANT_LIMIT {
            return Err(Error::DtTooLarge {
                majorant,
                limit: MAJORANT_LIMIT,
            });
        }
        let n = self.len();
        let d = self.dim;
        self.shuffle();
        let p_scale = dt * lambda * (n as f64 - 1.0) / n as f64;
        let p_max = p_scale * (2.0 * v_max).powf(self.kernel.gamma) * (1.0 + 1e-12);
        let gamma = self.kernel.gamma;
        let (seed, step) = (self.seed, self.steps);
        let paired = (n / 2) * 2 * d;
        let collisions: u64 = self.velocities[..paired]
            .par_chunks_mut(2 * d * PAIRS_PER_CHUNK)
            .enumerate()
            .map(|(c, chunk)| {
                let mut r = rng::block(seed, step, c as u64);
                collide_chunk(chunk, d, &mut r, p_scale, p_max, gamma, sampler, accept_floor)
            })
            .sum();
        self.t += dt;
        self.steps += 1;
        self.collisions += collisions;
        Ok(StepStats {
            dt,
            majorant,
            collisions,
        })
    }

    fn shuffle(&mut self) {
        let n = self.len();
        let d = self.dim;
        let mut perm: Vec<u32> = (0..n as u32).collect();
        let mut r = rng::block(self.seed, streams::PAIRING, self.steps);
        for i in (1..n).rev() {
            let j = r.random_range(0..=i as u32) as usize;
            perm.swap(i, j);
        }
        let src = &self.velocities;
        self.scratch
            .par_chunks_mut(d * MOMENT_CHUNK)
            .enumerate()
            .for_each(|(c, out)| {
                for (k, p) in out.chunks_exact_mut(d).enumerate() {
                    let from = perm[c * MOMENT_CHUNK + k] as usize;
                    p.copy_from_slice(&src[from * d..from * d + d]);
                }
            });
        std::mem::swap(&mut self.velocities, &mut self.scratch);
    }

    pub fn momentum(&self) -> Vec<f64> {
        let d = self.dim;
        let parts: Vec<Vec<f64>> = self
            .velocities
            .par_chunks(d * MOMENT_CHUNK)
            .map(|c| {
                let mut s = vec![0.0; d];
                for p in c.chunks_exact(d) {
                    s.iter_mut().zip(p).for_each(|(a, b)| *a += b);
                }
                s
            })
            .collect();
        let mut total = vec![0.0; d];
        for p in parts {
            total.iter_mut().zip(p).for_each(|(a, b)| *a += b);
        }
        total.iter_mut().for_each(|x| *x /= self.len() as f64);
        total
    }

    /// (1/N)Σ|v_i|².
    pub fn energy(&self) -> f64 {
        let parts: Vec<f64> = self
            .velocities
            .par_chunks(self.dim * MOMENT_CHUNK)
            .map(|c| c.iter().map(|x| x * x).sum::<f64>())
            .collect();
        parts.iter().sum::<f64>() / self.len() as f64
    }

    /// ln m_q and the standard error of m_q for each order.
    pub fn moments(&self, orders: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let d = self.dim;
        let k = orders.len();
        let parts: Vec<Vec<LogSum>> = self
            .velocities
            .par_chunks(d * MOMENT_CHUNK)
            .map(|c| {
                let mut acc = vec![LogSum::new(); 2 * k];
                for p in c.chunks_exact(d) {
                    let lb = 0.5 * p.iter().map(|x| x * x).sum::<f64>().ln_1p();
                    for (j, &q) in orders.iter().enumerate() {
                        acc[j].add_ln(q * lb);
                        acc[k + j].add_ln(2.0 * q * lb);
                    }
                }
                acc
            })
            .collect();
        let mut total = vec![LogSum::new(); 2 * k];
        for p in &parts {
            total.iter_mut().zip(p).for_each(|(a, b)| a.merge(b));
        }
        let ln_n = (self.len() as f64).ln();
        let ln_m: Vec<f64> = (0..k).map(|j| total[j].ln() - ln_n).collect();
        let stderr = (0..k)
            .map(|j| {
                let rel_var = (total[k + j].ln() - ln_n - 2.0 * ln_m[j]).exp_m1().max(0.0);
                ln_m[j].exp() * (rel_var / self.len() as f64).sqrt()
            })
            .collect();
        (ln_m, stderr)
    }
}

#[allow(clippy::too_many_arguments)]
fn collide_chunk(
    chunk: &mut [f64],
    d: usize,
    r: &mut ChaCha8Rng,
    p_scale: f64,
    p_max: f64,
    gamma: f64,
    sampler: &AngularSampler,
    accept_floor: f64,
) -> u64 {
    let mut count = 0;
    let mut g = [0.0; MAX_DIM];
    let mut uh = [0.0; MAX_DIM];
    for pair in chunk.chunks_exact_mut(2 * d) {
        // two words per pair whatever happens, so coupled runs stay aligned
        let ua: f64 = r.random();
        let key: u64 = r.random();
        if ua >= p_max {
            continue;
        }
        let (a, b) = pair.split_at_mut(d);
        let mut un2 = 0.0;
        for i in 0..d {
            uh[i] = a[i] - b[i];
            un2 += uh[i] * uh[i];
        }
        if un2 == 0.0 {
            continue;
        }
        let un = un2.sqrt();
        let rate = if gamma == 1.0 { un } else { un.powf(gamma) };
        if ua >= p_scale * rate {
            continue;
        }
        let mut pr = ChaCha8Rng::seed_from_u64(key);
        let ut: f64 = pr.random();
        for x in g.iter_mut().take(d) {
            *x = pr.sample(StandardNormal);
        }
        let theta = sampler.sample(ut);
        if theta < accept_floor {
            continue;
        }
        uh.iter_mut().take(d).for_each(|x| *x /= un);
        let c: f64 = (0..d).map(|i| g[i] * uh[i]).sum();
        for i in 0..d {
            g[i] -= c * uh[i];
        }
        let gl = g[..d].iter().map(|x| x * x).sum::<f64>().sqrt();
        if gl > 1e-12 {
            g.iter_mut().take(d).for_each(|x| *x /= gl);
        } else {
            let o = any_orthogonal(&uh[..d]);
            g[..d].copy_from_slice(&o);
        }
        scatter(a, b, &uh[..d], &g[..d], un, theta);
        count += 1;
    }
    count
}

/// Post-collision velocities: V ± |u|σ/2 with σ = cos θ û + sin θ ω.
fn scatter(a: &mut [f64], b: &mut [f64], u_hat: &[f64], omega: &[f64], u_norm: f64, theta: f64) {
    let (s, c) = theta.sin_cos();
    let half = 0.5 * u_norm;
    for i in 0..a.len() {
        let center = 0.5 * (a[i] + b[i]);
        let sig = c * u_hat[i] + s * omega[i];
        a[i] = center + half * sig;
        b[i] = center - half * sig;
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DtPolicy {
    pub max_dt: f64,
    /// Fraction of the majorant limit used by the adaptive step.
    pub safety: f64,
}

impl Default for DtPolicy {
    fn default() -> Self {
        DtPolicy {
            max_dt: 0.05,
            safety: 0.5,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSpec {
    pub ic: InitialCondition,
    pub kernel: CollisionKernel,
    pub horizon: f64,
    pub snapshots: Vec<f64>,
    pub orders: Vec<f64>,
    pub particles: usize,
    pub seed: u64,
    pub dt: DtPolicy,
    /// Particles used by the entropy estimator at each snapshot; 0 disables it.
    pub entropy_points: usize,
    /// Largest number of pair tests allowed; checked up front from the first
    /// step size and again while running.
    #[serde(default)]
    pub budget: Option<f64>,
}

impl RunSpec {
    fn validate(&self) -> Result<()> {
        if self.snapshots.is_empty() || !self.snapshots.windows(2).all(|w| w[0] < w[1]) || self.snapshots[0] < 0.0 {
            return Err(Error::domain(
                "snapshot times must be nonnegative and strictly increasing",
            ));
        }
        if *self.snapshots.last().expect("nonempty") > self.horizon * (1.0 + 1e-12) {
            return Err(Error::domain("snapshot times must not exceed the horizon"));
        }
        if !(self.dt.max_dt > 0.0 && self.dt.safety > 0.0 && self.dt.safety <= 1.0) {
            return Err(Error::domain("dt policy needs max_dt > 0 and safety in (0, 1]"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EntropyPoint {
    pub t: f64,
    /// Differential entropy estimate −∫f ln f.
    pub entropy: f64,
    pub stderr: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DsmcRun {
    pub trajectory: MomentTrajectory,
    pub steps: u64,
    pub collisions: u64,
    /// max over snapshots of |E(t) − E(0)|/E(0).
    pub energy_drift: f64,
    pub entropy: Vec<EntropyPoint>,
}

fn next_dt(e: &ParticleEnsemble, policy: &DtPolicy, lambda: f64, target: f64) -> f64 {
    let m = lambda * (2.0 * e.max_speed()).powf(e.kernel.gamma);
    let stable = if m > 0.0 {
        policy.safety * MAJORANT_LIMIT / m
    } else {
        f64::INFINITY
    };
    let dt = stable.min(policy.max_dt);
    let rest = target - e.t;
    if dt >= rest * (1.0 - 1e-9) {
        rest
    } else {
        dt
    }
}

pub fn run(spec: &RunSpec) -> Result<DsmcRun> {
    spec.validate()?;
    let mut e = ParticleEnsemble::from_initial(&spec.ic, spec.kernel, spec.particles, spec.seed)?;
    let lambda = e.rate_constant();
    let budget = spec.budget.unwrap_or(f64::INFINITY);
    let pairs_per_step = (spec.particles / 2) as f64;
    let projected = (spec.horizon / next_dt(&e, &spec.dt, lambda, spec.horizon)).ceil() * pairs_per_step;
    if projected > budget {
        return Err(Error::Budget { projected, budget });
    }
    let e0 = e.energy();
    let mut ln_rows = Vec::new();
    let mut se_rows = Vec::new();
    let mut entropy = Vec::new();
    let mut drift: f64 = 0.0;
    for &ts in &spec.snapshots {
        while e.t < ts * (1.0 - 1e-12) - 1e-300 {
            let dt = next_dt(&e, &spec.dt, lambda, ts);
            e.step(dt)?;
            if e.steps as f64 * pairs_per_step > budget {
                return Err(Error::Budget {
                    projected: e.steps as f64 * pairs_per_step,
                    budget,
                });
            }
        }
        e.t = ts;
        let (l, s) = e.moments(&spec.orders);
        ln_rows.push(l);
        se_rows.push(s);
        drift = drift.max(((e.energy() - e0) / e0).abs());
        if spec.entropy_points > 0 {
            let (h, se) = knn_entropy(e.velocities(), e.dim, spec.entropy_points, spec.seed ^ e.steps);
            entropy.push(EntropyPoint {
                t: ts,
                entropy: h,
                stderr: se,
            });
        }
    }
    let trajectory = MomentTrajectory::from_ln(
        spec.snapshots.clone(),
        spec.orders.clone(),
        ln_rows,
        Some(se_rows),
        Provenance::Simulated,
    )?;
    Ok(DsmcRun {
        trajectory,
        steps: e.steps,
        collisions: e.collisions,
        energy_drift: drift,
        entropy,
    })
}

/// Kozachenko–Leonenko nearest-neighbour entropy estimate on at most `max_points`
/// particles, with the standard error of its sample mean.
pub fn knn_entropy(velocities: &[f64], dim: usize, max_points: usize, seed: u64) -> (f64, f64) {
    let n_all = velocities.len() / dim;
    let mut idx: Vec<usize> = (0..n_all).collect();
    if n_all > max_points {
        let mut r = rng::stream(seed, streams::ENTROPY);
        for i in 0..max_points {
            let j = r.random_range(i..n_all);
            idx.swap(i, j);
        }
        idx.truncate(max_points);
    }
    let pts: Vec<&[f64]> = idx.iter().map(|&i| &velocities[i * dim..i * dim + dim]).collect();
    let n = pts.len();
    let logs: Vec<f64> = (0..n)
        .into_par_iter()
        .map(|i| {
            let mut best = f64::INFINITY;
            for (j, p) in pts.iter().enumerate() {
                if j != i {
                    let d2: f64 = pts[i].iter().zip(*p).map(|(a, b)| (a - b) * (a - b)).sum();
                    best = best.min(d2);
                }
            }
            0.5 * dim as f64 * best.max(1e-300).ln()
        })
        .collect();
    let d = dim as f64;
    let ln_ball = 0.5 * d * PI.ln() - crate::specfun::ln_gamma_fn(0.5 * d + 1.0).expect("positive argument");
    // ψ(n) − ψ(1) = H_{n−1}
    let harmonic: f64 = (1..n).map(|j| 1.0 / j as f64).sum();
    let mean = logs.iter().sum::<f64>() / n as f64;
    let var = logs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n as f64 - 1.0);
    (harmonic + ln_ball + mean, (var / n as f64).sqrt())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TruncationSpec {
    pub ic: InitialCondition,
    /// Kernel at the coarsest level; its truncation angle is replaced per level.
    pub kernel: CollisionKernel,
    /// Decreasing truncation angles.
    pub theta_mins: Vec<f64>,
    pub horizon: f64,
    pub snapshots: Vec<f64>,
    pub orders: Vec<f64>,
    pub particles: usize,
    pub seed: u64,
    pub dt: DtPolicy,
    /// Largest number of pair tests allowed across all levels.
    pub budget: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TruncationLevel {
    pub theta_min: f64,
    pub trajectory: MomentTrajectory,
    pub collisions: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TruncationReport {
    pub levels: Vec<TruncationLevel>,
    pub projected_pair_tests: f64,
    pub pair_tests: f64,
}

impl TruncationReport {
    /// |m_q^{(l+1)}(t) − m_q^{(l)}(t)| between successive levels.
    pub fn cauchy(&self, t: f64, q: f64) -> Result<Vec<f64>> {
        let vals: Result<Vec<f64>> = self
            .levels
            .iter()
            .map(|l| l.trajectory.snapshot(t)?.moment(q))
            .collect();
        Ok(vals?.windows(2).map(|w| (w[1] - w[0]).abs()).collect())
    }

    pub fn differences_shrink(&self, t: f64, q: f64) -> Result<bool> {
        Ok(self.cauchy(t, q)?.windows(2).all(|w| w[1] < w[0]))
    }
}

/// Runs every truncation level in lockstep on common random numbers: angles
/// come from the finest truncation and each level discards those below its own.
pub fn truncation_study(spec: &TruncationSpec) -> Result<TruncationReport> {
    if spec.theta_mins.is_empty() || !spec.theta_mins.windows(2).all(|w| w[0] > w[1]) {
        return Err(Error::domain("truncation angles must be nonempty and decreasing"));
    }
    RunSpec {
        ic: spec.ic,
        kernel: spec.kernel,
        horizon: spec.horizon,
        snapshots: spec.snapshots.clone(),
        orders: spec.orders.clone(),
        particles: spec.particles,
        seed: spec.seed,
        dt: spec.dt,
        entropy_points: 0,
        budget: None,
    }
    .validate()?;
    let finest = spec
        .kernel
        .angular
        .with_theta_min(*spec.theta_mins.last().expect("nonempty"))?;
    let sampler = AngularSampler::new(&finest)?;
    let mut ensembles = Vec::with_capacity(spec.theta_mins.len());
    for &tm in &spec.theta_mins {
        let k = CollisionKernel::new(spec.kernel.gamma, spec.kernel.angular.with_theta_min(tm)?)?;
        ensembles.push(ParticleEnsemble::from_initial(&spec.ic, k, spec.particles, spec.seed)?);
    }
    let lambda = sampler.rate_constant(finest.dim);
    let floors: Vec<f64> = ensembles.iter().map(|e| e.sampler.floor).collect();
    let common_dt = |es: &[ParticleEnsemble], target: f64| {
        es.iter()
            .map(|e| next_dt(e, &spec.dt, lambda, target))
            .fold(f64::INFINITY, f64::min)
    };
    let dt0 = common_dt(&ensembles, spec.horizon);
    let pairs_per_step = (spec.particles / 2) as f64 * spec.theta_mins.len() as f64;
    let projected = (spec.horizon / dt0).ceil() * pairs_per_step;
    if projected > spec.budget {
        return Err(Error::Budget {
            projected,
            budget: spec.budget,
        });
    }
    let mut rows: Vec<(Grid, Grid)> = vec![(Vec::new(), Vec::new()); ensembles.len()];
    let mut pair_tests = 0.0;
    for &ts in &spec.snapshots {
        while ensembles[0].t < ts * (1.0 - 1e-12) - 1e-300 {
            let dt = common_dt(&ensembles, ts);
            for (e, &floor) in ensembles.iter_mut().zip(&floors) {
                e.step_coupled(dt, &sampler, floor)?;
            }
            pair_tests += pairs_per_step;
            if pair_tests > spec.budget {
                return Err(Error::Budget {
                    projected: pair_tests,
                    budget: spec.budget,
                });
            }
        }
        for (e, row) in ensembles.iter_mut().zip(rows.iter_mut()) {
            e.t = ts;
            let (l, s) = e.moments(&spec.orders);
            row.0.push(l);
            row.1.push(s);
        }
    }
    let mut levels = Vec::with_capacity(ensembles.len());
    for ((e, (l, s)), &tm) in ensembles.iter().zip(rows).zip(&spec.theta_mins) {
        levels.push(TruncationLevel {
            theta_min: tm,
            trajectory: MomentTrajectory::from_ln(
                spec.snapshots.clone(),
                spec.orders.clone(),
                l,
                Some(s),
                Provenance::Simulated,
            )?,
            collisions: e.collisions,
        });
    }
    Ok(TruncationReport {
        levels,
        projected_pair_tests: projected,
        pair_tests,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::analytic::maxwellian_low_moments;

    fn speed(p: &[f64]) -> f64 {
        p.iter().map(|x| x * x).sum::<f64>().sqrt()
    }

    fn hard_spheres(dim: usize) -> CollisionKernel {
        let b0 = 1.0 / sphere_area(dim - 1);
        CollisionKernel::new(1.0, AngularKernel::bounded(b0, dim).unwrap()).unwrap()
    }

    #[test]
    fn sampler_matches_closed_form_cdf() {
        // bounded b in d = 3: F(θ) = (1 − cos θ)/2
        let s = AngularSampler::new(&AngularKernel::bounded(1.0, 3).unwrap()).unwrap();
        for u in [0.01f64, 0.2, 0.5, 0.9, 0.999] {
            let exact = (1.0 - 2.0 * u).acos();
            assert!((s.sample(u) - exact).abs() < 1e-5, "u={u}");
        }
        // truncated θ^{−2} on [θ_min, π]: F = (1/θ_min − 1/θ)/(1/θ_min − 1/π)
        let tm = 0.01;
        let s = AngularSampler::new(&AngularKernel::truncated(1.0, tm, 3).unwrap()).unwrap();
        let z = 1.0 / tm - 1.0 / PI;
        assert!((s.mass - z).abs() < 1e-9 * z);
        for u in [0.01, 0.5, 0.99] {
            let exact = 1.0 / (1.0 / tm - u * z);
            assert!((s.sample(u) / exact - 1.0).abs() < 1e-4, "u={u}");
        }
        assert!((s.mass_above(0.1) - (10.0 - 1.0 / PI) / z).abs() < 1e-4);
        assert!(AngularSampler::new(&AngularKernel::power_law(1.0, 3).unwrap()).is_err());
    }

    #[test]
    fn cold_ensemble_is_invariant() {
        let v: Vec<f64> = (0..3000).map(|i| [0.3, -0.1, 0.7][i % 3]).collect();
        let mut e = ParticleEnsemble::new(v, hard_spheres(3), 1).unwrap();
        for _ in 0..5 {
            e.step(0.01).unwrap();
        }
        assert_eq!(e.collisions, 0);
        assert!(e.velocities().chunks_exact(3).all(|p| p == [0.3, -0.1, 0.7]));
    }

    #[test]
    fn scatter_limits() {
        let (a0, b0) = ([1.0, 0.5, -0.2], [-0.3, 0.1, 0.4]);
        let u: Vec<f64> = a0.iter().zip(&b0).map(|(x, y)| x - y).collect();
        let un = speed(&u);
        let uh: Vec<f64> = u.iter().map(|x| x / un).collect();
        let om = any_orthogonal(&uh);
        let (mut a, mut b) = (a0, b0);
        scatter(&mut a, &mut b, &uh, &om, un, 0.0);
        for i in 0..3 {
            assert!((a[i] - a0[i]).abs() < 1e-15 && (b[i] - b0[i]).abs() < 1e-15);
        }
        scatter(&mut a, &mut b, &uh, &om, un, PI);
        for i in 0..3 {
            assert!((a[i] - b0[i]).abs() < 1e-15 && (b[i] - a0[i]).abs() < 1e-15);
        }
        let (mut a, mut b) = (a0, b0);
        scatter(&mut a, &mut b, &uh, &om, un, 1.1);
        let ke = |p: &[f64; 3], q: &[f64; 3]| speed(p).powi(2) + speed(q).powi(2);
        assert!((ke(&a, &b) - ke(&a0, &b0)).abs() < 1e-14);
        let cos = (0..3).map(|i| (a[i] - b[i]) * uh[i]).sum::<f64>() / un;
        assert!((cos - 1.1f64.cos()).abs() < 1e-14);
    }

    #[test]
    fn dt_guard_reports_majorant() {
        let mut e = ParticleEnsemble::from_initial(
            &InitialCondition::Maxwellian { temperature: 1.0 },
            hard_spheres(3),
            2000,
            3,
        )
        .unwrap();
        match e.step(1.0) {
            Err(Error::DtTooLarge { majorant, limit }) => {
                assert!(majorant > limit);
                assert!((majorant - e.majorant(1.0)).abs() < 1e-12 * majorant);
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn conservation_per_step() {
        let k = CollisionKernel::new(0.5, AngularKernel::truncated(1.0, 0.05, 3).unwrap()).unwrap();
        let mut e = ParticleEnsemble::from_initial(
            &InitialCondition::ShiftedBiMaxwellian {
                t1: 0.5,
                t2: 2.0,
                shift: 3.0,
            },
            k,
            4000,
            9,
        )
        .unwrap();
        let p0 = e.momentum();
        let e0 = e.energy();
        for _ in 0..50 {
            let dt = e.stable_dt(0.5);
            e.step(dt).unwrap();
        }
        assert!(e.collisions > 1000);
        let p1 = e.momentum();
        for (a, b) in p0.iter().zip(&p1) {
            assert!((a - b).abs() < 1e-12);
        }
        assert!(((e.energy() - e0) / e0).abs() < 1e-12);
    }

    fn maxwell_run(particles: usize, seed: u64, steps_to: f64) -> DsmcRun {
        run(&RunSpec {
            ic: InitialCondition::Maxwellian { temperature: 1.0 },
            kernel: hard_spheres(3),
            horizon: steps_to,
            snapshots: vec![0.0, steps_to],
            orders: vec![0.0, 2.0, 4.0],
            particles,
            seed,
            dt: DtPolicy::default(),
            entropy_points: 0,
            budget: None,
        })
        .unwrap()
    }

    #[test]
    fn maxwellian_energy_is_conserved() {
        let r = maxwell_run(20_000, 5, 1.0);
        let m2 = r.trajectory.ln_values[1][1].exp();
        let se = r.trajectory.stderr.as_ref().unwrap()[0][1];
        assert!((m2 - 4.0).abs() < 4.0 * se, "{m2} ± {se}");
        assert!(r.energy_drift < 1e-12);
        assert!(r.collisions > 0);
    }

    #[test]
    fn seed_repeatability_and_worker_independence() {
        let a = maxwell_run(5000, 17, 0.3);
        let b = maxwell_run(5000, 17, 0.3);
        assert_eq!(a, b);
        let pool = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
        let c = pool.install(|| maxwell_run(5000, 17, 0.3));
        assert_eq!(a, c);
        let d = maxwell_run(5000, 18, 0.3);
        assert_ne!(a.trajectory, d.trajectory);
    }

    #[test]
    fn snapshots_are_monotone_in_order() {
        let r = run(&RunSpec {
            ic: InitialCondition::CompactSupport { radius: 1.0 },
            kernel: hard_spheres(3),
            horizon: 0.5,
            snapshots: vec![0.0, 0.25, 0.5],
            orders: (0..=20).map(f64::from).collect(),
            particles: 3000,
            seed: 2,
            dt: DtPolicy::default(),
            entropy_points: 0,
            budget: None,
        })
        .unwrap();
        for i in 0..3 {
            assert!(r.trajectory.snapshot_at(i).is_monotone_in_order());
        }
    }

    #[test]
    fn heavy_tail_initial_moments_match_quadrature() {
        let d = RadialDensity::stretched(1.0, 0.5, 3).unwrap();
        let v = InitialCondition::HeavyTail { s0: 1.0, alpha0: 0.5 }
            .sample(200_000, 3, 4)
            .unwrap();
        let e = ParticleEnsemble::new(v, hard_spheres(3), 4).unwrap();
        let (l, s) = e.moments(&[2.0, 4.0]);
        for (j, q) in [2.0, 4.0].iter().enumerate() {
            let exact = d.ln_moment(*q).unwrap().exp();
            // recentring shifts m_q by O(1/N); sampling error dominates
            assert!((l[j].exp() - exact).abs() < 4.0 * s[j] + 1e-3 * exact, "q={q}");
        }
    }

    #[test]
    fn gaussian_entropy_estimate() {
        let v = InitialCondition::Maxwellian { temperature: 1.0 }
            .sample(2000, 3, 8)
            .unwrap();
        let (h, se) = knn_entropy(&v, 3, 2000, 1);
        let exact = 1.5 * (2.0 * PI * std::f64::consts::E).ln();
        assert!((h - exact).abs() < 4.0 * se + 0.05, "{h} vs {exact} ± {se}");
    }

    #[test]
    fn initial_conditions_have_zero_momentum() {
        for ic in [
            InitialCondition::Maxwellian { temperature: 2.0 },
            InitialCondition::ShiftedBiMaxwellian {
                t1: 1.0,
                t2: 0.5,
                shift: 2.0,
            },
            InitialCondition::CompactSupport { radius: 1.5 },
            InitialCondition::HeavyTail { s0: 0.5, alpha0: 1.0 },
        ] {
            let v = ic.sample(4000, 3, 1).unwrap();
            let e = ParticleEnsemble::new(v, hard_spheres(3), 1).unwrap();
            assert!(e.momentum().iter().all(|m| m.abs() < 1e-12), "{ic:?}");
        }
        let v = InitialCondition::CompactSupport { radius: 1.5 }
            .sample(4000, 3, 1)
            .unwrap();
        assert!(v.chunks_exact(3).all(|p| speed(p) <= 1.5 + 0.1));
    }

    #[test]
    fn run_budget_guard() {
        let spec = RunSpec {
            ic: InitialCondition::Maxwellian { temperature: 1.0 },
            kernel: hard_spheres(3),
            horizon: 10.0,
            snapshots: vec![0.0, 10.0],
            orders: vec![2.0],
            particles: 2000,
            seed: 1,
            dt: DtPolicy::default(),
            entropy_points: 0,
            budget: Some(1e5),
        };
        assert!(matches!(run(&spec), Err(Error::Budget { .. })));
    }

    #[test]
    fn truncation_budget_guard() {
        let spec = TruncationSpec {
            ic: InitialCondition::Maxwellian { temperature: 1.0 },
            kernel: CollisionKernel::new(0.5, AngularKernel::truncated(1.0, 0.3, 3).unwrap()).unwrap(),
            theta_mins: vec![0.3, 0.1, 0.03, 0.01],
            horizon: 1.0,
            snapshots: vec![0.0, 1.0],
            orders: vec![4.0],
            particles: 2000,
            seed: 1,
            dt: DtPolicy::default(),
            budget: 1e6,
        };
        assert!(matches!(truncation_study(&spec), Err(Error::Budget { .. })));
    }

    #[test]
    fn bounded_kernel_truncation_levels_agree() {
        let spec = TruncationSpec {
            ic: InitialCondition::CompactSupport { radius: 1.0 },
            kernel: hard_spheres(3),
            theta_mins: vec![0.3, 0.1],
            horizon: 0.5,
            snapshots: vec![0.0, 0.5],
            orders: vec![4.0],
            particles: 2000,
            seed: 1,
            dt: DtPolicy::default(),
            budget: 1e9,
        };
        let r = truncation_study(&spec).unwrap();
        assert_eq!(r.levels[0].trajectory, r.levels[1].trajectory);
        assert!(r.levels[0].collisions > 0);
    }

    #[test]
    fn maxwellian_low_moment_oracle_in_2d() {
        let v = InitialCondition::Maxwellian { temperature: 0.5 }
            .sample(100_000, 2, 3)
            .unwrap();
        let k = CollisionKernel::new(1.0, AngularKernel::bounded(1.0, 2).unwrap()).unwrap();
        let e = ParticleEnsemble::new(v, k, 3).unwrap();
        let (l, s) = e.moments(&[2.0, 4.0]);
        let exact = maxwellian_low_moments(0.5, 2);
        assert!((l[0].exp() - exact[1]).abs() < 4.0 * s[0]);
        assert!((l[1].exp() - exact[2]).abs() < 4.0 * s[1]);
    }
}
