//! Closed-system evolution under the linear anneal s = t/t_a.
//!
//! The default stepper is a modified Magnus scheme. Each step is taken in
//! the eigenbasis of H at the step midpoint, so the fast phases e^{-iΘEτ}
//! are exact and the exponent only carries the slowly varying remainder
//! H(m+τ) - H(m) = τH'(m) - τ²H_c, which is exact because H(s) is quadratic.
//! The phase integrals are done in closed form. An explicit Dormand-Prince
//! 5(4) stepper in the lab frame is kept for cross-checking at short t_a.

use num_complex::Complex;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cache::Cache;
use crate::error::{Error, Result};
use crate::fit::exponential_fit;
use crate::hamiltonian::{reduced_operators, AnnealingOperators, CatalystSpec};
use crate::instance::ProblemParams;
use crate::linalg::{dot, norm_sq, overlap_sq, Matrix, SymmetricEigen};
use crate::scalar::Real;
use crate::spectrum::uniform_grid;
use crate::units::phase_per_ghz_us;

type C<T> = Complex<T>;

/// Linear schedule of total duration t_a.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AnnealSchedule<T> {
    total_time_us: T,
}

impl<T: Real> AnnealSchedule<T> {
    pub fn new(total_time_us: T) -> Result<Self> {
        if !(total_time_us > T::zero() && total_time_us.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "anneal time must be positive, got {}",
                total_time_us.to_f64_lossy()
            )));
        }
        Ok(Self { total_time_us })
    }

    pub fn total_time_us(&self) -> T {
        self.total_time_us
    }

    pub fn s_at(&self, t_us: T) -> T {
        (t_us / self.total_time_us).max(T::zero()).min(T::one())
    }

    pub fn t_at(&self, s: T) -> T {
        s * self.total_time_us
    }

    /// Θ with dψ/ds = -iΘ H(s) ψ for H in GHz.
    pub fn theta(&self) -> T {
        phase_per_ghz_us::<T>() * self.total_time_us
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum IntegratorKind {
    Magnus,
    DormandPrince,
}

#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct EvolveOptions {
    /// Local error tolerance per accepted step.
    pub tolerance: f64,
    /// Uniform s samples including both endpoints; 1 samples only s = 1.
    pub samples: usize,
    pub tracked_levels: usize,
    pub integrator: IntegratorKind,
    pub max_steps: usize,
    pub min_step: f64,
}

impl Default for EvolveOptions {
    fn default() -> Self {
        Self {
            tolerance: 1e-9,
            samples: 501,
            tracked_levels: 4,
            integrator: IntegratorKind::Magnus,
            max_steps: 5_000_000,
            min_step: 1e-14,
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct IntegratorStats {
    pub steps: usize,
    pub rejected: usize,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct EvolutionResult<T> {
    pub sample_times_us: Vec<T>,
    pub sample_s: Vec<T>,
    /// `overlaps[i][a]` = |⟨E_a(s_i)|ψ⟩|².
    pub overlaps: Vec<Vec<T>>,
    pub norms: Vec<T>,
    pub final_gs_fidelity: T,
    pub final_1es_fidelity: T,
    pub norm_drift: T,
    pub stats: IntegratorStats,
    #[serde(skip)]
    pub final_state: Vec<C<T>>,
}

fn with_s(s: f64) -> impl Fn(Error) -> Error {
    move |e| match e {
        Error::Eigensolver { .. } => Error::Eigensolver { s },
        other => other,
    }
}

fn eigen_at<T: Real>(ops: &AnnealingOperators<T>, s: T) -> Result<SymmetricEigen<T>> {
    SymmetricEigen::new(&ops.at(s)?).map_err(with_s(s.to_f64_lossy()))
}

/// ∫_{-x}^{x} τ e^{iωτ} dτ divided by i, and ∫_{-x}^{x} τ² e^{iωτ} dτ.
fn phase_moments<T: Real>(omega: T, x: T) -> (T, T) {
    let z = omega * x;
    let two = T::lit(2.0);
    if z.abs() < T::lit(1e-2) {
        let x3 = x * x * x;
        let x5 = x3 * x * x;
        let x7 = x5 * x * x;
        let w2 = omega * omega;
        let j1 = two * (omega * x3 / T::lit(3.0) - omega * w2 * x5 / T::lit(30.0) + omega * w2 * w2 * x7 / T::lit(840.0));
        let j2 = two * (x3 / T::lit(3.0) - w2 * x5 / T::lit(10.0) + w2 * w2 * x7 / T::lit(168.0));
        (j1, j2)
    } else {
        let (sn, cs) = z.sin_cos();
        let w2 = omega * omega;
        let j1 = two * (sn / w2 - x * cs / omega);
        let j2 = two * (x * x * sn / omega + two * x * cs / w2 - two * sn / (w2 * omega));
        (j1, j2)
    }
}

/// exp(M) v by truncated Taylor series with substepping.
fn expmv<T: Real>(m: &[C<T>], dim: usize, v: &mut Vec<C<T>>) {
    let norm1 = (0..dim)
        .map(|c| (0..dim).map(|r| m[r * dim + c].norm()).fold(T::zero(), |a, b| a + b))
        .fold(T::zero(), T::max);
    let sub = norm1.ceil().to_f64_lossy().max(1.0) as usize;
    let scale = T::one() / T::from_usize_lossy(sub);
    let tiny = T::epsilon() * T::lit(0.1);
    for _ in 0..sub {
        let mut term = v.clone();
        let mut acc = v.clone();
        for k in 1..60 {
            let f = scale / T::from_usize_lossy(k);
            let next: Vec<C<T>> = (0..dim)
                .map(|r| {
                    let row = &m[r * dim..(r + 1) * dim];
                    row.iter().zip(&term).fold(C::new(T::zero(), T::zero()), |a, (x, y)| a + *x * *y) * f
                })
                .collect();
            term = next;
            for (a, t) in acc.iter_mut().zip(&term) {
                *a = *a + *t;
            }
            if norm_sq(&term).sqrt() < tiny * norm_sq(&acc).sqrt() {
                break;
            }
        }
        *v = acc;
    }
}

/// `V M Vᵀ` for symmetric `M`, with `V` given by rows and `vt = Vᵀ`.
fn congruence<T: Real>(v: &Matrix<T>, vt: &Matrix<T>, m: &Matrix<T>) -> Matrix<T> {
    // M is sparse, and `matmul` skips zeros of its left factor
    let mv = m.matmul(vt).transpose();
    let d = v.rows();
    let mut r = Matrix::zeros(d, d);
    for k in 0..d {
        for l in k..d {
            let x = dot(v.row(k), mv.row(l));
            r[(k, l)] = x;
            r[(l, k)] = x;
        }
    }
    r
}

/// Operators reused by every Magnus step of one trajectory.
struct MagnusOperators<'a, T> {
    ops: &'a AnnealingOperators<T>,
    theta: T,
    /// H_p - H_d.
    linear: Matrix<T>,
    has_catalyst: bool,
}

impl<'a, T: Real> MagnusOperators<'a, T> {
    fn new(ops: &'a AnnealingOperators<T>, theta: T) -> Self {
        let mut linear = ops.problem.clone();
        linear.add_scaled(-T::one(), &ops.driver);
        Self {
            ops,
            theta,
            linear,
            has_catalyst: ops.catalyst.max_abs() > T::zero(),
        }
    }

    /// One modified-Magnus step of length `h` from `s0`.
    fn step(&self, s0: T, h: T, psi: &[C<T>]) -> Result<Vec<C<T>>> {
        let theta = self.theta;
        let x = h / T::lit(2.0);
        let m = s0 + x;
        let eig = eigen_at(self.ops, m)?;
        let v = eig.vectors.as_ref().expect("vectors requested");
        let vt = v.transpose();
        let dim = eig.dim();
        let mut a = congruence(v, &vt, &self.linear);
        let b = if self.has_catalyst {
            let b = congruence(v, &vt, &self.ops.catalyst);
            a.add_scaled(T::one() - T::lit(2.0) * m, &b);
            Some(b)
        } else {
            None
        };
        let e_ref = eig.values[0];
        let energies: Vec<T> = eig.values.iter().map(|e| *e - e_ref).collect();

        // Ω_kl = Θ A_kl j1(ω_kl) + iΘ B_kl j2(ω_kl); j1 is odd and j2 even in ω
        let mut omega = vec![C::new(T::zero(), T::zero()); dim * dim];
        for k in 0..dim {
            for l in k..dim {
                let w = theta * (energies[k] - energies[l]);
                let (j1, j2) = phase_moments(w, x);
                let re = theta * a[(k, l)] * j1;
                let im = b.as_ref().map_or(T::zero(), |b| theta * b[(k, l)] * j2);
                omega[k * dim + l] = C::new(re, im);
                omega[l * dim + k] = C::new(-re, im);
            }
        }

        let half_phase: Vec<C<T>> = energies.iter().map(|e| C::from_polar(T::one(), -theta * x * *e)).collect();
        let mut c = v.mul_complex_vec(psi);
        for (ci, p) in c.iter_mut().zip(&half_phase) {
            *ci = *ci * *p;
        }
        expmv(&omega, dim, &mut c);
        for (ci, p) in c.iter_mut().zip(&half_phase) {
            *ci = *ci * *p;
        }
        Ok(vt.mul_complex_vec(&c))
    }

    /// `n` equal substeps covering `[s0, s0 + h]`.
    fn composed(&self, s0: T, h: T, n: usize, psi: &[C<T>]) -> Result<Vec<C<T>>> {
        let sub = h / T::from_usize_lossy(n);
        let mut out = psi.to_vec();
        for i in 0..n {
            out = self.step(s0 + sub * T::from_usize_lossy(i), sub, &out)?;
        }
        Ok(out)
    }

    /// Step doubling: one step of `h` against two of `h/2`. The base step is
    /// time-symmetric, so its leading error is cubic and is removed by
    /// Richardson extrapolation; the removed correction is the error estimate.
    fn doubled(&self, s0: T, h: T, psi: &[C<T>]) -> Result<(Vec<C<T>>, T)> {
        let big = self.composed(s0, h, 1, psi)?;
        let mut fine = self.composed(s0, h, 2, psi)?;
        let third = T::one() / T::lit(3.0);
        let mut err = T::zero();
        for (f, b) in fine.iter_mut().zip(&big) {
            let d = (*f - *b) * third;
            err = err + d.norm_sqr();
            *f = *f + d;
        }
        Ok((fine, err.sqrt()))
    }
}

fn lab_rhs<T: Real>(ops: &AnnealingOperators<T>, theta: T, s: T, psi: &[C<T>]) -> Result<Vec<C<T>>> {
    let h = ops.at(s.min(T::one()))?;
    Ok(h.mul_complex_vec(psi).into_iter().map(|z| C::new(theta * z.im, -theta * z.re)).collect())
}

const DP_C: [f64; 7] = [0.0, 1.0 / 5.0, 3.0 / 10.0, 4.0 / 5.0, 8.0 / 9.0, 1.0, 1.0];
const DP_A: [[f64; 6]; 7] = [
    [0.0; 6],
    [1.0 / 5.0, 0.0, 0.0, 0.0, 0.0, 0.0],
    [3.0 / 40.0, 9.0 / 40.0, 0.0, 0.0, 0.0, 0.0],
    [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0, 0.0, 0.0, 0.0],
    [19372.0 / 6561.0, -25360.0 / 2187.0, 64448.0 / 6561.0, -212.0 / 729.0, 0.0, 0.0],
    [9017.0 / 3168.0, -355.0 / 33.0, 46732.0 / 5247.0, 49.0 / 176.0, -5103.0 / 18656.0, 0.0],
    [35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0],
];
const DP_B5: [f64; 7] = [35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0, 0.0];
const DP_B4: [f64; 7] = [
    5179.0 / 57600.0,
    0.0,
    7571.0 / 16695.0,
    393.0 / 640.0,
    -92097.0 / 339200.0,
    187.0 / 2100.0,
    1.0 / 40.0,
];

/// One Dormand-Prince step; returns the 5th-order solution and the error norm.
fn dopri_step<T: Real>(ops: &AnnealingOperators<T>, theta: T, s0: T, h: T, psi: &[C<T>]) -> Result<(Vec<C<T>>, T)> {
    let dim = psi.len();
    let mut k: Vec<Vec<C<T>>> = Vec::with_capacity(7);
    for stage in 0..7 {
        let mut y = psi.to_vec();
        for (j, kj) in k.iter().enumerate() {
            let a = T::lit(DP_A[stage][j]) * h;
            if a != T::zero() {
                for (yi, ki) in y.iter_mut().zip(kj) {
                    *yi = *yi + *ki * a;
                }
            }
        }
        k.push(lab_rhs(ops, theta, s0 + T::lit(DP_C[stage]) * h, &y)?);
    }
    let mut y5 = psi.to_vec();
    let mut err = T::zero();
    for i in 0..dim {
        let mut d5 = C::new(T::zero(), T::zero());
        let mut d4 = C::new(T::zero(), T::zero());
        for (st, ks) in k.iter().enumerate() {
            d5 = d5 + ks[i] * T::lit(DP_B5[st]);
            d4 = d4 + ks[i] * T::lit(DP_B4[st]);
        }
        y5[i] = y5[i] + d5 * h;
        err = err.max(((d5 - d4) * h).norm());
    }
    Ok((y5, err))
}

/// Sample points in s.
fn sample_grid<T: Real>(samples: usize) -> Result<Vec<T>> {
    match samples {
        0 => Err(Error::InvalidArgument("need at least one sample".into())),
        1 => Ok(vec![T::one()]),
        n => Ok(uniform_grid(T::zero(), T::one(), n)),
    }
}

/// Ground state of H(0) as a complex vector.
pub fn initial_state<T: Real>(ops: &AnnealingOperators<T>) -> Result<Vec<C<T>>> {
    let eig = eigen_at(ops, T::zero())?;
    Ok(eig.vector(0).iter().map(|&x| C::new(x, T::zero())).collect())
}

struct Sampler<'a, T> {
    ops: &'a AnnealingOperators<T>,
    tracked: usize,
    overlaps: Vec<Vec<T>>,
    norms: Vec<T>,
}

impl<T: Real> Sampler<'_, T> {
    fn record(&mut self, s: T, psi: &[C<T>]) -> Result<()> {
        let eig = eigen_at(self.ops, s)?;
        self.overlaps.push((0..self.tracked).map(|a| overlap_sq(eig.vector(a), psi)).collect());
        self.norms.push(norm_sq(psi).sqrt());
        Ok(())
    }
}

/// Integrates from the ground state of H(0) to s = 1.
pub fn evolve<T: Real>(ops: &AnnealingOperators<T>, schedule: &AnnealSchedule<T>, opts: &EvolveOptions) -> Result<EvolutionResult<T>> {
    let dim = ops.dim();
    if opts.tracked_levels < 2 || opts.tracked_levels > dim {
        return Err(Error::InvalidArgument(format!(
            "tracked levels {} not in 2..={dim}",
            opts.tracked_levels
        )));
    }
    if !(opts.tolerance > 0.0) {
        return Err(Error::InvalidArgument("tolerance must be positive".into()));
    }
    let samples = sample_grid::<T>(opts.samples)?;
    let theta = schedule.theta();
    let tol = T::lit(opts.tolerance);
    let min_step = T::lit(opts.min_step);
    let mut psi = initial_state(ops)?;
    let mut sampler = Sampler {
        ops,
        tracked: opts.tracked_levels,
        overlaps: Vec::with_capacity(samples.len()),
        norms: Vec::with_capacity(samples.len()),
    };
    let magnus = MagnusOperators::new(ops, theta);
    let mut stats = IntegratorStats::default();
    let mut s = T::zero();
    let mut h = T::lit(1e-3);
    let (order, safety) = match opts.integrator {
        IntegratorKind::Magnus => (T::lit(3.0), T::lit(0.9)),
        IntegratorKind::DormandPrince => (T::lit(5.0), T::lit(0.9)),
    };

    for &target in &samples {
        while s < target {
            if stats.steps + stats.rejected >= opts.max_steps {
                return Err(Error::Integrator(format!("step budget exhausted at s = {}", s.to_f64_lossy())));
            }
            if h < min_step {
                return Err(Error::Integrator(format!("step underflow at s = {}", s.to_f64_lossy())));
            }
            let clipped = target - s <= h;
            let step = if clipped { target - s } else { h };
            let (candidate, err) = match opts.integrator {
                IntegratorKind::Magnus => magnus.doubled(s, step, &psi)?,
                IntegratorKind::DormandPrince => dopri_step(ops, theta, s, step, &psi)?,
            };
            if !err.is_finite() {
                return Err(Error::Integrator(format!("non-finite error estimate at s = {}", s.to_f64_lossy())));
            }
            let factor = if err > T::zero() {
                (safety * (tol / err).powf(T::one() / order)).max(T::lit(0.2)).min(T::lit(5.0))
            } else {
                T::lit(5.0)
            };
            if err <= tol {
                psi = candidate;
                s = if clipped { target } else { s + step };
                stats.steps += 1;
                // a step shortened to hit a sample says nothing about the next one
                if !clipped || factor < T::one() {
                    h = step * factor;
                }
            } else {
                stats.rejected += 1;
                h = step * factor;
            }
        }
        sampler.record(target, &psi)?;
    }

    let last = sampler.overlaps.last().expect("at least one sample").clone();
    let norm_drift = sampler
        .norms
        .iter()
        .map(|n| (*n - T::one()).abs())
        .fold(T::zero(), T::max);
    if norm_drift > T::lit(1e-6) {
        return Err(Error::Integrator(format!("norm drift {} exceeds 1e-6", norm_drift.to_f64_lossy())));
    }
    Ok(EvolutionResult {
        sample_times_us: samples.iter().map(|&s| schedule.t_at(s)).collect(),
        sample_s: samples,
        overlaps: sampler.overlaps,
        norms: sampler.norms,
        final_gs_fidelity: last[0],
        final_1es_fidelity: last[1],
        norm_drift,
        stats,
        final_state: psi,
    })
}

/// (F_GS, F_1ES) at the end of an anneal of length `t_a_us`.
pub fn final_fidelities<T: Real>(ops: &AnnealingOperators<T>, t_a_us: T, opts: &EvolveOptions) -> Result<(T, T)> {
    let schedule = AnnealSchedule::new(t_a_us)?;
    let r = evolve(ops, &schedule, &EvolveOptions { samples: 1, tracked_levels: 2, ..*opts })?;
    Ok((r.final_gs_fidelity, r.final_1es_fidelity))
}

/// A grid cell that could not be computed.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct CellFailure {
    pub t_a_us: f64,
    pub delta: f64,
    pub message: String,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct FidelityGrid {
    pub t_axis_us: Vec<f64>,
    pub delta_axis: Vec<f64>,
    /// `fidelity[i][j]` at (t_axis_us[i], delta_axis[j]); `None` where the cell failed.
    pub fidelity: Vec<Vec<Option<f64>>>,
    pub instance_hash: String,
    pub catalyst_pairs: Vec<(usize, usize)>,
    pub reference_strength: f64,
    pub failures: Vec<CellFailure>,
    pub cache_hits: usize,
}

impl FidelityGrid {
    /// Fidelities at fixed ΔJxx index `j` over the t_a axis.
    pub fn column(&self, j: usize) -> Vec<Option<f64>> {
        self.fidelity.iter().map(|row| row[j]).collect()
    }

    pub fn row(&self, i: usize) -> &[Option<f64>] {
        &self.fidelity[i]
    }
}

#[derive(Serialize)]
struct CellKey<'a> {
    kind: &'static str,
    instance: &'a str,
    catalyst: String,
    t_a_us: f64,
    tolerance: f64,
    integrator: IntegratorKind,
}

/// Final (F_GS, F_1ES) for one detuned catalyst, optionally cached on disk.
pub fn cached_final_fidelities(
    params: &ProblemParams<f64>,
    catalyst: &CatalystSpec,
    t_a_us: f64,
    opts: &EvolveOptions,
    cache: Option<&Cache>,
) -> Result<((f64, f64), bool)> {
    let compute = || {
        let ops = reduced_operators(params, Some(catalyst))?;
        final_fidelities(&ops, t_a_us, opts)
    };
    match cache {
        None => compute().map(|f| (f, false)),
        Some(c) => {
            let instance = params.fingerprint();
            let key = CellKey {
                kind: "final-fidelity",
                instance: &instance,
                catalyst: catalyst.fingerprint(),
                t_a_us,
                tolerance: opts.tolerance,
                integrator: opts.integrator,
            };
            c.get_or_compute(&key, compute)
        }
    }
}

/// Final GS fidelity over t_a × ΔJxx with the catalyst at J*(1 + ΔJxx).
pub fn fidelity_grid(
    params: &ProblemParams<f64>,
    pairs: &[(usize, usize)],
    j_star: f64,
    t_axis_us: &[f64],
    delta_axis: &[f64],
    opts: &EvolveOptions,
    cache: Option<&Cache>,
) -> Result<FidelityGrid> {
    if t_axis_us.is_empty() || delta_axis.is_empty() {
        return Err(Error::InvalidArgument("fidelity grid axes must be nonempty".into()));
    }
    let cells: Vec<(usize, usize)> = (0..t_axis_us.len())
        .flat_map(|i| (0..delta_axis.len()).map(move |j| (i, j)))
        .collect();
    let results: Vec<Result<(f64, bool)>> = cells
        .par_iter()
        .map(|&(i, j)| {
            let cat = CatalystSpec::detuned(pairs.to_vec(), j_star, delta_axis[j])?;
            cached_final_fidelities(params, &cat, t_axis_us[i], opts, cache).map(|((gs, _), hit)| (gs, hit))
        })
        .collect();
    let mut fidelity = vec![vec![None; delta_axis.len()]; t_axis_us.len()];
    let mut failures = Vec::new();
    let mut cache_hits = 0;
    for (&(i, j), r) in cells.iter().zip(results) {
        match r {
            Ok((f, hit)) => {
                fidelity[i][j] = Some(f.clamp(0.0, 1.0));
                cache_hits += hit as usize;
            }
            Err(e) => failures.push(CellFailure {
                t_a_us: t_axis_us[i],
                delta: delta_axis[j],
                message: e.to_string(),
            }),
        }
    }
    Ok(FidelityGrid {
        t_axis_us: t_axis_us.to_vec(),
        delta_axis: delta_axis.to_vec(),
        fidelity,
        instance_hash: params.fingerprint(),
        catalyst_pairs: pairs.to_vec(),
        reference_strength: j_star,
        failures,
        cache_hits,
    })
}

/// Half-maximum crossings around the peak of a sampled row.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct HalfMaximum {
    pub peak_index: usize,
    pub half: f64,
    pub left: f64,
    pub right: f64,
    /// Grid cells `(x[k], x[k+1])` holding each crossing.
    pub left_cell: (f64, f64),
    pub right_cell: (f64, f64),
}

impl HalfMaximum {
    pub fn width(&self) -> f64 {
        self.right - self.left
    }
}

pub fn half_maximum(x: &[f64], y: &[f64]) -> Result<HalfMaximum> {
    if x.len() != y.len() || x.len() < 3 {
        return Err(Error::InvalidArgument("row needs at least three matching points".into()));
    }
    let k = (0..y.len())
        .max_by(|&a, &b| y[a].partial_cmp(&y[b]).expect("finite fidelities"))
        .expect("nonempty");
    let peak = y[k];
    if !(peak > 1e-6) {
        return Err(Error::Fit(format!("peak {peak} below threshold")));
    }
    let half = peak / 2.0;
    let interp = |a: usize, b: usize| x[a] + (half - y[a]) * (x[b] - x[a]) / (y[b] - y[a]);
    let l = (0..k).rev().find(|&j| y[j] < half).ok_or_else(|| Error::Fit("left half-maximum crossing not bracketed".into()))?;
    let r = (k + 1..y.len()).find(|&j| y[j] < half).ok_or_else(|| Error::Fit("right half-maximum crossing not bracketed".into()))?;
    Ok(HalfMaximum {
        peak_index: k,
        half,
        left: interp(l, l + 1),
        right: interp(r, r - 1),
        left_cell: (x[l], x[l + 1]),
        right_cell: (x[r - 1], x[r]),
    })
}

/// Full width at half maximum with linear interpolation.
pub fn fwhm(x: &[f64], y: &[f64]) -> Result<f64> {
    half_maximum(x, y).map(|h| h.width())
}

/// FWHM with each crossing refined by bisection on `f` to `tol`.
pub fn fwhm_refined<F>(x: &[f64], y: &[f64], mut f: F, tol: f64) -> Result<f64>
where
    F: FnMut(f64) -> Result<f64>,
{
    let hm = half_maximum(x, y)?;
    let mut bisect = |(mut a, mut b): (f64, f64), rising: bool| -> Result<f64> {
        while b - a > tol {
            let m = 0.5 * (a + b);
            let above = f(m)? >= hm.half;
            if above == rising {
                b = m;
            } else {
                a = m;
            }
        }
        Ok(0.5 * (a + b))
    };
    let left = bisect(hm.left_cell, true)?;
    let right = bisect(hm.right_cell, false)?;
    Ok(right - left)
}

/// Which part of a fidelity column enters the decay fit.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub enum DecayWindow {
    /// From the first t_a within 10⁻² of the column maximum to the last
    /// t_a whose fidelity exceeds 10⁻³.
    Auto,
    Explicit { lo_us: f64, hi_us: f64 },
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct DecayFit {
    /// Γ per μs.
    pub rate: f64,
    pub amplitude: f64,
    /// RMS residual of ln F.
    pub residual_rms: f64,
    pub window_us: (f64, f64),
    pub points: usize,
}

pub fn decay_window(t_us: &[f64], f: &[f64]) -> Result<(f64, f64)> {
    let peak = f.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let start = f
        .iter()
        .position(|&v| v >= peak - 1e-2)
        .ok_or_else(|| Error::Fit("empty column".into()))?;
    let end = (start..f.len())
        .rev()
        .find(|&i| f[i] > 1e-3)
        .ok_or_else(|| Error::Fit("no fidelity above 1e-3".into()))?;
    Ok((t_us[start], t_us[end]))
}

/// Least-squares fit of ln F = ln a - Γ t_a over the window.
pub fn decay_fit(t_us: &[f64], f: &[f64], window: DecayWindow) -> Result<DecayFit> {
    if t_us.len() != f.len() {
        return Err(Error::DimensionMismatch {
            expected: t_us.len(),
            got: f.len(),
        });
    }
    let (lo, hi) = match window {
        DecayWindow::Auto => decay_window(t_us, f)?,
        DecayWindow::Explicit { lo_us, hi_us } => (lo_us, hi_us),
    };
    let (x, y): (Vec<f64>, Vec<f64>) = t_us
        .iter()
        .zip(f)
        .filter(|(t, _)| **t >= lo && **t <= hi)
        .map(|(t, v)| (*t, *v))
        .unzip();
    if x.len() < 4 {
        return Err(Error::Fit(format!("decay fit needs at least 4 points, window has {}", x.len())));
    }
    let fit = exponential_fit(&x, &y)?;
    Ok(DecayFit {
        rate: -fit.rate,
        amplitude: fit.amplitude,
        residual_rms: fit.log_fit.residual_rms,
        window_us: (lo, hi),
        points: x.len(),
    })
}

/// Expectation of H(s) in `psi`, handy for tests and diagnostics.
pub fn energy_expectation<T: Real>(h: &Matrix<T>, psi: &[C<T>]) -> T {
    let hp = h.mul_complex_vec(psi);
    psi.iter().zip(&hp).map(|(a, b)| (a.conj() * *b).re).fold(T::zero(), |x, y| x + y)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hamiltonian::{BasisKind, Provenance};
    use crate::instance::GraphInstance;

    fn params(n: usize) -> ProblemParams<f64> {
        GraphInstance::bipartite_default(n, 15.0).unwrap().normalize().unwrap()
    }

    fn two_level(s0: f64, c: f64, a: f64, b: f64) -> AnnealingOperators<f64> {
        let h = |s: f64| Matrix::from_row_major(2, 2, vec![a * (s - s0), c, c, b * (s - s0)]).unwrap();
        AnnealingOperators {
            driver: h(0.0),
            problem: h(1.0),
            catalyst: Matrix::zeros(2, 2),
            dicke: None,
            provenance: Provenance {
                instance_hash: "synthetic".into(),
                catalyst_hash: "none".into(),
                basis: BasisKind::Reduced,
            },
        }
    }

    #[test]
    fn phase_moments_match_quadrature() {
        for &(w, x) in &[(0.0, 0.3), (1e-4, 0.2), (0.03, 0.5), (3.0, 0.7), (250.0, 0.01), (-7.0, 0.4)] {
            let n = 20000;
            let (mut q1, mut q2) = (0.0, 0.0);
            for i in 0..n {
                let t = -x + (i as f64 + 0.5) * 2.0 * x / n as f64;
                let dt = 2.0 * x / n as f64;
                q1 += t * (w * t).sin() * dt;
                q2 += t * t * (w * t).cos() * dt;
            }
            let (j1, j2) = phase_moments(w, x);
            assert!((j1 - q1).abs() < 1e-8 * (1.0 + q1.abs()), "w={w} {j1} {q1}");
            assert!((j2 - q2).abs() < 1e-8 * (1.0 + q2.abs()), "w={w} {j2} {q2}");
        }
    }

    #[test]
    fn expmv_of_rotation() {
        // exp([[0, -θ], [θ, 0]]) rotates by θ
        let th = 2.7f64;
        let z = C::new(0.0, 0.0);
        let m = vec![z, C::new(-th, 0.0), C::new(th, 0.0), z];
        let mut v = vec![C::new(1.0, 0.0), z];
        expmv(&m, 2, &mut v);
        assert!((v[0].re - th.cos()).abs() < 1e-14);
        assert!((v[1].re - th.sin()).abs() < 1e-14);
    }

    #[test]
    fn schedule_limits() {
        let s = AnnealSchedule::new(2.0).unwrap();
        assert_eq!(s.s_at(0.0), 0.0);
        assert_eq!(s.s_at(2.0), 1.0);
        assert!(AnnealSchedule::new(0.0).is_err());
        assert!(AnnealSchedule::new(-1.0).is_err());
    }

    #[test]
    fn landau_zener_two_level() {
        // dψ/ds = -iΘHψ with gap 2c and slope difference |a-b|: P_D = exp(-2πΘ c²/|a-b|)
        let (c, a, b) = (0.01, 1.0, -1.0);
        let ops = two_level(0.5, c, a, b);
        for t_a in [0.0005, 0.002] {
            let sch = AnnealSchedule::new(t_a).unwrap();
            let r = evolve(&ops, &sch, &EvolveOptions { samples: 2, tracked_levels: 2, ..Default::default() }).unwrap();
            let pd = (-2.0 * std::f64::consts::PI * sch.theta() * c * c / (a - b)).exp();
            // finite sweep range adds O(c²/(slope·range)²) oscillation
            assert!((r.final_1es_fidelity - pd).abs() < 2e-3, "t_a={t_a} {} vs {pd}", r.final_1es_fidelity);
        }
    }

    #[test]
    fn magnus_agrees_with_dormand_prince() {
        let p = params(5);
        let cat = CatalystSpec::new(vec![(3, 4)], 1.92819).unwrap();
        let ops = reduced_operators(&p, Some(&cat)).unwrap();
        let sch = AnnealSchedule::new(0.05).unwrap();
        let base = EvolveOptions { samples: 11, tolerance: 1e-10, ..Default::default() };
        let m = evolve(&ops, &sch, &base).unwrap();
        let d = evolve(&ops, &sch, &EvolveOptions { integrator: IntegratorKind::DormandPrince, tolerance: 1e-12, ..base }).unwrap();
        for (x, y) in m.overlaps.iter().zip(&d.overlaps) {
            for (u, v) in x.iter().zip(y) {
                assert!((u - v).abs() < 1e-8, "{u} vs {v}");
            }
        }
    }

    #[test]
    fn sudden_limit_keeps_uniform_state() {
        let p = params(5);
        let ops = reduced_operators(&p, None).unwrap();
        let (gs, _) = final_fidelities(&ops, 1e-9, &EvolveOptions::default()).unwrap();
        assert!((gs - 1.0 / 32.0).abs() < 1e-8);
    }

    #[test]
    fn fast_anneal_without_catalyst_ends_in_first_excited_state() {
        let ops = reduced_operators(&params(5), None).unwrap();
        let fast = final_fidelities(&ops, 1.0, &EvolveOptions::default()).unwrap();
        assert!(fast.1 > 0.9, "{fast:?}");
    }

    #[test]
    fn overlaps_are_probabilities() {
        let p = params(5);
        let cat = CatalystSpec::new(vec![(3, 4)], 1.9).unwrap();
        let ops = reduced_operators(&p, Some(&cat)).unwrap();
        let r = evolve(&ops, &AnnealSchedule::new(0.5).unwrap(), &EvolveOptions { samples: 51, ..Default::default() }).unwrap();
        assert_eq!(r.overlaps.len(), 51);
        assert!((r.overlaps[0][0] - 1.0).abs() < 1e-12);
        for o in &r.overlaps {
            assert!(o.iter().sum::<f64>() <= 1.0 + 1e-8);
        }
        assert!(r.norm_drift < 1e-6);
        assert!(r.final_gs_fidelity + r.final_1es_fidelity <= 1.0 + 1e-8);
    }

    #[test]
    fn evolve_is_deterministic() {
        let ops = reduced_operators(&params(5), None).unwrap();
        let a = final_fidelities(&ops, 0.3, &EvolveOptions::default()).unwrap();
        let b = final_fidelities(&ops, 0.3, &EvolveOptions::default()).unwrap();
        assert_eq!(a.0.to_bits(), b.0.to_bits());
    }

    #[test]
    fn halving_tolerance_barely_moves_fidelity() {
        let cat = CatalystSpec::detuned(vec![(3, 4)], 1.92819, 0.05).unwrap();
        let ops = reduced_operators(&params(5), Some(&cat)).unwrap();
        let a = final_fidelities(&ops, 1.0, &EvolveOptions { tolerance: 1e-7, ..Default::default() }).unwrap();
        let b = final_fidelities(&ops, 1.0, &EvolveOptions { tolerance: 5e-8, ..Default::default() }).unwrap();
        assert!((a.0 - b.0).abs() < 1e-6, "{a:?} {b:?}");
    }

    #[test]
    fn grid_caches_cells_and_reports_failures() {
        let dir = tempfile::tempdir().unwrap();
        let cache = Cache::new(dir.path()).unwrap();
        let p = params(5);
        let opts = EvolveOptions { tolerance: 1e-7, ..Default::default() };
        let t_axis = [0.2, -1.0];
        let deltas = [0.0, 0.1];
        let g = fidelity_grid(&p, &[(3, 4)], 1.92819, &t_axis, &deltas, &opts, Some(&cache)).unwrap();
        assert_eq!(g.failures.len(), 2);
        assert!(g.failures.iter().all(|f| f.t_a_us == -1.0));
        assert!(g.fidelity[0].iter().all(|f| f.is_some()));
        assert!(g.fidelity[1].iter().all(|f| f.is_none()));
        let again = fidelity_grid(&p, &[(3, 4)], 1.92819, &t_axis, &deltas, &opts, Some(&cache)).unwrap();
        assert_eq!(again.cache_hits, 2);
        assert_eq!(again.fidelity[0], g.fidelity[0]);
    }

    #[test]
    fn fwhm_of_triangle() {
        let w = 0.13;
        let x: Vec<f64> = (0..201).map(|i| -0.5 + i as f64 * 0.005).collect();
        let y: Vec<f64> = x.iter().map(|v| (1.0 - v.abs() / w).max(0.0)).collect();
        assert!((fwhm(&x, &y).unwrap() - w).abs() < 1e-12);
        let tri = |v: f64| Ok((1.0 - v.abs() / w).max(0.0));
        let coarse: Vec<f64> = (0..11).map(|i| -0.5 + i as f64 * 0.1).collect();
        let cy: Vec<f64> = coarse.iter().map(|&v| tri(v).unwrap()).collect();
        assert!((fwhm_refined(&coarse, &cy, tri, 1e-12).unwrap() - w).abs() < 1e-10);
    }

    #[test]
    fn fwhm_errors() {
        let x = [0.0, 1.0, 2.0];
        assert!(fwhm(&x, &[0.0, 0.0, 0.0]).is_err());
        assert!(fwhm(&x, &[1.0, 0.9, 0.1]).is_err());
    }

    #[test]
    fn decay_fit_recovers_rate() {
        let t: Vec<f64> = (0..30).map(|i| 0.1 + 0.2 * i as f64).collect();
        let mut f: Vec<f64> = t.iter().map(|x| 0.9 * (-1.7 * x).exp()).collect();
        // a too-fast regime at the front is cut by the automatic window
        f[0] = 0.01;
        f[1] = 0.3;
        let fit = decay_fit(&t, &f, DecayWindow::Auto).unwrap();
        assert!((fit.rate - 1.7).abs() < 1e-6 * 1.7);
        assert_eq!(fit.window_us.0, t[2]);
        assert!(decay_fit(&t[..3], &f[..3], DecayWindow::Auto).is_err());
    }
}
