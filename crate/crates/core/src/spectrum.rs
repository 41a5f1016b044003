//! Instantaneous spectra, gap minima and the optimal catalyst strength.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fit::{least_squares, linear_fit, LinearFit};
use crate::hamiltonian::{reduced_operators, AnnealingOperators, CatalystSpec};
use crate::instance::{GraphInstance, ProblemParams};
use crate::linalg::SymmetricEigen;
use crate::optimize::{brent, golden_section, nested_brent};
use crate::scalar::Real;

/// Eigenvalues E_a(s) on a grid, ascending per point.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SpectrumResult<T> {
    pub s_grid: Vec<T>,
    /// `energies[i][a]` is E_a(s_grid[i]) in GHz.
    pub energies: Vec<Vec<T>>,
    pub level_count: usize,
}

impl<T: Real> SpectrumResult<T> {
    pub fn level(&self, a: usize) -> Vec<T> {
        self.energies.iter().map(|e| e[a]).collect()
    }

    /// ΔE₀₁(s) on the grid.
    pub fn gap01(&self) -> Vec<T> {
        self.energies.iter().map(|e| e[1] - e[0]).collect()
    }

    /// Largest |E_a(s_{i+1}) - E_a(s_i)| divided by the grid step.
    pub fn max_level_slope(&self, a: usize) -> T {
        self.energies
            .windows(2)
            .zip(self.s_grid.windows(2))
            .map(|(e, s)| (e[1][a] - e[0][a]).abs() / (s[1] - s[0]))
            .fold(T::zero(), T::max)
    }
}

/// `points` equally spaced values from `lo` to `hi` inclusive.
pub fn uniform_grid<T: Real>(lo: T, hi: T, points: usize) -> Vec<T> {
    match points {
        0 => Vec::new(),
        1 => vec![lo],
        _ => {
            let step = (hi - lo) / T::from_usize_lossy(points - 1);
            (0..points)
                .map(|i| if i + 1 == points { hi } else { lo + step * T::from_usize_lossy(i) })
                .collect()
        }
    }
}

/// Sorted eigenvalues of H(s).
pub fn eigenvalues_at<T: Real>(ops: &AnnealingOperators<T>, s: T) -> Result<Vec<T>> {
    let h = ops.at(s)?;
    SymmetricEigen::values_only(&h).map_err(|e| match e {
        Error::Eigensolver { .. } => Error::Eigensolver { s: s.to_f64_lossy() },
        other => other,
    })
}

pub fn gap01_at<T: Real>(ops: &AnnealingOperators<T>, s: T) -> Result<T> {
    let e = eigenvalues_at(ops, s)?;
    if e.len() < 2 {
        return Err(Error::Degenerate("one-dimensional Hilbert space has no gap".into()));
    }
    Ok(e[1] - e[0])
}

pub fn compute_spectrum<T: Real>(ops: &AnnealingOperators<T>, s_grid: &[T], level_count: usize) -> Result<SpectrumResult<T>> {
    if s_grid.is_empty() {
        return Err(Error::InvalidArgument("empty s grid".into()));
    }
    if s_grid.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(Error::InvalidArgument("s grid must be strictly increasing".into()));
    }
    if let Some(bad) = s_grid.iter().find(|s| !(**s >= T::zero() && **s <= T::one())) {
        return Err(Error::ScheduleOutOfRange(bad.to_f64_lossy()));
    }
    if level_count == 0 || level_count > ops.dim() {
        return Err(Error::InvalidArgument(format!(
            "level count {level_count} not in 1..={}",
            ops.dim()
        )));
    }
    let energies = s_grid
        .par_iter()
        .map(|&s| eigenvalues_at(ops, s).map(|mut e| {
            e.truncate(level_count);
            e
        }))
        .collect::<Result<Vec<_>>>()?;
    Ok(SpectrumResult {
        s_grid: s_grid.to_vec(),
        energies,
        level_count,
    })
}

/// A refined local minimum of ΔE₀₁(s) with its local curvature data.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct GapMinimum<T> {
    pub s_star: T,
    /// ΔE₀₁(s*) in GHz.
    pub gap: T,
    /// E₀''(s*) in GHz.
    pub d2e0: T,
    /// E₁''(s*) in GHz.
    pub d2e1: T,
    /// Slope of (E₀ + E₁)/2 at s*.
    pub d1_mean: T,
    /// Resolution in s of the refinement.
    pub refinement_tolerance: T,
    /// Finite-difference step used for the derivatives.
    pub fd_step: T,
    /// Largest relative change of E₀'' or E₁'' when the step is halved.
    pub fd_halving_change: T,
}

/// Knobs for locating gap minima.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct GapSearchOptions {
    pub coarse_points: usize,
    /// Minima shallower than this fraction of the median gap are noise.
    pub prominence_fraction: f64,
    pub s_tolerance: f64,
}

impl Default for GapSearchOptions {
    fn default() -> Self {
        Self {
            coarse_points: 2001,
            prominence_fraction: 1e-3,
            s_tolerance: 1e-10,
        }
    }
}

/// Refines the minimum of ΔE₀₁ inside `[lo, hi]`; returns (s*, gap, tolerance).
pub fn refine_gap_minimum<T: Real>(ops: &AnnealingOperators<T>, lo: T, hi: T, s_tol: T) -> Result<(T, T, T)> {
    let (m, tol) = nested_brent(|s| gap01_at(ops, s), lo, hi, s_tol)?;
    Ok((m.x, m.fx, tol))
}

/// Local derivative data of the two lowest levels.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct LocalDerivatives<T> {
    pub d2e0: T,
    pub d2e1: T,
    pub d1_mean: T,
    pub step: T,
    pub halving_change: T,
}

fn stencil<T: Real>(ops: &AnnealingOperators<T>, s: T, h: T) -> Result<(T, T, T)> {
    let mut e0 = [T::zero(); 5];
    let mut e1 = [T::zero(); 5];
    for (k, off) in [-2.0, -1.0, 0.0, 1.0, 2.0].iter().enumerate() {
        let e = eigenvalues_at(ops, s + T::lit(*off) * h)?;
        e0[k] = e[0];
        e1[k] = e[1];
    }
    let twelve_h2 = T::lit(12.0) * h * h;
    let d2 = |f: &[T; 5]| (-f[0] + T::lit(16.0) * f[1] - T::lit(30.0) * f[2] + T::lit(16.0) * f[3] - f[4]) / twelve_h2;
    let d1 = |f: &[T; 5]| (f[0] - T::lit(8.0) * f[1] + T::lit(8.0) * f[3] - f[4]) / (T::lit(12.0) * h);
    let mean = |k: usize| (e0[k] + e1[k]) / T::lit(2.0);
    let m = [mean(0), mean(1), mean(2), mean(3), mean(4)];
    Ok((d2(&e0), d2(&e1), d1(&m)))
}

/// Five-point central differences at `s` for a minimum of size `gap`.
///
/// Near an avoided crossing the levels bend over a width
/// w = √(gap / 2|E''|); the step is 5% of w, floored where rounding of the
/// eigenvalues would dominate, and iterated since w depends on E''.
pub fn local_derivatives<T: Real>(ops: &AnnealingOperators<T>, s: T, gap: T) -> Result<LocalDerivatives<T>> {
    let eps = T::epsilon();
    let e_scale = eigenvalues_at(ops, s)?[0].abs().max(T::one());
    let room = s.min(T::one() - s) / T::lit(2.5);
    if !(room > T::zero()) {
        return Err(Error::InvalidArgument("derivatives need an interior point".into()));
    }
    let mut h = T::lit(1e-4).min(room);
    let mut d = stencil(ops, s, h)?;
    for _ in 0..8 {
        let curv = ((d.0.abs() + d.1.abs()) / T::lit(2.0)).max(eps);
        let width = (gap.max(T::zero()) / (T::lit(2.0) * curv)).sqrt();
        let floor = (T::lit(5.3e4) * eps * e_scale / curv).sqrt();
        let next = (T::lit(0.05) * width).max(floor).min(T::lit(1e-2)).min(room);
        let settled = ((next - h) / h).abs() < T::lit(0.1);
        h = next;
        d = stencil(ops, s, h)?;
        if settled {
            break;
        }
    }
    let half = stencil(ops, s, h / T::lit(2.0))?;
    let rel = |a: T, b: T| ((a - b) / a.abs().max(eps)).abs();
    Ok(LocalDerivatives {
        d2e0: d.0,
        d2e1: d.1,
        d1_mean: d.2,
        step: h,
        halving_change: rel(d.0, half.0).max(rel(d.1, half.1)),
    })
}

fn refine_at<T: Real>(ops: &AnnealingOperators<T>, lo: T, hi: T, s_tol: T) -> Result<GapMinimum<T>> {
    let (s_star, gap, tol) = refine_gap_minimum(ops, lo, hi, s_tol)?;
    let d = local_derivatives(ops, s_star, gap)?;
    Ok(GapMinimum {
        s_star,
        gap,
        d2e0: d.d2e0,
        d2e1: d.d2e1,
        d1_mean: d.d1_mean,
        refinement_tolerance: tol,
        fd_step: d.step,
        fd_halving_change: d.halving_change,
    })
}

fn median<T: Real>(v: &[T]) -> T {
    let mut s = v.to_vec();
    s.sort_by(|a, b| a.partial_cmp(b).expect("finite"));
    s[s.len() / 2]
}

/// Indices of interior grid minima of `g` with prominence above `threshold`.
pub fn prominent_minima<T: Real>(g: &[T], threshold: T) -> Vec<usize> {
    let n = g.len();
    let mut out = Vec::new();
    for i in 1..n.saturating_sub(1) {
        if !(g[i] < g[i - 1] && g[i] <= g[i + 1]) {
            continue;
        }
        let mut left = g[i];
        for j in (0..i).rev() {
            if g[j] < g[i] {
                break;
            }
            left = left.max(g[j]);
        }
        let mut right = g[i];
        for &gj in &g[i + 1..] {
            if gj < g[i] {
                break;
            }
            right = right.max(gj);
        }
        if left.min(right) - g[i] > threshold {
            out.push(i);
        }
    }
    out
}

/// Every prominent interior minimum of ΔE₀₁ on `spec`, refined on the exact gap.
pub fn find_gap_minima<T: Real>(spec: &SpectrumResult<T>, ops: &AnnealingOperators<T>, opts: &GapSearchOptions) -> Result<Vec<GapMinimum<T>>> {
    if spec.level_count < 2 {
        return Err(Error::InvalidArgument("need at least two levels".into()));
    }
    let g = spec.gap01();
    let threshold = T::lit(opts.prominence_fraction) * median(&g);
    let idx = prominent_minima(&g, threshold);
    if idx.is_empty() {
        return Err(Error::NoGapMinimum(String::new()));
    }
    let s_tol = T::lit(opts.s_tolerance);
    idx.par_iter()
        .map(|&i| refine_at(ops, spec.s_grid[i - 1], spec.s_grid[i + 1], s_tol))
        .collect()
}

/// Coarse spectrum over the open unit interval followed by [`find_gap_minima`].
pub fn gap_minima<T: Real>(ops: &AnnealingOperators<T>, opts: &GapSearchOptions) -> Result<Vec<GapMinimum<T>>> {
    let grid = uniform_grid(T::zero(), T::one(), opts.coarse_points);
    let spec = compute_spectrum(ops, &grid, 2)?;
    find_gap_minima(&spec, ops, opts)
}

/// A refined local minimum of E_upper - E_lower.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct LevelGapMinimum<T> {
    pub lower: usize,
    pub upper: usize,
    pub s_star: T,
    pub gap: T,
}

/// Prominent interior minima of the gap between levels `lower < upper` on
/// `spec`, each refined by Brent on the exact eigenvalues.
pub fn level_gap_minima<T: Real>(spec: &SpectrumResult<T>, ops: &AnnealingOperators<T>, lower: usize, upper: usize, opts: &GapSearchOptions) -> Result<Vec<LevelGapMinimum<T>>> {
    if !(lower < upper && upper < spec.level_count) {
        return Err(Error::InvalidArgument(format!("levels ({lower}, {upper}) not within the {} computed", spec.level_count)));
    }
    let g: Vec<T> = spec.level(upper).iter().zip(spec.level(lower)).map(|(u, l)| *u - l).collect();
    let threshold = T::lit(opts.prominence_fraction) * median(&g);
    let gap_at = |s: T| eigenvalues_at(ops, s).map(|e| e[upper] - e[lower]);
    prominent_minima(&g, threshold)
        .par_iter()
        .map(|&i| {
            let m = brent(gap_at, spec.s_grid[i - 1], spec.s_grid[i + 1], T::lit(opts.s_tolerance), 200)?;
            Ok(LevelGapMinimum { lower, upper, s_star: m.x, gap: m.fx })
        })
        .collect()
}

/// Smallest refined ΔE₀₁ with `s` in `[lo, hi]`; returns (s*, gap).
pub fn window_min_gap<T: Real>(ops: &AnnealingOperators<T>, lo: T, hi: T, points: usize, s_tol: T) -> Result<(T, T)> {
    let grid = uniform_grid(lo, hi, points.max(3));
    let g = grid.iter().map(|&s| gap01_at(ops, s)).collect::<Result<Vec<_>>>()?;
    let k = (0..g.len())
        .min_by(|&a, &b| g[a].partial_cmp(&g[b]).expect("finite gaps"))
        .expect("nonempty grid");
    let l = grid[k.saturating_sub(1)];
    let r = grid[(k + 1).min(grid.len() - 1)];
    let (s, gap, _) = refine_gap_minimum(ops, l, r, s_tol)?;
    Ok((s, gap))
}

/// [`window_min_gap`] followed by the local derivatives at the minimum.
pub fn window_gap_minimum<T: Real>(ops: &AnnealingOperators<T>, lo: T, hi: T, points: usize, s_tol: T) -> Result<GapMinimum<T>> {
    let (s_star, gap) = window_min_gap(ops, lo, hi, points, s_tol)?;
    let d = local_derivatives(ops, s_star, gap)?;
    Ok(GapMinimum {
        s_star,
        gap,
        d2e0: d.d2e0,
        d2e1: d.d2e1,
        d1_mean: d.d1_mean,
        refinement_tolerance: s_tol,
        fd_step: d.step,
        fd_halving_change: d.halving_change,
    })
}

/// Catalyst-window minimum at strength `jxx` with derivatives.
pub fn catalyst_gap_minimum<T: Real>(params: &ProblemParams<T>, pairs: &[(usize, usize)], jxx: f64, opts: &JStarOptions) -> Result<GapMinimum<T>> {
    let cat = CatalystSpec::new(pairs.to_vec(), jxx)?;
    let ops = reduced_operators(params, Some(&cat))?;
    window_gap_minimum(&ops, T::lit(opts.window.0), T::lit(opts.window.1), opts.window_points, T::lit(opts.s_tolerance))
}

/// Per-size minimum gaps and the fit of ln(gap) against n.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct GapScaling<T> {
    pub sizes: Vec<usize>,
    pub s_stars: Vec<T>,
    pub gaps: Vec<T>,
    pub fit: LinearFit<T>,
}

/// Catalyst-free minimum gap of the bipartite family for each size.
pub fn min_gap_scaling<T: Real>(sizes: &[usize], energy_scale: f64, opts: &GapSearchOptions) -> Result<GapScaling<T>> {
    if sizes.len() < 4 {
        return Err(Error::InvalidArgument(format!("need at least 4 sizes, got {}", sizes.len())));
    }
    let mut s_stars = Vec::new();
    let mut gaps = Vec::new();
    for &n in sizes {
        let params = GraphInstance::bipartite_default(n, energy_scale)?.normalize::<T>()?;
        let ops = reduced_operators(&params, None)?;
        let minima = gap_minima(&ops, opts)?;
        let best = minima
            .iter()
            .min_by(|a, b| a.gap.partial_cmp(&b.gap).expect("finite"))
            .expect("at least one minimum");
        if !(best.gap > T::zero()) {
            return Err(Error::Fit(format!("non-positive gap at n = {n}")));
        }
        s_stars.push(best.s_star);
        gaps.push(best.gap);
    }
    let x: Vec<T> = sizes.iter().map(|&n| T::from_usize_lossy(n)).collect();
    let y: Vec<T> = gaps.iter().map(|g| g.ln()).collect();
    let fit = linear_fit(&x, &y)?;
    Ok(GapScaling {
        sizes: sizes.to_vec(),
        s_stars,
        gaps,
        fit,
    })
}

/// Knobs for the J*xx search.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct JStarOptions {
    /// Anneal window holding the catalyst-created minimum.
    pub window: (f64, f64),
    pub window_points: usize,
    pub scan_points: usize,
    pub j_tolerance: f64,
    pub s_tolerance: f64,
}

impl Default for JStarOptions {
    fn default() -> Self {
        Self {
            window: (0.2, 0.75),
            window_points: 201,
            scan_points: 41,
            j_tolerance: 1e-10,
            s_tolerance: 1e-10,
        }
    }
}

/// Result of the J*xx search.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct JStar {
    pub j_star: f64,
    pub residual_gap: f64,
    pub s_star: f64,
    /// (Jxx, window minimum gap) of the coarse scan.
    pub scan: Vec<(f64, f64)>,
}

/// Catalyst-window minimum gap at strength `jxx`.
pub fn catalyst_window_gap<T: Real>(params: &ProblemParams<T>, pairs: &[(usize, usize)], jxx: f64, opts: &JStarOptions) -> Result<(T, T)> {
    let cat = CatalystSpec::new(pairs.to_vec(), jxx)?;
    let ops = reduced_operators(params, Some(&cat))?;
    window_min_gap(&ops, T::lit(opts.window.0), T::lit(opts.window.1), opts.window_points, T::lit(opts.s_tolerance))
}

/// Coarse scan of `bracket` then golden-section refinement of the strength
/// that closes the catalyst-window gap.
pub fn find_optimal_jxx<T: Real>(params: &ProblemParams<T>, pairs: &[(usize, usize)], bracket: (f64, f64), opts: &JStarOptions) -> Result<JStar> {
    let (lo, hi) = bracket;
    if !(hi > lo && lo >= 0.0) || opts.scan_points < 3 {
        return Err(Error::InvalidArgument(format!("bad Jxx bracket [{lo}, {hi}]")));
    }
    let js = uniform_grid(lo, hi, opts.scan_points);
    let scan: Vec<(f64, f64)> = js
        .par_iter()
        .map(|&j| catalyst_window_gap(params, pairs, j, opts).map(|(_, g)| (j, g.to_f64_lossy())))
        .collect::<Result<_>>()?;
    let k = (0..scan.len())
        .min_by(|&a, &b| scan[a].1.partial_cmp(&scan[b].1).expect("finite"))
        .expect("nonempty scan");
    if k == 0 || k + 1 == scan.len() {
        return Err(Error::Bracket { lo, hi });
    }
    let m = golden_section(
        |j: f64| catalyst_window_gap(params, pairs, j, opts).map(|(_, g)| g.to_f64_lossy()),
        js[k - 1],
        js[k + 1],
        opts.j_tolerance,
        400,
    )?;
    let (s_star, gap) = catalyst_window_gap(params, pairs, m.x, opts)?;
    Ok(JStar {
        j_star: m.x,
        residual_gap: gap.to_f64_lossy(),
        s_star: s_star.to_f64_lossy(),
        scan,
    })
}

/// Catalyst gap as a function of the detuning ΔJxx.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct GapVsDelta {
    pub deltas: Vec<f64>,
    pub gaps: Vec<f64>,
    pub s_stars: Vec<f64>,
    /// Two-sided linear model gap ≈ c + a₊ max(Δ,0) + a₋ max(-Δ,0).
    pub intercept: f64,
    pub slope_pos: f64,
    pub slope_neg: f64,
    /// (a₊ - a₋) / ((a₊ + a₋)/2).
    pub asymmetry: f64,
    /// Largest residual of the two-sided model over the largest gap.
    pub relative_residual: f64,
}

pub fn gap_vs_delta<T: Real>(params: &ProblemParams<T>, pairs: &[(usize, usize)], j_star: f64, deltas: &[f64], opts: &JStarOptions) -> Result<GapVsDelta> {
    if deltas.len() < 3 {
        return Err(Error::InvalidArgument("need at least three detunings".into()));
    }
    let pts: Vec<(f64, f64)> = deltas
        .par_iter()
        .map(|&d| {
            catalyst_window_gap(params, pairs, j_star * (1.0 + d), opts)
                .map(|(s, g)| (s.to_f64_lossy(), g.to_f64_lossy()))
        })
        .collect::<Result<_>>()?;
    let gaps: Vec<f64> = pts.iter().map(|p| p.1).collect();
    let rows: Vec<Vec<f64>> = deltas.iter().map(|&d| vec![1.0, d.max(0.0), (-d).max(0.0)]).collect();
    let ls = least_squares(&rows, &gaps)?;
    let (c, ap, an) = (ls.coefficients[0], ls.coefficients[1], ls.coefficients[2]);
    let gmax = gaps.iter().copied().fold(0.0, f64::max);
    Ok(GapVsDelta {
        deltas: deltas.to_vec(),
        s_stars: pts.iter().map(|p| p.0).collect(),
        gaps,
        intercept: c,
        slope_pos: ap,
        slope_neg: an,
        asymmetry: (ap - an) / ((ap + an) / 2.0),
        relative_residual: ls.max_abs_residual / gmax,
    })
}
