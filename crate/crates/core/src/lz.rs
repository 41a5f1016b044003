//! Landau-Zener description of a single avoided crossing.
//!
//! Near s* the two levels are modelled as E = Ē ± ½√((A-B)²(s-s*)² + 4C²),
//! which gives ΔE(s*) = 2C and E'' = ±(A-B)²/4C at the minimum. Inverting
//! those two relations turns measured gap and curvature into C, A and B.

use serde::{Deserialize, Serialize};

use crate::cache::Cache;
use crate::dynamics::{cached_final_fidelities, decay_fit, DecayFit, DecayWindow, EvolveOptions};
use crate::error::{Error, Result};
use crate::hamiltonian::CatalystSpec;
use crate::instance::ProblemParams;
use crate::scalar::Real;
use crate::spectrum::{catalyst_gap_minimum, GapMinimum, JStarOptions};
use crate::units::phase_per_ghz_us;

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct LzParams<T> {
    /// Half the minimum gap, GHz.
    pub c: T,
    /// Asymptotic slopes dE/ds of the crossing diabats, GHz; `a > b`.
    pub a: T,
    pub b: T,
    /// Mean slope (E₀' + E₁')/2 at s*.
    pub e_prime: T,
    /// Decay rate per μs from the mean curvature.
    pub gamma: T,
    /// Smaller and larger of the rates from |E₀''| and |E₁''|.
    pub gamma_lo: T,
    pub gamma_hi: T,
    /// Set when the gap vanished and the rates were forced to zero.
    pub zero_gap: bool,
    pub source: GapMinimum<T>,
}

/// 2πC²/|A-B| in per-unit-s GHz, for a gap ΔE = 2C and |A-B| = √(2ΔE|E''|).
pub fn lz_exponent<T: Real>(gap: T, curvature: T) -> T {
    let c = gap / T::lit(2.0);
    let slope = (T::lit(2.0) * gap * curvature.abs()).sqrt();
    T::TAU() * c * c / slope
}

/// Decay rate per μs from the Landau-Zener exponent with t = s·t_a.
pub fn gamma_from_crossing<T: Real>(gap: T, curvature: T) -> T {
    phase_per_ghz_us::<T>() * lz_exponent(gap, curvature)
}

/// The same rate written directly in gap and curvature:
/// Γ = (π/(2√2)) ΔE² / √(ΔE|E''|), converted to per μs.
pub fn gamma_closed_form<T: Real>(gap: T, curvature: T) -> T {
    let coeff = T::PI() / (T::lit(2.0) * T::SQRT_2());
    phase_per_ghz_us::<T>() * coeff * gap * gap / (gap * curvature.abs()).sqrt()
}

pub fn extract_lz_params<T: Real>(gap_min: &GapMinimum<T>) -> Result<LzParams<T>> {
    let k0 = gap_min.d2e0.abs();
    let k1 = gap_min.d2e1.abs();
    let usable = |k: T| k.is_finite() && k > T::zero();
    if !usable(k0) && !usable(k1) {
        return Err(Error::Degenerate("zero curvature at the gap minimum".into()));
    }
    let (k0, k1) = match (usable(k0), usable(k1)) {
        (true, true) => (k0, k1),
        (true, false) => (k0, k0),
        _ => (k1, k1),
    };
    let mean = (k0 + k1) / T::lit(2.0);
    let gap = gap_min.gap;
    let c = gap / T::lit(2.0);
    let half_split = (gap * mean / T::lit(2.0)).sqrt();
    let (a, b) = (gap_min.d1_mean + half_split, gap_min.d1_mean - half_split);
    if !(gap > T::zero()) {
        return Ok(LzParams {
            c: T::zero(),
            a,
            b,
            e_prime: gap_min.d1_mean,
            gamma: T::zero(),
            gamma_lo: T::zero(),
            gamma_hi: T::zero(),
            zero_gap: true,
            source: gap_min.clone(),
        });
    }
    let g0 = gamma_from_crossing(gap, k0);
    let g1 = gamma_from_crossing(gap, k1);
    Ok(LzParams {
        c,
        a,
        b,
        e_prime: gap_min.d1_mean,
        gamma: gamma_from_crossing(gap, mean),
        gamma_lo: g0.min(g1),
        gamma_hi: g0.max(g1),
        zero_gap: false,
        source: gap_min.clone(),
    })
}

/// Diabatic survival P_D = exp(-Γ t_a) for an anneal of `t_a_us` μs.
pub fn predicted_fidelity<T: Real>(params: &LzParams<T>, t_a_us: T) -> T {
    (-params.gamma * t_a_us.max(T::zero())).exp()
}

/// `(lo, hi)` band of P_D from the single-curvature rates.
pub fn predicted_band<T: Real>(params: &LzParams<T>, t_a_us: T) -> (T, T) {
    let t = t_a_us.max(T::zero());
    ((-params.gamma_hi * t).exp(), (-params.gamma_lo * t).exp())
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct LzRow {
    pub t_a_us: f64,
    pub f_numeric: f64,
    pub f_lz: f64,
    /// |f_numeric - f_lz| / f_lz.
    pub rel_deviation: f64,
    /// Anneal faster than the fidelity peak; excluded from agreement claims.
    pub too_fast: bool,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct LzEntry {
    pub delta: f64,
    pub s_star: f64,
    pub gap_ghz: f64,
    #[serde(rename = "C")]
    pub c: f64,
    #[serde(rename = "A")]
    pub a: f64,
    #[serde(rename = "B")]
    pub b: f64,
    pub gamma_mean: f64,
    pub gamma_lo: f64,
    pub gamma_hi: f64,
    /// Exponential fit of the numeric column, when the window allows one.
    pub fitted: Option<DecayFit>,
    pub rows: Vec<LzRow>,
}

/// Numeric final GS fidelity next to the Landau-Zener prediction for each
/// detuning and anneal time.
pub fn lz_report(
    params: &ProblemParams<f64>,
    pairs: &[(usize, usize)],
    j_star: f64,
    deltas: &[f64],
    t_axis_us: &[f64],
    search: &JStarOptions,
    evolve: &EvolveOptions,
    cache: Option<&Cache>,
) -> Result<Vec<LzEntry>> {
    let mut out = Vec::with_capacity(deltas.len());
    for &delta in deltas {
        let cat = CatalystSpec::detuned(pairs.to_vec(), j_star, delta)?;
        let gm = catalyst_gap_minimum(params, pairs, cat.strength, search)?;
        let lz = extract_lz_params(&gm)?;
        let numeric = t_axis_us
            .iter()
            .map(|&t| cached_final_fidelities(params, &cat, t, evolve, cache).map(|((gs, _), _)| gs))
            .collect::<Result<Vec<f64>>>()?;
        let peak = (0..numeric.len())
            .max_by(|&a, &b| numeric[a].partial_cmp(&numeric[b]).expect("finite"))
            .map(|k| t_axis_us[k])
            .unwrap_or(0.0);
        let fitted = decay_fit(t_axis_us, &numeric, DecayWindow::Auto).ok();
        let rows = t_axis_us
            .iter()
            .zip(&numeric)
            .map(|(&t, &f)| {
                let f_lz = predicted_fidelity(&lz, t);
                LzRow {
                    t_a_us: t,
                    f_numeric: f,
                    f_lz,
                    rel_deviation: (f - f_lz).abs() / f_lz.max(f64::MIN_POSITIVE),
                    too_fast: t < peak,
                }
            })
            .collect();
        out.push(LzEntry {
            delta,
            s_star: gm.s_star,
            gap_ghz: gm.gap,
            c: lz.c,
            a: lz.a,
            b: lz.b,
            gamma_mean: lz.gamma,
            gamma_lo: lz.gamma_lo,
            gamma_hi: lz.gamma_hi,
            fitted,
            rows,
        });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn minimum(gap: f64, d2e0: f64, d2e1: f64, slope: f64) -> GapMinimum<f64> {
        GapMinimum {
            s_star: 0.5,
            gap,
            d2e0,
            d2e1,
            d1_mean: slope,
            refinement_tolerance: 1e-10,
            fd_step: 1e-4,
            fd_halving_change: 0.0,
        }
    }

    #[test]
    fn recovers_two_level_parameters() {
        // exact hyperbola with slopes 3 and -1, C = 0.02
        let (a, b, c) = (3.0, -1.0, 0.02);
        let k = (a - b) * (a - b) / (4.0 * c);
        let p = extract_lz_params(&minimum(2.0 * c, -k, k, (a + b) / 2.0)).unwrap();
        assert!((p.c - c).abs() < 1e-12);
        assert!((p.a - a).abs() < 1e-6 * a);
        assert!((p.b - b).abs() < 1e-6);
        assert!(p.a > p.b);
        let want = phase_per_ghz_us::<f64>() * std::f64::consts::TAU * c * c / (a - b);
        assert!((p.gamma - want).abs() < 1e-10 * want);
    }

    #[test]
    fn closed_form_matches_crossing_form() {
        for &(gap, k) in &[(1e-3f64, 40.0f64), (0.0298, 24.9), (0.0149, 39.6), (1e-7, 1.7e6)] {
            let x = gamma_from_crossing(gap, k);
            let y = gamma_closed_form(gap, k);
            assert!((x - y).abs() < 1e-10 * x, "{x} {y}");
        }
    }

    #[test]
    fn printed_coefficient_is_twice_the_derived_one() {
        let (gap, k) = (0.0149, 39.6f64);
        let printed = phase_per_ghz_us::<f64>() * std::f64::consts::PI / std::f64::consts::SQRT_2 * gap * gap / (gap * k).sqrt();
        assert!((printed / gamma_from_crossing(gap, k) - 2.0).abs() < 1e-12);
    }

    #[test]
    fn zero_gap_never_decays() {
        let p = extract_lz_params(&minimum(0.0, -5.0, 5.0, 0.0)).unwrap();
        assert!(p.zero_gap);
        assert_eq!(p.gamma, 0.0);
        assert_eq!(predicted_fidelity(&p, 100.0), 1.0);
    }

    #[test]
    fn zero_curvature_is_rejected() {
        assert!(matches!(extract_lz_params(&minimum(0.01, 0.0, 0.0, 0.0)), Err(Error::Degenerate(_))));
    }

    #[test]
    fn fidelity_is_monotone_and_starts_at_one() {
        let p = extract_lz_params(&minimum(0.02, -30.0, 10.0, 1.0)).unwrap();
        assert_eq!(predicted_fidelity(&p, 0.0), 1.0);
        let mut prev = 1.0;
        for i in 1..50 {
            let f = predicted_fidelity(&p, i as f64 * 0.1);
            assert!(f <= prev);
            prev = f;
        }
    }

    #[test]
    fn mean_curvature_rate_sits_inside_the_envelope() {
        let p = extract_lz_params(&minimum(0.02, -30.0, 10.0, 1.0)).unwrap();
        assert!(p.gamma_lo < p.gamma && p.gamma < p.gamma_hi);
        // larger curvature, smaller rate
        assert!((p.gamma_lo - gamma_from_crossing(0.02, 30.0)).abs() < 1e-12);
        let (lo, hi) = predicted_band(&p, 0.3);
        assert!(lo <= predicted_fidelity(&p, 0.3) && predicted_fidelity(&p, 0.3) <= hi);
    }

    #[test]
    fn rate_grows_with_gap() {
        let mut prev = 0.0;
        for i in 1..20 {
            let g = gamma_from_crossing(i as f64 * 1e-3, 20.0);
            assert!(g > prev);
            prev = g;
        }
    }
}
