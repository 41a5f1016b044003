//! Second-order perturbation theory around the classical states.
//!
//! Writing H(s)/s = H_p + λH_d with λ = (1-s)/s, the driver flips single
//! spins with unit amplitude, so a problem state a shifts by
//! λ² Σ_c 1/(E_a - E_c) over its n single-flip neighbours c. A state with a
//! larger, lower-lying neighbourhood is pushed down faster and can overtake
//! the classical ground state.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hamiltonian::reduced_operators;
use crate::instance::{Bitstring, GraphInstance, ProblemParams};
use crate::scalar::Real;
use crate::spectrum::{gap_minima, GapSearchOptions};

/// All single-flip neighbours of `state` with their classical energies.
pub fn neighborhood<T: Real>(params: &ProblemParams<T>, state: &Bitstring) -> Result<Vec<(Bitstring, T)>> {
    if state.len() != params.n_qubits() {
        return Err(Error::DimensionMismatch {
            expected: params.n_qubits(),
            got: state.len(),
        });
    }
    (0..state.len())
        .map(|q| {
            let c = state.flipped(q);
            params.classical_energy(&c).map(|e| (c, e))
        })
        .collect()
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct PerturbedLevel<T> {
    pub state: Bitstring,
    pub bare_energy: T,
    pub neighborhood: Vec<(Bitstring, T)>,
    /// Σ_c 1/(E_a - E_c), GHz⁻¹.
    pub coefficient: T,
    /// Bare energy within δ of the classical ground energy.
    pub low_energy: bool,
}

impl<T: Real> PerturbedLevel<T> {
    pub fn new(params: &ProblemParams<T>, state: &Bitstring, ground_energy: T, delta: T) -> Result<Self> {
        let bare = params.classical_energy(state)?;
        let neighborhood = neighborhood(params, state)?;
        let mut coefficient = T::zero();
        for (c, e) in &neighborhood {
            let d = bare - *e;
            if d == T::zero() {
                return Err(Error::Degenerate(format!("neighbour {c} is degenerate with {state}")));
            }
            coefficient = coefficient + d.recip();
        }
        Ok(Self {
            state: state.clone(),
            bare_energy: bare,
            neighborhood,
            coefficient,
            low_energy: bare - ground_energy <= delta,
        })
    }

    /// E_a + λ² Σ_c 1/(E_a - E_c).
    pub fn energy(&self, lambda: T) -> T {
        self.bare_energy + lambda * lambda * self.coefficient
    }
}

/// Distinct classical levels E₀ < E₁ < E₂ and the default δ = ½(E₂ - E₀).
pub fn default_delta<T: Real>(params: &ProblemParams<T>) -> Result<T> {
    let spec = params.classical_spectrum()?;
    let e0 = spec[0].1;
    let tol = T::lit(1e-9) * e0.abs().max(T::one());
    let mut distinct = vec![e0];
    for (_, e) in &spec {
        if *e - *distinct.last().expect("nonempty") > tol {
            distinct.push(*e);
            if distinct.len() == 3 {
                break;
            }
        }
    }
    if distinct.len() < 3 {
        return Err(Error::Degenerate("fewer than three distinct classical levels".into()));
    }
    Ok((distinct[2] - distinct[0]) / T::lit(2.0))
}

/// Crossing of two perturbed levels.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct CrossingPrediction<T> {
    pub state_a: Bitstring,
    pub state_b: Bitstring,
    /// None when the upper level never catches the lower one.
    pub lambda_star: Option<T>,
    /// s = 1/(1 + λ*).
    pub s_star: Option<T>,
    pub coeff_a: T,
    pub coeff_b: T,
    #[serde(rename = "in_L_delta")]
    pub in_l_delta: bool,
}

/// λ* where the perturbed energies of `a` and `b` meet, if any.
pub fn predict_crossing<T: Real>(params: &ProblemParams<T>, a: &Bitstring, b: &Bitstring, delta: Option<T>) -> Result<CrossingPrediction<T>> {
    let spec = params.classical_spectrum()?;
    let e0 = spec[0].1;
    let delta = match delta {
        Some(d) => d,
        None => default_delta(params)?,
    };
    let la = PerturbedLevel::new(params, a, e0, delta)?;
    let lb = PerturbedLevel::new(params, b, e0, delta)?;
    let in_l_delta = la.low_energy && lb.low_energy;
    if !in_l_delta {
        return Err(Error::InvalidArgument(format!(
            "states {a} and {b} are not both within δ of the ground energy"
        )));
    }
    let (lo, hi) = if la.bare_energy <= lb.bare_energy { (&la, &lb) } else { (&lb, &la) };
    let gap = hi.bare_energy - lo.bare_energy;
    // for negative coefficients this is |κ_hi| - |κ_lo|
    let denom = lo.coefficient - hi.coefficient;
    let lambda_star = (denom > T::zero()).then(|| (gap / denom).sqrt());
    Ok(CrossingPrediction {
        state_a: a.clone(),
        state_b: b.clone(),
        lambda_star,
        s_star: lambda_star.map(|l| (T::one() + l).recip()),
        coeff_a: la.coefficient,
        coeff_b: lb.coefficient,
        in_l_delta,
    })
}

/// The bipartite (GS, 1ES) pair: all of G₀ against all of G₁.
pub fn bipartite_pair<T: Real>(params: &ProblemParams<T>) -> (Bitstring, Bitstring) {
    (params.subgraph_state(0), params.subgraph_state(1))
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct HammingRow {
    pub n: usize,
    pub hamming: usize,
    pub min_gap: f64,
    pub s_star: f64,
    pub predicted_s_star: Option<f64>,
}

/// Hamming distance between the two optima next to the exact catalyst-free
/// minimum gap, per bipartite size.
pub fn hamming_gap_trend(sizes: &[usize], energy_scale: f64, opts: &GapSearchOptions) -> Result<Vec<HammingRow>> {
    sizes
        .iter()
        .map(|&n| {
            let params = GraphInstance::bipartite_default(n, energy_scale)?.normalize::<f64>()?;
            let (gs, es) = bipartite_pair(&params);
            let ops = reduced_operators(&params, None)?;
            let best = gap_minima(&ops, opts)?
                .into_iter()
                .min_by(|a, b| a.gap.partial_cmp(&b.gap).expect("finite"))
                .expect("at least one minimum");
            let pred = predict_crossing(&params, &gs, &es, None)?;
            Ok(HammingRow {
                n,
                hamming: gs.hamming(&es),
                min_gap: best.gap,
                s_star: best.s_star,
                predicted_s_star: pred.s_star,
            })
        })
        .collect()
}
