//! Cross-checks of the reduced model against brute-force routes.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hamiltonian::{full_operators, reduced_operators, CatalystSpec, MAX_FULL_QUBITS};
use crate::instance::ProblemParams;
use crate::linalg::SymmetricEigen;

/// Gaps below this many GHz are compared in absolute rather than relative terms.
pub const GAP_FLOOR_GHZ: f64 = 1.0;

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ContainmentCheck {
    pub s: f64,
    pub catalyst_strength: Option<f64>,
    pub reduced_levels: usize,
    pub full_levels: usize,
    /// Largest |ΔE_red - ΔE_full| / max(ΔE_red, 1 GHz) over reduced levels,
    /// each matched to the nearest full-space gap above the ground state.
    pub max_rel_error: f64,
}

/// Every reduced-basis gap E_k - E_0 must appear among the full 2ⁿ gaps.
pub fn reduced_gap_containment(params: &ProblemParams<f64>, catalyst: Option<&CatalystSpec>, s_values: &[f64]) -> Result<Vec<ContainmentCheck>> {
    if params.n_qubits() > MAX_FULL_QUBITS {
        return Err(Error::SizeGuard {
            what: "qubits for the full-space oracle",
            got: params.n_qubits(),
            limit: MAX_FULL_QUBITS,
        });
    }
    let full = full_operators(params, catalyst)?;
    let reduced = reduced_operators(params, catalyst)?;
    s_values
        .iter()
        .map(|&s| {
            let ef = SymmetricEigen::values_only(&full.at(s)?)?;
            let er = SymmetricEigen::values_only(&reduced.at(s)?)?;
            let gf: Vec<f64> = ef.iter().map(|e| e - ef[0]).collect();
            let max_rel_error = er
                .iter()
                .map(|e| {
                    let g = e - er[0];
                    let nearest = gf.iter().map(|f| (f - g).abs()).fold(f64::INFINITY, f64::min);
                    nearest / g.abs().max(GAP_FLOOR_GHZ)
                })
                .fold(0.0, f64::max);
            Ok(ContainmentCheck {
                s,
                catalyst_strength: catalyst.map(|c| c.strength),
                reduced_levels: er.len(),
                full_levels: ef.len(),
                max_rel_error,
            })
        })
        .collect()
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct OptimaCheck {
    /// Subgraph index of the two lowest classical states, if each is a
    /// whole-subgraph selection.
    pub ground_subgraph: Option<usize>,
    pub first_excited_subgraph: Option<usize>,
    pub ground_energy: f64,
    pub first_excited_energy: f64,
    pub passed: bool,
}

/// Brute force: the two lowest classical energies belong to G₀ and G₁.
pub fn classical_optima_check(params: &ProblemParams<f64>) -> Result<OptimaCheck> {
    let spec = params.classical_spectrum()?;
    if spec.len() < 2 {
        return Err(Error::Degenerate("fewer than two classical states".into()));
    }
    let which = |b: &crate::instance::Bitstring| (0..params.n_subgraphs()).find(|&a| params.subgraph_state(a) == *b);
    let ground_subgraph = which(&spec[0].0);
    let first_excited_subgraph = which(&spec[1].0);
    Ok(OptimaCheck {
        ground_subgraph,
        first_excited_subgraph,
        ground_energy: spec[0].1,
        first_excited_energy: spec[1].1,
        passed: ground_subgraph == Some(0) && first_excited_subgraph == Some(1) && spec[1].1 > spec[0].1,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::instance::GraphInstance;

    #[test]
    fn containment_holds_for_small_sizes() {
        let inst = GraphInstance::bipartite_default(5, 15.0).unwrap();
        let p = inst.normalize().unwrap();
        let cat = CatalystSpec::new(CatalystSpec::default_pairs(inst.sizes()), 1.5).unwrap();
        for c in [None, Some(&cat)] {
            for r in reduced_gap_containment(&p, c, &[0.1, 0.5, 0.9]).unwrap() {
                assert!(r.max_rel_error < 1e-9, "{r:?}");
                assert!(r.reduced_levels < r.full_levels);
            }
        }
    }

    #[test]
    fn a_wrong_spectrum_is_caught() {
        // the reduced operators of a different instance must not embed
        let a = GraphInstance::bipartite_default(5, 15.0).unwrap().normalize::<f64>().unwrap();
        let b = GraphInstance::bipartite(5, 0.2, 5.33, 15.0).unwrap().normalize::<f64>().unwrap();
        let full = full_operators(&a, None).unwrap();
        let red = reduced_operators(&b, None).unwrap();
        let ef = SymmetricEigen::values_only(&full.at(0.9).unwrap()).unwrap();
        let er = SymmetricEigen::values_only(&red.at(0.9).unwrap()).unwrap();
        let worst = er
            .iter()
            .map(|e| ef.iter().map(|f| (f - ef[0] - (e - er[0])).abs()).fold(f64::INFINITY, f64::min))
            .fold(0.0, f64::max);
        assert!(worst > 1e-6);
    }

    #[test]
    fn optima_of_the_families() {
        for n in [5usize, 9, 13] {
            let p = GraphInstance::bipartite_default(n, 15.0).unwrap().normalize().unwrap();
            assert!(classical_optima_check(&p).unwrap().passed);
        }
        let tri = GraphInstance::kpartite(&[2, 3, 3], &[1.010, 1.005, 1.000], 5.33, 15.0).unwrap().normalize().unwrap();
        assert!(classical_optima_check(&tri).unwrap().passed);
    }
}
