//! The annealing Hamiltonian H(s) = (1-s) H_d + s(1-s) H_c + s H_p.
//!
//! Two bases are supported. The full 2ⁿ computational basis is the oracle.
//! The production path works in the permutation-symmetric subspace: qubits
//! of a subgraph are interchangeable, except that each catalyst pair splits
//! off from its subgraph as a separate spin-1 sector. Starting from the
//! uniform superposition the state never leaves the product of the maximal
//! collective-spin multiplets, so those Dicke states form an exact basis.
//!
//! In the reduced basis every term keeps its identity part
//! (σˣᵢσˣⱼ = 2(Sˣ_c)² - 1), so reduced eigenvalues are a subset of the full
//! spectrum, not just equal up to a shift.

use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};

use crate::cache::content_hash;
use crate::error::{Error, Result};
use crate::instance::{Bitstring, ProblemParams};
use crate::linalg::Matrix;
use crate::scalar::Real;

/// Largest qubit count accepted by the full-space builder.
pub const MAX_FULL_QUBITS: usize = 14;

/// XX couplings between qubit pairs of non-optimal subgraphs.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CatalystSpec {
    pub coupled_pairs: Vec<(usize, usize)>,
    /// Jxx in GHz.
    pub strength: f64,
    /// J*xx in GHz, when the strength was set relative to it.
    pub reference_strength: Option<f64>,
    /// ΔJxx = (Jxx - J*xx) / J*xx.
    pub delta: Option<f64>,
}

impl CatalystSpec {
    pub fn new(coupled_pairs: Vec<(usize, usize)>, strength: f64) -> Result<Self> {
        if !(strength >= 0.0 && strength.is_finite()) {
            return Err(Error::InvalidCatalyst(format!(
                "strength must be finite and non-negative, got {strength}"
            )));
        }
        let pairs = coupled_pairs
            .into_iter()
            .map(|(i, j)| if i < j { (i, j) } else { (j, i) })
            .collect();
        Ok(Self {
            coupled_pairs: pairs,
            strength,
            reference_strength: None,
            delta: None,
        })
    }

    /// Strength `J*xx (1 + ΔJxx)`.
    pub fn detuned(coupled_pairs: Vec<(usize, usize)>, reference_strength: f64, delta: f64) -> Result<Self> {
        if !(reference_strength > 0.0) {
            return Err(Error::InvalidCatalyst(format!(
                "reference strength must be positive, got {reference_strength}"
            )));
        }
        let mut c = Self::new(coupled_pairs, reference_strength * (1.0 + delta))?;
        c.reference_strength = Some(reference_strength);
        c.delta = Some(delta);
        Ok(c)
    }

    /// One pair per non-optimal subgraph with at least two vertices: its last
    /// two qubits.
    pub fn default_pairs(subgraph_sizes: &[usize]) -> Vec<(usize, usize)> {
        let mut offset = 0;
        let mut pairs = Vec::new();
        for (a, &size) in subgraph_sizes.iter().enumerate() {
            if a > 0 && size >= 2 {
                pairs.push((offset + size - 2, offset + size - 1));
            }
            offset += size;
        }
        pairs
    }

    pub fn with_strength(&self, strength: f64) -> Result<Self> {
        Self::new(self.coupled_pairs.clone(), strength)
    }

    /// Checks the pairs against the instance layout and the stored detuning.
    pub fn validate<T: Real>(&self, params: &ProblemParams<T>) -> Result<()> {
        let n = params.n_qubits();
        let mut used = vec![false; n];
        for &(i, j) in &self.coupled_pairs {
            if i >= n || j >= n {
                return Err(Error::InvalidCatalyst(format!("pair ({i}, {j}) out of range for {n} qubits")));
            }
            if i == j {
                return Err(Error::InvalidCatalyst(format!("pair ({i}, {j}) couples a qubit to itself")));
            }
            let (gi, gj) = (params.qubit_to_subgraph[i], params.qubit_to_subgraph[j]);
            if gi != gj {
                return Err(Error::InvalidCatalyst(format!(
                    "pair ({i}, {j}) spans subgraphs {gi} and {gj}"
                )));
            }
            if gi == 0 {
                return Err(Error::InvalidCatalyst(format!(
                    "pair ({i}, {j}) lies in the optimal subgraph"
                )));
            }
            if used[i] || used[j] {
                return Err(Error::InvalidCatalyst(format!("pair ({i}, {j}) shares a qubit with another pair")));
            }
            used[i] = true;
            used[j] = true;
        }
        if let (Some(r), Some(d)) = (self.reference_strength, self.delta) {
            let recomputed = (self.strength - r) / r;
            if (recomputed - d).abs() >= 1e-12 {
                return Err(Error::InvalidCatalyst(format!(
                    "stored delta {d} disagrees with strength (implies {recomputed})"
                )));
            }
        }
        Ok(())
    }

    pub fn fingerprint(&self) -> String {
        content_hash(self)
    }
}

/// Which basis an operator is expressed in.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BasisKind {
    Full,
    Reduced,
}

/// One permutation-symmetric group of qubits.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DickeSector {
    pub label: String,
    pub subgraph: usize,
    pub qubits: Vec<usize>,
    pub catalyst: bool,
}

impl DickeSector {
    /// Twice the collective spin.
    pub fn spin2(&self) -> usize {
        self.qubits.len()
    }

    pub fn spin(&self) -> f64 {
        self.qubits.len() as f64 / 2.0
    }

    pub fn dim(&self) -> usize {
        self.qubits.len() + 1
    }
}

/// Product basis of maximal-spin Dicke multiplets, lexicographic in the
/// sector magnetisations with each `m` running from `-s` to `s`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DickeBasis {
    pub sectors: Vec<DickeSector>,
    pub dimension: usize,
}

impl DickeBasis {
    pub fn new(subgraph_sizes: &[usize], catalyst_pairs: &[(usize, usize)]) -> Result<Self> {
        let mut sectors = Vec::new();
        let mut offset = 0;
        for (a, &size) in subgraph_sizes.iter().enumerate() {
            let members: Vec<usize> = (offset..offset + size).collect();
            let mut pairs: Vec<(usize, usize)> = catalyst_pairs
                .iter()
                .copied()
                .filter(|&(i, j)| members.contains(&i) || members.contains(&j))
                .collect();
            pairs.sort_unstable();
            for &(i, j) in &pairs {
                if !(members.contains(&i) && members.contains(&j)) {
                    return Err(Error::InvalidCatalyst(format!("pair ({i}, {j}) spans subgraphs")));
                }
            }
            let paired: Vec<usize> = pairs.iter().flat_map(|&(i, j)| [i, j]).collect();
            let rest: Vec<usize> = members.iter().copied().filter(|q| !paired.contains(q)).collect();
            if !rest.is_empty() {
                let label = if pairs.is_empty() { format!("G{a}") } else { format!("G{a}'") };
                sectors.push(DickeSector {
                    label,
                    subgraph: a,
                    qubits: rest,
                    catalyst: false,
                });
            }
            for (k, &(i, j)) in pairs.iter().enumerate() {
                let label = if pairs.len() == 1 { format!("G{a}c") } else { format!("G{a}c{k}") };
                sectors.push(DickeSector {
                    label,
                    subgraph: a,
                    qubits: vec![i, j],
                    catalyst: true,
                });
            }
            offset += size;
        }
        let dimension = sectors.iter().map(DickeSector::dim).product();
        Ok(Self { sectors, dimension })
    }

    /// Basis states as tuples of sector magnetisations `m`.
    pub fn basis_states(&self) -> Vec<Vec<f64>> {
        (0..self.dimension)
            .map(|idx| {
                self.digits(idx)
                    .iter()
                    .zip(&self.sectors)
                    .map(|(&d, s)| d as f64 - s.spin())
                    .collect()
            })
            .collect()
    }

    /// Per-sector level index (0 ↔ m = -s) of basis state `idx`.
    fn digits(&self, mut idx: usize) -> Vec<usize> {
        let mut out = vec![0; self.sectors.len()];
        for (k, s) in self.sectors.iter().enumerate().rev() {
            out[k] = idx % s.dim();
            idx /= s.dim();
        }
        out
    }

    /// `I ⊗ … ⊗ op ⊗ … ⊗ I` with `op` acting on sector `k`.
    fn embed<T: Real>(&self, op: &Matrix<T>, k: usize) -> Matrix<T> {
        let mut out = Matrix::identity(1);
        for (j, s) in self.sectors.iter().enumerate() {
            out = if j == k { out.kron(op) } else { out.kron(&Matrix::identity(s.dim())) };
        }
        out
    }
}

/// Collective spin operators (Sᶻ, Sˣ) for spin `spin2 / 2`, basis `m = -s..s`.
pub fn collective_spin_matrices<T: Real>(spin2: usize) -> (Matrix<T>, Matrix<T>) {
    let d = spin2 + 1;
    let s = T::from_usize_lossy(spin2) / T::lit(2.0);
    let m = |k: usize| T::from_usize_lossy(k) - s;
    let sz = Matrix::diagonal(&(0..d).map(m).collect::<Vec<_>>());
    let mut sx = Matrix::zeros(d, d);
    for k in 0..d.saturating_sub(1) {
        let mk = m(k);
        let v = T::lit(0.5) * (s * (s + T::one()) - mk * (mk + T::one())).sqrt();
        sx[(k, k + 1)] = v;
        sx[(k + 1, k)] = v;
    }
    (sz, sx)
}

/// Where an operator came from.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub instance_hash: String,
    pub catalyst_hash: String,
    pub basis: BasisKind,
}

/// Driver, problem and catalyst terms of H(s), all in GHz.
#[derive(Clone, Debug)]
pub struct AnnealingOperators<T> {
    pub driver: Matrix<T>,
    pub problem: Matrix<T>,
    /// Includes the strength Jxx; zero matrix without a catalyst.
    pub catalyst: Matrix<T>,
    pub dicke: Option<DickeBasis>,
    pub provenance: Provenance,
}

fn check_s<T: Real>(s: T) -> Result<()> {
    if s >= T::zero() && s <= T::one() {
        Ok(())
    } else {
        Err(Error::ScheduleOutOfRange(s.to_f64_lossy()))
    }
}

impl<T: Real> AnnealingOperators<T> {
    pub fn dim(&self) -> usize {
        self.driver.rows()
    }

    pub fn basis(&self) -> BasisKind {
        self.provenance.basis
    }

    /// H(s).
    pub fn at(&self, s: T) -> Result<Matrix<T>> {
        check_s(s)?;
        let one = T::one();
        Ok(Matrix::combine3(one - s, &self.driver, s * (one - s), &self.catalyst, s, &self.problem))
    }

    /// dH/ds = H_p - H_d + (1 - 2s) H_c.
    pub fn derivative(&self, s: T) -> Matrix<T> {
        let one = T::one();
        let two = one + one;
        Matrix::combine3(-one, &self.driver, one - two * s, &self.catalyst, one, &self.problem)
    }

    pub fn hamiltonian(&self, s: T) -> Result<HamiltonianOperator<T>> {
        Ok(HamiltonianOperator {
            matrix: self.at(s)?,
            s: s.to_f64_lossy(),
            provenance: self.provenance.clone(),
        })
    }

    /// Same operators with the driver sign flipped.
    pub fn with_flipped_driver(&self) -> Self {
        Self {
            driver: self.driver.scaled(-T::one()),
            ..self.clone()
        }
    }
}

/// H(s) at one schedule point.
#[derive(Clone, Debug)]
pub struct HamiltonianOperator<T> {
    pub matrix: Matrix<T>,
    pub s: f64,
    pub provenance: Provenance,
}

impl<T: Real> HamiltonianOperator<T> {
    pub fn dim(&self) -> usize {
        self.matrix.rows()
    }

    /// Text dump: `#` provenance lines, a `dim` line, then one row per line as
    /// whitespace-separated `re im` pairs.
    pub fn write_dump<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "# diabatic hamiltonian dump")?;
        writeln!(w, "# s = {:e}", self.s)?;
        writeln!(w, "# instance = {}", self.provenance.instance_hash)?;
        writeln!(w, "# catalyst = {}", self.provenance.catalyst_hash)?;
        let basis = match self.provenance.basis {
            BasisKind::Full => "full",
            BasisKind::Reduced => "reduced",
        };
        writeln!(w, "# basis = {basis}")?;
        writeln!(w, "dim {}", self.dim())?;
        for r in 0..self.dim() {
            let row: Vec<String> = self
                .matrix
                .row(r)
                .iter()
                .map(|x| format!("{:e} 0e0", x.to_f64_lossy()))
                .collect();
            writeln!(w, "{}", row.join(" "))?;
        }
        Ok(())
    }
}

/// Reads the real part of a matrix written by [`HamiltonianOperator::write_dump`].
pub fn read_dump<R: BufRead>(r: R) -> Result<Matrix<f64>> {
    let bad = |msg: &str| Error::InvalidArgument(format!("malformed matrix dump: {msg}"));
    let mut dim = None;
    let mut data = Vec::new();
    for line in r.lines() {
        let line = line.map_err(|e| Error::io("<dump>", e))?;
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        if let Some(d) = line.strip_prefix("dim ") {
            dim = Some(d.trim().parse::<usize>().map_err(|_| bad("dim"))?);
            continue;
        }
        let nums: Vec<f64> = line
            .split_whitespace()
            .map(|t| t.parse::<f64>().map_err(|_| bad("number")))
            .collect::<Result<_>>()?;
        if nums.len() % 2 != 0 {
            return Err(bad("odd number of components"));
        }
        data.extend(nums.chunks(2).map(|c| c[0]));
    }
    let dim = dim.ok_or_else(|| bad("missing dim"))?;
    Matrix::from_row_major(dim, dim, data)
}

fn provenance<T: Real>(params: &ProblemParams<T>, catalyst: Option<&CatalystSpec>, basis: BasisKind) -> Provenance {
    Provenance {
        instance_hash: params.fingerprint(),
        catalyst_hash: catalyst.map_or_else(|| "none".to_string(), CatalystSpec::fingerprint),
        basis,
    }
}

/// Operators on the full computational basis; qubit 0 is the most
/// significant bit of the basis index.
pub fn full_operators<T: Real>(params: &ProblemParams<T>, catalyst: Option<&CatalystSpec>) -> Result<AnnealingOperators<T>> {
    let n = params.n_qubits();
    if n > MAX_FULL_QUBITS {
        return Err(Error::SizeGuard {
            what: "qubits in the full basis",
            got: n,
            limit: MAX_FULL_QUBITS,
        });
    }
    if let Some(c) = catalyst {
        c.validate(params)?;
    }
    let dim = 1usize << n;
    let mask = |q: usize| 1usize << (n - 1 - q);

    let mut driver = Matrix::zeros(dim, dim);
    for b in 0..dim {
        for q in 0..n {
            driver[(b, b ^ mask(q))] = -T::one();
        }
    }
    let diag: Vec<T> = (0..dim)
        .map(|b| params.classical_energy(&Bitstring::from_index(b as u64, n)))
        .collect::<Result<_>>()?;
    let problem = Matrix::diagonal(&diag);
    let mut cat = Matrix::zeros(dim, dim);
    if let Some(c) = catalyst {
        let j = T::lit(c.strength);
        for &(p, q) in &c.coupled_pairs {
            let m = mask(p) | mask(q);
            for b in 0..dim {
                cat[(b, b ^ m)] = cat[(b, b ^ m)] + j;
            }
        }
    }
    Ok(AnnealingOperators {
        driver,
        problem,
        catalyst: cat,
        dicke: None,
        provenance: provenance(params, catalyst, BasisKind::Full),
    })
}

/// Operators on the Dicke product basis.
pub fn reduced_operators<T: Real>(params: &ProblemParams<T>, catalyst: Option<&CatalystSpec>) -> Result<AnnealingOperators<T>> {
    if let Some(c) = catalyst {
        c.validate(params)?;
    }
    let pairs = catalyst.map_or(&[][..], |c| &c.coupled_pairs[..]);
    let basis = DickeBasis::new(&params.subgraph_sizes, pairs)?;
    let dim = basis.dimension;

    let mut driver = Matrix::zeros(dim, dim);
    let mut cat = Matrix::zeros(dim, dim);
    for (k, sector) in basis.sectors.iter().enumerate() {
        let (_, sx) = collective_spin_matrices::<T>(sector.spin2());
        driver.add_scaled(-T::lit(2.0), &basis.embed(&sx, k));
        if sector.catalyst {
            let j = T::lit(catalyst.expect("catalyst sectors need a catalyst").strength);
            // σˣᵢσˣⱼ = 2(Sˣ)² - 1 on the pair
            let sx2 = sx.matmul(&sx);
            let pair = Matrix::from_fn(sx.rows(), sx.cols(), |r, c| {
                let id = if r == c { T::one() } else { T::zero() };
                T::lit(2.0) * sx2[(r, c)] - id
            });
            cat.add_scaled(j, &basis.embed(&pair, k));
        }
    }

    let fields: Vec<T> = basis.sectors.iter().map(|s| params.subgraph_field(s.subgraph)).collect();
    let two = T::lit(2.0);
    let four = T::lit(4.0);
    let diag: Vec<T> = basis
        .basis_states()
        .iter()
        .map(|ms| {
            let m: Vec<T> = ms.iter().map(|&x| T::lit(x)).collect();
            let mut e = T::zero();
            for (k, sector) in basis.sectors.iter().enumerate() {
                e = e + fields[k] * two * m[k];
                for l in (k + 1)..m.len() {
                    if basis.sectors[l].subgraph != sector.subgraph {
                        e = e + params.edge_penalty * four * m[k] * m[l];
                    }
                }
            }
            e
        })
        .collect();

    Ok(AnnealingOperators {
        driver,
        problem: Matrix::diagonal(&diag),
        catalyst: cat,
        dicke: Some(basis),
        provenance: provenance(params, catalyst, BasisKind::Reduced),
    })
}

pub fn full_hamiltonian<T: Real>(params: &ProblemParams<T>, catalyst: Option<&CatalystSpec>, s: T) -> Result<HamiltonianOperator<T>> {
    check_s(s)?;
    full_operators(params, catalyst)?.hamiltonian(s)
}

pub fn reduced_hamiltonian<T: Real>(params: &ProblemParams<T>, catalyst: Option<&CatalystSpec>, s: T) -> Result<HamiltonianOperator<T>> {
    check_s(s)?;
    reduced_operators(params, catalyst)?.hamiltonian(s)
}
