//! Complete k-partite MWIS instances and their Ising encoding.
//!
//! Spin convention: qubit `i` has σᶻ = +1 when vertex `i` is in the set
//! (bit 1) and σᶻ = -1 otherwise. Qubits are numbered subgraph by subgraph, so the
//! bipartite family has G₀ on qubits `0..n₀` and G₁ on `n₀..n`.

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, Signed, ToPrimitive, Zero};
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::cache::content_hash;
use crate::error::{Error, Result};
use crate::scalar::Real;

/// Energy scale used by the shipped fixtures and CLI defaults.
pub const DEFAULT_ENERGY_SCALE_GHZ: f64 = 15.0;
pub const DEFAULT_DELTA_W: f64 = 0.01;
pub const DEFAULT_EDGE_PENALTY: f64 = 5.33;

/// Largest instance the exhaustive classical routines will enumerate.
pub const MAX_ENUMERATION_QUBITS: usize = 20;

/// On-disk form of an instance.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InstanceFile {
    pub sizes: Vec<usize>,
    pub total_weights: Vec<f64>,
    pub edge_penalty_raw: f64,
    pub delta_w_raw: f64,
    pub energy_scale_ghz: f64,
}

/// A complete k-partite MWIS instance with exact raw weights.
#[derive(Clone, Debug, PartialEq)]
pub struct GraphInstance {
    sizes: Vec<usize>,
    total_weights: Vec<BigRational>,
    edge_penalty_raw: BigRational,
    file: InstanceFile,
}

/// Exact rational of the shortest decimal that round-trips to `x`.
pub fn decimal_rational(x: f64) -> Result<BigRational> {
    if !x.is_finite() {
        return Err(Error::InvalidInstance(format!("non-finite value {x}")));
    }
    let text = format!("{x}");
    let (neg, digits) = match text.strip_prefix('-') {
        Some(rest) => (true, rest),
        None => (false, text.as_str()),
    };
    let (int_part, frac_part) = digits.split_once('.').unwrap_or((digits, ""));
    let numer: BigInt = format!("{int_part}{frac_part}")
        .parse()
        .map_err(|_| Error::InvalidInstance(format!("cannot parse {x}")))?;
    let denom = num_traits::pow(BigInt::from(10), frac_part.len());
    let r = BigRational::new(numer, denom);
    Ok(if neg { -r } else { r })
}

fn rational_to_f64(r: &BigRational) -> f64 {
    r.to_f64().unwrap_or(f64::NAN)
}

impl GraphInstance {
    /// The canonical bipartite family: `n₀ = (n-1)/2`, `n₁ = (n+1)/2`,
    /// `W₀ = 1 + δW'`, `W₁ = 1`.
    pub fn bipartite(n: usize, delta_w_raw: f64, edge_penalty_raw: f64, energy_scale_ghz: f64) -> Result<Self> {
        if n % 2 == 0 || n < 5 {
            return Err(Error::InvalidInstance(format!(
                "bipartite size must be odd and at least 5, got {n}"
            )));
        }
        if !(delta_w_raw > 0.0) {
            return Err(Error::InvalidInstance(format!(
                "delta_w_raw must be positive for a unique optimum, got {delta_w_raw}"
            )));
        }
        let w0 = BigRational::one() + decimal_rational(delta_w_raw)?;
        let mut inst = Self::from_rationals(
            vec![(n - 1) / 2, (n + 1) / 2],
            vec![w0, BigRational::one()],
            edge_penalty_raw,
            energy_scale_ghz,
        )?;
        inst.file.delta_w_raw = delta_w_raw;
        Ok(inst)
    }

    /// Bipartite instance with the default weight offset and edge penalty.
    pub fn bipartite_default(n: usize, energy_scale_ghz: f64) -> Result<Self> {
        Self::bipartite(n, DEFAULT_DELTA_W, DEFAULT_EDGE_PENALTY, energy_scale_ghz)
    }

    pub fn kpartite(sizes: &[usize], total_weights: &[f64], edge_penalty_raw: f64, energy_scale_ghz: f64) -> Result<Self> {
        if sizes.len() != total_weights.len() {
            return Err(Error::InvalidInstance(format!(
                "{} subgraph sizes but {} weights",
                sizes.len(),
                total_weights.len()
            )));
        }
        let weights = total_weights
            .iter()
            .map(|&w| decimal_rational(w))
            .collect::<Result<Vec<_>>>()?;
        Self::from_rationals(sizes.to_vec(), weights, edge_penalty_raw, energy_scale_ghz)
    }

    fn from_rationals(
        sizes: Vec<usize>,
        total_weights: Vec<BigRational>,
        edge_penalty_raw: f64,
        energy_scale_ghz: f64,
    ) -> Result<Self> {
        if sizes.len() < 2 {
            return Err(Error::InvalidInstance("need at least two subgraphs".into()));
        }
        if sizes.contains(&0) {
            return Err(Error::InvalidInstance("empty subgraph".into()));
        }
        if total_weights.iter().any(|w| !w.is_positive()) {
            return Err(Error::InvalidInstance("subgraph weights must be positive".into()));
        }
        if total_weights[1..].iter().any(|w| w >= &total_weights[0]) {
            return Err(Error::InvalidInstance(
                "W0 must be strictly the largest total weight".into(),
            ));
        }
        if !(edge_penalty_raw > 0.0) {
            return Err(Error::InvalidInstance(format!(
                "edge penalty must be positive, got {edge_penalty_raw}"
            )));
        }
        if !(energy_scale_ghz > 0.0 && energy_scale_ghz.is_finite()) {
            return Err(Error::InvalidInstance(format!(
                "energy scale must be positive, got {energy_scale_ghz}"
            )));
        }
        let n: usize = sizes.iter().sum();
        if n > 64 {
            return Err(Error::SizeGuard { what: "qubits", got: n, limit: 64 });
        }
        let file = InstanceFile {
            sizes: sizes.clone(),
            total_weights: total_weights.iter().map(rational_to_f64).collect(),
            edge_penalty_raw,
            delta_w_raw: rational_to_f64(&(&total_weights[0] - &total_weights[1])),
            energy_scale_ghz,
        };
        let inst = Self {
            sizes,
            total_weights,
            edge_penalty_raw: decimal_rational(edge_penalty_raw)?,
            file,
        };
        if inst.bipartite_denominator().is_some_and(|d| !d.is_positive()) {
            return Err(Error::InvalidInstance(
                "n0 * n1 * J'zz - 1 must be positive".into(),
            ));
        }
        let (lo, hi) = inst.raw_energy_range();
        if hi <= lo {
            return Err(Error::InvalidInstance("classical spectrum has zero spread".into()));
        }
        Ok(inst)
    }

    pub fn from_file(file: &InstanceFile) -> Result<Self> {
        let inst = Self::kpartite(
            &file.sizes,
            &file.total_weights,
            file.edge_penalty_raw,
            file.energy_scale_ghz,
        )?;
        let implied = inst.file.delta_w_raw;
        if (implied - file.delta_w_raw).abs() > 1e-12 {
            return Err(Error::InvalidInstance(format!(
                "delta_w_raw {} inconsistent with weights (W0 - W1 = {implied})",
                file.delta_w_raw
            )));
        }
        Ok(Self {
            file: file.clone(),
            ..inst
        })
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json_str(&text)
    }

    pub fn from_json_str(text: &str) -> Result<Self> {
        let file: InstanceFile = serde_json::from_str(text)?;
        Self::from_file(&file)
    }

    pub fn to_json_string(&self) -> String {
        serde_json::to_string_pretty(&self.file).expect("instance serialises")
    }

    pub fn fingerprint(&self) -> String {
        content_hash(&self.file)
    }

    pub fn file(&self) -> &InstanceFile {
        &self.file
    }

    pub fn sizes(&self) -> &[usize] {
        &self.sizes
    }

    pub fn n_qubits(&self) -> usize {
        self.sizes.iter().sum()
    }

    pub fn energy_scale(&self) -> f64 {
        self.file.energy_scale_ghz
    }

    pub fn total_weights(&self) -> &[BigRational] {
        &self.total_weights
    }

    pub fn edge_penalty_raw(&self) -> &BigRational {
        &self.edge_penalty_raw
    }

    /// Same instance at another energy scale.
    pub fn with_energy_scale(&self, energy_scale_ghz: f64) -> Result<Self> {
        let mut file = self.file.clone();
        file.energy_scale_ghz = energy_scale_ghz;
        Self::from_file(&file)
    }

    /// Subgraph index of each qubit.
    pub fn qubit_to_subgraph(&self) -> Vec<usize> {
        self.sizes
            .iter()
            .enumerate()
            .flat_map(|(a, &s)| std::iter::repeat(a).take(s))
            .collect()
    }

    /// First qubit of each subgraph.
    pub fn subgraph_offsets(&self) -> Vec<usize> {
        let mut acc = 0;
        self.sizes
            .iter()
            .map(|&s| {
                let o = acc;
                acc += s;
                o
            })
            .collect()
    }

    fn bipartite_denominator(&self) -> Option<BigRational> {
        (self.sizes.len() == 2).then(|| {
            let n0n1 = BigRational::from_integer(BigInt::from(self.sizes[0] * self.sizes[1]));
            n0n1 * &self.edge_penalty_raw - BigRational::one()
        })
    }

    /// Raw local field `(N - n_a) J' - 2 W_a / n_a` of a qubit in subgraph `a`.
    fn raw_field(&self, a: usize) -> BigRational {
        let n = BigRational::from_integer(BigInt::from(self.n_qubits()));
        let na = BigRational::from_integer(BigInt::from(self.sizes[a]));
        let two = BigRational::from_integer(BigInt::from(2));
        (&n - &na) * &self.edge_penalty_raw - two * &self.total_weights[a] / na
    }

    /// Exact raw energy of any state selecting `counts[a]` vertices of subgraph `a`.
    pub fn raw_energy_of_counts(&self, counts: &[usize]) -> BigRational {
        let spins: Vec<BigRational> = counts
            .iter()
            .zip(&self.sizes)
            .map(|(&x, &na)| BigRational::from_integer(BigInt::from(2 * x as i64 - na as i64)))
            .collect();
        let mut e = BigRational::zero();
        for (a, m) in spins.iter().enumerate() {
            e += self.raw_field(a) * m;
        }
        for a in 0..spins.len() {
            for b in (a + 1)..spins.len() {
                e += &self.edge_penalty_raw * &spins[a] * &spins[b];
            }
        }
        e
    }

    /// Exact (min, max) of the raw classical energy.
    ///
    /// The energy depends only on the selected count per subgraph, so the
    /// extremes are found over the count lattice instead of all 2ⁿ states.
    pub fn raw_energy_range(&self) -> (BigRational, BigRational) {
        let mut counts = vec![0usize; self.sizes.len()];
        let mut lo: Option<BigRational> = None;
        let mut hi: Option<BigRational> = None;
        loop {
            let e = self.raw_energy_of_counts(&counts);
            if lo.as_ref().map_or(true, |l| &e < l) {
                lo = Some(e.clone());
            }
            if hi.as_ref().map_or(true, |h| &e > h) {
                hi = Some(e);
            }
            let mut k = 0;
            loop {
                if k == counts.len() {
                    return (lo.unwrap(), hi.unwrap());
                }
                counts[k] += 1;
                if counts[k] <= self.sizes[k] {
                    break;
                }
                counts[k] = 0;
                k += 1;
            }
        }
    }

    /// Normalisation factor K = N / (max - min raw energy).
    ///
    /// For two subgraphs this is exactly `(n₀+n₁) / (4(n₀n₁J' - 1))`.
    pub fn normalization(&self) -> BigRational {
        let (lo, hi) = self.raw_energy_range();
        BigRational::from_integer(BigInt::from(self.n_qubits())) / (hi - lo)
    }

    /// Closed-form bipartite normalisation, `None` for k > 2.
    pub fn bipartite_normalization(&self) -> Option<BigRational> {
        let d = self.bipartite_denominator()?;
        let n = BigRational::from_integer(BigInt::from(self.n_qubits()));
        Some(n / (BigRational::from_integer(BigInt::from(4)) * d))
    }

    /// Floating-point problem parameters in GHz.
    pub fn normalize<T: Real>(&self) -> Result<ProblemParams<T>> {
        let k = self.normalization();
        if !k.is_positive() {
            return Err(Error::InvalidInstance("non-positive normalisation".into()));
        }
        let scale = decimal_rational(self.file.energy_scale_ghz)?;
        let ks = &k * &scale;
        let to_t = |r: &BigRational| T::lit(rational_to_f64(r));
        let q2s = self.qubit_to_subgraph();
        let fields: Vec<T> = (0..self.sizes.len()).map(|a| to_t(&(&ks * self.raw_field(a)))).collect();
        let weights: Vec<T> = (0..self.sizes.len())
            .map(|a| {
                let na = BigRational::from_integer(BigInt::from(self.sizes[a]));
                to_t(&(&ks * &self.total_weights[a] / na))
            })
            .collect();
        Ok(ProblemParams {
            local_fields: q2s.iter().map(|&a| fields[a]).collect(),
            vertex_weights: q2s.iter().map(|&a| weights[a]).collect(),
            edge_penalty: to_t(&(&ks * &self.edge_penalty_raw)),
            normalization: to_t(&k),
            energy_scale: T::lit(self.file.energy_scale_ghz),
            qubit_to_subgraph: q2s,
            subgraph_sizes: self.sizes.clone(),
        })
    }
}

/// Ising coefficients of H_p in GHz.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProblemParams<T> {
    /// `h_i = c_i Jzz - 2 w_i` per qubit.
    pub local_fields: Vec<T>,
    pub vertex_weights: Vec<T>,
    pub edge_penalty: T,
    pub normalization: T,
    pub energy_scale: T,
    pub qubit_to_subgraph: Vec<usize>,
    pub subgraph_sizes: Vec<usize>,
}

impl<T: Real> ProblemParams<T> {
    /// Content hash of the coefficients, widened to f64.
    pub fn fingerprint(&self) -> String {
        #[derive(Serialize)]
        struct Key<'a> {
            local_fields: Vec<f64>,
            vertex_weights: Vec<f64>,
            edge_penalty: f64,
            normalization: f64,
            energy_scale: f64,
            qubit_to_subgraph: &'a [usize],
        }
        let widen = |v: &[T]| v.iter().map(|x| x.to_f64_lossy()).collect();
        content_hash(&Key {
            local_fields: widen(&self.local_fields),
            vertex_weights: widen(&self.vertex_weights),
            edge_penalty: self.edge_penalty.to_f64_lossy(),
            normalization: self.normalization.to_f64_lossy(),
            energy_scale: self.energy_scale.to_f64_lossy(),
            qubit_to_subgraph: &self.qubit_to_subgraph,
        })
    }

    pub fn n_qubits(&self) -> usize {
        self.qubit_to_subgraph.len()
    }

    pub fn n_subgraphs(&self) -> usize {
        self.subgraph_sizes.len()
    }

    /// Local field shared by every qubit of subgraph `a`.
    pub fn subgraph_field(&self, a: usize) -> T {
        let q = self
            .qubit_to_subgraph
            .iter()
            .position(|&g| g == a)
            .expect("subgraph index in range");
        self.local_fields[q]
    }

    /// ⟨z|H_p|z⟩ for a computational basis state.
    pub fn classical_energy(&self, state: &Bitstring) -> Result<T> {
        if state.len() != self.n_qubits() {
            return Err(Error::DimensionMismatch {
                expected: self.n_qubits(),
                got: state.len(),
            });
        }
        let mut counts = vec![0usize; self.n_subgraphs()];
        for (q, bit) in state.iter().enumerate() {
            if bit {
                counts[self.qubit_to_subgraph[q]] += 1;
            }
        }
        Ok(self.energy_of_counts(&counts))
    }

    /// Energy of any state with `counts[a]` vertices selected in subgraph `a`.
    pub fn energy_of_counts(&self, counts: &[usize]) -> T {
        let m: Vec<T> = counts
            .iter()
            .zip(&self.subgraph_sizes)
            .map(|(&x, &na)| T::lit(2.0 * x as f64 - na as f64))
            .collect();
        let mut e = T::zero();
        for (a, &ma) in m.iter().enumerate() {
            e = e + self.subgraph_field(a) * ma;
        }
        for a in 0..m.len() {
            for b in (a + 1)..m.len() {
                e = e + self.edge_penalty * m[a] * m[b];
            }
        }
        e
    }

    fn guard_enumeration(&self) -> Result<()> {
        if self.n_qubits() > MAX_ENUMERATION_QUBITS {
            return Err(Error::SizeGuard {
                what: "qubits for exhaustive enumeration",
                got: self.n_qubits(),
                limit: MAX_ENUMERATION_QUBITS,
            });
        }
        Ok(())
    }

    /// All 2ⁿ classical energies, sorted ascending (ties by basis index).
    pub fn classical_spectrum(&self) -> Result<Vec<(Bitstring, T)>> {
        self.guard_enumeration()?;
        let n = self.n_qubits();
        let mut out: Vec<(Bitstring, T)> = (0..(1u64 << n))
            .map(|idx| {
                let b = Bitstring::from_index(idx, n);
                let e = self.classical_energy(&b).expect("length matches");
                (b, e)
            })
            .collect();
        out.sort_by(|x, y| x.1.partial_cmp(&y.1).expect("finite energies"));
        Ok(out)
    }

    /// Whether `state` selects no edge of the complete k-partite graph.
    pub fn is_independent(&self, state: &Bitstring) -> bool {
        let mut seen = None;
        for (q, bit) in state.iter().enumerate() {
            if bit {
                let g = self.qubit_to_subgraph[q];
                match seen {
                    None => seen = Some(g),
                    Some(h) if h != g => return false,
                    _ => {}
                }
            }
        }
        true
    }

    /// Maximal independent sets with their energies, ascending.
    pub fn enumerate_optima(&self) -> Result<Vec<(Bitstring, T)>> {
        self.guard_enumeration()?;
        let n = self.n_qubits();
        let mut out = Vec::new();
        for idx in 0..(1u64 << n) {
            let b = Bitstring::from_index(idx, n);
            if !self.is_independent(&b) {
                continue;
            }
            let maximal = (0..n).all(|q| b.get(q) || !self.is_independent(&b.flipped(q)));
            if maximal {
                let e = self.classical_energy(&b)?;
                out.push((b, e));
            }
        }
        out.sort_by(|x, y| x.1.partial_cmp(&y.1).expect("finite energies"));
        Ok(out)
    }

    /// The state selecting exactly the vertices of subgraph `a`.
    pub fn subgraph_state(&self, a: usize) -> Bitstring {
        Bitstring::from_bits(self.qubit_to_subgraph.iter().map(|&g| g == a).collect())
    }
}

/// Computational basis state; bit `i` is qubit `i` (1 = vertex in set).
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Bitstring {
    bits: Vec<bool>,
}

impl Bitstring {
    pub fn from_bits(bits: Vec<bool>) -> Self {
        Self { bits }
    }

    pub fn zeros(n: usize) -> Self {
        Self { bits: vec![false; n] }
    }

    /// Basis index convention of the full Hamiltonian: qubit 0 is the most
    /// significant bit.
    pub fn from_index(idx: u64, n: usize) -> Self {
        Self {
            bits: (0..n).map(|i| (idx >> (n - 1 - i)) & 1 == 1).collect(),
        }
    }

    pub fn to_index(&self) -> u64 {
        self.bits.iter().fold(0u64, |acc, &b| (acc << 1) | b as u64)
    }

    pub fn len(&self) -> usize {
        self.bits.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bits.is_empty()
    }

    pub fn get(&self, i: usize) -> bool {
        self.bits[i]
    }

    pub fn iter(&self) -> impl Iterator<Item = bool> + '_ {
        self.bits.iter().copied()
    }

    pub fn count_ones(&self) -> usize {
        self.bits.iter().filter(|&&b| b).count()
    }

    pub fn flipped(&self, i: usize) -> Self {
        let mut bits = self.bits.clone();
        bits[i] = !bits[i];
        Self { bits }
    }

    pub fn hamming(&self, other: &Self) -> usize {
        self.bits.iter().zip(&other.bits).filter(|(a, b)| a != b).count()
    }
}

impl fmt::Display for Bitstring {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for &b in &self.bits {
            f.write_str(if b { "1" } else { "0" })?;
        }
        Ok(())
    }
}

impl FromStr for Bitstring {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        s.chars()
            .map(|c| match c {
                '0' => Ok(false),
                '1' => Ok(true),
                other => Err(Error::InvalidArgument(format!("bad bit '{other}' in {s:?}"))),
            })
            .collect::<Result<Vec<_>>>()
            .map(Self::from_bits)
    }
}

impl Serialize for Bitstring {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for Bitstring {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}
