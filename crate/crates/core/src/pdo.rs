//! The pseudo-density operator type.
//!
//! A [`Pdo`] over events with local dimensions d_1..d_n is stored as its real
//! correlation tensor T[μ_1..μ_n] (row-major, μ_i < d_i²) so that
//!
//! ```text
//! R = (1/Π d_i) Σ_μ T[μ] σ_μ1 ⊗ … ⊗ σ_μn
//! ```
//!
//! with σ from [`operator_basis`](crate::operator_basis). Partial traces are
//! index restrictions, everything spectral goes through the dense matrix.

use std::collections::{BTreeMap, HashSet};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{
    eigh, hermitian_deviation, kron, max_abs_diff, trace, CMatrix, CVector, C64, ONE, ZERO,
    ZERO_EIGENVALUE,
};
use crate::operator_basis::{basis, OperatorBasis};

/// Largest total matrix dimension handled by dense storage.
pub const MAX_TOTAL_DIM: usize = 1 << 10;

/// Tolerance on trace and Hermiticity when importing a dense matrix.
pub const MATRIX_IMPORT_TOL: f64 = 1e-10;

#[derive(Clone, Debug, PartialEq)]
pub struct Pdo {
    dims: Vec<usize>,
    labels: Vec<String>,
    tensor: Vec<f64>,
}

pub fn default_labels(n: usize) -> Vec<String> {
    (0..n).map(|k| format!("e{k}")).collect()
}

impl Pdo {
    pub fn new(dims: Vec<usize>, labels: Vec<String>, tensor: Vec<f64>) -> Result<Self> {
        if dims.is_empty() {
            return Err(Error::InvalidSelection("a PDO needs at least one event".into()));
        }
        if let Some(&d) = dims.iter().find(|&&d| d < 2) {
            return Err(Error::InvalidDimension(d));
        }
        let total: usize = dims.iter().product();
        if total > MAX_TOTAL_DIM {
            return Err(Error::SizeCap(format!(
                "total dimension {total} exceeds {MAX_TOTAL_DIM}"
            )));
        }
        if labels.len() != dims.len() {
            return Err(Error::DimensionMismatch(format!(
                "{} labels for {} events",
                labels.len(),
                dims.len()
            )));
        }
        let mut seen = HashSet::new();
        for l in &labels {
            if !seen.insert(l.as_str()) {
                return Err(Error::InvalidSelection(format!("duplicate event label `{l}`")));
            }
        }
        let expected: usize = dims.iter().map(|d| d * d).product();
        if tensor.len() != expected {
            return Err(Error::DimensionMismatch(format!(
                "tensor has {} entries, expected {expected}",
                tensor.len()
            )));
        }
        Ok(Self { dims, labels, tensor })
    }

    pub fn with_default_labels(dims: Vec<usize>, tensor: Vec<f64>) -> Result<Self> {
        let labels = default_labels(dims.len());
        Self::new(dims, labels, tensor)
    }

    /// I / Π d_i.
    pub fn maximally_mixed(dims: Vec<usize>, labels: Vec<String>) -> Result<Self> {
        let len: usize = dims.iter().map(|d| d * d).product();
        let mut tensor = vec![0.0; len];
        tensor[0] = 1.0;
        Self::new(dims, labels, tensor)
    }

    pub fn from_matrix(m: &CMatrix, dims: &[usize]) -> Result<Self> {
        Self::from_matrix_labeled(m, dims, default_labels(dims.len()))
    }

    pub fn from_matrix_labeled(m: &CMatrix, dims: &[usize], labels: Vec<String>) -> Result<Self> {
        let total: usize = dims.iter().product();
        if m.nrows() != total || m.ncols() != total {
            return Err(Error::DimensionMismatch(format!(
                "matrix is {}x{}, dims give {total}",
                m.nrows(),
                m.ncols()
            )));
        }
        let dev = hermitian_deviation(m);
        if dev > MATRIX_IMPORT_TOL {
            return Err(Error::NotHermitian(dev));
        }
        let tr = trace(m);
        if (tr - ONE).norm() > MATRIX_IMPORT_TOL {
            return Err(Error::InvalidTrace(tr.re));
        }
        let bases = bases_for(dims)?;
        let refs: Vec<&OperatorBasis> = bases.iter().map(|b| b.as_ref()).collect();
        let tensor = coefficients(m, dims, &refs);
        Self::new(dims.to_vec(), labels, tensor)
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn tensor(&self) -> &[f64] {
        &self.tensor
    }

    pub fn tensor_mut(&mut self) -> &mut [f64] {
        &mut self.tensor
    }

    pub fn n_events(&self) -> usize {
        self.dims.len()
    }

    pub fn total_dim(&self) -> usize {
        self.dims.iter().product()
    }

    /// Per-event index ranges d_i².
    pub fn shape(&self) -> Vec<usize> {
        self.dims.iter().map(|d| d * d).collect()
    }

    pub fn flat_index(&self, mu: &[usize]) -> usize {
        flat_index(&self.shape(), mu)
    }

    pub fn multi_index(&self, flat: usize) -> Vec<usize> {
        multi_index(&self.shape(), flat)
    }

    pub fn get(&self, mu: &[usize]) -> f64 {
        self.tensor[self.flat_index(mu)]
    }

    pub fn set(&mut self, mu: &[usize], value: f64) {
        let k = self.flat_index(mu);
        self.tensor[k] = value;
    }

    pub fn position(&self, label: &str) -> Option<usize> {
        self.labels.iter().position(|l| l == label)
    }

    pub fn relabeled(mut self, labels: Vec<String>) -> Result<Self> {
        if labels.len() != self.labels.len() {
            return Err(Error::DimensionMismatch("relabel length".into()));
        }
        self.labels = labels;
        Self::new(self.dims, self.labels, self.tensor)
    }

    pub fn to_matrix(&self) -> CMatrix {
        let bases = bases_for(&self.dims).expect("dims validated on construction");
        let refs: Vec<&OperatorBasis> = bases.iter().map(|b| b.as_ref()).collect();
        self.to_matrix_with(&refs).expect("bases match dims")
    }

    /// Dense matrix using explicitly supplied per-event bases.
    pub fn to_matrix_with(&self, bases: &[&OperatorBasis]) -> Result<CMatrix> {
        if bases.len() != self.dims.len()
            || bases.iter().zip(&self.dims).any(|(b, &d)| b.dim() != d || b.len() != d * d)
        {
            return Err(Error::DimensionMismatch("basis dims differ from PDO dims".into()));
        }
        let m = expand(&self.tensor, &self.dims, bases);
        Ok(m.scale(1.0 / self.total_dim() as f64))
    }

    /// Reduction onto the listed events; the result keeps the given order.
    pub fn partial_trace(&self, keep: &[&str]) -> Result<Self> {
        let mut idx = Vec::with_capacity(keep.len());
        for &l in keep {
            idx.push(self.position(l).ok_or_else(|| Error::UnknownEvent(l.to_string()))?);
        }
        self.partial_trace_indices(&idx)
    }

    pub fn partial_trace_indices(&self, keep: &[usize]) -> Result<Self> {
        if keep.is_empty() {
            return Err(Error::InvalidSelection("empty event selection".into()));
        }
        let mut seen = HashSet::new();
        for &k in keep {
            if k >= self.n_events() {
                return Err(Error::InvalidSelection(format!("event index {k} out of range")));
            }
            if !seen.insert(k) {
                return Err(Error::InvalidSelection(format!("event index {k} repeated")));
            }
        }
        let dims: Vec<usize> = keep.iter().map(|&k| self.dims[k]).collect();
        let labels: Vec<String> = keep.iter().map(|&k| self.labels[k].clone()).collect();
        let shape = self.shape();
        let sub_shape: Vec<usize> = dims.iter().map(|d| d * d).collect();
        let len: usize = sub_shape.iter().product();
        let mut full = vec![0usize; self.n_events()];
        let mut tensor = Vec::with_capacity(len);
        for flat in 0..len {
            let nu = multi_index(&sub_shape, flat);
            full.iter_mut().for_each(|x| *x = 0);
            for (pos, &k) in keep.iter().enumerate() {
                full[k] = nu[pos];
            }
            tensor.push(self.tensor[flat_index(&shape, &full)]);
        }
        Self::new(dims, labels, tensor)
    }

    /// Max entrywise tensor deviation between the reductions of `self` and
    /// `other` onto their shared labels; 0 for disjoint label sets.
    pub fn overlap_deviation(&self, other: &Self) -> Result<f64> {
        let shared: Vec<&str> = self
            .labels
            .iter()
            .filter(|l| other.position(l).is_some())
            .map(|s| s.as_str())
            .collect();
        if shared.is_empty() {
            return Ok(0.0);
        }
        for &l in &shared {
            let (a, b) = (self.position(l).unwrap(), other.position(l).unwrap());
            if self.dims[a] != other.dims[b] {
                return Err(Error::DimensionMismatch(format!("event `{l}` has two dimensions")));
            }
        }
        let x = self.partial_trace(&shared)?;
        let y = other.partial_trace(&shared)?;
        Ok(x
            .tensor
            .iter()
            .zip(&y.tensor)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max))
    }

    pub fn compatible(&self, other: &Self, tol: f64) -> bool {
        matches!(self.overlap_deviation(other), Ok(d) if d <= tol)
    }

    /// p ⊗ q with concatenated labels.
    pub fn tensor_product(&self, other: &Self) -> Result<Self> {
        let mut dims = self.dims.clone();
        dims.extend_from_slice(&other.dims);
        let mut labels = self.labels.clone();
        labels.extend(other.labels.iter().cloned());
        let mut tensor = Vec::with_capacity(self.tensor.len() * other.tensor.len());
        for &a in &self.tensor {
            for &b in &other.tensor {
                tensor.push(a * b);
            }
        }
        Self::new(dims, labels, tensor)
    }

    pub fn spectrum(&self) -> Spectrum {
        let (values, vectors) = eigh(&self.to_matrix());
        Spectrum { values, vectors }
    }

    /// ‖R‖₁.
    pub fn trace_norm(&self) -> f64 {
        self.spectrum().trace_norm()
    }

    /// C(R) = (‖R‖₁ − 1)/2.
    pub fn causality_c(&self) -> f64 {
        causality_c_from_norm(self.trace_norm())
    }

    /// F(R) = log₂‖R‖₁.
    pub fn causality_f(&self) -> f64 {
        causality_f_from_norm(self.trace_norm())
    }

    pub fn min_eigenvalue(&self) -> f64 {
        *self.spectrum().values.last().expect("non-empty spectrum")
    }

    pub fn is_positive(&self, tol: f64) -> bool {
        self.min_eigenvalue() >= -tol
    }

    /// Necessary conditions only: trace one, the entry bound and
    /// positivity of each single-event reduction.
    pub fn validate(&self) -> ValidationReport {
        let bound = (self.total_dim() as f64).sqrt();
        let max_entry = self.tensor.iter().map(|t| t.abs()).fold(0.0, f64::max);
        let mut min_local = f64::INFINITY;
        for k in 0..self.n_events() {
            let local = self.partial_trace_indices(&[k]).expect("valid index");
            min_local = min_local.min(local.min_eigenvalue());
        }
        let trace_deviation = (self.tensor[0] - 1.0).abs();
        ValidationReport {
            trace_deviation,
            trace_one: trace_deviation <= 1e-12,
            max_entry,
            entry_bound: bound,
            bounded: max_entry <= bound + 1e-12,
            min_local_eigenvalue: min_local,
            locally_positive: min_local >= -1e-12,
        }
    }

    pub fn separable_expansion(&self) -> SeparableExpansion {
        separable_expansion(self)
    }

    pub fn purify(&self) -> Purification {
        let spec = self.spectrum();
        let n = self.total_dim();
        let mut state = CVector::zeros(n * n);
        let mut sign_unitary = CMatrix::zeros(n, n);
        for (i, &lam) in spec.values.iter().enumerate() {
            let v = spec.vectors.column(i);
            let amp = lam.abs().sqrt();
            for s in 0..n {
                // |ψ_i⟩ ⊗ |e_i⟩
                state[s * n + i] += v[s] * amp;
            }
            let sign = if lam < -ZERO_EIGENVALUE { -1.0 } else { 1.0 };
            sign_unitary += (v * v.adjoint()).scale(sign);
        }
        Purification { system_dim: n, state_vector: state, sign_unitary }
    }

    pub fn to_json_value(&self) -> PdoJson {
        PdoJson {
            version: 1,
            dims: self.dims.clone(),
            labels: self.labels.clone(),
            tensor: self.tensor.clone(),
        }
    }

    pub fn from_json_value(v: PdoJson) -> Result<Self> {
        if v.version != 1 {
            return Err(Error::InvalidArgument(format!("unsupported PDO version {}", v.version)));
        }
        let labels = if v.labels.is_empty() { default_labels(v.dims.len()) } else { v.labels };
        Self::new(v.dims, labels, v.tensor)
    }

    pub fn to_json(&self) -> String {
        crate::json::to_canonical_string(&self.to_json_value())
    }

    pub fn from_json(s: &str) -> Result<Self> {
        Self::from_json_value(serde_json::from_str(s)?)
    }
}

/// Wire format of a PDO.
#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct PdoJson {
    pub version: u32,
    pub dims: Vec<usize>,
    #[serde(default)]
    pub labels: Vec<String>,
    pub tensor: Vec<f64>,
}

pub fn causality_c_from_norm(norm: f64) -> f64 {
    ((norm - 1.0) / 2.0).max(0.0)
}

pub fn causality_f_from_norm(norm: f64) -> f64 {
    norm.log2().max(0.0)
}

pub(crate) fn bases_for(dims: &[usize]) -> Result<Vec<std::sync::Arc<OperatorBasis>>> {
    dims.iter().map(|&d| basis(d)).collect()
}

pub fn flat_index(shape: &[usize], mu: &[usize]) -> usize {
    mu.iter().zip(shape).fold(0, |acc, (&m, &s)| acc * s + m)
}

pub fn multi_index(shape: &[usize], mut flat: usize) -> Vec<usize> {
    let mut out = vec![0; shape.len()];
    for k in (0..shape.len()).rev() {
        out[k] = flat % shape[k];
        flat /= shape[k];
    }
    out
}

/// T[μ] = Tr(M σ_μ1 ⊗ …) for any square matrix on the given dims; no trace
/// or Hermiticity checks.
pub fn tensor_coefficients(m: &CMatrix, dims: &[usize]) -> Result<Vec<f64>> {
    let bases = bases_for(dims)?;
    let refs: Vec<&OperatorBasis> = bases.iter().map(|b| b.as_ref()).collect();
    Ok(coefficients(m, dims, &refs))
}

/// (1/Π d_i)·Σ_μ T[μ] σ_μ1 ⊗ … without any checks on T.
pub fn tensor_to_matrix(tensor: &[f64], dims: &[usize]) -> Result<CMatrix> {
    let bases = bases_for(dims)?;
    let refs: Vec<&OperatorBasis> = bases.iter().map(|b| b.as_ref()).collect();
    let total: usize = dims.iter().product();
    Ok(expand(tensor, dims, &refs).scale(1.0 / total as f64))
}

/// Σ_μ T[μ] σ_μ1 ⊗ … (unnormalized).
fn expand(tensor: &[f64], dims: &[usize], bases: &[&OperatorBasis]) -> CMatrix {
    let d = dims[0];
    if dims.len() == 1 {
        let mut out = CMatrix::zeros(d, d);
        for (mu, &t) in tensor.iter().enumerate() {
            if t != 0.0 {
                out += bases[0].op(mu).scale(t);
            }
        }
        return out;
    }
    let stride = tensor.len() / (d * d);
    let rest: usize = dims[1..].iter().product();
    let mut out = CMatrix::zeros(d * rest, d * rest);
    for mu in 0..d * d {
        let slice = &tensor[mu * stride..(mu + 1) * stride];
        if slice.iter().all(|&t| t == 0.0) {
            continue;
        }
        let inner = expand(slice, &dims[1..], &bases[1..]);
        out += kron(bases[0].op(mu), &inner);
    }
    out
}

/// T[μ] = Tr(M σ_μ1 ⊗ …).
fn coefficients(m: &CMatrix, dims: &[usize], bases: &[&OperatorBasis]) -> Vec<f64> {
    let d = dims[0];
    if dims.len() == 1 {
        return bases[0].coefficients(m);
    }
    let rest: usize = dims[1..].iter().product();
    let mut out = Vec::new();
    for mu in 0..d * d {
        let s = bases[0].op(mu);
        let mut block = CMatrix::zeros(rest, rest);
        for i in 0..d {
            for j in 0..d {
                let w = s[(j, i)];
                if w == ZERO {
                    continue;
                }
                block += m.view((i * rest, j * rest), (rest, rest)) * w;
            }
        }
        out.extend(coefficients(&block, &dims[1..], &bases[1..]));
    }
    out
}

/// Eigen-decomposition of a PDO, eigenvalues descending.
#[derive(Clone, Debug)]
pub struct Spectrum {
    pub values: Vec<f64>,
    pub vectors: CMatrix,
}

impl Spectrum {
    pub fn trace_norm(&self) -> f64 {
        self.values.iter().map(|l| l.abs()).sum()
    }

    pub fn sum(&self) -> f64 {
        self.values.iter().sum()
    }
}

#[derive(Clone, Debug, Serialize, PartialEq)]
pub struct ValidationReport {
    pub trace_deviation: f64,
    pub trace_one: bool,
    pub max_entry: f64,
    pub entry_bound: f64,
    pub bounded: bool,
    pub min_local_eigenvalue: f64,
    pub locally_positive: bool,
}

impl ValidationReport {
    pub fn passed(&self) -> bool {
        self.trace_one && self.bounded && self.locally_positive
    }
}

/// R = Σ_k w_k |a_k1⟩⟨a_k1| ⊗ … ⊗ |a_kn⟩⟨a_kn| with real (signed) weights.
#[derive(Clone, Debug)]
pub struct SeparableExpansion {
    pub dims: Vec<usize>,
    pub weights: Vec<f64>,
    pub local_states: Vec<Vec<CVector>>,
}

impl SeparableExpansion {
    pub fn reassemble(&self) -> CMatrix {
        let total: usize = self.dims.iter().product();
        let mut out = CMatrix::zeros(total, total);
        for (w, states) in self.weights.iter().zip(&self.local_states) {
            let mut term = CMatrix::from_element(1, 1, ONE);
            for v in states {
                term = kron(&term, &(v * v.adjoint()));
            }
            out += term.scale(*w);
        }
        out
    }

    pub fn weight_sum(&self) -> f64 {
        self.weights.iter().sum()
    }

    pub fn min_weight(&self) -> f64 {
        self.weights.iter().copied().fold(f64::INFINITY, f64::min)
    }

    /// Σ|w_k|, the negativity-weighted norm of this particular expansion.
    pub fn l1_norm(&self) -> f64 {
        self.weights.iter().map(|w| w.abs()).sum()
    }
}

struct LocalTable {
    states: Vec<CVector>,
}

impl LocalTable {
    fn intern(&mut self, v: CVector) -> usize {
        for (k, s) in self.states.iter().enumerate() {
            if (s.adjoint() * &v)[(0, 0)].norm() > 1.0 - 1e-10 {
                return k;
            }
        }
        self.states.push(v);
        self.states.len() - 1
    }
}

/// Rank-1 eigen-decomposition of one basis operator: (eigenvalue, state id).
fn local_terms(op: &CMatrix, table: &mut LocalTable) -> Vec<(f64, usize)> {
    let d = op.nrows();
    let diagonal = (0..d).all(|i| (0..d).all(|j| i == j || op[(i, j)] == ZERO));
    if diagonal {
        return (0..d)
            .map(|i| (op[(i, i)].re, table.intern(crate::linalg::ket(d, i))))
            .filter(|(l, _)| *l != 0.0)
            .collect();
    }
    let (values, vectors) = eigh(op);
    values
        .iter()
        .enumerate()
        .filter(|(_, l)| l.abs() > ZERO_EIGENVALUE)
        .map(|(k, &l)| (l, table.intern(vectors.column(k).into_owned())))
        .collect()
}

fn separable_expansion(p: &Pdo) -> SeparableExpansion {
    let bases = bases_for(&p.dims).expect("validated dims");
    let mut tables: Vec<LocalTable> = p.dims.iter().map(|_| LocalTable { states: Vec::new() }).collect();
    // terms[event][μ] = [(λ, state id)]
    let terms: Vec<Vec<Vec<(f64, usize)>>> = bases
        .iter()
        .zip(tables.iter_mut())
        .map(|(b, table)| b.ops().iter().map(|op| local_terms(op, table)).collect())
        .collect();
    let norm = 1.0 / p.total_dim() as f64;
    let shape = p.shape();
    let mut acc: BTreeMap<Vec<usize>, f64> = BTreeMap::new();
    for (flat, &t) in p.tensor.iter().enumerate() {
        if t == 0.0 {
            continue;
        }
        let mu = multi_index(&shape, flat);
        let lists: Vec<&Vec<(f64, usize)>> = mu.iter().enumerate().map(|(e, &m)| &terms[e][m]).collect();
        let mut cursor = vec![0usize; lists.len()];
        'outer: loop {
            let mut w = t * norm;
            let mut key = Vec::with_capacity(lists.len());
            for (e, list) in lists.iter().enumerate() {
                let (lam, id) = list[cursor[e]];
                w *= lam;
                key.push(id);
            }
            *acc.entry(key).or_insert(0.0) += w;
            for e in (0..lists.len()).rev() {
                cursor[e] += 1;
                if cursor[e] < lists[e].len() {
                    continue 'outer;
                }
                cursor[e] = 0;
            }
            break;
        }
    }
    let mut weights = Vec::new();
    let mut local_states = Vec::new();
    for (key, w) in acc {
        if w.abs() <= 1e-15 {
            continue;
        }
        weights.push(w);
        local_states.push(key.iter().enumerate().map(|(e, &id)| tables[e].states[id].clone()).collect());
    }
    SeparableExpansion { dims: p.dims.clone(), weights, local_states }
}

/// Space-time purification: R = U · Tr_anc |Ψ⟩⟨Ψ|.
#[derive(Clone, Debug)]
pub struct Purification {
    pub system_dim: usize,
    pub state_vector: CVector,
    pub sign_unitary: CMatrix,
}

impl Purification {
    pub fn norm_sqr(&self) -> f64 {
        self.state_vector.iter().map(|z| z.norm_sqr()).sum()
    }

    /// Tr_anc |Ψ⟩⟨Ψ| = |R|.
    pub fn reduced(&self) -> CMatrix {
        let n = self.system_dim;
        let mut out = CMatrix::zeros(n, n);
        for s in 0..n {
            for t in 0..n {
                let mut acc = C64::new(0.0, 0.0);
                for a in 0..n {
                    acc += self.state_vector[s * n + a] * self.state_vector[t * n + a].conj();
                }
                out[(s, t)] = acc;
            }
        }
        out
    }

    pub fn reconstruct(&self) -> CMatrix {
        &self.sign_unitary * self.reduced()
    }

    pub fn unitarity_error(&self) -> f64 {
        let n = self.system_dim;
        max_abs_diff(&(self.sign_unitary.adjoint() * &self.sign_unitary), &CMatrix::identity(n, n))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures::{singlet, singlet_on, temporal_bell, temporal_qubit, zero_product};
    use crate::linalg::{c, kron_all, partial_trace as dense_partial_trace, pauli};
    use proptest::prelude::*;

    fn random_hermitian_trace_one(n: usize, seed: &[f64]) -> CMatrix {
        let mut m = CMatrix::zeros(n, n);
        let mut it = seed.iter().cycle();
        for i in 0..n {
            m[(i, i)] = c(*it.next().unwrap(), 0.0);
            for j in i + 1..n {
                let z = c(*it.next().unwrap(), *it.next().unwrap());
                m[(i, j)] = z;
                m[(j, i)] = z.conj();
            }
        }
        let tr = trace(&m).re;
        for i in 0..n {
            m[(i, i)] += c((1.0 - tr) / n as f64, 0.0);
        }
        m
    }

    #[test]
    fn singlet_matrix() {
        let paulis: Vec<CMatrix> = (0..4).map(pauli).collect();
        let mut expected = kron_all([&paulis[0], &paulis[0]]);
        for k in 1..4 {
            expected -= kron_all([&paulis[k], &paulis[k]]);
        }
        expected = expected.scale(0.25);
        assert!(max_abs_diff(&singlet().to_matrix(), &expected) < 1e-15);
        // |ψ⁻⟩ = (|01⟩ − |10⟩)/√2
        let mut v = CVector::zeros(4);
        v[1] = c(1.0 / 2f64.sqrt(), 0.0);
        v[2] = c(-1.0 / 2f64.sqrt(), 0.0);
        let p = Pdo::from_matrix(&(&v * v.adjoint()), &[2, 2]).unwrap();
        for (a, b) in p.tensor().iter().zip(singlet().tensor()) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn temporal_bell_is_half_swap() {
        let m = temporal_bell().to_matrix();
        let mut swap = CMatrix::zeros(4, 4);
        for i in 0..2 {
            for j in 0..2 {
                swap[(i * 2 + j, j * 2 + i)] = ONE;
            }
        }
        assert!(max_abs_diff(&m, &swap.scale(0.5)) < 1e-15);
        let s = temporal_bell().spectrum();
        let expected = [0.5, 0.5, 0.5, -0.5];
        for (a, b) in s.values.iter().zip(expected) {
            assert!((a - b).abs() < 1e-12);
        }
        assert!((temporal_bell().causality_c() - 0.5).abs() < 1e-12);
        assert!((temporal_bell().causality_f() - 1.0).abs() < 1e-12);
        assert!(!temporal_bell().is_positive(1e-10));
    }

    #[test]
    fn pure_input_temporal_spectrum() {
        let p = temporal_qubit([0.0, 0.0, 1.0]);
        let s = p.spectrum();
        let expected = [1.0, 0.5, 0.0, -0.5];
        for (a, b) in s.values.iter().zip(expected) {
            assert!((a - b).abs() < 1e-12, "{:?}", s.values);
        }
        assert!((p.causality_c() - 0.5).abs() < 1e-12);
    }

    #[test]
    fn maximally_mixed_and_density() {
        let p = Pdo::maximally_mixed(vec![2, 2], default_labels(2)).unwrap();
        assert!(max_abs_diff(&p.to_matrix(), &CMatrix::identity(4, 4).scale(0.25)) < 1e-15);
        assert!(p.spectrum().values.iter().all(|l| (l - 0.25).abs() < 1e-14));
        assert!(p.is_positive(1e-12));
        assert_eq!(p.causality_c(), 0.0);
        assert_eq!(p.causality_f(), 0.0);
        assert!(singlet().is_positive(1e-10));
        assert!(singlet().causality_c().abs() < 1e-12);
    }

    #[test]
    fn from_matrix_rejects_bad_input() {
        let m = CMatrix::identity(2, 2);
        assert!(matches!(Pdo::from_matrix(&m, &[2]), Err(Error::InvalidTrace(_))));
        let mut h = CMatrix::identity(2, 2).scale(0.5);
        h[(0, 1)] = c(0.3, 0.0);
        assert!(matches!(Pdo::from_matrix(&h, &[2]), Err(Error::NotHermitian(_))));
    }

    #[test]
    fn partial_trace_examples() {
        let r = singlet().partial_trace(&["e0"]).unwrap();
        assert_eq!(r.tensor(), &[1.0, 0.0, 0.0, 0.0]);
        let p = temporal_qubit([0.2, -0.1, 0.4]).partial_trace(&["e0"]).unwrap();
        let q = zero_product(1).relabeled(vec!["x".into()]).unwrap();
        let pq = p.tensor_product(&q).unwrap();
        assert_eq!(pq.partial_trace(&["e0"]).unwrap(), p);
        assert!(matches!(singlet().partial_trace(&[]), Err(Error::InvalidSelection(_))));
        assert!(matches!(singlet().partial_trace(&["zz"]), Err(Error::UnknownEvent(_))));
    }

    #[test]
    fn compatibility_examples() {
        let a = singlet_on("1", "2");
        let b = singlet_on("2", "3");
        assert!(a.compatible(&b, 1e-12));
        assert!(a.compatible(&a, 0.0));
        let z = zero_product(2).relabeled(vec!["2".into(), "3".into()]).unwrap();
        assert!(!a.compatible(&z, 1e-6));
        let far = zero_product(2).relabeled(vec!["8".into(), "9".into()]).unwrap();
        assert!(a.compatible(&far, 0.0));
    }

    #[test]
    fn validation_examples() {
        assert!(temporal_bell().validate().passed());
        let mut t = vec![0.0; 16];
        t[0] = 1.0;
        t[5] = 5.0;
        let r = Pdo::with_default_labels(vec![2, 2], t).unwrap().validate();
        assert!(!r.bounded);
        assert!((r.entry_bound - 2.0).abs() < 1e-15);
        let r = Pdo::with_default_labels(vec![2], vec![1.0, 0.0, 0.0, -2.0]).unwrap().validate();
        assert!(!r.locally_positive);
        assert!((r.min_local_eigenvalue + 0.5).abs() < 1e-12);
    }

    #[test]
    fn separable_expansion_examples() {
        let e = zero_product(1).separable_expansion();
        assert_eq!(e.weights.len(), 1);
        assert!((e.weights[0] - 1.0).abs() < 1e-15);
        assert!((e.local_states[0][0][0] - ONE).norm() < 1e-15);

        for p in [temporal_bell(), singlet()] {
            let e = p.separable_expansion();
            assert!(max_abs_diff(&e.reassemble(), &p.to_matrix()) < 1e-9);
            assert!((e.weight_sum() - 1.0).abs() < 1e-10);
            assert!(e.min_weight() < 0.0);
        }
    }

    #[test]
    fn purification_examples() {
        let pu = zero_product(2).purify();
        assert!((pu.norm_sqr() - 1.0).abs() < 1e-12);
        let pu = temporal_bell().purify();
        assert!((pu.norm_sqr() - 2.0).abs() < 1e-12);
        assert!(max_abs_diff(&pu.reconstruct(), &temporal_bell().to_matrix()) < 1e-9);
        assert!(pu.unitarity_error() < 1e-10);
    }

    #[test]
    fn json_round_trip_is_exact() {
        let p = temporal_qubit([0.1, 1.0 / 3.0, -0.7]);
        let s = p.to_json();
        assert!(s.contains("\"version\": 1"));
        assert_eq!(Pdo::from_json(&s).unwrap(), p);
        assert_eq!(Pdo::from_json(&s).unwrap().to_json(), s);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(48))]

        #[test]
        fn matrix_round_trip(n in 1usize..4, seed in prop::collection::vec(-1.0f64..1.0, 80)) {
            let dims = vec![2; n];
            let m = random_hermitian_trace_one(1 << n, &seed);
            let p = Pdo::from_matrix(&m, &dims).unwrap();
            prop_assert!(max_abs_diff(&p.to_matrix(), &m) < 1e-10);
        }

        #[test]
        fn partial_trace_matches_dense(seed in prop::collection::vec(-1.0f64..1.0, 80), keep in prop::sample::subsequence(vec![0usize, 1, 2], 1..3), rev in any::<bool>()) {
            let m = random_hermitian_trace_one(8, &seed);
            let p = Pdo::from_matrix(&m, &[2, 2, 2]).unwrap();
            let mut keep = keep;
            if rev { keep.reverse(); }
            let reduced = p.partial_trace_indices(&keep).unwrap();
            prop_assert!(max_abs_diff(&reduced.to_matrix(), &dense_partial_trace(&m, &[2, 2, 2], &keep)) < 1e-10);
        }

        #[test]
        fn expansion_and_purification(seed in prop::collection::vec(-1.0f64..1.0, 80), qutrit in any::<bool>()) {
            let dims = if qutrit { vec![3, 2] } else { vec![2, 2] };
            let n: usize = dims.iter().product();
            let m = random_hermitian_trace_one(n, &seed);
            let p = Pdo::from_matrix(&m, &dims).unwrap();
            let e = p.separable_expansion();
            prop_assert!((e.weight_sum() - 1.0).abs() < 1e-10);
            prop_assert!(max_abs_diff(&e.reassemble(), &m) < 1e-9);
            for states in &e.local_states {
                for v in states {
                    prop_assert!((v.norm() - 1.0).abs() < 1e-12);
                }
            }
            let pu = p.purify();
            prop_assert!(pu.norm_sqr() >= 1.0 - 1e-10);
            prop_assert!((pu.norm_sqr() - p.trace_norm()).abs() < 1e-10);
            prop_assert!(max_abs_diff(&pu.reconstruct(), &m) < 1e-9);
            if pu.norm_sqr() > 1.0 + 1e-9 {
                prop_assert!(!p.is_positive(1e-12));
            }
            let s = p.spectrum();
            prop_assert!((s.sum() - 1.0).abs() < 1e-10);
        }

        #[test]
        fn monotones_under_mixing(a in prop::collection::vec(-1.0f64..1.0, 40), b in prop::collection::vec(-1.0f64..1.0, 40), w in 0.0f64..1.0) {
            let ra = Pdo::from_matrix(&random_hermitian_trace_one(4, &a), &[2, 2]).unwrap();
            let rb = Pdo::from_matrix(&random_hermitian_trace_one(4, &b), &[2, 2]).unwrap();
            let mix: Vec<f64> = ra.tensor().iter().zip(rb.tensor()).map(|(x, y)| w * x + (1.0 - w) * y).collect();
            let mix = Pdo::with_default_labels(vec![2, 2], mix).unwrap();
            prop_assert!(mix.causality_c() <= w * ra.causality_c() + (1.0 - w) * rb.causality_c() + 1e-10);
            prop_assert!(mix.causality_f() <= ra.causality_f().max(rb.causality_f()) + 1e-10);
            let prod = ra.tensor_product(&rb.clone().relabeled(vec!["x".into(), "y".into()]).unwrap()).unwrap();
            prop_assert!((prod.causality_f() - ra.causality_f() - rb.causality_f()).abs() < 1e-9);
        }
    }
}
