//! Generalized Pauli (Gell-Mann) operator bases normalized to Tr(σ_μ σ_ν) = d·δ_μν.

use std::collections::HashMap;
use std::sync::{Arc, Mutex, OnceLock};

use serde::Serialize;

use crate::error::{Error, Result};
use crate::linalg::{c, hermitian_deviation, identity, trace, CMatrix, ZERO};

/// Ordered Hermitian operator basis σ_0 = I, σ_1, …, σ_{d²-1} of a qudit.
#[derive(Clone, Debug)]
pub struct OperatorBasis {
    dim: usize,
    ops: Vec<CMatrix>,
}

impl OperatorBasis {
    /// Wraps an arbitrary operator list without validation; see [`check_basis`].
    pub fn from_ops(dim: usize, ops: Vec<CMatrix>) -> Self {
        Self { dim, ops }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.ops.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ops.is_empty()
    }

    pub fn ops(&self) -> &[CMatrix] {
        &self.ops
    }

    pub fn op(&self, mu: usize) -> &CMatrix {
        &self.ops[mu]
    }

    /// Coefficients c_μ = Tr(M σ_μ) of a Hermitian matrix.
    pub fn coefficients(&self, m: &CMatrix) -> Vec<f64> {
        self.ops.iter().map(|s| trace(&(m * s)).re).collect()
    }

    /// Inverse of [`coefficients`](Self::coefficients): (1/d)·Σ_μ c_μ σ_μ.
    pub fn reconstruct(&self, coeffs: &[f64]) -> CMatrix {
        let mut out = CMatrix::zeros(self.dim, self.dim);
        for (s, &w) in self.ops.iter().zip(coeffs) {
            out += s.scale(w);
        }
        out.scale(1.0 / self.dim as f64)
    }
}

/// Builds the basis for local dimension `d`: identity, then the symmetric,
/// antisymmetric and diagonal Gell-Mann families, scaled so Tr(σ_μ²) = d.
pub fn make_basis(d: usize) -> Result<OperatorBasis> {
    if d < 2 {
        return Err(Error::InvalidDimension(d));
    }
    let scale = (d as f64 / 2.0).sqrt();
    let mut ops = Vec::with_capacity(d * d);
    ops.push(identity(d));
    for j in 0..d {
        for k in j + 1..d {
            let mut m = CMatrix::zeros(d, d);
            m[(j, k)] = c(scale, 0.0);
            m[(k, j)] = c(scale, 0.0);
            ops.push(m);
        }
    }
    for j in 0..d {
        for k in j + 1..d {
            let mut m = CMatrix::zeros(d, d);
            m[(j, k)] = c(0.0, -scale);
            m[(k, j)] = c(0.0, scale);
            ops.push(m);
        }
    }
    for l in 1..d {
        let norm = (2.0 / (l * (l + 1)) as f64).sqrt() * scale;
        let mut m = CMatrix::from_element(d, d, ZERO);
        for j in 0..l {
            m[(j, j)] = c(norm, 0.0);
        }
        m[(l, l)] = c(-(l as f64) * norm, 0.0);
        ops.push(m);
    }
    Ok(OperatorBasis { dim: d, ops })
}

/// Shared, lazily built basis for dimension `d`.
pub fn basis(d: usize) -> Result<Arc<OperatorBasis>> {
    static CACHE: OnceLock<Mutex<HashMap<usize, Arc<OperatorBasis>>>> = OnceLock::new();
    let cache = CACHE.get_or_init(|| Mutex::new(HashMap::new()));
    let mut guard = cache.lock().expect("basis cache poisoned");
    if let Some(b) = guard.get(&d) {
        return Ok(Arc::clone(b));
    }
    let b = Arc::new(make_basis(d)?);
    guard.insert(d, Arc::clone(&b));
    Ok(b)
}

/// Largest violation of each basis invariant.
#[derive(Clone, Debug, Default, Serialize, PartialEq)]
pub struct BasisReport {
    pub count: f64,
    pub identity: f64,
    pub traceless: f64,
    pub orthogonality: f64,
    pub hermiticity: f64,
}

impl BasisReport {
    pub fn max_violation(&self) -> f64 {
        [self.count, self.identity, self.traceless, self.orthogonality, self.hermiticity]
            .into_iter()
            .fold(0.0, f64::max)
    }
}

pub fn check_basis(b: &OperatorBasis) -> BasisReport {
    let d = b.dim;
    let mut report = BasisReport {
        count: (b.ops.len() as f64 - (d * d) as f64).abs(),
        ..Default::default()
    };
    if let Some(first) = b.ops.first() {
        report.identity = first
            .iter()
            .zip(identity(d).iter())
            .map(|(x, y)| (x - y).norm())
            .fold(0.0, f64::max);
    }
    for (mu, s) in b.ops.iter().enumerate() {
        report.hermiticity = report.hermiticity.max(hermitian_deviation(s));
        if mu > 0 {
            report.traceless = report.traceless.max(trace(s).norm());
        }
        for (nu, t) in b.ops.iter().enumerate() {
            let expected = if mu == nu { d as f64 } else { 0.0 };
            let dev = (trace(&(s * t)) - c(expected, 0.0)).norm();
            report.orthogonality = report.orthogonality.max(dev);
        }
    }
    report
}
