//! Space-time entropies of PDOs and the inequalities they obey.
//!
//! All logarithms are base 2. The entropy of a PDO is the Shannon-like
//! functional of its absolute spectrum, S(R) = −Σ|λ|log₂|λ|.

use std::collections::BTreeMap;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::circuit::temporal_two_event;
use crate::error::{Error, Result};
use crate::linalg::{c, eigh, identity, kron, pauli, CMatrix, ZERO_EIGENVALUE};
use crate::pdo::{causality_c_from_norm, causality_f_from_norm, Pdo};

/// Default regularizer added to singular |R| before taking its logarithm.
pub const DEFAULT_EPS: f64 = 1e-12;

fn xlog2x(x: f64) -> f64 {
    if x <= 0.0 {
        0.0
    } else {
        x * x.log2()
    }
}

/// −Σ|λ|log₂|λ| of a spectrum.
pub fn spectral_entropy(values: &[f64]) -> f64 {
    -values.iter().map(|l| xlog2x(l.abs())).sum::<f64>()
}

/// Shannon entropy in bits.
pub fn shannon(p: &[f64]) -> f64 {
    -p.iter().map(|&x| xlog2x(x)).sum::<f64>()
}

pub fn entropy(p: &Pdo) -> f64 {
    spectral_entropy(&p.spectrum().values)
}

fn renyi_of_spectrum(values: &[f64], alpha: f64) -> Result<f64> {
    if !(alpha > 0.0) || alpha == 1.0 || !alpha.is_finite() {
        return Err(Error::InvalidArgument(format!("Rényi order must be positive and ≠ 1, got {alpha}")));
    }
    let s: f64 = values.iter().filter(|l| l.abs() > 0.0).map(|l| l.abs().powf(alpha)).sum();
    Ok(s.log2() / (1.0 - alpha))
}

/// S_α(R) = log₂(Tr|R|^α)/(1−α). Tends to S(R) as α → 1 only when ‖R‖₁ = 1.
pub fn renyi(p: &Pdo, alpha: f64) -> Result<f64> {
    renyi_of_spectrum(&p.spectrum().values, alpha)
}

fn complement(p: &Pdo, a: &[&str]) -> Result<(Vec<String>, Vec<String>)> {
    for l in a {
        if p.position(l).is_none() {
            return Err(Error::UnknownEvent(l.to_string()));
        }
    }
    let a_set: Vec<String> = p.labels().iter().filter(|l| a.contains(&l.as_str())).cloned().collect();
    let b_set: Vec<String> = p.labels().iter().filter(|l| !a.contains(&l.as_str())).cloned().collect();
    if a_set.is_empty() || b_set.is_empty() || a_set.len() != a.len() {
        return Err(Error::InvalidSelection("split must be a proper bipartition of the events".into()));
    }
    Ok((a_set, b_set))
}

fn reduce(p: &Pdo, keep: &[String]) -> Result<Pdo> {
    let refs: Vec<&str> = keep.iter().map(String::as_str).collect();
    p.partial_trace(&refs)
}

/// Returns (S(A|B), I(A:B)) where B is every event not in `a`.
pub fn conditional_mutual(joint: &Pdo, a: &[&str]) -> Result<(f64, f64)> {
    let (a_set, b_set) = complement(joint, a)?;
    let s_ab = entropy(joint);
    let s_a = entropy(&reduce(joint, &a_set)?);
    let s_b = entropy(&reduce(joint, &b_set)?);
    Ok((s_ab - s_b, s_a + s_b - s_ab))
}

/// Absolute spectrum of a Hermitian matrix: eigenvalues |λ| and eigenvectors.
fn abs_eigh(m: &CMatrix) -> (Vec<f64>, CMatrix) {
    let (v, u) = eigh(m);
    (v.into_iter().map(f64::abs).collect(), u)
}

/// Tr(A log₂ B) for Hermitian PSD `a` given in eigen form, with `b` regularized
/// by `eps·I` if it has an eigenvalue below the zero threshold.
fn trace_a_log_b(a_vals: &[f64], a_vecs: &CMatrix, b_vals: &[f64], b_vecs: &CMatrix, eps: f64) -> f64 {
    let singular = b_vals.iter().any(|&x| x < ZERO_EIGENVALUE);
    let logs: Vec<f64> = b_vals.iter().map(|&x| if singular { (x + eps).log2() } else { x.log2() }).collect();
    let overlap = a_vecs.adjoint() * b_vecs;
    let mut s = 0.0;
    for (i, &ai) in a_vals.iter().enumerate() {
        if ai == 0.0 {
            continue;
        }
        for (j, lj) in logs.iter().enumerate() {
            s += ai * overlap[(i, j)].norm_sqr() * lj;
        }
    }
    s
}

/// Relative entropy of Hermitian matrices through their absolute values.
pub fn relative_entropy_matrices(r1: &CMatrix, r2: &CMatrix, eps: f64) -> Result<f64> {
    if r1.shape() != r2.shape() {
        return Err(Error::DimensionMismatch(format!("{:?} vs {:?}", r1.shape(), r2.shape())));
    }
    let (a, ua) = abs_eigh(r1);
    let (b, ub) = abs_eigh(r2);
    let self_term: f64 = a.iter().map(|&x| xlog2x(x)).sum();
    Ok(self_term - trace_a_log_b(&a, &ua, &b, &ub, eps))
}

/// S(R₁‖R₂) = Tr|R₁|log₂|R₁| − Tr|R₁|log₂|R₂|.
pub fn relative_entropy(p: &Pdo, q: &Pdo, eps: f64) -> Result<f64> {
    if p.dims() != q.dims() {
        return Err(Error::DimensionMismatch(format!("{:?} vs {:?}", p.dims(), q.dims())));
    }
    relative_entropy_matrices(&p.to_matrix(), &q.to_matrix(), eps)
}

/// |S − (2C+1)(H(p⃗) − F)| for the normalized absolute spectrum p⃗.
pub fn entropy_identity(p: &Pdo) -> f64 {
    let values = p.spectrum().values;
    identity_residual(&values)
}

fn identity_residual(values: &[f64]) -> f64 {
    let norm: f64 = values.iter().map(|l| l.abs()).sum();
    let p_vec: Vec<f64> = values.iter().map(|l| l.abs() / norm).collect();
    let c_val = causality_c_from_norm(norm);
    let f_val = causality_f_from_norm(norm);
    (spectral_entropy(values) - (2.0 * c_val + 1.0) * (shannon(&p_vec) - f_val)).abs()
}

/// Upper bound K = (2C_max+1)·log₂D with C_max = (D−1)/2, D the total dimension.
pub fn entropy_bound(dims: &[usize]) -> f64 {
    let total: usize = dims.iter().product();
    let d = total as f64;
    d * d.log2()
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct EntropyReport {
    #[serde(rename = "S")]
    pub entropy: f64,
    pub renyi: BTreeMap<String, f64>,
    #[serde(rename = "C")]
    pub causality_c: f64,
    #[serde(rename = "F")]
    pub causality_f: f64,
    pub p_vec: Vec<f64>,
    pub spectrum: Vec<f64>,
    pub identity_residual: f64,
}

impl EntropyReport {
    pub fn new(p: &Pdo, alphas: &[f64]) -> Result<Self> {
        let values = p.spectrum().values;
        let norm: f64 = values.iter().map(|l| l.abs()).sum();
        let mut renyi = BTreeMap::new();
        for &a in alphas {
            renyi.insert(format!("{a}"), renyi_of_spectrum(&values, a)?);
        }
        Ok(Self {
            entropy: spectral_entropy(&values),
            renyi,
            causality_c: causality_c_from_norm(norm),
            causality_f: causality_f_from_norm(norm),
            p_vec: values.iter().map(|l| l.abs() / norm).collect(),
            identity_residual: identity_residual(&values),
            spectrum: values,
        })
    }
}

/// Klein bound S(R₁‖R₂) ≥ 2(C(R₁) − C(R₂)).
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct KleinCheck {
    pub relative_entropy: f64,
    pub bound: f64,
    /// relative_entropy − bound, both in bits.
    pub residual: f64,
    /// The same inequality with the relative entropy measured in nats.
    pub natural_residual: f64,
}

pub fn klein_bound(p: &Pdo, q: &Pdo, eps: f64) -> Result<KleinCheck> {
    let rel = relative_entropy(p, q, eps)?;
    let bound = 2.0 * (p.causality_c() - q.causality_c());
    Ok(KleinCheck {
        relative_entropy: rel,
        bound,
        residual: rel - bound,
        natural_residual: rel * std::f64::consts::LN_2 - bound,
    })
}

/// Weak subadditivity with X = |R_AB| and Y = |R_A|⊗|R_B|:
/// S(A) + S(B) − S(AB) ≥ Δ + Tr(X − Y), Δ = Tr[(X − Y) log₂ Y].
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SubadditivityCheck {
    pub lhs: f64,
    pub delta: f64,
    pub trace_gap: f64,
    pub residual: f64,
    /// Residual of N_B·S(A) + N_A·S(B) − S(AB) ≥ Δ + Tr(X − Y)/ln 2, which
    /// holds without assuming positive marginals.
    pub general_residual: f64,
}

pub fn weak_subadditivity(joint: &Pdo, a: &[&str], eps: f64) -> Result<SubadditivityCheck> {
    let (a_set, b_set) = complement(joint, a)?;
    // Order the joint as A then B so that Y = |R_A|⊗|R_B| lines up.
    let order: Vec<String> = a_set.iter().chain(&b_set).cloned().collect();
    let ordered = reduce(joint, &order)?;
    let ra = reduce(joint, &a_set)?;
    let rb = reduce(joint, &b_set)?;
    let (x_vals, x_vecs) = abs_eigh(&ordered.to_matrix());
    let (a_vals, a_vecs) = abs_eigh(&ra.to_matrix());
    let (b_vals, b_vecs) = abs_eigh(&rb.to_matrix());
    let y_vals: Vec<f64> = a_vals.iter().flat_map(|&x| b_vals.iter().map(move |&y| x * y)).collect();
    let y_vecs = kron(&a_vecs, &b_vecs);
    let y_log_y: f64 = y_vals.iter().map(|&y| xlog2x(y)).sum();
    let x_log_y = trace_a_log_b(&x_vals, &x_vecs, &y_vals, &y_vecs, eps);
    let singular = y_vals.iter().any(|&y| y < ZERO_EIGENVALUE);
    let y_log_y_reg: f64 = if singular {
        y_vals.iter().map(|&y| y * (y + eps).log2()).sum()
    } else {
        y_log_y
    };
    let delta = x_log_y - y_log_y_reg;
    let n_ab: f64 = x_vals.iter().sum();
    let n_a: f64 = a_vals.iter().sum();
    let n_b: f64 = b_vals.iter().sum();
    let trace_gap = n_ab - n_a * n_b;
    let s_ab = spectral_entropy(&x_vals);
    let s_a = spectral_entropy(&a_vals);
    let s_b = spectral_entropy(&b_vals);
    let lhs = s_a + s_b - s_ab;
    Ok(SubadditivityCheck {
        lhs,
        delta,
        trace_gap,
        residual: lhs - delta - trace_gap,
        general_residual: n_b * s_a + n_a * s_b - s_ab - delta - trace_gap / std::f64::consts::LN_2,
    })
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct InequalityReport {
    /// |S(URU†) − S(R)| for a fixed pseudo-random global unitary U.
    pub unitary_invariance: f64,
    /// |S(R₁⊗R₂) − (2C₂+1)S(R₁) − (2C₁+1)S(R₂)|.
    pub weak_additivity: f64,
    /// S(α|R₁|+(1−α)|R₂|) − αS(R₁) − (1−α)S(R₂); present when dims agree.
    pub weak_concavity: Option<f64>,
    /// For R₁ split into its first event versus the rest.
    pub weak_subadditivity: Option<SubadditivityCheck>,
    pub klein: Option<KleinCheck>,
}

impl InequalityReport {
    /// True when every equality residual is ≤ `eq_tol` and every inequality
    /// residual is ≥ −`ineq_tol`.
    pub fn passed(&self, eq_tol: f64, ineq_tol: f64) -> bool {
        self.unitary_invariance <= eq_tol
            && self.weak_additivity <= eq_tol
            && self.weak_concavity.is_none_or(|r| r >= -ineq_tol)
            && self.weak_subadditivity.as_ref().is_none_or(|s| s.residual >= -ineq_tol)
            && self.klein.as_ref().is_none_or(|k| k.residual >= -ineq_tol)
    }
}

pub fn unitary_invariance(p: &Pdo, u: &CMatrix) -> Result<f64> {
    let n = p.total_dim();
    if u.shape() != (n, n) {
        return Err(Error::DimensionMismatch(format!("unitary is {:?}, PDO is {n}×{n}", u.shape())));
    }
    let m = p.to_matrix();
    let rotated = u * m * u.adjoint();
    let (v, _) = eigh(&rotated);
    Ok((spectral_entropy(&v) - entropy(p)).abs())
}

pub fn weak_additivity(p: &Pdo, q: &Pdo) -> Result<f64> {
    let joint = p.tensor_product(&q.clone().relabeled(disjoint_labels(p, q))?)?;
    let rhs = (2.0 * q.causality_c() + 1.0) * entropy(p) + (2.0 * p.causality_c() + 1.0) * entropy(q);
    Ok((entropy(&joint) - rhs).abs())
}

fn disjoint_labels(p: &Pdo, q: &Pdo) -> Vec<String> {
    q.labels()
        .iter()
        .map(|l| {
            let mut l = l.clone();
            while p.labels().contains(&l) {
                l.push('\'');
            }
            l
        })
        .collect()
}

/// S(α|R₁|+(1−α)|R₂|) − αS(R₁) − (1−α)S(R₂).
pub fn weak_concavity(p: &Pdo, q: &Pdo, alpha: f64) -> Result<f64> {
    if p.dims() != q.dims() {
        return Err(Error::DimensionMismatch(format!("{:?} vs {:?}", p.dims(), q.dims())));
    }
    if !(0.0..=1.0).contains(&alpha) {
        return Err(Error::InvalidArgument(format!("mixing weight {alpha} outside [0, 1]")));
    }
    let a1 = crate::linalg::abs_hermitian(&p.to_matrix());
    let a2 = crate::linalg::abs_hermitian(&q.to_matrix());
    let mix = a1 * c(alpha, 0.0) + a2 * c(1.0 - alpha, 0.0);
    let (v, _) = eigh(&mix);
    Ok(spectral_entropy(&v) - alpha * entropy(p) - (1.0 - alpha) * entropy(q))
}

/// Runs the whole inequality suite on a pair of PDOs.
pub fn check_inequalities(p: &Pdo, q: &Pdo, alpha: f64) -> Result<InequalityReport> {
    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed);
    let u = crate::random::unitary(p.total_dim(), &mut rng);
    let same = p.dims() == q.dims();
    let weak_subadditivity = if p.n_events() >= 2 {
        Some(weak_subadditivity(p, &[p.labels()[0].as_str()], DEFAULT_EPS)?)
    } else {
        None
    };
    Ok(InequalityReport {
        unitary_invariance: unitary_invariance(p, &u)?,
        weak_additivity: weak_additivity(p, q)?,
        weak_concavity: if same { Some(weak_concavity(p, q, alpha)?) } else { None },
        weak_subadditivity,
        klein: if same { Some(klein_bound(p, q, DEFAULT_EPS)?) } else { None },
    })
}

/// One point of the qubit curve: input (I + rZ)/2 sent through the identity.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SweepPoint {
    pub r: f64,
    pub entropy: f64,
    pub spectrum: Vec<f64>,
}

pub fn qubit_sweep(rs: &[f64]) -> Result<Vec<SweepPoint>> {
    rs.iter()
        .map(|&r| {
            if !(0.0..=1.0).contains(&r) {
                return Err(Error::InvalidArgument(format!("Bloch length {r} outside [0, 1]")));
            }
            let rho = (identity(2) + pauli(3) * c(r, 0.0)) * c(0.5, 0.0);
            let p = temporal_two_event(&rho, &[identity(2)])?;
            let mut spectrum = p.spectrum().values;
            spectrum.sort_by(f64::total_cmp);
            Ok(SweepPoint { r, entropy: spectral_entropy(&spectrum), spectrum })
        })
        .collect()
}

/// CSV rendering of a sweep with header `r,S,l1,l2,...`.
pub fn sweep_csv(points: &[SweepPoint]) -> String {
    let width = points.first().map_or(0, |p| p.spectrum.len());
    let mut out = String::from("r,S");
    for k in 1..=width {
        out.push_str(&format!(",l{k}"));
    }
    out.push('\n');
    for p in points {
        out.push_str(&format!("{},{}", p.r, p.entropy));
        for l in &p.spectrum {
            out.push_str(&format!(",{l}"));
        }
        out.push('\n');
    }
    out
}
