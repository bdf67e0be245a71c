//! Pseudo-channels: Hermiticity- and trace-preserving maps written as
//! weighted Kraus sums Φ(R) = Σ λ_a A_a R A_a† with real weights, together
//! with their normalized Choi matrices and Lindbladian dynamics.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::json::{matrix_from_rows, matrix_to_rows, MatrixRows};
use crate::linalg::{
    c, eigh, hermitian_deviation, identity, kron, max_abs_diff, partial_trace, permutation, trace_norm, CMatrix, C64,
};
use crate::marginal::{solve_herm1, MarginalScenario, SolutionFamily};
use crate::pdo::{multi_index, tensor_coefficients, tensor_to_matrix, Pdo};

/// Trace-preservation tolerance on Σλ A†A.
pub const TP_TOL: f64 = 1e-10;
/// Tolerance for Choi matrices handed to [`PseudoChannel::from_choi`].
pub const CHOI_TOL: f64 = 1e-9;
/// Allowed deviation from J' ⊗ I/d when taking a marginal channel.
pub const FACTORIZATION_TOL: f64 = 1e-6;

fn labels_with(prefix: &str, n: usize) -> Vec<String> {
    (0..n).map(|i| format!("{prefix}{i}")).collect()
}

#[derive(Clone, Debug)]
pub struct PseudoChannel {
    in_labels: Vec<String>,
    in_dims: Vec<usize>,
    out_labels: Vec<String>,
    out_dims: Vec<usize>,
    kraus: Vec<(f64, CMatrix)>,
}

impl PseudoChannel {
    /// Checks shapes and Σλ_a A_a†A_a = I. Labels default to i0.. and o0...
    pub fn new(in_dims: Vec<usize>, out_dims: Vec<usize>, kraus: Vec<(f64, CMatrix)>) -> Result<Self> {
        let (ni, no) = (in_dims.len(), out_dims.len());
        Self::labeled(labels_with("i", ni), in_dims, labels_with("o", no), out_dims, kraus)
    }

    pub fn labeled(
        in_labels: Vec<String>,
        in_dims: Vec<usize>,
        out_labels: Vec<String>,
        out_dims: Vec<usize>,
        kraus: Vec<(f64, CMatrix)>,
    ) -> Result<Self> {
        for &d in in_dims.iter().chain(&out_dims) {
            if d < 2 {
                return Err(Error::InvalidDimension(d));
            }
        }
        if in_labels.len() != in_dims.len() || out_labels.len() != out_dims.len() {
            return Err(Error::DimensionMismatch("one label per event required".into()));
        }
        let mut all: Vec<&String> = in_labels.iter().chain(&out_labels).collect();
        all.sort();
        all.dedup();
        if all.len() != in_labels.len() + out_labels.len() {
            return Err(Error::InvalidSelection("channel event labels must be distinct".into()));
        }
        let (di, dout): (usize, usize) = (in_dims.iter().product(), out_dims.iter().product());
        if kraus.is_empty() {
            return Err(Error::InvalidArgument("channel needs at least one Kraus operator".into()));
        }
        let mut sum = CMatrix::zeros(di, di);
        for (w, a) in &kraus {
            if a.shape() != (dout, di) {
                return Err(Error::DimensionMismatch(format!(
                    "Kraus operator is {:?}, expected {dout}×{di}",
                    a.shape()
                )));
            }
            sum += a.adjoint() * a * c(*w, 0.0);
        }
        let residual = max_abs_diff(&sum, &identity(di));
        if residual > TP_TOL {
            return Err(Error::NotTracePreserving(residual));
        }
        Ok(Self { in_labels, in_dims, out_labels, out_dims, kraus })
    }

    pub fn identity(dims: Vec<usize>) -> Self {
        let d = dims.iter().product();
        Self::new(dims.clone(), dims, vec![(1.0, identity(d))]).expect("identity is trace preserving")
    }

    pub fn unitary(u: CMatrix, dims: Vec<usize>) -> Result<Self> {
        Self::new(dims.clone(), dims, vec![(1.0, u)])
    }

    /// R ↦ Tr(R)·I/d on a single d-level event.
    pub fn depolarizing(d: usize) -> Self {
        let mut kraus = Vec::with_capacity(d * d);
        for i in 0..d {
            for j in 0..d {
                let mut e = CMatrix::zeros(d, d);
                e[(i, j)] = c(1.0 / (d as f64).sqrt(), 0.0);
                kraus.push((1.0, e));
            }
        }
        Self::new(vec![d], vec![d], kraus).expect("depolarizing is trace preserving")
    }

    /// R ↦ Rᵀ on a single d-level event (Hermitian, not completely positive).
    pub fn transpose(d: usize) -> Self {
        let swap = crate::circuit::swap_operator(d) / c(d as f64, 0.0);
        Self::from_choi(&swap, vec![d], vec![d]).expect("swap/d is a valid Choi matrix")
    }

    pub fn in_dims(&self) -> &[usize] {
        &self.in_dims
    }

    pub fn out_dims(&self) -> &[usize] {
        &self.out_dims
    }

    pub fn in_labels(&self) -> &[String] {
        &self.in_labels
    }

    pub fn out_labels(&self) -> &[String] {
        &self.out_labels
    }

    pub fn kraus(&self) -> &[(f64, CMatrix)] {
        &self.kraus
    }

    pub fn d_in(&self) -> usize {
        self.in_dims.iter().product()
    }

    pub fn d_out(&self) -> usize {
        self.out_dims.iter().product()
    }

    pub fn is_completely_positive(&self) -> bool {
        self.kraus.iter().all(|(w, _)| *w >= 0.0)
    }

    pub fn relabeled(mut self, in_labels: Vec<String>, out_labels: Vec<String>) -> Result<Self> {
        if in_labels.len() != self.in_dims.len() || out_labels.len() != self.out_dims.len() {
            return Err(Error::DimensionMismatch("one label per event required".into()));
        }
        self.in_labels = in_labels;
        self.out_labels = out_labels;
        Self::labeled(self.in_labels, self.in_dims, self.out_labels, self.out_dims, self.kraus)
    }

    pub fn apply_matrix(&self, r: &CMatrix) -> Result<CMatrix> {
        let d = self.d_in();
        if r.shape() != (d, d) {
            return Err(Error::DimensionMismatch(format!("input is {:?}, channel expects {d}×{d}", r.shape())));
        }
        let mut out = CMatrix::zeros(self.d_out(), self.d_out());
        for (w, a) in &self.kraus {
            out += a * r * a.adjoint() * c(*w, 0.0);
        }
        Ok(out)
    }

    /// Output PDO on the channel's out events.
    pub fn apply(&self, p: &Pdo) -> Result<Pdo> {
        if p.dims() != self.in_dims.as_slice() {
            return Err(Error::DimensionMismatch(format!("PDO dims {:?}, channel input {:?}", p.dims(), self.in_dims)));
        }
        let out = self.apply_matrix(&p.to_matrix())?;
        Pdo::new(self.out_dims.clone(), self.out_labels.clone(), tensor_coefficients(&out, &self.out_dims)?)
    }

    /// J = (1/d_in) Σ_ij Φ(E_ij) ⊗ E_ij, output factor first.
    pub fn choi(&self) -> CMatrix {
        let (di, dout) = (self.d_in(), self.d_out());
        let mut j = CMatrix::zeros(dout * di, dout * di);
        for (w, a) in &self.kraus {
            // Σ_i A|i⟩⊗|i⟩ as a column.
            let v = CMatrix::from_fn(dout * di, 1, |r, _| a[(r / di, r % di)]);
            j += &v * v.adjoint() * c(*w, 0.0);
        }
        j / c(di as f64, 0.0)
    }

    /// The Choi matrix as a PDO on out events followed by in events.
    pub fn choi_pdo(&self) -> Pdo {
        let dims: Vec<usize> = self.out_dims.iter().chain(&self.in_dims).copied().collect();
        let labels: Vec<String> = self.out_labels.iter().chain(&self.in_labels).cloned().collect();
        let tensor = tensor_coefficients(&self.choi(), &dims).expect("validated dims");
        Pdo::new(dims, labels, tensor).expect("Choi matrix has unit trace")
    }

    /// Φ(R) = d_in·Tr_in(J (I ⊗ Rᵀ)).
    pub fn apply_via_choi(j: &CMatrix, in_dim: usize, r: &CMatrix) -> CMatrix {
        let out_dim = j.nrows() / in_dim;
        let m = j * kron(&identity(out_dim), &r.transpose());
        partial_trace(&m, &[out_dim, in_dim], &[0]) * c(in_dim as f64, 0.0)
    }

    /// Weighted Kraus form from the spectral decomposition of d_in·J.
    pub fn from_choi(j: &CMatrix, in_dims: Vec<usize>, out_dims: Vec<usize>) -> Result<Self> {
        let (di, dout): (usize, usize) = (in_dims.iter().product(), out_dims.iter().product());
        if j.shape() != (dout * di, dout * di) {
            return Err(Error::DimensionMismatch(format!("Choi matrix is {:?}", j.shape())));
        }
        let dev = hermitian_deviation(j);
        if dev > CHOI_TOL {
            return Err(Error::NotHermitian(dev));
        }
        let reduced = partial_trace(j, &[dout, di], &[1]);
        let residual = max_abs_diff(&reduced, &(identity(di) / c(di as f64, 0.0)));
        if residual > CHOI_TOL {
            return Err(Error::NotTracePreserving(residual));
        }
        let (values, vectors) = eigh(&(j * c(di as f64, 0.0)));
        let mut kraus = Vec::new();
        for (k, &mu) in values.iter().enumerate() {
            if mu.abs() < 1e-14 {
                continue;
            }
            let s = mu.abs().sqrt();
            let a = CMatrix::from_fn(dout, di, |o, i| vectors[(o * di + i, k)] * s);
            kraus.push((mu.signum(), a));
        }
        // Rounding in the eigensolver can leave Σλ A†A a hair away from I.
        let ni = in_dims.len();
        let no = out_dims.len();
        let mut sum = CMatrix::zeros(di, di);
        for (w, a) in &kraus {
            sum += a.adjoint() * a * c(*w, 0.0);
        }
        let res = max_abs_diff(&sum, &identity(di));
        if res > CHOI_TOL {
            return Err(Error::NotTracePreserving(res));
        }
        let channel = Self { in_labels: labels_with("i", ni), in_dims, out_labels: labels_with("o", no), out_dims, kraus };
        Ok(channel)
    }

    /// Φ₁ ⊗ Φ₂ with events concatenated.
    pub fn tensor(&self, other: &Self) -> Result<Self> {
        let mut kraus = Vec::with_capacity(self.kraus.len() * other.kraus.len());
        for (w1, a1) in &self.kraus {
            for (w2, a2) in &other.kraus {
                kraus.push((w1 * w2, kron(a1, a2)));
            }
        }
        Self::labeled(
            self.in_labels.iter().chain(&other.in_labels).cloned().collect(),
            self.in_dims.iter().chain(&other.in_dims).copied().collect(),
            self.out_labels.iter().chain(&other.out_labels).cloned().collect(),
            self.out_dims.iter().chain(&other.out_dims).copied().collect(),
            kraus,
        )
    }

    /// Natural representation: vec(Φ(R)) = N·vec(R) with row-major vec.
    pub fn natural(&self) -> CMatrix {
        let mut n = CMatrix::zeros(self.d_out() * self.d_out(), self.d_in() * self.d_in());
        for (w, a) in &self.kraus {
            n += kron(a, &a.conjugate()) * c(*w, 0.0);
        }
        n
    }

    pub fn stinespring(&self) -> Stinespring {
        let k = self.kraus.len();
        let (di, dout) = (self.d_in(), self.d_out());
        let mut a = CMatrix::zeros(dout * k, di);
        let mut b = CMatrix::zeros(dout * k, di);
        for (e, (w, op)) in self.kraus.iter().enumerate() {
            for o in 0..dout {
                for i in 0..di {
                    a[(o * k + e, i)] = op[(o, i)] * c(*w, 0.0);
                    b[(o * k + e, i)] = op[(o, i)];
                }
            }
        }
        Stinespring { a, b, out_dim: dout, env_dim: k }
    }

    fn positions(&self, labels: &[String], keep: &[&str], what: &str) -> Result<Vec<usize>> {
        keep.iter()
            .map(|l| {
                labels
                    .iter()
                    .position(|x| x == l)
                    .ok_or_else(|| Error::UnknownEvent(format!("{what} event {l}")))
            })
            .collect()
    }

    /// Marginal channel from the kept in events X to the kept out events Y.
    pub fn marginal_channel(&self, keep_in: &[&str], keep_out: &[&str]) -> Result<Self> {
        let xi = self.positions(&self.in_labels, keep_in, "input")?;
        let yo = self.positions(&self.out_labels, keep_out, "output")?;
        if xi.is_empty() || yo.is_empty() {
            return Err(Error::InvalidSelection("marginal channel needs at least one in and one out event".into()));
        }
        let no = self.out_dims.len();
        let dims: Vec<usize> = self.out_dims.iter().chain(&self.in_dims).copied().collect();
        let x_rest: Vec<usize> = (0..self.in_dims.len()).filter(|k| !xi.contains(k)).collect();
        // Tr over Y^c, ordered as Y, X, X^c.
        let keep: Vec<usize> = yo.iter().copied().chain(xi.iter().chain(&x_rest).map(|&k| no + k)).collect();
        let jy = reduce_ordered(&self.choi(), &dims, &keep);
        let y_dims: Vec<usize> = yo.iter().map(|&k| self.out_dims[k]).collect();
        let x_dims: Vec<usize> = xi.iter().map(|&k| self.in_dims[k]).collect();
        let rest_dim: usize = x_rest.iter().map(|&k| self.in_dims[k]).product();
        let (dy, dx): (usize, usize) = (y_dims.iter().product(), x_dims.iter().product());
        let jp = partial_trace(&jy, &[dy, dx, rest_dim], &[0, 1]);
        let factored = kron(&jp, &(identity(rest_dim) / c(rest_dim as f64, 0.0)));
        let residual = max_abs_diff(&jy, &factored);
        if residual > FACTORIZATION_TOL {
            return Err(Error::NoMarginalChannel(residual));
        }
        let m = Self::from_choi(&jp, x_dims, y_dims)?;
        m.relabeled(
            xi.iter().map(|&k| self.in_labels[k].clone()).collect(),
            yo.iter().map(|&k| self.out_labels[k].clone()).collect(),
        )
    }

    pub fn to_json_value(&self) -> ChannelJson {
        ChannelJson {
            version: 1,
            in_dims: self.in_dims.clone(),
            out_dims: self.out_dims.clone(),
            in_labels: Some(self.in_labels.clone()),
            out_labels: Some(self.out_labels.clone()),
            kraus: self.kraus.iter().map(|(w, a)| KrausJson { weight: *w, matrix: matrix_to_rows(a) }).collect(),
        }
    }

    pub fn from_json_value(v: ChannelJson) -> Result<Self> {
        if v.version != 1 {
            return Err(Error::InvalidArgument(format!("unsupported channel version {}", v.version)));
        }
        let kraus = v
            .kraus
            .into_iter()
            .map(|k| Ok((k.weight, matrix_from_rows(&k.matrix)?)))
            .collect::<Result<Vec<_>>>()?;
        let in_labels = v.in_labels.unwrap_or_else(|| labels_with("i", v.in_dims.len()));
        let out_labels = v.out_labels.unwrap_or_else(|| labels_with("o", v.out_dims.len()));
        Self::labeled(in_labels, v.in_dims, out_labels, v.out_dims, kraus)
    }

    pub fn to_json(&self) -> String {
        crate::json::to_canonical_string(&self.to_json_value())
    }

    pub fn from_json(s: &str) -> Result<Self> {
        Self::from_json_value(serde_json::from_str(s)?)
    }
}

/// Partial trace keeping `keep` (in that order).
fn reduce_ordered(m: &CMatrix, dims: &[usize], keep: &[usize]) -> CMatrix {
    let mut order: Vec<usize> = keep.to_vec();
    order.extend((0..dims.len()).filter(|k| !keep.contains(k)));
    let p = permutation(dims, &order);
    let permuted = &p * m * p.adjoint();
    let pdims: Vec<usize> = order.iter().map(|&k| dims[k]).collect();
    partial_trace(&permuted, &pdims, &(0..keep.len()).collect::<Vec<_>>())
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct KrausJson {
    pub weight: f64,
    pub matrix: MatrixRows,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ChannelJson {
    pub version: u32,
    pub in_dims: Vec<usize>,
    pub out_dims: Vec<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub in_labels: Option<Vec<String>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub out_labels: Option<Vec<String>>,
    pub kraus: Vec<KrausJson>,
}

/// Pair (A, B) with Φ(R) = Tr_env(A R B†), A = Σλ_a A_a⊗e_a, B = ΣA_a⊗e_a.
#[derive(Clone, Debug)]
pub struct Stinespring {
    pub a: CMatrix,
    pub b: CMatrix,
    pub out_dim: usize,
    pub env_dim: usize,
}

impl Stinespring {
    /// max |A†B − I|.
    pub fn isometry_residual(&self) -> f64 {
        let n = self.a.ncols();
        max_abs_diff(&(self.a.adjoint() * &self.b), &identity(n))
    }

    pub fn apply(&self, r: &CMatrix) -> CMatrix {
        let m = &self.a * r * self.b.adjoint();
        partial_trace(&m, &[self.out_dim, self.env_dim], &[0])
    }
}

/// Hermitian solution family over Choi tensors with trace preservation
/// built in.
#[derive(Clone, Debug)]
pub struct ChannelFamily {
    /// Free entries exclude those forced to zero by trace preservation.
    pub family: SolutionFamily,
    pub out_events: Vec<String>,
    pub in_events: Vec<String>,
    /// Flat indices pinned to zero because their out-indices are all 0.
    pub tp_zeroed: Vec<usize>,
}

impl ChannelFamily {
    /// Completion as a channel; `values` follow `family.free`.
    pub fn complete(&self, values: &[f64]) -> Result<PseudoChannel> {
        let choi = self.family.complete(values)?;
        let n_out = self.out_events.len();
        let out_dims = choi.dims()[..n_out].to_vec();
        let in_dims = choi.dims()[n_out..].to_vec();
        PseudoChannel::from_choi(&choi.to_matrix(), in_dims, out_dims)?
            .relabeled(self.in_events.clone(), self.out_events.clone())
    }
}

/// Reduces the channel marginal problem to a state marginal problem on Choi
/// PDOs (out events then in events).
pub fn solve_channel_marginal(parts: &[PseudoChannel]) -> Result<ChannelFamily> {
    let mut out_events: Vec<String> = Vec::new();
    let mut in_events: Vec<String> = Vec::new();
    for p in parts {
        for l in p.out_labels() {
            if !out_events.contains(l) {
                out_events.push(l.clone());
            }
        }
        for l in p.in_labels() {
            if !in_events.contains(l) {
                in_events.push(l.clone());
            }
        }
    }
    if out_events.iter().any(|l| in_events.contains(l)) {
        return Err(Error::InvalidSelection("an event is an input of one part and an output of another".into()));
    }
    let events: Vec<String> = out_events.iter().chain(&in_events).cloned().collect();
    let scenario = MarginalScenario::with_events(events, parts.iter().map(|p| p.choi_pdo()).collect())?;
    let mut family = solve_herm1(&scenario)?;
    let shape = family.base_point.shape();
    let n_out = out_events.len();
    let mut tp_zeroed = Vec::new();
    family.free.retain(|&k| {
        let mu = multi_index(&shape, k);
        let forced = mu[..n_out].iter().all(|&m| m == 0);
        if forced {
            tp_zeroed.push(k);
        }
        !forced
    });
    Ok(ChannelFamily { family, out_events, in_events, tp_zeroed })
}

/// Max deviation of Tr_out(J) from I/d_in for a Choi PDO whose first
/// `n_out` events are outputs.
pub fn tp_residual(choi: &Pdo, n_out: usize) -> f64 {
    let dims = choi.dims();
    let dout: usize = dims[..n_out].iter().product();
    let din: usize = dims[n_out..].iter().product();
    let reduced = partial_trace(&choi.to_matrix(), &[dout, din], &[1]);
    max_abs_diff(&reduced, &(identity(din) / c(din as f64, 0.0)))
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct CloningReport {
    /// ‖Φ(pR₁+(1−p)R₂) − pΦ(R₁) − (1−p)Φ(R₂)‖₁.
    pub linearity_residual: f64,
    /// ‖Φ(R) − R⊗R‖₁ for each test input, then for the mixture.
    pub cloning_residuals: Vec<f64>,
    pub clones_all: bool,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct NoCloningReport {
    pub candidates: Vec<CloningReport>,
    /// True when no candidate clones every input.
    pub no_cloner: bool,
}

/// Tests each one-to-two candidate against R ↦ R⊗R on the test inputs and
/// on the p = 1/2 mixture of the first two.
pub fn no_cloning_check(candidates: &[PseudoChannel], tests: &[Pdo]) -> Result<NoCloningReport> {
    if tests.len() < 2 {
        return Err(Error::InvalidArgument("need at least two test PDOs".into()));
    }
    let mut reports = Vec::with_capacity(candidates.len());
    for ch in candidates {
        let d = ch.d_in();
        if ch.in_dims.len() != 1 || ch.out_dims != vec![d, d] {
            return Err(Error::DimensionMismatch("cloning candidates must map one event to two copies".into()));
        }
        let inputs: Vec<CMatrix> = tests.iter().map(|p| p.to_matrix()).collect();
        if inputs.iter().any(|m| m.nrows() != d) {
            return Err(Error::DimensionMismatch("test PDO does not match the candidate input".into()));
        }
        let mix = (&inputs[0] + &inputs[1]) * c(0.5, 0.0);
        let out1 = ch.apply_matrix(&inputs[0])?;
        let out2 = ch.apply_matrix(&inputs[1])?;
        let out_mix = ch.apply_matrix(&mix)?;
        let linearity_residual = trace_norm(&(&out_mix - (&out1 + &out2) * c(0.5, 0.0)));
        let mut cloning_residuals = Vec::with_capacity(inputs.len() + 1);
        for r in inputs.iter().chain(std::iter::once(&mix)) {
            cloning_residuals.push(trace_norm(&(ch.apply_matrix(r)? - kron(r, r))));
        }
        let clones_all = cloning_residuals.iter().all(|&x| x < 1e-9);
        reports.push(CloningReport { linearity_residual, cloning_residuals, clones_all });
    }
    let no_cloner = reports.iter().all(|r| !r.clones_all);
    Ok(NoCloningReport { candidates: reports, no_cloner })
}

/// 𝓛(R) = −i[H, R] + Σ γ_k (L_k R L_k† − ½{L_k†L_k, R}).
#[derive(Clone, Debug)]
pub struct Lindbladian {
    dims: Vec<usize>,
    labels: Vec<String>,
    hamiltonian: CMatrix,
    jumps: Vec<(f64, CMatrix)>,
}

impl Lindbladian {
    pub fn new(dims: Vec<usize>, hamiltonian: CMatrix, jumps: Vec<(f64, CMatrix)>) -> Result<Self> {
        let d: usize = dims.iter().product();
        if dims.iter().any(|&x| x < 2) {
            return Err(Error::InvalidDimension(*dims.iter().min().unwrap_or(&0)));
        }
        if hamiltonian.shape() != (d, d) || jumps.iter().any(|(_, l)| l.shape() != (d, d)) {
            return Err(Error::DimensionMismatch(format!("generator operators must be {d}×{d}")));
        }
        let dev = hermitian_deviation(&hamiltonian);
        if dev > 1e-12 {
            return Err(Error::NotHermitian(dev));
        }
        let labels = crate::pdo::default_labels(dims.len());
        Ok(Self { dims, labels, hamiltonian, jumps })
    }

    pub fn zero(dims: Vec<usize>) -> Self {
        let d = dims.iter().product();
        Self::new(dims, CMatrix::zeros(d, d), vec![]).expect("zero generator is valid")
    }

    /// Qubit dephasing with rate γ: jump Z with weight γ/2.
    pub fn dephasing(gamma: f64) -> Self {
        Self::new(vec![2], CMatrix::zeros(2, 2), vec![(gamma / 2.0, crate::linalg::pauli(3))]).expect("valid")
    }

    /// Qubit amplitude damping towards |0⟩ with rate γ.
    pub fn amplitude_damping(gamma: f64) -> Self {
        let mut lower = CMatrix::zeros(2, 2);
        lower[(0, 1)] = c(1.0, 0.0);
        Self::new(vec![2], CMatrix::zeros(2, 2), vec![(gamma, lower)]).expect("valid")
    }

    pub fn with_labels(mut self, labels: Vec<String>) -> Result<Self> {
        if labels.len() != self.dims.len() {
            return Err(Error::DimensionMismatch("one label per event required".into()));
        }
        self.labels = labels;
        Ok(self)
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn dim(&self) -> usize {
        self.dims.iter().product()
    }

    pub fn apply(&self, r: &CMatrix) -> CMatrix {
        let i = C64::new(0.0, 1.0);
        let mut out = (&self.hamiltonian * r - r * &self.hamiltonian) * (-i);
        for (g, l) in &self.jumps {
            let ldl = l.adjoint() * l;
            out += (l * r * l.adjoint() - (&ldl * r + r * &ldl) * c(0.5, 0.0)) * c(*g, 0.0);
        }
        out
    }

    /// Fixed-step classical fourth-order Runge–Kutta over duration `tau`.
    pub fn evolve(&self, p: &Pdo, tau: f64, dt: f64) -> Result<Pdo> {
        if !(dt > 0.0) || tau < 0.0 {
            return Err(Error::InvalidArgument("need dt > 0 and τ ≥ 0".into()));
        }
        if p.dims() != self.dims.as_slice() {
            return Err(Error::DimensionMismatch(format!("PDO dims {:?}, generator {:?}", p.dims(), self.dims)));
        }
        let steps = (tau / dt).ceil() as usize;
        let mut r = p.to_matrix();
        if steps > 0 {
            let h = tau / steps as f64;
            let half = c(h / 2.0, 0.0);
            for _ in 0..steps {
                let k1 = self.apply(&r);
                let k2 = self.apply(&(&r + &k1 * half));
                let k3 = self.apply(&(&r + &k2 * half));
                let k4 = self.apply(&(&r + &k3 * c(h, 0.0)));
                r += (k1 + (k2 + k3) * c(2.0, 0.0) + k4) * c(h / 6.0, 0.0);
            }
        }
        Pdo::new(self.dims.clone(), p.labels().to_vec(), tensor_coefficients(&r, &self.dims)?)
    }

    /// Real matrix of 𝓛 acting on correlation tensors.
    pub fn tensor_superoperator(&self) -> Result<DMatrix<f64>> {
        let len: usize = self.dims.iter().map(|d| d * d).product();
        let mut m = DMatrix::zeros(len, len);
        for k in 0..len {
            let mut e = vec![0.0; len];
            e[k] = 1.0;
            let image = tensor_coefficients(&self.apply(&tensor_to_matrix(&e, &self.dims)?), &self.dims)?;
            for (r, v) in image.into_iter().enumerate() {
                m[(r, k)] = v;
            }
        }
        Ok(m)
    }

    /// Steady state of minimum Frobenius norm (maximum collision entropy)
    /// among trace-one Hermitian elements of the kernel.
    pub fn steady_state(&self) -> Result<Pdo> {
        let m = self.tensor_superoperator()?;
        let len = m.nrows();
        let svd = m.svd(false, true);
        let v_t = svd.v_t.ok_or_else(|| Error::Numeric("SVD did not return right singular vectors".into()))?;
        let smax = svd.singular_values.iter().fold(0.0f64, |a, &v| a.max(v));
        let kernel: Vec<Vec<f64>> = (0..svd.singular_values.len())
            .filter(|&k| svd.singular_values[k] <= 1e-9 * smax)
            .map(|k| v_t.row(k).iter().copied().collect())
            .collect();
        // The trace-one slice is T[0] = 1; the shortest point on it within the
        // kernel is Σ a_j k_j / ‖a‖² with a_j = k_j[0].
        let a: Vec<f64> = kernel.iter().map(|k| k[0]).collect();
        let norm2: f64 = a.iter().map(|x| x * x).sum();
        if kernel.is_empty() || norm2 < 1e-18 {
            return Err(Error::NoSteadyState("kernel has no trace-one element".into()));
        }
        let mut t = vec![0.0; len];
        for (k, &aj) in kernel.iter().zip(&a) {
            for (tr, kr) in t.iter_mut().zip(k) {
                *tr += aj / norm2 * kr;
            }
        }
        t[0] = 1.0;
        let p = Pdo::new(self.dims.clone(), self.labels.clone(), t)?;
        let residual = crate::linalg::frobenius(&self.apply(&p.to_matrix()));
        if residual > 1e-9 {
            return Err(Error::NoSteadyState(format!("kernel residual {residual:.3e}")));
        }
        Ok(p)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures::singlet;
    use crate::linalg::pauli;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn column(v: &crate::linalg::CVector) -> CMatrix {
        CMatrix::from_column_slice(v.len(), 1, v.as_slice())
    }

    fn random_hptp(seed: u64, d_in: usize, d_out: usize) -> PseudoChannel {
        // Affine combination of two CPTP maps is HPTP but generally not CP.
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let k1 = crate::random::kraus(d_in, d_out, 2, &mut rng);
        let k2 = crate::random::kraus(d_in, d_out, 2, &mut rng);
        let mut kraus: Vec<(f64, CMatrix)> = k1.into_iter().map(|a| (1.7, a)).collect();
        kraus.extend(k2.into_iter().map(|a| (-0.7, a)));
        PseudoChannel::new(vec![d_in], vec![d_out], kraus).unwrap()
    }

    #[test]
    fn basic_channels() {
        let s = singlet();
        let id = PseudoChannel::identity(vec![2, 2]);
        assert!(max_abs_diff(&id.apply(&s).unwrap().to_matrix(), &s.to_matrix()) < 1e-14);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let r = crate::random::herm1(3, &mut rng);
        let out = PseudoChannel::depolarizing(3).apply_matrix(&r).unwrap();
        assert!(max_abs_diff(&out, &(identity(3) / c(3.0, 0.0))) < 1e-12);
        assert!(PseudoChannel::new(vec![2], vec![2], vec![(0.5, identity(2))]).is_err());
    }

    #[test]
    fn transpose_map_from_paulis() {
        let half = c(0.5, 0.0);
        let kraus = vec![(0.5, identity(2)), (0.5, pauli(1)), (0.5, pauli(3)), (-0.5, pauli(2))];
        let t = PseudoChannel::new(vec![2], vec![2], kraus).unwrap();
        let r = (identity(2) + pauli(2) * c(0.3, 0.0) + pauli(1) * c(0.2, 0.0)) * half;
        assert!(max_abs_diff(&t.apply_matrix(&r).unwrap(), &r.transpose()) < 1e-12);
        let t2 = PseudoChannel::transpose(2);
        assert!(max_abs_diff(&t2.apply_matrix(&r).unwrap(), &r.transpose()) < 1e-12);
        assert!(!t.is_completely_positive());
        // Partial transpose of the singlet is not positive.
        let t = t.relabeled(vec!["i1".into()], vec!["o1".into()]).unwrap();
        let pt = PseudoChannel::identity(vec![2]).tensor(&t).unwrap();
        let out = pt.apply(&singlet()).unwrap();
        assert!(out.min_eigenvalue() < -0.1);
    }

    #[test]
    fn choi_conventions() {
        let id = PseudoChannel::identity(vec![2]);
        let j = id.choi();
        let mut expected = CMatrix::zeros(4, 4);
        for i in 0..2 {
            for k in 0..2 {
                expected[(i * 2 + i, k * 2 + k)] = c(0.5, 0.0);
            }
        }
        assert!(max_abs_diff(&j, &expected) < 1e-15);
        for seed in 0..5 {
            let ch = random_hptp(seed, 2, 2);
            let p = ch.choi_pdo();
            assert!(tp_residual(&p, 1) < 1e-10);
            assert!((crate::linalg::trace(&ch.choi()).re - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn choi_round_trip() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for seed in 0..10 {
            let ch = random_hptp(seed, 2, 3);
            let back = PseudoChannel::from_choi(&ch.choi(), vec![2], vec![3]).unwrap();
            for _ in 0..20 {
                let r = crate::random::herm1(2, &mut rng);
                let a = ch.apply_matrix(&r).unwrap();
                assert!(max_abs_diff(&a, &back.apply_matrix(&r).unwrap()) < 1e-9);
                assert!(max_abs_diff(&a, &PseudoChannel::apply_via_choi(&ch.choi(), 2, &r)) < 1e-10);
            }
        }
        let mut bad = PseudoChannel::identity(vec![2]).choi();
        bad[(0, 0)] += c(0.1, 0.0);
        bad[(3, 3)] -= c(0.1, 0.0);
        assert!(matches!(PseudoChannel::from_choi(&bad, vec![2], vec![2]), Err(Error::NotTracePreserving(_))));
    }

    #[test]
    fn natural_and_stinespring() {
        let ch = random_hptp(3, 2, 2);
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let r = crate::random::herm1(2, &mut rng);
        let vec_r = CMatrix::from_fn(4, 1, |k, _| r[(k / 2, k % 2)]);
        let out = ch.natural() * vec_r;
        let direct = ch.apply_matrix(&r).unwrap();
        for k in 0..4 {
            assert!((out[(k, 0)] - direct[(k / 2, k % 2)]).norm() < 1e-12);
        }
        let st = ch.stinespring();
        assert!(st.isometry_residual() < 1e-10);
        assert!(max_abs_diff(&st.apply(&r), &direct) < 1e-12);
    }

    #[test]
    fn marginal_of_products() {
        let a = random_hptp(1, 2, 2).relabeled(vec!["a".into()], vec!["a'".into()]).unwrap();
        let b = random_hptp(2, 2, 2).relabeled(vec!["b".into()], vec!["b'".into()]).unwrap();
        let ab = a.tensor(&b).unwrap();
        let m = ab.marginal_channel(&["a"], &["a'"]).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..10 {
            let r = crate::random::herm1(2, &mut rng);
            assert!(max_abs_diff(&m.apply_matrix(&r).unwrap(), &a.apply_matrix(&r).unwrap()) < 1e-9);
        }
        let id = PseudoChannel::identity(vec![2, 2]);
        let m = id.marginal_channel(&["i0"], &["o0"]).unwrap();
        assert!(max_abs_diff(&m.choi(), &PseudoChannel::identity(vec![2]).choi()) < 1e-12);
    }

    #[test]
    fn swap_has_no_wire_marginal() {
        let swap = PseudoChannel::unitary(crate::circuit::swap_operator(2), vec![2, 2]).unwrap();
        match swap.marginal_channel(&["i0"], &["o0"]) {
            Err(Error::NoMarginalChannel(r)) => assert!(r > 1e-3),
            other => panic!("expected factorization failure, got {other:?}"),
        }
        // Routing wire 0 to wire 1 is fine.
        assert!(swap.marginal_channel(&["i0"], &["o1"]).is_ok());
    }

    #[test]
    fn channel_marginal_problem() {
        let a = PseudoChannel::identity(vec![2]).relabeled(vec!["a".into()], vec!["a'".into()]).unwrap();
        let b = PseudoChannel::identity(vec![2]).relabeled(vec!["b".into()], vec!["b'".into()]).unwrap();
        let fam = solve_channel_marginal(&[a.clone(), b.clone()]).unwrap();
        let ab = a.tensor(&b).unwrap();
        // Events are ordered out (a', b') then in (a, b), matching the product's
        // Choi. Entries inside one part come from that part; the product is the
        // completion whose free entries are the cross products.
        assert_eq!(fam.out_events, vec!["a'", "b'"]);
        let product = ab.choi_pdo();
        for (k, src) in fam.family.source.iter().enumerate() {
            if src.is_some() {
                assert!((fam.family.base_point.tensor()[k] - product.tensor()[k]).abs() < 1e-12);
            }
        }
        for &k in &fam.tp_zeroed {
            assert!(product.tensor()[k].abs() < 1e-12);
        }
        let values: Vec<f64> = fam.family.free.iter().map(|&k| product.tensor()[k]).collect();
        let rebuilt = fam.complete(&values).unwrap();
        assert!(max_abs_diff(&rebuilt.choi(), &ab.choi()) < 1e-12);

        let d1 = PseudoChannel::depolarizing(2).relabeled(vec!["x".into()], vec!["y".into()]).unwrap();
        let d2 = PseudoChannel::depolarizing(2).relabeled(vec!["x".into()], vec!["z".into()]).unwrap();
        let fam = solve_channel_marginal(&[d1.clone(), d2.clone()]).unwrap();
        let scenario = MarginalScenario::new(vec![d1.choi_pdo(), d2.choi_pdo()]).unwrap();
        assert!(crate::marginal::reduce_check_pdo(&fam.family.base_point, &scenario).unwrap() < 1e-10);
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        use rand::Rng;
        for _ in 0..20 {
            let values: Vec<f64> = (0..fam.family.free_count()).map(|_| rng.gen_range(-0.5..0.5)).collect();
            let choi = fam.family.complete(&values).unwrap();
            assert!(tp_residual(&choi, fam.out_events.len()) < 1e-10);
            assert!(fam.complete(&values).is_ok());
        }
    }

    #[test]
    fn no_cloning() {
        let zero = crate::fixtures::zero_product(1);
        let one = crate::fixtures::density(&crate::linalg::projector(&crate::linalg::ket(2, 1)), &[2]).unwrap();
        // Classical copier |i⟩ ↦ |ii⟩ plus measurement.
        let mut k0 = CMatrix::zeros(4, 2);
        k0[(0, 0)] = c(1.0, 0.0);
        let mut k1 = CMatrix::zeros(4, 2);
        k1[(3, 1)] = c(1.0, 0.0);
        let copier = PseudoChannel::new(vec![2], vec![2, 2], vec![(1.0, k0), (1.0, k1)]).unwrap();
        // Appending a fixed I/2.
        let appender = PseudoChannel::new(
            vec![2],
            vec![2, 2],
            vec![
                (0.5, kron(&identity(2), &column(&crate::linalg::ket(2, 0)))),
                (0.5, kron(&identity(2), &column(&crate::linalg::ket(2, 1)))),
            ],
        )
        .unwrap();
        let report = no_cloning_check(&[copier, appender], &[zero, one]).unwrap();
        assert!(report.no_cloner);
        let copier = &report.candidates[0];
        assert!(copier.linearity_residual < 1e-12);
        assert!(copier.cloning_residuals[0] < 1e-12 && copier.cloning_residuals[1] < 1e-12);
        assert!(copier.cloning_residuals[2] >= 0.25);
        // R ⊗ I/2 only "clones" the maximally mixed mixture.
        let appender = &report.candidates[1];
        assert!(appender.cloning_residuals[0] > 0.1 && appender.cloning_residuals[1] > 0.1);
        assert!(no_cloning_check(&[PseudoChannel::identity(vec![2])], &[singlet(), singlet()]).is_err());
    }

    #[test]
    fn lindblad_dynamics() {
        let plus = crate::fixtures::density(&((identity(2) + pauli(1)) * c(0.5, 0.0)), &[2]).unwrap();
        let same = Lindbladian::zero(vec![2]).evolve(&plus, 3.0, 0.1).unwrap();
        assert_eq!(same.tensor(), plus.tensor());
        let out = Lindbladian::dephasing(1.0).evolve(&plus, 20.0, 0.01).unwrap();
        assert!(max_abs_diff(&out.to_matrix(), &(identity(2) * c(0.5, 0.0))) < 1e-6);
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let h = crate::random::hermitian(4, 1.0, &mut rng);
        let jumps = vec![(0.7, crate::random::hermitian(4, 1.0, &mut rng)), (-0.2, crate::random::unitary(4, &mut rng))];
        let l = Lindbladian::new(vec![2, 2], h, jumps).unwrap();
        let evolved = l.evolve(&singlet(), 1.0, 0.01).unwrap();
        assert!((evolved.tensor()[0] - 1.0).abs() < 1e-8);
        assert!(hermitian_deviation(&evolved.to_matrix()) < 1e-10);
    }

    #[test]
    fn steady_states() {
        let ss = Lindbladian::dephasing(1.0).steady_state().unwrap();
        assert!(max_abs_diff(&ss.to_matrix(), &(identity(2) * c(0.5, 0.0))) < 1e-9);
        let ss = Lindbladian::zero(vec![3]).steady_state().unwrap();
        assert!(max_abs_diff(&ss.to_matrix(), &(identity(3) / c(3.0, 0.0))) < 1e-9);
        let ss = Lindbladian::amplitude_damping(0.5).steady_state().unwrap();
        assert!(max_abs_diff(&ss.to_matrix(), &crate::linalg::projector(&crate::linalg::ket(2, 0))) < 1e-9);
    }
}
