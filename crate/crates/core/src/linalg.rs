//! Dense complex linear algebra helpers shared by every module.
//!
//! Matrices are `nalgebra::DMatrix<Complex<f64>>`. Composite systems use the
//! usual big-endian digit convention: the first subsystem is the most
//! significant digit of a basis index.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use num_complex::Complex;

pub type C64 = Complex<f64>;
pub type CMatrix = DMatrix<C64>;
pub type CVector = DVector<C64>;

/// Eigenvalues with |λ| below this are treated as exact zeros for rank and
/// sign decisions.
pub const ZERO_EIGENVALUE: f64 = 1e-12;

pub const ONE: C64 = C64::new(1.0, 0.0);
pub const ZERO: C64 = C64::new(0.0, 0.0);
pub const I: C64 = C64::new(0.0, 1.0);

pub fn c(re: f64, im: f64) -> C64 {
    C64::new(re, im)
}

pub fn identity(n: usize) -> CMatrix {
    CMatrix::identity(n, n)
}

pub fn kron(a: &CMatrix, b: &CMatrix) -> CMatrix {
    a.kronecker(b)
}

pub fn kron_all<'a>(mats: impl IntoIterator<Item = &'a CMatrix>) -> CMatrix {
    let mut acc = CMatrix::from_element(1, 1, ONE);
    for m in mats {
        acc = acc.kronecker(m);
    }
    acc
}

pub fn trace(m: &CMatrix) -> C64 {
    m.diagonal().iter().sum()
}

/// Largest entrywise deviation of `m` from its adjoint.
pub fn hermitian_deviation(m: &CMatrix) -> f64 {
    let n = m.nrows();
    if m.ncols() != n {
        return f64::INFINITY;
    }
    let mut worst = 0.0f64;
    for i in 0..n {
        for j in i..n {
            worst = worst.max((m[(i, j)] - m[(j, i)].conj()).norm());
        }
    }
    worst
}

pub fn hermitian_part(m: &CMatrix) -> CMatrix {
    (m + m.adjoint()).scale(0.5)
}

pub fn max_abs_diff(a: &CMatrix, b: &CMatrix) -> f64 {
    if a.shape() != b.shape() {
        return f64::INFINITY;
    }
    a.iter()
        .zip(b.iter())
        .map(|(x, y)| (x - y).norm())
        .fold(0.0, f64::max)
}

pub fn frobenius(m: &CMatrix) -> f64 {
    m.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
}

/// Eigendecomposition of a Hermitian matrix; eigenvalues sorted descending,
/// eigenvectors as matching columns.
pub fn eigh(m: &CMatrix) -> (Vec<f64>, CMatrix) {
    let herm = hermitian_part(m);
    let n = herm.nrows();
    let eig = SymmetricEigen::new(herm);
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| {
        eig.eigenvalues[b]
            .partial_cmp(&eig.eigenvalues[a])
            .unwrap_or(std::cmp::Ordering::Equal)
            .then(a.cmp(&b))
    });
    let values = order.iter().map(|&k| eig.eigenvalues[k]).collect();
    let mut vectors = CMatrix::zeros(n, n);
    for (col, &k) in order.iter().enumerate() {
        vectors.set_column(col, &eig.eigenvectors.column(k));
    }
    (values, vectors)
}

pub fn eigvalsh(m: &CMatrix) -> Vec<f64> {
    eigh(m).0
}

/// Applies a real function to the spectrum of a Hermitian matrix.
pub fn spectral_map(values: &[f64], vectors: &CMatrix, f: impl Fn(f64) -> f64) -> CMatrix {
    let n = vectors.nrows();
    let mut out = CMatrix::zeros(n, n);
    for (k, &lam) in values.iter().enumerate() {
        let w = f(lam);
        if w == 0.0 {
            continue;
        }
        let v = vectors.column(k);
        out += (&v * v.adjoint()).scale(w);
    }
    out
}

/// |M| = sqrt(M†M) of a Hermitian matrix.
pub fn abs_hermitian(m: &CMatrix) -> CMatrix {
    let (values, vectors) = eigh(m);
    spectral_map(&values, &vectors, f64::abs)
}

pub fn trace_norm(m: &CMatrix) -> f64 {
    eigvalsh(m).iter().map(|l| l.abs()).sum()
}

/// Hermitian matrix exponential exp(i·H).
pub fn expi_hermitian(h: &CMatrix) -> CMatrix {
    let (values, vectors) = eigh(h);
    let n = vectors.nrows();
    let mut out = CMatrix::zeros(n, n);
    for (k, &lam) in values.iter().enumerate() {
        let v = vectors.column(k);
        out += (&v * v.adjoint()) * C64::from_polar(1.0, lam);
    }
    out
}

fn digits(mut index: usize, dims: &[usize], out: &mut [usize]) {
    for k in (0..dims.len()).rev() {
        out[k] = index % dims[k];
        index /= dims[k];
    }
}

fn compose(digits: &[usize], dims: &[usize]) -> usize {
    digits.iter().zip(dims).fold(0, |acc, (&d, &n)| acc * n + d)
}

/// Dense partial trace keeping the listed subsystems (in the given order).
pub fn partial_trace(m: &CMatrix, dims: &[usize], keep: &[usize]) -> CMatrix {
    let traced: Vec<usize> = (0..dims.len()).filter(|k| !keep.contains(k)).collect();
    let keep_dims: Vec<usize> = keep.iter().map(|&k| dims[k]).collect();
    let traced_dims: Vec<usize> = traced.iter().map(|&k| dims[k]).collect();
    let out_dim: usize = keep_dims.iter().product();
    let traced_dim: usize = traced_dims.iter().product();
    let mut out = CMatrix::zeros(out_dim, out_dim);
    let mut kd_i = vec![0; keep.len()];
    let mut kd_j = vec![0; keep.len()];
    let mut td = vec![0; traced.len()];
    let mut full_i = vec![0; dims.len()];
    let mut full_j = vec![0; dims.len()];
    for i in 0..out_dim {
        digits(i, &keep_dims, &mut kd_i);
        for j in 0..out_dim {
            digits(j, &keep_dims, &mut kd_j);
            let mut acc = ZERO;
            for t in 0..traced_dim {
                digits(t, &traced_dims, &mut td);
                for (pos, &k) in keep.iter().enumerate() {
                    full_i[k] = kd_i[pos];
                    full_j[k] = kd_j[pos];
                }
                for (pos, &k) in traced.iter().enumerate() {
                    full_i[k] = td[pos];
                    full_j[k] = td[pos];
                }
                acc += m[(compose(&full_i, dims), compose(&full_j, dims))];
            }
            out[(i, j)] = acc;
        }
    }
    out
}

/// Embeds `op`, acting on the subsystems `targets` (in that order), into the
/// full register described by `dims`.
pub fn embed_operator(op: &CMatrix, targets: &[usize], dims: &[usize]) -> CMatrix {
    let total: usize = dims.iter().product();
    let target_dims: Vec<usize> = targets.iter().map(|&k| dims[k]).collect();
    let mut out = CMatrix::zeros(total, total);
    let mut di = vec![0; dims.len()];
    let mut dj = vec![0; dims.len()];
    let mut ti = vec![0; targets.len()];
    let mut tj = vec![0; targets.len()];
    for i in 0..total {
        digits(i, dims, &mut di);
        for j in 0..total {
            digits(j, dims, &mut dj);
            let spectator_match = (0..dims.len())
                .filter(|k| !targets.contains(k))
                .all(|k| di[k] == dj[k]);
            if !spectator_match {
                continue;
            }
            for (pos, &k) in targets.iter().enumerate() {
                ti[pos] = di[k];
                tj[pos] = dj[k];
            }
            out[(i, j)] = op[(compose(&ti, &target_dims), compose(&tj, &target_dims))];
        }
    }
    out
}

/// Permutation matrix P with P·(x_0 ⊗ … ⊗ x_{n-1}) = x_{order[0]} ⊗ … .
pub fn permutation(dims: &[usize], order: &[usize]) -> CMatrix {
    let total: usize = dims.iter().product();
    let new_dims: Vec<usize> = order.iter().map(|&k| dims[k]).collect();
    let mut out = CMatrix::zeros(total, total);
    let mut d = vec![0; dims.len()];
    let mut nd = vec![0; dims.len()];
    for i in 0..total {
        digits(i, dims, &mut d);
        for (pos, &k) in order.iter().enumerate() {
            nd[pos] = d[k];
        }
        out[(compose(&nd, &new_dims), i)] = ONE;
    }
    out
}

pub fn ket(dim: usize, index: usize) -> CVector {
    let mut v = CVector::zeros(dim);
    v[index] = ONE;
    v
}

pub fn projector(v: &CVector) -> CMatrix {
    v * v.adjoint()
}

/// Single-qubit Pauli matrices I, X, Y, Z.
pub fn pauli(k: usize) -> CMatrix {
    match k {
        0 => CMatrix::from_row_slice(2, 2, &[ONE, ZERO, ZERO, ONE]),
        1 => CMatrix::from_row_slice(2, 2, &[ZERO, ONE, ONE, ZERO]),
        2 => CMatrix::from_row_slice(2, 2, &[ZERO, -I, I, ZERO]),
        3 => CMatrix::from_row_slice(2, 2, &[ONE, ZERO, ZERO, -ONE]),
        _ => panic!("pauli index {k} out of range"),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn partial_trace_of_product() {
        let a = CMatrix::from_row_slice(2, 2, &[c(0.7, 0.0), c(0.1, 0.2), c(0.1, -0.2), c(0.3, 0.0)]);
        let b = CMatrix::from_row_slice(2, 2, &[c(0.4, 0.0), c(0.0, 0.1), c(0.0, -0.1), c(0.6, 0.0)]);
        let ab = kron(&a, &b);
        assert!(max_abs_diff(&partial_trace(&ab, &[2, 2], &[0]), &a) < 1e-14);
        assert!(max_abs_diff(&partial_trace(&ab, &[2, 2], &[1]), &b) < 1e-14);
        let swapped = partial_trace(&ab, &[2, 2], &[1, 0]);
        assert!(max_abs_diff(&swapped, &kron(&b, &a)) < 1e-14);
    }

    #[test]
    fn embed_matches_kron() {
        let x = pauli(1);
        let e = embed_operator(&x, &[1], &[2, 2, 2]);
        let expected = kron_all([&pauli(0), &x, &pauli(0)]);
        assert!(max_abs_diff(&e, &expected) < 1e-15);
        let cnot_like = kron(&pauli(3), &pauli(1));
        let e = embed_operator(&cnot_like, &[2, 0], &[2, 2, 2]);
        let expected = kron_all([&pauli(1), &pauli(0), &pauli(3)]);
        assert!(max_abs_diff(&e, &expected) < 1e-15);
    }

    #[test]
    fn permutation_reorders_factors() {
        let a = pauli(1);
        let b = pauli(3);
        let p = permutation(&[2, 2], &[1, 0]);
        let swapped = &p * kron(&a, &b) * p.adjoint();
        assert!(max_abs_diff(&swapped, &kron(&b, &a)) < 1e-15);
    }

    #[test]
    fn eigh_sorted_descending() {
        let m = pauli(3) * c(0.5, 0.0) + pauli(1) * c(0.5, 0.0);
        let (vals, vecs) = eigh(&m);
        assert!(vals[0] > vals[1]);
        let rebuilt = spectral_map(&vals, &vecs, |x| x);
        assert!(max_abs_diff(&rebuilt, &m) < 1e-13);
    }
}
