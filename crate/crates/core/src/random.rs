//! Seeded random instances for tests, benchmarks and demos.

use rand::Rng;

use crate::channel::PseudoChannel;
use crate::linalg::{c, eigh, expi_hermitian, CMatrix};
use crate::pdo::{bases_for, default_labels, multi_index, Pdo};

pub fn hermitian<R: Rng>(d: usize, scale: f64, rng: &mut R) -> CMatrix {
    let mut h = CMatrix::zeros(d, d);
    for i in 0..d {
        h[(i, i)] = c(rng.gen_range(-scale..scale), 0.0);
        for j in i + 1..d {
            let z = c(rng.gen_range(-scale..scale), rng.gen_range(-scale..scale));
            h[(i, j)] = z;
            h[(j, i)] = z.conj();
        }
    }
    h
}

pub fn unitary<R: Rng>(d: usize, rng: &mut R) -> CMatrix {
    expi_hermitian(&hermitian(d, std::f64::consts::PI, rng))
}

/// Full-rank density matrix U·diag(p)·U† with Dirichlet-like weights.
pub fn density<R: Rng>(d: usize, rng: &mut R) -> CMatrix {
    let u = unitary(d, rng);
    let w: Vec<f64> = (0..d).map(|_| rng.gen_range(0.05..1.0)).collect();
    let s: f64 = w.iter().sum();
    let mut diag = CMatrix::zeros(d, d);
    for (i, x) in w.iter().enumerate() {
        diag[(i, i)] = c(x / s, 0.0);
    }
    &u * diag * u.adjoint()
}

/// Hermitian trace-one matrix (not necessarily positive).
pub fn herm1<R: Rng>(d: usize, rng: &mut R) -> CMatrix {
    let mut m = hermitian(d, 1.0, rng);
    let tr: f64 = (0..d).map(|i| m[(i, i)].re).sum();
    for i in 0..d {
        m[(i, i)] -= c((tr - 1.0) / d as f64, 0.0);
    }
    m
}

/// PDO whose single-event reductions are random density matrices and whose
/// correlation entries are uniform in `[-corr, corr]`.
pub fn pdo<R: Rng>(dims: &[usize], corr: f64, rng: &mut R) -> Pdo {
    let shape: Vec<usize> = dims.iter().map(|d| d * d).collect();
    let bases = bases_for(dims).expect("valid dims");
    let locals: Vec<Vec<f64>> = dims
        .iter()
        .zip(&bases)
        .map(|(&d, b)| b.coefficients(&density(d, rng)))
        .collect();
    let len: usize = shape.iter().product();
    let tensor: Vec<f64> = (0..len)
        .map(|flat| {
            let mu = multi_index(&shape, flat);
            let support: Vec<usize> = (0..mu.len()).filter(|&k| mu[k] != 0).collect();
            match support.len() {
                0 => 1.0,
                1 => locals[support[0]][mu[support[0]]],
                _ => rng.gen_range(-corr..=corr),
            }
        })
        .collect();
    Pdo::new(dims.to_vec(), default_labels(dims.len()), tensor).expect("valid shape")
}

/// Like [`pdo`] but resampled until every eigenvalue has |λ| ≥ `gap`.
pub fn full_rank_pdo<R: Rng>(dims: &[usize], corr: f64, gap: f64, rng: &mut R) -> Pdo {
    loop {
        let p = pdo(dims, corr, rng);
        if p.spectrum().values.iter().all(|l| l.abs() >= gap) {
            return p;
        }
    }
}

/// Positive full-rank density operator as a PDO.
pub fn density_pdo<R: Rng>(dims: &[usize], rng: &mut R) -> Pdo {
    let n: usize = dims.iter().product();
    Pdo::from_matrix(&density(n, rng), dims).expect("trace-one Hermitian")
}

/// Random CPTP Kraus set with `k` operators mapping d_in to d_out.
pub fn kraus<R: Rng>(d_in: usize, d_out: usize, k: usize, rng: &mut R) -> Vec<CMatrix> {
    let raw: Vec<CMatrix> = (0..k)
        .map(|_| CMatrix::from_fn(d_out, d_in, |_, _| c(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0))))
        .collect();
    let mut s = CMatrix::zeros(d_in, d_in);
    for a in &raw {
        s += a.adjoint() * a;
    }
    let (values, vectors) = eigh(&s);
    let inv_sqrt = crate::linalg::spectral_map(&values, &vectors, |x| 1.0 / x.sqrt());
    raw.into_iter().map(|a| a * &inv_sqrt).collect()
}

/// Hermiticity- and trace-preserving channel (1 + w)Φ₁ − wΦ₂ with random
/// CPTP Φ₁, Φ₂ and w uniform in [0, 1).
pub fn hptp(in_dims: &[usize], out_dims: &[usize], rng: &mut impl Rng) -> PseudoChannel {
    let d_in: usize = in_dims.iter().product();
    let d_out: usize = out_dims.iter().product();
    let w: f64 = rng.gen_range(0.0..1.0);
    let mut ops: Vec<(f64, CMatrix)> = kraus(d_in, d_out, 2, rng).into_iter().map(|a| (1.0 + w, a)).collect();
    ops.extend(kraus(d_in, d_out, 2, rng).into_iter().map(|a| (-w, a)));
    PseudoChannel::new(in_dims.to_vec(), out_dims.to_vec(), ops).expect("trace preserving by construction")
}
