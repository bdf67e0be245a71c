//! Standard two-event PDOs and simple product states.

use crate::error::Result;
use crate::linalg::{CMatrix, CVector};
use crate::pdo::{default_labels, Pdo};

fn labeled(dims: Vec<usize>, tensor: Vec<f64>, labels: Option<[&str; 2]>) -> Pdo {
    let labels = match labels {
        Some(l) => l.iter().map(|s| s.to_string()).collect(),
        None => default_labels(dims.len()),
    };
    Pdo::new(dims, labels, tensor).expect("fixture tensors are well formed")
}

/// Two-qubit singlet |ψ⁻⟩⟨ψ⁻|.
pub fn singlet() -> Pdo {
    let mut t = vec![0.0; 16];
    t[0] = 1.0;
    for mu in 1..4 {
        t[mu * 4 + mu] = -1.0;
    }
    labeled(vec![2, 2], t, None)
}

/// Singlet on named events.
pub fn singlet_on(a: &str, b: &str) -> Pdo {
    singlet().relabeled(vec![a.into(), b.into()]).expect("distinct labels")
}

/// Maximally mixed qubit followed by the identity channel: SWAP/2.
pub fn temporal_bell() -> Pdo {
    temporal_qubit([0.0; 3])
}

pub fn temporal_bell_on(a: &str, b: &str) -> Pdo {
    temporal_bell().relabeled(vec![a.into(), b.into()]).expect("distinct labels")
}

/// Qubit with Bloch vector `r` measured twice around an identity channel.
pub fn temporal_qubit(r: [f64; 3]) -> Pdo {
    let mut t = vec![0.0; 16];
    t[0] = 1.0;
    for i in 1..4 {
        t[i * 4] = r[i - 1];
        t[i] = r[i - 1];
        t[i * 4 + i] = 1.0;
    }
    labeled(vec![2, 2], t, None)
}

/// |0…0⟩⟨0…0| on `n` qubits.
pub fn zero_product(n: usize) -> Pdo {
    let mut v = CVector::zeros(1 << n);
    v[0] = crate::linalg::ONE;
    pure_state(&v, &vec![2; n]).expect("normalized")
}

pub fn pure_state(psi: &CVector, dims: &[usize]) -> Result<Pdo> {
    let v = psi.normalize();
    Pdo::from_matrix(&(&v * v.adjoint()), dims)
}

pub fn density(m: &CMatrix, dims: &[usize]) -> Result<Pdo> {
    Pdo::from_matrix(m, dims)
}
