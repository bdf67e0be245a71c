//! Classical quasi-probability marginal problems.
//!
//! Variables are numbered `0..n`; a hyperedge lists the variables of one
//! marginal in the axis order of its distribution.

use std::collections::BTreeSet;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{eigvalsh, expi_hermitian, frobenius, kron_all, partial_trace, trace, CMatrix, C64};
use crate::pdo::{flat_index, multi_index, tensor_coefficients, Pdo};

/// Largest joint outcome space handled densely.
pub const MAX_OUTCOMES: usize = 1 << 20;

const SUM_TOL: f64 = 1e-9;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct QuasiDistribution {
    shape: Vec<usize>,
    weights: Vec<f64>,
}

impl QuasiDistribution {
    pub fn new(shape: Vec<usize>, weights: Vec<f64>) -> Result<Self> {
        if shape.is_empty() || shape.iter().any(|&k| k == 0) {
            return Err(Error::InvalidArgument("outcome shape must be non-empty and positive".into()));
        }
        let len: usize = shape.iter().product();
        if weights.len() != len {
            return Err(Error::DimensionMismatch(format!("{} weights for {len} outcomes", weights.len())));
        }
        let sum: f64 = weights.iter().sum();
        if (sum - 1.0).abs() > SUM_TOL {
            return Err(Error::InvalidTrace(sum));
        }
        Ok(Self { shape, weights })
    }

    pub fn uniform(shape: Vec<usize>) -> Result<Self> {
        let len: usize = shape.iter().product();
        Self::new(shape, vec![1.0 / len as f64; len])
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn n_vars(&self) -> usize {
        self.shape.len()
    }

    pub fn get(&self, x: &[usize]) -> f64 {
        self.weights[flat_index(&self.shape, x)]
    }

    pub fn min_weight(&self) -> f64 {
        self.weights.iter().copied().fold(f64::INFINITY, f64::min)
    }

    /// Marginal onto `keep`, in the given order.
    pub fn marginalize(&self, keep: &[usize]) -> Result<Self> {
        if keep.is_empty() {
            return Err(Error::InvalidSelection("empty variable selection".into()));
        }
        let mut seen = BTreeSet::new();
        for &k in keep {
            if k >= self.n_vars() {
                return Err(Error::UnknownEvent(format!("variable {k}")));
            }
            if !seen.insert(k) {
                return Err(Error::InvalidSelection(format!("variable {k} repeated")));
            }
        }
        let shape: Vec<usize> = keep.iter().map(|&k| self.shape[k]).collect();
        let mut weights = vec![0.0; shape.iter().product()];
        let mut sub = vec![0; keep.len()];
        for (flat, &w) in self.weights.iter().enumerate() {
            let x = multi_index(&self.shape, flat);
            for (pos, &k) in keep.iter().enumerate() {
                sub[pos] = x[k];
            }
            weights[flat_index(&shape, &sub)] += w;
        }
        Ok(Self { shape, weights })
    }

    pub fn to_json(&self) -> String {
        crate::json::to_canonical_string(self)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let raw: QuasiDistribution = serde_json::from_str(s)?;
        Self::new(raw.shape, raw.weights)
    }
}

pub fn marginalize(q: &QuasiDistribution, keep: &[usize]) -> Result<QuasiDistribution> {
    q.marginalize(keep)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CompatibilityGraph {
    pub n_vertices: usize,
    pub hyperedges: Vec<Vec<usize>>,
}

impl CompatibilityGraph {
    pub fn new(hyperedges: Vec<Vec<usize>>) -> Result<Self> {
        let n = hyperedges.iter().flatten().map(|&v| v + 1).max().unwrap_or(0);
        Self::with_vertices(n, hyperedges)
    }

    pub fn with_vertices(n_vertices: usize, hyperedges: Vec<Vec<usize>>) -> Result<Self> {
        let mut covered = vec![false; n_vertices];
        for e in &hyperedges {
            let set: BTreeSet<usize> = e.iter().copied().collect();
            if e.is_empty() || set.len() != e.len() {
                return Err(Error::InvalidSelection(format!("bad hyperedge {e:?}")));
            }
            for &v in e {
                if v >= n_vertices {
                    return Err(Error::UnknownEvent(format!("variable {v}")));
                }
                covered[v] = true;
            }
        }
        if let Some(v) = covered.iter().position(|c| !c) {
            return Err(Error::InvalidSelection(format!("variable {v} is in no hyperedge")));
        }
        Ok(Self { n_vertices, hyperedges })
    }

    /// Adjacency of the clique expansion.
    pub fn adjacency(&self) -> Vec<BTreeSet<usize>> {
        let mut adj = vec![BTreeSet::new(); self.n_vertices];
        for e in &self.hyperedges {
            for &a in e {
                for &b in e {
                    if a != b {
                        adj[a].insert(b);
                    }
                }
            }
        }
        adj
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Chordality {
    pub chordal: bool,
    /// Perfect elimination ordering when chordal.
    pub ordering: Option<Vec<usize>>,
}

/// Maximum-cardinality search followed by a perfect-elimination check.
pub fn is_chordal(g: &CompatibilityGraph) -> Chordality {
    let adj = g.adjacency();
    let n = g.n_vertices;
    let mut numbered = vec![false; n];
    let mut weight = vec![0usize; n];
    let mut visit = Vec::with_capacity(n);
    for _ in 0..n {
        let v = (0..n)
            .filter(|&v| !numbered[v])
            .max_by(|&a, &b| weight[a].cmp(&weight[b]).then(b.cmp(&a)))
            .expect("unnumbered vertex");
        numbered[v] = true;
        visit.push(v);
        for &u in &adj[v] {
            if !numbered[u] {
                weight[u] += 1;
            }
        }
    }
    let peo: Vec<usize> = visit.into_iter().rev().collect();
    let chordal = is_perfect_elimination(&adj, &peo);
    Chordality { chordal, ordering: chordal.then_some(peo) }
}

fn is_perfect_elimination(adj: &[BTreeSet<usize>], order: &[usize]) -> bool {
    let mut pos = vec![0; order.len()];
    for (i, &v) in order.iter().enumerate() {
        pos[v] = i;
    }
    order.iter().all(|&v| {
        let later: Vec<usize> = adj[v].iter().copied().filter(|&u| pos[u] > pos[v]).collect();
        later.iter().all(|&a| later.iter().all(|&b| a == b || adj[a].contains(&b)))
    })
}

/// Maximal cliques of a chordal graph from its perfect elimination ordering.
fn maximal_cliques(adj: &[BTreeSet<usize>], peo: &[usize]) -> Vec<BTreeSet<usize>> {
    let mut pos = vec![0; peo.len()];
    for (i, &v) in peo.iter().enumerate() {
        pos[v] = i;
    }
    let candidates: Vec<BTreeSet<usize>> = peo
        .iter()
        .map(|&v| {
            let mut c: BTreeSet<usize> = adj[v].iter().copied().filter(|&u| pos[u] > pos[v]).collect();
            c.insert(v);
            c
        })
        .collect();
    let mut out: Vec<BTreeSet<usize>> = Vec::new();
    for c in candidates {
        if out.iter().any(|o| c.is_subset(o)) {
            continue;
        }
        out.retain(|o| !o.is_subset(&c));
        out.push(c);
    }
    out
}

/// Applies `f` to every 1-D fibre along `axis` of a row-major array.
fn map_axis(data: &[f64], shape: &[usize], axis: usize, out_len: usize, f: impl Fn(&[f64]) -> Vec<f64>) -> Vec<f64> {
    let inner: usize = shape[axis + 1..].iter().product();
    let outer: usize = shape[..axis].iter().product();
    let k = shape[axis];
    let mut out = vec![0.0; outer * out_len * inner];
    let mut fibre = vec![0.0; k];
    for o in 0..outer {
        for i in 0..inner {
            for (j, v) in fibre.iter_mut().enumerate() {
                *v = data[(o * k + j) * inner + i];
            }
            for (j, v) in f(&fibre).into_iter().enumerate() {
                out[(o * out_len + j) * inner + i] = v;
            }
        }
    }
    out
}

/// Coordinates in the per-variable basis {1/k, δ_j − 1/k : j ≥ 1}; the
/// constant coordinate of a variable is unchanged by marginalizing others.
fn to_coefficients(weights: &[f64], shape: &[usize]) -> Vec<f64> {
    (0..shape.len()).fold(weights.to_vec(), |acc, axis| {
        map_axis(&acc, shape, axis, shape[axis], |p| {
            let mut c: Vec<f64> = p.iter().map(|v| v - p[0]).collect();
            c[0] = p.iter().sum();
            c
        })
    })
}

fn from_coefficients(coeffs: &[f64], shape: &[usize]) -> Vec<f64> {
    (0..shape.len()).fold(coeffs.to_vec(), |acc, axis| {
        map_axis(&acc, shape, axis, shape[axis], |c| {
            let k = c.len() as f64;
            let s: f64 = c[1..].iter().sum();
            let p0 = (c[0] - s) / k;
            let mut p = vec![p0; c.len()];
            for j in 1..c.len() {
                p[j] = p0 + c[j];
            }
            p
        })
    })
}

/// Signed joint distribution over all variables of a chordal scenario whose
/// marginals reproduce every part.
pub fn solve_chordal(g: &CompatibilityGraph, parts: &[QuasiDistribution]) -> Result<QuasiDistribution> {
    if parts.len() != g.hyperedges.len() {
        return Err(Error::DimensionMismatch(format!(
            "{} parts for {} hyperedges",
            parts.len(),
            g.hyperedges.len()
        )));
    }
    let mut card = vec![0usize; g.n_vertices];
    for (e, q) in g.hyperedges.iter().zip(parts) {
        if q.shape.len() != e.len() {
            return Err(Error::DimensionMismatch(format!("part for {e:?} has {} variables", q.shape.len())));
        }
        for (&v, &k) in e.iter().zip(&q.shape) {
            if card[v] != 0 && card[v] != k {
                return Err(Error::DimensionMismatch(format!("variable {v} has two cardinalities")));
            }
            card[v] = k;
        }
    }
    for i in 0..parts.len() {
        for j in i + 1..parts.len() {
            let (ei, ej) = (&g.hyperedges[i], &g.hyperedges[j]);
            let shared: Vec<usize> = ei.iter().copied().filter(|v| ej.contains(v)).collect();
            if shared.is_empty() {
                continue;
            }
            let pi: Vec<usize> = shared.iter().map(|v| ei.iter().position(|x| x == v).unwrap()).collect();
            let pj: Vec<usize> = shared.iter().map(|v| ej.iter().position(|x| x == v).unwrap()).collect();
            let a = parts[i].marginalize(&pi)?;
            let b = parts[j].marginalize(&pj)?;
            let dev = a.weights.iter().zip(&b.weights).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);
            if dev > 1e-10 {
                return Err(Error::Incompatible {
                    first: format!("{ei:?}"),
                    second: format!("{ej:?}"),
                    deviation: dev,
                });
            }
        }
    }
    let total: usize = card.iter().product();
    if total > MAX_OUTCOMES {
        return Err(Error::SizeCap(format!("{total} joint outcomes")));
    }
    let chordality = is_chordal(g);
    let peo = chordality.ordering.ok_or(Error::NotChordal)?;
    let adj = g.adjacency();
    let cliques: Vec<Vec<usize>> = maximal_cliques(&adj, &peo).into_iter().map(|c| c.into_iter().collect()).collect();

    let part_coeffs: Vec<Vec<f64>> = parts.iter().map(|q| to_coefficients(&q.weights, &q.shape)).collect();
    let clique_dists: Vec<Vec<f64>> = cliques
        .iter()
        .map(|c| {
            let shape: Vec<usize> = c.iter().map(|&v| card[v]).collect();
            let len: usize = shape.iter().product();
            let mut coeffs = vec![0.0; len];
            for (flat, slot) in coeffs.iter_mut().enumerate() {
                let alpha = multi_index(&shape, flat);
                let support: Vec<usize> = c.iter().zip(&alpha).filter(|(_, &a)| a != 0).map(|(&v, _)| v).collect();
                if let Some(h) = g.hyperedges.iter().position(|e| support.iter().all(|v| e.contains(v))) {
                    let e = &g.hyperedges[h];
                    let local: Vec<usize> = e
                        .iter()
                        .map(|v| c.iter().position(|x| x == v).map_or(0, |p| alpha[p]))
                        .collect();
                    *slot = part_coeffs[h][flat_index(&parts[h].shape, &local)];
                }
            }
            from_coefficients(&coeffs, &shape)
        })
        .collect();

    // Maximum-weight spanning tree over cliques (Prim, lowest index on ties).
    let m = cliques.len();
    let mut in_tree = vec![false; m];
    in_tree[0] = true;
    let mut order = vec![(0usize, None::<usize>)];
    for _ in 1..m {
        let mut best: Option<(usize, usize, usize)> = None;
        for a in (0..m).filter(|&a| in_tree[a]) {
            for b in (0..m).filter(|&b| !in_tree[b]) {
                let w = cliques[a].iter().filter(|v| cliques[b].contains(v)).count();
                if best.is_none_or(|(bw, _, _)| w > bw) {
                    best = Some((w, a, b));
                }
            }
        }
        let (_, a, b) = best.expect("remaining clique");
        in_tree[b] = true;
        order.push((b, Some(a)));
    }

    // conditional[k] over clique k's own shape: p_C / p_S.
    let mut conditionals: Vec<Vec<f64>> = Vec::with_capacity(m);
    for &(k, parent) in &order {
        let c = &cliques[k];
        let shape: Vec<usize> = c.iter().map(|&v| card[v]).collect();
        let dist = &clique_dists[k];
        let sep: Vec<usize> = match parent {
            Some(p) => c.iter().enumerate().filter(|(_, v)| cliques[p].contains(v)).map(|(i, _)| i).collect(),
            None => Vec::new(),
        };
        if sep.is_empty() {
            conditionals.push(dist.clone());
            continue;
        }
        let sep_shape: Vec<usize> = sep.iter().map(|&i| shape[i]).collect();
        let mut sep_w = vec![0.0; sep_shape.iter().product()];
        let mut sub = vec![0; sep.len()];
        for (flat, &w) in dist.iter().enumerate() {
            let x = multi_index(&shape, flat);
            sep.iter().enumerate().for_each(|(p, &i)| sub[p] = x[i]);
            sep_w[flat_index(&sep_shape, &sub)] += w;
        }
        let new_outcomes: usize = shape.iter().product::<usize>() / sep_w.len();
        let mut cond = vec![0.0; dist.len()];
        for (flat, &w) in dist.iter().enumerate() {
            let x = multi_index(&shape, flat);
            sep.iter().enumerate().for_each(|(p, &i)| sub[p] = x[i]);
            let s = sep_w[flat_index(&sep_shape, &sub)];
            cond[flat] = if s.abs() > 1e-15 {
                w / s
            } else if w.abs() <= 1e-15 {
                1.0 / new_outcomes as f64
            } else {
                return Err(Error::ZeroSeparator(w.abs()));
            };
        }
        // A zero separator must have all of its clique weights zero.
        for (flat, &w) in dist.iter().enumerate() {
            let x = multi_index(&shape, flat);
            sep.iter().enumerate().for_each(|(p, &i)| sub[p] = x[i]);
            if sep_w[flat_index(&sep_shape, &sub)].abs() <= 1e-15 && w.abs() > 1e-15 {
                return Err(Error::ZeroSeparator(w.abs()));
            }
        }
        conditionals.push(cond);
    }

    let weights: Vec<f64> = (0..total)
        .into_par_iter()
        .map(|flat| {
            let x = multi_index(&card, flat);
            order
                .iter()
                .zip(&conditionals)
                .map(|(&(k, _), cond)| {
                    let c = &cliques[k];
                    let shape: Vec<usize> = c.iter().map(|&v| card[v]).collect();
                    let local: Vec<usize> = c.iter().map(|&v| x[v]).collect();
                    cond[flat_index(&shape, &local)]
                })
                .product()
        })
        .collect();
    QuasiDistribution::new(card, weights)
}

fn check_projector_set(set: &[CMatrix]) -> Result<()> {
    let d = set.len();
    if d < 2 {
        return Err(Error::InvalidProjectors("need at least two projectors".into()));
    }
    let mut sum = CMatrix::zeros(d, d);
    for (i, p) in set.iter().enumerate() {
        if p.shape() != (d, d) {
            return Err(Error::InvalidProjectors(format!("projector {i} is not {d}x{d}")));
        }
        if crate::linalg::max_abs_diff(&(p * p), p) > 1e-10 || (trace(p).re - 1.0).abs() > 1e-10 {
            return Err(Error::InvalidProjectors(format!("element {i} is not a rank-1 projector")));
        }
        for (j, q) in set.iter().enumerate().skip(i + 1) {
            if (p * q).iter().any(|z| z.norm() > 1e-10) {
                return Err(Error::InvalidProjectors(format!("elements {i} and {j} are not orthogonal")));
            }
        }
        sum += p;
    }
    if crate::linalg::max_abs_diff(&sum, &CMatrix::identity(d, d)) > 1e-10 {
        return Err(Error::InvalidProjectors("projectors do not sum to identity".into()));
    }
    Ok(())
}

/// Computational-basis projectors |a⟩⟨a| of dimension d.
pub fn computational_projectors(d: usize) -> Vec<CMatrix> {
    (0..d)
        .map(|a| {
            let mut p = CMatrix::zeros(d, d);
            p[(a, a)] = C64::new(1.0, 0.0);
            p
        })
        .collect()
}

/// W = Σ_x q(x) ⊗_i Π^{(i)}_{x_i}.
pub fn embed_classical_state(q: &QuasiDistribution, projectors: &[Vec<CMatrix>]) -> Result<Pdo> {
    if projectors.len() != q.n_vars() {
        return Err(Error::DimensionMismatch(format!(
            "{} projector sets for {} variables",
            projectors.len(),
            q.n_vars()
        )));
    }
    for (set, &k) in projectors.iter().zip(&q.shape) {
        if set.len() != k {
            return Err(Error::InvalidProjectors(format!("{} projectors for {k} outcomes", set.len())));
        }
        check_projector_set(set)?;
    }
    let local: Vec<Vec<Vec<f64>>> = projectors
        .iter()
        .map(|set| set.iter().map(|p| tensor_coefficients(p, &[p.nrows()])).collect::<Result<Vec<_>>>())
        .collect::<Result<_>>()?;
    let mut shape = q.shape.clone();
    let mut data = q.weights.clone();
    for axis in 0..shape.len() {
        let d = shape[axis];
        let coeffs = &local[axis];
        data = map_axis(&data, &shape, axis, d * d, |fibre| {
            let mut out = vec![0.0; d * d];
            for (a, &w) in fibre.iter().enumerate() {
                for (mu, c) in coeffs[a].iter().enumerate() {
                    out[mu] += w * c;
                }
            }
            out
        });
        shape[axis] = d * d;
    }
    Pdo::with_default_labels(q.shape.clone(), data)
}

#[derive(Clone, Debug)]
pub struct UnitarySearchOptions {
    pub starts: usize,
    pub iterations: usize,
    pub seed: u64,
    pub spectrum_tol: f64,
}

impl Default for UnitarySearchOptions {
    fn default() -> Self {
        Self { starts: 8, iterations: 2000, seed: 0, spectrum_tol: 1e-8 }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum UnitaryVerdict {
    Equivalent,
    DimensionMismatch,
    GlobalSpectrumDiffers,
    LocalSpectrumDiffers(usize),
    NotFound,
}

#[derive(Clone, Debug)]
pub struct UnitarySearch {
    pub verdict: UnitaryVerdict,
    /// Best Frobenius residual reached (infinite when no search ran).
    pub residual: f64,
    pub unitaries: Vec<CMatrix>,
}

fn spectra_match(a: &CMatrix, b: &CMatrix, tol: f64) -> bool {
    eigvalsh(a).iter().zip(eigvalsh(b)).all(|(x, y)| (x - y).abs() <= tol)
}

fn random_hermitian(d: usize, rng: &mut ChaCha8Rng) -> CMatrix {
    let mut h = CMatrix::zeros(d, d);
    for i in 0..d {
        h[(i, i)] = C64::new(rng.gen_range(-std::f64::consts::PI..std::f64::consts::PI), 0.0);
        for j in i + 1..d {
            let z = C64::new(rng.gen_range(-1.5..1.5), rng.gen_range(-1.5..1.5));
            h[(i, j)] = z;
            h[(j, i)] = z.conj();
        }
    }
    h
}

fn lu_residual(us: &[CMatrix], w1: &CMatrix, w2: &CMatrix) -> (f64, CMatrix, CMatrix) {
    let u = kron_all(us.iter());
    let a = &u * w1 * u.adjoint();
    let d = &a - w2;
    (frobenius(&d), a, d)
}

fn lu_start(w1: &CMatrix, w2: &CMatrix, dims: &[usize], opts: &UnitarySearchOptions, start: usize) -> (f64, Vec<CMatrix>) {
    let mut us: Vec<CMatrix> = if start == 0 {
        dims.iter().map(|&d| CMatrix::identity(d, d)).collect()
    } else {
        let mut rng = ChaCha8Rng::seed_from_u64(opts.seed.wrapping_add(start as u64));
        dims.iter().map(|&d| expi_hermitian(&random_hermitian(d, &mut rng))).collect()
    };
    let (mut res, mut a, mut dm) = lu_residual(&us, w1, w2);
    let mut eta = 0.5;
    for _ in 0..opts.iterations {
        if res < 1e-9 {
            break;
        }
        // d‖D‖²/dε along U_i ← exp(iεG)U_i is 2·Tr(G K_i), K = i[A, D].
        let k = (&a * &dm - &dm * &a) * C64::new(0.0, 1.0);
        let ks: Vec<CMatrix> = (0..dims.len()).map(|i| partial_trace(&k, dims, &[i])).collect();
        let g2: f64 = ks.iter().map(|m| frobenius(m).powi(2)).sum();
        if g2 < 1e-30 {
            break;
        }
        let mut accepted = false;
        while eta > 1e-14 {
            let trial: Vec<CMatrix> = us
                .iter()
                .zip(&ks)
                .map(|(u, ki)| expi_hermitian(&ki.scale(-eta)) * u)
                .collect();
            let (r, ta, td) = lu_residual(&trial, w1, w2);
            if r * r <= res * res - eta * g2 {
                us = trial;
                res = r;
                a = ta;
                dm = td;
                accepted = true;
                eta *= 2.0;
                break;
            }
            eta *= 0.5;
        }
        if !accepted {
            break;
        }
    }
    (res, us)
}

/// Heuristic local-unitary equivalence test.
pub fn local_unitary_equivalent(w1: &Pdo, w2: &Pdo, opts: &UnitarySearchOptions) -> UnitarySearch {
    let fail = |verdict| UnitarySearch { verdict, residual: f64::INFINITY, unitaries: Vec::new() };
    if w1.dims() != w2.dims() {
        return fail(UnitaryVerdict::DimensionMismatch);
    }
    let (m1, m2) = (w1.to_matrix(), w2.to_matrix());
    if !spectra_match(&m1, &m2, opts.spectrum_tol) {
        return fail(UnitaryVerdict::GlobalSpectrumDiffers);
    }
    let dims = w1.dims().to_vec();
    for i in 0..dims.len() {
        let (a, b) = (partial_trace(&m1, &dims, &[i]), partial_trace(&m2, &dims, &[i]));
        if !spectra_match(&a, &b, opts.spectrum_tol) {
            return fail(UnitaryVerdict::LocalSpectrumDiffers(i));
        }
    }
    let results: Vec<(f64, Vec<CMatrix>)> =
        (0..opts.starts.max(1)).into_par_iter().map(|s| lu_start(&m1, &m2, &dims, opts, s)).collect();
    let mut best = (f64::INFINITY, Vec::new());
    for r in results {
        if r.0 < 1e-6 {
            return UnitarySearch { verdict: UnitaryVerdict::Equivalent, residual: r.0, unitaries: r.1 };
        }
        if r.0 < best.0 {
            best = r;
        }
    }
    UnitarySearch { verdict: UnitaryVerdict::NotFound, residual: best.0, unitaries: best.1 }
}
