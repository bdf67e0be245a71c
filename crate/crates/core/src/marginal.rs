//! Space-time marginal problems.
//!
//! In the Hermitian trace-one space every compatible family of marginals has
//! a solution: tensor entries whose support lies inside some part are copied
//! from it, every other entry is free. The filters below search or test that
//! affine family for extra structure (positivity, half-spaces, polytopes).

use std::collections::BTreeSet;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::channel::PseudoChannel;
use crate::error::{Error, Result};
use crate::linalg::{eigh, trace, CMatrix};
use crate::lp;
use crate::pdo::{multi_index, tensor_coefficients, tensor_to_matrix, Pdo, PdoJson};

/// Pairwise overlap tolerance for scenario parts.
pub const COMPATIBILITY_TOL: f64 = 1e-9;

#[derive(Clone, Debug)]
pub struct MarginalScenario {
    events: Vec<String>,
    dims: Vec<usize>,
    parts: Vec<Pdo>,
}

fn label_set(p: &Pdo) -> BTreeSet<&str> {
    p.labels().iter().map(|s| s.as_str()).collect()
}

fn part_name(p: &Pdo) -> String {
    format!("{{{}}}", p.labels().join(","))
}

impl MarginalScenario {
    /// Global events are the union of part events in order of first appearance.
    pub fn new(parts: Vec<Pdo>) -> Result<Self> {
        let mut events: Vec<String> = Vec::new();
        for p in &parts {
            for l in p.labels() {
                if !events.contains(l) {
                    events.push(l.clone());
                }
            }
        }
        Self::with_events(events, parts)
    }

    pub fn with_events(events: Vec<String>, parts: Vec<Pdo>) -> Result<Self> {
        if parts.is_empty() {
            return Err(Error::InvalidSelection("scenario has no parts".into()));
        }
        let mut dims = vec![0usize; events.len()];
        for p in &parts {
            for (l, &d) in p.labels().iter().zip(p.dims()) {
                let k = events
                    .iter()
                    .position(|e| e == l)
                    .ok_or_else(|| Error::UnknownEvent(l.clone()))?;
                if dims[k] != 0 && dims[k] != d {
                    return Err(Error::DimensionMismatch(format!("event `{l}` has two dimensions")));
                }
                dims[k] = d;
            }
        }
        if let Some(k) = dims.iter().position(|&d| d == 0) {
            return Err(Error::InvalidSelection(format!("event `{}` is in no part", events[k])));
        }
        for i in 0..parts.len() {
            for j in i + 1..parts.len() {
                let dev = parts[i].overlap_deviation(&parts[j])?;
                if dev > COMPATIBILITY_TOL {
                    return Err(Error::Incompatible {
                        first: part_name(&parts[i]),
                        second: part_name(&parts[j]),
                        deviation: dev,
                    });
                }
            }
        }
        let sets: Vec<BTreeSet<&str>> = parts.iter().map(label_set).collect();
        let keep: Vec<bool> = (0..parts.len())
            .map(|i| {
                !(0..parts.len()).any(|j| {
                    j != i
                        && sets[i].is_subset(&sets[j])
                        && (sets[i].len() < sets[j].len() || j < i)
                })
            })
            .collect();
        let parts = parts.into_iter().zip(keep).filter(|(_, k)| *k).map(|(p, _)| p).collect();
        Ok(Self { events, dims, parts })
    }

    pub fn events(&self) -> &[String] {
        &self.events
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn parts(&self) -> &[Pdo] {
        &self.parts
    }

    fn positions(&self, p: &Pdo) -> Vec<usize> {
        p.labels()
            .iter()
            .map(|l| self.events.iter().position(|e| e == l).expect("validated labels"))
            .collect()
    }

    pub fn to_json_value(&self) -> ScenarioJson {
        ScenarioJson {
            version: 1,
            events: self.events.clone(),
            parts: self
                .parts
                .iter()
                .map(|p| PartJson { events: p.labels().to_vec(), pdo: p.to_json_value() })
                .collect(),
        }
    }

    pub fn from_json_value(v: ScenarioJson) -> Result<Self> {
        if v.version != 1 {
            return Err(Error::InvalidArgument(format!("unsupported scenario version {}", v.version)));
        }
        let mut parts = Vec::with_capacity(v.parts.len());
        for part in v.parts {
            let mut pdo = part.pdo;
            if pdo.labels.is_empty() {
                pdo.labels = part.events.clone();
            } else if pdo.labels != part.events {
                return Err(Error::InvalidSelection(format!(
                    "part events {:?} differ from PDO labels {:?}",
                    part.events, pdo.labels
                )));
            }
            parts.push(Pdo::from_json_value(pdo)?);
        }
        if v.events.is_empty() {
            Self::new(parts)
        } else {
            Self::with_events(v.events, parts)
        }
    }

    pub fn from_json(s: &str) -> Result<Self> {
        Self::from_json_value(serde_json::from_str(s)?)
    }

    pub fn to_json(&self) -> String {
        crate::json::to_canonical_string(&self.to_json_value())
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct PartJson {
    pub events: Vec<String>,
    pub pdo: PdoJson,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ScenarioJson {
    pub version: u32,
    #[serde(default)]
    pub events: Vec<String>,
    pub parts: Vec<PartJson>,
}

/// The affine solution set of a Hermitian marginal problem.
#[derive(Clone, Debug, PartialEq)]
pub struct SolutionFamily {
    /// Base point: fixed entries from the parts, free entries 0.
    pub base_point: Pdo,
    /// For each flat tensor index, the part that fixes it (`None` = free).
    pub source: Vec<Option<usize>>,
    /// Flat indices of the free entries, ascending.
    pub free: Vec<usize>,
}

impl SolutionFamily {
    pub fn free_count(&self) -> usize {
        self.free.len()
    }

    pub fn free_tuples(&self) -> Vec<Vec<usize>> {
        let shape = self.base_point.shape();
        self.free.iter().map(|&k| multi_index(&shape, k)).collect()
    }

    /// Base point with the free entries replaced by `values`.
    pub fn complete(&self, values: &[f64]) -> Result<Pdo> {
        if values.len() != self.free.len() {
            return Err(Error::DimensionMismatch(format!(
                "{} values for {} free entries",
                values.len(),
                self.free.len()
            )));
        }
        let mut p = self.base_point.clone();
        for (&k, &v) in self.free.iter().zip(values) {
            p.tensor_mut()[k] = v;
        }
        Ok(p)
    }

    pub fn to_json_value(&self) -> SolutionJson {
        SolutionJson {
            version: 1,
            base_point: self.base_point.to_json_value(),
            free: self.free_tuples(),
            fixed_count: self.source.len() - self.free.len(),
        }
    }

    pub fn to_json(&self) -> String {
        crate::json::to_canonical_string(&self.to_json_value())
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SolutionJson {
    pub version: u32,
    pub base_point: PdoJson,
    pub free: Vec<Vec<usize>>,
    pub fixed_count: usize,
}

/// Constructive solution over Herm₁.
pub fn solve_herm1(s: &MarginalScenario) -> Result<SolutionFamily> {
    let shape: Vec<usize> = s.dims.iter().map(|d| d * d).collect();
    let len: usize = shape.iter().product();
    let positions: Vec<Vec<usize>> = s.parts.iter().map(|p| s.positions(p)).collect();
    let mut tensor = vec![0.0; len];
    let mut source = vec![None; len];
    let mut free = Vec::new();
    for flat in 0..len {
        let mu = multi_index(&shape, flat);
        let owner = positions.iter().position(|pos| {
            mu.iter().enumerate().all(|(k, &m)| m == 0 || pos.contains(&k))
        });
        match owner {
            Some(i) => {
                let local: Vec<usize> = positions[i].iter().map(|&k| mu[k]).collect();
                tensor[flat] = s.parts[i].get(&local);
                source[flat] = Some(i);
            }
            None => free.push(flat),
        }
    }
    let base_point = Pdo::new(s.dims.clone(), s.events.clone(), tensor)?;
    Ok(SolutionFamily { base_point, source, free })
}

/// Max entrywise deviation between the reductions of `global` and the parts.
pub fn reduce_check_pdo(global: &Pdo, s: &MarginalScenario) -> Result<f64> {
    let mut worst = 0.0f64;
    for p in &s.parts {
        let labels: Vec<&str> = p.labels().iter().map(|l| l.as_str()).collect();
        let r = global.partial_trace(&labels)?;
        for (a, b) in r.tensor().iter().zip(p.tensor()) {
            worst = worst.max((a - b).abs());
        }
    }
    Ok(worst)
}

pub fn reduce_check(f: &SolutionFamily, s: &MarginalScenario) -> Result<f64> {
    reduce_check_pdo(&f.base_point, s)
}

#[derive(Clone, Debug)]
pub struct FilterOptions {
    pub starts: usize,
    pub iterations: usize,
    pub seed: u64,
    /// Accept a completion once its minimum eigenvalue is ≥ −tol.
    pub tol: f64,
    /// Initial step length in tensor units; decays as 1/√(k+1).
    pub step: f64,
    /// Half-width of the uniform perturbation around the base point for
    /// starts after the first.
    pub spread: f64,
}

impl Default for FilterOptions {
    fn default() -> Self {
        Self { starts: 64, iterations: 500, seed: 0, tol: 1e-9, step: 0.5, spread: 0.5 }
    }
}

/// Outcome of a positivity search: the completion found (if any) and the
/// best minimum eigenvalue reached by each start.
#[derive(Clone, Debug)]
pub struct FilterResult {
    pub found: Option<Pdo>,
    pub best_min_eigenvalues: Vec<f64>,
}

fn min_eig(tensor: &[f64], dims: &[usize]) -> (f64, CMatrix) {
    let m = tensor_to_matrix(tensor, dims).expect("validated dims");
    let (values, vectors) = eigh(&m);
    let k = values.len() - 1;
    (values[k], vectors.column(k).into_owned() * vectors.column(k).adjoint())
}

fn search_start(f: &SolutionFamily, opts: &FilterOptions, start: usize) -> (Option<Vec<f64>>, f64) {
    let dims = f.base_point.dims().to_vec();
    let total = f.base_point.total_dim() as f64;
    let bound = total.sqrt();
    let mut tensor = f.base_point.tensor().to_vec();
    if start > 0 {
        let mut rng = ChaCha8Rng::seed_from_u64(opts.seed.wrapping_add(start as u64));
        for &k in &f.free {
            tensor[k] = rng.gen_range(-opts.spread..=opts.spread);
        }
    }
    let mut best = f64::NEG_INFINITY;
    for it in 0..=opts.iterations {
        let (lam, proj) = min_eig(&tensor, &dims);
        best = best.max(lam);
        if lam >= -opts.tol {
            return (Some(tensor), lam);
        }
        if it == opts.iterations || f.free.is_empty() {
            break;
        }
        let coeffs = tensor_coefficients(&proj, &dims).expect("validated dims");
        let grad: Vec<f64> = f.free.iter().map(|&k| coeffs[k] / total).collect();
        let norm = grad.iter().map(|g| g * g).sum::<f64>().sqrt();
        if norm < 1e-15 {
            break;
        }
        let eta = opts.step / ((it + 1) as f64).sqrt();
        for (&k, g) in f.free.iter().zip(&grad) {
            tensor[k] = (tensor[k] + eta * g / norm).clamp(-bound, bound);
        }
    }
    (None, best)
}

/// Multi-start projected-gradient ascent on the minimum eigenvalue over the
/// free entries. Starts run concurrently; the first success in start order
/// is returned. `None` only means nothing was found within the budget.
pub fn filter_positive_report(f: &SolutionFamily, opts: &FilterOptions) -> FilterResult {
    let results: Vec<(Option<Vec<f64>>, f64)> =
        (0..opts.starts.max(1)).into_par_iter().map(|s| search_start(f, opts, s)).collect();
    let best_min_eigenvalues = results.iter().map(|r| r.1).collect();
    let found = results.into_iter().find_map(|(t, _)| t).map(|tensor| {
        Pdo::new(f.base_point.dims().to_vec(), f.base_point.labels().to_vec(), tensor)
            .expect("same shape as base point")
    });
    FilterResult { found, best_min_eigenvalues }
}

pub fn filter_positive(f: &SolutionFamily, opts: &FilterOptions) -> Option<Pdo> {
    filter_positive_report(f, opts).found
}

/// {R : Tr(R K) ≥ offset}.
#[derive(Clone, Debug)]
pub struct HalfSpace {
    pub operator: CMatrix,
    pub offset: f64,
}

impl HalfSpace {
    pub fn new(operator: CMatrix, offset: f64) -> Result<Self> {
        let dev = crate::linalg::hermitian_deviation(&operator);
        if dev > 1e-12 {
            return Err(Error::NotHermitian(dev));
        }
        Ok(Self { operator, offset })
    }

    pub fn value(&self, p: &Pdo) -> Result<f64> {
        let n = p.total_dim();
        if self.operator.shape() != (n, n) {
            return Err(Error::DimensionMismatch(format!(
                "half-space operator is {}x{}, PDO dimension {n}",
                self.operator.nrows(),
                self.operator.ncols()
            )));
        }
        Ok(trace(&(p.to_matrix() * &self.operator)).re)
    }
}

pub fn in_halfspaces(p: &Pdo, hs: &[HalfSpace]) -> Result<bool> {
    for h in hs {
        if h.value(p)? < h.offset - 1e-10 {
            return Ok(false);
        }
    }
    Ok(true)
}

/// Convex-hull membership by LP feasibility over tensor entries.
pub fn in_hull(p: &Pdo, vertices: &[Pdo], tol: f64) -> Result<bool> {
    Ok(hull_weights(p, vertices, tol)?.is_some())
}

/// Convex weights expressing `p` in terms of `vertices`, if any.
pub fn hull_weights(p: &Pdo, vertices: &[Pdo], tol: f64) -> Result<Option<Vec<f64>>> {
    if vertices.is_empty() {
        return Ok(None);
    }
    for v in vertices {
        if v.dims() != p.dims() {
            return Err(Error::DimensionMismatch("vertex dims differ from PDO dims".into()));
        }
    }
    let m = vertices.len();
    let mut a: Vec<Vec<f64>> = (0..p.tensor().len())
        .map(|e| vertices.iter().map(|v| v.tensor()[e]).collect())
        .collect();
    let mut b = p.tensor().to_vec();
    a.push(vec![1.0; m]);
    b.push(1.0);
    Ok(lp::feasible(&a, &b, tol))
}

/// A completion of `f` satisfying every half-space, found by LP over the
/// free entries inside the box |T| ≤ √D.
pub fn filter_halfspaces(f: &SolutionFamily, hs: &[HalfSpace], tol: f64) -> Result<Option<Pdo>> {
    let base = &f.base_point;
    let dims = base.dims();
    let total = base.total_dim() as f64;
    let bound = total.sqrt();
    let m = f.free.len();
    let k = hs.len();
    // Columns: u (shifted free entries), v (box slack), s (half-space slack).
    let cols = 2 * m + k;
    let mut a = Vec::with_capacity(m + k);
    let mut b = Vec::with_capacity(m + k);
    for j in 0..m {
        let mut row = vec![0.0; cols];
        row[j] = 1.0;
        row[m + j] = 1.0;
        a.push(row);
        b.push(2.0 * bound);
    }
    for (i, h) in hs.iter().enumerate() {
        let at_base = h.value(base)?;
        let coeffs = tensor_coefficients(&h.operator, dims)?;
        let mut row = vec![0.0; cols];
        let mut shift = 0.0;
        for (j, &e) in f.free.iter().enumerate() {
            row[j] = coeffs[e] / total;
            shift += row[j] * bound;
        }
        row[2 * m + i] = -1.0;
        a.push(row);
        b.push(h.offset - at_base + shift);
    }
    if a.is_empty() {
        return Ok(Some(base.clone()));
    }
    let Some(x) = lp::feasible(&a, &b, tol) else {
        return Ok(None);
    };
    let values: Vec<f64> = x[..m].iter().map(|u| u - bound).collect();
    f.complete(&values).map(Some)
}

/// A completion of `f` inside the convex hull of `vertices`: convex weights
/// are fitted to the fixed entries only.
pub fn filter_hull(f: &SolutionFamily, vertices: &[Pdo], tol: f64) -> Result<Option<Pdo>> {
    let base = &f.base_point;
    if vertices.is_empty() {
        return Ok(None);
    }
    for v in vertices {
        if v.dims() != base.dims() {
            return Err(Error::DimensionMismatch("vertex dims differ from scenario dims".into()));
        }
    }
    let fixed: Vec<usize> = (0..base.tensor().len()).filter(|e| f.source[*e].is_some()).collect();
    let mut a: Vec<Vec<f64>> = fixed.iter().map(|&e| vertices.iter().map(|v| v.tensor()[e]).collect()).collect();
    let mut b: Vec<f64> = fixed.iter().map(|&e| base.tensor()[e]).collect();
    a.push(vec![1.0; vertices.len()]);
    b.push(1.0);
    let Some(w) = lp::feasible(&a, &b, tol) else {
        return Ok(None);
    };
    let values: Vec<f64> = f
        .free
        .iter()
        .map(|&e| vertices.iter().zip(&w).map(|(v, x)| x * v.tensor()[e]).sum())
        .collect();
    f.complete(&values).map(Some)
}

/// Extends a two-event state w on {A, B} to A, B₁, …, B_{n−1} (n events in
/// total) with every {A, B_i} reduction equal to w.
pub fn symmetric_extension(w: &Pdo, n: usize) -> Result<Pdo> {
    if w.n_events() != 2 {
        return Err(Error::InvalidSelection("symmetric extension needs a two-event PDO".into()));
    }
    if n < 2 {
        return Err(Error::InvalidArgument("extension needs at least two events".into()));
    }
    let (da, db) = (w.dims()[0], w.dims()[1]);
    let copies = n - 1;
    let mut dims = vec![da];
    dims.extend(std::iter::repeat(db).take(copies));
    let b_label = &w.labels()[1];
    let mut labels = vec![w.labels()[0].clone()];
    labels.extend((1..=copies).map(|i| format!("{b_label}{i}")));
    let len: usize = dims.iter().map(|d| d * d).product();
    let mut tensor = vec![0.0; len];
    let expansion = w.separable_expansion();
    let block = (db * db).pow(copies as u32);
    for (weight, states) in expansion.weights.iter().zip(&expansion.local_states) {
        let ta = tensor_coefficients(&(&states[0] * states[0].adjoint()), &[da])?;
        let tb = tensor_coefficients(&(&states[1] * states[1].adjoint()), &[db])?;
        let mut tail = vec![1.0];
        for _ in 0..copies {
            tail = tail.iter().flat_map(|x| tb.iter().map(move |y| x * y)).collect();
        }
        for (mu, a) in ta.iter().enumerate() {
            if *a == 0.0 {
                continue;
            }
            for (k, t) in tail.iter().enumerate() {
                tensor[mu * block + k] += weight * a * t;
            }
        }
    }
    Pdo::new(dims, labels, tensor)
}

/// Singlet on every pair {A, B_i}, i = 1..n, plus an optional free term Ξ
/// supported on tuples with at least two nonzero B indices.
pub fn polygamy_extension(n: usize, xi: Option<&[f64]>) -> Result<Pdo> {
    if n == 0 {
        return Err(Error::InvalidArgument("need at least one copy".into()));
    }
    let dims = vec![2; n + 1];
    let mut labels = vec!["A".to_string()];
    labels.extend((1..=n).map(|i| format!("B{i}")));
    let shape = vec![4; n + 1];
    let len = 1usize << (2 * (n + 1));
    let mut tensor = vec![0.0; len];
    tensor[0] = 1.0;
    let mut mu = vec![0usize; n + 1];
    for i in 1..=n {
        for nu in 1..4 {
            mu.iter_mut().for_each(|m| *m = 0);
            mu[0] = nu;
            mu[i] = nu;
            tensor[crate::pdo::flat_index(&shape, &mu)] = -1.0;
        }
    }
    if let Some(xi) = xi {
        if xi.len() != len {
            return Err(Error::DimensionMismatch(format!("Ξ has {} entries, expected {len}", xi.len())));
        }
        for (flat, &x) in xi.iter().enumerate() {
            if x == 0.0 {
                continue;
            }
            let m = multi_index(&shape, flat);
            if m[1..].iter().filter(|&&v| v != 0).count() < 2 {
                return Err(Error::ConstrainedSupport(m));
            }
            tensor[flat] += x;
        }
    }
    Pdo::new(dims, labels, tensor)
}

/// Outcome of [`check_symmetry`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "verdict", rename_all = "snake_case")]
pub enum SymmetryVerdict {
    Symmetric,
    /// The global state is not fixed by this channel, so nothing follows.
    GlobalNotSymmetric { channel: usize, deviation: f64 },
    /// The channel has no marginal on this part's events.
    NoMarginal { channel: usize, part: usize },
    PartNotSymmetric { channel: usize, part: usize, deviation: f64 },
}

impl SymmetryVerdict {
    pub fn is_symmetric(&self) -> bool {
        matches!(self, Self::Symmetric)
    }
}

fn max_tensor_diff(a: &Pdo, b: &Pdo) -> f64 {
    a.tensor().iter().zip(b.tensor()).fold(0.0f64, |m, (x, y)| m.max((x - y).abs()))
}

/// If every channel fixes `global`, checks that each part is fixed by the
/// matching marginal channel. Channel events correspond to the scenario
/// events by position.
pub fn check_symmetry(s: &MarginalScenario, global: &Pdo, group: &[PseudoChannel]) -> Result<SymmetryVerdict> {
    const TOL: f64 = 1e-9;
    if global.dims() != s.dims.as_slice() {
        return Err(Error::DimensionMismatch("global PDO does not match the scenario".into()));
    }
    for ch in group {
        if ch.in_dims() != s.dims.as_slice() || ch.out_dims() != s.dims.as_slice() {
            return Err(Error::DimensionMismatch("symmetry channels must map the event set to itself".into()));
        }
    }
    for (g, ch) in group.iter().enumerate() {
        let image = ch.apply(global)?;
        let deviation = max_tensor_diff(&image, global);
        if deviation > TOL {
            return Ok(SymmetryVerdict::GlobalNotSymmetric { channel: g, deviation });
        }
    }
    for (g, ch) in group.iter().enumerate() {
        for (k, part) in s.parts.iter().enumerate() {
            let pos = s.positions(part);
            let keep_in: Vec<&str> = pos.iter().map(|&i| ch.in_labels()[i].as_str()).collect();
            let keep_out: Vec<&str> = pos.iter().map(|&i| ch.out_labels()[i].as_str()).collect();
            let marginal = match ch.marginal_channel(&keep_in, &keep_out) {
                Ok(m) => m,
                Err(Error::NoMarginalChannel(_)) => return Ok(SymmetryVerdict::NoMarginal { channel: g, part: k }),
                Err(e) => return Err(e),
            };
            let image = marginal.apply(part)?;
            let deviation = max_tensor_diff(&image, part);
            if deviation > TOL {
                return Ok(SymmetryVerdict::PartNotSymmetric { channel: g, part: k, deviation });
            }
        }
    }
    Ok(SymmetryVerdict::Symmetric)
}
