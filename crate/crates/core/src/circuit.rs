//! Exact PDO generation from circuit scenarios.
//!
//! Instants are numbered `0..=intervals.len()`: instant 0 carries `rho0`
//! and interval `k` maps instant `k` to `k + 1`. An event measures the basis
//! operator σ_μ on one wire at one instant with the Lüders rule over the
//! eigenspaces of σ_μ; μ = 0 means no measurement.

use std::collections::{BTreeMap, HashSet};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::json::{matrix_from_rows, matrix_to_rows, MatrixRows};
use crate::linalg::{eigh, embed_operator, hermitian_deviation, kron, max_abs_diff, trace, CMatrix, ONE};
use crate::operator_basis::basis;
use crate::pdo::{multi_index, Pdo};

/// Default limit on the number of events handled by [`build_pdo`].
pub const DEFAULT_EVENT_CAP: usize = 4;

const SPEC_TOL: f64 = 1e-10;

#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Event {
    pub wire: usize,
    pub t: usize,
}

impl Event {
    pub fn label(&self) -> String {
        format!("x{}t{}", self.wire, self.t)
    }
}

/// One time step: each group of wires gets its own Kraus set. Wires not in
/// any group evolve trivially.
#[derive(Clone, Debug)]
pub struct Interval {
    pub partition: Vec<Vec<usize>>,
    pub kraus: Vec<Vec<CMatrix>>,
}

impl Interval {
    pub fn identity() -> Self {
        Self { partition: Vec::new(), kraus: Vec::new() }
    }

    /// A single channel acting on the listed wires.
    pub fn on(wires: Vec<usize>, kraus: Vec<CMatrix>) -> Self {
        Self { partition: vec![wires], kraus: vec![kraus] }
    }

    pub fn unitary(wires: Vec<usize>, u: CMatrix) -> Self {
        Self::on(wires, vec![u])
    }
}

#[derive(Clone, Debug)]
pub struct CircuitSpec {
    pub dims: Vec<usize>,
    pub rho0: CMatrix,
    pub intervals: Vec<Interval>,
    pub events: Vec<Event>,
}

impl CircuitSpec {
    pub fn new(dims: Vec<usize>, rho0: CMatrix, intervals: Vec<Interval>, events: Vec<Event>) -> Result<Self> {
        let spec = Self { dims, rho0, intervals, events };
        spec.validate()?;
        Ok(spec)
    }

    pub fn wires(&self) -> usize {
        self.dims.len()
    }

    pub fn instants(&self) -> usize {
        self.intervals.len() + 1
    }

    pub fn event_dims(&self) -> Vec<usize> {
        self.events.iter().map(|e| self.dims[e.wire]).collect()
    }

    pub fn event_labels(&self) -> Vec<String> {
        self.events.iter().map(Event::label).collect()
    }

    pub fn validate(&self) -> Result<()> {
        if self.dims.is_empty() {
            return Err(Error::InvalidCircuit("no wires".into()));
        }
        if let Some(&d) = self.dims.iter().find(|&&d| d < 2) {
            return Err(Error::InvalidDimension(d));
        }
        let total: usize = self.dims.iter().product();
        if self.rho0.shape() != (total, total) {
            return Err(Error::InvalidCircuit(format!(
                "initial state is {}x{}, wires give {total}",
                self.rho0.nrows(),
                self.rho0.ncols()
            )));
        }
        if hermitian_deviation(&self.rho0) > SPEC_TOL {
            return Err(Error::InvalidCircuit("initial state is not Hermitian".into()));
        }
        if (trace(&self.rho0) - ONE).norm() > SPEC_TOL {
            return Err(Error::InvalidCircuit("initial state does not have trace one".into()));
        }
        let (values, _) = eigh(&self.rho0);
        if values.last().copied().unwrap_or(0.0) < -SPEC_TOL {
            return Err(Error::InvalidCircuit("initial state is not positive semidefinite".into()));
        }
        for (k, interval) in self.intervals.iter().enumerate() {
            if interval.partition.len() != interval.kraus.len() {
                return Err(Error::InvalidCircuit(format!(
                    "interval {k}: {} wire groups but {} Kraus sets",
                    interval.partition.len(),
                    interval.kraus.len()
                )));
            }
            let mut used = HashSet::new();
            for (group, kraus) in interval.partition.iter().zip(&interval.kraus) {
                if group.is_empty() {
                    return Err(Error::InvalidCircuit(format!("interval {k}: empty wire group")));
                }
                let mut gdim = 1;
                for &w in group {
                    if w >= self.wires() || !used.insert(w) {
                        return Err(Error::InvalidCircuit(format!("interval {k}: bad wire {w}")));
                    }
                    gdim *= self.dims[w];
                }
                if kraus.is_empty() {
                    return Err(Error::InvalidCircuit(format!("interval {k}: empty Kraus set")));
                }
                let mut completeness = CMatrix::zeros(gdim, gdim);
                for op in kraus {
                    if op.shape() != (gdim, gdim) {
                        return Err(Error::InvalidCircuit(format!(
                            "interval {k}: Kraus operator is {}x{}, group dimension {gdim}",
                            op.nrows(),
                            op.ncols()
                        )));
                    }
                    completeness += op.adjoint() * op;
                }
                let dev = max_abs_diff(&completeness, &CMatrix::identity(gdim, gdim));
                if dev > SPEC_TOL {
                    return Err(Error::InvalidCircuit(format!(
                        "interval {k}: Kraus set is not trace preserving (residual {dev:.3e})"
                    )));
                }
            }
        }
        let mut seen = HashSet::new();
        for e in &self.events {
            if e.wire >= self.wires() || e.t >= self.instants() {
                return Err(Error::InvalidCircuit(format!("event ({}, {}) out of range", e.wire, e.t)));
            }
            if !seen.insert(e.clone()) {
                return Err(Error::InvalidCircuit(format!("event ({}, {}) repeated", e.wire, e.t)));
            }
        }
        if self.events.is_empty() {
            return Err(Error::InvalidCircuit("no events".into()));
        }
        Ok(())
    }

    /// Interval `k` applied to a full-register state.
    pub fn apply_interval(&self, k: usize, rho: &CMatrix) -> CMatrix {
        let interval = &self.intervals[k];
        let mut out = rho.clone();
        for (group, kraus) in interval.partition.iter().zip(&interval.kraus) {
            let mut next = CMatrix::zeros(out.nrows(), out.ncols());
            for op in kraus {
                let full = embed_operator(op, group, &self.dims);
                next += &full * &out * full.adjoint();
            }
            out = next;
        }
        out
    }

    /// State at instant `t` with no measurements applied.
    pub fn state_at(&self, t: usize) -> CMatrix {
        (0..t).fold(self.rho0.clone(), |rho, k| self.apply_interval(k, &rho))
    }

    pub fn to_json_value(&self) -> CircuitJson {
        CircuitJson {
            wires: self.wires(),
            dims: self.dims.clone(),
            rho0: matrix_to_rows(&self.rho0),
            intervals: self
                .intervals
                .iter()
                .map(|i| IntervalJson {
                    partition: i.partition.clone(),
                    kraus: i.kraus.iter().map(|set| set.iter().map(matrix_to_rows).collect()).collect(),
                })
                .collect(),
            events: self.events.clone(),
        }
    }

    pub fn from_json_value(v: CircuitJson) -> Result<Self> {
        if v.wires != v.dims.len() {
            return Err(Error::InvalidCircuit(format!(
                "wires = {} but {} dims given",
                v.wires,
                v.dims.len()
            )));
        }
        let intervals = v
            .intervals
            .iter()
            .map(|i| {
                let kraus = i
                    .kraus
                    .iter()
                    .map(|set| set.iter().map(matrix_from_rows).collect::<Result<Vec<_>>>())
                    .collect::<Result<Vec<_>>>()?;
                Ok(Interval { partition: i.partition.clone(), kraus })
            })
            .collect::<Result<Vec<_>>>()?;
        Self::new(v.dims, matrix_from_rows(&v.rho0)?, intervals, v.events)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        Self::from_json_value(serde_json::from_str(s)?)
    }

    pub fn to_json(&self) -> String {
        crate::json::to_canonical_string(&self.to_json_value())
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct IntervalJson {
    pub partition: Vec<Vec<usize>>,
    pub kraus: Vec<Vec<MatrixRows>>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct CircuitJson {
    pub wires: usize,
    pub dims: Vec<usize>,
    pub rho0: MatrixRows,
    #[serde(default)]
    pub intervals: Vec<IntervalJson>,
    pub events: Vec<Event>,
}

/// Eigenspace projectors of a Hermitian operator, grouped by eigenvalue
/// (descending), as (eigenvalue, projector) pairs.
pub fn eigenspace_projectors(op: &CMatrix) -> Vec<(f64, CMatrix)> {
    let (values, vectors) = eigh(op);
    let n = op.nrows();
    let mut out: Vec<(f64, CMatrix)> = Vec::new();
    for (k, &lam) in values.iter().enumerate() {
        let v = vectors.column(k);
        let p = &v * v.adjoint();
        match out.last_mut() {
            Some((l, proj)) if (*l - lam).abs() < 1e-9 => *proj += p,
            _ => out.push((lam, p)),
        }
    }
    debug_assert!(out.iter().map(|(_, p)| trace(p).re).sum::<f64>() - n as f64 <= 1e-9);
    out
}

/// Σ_a a Π_a ρ Π_a for the eigenspaces of σ_μ on one wire, with the
/// projectors already embedded in the full register.
struct Measurement {
    outcomes: Vec<(f64, CMatrix)>,
}

impl Measurement {
    fn collapse(&self, rho: &CMatrix) -> CMatrix {
        let mut out = CMatrix::zeros(rho.nrows(), rho.ncols());
        for (a, p) in &self.outcomes {
            out += (p * rho * p).scale(*a);
        }
        out
    }
}

struct Plan<'a> {
    spec: &'a CircuitSpec,
    /// measurements[event][μ], `None` for μ = 0.
    measurements: Vec<Vec<Option<Measurement>>>,
    by_instant: BTreeMap<usize, Vec<usize>>,
}

impl<'a> Plan<'a> {
    fn new(spec: &'a CircuitSpec) -> Result<Self> {
        let mut measurements = Vec::with_capacity(spec.events.len());
        let mut by_instant: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
        for (k, e) in spec.events.iter().enumerate() {
            let d = spec.dims[e.wire];
            let b = basis(d)?;
            let per_mu = b
                .ops()
                .iter()
                .enumerate()
                .map(|(mu, op)| {
                    (mu != 0).then(|| Measurement {
                        outcomes: eigenspace_projectors(op)
                            .into_iter()
                            .map(|(a, p)| (a, embed_operator(&p, &[e.wire], &spec.dims)))
                            .collect(),
                    })
                })
                .collect();
            measurements.push(per_mu);
            by_instant.entry(e.t).or_default().push(k);
        }
        Ok(Self { spec, measurements, by_instant })
    }

    fn correlator(&self, mu: &[usize]) -> f64 {
        let mut rho = self.spec.rho0.clone();
        for t in 0..self.spec.instants() {
            if let Some(events) = self.by_instant.get(&t) {
                for &k in events {
                    if let Some(m) = &self.measurements[k][mu[k]] {
                        rho = m.collapse(&rho);
                    }
                }
            }
            if t < self.spec.intervals.len() {
                rho = self.spec.apply_interval(t, &rho);
            }
        }
        trace(&rho).re
    }
}

/// ⟨{σ_μ1(t_1), …}⟩ for one basis index per event.
pub fn correlator(spec: &CircuitSpec, mu: &[usize]) -> Result<f64> {
    if mu.len() != spec.events.len() {
        return Err(Error::DimensionMismatch(format!(
            "{} indices for {} events",
            mu.len(),
            spec.events.len()
        )));
    }
    for (k, (&m, e)) in mu.iter().zip(&spec.events).enumerate() {
        let d = spec.dims[e.wire];
        if m >= d * d {
            return Err(Error::InvalidArgument(format!("index {m} out of range for event {k}")));
        }
    }
    Ok(Plan::new(spec)?.correlator(mu))
}

/// Fills the full correlation tensor from [`correlator`].
pub fn build_pdo(spec: &CircuitSpec) -> Result<Pdo> {
    build_pdo_capped(spec, DEFAULT_EVENT_CAP)
}

pub fn build_pdo_capped(spec: &CircuitSpec, max_events: usize) -> Result<Pdo> {
    if spec.events.len() > max_events {
        return Err(Error::SizeCap(format!(
            "{} events exceed the cap of {max_events}",
            spec.events.len()
        )));
    }
    let plan = Plan::new(spec)?;
    let dims = spec.event_dims();
    let shape: Vec<usize> = dims.iter().map(|d| d * d).collect();
    let len: usize = shape.iter().product();
    let tensor: Vec<f64> = (0..len)
        .into_par_iter()
        .map(|flat| plan.correlator(&multi_index(&shape, flat)))
        .collect();
    Pdo::new(dims, spec.event_labels(), tensor)
}

/// Swap operator on two d-level systems.
pub fn swap_operator(d: usize) -> CMatrix {
    let mut s = CMatrix::zeros(d * d, d * d);
    for i in 0..d {
        for j in 0..d {
            s[(i * d + j, j * d + i)] = ONE;
        }
    }
    s
}

/// Two-event closed form (id⊗E)(½{ϱ⊗I, SWAP}).
pub fn temporal_two_event(rho: &CMatrix, kraus: &[CMatrix]) -> Result<Pdo> {
    let d = rho.nrows();
    if rho.ncols() != d || d < 2 {
        return Err(Error::DimensionMismatch("input state must be square with d ≥ 2".into()));
    }
    if kraus.is_empty() {
        return Err(Error::DimensionMismatch("empty Kraus set".into()));
    }
    let d_out = kraus[0].nrows();
    if kraus.iter().any(|k| k.shape() != (d_out, d)) {
        return Err(Error::DimensionMismatch(format!(
            "Kraus operators must be {d_out}x{d} to act on the input state"
        )));
    }
    let swap = swap_operator(d);
    let rho_i = kron(rho, &CMatrix::identity(d, d));
    let joint = (&rho_i * &swap + &swap * &rho_i).scale(0.5);
    let mut out = CMatrix::zeros(d * d_out, d * d_out);
    for k in kraus {
        let lift = kron(&CMatrix::identity(d, d), k);
        out += &lift * &joint * lift.adjoint();
    }
    Pdo::from_matrix(&out, &[d, d_out])
}
