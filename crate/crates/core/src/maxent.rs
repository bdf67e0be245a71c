//! Maximum-entropy inference of a global PDO from reduced PDOs.
//!
//! Direct mode ascends S over the free tensor entries of the Hermitian
//! solution family, so every iterate reproduces the parts exactly. MLP mode
//! writes the tensor as a small neural network of the index tuple and
//! enforces the parts with an augmented Lagrangian.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::entropy::spectral_entropy;
use crate::error::{Error, Result};
use crate::linalg::{eigh, eigvalsh, kron_all, trace_norm, CMatrix};
use crate::marginal::{reduce_check_pdo, solve_herm1, MarginalScenario, SolutionFamily};
use crate::pdo::{bases_for, multi_index, Pdo, PdoJson};

/// Central finite-difference step for the direct-mode gradient.
pub const FD_STEP: f64 = 1e-5;

/// MLP output map: T(μ) = b·tanh(y(μ)/(SQUASH·b·y(0))). A wide squash keeps
/// freshly initialized networks near the base point instead of the box edge.
const SQUASH: f64 = 4.0;

#[derive(Clone, Debug)]
pub struct MlpOptions {
    pub hidden: usize,
    /// Outer augmented-Lagrangian rounds.
    pub outer: usize,
    /// Quasi-Newton iterations per round.
    pub inner: usize,
    /// Initial penalty weight and its growth per round (capped at `rho_max`).
    pub rho: f64,
    pub rho_growth: f64,
    pub rho_max: f64,
    /// Stop once every constraint residual is below this.
    pub tol: f64,
}

impl Default for MlpOptions {
    fn default() -> Self {
        Self { hidden: 16, outer: 30, inner: 200, rho: 10.0, rho_growth: 2.0, rho_max: 1e5, tol: 1e-8 }
    }
}

#[derive(Clone, Debug)]
pub enum Parameterization {
    Direct,
    Mlp(MlpOptions),
}

#[derive(Clone, Debug)]
pub struct MaxEntProblem {
    pub scenario: MarginalScenario,
    pub family: SolutionFamily,
    /// Entrywise bound on free tensor entries, d^{n/2}.
    pub bound: f64,
    pub seed: u64,
    pub iterations: usize,
    pub restarts: usize,
    pub parameterization: Parameterization,
}

impl MaxEntProblem {
    pub fn new(scenario: MarginalScenario) -> Result<Self> {
        let family = solve_herm1(&scenario)?;
        let bound = (family.base_point.total_dim() as f64).sqrt();
        Ok(Self {
            scenario,
            family,
            bound,
            seed: 0,
            iterations: 2000,
            restarts: 8,
            parameterization: Parameterization::Direct,
        })
    }

    pub fn seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn restarts(mut self, restarts: usize) -> Self {
        self.restarts = restarts.max(1);
        self
    }

    pub fn iterations(mut self, iterations: usize) -> Self {
        self.iterations = iterations;
        self
    }

    pub fn mlp(mut self, opts: MlpOptions) -> Self {
        self.parameterization = Parameterization::Mlp(opts);
        self
    }
}

#[derive(Clone, Debug)]
pub struct MaxEntResult {
    pub pdo: Pdo,
    pub entropy: f64,
    /// Objective after each accepted step of the winning restart.
    pub trace: Vec<f64>,
    pub restart: usize,
    pub iterations: usize,
    /// Max entrywise deviation of the reductions from the parts.
    pub residual: f64,
    /// Whether some free entry sits on the box bound.
    pub on_bound: bool,
    pub restart_entropies: Vec<f64>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct MaxEntJson {
    pub version: u32,
    pub mode: String,
    pub entropy: f64,
    pub residual: f64,
    pub iterations: usize,
    pub restart: usize,
    pub on_bound: bool,
    pub restart_entropies: Vec<f64>,
    pub pdo: PdoJson,
}

impl MaxEntResult {
    pub fn to_json_value(&self, mode: &str) -> MaxEntJson {
        MaxEntJson {
            version: 1,
            mode: mode.into(),
            entropy: self.entropy,
            residual: self.residual,
            iterations: self.iterations,
            restart: self.restart,
            on_bound: self.on_bound,
            restart_entropies: self.restart_entropies.clone(),
            pdo: self.pdo.to_json_value(),
        }
    }
}

/// Dispatches on the problem's parameterization.
pub fn infer(problem: &MaxEntProblem) -> Result<MaxEntResult> {
    match &problem.parameterization {
        Parameterization::Direct => infer_direct(problem),
        Parameterization::Mlp(opts) => infer_mlp(problem, opts),
    }
}

/// Matrices σ_μ/D for the given flat indices.
fn unit_operators(dims: &[usize], flats: &[usize]) -> Result<Vec<CMatrix>> {
    let bases = bases_for(dims)?;
    let shape: Vec<usize> = dims.iter().map(|d| d * d).collect();
    let total: usize = dims.iter().product();
    Ok(flats
        .iter()
        .map(|&k| {
            let mu = multi_index(&shape, k);
            kron_all(mu.iter().zip(&bases).map(|(&m, b)| b.op(m))) / crate::linalg::c(total as f64, 0.0)
        })
        .collect())
}

fn matrix_entropy(m: &CMatrix) -> f64 {
    spectral_entropy(&eigvalsh(m))
}

struct Ascent {
    values: Vec<f64>,
    entropy: f64,
    trace: Vec<f64>,
    iterations: usize,
}

fn ascend(base: &CMatrix, units: &[CMatrix], start: Vec<f64>, bound: f64, iterations: usize) -> Ascent {
    let assemble = |x: &[f64]| {
        let mut m = base.clone();
        for (u, &v) in units.iter().zip(x) {
            m += u * crate::linalg::c(v, 0.0);
        }
        m
    };
    let mut x = start;
    let mut m = assemble(&x);
    let mut s = matrix_entropy(&m);
    let mut trace = vec![s];
    let mut t = 1.0;
    let mut done = 0;
    for it in 0..iterations {
        done = it + 1;
        let g: Vec<f64> = units
            .iter()
            .map(|u| {
                let du = u * crate::linalg::c(FD_STEP, 0.0);
                (matrix_entropy(&(&m + &du)) - matrix_entropy(&(&m - &du))) / (2.0 * FD_STEP)
            })
            .collect();
        if g.iter().map(|v| v * v).sum::<f64>().sqrt() < 1e-12 {
            break;
        }
        let mut accepted = false;
        while t > 1e-16 {
            let xn: Vec<f64> = x.iter().zip(&g).map(|(xi, gi)| (xi + t * gi).clamp(-bound, bound)).collect();
            let slope: f64 = xn.iter().zip(&x).zip(&g).map(|((a, b), gi)| (a - b) * gi).sum();
            if slope <= 0.0 {
                break;
            }
            let mn = assemble(&xn);
            let sn = matrix_entropy(&mn);
            if sn >= s + 1e-4 * slope {
                let gain = sn - s;
                x = xn;
                m = mn;
                s = sn;
                trace.push(s);
                t = (t * 2.0).min(1e3);
                accepted = gain > 1e-15;
                break;
            }
            t *= 0.5;
        }
        if !accepted {
            break;
        }
    }
    Ascent { values: x, entropy: s, trace, iterations: done }
}

fn start_point(problem: &MaxEntProblem, restart: usize, spread: f64) -> Vec<f64> {
    let n = problem.family.free_count();
    if restart == 0 {
        return vec![0.0; n];
    }
    let mut rng = restart_rng(problem.seed, restart);
    (0..n).map(|_| rng.gen_range(-spread..=spread)).collect()
}

/// Independent stream per restart so that nearby seeds do not share starts.
fn restart_rng(seed: u64, restart: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(restart as u64);
    rng
}

fn pick_best<T>(runs: Vec<(f64, T)>) -> (usize, Vec<f64>, T) {
    let entropies: Vec<f64> = runs.iter().map(|r| r.0).collect();
    let mut best = 0;
    for (i, &e) in entropies.iter().enumerate() {
        if e > entropies[best] {
            best = i;
        }
    }
    let run = runs.into_iter().nth(best).expect("at least one restart").1;
    (best, entropies, run)
}

/// Direct-mode inference: projected gradient ascent over the free entries.
pub fn infer_direct(problem: &MaxEntProblem) -> Result<MaxEntResult> {
    let f = &problem.family;
    let base = f.base_point.to_matrix();
    let units = unit_operators(f.base_point.dims(), &f.free)?;
    let spread = 0.5f64.min(problem.bound);
    let runs: Vec<(f64, Ascent)> = (0..problem.restarts.max(1))
        .into_par_iter()
        .map(|r| {
            let a = ascend(&base, &units, start_point(problem, r, spread), problem.bound, problem.iterations);
            (a.entropy, a)
        })
        .collect();
    let (restart, restart_entropies, best) = pick_best(runs);
    direct_result(problem, best, restart, restart_entropies)
}

fn direct_result(problem: &MaxEntProblem, a: Ascent, restart: usize, restart_entropies: Vec<f64>) -> Result<MaxEntResult> {
    let pdo = problem.family.complete(&a.values)?;
    let residual = reduce_check_pdo(&pdo, &problem.scenario)?;
    let on_bound = a.values.iter().any(|v| (v.abs() - problem.bound).abs() < 1e-9);
    Ok(MaxEntResult {
        entropy: a.entropy,
        pdo,
        trace: a.trace,
        restart,
        iterations: a.iterations,
        residual,
        on_bound,
        restart_entropies,
    })
}

/// One hidden layer, tanh activation, one-hot inputs per index position.
#[derive(Clone, Debug, PartialEq)]
pub struct MlpParams {
    pub layer_sizes: Vec<usize>,
    /// Hidden weights, row-major hidden × inputs.
    pub w1: Vec<f64>,
    pub b1: Vec<f64>,
    pub w2: Vec<f64>,
    pub b2: f64,
}

impl MlpParams {
    pub fn random<R: Rng>(inputs: usize, hidden: usize, rng: &mut R) -> Self {
        let s1 = (6.0 / (inputs + hidden) as f64).sqrt();
        let s2 = (6.0 / (hidden + 1) as f64).sqrt();
        Self {
            layer_sizes: vec![inputs, hidden, 1],
            w1: (0..inputs * hidden).map(|_| rng.gen_range(-s1..s1)).collect(),
            b1: (0..hidden).map(|_| rng.gen_range(-s1..s1)).collect(),
            w2: (0..hidden).map(|_| rng.gen_range(-s2..s2)).collect(),
            b2: 0.0,
        }
    }

    fn hidden(&self) -> usize {
        self.layer_sizes[1]
    }

    fn inputs(&self) -> usize {
        self.layer_sizes[0]
    }

    pub fn to_vec(&self) -> Vec<f64> {
        let mut v = self.w1.clone();
        v.extend(&self.b1);
        v.extend(&self.w2);
        v.push(self.b2);
        v
    }

    pub fn from_vec(&self, v: &[f64]) -> Self {
        let (i, h) = (self.inputs(), self.hidden());
        Self {
            layer_sizes: self.layer_sizes.clone(),
            w1: v[..i * h].to_vec(),
            b1: v[i * h..i * h + h].to_vec(),
            w2: v[i * h + h..i * h + 2 * h].to_vec(),
            b2: v[i * h + 2 * h],
        }
    }

    /// Network output for a set of active one-hot inputs, plus hidden activations.
    fn forward(&self, active: &[usize]) -> (f64, Vec<f64>) {
        let (i, h) = (self.inputs(), self.hidden());
        let act: Vec<f64> = (0..h)
            .map(|j| (self.b1[j] + active.iter().map(|&a| self.w1[j * i + a]).sum::<f64>()).tanh())
            .collect();
        let y = self.b2 + act.iter().zip(&self.w2).map(|(a, w)| a * w).sum::<f64>();
        (y, act)
    }

    /// Adds ∂y/∂Ω · `scale` into `grad` (layout of [`to_vec`](Self::to_vec)).
    fn backward(&self, active: &[usize], act: &[f64], scale: f64, grad: &mut [f64]) {
        let (i, h) = (self.inputs(), self.hidden());
        for j in 0..h {
            grad[i * h + h + j] += scale * act[j];
            let dz = scale * self.w2[j] * (1.0 - act[j] * act[j]);
            grad[i * h + j] += dz;
            for &a in active {
                grad[j * i + a] += dz;
            }
        }
        grad[i * h + 2 * h] += scale;
    }
}

struct MlpModel<'a> {
    problem: &'a MaxEntProblem,
    /// Active one-hot inputs per flat tensor index.
    active: Vec<Vec<usize>>,
    units: Vec<CMatrix>,
    /// (flat index, target) for entries fixed by the parts.
    fixed: Vec<(usize, f64)>,
}

struct MlpEval {
    objective: f64,
    grad: Vec<f64>,
    entropy: f64,
    tensor: Vec<f64>,
    residuals: Vec<f64>,
}

impl<'a> MlpModel<'a> {
    fn new(problem: &'a MaxEntProblem) -> Result<Self> {
        let f = &problem.family;
        let dims = f.base_point.dims();
        let shape = f.base_point.shape();
        let len = f.source.len();
        let active = (0..len)
            .map(|k| {
                let mu = multi_index(&shape, k);
                let mut offset = 0;
                mu.iter()
                    .zip(&shape)
                    .map(|(&m, &s)| {
                        let a = offset + m;
                        offset += s;
                        a
                    })
                    .collect()
            })
            .collect();
        let all: Vec<usize> = (0..len).collect();
        let units = unit_operators(dims, &all)?;
        let fixed = (1..len)
            .filter(|&k| f.source[k].is_some())
            .map(|k| (k, f.base_point.tensor()[k]))
            .collect();
        Ok(Self { problem, active, units, fixed })
    }

    fn inputs(&self) -> usize {
        self.problem.family.base_point.shape().iter().sum()
    }

    /// −S + Σλ c + (ρ/2)Σc² and its gradient; `None` if T_NN(0) degenerates.
    fn eval(&self, p: &MlpParams, lambda: &[f64], rho: f64) -> Option<MlpEval> {
        let b = self.problem.bound;
        let outs: Vec<(f64, Vec<f64>)> = self.active.iter().map(|a| p.forward(a)).collect();
        let y0 = outs[0].0;
        if y0.abs() < 1e-9 {
            return None;
        }
        let mut tensor = vec![1.0; outs.len()];
        let mut dtdy = vec![0.0; outs.len()];
        for k in 1..outs.len() {
            let u = outs[k].0 / (y0 * b * SQUASH);
            let th = u.tanh();
            tensor[k] = b * th;
            dtdy[k] = (1.0 - th * th) / (y0 * SQUASH);
        }
        let mut m = CMatrix::zeros(self.units[0].nrows(), self.units[0].ncols());
        for (u, &t) in self.units.iter().zip(&tensor) {
            m += u * crate::linalg::c(t, 0.0);
        }
        let (vals, vecs) = eigh(&m);
        let entropy = spectral_entropy(&vals);
        // dS/dR = −Σ sign(λ)(log₂|λ| + 1/ln2)|v⟩⟨v|
        let weights: Vec<f64> = vals
            .iter()
            .map(|&l| -l.signum() * (l.abs().max(1e-300).log2() + std::f64::consts::LOG2_E))
            .collect();
        let g_mat = crate::linalg::spectral_map(&weights, &vecs, |w| w);
        let mut dl_dt: Vec<f64> = self
            .units
            .iter()
            .map(|u| -(g_mat.component_mul(&u.transpose())).sum().re)
            .collect();
        let mut objective = -entropy;
        let mut residuals = Vec::with_capacity(self.fixed.len());
        for ((k, target), lam) in self.fixed.iter().zip(lambda) {
            let c = tensor[*k] - target;
            residuals.push(c);
            objective += lam * c + 0.5 * rho * c * c;
            dl_dt[*k] += lam + rho * c;
        }
        let mut grad = vec![0.0; p.to_vec().len()];
        let mut dl_dy0 = 0.0;
        for k in 1..outs.len() {
            let dy = dl_dt[k] * dtdy[k];
            if dy != 0.0 {
                p.backward(&self.active[k], &outs[k].1, dy, &mut grad);
            }
            dl_dy0 -= dl_dt[k] * dtdy[k] * outs[k].0 / y0;
        }
        p.backward(&self.active[0], &outs[0].1, dl_dy0, &mut grad);
        Some(MlpEval { objective, grad, entropy, tensor, residuals })
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Limited-memory BFGS with Armijo backtracking. Returns the final point and
/// appends the objective after every accepted step to `trace`.
fn lbfgs(
    model: &MlpModel,
    start: &MlpParams,
    lambda: &[f64],
    rho: f64,
    iterations: usize,
    trace: &mut Vec<f64>,
) -> Option<MlpParams> {
    const MEMORY: usize = 8;
    let mut p = start.clone();
    let mut x = p.to_vec();
    let mut cur = model.eval(&p, lambda, rho)?;
    let mut hist: Vec<(Vec<f64>, Vec<f64>)> = Vec::new();
    for _ in 0..iterations {
        let g = &cur.grad;
        if dot(g, g).sqrt() < 1e-12 {
            break;
        }
        // Two-loop recursion.
        let mut q = g.clone();
        let mut alphas = Vec::with_capacity(hist.len());
        for (s, y) in hist.iter().rev() {
            let a = dot(s, &q) / dot(y, s);
            q.iter_mut().zip(y).for_each(|(qi, yi)| *qi -= a * yi);
            alphas.push(a);
        }
        if let Some((s, y)) = hist.last() {
            let gamma = dot(s, y) / dot(y, y);
            q.iter_mut().for_each(|v| *v *= gamma);
        } else {
            let scale = 0.1 / dot(g, g).sqrt().max(1.0);
            q.iter_mut().for_each(|v| *v *= scale);
        }
        for ((s, y), a) in hist.iter().zip(alphas.iter().rev()) {
            let b = dot(y, &q) / dot(y, s);
            q.iter_mut().zip(s).for_each(|(qi, si)| *qi += (a - b) * si);
        }
        let mut dir: Vec<f64> = q.iter().map(|v| -v).collect();
        let mut slope = dot(g, &dir);
        if slope >= 0.0 {
            hist.clear();
            dir = g.iter().map(|v| -v * 0.1 / dot(g, g).sqrt().max(1.0)).collect();
            slope = dot(g, &dir);
        }
        let mut t = 1.0;
        let mut next = None;
        while t > 1e-12 {
            let xn: Vec<f64> = x.iter().zip(&dir).map(|(a, d)| a + t * d).collect();
            let pn = p.from_vec(&xn);
            if let Some(e) = model.eval(&pn, lambda, rho) {
                if e.objective <= cur.objective + 1e-4 * t * slope {
                    next = Some((xn, pn, e));
                    break;
                }
            }
            t *= 0.5;
        }
        let Some((xn, pn, e)) = next else {
            // Retry once along steepest descent before giving up.
            if hist.is_empty() {
                break;
            }
            hist.clear();
            continue;
        };
        let s: Vec<f64> = xn.iter().zip(&x).map(|(a, b)| a - b).collect();
        let y: Vec<f64> = e.grad.iter().zip(&cur.grad).map(|(a, b)| a - b).collect();
        let gain = cur.objective - e.objective;
        if dot(&s, &y) > 1e-14 {
            hist.push((s, y));
            if hist.len() > MEMORY {
                hist.remove(0);
            }
        }
        x = xn;
        p = pn;
        cur = e;
        trace.push(cur.objective);
        if gain <= 1e-15 * (1.0 + cur.objective.abs()) && hist.is_empty() {
            break;
        }
    }
    Some(p)
}

struct MlpRun {
    entropy: f64,
    tensor: Vec<f64>,
    trace: Vec<f64>,
    iterations: usize,
}

fn mlp_restart(model: &MlpModel, opts: &MlpOptions, seed: u64, restart: usize) -> Option<MlpRun> {
    let mut rng = restart_rng(seed, restart);
    let mut params = MlpParams::random(model.inputs(), opts.hidden, &mut rng);
    let mut attempts = 0;
    while model.eval(&params, &vec![0.0; model.fixed.len()], opts.rho).is_none() {
        attempts += 1;
        if attempts > 16 {
            return None;
        }
        params = MlpParams::random(model.inputs(), opts.hidden, &mut rng);
    }
    let mut lambda = vec![0.0; model.fixed.len()];
    let mut rho = opts.rho;
    let mut trace = Vec::new();
    let mut rounds = 0;
    for _ in 0..opts.outer {
        rounds += 1;
        params = lbfgs(model, &params, &lambda, rho, opts.inner, &mut trace)?;
        let e = model.eval(&params, &lambda, rho)?;
        let worst = e.residuals.iter().fold(0.0f64, |a, r| a.max(r.abs()));
        for (l, c) in lambda.iter_mut().zip(&e.residuals) {
            *l += rho * c;
        }
        if worst < opts.tol {
            break;
        }
        rho = (rho * opts.rho_growth).min(opts.rho_max);
    }
    let e = model.eval(&params, &lambda, rho)?;
    Some(MlpRun { entropy: e.entropy, tensor: e.tensor, trace, iterations: rounds })
}

/// MLP-mode inference for qubit events.
pub fn infer_mlp(problem: &MaxEntProblem, opts: &MlpOptions) -> Result<MaxEntResult> {
    if problem.family.base_point.dims().iter().any(|&d| d != 2) {
        return Err(Error::InvalidArgument("mlp mode supports qubit events only".into()));
    }
    let model = MlpModel::new(problem)?;
    let runs: Vec<Option<MlpRun>> = (0..problem.restarts.max(1))
        .into_par_iter()
        .map(|r| mlp_restart(&model, opts, problem.seed, r))
        .collect();
    let scored: Vec<(f64, Option<MlpRun>)> =
        runs.into_iter().map(|r| (r.as_ref().map_or(f64::NEG_INFINITY, |r| r.entropy), r)).collect();
    let (restart, restart_entropies, best) = pick_best(scored);
    let best = best.ok_or_else(|| Error::Numeric("network normalization degenerate on every restart".into()))?;
    let f = &problem.family;
    let pdo = Pdo::new(f.base_point.dims().to_vec(), f.base_point.labels().to_vec(), best.tensor)?;
    let residual = reduce_check_pdo(&pdo, &problem.scenario)?;
    let on_bound = pdo.tensor().iter().any(|v| (v.abs() - problem.bound).abs() < 1e-9);
    Ok(MaxEntResult {
        entropy: best.entropy,
        pdo,
        trace: best.trace,
        restart,
        iterations: best.iterations,
        residual,
        on_bound,
        restart_entropies,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Norm {
    #[default]
    Trace,
    Frobenius,
}

pub fn distance(a: &Pdo, b: &Pdo, norm: Norm) -> f64 {
    let d = a.to_matrix() - b.to_matrix();
    match norm {
        Norm::Trace => trace_norm(&d),
        Norm::Frobenius => crate::linalg::frobenius(&d),
    }
}

/// The scenario made of every k-event reduction of `p`.
pub fn k_marginal_scenario(p: &Pdo, k: usize) -> Result<MarginalScenario> {
    let n = p.n_events();
    if k == 0 || k >= n {
        return Err(Error::InvalidArgument(format!("order k must satisfy 1 ≤ k < {n}, got {k}")));
    }
    let mut parts = Vec::new();
    for subset in combinations(n, k) {
        let labels: Vec<&str> = subset.iter().map(|&i| p.labels()[i].as_str()).collect();
        parts.push(p.partial_trace(&labels)?);
    }
    MarginalScenario::with_events(p.labels().to_vec(), parts)
}

fn combinations(n: usize, k: usize) -> Vec<Vec<usize>> {
    let mut out = Vec::new();
    let mut cur: Vec<usize> = (0..k).collect();
    loop {
        out.push(cur.clone());
        let Some(i) = (0..k).rev().find(|&i| cur[i] < n - k + i) else { break };
        cur[i] += 1;
        for j in i + 1..k {
            cur[j] = cur[j - 1] + 1;
        }
    }
    out
}

#[derive(Clone, Debug)]
pub struct GenuineCorrelation {
    pub value: f64,
    pub inference: MaxEntResult,
}

/// C_k = ‖p − maxent(k-marginals of p)‖ for the returned maximizer.
pub fn genuine_correlation_with(p: &Pdo, k: usize, norm: Norm, seed: u64) -> Result<GenuineCorrelation> {
    let problem = MaxEntProblem::new(k_marginal_scenario(p, k)?)?.seed(seed);
    let inference = infer_direct(&problem)?;
    Ok(GenuineCorrelation { value: distance(p, &inference.pdo, norm), inference })
}

pub fn genuine_correlation(p: &Pdo, k: usize, norm: Norm) -> Result<f64> {
    Ok(genuine_correlation_with(p, k, norm, 0)?.value)
}

#[derive(Clone, Debug)]
pub struct WitnessOptions {
    /// Independent inference runs, seeded `seed`, `seed + 1`, ….
    pub runs: usize,
    pub seed: u64,
    pub norm: Norm,
    pub min_distance: f64,
    pub max_gap: f64,
}

impl Default for WitnessOptions {
    fn default() -> Self {
        Self { runs: 8, seed: 0, norm: Norm::Trace, min_distance: 1e-4, max_gap: 1e-6 }
    }
}

/// Two maximizers that differ as states but not in entropy, if found.
pub fn non_uniqueness_witness(scenario: &MarginalScenario, opts: &WitnessOptions) -> Result<Option<(Pdo, Pdo)>> {
    let base = MaxEntProblem::new(scenario.clone())?;
    if base.family.free_count() == 0 {
        return Ok(None);
    }
    // Each run uses a single random start so that the runs are independent.
    let results: Vec<MaxEntResult> = (0..opts.runs)
        .into_par_iter()
        .map(|r| {
            let p = base.clone().seed(opts.seed);
            infer_direct_from(&p, 1 + r)
        })
        .collect::<Result<_>>()?;
    let top = results.iter().map(|r| r.entropy).fold(f64::NEG_INFINITY, f64::max);
    let best: Vec<&MaxEntResult> = results.iter().filter(|r| top - r.entropy < opts.max_gap).collect();
    for i in 0..best.len() {
        for j in i + 1..best.len() {
            if (best[i].entropy - best[j].entropy).abs() < opts.max_gap
                && distance(&best[i].pdo, &best[j].pdo, opts.norm) > opts.min_distance
            {
                return Ok(Some((best[i].pdo.clone(), best[j].pdo.clone())));
            }
        }
    }
    Ok(None)
}

/// Single ascent from restart index `restart` of `problem`.
fn infer_direct_from(problem: &MaxEntProblem, restart: usize) -> Result<MaxEntResult> {
    let f = &problem.family;
    let base = f.base_point.to_matrix();
    let units = unit_operators(f.base_point.dims(), &f.free)?;
    let start = start_point(problem, restart, 0.5f64.min(problem.bound));
    let a = ascend(&base, &units, start, problem.bound, problem.iterations);
    let entropy = a.entropy;
    direct_result(problem, a, restart, vec![entropy])
}

#[cfg(test)]
mod tests {
    use super::*;

    fn half(l: &str) -> Pdo {
        Pdo::maximally_mixed(vec![2], vec![l.into()]).unwrap()
    }

    fn disjoint_halves() -> MarginalScenario {
        MarginalScenario::new(vec![half("A"), half("B")]).unwrap()
    }

    #[test]
    fn disjoint_halves_direct() {
        let r = infer(&MaxEntProblem::new(disjoint_halves()).unwrap()).unwrap();
        assert!(r.entropy >= 2.0 - 1e-3, "{}", r.entropy);
        assert!(r.residual < 1e-9);
        for w in r.trace.windows(2) {
            assert!(w[1] >= w[0] - 1e-12);
        }
        assert!(r.pdo.tensor().iter().all(|t| t.abs() <= 2.0 + 1e-12));
        // Same seed, same answer.
        let again = infer(&MaxEntProblem::new(disjoint_halves()).unwrap()).unwrap();
        assert_eq!(r.pdo.tensor(), again.pdo.tensor());
    }

    #[test]
    fn full_part_is_returned() {
        let s = MarginalScenario::new(vec![crate::fixtures::temporal_bell()]).unwrap();
        let r = infer(&MaxEntProblem::new(s.clone()).unwrap()).unwrap();
        assert_eq!(r.pdo.tensor(), crate::fixtures::temporal_bell().tensor());
        assert!((r.entropy - 2.0).abs() < 1e-12);
        assert!(non_uniqueness_witness(&s, &WitnessOptions::default()).unwrap().is_none());
    }

    #[test]
    fn witness_on_disjoint_halves() {
        let (a, b) = non_uniqueness_witness(&disjoint_halves(), &WitnessOptions::default()).unwrap().unwrap();
        let (sa, sb) = (crate::entropy::entropy(&a), crate::entropy::entropy(&b));
        assert!((sa - sb).abs() < 1e-6 && distance(&a, &b, Norm::Trace) > 1e-4);
    }

    #[test]
    fn mlp_disjoint_halves() {
        let problem = MaxEntProblem::new(disjoint_halves()).unwrap().mlp(MlpOptions::default());
        let r = infer(&problem).unwrap();
        assert!(r.entropy >= 2.0 - 1e-2, "{}", r.entropy);
        assert!(r.residual < 1e-6);
        let again = infer(&problem).unwrap();
        assert_eq!(r.trace, again.trace);
        assert_eq!(r.pdo.tensor(), again.pdo.tensor());
    }

    #[test]
    fn mlp_single_part() {
        let s = MarginalScenario::new(vec![crate::fixtures::temporal_qubit([0.3, 0.0, 0.4])]).unwrap();
        let r = infer(&MaxEntProblem::new(s).unwrap().restarts(2).mlp(MlpOptions::default())).unwrap();
        assert!(r.residual < 1e-6, "{}", r.residual);
    }

    #[test]
    fn mlp_rejects_qutrits() {
        let p = Pdo::maximally_mixed(vec![3], vec!["A".into()]).unwrap();
        let q = Pdo::maximally_mixed(vec![2], vec!["B".into()]).unwrap();
        let s = MarginalScenario::new(vec![p, q]).unwrap();
        assert!(infer(&MaxEntProblem::new(s).unwrap().mlp(MlpOptions::default())).is_err());
    }

    #[test]
    fn genuine_correlation_of_ghz() {
        let mut psi = crate::linalg::CVector::zeros(8);
        psi[0] = crate::linalg::c(0.5f64.sqrt(), 0.0);
        psi[7] = psi[0];
        let ghz = crate::fixtures::pure_state(&psi, &[2, 2, 2]).unwrap();
        let g = genuine_correlation_with(&ghz, 1, Norm::Trace, 0).unwrap();
        assert!(g.value > 0.1);
        assert!(g.inference.residual < 1e-9);
        assert!(genuine_correlation(&ghz, 0, Norm::Trace).is_err());
        assert!(genuine_correlation(&ghz, 3, Norm::Trace).is_err());
    }

    #[test]
    fn own_maximizer_has_no_genuine_correlation() {
        // A PDO returned by inference maximizes entropy under its own marginals.
        let r = infer(&MaxEntProblem::new(disjoint_halves()).unwrap()).unwrap();
        let c = genuine_correlation_with(&r.pdo, 1, Norm::Frobenius, 0).unwrap();
        assert!((c.inference.entropy - r.entropy).abs() < 1e-6);
    }

    #[test]
    fn combinations_enumerate_subsets() {
        assert_eq!(combinations(4, 2).len(), 6);
        assert_eq!(combinations(3, 1), vec![vec![0], vec![1], vec![2]]);
    }

    #[test]
    fn mlp_gradient_matches_finite_differences() {
        let problem = MaxEntProblem::new(disjoint_halves()).unwrap();
        let model = MlpModel::new(&problem).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let p = MlpParams::random(model.inputs(), 4, &mut rng);
        let lambda: Vec<f64> = (0..model.fixed.len()).map(|i| 0.1 * i as f64).collect();
        let e = model.eval(&p, &lambda, 3.0).unwrap();
        let x = p.to_vec();
        for k in 0..x.len() {
            let h = 1e-6;
            let mut xp = x.clone();
            xp[k] += h;
            let mut xm = x.clone();
            xm[k] -= h;
            let fp = model.eval(&p.from_vec(&xp), &lambda, 3.0).unwrap().objective;
            let fm = model.eval(&p.from_vec(&xm), &lambda, 3.0).unwrap().objective;
            let fd = (fp - fm) / (2.0 * h);
            assert!((fd - e.grad[k]).abs() < 1e-5 * (1.0 + fd.abs()), "param {k}: fd {fd} vs {}", e.grad[k]);
        }
    }
}
