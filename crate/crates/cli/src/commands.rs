use std::path::Path;

use pdolab::channel::{solve_channel_marginal, ChannelJson};
use pdolab::classical::is_chordal;
use pdolab::entropy::{qubit_sweep, sweep_csv};
use pdolab::json::{matrix_from_rows, matrix_to_rows, MatrixRows};
use pdolab::linalg::{max_abs_diff, CVector};
use pdolab::marginal::{
    filter_halfspaces, filter_hull, filter_positive_report, reduce_check_pdo, FilterOptions, HalfSpace,
};
use pdolab::maxent::{distance, non_uniqueness_witness, MlpOptions, WitnessOptions};
use pdolab::pdo::PdoJson;
use pdolab::{
    infer, solve_chordal, solve_herm1, CircuitSpec, CompatibilityGraph, EntropyReport, Error, Lindbladian,
    MarginalScenario, MaxEntProblem, Pdo, PseudoChannel, QuasiDistribution,
};
use serde::Deserialize;
use serde_json::json;

use crate::io::{
    parse_with, read_json, write_json, write_text, CliError, CliResult, EXIT_INCOMPATIBLE, EXIT_NOT_FOUND, EXIT_NUMERIC,
    EXIT_USAGE,
};
use crate::{ChannelOp, Command, Filter, GlobalArgs, Mode};

const DEFAULT_TOL: f64 = 1e-9;

pub fn run(command: Command, g: &GlobalArgs) -> CliResult<()> {
    let out = g.out.as_deref();
    match command {
        Command::Gen { circuit, report, cap } => gen(&circuit, report.as_deref(), cap, g),
        Command::Solve { scenario, filter, constraints, starts, iterations } => {
            solve(&scenario, filter, constraints.as_deref(), starts, iterations, g)
        }
        Command::Entropy { pdo, sweep, alpha } => match sweep {
            Some(spec) => write_text(out, &sweep_csv(&qubit_sweep(&parse_sweep(&spec)?)?)),
            None => {
                let p = load_pdo(pdo.as_deref().expect("clap requires a PDO without --sweep"))?;
                let report = EntropyReport::new(&p, &alpha)?;
                summary(g, format!("S = {:.6}, C = {:.6}, F = {:.6}", report.entropy, report.causality_c, report.causality_f));
                write_json(out, &report)
            }
        },
        Command::Maxent { scenario, mode, restarts, iterations, witness } => {
            maxent(&scenario, mode, restarts, iterations, witness, g)
        }
        Command::Channel { op } => channel(op, g),
        Command::Classical { scenario } => classical(&scenario, g),
        Command::Decompose { pdo } => decompose(&load_pdo(&pdo)?, g),
        Command::Purify { pdo } => purify(&load_pdo(&pdo)?, g),
        Command::Lindblad { generator, evolve, tau, dt } => lindblad(&generator, evolve.as_deref(), tau, dt, g),
    }
}

fn summary(g: &GlobalArgs, line: String) {
    if !g.quiet {
        eprintln!("{line}");
    }
}

fn load_pdo(path: &Path) -> CliResult<Pdo> {
    parse_with(path, Pdo::from_json)
}

fn load_channel(path: &Path) -> CliResult<PseudoChannel> {
    parse_with(path, PseudoChannel::from_json)
}

fn parse_sweep(spec: &str) -> CliResult<Vec<f64>> {
    let bad = || CliError::new(EXIT_USAGE, format!("--sweep expects start:end:step, got `{spec}`"));
    let parts: Vec<f64> = spec.split(':').map(|s| s.trim().parse::<f64>()).collect::<Result<_, _>>().map_err(|_| bad())?;
    let [start, end, step] = parts[..] else {
        return Err(bad());
    };
    if !(step > 0.0) || end < start {
        return Err(bad());
    }
    let n = ((end - start) / step + 1e-9).floor() as usize;
    Ok((0..=n).map(|k| start + k as f64 * step).collect())
}

fn gen(path: &Path, report: Option<&Path>, cap: usize, g: &GlobalArgs) -> CliResult<()> {
    let spec = parse_with(path, CircuitSpec::from_json)?;
    let p = pdolab::circuit::build_pdo_capped(&spec, cap)?;
    let validation = p.validate();
    if let Some(r) = report {
        write_json(Some(r), &validation)?;
    }
    summary(g, format!("{} events, validation passed: {}", p.n_events(), validation.passed()));
    write_json(g.out.as_deref(), &p.to_json_value())?;
    if !validation.passed() {
        return Err(CliError::new(EXIT_NUMERIC, format!("generated PDO fails validation: {validation:?}")));
    }
    Ok(())
}

#[derive(Deserialize)]
struct HalfSpaceJson {
    operator: MatrixRows,
    offset: f64,
}

fn solve(
    path: &Path,
    filter: Filter,
    constraints: Option<&Path>,
    starts: usize,
    iterations: usize,
    g: &GlobalArgs,
) -> CliResult<()> {
    let out = g.out.as_deref();
    let tol = g.tol.unwrap_or(DEFAULT_TOL);
    let scenario = match parse_with(path, MarginalScenario::from_json) {
        Ok(s) => s,
        Err(e) if e.code == EXIT_INCOMPATIBLE => {
            write_json(out, &json!({ "status": "incompatible", "message": e.message }))?;
            return Err(e);
        }
        Err(e) => return Err(e),
    };
    let family = solve_herm1(&scenario)?;
    summary(g, format!("{} free entries", family.free_count()));
    let mut report = json!({
        "filter": format!("{filter:?}").to_lowercase(),
        "free_count": family.free_count(),
        "reduce_check": reduce_check_pdo(&family.base_point, &scenario)?,
        "solution": family.to_json_value(),
    });
    let found = match filter {
        Filter::None => {
            report["status"] = json!("solved");
            return write_json(out, &report);
        }
        Filter::Positive => {
            let opts = FilterOptions { starts, iterations, seed: g.seed, tol, ..FilterOptions::default() };
            let result = filter_positive_report(&family, &opts);
            report["best_min_eigenvalues"] = json!(result.best_min_eigenvalues);
            result.found
        }
        Filter::Halfspaces => {
            let file = constraints.ok_or_else(|| CliError::new(EXIT_USAGE, "--filter halfspaces needs --constraints"))?;
            let raw: Vec<HalfSpaceJson> = read_json(file)?;
            let hs = raw
                .iter()
                .map(|h| HalfSpace::new(matrix_from_rows(&h.operator)?, h.offset))
                .collect::<pdolab::Result<Vec<_>>>()?;
            filter_halfspaces(&family, &hs, tol)?
        }
        Filter::Hull => {
            let file = constraints.ok_or_else(|| CliError::new(EXIT_USAGE, "--filter hull needs --constraints"))?;
            let raw: Vec<PdoJson> = read_json(file)?;
            let labels = family.base_point.labels().to_vec();
            let vertices = raw
                .into_iter()
                .map(|v| Pdo::from_json_value(v).and_then(|p| p.relabeled(labels.clone())))
                .collect::<pdolab::Result<Vec<_>>>()?;
            filter_hull(&family, &vertices, tol)?
        }
    };
    match found {
        Some(p) => {
            report["status"] = json!("found");
            report["completion"] = json!(p.to_json_value());
            write_json(out, &report)
        }
        None => {
            report["status"] = json!("not_found");
            write_json(out, &report)?;
            Err(CliError::new(EXIT_NOT_FOUND, "no completion found under the search budget"))
        }
    }
}

fn maxent(path: &Path, mode: Mode, restarts: usize, iterations: usize, witness: bool, g: &GlobalArgs) -> CliResult<()> {
    let scenario = parse_with(path, MarginalScenario::from_json)?;
    let mut problem =
        MaxEntProblem::new(scenario.clone())?.seed(g.seed).restarts(restarts).iterations(iterations);
    if mode == Mode::Mlp {
        problem = problem.mlp(MlpOptions::default());
    }
    let result = infer(&problem)?;
    summary(g, format!("S = {:.9}, residual = {:.3e}", result.entropy, result.residual));
    let mode_name = if mode == Mode::Mlp { "mlp" } else { "direct" };
    let mut value = serde_json::to_value(result.to_json_value(mode_name)).map_err(Error::from)?;
    if witness {
        let opts = WitnessOptions { seed: g.seed, ..WitnessOptions::default() };
        value["witness"] = match non_uniqueness_witness(&scenario, &opts)? {
            Some((a, b)) => {
                let (sa, sb) = (pdolab::entropy(&a), pdolab::entropy(&b));
                json!({
                    "found": true,
                    "entropies": [sa, sb],
                    "entropy_gap": (sa - sb).abs(),
                    "distance": distance(&a, &b, opts.norm),
                    "first": a.to_json_value(),
                    "second": b.to_json_value(),
                })
            }
            None => json!({ "found": false }),
        };
    }
    write_json(g.out.as_deref(), &value)
}

fn channel(op: ChannelOp, g: &GlobalArgs) -> CliResult<()> {
    let out = g.out.as_deref();
    match op {
        ChannelOp::Apply { channel, pdo } => {
            let c = load_channel(&channel)?;
            write_json(out, &c.apply(&load_pdo(&pdo)?)?.to_json_value())
        }
        ChannelOp::Choi { channel } => write_json(out, &load_channel(&channel)?.choi_pdo().to_json_value()),
        ChannelOp::Marginal { channel, keep_in, keep_out } => {
            let c = load_channel(&channel)?;
            let keep_in: Vec<&str> = keep_in.iter().map(String::as_str).collect();
            let keep_out: Vec<&str> = keep_out.iter().map(String::as_str).collect();
            write_json(out, &c.marginal_channel(&keep_in, &keep_out)?.to_json_value())
        }
        ChannelOp::Solve { channels } => {
            let raw: Vec<ChannelJson> = read_json(&channels)?;
            let parts = raw
                .into_iter()
                .map(PseudoChannel::from_json_value)
                .collect::<pdolab::Result<Vec<_>>>()?;
            let family = solve_channel_marginal(&parts)?;
            let base = family.complete(&vec![0.0; family.family.free_count()])?;
            summary(g, format!("{} free entries", family.family.free_count()));
            write_json(
                out,
                &json!({
                    "free": family.family.free_tuples(),
                    "free_count": family.family.free_count(),
                    "in_events": family.in_events,
                    "out_events": family.out_events,
                    "tp_zeroed_count": family.tp_zeroed.len(),
                    "base_channel": base.to_json_value(),
                }),
            )
        }
    }
}

#[derive(Deserialize)]
struct ClassicalScenario {
    hyperedges: Vec<Vec<usize>>,
    parts: Vec<QuasiDistribution>,
}

fn classical(path: &Path, g: &GlobalArgs) -> CliResult<()> {
    let out = g.out.as_deref();
    let sc: ClassicalScenario = read_json(path)?;
    let graph = CompatibilityGraph::new(sc.hyperedges)?;
    let chordality = is_chordal(&graph);
    let mut report = json!({ "chordal": chordality.chordal, "ordering": chordality.ordering });
    if !chordality.chordal {
        write_json(out, &report)?;
        return Err(CliError::new(EXIT_NOT_FOUND, "compatibility graph is not chordal"));
    }
    let joint = solve_chordal(&graph, &sc.parts)?;
    let mut deviation = 0.0f64;
    for (e, p) in graph.hyperedges.iter().zip(&sc.parts) {
        let m = joint.marginalize(e)?;
        for (a, b) in m.weights().iter().zip(p.weights()) {
            deviation = deviation.max((a - b).abs());
        }
    }
    summary(g, format!("chordal; max marginal deviation {deviation:.3e}"));
    report["joint"] = json!(joint);
    report["max_deviation"] = json!(deviation);
    report["min_weight"] = json!(joint.min_weight());
    write_json(out, &report)
}

fn vector_pairs(v: &CVector) -> Vec<[f64; 2]> {
    v.iter().map(|z| [z.re, z.im]).collect()
}

fn decompose(p: &Pdo, g: &GlobalArgs) -> CliResult<()> {
    let e = p.separable_expansion();
    let error = max_abs_diff(&e.reassemble(), &p.to_matrix());
    summary(g, format!("{} terms, reassembly error {error:.3e}", e.weights.len()));
    write_json(
        g.out.as_deref(),
        &json!({
            "dims": e.dims,
            "weights": e.weights,
            "local_states": e.local_states.iter().map(|term| term.iter().map(vector_pairs).collect::<Vec<_>>()).collect::<Vec<_>>(),
            "weight_sum": e.weight_sum(),
            "l1_norm": e.l1_norm(),
            "reassembly_error": error,
        }),
    )
}

fn purify(p: &Pdo, g: &GlobalArgs) -> CliResult<()> {
    let pur = p.purify();
    let error = max_abs_diff(&pur.reconstruct(), &p.to_matrix());
    summary(g, format!("|Psi|^2 = {:.12}, reconstruction error {error:.3e}", pur.norm_sqr()));
    write_json(
        g.out.as_deref(),
        &json!({
            "system_dim": pur.system_dim,
            "state_vector": vector_pairs(&pur.state_vector),
            "sign_unitary": matrix_to_rows(&pur.sign_unitary),
            "norm_sqr": pur.norm_sqr(),
            "trace_norm": p.trace_norm(),
            "reconstruction_error": error,
        }),
    )
}

#[derive(Deserialize)]
struct JumpJson {
    rate: f64,
    operator: MatrixRows,
}

#[derive(Deserialize)]
struct LindbladJson {
    dims: Vec<usize>,
    #[serde(default)]
    labels: Vec<String>,
    hamiltonian: MatrixRows,
    #[serde(default)]
    jumps: Vec<JumpJson>,
}

fn lindblad(path: &Path, evolve: Option<&Path>, tau: f64, dt: f64, g: &GlobalArgs) -> CliResult<()> {
    let raw: LindbladJson = read_json(path)?;
    let jumps = raw
        .jumps
        .iter()
        .map(|j| Ok((j.rate, matrix_from_rows(&j.operator)?)))
        .collect::<pdolab::Result<Vec<_>>>()?;
    let mut l = Lindbladian::new(raw.dims, matrix_from_rows(&raw.hamiltonian)?, jumps)?;
    if !raw.labels.is_empty() {
        l = l.with_labels(raw.labels)?;
    }
    let p = match evolve {
        Some(input) => {
            if !(tau >= 0.0 && dt > 0.0) {
                return Err(CliError::new(EXIT_USAGE, "--tau must be non-negative and --dt positive"));
            }
            l.evolve(&load_pdo(input)?, tau, dt)?
        }
        None => l.steady_state()?,
    };
    write_json(g.out.as_deref(), &p.to_json_value())
}
