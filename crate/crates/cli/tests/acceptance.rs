//! End-to-end acceptance checks. Each criterion prints one PASS/FAIL line
//! with its measured runtime; the test fails if any criterion fails.

use std::path::PathBuf;
use std::process::Command;
use std::time::{Duration, Instant};

use pdolab::channel::{solve_channel_marginal, tp_residual};
use pdolab::classical::{computational_projectors, embed_classical_state, is_chordal};
use pdolab::entropy::{entropy_identity, klein_bound, weak_additivity, weak_subadditivity};
use pdolab::linalg::{c, max_abs_diff, partial_trace, CMatrix};
use pdolab::marginal::{
    filter_positive, polygamy_extension, reduce_check, reduce_check_pdo, FilterOptions, MarginalScenario,
};
use pdolab::maxent::{distance, infer_direct, non_uniqueness_witness, WitnessOptions};
use pdolab::pdo::default_labels;
use pdolab::{
    entropy, fixtures, random, solve_chordal, solve_herm1, temporal_two_event, CompatibilityGraph, Error, MaxEntProblem,
    Pdo, PseudoChannel, QuasiDistribution,
};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Check = Result<(), String>;

fn ensure(ok: bool, what: impl FnOnce() -> String) -> Check {
    if ok {
        Ok(())
    } else {
        Err(what())
    }
}

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn max_diff(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

fn sorted(mut v: Vec<f64>) -> Vec<f64> {
    v.sort_by(|a, b| a.partial_cmp(b).unwrap());
    v
}

fn str_refs(v: &[String]) -> Vec<&str> {
    v.iter().map(String::as_str).collect()
}

/// ¼(I⊗I + s·(X⊗X + Y⊗Y + Z⊗Z)) as a correlation tensor.
fn bell_tensor(s: f64) -> Vec<f64> {
    let mut t = vec![0.0; 16];
    t[0] = 1.0;
    for k in 1..4 {
        t[5 * k] = s;
    }
    t
}

fn data(name: &str) -> String {
    let mut p = PathBuf::from(env!("CARGO_MANIFEST_DIR"));
    p.push("tests/data");
    p.push(name);
    p.to_string_lossy().into_owned()
}

fn gen_via_cli(circuit: &str) -> Result<Pdo, String> {
    let out = Command::new(env!("CARGO_BIN_EXE_pdolab"))
        .args(["gen", &data(circuit), "--quiet"])
        .output()
        .map_err(|e| e.to_string())?;
    if !out.status.success() {
        return Err(format!("gen {circuit} exited with {:?}", out.status.code()));
    }
    Pdo::from_json(&String::from_utf8_lossy(&out.stdout)).map_err(|e| e.to_string())
}

fn fixtures_from_gen() -> Check {
    let singlet = gen_via_cli("singlet_circuit.json")?;
    let d = max_diff(singlet.tensor(), &bell_tensor(-1.0));
    ensure(d < 1e-12, || format!("singlet tensor off by {d:e}"))?;
    let d = max_diff(singlet.tensor(), fixtures::singlet().tensor());
    ensure(d < 1e-12, || format!("singlet differs from the fixture by {d:e}"))?;

    let bell = gen_via_cli("temporal_identity_circuit.json")?;
    let d = max_diff(bell.tensor(), &bell_tensor(1.0));
    ensure(d < 1e-12, || format!("temporal Bell tensor off by {d:e}"))?;
    let d = max_diff(bell.tensor(), fixtures::temporal_bell().tensor());
    ensure(d < 1e-12, || format!("temporal Bell differs from the fixture by {d:e}"))?;

    let spectrum = sorted(bell.spectrum().values);
    let d = max_diff(&spectrum, &[-0.5, 0.5, 0.5, 0.5]);
    ensure(d < 1e-10, || format!("temporal Bell spectrum {spectrum:?}"))
}

fn qubit_spectrum_formula() -> Check {
    let z = pdolab::linalg::pauli(3);
    let id = CMatrix::identity(2, 2);
    for r in [0.0, 0.25, 0.5, 0.75, 1.0] {
        let rho = (&id + &z * c(r, 0.0)) * c(0.5, 0.0);
        let p = temporal_two_event(&rho, &[id.clone()]).map_err(|e| e.to_string())?;
        let spectrum = sorted(p.spectrum().values);
        let expected = sorted(vec![-0.5, 0.5, (1.0 - r) / 2.0, (1.0 + r) / 2.0]);
        let d = max_diff(&spectrum, &expected);
        ensure(d < 1e-10, || format!("r = {r}: spectrum {spectrum:?}"))?;
        let s = entropy(&p);
        ensure((0.0..=2.0 + 1e-12).contains(&s), || format!("r = {r}: S = {s} outside [0, 2]"))?;
        if r == 0.0 {
            ensure((s - 2.0).abs() < 1e-9, || format!("S(r=0) = {s}"))?;
        }
        if r == 1.0 {
            ensure((s - 1.0).abs() < 1e-9, || format!("S(r=1) = {s}"))?;
        }
    }
    Ok(())
}

fn random_parts(global: &Pdo, rng: &mut ChaCha8Rng) -> Vec<Pdo> {
    let n = global.n_events();
    let labels = global.labels().to_vec();
    let count = rng.gen_range(1..=3usize);
    let mut parts: Vec<Vec<usize>> = (0..count)
        .map(|_| {
            let size = rng.gen_range(1..n.max(2));
            let mut idx: Vec<usize> = (0..n).collect();
            idx.shuffle(rng);
            idx.truncate(size);
            idx.sort_unstable();
            idx
        })
        .collect();
    // Every event must appear in some part.
    for e in 0..n {
        if !parts.iter().any(|p| p.contains(&e)) {
            let k = rng.gen_range(0..parts.len());
            parts[k].push(e);
            parts[k].sort_unstable();
        }
    }
    parts
        .iter()
        .map(|idx| {
            let keep: Vec<&str> = idx.iter().map(|&i| labels[i].as_str()).collect();
            global.partial_trace(&keep).unwrap()
        })
        .collect()
}

fn herm1_solver() -> Check {
    let mut rng = rng(3);
    for case in 0..100 {
        let n = rng.gen_range(2..=4usize);
        let global = random::pdo(&vec![2; n], 0.4, &mut rng);
        let parts = random_parts(&global, &mut rng);
        let s = MarginalScenario::new(parts).map_err(|e| format!("case {case}: {e}"))?;
        let f = solve_herm1(&s).map_err(|e| e.to_string())?;
        let r = reduce_check(&f, &s).map_err(|e| e.to_string())?;
        ensure(r < 1e-10, || format!("case {case}: base point residual {r:e}"))?;
        for _ in 0..10 {
            let values: Vec<f64> = (0..f.free_count()).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let p = f.complete(&values).map_err(|e| e.to_string())?;
            let r = reduce_check_pdo(&p, &s).map_err(|e| e.to_string())?;
            ensure(r < 1e-10, || format!("case {case}: completion residual {r:e}"))?;
        }
    }
    let mixed = Pdo::maximally_mixed(vec![2; 3], vec!["A".into(), "B".into(), "C".into()]).unwrap();
    let pairs = [["A", "B"], ["B", "C"], ["C", "A"]];
    let parts: Vec<Pdo> = pairs.iter().map(|p| mixed.partial_trace(p).unwrap()).collect();
    let f = solve_herm1(&MarginalScenario::new(parts).unwrap()).map_err(|e| e.to_string())?;
    ensure(f.free_count() == 27, || format!("triangle has {} free entries", f.free_count()))
}

fn entropy_relations() -> Check {
    let mut rng = rng(4);
    for case in 0..500 {
        let n = rng.gen_range(1..=3usize);
        let dims: Vec<usize> = (0..n).map(|_| if rng.gen_bool(0.25) { 3 } else { 2 }).collect();
        let p = random::pdo(&dims, 0.5, &mut rng);
        let r = entropy_identity(&p);
        ensure(r < 1e-9, || format!("identity case {case}: residual {r:e}"))?;
    }
    for case in 0..200 {
        let p = random::full_rank_pdo(&[2, 2], 0.3, 0.02, &mut rng);
        let q = random::full_rank_pdo(&[2, 2], 0.3, 0.02, &mut rng);
        let k = klein_bound(&p, &q, 0.0).map_err(|e| e.to_string())?;
        ensure(k.residual >= -1e-8, || format!("Klein case {case}: residual {:e}", k.residual))?;
    }
    for case in 0..100 {
        let p = random::pdo(&[2, 2], 0.5, &mut rng);
        let q = random::pdo(&[2], 0.5, &mut rng);
        let r = weak_additivity(&p, &q).map_err(|e| e.to_string())?;
        ensure(r.abs() < 1e-9, || format!("additivity case {case}: residual {r:e}"))?;
    }
    for case in 0..200 {
        let joint = random::full_rank_pdo(&[2, 2], 0.5, 0.02, &mut rng);
        let w = weak_subadditivity(&joint, &["e0"], 0.0).map_err(|e| e.to_string())?;
        ensure(w.residual >= -1e-8, || format!("subadditivity case {case}: residual {:e}", w.residual))?;
    }
    Ok(())
}

fn maxent_on_mixed_halves() -> Check {
    let mixed = Pdo::maximally_mixed(vec![2, 2], default_labels(2)).unwrap();
    let parts = vec![mixed.partial_trace(&["e0"]).unwrap(), mixed.partial_trace(&["e1"]).unwrap()];
    let s = MarginalScenario::new(parts).unwrap();
    let result = infer_direct(&MaxEntProblem::new(s.clone()).unwrap()).map_err(|e| e.to_string())?;
    ensure(result.entropy >= 2.0 - 1e-3, || format!("entropy {}", result.entropy))?;
    ensure(result.residual < 1e-9, || format!("reduction residual {:e}", result.residual))?;
    let opts = WitnessOptions::default();
    let (a, b) = non_uniqueness_witness(&s, &opts)
        .map_err(|e| e.to_string())?
        .ok_or("no non-uniqueness witness")?;
    let gap = (entropy(&a) - entropy(&b)).abs();
    let dist = distance(&a, &b, opts.norm);
    ensure(gap < 1e-6, || format!("witness entropy gap {gap:e}"))?;
    ensure(dist > 1e-4, || format!("witness distance {dist:e}"))
}

fn expansion_and_purification() -> Check {
    let mut rng = rng(6);
    for case in 0..200 {
        let n = rng.gen_range(1..=3usize);
        let p = random::pdo(&vec![2; n], 0.6, &mut rng);
        let m = p.to_matrix();
        let e = p.separable_expansion();
        let err = max_abs_diff(&e.reassemble(), &m);
        ensure(err < 1e-9, || format!("case {case}: reassembly error {err:e}"))?;
        let ws = e.weight_sum();
        ensure((ws - 1.0).abs() < 1e-10, || format!("case {case}: weight sum {ws}"))?;
        let pur = p.purify();
        let err = max_abs_diff(&pur.reconstruct(), &m);
        ensure(err < 1e-9, || format!("case {case}: purification error {err:e}"))?;
        let gap = (pur.norm_sqr() - p.trace_norm()).abs();
        ensure(gap < 1e-10, || format!("case {case}: |Psi|^2 differs from the trace norm by {gap:e}"))?;
    }
    Ok(())
}

fn labeled(ch: PseudoChannel, ins: &[&str], outs: &[&str]) -> PseudoChannel {
    ch.relabeled(ins.iter().map(|s| s.to_string()).collect(), outs.iter().map(|s| s.to_string()).collect())
        .unwrap()
}

fn channel_duality() -> Check {
    let mut rng = rng(7);
    for case in 0..100 {
        let d_in = rng.gen_range(2..=3usize);
        let d_out = rng.gen_range(2..=3usize);
        let ch = random::hptp(&[d_in], &[d_out], &mut rng);
        let j = ch.choi();
        let back = PseudoChannel::from_choi(&j, vec![d_in], vec![d_out]).map_err(|e| e.to_string())?;
        for _ in 0..3 {
            let r = random::herm1(d_in, &mut rng);
            let direct = ch.apply_matrix(&r).unwrap();
            let err = max_abs_diff(&PseudoChannel::apply_via_choi(&j, d_in, &r), &direct)
                .max(max_abs_diff(&back.apply_matrix(&r).unwrap(), &direct));
            ensure(err < 1e-10, || format!("round trip case {case}: error {err:e}"))?;
        }
    }

    for case in 0..50 {
        let a = labeled(random::hptp(&[2], &[2], &mut rng), &["a"], &["x"]);
        let b = labeled(random::hptp(&[2], &[2], &mut rng), &["b"], &["y"]);
        let product = a.tensor(&b).unwrap();
        let m = product.marginal_channel(&["a"], &["x"]).map_err(|e| format!("case {case}: {e}"))?;
        for _ in 0..3 {
            let r = random::pdo(&[2, 2], 0.5, &mut rng).relabeled(vec!["a".into(), "b".into()]).unwrap();
            let lhs = product.apply(&r).unwrap().partial_trace(&["x"]).unwrap();
            let rhs = m.apply(&r.partial_trace(&["a"]).unwrap()).unwrap();
            let err = max_abs_diff(&lhs.to_matrix(), &rhs.to_matrix());
            ensure(err < 1e-9, || format!("marginal channel case {case}: error {err:e}"))?;
        }
    }

    let a = labeled(random::hptp(&[2], &[2], &mut rng), &["a"], &["x"]);
    let b = labeled(random::hptp(&[2], &[2], &mut rng), &["b"], &["y"]);
    let family = solve_channel_marginal(&[a, b]).map_err(|e| e.to_string())?;
    let n_out = family.out_events.len();
    for k in 0..100 {
        let values: Vec<f64> = (0..family.family.free_count()).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let choi = family.family.complete(&values).map_err(|e| e.to_string())?;
        let r = tp_residual(&choi, n_out);
        ensure(r < 1e-10, || format!("completion {k}: TP residual {r:e}"))?;
        family.complete(&values).map_err(|e| format!("completion {k}: {e}"))?;
    }

    let swap = labeled(
        PseudoChannel::unitary(pdolab::circuit::swap_operator(2), vec![2, 2]).unwrap(),
        &["a", "b"],
        &["x", "y"],
    );
    match swap.marginal_channel(&["a"], &["x"]) {
        Err(Error::NoMarginalChannel(_)) => Ok(()),
        Err(e) => Err(format!("SWAP marginal failed with the wrong error: {e}")),
        Ok(_) => Err("SWAP marginal was accepted".into()),
    }
}

fn polygamy() -> Check {
    let p = polygamy_extension(2, None).map_err(|e| e.to_string())?;
    let singlet = fixtures::singlet();
    let mut problems = Vec::new();
    for b in ["B1", "B2"] {
        let reduced = p.partial_trace(&["A", b]).unwrap();
        let d = max_diff(reduced.tensor(), singlet.tensor());
        if d >= 1e-10 {
            problems.push(format!("{{A,{b}}} reduction differs from the singlet by {d:e}"));
        }
    }
    let spectrum = sorted(p.spectrum().values);
    let expected = [-0.25, -0.25, -0.25, -0.25, 0.5, 0.5, 0.5, 0.5];
    let d = max_diff(&spectrum, &expected);
    if d >= 1e-10 {
        problems.push(format!("spectrum {spectrum:?}, expected {expected:?}"));
    }
    let parts = vec![fixtures::singlet_on("A", "B"), fixtures::singlet_on("A", "C")];
    let f = solve_herm1(&MarginalScenario::new(parts).unwrap()).map_err(|e| e.to_string())?;
    if filter_positive(&f, &FilterOptions::default()).is_some() {
        problems.push("positive extension of two singlets was reported".into());
    }
    if problems.is_empty() {
        Ok(())
    } else {
        Err(problems.join("; "))
    }
}

/// Random chordal hypergraph: each new variable joins a subset of an
/// existing hyperedge, so the elimination order is perfect by construction.
fn random_chordal(n: usize, rng: &mut ChaCha8Rng) -> Vec<Vec<usize>> {
    let first = rng.gen_range(1..=2usize).min(n - 1);
    let mut edges = vec![(0..=first).collect::<Vec<usize>>()];
    for v in first + 1..n {
        let parent = edges[rng.gen_range(0..edges.len())].clone();
        let size = rng.gen_range(1..=parent.len().min(2));
        let mut sep: Vec<usize> = parent.choose_multiple(rng, size).copied().collect();
        sep.push(v);
        sep.sort_unstable();
        edges.push(sep);
    }
    edges
}

fn signed(shape: &[usize], lo: f64, rng: &mut ChaCha8Rng) -> QuasiDistribution {
    let len: usize = shape.iter().product();
    let raw: Vec<f64> = (0..len).map(|_| rng.gen_range(lo..1.0)).collect();
    let s: f64 = raw.iter().sum();
    QuasiDistribution::new(shape.to_vec(), raw.iter().map(|x| x / s).collect()).unwrap()
}

fn separators_positive(joint: &QuasiDistribution, edges: &[Vec<usize>]) -> bool {
    for i in 0..edges.len() {
        for j in i + 1..edges.len() {
            let sep: Vec<usize> = edges[i].iter().filter(|v| edges[j].contains(v)).copied().collect();
            if !sep.is_empty() && joint.marginalize(&sep).unwrap().min_weight() <= 0.0 {
                return false;
            }
        }
    }
    true
}

fn classical_chordal() -> Check {
    let verdict = |edges: Vec<Vec<usize>>| is_chordal(&CompatibilityGraph::new(edges).unwrap()).chordal;
    ensure(verdict(vec![vec![0, 1], vec![1, 2], vec![0, 2]]), || "triangle reported non-chordal".into())?;
    ensure(verdict(vec![vec![0, 1], vec![1, 2], vec![2, 3]]), || "chain reported non-chordal".into())?;
    ensure(!verdict(vec![vec![0, 1], vec![1, 2], vec![2, 3], vec![3, 0]]), || "4-cycle reported chordal".into())?;

    let mut rng = rng(9);
    let mut signed_cases = 0;
    for case in 0..100 {
        let n = rng.gen_range(2..=5usize);
        let shape: Vec<usize> = (0..n).map(|_| rng.gen_range(2..=3usize)).collect();
        let edges = random_chordal(n, &mut rng);
        let g = CompatibilityGraph::new(edges.clone()).unwrap();
        ensure(is_chordal(&g).chordal, || format!("case {case}: generated graph not chordal"))?;
        let lo = if case % 2 == 0 { 0.05 } else { -0.25 };
        let joint = loop {
            let q = signed(&shape, lo, &mut rng);
            if separators_positive(&q, &g.hyperedges) {
                break q;
            }
        };
        let parts: Vec<QuasiDistribution> = g.hyperedges.iter().map(|e| joint.marginalize(e).unwrap()).collect();
        if parts.iter().any(|p| p.min_weight() < 0.0) {
            signed_cases += 1;
        }
        let sol = solve_chordal(&g, &parts).map_err(|e| format!("case {case}: {e}"))?;
        for (e, p) in g.hyperedges.iter().zip(&parts) {
            let d = max_diff(sol.marginalize(e).unwrap().weights(), p.weights());
            ensure(d < 1e-9, || format!("case {case}: marginal error {d:e}"))?;
        }

        let projectors: Vec<Vec<CMatrix>> = shape.iter().map(|&d| computational_projectors(d)).collect();
        let w = embed_classical_state(&sol, &projectors).map_err(|e| e.to_string())?;
        for (e, p) in g.hyperedges.iter().zip(&parts) {
            let labels: Vec<String> = e.iter().map(|v| w.labels()[*v].clone()).collect();
            let reduced = w.partial_trace(&str_refs(&labels)).unwrap();
            let sub: Vec<Vec<CMatrix>> = e.iter().map(|&v| computational_projectors(shape[v])).collect();
            let direct = embed_classical_state(p, &sub).unwrap();
            let d = max_diff(reduced.tensor(), direct.tensor());
            ensure(d < 1e-9, || format!("case {case}: embedded reduction error {d:e}"))?;
        }
    }
    ensure(signed_cases > 10, || format!("only {signed_cases} instances had signed parts"))
}

fn partial_trace_oracle() -> Check {
    let mut rng = rng(10);
    for case in 0..200 {
        let n = rng.gen_range(1..=4usize);
        let dims: Vec<usize> = (0..n).map(|_| rng.gen_range(2..=3usize)).collect();
        let p = random::pdo(&dims, 0.5, &mut rng);
        let keep: Vec<usize> = (0..n).filter(|_| rng.gen_bool(0.5)).collect();
        if keep.is_empty() {
            continue;
        }
        let tensor_level = p.partial_trace_indices(&keep).map_err(|e| e.to_string())?.to_matrix();
        let dense = partial_trace(&p.to_matrix(), &dims, &keep);
        let err = max_abs_diff(&tensor_level, &dense);
        ensure(err < 1e-10, || format!("case {case}: error {err:e} (dims {dims:?}, keep {keep:?})"))?;
    }
    Ok(())
}

#[test]
fn acceptance() {
    type Criterion = (&'static str, Duration, fn() -> Check);
    let criteria: [Criterion; 10] = [
        ("1 singlet and temporal Bell fixtures", Duration::from_secs(1), fixtures_from_gen),
        ("2 qubit spectrum formula", Duration::from_secs(1), qubit_spectrum_formula),
        ("3 Hermitian marginal solver", Duration::from_secs(30), herm1_solver),
        ("4 entropy identity and inequalities", Duration::from_secs(60), entropy_relations),
        ("5 maximum entropy inference", Duration::from_secs(60), maxent_on_mixed_halves),
        ("6 separable expansion and purification", Duration::from_secs(30), expansion_and_purification),
        ("7 channel-state duality", Duration::from_secs(60), channel_duality),
        ("8 polygamy extension", Duration::from_secs(60), polygamy),
        ("9 classical chordal solver", Duration::from_secs(30), classical_chordal),
        ("10 partial trace oracle", Duration::from_secs(10), partial_trace_oracle),
    ];
    let mut failures = Vec::new();
    for (name, budget, check) in criteria {
        let start = Instant::now();
        let outcome = check();
        let elapsed = start.elapsed();
        let outcome = outcome.and_then(|()| {
            ensure(elapsed < budget, || format!("took {elapsed:.2?}, budget {budget:?}"))
        });
        match outcome {
            Ok(()) => println!("PASS  {name}  ({elapsed:.2?})"),
            Err(why) => {
                println!("FAIL  {name}  ({elapsed:.2?}): {why}");
                failures.push(name);
            }
        }
    }
    assert!(failures.is_empty(), "failed criteria: {failures:?}");
}
