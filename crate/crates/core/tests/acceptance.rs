//! Exit criteria, one PASS/FAIL line each. Runs without the libtest harness
//! so the lines are always printed; the process fails if any criterion does.

#![allow(clippy::result_large_err)]

use std::f64::consts::{FRAC_1_SQRT_2, PI};
use std::path::Path;
use std::process::Command;
use std::time::{Duration, Instant};

use rand::Rng;
use selftest_core::device::{
    embed_ideal, naimark_dilate, perturb, scramble, DeviceRealization, PerturbKind, PovmFamily, ScrambleParams,
};
use selftest_core::engine::{
    bb84_collapse_check, build_inner_isomorphism, check_prop1, check_prop2, check_prop3, isomorphism_agreement,
    measured_vectors, self_test, Diagnostics, Stage, Tolerances,
};
use selftest_core::ideal::{Angle, AnglePair, Setting};
use selftest_core::random::{gaussian_matrix, random_isometry, random_state, rng_from_seed};
use selftest_core::stats::{probability_table, table_order};
use selftest_core::tensor::{apply_local, c, equal_on_support, re, BipartiteShape, ComplexMatrix, Side, StateVector};

type Criterion = (&'static str, fn() -> Outcome);

struct Outcome {
    pass: bool,
    detail: String,
}

impl Outcome {
    fn new(pass: bool, detail: impl Into<String>) -> Self {
        Outcome { pass, detail: detail.into() }
    }
}

/// The positive family: 50 seeded scrambles over garbage 1..=4 and pads 0..=3.
fn family() -> Vec<(ScrambleParams, u64)> {
    let mut rng = rng_from_seed(0x5e1f);
    let mut out = vec![(ScrambleParams::new(4, 4, 3, 3), 0), (ScrambleParams::new(1, 1, 0, 0), 1)];
    for seed in 2..50 {
        let p = ScrambleParams::new(
            rng.random_range(1..=4),
            rng.random_range(1..=4),
            rng.random_range(0..=3),
            rng.random_range(0..=3),
        );
        out.push((p, seed));
    }
    out
}

fn family_devices() -> Vec<DeviceRealization> {
    family().into_iter().map(|(p, s)| scramble(p, s).expect("scramble")).collect()
}

// ½cos²(θa − θb) with θ = angle + outcome·π/2, written out from the angles.
fn analytic_probability(a: Setting, b: Setting) -> f64 {
    let theta = |s: Setting| {
        let base = match s.angle {
            Angle::Minus => -PI / 8.0,
            Angle::Zero => 0.0,
            Angle::Plus => PI / 8.0,
        };
        base + f64::from(s.outcome) * PI / 2.0
    };
    0.5 * (theta(a) - theta(b)).cos().powi(2)
}

fn criterion_1() -> Outcome {
    let start = Instant::now();
    let table = probability_table(&embed_ideal()).expect("ideal device is valid");
    let elapsed = start.elapsed();
    let mut worst = 0.0f64;
    let mut zeros = 0;
    for (a, b) in table_order() {
        let expected = analytic_probability(a, b);
        if expected.abs() < 1e-15 {
            zeros += 1;
        }
        worst = worst.max((table.get(a, b) - expected).abs());
    }
    Outcome::new(
        worst <= 1e-12 && zeros == 6 && elapsed < Duration::from_secs(1),
        format!("max |p - p_ideal| = {worst:.3e}, exact zeros {zeros}/6, {:.1} ms", elapsed.as_secs_f64() * 1e3),
    )
}

fn criterion_2() -> Outcome {
    let start = Instant::now();
    let tol = Tolerances::default();
    let mut worst = [0.0f64; 3];
    let mut refused = Vec::new();
    let mut max_dim = 0;
    for (params, seed) in family() {
        let d = scramble(params, seed).expect("scramble");
        max_dim = max_dim.max(d.shape.dim_a.max(d.shape.dim_b));
        match self_test(&d, &tol) {
            Ok(cert) => {
                let r = cert.residuals;
                for (w, x) in worst.iter_mut().zip([r.cond1, r.cond2, r.cond3]) {
                    *w = w.max(x);
                }
            }
            Err(e) => refused.push(format!("seed {seed}: {e}")),
        }
    }
    let elapsed = start.elapsed();
    let pass = refused.is_empty() && worst.iter().all(|&x| x <= 1e-8) && elapsed < Duration::from_secs(60);
    let mut detail = format!(
        "50 devices up to {max_dim} per side, cond1 {:.3e}, cond2 {:.3e}, cond3 {:.3e}, {:.1} s",
        worst[0],
        worst[1],
        worst[2],
        elapsed.as_secs_f64()
    );
    if let Some(first) = refused.first() {
        detail.push_str(&format!("; {} refused, first {first}", refused.len()));
    }
    Outcome::new(pass, detail)
}

/// `‖(P_{(α,0)} − P_{(γ,0)})P_{(β,z)}Φ⁺‖²` on real 2-vectors, with the
/// partners taken cyclically in (minus, zero, plus).
fn oracle_d_length(beta: Angle, z: u8) -> f64 {
    let order = [Angle::Minus, Angle::Zero, Angle::Plus];
    let k = order.iter().position(|&a| a == beta).unwrap();
    let (alpha, gamma) = (order[(k + 1) % 3], order[(k + 2) % 3]);
    let angle = |a: Angle| match a {
        Angle::Minus => -PI / 8.0,
        Angle::Zero => 0.0,
        Angle::Plus => PI / 8.0,
    };
    let proj = |t: f64| [[t.cos() * t.cos(), t.cos() * t.sin()], [t.sin() * t.cos(), t.sin() * t.sin()]];
    // (P_a ⊗ P_b)Φ⁺ as a 2×2 coefficient matrix: P_a · (I/√2) · P_bᵀ
    let vec_of = |ta: f64, tb: f64| {
        let (pa, pb) = (proj(ta), proj(tb));
        let mut m = [[0.0; 2]; 2];
        for (i, row) in m.iter_mut().enumerate() {
            for (j, x) in row.iter_mut().enumerate() {
                *x = (0..2).map(|k| pa[i][k] * FRAC_1_SQRT_2 * pb[j][k]).sum();
            }
        }
        m
    };
    let tb = angle(beta) + f64::from(z) * PI / 2.0;
    let (u, v) = (vec_of(angle(alpha), tb), vec_of(angle(gamma), tb));
    (0..2).flat_map(|i| (0..2).map(move |j| (i, j))).map(|(i, j)| (u[i][j] - v[i][j]).powi(2)).sum()
}

fn criterion_3() -> Outcome {
    let target = (PI / 8.0).sin().powi(2) / 2.0;
    let tol = 1e-9;
    let mut worst = [0.0f64; 3];
    let mut oracle_gap = 0.0f64;
    let mut stated_gap = 0.0f64;
    let mut offenders = std::collections::BTreeSet::new();
    for d in family_devices() {
        worst[0] = worst[0].max(check_prop1(&d, tol).residual);
        worst[1] = worst[1].max(check_prop2(&d, tol).residual);
        let p3 = check_prop3(&d, tol);
        worst[2] = worst[2].max(p3.residual);
        for l in &p3.d_lengths {
            oracle_gap = oracle_gap.max((l.observed - oracle_d_length(l.beta, l.z)).abs());
            let gap = (l.observed - target).abs();
            stated_gap = stated_gap.max(gap);
            if gap > tol {
                offenders.insert(format!("({},{}) = {:.7}", l.beta.tag(), l.z, l.observed));
            }
        }
    }
    let pass = worst.iter().all(|&x| x <= tol) && oracle_gap <= tol && offenders.is_empty();
    let mut detail = format!(
        "prop1 {:.3e}, prop2 {:.3e}, prop3 {:.3e}, |d|^2 vs oracle {oracle_gap:.3e}, vs {target:.7} for all (beta,z) {stated_gap:.3e}",
        worst[0], worst[1], worst[2]
    );
    if !offenders.is_empty() {
        detail.push_str(&format!("; off target: {}", offenders.into_iter().collect::<Vec<_>>().join(", ")));
    }
    Outcome::new(pass, detail)
}

fn criterion_4() -> Outcome {
    let anchors = AnglePair::mixed();
    let mut worst = 0.0f64;
    let mut failures = Vec::new();
    for seed in 0..10u64 {
        let params =
            ScrambleParams::new(1 + (seed % 4) as usize, 1 + ((seed + 2) % 4) as usize, (seed % 3) as usize, 1);
        let d = scramble(params, 100 + seed).expect("scramble");
        let vectors = measured_vectors(&d);
        let isos: Vec<_> = anchors.iter().map(|&a| build_inner_isomorphism(&d, a, 1e-8)).collect();
        let isos: Vec<_> = match isos.into_iter().collect::<Result<Vec<_>, _>>() {
            Ok(v) => v,
            Err(e) => {
                failures.push(format!("seed {seed}: {e}"));
                continue;
            }
        };
        for i in 0..isos.len() {
            for j in i + 1..isos.len() {
                worst = worst.max(isomorphism_agreement(&isos[i], &isos[j], &vectors));
            }
        }
    }
    let mut detail = format!("{} anchors x 10 devices, worst disagreement {worst:.3e}", anchors.len());
    if let Some(f) = failures.first() {
        detail.push_str(&format!("; {f}"));
    }
    Outcome::new(anchors.len() == 6 && failures.is_empty() && worst <= 1e-8, detail)
}

fn criterion_5() -> Outcome {
    let tol = Tolerances::default();
    let bases = [embed_ideal(), scramble(ScrambleParams::new(2, 3, 1, 0), 5).expect("scramble")];
    let mut min_deviation = f64::INFINITY;
    let mut problems = Vec::new();
    let mut cases = 0;
    for (bi, base) in bases.iter().enumerate() {
        for kind in [PerturbKind::AngleTilt, PerturbKind::StatePerturb] {
            for eps in [0.0, 0.01, 0.05] {
                for seed in 0..3u64 {
                    cases += 1;
                    let d = perturb(base, kind, eps, seed).expect("perturb");
                    let label = format!("base {bi} {} eps {eps} seed {seed}", kind.name());
                    match (eps == 0.0, self_test(&d, &tol)) {
                        (true, Ok(_)) => {}
                        (true, Err(e)) => problems.push(format!("{label}: refused, {e}")),
                        (false, Ok(_)) => problems.push(format!("{label}: certified")),
                        (false, Err(r)) => match (&r.stage, &r.diagnostics) {
                            (Stage::Stats, Diagnostics::Gate { report }) => {
                                min_deviation = min_deviation.min(report.max_abs_deviation);
                                if report.max_abs_deviation <= 1e-4 {
                                    problems.push(format!("{label}: deviation {:.3e}", report.max_abs_deviation));
                                }
                            }
                            _ => problems.push(format!("{label}: refused at {}", r.stage)),
                        },
                    }
                }
            }
        }
    }
    let mut detail = format!("{cases} devices, smallest refused deviation {min_deviation:.3e}");
    if !problems.is_empty() {
        detail.push_str(&format!("; {}", problems.join("; ")));
    }
    Outcome::new(problems.is_empty(), detail)
}

fn criterion_6() -> Outcome {
    let mut worst = 0.0f64;
    let mut errors = Vec::new();
    let ancilla = StateVector::basis(2, 0);
    for fam_seed in 0..20u64 {
        let povm = PovmFamily::random(2, 1000 + fam_seed);
        let dilated = match naimark_dilate(&povm) {
            Ok(f) => f,
            Err(e) => {
                errors.push(format!("family {fam_seed}: {e}"));
                continue;
            }
        };
        let mut rng = rng_from_seed(2000 + fam_seed);
        for _ in 0..20 {
            let psi = random_state(&mut rng, 2);
            let lifted = psi.tensor(&ancilla);
            for s in Setting::ALL {
                let effect = povm.get(s).apply(&psi).expect("2-dim");
                let direct = psi.inner(&effect).re;
                let proj = dilated.get(s).apply(&lifted).expect("4-dim");
                let through = lifted.inner(&proj).re;
                worst = worst.max((direct - through).abs());
            }
        }
    }
    let mut detail = format!("20 families x 20 states x 6 effects, worst gap {worst:.3e}");
    if let Some(e) = errors.first() {
        detail.push_str(&format!("; {e}"));
    }
    Outcome::new(errors.is_empty() && worst <= 1e-10, detail)
}

fn criterion_7() -> Outcome {
    let tol = Tolerances::default();
    let mut worst_infidelity = 0.0f64;
    let mut worst_spread = 0.0f64;
    let mut problems = Vec::new();
    for seed in 0..10u64 {
        let params = ScrambleParams::new(
            1 + (seed % 3) as usize,
            1 + ((seed + 1) % 4) as usize,
            (seed % 2) as usize,
            (seed % 4) as usize,
        );
        let d = scramble(params, 300 + seed).expect("scramble");
        let cert = match self_test(&d, &tol) {
            Ok(c) => c,
            Err(e) => {
                problems.push(format!("seed {seed}: {e}"));
                continue;
            }
        };
        let mut garbage = Vec::new();
        for alpha in [Angle::Minus, Angle::Plus] {
            for x in 0..2 {
                match bb84_collapse_check(&d, &cert, alpha, x, 1e-8) {
                    Ok(check) => {
                        worst_infidelity = worst_infidelity.max(check.infidelity);
                        garbage.push(check.garbage);
                    }
                    Err(e) => problems.push(format!("seed {seed} ({}, {x}): {e}", alpha.tag())),
                }
            }
        }
        for i in 0..garbage.len() {
            for j in i + 1..garbage.len() {
                worst_spread = worst_spread.max(garbage[i].distance(&garbage[j]));
            }
        }
    }
    let mut detail = format!("10 devices, worst infidelity {worst_infidelity:.3e}, garbage spread {worst_spread:.3e}");
    if let Some(p) = problems.first() {
        detail.push_str(&format!("; {p}"));
    }
    Outcome::new(problems.is_empty() && worst_infidelity <= 1e-8 && worst_spread <= 1e-9, detail)
}

/// A random triple: a state of Schmidt rank `r`, two operators on one side
/// that either agree on the span of that side's Schmidt vectors or do not.
fn support_triple(seed: u64) -> (ComplexMatrix, ComplexMatrix, StateVector, BipartiteShape, Side, bool) {
    let mut rng = rng_from_seed(7000 + seed);
    let (da, db) = (rng.random_range(2..=5), rng.random_range(2..=5));
    let r = rng.random_range(1..=da.min(db));
    let side = if seed.is_multiple_of(2) { Side::A } else { Side::B };
    let ua = random_isometry(&mut rng, da, r);
    let ub = random_isometry(&mut rng, db, r);
    let weights: Vec<f64> = (0..r).map(|_| rng.random_range(0.3..1.0)).collect();
    let norm = weights.iter().map(|w| w * w).sum::<f64>().sqrt();
    let mut amps = vec![c(0.0, 0.0); da * db];
    for (k, w) in weights.iter().enumerate() {
        for i in 0..da {
            for j in 0..db {
                amps[i * db + j] += re(w / norm) * ua[(i, k)] * ub[(j, k)];
            }
        }
    }
    let psi = StateVector::new(amps);
    let shape = BipartiteShape::new(da, db).unwrap();
    let (n, vecs) = match side {
        Side::A => (da, &ua),
        Side::B => (db, &ub),
    };
    let out_rows = rng.random_range(1..=4);
    let op1 = gaussian_matrix(&mut rng, out_rows, n);
    // Projector onto the span of the Schmidt vectors of the acted-on side.
    let support = vecs.matmul(&vecs.adjoint()).unwrap();
    let complement = ComplexMatrix::identity(n).sub(&support).unwrap();
    let kick = gaussian_matrix(&mut rng, out_rows, n);
    let agree = seed % 4 != 3 && (r < n || seed.is_multiple_of(4));
    let delta = if agree && r < n {
        kick.matmul(&complement).unwrap()
    } else if agree {
        ComplexMatrix::zeros(out_rows, n)
    } else {
        kick.matmul(&support).unwrap()
    };
    let op2 = op1.add(&delta).unwrap();
    (op1, op2, psi, shape, side, agree)
}

fn criterion_8() -> Outcome {
    let tol = 1e-10;
    let mut disagreements = Vec::new();
    let mut equal_cases = 0;
    for seed in 0..100u64 {
        let (op1, op2, psi, shape, side, _) = support_triple(seed);
        let (v1, _) = apply_local(&op1, &psi, shape, side).unwrap();
        let (v2, _) = apply_local(&op2, &psi, shape, side).unwrap();
        let direct = v1.distance(&v2) <= tol;
        let cmp = equal_on_support(&op1, &op2, &psi, shape, side, tol).unwrap();
        if direct {
            equal_cases += 1;
        }
        if cmp.equal != direct {
            disagreements.push(format!(
                "seed {seed}: support residual {:.3e}, direct {:.3e}",
                cmp.residual,
                v1.distance(&v2)
            ));
        }
    }
    let mut detail = format!(
        "100 triples ({equal_cases} equal, {} different), {} disagreements",
        100 - equal_cases,
        disagreements.len()
    );
    if let Some(d) = disagreements.first() {
        detail.push_str(&format!("; {d}"));
    }
    Outcome::new(disagreements.is_empty() && equal_cases > 0 && equal_cases < 100, detail)
}

fn run_cli(args: &[&str], dir: &Path) -> std::process::Output {
    Command::new(env!("CARGO_BIN_EXE_selftest"))
        .args(args)
        .current_dir(dir)
        .env_remove("SELFTEST_MAX_DIM")
        .output()
        .expect("selftest binary runs")
}

fn without_timestamp(text: &str) -> String {
    text.lines().filter(|l| !l.trim_start().starts_with("\"timestamp\"")).collect::<Vec<_>>().join("\n")
}

fn criterion_9() -> Outcome {
    let dir = tempfile::tempdir().expect("temp dir");
    let mut problems = Vec::new();
    for seed in [1u64, 7, 42, 99, 2024] {
        let seed_arg = seed.to_string();
        let mut devices = Vec::new();
        let mut reports = Vec::new();
        for run in 0..2 {
            let device = format!("device-{seed}-{run}.json");
            let gen = run_cli(
                &[
                    "gen",
                    "scrambled",
                    "--ga",
                    "3",
                    "--gb",
                    "2",
                    "--pad-a",
                    "2",
                    "--pad-b",
                    "1",
                    "--seed",
                    &seed_arg,
                    "--out",
                    &device,
                ],
                dir.path(),
            );
            if !gen.status.success() {
                problems.push(format!("seed {seed}: gen exited {:?}", gen.status.code()));
                continue;
            }
            devices.push(std::fs::read(dir.path().join(&device)).unwrap());
            // Same input name in both runs, so the report mentions the same file.
            std::fs::copy(dir.path().join(&device), dir.path().join(format!("device-{seed}.json"))).unwrap();
            let report = format!("report-{seed}-{run}.json");
            let verify =
                run_cli(&["verify", &format!("device-{seed}.json"), "--format", "json", "--out", &report], dir.path());
            if verify.status.code() != Some(0) {
                problems.push(format!("seed {seed}: verify exited {:?}", verify.status.code()));
                continue;
            }
            reports.push(std::fs::read_to_string(dir.path().join(&report)).unwrap());
        }
        if devices.len() == 2 && devices[0] != devices[1] {
            problems.push(format!("seed {seed}: device files differ"));
        }
        if reports.len() == 2 && without_timestamp(&reports[0]) != without_timestamp(&reports[1]) {
            problems.push(format!("seed {seed}: reports differ"));
        }
    }
    let detail = if problems.is_empty() {
        "5 seeds, device files and reports byte-identical across two runs".to_string()
    } else {
        problems.join("; ")
    };
    Outcome::new(problems.is_empty(), detail)
}

fn main() {
    let criteria: [Criterion; 9] = [
        ("ideal statistics reproduced", criterion_1),
        ("scrambled family certified", criterion_2),
        ("proposition checks hold on the family", criterion_3),
        ("isomorphism independent of the anchor", criterion_4),
        ("perturbed devices refused at the gate", criterion_5),
        ("dilation reproduces effect probabilities", criterion_6),
        ("collapse leaves the same garbage", criterion_7),
        ("support comparison matches direct test", criterion_8),
        ("command-line reports are deterministic", criterion_9),
    ];
    let mut failed = 0;
    for (k, (name, run)) in criteria.iter().enumerate() {
        let outcome = run();
        let verdict = if outcome.pass { "PASS" } else { "FAIL" };
        println!("criterion {}: {verdict}  {name}: {}", k + 1, outcome.detail);
        if !outcome.pass {
            failed += 1;
        }
    }
    println!("acceptance: {} of {} criteria passed", criteria.len() - failed, criteria.len());
    if failed > 0 {
        std::process::exit(1);
    }
}
