//! One PASS/FAIL line per acceptance criterion, at the stated tolerances.

use std::process::Command;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use resonance::channel::{default_scenario, k_from_spectral_family, scenario_with, DEFAULT_DEPTH};
use resonance::config::{BoxSpec, ModelConfig};
use resonance::contour::{admissibility, build_rule, ContourSpec};
use resonance::linalg::{c64, inverse_checked, op_norm, CMat};
use resonance::model::TransferModel;
use resonance::numrange::{NumericalRangeHull, DEFAULT_ANGLES};
use resonance::oracle::{eigen_correspondence, sample_points, schur_defect, DiscreteBlockModel};
use resonance::pipeline::{channel_config, continuation_certificate, run, RunOutcome, Stage};
use resonance::solver::{solve_transformation, Kappa};
use resonance::transfer::ContourModel;
use resonance::Error;

struct Line {
    id: usize,
    name: &'static str,
    pass: bool,
    detail: String,
}

fn scalar_exp(scale: f64) -> TransferModel {
    ModelConfig::ScalarExp {
        a: 2.0,
        scale,
        rate: 1.0,
        shift: 0.5,
        lambda_c: 0.5,
        beta: 6.0,
        domain_re_min: -1.0,
        bx: BoxSpec {
            alpha1: 1.5,
            alpha2: 2.5,
            eta: 0.25,
        },
    }
    .build()
    .unwrap()
}

fn contour(model: &TransferModel, sheet: i32, depth: f64) -> (NumericalRangeHull, ContourModel, resonance::contour::AdmissibilityReport) {
    let hull = NumericalRangeHull::new(&model.a_tilde, DEFAULT_ANGLES).unwrap();
    let spec = ContourSpec::semi_ellipse(sheet, model.lambda_c(), model.beta(), depth, 16);
    let rule = build_rule(&spec, model, &hull).unwrap();
    let adm = admissibility(model, &rule, &hull).unwrap();
    let cm = ContourModel::new(model, &rule).unwrap();
    (hull, cm, adm)
}

fn continuation(lines: &mut Vec<Line>, channel: &TransferModel) {
    let t = Instant::now();
    let mut worst: f64 = 0.0;
    let mut fewest = usize::MAX;
    for model in [&scalar_exp(0.01), channel] {
        for sheet in [-1, 1] {
            let (_, cm, _) = contour(model, sheet, DEFAULT_DEPTH);
            let c = continuation_certificate(&cm).unwrap();
            fewest = fewest.min(c.points.len());
            for p in &c.points {
                worst = worst.max(p.defect / (1.0 + p.m_norm));
            }
        }
    }
    let secs = t.elapsed().as_secs_f64();
    lines.push(Line {
        id: 1,
        name: "continuation identity",
        pass: worst <= 1e-8 && fewest >= 10 && secs < 30.0,
        detail: format!("max rel defect {worst:.2e}, min points {fewest}, {secs:.1} s"),
    });
}

fn solvability(lines: &mut Vec<Line>, channel: &TransferModel, out: &RunOutcome) {
    let mut ok = true;
    let mut worst_defect: f64 = 0.0;
    let mut worst_iter = 0;
    let mut check = |s: &resonance::solver::SolutionReport| {
        worst_defect = worst_defect.max(s.defect);
        worst_iter = worst_iter.max(s.iterations);
        s.iterations <= 200 && s.defect <= 1e-10 && s.x_norm <= s.r_min + 1e-8
    };
    for s in &out.report.solutions {
        ok &= check(s);
    }
    ok &= out.report.solutions.len() == 2;
    let mut cases = vec![(scalar_exp(0.01), -1), (scalar_exp(0.01), 1), (channel.clone(), 1)];
    for (model, sheet) in cases.drain(..) {
        let (_, cm, adm) = contour(&model, sheet, DEFAULT_DEPTH);
        ok &= adm.admissible;
        for k in [Kappa::Right, Kappa::Left] {
            let s = solve_transformation(&cm, &adm, k, 1e-10, 200).unwrap();
            ok &= check(&s);
        }
    }
    let mut refusals = 0;
    let strong_channel = scenario_with(0.3, 61, DEFAULT_DEPTH).model().unwrap();
    for (model, sheet) in [(scalar_exp(10.0), -1), (scalar_exp(10.0), 1), (strong_channel.clone(), -1), (strong_channel, 1)] {
        let (_, cm, adm) = contour(&model, sheet, DEFAULT_DEPTH);
        for k in [Kappa::Right, Kappa::Left] {
            if !adm.admissible && matches!(solve_transformation(&cm, &adm, k, 1e-10, 200), Err(Error::NotAdmissible { .. })) {
                refusals += 1;
            }
        }
    }
    lines.push(Line {
        id: 2,
        name: "fixed-point solvability",
        pass: ok && refusals == 8,
        detail: format!("max defect {worst_defect:.2e}, max iterations {worst_iter}, refusals {refusals}/8"),
    });
}

fn independence(lines: &mut Vec<Line>, out: &RunOutcome, scale: f64) {
    let ic = out.report.contour_independence.as_ref().unwrap();
    let zr = ic.z_right.map(|c| c.value).unwrap_or(f64::INFINITY);
    let zl = ic.z_left.map(|c| c.value).unwrap_or(f64::INFINITY);
    let om = ic.omega.map(|c| c.value).unwrap_or(f64::INFINITY);
    let admissible = ic.alternate.as_ref().is_some_and(|a| a.admissible && a.sheet == -1);
    lines.push(Line {
        id: 3,
        name: "contour independence",
        pass: admissible && zr.max(zl) <= 1e-8 * scale && om <= 1e-8,
        detail: format!("Z right {zr:.2e}, Z left {zl:.2e}, Omega {om:.2e}"),
    });
}

fn factorization(lines: &mut Vec<Line>, out: &RunOutcome) {
    let fc = out.report.factorization.as_ref().unwrap();
    let hull = out.hull.as_ref().unwrap();
    let rho = out.report.admissibility.as_ref().unwrap().o_radius();
    let has_far = fc.samples.iter().any(|s| s.z == c64(-10.0, 0.0));
    let has_inner = fc.samples.iter().any(|s| hull.upper(s.z) <= rho);
    let r = fc.samples.iter().map(|s| s.right).fold(0.0, f64::max);
    let l = fc.samples.iter().map(|s| s.left).fold(0.0, f64::max);
    lines.push(Line {
        id: 4,
        name: "factorization",
        pass: fc.samples.len() == 20 && has_far && has_inner && r <= 1e-8 && l <= 1e-8,
        detail: format!("{} points, right {r:.2e}, left {l:.2e}", fc.samples.len()),
    });
    let certified: Vec<_> = fc.w_checks.iter().filter(|w| w.certified).collect();
    let worst = certified.iter().map(|w| w.w_minus_i.unwrap_or(f64::INFINITY)).fold(0.0, f64::max);
    lines.push(Line {
        id: 5,
        name: "invertibility region",
        pass: certified.len() >= 10 && worst < 1.0,
        detail: format!("{} certified points, max |W - I| {worst:.2e}", certified.len()),
    });
    let li = &fc.loop_identities;
    let loop_worst = li.inverse.value.max(li.first_moment_left.value).max(li.first_moment_right.value);
    lines.push(Line {
        id: 6,
        name: "Omega properties",
        pass: fc.omega_norm.value < 1.0 && loop_worst <= 1e-7 && li.loop_.order() == 256,
        detail: format!("|Omega| {:.2e}, loop identities {loop_worst:.2e}", fc.omega_norm.value),
    });
    let res = out.report.resonances.as_ref().unwrap();
    lines.push(Line {
        id: 7,
        name: "similarity and spectra",
        pass: fc.similarity.value <= 1e-8 && res.hausdorff <= 1e-6 && res.max_hull_distance <= res.r0 + 1e-6,
        detail: format!(
            "similarity {:.2e}, Hausdorff {:.2e}, hull distance {:.2e} vs r0 {:.2e}",
            fc.similarity.value, res.hausdorff, res.max_hull_distance, res.r0
        ),
    });
    let pc = &fc.projection;
    let vals = [pc.right, pc.left].map(|c| c.map(|c| c.value).unwrap_or(f64::INFINITY));
    let idem = pc.idempotency.map(|c| c.value).unwrap_or(f64::INFINITY);
    lines.push(Line {
        id: 8,
        name: "eigenprojections",
        pass: vals[0] <= 1e-7 && vals[1] <= 1e-7 && idem <= 1e-9,
        detail: format!("P_M defects {:.2e} / {:.2e}, idempotency {idem:.2e}", vals[0], vals[1]),
    });
    let mut push_ok = out.report.pushthrough.len() == 2;
    let mut push_worst: f64 = 0.0;
    for p in &out.report.pushthrough {
        push_ok &= p.max_defect <= 1e-7 * p.scale;
        push_worst = push_worst.max(p.max_defect / p.scale);
    }
    lines.push(Line {
        id: 9,
        name: "eigenvalue push-through",
        pass: push_ok,
        detail: format!("max defect / scale {push_worst:.2e}"),
    });
}

fn oracle(lines: &mut Vec<Line>) {
    let mut schur: f64 = 0.0;
    let mut roots: f64 = 0.0;
    let mut count = 0;
    for seed in 0..3 {
        let dm = DiscreteBlockModel::random(4, 6, 0.5, 40 + seed);
        for z in sample_points(&dm, 20, 90 + seed).unwrap() {
            schur = schur.max(schur_defect(&dm, z).unwrap());
            count += 1;
        }
        for r in eigen_correspondence(&dm).unwrap() {
            roots = roots.max(r.distance_to_spectrum);
        }
    }
    lines.push(Line {
        id: 10,
        name: "oracle ground truth",
        pass: schur <= 1e-10 && roots <= 1e-8,
        detail: format!("{count} points, Schur defect {schur:.2e}, root distance {roots:.2e}"),
    });
}

fn kernel(lines: &mut Vec<Line>, channel: &TransferModel, out: &RunOutcome) {
    let sc = default_scenario();
    let grid = sc.channel.validate().unwrap();
    let h = 1e-4;
    let mut worst: f64 = 0.0;
    for mu in [0.8, 1.5, 2.3, 3.7, 5.5] {
        let fd = (k_from_spectral_family(&sc.channel, &grid, mu + h, 24)
            - k_from_spectral_family(&sc.channel, &grid, mu - h, 24))
            / c64(2.0 * h, 0.0);
        let k = channel.kernel.eval_dense(c64(mu, 0.0)).unwrap();
        worst = worst.max(op_norm(&(fd - &k)) / op_norm(&k));
    }
    let b = out.report.channel_bounds.as_ref().unwrap();
    let slack_hs = b.hs_rhs - b.hs_lhs;
    let slack_k = b.samples.iter().map(|s| s.bound - s.norm).fold(f64::INFINITY, f64::min);
    lines.push(Line {
        id: 11,
        name: "channel kernel correctness",
        pass: worst <= 1e-4 && slack_hs >= 0.0 && slack_k >= 0.0,
        detail: format!("finite-difference rel {worst:.2e}, HS slack {slack_hs:.2e}, kernel slack {slack_k:.2e}"),
    });
}

fn resolvent(lines: &mut Vec<Line>) {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let mut worst = f64::NEG_INFINITY;
    let mut cases = 0;
    while cases < 100 {
        let n = rng.gen_range(2..9);
        let a = CMat::from_fn(n, n, |_, _| c64(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)));
        let z = c64(rng.gen_range(-4.0..4.0), rng.gen_range(-4.0..4.0));
        let hull = NumericalRangeHull::new(&a, DEFAULT_ANGLES).unwrap();
        let d = hull.lower(z);
        if d <= 0.0 {
            continue;
        }
        let r = op_norm(&inverse_checked(&(&a - CMat::identity(n, n) * z)).unwrap());
        worst = worst.max(r - 1.0 / d);
        cases += 1;
    }
    lines.push(Line {
        id: 12,
        name: "resolvent bound",
        pass: worst <= 1e-8,
        detail: format!("{cases} cases, max |(A - z)^-1| - 1/d {worst:.2e}"),
    });
}

fn determinism(lines: &mut Vec<Line>, started: Instant) {
    let root = std::env::temp_dir().join(format!("resonance-acceptance-{}", std::process::id()));
    let cfg = concat!(env!("CARGO_MANIFEST_DIR"), "/../../configs/scalar_exp.json");
    let mut bodies = Vec::new();
    for k in 0..2 {
        let dir = root.join(k.to_string());
        let status = Command::new(env!("CARGO_BIN_EXE_resonance"))
            .args(["resonances", "--config", cfg, "--out"])
            .arg(&dir)
            .output()
            .unwrap()
            .status;
        assert_eq!(status.code(), Some(0));
        bodies.push(std::fs::read(dir.join("report.json")).unwrap());
    }
    let _ = std::fs::remove_dir_all(&root);
    let secs = started.elapsed().as_secs_f64();
    lines.push(Line {
        id: 13,
        name: "determinism",
        pass: bodies[0] == bodies[1] && secs < 300.0,
        detail: format!("report.json identical: {}, acceptance wall-clock {secs:.1} s", bodies[0] == bodies[1]),
    });
}

fn main() {
    let started = Instant::now();
    let sc = default_scenario();
    let channel = sc.model().unwrap();
    let out = run(&channel_config(&sc), Stage::Resonances);
    assert_eq!(out.exit_code(), 0, "{:?}", out.report.status);
    let scale = 1.0 + channel.norm_a();

    let mut lines = Vec::new();
    continuation(&mut lines, &channel);
    solvability(&mut lines, &channel, &out);
    independence(&mut lines, &out, scale);
    factorization(&mut lines, &out);
    oracle(&mut lines);
    kernel(&mut lines, &channel, &out);
    resolvent(&mut lines);
    determinism(&mut lines, started);
    lines.sort_by_key(|l| l.id);

    for l in &lines {
        println!("{} {:>2} {:<28} {}", if l.pass { "PASS" } else { "FAIL" }, l.id, l.name, l.detail);
    }
    assert_eq!(lines.len(), 13);
    let failed: Vec<_> = lines.iter().filter(|l| !l.pass).map(|l| l.id).collect();
    if !failed.is_empty() {
        eprintln!("failed criteria: {failed:?}");
        std::process::exit(1);
    }
}
