//! End-to-end acceptance checks, one line per criterion.

use std::fs;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::process::Command;
use std::time::Instant;

use ard_core::ard::*;
use ard_core::dq::*;
use ard_core::identification::*;
use ard_core::linalg::{refine_eigenvalue, DqMatrix, C64};
use ard_core::network::{analyze_bus, assess_mode, demo, AssessConfig};
use ard_core::surrogate::*;
use nalgebra::{DMatrix, Matrix2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Outcome = Result<String, String>;

fn check(ok: bool, detail: String) -> Outcome {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn nearest(eigs: &[C64], z: C64) -> C64 {
    *eigs.iter().min_by(|a, b| (**a - z).norm().total_cmp(&(**b - z).norm())).unwrap()
}

fn cloud_of(lambda0: C64, points: &[C64]) -> ArdCloud {
    let mode = Mode::new(
        lambda0,
        ParticipationFactor {
            p: DqMatrix::identity(),
        },
    );
    let v = demo::vsg_params();
    ArdCloud {
        mode,
        samples: points.iter().map(|&l| ArdSample::new(v, lambda0, l - lambda0, true)).collect(),
        boundary: Vec::new(),
        worst_case: None,
        seed: 0,
        n_drawn: points.len(),
        n_rejected: 0,
        omega_digest: String::new(),
    }
}

fn c1() -> Outcome {
    let l0 = C64::new(-2.0, 60.0);
    let stable = cloud_of(l0, &[l0, l0 + C64::new(2.0 * 0.644, 0.3), l0 + C64::new(0.5, -0.2)]);
    let a = compute_api(&stable, 1000).map_err(|e| e.to_string())?;
    let pts: Vec<C64> = (0..1000).map(|k| C64::new(k as f64 - 379.0, 60.0)).collect();
    let b = compute_api(&cloud_of(l0, &pts), 1000).map_err(|e| e.to_string())?;
    check(
        a.value == 0.644
            && a.branch == ApiBranch::MarginErosion
            && b.unstable_fraction == 0.621
            && (b.value - 1.621).abs() < 1e-15
            && b.branch == ApiBranch::ReachableInstability,
        format!("stable cloud {}, unstable cloud {}", a.value, b.value),
    )
}

struct SingleBus {
    sys: ard_core::network::SystemDescription,
    builder: VsgBuilder,
    surrogate: WhiteBoxSurrogate,
    grid_eq: GridEquivalent,
}

fn single_bus() -> SingleBus {
    let sys = demo::single_bus();
    let builder = sys.builder_for(1).unwrap();
    let br = sys.branches[0];
    let grid_eq = GridEquivalent::new(br.r, br.l, sys.omega0).unwrap();
    SingleBus {
        surrogate: WhiteBoxSurrogate::new(builder),
        builder,
        grid_eq,
        sys,
    }
}

fn assess_config(n_poles: usize) -> AssessConfig {
    let mut cfg = demo::single_bus_scenario().assess;
    cfg.vector_fit.n_poles = n_poles;
    cfg
}

fn c2() -> Outcome {
    let d = single_bus();
    let cfg = assess_config(12);
    let mode = analyze_bus(&d.sys, 1, &d.surrogate, &cfg).map_err(|e| e.to_string())?.modes[0];
    let inv = d.builder.build(&d.sys.unit_at(1).unwrap().params).unwrap();
    let a0 = assemble_interconnection(&inv, &d.grid_eq).unwrap();
    let base = refine_eigenvalue(&a0.a, nearest(&a0.eigenvalues(), mode.lambda0));
    let err = |eps: f64| {
        let mut dz = Matrix2::zeros();
        dz[(0, 0)] = eps * d.sys.bases.z_base();
        let a = assemble_with_perturbation(&inv, &dz, &d.grid_eq).unwrap();
        let truth = refine_eigenvalue(&a.a, nearest(&a.eigenvalues(), base)) - base;
        let pred = mode
            .participation
            .drift(&DqMatrix::unit(0, 0).scale(C64::new(eps * d.sys.bases.z_base(), 0.0)));
        ((pred - truth).norm() / truth.norm(), (pred - truth).norm())
    };
    let (rel, e1) = err(1e-4);
    let (_, e2) = err(5e-5);
    let (_, e3) = err(2.5e-5);
    let (r1, r2) = (e1 / e2, e2 / e3);
    let ok = rel <= 0.02 && (3.0..=5.0).contains(&r1) && (3.0..=5.0).contains(&r2);
    check(ok, format!("relative error {rel:.2e}, halving ratios {r1:.2} {r2:.2}"))
}

fn c3() -> Outcome {
    // synthetic model with known poles and residues
    let grid = FrequencyGrid::log_spaced_hz(1.0, 200.0, 400).unwrap();
    let poles = [C64::new(-2.0, 40.0), C64::new(-5.0, 120.0), C64::new(-15.0, 300.0), C64::new(-40.0, 800.0)];
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut c = || C64::new(rng.random_range(-10.0..10.0), rng.random_range(-10.0..10.0));
    let (mut p, mut r) = (Vec::new(), Vec::new());
    for &q in &poles {
        let res = DqMatrix::new(c(), c(), c(), c());
        p.extend([q, q.conj()]);
        r.extend([res, res.conj()]);
    }
    let truth = PoleResidueModel::new(p, r, DqMatrix::identity().scale(C64::new(0.1, 0.0)), None).unwrap();
    let fit = vector_fit(&truth.spectrum(&grid).unwrap(), 8, 20).map_err(|e| e.to_string())?;
    let (mut pole_err, mut res_err) = (0.0f64, 0.0f64);
    for (q, res) in truth.poles.iter().zip(&truth.residues) {
        let i = fit.model.find_pole(*q, 1e-3).ok_or(format!("pole {q} not recovered"))?;
        pole_err = pole_err.max((fit.model.poles[i] - q).norm() / q.norm());
        res_err = res_err.max((fit.model.residues[i] - *res).norm_fro() / res.norm_fro());
    }

    // demo admittance against the interconnection eigenvalues
    let d = single_bus();
    let oracle = {
        let inv = d.builder.build(&d.sys.unit_at(1).unwrap().params).unwrap();
        critical_pair(&assemble_interconnection(&inv, &d.grid_eq).unwrap().eigenvalues(), (1.0, 200.0)).unwrap()
    };
    let mut demo_ok = true;
    let mut detail = String::new();
    for n in [8, 12] {
        let cfg = assess_config(n);
        let an = analyze_bus(&d.sys, 1, &d.surrogate, &cfg).map_err(|e| e.to_string())?;
        // spurious poles with negligible residues are dropped by mode selection
        let retained: Vec<C64> = an.modes.iter().map(|m| m.lambda0).collect();
        let got = critical_pair(&retained, (1.0, 200.0)).ok_or("no retained pair")?;
        let (fe, re) = ((got.im - oracle.im).abs() / oracle.im, (got.re - oracle.re).abs() / oracle.re.abs());
        demo_ok &= fe <= 0.005 && re <= 0.02;
        detail.push_str(&format!(", demo n={n} frequency {fe:.1e} real part {re:.1e}"));
    }
    check(
        pole_err <= 1e-8 && res_err <= 1e-6 && demo_ok,
        format!("synthetic poles {pole_err:.1e}, residues {res_err:.1e}{detail}"),
    )
}

fn two_pair_generator() -> StateSpaceModel {
    let (w1, w2) = (2.0 * std::f64::consts::PI * 8.0, 2.0 * std::f64::consts::PI * 35.0);
    let a = DMatrix::from_row_slice(
        4,
        4,
        &[-3.0, w1, 0.0, 0.0, -w1, -3.0, 0.0, 0.0, 0.0, 0.0, -12.0, w2, 0.0, 0.0, -w2, -12.0],
    );
    let b = DMatrix::from_row_slice(4, 2, &[1.0, 0.2, 0.0, 1.0, 0.5, -0.3, 0.4, 0.8]);
    let c = DMatrix::from_row_slice(2, 4, &[2.0, 0.0, 1.0, 0.5, 0.3, 1.5, -0.7, 1.0]);
    StateSpaceModel::new(a, b, c, DMatrix::zeros(2, 2), None).unwrap()
}

fn c4() -> Outcome {
    let g = two_pair_generator();
    let truth: Vec<C64> = g.eigenvalues();
    let clean = synthesize_transients(&g, 5e-4, 400, 1.0).map_err(|e| e.to_string())?;
    let m = era_identify(&clean, ModelOrder::Fixed(4)).map_err(|e| e.to_string())?;
    let eig = m.eigenvalues();
    let noiseless = truth.iter().map(|t| (nearest(&eig, *t) - t).norm() / t.norm()).fold(0.0, f64::max);
    let mut worst = 0.0f64;
    for seed in 0..20u64 {
        let recs = [clean[0].with_output_noise(0.01, 2 * seed), clean[1].with_output_noise(0.01, 2 * seed + 1)];
        let eig = era_identify(&recs, ModelOrder::Auto).map_err(|e| e.to_string())?.eigenvalues();
        for t in truth.iter().filter(|l| l.im > 0.0) {
            let best = eig
                .iter()
                .filter(|l| l.im > 0.0)
                .map(|l| (l.im - t.im).abs() / t.im)
                .fold(f64::INFINITY, f64::min);
            worst = worst.max(best);
        }
    }
    check(
        noiseless <= 1e-6 && worst <= 0.01,
        format!("noiseless pole error {noiseless:.1e}, worst noisy frequency error {worst:.1e} over 20 seeds"),
    )
}

fn c5() -> Outcome {
    let sys = demo::single_bus();
    let builder = sys.builder_for(1).unwrap();
    let n = sys.unit_at(1).unwrap().params.to_array();
    let (mut lo, mut hi) = (n, n);
    for (k, w) in [(0, 1e5), (1, 1e5), (3, 100.0), (4, 4000.0)] {
        lo[k] -= w;
        hi[k] += w;
    }
    let b = ParamBounds::new(lo, hi).unwrap();
    let grid = FrequencyGrid::default_band();
    let params = lhs_sample(&b, 200, 3).unwrap();
    let d = generate_dataset(&builder, &params, &grid, DatasetMode::Direct, &b, 3).map_err(|e| e.to_string())?;
    let fit = fit_surrogate(&d, 2, 2, 1e-10).map_err(|e| e.to_string())?;
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let mut worst = 0.0f64;
    for _ in 0..50 {
        let a: [f64; N_COORDS] = std::array::from_fn(|k| b.lo[k] + rng.random::<f64>() * b.width(k));
        let v = ParameterVector::from_array(&a);
        let s = C64::new(rng.random_range(-20.0..0.0), rng.random_range(20.0..600.0));
        let g = fit.grad(&v, s).map_err(|e| e.to_string())?;
        for k in (0..N_COORDS).filter(|&k| !b.is_degenerate(k)) {
            let h = 1e-6 * b.width(k) / 2.0;
            let (mut up, mut dn) = (a, a);
            up[k] += h;
            dn[k] -= h;
            let fd = (fit.eval(&ParameterVector::from_array(&up), s).unwrap()
                - fit.eval(&ParameterVector::from_array(&dn), s).unwrap())
            .scale(C64::new(0.5 / h, 0.0));
            worst = worst.max((fd - g[k]).norm_fro() / g[k].norm_fro().max(1e-300));
        }
    }
    check(worst <= 1e-5, format!("worst relative gradient error {worst:.1e} at 50 points"))
}

fn c6() -> Outcome {
    let sc = demo::single_bus_scenario();
    let d = single_bus();
    let unit = d.sys.unit_at(1).unwrap();
    let omega = FeasibleAttackSet::from_box(unit.params, &sc.attack_box, sc.mask, &d.sys.bases).unwrap();
    let mode = analyze_bus(&d.sys, 1, &d.surrogate, &sc.assess).map_err(|e| e.to_string())?.modes[0];
    let cloud = sample_ard(&omega, &sc.stealth, &d.surrogate, &mode, 2000, 11).map_err(|e| e.to_string())?;
    let sample_max = cloud.samples.iter().map(|p| p.delta_lambda.re).fold(f64::NEG_INFINITY, f64::max);
    let rep = boundary_ascent_report(&omega, &sc.stealth, &d.surrogate, &mode, 0.0, &sc.assess.optimizer)
        .map_err(|e| e.to_string())?;
    let infeasible = rep.iterates.iter().filter(|v| !is_feasible(v, &omega, &sc.stealth)).count();

    let mut rng = ChaCha8Rng::seed_from_u64(13);
    let mut moved = 0;
    for _ in 0..1000 {
        // draws from a box three times wider than the attack box
        let a: [f64; N_COORDS] = std::array::from_fn(|k| {
            let c = 0.5 * (omega.bounds.lo[k] + omega.bounds.hi[k]);
            c + 1.5 * omega.bounds.width(k) * rng.random_range(-1.0..1.0)
        });
        let p1 = project(&ParameterVector::from_array(&a), &omega, &sc.stealth);
        let p2 = project(&p1, &omega, &sc.stealth);
        if p1 != p2 || !is_feasible(&p1, &omega, &sc.stealth) {
            moved += 1;
        }
    }
    check(
        rep.best.delta_lambda.re >= sample_max - 1e-9 && infeasible == 0 && moved == 0,
        format!(
            "ascent {:.4} vs sample max {sample_max:.4}, {infeasible} infeasible of {} iterates, {moved} of 1000 projections not idempotent",
            rep.best.delta_lambda.re,
            rep.iterates.len()
        ),
    )
}

fn c7() -> Outcome {
    let d = single_bus();
    let mut cfg = assess_config(12);
    cfg.ard.n_samples = 1000;
    cfg.ard.directions = 16;
    cfg.ard.seed = 1;
    let mode = analyze_bus(&d.sys, 1, &d.surrogate, &cfg).map_err(|e| e.to_string())?.modes[0];
    let unit = d.sys.unit_at(1).unwrap();
    let st = StealthModel::unconstrained(d.sys.bases);
    let mask = [true, true, true, false, true, false, false, false, false];
    let base = AttackBox::symmetric(0.1, 0.6);
    let (mut apis, mut rhp, mut branch_ok) = (Vec::new(), Vec::new(), true);
    for f in [0.2, 0.4, 0.6, 0.8, 1.2, 1.4] {
        let omega = FeasibleAttackSet::from_box(unit.params, &base.scaled(f), mask, &d.sys.bases).unwrap();
        let cloud = assess_mode(&omega, &st, &d.surrogate, &mode, &cfg).map_err(|e| e.to_string())?;
        let api = compute_api(&cloud, cfg.api.grid_resolution).map_err(|e| e.to_string())?;
        let inv = d.builder.build(&api.worst_case.v_atk).unwrap();
        let eig = assemble_interconnection(&inv, &d.grid_eq).unwrap().eigenvalues();
        branch_ok &= (api.value >= 1.0) == (api.branch == ApiBranch::ReachableInstability);
        apis.push(api.value);
        rhp.push(eig.iter().any(|l| l.re >= 0.0));
    }
    let monotone = apis.windows(2).all(|w| w[1] >= w[0]);
    let predicted = apis.iter().position(|&a| a >= 1.0);
    let observed = rhp.iter().position(|&r| r);
    check(
        monotone && branch_ok && predicted.is_some() && predicted == observed,
        format!("APIs {apis:.3?}, first predicted crossing {predicted:?}, first oracle instability {observed:?}"),
    )
}

fn c8() -> Outcome {
    let sc = demo::four_bus_scenario();
    let sys = &sc.system;
    let mut ok = true;
    let mut detail = Vec::new();
    for &bus in &sc.targets {
        let f = WhiteBoxSurrogate::new(sys.builder_for(bus).unwrap());
        let unit = sys.unit_at(bus).unwrap();
        let modes = analyze_bus(sys, bus, &f, &sc.assess).map_err(|e| e.to_string())?.modes;
        for (k, mode) in modes.iter().enumerate() {
            let mut v = [0.0; 3];
            for (i, mask) in [demo::JOINT_MASK, demo::OP_MASK, demo::RHO_MASK].into_iter().enumerate() {
                let omega = FeasibleAttackSet::from_box(unit.params, &sc.attack_box, mask, &sys.bases).unwrap();
                let cloud = assess_mode(&omega, &sc.stealth, &f, mode, &sc.assess).map_err(|e| e.to_string())?;
                v[i] = compute_api(&cloud, sc.assess.api.grid_resolution).map_err(|e| e.to_string())?.value;
            }
            ok &= v[0] >= v[1].max(v[2]);
            detail.push(format!("bus {bus} mode {k}: {:.3} vs {:.3}/{:.3}", v[0], v[1], v[2]));
        }
    }
    check(ok, detail.join("; "))
}

fn run_demo(out: &Path) -> Result<(), String> {
    let st = Command::new(env!("CARGO_BIN_EXE_ard"))
        .args(["demo", "--out"])
        .arg(out)
        .output()
        .map_err(|e| e.to_string())?;
    if st.status.success() {
        Ok(())
    } else {
        Err(format!("demo exited with {}: {}", st.status, String::from_utf8_lossy(&st.stderr)))
    }
}

/// Every ranking and cloud CSV under `dir`, keyed by relative path.
fn artifacts(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut out = Vec::new();
    for name in ["four_bus", "multi_bus"] {
        let d = dir.join(name).join("out");
        let mut files: Vec<_> = fs::read_dir(&d).unwrap().map(|e| e.unwrap().path()).collect();
        files.sort();
        for p in files {
            let f = p.file_name().unwrap().to_string_lossy().to_string();
            if f == "ranking.csv" || (f.starts_with("ard_") && f.ends_with(".csv")) {
                out.push((format!("{name}/{f}"), fs::read(&p).unwrap()));
            }
        }
    }
    out
}

fn c9(tmp: &Path) -> Outcome {
    let (a, b) = (tmp.join("a"), tmp.join("b"));
    run_demo(&a)?;
    run_demo(&b)?;
    let (fa, fb) = (artifacts(&a), artifacts(&b));
    let differing: Vec<&str> = fa.iter().zip(&fb).filter(|(x, y)| x != y).map(|(x, _)| x.0.as_str()).collect();
    check(
        !fa.is_empty() && fa.len() == fb.len() && differing.is_empty(),
        format!("{} files compared, differing: {differing:?}", fa.len()),
    )
}

fn c10(tmp: &Path) -> Outcome {
    let dir = tmp.join("a").join("multi_bus");
    let st = Command::new(env!("CARGO_BIN_EXE_ard"))
        .args(["--format", "json", "rank", "--config"])
        .arg(dir.join("config.json"))
        .output()
        .map_err(|e| e.to_string())?;
    if !st.status.success() {
        return Err(format!("rank exited with {}", st.status));
    }
    let r: serde_json::Value = serde_json::from_slice(&st.stdout).map_err(|e| e.to_string())?;
    let rho = r["ranking"]["spearman"].as_f64().ok_or("no spearman")?;
    let discordant = r["ranking"]["discordant"].as_array().ok_or("no discordant pairs")?.len();
    let apis: Vec<f64> = r["ranking"]["rows"].as_array().unwrap().iter().map(|x| x["api"].as_f64().unwrap()).collect();
    let sorted = apis.windows(2).all(|w| w[0] >= w[1]);
    check(
        rho < 1.0 && discordant > 0 && sorted && apis.len() >= 4,
        format!("{} buses, spearman {rho:.4}, {discordant} discordant pairs", apis.len()),
    )
}

#[test]
fn acceptance() {
    let tmp = tempfile::tempdir().unwrap();
    let t = tmp.path().to_path_buf();
    let criteria: Vec<(&str, Box<dyn Fn() -> Outcome>)> = vec![
        ("C1 API branches", Box::new(c1)),
        ("C2 first-order drift", Box::new(c2)),
        ("C3 vector fitting", Box::new(c3)),
        ("C4 ERA", Box::new(c4)),
        ("C5 surrogate gradient", Box::new(c5)),
        ("C6 boundary ascent", Box::new(c6)),
        ("C7 instability crossing", Box::new(c7)),
        ("C8 joint attack dominance", Box::new(c8)),
        ("C9 reproducible demo", Box::new({
            let t = t.clone();
            move || c9(&t)
        })),
        ("C10 ranking vs SCR", Box::new({
            let t = t.clone();
            move || c10(&t)
        })),
    ];
    let mut failed = Vec::new();
    for (name, f) in &criteria {
        let start = Instant::now();
        let r = catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|p| {
            Err(p.downcast_ref::<String>().cloned().or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string())).unwrap_or_default())
        });
        let secs = start.elapsed().as_secs_f64();
        let (tag, detail) = match &r {
            Ok(d) => ("PASS", d),
            Err(d) => ("FAIL", d),
        };
        println!("{tag} {name} ({secs:.1} s): {detail}");
        if r.is_err() {
            failed.push(*name);
        }
    }
    assert!(failed.is_empty(), "failed: {failed:?}");
}
