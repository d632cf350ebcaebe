use holoflow::flow::{self, parabolic_extend_projection, FlowConfig, FlowState, Scheme};
use holoflow::holonomy::{generate_algebra, Subalgebra, DEFAULT_RANK_TOL};
use holoflow::models::{FactorSpec, ModelSpec};
use holoflow::verify::experiment::{resolve_holonomy, write_records_csv};
use holoflow::verify::{
    algebra_identities, builtin_scenario, builtin_scenarios, check_commutators, check_inequalities,
    holonomy_preservation_experiment, reaction_identities, residual_study, Commutator, Equation, HolonomyRun,
    Level, ResidualTolerance,
};
use holoflow::wedge::{pair_index, wedge_dim, TwoForm};
use nalgebra::DMatrix;
use std::io::Write;
use std::time::Instant;

// Written past the test harness capture so every line shows up in the log.
fn report(criterion: usize, pass: bool, started: Instant, detail: &str) {
    let line = format!(
        "criterion {criterion:>2}: {} ({:.1} s) {detail}\n",
        if pass { "PASS" } else { "FAIL" },
        started.elapsed().as_secs_f64()
    );
    std::io::stdout().lock().write_all(line.as_bytes()).unwrap();
}

fn warped_levels() -> [Level; 2] {
    [Level { resolution: 32, dt: 1e-4 }, Level { resolution: 64, dt: 2.5e-5 }]
}

fn xz_plane() -> Subalgebra {
    Subalgebra::from_orthonormal(3, vec![TwoForm::unit(3, pair_index(3, 0, 2))]).unwrap()
}

fn so2_so2() -> Subalgebra {
    Subalgebra::from_orthonormal(
        4,
        vec![TwoForm::unit(4, pair_index(4, 0, 1)), TwoForm::unit(4, pair_index(4, 2, 3))],
    )
    .unwrap()
}

/// `u(2)`: the antisymmetric matrices commuting with `J = E01 − E10 + E23 − E32`,
/// found as the null space of `X ↦ XJ − JX`.
fn u2() -> Subalgebra {
    let (n, m) = (4, wedge_dim(4));
    let mut j = DMatrix::zeros(n, n);
    for (a, b) in [(0, 1), (2, 3)] {
        j[(a, b)] = 1.0;
        j[(b, a)] = -1.0;
    }
    let mut op = DMatrix::zeros(n * n, m);
    for i in 0..m {
        let x = TwoForm::unit(n, i).matrix();
        let c = &x * &j - &j * &x;
        for r in 0..n * n {
            op[(r, i)] = c[(r / n, r % n)];
        }
    }
    let svd = op.svd(false, true);
    let vt = svd.v_t.unwrap();
    let seeds: Vec<TwoForm> = (0..m)
        .filter(|&k| svd.singular_values[k] < 1e-10)
        .map(|k| TwoForm::from_coords(n, vt.row(k).iter().copied().collect()))
        .collect();
    let h = generate_algebra(&seeds, DEFAULT_RANK_TOL).unwrap();
    assert_eq!(h.dim(), 4);
    h
}

#[test]
fn criterion_01_algebra_suite() {
    let t = Instant::now();
    let mut worst = 0.0f64;
    let mut ok = true;
    for n in 3..=6 {
        for r in algebra_identities(n, 200, 100 + n as u64).unwrap() {
            worst = worst.max(r.max_residual);
            ok &= r.max_residual <= 1e-12;
        }
    }
    let fast = t.elapsed().as_secs_f64() < 10.0;
    report(1, ok && fast, t, &format!("max residual {worst:.2e} over n = 3..6, 200 cases"));
    assert!(ok, "{worst:e}");
    assert!(fast);
}

#[test]
fn criterion_02_reaction_identities() {
    let t = Instant::now();
    let mut worst = 0.0f64;
    for (k, h) in [u2(), so2_so2()].iter().enumerate() {
        for r in reaction_identities(h, 100, 7 + k as u64).unwrap() {
            worst = worst.max(r.max_residual);
        }
    }
    let ok = worst < 1e-10 && t.elapsed().as_secs_f64() < 30.0;
    report(2, ok, t, &format!("max qcomp/scomp residual {worst:.2e} for u(2) and so(2)+so(2)"));
    assert!(ok, "{worst:e}");
}

fn run(name: &str) -> HolonomyRun {
    holonomy_preservation_experiment(&builtin_scenario(name).unwrap()).unwrap()
}

#[test]
fn criterion_03_projection_pair_preservation() {
    let t = Instant::now();
    let (mut proj, mut tvan) = (0.0f64, 0.0f64);
    let mut slowest = 0.0f64;
    for sc in builtin_scenarios() {
        let s = Instant::now();
        let r = holonomy_preservation_experiment(&sc).unwrap();
        assert!(r.failure.is_none(), "{}", sc.name);
        for rec in &r.records {
            proj = proj.max(rec.projection_defect);
            tvan = tvan.max(rec.tvan_defect);
        }
        slowest = slowest.max(s.elapsed().as_secs_f64());
    }
    let ok = proj <= 1e-7 && tvan <= 1e-8 && slowest < 120.0;
    report(3, ok, t, &format!("invariants {proj:.2e}, T[P̂,P̄,P̄] {tvan:.2e} over all scenarios"));
    assert!(ok);
}

#[test]
fn criterion_04_block_structure() {
    let t = Instant::now();
    let model = ModelSpec::Product {
        factors: vec![
            FactorSpec::Sphere { dim: 2, radius: 1.0 },
            FactorSpec::Sphere { dim: 2, radius: 1.0 },
        ],
    };
    let cfg = FlowConfig {
        scheme: Scheme::Rk4Ode,
        dt: 1e-3,
        t_end: 0.05,
        ..FlowConfig::default()
    };
    let mut state = FlowState::new(model.initial_slice().unwrap(), &so2_so2()).unwrap();
    assert!(state.basis_frame().is_some());
    let mut worst = state.basis_block_defect();
    for _ in 0..flow::step_count(&cfg) {
        state = flow::step(&state, &cfg).unwrap();
        worst = worst.max(state.basis_block_defect());
    }
    let ok = worst < 1e-7 && (state.t - 0.05).abs() < 1e-12 && t.elapsed().as_secs_f64() < 60.0;
    report(4, ok, t, &format!("max cross-block coefficient {worst:.2e} on [0, 0.05]"));
    assert!(ok, "{worst:e}");
}

#[test]
fn criterion_05_evolution_residuals() {
    let t = Instant::now();
    let sc = builtin_scenario("warped-t3").unwrap();
    let reps = residual_study(
        &sc.model,
        &xz_plane(),
        &sc.flow,
        &Equation::ALL,
        &warped_levels(),
        0,
        &ResidualTolerance::default(),
    )
    .unwrap();
    let mut ok = reps.len() == 6;
    let mut detail = Vec::new();
    for r in &reps {
        let (s, tm) = (r.order_space.unwrap_or(f64::NAN), r.order_time.unwrap_or(f64::NAN));
        ok &= r.levels.len() == 2 && s >= 1.8 && tm >= 0.9 && r.pass;
        detail.push(format!("{} {s:.2}/{tm:.2}", r.equation));
    }
    ok &= t.elapsed().as_secs_f64() < 600.0;
    report(5, ok, t, &format!("orders space/time: {}", detail.join(", ")));
    assert!(ok);
}

#[test]
fn criterion_06_commutators() {
    let t = Instant::now();
    let sc = builtin_scenario("warped-t3").unwrap();
    let reps = check_commutators(&sc.model, &xz_plane(), &sc.flow, &warped_levels(), 11, &ResidualTolerance::default())
        .unwrap();
    let mut ok = reps.len() == 4;
    let mut detail = Vec::new();
    for r in &reps {
        match r.commutator {
            // identities of the slot action: round-off at every level
            Commutator::LambdaNabla | Commutator::RhoNabla => {
                ok &= r.levels.iter().all(|l| l.residual < 1e-12);
                detail.push(format!("{:?} {:.1e}", r.commutator, r.residual_sup));
            }
            Commutator::DtNabla | Commutator::HeatNabla => {
                let (s, tm) = (r.order_space.unwrap_or(f64::NAN), r.order_time.unwrap_or(f64::NAN));
                ok &= s >= 1.8 && tm >= 0.9;
                detail.push(format!("{:?} {s:.2}/{tm:.2}", r.commutator));
            }
        }
        ok &= r.pass;
    }
    ok &= t.elapsed().as_secs_f64() < 180.0;
    report(6, ok, t, &detail.join(", "));
    assert!(ok);
}

#[test]
fn criterion_07_holonomy_preservation() {
    let t = Instant::now();
    let mut ok = true;
    let mut detail = Vec::new();
    for (name, dim) in [("flat-torus", 0), ("product-s2xs2", 2), ("warped-t3-split", 1), ("berger-114", 3)] {
        let r = run(name);
        let dims_ok = r.records.iter().all(|rec| rec.dim_hol == dim);
        let sup_rm = r.records.iter().map(|x| x.sup_rm_phat).fold(0.0, f64::max);
        let sup_a = r.records.iter().map(|x| x.sup_nabla_phat).fold(0.0, f64::max);
        ok &= r.pass && dims_ok && r.dims_constant && r.blocks_constant && sup_rm < 1e-6 && sup_a < 1e-6;
        if name == "product-s2xs2" {
            ok &= r
                .records
                .iter()
                .all(|x| x.blocks == [2, 2] && x.kahler_residual.is_some_and(|k| k < 1e-8));
        }
        if name == "warped-t3-split" {
            ok &= r.records.iter().all(|x| x.blocks.len() > 1);
        }
        detail.push(format!("{name} dim {} blocks {:?} |Rm∘P̂| {sup_rm:.1e} |∇P̂| {sup_a:.1e}", r.records[0].dim_hol, r.records[0].blocks));
    }
    ok &= t.elapsed().as_secs_f64() < 600.0;
    report(7, ok, t, &detail.join("; "));
    assert!(ok);
}

#[test]
fn criterion_08_parabolic_extension() {
    let t = Instant::now();
    let sc = builtin_scenario("warped-t3-split").unwrap();
    let h = resolve_holonomy(&sc.holonomy, &sc.model, &sc.flow, sc.kmax, sc.tolerances.rank).unwrap();
    let initial = FlowState::new(sc.model.initial_slice().unwrap(), &h).unwrap();
    let samples = parabolic_extend_projection(&initial, &sc.flow, 10, 1e-8).unwrap();
    let gap = samples
        .iter()
        .flat_map(|s| s.phat_heat.iter().zip(&s.phat_ode).map(|(a, b)| (a - b).max_abs()))
        .fold(0.0, f64::max);
    let rise = samples
        .windows(2)
        .map(|w| w[1].bernstein - w[0].bernstein)
        .fold(0.0, f64::max);
    let end = samples.last().unwrap().t;
    // the Bernstein quantity is a square of ∇P̂, so round-off sits near ε²/h²
    let ok = gap <= 1e-5 && rise <= 1e-20 && (end - 0.05).abs() < 1e-12 && t.elapsed().as_secs_f64() < 300.0;
    report(8, ok, t, &format!("|P̂_heat − P̂_ode| {gap:.2e}, largest Bernstein increase {rise:.2e}"));
    assert!(ok);
}

#[test]
fn criterion_09_inequalities() {
    let t = Instant::now();
    let sc = builtin_scenario("warped-t3").unwrap();
    let mut cs = Vec::new();
    for lv in warped_levels() {
        let cfg = FlowConfig { dt: lv.dt, ..sc.flow.clone() };
        let r = check_inequalities(&sc.model.with_resolution(lv.resolution), &xz_plane(), &cfg, 5).unwrap();
        assert!(r.finite);
        cs.push((r.c_heat, r.c_transport));
    }
    let within = |a: f64, b: f64| a > 0.0 && b > 0.0 && a.max(b) <= 2.0 * a.min(b);
    let ok = within(cs[0].0, cs[1].0) && within(cs[0].1, cs[1].1) && t.elapsed().as_secs_f64() < 300.0;
    report(
        9,
        ok,
        t,
        &format!(
            "C_heat {:.3} -> {:.3}, C_transport {:.3} -> {:.3}",
            cs[0].0, cs[1].0, cs[0].1, cs[1].1
        ),
    );
    assert!(ok);
}

fn cli(args: &[&str], out: &std::path::Path) -> (i32, Vec<u8>) {
    let o = std::process::Command::new(env!("CARGO_BIN_EXE_holoflow"))
        .args(args)
        .arg("--out")
        .arg(out)
        .output()
        .unwrap();
    (o.status.code().unwrap(), o.stdout)
}

#[test]
fn criterion_10_determinism() {
    let t = Instant::now();
    let mut ok = true;
    for sc in builtin_scenarios() {
        let out = || {
            let r = holonomy_preservation_experiment(&sc).unwrap();
            let mut csv = Vec::new();
            write_records_csv(&mut csv, &r.records).unwrap();
            (serde_json::to_vec(&r).unwrap(), csv)
        };
        ok &= out() == out();
    }
    let dirs = [tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap()];
    let runs: Vec<_> = dirs
        .iter()
        .map(|d| cli(&["verify-identities", "--scenario", "warped-t3", "--seed", "3"], d.path()))
        .collect();
    ok &= runs[0] == runs[1];
    ok &= std::fs::read(dirs[0].path().join("verify.json")).unwrap() == std::fs::read(dirs[1].path().join("verify.json")).unwrap();
    report(10, ok, t, "repeated scenario runs and CLI output are byte-identical");
    assert!(ok);
}
