//! Acceptance criteria. Each test prints one `PASS`/`FAIL` line.

use std::sync::{Arc, OnceLock};
use std::time::Instant;

use lcfem::amr::flag_values;
use lcfem::cli::{run, RefineMode, RunConfig, RunOutcome};
use lcfem::estimator::estimate;
use lcfem::fem::constraints::build_constraints;
use lcfem::fem::shape::Q1_NODES;
use lcfem::fem::space::FeSpace;
use lcfem::mesh::{FaceKind, Mesh};
use lcfem::physics::{
    deviation_report, energy, h1_error, Assembler, DeviationReport, DirectorState, EnergyRecord, Formulation,
};
use lcfem::problems::{helix_director, helix_jet, preset, BoundaryCondition, PresetOptions, TWIST_NOTE};
use lcfem::solver::{
    nested_iteration, nested_iteration_with, work_units, EstimateSummary, LevelRecord, NewtonRecord, Refinement,
    SolveStats,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn report(n: usize, name: &str, pass: bool, detail: &str) {
    println!("criterion {n:>2} {name}: {} | {detail}", if pass { "PASS" } else { "FAIL" });
    assert!(pass, "criterion {n} ({name}) failed: {detail}");
}

fn sci(v: &[f64]) -> String {
    v.iter().map(|x| format!("{x:.2e}")).collect::<Vec<_>>().join(", ")
}

fn helix_opts(f: Formulation, cells: usize) -> PresetOptions {
    PresetOptions { formulation: f, t0: 2.0, helix_cells: cells }
}

#[test]
fn c01_constant_solution_is_exact() {
    let t = Instant::now();
    let mut worst = (0.0f64, 0.0f64, 0.0f64, 0usize);
    for f in [Formulation::Penalty, Formulation::Lagrangian] {
        let p = preset("constant_ellipse", PresetOptions { formulation: f, ..Default::default() }).unwrap();
        let mut max_theta = 0.0f64;
        let r = nested_iteration_with(&p.config, p.mesh, &p.bc, 2, Refinement::Adaptive, None, &mut |lv| {
            max_theta = max_theta.max(lv.estimates.max());
            Ok(())
        });
        let (_, stats) = r.into_result().unwrap();
        assert_eq!(stats.levels.len(), 2);
        for l in &stats.levels {
            worst.0 = worst.0.max(l.energy.w_f().abs());
            worst.1 = worst.1.max(l.deviation.max_dev.abs()).max(l.deviation.min_dev.abs());
            worst.3 = worst.3.max(l.newton.iterations);
        }
        worst.2 = worst.2.max(max_theta);
    }
    let secs = t.elapsed().as_secs_f64();
    let pass = worst.0 <= 1e-10 && worst.1 <= 1e-12 && worst.2 <= 1e-10 && worst.3 <= 2 && secs < 30.0;
    report(
        1,
        "exact constant solution",
        pass,
        &format!("wF {:.1e}, |dev| {:.1e}, max theta {:.1e}, Newton {}, {secs:.1} s", worst.0, worst.1, worst.2, worst.3),
    );
}

/// Energy errors and H^1 errors of the helix on three uniform levels.
fn helix_levels() -> &'static (Vec<f64>, Vec<f64>, Vec<f64>, f64) {
    static CELL: OnceLock<(Vec<f64>, Vec<f64>, Vec<f64>, f64)> = OnceLock::new();
    CELL.get_or_init(|| {
        let t = Instant::now();
        let p = preset("helix_manufactured", helix_opts(Formulation::Lagrangian, 8)).unwrap();
        let (mut de, mut h1, mut est) = (Vec::new(), Vec::new(), Vec::new());
        let exact = |x: lcfem::Point| helix_jet(2.0, x);
        let r = nested_iteration_with(&p.config, p.mesh, &p.bc, 3, Refinement::Uniform, None, &mut |lv| {
            de.push((lv.record.energy.g + 4.0).abs());
            h1.push(h1_error(lv.state, &exact, 5)?);
            est.push(lv.estimates.global);
            Ok(())
        });
        r.into_result().unwrap();
        (de, h1, est, t.elapsed().as_secs_f64())
    })
}

#[test]
fn c02_helix_convergence() {
    let (de, h1, _, secs) = helix_levels();
    let er: Vec<f64> = de.windows(2).map(|w| w[0] / w[1]).collect();
    let hr: Vec<f64> = h1.windows(2).map(|w| w[0] / w[1]).collect();
    let pass = er.iter().all(|&r| r >= 8.0) && hr.iter().all(|&r| r >= 3.5) && *secs < 120.0;
    report(
        2,
        "helix convergence",
        pass,
        &format!("energy errors {} ratios {er:.2?}; H1 errors {} ratios {hr:.2?}; {secs:.1} s", sci(de), sci(h1)),
    );
}

#[test]
fn c03_jacobian_matches_finite_differences() {
    let t = Instant::now();
    let mut worst_fd = 0.0f64;
    let mut worst_sym = 0.0f64;
    for f in [Formulation::Penalty, Formulation::Lagrangian] {
        let p = preset("helix_manufactured", helix_opts(f, 4)).unwrap();
        let cfg = p.config;
        let space = Arc::new(FeSpace::new(Arc::new(p.mesh), f == Formulation::Lagrangian));
        let cs = Arc::new(build_constraints(&space, &|x| p.bc.eval(x)).unwrap());
        let asm = Assembler::new(space.clone(), cs.clone(), &cfg).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let template = DirectorState::interpolate(space.clone(), |x| helix_director(2.0, x)).coeffs;
        let free: Vec<f64> = cs.restrict(&template).iter().map(|v| v + rng.gen_range(-0.3..0.3)).collect();
        let u = cs.extend(&free, &template);
        let (_, jac) = asm.residual_and_jacobian(&cfg, &u);
        worst_sym = worst_sym.max(jac.max_asymmetry());
        let h = 1e-6;
        for _ in 0..20 {
            let j = rng.gen_range(0..free.len());
            let mut fp = free.clone();
            let mut fm = free.clone();
            fp[j] += h;
            fm[j] -= h;
            let rp = asm.residual(&cfg, &cs.extend(&fp, &template));
            let rm = asm.residual(&cfg, &cs.extend(&fm, &template));
            let col = jac.column(j);
            let scale = col.iter().fold(0.0f64, |m, v| m.max(v.abs())).max(1e-300);
            let err = (0..col.len()).map(|i| ((rp[i] - rm[i]) / (2.0 * h) - col[i]).abs()).fold(0.0, f64::max);
            worst_fd = worst_fd.max(err / scale);
        }
    }
    let secs = t.elapsed().as_secs_f64();
    let pass = worst_fd <= 1e-6 && worst_sym <= 1e-10 && secs < 60.0;
    report(
        3,
        "Jacobian consistency",
        pass,
        &format!("max relative FD error {worst_fd:.2e}, max |J - J^T| {worst_sym:.2e}, {secs:.1} s"),
    );
}

// Lower bound on estimate / H^1 error; the first recorded run gave 10.95 on
// every level.
const EFFECTIVITY_FLOOR: f64 = 5.0;

#[test]
fn c04_estimator_effectivity() {
    let (_, h1, est, _) = helix_levels();
    let eff: Vec<f64> = est.iter().zip(h1).map(|(e, h)| e / h).collect();
    let lo = eff.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = eff.iter().cloned().fold(0.0, f64::max);
    let pass = hi / lo <= 10.0 && lo >= EFFECTIVITY_FLOOR;
    report(4, "estimator effectivity", pass, &format!("estimate / H1 error per level {eff:.3?}, band ratio {:.2}", hi / lo));
}

/// Largest `| |n_h| - 1 |` at quadrature points of elements away from the boundary.
fn interior_deviation(state: &DirectorState) -> f64 {
    let q = lcfem::fem::quadrature(3).unwrap();
    let mesh = &state.space.mesh;
    let mut worst = 0.0f64;
    for (e, el) in mesh.elements.iter().enumerate() {
        if el.vertices.iter().any(|&v| {
            let p = mesh.vertices[v];
            p[0] == 0.0 || p[0] == 1.0 || p[1] == 0.0 || p[1] == 1.0
        }) {
            continue;
        }
        for &xi in &q.points {
            let n = state.space.eval_director(&state.coeffs, e, xi);
            worst = worst.max(((n[0] * n[0] + n[1] * n[1] + n[2] * n[2]).sqrt() - 1.0).abs());
        }
    }
    worst
}

#[test]
fn c05_penalty_weight_scaling() {
    let mut devs = Vec::new();
    let mut inner = Vec::new();
    for zeta in [1e3, 1e4, 1e5] {
        let mut p = preset("helix_manufactured", helix_opts(Formulation::Penalty, 16)).unwrap();
        p.config.zeta = zeta;
        let bc = BoundaryCondition::new("helix_1.05", "helix scaled to length 1.05", |x| {
            helix_director(2.0, x).map(|v| 1.05 * v)
        });
        let (state, _) = nested_iteration(&p.config, p.mesh, &bc, 1, Refinement::Uniform).unwrap();
        let d = deviation_report(&state, &p.config).unwrap();
        devs.push(d.max_dev.abs().max(d.min_dev.abs()));
        inner.push(interior_deviation(&state));
    }
    let ratios: Vec<f64> = devs.windows(2).map(|w| w[0] / w[1]).collect();
    let inner_ratios: Vec<f64> = inner.windows(2).map(|w| w[0] / w[1]).collect();
    let pass = ratios.iter().all(|&r| (5.0..=20.0).contains(&r));
    report(
        5,
        "penalty weight scaling",
        pass,
        &format!(
            "max |dev| {}, per-decade ratios {ratios:.2?}; away from the boundary {}, ratios {inner_ratios:.2?}",
            sci(&devs),
            sci(&inner)
        ),
    );
}

/// Lagrangian paired run and penalty adaptive run of the twist preset.
fn twist_runs() -> &'static (RunOutcome, RunOutcome, serde_json::Value) {
    static CELL: OnceLock<(RunOutcome, RunOutcome, serde_json::Value)> = OnceLock::new();
    CELL.get_or_init(|| {
        let dir = tempfile::tempdir().unwrap();
        let lagr = RunConfig {
            preset: "twist".into(),
            levels: 3,
            refine: RefineMode::PairedBoth,
            out: dir.path().join("lagrangian"),
            ..Default::default()
        };
        let pen = RunConfig {
            formulation: Formulation::Penalty,
            refine: RefineMode::Adaptive,
            out: dir.path().join("penalty"),
            ..lagr.clone()
        };
        let a = run(&lagr).unwrap();
        let manifest = serde_json::from_str(&std::fs::read_to_string(lagr.out.join("manifest.json")).unwrap()).unwrap();
        let b = run(&pen).unwrap();
        (a, b, manifest)
    })
}

/// Energy agreement, WU ratio and fine dof ratio of the paired twist run.
fn amr_comparison() -> Option<(f64, f64, f64, String)> {
    let (lagr, _, _) = twist_runs();
    if !lagr.success {
        return None;
    }
    let ad = &lagr.tables[0].1;
    let un = &lagr.tables[1].1;
    let (ea, eu) = (ad.rows.last()?.energy_g, un.rows.last()?.energy_g);
    let rel = (ea - eu).abs() / eu.abs();
    let wu = ad.work_units / un.work_units;
    let dof = ad.fine_dof as f64 / un.fine_dof as f64;
    let detail = format!(
        "G adaptive {ea:.6} uniform {eu:.6} (rel {rel:.1e}), WU {:.3} vs {:.3} (ratio {wu:.3}), fine dofs {} vs {} (ratio {dof:.3})",
        ad.work_units, un.work_units, ad.fine_dof, un.fine_dof
    );
    Some((rel, wu, dof, detail))
}

#[test]
fn c06_amr_efficiency() {
    let (pass, detail) = match amr_comparison() {
        Some((rel, wu, dof, d)) => (rel <= 1e-3 && wu <= 0.5 && dof <= 0.6, d),
        None => (false, "paired run failed".into()),
    };
    report(6, "AMR efficiency", pass, &detail);
}

#[test]
fn c07_twist_energy() {
    let (lagr, pen, manifest) = twist_runs();
    let gl = lagr.tables[0].1.rows.last().map(|r| r.energy_g).unwrap_or(f64::NAN);
    let gp = pen.tables[0].1.rows.last().map(|r| r.energy_g).unwrap_or(f64::NAN);
    let in_band = |g: f64| (3.55..=3.75).contains(&g);
    let noted = manifest["notes"].as_array().is_some_and(|n| n.iter().any(|s| s.as_str() == Some(TWIST_NOTE)));
    let agreement = amr_comparison().map(|c| c.0);
    let energy_ok = (in_band(gl) && in_band(gp)) || (noted && agreement.is_some_and(|rel| rel <= 1e-3));
    let last = pen.tables[0].1.rows.last();
    let dev = last.map(|r| r.max_dev.abs().max(r.min_dev.abs())).unwrap_or(f64::NAN);
    let pass = lagr.success && pen.success && energy_ok && dev <= 1e-4;
    report(
        7,
        "twist energy",
        pass,
        &format!(
            "G lagrangian {gl:.4}, penalty {gp:.4}, in band: {}, boundary note in manifest: {noted}, adaptive/uniform rel gap {:.1e}, penalty max |dev| {dev:.2e}",
            in_band(gl) && in_band(gp),
            agreement.unwrap_or(f64::NAN)
        ),
    );
}

/// Energies of the interpolated helix with twist rate 0, t0/2, t0, 3t0/2.
fn helix_energies(cells: usize) -> Vec<f64> {
    let p = preset("helix_manufactured", helix_opts(Formulation::Lagrangian, cells)).unwrap();
    let space = Arc::new(FeSpace::new(Arc::new(p.mesh), false));
    [0.0, 1.0, 2.0, 3.0]
        .iter()
        .map(|&a| energy(&DirectorState::interpolate(space.clone(), |x| helix_director(a, x)), &p.config).unwrap().g)
        .collect()
}

#[test]
fn c08_helix_energy_minimised_at_natural_twist() {
    let closed = |a: f64| a * a - 4.0 * a;
    let gap = |g: &[f64]| g.iter().zip([0.0, 1.0, 2.0, 3.0]).map(|(e, a)| (e - closed(a)).abs()).fold(0.0, f64::max);
    let coarse = helix_energies(16);
    let fine = helix_energies(32);
    let argmin = (0..4).min_by(|&i, &j| fine[i].total_cmp(&fine[j])).unwrap();
    let (gc, gf) = (gap(&coarse), gap(&fine));
    // the gap is interpolation error and must shrink at the Q2 energy rate
    let pass = argmin == 2 && gf <= 1e-5 && gc / gf >= 8.0;
    report(
        8,
        "helix energy minimum",
        pass,
        &format!("G at a = 0, 1, 2, 3: {fine:.6?}; closed-form gap {gc:.1e} on 16x16, {gf:.1e} on 32x32"),
    );
}

fn level(step_nnz: &[usize], nnz: usize) -> LevelRecord {
    LevelRecord {
        level: 0,
        elements: 1,
        dofs: 1,
        newton: NewtonRecord {
            iterations: step_nnz.len(),
            residuals: vec![0.0; step_nnz.len() + 1],
            alphas: vec![1.0; step_nnz.len()],
            step_nnz: step_nnz.to_vec(),
        },
        nnz,
        energy: EnergyRecord { g: 0.0, g_half: 0.0, constant_term: 0.0 },
        deviation: DeviationReport { max_dev: 0.0, min_dev: 0.0 },
        estimate: EstimateSummary { global: 0.0, max: 0.0, mean: 0.0 },
        wall_time: 1.0,
    }
}

#[test]
fn c09_work_unit_bookkeeping() {
    let three = SolveStats { levels: vec![level(&[40, 40, 40], 40)], ..Default::default() };
    let nested = SolveStats {
        levels: vec![level(&[10], 10), level(&[20], 20), level(&[40], 40)],
        ..Default::default()
    };
    let slow = SolveStats {
        levels: nested.levels.iter().map(|l| LevelRecord { wall_time: 1e3, ..l.clone() }).collect(),
        wall_time: 5e3,
        ..Default::default()
    };
    let uniform = SolveStats { levels: vec![level(&[16, 16], 16), level(&[64, 64], 64)], ..Default::default() };
    let a = work_units(&three, None).unwrap();
    let b = work_units(&nested, None).unwrap();
    let c = work_units(&slow, None).unwrap();
    // paired: divisor from the adaptive finest grid (40)
    let d = work_units(&uniform, nested.finest_nnz()).unwrap();
    let pass = a == 3.0 && b == 1.75 && c == b && d == 160.0 / 40.0 && work_units(&SolveStats::default(), None).is_err();
    report(9, "work units", pass, &format!("WU {a}, {b}, time-rescaled {c}, paired {d}"));
}

fn random_mesh(seed: u64) -> Mesh {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut m = if seed % 5 == 0 {
        Mesh::ellipse(1.5, 1.0, 60).unwrap()
    } else {
        Mesh::uniform_grid(rng.gen_range(2..5), rng.gen_range(2..5), [0.0, 0.0], [1.0, 1.0]).unwrap()
    };
    for _ in 0..rng.gen_range(2..5) {
        let flags: Vec<bool> = (0..m.num_elements()).map(|_| rng.gen_bool(0.3)).collect();
        m = m.refine(&flags).unwrap();
    }
    m
}

fn edge_point(k: usize, sigma: f64) -> lcfem::Point {
    let (a, b) = (Q1_NODES[k], Q1_NODES[(k + 1) % 4]);
    [a[0] + sigma * (b[0] - a[0]), a[1] + sigma * (b[1] - a[1])]
}

#[test]
fn c10_mesh_and_constraint_properties() {
    let mut worst_hanging = 0;
    let mut worst_trace = 0.0f64;
    let mut idempotent = true;
    let mut deterministic = true;
    let mut hanging_faces = 0;
    for seed in 0..50u64 {
        let mesh = Arc::new(random_mesh(seed));
        worst_hanging = worst_hanging.max(mesh.max_hanging_per_edge_bruteforce());
        let space = Arc::new(FeSpace::new(mesh.clone(), true));
        let cs = build_constraints(&space, &|x| helix_director(1.0 + seed as f64 * 0.1, x)).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut u: Vec<f64> = (0..space.n_dofs()).map(|_| rng.gen_range(-1.0..1.0)).collect();
        cs.apply(&mut u);
        let mut twice = u.clone();
        cs.apply(&mut twice);
        idempotent &= twice == u;
        for f in mesh.edges.iter().filter(|f| f.kind == FaceKind::Hanging) {
            hanging_faces += 1;
            for t in [0.0, 0.137, 0.5, 0.81, 1.0] {
                let vals: Vec<(lcfem::Vec3, f64)> = f
                    .sides
                    .iter()
                    .map(|sd| {
                        let xi = edge_point(sd.local_edge as usize, sd.s[0] + t * (sd.s[1] - sd.s[0]));
                        (space.eval_director(&u, sd.element, xi), space.eval_multiplier(&u, sd.element, xi))
                    })
                    .collect();
                for c in 0..3 {
                    worst_trace = worst_trace.max((vals[0].0[c] - vals[1].0[c]).abs());
                }
                worst_trace = worst_trace.max((vals[0].1 - vals[1].1).abs());
            }
        }
        // ties quantised so that equal indicators are common
        let state = DirectorState::new(space.clone(), u.clone()).unwrap();
        let p = preset("helix_manufactured", helix_opts(Formulation::Lagrangian, 4)).unwrap();
        let est = estimate(&state, &p.config).unwrap();
        let theta: Vec<f64> = est.theta.iter().map(|v| (v * 4.0).round()).collect();
        let a = flag_values(&theta, 0.4).unwrap();
        let b = flag_values(&theta, 0.4).unwrap();
        let again = estimate(&state, &p.config).unwrap();
        deterministic &= a == b && again.theta == est.theta;
        // among equal values the lower ids are taken first
        for i in 0..theta.len() {
            for j in i + 1..theta.len() {
                if theta[i] == theta[j] && a.flags[j] && !a.flags[i] {
                    deterministic = false;
                }
            }
        }
    }
    let pass = worst_hanging <= 1 && worst_trace <= 1e-12 && idempotent && deterministic && hanging_faces > 0;
    report(
        10,
        "mesh and constraint properties",
        pass,
        &format!(
            "50 meshes: max hanging per edge {worst_hanging}, trace jump {worst_trace:.1e} over {hanging_faces} hanging faces, idempotent {idempotent}, deterministic flags {deterministic}"
        ),
    );
}
