use std::path::Path;
use std::process::Command;
use std::sync::Arc;

use lcfem::cli::{run, RefineMode, RunConfig};
use lcfem::estimator::estimate;
use lcfem::fem::constraints::build_constraints;
use lcfem::fem::space::FeSpace;
use lcfem::fem::transfer;
use lcfem::io::stats::StatsTable;
use lcfem::io::vtk::lint;
use lcfem::mesh::Mesh;
use lcfem::physics::{deviation_report, energy, Assembler, DirectorState, Formulation, ProblemConfig};
use lcfem::problems::{helix_director, preset, PresetOptions};
use lcfem::solver::{nested_iteration_with, Refinement};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn unit_space(n: usize, mult: bool) -> Arc<FeSpace> {
    Arc::new(FeSpace::new(Arc::new(Mesh::uniform_grid(n, n, [0.0, 0.0], [1.0, 1.0]).unwrap()), mult))
}

fn helix_cfg(f: Formulation) -> ProblemConfig {
    ProblemConfig { k1: 1.0, k2: 1.0, k3: 1.0, t0: 2.0, zeta: 1.0, formulation: f, ..Default::default() }
}

#[test]
fn helix_indicators_approach_closed_form() {
    // |r| = t0^2 for the exact helix, so Theta_T^2 -> h_T^2 t0^4 |T| and the jumps vanish
    let cfg = helix_cfg(Formulation::Penalty);
    let mut errs = Vec::new();
    let mut jumps = Vec::new();
    for n in [8, 16, 32] {
        let s = DirectorState::interpolate(unit_space(n, false), |x| helix_director(2.0, x));
        let est = estimate(&s, &cfg).unwrap();
        let mesh = &s.space.mesh;
        let mut worst = 0.0f64;
        for e in 0..mesh.num_elements() {
            let exact = mesh.h_element(e).powi(2) * 16.0 * mesh.element_area(e);
            worst = worst.max((est.interior[e] - exact).abs() / exact);
        }
        errs.push(worst);
        jumps.push(est.jump.iter().sum::<f64>() / est.interior.iter().sum::<f64>());
    }
    assert!(errs[2] < 1e-3, "{errs:?}");
    assert!(errs[0] / errs[1] > 3.5 && errs[1] / errs[2] > 3.5, "{errs:?}");
    assert!(jumps[0] / jumps[1] > 3.5 && jumps[1] / jumps[2] > 3.5, "{jumps:?}");
}

#[test]
fn helix_transfer_keeps_energy_within_interpolation_error() {
    let cfg = helix_cfg(Formulation::Lagrangian);
    let coarse = DirectorState::interpolate(unit_space(8, true), |x| helix_director(2.0, x));
    let g_coarse = energy(&coarse, &cfg).unwrap().g;
    let fine_space = Arc::new(FeSpace::new(Arc::new(coarse.space.mesh.refine_uniform().unwrap()), true));
    let cs = build_constraints(&fine_space, &|x| helix_director(2.0, x)).unwrap();
    let fine = DirectorState::new(
        fine_space.clone(),
        transfer(&coarse.space, &coarse.coeffs, &fine_space, &cs).unwrap(),
    )
    .unwrap();
    let g_fine = energy(&fine, &cfg).unwrap().g;
    let interp_err = (g_coarse + 4.0).abs();
    assert!((g_fine - g_coarse).abs() <= interp_err, "{g_coarse} {g_fine} {interp_err}");
}

// Residual norm ratio per uniform refinement of the helix interpolant,
// recorded from a three-level run (2.60, 2.03).
const RESIDUAL_RATE: f64 = 2.0;

#[test]
fn helix_residual_decays_under_refinement() {
    let cfg = ProblemConfig { zeta: 1e5, ..helix_cfg(Formulation::Penalty) };
    let norms: Vec<f64> = [8, 16, 32]
        .iter()
        .map(|&n| {
            let space = unit_space(n, false);
            let cs = Arc::new(build_constraints(&space, &|x| helix_director(2.0, x)).unwrap());
            let s = DirectorState::interpolate(space.clone(), |x| helix_director(2.0, x));
            let asm = Assembler::new(space, cs, &cfg).unwrap();
            asm.residual(&cfg, &s.coeffs).iter().map(|r| r * r).sum::<f64>().sqrt()
        })
        .collect();
    println!("helix residual norms {norms:?}");
    for w in norms.windows(2) {
        assert!(w[0] / w[1] >= 0.95 * RESIDUAL_RATE, "{norms:?}");
    }
}

// Most negative quadrature-point deviation of the 8x8 helix interpolant.
const HELIX_MIN_DEV: f64 = -7.305194282825056e-6;

#[test]
fn deviation_agrees_with_dense_sampling() {
    let cfg = helix_cfg(Formulation::Lagrangian);
    let s = DirectorState::interpolate(unit_space(8, false), |x| helix_director(2.0, x));
    let rep = deviation_report(&s, &cfg).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let (mut hi, mut lo) = (f64::NEG_INFINITY, f64::INFINITY);
    for _ in 0..10_000 {
        let e = rng.gen_range(0..s.space.mesh.num_elements());
        let n = s.space.eval_director(&s.coeffs, e, [rng.gen(), rng.gen()]);
        let d = (n[0] * n[0] + n[1] * n[1] + n[2] * n[2]).sqrt() - 1.0;
        hi = hi.max(d);
        lo = lo.min(d);
    }
    println!("deviation quadrature [{:e}, {:e}] sampled [{lo:e}, {hi:e}]", rep.min_dev, rep.max_dev);
    // the interpolant is exact at the nodes and shrinks in between
    assert!(hi <= 1e-12 && rep.max_dev <= 1e-12);
    let (quad, sampled) = (rep.min_dev.abs(), lo.abs());
    assert!((quad - sampled).abs() <= 0.1 * sampled, "{quad:e} {sampled:e}");
    assert!((rep.min_dev - HELIX_MIN_DEV).abs() <= 1e-9 * HELIX_MIN_DEV.abs(), "{}", rep.min_dev);
}

#[test]
fn newton_is_locally_quadratic() {
    let p = preset("helix_manufactured", PresetOptions::default()).unwrap();
    let cfg = ProblemConfig { newton_tol: 1e-12, ..p.config };
    let mut res = Vec::new();
    let run = nested_iteration_with(&cfg, p.mesh, &p.bc, 1, Refinement::Uniform, Some((1e-3, 9)), &mut |lv| {
        res = lv.record.newton.residuals.clone();
        Ok(())
    });
    run.into_result().unwrap();
    println!("residual history {res:?}");
    let k = res.len();
    assert!(k >= 4, "{res:?}");
    for i in [k - 3, k - 2] {
        let rate = res[i + 1].ln() / res[i].ln();
        assert!(rate >= 1.5, "{res:?}");
    }
}

// Smallest Jacobian determinant of the ellipse mesh after two uniform
// refinements, recorded from the first run.
const ELLIPSE_MIN_JACOBIAN: f64 = 9.258078177064396e-5;

#[test]
fn refined_ellipse_jacobian_is_frozen() {
    let m = Mesh::ellipse(1.5, 1.0, 1313).unwrap().refine_uniform().unwrap().refine_uniform().unwrap();
    let q = m.quality_report();
    println!("ellipse quality {q:?}");
    assert!(q.min_jacobian > 0.0);
    assert!((q.min_jacobian - ELLIPSE_MIN_JACOBIAN).abs() <= 1e-9 * ELLIPSE_MIN_JACOBIAN, "{}", q.min_jacobian);
}

#[test]
fn twist_hierarchy_keeps_right_angles() {
    let p = preset("twist", PresetOptions::default()).unwrap();
    let mut angles = Vec::new();
    let run = nested_iteration_with(&p.config, p.mesh, &p.bc, 3, Refinement::Adaptive, None, &mut |lv| {
        let q = lv.state.space.mesh.quality_report();
        assert!(q.passes());
        angles.push(q.min_angle);
        Ok(())
    });
    run.into_result().unwrap();
    // every cell of a refined square grid is a square
    for a in angles {
        assert!((a - std::f64::consts::FRAC_PI_2).abs() < 1e-12, "{a}");
    }
}

fn read_table(path: &Path) -> StatsTable {
    StatsTable::parse(&std::fs::read_to_string(path).unwrap()).unwrap()
}

#[test]
fn cli_constant_ellipse_run_is_exact() {
    let dir = tempfile::tempdir().unwrap();
    for f in [Formulation::Penalty, Formulation::Lagrangian] {
        let out = dir.path().join(f.to_string());
        let cfg = RunConfig {
            preset: "constant_ellipse".into(),
            formulation: f,
            levels: 2,
            out: out.clone(),
            ..Default::default()
        };
        let outcome = run(&cfg).unwrap();
        assert!(outcome.success);
        let table = read_table(&out.join("stats.csv"));
        assert_eq!(table, outcome.tables[0].1);
        assert_eq!(table.rows.len(), 2);
        for r in &table.rows {
            assert!(r.energy_g.abs() <= 1e-10 && r.energy_wf.abs() <= 1e-10);
            assert!(r.max_dev.abs() <= 1e-12 && r.min_dev.abs() <= 1e-12);
        }
        for k in 0..2 {
            let vtk = std::fs::read_to_string(out.join(format!("level_{k}.vtk"))).unwrap();
            let summary = lint(&vtk).unwrap();
            assert_eq!(summary.cells, table.rows[k].elements);
            assert_eq!(summary.cell_fields.len(), 3);
        }
        let manifest: serde_json::Value =
            serde_json::from_str(&std::fs::read_to_string(out.join("manifest.json")).unwrap()).unwrap();
        assert_eq!(manifest["status"], "ok");
        assert_eq!(manifest["formulation"], f.to_string());
        let coarse = Mesh::from_snapshot(&std::fs::read_to_string(out.join("final_mesh.txt")).unwrap()).unwrap();
        assert_eq!(coarse.num_elements(), table.rows[1].elements);
    }
}

#[test]
fn cli_helix_energy_converges_monotonically() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = RunConfig {
        preset: "helix_manufactured".into(),
        levels: 3,
        refine: RefineMode::Uniform,
        out: dir.path().to_path_buf(),
        ..Default::default()
    };
    assert!(run(&cfg).unwrap().success);
    let errs: Vec<f64> = read_table(&dir.path().join("stats.csv")).rows.iter().map(|r| (r.energy_g + 4.0).abs()).collect();
    assert!(errs.windows(2).all(|w| w[1] < w[0]), "{errs:?}");
}

#[test]
fn binary_reports_failure_and_keeps_partial_output() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out");
    let file = dir.path().join("run.toml");
    std::fs::write(
        &file,
        format!(
            "preset = \"helix_manufactured\"\nlevels = 3\nrefine = \"uniform\"\nout = {:?}\n[problem]\nmax_newton_iterations = 1\nnewton_tol = 1e-14\nalpha0 = 0.5\n",
            out.to_str().unwrap()
        ),
    )
    .unwrap();
    let status = Command::new(env!("CARGO_BIN_EXE_lcfem")).arg("run").arg(&file).status().unwrap();
    assert!(!status.success());
    let manifest: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["status"], "FAILED");
    assert!(out.join("stats.csv").exists());

    // command-line flags override the file
    let plain = dir.path().join("plain.toml");
    std::fs::write(&plain, "preset = \"helix_manufactured\"\nlevels = 3\n").unwrap();
    let ok = Command::new(env!("CARGO_BIN_EXE_lcfem"))
        .args(["run", plain.to_str().unwrap(), "--preset", "constant_ellipse", "--levels", "1"])
        .arg("--out")
        .arg(dir.path().join("ok"))
        .status()
        .unwrap();
    assert!(ok.success());
    assert_eq!(read_table(&dir.path().join("ok/stats.csv")).rows.len(), 1);
}
