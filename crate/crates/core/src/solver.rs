//! Damped Newton iteration, the nested-iteration driver and work-unit
//! bookkeeping.

use std::sync::Arc;
use std::time::Instant;

use log::{debug, info, warn};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::amr::{flag_all, flag_top_fraction, FlagSet};
use crate::boundary::BoundaryDescriptor;
use crate::estimator::{estimate, ElementEstimates};
use crate::fem::{build_constraints, transfer, ConstraintSet, FeSpace};
use crate::mesh::Mesh;
use crate::physics::{deviation_report, energy, Assembler, DeviationReport, DirectorState, EnergyRecord, Formulation, ProblemConfig};
use crate::problems::BoundaryCondition;
use crate::sparse::DirectSolver;
use crate::{Error, Point, Result, Vec3};

pub use crate::sparse::linear_solve;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Refinement {
    Adaptive,
    Uniform,
}

impl std::fmt::Display for Refinement {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Refinement::Adaptive => "adaptive",
            Refinement::Uniform => "uniform",
        })
    }
}

/// History of one Newton solve.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NewtonRecord {
    pub iterations: usize,
    /// Residual norm before each step and after the last one.
    pub residuals: Vec<f64>,
    pub alphas: Vec<f64>,
    /// Jacobian nonzeros of every step.
    pub step_nnz: Vec<usize>,
}

impl NewtonRecord {
    pub fn final_residual(&self) -> f64 {
        *self.residuals.last().unwrap_or(&f64::NAN)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EstimateSummary {
    pub global: f64,
    pub max: f64,
    pub mean: f64,
}

impl EstimateSummary {
    pub fn of(est: &ElementEstimates) -> Self {
        let n = est.theta.len().max(1) as f64;
        EstimateSummary { global: est.global, max: est.max(), mean: est.theta.iter().sum::<f64>() / n }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LevelRecord {
    pub level: usize,
    pub elements: usize,
    pub dofs: usize,
    pub newton: NewtonRecord,
    /// Jacobian nonzeros on this level.
    pub nnz: usize,
    pub energy: EnergyRecord,
    pub deviation: DeviationReport,
    pub estimate: EstimateSummary,
    pub wall_time: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SolveStats {
    pub levels: Vec<LevelRecord>,
    pub work_units: f64,
    pub wall_time: f64,
}

impl SolveStats {
    pub fn finest_nnz(&self) -> Option<usize> {
        self.levels.last().map(|l| l.nnz)
    }

    pub fn fine_dofs(&self) -> Option<usize> {
        self.levels.last().map(|l| l.dofs)
    }

    pub fn all_step_nnz(&self) -> impl Iterator<Item = usize> + '_ {
        self.levels.iter().flat_map(|l| l.newton.step_nnz.iter().copied())
    }
}

/// `sum_steps nnz(step) / nnz(finest)`. With `paired_finest`, the divisor is
/// taken from the associated adaptive run instead of `stats` itself.
pub fn work_units(stats: &SolveStats, paired_finest: Option<usize>) -> Result<f64> {
    let finest = paired_finest.or_else(|| stats.finest_nnz()).ok_or(Error::MissingFinestCount)?;
    if finest == 0 {
        return Err(Error::MissingFinestCount);
    }
    Ok(stats.all_step_nnz().map(|n| n as f64).sum::<f64>() / finest as f64)
}

/// Damped Newton iteration `u <- u + alpha du`, `J du = -R`, on the free dofs.
///
/// `state` must already satisfy the constraints of `asm`; updates vanish on
/// constrained dofs so this is preserved.
pub fn newton_solve(
    state: DirectorState,
    cfg: &ProblemConfig,
    asm: &Assembler,
    alpha: f64,
    lu: &mut DirectSolver,
    level: usize,
) -> Result<(DirectorState, NewtonRecord)> {
    if !(alpha > 0.0 && alpha <= 1.0) {
        return Err(Error::Config(format!("damping factor {alpha} outside (0, 1]")));
    }
    let mut u = state.coeffs;
    let mut rec = NewtonRecord { iterations: 0, residuals: Vec::new(), alphas: Vec::new(), step_nnz: Vec::new() };
    let mut r = asm.residual(cfg, &u);
    loop {
        let norm = l2(&r);
        rec.residuals.push(norm);
        debug!("level {level} iteration {}: residual {norm:.6e}", rec.iterations);
        if !norm.is_finite() {
            return Err(Error::NonConvergence { level, iterations: rec.iterations, residual: norm });
        }
        if norm <= cfg.newton_tol {
            break;
        }
        if rec.iterations >= cfg.max_newton_iterations {
            return Err(Error::NonConvergence { level, iterations: rec.iterations, residual: norm });
        }
        let (_, jac) = asm.residual_and_jacobian(cfg, &u);
        let rhs: Vec<f64> = r.iter().map(|x| -x).collect();
        let du = lu.solve(&jac, &rhs).map_err(|e| Error::Level { level, source: Box::new(e) })?;
        let full = asm.constraints.expand_update(&du);
        for (ui, di) in u.iter_mut().zip(&full) {
            *ui += alpha * di;
        }
        rec.iterations += 1;
        rec.alphas.push(alpha);
        rec.step_nnz.push(jac.nnz());
        r = asm.residual(cfg, &u);
        let new_norm = l2(&r);
        if alpha == 1.0 && new_norm > norm && norm < 1e-2 {
            warn!("level {level}: residual grew from {norm:.3e} to {new_norm:.3e} in an undamped step");
        }
    }
    Ok((DirectorState { space: state.space, coeffs: u }, rec))
}

fn l2(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// Blend of the boundary data into the interior, normalized at the nodes.
///
/// Rectangles use the transfinite (Coons) interpolant; other domains average
/// the linear interpolants along the horizontal and vertical chords.
pub fn initial_guess(space: &Arc<FeSpace>, bc: &BoundaryCondition) -> DirectorState {
    let boundary = space.mesh.boundary;
    let blend = |p: Point| -> Vec3 {
        match boundary {
            BoundaryDescriptor::Rectangle { min, max } => {
                let s = (p[0] - min[0]) / (max[0] - min[0]);
                let t = (p[1] - min[1]) / (max[1] - min[1]);
                let (l, r) = (bc.eval([min[0], p[1]]), bc.eval([max[0], p[1]]));
                let (b, u) = (bc.eval([p[0], min[1]]), bc.eval([p[0], max[1]]));
                let (c00, c10) = (bc.eval(min), bc.eval([max[0], min[1]]));
                let (c11, c01) = (bc.eval(max), bc.eval([min[0], max[1]]));
                std::array::from_fn(|i| {
                    (1.0 - s) * l[i] + s * r[i] + (1.0 - t) * b[i] + t * u[i]
                        - ((1.0 - s) * (1.0 - t) * c00[i] + s * (1.0 - t) * c10[i] + s * t * c11[i] + (1.0 - s) * t * c01[i])
                })
            }
            BoundaryDescriptor::Ellipse { a, b } => {
                let xr = a * (1.0 - (p[1] / b).powi(2)).max(0.0).sqrt();
                let yr = b * (1.0 - (p[0] / a).powi(2)).max(0.0).sqrt();
                let chord = |lo: Point, hi: Point, t: f64| -> Vec3 {
                    let (gl, gh) = (bc.eval(lo), bc.eval(hi));
                    std::array::from_fn(|i| (1.0 - t) * gl[i] + t * gh[i])
                };
                let s = if xr > 0.0 { (p[0] + xr) / (2.0 * xr) } else { 0.5 };
                let t = if yr > 0.0 { (p[1] + yr) / (2.0 * yr) } else { 0.5 };
                let h = chord([-xr, p[1]], [xr, p[1]], s);
                let v = chord([p[0], -yr], [p[0], yr], t);
                std::array::from_fn(|i| 0.5 * (h[i] + v[i]))
            }
        }
    };
    DirectorState::interpolate(space.clone(), |p| {
        let v = blend(p);
        let l = (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt();
        if l < 1e-8 {
            [0.0, 0.0, 1.0]
        } else {
            [v[0] / l, v[1] / l, v[2] / l]
        }
    })
}

/// Everything known about a level once it is solved.
pub struct LevelOutput<'a> {
    pub record: &'a LevelRecord,
    pub state: &'a DirectorState,
    pub constraints: &'a ConstraintSet,
    pub estimates: &'a ElementEstimates,
    pub flags: &'a FlagSet,
    pub cfg: &'a ProblemConfig,
}

/// Result of a nested-iteration run. On failure `error` is set and `stats`
/// holds the completed levels.
pub struct NestedRun {
    pub stats: SolveStats,
    pub state: Option<DirectorState>,
    pub error: Option<Error>,
}

impl NestedRun {
    pub fn into_result(self) -> Result<(DirectorState, SolveStats)> {
        match (self.error, self.state) {
            (Some(e), _) => Err(e),
            (None, Some(s)) => Ok((s, self.stats)),
            (None, None) => Err(Error::Config("no level was solved".into())),
        }
    }
}

/// Coarse-to-fine solve: Newton on each level, then estimate, flag, refine,
/// transfer and raise the damping factor.
pub fn nested_iteration(
    cfg: &ProblemConfig,
    coarse: Mesh,
    bc: &BoundaryCondition,
    levels: usize,
    refinement: Refinement,
) -> Result<(DirectorState, SolveStats)> {
    nested_iteration_with(cfg, coarse, bc, levels, refinement, None, &mut |_| Ok(())).into_result()
}

/// [`nested_iteration`] with a per-level callback and an optional seeded
/// uniform perturbation `(amplitude, seed)` of the coarse initial guess.
pub fn nested_iteration_with(
    cfg: &ProblemConfig,
    coarse: Mesh,
    bc: &BoundaryCondition,
    levels: usize,
    refinement: Refinement,
    perturbation: Option<(f64, u64)>,
    observer: &mut dyn FnMut(&LevelOutput) -> Result<()>,
) -> NestedRun {
    let mut run = NestedRun { stats: SolveStats::default(), state: None, error: None };
    if levels == 0 {
        run.error = Some(Error::Config("at least one level is required".into()));
        return run;
    }
    if let Err(e) = cfg.validate() {
        run.error = Some(e);
        return run;
    }
    let start = Instant::now();
    let lagr = cfg.formulation == Formulation::Lagrangian;
    let g = |p: Point| bc.eval(p);
    let mut mesh = Arc::new(coarse);
    let mut prev: Option<DirectorState> = None;
    for level in 0..levels {
        let step = (|| -> Result<(DirectorState, Option<Mesh>)> {
            let t = Instant::now();
            let space = Arc::new(FeSpace::new(mesh.clone(), lagr));
            let constraints = Arc::new(build_constraints(&space, &g)?);
            let state = match &prev {
                None => {
                    let mut s = initial_guess(&space, bc);
                    if let Some((amp, seed)) = perturbation {
                        let mut rng = ChaCha8Rng::seed_from_u64(seed);
                        for x in s.coeffs[..space.n_director_dofs()].iter_mut() {
                            *x += rng.gen_range(-amp..=amp);
                        }
                    }
                    constraints.apply(&mut s.coeffs);
                    s
                }
                Some(p) => DirectorState::new(space.clone(), transfer(&p.space, &p.coeffs, &space, &constraints)?)?,
            };
            let asm = Assembler::new(space.clone(), constraints.clone(), cfg)?;
            let alpha = cfg.alpha_at(level);
            let mut lu = DirectSolver::new();
            let (state, newton) = newton_solve(state, cfg, &asm, alpha, &mut lu, level)?;
            let en = energy(&state, cfg)?;
            let dev = deviation_report(&state, cfg)?;
            let est = estimate(&state, cfg)?;
            let flags = match refinement {
                Refinement::Adaptive => flag_top_fraction(&est, cfg.flag_fraction)?,
                Refinement::Uniform => flag_all(est.len()),
            };
            let record = LevelRecord {
                level,
                elements: mesh.num_elements(),
                dofs: space.n_dofs(),
                nnz: asm.nnz(),
                newton,
                energy: en,
                deviation: dev,
                estimate: EstimateSummary::of(&est),
                wall_time: t.elapsed().as_secs_f64(),
            };
            info!(
                "level {level}: {} elements, {} dofs, {} Newton steps, G = {:.6}, estimate {:.3e}",
                record.elements, record.dofs, record.newton.iterations, en.g, est.global
            );
            observer(&LevelOutput { record: &record, state: &state, constraints: &constraints, estimates: &est, flags: &flags, cfg })?;
            run.stats.levels.push(record);
            let next = if level + 1 < levels { Some(mesh.refine(&flags.flags)?) } else { None };
            Ok((state, next))
        })();
        match step {
            Ok((state, next)) => {
                prev = Some(state);
                if let Some(m) = next {
                    mesh = Arc::new(m);
                }
            }
            Err(e) => {
                let e = match e {
                    e @ (Error::Level { .. } | Error::NonConvergence { .. }) => e,
                    e => Error::Level { level, source: Box::new(e) },
                };
                run.error = Some(e);
                break;
            }
        }
    }
    run.stats.wall_time = start.elapsed().as_secs_f64();
    if !run.stats.levels.is_empty() {
        run.stats.work_units = work_units(&run.stats, None).unwrap_or(0.0);
    }
    run.state = prev;
    run
}
