//! Frank-Oseen energy, first-order optimality residuals and their Jacobians.
//!
//! Fields have three components but depend on `(x, y)` only, so every
//! derivative in `z` vanishes. Residuals follow the convention with the
//! common factor 2 cancelled: they equal half the derivative of the penalty
//! functional `H = G + zeta |n.n - 1|^2` or of the Lagrangian
//! `L = G + (lambda, n.n - 1)`.

use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::fem::space::{FeValues, ReferenceTables};
use crate::fem::{ConstraintSet, FeSpace};
use crate::sparse::CsrMatrix;
use crate::{Error, Point, Result, Vec3};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Formulation {
    Penalty,
    Lagrangian,
}

impl std::fmt::Display for Formulation {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Formulation::Penalty => "penalty",
            Formulation::Lagrangian => "lagrangian",
        })
    }
}

impl std::str::FromStr for Formulation {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "penalty" => Ok(Formulation::Penalty),
            "lagrangian" => Ok(Formulation::Lagrangian),
            _ => Err(Error::Config(format!("unknown formulation '{s}'"))),
        }
    }
}

/// Dimensionless problem constants and solver controls.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ProblemConfig {
    pub k1: f64,
    pub k2: f64,
    pub k3: f64,
    pub t0: f64,
    pub zeta: f64,
    pub formulation: Formulation,
    /// Length scale in meters.
    pub mu: f64,
    /// Characteristic Frank constant in newtons.
    pub k_char: f64,
    pub boundary_id: String,
    pub alpha0: f64,
    pub delta_alpha: f64,
    pub alpha_max: f64,
    pub newton_tol: f64,
    pub max_newton_iterations: usize,
    pub flag_fraction: f64,
    /// Gauss points per direction for volume integrals.
    pub quadrature_order: usize,
}

impl Default for ProblemConfig {
    fn default() -> Self {
        ProblemConfig {
            k1: 1.0,
            k2: 1.0,
            k3: 1.0,
            t0: 0.0,
            zeta: 1e5,
            formulation: Formulation::Lagrangian,
            mu: 1e-6,
            k_char: 6.2e-12,
            boundary_id: String::new(),
            alpha0: 1.0,
            delta_alpha: 0.0,
            alpha_max: 1.0,
            newton_tol: 1e-4,
            max_newton_iterations: 100,
            flag_fraction: 0.4,
            quadrature_order: 3,
        }
    }
}

impl ProblemConfig {
    pub fn kappa(&self) -> f64 {
        self.k2 / self.k3
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(m.to_string()));
        if !(self.k1 > 0.0 && self.k2 > 0.0 && self.k3 > 0.0) {
            return bad("Frank constants must be positive");
        }
        if self.formulation == Formulation::Penalty && !(self.zeta > 0.0) {
            return bad("penalty weight must be positive");
        }
        if !(self.alpha0 > 0.0 && self.alpha0 <= self.alpha_max && self.alpha_max <= 1.0) {
            return bad("damping must satisfy 0 < alpha0 <= alpha_max <= 1");
        }
        if self.delta_alpha < 0.0 {
            return bad("damping increment must be non-negative");
        }
        if !(self.newton_tol > 0.0) || self.max_newton_iterations == 0 {
            return bad("Newton tolerance and iteration cap must be positive");
        }
        if !(self.flag_fraction > 0.0 && self.flag_fraction <= 1.0) {
            return bad("flag fraction must lie in (0, 1]");
        }
        if !(1..=6).contains(&self.quadrature_order) {
            return Err(Error::QuadratureOrder(self.quadrature_order));
        }
        if !self.t0.is_finite() || !self.mu.is_finite() || !self.k_char.is_finite() {
            return bad("non-finite constant");
        }
        Ok(())
    }

    /// Damping factor used on `level` (0-based).
    pub fn alpha_at(&self, level: usize) -> f64 {
        (self.alpha0 + self.delta_alpha * level as f64).min(self.alpha_max)
    }
}

/// Coefficients of a director field (and multiplier) on a space.
#[derive(Debug, Clone)]
pub struct DirectorState {
    pub space: Arc<FeSpace>,
    /// Director dofs followed by multiplier dofs, see [`FeSpace`].
    pub coeffs: Vec<f64>,
}

impl DirectorState {
    pub fn new(space: Arc<FeSpace>, coeffs: Vec<f64>) -> Result<Self> {
        if coeffs.len() != space.n_dofs() {
            return Err(Error::Config(format!(
                "state has {} coefficients, space has {} dofs",
                coeffs.len(),
                space.n_dofs()
            )));
        }
        Ok(DirectorState { space, coeffs })
    }

    /// Nodal interpolant of `f` with a zero multiplier.
    pub fn interpolate(space: Arc<FeSpace>, f: impl Fn(Point) -> Vec3) -> Self {
        let coeffs = space.interpolate(f);
        DirectorState { space, coeffs }
    }

    pub fn director(&self) -> &[f64] {
        &self.coeffs[..self.space.n_director_dofs()]
    }

    pub fn multiplier(&self) -> &[f64] {
        &self.coeffs[self.space.n_director_dofs()..]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EnergyRecord {
    /// Rescaled functional without the factor 1/2.
    pub g: f64,
    pub g_half: f64,
    /// `K2 t0^2 |Omega| / 2`, dropped from `G`.
    pub constant_term: f64,
}

impl EnergyRecord {
    /// Integral of the free-energy density.
    pub fn w_f(&self) -> f64 {
        self.g_half + self.constant_term
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DeviationReport {
    pub max_dev: f64,
    pub min_dev: f64,
}

/// `w - (1 - kappa) (n.w) n`
pub fn z_apply(n: Vec3, kappa: f64, w: Vec3) -> Vec3 {
    let nw = dot(n, w);
    let f = (1.0 - kappa) * nw;
    [w[0] - f * n[0], w[1] - f * n[1], w[2] - f * n[2]]
}

#[inline]
pub(crate) fn dot(a: Vec3, b: Vec3) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

#[inline]
pub(crate) fn cross(a: Vec3, b: Vec3) -> Vec3 {
    [a[1] * b[2] - a[2] * b[1], a[2] * b[0] - a[0] * b[2], a[0] * b[1] - a[1] * b[0]]
}

/// Curl of the scalar basis function with gradient `g` placed in component `comp`.
#[inline]
pub(crate) fn basis_curl(comp: usize, g: [f64; 2]) -> Vec3 {
    match comp {
        0 => [0.0, 0.0, -g[1]],
        1 => [0.0, 0.0, g[0]],
        _ => [g[1], -g[0], 0.0],
    }
}

/// Pointwise director data.
#[derive(Debug, Clone, Copy)]
pub(crate) struct Kinematics {
    pub n: Vec3,
    /// `grad[c][d] = d n_c / d x_d`
    pub grad: [[f64; 2]; 3],
    pub div: f64,
    pub curl: Vec3,
    /// `n . curl n`
    pub s: f64,
    pub nn: f64,
}

impl Kinematics {
    pub fn new(val: &[f64; 9], grad: &[[f64; 2]; 9], loc: &[f64]) -> Self {
        let mut n = [0.0; 3];
        let mut g = [[0.0; 2]; 3];
        for c in 0..3 {
            for a in 0..9 {
                let u = loc[c * 9 + a];
                n[c] += val[a] * u;
                g[c][0] += grad[a][0] * u;
                g[c][1] += grad[a][1] * u;
            }
        }
        let curl = [g[2][1], -g[2][0], g[1][0] - g[0][1]];
        Kinematics {
            n,
            grad: g,
            div: g[0][0] + g[1][1],
            curl,
            s: dot(n, curl),
            nn: dot(n, n),
        }
    }

    /// Integrand of `G`.
    pub fn density(&self, cfg: &ProblemConfig) -> f64 {
        cfg.k1 * self.div * self.div
            + cfg.k3 * dot(self.curl, self.curl)
            + (cfg.k2 - cfg.k3) * self.s * self.s
            + 2.0 * cfg.k2 * cfg.t0 * self.s
    }
}

/// Local coefficient vector of element `e`, ordered like [`FeSpace::element_dofs`].
pub(crate) fn local_coefficients(space: &FeSpace, u: &[f64], e: usize) -> Vec<f64> {
    space.element_dofs(e).into_iter().map(|d| u[d]).collect()
}

pub(crate) fn multiplier_at(q1: &[f64; 4], loc: &[f64]) -> f64 {
    if loc.len() < 31 {
        return 0.0;
    }
    (0..4).map(|b| q1[b] * loc[27 + b]).sum()
}

pub fn energy(state: &DirectorState, cfg: &ProblemConfig) -> Result<EnergyRecord> {
    let per = element_integrals(state, cfg)?;
    let g: f64 = per.iter().map(|p| p.0).sum();
    let area: f64 = per.iter().map(|p| p.1).sum();
    Ok(EnergyRecord { g, g_half: 0.5 * g, constant_term: 0.5 * cfg.k2 * cfg.t0 * cfg.t0 * area })
}

/// Element means of the free-energy density (half scaling, constant included).
pub fn energy_density_field(state: &DirectorState, cfg: &ProblemConfig) -> Result<Vec<f64>> {
    let c = 0.5 * cfg.k2 * cfg.t0 * cfg.t0;
    Ok(element_integrals(state, cfg)?
        .into_iter()
        .map(|(g, area)| 0.5 * g / area + c)
        .collect())
}

// per-element (integral of the G integrand, area)
fn element_integrals(state: &DirectorState, cfg: &ProblemConfig) -> Result<Vec<(f64, f64)>> {
    let tables = ReferenceTables::new(cfg.quadrature_order)?;
    let space = &*state.space;
    Ok((0..space.mesh.num_elements())
        .into_par_iter()
        .map(|e| {
            let fe = FeValues::new(space, e, &tables, false);
            let loc = local_coefficients(space, &state.coeffs, e);
            let mut g = 0.0;
            let mut area = 0.0;
            for q in 0..fe.jxw.len() {
                let k = Kinematics::new(&fe.q2_val[q], &fe.q2_grad[q], &loc);
                g += fe.jxw[q] * k.density(cfg);
                area += fe.jxw[q];
            }
            (g, area)
        })
        .collect())
}

/// `H` for the penalty formulation, `L` for the Lagrangian one.
pub fn functional(state: &DirectorState, cfg: &ProblemConfig) -> Result<f64> {
    let tables = ReferenceTables::new(cfg.quadrature_order)?;
    let space = &*state.space;
    let lagr = cfg.formulation == Formulation::Lagrangian;
    Ok((0..space.mesh.num_elements())
        .into_par_iter()
        .map(|e| {
            let fe = FeValues::new(space, e, &tables, false);
            let loc = local_coefficients(space, &state.coeffs, e);
            let mut v = 0.0;
            for q in 0..fe.jxw.len() {
                let k = Kinematics::new(&fe.q2_val[q], &fe.q2_grad[q], &loc);
                let extra = if lagr {
                    multiplier_at(&fe.q1_val[q], &loc) * (k.nn - 1.0)
                } else {
                    cfg.zeta * (k.nn - 1.0).powi(2)
                };
                v += fe.jxw[q] * (k.density(cfg) + extra);
            }
            v
        })
        .collect::<Vec<_>>()
        .into_iter()
        .sum())
}

/// Signed extremes of `|n_h| - 1` over all volume quadrature points.
pub fn deviation_report(state: &DirectorState, cfg: &ProblemConfig) -> Result<DeviationReport> {
    let tables = ReferenceTables::new(cfg.quadrature_order)?;
    let space = &*state.space;
    let mut rep = DeviationReport { max_dev: f64::NEG_INFINITY, min_dev: f64::INFINITY };
    for e in 0..space.mesh.num_elements() {
        for &xi in &tables.quad.points {
            let n = space.eval_director(&state.coeffs, e, xi);
            let d = dot(n, n).sqrt() - 1.0;
            rep.max_dev = rep.max_dev.max(d);
            rep.min_dev = rep.min_dev.min(d);
        }
    }
    Ok(rep)
}

/// `H^1` norm of `n_h - n_exact`; `exact` returns the value and `grad[c][d]`.
pub fn h1_error(
    state: &DirectorState,
    exact: &(dyn Fn(Point) -> (Vec3, [[f64; 2]; 3]) + Sync),
    order: usize,
) -> Result<f64> {
    let tables = ReferenceTables::new(order)?;
    let space = &*state.space;
    let sum: f64 = (0..space.mesh.num_elements())
        .into_par_iter()
        .map(|e| {
            let fe = FeValues::new(space, e, &tables, false);
            let loc = local_coefficients(space, &state.coeffs, e);
            let mut s = 0.0;
            for q in 0..fe.jxw.len() {
                let k = Kinematics::new(&fe.q2_val[q], &fe.q2_grad[q], &loc);
                let (n, g) = exact(fe.x[q]);
                let mut err = 0.0;
                for c in 0..3 {
                    err += (k.n[c] - n[c]).powi(2);
                    err += (k.grad[c][0] - g[c][0]).powi(2) + (k.grad[c][1] - g[c][1]).powi(2);
                }
                s += fe.jxw[q] * err;
            }
            s
        })
        .collect::<Vec<_>>()
        .into_iter()
        .sum();
    Ok(sum.sqrt())
}

// Element-to-free-dof map: sorted free indices plus, per local dof, its
// expansion onto positions in that list.
#[derive(Debug, Clone)]
struct ElementMap {
    free: Vec<usize>,
    ptr: Vec<usize>,
    pos: Vec<usize>,
    w: Vec<f64>,
}

/// Condensed assembly of residuals and Jacobians on one space.
///
/// The sparsity pattern of `C^T J C` is built once; each assembly computes
/// element contributions in parallel and adds them in element order, so
/// results do not depend on thread scheduling.
#[derive(Debug, Clone)]
pub struct Assembler {
    pub space: Arc<FeSpace>,
    pub constraints: Arc<ConstraintSet>,
    tables: ReferenceTables,
    maps: Vec<ElementMap>,
    pattern: CsrMatrix,
}

const BATCH: usize = 2048;

struct Local {
    res: Vec<f64>,
    mat: Vec<f64>,
}

impl Assembler {
    pub fn new(space: Arc<FeSpace>, constraints: Arc<ConstraintSet>, cfg: &ProblemConfig) -> Result<Self> {
        if constraints.n_dofs() != space.n_dofs() {
            return Err(Error::Config("constraint set does not match the space".into()));
        }
        let tables = ReferenceTables::new(cfg.quadrature_order)?;
        let n_free = constraints.n_free();
        let mut maps = Vec::with_capacity(space.mesh.num_elements());
        let mut rows: Vec<Vec<usize>> = vec![Vec::new(); n_free];
        for e in 0..space.mesh.num_elements() {
            let dofs = space.element_dofs(e);
            let mut free: Vec<usize> =
                dofs.iter().flat_map(|&d| constraints.expansion(d).0.iter().copied()).collect();
            free.sort_unstable();
            free.dedup();
            let mut ptr = vec![0];
            let mut pos = Vec::new();
            let mut w = Vec::new();
            for &d in &dofs {
                let (idx, wt) = constraints.expansion(d);
                for (&j, &wj) in idx.iter().zip(wt) {
                    pos.push(free.binary_search(&j).unwrap());
                    w.push(wj);
                }
                ptr.push(pos.len());
            }
            for &r in &free {
                rows[r].extend_from_slice(&free);
            }
            maps.push(ElementMap { free, ptr, pos, w });
        }
        for r in rows.iter_mut() {
            r.sort_unstable();
            r.dedup();
        }
        let pattern = CsrMatrix::from_pattern(n_free, &rows);
        Ok(Assembler { space, constraints, tables, maps, pattern })
    }

    pub fn n_free(&self) -> usize {
        self.constraints.n_free()
    }

    /// Nonzeros of the condensed Jacobian.
    pub fn nnz(&self) -> usize {
        self.pattern.nnz()
    }

    /// Condensed residual `C^T R(u)`.
    pub fn residual(&self, cfg: &ProblemConfig, u: &[f64]) -> Vec<f64> {
        self.assemble(cfg, u, false).0
    }

    /// Condensed residual and Jacobian `C^T J(u) C`.
    pub fn residual_and_jacobian(&self, cfg: &ProblemConfig, u: &[f64]) -> (Vec<f64>, CsrMatrix) {
        let (r, j) = self.assemble(cfg, u, true);
        (r, j.expect("matrix requested"))
    }

    fn assemble(&self, cfg: &ProblemConfig, u: &[f64], with_matrix: bool) -> (Vec<f64>, Option<CsrMatrix>) {
        let ne = self.space.mesh.num_elements();
        let mut res = vec![0.0; self.n_free()];
        let mut mat = with_matrix.then(|| self.pattern.clone());
        let mut start = 0;
        while start < ne {
            let end = (start + BATCH).min(ne);
            let locals: Vec<Local> = (start..end)
                .into_par_iter()
                .map(|e| self.condensed_local(cfg, u, e, with_matrix))
                .collect();
            for (e, local) in (start..end).zip(locals) {
                let free = &self.maps[e].free;
                let m = free.len();
                for (p, &r) in free.iter().enumerate() {
                    res[r] += local.res[p];
                }
                if let Some(mat) = mat.as_mut() {
                    for (p, &r) in free.iter().enumerate() {
                        let lo = mat.row_ptr[r];
                        let hi = mat.row_ptr[r + 1];
                        let cols = &mat.col_idx[lo..hi];
                        let mut k = 0;
                        for (q, &c) in free.iter().enumerate() {
                            while cols[k] != c {
                                k += 1;
                            }
                            mat.values[lo + k] += local.mat[p * m + q];
                        }
                    }
                }
            }
            start = end;
        }
        (res, mat)
    }

    fn condensed_local(&self, cfg: &ProblemConfig, u: &[f64], e: usize, with_matrix: bool) -> Local {
        let (r, k) = element_kernel(&self.space, &self.tables, cfg, u, e, with_matrix);
        let map = &self.maps[e];
        let m = map.free.len();
        let nl = r.len();
        let mut res = vec![0.0; m];
        for i in 0..nl {
            for t in map.ptr[i]..map.ptr[i + 1] {
                res[map.pos[t]] += map.w[t] * r[i];
            }
        }
        let mut mat = Vec::new();
        if with_matrix {
            // (K E) then E^T (K E)
            let mut ke = vec![0.0; nl * m];
            for i in 0..nl {
                for j in 0..nl {
                    let kij = k[i * nl + j];
                    if kij == 0.0 {
                        continue;
                    }
                    for t in map.ptr[j]..map.ptr[j + 1] {
                        ke[i * m + map.pos[t]] += kij * map.w[t];
                    }
                }
            }
            mat = vec![0.0; m * m];
            for i in 0..nl {
                for t in map.ptr[i]..map.ptr[i + 1] {
                    let (p, w) = (map.pos[t], map.w[t]);
                    let row = &ke[i * m..(i + 1) * m];
                    let out = &mut mat[p * m..(p + 1) * m];
                    for q in 0..m {
                        out[q] += w * row[q];
                    }
                }
            }
        }
        Local { res, mat }
    }
}

/// Unconstrained local residual and (optionally) Jacobian of element `e`.
fn element_kernel(
    space: &FeSpace,
    tables: &ReferenceTables,
    cfg: &ProblemConfig,
    u: &[f64],
    e: usize,
    with_matrix: bool,
) -> (Vec<f64>, Vec<f64>) {
    let lagr = space.with_multiplier && cfg.formulation == Formulation::Lagrangian;
    let nl = if space.with_multiplier { 31 } else { 27 };
    let fe = FeValues::new(space, e, tables, false);
    let loc = local_coefficients(space, u, e);
    let mut r = vec![0.0; nl];
    let mut k = if with_matrix { vec![0.0; nl * nl] } else { Vec::new() };
    let (k1, k2, k3, t0, zeta) = (cfg.k1, cfg.k2, cfg.k3, cfg.t0, cfg.zeta);
    let mut phi = [0.0; 27];
    let mut dv = [0.0; 27];
    let mut cv = [[0.0; 3]; 27];
    let mut sig = [0.0; 27];
    let mut vn = [0.0; 27];
    let mut vc = [0.0; 27];
    for q in 0..fe.jxw.len() {
        let jxw = fe.jxw[q];
        let kin = Kinematics::new(&fe.q2_val[q], &fe.q2_grad[q], &loc);
        let lam = if lagr { multiplier_at(&fe.q1_val[q], &loc) } else { 0.0 };
        let g = kin.nn - 1.0;
        for i in 0..27 {
            let (c, a) = (i / 9, i % 9);
            let gr = fe.q2_grad[q][a];
            phi[i] = fe.q2_val[q][a];
            dv[i] = if c < 2 { gr[c] } else { 0.0 };
            cv[i] = basis_curl(c, gr);
            vc[i] = phi[i] * kin.curl[c];
            vn[i] = phi[i] * kin.n[c];
            sig[i] = vc[i] + dot(kin.n, cv[i]);
            let mut ri = k1 * kin.div * dv[i]
                + k3 * dot(kin.curl, cv[i])
                + (k2 - k3) * kin.s * sig[i]
                + k2 * t0 * sig[i];
            ri += if lagr { lam * vn[i] } else { 2.0 * zeta * vn[i] * g };
            r[i] += jxw * ri;
        }
        if lagr {
            for b in 0..4 {
                r[27 + b] += jxw * 0.5 * fe.q1_val[q][b] * g;
            }
        }
        if !with_matrix {
            continue;
        }
        for i in 0..27 {
            let ci = i / 9;
            for j in i..27 {
                let cj = j / 9;
                // v_i . curl v_j and v_j . curl v_i
                let vi_cj = phi[i] * cv[j][ci];
                let vj_ci = phi[j] * cv[i][cj];
                let vv = if ci == cj { phi[i] * phi[j] } else { 0.0 };
                let mut kij = k1 * dv[i] * dv[j]
                    + k3 * dot(cv[i], cv[j])
                    + (k2 - k3) * (sig[i] * sig[j] + kin.s * (vi_cj + vj_ci))
                    + k2 * t0 * (vi_cj + vj_ci);
                kij += if lagr { lam * vv } else { 2.0 * zeta * (vv * g + 2.0 * vn[i] * vn[j]) };
                k[i * nl + j] += jxw * kij;
            }
        }
        if lagr {
            for b in 0..4 {
                let psi = fe.q1_val[q][b];
                for i in 0..27 {
                    k[i * nl + 27 + b] += jxw * psi * vn[i];
                }
            }
        }
    }
    if with_matrix {
        for i in 0..nl {
            for j in 0..i {
                k[i * nl + j] = k[j * nl + i];
            }
        }
    }
    (r, k)
}

fn require(cfg: &ProblemConfig, f: Formulation) -> Result<()> {
    if cfg.formulation != f {
        return Err(Error::Config(format!("operation requires the {f} formulation")));
    }
    Ok(())
}

pub fn residual_penalty(state: &DirectorState, cfg: &ProblemConfig, asm: &Assembler) -> Result<Vec<f64>> {
    require(cfg, Formulation::Penalty)?;
    Ok(asm.residual(cfg, &state.coeffs))
}

pub fn jacobian_penalty(state: &DirectorState, cfg: &ProblemConfig, asm: &Assembler) -> Result<CsrMatrix> {
    require(cfg, Formulation::Penalty)?;
    Ok(asm.residual_and_jacobian(cfg, &state.coeffs).1)
}

pub fn residual_lagrangian(state: &DirectorState, cfg: &ProblemConfig, asm: &Assembler) -> Result<Vec<f64>> {
    require(cfg, Formulation::Lagrangian)?;
    Ok(asm.residual(cfg, &state.coeffs))
}

pub fn jacobian_lagrangian(state: &DirectorState, cfg: &ProblemConfig, asm: &Assembler) -> Result<CsrMatrix> {
    require(cfg, Formulation::Lagrangian)?;
    Ok(asm.residual_and_jacobian(cfg, &state.coeffs).1)
}
