//! Residual-based element error indicators.
//!
//! `Theta_T^2 = h_T^2 |r|_T^2 + sum_E h_E |j_E|_E^2 (+ |n.n - 1|_T^2)`, where
//! `r` is the strong residual, `j_E` the flux jump over an interior edge and
//! the last term is present for the Lagrangian formulation only. Each
//! interior edge contributes to both of its elements.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::fem::shape::{shape_unchecked, ElementKind, Q1_NODES};
use crate::fem::space::{FeValues, ReferenceTables};
use crate::fem::{gauss_1d, FeSpace};
use crate::mesh::FaceKind;
use crate::physics::{cross, dot, local_coefficients, multiplier_at, DirectorState, Formulation, ProblemConfig};
use crate::{Error, Point, Result, Vec3};

/// Gauss points per (sub-)edge.
pub const EDGE_POINTS: usize = 4;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ElementEstimates {
    pub theta: Vec<f64>,
    pub interior: Vec<f64>,
    pub jump: Vec<f64>,
    /// Zero for the penalty formulation.
    pub constraint: Vec<f64>,
    pub global: f64,
}

impl ElementEstimates {
    pub fn len(&self) -> usize {
        self.theta.len()
    }

    pub fn is_empty(&self) -> bool {
        self.theta.is_empty()
    }

    pub fn max(&self) -> f64 {
        self.theta.iter().cloned().fold(0.0, f64::max)
    }
}

/// Director value, gradient `g[c][d]` and Hessian `h[c][i][j]` at a point.
#[derive(Debug, Clone, Copy)]
pub struct PointJet {
    pub n: Vec3,
    pub grad: [[f64; 2]; 3],
    pub hess: [[[f64; 2]; 2]; 3],
    pub lambda: f64,
}

fn curl_of(g: &[[f64; 2]; 3]) -> Vec3 {
    [g[2][1], -g[2][0], g[1][0] - g[0][1]]
}

/// Strong residual from pointwise derivatives.
pub fn strong_residual_from(jet: &PointJet, cfg: &ProblemConfig) -> Vec3 {
    let (n, g, h) = (jet.n, &jet.grad, &jet.hess);
    let c = curl_of(g);
    let s = dot(n, c);
    let nn = dot(n, n);
    let omk = 1.0 - cfg.kappa();
    // d/dx_d of curl n, of s and of Zc = c - (1 - kappa) s n
    let mut zc_d = [[0.0; 3]; 2];
    for d in 0..2 {
        let dc = [h[2][1][d], -h[2][0][d], h[1][0][d] - h[0][1][d]];
        let dn = [g[0][d], g[1][d], g[2][d]];
        let ds = dot(dn, c) + dot(n, dc);
        for i in 0..3 {
            zc_d[d][i] = dc[i] - omk * (ds * n[i] + s * dn[i]);
        }
    }
    let curl_zc = [zc_d[1][2], -zc_d[0][2], zc_d[0][1] - zc_d[1][0]];
    let grad_div = [h[0][0][0] + h[1][1][0], h[0][0][1] + h[1][1][1]];
    let constraint = match cfg.formulation {
        Formulation::Penalty => 2.0 * cfg.zeta * (nn - 1.0),
        Formulation::Lagrangian => jet.lambda,
    };
    let mut r = [0.0; 3];
    for i in 0..3 {
        let gd = if i < 2 { grad_div[i] } else { 0.0 };
        r[i] = -cfg.k1 * gd
            + cfg.k3 * curl_zc[i]
            + (cfg.k2 - cfg.k3) * s * c[i]
            + 2.0 * cfg.k2 * cfg.t0 * c[i]
            + constraint * n[i];
    }
    r
}

/// Flux `K1 div(n) eta + K3 (Z curl n) x eta` for an in-plane normal.
pub fn flux(n: Vec3, grad: &[[f64; 2]; 3], eta: Point, cfg: &ProblemConfig) -> Vec3 {
    let c = curl_of(grad);
    let div = grad[0][0] + grad[1][1];
    let zc = crate::physics::z_apply(n, cfg.kappa(), c);
    let t = cross(zc, [eta[0], eta[1], 0.0]);
    [cfg.k1 * div * eta[0] + cfg.k3 * t[0], cfg.k1 * div * eta[1] + cfg.k3 * t[1], cfg.k3 * t[2]]
}

fn jet_at(space: &FeSpace, loc: &[f64], e: usize, xi: Point, hessians: bool) -> PointJet {
    let geo = space.geometry(e, xi);
    let s = shape_unchecked(ElementKind::Q2, xi);
    let mut jet = PointJet { n: [0.0; 3], grad: [[0.0; 2]; 3], hess: [[[0.0; 2]; 2]; 3], lambda: 0.0 };
    for a in 0..9 {
        let g = geo.grad(s.grads[a]);
        let h = if hessians { geo.hessian(s.grads[a], s.hessians[a]) } else { [[0.0; 2]; 2] };
        for c in 0..3 {
            let u = loc[c * 9 + a];
            jet.n[c] += s.values[a] * u;
            for i in 0..2 {
                jet.grad[c][i] += g[i] * u;
                for j in 0..2 {
                    jet.hess[c][i][j] += h[i][j] * u;
                }
            }
        }
    }
    if loc.len() == 31 {
        let s1 = shape_unchecked(ElementKind::Q1, xi);
        jet.lambda = multiplier_at(&[s1.values[0], s1.values[1], s1.values[2], s1.values[3]], loc);
    }
    jet
}

/// Strong residual at reference point `xi` of element `e`.
pub fn strong_residual(state: &DirectorState, cfg: &ProblemConfig, e: usize, xi: Point) -> Vec3 {
    let loc = local_coefficients(&state.space, &state.coeffs, e);
    strong_residual_from(&jet_at(&state.space, &loc, e, xi, true), cfg)
}

fn edge_reference_point(local_edge: usize, sigma: f64) -> Point {
    let a = Q1_NODES[local_edge];
    let b = Q1_NODES[(local_edge + 1) % 4];
    [a[0] + sigma * (b[0] - a[0]), a[1] + sigma * (b[1] - a[1])]
}

/// Jump `F_A(eta) - F_B(eta)` at the edge Gauss points, `eta` the outward
/// normal of the face's first side. Returns the points' face parameters too.
pub fn edge_jump(state: &DirectorState, cfg: &ProblemConfig, face: usize) -> Result<Vec<(f64, Vec3)>> {
    let mesh = &state.space.mesh;
    let f = mesh.edges.get(face).ok_or_else(|| Error::Config(format!("no edge {face}")))?;
    if f.kind == FaceKind::Boundary || !f.is_interior() {
        return Err(Error::BoundaryEdge(face));
    }
    let (ts, _) = gauss_1d(EDGE_POINTS)?;
    let eta = mesh.face_normal(face, 0);
    let locs: Vec<Vec<f64>> =
        f.sides.iter().map(|sd| local_coefficients(&state.space, &state.coeffs, sd.element)).collect();
    Ok(ts
        .iter()
        .map(|&t| {
            let mut fl = [[0.0; 3]; 2];
            for (i, sd) in f.sides.iter().enumerate() {
                let sigma = sd.s[0] + t * (sd.s[1] - sd.s[0]);
                let xi = edge_reference_point(sd.local_edge as usize, sigma);
                let jet = jet_at(&state.space, &locs[i], sd.element, xi, false);
                fl[i] = flux(jet.n, &jet.grad, eta, cfg);
            }
            (t, [fl[0][0] - fl[1][0], fl[0][1] - fl[1][1], fl[0][2] - fl[1][2]])
        })
        .collect())
}

/// `h_E |j_E|^2_E` of an interior face.
fn edge_term(state: &DirectorState, cfg: &ProblemConfig, face: usize, weights: &[f64]) -> Result<f64> {
    let len = state.space.mesh.face_length(face);
    let jumps = edge_jump(state, cfg, face)?;
    let norm2: f64 = jumps.iter().zip(weights).map(|((_, j), w)| w * dot(*j, *j)).sum::<f64>() * len;
    Ok(len * norm2)
}

pub fn estimate(state: &DirectorState, cfg: &ProblemConfig) -> Result<ElementEstimates> {
    let space = &*state.space;
    let mesh = &space.mesh;
    let tables = ReferenceTables::new(cfg.quadrature_order)?;
    let lagr = cfg.formulation == Formulation::Lagrangian;
    let ne = mesh.num_elements();

    let volume: Vec<(f64, f64)> = (0..ne)
        .into_par_iter()
        .map(|e| {
            let fe = FeValues::new(space, e, &tables, false);
            let loc = local_coefficients(space, &state.coeffs, e);
            let mut r2 = 0.0;
            let mut c2 = 0.0;
            for q in 0..fe.jxw.len() {
                let xi = tables.quad.points[q];
                let jet = jet_at(space, &loc, e, xi, true);
                let r = strong_residual_from(&jet, cfg);
                r2 += fe.jxw[q] * dot(r, r);
                if lagr {
                    c2 += fe.jxw[q] * (dot(jet.n, jet.n) - 1.0).powi(2);
                }
            }
            let h = mesh.h_element(e);
            (h * h * r2, c2)
        })
        .collect();

    let (_, w) = gauss_1d(EDGE_POINTS)?;
    let interior_faces: Vec<usize> = (0..mesh.edges.len()).filter(|&f| mesh.edges[f].is_interior()).collect();
    let edge_terms: Vec<f64> = interior_faces
        .par_iter()
        .map(|&f| edge_term(state, cfg, f, &w))
        .collect::<Result<Vec<_>>>()?;

    let mut jump = vec![0.0; ne];
    for (&f, &t) in interior_faces.iter().zip(&edge_terms) {
        for sd in &mesh.edges[f].sides {
            jump[sd.element] += t;
        }
    }
    let interior: Vec<f64> = volume.iter().map(|v| v.0).collect();
    let constraint: Vec<f64> = volume.iter().map(|v| v.1).collect();
    let theta: Vec<f64> = (0..ne).map(|e| (interior[e] + jump[e] + constraint[e]).sqrt()).collect();
    let global = theta.iter().map(|t| t * t).sum::<f64>().sqrt();
    Ok(ElementEstimates { theta, interior, jump, constraint, global })
}
