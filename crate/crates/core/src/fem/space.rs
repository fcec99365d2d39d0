use std::sync::Arc;

use super::quadrature::{quadrature, Quadrature};
use super::shape::{shape_unchecked, ElementKind, Shape, Q2_NODES};
use crate::mesh::{bilinear, bilinear_jacobian, EdgeRef, Mesh};
use crate::{Point, Result, Vec3};

/// Q2 director space (three components) with an optional Q1 multiplier.
///
/// Q2 nodes are numbered vertices first (by vertex id), then unsplit edges,
/// then cells. Director dofs are component-major (`c * n_q2 + node`); the
/// multiplier dofs follow as `3 * n_q2 + vertex`.
#[derive(Debug, Clone)]
pub struct FeSpace {
    pub mesh: Arc<Mesh>,
    pub n_q2: usize,
    pub q2_points: Vec<Point>,
    pub elem_q2: Vec<[usize; 9]>,
    pub with_multiplier: bool,
}

impl FeSpace {
    pub fn new(mesh: Arc<Mesh>, with_multiplier: bool) -> FeSpace {
        let nv = mesh.num_vertices();
        let ne_edges = mesh.edges.len();
        let n_q2 = nv + ne_edges + mesh.num_elements();
        let mut q2_points = Vec::with_capacity(n_q2);
        q2_points.extend_from_slice(&mesh.vertices);
        for f in &mesh.edges {
            let (a, b) = (mesh.vertices[f.vertices[0]], mesh.vertices[f.vertices[1]]);
            q2_points.push([0.5 * (a[0] + b[0]), 0.5 * (a[1] + b[1])]);
        }
        let mut elem_q2 = Vec::with_capacity(mesh.num_elements());
        for (e, el) in mesh.elements.iter().enumerate() {
            q2_points.push(bilinear(&mesh.element_points(e), [0.5, 0.5]));
            let mut d = [0usize; 9];
            for k in 0..4 {
                d[k] = el.vertices[k];
                d[4 + k] = match mesh.edge_refs[e][k] {
                    EdgeRef::Whole(f) => nv + f,
                    EdgeRef::Split(m) => m,
                };
            }
            d[8] = nv + ne_edges + e;
            elem_q2.push(d);
        }
        FeSpace { mesh, n_q2, q2_points, elem_q2, with_multiplier }
    }

    pub fn n_q1(&self) -> usize {
        self.mesh.num_vertices()
    }

    pub fn n_director_dofs(&self) -> usize {
        3 * self.n_q2
    }

    pub fn n_dofs(&self) -> usize {
        3 * self.n_q2 + if self.with_multiplier { self.n_q1() } else { 0 }
    }

    #[inline]
    pub fn director_dof(&self, comp: usize, node: usize) -> usize {
        comp * self.n_q2 + node
    }

    #[inline]
    pub fn multiplier_dof(&self, vertex: usize) -> usize {
        3 * self.n_q2 + vertex
    }

    pub fn edge_node(&self, edge: usize) -> usize {
        self.mesh.num_vertices() + edge
    }

    /// Global dofs of element `e`: 27 director dofs ordered `c * 9 + a`,
    /// followed by the 4 multiplier dofs when present.
    pub fn element_dofs(&self, e: usize) -> Vec<usize> {
        let mut d = Vec::with_capacity(31);
        for c in 0..3 {
            for a in 0..9 {
                d.push(self.director_dof(c, self.elem_q2[e][a]));
            }
        }
        if self.with_multiplier {
            for v in self.mesh.elements[e].vertices {
                d.push(self.multiplier_dof(v));
            }
        }
        d
    }

    pub fn geometry(&self, e: usize, xi: Point) -> ElementGeometry {
        ElementGeometry::new(&self.mesh.element_points(e), xi)
    }

    /// Director value at reference point `xi` of element `e`.
    pub fn eval_director(&self, coeffs: &[f64], e: usize, xi: Point) -> Vec3 {
        let s = shape_unchecked(ElementKind::Q2, xi);
        let mut n = [0.0; 3];
        for (a, &node) in self.elem_q2[e].iter().enumerate() {
            for (c, nc) in n.iter_mut().enumerate() {
                *nc += s.values[a] * coeffs[self.director_dof(c, node)];
            }
        }
        n
    }

    pub fn eval_multiplier(&self, coeffs: &[f64], e: usize, xi: Point) -> f64 {
        let s = shape_unchecked(ElementKind::Q1, xi);
        self.mesh.elements[e]
            .vertices
            .iter()
            .enumerate()
            .map(|(a, &v)| s.values[a] * coeffs[self.multiplier_dof(v)])
            .sum()
    }

    /// Nodal interpolant of a director-valued function (multiplier left 0).
    pub fn interpolate(&self, f: impl Fn(Point) -> Vec3) -> Vec<f64> {
        let mut u = vec![0.0; self.n_dofs()];
        for (node, &p) in self.q2_points.iter().enumerate() {
            let v = f(p);
            for c in 0..3 {
                u[self.director_dof(c, node)] = v[c];
            }
        }
        u
    }

    /// Reference coordinates of each Q2 node inside the first element using it.
    pub fn node_owners(&self) -> Vec<(usize, Point)> {
        let mut owner = vec![(usize::MAX, [0.0, 0.0]); self.n_q2];
        for (e, dofs) in self.elem_q2.iter().enumerate() {
            for (a, &node) in dofs.iter().enumerate() {
                if owner[node].0 == usize::MAX {
                    owner[node] = (e, Q2_NODES[a]);
                }
            }
        }
        owner
    }
}

/// Bilinear map data at one reference point.
#[derive(Debug, Clone, Copy)]
pub struct ElementGeometry {
    pub x: Point,
    /// `jac[i][a] = dx_i / dxi_a`
    pub jac: [[f64; 2]; 2],
    pub det: f64,
    /// `inv[a][i] = dxi_a / dx_i`
    pub inv: [[f64; 2]; 2],
    /// `d^2 x / (ds dt)`, the only nonzero second derivative of the map.
    pub mixed: Point,
}

impl ElementGeometry {
    pub fn new(p: &[Point; 4], xi: Point) -> Self {
        let jac = bilinear_jacobian(p, xi);
        let det = jac[0][0] * jac[1][1] - jac[0][1] * jac[1][0];
        let inv = [[jac[1][1] / det, -jac[0][1] / det], [-jac[1][0] / det, jac[0][0] / det]];
        let mixed = [
            p[0][0] - p[1][0] + p[2][0] - p[3][0],
            p[0][1] - p[1][1] + p[2][1] - p[3][1],
        ];
        ElementGeometry { x: bilinear(p, xi), jac, det, inv, mixed }
    }

    #[inline]
    pub fn grad(&self, g: [f64; 2]) -> [f64; 2] {
        [
            g[0] * self.inv[0][0] + g[1] * self.inv[1][0],
            g[0] * self.inv[0][1] + g[1] * self.inv[1][1],
        ]
    }

    /// Physical Hessian from reference gradient and Hessian, including the
    /// curvature of the bilinear map.
    pub fn hessian(&self, g: [f64; 2], h: [[f64; 2]; 2]) -> [[f64; 2]; 2] {
        let pg = self.grad(g);
        let corr = pg[0] * self.mixed[0] + pg[1] * self.mixed[1];
        let mut hr = h;
        hr[0][1] -= corr;
        hr[1][0] -= corr;
        let mut out = [[0.0; 2]; 2];
        for i in 0..2 {
            for j in 0..2 {
                let mut s = 0.0;
                for a in 0..2 {
                    for b in 0..2 {
                        s += self.inv[a][i] * self.inv[b][j] * hr[a][b];
                    }
                }
                out[i][j] = s;
            }
        }
        out
    }
}

/// Shape tables at the points of a quadrature rule.
#[derive(Debug, Clone)]
pub struct ReferenceTables {
    pub quad: Quadrature,
    pub q2: Vec<Shape>,
    pub q1: Vec<Shape>,
}

impl ReferenceTables {
    pub fn new(order: usize) -> Result<Self> {
        let quad = quadrature(order)?;
        Ok(Self::from_points(quad))
    }

    pub fn from_points(quad: Quadrature) -> Self {
        let q2 = quad.points.iter().map(|&p| shape_unchecked(ElementKind::Q2, p)).collect();
        let q1 = quad.points.iter().map(|&p| shape_unchecked(ElementKind::Q1, p)).collect();
        ReferenceTables { quad, q2, q1 }
    }
}

/// Physical shape data of one element at all quadrature points.
#[derive(Debug, Clone)]
pub struct FeValues {
    pub jxw: Vec<f64>,
    pub x: Vec<Point>,
    pub q2_val: Vec<[f64; 9]>,
    pub q2_grad: Vec<[[f64; 2]; 9]>,
    pub q2_hess: Vec<[[[f64; 2]; 2]; 9]>,
    pub q1_val: Vec<[f64; 4]>,
}

impl FeValues {
    pub fn new(space: &FeSpace, e: usize, tables: &ReferenceTables, with_hessians: bool) -> Self {
        let p = space.mesh.element_points(e);
        let nq = tables.quad.len();
        let mut fe = FeValues {
            jxw: Vec::with_capacity(nq),
            x: Vec::with_capacity(nq),
            q2_val: Vec::with_capacity(nq),
            q2_grad: Vec::with_capacity(nq),
            q2_hess: Vec::new(),
            q1_val: Vec::with_capacity(nq),
        };
        for q in 0..nq {
            let geo = ElementGeometry::new(&p, tables.quad.points[q]);
            fe.jxw.push(geo.det * tables.quad.weights[q]);
            fe.x.push(geo.x);
            let s = &tables.q2[q];
            let mut val = [0.0; 9];
            let mut grad = [[0.0; 2]; 9];
            let mut hess = [[[0.0; 2]; 2]; 9];
            for a in 0..9 {
                val[a] = s.values[a];
                grad[a] = geo.grad(s.grads[a]);
                if with_hessians {
                    hess[a] = geo.hessian(s.grads[a], s.hessians[a]);
                }
            }
            fe.q2_val.push(val);
            fe.q2_grad.push(grad);
            if with_hessians {
                fe.q2_hess.push(hess);
            }
            let s1 = &tables.q1[q];
            fe.q1_val.push([s1.values[0], s1.values[1], s1.values[2], s1.values[3]]);
        }
        fe
    }
}
