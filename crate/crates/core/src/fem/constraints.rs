use super::space::FeSpace;
use crate::mesh::{EdgeRef, FaceKind};
use crate::{Error, Point, Result, Vec3};

/// Affine constraint `u_i = sum_j w_j u_j + inhomogeneity`.
#[derive(Debug, Clone, PartialEq)]
pub struct Constraint {
    pub entries: Vec<(usize, f64)>,
    pub inhomogeneity: f64,
}

/// Dirichlet and hanging-node constraints on a space, closed so that every
/// master dof is unconstrained.
#[derive(Debug, Clone)]
pub struct ConstraintSet {
    n_dofs: usize,
    lines: Vec<Option<Constraint>>,
    free_index: Vec<usize>,
    free_dofs: Vec<usize>,
    // expansion of every dof onto free dofs, CSR layout
    exp_ptr: Vec<usize>,
    exp_idx: Vec<usize>,
    exp_w: Vec<f64>,
}

// Q2 trace weights of the hanging quarter points on a coarse edge a-m-b.
const QUARTER: [f64; 3] = [0.375, 0.75, -0.125];
const THREE_QUARTER: [f64; 3] = [-0.125, 0.75, 0.375];

/// Builds the constraints of `space`: nodal interpolation of `g` on every
/// boundary director dof, quadratic edge interpolation for hanging Q2 nodes
/// and midpoint interpolation for hanging Q1 multiplier nodes.
pub fn build_constraints(space: &FeSpace, g: &dyn Fn(Point) -> Vec3) -> Result<ConstraintSet> {
    let mesh = &space.mesh;
    let mut lines: Vec<Option<Constraint>> = vec![None; space.n_dofs()];

    for face in mesh.edges.iter().filter(|f| f.kind == FaceKind::Boundary) {
        let side = face.sides[0];
        let e = side.element;
        let k = side.local_edge as usize;
        for a in [k, 4 + k, (k + 1) % 4] {
            let node = space.elem_q2[e][a];
            let val = g(space.q2_points[node]);
            for (c, &v) in val.iter().enumerate() {
                lines[space.director_dof(c, node)] = Some(Constraint { entries: Vec::new(), inhomogeneity: v });
            }
        }
    }

    for (e, el) in mesh.elements.iter().enumerate() {
        for k in 0..4 {
            let EdgeRef::Split(m) = mesh.edge_refs[e][k] else { continue };
            let (a, b) = (el.vertices[k], el.vertices[(k + 1) % 4]);
            let sub = |p: usize, q: usize| {
                mesh.edge_between(p, q)
                    .map(|f| space.edge_node(f))
                    .ok_or_else(|| Error::Construction(format!("missing sub-edge ({p}, {q})")))
            };
            let (qa, qb) = (sub(a, m)?, sub(m, b)?);
            for c in 0..3 {
                let masters = [space.director_dof(c, a), space.director_dof(c, m), space.director_dof(c, b)];
                for (q, w) in [(qa, QUARTER), (qb, THREE_QUARTER)] {
                    lines[space.director_dof(c, q)] = Some(Constraint {
                        entries: masters.iter().copied().zip(w).collect(),
                        inhomogeneity: 0.0,
                    });
                }
            }
            if space.with_multiplier {
                lines[space.multiplier_dof(m)] = Some(Constraint {
                    entries: vec![(space.multiplier_dof(a), 0.5), (space.multiplier_dof(b), 0.5)],
                    inhomogeneity: 0.0,
                });
            }
        }
    }

    ConstraintSet::from_lines(lines)
}

impl ConstraintSet {
    /// Closes raw constraint lines and builds the free-dof numbering.
    pub fn from_lines(mut lines: Vec<Option<Constraint>>) -> Result<ConstraintSet> {
        let n = lines.len();
        let mut pass = 0;
        loop {
            let mut changed = false;
            for i in 0..n {
                let Some(line) = &lines[i] else { continue };
                if line.entries.iter().all(|&(j, _)| lines[j].is_none()) {
                    continue;
                }
                let mut entries: Vec<(usize, f64)> = Vec::new();
                let mut inhom = line.inhomogeneity;
                for &(j, w) in &line.entries {
                    match &lines[j] {
                        None => entries.push((j, w)),
                        Some(master) => {
                            inhom += w * master.inhomogeneity;
                            entries.extend(master.entries.iter().map(|&(k, wk)| (k, w * wk)));
                        }
                    }
                }
                entries.sort_by_key(|&(j, _)| j);
                let mut merged: Vec<(usize, f64)> = Vec::with_capacity(entries.len());
                for (j, w) in entries {
                    match merged.last_mut() {
                        Some(last) if last.0 == j => last.1 += w,
                        _ => merged.push((j, w)),
                    }
                }
                if merged.iter().any(|&(j, _)| j == i) {
                    return Err(Error::Construction(format!("constraint cycle through dof {i}")));
                }
                lines[i] = Some(Constraint { entries: merged, inhomogeneity: inhom });
                changed = true;
            }
            if !changed {
                break;
            }
            pass += 1;
            if pass > 16 {
                return Err(Error::Construction("constraint closure did not terminate".into()));
            }
        }

        let mut free_index = vec![usize::MAX; n];
        let mut free_dofs = Vec::new();
        for i in 0..n {
            if lines[i].is_none() {
                free_index[i] = free_dofs.len();
                free_dofs.push(i);
            }
        }
        let mut exp_ptr = Vec::with_capacity(n + 1);
        let mut exp_idx = Vec::new();
        let mut exp_w = Vec::new();
        exp_ptr.push(0);
        for i in 0..n {
            match &lines[i] {
                None => {
                    exp_idx.push(free_index[i]);
                    exp_w.push(1.0);
                }
                Some(line) => {
                    for &(j, w) in &line.entries {
                        exp_idx.push(free_index[j]);
                        exp_w.push(w);
                    }
                }
            }
            exp_ptr.push(exp_idx.len());
        }
        Ok(ConstraintSet { n_dofs: n, lines, free_index, free_dofs, exp_ptr, exp_idx, exp_w })
    }

    pub fn n_dofs(&self) -> usize {
        self.n_dofs
    }

    pub fn n_free(&self) -> usize {
        self.free_dofs.len()
    }

    pub fn free_dofs(&self) -> &[usize] {
        &self.free_dofs
    }

    pub fn is_constrained(&self, dof: usize) -> bool {
        self.lines[dof].is_some()
    }

    pub fn line(&self, dof: usize) -> Option<&Constraint> {
        self.lines[dof].as_ref()
    }

    pub fn free_index(&self, dof: usize) -> Option<usize> {
        let i = self.free_index[dof];
        (i != usize::MAX).then_some(i)
    }

    /// Free-dof expansion `(free indices, weights)` of a dof.
    #[inline]
    pub fn expansion(&self, dof: usize) -> (&[usize], &[f64]) {
        let (lo, hi) = (self.exp_ptr[dof], self.exp_ptr[dof + 1]);
        (&self.exp_idx[lo..hi], &self.exp_w[lo..hi])
    }

    pub fn n_hanging(&self) -> usize {
        self.lines.iter().flatten().filter(|l| !l.entries.is_empty()).count()
    }

    /// Overwrites every constrained entry of `u` from its masters.
    pub fn apply(&self, u: &mut [f64]) {
        for (i, line) in self.lines.iter().enumerate() {
            if let Some(line) = line {
                u[i] = line.inhomogeneity + line.entries.iter().map(|&(j, w)| w * u[j]).sum::<f64>();
            }
        }
    }

    /// `C^T r`: folds a full-length dual vector onto the free dofs.
    pub fn condense(&self, full: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.n_free()];
        for (i, &r) in full.iter().enumerate() {
            if r == 0.0 {
                continue;
            }
            let (idx, w) = self.expansion(i);
            for (&j, &wj) in idx.iter().zip(w) {
                out[j] += wj * r;
            }
        }
        out
    }

    /// Extracts the free entries of a full primal vector.
    pub fn restrict(&self, full: &[f64]) -> Vec<f64> {
        self.free_dofs.iter().map(|&i| full[i]).collect()
    }

    /// Full primal vector from free values, constraints applied.
    pub fn extend(&self, free: &[f64], template: &[f64]) -> Vec<f64> {
        let mut u = template.to_vec();
        for (k, &i) in self.free_dofs.iter().enumerate() {
            u[i] = free[k];
        }
        self.apply(&mut u);
        u
    }

    /// Homogeneous expansion `C x` of a free-dof update.
    pub fn expand_update(&self, free: &[f64]) -> Vec<f64> {
        (0..self.n_dofs)
            .map(|i| {
                let (idx, w) = self.expansion(i);
                idx.iter().zip(w).map(|(&j, &wj)| wj * free[j]).sum()
            })
            .collect()
    }
}
