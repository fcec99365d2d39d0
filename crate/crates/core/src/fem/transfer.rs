use super::constraints::ConstraintSet;
use super::shape::{Q1_NODES, Q2_NODES};
use super::space::FeSpace;
use crate::{Error, Result};

/// Interpolates a coarse solution onto a once-refined (or identical) mesh.
///
/// Every fine node is located through its element's origin, so the result
/// reproduces the coarse field exactly before `fine_constraints` overwrite
/// boundary and hanging values.
pub fn transfer(
    coarse: &FeSpace,
    coarse_coeffs: &[f64],
    fine: &FeSpace,
    fine_constraints: &ConstraintSet,
) -> Result<Vec<f64>> {
    let (cm, fm) = (&coarse.mesh, &fine.mesh);
    let same = cm.id() == fm.id();
    if !same && fm.parent_id() != Some(cm.id()) {
        return Err(Error::NotNested(format!(
            "mesh {} is not a refinement of mesh {}",
            fm.id(),
            cm.id()
        )));
    }
    if coarse_coeffs.len() != coarse.n_dofs() {
        return Err(Error::NotNested(format!(
            "coefficient length {} does not match {} dofs",
            coarse_coeffs.len(),
            coarse.n_dofs()
        )));
    }
    let mut u = vec![0.0; fine.n_dofs()];
    let mut done = vec![false; fine.n_q2];
    let mut done_q1 = vec![false; fine.n_q1()];
    for (e, el) in fm.elements.iter().enumerate() {
        let origin = if same { crate::mesh::Origin { coarse: e, child: None } } else { el.origin };
        for (a, &node) in fine.elem_q2[e].iter().enumerate() {
            if done[node] {
                continue;
            }
            done[node] = true;
            let n = coarse.eval_director(coarse_coeffs, origin.coarse, origin.to_coarse(Q2_NODES[a]));
            for c in 0..3 {
                u[fine.director_dof(c, node)] = n[c];
            }
        }
        if fine.with_multiplier && coarse.with_multiplier {
            for (a, &v) in el.vertices.iter().enumerate() {
                if done_q1[v] {
                    continue;
                }
                done_q1[v] = true;
                u[fine.multiplier_dof(v)] =
                    coarse.eval_multiplier(coarse_coeffs, origin.coarse, origin.to_coarse(Q1_NODES[a]));
            }
        }
    }
    fine_constraints.apply(&mut u);
    Ok(u)
}
