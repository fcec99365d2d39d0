use crate::{Error, Point, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ElementKind {
    Q1,
    Q2,
}

/// Reference node positions of the Q1 element: the four corners, CCW.
pub const Q1_NODES: [Point; 4] = [[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [0.0, 1.0]];

/// Reference node positions of the Q2 element: corners (CCW), edge
/// midpoints (edge `k` joins corners `k` and `k+1`), then the centre.
pub const Q2_NODES: [Point; 9] = [
    [0.0, 0.0],
    [1.0, 0.0],
    [1.0, 1.0],
    [0.0, 1.0],
    [0.5, 0.0],
    [1.0, 0.5],
    [0.5, 1.0],
    [0.0, 0.5],
    [0.5, 0.5],
];

// (ix, iy) index of each node into the 1D bases
const Q2_IJ: [(usize, usize); 9] = [(0, 0), (2, 0), (2, 2), (0, 2), (1, 0), (2, 1), (1, 2), (0, 1), (1, 1)];
const Q1_IJ: [(usize, usize); 4] = [(0, 0), (1, 0), (1, 1), (0, 1)];

impl ElementKind {
    pub fn n_nodes(self) -> usize {
        match self {
            ElementKind::Q1 => 4,
            ElementKind::Q2 => 9,
        }
    }

    pub fn nodes(self) -> &'static [Point] {
        match self {
            ElementKind::Q1 => &Q1_NODES,
            ElementKind::Q2 => &Q2_NODES,
        }
    }

    /// Local nodes lying on local edge `k`, in edge order (start, [mid,] end).
    pub fn edge_nodes(self, k: usize) -> Vec<usize> {
        match self {
            ElementKind::Q1 => vec![k, (k + 1) % 4],
            ElementKind::Q2 => vec![k, 4 + k, (k + 1) % 4],
        }
    }
}

/// Values, reference gradients and reference Hessians of all local bases.
#[derive(Debug, Clone, PartialEq)]
pub struct Shape {
    pub values: Vec<f64>,
    pub grads: Vec<[f64; 2]>,
    pub hessians: Vec<[[f64; 2]; 2]>,
}

fn lagrange_1d(kind: ElementKind, x: f64) -> ([f64; 3], [f64; 3], [f64; 3]) {
    match kind {
        ElementKind::Q1 => ([1.0 - x, x, 0.0], [-1.0, 1.0, 0.0], [0.0; 3]),
        ElementKind::Q2 => (
            [2.0 * (x - 0.5) * (x - 1.0), 4.0 * x * (1.0 - x), 2.0 * x * (x - 0.5)],
            [4.0 * x - 3.0, 4.0 - 8.0 * x, 4.0 * x - 1.0],
            [4.0, -8.0, 4.0],
        ),
    }
}

/// Evaluates the tensor-product Lagrange basis at a reference point.
pub fn shape_eval(kind: ElementKind, xi: Point) -> Result<Shape> {
    const TOL: f64 = 1e-12;
    if !(xi[0] >= -TOL && xi[0] <= 1.0 + TOL && xi[1] >= -TOL && xi[1] <= 1.0 + TOL) {
        return Err(Error::OutsideReference(xi[0], xi[1]));
    }
    Ok(shape_unchecked(kind, xi))
}

pub(crate) fn shape_unchecked(kind: ElementKind, xi: Point) -> Shape {
    let (vx, dx, hx) = lagrange_1d(kind, xi[0]);
    let (vy, dy, hy) = lagrange_1d(kind, xi[1]);
    let ij: &[(usize, usize)] = match kind {
        ElementKind::Q1 => &Q1_IJ,
        ElementKind::Q2 => &Q2_IJ,
    };
    let mut s = Shape {
        values: Vec::with_capacity(ij.len()),
        grads: Vec::with_capacity(ij.len()),
        hessians: Vec::with_capacity(ij.len()),
    };
    for &(i, j) in ij {
        s.values.push(vx[i] * vy[j]);
        s.grads.push([dx[i] * vy[j], vx[i] * dy[j]]);
        s.hessians.push([[hx[i] * vy[j], dx[i] * dy[j]], [dx[i] * dy[j], vx[i] * hy[j]]]);
    }
    s
}
