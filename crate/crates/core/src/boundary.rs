use serde::{Deserialize, Serialize};

use crate::Point;

/// Exact description of the domain boundary, used to snap new boundary
/// vertices during refinement and to parametrize boundary data.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum BoundaryDescriptor {
    /// Axis-aligned rectangle `[x0, x1] x [y0, y1]`; refinement midpoints stay put.
    Rectangle { min: Point, max: Point },
    /// Ellipse centred at the origin, `(x/a)^2 + (y/b)^2 = 1`.
    Ellipse { a: f64, b: f64 },
}

impl BoundaryDescriptor {
    /// Maps a point near the boundary onto the exact boundary curve.
    pub fn project(&self, p: Point) -> Point {
        match *self {
            BoundaryDescriptor::Rectangle { min, max } => {
                // snap onto the nearest side
                let d = [
                    (p[0] - min[0]).abs(),
                    (max[0] - p[0]).abs(),
                    (p[1] - min[1]).abs(),
                    (max[1] - p[1]).abs(),
                ];
                let k = (0..4)
                    .min_by(|&i, &j| d[i].partial_cmp(&d[j]).unwrap())
                    .unwrap();
                let x = p[0].clamp(min[0], max[0]);
                let y = p[1].clamp(min[1], max[1]);
                match k {
                    0 => [min[0], y],
                    1 => [max[0], y],
                    2 => [x, min[1]],
                    _ => [x, max[1]],
                }
            }
            BoundaryDescriptor::Ellipse { a, b } => {
                let (u, v) = (p[0] / a, p[1] / b);
                let r = u.hypot(v);
                if r == 0.0 {
                    return [a, 0.0];
                }
                let theta = v.atan2(u);
                [a * theta.cos(), b * theta.sin()]
            }
        }
    }

    /// Signed level-set value: zero on the boundary, negative inside.
    pub fn level_set(&self, p: Point) -> f64 {
        match *self {
            BoundaryDescriptor::Rectangle { min, max } => {
                let dx = (min[0] - p[0]).max(p[0] - max[0]);
                let dy = (min[1] - p[1]).max(p[1] - max[1]);
                dx.max(dy)
            }
            BoundaryDescriptor::Ellipse { a, b } => (p[0] / a).hypot(p[1] / b) - 1.0,
        }
    }

    pub fn perimeter(&self) -> f64 {
        match *self {
            BoundaryDescriptor::Rectangle { min, max } => {
                2.0 * ((max[0] - min[0]) + (max[1] - min[1]))
            }
            BoundaryDescriptor::Ellipse { .. } => self.ellipse_arc_length(2.0 * std::f64::consts::PI),
        }
    }

    /// Counter-clockwise arc-length coordinate of a boundary point.
    ///
    /// Rectangles start at the lower-left corner; ellipses at `(a, 0)`.
    pub fn arc_length(&self, p: Point) -> f64 {
        match *self {
            BoundaryDescriptor::Rectangle { min, max } => {
                let (w, h) = (max[0] - min[0], max[1] - min[1]);
                let q = self.project(p);
                let tol = 1e-12 * (w + h);
                if (q[1] - min[1]).abs() <= tol && q[0] < max[0] - tol {
                    q[0] - min[0]
                } else if (q[0] - max[0]).abs() <= tol && q[1] < max[1] - tol {
                    w + (q[1] - min[1])
                } else if (q[1] - max[1]).abs() <= tol && q[0] > min[0] + tol {
                    w + h + (max[0] - q[0])
                } else {
                    2.0 * w + h + (max[1] - q[1])
                }
            }
            BoundaryDescriptor::Ellipse { a, b } => {
                let mut theta = (p[1] / b).atan2(p[0] / a);
                if theta < 0.0 {
                    theta += 2.0 * std::f64::consts::PI;
                }
                self.ellipse_arc_length(theta)
            }
        }
    }

    fn ellipse_arc_length(&self, theta: f64) -> f64 {
        let BoundaryDescriptor::Ellipse { a, b } = *self else {
            return 0.0;
        };
        // composite 5-point Gauss on 64 panels; the integrand is smooth
        const X: [f64; 5] = [
            -0.906_179_845_938_664,
            -0.538_469_310_105_683,
            0.0,
            0.538_469_310_105_683,
            0.906_179_845_938_664,
        ];
        const W: [f64; 5] = [
            0.236_926_885_056_189,
            0.478_628_670_499_366,
            0.568_888_888_888_889,
            0.478_628_670_499_366,
            0.236_926_885_056_189,
        ];
        let panels = 64;
        let hp = theta / panels as f64;
        let mut s = 0.0;
        for k in 0..panels {
            let mid = (k as f64 + 0.5) * hp;
            for (x, w) in X.iter().zip(W) {
                let t = mid + 0.5 * hp * x;
                s += 0.5 * hp * w * (a * a * t.sin().powi(2) + b * b * t.cos().powi(2)).sqrt();
            }
        }
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ellipse_projection_fixes_boundary_points() {
        let e = BoundaryDescriptor::Ellipse { a: 1.5, b: 1.0 };
        for k in 0..37 {
            let t = k as f64 * 0.17;
            let p = [1.5 * t.cos(), t.sin()];
            let q = e.project(p);
            assert!((q[0] - p[0]).abs() <= 1e-14 * 1.5);
            assert!((q[1] - p[1]).abs() <= 1e-14 * 1.5);
        }
        let q = e.project([0.3, 0.2]);
        assert!(e.level_set(q).abs() < 1e-14);
    }

    #[test]
    fn rectangle_arc_length() {
        let r = BoundaryDescriptor::Rectangle { min: [0.0, 0.0], max: [1.0, 1.0] };
        assert_eq!(r.arc_length([0.5, 0.0]), 0.5);
        assert_eq!(r.arc_length([1.0, 0.25]), 1.25);
        assert_eq!(r.arc_length([0.25, 1.0]), 2.75);
        assert_eq!(r.arc_length([0.0, 0.5]), 3.5);
        assert_eq!(r.perimeter(), 4.0);
    }

    #[test]
    fn circle_perimeter() {
        let c = BoundaryDescriptor::Ellipse { a: 1.0, b: 1.0 };
        assert!((c.perimeter() - 2.0 * std::f64::consts::PI).abs() < 1e-12);
    }
}
