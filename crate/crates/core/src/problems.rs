//! Experiment presets and boundary data.

use std::f64::consts::PI;
use std::fmt;
use std::path::Path;
use std::sync::Arc;

use crate::boundary::BoundaryDescriptor;
use crate::mesh::Mesh;
use crate::physics::{Formulation, ProblemConfig};
use crate::{Error, Point, Result, Vec3};

pub const PRESETS: [&str; 6] = ["twist", "patterned", "ellipse_t6", "ellipse_t8", "constant_ellipse", "helix_manufactured"];

/// Target element count of the ellipse presets' coarse mesh.
pub const ELLIPSE_TARGET: usize = 1313;

/// Note recorded in run manifests of the twist preset.
pub const TWIST_NOTE: &str = "side walls: xz angle theta(y) = -pi/8 + (pi/4) y, tilt toward +y phi(y) = (pi/4) sin(pi y), \
g = (cos phi cos theta, sin phi, cos phi sin theta); this side-wall profile is an interpretation";

type Field = dyn Fn(Point) -> Vec3 + Send + Sync;

/// Dirichlet data for the director.
#[derive(Clone)]
pub struct BoundaryCondition {
    pub id: String,
    pub description: String,
    g: Arc<Field>,
}

impl fmt::Debug for BoundaryCondition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("BoundaryCondition").field("id", &self.id).field("description", &self.description).finish()
    }
}

impl BoundaryCondition {
    pub fn new(id: &str, description: &str, g: impl Fn(Point) -> Vec3 + Send + Sync + 'static) -> Self {
        BoundaryCondition { id: id.into(), description: description.into(), g: Arc::new(g) }
    }

    pub fn eval(&self, p: Point) -> Vec3 {
        (self.g)(p)
    }

    pub fn constant(n: Vec3) -> Self {
        BoundaryCondition::new("constant", &format!("constant director {n:?}"), move |_| n)
    }

    /// Piecewise-linear table over the counter-clockwise arc length of the
    /// boundary, normalized after interpolation. The table wraps around.
    pub fn tabulated(boundary: BoundaryDescriptor, mut table: Vec<(f64, Vec3)>) -> Result<Self> {
        if table.is_empty() {
            return Err(Error::Config("empty boundary table".into()));
        }
        table.sort_by(|a, b| a.0.total_cmp(&b.0));
        let per = boundary.perimeter();
        let n = table.len();
        let g = move |p: Point| {
            let s = boundary.arc_length(p).rem_euclid(per);
            let k = table.partition_point(|e| e.0 <= s);
            let (a, b, w) = if k == 0 {
                let (sa, sb) = (table[n - 1].0 - per, table[0].0);
                (n - 1, 0, if sb > sa { (s - sa) / (sb - sa) } else { 0.0 })
            } else if k == n {
                let (sa, sb) = (table[n - 1].0, table[0].0 + per);
                (n - 1, 0, if sb > sa { (s - sa) / (sb - sa) } else { 0.0 })
            } else {
                let (sa, sb) = (table[k - 1].0, table[k].0);
                (k - 1, k, if sb > sa { (s - sa) / (sb - sa) } else { 0.0 })
            };
            let v: Vec3 = std::array::from_fn(|c| (1.0 - w) * table[a].1[c] + w * table[b].1[c]);
            normalize(v)
        };
        Ok(BoundaryCondition::new("tabulated", "user table over boundary arc length", g))
    }

    /// Reads a table with one `s gx gy gz` row per line; `#` starts a comment.
    pub fn from_table_file(boundary: BoundaryDescriptor, path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let mut table = Vec::new();
        for (i, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let vals: Vec<f64> = line
                .split(|c: char| c == ',' || c.is_whitespace())
                .filter(|t| !t.is_empty())
                .map(|t| t.parse::<f64>().map_err(|e| Error::Parse(format!("line {}: {e}", i + 1))))
                .collect::<Result<_>>()?;
            if vals.len() != 4 {
                return Err(Error::Parse(format!("line {}: expected 4 values, got {}", i + 1, vals.len())));
            }
            table.push((vals[0], [vals[1], vals[2], vals[3]]));
        }
        Self::tabulated(boundary, table)
    }
}

fn normalize(v: Vec3) -> Vec3 {
    let l = (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt();
    if l < 1e-12 {
        [0.0, 0.0, 1.0]
    } else {
        [v[0] / l, v[1] / l, v[2] / l]
    }
}

/// Twist data on the unit square, a function of `y` only.
pub fn twist_director(p: Point) -> Vec3 {
    let y = p[1];
    let theta = -PI / 8.0 + PI / 4.0 * y;
    let phi = PI / 4.0 * (PI * y).sin();
    [phi.cos() * theta.cos(), phi.sin(), phi.cos() * theta.sin()]
}

/// Default patterned-square data: on every side the xz-plane angle is
/// `theta_lo` near the corners and `theta_hi` on the middle third, with
/// smoothstep transitions of arc-length width 0.05.
pub fn patterned_director(p: Point) -> Vec3 {
    const WIDTH: f64 = 0.05;
    let (theta_lo, theta_hi) = (0.0, PI / 2.0);
    let sq = BoundaryDescriptor::Rectangle { min: [0.0, 0.0], max: [1.0, 1.0] };
    let t = sq.arc_length(p).rem_euclid(1.0);
    let step = |x: f64| {
        let u = (x / WIDTH + 0.5).clamp(0.0, 1.0);
        u * u * (3.0 - 2.0 * u)
    };
    let theta = theta_lo + (theta_hi - theta_lo) * (step(t - 1.0 / 3.0) - step(t - 2.0 / 3.0));
    [theta.cos(), 0.0, theta.sin()]
}

pub fn helix_director(t0: f64, p: Point) -> Vec3 {
    [(t0 * p[1]).sin(), 0.0, (t0 * p[1]).cos()]
}

/// Helix value and gradient `g[c][d]`.
pub fn helix_jet(t0: f64, p: Point) -> (Vec3, [[f64; 2]; 3]) {
    let (s, c) = ((t0 * p[1]).sin(), (t0 * p[1]).cos());
    ([s, 0.0, c], [[0.0, t0 * c], [0.0, 0.0], [0.0, -t0 * s]])
}

#[derive(Debug, Clone)]
pub struct Preset {
    pub name: String,
    pub config: ProblemConfig,
    pub mesh: Mesh,
    pub bc: BoundaryCondition,
    /// Interpretation notes to echo in run manifests.
    pub notes: Vec<String>,
}

/// Options that some presets accept.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PresetOptions {
    pub formulation: Formulation,
    /// Chirality of the manufactured helix.
    pub t0: f64,
    /// Cells per side of the manufactured-helix grid.
    pub helix_cells: usize,
}

impl Default for PresetOptions {
    fn default() -> Self {
        PresetOptions { formulation: Formulation::Lagrangian, t0: 2.0, helix_cells: 8 }
    }
}

fn unit_square(n: usize) -> Result<Mesh> {
    Mesh::uniform_grid(n, n, [0.0, 0.0], [1.0, 1.0])
}

pub fn preset(name: &str, opts: PresetOptions) -> Result<Preset> {
    let base = ProblemConfig { formulation: opts.formulation, boundary_id: name.into(), ..Default::default() };
    let lagr = opts.formulation == Formulation::Lagrangian;
    let mut notes = Vec::new();
    let (config, mesh, bc) = match name {
        "twist" => {
            notes.push(TWIST_NOTE.to_string());
            let (a0, da) = if lagr { (0.2, 0.2) } else { (0.4, 0.2) };
            let cfg = ProblemConfig { k1: 1.0, k2: 3.0, k3: 1.2, t0: 0.0, zeta: 1e5, alpha0: a0, delta_alpha: da, ..base };
            (cfg, unit_square(32)?, BoundaryCondition::new("twist", TWIST_NOTE, twist_director))
        }
        "patterned" => {
            notes.push("default pattern: xz angle 0 near corners, pi/2 on the middle third of each side, smoothed over arc length 0.05; override with a boundary table".into());
            let cfg = ProblemConfig { k1: 1.0, k2: 0.629, k3: 1.323, t0: 0.0, zeta: 1e6, alpha0: 0.2, delta_alpha: 0.2, ..base };
            (cfg, unit_square(32)?, BoundaryCondition::new("patterned", "default square-wave pattern", patterned_director))
        }
        "ellipse_t6" | "ellipse_t8" => {
            let cfg = if name == "ellipse_t6" {
                ProblemConfig { k1: 1.0, k2: 1.0, k3: 1.0, t0: 6.0, ..base }
            } else {
                ProblemConfig { k1: 1.0, k2: 3.0, k3: 1.2, t0: 8.0, ..base }
            };
            let cfg = ProblemConfig { zeta: 1e5, alpha0: 0.3, delta_alpha: 0.2, ..cfg };
            (cfg, Mesh::ellipse(1.5, 1.0, ELLIPSE_TARGET)?, BoundaryCondition::constant([0.0, 0.0, 1.0]))
        }
        "constant_ellipse" => {
            let cfg = ProblemConfig { k1: 1.0, k2: 1.0, k3: 1.0, t0: 0.0, zeta: 1e5, alpha0: 1.0, delta_alpha: 0.0, ..base };
            (cfg, Mesh::ellipse(1.5, 1.0, ELLIPSE_TARGET)?, BoundaryCondition::constant([0.0, 0.0, 1.0]))
        }
        "helix_manufactured" => {
            let t0 = opts.t0;
            let cfg = ProblemConfig {
                k1: 1.0,
                k2: 1.0,
                k3: 1.0,
                t0,
                zeta: 1e5,
                alpha0: 1.0,
                delta_alpha: 0.0,
                newton_tol: 1e-10,
                ..base
            };
            let bc = BoundaryCondition::new("helix", &format!("helix with twist rate {t0}"), move |p| helix_director(t0, p));
            (cfg, unit_square(opts.helix_cells)?, bc)
        }
        _ => return Err(Error::UnknownPreset(name.into())),
    };
    config.validate()?;
    Ok(Preset { name: name.into(), config, mesh, bc, notes })
}
