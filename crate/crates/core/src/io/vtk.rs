//! Legacy ASCII VTK unstructured grids.
//!
//! Points are the mesh vertices, cells are quads (type 9). The director is
//! written as point data; element quantities as cell data.

use std::fmt::Write as _;

use crate::physics::DirectorState;
use crate::{Error, Result};

pub const VTK_QUAD: u32 = 9;

/// Cell-data fields written next to the director.
#[derive(Debug, Clone, Copy)]
pub struct CellFields<'a> {
    pub w_f: &'a [f64],
    pub theta: &'a [f64],
    pub refine_flag: &'a [bool],
}

pub fn write_vtk(title: &str, state: &DirectorState, cells: &CellFields) -> Result<String> {
    let space = &*state.space;
    let mesh = &space.mesh;
    let (nv, ne) = (mesh.num_vertices(), mesh.num_elements());
    if cells.w_f.len() != ne || cells.theta.len() != ne || cells.refine_flag.len() != ne {
        return Err(Error::Config("cell field length does not match the mesh".into()));
    }
    let title: String = title.chars().filter(|c| *c != '\n').take(255).collect();
    let mut s = String::new();
    let w = &mut s;
    let _ = writeln!(w, "# vtk DataFile Version 3.0\n{title}\nASCII\nDATASET UNSTRUCTURED_GRID");
    let _ = writeln!(w, "POINTS {nv} double");
    for p in &mesh.vertices {
        let _ = writeln!(w, "{:e} {:e} 0", p[0], p[1]);
    }
    let _ = writeln!(w, "CELLS {ne} {}", 5 * ne);
    for el in &mesh.elements {
        let v = el.vertices;
        let _ = writeln!(w, "4 {} {} {} {}", v[0], v[1], v[2], v[3]);
    }
    let _ = writeln!(w, "CELL_TYPES {ne}");
    for _ in 0..ne {
        let _ = writeln!(w, "{VTK_QUAD}");
    }
    let _ = writeln!(w, "POINT_DATA {nv}\nVECTORS director double");
    for v in 0..nv {
        let n: [f64; 3] = std::array::from_fn(|c| state.coeffs[space.director_dof(c, v)]);
        let _ = writeln!(w, "{:e} {:e} {:e}", n[0], n[1], n[2]);
    }
    for (c, name) in ["n_x", "n_y", "n_z"].iter().enumerate() {
        let _ = writeln!(w, "SCALARS {name} double 1\nLOOKUP_TABLE default");
        for v in 0..nv {
            let _ = writeln!(w, "{:e}", state.coeffs[space.director_dof(c, v)]);
        }
    }
    if space.with_multiplier {
        let _ = writeln!(w, "SCALARS lambda double 1\nLOOKUP_TABLE default");
        for v in 0..nv {
            let _ = writeln!(w, "{:e}", state.coeffs[space.multiplier_dof(v)]);
        }
    }
    let _ = writeln!(w, "CELL_DATA {ne}");
    let _ = writeln!(w, "SCALARS w_F double 1\nLOOKUP_TABLE default");
    for x in cells.w_f {
        let _ = writeln!(w, "{x:e}");
    }
    let _ = writeln!(w, "SCALARS theta double 1\nLOOKUP_TABLE default");
    for x in cells.theta {
        let _ = writeln!(w, "{x:e}");
    }
    let _ = writeln!(w, "SCALARS refine_flag int 1\nLOOKUP_TABLE default");
    for &f in cells.refine_flag {
        let _ = writeln!(w, "{}", f as u8);
    }
    Ok(s)
}

/// What the linter found in a file.
#[derive(Debug, Clone, PartialEq)]
pub struct VtkSummary {
    pub points: usize,
    pub cells: usize,
    pub point_fields: Vec<String>,
    pub cell_fields: Vec<String>,
}

/// Structural check of a legacy ASCII unstructured grid: header, section
/// counts, connectivity bounds, cell types and data-array lengths.
pub fn lint(text: &str) -> Result<VtkSummary> {
    let err = |m: String| Error::Parse(m);
    let mut lines = text.lines();
    let mut next = || lines.next().ok_or_else(|| Error::Parse("unexpected end of file".into()));
    if !next()?.starts_with("# vtk DataFile Version") {
        return Err(err("missing version line".into()));
    }
    next()?;
    if next()?.trim() != "ASCII" {
        return Err(err("only ASCII files are supported".into()));
    }
    if next()?.trim() != "DATASET UNSTRUCTURED_GRID" {
        return Err(err("not an unstructured grid".into()));
    }
    let rest: Vec<&str> = lines.collect();
    let mut tokens = rest.iter().flat_map(|l| l.split_whitespace()).peekable();
    let mut tok = |what: &str| tokens.next().ok_or_else(|| Error::Parse(format!("missing {what}")));
    let count = |t: &str, what: &str| t.parse::<usize>().map_err(|_| Error::Parse(format!("bad {what} '{t}'")));
    let num = |t: &str| t.parse::<f64>().map_err(|_| Error::Parse(format!("bad number '{t}'")));

    if tok("POINTS")? != "POINTS" {
        return Err(err("expected POINTS".into()));
    }
    let np = count(tok("point count")?, "point count")?;
    tok("point type")?;
    for _ in 0..3 * np {
        num(tok("coordinate")?)?;
    }
    if tok("CELLS")? != "CELLS" {
        return Err(err("expected CELLS".into()));
    }
    let nc = count(tok("cell count")?, "cell count")?;
    let size = count(tok("cell list size")?, "cell list size")?;
    let mut used = 0;
    for _ in 0..nc {
        let k = count(tok("cell size")?, "cell size")?;
        used += k + 1;
        for _ in 0..k {
            let i = count(tok("connectivity")?, "connectivity")?;
            if i >= np {
                return Err(err(format!("cell references point {i} of {np}")));
            }
        }
    }
    if used != size {
        return Err(err(format!("cell list size {size} but {used} entries")));
    }
    if tok("CELL_TYPES")? != "CELL_TYPES" || count(tok("type count")?, "type count")? != nc {
        return Err(err("bad CELL_TYPES section".into()));
    }
    for _ in 0..nc {
        let t = count(tok("cell type")?, "cell type")?;
        if t != VTK_QUAD as usize {
            return Err(err(format!("unexpected cell type {t}")));
        }
    }
    let mut summary = VtkSummary { points: np, cells: nc, point_fields: Vec::new(), cell_fields: Vec::new() };
    let mut current: Option<(bool, usize)> = None;
    while let Ok(kw) = tok("section") {
        match kw {
            "POINT_DATA" | "CELL_DATA" => {
                let n = count(tok("data count")?, "data count")?;
                let is_point = kw == "POINT_DATA";
                if n != if is_point { np } else { nc } {
                    return Err(err(format!("{kw} {n} does not match the grid")));
                }
                current = Some((is_point, n));
            }
            "SCALARS" | "VECTORS" => {
                let (is_point, n) = current.ok_or_else(|| err("data before POINT_DATA/CELL_DATA".into()))?;
                let name = tok("field name")?.to_string();
                tok("field type")?;
                let width = if kw == "VECTORS" {
                    3
                } else {
                    let c = count(tok("component count")?, "component count")?;
                    if tok("LOOKUP_TABLE")? != "LOOKUP_TABLE" {
                        return Err(err(format!("{name}: missing LOOKUP_TABLE")));
                    }
                    tok("table name")?;
                    c
                };
                for _ in 0..width * n {
                    num(tok(&name)?)?;
                }
                if is_point {
                    summary.point_fields.push(name);
                } else {
                    summary.cell_fields.push(name);
                }
            }
            other => return Err(err(format!("unexpected keyword '{other}'"))),
        }
    }
    Ok(summary)
}
