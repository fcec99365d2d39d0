//! Per-level statistics table in CSV form.
//!
//! One row per level, then footer rows `fine_dof`, `WU` and `wall_time` that
//! carry their value in the second column. Floats are written in shortest
//! round-trip exponent notation, so a parsed table equals the written one.

use serde::{Deserialize, Serialize};

use crate::solver::SolveStats;
use crate::{Error, Result};

pub const COLUMNS: [&str; 12] = [
    "level",
    "energy_G",
    "energy_wF",
    "max_dev",
    "min_dev",
    "dofs",
    "newton_iters",
    "global_estimate",
    "elements",
    "nnz",
    "final_residual",
    "wall_time",
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StatsRow {
    pub level: usize,
    pub energy_g: f64,
    pub energy_wf: f64,
    pub max_dev: f64,
    pub min_dev: f64,
    pub dofs: usize,
    pub newton_iters: usize,
    pub global_estimate: f64,
    pub elements: usize,
    pub nnz: usize,
    pub final_residual: f64,
    pub wall_time: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StatsTable {
    pub rows: Vec<StatsRow>,
    pub fine_dof: usize,
    pub work_units: f64,
    pub wall_time: f64,
}

impl StatsTable {
    /// Table of `stats` with a given work-unit total.
    pub fn new(stats: &SolveStats, work_units: f64) -> Self {
        let rows = stats
            .levels
            .iter()
            .map(|l| StatsRow {
                level: l.level,
                energy_g: l.energy.g,
                energy_wf: l.energy.w_f(),
                max_dev: l.deviation.max_dev,
                min_dev: l.deviation.min_dev,
                dofs: l.dofs,
                newton_iters: l.newton.iterations,
                global_estimate: l.estimate.global,
                elements: l.elements,
                nnz: l.nnz,
                final_residual: l.newton.final_residual(),
                wall_time: l.wall_time,
            })
            .collect();
        StatsTable { rows, fine_dof: stats.fine_dofs().unwrap_or(0), work_units, wall_time: stats.wall_time }
    }

    pub fn to_csv(&self) -> String {
        let pad = ",".repeat(COLUMNS.len() - 2);
        let mut s = COLUMNS.join(",");
        s.push_str("\r\n");
        for r in &self.rows {
            s.push_str(&format!(
                "{},{:e},{:e},{:e},{:e},{},{},{:e},{},{},{:e},{:e}\r\n",
                r.level,
                r.energy_g,
                r.energy_wf,
                r.max_dev,
                r.min_dev,
                r.dofs,
                r.newton_iters,
                r.global_estimate,
                r.elements,
                r.nnz,
                r.final_residual,
                r.wall_time
            ));
        }
        s.push_str(&format!("fine_dof,{}{pad}\r\n", self.fine_dof));
        s.push_str(&format!("WU,{:e}{pad}\r\n", self.work_units));
        s.push_str(&format!("wall_time,{:e}{pad}\r\n", self.wall_time));
        s
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut lines = text.lines().filter(|l| !l.trim().is_empty());
        let header = lines.next().ok_or_else(|| Error::Parse("empty stats file".into()))?;
        if header.split(',').map(str::trim).ne(COLUMNS.iter().copied()) {
            return Err(Error::Parse(format!("unexpected header '{header}'")));
        }
        let bad = |what: &str, line: &str| Error::Parse(format!("bad {what} in '{line}'"));
        let mut table = StatsTable { rows: Vec::new(), fine_dof: 0, work_units: 0.0, wall_time: 0.0 };
        let mut footer = [false; 3];
        for line in lines {
            let f: Vec<&str> = line.split(',').map(str::trim).collect();
            if f.len() != COLUMNS.len() {
                return Err(bad("field count", line));
            }
            let fl = |i: usize| f[i].parse::<f64>().map_err(|_| bad(COLUMNS[i], line));
            let us = |i: usize| f[i].parse::<usize>().map_err(|_| bad(COLUMNS[i], line));
            match f[0] {
                "fine_dof" => {
                    table.fine_dof = us(1)?;
                    footer[0] = true;
                }
                "WU" => {
                    table.work_units = fl(1)?;
                    footer[1] = true;
                }
                "wall_time" => {
                    table.wall_time = fl(1)?;
                    footer[2] = true;
                }
                _ => table.rows.push(StatsRow {
                    level: us(0)?,
                    energy_g: fl(1)?,
                    energy_wf: fl(2)?,
                    max_dev: fl(3)?,
                    min_dev: fl(4)?,
                    dofs: us(5)?,
                    newton_iters: us(6)?,
                    global_estimate: fl(7)?,
                    elements: us(8)?,
                    nnz: us(9)?,
                    final_residual: fl(10)?,
                    wall_time: fl(11)?,
                }),
            }
        }
        if footer.contains(&false) {
            return Err(Error::Parse("missing footer rows".into()));
        }
        Ok(table)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> StatsTable {
        StatsTable {
            rows: vec![
                StatsRow {
                    level: 0,
                    energy_g: 3.640_123_456_789_012,
                    energy_wf: 1.0 / 3.0,
                    max_dev: 1.234e-7,
                    min_dev: -9.87e-9,
                    dofs: 12345,
                    newton_iters: 7,
                    global_estimate: 0.1,
                    elements: 1024,
                    nnz: 999_999,
                    final_residual: 3.3e-5,
                    wall_time: 0.25,
                },
                StatsRow {
                    level: 1,
                    energy_g: -4.0,
                    energy_wf: 0.0,
                    max_dev: 0.0,
                    min_dev: -0.0,
                    dofs: 1,
                    newton_iters: 0,
                    global_estimate: 1e-300,
                    elements: 1,
                    nnz: 1,
                    final_residual: 0.0,
                    wall_time: 1e3,
                },
            ],
            fine_dof: 1,
            work_units: 1.75,
            wall_time: 12.5,
        }
    }

    #[test]
    fn round_trip_is_exact() {
        let t = sample();
        let text = t.to_csv();
        assert_eq!(StatsTable::parse(&text).unwrap(), t);
        for line in text.lines() {
            assert_eq!(line.split(',').count(), COLUMNS.len());
        }
    }

    #[test]
    fn malformed_files_are_rejected() {
        assert!(StatsTable::parse("").is_err());
        assert!(StatsTable::parse("a,b\n").is_err());
        let text = sample().to_csv();
        let cut: String = text.lines().take(3).map(|l| format!("{l}\n")).collect();
        assert!(StatsTable::parse(&cut).is_err());
    }
}
