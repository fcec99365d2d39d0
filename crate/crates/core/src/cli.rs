//! Batch front end: resolve a run configuration, solve, write tables, fields
//! and a manifest.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::io::stats::StatsTable;
use crate::io::vtk::{write_vtk, CellFields};
use crate::io::write_coefficients;
use crate::physics::{energy_density_field, Formulation};
use crate::problems::{preset, BoundaryCondition, Preset, PresetOptions};
use crate::solver::{nested_iteration_with, work_units, NestedRun, Refinement};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RefineMode {
    Adaptive,
    Uniform,
    PairedBoth,
}

impl std::str::FromStr for RefineMode {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "adaptive" => Ok(RefineMode::Adaptive),
            "uniform" => Ok(RefineMode::Uniform),
            "paired-both" => Ok(RefineMode::PairedBoth),
            _ => Err(Error::Config(format!("unknown refinement mode '{s}'"))),
        }
    }
}

/// Contents of a run file. Any field of [`ProblemConfig`] may be overridden
/// in a `[problem]` table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub preset: String,
    pub formulation: Formulation,
    pub levels: usize,
    pub refine: RefineMode,
    pub out: PathBuf,
    pub seed: u64,
    /// Amplitude of a seeded uniform perturbation of the coarse initial guess.
    pub perturbation: f64,
    pub flag_fraction: Option<f64>,
    /// Manufactured-helix chirality and grid size.
    pub t0: Option<f64>,
    pub helix_cells: Option<usize>,
    /// Table file replacing the preset's boundary data.
    pub boundary_table: Option<PathBuf>,
    pub problem: Option<toml::Table>,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            preset: "twist".into(),
            formulation: Formulation::Lagrangian,
            levels: 3,
            refine: RefineMode::Adaptive,
            out: PathBuf::from("out"),
            seed: 0,
            perturbation: 0.0,
            flag_fraction: None,
            t0: None,
            helix_cells: None,
            boundary_table: None,
            problem: None,
        }
    }
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_toml(&std::fs::read_to_string(path)?)
    }

    /// Preset with every override applied.
    pub fn resolve(&self) -> Result<Preset> {
        if self.levels == 0 {
            return Err(Error::Config("levels must be at least 1".into()));
        }
        let defaults = PresetOptions::default();
        let opts = PresetOptions {
            formulation: self.formulation,
            t0: self.t0.unwrap_or(defaults.t0),
            helix_cells: self.helix_cells.unwrap_or(defaults.helix_cells),
        };
        let mut p = preset(&self.preset, opts)?;
        if let Some(table) = &self.problem {
            let mut merged = toml::Table::try_from(&p.config).map_err(|e| Error::Config(e.to_string()))?;
            for (k, v) in table {
                if !merged.contains_key(k) {
                    return Err(Error::Config(format!("unknown problem field '{k}'")));
                }
                merged.insert(k.clone(), v.clone());
            }
            p.config = merged.try_into().map_err(|e: toml::de::Error| Error::Config(e.to_string()))?;
            p.config.formulation = self.formulation;
        }
        if let Some(f) = self.flag_fraction {
            p.config.flag_fraction = f;
        }
        if let Some(path) = &self.boundary_table {
            p.bc = BoundaryCondition::from_table_file(p.mesh.boundary, path)?;
            p.notes.push(format!("boundary data read from {}", path.display()));
        }
        p.config.validate()?;
        Ok(p)
    }
}

/// What a run produced.
#[derive(Debug, Clone, PartialEq)]
pub struct RunOutcome {
    pub success: bool,
    pub files: Vec<PathBuf>,
    pub tables: Vec<(String, StatsTable)>,
}

fn solve_into(
    p: &Preset,
    cfg: &RunConfig,
    refinement: Refinement,
    dir: &Path,
    prefix: &str,
    files: &mut Vec<PathBuf>,
) -> NestedRun {
    let perturb = (cfg.perturbation > 0.0).then_some((cfg.perturbation, cfg.seed));
    let mut observer = |lv: &crate::solver::LevelOutput| -> Result<()> {
        let w = energy_density_field(lv.state, lv.cfg)?;
        let title = format!("{} {} {} level {}", p.name, lv.cfg.formulation, refinement, lv.record.level);
        let text = write_vtk(
            &title,
            lv.state,
            &CellFields { w_f: &w, theta: &lv.estimates.theta, refine_flag: &lv.flags.flags },
        )?;
        let path = dir.join(format!("{prefix}level_{}.vtk", lv.record.level));
        std::fs::write(&path, text)?;
        files.push(path);
        Ok(())
    };
    let run = nested_iteration_with(&p.config, p.mesh.clone(), &p.bc, cfg.levels, refinement, perturb, &mut observer);
    if let Some(state) = &run.state {
        let mesh_path = dir.join(format!("{prefix}final_mesh.txt"));
        let coeff_path = dir.join(format!("{prefix}final_coefficients.txt"));
        if std::fs::write(&mesh_path, state.space.mesh.to_snapshot()).is_ok()
            && write_coefficients(&coeff_path, &state.coeffs).is_ok()
        {
            files.push(mesh_path);
            files.push(coeff_path);
        }
    }
    run
}

/// Runs one configuration and writes everything into `cfg.out`.
pub fn run(cfg: &RunConfig) -> Result<RunOutcome> {
    let p = cfg.resolve()?;
    let dir = &cfg.out;
    std::fs::create_dir_all(dir)?;
    let mut files = Vec::new();
    let mut tables = Vec::new();
    let mut failures = Vec::new();
    let mut wu = serde_json::Map::new();

    let modes: Vec<(Refinement, &str, &str)> = match cfg.refine {
        RefineMode::Adaptive => vec![(Refinement::Adaptive, "", "stats.csv")],
        RefineMode::Uniform => vec![(Refinement::Uniform, "", "stats.csv")],
        RefineMode::PairedBoth => vec![
            (Refinement::Adaptive, "adaptive_", "stats_adaptive.csv"),
            (Refinement::Uniform, "uniform_", "stats_uniform.csv"),
        ],
    };
    let mut adaptive_finest = None;
    for (refinement, prefix, csv) in modes {
        let run = solve_into(&p, cfg, refinement, dir, prefix, &mut files);
        // a paired uniform run is measured against the adaptive finest grid
        let divisor = if refinement == Refinement::Uniform { adaptive_finest } else { None };
        if refinement == Refinement::Adaptive {
            adaptive_finest = run.stats.finest_nnz();
        }
        let total = if run.stats.levels.is_empty() { 0.0 } else { work_units(&run.stats, divisor)? };
        wu.insert(refinement.to_string(), json!(total));
        let table = StatsTable::new(&run.stats, total);
        let path = dir.join(csv);
        std::fs::write(&path, table.to_csv())?;
        files.push(path);
        tables.push((refinement.to_string(), table));
        if let Some(e) = run.error {
            log::error!("{refinement} run failed: {e}");
            failures.push(format!("{refinement}: {e}"));
        }
    }

    let success = failures.is_empty();
    let manifest = json!({
        "status": if success { "ok" } else { "FAILED" },
        "failures": failures,
        "preset": p.name,
        "formulation": cfg.formulation,
        "levels": cfg.levels,
        "refine": cfg.refine,
        "seed": cfg.seed,
        "perturbation": cfg.perturbation,
        "problem": p.config,
        "boundary_condition": { "id": p.bc.id, "description": p.bc.description },
        "notes": p.notes,
        "coarse_mesh": {
            "elements": p.mesh.num_elements(),
            "vertices": p.mesh.num_vertices(),
            "boundary": p.mesh.boundary,
        },
        "work_units": wu,
        "outputs": files.iter().map(|f| f.file_name().map(|n| n.to_string_lossy().into_owned())).collect::<Vec<_>>(),
    });
    let mpath = dir.join("manifest.json");
    std::fs::write(&mpath, serde_json::to_string_pretty(&manifest).map_err(|e| Error::Config(e.to_string()))?)?;
    files.push(mpath);
    Ok(RunOutcome { success, files, tables })
}
