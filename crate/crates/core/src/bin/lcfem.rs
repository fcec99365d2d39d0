use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use lcfem::cli::{run, RefineMode, RunConfig};
use lcfem::physics::Formulation;

#[derive(Parser)]
#[command(name = "lcfem", version, about = "Adaptive finite-element solver for liquid-crystal director fields")]
struct Args {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Solve one configuration and write statistics, fields and a manifest.
    Run {
        /// TOML run file.
        config: PathBuf,
        #[arg(long)]
        preset: Option<String>,
        #[arg(long)]
        formulation: Option<Formulation>,
        #[arg(long)]
        levels: Option<usize>,
        /// adaptive, uniform or paired-both
        #[arg(long)]
        refine: Option<RefineMode>,
        #[arg(long)]
        flag_fraction: Option<f64>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let Command::Run { config, preset, formulation, levels, refine, flag_fraction, out } = Args::parse().command;
    let mut cfg = match RunConfig::load(&config) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {}: {e}", config.display());
            return ExitCode::from(2);
        }
    };
    if let Some(p) = preset {
        cfg.preset = p;
    }
    if let Some(f) = formulation {
        cfg.formulation = f;
    }
    if let Some(l) = levels {
        cfg.levels = l;
    }
    if let Some(r) = refine {
        cfg.refine = r;
    }
    if flag_fraction.is_some() {
        cfg.flag_fraction = flag_fraction;
    }
    if let Some(o) = out {
        cfg.out = o;
    }
    match run(&cfg) {
        Ok(outcome) => {
            for (name, t) in &outcome.tables {
                for r in &t.rows {
                    println!(
                        "{name:>8} level {}: G = {:.6}, wF = {:.6}, dev [{:.3e}, {:.3e}], dofs {}, Newton {}",
                        r.level, r.energy_g, r.energy_wf, r.min_dev, r.max_dev, r.dofs, r.newton_iters
                    );
                }
                println!("{name:>8} fine dofs {}, WU {:.3}, wall time {:.1} s", t.fine_dof, t.work_units, t.wall_time);
            }
            if outcome.success {
                ExitCode::SUCCESS
            } else {
                eprintln!("run failed; see {}", cfg.out.join("manifest.json").display());
                ExitCode::FAILURE
            }
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
