//! `gesfem` experiment driver.
//!
//! Exit status: 0 on success, 1 when the numerics fail (solver, model
//! assumption, degenerate geometry), 2 for usage and configuration errors.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use gesfem::experiment::{converge, meshgen, run, ExperimentConfig};
use gesfem::mesh::SurfaceKind;
use gesfem::Error;

/// Directory that relative `output_dir` entries are resolved against.
const OUTPUT_ROOT_VAR: &str = "GESFEM_OUTPUT_ROOT";

#[derive(Parser, Debug)]
#[command(name = "gesfem", version, about = "Evolving surface finite element experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Run an experiment to its final time, writing monitor.csv and VTK snapshots.
    Run {
        config: PathBuf,
        /// Output directory; overrides the one in the config.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run a space or time refinement ladder and print the error table.
    Converge {
        config: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Write an initial mesh as OFF (flat) or VTK.
    Meshgen(MeshgenArgs),
}

#[derive(ValueEnum, Clone, Copy, Debug)]
enum Kind {
    Sphere,
    Ellipsoid,
    Dumbbell,
    Cup,
}

#[derive(Args, Debug)]
struct MeshgenArgs {
    #[arg(long, value_enum)]
    kind: Kind,
    /// Sphere and cup radius.
    #[arg(long, default_value_t = 1.0)]
    radius: f64,
    /// Ellipsoid semi-axes.
    #[arg(long, default_value_t = 2.0)]
    a: f64,
    #[arg(long, default_value_t = 1.0)]
    b: f64,
    #[arg(long, default_value_t = 1.0)]
    c: f64,
    #[arg(long, default_value_t = 1.0)]
    half_length: f64,
    #[arg(long, default_value_t = 0.25)]
    neck: f64,
    #[arg(long, default_value_t = 0.8)]
    bulb: f64,
    /// Cup dent depth and width.
    #[arg(long, default_value_t = 0.5)]
    depth: f64,
    #[arg(long, default_value_t = 0.8)]
    width: f64,
    /// Icosphere subdivision level.
    #[arg(long, default_value_t = 3)]
    level: u32,
    /// 1 for flat, 2 for quadratic triangles (VTK only).
    #[arg(long, default_value_t = 1)]
    degree: usize,
    #[arg(long)]
    out: PathBuf,
}

impl MeshgenArgs {
    fn surface(&self) -> SurfaceKind {
        match self.kind {
            Kind::Sphere => SurfaceKind::Sphere { radius: self.radius },
            Kind::Ellipsoid => SurfaceKind::Ellipsoid {
                a: self.a,
                b: self.b,
                c: self.c,
            },
            Kind::Dumbbell => SurfaceKind::Dumbbell {
                half_length: self.half_length,
                neck: self.neck,
                bulb: self.bulb,
            },
            Kind::Cup => SurfaceKind::Cup {
                radius: self.radius,
                depth: self.depth,
                width: self.width,
            },
        }
    }
}

fn output_dir(config: &ExperimentConfig, out: Option<PathBuf>) -> PathBuf {
    if let Some(out) = out {
        return out;
    }
    if config.output_dir.is_absolute() {
        return config.output_dir.clone();
    }
    let root = std::env::var_os(OUTPUT_ROOT_VAR).map_or_else(|| PathBuf::from("."), PathBuf::from);
    root.join(&config.output_dir)
}

fn cmd_run(path: &Path, out: Option<PathBuf>) -> gesfem::Result<()> {
    let config = ExperimentConfig::load(path)?;
    let dir = output_dir(&config, out);
    let summary = run(&config, Some(&dir))?;
    println!("{summary}");
    println!("wrote {} files to {}", summary.files.len(), dir.display());
    Ok(())
}

fn cmd_converge(path: &Path, out: Option<PathBuf>) -> gesfem::Result<()> {
    let config = ExperimentConfig::load(path)?;
    let table = converge(&config)?;
    let dir = output_dir(&config, out);
    fs::create_dir_all(&dir)?;
    let csv = dir.join("convergence.csv");
    fs::write(&csv, table.to_csv())?;
    println!("{table}");
    println!("wrote {}", csv.display());
    Ok(())
}

fn cmd_meshgen(args: &MeshgenArgs) -> gesfem::Result<()> {
    let mesh = meshgen(args.surface(), args.level, args.degree, &args.out)?;
    println!(
        "wrote {} nodes, {} triangles to {}",
        mesh.node_count(),
        mesh.element_count(),
        args.out.display()
    );
    Ok(())
}

fn exit_code(e: &Error) -> ExitCode {
    if e.is_numerical() {
        ExitCode::from(1)
    } else {
        ExitCode::from(2)
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(e.exit_code() as u8);
        }
    };
    let result = match &cli.command {
        Command::Run { config, out } => cmd_run(config, out.clone()),
        Command::Converge { config, out } => cmd_converge(config, out.clone()),
        Command::Meshgen(args) => cmd_meshgen(args),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}
