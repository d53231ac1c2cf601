use std::fs::{self, File};
use std::io::BufWriter;
use std::path::PathBuf;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use fddlm_core::bench::{self, CaseKind, RunConfig};
use fddlm_core::mesh::{build_disk_hierarchy, build_square_hierarchy};

#[derive(Parser)]
#[command(name = "fddlm", version, about = "FD-DLM solver and preconditioner benchmark")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the benchmark matrix and write CSV / SVG output.
    Run(RunArgs),
    /// Assemble one system and export its blocks as MatrixMarket files.
    Export(ExportArgs),
}

#[derive(Args)]
struct RunArgs {
    /// Comma separated cases (e1l2, e1h1, e2l2) or "all".
    #[arg(long)]
    element: Option<String>,
    /// Comma separated shapes (p1, p2, p3) or "all".
    #[arg(long)]
    shape: Option<String>,
    /// Comma separated variants (dd, dm, md, mm) or "all".
    #[arg(long)]
    variant: Option<String>,
    #[arg(long)]
    min_level: Option<usize>,
    #[arg(long)]
    max_level: Option<usize>,
    #[arg(long)]
    beta: Option<f64>,
    #[arg(long)]
    beta2: Option<f64>,
    #[arg(long)]
    f: Option<f64>,
    #[arg(long)]
    f2: Option<f64>,
    /// Allow beta2 <= beta (warns instead of failing).
    #[arg(long)]
    allow_relaxed_beta: bool,
    /// GMRES residual tolerance (absolute unless --relative).
    #[arg(long)]
    tol: Option<f64>,
    #[arg(long)]
    max_iter: Option<usize>,
    #[arg(long)]
    restart: Option<usize>,
    /// Pre- and post-smoothing steps.
    #[arg(long)]
    smooth_steps: Option<usize>,
    /// Smoothing steps for the Vanka B cycle with element 2.
    #[arg(long)]
    vanka_smooth_steps: Option<usize>,
    #[arg(long)]
    sor_omega: Option<f64>,
    #[arg(long)]
    disk_level_offset: Option<i64>,
    /// Largest system handled with a dense SVD; larger ones are estimated.
    #[arg(long)]
    dense_cap: Option<usize>,
    /// Skip the condition number computation.
    #[arg(long)]
    no_condition: bool,
    /// Treat --tol as relative to the initial residual.
    #[arg(long)]
    relative: bool,
    #[arg(long)]
    csv: Option<PathBuf>,
    #[arg(long)]
    plots: Option<PathBuf>,
    /// key=value settings file; command line flags take precedence.
    #[arg(long)]
    config: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum ExportCase {
    E1l2,
    E1h1,
    E2l2,
}

#[derive(Args)]
struct ExportArgs {
    #[arg(long, value_enum)]
    element: ExportCase,
    #[arg(long, default_value_t = 2)]
    level: usize,
    #[arg(long, default_value_t = 0)]
    disk_level_offset: i64,
    /// Output directory.
    #[arg(long)]
    out: PathBuf,
    /// Also write plain-text listings of both meshes.
    #[arg(long)]
    meshes: bool,
}

impl RunArgs {
    fn overrides(&self) -> Vec<(&'static str, String)> {
        let mut kv = Vec::new();
        let mut push = |k: &'static str, v: Option<String>| {
            if let Some(v) = v {
                kv.push((k, v));
            }
        };
        push("element", self.element.clone());
        push("shape", self.shape.clone());
        push("variant", self.variant.clone());
        push("min-level", self.min_level.map(|v| v.to_string()));
        push("max-level", self.max_level.map(|v| v.to_string()));
        push("beta", self.beta.map(|v| v.to_string()));
        push("beta2", self.beta2.map(|v| v.to_string()));
        push("f", self.f.map(|v| v.to_string()));
        push("f2", self.f2.map(|v| v.to_string()));
        push("tol", self.tol.map(|v| v.to_string()));
        push("max-iter", self.max_iter.map(|v| v.to_string()));
        push("restart", self.restart.map(|v| v.to_string()));
        push("smooth-steps", self.smooth_steps.map(|v| v.to_string()));
        push("vanka-smooth-steps", self.vanka_smooth_steps.map(|v| v.to_string()));
        push("sor-omega", self.sor_omega.map(|v| v.to_string()));
        push("disk-level-offset", self.disk_level_offset.map(|v| v.to_string()));
        push("dense-cap", self.dense_cap.map(|v| v.to_string()));
        push("allow-relaxed-beta", self.allow_relaxed_beta.then(|| "true".into()));
        push("relative", self.relative.then(|| "true".into()));
        push("condition", self.no_condition.then(|| "false".into()));
        kv
    }
}

fn run(args: RunArgs) -> Result<()> {
    let mut config = RunConfig::default();
    if let Some(path) = &args.config {
        bench::load_config_file(path, &mut config)
            .with_context(|| format!("reading config {}", path.display()))?;
    }
    for (k, v) in args.overrides() {
        config.set(k, &v).with_context(|| format!("--{k} {v}"))?;
    }
    config.validate()?;

    let outcome = bench::run_matrix(&config)?;
    for (id, err) in &outcome.failures {
        eprintln!("failed: {id}: {err}");
    }
    match &args.csv {
        Some(path) => {
            bench::emit_csv(&outcome.rows, path).with_context(|| format!("writing {}", path.display()))?
        }
        None => bench::write_csv(&outcome.rows, std::io::stdout().lock())?,
    }
    if let Some(dir) = &args.plots {
        let files = bench::emit_plots(&outcome.rows, dir)?;
        log::info!("wrote {} plot files to {}", files.len(), dir.display());
    }
    if outcome.rows.is_empty() && !outcome.failures.is_empty() {
        bail!("every case failed");
    }
    Ok(())
}

fn export(args: ExportArgs) -> Result<()> {
    let kind = match args.element {
        ExportCase::E1l2 => CaseKind::E1L2,
        ExportCase::E1h1 => CaseKind::E1H1,
        ExportCase::E2l2 => CaseKind::E2L2,
    };
    let config = RunConfig {
        disk_level_offset: args.disk_level_offset,
        ..RunConfig::default()
    };
    let disk_level = config.disk_level(args.level)?;
    let problem = config.problem_for(kind);
    let system = fddlm_core::assembly::assemble_system(&problem, args.level, disk_level)?;
    fs::create_dir_all(&args.out)?;
    let blocks = [
        ("a", system.full_matrix()),
        ("a1", system.a1.clone()),
        ("a2", system.a2.clone()),
        ("c1", system.c1.clone()),
        ("c2", system.c2.clone()),
        ("b", system.b_matrix()),
    ];
    for (name, m) in blocks {
        let path = args.out.join(format!("{name}.mtx"));
        m.write_matrix_market(BufWriter::new(File::create(&path)?))?;
    }
    let rhs = system.full_rhs();
    let rhs_text: String = rhs.iter().map(|v| format!("{v:e}\n")).collect();
    fs::write(args.out.join("rhs.txt"), rhs_text)?;
    if args.meshes {
        let square = build_square_hierarchy(problem.square_half_width, args.level)?;
        let disk = build_disk_hierarchy(problem.disk_radius, disk_level)?;
        square
            .level(args.level)
            .write_listing(BufWriter::new(File::create(args.out.join("square.txt"))?))?;
        disk.level(disk_level)
            .write_listing(BufWriter::new(File::create(args.out.join("disk.txt"))?))?;
    }
    println!("exported {kind} level {} ({} unknowns) to {}", args.level, system.n_total(), args.out.display());
    Ok(())
}

fn main() -> Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match Cli::parse().command {
        Command::Run(args) => run(args),
        Command::Export(args) => export(args),
    }
}
