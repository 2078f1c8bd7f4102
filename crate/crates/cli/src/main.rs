use std::path::{Path, PathBuf};

use anyhow::Result;
use clap::{Args, Parser, Subcommand};
use hyperdisc::intersections::{DEDUP_TOL, DEFAULT_EPSILON, DEFAULT_GRID, DEFAULT_TAU};
use hyperdisc::training::{sci, Progress};
use hyperdisc::SearchParams;
use hyperdisc_cli::commands::{self, output_root, ReportRow, Target};
use hyperdisc_cli::export::MeshModel;
use hyperdisc_cli::{Checkpoint, ExperimentConfig};

#[derive(Parser)]
#[command(name = "hyperdisc", version, about = "Train minimal discs in hyperbolic space and count their double points")]
struct Cli {
    /// Worker threads (default: all cores). Results do not depend on it.
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct SearchArgs {
    #[arg(long, default_value_t = DEFAULT_GRID)]
    grid: usize,
    #[arg(long, default_value_t = DEFAULT_EPSILON)]
    eps: f64,
    #[arg(long, default_value_t = DEFAULT_TAU)]
    tau: f64,
}

impl SearchArgs {
    fn params(&self) -> SearchParams {
        SearchParams { grid_res: self.grid, epsilon: self.eps, tau: self.tau, dedup_tol: DEDUP_TOL }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Train a disc from a TOML experiment file.
    Train {
        config: PathBuf,
        /// Output directory (default: `$HYPERDISC_OUT/<out_dir>`).
        #[arg(long)]
        out: Option<PathBuf>,
        /// Print the loss every this many Adam epochs / L-BFGS iterations.
        #[arg(long, default_value_t = 100)]
        every: usize,
    },
    /// Monte Carlo loss statistics and a residual heatmap.
    Eval {
        checkpoint: PathBuf,
        #[arg(long, default_value_t = 1000)]
        samples: usize,
        #[arg(long, default_value_t = 1 << 14)]
        size: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Heatmap grid side; 0 disables it.
        #[arg(long, default_value_t = 128)]
        heatmap_grid: usize,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Locate and sign transverse double points.
    Intersect {
        /// Checkpoint path, or `fixture:<name>` for an analytic test map.
        target: String,
        #[command(flatten)]
        search: SearchArgs,
        /// Grid side of the exported self-proximity field; 0 disables it.
        #[arg(long, default_value_t = 128)]
        field_grid: usize,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// One summary row: signed count, HOMFLY verdict and Monte Carlo loss.
    Report {
        checkpoint: PathBuf,
        /// `records.csv` from `intersect`; without it the search is run.
        #[arg(long)]
        records: Option<PathBuf>,
        /// `eval.txt` from `eval`.
        #[arg(long)]
        eval: Option<PathBuf>,
        #[command(flatten)]
        search: SearchArgs,
    },
    /// Triangulated image of the disc as vertex and face tables.
    ExportSurface {
        checkpoint: PathBuf,
        #[arg(long, value_enum, default_value_t = MeshModel::Ball)]
        model: MeshModel,
        #[arg(long, default_value_t = 32)]
        rings: usize,
        #[arg(long, default_value_t = 128)]
        sectors: usize,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

/// `--out`, else `$HYPERDISC_OUT`, else the checkpoint's directory.
fn out_dir(out: Option<PathBuf>, checkpoint: &Path) -> PathBuf {
    out.or_else(|| std::env::var_os(commands::OUT_ENV).map(PathBuf::from))
        .unwrap_or_else(|| commands::beside(checkpoint))
}

fn run(cli: Cli) -> Result<()> {
    if let Some(n) = cli.threads {
        rayon::ThreadPoolBuilder::new().num_threads(n).build_global()?;
    }
    match cli.command {
        Command::Train { config, out, every } => {
            let cfg = ExperimentConfig::load(&config)?;
            let dir = out.unwrap_or_else(|| output_root().join(&cfg.out_dir));
            let every = every.max(1);
            let mut observer = |p: &Progress| match *p {
                Progress::Adam { epoch, loss, lr } if epoch % every == 0 => {
                    eprintln!("adam  {epoch:>6}  loss {}  lr {}", sci(loss), sci(lr));
                }
                Progress::Lbfgs { iteration, loss } if iteration % every == 0 => {
                    eprintln!("lbfgs {iteration:>6}  loss {}", sci(loss));
                }
                _ => {}
            };
            let res = commands::cmd_train(&cfg, &dir, &mut observer)?;
            let r = &res.report;
            println!("best loss {} ({:.1} s)", sci(r.best_loss), r.wall_time_s);
            if let Some(t) = r.termination {
                println!("L-BFGS stopped: {}", t.as_str());
            }
            if let Some(msg) = &r.aborted {
                println!("Adam aborted: {msg}");
            }
            println!("wrote {}", dir.join("checkpoint.toml").display());
        }
        Command::Eval { checkpoint, samples, size, seed, heatmap_grid, out } => {
            let ckpt = Checkpoint::load(&checkpoint)?;
            let dir = out_dir(out, &checkpoint);
            let res = commands::cmd_eval(&ckpt, samples, size, seed, heatmap_grid, &dir)?;
            println!("{}", res.line);
        }
        Command::Intersect { target, search, field_grid, out } => {
            let t = Target::parse(&target)?;
            let dir = match (&t, out) {
                (_, Some(d)) => d,
                (Target::Fixture(f), None) => output_root().join(format!("fixture-{}", f.name())),
                (Target::Checkpoint(_), None) => out_dir(None, Path::new(&target)),
            };
            let rep = commands::cmd_intersect(&t, &search.params(), field_grid, &dir)?;
            println!(
                "{} candidates, {} double points ({} not transverse), {} Newton failures",
                rep.candidates.len(),
                rep.records.len(),
                rep.non_transverse.len(),
                rep.newton_failures
            );
            for r in &rep.records {
                let s = hyperdisc::intersections::intersection_sign(r)?;
                println!(
                    "  ({:+.6}, {:+.6}) ~ ({:+.6}, {:+.6})  residual {:.1e}  sign {s:+}",
                    r.p1[0], r.p1[1], r.p2[0], r.p2[1], r.residual
                );
            }
            println!("self-intersection number {}", rep.self_intersection);
        }
        Command::Report { checkpoint, records, eval, search } => {
            let ckpt = Checkpoint::load(&checkpoint)?;
            let row = commands::cmd_report(&ckpt, records.as_deref(), eval.as_deref(), &search.params())?;
            println!("{}", ReportRow::header());
            println!("{row}");
        }
        Command::ExportSurface { checkpoint, model, rings, sectors, out } => {
            let ckpt = Checkpoint::load(&checkpoint)?;
            let dir = out_dir(out, &checkpoint);
            let mesh = commands::cmd_export_surface(&ckpt, rings, sectors, model, &dir)?;
            println!("{} vertices, {} faces in {}", mesh.vertices.len(), mesh.faces.len(), dir.display());
        }
    }
    Ok(())
}

fn main() {
    if let Err(e) = run(Cli::parse()) {
        eprintln!("error: {e:#}");
        std::process::exit(1);
    }
}
