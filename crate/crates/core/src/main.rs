use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use gwp_lab::harness::{self, checks, ExperimentConfig};
use gwp_lab::{par, Error, ErrorKind, Result};

/// Gaussian wave packet dynamics lab.
#[derive(Parser)]
#[command(name = "gwp", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
    #[command(flatten)]
    common: Common,
}

#[derive(Args)]
struct Common {
    /// Experiment config (JSON); built-in torsional defaults when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory; overrides `output_dir` from the config.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    jobs: Option<usize>,
    /// Use the configured solver grid and step as given.
    #[arg(long, global = true)]
    no_refine: bool,
}

#[derive(Subcommand)]
enum Command {
    /// Compare both flows with the reference solution at one ε.
    Evolve {
        /// ε for the run; defaults to the first entry of `eps_list`.
        #[arg(long)]
        eps: Option<f64>,
    },
    /// ε-sweep with slope fits and report files.
    Sweep,
    /// Orthonormality and ladder identities of the basis.
    BasisCheck {
        #[arg(long, default_value_t = basis_order())]
        max_order: usize,
    },
    /// Residual identities and third-state orthogonality.
    ResidualCheck,
}

fn basis_order() -> usize {
    gwp_lab::basis::DEFAULT_MAX_ORDER
}

fn load(common: &Common) -> Result<ExperimentConfig> {
    let mut cfg = match &common.config {
        Some(path) => ExperimentConfig::load(path)?,
        None => ExperimentConfig::default(),
    };
    if common.no_refine {
        cfg.solver.refine = false;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn write(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).map_err(|e| Error::Io {
        path: path.to_path_buf(),
        source: e,
    })
}

fn out_dir(common: &Common, cfg: &ExperimentConfig) -> Result<PathBuf> {
    let dir = common.out.clone().unwrap_or_else(|| PathBuf::from(&cfg.output_dir));
    std::fs::create_dir_all(&dir).map_err(|e| Error::Io {
        path: dir.clone(),
        source: e,
    })?;
    Ok(dir)
}

/// Prints and stores a suite; `Ok(false)` when a check fails.
fn report_checks(dir: &Path, file: &str, label: &str, list: &[checks::Check]) -> Result<bool> {
    for ch in list {
        let tag = if ch.passed() { "PASS" } else { "FAIL" };
        println!("{tag} {label} {}: {:.3e} (< {:e})", ch.name, ch.value, ch.tolerance);
    }
    write(&dir.join(file), &checks::checks_csv(list))?;
    Ok(checks::all_passed(list))
}

fn run(cli: &Cli) -> Result<bool> {
    let cfg = load(&cli.common)?;
    let dir = out_dir(&cli.common, &cfg)?;
    match &cli.command {
        Command::Evolve { eps } => {
            let eps = eps.unwrap_or(cfg.eps_list[0]);
            let table = harness::run_compare(&cfg, eps)?;
            write(&dir.join("config.json"), &format!("{}\n", cfg.canonical_json()))?;
            write(&dir.join("compare.csv"), &harness::compare_csv(&table))?;
            let row = harness::SweepRow::from_table(&table);
            println!("eps = {eps:e}, grid points = {}, achieved_tol = {:.3e}", row.grid_points, row.achieved_tol);
            for (name, v) in row.quantities() {
                println!("{name:>22}  {v:.6e}");
            }
            Ok(true)
        }
        Command::Sweep => {
            let report = harness::epsilon_sweep(&cfg)?;
            harness::emit_report(&report, &dir)?;
            println!("config sha256 {}", report.config_hash);
            for s in &report.slopes {
                let (slope, r2) = s.fit.map(|f| (f.slope, f.r_squared)).unwrap_or((f64::NAN, f64::NAN));
                let flag = if s.reliable() { "" } else { "  (unreliable)" };
                println!("{:>22}  slope {slope:.4}  R² {r2:.4}{flag}", s.quantity);
            }
            if report.contamination {
                println!(
                    "warning: reference tolerance exceeds 1% of the smallest expectation error (largest {:.3e})",
                    report.max_achieved_tol
                );
            }
            Ok(true)
        }
        Command::BasisCheck { max_order } => {
            let mut ok = true;
            for (k, eps) in ends(&cfg.eps_list).into_iter().enumerate() {
                let params = cfg.initial.to_params(eps)?;
                let list = checks::basis_suite(&params, *max_order)?;
                let label = format!("eps={eps:e}");
                ok &= report_checks(&dir, &format!("basis_checks_{k}.csv"), &label, &list)?;
            }
            Ok(ok)
        }
        Command::ResidualCheck => {
            let mut ok = true;
            for (k, eps) in ends(&cfg.eps_list).into_iter().enumerate() {
                let params = cfg.initial.to_params(eps)?;
                let list = checks::residual_suite(&params, &cfg.potential)?;
                let label = format!("eps={eps:e}");
                ok &= report_checks(&dir, &format!("residual_checks_{k}.csv"), &label, &list)?;
            }
            Ok(ok)
        }
    }
}

/// Largest and smallest ε of the list.
fn ends(list: &[f64]) -> Vec<f64> {
    let mut out = vec![list[0]];
    if list.len() > 1 {
        out.push(list[list.len() - 1]);
    }
    out
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let result = match cli.common.jobs {
        Some(n) if n == 0 => Err(Error::InvalidConfig("--jobs must be positive".into())),
        Some(n) => par::with_threads(n, || run(&cli)),
        None => run(&cli),
    };
    match result {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(match e.kind() {
                ErrorKind::Validation => 1,
                ErrorKind::Numerical => 2,
                ErrorKind::Io => 3,
            })
        }
    }
}
