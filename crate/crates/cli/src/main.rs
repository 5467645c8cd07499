//! Command-line driver: grid construction and verification, the A₂ and
//! complexity sweeps with CSV/SVG artifacts, single-cell reproduction, the
//! lemma fuzz battery, and operator export. Exits zero iff everything that
//! was asserted passed.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};

use dyadic_core::experiments::{
    operators_json, run_a2_cell, run_a2_sweep, run_complexity_cell, run_complexity_sweep,
    run_lemma_battery, run_oscillation_battery, RunConfig, SweepResult, SweepRow, SystemFile,
};
use dyadic_core::{verify_built, verify_system};

#[derive(Parser)]
#[command(
    name = "dyadic",
    version,
    about = "Dyadic structures on finite quasi-metric spaces: grids, sweeps, fuzzing"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Build the dyadic grid for a configuration, verify its defining
    /// properties, and optionally export it as a self-contained JSON file.
    BuildGrid {
        #[arg(long)]
        config: PathBuf,
        /// Where to write the system JSON (space recipe + cube data).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Re-verify a previously exported system file.
    Verify {
        #[arg(long)]
        system: PathBuf,
    },
    /// Measure weighted operator norms against the A₂ characteristic and
    /// write CSV/SVG artifacts.
    SweepA2 {
        #[arg(long)]
        config: PathBuf,
        /// Artifact directory (defaults to the config's out_dir).
        #[arg(long)]
        out: Option<PathBuf>,
        /// Reproduce a single cell, e.g. `alpha=0.9` or `alpha=0.9,k=3`,
        /// printing its rows as CSV instead of running the sweep.
        #[arg(long)]
        cell: Option<String>,
    },
    /// Measure weak-type and norm growth against operator complexity and
    /// write CSV/SVG artifacts.
    SweepComplexity {
        #[arg(long)]
        config: PathBuf,
        /// Artifact directory (defaults to the config's out_dir).
        #[arg(long)]
        out: Option<PathBuf>,
        /// Reproduce a single cell, e.g. `k=3`, printing its rows as CSV
        /// instead of running the sweep.
        #[arg(long)]
        cell: Option<String>,
    },
    /// Run the median/oscillation lemma battery plus the kernel
    /// oscillation battery at the configured case counts.
    Fuzz {
        #[arg(long)]
        config: PathBuf,
        /// Optional artifact directory for the battery CSVs.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Export the averaging operators (term lists included) as JSON.
    ExportOps {
        #[arg(long)]
        config: PathBuf,
        /// Operator complexity to build.
        #[arg(long)]
        k: u32,
        /// Where to write the JSON (stdout when omitted).
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::FAILURE,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

fn run(cli: Cli) -> Result<bool> {
    match cli.command {
        Command::BuildGrid { config, out } => build_grid(&config, out.as_deref()),
        Command::Verify { system } => verify(&system),
        Command::SweepA2 { config, out, cell } => {
            let config = load_config(&config)?;
            match cell {
                Some(cell) => {
                    let (alpha, k) = parse_cell(&cell)?;
                    let alpha = alpha
                        .context("an A2 cell needs a weight exponent, e.g. --cell alpha=0.9")?;
                    let rows = run_a2_cell(&config, alpha, k)?;
                    print_rows(&rows);
                    Ok(true)
                }
                None => {
                    let result = run_a2_sweep(&config)?;
                    report_sweep(&result, resolve_out(out, &config).as_deref())
                }
            }
        }
        Command::SweepComplexity { config, out, cell } => {
            let config = load_config(&config)?;
            match cell {
                Some(cell) => {
                    let (alpha, k) = parse_cell(&cell)?;
                    if alpha.is_some() {
                        bail!("a complexity cell is addressed by k alone, e.g. --cell k=3");
                    }
                    let k = k.context("a complexity cell needs k, e.g. --cell k=3")?;
                    let rows = run_complexity_cell(&config, k)?;
                    print_rows(&rows);
                    Ok(true)
                }
                None => {
                    let result = run_complexity_sweep(&config)?;
                    report_sweep(&result, resolve_out(out, &config).as_deref())
                }
            }
        }
        Command::Fuzz { config, out } => fuzz(&config, out.as_deref()),
        Command::ExportOps { config, k, out } => {
            let config = load_config(&config)?;
            let text = operators_json(&config, k)?;
            match out {
                Some(path) => {
                    std::fs::write(&path, text)
                        .with_context(|| format!("writing {}", path.display()))?;
                    println!("wrote {}", path.display());
                }
                None => println!("{text}"),
            }
            Ok(true)
        }
    }
}

fn load_config(path: &Path) -> Result<RunConfig> {
    RunConfig::from_json_file(path)
        .with_context(|| format!("loading configuration {}", path.display()))
}

fn resolve_out(cli_out: Option<PathBuf>, config: &RunConfig) -> Option<PathBuf> {
    cli_out.or_else(|| config.out_dir.as_ref().map(PathBuf::from))
}

fn build_grid(config_path: &Path, out: Option<&Path>) -> Result<bool> {
    let config = load_config(config_path)?;
    let space = config.build_space()?;
    let system = config.build_system(&space)?;
    let report = verify_built(&system, &space);
    println!("{}", report.summary());
    if let Some(path) = out {
        let file = SystemFile { space: config.space.clone(), system: system.to_raw() };
        std::fs::write(path, file.to_json_pretty())
            .with_context(|| format!("writing {}", path.display()))?;
        println!("wrote {}", path.display());
    }
    Ok(report.pass())
}

fn verify(system_path: &Path) -> Result<bool> {
    let file = SystemFile::from_json_file(system_path)
        .with_context(|| format!("loading system file {}", system_path.display()))?;
    let space = file.space.build()?;
    let report = verify_system(&file.system, &space);
    println!("{}", report.summary());
    Ok(report.pass())
}

fn report_sweep(result: &SweepResult, out: Option<&Path>) -> Result<bool> {
    println!(
        "{} sweep: {} rows, {} fitted trends",
        result.label,
        result.rows.len(),
        result.slopes.len()
    );
    for s in &result.slopes {
        println!(
            "  {} {}: slope {:.4} (std err {:.4}, {} points)",
            s.operator, s.measure, s.slope, s.std_err, s.points
        );
    }
    println!(
        "constants: {}",
        serde_json::to_string(&result.constants).context("constants serialize")?
    );
    if let Some(dir) = out {
        result.write(dir)?;
        println!("artifacts written under {}", dir.display());
    }
    if result.pass() {
        println!("PASS");
        Ok(true)
    } else {
        for p in &result.problems {
            println!("FAIL {p}");
        }
        Ok(false)
    }
}

fn fuzz(config_path: &Path, out: Option<&Path>) -> Result<bool> {
    let config = load_config(config_path)?;
    let battery = run_lemma_battery(&config)?;
    for row in &battery.rows {
        println!(
            "{} {}: {} cases, {} violations, worst excess {:e}",
            if row.violations == 0 { "ok  " } else { "FAIL" },
            row.lemma,
            row.cases,
            row.violations,
            row.worst
        );
    }
    let oscillation = run_oscillation_battery(&config)?;
    let d1 = oscillation.constants.d1.unwrap_or(f64::NAN);
    println!(
        "{} oscillation_vs_dilation_series: {} cases, worst ratio {:.6}",
        if oscillation.pass() && d1.is_finite() { "ok  " } else { "FAIL" },
        oscillation.rows.len() * oscillation.rows.first().map_or(0, |r| r.iterations),
        d1
    );
    if let Some(dir) = out {
        std::fs::create_dir_all(dir)
            .with_context(|| format!("creating {}", dir.display()))?;
        battery.to_table().write_csv(&dir.join("lemma_battery.csv"))?;
        oscillation.write(dir)?;
        println!("artifacts written under {}", dir.display());
    }
    let pass = battery.pass() && oscillation.pass() && d1.is_finite();
    println!("{}", if pass { "PASS" } else { "FAIL" });
    Ok(pass)
}

/// Parses `alpha=0.9,k=3` (unicode `α` accepted, parts optional).
fn parse_cell(text: &str) -> Result<(Option<f64>, Option<u32>)> {
    let mut alpha = None;
    let mut k = None;
    for part in text.split(',') {
        let part = part.trim();
        if part.is_empty() {
            continue;
        }
        let (key, value) = part
            .split_once('=')
            .with_context(|| format!("cell component `{part}` is not key=value"))?;
        match key.trim() {
            "alpha" | "α" | "a" => {
                alpha = Some(
                    value
                        .trim()
                        .parse::<f64>()
                        .with_context(|| format!("weight exponent `{value}`"))?,
                );
            }
            "k" => {
                k = Some(
                    value
                        .trim()
                        .parse::<u32>()
                        .with_context(|| format!("complexity `{value}`"))?,
                );
            }
            other => bail!("unknown cell key `{other}` (use alpha or k)"),
        }
    }
    if alpha.is_none() && k.is_none() {
        bail!("empty cell description");
    }
    Ok((alpha, k))
}

fn print_rows(rows: &[SweepRow]) {
    println!("alpha,a2,k,operator,measure,value,ratio,converged,iterations,cell_seed");
    for r in rows {
        println!(
            "{},{},{},{},{},{},{},{},{},{}",
            r.alpha,
            r.a2,
            r.k,
            r.operator,
            r.measure,
            r.value,
            r.ratio,
            r.converged,
            r.iterations,
            r.cell_seed
        );
    }
}
