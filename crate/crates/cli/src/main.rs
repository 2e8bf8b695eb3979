//! `awar`: generate synthetic shift data, run labeling experiments, sweep
//! hyperparameters and compare algorithms.
//!
//! Exit codes: 0 on success, 1 when arguments or inputs are invalid, 2 when a
//! computation or an output write fails.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::Context;
use awar::pipeline::io::{
    read_curves_csv, read_header, read_summary_csv, write_atomic, write_curves_csv, write_dataset_csv, write_jsonl,
    write_summary_csv, write_sweep_csv,
};
use awar::pipeline::{gen_synthetic, mean_aupc, run_prepared, sweep_prepared, ExperimentData, RawData, DEFAULT_SEED};
use awar::stats::{compare, write_pairwise_csv, ScoreTable};
use awar::{AwarError, ExperimentManifest, ShiftSpec, SweepParam};
use clap::{Args, Parser, Subcommand};

#[derive(Debug, Parser)]
#[command(name = "awar", version, about = "Active weighted adaptation regularization experiments")]
struct Cli {
    /// More log output (-v info, -vv debug).
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    verbose: u8,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate a synthetic source/target pair from a shift spec.
    Gen {
        /// JSON shift spec; omitted fields take their defaults.
        #[arg(long)]
        spec: PathBuf,
        #[arg(long, default_value_t = DEFAULT_SEED)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run every algorithm of a manifest and write curves and selections.
    Run {
        #[command(flatten)]
        manifest: ManifestArgs,
        #[arg(long)]
        out: PathBuf,
    },
    /// Friedman and Dunn tests on a curves or summary CSV.
    Stats {
        /// `curves.csv` or `summary.csv` written by `run`.
        #[arg(long)]
        curves: PathBuf,
        /// Output directory; defaults to the input's directory.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Rerun a manifest over several values of one hyperparameter.
    Sweep {
        #[command(flatten)]
        manifest: ManifestArgs,
        #[arg(long)]
        param: SweepParam,
        /// Comma-separated values.
        #[arg(long, value_delimiter = ',', required = true)]
        values: Vec<f64>,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Debug, Args)]
struct ManifestArgs {
    #[arg(long)]
    manifest: PathBuf,
    /// Resolve relative data paths against this directory instead of the manifest's.
    #[arg(long)]
    data_dir: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    repeats: Option<usize>,
    #[arg(long)]
    iterations: Option<usize>,
    /// Parallel repeats; 0 uses every core.
    #[arg(long, default_value_t = 0)]
    jobs: usize,
}

impl ManifestArgs {
    fn load(&self) -> anyhow::Result<ExperimentManifest> {
        let text = std::fs::read_to_string(&self.manifest)
            .with_context(|| format!("cannot read manifest {}", self.manifest.display()))?;
        let mut m: ExperimentManifest =
            serde_json::from_str(&text).with_context(|| format!("cannot parse manifest {}", self.manifest.display()))?;
        let base = match &self.data_dir {
            Some(dir) => dir.clone(),
            None => self.manifest.parent().map(Path::to_path_buf).unwrap_or_default(),
        };
        m.resolve_paths(&base);
        if let Some(seed) = self.seed {
            m.seed = seed;
        }
        if let Some(r) = self.repeats {
            m.repeats = r;
        }
        if let Some(t) = self.iterations {
            m.max_iterations = t;
        }
        m.validate()?;
        Ok(m)
    }
}

/// Which exit code an error maps to.
enum Failure {
    Invalid(anyhow::Error),
    Runtime(anyhow::Error),
}

type Outcome = std::result::Result<(), Failure>;

fn invalid<E: Into<anyhow::Error>>(e: E) -> Failure {
    Failure::Invalid(e.into())
}

fn runtime<E: Into<anyhow::Error>>(e: E) -> Failure {
    Failure::Runtime(e.into())
}

/// Library errors during computation: bad parameters are the caller's fault,
/// numerical failures are not.
fn classify(e: AwarError) -> Failure {
    match e {
        AwarError::Singular(_) | AwarError::NotConvex(_) | AwarError::QpFailed { .. } | AwarError::Io { .. } => {
            runtime(e)
        }
        _ => invalid(e),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let level = match cli.verbose {
        0 => log::LevelFilter::Warn,
        1 => log::LevelFilter::Info,
        _ => log::LevelFilter::Debug,
    };
    env_logger::Builder::new().filter_level(level).format_timestamp(None).init();

    let result = match cli.command {
        Command::Gen { spec, seed, out } => gen(&spec, seed, &out),
        Command::Run { manifest, out } => run(&manifest, &out),
        Command::Stats { curves, out } => stats(&curves, out.as_deref()),
        Command::Sweep {
            manifest,
            param,
            values,
            out,
        } => sweep(&manifest, param, &values, &out),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Invalid(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
        Err(Failure::Runtime(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}

fn create_dir(dir: &Path) -> Outcome {
    std::fs::create_dir_all(dir)
        .with_context(|| format!("cannot create output directory {}", dir.display()))
        .map_err(runtime)
}

fn gen(spec_path: &Path, seed: u64, out: &Path) -> Outcome {
    let text = std::fs::read_to_string(spec_path)
        .with_context(|| format!("cannot read spec {}", spec_path.display()))
        .map_err(invalid)?;
    let spec: ShiftSpec = serde_json::from_str(&text)
        .with_context(|| format!("cannot parse spec {}", spec_path.display()))
        .map_err(invalid)?;
    let data = gen_synthetic(&spec, seed).map_err(invalid)?;
    create_dir(out)?;
    write_dataset_csv(&out.join("source.csv"), &data.source).map_err(runtime)?;
    write_dataset_csv(&out.join("target.csv"), &data.target).map_err(runtime)?;
    if let Some(all) = &data.target_all {
        write_dataset_csv(&out.join("target_all.csv"), all).map_err(runtime)?;
    }
    log::info!(
        "wrote {} source and {} target rows to {}",
        data.source.n_rows(),
        data.target.n_rows(),
        out.display()
    );
    Ok(())
}

fn load_inputs(args: &ManifestArgs) -> std::result::Result<(ExperimentManifest, RawData), Failure> {
    let manifest = args.load().map_err(invalid)?;
    let raw = RawData::load(&manifest).map_err(invalid)?;
    Ok((manifest, raw))
}

fn run(args: &ManifestArgs, out: &Path) -> Outcome {
    let (manifest, raw) = load_inputs(args)?;
    let data = ExperimentData::prepare(&raw, manifest.pca_dim).map_err(invalid)?;
    let result = run_prepared(&data, &manifest, args.jobs).map_err(classify)?;
    create_dir(out)?;
    write_curves_csv(&out.join("curves.csv"), &result.curves).map_err(runtime)?;
    write_summary_csv(&out.join("summary.csv"), &result.curves).map_err(runtime)?;
    write_jsonl(&out.join("selections.jsonl"), &result.selections).map_err(runtime)?;
    for alg in &manifest.algorithms {
        match mean_aupc(&result.curves, alg.name()) {
            Some(v) => println!("{:<12} mean AUPC {v:.4}", alg.name()),
            None => println!("{:<12} mean AUPC n/a", alg.name()),
        }
    }
    Ok(())
}

fn stats(input: &Path, out: Option<&Path>) -> Outcome {
    let header = read_header(input).map_err(invalid)?;
    let table = if header.iter().any(|h| h == "bca") {
        ScoreTable::from_curves(&read_curves_csv(input).map_err(invalid)?)
    } else if header.iter().any(|h| h == "aupc") {
        ScoreTable::from_summary(&read_summary_csv(input).map_err(invalid)?)
    } else {
        return Err(invalid(anyhow::anyhow!(
            "{} is neither a curves nor a summary file (no bca or aupc column)",
            input.display()
        )));
    }
    .map_err(invalid)?;
    let report = compare(&table).map_err(invalid)?;

    let dir = match out {
        Some(d) => d.to_path_buf(),
        None => input.parent().map(Path::to_path_buf).unwrap_or_default(),
    };
    if !dir.as_os_str().is_empty() {
        create_dir(&dir)?;
    }
    write_pairwise_csv(&dir.join("pairwise.csv"), &report).map_err(runtime)?;
    let friedman = serde_json::json!({
        "blocks": report.blocks,
        "algorithms": table.algorithms(),
        "statistic": report.friedman.statistic,
        "df": report.friedman.df,
        "p_value": report.friedman.p_value,
    });
    let mut bytes = serde_json::to_vec_pretty(&friedman).map_err(runtime)?;
    bytes.push(b'\n');
    write_atomic(&dir.join("friedman.json"), &bytes).map_err(runtime)?;

    println!(
        "Friedman chi2 = {:.4} (df {}), p = {:.3e} over {} blocks",
        report.friedman.statistic, report.friedman.df, report.friedman.p_value, report.blocks
    );
    for p in report.pairs.iter().filter(|p| p.significant) {
        println!(
            "  {} vs {}: z = {:+.3}, adjusted p = {:.3e}",
            p.algorithm_a, p.algorithm_b, p.z, p.p_adjusted
        );
    }
    Ok(())
}

fn sweep(args: &ManifestArgs, param: SweepParam, values: &[f64], out: &Path) -> Outcome {
    let (manifest, raw) = load_inputs(args)?;
    if values.iter().any(|v| !v.is_finite()) {
        return Err(invalid(anyhow::anyhow!("sweep values must be finite")));
    }
    let points = sweep_prepared(&raw, &manifest, param, values, args.jobs).map_err(classify)?;
    create_dir(out)?;

    let runs: Vec<(f64, &[awar::PerformanceCurve])> =
        points.iter().map(|p| (p.value, p.output.curves.as_slice())).collect();
    write_sweep_csv(&out.join("sweep.csv"), param.name(), &runs).map_err(runtime)?;

    for alg in &manifest.algorithms {
        let means: Vec<String> = points
            .iter()
            .map(|p| match mean_aupc(&p.output.curves, alg.name()) {
                Some(v) => format!("{}={}: {v:.4}", param.name(), p.value),
                None => format!("{}={}: n/a", param.name(), p.value),
            })
            .collect();
        println!("{:<12} {}", alg.name(), means.join(", "));
    }
    Ok(())
}
