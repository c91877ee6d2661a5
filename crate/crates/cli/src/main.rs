//! `amcfl`: dataset generation, experiments and self-checks.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use amc_fl::data::{generate_dataset, load_dataset, save_dataset, GenerateSpec};
use amc_fl::experiments::{
    build_pools, parse_config, pca_project, resolved_config, run_ablation, run_single, run_theta_sweep_on,
    write_outputs, AblationKind, ExperimentOutput, RunConfig,
};
use amc_fl::fl::AlgorithmKind;
use amc_fl::signal::{FrameConfig, ImpairmentSpec, ModulationScheme};
use amc_fl::{verify, Dataset, Error, Result};
use clap::{Args, Parser, Subcommand};
use serde_json::json;

#[derive(Parser)]
#[command(name = "amcfl", version, about = "Federated modulation-classification simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct ConfigArgs {
    /// Line-oriented key=value config file.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Extra key=value settings applied after the file.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
    /// Root under which the per-config output directory is created.
    #[arg(long, default_value = "out")]
    out: PathBuf,
}

#[derive(Subcommand)]
enum Command {
    /// Synthesize a dataset and write it in AMCD format.
    GenData {
        /// Comma-separated scheme names.
        #[arg(long, value_delimiter = ',', default_value = "bpsk,qpsk,8psk,pam4,qam16,qam64,cpfsk,gfsk")]
        schemes: Vec<String>,
        #[arg(long, default_value_t = -20, allow_negative_numbers = true)]
        snr_min: i32,
        #[arg(long, default_value_t = 18, allow_negative_numbers = true)]
        snr_max: i32,
        #[arg(long, default_value_t = 60)]
        frames_per_cell: usize,
        #[arg(long, default_value_t = 128)]
        frame_len: usize,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Centralized training over every SNR threshold.
    SweepTheta {
        #[command(flatten)]
        cfg: ConfigArgs,
        #[arg(long)]
        repeats: Option<usize>,
    },
    /// One federated run.
    RunFl {
        #[command(flatten)]
        cfg: ConfigArgs,
        #[arg(long)]
        algo: Option<String>,
        #[arg(long)]
        scenario: Option<String>,
    },
    /// FedVaccine with one setting varied.
    Ablate {
        #[command(flatten)]
        cfg: ConfigArgs,
        #[arg(long)]
        kind: String,
    },
    /// Principal components of a stored dataset.
    Pca {
        #[command(flatten)]
        cfg: ConfigArgs,
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        k: usize,
    },
    /// Run the built-in oracle checks.
    Verify,
}

fn seed_override() -> Result<Option<u64>> {
    match std::env::var("FV_SEED") {
        Ok(v) => v
            .trim()
            .parse()
            .map(Some)
            .map_err(|_| Error::Config(format!("FV_SEED must be an unsigned integer, got `{v}`"))),
        Err(_) => Ok(None),
    }
}

fn load_config(args: &ConfigArgs, mut extra: Vec<String>) -> Result<RunConfig> {
    let text = match &args.config {
        Some(p) => std::fs::read_to_string(p)?,
        None => String::new(),
    };
    let mut overrides = args.set.clone();
    overrides.append(&mut extra);
    if let Some(seed) = seed_override()? {
        overrides.push(format!("seed={seed}"));
    }
    parse_config(&text, &overrides)
}

fn finish(out_root: &Path, command: &str, cfg: &RunConfig, out: ExperimentOutput) -> Result<()> {
    let dir = write_outputs(out_root, &resolved_config(command, cfg), &out)?;
    println!("{}", dir.display());
    Ok(())
}

fn gen_data(
    schemes: &[String],
    snr_min: i32,
    snr_max: i32,
    frames_per_cell: usize,
    frame_len: usize,
    seed: u64,
    out: &Path,
) -> Result<()> {
    let schemes = schemes
        .iter()
        .map(|s| ModulationScheme::from_name(s.trim()).ok_or_else(|| Error::Config(format!("unknown scheme `{s}`"))))
        .collect::<Result<Vec<_>>>()?;
    if snr_min > snr_max || !amc_fl::signal::is_grid_snr(snr_min) || !amc_fl::signal::is_grid_snr(snr_max) {
        return Err(Error::Config(format!("invalid SNR range {snr_min}..{snr_max}")));
    }
    let seed = seed_override()?.unwrap_or(seed);
    let mut spec = GenerateSpec::new(schemes, (snr_min..=snr_max).step_by(2).collect(), frames_per_cell);
    spec.frame = FrameConfig {
        frame_len,
        ..FrameConfig::default()
    };
    spec.impairments = ImpairmentSpec::default();
    let ds: Dataset = generate_dataset(seed, &spec)?;
    let tmp = out.with_extension("partial");
    let written = save_dataset(&ds, &tmp).and_then(|_| std::fs::rename(&tmp, out).map_err(Error::from));
    if let Err(e) = written {
        let _ = std::fs::remove_file(&tmp);
        return Err(e);
    }
    println!("{} frames sha256={}", ds.len(), ds.content_hash());
    Ok(())
}

fn run(cli: Cli) -> Result<bool> {
    match cli.command {
        Command::GenData {
            schemes,
            snr_min,
            snr_max,
            frames_per_cell,
            frame_len,
            seed,
            out,
        } => gen_data(&schemes, snr_min, snr_max, frames_per_cell, frame_len, seed, &out)?,
        Command::SweepTheta { cfg, repeats } => {
            let extra = repeats.map(|k| format!("repeats={k}")).into_iter().collect();
            let config = load_config(&cfg, extra)?;
            let (pool, test) = build_pools::<f32>(&config)?;
            let result = run_theta_sweep_on(&config, &config.snr_list(), &pool, &test)?;
            let summary = json!({
                "best_theta": result.best_theta,
                "summary": result.summary,
                "rows": result.rows,
            });
            finish(
                &cfg.out,
                "sweep-theta",
                &config,
                ExperimentOutput {
                    rows: result.curves,
                    summary,
                    extra_files: Vec::new(),
                },
            )?;
        }
        Command::RunFl { cfg, algo, scenario } => {
            let mut extra = Vec::new();
            extra.extend(algo.map(|a| format!("algo={a}")));
            extra.extend(scenario.map(|s| format!("scenario={s}")));
            let config = load_config(&cfg, extra)?;
            let (pool, test) = build_pools::<f32>(&config)?;
            let (curve, rows) = run_single(&config, &pool, &test)?;
            let mut summary = json!({ "summary": curve.summary });
            if config.algo == AlgorithmKind::DistL {
                summary["client_accuracy"] = json!(curve.rounds.last().and_then(|m| m.client_accuracy.clone()));
            }
            finish(
                &cfg.out,
                "run-fl",
                &config,
                ExperimentOutput {
                    rows,
                    summary,
                    extra_files: Vec::new(),
                },
            )?;
        }
        Command::Ablate { cfg, kind } => {
            let kind = AblationKind::from_name(&kind)
                .ok_or_else(|| Error::Config(format!("unknown ablation kind `{kind}`")))?;
            let config = load_config(&cfg, Vec::new())?;
            let (pool, test) = build_pools::<f32>(&config)?;
            let (table, curves, rows) = run_ablation(kind, &config, &pool, &test)?;
            let summary = json!({
                "kind": kind.name(),
                "table": table,
                "runs": curves.iter().map(|c| &c.summary).collect::<Vec<_>>(),
            });
            finish(
                &cfg.out,
                &format!("ablate --kind {}", kind.name()),
                &config,
                ExperimentOutput {
                    rows,
                    summary,
                    extra_files: Vec::new(),
                },
            )?;
        }
        Command::Pca { cfg, input, k } => {
            let config = load_config(&cfg, Vec::new())?;
            let ds: Dataset = load_dataset(&input)?;
            let pca = pca_project(&ds, k)?;
            let mut csv = String::from("label,snr_db");
            for i in 1..=pca.components.len() {
                csv.push_str(&format!(",pc{i}"));
            }
            csv.push('\n');
            for (f, p) in ds.frames.iter().zip(&pca.projections) {
                csv.push_str(&format!("{},{}", f.label, f.snr_db));
                for v in p {
                    csv.push_str(&format!(",{v:.9}"));
                }
                csv.push('\n');
            }
            let hash = ds.content_hash();
            let summary = json!({
                "input_sha256": hash,
                "frames": ds.len(),
                "k": k,
                "explained_variance": pca.explained_variance,
                "explained_ratio": pca.explained_ratio,
                "components": pca.components,
                "rank_warning": pca.rank_warning,
            });
            if let Some(w) = &pca.rank_warning {
                eprintln!("warning: {w}");
            }
            finish(
                &cfg.out,
                &format!("pca --k {k} (input sha256 {hash})"),
                &config,
                ExperimentOutput {
                    rows: Vec::new(),
                    summary,
                    extra_files: vec![("projections.csv".into(), csv)],
                },
            )?;
        }
        Command::Verify => {
            let checks = verify::run_all()?;
            let mut ok = true;
            for c in &checks {
                println!("{} {} {}", if c.passed { "PASS" } else { "FAIL" }, c.name, c.detail);
                ok &= c.passed;
            }
            if !ok {
                let failed: Vec<_> = checks.iter().filter(|c| !c.passed).map(|c| c.name).collect();
                eprintln!("error kind=verify msg={:?}", format!("failed checks: {}", failed.join(",")));
                return Ok(false);
            }
        }
    }
    Ok(true)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) if !e.use_stderr() => {
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            let first = e.to_string();
            let line = first.lines().next().unwrap_or("").trim_start_matches("error: ").to_string();
            eprintln!("error kind=usage msg={line:?}");
            return ExitCode::from(2);
        }
    };
    match run(cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::FAILURE,
        Err(e) => {
            eprintln!("error kind={} msg={:?}", e.kind(), e.to_string());
            ExitCode::FAILURE
        }
    }
}
