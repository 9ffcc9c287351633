use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use log::info;

use lsmetro::acceptance::{run_criterion, AcceptanceOptions, Studies, NAMES};
use lsmetro::batch::{cmd_analyze, cmd_compare, cmd_generate, thread_pool, COMPARISON_FILE, SUMMARY_FILE};
use lsmetro::config::RunConfig;
use lsmetro::denoise::DenoiserSpec;
use lsmetro::synthetic::SceneSpec;
use lsmetro::Error;

#[derive(Parser, Debug)]
#[command(name = "lsmetro", version, about = "Line/space SEM metrology: linescan SNR, mean CD and LER/LWR spectra")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

/// Flags shared by every subcommand. They are applied after `--config`, in
/// the order listed, followed by `--set` pairs.
#[derive(Args, Debug, Default)]
struct Common {
    /// Flat `key = value` configuration file.
    #[arg(long, value_name = "FILE")]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads, 0 = all cores.
    #[arg(long)]
    jobs: Option<usize>,
    #[arg(long, value_name = "DIR")]
    out: Option<PathBuf>,
    /// Pixel size for images without one in the header (and for generated
    /// images).
    #[arg(long = "pixel-size-nm", value_name = "NM")]
    pixel_size_nm: Option<f64>,
    /// Comma-separated frame counts.
    #[arg(long, value_name = "LIST")]
    frames: Option<String>,
    /// PSD model, 1 or 2.
    #[arg(long, value_parser = clap::value_parser!(u8).range(1..=2))]
    model: Option<u8>,
    #[arg(long = "low-freq-exclusion", value_name = "BINS")]
    low_freq_exclusion: Option<usize>,
    /// gaussian:SIGMA, median:RADIUS, nlmeans[:patch=..,search=..,h=..,sigma=..,vst=0|1]
    /// or external[:PATTERN].
    #[arg(long, value_name = "SPEC")]
    denoiser: Option<String>,
    /// Any configuration key, e.g. `--set xi_nm=25`. Repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    sets: Vec<String>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Write a grid of synthetic images with `.truth.json` sidecars.
    Generate {
        #[command(flatten)]
        common: Common,
        /// Number of scenes.
        #[arg(long)]
        seeds: Option<usize>,
        /// Comma-separated line-minus-space contrast levels.
        #[arg(long, value_name = "LIST")]
        contrasts: Option<String>,
        /// Electrons per pixel and frame at full intensity.
        #[arg(long)]
        electrons: Option<f64>,
    },
    /// Analyze images: per-image JSON, PSD and edge CSVs, summary.csv.
    Analyze {
        #[command(flatten)]
        common: Common,
        /// Image files or directories of `.pgm` files.
        #[arg(required = true)]
        inputs: Vec<PathBuf>,
    },
    /// Compare noisy images with their denoised counterparts.
    Compare {
        #[command(flatten)]
        common: Common,
        #[arg(required = true)]
        inputs: Vec<PathBuf>,
    },
    /// Run the synthetic acceptance suite and write acceptance.json.
    Acceptance {
        #[command(flatten)]
        common: Common,
        /// Comma-separated criterion numbers (default: all).
        #[arg(long, value_name = "LIST")]
        criteria: Option<String>,
        #[arg(long)]
        ladder_seeds: Option<usize>,
        #[arg(long)]
        triple_seeds: Option<usize>,
    },
}

fn build_config(common: &Common, extra: &[(&str, Option<String>)]) -> lsmetro::Result<RunConfig> {
    let mut cfg = RunConfig::default();
    if let Some(p) = &common.config {
        cfg.apply_file(p)?;
    }
    let flags: [(&str, Option<String>); 8] = [
        ("seed", common.seed.map(|v| v.to_string())),
        ("jobs", common.jobs.map(|v| v.to_string())),
        ("out", common.out.as_ref().map(|p| p.display().to_string())),
        ("pixel_size_nm", common.pixel_size_nm.map(|v| v.to_string())),
        ("frames", common.frames.clone()),
        ("model", common.model.map(|v| v.to_string())),
        ("low_freq_exclusion", common.low_freq_exclusion.map(|v| v.to_string())),
        ("denoiser", common.denoiser.clone()),
    ];
    for (k, v) in flags.iter().chain(extra) {
        if let Some(v) = v {
            cfg.set(k, v)?;
        }
    }
    for kv in &common.sets {
        let (k, v) = kv
            .split_once('=')
            .ok_or_else(|| Error::Config(format!("--set expects KEY=VALUE, got '{kv}'")))?;
        cfg.set(k, v)?;
    }
    cfg.fit_width();
    cfg.validate()?;
    Ok(cfg)
}

fn exit_for(err: &Error) -> ExitCode {
    eprintln!("error: {err}");
    match err {
        Error::Config(_) => ExitCode::from(2),
        _ => ExitCode::from(1),
    }
}

fn generate(cfg: &RunConfig) -> lsmetro::Result<ExitCode> {
    let made = cmd_generate(cfg)?;
    println!("wrote {} images to {}", made.len(), cfg.out.display());
    Ok(ExitCode::SUCCESS)
}

fn analyze(cfg: &RunConfig) -> lsmetro::Result<ExitCode> {
    let outcome = cmd_analyze(cfg)?;
    println!(
        "analyzed {} images, {} failed; summary in {}",
        outcome.rows.len(),
        outcome.failures,
        cfg.out.join(SUMMARY_FILE).display()
    );
    Ok(if outcome.failures == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(1)
    })
}

fn compare(cfg: &RunConfig) -> lsmetro::Result<ExitCode> {
    let outcome = cmd_compare(cfg)?;
    for p in &outcome.unpaired {
        println!("unpaired, skipped: {}", p.display());
    }
    for (id, e) in &outcome.failures {
        println!("failed: {id}: {e}");
    }
    println!(
        "compared {} pairs; table in {}",
        outcome.rows.len(),
        cfg.out.join(COMPARISON_FILE).display()
    );
    Ok(if outcome.failures.is_empty() {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(1)
    })
}

fn parse_criteria(list: Option<&str>) -> lsmetro::Result<Vec<usize>> {
    let Some(list) = list else {
        return Ok((1..=NAMES.len()).collect());
    };
    list.split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| match s.parse::<usize>() {
            Ok(i) if (1..=NAMES.len()).contains(&i) => Ok(i),
            _ => Err(Error::Config(format!("unknown criterion '{s}'"))),
        })
        .collect()
}

fn acceptance(cfg: &RunConfig, criteria: &[usize], ladder: Option<usize>, triple: Option<usize>) -> lsmetro::Result<ExitCode> {
    let defaults = AcceptanceOptions::default();
    let scene = cfg.generate.scene;
    let options = AcceptanceOptions {
        seed: cfg.seed,
        seeds: ladder.unwrap_or(defaults.seeds),
        scaling_seeds: defaults.scaling_seeds.min(ladder.unwrap_or(defaults.seeds)),
        scene,
        triple_seeds: triple.unwrap_or(defaults.triple_seeds),
        triple_scene: SceneSpec {
            height: defaults.triple_scene.height.max(scene.height),
            ..scene
        },
        electrons_per_pixel_per_frame: cfg.generate.electrons_per_pixel_per_frame,
        analysis: cfg.analysis,
        denoiser: match &cfg.denoiser {
            DenoiserSpec::External { .. } => defaults.denoiser,
            d => d.clone(),
        },
    };
    std::fs::create_dir_all(&cfg.out).map_err(|e| Error::Config(format!("{}: {e}", cfg.out.display())))?;
    let work = cfg.out.join("acceptance_work");
    let pool = thread_pool(cfg.jobs)?;
    let verdicts = pool.install(|| -> lsmetro::Result<_> {
        let studies = Studies::for_criteria(&options, criteria)?;
        Ok(criteria
            .iter()
            .map(|&i| {
                let v = run_criterion(i, &options, &studies, &work);
                println!("{}", v.line());
                v
            })
            .collect::<Vec<_>>())
    })?;
    let _ = std::fs::remove_dir_all(&work);
    let path = cfg.out.join("acceptance.json");
    write_json(&path, &verdicts)?;
    let failed = verdicts.iter().filter(|v| !v.pass).count();
    println!(
        "{} of {} criteria passed; verdicts in {}",
        verdicts.len() - failed,
        verdicts.len(),
        path.display()
    );
    Ok(if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(1)
    })
}

fn write_json<T: serde::Serialize>(path: &Path, value: &T) -> lsmetro::Result<()> {
    let text = serde_json::to_string_pretty(value).map_err(|e| Error::Json {
        path: path.into(),
        source: e,
    })?;
    std::fs::write(path, text).map_err(|e| Error::Io {
        path: path.into(),
        source: e,
    })
}

fn run(cli: Cli) -> lsmetro::Result<ExitCode> {
    match cli.command {
        Command::Generate {
            common,
            seeds,
            contrasts,
            electrons,
        } => {
            let cfg = build_config(
                &common,
                &[
                    ("seeds", seeds.map(|v| v.to_string())),
                    ("contrasts", contrasts),
                    ("electrons", electrons.map(|v| v.to_string())),
                ],
            )?;
            info!("generate: {cfg:?}");
            generate(&cfg)
        }
        Command::Analyze { common, inputs } => {
            let mut cfg = build_config(&common, &[])?;
            cfg.inputs = inputs;
            analyze(&cfg)
        }
        Command::Compare { common, inputs } => {
            let mut cfg = build_config(&common, &[])?;
            cfg.inputs = inputs;
            compare(&cfg)
        }
        Command::Acceptance {
            common,
            criteria,
            ladder_seeds,
            triple_seeds,
        } => {
            let cfg = build_config(&common, &[])?;
            let criteria = parse_criteria(criteria.as_deref())?;
            for (name, v) in [("ladder_seeds", ladder_seeds), ("triple_seeds", triple_seeds)] {
                if v == Some(0) {
                    return Err(Error::Config(format!("{name} must be positive")));
                }
            }
            acceptance(&cfg, &criteria, ladder_seeds, triple_seeds)
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run(Cli::parse()) {
        Ok(code) => code,
        Err(e) => exit_for(&e),
    }
}
