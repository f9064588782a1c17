use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use latent_align::evaluation::{
    checkpoint_distances, grid_search, pcc_report, read_metric_records, score_record, write_pcc_csv,
    write_scores_csv, MeanKind, SeedPolicy, Table,
};
use latent_align::featureio::{generate_synthetic_corpus, DatasetManifest, EnvelopeFamily, SyntheticSpec};
use latent_align::trainer::{load_checkpoint, save_checkpoint, TrainConfig, Trainer};

use crate::{CommandResult, EXIT_DIVERGED};

#[derive(Debug, Parser)]
#[command(name = "latent-align", version, about = "Semantic alignment training for audio VAE latents")]
pub struct Cli {
    /// Output directory for every artifact.
    #[arg(long, global = true, default_value = "out")]
    pub out: PathBuf,

    /// Overrides the configured seed.
    #[arg(long, global = true)]
    pub seed: Option<u64>,

    /// Requests bit-reproducible execution.
    #[arg(long, global = true)]
    pub strict_determinism: bool,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic harmonic-plus-noise corpus and its manifest.
    SynthData(SynthArgs),
    /// Train one model from a JSON config.
    Train(TrainArgs),
    /// Aggregate raw metric records into task scores.
    Score(ScoreArgs),
    /// Alignment distances of a checkpoint on a corpus.
    Distances(DistanceArgs),
    /// Margin grid search with heatmap CSVs.
    Grid(GridArgs),
    /// Pearson correlations between distance and score columns of a grid CSV.
    Pcc(PccArgs),
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum Envelope {
    Hann,
    Decay,
    Plateau,
    Mixed,
}

impl From<Envelope> for EnvelopeFamily {
    fn from(e: Envelope) -> Self {
        match e {
            Envelope::Hann => EnvelopeFamily::Hann,
            Envelope::Decay => EnvelopeFamily::Decay,
            Envelope::Plateau => EnvelopeFamily::Plateau,
            Envelope::Mixed => EnvelopeFamily::Mixed,
        }
    }
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    /// Number of clips.
    #[arg(long, default_value_t = 200, value_parser = clap::value_parser!(u64).range(1..))]
    pub clips: u64,
    /// Clip length in seconds; times 16000 must be a multiple of 400.
    #[arg(long, default_value_t = 1.0)]
    pub seconds: f64,
    /// Fewest harmonics per clip.
    #[arg(long, default_value_t = 1)]
    pub min_harmonics: usize,
    /// Most harmonics per clip.
    #[arg(long, default_value_t = 4)]
    pub max_harmonics: usize,
    /// Amplitude of the additive noise floor.
    #[arg(long, default_value_t = 0.005)]
    pub noise_floor: f64,
    /// Amplitude envelope family.
    #[arg(long, value_enum, default_value_t = Envelope::Mixed)]
    pub envelope: Envelope,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    /// Training config JSON; flags below override its keys.
    #[arg(long)]
    pub config: PathBuf,
    /// Dataset manifest (JSON lines).
    #[arg(long)]
    pub manifest: PathBuf,
    /// Total optimizer steps.
    #[arg(long)]
    pub steps: Option<usize>,
    /// Initial learning rate.
    #[arg(long)]
    pub lr: Option<f64>,
    /// Clips per batch.
    #[arg(long)]
    pub batch_size: Option<usize>,
    /// Distillation scheme name.
    #[arg(long)]
    pub scheme: Option<String>,
    /// Enable adaptive distillation weighting.
    #[arg(long)]
    pub adaptive: bool,
    /// Resume from this checkpoint directory.
    #[arg(long)]
    pub resume: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ScoreArgs {
    /// Metric records, one JSON object per line.
    #[arg(long)]
    pub metrics: PathBuf,
    /// How the three task scores combine into the overall score.
    #[arg(long, value_parser = parse_mean, default_value = "geometric")]
    pub mean: MeanKind,
}

#[derive(Debug, Args)]
pub struct DistanceArgs {
    /// Checkpoint directory.
    #[arg(long)]
    pub checkpoint: PathBuf,
    /// Dataset manifest (JSON lines).
    #[arg(long)]
    pub manifest: PathBuf,
}

#[derive(Debug, Args)]
pub struct GridArgs {
    /// Comma-separated m1 values.
    #[arg(long, value_delimiter = ',', required = true)]
    pub m1: Vec<f64>,
    /// Comma-separated m2 values.
    #[arg(long, value_delimiter = ',', required = true)]
    pub m2: Vec<f64>,
    /// Base training config JSON; its scheme must be jmas.
    #[arg(long)]
    pub config: PathBuf,
    /// Dataset manifest (JSON lines).
    #[arg(long)]
    pub manifest: PathBuf,
    /// Train every cell with the base seed instead of a per-cell seed.
    #[arg(long)]
    pub shared_seed: bool,
    /// Optional metric records keyed `m1=<m1>_m2=<m2>` to attach to the cells.
    #[arg(long)]
    pub metrics: Option<PathBuf>,
    /// Mean used for the overall score of attached metrics.
    #[arg(long, value_parser = parse_mean, default_value = "geometric")]
    pub mean: MeanKind,
}

#[derive(Debug, Args)]
pub struct PccArgs {
    /// Grid CSV produced by the grid command or an equivalent table.
    #[arg(long)]
    pub grid_csv: PathBuf,
}

fn parse_mean(s: &str) -> std::result::Result<MeanKind, String> {
    s.parse().map_err(|e: latent_align::Error| e.to_string())
}

pub fn execute(cli: &Cli) -> Result<CommandResult> {
    match &cli.command {
        Command::SynthData(a) => synth_data(cli, a),
        Command::Train(a) => train(cli, a),
        Command::Score(a) => score(cli, a),
        Command::Distances(a) => distances(cli, a),
        Command::Grid(a) => grid(cli, a),
        Command::Pcc(a) => pcc(cli, a),
    }
}

fn ensure_out(cli: &Cli) -> Result<&Path> {
    fs::create_dir_all(&cli.out).with_context(|| format!("creating {}", cli.out.display()))?;
    Ok(&cli.out)
}

fn load_config(cli: &Cli, path: &Path) -> Result<TrainConfig> {
    let text = fs::read_to_string(path).map_err(|e| latent_align::Error::Io {
        path: path.to_path_buf(),
        source: e,
    })?;
    let mut cfg = TrainConfig::from_json(&text)?;
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    if cli.strict_determinism {
        cfg.strict_determinism = true;
    }
    Ok(cfg)
}

fn write_text(path: PathBuf, text: &str) -> Result<PathBuf> {
    fs::write(&path, text).with_context(|| format!("writing {}", path.display()))?;
    Ok(path)
}

fn synth_data(cli: &Cli, a: &SynthArgs) -> Result<CommandResult> {
    let spec = SyntheticSpec {
        num_clips: a.clips as usize,
        clip_seconds: a.seconds,
        seed: cli.seed.unwrap_or(0),
        min_harmonics: a.min_harmonics,
        max_harmonics: a.max_harmonics,
        noise_floor: a.noise_floor,
        envelope: a.envelope.into(),
    };
    let out = ensure_out(cli)?;
    let manifest = generate_synthetic_corpus(&spec, out)?;
    let mut artifacts = vec![out.join("manifest.jsonl")];
    artifacts.extend((0..manifest.len()).map(|i| manifest.waveform_path(i)));
    println!("wrote {} clips to {}", manifest.len(), out.display());
    Ok(CommandResult::ok(artifacts))
}

fn train(cli: &Cli, a: &TrainArgs) -> Result<CommandResult> {
    let mut cfg = load_config(cli, &a.config)?;
    if let Some(s) = a.steps {
        cfg.steps = s;
    }
    if let Some(lr) = a.lr {
        cfg.lr = lr;
    }
    if let Some(b) = a.batch_size {
        cfg.batch_size = b;
    }
    if let Some(s) = &a.scheme {
        cfg.scheme = s.clone();
    }
    if a.adaptive {
        cfg.adaptive = true;
    }
    let manifest = DatasetManifest::read(&a.manifest)?;
    let start = a.resume.as_ref().map(load_checkpoint).transpose()?;
    let trainer = Trainer::new(cfg.clone(), &manifest)?;
    let out = ensure_out(cli)?;
    let outcome = trainer.run(start, Some(&out.join("checkpoints")))?;

    let mut artifacts = vec![write_text(out.join("config.json"), &cfg.to_json())?];
    let log_path = out.join("train_log.csv");
    outcome.log.write_csv(&log_path)?;
    artifacts.push(log_path);
    if cfg.adaptive {
        let trace_path = out.join("weight_trace.csv");
        outcome.trace.write_csv(&trace_path)?;
        artifacts.push(trace_path);
    }
    let ckpt_dir = out.join("checkpoint");
    save_checkpoint(&outcome.checkpoint, &ckpt_dir)?;
    artifacts.push(ckpt_dir);

    if let Some(d) = outcome.diverged() {
        let err = latent_align::Error::Diverged {
            step: d.step,
            component: d.component.clone(),
        };
        return Ok(CommandResult {
            exit_code: EXIT_DIVERGED,
            artifacts,
            reason: Some(format!("error=diverged exit={EXIT_DIVERGED} message={:?}", err.to_string())),
        });
    }
    if let Some(r) = outcome.log.last() {
        println!(
            "step {} total_loss={} loss_rec={} loss_kl={}",
            r.step, r.total_loss, r.loss_rec, r.loss_kl
        );
    }
    Ok(CommandResult::ok(artifacts))
}

fn score(cli: &Cli, a: &ScoreArgs) -> Result<CommandResult> {
    let records = read_metric_records(&a.metrics)?;
    let rows = records
        .iter()
        .map(|r| Ok((r.method.clone(), score_record(r, a.mean)?)))
        .collect::<latent_align::Result<Vec<_>>>()?;
    let out = ensure_out(cli)?;
    let path = out.join("scores.csv");
    write_scores_csv(&path, &rows)?;
    for (m, s) in &rows {
        println!("{m}\t{:.3}\t{:.3}\t{:.3}\t{:.3}", s.x_r, s.x_u, s.x_g, s.overall);
    }
    Ok(CommandResult::ok(vec![path]))
}

fn distances(cli: &Cli, a: &DistanceArgs) -> Result<CommandResult> {
    let ckpt = load_checkpoint(&a.checkpoint)?;
    let manifest = DatasetManifest::read(&a.manifest)?;
    let report = checkpoint_distances(&ckpt, &manifest)?;
    let json = serde_json::json!({
        "d_mcos": report.d_mcos,
        "d_mdss": report.d_mdss,
        "clips": report.clips,
    })
    .to_string();
    let out = ensure_out(cli)?;
    let path = write_text(out.join("distances.json"), &json)?;
    println!("{json}");
    Ok(CommandResult::ok(vec![path]))
}

fn grid(cli: &Cli, a: &GridArgs) -> Result<CommandResult> {
    let cfg = load_config(cli, &a.config)?;
    let manifest = DatasetManifest::read(&a.manifest)?;
    let policy = if a.shared_seed { SeedPolicy::Shared } else { SeedPolicy::PerCell };
    let mut result = grid_search(&a.m1, &a.m2, &cfg, &manifest, policy)?;
    if let Some(m) = &a.metrics {
        let records = read_metric_records(m)?;
        let n = result.attach_metrics(&records, a.mean)?;
        log::info!("attached metrics to {n} cells");
    }
    let out = ensure_out(cli)?;
    let grid_path = out.join("grid.csv");
    result.write_csv(&grid_path)?;
    let mut artifacts = vec![grid_path];
    artifacts.extend(result.write_heatmaps(out)?);

    let diverged = result.rows.iter().filter(|r| r.diverged.is_some()).count();
    for r in &result.rows {
        match &r.diverged {
            Some(d) => println!("m1={} m2={} diverged at step {} ({})", r.m1, r.m2, d.step, d.component),
            None => println!(
                "m1={} m2={} d_mcos={} d_mdss={}",
                r.m1,
                r.m2,
                r.d_mcos.unwrap_or(f64::NAN),
                r.d_mdss.unwrap_or(f64::NAN)
            ),
        }
    }
    if diverged == result.rows.len() {
        return Ok(CommandResult {
            exit_code: EXIT_DIVERGED,
            artifacts,
            reason: Some(format!(
                "error=diverged exit={EXIT_DIVERGED} message=\"all {diverged} grid cells diverged\""
            )),
        });
    }
    Ok(CommandResult::ok(artifacts))
}

fn pcc(cli: &Cli, a: &PccArgs) -> Result<CommandResult> {
    let table = Table::read_csv(&a.grid_csv)?;
    let rows = pcc_report(&table)?;
    let out = ensure_out(cli)?;
    let path = out.join("pcc.csv");
    write_pcc_csv(&path, &rows)?;
    for r in &rows {
        let vals: Vec<String> = r
            .values
            .iter()
            .map(|v| v.map(|x| format!("{x:.3}")).unwrap_or_else(|| "-".into()))
            .collect();
        println!("{}\t{}", r.distance, vals.join("\t"));
    }
    Ok(CommandResult::ok(vec![path]))
}
