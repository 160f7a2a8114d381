use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use rayon::prelude::*;
use serde_json::json;

use tag_core::config::{ConfigDocument, KernelName, Normalization};
use tag_core::io::{
    load_manifest, read_feature_file, read_query_file, write_report, Report, ReportRecord,
};
use tag_core::metrics::{
    clusters_per_gt, insert_noise_prefix, interval_iou, EvalSummary, Interval, NoiseAugmentation,
};
use tag_core::{analyze_video, PipelineConfig};

#[derive(Parser)]
#[command(name = "tag", version, about = "Zero-shot video temporal grounding over frame embeddings")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Ground one or more query embeddings in a feature file.
    Ground(GroundArgs),
    /// Run the pipeline over a manifest and report R@m / mIoU.
    Evaluate(EvaluateArgs),
    /// Print the effective configuration as TOML.
    Config(ConfigArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum KernelArg {
    Uniform,
    Gaussian,
}

#[derive(Clone, Copy, ValueEnum)]
enum NormalizationArg {
    None,
    BoxCox,
    YeoJohnson,
}

#[derive(Args)]
struct ConfigArgs {
    /// TOML config file; flags below override its values.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Temporal pooling window (odd).
    #[arg(long)]
    w: Option<usize>,
    #[arg(long)]
    pooling_kernel: Option<KernelArg>,
    /// Gaussian kernel width in frames.
    #[arg(long)]
    sigma: Option<f64>,
    /// Number of clusters.
    #[arg(long)]
    k: Option<usize>,
    /// Temporal coherence window (odd).
    #[arg(long)]
    r: Option<usize>,
    #[arg(long)]
    max_iters: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    normalization: Option<NormalizationArg>,
    /// Fixed transform lambda instead of the maximum-likelihood fit.
    #[arg(long, allow_hyphen_values = true)]
    lambda: Option<f64>,
}

impl ConfigArgs {
    fn resolve(&self) -> tag_core::Result<PipelineConfig> {
        let base = match &self.config {
            Some(path) => {
                let text = std::fs::read_to_string(path)
                    .map_err(|e| tag_core::Error::ConfigParse(format!("{}: {e}", path.display())))?;
                ConfigDocument::parse(&text)?
            }
            None => ConfigDocument::default(),
        };
        let flags = ConfigDocument {
            w: self.w,
            pooling_kernel: self.pooling_kernel.map(|k| match k {
                KernelArg::Uniform => KernelName::Uniform,
                KernelArg::Gaussian => KernelName::Gaussian,
            }),
            sigma: self.sigma,
            k: self.k,
            r: self.r,
            max_iters: self.max_iters,
            seed: self.seed,
            normalization: self.normalization.map(|n| match n {
                NormalizationArg::None => Normalization::None,
                NormalizationArg::BoxCox => Normalization::BoxCox,
                NormalizationArg::YeoJohnson => Normalization::YeoJohnson,
            }),
            lambda: self.lambda,
        };
        base.overlay(&flags).build()
    }
}

#[derive(Args)]
struct GroundArgs {
    /// TAGF feature file (N×D).
    #[arg(long)]
    features: PathBuf,
    /// TAGF query vector file (1×D); repeat for paraphrases.
    #[arg(long, required = true)]
    query: Vec<PathBuf>,
    /// Print the full ranked proposal list and change points.
    #[arg(long)]
    dump_proposals: bool,
    /// Print per-frame cluster labels.
    #[arg(long)]
    dump_labels: bool,
    /// Emit the result as a single JSON object.
    #[arg(long)]
    json: bool,
    #[command(flatten)]
    config: ConfigArgs,
}

#[derive(Args)]
struct EvaluateArgs {
    #[arg(long)]
    manifest: PathBuf,
    #[arg(long, value_delimiter = ',', default_value = "0.3,0.5,0.7")]
    thresholds: Vec<f64>,
    /// Seconds of random-noise frames to prepend to every video.
    #[arg(long)]
    noise_rho: Option<f64>,
    /// Base seed for noise frames; record i uses `noise_seed + i`.
    #[arg(long, default_value_t = 0)]
    noise_seed: u64,
    /// Also report how many cluster runs each ground truth spans.
    #[arg(long)]
    fragmentation: bool,
    #[arg(long, default_value = "report.jsonl")]
    report: PathBuf,
    #[command(flatten)]
    config: ConfigArgs,
}

type CliResult<T> = Result<T, Box<dyn std::error::Error>>;

fn ground(args: &GroundArgs) -> CliResult<()> {
    let config = args.config.resolve()?;
    let features = read_feature_file(&args.features)?;
    let queries = args
        .query
        .iter()
        .map(read_query_file)
        .collect::<tag_core::Result<Vec<_>>>()?;
    let analysis = analyze_video(&features, &config)?;
    let result = analysis.ground(&features, &queries, &config, args.dump_proposals)?;

    if args.json {
        let mut out = serde_json::to_value(&result)?;
        if args.dump_proposals {
            out["change_points"] = json!(analysis.change_points.points());
        }
        if args.dump_labels {
            out["labels"] = json!(analysis.clusters.labels);
        }
        println!("{out}");
        return Ok(());
    }

    println!(
        "interval_seconds\t{:.3}\t{:.3}",
        result.seconds.start, result.seconds.end
    );
    println!(
        "interval_frames\t{}\t{}",
        result.frames.start, result.frames.end
    );
    println!("score\t{}", result.score);
    if queries.len() > 1 {
        println!("query_index\t{}", result.query_index);
    }
    match result.lambda {
        Some(l) => println!("lambda\t{l}\tshift\t{}", result.shift),
        None if result.fallback => println!("lambda\tnone (constant similarities, identity used)"),
        None => {}
    }
    if args.dump_labels {
        let labels: Vec<String> = analysis.clusters.labels.iter().map(usize::to_string).collect();
        println!("labels\t{}", labels.join(" "));
    }
    if args.dump_proposals {
        let points: Vec<String> = analysis
            .change_points
            .points()
            .iter()
            .map(usize::to_string)
            .collect();
        println!("change_points\t{}", points.join(" "));
        for (rank, p) in result.ranked.iter().flatten().enumerate() {
            println!(
                "proposal\t{rank}\t{}\t{}\t{:.6}\t{:.6}\t{:.6}",
                p.start, p.end, p.score, p.inside_mean, p.outside_mean
            );
        }
    }
    Ok(())
}

fn evaluate(args: &EvaluateArgs) -> CliResult<()> {
    let config = args.config.resolve()?;
    let manifest = load_manifest(&args.manifest)?;
    if manifest.records.is_empty() {
        return Err("manifest has no records".into());
    }

    let records = manifest
        .records
        .par_iter()
        .enumerate()
        .map(|(i, rec)| -> tag_core::Result<ReportRecord> {
            let mut features = read_feature_file(manifest.resolve(&rec.feature_path))?;
            let query = read_query_file(manifest.resolve(&rec.query_embedding_path))?;
            let mut gt = Interval::new(rec.gt_start, rec.gt_end)?;
            if let Some(rho) = args.noise_rho {
                let aug = NoiseAugmentation {
                    rho,
                    seed: args.noise_seed.wrapping_add(i as u64),
                };
                (features, gt) = insert_noise_prefix(&features, gt, aug)?;
            }
            let analysis = analyze_video(&features, &config)?;
            let result = analysis.ground(&features, std::slice::from_ref(&query), &config, false)?;
            let clusters = if args.fragmentation {
                let frames = gt.to_frames(features.frame_rate(), features.n_frames())?;
                Some(clusters_per_gt(&analysis.clusters.labels, frames)?)
            } else {
                None
            };
            Ok(ReportRecord {
                video_id: rec.video_id.clone(),
                query_id: rec.query_id.clone(),
                pred_start: result.seconds.start,
                pred_end: result.seconds.end,
                gt_start: gt.start,
                gt_end: gt.end,
                iou: interval_iou(result.seconds, gt)?,
                lambda: result.lambda,
                clusters_per_gt: clusters,
            })
        })
        .collect::<tag_core::Result<Vec<_>>>()?;

    let summary = EvalSummary::from_ious(records.iter().map(|r| r.iou).collect(), &args.thresholds)?;
    let mean_clusters_per_gt = args.fragmentation.then(|| {
        records.iter().filter_map(|r| r.clusters_per_gt).sum::<usize>() as f64
            / records.len() as f64
    });

    println!("records\t{}", summary.count);
    for r in &summary.recall {
        println!("R@{}\t{:.2}", r.threshold, 100.0 * r.recall);
    }
    println!("mIoU\t{:.2}", 100.0 * summary.miou);
    if let Some(m) = mean_clusters_per_gt {
        println!("clusters_per_gt\t{m:.3}");
    }

    let report = Report {
        records,
        summary,
        mean_clusters_per_gt,
    };
    write_report(&report, &args.report)?;
    println!("report\t{}", args.report.display());
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = match &cli.command {
        Command::Ground(args) => ground(args),
        Command::Evaluate(args) => evaluate(args),
        Command::Config(args) => args.resolve().map(|c| print!("{}", c.to_toml())).map_err(Into::into),
    };
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
