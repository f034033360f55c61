//! Subcommand implementations for the `bexp` binary.

use crate::error::{CliError, Result};
use crate::formats::{self, GridFile, SceneTruthFile};
use crate::render;
use bexp::compose::Rule;
use bexp::inference::{lmp_infer, ExpertModel};
use bexp::learning::{
    self, default_robustify, BatchInit, GeometricModel, TrainConfig,
};
use bexp::likelihood::BinaryVector;
use bexp::synthetic::{
    self, landscape, BarLetterCfg, QuadrantModelCfg, SceneCfg,
};
use bexp::transform::TransformGrid;
use clap::{Args, Parser, Subcommand, ValueEnum};
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

#[derive(Parser)]
#[command(
    name = "bexp",
    version,
    about = "Compositional Bernoulli expert models: generate, train, infer, evaluate, render"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand)]
pub enum Command {
    /// Generate synthetic datasets.
    Gen(GenArgs),
    /// Train a model with batch EM or online updates.
    Train(TrainArgs),
    /// Infer representations for a dataset.
    Infer(InferArgs),
    /// Report mean cross-entropy of a model on a dataset.
    Eval(EvalArgs),
    /// Sample composed templates from the fitted geometric component.
    Sample(SampleArgs),
    /// Render each expert template as an image.
    Render(RenderArgs),
    /// Evaluate the two-expert log-likelihood landscape.
    Landscape(LandscapeArgs),
    /// Generate a glyph scene and resolve it with matching pursuit.
    SceneDemo(SceneDemoArgs),
}

#[derive(Clone, Copy, Debug, ValueEnum)]
pub enum RuleArg {
    #[value(alias = "noisyor")]
    NoisyOr,
    #[value(alias = "sumofodds")]
    SumOfOdds,
    Max,
    #[value(alias = "arithmeticmean")]
    ArithmeticMean,
    #[value(alias = "sumoflogodds")]
    SumOfLogOdds,
    #[value(alias = "normalizedsumexact")]
    NormalizedSumExact,
    #[value(alias = "normalizedsumapprox")]
    NormalizedSumApprox,
    #[value(alias = "maxminusmin")]
    MaxMinusMin,
}

impl RuleArg {
    fn to_rule(self, q: f64) -> Rule {
        match self {
            RuleArg::NoisyOr => Rule::NoisyOr,
            RuleArg::SumOfOdds => Rule::SumOfOdds,
            RuleArg::Max => Rule::Max,
            RuleArg::ArithmeticMean => Rule::ArithmeticMean,
            RuleArg::SumOfLogOdds => Rule::SumOfLogOdds,
            RuleArg::NormalizedSumExact => Rule::NormalizedSumExact,
            RuleArg::NormalizedSumApprox => Rule::NormalizedSumApprox,
            RuleArg::MaxMinusMin => Rule::MaxMinusMin { q },
        }
    }
}

#[derive(Clone, Copy, Debug, ValueEnum)]
pub enum GridArg {
    /// Identity transform only.
    Identity,
    /// Shifts -8..=8 in steps of 2 on both axes, rotations -20..=20 in 10
    /// degree steps.
    Letter,
}

impl GridArg {
    fn to_grid(self) -> TransformGrid {
        match self {
            GridArg::Identity => TransformGrid::identity(),
            GridArg::Letter => TransformGrid::letter(),
        }
    }
}

#[derive(Clone, Copy, Debug, ValueEnum)]
pub enum RobustifyArg {
    /// Truncate first-step templates for write-black models only.
    Auto,
    On,
    Off,
}

impl RobustifyArg {
    fn resolve(self, rule: Rule) -> bool {
        match self {
            RobustifyArg::Auto => default_robustify(rule),
            RobustifyArg::On => true,
            RobustifyArg::Off => false,
        }
    }
}

// ---------------------------------------------------------------------------
// gen
// ---------------------------------------------------------------------------

#[derive(Args)]
pub struct GenArgs {
    #[command(subcommand)]
    pub which: GenCommand,
}

#[derive(Subcommand)]
pub enum GenCommand {
    /// Quadrant images: each quadrant constant or coin-flip noise.
    Quadrant {
        #[arg(long)]
        n: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 6)]
        side: usize,
        #[arg(long)]
        out: PathBuf,
        /// Also write the ground-truth 8-expert model.
        #[arg(long)]
        truth_out: Option<PathBuf>,
    },
    /// A glyph scene: clean and noisy records plus a truth sidecar.
    Scene {
        #[arg(long, default_value_t = 5)]
        count: usize,
        #[arg(long, default_value_t = 0.1)]
        noise: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Square canvas side.
        #[arg(long, default_value_t = 36)]
        size: usize,
        #[arg(long)]
        out: PathBuf,
        /// Truth sidecar path (default: `<out>.truth.json`).
        #[arg(long)]
        truth_out: Option<PathBuf>,
    },
    /// Jittered two-bar images.
    Bars {
        #[arg(long)]
        n: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
        /// Also write the ground-truth 2-expert model.
        #[arg(long)]
        truth_out: Option<PathBuf>,
    },
}

fn cmd_gen(args: GenArgs) -> Result<()> {
    match args.which {
        GenCommand::Quadrant {
            n,
            seed,
            side,
            out,
            truth_out,
        } => {
            let cfg = QuadrantModelCfg {
                side,
                seed,
                ..Default::default()
            };
            let (data, truth) = synthetic::gen_quadrant(&cfg, n)?;
            formats::write_bed(&out, &data)?;
            if let Some(path) = truth_out {
                let model = ExpertModel::new(
                    Rule::max_minus_min(),
                    truth,
                    TransformGrid::identity(),
                    1.0,
                    true,
                )?;
                formats::write_model(&path, &model)?;
            }
        }
        GenCommand::Scene {
            count,
            noise,
            seed,
            size,
            out,
            truth_out,
        } => {
            let cfg = SceneCfg {
                canvas: (size, size),
                count,
                flip_noise: noise,
                seed,
                ..Default::default()
            };
            let sample = synthetic::gen_scene(&cfg)?;
            formats::write_bed(&out, &[sample.clean.clone(), sample.noisy.clone()])?;
            let grid = cfg.grid()?;
            let truth = SceneTruthFile {
                truth: sample.truth.iter().map(|&(g, t)| [g, t.0]).collect(),
                transform_grid: GridFile {
                    shifts_x: grid.shifts_x().to_vec(),
                    shifts_y: grid.shifts_y().to_vec(),
                    rotations: grid.rotations().to_vec(),
                },
            };
            let mut text = serde_json::to_string_pretty(&truth)
                .map_err(|e| CliError::Usage(format!("truth serialization failed: {e}")))?;
            text.push('\n');
            let path = truth_out.unwrap_or_else(|| sidecar_path(&out, "truth.json"));
            formats::write_atomic(&path, text.as_bytes())?;
        }
        GenCommand::Bars {
            n,
            seed,
            out,
            truth_out,
        } => {
            let cfg = BarLetterCfg {
                seed,
                ..Default::default()
            };
            let (data, truth) = synthetic::gen_bars(&cfg, n)?;
            formats::write_bed(&out, &data)?;
            if let Some(path) = truth_out {
                let model =
                    ExpertModel::new(Rule::Max, truth, TransformGrid::letter(), 1.0, true)?;
                formats::write_model(&path, &model)?;
            }
        }
    }
    Ok(())
}

fn sidecar_path(out: &Path, suffix: &str) -> PathBuf {
    let mut os = out.as_os_str().to_owned();
    os.push(".");
    os.push(suffix);
    PathBuf::from(os)
}

// ---------------------------------------------------------------------------
// train
// ---------------------------------------------------------------------------

#[derive(Clone, Copy, Debug, ValueEnum)]
pub enum TrainMode {
    Batch,
    Online,
}

#[derive(Args)]
pub struct TrainArgs {
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long, value_enum, default_value_t = RuleArg::MaxMinusMin)]
    pub rule: RuleArg,
    /// Abstention point for the max-minus-min rule.
    #[arg(long, default_value_t = 0.5)]
    pub q: f64,
    #[arg(long, value_enum, default_value_t = TrainMode::Batch)]
    pub mode: TrainMode,
    #[arg(long, default_value_t = 8)]
    pub k_max: usize,
    #[arg(long, default_value_t = 5)]
    pub epochs: usize,
    #[arg(long, default_value_t = 1.0)]
    pub epsilon: f64,
    /// Spawn threshold in nats per pixel (default: ln 0.6).
    #[arg(long, allow_negative_numbers = true)]
    pub theta_add: Option<f64>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, value_enum, default_value_t = GridArg::Identity)]
    pub grid: GridArg,
    /// Lower bound of the random template initialization.
    #[arg(long, default_value_t = 0.3)]
    pub init_lo: f64,
    /// Upper bound of the random template initialization.
    #[arg(long, default_value_t = 0.7)]
    pub init_hi: f64,
    /// Continue from an existing model instead of random templates.
    #[arg(long)]
    pub init_from: Option<PathBuf>,
    /// Fit the Gaussian geometric component after training.
    #[arg(long, default_value_t = false)]
    pub fit_geometry: bool,
    #[arg(long)]
    pub out: PathBuf,
}

fn cmd_train(args: TrainArgs) -> Result<()> {
    let data = formats::read_bed(&args.data)?;
    let init = match &args.init_from {
        Some(path) => BatchInit::FromModel(Box::new(formats::read_model(path)?)),
        None => BatchInit::Random {
            lo: args.init_lo,
            hi: args.init_hi,
        },
    };
    let cfg = TrainConfig {
        rule: args.rule.to_rule(args.q),
        epsilon: args.epsilon,
        k_max: args.k_max,
        epochs: args.epochs,
        theta_add: args.theta_add.unwrap_or_else(|| 0.6f64.ln()),
        seed: args.seed,
        grid: args.grid.to_grid(),
        init,
    };
    let mut out = String::new();
    let mut model = match args.mode {
        TrainMode::Batch => {
            let result = learning::train_batch(&data, &cfg)?;
            writeln!(out, "epoch\tmean_loglik").unwrap();
            for (i, ll) in result.epoch_loglik.iter().enumerate() {
                if !ll.is_finite() {
                    return Err(CliError::Degenerate(format!(
                        "training degenerated at epoch {i}: mean log-likelihood {ll}"
                    )));
                }
                writeln!(out, "{i}\t{ll:.6}").unwrap();
            }
            result.model
        }
        TrainMode::Online => {
            let result = learning::train_online(&data, &cfg)?;
            writeln!(out, "example\texperts\tmean_loglik").unwrap();
            for m in result.milestones.iter().skip(1) {
                if !m.mean_loglik.is_finite() {
                    return Err(CliError::Degenerate(format!(
                        "training degenerated at example {}: mean log-likelihood {}",
                        m.example, m.mean_loglik
                    )));
                }
                writeln!(out, "{}\t{}\t{:.6}", m.example, m.num_experts, m.mean_loglik).unwrap();
            }
            result.model
        }
    };
    if model
        .templates
        .iter()
        .any(|t| t.probs().iter().any(|v| !v.is_finite()))
    {
        return Err(CliError::Degenerate(
            "training produced non-finite template values".into(),
        ));
    }
    if args.fit_geometry {
        let reps = learning::e_step(&model, &data)?;
        let geometry =
            learning::fit_geometry(&reps, &model.grid, model.num_experts())?;
        model.geometry = Some(geometry);
    }
    formats::write_model(&args.out, &model)?;
    print!("{out}");
    Ok(())
}

// ---------------------------------------------------------------------------
// infer / eval
// ---------------------------------------------------------------------------

#[derive(Args)]
pub struct InferArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long, value_enum, default_value_t = RobustifyArg::Auto)]
    pub robustify: RobustifyArg,
    #[arg(long)]
    pub out: PathBuf,
}

fn cmd_infer(args: InferArgs) -> Result<()> {
    let model = formats::read_model(&args.model)?;
    let data = formats::read_bed(&args.data)?;
    let robustify = args.robustify.resolve(model.rule);
    let reps = data
        .iter()
        .map(|x| lmp_infer(&model, x, robustify))
        .collect::<std::result::Result<Vec<_>, _>>()?;
    formats::write_atomic(&args.out, formats::encode_reps(&reps)?.as_bytes())?;
    Ok(())
}

#[derive(Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long)]
    pub data: PathBuf,
}

/// Mean cross-entropy of the inferred compositions. Per-record values are
/// sorted before accumulation so the report does not depend on record
/// order.
pub fn eval_cross_entropy(model: &ExpertModel, data: &[BinaryVector]) -> Result<f64> {
    let robustify = default_robustify(model.rule);
    let mut values = Vec::with_capacity(data.len());
    for x in data {
        values.push(-lmp_infer(model, x, robustify)?.loglik);
    }
    values.sort_by(f64::total_cmp);
    Ok(values.iter().sum::<f64>() / data.len() as f64)
}

fn cmd_eval(args: EvalArgs) -> Result<()> {
    let model = formats::read_model(&args.model)?;
    let data = formats::read_bed(&args.data)?;
    if data.is_empty() {
        return Err(CliError::Usage("dataset is empty".into()));
    }
    let per_image = eval_cross_entropy(&model, &data)?;
    let per_pixel = per_image / model.dim() as f64;
    println!("n\tnats_per_image\tnats_per_pixel");
    println!("{}\t{:.6}\t{:.6}", data.len(), per_image, per_pixel);
    Ok(())
}

// ---------------------------------------------------------------------------
// sample / render
// ---------------------------------------------------------------------------

#[derive(Args)]
pub struct SampleArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long, default_value_t = 9)]
    pub n: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out_dir: PathBuf,
}

fn template_image_bytes(model_rule: Rule, shape: (usize, usize), probs: &[f64]) -> (Vec<u8>, &'static str) {
    let (h, w) = shape;
    if model_rule.is_write_black() {
        (render::pgm_bytes(w, h, probs), "pgm")
    } else {
        (render::ppm_bytes(w, h, probs), "ppm")
    }
}

fn cmd_sample(args: SampleArgs) -> Result<()> {
    let model = formats::read_model(&args.model)?;
    let geometry: &GeometricModel = model
        .geometry
        .as_ref()
        .ok_or_else(|| CliError::Usage("model has no fitted geometry".into()))?;
    let shape = model
        .shape()
        .ok_or_else(|| CliError::Usage("model is not image-shaped".into()))?;
    std::fs::create_dir_all(&args.out_dir)
        .map_err(|e| CliError::io("creating output directory", e))?;
    for i in 0..args.n {
        let composed =
            learning::sample_configuration(geometry, &model, args.seed.wrapping_add(i as u64))?;
        let (bytes, ext) = template_image_bytes(model.rule, shape, composed.probs());
        let path = args.out_dir.join(format!("sample_{i:03}.{ext}"));
        formats::write_atomic(&path, &bytes)?;
    }
    Ok(())
}

#[derive(Args)]
pub struct RenderArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long)]
    pub out_dir: PathBuf,
}

fn cmd_render(args: RenderArgs) -> Result<()> {
    let model = formats::read_model(&args.model)?;
    let shape = model
        .shape()
        .ok_or_else(|| CliError::Usage("model is not image-shaped".into()))?;
    std::fs::create_dir_all(&args.out_dir)
        .map_err(|e| CliError::io("creating output directory", e))?;
    for (k, template) in model.templates.iter().enumerate() {
        let (bytes, ext) = template_image_bytes(model.rule, shape, template.probs());
        let path = args.out_dir.join(format!("expert_{k:03}.{ext}"));
        formats::write_atomic(&path, &bytes)?;
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// landscape
// ---------------------------------------------------------------------------

#[derive(Args)]
pub struct LandscapeArgs {
    #[arg(long, value_enum)]
    pub rule: RuleArg,
    #[arg(long, default_value_t = 0.5)]
    pub q: f64,
    #[arg(long, default_value_t = 0.01)]
    pub step: f64,
    #[arg(long)]
    pub out: PathBuf,
    /// Raw grid TSV path (default: `<out>` with a `.tsv` extension).
    #[arg(long)]
    pub tsv_out: Option<PathBuf>,
}

fn cmd_landscape(args: LandscapeArgs) -> Result<()> {
    let rule = args.rule.to_rule(args.q);
    let l = landscape(rule, args.step)?;
    let n = l.n();
    formats::write_atomic(&args.out, &render::pgm_heatmap_bytes(n, n, &l.values))?;

    let mut tsv = String::new();
    for i in 0..n {
        for j in 0..n {
            if j > 0 {
                tsv.push('\t');
            }
            write!(tsv, "{}", l.at(i, j)).unwrap();
        }
        tsv.push('\n');
    }
    let tsv_path = args
        .tsv_out
        .unwrap_or_else(|| args.out.with_extension("tsv"));
    formats::write_atomic(&tsv_path, tsv.as_bytes())?;

    for (p1, p2) in l.argmax_points() {
        println!("argmax\t{p1}\t{p2}");
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// scene-demo
// ---------------------------------------------------------------------------

#[derive(Args)]
pub struct SceneDemoArgs {
    #[arg(long, default_value_t = 0.1)]
    pub noise: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, value_enum, default_value_t = OnOff::On)]
    pub robustify: OnOff,
    #[arg(long, default_value_t = 5)]
    pub count: usize,
    #[arg(long, default_value_t = 36)]
    pub size: usize,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
pub enum OnOff {
    On,
    Off,
}

fn cmd_scene_demo(args: SceneDemoArgs) -> Result<()> {
    let cfg = SceneCfg {
        canvas: (args.size, args.size),
        count: args.count,
        flip_noise: args.noise,
        seed: args.seed,
        ..Default::default()
    };
    let out = synthetic::run_scene_demo(&cfg, matches!(args.robustify, OnOff::On))?;
    let grid = cfg.grid()?;
    let mut truth_left = out.sample.truth.clone();
    println!("pick\tglyph\tshift_x\tshift_y\tstatus");
    for (i, &(glyph, t)) in out.rep.picks.iter().enumerate() {
        let p = grid.params(t)?;
        let status = match truth_left.iter().position(|&pair| pair == (glyph, t)) {
            Some(pos) => {
                truth_left.swap_remove(pos);
                "hit"
            }
            None => "miss",
        };
        println!("{i}\t{glyph}\t{}\t{}\t{status}", p.shift_x, p.shift_y);
    }
    println!(
        "summary\trecovered\t{}\tof\t{}\textras\t{}",
        out.recovered,
        out.sample.truth.len(),
        out.extras
    );
    Ok(())
}

// ---------------------------------------------------------------------------

pub fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Gen(args) => cmd_gen(args),
        Command::Train(args) => cmd_train(args),
        Command::Infer(args) => cmd_infer(args),
        Command::Eval(args) => cmd_eval(args),
        Command::Sample(args) => cmd_sample(args),
        Command::Render(args) => cmd_render(args),
        Command::Landscape(args) => cmd_landscape(args),
        Command::SceneDemo(args) => cmd_scene_demo(args),
    }
}
