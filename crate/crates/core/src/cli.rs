//! Command-line front end.

use std::io::Write;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use clap::{Args, Parser, Subcommand, ValueEnum};

use crate::attack::{search_1pixel, search_2pixel, AttackConfig, Attacker, Strategy};
use crate::attribution::{
    overlay_ppm, rank, score_pixels, threshold_count, top_percent, Highlight, Metric,
};
use crate::data::{normalize, ImageSelector};
use crate::error::{Error, Result};
use crate::network::{load_network, Network};
use crate::pipeline::{pct_label, run_pipeline, BaseImage, PipelineConfig};
use crate::report::{one_pixel_report, two_pixel_report};
use crate::symexec::concolic_coefficients;

#[derive(Debug, Parser)]
#[command(
    name = "relu-concolic",
    version,
    about = "Concolic analysis of ReLU classifiers"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Print logits, predicted label and active neurons per layer.
    Classify(ImageArgs),
    /// Rank pixels by importance and write green overlays.
    Analyze(AnalyzeArgs),
    /// Search for 1-pixel attacks.
    Attack1(Attack1Args),
    /// Search for 2-pixel attacks among the top-ranked pixels.
    Attack2(Attack2Args),
    /// Write the network as an imperative program.
    Translate(TranslateArgs),
    /// Full experiment over base images: translate, analyze, attack1, attack2, tables.
    Pipeline(PipelineArgs),
}

#[derive(Debug, Args)]
pub struct ImageArgs {
    /// JSON weight file.
    #[arg(long)]
    pub network: PathBuf,
    /// `idx:<path-prefix>:<index>` or `digit:<d>`.
    #[arg(long)]
    pub image: ImageSelector,
    /// IDX prefix searched by `digit:<d>` selectors (`<prefix>-images-idx3-ubyte`).
    #[arg(long)]
    pub data: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SolverArgs {
    /// Amount by which strict inequalities must hold.
    #[arg(long, default_value_t = 1e-6)]
    pub margin: f64,
    /// Pixel value bounds as `lo,hi`.
    #[arg(long, default_value = "0,1")]
    pub range: PixelRange,
    /// Worker threads for attack candidates.
    #[arg(long, default_value_t = 1)]
    pub jobs: usize,
}

#[derive(Debug, Args)]
pub struct AnalyzeArgs {
    #[command(flatten)]
    pub image: ImageArgs,
    /// Comma-separated metrics.
    #[arg(long, value_delimiter = ',', default_value = "coi")]
    pub metric: Vec<Metric>,
    /// Comma-separated top percentages.
    #[arg(long, value_delimiter = ',', default_value = "5")]
    pub top: Vec<f64>,
    #[arg(long, default_value = "out")]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum StrategyKind {
    Exhaustive,
    Guided,
}

#[derive(Debug, Args)]
pub struct Attack1Args {
    #[command(flatten)]
    pub image: ImageArgs,
    #[command(flatten)]
    pub solver: SolverArgs,
    #[arg(long, value_enum, default_value_t = StrategyKind::Exhaustive)]
    pub strategy: StrategyKind,
    /// Ranking metric for the guided strategy.
    #[arg(long, default_value = "coi")]
    pub metric: Metric,
    /// Top percentage explored by the guided strategy.
    #[arg(long, default_value_t = 5.0)]
    pub top: f64,
    #[arg(long, default_value = "out")]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct Attack2Args {
    #[command(flatten)]
    pub image: ImageArgs,
    #[command(flatten)]
    pub solver: SolverArgs,
    #[arg(long, default_value = "coi")]
    pub metric: Metric,
    #[arg(long, default_value_t = 5.0)]
    pub top: f64,
    #[arg(long, default_value = "out")]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct TranslateArgs {
    #[arg(long)]
    pub network: PathBuf,
    #[arg(long, default_value = "out")]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct PipelineArgs {
    #[arg(long)]
    pub network: PathBuf,
    /// IDX prefix holding the base images.
    #[arg(long)]
    pub data: PathBuf,
    /// Base images; defaults to the first image of every digit 0-9.
    #[arg(long, value_delimiter = ',')]
    pub images: Vec<ImageSelector>,
    #[command(flatten)]
    pub solver: SolverArgs,
    #[arg(long, default_value = "out")]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PixelRange {
    pub lo: f64,
    pub hi: f64,
}

impl FromStr for PixelRange {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::Usage(format!("bad range '{s}', expected <lo>,<hi>"));
        let (lo, hi) = s.split_once(',').ok_or_else(bad)?;
        let lo: f64 = lo.trim().parse().map_err(|_| bad())?;
        let hi: f64 = hi.trim().parse().map_err(|_| bad())?;
        if !(lo.is_finite() && hi.is_finite() && lo < hi) {
            return Err(Error::InvalidRange { lo, hi });
        }
        Ok(PixelRange { lo, hi })
    }
}

/// Everything a command needs, checked before any work starts.
#[derive(Debug, Clone)]
pub struct RunConfig {
    pub network: PathBuf,
    pub images: Vec<ImageSelector>,
    pub data: Option<PathBuf>,
    pub metrics: Vec<Metric>,
    pub top: Vec<f64>,
    pub strategy: StrategyKind,
    pub attack: AttackConfig,
    pub out: PathBuf,
    pub jobs: usize,
}

impl RunConfig {
    fn base(network: PathBuf, out: PathBuf) -> Self {
        Self {
            network,
            images: Vec::new(),
            data: None,
            metrics: vec![Metric::Coi],
            top: vec![5.0],
            strategy: StrategyKind::Exhaustive,
            attack: AttackConfig::default(),
            out,
            jobs: 1,
        }
    }

    fn with_image(mut self, args: &ImageArgs) -> Self {
        self.images = vec![args.image.clone()];
        self.data = args.data.clone();
        self
    }

    fn with_solver(mut self, args: &SolverArgs) -> Self {
        self.attack = AttackConfig {
            margin: args.margin,
            lo: args.range.lo,
            hi: args.range.hi,
        };
        self.jobs = args.jobs;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.metrics.is_empty() {
            return Err(Error::Usage("at least one --metric is required".into()));
        }
        for &pct in &self.top {
            threshold_count(1, pct)?;
        }
        if self.jobs == 0 {
            return Err(Error::Usage("--jobs must be at least 1".into()));
        }
        self.attack.validate()
    }

    fn image(&self) -> &ImageSelector {
        &self.images[0]
    }
}

impl Command {
    pub fn config(&self) -> RunConfig {
        match self {
            Command::Classify(a) => {
                RunConfig::base(a.network.clone(), PathBuf::from("out")).with_image(a)
            }
            Command::Analyze(a) => RunConfig {
                metrics: a.metric.clone(),
                top: a.top.clone(),
                ..RunConfig::base(a.image.network.clone(), a.out.clone()).with_image(&a.image)
            },
            Command::Attack1(a) => RunConfig {
                metrics: vec![a.metric],
                top: vec![a.top],
                strategy: a.strategy,
                ..RunConfig::base(a.image.network.clone(), a.out.clone())
                    .with_image(&a.image)
                    .with_solver(&a.solver)
            },
            Command::Attack2(a) => RunConfig {
                metrics: vec![a.metric],
                top: vec![a.top],
                ..RunConfig::base(a.image.network.clone(), a.out.clone())
                    .with_image(&a.image)
                    .with_solver(&a.solver)
            },
            Command::Translate(a) => RunConfig::base(a.network.clone(), a.out.clone()),
            Command::Pipeline(a) => RunConfig {
                images: if a.images.is_empty() {
                    (0..10).map(ImageSelector::Digit).collect()
                } else {
                    a.images.clone()
                },
                data: Some(a.data.clone()),
                metrics: Metric::ALL.to_vec(),
                top: vec![5.0, 10.0, 30.0],
                ..RunConfig::base(a.network.clone(), a.out.clone()).with_solver(&a.solver)
            },
        }
    }
}

/// Runs one command, writing human-readable output to `stdout`.
pub fn run(cli: &Cli, stdout: &mut dyn Write) -> Result<()> {
    let cfg = cli.command.config();
    cfg.validate()?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.jobs)
        .build()
        .map_err(|e| Error::Usage(format!("cannot start {} workers: {e}", cfg.jobs)))?;
    let mut buffer = Vec::new();
    let result = pool.install(|| {
        let sink: &mut dyn Write = &mut buffer;
        match &cli.command {
            Command::Classify(_) => cmd_classify(&cfg, sink),
            Command::Analyze(_) => cmd_analyze(&cfg, sink),
            Command::Attack1(_) => cmd_attack1(&cfg, sink),
            Command::Attack2(_) => cmd_attack2(&cfg, sink),
            Command::Translate(_) => cmd_translate(&cfg, sink),
            Command::Pipeline(_) => cmd_pipeline(&cfg, sink),
        }
    });
    stdout.write_all(&buffer).map_err(out_err)?;
    result
}

/// Maps a command outcome to a process exit code, reporting errors on stderr.
pub fn exit_code(result: Result<()>) -> i32 {
    match result {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            match e {
                Error::Usage(_) | Error::InvalidPercent(_) | Error::InvalidRange { .. } => 2,
                _ => 1,
            }
        }
    }
}

fn out_err(e: std::io::Error) -> Error {
    Error::io("<stdout>", e)
}

fn load_image(cfg: &RunConfig, selector: &ImageSelector) -> Result<(Vec<f64>, u8)> {
    let (grid, label) = selector.resolve(cfg.data.as_deref())?;
    Ok((normalize(&grid).into_inner(), label))
}

fn write_file(path: &Path, contents: &str) -> Result<()> {
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    std::fs::write(path, contents).map_err(|e| Error::io(path, e))
}

fn checked_input(net: &Network, x: &[f64]) -> Result<()> {
    if x.len() != net.input_dim() {
        return Err(Error::DimensionMismatch {
            expected: net.input_dim(),
            actual: x.len(),
        });
    }
    Ok(())
}

pub fn cmd_classify(cfg: &RunConfig, stdout: &mut dyn Write) -> Result<()> {
    let net = load_network(&cfg.network)?;
    let (x, truth) = load_image(cfg, cfg.image())?;
    checked_input(&net, &x)?;
    let res = net.forward(&x)?;
    let logits: Vec<String> = res.logits.iter().map(|v| format!("{v:.6}")).collect();
    let active: Vec<String> = res
        .pattern
        .active_per_layer()
        .iter()
        .zip(&res.pattern.layer_sizes)
        .map(|(a, n)| format!("{a}/{n}"))
        .collect();
    writeln!(stdout, "image: {} (dataset label {truth})", cfg.image()).map_err(out_err)?;
    writeln!(stdout, "logits: [{}]", logits.join(", ")).map_err(out_err)?;
    writeln!(stdout, "label: {}", res.label).map_err(out_err)?;
    writeln!(
        stdout,
        "active neurons per hidden layer: {}",
        active.join(" ")
    )
    .map_err(out_err)?;
    Ok(())
}

pub fn cmd_analyze(cfg: &RunConfig, stdout: &mut dyn Write) -> Result<()> {
    let net = load_network(&cfg.network)?;
    let (x, _) = load_image(cfg, cfg.image())?;
    checked_input(&net, &x)?;
    let label = net.forward(&x)?.label;
    let coeffs = concolic_coefficients(&net, &x)?;
    let dir = cfg.out.join(cfg.image().tag());
    for &metric in &cfg.metrics {
        let ranking = rank(label, metric, score_pixels(&coeffs, &x, label, metric)?);
        let path = dir.join(format!("ranking-{metric}.txt"));
        write_file(&path, &ranking.to_text())?;
        writeln!(stdout, "{metric}: ranking written to {}", path.display()).map_err(out_err)?;
        for &pct in &cfg.top {
            let top = top_percent(&ranking, pct)?;
            let path = dir.join(format!("important-{metric}-top{}.ppm", pct_label(pct)));
            write_file(&path, &overlay_ppm(&x, &top, Highlight::Green)?)?;
            writeln!(
                stdout,
                "{metric} top {}%: {} pixels highlighted in {}",
                pct_label(pct),
                top.len(),
                path.display()
            )
            .map_err(out_err)?;
        }
    }
    Ok(())
}

pub fn cmd_attack1(cfg: &RunConfig, stdout: &mut dyn Write) -> Result<()> {
    let net = load_network(&cfg.network)?;
    let (x, _) = load_image(cfg, cfg.image())?;
    let attacker = Attacker::new(&net, &x, cfg.attack)?;
    let strategy = match cfg.strategy {
        StrategyKind::Exhaustive => Strategy::Exhaustive,
        StrategyKind::Guided => Strategy::Guided {
            metric: cfg.metrics[0],
            pct: cfg.top[0],
        },
    };
    let search = search_1pixel(&attacker, strategy)?;
    let name = strategy.name();
    let report = one_pixel_report(&cfg.image().to_string(), attacker.label(), &name, &search);
    let dir = cfg.out.join(cfg.image().tag());
    write_file(&dir.join(format!("attack1-{name}.txt")), &report)?;
    write_file(
        &dir.join(format!("attack1-{name}.ppm")),
        &overlay_ppm(&x, &search.attackable_pixels(), Highlight::Red)?,
    )?;
    let summary = report.lines().last().unwrap_or_default();
    writeln!(stdout, "{summary}").map_err(out_err)?;
    Ok(())
}

pub fn cmd_attack2(cfg: &RunConfig, stdout: &mut dyn Write) -> Result<()> {
    let net = load_network(&cfg.network)?;
    let (x, _) = load_image(cfg, cfg.image())?;
    let attacker = Attacker::new(&net, &x, cfg.attack)?;
    let (metric, pct) = (cfg.metrics[0], cfg.top[0]);
    let search = search_2pixel(&attacker, metric, pct)?;
    let selection = format!("{metric}-top{}", pct_label(pct));
    let report = two_pixel_report(
        &cfg.image().to_string(),
        attacker.label(),
        &selection,
        &search,
    );
    let dir = cfg.out.join(cfg.image().tag());
    write_file(&dir.join(format!("attack2-{selection}.txt")), &report)?;
    let union: Vec<usize> = search.attacked_pixels().into_iter().collect();
    write_file(
        &dir.join(format!("attack2-{selection}.ppm")),
        &overlay_ppm(&x, &union, Highlight::Red)?,
    )?;
    let summary = report.lines().last().unwrap_or_default();
    writeln!(stdout, "{summary}").map_err(out_err)?;
    Ok(())
}

pub fn cmd_translate(cfg: &RunConfig, stdout: &mut dyn Write) -> Result<()> {
    let net = load_network(&cfg.network)?;
    let path = cfg.out.join("program.txt");
    write_file(&path, &net.emit_program())?;
    writeln!(
        stdout,
        "program with {} guarded neurons written to {}",
        net.hidden_count(),
        path.display()
    )
    .map_err(out_err)?;
    Ok(())
}

pub fn cmd_pipeline(cfg: &RunConfig, stdout: &mut dyn Write) -> Result<()> {
    let net = load_network(&cfg.network)?;
    let mut images = Vec::with_capacity(cfg.images.len());
    for selector in &cfg.images {
        let (x, _) = load_image(cfg, selector)?;
        checked_input(&net, &x)?;
        images.push(BaseImage {
            tag: selector.tag(),
            x: x.into(),
        });
    }
    let pcfg = PipelineConfig {
        attack: cfg.attack,
        metrics: cfg.metrics.clone(),
        thresholds: cfg.top.clone(),
        ..PipelineConfig::new(&cfg.out)
    };
    let outcome = run_pipeline(&net, &images, &pcfg)?;
    write!(stdout, "{}", outcome.tables).map_err(out_err)?;
    writeln!(
        stdout,
        "\n{} files written under {}",
        outcome.files.len(),
        cfg.out.display()
    )
    .map_err(out_err)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn range_parsing() {
        assert_eq!(
            "0,1".parse::<PixelRange>().unwrap(),
            PixelRange { lo: 0.0, hi: 1.0 }
        );
        assert_eq!(
            "-0.5, 2".parse::<PixelRange>().unwrap(),
            PixelRange { lo: -0.5, hi: 2.0 }
        );
        assert!("1,0".parse::<PixelRange>().is_err());
        assert!("1".parse::<PixelRange>().is_err());
    }

    #[test]
    fn defaults() {
        let cli = Cli::try_parse_from([
            "relu-concolic",
            "attack1",
            "--network",
            "n.json",
            "--image",
            "digit:3",
        ])
        .unwrap();
        let cfg = cli.command.config();
        assert_eq!(cfg.metrics, vec![Metric::Coi]);
        assert_eq!(cfg.top, vec![5.0]);
        assert_eq!(cfg.attack, AttackConfig::default());
        assert_eq!(cfg.jobs, 1);
        assert_eq!(cfg.strategy, StrategyKind::Exhaustive);
        cfg.validate().unwrap();
    }

    #[test]
    fn empty_metric_is_rejected() {
        let res = Cli::try_parse_from([
            "relu-concolic",
            "analyze",
            "--network",
            "n.json",
            "--image",
            "digit:3",
            "--metric",
            "",
        ]);
        assert!(res.is_err());
    }

    #[test]
    fn bad_top_fails_validation() {
        let cli = Cli::try_parse_from([
            "relu-concolic",
            "analyze",
            "--network",
            "n.json",
            "--image",
            "digit:3",
            "--top",
            "150",
        ])
        .unwrap();
        assert!(matches!(
            cli.command.config().validate(),
            Err(Error::InvalidPercent(_))
        ));
    }
}
