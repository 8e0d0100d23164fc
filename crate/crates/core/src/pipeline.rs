//! End-to-end experiment over a set of base images: program translation,
//! importance rankings and overlays for every metric and threshold, an
//! exhaustive 1-pixel attack and a rank-guided 2-pixel attack per image,
//! and the summary tables comparing them.

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use crate::attack::{
    search_1pixel, search_2pixel, AttackConfig, Attacker, OnePixelSearch, Strategy, TwoPixelSearch,
};
use crate::attribution::{
    overlay_ppm, rank, score_pixels, threshold_count, top_percent, Highlight, Metric, Ranking,
};
use crate::error::{Error, Result};
use crate::network::{InputVector, Network};
use crate::report::{format_table, label_set, one_pixel_report, two_pixel_report};
use crate::symexec::concolic_coefficients;

#[derive(Debug, Clone)]
pub struct PipelineConfig {
    pub attack: AttackConfig,
    pub metrics: Vec<Metric>,
    pub thresholds: Vec<f64>,
    /// Ranking used to pick the 2-pixel candidates.
    pub pair_metric: Metric,
    pub pair_pct: f64,
    pub out_dir: PathBuf,
}

impl PipelineConfig {
    pub fn new(out_dir: impl Into<PathBuf>) -> Self {
        Self {
            attack: AttackConfig::default(),
            metrics: Metric::ALL.to_vec(),
            thresholds: vec![5.0, 10.0, 30.0],
            pair_metric: Metric::Coi,
            pair_pct: 5.0,
            out_dir: out_dir.into(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct BaseImage {
    /// Directory name and row label, e.g. `digit3`.
    pub tag: String,
    pub x: InputVector,
}

#[derive(Debug, Clone)]
pub struct ImageOutcome {
    pub tag: String,
    pub label: usize,
    pub rankings: Vec<Ranking>,
    pub one_pixel: OnePixelSearch,
    pub two_pixel: TwoPixelSearch,
}

#[derive(Debug, Clone)]
pub struct PipelineOutcome {
    pub images: Vec<ImageOutcome>,
    pub tables: String,
    /// Every file written, relative to the output directory, sorted.
    pub files: Vec<PathBuf>,
}

struct Writer<'a> {
    root: &'a Path,
    files: Vec<PathBuf>,
}

impl Writer<'_> {
    fn write(&mut self, rel: impl AsRef<Path>, contents: &str) -> Result<()> {
        let rel = rel.as_ref();
        let path = self.root.join(rel);
        if let Some(parent) = path.parent() {
            std::fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
        }
        std::fs::write(&path, contents).map_err(|e| Error::io(&path, e))?;
        self.files.push(rel.to_path_buf());
        Ok(())
    }
}

pub fn pct_label(pct: f64) -> String {
    format!("{pct}")
}

pub fn run_pipeline(
    net: &Network,
    images: &[BaseImage],
    cfg: &PipelineConfig,
) -> Result<PipelineOutcome> {
    cfg.attack.validate()?;
    if cfg.metrics.is_empty() {
        return Err(Error::Usage("no metric selected".into()));
    }
    for &pct in cfg.thresholds.iter().chain([&cfg.pair_pct]) {
        threshold_count(net.input_dim(), pct)?;
    }
    let mut out = Writer {
        root: &cfg.out_dir,
        files: Vec::new(),
    };
    out.write("program.txt", &net.emit_program())?;

    let mut outcomes = Vec::with_capacity(images.len());
    for image in images {
        outcomes.push(run_image(net, image, cfg, &mut out)?);
    }

    let tables = tables(net.input_dim(), &outcomes, cfg)?;
    out.write("tables.txt", &tables)?;
    let mut files = out.files;
    files.sort();
    Ok(PipelineOutcome {
        images: outcomes,
        tables,
        files,
    })
}

fn run_image(
    net: &Network,
    image: &BaseImage,
    cfg: &PipelineConfig,
    out: &mut Writer<'_>,
) -> Result<ImageOutcome> {
    let x: &[f64] = &image.x;
    let dir = PathBuf::from(&image.tag);
    let attacker = Attacker::new(net, x, cfg.attack)?;
    let label = attacker.label();
    out.write(
        dir.join("image.ppm"),
        &overlay_ppm(x, &[], Highlight::Green)?,
    )?;

    let coeffs = concolic_coefficients(net, x)?;
    let mut rankings = Vec::new();
    for &metric in &cfg.metrics {
        let ranking = rank(label, metric, score_pixels(&coeffs, x, label, metric)?);
        out.write(
            dir.join(format!("ranking-{metric}.txt")),
            &ranking.to_text(),
        )?;
        for &pct in &cfg.thresholds {
            let top = top_percent(&ranking, pct)?;
            out.write(
                dir.join(format!("important-{metric}-top{}.ppm", pct_label(pct))),
                &overlay_ppm(x, &top, Highlight::Green)?,
            )?;
        }
        rankings.push(ranking);
    }

    let one = search_1pixel(&attacker, Strategy::Exhaustive)?;
    out.write(
        dir.join("attack1-exhaustive.txt"),
        &one_pixel_report(&image.tag, label, "exhaustive", &one),
    )?;
    out.write(
        dir.join("attack1-pixels.ppm"),
        &overlay_ppm(x, &one.attackable_pixels(), Highlight::Red)?,
    )?;
    let first: Vec<usize> = one
        .results
        .first()
        .map(|r| r.pixels.clone())
        .unwrap_or_default();
    out.write(
        dir.join("attack1-first.ppm"),
        &overlay_ppm(x, &first, Highlight::Red)?,
    )?;

    let two = search_2pixel(&attacker, cfg.pair_metric, cfg.pair_pct)?;
    let selection = format!("{}-top{}", cfg.pair_metric, pct_label(cfg.pair_pct));
    out.write(
        dir.join(format!("attack2-{selection}.txt")),
        &two_pixel_report(&image.tag, label, &selection, &two),
    )?;
    let union: Vec<usize> = two.attacked_pixels().into_iter().collect();
    out.write(
        dir.join("attack2-pixels.ppm"),
        &overlay_ppm(x, &union, Highlight::Red)?,
    )?;
    let example = two
        .new_pairs()
        .first()
        .or(two.attacked_pairs().first())
        .map(|&(a, b)| vec![a, b])
        .unwrap_or_default();
    out.write(
        dir.join("attack2-example.ppm"),
        &overlay_ppm(x, &example, Highlight::Red)?,
    )?;

    Ok(ImageOutcome {
        tag: image.tag.clone(),
        label,
        rankings,
        one_pixel: one,
        two_pixel: two,
    })
}

fn tables(m: usize, outcomes: &[ImageOutcome], cfg: &PipelineConfig) -> Result<String> {
    let mut text = String::new();

    // Important pixels per metric and threshold (the overlays carry the picture).
    let mut header = vec!["image".to_string(), "label".into(), "metric".into()];
    for &pct in &cfg.thresholds {
        header.push(format!(
            "top{}%({})",
            pct_label(pct),
            threshold_count(m, pct)?
        ));
    }
    header.push("top-10 pixels".into());
    let mut rows = Vec::new();
    for o in outcomes {
        for ranking in &o.rankings {
            let mut row = vec![
                o.tag.clone(),
                o.label.to_string(),
                ranking.metric.to_string(),
            ];
            for &pct in &cfg.thresholds {
                row.push(format!(
                    "important-{}-top{}.ppm",
                    ranking.metric,
                    pct_label(pct)
                ));
            }
            row.push(
                ranking
                    .entries
                    .iter()
                    .take(10)
                    .map(|e| format!("<{}, {:.3}>", e.pixel, e.score))
                    .collect::<Vec<_>>()
                    .join(" "),
            );
            rows.push(row);
        }
    }
    text.push_str(&format_table("Table I: important pixels", &header, &rows));
    text.push('\n');

    // 1-pixel attacks.
    let mut header = vec!["".to_string()];
    header.extend(outcomes.iter().map(|o| o.tag.clone()));
    let ap = |f: &dyn Fn(&OnePixelSearch) -> String| -> Vec<String> {
        outcomes.iter().map(|o| f(&o.one_pixel)).collect()
    };
    let mut rows = Vec::new();
    for (name, cells) in [
        ("#ap", ap(&|s| s.attackable_pixels().len().to_string())),
        ("alabel", ap(&|s| label_set(&s.labels()))),
        (
            "1stap",
            ap(&|s| {
                s.first_pixel()
                    .map_or_else(|| "-".into(), |p| p.to_string())
            }),
        ),
    ] {
        let mut row = vec![name.to_string()];
        row.extend(cells);
        rows.push(row);
    }
    text.push_str(&format_table(
        "Table II: 1-pixel attackable pixels (exhaustive)",
        &header,
        &rows,
    ));
    text.push('\n');

    // 2-pixel attacks.
    let tp = |f: &dyn Fn(&TwoPixelSearch) -> String| -> Vec<String> {
        outcomes.iter().map(|o| f(&o.two_pixel)).collect()
    };
    let mut rows = Vec::new();
    for (name, cells) in [
        ("#a2p", tp(&|s| s.attacked_pairs().len().to_string())),
        ("#a2p-new", tp(&|s| s.new_pairs().len().to_string())),
        ("alabel", tp(&|s| label_set(&s.labels()))),
    ] {
        let mut row = vec![name.to_string()];
        row.extend(cells);
        rows.push(row);
    }
    text.push_str(&format_table(
        &format!(
            "Table III: 2-pixel attacks over top-{}% {} pixels",
            pct_label(cfg.pair_pct),
            cfg.pair_metric
        ),
        &header,
        &rows,
    ));
    text.push('\n');

    // Share of attackable pixels inside each top-k set.
    let mut header = vec!["image".to_string(), "#ap".into()];
    for &pct in &cfg.thresholds {
        for metric in &cfg.metrics {
            header.push(format!(
                "{}%({}) {metric}",
                pct_label(pct),
                threshold_count(m, pct)?
            ));
        }
    }
    let mut rows = Vec::new();
    for o in outcomes {
        let attackable: BTreeSet<usize> = o.one_pixel.attackable_pixels().into_iter().collect();
        let mut row = vec![o.tag.clone(), attackable.len().to_string()];
        for &pct in &cfg.thresholds {
            for ranking in &o.rankings {
                let top: BTreeSet<usize> = top_percent(ranking, pct)?.into_iter().collect();
                row.push(if attackable.is_empty() {
                    "-".into()
                } else {
                    let hit = attackable.intersection(&top).count();
                    format!("{:.1}", 100.0 * hit as f64 / attackable.len() as f64)
                });
            }
        }
        rows.push(row);
    }
    text.push_str(&format_table(
        "Table IV: % of attackable pixels among important pixels",
        &header,
        &rows,
    ));
    text.push('\n');

    // Ranked pixels to explore before the first 1-pixel attack.
    let mut header = vec!["image".to_string()];
    header.extend(cfg.metrics.iter().map(Metric::to_string));
    let mut rows = Vec::new();
    for o in outcomes {
        let attackable = o.one_pixel.attackable_pixels();
        let mut row = vec![o.tag.clone()];
        for ranking in &o.rankings {
            let first = attackable.iter().filter_map(|&p| ranking.position(p)).min();
            row.push(first.map_or_else(
                || "-".into(),
                |pos| format!("{}({:.1}%)", pos + 1, 100.0 * (pos + 1) as f64 / m as f64),
            ));
        }
        rows.push(row);
    }
    text.push_str(&format_table(
        "Table V: important pixels to explore for the first 1-pixel attack",
        &header,
        &rows,
    ));
    text.push('\n');

    let mut header = vec!["".to_string()];
    header.extend(outcomes.iter().map(|o| o.tag.clone()));
    let mut row = vec![cfg.pair_metric.to_string()];
    row.extend(outcomes.iter().map(|o| {
        o.two_pixel
            .pixels_to_first_hit()
            .map_or_else(|| "-".into(), |k| k.to_string())
    }));
    text.push_str(&format_table(
        "Table VI: important pixels to explore for the first 2-pixel attack",
        &header,
        &[row],
    ));
    Ok(text)
}
