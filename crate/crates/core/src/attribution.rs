//! Pixel importance from output-label coefficients, ranking, top-k
//! selection and PPM heatmap overlays.

use std::fmt;
use std::fmt::Write as _;
use std::path::Path;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::symexec::CoefficientMatrix;

pub const IMAGE_SIDE: usize = 28;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Metric {
    /// `|C[label][j]|`
    Abs,
    /// `C[label][j]`
    Co,
    /// `C[label][j] · x[j]`
    Coi,
}

impl Metric {
    pub const ALL: [Metric; 3] = [Metric::Abs, Metric::Co, Metric::Coi];

    pub fn name(self) -> &'static str {
        match self {
            Metric::Abs => "abs",
            Metric::Co => "co",
            Metric::Coi => "coi",
        }
    }
}

impl fmt::Display for Metric {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Metric {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "abs" => Ok(Metric::Abs),
            "co" => Ok(Metric::Co),
            "coi" => Ok(Metric::Coi),
            other => Err(Error::Usage(format!(
                "unknown metric '{other}' (expected abs, co or coi)"
            ))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ImportanceScore {
    pub pixel: usize,
    pub score: f64,
    pub metric: Metric,
}

/// Pixels in descending score order; equal scores by ascending pixel index.
#[derive(Debug, Clone, PartialEq)]
pub struct Ranking {
    pub label: usize,
    pub metric: Metric,
    pub entries: Vec<ImportanceScore>,
}

impl Ranking {
    pub fn pixels(&self) -> impl Iterator<Item = usize> + '_ {
        self.entries.iter().map(|e| e.pixel)
    }

    /// Zero-based position of `pixel`, if ranked.
    pub fn position(&self, pixel: usize) -> Option<usize> {
        self.entries.iter().position(|e| e.pixel == pixel)
    }

    /// One `pixel score` line per entry, rank order.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "# metric={} label={}", self.metric, self.label);
        for e in &self.entries {
            let _ = writeln!(out, "{} {:?}", e.pixel, e.score);
        }
        out
    }
}

pub fn score_pixels(
    coeffs: &CoefficientMatrix,
    x: &[f64],
    label: usize,
    metric: Metric,
) -> Result<Vec<ImportanceScore>> {
    let row = coeffs.rows.get(label).ok_or(Error::IndexOutOfRange {
        index: label,
        limit: coeffs.output_dim(),
    })?;
    if x.len() != row.len() {
        return Err(Error::DimensionMismatch {
            expected: row.len(),
            actual: x.len(),
        });
    }
    Ok(row
        .iter()
        .zip(x)
        .enumerate()
        .map(|(pixel, (&c, &v))| ImportanceScore {
            pixel,
            score: match metric {
                Metric::Abs => c.abs(),
                Metric::Co => c,
                Metric::Coi => c * v,
            },
            metric,
        })
        .collect())
}

pub fn rank(label: usize, metric: Metric, mut scores: Vec<ImportanceScore>) -> Ranking {
    scores.sort_by(|a, b| b.score.total_cmp(&a.score).then(a.pixel.cmp(&b.pixel)));
    Ranking {
        label,
        metric,
        entries: scores,
    }
}

/// Number of pixels kept by a `pct` threshold over `total` pixels (floored).
pub fn threshold_count(total: usize, pct: f64) -> Result<usize> {
    if !(pct > 0.0 && pct <= 100.0) {
        return Err(Error::InvalidPercent(pct));
    }
    Ok((total as f64 * pct / 100.0).floor() as usize)
}

/// The first `floor(m·pct/100)` pixels of the ranking, in rank order.
pub fn top_percent(ranking: &Ranking, pct: f64) -> Result<Vec<usize>> {
    let k = threshold_count(ranking.entries.len(), pct)?;
    Ok(ranking.pixels().take(k).collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Highlight {
    Green,
    Red,
}

impl Highlight {
    fn rgb(self) -> (u8, u8, u8) {
        match self {
            Highlight::Green => (0, 255, 0),
            Highlight::Red => (255, 0, 0),
        }
    }
}

/// Plain P3 PPM of a 28×28 image: grayscale `round(x·255)`, highlighted
/// pixels painted in the given color.
pub fn overlay_ppm(x: &[f64], highlight: &[usize], color: Highlight) -> Result<String> {
    if x.len() != IMAGE_SIDE * IMAGE_SIDE {
        return Err(Error::NonSquare(x.len()));
    }
    let mut marked = vec![false; x.len()];
    for &p in highlight {
        *marked.get_mut(p).ok_or(Error::IndexOutOfRange {
            index: p,
            limit: x.len(),
        })? = true;
    }
    let (r, g, b) = color.rgb();
    let mut out = String::with_capacity(x.len() * 12 + 16);
    let _ = writeln!(out, "P3\n{IMAGE_SIDE} {IMAGE_SIDE}\n255");
    for (v, m) in x.iter().zip(&marked) {
        if *m {
            let _ = writeln!(out, "{r} {g} {b}");
        } else {
            let gray = (v * 255.0).round().clamp(0.0, 255.0) as u8;
            let _ = writeln!(out, "{gray} {gray} {gray}");
        }
    }
    Ok(out)
}

pub fn render_overlay(
    x: &[f64],
    highlight: &[usize],
    color: Highlight,
    path: impl AsRef<Path>,
) -> Result<()> {
    let text = overlay_ppm(x, highlight, color)?;
    let path = path.as_ref();
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn matrix(row: Vec<f64>) -> CoefficientMatrix {
        let n = row.len();
        CoefficientMatrix {
            rows: vec![vec![0.0; n], row],
            constants: vec![0.0, 0.0],
        }
    }

    #[test]
    fn metric_definitions() {
        let mut row = vec![0.0; 784];
        row[742] = 1.137;
        row[10] = -0.5;
        row[11] = 2.0;
        let mut x = vec![0.5; 784];
        x[11] = 0.0;
        let c = matrix(row);
        let co = score_pixels(&c, &x, 1, Metric::Co).unwrap();
        assert_eq!(co[742].score, 1.137);
        let abs = score_pixels(&c, &x, 1, Metric::Abs).unwrap();
        assert_eq!(abs[10].score, 0.5);
        let coi = score_pixels(&c, &x, 1, Metric::Coi).unwrap();
        assert_eq!(coi[11].score, 0.0);
        assert_eq!(coi[10].score, -0.25);
    }

    #[test]
    fn score_rejects_bad_label() {
        let c = matrix(vec![1.0, 2.0]);
        assert!(matches!(
            score_pixels(&c, &[0.0, 0.0], 2, Metric::Co),
            Err(Error::IndexOutOfRange { index: 2, limit: 2 })
        ));
    }

    #[test]
    fn rank_descending_with_index_tiebreak() {
        let s = |pixel, score| ImportanceScore {
            pixel,
            score,
            metric: Metric::Co,
        };
        let r = rank(0, Metric::Co, vec![s(0, 1.0), s(1, 2.0)]);
        assert_eq!(r.pixels().collect::<Vec<_>>(), vec![1, 0]);
        let r = rank(0, Metric::Co, (0..5).rev().map(|p| s(p, 0.3)).collect());
        assert_eq!(r.pixels().collect::<Vec<_>>(), vec![0, 1, 2, 3, 4]);
        let r = rank(
            0,
            Metric::Co,
            vec![s(0, -1.0), s(1, 0.0), s(2, -3.0), s(3, 0.5)],
        );
        assert_eq!(r.pixels().collect::<Vec<_>>(), vec![3, 1, 0, 2]);
    }

    #[test]
    fn threshold_counts_for_mnist() {
        assert_eq!(threshold_count(784, 5.0).unwrap(), 39);
        assert_eq!(threshold_count(784, 10.0).unwrap(), 78);
        assert_eq!(threshold_count(784, 30.0).unwrap(), 235);
        assert_eq!(threshold_count(784, 100.0).unwrap(), 784);
        assert!(matches!(
            threshold_count(784, 0.0),
            Err(Error::InvalidPercent(_))
        ));
        assert!(matches!(
            threshold_count(784, 100.5),
            Err(Error::InvalidPercent(_))
        ));
        assert!(threshold_count(784, f64::NAN).is_err());
    }

    #[test]
    fn ppm_without_highlight_is_grayscale() {
        let mut x = vec![0.0; 784];
        x[1] = 1.0;
        x[2] = 0.2;
        let text = overlay_ppm(&x, &[], Highlight::Green).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(&lines[..3], &["P3", "28 28", "255"]);
        assert_eq!(lines.len(), 3 + 784);
        assert_eq!(lines[3], "0 0 0");
        assert_eq!(lines[4], "255 255 255");
        assert_eq!(lines[5], "51 51 51");
    }

    #[test]
    fn ppm_highlight_colors() {
        let x = vec![0.5; 784];
        let green = overlay_ppm(&x, &[0], Highlight::Green).unwrap();
        assert_eq!(green.lines().nth(3), Some("0 255 0"));
        let red = overlay_ppm(&x, &[783], Highlight::Red).unwrap();
        assert_eq!(red.lines().last(), Some("255 0 0"));
    }

    #[test]
    fn ppm_rejects_non_square() {
        assert!(matches!(
            overlay_ppm(&[0.0; 10], &[], Highlight::Red),
            Err(Error::NonSquare(10))
        ));
    }

    #[test]
    fn metric_parse() {
        assert_eq!("coi".parse::<Metric>().unwrap(), Metric::Coi);
        assert!("".parse::<Metric>().is_err());
    }
}
