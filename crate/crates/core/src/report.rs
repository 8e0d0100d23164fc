//! Text reports: per-image attack listings with a line-oriented
//! machine-readable form, and the summary tables of a pipeline run.

use std::collections::BTreeSet;
use std::fmt::Write as _;

use crate::attack::{AttackResult, OnePixelSearch, TwoPixelSearch};
use crate::error::{Error, Result};

pub const NO_ATTACKS: &str = "NO ATTACKS FOUND";

/// `ATTACK t=<t> pixels=<i[,j]> values=<v[,w]> from=<l> to=<l'>`
pub fn attack_line(r: &AttackResult) -> String {
    format!(
        "ATTACK t={} pixels={} values={} from={} to={}",
        r.pixels.len(),
        join(&r.pixels),
        join(&r.attacked_values),
        r.original_label,
        r.attack_label
    )
}

#[derive(Debug, Clone, PartialEq)]
pub struct AttackLine {
    pub t: usize,
    pub pixels: Vec<usize>,
    pub values: Vec<f64>,
    pub from: usize,
    pub to: usize,
}

pub fn parse_attack_line(line: &str) -> Result<AttackLine> {
    let bad = |why: &str| Error::Parse(format!("{why}: '{line}'"));
    let mut fields = line.split_whitespace();
    if fields.next() != Some("ATTACK") {
        return Err(bad("missing ATTACK keyword"));
    }
    let mut take = |key: &str| -> Result<&str> {
        fields
            .next()
            .and_then(|f| f.strip_prefix(key))
            .and_then(|f| f.strip_prefix('='))
            .ok_or_else(|| bad(&format!("expected {key}=")))
    };
    let t: usize = take("t")?.parse().map_err(|_| bad("bad t"))?;
    let pixels = take("pixels")?
        .split(',')
        .map(str::parse)
        .collect::<std::result::Result<Vec<usize>, _>>()
        .map_err(|_| bad("bad pixel list"))?;
    let values = take("values")?
        .split(',')
        .map(str::parse)
        .collect::<std::result::Result<Vec<f64>, _>>()
        .map_err(|_| bad("bad value list"))?;
    let from = take("from")?.parse().map_err(|_| bad("bad from"))?;
    let to = take("to")?.parse().map_err(|_| bad("bad to"))?;
    if pixels.len() != t || values.len() != t {
        return Err(bad("list length differs from t"));
    }
    Ok(AttackLine {
        t,
        pixels,
        values,
        from,
        to,
    })
}

/// All `ATTACK` lines of a report.
pub fn parse_report(text: &str) -> Result<Vec<AttackLine>> {
    text.lines()
        .filter(|l| l.starts_with("ATTACK "))
        .map(parse_attack_line)
        .collect()
}

fn join<T: std::fmt::Display>(items: &[T]) -> String {
    items
        .iter()
        .map(ToString::to_string)
        .collect::<Vec<_>>()
        .join(",")
}

pub fn label_set(labels: &BTreeSet<usize>) -> String {
    if labels.is_empty() {
        "-".into()
    } else {
        labels
            .iter()
            .map(ToString::to_string)
            .collect::<Vec<_>>()
            .join(",")
    }
}

fn table_rows(out: &mut String, results: &[AttackResult]) {
    let _ = writeln!(
        out,
        "{:<12} {:<22} {:<22} {:>2} {:>3}",
        "pixel(s)", "original", "attacked", "l", "l'"
    );
    for r in results {
        let fmt_vals = |v: &[f64]| {
            v.iter()
                .map(|x| format!("{x:.6}"))
                .collect::<Vec<_>>()
                .join(",")
        };
        let _ = writeln!(
            out,
            "{:<12} {:<22} {:<22} {:>2} {:>3}",
            join(&r.pixels),
            fmt_vals(&r.original_values),
            fmt_vals(&r.attacked_values),
            r.original_label,
            r.attack_label
        );
    }
}

fn machine_lines(out: &mut String, results: &[AttackResult]) {
    if results.is_empty() {
        let _ = writeln!(out, "{NO_ATTACKS}");
    }
    for r in results {
        let _ = writeln!(out, "{}", attack_line(r));
    }
}

pub fn one_pixel_report(
    image: &str,
    label: usize,
    strategy: &str,
    search: &OnePixelSearch,
) -> String {
    let mut out = String::new();
    let _ = writeln!(
        out,
        "# 1-pixel attacks: image={image} label={label} strategy={strategy} candidates={}",
        search.candidates.len()
    );
    table_rows(&mut out, &search.results);
    machine_lines(&mut out, &search.results);
    let first = search
        .first_pixel()
        .map_or_else(|| "-".to_string(), |p| p.to_string());
    let _ = writeln!(
        out,
        "SUMMARY #ap={} alabel={} 1stap={} attempts={}",
        search.attackable_pixels().len(),
        label_set(&search.labels()),
        first,
        search.attempts
    );
    out
}

pub fn two_pixel_report(
    image: &str,
    label: usize,
    selection: &str,
    search: &TwoPixelSearch,
) -> String {
    let mut out = String::new();
    let _ = writeln!(
        out,
        "# 2-pixel attacks: image={image} label={label} candidates={selection} ({} pixels) pairs={}",
        search.candidates.len(),
        search.pairs_tried
    );
    table_rows(&mut out, &search.results);
    machine_lines(&mut out, &search.results);
    let first = search
        .pixels_to_first_hit()
        .map_or_else(|| "-".to_string(), |k| k.to_string());
    let _ = writeln!(
        out,
        "SUMMARY #a2p={} #a2p-new={} alabel={} pairs-tried={} top-pixels-to-first={}",
        search.attacked_pairs().len(),
        search.new_pairs().len(),
        label_set(&search.labels()),
        search.pairs_tried,
        first
    );
    out
}

/// Fixed-width text table with a header row.
pub fn format_table(title: &str, header: &[String], rows: &[Vec<String>]) -> String {
    let cols = header.len();
    let mut widths: Vec<usize> = header.iter().map(String::len).collect();
    for row in rows {
        for (w, cell) in widths.iter_mut().zip(row) {
            *w = (*w).max(cell.len());
        }
    }
    let line = |cells: &[String]| {
        cells
            .iter()
            .zip(&widths)
            .map(|(c, w)| format!("{c:<w$}"))
            .collect::<Vec<_>>()
            .join(" | ")
            .trim_end()
            .to_string()
    };
    let mut out = String::new();
    let _ = writeln!(out, "{title}");
    let _ = writeln!(out, "{}", line(header));
    let _ = writeln!(
        out,
        "{}",
        widths
            .iter()
            .take(cols)
            .map(|w| "-".repeat(*w))
            .collect::<Vec<_>>()
            .join("-|-")
    );
    for row in rows {
        let _ = writeln!(out, "{}", line(row));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn attack_line_round_trip() {
        let r = AttackResult {
            pixels: vec![12, 400],
            original_values: vec![0.0, 0.5],
            attacked_values: vec![0.123456789012345, 1.0],
            original_label: 3,
            attack_label: 8,
            verified: true,
        };
        let line = attack_line(&r);
        assert_eq!(
            line,
            "ATTACK t=2 pixels=12,400 values=0.123456789012345,1 from=3 to=8"
        );
        let parsed = parse_attack_line(&line).unwrap();
        assert_eq!(parsed.pixels, r.pixels);
        assert_eq!(parsed.values, r.attacked_values);
        assert_eq!((parsed.from, parsed.to, parsed.t), (3, 8, 2));
    }

    #[test]
    fn malformed_lines() {
        for bad in [
            "ATTACK t=1 pixels=3 values=0.5 from=1",
            "ATTACK t=2 pixels=3 values=0.5 from=1 to=2",
            "ATTACKS t=1 pixels=3 values=0.5 from=1 to=2",
            "ATTACK t=1 pixels=x values=0.5 from=1 to=2",
        ] {
            assert!(parse_attack_line(bad).is_err(), "{bad}");
        }
    }

    #[test]
    fn empty_search_report_has_marker() {
        let search = OnePixelSearch {
            candidates: (0..784).collect(),
            results: vec![],
            attempts: 784,
        };
        let text = one_pixel_report("digit:1", 1, "exhaustive", &search);
        assert!(text.contains(NO_ATTACKS));
        assert!(text.contains("SUMMARY #ap=0 alabel=- 1stap=- attempts=784"));
        assert!(parse_report(&text).unwrap().is_empty());
    }

    #[test]
    fn table_layout() {
        let t = format_table(
            "T",
            &["a".into(), "bb".into()],
            &[vec!["123".into(), "4".into()]],
        );
        assert_eq!(t, "T\na   | bb\n----|---\n123 | 4\n");
    }
}
