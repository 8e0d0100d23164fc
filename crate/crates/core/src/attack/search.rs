//! Search drivers for 1-pixel and 2-pixel attacks.
//!
//! Candidate pixel sets are attacked in parallel on the current rayon pool;
//! results are always collected in enumeration order so attempt counts and
//! reports do not depend on scheduling.

use std::collections::BTreeSet;

use rayon::prelude::*;

use super::{AttackResult, Attacker};
use crate::attribution::{rank, score_pixels, top_percent, Metric, Ranking};
use crate::error::{Error, Result};
use crate::symexec::concolic_coefficients;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Strategy {
    /// Every pixel, in index order from the top-left corner.
    Exhaustive,
    /// The top `pct` percent of the ranking under `metric`, in rank order.
    Guided { metric: Metric, pct: f64 },
}

impl Strategy {
    pub fn name(&self) -> String {
        match self {
            Strategy::Exhaustive => "exhaustive".into(),
            Strategy::Guided { metric, pct } => format!("guided-{metric}-top{pct}"),
        }
    }
}

/// Importance ranking for the predicted label of the attacker's image.
pub fn ranking_for(attacker: &Attacker<'_>, metric: Metric) -> Result<Ranking> {
    let coeffs = concolic_coefficients(attacker.network(), attacker.image())?;
    let label = attacker.label();
    let scores = score_pixels(&coeffs, attacker.image(), label, metric)?;
    Ok(rank(label, metric, scores))
}

#[derive(Debug, Clone, PartialEq)]
pub struct OnePixelSearch {
    /// Pixels tried, in the order they were tried.
    pub candidates: Vec<usize>,
    /// Every verified attack, grouped by candidate in candidate order.
    pub results: Vec<AttackResult>,
    /// Candidates tried up to and including the first attackable one, or
    /// all candidates if none is attackable.
    pub attempts: usize,
}

impl OnePixelSearch {
    /// Distinct attackable pixels in candidate order.
    pub fn attackable_pixels(&self) -> Vec<usize> {
        let mut seen = BTreeSet::new();
        self.results
            .iter()
            .map(|r| r.pixels[0])
            .filter(|p| seen.insert(*p))
            .collect()
    }

    pub fn labels(&self) -> BTreeSet<usize> {
        self.results.iter().map(|r| r.attack_label).collect()
    }

    /// Smallest attackable pixel index.
    pub fn first_pixel(&self) -> Option<usize> {
        self.results.iter().map(|r| r.pixels[0]).min()
    }
}

pub fn search_1pixel(attacker: &Attacker<'_>, strategy: Strategy) -> Result<OnePixelSearch> {
    let candidates: Vec<usize> = match strategy {
        Strategy::Exhaustive => (0..attacker.network().input_dim()).collect(),
        Strategy::Guided { metric, pct } => top_percent(&ranking_for(attacker, metric)?, pct)?,
    };
    let per_candidate: Vec<Vec<AttackResult>> = candidates
        .par_iter()
        .map(|&p| attacker.attack_pixels(&[p]))
        .collect::<Result<_>>()?;
    let attempts = per_candidate
        .iter()
        .position(|r| !r.is_empty())
        .map_or(candidates.len(), |i| i + 1);
    Ok(OnePixelSearch {
        candidates,
        results: per_candidate.into_iter().flatten().collect(),
        attempts,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct TwoPixelSearch {
    /// Top-ranked pixels the pairs are drawn from, in rank order.
    pub candidates: Vec<usize>,
    /// Pairs in enumeration order, as `(higher-ranked, lower-ranked)`.
    pub pairs: Vec<(usize, usize)>,
    pub results: Vec<AttackResult>,
    pub pairs_tried: usize,
    /// Index into `pairs` of the first attackable pair.
    pub first_hit: Option<usize>,
    /// Candidates that are attackable on their own.
    pub one_pixel_attackable: BTreeSet<usize>,
}

impl TwoPixelSearch {
    /// Distinct attacked pairs (pixel indices ascending), enumeration order.
    pub fn attacked_pairs(&self) -> Vec<(usize, usize)> {
        let mut seen = BTreeSet::new();
        self.results
            .iter()
            .map(|r| (r.pixels[0], r.pixels[1]))
            .filter(|p| seen.insert(*p))
            .collect()
    }

    /// Attacked pairs in which neither pixel is 1-pixel attackable.
    pub fn new_pairs(&self) -> Vec<(usize, usize)> {
        self.attacked_pairs()
            .into_iter()
            .filter(|(a, b)| {
                !self.one_pixel_attackable.contains(a) && !self.one_pixel_attackable.contains(b)
            })
            .collect()
    }

    pub fn labels(&self) -> BTreeSet<usize> {
        self.results.iter().map(|r| r.attack_label).collect()
    }

    /// Union of all pixels taking part in some 2-pixel attack.
    pub fn attacked_pixels(&self) -> BTreeSet<usize> {
        self.results.iter().flat_map(|r| r.pixels.clone()).collect()
    }

    /// How many top-ranked pixels must be considered before the first
    /// attackable pair appears.
    pub fn pixels_to_first_hit(&self) -> Option<usize> {
        let (_, b) = self.pairs[self.first_hit?];
        self.candidates.iter().position(|&c| c == b).map(|i| i + 1)
    }
}

/// All unordered pairs of `candidates`, ordered by the rank of their
/// lower-ranked member, then by the rank of the other.
pub fn rank_ordered_pairs(candidates: &[usize]) -> Vec<(usize, usize)> {
    let mut pairs = Vec::with_capacity(candidates.len() * candidates.len().saturating_sub(1) / 2);
    for hi in 1..candidates.len() {
        for lo in 0..hi {
            pairs.push((candidates[lo], candidates[hi]));
        }
    }
    pairs
}

pub fn search_2pixel(attacker: &Attacker<'_>, metric: Metric, pct: f64) -> Result<TwoPixelSearch> {
    let candidates = top_percent(&ranking_for(attacker, metric)?, pct)?;
    if candidates.len() < 2 {
        return Err(Error::Usage(format!(
            "top {pct}% keeps {} pixel(s); at least 2 are needed for pairs",
            candidates.len()
        )));
    }
    let singles: Vec<bool> = candidates
        .par_iter()
        .map(|&p| attacker.attack_pixels(&[p]).map(|r| !r.is_empty()))
        .collect::<Result<_>>()?;
    let one_pixel_attackable = candidates
        .iter()
        .zip(&singles)
        .filter(|(_, hit)| **hit)
        .map(|(p, _)| *p)
        .collect();

    let pairs = rank_ordered_pairs(&candidates);
    let per_pair: Vec<Vec<AttackResult>> = pairs
        .par_iter()
        .map(|&(a, b)| attacker.attack_pixels(&[a, b]))
        .collect::<Result<_>>()?;
    let first_hit = per_pair.iter().position(|r| !r.is_empty());
    Ok(TwoPixelSearch {
        candidates,
        pairs_tried: pairs.len(),
        pairs,
        results: per_pair.into_iter().flatten().collect(),
        first_hit,
        one_pixel_attackable,
    })
}
