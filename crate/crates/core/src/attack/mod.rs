//! Few-pixel attacks that keep the original activation pattern.
//!
//! With the ReLU branches pinned to those of the original image, the path
//! condition, the target-label constraints and the pixel range are all affine
//! in the symbolic pixels. [`assemble`] builds that system, [`solve`] finds its
//! deepest interior point (or proves it empty) and [`verify`] re-runs the
//! network on the modified image.

mod search;
mod solver;

pub use search::{
    rank_ordered_pairs, ranking_for, search_1pixel, search_2pixel, OnePixelSearch, Strategy,
    TwoPixelSearch,
};
pub use solver::solve;

use crate::error::{Error, Result};
use crate::network::{ForwardResult, Network};
use crate::symexec::{
    output_affine_forms_along, AffineForm, LinearInequality, PathCondition, Relation,
};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AttackConfig {
    /// Amount by which strict inequalities must hold.
    pub margin: f64,
    pub lo: f64,
    pub hi: f64,
}

impl Default for AttackConfig {
    fn default() -> Self {
        Self {
            margin: 1e-6,
            lo: 0.0,
            hi: 1.0,
        }
    }
}

impl AttackConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.lo.is_finite() && self.hi.is_finite() && self.lo < self.hi) {
            return Err(Error::InvalidRange {
                lo: self.lo,
                hi: self.hi,
            });
        }
        if !(self.margin.is_finite() && self.margin >= 0.0) {
            return Err(Error::Usage(format!(
                "margin must be >= 0, got {}",
                self.margin
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ClauseKind {
    /// Keeps one hidden neuron on its original branch.
    Path,
    /// Makes the target logit beat one other logit.
    Attack,
    /// Pixel range bound.
    Range,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Clause {
    pub kind: ClauseKind,
    pub inequality: LinearInequality,
}

/// Conjunction of path, attack and range clauses over the symbolic pixels.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearConstraintSystem {
    /// Symbolic pixel indices; clause coefficients align with this order.
    pub variables: Vec<usize>,
    pub clauses: Vec<Clause>,
    pub lo: f64,
    pub hi: f64,
    pub margin: f64,
}

impl LinearConstraintSystem {
    pub fn count(&self, kind: ClauseKind) -> usize {
        self.clauses.iter().filter(|c| c.kind == kind).count()
    }

    /// Every clause holds at `point` (strict ones by at least the margin).
    pub fn holds_at(&self, point: &[f64]) -> bool {
        self.clauses
            .iter()
            .all(|c| c.inequality.holds(point, self.margin))
    }

    /// Smallest raw slack over all clauses at `point`.
    pub fn min_slack(&self, point: &[f64]) -> f64 {
        self.clauses
            .iter()
            .map(|c| c.inequality.slack(point, self.margin))
            .fold(f64::INFINITY, f64::min)
    }
}

/// A satisfying assignment to the symbolic pixels.
#[derive(Debug, Clone, PartialEq)]
pub struct Witness {
    pub assignment: Vec<(usize, f64)>,
    /// Minimum over non-constant clauses of the margin-adjusted slack divided
    /// by the clause's coefficient norm.
    pub slack: f64,
}

impl Witness {
    pub fn values(&self) -> Vec<f64> {
        self.assignment.iter().map(|(_, v)| *v).collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AttackResult {
    pub pixels: Vec<usize>,
    pub original_values: Vec<f64>,
    pub attacked_values: Vec<f64>,
    pub original_label: usize,
    pub attack_label: usize,
    pub verified: bool,
}

/// PC ∧ AC ∧ RA for moving the prediction from `label` to `target`.
pub fn assemble(
    pc: &PathCondition,
    forms: &[AffineForm],
    label: usize,
    target: usize,
    config: &AttackConfig,
) -> Result<LinearConstraintSystem> {
    if label == target {
        return Err(Error::SameLabel(target));
    }
    if target >= forms.len() {
        return Err(Error::IndexOutOfRange {
            index: target,
            limit: forms.len(),
        });
    }
    config.validate()?;
    let t = pc.variables.len();
    let mut clauses: Vec<Clause> = pc
        .clauses
        .iter()
        .map(|inequality| Clause {
            kind: ClauseKind::Path,
            inequality: inequality.clone(),
        })
        .collect();
    let goal = &forms[target];
    for (j, other) in forms.iter().enumerate() {
        if j != target {
            clauses.push(Clause {
                kind: ClauseKind::Attack,
                inequality: LinearInequality::new(goal.sub(other), Relation::Gt),
            });
        }
    }
    for k in 0..t {
        let mut lower = AffineForm::constant(config.lo, t);
        lower.coeffs[k] = -1.0;
        let mut upper = AffineForm::constant(-config.hi, t);
        upper.coeffs[k] = 1.0;
        for form in [lower, upper] {
            clauses.push(Clause {
                kind: ClauseKind::Range,
                inequality: LinearInequality::new(form, Relation::Le),
            });
        }
    }
    Ok(LinearConstraintSystem {
        variables: pc.variables.clone(),
        clauses,
        lo: config.lo,
        hi: config.hi,
        margin: config.margin,
    })
}

/// Writes the witness into `x` and checks the new prediction is `target`
/// with exactly the original activation pattern.
pub fn verify(net: &Network, x: &[f64], witness: &Witness, target: usize) -> bool {
    let Ok(original) = net.forward(x) else {
        return false;
    };
    verify_against(net, x, &original, witness, target)
}

fn verify_against(
    net: &Network,
    x: &[f64],
    original: &ForwardResult,
    witness: &Witness,
    target: usize,
) -> bool {
    let mut modified = x.to_vec();
    for &(pixel, value) in &witness.assignment {
        match modified.get_mut(pixel) {
            Some(slot) => *slot = value,
            None => return false,
        }
    }
    match net.forward(&modified) {
        Ok(res) => res.label == target && res.pattern == original.pattern,
        Err(_) => false,
    }
}

/// Concolic attack driver bound to one network and one concrete image.
#[derive(Debug, Clone)]
pub struct Attacker<'a> {
    net: &'a Network,
    x: &'a [f64],
    original: ForwardResult,
    config: AttackConfig,
}

impl<'a> Attacker<'a> {
    pub fn new(net: &'a Network, x: &'a [f64], config: AttackConfig) -> Result<Self> {
        config.validate()?;
        let original = net.forward(x)?;
        Ok(Self {
            net,
            x,
            original,
            config,
        })
    }

    pub fn network(&self) -> &Network {
        self.net
    }

    pub fn image(&self) -> &[f64] {
        self.x
    }

    pub fn original(&self) -> &ForwardResult {
        &self.original
    }

    pub fn label(&self) -> usize {
        self.original.label
    }

    pub fn config(&self) -> &AttackConfig {
        &self.config
    }

    /// Tries every target label in ascending order for the given pixel set
    /// and returns the attacks that survive concrete re-execution.
    pub fn attack_pixels(&self, pixels: &[usize]) -> Result<Vec<AttackResult>> {
        let (forms, pc) =
            output_affine_forms_along(self.net, self.x, pixels, &self.original.pattern)?;
        let label = self.label();
        let mut results = Vec::new();
        for target in (0..forms.len()).filter(|&t| t != label) {
            let system = assemble(&pc, &forms, label, target, &self.config)?;
            let Some(witness) = solve(&system) else {
                continue;
            };
            if verify_against(self.net, self.x, &self.original, &witness, target) {
                results.push(AttackResult {
                    pixels: system.variables.clone(),
                    original_values: system.variables.iter().map(|&p| self.x[p]).collect(),
                    attacked_values: witness.values(),
                    original_label: label,
                    attack_label: target,
                    verified: true,
                });
            }
        }
        Ok(results)
    }
}

/// One-shot form of [`Attacker::attack_pixels`] with the default configuration.
pub fn attack_pixels(net: &Network, x: &[f64], pixels: &[usize]) -> Result<Vec<AttackResult>> {
    Attacker::new(net, x, AttackConfig::default())?.attack_pixels(pixels)
}
