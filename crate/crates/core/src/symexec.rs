//! Concolic execution over a network's concrete activation path.
//!
//! Running an input through the network fixes every ReLU branch. Along that
//! path each neuron is an affine function of the input pixels, so the engine
//! carries, next to the concrete value, a coefficient vector and a constant
//! term for every neuron. Neurons whose concrete pre-activation is `<= 0`
//! reset both to zero.

use crate::error::{Error, Result};
use crate::network::{ActivationPattern, Network};

/// `constant + Σ_k coeffs[k] · X[k]`, where `X[k]` is the `k`-th variable of
/// the symbolic pixel set the form was built over.
#[derive(Debug, Clone, PartialEq)]
pub struct AffineForm {
    pub constant: f64,
    pub coeffs: Vec<f64>,
}

impl AffineForm {
    pub fn zero(vars: usize) -> Self {
        Self {
            constant: 0.0,
            coeffs: vec![0.0; vars],
        }
    }

    pub fn constant(value: f64, vars: usize) -> Self {
        Self {
            constant: value,
            coeffs: vec![0.0; vars],
        }
    }

    pub fn eval(&self, point: &[f64]) -> f64 {
        self.constant
            + self
                .coeffs
                .iter()
                .zip(point)
                .map(|(c, v)| c * v)
                .sum::<f64>()
    }

    /// True iff any coefficient is nonzero. Exact comparison: zeros come from
    /// ReLU gating and missing edges, never from cancellation thresholds.
    pub fn is_symbolic(&self) -> bool {
        self.coeffs.iter().any(|&c| c != 0.0)
    }

    pub fn sub(&self, other: &AffineForm) -> AffineForm {
        AffineForm {
            constant: self.constant - other.constant,
            coeffs: self
                .coeffs
                .iter()
                .zip(&other.coeffs)
                .map(|(a, b)| a - b)
                .collect(),
        }
    }

    pub fn neg(&self) -> AffineForm {
        AffineForm {
            constant: -self.constant,
            coeffs: self.coeffs.iter().map(|c| -c).collect(),
        }
    }

    /// Euclidean norm of the coefficient vector.
    pub fn norm(&self) -> f64 {
        self.coeffs.iter().map(|c| c * c).sum::<f64>().sqrt()
    }

    fn accumulate(&mut self, weight: f64, src: &AffineForm) {
        self.constant += weight * src.constant;
        for (dst, c) in self.coeffs.iter_mut().zip(&src.coeffs) {
            *dst += weight * c;
        }
    }
}

/// Output-layer coefficients of every input pixel along one activation path.
#[derive(Debug, Clone, PartialEq)]
pub struct CoefficientMatrix {
    /// `rows[i][j]`: coefficient of pixel `j` in logit `i`.
    pub rows: Vec<Vec<f64>>,
    /// Bias contributions accumulated along the active path, per logit.
    pub constants: Vec<f64>,
}

impl CoefficientMatrix {
    pub fn output_dim(&self) -> usize {
        self.rows.len()
    }

    pub fn input_dim(&self) -> usize {
        self.rows.first().map_or(0, Vec::len)
    }

    /// `Σ_j C[i][j]·x[j] + constants[i]` for every logit.
    pub fn reconstruct(&self, x: &[f64]) -> Vec<f64> {
        self.rows
            .iter()
            .zip(&self.constants)
            .map(|(row, c)| row.iter().zip(x).map(|(a, v)| a * v).sum::<f64>() + c)
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Relation {
    /// `form > 0`
    Gt,
    /// `form <= 0`
    Le,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LinearInequality {
    pub form: AffineForm,
    pub relation: Relation,
}

impl LinearInequality {
    pub fn new(form: AffineForm, relation: Relation) -> Self {
        Self { form, relation }
    }

    pub fn is_strict(&self) -> bool {
        self.relation == Relation::Gt
    }

    /// The form oriented so that the clause reads `oriented >= 0`
    /// (strict clauses additionally need it above the margin).
    pub fn oriented(&self) -> AffineForm {
        match self.relation {
            Relation::Gt => self.form.clone(),
            Relation::Le => self.form.neg(),
        }
    }

    /// Signed distance of the oriented form from its threshold at `point`.
    pub fn slack(&self, point: &[f64], margin: f64) -> f64 {
        let v = self.form.eval(point);
        match self.relation {
            Relation::Gt => v - margin,
            Relation::Le => -v,
        }
    }

    /// `margin` only applies to strict clauses; `> 0` is tested exactly when it is zero.
    pub fn holds(&self, point: &[f64], margin: f64) -> bool {
        let v = self.form.eval(point);
        match self.relation {
            Relation::Gt if margin > 0.0 => v >= margin,
            Relation::Gt => v > 0.0,
            Relation::Le => v <= 0.0,
        }
    }
}

/// ReLU branch constraints over a set of symbolic pixels.
#[derive(Debug, Clone, PartialEq)]
pub struct PathCondition {
    /// Symbolic pixel indices, ascending. Clause coefficients align with it.
    pub variables: Vec<usize>,
    /// One clause per hidden neuron whose form has a nonzero coefficient.
    pub clauses: Vec<LinearInequality>,
    /// Hidden-neuron index (layer-major) that produced each clause.
    pub neurons: Vec<usize>,
    pub source_pattern: ActivationPattern,
}

impl PathCondition {
    pub fn holds_at(&self, point: &[f64]) -> bool {
        self.clauses.iter().all(|c| c.holds(point, 0.0))
    }
}

/// Output coefficients for every pixel of `x` along its activation path,
/// plus the accumulated bias terms.
pub fn concolic_coefficients(net: &Network, x: &[f64]) -> Result<CoefficientMatrix> {
    let concrete = net.forward(x)?;
    let m = net.input_dim();
    let layers = net.layers();

    // The input layer's coefficient arrays form the identity, so the first
    // layer's neuron `i` starts from weight row `i` and bias `i`.
    let first = &layers[0];
    let mut coef: Vec<Vec<f64>> = first.weights.clone();
    let mut constants: Vec<f64> = first.biases.clone();
    if layers.len() > 1 {
        gate(&mut coef, &mut constants, &concrete.pre_activations[0]);
    }

    for (l, layer) in layers.iter().enumerate().skip(1) {
        let mut next = Vec::with_capacity(layer.output_dim());
        let mut next_const = Vec::with_capacity(layer.output_dim());
        for (row, bias) in layer.weights.iter().zip(&layer.biases) {
            let mut acc = vec![0.0; m];
            let mut c = *bias;
            for ((w, src), src_const) in row.iter().zip(&coef).zip(&constants) {
                if *w == 0.0 {
                    continue;
                }
                for (a, s) in acc.iter_mut().zip(src) {
                    *a += w * s;
                }
                c += w * src_const;
            }
            next.push(acc);
            next_const.push(c);
        }
        if l + 1 < layers.len() {
            gate(&mut next, &mut next_const, &concrete.pre_activations[l]);
        }
        coef = next;
        constants = next_const;
    }

    Ok(CoefficientMatrix {
        rows: coef,
        constants,
    })
}

fn gate(coef: &mut [Vec<f64>], constants: &mut [f64], pre: &[f64]) {
    for ((row, c), &v) in coef.iter_mut().zip(constants.iter_mut()).zip(pre) {
        if v <= 0.0 {
            row.iter_mut().for_each(|a| *a = 0.0);
            *c = 0.0;
        }
    }
}

/// Validates and canonicalizes a symbolic pixel set (sorted, deduplicated).
pub fn symbolic_set(pixels: &[usize], input_dim: usize) -> Result<Vec<usize>> {
    if pixels.is_empty() {
        return Err(Error::EmptySymbolicSet);
    }
    if let Some(&p) = pixels.iter().find(|&&p| p >= input_dim) {
        return Err(Error::IndexOutOfRange {
            index: p,
            limit: input_dim,
        });
    }
    let mut vars = pixels.to_vec();
    vars.sort_unstable();
    vars.dedup();
    Ok(vars)
}

/// Makes `symbolic` pixels symbolic and every other pixel concrete, follows
/// `x`'s activation path, and returns the output logits as affine forms over
/// the symbolic pixels together with the path condition.
pub fn output_affine_forms(
    net: &Network,
    x: &[f64],
    symbolic: &[usize],
) -> Result<(Vec<AffineForm>, PathCondition)> {
    let concrete = net.forward(x)?;
    output_affine_forms_along(net, x, symbolic, &concrete.pattern)
}

/// Same as [`output_affine_forms`] for a pattern already computed from `x`.
pub(crate) fn output_affine_forms_along(
    net: &Network,
    x: &[f64],
    symbolic: &[usize],
    pattern: &ActivationPattern,
) -> Result<(Vec<AffineForm>, PathCondition)> {
    if x.len() != net.input_dim() {
        return Err(Error::DimensionMismatch {
            expected: net.input_dim(),
            actual: x.len(),
        });
    }
    let vars = symbolic_set(symbolic, net.input_dim())?;
    let t = vars.len();
    let is_symbolic = {
        let mut mask = vec![false; x.len()];
        vars.iter().for_each(|&p| mask[p] = true);
        mask
    };

    let mut clauses = Vec::new();
    let mut neurons = Vec::new();
    let mut hidden_index = 0;
    let layers = net.layers();
    let mut current: Vec<AffineForm> = Vec::new();

    for (l, layer) in layers.iter().enumerate() {
        let mut pre_forms = Vec::with_capacity(layer.output_dim());
        for (row, bias) in layer.weights.iter().zip(&layer.biases) {
            let form = if l == 0 {
                let mut constant = *bias;
                for (j, (w, v)) in row.iter().zip(x).enumerate() {
                    if !is_symbolic[j] {
                        constant += w * v;
                    }
                }
                AffineForm {
                    constant,
                    coeffs: vars.iter().map(|&p| row[p]).collect(),
                }
            } else {
                let mut form = AffineForm::constant(*bias, t);
                for (w, src) in row.iter().zip(&current) {
                    form.accumulate(*w, src);
                }
                form
            };
            pre_forms.push(form);
        }

        if l + 1 == layers.len() {
            current = pre_forms;
            break;
        }

        current = pre_forms
            .into_iter()
            .map(|form| {
                let active = pattern.bits[hidden_index];
                if form.is_symbolic() {
                    let relation = if active { Relation::Gt } else { Relation::Le };
                    clauses.push(LinearInequality::new(form.clone(), relation));
                    neurons.push(hidden_index);
                }
                hidden_index += 1;
                if active {
                    form
                } else {
                    AffineForm::zero(t)
                }
            })
            .collect();
    }

    Ok((
        current,
        PathCondition {
            variables: vars,
            clauses,
            neurons,
            source_pattern: pattern.clone(),
        },
    ))
}

/// Returns `C[label][pixel]` together with the central finite difference of
/// logit `label` in the direction of `pixel`. Fails if either perturbed
/// input takes a different activation path.
pub fn coefficients_vs_gradient_check(
    net: &Network,
    x: &[f64],
    label: usize,
    pixel: usize,
    step: f64,
) -> Result<(f64, f64)> {
    if label >= net.output_dim() {
        return Err(Error::IndexOutOfRange {
            index: label,
            limit: net.output_dim(),
        });
    }
    if pixel >= net.input_dim() {
        return Err(Error::IndexOutOfRange {
            index: pixel,
            limit: net.input_dim(),
        });
    }
    let base = net.forward(x)?;
    let mut plus = x.to_vec();
    plus[pixel] += step;
    let mut minus = x.to_vec();
    minus[pixel] -= step;
    let up = net.forward(&plus)?;
    let down = net.forward(&minus)?;
    if up.pattern != base.pattern || down.pattern != base.pattern {
        return Err(Error::PatternFlip { pixel, step });
    }
    let coef = concolic_coefficients(net, x)?.rows[label][pixel];
    let fd = (up.logits[label] - down.logits[label]) / (2.0 * step);
    Ok((coef, fd))
}
