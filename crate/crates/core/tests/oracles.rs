//! Independent oracles for the forward pass, the program listing and the
//! concolic coefficients.

#![allow(clippy::needless_range_loop, clippy::type_complexity)]

mod common;

use std::collections::HashMap;

use common::*;
use relu_concolic::network::{Activation, Layer, Network};
use relu_concolic::symexec::{concolic_coefficients, output_affine_forms, Relation};

#[test]
fn coefficients_match_path_enumeration() {
    let mut rng = rng(11);
    for case in 0..40 {
        let net = random_net(&mut rng, 2 + case % 4);
        let x = random_input(&mut rng, net.input_dim());
        let (_, active) = reference_forward(&net, &x);
        let c = concolic_coefficients(&net, &x).unwrap();
        for i in 0..net.output_dim() {
            for j in 0..net.input_dim() {
                let want = path_sum(&net, &active, i, j);
                assert!(
                    rel_err(c.rows[i][j], want) <= 1e-9,
                    "case {case} C[{i}][{j}]"
                );
            }
            let want = path_constant(&net, &active, i);
            assert!(
                rel_err(c.constants[i], want) <= 1e-9,
                "case {case} const[{i}]"
            );
        }
    }
}

#[test]
fn single_linear_layer_coefficients_are_the_weights() {
    let w = vec![vec![0.3, -1.5], vec![2.0, 0.0], vec![-0.25, 0.75]];
    let b = vec![0.5, -1.0, 0.0];
    let net = Network::new(vec![Layer::new(w.clone(), b.clone(), Activation::Linear)]).unwrap();
    let c = concolic_coefficients(&net, &[0.4, 0.9]).unwrap();
    assert_eq!(c.rows, w);
    assert_eq!(c.constants, b);
}

#[test]
fn forward_matches_hand_evaluation() {
    let w1 = [[0.2, -0.7, 1.1], [-0.4, 0.9, 0.3], [0.6, 0.1, -0.8]];
    let b1 = [0.05, -0.3, 0.2];
    let w2 = [[1.3, -0.6, 0.4], [-0.9, 0.8, 1.7]];
    let b2 = [0.1, -0.15];
    let net = Network::new(vec![
        Layer::new(
            w1.iter().map(|r| r.to_vec()).collect(),
            b1.to_vec(),
            Activation::Relu,
        ),
        Layer::new(
            w2.iter().map(|r| r.to_vec()).collect(),
            b2.to_vec(),
            Activation::Linear,
        ),
    ])
    .unwrap();
    let x = [0.5, 0.25, 0.75];

    // Pre-activations written out term by term.
    let p0 = 0.2 * 0.5 + -0.7 * 0.25 + 1.1 * 0.75 + 0.05; // 0.8
    let p1 = -0.4 * 0.5 + 0.9 * 0.25 + 0.3 * 0.75 + -0.3; // -0.05
    let p2 = 0.6 * 0.5 + 0.1 * 0.25 + -0.8 * 0.75 + 0.2; // -0.075
    let s0 = if p0 > 0.0 { p0 } else { 0.0 };
    let s1 = if p1 > 0.0 { p1 } else { 0.0 };
    let s2 = if p2 > 0.0 { p2 } else { 0.0 };
    let y0 = 1.3 * s0 + -0.6 * s1 + 0.4 * s2 + 0.1;
    let y1 = -0.9 * s0 + 0.8 * s1 + 1.7 * s2 + -0.15;

    let r = net.forward(&x).unwrap();
    assert!((r.logits[0] - y0).abs() <= 1e-12);
    assert!((r.logits[1] - y1).abs() <= 1e-12);
    assert_eq!(r.pattern.bits, vec![true, false, false]);
    assert_eq!(r.label, if y1 > y0 { 1 } else { 0 });
}

/// Executes the listing produced by `emit_program`. Only the statement
/// shapes the emitter uses are understood; anything else panics.
struct Listing {
    weights: HashMap<String, Vec<Vec<f64>>>,
    biases: HashMap<String, Vec<f64>>,
    body: Vec<String>,
}

fn parse_floats(s: &str) -> Vec<f64> {
    s.split(',')
        .map(str::trim)
        .filter(|t| !t.is_empty())
        .map(|t| t.parse().unwrap_or_else(|_| panic!("bad float {t}")))
        .collect()
}

fn between<'a>(s: &'a str, open: &str, close: &str) -> &'a str {
    let a = s.find(open).unwrap() + open.len();
    let b = a + s[a..].find(close).unwrap();
    &s[a..b]
}

impl Listing {
    fn parse(text: &str) -> Self {
        let mut weights = HashMap::new();
        let mut biases = HashMap::new();
        let mut lines = text.lines().map(str::trim);
        let mut body = Vec::new();
        while let Some(line) = lines.next() {
            if line.starts_with("double w") && line.ends_with("= {") {
                let name = line["double ".len()..line.find('[').unwrap()].to_string();
                let mut rows = Vec::new();
                for row in lines.by_ref() {
                    if row == "};" {
                        break;
                    }
                    rows.push(parse_floats(between(row, "{", "}")));
                }
                weights.insert(name, rows);
            } else if line.starts_with("double b") {
                let name = line["double ".len()..line.find('[').unwrap()].to_string();
                biases.insert(name, parse_floats(between(line, "{", "}")));
            } else if line.starts_with("int classify") {
                body.extend(lines.by_ref().map(str::to_string));
                break;
            }
        }
        Self {
            weights,
            biases,
            body,
        }
    }

    fn run(&self, input: &[f64]) -> (Vec<f64>, usize, usize) {
        let mut arrays: HashMap<String, Vec<f64>> = HashMap::new();
        arrays.insert("s0".into(), input.to_vec());
        let mut val = 0.0;
        let mut last = String::new();
        let mut branches = 0;
        let mut label = None;
        let index_of = |s: &str| -> (String, usize) {
            let name = s[..s.find('[').unwrap()].to_string();
            (name, between(s, "[", "]").parse().unwrap())
        };
        let mut i = 0;
        while i < self.body.len() {
            let line = self.body[i].as_str();
            if line.is_empty()
                || line.starts_with("//")
                || line.starts_with("int ")
                || line == "double val;"
            {
            } else if line.starts_with("double s") {
                let (name, len) = index_of(&line["double ".len()..]);
                arrays.insert(name.clone(), vec![f64::NAN; len]);
                last = name;
            } else if line == "val = 0;" {
                val = 0.0;
            } else if line.starts_with("for (index = 0;") {
                let n: usize = between(line, "index < ", ";").parse().unwrap();
                let stmt = &self.body[i + 1];
                let w_name = between(stmt, "+= ", "[").to_string();
                let row: usize = between(stmt, &format!("{w_name}["), "]").parse().unwrap();
                let src = between(stmt, "* ", "[").to_string();
                assert_eq!(self.body[i + 2].trim(), "}");
                for k in 0..n {
                    val += self.weights[&w_name][row][k] * arrays[&src][k];
                }
                i += 3;
                continue;
            } else if line.starts_with("val += b") {
                let (name, k) = index_of(&line["val += ".len()..]);
                val += self.biases[&name][k];
            } else if line.starts_with("if (val > 0)") {
                branches += 1;
                let (name, k) = index_of(between(line, "{ ", " ="));
                assert!(self.body[i + 1].starts_with("else {"));
                arrays.get_mut(&name).unwrap()[k] = if val > 0.0 { val } else { 0.0 };
                i += 2;
                continue;
            } else if line.starts_with('s') && line.ends_with("= val;") {
                let (name, k) = index_of(line);
                arrays.get_mut(&name).unwrap()[k] = val;
            } else if line == "label = 0;" {
                let out = &arrays[&last];
                let mut l = 0;
                for k in 1..out.len() {
                    if out[k] > out[l] {
                        l = k;
                    }
                }
                label = Some(l);
                // The argmax loop has been interpreted; skip to the return.
                while !self.body[i].starts_with("return") {
                    i += 1;
                }
                continue;
            } else if line.starts_with("return") || line == "}" {
            } else {
                panic!("unexpected statement: {line}");
            }
            i += 1;
        }
        (
            arrays[&last].clone(),
            label.expect("argmax epilogue"),
            branches,
        )
    }
}

#[test]
fn listing_semantics_match_forward() {
    let mut rng = rng(21);
    for case in 0..25 {
        let net = random_net(&mut rng, 2 + case % 3);
        let listing = Listing::parse(&net.emit_program());
        for _ in 0..4 {
            let x = random_input(&mut rng, net.input_dim());
            let (logits, label, branches) = listing.run(&x);
            let r = net.forward(&x).unwrap();
            assert_eq!(branches, net.hidden_count());
            assert_eq!(label, r.label);
            for (a, b) in logits.iter().zip(&r.logits) {
                assert!(
                    (a - b).abs() <= 1e-12 * b.abs().max(1.0),
                    "case {case}: {a} vs {b}"
                );
            }
        }
    }
}

#[test]
fn fixture_listing_runs_and_has_thirty_branches() {
    let net = fixture_net();
    let listing = Listing::parse(&net.emit_program());
    let (_, x) = &base_images()[3];
    let (logits, label, branches) = listing.run(x);
    let r = net.forward(x).unwrap();
    assert_eq!(branches, 30);
    assert_eq!(label, r.label);
    for (a, b) in logits.iter().zip(&r.logits) {
        assert!((a - b).abs() <= 1e-12 * b.abs().max(1.0));
    }
}

/// Affine forms recovered from the gated network by probing: the constant
/// is the value with the symbolic pixels at zero, each coefficient the
/// change along one unit direction.
fn probed_forms(
    net: &Network,
    x: &[f64],
    symbolic: &[usize],
) -> (Vec<Vec<f64>>, Vec<f64>, Vec<Vec<(Vec<f64>, f64)>>) {
    let (_, active) = reference_forward(net, x);
    let mut base = x.to_vec();
    symbolic.iter().for_each(|&p| base[p] = 0.0);
    let (y0, pre0) = gated_forward(net, &active, &base);
    let mut coeffs = vec![vec![0.0; symbolic.len()]; y0.len()];
    let mut pre_coeffs: Vec<Vec<Vec<f64>>> = pre0
        .iter()
        .map(|l| vec![vec![0.0; symbolic.len()]; l.len()])
        .collect();
    for (k, &p) in symbolic.iter().enumerate() {
        let mut probe = base.clone();
        probe[p] = 1.0;
        let (y1, pre1) = gated_forward(net, &active, &probe);
        for i in 0..y0.len() {
            coeffs[i][k] = y1[i] - y0[i];
        }
        for l in 0..pre0.len() {
            for q in 0..pre0[l].len() {
                pre_coeffs[l][q][k] = pre1[l][q] - pre0[l][q];
            }
        }
    }
    let pre_forms = pre_coeffs
        .into_iter()
        .zip(pre0)
        .map(|(cs, consts)| cs.into_iter().zip(consts).collect())
        .collect();
    (coeffs, y0, pre_forms)
}

#[test]
fn two_symbolic_pixels_match_probed_gated_network() {
    let mut rng = rng(5);
    let mut checked = 0;
    for _ in 0..60 {
        // 4 inputs, 3 hidden, 2 outputs.
        let net = loop {
            let n = random_net(&mut rng, 2);
            if n.input_dim() == 4 && n.layers()[0].output_dim() == 3 && n.output_dim() == 2 {
                break n;
            }
        };
        let x = random_input(&mut rng, 4);
        let symbolic = [1, 3];
        let (forms, pc) = output_affine_forms(&net, &x, &symbolic).unwrap();
        let (coeffs, consts, pre_forms) = probed_forms(&net, &x, &symbolic);
        for i in 0..2 {
            assert!((forms[i].constant - consts[i]).abs() <= 1e-12);
            for k in 0..2 {
                assert!((forms[i].coeffs[k] - coeffs[i][k]).abs() <= 1e-12);
            }
        }
        let (_, active) = reference_forward(&net, &x);
        let mut expected_clauses = Vec::new();
        for (q, (c, k)) in pre_forms[0].iter().enumerate() {
            if c.iter().any(|v| *v != 0.0) {
                expected_clauses.push((q, c.clone(), *k, active[0][q]));
            }
        }
        assert_eq!(pc.clauses.len(), expected_clauses.len());
        for ((clause, &neuron), (q, c, k, on)) in
            pc.clauses.iter().zip(&pc.neurons).zip(&expected_clauses)
        {
            assert_eq!(neuron, *q);
            assert_eq!(
                clause.relation,
                if *on { Relation::Gt } else { Relation::Le }
            );
            assert!((clause.form.constant - k).abs() <= 1e-12);
            for (a, b) in clause.form.coeffs.iter().zip(c) {
                assert!((a - b).abs() <= 1e-12);
            }
        }
        checked += 1;
    }
    assert_eq!(checked, 60);
}

#[test]
fn fixture_forms_match_probed_gated_network() {
    let net = fixture_net();
    for (_, x) in base_images().iter().take(4) {
        let symbolic = [100, 378, 406, 600];
        let (forms, pc) = output_affine_forms(&net, x, &symbolic).unwrap();
        let (coeffs, consts, pre_forms) = probed_forms(&net, x, &symbolic);
        for i in 0..net.output_dim() {
            assert!(rel_err(forms[i].constant, consts[i]) <= 1e-9);
            for k in 0..symbolic.len() {
                assert!((forms[i].coeffs[k] - coeffs[i][k]).abs() <= 1e-9);
            }
        }
        let expected = pre_forms
            .iter()
            .flatten()
            .filter(|(c, _)| c.iter().any(|v| *v != 0.0))
            .count();
        assert_eq!(pc.clauses.len(), expected);
        assert!(pc.holds_at(&symbolic.iter().map(|&p| x[p]).collect::<Vec<_>>()));
    }
}
