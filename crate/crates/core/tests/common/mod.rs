//! Helpers shared by the integration test targets. Everything here is
//! written independently of the library's own evaluation code so it can
//! serve as an oracle.
#![allow(dead_code, clippy::needless_range_loop)]

use std::path::PathBuf;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use relu_concolic::attack::{Clause, ClauseKind, LinearConstraintSystem};
use relu_concolic::data::{normalize, MnistSet};
use relu_concolic::network::{Activation, Layer, Network};
use relu_concolic::symexec::{AffineForm, LinearInequality, Relation};

pub fn fixture(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("fixtures")
        .join(name)
}

pub fn fixture_net() -> Network {
    relu_concolic::load_network(fixture("digits-net.json")).expect("fixture network loads")
}

pub fn fixture_set() -> MnistSet {
    MnistSet::load(fixture("digits")).expect("fixture images load")
}

/// The first image of each digit, as `(digit, normalized pixels)`.
pub fn base_images() -> Vec<(u8, Vec<f64>)> {
    let set = fixture_set();
    (0..10u8)
        .map(|d| {
            let i = set.first_of(d).expect("every digit present");
            (d, normalize(&set.images[i]).into_inner())
        })
        .collect()
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// `layers` affine layers of 2..=6 neurons over a 2..=6 input, ReLU on all
/// but the last.
pub fn random_net(rng: &mut ChaCha8Rng, layers: usize) -> Network {
    let mut dims = vec![rng.gen_range(2..=6)];
    for _ in 0..layers {
        dims.push(rng.gen_range(2..=6));
    }
    let built = dims
        .windows(2)
        .enumerate()
        .map(|(l, d)| {
            let weights = (0..d[1])
                .map(|_| (0..d[0]).map(|_| rng.gen_range(-1.0..1.0)).collect())
                .collect();
            let biases = (0..d[1]).map(|_| rng.gen_range(-0.5..0.5)).collect();
            let act = if l + 1 == layers {
                Activation::Linear
            } else {
                Activation::Relu
            };
            Layer::new(weights, biases, act)
        })
        .collect();
    Network::new(built).expect("random network is valid")
}

pub fn random_input(rng: &mut ChaCha8Rng, m: usize) -> Vec<f64> {
    (0..m).map(|_| rng.gen_range(0.0..1.0)).collect()
}

/// Plain layer-by-layer evaluation. Returns the logits and, per hidden
/// layer, whether each neuron's pre-activation is positive.
pub fn reference_forward(net: &Network, x: &[f64]) -> (Vec<f64>, Vec<Vec<bool>>) {
    let mut v = x.to_vec();
    let mut active = Vec::new();
    for layer in net.layers() {
        let mut next = Vec::with_capacity(layer.biases.len());
        for (row, b) in layer.weights.iter().zip(&layer.biases) {
            let mut s = *b;
            for (w, a) in row.iter().zip(&v) {
                s += w * a;
            }
            next.push(s);
        }
        if layer.activation == Activation::Relu {
            active.push(next.iter().map(|&s| s > 0.0).collect());
            next.iter_mut().for_each(|s| *s = s.max(0.0));
        }
        v = next;
    }
    (v, active)
}

/// Evaluation with every ReLU replaced by the fixed gate `active`:
/// affine in `x` everywhere, equal to the network wherever `x` induces
/// `active`.
pub fn gated_forward(net: &Network, active: &[Vec<bool>], x: &[f64]) -> (Vec<f64>, Vec<Vec<f64>>) {
    let mut v = x.to_vec();
    let mut pre = Vec::new();
    for (l, layer) in net.layers().iter().enumerate() {
        let mut next: Vec<f64> = layer
            .weights
            .iter()
            .zip(&layer.biases)
            .map(|(row, b)| b + row.iter().zip(&v).map(|(w, a)| w * a).sum::<f64>())
            .collect();
        if layer.activation == Activation::Relu {
            pre.push(next.clone());
            for (s, &on) in next.iter_mut().zip(&active[l]) {
                if !on {
                    *s = 0.0;
                }
            }
        }
        v = next;
    }
    (v, pre)
}

pub fn rel_err(a: f64, b: f64) -> f64 {
    let scale = a.abs().max(b.abs());
    if scale == 0.0 {
        0.0
    } else {
        (a - b).abs() / scale
    }
}

/// Random system over `t` variables in [0, 1]: a handful of half-planes
/// through random anchor points, offset a little either way, plus the box
/// clauses the attack assembler would add.
pub fn random_system(rng: &mut ChaCha8Rng, t: usize, margin: f64) -> LinearConstraintSystem {
    let mut clauses = Vec::new();
    for _ in 0..rng.gen_range(1..=6) {
        let coeffs: Vec<f64> = if rng.gen_bool(0.05) {
            vec![0.0; t]
        } else {
            (0..t).map(|_| rng.gen_range(-1.0..1.0)).collect()
        };
        let anchor: Vec<f64> = (0..t).map(|_| rng.gen_range(0.0..1.0)).collect();
        let spread = if rng.gen_bool(0.2) { 1e-5 } else { 0.2 };
        let constant = -coeffs.iter().zip(&anchor).map(|(a, p)| a * p).sum::<f64>()
            + rng.gen_range(-spread..spread);
        let relation = if rng.gen_bool(0.5) {
            Relation::Gt
        } else {
            Relation::Le
        };
        let kind = if rng.gen_bool(0.5) {
            ClauseKind::Path
        } else {
            ClauseKind::Attack
        };
        clauses.push(Clause {
            kind,
            inequality: LinearInequality::new(AffineForm { constant, coeffs }, relation),
        });
    }
    for k in 0..t {
        let mut lower = AffineForm::constant(0.0, t);
        lower.coeffs[k] = -1.0;
        let mut upper = AffineForm::constant(-1.0, t);
        upper.coeffs[k] = 1.0;
        for form in [lower, upper] {
            clauses.push(Clause {
                kind: ClauseKind::Range,
                inequality: LinearInequality::new(form, Relation::Le),
            });
        }
    }
    LinearConstraintSystem {
        variables: (0..t).collect(),
        clauses,
        lo: 0.0,
        hi: 1.0,
        margin,
    }
}

/// Non-box clauses as `(coeffs, constant)` oriented to read `>= 0`.
fn oriented_rows(sys: &LinearConstraintSystem) -> Vec<(Vec<f64>, f64, bool)> {
    sys.clauses
        .iter()
        .filter(|c| c.kind != ClauseKind::Range)
        .map(|c| {
            let f = &c.inequality.form;
            match c.inequality.relation {
                Relation::Gt => (f.coeffs.clone(), f.constant, true),
                Relation::Le => (f.coeffs.iter().map(|v| -v).collect(), -f.constant, false),
            }
        })
        .collect()
}

/// Some point of a `per_axis`-point grid over the box where every non-box
/// clause reads at least `need`.
pub fn grid_point(sys: &LinearConstraintSystem, per_axis: usize, need: f64) -> Option<Vec<f64>> {
    let rows = oriented_rows(sys);
    let t = sys.variables.len();
    let step = (sys.hi - sys.lo) / (per_axis - 1) as f64;
    let mut idx = vec![0usize; t];
    loop {
        let p: Vec<f64> = idx.iter().map(|&i| sys.lo + step * i as f64).collect();
        let ok = rows.iter().all(|(a, c, _)| {
            let v = c + a.iter().zip(&p).map(|(a, x)| a * x).sum::<f64>();
            v >= need
        });
        if ok {
            return Some(p);
        }
        let mut k = 0;
        loop {
            if k == t {
                return None;
            }
            idx[k] += 1;
            if idx[k] < per_axis {
                break;
            }
            idx[k] = 0;
            k += 1;
        }
    }
}

/// Optimum of max s s.t. every non-box clause reads at least its margin
/// plus `s` times its coefficient norm, and the point sits at least `s`
/// inside every box face. Found by enumerating vertices of the (t+1)-dim
/// polyhedron. `None` if a coefficient-free clause already fails.
pub fn max_slack_by_vertices(sys: &LinearConstraintSystem) -> Option<f64> {
    let t = sys.variables.len();
    // Rows read a·x - n·s >= r.
    let mut rows: Vec<(Vec<f64>, f64, f64)> = Vec::new();
    for (a, c, strict) in oriented_rows(sys) {
        let m = if strict { sys.margin } else { 0.0 };
        let n = a.iter().map(|v| v * v).sum::<f64>().sqrt();
        if n == 0.0 {
            let ok = if strict && sys.margin == 0.0 {
                c > 0.0
            } else {
                c >= m
            };
            if !ok {
                return None;
            }
            continue;
        }
        rows.push((a, n, m - c));
    }
    for k in 0..t {
        let mut e = vec![0.0; t];
        e[k] = 1.0;
        rows.push((e.clone(), 1.0, sys.lo));
        e[k] = -1.0;
        rows.push((e, 1.0, -sys.hi));
    }
    let dim = t + 1;
    let mut best = f64::NEG_INFINITY;
    fn subsets(n: usize, k: usize, start: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if cur.len() == k {
            out.push(cur.clone());
            return;
        }
        for i in start..n {
            cur.push(i);
            subsets(n, k, i + 1, cur, out);
            cur.pop();
        }
    }
    let mut all = Vec::new();
    subsets(rows.len(), dim, 0, &mut Vec::new(), &mut all);
    for subset in all {
        // Solve the square system [a, -n] z = r by Gaussian elimination.
        let mut mat: Vec<Vec<f64>> = subset
            .iter()
            .map(|&i| {
                let (a, n, r) = &rows[i];
                let mut row = a.clone();
                row.push(-n);
                row.push(*r);
                row
            })
            .collect();
        let mut singular = false;
        for col in 0..dim {
            let piv = (col..dim)
                .max_by(|&i, &j| mat[i][col].abs().total_cmp(&mat[j][col].abs()))
                .unwrap();
            if mat[piv][col].abs() < 1e-12 {
                singular = true;
                break;
            }
            mat.swap(col, piv);
            for r in 0..dim {
                if r != col {
                    let f = mat[r][col] / mat[col][col];
                    for c in col..=dim {
                        mat[r][c] -= f * mat[col][c];
                    }
                }
            }
        }
        if singular {
            continue;
        }
        let z: Vec<f64> = (0..dim).map(|i| mat[i][dim] / mat[i][i]).collect();
        let feasible = rows.iter().all(|(a, n, r)| {
            a.iter().zip(&z).map(|(a, x)| a * x).sum::<f64>() - n * z[t] >= r - 1e-9
        });
        if feasible {
            best = best.max(z[t]);
        }
    }
    Some(best)
}

/// Sum over every input-to-output path through active hidden neurons of the
/// product of its weights, enumerating paths one by one.
pub fn path_sum(net: &Network, active: &[Vec<bool>], out: usize, pixel: usize) -> f64 {
    fn walk(
        net: &Network,
        active: &[Vec<bool>],
        layer: usize,
        from: usize,
        out: usize,
        prod: f64,
    ) -> f64 {
        let layers = net.layers();
        let w = &layers[layer].weights;
        if layer + 1 == layers.len() {
            return prod * w[out][from];
        }
        (0..w.len())
            .filter(|&k| active[layer][k])
            .map(|k| walk(net, active, layer + 1, k, out, prod * w[k][from]))
            .sum()
    }
    walk(net, active, 0, pixel, out, 1.0)
}

/// Bias terms routed to `out` through active neurons: each active hidden
/// neuron's bias times the sum of path products from it to the output.
pub fn path_constant(net: &Network, active: &[Vec<bool>], out: usize) -> f64 {
    fn from_neuron(net: &Network, active: &[Vec<bool>], layer: usize, k: usize, out: usize) -> f64 {
        let layers = net.layers();
        let next = layer + 1;
        let w = &layers[next].weights;
        if next + 1 == layers.len() {
            return w[out][k];
        }
        (0..w.len())
            .filter(|&q| active[next][q])
            .map(|q| w[q][k] * from_neuron(net, active, next, q, out))
            .sum()
    }
    let layers = net.layers();
    let mut total = layers.last().unwrap().biases[out];
    for (l, layer) in layers.iter().enumerate().take(layers.len() - 1) {
        for (k, b) in layer.biases.iter().enumerate() {
            if active[l][k] {
                total += b * from_neuron(net, active, l, k, out);
            }
        }
    }
    total
}
