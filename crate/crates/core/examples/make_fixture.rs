//! Regenerates the checked-in fixtures under `crates/core/fixtures/`:
//!
//! - `digits-{images-idx3,labels-idx1}-ubyte`: stroke-rendered 28×28 digits
//!   in MNIST IDX format, with random slant, scale, offset and thickness;
//! - `digits-net.json`: a 784×10×10×10×10 ReLU network trained by SGD on
//!   separately rendered digits;
//! - `toy-net.json`: a 2-input network with a known decision boundary.
//!
//! Run with `cargo run --example make_fixture -- [out_dir]`.

use std::path::PathBuf;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use relu_concolic::data::{encode_idx_images, encode_idx_labels, ByteGrid, PIXELS, SIDE};
use relu_concolic::network::{Activation, Layer, Network};

const SEED: u64 = 3;
const PER_DIGIT: usize = 20;
const TRAIN: usize = 3000;
const EPOCHS: usize = 15;
/// Chance of an extra short stroke somewhere in the box.
const STRAY: f64 = 0.3;
const LEARNING_RATE: f64 = 0.02;
const L2: f64 = 0.0;

type Stroke = Vec<(f64, f64)>;

fn ellipse(cx: f64, cy: f64, rx: f64, ry: f64, from: f64, to: f64, n: usize) -> Stroke {
    (0..=n)
        .map(|i| {
            let a = from + (to - from) * i as f64 / n as f64;
            (cx + rx * a.cos(), cy + ry * a.sin())
        })
        .collect()
}

/// Strokes of each digit in a unit box, x to the right and y down.
fn glyph(d: usize) -> Vec<Stroke> {
    use std::f64::consts::PI;
    match d {
        0 => vec![ellipse(0.5, 0.5, 0.3, 0.45, 0.0, 2.0 * PI, 24)],
        1 => vec![vec![(0.35, 0.2), (0.52, 0.05), (0.52, 0.95)]],
        2 => vec![vec![
            (0.2, 0.25),
            (0.35, 0.08),
            (0.65, 0.08),
            (0.8, 0.25),
            (0.75, 0.45),
            (0.2, 0.95),
            (0.85, 0.95),
        ]],
        3 => vec![vec![
            (0.2, 0.12),
            (0.6, 0.05),
            (0.78, 0.22),
            (0.5, 0.47),
            (0.8, 0.7),
            (0.6, 0.95),
            (0.2, 0.88),
        ]],
        4 => vec![vec![(0.65, 0.95), (0.65, 0.05), (0.15, 0.65), (0.85, 0.65)]],
        5 => vec![vec![
            (0.8, 0.05),
            (0.3, 0.05),
            (0.25, 0.45),
            (0.6, 0.4),
            (0.8, 0.6),
            (0.7, 0.9),
            (0.2, 0.9),
        ]],
        6 => vec![vec![
            (0.7, 0.05),
            (0.35, 0.35),
            (0.25, 0.7),
            (0.45, 0.95),
            (0.75, 0.8),
            (0.7, 0.55),
            (0.3, 0.6),
        ]],
        7 => vec![vec![(0.15, 0.05), (0.85, 0.05), (0.4, 0.95)]],
        8 => vec![
            ellipse(0.5, 0.27, 0.22, 0.22, 0.0, 2.0 * PI, 20),
            ellipse(0.5, 0.72, 0.27, 0.24, 0.0, 2.0 * PI, 20),
        ],
        9 => vec![
            ellipse(0.5, 0.3, 0.22, 0.24, 0.0, 2.0 * PI, 20),
            vec![(0.72, 0.3), (0.6, 0.95)],
        ],
        _ => unreachable!(),
    }
}

struct Pose {
    scale: f64,
    shear: f64,
    dx: f64,
    dy: f64,
    thickness: f64,
    ink: f64,
    wobble: f64,
}

impl Pose {
    fn random(rng: &mut ChaCha8Rng) -> Self {
        Self {
            scale: rng.gen_range(0.7..1.1),
            shear: rng.gen_range(-0.35..0.35),
            dx: rng.gen_range(-3.0..3.0),
            dy: rng.gen_range(-2.5..2.5),
            thickness: rng.gen_range(0.8..2.2),
            ink: rng.gen_range(0.7..1.0),
            wobble: 0.07,
        }
    }
}

fn segment_distance(p: (f64, f64), a: (f64, f64), b: (f64, f64)) -> f64 {
    let (vx, vy) = (b.0 - a.0, b.1 - a.1);
    let len2 = vx * vx + vy * vy;
    let t = if len2 == 0.0 {
        0.0
    } else {
        (((p.0 - a.0) * vx + (p.1 - a.1) * vy) / len2).clamp(0.0, 1.0)
    };
    let (qx, qy) = (a.0 + t * vx - p.0, a.1 + t * vy - p.1);
    (qx * qx + qy * qy).sqrt()
}

/// Intensities in [0, 1] of the digit rendered with `pose`.
fn render(d: usize, pose: &Pose, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let box_size = 20.0 * pose.scale;
    let origin = (SIDE as f64 - box_size) / 2.0;
    let mut parts = glyph(d);
    if rng.gen_bool(STRAY) {
        let (x, y): (f64, f64) = (rng.gen(), rng.gen());
        let (u, v) = (rng.gen_range(-0.3..0.3), rng.gen_range(-0.3..0.3));
        parts.push(vec![(x, y), (x + u, y + v)]);
    }
    let strokes: Vec<Stroke> = parts
        .into_iter()
        .map(|s| {
            s.into_iter()
                .map(|(x, y)| {
                    let (x, y) = if pose.wobble > 0.0 {
                        (
                            x + rng.gen_range(-pose.wobble..pose.wobble),
                            y + rng.gen_range(-pose.wobble..pose.wobble),
                        )
                    } else {
                        (x, y)
                    };
                    let x = x + pose.shear * (0.5 - y);
                    (
                        origin + pose.dx + x * box_size,
                        origin + pose.dy + y * box_size,
                    )
                })
                .collect()
        })
        .collect();
    let mut out = vec![0.0; PIXELS];
    for row in 0..SIDE {
        for col in 0..SIDE {
            let p = (col as f64 + 0.5, row as f64 + 0.5);
            let dist = strokes
                .iter()
                .flat_map(|s| s.windows(2).map(move |w| segment_distance(p, w[0], w[1])))
                .fold(f64::INFINITY, f64::min);
            let v = (pose.thickness - dist + 0.5).clamp(0.0, 1.0) * pose.ink;
            out[row * SIDE + col] = v;
        }
    }
    out
}

fn to_bytes(values: &[f64]) -> ByteGrid {
    ByteGrid(values.iter().map(|v| (v * 255.0).round() as u8).collect())
}

/// Trains a 784×10×10×10×10 ReLU network with plain per-sample SGD on
/// freshly rendered digits (disjoint from the written images).
fn digits_net(rng: &mut ChaCha8Rng) -> Network {
    let samples: Vec<(Vec<f64>, usize)> = (0..TRAIN)
        .map(|i| {
            let d = i % 10;
            let pose = Pose::random(rng);
            (render(d, &pose, rng), d)
        })
        .collect();
    let dims = [PIXELS, 10, 10, 10, 10];
    let mut w: Vec<Vec<Vec<f64>>> = Vec::new();
    let mut b: Vec<Vec<f64>> = Vec::new();
    for d in dims.windows(2) {
        let he = Normal::new(0.0, (2.0 / d[0] as f64).sqrt()).expect("positive spread");
        w.push(
            (0..d[1])
                .map(|_| (0..d[0]).map(|_| he.sample(rng)).collect())
                .collect(),
        );
        b.push(vec![0.01; d[1]]);
    }
    let last = w.len() - 1;
    let mut order: Vec<usize> = (0..samples.len()).collect();
    for epoch in 0..EPOCHS {
        let lr = LEARNING_RATE / (1.0 + 0.2 * epoch as f64);
        order.shuffle(rng);
        for &k in &order {
            let (x, y) = &samples[k];
            // Forward, keeping every layer's input and pre-activation.
            let mut inputs = vec![x.clone()];
            let mut pre = Vec::new();
            for l in 0..w.len() {
                let z: Vec<f64> = w[l]
                    .iter()
                    .zip(&b[l])
                    .map(|(row, bias)| {
                        bias + row.iter().zip(&inputs[l]).map(|(a, v)| a * v).sum::<f64>()
                    })
                    .collect();
                if l < last {
                    inputs.push(z.iter().map(|v| v.max(0.0)).collect());
                }
                pre.push(z);
            }
            // Softmax cross-entropy gradient, then back through the layers.
            let z = &pre[last];
            let zmax = z.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let e: Vec<f64> = z.iter().map(|v| (v - zmax).exp()).collect();
            let sum: f64 = e.iter().sum();
            let mut delta: Vec<f64> = (0..z.len())
                .map(|c| e[c] / sum - if c == *y { 1.0 } else { 0.0 })
                .collect();
            for l in (0..w.len()).rev() {
                let back: Vec<f64> = if l > 0 {
                    (0..inputs[l].len())
                        .map(|j| {
                            let g: f64 = (0..delta.len()).map(|i| w[l][i][j] * delta[i]).sum();
                            if pre[l - 1][j] > 0.0 {
                                g
                            } else {
                                0.0
                            }
                        })
                        .collect()
                } else {
                    Vec::new()
                };
                for (i, d) in delta.iter().enumerate() {
                    for (wij, v) in w[l][i].iter_mut().zip(&inputs[l]) {
                        *wij -= lr * (d * v + L2 * *wij);
                    }
                    b[l][i] -= lr * d;
                }
                delta = back;
            }
        }
    }
    let layers = w
        .into_iter()
        .zip(b)
        .enumerate()
        .map(|(l, (weights, biases))| {
            let act = if l == last {
                Activation::Linear
            } else {
                Activation::Relu
            };
            Layer::new(weights, biases, act)
        })
        .collect();
    Network::new(layers).expect("fixture network is well formed")
}

fn toy_net() -> Network {
    Network::new(vec![
        Layer::new(
            vec![vec![1.0, 0.0], vec![0.0, 1.0]],
            vec![0.5, 0.5],
            Activation::Relu,
        ),
        Layer::new(
            vec![vec![0.0, 1.0], vec![1.0, 0.0]],
            vec![0.25, 0.0],
            Activation::Linear,
        ),
    ])
    .expect("toy network is well formed")
}

fn main() {
    let out = std::env::args()
        .nth(1)
        .map(PathBuf::from)
        .unwrap_or_else(|| PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("fixtures"));
    std::fs::create_dir_all(&out).expect("create fixture dir");
    let mut rng = ChaCha8Rng::seed_from_u64(SEED);

    let mut images = Vec::with_capacity(PER_DIGIT * 10);
    let mut labels = Vec::with_capacity(PER_DIGIT * 10);
    for i in 0..PER_DIGIT * 10 {
        // Digits cycle 0..9 so the first image of every digit comes early.
        let d = i % 10;
        let pose = Pose::random(&mut rng);
        images.push(to_bytes(&render(d, &pose, &mut rng)));
        labels.push(d as u8);
    }
    std::fs::write(
        out.join("digits-images-idx3-ubyte"),
        encode_idx_images(&images),
    )
    .expect("write images");
    std::fs::write(
        out.join("digits-labels-idx1-ubyte"),
        encode_idx_labels(&labels),
    )
    .expect("write labels");

    let net = digits_net(&mut rng);
    std::fs::write(out.join("digits-net.json"), net.to_json_string()).expect("write network");
    std::fs::write(out.join("toy-net.json"), toy_net().to_json_string()).expect("write toy");

    let correct = images
        .iter()
        .zip(&labels)
        .filter(|(g, &l)| {
            let x = relu_concolic::data::normalize(g);
            net.forward(&x)
                .map(|r| r.label == l as usize)
                .unwrap_or(false)
        })
        .count();
    println!(
        "wrote {} images; fixture network labels {correct} of them correctly",
        images.len()
    );
}
