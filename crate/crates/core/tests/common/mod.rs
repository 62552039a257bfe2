#![allow(dead_code)]

use avsum::nn::gradcheck::{check_gradients, GradCheck};
use avsum::nn::layers::{Conv1d, Conv2d, Deconv1d, Dense, Gru, MultiHeadAttention};
use avsum::nn::{ParamStore, Tape, Tensor, Var};
use avsum::rng::{self, Rng};
use avsum::training::loss::{masked_class_weights, weighted_bce_on_tape};
use rand::Rng as _;
use rand_distr::StandardNormal;

pub const EPS: f64 = 1e-5;
pub const TOLERANCE: f64 = 1e-4;
pub const INSTANCES: u64 = 20;

pub fn normal(rng: &mut Rng, shape: &[usize]) -> Tensor<f64> {
    Tensor::from_fn(shape, |_| rng.sample::<f64, _>(StandardNormal))
}

/// `Σ y ⊙ r` for a fixed random `r`, so every output entry gets its own
/// upstream gradient.
fn project(tape: &mut Tape<f64>, y: Var, r: &Tensor<f64>) -> avsum::Result<Var> {
    let r = tape.input(r.clone())?;
    let p = tape.mul(y, r)?;
    tape.sum(p)
}

fn check_layer<F>(store: &mut ParamStore<f64>, inputs: &[Tensor<f64>], out_shape: &[usize], rng: &mut Rng, f: F) -> GradCheck
where
    F: Fn(&mut Tape<f64>, &ParamStore<f64>, &[Var]) -> avsum::Result<Var>,
{
    let r = normal(rng, out_shape);
    check_gradients(store, inputs, EPS, |tape, store, vars| {
        let y = f(tape, store, vars)?;
        project(tape, y, &r)
    })
    .unwrap()
}

pub type Case = fn(u64) -> GradCheck;

pub fn conv1d(seed: u64) -> GradCheck {
    let mut r = rng::stream(seed, "grad/conv1d");
    let stride = 1 + (seed % 2) as usize;
    let mut store = ParamStore::new();
    let layer = Conv1d::register(&mut store, "c", 3, 4, 3, stride, 1, &mut r).unwrap();
    let x = normal(&mut r, &[7, 3]);
    let t_out = (7 + 2 - 3) / stride + 1;
    check_layer(&mut store, &[x], &[t_out, 4], &mut r, |t, s, v| layer.forward(t, s, v[0]))
}

pub fn conv2d(seed: u64) -> GradCheck {
    let mut r = rng::stream(seed, "grad/conv2d");
    let mut store = ParamStore::new();
    let layer = Conv2d::register(&mut store, "c", 2, 3, (3, 3), (1, 1), (1, 1), &mut r).unwrap();
    let x = normal(&mut r, &[2, 4, 5, 2]);
    check_layer(&mut store, &[x], &[2, 4, 5, 3], &mut r, |t, s, v| layer.forward(t, s, v[0]))
}

pub fn maxpool(seed: u64) -> GradCheck {
    let mut r = rng::stream(seed, "grad/maxpool");
    let mut store = ParamStore::new();
    let a = normal(&mut r, &[8, 3]);
    let b = normal(&mut r, &[2, 4, 4, 2]);
    let ra = normal(&mut r, &[4, 3]);
    let rb = normal(&mut r, &[2, 2, 2, 2]);
    check_gradients(&mut store, &[a, b], EPS, |tape, _, v| {
        let ya = tape.maxpool1d(v[0], 2, 2)?;
        let yb = tape.maxpool2d(v[1], (2, 2), (2, 2))?;
        let la = project(tape, ya, &ra)?;
        let lb = project(tape, yb, &rb)?;
        tape.add(la, lb)
    })
    .unwrap()
}

pub fn deconv1d(seed: u64) -> GradCheck {
    let mut r = rng::stream(seed, "grad/deconv1d");
    let mut store = ParamStore::new();
    let layer = Deconv1d::register(&mut store, "d", 3, 2, 4, 2, &mut r).unwrap();
    let x = normal(&mut r, &[5, 3]);
    check_layer(&mut store, &[x], &[10, 2], &mut r, |t, s, v| layer.forward(t, s, v[0]))
}

pub fn dense(seed: u64) -> GradCheck {
    let mut r = rng::stream(seed, "grad/dense");
    let mut store = ParamStore::new();
    let layer = Dense::register(&mut store, "fc", 3, 5, &mut r).unwrap();
    let x = normal(&mut r, &[4, 3]);
    check_layer(&mut store, &[x], &[4, 5], &mut r, |t, s, v| layer.forward(t, s, v[0]))
}

pub fn gru(seed: u64) -> GradCheck {
    let mut r = rng::stream(seed, "grad/gru");
    let mut store = ParamStore::new();
    let layer = Gru::register(&mut store, "g", 3, 4, &mut r).unwrap();
    let x = normal(&mut r, &[5, 3]);
    let h0 = normal(&mut r, &[1, 4]);
    check_layer(&mut store, &[x, h0], &[5, 4], &mut r, |t, s, v| layer.forward(t, s, v[0], v[1]))
}

pub fn attention(seed: u64) -> GradCheck {
    let mut r = rng::stream(seed, "grad/attention");
    let mut store = ParamStore::new();
    let layer = MultiHeadAttention::register(&mut store, "mha", 4, 2, &mut r).unwrap();
    let q = normal(&mut r, &[3, 4]);
    let kv = normal(&mut r, &[5, 4]);
    check_layer(&mut store, &[q, kv], &[3, 4], &mut r, |t, s, v| {
        Ok(layer.forward(t, s, v[0], v[1], v[1])?.output)
    })
}

pub fn softmax(seed: u64) -> GradCheck {
    let mut r = rng::stream(seed, "grad/softmax");
    let mut store = ParamStore::new();
    let x = normal(&mut r, &[4, 3]);
    check_layer(&mut store, &[x], &[4, 3], &mut r, |t, _, v| t.softmax(v[0]))
}

pub fn weighted_bce(seed: u64) -> GradCheck {
    let mut r = rng::stream(seed, "grad/bce");
    let mut store = ParamStore::new();
    let n = 6;
    let logits = normal(&mut r, &[n, 2]);
    let mut z: Vec<u8> = (0..n).map(|_| r.random_range(0..2u8)).collect();
    z[0] = 1;
    z[1] = 0;
    let mut mask = vec![true; n];
    mask[n - 1] = seed % 2 == 0;
    let w = masked_class_weights(&z, &mask).unwrap();
    check_gradients(&mut store, &[logits], EPS, |tape, _, v| {
        let s = tape.softmax(v[0])?;
        weighted_bce_on_tape(tape, s, &z, w, &mask)
    })
    .unwrap()
}

pub const CASES: [(&str, Case); 9] = [
    ("conv1d", conv1d),
    ("conv2d", conv2d),
    ("maxpool", maxpool),
    ("deconv1d", deconv1d),
    ("dense", dense),
    ("gru", gru),
    ("attention", attention),
    ("softmax", softmax),
    ("weighted_bce", weighted_bce),
];

/// Worst relative error of `case` over the standard instance count.
pub fn worst_error(case: Case) -> f64 {
    (0..INSTANCES).map(|s| case(s).max_rel_err).fold(0.0, f64::max)
}
