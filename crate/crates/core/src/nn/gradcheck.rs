//! Central finite-difference gradient checking.
//!
//! The numeric side only ever evaluates forward values, so it is independent
//! of every hand-written adjoint it checks.

use crate::error::Result;
use crate::nn::params::ParamStore;
use crate::nn::tape::{Tape, Var};
use crate::nn::tensor::Tensor;

/// Gradients smaller than this are compared in absolute terms.
pub const RELATIVE_FLOOR: f64 = 1e-4;

#[derive(Debug, Clone, Copy)]
pub struct GradCheck {
    pub max_rel_err: f64,
    pub entries: usize,
}

fn rel_err(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(RELATIVE_FLOOR)
}

/// Compares tape gradients against central differences with step `eps` for
/// every entry of `inputs` and of every non-frozen parameter in `store`.
/// `build` must place `inputs` (given as tape variables) and the store's
/// parameters into a graph that ends in a scalar.
pub fn check_gradients<F>(store: &mut ParamStore<f64>, inputs: &[Tensor<f64>], eps: f64, build: F) -> Result<GradCheck>
where
    F: Fn(&mut Tape<f64>, &ParamStore<f64>, &[Var]) -> Result<Var>,
{
    let eval = |store: &ParamStore<f64>, inputs: &[Tensor<f64>]| -> Result<f64> {
        let mut tape = Tape::new();
        let vars = inputs
            .iter()
            .map(|t| tape.input(t.clone()))
            .collect::<Result<Vec<_>>>()?;
        let loss = build(&mut tape, store, &vars)?;
        Ok(tape.value(loss).data()[0])
    };

    let mut tape = Tape::new();
    let vars = inputs
        .iter()
        .map(|t| tape.variable(t.clone()))
        .collect::<Result<Vec<_>>>()?;
    let loss = build(&mut tape, store, &vars)?;
    let grads = tape.backward(loss)?;
    store.zero_grad();
    grads.accumulate_into(store)?;

    let mut worst = 0.0f64;
    let mut entries = 0usize;

    let mut work: Vec<Tensor<f64>> = inputs.to_vec();
    for (i, v) in vars.iter().enumerate() {
        let analytic = grads.wrt(*v).cloned().unwrap_or_else(|| Tensor::zeros(inputs[i].shape()));
        for k in 0..inputs[i].len() {
            let orig = work[i].data()[k];
            work[i].data_mut()[k] = orig + eps;
            let up = eval(store, &work)?;
            work[i].data_mut()[k] = orig - eps;
            let down = eval(store, &work)?;
            work[i].data_mut()[k] = orig;
            worst = worst.max(rel_err(analytic.data()[k], (up - down) / (2.0 * eps)));
            entries += 1;
        }
    }

    let ids: Vec<_> = store.iter().filter(|(_, p)| !p.frozen).map(|(id, _)| id).collect();
    for id in ids {
        let analytic = store.get(id).grad.clone();
        for k in 0..analytic.len() {
            let orig = store.get(id).value.data()[k];
            store.get_mut(id).value.data_mut()[k] = orig + eps;
            let up = eval(store, inputs)?;
            store.get_mut(id).value.data_mut()[k] = orig - eps;
            let down = eval(store, inputs)?;
            store.get_mut(id).value.data_mut()[k] = orig;
            worst = worst.max(rel_err(analytic.data()[k], (up - down) / (2.0 * eps)));
            entries += 1;
        }
    }
    store.zero_grad();
    Ok(GradCheck {
        max_rel_err: worst,
        entries,
    })
}
