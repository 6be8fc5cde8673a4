use crate::autodiff::{Scalar, Tensor};
use crate::error::Result;
use crate::nnet::ParamStore;

/// Adam moments and step count.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState<T> {
    pub step: u64,
    pub m: ParamStore<T>,
    pub v: ParamStore<T>,
    pub betas: (f64, f64),
    pub eps: f64,
}

impl<T: Scalar> AdamState<T> {
    pub fn new(betas: (f64, f64), eps: f64) -> Self {
        AdamState {
            step: 0,
            m: ParamStore::new(),
            v: ParamStore::new(),
            betas,
            eps,
        }
    }
}

/// Bias-corrected Adam update of every parameter that has a gradient in
/// `grads`. Returns `false`, leaving parameters and state untouched, when
/// any gradient is non-finite.
pub fn adam_step<T: Scalar>(
    params: &mut ParamStore<T>,
    grads: &ParamStore<T>,
    state: &mut AdamState<T>,
    lr: f64,
) -> Result<bool> {
    if let Some((name, _)) = grads.iter().find(|(_, g)| !g.is_finite()) {
        log::warn!(
            "non-finite gradient in '{name}', update {} skipped",
            state.step + 1
        );
        return Ok(false);
    }
    for (name, g) in grads.iter() {
        let p = params.get(name)?;
        if p.shape() != g.shape() {
            return Err(crate::Error::ParamShape {
                name: name.to_string(),
                found: g.shape().to_vec(),
                expected: p.shape().to_vec(),
            });
        }
    }
    state.step += 1;
    let (b1, b2) = state.betas;
    let t = state.step as i32;
    let c1 = 1.0 - b1.powi(t);
    let c2 = 1.0 - b2.powi(t);
    for (name, g) in grads.iter() {
        if !state.m.contains(name) {
            state.m.insert(name, Tensor::zeros(g.shape()));
            state.v.insert(name, Tensor::zeros(g.shape()));
        }
        let m = state.m.get_mut(name)?.data_mut();
        let v = state.v.get_mut(name)?.data_mut();
        let p = params.get_mut(name)?.data_mut();
        for i in 0..p.len() {
            let gi = g.data()[i].as_f64();
            let mi = b1 * m[i].as_f64() + (1.0 - b1) * gi;
            let vi = b2 * v[i].as_f64() + (1.0 - b2) * gi * gi;
            m[i] = T::lit(mi);
            v[i] = T::lit(vi);
            let upd = lr * (mi / c1) / ((vi / c2).sqrt() + state.eps);
            p[i] = T::lit(p[i].as_f64() - upd);
        }
    }
    Ok(true)
}
