use super::graph::{Graph, Var};
use super::tensor::Tensor;
use crate::error::{Error, Result};

/// Seed for the dropout stream of every graph built during a check, so all
/// perturbed evaluations see the same masks.
const CHECK_SEED: u64 = 0x5eed;

fn eval<F>(f: &F, x: &Tensor<f64>) -> Result<f64>
where
    F: Fn(&mut Graph<f64>, Var) -> Result<Var>,
{
    let mut g = Graph::new(true, CHECK_SEED);
    let xv = g.param(x.clone());
    let y = f(&mut g, xv)?;
    if g.value(y).numel() != 1 {
        return Err(Error::NonScalarLoss(g.shape(y).to_vec()));
    }
    Ok(g.value(y).item())
}

/// Compares reverse-mode gradients of a scalar function with central
/// differences and returns the worst relative error
/// `|a - c| / max(|a|, |c|, 1e-8)` over all coordinates of `x`.
pub fn grad_check<F>(f: F, x: &Tensor<f64>, eps: f64) -> Result<f64>
where
    F: Fn(&mut Graph<f64>, Var) -> Result<Var>,
{
    let mut g = Graph::new(true, CHECK_SEED);
    let xv = g.param(x.clone());
    let y = f(&mut g, xv)?;
    g.backward(y)?;
    let analytic = g.grad_tensor(xv);

    let mut worst = 0.0f64;
    let mut probe = x.clone();
    for i in 0..x.numel() {
        let orig = probe.data()[i];
        probe.data_mut()[i] = orig + eps;
        let plus = eval(&f, &probe)?;
        probe.data_mut()[i] = orig - eps;
        let minus = eval(&f, &probe)?;
        probe.data_mut()[i] = orig;

        let a = analytic.data()[i];
        let cd = (plus - minus) / (2.0 * eps);
        if !a.is_finite() || !cd.is_finite() {
            return Err(Error::NonFinite {
                index: i,
                detail: format!("analytic {a}, central difference {cd}"),
            });
        }
        let err = (a - cd).abs() / a.abs().max(cd.abs()).max(1e-8);
        worst = worst.max(err);
    }
    Ok(worst)
}
