use super::{Tape, Tensor, Var};
use crate::{Error, Result};

/// Central finite-difference gradient of `f` at `inputs`.
pub fn numeric_gradient<F>(f: &F, inputs: &[Tensor], eps: f64) -> Result<Vec<Tensor>>
where
    F: Fn(&mut Tape, &[Var]) -> Result<Var>,
{
    let eval = |xs: &[Tensor]| -> Result<f64> {
        let mut t = Tape::new();
        let vars: Vec<Var> = xs.iter().map(|x| t.constant(x.clone())).collect();
        let out = f(&mut t, &vars)?;
        let v = t.scalar_value(out);
        if v.is_nan() {
            return Err(Error::numeric(
                "function returned NaN during finite differencing",
            ));
        }
        Ok(v)
    };
    let mut work: Vec<Tensor> = inputs.to_vec();
    let mut grads = Vec::with_capacity(inputs.len());
    for k in 0..inputs.len() {
        let mut g = Tensor::zeros(inputs[k].dim());
        for idx in 0..inputs[k].len() {
            let (r, c) = (idx / inputs[k].ncols(), idx % inputs[k].ncols());
            let orig = work[k][[r, c]];
            work[k][[r, c]] = orig + eps;
            let plus = eval(&work)?;
            work[k][[r, c]] = orig - eps;
            let minus = eval(&work)?;
            work[k][[r, c]] = orig;
            g[[r, c]] = (plus - minus) / (2.0 * eps);
        }
        grads.push(g);
    }
    Ok(grads)
}

/// Compares the tape gradient of `f` with central differences and returns
/// `maxᵢ |analyticᵢ - numericᵢ| / max(1, |numericᵢ|)`.
///
/// `f` receives one leaf per input tensor and must return a `1×1` node.
pub fn grad_check<F>(f: F, inputs: &[Tensor], eps: f64) -> Result<f64>
where
    F: Fn(&mut Tape, &[Var]) -> Result<Var>,
{
    let mut t = Tape::new();
    let vars: Vec<Var> = inputs.iter().map(|x| t.param(x.clone())).collect();
    let out = f(&mut t, &vars)?;
    t.backward(out)?;
    let numeric = numeric_gradient(&f, inputs, eps)?;
    let mut worst: f64 = 0.0;
    for (v, num) in vars.iter().zip(&numeric) {
        let zeros;
        let analytic = match t.grad(*v) {
            Some(g) => g,
            None => {
                zeros = Tensor::zeros(num.dim());
                &zeros
            }
        };
        for (a, n) in analytic.iter().zip(num.iter()) {
            if a.is_nan() || n.is_nan() {
                return Err(Error::numeric("NaN gradient during grad_check"));
            }
            worst = worst.max((a - n).abs() / n.abs().max(1.0));
        }
    }
    Ok(worst)
}
