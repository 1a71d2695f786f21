use super::{Tape, Tensor, Var};
use crate::error::{Error, Result};

const GRAD_FLOOR: f64 = 1e-6;

/// Central-difference gradient of a scalar tape function.
pub fn central_gradient<F>(f: &F, x: &Tensor<f64>, h: f64) -> Result<Tensor<f64>>
where
    F: Fn(&mut Tape<f64>, Var) -> Result<Var>,
{
    let eval = |p: &Tensor<f64>| -> Result<f64> {
        let mut tape = Tape::new();
        let v = tape.param(p.clone());
        let out = f(&mut tape, v)?;
        let val = tape.value(out);
        if val.len() != 1 {
            return Err(Error::Contract("finite_diff_check needs a scalar function".into()));
        }
        Ok(val.data()[0])
    };
    let mut probe = x.clone();
    let mut grad = Vec::with_capacity(x.len());
    for i in 0..x.len() {
        let x0 = x.data()[i];
        probe.data_mut()[i] = x0 + h;
        let up = eval(&probe)?;
        probe.data_mut()[i] = x0 - h;
        let down = eval(&probe)?;
        probe.data_mut()[i] = x0;
        grad.push((up - down) / (2.0 * h));
    }
    Tensor::new(x.shape().to_vec(), grad)
}

/// Largest `|a - n| / max(|a|, |n|, 1e-6)` over the coordinates of `x`, where
/// `a` is the tape gradient and `n` the central difference with step `h`.
/// The floor keeps exactly-zero gradients from turning rounding noise in `n`
/// into a large relative error.
pub fn finite_diff_check<F>(f: F, x: &Tensor<f64>, h: f64) -> Result<f64>
where
    F: Fn(&mut Tape<f64>, Var) -> Result<Var>,
{
    let mut tape = Tape::new();
    let v = tape.param(x.clone());
    let out = f(&mut tape, v)?;
    let analytic = tape.backward(out)?.wrt(v);
    let numeric = central_gradient(&f, x, h)?;
    Ok(analytic
        .data()
        .iter()
        .zip(numeric.data())
        .map(|(a, n)| (a - n).abs() / a.abs().max(n.abs()).max(GRAD_FLOOR))
        .fold(0.0, f64::max))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn square_is_exact() {
        let x = Tensor::scalar(1.0);
        let err = finite_diff_check(|t, v| t.mul(v, v), &x, 1e-4).unwrap();
        assert!(err < 1e-6, "{err}");
    }

    #[test]
    fn sigmoid_chain() {
        let x = Tensor::from_f64_slice(&[3], &[0.3, -1.2, 2.0]).unwrap();
        let err = finite_diff_check(
            |t, v| {
                let a = t.sigmoid(v)?;
                let b = t.sigmoid(a)?;
                let c = t.mul(b, a)?;
                t.sum(c)
            },
            &x,
            1e-4,
        )
        .unwrap();
        assert!(err < 1e-5, "{err}");
    }
}
