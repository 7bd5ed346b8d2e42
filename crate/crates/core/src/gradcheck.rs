//! Finite-difference validation of analytic gradients.
//!
//! The checker perturbs randomly probed parameter entries by `±h`, re-runs a
//! caller-supplied deterministic loss (dropout off, fixed inputs), and
//! compares the central difference against the analytic gradient already
//! stored in each parameter's `grad` buffer. Run it in the high-precision
//! (`f64`) mode; central differences carry no signal below roundoff in `f32`.

use crate::error::Result;
use crate::optim::ParamCollection;
use crate::rng::RngState;
use crate::scalar::Scalar;

/// Entries where both the analytic and numeric gradient are below this floor
/// are counted as agreeing. The central difference carries an absolute noise
/// floor of roughly `eps_f64 * |loss| / h` (~2e-10 for typical losses here),
/// so gradients below ~1e-5 cannot be resolved to 1e-4 relative error no
/// matter how correct they are; anything genuinely wrong in a live parameter
/// shows up far above this floor.
pub const ABS_FLOOR: f64 = 1e-5;

/// Compares analytic gradients against central finite differences on
/// `probes` randomly chosen parameter entries and returns the worst relative
/// error `|a − n| / max(|a|, |n|)` among entries above [`ABS_FLOOR`].
///
/// Contract: the caller has already run forward + backward so that `grad`
/// holds the analytic gradient of `loss_fn` at the current values, and
/// `loss_fn` is a pure function of the parameter values.
pub fn finite_difference_check<S, C, F>(
    params: &mut C,
    probes: usize,
    h: f64,
    rng: &mut RngState,
    mut loss_fn: F,
) -> Result<f64>
where
    S: Scalar,
    C: ParamCollection<S> + ?Sized,
    F: FnMut(&mut C) -> Result<f64>,
{
    let total = params.entry_count();
    if total == 0 || probes == 0 {
        return Ok(0.0);
    }
    let mut worst = 0.0f64;
    for _ in 0..probes {
        let mut flat = rng.index(total);
        let mut pi = 0;
        while flat >= params.param(pi).value.len() {
            flat -= params.param(pi).value.len();
            pi += 1;
        }

        let original = params.param(pi).value.data()[flat];
        let analytic = params.param(pi).grad.data()[flat].to_f64();

        params.param_mut(pi).value.data_mut()[flat] = S::from_f64(original.to_f64() + h);
        let loss_plus = loss_fn(params)?;
        params.param_mut(pi).value.data_mut()[flat] = S::from_f64(original.to_f64() - h);
        let loss_minus = loss_fn(params)?;
        params.param_mut(pi).value.data_mut()[flat] = original;

        let numeric = (loss_plus - loss_minus) / (2.0 * h);
        let scale = analytic.abs().max(numeric.abs());
        if scale < ABS_FLOOR {
            continue;
        }
        let rel = (analytic - numeric).abs() / scale;
        if rel > worst {
            worst = rel;
        }
    }
    Ok(worst)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::optim::Parameter;
    use crate::rng::{stream, RngState};
    use crate::tensor::Tensor;
    use alloc::vec;
    use alloc::vec::Vec;

    #[test]
    fn linear_loss_is_exact() {
        // loss = sum(theta): gradient is exactly 1 everywhere.
        let mut params: Vec<Parameter<f64>> = vec![Parameter::zeros(&[10])];
        params[0].value = Tensor::vector((0..10).map(|i| i as f64 * 0.1).collect());
        params[0].grad = Tensor::vector(vec![1.0; 10]);
        let mut rng = RngState::new(2).fork(stream::PROBE);
        let err = finite_difference_check(&mut params, 50, 1e-5, &mut rng, |p| {
            Ok(p[0].value.data().iter().sum())
        })
        .unwrap();
        assert!(err < 1e-10, "relative error {err}");
    }

    #[test]
    fn detects_a_wrong_gradient() {
        let mut params: Vec<Parameter<f64>> = vec![Parameter::zeros(&[4])];
        params[0].value = Tensor::vector(vec![0.5, -0.25, 1.0, 2.0]);
        // Claimed gradient of sum(theta^2) should be 2*theta; sabotage it.
        params[0].grad = Tensor::vector(vec![1.0, -0.5, 2.0, 7.0]);
        let mut rng = RngState::new(3).fork(stream::PROBE);
        let err = finite_difference_check(&mut params, 100, 1e-5, &mut rng, |p| {
            Ok(p[0].value.data().iter().map(|v| v * v).sum())
        })
        .unwrap();
        assert!(err > 0.1, "sabotaged gradient not detected: {err}");
    }
}
