//! Trainable parameters, RMSProp, global-norm gradient clipping, and uniform
//! initialization.

use alloc::vec::Vec;

use crate::rng::RngState;
use crate::scalar::Scalar;
use crate::tensor::Tensor;

/// Denominator guard in the RMSProp update.
pub const RMSPROP_EPS: f64 = 1e-8;

/// A trainable tensor with its gradient accumulator and RMSProp cache.
/// All three tensors share one shape; the cache entries stay nonnegative.
#[derive(Debug, Clone, PartialEq)]
pub struct Parameter<S> {
    pub value: Tensor<S>,
    pub grad: Tensor<S>,
    pub rms_cache: Tensor<S>,
}

impl<S: Scalar> Parameter<S> {
    pub fn zeros(shape: &[usize]) -> Self {
        Parameter {
            value: Tensor::zeros(shape),
            grad: Tensor::zeros(shape),
            rms_cache: Tensor::zeros(shape),
        }
    }

    pub fn from_value(value: Tensor<S>) -> Self {
        let grad = Tensor::zeros(value.shape());
        let rms_cache = Tensor::zeros(value.shape());
        Parameter {
            value,
            grad,
            rms_cache,
        }
    }

    pub fn zero_grad(&mut self) {
        self.grad.fill(S::ZERO);
    }
}

/// Anything that exposes an ordered list of parameters. The order defines the
/// initialization draw order and the entry indexing used by the
/// finite-difference checker, so implementations must keep it stable.
pub trait ParamCollection<S: Scalar> {
    fn param_count(&self) -> usize;
    fn param(&self, index: usize) -> &Parameter<S>;
    fn param_mut(&mut self, index: usize) -> &mut Parameter<S>;

    /// Total number of scalar entries across all parameter values.
    fn entry_count(&self) -> usize {
        (0..self.param_count()).map(|i| self.param(i).value.len()).sum()
    }
}

impl<S: Scalar> ParamCollection<S> for Vec<Parameter<S>> {
    fn param_count(&self) -> usize {
        self.len()
    }
    fn param(&self, index: usize) -> &Parameter<S> {
        &self[index]
    }
    fn param_mut(&mut self, index: usize) -> &mut Parameter<S> {
        &mut self[index]
    }
}

/// Fills every parameter value with i.i.d. draws from
/// `U(-half_range, half_range)`. Biases are treated the same as weights.
/// Deterministic given the generator state.
pub fn init_uniform<S: Scalar, C: ParamCollection<S> + ?Sized>(
    params: &mut C,
    half_range: f64,
    rng: &mut RngState,
) {
    for i in 0..params.param_count() {
        for v in params.param_mut(i).value.data_mut() {
            *v = S::from_f64(rng.uniform_symmetric(half_range));
        }
    }
}

/// Global L2-norm gradient clipping. Computes the norm over all gradients
/// (accumulated in f64 regardless of the working precision); if it exceeds
/// `threshold`, rescales every gradient by `threshold / norm`. Returns the
/// pre-clip norm. An empty collection returns 0.
pub fn clip_gradients<S: Scalar, C: ParamCollection<S> + ?Sized>(
    params: &mut C,
    threshold: f64,
) -> f64 {
    debug_assert!(threshold > 0.0);
    let mut sum_sq = 0.0f64;
    for i in 0..params.param_count() {
        for g in params.param(i).grad.data() {
            let g = g.to_f64();
            sum_sq += g * g;
        }
    }
    let norm = sum_sq.sqrt();
    if norm > threshold {
        let scale = S::from_f64(threshold / norm);
        for i in 0..params.param_count() {
            for g in params.param_mut(i).grad.data_mut() {
                *g *= scale;
            }
        }
    }
    norm
}

/// One RMSProp update over every parameter, entry by entry:
/// `cache <- smoothing*cache + (1-smoothing)*g^2`;
/// `value <- value - lr*g / (sqrt(cache) + eps)`. Gradients are zeroed
/// afterwards.
pub fn rmsprop_step<S: Scalar, C: ParamCollection<S> + ?Sized>(
    params: &mut C,
    lr: f64,
    smoothing: f64,
    eps: f64,
) {
    debug_assert!(lr > 0.0 && smoothing > 0.0 && smoothing < 1.0);
    let lr = S::from_f64(lr);
    let smoothing = S::from_f64(smoothing);
    let one_minus = S::ONE - smoothing;
    let eps = S::from_f64(eps);
    for i in 0..params.param_count() {
        let p = params.param_mut(i);
        let grads = p.grad.data_mut();
        let caches = p.rms_cache.data_mut();
        let values = p.value.data_mut();
        for ((g, c), v) in grads.iter_mut().zip(caches).zip(values) {
            *c = smoothing * *c + one_minus * *g * *g;
            *v -= lr * *g / (c.sqrt() + eps);
            *g = S::ZERO;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::RngState;

    fn single(values: Vec<f64>) -> Vec<Parameter<f64>> {
        let n = values.len();
        let mut p = Parameter::zeros(&[n]);
        p.grad = Tensor::vector(values);
        alloc::vec![p]
    }

    #[test]
    fn clip_leaves_small_gradients_alone() {
        let mut params = single(alloc::vec![1.2, 1.6]); // norm 2
        let norm = clip_gradients(&mut params, 5.0);
        assert!((norm - 2.0).abs() < 1e-12);
        assert_eq!(params[0].grad.data(), &[1.2, 1.6]);
    }

    #[test]
    fn clip_rescales_to_threshold() {
        let mut params = single(alloc::vec![6.0, 8.0]); // norm 10
        let norm = clip_gradients(&mut params, 5.0);
        assert!((norm - 10.0).abs() < 1e-12);
        assert_eq!(params[0].grad.data(), &[3.0, 4.0]);
        // Idempotence: clipping again changes nothing.
        let norm2 = clip_gradients(&mut params, 5.0);
        assert!((norm2 - 5.0).abs() < 1e-9);
        assert_eq!(params[0].grad.data(), &[3.0, 4.0]);
    }

    #[test]
    fn clip_zero_gradients_returns_zero() {
        let mut params = single(alloc::vec![0.0, 0.0]);
        assert_eq!(clip_gradients(&mut params, 5.0), 0.0);
        assert_eq!(params[0].grad.data(), &[0.0, 0.0]);
    }

    #[test]
    fn rmsprop_zero_gradient_is_noop_on_values() {
        let mut params = single(alloc::vec![0.0]);
        params[0].value = Tensor::vector(alloc::vec![1.5]);
        rmsprop_step(&mut params, 0.01, 0.95, RMSPROP_EPS);
        assert_eq!(params[0].value.data(), &[1.5]);
    }

    #[test]
    fn rmsprop_single_step_hand_computation() {
        // g = 4, fresh cache: cache = 0.05*16 = 0.8,
        // delta = 0.01*4/(sqrt(0.8)+1e-8) ~= 0.0447214.
        let mut params = single(alloc::vec![4.0]);
        rmsprop_step(&mut params, 0.01, 0.95, RMSPROP_EPS);
        assert!((params[0].rms_cache.data()[0] - 0.8).abs() < 1e-12);
        assert!((params[0].value.data()[0] + 0.0447214).abs() < 1e-6);
        // Gradient zeroed after the step.
        assert_eq!(params[0].grad.data(), &[0.0]);
    }

    #[test]
    fn rmsprop_repeated_gradient_converges_to_lr_steps() {
        // cache -> g^2, so |delta| -> lr regardless of |g|.
        let mut params = single(alloc::vec![0.0]);
        let lr = 0.01;
        let mut prev = params[0].value.data()[0];
        let mut last_step = 0.0;
        for _ in 0..600 {
            params[0].grad = Tensor::vector(alloc::vec![3.0]);
            rmsprop_step(&mut params, lr, 0.95, RMSPROP_EPS);
            let cur = params[0].value.data()[0];
            last_step = prev - cur;
            prev = cur;
        }
        assert!((last_step - lr).abs() < 0.05 * lr, "step {last_step}");
    }

    #[test]
    fn init_uniform_range_and_determinism() {
        let mut a = alloc::vec![Parameter::<f64>::zeros(&[100_000])];
        let mut b = alloc::vec![Parameter::<f64>::zeros(&[100_000])];
        init_uniform(&mut a, 0.08, &mut RngState::new(9));
        init_uniform(&mut b, 0.08, &mut RngState::new(9));
        assert_eq!(a[0].value, b[0].value);
        let data = a[0].value.data();
        assert!(data.iter().all(|v| (-0.08..0.08).contains(v)));
        // CLT bound: |mean| < 0.002 with overwhelming probability at 1e5 draws.
        let mean: f64 = data.iter().sum::<f64>() / data.len() as f64;
        assert!(mean.abs() < 0.002, "mean {mean}");
    }
}
