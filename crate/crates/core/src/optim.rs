//! Adam with optional decoupled weight decay, over flat f64 buffers.

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamConfig {
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

/// First and second moment buffers for one parameter tensor.
#[derive(Debug, Clone, PartialEq)]
pub struct Moments {
    pub m: Vec<f64>,
    pub v: Vec<f64>,
}

impl Moments {
    pub fn zeros(len: usize) -> Self {
        Self {
            m: vec![0.0; len],
            v: vec![0.0; len],
        }
    }
}

/// One bias-corrected Adam update. `step` is 1-based.
///
/// With `weight_decay > 0` the decay is decoupled from the gradient and
/// scaled by the same learning rate (AdamW).
pub fn adam_update(
    params: &mut [f64],
    grads: &[f64],
    moments: &mut Moments,
    cfg: &AdamConfig,
    lr: f64,
    weight_decay: f64,
    step: u64,
) {
    debug_assert_eq!(params.len(), grads.len());
    debug_assert!(step >= 1);
    let bc1 = 1.0 - cfg.beta1.powf(step as f64);
    let bc2 = 1.0 - cfg.beta2.powf(step as f64);
    for (((p, &g), m), v) in params
        .iter_mut()
        .zip(grads)
        .zip(moments.m.iter_mut())
        .zip(moments.v.iter_mut())
    {
        *m = cfg.beta1 * *m + (1.0 - cfg.beta1) * g;
        *v = cfg.beta2 * *v + (1.0 - cfg.beta2) * g * g;
        let m_hat = *m / bc1;
        let v_hat = *v / bc2;
        *p -= lr * (m_hat / (v_hat.sqrt() + cfg.epsilon) + weight_decay * *p);
    }
}

/// Linear warmup over `warmup` steps then linear decay to zero at `total`.
/// `step` is 1-based.
pub fn warmup_linear_lr(peak: f64, step: u64, warmup: u64, total: u64) -> f64 {
    if total == 0 {
        return 0.0;
    }
    if warmup > 0 && step <= warmup {
        return peak * step as f64 / warmup as f64;
    }
    if step >= total {
        return 0.0;
    }
    peak * (total - step) as f64 / (total - warmup) as f64
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn first_step_moves_by_lr() {
        // After bias correction the first update is lr * sign(g) (up to epsilon).
        let mut p = vec![1.0, -1.0];
        let mut mom = Moments::zeros(2);
        adam_update(&mut p, &[0.5, -2.0], &mut mom, &AdamConfig::default(), 0.1, 0.0, 1);
        assert!((p[0] - 0.9).abs() < 1e-6);
        assert!((p[1] + 0.9).abs() < 1e-6);
    }

    #[test]
    fn zero_lr_leaves_params_untouched() {
        let mut p = vec![0.3, 0.7];
        let before = p.clone();
        let mut mom = Moments::zeros(2);
        adam_update(&mut p, &[1.0, 1.0], &mut mom, &AdamConfig::default(), 0.0, 0.1, 1);
        assert_eq!(p, before);
    }

    #[test]
    fn decoupled_decay_shrinks_with_zero_grad() {
        let mut p = vec![2.0];
        let mut mom = Moments::zeros(1);
        adam_update(&mut p, &[0.0], &mut mom, &AdamConfig::default(), 0.1, 0.5, 1);
        assert!((p[0] - (2.0 - 0.1 * 0.5 * 2.0)).abs() < 1e-12);
    }

    #[test]
    fn schedule_shape() {
        let (w, t) = (10, 100);
        assert_eq!(warmup_linear_lr(1.0, 5, w, t), 0.5);
        assert_eq!(warmup_linear_lr(1.0, 10, w, t), 1.0);
        assert!((warmup_linear_lr(1.0, 55, w, t) - 0.5).abs() < 1e-12);
        assert_eq!(warmup_linear_lr(1.0, 100, w, t), 0.0);
        assert_eq!(warmup_linear_lr(1.0, 3, 0, 4), 0.25);
    }
}
