use super::{NetError, Tensor};

/// Adam constants. The defaults are the training settings used throughout:
/// alpha 1e-4, beta1 0.9, beta2 0.999, epsilon 1e-3.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamConfig {
    pub alpha: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            alpha: 1e-4,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-3,
        }
    }
}

/// Per-parameter first/second moments plus the shared timestep.
#[derive(Debug, Clone)]
pub struct AdamState {
    pub config: AdamConfig,
    m: Vec<Tensor>,
    v: Vec<Tensor>,
    t: u64,
}

impl AdamState {
    pub fn new(config: AdamConfig, params: &[Tensor]) -> AdamState {
        AdamState {
            config,
            m: params.iter().map(Tensor::zeros_like).collect(),
            v: params.iter().map(Tensor::zeros_like).collect(),
            t: 0,
        }
    }

    pub fn timestep(&self) -> u64 {
        self.t
    }
}

/// Standard bias-corrected Adam update:
/// `theta -= alpha * m_hat / (sqrt(v_hat) + epsilon)`.
pub fn adam_step(
    state: &mut AdamState,
    params: &mut [Tensor],
    grads: &[Tensor],
) -> Result<(), NetError> {
    if params.len() != state.m.len() || grads.len() != state.m.len() {
        return Err(NetError::ShapeMismatch {
            context: "adam_step",
            detail: format!(
                "state tracks {} tensors, got {} params / {} grads",
                state.m.len(),
                params.len(),
                grads.len()
            ),
        });
    }
    state.t += 1;
    let AdamConfig {
        alpha,
        beta1,
        beta2,
        epsilon,
    } = state.config;
    let bias1 = 1.0 - beta1.powi(state.t as i32);
    let bias2 = 1.0 - beta2.powi(state.t as i32);

    for ((param, grad), (m, v)) in params
        .iter_mut()
        .zip(grads)
        .zip(state.m.iter_mut().zip(state.v.iter_mut()))
    {
        if param.len() != grad.len() {
            return Err(NetError::ShapeMismatch {
                context: "adam_step",
                detail: format!("param len {} vs grad len {}", param.len(), grad.len()),
            });
        }
        let (pd, gd) = (param.data_mut(), grad.data());
        let (md, vd) = (m.data_mut(), v.data_mut());
        for k in 0..pd.len() {
            let g = gd[k];
            md[k] = beta1 * md[k] + (1.0 - beta1) * g;
            vd[k] = beta2 * vd[k] + (1.0 - beta2) * g * g;
            let m_hat = md[k] / bias1;
            let v_hat = vd[k] / bias2;
            pd[k] -= alpha * m_hat / (v_hat.sqrt() + epsilon);
        }
        param.check_finite("adam_step")?;
    }
    Ok(())
}

/// Scales all gradients so their global L2 norm is at most `max_norm`.
/// A non-positive `max_norm` disables clipping.
pub fn clip_global_norm(grads: &mut [Tensor], max_norm: f64) -> f64 {
    let norm: f64 = grads
        .iter()
        .map(|g| g.data().iter().map(|v| v * v).sum::<f64>())
        .sum::<f64>()
        .sqrt();
    if max_norm > 0.0 && norm > max_norm {
        let scale = max_norm / norm;
        for g in grads.iter_mut() {
            for v in g.data_mut() {
                *v *= scale;
            }
        }
    }
    norm
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_gradient_is_identity() {
        let mut params = vec![Tensor::new(vec![2], vec![0.3, -0.7]).unwrap()];
        let grads = vec![Tensor::zeros(vec![2])];
        let mut state = AdamState::new(AdamConfig::default(), &params);
        let before = params[0].clone();
        for _ in 0..5 {
            adam_step(&mut state, &mut params, &grads).unwrap();
        }
        assert_eq!(params[0], before);
    }

    #[test]
    fn first_step_matches_hand_computation() {
        // Scalar parameter, gradient 1, fresh state: m_hat = v_hat = 1, so
        // the update is exactly -alpha / (1 + epsilon).
        let mut params = vec![Tensor::new(vec![1], vec![0.0]).unwrap()];
        let grads = vec![Tensor::new(vec![1], vec![1.0]).unwrap()];
        let mut state = AdamState::new(AdamConfig::default(), &params);
        adam_step(&mut state, &mut params, &grads).unwrap();
        let expected = -1e-4 / 1.001;
        assert!((params[0].data()[0] - expected).abs() < 1e-18);
        assert!((expected - -9.990_009_990_009_99e-5).abs() < 1e-12);
    }

    #[test]
    fn updates_are_deterministic() {
        let run = || {
            let mut params = vec![Tensor::new(vec![3], vec![0.1, 0.2, 0.3]).unwrap()];
            let grads = vec![Tensor::new(vec![3], vec![0.5, -0.5, 1.5]).unwrap()];
            let mut state = AdamState::new(AdamConfig::default(), &params);
            for _ in 0..10 {
                adam_step(&mut state, &mut params, &grads).unwrap();
            }
            params[0].data().to_vec()
        };
        assert_eq!(run(), run());
    }

    #[test]
    fn clip_reduces_large_norms_only() {
        let mut grads = vec![Tensor::new(vec![2], vec![3.0, 4.0]).unwrap()];
        let norm = clip_global_norm(&mut grads, 10.0);
        assert!((norm - 5.0).abs() < 1e-12);
        assert_eq!(grads[0].data(), &[3.0, 4.0]);

        let norm = clip_global_norm(&mut grads, 1.0);
        assert!((norm - 5.0).abs() < 1e-12);
        let clipped: f64 = grads[0].data().iter().map(|v| v * v).sum::<f64>().sqrt();
        assert!((clipped - 1.0).abs() < 1e-12);

        let mut grads = vec![Tensor::new(vec![2], vec![3.0, 4.0]).unwrap()];
        clip_global_norm(&mut grads, 0.0);
        assert_eq!(grads[0].data(), &[3.0, 4.0], "non-positive max disables clipping");
    }
}
