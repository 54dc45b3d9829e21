use super::tensor::{Element, Tensor};
use super::AutogradError;

/// SGD with classical momentum. Weight decay is folded into the gradient
/// before the velocity update.
#[derive(Debug, Clone, PartialEq)]
pub struct OptimizerState<T> {
    pub lr: f64,
    pub momentum: f64,
    pub weight_decay: f64,
    velocity: Vec<Tensor<T>>,
}

impl<T: Element> OptimizerState<T> {
    /// Zero velocity for each parameter.
    pub fn new(
        lr: f64,
        momentum: f64,
        weight_decay: f64,
        params: &[Tensor<T>],
    ) -> Result<Self, AutogradError> {
        if !(lr > 0.0 && lr.is_finite()) {
            return Err(AutogradError::StateMismatch(format!("learning rate {lr} must be positive")));
        }
        if !(0.0..1.0).contains(&momentum) {
            return Err(AutogradError::StateMismatch(format!("momentum {momentum} not in [0,1)")));
        }
        if !(weight_decay >= 0.0 && weight_decay.is_finite()) {
            return Err(AutogradError::StateMismatch(format!(
                "weight decay {weight_decay} must be non-negative"
            )));
        }
        Ok(OptimizerState {
            lr,
            momentum,
            weight_decay,
            velocity: params.iter().map(|p| Tensor::zeros(p.shape())).collect(),
        })
    }

    pub fn velocity(&self) -> &[Tensor<T>] {
        &self.velocity
    }

    pub fn velocity_mut(&mut self) -> &mut [Tensor<T>] {
        &mut self.velocity
    }
}

/// `v ← μ·v + (g + λ·p)`, `p ← p − η·v`
pub fn sgd_step<T: Element>(
    params: &mut [Tensor<T>],
    grads: &[Option<&Tensor<T>>],
    state: &mut OptimizerState<T>,
) -> Result<(), AutogradError> {
    if state.velocity.len() != params.len() {
        return Err(AutogradError::StateMismatch(format!(
            "{} velocity buffers for {} parameters",
            state.velocity.len(),
            params.len()
        )));
    }
    check_grads(params, grads, &state.velocity)?;
    let lr = T::of(state.lr);
    let mo = T::of(state.momentum);
    let wd = T::of(state.weight_decay);
    for ((p, g), v) in params.iter_mut().zip(grads).zip(state.velocity.iter_mut()) {
        let g = g.expect("checked above");
        for ((pv, &gv), vv) in p.data_mut().iter_mut().zip(g.data()).zip(v.data_mut()) {
            *vv = mo * *vv + (gv + wd * *pv);
            *pv = *pv - lr * *vv;
        }
    }
    Ok(())
}

/// Adam with L2 weight decay folded into the gradient.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState<T> {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
    step: u64,
    first: Vec<Tensor<T>>,
    second: Vec<Tensor<T>>,
}

impl<T: Element> AdamState<T> {
    pub fn new(
        lr: f64,
        beta1: f64,
        beta2: f64,
        eps: f64,
        weight_decay: f64,
        params: &[Tensor<T>],
    ) -> Result<Self, AutogradError> {
        if !(lr > 0.0 && lr.is_finite()) {
            return Err(AutogradError::StateMismatch(format!("learning rate {lr} must be positive")));
        }
        for (name, b) in [("beta1", beta1), ("beta2", beta2)] {
            if !(0.0..1.0).contains(&b) {
                return Err(AutogradError::StateMismatch(format!("{name} {b} not in [0,1)")));
            }
        }
        if !(eps > 0.0 && eps.is_finite()) {
            return Err(AutogradError::StateMismatch(format!("eps {eps} must be positive")));
        }
        if !(weight_decay >= 0.0 && weight_decay.is_finite()) {
            return Err(AutogradError::StateMismatch(format!(
                "weight decay {weight_decay} must be non-negative"
            )));
        }
        let zeros = || params.iter().map(|p| Tensor::zeros(p.shape())).collect();
        Ok(AdamState {
            lr,
            beta1,
            beta2,
            eps,
            weight_decay,
            step: 0,
            first: zeros(),
            second: zeros(),
        })
    }

    pub fn steps(&self) -> u64 {
        self.step
    }
}

/// `m ← β₁m + (1−β₁)g`, `v ← β₂v + (1−β₂)g²`, `p ← p − η·m̂/(√v̂ + ε)`
/// with bias-corrected moments and `g` including `λ·p`.
pub fn adam_step<T: Element>(
    params: &mut [Tensor<T>],
    grads: &[Option<&Tensor<T>>],
    state: &mut AdamState<T>,
) -> Result<(), AutogradError> {
    if state.first.len() != params.len() {
        return Err(AutogradError::StateMismatch(format!(
            "{} moment buffers for {} parameters",
            state.first.len(),
            params.len()
        )));
    }
    check_grads(params, grads, &state.first)?;
    state.step += 1;
    let t = state.step as i32;
    let c1 = 1.0 - state.beta1.powi(t);
    let c2 = 1.0 - state.beta2.powi(t);
    let (b1, b2) = (T::of(state.beta1), T::of(state.beta2));
    let (one, wd, eps) = (T::one(), T::of(state.weight_decay), T::of(state.eps));
    let step = T::of(state.lr / c1);
    let c2_sqrt = T::of(c2.sqrt());
    for (((p, g), m), v) in params
        .iter_mut()
        .zip(grads)
        .zip(state.first.iter_mut())
        .zip(state.second.iter_mut())
    {
        let g = g.expect("checked above");
        for (((pv, &gv), mv), vv) in p
            .data_mut()
            .iter_mut()
            .zip(g.data())
            .zip(m.data_mut())
            .zip(v.data_mut())
        {
            let gv = gv + wd * *pv;
            *mv = b1 * *mv + (one - b1) * gv;
            *vv = b2 * *vv + (one - b2) * gv * gv;
            *pv = *pv - step * *mv / (vv.sqrt() / c2_sqrt + eps);
        }
    }
    Ok(())
}

fn check_grads<T: Element>(
    params: &[Tensor<T>],
    grads: &[Option<&Tensor<T>>],
    buffers: &[Tensor<T>],
) -> Result<(), AutogradError> {
    if grads.len() != params.len() {
        return Err(AutogradError::MissingGradient(grads.len().min(params.len())));
    }
    for (i, (p, g)) in params.iter().zip(grads).enumerate() {
        let g = g.ok_or(AutogradError::MissingGradient(i))?;
        if g.shape() != p.shape() {
            return Err(AutogradError::ShapeMismatch {
                op: "optimizer step",
                lhs: p.shape().to_vec(),
                rhs: g.shape().to_vec(),
            });
        }
        if buffers[i].shape() != p.shape() {
            return Err(AutogradError::StateMismatch(format!(
                "buffer {i} has shape {:?}, parameter has {:?}",
                buffers[i].shape(),
                p.shape()
            )));
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn one(v: f64) -> Tensor<f64> {
        Tensor::scalar(v)
    }

    #[test]
    fn plain_step() {
        let mut p = vec![one(1.0)];
        let g = one(1.0);
        let mut st = OptimizerState::new(0.1, 0.0, 0.0, &p).unwrap();
        sgd_step(&mut p, &[Some(&g)], &mut st).unwrap();
        assert!((p[0].item() - 0.9).abs() < 1e-15);
    }

    #[test]
    fn momentum_step_from_unit_velocity() {
        let mut p = vec![one(1.0)];
        let g = one(0.0);
        let mut st = OptimizerState::new(0.1, 0.9, 0.0, &p).unwrap();
        st.velocity_mut()[0] = one(1.0);
        sgd_step(&mut p, &[Some(&g)], &mut st).unwrap();
        assert!((st.velocity()[0].item() - 0.9).abs() < 1e-15);
        assert!((p[0].item() - 0.91).abs() < 1e-15);
    }

    #[test]
    fn weight_decay_only() {
        let mut p = vec![one(1.0)];
        let g = one(0.0);
        let mut st = OptimizerState::new(0.1, 0.0, 0.0001, &p).unwrap();
        sgd_step(&mut p, &[Some(&g)], &mut st).unwrap();
        assert!((p[0].item() - 0.99999).abs() < 1e-15);
    }

    #[test]
    fn missing_gradient_rejected() {
        let mut p = vec![one(1.0), one(2.0)];
        let g = one(0.0);
        let mut st = OptimizerState::new(0.1, 0.0, 0.0, &p).unwrap();
        assert_eq!(
            sgd_step(&mut p, &[Some(&g), None], &mut st),
            Err(AutogradError::MissingGradient(1))
        );
        assert_eq!(
            sgd_step(&mut p, &[Some(&g)], &mut st),
            Err(AutogradError::MissingGradient(1))
        );
        assert_eq!(p[0].item(), 1.0, "no partial update on error");
    }

    #[test]
    fn invalid_hyperparameters_rejected() {
        let p = vec![one(1.0)];
        assert!(OptimizerState::new(0.0, 0.0, 0.0, &p).is_err());
        assert!(OptimizerState::new(0.1, 1.0, 0.0, &p).is_err());
        assert!(OptimizerState::new(0.1, 0.5, -1.0, &p).is_err());
    }

    #[test]
    fn adam_first_step_moves_by_lr() {
        let mut p = vec![one(1.0)];
        let g = one(0.5);
        let mut st = AdamState::new(0.1, 0.9, 0.999, 1e-12, 0.0, &p).unwrap();
        adam_step(&mut p, &[Some(&g)], &mut st).unwrap();
        assert!((p[0].item() - 0.9).abs() < 1e-9);
        assert_eq!(st.steps(), 1);
    }

    #[test]
    fn adam_is_invariant_to_gradient_scale() {
        let run = |scale: f64| {
            let mut p = vec![one(1.0)];
            let mut st = AdamState::new(0.01, 0.9, 0.999, 1e-30, 0.0, &p).unwrap();
            for k in 0..20 {
                let g = one(scale * (1.0 + k as f64 * 0.1) * p[0].item());
                adam_step(&mut p, &[Some(&g)], &mut st).unwrap();
            }
            p[0].item()
        };
        assert!((run(1.0) - run(1e-3)).abs() < 1e-9);
    }
}
