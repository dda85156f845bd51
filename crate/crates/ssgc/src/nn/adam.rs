//! Adam optimizer over [`ParamSet`]-shaped blocks.

use super::model::ParamSet;

/// First/second moment estimates mirroring a parameter set.
#[derive(Debug, Clone)]
pub struct AdamState {
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
    step: u64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl AdamState {
    pub fn new(params: &ParamSet) -> Self {
        let shapes: Vec<Vec<f64>> = params
            .blocks
            .iter()
            .flat_map(|b| [vec![0.0; b.weights.len()], vec![0.0; b.exempt.len()]])
            .collect();
        AdamState {
            m: shapes.clone(),
            v: shapes,
            step: 0,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }

    /// Drop all moment history and restart the step counter.
    pub fn reset(&mut self) {
        for block in self.m.iter_mut().chain(self.v.iter_mut()) {
            block.iter_mut().for_each(|x| *x = 0.0);
        }
        self.step = 0;
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }
}

/// One bias-corrected Adam update of every block in `params`.
pub fn adam_step(params: &mut ParamSet, grads: &ParamSet, state: &mut AdamState, lr: f64) {
    state.step += 1;
    let t = state.step as i32;
    let bc1 = 1.0 - state.beta1.powi(t);
    let bc2 = 1.0 - state.beta2.powi(t);
    let mut slot = 0;
    for (block, grad_block) in params.blocks.iter_mut().zip(&grads.blocks) {
        for (values, grads) in [
            (&mut block.weights, &grad_block.weights),
            (&mut block.exempt, &grad_block.exempt),
        ] {
            debug_assert_eq!(values.len(), grads.len());
            let m = &mut state.m[slot];
            let v = &mut state.v[slot];
            for i in 0..values.len() {
                let g = grads[i];
                m[i] = state.beta1 * m[i] + (1.0 - state.beta1) * g;
                v[i] = state.beta2 * v[i] + (1.0 - state.beta2) * g * g;
                let m_hat = m[i] / bc1;
                let v_hat = v[i] / bc2;
                values[i] -= lr * m_hat / (v_hat.sqrt() + state.epsilon);
            }
            slot += 1;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::model::ParamBlock;

    fn single_block(values: Vec<f64>) -> ParamSet {
        ParamSet {
            blocks: vec![ParamBlock {
                weights: values,
                exempt: Vec::new(),
            }],
        }
    }

    #[test]
    fn zero_gradient_leaves_parameters_unchanged() {
        let mut params = single_block(vec![1.0, -2.0, 0.5]);
        let grads = single_block(vec![0.0; 3]);
        let mut state = AdamState::new(&params);
        for _ in 0..10 {
            adam_step(&mut params, &grads, &mut state, 0.1);
        }
        assert_eq!(params.blocks[0].weights, vec![1.0, -2.0, 0.5]);
    }

    #[test]
    fn first_step_magnitude_is_learning_rate() {
        // With fresh moments, m_hat / (sqrt(v_hat) + eps) = g / (|g| + eps),
        // so |update| is roughly lr regardless of the gradient scale.
        for g in [1e-4, 1.0, 1e4] {
            let mut params = single_block(vec![0.0]);
            let grads = single_block(vec![g]);
            let mut state = AdamState::new(&params);
            adam_step(&mut params, &grads, &mut state, 0.01);
            let update = params.blocks[0].weights[0].abs();
            assert!(
                (update - 0.01).abs() < 1e-5,
                "g={g} update={update}"
            );
        }
    }

    #[test]
    fn converges_on_scalar_quadratic() {
        // Minimize (x - 3)^2 with lr 0.01: |x - 3| < 1e-3 within 2000 steps.
        let mut params = single_block(vec![0.0]);
        let mut state = AdamState::new(&params);
        for _ in 0..2000 {
            let x = params.blocks[0].weights[0];
            let grads = single_block(vec![2.0 * (x - 3.0)]);
            adam_step(&mut params, &grads, &mut state, 0.01);
        }
        let x = params.blocks[0].weights[0];
        assert!((x - 3.0).abs() < 1e-3, "ended at {x}");
    }
}
