//! Cardinality-constrained weight pruning by ADMM splitting.
//!
//! Training under a per-layer cardinality budget is split into three
//! repeating updates: a `w` step that minimizes the loss plus a quadratic
//! penalty tying the weights to an auxiliary variable, a `z` step that
//! projects onto the budget, and a dual `eta` ascent step. After the loop a
//! hard mask freezes the surviving support for retraining.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::nn::{adam_step, AdamState, ParamSet};

#[derive(Debug, Error)]
pub enum PruneError {
    #[error("loss became non-finite during the w step (iteration {step})")]
    NonFiniteLoss { step: usize },
}

/// The operator applied to each weight block before the cardinality
/// constraint. `Select` exposes only the listed coordinates to pruning and
/// leaves the rest untouched; both variants satisfy `op * op^T = I`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
pub enum Omega {
    #[default]
    Identity,
    Select(Vec<usize>),
}

impl Omega {
    pub fn out_dim(&self, in_dim: usize) -> usize {
        match self {
            Omega::Identity => in_dim,
            Omega::Select(idx) => idx.len(),
        }
    }

    /// `v = op * w`.
    pub fn apply(&self, w: &[f64]) -> Vec<f64> {
        match self {
            Omega::Identity => w.to_vec(),
            Omega::Select(idx) => idx.iter().map(|&i| w[i]).collect(),
        }
    }

    /// `w = op^T * v`.
    pub fn apply_transpose(&self, v: &[f64], in_dim: usize) -> Vec<f64> {
        match self {
            Omega::Identity => v.to_vec(),
            Omega::Select(idx) => {
                let mut out = vec![0.0; in_dim];
                for (slot, &i) in idx.iter().enumerate() {
                    out[i] = v[slot];
                }
                out
            }
        }
    }

    /// Weight-space keep mask from the support of `z`. Coordinates the
    /// operator does not expose are always kept.
    pub fn mask_from_support(&self, z: &[f64], in_dim: usize) -> Vec<bool> {
        match self {
            Omega::Identity => z.iter().map(|&v| v != 0.0).collect(),
            Omega::Select(idx) => {
                let mut mask = vec![true; in_dim];
                for (slot, &i) in idx.iter().enumerate() {
                    mask[i] = z[slot] != 0.0;
                }
                mask
            }
        }
    }
}

/// Pruning hyperparameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PruneConfig {
    /// Fraction of each prunable block allowed to stay nonzero, in (0, 1].
    pub connection_rate: f64,
    /// Quadratic penalty weight.
    pub rho: f64,
    /// Number of w/z/eta cycles.
    pub admm_outer_iters: usize,
    /// Optimizer steps per w subproblem.
    pub w_inner_steps: usize,
    pub omega: Omega,
    /// Epochs of masked retraining after the hard mask.
    pub retrain_epochs: usize,
    /// Also prune bias and node-scale blocks.
    pub include_exempt: bool,
}

impl PruneConfig {
    pub fn new(connection_rate: f64) -> Self {
        PruneConfig {
            connection_rate,
            // The penalty must be strong enough to actually pull weights
            // toward the projected support within the inner step budget;
            // far weaker values let the dual accumulate until the support
            // churns and the mask degrades below plain magnitude pruning.
            rho: 0.5,
            admm_outer_iters: 20,
            w_inner_steps: 30,
            omega: Omega::Identity,
            retrain_epochs: 10,
            include_exempt: false,
        }
    }
}

/// Per-layer cardinality budget: `ceil(rate * count)`.
pub fn budget_for(rate: f64, count: usize) -> usize {
    (rate * count as f64).ceil() as usize
}

/// Which parameter vector of a layer a prune block addresses.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BlockRef {
    pub layer: usize,
    pub exempt: bool,
}

/// Auxiliary variable, dual, budget, and (after masking) the frozen keep
/// mask for one pruned block.
#[derive(Debug, Clone, PartialEq)]
pub struct BlockPruneState {
    pub block: BlockRef,
    pub z: Vec<f64>,
    pub eta: Vec<f64>,
    pub budget: usize,
    pub mask: Option<Vec<bool>>,
}

/// ADMM state across all pruned blocks.
#[derive(Debug, Clone, PartialEq)]
pub struct PruneState {
    pub blocks: Vec<BlockPruneState>,
}

/// One outer-iteration record of the loop diagnostics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceRow {
    pub iteration: usize,
    pub loss: f64,
    pub lagrangian: f64,
    /// Primal residual `||z - op*w||_2` per pruned block.
    pub primal_residuals: Vec<f64>,
    /// `||eta_new - eta_old||_2` across all blocks.
    pub dual_step_norm: f64,
}

/// Diagnostics of a full ADMM run, one row per completed outer iteration.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct AdmmTrace {
    pub rows: Vec<TraceRow>,
}

impl AdmmTrace {
    /// CSV with one residual column per pruned block.
    pub fn to_csv(&self) -> String {
        let mut out = String::new();
        let n_blocks = self.rows.first().map_or(0, |r| r.primal_residuals.len());
        out.push_str("iteration,loss,lagrangian,dual_step_norm");
        for l in 0..n_blocks {
            out.push_str(&format!(",residual_{l}"));
        }
        out.push('\n');
        for row in &self.rows {
            out.push_str(&format!(
                "{},{},{},{}",
                row.iteration, row.loss, row.lagrangian, row.dual_step_norm
            ));
            for r in &row.primal_residuals {
                out.push_str(&format!(",{r}"));
            }
            out.push('\n');
        }
        out
    }
}

/// Keep the `budget` largest-magnitude entries verbatim and zero the rest.
/// Ties keep the lower index. Idempotent; the exact l2 projection onto
/// `{card(v) <= budget}`.
pub fn project_cardinality(v: &[f64], budget: usize) -> Vec<f64> {
    if budget >= v.len() {
        return v.to_vec();
    }
    let mut order: Vec<usize> = (0..v.len()).collect();
    order.sort_by(|&a, &b| {
        v[b].abs()
            .total_cmp(&v[a].abs())
            .then_with(|| a.cmp(&b))
    });
    let mut out = vec![0.0; v.len()];
    for &i in order.iter().take(budget) {
        out[i] = v[i];
    }
    out
}

/// `z = project(op*w - eta/rho)` onto the budget. `w_image` is `op * w`.
pub fn admm_z_step(w_image: &[f64], eta: &[f64], rho: f64, budget: usize) -> Vec<f64> {
    debug_assert!(rho > 0.0);
    let arg: Vec<f64> = w_image
        .iter()
        .zip(eta)
        .map(|(w, e)| w - e / rho)
        .collect();
    project_cardinality(&arg, budget)
}

/// Dual ascent `eta' = eta + rho * (z - op*w)`.
pub fn admm_eta_step(eta: &[f64], z: &[f64], w_image: &[f64], rho: f64) -> Vec<f64> {
    eta.iter()
        .zip(z.iter().zip(w_image))
        .map(|(e, (zi, wi))| e + rho * (zi - wi))
        .collect()
}

/// Augmented Lagrangian `loss + sum_l eta'(z - op*w) + (rho/2)||z - op*w||^2`.
/// Returns `+inf` when any `z` violates its budget.
pub fn lagrangian_value(
    loss: f64,
    blocks: &[(&[f64], &BlockPruneState)],
    omega: &Omega,
    rho: f64,
) -> f64 {
    let mut total = loss;
    for (w, state) in blocks {
        let nonzero = state.z.iter().filter(|v| **v != 0.0).count();
        if nonzero > state.budget {
            return f64::INFINITY;
        }
        let image = omega.apply(w);
        for i in 0..image.len() {
            let r = state.z[i] - image[i];
            total += state.eta[i] * r + 0.5 * rho * r * r;
        }
    }
    total
}

impl PruneState {
    /// Initialize budgets from the connection rate, `z` as the projection
    /// of the current weights, and zero duals.
    pub fn new(params: &ParamSet, config: &PruneConfig) -> Self {
        let mut blocks = Vec::new();
        let mut refs: Vec<BlockRef> = params
            .prunable_layers()
            .into_iter()
            .map(|layer| BlockRef { layer, exempt: false })
            .collect();
        if config.include_exempt {
            for (layer, block) in params.blocks.iter().enumerate() {
                if !block.exempt.is_empty() {
                    refs.push(BlockRef { layer, exempt: true });
                }
            }
        }
        for block in refs {
            let values = Self::values(params, block);
            let image = config.omega.apply(values);
            let budget = budget_for(config.connection_rate, image.len());
            let z = project_cardinality(&image, budget);
            let eta = vec![0.0; image.len()];
            blocks.push(BlockPruneState {
                block,
                z,
                eta,
                budget,
                mask: None,
            });
        }
        PruneState { blocks }
    }

    fn values(params: &ParamSet, block: BlockRef) -> &[f64] {
        let b = &params.blocks[block.layer];
        if block.exempt {
            &b.exempt
        } else {
            &b.weights
        }
    }

    fn values_mut(params: &mut ParamSet, block: BlockRef) -> &mut Vec<f64> {
        let b = &mut params.blocks[block.layer];
        if block.exempt {
            &mut b.exempt
        } else {
            &mut b.weights
        }
    }

    pub fn budgets(&self) -> Vec<usize> {
        self.blocks.iter().map(|b| b.budget).collect()
    }

    /// Gradient of the quadratic penalty,
    /// `rho * op^T (op*w - z - eta/rho)` per block, in parameter shape.
    /// Evaluated as `op^T (rho*(op*w - z) - eta)` so `rho = 0` degrades
    /// cleanly to plain training.
    pub fn penalty_gradient(&self, params: &ParamSet, config: &PruneConfig) -> ParamSet {
        let mut grad = ParamSet::zeros_like(params);
        for state in &self.blocks {
            let w = Self::values(params, state.block);
            let image = config.omega.apply(w);
            let v: Vec<f64> = (0..image.len())
                .map(|i| config.rho * (image[i] - state.z[i]) - state.eta[i])
                .collect();
            let g = config.omega.apply_transpose(&v, w.len());
            let target = if state.block.exempt {
                &mut grad.blocks[state.block.layer].exempt
            } else {
                &mut grad.blocks[state.block.layer].weights
            };
            for (t, gi) in target.iter_mut().zip(&g) {
                *t += gi;
            }
        }
        grad
    }

    /// Projection (`z`) then dual (`eta`) updates for every block.
    /// Returns the per-block primal residuals and the total dual step norm.
    pub fn z_and_eta_step(&mut self, params: &ParamSet, config: &PruneConfig) -> (Vec<f64>, f64) {
        let mut residuals = Vec::with_capacity(self.blocks.len());
        let mut dual_sq = 0.0;
        for state in &mut self.blocks {
            let w = Self::values(params, state.block);
            let image = config.omega.apply(w);
            state.z = admm_z_step(&image, &state.eta, config.rho, state.budget);
            assert!(
                state.z.iter().filter(|v| **v != 0.0).count() <= state.budget,
                "z violates its cardinality budget"
            );
            let new_eta = admm_eta_step(&state.eta, &state.z, &image, config.rho);
            dual_sq += new_eta
                .iter()
                .zip(&state.eta)
                .map(|(a, b)| (a - b) * (a - b))
                .sum::<f64>();
            state.eta = new_eta;
            let res = state
                .z
                .iter()
                .zip(&image)
                .map(|(z, w)| (z - w) * (z - w))
                .sum::<f64>()
                .sqrt();
            residuals.push(res);
        }
        (residuals, dual_sq.sqrt())
    }

    /// Augmented Lagrangian at the current state.
    pub fn lagrangian(&self, loss: f64, params: &ParamSet, config: &PruneConfig) -> f64 {
        let blocks: Vec<(&[f64], &BlockPruneState)> = self
            .blocks
            .iter()
            .map(|s| (Self::values(params, s.block), s))
            .collect();
        lagrangian_value(loss, &blocks, &config.omega, config.rho)
    }

    /// Zero every weight outside the support of `z` and record the masks.
    pub fn hard_mask_and_freeze(&mut self, params: &mut ParamSet, config: &PruneConfig) {
        for state in &mut self.blocks {
            let in_dim = Self::values(params, state.block).len();
            let mask = config.omega.mask_from_support(&state.z, in_dim);
            let values = Self::values_mut(params, state.block);
            for (v, keep) in values.iter_mut().zip(&mask) {
                if !keep {
                    *v = 0.0;
                }
            }
            state.mask = Some(mask);
        }
    }

    /// Zero gradients of masked-out entries so frozen weights stay zero.
    pub fn mask_gradients(&self, grads: &mut ParamSet) {
        for state in &self.blocks {
            if let Some(mask) = &state.mask {
                let target = if state.block.exempt {
                    &mut grads.blocks[state.block.layer].exempt
                } else {
                    &mut grads.blocks[state.block.layer].weights
                };
                for (g, keep) in target.iter_mut().zip(mask) {
                    if !keep {
                        *g = 0.0;
                    }
                }
            }
        }
    }

    /// Surviving nonzero count per block after masking.
    pub fn surviving_counts(&self, params: &ParamSet) -> Vec<usize> {
        self.blocks
            .iter()
            .map(|s| {
                Self::values(params, s.block)
                    .iter()
                    .filter(|v| **v != 0.0)
                    .count()
            })
            .collect()
    }
}

/// Inexact w subproblem: `steps` Adam updates on the composite gradient
/// `grad_loss + rho * op^T (op*w - z - eta/rho)`. `loss_and_grad` evaluates
/// one (mini-batch) loss and gradient at the current parameters.
pub fn admm_w_step<F>(
    params: &mut ParamSet,
    state: &PruneState,
    config: &PruneConfig,
    adam: &mut AdamState,
    lr: f64,
    steps: usize,
    mut loss_and_grad: F,
) -> Result<f64, PruneError>
where
    F: FnMut(&ParamSet) -> (f64, ParamSet),
{
    let mut last_loss = 0.0;
    for step in 0..steps {
        let (loss, mut grads) = loss_and_grad(params);
        if !loss.is_finite() {
            return Err(PruneError::NonFiniteLoss { step });
        }
        last_loss = loss;
        let penalty = state.penalty_gradient(params, config);
        grads.add_scaled(&penalty, 1.0);
        adam_step(params, &grads, adam, lr);
    }
    Ok(last_loss)
}

/// One-shot magnitude pruning: per block keep the `ceil(rate * count)`
/// largest magnitudes, zero the rest, and return the masks applied.
pub fn magnitude_prune_baseline(params: &mut ParamSet, rate: f64) -> Vec<(usize, Vec<bool>)> {
    let mut masks = Vec::new();
    for layer in params.prunable_layers() {
        let values = &mut params.blocks[layer].weights;
        let budget = budget_for(rate, values.len());
        let pruned = project_cardinality(values, budget);
        let mask: Vec<bool> = pruned.iter().map(|v| *v != 0.0).collect();
        *values = pruned;
        masks.push((layer, mask));
    }
    masks
}
