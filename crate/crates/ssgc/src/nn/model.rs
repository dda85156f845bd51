//! Model specification, parameter storage, full forward/backward passes,
//! and exact parameter accounting.

use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use super::layers::{
    aggregate, conv1d_backward, conv1d_forward, dense_backward, dense_forward, maxpool2_backward,
    maxpool2_forward, node_scale_backward, node_scale_forward, relu_backward, relu_forward,
    LayerSpec, Tensor,
};
use super::loss::softmax_cross_entropy;
use crate::graph::SparseGraph;

#[derive(Debug, Error)]
pub enum NnError {
    #[error("invalid model: {0}")]
    InvalidSpec(String),
    #[error("shape mismatch at layer {layer}: expected {expected}, got {got}")]
    ShapeMismatch {
        layer: usize,
        expected: String,
        got: String,
    },
    #[error("label {label} out of range for {classes} classes")]
    LabelOutOfRange { label: usize, classes: usize },
}

/// Parameters of one layer. `weights` is the prunable block (convolution
/// kernels, dense weight matrices); `exempt` holds parameters that are
/// trained but never pruned (biases, per-node scales).
#[derive(Debug, Clone, PartialEq)]
pub struct ParamBlock {
    pub weights: Vec<f64>,
    pub exempt: Vec<f64>,
}

impl ParamBlock {
    fn empty() -> Self {
        ParamBlock {
            weights: Vec::new(),
            exempt: Vec::new(),
        }
    }
}

/// All parameters of a model, one block per layer (empty blocks for layers
/// without parameters). The same shape doubles as a gradient container.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamSet {
    pub blocks: Vec<ParamBlock>,
}

impl ParamSet {
    pub fn zeros_like(other: &ParamSet) -> Self {
        ParamSet {
            blocks: other
                .blocks
                .iter()
                .map(|b| ParamBlock {
                    weights: vec![0.0; b.weights.len()],
                    exempt: vec![0.0; b.exempt.len()],
                })
                .collect(),
        }
    }

    /// `self += other * scale`, blockwise.
    pub fn add_scaled(&mut self, other: &ParamSet, scale: f64) {
        for (a, b) in self.blocks.iter_mut().zip(&other.blocks) {
            for (x, y) in a.weights.iter_mut().zip(&b.weights) {
                *x += y * scale;
            }
            for (x, y) in a.exempt.iter_mut().zip(&b.exempt) {
                *x += y * scale;
            }
        }
    }

    pub fn scale(&mut self, s: f64) {
        for b in self.blocks.iter_mut() {
            b.weights.iter_mut().for_each(|x| *x *= s);
            b.exempt.iter_mut().for_each(|x| *x *= s);
        }
    }

    /// Total prunable weight count across all blocks.
    pub fn weight_count(&self) -> usize {
        self.blocks.iter().map(|b| b.weights.len()).sum()
    }

    /// Number of nonzero prunable weights.
    pub fn nonzero_weight_count(&self) -> usize {
        self.blocks
            .iter()
            .map(|b| b.weights.iter().filter(|w| **w != 0.0).count())
            .sum()
    }

    /// Indices of layers that own a nonempty prunable block.
    pub fn prunable_layers(&self) -> Vec<usize> {
        self.blocks
            .iter()
            .enumerate()
            .filter(|(_, b)| !b.weights.is_empty())
            .map(|(i, _)| i)
            .collect()
    }

    pub fn all_finite(&self) -> bool {
        self.blocks
            .iter()
            .all(|b| b.weights.iter().chain(&b.exempt).all(|x| x.is_finite()))
    }
}

/// Ordered layer stack plus input/output arity.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub layers: Vec<LayerSpec>,
    pub input_nodes: usize,
    pub class_count: usize,
}

/// Per-layer and total parameter counts.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamCounts {
    /// One row per layer with a prunable weight block, in network order.
    pub per_layer: Vec<LayerCount>,
    pub trainable_total: usize,
    /// Biases, node scales, and declared aggregation buffers.
    pub non_trainable: usize,
    pub total: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayerCount {
    pub layer_index: usize,
    pub kind: String,
    pub weights: usize,
}

/// Exact integer parameter accounting for a model.
pub fn count_params(spec: &ModelSpec) -> ParamCounts {
    let mut per_layer = Vec::new();
    let mut non_trainable = 0usize;
    let mut len = spec.input_nodes;
    for (idx, layer) in spec.layers.iter().enumerate() {
        match *layer {
            LayerSpec::Aggregate {
                hops,
                count_buffers,
                ..
            } => {
                if count_buffers {
                    non_trainable += hops * len;
                }
            }
            LayerSpec::NodeScale { n } => non_trainable += n,
            LayerSpec::Conv1d {
                in_ch,
                out_ch,
                kernel,
                bias,
            } => {
                per_layer.push(LayerCount {
                    layer_index: idx,
                    kind: "conv1d".into(),
                    weights: out_ch * in_ch * kernel,
                });
                if bias {
                    non_trainable += out_ch;
                }
            }
            LayerSpec::MaxPool2 => len /= 2,
            LayerSpec::Relu => {}
            LayerSpec::Dense {
                in_dim,
                out_dim,
                bias,
            } => {
                per_layer.push(LayerCount {
                    layer_index: idx,
                    kind: "dense".into(),
                    weights: out_dim * in_dim,
                });
                if bias {
                    non_trainable += out_dim;
                }
            }
        }
    }
    let trainable_total = per_layer.iter().map(|l| l.weights).sum();
    ParamCounts {
        per_layer,
        trainable_total,
        non_trainable,
        total: trainable_total + non_trainable,
    }
}

/// Forward-pass intermediates needed by [`ModelSpec::backward`].
pub struct Cache {
    entries: Vec<CacheEntry>,
    pub logits: Vec<f64>,
}

enum CacheEntry {
    Propagated,
    NodeScale { input: Tensor },
    Conv1d { input: Tensor },
    MaxPool2 { argmax: Vec<usize>, in_ch: usize, in_len: usize },
    Relu { input: Tensor },
    Dense { input: Vec<f64> },
}

impl ModelSpec {
    /// Standard multilayer perceptron head over a one-hop graph readout:
    /// `n -> 200 -> 200 -> 200 -> c`, all layers biased.
    pub fn mlp(n: usize, c: usize) -> ModelSpec {
        ModelSpec {
            layers: vec![
                LayerSpec::Aggregate {
                    hops: 1,
                    weighted: true,
                    count_buffers: false,
                },
                LayerSpec::Dense {
                    in_dim: n,
                    out_dim: 200,
                    bias: true,
                },
                LayerSpec::Relu,
                LayerSpec::Dense {
                    in_dim: 200,
                    out_dim: 200,
                    bias: true,
                },
                LayerSpec::Relu,
                LayerSpec::Dense {
                    in_dim: 200,
                    out_dim: 200,
                    bias: true,
                },
                LayerSpec::Relu,
                LayerSpec::Dense {
                    in_dim: 200,
                    out_dim: c,
                    bias: true,
                },
            ],
            input_nodes: n,
            class_count: c,
        }
    }

    /// Graph network: two-hop aggregation (buffers counted) feeding a
    /// pyramid of dense layers `n -> 128 -> 64 -> 32 -> 16 -> c`.
    pub fn gnn(n: usize, c: usize) -> ModelSpec {
        let mut layers = vec![LayerSpec::Aggregate {
            hops: 2,
            weighted: true,
            count_buffers: true,
        }];
        let dims = [n, 128, 64, 32, 16, c];
        for w in dims.windows(2) {
            layers.push(LayerSpec::Dense {
                in_dim: w[0],
                out_dim: w[1],
                bias: true,
            });
            if w[1] != c {
                layers.push(LayerSpec::Relu);
            }
        }
        ModelSpec {
            layers,
            input_nodes: n,
            class_count: c,
        }
    }

    /// Sequential graph convolutional network: two-hop aggregation, four
    /// conv/pool stages with channel widths 8, 16, 96, 32 and kernel 3,
    /// then dense `32*(n/16) -> 64 -> c`. The hidden dense layer carries no
    /// bias; every other parametric layer is biased.
    pub fn ssgcnet(n: usize, c: usize) -> ModelSpec {
        let channels = [1usize, 8, 16, 96, 32];
        let mut layers = vec![LayerSpec::Aggregate {
            hops: 2,
            weighted: true,
            count_buffers: false,
        }];
        let mut len = n;
        for w in channels.windows(2) {
            layers.push(LayerSpec::Conv1d {
                in_ch: w[0],
                out_ch: w[1],
                kernel: 3,
                bias: true,
            });
            layers.push(LayerSpec::Relu);
            layers.push(LayerSpec::MaxPool2);
            len /= 2;
        }
        let flat = channels[channels.len() - 1] * len;
        layers.push(LayerSpec::Dense {
            in_dim: flat,
            out_dim: 64,
            bias: false,
        });
        layers.push(LayerSpec::Relu);
        layers.push(LayerSpec::Dense {
            in_dim: 64,
            out_dim: c,
            bias: true,
        });
        ModelSpec {
            layers,
            input_nodes: n,
            class_count: c,
        }
    }

    /// Look up a factory by name.
    pub fn by_name(name: &str, n: usize, c: usize) -> Result<ModelSpec, NnError> {
        match name.to_ascii_lowercase().as_str() {
            "mlp" => Ok(ModelSpec::mlp(n, c)),
            "gnn" => Ok(ModelSpec::gnn(n, c)),
            "ssgcnet" => Ok(ModelSpec::ssgcnet(n, c)),
            other => Err(NnError::InvalidSpec(format!("unknown model {other:?}"))),
        }
    }

    /// Check layer compatibility; returns the flattened output dimension.
    pub fn validate(&self) -> Result<(), NnError> {
        if self.input_nodes < 2 {
            return Err(NnError::InvalidSpec("input_nodes must be >= 2".into()));
        }
        if self.class_count < 2 {
            return Err(NnError::InvalidSpec("class_count must be >= 2".into()));
        }
        match self.layers.first() {
            Some(LayerSpec::Aggregate { hops, .. }) if *hops >= 1 => {}
            _ => {
                return Err(NnError::InvalidSpec(
                    "first layer must be an aggregation with hops >= 1".into(),
                ))
            }
        }
        let mut shape = (1usize, self.input_nodes);
        for (idx, layer) in self.layers.iter().enumerate() {
            match *layer {
                LayerSpec::Aggregate { .. } => {
                    if idx != 0 {
                        return Err(NnError::InvalidSpec(
                            "aggregation is only supported as the first layer".into(),
                        ));
                    }
                }
                LayerSpec::NodeScale { n } => {
                    if shape != (1, n) {
                        return Err(NnError::ShapeMismatch {
                            layer: idx,
                            expected: format!("(1, {n})"),
                            got: format!("{shape:?}"),
                        });
                    }
                }
                LayerSpec::Conv1d {
                    in_ch, out_ch, kernel, ..
                } => {
                    if kernel % 2 == 0 {
                        return Err(NnError::InvalidSpec(format!(
                            "conv kernel must be odd, got {kernel}"
                        )));
                    }
                    if shape.0 != in_ch {
                        return Err(NnError::ShapeMismatch {
                            layer: idx,
                            expected: format!("{in_ch} channels"),
                            got: format!("{} channels", shape.0),
                        });
                    }
                    shape = (out_ch, shape.1);
                }
                LayerSpec::MaxPool2 => {
                    if shape.1 < 2 {
                        return Err(NnError::ShapeMismatch {
                            layer: idx,
                            expected: "length >= 2".into(),
                            got: format!("length {}", shape.1),
                        });
                    }
                    shape = (shape.0, shape.1 / 2);
                }
                LayerSpec::Relu => {}
                LayerSpec::Dense { in_dim, out_dim, .. } => {
                    if shape.0 * shape.1 != in_dim {
                        return Err(NnError::ShapeMismatch {
                            layer: idx,
                            expected: format!("{in_dim} inputs"),
                            got: format!("{}", shape.0 * shape.1),
                        });
                    }
                    shape = (1, out_dim);
                }
            }
        }
        match self.layers.last() {
            Some(LayerSpec::Dense { out_dim, .. }) if *out_dim == self.class_count => Ok(()),
            _ => Err(NnError::InvalidSpec(format!(
                "final layer must be dense with out_dim = {}",
                self.class_count
            ))),
        }
    }

    /// Seeded Xavier-uniform initialization; biases start at zero and node
    /// scales at one.
    pub fn init_params(&self, seed: u64) -> ParamSet {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let blocks = self
            .layers
            .iter()
            .map(|layer| match *layer {
                LayerSpec::Conv1d {
                    in_ch,
                    out_ch,
                    kernel,
                    bias,
                } => {
                    let limit = (6.0 / ((in_ch + out_ch) * kernel) as f64).sqrt();
                    ParamBlock {
                        weights: (0..out_ch * in_ch * kernel)
                            .map(|_| rng.gen_range(-limit..limit))
                            .collect(),
                        exempt: if bias { vec![0.0; out_ch] } else { Vec::new() },
                    }
                }
                LayerSpec::Dense {
                    in_dim,
                    out_dim,
                    bias,
                } => {
                    let limit = (6.0 / (in_dim + out_dim) as f64).sqrt();
                    ParamBlock {
                        weights: (0..out_dim * in_dim)
                            .map(|_| rng.gen_range(-limit..limit))
                            .collect(),
                        exempt: if bias { vec![0.0; out_dim] } else { Vec::new() },
                    }
                }
                LayerSpec::NodeScale { n } => ParamBlock {
                    weights: Vec::new(),
                    exempt: vec![1.0; n],
                },
                _ => ParamBlock::empty(),
            })
            .collect();
        ParamSet { blocks }
    }

    /// Full forward pass from a graph to class logits.
    pub fn forward(
        &self,
        params: &ParamSet,
        graph: &SparseGraph,
    ) -> Result<(Vec<f64>, Cache), NnError> {
        if graph.n != self.input_nodes {
            return Err(NnError::ShapeMismatch {
                layer: 0,
                expected: format!("graph with {} nodes", self.input_nodes),
                got: format!("{} nodes", graph.n),
            });
        }
        let mut entries = Vec::with_capacity(self.layers.len());
        let mut act = Tensor::zeros(0, 0);
        for (idx, layer) in self.layers.iter().enumerate() {
            match *layer {
                LayerSpec::Aggregate { hops, weighted, .. } => {
                    let h = aggregate(graph, hops, weighted);
                    act = Tensor::from_vec(1, h.len(), h);
                    entries.push(CacheEntry::Propagated);
                }
                LayerSpec::NodeScale { .. } => {
                    let theta = &params.blocks[idx].exempt;
                    let out = node_scale_forward(&act.data, theta);
                    entries.push(CacheEntry::NodeScale { input: act });
                    act = Tensor::from_vec(1, out.len(), out);
                }
                LayerSpec::Conv1d { out_ch, kernel, bias, .. } => {
                    let block = &params.blocks[idx];
                    let b = if bias { Some(block.exempt.as_slice()) } else { None };
                    let out = conv1d_forward(&act, &block.weights, b, out_ch, kernel);
                    entries.push(CacheEntry::Conv1d { input: act });
                    act = out;
                }
                LayerSpec::MaxPool2 => {
                    let (out, argmax) = maxpool2_forward(&act);
                    entries.push(CacheEntry::MaxPool2 {
                        argmax,
                        in_ch: act.ch,
                        in_len: act.len,
                    });
                    act = out;
                }
                LayerSpec::Relu => {
                    let out = relu_forward(&act.data);
                    let shape = (act.ch, act.len);
                    entries.push(CacheEntry::Relu { input: act });
                    act = Tensor::from_vec(shape.0, shape.1, out);
                }
                LayerSpec::Dense { out_dim, bias, .. } => {
                    let block = &params.blocks[idx];
                    let b = if bias { Some(block.exempt.as_slice()) } else { None };
                    let out = dense_forward(&act.data, &block.weights, b, out_dim);
                    entries.push(CacheEntry::Dense {
                        input: act.data.clone(),
                    });
                    act = Tensor::from_vec(1, out_dim, out);
                }
            }
        }
        let logits = act.data;
        Ok((
            logits.clone(),
            Cache { entries, logits },
        ))
    }

    /// Backpropagate a gradient at the logits into parameter gradients.
    pub fn backward(&self, params: &ParamSet, cache: &Cache, grad_logits: &[f64]) -> ParamSet {
        let mut grads = ParamSet::zeros_like(params);
        let mut grad = Tensor::from_vec(1, grad_logits.len(), grad_logits.to_vec());
        for (idx, layer) in self.layers.iter().enumerate().rev() {
            match (layer, &cache.entries[idx]) {
                (LayerSpec::Aggregate { .. }, CacheEntry::Propagated) => {
                    // Input side is data; nothing upstream to reach.
                    break;
                }
                (LayerSpec::NodeScale { .. }, CacheEntry::NodeScale { input }) => {
                    let theta = &params.blocks[idx].exempt;
                    let (d_theta, d_h) = node_scale_backward(&input.data, theta, &grad.data);
                    grads.blocks[idx].exempt = d_theta;
                    grad = Tensor::from_vec(input.ch, input.len, d_h);
                }
                (
                    LayerSpec::Conv1d { out_ch, kernel, bias, .. },
                    CacheEntry::Conv1d { input },
                ) => {
                    let block = &params.blocks[idx];
                    let (d_w, d_b, d_in) =
                        conv1d_backward(input, &block.weights, &grad, *out_ch, *kernel);
                    grads.blocks[idx].weights = d_w;
                    if *bias {
                        grads.blocks[idx].exempt = d_b;
                    }
                    grad = d_in;
                }
                (
                    LayerSpec::MaxPool2,
                    CacheEntry::MaxPool2 {
                        argmax,
                        in_ch,
                        in_len,
                    },
                ) => {
                    grad = maxpool2_backward(&grad, argmax, *in_ch, *in_len);
                }
                (LayerSpec::Relu, CacheEntry::Relu { input }) => {
                    let d = relu_backward(&input.data, &grad.data);
                    grad = Tensor::from_vec(input.ch, input.len, d);
                }
                (LayerSpec::Dense { bias, .. }, CacheEntry::Dense { input }) => {
                    let block = &params.blocks[idx];
                    let (d_w, d_b, d_x) = dense_backward(input, &block.weights, &grad.data);
                    grads.blocks[idx].weights = d_w;
                    if *bias {
                        grads.blocks[idx].exempt = d_b;
                    }
                    grad = Tensor::from_vec(1, d_x.len(), d_x);
                }
                _ => unreachable!("cache entry does not match layer"),
            }
        }
        grads
    }

    /// Cross-entropy loss and parameter gradients for one labeled graph.
    pub fn sample_loss_and_grad(
        &self,
        params: &ParamSet,
        graph: &SparseGraph,
    ) -> Result<(f64, ParamSet), NnError> {
        let (logits, cache) = self.forward(params, graph)?;
        let (loss, grad_logits) = softmax_cross_entropy(&logits, graph.label)?;
        Ok((loss, self.backward(params, &cache, &grad_logits)))
    }

    /// Argmax class prediction. Total float ordering keeps this defined
    /// even for non-finite logits (divergence reporting evaluates anyway).
    pub fn predict(&self, params: &ParamSet, graph: &SparseGraph) -> Result<usize, NnError> {
        let (logits, _) = self.forward(params, graph)?;
        Ok(logits
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.total_cmp(b.1))
            .map(|(i, _)| i)
            .unwrap())
    }

    /// SHA-256 of the canonical JSON encoding, used to guard checkpoints.
    pub fn digest(&self) -> [u8; 32] {
        let json = serde_json::to_string(self).expect("model spec serializes");
        let mut hasher = Sha256::new();
        hasher.update(json.as_bytes());
        hasher.finalize().into()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::build_wnfg;
    use crate::oracle;
    use crate::signal::Spectrum;
    use rand_chacha::ChaCha8Rng;

    fn random_graph(n: usize, k: usize, label: usize, seed: u64) -> SparseGraph {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut g = build_wnfg(
            &Spectrum {
                magnitudes: (0..n).map(|_| rng.gen_range(0.1..4.0)).collect(),
                label: 0,
                source_id: "t".into(),
                offset: 0,
            },
            k,
        );
        g.label = label;
        g
    }

    #[test]
    fn mlp_counts_match_reference_table() {
        let counts = count_params(&ModelSpec::mlp(256, 2));
        let rows: Vec<usize> = counts.per_layer.iter().map(|l| l.weights).collect();
        assert_eq!(rows, vec![51200, 40000, 40000, 400]);
        assert_eq!(counts.non_trainable, 602);
        assert_eq!(counts.total, 132202);
    }

    #[test]
    fn gnn_counts_match_reference_table() {
        let counts = count_params(&ModelSpec::gnn(256, 2));
        let rows: Vec<usize> = counts.per_layer.iter().map(|l| l.weights).collect();
        assert_eq!(rows, vec![32768, 8192, 2048, 512, 32]);
        assert_eq!(counts.non_trainable, 754);
        assert_eq!(counts.total, 44306);
    }

    #[test]
    fn ssgcnet_counts_match_reference_table() {
        let counts = count_params(&ModelSpec::ssgcnet(256, 2));
        let rows: Vec<usize> = counts.per_layer.iter().map(|l| l.weights).collect();
        assert_eq!(rows, vec![24, 384, 4608, 9216, 32768, 128]);
        assert_eq!(counts.non_trainable, 154);
        assert_eq!(counts.total, 47282);
    }

    #[test]
    fn factories_validate() {
        for spec in [
            ModelSpec::mlp(256, 2),
            ModelSpec::gnn(256, 2),
            ModelSpec::ssgcnet(256, 2),
            ModelSpec::ssgcnet(64, 3),
        ] {
            spec.validate().unwrap();
        }
    }

    #[test]
    fn validate_rejects_bad_shapes() {
        let mut spec = ModelSpec::mlp(256, 2);
        spec.layers[1] = LayerSpec::Dense {
            in_dim: 100,
            out_dim: 200,
            bias: true,
        };
        assert!(matches!(
            spec.validate(),
            Err(NnError::ShapeMismatch { layer: 1, .. })
        ));
    }

    #[test]
    fn param_shapes_match_counts() {
        for spec in [ModelSpec::mlp(64, 2), ModelSpec::ssgcnet(64, 2)] {
            let params = spec.init_params(1);
            let counts = count_params(&spec);
            assert_eq!(params.weight_count(), counts.trainable_total);
        }
    }

    #[test]
    fn node_scale_counts_as_non_trainable() {
        let spec = ModelSpec {
            layers: vec![
                LayerSpec::Aggregate {
                    hops: 2,
                    weighted: true,
                    count_buffers: false,
                },
                LayerSpec::NodeScale { n: 16 },
                LayerSpec::Dense {
                    in_dim: 16,
                    out_dim: 2,
                    bias: true,
                },
            ],
            input_nodes: 16,
            class_count: 2,
        };
        spec.validate().unwrap();
        let counts = count_params(&spec);
        assert_eq!(counts.trainable_total, 32);
        // 16 node scales + 2 output biases.
        assert_eq!(counts.non_trainable, 18);
        let params = spec.init_params(0);
        assert_eq!(params.blocks[1].exempt, vec![1.0; 16]);
    }

    #[test]
    fn forward_is_deterministic() {
        let spec = ModelSpec::ssgcnet(64, 2);
        let params = spec.init_params(3);
        let g = random_graph(64, 6, 1, 5);
        let (a, _) = spec.forward(&params, &g).unwrap();
        let (b, _) = spec.forward(&params, &g).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn full_model_gradients_match_finite_differences() {
        // Flatten all parameters, perturb each, and compare the analytic
        // gradient of the sample loss.
        let spec = ModelSpec::ssgcnet(32, 2);
        spec.validate().unwrap();
        let params = spec.init_params(11);
        let g = random_graph(32, 4, 1, 21);
        let (_, grads) = spec.sample_loss_and_grad(&params, &g).unwrap();

        for layer in params.prunable_layers() {
            let flat = params.blocks[layer].weights.clone();
            let fd = oracle::finite_difference_gradient(&flat, |w| {
                let mut probe = params.clone();
                probe.blocks[layer].weights = w.to_vec();
                let (logits, _) = spec.forward(&probe, &g).unwrap();
                softmax_cross_entropy(&logits, g.label).unwrap().0
            });
            let mut checked = 0;
            for (i, (a, b)) in grads.blocks[layer].weights.iter().zip(&fd).enumerate() {
                let err = oracle::relative_error(*a, *b);
                assert!(err < 1e-4, "layer {layer} weight {i}: {a} vs {b}");
                checked += 1;
            }
            assert!(checked > 0);
        }
    }

    #[test]
    fn digest_changes_with_spec() {
        let a = ModelSpec::mlp(256, 2).digest();
        let b = ModelSpec::mlp(128, 2).digest();
        assert_ne!(a, b);
        assert_eq!(a, ModelSpec::mlp(256, 2).digest());
    }
}
