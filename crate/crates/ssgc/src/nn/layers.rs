//! Layer definitions and forward/backward kernels.
//!
//! Every kernel is a plain function over `f64` slices so the gradient suite
//! can exercise each one in isolation against finite differences.

use serde::{Deserialize, Serialize};

use crate::graph::SparseGraph;

/// A channels-by-length activation block, row-major per channel.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    pub ch: usize,
    pub len: usize,
    pub data: Vec<f64>,
}

impl Tensor {
    pub fn zeros(ch: usize, len: usize) -> Self {
        Tensor {
            ch,
            len,
            data: vec![0.0; ch * len],
        }
    }

    pub fn from_vec(ch: usize, len: usize, data: Vec<f64>) -> Self {
        assert_eq!(data.len(), ch * len);
        Tensor { ch, len, data }
    }

    #[inline]
    pub fn at(&self, c: usize, x: usize) -> f64 {
        self.data[c * self.len + x]
    }

    #[inline]
    pub fn at_mut(&mut self, c: usize, x: usize) -> &mut f64 {
        &mut self.data[c * self.len + x]
    }
}

/// One layer of a model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum LayerSpec {
    /// Graph readout `h^k = h^{k-1} + A h^{k-1}` starting from all ones.
    /// `weighted` uses the stored edge weights (with implied antisymmetric
    /// reverse); unweighted sums neighbors with unit weight instead.
    /// `count_buffers` adds `hops * n` slots to the non-trainable bucket.
    Aggregate {
        hops: usize,
        weighted: bool,
        count_buffers: bool,
    },
    /// Per-node learnable scale; the scale vector is exempt from pruning.
    NodeScale { n: usize },
    /// Length-preserving 1-D cross-correlation with zero padding
    /// `(kernel - 1) / 2`; kernel must be odd.
    Conv1d {
        in_ch: usize,
        out_ch: usize,
        kernel: usize,
        bias: bool,
    },
    /// Width-2 stride-2 max pooling; an odd trailing element is dropped.
    MaxPool2,
    Relu,
    /// Affine map on the flattened input.
    Dense {
        in_dim: usize,
        out_dim: usize,
        bias: bool,
    },
}

/// Graph aggregation: `hops` rounds of `h <- h + A h` from the all-ones
/// vector. Node order is preserved.
pub fn aggregate(graph: &SparseGraph, hops: usize, weighted: bool) -> Vec<f64> {
    let n = graph.n;
    let mut h = vec![1.0; n];
    for _ in 0..hops {
        let mut next = h.clone();
        if weighted {
            for (i, j, w) in graph.edges() {
                next[i] += w * h[j];
                next[j] -= w * h[i];
            }
        } else {
            for (i, j, _) in graph.edges() {
                next[i] += h[j];
                next[j] += h[i];
            }
        }
        h = next;
    }
    h
}

/// Elementwise product `o_i = theta_i * h_i`.
pub fn node_scale_forward(h: &[f64], theta: &[f64]) -> Vec<f64> {
    assert_eq!(h.len(), theta.len());
    h.iter().zip(theta).map(|(a, b)| a * b).collect()
}

/// Gradients of the node scale: `(d_theta, d_h)`.
pub fn node_scale_backward(h: &[f64], theta: &[f64], grad_out: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let d_theta = grad_out.iter().zip(h).map(|(g, x)| g * x).collect();
    let d_h = grad_out.iter().zip(theta).map(|(g, t)| g * t).collect();
    (d_theta, d_h)
}

/// Length-preserving cross-correlation. `weights` is `[out_ch][in_ch][tap]`
/// row-major, `bias` one value per output channel when present.
pub fn conv1d_forward(
    input: &Tensor,
    weights: &[f64],
    bias: Option<&[f64]>,
    out_ch: usize,
    kernel: usize,
) -> Tensor {
    let in_ch = input.ch;
    let len = input.len;
    assert_eq!(weights.len(), out_ch * in_ch * kernel);
    assert!(kernel % 2 == 1, "zero-padded conv needs an odd kernel");
    let pad = (kernel - 1) / 2;
    let mut out = Tensor::zeros(out_ch, len);
    for oc in 0..out_ch {
        let b = bias.map_or(0.0, |b| b[oc]);
        for x in 0..len {
            let mut acc = b;
            for ic in 0..in_ch {
                let w_base = (oc * in_ch + ic) * kernel;
                for t in 0..kernel {
                    let src = x + t;
                    if src >= pad && src - pad < len {
                        acc += weights[w_base + t] * input.at(ic, src - pad);
                    }
                }
            }
            *out.at_mut(oc, x) = acc;
        }
    }
    out
}

/// Gradients of the convolution: `(d_weights, d_bias, d_input)`.
pub fn conv1d_backward(
    input: &Tensor,
    weights: &[f64],
    grad_out: &Tensor,
    out_ch: usize,
    kernel: usize,
) -> (Vec<f64>, Vec<f64>, Tensor) {
    let in_ch = input.ch;
    let len = input.len;
    let pad = (kernel - 1) / 2;
    let mut d_w = vec![0.0; out_ch * in_ch * kernel];
    let mut d_b = vec![0.0; out_ch];
    let mut d_in = Tensor::zeros(in_ch, len);
    for oc in 0..out_ch {
        for x in 0..len {
            let g = grad_out.at(oc, x);
            d_b[oc] += g;
            for ic in 0..in_ch {
                let w_base = (oc * in_ch + ic) * kernel;
                for t in 0..kernel {
                    let src = x + t;
                    if src >= pad && src - pad < len {
                        d_w[w_base + t] += g * input.at(ic, src - pad);
                        *d_in.at_mut(ic, src - pad) += g * weights[w_base + t];
                    }
                }
            }
        }
    }
    (d_w, d_b, d_in)
}

/// Width-2 stride-2 max pooling. Returns the pooled tensor and, per output
/// element, the flat input index of the maximum (first element on ties).
pub fn maxpool2_forward(input: &Tensor) -> (Tensor, Vec<usize>) {
    let out_len = input.len / 2;
    let mut out = Tensor::zeros(input.ch, out_len);
    let mut argmax = vec![0usize; input.ch * out_len];
    for c in 0..input.ch {
        for i in 0..out_len {
            let a = input.at(c, 2 * i);
            let b = input.at(c, 2 * i + 1);
            let (v, pick) = if a >= b { (a, 2 * i) } else { (b, 2 * i + 1) };
            *out.at_mut(c, i) = v;
            argmax[c * out_len + i] = c * input.len + pick;
        }
    }
    (out, argmax)
}

/// Routes each output gradient to the input element that won the max.
pub fn maxpool2_backward(
    grad_out: &Tensor,
    argmax: &[usize],
    in_ch: usize,
    in_len: usize,
) -> Tensor {
    let mut d_in = Tensor::zeros(in_ch, in_len);
    for (flat, &src) in argmax.iter().enumerate() {
        d_in.data[src] += grad_out.data[flat];
    }
    d_in
}

pub fn relu_forward(x: &[f64]) -> Vec<f64> {
    x.iter().map(|&v| v.max(0.0)).collect()
}

/// Gradient of ReLU: passes where the forward input was strictly positive.
pub fn relu_backward(input: &[f64], grad_out: &[f64]) -> Vec<f64> {
    input
        .iter()
        .zip(grad_out)
        .map(|(&x, &g)| if x > 0.0 { g } else { 0.0 })
        .collect()
}

/// Affine map `out = W x + b`, `weights` row-major `[out_dim][in_dim]`.
pub fn dense_forward(x: &[f64], weights: &[f64], bias: Option<&[f64]>, out_dim: usize) -> Vec<f64> {
    let in_dim = x.len();
    assert_eq!(weights.len(), out_dim * in_dim);
    (0..out_dim)
        .map(|o| {
            let row = &weights[o * in_dim..(o + 1) * in_dim];
            let dot: f64 = row.iter().zip(x).map(|(w, v)| w * v).sum();
            dot + bias.map_or(0.0, |b| b[o])
        })
        .collect()
}

/// Gradients of the affine map: `(d_weights, d_bias, d_x)`.
pub fn dense_backward(
    x: &[f64],
    weights: &[f64],
    grad_out: &[f64],
) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
    let in_dim = x.len();
    let out_dim = grad_out.len();
    let mut d_w = vec![0.0; out_dim * in_dim];
    let mut d_x = vec![0.0; in_dim];
    for o in 0..out_dim {
        let g = grad_out[o];
        for i in 0..in_dim {
            d_w[o * in_dim + i] = g * x[i];
            d_x[i] += weights[o * in_dim + i] * g;
        }
    }
    (d_w, grad_out.to_vec(), d_x)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::build_wnfg;
    use crate::oracle;
    use crate::signal::Spectrum;
    use approx::assert_relative_eq;
    use rand::prelude::*;
    use rand_chacha::ChaCha8Rng;

    fn graph_from(magnitudes: Vec<f64>, k: usize) -> SparseGraph {
        build_wnfg(
            &Spectrum {
                magnitudes,
                label: 0,
                source_id: "t".into(),
                offset: 0,
            },
            k,
        )
    }

    #[test]
    fn aggregate_zero_edge_graph_stays_ones() {
        let g = graph_from(vec![1.0; 6], 2);
        assert_eq!(aggregate(&g, 2, true), vec![1.0; 6]);
    }

    #[test]
    fn aggregate_two_node_single_hop() {
        // Hand-built edge 0 -> 1 with weight 1 (the implied reverse is -1):
        // h = (I + A) * ones = [1 + 1, 1 - 1].
        let g = SparseGraph {
            n: 2,
            row_ptr: vec![0, 1, 1],
            col_idx: vec![1],
            weights: vec![1.0],
            label: 0,
            k: 1,
        };
        assert_eq!(aggregate(&g, 1, true), vec![2.0, 0.0]);
    }

    #[test]
    fn aggregate_matches_dense_power() {
        let mut rng = ChaCha8Rng::seed_from_u64(31);
        for _ in 0..10 {
            let mags: Vec<f64> = (0..32).map(|_| rng.gen_range(0.0..4.0)).collect();
            let g = graph_from(mags, 5);
            let got = aggregate(&g, 2, true);
            let want = oracle::aggregate_dense(&g, 2);
            for (a, b) in got.iter().zip(&want) {
                assert_relative_eq!(a, b, epsilon = 1e-10, max_relative = 1e-10);
            }
        }
    }

    #[test]
    fn unweighted_aggregate_counts_neighbors() {
        // Chain 0-1-2 (edges 0->1, 1->2): one unweighted hop gives
        // 1 + degree.
        let g = graph_from(vec![3.0, 2.0, 1.0], 1);
        assert_eq!(aggregate(&g, 1, false), vec![2.0, 3.0, 2.0]);
    }

    #[test]
    fn node_scale_identity_and_arithmetic() {
        assert_eq!(
            node_scale_forward(&[2.0, 3.0], &[1.0, 1.0]),
            vec![2.0, 3.0]
        );
        assert_eq!(
            node_scale_forward(&[2.0, 3.0], &[0.5, -1.0]),
            vec![1.0, -3.0]
        );
    }

    #[test]
    fn node_scale_gradient_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let h: Vec<f64> = (0..12).map(|_| rng.gen_range(-2.0..2.0)).collect();
        let theta: Vec<f64> = (0..12).map(|_| rng.gen_range(-2.0..2.0)).collect();
        let weights: Vec<f64> = (0..12).map(|_| rng.gen_range(-1.0..1.0)).collect();
        // Scalar objective: weighted sum of outputs.
        let (d_theta, d_h) = {
            let grad_out = weights.clone();
            node_scale_backward(&h, &theta, &grad_out)
        };
        let fd_theta = oracle::finite_difference_gradient(&theta, |t| {
            node_scale_forward(&h, t)
                .iter()
                .zip(&weights)
                .map(|(o, w)| o * w)
                .sum()
        });
        let fd_h = oracle::finite_difference_gradient(&h, |hv| {
            node_scale_forward(hv, &theta)
                .iter()
                .zip(&weights)
                .map(|(o, w)| o * w)
                .sum()
        });
        for (a, b) in d_theta.iter().zip(&fd_theta) {
            assert!(oracle::relative_error(*a, *b) < 1e-4);
        }
        for (a, b) in d_h.iter().zip(&fd_h) {
            assert!(oracle::relative_error(*a, *b) < 1e-4);
        }
    }

    #[test]
    fn conv_delta_kernel_is_identity() {
        let input = Tensor::from_vec(1, 5, vec![1.0, -2.0, 3.0, 0.5, 4.0]);
        let out = conv1d_forward(&input, &[0.0, 1.0, 0.0], None, 1, 3);
        assert_eq!(out.data, input.data);
    }

    #[test]
    fn conv_box_kernel_with_zero_padding() {
        let input = Tensor::from_vec(1, 3, vec![1.0, 2.0, 3.0]);
        let out = conv1d_forward(&input, &[1.0, 1.0, 1.0], None, 1, 3);
        assert_eq!(out.data, vec![3.0, 6.0, 5.0]);
    }

    #[test]
    fn conv_forward_matches_triple_loop_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(77);
        let (in_ch, out_ch, len, kernel) = (4usize, 3usize, 16usize, 3usize);
        let input = Tensor::from_vec(
            in_ch,
            len,
            (0..in_ch * len).map(|_| rng.gen_range(-1.0..1.0)).collect(),
        );
        let weights: Vec<f64> = (0..out_ch * in_ch * kernel)
            .map(|_| rng.gen_range(-1.0..1.0))
            .collect();
        let bias: Vec<f64> = (0..out_ch).map(|_| rng.gen_range(-0.5..0.5)).collect();
        let got = conv1d_forward(&input, &weights, Some(&bias), out_ch, kernel);
        // Literal definition with explicit padding.
        let pad = (kernel - 1) / 2;
        for oc in 0..out_ch {
            for x in 0..len {
                let mut want = bias[oc];
                for ic in 0..in_ch {
                    for t in 0..kernel {
                        let pos = x as isize + t as isize - pad as isize;
                        if pos >= 0 && (pos as usize) < len {
                            want += weights[(oc * in_ch + ic) * kernel + t]
                                * input.at(ic, pos as usize);
                        }
                    }
                }
                assert_relative_eq!(got.at(oc, x), want, epsilon = 1e-10);
            }
        }
    }

    #[test]
    fn maxpool_examples_and_tie_rule() {
        let input = Tensor::from_vec(1, 4, vec![1.0, 3.0, 2.0, 2.0]);
        let (out, argmax) = maxpool2_forward(&input);
        assert_eq!(out.data, vec![3.0, 2.0]);
        // Tie in the second pair routes to the first element.
        assert_eq!(argmax, vec![1, 2]);

        let equal = Tensor::from_vec(1, 4, vec![5.0; 4]);
        let (_, argmax) = maxpool2_forward(&equal);
        assert_eq!(argmax, vec![0, 2]);
        let grad = maxpool2_backward(&Tensor::from_vec(1, 2, vec![1.0, 1.0]), &argmax, 1, 4);
        assert_eq!(grad.data, vec![1.0, 0.0, 1.0, 0.0]);
    }

    #[test]
    fn maxpool_drops_odd_tail() {
        let input = Tensor::from_vec(1, 5, vec![1.0, 2.0, 3.0, 4.0, 9.0]);
        let (out, _) = maxpool2_forward(&input);
        assert_eq!(out.data, vec![2.0, 4.0]);
    }

    #[test]
    fn dense_identity_and_arithmetic() {
        let x = vec![3.0, 4.0];
        let out = dense_forward(&x, &[1.0, 2.0], Some(&[1.0]), 1);
        assert_eq!(out, vec![12.0]);
        let id = dense_forward(&x, &[1.0, 0.0, 0.0, 1.0], None, 2);
        assert_eq!(id, x);
    }
}
