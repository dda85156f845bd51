//! Softmax cross-entropy with max-subtraction stabilization.

use super::model::NnError;

/// Negative log-likelihood of `label` under the softmax of `logits`.
///
/// Returns the loss and its gradient `softmax - one_hot(label)`.
pub fn softmax_cross_entropy(logits: &[f64], label: usize) -> Result<(f64, Vec<f64>), NnError> {
    let c = logits.len();
    if label >= c {
        return Err(NnError::LabelOutOfRange { label, classes: c });
    }
    let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|&v| (v - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    let loss = sum.ln() - (logits[label] - max);
    let mut grad: Vec<f64> = exps.iter().map(|e| e / sum).collect();
    grad[label] -= 1.0;
    Ok((loss, grad))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::oracle;
    use approx::assert_relative_eq;
    use rand::prelude::*;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn uniform_logits_give_ln_c() {
        let (loss, _) = softmax_cross_entropy(&[0.0, 0.0], 0).unwrap();
        assert_relative_eq!(loss, 2.0_f64.ln(), epsilon = 1e-15);
    }

    #[test]
    fn extreme_logits_do_not_overflow() {
        let (loss, grad) = softmax_cross_entropy(&[1000.0, 0.0], 0).unwrap();
        assert!(loss.is_finite());
        assert!(loss < 1e-300);
        assert!(grad.iter().all(|g| g.is_finite()));
    }

    #[test]
    fn rejects_out_of_range_label() {
        assert!(matches!(
            softmax_cross_entropy(&[0.0, 0.0], 2),
            Err(NnError::LabelOutOfRange { label: 2, classes: 2 })
        ));
    }

    #[test]
    fn softmax_sums_to_one_and_loss_nonnegative() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for _ in 0..50 {
            let logits: Vec<f64> = (0..5).map(|_| rng.gen_range(-8.0..8.0)).collect();
            let label = rng.gen_range(0..5);
            let (loss, grad) = softmax_cross_entropy(&logits, label).unwrap();
            assert!(loss >= 0.0);
            // grad + one_hot = softmax, which sums to 1.
            let softmax_sum: f64 = grad.iter().sum::<f64>() + 1.0;
            assert_relative_eq!(softmax_sum, 1.0, epsilon = 1e-12);
        }
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        for _ in 0..20 {
            let logits: Vec<f64> = (0..5).map(|_| rng.gen_range(-3.0..3.0)).collect();
            let label = rng.gen_range(0..5);
            let (_, grad) = softmax_cross_entropy(&logits, label).unwrap();
            let fd = oracle::finite_difference_gradient(&logits, |l| {
                softmax_cross_entropy(l, label).unwrap().0
            });
            for (a, b) in grad.iter().zip(&fd) {
                assert!(
                    oracle::relative_error(*a, *b) < 1e-5,
                    "analytic {a} vs fd {b}"
                );
            }
        }
    }
}
