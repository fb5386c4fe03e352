//! KL-divergence entailment readout.

use super::{ModelError, Prediction, Readout};

pub const DEFAULT_KL_EPS: f64 = 1e-9;

/// Inference readout over `[D(P_h‖P_p), D(P_p‖P_h)]`.
pub type KlReadout = Readout;

/// `D(P‖Q)` in nats after adding `eps` to every entry of both and
/// renormalizing.
pub fn kl_divergence(p: &[f64], q: &[f64], eps: f64) -> Result<f64, ModelError> {
    if p.len() != q.len() {
        return Err(ModelError::LengthMismatch(p.len(), q.len()));
    }
    Ok(smoothed_kl(p, q, eps))
}

fn smoothed_kl(p: &[f64], q: &[f64], eps: f64) -> f64 {
    let zp: f64 = p.iter().sum::<f64>() + eps * p.len() as f64;
    let zq: f64 = q.iter().sum::<f64>() + eps * q.len() as f64;
    let d: f64 = p
        .iter()
        .zip(q)
        .map(|(&a, &b)| {
            let (a, b) = ((a + eps) / zp, (b + eps) / zq);
            a * (a / b).ln()
        })
        .sum();
    d.max(0.0)
}

/// Divergence features of a (premise, hypothesis) pair. Panics on length
/// mismatch; callers feed distributions from the same circuit family.
pub(crate) fn features(premise: &[f64], hypothesis: &[f64], eps: f64) -> [f64; 2] {
    assert_eq!(premise.len(), hypothesis.len());
    [
        smoothed_kl(hypothesis, premise, eps),
        smoothed_kl(premise, hypothesis, eps),
    ]
}

/// Low `D(P_h‖P_p)` means the premise covers the hypothesis's mass.
pub fn kl_predict(premise: &[f64], hypothesis: &[f64], readout: &KlReadout, eps: f64) -> Prediction {
    readout.forward(features(premise, hypothesis, eps))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn identity_and_examples() {
        assert_eq!(kl_divergence(&[0.3, 0.7], &[0.3, 0.7], DEFAULT_KL_EPS).unwrap(), 0.0);
        let d = kl_divergence(&[1.0, 0.0], &[0.5, 0.5], DEFAULT_KL_EPS).unwrap();
        assert!((d - 2f64.ln()).abs() < 1e-6);
        let d = kl_divergence(&[0.5, 0.5], &[0.9, 0.1], DEFAULT_KL_EPS).unwrap();
        let direct = 0.5 * (0.5f64 / 0.9).ln() + 0.5 * (0.5f64 / 0.1).ln();
        assert!((d - direct).abs() < 1e-8);
        assert!((d - 0.5108).abs() < 1e-4);
        let reverse = kl_divergence(&[0.9, 0.1], &[0.5, 0.5], DEFAULT_KL_EPS).unwrap();
        assert!((d - reverse).abs() > 0.1);
        assert_eq!(
            kl_divergence(&[1.0], &[0.5, 0.5], DEFAULT_KL_EPS),
            Err(ModelError::LengthMismatch(1, 2))
        );
    }

    #[test]
    fn prediction_on_equal_states() {
        let r = Readout::Scale { log_gamma: 1.3 };
        assert_eq!(kl_predict(&[0.2, 0.8], &[0.2, 0.8], &r, DEFAULT_KL_EPS), Prediction::Score(1.0));
        let f = features(&[0.2, 0.8], &[0.6, 0.4], DEFAULT_KL_EPS);
        assert!((f[0] - f[1]).abs() > 1e-3);
    }

    proptest! {
        #[test]
        fn nonnegative(a in 0.0f64..=1.0, b in 0.0f64..=1.0) {
            let d = kl_divergence(&[a, 1.0 - a], &[b, 1.0 - b], DEFAULT_KL_EPS).unwrap();
            prop_assert!(d >= 0.0);
        }
    }
}
