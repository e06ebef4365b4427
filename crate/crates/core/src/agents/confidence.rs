//! Introspective confidence: how sure a player is that its chosen action
//! leads towards winning, read as a probability in `[0, 1]`.
//!
//! The chosen action's value is range-normalised against the other legal
//! actions and passed through `log2(1 + x)`, which maps `[0, 1]` onto
//! `[0, 1]` while lifting mid-range values.

use crate::engine::ActionMask;
use crate::error::{Error, Result};

pub fn log2_confidence(normalised: f64) -> f64 {
    ((1.0 + normalised).ln() / std::f64::consts::LN_2).clamp(0.0, 1.0)
}

/// Confidence from Q-values. All-equal legal values give 0.5.
pub fn confidence_from_q(q_values: &[f64], action: usize, mask: &ActionMask) -> Result<f64> {
    if !mask.is_legal(action) {
        return Err(Error::IllegalAction { player: usize::MAX, index: action });
    }
    let (lo, hi) = mask
        .legal_indices()
        .into_iter()
        .map(|i| q_values[i])
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), q| (lo.min(q), hi.max(q)));
    if hi - lo <= f64::EPSILON * hi.abs().max(1.0) {
        return Ok(0.5);
    }
    Ok(log2_confidence((q_values[action] - lo) / (hi - lo)))
}

/// Confidence from a masked policy: the action's probability relative to the
/// most likely legal action.
pub fn confidence_from_probability(probs: &[f64], action: usize, mask: &ActionMask) -> Result<f64> {
    if !mask.is_legal(action) {
        return Err(Error::IllegalAction { player: usize::MAX, index: action });
    }
    let max = mask
        .legal_indices()
        .into_iter()
        .map(|i| probs[i])
        .fold(0.0, f64::max);
    if max <= 0.0 {
        return Ok(0.5);
    }
    Ok(log2_confidence(probs[action] / max))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::engine::NUM_ACTIONS;
    use proptest::prelude::*;

    fn mask_of(idx: &[usize]) -> ActionMask {
        let mut m = ActionMask::none();
        idx.iter().for_each(|&i| m.0[i] = true);
        m
    }

    #[test]
    fn argmax_argmin_and_degenerate() {
        let mut q = vec![0.0; NUM_ACTIONS];
        q[0] = 1.0;
        q[5] = -2.0;
        q[9] = 0.3;
        q[50] = 99.0; // illegal, ignored
        let mask = mask_of(&[0, 5, 9]);
        assert_eq!(confidence_from_q(&q, 0, &mask).unwrap(), 1.0);
        assert_eq!(confidence_from_q(&q, 5, &mask).unwrap(), 0.0);
        let flat = vec![0.7; NUM_ACTIONS];
        assert_eq!(confidence_from_q(&flat, 5, &mask).unwrap(), 0.5);
        assert!(confidence_from_q(&q, 50, &mask).is_err());
    }

    #[test]
    fn probability_form() {
        let mut p = vec![0.0; NUM_ACTIONS];
        p[1] = 0.6;
        p[2] = 0.3;
        p[3] = 0.1;
        let mask = mask_of(&[1, 2, 3]);
        assert_eq!(confidence_from_probability(&p, 1, &mask).unwrap(), 1.0);
        let expected = (1.5f64).ln() / 2f64.ln();
        assert!((confidence_from_probability(&p, 2, &mask).unwrap() - expected).abs() < 1e-12);
    }

    proptest! {
        #[test]
        fn monotone_in_own_q(others in proptest::collection::vec(-5.0f64..5.0, 3), a in -6.0f64..6.0, d in 0.0f64..3.0) {
            let mut q = vec![0.0; NUM_ACTIONS];
            q[1] = others[0];
            q[2] = others[1];
            q[3] = others[2];
            let mask = mask_of(&[0, 1, 2, 3]);
            q[0] = a;
            let lo = confidence_from_q(&q, 0, &mask).unwrap();
            q[0] = a + d;
            let hi = confidence_from_q(&q, 0, &mask).unwrap();
            prop_assert!(hi >= lo - 1e-12);
            prop_assert!((0.0..=1.0).contains(&hi));
        }
    }
}
