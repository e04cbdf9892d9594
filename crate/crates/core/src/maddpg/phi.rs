//! The cooperation gate: an agent's sampled reward is multiplied by `phi`
//! when strictly more than `threshold` members of its team (itself
//! included) earned a strictly positive reward in that transition.

use crate::error::{contract, Result};

/// Number of strictly positive entries.
pub fn positive_count(team_rewards: &[f64]) -> usize {
    team_rewards.iter().filter(|&&r| r > 0.0).count()
}

/// Returns `phi` if more than `threshold` team rewards are positive, else 1.
///
/// `threshold = u32::MAX` is a gate that can never fire.
pub fn compute_phi(team_rewards: &[f64], threshold: u32, phi: f64) -> Result<f64> {
    if team_rewards.is_empty() {
        return Err(contract("cooperation gate needs at least one team reward"));
    }
    if !(phi > 0.0 && phi.is_finite()) {
        return Err(contract(format!("phi must be a positive real, got {phi}")));
    }
    let k = positive_count(team_rewards);
    Ok(if k as u64 > u64::from(threshold) { phi } else { 1.0 })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn worked_cases() {
        assert_eq!(compute_phi(&[0.5, 2.0, -1.0, 3.0], 1, 2.0).unwrap(), 2.0);
        assert_eq!(compute_phi(&[-1.0, -2.0, 0.1], 1, 2.0).unwrap(), 1.0);
        assert_eq!(compute_phi(&[0.0, 0.0], 0, 2.0).unwrap(), 1.0);
        assert_eq!(compute_phi(&[1e-300], 0, 5.0).unwrap(), 5.0);
        assert_eq!(compute_phi(&[1.0; 6], u32::MAX, 2.0).unwrap(), 1.0);
    }

    #[test]
    fn contract_errors() {
        assert!(compute_phi(&[], 1, 2.0).is_err());
        assert!(compute_phi(&[1.0], 1, 0.0).is_err());
        assert!(compute_phi(&[1.0], 1, -2.0).is_err());
        assert!(compute_phi(&[1.0], 1, f64::NAN).is_err());
    }

    proptest::proptest! {
        #[test]
        fn invariant_under_positive_scaling(
            rewards in proptest::collection::vec(-5.0f64..5.0, 1..8),
            threshold in 0u32..8,
            c in 1e-3f64..1e3,
        ) {
            let scaled: Vec<f64> = rewards.iter().map(|r| r * c).collect();
            proptest::prop_assert_eq!(
                compute_phi(&rewards, threshold, 2.0).unwrap(),
                compute_phi(&scaled, threshold, 2.0).unwrap()
            );
        }
    }
}
