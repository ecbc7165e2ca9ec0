use crate::error::{usage, Result};

/// `K` equally spaced atomic actions covering `[-1, 1]`: `2j/(K-1) - 1` for
/// `j = 0..K`.
pub fn discretize_action_space(k: usize) -> Result<Vec<f64>> {
    if k < 2 {
        return Err(usage(format!("need at least 2 atomic actions, got {k}")));
    }
    let denom = (k - 1) as f64;
    Ok((0..k).map(|j| 2.0 * j as f64 / denom - 1.0).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn small_cases() {
        assert_eq!(discretize_action_space(2).unwrap(), vec![-1.0, 1.0]);
        assert_eq!(discretize_action_space(3).unwrap(), vec![-1.0, 0.0, 1.0]);
        assert!(discretize_action_space(1).is_err());
        assert!(discretize_action_space(0).is_err());
    }

    #[test]
    fn thirty_one_atoms() {
        let a = discretize_action_space(31).unwrap();
        assert_eq!(a.len(), 31);
        assert_eq!(a[0], -1.0);
        assert_eq!(a[30], 1.0);
        for w in a.windows(2) {
            assert!((w[1] - w[0] - 1.0 / 15.0).abs() < 1e-12);
        }
    }

    proptest! {
        #[test]
        fn symmetric_with_zero_mean(k in 2usize..200) {
            let a = discretize_action_space(k).unwrap();
            let mean: f64 = a.iter().sum::<f64>() / k as f64;
            prop_assert!(mean.abs() < 1e-12);
            for j in 0..k {
                prop_assert!((a[j] + a[k - 1 - j]).abs() < 1e-12);
            }
            if k % 2 == 1 {
                prop_assert!(a[k / 2].abs() < 1e-12);
            }
        }
    }
}
