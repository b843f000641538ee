use rand::distributions::{Distribution, WeightedIndex};
use rand::Rng;

use super::NnError;

#[derive(Clone, Debug, PartialEq)]
pub struct PolicySample {
    pub action: usize,
    pub logprob: f64,
    pub probs: Vec<f64>,
}

/// Tempered softmax restricted to the unmasked entries (`mask[i] == true`
/// means index `i` is available). Masked entries get probability exactly 0.
pub fn masked_softmax(logits: &[f64], mask: &[bool], temperature: f64) -> Result<Vec<f64>, NnError> {
    if mask.len() != logits.len() {
        return Err(NnError::ShapeMismatch { expected: logits.len(), found: mask.len() });
    }
    if !(temperature > 0.0) {
        return Err(NnError::InvalidTemperature(temperature));
    }
    let max = logits
        .iter()
        .zip(mask)
        .filter(|(_, &m)| m)
        .map(|(&l, _)| l / temperature)
        .fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return Err(NnError::AllMasked);
    }
    let mut probs: Vec<f64> = logits
        .iter()
        .zip(mask)
        .map(|(&l, &m)| if m { (l / temperature - max).exp() } else { 0.0 })
        .collect();
    let total: f64 = probs.iter().sum();
    probs.iter_mut().for_each(|p| *p /= total);
    Ok(probs)
}

pub fn softmax_policy<R: Rng + ?Sized>(
    logits: &[f64],
    mask: &[bool],
    temperature: f64,
    rng: &mut R,
) -> Result<PolicySample, NnError> {
    let probs = masked_softmax(logits, mask, temperature)?;
    let dist = WeightedIndex::new(&probs).map_err(|_| NnError::AllMasked)?;
    let action = dist.sample(rng);
    Ok(PolicySample { action, logprob: probs[action].ln(), probs })
}

/// Index of the most probable unmasked entry; ties go to the lowest index.
pub fn greedy_action(logits: &[f64], mask: &[bool]) -> Result<usize, NnError> {
    logits
        .iter()
        .zip(mask)
        .enumerate()
        .filter(|(_, (_, &m))| m)
        .fold(None, |best: Option<(usize, f64)>, (i, (&l, _))| match best {
            Some((_, b)) if b >= l => best,
            _ => Some((i, l)),
        })
        .map(|(i, _)| i)
        .ok_or(NnError::AllMasked)
}

/// Gradient of `log probs[action]` with respect to the logits.
pub fn logprob_grad(probs: &[f64], action: usize, temperature: f64) -> Vec<f64> {
    probs
        .iter()
        .enumerate()
        .map(|(i, &p)| {
            let onehot = if i == action { 1.0 } else { 0.0 };
            // Masked entries have p == 0 and are never the action.
            (onehot - p) / temperature
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn equal_logits_are_uniform() {
        let probs = masked_softmax(&[0.3; 4], &[true; 4], 1.0).unwrap();
        for p in probs {
            assert!((p - 0.25).abs() < 1e-15);
        }
    }

    #[test]
    fn single_unmasked_index_is_forced() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let s = softmax_policy(&[5.0, 1.0, 2.0], &[false, true, false], 1.0, &mut rng).unwrap();
        assert_eq!(s.action, 1);
        assert_eq!(s.logprob, 0.0);
        assert_eq!(s.probs, vec![0.0, 1.0, 0.0]);
    }

    #[test]
    fn two_logit_closed_form() {
        let probs = masked_softmax(&[1.0, 0.0], &[true, true], 1.0).unwrap();
        let e = std::f64::consts::E;
        assert!((probs[0] - e / (e + 1.0)).abs() < 1e-15);
        assert!((probs[1] - 1.0 / (e + 1.0)).abs() < 1e-15);
        assert!((probs[0] - 0.7311).abs() < 1e-4);
    }

    #[test]
    fn all_masked_is_an_error() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert!(matches!(softmax_policy(&[1.0, 2.0], &[false, false], 1.0, &mut rng), Err(NnError::AllMasked)));
    }

    #[test]
    fn logprob_gradient_matches_finite_differences() {
        let logits = [0.2, -1.0, 0.7, 0.1];
        let mask = [true, false, true, true];
        let t = 0.8;
        let probs = masked_softmax(&logits, &mask, t).unwrap();
        let g = logprob_grad(&probs, 2, t);
        for k in 0..4 {
            let mut plus = logits;
            plus[k] += 1e-6;
            let mut minus = logits;
            minus[k] -= 1e-6;
            let num = (masked_softmax(&plus, &mask, t).unwrap()[2].ln() - masked_softmax(&minus, &mask, t).unwrap()[2].ln()) / 2e-6;
            assert!((num - g[k]).abs() < 1e-8);
        }
    }
}
