//! Softmax-categorical helpers over raw logits.

use rand::Rng;

/// Numerically stable `log(softmax(logits))`.
pub fn log_softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lse = max + logits.iter().map(|&z| (z - max).exp()).sum::<f64>().ln();
    logits.iter().map(|&z| z - lse).collect()
}

pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|&z| (z - max).exp()).collect();
    let total: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / total).collect()
}

pub fn entropy(logits: &[f64]) -> f64 {
    log_softmax(logits)
        .into_iter()
        .map(|lp| {
            let p = lp.exp();
            if p > 0.0 {
                -p * lp
            } else {
                0.0
            }
        })
        .sum()
}

/// Draws an index from `softmax(logits)` and returns it with its log-probability.
pub fn sample<R: Rng + ?Sized>(logits: &[f64], rng: &mut R) -> (usize, f64) {
    let logp = log_softmax(logits);
    let u: f64 = rng.random();
    let mut acc = 0.0;
    let mut chosen = logp.len() - 1;
    for (i, lp) in logp.iter().enumerate() {
        acc += lp.exp();
        if u < acc {
            chosen = i;
            break;
        }
    }
    (chosen, logp[chosen])
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn uniform_logits() {
        let logits = [0.0; 18];
        assert!((entropy(&logits) - 18f64.ln()).abs() < 1e-12);
        assert!((entropy(&logits) - 2.8904).abs() < 1e-4);
        for p in softmax(&logits) {
            assert!((p - 1.0 / 18.0).abs() < 1e-15);
        }
    }

    #[test]
    fn dominant_logit_is_sampled() {
        let mut logits = [0.0; 18];
        logits[7] = 50.0;
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..100 {
            let (i, lp) = sample(&logits, &mut rng);
            assert_eq!(i, 7);
            assert!(lp.abs() < 1e-18);
        }
    }

    #[test]
    fn extreme_logits_stay_finite() {
        let logits = [1e4, -1e4, 0.0, 5e3];
        assert!(log_softmax(&logits).iter().all(|x| x.is_finite()));
        let s: f64 = softmax(&logits).iter().sum();
        assert!((s - 1.0).abs() < 1e-12);
        assert!(entropy(&logits).is_finite());
    }
}
