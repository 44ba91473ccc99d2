//! Weight statistics and systematic resampling.

use rand::Rng;

use super::Particle;

/// Population variance of a weight vector.
pub fn weight_variance(weights: &[f64]) -> f64 {
    if weights.is_empty() {
        return 0.0;
    }
    let n = weights.len() as f64;
    let mean = weights.iter().sum::<f64>() / n;
    weights.iter().map(|w| (w - mean).powi(2)).sum::<f64>() / n
}

/// `1 / sum(w^2)` for normalized weights.
pub fn effective_sample_size(weights: &[f64]) -> f64 {
    1.0 / weights.iter().map(|w| w * w).sum::<f64>()
}

/// Low-variance resampling: one offset `u0 in [0, 1)` places `N` evenly spaced
/// pointers over the cumulative weights. Returns the selected source index for
/// each output slot, in non-decreasing order.
pub fn systematic_resample(weights: &[f64], u0: f64) -> Vec<usize> {
    let n = weights.len();
    let total: f64 = weights.iter().sum();
    let mut out = Vec::with_capacity(n);
    let mut cumulative = weights.first().copied().unwrap_or(0.0) / total;
    let mut i = 0;
    for j in 0..n {
        let pointer = (u0 + j as f64) / n as f64;
        while pointer >= cumulative && i + 1 < n {
            i += 1;
            cumulative += weights[i] / total;
        }
        out.push(i);
    }
    out
}

/// When to replace the particle set.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum ResampleTrigger {
    /// Resample when the variance of the normalized weights exceeds the threshold.
    WeightVariance { threshold: f64 },
    /// Resample when the effective sample size drops below `min_fraction * N`.
    EffectiveSampleSize { min_fraction: f64 },
}

impl ResampleTrigger {
    pub fn fires(&self, weights: &[f64]) -> bool {
        match *self {
            ResampleTrigger::WeightVariance { threshold } => weight_variance(weights) > threshold,
            ResampleTrigger::EffectiveSampleSize { min_fraction } => {
                effective_sample_size(weights) < min_fraction * weights.len() as f64
            }
        }
    }
}

/// Systematically resample `particles` if the variance of their (normalized)
/// weights exceeds `threshold`. Copies keep their source's pose and parent link
/// and receive weight `1/N`.
pub fn maybe_resample<R: Rng + ?Sized>(particles: &[Particle], threshold: f64, rng: &mut R) -> Option<Vec<Particle>> {
    let weights: Vec<f64> = particles.iter().map(|p| p.weight).collect();
    if weight_variance(&weights) <= threshold {
        return None;
    }
    Some(resample_with(particles, &weights, rng.random()))
}

pub(crate) fn resample_with(particles: &[Particle], weights: &[f64], u0: f64) -> Vec<Particle> {
    let uniform = 1.0 / particles.len() as f64;
    systematic_resample(weights, u0)
        .into_iter()
        .map(|src| Particle { weight: uniform, ..particles[src] })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::se3::Pose;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn counts(indices: &[usize], n: usize) -> Vec<usize> {
        let mut c = vec![0; n];
        for &i in indices {
            c[i] += 1;
        }
        c
    }

    /// Enumerate pointer positions directly: pointer j selects the first index
    /// whose cumulative weight exceeds it.
    fn enumerate_systematic(weights: &[f64], u0: f64) -> Vec<usize> {
        let n = weights.len();
        let total: f64 = weights.iter().sum();
        (0..n)
            .map(|j| {
                let pointer = (u0 + j as f64) / n as f64 * total;
                let mut acc = 0.0;
                weights
                    .iter()
                    .position(|w| {
                        acc += w;
                        pointer < acc
                    })
                    .unwrap_or(n - 1)
            })
            .collect()
    }

    #[test]
    fn uniform_weights_have_zero_variance() {
        assert_eq!(weight_variance(&[0.25; 4]), 0.0);
        let particles = vec![Particle { pose: Pose::identity(), weight: 0.25, parent: 0 }; 4];
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert!(maybe_resample(&particles, 1e-12, &mut rng).is_none());
    }

    #[test]
    fn one_hot_collapses_to_survivor() {
        let mut particles: Vec<_> = (0..100)
            .map(|i| Particle { pose: Pose::from_translation(i as f64, 0.0, 0.0), weight: 0.0, parent: i })
            .collect();
        particles[37].weight = 1.0;
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let out = maybe_resample(&particles, 1e-6, &mut rng).unwrap();
        assert_eq!(out.len(), 100);
        assert!(out.iter().all(|p| p.parent == 37 && p.pose.position.x == 37.0 && p.weight == 0.01));
    }

    #[test]
    fn matches_enumerated_counts() {
        let weights = [0.1, 0.2, 0.3, 0.4];
        for u0 in [0.0, 0.05, 0.3, 0.5, 0.77, 0.999] {
            let got = systematic_resample(&weights, u0);
            assert_eq!(got, enumerate_systematic(&weights, u0), "u0={u0}");
            for (c, w) in counts(&got, 4).iter().zip(weights) {
                let expected = 4.0 * w;
                assert!((*c as f64 - expected).abs() < 1.0 + 1e-12);
            }
        }
        // u0 = 0.3: pointers 0.075, 0.325, 0.575, 0.825
        assert_eq!(systematic_resample(&weights, 0.3), vec![0, 2, 2, 3]);
    }

    #[test]
    fn ess_trigger() {
        let trigger = ResampleTrigger::EffectiveSampleSize { min_fraction: 0.5 };
        assert!(!trigger.fires(&[0.25; 4]));
        assert!(trigger.fires(&[0.97, 0.01, 0.01, 0.01]));
    }
}
