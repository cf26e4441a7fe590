//! Action distributions and their derivatives with respect to the head outputs.

use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::trajectory::Action;

const LN_2PI: f64 = 1.837_877_066_409_345_5;

#[derive(Debug, Clone, PartialEq)]
pub enum ActionDistribution {
    Categorical { logits: Vec<f64> },
    Gaussian { mean: Vec<f64>, log_std: Vec<f64> },
}

fn log_softmax(logits: &[f64]) -> Vec<f64> {
    let m = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lse = m + logits.iter().map(|l| (l - m).exp()).sum::<f64>().ln();
    logits.iter().map(|l| l - lse).collect()
}

impl ActionDistribution {
    /// Number of head outputs the distribution is parameterized by
    /// (logits, or mean followed by log-std).
    pub fn head_len(&self) -> usize {
        match self {
            ActionDistribution::Categorical { logits } => logits.len(),
            ActionDistribution::Gaussian { mean, .. } => 2 * mean.len(),
        }
    }

    pub fn probs(&self) -> Option<Vec<f64>> {
        match self {
            ActionDistribution::Categorical { logits } => {
                Some(log_softmax(logits).into_iter().map(f64::exp).collect())
            }
            ActionDistribution::Gaussian { .. } => None,
        }
    }

    pub fn log_prob(&self, action: &Action) -> Result<f64> {
        match (self, action) {
            (ActionDistribution::Categorical { logits }, Action::Discrete(a)) => {
                if *a >= logits.len() {
                    return Err(Error::InvalidAction(format!(
                        "index {a} out of range for {} actions",
                        logits.len()
                    )));
                }
                Ok(log_softmax(logits)[*a])
            }
            (ActionDistribution::Gaussian { mean, log_std }, Action::Continuous(x)) => {
                if x.len() != mean.len() {
                    return Err(Error::DimensionMismatch {
                        expected: mean.len(),
                        got: x.len(),
                    });
                }
                Ok(mean
                    .iter()
                    .zip(log_std)
                    .zip(x)
                    .map(|((m, ls), x)| {
                        let z = (x - m) / ls.exp();
                        -0.5 * z * z - ls - 0.5 * LN_2PI
                    })
                    .sum())
            }
            _ => Err(Error::InvalidAction(format!(
                "action {action} does not belong to this distribution"
            ))),
        }
    }

    /// Gradient of `log_prob(action)` with respect to the head outputs.
    pub fn d_log_prob(&self, action: &Action) -> Result<Vec<f64>> {
        match (self, action) {
            (ActionDistribution::Categorical { logits }, Action::Discrete(a)) => {
                if *a >= logits.len() {
                    return Err(Error::InvalidAction(format!("index {a} out of range")));
                }
                let mut g: Vec<f64> = self.probs().unwrap().into_iter().map(|p| -p).collect();
                g[*a] += 1.0;
                Ok(g)
            }
            (ActionDistribution::Gaussian { mean, log_std }, Action::Continuous(x)) => {
                if x.len() != mean.len() {
                    return Err(Error::DimensionMismatch {
                        expected: mean.len(),
                        got: x.len(),
                    });
                }
                let d = mean.len();
                let mut g = vec![0.0; 2 * d];
                for i in 0..d {
                    let inv_var = (-2.0 * log_std[i]).exp();
                    let diff = x[i] - mean[i];
                    g[i] = diff * inv_var;
                    g[d + i] = diff * diff * inv_var - 1.0;
                }
                Ok(g)
            }
            _ => Err(Error::InvalidAction(format!(
                "action {action} does not belong to this distribution"
            ))),
        }
    }

    pub fn entropy(&self) -> f64 {
        match self {
            ActionDistribution::Categorical { logits } => {
                let lp = log_softmax(logits);
                -lp.iter().map(|l| l.exp() * l).sum::<f64>()
            }
            ActionDistribution::Gaussian { log_std, .. } => log_std
                .iter()
                .map(|ls| ls + 0.5 * (LN_2PI + 1.0))
                .sum(),
        }
    }

    /// Gradient of the entropy with respect to the head outputs.
    pub fn d_entropy(&self) -> Vec<f64> {
        match self {
            ActionDistribution::Categorical { logits } => {
                let lp = log_softmax(logits);
                let h = -lp.iter().map(|l| l.exp() * l).sum::<f64>();
                lp.iter().map(|l| -l.exp() * (l + h)).collect()
            }
            ActionDistribution::Gaussian { mean, .. } => {
                let d = mean.len();
                let mut g = vec![0.0; 2 * d];
                g[d..].iter_mut().for_each(|v| *v = 1.0);
                g
            }
        }
    }

    /// KL(self ‖ other).
    pub fn kl(&self, other: &ActionDistribution) -> Result<f64> {
        match (self, other) {
            (
                ActionDistribution::Categorical { logits: p },
                ActionDistribution::Categorical { logits: q },
            ) if p.len() == q.len() => {
                let lp = log_softmax(p);
                let lq = log_softmax(q);
                Ok(lp
                    .iter()
                    .zip(&lq)
                    .map(|(a, b)| a.exp() * (a - b))
                    .sum::<f64>()
                    .max(0.0))
            }
            (
                ActionDistribution::Gaussian {
                    mean: m1,
                    log_std: s1,
                },
                ActionDistribution::Gaussian {
                    mean: m2,
                    log_std: s2,
                },
            ) if m1.len() == m2.len() => {
                let mut kl = 0.0;
                for i in 0..m1.len() {
                    let var1 = (2.0 * s1[i]).exp();
                    let var2 = (2.0 * s2[i]).exp();
                    kl += s2[i] - s1[i] + (var1 + (m1[i] - m2[i]).powi(2)) / (2.0 * var2) - 0.5;
                }
                Ok(kl.max(0.0))
            }
            _ => Err(Error::FamilyMismatch),
        }
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Action {
        match self {
            ActionDistribution::Categorical { .. } => {
                let probs = self.probs().unwrap();
                let u: f64 = rng.gen();
                let mut acc = 0.0;
                for (i, p) in probs.iter().enumerate() {
                    acc += p;
                    if u < acc {
                        return Action::Discrete(i);
                    }
                }
                // Rounding left a sliver above the cumulative sum.
                let last = probs.iter().rposition(|&p| p > 0.0).unwrap_or(0);
                Action::Discrete(last)
            }
            ActionDistribution::Gaussian { mean, log_std } => Action::Continuous(
                mean.iter()
                    .zip(log_std)
                    .map(|(m, ls)| {
                        let z: f64 = rng.sample(StandardNormal);
                        m + ls.exp() * z
                    })
                    .collect(),
            ),
        }
    }

    /// Most likely action: lowest-index argmax for categorical, the mean for
    /// Gaussian.
    pub fn greedy(&self) -> Action {
        match self {
            ActionDistribution::Categorical { logits } => {
                let mut best = 0;
                for (i, l) in logits.iter().enumerate() {
                    if *l > logits[best] {
                        best = i;
                    }
                }
                Action::Discrete(best)
            }
            ActionDistribution::Gaussian { mean, .. } => Action::Continuous(mean.clone()),
        }
    }
}
