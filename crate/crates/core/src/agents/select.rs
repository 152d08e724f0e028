//! Ranking and Boltzmann selection over variable-size candidate sets, and
//! the temperature schedule.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{domain, Error, Result};
use crate::neuralnet::Mlp;
use crate::scalar::{softmax, Scalar};

/// One actor forward pass per candidate: `actor([obs, action])`.
pub fn rank<T: Scalar>(actor: &Mlp<T>, obs: &[T], candidates: &[Vec<T>]) -> Result<Vec<T>> {
    if candidates.is_empty() {
        return Err(domain("cannot rank an empty candidate set"));
    }
    let mut input = Vec::with_capacity(obs.len() + candidates[0].len());
    candidates
        .iter()
        .map(|a| {
            input.clear();
            input.extend_from_slice(obs);
            input.extend_from_slice(a);
            actor.forward_scalar(&input)
        })
        .collect()
}

/// `softmax(beta * values)`, validated.
pub fn boltzmann_probs<T: Scalar>(values: &[T], beta: T) -> Result<Vec<T>> {
    if values.is_empty() {
        return Err(domain("Boltzmann selection over no values"));
    }
    if values.iter().any(|v| !v.is_finite()) {
        return Err(Error::Numeric("non-finite ranking value".into()));
    }
    if !(beta >= T::zero()) || !beta.is_finite() {
        return Err(domain(format!("inverse temperature {beta} must be finite and non-negative")));
    }
    Ok(softmax(values, beta))
}

/// Samples an index from `softmax(beta * values)`; returns it with the
/// probability vector.
pub fn boltzmann_select<T: Scalar, R: Rng + ?Sized>(values: &[T], beta: T, rng: &mut R) -> Result<(usize, Vec<T>)> {
    let probs = boltzmann_probs(values, beta)?;
    let u = T::lit(rng.random::<f64>());
    let mut acc = T::zero();
    let mut last_positive = 0;
    for (i, p) in probs.iter().enumerate() {
        if *p > T::zero() {
            last_positive = i;
        }
        acc = acc + *p;
        if u < acc {
            return Ok((i, probs));
        }
    }
    Ok((last_positive, probs))
}

/// Exponential decay of the exploration temperature from `start` to `end`
/// over `horizon` episodes, constant afterwards.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TemperatureSchedule {
    pub start: f64,
    pub end: f64,
    pub horizon: u32,
}

impl Default for TemperatureSchedule {
    fn default() -> Self {
        Self { start: 1.0, end: 0.01, horizon: 20 }
    }
}

impl TemperatureSchedule {
    pub fn temperature(&self, episode: u32) -> f64 {
        if self.horizon == 0 || episode >= self.horizon {
            return self.end;
        }
        self.start * (self.end / self.start).powf(f64::from(episode) / f64::from(self.horizon))
    }

    /// Inverse temperature used by the selector.
    pub fn beta(&self, episode: u32) -> f64 {
        1.0 / self.temperature(episode)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.start > 0.0 && self.end > 0.0 && self.start.is_finite() && self.end.is_finite()) {
            return Err(Error::Config("temperatures must be positive and finite".into()));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::neuralnet::Activation;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn probabilities_examples() {
        let p = boltzmann_probs(&[0.3f64, 0.3, 0.3], 2.0).unwrap();
        assert!(p.iter().all(|x| (x - 1.0 / 3.0).abs() < 1e-15));
        assert_eq!(boltzmann_probs(&[4.2f64], 9.0).unwrap(), vec![1.0]);
        let p = boltzmann_probs(&[1.0f64, 0.0], 1.0).unwrap();
        let e = std::f64::consts::E;
        assert!((p[0] - e / (e + 1.0)).abs() < 1e-15);
        assert!((p[1] - 1.0 / (e + 1.0)).abs() < 1e-15);
    }

    #[test]
    fn selector_errors() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert!(boltzmann_select(&[f64::NAN, 1.0], 1.0, &mut rng).is_err());
        assert!(boltzmann_select::<f64, _>(&[], 1.0, &mut rng).is_err());
        assert!(boltzmann_select(&[1.0f64], -1.0, &mut rng).is_err());
    }

    #[test]
    fn zero_beta_is_uniform() {
        let p = boltzmann_probs(&[5.0f64, -3.0, 0.0, 1.0], 0.0).unwrap();
        assert!(p.iter().all(|x| (x - 0.25).abs() < 1e-15));
    }

    #[test]
    fn schedule_examples() {
        let s = TemperatureSchedule::default();
        assert_eq!(s.temperature(0), 1.0);
        assert!((s.temperature(10) - 0.1).abs() < 1e-12);
        assert_eq!(s.temperature(20), 0.01);
        assert_eq!(s.temperature(500), 0.01);
        assert!((s.beta(10) - 10.0).abs() < 1e-9);
        let t: Vec<f64> = (0..=20).map(|e| s.temperature(e)).collect();
        assert!(t.windows(2).all(|w| w[1] < w[0]));
    }

    #[test]
    fn rank_examples() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let actor = Mlp::<f64>::new(&[3, 4, 1], Activation::Sigmoid, &mut rng).unwrap();
        let obs = [0.1, 0.2];
        let a = vec![0.5];
        let b = vec![0.9];
        let r = rank(&actor, &obs, &[a.clone(), b.clone(), a.clone()]).unwrap();
        assert_eq!(r[0], r[2]);
        assert!(r.iter().all(|v| (0.0..=1.0).contains(v)));
        let swapped = rank(&actor, &obs, &[b, a]).unwrap();
        assert_eq!(swapped, vec![r[1], r[0]]);
        assert_eq!(rank(&actor, &obs, &[vec![0.5]]).unwrap().len(), 1);
        assert!(rank(&actor, &obs, &[]).is_err());
    }
}
