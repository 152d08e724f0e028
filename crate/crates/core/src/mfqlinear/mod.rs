//! Linear mean-field Q-learning on small Markov games: linear-span Q
//! functions, the TD update, the mean ODE of the update and its equilibrium.

pub mod experiment;
pub mod game;
pub mod ode;

use nalgebra::DMatrix;

use crate::error::{domain, Error, Result};
use crate::scalar::{softmax, Scalar};

pub use experiment::{
    run_convergence_experiment, ConvergenceReport, ConvergenceSettings, EpisodeReport, StepSchedule, TemperatureDecay,
};
pub use game::{chain_mdp, coordination_game, single_state_game, Domain, SmallGame};
pub use ode::{equilibrium_and_stability, estimate_ode, stationary_distribution, Equilibrium, OdeEstimate, OdeEstimator};

/// `P` features for every point of a [`Domain`], stored as a table.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureBasis<T> {
    domain: Domain,
    dim: usize,
    table: Vec<Vec<T>>,
}

impl<T: Scalar> FeatureBasis<T> {
    /// Tabulates `f(state, mean_action, action)` and checks that the `dim`
    /// columns are linearly independent over the domain.
    pub fn from_fn<F>(dom: Domain, dim: usize, f: F) -> Result<Self>
    where
        F: Fn(usize, f64, usize) -> Vec<T>,
    {
        if dim == 0 || dom.is_empty() {
            return Err(domain("basis needs a non-empty domain and at least one function"));
        }
        let table: Vec<Vec<T>> = dom.points().map(|(s, l, a)| f(s, dom.mean_action(l), a)).collect();
        if let Some(row) = table.iter().find(|r| r.len() != dim) {
            return Err(Error::Dimension {
                expected: dim,
                got: row.len(),
            });
        }
        if table.iter().flatten().any(|x| !x.is_finite()) {
            return Err(domain("basis values must be finite"));
        }
        let m = DMatrix::from_fn(table.len(), dim, |i, j| table[i][j].to_f64_lossy());
        let sv = m.singular_values();
        let top = sv.max();
        let rank = sv.iter().filter(|&&s| s > top * 1e-10 * dim.max(table.len()) as f64).count();
        if rank < dim {
            return Err(domain(format!("basis functions are linearly dependent (rank {rank} < {dim})")));
        }
        Ok(Self { domain: dom, dim, table })
    }

    /// One indicator per domain point: the tabular case.
    pub fn one_hot(domain: Domain) -> Self {
        let n = domain.len();
        let table = (0..n)
            .map(|i| (0..n).map(|j| if i == j { T::one() } else { T::zero() }).collect())
            .collect();
        Self { domain, dim: n, table }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn domain(&self) -> Domain {
        self.domain
    }

    pub fn features(&self, state: usize, level: usize, action: usize) -> Result<&[T]> {
        if !self.domain.contains(state, level, action) {
            return Err(domain(format!("point ({state}, {level}, {action}) outside the domain")));
        }
        Ok(&self.table[self.domain.index(state, level, action)])
    }
}

/// `Q(s, (ā, a)) = ω(s, ā, a)ᵀ φ`.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearQ<T> {
    pub phi: Vec<T>,
}

impl<T: Scalar> LinearQ<T> {
    pub fn zeros(dim: usize) -> Self {
        Self { phi: vec![T::zero(); dim] }
    }

    pub fn new(phi: Vec<T>) -> Result<Self> {
        if phi.iter().any(|x| !x.is_finite()) {
            return Err(Error::Numeric("non-finite parameter".into()));
        }
        Ok(Self { phi })
    }

    fn check(&self, basis: &FeatureBasis<T>) -> Result<()> {
        if self.phi.len() != basis.dim() {
            return Err(Error::Dimension {
                expected: basis.dim(),
                got: self.phi.len(),
            });
        }
        Ok(())
    }

    pub fn evaluate(&self, basis: &FeatureBasis<T>, state: usize, level: usize, action: usize) -> Result<T> {
        self.check(basis)?;
        let w = basis.features(state, level, action)?;
        Ok(w.iter().zip(&self.phi).map(|(w, p)| *w * *p).sum())
    }

    /// Q over all actions at `(state, level)`.
    pub fn values(&self, basis: &FeatureBasis<T>, state: usize, level: usize) -> Result<Vec<T>> {
        (0..basis.domain().actions).map(|a| self.evaluate(basis, state, level, a)).collect()
    }

    pub fn norm_inf(&self) -> T {
        self.phi.iter().fold(T::zero(), |m, x| m.max(x.abs()))
    }
}

/// Boltzmann policy over `q` at temperature `t`.
pub fn boltzmann<T: Scalar>(q: &[T], temperature: T) -> Result<Vec<T>> {
    if !(temperature > T::zero()) {
        return Err(domain("temperature must be positive"));
    }
    Ok(softmax(q, T::one() / temperature))
}

/// One observed transition from a single agent's point of view.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Transition<T> {
    pub state: usize,
    pub level: usize,
    pub action: usize,
    pub reward: T,
    pub next_state: usize,
    pub next_level: usize,
}

/// `r + γ E_{a'∼π}[Q(s', ā', a')] − Q(s, ā, a)` with π the Boltzmann policy of
/// the current Q, the expectation taken exactly.
pub fn td_delta<T: Scalar>(q: &LinearQ<T>, basis: &FeatureBasis<T>, tr: &Transition<T>, gamma: T, temperature: T) -> Result<T> {
    if !(gamma >= T::zero() && gamma < T::one()) {
        return Err(domain("discount must lie in [0, 1)"));
    }
    let next = q.values(basis, tr.next_state, tr.next_level)?;
    let pi = boltzmann(&next, temperature)?;
    let expected: T = pi.iter().zip(&next).map(|(p, v)| *p * *v).sum();
    Ok(tr.reward + gamma * expected - q.evaluate(basis, tr.state, tr.level, tr.action)?)
}

/// In-place update `φ ← φ + α Δ ω(s, ā, a)`; returns Δ.
pub fn td_step<T: Scalar>(
    q: &mut LinearQ<T>,
    basis: &FeatureBasis<T>,
    tr: &Transition<T>,
    alpha: T,
    gamma: T,
    temperature: T,
) -> Result<T> {
    if !(alpha >= T::zero()) {
        return Err(domain("step size must be non-negative"));
    }
    let delta = td_delta(q, basis, tr, gamma, temperature)?;
    let w = basis.features(tr.state, tr.level, tr.action)?;
    for (p, w) in q.phi.iter_mut().zip(w) {
        *p = *p + alpha * delta * *w;
    }
    Ok(delta)
}

pub fn update<T: Scalar>(
    q: &LinearQ<T>,
    basis: &FeatureBasis<T>,
    tr: &Transition<T>,
    alpha: T,
    gamma: T,
    temperature: T,
) -> Result<LinearQ<T>> {
    let mut next = q.clone();
    td_step(&mut next, basis, tr, alpha, gamma, temperature)?;
    Ok(next)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn small() -> Domain {
        Domain {
            states: 2,
            levels: 2,
            actions: 2,
        }
    }

    fn tr(reward: f64) -> Transition<f64> {
        Transition {
            state: 0,
            level: 1,
            action: 1,
            reward,
            next_state: 1,
            next_level: 0,
        }
    }

    #[test]
    fn zero_phi_evaluates_to_zero() {
        let b = FeatureBasis::<f64>::one_hot(small());
        let q = LinearQ::zeros(b.dim());
        for (s, l, a) in small().points() {
            assert_eq!(q.evaluate(&b, s, l, a).unwrap(), 0.0);
        }
    }

    #[test]
    fn one_hot_reads_the_entry() {
        let d = small();
        let b = FeatureBasis::<f64>::one_hot(d);
        let q = LinearQ::new((0..d.len()).map(|i| i as f64 * 1.5).collect()).unwrap();
        for (s, l, a) in d.points() {
            assert_eq!(q.evaluate(&b, s, l, a).unwrap(), d.index(s, l, a) as f64 * 1.5);
        }
    }

    #[test]
    fn evaluate_is_a_dot_product() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let d = small();
        let b = FeatureBasis::from_fn(d, 3, |s, m, a| vec![1.0, s as f64 + m, (a as f64 + 1.0).ln() + m * m]).unwrap();
        for _ in 0..50 {
            let phi: Vec<f64> = (0..3).map(|_| rng.random_range(-5.0..5.0)).collect();
            let (s, l, a) = (rng.random_range(0..2), rng.random_range(0..2), rng.random_range(0..2));
            let m = d.mean_action(l);
            let w = [1.0, s as f64 + m, (a as f64 + 1.0).ln() + m * m];
            let hand = w[0] * phi[0] + w[1] * phi[1] + w[2] * phi[2];
            let q = LinearQ::new(phi).unwrap();
            assert!((q.evaluate(&b, s, l, a).unwrap() - hand).abs() < 1e-12);
        }
    }

    #[test]
    fn dependent_basis_rejected() {
        let r = FeatureBasis::<f64>::from_fn(small(), 2, |s, _, _| vec![s as f64, 2.0 * s as f64]);
        assert!(r.is_err());
        let r = FeatureBasis::<f64>::from_fn(small(), 9, |_, _, _| vec![1.0; 9]);
        assert!(r.is_err());
    }

    #[test]
    fn td_delta_trivial_cases() {
        let b = FeatureBasis::<f64>::one_hot(small());
        let q = LinearQ::new((0..8).map(|i| i as f64).collect()).unwrap();
        let d = td_delta(&q, &b, &tr(3.0), 0.0, 1.0).unwrap();
        assert_eq!(d, 3.0 - q.evaluate(&b, 0, 1, 1).unwrap());
        let zero = LinearQ::zeros(8);
        assert_eq!(td_delta(&zero, &b, &tr(3.0), 0.9, 1.0).unwrap(), 3.0);
        assert!(td_delta(&q, &b, &tr(3.0), 1.0, 1.0).is_err());
    }

    #[test]
    fn td_delta_softmax_expectation() {
        let d = small();
        let b = FeatureBasis::<f64>::one_hot(d);
        let mut phi = vec![0.0; 8];
        phi[d.index(0, 1, 1)] = 0.25;
        phi[d.index(1, 0, 0)] = 1.0;
        phi[d.index(1, 0, 1)] = 3.0;
        let q = LinearQ::new(phi).unwrap();
        let (e1, e3) = (1f64.exp(), 3f64.exp());
        let expect = (e1 * 1.0 + e3 * 3.0) / (e1 + e3);
        let hand = 2.0 + 0.9 * expect - 0.25;
        assert!((td_delta(&q, &b, &tr(2.0), 0.9, 1.0).unwrap() - hand).abs() < 1e-10);
    }

    #[test]
    fn update_edge_cases() {
        let b = FeatureBasis::<f64>::one_hot(small());
        let q = LinearQ::new((0..8).map(|i| i as f64 * 0.1).collect()).unwrap();
        assert_eq!(update(&q, &b, &tr(5.0), 0.0, 0.5, 1.0).unwrap(), q);
        // reward chosen so that delta is exactly zero
        let r = q.evaluate(&b, 0, 1, 1).unwrap() - 0.5 * {
            let next = q.values(&b, 1, 0).unwrap();
            let pi = boltzmann(&next, 1.0).unwrap();
            pi[0] * next[0] + pi[1] * next[1]
        };
        let delta = td_delta(&q, &b, &tr(r), 0.5, 1.0).unwrap();
        assert!(delta.abs() < 1e-15);
        let moved = update(&q, &b, &tr(r), 0.3, 0.5, 1.0).unwrap();
        for (x, y) in moved.phi.iter().zip(&q.phi) {
            assert!((x - y).abs() < 1e-15);
        }
    }

    #[test]
    fn delta_scales_with_rewards() {
        let b = FeatureBasis::<f64>::from_fn(small(), 3, |s, m, a| vec![1.0, s as f64 - m, a as f64]).unwrap();
        let q = LinearQ::new(vec![0.3, -1.2, 0.7]).unwrap();
        let c = 4.0;
        let qc = LinearQ::new(q.phi.iter().map(|x| x * c).collect()).unwrap();
        // the policy temperature scales with c so that π is unchanged
        let d = td_delta(&q, &b, &tr(1.5), 0.8, 0.5).unwrap();
        let dc = td_delta(&qc, &b, &tr(1.5 * c), 0.8, 0.5 * c).unwrap();
        assert!((dc - c * d).abs() < 1e-12);
    }
}
