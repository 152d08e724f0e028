//! Mean ODE `dφ/dt = A_φ φ + b_φ` of the linear TD update and its equilibrium.

use nalgebra::{DMatrix, DVector};
use rand::distr::{weighted::WeightedIndex, Distribution};
use rand::Rng;

use super::{boltzmann, FeatureBasis, LinearQ, SmallGame};
use crate::error::{domain, Error, Result};

/// How expectations over the stationary distribution are taken.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OdeEstimator {
    /// Enumerate (state, previous joint action, joint action, next state).
    Exact,
    /// Average over a simulated trajectory after a burn-in.
    MonteCarlo { samples: usize, burn_in: usize },
}

#[derive(Debug, Clone, PartialEq)]
pub struct OdeEstimate {
    pub a: DMatrix<f64>,
    pub b: DVector<f64>,
}

/// The chain the agents induce lives on (state, previous joint action).
struct Chain<'a> {
    game: &'a SmallGame,
    qs: &'a [LinearQ<f64>],
    basis: &'a FeatureBasis<f64>,
    temperature: f64,
}

impl Chain<'_> {
    fn size(&self) -> usize {
        self.game.states * self.game.joint_actions()
    }

    fn policy(&self, agent: usize, state: usize, level: usize) -> Result<Vec<f64>> {
        boltzmann(&self.qs[agent].values(self.basis, state, level)?, self.temperature)
    }

    /// Distribution of the joint action played from `(state, last joint)`.
    fn joint_policy(&self, state: usize, last: usize) -> Result<Vec<f64>> {
        let g = self.game;
        let per_agent: Vec<Vec<f64>> = (0..g.agents)
            .map(|i| self.policy(i, state, g.mean_level(last, i)))
            .collect::<Result<_>>()?;
        Ok((0..g.joint_actions())
            .map(|j| (0..g.agents).map(|i| per_agent[i][g.action_of(j, i)]).product())
            .collect())
    }

    /// `Σ_a' π(a'|s', ā') ω(s', ā', a')` for one agent.
    fn expected_features(&self, agent: usize, state: usize, level: usize) -> Result<DVector<f64>> {
        let pi = self.policy(agent, state, level)?;
        let mut out = DVector::zeros(self.basis.dim());
        for (a, p) in pi.iter().enumerate() {
            out += DVector::from_column_slice(self.basis.features(state, level, a)?) * *p;
        }
        Ok(out)
    }
}

fn check_inputs(game: &SmallGame, qs: &[LinearQ<f64>], basis: &FeatureBasis<f64>, agent: usize) -> Result<()> {
    game.validate()?;
    if qs.len() != game.agents || agent >= game.agents {
        return Err(domain("need one Q function per agent and a valid agent index"));
    }
    if basis.domain() != game.domain() {
        return Err(domain("basis domain does not match the game"));
    }
    for q in qs {
        if q.phi.len() != basis.dim() {
            return Err(Error::Dimension {
                expected: basis.dim(),
                got: q.phi.len(),
            });
        }
    }
    Ok(())
}

/// Stationary distribution over (state, previous joint action), indexed
/// `state * joint_actions + joint`, by power iteration on the lazy chain
/// started from uniform.
pub fn stationary_distribution(
    game: &SmallGame,
    qs: &[LinearQ<f64>],
    basis: &FeatureBasis<f64>,
    temperature: f64,
) -> Result<Vec<f64>> {
    check_inputs(game, qs, basis, 0)?;
    let chain = Chain {
        game,
        qs,
        basis,
        temperature,
    };
    stationary(&chain)
}

fn stationary(chain: &Chain) -> Result<Vec<f64>> {
    let g = chain.game;
    let n = chain.size();
    let ja = g.joint_actions();
    let mut p = DMatrix::<f64>::zeros(n, n);
    for s in 0..g.states {
        for last in 0..ja {
            let pi = chain.joint_policy(s, last)?;
            for (j, pj) in pi.iter().enumerate() {
                for (s2, ps) in g.transitions[s][j].iter().enumerate() {
                    p[(s * ja + last, s2 * ja + j)] += pj * ps;
                }
            }
        }
    }
    // lazy chain: same stationary law, aperiodic
    let lazy = (p + DMatrix::identity(n, n)) * 0.5;
    let lazy_t = lazy.transpose();
    let mut d = DVector::from_element(n, 1.0 / n as f64);
    for _ in 0..1_000_000 {
        let next = &lazy_t * &d;
        let diff = (&next - &d).abs().sum();
        d = next;
        if diff < 1e-15 {
            break;
        }
    }
    Ok(d.iter().copied().collect())
}

/// Estimates `A_φ = E[ω (γ E_π[ω'] − ω)ᵀ]` and `b_φ = E[ω r]` for `agent` at the
/// current parameters of all agents.
pub fn estimate_ode<R: Rng + ?Sized>(
    game: &SmallGame,
    qs: &[LinearQ<f64>],
    basis: &FeatureBasis<f64>,
    agent: usize,
    temperature: f64,
    estimator: OdeEstimator,
    rng: &mut R,
) -> Result<OdeEstimate> {
    check_inputs(game, qs, basis, agent)?;
    let chain = Chain {
        game,
        qs,
        basis,
        temperature,
    };
    let p = basis.dim();
    let mut a = DMatrix::<f64>::zeros(p, p);
    let mut b = DVector::<f64>::zeros(p);
    let ja = game.joint_actions();
    let mut accumulate = |weight: f64, s: usize, last: usize, joint: usize, s2: usize| -> Result<()> {
        let level = game.mean_level(last, agent);
        let w = DVector::from_column_slice(basis.features(s, level, game.action_of(joint, agent))?);
        let next = chain.expected_features(agent, s2, game.mean_level(joint, agent))?;
        a += &w * (next * game.gamma - &w).transpose() * weight;
        b += &w * (game.reward(s, joint, agent) * weight);
        Ok(())
    };
    match estimator {
        OdeEstimator::Exact => {
            let d = stationary(&chain)?;
            for s in 0..game.states {
                for last in 0..ja {
                    let dz = d[s * ja + last];
                    if dz == 0.0 {
                        continue;
                    }
                    for (joint, pj) in chain.joint_policy(s, last)?.into_iter().enumerate() {
                        for (s2, ps) in game.transitions[s][joint].iter().enumerate() {
                            let w = dz * pj * ps;
                            if w > 0.0 {
                                accumulate(w, s, last, joint, s2)?;
                            }
                        }
                    }
                }
            }
        }
        OdeEstimator::MonteCarlo { samples, burn_in } => {
            if samples == 0 {
                return Err(domain("Monte-Carlo budget must be positive"));
            }
            let mut s = rng.random_range(0..game.states);
            let mut last = rng.random_range(0..ja);
            let weight = 1.0 / samples as f64;
            for k in 0..burn_in + samples {
                let joint = sample(&chain.joint_policy(s, last)?, rng)?;
                let s2 = sample(&game.transitions[s][joint], rng)?;
                if k >= burn_in {
                    accumulate(weight, s, last, joint, s2)?;
                }
                s = s2;
                last = joint;
            }
        }
    }
    Ok(OdeEstimate { a, b })
}

fn sample<R: Rng + ?Sized>(weights: &[f64], rng: &mut R) -> Result<usize> {
    let dist = WeightedIndex::new(weights).map_err(|e| Error::Numeric(format!("bad distribution: {e}")))?;
    Ok(dist.sample(rng))
}

#[derive(Debug, Clone, PartialEq)]
pub struct Equilibrium {
    pub phi: DVector<f64>,
    /// All eigenvalues of the symmetric part of A are negative.
    pub stable: bool,
    pub residual: f64,
    pub condition: f64,
}

/// Largest condition number accepted before A counts as singular.
pub const MAX_CONDITION: f64 = 1e12;

/// Solves `A φ* + b = 0` and checks negative definiteness of A.
pub fn equilibrium_and_stability(a: &DMatrix<f64>, b: &DVector<f64>) -> Result<Equilibrium> {
    if !a.is_square() || a.nrows() != b.len() {
        return Err(Error::Dimension {
            expected: a.nrows(),
            got: if a.is_square() { b.len() } else { a.ncols() },
        });
    }
    if a.iter().chain(b.iter()).any(|x| !x.is_finite()) {
        return Err(Error::Numeric("non-finite ODE matrix".into()));
    }
    let sv = a.singular_values();
    let (hi, lo) = (sv.max(), sv.min());
    let condition = if lo > 0.0 { hi / lo } else { f64::INFINITY };
    if !(condition <= MAX_CONDITION) {
        return Err(Error::Singular { condition });
    }
    let phi = a.clone().lu().solve(&(-b)).ok_or(Error::Singular { condition })?;
    let residual = (a * &phi + b).norm();
    let sym = (a + a.transpose()) * 0.5;
    let stable = sym.symmetric_eigenvalues().iter().all(|&e| e < 0.0);
    Ok(Equilibrium {
        phi,
        stable,
        residual,
        condition,
    })
}

#[cfg(test)]
mod tests {
    use super::super::{chain_mdp, coordination_game, single_state_game};
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn rng() -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(11)
    }

    #[test]
    fn single_point_ode() {
        let g = single_state_game(1.0, 0.5).unwrap();
        let basis = FeatureBasis::one_hot(g.domain());
        let q = vec![LinearQ::zeros(1)];
        let est = estimate_ode(&g, &q, &basis, 0, 1.0, OdeEstimator::Exact, &mut rng()).unwrap();
        assert!((est.a[(0, 0)] - (0.5 - 1.0)).abs() < 1e-15);
        assert!((est.b[0] - 1.0).abs() < 1e-15);
        let eq = equilibrium_and_stability(&est.a, &est.b).unwrap();
        assert!((eq.phi[0] - 2.0).abs() < 1e-9);
        assert!(eq.residual < 1e-10);
        assert!(eq.stable);
    }

    #[test]
    fn zero_budget_rejected() {
        let g = chain_mdp();
        let basis = FeatureBasis::one_hot(g.domain());
        let q = vec![LinearQ::zeros(basis.dim())];
        let r = estimate_ode(&g, &q, &basis, 0, 1.0, OdeEstimator::MonteCarlo { samples: 0, burn_in: 0 }, &mut rng());
        assert!(r.is_err());
    }

    #[test]
    fn monte_carlo_agrees_with_enumeration() {
        let g = chain_mdp();
        let basis = FeatureBasis::one_hot(g.domain());
        let q = vec![LinearQ::new(vec![0.2, 1.0, 1.5, -0.3]).unwrap()];
        let exact = estimate_ode(&g, &q, &basis, 0, 1.0, OdeEstimator::Exact, &mut rng()).unwrap();
        let mc = estimate_ode(
            &g,
            &q,
            &basis,
            0,
            1.0,
            OdeEstimator::MonteCarlo {
                samples: 1_000_000,
                burn_in: 1000,
            },
            &mut rng(),
        )
        .unwrap();
        assert!((&exact.a - &mc.a).amax() < 1e-2);
        assert!((&exact.b - &mc.b).amax() < 1e-2);
    }

    #[test]
    fn rewards_scale_b_only() {
        let g = coordination_game();
        let mut scaled = g.clone();
        for row in scaled.rewards.iter_mut().flatten() {
            for r in row.iter_mut() {
                *r *= 3.0;
            }
        }
        scaled.reward_bound *= 3.0;
        let basis = FeatureBasis::one_hot(g.domain());
        let qs = vec![LinearQ::new(vec![1.0, 0.0, 0.5, 2.0]).unwrap(), LinearQ::zeros(4)];
        let e1 = estimate_ode(&g, &qs, &basis, 0, 1.0, OdeEstimator::Exact, &mut rng()).unwrap();
        let e3 = estimate_ode(&scaled, &qs, &basis, 0, 1.0, OdeEstimator::Exact, &mut rng()).unwrap();
        assert!((&e1.a - &e3.a).amax() < 1e-15);
        assert!((&e1.b * 3.0 - &e3.b).amax() < 1e-12);
    }

    #[test]
    fn equilibrium_trivial_cases() {
        let a = -DMatrix::<f64>::identity(3, 3);
        let b = DVector::from_vec(vec![1.0, -2.0, 0.5]);
        let eq = equilibrium_and_stability(&a, &b).unwrap();
        assert!(eq.stable);
        assert!((&eq.phi - &b).amax() < 1e-15);
        let zero = equilibrium_and_stability(&DMatrix::from_row_slice(2, 2, &[-2.0, 1.0, 0.0, -1.0]), &DVector::zeros(2)).unwrap();
        assert_eq!(zero.phi.amax(), 0.0);
        match equilibrium_and_stability(&DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 4.0]), &DVector::zeros(2)) {
            Err(Error::Singular { condition }) => assert!(condition > MAX_CONDITION),
            other => panic!("expected singular, got {other:?}"),
        }
        let unstable = equilibrium_and_stability(&DMatrix::identity(2, 2), &DVector::from_vec(vec![1.0, 1.0])).unwrap();
        assert!(!unstable.stable);
    }

    #[test]
    fn stationary_sums_to_one() {
        let g = coordination_game();
        let basis = FeatureBasis::one_hot(g.domain());
        let qs = vec![LinearQ::new(vec![3.0, 0.0, 0.0, 1.0]).unwrap(), LinearQ::zeros(4)];
        let d = stationary_distribution(&g, &qs, &basis, 1.0).unwrap();
        assert!((d.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }
}
