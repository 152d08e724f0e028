//! Simultaneous linear TD learning by every agent of a small game, with a
//! per-window report of TD errors and the distance to the ODE equilibrium.

use rand::distr::{weighted::WeightedIndex, Distribution};
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::ode::{equilibrium_and_stability, estimate_ode, OdeEstimator};
use super::{boltzmann, td_step, FeatureBasis, LinearQ, SmallGame, Transition};
use crate::error::{domain, Error, Result};
use crate::rngs::substream;

/// Step sizes `α_t`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum StepSchedule {
    /// `scale / (t / offset + 1)`
    Harmonic { scale: f64, offset: f64 },
    /// `scale / (t / offset + 1)^exponent`
    Power { scale: f64, offset: f64, exponent: f64 },
    Constant { alpha: f64 },
}

impl Default for StepSchedule {
    fn default() -> Self {
        StepSchedule::Harmonic {
            scale: 1.0,
            offset: 1000.0,
        }
    }
}

impl StepSchedule {
    pub fn alpha(&self, t: u64) -> f64 {
        match *self {
            StepSchedule::Harmonic { scale, offset } => scale / (t as f64 / offset + 1.0),
            StepSchedule::Power { scale, offset, exponent } => scale / (t as f64 / offset + 1.0).powf(exponent),
            StepSchedule::Constant { alpha } => alpha,
        }
    }

    /// `Σ α_t = ∞` and `Σ α_t² < ∞`.
    pub fn is_robbins_monro(&self) -> bool {
        match *self {
            StepSchedule::Harmonic { .. } => true,
            StepSchedule::Power { exponent, .. } => exponent > 0.5 && exponent <= 1.0,
            StepSchedule::Constant { .. } => false,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let ok = match *self {
            StepSchedule::Harmonic { scale, offset } => scale > 0.0 && offset > 0.0,
            StepSchedule::Power { scale, offset, exponent } => scale > 0.0 && offset > 0.0 && exponent.is_finite(),
            StepSchedule::Constant { alpha } => alpha > 0.0 && alpha.is_finite(),
        };
        if ok {
            Ok(())
        } else {
            Err(domain("step schedule parameters must be positive"))
        }
    }
}

/// Policy temperature `T_t`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TemperatureDecay {
    /// `initial / (1 + t / offset)^exponent`
    Power { initial: f64, offset: f64, exponent: f64 },
    /// `initial / ln(t + e)`
    Logarithmic { initial: f64 },
    Constant { temperature: f64 },
}

impl Default for TemperatureDecay {
    fn default() -> Self {
        TemperatureDecay::Power {
            initial: 10.0,
            offset: 1000.0,
            exponent: 1.0,
        }
    }
}

impl TemperatureDecay {
    pub fn temperature(&self, t: u64) -> f64 {
        match *self {
            TemperatureDecay::Power { initial, offset, exponent } => initial / (1.0 + t as f64 / offset).powf(exponent),
            TemperatureDecay::Logarithmic { initial } => initial / (t as f64 + std::f64::consts::E).ln(),
            TemperatureDecay::Constant { temperature } => temperature,
        }
    }

    pub fn decays_to_zero(&self) -> bool {
        match *self {
            TemperatureDecay::Power { exponent, .. } => exponent > 0.0,
            TemperatureDecay::Logarithmic { .. } => true,
            TemperatureDecay::Constant { .. } => false,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let (t, ok) = match *self {
            TemperatureDecay::Power { initial, offset, exponent } => (initial, offset > 0.0 && exponent.is_finite()),
            TemperatureDecay::Logarithmic { initial } => (initial, true),
            TemperatureDecay::Constant { temperature } => (temperature, true),
        };
        if ok && t > 0.0 && t.is_finite() {
            Ok(())
        } else {
            Err(domain("temperature must be positive"))
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceSettings {
    pub updates: u64,
    /// Indexed by how often the updated domain point has been visited.
    /// Updates per reported window.
    pub report_every: u64,
    pub steps: StepSchedule,
    pub temperature: TemperatureDecay,
    /// Runs stop once `‖φ‖∞` exceeds this.
    pub guard: f64,
    pub initial_state: usize,
}

impl ConvergenceSettings {
    /// Defaults with the initial temperature equal to the reward bound.
    pub fn for_game(game: &SmallGame) -> Self {
        Self {
            temperature: TemperatureDecay::Power {
                initial: game.reward_bound,
                offset: 1000.0,
                exponent: 1.0,
            },
            ..Self::default()
        }
    }
}

impl Default for ConvergenceSettings {
    fn default() -> Self {
        Self {
            updates: 50_000,
            report_every: 1_000,
            steps: StepSchedule::default(),
            temperature: TemperatureDecay::default(),
            guard: 1e8,
            initial_state: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeReport {
    pub episode: u64,
    /// Updates completed at the end of the window.
    pub updates: u64,
    pub temperature: f64,
    /// Smallest step size used in the window.
    pub alpha: f64,
    /// Mean `|Δ|` over the window and all agents.
    pub mean_abs_td: f64,
    pub max_abs_td: f64,
    /// Largest `‖φ_i − φ_i*‖₂`; `None` when some `A_φ` was singular.
    pub distance_to_equilibrium: Option<f64>,
    pub stable: Option<bool>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceReport {
    pub seed: u64,
    pub episodes: Vec<EpisodeReport>,
    pub final_phi: Vec<Vec<f64>>,
    pub updates_run: u64,
    pub diverged: bool,
    /// Preconditions of the convergence result the settings break.
    pub violations: Vec<String>,
    /// Fixed point of simultaneous greedy responses reached from the last
    /// joint action; `None` when the responses cycle.
    pub greedy_joint: Option<Vec<usize>>,
    /// Stage-game oracles at the final state.
    pub pure_nash: Vec<Vec<usize>>,
    pub global_optimum: Option<Vec<usize>>,
    /// Max `|Q − Q*|` against value iteration, single-agent games only.
    pub oracle_distance: Option<f64>,
}

impl ConvergenceReport {
    pub fn final_td_error(&self) -> Option<f64> {
        self.episodes.last().map(|e| e.mean_abs_td)
    }

    pub fn reached_global_optimum(&self) -> bool {
        self.global_optimum.is_some() && self.global_optimum == self.greedy_joint
    }

    /// Stability at the last window where `A_φ` was invertible.
    pub fn final_stable(&self) -> Option<bool> {
        self.episodes.iter().rev().find_map(|e| e.stable)
    }

    /// One `episode` record per window followed by a `summary` record.
    pub fn to_jsonl(&self) -> Result<String> {
        #[derive(Serialize)]
        #[serde(tag = "record", rename_all = "snake_case")]
        enum Line<'a> {
            Episode(&'a EpisodeReport),
            Summary {
                seed: u64,
                updates_run: u64,
                diverged: bool,
                violations: &'a [String],
                final_td_error: Option<f64>,
                final_stable: Option<bool>,
                greedy_joint: Option<&'a [usize]>,
                reached_global_optimum: bool,
                oracle_distance: Option<f64>,
                final_phi: &'a [Vec<f64>],
            },
        }
        let mut out = String::new();
        for e in &self.episodes {
            out.push_str(&serde_json::to_string(&Line::Episode(e))?);
            out.push('\n');
        }
        let summary = Line::Summary {
            seed: self.seed,
            updates_run: self.updates_run,
            diverged: self.diverged,
            violations: &self.violations,
            final_td_error: self.final_td_error(),
            final_stable: self.final_stable(),
            greedy_joint: self.greedy_joint.as_deref(),
            reached_global_optimum: self.reached_global_optimum(),
            oracle_distance: self.oracle_distance,
            final_phi: &self.final_phi,
        };
        out.push_str(&serde_json::to_string(&summary)?);
        out.push('\n');
        Ok(out)
    }
}

fn sample<R: Rng + ?Sized>(weights: &[f64], rng: &mut R) -> Result<usize> {
    let dist = WeightedIndex::new(weights).map_err(|e| Error::Numeric(format!("bad distribution: {e}")))?;
    Ok(dist.sample(rng))
}

fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, v) in values.iter().enumerate() {
        if *v > values[best] {
            best = i;
        }
    }
    best
}

/// Every agent learns its own `φ_i` from the shared trajectory.
pub fn run_convergence_experiment(
    game: &SmallGame,
    basis: &FeatureBasis<f64>,
    settings: &ConvergenceSettings,
    seed: u64,
) -> Result<ConvergenceReport> {
    game.validate()?;
    settings.steps.validate()?;
    settings.temperature.validate()?;
    if basis.domain() != game.domain() {
        return Err(domain("basis domain does not match the game"));
    }
    if settings.updates == 0 || settings.report_every == 0 || !(settings.guard > 0.0) {
        return Err(domain("updates, report window and guard must be positive"));
    }
    if settings.initial_state >= game.states {
        return Err(domain("initial state outside the game"));
    }
    let mut violations = Vec::new();
    if !settings.steps.is_robbins_monro() {
        violations.push("step sizes violate the Robbins-Monro conditions".to_string());
    }
    if !settings.temperature.decays_to_zero() {
        violations.push("temperature does not decay to zero".to_string());
    }

    let mut act_rng = substream(seed, "selection");
    let mut env_rng = substream(seed, "transitions");
    let mut init_rng = substream(seed, "init");
    let ja = game.joint_actions();
    let mut qs: Vec<LinearQ<f64>> = (0..game.agents).map(|_| LinearQ::zeros(basis.dim())).collect();
    let mut state = settings.initial_state;
    let mut last = init_rng.random_range(0..ja);
    let mut episodes = Vec::new();
    let (mut sum_abs, mut max_abs, mut in_window) = (0.0, 0.0f64, 0u64);
    let mut min_alpha = f64::INFINITY;
    let mut visits = vec![vec![0u64; basis.domain().len()]; game.agents];
    let mut diverged = false;
    let mut t = 0u64;

    while t < settings.updates {
        let temp = settings.temperature.temperature(t);
        let mut actions = Vec::with_capacity(game.agents);
        for (i, q) in qs.iter().enumerate() {
            let pi = boltzmann(&q.values(basis, state, game.mean_level(last, i))?, temp)?;
            actions.push(sample(&pi, &mut act_rng)?);
        }
        let joint = game.encode(&actions);
        let next = sample(&game.transitions[state][joint], &mut env_rng)?;
        for (i, q) in qs.iter_mut().enumerate() {
            let tr = Transition {
                state,
                level: game.mean_level(last, i),
                action: actions[i],
                reward: game.reward(state, joint, i),
                next_state: next,
                next_level: game.mean_level(joint, i),
            };
            let n = &mut visits[i][basis.domain().index(tr.state, tr.level, tr.action)];
            let alpha = settings.steps.alpha(*n);
            *n += 1;
            min_alpha = min_alpha.min(alpha);
            let delta = td_step(q, basis, &tr, alpha, game.gamma, temp)?;
            sum_abs += delta.abs();
            max_abs = max_abs.max(delta.abs());
        }
        in_window += 1;
        state = next;
        last = joint;
        t += 1;

        if qs.iter().any(|q| !(q.norm_inf() <= settings.guard)) {
            diverged = true;
        }
        if t % settings.report_every == 0 || t == settings.updates || diverged {
            let (distance, stable) = if diverged {
                (None, None)
            } else {
                equilibrium_distance(game, &qs, basis, temp)
            };
            episodes.push(EpisodeReport {
                episode: episodes.len() as u64,
                updates: t,
                temperature: temp,
                alpha: min_alpha,
                mean_abs_td: sum_abs / (in_window * game.agents as u64) as f64,
                max_abs_td: max_abs,
                distance_to_equilibrium: distance,
                stable,
            });
            (sum_abs, max_abs, in_window, min_alpha) = (0.0, 0.0, 0, f64::INFINITY);
        }
        if diverged {
            break;
        }
    }

    let greedy_joint = if diverged { None } else { greedy_fixed_point(game, &qs, basis, state, last)? };
    let oracle_distance = if game.agents == 1 && !diverged {
        let q_star = value_iteration(game);
        let mut worst = 0.0f64;
        for (s, l, a) in basis.domain().points() {
            worst = worst.max((qs[0].evaluate(basis, s, l, a)? - q_star[s][a]).abs());
        }
        Some(worst)
    } else {
        None
    };
    Ok(ConvergenceReport {
        seed,
        episodes,
        final_phi: qs.into_iter().map(|q| q.phi).collect(),
        updates_run: t,
        diverged,
        violations,
        greedy_joint: greedy_joint.map(|j| game.decode(j)),
        pure_nash: game.pure_nash(state).into_iter().map(|j| game.decode(j)).collect(),
        global_optimum: game.global_optimum(state).map(|j| game.decode(j)),
        oracle_distance,
    })
}

fn equilibrium_distance(
    game: &SmallGame,
    qs: &[LinearQ<f64>],
    basis: &FeatureBasis<f64>,
    temperature: f64,
) -> (Option<f64>, Option<bool>) {
    let mut worst = 0.0f64;
    let mut stable = true;
    // the exact estimator draws no randomness
    let mut unused = substream(0, "unused");
    for (i, q) in qs.iter().enumerate() {
        let eq = estimate_ode(game, qs, basis, i, temperature, OdeEstimator::Exact, &mut unused)
            .and_then(|ode| equilibrium_and_stability(&ode.a, &ode.b));
        match eq {
            Ok(eq) => {
                let d = q.phi.iter().zip(eq.phi.iter()).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
                worst = worst.max(d);
                stable &= eq.stable;
            }
            Err(_) => return (None, None),
        }
    }
    (Some(worst), Some(stable))
}

/// Iterates simultaneous greedy responses until the joint action repeats.
fn greedy_fixed_point(
    game: &SmallGame,
    qs: &[LinearQ<f64>],
    basis: &FeatureBasis<f64>,
    state: usize,
    start: usize,
) -> Result<Option<usize>> {
    let mut joint = start;
    for _ in 0..=game.joint_actions() {
        let actions: Vec<usize> = qs
            .iter()
            .enumerate()
            .map(|(i, q)| q.values(basis, state, game.mean_level(joint, i)).map(|v| argmax(&v)))
            .collect::<Result<_>>()?;
        let next = game.encode(&actions);
        if next == joint {
            return Ok(Some(joint));
        }
        joint = next;
    }
    Ok(None)
}

/// Optimal `Q*(s, a)` of a single-agent game.
fn value_iteration(game: &SmallGame) -> Vec<Vec<f64>> {
    let mut q = vec![vec![0.0; game.actions]; game.states];
    for _ in 0..1_000_000 {
        let v: Vec<f64> = q.iter().map(|row| row.iter().copied().fold(f64::MIN, f64::max)).collect();
        let mut change = 0.0f64;
        for s in 0..game.states {
            for a in 0..game.actions {
                let cont: f64 = game.transitions[s][a].iter().zip(&v).map(|(p, v)| p * v).sum();
                let new = game.reward(s, a, 0) + game.gamma * cont;
                change = change.max((new - q[s][a]).abs());
                q[s][a] = new;
            }
        }
        if change < 1e-14 {
            break;
        }
    }
    q
}
