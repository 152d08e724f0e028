//! Acceptance checks, one line per criterion. Run with
//! `cargo test --test acceptance`; exits nonzero if any check fails.

use std::process::ExitCode;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use mfdispatch::agents::{boltzmann_probs, boltzmann_select, mean_action};
use mfdispatch::baselines::hungarian;
use mfdispatch::harness::{
    emit_outputs, eval_days, make_dispatcher, run_eval, run_training, simulate_day, write_run_record, DispatcherKind,
    EvalSummary, ExperimentConfig, Metric,
};
use mfdispatch::hexworld::{GridId, Location};
use mfdispatch::mfqlinear::{
    coordination_game, equilibrium_and_stability, estimate_ode, run_convergence_experiment, single_state_game, td_step,
    ConvergenceSettings, Domain, FeatureBasis, LinearQ, OdeEstimator, Transition,
};
use mfdispatch::neuralnet::{Activation, Mlp};
use mfdispatch::rngs::substream;
use mfdispatch::simcore::{Driver, DriverId, DriverStatus, Event, Mode, Order, OrderId, OrderStatus, Simulator, WorldState};

type Check = Result<String, String>;

fn ensure(ok: bool, detail: String) -> Check {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn timed(limit: Duration, f: impl FnOnce() -> Check) -> Check {
    let start = Instant::now();
    let out = f();
    let took = start.elapsed();
    let add = |s: String| format!("{s}; {:.1}s of {}s", took.as_secs_f64(), limit.as_secs());
    match out {
        Ok(s) if took < limit => Ok(add(s)),
        Ok(s) => Err(add(format!("{s}; too slow"))),
        Err(s) => Err(add(s)),
    }
}

// 1

fn gradient_fidelity() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let h = 1e-5;
    let mut worst = 0.0f64;
    for _ in 0..100 {
        let depth = rng.random_range(1..=3);
        let mut widths = vec![rng.random_range(1..=8)];
        for _ in 0..depth {
            widths.push(rng.random_range(1..=8));
        }
        let out = if rng.random_bool(0.5) { Activation::Identity } else { Activation::Sigmoid };
        let mut net = Mlp::<f64>::new(&widths, out, &mut rng).map_err(|e| e.to_string())?;
        // nonzero biases keep ReLU pre-activations off the kink
        for l in &mut net.layers {
            l.bias.iter_mut().for_each(|b| *b = rng.random_range(-0.5..0.5));
        }
        let x: Vec<f64> = (0..widths[0]).map(|_| rng.random_range(-2.0..2.0)).collect();
        let up: Vec<f64> = (0..net.output_dim()).map(|_| rng.random_range(-1.0..1.0)).collect();
        let loss = |n: &Mlp<f64>, x: &[f64]| -> f64 { n.forward(x).unwrap().iter().zip(&up).map(|(y, u)| y * u).sum() };
        let (grads, dx) = net.backward(&x, &up).map_err(|e| e.to_string())?;
        let rel = |a: f64, n: f64| (a - n).abs() / a.abs().max(n.abs()).max(1e-6);
        let analytic: Vec<f64> = grads.iter().copied().collect();
        for (k, g) in analytic.iter().enumerate() {
            let mut plus = net.clone();
            *plus.params_mut().nth(k).unwrap() += h;
            let mut minus = net.clone();
            *minus.params_mut().nth(k).unwrap() -= h;
            let fd = (loss(&plus, &x) - loss(&minus, &x)) / (2.0 * h);
            worst = worst.max(rel(*g, fd));
        }
        for (i, g) in dx.iter().enumerate() {
            let (mut xp, mut xm) = (x.clone(), x.clone());
            xp[i] += h;
            xm[i] -= h;
            let fd = (loss(&net, &xp) - loss(&net, &xm)) / (2.0 * h);
            worst = worst.max(rel(*g, fd));
        }
    }
    ensure(worst < 1e-4, format!("max relative error {worst:.2e} over 100 nets"))
}

// 2

fn selector() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(22);
    let mut worst_sum = 0.0f64;
    let mut worst_shift = 0.0f64;
    for _ in 0..1000 {
        let n = rng.random_range(1..=10);
        let v: Vec<f64> = (0..n).map(|_| rng.random_range(-50.0..50.0)).collect();
        let beta = 10f64.powf(rng.random_range(-3.0..3.0));
        let p = boltzmann_probs(&v, beta).map_err(|e| e.to_string())?;
        worst_sum = worst_sum.max((p.iter().sum::<f64>() - 1.0).abs());
        let c = rng.random_range(-100.0..100.0);
        let shifted: Vec<f64> = v.iter().map(|x| x + c).collect();
        let q = boltzmann_probs(&shifted, beta).map_err(|e| e.to_string())?;
        worst_shift = worst_shift.max(p.iter().zip(&q).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max));
    }
    let two: Vec<f64> = boltzmann_probs(&[1.0, 0.0], 1.0).map_err(|e| e.to_string())?;
    let expect = [1.0 / (1.0 + (-1.0f64).exp()), 1.0 / (1.0 + 1.0f64.exp())];
    let pair_ok = (two[0] - 0.7311).abs() < 1e-4 && (two[1] - 0.2689).abs() < 1e-4;
    let exact_ok = (two[0] - expect[0]).abs() < 1e-15;
    let values = [0.3, 0.9, 0.1, 0.85, -0.2];
    let argmax = 1;
    let mut hits = 0;
    for _ in 0..10_000 {
        let (i, _) = boltzmann_select(&values, 1e3, &mut rng).map_err(|e| e.to_string())?;
        hits += usize::from(i == argmax);
    }
    let freq = hits as f64 / 1e4;
    ensure(
        worst_sum <= 1e-12 && worst_shift < 1e-12 && pair_ok && exact_ok && freq > 0.999,
        format!(
            "sum err {worst_sum:.1e}, shift err {worst_shift:.1e}, [1,0] -> [{:.4}, {:.4}], argmax freq {freq:.4}",
            two[0], two[1]
        ),
    )
}

// 3

fn mean_action_scene() -> Check {
    let cfg = ExperimentConfig::preset("two-zone").map_err(|e| e.to_string())?;
    let mut sim = Simulator::new(cfg.sim.clone(), cfg.demand_model().map_err(|e| e.to_string())?, 1)
        .map_err(|e| e.to_string())?;
    let here = Location::Cell(GridId(44));
    let elsewhere = Location::Cell(GridId(7));
    let driver = |id: u32, location, status, trip_end_step, current_order| Driver {
        id: DriverId(id),
        location,
        status,
        trip_end_step,
        current_order,
        income_cents: 0,
    };
    let drivers = vec![
        // the agent itself
        driver(0, here, DriverStatus::Idle, None, None),
        // finishing a trip into the agent's cell at the next tick
        driver(1, elsewhere, DriverStatus::OnTrip, Some(1), Some(OrderId(10))),
        // finishing a trip elsewhere and an offline driver in the cell: neither counts
        driver(2, here, DriverStatus::OnTrip, Some(1), Some(OrderId(11))),
        driver(3, here, DriverStatus::Offline, None, None),
    ];
    let mut state = WorldState::new(Mode::Grid, drivers, cfg.sim.geometry.grid.len());
    let order = |id: u64, origin, destination, status| Order {
        id: OrderId(id),
        origin,
        destination,
        price_cents: 1000,
        duration_steps: 2,
        created_step: 0,
        status,
    };
    for id in 0..3 {
        state.orders.insert(OrderId(id), order(id, here, elsewhere, OrderStatus::Open));
    }
    state.orders.insert(OrderId(10), order(10, elsewhere, here, OrderStatus::Serving));
    state.orders.insert(OrderId(11), order(11, here, elsewhere, OrderStatus::Serving));
    state.next_order_id = 12;
    sim.replace_state(state);
    let m = mean_action(&sim, DriverId(0)).map_err(|e| e.to_string())?;
    ensure(
        m.arriving == 2 && m.orders == 3 && m.value() == 2.0 / 3.0,
        format!("{} arriving / {} orders = {}", m.arriving, m.orders, m.value()),
    )
}

// 4

fn brute_force_min(c: &[Vec<i64>]) -> i64 {
    fn go(c: &[Vec<i64>], row: usize, used: &mut [bool]) -> i64 {
        if row == c.len() {
            return 0;
        }
        let mut best = i64::MAX;
        for j in 0..used.len() {
            if !used[j] {
                used[j] = true;
                best = best.min(c[row][j] + go(c, row + 1, used));
                used[j] = false;
            }
        }
        best
    }
    let (r, k) = (c.len(), c[0].len());
    if r <= k {
        go(c, 0, &mut vec![false; k])
    } else {
        let t: Vec<Vec<i64>> = (0..k).map(|j| (0..r).map(|i| c[i][j]).collect()).collect();
        go(&t, 0, &mut vec![false; r])
    }
}

fn assignment_oracle() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(44);
    let mut mismatches = 0;
    for _ in 0..500 {
        let rows = rng.random_range(1..=7);
        let cols = rng.random_range(1..=7);
        let c: Vec<Vec<i64>> = (0..rows).map(|_| (0..cols).map(|_| rng.random_range(-1000..1000)).collect()).collect();
        let m = hungarian(&c).map_err(|e| e.to_string())?;
        let pairs_cost: i64 = m.pairs.iter().map(|&(i, j)| c[i][j]).sum();
        if m.cost != brute_force_min(&c) || pairs_cost != m.cost || m.pairs.len() != rows.min(cols) {
            mismatches += 1;
        }
    }
    ensure(mismatches == 0, format!("{mismatches} mismatches in 500 matrices"))
}

// 5

fn tabular_reduction() -> Check {
    let dom = Domain { states: 3, levels: 2, actions: 3 };
    let basis = FeatureBasis::<f64>::one_hot(dom);
    let mut q = LinearQ::<f64>::zeros(basis.dim());
    let mut table = vec![[[0.0f64; 3]; 2]; 3];
    let (gamma, temp) = (0.9, 0.7);
    let mut rng = ChaCha8Rng::seed_from_u64(55);
    let mut worst = 0.0f64;
    for _ in 0..10_000 {
        let tr = Transition {
            state: rng.random_range(0..3),
            level: rng.random_range(0..2),
            action: rng.random_range(0..3),
            reward: rng.random_range(-1.0..1.0),
            next_state: rng.random_range(0..3),
            next_level: rng.random_range(0..2),
        };
        let alpha = rng.random_range(0.01..0.5);
        td_step(&mut q, &basis, &tr, alpha, gamma, temp).map_err(|e| e.to_string())?;
        // soft expected-value Q-learning on the table
        let next = table[tr.next_state][tr.next_level];
        let top = next.iter().copied().fold(f64::MIN, f64::max);
        let w: Vec<f64> = next.iter().map(|v| ((v - top) / temp).exp()).collect();
        let z: f64 = w.iter().sum();
        let soft: f64 = w.iter().zip(&next).map(|(w, v)| w / z * v).sum();
        let cell = &mut table[tr.state][tr.level][tr.action];
        *cell += alpha * (tr.reward + gamma * soft - *cell);
        for (s, l, a) in dom.points() {
            worst = worst.max((q.phi[dom.index(s, l, a)] - table[s][l][a]).abs());
        }
    }
    let game = single_state_game(1.0, 0.5).map_err(|e| e.to_string())?;
    let one = FeatureBasis::<f64>::one_hot(game.domain());
    let ode = estimate_ode(&game, &[LinearQ::zeros(1)], &one, 0, 1.0, OdeEstimator::Exact, &mut rng)
        .map_err(|e| e.to_string())?;
    let eq = equilibrium_and_stability(&ode.a, &ode.b).map_err(|e| e.to_string())?;
    let phi = eq.phi[0];
    let residual = (&ode.a * &eq.phi + &ode.b).norm();
    ensure(
        worst <= 1e-12 && (phi - 2.0).abs() <= 1e-9 && residual < 1e-10 && eq.residual < 1e-10,
        format!("max table gap {worst:.1e}, phi* = {phi}, residual {residual:.1e}"),
    )
}

// 6

fn convergence_demo() -> Check {
    let game = coordination_game();
    // oracle: the joint action maximizing the shared payoff
    let best = (0..game.joint_actions())
        .max_by(|&a, &b| game.rewards[0][a][0].total_cmp(&game.rewards[0][b][0]))
        .unwrap();
    let target = game.decode(best);
    let basis = FeatureBasis::<f64>::one_hot(game.domain());
    let settings = ConvergenceSettings::for_game(&game);
    let mut reached = 0;
    let mut worst_td = 0.0f64;
    let mut notes = Vec::new();
    for seed in 1..=5 {
        let r = run_convergence_experiment(&game, &basis, &settings, seed).map_err(|e| e.to_string())?;
        let td = r.final_td_error().unwrap_or(f64::INFINITY);
        worst_td = worst_td.max(td);
        let ok = !r.diverged && r.updates_run <= 50_000 && r.greedy_joint.as_ref() == Some(&target) && td < 1e-3;
        reached += usize::from(ok);
        notes.push(format!("{:?}", r.greedy_joint));
    }
    ensure(
        reached >= 4,
        format!("{reached}/5 seeds reach {target:?} (greedy: {}), worst final TD {worst_td:.1e}", notes.join(" ")),
    )
}

// 7

fn conservation() -> Check {
    let cfg = ExperimentConfig::preset("two-zone").map_err(|e| e.to_string())?.with_dispatcher(DispatcherKind::Ran);
    let fleet = cfg.sim.fleet_size as u32;
    let mut d = make_dispatcher(&cfg, DispatcherKind::Ran, None).map_err(|e| e.to_string())?;
    let mut rng = substream(7, "selection");
    let (sim, day) = simulate_day(&cfg, d.as_mut(), 7, &mut rng, DispatcherKind::Ran).map_err(|e| e.to_string())?;
    let s = day.summary().map_err(|e| e.to_string())?;
    let recount: i64 = sim
        .log()
        .events()
        .iter()
        .map(|e| match e {
            Event::Completed { price_cents, .. } => *price_cents,
            _ => 0,
        })
        .sum();
    let per_step: i64 = day.history.iter().map(|m| m.gmv_cents).sum();
    let bad_steps = day.history.iter().filter(|m| m.idle + m.on_trip + m.offline != fleet).count();
    ensure(
        fleet == 200
            && day.history.len() == 144
            && s.gmv_cents == recount
            && per_step == recount
            && (0.0..=1.0).contains(&s.orr)
            && bad_steps == 0
            && recount > 0,
        format!(
            "{} steps, GMV {} vs recount {} cents, ORR {:.4}, {bad_steps} steps break conservation",
            day.history.len(),
            s.gmv_cents,
            recount,
            s.orr
        ),
    )
}

// 8

fn directional() -> Check {
    let cfg = ExperimentConfig::preset("two-zone").map_err(|e| e.to_string())?;
    let seeds = cfg.seeds.clone();
    let eval = |k: DispatcherKind| -> Result<EvalSummary, String> {
        let c = cfg.with_dispatcher(k);
        let nets = if k.is_learning() {
            Some(run_training(&c, cfg.seeds[0]).map_err(|e| e.to_string())?.best.ok_or("training produced no model")?)
        } else {
            None
        };
        run_eval(&c, nets.as_ref(), &seeds).map_err(|e| e.to_string())
    };
    let ran = eval(DispatcherKind::Ran)?;
    let gmv_bar = ran.gmv.mean + ran.gmv.std;
    let adp_bar = ran.adp.mean + ran.adp.std;
    let iod = eval(DispatcherKind::Iod)?;
    let cod = eval(DispatcherKind::Cod)?;
    let (cg, ca, ia) = (cod.per_seed(Metric::Gmv), cod.per_seed(Metric::Adp), iod.per_seed(Metric::Adp));
    let gmv_wins = cg.iter().filter(|&&g| g > gmv_bar).count();
    let adp_wins = ca.iter().filter(|&&a| a > adp_bar).count();
    let vs_iod = ca.iter().zip(&ia).filter(|(c, i)| c > i).count();
    ensure(
        gmv_wins >= 4 && adp_wins >= 4 && vs_iod >= 4,
        format!(
            "COD GMV > {gmv_bar:.1} in {gmv_wins}/5, COD ADP > {adp_bar:.3} in {adp_wins}/5, COD ADP > IOD ADP in {vs_iod}/5 \
             (RAN GMV {:.1}, IOD GMV {:.1}, COD GMV {:.1}; RAN ADP {:.3}, IOD ADP {:.3}, COD ADP {:.3})",
            ran.gmv.mean, iod.gmv.mean, cod.gmv.mean, ran.adp.mean, iod.adp.mean, cod.adp.mean
        ),
    )
}

// 9

fn baseline_character() -> Check {
    let cfg = ExperimentConfig::preset("two-zone").map_err(|e| e.to_string())?;
    let run = |k| run_eval(&cfg.with_dispatcher(k), None, &cfg.seeds).map_err(|e| e.to_string());
    let (res, rev) = (run(DispatcherKind::Res)?, run(DispatcherKind::Rev)?);
    ensure(
        rev.gmv.mean >= res.gmv.mean && res.orr.mean >= rev.orr.mean,
        format!(
            "GMV REV {:.1} vs RES {:.1}; ORR RES {:.4} vs REV {:.4}",
            rev.gmv.mean, res.gmv.mean, res.orr.mean, rev.orr.mean
        ),
    )
}

// 10

fn determinism() -> Check {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let cfg = ExperimentConfig::preset("two-zone").map_err(|e| e.to_string())?;
    let read = |p: std::path::PathBuf| std::fs::read(p).map_err(|e| e.to_string());
    let mut same = Vec::new();
    for k in [DispatcherKind::Ran, DispatcherKind::Hod] {
        let c = cfg.with_dispatcher(k);
        for run in ["a", "b"] {
            let day = eval_days(&c, None, &[3]).map_err(|e| e.to_string())?.remove(0);
            emit_outputs(&day, &dir.path().join(format!("{k}-{run}"))).map_err(|e| e.to_string())?;
        }
        for f in ["summary.csv", "steps.jsonl", "hourly.jsonl", "gaps.jsonl"] {
            same.push(read(dir.path().join(format!("{k}-a")).join(f))? == read(dir.path().join(format!("{k}-b")).join(f))?);
        }
    }
    let mut c = cfg.with_dispatcher(DispatcherKind::Cod);
    c.episodes = 2;
    c.learning.temperature.horizon = 2;
    for run in ["a", "b"] {
        let out = run_training(&c, 9).map_err(|e| e.to_string())?;
        write_run_record(&out.record, &dir.path().join(format!("train-{run}"))).map_err(|e| e.to_string())?;
    }
    for f in ["run.json", "episodes.jsonl"] {
        same.push(read(dir.path().join("train-a").join(f))? == read(dir.path().join("train-b").join(f))?);
    }
    let n = same.iter().filter(|&&s| s).count();
    ensure(n == same.len(), format!("{n}/{} output files byte-identical across repeated runs", same.len()))
}

fn main() -> ExitCode {
    let checks: [(&str, u64, fn() -> Check); 10] = [
        ("gradient fidelity", 30, gradient_fidelity),
        ("selector correctness", 60, selector),
        ("mean-action scene", 60, mean_action_scene),
        ("assignment oracle", 60, assignment_oracle),
        ("tabular reduction", 60, tabular_reduction),
        ("convergence demonstration", 120, convergence_demo),
        ("simulator conservation", 60, conservation),
        ("desk-scale directional ordering", 600, directional),
        ("baseline character", 120, baseline_character),
        ("determinism", 300, determinism),
    ];
    let mut failed = 0;
    for (i, (name, limit, f)) in checks.iter().enumerate() {
        match timed(Duration::from_secs(*limit), f) {
            Ok(detail) => println!("criterion {:>2} PASS {name}: {detail}", i + 1),
            Err(detail) => {
                failed += 1;
                println!("criterion {:>2} FAIL {name}: {detail}", i + 1);
            }
        }
    }
    println!("{} of {} criteria passed", checks.len() - failed, checks.len());
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
