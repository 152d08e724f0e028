//! Rule-based dispatchers (random, shortest-trip, highest-revenue) and the
//! Hungarian-matching dispatcher.

use std::cmp::Reverse;
use std::collections::BTreeMap;

use num_traits::{FromPrimitive, Num};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dispatch::{candidate_map, Dispatcher};
use crate::error::{domain, Result};
use crate::simcore::{resolve_conflicts, Assignment, DriverId, Order, OrderId, Simulator};

type Proposals = BTreeMap<DriverId, OrderId>;

/// Each idle driver proposes a uniformly random candidate.
pub fn ran_dispatch<R: Rng + ?Sized>(sim: &Simulator, rng: &mut R) -> Result<Proposals> {
    Ok(candidate_map(sim)?
        .into_iter()
        .map(|(d, c)| (d, c[rng.random_range(0..c.len())]))
        .collect())
}

fn res_key(o: &Order) -> (u32, Reverse<i64>, OrderId) {
    (o.duration_steps, Reverse(o.price_cents), o.id)
}

fn rev_key(o: &Order) -> (Reverse<i64>, u32, OrderId) {
    (Reverse(o.price_cents), o.duration_steps, o.id)
}

fn best_by<K: Ord>(sim: &Simulator, pool: &[OrderId], key: impl Fn(&Order) -> K) -> Result<Option<OrderId>> {
    let mut best: Option<(K, OrderId)> = None;
    for id in pool {
        let k = key(sim.state().order(*id)?);
        if best.as_ref().is_none_or(|(b, _)| k < *b) {
            best = Some((k, *id));
        }
    }
    Ok(best.map(|(_, id)| id))
}

fn propose_by<K: Ord>(sim: &Simulator, key: impl Fn(&Order) -> K + Copy) -> Result<Proposals> {
    let mut out = BTreeMap::new();
    for (d, c) in candidate_map(sim)? {
        if let Some(o) = best_by(sim, &c, key)? {
            out.insert(d, o);
        }
    }
    Ok(out)
}

/// Shortest trip first, then higher price, then lower id.
pub fn res_dispatch(sim: &Simulator) -> Result<Proposals> {
    propose_by(sim, res_key)
}

/// Highest price first, then shorter trip, then lower id.
pub fn rev_dispatch(sim: &Simulator) -> Result<Proposals> {
    propose_by(sim, rev_key)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Rule {
    Ran,
    Res,
    Rev,
}

/// Rule-based dispatcher: proposals from the rule, conflicts resolved by
/// re-choosing with the same rule.
#[derive(Debug, Clone)]
pub struct RuleDispatcher {
    pub rule: Rule,
}

impl Dispatcher for RuleDispatcher {
    fn name(&self) -> &str {
        match self.rule {
            Rule::Ran => "RAN",
            Rule::Res => "RES",
            Rule::Rev => "REV",
        }
    }

    fn dispatch(&mut self, sim: &Simulator, rng: &mut ChaCha8Rng) -> Result<Assignment> {
        let candidates = candidate_map(sim)?;
        let proposals = match self.rule {
            Rule::Ran => ran_dispatch(sim, rng)?,
            Rule::Res => res_dispatch(sim)?,
            Rule::Rev => rev_dispatch(sim)?,
        };
        let rule = self.rule;
        resolve_conflicts(&proposals, &candidates, rng, |_, pool, rng| match rule {
            Rule::Ran => Ok(Some(pool[rng.random_range(0..pool.len())])),
            Rule::Res => best_by(sim, pool, res_key),
            Rule::Rev => best_by(sim, pool, rev_key),
        })
    }
}

/// Minimum-cost matching of a rectangular cost matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Matching<T> {
    /// `(row, col)` pairs, ascending by row.
    pub pairs: Vec<(usize, usize)>,
    pub cost: T,
}

/// Exact minimum-cost assignment of `min(rows, cols)` pairs via the
/// shortest augmenting path method with potentials, `O(n^2 m)`.
pub fn hungarian<T: Copy + PartialOrd + Num>(costs: &[Vec<T>]) -> Result<Matching<T>> {
    let rows = costs.len();
    let cols = costs.first().map_or(0, Vec::len);
    if costs.iter().any(|r| r.len() != cols) {
        return Err(domain("cost matrix rows differ in length"));
    }
    if costs.iter().flatten().any(|c| c.partial_cmp(c).is_none()) {
        return Err(domain("cost matrix holds an unordered value"));
    }
    if rows == 0 || cols == 0 {
        return Ok(Matching { pairs: Vec::new(), cost: T::zero() });
    }
    let transposed = rows > cols;
    let (n, m) = if transposed { (cols, rows) } else { (rows, cols) };
    let a = |i: usize, j: usize| if transposed { costs[j][i] } else { costs[i][j] };

    // 1-indexed arrays; column 0 is the virtual root.
    let mut u = vec![T::zero(); n + 1];
    let mut v = vec![T::zero(); m + 1];
    let mut p = vec![0usize; m + 1];
    let mut way = vec![0usize; m + 1];
    for i in 1..=n {
        p[0] = i;
        let mut j0 = 0;
        let mut minv: Vec<Option<T>> = vec![None; m + 1];
        let mut used = vec![false; m + 1];
        loop {
            used[j0] = true;
            let i0 = p[j0];
            let mut delta: Option<T> = None;
            let mut j1 = 0;
            for j in 1..=m {
                if used[j] {
                    continue;
                }
                let cur = a(i0 - 1, j - 1) - u[i0] - v[j];
                if minv[j].is_none_or(|mv| cur < mv) {
                    minv[j] = Some(cur);
                    way[j] = j0;
                }
                let mj = minv[j].expect("set above");
                if delta.is_none_or(|d| mj < d) {
                    delta = Some(mj);
                    j1 = j;
                }
            }
            let delta = delta.expect("an unused column remains while rows <= cols");
            for j in 0..=m {
                if used[j] {
                    u[p[j]] = u[p[j]] + delta;
                    v[j] = v[j] - delta;
                } else if let Some(mv) = minv[j] {
                    minv[j] = Some(mv - delta);
                }
            }
            j0 = j1;
            if p[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            p[j0] = p[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }
    let mut pairs: Vec<(usize, usize)> = (1..=m)
        .filter(|&j| p[j] != 0)
        .map(|j| if transposed { (j - 1, p[j] - 1) } else { (p[j] - 1, j - 1) })
        .collect();
    pairs.sort_unstable();
    let cost = pairs.iter().fold(T::zero(), |acc, &(i, j)| acc + costs[i][j]);
    Ok(Matching { pairs, cost })
}

/// Sentinel cost for forbidden pairs: `10^6` times the largest real cost.
pub fn sentinel<T: Copy + PartialOrd + Num + FromPrimitive>(max_cost: T) -> T {
    let scale = T::from_f64(1e6).expect("representable");
    if max_cost > T::zero() {
        max_cost * scale
    } else {
        scale
    }
}

/// Centralized matching that minimizes total pick-up distance over
/// in-radius driver-order pairs.
pub fn hod_dispatch(sim: &Simulator) -> Result<Assignment> {
    let candidates = candidate_map(sim)?;
    let drivers: Vec<DriverId> = candidates.keys().copied().collect();
    let mut orders: Vec<OrderId> = candidates.values().flatten().copied().collect();
    orders.sort_unstable();
    orders.dedup();
    if drivers.is_empty() {
        return Ok(Assignment::new());
    }
    let col: BTreeMap<OrderId, usize> = orders.iter().enumerate().map(|(j, o)| (*o, j)).collect();
    let mut real: Vec<Vec<Option<f64>>> = vec![vec![None; orders.len()]; drivers.len()];
    let mut max_cost = 0.0f64;
    for (i, d) in drivers.iter().enumerate() {
        for o in &candidates[d] {
            let (km, _) = sim.pickup(*d, *o)?;
            if !km.is_finite() {
                return Err(domain("non-finite pick-up distance"));
            }
            max_cost = max_cost.max(km);
            real[i][col[o]] = Some(km);
        }
    }
    let s = sentinel(max_cost);
    let costs: Vec<Vec<f64>> = real.iter().map(|r| r.iter().map(|c| c.unwrap_or(s)).collect()).collect();
    let m = hungarian(&costs)?;
    Ok(Assignment(
        m.pairs
            .into_iter()
            .filter(|&(i, j)| real[i][j].is_some())
            .map(|(i, j)| (drivers[i], orders[j]))
            .collect(),
    ))
}

#[derive(Debug, Clone, Default)]
pub struct HodDispatcher;

impl Dispatcher for HodDispatcher {
    fn name(&self) -> &str {
        "HOD"
    }

    fn dispatch(&mut self, sim: &Simulator, _rng: &mut ChaCha8Rng) -> Result<Assignment> {
        hod_dispatch(sim)
    }
}
