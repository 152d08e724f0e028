use std::collections::{BTreeMap, BTreeSet};

use rand::Rng;

use crate::error::{domain, Result};
use crate::simcore::{Assignment, DriverId, OrderId};

/// Turns possibly colliding proposals into an injective assignment.
///
/// Each contested order goes to a uniformly drawn proposer. Losers pick
/// again through `reselect` from their candidates minus the orders already
/// taken; a driver whose pool is empty, or whose callback returns `None`,
/// stays unassigned.
pub fn resolve_conflicts<R, F>(
    proposals: &BTreeMap<DriverId, OrderId>,
    candidates: &BTreeMap<DriverId, Vec<OrderId>>,
    rng: &mut R,
    mut reselect: F,
) -> Result<Assignment>
where
    R: Rng + ?Sized,
    F: FnMut(DriverId, &[OrderId], &mut R) -> Result<Option<OrderId>>,
{
    for (d, o) in proposals {
        let ok = candidates.get(d).is_some_and(|c| c.contains(o));
        if !ok {
            return Err(domain(format!("driver {} proposed order {} outside its candidates", d.0, o.0)));
        }
    }
    let mut assigned = BTreeMap::new();
    let mut taken = BTreeSet::new();
    let mut pending = proposals.clone();
    while !pending.is_empty() {
        let mut groups: BTreeMap<OrderId, Vec<DriverId>> = BTreeMap::new();
        for (d, o) in &pending {
            groups.entry(*o).or_default().push(*d);
        }
        let mut losers = Vec::new();
        for (o, ds) in groups {
            let w = if ds.len() == 1 { 0 } else { rng.random_range(0..ds.len()) };
            assigned.insert(ds[w], o);
            taken.insert(o);
            losers.extend(ds.iter().enumerate().filter(|(i, _)| *i != w).map(|(_, d)| *d));
        }
        losers.sort();
        let mut next = BTreeMap::new();
        for d in losers {
            let pool: Vec<OrderId> = candidates[&d].iter().copied().filter(|o| !taken.contains(o)).collect();
            if pool.is_empty() {
                continue;
            }
            if let Some(o) = reselect(d, &pool, rng)? {
                if !pool.contains(&o) {
                    return Err(domain(format!("reselection of order {} is outside the updated pool", o.0)));
                }
                next.insert(d, o);
            }
        }
        pending = next;
    }
    Ok(Assignment(assigned))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn ids(v: &[u64]) -> Vec<OrderId> {
        v.iter().map(|&i| OrderId(i)).collect()
    }

    #[test]
    fn distinct_proposals_pass_through() {
        let props: BTreeMap<_, _> = [(DriverId(0), OrderId(1)), (DriverId(1), OrderId(2))].into();
        let cands: BTreeMap<_, _> = [(DriverId(0), ids(&[1, 2])), (DriverId(1), ids(&[1, 2]))].into();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let a = resolve_conflicts(&props, &cands, &mut rng, |_, _, _| unreachable!()).unwrap();
        assert_eq!(a.0, props);
    }

    #[test]
    fn two_drivers_one_order() {
        let props: BTreeMap<_, _> = [(DriverId(0), OrderId(1)), (DriverId(1), OrderId(1))].into();
        let cands: BTreeMap<_, _> = [(DriverId(0), ids(&[1])), (DriverId(1), ids(&[1]))].into();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let a = resolve_conflicts(&props, &cands, &mut rng, |_, p, _| Ok(p.first().copied())).unwrap();
        assert_eq!(a.len(), 1);
    }

    #[test]
    fn three_way_collision_with_greedy_reselection() {
        let prices: BTreeMap<OrderId, i64> = [(OrderId(0), 30), (OrderId(1), 20), (OrderId(2), 10)].into();
        let props: BTreeMap<_, _> = (0..3).map(|d| (DriverId(d), OrderId(0))).collect();
        let cands: BTreeMap<_, _> = (0..3).map(|d| (DriverId(d), ids(&[0, 1, 2]))).collect();
        for seed in 0..20 {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let a = resolve_conflicts(&props, &cands, &mut rng, |_, pool, _| {
                Ok(pool.iter().copied().max_by_key(|o| (prices[o], std::cmp::Reverse(*o))))
            })
            .unwrap();
            assert_eq!(a.len(), 3);
            assert!(a.is_injective());
        }
    }

    #[test]
    fn winner_is_uniform() {
        let props: BTreeMap<_, _> = (0..3).map(|d| (DriverId(d), OrderId(0))).collect();
        let cands: BTreeMap<_, _> = (0..3).map(|d| (DriverId(d), ids(&[0]))).collect();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut wins = [0usize; 3];
        for _ in 0..6000 {
            let a = resolve_conflicts(&props, &cands, &mut rng, |_, _, _| unreachable!()).unwrap();
            let (d, _) = a.iter().next().unwrap();
            wins[d.index()] += 1;
        }
        for w in wins {
            assert!((w as f64 / 6000.0 - 1.0 / 3.0).abs() < 0.03, "{wins:?}");
        }
    }

    #[test]
    fn out_of_pool_reselection_is_an_error() {
        let props: BTreeMap<_, _> = [(DriverId(0), OrderId(1)), (DriverId(1), OrderId(1))].into();
        let cands: BTreeMap<_, _> = [(DriverId(0), ids(&[1, 2])), (DriverId(1), ids(&[1, 2]))].into();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert!(resolve_conflicts(&props, &cands, &mut rng, |_, _, _| Ok(Some(OrderId(1)))).is_err());
    }

    #[test]
    fn proposal_outside_candidates_is_an_error() {
        let props: BTreeMap<_, _> = [(DriverId(0), OrderId(9))].into();
        let cands: BTreeMap<_, _> = [(DriverId(0), ids(&[1]))].into();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert!(resolve_conflicts(&props, &cands, &mut rng, |_, _, _| Ok(None)).is_err());
    }
}
