use mfdispatch::baselines::hungarian;
use num_rational::Rational64;
use proptest::prelude::*;

fn brute(c: &[Vec<i64>]) -> i64 {
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
    if c.len() <= c[0].len() {
        go(c, 0, &mut vec![false; c[0].len()])
    } else {
        let t: Vec<Vec<i64>> = (0..c[0].len()).map(|j| c.iter().map(|r| r[j]).collect()).collect();
        go(&t, 0, &mut vec![false; c.len()])
    }
}

fn matrix() -> impl Strategy<Value = Vec<Vec<i64>>> {
    (1usize..=6, 1usize..=6).prop_flat_map(|(r, c)| prop::collection::vec(prop::collection::vec(-50i64..50, c), r))
}

proptest! {
    #[test]
    fn matches_exhaustive_search(c in matrix()) {
        let m = hungarian(&c).unwrap();
        prop_assert_eq!(m.cost, brute(&c));
        prop_assert_eq!(m.pairs.len(), c.len().min(c[0].len()));
        let mut cols: Vec<usize> = m.pairs.iter().map(|p| p.1).collect();
        cols.sort_unstable();
        cols.dedup();
        prop_assert_eq!(cols.len(), m.pairs.len());
    }

    #[test]
    fn exact_over_rationals(c in matrix()) {
        let q: Vec<Vec<Rational64>> = c.iter().map(|r| r.iter().map(|&x| Rational64::new(x, 7)).collect()).collect();
        prop_assert_eq!(hungarian(&q).unwrap().cost, Rational64::new(brute(&c), 7));
    }
}

#[test]
fn ragged_and_empty_inputs() {
    assert!(hungarian(&[vec![1i64, 2], vec![3]]).is_err());
    assert!(hungarian::<i64>(&[]).unwrap().pairs.is_empty());
    assert!(hungarian(&[vec![0.0, f64::NAN]]).is_err());
}
