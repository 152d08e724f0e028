use serde::{Deserialize, Serialize};

use crate::error::{domain, Result};
use crate::simcore::StepMetrics;

/// Day-level summary of a metric history.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsSummary {
    pub gmv_cents: i64,
    pub gmv: f64,
    pub orr: f64,
    pub adp: f64,
    /// Mean pick-up minutes of served orders.
    pub aat: f64,
    pub orders_generated: u64,
    pub orders_served: u64,
    pub orders_cancelled: u64,
    pub orders_expired: u64,
    /// Set when no order was generated; ORR is then reported as 0.
    pub no_orders: bool,
    /// Completed-trip revenue per hour of day, in cents.
    pub hourly_income_cents: Vec<i64>,
}

impl MetricsSummary {
    pub fn hourly_income(&self) -> Vec<f64> {
        self.hourly_income_cents.iter().map(|c| *c as f64 / 100.0).collect()
    }
}

pub fn metrics_report(history: &[StepMetrics]) -> Result<MetricsSummary> {
    if history.is_empty() {
        return Err(domain("metrics report needs a non-empty history"));
    }
    let mut hourly = vec![0i64; 24];
    let (mut gmv, mut gen, mut served, mut cancelled, mut expired, mut dp) = (0i64, 0u64, 0u64, 0u64, 0u64, 0i64);
    let mut pickup = 0.0;
    for m in history {
        hourly[(m.hour % 24) as usize] += m.gmv_cents;
        gmv += m.gmv_cents;
        gen += m.orders_generated;
        served += m.orders_served;
        cancelled += m.orders_cancelled;
        expired += m.orders_expired;
        dp += m.dp_sum;
        pickup += m.pickup_minutes_sum;
    }
    let per_served = |x: f64| if served == 0 { 0.0 } else { x / served as f64 };
    Ok(MetricsSummary {
        gmv_cents: gmv,
        gmv: gmv as f64 / 100.0,
        orr: if gen == 0 { 0.0 } else { (served as f64 / gen as f64).min(1.0) },
        adp: per_served(dp as f64),
        aat: per_served(pickup),
        orders_generated: gen,
        orders_served: served,
        orders_cancelled: cancelled,
        orders_expired: expired,
        no_orders: gen == 0,
        hourly_income_cents: hourly,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn m(step: u32) -> StepMetrics {
        StepMetrics {
            step,
            hour: step / 6,
            ..Default::default()
        }
    }

    #[test]
    fn orr_eight_of_ten() {
        let h = vec![StepMetrics { orders_generated: 10, orders_served: 8, ..m(0) }];
        assert!((metrics_report(&h).unwrap().orr - 0.8).abs() < 1e-12);
    }

    #[test]
    fn adp_of_mixed_signs() {
        let h = vec![
            StepMetrics { orders_generated: 2, orders_served: 2, dp_sum: 1, ..m(0) },
            StepMetrics { orders_generated: 1, orders_served: 1, dp_sum: 0, ..m(1) },
        ];
        assert!((metrics_report(&h).unwrap().adp - 1.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn single_order_lands_in_its_hour() {
        let mut h: Vec<StepMetrics> = (0..144).map(m).collect();
        h[20].gmv_cents = 700;
        h[19].orders_generated = 1;
        h[19].orders_served = 1;
        let s = metrics_report(&h).unwrap();
        assert_eq!(s.gmv, 7.0);
        assert_eq!(s.hourly_income_cents.len(), 24);
        assert_eq!(s.hourly_income()[3], 7.0);
        assert_eq!(s.hourly_income_cents.iter().sum::<i64>(), s.gmv_cents);
        assert_eq!(s.hourly_income_cents.iter().filter(|c| **c != 0).count(), 1);
    }

    #[test]
    fn no_orders_flag_and_empty_history() {
        let s = metrics_report(&[m(0)]).unwrap();
        assert!(s.no_orders);
        assert_eq!(s.orr, 0.0);
        assert!(metrics_report(&[]).is_err());
    }
}
