//! Tariffs, truncation, the network-demand price rule and bills.
//!
//! All quantities are integers: energy in metering steps, rates in currency
//! units per step.

mod config;
mod sim;

pub use config::{load_config, PerPeriod, PricingConfig, ProfileConfig, ScheduleConfig};
pub use sim::{
    retailer_cost, simulate_loads, write_cost_csv, ControllableLoad, CostModel, DemandProfile,
    SchemeCost, Schemes, SimulationReport, Strategy,
};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::codec::{DecodeError, Reader, Writer};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum PricingError {
    #[error("period {0} is out of range")]
    PeriodOutOfRange(usize),
    #[error("expected {expected} periods, got {got}")]
    LengthMismatch { expected: usize, got: usize },
    #[error("invalid schedule: {0}")]
    InvalidSchedule(String),
    #[error("load of {duration} periods starting at {start} does not fit in {k} periods")]
    InfeasibleLoad {
        start: usize,
        duration: usize,
        k: usize,
    },
    #[error("no demand profiles")]
    NoProfiles,
    #[error("{0}")]
    Config(String),
}

/// Rates and thresholds for one period.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PeriodRates {
    pub alpha: u64,
    pub beta: u64,
    pub gamma: u64,
    pub delta: u64,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PriceSchedule {
    pub n: u64,
    pub periods: Vec<PeriodRates>,
}

impl PriceSchedule {
    pub fn new(n: u64, periods: Vec<PeriodRates>) -> Result<Self, PricingError> {
        let s = PriceSchedule { n, periods };
        s.validate()?;
        Ok(s)
    }

    /// Same rates in every period.
    pub fn uniform(n: u64, k: usize, rates: PeriodRates) -> Result<Self, PricingError> {
        Self::new(n, vec![rates; k])
    }

    pub fn k(&self) -> usize {
        self.periods.len()
    }

    pub fn period(&self, t: usize) -> Result<&PeriodRates, PricingError> {
        self.periods.get(t).ok_or(PricingError::PeriodOutOfRange(t))
    }

    pub fn validate(&self) -> Result<(), PricingError> {
        if self.n == 0 {
            return Err(PricingError::InvalidSchedule("n must be positive".into()));
        }
        if self.periods.is_empty() {
            return Err(PricingError::InvalidSchedule("k must be positive".into()));
        }
        for (t, p) in self.periods.iter().enumerate() {
            if p.beta > p.alpha {
                return Err(PricingError::InvalidSchedule(format!(
                    "period {t}: beta {} exceeds alpha {}",
                    p.beta, p.alpha
                )));
            }
            let cap = (self.n as u128) * (p.delta as u128);
            if cap > u64::MAX as u128 {
                return Err(PricingError::InvalidSchedule(format!(
                    "period {t}: n*delta overflows 64 bits"
                )));
            }
            if (p.gamma as u128) >= cap {
                return Err(PricingError::InvalidSchedule(format!(
                    "period {t}: gamma {} must be below n*delta = {cap}",
                    p.gamma
                )));
            }
        }
        Ok(())
    }

    pub fn write(&self, w: &mut Writer) {
        w.u64(self.n).u32(self.periods.len() as u32);
        for p in &self.periods {
            w.u64(p.alpha).u64(p.beta).u64(p.gamma).u64(p.delta);
        }
    }

    pub fn read(r: &mut Reader<'_>) -> Result<Self, DecodeError> {
        let n = r.u64()?;
        let k = r.count(32)?;
        let mut periods = Vec::with_capacity(k);
        for _ in 0..k {
            periods.push(PeriodRates {
                alpha: r.u64()?,
                beta: r.u64()?,
                gamma: r.u64()?,
                delta: r.u64()?,
            });
        }
        let s = PriceSchedule { n, periods };
        s.validate()
            .map_err(|_| DecodeError::Invalid("price schedule"))?;
        Ok(s)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct MeasurementRecord {
    pub user: usize,
    pub period: usize,
    pub raw_y: u64,
    pub truncated_x: u64,
}

impl MeasurementRecord {
    pub fn new(
        user: usize,
        period: usize,
        raw_y: u64,
        sched: &PriceSchedule,
    ) -> Result<Self, PricingError> {
        let delta = sched.period(period)?.delta;
        Ok(MeasurementRecord {
            user,
            period,
            raw_y,
            truncated_x: truncate(raw_y, delta),
        })
    }
}

pub fn truncate(raw_y: u64, delta: u64) -> u64 {
    raw_y.min(delta)
}

/// Network-demand price: the peak rate applies when the network sum or the
/// user's own demand exceeds its threshold (both strict).
pub fn price(x_i: u64, x_star: u64, t: usize, sched: &PriceSchedule) -> Result<u64, PricingError> {
    let p = sched.period(t)?;
    Ok(if x_star > p.gamma || x_i > p.delta {
        p.alpha
    } else {
        p.beta
    })
}

/// Per-user inclining block rate with threshold `gamma_t`.
pub fn price_rtpibr(y_i: u64, t: usize, sched: &PriceSchedule) -> Result<u64, PricingError> {
    let p = sched.period(t)?;
    Ok(if y_i > p.gamma { p.alpha } else { p.beta })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct BillLine {
    pub rate: u64,
    pub x_used: u64,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Bill {
    pub user: usize,
    pub lines: Vec<BillLine>,
    pub total: u128,
}

impl Bill {
    pub fn write(&self, w: &mut Writer) {
        w.u64(self.user as u64).u32(self.lines.len() as u32);
        for l in &self.lines {
            w.u64(l.rate).u64(l.x_used);
        }
        w.u64((self.total >> 64) as u64).u64(self.total as u64);
    }

    pub fn read(r: &mut Reader<'_>) -> Result<Self, DecodeError> {
        let user = r.u64()? as usize;
        let k = r.count(16)?;
        let mut lines = Vec::with_capacity(k);
        for _ in 0..k {
            lines.push(BillLine {
                rate: r.u64()?,
                x_used: r.u64()?,
            });
        }
        let hi = r.u64()? as u128;
        let lo = r.u64()? as u128;
        Ok(Bill {
            user,
            lines,
            total: (hi << 64) | lo,
        })
    }
}

fn check_len(sched: &PriceSchedule, got: usize) -> Result<(), PricingError> {
    if got != sched.k() {
        return Err(PricingError::LengthMismatch {
            expected: sched.k(),
            got,
        });
    }
    Ok(())
}

/// Bill for one user from their meter readings `y` and the network sums
/// `x_star`. The rate is chosen from the reading; the charged quantity is
/// the truncated reading.
pub fn compute_bill(
    user: usize,
    y: &[u64],
    x_star: &[u64],
    sched: &PriceSchedule,
) -> Result<Bill, PricingError> {
    check_len(sched, y.len())?;
    check_len(sched, x_star.len())?;
    let mut lines = Vec::with_capacity(y.len());
    let mut total = 0u128;
    for t in 0..y.len() {
        let rate = price(y[t], x_star[t], t, sched)?;
        let x_used = truncate(y[t], sched.periods[t].delta);
        total += rate as u128 * x_used as u128;
        lines.push(BillLine { rate, x_used });
    }
    Ok(Bill { user, lines, total })
}

pub fn verify_bill(bill: &Bill, own_y: &[u64], x_star: &[u64], sched: &PriceSchedule) -> bool {
    matches!(compute_bill(bill.user, own_y, x_star, sched), Ok(b) if b == *bill)
}

/// The largest bill a user could be charged if `n_adversarial` other users
/// report the per-user cap in every period. `honest_x_star` is the sum over
/// the honest users only, including this one.
pub fn worst_case_bill(
    own_y: &[u64],
    honest_x_star: &[u64],
    n_adversarial: u64,
    sched: &PriceSchedule,
) -> Result<u128, PricingError> {
    check_len(sched, honest_x_star.len())?;
    let inflated: Vec<u64> = honest_x_star
        .iter()
        .zip(&sched.periods)
        .map(|(s, p)| s.saturating_add(n_adversarial.saturating_mul(p.delta)))
        .collect();
    Ok(compute_bill(0, own_y, &inflated, sched)?.total)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sched1(alpha: u64, beta: u64, gamma: u64, delta: u64, n: u64) -> PriceSchedule {
        PriceSchedule::new(
            n,
            vec![PeriodRates {
                alpha,
                beta,
                gamma,
                delta,
            }],
        )
        .unwrap()
    }

    #[test]
    fn truncate_examples() {
        assert_eq!(truncate(7, 5), 5);
        assert_eq!(truncate(0, 5), 0);
        assert_eq!(truncate(5, 5), 5);
    }

    #[test]
    fn price_examples() {
        let s = sched1(3, 1, 10, 5, 4);
        assert_eq!(price(5, 10, 0, &s).unwrap(), 1);
        assert_eq!(price(6, 0, 0, &s).unwrap(), 3);
        assert_eq!(price(0, 0, 0, &s).unwrap(), 1);
        assert_eq!(price(0, 11, 0, &s).unwrap(), 3);
        assert_eq!(price(0, 0, 1, &s), Err(PricingError::PeriodOutOfRange(1)));
    }

    #[test]
    fn rtpibr_examples() {
        let s = sched1(3, 1, 10, 5, 4);
        assert_eq!(price_rtpibr(10, 0, &s).unwrap(), 1);
        assert_eq!(price_rtpibr(11, 0, &s).unwrap(), 3);
        let z = sched1(3, 1, 0, 5, 4);
        assert_eq!(price_rtpibr(0, 0, &z).unwrap(), 1);
    }

    #[test]
    fn bill_examples() {
        let s = sched1(3, 1, 10, 5, 4);
        assert_eq!(compute_bill(0, &[2], &[2], &s).unwrap().total, 2);
        assert_eq!(compute_bill(0, &[0], &[0], &s).unwrap().total, 0);

        let two = PriceSchedule::new(
            4,
            vec![
                PeriodRates {
                    alpha: 5,
                    beta: 2,
                    gamma: 10,
                    delta: 5,
                },
                PeriodRates {
                    alpha: 7,
                    beta: 1,
                    gamma: 10,
                    delta: 5,
                },
            ],
        )
        .unwrap();
        // period 1 exceeds gamma: 2*3 + 7*4
        assert_eq!(compute_bill(0, &[3, 4], &[9, 11], &two).unwrap().total, 34);
        assert!(matches!(
            compute_bill(0, &[1], &[1, 1], &two),
            Err(PricingError::LengthMismatch { .. })
        ));
    }

    #[test]
    fn verify_bill_examples() {
        let two = PriceSchedule::new(
            4,
            vec![
                PeriodRates {
                    alpha: 5,
                    beta: 2,
                    gamma: 10,
                    delta: 5,
                },
                PeriodRates {
                    alpha: 7,
                    beta: 1,
                    gamma: 10,
                    delta: 5,
                },
            ],
        )
        .unwrap();
        let b = compute_bill(3, &[3, 4], &[9, 11], &two).unwrap();
        assert!(verify_bill(&b, &[3, 4], &[9, 11], &two));
        let mut inc = b.clone();
        inc.total += 1;
        assert!(!verify_bill(&inc, &[3, 4], &[9, 11], &two));
        let mut swapped = b.clone();
        swapped.lines[0].rate = 5;
        swapped.total = 5 * 3 + 7 * 4;
        assert!(!verify_bill(&swapped, &[3, 4], &[9, 11], &two));
    }

    #[test]
    fn overage_is_not_billed() {
        let s = sched1(3, 1, 10, 5, 4);
        let b = compute_bill(0, &[9], &[9], &s).unwrap();
        assert_eq!(b.lines[0], BillLine { rate: 3, x_used: 5 });
        assert_eq!(b.total, 15);
    }

    #[test]
    fn worst_case_examples() {
        let s = sched1(3, 1, 10, 5, 4);
        assert_eq!(
            worst_case_bill(&[2], &[2], 0, &s).unwrap(),
            compute_bill(0, &[2], &[2], &s).unwrap().total
        );
        // three adversaries at delta = 5 push the sum past gamma
        assert_eq!(worst_case_bill(&[2], &[2], 3, &s).unwrap(), 6);
        // gamma = n*delta - 1: adversaries alone cannot reach the threshold
        let tight = sched1(3, 1, 19, 5, 4);
        assert_eq!(worst_case_bill(&[4], &[4], 3, &tight).unwrap(), 4);
        assert_eq!(worst_case_bill(&[5], &[5], 3, &tight).unwrap(), 15);
    }

    #[test]
    fn schedule_validation() {
        let bad_beta = PeriodRates {
            alpha: 1,
            beta: 2,
            gamma: 0,
            delta: 1,
        };
        assert!(PriceSchedule::new(1, vec![bad_beta]).is_err());
        let bad_gamma = PeriodRates {
            alpha: 2,
            beta: 1,
            gamma: 4,
            delta: 2,
        };
        assert!(PriceSchedule::new(2, vec![bad_gamma]).is_err());
        assert!(PriceSchedule::new(3, vec![bad_gamma]).is_ok());
        assert!(PriceSchedule::new(1, vec![]).is_err());
    }

    #[test]
    fn schedule_encoding_round_trip() {
        let s = sched1(3, 1, 10, 5, 4);
        let mut w = Writer::new();
        s.write(&mut w);
        let bytes = w.finish();
        let mut r = Reader::new(&bytes);
        assert_eq!(PriceSchedule::read(&mut r).unwrap(), s);
        r.finish().unwrap();
    }
}
