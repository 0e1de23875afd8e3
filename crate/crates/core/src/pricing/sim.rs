//! Load-placement simulator comparing user and retailer costs across
//! pricing schemes.

use std::io::Write;

use serde::{Deserialize, Serialize};

use super::{compute_bill, price_rtpibr, truncate, PriceSchedule, PricingError};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ControllableLoad {
    pub duration: usize,
    pub demand: u64,
    pub start: usize,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct DemandProfile {
    pub must_run: Vec<u64>,
    #[serde(default)]
    pub loads: Vec<ControllableLoad>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Strategy {
    /// Every load starts at its own `start`.
    FixedStart,
    /// Every load of every user starts at the given period.
    AllAt(usize),
    /// The first half of the users (rounded down) start at the first
    /// period, the rest at the second.
    SplitHalf(usize, usize),
}

/// Per-period retailer cost `C_t(s) = a_t·s² + b_t·s`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CostModel {
    pub quadratic: Vec<u64>,
    #[serde(default)]
    pub linear: Vec<u64>,
}

impl CostModel {
    pub fn quadratic(a: Vec<u64>) -> Self {
        CostModel {
            quadratic: a,
            linear: Vec::new(),
        }
    }

    fn at(&self, t: usize) -> (u128, u128) {
        let a = self.quadratic.get(t).copied().unwrap_or(0) as u128;
        let b = self.linear.get(t).copied().unwrap_or(0) as u128;
        (a, b)
    }
}

pub fn retailer_cost(total_demand: &[u64], model: &CostModel) -> u128 {
    total_demand
        .iter()
        .enumerate()
        .map(|(t, &s)| {
            let (a, b) = model.at(t);
            let s = s as u128;
            a * s * s + b * s
        })
        .sum()
}

/// Settings for the comparison schemes.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Schemes {
    /// Periods charged at the peak rate under peak-load pricing.
    pub peak_periods: Vec<usize>,
    /// Per-user threshold for inclining block rates.
    pub rtpibr_gamma: u64,
    pub cost: CostModel,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SchemeCost {
    pub scheme: String,
    pub user_cost: u128,
    pub retailer_cost: u128,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SimulationReport {
    /// `demand[i][t]`
    pub demand: Vec<Vec<u64>>,
    pub totals: Vec<u64>,
    pub costs: Vec<SchemeCost>,
}

impl SimulationReport {
    pub fn cost(&self, scheme: &str) -> Option<&SchemeCost> {
        self.costs.iter().find(|c| c.scheme == scheme)
    }
}

fn place(
    profiles: &[DemandProfile],
    strategy: Strategy,
    k: usize,
) -> Result<Vec<Vec<u64>>, PricingError> {
    let n = profiles.len();
    let mut demand = Vec::with_capacity(n);
    for (i, p) in profiles.iter().enumerate() {
        if p.must_run.len() != k {
            return Err(PricingError::LengthMismatch {
                expected: k,
                got: p.must_run.len(),
            });
        }
        let mut row = p.must_run.clone();
        for load in &p.loads {
            let start = match strategy {
                Strategy::FixedStart => load.start,
                Strategy::AllAt(s) => s,
                Strategy::SplitHalf(a, b) => {
                    if i < n / 2 {
                        a
                    } else {
                        b
                    }
                }
            };
            if load.duration == 0 || start + load.duration > k {
                return Err(PricingError::InfeasibleLoad {
                    start,
                    duration: load.duration,
                    k,
                });
            }
            for slot in &mut row[start..start + load.duration] {
                *slot += load.demand;
            }
        }
        demand.push(row);
    }
    Ok(demand)
}

/// Places the controllable loads and prices the resulting demand under
/// flat, peak-load, inclining-block and network-demand pricing.
pub fn simulate_loads(
    profiles: &[DemandProfile],
    strategy: Strategy,
    sched: &PriceSchedule,
    schemes: &Schemes,
) -> Result<SimulationReport, PricingError> {
    if profiles.is_empty() {
        return Err(PricingError::NoProfiles);
    }
    let k = sched.k();
    let demand = place(profiles, strategy, k)?;
    let totals: Vec<u64> = (0..k)
        .map(|t| demand.iter().map(|row| row[t]).sum())
        .collect();
    let x_star: Vec<u64> = (0..k)
        .map(|t| {
            let delta = sched.periods[t].delta;
            demand.iter().map(|row| truncate(row[t], delta)).sum()
        })
        .collect();

    let mut rtpibr_sched = sched.clone();
    for p in &mut rtpibr_sched.periods {
        p.gamma = schemes.rtpibr_gamma;
    }

    let mut flat = 0u128;
    let mut peak = 0u128;
    let mut ibr = 0u128;
    let mut network = 0u128;
    for (i, row) in demand.iter().enumerate() {
        for (t, &y) in row.iter().enumerate() {
            let p = &sched.periods[t];
            flat += p.beta as u128 * y as u128;
            let rate = if schemes.peak_periods.contains(&t) {
                p.alpha
            } else {
                p.beta
            };
            peak += rate as u128 * y as u128;
            ibr += price_rtpibr(y, t, &rtpibr_sched)? as u128 * y as u128;
        }
        network += compute_bill(i, row, &x_star, sched)?.total;
    }

    let retailer = retailer_cost(&totals, &schemes.cost);
    let costs = [
        ("flat", flat),
        ("peak-load", peak),
        ("rtpibr", ibr),
        ("network", network),
    ]
    .into_iter()
    .map(|(scheme, user_cost)| SchemeCost {
        scheme: scheme.to_string(),
        user_cost,
        retailer_cost: retailer,
    })
    .collect();
    Ok(SimulationReport {
        demand,
        totals,
        costs,
    })
}

/// Writes `scheme,user_cost,retailer_cost` rows.
pub fn write_cost_csv<W: Write>(out: W, rows: &[SchemeCost]) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["scheme", "user_cost", "retailer_cost"])?;
    for r in rows {
        w.write_record([
            r.scheme.clone(),
            r.user_cost.to_string(),
            r.retailer_cost.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pricing::PeriodRates;

    fn rates(k: usize, n: u64) -> PriceSchedule {
        PriceSchedule::uniform(
            n,
            k,
            PeriodRates {
                alpha: 2,
                beta: 1,
                gamma: 5,
                delta: 10,
            },
        )
        .unwrap()
    }

    fn schemes(k: usize) -> Schemes {
        Schemes {
            peak_periods: vec![],
            rtpibr_gamma: 5,
            cost: CostModel::quadratic(vec![1; k]),
        }
    }

    #[test]
    fn retailer_cost_examples() {
        let q = CostModel::quadratic(vec![1, 1]);
        assert_eq!(retailer_cost(&[0, 0], &q), 0);
        assert!(retailer_cost(&[1, 1], &q) < retailer_cost(&[2, 0], &q));
        assert_eq!(retailer_cost(&[3], &CostModel::quadratic(vec![2])), 18);
    }

    #[test]
    fn no_loads_keeps_must_run() {
        let p = DemandProfile {
            must_run: vec![1, 2, 3],
            loads: vec![],
        };
        let r = simulate_loads(
            &[p.clone(), p],
            Strategy::AllAt(0),
            &rates(3, 2),
            &schemes(3),
        )
        .unwrap();
        assert_eq!(r.demand, vec![vec![1, 2, 3], vec![1, 2, 3]]);
        assert_eq!(r.totals, vec![2, 4, 6]);
    }

    #[test]
    fn emptier_period_is_cheaper_for_the_retailer() {
        // enumerate both placements of a single one-period load
        let base = DemandProfile {
            must_run: vec![3, 0],
            loads: vec![ControllableLoad {
                duration: 1,
                demand: 2,
                start: 0,
            }],
        };
        let s = rates(2, 1);
        let busy = simulate_loads(&[base.clone()], Strategy::AllAt(0), &s, &schemes(2)).unwrap();
        let quiet = simulate_loads(&[base], Strategy::AllAt(1), &s, &schemes(2)).unwrap();
        assert_eq!(busy.costs[0].retailer_cost, 25);
        assert_eq!(quiet.costs[0].retailer_cost, 9 + 4);
    }

    #[test]
    fn infeasible_and_empty_inputs() {
        let p = DemandProfile {
            must_run: vec![0, 0],
            loads: vec![ControllableLoad {
                duration: 2,
                demand: 1,
                start: 0,
            }],
        };
        let s = rates(2, 1);
        assert!(matches!(
            simulate_loads(&[p.clone()], Strategy::AllAt(1), &s, &schemes(2)),
            Err(PricingError::InfeasibleLoad { .. })
        ));
        assert!(simulate_loads(&[p], Strategy::FixedStart, &s, &schemes(2)).is_ok());
        assert_eq!(
            simulate_loads(&[], Strategy::FixedStart, &s, &schemes(2)),
            Err(PricingError::NoProfiles)
        );
    }

    #[test]
    fn split_assigns_halves() {
        let p = DemandProfile {
            must_run: vec![0; 4],
            loads: vec![ControllableLoad {
                duration: 1,
                demand: 1,
                start: 0,
            }],
        };
        let r = simulate_loads(
            &vec![p; 3],
            Strategy::SplitHalf(0, 2),
            &rates(4, 3),
            &schemes(4),
        )
        .unwrap();
        assert_eq!(r.totals, vec![1, 0, 2, 0]);
    }

    #[test]
    fn csv_layout() {
        let mut out = Vec::new();
        let rows = vec![SchemeCost {
            scheme: "network".into(),
            user_cost: 7,
            retailer_cost: 9,
        }];
        write_cost_csv(&mut out, &rows).unwrap();
        assert_eq!(
            String::from_utf8(out).unwrap(),
            "scheme,user_cost,retailer_cost\nnetwork,7,9\n"
        );
    }
}
