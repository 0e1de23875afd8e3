//! TOML configuration for schedules and the load simulator.

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::sim::{ControllableLoad, CostModel, DemandProfile, Schemes};
use super::{PeriodRates, PriceSchedule, PricingError};

/// A per-period value given either once for every period or as a list.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum PerPeriod {
    Same(u64),
    Each(Vec<u64>),
}

impl PerPeriod {
    pub fn expand(&self, k: usize, field: &str) -> Result<Vec<u64>, PricingError> {
        match self {
            PerPeriod::Same(v) => Ok(vec![*v; k]),
            PerPeriod::Each(v) if v.len() == k => Ok(v.clone()),
            PerPeriod::Each(v) => Err(PricingError::Config(format!(
                "{field}: expected {k} values, got {}",
                v.len()
            ))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScheduleConfig {
    pub n: u64,
    pub k: usize,
    pub alpha: PerPeriod,
    pub beta: PerPeriod,
    pub gamma: PerPeriod,
    pub delta: PerPeriod,
}

impl ScheduleConfig {
    pub fn to_schedule(&self) -> Result<PriceSchedule, PricingError> {
        let k = self.k;
        let alpha = self.alpha.expand(k, "alpha")?;
        let beta = self.beta.expand(k, "beta")?;
        let gamma = self.gamma.expand(k, "gamma")?;
        let delta = self.delta.expand(k, "delta")?;
        let periods = (0..k)
            .map(|t| PeriodRates {
                alpha: alpha[t],
                beta: beta[t],
                gamma: gamma[t],
                delta: delta[t],
            })
            .collect();
        PriceSchedule::new(self.n, periods)
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ProfileConfig {
    /// Number of users sharing this profile.
    #[serde(default = "one")]
    pub users: usize,
    pub must_run: Vec<u64>,
    #[serde(default)]
    pub loads: Vec<ControllableLoad>,
}

fn one() -> usize {
    1
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PricingConfig {
    pub schedule: ScheduleConfig,
    #[serde(default)]
    pub peak_periods: Vec<usize>,
    pub rtpibr_gamma: u64,
    pub cost_a: PerPeriod,
    #[serde(rename = "profile")]
    pub profiles: Vec<ProfileConfig>,
}

impl PricingConfig {
    pub fn from_toml(text: &str) -> Result<Self, PricingError> {
        toml::from_str(text).map_err(|e| PricingError::Config(e.to_string()))
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn schedule(&self) -> Result<PriceSchedule, PricingError> {
        self.schedule.to_schedule()
    }

    pub fn demand_profiles(&self) -> Vec<DemandProfile> {
        self.profiles
            .iter()
            .flat_map(|p| {
                let profile = DemandProfile {
                    must_run: p.must_run.clone(),
                    loads: p.loads.clone(),
                };
                std::iter::repeat_n(profile, p.users)
            })
            .collect()
    }

    pub fn schemes(&self) -> Result<Schemes, PricingError> {
        Ok(Schemes {
            peak_periods: self.peak_periods.clone(),
            rtpibr_gamma: self.rtpibr_gamma,
            cost: CostModel::quadratic(self.cost_a.expand(self.schedule.k, "cost_a")?),
        })
    }

    /// A 24-hour day with midnight as period 0; every user has the same
    /// must-run profile and one six-hour electric-vehicle charge.
    pub fn evening_charging_example(n: u64) -> Self {
        let mut must_run = vec![3u64; 24];
        must_run[6..10].fill(6);
        must_run[10..17].fill(4);
        must_run[17..22].fill(8);
        must_run[22..24].fill(5);
        PricingConfig {
            schedule: ScheduleConfig {
                n,
                k: 24,
                alpha: PerPeriod::Same(2),
                beta: PerPeriod::Same(1),
                gamma: PerPeriod::Same(10 * n),
                delta: PerPeriod::Same(20),
            },
            peak_periods: (14..20).collect(),
            rtpibr_gamma: 10,
            cost_a: PerPeriod::Same(1),
            profiles: vec![ProfileConfig {
                users: n as usize,
                must_run,
                loads: vec![ControllableLoad {
                    duration: 6,
                    demand: 10,
                    start: 18,
                }],
            }],
        }
    }
}

pub fn load_config(path: &Path) -> Result<PricingConfig, PricingError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| PricingError::Config(format!("{}: {e}", path.display())))?;
    PricingConfig::from_toml(&text)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn toml_round_trip() {
        let c = PricingConfig::evening_charging_example(4);
        let back = PricingConfig::from_toml(&c.to_toml()).unwrap();
        assert_eq!(back, c);
        assert_eq!(back.demand_profiles().len(), 4);
        assert_eq!(back.schedule().unwrap().k(), 24);
    }

    #[test]
    fn scalar_and_list_fields() {
        let text = r#"
            rtpibr_gamma = 1
            cost_a = [1, 2]
            [schedule]
            n = 2
            k = 2
            alpha = [3, 4]
            beta = 1
            gamma = 0
            delta = 5
            [[profile]]
            must_run = [1, 1]
        "#;
        let c = PricingConfig::from_toml(text).unwrap();
        let s = c.schedule().unwrap();
        assert_eq!(s.periods[1].alpha, 4);
        assert_eq!(s.periods[1].beta, 1);
        assert_eq!(c.schemes().unwrap().cost.quadratic, vec![1, 2]);
        assert_eq!(c.demand_profiles().len(), 1);
    }

    #[test]
    fn wrong_list_length_is_reported() {
        let mut c = PricingConfig::evening_charging_example(2);
        c.schedule.alpha = PerPeriod::Each(vec![1, 2]);
        assert!(matches!(c.schedule(), Err(PricingError::Config(_))));
        assert!(PricingConfig::from_toml("not toml [").is_err());
    }
}
