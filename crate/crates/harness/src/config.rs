//! Run configuration shared by every process of a deployment.
//!
//! Signing keys are derived from the deployment seed so that a single
//! config file is enough to launch a simulated deployment. The config only
//! lists public keys; each process re-derives its own secret key and
//! checks it against the list.

use std::path::{Path, PathBuf};
use std::time::Duration;

use pptp_core::bulletin::BoardPolicy;
use pptp_core::crypto::{hash_bytes, PublicKey, RetailerKey, SigKeyPair, SECURITY_BITS};
use pptp_core::pricing::{PriceSchedule, ScheduleConfig};
use pptp_core::protocol::{initialize, SystemParams};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Variant {
    Baseline,
    Merkle,
}

impl Variant {
    pub fn name(self) -> &'static str {
        match self {
            Variant::Baseline => "baseline",
            Variant::Merkle => "merkle",
        }
    }
}

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("{0}")]
    Io(String),
    #[error("config: {0}")]
    Parse(String),
    #[error("config: {0}")]
    Invalid(String),
}

fn one() -> u64 {
    1
}

fn default_timeout() -> u64 {
    5_000
}

fn default_listen() -> String {
    "127.0.0.1:7400".into()
}

fn default_board() -> PathBuf {
    PathBuf::from("board.pptp")
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub variant: Variant,
    pub seed: u64,
    #[serde(default = "one")]
    pub cycles: u64,
    /// Largest number of dishonest auditors.
    #[serde(default)]
    pub f: u32,
    /// How long meters wait for auditor reports, in milliseconds.
    #[serde(default = "default_timeout")]
    pub timeout_ms: u64,
    #[serde(default = "default_listen")]
    pub listen: String,
    #[serde(default = "default_board")]
    pub board: PathBuf,
    /// Peers each meter spot-checks per period (Merkle only).
    #[serde(default)]
    pub spot_checks: usize,
    /// Hex public key of the retailer's board identity.
    pub publisher_key: String,
    /// Hex public keys of the auditors.
    #[serde(default)]
    pub auditor_keys: Vec<String>,
    pub schedule: ScheduleConfig,
}

fn parse_key(hex_key: &str) -> Result<PublicKey, ConfigError> {
    let bytes =
        hex::decode(hex_key).map_err(|e| ConfigError::Invalid(format!("key {hex_key:?}: {e}")))?;
    let arr: [u8; 32] = bytes
        .try_into()
        .map_err(|_| ConfigError::Invalid(format!("key {hex_key:?} is not 32 bytes")))?;
    Ok(PublicKey(arr))
}

/// Deterministic simulation key for `role` number `index`.
pub fn derive_key(seed: u64, role: &str, index: u64) -> SigKeyPair {
    let mut m = b"pptp/harness/key/".to_vec();
    m.extend_from_slice(role.as_bytes());
    m.extend_from_slice(&seed.to_be_bytes());
    m.extend_from_slice(&index.to_be_bytes());
    SigKeyPair::from_seed(hash_bytes(&m))
}

/// Deterministic RNG for a labelled purpose.
pub fn derive_rng(seed: u64, label: &str, coords: &[u64]) -> ChaCha20Rng {
    let mut m = b"pptp/harness/rng/".to_vec();
    m.extend_from_slice(label.as_bytes());
    m.extend_from_slice(&seed.to_be_bytes());
    for v in coords {
        m.extend_from_slice(&v.to_be_bytes());
    }
    ChaCha20Rng::from_seed(hash_bytes(&m))
}

impl RunConfig {
    /// A complete config with keys derived from `seed`.
    pub fn generate(
        variant: Variant,
        schedule: ScheduleConfig,
        seed: u64,
        auditors: usize,
        f: u32,
    ) -> Self {
        RunConfig {
            variant,
            seed,
            cycles: 1,
            f,
            timeout_ms: default_timeout(),
            listen: default_listen(),
            board: default_board(),
            spot_checks: 0,
            publisher_key: hex::encode(derive_key(seed, "publisher", 0).public().0),
            auditor_keys: (0..auditors as u64)
                .map(|a| hex::encode(derive_key(seed, "auditor", a).public().0))
                .collect(),
            schedule,
        }
    }

    pub fn from_toml(text: &str) -> Result<Self, ConfigError> {
        let cfg: RunConfig = toml::from_str(text).map_err(|e| ConfigError::Parse(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| ConfigError::Io(format!("{}: {e}", path.display())))?;
        Self::from_toml(&text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        self.price_schedule()?;
        self.publisher()?;
        let auditors = self.auditors()?;
        if self.schedule.n == 0 || self.schedule.k == 0 {
            return Err(ConfigError::Invalid("n and k must be positive".into()));
        }
        if self.cycles == 0 {
            return Err(ConfigError::Invalid("cycles must be positive".into()));
        }
        if self.variant == Variant::Merkle
            && !auditors.is_empty()
            && auditors.len() < self.f as usize + 1
        {
            return Err(ConfigError::Invalid(format!(
                "f = {} needs at least {} auditors, got {}",
                self.f,
                self.f + 1,
                auditors.len()
            )));
        }
        if self.variant == Variant::Merkle && auditors.is_empty() && self.spot_checks == 0 {
            return Err(ConfigError::Invalid(
                "the Merkle variant needs auditors or spot checks".into(),
            ));
        }
        if self.spot_checks as u64 >= self.schedule.n && self.spot_checks > 0 {
            return Err(ConfigError::Invalid("spot_checks must be below n".into()));
        }
        Ok(())
    }

    pub fn n(&self) -> usize {
        self.schedule.n as usize
    }

    pub fn k(&self) -> usize {
        self.schedule.k
    }

    pub fn quorum_timeout(&self) -> Duration {
        Duration::from_millis(self.timeout_ms)
    }

    pub fn price_schedule(&self) -> Result<PriceSchedule, ConfigError> {
        self.schedule
            .to_schedule()
            .map_err(|e| ConfigError::Invalid(e.to_string()))
    }

    pub fn publisher(&self) -> Result<PublicKey, ConfigError> {
        parse_key(&self.publisher_key)
    }

    pub fn auditors(&self) -> Result<Vec<PublicKey>, ConfigError> {
        self.auditor_keys.iter().map(|k| parse_key(k)).collect()
    }

    pub fn policy(&self) -> Result<BoardPolicy, ConfigError> {
        Ok(BoardPolicy {
            publishers: vec![self.publisher()?],
            auditors: self.auditors()?,
        })
    }

    /// Public parameters. Every process derives the same value.
    pub fn params(&self) -> Result<SystemParams, ConfigError> {
        let (params, _) = initialize(
            SECURITY_BITS,
            self.price_schedule()?,
            &mut ChaCha20Rng::seed_from_u64(0),
        )
        .map_err(|e| ConfigError::Invalid(e.to_string()))?;
        Ok(params.with_auditors(self.auditors()?, self.f, self.quorum_timeout()))
    }

    /// The retailer's board identity, checked against `publisher_key`.
    pub fn publisher_secret(&self) -> Result<SigKeyPair, ConfigError> {
        let kp = derive_key(self.seed, "publisher", 0);
        if kp.public() != self.publisher()? {
            return Err(ConfigError::Invalid(
                "publisher_key does not match this deployment's seed".into(),
            ));
        }
        Ok(kp)
    }

    /// Auditor `index`'s signing key, checked against `auditor_keys`.
    pub fn auditor_secret(&self, index: usize) -> Result<SigKeyPair, ConfigError> {
        let listed = self
            .auditors()?
            .get(index)
            .copied()
            .ok_or_else(|| ConfigError::Invalid(format!("no auditor {index}")))?;
        let kp = derive_key(self.seed, "auditor", index as u64);
        if kp.public() != listed {
            return Err(ConfigError::Invalid(format!(
                "auditor_keys[{index}] does not match this deployment's seed"
            )));
        }
        Ok(kp)
    }

    /// Key a meter signs its spot-check complaints with.
    pub fn meter_secret(&self, user: usize) -> SigKeyPair {
        derive_key(self.seed, "meter", user as u64)
    }

    /// The retailer's PRF key for one cycle. A fresh key per cycle keeps
    /// slot secrets from repeating across cycles.
    pub fn retailer_key(&self, cycle: u64) -> RetailerKey {
        let mut bytes = [0u8; pptp_core::crypto::KEY_LEN];
        derive_rng(self.seed, "prf", &[cycle]).fill(&mut bytes[..]);
        RetailerKey::from_bytes(bytes)
    }

    /// Seed for the retailer's proof randomness in one cycle.
    pub fn evidence_seed(&self, cycle: u64) -> [u8; 32] {
        let mut s = [0u8; 32];
        derive_rng(self.seed, "evidence", &[cycle]).fill(&mut s[..]);
        s
    }
}

/// Synthetic readings for one meter and cycle: uniform in `[0, δ_t]`.
pub fn synthetic_readings(seed: u64, user: usize, cycle: u64, sched: &PriceSchedule) -> Vec<u64> {
    let mut rng = derive_rng(seed, "meter", &[user as u64, cycle]);
    sched
        .periods
        .iter()
        .map(|p| rng.gen_range(0..=p.delta))
        .collect()
}

#[derive(Debug, Deserialize)]
struct ReadingRow {
    cycle: u64,
    period: usize,
    y: u64,
}

/// Reads `cycle,period,y` rows. Returns `readings[cycle][period]`;
/// every cycle must list all `k` periods.
pub fn load_readings(path: &Path, cycles: u64, k: usize) -> Result<Vec<Vec<u64>>, ConfigError> {
    let mut rdr = csv::Reader::from_path(path)
        .map_err(|e| ConfigError::Io(format!("{}: {e}", path.display())))?;
    let mut out = vec![vec![None; k]; cycles as usize];
    for row in rdr.deserialize::<ReadingRow>() {
        let row = row.map_err(|e| ConfigError::Parse(e.to_string()))?;
        let slot = out
            .get_mut(row.cycle as usize)
            .and_then(|c| c.get_mut(row.period))
            .ok_or_else(|| {
                ConfigError::Invalid(format!(
                    "reading for cycle {} period {} out of range",
                    row.cycle, row.period
                ))
            })?;
        *slot = Some(row.y);
    }
    out.into_iter()
        .enumerate()
        .map(|(c, row)| {
            row.into_iter()
                .enumerate()
                .map(|(t, v)| {
                    v.ok_or_else(|| {
                        ConfigError::Invalid(format!("missing reading for cycle {c} period {t}"))
                    })
                })
                .collect()
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use pptp_core::pricing::PerPeriod;

    fn schedule(n: u64, k: usize) -> ScheduleConfig {
        ScheduleConfig {
            n,
            k,
            alpha: PerPeriod::Same(3),
            beta: PerPeriod::Same(1),
            gamma: PerPeriod::Same(4 * n),
            delta: PerPeriod::Same(10),
        }
    }

    #[test]
    fn generated_config_round_trips_and_keys_match() {
        let cfg = RunConfig::generate(Variant::Merkle, schedule(8, 4), 5, 2, 1);
        let back = RunConfig::from_toml(&cfg.to_toml()).unwrap();
        assert_eq!(back, cfg);
        assert!(cfg.publisher_secret().is_ok());
        assert!(cfg.auditor_secret(1).is_ok());
        assert!(cfg.auditor_secret(2).is_err());
        assert_eq!(cfg.params().unwrap(), back.params().unwrap());
    }

    #[test]
    fn invalid_configs_are_refused() {
        let mut cfg = RunConfig::generate(Variant::Merkle, schedule(8, 4), 5, 1, 1);
        assert!(cfg.validate().is_err());
        cfg.f = 0;
        assert!(cfg.validate().is_ok());
        cfg.publisher_key = "zz".into();
        assert!(cfg.validate().is_err());
        assert!(RunConfig::from_toml("variant = \"merkle\"").is_err());
        let other = RunConfig::generate(Variant::Baseline, schedule(8, 4), 6, 0, 0);
        let mut mixed = RunConfig::generate(Variant::Baseline, schedule(8, 4), 5, 0, 0);
        mixed.publisher_key = other.publisher_key;
        assert!(mixed.publisher_secret().is_err());
    }

    #[test]
    fn readings_are_seeded_and_bounded() {
        let s = schedule(4, 6).to_schedule().unwrap();
        let a = synthetic_readings(1, 2, 0, &s);
        assert_eq!(a, synthetic_readings(1, 2, 0, &s));
        assert_ne!(a, synthetic_readings(1, 3, 0, &s));
        assert!(a.iter().all(|&y| y <= 10));
    }

    #[test]
    fn readings_file() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("y.csv");
        std::fs::write(&p, "cycle,period,y\n0,1,7\n0,0,3\n").unwrap();
        assert_eq!(load_readings(&p, 1, 2).unwrap(), vec![vec![3, 7]]);
        assert!(load_readings(&p, 1, 3).is_err());
        assert!(load_readings(&p, 2, 2).is_err());
    }
}
