//! Session configuration: drop plans, timeouts, and the JSON config file
//! shared by server, clients, and the benchmark harness.

use std::collections::BTreeMap;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::NetError;

/// When (if ever) a client deliberately disappears.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize, Default)]
pub enum DropPlan {
    #[default]
    Never,
    /// Send the first-round message, then vanish without reading the
    /// survivor list.
    AfterRound1,
    /// Read the survivor list, then vanish without sending round two.
    BeforeRound2,
    /// Independently at each round, drop with this probability.
    Probability(f64),
}

impl FromStr for DropPlan {
    type Err = NetError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let s = s.trim();
        match s {
            "never" => Ok(DropPlan::Never),
            "after-round1" => Ok(DropPlan::AfterRound1),
            "before-round2" => Ok(DropPlan::BeforeRound2),
            _ => {
                if let Some(p) = s.strip_prefix("p=") {
                    let p: f64 = p
                        .parse()
                        .map_err(|_| NetError::Config(format!("bad drop probability {s:?}")))?;
                    if !(0.0..=1.0).contains(&p) {
                        return Err(NetError::Config(format!(
                            "drop probability {p} outside [0, 1]"
                        )));
                    }
                    Ok(DropPlan::Probability(p))
                } else {
                    Err(NetError::Config(format!(
                        "unknown drop plan {s:?} (expected never, after-round1, before-round2, or p=<f>)"
                    )))
                }
            }
        }
    }
}

/// Parses a per-user drop-plan spec like `"3:after-round1,5:p=0.4"`.
pub fn parse_drop_spec(spec: &str) -> Result<BTreeMap<usize, DropPlan>, NetError> {
    let mut out = BTreeMap::new();
    for part in spec.split(',').map(str::trim).filter(|p| !p.is_empty()) {
        let (user, plan) = part
            .split_once(':')
            .ok_or_else(|| NetError::Config(format!("bad drop spec entry {part:?}")))?;
        let user: usize = user
            .trim()
            .parse()
            .map_err(|_| NetError::Config(format!("bad user id in drop spec {part:?}")))?;
        out.insert(user, plan.parse()?);
    }
    Ok(out)
}

/// One aggregation session as configured on disk. Flags override fields.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SessionConfig {
    #[serde(default = "default_listen")]
    pub listen: String,
    pub fixture: Option<String>,
    pub keys: Option<String>,
    #[serde(default)]
    pub drop_plan: BTreeMap<usize, DropPlan>,
    #[serde(default = "default_timeout")]
    pub round1_timeout_ms: u64,
    #[serde(default = "default_timeout")]
    pub round2_timeout_ms: u64,
    /// 1 or 4 bytes per symbol; absent picks the tightest legal width.
    pub packing: Option<u8>,
    #[serde(default)]
    pub seed: u64,
}

fn default_listen() -> String {
    "127.0.0.1:0".into()
}

fn default_timeout() -> u64 {
    5_000
}

impl Default for SessionConfig {
    fn default() -> Self {
        SessionConfig {
            listen: default_listen(),
            fixture: None,
            keys: None,
            drop_plan: BTreeMap::new(),
            round1_timeout_ms: default_timeout(),
            round2_timeout_ms: default_timeout(),
            packing: None,
            seed: 0,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn drop_plan_parsing() {
        assert_eq!("never".parse::<DropPlan>().unwrap(), DropPlan::Never);
        assert_eq!(
            "after-round1".parse::<DropPlan>().unwrap(),
            DropPlan::AfterRound1
        );
        assert_eq!(
            "before-round2".parse::<DropPlan>().unwrap(),
            DropPlan::BeforeRound2
        );
        assert_eq!(
            "p=0.25".parse::<DropPlan>().unwrap(),
            DropPlan::Probability(0.25)
        );
        assert!("p=1.5".parse::<DropPlan>().is_err());
        assert!("sometimes".parse::<DropPlan>().is_err());
    }

    #[test]
    fn drop_spec_parsing() {
        let spec = parse_drop_spec("3:after-round1, 5:p=0.5").unwrap();
        assert_eq!(spec[&3], DropPlan::AfterRound1);
        assert_eq!(spec[&5], DropPlan::Probability(0.5));
        assert!(parse_drop_spec("nonsense").is_err());
    }

    #[test]
    fn config_defaults() {
        let cfg: SessionConfig = serde_json::from_str("{}").unwrap();
        assert_eq!(cfg.listen, "127.0.0.1:0");
        assert_eq!(cfg.round1_timeout_ms, 5000);
        assert!(cfg.drop_plan.is_empty());
    }
}
