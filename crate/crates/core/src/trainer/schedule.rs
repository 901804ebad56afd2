//! Which oracle produces the next constraint.

use serde::{Deserialize, Serialize};

use crate::inference::OracleTier;

/// Source of a constraint.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Tier {
    Cache,
    MoveMaking,
    Exact,
}

impl Tier {
    pub fn as_str(self) -> &'static str {
        match self {
            Tier::Cache => "cache",
            Tier::MoveMaking => "move_making",
            Tier::Exact => "exact",
        }
    }

    pub fn oracle(self) -> Option<OracleTier> {
        match self {
            Tier::Cache => None,
            Tier::MoveMaking => Some(OracleTier::MoveMaking),
            Tier::Exact => Some(OracleTier::Exact),
        }
    }
}

impl From<OracleTier> for Tier {
    fn from(t: OracleTier) -> Self {
        match t {
            OracleTier::MoveMaking => Tier::MoveMaking,
            OracleTier::Exact => Tier::Exact,
        }
    }
}

impl std::fmt::Display for Tier {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for Tier {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s.trim().to_ascii_lowercase().as_str() {
            "cache" => Ok(Tier::Cache),
            "move" | "move_making" | "move-making" => Ok(Tier::MoveMaking),
            "exact" | "bnb" => Ok(Tier::Exact),
            other => Err(format!("unknown tier '{other}'")),
        }
    }
}

/// How the cache oracle is used.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CacheStrategy {
    /// Every constraint comes from a full oracle.
    None,
    /// Cache until it yields no violated constraint.
    UntilExhausted,
    /// Cache while its primal estimate stays close to the last full-oracle
    /// estimate (see [`schedule_next_tier`]).
    Dynamic,
}

impl std::str::FromStr for CacheStrategy {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s.trim().to_ascii_lowercase().as_str() {
            "none" | "no-cache" => Ok(CacheStrategy::None),
            "until-exhausted" | "until_exhausted" | "exhaust" => Ok(CacheStrategy::UntilExhausted),
            "dynamic" => Ok(CacheStrategy::Dynamic),
            other => Err(format!("unknown cache strategy '{other}'")),
        }
    }
}

impl std::fmt::Display for CacheStrategy {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            CacheStrategy::None => "none",
            CacheStrategy::UntilExhausted => "until-exhausted",
            CacheStrategy::Dynamic => "dynamic",
        })
    }
}

/// Keep using the cache iff `o_c − o_q < ½ (o_q − o_w)`; otherwise run
/// `full_tier`.
pub fn schedule_next_tier(o_c: f64, o_q: f64, o_w: f64, full_tier: Tier) -> Tier {
    if o_c - o_q < 0.5 * (o_q - o_w) {
        Tier::Cache
    } else {
        full_tier
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LadderStep {
    Next(Tier),
    /// The last tier found nothing violated.
    Terminate,
}

/// Position on the oracle ladder plus the last full-oracle estimate.
#[derive(Debug, Clone, PartialEq)]
pub struct LadderState {
    tiers: Vec<OracleTier>,
    strategy: CacheStrategy,
    position: usize,
    on_cache: bool,
    o_q: Option<f64>,
}

impl LadderState {
    pub fn new(tiers: Vec<OracleTier>, strategy: CacheStrategy) -> Self {
        assert!(!tiers.is_empty(), "ladder needs at least one full oracle");
        LadderState {
            tiers,
            on_cache: strategy != CacheStrategy::None,
            strategy,
            position: 0,
            o_q: None,
        }
    }

    pub fn current(&self) -> Tier {
        if self.on_cache {
            Tier::Cache
        } else {
            self.tiers[self.position].into()
        }
    }

    fn full_tier(&self) -> Tier {
        self.tiers[self.position].into()
    }

    /// Last primal estimate from a full oracle.
    pub fn o_q(&self) -> Option<f64> {
        self.o_q
    }

    /// The cache had nothing to offer or nothing violated.
    pub fn cache_exhausted(&mut self) -> Tier {
        self.on_cache = false;
        self.current()
    }

    /// The cache produced a violated constraint with primal estimate `o_c`
    /// while the restricted objective was `o_w`.
    pub fn cache_produced(&mut self, o_c: f64, o_w: f64) -> Tier {
        self.on_cache = match self.strategy {
            CacheStrategy::None => false,
            CacheStrategy::UntilExhausted => true,
            CacheStrategy::Dynamic => match self.o_q {
                Some(o_q) => schedule_next_tier(o_c, o_q, o_w, self.full_tier()) == Tier::Cache,
                None => false,
            },
        };
        self.current()
    }

    /// A full oracle ran; `violated` tells whether it beat the stopping
    /// tolerance, `o_i` is its primal estimate.
    pub fn oracle_ran(&mut self, violated: bool, o_i: f64) -> LadderStep {
        self.o_q = Some(o_i);
        if violated {
            self.position = 0;
            self.on_cache = self.strategy != CacheStrategy::None;
            LadderStep::Next(self.current())
        } else if self.position + 1 < self.tiers.len() {
            self.position += 1;
            self.on_cache = false;
            LadderStep::Next(self.current())
        } else {
            LadderStep::Terminate
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cache_test_examples() {
        assert_eq!(schedule_next_tier(8.0, 9.0, 7.0, Tier::MoveMaking), Tier::Cache);
        assert_eq!(schedule_next_tier(10.0, 9.0, 7.0, Tier::MoveMaking), Tier::MoveMaking);
        assert_eq!(schedule_next_tier(9.4, 9.0, 7.0, Tier::MoveMaking), Tier::Cache);
        // strict inequality at the boundary
        assert_eq!(schedule_next_tier(10.0, 9.0, 7.0, Tier::Exact), Tier::Exact);
    }

    fn full_ladder() -> LadderState {
        LadderState::new(vec![OracleTier::MoveMaking, OracleTier::Exact], CacheStrategy::Dynamic)
    }

    #[test]
    fn fresh_start_escalates_past_empty_cache() {
        let mut s = full_ladder();
        assert_eq!(s.current(), Tier::Cache);
        assert_eq!(s.cache_exhausted(), Tier::MoveMaking);
    }

    #[test]
    fn unviolated_move_making_escalates_to_exact() {
        let mut s = full_ladder();
        s.cache_exhausted();
        assert_eq!(s.oracle_ran(false, 3.0), LadderStep::Next(Tier::Exact));
        assert_eq!(s.oracle_ran(false, 3.1), LadderStep::Terminate);
    }

    #[test]
    fn violated_exact_resets_to_cache() {
        let mut s = full_ladder();
        s.cache_exhausted();
        s.oracle_ran(false, 3.0);
        assert_eq!(s.oracle_ran(true, 4.0), LadderStep::Next(Tier::Cache));
        assert_eq!(s.cache_exhausted(), Tier::MoveMaking);
    }

    #[test]
    fn dynamic_strategy_uses_last_full_estimate() {
        let mut s = full_ladder();
        s.cache_exhausted();
        s.oracle_ran(true, 9.0);
        assert_eq!(s.cache_produced(8.0, 7.0), Tier::Cache);
        assert_eq!(s.cache_produced(10.0, 7.0), Tier::MoveMaking);
        assert_eq!(s.o_q(), Some(9.0));
    }

    #[test]
    fn until_exhausted_stays_on_cache() {
        let mut s = LadderState::new(vec![OracleTier::MoveMaking], CacheStrategy::UntilExhausted);
        s.cache_exhausted();
        s.oracle_ran(true, 1.0);
        assert_eq!(s.cache_produced(100.0, 0.0), Tier::Cache);
    }

    #[test]
    fn no_cache_never_returns_cache() {
        let mut s = LadderState::new(vec![OracleTier::MoveMaking, OracleTier::Exact], CacheStrategy::None);
        assert_eq!(s.current(), Tier::MoveMaking);
        assert_eq!(s.oracle_ran(true, 1.0), LadderStep::Next(Tier::MoveMaking));
    }

    #[test]
    fn parse_tiers() {
        assert_eq!("move".parse::<Tier>().unwrap(), Tier::MoveMaking);
        assert_eq!("EXACT".parse::<Tier>().unwrap(), Tier::Exact);
        assert!("qpbo".parse::<Tier>().is_err());
        assert_eq!("dynamic".parse::<CacheStrategy>().unwrap(), CacheStrategy::Dynamic);
    }
}
