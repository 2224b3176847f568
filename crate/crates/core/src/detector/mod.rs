//! Pairwise and chained interference detection.
//!
//! For a pair of bound rules the detector checks action interference (AR,
//! GC), trigger interference (CT and its special cases SD and LT) and
//! condition interference (EC, DC). Satisfiability questions go through
//! [`crate::merge`] and [`crate::solver`].

mod chains;
mod index;
mod pair;

use std::cmp::Ordering;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::catalog::Catalog;
use crate::merge::MergeOptions;
use crate::rules::BoundRule;
use crate::solver::{Problem, Witness};

pub use chains::{covert_rule_text, detect_chains, ChainBudgetExceeded, Edge, CHAIN_BUDGET};
pub use index::{ActionInfo, PairIndex};
pub use pair::{ar_candidate, detect_pair};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum FindingKind {
    AR,
    GC,
    CT,
    SD,
    LT,
    EC,
    DC,
    CHAIN,
    /// A check that could not be decided within the solver budget.
    INDETERMINATE,
}

impl FindingKind {
    pub fn is_directed(self) -> bool {
        matches!(self, FindingKind::CT | FindingKind::SD | FindingKind::EC | FindingKind::DC | FindingKind::CHAIN)
    }

    pub fn as_str(self) -> &'static str {
        match self {
            FindingKind::AR => "AR",
            FindingKind::GC => "GC",
            FindingKind::CT => "CT",
            FindingKind::SD => "SD",
            FindingKind::LT => "LT",
            FindingKind::EC => "EC",
            FindingKind::DC => "DC",
            FindingKind::CHAIN => "CHAIN",
            FindingKind::INDETERMINATE => "INDETERMINATE",
        }
    }
}

impl fmt::Display for FindingKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Which rule interferes with which.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Direction {
    pub from: String,
    pub to: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ThreatFinding {
    pub kind: FindingKind,
    /// Rule ids: sorted for undirected kinds, source first for directed ones.
    pub rules: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub direction: Option<Direction>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub witness: Option<Witness>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub channel: Option<String>,
    pub explanation: String,
    /// The problem the witness was found for; kept in memory for checking.
    #[serde(skip)]
    pub basis: Option<Problem>,
}

impl PartialEq for ThreatFinding {
    fn eq(&self, other: &Self) -> bool {
        self.kind == other.kind
            && self.rules == other.rules
            && self.direction == other.direction
            && self.witness == other.witness
            && self.channel == other.channel
            && self.explanation == other.explanation
    }
}

impl Eq for ThreatFinding {}

impl ThreatFinding {
    /// Ordering key: kind order, then rule ids.
    pub fn canonical_cmp(&self, other: &Self) -> Ordering {
        (self.kind, &self.rules, &self.channel).cmp(&(other.kind, &other.rules, &other.channel))
    }

    pub fn involves(&self, rule_id: &str) -> bool {
        self.rules.iter().any(|r| r == rule_id)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct DetectOptions {
    pub merge: MergeOptions,
    pub max_chain_len: usize,
}

impl Default for DetectOptions {
    fn default() -> Self {
        DetectOptions { merge: MergeOptions::default(), max_chain_len: 4 }
    }
}

/// Rules that take part in pairwise detection.
pub fn is_analyzable(r: &BoundRule) -> bool {
    r.rule.flags.is_empty()
}

/// Runs [`detect_pair`] over every pair drawn from `new` x `installed` and
/// over pairs within `new`. Results are in canonical order and deduplicated.
pub fn detect_all(
    new: &[BoundRule],
    installed: &[BoundRule],
    catalog: &Catalog,
    opts: &DetectOptions,
) -> Vec<ThreatFinding> {
    let all: Vec<BoundRule> = new.iter().chain(installed).cloned().collect();
    let index = PairIndex::build(&all, catalog);
    let mut out = Vec::new();
    for (i, a) in new.iter().enumerate() {
        for b in new[i + 1..].iter().chain(installed) {
            if a.id() != b.id() {
                out.extend(detect_pair(a, b, catalog, &index, opts));
            }
        }
    }
    out.sort_by(|a, b| a.canonical_cmp(b));
    out.dedup();
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rules::BoundRule;
    use crate::testutil::{bound, fixture};

    fn kinds(f: &[ThreatFinding]) -> Vec<FindingKind> {
        f.iter().map(|f| f.kind).collect()
    }

    fn pair(a: &[BoundRule], b: &[BoundRule]) -> Vec<ThreatFinding> {
        let cat = Catalog::default_catalog();
        let all: Vec<BoundRule> = a.iter().chain(b).cloned().collect();
        let index = PairIndex::build(&all, &cat);
        detect_pair(&a[0], &b[0], &cat, &index, &DetectOptions::default())
    }

    #[test]
    fn race_on_the_window() {
        let f = pair(&fixture("canonical", "ComfortTV"), &fixture("canonical", "ColdDefender"));
        assert_eq!(kinds(&f), [FindingKind::AR]);
        let w = f[0].witness.as_ref().unwrap();
        assert_eq!(w["temperature"], crate::value::Value::Int(31));
    }

    #[test]
    fn pair_order_does_not_matter() {
        let a = fixture("canonical", "CatchLiveShow");
        let b = fixture("canonical", "ComfortTV");
        assert_eq!(pair(&a, &b), pair(&b, &a));
    }

    #[test]
    fn same_command_twice_is_not_a_race() {
        let src = |n: &str| {
            format!(
                "app \"{n}\"\ninput m: device.motionSensor\ninput l: device.light\n\
                 def installed() {{ subscribe(m, \"motion.active\", h) }}\ndef h(evt) {{ l.on() }}\n"
            )
        };
        let uri = |n: &str| {
            format!("http://h/appname:{n}/m:0000000000000000000000000000000a/l:0000000000000000000000000000000b/")
        };
        let f = pair(&bound(&src("A"), &uri("A")), &bound(&src("B"), &uri("B")));
        assert!(f.is_empty(), "{f:?}");
    }

    #[test]
    fn setpoint_effect_enables_a_temperature_condition() {
        let src = "app \"Boost\"\ninput p: device.presenceSensor\ninput th: device.thermostat\ninput target: number\n\
                   def installed() { subscribe(p, \"presence.present\", h) }\ndef h(evt) { th.setHeatingSetpoint(target) }\n";
        let uri =
            "http://h/appname:Boost/p:0000000000000000000000000000000a/th:0000000000000000000000000000000b/target:32/";
        let f = pair(&bound(src, uri), &fixture("canonical", "ComfortTV"));
        let ec: Vec<_> = f.iter().filter(|f| f.kind == FindingKind::EC).collect();
        assert_eq!(ec.len(), 1, "{f:?}");
        assert_eq!(ec[0].channel.as_deref(), Some("temperature"));
    }

    #[test]
    fn low_setpoint_is_not_compatible_with_a_high_trigger() {
        let heat = "app \"Heat\"\ninput p: device.presenceSensor\ninput th: device.thermostat\n\
                    def installed() { subscribe(p, \"presence.present\", h) }\ndef h(evt) { th.setHeatingSetpoint(20) }\n";
        let watch = "app \"Watch\"\ninput t: device.temperatureMeasurement\ninput s: device.switch\n\
                     def installed() { subscribe(t, \"temperature\", h) }\ndef h(evt) { if (evt.value > 25) { s.on() } }\n";
        let a = bound(
            heat,
            "http://h/appname:Heat/p:0000000000000000000000000000000a/th:0000000000000000000000000000000b/",
        );
        let b = bound(
            watch,
            "http://h/appname:Watch/t:0000000000000000000000000000000c/s:0000000000000000000000000000000d/",
        );
        assert!(!kinds(&pair(&a, &b)).contains(&FindingKind::CT));
    }

    #[test]
    fn saturated_effects_are_marked_qualitative() {
        let heat = "app \"Heat\"\ninput p: device.presenceSensor\ninput h1: device.heater\n\
                    def installed() { subscribe(p, \"presence.present\", h) }\ndef h(evt) { h1.on() }\n";
        let a = bound(
            heat,
            "http://h/appname:Heat/p:0000000000000000000000000000000a/h1:0000000000000000000000000000000b/",
        );
        let f = pair(&a, &fixture("canonical", "ComfortTV"));
        let ec = f.iter().find(|f| f.kind == FindingKind::EC).expect("EC");
        assert!(ec.explanation.contains("qualitative"));
    }

    #[test]
    fn chains_need_three_rules() {
        let cat = Catalog::default_catalog();
        let a = fixture("chain", "CurlingIron");
        let b = fixture("chain", "SwitchChangesMode");
        let f = detect_all(&a, &b, &cat, &DetectOptions::default());
        let rules = a.iter().chain(&b).map(|r| (r.id().to_string(), r.clone())).collect();
        assert!(detect_chains(&f, &[], &rules, &cat, 4).unwrap().is_empty());
    }

    #[test]
    fn covert_rule_of_the_door_chain() {
        let cat = Catalog::default_catalog();
        let a = &fixture("chain", "CurlingIron")[0];
        let c = &fixture("chain", "MakeItSo")[0];
        assert_eq!(covert_rule_text(a, c, &cat), "unlocks a door when motion is detected");
    }
}
