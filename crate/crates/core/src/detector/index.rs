use std::collections::BTreeMap;

use crate::catalog::{Catalog, Sign};
use crate::config::DeviceId;
use crate::rules::{substitute_definitions, BoundRule};
use crate::value::Value;

/// What a rule's action does, resolved against its bindings.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ActionInfo {
    pub device: Option<DeviceId>,
    pub capability: Option<String>,
    pub command: String,
    /// Parameters that resolve to constants; `None` where symbolic.
    pub params: Vec<Option<Value>>,
    /// Goal-effect row; all neutral for virtual capabilities and API sinks.
    pub goal: BTreeMap<String, Sign>,
}

impl ActionInfo {
    pub fn of(r: &BoundRule, catalog: &Catalog) -> ActionInfo {
        let a = &r.rule.action;
        let bound = r.ctx.device(&a.subject);
        let params = a.paras.iter().map(|p| substitute_definitions(p, &a.data).as_const()).collect();
        let capability = bound.map(|b| b.capability.clone());
        let goal = match &capability {
            Some(c) => catalog.goal_effect(c, &a.command),
            None => catalog.goal_features.iter().map(|f| (f.clone(), Sign::Neutral)).collect(),
        };
        ActionInfo { device: bound.map(|b| b.id.clone()), capability, command: a.command.clone(), params, goal }
    }
}

/// Rule id, command and constant parameters of an action on one device.
pub type DeviceAction = (String, String, Vec<Option<Value>>);

/// Lookup tables over a set of bound rules: which rules act on each device
/// and which push each goal feature in which direction.
#[derive(Debug, Clone, Default)]
pub struct PairIndex {
    pub actions: BTreeMap<String, ActionInfo>,
    pub by_device: BTreeMap<DeviceId, Vec<DeviceAction>>,
    pub by_goal_feature: BTreeMap<String, Vec<(String, Sign)>>,
}

impl PairIndex {
    pub fn build(rules: &[BoundRule], catalog: &Catalog) -> PairIndex {
        let mut ix = PairIndex::default();
        for r in rules {
            let info = ActionInfo::of(r, catalog);
            if let Some(d) = &info.device {
                ix.by_device.entry(d.clone()).or_default().push((
                    r.id().to_string(),
                    info.command.clone(),
                    info.params.clone(),
                ));
            }
            for (f, s) in &info.goal {
                if *s != Sign::Neutral {
                    ix.by_goal_feature.entry(f.clone()).or_default().push((r.id().to_string(), *s));
                }
            }
            ix.actions.insert(r.id().to_string(), info);
        }
        ix
    }

    /// Action info of `r`, computed on the fly when `r` is not indexed.
    pub fn action(&self, r: &BoundRule, catalog: &Catalog) -> ActionInfo {
        self.actions.get(r.id()).cloned().unwrap_or_else(|| ActionInfo::of(r, catalog))
    }

    /// Goal features on which the two rules push in opposite directions.
    pub fn opposing_features(&self, a: &str, b: &str) -> Vec<String> {
        let sign = |id: &str, f: &str| {
            self.by_goal_feature.get(f).and_then(|v| v.iter().find(|(r, _)| r == id).map(|(_, s)| *s))
        };
        self.by_goal_feature
            .keys()
            .filter(|f| matches!((sign(a, f), sign(b, f)), (Some(x), Some(y)) if x.opposes(y)))
            .cloned()
            .collect()
    }
}
