//! Intruder scenarios: which channels the intruder can observe, intercept,
//! or inject on, which agents are corrupted, and what it knows initially.
//!
//! Capabilities are given as rules over channel triples, mirroring the
//! unreliable-channel sets a CSP-style intruder is configured with. A
//! channel's capability set is the union over all matching rules plus an
//! implicit full-capability rule for every corrupted agent's endpoints.

use std::collections::BTreeSet;
use std::fmt;

use indexmap::IndexMap;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::calculus::{ChannelId, Ident, Model, ParseError, TermScope, Visibility};
use crate::term::Term;

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("scenario file: {0}")]
    Toml(#[from] toml::de::Error),
    #[error("scenario knowledge term: {0}")]
    Term(#[from] ParseError),
    #[error("unknown capability `{0}` (expected observe, intercept, or inject)")]
    UnknownCapability(String),
    #[error("unknown built-in scenario `{0}`")]
    UnknownBuiltin(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct CapSet {
    pub observe: bool,
    pub intercept: bool,
    pub inject: bool,
}

impl CapSet {
    pub const NONE: CapSet = CapSet {
        observe: false,
        intercept: false,
        inject: false,
    };
    pub const OBSERVE: CapSet = CapSet {
        observe: true,
        intercept: false,
        inject: false,
    };
    pub const FULL: CapSet = CapSet {
        observe: true,
        intercept: true,
        inject: true,
    };

    pub fn union(self, other: CapSet) -> CapSet {
        CapSet {
            observe: self.observe || other.observe,
            intercept: self.intercept || other.intercept,
            inject: self.inject || other.inject,
        }
    }

    /// Intercept implies observe.
    pub fn normalized(mut self) -> CapSet {
        if self.intercept {
            self.observe = true;
        }
        self
    }

    pub fn is_none(self) -> bool {
        self == CapSet::NONE
    }
}

impl fmt::Display for CapSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut parts = Vec::new();
        if self.observe {
            parts.push("observe");
        }
        if self.intercept {
            parts.push("intercept");
        }
        if self.inject {
            parts.push("inject");
        }
        write!(f, "{{{}}}", parts.join(","))
    }
}

/// A conjunction of channel filters granting a capability set. Every
/// omitted filter matches anything.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct CapabilityRule {
    pub from: Option<Vec<Ident>>,
    pub to: Option<Vec<Ident>>,
    pub tag: Option<Vec<Ident>>,
    /// Matches when either endpoint is in the list.
    pub endpoint: Option<Vec<Ident>>,
    pub not_endpoint: Vec<Ident>,
    pub not_tag: Vec<Ident>,
    pub visibility: Option<Visibility>,
    pub caps: CapSet,
}

impl CapabilityRule {
    fn matches(&self, id: &ChannelId, vis: Visibility) -> bool {
        let any = |list: &Option<Vec<Ident>>, x: &Ident| {
            list.as_ref().is_none_or(|l| l.iter().any(|i| i == x))
        };
        any(&self.from, &id.from)
            && any(&self.to, &id.to)
            && any(&self.tag, &id.tag)
            && self
                .endpoint
                .as_ref()
                .is_none_or(|l| l.iter().any(|e| id.has_endpoint(e)))
            && !self.not_endpoint.iter().any(|e| id.has_endpoint(e))
            && !self.not_tag.contains(&id.tag)
            && self.visibility.is_none_or(|v| v == vis)
    }
}

#[derive(Debug, Clone, Default)]
pub struct Scenario {
    pub name: String,
    pub rules: Vec<CapabilityRule>,
    /// Agents whose private channels are fully ceded to the intruder;
    /// their secret data must be listed in `knowledge` by the scenario
    /// constructor.
    pub corrupted: BTreeSet<Ident>,
    /// Initial intruder knowledge beyond the model's public names.
    pub knowledge: Vec<Term>,
}

impl Scenario {
    /// Resolve per-channel capabilities against a model's channel table.
    /// Restricted (nu-bound) channels are not addressable and stay silent.
    pub fn capabilities_for(&self, m: &Model) -> IndexMap<ChannelId, CapSet> {
        let mut out = IndexMap::new();
        for decl in &m.channels {
            let mut caps = CapSet::NONE;
            for rule in &self.rules {
                if rule.matches(&decl.id, decl.visibility) {
                    caps = caps.union(rule.caps);
                }
            }
            for agent in &self.corrupted {
                if decl.id.has_endpoint(agent) {
                    caps = caps.union(CapSet::FULL);
                }
            }
            let caps = caps.normalized();
            if !caps.is_none() {
                out.insert(decl.id.clone(), caps);
            }
        }
        out
    }
}

/// Channel tags carrying ballot content or the voter's candidate choice;
/// the weakest intruder is denied these even if a model exposes them on a
/// public channel.
pub const BALLOT_CONTENT_TAGS: &[&str] = &["vote", "ballot", "summary"];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BuiltinScenario {
    /// Observation of public channels only, ballot-content channels
    /// excluded. Verdict expectation: privacy holds.
    Dy1,
    /// Full Dolev-Yao power on every channel except voter v1's endpoints;
    /// every other voter is corrupted (one honest voter).
    Dy2,
    /// Full power on voter v3's endpoints only (one dishonest voter),
    /// plus observation of public channels.
    Dy3,
    /// Pure public observation with no exclusions; the baseline for
    /// corruption scenarios. Coincides with DY1 on the built-in models,
    /// whose ballot-content channels are private anyway.
    Honest,
}

impl BuiltinScenario {
    pub fn by_name(name: &str) -> Option<BuiltinScenario> {
        match name {
            "dy1" => Some(BuiltinScenario::Dy1),
            "dy2" => Some(BuiltinScenario::Dy2),
            "dy3" => Some(BuiltinScenario::Dy3),
            "honest" => Some(BuiltinScenario::Honest),
            _ => None,
        }
    }
}

fn observe_public_rule(excluded_tags: &[&str]) -> CapabilityRule {
    CapabilityRule {
        visibility: Some(Visibility::Public),
        not_tag: excluded_tags.iter().map(|t| (*t).into()).collect(),
        caps: CapSet::OBSERVE,
        ..CapabilityRule::default()
    }
}

/// The built-in intruder capability configurations. Initial knowledge is
/// model-specific and added by the model layer (or read from a scenario
/// file).
pub fn builtin_scenario(which: BuiltinScenario) -> Scenario {
    match which {
        BuiltinScenario::Dy1 => Scenario {
            name: "dy1".into(),
            rules: vec![observe_public_rule(BALLOT_CONTENT_TAGS)],
            corrupted: BTreeSet::new(),
            knowledge: Vec::new(),
        },
        BuiltinScenario::Dy2 => Scenario {
            name: "dy2".into(),
            rules: vec![CapabilityRule {
                not_endpoint: vec!["v1".into()],
                caps: CapSet::FULL,
                ..CapabilityRule::default()
            }],
            corrupted: ["v2", "v3", "v4"].iter().map(|s| (*s).into()).collect(),
            knowledge: Vec::new(),
        },
        BuiltinScenario::Dy3 => Scenario {
            name: "dy3".into(),
            rules: vec![
                CapabilityRule {
                    endpoint: Some(vec!["v3".into()]),
                    caps: CapSet::FULL,
                    ..CapabilityRule::default()
                },
                observe_public_rule(BALLOT_CONTENT_TAGS),
            ],
            corrupted: ["v3"].iter().map(|s| (*s).into()).collect(),
            knowledge: Vec::new(),
        },
        BuiltinScenario::Honest => Scenario {
            name: "honest".into(),
            rules: vec![observe_public_rule(&[])],
            corrupted: BTreeSet::new(),
            knowledge: Vec::new(),
        },
    }
}

#[derive(Debug, Deserialize)]
struct RawScenario {
    name: String,
    #[serde(default)]
    corrupted: Vec<String>,
    #[serde(default)]
    knowledge: Vec<String>,
    #[serde(default)]
    rule: Vec<RawRule>,
}

#[derive(Debug, Deserialize)]
struct RawRule {
    #[serde(default)]
    from: Option<Vec<String>>,
    #[serde(default)]
    to: Option<Vec<String>>,
    #[serde(default)]
    tag: Option<Vec<String>>,
    #[serde(default)]
    endpoint: Option<Vec<String>>,
    #[serde(default)]
    not_endpoint: Vec<String>,
    #[serde(default)]
    not_tag: Vec<String>,
    #[serde(default)]
    visibility: Option<Visibility>,
    caps: Vec<String>,
}

/// Load a scenario from its TOML form. Knowledge terms are resolved
/// against the model's declared names.
pub fn load_scenario(src: &str, model: &Model) -> Result<Scenario, ScenarioError> {
    let raw: RawScenario = toml::from_str(src)?;
    let scope = TermScope::of_model(model);
    let mut knowledge = Vec::new();
    for k in &raw.knowledge {
        knowledge.push(crate::calculus::parse_term_with(k, &scope)?);
    }
    let mut rules = Vec::new();
    for r in raw.rule {
        let mut caps = CapSet::NONE;
        for c in &r.caps {
            match c.as_str() {
                "observe" => caps.observe = true,
                "intercept" => caps.intercept = true,
                "inject" => caps.inject = true,
                other => return Err(ScenarioError::UnknownCapability(other.into())),
            }
        }
        let idents = |v: Option<Vec<String>>| v.map(|l| l.into_iter().map(Ident::from).collect());
        rules.push(CapabilityRule {
            from: idents(r.from),
            to: idents(r.to),
            tag: idents(r.tag),
            endpoint: idents(r.endpoint),
            not_endpoint: r.not_endpoint.into_iter().map(Ident::from).collect(),
            not_tag: r.not_tag.into_iter().map(Ident::from).collect(),
            visibility: r.visibility,
            caps,
        });
    }
    Ok(Scenario {
        name: raw.name,
        rules,
        corrupted: raw.corrupted.into_iter().map(Ident::from).collect(),
        knowledge,
    })
}
