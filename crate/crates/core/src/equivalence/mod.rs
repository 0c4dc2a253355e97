//! The two privacy-checking procedures: trace equivalence of two hidden
//! systems and diff-equivalence of a biprocess, plus barrier swap-plan
//! enumeration.
//!
//! Both checkers are exact for the bounded models in scope: exploration is
//! exhaustive within explicit bounds and there is no abstraction, so an
//! attack verdict is always genuine for the bounded model. The trade-off
//! is that an equivalence verdict carries no unbounded-session guarantee.
//! Every emitted attack trace is replayed before it is reported; a replay
//! mismatch is a checker bug and fails loudly.

mod diff_eq;
mod trace_eq;

pub use diff_eq::{compile_barriers, diff_equivalent};
pub use trace_eq::{observable_traces, trace_equivalent};

use std::fmt;

use thiserror::Error;

use crate::calculus::Model;
use crate::semantics::{Divergence, ExploreConfig, Scenario, SwapPlan};
use crate::term::Side;

#[derive(Debug, Error)]
pub enum CheckerError {
    #[error("trace equivalence requires choice-free models; project the biprocess first")]
    NotPlain,
    #[error("{0} barrier phases exceed the swap-plan cap of 8; prune phases or check projections with trace equivalence")]
    TooManyPhases(usize),
    #[error("attack replay failed to reproduce the divergence: {0}; this is a checker bug")]
    ReplayMismatch(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum VerdictResult {
    Equivalent,
    Attack,
    Inconclusive,
}

impl fmt::Display for VerdictResult {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            VerdictResult::Equivalent => write!(f, "EQUIVALENT"),
            VerdictResult::Attack => write!(f, "ATTACK"),
            VerdictResult::Inconclusive => write!(f, "INCONCLUSIVE"),
        }
    }
}

/// Why two systems came apart at the end of a witness trace.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum DivergenceKind {
    /// An observable action is enabled on one side only.
    ActionOneSided { action: String, side: Side },
    /// The frames after the trace admit a distinguishing recipe test.
    FrameDistinguisher { test: String },
    /// A lockstep biprocess disagreement (conditional, rendezvous,
    /// injection, event, or swap applicability).
    Biprocess(Divergence),
}

impl fmt::Display for DivergenceKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            DivergenceKind::ActionOneSided { action, side } => {
                write!(f, "action {action} is enabled on the {side} side only")
            }
            DivergenceKind::FrameDistinguisher { test } => {
                write!(f, "frame distinguisher: {test}")
            }
            DivergenceKind::Biprocess(d) => write!(f, "{d}"),
        }
    }
}

/// A distinguishing trace: the observable actions leading to the
/// divergence, already rendered in the stable trace grammar.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AttackTrace {
    pub actions: Vec<String>,
    pub divergence: DivergenceKind,
}

#[derive(Debug, Clone, Default)]
pub struct Stats {
    pub states: usize,
    pub max_frame_len: usize,
    pub ms: u128,
}

#[derive(Debug, Clone)]
pub struct Verdict {
    pub result: VerdictResult,
    pub witness: Option<AttackTrace>,
    /// Names the bound that was hit when the result is inconclusive.
    pub inconclusive_reason: Option<String>,
    pub stats: Stats,
    /// The swap plan under which diff-equivalence succeeded.
    pub accepted_plan: Option<SwapPlan>,
}

impl Verdict {
    pub fn equivalent(stats: Stats, plan: Option<SwapPlan>) -> Verdict {
        Verdict {
            result: VerdictResult::Equivalent,
            witness: None,
            inconclusive_reason: None,
            stats,
            accepted_plan: plan,
        }
    }

    pub fn attack(witness: AttackTrace, stats: Stats) -> Verdict {
        Verdict {
            result: VerdictResult::Attack,
            witness: Some(witness),
            inconclusive_reason: None,
            stats,
            accepted_plan: None,
        }
    }

    pub fn inconclusive(reason: String, stats: Stats) -> Verdict {
        Verdict {
            result: VerdictResult::Inconclusive,
            witness: None,
            inconclusive_reason: Some(reason),
            stats,
            accepted_plan: None,
        }
    }

    /// The documented machine-readable schema:
    /// `{result, scenario, model, stats{states,frame_len,ms}, witness{trace[],divergence}}`.
    pub fn to_json(&self, model: &str, scenario: &str) -> serde_json::Value {
        serde_json::json!({
            "result": self.result.to_string(),
            "scenario": scenario,
            "model": model,
            "stats": {
                "states": self.stats.states,
                "frame_len": self.stats.max_frame_len,
                "ms": self.stats.ms,
            },
            "witness": self.witness.as_ref().map(|w| serde_json::json!({
                "trace": w.actions,
                "divergence": w.divergence.to_string(),
            })),
            "inconclusive_reason": self.inconclusive_reason,
            "accepted_plan": self.accepted_plan.as_ref().map(|p| p.to_string()),
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Property {
    TraceEq,
    DiffEq,
}

impl fmt::Display for Property {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Property::TraceEq => write!(f, "trace-eq"),
            Property::DiffEq => write!(f, "diff-eq"),
        }
    }
}

/// Everything needed to rerun (and therefore diagnose) a check.
pub struct CheckRequest<'a> {
    pub property: Property,
    /// The biprocess for diff-eq; the first system for trace-eq.
    pub left: &'a Model,
    /// The second system for trace-eq.
    pub right: Option<&'a Model>,
    pub scenario: &'a Scenario,
    pub cfg: &'a ExploreConfig,
}

/// Render a step-by-step report for an attack verdict, re-checking the
/// divergence by replay before printing.
pub fn diagnose(verdict: &Verdict, req: &CheckRequest) -> Result<String, CheckerError> {
    if verdict.result != VerdictResult::Attack {
        return Err(CheckerError::ReplayMismatch(
            "nothing to diagnose: verdict is not an attack".into(),
        ));
    }
    let witness = verdict
        .witness
        .as_ref()
        .expect("attack verdicts carry a witness");
    // replay re-verifies the divergence and returns per-step annotations
    let annotations = match req.property {
        Property::TraceEq => trace_eq::replay(
            req.left,
            req.right.expect("trace-eq diagnoses need both systems"),
            req.scenario,
            req.cfg,
            witness,
        )?,
        Property::DiffEq => diff_eq::replay(req.left, req.scenario, req.cfg, witness)?,
    };
    let mut out = String::new();
    out.push_str(&format!(
        "attack under scenario `{}` ({}):\n",
        req.scenario.name, req.property
    ));
    if witness.actions.is_empty() {
        out.push_str("  (divergence at the initial state)\n");
    }
    for (i, act) in witness.actions.iter().enumerate() {
        match annotations.get(i).and_then(|a| a.as_ref()) {
            Some(note) => out.push_str(&format!("  {}. {act}   {note}\n", i + 1)),
            None => out.push_str(&format!("  {}. {act}\n", i + 1)),
        }
    }
    out.push_str(&format!("divergence: {}\n", witness.divergence));
    out.push_str("replay: divergence reproduced on independent re-execution\n");
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::calculus::parse_model;
    use crate::semantics::{builtin_scenario, BuiltinScenario};

    #[test]
    fn diagnose_rejects_non_attacks() {
        let m =
            parse_model("free a.\nchannel x.pub.t public.\nprocess out(x.pub.t, a). 0").unwrap();
        let s = builtin_scenario(BuiltinScenario::Honest);
        let cfg = ExploreConfig::default();
        let v = diff_equivalent(&m, &s, &cfg).unwrap();
        assert_eq!(v.result, VerdictResult::Equivalent);
        let err = diagnose(
            &v,
            &CheckRequest {
                property: Property::DiffEq,
                left: &m,
                right: None,
                scenario: &s,
                cfg: &cfg,
            },
        )
        .unwrap_err();
        assert!(err.to_string().contains("nothing to diagnose"));
    }

    #[test]
    fn verdict_json_has_the_documented_fields() {
        let m = parse_model(
            "free a, b.\nchannel x.pub.t public.\nprocess out(x.pub.t, choice[a,b]). 0",
        )
        .unwrap();
        let s = builtin_scenario(BuiltinScenario::Honest);
        let v = diff_equivalent(&m, &s, &ExploreConfig::default()).unwrap();
        let json = v.to_json("tiny", "honest");
        assert_eq!(json["result"], "ATTACK");
        assert_eq!(json["model"], "tiny");
        assert_eq!(json["scenario"], "honest");
        assert!(json["stats"]["states"].is_u64());
        assert!(json["stats"]["frame_len"].is_u64());
        assert!(json["stats"]["ms"].is_u64());
        assert_eq!(json["witness"]["trace"][0], "out(x.pub.t, w1)");
        assert!(json["witness"]["divergence"]
            .as_str()
            .unwrap()
            .contains("frame distinguisher"));
    }
}
