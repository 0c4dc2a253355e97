//! Bounded, memoized breadth-first exploration.
//!
//! The [`Engine`] lazily expands configurations, memoizing on the
//! canonical key, and is shared by the LTS builder, the trace-equivalence
//! product, and the diff-equivalence driver. All bounds are explicit:
//! hitting one is an error the checkers turn into an inconclusive verdict,
//! never a silent pass.

use std::collections::{HashMap, VecDeque};
use std::rc::Rc;

use serde::Serialize;
use thiserror::Error;

use crate::calculus::Model;
use crate::semantics::scenario::Scenario;
use crate::semantics::step::{
    canonical_key, step, Action, Config, Divergence, SemanticsError, StepCache, StepCtx,
    StepOutcome, SwapPlan,
};

#[derive(Debug, Clone)]
pub struct ExploreConfig {
    pub max_states: usize,
    /// Rough accounting over canonical keys and configurations; the cap
    /// can also be set through `BALLOTSCOPE_MAX_MEM` (MiB).
    pub max_memory_bytes: usize,
    /// Recipe size bound for injected payloads. The default of 2 gives a
    /// replay-and-decompose intruder (any observed message or extractable
    /// part can be injected); 3 and above add forged compositions at a
    /// steep state-space cost. All verdicts are relative to this bound.
    pub inject_depth: usize,
    pub max_inject_payloads: usize,
    /// Recipe depth for static-equivalence tests run by the checkers.
    pub stateq_depth: usize,
    pub deduction_max_terms: usize,
    /// Retain canonical state renderings (LTS dumps and trace listings).
    pub keep_state_keys: bool,
}

impl Default for ExploreConfig {
    fn default() -> Self {
        let max_memory_bytes = std::env::var("BALLOTSCOPE_MAX_MEM")
            .ok()
            .and_then(|v| v.parse::<usize>().ok())
            .map(|mib| mib * 1024 * 1024)
            .unwrap_or(4 * 1024 * 1024 * 1024);
        ExploreConfig {
            max_states: 5_000_000,
            max_memory_bytes,
            inject_depth: 2,
            max_inject_payloads: 4096,
            stateq_depth: 3,
            deduction_max_terms: 200_000,
            keep_state_keys: false,
        }
    }
}

#[derive(Debug, Error)]
pub enum ExpandError {
    #[error("state bound exceeded: {limit} states, {frontier} still on the frontier")]
    StateBound { limit: usize, frontier: usize },
    #[error("memory bound exceeded: ~{used} of {limit} bytes, {frontier} states on the frontier")]
    MemoryBound {
        used: usize,
        limit: usize,
        frontier: usize,
    },
    #[error(transparent)]
    Semantics(#[from] SemanticsError),
    /// Only in biprocess mode: the projections came apart at this state.
    #[error("biprocess divergence: {divergence}")]
    Diverged { at: u32, divergence: Divergence },
}

impl ExpandError {
    /// The bound description used in inconclusive verdicts.
    pub fn bound_name(&self) -> String {
        match self {
            ExpandError::StateBound { limit, .. } => format!("state bound ({limit})"),
            ExpandError::MemoryBound { limit, .. } => format!("memory bound ({limit} bytes)"),
            ExpandError::Semantics(SemanticsError::Deduction(e)) => format!("deduction bound: {e}"),
            ExpandError::Semantics(SemanticsError::InjectBound { limit, .. }) => {
                format!("injection bound ({limit})")
            }
            ExpandError::Diverged { .. } => "divergence".into(),
        }
    }
}

struct EngineState {
    config: Config,
    key_len: usize,
    succs: Option<Rc<Vec<(Action, u32)>>>,
}

/// A lazily expanded, canonically memoized state graph for one model under
/// one scenario.
pub struct Engine {
    ctx: StepCtx,
    states: Vec<EngineState>,
    memo: HashMap<String, u32>,
    cache: StepCache,
    cfg: ExploreConfig,
    approx_bytes: usize,
    pub keys: Vec<String>,
}

impl Engine {
    pub fn new(
        model: &Model,
        scenario: &Scenario,
        cfg: &ExploreConfig,
        bi: bool,
        swap_plan: Option<SwapPlan>,
    ) -> Engine {
        let ctx = StepCtx {
            caps: scenario.capabilities_for(model),
            publics: model.public_names(),
            init_knowledge: scenario.knowledge.iter().map(|t| t.normalize()).collect(),
            inject_depth: cfg.inject_depth,
            max_inject_payloads: cfg.max_inject_payloads,
            deduction_max_terms: cfg.deduction_max_terms,
            bi,
            swap_plan,
        };
        let mut e = Engine {
            ctx,
            states: Vec::new(),
            memo: HashMap::new(),
            cache: StepCache::default(),
            cfg: cfg.clone(),
            approx_bytes: 0,
            keys: Vec::new(),
        };
        let init = Config::initial(model);
        e.intern(init)
            .expect("bounds cannot be hit on the initial state");
        e
    }

    pub fn initial(&self) -> u32 {
        0
    }

    pub fn state_count(&self) -> usize {
        self.states.len()
    }

    pub fn config(&self, id: u32) -> &Config {
        &self.states[id as usize].config
    }

    pub fn init_knowledge_len(&self) -> usize {
        self.ctx.init_knowledge.len()
    }

    pub fn init_knowledge(&self) -> &[crate::term::Term] {
        &self.ctx.init_knowledge
    }

    fn intern(&mut self, config: Config) -> Result<u32, ExpandError> {
        let key = canonical_key(&config);
        if let Some(&id) = self.memo.get(&key) {
            return Ok(id);
        }
        if self.states.len() >= self.cfg.max_states {
            return Err(ExpandError::StateBound {
                limit: self.cfg.max_states,
                frontier: 0,
            });
        }
        self.approx_bytes += key.len() * 2 + 128 + config.frame.len() * 32;
        if self.approx_bytes > self.cfg.max_memory_bytes {
            return Err(ExpandError::MemoryBound {
                used: self.approx_bytes,
                limit: self.cfg.max_memory_bytes,
                frontier: 0,
            });
        }
        let id = self.states.len() as u32;
        self.states.push(EngineState {
            config,
            key_len: key.len(),
            succs: None,
        });
        if self.cfg.keep_state_keys {
            self.keys.push(key.clone());
        }
        self.memo.insert(key, id);
        Ok(id)
    }

    /// Successors of a state, computed once and shared thereafter.
    pub fn expand(&mut self, id: u32) -> Result<Rc<Vec<(Action, u32)>>, ExpandError> {
        if let Some(s) = &self.states[id as usize].succs {
            return Ok(s.clone());
        }
        let config = self.states[id as usize].config.clone();
        let outcome = step(&config, &self.ctx, &mut self.cache)?;
        let raw = match outcome {
            StepOutcome::Diverged(divergence) => {
                return Err(ExpandError::Diverged { at: id, divergence })
            }
            StepOutcome::Successors(s) => s,
        };
        let mut out = Vec::with_capacity(raw.len());
        let mut seen: std::collections::HashSet<(Action, u32)> = std::collections::HashSet::new();
        for (a, c) in raw {
            let sid = self.intern(c)?;
            if seen.insert((a.clone(), sid)) {
                out.push((a, sid));
            }
        }
        let rc = Rc::new(out);
        self.states[id as usize].succs = Some(rc.clone());
        Ok(rc)
    }

    pub fn approx_bytes(&self) -> usize {
        self.approx_bytes + self.states.iter().map(|s| s.key_len).sum::<usize>()
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct ExploreStats {
    pub states: usize,
    pub transitions: usize,
    pub max_frame_len: usize,
}

/// A fully explored labelled transition system.
#[derive(Debug, Clone)]
pub struct Lts {
    /// Canonical state keys, indexed by state id.
    pub states: Vec<String>,
    pub transitions: Vec<(u32, Action, u32)>,
    pub initial: u32,
    pub stats: ExploreStats,
}

impl Lts {
    pub fn to_json(&self) -> serde_json::Value {
        serde_json::json!({
            "initial": self.initial,
            "states": self.states,
            "transitions": self.transitions.iter().map(|(f, a, t)| {
                serde_json::json!([f, a.to_string(), t])
            }).collect::<Vec<_>>(),
            "stats": {
                "states": self.stats.states,
                "transitions": self.stats.transitions,
                "max_frame_len": self.stats.max_frame_len,
            },
        })
    }
}

/// Exhaustive bounded BFS over a plain (choice-free) instantiated model.
pub fn explore(
    model: &Model,
    scenario: &Scenario,
    cfg: &ExploreConfig,
) -> Result<Lts, ExpandError> {
    let mut keep = cfg.clone();
    keep.keep_state_keys = true;
    let mut engine = Engine::new(model, scenario, &keep, false, None);
    let mut transitions = Vec::new();
    let mut max_frame = 0usize;
    let mut queue = VecDeque::from([engine.initial()]);
    let mut seen = vec![false; 1];
    seen[0] = true;
    while let Some(id) = queue.pop_front() {
        max_frame = max_frame.max(engine.config(id).frame.len());
        let succs = engine
            .expand(id)
            .map_err(|e| attach_frontier(e, queue.len()))?;
        for (a, to) in succs.iter() {
            transitions.push((id, a.clone(), *to));
            if (*to as usize) >= seen.len() {
                seen.resize(*to as usize + 1, false);
            }
            if !seen[*to as usize] {
                seen[*to as usize] = true;
                queue.push_back(*to);
            }
        }
    }
    let stats = ExploreStats {
        states: engine.state_count(),
        transitions: transitions.len(),
        max_frame_len: max_frame,
    };
    Ok(Lts {
        states: engine.keys,
        transitions,
        initial: 0,
        stats,
    })
}

fn attach_frontier(e: ExpandError, frontier: usize) -> ExpandError {
    match e {
        ExpandError::StateBound { limit, .. } => ExpandError::StateBound { limit, frontier },
        ExpandError::MemoryBound { used, limit, .. } => ExpandError::MemoryBound {
            used,
            limit,
            frontier,
        },
        other => other,
    }
}
