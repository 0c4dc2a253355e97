//! Diff-equivalence of a biprocess: a single exploration in which both
//! projections must enable the same actions, resolve every conditional
//! identically, and keep the frame pair statically equivalent after every
//! observable output.
//!
//! Barriers are checked natively by the semantics (maximal progress), and
//! barrier-swap compilation enumerates one plan per subset of phases: a
//! swapped phase exchanges the right-hand components of the two live vote
//! choices when it fires. The biprocess is diff-equivalent if any plan's
//! exploration completes without divergence; plans are tried in index
//! order, so verdicts do not depend on completion order.

use std::collections::{HashMap, VecDeque};
use std::time::Instant;

use crate::calculus::Model;
use crate::deduction::{statically_equivalent, DeductionConfig, FramePair, StaticEquivalence};
use crate::semantics::{Engine, ExpandError, ExploreConfig, Scenario, SwapPlan};
use crate::term::Term;

use super::{AttackTrace, CheckerError, DivergenceKind, Stats, Verdict, VerdictResult};

const MAX_PHASES: usize = 8;

/// Enumerate the `2^P` swap plans over the biprocess's barrier phases.
/// Barriers stay native in the emitted models: the engine synchronizes
/// phases directly and applies the plan's exchanges at phase entry, so no
/// rendezvous encoding is introduced.
pub fn compile_barriers(b: &Model) -> Result<Vec<(SwapPlan, Model)>, CheckerError> {
    let mut phases = Vec::new();
    b.process.barrier_phases(&mut phases);
    phases.sort_unstable();
    if phases.len() > MAX_PHASES {
        return Err(CheckerError::TooManyPhases(phases.len()));
    }
    let mut out = Vec::with_capacity(1 << phases.len());
    for mask in 0u32..(1 << phases.len() as u32) {
        let plan = SwapPlan {
            swap_at: phases
                .iter()
                .enumerate()
                .map(|(i, &p)| (p, mask >> i & 1 == 1))
                .collect(),
        };
        out.push((plan, b.clone()));
    }
    Ok(out)
}

enum PlanOutcome {
    Equivalent,
    Diverged(AttackTrace),
    Inconclusive(String),
}

struct PlanRun {
    outcome: PlanOutcome,
    states: usize,
    max_frame: usize,
    /// frames along the witness path, for diagnosis annotations
    path_frames: Vec<Vec<Term>>,
}

fn run_plan(model: &Model, scenario: &Scenario, cfg: &ExploreConfig, plan: &SwapPlan) -> PlanRun {
    let mut engine = Engine::new(model, scenario, cfg, true, Some(plan.clone()));
    let init: Vec<Term> = engine.init_knowledge().to_vec();
    let publics = model.public_names();
    let dcfg = DeductionConfig {
        depth: cfg.stateq_depth,
        max_terms: cfg.deduction_max_terms,
    };
    let mut stat_cache: HashMap<u64, StaticEquivalence> = HashMap::new();
    let mut parents: Vec<Option<(u32, String)>> = vec![None];
    let mut max_frame = 0usize;

    let observable_trace = |parents: &[Option<(u32, String)>],
                            engine: &Engine,
                            mut id: u32|
     -> (Vec<String>, Vec<Vec<Term>>) {
        let mut acts = Vec::new();
        let mut frames = vec![engine.config(id).frame.clone()];
        while let Some((p, a)) = &parents[id as usize] {
            if a != "tau" {
                acts.push(a.clone());
                frames.push(engine.config(*p).frame.clone());
            }
            id = *p;
        }
        acts.reverse();
        frames.reverse();
        (acts, frames)
    };

    let mut queue: VecDeque<u32> = VecDeque::from([0u32]);
    let mut visited = vec![true];
    while let Some(id) = queue.pop_front() {
        let frame = engine.config(id).frame.clone();
        max_frame = max_frame.max(frame.len());
        if !frame.is_empty() {
            let mut key = 0xcbf29ce484222325u64;
            for t in &frame {
                for b in t.hash().to_le_bytes() {
                    key ^= b as u64;
                    key = key.wrapping_mul(0x100000001b3);
                }
            }
            let result = match stat_cache.get(&key) {
                Some(r) => r.clone(),
                None => {
                    let fp = match FramePair::from_biterms(
                        &init
                            .iter()
                            .cloned()
                            .chain(frame.iter().cloned())
                            .collect::<Vec<_>>(),
                    ) {
                        Ok(fp) => fp,
                        Err(e) => {
                            return PlanRun {
                                outcome: PlanOutcome::Inconclusive(format!(
                                    "frame construction: {e}"
                                )),
                                states: engine.state_count(),
                                max_frame,
                                path_frames: Vec::new(),
                            }
                        }
                    };
                    let r = statically_equivalent(&fp, &publics, &dcfg);
                    stat_cache.insert(key, r.clone());
                    r
                }
            };
            match result {
                StaticEquivalence::Equivalent => {}
                StaticEquivalence::Distinguisher(pair) => {
                    let (actions, path_frames) = observable_trace(&parents, &engine, id);
                    return PlanRun {
                        outcome: PlanOutcome::Diverged(AttackTrace {
                            actions,
                            divergence: DivergenceKind::FrameDistinguisher {
                                test: pair.to_string(),
                            },
                        }),
                        states: engine.state_count(),
                        max_frame,
                        path_frames,
                    };
                }
                StaticEquivalence::Inconclusive { recipes_tried } => {
                    return PlanRun {
                        outcome: PlanOutcome::Inconclusive(format!(
                            "static-equivalence bound ({recipes_tried} recipes tried)"
                        )),
                        states: engine.state_count(),
                        max_frame,
                        path_frames: Vec::new(),
                    }
                }
            }
        }

        let succs = match engine.expand(id) {
            Ok(s) => s,
            Err(ExpandError::Diverged { at, divergence }) => {
                let (actions, path_frames) = observable_trace(&parents, &engine, at);
                return PlanRun {
                    outcome: PlanOutcome::Diverged(AttackTrace {
                        actions,
                        divergence: DivergenceKind::Biprocess(divergence),
                    }),
                    states: engine.state_count(),
                    max_frame,
                    path_frames,
                };
            }
            Err(e) => {
                return PlanRun {
                    outcome: PlanOutcome::Inconclusive(e.bound_name()),
                    states: engine.state_count(),
                    max_frame,
                    path_frames: Vec::new(),
                }
            }
        };
        for (a, to) in succs.iter() {
            let toi = *to as usize;
            if toi >= visited.len() {
                visited.resize(toi + 1, false);
                parents.resize(toi + 1, None);
            }
            if !visited[toi] {
                visited[toi] = true;
                parents[toi] = Some((id, a.to_string()));
                queue.push_back(*to);
            }
        }
    }

    PlanRun {
        outcome: PlanOutcome::Equivalent,
        states: engine.state_count(),
        max_frame,
        path_frames: Vec::new(),
    }
}

/// Decide diff-equivalence of a biprocess model. All swap plans are
/// enumerated; the model is diff-equivalent if any plan verifies.
pub fn diff_equivalent(
    b: &Model,
    scenario: &Scenario,
    cfg: &ExploreConfig,
) -> Result<Verdict, CheckerError> {
    let start = Instant::now();
    let plans = compile_barriers(b)?;
    let mut total_states = 0usize;
    let mut max_frame = 0usize;
    let mut first_attack: Option<AttackTrace> = None;
    let mut first_inconclusive: Option<String> = None;

    for (plan, model) in &plans {
        let run = run_plan(model, scenario, cfg, plan);
        total_states += run.states;
        max_frame = max_frame.max(run.max_frame);
        match run.outcome {
            PlanOutcome::Equivalent => {
                let mut v = Verdict::equivalent(
                    Stats {
                        states: total_states,
                        max_frame_len: max_frame,
                        ms: start.elapsed().as_millis(),
                    },
                    Some(plan.clone()),
                );
                v.accepted_plan = Some(plan.clone());
                return Ok(v);
            }
            PlanOutcome::Diverged(witness) => {
                if first_attack.is_none() {
                    first_attack = Some(witness);
                }
            }
            PlanOutcome::Inconclusive(reason) => {
                if first_inconclusive.is_none() {
                    first_inconclusive = Some(reason);
                }
            }
        }
    }

    let stats = Stats {
        states: total_states,
        max_frame_len: max_frame,
        ms: start.elapsed().as_millis(),
    };
    if let Some(reason) = first_inconclusive {
        // some plan hit a bound: a diverging plan elsewhere cannot prove
        // an attack on the biprocess as a whole, only failure to verify
        return Ok(Verdict::inconclusive(reason, stats));
    }
    let witness = first_attack.expect("no plan succeeded, none inconclusive");
    // independent re-execution of the identity plan must reproduce it
    replay(b, scenario, cfg, &witness)?;
    Ok(Verdict::attack(witness, stats))
}

/// Re-run the identity plan from scratch and require the identical
/// witness; attack witnesses always come from the identity plan.
pub(crate) fn replay(
    b: &Model,
    scenario: &Scenario,
    cfg: &ExploreConfig,
    witness: &AttackTrace,
) -> Result<Vec<Option<String>>, CheckerError> {
    let plans = compile_barriers(b)?;
    let (plan, model) = &plans[0];
    debug_assert!(plan.is_identity());
    let run = run_plan(model, scenario, cfg, plan);
    match run.outcome {
        PlanOutcome::Diverged(w) => {
            if w != *witness {
                return Err(CheckerError::ReplayMismatch(format!(
                    "expected divergence `{}` after {:?}, got `{}` after {:?}",
                    witness.divergence, witness.actions, w.divergence, w.actions
                )));
            }
            // annotate each observable step with the frame entry it added
            let mut notes = Vec::with_capacity(witness.actions.len());
            for (i, act) in witness.actions.iter().enumerate() {
                if act.starts_with("out(") {
                    let note = run
                        .path_frames
                        .get(i + 1)
                        .and_then(|f| f.last())
                        .map(|t| format!("= {t}"));
                    notes.push(note);
                } else {
                    notes.push(None);
                }
            }
            Ok(notes)
        }
        PlanOutcome::Equivalent => Err(CheckerError::ReplayMismatch(
            "identity plan verified on replay".into(),
        )),
        PlanOutcome::Inconclusive(r) => Err(CheckerError::ReplayMismatch(format!(
            "replay hit a bound: {r}"
        ))),
    }
}

#[allow(dead_code)]
fn verdict_is_attack(v: &Verdict) -> bool {
    v.result == VerdictResult::Attack
}
