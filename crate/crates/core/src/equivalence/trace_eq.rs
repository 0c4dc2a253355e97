//! Trace equivalence of two hidden systems, via mutual simulation over
//! determinized observable transition structures with frame-pair static
//! equivalence at every matched prefix.
//!
//! Both systems are explored lazily; the product is a breadth-first walk
//! over pairs of tau-closed state subsets, so a reported attack trace is
//! of minimal observable length.

use std::collections::{BTreeSet, HashMap, VecDeque};
use std::rc::Rc;
use std::time::Instant;

use indexmap::IndexMap;

use crate::calculus::Model;
use crate::deduction::{
    statically_equivalent, DeductionConfig, FramePair, Knowledge, StaticEquivalence,
};
use crate::semantics::{Engine, ExpandError, ExploreConfig, Scenario};
use crate::term::{Side, Term};

use super::{AttackTrace, CheckerError, DivergenceKind, Stats, Verdict};

struct Subset {
    key: String,
    /// observable moves: rendered action -> target states (pre-closure).
    labels: IndexMap<String, Vec<u32>>,
    /// distinct member frames, deduplicated by rendering.
    frames: Vec<Vec<Term>>,
}

fn close(engine: &mut Engine, seeds: &[u32]) -> Result<Rc<Subset>, ExpandError> {
    let mut members: BTreeSet<u32> = seeds.iter().copied().collect();
    let mut stack: Vec<u32> = seeds.to_vec();
    while let Some(id) = stack.pop() {
        let succs = engine.expand(id)?;
        for (a, to) in succs.iter() {
            if a.is_tau() && members.insert(*to) {
                stack.push(*to);
            }
        }
    }
    let ids: Vec<u32> = members.iter().copied().collect();
    let mut labels: IndexMap<String, Vec<u32>> = IndexMap::new();
    let mut frames: IndexMap<String, Vec<Term>> = IndexMap::new();
    for &id in &ids {
        let succs = engine.expand(id)?;
        for (a, to) in succs.iter() {
            if !a.is_tau() {
                let entry = labels.entry(a.to_string()).or_default();
                if !entry.contains(to) {
                    entry.push(*to);
                }
            }
        }
        let cfg = engine.config(id);
        let fkey = cfg
            .frame
            .iter()
            .map(Term::to_string)
            .collect::<Vec<_>>()
            .join(";");
        frames.entry(fkey).or_insert_with(|| cfg.frame.clone());
    }
    labels.sort_keys();
    let key = ids
        .iter()
        .map(|i| i.to_string())
        .collect::<Vec<_>>()
        .join(",");
    Ok(Rc::new(Subset {
        key,
        labels,
        frames: frames.into_values().collect(),
    }))
}

enum FrameCompat {
    Ok,
    Distinguisher(String),
    Inconclusive(usize),
}

struct FrameChecker<'a> {
    init: &'a [Term],
    publics: Vec<std::rc::Rc<str>>,
    dcfg: DeductionConfig,
    cache: HashMap<(String, String), StaticEquivalence>,
}

impl<'a> FrameChecker<'a> {
    fn pairwise(&mut self, f1: &[Term], f2: &[Term]) -> StaticEquivalence {
        let k = (
            f1.iter().map(Term::to_string).collect::<Vec<_>>().join(";"),
            f2.iter().map(Term::to_string).collect::<Vec<_>>().join(";"),
        );
        if let Some(r) = self.cache.get(&k) {
            return r.clone();
        }
        let left = Knowledge::from_terms(self.init.iter().chain(f1.iter()).cloned())
            .expect("plain frames are ground and choice-free");
        let right = Knowledge::from_terms(self.init.iter().chain(f2.iter()).cloned())
            .expect("plain frames are ground and choice-free");
        let fp = FramePair::new(left, right).expect("equal observable history");
        let r = statically_equivalent(&fp, &self.publics, &self.dcfg);
        self.cache.insert(k, r.clone());
        r
    }

    /// Every frame on each side must have a statically equivalent partner
    /// on the other.
    fn compatible(&mut self, left: &[Vec<Term>], right: &[Vec<Term>]) -> FrameCompat {
        for (mine, others) in [(left, right), (right, left)] {
            for f in mine {
                let mut matched = false;
                let mut first_test: Option<String> = None;
                for g in others {
                    // orient the pair consistently: left system first
                    let r = if std::ptr::eq(mine, left) {
                        self.pairwise(f, g)
                    } else {
                        self.pairwise(g, f)
                    };
                    match r {
                        StaticEquivalence::Equivalent => {
                            matched = true;
                            break;
                        }
                        StaticEquivalence::Distinguisher(pair) => {
                            if first_test.is_none() {
                                first_test = Some(pair.to_string());
                            }
                        }
                        StaticEquivalence::Inconclusive { recipes_tried } => {
                            return FrameCompat::Inconclusive(recipes_tried);
                        }
                    }
                }
                if !matched {
                    return FrameCompat::Distinguisher(
                        first_test.unwrap_or_else(|| "(no partner frame)".into()),
                    );
                }
            }
        }
        FrameCompat::Ok
    }
}

struct ProductNode {
    left: Rc<Subset>,
    right: Rc<Subset>,
    parent: Option<(u32, String)>,
}

fn trace_to(nodes: &[ProductNode], mut id: u32) -> Vec<String> {
    let mut out = Vec::new();
    while let Some((p, a)) = &nodes[id as usize].parent {
        out.push(a.clone());
        id = *p;
    }
    out.reverse();
    out
}

struct ProductRun {
    verdict: Verdict,
}

fn run_product(
    m1: &Model,
    m2: &Model,
    scenario: &Scenario,
    cfg: &ExploreConfig,
) -> Result<ProductRun, CheckerError> {
    let start = Instant::now();
    let mut e1 = Engine::new(m1, scenario, cfg, false, None);
    let mut e2 = Engine::new(m2, scenario, cfg, false, None);
    let init: Vec<Term> = e1.init_knowledge().to_vec();
    let mut checker = FrameChecker {
        init: &init,
        publics: m1.public_names(),
        dcfg: DeductionConfig {
            depth: cfg.stateq_depth,
            max_terms: cfg.deduction_max_terms,
        },
        cache: HashMap::new(),
    };

    let mut max_frame = 0usize;
    let stats = |e1: &Engine, e2: &Engine, maxf: usize, start: Instant| Stats {
        states: e1.state_count() + e2.state_count(),
        max_frame_len: maxf,
        ms: start.elapsed().as_millis(),
    };

    macro_rules! inconclusive {
        ($reason:expr) => {
            return Ok(ProductRun {
                verdict: Verdict::inconclusive($reason, stats(&e1, &e2, max_frame, start)),
            })
        };
    }

    let s0l = match close(&mut e1, &[0]) {
        Ok(s) => s,
        Err(e) => inconclusive!(e.bound_name()),
    };
    let s0r = match close(&mut e2, &[0]) {
        Ok(s) => s,
        Err(e) => inconclusive!(e.bound_name()),
    };

    let mut nodes: Vec<ProductNode> = vec![ProductNode {
        left: s0l,
        right: s0r,
        parent: None,
    }];
    let mut visited: HashMap<(String, String), u32> = HashMap::new();
    visited.insert((nodes[0].left.key.clone(), nodes[0].right.key.clone()), 0);
    let mut queue: VecDeque<u32> = VecDeque::from([0u32]);

    while let Some(id) = queue.pop_front() {
        let (left, right) = {
            let n = &nodes[id as usize];
            (n.left.clone(), n.right.clone())
        };
        for f in left.frames.iter().chain(right.frames.iter()) {
            max_frame = max_frame.max(f.len());
        }

        match checker.compatible(&left.frames, &right.frames) {
            FrameCompat::Ok => {}
            FrameCompat::Distinguisher(test) => {
                let witness = AttackTrace {
                    actions: trace_to(&nodes, id),
                    divergence: DivergenceKind::FrameDistinguisher { test },
                };
                return Ok(ProductRun {
                    verdict: Verdict::attack(witness, stats(&e1, &e2, max_frame, start)),
                });
            }
            FrameCompat::Inconclusive(n) => {
                inconclusive!(format!("static-equivalence bound ({n} recipes tried)"))
            }
        }

        // the enabled observable label sets must coincide
        let mut all_labels: Vec<&String> = left.labels.keys().chain(right.labels.keys()).collect();
        all_labels.sort();
        all_labels.dedup();
        for label in &all_labels {
            let inl = left.labels.contains_key(*label);
            let inr = right.labels.contains_key(*label);
            if inl != inr {
                let witness = AttackTrace {
                    actions: trace_to(&nodes, id),
                    divergence: DivergenceKind::ActionOneSided {
                        action: (*label).clone(),
                        side: if inl { Side::Left } else { Side::Right },
                    },
                };
                return Ok(ProductRun {
                    verdict: Verdict::attack(witness, stats(&e1, &e2, max_frame, start)),
                });
            }
        }

        let labels: Vec<String> = left.labels.keys().cloned().collect();
        for label in labels {
            let lt = left.labels.get(&label).unwrap().clone();
            let rt = right.labels.get(&label).unwrap().clone();
            let ls = match close(&mut e1, &lt) {
                Ok(s) => s,
                Err(e) => inconclusive!(e.bound_name()),
            };
            let rs = match close(&mut e2, &rt) {
                Ok(s) => s,
                Err(e) => inconclusive!(e.bound_name()),
            };
            let key = (ls.key.clone(), rs.key.clone());
            if let std::collections::hash_map::Entry::Vacant(slot) = visited.entry(key) {
                let nid = nodes.len() as u32;
                slot.insert(nid);
                nodes.push(ProductNode {
                    left: ls,
                    right: rs,
                    parent: Some((id, label.clone())),
                });
                queue.push_back(nid);
            }
        }
    }

    Ok(ProductRun {
        verdict: Verdict::equivalent(stats(&e1, &e2, max_frame, start), None),
    })
}

/// Decide trace equivalence of two choice-free instantiated models under
/// one scenario. Attack witnesses are replayed before they are returned.
pub fn trace_equivalent(
    m1: &Model,
    m2: &Model,
    scenario: &Scenario,
    cfg: &ExploreConfig,
) -> Result<Verdict, CheckerError> {
    if m1.has_choice() || m2.has_choice() {
        return Err(CheckerError::NotPlain);
    }
    let run = run_product(m1, m2, scenario, cfg)?;
    if run.verdict.result == super::VerdictResult::Attack {
        replay(m1, m2, scenario, cfg, run.verdict.witness.as_ref().unwrap())?;
    }
    Ok(run.verdict)
}

/// Independently re-execute a witness trace on both systems and verify
/// the divergence recurs. Returns one optional annotation per trace step
/// (the new frame entries after an output).
pub(crate) fn replay(
    m1: &Model,
    m2: &Model,
    scenario: &Scenario,
    cfg: &ExploreConfig,
    witness: &AttackTrace,
) -> Result<Vec<Option<String>>, CheckerError> {
    let mut e1 = Engine::new(m1, scenario, cfg, false, None);
    let mut e2 = Engine::new(m2, scenario, cfg, false, None);
    let bail = |m: String| CheckerError::ReplayMismatch(m);
    let mut annotations = Vec::new();

    let mut left = close(&mut e1, &[0]).map_err(|e| bail(e.to_string()))?;
    let mut right = close(&mut e2, &[0]).map_err(|e| bail(e.to_string()))?;
    for act in &witness.actions {
        let lt = left
            .labels
            .get(act)
            .ok_or_else(|| bail(format!("left system cannot perform {act}")))?
            .clone();
        let rt = right
            .labels
            .get(act)
            .ok_or_else(|| bail(format!("right system cannot perform {act}")))?
            .clone();
        left = close(&mut e1, &lt).map_err(|e| bail(e.to_string()))?;
        right = close(&mut e2, &rt).map_err(|e| bail(e.to_string()))?;
        annotations.push(annotate_out(act, &left, &right));
    }

    match &witness.divergence {
        DivergenceKind::ActionOneSided { action, side } => {
            let inl = left.labels.contains_key(action);
            let inr = right.labels.contains_key(action);
            let ok = match side {
                Side::Left => inl && !inr,
                Side::Right => inr && !inl,
            };
            if !ok {
                return Err(bail(format!(
                    "one-sided action {action} not reproduced (left: {inl}, right: {inr})"
                )));
            }
        }
        DivergenceKind::FrameDistinguisher { test } => {
            let init: Vec<Term> = e1.init_knowledge().to_vec();
            let mut checker = FrameChecker {
                init: &init,
                publics: m1.public_names(),
                dcfg: DeductionConfig {
                    depth: cfg.stateq_depth,
                    max_terms: cfg.deduction_max_terms,
                },
                cache: HashMap::new(),
            };
            match checker.compatible(&left.frames, &right.frames) {
                FrameCompat::Distinguisher(t) => {
                    if t != *test {
                        return Err(bail(format!(
                            "distinguisher changed on replay: expected {test}, got {t}"
                        )));
                    }
                }
                other => {
                    return Err(bail(format!(
                        "frame distinguisher not reproduced (got {})",
                        match other {
                            FrameCompat::Ok => "equivalent frames".to_string(),
                            FrameCompat::Inconclusive(n) =>
                                format!("inconclusive after {n} recipes"),
                            FrameCompat::Distinguisher(_) => unreachable!(),
                        }
                    )))
                }
            }
        }
        DivergenceKind::Biprocess(d) => {
            return Err(bail(format!(
                "trace-equivalence witness carries a biprocess divergence: {d}"
            )))
        }
    }
    Ok(annotations)
}

/// Enumerate observable traces of a plain model in breadth-first order,
/// shortest first, up to `limit`. Interleavings that produce the same
/// observable trace appear once (the walk is over determinized subsets).
pub fn observable_traces(
    m: &Model,
    scenario: &Scenario,
    cfg: &ExploreConfig,
    limit: usize,
) -> Result<Vec<Vec<String>>, CheckerError> {
    if m.has_choice() {
        return Err(CheckerError::NotPlain);
    }
    let mut out = Vec::new();
    if limit == 0 {
        return Ok(out);
    }
    let mut engine = Engine::new(m, scenario, cfg, false, None);
    let bail = |e: ExpandError| CheckerError::ReplayMismatch(format!("exploration failed: {e}"));
    let root = close(&mut engine, &[0]).map_err(bail)?;
    let mut queue: VecDeque<(Rc<Subset>, Vec<String>)> = VecDeque::from([(root, Vec::new())]);
    while let Some((subset, trace)) = queue.pop_front() {
        if !trace.is_empty() {
            out.push(trace.clone());
            if out.len() >= limit {
                break;
            }
        }
        let labels: Vec<String> = subset.labels.keys().cloned().collect();
        for label in labels {
            let targets = subset.labels.get(&label).unwrap().clone();
            let next = close(&mut engine, &targets).map_err(bail)?;
            let mut t = trace.clone();
            t.push(label);
            queue.push_back((next, t));
        }
    }
    Ok(out)
}

fn annotate_out(action: &str, left: &Subset, right: &Subset) -> Option<String> {
    if !action.starts_with("out(") {
        return None;
    }
    let l = left.frames.first().and_then(|f| f.last());
    let r = right.frames.first().and_then(|f| f.last());
    match (l, r) {
        (Some(l), Some(r)) if l == r => Some(format!("= {l}")),
        (Some(l), Some(r)) => Some(format!("= {l} / {r}")),
        _ => None,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::calculus::parse_model;
    use crate::semantics::{builtin_scenario, BuiltinScenario};

    fn check(src1: &str, src2: &str) -> Verdict {
        let m1 = parse_model(src1).unwrap();
        let m2 = parse_model(src2).unwrap();
        let s = builtin_scenario(BuiltinScenario::Honest);
        trace_equivalent(&m1, &m2, &s, &ExploreConfig::default()).unwrap()
    }

    #[test]
    fn reflexivity() {
        let src = "free a.\nchannel x.pub.t public.\nprocess out(x.pub.t, a). 0";
        let v = check(src, src);
        assert_eq!(v.result, super::super::VerdictResult::Equivalent);
    }

    #[test]
    fn public_payload_difference_is_an_attack() {
        let v = check(
            "free a, b.\nchannel x.pub.t public.\nprocess out(x.pub.t, a). 0",
            "free a, b.\nchannel x.pub.t public.\nprocess out(x.pub.t, b). 0",
        );
        assert_eq!(v.result, super::super::VerdictResult::Attack);
        let w = v.witness.unwrap();
        assert_eq!(w.actions, vec!["out(x.pub.t, w1)".to_string()]);
        match w.divergence {
            DivergenceKind::FrameDistinguisher { test } => {
                assert_eq!(test, "w1 = a");
            }
            other => panic!("unexpected divergence {other:?}"),
        }
    }

    #[test]
    fn encrypted_payload_difference_is_equivalent() {
        let v = check(
            "free a, b.\nprivate sk, r.\nchannel x.pub.t public.\nprocess out(x.pub.t, penc(a, r, pk(sk))). 0",
            "free a, b.\nprivate sk, r.\nchannel x.pub.t public.\nprocess out(x.pub.t, penc(b, r, pk(sk))). 0",
        );
        assert_eq!(v.result, super::super::VerdictResult::Equivalent);
    }

    #[test]
    fn missing_action_is_an_attack() {
        let v = check(
            "free a.\nchannel x.pub.t public.\nprocess out(x.pub.t, a). out(x.pub.t, hash(a)). 0",
            "free a.\nchannel x.pub.t public.\nprocess out(x.pub.t, a). 0",
        );
        assert_eq!(v.result, super::super::VerdictResult::Attack);
        match v.witness.unwrap().divergence {
            DivergenceKind::ActionOneSided {
                side: Side::Left, ..
            } => {}
            other => panic!("unexpected divergence {other:?}"),
        }
    }

    #[test]
    fn interleaving_orders_match() {
        // one side fixes an order, the other offers both: trace sets are
        // still equal because the flexible side can follow either order,
        // but the fixed side cannot match the flexible side's other order
        let fixed = "free a, b.\nchannel x.pub.t public.\nchannel x.pub.u public.\n\
                     process out(x.pub.t, a). out(x.pub.u, b). 0";
        let flexible = "free a, b.\nchannel x.pub.t public.\nchannel x.pub.u public.\n\
                        process (out(x.pub.t, a). 0 | out(x.pub.u, b). 0)";
        let v = check(flexible, fixed);
        assert_eq!(v.result, super::super::VerdictResult::Attack);
        match v.witness.unwrap().divergence {
            DivergenceKind::ActionOneSided { action, side } => {
                assert_eq!(action, "out(x.pub.u, w1)");
                assert_eq!(side, Side::Left);
            }
            other => panic!("unexpected divergence {other:?}"),
        }
    }

    #[test]
    fn same_multiset_different_linkage_is_caught() {
        // both publish {a, hash(a)} tagged by channel, but crossed
        let v = check(
            "free a, b.\nchannel x.pub.t public.\nchannel x.pub.u public.\n\
             process out(x.pub.t, a). out(x.pub.u, b). 0",
            "free a, b.\nchannel x.pub.t public.\nchannel x.pub.u public.\n\
             process out(x.pub.t, b). out(x.pub.u, a). 0",
        );
        assert_eq!(v.result, super::super::VerdictResult::Attack);
    }
}
