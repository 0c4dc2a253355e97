//! The step relation over exploration configurations.
//!
//! A configuration holds the live process multiset, the frame of
//! intruder-observed outputs, the barrier phase, and a fresh-name counter.
//! Successor enumeration is deterministic and duplicate-free. The same
//! engine executes plain models and biprocesses: for a biprocess every
//! rule must fire identically on both projections, and any disagreement
//! surfaces as a [`Divergence`] instead of a successor.
//!
//! Intercepted outputs are consumed into the frame and never delivered:
//! the network is the attacker, and delivery happens only through
//! injection of a derivable payload.

use std::collections::BTreeMap;
use std::fmt;
use std::rc::Rc;

use indexmap::IndexMap;
use thiserror::Error;

use crate::calculus::{render_pattern, ChanExpr, ChannelId, Ident, Model, Pat, Process};
use crate::deduction::{analyze, Analysis, DeductionConfig, DeductionError, Knowledge, Recipe};
use crate::term::{Side, Subst, Term};

use super::scenario::CapSet;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum SemanticsError {
    #[error(transparent)]
    Deduction(#[from] DeductionError),
    #[error("injection candidates on {ch} exceeded the bound of {limit}")]
    InjectBound { ch: String, limit: usize },
}

/// How the two projections of a biprocess came apart.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Divergence {
    /// An equality test resolved differently on the two sides.
    Conditional { lhs: Term, rhs: Term },
    /// An injected payload matches the input pattern on one side only.
    InputOneSided {
        ch: ChannelId,
        recipe: Recipe,
        side: Side,
    },
    /// An internal rendezvous is enabled on one side only.
    RendezvousOneSided { ch: String, side: Side },
    /// An event's arguments differ between the sides.
    EventMismatch { label: Ident },
    /// A swap plan fired at a phase whose live choices do not form the
    /// dual pair the exchange is defined on.
    SwapInapplicable { distinct_choices: usize },
    /// The frames stopped being statically equivalent (attached by the
    /// equivalence checker, which owns the frame test).
    FrameDistinguisher { test: String },
}

impl fmt::Display for Divergence {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Divergence::Conditional { lhs, rhs } => {
                write!(
                    f,
                    "conditional disagreement: {lhs} = {rhs} resolves differently per side"
                )
            }
            Divergence::InputOneSided { ch, recipe, side } => {
                write!(
                    f,
                    "injection in({ch}, {recipe}) matches on the {side} side only"
                )
            }
            Divergence::RendezvousOneSided { ch, side } => {
                write!(f, "rendezvous on {ch} enabled on the {side} side only")
            }
            Divergence::EventMismatch { label } => {
                write!(f, "event {label} carries different arguments per side")
            }
            Divergence::SwapInapplicable { distinct_choices } => {
                write!(
                    f,
                    "swap plan inapplicable: {distinct_choices} distinct live choice term(s), need exactly 2"
                )
            }
            Divergence::FrameDistinguisher { test } => {
                write!(f, "frame distinguisher: {test}")
            }
        }
    }
}

/// Flag per barrier phase: exchange the right-hand components of the two
/// live vote choices when entering that phase.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct SwapPlan {
    pub swap_at: BTreeMap<u32, bool>,
}

impl SwapPlan {
    pub fn identity(phases: &[u32]) -> SwapPlan {
        SwapPlan {
            swap_at: phases.iter().map(|&p| (p, false)).collect(),
        }
    }

    pub fn swaps(&self, phase: u32) -> bool {
        self.swap_at.get(&phase).copied().unwrap_or(false)
    }

    pub fn is_identity(&self) -> bool {
        self.swap_at.values().all(|&b| !b)
    }
}

impl fmt::Display for SwapPlan {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let swapped: Vec<String> = self
            .swap_at
            .iter()
            .filter(|(_, &s)| s)
            .map(|(p, _)| p.to_string())
            .collect();
        if swapped.is_empty() {
            write!(f, "no-swap")
        } else {
            write!(f, "swap@{}", swapped.join(","))
        }
    }
}

/// An exploration state.
#[derive(Debug, Clone)]
pub struct Config {
    pub live: Vec<Rc<Process>>,
    /// Payloads of past outputs on observable channels, in order; biterm
    /// entries for biprocess runs.
    pub frame: Vec<Term>,
    pub phase: u32,
    pub fresh: u32,
}

impl Config {
    pub fn initial(m: &Model) -> Config {
        let mut live = Vec::new();
        push_live(&mut live, Rc::new(m.process.clone()));
        Config {
            live,
            frame: Vec::new(),
            phase: 0,
            fresh: 0,
        }
    }
}

fn push_live(live: &mut Vec<Rc<Process>>, p: Rc<Process>) {
    match p.as_ref() {
        Process::Stop => {}
        Process::Parallel(ps) => {
            for q in ps {
                push_live(live, q.clone());
            }
        }
        _ => live.push(p),
    }
}

/// An observable action or internal step.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Action {
    Tau,
    Out { ch: ChannelId, handle: usize },
    In { ch: ChannelId, recipe_text: String },
    Event { label: Ident, text: String },
    Phase(u32),
}

impl Action {
    pub fn is_tau(&self) -> bool {
        matches!(self, Action::Tau)
    }
}

impl fmt::Display for Action {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Action::Tau => write!(f, "tau"),
            Action::Out { ch, handle } => write!(f, "out({ch}, w{handle})"),
            Action::In { ch, recipe_text } => write!(f, "in({ch}, {recipe_text})"),
            Action::Event { text, .. } => write!(f, "{text}"),
            Action::Phase(k) => write!(f, "phase {k}"),
        }
    }
}

/// Immutable stepping context shared by all configurations of one run.
pub struct StepCtx {
    pub caps: IndexMap<ChannelId, CapSet>,
    pub publics: Vec<Ident>,
    /// Initial intruder knowledge; frame handles come after these entries.
    pub init_knowledge: Vec<Term>,
    pub inject_depth: usize,
    pub max_inject_payloads: usize,
    pub deduction_max_terms: usize,
    /// Biprocess mode: track both projections and report divergences.
    pub bi: bool,
    pub swap_plan: Option<SwapPlan>,
}

impl StepCtx {
    fn caps_of(&self, ch: &ChanExpr) -> CapSet {
        match ch {
            ChanExpr::Decl(id) => self.caps.get(id).copied().unwrap_or(CapSet::NONE),
            ChanExpr::Name(_) => CapSet::NONE,
        }
    }

    fn deduction_config(&self) -> DeductionConfig {
        DeductionConfig {
            depth: self.inject_depth,
            max_terms: self.deduction_max_terms,
        }
    }
}

/// Per-frame intruder analyses and injection candidate lists, keyed by
/// the frame's term hashes. Frames recur across many interleavings, so
/// the cache is shared over a whole exploration.
#[derive(Default)]
pub struct StepCache {
    frames: IndexMap<u64, FrameDeduction>,
}

struct FrameDeduction {
    left: Analysis,
    right: Option<Analysis>,
    left_knowledge: Knowledge,
    right_knowledge: Option<Knowledge>,
    /// injection candidate recipes per rendered input pattern
    candidates: IndexMap<String, Rc<Vec<Recipe>>>,
}

#[derive(Debug)]
pub enum StepOutcome {
    Successors(Vec<(Action, Config)>),
    Diverged(Divergence),
}

fn fnv_u64(seed: u64, v: u64) -> u64 {
    let mut h = seed;
    for b in v.to_le_bytes() {
        h ^= b as u64;
        h = h.wrapping_mul(0x100000001b3);
    }
    h
}

fn frame_key(ctx: &StepCtx, cfg: &Config) -> u64 {
    let mut key = 0xcbf29ce484222325u64;
    key = fnv_u64(key, ctx.bi as u64);
    for t in ctx.init_knowledge.iter().chain(cfg.frame.iter()) {
        key = fnv_u64(key, t.hash());
    }
    key
}

fn frame_deduction<'c>(
    ctx: &StepCtx,
    cache: &'c mut StepCache,
    cfg: &Config,
) -> Result<&'c mut FrameDeduction, DeductionError> {
    let key = frame_key(ctx, cfg);
    if !cache.frames.contains_key(&key) {
        let combined = |side: Side| -> Result<Knowledge, DeductionError> {
            Knowledge::from_terms(
                ctx.init_knowledge
                    .iter()
                    .chain(cfg.frame.iter())
                    .map(|t| t.project(side)),
            )
        };
        let dcfg = ctx.deduction_config();
        let left_knowledge = combined(Side::Left)?;
        let left = analyze(&left_knowledge, &ctx.publics, &dcfg)?;
        let (right_knowledge, right) = if ctx.bi {
            let k = combined(Side::Right)?;
            let a = analyze(&k, &ctx.publics, &dcfg)?;
            (Some(k), Some(a))
        } else {
            (None, None)
        };
        cache.frames.insert(
            key,
            FrameDeduction {
                left,
                right,
                left_knowledge,
                right_knowledge,
                candidates: IndexMap::new(),
            },
        );
    }
    Ok(cache.frames.get_mut(&key).unwrap())
}

/// Derivable payloads fitting a pattern, with their recipes: decomposed
/// facts that match it, and constructor applications whose slots are
/// filled recursively, all within the recipe size budget. Equivalent to
/// filtering the bounded closure by the pattern, computed directly.
fn pattern_candidates(
    analysis: &mut Analysis,
    pattern: &Pat,
    budget: usize,
) -> Result<Vec<(Term, Recipe)>, DeductionError> {
    match pattern {
        Pat::Bind(_) => analysis.synth_upto(budget),
        Pat::Test(t) => {
            let t = t.normalize();
            Ok(analysis
                .derive_exact(&t, budget)
                .map(|r| vec![(t, r)])
                .unwrap_or_default())
        }
        Pat::App(f, parts) => {
            let mut out: IndexMap<Term, Recipe> = IndexMap::new();
            // decomposed facts that already match
            let whole: Vec<(Term, Recipe)> = analysis
                .iter()
                .filter(|(_, r)| r.size() <= budget)
                .map(|(t, r)| (t.clone(), r.clone()))
                .collect();
            for (t, r) in whole {
                let mut b = Subst::new();
                if pattern.matches(&t, &mut b) {
                    out.entry(t).or_insert(r);
                }
            }
            // constructed payloads, pruned by total recipe size
            if f.kind() == crate::term::SymbolKind::Constructor
                && !parts.is_empty()
                && budget > parts.len()
            {
                let share = budget - parts.len();
                let mut slots = Vec::with_capacity(parts.len());
                for p in parts {
                    slots.push(pattern_candidates(analysis, p, share)?);
                }
                if slots.iter().all(|s| !s.is_empty()) {
                    let mut pick = vec![0usize; slots.len()];
                    'combos: loop {
                        let total: usize = 1 + pick
                            .iter()
                            .zip(slots.iter())
                            .map(|(&i, s)| s[i].1.size())
                            .sum::<usize>();
                        if total <= budget {
                            let args: Vec<Term> = pick
                                .iter()
                                .zip(slots.iter())
                                .map(|(&i, s)| s[i].0.clone())
                                .collect();
                            let t = Term::apply(*f, args).normalize();
                            let mut b = Subst::new();
                            if !t.contains_destructor() && pattern.matches(&t, &mut b) {
                                out.entry(t).or_insert_with(|| {
                                    Recipe::App(
                                        *f,
                                        pick.iter()
                                            .zip(slots.iter())
                                            .map(|(&i, s)| s[i].1.clone())
                                            .collect(),
                                    )
                                });
                            }
                        }
                        let mut pos = slots.len();
                        loop {
                            if pos == 0 {
                                break 'combos;
                            }
                            pos -= 1;
                            pick[pos] += 1;
                            if pick[pos] < slots[pos].len() {
                                break;
                            }
                            pick[pos] = 0;
                        }
                    }
                }
            }
            Ok(out.into_iter().collect())
        }
    }
}

/// The union of per-side candidate recipes for an injectable input,
/// cached per (frame, pattern).
fn injection_recipes(
    fd: &mut FrameDeduction,
    pattern: &Pat,
    depth: usize,
) -> Result<Rc<Vec<Recipe>>, DeductionError> {
    let key = render_pattern(pattern);
    if let Some(rs) = fd.candidates.get(&key) {
        return Ok(rs.clone());
    }
    let mut recipes: Vec<Recipe> = Vec::new();
    let mut seen: std::collections::HashSet<Recipe> = std::collections::HashSet::new();
    for (t, r) in pattern_candidates(&mut fd.left, &pattern.project(Side::Left), depth)? {
        let _ = t;
        if seen.insert(r.clone()) {
            recipes.push(r);
        }
    }
    if let Some(right) = fd.right.as_mut() {
        for (t, r) in pattern_candidates(right, &pattern.project(Side::Right), depth)? {
            let _ = t;
            if seen.insert(r.clone()) {
                recipes.push(r);
            }
        }
    }
    let rc = Rc::new(recipes);
    fd.candidates.insert(key, rc.clone());
    Ok(rc)
}

/// Match a pattern against a (bi)term payload. In biprocess mode both
/// projections must agree on whether they match; the combined bindings
/// pair up the per-side values. `Err(side)` reports a one-sided match.
fn match_payload(ctx: &StepCtx, pattern: &Pat, payload: &Term) -> Result<Option<Subst>, Side> {
    if !ctx.bi {
        let mut bindings = Subst::new();
        if pattern.matches(payload, &mut bindings) {
            return Ok(Some(bindings));
        }
        return Ok(None);
    }
    let mut left = Subst::new();
    let ok_l = pattern
        .project(Side::Left)
        .matches(&payload.project(Side::Left), &mut left);
    let mut right = Subst::new();
    let ok_r = pattern
        .project(Side::Right)
        .matches(&payload.project(Side::Right), &mut right);
    match (ok_l, ok_r) {
        (true, true) => {
            let mut combined = Subst::new();
            for (k, vl) in left {
                let vr = right.get(&k).expect("projections bind the same variables");
                combined.insert(k, Term::choice(vl, vr.clone()));
            }
            Ok(Some(combined))
        }
        (false, false) => Ok(None),
        (true, false) => Err(Side::Left),
        (false, true) => Err(Side::Right),
    }
}

fn advance(cfg: &Config, idx: usize, replacement: Process) -> Config {
    let mut live = Vec::with_capacity(cfg.live.len());
    for (i, p) in cfg.live.iter().enumerate() {
        if i == idx {
            push_live(&mut live, Rc::new(replacement.clone()));
        } else {
            live.push(p.clone());
        }
    }
    Config {
        live,
        frame: cfg.frame.clone(),
        phase: cfg.phase,
        fresh: cfg.fresh,
    }
}

fn advance2(cfg: &Config, i: usize, pi: Process, j: usize, pj: Process) -> Config {
    let mut live = Vec::with_capacity(cfg.live.len());
    for (k, p) in cfg.live.iter().enumerate() {
        if k == i {
            push_live(&mut live, Rc::new(pi.clone()));
        } else if k == j {
            push_live(&mut live, Rc::new(pj.clone()));
        } else {
            live.push(p.clone());
        }
    }
    Config {
        live,
        frame: cfg.frame.clone(),
        phase: cfg.phase,
        fresh: cfg.fresh,
    }
}

fn normalize_process_terms(p: &Process) -> Process {
    p.map_terms(&mut |t: &Term| t.normalize())
}

/// Enumerate all successors of a configuration, or report the divergence
/// that makes the biprocess projections come apart.
pub fn step(
    cfg: &Config,
    ctx: &StepCtx,
    cache: &mut StepCache,
) -> Result<StepOutcome, SemanticsError> {
    let mut succs: Vec<(Action, Config)> = Vec::new();
    let handle_base = ctx.init_knowledge.len();

    for (i, proc_rc) in cfg.live.iter().enumerate() {
        match proc_rc.as_ref() {
            Process::Stop | Process::Parallel(_) => {
                unreachable!("configs hold flattened live sets")
            }
            Process::Restrict { name, then } => {
                let fresh_id: Ident = format!("{name}#{}", cfg.fresh).into();
                let fresh = Term::name(fresh_id, false);
                let body = then.rename_name(name.as_ref(), &fresh);
                let mut next = advance(cfg, i, body);
                next.fresh += 1;
                succs.push((Action::Tau, next));
            }
            Process::IfEq {
                lhs,
                rhs,
                then,
                els,
            } => {
                let l = lhs.normalize();
                let r = rhs.normalize();
                if ctx.bi {
                    let eq_l = l.project(Side::Left) == r.project(Side::Left);
                    let eq_r = l.project(Side::Right) == r.project(Side::Right);
                    if eq_l != eq_r {
                        return Ok(StepOutcome::Diverged(Divergence::Conditional {
                            lhs: l,
                            rhs: r,
                        }));
                    }
                    let branch = if eq_l { then } else { els };
                    succs.push((Action::Tau, advance(cfg, i, branch.as_ref().clone())));
                } else {
                    let branch = if l == r { then } else { els };
                    succs.push((Action::Tau, advance(cfg, i, branch.as_ref().clone())));
                }
            }
            Process::Event { label, args, then } => {
                let args: Vec<Term> = args.iter().map(|a| a.normalize()).collect();
                if ctx.bi && args.iter().any(Term::has_choice) {
                    return Ok(StepOutcome::Diverged(Divergence::EventMismatch {
                        label: label.clone(),
                    }));
                }
                let text = if args.is_empty() {
                    format!("event {label}")
                } else {
                    let parts: Vec<String> = args.iter().map(Term::to_string).collect();
                    format!("event {label}({})", parts.join(","))
                };
                succs.push((
                    Action::Event {
                        label: label.clone(),
                        text,
                    },
                    advance(cfg, i, then.as_ref().clone()),
                ));
            }
            Process::Output { ch, payload, then } => {
                let caps = ctx.caps_of(ch);
                let payload = payload.normalize();
                if caps.intercept {
                    // consumed by the network; no delivery
                    let ChanExpr::Decl(cid) = ch else {
                        unreachable!()
                    };
                    let mut next = advance(cfg, i, then.as_ref().clone());
                    next.frame.push(payload.clone());
                    succs.push((
                        Action::Out {
                            ch: cid.clone(),
                            handle: handle_base + next.frame.len(),
                        },
                        next,
                    ));
                    continue;
                }
                // candidate receivers for a rendezvous
                let mut delivered = false;
                for (j, other) in cfg.live.iter().enumerate() {
                    if j == i {
                        continue;
                    }
                    let Process::Input {
                        ch: ich,
                        pattern,
                        then: ithen,
                    } = other.as_ref()
                    else {
                        continue;
                    };
                    if ich != ch {
                        continue;
                    }
                    match match_payload(ctx, pattern, &payload) {
                        Ok(Some(bindings)) => {
                            delivered = true;
                            let receiver = normalize_process_terms(&ithen.substitute(&bindings));
                            let mut next = advance2(cfg, i, then.as_ref().clone(), j, receiver);
                            if caps.observe {
                                let ChanExpr::Decl(cid) = ch else {
                                    unreachable!()
                                };
                                next.frame.push(payload.clone());
                                succs.push((
                                    Action::Out {
                                        ch: cid.clone(),
                                        handle: handle_base + next.frame.len(),
                                    },
                                    next,
                                ));
                            } else {
                                succs.push((Action::Tau, next));
                            }
                        }
                        Ok(None) => {}
                        Err(side) => {
                            return Ok(StepOutcome::Diverged(Divergence::RendezvousOneSided {
                                ch: ch.to_string(),
                                side,
                            }));
                        }
                    }
                }
                if caps.observe && !delivered {
                    // no receiver ready: the intruder absorbs the message
                    let ChanExpr::Decl(cid) = ch else {
                        unreachable!()
                    };
                    let mut next = advance(cfg, i, then.as_ref().clone());
                    next.frame.push(payload.clone());
                    succs.push((
                        Action::Out {
                            ch: cid.clone(),
                            handle: handle_base + next.frame.len(),
                        },
                        next,
                    ));
                }
            }
            Process::Input { ch, pattern, then } => {
                let caps = ctx.caps_of(ch);
                if !caps.inject {
                    continue; // rendezvous handled from the output side
                }
                let ChanExpr::Decl(cid) = ch else { continue };
                let fd = frame_deduction(ctx, cache, cfg)?;
                let recipes = injection_recipes(fd, pattern, ctx.inject_depth)?;
                let mut seen_payloads: IndexMap<u64, ()> = IndexMap::new();
                let mut count = 0usize;
                for recipe in recipes.iter() {
                    let vl = recipe.eval(&fd.left_knowledge);
                    let payload = if let Some(rk) = &fd.right_knowledge {
                        let vr = recipe.eval(rk);
                        match (vl, vr) {
                            (Some(l), Some(r)) => Term::choice(l, r),
                            (Some(l), None) => {
                                let mut b = Subst::new();
                                if pattern.project(Side::Left).matches(&l, &mut b) {
                                    return Ok(StepOutcome::Diverged(Divergence::InputOneSided {
                                        ch: cid.clone(),
                                        recipe: recipe.clone(),
                                        side: Side::Left,
                                    }));
                                }
                                continue;
                            }
                            (None, Some(r)) => {
                                let mut b = Subst::new();
                                if pattern.project(Side::Right).matches(&r, &mut b) {
                                    return Ok(StepOutcome::Diverged(Divergence::InputOneSided {
                                        ch: cid.clone(),
                                        recipe: recipe.clone(),
                                        side: Side::Right,
                                    }));
                                }
                                continue;
                            }
                            (None, None) => continue,
                        }
                    } else {
                        match vl {
                            Some(l) => l,
                            None => continue,
                        }
                    };
                    if seen_payloads.insert(payload.hash(), ()).is_some() {
                        continue;
                    }
                    match match_payload(ctx, pattern, &payload) {
                        Ok(Some(bindings)) => {
                            count += 1;
                            if count > ctx.max_inject_payloads {
                                return Err(SemanticsError::InjectBound {
                                    ch: cid.to_string(),
                                    limit: ctx.max_inject_payloads,
                                });
                            }
                            let receiver = normalize_process_terms(&then.substitute(&bindings));
                            let next = advance(cfg, i, receiver);
                            succs.push((
                                Action::In {
                                    ch: cid.clone(),
                                    recipe_text: recipe.to_string(),
                                },
                                next,
                            ));
                        }
                        Ok(None) => {}
                        Err(side) => {
                            return Ok(StepOutcome::Diverged(Divergence::InputOneSided {
                                ch: cid.clone(),
                                recipe: recipe.clone(),
                                side,
                            }));
                        }
                    }
                }
            }
            Process::Barrier { .. } => {}
        }
    }

    // Maximal progress: the phase advances only when nothing else can
    // happen and every live process waits at a barrier.
    if succs.is_empty() && !cfg.live.is_empty() {
        let mut waiting: Vec<u32> = Vec::new();
        let mut all_barriers = true;
        for p in &cfg.live {
            match p.as_ref() {
                Process::Barrier { phase, .. } => waiting.push(*phase),
                _ => all_barriers = false,
            }
        }
        if all_barriers {
            let next_phase = *waiting.iter().min().expect("nonempty");
            if next_phase > cfg.phase {
                let mut live = Vec::with_capacity(cfg.live.len());
                for p in &cfg.live {
                    match p.as_ref() {
                        Process::Barrier { phase, then } if *phase == next_phase => {
                            push_live(&mut live, then.clone());
                        }
                        _ => live.push(p.clone()),
                    }
                }
                let mut next = Config {
                    live,
                    frame: cfg.frame.clone(),
                    phase: next_phase,
                    fresh: cfg.fresh,
                };
                if let Some(plan) = &ctx.swap_plan {
                    if plan.swaps(next_phase) {
                        match apply_swap(&next) {
                            Ok(swapped) => next = swapped,
                            Err(d) => return Ok(StepOutcome::Diverged(d)),
                        }
                    }
                }
                succs.push((Action::Phase(next_phase), next));
            }
        }
    }

    // duplicates (same action, same canonical successor) are removed by
    // the exploration engine after interning, where equality is one
    // integer comparison
    Ok(StepOutcome::Successors(succs))
}

/// Exchange the right-hand components of the two live non-degenerate
/// choice terms: `choice[x,y]` and `choice[x',y']` become `choice[x,y']`
/// and `choice[x',y]`. Sound for the swap-pair encoding of vote privacy:
/// the left projection is untouched and the right projection is permuted
/// across the two sessions. The frame (already observed) is untouched.
fn apply_swap(cfg: &Config) -> Result<Config, Divergence> {
    let mut choices: Vec<Term> = Vec::new();
    for p in &cfg.live {
        p.visit_terms(&mut |t: &Term| t.choice_subterms(&mut choices));
    }
    if choices.is_empty() {
        return Ok(cfg.clone());
    }
    if choices.len() != 2 {
        return Err(Divergence::SwapInapplicable {
            distinct_choices: choices.len(),
        });
    }
    choices.sort_by_key(|t| t.to_string());
    let (c1, c2) = (&choices[0], &choices[1]);
    let n1 = Term::choice(c1.project(Side::Left), c2.project(Side::Right));
    let n2 = Term::choice(c2.project(Side::Left), c1.project(Side::Right));
    let replace_both = |t: &Term| -> Term {
        // simultaneous replacement; the pair are disjoint atoms
        fn go(t: &Term, c1: &Term, n1: &Term, c2: &Term, n2: &Term) -> Term {
            if t == c1 {
                return n1.clone();
            }
            if t == c2 {
                return n2.clone();
            }
            match t.node() {
                crate::term::TermNode::App(f, args) => {
                    Term::apply(*f, args.iter().map(|a| go(a, c1, n1, c2, n2)).collect())
                }
                crate::term::TermNode::Choice(l, r) => {
                    Term::choice(go(l, c1, n1, c2, n2), go(r, c1, n1, c2, n2))
                }
                _ => t.clone(),
            }
        }
        go(t, c1, &n1, c2, &n2)
    };
    let live = cfg
        .live
        .iter()
        .map(|p| Rc::new(p.map_terms(&mut |t: &Term| replace_both(t))))
        .collect();
    Ok(Config {
        live,
        frame: cfg.frame.clone(),
        phase: cfg.phase,
        fresh: cfg.fresh,
    })
}

/// Canonical memoization key: fresh names renamed to indices in a fixed
/// discovery order, parallel components sorted by rendering. Two
/// configurations equal up to fresh-name renaming and reordering map to
/// the same key.
pub fn canonical_key(cfg: &Config) -> String {
    use crate::calculus::render_flat;

    fn collect_fresh_term(t: &Term, out: &mut Vec<Ident>) {
        match t.node() {
            crate::term::TermNode::Name { id, .. } => {
                if id.contains('#') && !out.iter().any(|x| x == id) {
                    out.push(id.clone());
                }
            }
            crate::term::TermNode::App(_, args) => {
                for a in args {
                    collect_fresh_term(a, out);
                }
            }
            crate::term::TermNode::Choice(l, r) => {
                collect_fresh_term(l, out);
                collect_fresh_term(r, out);
            }
            _ => {}
        }
    }

    // sort order determined with fresh names masked
    let mask = |p: &Process| -> String {
        let masked = p.map_terms(&mut |t: &Term| mask_fresh(t));
        let mut s = String::new();
        render_flat(&masked, &mut s);
        s
    };
    let mut order: Vec<usize> = (0..cfg.live.len()).collect();
    let masked: Vec<String> = cfg.live.iter().map(|p| mask(p)).collect();
    order.sort_by(|&a, &b| masked[a].cmp(&masked[b]).then(a.cmp(&b)));

    // discovery order: frame first, then processes in masked order
    let mut fresh: Vec<Ident> = Vec::new();
    for t in &cfg.frame {
        collect_fresh_term(t, &mut fresh);
    }
    for &i in &order {
        cfg.live[i].visit_terms(&mut |t: &Term| collect_fresh_term(t, &mut fresh));
    }
    let map: std::collections::BTreeMap<Ident, Term> = fresh
        .iter()
        .enumerate()
        .map(|(k, name)| (name.clone(), Term::name(format!("!{k}"), false)))
        .collect();
    let rename = |t: &Term| -> Term { t.rename_names(&map) };

    let mut frame_parts: Vec<String> = Vec::with_capacity(cfg.frame.len());
    for t in &cfg.frame {
        frame_parts.push(rename(t).to_string());
    }
    let mut live_parts: Vec<String> = Vec::with_capacity(cfg.live.len());
    for &i in &order {
        let renamed = cfg.live[i].map_terms(&mut |t: &Term| rename(t));
        let mut s = String::new();
        render_flat(&renamed, &mut s);
        live_parts.push(s);
    }
    live_parts.sort();
    format!(
        "ph{};F[{}];L[{}]",
        cfg.phase,
        frame_parts.join(";"),
        live_parts.join(";")
    )
}

fn mask_fresh(t: &Term) -> Term {
    match t.node() {
        crate::term::TermNode::Name { id, .. } if id.contains('#') => Term::name("!", false),
        crate::term::TermNode::App(f, args) => {
            Term::apply(*f, args.iter().map(mask_fresh).collect())
        }
        crate::term::TermNode::Choice(l, r) => Term::choice(mask_fresh(l), mask_fresh(r)),
        _ => t.clone(),
    }
}
