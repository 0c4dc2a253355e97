//! Dolev-Yao intruder deduction: derivability of terms from a finite
//! knowledge set, recipe search, and static equivalence of frames.
//!
//! Recipes are terms over frame handles (`w1`, `w2`, ...) and public names.
//! The search bound is the recipe's node count: every handle, public name,
//! and application node counts one. All enumeration orders are fixed, so
//! results and witnesses are deterministic.

use std::collections::BTreeMap;
use std::fmt;
use std::rc::Rc;

use indexmap::IndexMap;
use thiserror::Error;

use crate::term::{Func, Side, SymbolKind, Term, MAX_TUPLE_ARITY};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum DeductionError {
    #[error("knowledge entry `{0}` is not ground")]
    NonGround(String),
    #[error("knowledge entry `{0}` contains a choice")]
    ChoiceInKnowledge(String),
    #[error("deduction closure exceeded the configured bound of {limit} terms (at recipe size {at_size})")]
    ResourceBound { limit: usize, at_size: usize },
    #[error("frames have different lengths: {left} vs {right}")]
    FrameLengthMismatch { left: usize, right: usize },
}

/// Ordered intruder knowledge. Index + 1 is the handle the intruder uses
/// to refer to each entry; growth is append-only.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Knowledge {
    entries: Vec<Term>,
}

impl Knowledge {
    pub fn new() -> Knowledge {
        Knowledge::default()
    }

    /// Build from terms, normalizing each. Entries must be ground and
    /// choice-free.
    pub fn from_terms(terms: impl IntoIterator<Item = Term>) -> Result<Knowledge, DeductionError> {
        let mut k = Knowledge::new();
        for t in terms {
            k.push(t)?;
        }
        Ok(k)
    }

    pub fn push(&mut self, t: Term) -> Result<(), DeductionError> {
        if !t.is_ground() {
            return Err(DeductionError::NonGround(t.to_string()));
        }
        if t.has_choice() {
            return Err(DeductionError::ChoiceInKnowledge(t.to_string()));
        }
        self.entries.push(t.normalize());
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn get(&self, handle: usize) -> Option<&Term> {
        handle.checked_sub(1).and_then(|i| self.entries.get(i))
    }

    pub fn iter(&self) -> impl Iterator<Item = &Term> {
        self.entries.iter()
    }
}

/// A witness for derivability: how the intruder computes a message from
/// handles into its knowledge and public names.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum Recipe {
    /// 1-based reference to a knowledge entry.
    Handle(usize),
    Pub(Rc<str>),
    App(Func, Vec<Recipe>),
}

impl Recipe {
    /// Node count: handles and public names weigh one, applications one
    /// plus their arguments.
    pub fn size(&self) -> usize {
        match self {
            Recipe::Handle(_) | Recipe::Pub(_) => 1,
            Recipe::App(_, args) => 1 + args.iter().map(Recipe::size).sum::<usize>(),
        }
    }

    fn to_term(&self, k: &Knowledge) -> Option<Term> {
        match self {
            Recipe::Handle(h) => k.get(*h).cloned(),
            Recipe::Pub(n) => Some(Term::name(n.clone(), true)),
            Recipe::App(f, args) => {
                let args = args
                    .iter()
                    .map(|r| r.to_term(k))
                    .collect::<Option<Vec<_>>>()?;
                Term::app(*f, args).ok()
            }
        }
    }

    /// Evaluate against a knowledge set. Evaluation fails if a handle is
    /// out of range or the normal form still contains a destructor (a
    /// stuck computation is not a message the intruder can produce).
    pub fn eval(&self, k: &Knowledge) -> Option<Term> {
        let t = self.to_term(k)?.normalize();
        if t.contains_destructor() {
            None
        } else {
            Some(t)
        }
    }
}

impl fmt::Display for Recipe {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Recipe::Handle(h) => write!(f, "w{h}"),
            Recipe::Pub(n) => write!(f, "{n}"),
            Recipe::App(Func::Ok, _) => write!(f, "ok"),
            Recipe::App(Func::Tuple(_), args) => {
                write!(f, "(")?;
                for (i, a) in args.iter().enumerate() {
                    if i > 0 {
                        write!(f, ",")?;
                    }
                    write!(f, "{a}")?;
                }
                write!(f, ")")
            }
            Recipe::App(g, args) => {
                write!(f, "{g}(")?;
                for (i, a) in args.iter().enumerate() {
                    if i > 0 {
                        write!(f, ",")?;
                    }
                    write!(f, "{a}")?;
                }
                write!(f, ")")
            }
        }
    }
}

/// Bounds for deduction searches.
#[derive(Debug, Clone)]
pub struct DeductionConfig {
    /// Maximum recipe size (node count).
    pub depth: usize,
    /// Cap on the number of distinct derivable terms kept during closure.
    pub max_terms: usize,
}

impl Default for DeductionConfig {
    fn default() -> Self {
        // Every deduction the protocol model needs (decrypt, check a
        // signature or proof, hash, tag a pair) fits in 4 nodes; the bound
        // is a completeness caveat, not a soundness one.
        DeductionConfig {
            depth: 4,
            max_terms: 500_000,
        }
    }
}

impl DeductionConfig {
    pub fn with_depth(depth: usize) -> DeductionConfig {
        DeductionConfig {
            depth,
            ..DeductionConfig::default()
        }
    }
}

/// The closure of a knowledge set under recipes of bounded size: every
/// derivable term mapped to its minimal recipe (ties broken by the fixed
/// enumeration order: smaller sizes first, handles before public names
/// before applications in signature order).
#[derive(Debug, Clone)]
pub struct Saturation {
    items: IndexMap<Term, Recipe>,
}

impl Saturation {
    pub fn contains(&self, t: &Term) -> bool {
        self.items.contains_key(t)
    }

    pub fn recipe_for(&self, t: &Term) -> Option<&Recipe> {
        self.items.get(t)
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&Term, &Recipe)> {
        self.items.iter()
    }
}

/// Functions enumerated during closure and static-equivalence testing, in
/// canonical order. `zkp` is included for completeness although its arity
/// keeps it out of reach at the default bound.
fn enumeration_funcs(max_arity_budget: usize) -> Vec<Func> {
    let mut fs = vec![
        Func::Pk,
        Func::Hash,
        Func::Sign,
        Func::Dec,
        Func::Penc,
        Func::Checksign,
        Func::Checkzkp,
        Func::Zkp,
    ];
    for n in 2..=MAX_TUPLE_ARITY {
        if (n as usize) < max_arity_budget {
            fs.push(Func::Tuple(n));
        }
    }
    for n in 2..=MAX_TUPLE_ARITY {
        for i in 1..=n {
            fs.push(Func::Proj(i, n));
        }
    }
    fs
}

/// Enumerate the ordered ways to split `total` into `parts` positive sizes.
fn size_partitions(total: usize, parts: usize) -> Vec<Vec<usize>> {
    fn rec(total: usize, parts: usize, acc: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if parts == 1 {
            if total >= 1 {
                acc.push(total);
                out.push(acc.clone());
                acc.pop();
            }
            return;
        }
        for first in 1..=(total.saturating_sub(parts - 1)) {
            acc.push(first);
            rec(total - first, parts - 1, acc, out);
            acc.pop();
        }
    }
    let mut out = Vec::new();
    if parts >= 1 && total >= parts {
        rec(total, parts, &mut Vec::new(), &mut out);
    }
    out
}

/// Compute the closure of `k` (plus public names) under recipes of size
/// at most `cfg.depth`.
pub fn saturate(
    k: &Knowledge,
    publics: &[Rc<str>],
    cfg: &DeductionConfig,
) -> Result<Saturation, DeductionError> {
    // levels[s] = terms first derivable with a recipe of exactly size s+1
    let mut items: IndexMap<Term, Recipe> = IndexMap::new();
    let mut levels: Vec<Vec<Term>> = Vec::new();

    let mut level1 = Vec::new();
    for h in 1..=k.len() {
        let t = k.get(h).unwrap().clone();
        if !t.contains_destructor() && !items.contains_key(&t) {
            items.insert(t.clone(), Recipe::Handle(h));
            level1.push(t);
        }
    }
    for p in publics {
        let t = Term::name(p.clone(), true);
        if !items.contains_key(&t) {
            items.insert(t.clone(), Recipe::Pub(p.clone()));
            level1.push(t);
        }
    }
    let ok = Term::ok();
    if !items.contains_key(&ok) {
        items.insert(ok.clone(), Recipe::App(Func::Ok, vec![]));
        level1.push(ok);
    }
    levels.push(level1);

    let funcs = enumeration_funcs(cfg.depth);
    for size in 2..=cfg.depth {
        let mut level = Vec::new();
        for f in &funcs {
            let arity = f.arity();
            if arity == 0 || arity > size - 1 {
                continue;
            }
            // Projections only ever reduce on tuples of the right width.
            let proj_width = match f {
                Func::Proj(_, n) => Some(*n),
                _ => None,
            };
            for partition in size_partitions(size - 1, arity) {
                let mut pick = vec![0usize; arity];
                loop {
                    let args: Option<Vec<Term>> = partition
                        .iter()
                        .zip(pick.iter())
                        .map(|(&s, &i)| levels[s - 1].get(i).cloned())
                        .collect();
                    let Some(args) = args else { break };
                    let viable = match proj_width {
                        Some(n) => matches!(
                            args[0].node(),
                            crate::term::TermNode::App(Func::Tuple(m), _) if *m == n
                        ),
                        None => true,
                    };
                    if viable {
                        let t = Term::apply(*f, args.clone()).normalize();
                        let stuck = t.contains_destructor();
                        if !stuck && !items.contains_key(&t) {
                            let recipe = Recipe::App(
                                *f,
                                partition
                                    .iter()
                                    .zip(pick.iter())
                                    .map(|(&s, &i)| items[&levels[s - 1][i]].clone())
                                    .collect(),
                            );
                            debug_assert_eq!(recipe.size(), size);
                            items.insert(t.clone(), recipe);
                            level.push(t);
                            if items.len() > cfg.max_terms {
                                return Err(DeductionError::ResourceBound {
                                    limit: cfg.max_terms,
                                    at_size: size,
                                });
                            }
                        }
                    }
                    // advance the mixed-radix counter over argument picks
                    let mut pos = arity;
                    loop {
                        if pos == 0 {
                            break;
                        }
                        pos -= 1;
                        pick[pos] += 1;
                        if pick[pos] < levels[partition[pos] - 1].len() {
                            break;
                        }
                        pick[pos] = 0;
                        if pos == 0 {
                            pick = vec![usize::MAX; arity]; // sentinel: done
                            break;
                        }
                    }
                    if pick.first() == Some(&usize::MAX) {
                        break;
                    }
                    if partition.iter().any(|&s| levels[s - 1].is_empty()) {
                        break;
                    }
                }
            }
        }
        levels.push(level);
    }

    Ok(Saturation { items })
}

/// The destructor closure of a knowledge set: everything the intruder
/// learns by decomposing what it has (decrypting with derivable keys,
/// projecting tuples), with recipes. Constructor compositions are not
/// enumerated eagerly; [`Analysis::derive_exact`] and
/// [`Analysis::synth_upto`] build them on demand, which keeps per-state
/// intruder reasoning cheap during exploration.
#[derive(Debug, Clone)]
pub struct Analysis {
    items: IndexMap<Term, Recipe>,
    depth: usize,
    max_terms: usize,
    exact_memo: std::collections::HashMap<Term, Option<Recipe>>,
    /// constructor-closure levels by recipe size, built lazily
    any_levels: Vec<Vec<(Term, Recipe)>>,
}

/// Decompose `k` (plus public names) to a fixpoint under the destructors.
pub fn analyze(
    k: &Knowledge,
    publics: &[Rc<str>],
    cfg: &DeductionConfig,
) -> Result<Analysis, DeductionError> {
    let mut items: IndexMap<Term, Recipe> = IndexMap::new();
    for h in 1..=k.len() {
        let t = k.get(h).unwrap().clone();
        if !t.contains_destructor() && !items.contains_key(&t) {
            items.insert(t, Recipe::Handle(h));
        }
    }
    for p in publics {
        let t = Term::name(p.clone(), true);
        items.entry(t).or_insert_with(|| Recipe::Pub(p.clone()));
    }
    items
        .entry(Term::ok())
        .or_insert_with(|| Recipe::App(Func::Ok, vec![]));

    let mut analysis = Analysis {
        items,
        depth: cfg.depth,
        max_terms: cfg.max_terms,
        exact_memo: std::collections::HashMap::new(),
        any_levels: Vec::new(),
    };
    enum Pending {
        /// target, ciphertext recipe, secret key, key budget
        Decrypt(Term, Recipe, Term, usize),
        /// target, ready projection recipe
        Project(Term, Recipe),
    }
    loop {
        let mut pending = Vec::new();
        for (t, recipe) in analysis.items.iter() {
            match t.node() {
                crate::term::TermNode::App(Func::Penc, args) => {
                    if let crate::term::TermNode::App(Func::Pk, kargs) = args[2].node() {
                        let budget = cfg.depth.saturating_sub(1 + recipe.size());
                        if budget > 0 && !analysis.items.contains_key(&args[0]) {
                            pending.push(Pending::Decrypt(
                                args[0].clone(),
                                recipe.clone(),
                                kargs[0].clone(),
                                budget,
                            ));
                        }
                    }
                }
                crate::term::TermNode::App(Func::Tuple(n), args) if recipe.size() < cfg.depth => {
                    for (i, a) in args.iter().enumerate() {
                        if !analysis.items.contains_key(a) {
                            pending.push(Pending::Project(
                                a.clone(),
                                Recipe::App(Func::Proj(i as u8 + 1, *n), vec![recipe.clone()]),
                            ));
                        }
                    }
                }
                _ => {}
            }
        }
        let mut changed = false;
        for p in pending {
            let (target, recipe) = match p {
                Pending::Project(target, recipe) => (target, Some(recipe)),
                Pending::Decrypt(target, cipher, key, budget) => {
                    let r = analysis
                        .derive_exact(&key, budget)
                        .map(|kr| Recipe::App(Func::Dec, vec![cipher, kr]));
                    (target, r)
                }
            };
            if analysis.items.contains_key(&target) {
                continue;
            }
            if let Some(r) = recipe {
                if r.size() <= cfg.depth {
                    analysis.items.insert(target, r);
                    analysis.exact_memo.clear();
                    analysis.any_levels.clear();
                    changed = true;
                    if analysis.items.len() > cfg.max_terms {
                        return Err(DeductionError::ResourceBound {
                            limit: cfg.max_terms,
                            at_size: cfg.depth,
                        });
                    }
                }
            }
        }
        if !changed {
            break;
        }
    }
    Ok(analysis)
}

impl Analysis {
    pub fn iter(&self) -> impl Iterator<Item = (&Term, &Recipe)> {
        self.items.iter()
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    /// A recipe deriving exactly `t` within the size budget, if any: a
    /// decomposed fact, or a constructor application over derivable
    /// arguments (the theory is subterm-convergent, so these two routes
    /// are complete).
    pub fn derive_exact(&mut self, t: &Term, budget: usize) -> Option<Recipe> {
        if let Some(cached) = self.exact_memo.get(t) {
            return cached.as_ref().filter(|r| r.size() <= budget).cloned();
        }
        let mut best = self.items.get(t).cloned();
        if best.is_none() {
            if let crate::term::TermNode::App(f, args) = t.node() {
                if f.kind() == SymbolKind::Constructor && f.arity() > 0 {
                    let mut arg_recipes = Vec::with_capacity(args.len());
                    let mut total = 1usize;
                    let mut ok = true;
                    for a in args {
                        match self.derive_exact(a, self.depth.saturating_sub(1)) {
                            Some(r) => {
                                total += r.size();
                                arg_recipes.push(r);
                            }
                            None => {
                                ok = false;
                                break;
                            }
                        }
                    }
                    if ok && total <= self.depth {
                        best = Some(Recipe::App(*f, arg_recipes));
                    }
                }
            }
        }
        self.exact_memo.insert(t.clone(), best.clone());
        best.filter(|r| r.size() <= budget)
    }

    /// All terms derivable with recipes of size at most `budget`:
    /// decomposed facts plus constructor compositions, enumerated levelwise.
    pub fn synth_upto(&mut self, budget: usize) -> Result<Vec<(Term, Recipe)>, DeductionError> {
        let budget = budget.min(self.depth);
        while self.any_levels.len() < budget {
            let size = self.any_levels.len() + 1;
            let mut level: Vec<(Term, Recipe)> = Vec::new();
            let mut known: std::collections::HashSet<Term> = self
                .any_levels
                .iter()
                .flatten()
                .map(|(t, _)| t.clone())
                .collect();
            for (t, r) in self.items.iter() {
                if r.size() == size && !known.contains(t) {
                    level.push((t.clone(), r.clone()));
                    known.insert(t.clone());
                }
            }
            if size >= 2 {
                for f in enumeration_funcs(size) {
                    if f.kind() == SymbolKind::Destructor {
                        continue;
                    }
                    let arity = f.arity();
                    if arity == 0 || arity > size - 1 {
                        continue;
                    }
                    for partition in size_partitions(size - 1, arity) {
                        if partition
                            .iter()
                            .any(|&s| self.any_levels.get(s - 1).is_none_or(Vec::is_empty))
                        {
                            continue;
                        }
                        let mut pick = vec![0usize; arity];
                        'picks: loop {
                            let args: Vec<&(Term, Recipe)> = partition
                                .iter()
                                .zip(pick.iter())
                                .map(|(&s, &i)| &self.any_levels[s - 1][i])
                                .collect();
                            let t = Term::apply(f, args.iter().map(|(a, _)| a.clone()).collect())
                                .normalize();
                            if !known.contains(&t) {
                                let recipe =
                                    Recipe::App(f, args.iter().map(|(_, r)| r.clone()).collect());
                                known.insert(t.clone());
                                level.push((t, recipe));
                                if known.len() + self.items.len() > self.max_terms {
                                    return Err(DeductionError::ResourceBound {
                                        limit: self.max_terms,
                                        at_size: size,
                                    });
                                }
                            }
                            let mut pos = arity;
                            loop {
                                if pos == 0 {
                                    break 'picks;
                                }
                                pos -= 1;
                                pick[pos] += 1;
                                if pick[pos] < self.any_levels[partition[pos] - 1].len() {
                                    break;
                                }
                                pick[pos] = 0;
                            }
                        }
                    }
                }
            }
            self.any_levels.push(level);
        }
        Ok(self
            .any_levels
            .iter()
            .take(budget)
            .flatten()
            .cloned()
            .collect())
    }
}

/// Search for a minimal recipe deriving `target` from `k` within the size
/// bound. The returned witness is re-evaluated against `k` before being
/// handed out.
pub fn derivable(
    k: &Knowledge,
    publics: &[Rc<str>],
    target: &Term,
    cfg: &DeductionConfig,
) -> Result<Option<Recipe>, DeductionError> {
    let target = target.normalize();
    let sat = saturate(k, publics, cfg)?;
    match sat.recipe_for(&target) {
        Some(r) => {
            let check = r
                .eval(k)
                .expect("saturation recipes evaluate on their own knowledge");
            assert_eq!(check, target, "recipe soundness violated");
            Ok(Some(r.clone()))
        }
        None => Ok(None),
    }
}

/// A pair of frames with identical observable histories.
#[derive(Debug, Clone)]
pub struct FramePair {
    pub left: Knowledge,
    pub right: Knowledge,
}

impl FramePair {
    pub fn new(left: Knowledge, right: Knowledge) -> Result<FramePair, DeductionError> {
        if left.len() != right.len() {
            return Err(DeductionError::FrameLengthMismatch {
                left: left.len(),
                right: right.len(),
            });
        }
        Ok(FramePair { left, right })
    }

    /// Split a sequence of biterms into its two projections.
    pub fn from_biterms(entries: &[Term]) -> Result<FramePair, DeductionError> {
        let left = Knowledge::from_terms(entries.iter().map(|t| t.project(Side::Left)))?;
        let right = Knowledge::from_terms(entries.iter().map(|t| t.project(Side::Right)))?;
        FramePair::new(left, right)
    }

    pub fn swap(&self) -> FramePair {
        FramePair {
            left: self.right.clone(),
            right: self.left.clone(),
        }
    }

    pub fn len(&self) -> usize {
        self.left.len()
    }

    pub fn is_empty(&self) -> bool {
        self.left.is_empty()
    }
}

/// A pair of recipes whose equality test separates two frames: the test
/// `r1 == r2` (both sides evaluate and the results agree) holds on one
/// frame and fails on the other. A computability distinguisher is reported
/// as the degenerate pair `(r, r)`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RecipePair {
    pub r1: Recipe,
    pub r2: Recipe,
}

impl fmt::Display for RecipePair {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.r1 == self.r2 {
            write!(f, "{} computable on one side only", self.r1)
        } else {
            write!(f, "{} = {}", self.r1, self.r2)
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum StaticEquivalence {
    Equivalent,
    Distinguisher(RecipePair),
    /// The enumeration cap was reached before the test space was covered;
    /// never silently reported as equivalent.
    Inconclusive {
        recipes_tried: usize,
    },
}

impl StaticEquivalence {
    pub fn is_equivalent(&self) -> bool {
        matches!(self, StaticEquivalence::Equivalent)
    }
}

/// Decide static equivalence of a frame pair by comparing the equality
/// kernels of recipe evaluations on the two frames: the tests are all
/// compositions of size at most `cfg.depth` over the handles, the public
/// names, and the decomposed facts of either frame (parts the intruder
/// extracts from what it holds count as free leaves). Equivalent to
/// quantifying over all such recipe pairs; the first violating pair in
/// enumeration order is returned.
pub fn statically_equivalent(
    fp: &FramePair,
    publics: &[Rc<str>],
    cfg: &DeductionConfig,
) -> StaticEquivalence {
    // by_left: left value -> (right value, first recipe producing it)
    let mut by_left: BTreeMap<String, (Term, Recipe)> = BTreeMap::new();
    let mut by_right: BTreeMap<String, (Term, Recipe)> = BTreeMap::new();
    // levels hold recipes that evaluate on both sides, deduplicated by
    // their value pair; only those are useful as subrecipes.
    let mut seen_pairs: BTreeMap<(String, String), ()> = BTreeMap::new();
    let mut levels: Vec<Vec<(Recipe, Term, Term)>> = Vec::new();
    let mut tried = 0usize;

    let consider = |recipe: Recipe,
                    by_left: &mut BTreeMap<String, (Term, Recipe)>,
                    by_right: &mut BTreeMap<String, (Term, Recipe)>,
                    seen_pairs: &mut BTreeMap<(String, String), ()>,
                    tried: &mut usize|
     -> Result<Option<(Recipe, Term, Term)>, RecipePair> {
        *tried += 1;
        let vl = recipe.eval(&fp.left);
        let vr = recipe.eval(&fp.right);
        match (vl, vr) {
            (None, None) => Ok(None),
            (Some(_), None) | (None, Some(_)) => Err(RecipePair {
                r1: recipe.clone(),
                r2: recipe,
            }),
            (Some(vl), Some(vr)) => {
                let kl = vl.to_string();
                let kr = vr.to_string();
                match by_left.get(&kl) {
                    Some((prev_r, prev_recipe)) => {
                        if *prev_r != vr {
                            // equal on the left, apart on the right
                            return Err(RecipePair {
                                r1: prev_recipe.clone(),
                                r2: recipe,
                            });
                        }
                    }
                    None => {
                        by_left.insert(kl.clone(), (vr.clone(), recipe.clone()));
                    }
                }
                match by_right.get(&kr) {
                    Some((prev_l, prev_recipe)) => {
                        if *prev_l != vl {
                            // equal on the right, apart on the left
                            return Err(RecipePair {
                                r1: prev_recipe.clone(),
                                r2: recipe,
                            });
                        }
                    }
                    None => {
                        by_right.insert(kr.clone(), (vl.clone(), recipe.clone()));
                    }
                }
                if seen_pairs.insert((kl, kr), ()).is_none() {
                    Ok(Some((recipe, vl, vr)))
                } else {
                    Ok(None)
                }
            }
        }
    };

    let mut level1 = Vec::new();
    let seed = |r: Recipe,
                level1: &mut Vec<(Recipe, Term, Term)>,
                by_left: &mut BTreeMap<String, (Term, Recipe)>,
                by_right: &mut BTreeMap<String, (Term, Recipe)>,
                seen_pairs: &mut BTreeMap<(String, String), ()>,
                tried: &mut usize|
     -> Result<(), RecipePair> {
        if let Some(entry) = consider(r, by_left, by_right, seen_pairs, tried)? {
            level1.push(entry);
        }
        Ok(())
    };

    for h in 1..=fp.len() {
        if let Err(pair) = seed(
            Recipe::Handle(h),
            &mut level1,
            &mut by_left,
            &mut by_right,
            &mut seen_pairs,
            &mut tried,
        ) {
            return StaticEquivalence::Distinguisher(pair);
        }
    }
    for p in publics {
        if let Err(pair) = seed(
            Recipe::Pub(p.clone()),
            &mut level1,
            &mut by_left,
            &mut by_right,
            &mut seen_pairs,
            &mut tried,
        ) {
            return StaticEquivalence::Distinguisher(pair);
        }
    }
    if let Err(pair) = seed(
        Recipe::App(Func::Ok, vec![]),
        &mut level1,
        &mut by_left,
        &mut by_right,
        &mut seen_pairs,
        &mut tried,
    ) {
        return StaticEquivalence::Distinguisher(pair);
    }
    // decomposed facts are free test leaves: the depth bound counts the
    // intruder's composition work, not the decomposition of messages it
    // already holds (their recipes are rendered in full in any witness)
    let mut analyzed_seeds: Vec<Recipe> = Vec::new();
    for k in [&fp.left, &fp.right] {
        match analyze(k, publics, cfg) {
            Ok(analysis) => {
                for (_, r) in analysis.iter() {
                    if !matches!(r, Recipe::Handle(_) | Recipe::Pub(_))
                        && r.size() > 1
                        && !analyzed_seeds.contains(r)
                    {
                        analyzed_seeds.push(r.clone());
                    }
                }
            }
            Err(_) => {
                return StaticEquivalence::Inconclusive {
                    recipes_tried: tried,
                }
            }
        }
    }
    for r in analyzed_seeds {
        if let Err(pair) = seed(
            r,
            &mut level1,
            &mut by_left,
            &mut by_right,
            &mut seen_pairs,
            &mut tried,
        ) {
            return StaticEquivalence::Distinguisher(pair);
        }
    }
    levels.push(level1);

    let funcs = enumeration_funcs(cfg.depth);
    for size in 2..=cfg.depth {
        let mut level = Vec::new();
        for f in &funcs {
            let arity = f.arity();
            if arity == 0 || arity > size - 1 {
                continue;
            }
            for partition in size_partitions(size - 1, arity) {
                if partition.iter().any(|&s| levels[s - 1].is_empty()) {
                    continue;
                }
                let mut pick = vec![0usize; arity];
                'picks: loop {
                    let recipe = Recipe::App(
                        *f,
                        partition
                            .iter()
                            .zip(pick.iter())
                            .map(|(&s, &i)| levels[s - 1][i].0.clone())
                            .collect(),
                    );
                    if tried >= cfg.max_terms {
                        return StaticEquivalence::Inconclusive {
                            recipes_tried: tried,
                        };
                    }
                    match consider(
                        recipe,
                        &mut by_left,
                        &mut by_right,
                        &mut seen_pairs,
                        &mut tried,
                    ) {
                        Err(pair) => return StaticEquivalence::Distinguisher(pair),
                        Ok(Some(entry)) => level.push(entry),
                        Ok(None) => {}
                    }
                    let mut pos = arity;
                    loop {
                        if pos == 0 {
                            break 'picks;
                        }
                        pos -= 1;
                        pick[pos] += 1;
                        if pick[pos] < levels[partition[pos] - 1].len() {
                            break;
                        }
                        pick[pos] = 0;
                    }
                }
            }
        }
        levels.push(level);
    }

    StaticEquivalence::Equivalent
}
