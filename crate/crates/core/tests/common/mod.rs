//! Brute-force oracles and seeded generators shared by the integration
//! suites. The oracles intentionally take different routes from the
//! implementation: rewriting explores arbitrary positions and orders
//! (or a leftmost-outermost strategy) instead of innermost, and
//! derivability enumerates every recipe instead of saturating levelwise.

#![allow(dead_code)]

use std::collections::{BTreeSet, HashSet};
use std::rc::Rc;

use rand::rngs::StdRng;
use rand::seq::SliceRandom;
use rand::Rng;

use ballotscope_core::deduction::{Knowledge, Recipe};
use ballotscope_core::term::{builtin_rules, match_term, Func, Term, TermNode};

/// One rewrite step at every redex position, under the three built-in
/// rules plus tuple projection.
pub fn rewrite_once_anywhere(t: &Term) -> Vec<Term> {
    let mut out = Vec::new();
    // root redexes
    for rule in builtin_rules() {
        if let Some(subst) = match_term(&rule.lhs, t) {
            out.push(rule.rhs.substitute(&subst));
        }
    }
    if let TermNode::App(Func::Proj(i, n), args) = t.node() {
        if let TermNode::App(Func::Tuple(m), telems) = args[0].node() {
            if m == n {
                out.push(telems[(*i - 1) as usize].clone());
            }
        }
    }
    // redexes inside arguments
    if let TermNode::App(f, args) = t.node() {
        for (i, a) in args.iter().enumerate() {
            for rewritten in rewrite_once_anywhere(a) {
                let mut new_args = args.clone();
                new_args[i] = rewritten;
                out.push(Term::apply(*f, new_args));
            }
        }
    }
    out
}

/// Explore the full reduction graph (all positions, all orders) and
/// return the unique normal form, panicking if confluence fails.
pub fn unique_normal_form(t: &Term) -> Term {
    let mut seen: HashSet<Term> = HashSet::new();
    let mut stack = vec![t.clone()];
    let mut normals: BTreeSet<String> = BTreeSet::new();
    let mut normal_term = None;
    while let Some(u) = stack.pop() {
        if !seen.insert(u.clone()) {
            continue;
        }
        let nexts = rewrite_once_anywhere(&u);
        if nexts.is_empty() {
            normals.insert(u.to_string());
            normal_term = Some(u);
        } else {
            stack.extend(nexts);
        }
    }
    assert_eq!(
        normals.len(),
        1,
        "confluence violated for {t}: normal forms {normals:?}"
    );
    normal_term.unwrap()
}

/// Leftmost-outermost single-order normalization; an independent strategy
/// used where exploring all orders would be too slow. Confluence (checked
/// by the all-orders oracle) makes the result canonical.
pub fn leftmost_normal_form(t: &Term) -> Term {
    let mut current = t.clone();
    loop {
        match rewrite_leftmost(&current) {
            Some(next) => current = next,
            None => return current,
        }
    }
}

fn rewrite_leftmost(t: &Term) -> Option<Term> {
    for rule in builtin_rules() {
        if let Some(subst) = match_term(&rule.lhs, t) {
            return Some(rule.rhs.substitute(&subst));
        }
    }
    if let TermNode::App(Func::Proj(i, n), args) = t.node() {
        if let TermNode::App(Func::Tuple(m), telems) = args[0].node() {
            if m == n {
                return Some(telems[(*i - 1) as usize].clone());
            }
        }
    }
    if let TermNode::App(f, args) = t.node() {
        for (i, a) in args.iter().enumerate() {
            if let Some(rewritten) = rewrite_leftmost(a) {
                let mut new_args = args.clone();
                new_args[i] = rewritten;
                return Some(Term::apply(*f, new_args));
            }
        }
    }
    None
}

/// Evaluate a recipe by brute-force normalization, failing on stuck
/// destructors, independent of `Recipe::eval`.
pub fn oracle_eval(r: &Recipe, k: &Knowledge) -> Option<Term> {
    let term = recipe_term(r, k)?;
    let nf = leftmost_normal_form(&term);
    if nf.contains_destructor() {
        None
    } else {
        Some(nf)
    }
}

fn recipe_term(r: &Recipe, k: &Knowledge) -> Option<Term> {
    match r {
        Recipe::Handle(h) => k.get(*h).cloned(),
        Recipe::Pub(n) => Some(Term::name(n.clone(), true)),
        Recipe::App(f, args) => {
            let args = args
                .iter()
                .map(|a| recipe_term(a, k))
                .collect::<Option<Vec<_>>>()?;
            Term::app(*f, args).ok()
        }
    }
}

/// Every recipe of node count at most `depth` over the given handles and
/// public names.
pub fn enumerate_recipes(handles: usize, publics: &[Rc<str>], depth: usize) -> Vec<Recipe> {
    let mut by_size: Vec<Vec<Recipe>> = Vec::new();
    let mut leaves: Vec<Recipe> = (1..=handles).map(Recipe::Handle).collect();
    leaves.extend(publics.iter().map(|p| Recipe::Pub(p.clone())));
    leaves.push(Recipe::App(Func::Ok, vec![]));
    by_size.push(leaves);
    let funcs = [
        Func::Pk,
        Func::Hash,
        Func::Sign,
        Func::Dec,
        Func::Penc,
        Func::Checksign,
        Func::Checkzkp,
        Func::Zkp,
        Func::Tuple(2),
        Func::Tuple(3),
        Func::Proj(1, 2),
        Func::Proj(2, 2),
        Func::Proj(1, 3),
        Func::Proj(2, 3),
        Func::Proj(3, 3),
    ];
    for size in 2..=depth {
        let mut level = Vec::new();
        for f in funcs {
            let arity = f.arity();
            if arity == 0 || arity > size - 1 {
                continue;
            }
            let mut combos: Vec<Vec<Recipe>> = vec![Vec::new()];
            let mut partitions: Vec<Vec<usize>> = Vec::new();
            partition_into(size - 1, arity, &mut Vec::new(), &mut partitions);
            for partition in partitions {
                combos.clear();
                combos.push(Vec::new());
                for &s in &partition {
                    let mut next = Vec::new();
                    for prefix in &combos {
                        for r in &by_size[s - 1] {
                            let mut v = prefix.clone();
                            v.push(r.clone());
                            next.push(v);
                        }
                    }
                    combos = next;
                }
                for args in &combos {
                    level.push(Recipe::App(f, args.clone()));
                }
            }
        }
        by_size.push(level);
    }
    by_size.into_iter().flatten().collect()
}

fn partition_into(total: usize, parts: usize, acc: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
    if parts == 1 {
        if total >= 1 {
            acc.push(total);
            out.push(acc.clone());
            acc.pop();
        }
        return;
    }
    for first in 1..=total.saturating_sub(parts - 1) {
        acc.push(first);
        partition_into(total - first, parts - 1, acc, out);
        acc.pop();
    }
}

const PRIVATE_POOL: &[&str] = &["s0", "s1", "s2", "k0", "k1", "r0"];
const PUBLIC_POOL: &[&str] = &["p0", "p1"];

pub fn random_name(rng: &mut StdRng) -> Term {
    if rng.gen_bool(0.3) {
        Term::name(*PUBLIC_POOL.choose(rng).unwrap(), true)
    } else {
        Term::name(*PRIVATE_POOL.choose(rng).unwrap(), false)
    }
}

/// A random ground term of bounded depth, biased toward genuine redexes
/// so normalization actually fires.
pub fn random_ground_term(rng: &mut StdRng, depth: usize) -> Term {
    if depth <= 1 || rng.gen_bool(0.25) {
        return random_name(rng);
    }
    // sometimes produce a built-in redex with consistent keys
    if rng.gen_bool(0.3) {
        let m = random_ground_term(rng, depth - 2);
        let r = random_name(rng);
        let sk = random_name(rng);
        let pk = Term::apply(Func::Pk, vec![sk.clone()]);
        match rng.gen_range(0..4) {
            0 => {
                let enc = Term::apply(Func::Penc, vec![m, r, pk]);
                return Term::apply(Func::Dec, vec![enc, sk]);
            }
            1 => {
                let sig = Term::apply(Func::Sign, vec![sk, m.clone()]);
                return Term::apply(Func::Checksign, vec![sig, m, pk]);
            }
            2 => {
                let enc = Term::apply(Func::Penc, vec![m.clone(), r.clone(), pk.clone()]);
                let proof = Term::apply(Func::Zkp, vec![pk, r, m, enc]);
                return Term::apply(Func::Checkzkp, vec![proof]);
            }
            _ => {
                let n = rng.gen_range(2..=3u8);
                let parts = (0..n)
                    .map(|_| random_ground_term(rng, depth - 2))
                    .collect::<Vec<_>>();
                let tup = Term::tuple(parts);
                let i = rng.gen_range(1..=n);
                return Term::apply(Func::Proj(i, n), vec![tup]);
            }
        }
    }
    let funcs = [
        Func::Pk,
        Func::Hash,
        Func::Sign,
        Func::Dec,
        Func::Penc,
        Func::Checksign,
        Func::Checkzkp,
        Func::Zkp,
        Func::Tuple(2),
        Func::Tuple(3),
        Func::Proj(1, 2),
        Func::Proj(2, 3),
    ];
    let f = *funcs.choose(rng).unwrap();
    let args = (0..f.arity())
        .map(|_| random_ground_term(rng, depth - 1))
        .collect();
    Term::apply(f, args)
}

/// A random knowledge set of up to `max_entries` messages a protocol
/// might plausibly emit.
pub fn random_knowledge(rng: &mut StdRng, max_entries: usize) -> Knowledge {
    let n = rng.gen_range(1..=max_entries);
    let mut k = Knowledge::new();
    for _ in 0..n {
        let depth = rng.gen_range(1..=4);
        let mut t = random_ground_term(rng, depth);
        let mut guard = 0;
        while t.contains_destructor() && guard < 10 {
            t = leftmost_normal_form(&t);
            if t.contains_destructor() {
                t = random_ground_term(rng, depth);
            }
            guard += 1;
        }
        if t.contains_destructor() {
            t = random_name(rng);
        }
        k.push(t).unwrap();
    }
    k
}
