//! Symbolic terms over the protocol signature and the convergent rewrite
//! system induced by its equations.
//!
//! The signature is fixed: `ok/0`, `pk/1`, `hash/1`, `sign/2`, `dec/2`,
//! `penc/3`, `checksign/3`, `checkzkp/1`, `zkp/4`, plus an ambient family of
//! tuple constructors with their projection destructors. `zkp` is 4-ary:
//! the verification equation applies it to four arguments, and a ternary
//! `zkp` would make that equation unusable.
//!
//! Rewriting is innermost to fixpoint. The system is convergent, so the
//! strategy does not affect normal forms. Irreducible destructor
//! applications (say `dec` under the wrong key) are legal normal forms:
//! symbolic decryption fails silently and conditionals observe the failure.

use std::collections::BTreeMap;
use std::fmt;
use std::rc::Rc;

use thiserror::Error;

/// Whether a symbol can appear at the root of a rewrite left-hand side.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum SymbolKind {
    Constructor,
    Destructor,
}

/// Function symbols. `Tuple(n)` and `Proj(i, n)` model the ambient tupling
/// the protocol messages use; they are not part of the declared signature.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Func {
    Ok,
    Pk,
    Hash,
    Sign,
    Dec,
    Penc,
    Checksign,
    Checkzkp,
    Zkp,
    /// n-ary tuple constructor, 2 <= n <= 8.
    Tuple(u8),
    /// 1-based projection of component `i` out of an n-tuple.
    Proj(u8, u8),
}

pub const MAX_TUPLE_ARITY: u8 = 8;

impl Func {
    pub fn arity(self) -> usize {
        match self {
            Func::Ok => 0,
            Func::Pk | Func::Hash | Func::Checkzkp => 1,
            Func::Sign | Func::Dec => 2,
            Func::Penc | Func::Checksign => 3,
            Func::Zkp => 4,
            Func::Tuple(n) => n as usize,
            Func::Proj(_, _) => 1,
        }
    }

    pub fn kind(self) -> SymbolKind {
        match self {
            Func::Dec | Func::Checksign | Func::Checkzkp | Func::Proj(_, _) => {
                SymbolKind::Destructor
            }
            _ => SymbolKind::Constructor,
        }
    }

    pub fn name(self) -> String {
        match self {
            Func::Ok => "ok".into(),
            Func::Pk => "pk".into(),
            Func::Hash => "hash".into(),
            Func::Sign => "sign".into(),
            Func::Dec => "dec".into(),
            Func::Penc => "penc".into(),
            Func::Checksign => "checksign".into(),
            Func::Checkzkp => "checkzkp".into(),
            Func::Zkp => "zkp".into(),
            Func::Tuple(n) => format!("tuple{n}"),
            Func::Proj(i, n) => format!("proj{i}_{n}"),
        }
    }

    /// Look up a symbol of the declared signature (plus projections) by its
    /// textual name. Tuples have no textual head; they are written `(a,b)`.
    pub fn by_name(name: &str) -> Option<Func> {
        match name {
            "ok" => Some(Func::Ok),
            "pk" => Some(Func::Pk),
            "hash" => Some(Func::Hash),
            "sign" => Some(Func::Sign),
            "dec" => Some(Func::Dec),
            "penc" => Some(Func::Penc),
            "checksign" => Some(Func::Checksign),
            "checkzkp" => Some(Func::Checkzkp),
            "zkp" => Some(Func::Zkp),
            _ => {
                let rest = name.strip_prefix("proj")?;
                let (i, n) = rest.split_once('_')?;
                let i: u8 = i.parse().ok()?;
                let n: u8 = n.parse().ok()?;
                if (1..=n).contains(&i) && (2..=MAX_TUPLE_ARITY).contains(&n) {
                    Some(Func::Proj(i, n))
                } else {
                    None
                }
            }
        }
    }

    /// The declared signature, in canonical enumeration order.
    pub fn signature() -> &'static [Func] {
        &[
            Func::Ok,
            Func::Pk,
            Func::Hash,
            Func::Sign,
            Func::Dec,
            Func::Penc,
            Func::Checksign,
            Func::Checkzkp,
            Func::Zkp,
        ]
    }
}

impl fmt::Display for Func {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.name())
    }
}

/// Projection side of a `choice` term or biprocess.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Side {
    Left,
    Right,
}

impl Side {
    pub const BOTH: [Side; 2] = [Side::Left, Side::Right];
}

impl fmt::Display for Side {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Side::Left => write!(f, "left"),
            Side::Right => write!(f, "right"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum TermNode {
    /// A free or restricted name. Public names are legal intruder recipe
    /// leaves; private names never are.
    Name {
        id: Rc<str>,
        public: bool,
    },
    /// A pattern variable. Only patterns contain variables; everything that
    /// flows through execution is ground.
    Var(Rc<str>),
    App(Func, Vec<Term>),
    /// A biterm alternative: `choice[l,r]`. Never nests directly inside
    /// another `Choice`.
    Choice(Term, Term),
}

#[derive(Debug)]
struct TermData {
    node: TermNode,
    hash: u64,
    ground: bool,
    has_choice: bool,
    size: u32,
}

/// An immutable, cheaply clonable term with a cached structural hash.
#[derive(Clone)]
pub struct Term(Rc<TermData>);

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum TermError {
    #[error("arity mismatch for {symbol}: expected {expected} argument(s), got {actual}")]
    Arity {
        symbol: String,
        expected: usize,
        actual: usize,
    },
}

fn fnv1a(seed: u64, bytes: &[u8]) -> u64 {
    let mut h = seed;
    for &b in bytes {
        h ^= b as u64;
        h = h.wrapping_mul(0x100000001b3);
    }
    h
}

const FNV_SEED: u64 = 0xcbf29ce484222325;

impl Term {
    fn build(node: TermNode) -> Term {
        let (hash, ground, has_choice, size) = match &node {
            TermNode::Name { id, public } => {
                let mut h = fnv1a(FNV_SEED, b"name");
                h = fnv1a(h, id.as_bytes());
                h = fnv1a(h, &[*public as u8]);
                (h, true, false, 1)
            }
            TermNode::Var(id) => {
                let h = fnv1a(fnv1a(FNV_SEED, b"var"), id.as_bytes());
                (h, false, false, 1)
            }
            TermNode::App(f, args) => {
                let mut h = fnv1a(FNV_SEED, b"app");
                h = fnv1a(h, f.name().as_bytes());
                let mut ground = true;
                let mut has_choice = false;
                let mut size = 1u32;
                for a in args {
                    h = fnv1a(h, &a.hash().to_le_bytes());
                    ground &= a.is_ground();
                    has_choice |= a.has_choice();
                    size += a.size();
                }
                (h, ground, has_choice, size)
            }
            TermNode::Choice(l, r) => {
                let mut h = fnv1a(FNV_SEED, b"choice");
                h = fnv1a(h, &l.hash().to_le_bytes());
                h = fnv1a(h, &r.hash().to_le_bytes());
                (
                    h,
                    l.is_ground() && r.is_ground(),
                    true,
                    1 + l.size() + r.size(),
                )
            }
        };
        Term(Rc::new(TermData {
            node,
            hash,
            ground,
            has_choice,
            size,
        }))
    }

    pub fn name(id: impl Into<Rc<str>>, public: bool) -> Term {
        Term::build(TermNode::Name {
            id: id.into(),
            public,
        })
    }

    pub fn var(id: impl Into<Rc<str>>) -> Term {
        Term::build(TermNode::Var(id.into()))
    }

    /// Apply a symbol to arguments, checking the arity. No normalization.
    pub fn app(f: Func, args: Vec<Term>) -> Result<Term, TermError> {
        if args.len() != f.arity() {
            return Err(TermError::Arity {
                symbol: f.name(),
                expected: f.arity(),
                actual: args.len(),
            });
        }
        Ok(Term::build(TermNode::App(f, args)))
    }

    /// Like [`Term::app`] but panics on arity mismatch; for internal
    /// construction where the arity is statically right.
    pub fn apply(f: Func, args: Vec<Term>) -> Term {
        Term::app(f, args).expect("arity checked by caller")
    }

    pub fn tuple(args: Vec<Term>) -> Term {
        assert!(
            args.len() >= 2 && args.len() <= MAX_TUPLE_ARITY as usize,
            "tuple arity out of range"
        );
        Term::apply(Func::Tuple(args.len() as u8), args)
    }

    pub fn ok() -> Term {
        Term::apply(Func::Ok, vec![])
    }

    /// Construct `choice[l,r]`, zipping down shared structure so `Choice`
    /// nodes sit exactly at the positions where the sides disagree. Nested
    /// choices in the inputs are resolved by projection, so the result
    /// never has a `Choice` directly under another.
    pub fn choice(l: Term, r: Term) -> Term {
        let l = l.project(Side::Left);
        let r = r.project(Side::Right);
        Term::zip_choice(&l, &r)
    }

    fn zip_choice(l: &Term, r: &Term) -> Term {
        if l == r {
            return l.clone();
        }
        if let (TermNode::App(fl, al), TermNode::App(fr, ar)) = (l.node(), r.node()) {
            if fl == fr && al.len() == ar.len() {
                let args = al
                    .iter()
                    .zip(ar.iter())
                    .map(|(a, b)| Term::zip_choice(a, b))
                    .collect();
                return Term::build(TermNode::App(*fl, args));
            }
        }
        Term::build(TermNode::Choice(l.clone(), r.clone()))
    }

    pub fn node(&self) -> &TermNode {
        &self.0.node
    }

    pub fn hash(&self) -> u64 {
        self.0.hash
    }

    pub fn is_ground(&self) -> bool {
        self.0.ground
    }

    pub fn has_choice(&self) -> bool {
        self.0.has_choice
    }

    /// Node count, counting every name, variable and application node.
    pub fn size(&self) -> u32 {
        self.0.size
    }

    pub fn is_public_name(&self) -> bool {
        matches!(self.node(), TermNode::Name { public: true, .. })
    }

    /// Replace every `choice[l,r]` by the chosen side, recursively.
    pub fn project(&self, side: Side) -> Term {
        if !self.has_choice() {
            return self.clone();
        }
        match self.node() {
            TermNode::Choice(l, r) => match side {
                Side::Left => l.project(side),
                Side::Right => r.project(side),
            },
            TermNode::App(f, args) => Term::build(TermNode::App(
                *f,
                args.iter().map(|a| a.project(side)).collect(),
            )),
            _ => self.clone(),
        }
    }

    /// True if any subterm after the given traversal is a destructor
    /// application (a stuck computation).
    pub fn contains_destructor(&self) -> bool {
        match self.node() {
            TermNode::App(f, args) => {
                f.kind() == SymbolKind::Destructor || args.iter().any(|a| a.contains_destructor())
            }
            TermNode::Choice(l, r) => l.contains_destructor() || r.contains_destructor(),
            _ => false,
        }
    }

    /// True if `sub` occurs in `self` (including `self` itself).
    pub fn contains(&self, sub: &Term) -> bool {
        if self == sub {
            return true;
        }
        match self.node() {
            TermNode::App(_, args) => args.iter().any(|a| a.contains(sub)),
            TermNode::Choice(l, r) => l.contains(sub) || r.contains(sub),
            _ => false,
        }
    }

    /// Collect the distinct `Choice` subterms in traversal order.
    pub fn choice_subterms(&self, out: &mut Vec<Term>) {
        if !self.has_choice() {
            return;
        }
        match self.node() {
            TermNode::Choice(_, _) => {
                if !out.contains(self) {
                    out.push(self.clone());
                }
            }
            TermNode::App(_, args) => {
                for a in args {
                    a.choice_subterms(out);
                }
            }
            _ => {}
        }
    }

    /// Replace every occurrence of `from` (an exact subterm) by `to`.
    pub fn replace(&self, from: &Term, to: &Term) -> Term {
        if self == from {
            return to.clone();
        }
        match self.node() {
            TermNode::App(f, args) => Term::build(TermNode::App(
                *f,
                args.iter().map(|a| a.replace(from, to)).collect(),
            )),
            TermNode::Choice(l, r) => Term::choice(l.replace(from, to), r.replace(from, to)),
            _ => self.clone(),
        }
    }

    /// Rename a restricted name: replace `Name(old)` by `Name(new)`
    /// (both private), used when a restriction allocates a fresh name.
    pub fn rename_name(&self, old: &str, new: &Term) -> Term {
        match self.node() {
            TermNode::Name { id, .. } if id.as_ref() == old => new.clone(),
            TermNode::App(f, args) => Term::build(TermNode::App(
                *f,
                args.iter().map(|a| a.rename_name(old, new)).collect(),
            )),
            TermNode::Choice(l, r) => Term::build(TermNode::Choice(
                l.rename_name(old, new),
                r.rename_name(old, new),
            )),
            _ => self.clone(),
        }
    }

    /// Rename several names in one pass.
    pub fn rename_names(&self, map: &BTreeMap<Rc<str>, Term>) -> Term {
        match self.node() {
            TermNode::Name { id, .. } => match map.get(id) {
                Some(t) => t.clone(),
                None => self.clone(),
            },
            TermNode::App(f, args) => Term::build(TermNode::App(
                *f,
                args.iter().map(|a| a.rename_names(map)).collect(),
            )),
            TermNode::Choice(l, r) => {
                Term::build(TermNode::Choice(l.rename_names(map), r.rename_names(map)))
            }
            _ => self.clone(),
        }
    }

    /// Normalize to the unique normal form under the oriented equations,
    /// innermost-first to fixpoint. The two sides of a biterm normalize
    /// independently.
    pub fn normalize(&self) -> Term {
        if self.has_choice() {
            let l = self.project(Side::Left).normalize();
            let r = self.project(Side::Right).normalize();
            return Term::choice(l, r);
        }
        self.normalize_plain()
    }

    fn normalize_plain(&self) -> Term {
        match self.node() {
            TermNode::App(f, args) => {
                let args: Vec<Term> = args.iter().map(|a| a.normalize_plain()).collect();
                let mut t = Term::build(TermNode::App(*f, args));
                loop {
                    match root_rewrite(&t) {
                        // A rewrite result is assembled from already-normal
                        // subterms, but its own root may expose a fresh redex.
                        Some(next) => t = next,
                        None => return t,
                    }
                }
            }
            _ => self.clone(),
        }
    }

    /// Collect the free variables in traversal order.
    pub fn vars(&self, out: &mut Vec<Rc<str>>) {
        match self.node() {
            TermNode::Var(v) => {
                if !out.iter().any(|x| x == v) {
                    out.push(v.clone());
                }
            }
            TermNode::App(_, args) => {
                for a in args {
                    a.vars(out);
                }
            }
            TermNode::Choice(l, r) => {
                l.vars(out);
                r.vars(out);
            }
            _ => {}
        }
    }

    /// Apply a substitution to the variables of `self`.
    pub fn substitute(&self, subst: &Subst) -> Term {
        if self.is_ground() {
            return self.clone();
        }
        match self.node() {
            TermNode::Var(v) => subst
                .get(v.as_ref())
                .cloned()
                .unwrap_or_else(|| self.clone()),
            TermNode::App(f, args) => Term::build(TermNode::App(
                *f,
                args.iter().map(|a| a.substitute(subst)).collect(),
            )),
            TermNode::Choice(l, r) => Term::choice(l.substitute(subst), r.substitute(subst)),
            _ => self.clone(),
        }
    }
}

/// Attempt one rewrite at the root; arguments are assumed normal.
fn root_rewrite(t: &Term) -> Option<Term> {
    let TermNode::App(f, args) = t.node() else {
        return None;
    };
    match f {
        // dec(penc(m, r, pk(sk)), sk) = m
        Func::Dec => {
            if let TermNode::App(Func::Penc, pargs) = args[0].node() {
                if let TermNode::App(Func::Pk, kargs) = pargs[2].node() {
                    if kargs[0] == args[1] {
                        return Some(pargs[0].clone());
                    }
                }
            }
            None
        }
        // checksign(sign(sk, m), m, pk(sk)) = ok
        Func::Checksign => {
            if let TermNode::App(Func::Sign, sargs) = args[0].node() {
                if sargs[1] == args[1] {
                    if let TermNode::App(Func::Pk, kargs) = args[2].node() {
                        if kargs[0] == sargs[0] {
                            return Some(Term::ok());
                        }
                    }
                }
            }
            None
        }
        // checkzkp(zkp(pk(sk), r, m, penc(m, r, pk(sk)))) = ok
        Func::Checkzkp => {
            if let TermNode::App(Func::Zkp, zargs) = args[0].node() {
                let (key, rnd, msg, cipher) = (&zargs[0], &zargs[1], &zargs[2], &zargs[3]);
                if matches!(key.node(), TermNode::App(Func::Pk, _)) {
                    let expected =
                        Term::apply(Func::Penc, vec![msg.clone(), rnd.clone(), key.clone()]);
                    if *cipher == expected {
                        return Some(Term::ok());
                    }
                }
            }
            None
        }
        Func::Proj(i, n) => {
            if let TermNode::App(Func::Tuple(m), targs) = args[0].node() {
                if m == n {
                    return Some(targs[(*i - 1) as usize].clone());
                }
            }
            None
        }
        _ => None,
    }
}

impl PartialEq for Term {
    fn eq(&self, other: &Self) -> bool {
        Rc::ptr_eq(&self.0, &other.0)
            || (self.0.hash == other.0.hash && self.0.node == other.0.node)
    }
}

impl Eq for Term {}

impl std::hash::Hash for Term {
    fn hash<H: std::hash::Hasher>(&self, state: &mut H) {
        state.write_u64(self.0.hash);
    }
}

impl fmt::Display for Term {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.node() {
            TermNode::Name { id, .. } => write!(f, "{id}"),
            TermNode::Var(v) => write!(f, "{v}"),
            TermNode::App(Func::Ok, _) => write!(f, "ok"),
            TermNode::App(Func::Tuple(_), args) => {
                write!(f, "(")?;
                for (i, a) in args.iter().enumerate() {
                    if i > 0 {
                        write!(f, ",")?;
                    }
                    write!(f, "{a}")?;
                }
                write!(f, ")")
            }
            TermNode::App(g, args) => {
                write!(f, "{g}(")?;
                for (i, a) in args.iter().enumerate() {
                    if i > 0 {
                        write!(f, ",")?;
                    }
                    write!(f, "{a}")?;
                }
                write!(f, ")")
            }
            TermNode::Choice(l, r) => write!(f, "choice[{l},{r}]"),
        }
    }
}

impl fmt::Debug for Term {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{self}")
    }
}

/// A substitution from variable names to terms, ordered for determinism.
pub type Subst = BTreeMap<Rc<str>, Term>;

/// Syntactic first-order matching: find the unique substitution with
/// `pattern . subst == subject`, or fail. Nonlinear patterns require the
/// repeated variable to bind equal subterms. No unification modulo the
/// equations is performed.
pub fn match_term(pattern: &Term, subject: &Term) -> Option<Subst> {
    let mut subst = Subst::new();
    if match_into(pattern, subject, &mut subst) {
        Some(subst)
    } else {
        None
    }
}

fn match_into(pattern: &Term, subject: &Term, subst: &mut Subst) -> bool {
    match pattern.node() {
        TermNode::Var(v) => match subst.get(v.as_ref()) {
            Some(bound) => bound == subject,
            None => {
                subst.insert(v.clone(), subject.clone());
                true
            }
        },
        TermNode::Name { .. } => pattern == subject,
        TermNode::App(f, pargs) => match subject.node() {
            TermNode::App(g, sargs) if f == g && pargs.len() == sargs.len() => pargs
                .iter()
                .zip(sargs.iter())
                .all(|(p, s)| match_into(p, s, subst)),
            _ => false,
        },
        TermNode::Choice(_, _) => pattern == subject,
    }
}

/// An oriented rewrite rule; left-hand side roots are destructors.
#[derive(Debug, Clone)]
pub struct RewriteRule {
    pub lhs: Term,
    pub rhs: Term,
}

/// The three built-in rules, the oriented forms of the signature equations.
/// Tuple projections are handled internally and are not part of this set.
pub fn builtin_rules() -> Vec<RewriteRule> {
    let v = |s: &str| Term::var(s);
    let pk_sk = Term::apply(Func::Pk, vec![v("sk")]);
    let penc = Term::apply(Func::Penc, vec![v("m"), v("r"), pk_sk.clone()]);
    vec![
        RewriteRule {
            lhs: Term::apply(Func::Dec, vec![penc.clone(), v("sk")]),
            rhs: v("m"),
        },
        RewriteRule {
            lhs: Term::apply(
                Func::Checksign,
                vec![
                    Term::apply(Func::Sign, vec![v("sk"), v("m")]),
                    v("m"),
                    pk_sk.clone(),
                ],
            ),
            rhs: Term::ok(),
        },
        RewriteRule {
            lhs: Term::apply(
                Func::Checkzkp,
                vec![Term::apply(Func::Zkp, vec![pk_sk, v("r"), v("m"), penc])],
            ),
            rhs: Term::ok(),
        },
    ]
}

#[cfg(test)]
mod tests {
    use super::*;

    fn nm(s: &str) -> Term {
        Term::name(s, false)
    }

    fn penc_of(m: &Term, r: &Term, k: &Term) -> Term {
        Term::apply(Func::Penc, vec![m.clone(), r.clone(), k.clone()])
    }

    #[test]
    fn make_term_checks_arity() {
        let sk = nm("sk");
        assert!(Term::app(Func::Pk, vec![sk.clone()]).is_ok());
        let err = Term::app(Func::Pk, vec![sk.clone(), sk]).unwrap_err();
        assert_eq!(
            err.to_string(),
            "arity mismatch for pk: expected 1 argument(s), got 2"
        );
    }

    #[test]
    fn e1_decryption() {
        let (m, r, sk) = (nm("m"), nm("r"), nm("sk"));
        let pk = Term::apply(Func::Pk, vec![sk.clone()]);
        let enc = penc_of(&m, &r, &pk);
        let dec = Term::apply(Func::Dec, vec![enc, sk]);
        assert_eq!(dec.normalize(), m);
    }

    #[test]
    fn e2_signature_check() {
        let (m, sk) = (nm("m"), nm("sk"));
        let pk = Term::apply(Func::Pk, vec![sk.clone()]);
        let sig = Term::apply(Func::Sign, vec![sk, m.clone()]);
        let chk = Term::apply(Func::Checksign, vec![sig, m, pk]);
        assert_eq!(chk.normalize(), Term::ok());
    }

    #[test]
    fn e3_zkp_check() {
        let (m, r, sk) = (nm("m"), nm("r"), nm("sk"));
        let pk = Term::apply(Func::Pk, vec![sk]);
        let enc = penc_of(&m, &r, &pk);
        let proof = Term::apply(Func::Zkp, vec![pk, r, m, enc]);
        let chk = Term::apply(Func::Checkzkp, vec![proof]);
        assert_eq!(chk.normalize(), Term::ok());
    }

    #[test]
    fn stuck_destructors_stay_put() {
        let (m, k) = (nm("m"), nm("k"));
        let h = Term::apply(Func::Hash, vec![m.clone()]);
        assert_eq!(h.normalize(), h);
        let stuck = Term::apply(Func::Dec, vec![h, k]);
        assert_eq!(stuck.normalize(), stuck);
        assert!(stuck.contains_destructor());
    }

    #[test]
    fn wrong_key_does_not_decrypt() {
        let (m, r, sk, other) = (nm("m"), nm("r"), nm("sk"), nm("other"));
        let pk = Term::apply(Func::Pk, vec![sk]);
        let enc = penc_of(&m, &r, &pk);
        let dec = Term::apply(Func::Dec, vec![enc.clone(), other]);
        let nf = dec.normalize();
        assert_ne!(nf, m);
        assert!(nf.contains_destructor());
        assert_eq!(nf, dec);
        let _ = enc;
    }

    #[test]
    fn match_decomposes_penc() {
        let (m, r, sk) = (nm("m"), nm("r"), nm("sk"));
        let pk = Term::apply(Func::Pk, vec![sk]);
        let subject = penc_of(&m, &r, &pk);
        let pat = Term::apply(
            Func::Penc,
            vec![Term::var("x"), Term::var("y"), Term::var("z")],
        );
        let subst = match_term(&pat, &subject).unwrap();
        assert_eq!(subst["x"], m);
        assert_eq!(subst["y"], r);
        assert_eq!(subst["z"], pk);
    }

    #[test]
    fn match_fails_on_head_mismatch() {
        let m = nm("m");
        let pat = Term::apply(Func::Pk, vec![Term::var("x")]);
        let subject = Term::apply(Func::Hash, vec![m]);
        assert!(match_term(&pat, &subject).is_none());
    }

    #[test]
    fn nonlinear_match_requires_consistency() {
        let (k, m) = (nm("k"), nm("m"));
        let pat = Term::apply(Func::Sign, vec![Term::var("x"), Term::var("x")]);
        let bad = Term::apply(Func::Sign, vec![k.clone(), m]);
        assert!(match_term(&pat, &bad).is_none());
        let good = Term::apply(Func::Sign, vec![k.clone(), k]);
        assert!(match_term(&pat, &good).is_some());
    }

    #[test]
    fn projection_examples() {
        let (a, b) = (Term::name("a", true), Term::name("b", true));
        let c = Term::choice(a.clone(), b.clone());
        assert_eq!(c.project(Side::Left), a);
        assert_eq!(c.project(Side::Right), b);

        let (r, sk) = (nm("r"), nm("sk"));
        let pk = Term::apply(Func::Pk, vec![sk]);
        let enc = penc_of(&c, &r, &pk);
        assert_eq!(enc.project(Side::Right), penc_of(&b, &r, &pk));

        let h = Term::apply(Func::Hash, vec![nm("m")]);
        assert_eq!(h.project(Side::Left), h);
    }

    #[test]
    fn choice_zips_to_divergence_points() {
        let (a, b, r) = (Term::name("a", true), Term::name("b", true), nm("r"));
        let pk = Term::apply(Func::Pk, vec![nm("sk")]);
        let left = penc_of(&a, &r, &pk);
        let right = penc_of(&b, &r, &pk);
        let zipped = Term::choice(left, right);
        // choice is pushed inward onto the plaintext position
        assert_eq!(zipped, penc_of(&Term::choice(a, b), &r, &pk));
        // degenerate: equal sides collapse
        let same = Term::choice(pk.clone(), pk.clone());
        assert!(!same.has_choice());
    }

    #[test]
    fn choice_never_nests() {
        let (a, b, c) = (nm("a"), nm("b"), nm("c"));
        let inner = Term::choice(a.clone(), b);
        let outer = Term::choice(inner, c.clone());
        // left projection of the nested choice resolves to `a`
        assert_eq!(outer, Term::choice(a, c));
    }

    #[test]
    fn normalization_commutes_with_projection_per_side() {
        let (a, b, r, sk) = (nm("a"), nm("b"), nm("r"), nm("sk"));
        let pk = Term::apply(Func::Pk, vec![sk.clone()]);
        let enc = penc_of(&Term::choice(a, b), &r, &pk);
        let dec = Term::apply(Func::Dec, vec![enc, sk]);
        for side in Side::BOTH {
            assert_eq!(dec.normalize().project(side), dec.project(side).normalize());
        }
    }

    #[test]
    fn builtin_rules_are_three_destructor_rooted() {
        let rules = builtin_rules();
        assert_eq!(rules.len(), 3);
        for rule in &rules {
            let TermNode::App(f, _) = rule.lhs.node() else {
                panic!("lhs must be an application");
            };
            assert_eq!(f.kind(), SymbolKind::Destructor);
            let mut lvars = Vec::new();
            let mut rvars = Vec::new();
            rule.lhs.vars(&mut lvars);
            rule.rhs.vars(&mut rvars);
            for v in rvars {
                assert!(lvars.contains(&v));
            }
        }
    }

    #[test]
    fn generic_rule_matching_agrees_with_root_rewrite() {
        let (m, r, sk) = (nm("m"), nm("r"), nm("sk"));
        let pk = Term::apply(Func::Pk, vec![sk.clone()]);
        let enc = penc_of(&m, &r, &pk);
        let dec = Term::apply(Func::Dec, vec![enc, sk]);
        let rule = &builtin_rules()[0];
        let subst = match_term(&rule.lhs, &dec).unwrap();
        assert_eq!(rule.rhs.substitute(&subst), dec.normalize());
    }
}
