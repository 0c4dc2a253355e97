//! Applied-pi-style process syntax with biprocesses and barriers, plus the
//! `.spv` model DSL.
//!
//! Channels follow the CSP convention `from.to.tag`: every communication is
//! attributable to a (sender, receiver, kind) triple so intruder scenarios
//! can address it. A single model therefore serves both the trace- and the
//! diff-equivalence checkers.

mod check;
mod instantiate;
mod parser;
mod render;

pub use check::{check_wellformed, Diagnostic};
pub use instantiate::{
    instantiate, InstanceParams, ModelTemplate, RoleTemplate, TemplateError, MAX_VOTERS,
    MIN_VOTERS, VOTER_PLACEHOLDER, VOTE_PLACEHOLDER,
};
pub use parser::{parse_model, parse_term_with, ParseError, TermScope};
pub use render::{render_pattern, render_process_flat as render_flat};

use std::fmt;
use std::rc::Rc;

use crate::term::{Side, Subst, Term};

pub type Ident = Rc<str>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Visibility {
    Public,
    Private,
}

/// A declared channel endpoint triple `from.to.tag`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ChannelId {
    pub from: Ident,
    pub to: Ident,
    pub tag: Ident,
}

impl ChannelId {
    pub fn new(from: &str, to: &str, tag: &str) -> ChannelId {
        ChannelId {
            from: from.into(),
            to: to.into(),
            tag: tag.into(),
        }
    }

    pub fn has_endpoint(&self, agent: &str) -> bool {
        self.from.as_ref() == agent || self.to.as_ref() == agent
    }
}

impl fmt::Display for ChannelId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}.{}.{}", self.from, self.to, self.tag)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct ChannelDecl {
    pub id: ChannelId,
    pub visibility: Visibility,
}

/// A channel position in a process: either a declared triple or a name
/// term (a restricted name used as a private channel, the only sanctioned
/// form of channel mobility).
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum ChanExpr {
    Decl(ChannelId),
    Name(Term),
}

impl ChanExpr {
    fn substitute(&self, subst: &Subst) -> ChanExpr {
        match self {
            ChanExpr::Decl(_) => self.clone(),
            ChanExpr::Name(t) => ChanExpr::Name(t.substitute(subst)),
        }
    }

    fn rename_name(&self, old: &str, new: &Term) -> ChanExpr {
        match self {
            ChanExpr::Decl(_) => self.clone(),
            ChanExpr::Name(t) => ChanExpr::Name(t.rename_name(old, new)),
        }
    }
}

impl fmt::Display for ChanExpr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ChanExpr::Decl(id) => write!(f, "{id}"),
            ChanExpr::Name(t) => write!(f, "{t}"),
        }
    }
}

/// An input pattern. `Bind` introduces a variable (a repeated binder in
/// the same pattern demands equal subterms); `Test` requires the payload
/// position to equal a term, written `=x` for bound variables and plainly
/// for declared names.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum Pat {
    Bind(Ident),
    Test(Term),
    App(crate::term::Func, Vec<Pat>),
}

impl Pat {
    pub fn binders(&self, out: &mut Vec<Ident>) {
        match self {
            Pat::Bind(v) => {
                if !out.iter().any(|x| x == v) {
                    out.push(v.clone());
                }
            }
            Pat::Test(_) => {}
            Pat::App(_, args) => {
                for a in args {
                    a.binders(out);
                }
            }
        }
    }

    fn substitute(&self, subst: &Subst) -> Pat {
        match self {
            Pat::Bind(_) => self.clone(),
            Pat::Test(t) => Pat::Test(t.substitute(subst)),
            Pat::App(f, args) => Pat::App(*f, args.iter().map(|a| a.substitute(subst)).collect()),
        }
    }

    fn rename_name(&self, old: &str, new: &Term) -> Pat {
        match self {
            Pat::Bind(_) => self.clone(),
            Pat::Test(t) => Pat::Test(t.rename_name(old, new)),
            Pat::App(f, args) => {
                Pat::App(*f, args.iter().map(|a| a.rename_name(old, new)).collect())
            }
        }
    }

    pub fn project(&self, side: Side) -> Pat {
        match self {
            Pat::Bind(_) => self.clone(),
            Pat::Test(t) => Pat::Test(t.project(side)),
            Pat::App(f, args) => Pat::App(*f, args.iter().map(|a| a.project(side)).collect()),
        }
    }

    pub fn has_choice(&self) -> bool {
        match self {
            Pat::Bind(_) => false,
            Pat::Test(t) => t.has_choice(),
            Pat::App(_, args) => args.iter().any(Pat::has_choice),
        }
    }

    /// Match against a ground, normalized payload, extending `bindings`.
    pub fn matches(&self, payload: &Term, bindings: &mut Subst) -> bool {
        match self {
            Pat::Bind(v) => match bindings.get(v.as_ref()) {
                Some(prev) => prev == payload,
                None => {
                    bindings.insert(v.clone(), payload.clone());
                    true
                }
            },
            Pat::Test(t) => t == payload,
            Pat::App(f, args) => match payload.node() {
                crate::term::TermNode::App(g, pargs) if g == f && pargs.len() == args.len() => args
                    .iter()
                    .zip(pargs.iter())
                    .all(|(p, t)| p.matches(t, bindings)),
                _ => false,
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum Process {
    Stop,
    Output {
        ch: ChanExpr,
        payload: Term,
        then: Rc<Process>,
    },
    Input {
        ch: ChanExpr,
        pattern: Pat,
        then: Rc<Process>,
    },
    Parallel(Vec<Rc<Process>>),
    Restrict {
        name: Ident,
        then: Rc<Process>,
    },
    IfEq {
        lhs: Term,
        rhs: Term,
        then: Rc<Process>,
        els: Rc<Process>,
    },
    Barrier {
        phase: u32,
        then: Rc<Process>,
    },
    Event {
        label: Ident,
        args: Vec<Term>,
        then: Rc<Process>,
    },
}

impl Process {
    pub fn substitute(&self, subst: &Subst) -> Process {
        if subst.is_empty() {
            return self.clone();
        }
        match self {
            Process::Stop => Process::Stop,
            Process::Output { ch, payload, then } => Process::Output {
                ch: ch.substitute(subst),
                payload: payload.substitute(subst),
                then: Rc::new(then.substitute(subst)),
            },
            Process::Input { ch, pattern, then } => {
                // binders shadow: drop captured variables from the substitution
                let mut binders = Vec::new();
                pattern.binders(&mut binders);
                let mut inner = subst.clone();
                for b in &binders {
                    inner.remove(b.as_ref());
                }
                Process::Input {
                    ch: ch.substitute(subst),
                    pattern: pattern.substitute(subst),
                    then: Rc::new(then.substitute(&inner)),
                }
            }
            Process::Parallel(ps) => {
                Process::Parallel(ps.iter().map(|p| Rc::new(p.substitute(subst))).collect())
            }
            Process::Restrict { name, then } => Process::Restrict {
                name: name.clone(),
                then: Rc::new(then.substitute(subst)),
            },
            Process::IfEq {
                lhs,
                rhs,
                then,
                els,
            } => Process::IfEq {
                lhs: lhs.substitute(subst),
                rhs: rhs.substitute(subst),
                then: Rc::new(then.substitute(subst)),
                els: Rc::new(els.substitute(subst)),
            },
            Process::Barrier { phase, then } => Process::Barrier {
                phase: *phase,
                then: Rc::new(then.substitute(subst)),
            },
            Process::Event { label, args, then } => Process::Event {
                label: label.clone(),
                args: args.iter().map(|a| a.substitute(subst)).collect(),
                then: Rc::new(then.substitute(subst)),
            },
        }
    }

    /// Replace occurrences of the restricted name `old` with a fresh name
    /// term; stops at an inner rebinding of the same name.
    pub fn rename_name(&self, old: &str, new: &Term) -> Process {
        match self {
            Process::Stop => Process::Stop,
            Process::Output { ch, payload, then } => Process::Output {
                ch: ch.rename_name(old, new),
                payload: payload.rename_name(old, new),
                then: Rc::new(then.rename_name(old, new)),
            },
            Process::Input { ch, pattern, then } => Process::Input {
                ch: ch.rename_name(old, new),
                pattern: pattern.rename_name(old, new),
                then: Rc::new(then.rename_name(old, new)),
            },
            Process::Parallel(ps) => Process::Parallel(
                ps.iter()
                    .map(|p| Rc::new(p.rename_name(old, new)))
                    .collect(),
            ),
            Process::Restrict { name, then } => {
                if name.as_ref() == old {
                    self.clone()
                } else {
                    Process::Restrict {
                        name: name.clone(),
                        then: Rc::new(then.rename_name(old, new)),
                    }
                }
            }
            Process::IfEq {
                lhs,
                rhs,
                then,
                els,
            } => Process::IfEq {
                lhs: lhs.rename_name(old, new),
                rhs: rhs.rename_name(old, new),
                then: Rc::new(then.rename_name(old, new)),
                els: Rc::new(els.rename_name(old, new)),
            },
            Process::Barrier { phase, then } => Process::Barrier {
                phase: *phase,
                then: Rc::new(then.rename_name(old, new)),
            },
            Process::Event { label, args, then } => Process::Event {
                label: label.clone(),
                args: args.iter().map(|a| a.rename_name(old, new)).collect(),
                then: Rc::new(then.rename_name(old, new)),
            },
        }
    }

    pub fn project(&self, side: Side) -> Process {
        match self {
            Process::Stop => Process::Stop,
            Process::Output { ch, payload, then } => Process::Output {
                ch: ch.clone(),
                payload: payload.project(side),
                then: Rc::new(then.project(side)),
            },
            Process::Input { ch, pattern, then } => Process::Input {
                ch: ch.clone(),
                pattern: pattern.project(side),
                then: Rc::new(then.project(side)),
            },
            Process::Parallel(ps) => {
                Process::Parallel(ps.iter().map(|p| Rc::new(p.project(side))).collect())
            }
            Process::Restrict { name, then } => Process::Restrict {
                name: name.clone(),
                then: Rc::new(then.project(side)),
            },
            Process::IfEq {
                lhs,
                rhs,
                then,
                els,
            } => Process::IfEq {
                lhs: lhs.project(side),
                rhs: rhs.project(side),
                then: Rc::new(then.project(side)),
                els: Rc::new(els.project(side)),
            },
            Process::Barrier { phase, then } => Process::Barrier {
                phase: *phase,
                then: Rc::new(then.project(side)),
            },
            Process::Event { label, args, then } => Process::Event {
                label: label.clone(),
                args: args.iter().map(|a| a.project(side)).collect(),
                then: Rc::new(then.project(side)),
            },
        }
    }

    pub fn has_choice(&self) -> bool {
        match self {
            Process::Stop => false,
            Process::Output { payload, then, .. } => payload.has_choice() || then.has_choice(),
            Process::Input { pattern, then, .. } => pattern.has_choice() || then.has_choice(),
            Process::Parallel(ps) => ps.iter().any(|p| p.has_choice()),
            Process::Restrict { then, .. } => then.has_choice(),
            Process::IfEq {
                lhs,
                rhs,
                then,
                els,
            } => lhs.has_choice() || rhs.has_choice() || then.has_choice() || els.has_choice(),
            Process::Barrier { then, .. } => then.has_choice(),
            Process::Event { args, then, .. } => {
                args.iter().any(Term::has_choice) || then.has_choice()
            }
        }
    }

    /// The set of barrier phases occurring anywhere in the process.
    pub fn barrier_phases(&self, out: &mut Vec<u32>) {
        match self {
            Process::Stop => {}
            Process::Output { then, .. }
            | Process::Input { then, .. }
            | Process::Restrict { then, .. }
            | Process::Event { then, .. } => then.barrier_phases(out),
            Process::Parallel(ps) => {
                for p in ps {
                    p.barrier_phases(out);
                }
            }
            Process::IfEq { then, els, .. } => {
                then.barrier_phases(out);
                els.barrier_phases(out);
            }
            Process::Barrier { phase, then } => {
                if !out.contains(phase) {
                    out.push(*phase);
                }
                then.barrier_phases(out);
            }
        }
    }

    /// Visit every term embedded in the process.
    pub fn visit_terms(&self, f: &mut impl FnMut(&Term)) {
        fn pat_terms(p: &Pat, f: &mut impl FnMut(&Term)) {
            match p {
                Pat::Bind(_) => {}
                Pat::Test(t) => f(t),
                Pat::App(_, args) => {
                    for a in args {
                        pat_terms(a, f);
                    }
                }
            }
        }
        match self {
            Process::Stop => {}
            Process::Output { ch, payload, then } => {
                if let ChanExpr::Name(t) = ch {
                    f(t);
                }
                f(payload);
                then.visit_terms(f);
            }
            Process::Input { ch, pattern, then } => {
                if let ChanExpr::Name(t) = ch {
                    f(t);
                }
                pat_terms(pattern, f);
                then.visit_terms(f);
            }
            Process::Parallel(ps) => {
                for p in ps {
                    p.visit_terms(f);
                }
            }
            Process::Restrict { then, .. } => then.visit_terms(f),
            Process::IfEq {
                lhs,
                rhs,
                then,
                els,
            } => {
                f(lhs);
                f(rhs);
                then.visit_terms(f);
                els.visit_terms(f);
            }
            Process::Barrier { then, .. } => then.visit_terms(f),
            Process::Event { args, then, .. } => {
                for a in args {
                    f(a);
                }
                then.visit_terms(f);
            }
        }
    }

    /// Rewrite every term embedded in the process.
    pub fn map_terms(&self, f: &mut impl FnMut(&Term) -> Term) -> Process {
        fn pat_map(p: &Pat, f: &mut impl FnMut(&Term) -> Term) -> Pat {
            match p {
                Pat::Bind(v) => Pat::Bind(v.clone()),
                Pat::Test(t) => Pat::Test(f(t)),
                Pat::App(g, args) => Pat::App(*g, args.iter().map(|a| pat_map(a, f)).collect()),
            }
        }
        match self {
            Process::Stop => Process::Stop,
            Process::Output { ch, payload, then } => Process::Output {
                ch: match ch {
                    ChanExpr::Name(t) => ChanExpr::Name(f(t)),
                    d => d.clone(),
                },
                payload: f(payload),
                then: Rc::new(then.map_terms(f)),
            },
            Process::Input { ch, pattern, then } => Process::Input {
                ch: match ch {
                    ChanExpr::Name(t) => ChanExpr::Name(f(t)),
                    d => d.clone(),
                },
                pattern: pat_map(pattern, f),
                then: Rc::new(then.map_terms(f)),
            },
            Process::Parallel(ps) => {
                Process::Parallel(ps.iter().map(|p| Rc::new(p.map_terms(f))).collect())
            }
            Process::Restrict { name, then } => Process::Restrict {
                name: name.clone(),
                then: Rc::new(then.map_terms(f)),
            },
            Process::IfEq {
                lhs,
                rhs,
                then,
                els,
            } => Process::IfEq {
                lhs: f(lhs),
                rhs: f(rhs),
                then: Rc::new(then.map_terms(f)),
                els: Rc::new(els.map_terms(f)),
            },
            Process::Barrier { phase, then } => Process::Barrier {
                phase: *phase,
                then: Rc::new(then.map_terms(f)),
            },
            Process::Event { label, args, then } => Process::Event {
                label: label.clone(),
                args: args.iter().map(&mut *f).collect(),
                then: Rc::new(then.map_terms(f)),
            },
        }
    }
}

/// A parsed, fully expanded model: declarations plus the top-level
/// (bi)process. `def` templates and `let` bindings are parse-time sugar
/// and do not survive into the model.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Model {
    pub free_names: Vec<Ident>,
    pub private_names: Vec<Ident>,
    pub channels: Vec<ChannelDecl>,
    pub process: Process,
}

impl Model {
    pub fn channel_visibility(&self, id: &ChannelId) -> Option<Visibility> {
        self.channels
            .iter()
            .find(|c| c.id == *id)
            .map(|c| c.visibility)
    }

    /// Public names usable as intruder recipe leaves.
    pub fn public_names(&self) -> Vec<Ident> {
        self.free_names.clone()
    }

    pub fn has_choice(&self) -> bool {
        self.process.has_choice()
    }

    pub fn project(&self, side: Side) -> Model {
        Model {
            free_names: self.free_names.clone(),
            private_names: self.private_names.clone(),
            channels: self.channels.clone(),
            process: self.process.project(side),
        }
    }

    /// Canonical textual form; parsing it back yields an equal model.
    pub fn render(&self) -> String {
        render::render_model(self)
    }
}
