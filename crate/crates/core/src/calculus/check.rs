//! Structural well-formedness checking for parsed or programmatically
//! built models. A model that passes with no diagnostics executes without
//! well-formedness faults.

use std::collections::BTreeSet;
use std::fmt;

use super::{ChanExpr, Ident, Model, Pat, Process};
use crate::term::{Term, TermNode};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Diagnostic {
    /// Traversal path to the offending node, e.g. `process.par[2].in`.
    pub path: String,
    pub message: String,
}

impl fmt::Display for Diagnostic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.path, self.message)
    }
}

struct Checker<'a> {
    model: &'a Model,
    diags: Vec<Diagnostic>,
}

pub fn check_wellformed(m: &Model) -> Vec<Diagnostic> {
    let mut c = Checker {
        model: m,
        diags: Vec::new(),
    };
    let mut seen: BTreeSet<&super::ChannelId> = BTreeSet::new();
    for decl in &m.channels {
        if !seen.insert(&decl.id) {
            c.diags.push(Diagnostic {
                path: "channels".into(),
                message: format!("channel {} declared more than once", decl.id),
            });
        }
    }
    for n in &m.free_names {
        if m.private_names.contains(n) {
            c.diags.push(Diagnostic {
                path: "declarations".into(),
                message: format!("`{n}` declared both free and private"),
            });
        }
    }
    let mut scope = Scope {
        vars: Vec::new(),
        names: Vec::new(),
    };
    c.walk(&m.process, "process".into(), 0, &mut scope);
    c.diags
}

struct Scope {
    vars: Vec<Ident>,
    names: Vec<Ident>,
}

impl<'a> Checker<'a> {
    fn term_ok(&mut self, t: &Term, path: &str, scope: &Scope) {
        match t.node() {
            TermNode::Var(v) => {
                if !scope.vars.iter().any(|x| x == v) {
                    self.diags.push(Diagnostic {
                        path: path.into(),
                        message: format!("unbound variable `{v}`"),
                    });
                }
            }
            TermNode::Name { id, .. } => {
                let declared = self.model.free_names.iter().any(|n| n == id)
                    || self.model.private_names.iter().any(|n| n == id)
                    || scope.names.iter().any(|n| n == id);
                if !declared {
                    self.diags.push(Diagnostic {
                        path: path.into(),
                        message: format!("undeclared name `{id}`"),
                    });
                }
            }
            TermNode::App(_, args) => {
                for a in args {
                    self.term_ok(a, path, scope);
                }
            }
            TermNode::Choice(l, r) => {
                if matches!(l.node(), TermNode::Choice(_, _))
                    || matches!(r.node(), TermNode::Choice(_, _))
                {
                    self.diags.push(Diagnostic {
                        path: path.into(),
                        message: "nested choice".into(),
                    });
                }
                self.term_ok(l, path, scope);
                self.term_ok(r, path, scope);
            }
        }
    }

    fn chan_ok(&mut self, ch: &ChanExpr, path: &str, scope: &Scope) {
        match ch {
            ChanExpr::Decl(id) => {
                if self.model.channel_visibility(id).is_none() {
                    self.diags.push(Diagnostic {
                        path: path.into(),
                        message: format!("undeclared channel {id}"),
                    });
                }
            }
            ChanExpr::Name(t) => {
                match t.node() {
                    TermNode::Name { public, .. } => {
                        if *public {
                            self.diags.push(Diagnostic {
                                path: path.into(),
                                message: format!(
                                    "public name `{t}` used as a channel; only restricted names may carry messages"
                                ),
                            });
                        }
                    }
                    TermNode::Var(_) => {}
                    _ => {
                        self.diags.push(Diagnostic {
                            path: path.into(),
                            message: format!("`{t}` is not a name and cannot be a channel"),
                        });
                    }
                }
                self.term_ok(t, path, scope);
            }
        }
    }

    fn pat_ok(&mut self, p: &Pat, path: &str, scope: &Scope) {
        match p {
            Pat::Bind(v) => {
                let shadows = self.model.free_names.iter().any(|n| n == v)
                    || self.model.private_names.iter().any(|n| n == v)
                    || scope.names.iter().any(|n| n == v);
                if shadows {
                    self.diags.push(Diagnostic {
                        path: path.into(),
                        message: format!("pattern binder `{v}` shadows a declared name"),
                    });
                }
            }
            Pat::Test(t) => {
                if t.has_choice() {
                    self.diags.push(Diagnostic {
                        path: path.into(),
                        message: "choice is not allowed in patterns".into(),
                    });
                }
                self.term_ok(t, path, scope);
            }
            Pat::App(_, args) => {
                for a in args {
                    self.pat_ok(a, path, scope);
                }
            }
        }
    }

    fn walk(&mut self, p: &Process, path: String, min_phase: u32, scope: &mut Scope) {
        match p {
            Process::Stop => {}
            Process::Output { ch, payload, then } => {
                let here = format!("{path}.out");
                self.chan_ok(ch, &here, scope);
                self.term_ok(payload, &here, scope);
                self.walk(then, here, min_phase, scope);
            }
            Process::Input { ch, pattern, then } => {
                let here = format!("{path}.in");
                self.chan_ok(ch, &here, scope);
                self.pat_ok(pattern, &here, scope);
                let mut binders = Vec::new();
                pattern.binders(&mut binders);
                let depth = scope.vars.len();
                scope.vars.extend(binders);
                self.walk(then, here, min_phase, scope);
                scope.vars.truncate(depth);
            }
            Process::Parallel(ps) => {
                for (i, q) in ps.iter().enumerate() {
                    self.walk(q, format!("{path}.par[{i}]"), min_phase, scope);
                }
            }
            Process::Restrict { name, then } => {
                let here = format!("{path}.new");
                scope.names.push(name.clone());
                self.walk(then, here, min_phase, scope);
                scope.names.pop();
            }
            Process::IfEq {
                lhs,
                rhs,
                then,
                els,
            } => {
                let here = format!("{path}.if");
                self.term_ok(lhs, &here, scope);
                self.term_ok(rhs, &here, scope);
                self.walk(then, format!("{here}.then"), min_phase, scope);
                self.walk(els, format!("{here}.else"), min_phase, scope);
            }
            Process::Barrier { phase, then } => {
                let here = format!("{path}.barrier[{phase}]");
                if *phase <= min_phase {
                    self.diags.push(Diagnostic {
                        path: here.clone(),
                        message: format!(
                            "barrier phase {phase} does not increase over the preceding phase {min_phase}"
                        ),
                    });
                }
                self.walk(then, here, (*phase).max(min_phase), scope);
            }
            Process::Event { args, then, .. } => {
                let here = format!("{path}.event");
                for a in args {
                    self.term_ok(a, &here, scope);
                }
                self.walk(then, here, min_phase, scope);
            }
        }
    }
}
