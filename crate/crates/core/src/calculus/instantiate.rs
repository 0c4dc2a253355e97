//! Expansion of role templates into concrete bounded models.
//!
//! A [`ModelTemplate`] carries one body per protocol role; instantiation
//! clones each role once per voter, rewiring the placeholder endpoint `@v`
//! to `v1`, `v2`, ..., substituting the placeholder name `@vote` with that
//! voter's vote term, and subscripting restricted names per instance
//! (`bid` becomes `bid1`, `bid2`, ...) so expanded models render with
//! deterministic, distinct static names.

use std::rc::Rc;

use thiserror::Error;

use super::{ChanExpr, ChannelDecl, ChannelId, Ident, Model, Process};
use crate::term::{Side, Term};

pub const VOTER_PLACEHOLDER: &str = "@v";
pub const VOTE_PLACEHOLDER: &str = "@vote";

pub const MIN_VOTERS: usize = 2;
pub const MAX_VOTERS: usize = 4;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum TemplateError {
    #[error("unsupported voter count {got}: privacy equivalence needs between {MIN_VOTERS} and {MAX_VOTERS} swappable voters")]
    VoterBound { got: usize },
    #[error("need at least 2 distinct candidates, got {got}")]
    CandidateBound { got: usize },
    #[error("vote assignment names {got} voters but the instance has {voters}")]
    VoteAssignment { got: usize, voters: usize },
    #[error("vote `{vote}` is not in the candidate list")]
    UnknownVote { vote: String },
}

/// One protocol role, instantiated once per voter.
#[derive(Debug, Clone)]
pub struct RoleTemplate {
    pub name: Ident,
    pub body: Process,
}

#[derive(Debug, Clone)]
pub struct ModelTemplate {
    pub free_names: Vec<Ident>,
    pub private_names: Vec<Ident>,
    pub shared_channels: Vec<ChannelDecl>,
    /// Channel declarations whose components may mention `@v`.
    pub per_voter_channels: Vec<ChannelDecl>,
    pub roles: Vec<RoleTemplate>,
    /// Processes instantiated exactly once (e.g. a chain-token seeder).
    pub singletons: Vec<Process>,
}

#[derive(Debug, Clone)]
pub struct InstanceParams {
    pub voters: usize,
    pub candidates: Vec<Ident>,
    /// One vote term per voter; `choice` terms encode the biprocess.
    pub votes: Vec<Term>,
}

impl InstanceParams {
    pub fn project(&self, side: Side) -> InstanceParams {
        InstanceParams {
            voters: self.voters,
            candidates: self.candidates.clone(),
            votes: self.votes.iter().map(|v| v.project(side)).collect(),
        }
    }
}

fn voter_id(i: usize) -> Ident {
    format!("v{i}").into()
}

fn remap_endpoint(id: &ChannelId, voter: &Ident) -> ChannelId {
    let sub = |c: &Ident| -> Ident {
        if c.as_ref() == VOTER_PLACEHOLDER {
            voter.clone()
        } else {
            c.clone()
        }
    };
    ChannelId {
        from: sub(&id.from),
        to: sub(&id.to),
        tag: sub(&id.tag),
    }
}

fn remap_process_channels(p: &Process, voter: &Ident) -> Process {
    match p {
        Process::Stop => Process::Stop,
        Process::Output { ch, payload, then } => Process::Output {
            ch: match ch {
                ChanExpr::Decl(id) => ChanExpr::Decl(remap_endpoint(id, voter)),
                other => other.clone(),
            },
            payload: payload.clone(),
            then: Rc::new(remap_process_channels(then, voter)),
        },
        Process::Input { ch, pattern, then } => Process::Input {
            ch: match ch {
                ChanExpr::Decl(id) => ChanExpr::Decl(remap_endpoint(id, voter)),
                other => other.clone(),
            },
            pattern: pattern.clone(),
            then: Rc::new(remap_process_channels(then, voter)),
        },
        Process::Parallel(ps) => Process::Parallel(
            ps.iter()
                .map(|q| Rc::new(remap_process_channels(q, voter)))
                .collect(),
        ),
        Process::Restrict { name, then } => Process::Restrict {
            name: name.clone(),
            then: Rc::new(remap_process_channels(then, voter)),
        },
        Process::IfEq {
            lhs,
            rhs,
            then,
            els,
        } => Process::IfEq {
            lhs: lhs.clone(),
            rhs: rhs.clone(),
            then: Rc::new(remap_process_channels(then, voter)),
            els: Rc::new(remap_process_channels(els, voter)),
        },
        Process::Barrier { phase, then } => Process::Barrier {
            phase: *phase,
            then: Rc::new(remap_process_channels(then, voter)),
        },
        Process::Event { label, args, then } => Process::Event {
            label: label.clone(),
            args: args.clone(),
            then: Rc::new(remap_process_channels(then, voter)),
        },
    }
}

fn subscript_restrictions(p: &Process, idx: usize) -> Process {
    match p {
        Process::Restrict { name, then } => {
            let fresh: Ident = format!("{name}{idx}").into();
            let renamed = then.rename_name(name.as_ref(), &Term::name(fresh.clone(), false));
            Process::Restrict {
                name: fresh,
                then: Rc::new(subscript_restrictions(&renamed, idx)),
            }
        }
        Process::Stop => Process::Stop,
        Process::Output { ch, payload, then } => Process::Output {
            ch: ch.clone(),
            payload: payload.clone(),
            then: Rc::new(subscript_restrictions(then, idx)),
        },
        Process::Input { ch, pattern, then } => Process::Input {
            ch: ch.clone(),
            pattern: pattern.clone(),
            then: Rc::new(subscript_restrictions(then, idx)),
        },
        Process::Parallel(ps) => Process::Parallel(
            ps.iter()
                .map(|q| Rc::new(subscript_restrictions(q, idx)))
                .collect(),
        ),
        Process::IfEq {
            lhs,
            rhs,
            then,
            els,
        } => Process::IfEq {
            lhs: lhs.clone(),
            rhs: rhs.clone(),
            then: Rc::new(subscript_restrictions(then, idx)),
            els: Rc::new(subscript_restrictions(els, idx)),
        },
        Process::Barrier { phase, then } => Process::Barrier {
            phase: *phase,
            then: Rc::new(subscript_restrictions(then, idx)),
        },
        Process::Event { label, args, then } => Process::Event {
            label: label.clone(),
            args: args.clone(),
            then: Rc::new(subscript_restrictions(then, idx)),
        },
    }
}

/// Expand a template into a concrete model for the given instance
/// parameters. Expansion commutes with biprocess projection: projecting
/// the result equals instantiating with projected votes.
pub fn instantiate(t: &ModelTemplate, p: &InstanceParams) -> Result<Model, TemplateError> {
    if p.voters < MIN_VOTERS || p.voters > MAX_VOTERS {
        return Err(TemplateError::VoterBound { got: p.voters });
    }
    let mut distinct = p.candidates.clone();
    distinct.sort();
    distinct.dedup();
    if distinct.len() < 2 {
        return Err(TemplateError::CandidateBound {
            got: distinct.len(),
        });
    }
    if p.votes.len() != p.voters {
        return Err(TemplateError::VoteAssignment {
            got: p.votes.len(),
            voters: p.voters,
        });
    }
    for vote in &p.votes {
        for side in Side::BOTH {
            let v = vote.project(side);
            let known = match v.node() {
                crate::term::TermNode::Name { id, public: true } => {
                    p.candidates.iter().any(|c| c == id)
                }
                _ => false,
            };
            if !known {
                return Err(TemplateError::UnknownVote {
                    vote: v.to_string(),
                });
            }
        }
    }

    let mut free_names = t.free_names.clone();
    for c in &p.candidates {
        if !free_names.contains(c) {
            free_names.push(c.clone());
        }
    }

    let mut channels = t.shared_channels.clone();
    for i in 1..=p.voters {
        let voter = voter_id(i);
        for decl in &t.per_voter_channels {
            channels.push(ChannelDecl {
                id: remap_endpoint(&decl.id, &voter),
                visibility: decl.visibility,
            });
        }
    }

    let mut parts: Vec<Rc<Process>> = Vec::new();
    for role in &t.roles {
        for i in 1..=p.voters {
            let voter = voter_id(i);
            let body = remap_process_channels(&role.body, &voter);
            let body = body
                .map_terms(&mut |term: &Term| term.rename_name(VOTE_PLACEHOLDER, &p.votes[i - 1]));
            let body = subscript_restrictions(&body, i);
            parts.push(Rc::new(body));
        }
    }
    for s in &t.singletons {
        parts.push(Rc::new(s.clone()));
    }

    Ok(Model {
        free_names,
        private_names: t.private_names.clone(),
        channels,
        process: Process::Parallel(parts),
    })
}
