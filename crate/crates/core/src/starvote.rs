//! Built-in STAR-Vote models and corruption scenarios.
//!
//! Five roles run in parallel, one session each per voter, wired over
//! private channels established before the election:
//!
//! - the voter sends her choice to the terminal, receives the ballot
//!   summary and receipt, checks the echoed candidate, and casts the
//!   paper ballot into the ballot box;
//! - the terminal encrypts the vote under the trustee key, builds the
//!   well-formedness proof and the receipt hash, registers the ballot ids
//!   with the controller, and submits the record to the bulletin board;
//! - the ballot box scans the cast id and validates it with the
//!   controller before accepting;
//! - the controller matches registrations against scans, confirms casts
//!   to the bulletin board, and (with pins) issues the access token;
//! - the bulletin board publishes cast records, and with counting
//!   enabled decrypts each vote individually behind a barrier and
//!   publishes the plaintexts.
//!
//! Votes are `choice` pairs, so the default build is the biprocess whose
//! projections are the two swapped systems. Trustee thresholding is
//! modeled as a single key pair, and randomness (ballot ids, encryption
//! coins) as fresh restricted names per session.

use std::collections::BTreeSet;
use std::rc::Rc;

use thiserror::Error;

use crate::calculus::{
    instantiate, ChanExpr, ChannelDecl, ChannelId, Ident, InstanceParams, Model, ModelTemplate,
    Pat, Process, RoleTemplate, TemplateError, Visibility, VOTER_PLACEHOLDER, VOTE_PLACEHOLDER,
};
use crate::semantics::{builtin_scenario, BuiltinScenario, CapSet, CapabilityRule, Scenario};
use crate::term::{Func, Term};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum StarError {
    #[error(transparent)]
    Template(#[from] TemplateError),
    #[error("the hash-chain variant needs at least 2 honest voter sessions")]
    HashchainVoters,
    #[error("no corrupted agents named")]
    EmptyCorruption,
    #[error("unknown agent `{0}` (expected terminal, ballotbox, controller, or v<N>)")]
    UnknownAgent(String),
    #[error("vote `{0}` is not among the candidates")]
    UnknownVote(String),
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct Extensions {
    pub counting: bool,
    pub pins: bool,
    pub hashchain: bool,
}

impl Extensions {
    pub fn parse_list(s: &str) -> Option<Extensions> {
        let mut e = Extensions::default();
        for part in s.split(',').filter(|p| !p.is_empty()) {
            match part.trim() {
                "counting" => e.counting = true,
                "pins" => e.pins = true,
                "hashchain" => e.hashchain = true,
                _ => return None,
            }
        }
        Some(e)
    }
}

/// How the per-voter votes are filled in.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum VoteSelection {
    /// Voter 1 votes `choice[a,b]`, voter 2 votes `choice[b,a]`, any
    /// further voters vote the first candidate on both sides: the
    /// biprocess encoding of the swapped-vote privacy comparison.
    SwapPair { a: Ident, b: Ident },
    /// A concrete assignment, one candidate per voter (the projected
    /// systems compared by trace equivalence).
    Assigned(Vec<Ident>),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StarParams {
    pub voters: usize,
    pub candidates: Vec<Ident>,
    pub extensions: Extensions,
    pub votes: VoteSelection,
}

impl StarParams {
    pub fn biprocess(voters: usize, a: &str, b: &str, extensions: Extensions) -> StarParams {
        StarParams {
            voters,
            candidates: vec![a.into(), b.into()],
            extensions,
            votes: VoteSelection::SwapPair {
                a: a.into(),
                b: b.into(),
            },
        }
    }

    fn vote_terms(&self) -> Result<Vec<Term>, StarError> {
        let cand = |id: &Ident| -> Result<Term, StarError> {
            if self.candidates.iter().any(|c| c == id) {
                Ok(Term::name(id.clone(), true))
            } else {
                Err(StarError::UnknownVote(id.to_string()))
            }
        };
        match &self.votes {
            VoteSelection::SwapPair { a, b } => {
                let (a, b) = (cand(a)?, cand(b)?);
                let mut votes = vec![
                    Term::choice(a.clone(), b.clone()),
                    Term::choice(b, a.clone()),
                ];
                while votes.len() < self.voters {
                    votes.push(cand(&self.candidates[0])?);
                }
                votes.truncate(self.voters.max(2));
                Ok(votes)
            }
            VoteSelection::Assigned(vs) => vs.iter().map(cand).collect(),
        }
    }
}

// channel endpoints
const TERM: &str = "term";
const BOX: &str = "box";
const CTRL: &str = "ctrl";
const WBB: &str = "wbb";
const PUB: &str = "pub";

fn name(s: &str, public: bool) -> Term {
    Term::name(s, public)
}

fn var(s: &str) -> Term {
    Term::var(s)
}

fn tup(args: Vec<Term>) -> Term {
    Term::tuple(args)
}

fn out(ch: ChannelId, payload: Term, then: Process) -> Process {
    Process::Output {
        ch: ChanExpr::Decl(ch),
        payload,
        then: Rc::new(then),
    }
}

fn inp(ch: ChannelId, pattern: Pat, then: Process) -> Process {
    Process::Input {
        ch: ChanExpr::Decl(ch),
        pattern,
        then: Rc::new(then),
    }
}

fn fresh(n: &str, then: Process) -> Process {
    Process::Restrict {
        name: n.into(),
        then: Rc::new(then),
    }
}

fn if_eq(l: Term, r: Term, then: Process) -> Process {
    Process::IfEq {
        lhs: l,
        rhs: r,
        then: Rc::new(then),
        els: Rc::new(Process::Stop),
    }
}

fn barrier(phase: u32, then: Process) -> Process {
    Process::Barrier {
        phase,
        then: Rc::new(then),
    }
}

fn ptup(parts: Vec<Pat>) -> Pat {
    Pat::App(Func::Tuple(parts.len() as u8), parts)
}

fn ptest(t: Term) -> Pat {
    Pat::Test(t)
}

fn pbind(v: &str) -> Pat {
    Pat::Bind(v.into())
}

fn pk_of(sk: &str) -> Term {
    Term::apply(Func::Pk, vec![name(sk, false)])
}

fn ch(from: &str, to: &str, tag: &str) -> ChannelId {
    ChannelId::new(from, to, tag)
}

/// The template for the given extension set; instantiated once per voter.
pub fn star_template(ext: &Extensions) -> ModelTemplate {
    let v = VOTER_PLACEHOLDER;
    let vote = name(VOTE_PLACEHOLDER, false);

    let mut free_names: Vec<Ident> = [
        "mid", "vt", "st", "bt", "rt", "sc", "okt", "ct", "et", "brd",
    ]
    .iter()
    .map(|s| Ident::from(*s))
    .collect();
    if ext.counting {
        free_names.push("res".into());
    }
    if ext.pins {
        free_names.extend(["pt", "pq", "po"].iter().map(|s| Ident::from(*s)));
    }
    if ext.hashchain {
        free_names.push("cht".into());
    }
    let private_names: Vec<Ident> = ["ska", "skc", "zp0", "zi0"]
        .iter()
        .map(|s| Ident::from(*s))
        .collect();

    let mut per_voter_channels = vec![
        ChannelDecl {
            id: ch(v, TERM, "vote"),
            visibility: Visibility::Private,
        },
        ChannelDecl {
            id: ch(TERM, v, "summary"),
            visibility: Visibility::Private,
        },
        ChannelDecl {
            id: ch(v, BOX, "ballot"),
            visibility: Visibility::Private,
        },
    ];
    if ext.pins {
        per_voter_channels.push(ChannelDecl {
            id: ch(CTRL, v, "pin"),
            visibility: Visibility::Private,
        });
    }
    let mut shared_channels = vec![
        ChannelDecl {
            id: ch(TERM, CTRL, "reg"),
            visibility: Visibility::Private,
        },
        ChannelDecl {
            id: ch(BOX, CTRL, "scan"),
            visibility: Visibility::Private,
        },
        ChannelDecl {
            id: ch(CTRL, BOX, "scanok"),
            visibility: Visibility::Private,
        },
        ChannelDecl {
            id: ch(CTRL, WBB, "cast"),
            visibility: Visibility::Private,
        },
        ChannelDecl {
            id: ch(TERM, WBB, "record"),
            visibility: Visibility::Private,
        },
        ChannelDecl {
            id: ch(WBB, PUB, "board"),
            visibility: Visibility::Public,
        },
    ];
    if ext.pins {
        shared_channels.push(ChannelDecl {
            id: ch(TERM, CTRL, "pincheck"),
            visibility: Visibility::Private,
        });
        shared_channels.push(ChannelDecl {
            id: ch(CTRL, TERM, "pinok"),
            visibility: Visibility::Private,
        });
    }
    if ext.hashchain {
        shared_channels.push(ChannelDecl {
            id: ch(TERM, TERM, "chain"),
            visibility: Visibility::Private,
        });
    }

    // voter: enters the vote, receives the summary and receipt, checks
    // the echoed candidate, casts the paper ballot
    let cast = out(
        ch(v, BOX, "ballot"),
        tup(vec![
            name("bt", true),
            vote.clone(),
            var("xbid"),
            var("xbcid"),
        ]),
        Process::Stop,
    );
    let check = if_eq(vote.clone(), var("xv"), cast);
    let recv_summary = inp(
        ch(TERM, v, "summary"),
        ptup(vec![
            ptest(name("st", true)),
            pbind("xv"),
            pbind("xbid"),
            pbind("xbcid"),
            pbind("xz"),
        ]),
        check,
    );
    let vote_msg = if ext.pins {
        tup(vec![name("vt", true), var("xpin"), vote.clone()])
    } else {
        tup(vec![name("vt", true), vote.clone()])
    };
    let send_vote = out(ch(v, TERM, "vote"), vote_msg, recv_summary);
    let voter = if ext.pins {
        inp(
            ch(CTRL, v, "pin"),
            ptup(vec![ptest(name("pt", true)), pbind("xpin")]),
            send_vote,
        )
    } else {
        send_vote
    };

    // terminal: one session per voter; encrypts, proves, hashes, registers
    let cipher = Term::apply(Func::Penc, vec![var("yv"), name("r", false), pk_of("ska")]);
    let proof = Term::apply(
        Func::Zkp,
        vec![pk_of("ska"), name("r", false), var("yv"), cipher.clone()],
    );
    let receipt_seed = if ext.hashchain {
        var("zprev")
    } else {
        name("zp0", false)
    };
    let receipt = Term::apply(Func::Hash, vec![tup(vec![cipher.clone(), receipt_seed])]);
    let term_tail = {
        let submit = out(
            ch(TERM, WBB, "record"),
            tup(vec![
                name("et", true),
                name("bcid", false),
                cipher.clone(),
                proof,
                receipt.clone(),
            ]),
            if ext.hashchain {
                out(
                    ch(TERM, TERM, "chain"),
                    tup(vec![name("cht", true), receipt.clone()]),
                    Process::Stop,
                )
            } else {
                Process::Stop
            },
        );
        let register = out(
            ch(TERM, CTRL, "reg"),
            tup(vec![
                name("rt", true),
                name("mid", true),
                name("bid", false),
                name("bcid", false),
            ]),
            submit,
        );
        out(
            ch(TERM, v, "summary"),
            tup(vec![
                name("st", true),
                var("yv"),
                name("bid", false),
                name("bcid", false),
                receipt.clone(),
            ]),
            register,
        )
    };
    let term_tail = if ext.hashchain {
        inp(
            ch(TERM, TERM, "chain"),
            ptup(vec![ptest(name("cht", true)), pbind("zprev")]),
            term_tail,
        )
    } else {
        term_tail
    };
    let term_body = fresh("r", fresh("bid", fresh("bcid", term_tail)));
    let vote_pat = if ext.pins {
        ptup(vec![ptest(name("vt", true)), pbind("ypin"), pbind("yv")])
    } else {
        ptup(vec![ptest(name("vt", true)), pbind("yv")])
    };
    let terminal = if ext.pins {
        let validated = inp(
            ch(CTRL, TERM, "pinok"),
            ptup(vec![ptest(name("po", true)), ptest(var("ypin"))]),
            term_body,
        );
        let validate = out(
            ch(TERM, CTRL, "pincheck"),
            tup(vec![name("pq", true), var("ypin")]),
            validated,
        );
        inp(ch(v, TERM, "vote"), vote_pat, validate)
    } else {
        inp(ch(v, TERM, "vote"), vote_pat, term_body)
    };

    // ballot box: accepts a ballot, scans the cast id, requires the
    // controller's confirmation
    let ballotbox = inp(
        ch(v, BOX, "ballot"),
        ptup(vec![
            ptest(name("bt", true)),
            pbind("zv"),
            pbind("zbid"),
            pbind("zbcid"),
        ]),
        out(
            ch(BOX, CTRL, "scan"),
            tup(vec![name("sc", true), var("zbcid")]),
            inp(
                ch(CTRL, BOX, "scanok"),
                ptup(vec![ptest(name("okt", true)), ptest(var("zbcid"))]),
                Process::Stop,
            ),
        ),
    );

    // controller: matches a registration against the box's scan, confirms
    // the cast; with pins, first issues and validates the voter's token
    let ctrl_core = inp(
        ch(TERM, CTRL, "reg"),
        ptup(vec![
            ptest(name("rt", true)),
            ptest(name("mid", true)),
            pbind("wbid"),
            pbind("wbcid"),
        ]),
        inp(
            ch(BOX, CTRL, "scan"),
            ptup(vec![ptest(name("sc", true)), ptest(var("wbcid"))]),
            out(
                ch(CTRL, BOX, "scanok"),
                tup(vec![name("okt", true), var("wbcid")]),
                out(
                    ch(CTRL, WBB, "cast"),
                    tup(vec![name("ct", true), var("wbcid")]),
                    Process::Stop,
                ),
            ),
        ),
    );
    let controller = if ext.pins {
        fresh(
            "pin",
            out(
                ch(CTRL, v, "pin"),
                tup(vec![name("pt", true), name("pin", false)]),
                inp(
                    ch(TERM, CTRL, "pincheck"),
                    ptup(vec![ptest(name("pq", true)), ptest(name("pin", false))]),
                    out(
                        ch(CTRL, TERM, "pinok"),
                        tup(vec![name("po", true), name("pin", false)]),
                        ctrl_core,
                    ),
                ),
            ),
        )
    } else {
        ctrl_core
    };

    // bulletin board: publishes a confirmed, proof-checked record; with
    // counting, decrypts individually once everything is in
    let publish_tail = if ext.counting {
        barrier(
            1,
            out(
                ch(WBB, PUB, "board"),
                tup(vec![
                    name("res", true),
                    Term::apply(Func::Dec, vec![var("ue"), name("ska", false)]),
                ]),
                Process::Stop,
            ),
        )
    } else {
        Process::Stop
    };
    let wbb = inp(
        ch(TERM, WBB, "record"),
        ptup(vec![
            ptest(name("et", true)),
            pbind("ubcid"),
            pbind("ue"),
            pbind("up"),
            pbind("uz"),
        ]),
        inp(
            ch(CTRL, WBB, "cast"),
            ptup(vec![ptest(name("ct", true)), ptest(var("ubcid"))]),
            if_eq(
                Term::apply(Func::Checkzkp, vec![var("up")]),
                Term::ok(),
                out(
                    ch(WBB, PUB, "board"),
                    tup(vec![name("brd", true), var("ue"), var("up"), var("uz")]),
                    publish_tail,
                ),
            ),
        ),
    );

    // the chain seed is issued once, to whichever terminal session starts
    let singletons = if ext.hashchain {
        vec![out(
            ch(TERM, TERM, "chain"),
            tup(vec![name("cht", true), name("zp0", false)]),
            Process::Stop,
        )]
    } else {
        Vec::new()
    };

    ModelTemplate {
        free_names,
        private_names,
        shared_channels,
        per_voter_channels,
        roles: vec![
            RoleTemplate {
                name: "voter".into(),
                body: voter,
            },
            RoleTemplate {
                name: "terminal".into(),
                body: terminal,
            },
            RoleTemplate {
                name: "ballotbox".into(),
                body: ballotbox,
            },
            RoleTemplate {
                name: "controller".into(),
                body: controller,
            },
            RoleTemplate {
                name: "wbb".into(),
                body: wbb,
            },
        ],
        singletons,
    }
}

/// Build the composed model (a biprocess when the vote selection uses
/// `choice` pairs) for the given parameters.
pub fn build_star_model(p: &StarParams) -> Result<Model, StarError> {
    if p.extensions.hashchain && p.voters < 2 {
        return Err(StarError::HashchainVoters);
    }
    let template = star_template(&p.extensions);
    let params = InstanceParams {
        voters: p.voters,
        candidates: p.candidates.clone(),
        votes: p.vote_terms()?,
    };
    Ok(instantiate(&template, &params)?)
}

/// The hash-chain variant: receipts are chained through the terminal
/// sessions, which requires at least two honest voter sessions.
pub fn build_hashchain_model(p: &StarParams) -> Result<Model, StarError> {
    if p.voters < 2 {
        return Err(StarError::HashchainVoters);
    }
    let mut p = p.clone();
    p.extensions.hashchain = true;
    build_star_model(&p)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum CorruptAgent {
    Terminal,
    BallotBox,
    Controller,
    Voter(u8),
}

impl CorruptAgent {
    pub fn parse(s: &str) -> Result<CorruptAgent, StarError> {
        match s {
            "terminal" | "term" => Ok(CorruptAgent::Terminal),
            "ballotbox" | "box" => Ok(CorruptAgent::BallotBox),
            "controller" | "ctrl" => Ok(CorruptAgent::Controller),
            other => {
                if let Some(n) = other.strip_prefix('v').and_then(|n| n.parse::<u8>().ok()) {
                    Ok(CorruptAgent::Voter(n))
                } else {
                    Err(StarError::UnknownAgent(other.into()))
                }
            }
        }
    }

    fn endpoint(&self) -> Ident {
        match self {
            CorruptAgent::Terminal => TERM.into(),
            CorruptAgent::BallotBox => BOX.into(),
            CorruptAgent::Controller => CTRL.into(),
            CorruptAgent::Voter(n) => format!("v{n}").into(),
        }
    }

    /// The secret data handed to the intruder when this agent is corrupt;
    /// mirrors what each role is initialized with.
    fn secrets(&self) -> Vec<Term> {
        match self {
            CorruptAgent::Terminal => {
                vec![name("skc", false), name("zp0", false), name("zi0", false)]
            }
            CorruptAgent::BallotBox => vec![name("zi0", false)],
            CorruptAgent::Controller => vec![name("skc", false)],
            CorruptAgent::Voter(_) => Vec::new(),
        }
    }
}

/// Intruder knowledge every scenario starts from on these models: the
/// published election keys.
pub fn star_public_knowledge() -> Vec<Term> {
    vec![pk_of("ska"), pk_of("skc")]
}

/// A scenario granting the intruder the named agents' secret keys and
/// full capabilities on their channels, layered over public observation.
pub fn corruption_scenario(agents: &BTreeSet<CorruptAgent>) -> Result<Scenario, StarError> {
    if agents.is_empty() {
        return Err(StarError::EmptyCorruption);
    }
    let mut s = builtin_scenario(BuiltinScenario::Dy1);
    let mut names: Vec<String> = Vec::new();
    let mut knowledge = star_public_knowledge();
    for agent in agents {
        names.push(agent.endpoint().to_string());
        s.rules.push(CapabilityRule {
            endpoint: Some(vec![agent.endpoint()]),
            caps: CapSet::FULL,
            ..CapabilityRule::default()
        });
        s.corrupted.insert(agent.endpoint());
        for t in agent.secrets() {
            if !knowledge.contains(&t) {
                knowledge.push(t);
            }
        }
    }
    s.knowledge = knowledge;
    s.name = format!("corrupt_{}", names.join("_"));
    Ok(s)
}

/// Built-in scenario lookup for these models: the Dolev-Yao capability
/// patterns with the election keys as initial knowledge, plus the
/// corrupt-terminal-and-ballot-box configuration.
pub fn star_scenario(name: &str) -> Option<Scenario> {
    if name == "corrupt_tb" {
        let agents: BTreeSet<CorruptAgent> =
            [CorruptAgent::Terminal, CorruptAgent::BallotBox].into();
        let mut s = corruption_scenario(&agents).expect("nonempty");
        s.name = "corrupt_tb".into();
        return Some(s);
    }
    let mut s = builtin_scenario(BuiltinScenario::by_name(name)?);
    s.knowledge = star_public_knowledge();
    Some(s)
}

pub const BUILTIN_MODELS: &[&str] = &["star_base", "star_counting", "star_pins", "star_hashchain"];

pub fn builtin_extensions(model: &str) -> Option<Extensions> {
    match model {
        "star_base" => Some(Extensions::default()),
        "star_counting" => Some(Extensions {
            counting: true,
            ..Extensions::default()
        }),
        "star_pins" => Some(Extensions {
            pins: true,
            ..Extensions::default()
        }),
        "star_hashchain" => Some(Extensions {
            hashchain: true,
            ..Extensions::default()
        }),
        _ => None,
    }
}

/// The shipped `.spv` sources: the canonical rendering of each built-in
/// at its default instantiation (2 voters, candidates a/b, choice votes).
pub fn shipped_model_source(model: &str) -> Option<&'static str> {
    match model {
        "star_base" => Some(include_str!("../models/star_base.spv")),
        "star_counting" => Some(include_str!("../models/star_counting.spv")),
        "star_pins" => Some(include_str!("../models/star_pins.spv")),
        "star_hashchain" => Some(include_str!("../models/star_hashchain.spv")),
        _ => None,
    }
}

pub fn shipped_scenario_source(name: &str) -> Option<&'static str> {
    match name {
        "dy1" => Some(include_str!("../scenarios/dy1.toml")),
        "dy2" => Some(include_str!("../scenarios/dy2.toml")),
        "dy3" => Some(include_str!("../scenarios/dy3.toml")),
        "corrupt_tb" => Some(include_str!("../scenarios/corrupt_tb.toml")),
        _ => None,
    }
}

pub fn default_params(model: &str) -> Option<StarParams> {
    Some(StarParams::biprocess(
        2,
        "a",
        "b",
        builtin_extensions(model)?,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::calculus::check_wellformed;
    use crate::term::Side;

    #[test]
    fn base_model_is_wellformed_with_five_roles() {
        let m =
            build_star_model(&StarParams::biprocess(2, "a", "b", Extensions::default())).unwrap();
        let diags = check_wellformed(&m);
        assert!(diags.is_empty(), "diagnostics: {diags:?}");
        let t = star_template(&Extensions::default());
        assert_eq!(t.roles.len(), 5);
        match &m.process {
            Process::Parallel(ps) => assert_eq!(ps.len(), 10),
            other => panic!("unexpected {other:?}"),
        }
        assert!(m.has_choice());
    }

    #[test]
    fn all_variants_are_wellformed() {
        for model in BUILTIN_MODELS {
            let ext = builtin_extensions(model).unwrap();
            let p = StarParams::biprocess(2, "a", "b", ext);
            let m = build_star_model(&p).unwrap();
            let diags = check_wellformed(&m);
            assert!(diags.is_empty(), "{model}: {diags:?}");
            // round-trip through the canonical rendering
            let parsed = crate::calculus::parse_model(&m.render()).unwrap();
            assert_eq!(parsed, m, "{model} does not round-trip");
        }
    }

    #[test]
    fn projections_give_the_two_swapped_systems() {
        let m =
            build_star_model(&StarParams::biprocess(2, "a", "b", Extensions::default())).unwrap();
        let left = m.project(Side::Left);
        let right = m.project(Side::Right);
        assert!(!left.has_choice());
        let assigned = |votes: Vec<&str>| {
            build_star_model(&StarParams {
                voters: 2,
                candidates: vec!["a".into(), "b".into()],
                extensions: Extensions::default(),
                votes: VoteSelection::Assigned(votes.into_iter().map(Ident::from).collect()),
            })
            .unwrap()
        };
        assert_eq!(left, assigned(vec!["a", "b"]));
        assert_eq!(right, assigned(vec!["b", "a"]));
    }

    #[test]
    fn hashchain_requires_two_voters() {
        let mut p = StarParams::biprocess(2, "a", "b", Extensions::default());
        p.voters = 1;
        p.votes = VoteSelection::Assigned(vec!["a".into()]);
        assert_eq!(
            build_hashchain_model(&p).unwrap_err(),
            StarError::HashchainVoters
        );
    }

    #[test]
    fn corruption_scenario_needs_agents() {
        assert_eq!(
            corruption_scenario(&BTreeSet::new()).unwrap_err(),
            StarError::EmptyCorruption
        );
    }

    #[test]
    fn corrupting_a_voter_matches_dy3s_corruption_component() {
        let m =
            build_star_model(&StarParams::biprocess(3, "a", "b", Extensions::default())).unwrap();
        let via_corruption = corruption_scenario(&[CorruptAgent::Voter(3)].into()).unwrap();
        let dy3 = star_scenario("dy3").unwrap();
        assert_eq!(
            via_corruption.capabilities_for(&m),
            dy3.capabilities_for(&m)
        );
        assert_eq!(via_corruption.knowledge, dy3.knowledge);
    }

    #[test]
    fn corrupt_terminal_reveals_its_initialization_secrets() {
        let s = corruption_scenario(&[CorruptAgent::Terminal].into()).unwrap();
        assert!(s.knowledge.contains(&name("skc", false)));
        assert!(s.knowledge.contains(&name("zp0", false)));
    }

    #[test]
    fn shipped_model_sources_match_constructors() {
        for model in BUILTIN_MODELS {
            let built = build_star_model(&default_params(model).unwrap()).unwrap();
            let shipped = shipped_model_source(model).unwrap();
            assert_eq!(
                shipped,
                built.render(),
                "{model}.spv is stale; regenerate with \
                 `cargo test -p ballotscope-core regen_shipped_files -- --ignored`"
            );
            assert_eq!(crate::calculus::parse_model(shipped).unwrap(), built);
        }
    }

    #[test]
    fn shipped_scenarios_match_builtins() {
        let m =
            build_star_model(&StarParams::biprocess(3, "a", "b", Extensions::default())).unwrap();
        for name in ["dy1", "dy2", "dy3", "corrupt_tb"] {
            let loaded =
                crate::semantics::load_scenario(shipped_scenario_source(name).unwrap(), &m)
                    .unwrap();
            let builtin = star_scenario(name).unwrap();
            assert_eq!(loaded.name, builtin.name);
            assert_eq!(
                loaded.capabilities_for(&m),
                builtin.capabilities_for(&m),
                "{name} capabilities differ"
            );
            assert_eq!(
                loaded.knowledge, builtin.knowledge,
                "{name} knowledge differs"
            );
        }
    }

    #[test]
    #[ignore = "writes the shipped .spv sources; run after changing the constructors"]
    fn regen_shipped_files() {
        let dir = std::path::Path::new(env!("CARGO_MANIFEST_DIR")).join("models");
        for model in BUILTIN_MODELS {
            let built = build_star_model(&default_params(model).unwrap()).unwrap();
            std::fs::write(dir.join(format!("{model}.spv")), built.render()).unwrap();
        }
    }
}
