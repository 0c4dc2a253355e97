//! Parser for the `.spv` model DSL.
//!
//! Grammar sketch (`#` starts a line comment, UTF-8 source):
//!
//! ```text
//! model   := { decl } "process" proc
//! decl    := "free" ident {"," ident} "."
//!          | "private" ident {"," ident} "."
//!          | "channel" ident "." ident "." ident ("public"|"private") "."
//!          | "def" IDENT "(" [ident {"," ident}] ")" "=" proc "."
//! proc    := seq { "|" seq }
//! seq     := "0"
//!          | "out" "(" chan "," term ")" ["." proc]
//!          | "in" "(" chan "," pattern ")" ["." proc]
//!          | "new" ident "." proc
//!          | "if" term "=" term "then" proc ["else" proc]
//!          | "barrier" nat "." proc
//!          | "event" ident ["(" terms ")"] ["." proc]
//!          | "let" ident "=" term "in" proc
//!          | IDENT "(" [args] ")"            // def instantiation
//!          | "(" proc ")"
//! chan    := ident "." ident "." ident | ident
//! term    := ident | func "(" terms ")" | "(" terms ")" | "choice" "[" term "," term "]"
//! pattern := like term; unbound idents bind, "=" ident tests a bound value
//! ```
//!
//! `def` bodies and `let` bindings are expanded during parsing; the
//! resulting [`Model`] is definition-free. `def` calls may pass endpoint
//! identifiers, which substitute into channel-triple components.

use std::collections::BTreeMap;
use std::fmt;
use std::rc::Rc;

use indexmap::IndexMap;
use thiserror::Error;

use super::{ChanExpr, ChannelDecl, ChannelId, Ident, Model, Pat, Process, Visibility};
use crate::term::{Func, Subst, Term};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
#[error("{line}:{col}: {msg}")]
pub struct ParseError {
    pub line: u32,
    pub col: u32,
    pub msg: String,
}

impl ParseError {
    fn new(pos: Pos, msg: impl Into<String>) -> ParseError {
        ParseError {
            line: pos.0,
            col: pos.1,
            msg: msg.into(),
        }
    }
}

type Pos = (u32, u32);

#[derive(Debug, Clone, PartialEq, Eq)]
enum Tok {
    Ident(String),
    Num(u32),
    LParen,
    RParen,
    LBracket,
    RBracket,
    Comma,
    Dot,
    Eq,
    Bar,
}

impl fmt::Display for Tok {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Tok::Ident(s) => write!(f, "`{s}`"),
            Tok::Num(n) => write!(f, "`{n}`"),
            Tok::LParen => write!(f, "`(`"),
            Tok::RParen => write!(f, "`)`"),
            Tok::LBracket => write!(f, "`[`"),
            Tok::RBracket => write!(f, "`]`"),
            Tok::Comma => write!(f, "`,`"),
            Tok::Dot => write!(f, "`.`"),
            Tok::Eq => write!(f, "`=`"),
            Tok::Bar => write!(f, "`|`"),
        }
    }
}

fn lex(src: &str) -> Result<Vec<(Tok, Pos)>, ParseError> {
    let mut out = Vec::new();
    let mut line = 1u32;
    let mut col = 1u32;
    let mut chars = src.chars().peekable();
    while let Some(&c) = chars.peek() {
        let pos = (line, col);
        match c {
            '\n' => {
                chars.next();
                line += 1;
                col = 1;
            }
            c if c.is_whitespace() => {
                chars.next();
                col += 1;
            }
            '#' => {
                while let Some(&c) = chars.peek() {
                    if c == '\n' {
                        break;
                    }
                    chars.next();
                    col += 1;
                }
            }
            '(' | ')' | '[' | ']' | ',' | '.' | '=' | '|' => {
                chars.next();
                col += 1;
                out.push((
                    match c {
                        '(' => Tok::LParen,
                        ')' => Tok::RParen,
                        '[' => Tok::LBracket,
                        ']' => Tok::RBracket,
                        ',' => Tok::Comma,
                        '.' => Tok::Dot,
                        '=' => Tok::Eq,
                        _ => Tok::Bar,
                    },
                    pos,
                ));
            }
            c if c.is_ascii_digit() => {
                let mut n = String::new();
                while let Some(&c) = chars.peek() {
                    if c.is_ascii_digit() {
                        n.push(c);
                        chars.next();
                        col += 1;
                    } else {
                        break;
                    }
                }
                let v = n
                    .parse()
                    .map_err(|_| ParseError::new(pos, format!("number out of range: {n}")))?;
                out.push((Tok::Num(v), pos));
            }
            c if c.is_alphabetic() || c == '_' => {
                let mut s = String::new();
                while let Some(&c) = chars.peek() {
                    if c.is_alphanumeric() || c == '_' || c == '\'' {
                        s.push(c);
                        chars.next();
                        col += 1;
                    } else {
                        break;
                    }
                }
                out.push((Tok::Ident(s), pos));
            }
            other => {
                return Err(ParseError::new(
                    pos,
                    format!("unexpected character `{other}`"),
                ));
            }
        }
    }
    Ok(out)
}

const KEYWORDS: &[&str] = &[
    "free", "private", "channel", "public", "def", "process", "out", "in", "new", "if", "then",
    "else", "barrier", "event", "let", "choice",
];

/// Resolution context for terms parsed outside a model (CLI inputs,
/// scenario files). Unknown identifiers resolve per `default_private`:
/// true treats them as private names, false rejects them.
#[derive(Debug, Clone, Default)]
pub struct TermScope {
    pub publics: Vec<Ident>,
    pub privates: Vec<Ident>,
    pub default_private: bool,
}

impl TermScope {
    pub fn of_model(m: &Model) -> TermScope {
        TermScope {
            publics: m.free_names.clone(),
            privates: m.private_names.clone(),
            default_private: false,
        }
    }
}

/// Parse a single term against a scope; used by `deduce` and scenario files.
pub fn parse_term_with(src: &str, scope: &TermScope) -> Result<Term, ParseError> {
    let toks = lex(src)?;
    let mut p = Parser::new(toks);
    for n in &scope.publics {
        p.frees.push(n.clone());
    }
    for n in &scope.privates {
        p.privates.push(n.clone());
    }
    p.default_private_names = scope.default_private;
    let t = p.parse_term(&mut Scope::default())?;
    p.expect_eof()?;
    Ok(t)
}

/// Parse a complete model from `.spv` source.
pub fn parse_model(src: &str) -> Result<Model, ParseError> {
    let toks = lex(src)?;
    let mut p = Parser::new(toks);
    p.parse_model()
}

#[derive(Default, Clone)]
struct Scope {
    /// pattern/let/def-parameter variables currently bound
    vars: Vec<Ident>,
    /// restriction-bound names currently in scope
    new_names: Vec<Ident>,
}

struct DefInfo {
    params: Vec<Ident>,
    body: Process,
}

struct Parser {
    toks: Vec<(Tok, Pos)>,
    pos: usize,
    frees: Vec<Ident>,
    privates: Vec<Ident>,
    channels: IndexMap<ChannelId, Visibility>,
    defs: IndexMap<String, DefInfo>,
    /// while parsing a def body: parameters usable as channel components
    current_params: Vec<Ident>,
    default_private_names: bool,
}

impl Parser {
    fn new(toks: Vec<(Tok, Pos)>) -> Parser {
        Parser {
            toks,
            pos: 0,
            frees: Vec::new(),
            privates: Vec::new(),
            channels: IndexMap::new(),
            defs: IndexMap::new(),
            current_params: Vec::new(),
            default_private_names: false,
        }
    }

    fn peek(&self) -> Option<&Tok> {
        self.toks.get(self.pos).map(|(t, _)| t)
    }

    fn peek2(&self) -> Option<&Tok> {
        self.toks.get(self.pos + 1).map(|(t, _)| t)
    }

    fn here(&self) -> Pos {
        self.toks
            .get(self.pos)
            .map(|&(_, p)| p)
            .unwrap_or_else(|| self.toks.last().map(|&(_, p)| p).unwrap_or((1, 1)))
    }

    fn next(&mut self) -> Option<(Tok, Pos)> {
        let t = self.toks.get(self.pos).cloned();
        if t.is_some() {
            self.pos += 1;
        }
        t
    }

    fn expect(&mut self, want: Tok) -> Result<Pos, ParseError> {
        let pos = self.here();
        match self.next() {
            Some((t, p)) if t == want => Ok(p),
            Some((t, p)) => Err(ParseError::new(p, format!("expected {want}, found {t}"))),
            None => Err(ParseError::new(
                pos,
                format!("expected {want}, found end of input"),
            )),
        }
    }

    fn expect_ident(&mut self) -> Result<(String, Pos), ParseError> {
        let pos = self.here();
        match self.next() {
            Some((Tok::Ident(s), p)) => Ok((s, p)),
            Some((t, p)) => Err(ParseError::new(
                p,
                format!("expected identifier, found {t}"),
            )),
            None => Err(ParseError::new(
                pos,
                "expected identifier, found end of input",
            )),
        }
    }

    fn expect_kw(&mut self, kw: &str) -> Result<Pos, ParseError> {
        let (s, p) = self.expect_ident()?;
        if s == kw {
            Ok(p)
        } else {
            Err(ParseError::new(p, format!("expected `{kw}`, found `{s}`")))
        }
    }

    fn expect_eof(&mut self) -> Result<(), ParseError> {
        if let Some((t, p)) = self.next() {
            return Err(ParseError::new(
                p,
                format!("expected end of input, found {t}"),
            ));
        }
        Ok(())
    }

    fn at_kw(&self, kw: &str) -> bool {
        matches!(self.peek(), Some(Tok::Ident(s)) if s == kw)
    }

    fn parse_model(&mut self) -> Result<Model, ParseError> {
        loop {
            let pos = self.here();
            match self.peek() {
                Some(Tok::Ident(kw)) => match kw.as_str() {
                    "free" => self.parse_name_decl(true)?,
                    "private" => self.parse_name_decl(false)?,
                    "channel" => self.parse_channel_decl()?,
                    "def" => self.parse_def()?,
                    "process" => break,
                    other => {
                        return Err(ParseError::new(
                            pos,
                            format!("expected declaration or `process`, found `{other}`"),
                        ))
                    }
                },
                Some(t) => {
                    return Err(ParseError::new(
                        pos,
                        format!("expected declaration or `process`, found {t}"),
                    ))
                }
                None => {
                    return Err(ParseError::new(
                        pos,
                        "syntax error: expected declaration or `process`, found end of input",
                    ))
                }
            }
        }
        self.expect_kw("process")?;
        let process = self.parse_process(&mut Scope::default())?;
        self.expect_eof()?;
        Ok(Model {
            free_names: self.frees.clone(),
            private_names: self.privates.clone(),
            channels: self
                .channels
                .iter()
                .map(|(id, v)| ChannelDecl {
                    id: id.clone(),
                    visibility: *v,
                })
                .collect(),
            process,
        })
    }

    fn declare_name(&mut self, name: &str, pos: Pos, public: bool) -> Result<(), ParseError> {
        if KEYWORDS.contains(&name) {
            return Err(ParseError::new(pos, format!("`{name}` is a reserved word")));
        }
        if Func::by_name(name).is_some() {
            return Err(ParseError::new(
                pos,
                format!("`{name}` is a signature symbol and cannot be a name"),
            ));
        }
        if self.frees.iter().any(|n| n.as_ref() == name)
            || self.privates.iter().any(|n| n.as_ref() == name)
        {
            return Err(ParseError::new(
                pos,
                format!("duplicate declaration of `{name}`"),
            ));
        }
        if public {
            self.frees.push(name.into());
        } else {
            self.privates.push(name.into());
        }
        Ok(())
    }

    fn parse_name_decl(&mut self, public: bool) -> Result<(), ParseError> {
        self.next(); // free | private
        loop {
            let (name, pos) = self.expect_ident()?;
            self.declare_name(&name, pos, public)?;
            match self.next() {
                Some((Tok::Comma, _)) => continue,
                Some((Tok::Dot, _)) => return Ok(()),
                Some((t, p)) => {
                    return Err(ParseError::new(
                        p,
                        format!("expected `,` or `.`, found {t}"),
                    ))
                }
                None => {
                    return Err(ParseError::new(
                        self.here(),
                        "expected `,` or `.`, found end of input",
                    ))
                }
            }
        }
    }

    fn parse_channel_decl(&mut self) -> Result<(), ParseError> {
        self.next(); // channel
        let (from, _) = self.expect_ident()?;
        self.expect(Tok::Dot)?;
        let (to, _) = self.expect_ident()?;
        self.expect(Tok::Dot)?;
        let (tag, _) = self.expect_ident()?;
        let (vis, vpos) = self.expect_ident()?;
        let visibility = match vis.as_str() {
            "public" => Visibility::Public,
            "private" => Visibility::Private,
            other => {
                return Err(ParseError::new(
                    vpos,
                    format!("expected `public` or `private`, found `{other}`"),
                ))
            }
        };
        self.expect(Tok::Dot)?;
        let id = ChannelId::new(&from, &to, &tag);
        if let Some(prev) = self.channels.get(&id) {
            if *prev != visibility {
                return Err(ParseError::new(
                    vpos,
                    format!("channel {id} already declared with conflicting visibility"),
                ));
            }
            return Err(ParseError::new(
                vpos,
                format!("duplicate channel declaration {id}"),
            ));
        }
        self.channels.insert(id, visibility);
        Ok(())
    }

    fn parse_def(&mut self) -> Result<(), ParseError> {
        self.next(); // def
        let (name, npos) = self.expect_ident()?;
        if self.defs.contains_key(&name) {
            return Err(ParseError::new(
                npos,
                format!("duplicate definition of `{name}`"),
            ));
        }
        self.expect(Tok::LParen)?;
        let mut params: Vec<Ident> = Vec::new();
        if self.peek() != Some(&Tok::RParen) {
            loop {
                let (p, ppos) = self.expect_ident()?;
                if params.iter().any(|x| x.as_ref() == p) {
                    return Err(ParseError::new(ppos, format!("duplicate parameter `{p}`")));
                }
                params.push(p.into());
                match self.next() {
                    Some((Tok::Comma, _)) => continue,
                    Some((Tok::RParen, _)) => break,
                    Some((t, p)) => {
                        return Err(ParseError::new(
                            p,
                            format!("expected `,` or `)`, found {t}"),
                        ))
                    }
                    None => {
                        return Err(ParseError::new(
                            self.here(),
                            "expected `,` or `)`, found end of input",
                        ))
                    }
                }
            }
        } else {
            self.next();
        }
        self.expect(Tok::Eq)?;
        let mut scope = Scope::default();
        scope.vars.extend(params.iter().cloned());
        let saved = std::mem::replace(&mut self.current_params, params.clone());
        let body = self.parse_process(&mut scope)?;
        self.current_params = saved;
        self.expect(Tok::Dot)?;
        self.defs.insert(name, DefInfo { params, body });
        Ok(())
    }

    fn parse_process(&mut self, scope: &mut Scope) -> Result<Process, ParseError> {
        let first = self.parse_seq(scope)?;
        let mut parts = vec![Rc::new(first)];
        while self.peek() == Some(&Tok::Bar) {
            self.next();
            parts.push(Rc::new(self.parse_seq(scope)?));
        }
        if parts.len() == 1 {
            Ok(Rc::try_unwrap(parts.pop().unwrap()).unwrap_or_else(|rc| (*rc).clone()))
        } else {
            Ok(Process::Parallel(parts))
        }
    }

    /// Parse an optional `. P` continuation.
    fn parse_cont(&mut self, scope: &mut Scope) -> Result<Process, ParseError> {
        if self.peek() == Some(&Tok::Dot) {
            self.next();
            self.parse_seq(scope)
        } else {
            Ok(Process::Stop)
        }
    }

    fn parse_seq(&mut self, scope: &mut Scope) -> Result<Process, ParseError> {
        let pos = self.here();
        match self.peek().cloned() {
            Some(Tok::Num(0)) => {
                self.next();
                Ok(Process::Stop)
            }
            Some(Tok::LParen) => {
                self.next();
                let p = self.parse_process(scope)?;
                self.expect(Tok::RParen)?;
                Ok(p)
            }
            Some(Tok::Ident(kw)) => match kw.as_str() {
                "out" => {
                    self.next();
                    self.expect(Tok::LParen)?;
                    let ch = self.parse_chan(scope)?;
                    self.expect(Tok::Comma)?;
                    let payload = self.parse_term(scope)?;
                    self.expect(Tok::RParen)?;
                    let then = self.parse_cont(scope)?;
                    Ok(Process::Output {
                        ch,
                        payload,
                        then: Rc::new(then),
                    })
                }
                "in" => {
                    self.next();
                    self.expect(Tok::LParen)?;
                    let ch = self.parse_chan(scope)?;
                    self.expect(Tok::Comma)?;
                    let mut binders = Vec::new();
                    let pattern = self.parse_pattern(scope, &mut binders)?;
                    self.expect(Tok::RParen)?;
                    let mut inner = scope.clone();
                    inner.vars.extend(binders);
                    let then = if self.peek() == Some(&Tok::Dot) {
                        self.next();
                        self.parse_seq(&mut inner)?
                    } else {
                        Process::Stop
                    };
                    Ok(Process::Input {
                        ch,
                        pattern,
                        then: Rc::new(then),
                    })
                }
                "new" => {
                    self.next();
                    let (name, npos) = self.expect_ident()?;
                    if KEYWORDS.contains(&name.as_str()) || Func::by_name(&name).is_some() {
                        return Err(ParseError::new(
                            npos,
                            format!("`{name}` cannot be a restricted name"),
                        ));
                    }
                    self.expect(Tok::Dot)?;
                    let mut inner = scope.clone();
                    inner.new_names.push(name.as_str().into());
                    let then = self.parse_seq(&mut inner)?;
                    Ok(Process::Restrict {
                        name: name.into(),
                        then: Rc::new(then),
                    })
                }
                "if" => {
                    self.next();
                    let lhs = self.parse_term(scope)?;
                    self.expect(Tok::Eq)?;
                    let rhs = self.parse_term(scope)?;
                    self.expect_kw("then")?;
                    let then = self.parse_seq(scope)?;
                    let els = if self.at_kw("else") {
                        self.next();
                        self.parse_seq(scope)?
                    } else {
                        Process::Stop
                    };
                    Ok(Process::IfEq {
                        lhs,
                        rhs,
                        then: Rc::new(then),
                        els: Rc::new(els),
                    })
                }
                "barrier" => {
                    self.next();
                    let ppos = self.here();
                    let phase = match self.next() {
                        Some((Tok::Num(n), _)) if n >= 1 => n,
                        Some((t, p)) => {
                            return Err(ParseError::new(
                                p,
                                format!("expected a phase number >= 1, found {t}"),
                            ))
                        }
                        None => return Err(ParseError::new(ppos, "expected a phase number >= 1")),
                    };
                    self.expect(Tok::Dot)?;
                    let then = self.parse_seq(scope)?;
                    Ok(Process::Barrier {
                        phase,
                        then: Rc::new(then),
                    })
                }
                "event" => {
                    self.next();
                    let (label, _) = self.expect_ident()?;
                    let mut args = Vec::new();
                    if self.peek() == Some(&Tok::LParen) {
                        self.next();
                        if self.peek() != Some(&Tok::RParen) {
                            loop {
                                args.push(self.parse_term(scope)?);
                                match self.next() {
                                    Some((Tok::Comma, _)) => continue,
                                    Some((Tok::RParen, _)) => break,
                                    Some((t, p)) => {
                                        return Err(ParseError::new(
                                            p,
                                            format!("expected `,` or `)`, found {t}"),
                                        ))
                                    }
                                    None => {
                                        return Err(ParseError::new(
                                            self.here(),
                                            "expected `,` or `)`",
                                        ))
                                    }
                                }
                            }
                        } else {
                            self.next();
                        }
                    }
                    let then = self.parse_cont(scope)?;
                    Ok(Process::Event {
                        label: label.into(),
                        args,
                        then: Rc::new(then),
                    })
                }
                "let" => {
                    self.next();
                    let (name, _) = self.expect_ident()?;
                    self.expect(Tok::Eq)?;
                    let value = self.parse_term(scope)?;
                    self.expect_kw("in")?;
                    let mut inner = scope.clone();
                    inner.vars.push(name.as_str().into());
                    let body = self.parse_seq(&mut inner)?;
                    let mut subst = Subst::new();
                    subst.insert(name.into(), value);
                    Ok(body.substitute(&subst))
                }
                _ => {
                    // def instantiation
                    if self.defs.contains_key(&kw) && self.peek2() == Some(&Tok::LParen) {
                        self.next();
                        self.expect(Tok::LParen)?;
                        let mut args: Vec<CallArg> = Vec::new();
                        if self.peek() != Some(&Tok::RParen) {
                            loop {
                                args.push(self.parse_call_arg(scope)?);
                                match self.next() {
                                    Some((Tok::Comma, _)) => continue,
                                    Some((Tok::RParen, _)) => break,
                                    Some((t, p)) => {
                                        return Err(ParseError::new(
                                            p,
                                            format!("expected `,` or `)`, found {t}"),
                                        ))
                                    }
                                    None => {
                                        return Err(ParseError::new(
                                            self.here(),
                                            "expected `,` or `)`",
                                        ))
                                    }
                                }
                            }
                        } else {
                            self.next();
                        }
                        self.expand_def(&kw, args, pos)
                    } else {
                        Err(ParseError::new(
                            pos,
                            format!("expected a process, found `{kw}`"),
                        ))
                    }
                }
            },
            Some(t) => Err(ParseError::new(
                pos,
                format!("expected a process, found {t}"),
            )),
            None => Err(ParseError::new(
                pos,
                "expected a process, found end of input",
            )),
        }
    }

    fn parse_chan(&mut self, scope: &mut Scope) -> Result<ChanExpr, ParseError> {
        let (first, pos) = self.expect_ident()?;
        if self.peek() == Some(&Tok::Dot) {
            self.next();
            let (to, _) = self.expect_ident()?;
            self.expect(Tok::Dot)?;
            let (tag, _) = self.expect_ident()?;
            let id = ChannelId::new(&first, &to, &tag);
            let is_param = |s: &str| self.current_params.iter().any(|p| p.as_ref() == s);
            if self.channels.contains_key(&id)
                || is_param(&first)
                || is_param(&to)
                || is_param(&tag)
            {
                Ok(ChanExpr::Decl(id))
            } else {
                Err(ParseError::new(pos, format!("undeclared channel {id}")))
            }
        } else {
            let t = self.resolve_ident(&first, pos, scope)?;
            Ok(ChanExpr::Name(t))
        }
    }

    fn resolve_ident(&self, name: &str, pos: Pos, scope: &Scope) -> Result<Term, ParseError> {
        if scope.vars.iter().any(|v| v.as_ref() == name) {
            return Ok(Term::var(name));
        }
        if scope.new_names.iter().any(|n| n.as_ref() == name) {
            return Ok(Term::name(name, false));
        }
        if self.privates.iter().any(|n| n.as_ref() == name) {
            return Ok(Term::name(name, false));
        }
        if self.frees.iter().any(|n| n.as_ref() == name) {
            return Ok(Term::name(name, true));
        }
        if let Some(f) = Func::by_name(name) {
            if f.arity() == 0 {
                return Ok(Term::apply(f, vec![]));
            }
        }
        if self.default_private_names {
            return Ok(Term::name(name, false));
        }
        Err(ParseError::new(pos, format!("unbound name `{name}`")))
    }

    fn parse_term(&mut self, scope: &mut Scope) -> Result<Term, ParseError> {
        let pos = self.here();
        match self.next() {
            Some((Tok::Ident(s), ipos)) => {
                if s == "choice" && self.peek() == Some(&Tok::LBracket) {
                    self.next();
                    let l = self.parse_term(scope)?;
                    self.expect(Tok::Comma)?;
                    let r = self.parse_term(scope)?;
                    self.expect(Tok::RBracket)?;
                    return Ok(Term::choice(l, r));
                }
                if self.peek() == Some(&Tok::LParen) {
                    let Some(f) = Func::by_name(&s) else {
                        return Err(ParseError::new(ipos, format!("unknown function `{s}`")));
                    };
                    self.next();
                    let mut args = Vec::new();
                    if self.peek() != Some(&Tok::RParen) {
                        loop {
                            args.push(self.parse_term(scope)?);
                            match self.next() {
                                Some((Tok::Comma, _)) => continue,
                                Some((Tok::RParen, _)) => break,
                                Some((t, p)) => {
                                    return Err(ParseError::new(
                                        p,
                                        format!("expected `,` or `)`, found {t}"),
                                    ))
                                }
                                None => {
                                    return Err(ParseError::new(self.here(), "expected `,` or `)`"))
                                }
                            }
                        }
                    } else {
                        self.next();
                    }
                    return Term::app(f, args).map_err(|e| ParseError::new(ipos, e.to_string()));
                }
                self.resolve_ident(&s, ipos, scope)
            }
            Some((Tok::LParen, _)) => {
                let mut items = vec![self.parse_term(scope)?];
                loop {
                    match self.next() {
                        Some((Tok::Comma, _)) => items.push(self.parse_term(scope)?),
                        Some((Tok::RParen, _)) => break,
                        Some((t, p)) => {
                            return Err(ParseError::new(
                                p,
                                format!("expected `,` or `)`, found {t}"),
                            ))
                        }
                        None => return Err(ParseError::new(self.here(), "expected `,` or `)`")),
                    }
                }
                if items.len() == 1 {
                    Ok(items.pop().unwrap())
                } else {
                    Ok(Term::tuple(items))
                }
            }
            Some((t, p)) => Err(ParseError::new(p, format!("expected a term, found {t}"))),
            None => Err(ParseError::new(pos, "expected a term, found end of input")),
        }
    }

    fn parse_pattern(
        &mut self,
        scope: &mut Scope,
        binders: &mut Vec<Ident>,
    ) -> Result<Pat, ParseError> {
        let pos = self.here();
        match self.next() {
            Some((Tok::Eq, _)) => {
                let (name, npos) = self.expect_ident()?;
                let t = if scope.vars.iter().any(|v| v.as_ref() == name)
                    || binders.iter().any(|v| v.as_ref() == name)
                {
                    Term::var(name.as_str())
                } else {
                    self.resolve_ident(&name, npos, scope)?
                };
                Ok(Pat::Test(t))
            }
            Some((Tok::Ident(s), ipos)) => {
                if s == "choice" && self.peek() == Some(&Tok::LBracket) {
                    return Err(ParseError::new(ipos, "`choice` is not allowed in patterns"));
                }
                if self.peek() == Some(&Tok::LParen) {
                    let Some(f) = Func::by_name(&s) else {
                        return Err(ParseError::new(ipos, format!("unknown function `{s}`")));
                    };
                    self.next();
                    let mut args = Vec::new();
                    if self.peek() != Some(&Tok::RParen) {
                        loop {
                            args.push(self.parse_pattern(scope, binders)?);
                            match self.next() {
                                Some((Tok::Comma, _)) => continue,
                                Some((Tok::RParen, _)) => break,
                                Some((t, p)) => {
                                    return Err(ParseError::new(
                                        p,
                                        format!("expected `,` or `)`, found {t}"),
                                    ))
                                }
                                None => {
                                    return Err(ParseError::new(self.here(), "expected `,` or `)`"))
                                }
                            }
                        }
                    } else {
                        self.next();
                    }
                    if args.len() != f.arity() {
                        return Err(ParseError::new(
                            ipos,
                            format!(
                                "arity mismatch for {} in pattern: expected {}, got {}",
                                f.name(),
                                f.arity(),
                                args.len()
                            ),
                        ));
                    }
                    return Ok(Pat::App(f, args));
                }
                // a declared or restriction-bound name is a literal test;
                // an unknown identifier binds a fresh variable
                if scope.new_names.iter().any(|n| n.as_ref() == s)
                    || self.privates.iter().any(|n| n.as_ref() == s)
                    || self.frees.iter().any(|n| n.as_ref() == s)
                {
                    return Ok(Pat::Test(self.resolve_ident(&s, ipos, scope)?));
                }
                if let Some(f) = Func::by_name(&s) {
                    if f.arity() == 0 {
                        return Ok(Pat::Test(Term::apply(f, vec![])));
                    }
                }
                if KEYWORDS.contains(&s.as_str()) {
                    return Err(ParseError::new(ipos, format!("`{s}` is a reserved word")));
                }
                // a bare identifier always binds (shadowing any outer
                // variable); testing a bound value is written `=x`
                if !binders.iter().any(|b| b.as_ref() == s) {
                    binders.push(s.as_str().into());
                }
                Ok(Pat::Bind(s.into()))
            }
            Some((Tok::LParen, _)) => {
                let mut items = vec![self.parse_pattern(scope, binders)?];
                loop {
                    match self.next() {
                        Some((Tok::Comma, _)) => items.push(self.parse_pattern(scope, binders)?),
                        Some((Tok::RParen, _)) => break,
                        Some((t, p)) => {
                            return Err(ParseError::new(
                                p,
                                format!("expected `,` or `)`, found {t}"),
                            ))
                        }
                        None => return Err(ParseError::new(self.here(), "expected `,` or `)`")),
                    }
                }
                if items.len() == 1 {
                    Ok(items.pop().unwrap())
                } else {
                    Ok(Pat::App(Func::Tuple(items.len() as u8), items))
                }
            }
            Some((t, p)) => Err(ParseError::new(p, format!("expected a pattern, found {t}"))),
            None => Err(ParseError::new(
                pos,
                "expected a pattern, found end of input",
            )),
        }
    }

    fn parse_call_arg(&mut self, scope: &mut Scope) -> Result<CallArg, ParseError> {
        // a bare identifier that resolves to nothing is an endpoint argument
        if let Some(Tok::Ident(s)) = self.peek().cloned() {
            let next_is_open = matches!(self.peek2(), Some(Tok::LParen) | Some(Tok::LBracket));
            if !next_is_open {
                let pos = self.here();
                if self.resolve_ident(&s, pos, scope).is_err() {
                    self.next();
                    return Ok(CallArg::Endpoint(s.into()));
                }
            }
        }
        Ok(CallArg::Term(self.parse_term(scope)?))
    }

    fn expand_def(
        &mut self,
        name: &str,
        args: Vec<CallArg>,
        call_pos: Pos,
    ) -> Result<Process, ParseError> {
        let def = &self.defs[name];
        if args.len() != def.params.len() {
            return Err(ParseError::new(
                call_pos,
                format!(
                    "`{name}` takes {} argument(s), got {}",
                    def.params.len(),
                    args.len()
                ),
            ));
        }
        let mut subst = Subst::new();
        let mut comp_map: BTreeMap<Ident, Ident> = BTreeMap::new();
        for (param, arg) in def.params.iter().zip(args.iter()) {
            match arg {
                CallArg::Term(t) => {
                    subst.insert(param.clone(), t.clone());
                    if let crate::term::TermNode::Name { id, .. } = t.node() {
                        comp_map.insert(param.clone(), id.clone());
                    }
                }
                CallArg::Endpoint(id) => {
                    comp_map.insert(param.clone(), id.clone());
                }
            }
        }
        let body = def.body.clone();
        let expanded = body.substitute(&subst);
        remap_channels(&expanded, &comp_map, &self.channels, call_pos)
    }
}

enum CallArg {
    Term(Term),
    Endpoint(Ident),
}

/// Rewrite channel-triple components that name def parameters, then verify
/// every resulting triple is declared.
fn remap_channels(
    p: &Process,
    map: &BTreeMap<Ident, Ident>,
    channels: &IndexMap<ChannelId, Visibility>,
    pos: Pos,
) -> Result<Process, ParseError> {
    let remap_chan = |ch: &ChanExpr| -> Result<ChanExpr, ParseError> {
        match ch {
            ChanExpr::Decl(id) => {
                let sub = |i: &Ident| map.get(i).cloned().unwrap_or_else(|| i.clone());
                let id2 = ChannelId {
                    from: sub(&id.from),
                    to: sub(&id.to),
                    tag: sub(&id.tag),
                };
                if !channels.contains_key(&id2) {
                    return Err(ParseError::new(pos, format!("undeclared channel {id2}")));
                }
                Ok(ChanExpr::Decl(id2))
            }
            other => Ok(other.clone()),
        }
    };
    Ok(match p {
        Process::Stop => Process::Stop,
        Process::Output { ch, payload, then } => Process::Output {
            ch: remap_chan(ch)?,
            payload: payload.clone(),
            then: Rc::new(remap_channels(then, map, channels, pos)?),
        },
        Process::Input { ch, pattern, then } => Process::Input {
            ch: remap_chan(ch)?,
            pattern: pattern.clone(),
            then: Rc::new(remap_channels(then, map, channels, pos)?),
        },
        Process::Parallel(ps) => Process::Parallel(
            ps.iter()
                .map(|q| remap_channels(q, map, channels, pos).map(Rc::new))
                .collect::<Result<_, _>>()?,
        ),
        Process::Restrict { name, then } => Process::Restrict {
            name: name.clone(),
            then: Rc::new(remap_channels(then, map, channels, pos)?),
        },
        Process::IfEq {
            lhs,
            rhs,
            then,
            els,
        } => Process::IfEq {
            lhs: lhs.clone(),
            rhs: rhs.clone(),
            then: Rc::new(remap_channels(then, map, channels, pos)?),
            els: Rc::new(remap_channels(els, map, channels, pos)?),
        },
        Process::Barrier { phase, then } => Process::Barrier {
            phase: *phase,
            then: Rc::new(remap_channels(then, map, channels, pos)?),
        },
        Process::Event { label, args, then } => Process::Event {
            label: label.clone(),
            args: args.clone(),
            then: Rc::new(remap_channels(then, map, channels, pos)?),
        },
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_input_fails_at_origin() {
        let err = parse_model("").unwrap_err();
        assert_eq!((err.line, err.col), (1, 1));
    }

    #[test]
    fn unbound_name_is_reported() {
        let err = parse_model("free c.\nchannel a.b.t public.\nprocess out(a.b.t, pk(sk)). 0")
            .unwrap_err();
        assert!(err.msg.contains("unbound name `sk`"), "{err}");
        assert_eq!(err.line, 3);
    }

    #[test]
    fn small_model_round_trips() {
        let src = "free a, b.\nprivate k.\nchannel alice.bob.msg public.\nprocess out(alice.bob.msg, penc(a, b, pk(k))). 0";
        let m = parse_model(src).unwrap();
        let rendered = m.render();
        let m2 = parse_model(&rendered).unwrap();
        assert_eq!(m, m2);
    }

    #[test]
    fn choice_and_tuples_parse() {
        let src = "free a, b.\nchannel x.y.t public.\nprocess out(x.y.t, (a, choice[a,b])). 0";
        let m = parse_model(src).unwrap();
        match &m.process {
            Process::Output { payload, .. } => {
                assert!(payload.has_choice());
            }
            other => panic!("unexpected process {other:?}"),
        }
    }

    #[test]
    fn let_bindings_substitute() {
        let src =
            "free a.\nchannel x.y.t public.\nprocess let h = hash(a) in out(x.y.t, hash(h)). 0";
        let m = parse_model(src).unwrap();
        match &m.process {
            Process::Output { payload, .. } => {
                assert_eq!(payload.to_string(), "hash(hash(a))");
            }
            other => panic!("unexpected process {other:?}"),
        }
    }

    #[test]
    fn defs_expand_with_endpoint_args() {
        let src = "free a.\nchannel v1.t.msg private.\nchannel v2.t.msg private.\n\
                   def Send(id, x) = out(id.t.msg, x). 0.\n\
                   process Send(v1, a) | Send(v2, hash(a))";
        let m = parse_model(src).unwrap();
        match &m.process {
            Process::Parallel(ps) => {
                assert_eq!(ps.len(), 2);
                match ps[0].as_ref() {
                    Process::Output { ch, .. } => {
                        assert_eq!(ch.to_string(), "v1.t.msg");
                    }
                    other => panic!("unexpected {other:?}"),
                }
            }
            other => panic!("unexpected process {other:?}"),
        }
    }

    #[test]
    fn pattern_equality_tests_parse() {
        let src = "free tag.\nchannel x.y.t private.\nchannel y.x.u private.\nprocess in(x.y.t, (tag, v)). in(y.x.u, (tag, =v)). 0";
        let m = parse_model(src).unwrap();
        match &m.process {
            Process::Input { pattern, then, .. } => {
                assert!(matches!(pattern, Pat::App(Func::Tuple(2), _)));
                match then.as_ref() {
                    Process::Input { pattern, .. } => match pattern {
                        Pat::App(_, parts) => {
                            assert_eq!(parts[1], Pat::Test(Term::var("v")));
                        }
                        other => panic!("unexpected {other:?}"),
                    },
                    other => panic!("unexpected {other:?}"),
                }
            }
            other => panic!("unexpected process {other:?}"),
        }
    }

    #[test]
    fn barrier_and_if_parse() {
        let src = "free a.\nchannel x.y.t public.\nprocess if a = a then barrier 1. out(x.y.t, a). 0 else 0";
        let m = parse_model(src).unwrap();
        assert!(matches!(m.process, Process::IfEq { .. }));
    }

    #[test]
    fn undeclared_channel_is_rejected() {
        let err = parse_model("free a.\nprocess out(x.y.t, a). 0").unwrap_err();
        assert!(err.msg.contains("undeclared channel"), "{err}");
    }
}
