//! Canonical pretty-printer for models. `parse_model(render(m)) == m`
//! for every well-formed model; trace and snapshot output rely on this
//! rendering being stable.

use std::fmt::Write;

use super::{Model, Pat, Process, Visibility};
use crate::term::{Func, Term, TermNode};

pub fn render_model(m: &Model) -> String {
    let mut out = String::new();
    if !m.free_names.is_empty() {
        let names: Vec<&str> = m.free_names.iter().map(|n| n.as_ref()).collect();
        let _ = writeln!(out, "free {}.", names.join(", "));
    }
    if !m.private_names.is_empty() {
        let names: Vec<&str> = m.private_names.iter().map(|n| n.as_ref()).collect();
        let _ = writeln!(out, "private {}.", names.join(", "));
    }
    for ch in &m.channels {
        let vis = match ch.visibility {
            Visibility::Public => "public",
            Visibility::Private => "private",
        };
        let _ = writeln!(out, "channel {} {vis}.", ch.id);
    }
    out.push_str("process\n");
    render_process(&m.process, 0, &mut out);
    out.push('\n');
    out
}

fn indent(level: usize, out: &mut String) {
    for _ in 0..level {
        out.push_str("  ");
    }
}

pub fn render_pattern(p: &Pat) -> String {
    match p {
        Pat::Bind(v) => v.to_string(),
        Pat::Test(t) => match t.node() {
            TermNode::Var(v) => format!("={v}"),
            TermNode::Name { id, .. } => id.to_string(),
            TermNode::App(f, _) if f.arity() == 0 => t.to_string(),
            _ => format!("={t}"),
        },
        Pat::App(Func::Tuple(_), args) => {
            let parts: Vec<String> = args.iter().map(render_pattern).collect();
            format!("({})", parts.join(","))
        }
        Pat::App(f, args) => {
            let parts: Vec<String> = args.iter().map(render_pattern).collect();
            format!("{}({})", f.name(), parts.join(","))
        }
    }
}

pub fn render_process(p: &Process, level: usize, out: &mut String) {
    render_guarded(p, level, false, out);
}

/// `else_follows` marks positions that an `else` keyword textually
/// follows: a bare `if` rendered there would capture it, so such an `if`
/// gets an explicit `else 0`.
fn render_guarded(p: &Process, level: usize, else_follows: bool, out: &mut String) {
    match p {
        Process::Stop => {
            indent(level, out);
            out.push('0');
        }
        Process::Output { ch, payload, then } => {
            indent(level, out);
            let _ = write!(out, "out({ch}, {payload}).");
            out.push('\n');
            render_guarded(then, level, else_follows, out);
        }
        Process::Input { ch, pattern, then } => {
            indent(level, out);
            let _ = write!(out, "in({ch}, {}).", render_pattern(pattern));
            out.push('\n');
            render_guarded(then, level, else_follows, out);
        }
        Process::Parallel(ps) => {
            indent(level, out);
            out.push_str("(\n");
            for (i, q) in ps.iter().enumerate() {
                if i > 0 {
                    indent(level, out);
                    out.push_str("|\n");
                }
                render_guarded(q, level + 1, false, out);
                out.push('\n');
            }
            indent(level, out);
            out.push(')');
        }
        Process::Restrict { name, then } => {
            indent(level, out);
            let _ = write!(out, "new {name}.");
            out.push('\n');
            render_guarded(then, level, else_follows, out);
        }
        Process::IfEq {
            lhs,
            rhs,
            then,
            els,
        } => {
            indent(level, out);
            let _ = write!(out, "if {lhs} = {rhs} then");
            out.push('\n');
            let needs_else = else_follows || !matches!(els.as_ref(), Process::Stop);
            render_guarded(then, level + 1, needs_else, out);
            if needs_else {
                out.push('\n');
                indent(level, out);
                out.push_str("else\n");
                render_guarded(els, level + 1, else_follows, out);
            }
        }
        Process::Barrier { phase, then } => {
            indent(level, out);
            let _ = write!(out, "barrier {phase}.");
            out.push('\n');
            render_guarded(then, level, else_follows, out);
        }
        Process::Event { label, args, then } => {
            indent(level, out);
            if args.is_empty() {
                let _ = write!(out, "event {label}.");
            } else {
                let parts: Vec<String> = args.iter().map(Term::to_string).collect();
                let _ = write!(out, "event {label}({}).", parts.join(","));
            }
            out.push('\n');
            render_guarded(then, level, else_follows, out);
        }
    }
}

/// Single-line rendering used for state canonicalization and diagnostics.
pub fn render_process_flat(p: &Process, out: &mut String) {
    match p {
        Process::Stop => out.push('0'),
        Process::Output { ch, payload, then } => {
            let _ = write!(out, "out({ch},{payload}).");
            render_process_flat(then, out);
        }
        Process::Input { ch, pattern, then } => {
            let _ = write!(out, "in({ch},{}).", render_pattern(pattern));
            render_process_flat(then, out);
        }
        Process::Parallel(ps) => {
            out.push('(');
            for (i, q) in ps.iter().enumerate() {
                if i > 0 {
                    out.push('|');
                }
                render_process_flat(q, out);
            }
            out.push(')');
        }
        Process::Restrict { name, then } => {
            let _ = write!(out, "new {name}.");
            render_process_flat(then, out);
        }
        Process::IfEq {
            lhs,
            rhs,
            then,
            els,
        } => {
            let _ = write!(out, "if {lhs}={rhs} then{{");
            render_process_flat(then, out);
            out.push_str("}else{");
            render_process_flat(els, out);
            out.push('}');
        }
        Process::Barrier { phase, then } => {
            let _ = write!(out, "barrier {phase}.");
            render_process_flat(then, out);
        }
        Process::Event { label, args, then } => {
            let parts: Vec<String> = args.iter().map(Term::to_string).collect();
            let _ = write!(out, "event {label}({}).", parts.join(","));
            render_process_flat(then, out);
        }
    }
}
