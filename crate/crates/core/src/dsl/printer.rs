//! Canonical single-line pretty-printer.
//!
//! Invariant: `parse(pretty_print(ast)) == ast` for every valid AST, and
//! printing is injective, so the canonical string doubles as a dedup key.

use super::{Cond, ProgramAst, Statement};
use crate::world::action_name;
use std::fmt::Write;

fn write_cond(c: &Cond, out: &mut String) {
    match c {
        Cond::Percept(i) => {
            let _ = write!(out, "P{i}");
        }
        Cond::Not(a) => {
            out.push_str("NOT(");
            write_cond(a, out);
            out.push(')');
        }
        Cond::And(a, b) => {
            out.push_str("AND(");
            write_cond(a, out);
            out.push(',');
            write_cond(b, out);
            out.push(')');
        }
        Cond::Or(a, b) => {
            out.push_str("OR(");
            write_cond(a, out);
            out.push(',');
            write_cond(b, out);
            out.push(')');
        }
    }
}

fn write_stmts(body: &[Statement], out: &mut String) {
    for (i, s) in body.iter().enumerate() {
        if i > 0 {
            out.push(' ');
        }
        match s {
            Statement::Action(a) => out.push_str(action_name(*a)),
            Statement::Repeat { count, body } => {
                let _ = write!(out, "REPEAT {count} {{ ");
                write_stmts(body, out);
                out.push_str(" }");
            }
            Statement::While { cond, body } => {
                out.push_str("WHILE (");
                write_cond(cond, out);
                out.push_str(") { ");
                write_stmts(body, out);
                out.push_str(" }");
            }
            Statement::If { cond, then_body } => {
                out.push_str("IF (");
                write_cond(cond, out);
                out.push_str(") { ");
                write_stmts(then_body, out);
                out.push_str(" }");
            }
            Statement::IfElse {
                cond,
                then_body,
                else_body,
            } => {
                out.push_str("IF (");
                write_cond(cond, out);
                out.push_str(") { ");
                write_stmts(then_body, out);
                out.push_str(" } ELSE { ");
                write_stmts(else_body, out);
                out.push_str(" }");
            }
        }
    }
}

/// Renders an AST in canonical form: single line, single spaces around
/// braces and between statements, no space inside condition expressions.
pub fn pretty_print(ast: &ProgramAst) -> String {
    let mut out = String::from("DEF run { ");
    write_stmts(&ast.body, &mut out);
    out.push_str(" }");
    out
}
