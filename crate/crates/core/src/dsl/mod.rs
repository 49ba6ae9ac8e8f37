//! The program DSL: grammar, AST, parser, pretty-printer, and the program
//! token vocabulary that serves as the model's output alphabet.
//!
//! Concrete grammar (canonical form produced by [`pretty_print`]):
//!
//! ```text
//! prog  := "DEF" "run" "{" stmts "}"
//! stmts := stmt+
//! stmt  := ACTION
//!        | "REPEAT" INT "{" stmts "}"
//!        | "WHILE" "(" cond ")" "{" stmts "}"
//!        | "IF" "(" cond ")" "{" stmts "}" [ "ELSE" "{" stmts "}" ]
//! cond  := PERCEPT | "NOT" "(" cond ")"
//!        | "AND" "(" cond "," cond ")" | "OR" "(" cond "," cond ")"
//! ```
//!
//! Statements are juxtaposed (no separators). Action tokens come from the
//! fixed `world::ACTION_NAMES` order; percepts are written `P0..P{q-1}`.
//! Integer literals are single tokens, one per value in `[1, max_repeat]`.

mod parser;
mod printer;
mod vocab;

pub use parser::parse;
pub use printer::pretty_print;
pub use vocab::{ProgramVocab, BOS_ID, EOS_ID, PAD_ID};

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const MAX_NEST_DEFAULT: usize = 4;
pub const MAX_STMTS_DEFAULT: usize = 24;
pub const MAX_REPEAT_DEFAULT: u32 = 6;

/// Structural bounds on programs. The parser enforces these; the alias
/// closure relaxes `max_stmts` to absorb unrolled repeats.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DslLimits {
    pub max_nest: usize,
    pub max_stmts: usize,
    pub max_repeat: u32,
}

impl Default for DslLimits {
    fn default() -> Self {
        DslLimits {
            max_nest: MAX_NEST_DEFAULT,
            max_stmts: MAX_STMTS_DEFAULT,
            max_repeat: MAX_REPEAT_DEFAULT,
        }
    }
}

impl DslLimits {
    /// Limits used inside alias closures: statement growth from unrolling is
    /// allowed up to `max_stmts * max_repeat`.
    pub fn relaxed_for_closure(self) -> DslLimits {
        DslLimits {
            max_stmts: self.max_stmts * self.max_repeat as usize,
            ..self
        }
    }
}

/// Language surface parameters: how many percepts and actions exist, plus
/// the structural limits.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DslConfig {
    pub q: usize,
    pub m: usize,
    pub limits: DslLimits,
}

impl Default for DslConfig {
    fn default() -> Self {
        DslConfig {
            q: 6,
            m: 6,
            limits: DslLimits::default(),
        }
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum DslError {
    #[error("syntax error at byte {pos}: expected {expected}, found {found}")]
    Syntax {
        pos: usize,
        expected: String,
        found: String,
    },
    #[error("limit exceeded: {0}")]
    Limit(String),
    #[error("cannot decode token sequence: {0}")]
    Decode(String),
}

/// A whole program: the body of the single entry point `run`.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct ProgramAst {
    pub body: Vec<Statement>,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum Statement {
    /// One action primitive, by index.
    Action(usize),
    Repeat {
        count: u32,
        body: Vec<Statement>,
    },
    While {
        cond: Cond,
        body: Vec<Statement>,
    },
    If {
        cond: Cond,
        then_body: Vec<Statement>,
    },
    IfElse {
        cond: Cond,
        then_body: Vec<Statement>,
        else_body: Vec<Statement>,
    },
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum Cond {
    /// One perception primitive, by index.
    Percept(usize),
    Not(Box<Cond>),
    And(Box<Cond>, Box<Cond>),
    Or(Box<Cond>, Box<Cond>),
}

impl ProgramAst {
    pub fn new(body: Vec<Statement>) -> Self {
        ProgramAst { body }
    }

    /// Maximum statement nesting depth; top-level statements sit at depth 1.
    pub fn depth(&self) -> usize {
        fn of(stmts: &[Statement]) -> usize {
            stmts
                .iter()
                .map(|s| match s {
                    Statement::Action(_) => 1,
                    Statement::Repeat { body, .. } | Statement::While { body, .. } => 1 + of(body),
                    Statement::If { then_body, .. } => 1 + of(then_body),
                    Statement::IfElse {
                        then_body,
                        else_body,
                        ..
                    } => 1 + of(then_body).max(of(else_body)),
                })
                .max()
                .unwrap_or(0)
        }
        of(&self.body)
    }

    /// Total number of statement nodes.
    pub fn stmt_count(&self) -> usize {
        fn of(stmts: &[Statement]) -> usize {
            stmts
                .iter()
                .map(|s| match s {
                    Statement::Action(_) => 1,
                    Statement::Repeat { body, .. } | Statement::While { body, .. } => 1 + of(body),
                    Statement::If { then_body, .. } => 1 + of(then_body),
                    Statement::IfElse {
                        then_body,
                        else_body,
                        ..
                    } => 1 + of(then_body) + of(else_body),
                })
                .sum()
        }
        of(&self.body)
    }

    /// Checks every structural invariant against a config: non-empty bodies,
    /// depth/size limits, repeat counts in [1, max_repeat], action indices
    /// below m, and percept indices below q.
    pub fn validate(&self, cfg: &DslConfig) -> Result<(), DslError> {
        fn check_cond(c: &Cond, q: usize) -> Result<(), DslError> {
            match c {
                Cond::Percept(i) => {
                    if *i >= q {
                        return Err(DslError::Limit(format!(
                            "percept index {i} out of range (q = {q})"
                        )));
                    }
                }
                Cond::Not(a) => check_cond(a, q)?,
                Cond::And(a, b) | Cond::Or(a, b) => {
                    check_cond(a, q)?;
                    check_cond(b, q)?;
                }
            }
            Ok(())
        }
        fn check_stmts(stmts: &[Statement], cfg: &DslConfig) -> Result<(), DslError> {
            if stmts.is_empty() {
                return Err(DslError::Limit("statement bodies must be non-empty".into()));
            }
            for s in stmts {
                match s {
                    Statement::Action(a) => {
                        if *a >= cfg.m {
                            return Err(DslError::Limit(format!(
                                "action index {a} out of range (m = {})",
                                cfg.m
                            )));
                        }
                    }
                    Statement::Repeat { count, body } => {
                        if *count < 1 || *count > cfg.limits.max_repeat {
                            return Err(DslError::Limit(format!(
                                "repeat count {count} out of range [1, {}]",
                                cfg.limits.max_repeat
                            )));
                        }
                        check_stmts(body, cfg)?;
                    }
                    Statement::While { cond, body } => {
                        check_cond(cond, cfg.q)?;
                        check_stmts(body, cfg)?;
                    }
                    Statement::If { cond, then_body } => {
                        check_cond(cond, cfg.q)?;
                        check_stmts(then_body, cfg)?;
                    }
                    Statement::IfElse {
                        cond,
                        then_body,
                        else_body,
                    } => {
                        check_cond(cond, cfg.q)?;
                        check_stmts(then_body, cfg)?;
                        check_stmts(else_body, cfg)?;
                    }
                }
            }
            Ok(())
        }
        check_stmts(&self.body, cfg)?;
        let depth = self.depth();
        if depth > cfg.limits.max_nest {
            return Err(DslError::Limit(format!(
                "nesting depth {depth} exceeds max {}",
                cfg.limits.max_nest
            )));
        }
        let count = self.stmt_count();
        if count > cfg.limits.max_stmts {
            return Err(DslError::Limit(format!(
                "statement count {count} exceeds max {}",
                cfg.limits.max_stmts
            )));
        }
        Ok(())
    }
}
