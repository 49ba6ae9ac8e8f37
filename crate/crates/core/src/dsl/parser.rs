//! Lexer and recursive-descent parser for the DSL.

use super::{Cond, DslConfig, DslError, ProgramAst, Statement};
use crate::world::{action_name, ACTION_NAMES};

/// Lexemes. Every token the grammar knows, including the value-carrying
/// integer, action, and percept tokens.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub(crate) enum Tok {
    Def,
    Run,
    LBrace,
    RBrace,
    LParen,
    RParen,
    Comma,
    Repeat,
    While,
    If,
    Else,
    Not,
    And,
    Or,
    Int(u32),
    Action(usize),
    Percept(usize),
}

pub(crate) const KEYWORDS: [Tok; 14] = [
    Tok::Def,
    Tok::Run,
    Tok::LBrace,
    Tok::RBrace,
    Tok::LParen,
    Tok::RParen,
    Tok::Comma,
    Tok::Repeat,
    Tok::While,
    Tok::If,
    Tok::Else,
    Tok::Not,
    Tok::And,
    Tok::Or,
];

impl Tok {
    /// Surface text of this lexeme.
    pub(crate) fn text(self) -> String {
        match self {
            Tok::Def => "DEF".into(),
            Tok::Run => "run".into(),
            Tok::LBrace => "{".into(),
            Tok::RBrace => "}".into(),
            Tok::LParen => "(".into(),
            Tok::RParen => ")".into(),
            Tok::Comma => ",".into(),
            Tok::Repeat => "REPEAT".into(),
            Tok::While => "WHILE".into(),
            Tok::If => "IF".into(),
            Tok::Else => "ELSE".into(),
            Tok::Not => "NOT".into(),
            Tok::And => "AND".into(),
            Tok::Or => "OR".into(),
            Tok::Int(n) => n.to_string(),
            Tok::Action(i) => action_name(i).into(),
            Tok::Percept(i) => format!("P{i}"),
        }
    }
}

fn lex(src: &str) -> Result<Vec<(Tok, usize)>, DslError> {
    let bytes = src.as_bytes();
    let mut toks = Vec::new();
    let mut i = 0;
    while i < bytes.len() {
        let b = bytes[i];
        match b {
            b' ' | b'\t' | b'\r' | b'\n' => i += 1,
            b'{' | b'}' | b'(' | b')' | b',' => {
                let t = match b {
                    b'{' => Tok::LBrace,
                    b'}' => Tok::RBrace,
                    b'(' => Tok::LParen,
                    b')' => Tok::RParen,
                    _ => Tok::Comma,
                };
                toks.push((t, i));
                i += 1;
            }
            b'0'..=b'9' => {
                let start = i;
                while i < bytes.len() && bytes[i].is_ascii_digit() {
                    i += 1;
                }
                let text = &src[start..i];
                let n: u32 = text.parse().map_err(|_| DslError::Syntax {
                    pos: start,
                    expected: "integer literal".into(),
                    found: text.into(),
                })?;
                toks.push((Tok::Int(n), start));
            }
            b'A'..=b'Z' | b'a'..=b'z' | b'_' => {
                let start = i;
                while i < bytes.len()
                    && (bytes[i].is_ascii_alphanumeric() || bytes[i] == b'_')
                {
                    i += 1;
                }
                let word = &src[start..i];
                let tok = match word {
                    "DEF" => Some(Tok::Def),
                    "run" => Some(Tok::Run),
                    "REPEAT" => Some(Tok::Repeat),
                    "WHILE" => Some(Tok::While),
                    "IF" => Some(Tok::If),
                    "ELSE" => Some(Tok::Else),
                    "NOT" => Some(Tok::Not),
                    "AND" => Some(Tok::And),
                    "OR" => Some(Tok::Or),
                    _ => None,
                };
                let tok = tok.or_else(|| {
                    ACTION_NAMES
                        .iter()
                        .position(|&a| a == word)
                        .map(Tok::Action)
                });
                let tok = tok.or_else(|| {
                    word.strip_prefix('P')
                        .filter(|rest| !rest.is_empty() && rest.bytes().all(|c| c.is_ascii_digit()))
                        .and_then(|rest| rest.parse().ok())
                        .map(Tok::Percept)
                });
                match tok {
                    Some(t) => toks.push((t, start)),
                    None => {
                        return Err(DslError::Syntax {
                            pos: start,
                            expected: "keyword, action, or percept".into(),
                            found: word.into(),
                        })
                    }
                }
            }
            _ => {
                return Err(DslError::Syntax {
                    pos: i,
                    expected: "token".into(),
                    found: format!("{:?}", char::from(b)),
                })
            }
        }
    }
    Ok(toks)
}

pub(crate) struct TokParser<'a> {
    toks: &'a [(Tok, usize)],
    pos: usize,
    end: usize,
}

impl<'a> TokParser<'a> {
    pub(crate) fn new(toks: &'a [(Tok, usize)], end: usize) -> Self {
        TokParser { toks, pos: 0, end }
    }

    fn peek(&self) -> Option<Tok> {
        self.toks.get(self.pos).map(|&(t, _)| t)
    }

    fn here(&self) -> usize {
        self.toks
            .get(self.pos)
            .map(|&(_, p)| p)
            .unwrap_or(self.end)
    }

    fn found(&self) -> String {
        match self.peek() {
            Some(t) => t.text(),
            None => "end of input".into(),
        }
    }

    fn err(&self, expected: &str) -> DslError {
        DslError::Syntax {
            pos: self.here(),
            expected: expected.into(),
            found: self.found(),
        }
    }

    fn expect(&mut self, want: Tok) -> Result<(), DslError> {
        if self.peek() == Some(want) {
            self.pos += 1;
            Ok(())
        } else {
            Err(self.err(&format!("'{}'", want.text())))
        }
    }

    fn eat(&mut self, want: Tok) -> bool {
        if self.peek() == Some(want) {
            self.pos += 1;
            true
        } else {
            false
        }
    }

    pub(crate) fn program(&mut self) -> Result<ProgramAst, DslError> {
        self.expect(Tok::Def)?;
        self.expect(Tok::Run)?;
        self.expect(Tok::LBrace)?;
        let body = self.stmts()?;
        self.expect(Tok::RBrace)?;
        if self.peek().is_some() {
            return Err(self.err("end of input"));
        }
        Ok(ProgramAst::new(body))
    }

    /// One or more statements; stops before any token that cannot start a
    /// statement so the caller reports the missing `}` itself.
    fn stmts(&mut self) -> Result<Vec<Statement>, DslError> {
        let mut out = vec![self.stmt()?];
        while matches!(
            self.peek(),
            Some(Tok::Action(_) | Tok::Repeat | Tok::While | Tok::If)
        ) {
            out.push(self.stmt()?);
        }
        Ok(out)
    }

    fn stmt(&mut self) -> Result<Statement, DslError> {
        match self.peek() {
            Some(Tok::Action(i)) => {
                self.pos += 1;
                Ok(Statement::Action(i))
            }
            Some(Tok::Repeat) => {
                self.pos += 1;
                let count = match self.peek() {
                    Some(Tok::Int(n)) => {
                        self.pos += 1;
                        n
                    }
                    _ => return Err(self.err("repeat count")),
                };
                self.expect(Tok::LBrace)?;
                let body = self.stmts()?;
                self.expect(Tok::RBrace)?;
                Ok(Statement::Repeat { count, body })
            }
            Some(Tok::While) => {
                self.pos += 1;
                self.expect(Tok::LParen)?;
                let cond = self.cond()?;
                self.expect(Tok::RParen)?;
                self.expect(Tok::LBrace)?;
                let body = self.stmts()?;
                self.expect(Tok::RBrace)?;
                Ok(Statement::While { cond, body })
            }
            Some(Tok::If) => {
                self.pos += 1;
                self.expect(Tok::LParen)?;
                let cond = self.cond()?;
                self.expect(Tok::RParen)?;
                self.expect(Tok::LBrace)?;
                let then_body = self.stmts()?;
                self.expect(Tok::RBrace)?;
                if self.eat(Tok::Else) {
                    self.expect(Tok::LBrace)?;
                    let else_body = self.stmts()?;
                    self.expect(Tok::RBrace)?;
                    Ok(Statement::IfElse {
                        cond,
                        then_body,
                        else_body,
                    })
                } else {
                    Ok(Statement::If { cond, then_body })
                }
            }
            _ => Err(self.err("action, 'REPEAT', 'WHILE', or 'IF'")),
        }
    }

    fn cond(&mut self) -> Result<Cond, DslError> {
        match self.peek() {
            Some(Tok::Percept(i)) => {
                self.pos += 1;
                Ok(Cond::Percept(i))
            }
            Some(Tok::Not) => {
                self.pos += 1;
                self.expect(Tok::LParen)?;
                let inner = self.cond()?;
                self.expect(Tok::RParen)?;
                Ok(Cond::Not(Box::new(inner)))
            }
            Some(Tok::And) | Some(Tok::Or) => {
                let is_and = self.peek() == Some(Tok::And);
                self.pos += 1;
                self.expect(Tok::LParen)?;
                let a = self.cond()?;
                self.expect(Tok::Comma)?;
                let b = self.cond()?;
                self.expect(Tok::RParen)?;
                Ok(if is_and {
                    Cond::And(Box::new(a), Box::new(b))
                } else {
                    Cond::Or(Box::new(a), Box::new(b))
                })
            }
            _ => Err(self.err("percept, 'NOT', 'AND', or 'OR'")),
        }
    }
}

/// Parses source text into an AST and validates every structural invariant
/// (depth, statement count, repeat range, primitive index ranges).
pub fn parse(source: &str, cfg: &DslConfig) -> Result<ProgramAst, DslError> {
    let toks = lex(source)?;
    let end = source.len();
    let ast = TokParser::new(&toks, end).program()?;
    ast.validate(cfg)?;
    Ok(ast)
}

/// Token-stream walk of an AST, in the exact order the printer emits text.
pub(crate) fn ast_to_toks(ast: &ProgramAst) -> Vec<Tok> {
    fn cond(c: &Cond, out: &mut Vec<Tok>) {
        match c {
            Cond::Percept(i) => out.push(Tok::Percept(*i)),
            Cond::Not(a) => {
                out.push(Tok::Not);
                out.push(Tok::LParen);
                cond(a, out);
                out.push(Tok::RParen);
            }
            Cond::And(a, b) | Cond::Or(a, b) => {
                out.push(if matches!(c, Cond::And(..)) {
                    Tok::And
                } else {
                    Tok::Or
                });
                out.push(Tok::LParen);
                cond(a, out);
                out.push(Tok::Comma);
                cond(b, out);
                out.push(Tok::RParen);
            }
        }
    }
    fn stmts(body: &[Statement], out: &mut Vec<Tok>) {
        for s in body {
            match s {
                Statement::Action(i) => out.push(Tok::Action(*i)),
                Statement::Repeat { count, body } => {
                    out.push(Tok::Repeat);
                    out.push(Tok::Int(*count));
                    out.push(Tok::LBrace);
                    stmts(body, out);
                    out.push(Tok::RBrace);
                }
                Statement::While { cond: c, body } => {
                    out.push(Tok::While);
                    out.push(Tok::LParen);
                    cond(c, out);
                    out.push(Tok::RParen);
                    out.push(Tok::LBrace);
                    stmts(body, out);
                    out.push(Tok::RBrace);
                }
                Statement::If { cond: c, then_body } => {
                    out.push(Tok::If);
                    out.push(Tok::LParen);
                    cond(c, out);
                    out.push(Tok::RParen);
                    out.push(Tok::LBrace);
                    stmts(then_body, out);
                    out.push(Tok::RBrace);
                }
                Statement::IfElse {
                    cond: c,
                    then_body,
                    else_body,
                } => {
                    out.push(Tok::If);
                    out.push(Tok::LParen);
                    cond(c, out);
                    out.push(Tok::RParen);
                    out.push(Tok::LBrace);
                    stmts(then_body, out);
                    out.push(Tok::RBrace);
                    out.push(Tok::Else);
                    out.push(Tok::LBrace);
                    stmts(else_body, out);
                    out.push(Tok::RBrace);
                }
            }
        }
    }
    let mut out = vec![Tok::Def, Tok::Run, Tok::LBrace];
    stmts(&ast.body, &mut out);
    out.push(Tok::RBrace);
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::world::{ATTACK, MOVE, TURN_L};

    fn cfg() -> DslConfig {
        DslConfig::default()
    }

    #[test]
    fn smallest_program() {
        let ast = parse("DEF run { MOVE }", &cfg()).unwrap();
        assert_eq!(ast, ProgramAst::new(vec![Statement::Action(MOVE)]));
    }

    #[test]
    fn repeat_two_move() {
        let ast = parse("DEF run { REPEAT 2 { MOVE } }", &cfg()).unwrap();
        assert_eq!(
            ast,
            ProgramAst::new(vec![Statement::Repeat {
                count: 2,
                body: vec![Statement::Action(MOVE)],
            }])
        );
    }

    #[test]
    fn ifelse_with_negated_percept() {
        // Oracle: hand-built AST, compared structurally.
        let ast = parse(
            "DEF run { IF (NOT(P0)) { ATTACK } ELSE { TURN_L } }",
            &cfg(),
        )
        .unwrap();
        assert_eq!(
            ast,
            ProgramAst::new(vec![Statement::IfElse {
                cond: Cond::Not(Box::new(Cond::Percept(0))),
                then_body: vec![Statement::Action(ATTACK)],
                else_body: vec![Statement::Action(TURN_L)],
            }])
        );
    }

    #[test]
    fn binary_conds_parse() {
        let ast = parse("DEF run { WHILE (AND(P0,OR(P1,NOT(P2)))) { NOOP } }", &cfg()).unwrap();
        match &ast.body[0] {
            Statement::While { cond, .. } => match cond {
                Cond::And(a, b) => {
                    assert_eq!(**a, Cond::Percept(0));
                    assert!(matches!(**b, Cond::Or(..)));
                }
                other => panic!("expected And, got {other:?}"),
            },
            other => panic!("expected While, got {other:?}"),
        }
    }

    #[test]
    fn syntax_error_carries_position_and_expectation() {
        let err = parse("DEF run { MOVE", &cfg()).unwrap_err();
        match err {
            DslError::Syntax { pos, expected, found } => {
                assert_eq!(pos, 14);
                assert!(expected.contains('}'), "expected set: {expected}");
                assert_eq!(found, "end of input");
            }
            other => panic!("expected syntax error, got {other:?}"),
        }
    }

    #[test]
    fn unknown_word_is_rejected() {
        let err = parse("DEF run { FLY }", &cfg()).unwrap_err();
        assert!(matches!(err, DslError::Syntax { pos: 10, .. }), "{err:?}");
    }

    #[test]
    fn trailing_garbage_is_rejected() {
        assert!(parse("DEF run { MOVE } MOVE", &cfg()).is_err());
    }

    #[test]
    fn empty_body_is_rejected() {
        assert!(parse("DEF run { }", &cfg()).is_err());
    }

    #[test]
    fn repeat_count_range() {
        assert!(parse("DEF run { REPEAT 1 { MOVE } }", &cfg()).is_ok());
        assert!(parse("DEF run { REPEAT 6 { MOVE } }", &cfg()).is_ok());
        assert!(matches!(
            parse("DEF run { REPEAT 0 { MOVE } }", &cfg()),
            Err(DslError::Limit(_))
        ));
        assert!(matches!(
            parse("DEF run { REPEAT 7 { MOVE } }", &cfg()),
            Err(DslError::Limit(_))
        ));
    }

    #[test]
    fn depth_limit_enforced() {
        // Five levels of nesting with max_nest = 4.
        let src = "DEF run { REPEAT 2 { REPEAT 2 { REPEAT 2 { REPEAT 2 { REPEAT 2 { MOVE } } } } } }";
        assert!(matches!(parse(src, &cfg()), Err(DslError::Limit(_))));
    }

    #[test]
    fn stmt_count_limit_enforced() {
        let body = "MOVE ".repeat(25);
        let src = format!("DEF run {{ {body} }}");
        assert!(matches!(parse(&src, &cfg()), Err(DslError::Limit(_))));
        let body24 = "MOVE ".repeat(24);
        assert!(parse(&format!("DEF run {{ {body24} }}"), &cfg()).is_ok());
    }

    #[test]
    fn whitespace_is_flexible() {
        let a = parse("DEF run { IF (NOT(P0)) { ATTACK } }", &cfg()).unwrap();
        let b = parse("DEF run {IF(NOT ( P0 )){ATTACK}}", &cfg()).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn percept_index_validated_against_q() {
        assert!(parse("DEF run { IF (P5) { MOVE } }", &cfg()).is_ok());
        assert!(matches!(
            parse("DEF run { IF (P6) { MOVE } }", &cfg()),
            Err(DslError::Limit(_))
        ));
    }
}
