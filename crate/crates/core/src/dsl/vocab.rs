//! Program-token vocabulary: a fixed bijection between DSL lexemes and
//! integer ids, plus AST <-> id-sequence codecs built on the parser.

use super::parser::{ast_to_toks, Tok, TokParser, KEYWORDS};
use super::{DslConfig, DslError, DslLimits, ProgramAst};

pub const PAD_ID: u32 = 0;
pub const BOS_ID: u32 = 1;
pub const EOS_ID: u32 = 2;

/// Id layout (contiguous, specials first):
/// 0 `<pad>`, 1 `<bos>`, 2 `<eos>`, then the 14 structural keywords in
/// grammar order, then repeat counts `1..=max_repeat`, then the m action
/// names, then the q percept names.
#[derive(Debug, Clone)]
pub struct ProgramVocab {
    cfg: DslConfig,
    /// id -> lexeme, starting at id 3.
    toks: Vec<Tok>,
}

impl ProgramVocab {
    pub fn new(cfg: &DslConfig) -> ProgramVocab {
        let mut toks = Vec::new();
        toks.extend_from_slice(&KEYWORDS);
        for n in 1..=cfg.limits.max_repeat {
            toks.push(Tok::Int(n));
        }
        for a in 0..cfg.m {
            toks.push(Tok::Action(a));
        }
        for p in 0..cfg.q {
            toks.push(Tok::Percept(p));
        }
        ProgramVocab {
            cfg: cfg.clone(),
            toks,
        }
    }

    /// Total vocabulary size including the three specials.
    pub fn size(&self) -> usize {
        3 + self.toks.len()
    }

    pub fn config(&self) -> &DslConfig {
        &self.cfg
    }

    fn id_of(&self, tok: Tok) -> Option<u32> {
        self.toks
            .iter()
            .position(|&t| t == tok)
            .map(|i| (i + 3) as u32)
    }

    fn tok_of(&self, id: u32) -> Option<Tok> {
        (id as usize)
            .checked_sub(3)
            .and_then(|i| self.toks.get(i).copied())
    }

    /// Surface text for an id, as shown by `vocab` listings.
    pub fn token_text(&self, id: u32) -> Option<String> {
        match id {
            PAD_ID => Some("<pad>".into()),
            BOS_ID => Some("<bos>".into()),
            EOS_ID => Some("<eos>".into()),
            _ => self.tok_of(id).map(Tok::text),
        }
    }

    /// All (id, text) pairs in id order.
    pub fn entries(&self) -> Vec<(u32, String)> {
        (0..self.size() as u32)
            .map(|id| (id, self.token_text(id).unwrap()))
            .collect()
    }

    /// Encodes a validated AST as `<bos> tokens... <eos>`.
    ///
    /// Panics if the AST mentions a primitive outside this vocabulary's
    /// configured ranges; encode only validated programs.
    pub fn to_tokens(&self, ast: &ProgramAst) -> Vec<u32> {
        let mut ids = vec![BOS_ID];
        for tok in ast_to_toks(ast) {
            let id = self
                .id_of(tok)
                .unwrap_or_else(|| panic!("lexeme {} not in vocabulary", tok.text()));
            ids.push(id);
        }
        ids.push(EOS_ID);
        ids
    }

    /// Decodes an id sequence back to an AST under the vocabulary's own
    /// structural limits. Inverse of [`to_tokens`](Self::to_tokens).
    pub fn from_tokens(&self, ids: &[u32]) -> Result<ProgramAst, DslError> {
        self.from_tokens_with_limits(ids, &self.cfg.limits)
    }

    /// Decode with caller-supplied limits (the alias closure parses rewrite
    /// candidates under relaxed statement caps).
    ///
    /// Accepted shape: optional `<bos>`, body ids, optional `<eos>`, then
    /// only `<pad>`. Anything else — unknown ids, specials inside the body,
    /// or an ungrammatical body — is a [`DslError::Decode`].
    pub fn from_tokens_with_limits(
        &self,
        ids: &[u32],
        limits: &DslLimits,
    ) -> Result<ProgramAst, DslError> {
        let mut body = Vec::with_capacity(ids.len());
        let mut seen_eos = false;
        for (i, &id) in ids.iter().enumerate() {
            match id {
                BOS_ID if i == 0 => {}
                BOS_ID => return Err(DslError::Decode(format!("<bos> at position {i}"))),
                EOS_ID if !seen_eos => seen_eos = true,
                PAD_ID if seen_eos => {}
                PAD_ID | EOS_ID => {
                    return Err(DslError::Decode(format!(
                        "special id {id} at position {i}"
                    )))
                }
                _ if seen_eos => {
                    return Err(DslError::Decode(format!(
                        "token after <eos> at position {i}"
                    )))
                }
                _ => match self.tok_of(id) {
                    Some(tok) => body.push((tok, i)),
                    None => {
                        return Err(DslError::Decode(format!(
                            "unknown token id {id} at position {i}"
                        )))
                    }
                },
            }
        }
        let end = ids.len();
        let ast = TokParser::new(&body, end)
            .program()
            .map_err(|e| DslError::Decode(e.to_string()))?;
        let relaxed_cfg = DslConfig {
            q: self.cfg.q,
            m: self.cfg.m,
            limits: limits.clone(),
        };
        ast.validate(&relaxed_cfg)
            .map_err(|e| DslError::Decode(e.to_string()))?;
        Ok(ast)
    }
}

#[cfg(test)]
mod tests {
    use super::super::{parse, pretty_print, DslConfig, Statement};
    use super::*;
    use crate::rng::CounterRng;
    use crate::world::MOVE;

    fn vocab() -> ProgramVocab {
        ProgramVocab::new(&DslConfig::default())
    }

    #[test]
    fn default_size_is_35() {
        // 3 specials + 14 keywords + 6 ints + 6 actions + 6 percepts.
        assert_eq!(vocab().size(), 35);
    }

    #[test]
    fn id_layout_is_contiguous_and_stable() {
        let v = vocab();
        assert_eq!(v.token_text(0).unwrap(), "<pad>");
        assert_eq!(v.token_text(1).unwrap(), "<bos>");
        assert_eq!(v.token_text(2).unwrap(), "<eos>");
        assert_eq!(v.token_text(3).unwrap(), "DEF");
        assert_eq!(v.token_text(4).unwrap(), "run");
        assert_eq!(v.token_text(5).unwrap(), "{");
        assert_eq!(v.token_text(6).unwrap(), "}");
        assert_eq!(v.token_text(16).unwrap(), "OR");
        assert_eq!(v.token_text(17).unwrap(), "1");
        assert_eq!(v.token_text(22).unwrap(), "6");
        assert_eq!(v.token_text(23).unwrap(), "MOVE");
        assert_eq!(v.token_text(28).unwrap(), "NOOP");
        assert_eq!(v.token_text(29).unwrap(), "P0");
        assert_eq!(v.token_text(34).unwrap(), "P5");
        assert!(v.token_text(35).is_none());
    }

    #[test]
    fn smallest_program_encodes_to_known_ids() {
        // Oracle: ids read off the layout table by hand.
        // <bos> DEF run { MOVE } <eos>
        let v = vocab();
        let ast = ProgramAst::new(vec![Statement::Action(MOVE)]);
        assert_eq!(v.to_tokens(&ast), vec![1, 3, 4, 5, 23, 6, 2]);
    }

    #[test]
    fn decode_inverts_encode() {
        let v = vocab();
        let ast = parse(
            "DEF run { IF (NOT(P0)) { ATTACK } ELSE { TURN_L } REPEAT 5 { MOVE } }",
            v.config(),
        )
        .unwrap();
        let ids = v.to_tokens(&ast);
        assert_eq!(v.from_tokens(&ids).unwrap(), ast);
    }

    #[test]
    fn decode_tolerates_missing_specials_and_padding() {
        let v = vocab();
        let ast = ProgramAst::new(vec![Statement::Action(MOVE)]);
        // Bare body, no <bos>/<eos>.
        assert_eq!(v.from_tokens(&[3, 4, 5, 23, 6]).unwrap(), ast);
        // Padded tail after <eos>.
        assert_eq!(
            v.from_tokens(&[1, 3, 4, 5, 23, 6, 2, 0, 0, 0]).unwrap(),
            ast
        );
    }

    #[test]
    fn malformed_sequences_are_decode_errors() {
        let v = vocab();
        // <bos> } <eos>
        assert!(matches!(
            v.from_tokens(&[1, 6, 2]),
            Err(DslError::Decode(_))
        ));
        // Unknown id.
        assert!(matches!(
            v.from_tokens(&[1, 3, 4, 5, 99, 6, 2]),
            Err(DslError::Decode(_))
        ));
        // <pad> inside the body.
        assert!(matches!(
            v.from_tokens(&[1, 3, 4, 5, 0, 23, 6, 2]),
            Err(DslError::Decode(_))
        ));
        // Truncated program.
        assert!(matches!(
            v.from_tokens(&[1, 3, 4, 5, 23]),
            Err(DslError::Decode(_))
        ));
        // Empty input.
        assert!(matches!(v.from_tokens(&[]), Err(DslError::Decode(_))));
    }

    #[test]
    fn relaxed_limits_accept_long_unrolls() {
        let v = vocab();
        let body = "MOVE ".repeat(30);
        let src = format!("DEF run {{ {body} }}");
        let ids: Vec<u32> = {
            // Hand-roll encoding of a too-long program: DEF run { MOVE*30 }.
            let mut ids = vec![1, 3, 4, 5];
            ids.extend(std::iter::repeat(23).take(30));
            ids.extend([6, 2]);
            ids
        };
        assert!(v.from_tokens(&ids).is_err(), "default cap is 24 stmts");
        let relaxed = v.config().limits.clone().relaxed_for_closure();
        let ast = v.from_tokens_with_limits(&ids, &relaxed).unwrap();
        assert_eq!(ast.stmt_count(), 30);
        assert_eq!(parse(&src, &DslConfig { limits: relaxed, ..*v.config() }).unwrap(), ast);
    }

    /// Grammar-directed random AST for round-trip property tests. Kept
    /// intentionally independent of the dataset sampler.
    fn random_ast(rng: &mut CounterRng, cfg: &DslConfig) -> ProgramAst {
        fn cond(rng: &mut CounterRng, cfg: &DslConfig, depth: usize) -> super::super::Cond {
            use super::super::Cond;
            if depth >= 2 || rng.below(10) < 6 {
                return Cond::Percept(rng.below(cfg.q as u64) as usize);
            }
            match rng.below(3) {
                0 => Cond::Not(Box::new(cond(rng, cfg, depth + 1))),
                1 => Cond::And(
                    Box::new(cond(rng, cfg, depth + 1)),
                    Box::new(cond(rng, cfg, depth + 1)),
                ),
                _ => Cond::Or(
                    Box::new(cond(rng, cfg, depth + 1)),
                    Box::new(cond(rng, cfg, depth + 1)),
                ),
            }
        }
        fn stmts(rng: &mut CounterRng, cfg: &DslConfig, depth: usize) -> Vec<Statement> {
            let n = 1 + rng.below(3) as usize;
            (0..n)
                .map(|_| {
                    let can_nest = depth < cfg.limits.max_nest;
                    // 40% nesting chance keeps most samples under the
                    // statement cap while still exercising deep structure.
                    match if can_nest { rng.below(10) } else { 9 } {
                        0 => Statement::Repeat {
                            count: 1 + rng.below(cfg.limits.max_repeat as u64) as u32,
                            body: stmts(rng, cfg, depth + 1),
                        },
                        1 => Statement::While {
                            cond: cond(rng, cfg, 0),
                            body: stmts(rng, cfg, depth + 1),
                        },
                        2 => Statement::If {
                            cond: cond(rng, cfg, 0),
                            then_body: stmts(rng, cfg, depth + 1),
                        },
                        3 => Statement::IfElse {
                            cond: cond(rng, cfg, 0),
                            then_body: stmts(rng, cfg, depth + 1),
                            else_body: stmts(rng, cfg, depth + 1),
                        },
                        _ => Statement::Action(rng.below(cfg.m as u64) as usize),
                    }
                })
                .collect()
        }
        ProgramAst::new(stmts(rng, cfg, 1))
    }

    #[test]
    fn round_trip_property_over_random_programs() {
        let cfg = DslConfig::default();
        let v = ProgramVocab::new(&cfg);
        let mut rng = CounterRng::new(0x5eed_d51);
        let mut checked = 0;
        for _ in 0..500 {
            let ast = random_ast(&mut rng, &cfg);
            if ast.validate(&cfg).is_err() {
                continue; // sampler may exceed stmt cap; skip those
            }
            checked += 1;
            // text round trip
            let printed = pretty_print(&ast);
            assert_eq!(parse(&printed, &cfg).unwrap(), ast, "src: {printed}");
            // token round trip
            let ids = v.to_tokens(&ast);
            assert_eq!(v.from_tokens(&ids).unwrap(), ast, "src: {printed}");
        }
        assert!(checked > 300, "only {checked} samples validated");
    }
}
