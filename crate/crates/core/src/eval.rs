//! Exact and aliased program accuracy, the alias rewrite engine, behavioral
//! equivalence diagnostics, and the noise-ablation harness.
//!
//! Exact match is token-sequence equality after stripping specials (Eq. 8
//! style). Alias match admits any member of a bounded rewrite closure of the
//! ground truth (Eq. 9 style): breadth-first application of
//! behavior-preserving rules, at most `max_depth` rewrites deep and
//! `max_size` programs large. Every rule must survive the behavioral
//! soundness suite; that is why if/else "decomposition" ships as the sound
//! negation swap rather than a split into sequential ifs (unsound when a
//! branch changes its own condition).

use crate::dataset::{DatasetEntry, DatasetError};
use crate::dsl::{
    parse, Cond, DslConfig, DslError, ProgramAst, ProgramVocab, Statement, EOS_ID,
};
use crate::exec::run_program;
use crate::model::{synthesize, DecodeMode, ModelConfig, Tensors};
use crate::rng::mix;
use crate::vislang::{assemble, inject_noise, NoiseSpec, VisVocab};
use crate::world::{WorldConfig, WorldState};
use serde::{Deserialize, Serialize};
use std::collections::HashSet;
use thiserror::Error;

/// Which rewrite rules participate in the alias closure, plus its caps.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AliasRuleSet {
    /// R1: `IF (c) {A} ELSE {B}` ↔ `IF (NOT(c)) {B} ELSE {A}`.
    pub negation_swap: bool,
    /// R2: `REPEAT n {body}` → body repeated n times (n ≥ 2).
    pub repeat_unroll: bool,
    /// R3: `REPEAT 1 {body}` → body; `REPEAT a { REPEAT b {body} }` →
    /// `REPEAT a·b {body}` when a·b stays within the repeat limit.
    pub repeat_simplify: bool,
    /// R4: `NOT(NOT(c))` → `c` anywhere inside a condition.
    pub double_negation: bool,
    /// And/Or argument swaps. Off by default: the original enumeration does
    /// not state whether condition order is canonicalized.
    pub commutativity: bool,
    /// Maximum rewrite applications from the original.
    pub max_depth: usize,
    /// Closure size cap; exceeding it aborts with [`ClosureOverflow`].
    pub max_size: usize,
}

impl Default for AliasRuleSet {
    fn default() -> Self {
        AliasRuleSet {
            negation_swap: true,
            repeat_unroll: true,
            repeat_simplify: true,
            double_negation: true,
            commutativity: false,
            max_depth: 3,
            max_size: 10_000,
        }
    }
}

/// One evaluation pass at a single noise level.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub n: usize,
    pub exact_count: usize,
    pub alias_count: usize,
    pub parse_failure_count: usize,
    /// Entries whose truth closure overflowed (scored via the bidirectional
    /// fallback); diagnostic only.
    pub closure_overflow_count: usize,
    pub acc_exact: f64,
    pub acc_alias: f64,
    pub epsilon: f64,
    pub action_epsilon: f64,
    pub noise_seed: u64,
}

#[derive(Debug, Error)]
pub enum EvalError {
    #[error(transparent)]
    Dataset(#[from] DatasetError),
    #[error("stored program no longer parses: {0}")]
    Dsl(#[from] DslError),
    #[error("invalid evaluation setup: {0}")]
    Config(String),
}

#[derive(Debug, Error)]
#[error("alias closure exceeded {size} programs at rewrite depth {depth}")]
pub struct ClosureOverflow {
    pub size: usize,
    pub depth: usize,
}

// ------------------------------------------------------------ exact match

/// Drop `<pad>`, `<bos>`, `<eos>` wherever they appear.
pub fn strip_special_tokens(toks: &[u32]) -> Vec<u32> {
    toks.iter().copied().filter(|&t| t > EOS_ID).collect()
}

/// Token-sequence equality after stripping special tokens.
pub fn exact_match(pred: &[u32], truth: &[u32]) -> bool {
    strip_special_tokens(pred) == strip_special_tokens(truth)
}

// -------------------------------------------------------- rewrite engine

/// A statement either rewrites to another statement or splices a list into
/// its parent (unrolling).
enum Repl {
    One(Statement),
    Many(Vec<Statement>),
}

fn splice(stmts: &[Statement], i: usize, repl: Repl) -> Vec<Statement> {
    let mut out = Vec::with_capacity(stmts.len() + 8);
    out.extend_from_slice(&stmts[..i]);
    match repl {
        Repl::One(s) => out.push(s),
        Repl::Many(list) => out.extend(list),
    }
    out.extend_from_slice(&stmts[i + 1..]);
    out
}

/// All single-application rewrites of a statement list (at any site in any
/// statement, recursively).
fn rewrite_stmt_list(stmts: &[Statement], rules: &AliasRuleSet) -> Vec<Vec<Statement>> {
    let mut out = Vec::new();
    for (i, s) in stmts.iter().enumerate() {
        for repl in rewrite_stmt(s, rules) {
            out.push(splice(stmts, i, repl));
        }
    }
    out
}

fn rewrite_stmt(s: &Statement, rules: &AliasRuleSet) -> Vec<Repl> {
    let mut out = Vec::new();
    match s {
        Statement::Action(_) => {}
        Statement::Repeat { count, body } => {
            if rules.repeat_unroll && *count >= 2 {
                let mut unrolled = Vec::with_capacity(body.len() * *count as usize);
                for _ in 0..*count {
                    unrolled.extend(body.iter().cloned());
                }
                out.push(Repl::Many(unrolled));
            }
            if rules.repeat_simplify {
                if *count == 1 {
                    out.push(Repl::Many(body.clone()));
                }
                if let [Statement::Repeat { count: ic, body: ib }] = body.as_slice() {
                    // Candidate may exceed max_repeat; validation filters it.
                    out.push(Repl::One(Statement::Repeat {
                        count: count * ic,
                        body: ib.clone(),
                    }));
                }
            }
            for b in rewrite_stmt_list(body, rules) {
                out.push(Repl::One(Statement::Repeat { count: *count, body: b }));
            }
        }
        Statement::While { cond, body } => {
            for c in rewrite_cond(cond, rules) {
                out.push(Repl::One(Statement::While { cond: c, body: body.clone() }));
            }
            for b in rewrite_stmt_list(body, rules) {
                out.push(Repl::One(Statement::While { cond: cond.clone(), body: b }));
            }
        }
        Statement::If { cond, then_body } => {
            for c in rewrite_cond(cond, rules) {
                out.push(Repl::One(Statement::If { cond: c, then_body: then_body.clone() }));
            }
            for b in rewrite_stmt_list(then_body, rules) {
                out.push(Repl::One(Statement::If { cond: cond.clone(), then_body: b }));
            }
        }
        Statement::IfElse { cond, then_body, else_body } => {
            if rules.negation_swap {
                out.push(Repl::One(Statement::IfElse {
                    cond: Cond::Not(Box::new(cond.clone())),
                    then_body: else_body.clone(),
                    else_body: then_body.clone(),
                }));
            }
            for c in rewrite_cond(cond, rules) {
                out.push(Repl::One(Statement::IfElse {
                    cond: c,
                    then_body: then_body.clone(),
                    else_body: else_body.clone(),
                }));
            }
            for b in rewrite_stmt_list(then_body, rules) {
                out.push(Repl::One(Statement::IfElse {
                    cond: cond.clone(),
                    then_body: b,
                    else_body: else_body.clone(),
                }));
            }
            for b in rewrite_stmt_list(else_body, rules) {
                out.push(Repl::One(Statement::IfElse {
                    cond: cond.clone(),
                    then_body: then_body.clone(),
                    else_body: b,
                }));
            }
        }
    }
    out
}

fn rewrite_cond(c: &Cond, rules: &AliasRuleSet) -> Vec<Cond> {
    let mut out = Vec::new();
    if rules.double_negation {
        if let Cond::Not(inner) = c {
            if let Cond::Not(inner2) = inner.as_ref() {
                out.push(inner2.as_ref().clone());
            }
        }
    }
    if rules.commutativity {
        match c {
            Cond::And(a, b) => out.push(Cond::And(b.clone(), a.clone())),
            Cond::Or(a, b) => out.push(Cond::Or(b.clone(), a.clone())),
            _ => {}
        }
    }
    match c {
        Cond::Percept(_) => {}
        Cond::Not(a) => {
            for r in rewrite_cond(a, rules) {
                out.push(Cond::Not(Box::new(r)));
            }
        }
        Cond::And(a, b) => {
            for r in rewrite_cond(a, rules) {
                out.push(Cond::And(Box::new(r), b.clone()));
            }
            for r in rewrite_cond(b, rules) {
                out.push(Cond::And(a.clone(), Box::new(r)));
            }
        }
        Cond::Or(a, b) => {
            for r in rewrite_cond(a, rules) {
                out.push(Cond::Or(Box::new(r), b.clone()));
            }
            for r in rewrite_cond(b, rules) {
                out.push(Cond::Or(a.clone(), Box::new(r)));
            }
        }
    }
    out
}

/// All valid one-step rewrites of a whole program under relaxed limits.
pub fn one_step_rewrites(
    ast: &ProgramAst,
    dsl: &DslConfig,
    rules: &AliasRuleSet,
) -> Vec<ProgramAst> {
    let relaxed = DslConfig { limits: dsl.limits.relaxed_for_closure(), ..*dsl };
    rewrite_stmt_list(&ast.body, rules)
        .into_iter()
        .map(ProgramAst::new)
        .filter(|p| p.validate(&relaxed).is_ok())
        .collect()
}

/// Breadth-first closure up to the rule set's caps. Returns the set of
/// canonical token sequences plus the depth at which the size cap was hit,
/// if it was.
fn bounded_closure(
    root: &ProgramAst,
    dsl: &DslConfig,
    rules: &AliasRuleSet,
) -> (HashSet<Vec<u32>>, Option<usize>) {
    let vocab = ProgramVocab::new(dsl);
    let mut seen = HashSet::new();
    seen.insert(vocab.to_tokens(root));
    let mut frontier = vec![root.clone()];
    for depth in 1..=rules.max_depth {
        let mut next = Vec::new();
        for ast in &frontier {
            for rw in one_step_rewrites(ast, dsl, rules) {
                let key = vocab.to_tokens(&rw);
                if seen.insert(key) {
                    if seen.len() > rules.max_size {
                        return (seen, Some(depth));
                    }
                    next.push(rw);
                }
            }
        }
        if next.is_empty() {
            break;
        }
        frontier = next;
    }
    (seen, None)
}

/// The alias closure of a program: every canonical token sequence reachable
/// within the rule set's depth/size caps, the original included.
pub fn alias_closure(
    truth: &ProgramAst,
    dsl: &DslConfig,
    rules: &AliasRuleSet,
) -> Result<HashSet<Vec<u32>>, ClosureOverflow> {
    let (set, overflow) = bounded_closure(truth, dsl, rules);
    match overflow {
        Some(depth) => Err(ClosureOverflow { size: set.len(), depth }),
        None => Ok(set),
    }
}

/// Per-prediction scoring detail used by [`evaluate`]'s bookkeeping.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ScoreDetail {
    pub exact: bool,
    pub alias: bool,
    pub parse_failed: bool,
    pub closure_overflowed: bool,
}

/// Score one predicted token sequence against the truth. Parse failures are
/// non-matches; a truth-closure overflow falls back to intersecting bounded
/// closures grown from both sides at the same depth.
pub fn score_prediction(
    pred: &[u32],
    truth_tokens: &[u32],
    truth: &ProgramAst,
    dsl: &DslConfig,
    rules: &AliasRuleSet,
) -> ScoreDetail {
    let exact = exact_match(pred, truth_tokens);
    let vocab = ProgramVocab::new(dsl);
    let relaxed = dsl.limits.relaxed_for_closure();
    let pred_ast = match vocab.from_tokens_with_limits(pred, &relaxed) {
        Ok(ast) => ast,
        Err(_) => {
            debug_assert!(!exact, "an exact match always parses");
            return ScoreDetail {
                exact: false,
                alias: false,
                parse_failed: true,
                closure_overflowed: false,
            };
        }
    };
    if exact {
        return ScoreDetail { exact: true, alias: true, parse_failed: false, closure_overflowed: false };
    }
    let key = vocab.to_tokens(&pred_ast);
    match alias_closure(truth, dsl, rules) {
        Ok(closure) => ScoreDetail {
            exact,
            alias: closure.contains(&key),
            parse_failed: false,
            closure_overflowed: false,
        },
        Err(_) => {
            // Bidirectional bounded search: meet-in-the-middle on whatever
            // both sides managed to enumerate before the cap.
            let (from_truth, _) = bounded_closure(truth, dsl, rules);
            let (from_pred, _) = bounded_closure(&pred_ast, dsl, rules);
            ScoreDetail {
                exact,
                alias: !from_truth.is_disjoint(&from_pred),
                parse_failed: false,
                closure_overflowed: true,
            }
        }
    }
}

/// True iff `pred` parses (under relaxed limits) and lands in the alias
/// closure of `truth`. Exact matches are always alias matches.
pub fn alias_match(
    pred: &[u32],
    truth: &ProgramAst,
    dsl: &DslConfig,
    rules: &AliasRuleSet,
) -> bool {
    let vocab = ProgramVocab::new(dsl);
    let truth_tokens = vocab.to_tokens(truth);
    score_prediction(pred, &truth_tokens, truth, dsl, rules).alias
}

// ------------------------------------------------- behavioral equivalence

/// Sampled trace equality on `n_trials` seeded initial states. A diagnostic
/// approximation only — never part of the headline metrics.
pub fn behavioral_eq(
    a: &ProgramAst,
    b: &ProgramAst,
    world: &WorldConfig,
    step_budget: usize,
    n_trials: usize,
) -> bool {
    assert!(n_trials >= 1);
    for i in 0..n_trials {
        let seed = mix(&[0xbe4a, i as u64]);
        let init = WorldState::init(world, seed).expect("world config is valid");
        let ta = run_program(a, &init, world, step_budget);
        let tb = run_program(b, &init, world, step_budget);
        match (ta, tb) {
            (Ok(x), Ok(y)) => {
                if x.steps != y.steps || x.terminated != y.terminated {
                    return false;
                }
            }
            _ => return false,
        }
    }
    true
}

// -------------------------------------------------------------- evaluate

/// Model/dataset/vocabulary consistency checks shared by every evaluation
/// entry point.
pub fn check_eval_setup(
    model_cfg: &ModelConfig,
    entries: &[DatasetEntry],
    vis: &VisVocab,
    dsl: &DslConfig,
) -> Result<(), EvalError> {
    if entries.is_empty() {
        return Err(EvalError::Config("empty evaluation split".into()));
    }
    let vocab = ProgramVocab::new(dsl);
    if model_cfg.tgt_vocab != vocab.size() {
        return Err(EvalError::Config(format!(
            "model tgt_vocab {} != program vocabulary {}",
            model_cfg.tgt_vocab,
            vocab.size()
        )));
    }
    if model_cfg.src_vocab != vis.vocab_size() {
        return Err(EvalError::Config(format!(
            "model src_vocab {} != visual vocabulary {}",
            model_cfg.src_vocab,
            vis.vocab_size()
        )));
    }
    Ok(())
}

/// Score one entry end to end: inject noise, assemble, synthesize, score.
///
/// `idx` must be the entry's position in its evaluation split — it keys the
/// entry's private noise stream, so per-entry scoring is order-independent
/// and safe to distribute across workers.
#[allow(clippy::too_many_arguments)]
pub fn evaluate_entry(
    params: &Tensors<f32>,
    model_cfg: &ModelConfig,
    entry: &DatasetEntry,
    idx: usize,
    vis: &VisVocab,
    dsl: &DslConfig,
    rules: &AliasRuleSet,
    noise: &NoiseSpec,
    mode: DecodeMode,
) -> Result<ScoreDetail, EvalError> {
    let demos = entry.demonstrations()?;
    let demos = if noise.epsilon > 0.0 || noise.action_epsilon > 0.0 {
        // Per-entry noise stream: otherwise every entry would flip the
        // same (demo, step, bit) positions.
        let spec = NoiseSpec { seed: mix(&[noise.seed, 0xeb41, idx as u64]), ..*noise };
        inject_noise(&demos, &spec, vis.m)
    } else {
        demos
    };
    let seq = assemble(&demos, vis);
    if seq.tokens.len() > model_cfg.max_src_len {
        return Err(EvalError::Config(format!(
            "assembled sequence of {} tokens exceeds max_src_len {}",
            seq.tokens.len(),
            model_cfg.max_src_len
        )));
    }
    let pred = synthesize::<f32>(params, model_cfg, &seq.tokens, mode);
    let truth_ast = parse(&entry.program_text, dsl)?;
    Ok(score_prediction(&pred, &entry.program_tokens, &truth_ast, dsl, rules))
}

/// Fold per-entry details into a report.
pub fn report_from_details(details: &[ScoreDetail], noise: &NoiseSpec) -> EvalReport {
    let mut report = EvalReport {
        n: details.len(),
        exact_count: 0,
        alias_count: 0,
        parse_failure_count: 0,
        closure_overflow_count: 0,
        acc_exact: 0.0,
        acc_alias: 0.0,
        epsilon: noise.epsilon,
        action_epsilon: noise.action_epsilon,
        noise_seed: noise.seed,
    };
    for detail in details {
        report.exact_count += detail.exact as usize;
        report.alias_count += detail.alias as usize;
        report.parse_failure_count += detail.parse_failed as usize;
        report.closure_overflow_count += detail.closure_overflowed as usize;
    }
    report.acc_exact = report.exact_count as f64 / report.n.max(1) as f64;
    report.acc_alias = report.alias_count as f64 / report.n.max(1) as f64;
    debug_assert!(report.exact_count <= report.alias_count);
    report
}

/// Evaluate a trained model over a dataset split at one noise level: for
/// each entry, inject noise (keyed per entry), assemble, synthesize, and
/// score exact/alias.
#[allow(clippy::too_many_arguments)]
pub fn evaluate(
    params: &Tensors<f32>,
    model_cfg: &ModelConfig,
    entries: &[DatasetEntry],
    vis: &VisVocab,
    dsl: &DslConfig,
    rules: &AliasRuleSet,
    noise: &NoiseSpec,
    mode: DecodeMode,
) -> Result<EvalReport, EvalError> {
    check_eval_setup(model_cfg, entries, vis, dsl)?;
    let details = entries
        .iter()
        .enumerate()
        .map(|(idx, e)| evaluate_entry(params, model_cfg, e, idx, vis, dsl, rules, noise, mode))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(report_from_details(&details, noise))
}

// ---------------------------------------------------------------- ablate

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblateRow {
    pub epsilon: f64,
    pub mean_exact: f64,
    pub min_exact: f64,
    pub max_exact: f64,
    pub mean_alias: f64,
    pub min_alias: f64,
    pub max_alias: f64,
    pub reports: Vec<EvalReport>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblateTable {
    pub rows: Vec<AblateRow>,
}

impl AblateTable {
    /// Fixed-width human-readable rendering; the machine-readable form is
    /// the serialized struct itself.
    pub fn render(&self) -> String {
        let mut s = String::new();
        s.push_str("epsilon  acc_exact (min..max)   acc_alias (min..max)   seeds\n");
        for r in &self.rows {
            s.push_str(&format!(
                "{:<7.3}  {:.4} ({:.4}..{:.4})  {:.4} ({:.4}..{:.4})  {}\n",
                r.epsilon,
                r.mean_exact,
                r.min_exact,
                r.max_exact,
                r.mean_alias,
                r.min_alias,
                r.max_alias,
                r.reports.len()
            ));
        }
        s
    }
}

/// Aggregate per-ε seed reports into rows of mean/min/max accuracies.
/// `cells` pairs each ε with its per-seed reports (all non-empty).
pub fn aggregate_ablation(cells: Vec<(f64, Vec<EvalReport>)>) -> AblateTable {
    let mut rows = Vec::with_capacity(cells.len());
    for (eps, reports) in cells {
        assert!(!reports.is_empty(), "every ε row needs at least one report");
        let stat = |f: fn(&EvalReport) -> f64| -> (f64, f64, f64) {
            let vals: Vec<f64> = reports.iter().map(f).collect();
            let mean = vals.iter().sum::<f64>() / vals.len() as f64;
            let min = vals.iter().cloned().fold(f64::INFINITY, f64::min);
            let max = vals.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            (mean, min, max)
        };
        let (mean_exact, min_exact, max_exact) = stat(|r| r.acc_exact);
        let (mean_alias, min_alias, max_alias) = stat(|r| r.acc_alias);
        rows.push(AblateRow {
            epsilon: eps,
            mean_exact,
            min_exact,
            max_exact,
            mean_alias,
            min_alias,
            max_alias,
            reports,
        });
    }
    AblateTable { rows }
}

/// Run [`evaluate`] across an ε grid × seed list and aggregate mean/min/max
/// per ε.
#[allow(clippy::too_many_arguments)]
pub fn ablate(
    params: &Tensors<f32>,
    model_cfg: &ModelConfig,
    entries: &[DatasetEntry],
    vis: &VisVocab,
    dsl: &DslConfig,
    rules: &AliasRuleSet,
    epsilons: &[f64],
    seeds: &[u64],
    mode: DecodeMode,
) -> Result<AblateTable, EvalError> {
    if seeds.is_empty() || epsilons.is_empty() {
        return Err(EvalError::Config("ablation needs ≥1 epsilon and ≥1 seed".into()));
    }
    let mut cells = Vec::with_capacity(epsilons.len());
    for &eps in epsilons {
        let mut reports = Vec::with_capacity(seeds.len());
        for &seed in seeds {
            let noise = NoiseSpec { epsilon: eps, seed, action_epsilon: 0.0 };
            reports.push(evaluate(params, model_cfg, entries, vis, dsl, rules, &noise, mode)?);
        }
        cells.push((eps, reports));
    }
    Ok(aggregate_ablation(cells))
}
