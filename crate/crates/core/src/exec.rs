//! Program interpreter: runs an AST against the world to produce
//! demonstration traces, with control-flow coverage instrumentation and
//! coverage-complete demo-set generation.

use crate::dsl::{Cond, ProgramAst, Statement};
use crate::rng::mix;
use crate::world::{PerceptVector, WorldConfig, WorldError, WorldState};
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// How a trace ended.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Terminated {
    /// The program ran to completion.
    Completed,
    /// The step budget (or the tick guard for non-emitting loops) ran out,
    /// or the trace was truncated to `t_max` at storage time.
    StepBudgetExceeded,
}

/// One demonstration trace: Eq. 1's τ = ((s_1,a_1),...,(s_T,a_T)).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Demonstration {
    pub steps: Vec<(PerceptVector, usize)>,
    pub terminated: Terminated,
}

impl Demonstration {
    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }

    /// Storage-time truncation to the first `t_max` steps. A demo that
    /// loses steps is marked `StepBudgetExceeded`.
    pub fn truncated(mut self, t_max: usize) -> Demonstration {
        if self.steps.len() > t_max {
            self.steps.truncate(t_max);
            self.terminated = Terminated::StepBudgetExceeded;
        }
        self
    }
}

/// Per-node coverage flags, indexed by pre-order statement id.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CoverageReport {
    /// One flag per statement, pre-order.
    pub stmt_executed: Vec<bool>,
    /// One flag per If/IfElse statement (pre-order among those): condition
    /// observed both true and false across the set.
    pub if_both_branches: Vec<bool>,
    /// One flag per While (pre-order among those): body entered at least once.
    pub while_entered: Vec<bool>,
    /// One flag per While: condition observed false (loop exited or skipped).
    pub while_exited: Vec<bool>,
    pub complete: bool,
}

/// Raw accumulator the interpreter writes into; one slot per statement.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CovAccum {
    executed: Vec<bool>,
    cond_true: Vec<bool>,
    cond_false: Vec<bool>,
}

impl CovAccum {
    pub fn new(ast: &ProgramAst) -> CovAccum {
        let n = ast.stmt_count();
        CovAccum {
            executed: vec![false; n],
            cond_true: vec![false; n],
            cond_false: vec![false; n],
        }
    }

    pub fn merge(&mut self, other: &CovAccum) {
        for (a, b) in self.executed.iter_mut().zip(&other.executed) {
            *a |= b;
        }
        for (a, b) in self.cond_true.iter_mut().zip(&other.cond_true) {
            *a |= b;
        }
        for (a, b) in self.cond_false.iter_mut().zip(&other.cond_false) {
            *a |= b;
        }
    }

    /// True if `other` has any flag this accumulator lacks.
    pub fn adds_new(&self, other: &CovAccum) -> bool {
        self.executed
            .iter()
            .zip(&other.executed)
            .any(|(a, b)| *b && !a)
            || self
                .cond_true
                .iter()
                .zip(&other.cond_true)
                .any(|(a, b)| *b && !a)
            || self
                .cond_false
                .iter()
                .zip(&other.cond_false)
                .any(|(a, b)| *b && !a)
    }

    /// Projects the flat accumulator onto the per-kind report.
    pub fn report(&self, ast: &ProgramAst) -> CoverageReport {
        let mut if_both = Vec::new();
        let mut wh_entered = Vec::new();
        let mut wh_exited = Vec::new();
        let mut id = 0;
        walk(&ast.body, &mut |stmt, sid| {
            debug_assert!(sid >= id);
            id = sid;
            match stmt {
                Statement::If { .. } | Statement::IfElse { .. } => {
                    if_both.push(self.cond_true[sid] && self.cond_false[sid]);
                }
                Statement::While { .. } => {
                    wh_entered.push(self.cond_true[sid]);
                    wh_exited.push(self.cond_false[sid]);
                }
                _ => {}
            }
        });
        let complete = self.executed.iter().all(|&b| b)
            && if_both.iter().all(|&b| b)
            && wh_entered.iter().all(|&b| b)
            && wh_exited.iter().all(|&b| b);
        CoverageReport {
            stmt_executed: self.executed.clone(),
            if_both_branches: if_both,
            while_entered: wh_entered,
            while_exited: wh_exited,
            complete,
        }
    }
}

/// Pre-order walk calling `f(stmt, pre-order id)` for every statement.
fn walk<'a>(body: &'a [Statement], f: &mut impl FnMut(&'a Statement, usize)) {
    fn go<'a>(body: &'a [Statement], next: &mut usize, f: &mut impl FnMut(&'a Statement, usize)) {
        for s in body {
            let id = *next;
            *next += 1;
            f(s, id);
            match s {
                Statement::Action(_) => {}
                Statement::Repeat { body, .. } | Statement::While { body, .. } => {
                    go(body, next, f)
                }
                Statement::If { then_body, .. } => go(then_body, next, f),
                Statement::IfElse {
                    then_body,
                    else_body,
                    ..
                } => {
                    go(then_body, next, f);
                    go(else_body, next, f);
                }
            }
        }
    }
    let mut next = 0;
    go(body, &mut next, f);
}

/// Statements in the subtree rooted at `s`, including `s` itself.
fn stmt_size(s: &Statement) -> usize {
    match s {
        Statement::Action(_) => 1,
        Statement::Repeat { body, .. } | Statement::While { body, .. } => {
            1 + body.iter().map(stmt_size).sum::<usize>()
        }
        Statement::If { then_body, .. } => 1 + then_body.iter().map(stmt_size).sum::<usize>(),
        Statement::IfElse {
            then_body,
            else_body,
            ..
        } => {
            1 + then_body.iter().map(stmt_size).sum::<usize>()
                + else_body.iter().map(stmt_size).sum::<usize>()
        }
    }
}

/// Evaluates a condition against a perception vector. Pure.
pub fn eval_cond(c: &Cond, p: &PerceptVector) -> bool {
    match c {
        Cond::Percept(i) => p.0[*i],
        Cond::Not(a) => !eval_cond(a, p),
        Cond::And(a, b) => eval_cond(a, p) && eval_cond(b, p),
        Cond::Or(a, b) => eval_cond(a, p) || eval_cond(b, p),
    }
}

/// Interpreter budgets and demo-set policy knobs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExecConfig {
    /// Maximum actions emitted per episode.
    pub step_budget: usize,
    /// Storage truncation: stored demos keep their first `t_max` steps.
    pub t_max: usize,
    /// Episodes tried per program before giving up on coverage.
    pub attempt_budget: usize,
}

impl Default for ExecConfig {
    fn default() -> Self {
        ExecConfig {
            step_budget: 50,
            t_max: 20,
            attempt_budget: 200,
        }
    }
}

#[derive(Debug, Error)]
pub enum ExecError {
    /// Coverage could not be completed within the attempt budget; the
    /// dataset sampler rejects this program.
    #[error("coverage unsatisfiable after {attempts} episodes")]
    Unsatisfiable { attempts: usize },
    #[error(transparent)]
    World(#[from] WorldError),
}

struct Interp<'a> {
    cfg: &'a WorldConfig,
    state: WorldState,
    steps: Vec<(PerceptVector, usize)>,
    step_budget: usize,
    /// Guard for loops that never emit actions: every statement entry and
    /// every While condition re-check costs one tick.
    ticks_left: usize,
    cov: &'a mut CovAccum,
}

enum Halt {
    Budget,
    World(WorldError),
}

impl Interp<'_> {
    fn tick(&mut self) -> Result<(), Halt> {
        if self.ticks_left == 0 {
            return Err(Halt::Budget);
        }
        self.ticks_left -= 1;
        Ok(())
    }

    fn exec_body(&mut self, body: &[Statement], base_id: usize) -> Result<(), Halt> {
        let mut id = base_id;
        for s in body {
            self.exec_stmt(s, id)?;
            id += stmt_size(s);
        }
        Ok(())
    }

    fn eval(&mut self, c: &Cond, id: usize) -> bool {
        let v = eval_cond(c, &self.state.perceptions(self.cfg));
        if v {
            self.cov.cond_true[id] = true;
        } else {
            self.cov.cond_false[id] = true;
        }
        v
    }

    fn exec_stmt(&mut self, s: &Statement, id: usize) -> Result<(), Halt> {
        self.tick()?;
        self.cov.executed[id] = true;
        match s {
            Statement::Action(a) => {
                if self.steps.len() == self.step_budget {
                    return Err(Halt::Budget);
                }
                self.steps.push((self.state.perceptions(self.cfg), *a));
                self.state = self.state.step(*a, self.cfg).map_err(Halt::World)?;
                Ok(())
            }
            Statement::Repeat { count, body } => {
                for _ in 0..*count {
                    self.exec_body(body, id + 1)?;
                }
                Ok(())
            }
            Statement::While { cond, body } => {
                loop {
                    self.tick()?;
                    if !self.eval(cond, id) {
                        return Ok(());
                    }
                    self.exec_body(body, id + 1)?;
                }
            }
            Statement::If { cond, then_body } => {
                if self.eval(cond, id) {
                    self.exec_body(then_body, id + 1)?;
                }
                Ok(())
            }
            Statement::IfElse {
                cond,
                then_body,
                else_body,
            } => {
                if self.eval(cond, id) {
                    self.exec_body(then_body, id + 1)
                } else {
                    let else_base = id + 1 + then_body.iter().map(stmt_size).sum::<usize>();
                    self.exec_body(else_body, else_base)
                }
            }
        }
    }
}

/// Runs `ast` from `initial`, recording coverage into `cov`.
pub fn run_program_instrumented(
    ast: &ProgramAst,
    initial: &WorldState,
    cfg: &WorldConfig,
    step_budget: usize,
    cov: &mut CovAccum,
) -> Result<Demonstration, WorldError> {
    let mut interp = Interp {
        cfg,
        state: initial.clone(),
        steps: Vec::new(),
        step_budget,
        ticks_left: step_budget.saturating_mul(8).max(1),
        cov,
    };
    let terminated = match interp.exec_body(&ast.body, 0) {
        Ok(()) => Terminated::Completed,
        Err(Halt::Budget) => Terminated::StepBudgetExceeded,
        Err(Halt::World(e)) => return Err(e),
    };
    Ok(Demonstration {
        steps: interp.steps,
        terminated,
    })
}

/// Structural interpretation of `ast` from `initial`: each ActionStmt
/// appends (perceptions, action) then advances the world; stops at program
/// end or once `step_budget` actions have been emitted.
pub fn run_program(
    ast: &ProgramAst,
    initial: &WorldState,
    cfg: &WorldConfig,
    step_budget: usize,
) -> Result<Demonstration, WorldError> {
    let mut cov = CovAccum::new(ast);
    run_program_instrumented(ast, initial, cfg, step_budget, &mut cov)
}

/// k demonstrations of one program plus the replay keys and the coverage
/// report of exactly this set.
#[derive(Debug, Clone, PartialEq)]
pub struct DemoSet {
    pub program: ProgramAst,
    pub demos: Vec<Demonstration>,
    /// Episode seed per demo; `WorldState::init(cfg, seed)` reproduces the
    /// initial state.
    pub episode_seeds: Vec<u64>,
    pub coverage: CoverageReport,
}

/// Re-runs the interpreter with instrumentation from each episode's initial
/// state and aggregates coverage across the whole list.
pub fn coverage_of(
    ast: &ProgramAst,
    cfg: &WorldConfig,
    episode_seeds: &[u64],
    step_budget: usize,
) -> Result<CoverageReport, WorldError> {
    let mut accum = CovAccum::new(ast);
    for &seed in episode_seeds {
        let initial = WorldState::init(cfg, seed)?;
        run_program_instrumented(ast, &initial, cfg, step_budget, &mut accum)?;
    }
    Ok(accum.report(ast))
}

/// Draws fresh-seeded episodes until `k` non-empty demos jointly cover all
/// control flow, then returns the earliest such k (episodes that first hit a
/// coverage flag are always kept). `Unsatisfiable` when `attempt_budget`
/// episodes cannot produce a coverage-complete set — including programs
/// whose only evidence for some flag is a zero-action trace, which is
/// unstorable (demo length must be ≥ 1).
pub fn generate_demo_set(
    ast: &ProgramAst,
    cfg: &WorldConfig,
    exec: &ExecConfig,
    k: usize,
    set_seed: u64,
) -> Result<DemoSet, ExecError> {
    assert!(k >= 1, "k must be ≥ 1");
    let mut accum = CovAccum::new(ast);
    // (episode index, seed, stored demo, essential)
    let mut kept: Vec<(usize, u64, Demonstration, bool)> = Vec::new();
    let mut essentials = 0usize;
    for episode in 0..exec.attempt_budget {
        let seed = mix(&[set_seed, episode as u64]);
        let initial = WorldState::init(cfg, seed)?;
        let mut cov = CovAccum::new(ast);
        let demo = run_program_instrumented(ast, &initial, cfg, exec.step_budget, &mut cov)?;
        if demo.is_empty() {
            continue; // zero-length traces are unstorable; drop their evidence
        }
        let essential = accum.adds_new(&cov);
        if essential {
            accum.merge(&cov);
            essentials += 1;
        }
        kept.push((episode, seed, demo.truncated(exec.t_max), essential));
        if essentials <= k && kept.len() >= k && accum.report(ast).complete {
            // Essentials plus the earliest fillers, in episode order.
            let mut chosen: Vec<&(usize, u64, Demonstration, bool)> =
                kept.iter().filter(|e| e.3).collect();
            for entry in &kept {
                if chosen.len() == k {
                    break;
                }
                if !entry.3 {
                    chosen.push(entry);
                }
            }
            chosen.sort_by_key(|e| e.0);
            let episode_seeds: Vec<u64> = chosen.iter().map(|e| e.1).collect();
            let demos: Vec<Demonstration> = chosen.iter().map(|e| e.2.clone()).collect();
            let coverage = coverage_of(ast, cfg, &episode_seeds, exec.step_budget)?;
            debug_assert!(coverage.complete);
            return Ok(DemoSet {
                program: ast.clone(),
                demos,
                episode_seeds,
                coverage,
            });
        }
    }
    Err(ExecError::Unsatisfiable {
        attempts: exec.attempt_budget,
    })
}
