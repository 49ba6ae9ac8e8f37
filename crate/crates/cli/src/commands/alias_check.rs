//! `alias-check`: compare two program files under the three notions of
//! equivalence. The reference must be a valid program; the candidate is
//! held to the same standard a model prediction would be.

use demosynth_core::dsl::{parse, DslConfig, ProgramVocab};
use demosynth_core::eval::{alias_match, behavioral_eq, exact_match, AliasRuleSet};

use crate::config::load_config;
use crate::{AliasCheckArgs, CliError};

pub fn run(a: AliasCheckArgs) -> Result<(), CliError> {
    let cfg = load_config(a.config.as_deref())?;
    let dsl = cfg.gen.dsl;
    let rules = AliasRuleSet {
        max_depth: a.depth.unwrap_or(AliasRuleSet::default().max_depth),
        ..AliasRuleSet::default()
    };
    if a.trials == 0 {
        return Err(CliError::Usage("--trials must be ≥ 1".into()));
    }

    let text_a = std::fs::read_to_string(&a.prog_a)
        .map_err(|e| CliError::Data(format!("{}: {e}", a.prog_a.display())))?;
    let ast_a = parse(&text_a, &dsl)
        .map_err(|e| CliError::Data(format!("{}: {e}", a.prog_a.display())))?;
    let text_b = std::fs::read_to_string(&a.prog_b)
        .map_err(|e| CliError::Data(format!("{}: {e}", a.prog_b.display())))?;

    // The candidate parses under relaxed limits, exactly like a prediction.
    let relaxed = DslConfig {
        limits: dsl.limits.relaxed_for_closure(),
        ..dsl
    };
    let vocab = ProgramVocab::new(&dsl);
    let ast_b = match parse(&text_b, &relaxed) {
        Ok(ast) => ast,
        Err(e) => {
            println!("exact:      false");
            println!("alias:      false");
            println!("behavioral: n/a ({} does not parse: {e})", a.prog_b.display());
            return Ok(());
        }
    };

    let toks_a = vocab.to_tokens(&ast_a);
    let toks_b = vocab.to_tokens(&ast_b);
    let exact = exact_match(&toks_b, &toks_a);
    let alias = alias_match(&toks_b, &ast_a, &dsl, &rules);
    let behavioral = behavioral_eq(
        &ast_a,
        &ast_b,
        &cfg.gen.world,
        cfg.gen.exec.step_budget,
        a.trials,
    );

    println!("exact:      {exact}");
    println!("alias:      {alias} (depth {}, size cap {})", rules.max_depth, rules.max_size);
    println!("behavioral: {behavioral} ({} seeded trials)", a.trials);
    Ok(())
}
