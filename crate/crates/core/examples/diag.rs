//! Throwaway calibration diagnostic: load a checkpoint and a dataset, dump
//! greedy predictions next to the ground truth for the first few test
//! entries, and report parse/exact/alias tallies plus decode timing.

use std::time::Instant;

use demosynth_core::dataset::load_dataset;
use demosynth_core::dsl::{parse, pretty_print, ProgramVocab};
use demosynth_core::eval::{alias_closure, exact_match, AliasRuleSet};
use demosynth_core::model::{load_params, synthesize, DecodeMode};
use demosynth_core::vislang::{assemble, VisVocab};

fn main() {
    let args: Vec<String> = std::env::args().collect();
    let ckpt = &args[1];
    let data = &args[2];
    let n_show: usize = args.get(3).map(|s| s.parse().unwrap()).unwrap_or(12);

    let (cfg, params, _meta) = load_params(std::path::Path::new(ckpt)).unwrap();
    let ds = load_dataset(std::path::Path::new(data)).unwrap();
    let gen: GenConfig = ds.manifest.gen.clone();
    let vis = VisVocab::new(gen.world.q, gen.world.m);
    let vocab = ProgramVocab::new(&gen.dsl);
    let rules = AliasRuleSet::default();

    let mut parse_ok = 0usize;
    let mut exact = 0usize;
    let mut alias = 0usize;
    let t0 = Instant::now();
    let n = ds.test.len();
    for (i, e) in ds.test.iter().enumerate() {
        let demos = e.demonstrations().unwrap();
        let src = assemble(&demos, &vis).tokens;
        let pred = synthesize::<f32>(&params, &cfg, &src, DecodeMode::Greedy);
        let pred_ast = vocab.from_tokens(&pred);
        if pred_ast.is_ok() {
            parse_ok += 1;
        }
        let is_exact = exact_match(&pred, &e.program_tokens);
        if is_exact {
            exact += 1;
            alias += 1;
        } else if let Ok(truth_ast) = vocab.from_tokens(&e.program_tokens) {
            if let Ok(closure) = alias_closure(&truth_ast, &gen.dsl, &rules) {
                let key: Vec<u32> = pred.clone();
                // closure stores stripped token keys; compare via exact_match
                // against each member instead of reconstructing the strip.
                if closure.iter().any(|m| exact_match(&key, m)) {
                    alias += 1;
                }
            }
        }
        if i < n_show {
            println!("── test[{i}]  src_len {}", src.len());
            println!("   truth: {}", e.program_text);
            match &pred_ast {
                Ok(ast) => println!("   pred : {}", pretty_print(ast)),
                Err(err) => println!("   pred : <unparseable: {err}> ids {:?}", &pred),
            }
        }
    }
    let el = t0.elapsed().as_secs_f64();
    println!();
    println!(
        "{n} decodes in {el:.1}s ({:.1} ms each): parse_ok {parse_ok}, exact {exact}, alias {alias}",
        1e3 * el / n as f64
    );
    let _ = parse("DEF run { MOVE }", &gen.dsl).unwrap();
}
