//! Acceptance gate: ten go/no-go criteria covering the whole artifact, from
//! tokenizer algebra to the desk-scale noise-ablation trend. Each criterion
//! prints exactly one consolidated `[ n/10] PASS/FAIL` line on stdout at the
//! end; progress and experiment telemetry go to stderr. The binary exits
//! nonzero if any criterion fails, so `cargo test` treats the gate as a
//! regular test target.
//!
//! The heavy criteria train real models (criterion 7 twice — once for the
//! determinism rerun — and the desk-scale model for criterion 9), so a full
//! pass takes on the order of two hours on one CPU core. Every run in here
//! is seed-fixed; the gate is expected to be bit-reproducible across runs on
//! the same hardware.

use std::collections::HashSet;
use std::fs;
use std::panic::AssertUnwindSafe;
use std::time::Instant;

use ndarray::{arr2, Array2};

use demosynth_core::dataset::{build_dataset, sample_program, GenConfig, SampleWeights};
use demosynth_core::dsl::{parse, pretty_print, DslConfig, ProgramVocab};
use demosynth_core::eval::{
    ablate, behavioral_eq, evaluate, one_step_rewrites, AblateTable, AliasRuleSet, EvalReport,
};
use demosynth_core::exec::ExecConfig;
use demosynth_core::model::{
    config_hash, eval_loss, forward, grad_check, init_params, save_params, save_train_state,
    train, Batch, CkptMeta, DecodeMode, ModelConfig, OptimConfig, TrainConfig, TrainState,
};
use demosynth_core::rng::mix;
use demosynth_core::vislang::{l_max, NoiseSpec, VisVocab, PAYLOAD_OFFSET};
use demosynth_core::world::{PerceptVector, WorldConfig};

// ------------------------------------------------------------ budgets (s)

const BUDGET_TOKENIZER: f64 = 1.0;
const BUDGET_DSL: f64 = 30.0;
const BUDGET_ALIAS: f64 = 600.0;
const BUDGET_GRADCHECK: f64 = 300.0;
const BUDGET_OVERFIT: f64 = 1800.0;
const BUDGET_DESK: f64 = 7200.0;

// ------------------------------------------------- frozen experiment knobs

/// Overfit-sanity recipe (criterion 7): 200 entries, k=10, tiny model.
const OVERFIT_GEN_SEED: u64 = 1;
const OVERFIT_TRAIN_SEED: u64 = 1;
const OVERFIT_STEPS: u64 = 2_000;

/// Regression baselines recorded from the first accepted run of criterion 7.
/// The run is seed-fixed end to end, so later runs on the same hardware must
/// reproduce these numbers exactly; drift means data generation, the model,
/// or the optimizer changed behavior and the baselines need a deliberate
/// re-freeze. `None` means "not recorded yet" (first bring-up only).
const OVERFIT_BASELINE_TOKEN_ACC: Option<f64> = None;
const OVERFIT_BASELINE_EXACT: Option<f64> = None;

/// Desk-scale recipe (criteria 8 and 9): the 5,000/500 dataset from the
/// default generation config, the desk model, and a training schedule
/// calibrated to finish the whole criterion (generation, training, 10×500
/// greedy decodes) inside the two-hour budget on one core. `train_noise`
/// matches the ε=0.1 middle of the evaluation grid so the model degrades
/// gracefully instead of collapsing on noisy percepts.
const DESK_STEPS: u64 = 3_000;
const DESK_BATCH: usize = 16;
const DESK_PEAK_LR: f64 = 1e-3;
const DESK_WARMUP: u64 = 200;
const DESK_TRAIN_NOISE: f64 = 0.1;
const DESK_SEED: u64 = 0;

// --------------------------------------------------------------- plumbing

struct Outcome {
    pass: bool,
    detail: String,
}

fn pass(detail: impl Into<String>) -> Outcome {
    Outcome { pass: true, detail: detail.into() }
}

fn fail(detail: impl Into<String>) -> Outcome {
    Outcome { pass: false, detail: detail.into() }
}

/// Attach elapsed time and enforce the wall-clock budget.
fn timed(ok: bool, detail: String, start: Instant, budget: f64) -> Outcome {
    let el = start.elapsed().as_secs_f64();
    let within = el <= budget;
    Outcome {
        pass: ok && within,
        detail: format!(
            "{detail} ({el:.1}s, budget {budget:.0}s{})",
            if within { "" } else { " EXCEEDED" }
        ),
    }
}

fn panic_msg(p: Box<dyn std::any::Any + Send>) -> String {
    p.downcast_ref::<String>()
        .cloned()
        .or_else(|| p.downcast_ref::<&str>().map(|s| (*s).to_string()))
        .unwrap_or_else(|| "non-string panic payload".into())
}

/// Run a self-contained criterion, converting panics into failures.
fn run_guarded(label: &str, f: impl FnOnce() -> Outcome) -> Outcome {
    eprintln!("── {label}");
    let start = Instant::now();
    let out = match std::panic::catch_unwind(AssertUnwindSafe(f)) {
        Ok(o) => o,
        Err(p) => fail(format!("panicked: {}", panic_msg(p))),
    };
    eprintln!(
        "   {} ({:.1}s)",
        if out.pass { "pass" } else { "FAIL" },
        start.elapsed().as_secs_f64()
    );
    out
}

/// Run a heavy experiment whose artifacts feed several criteria.
fn guarded<T>(f: impl FnOnce() -> Result<T, String>) -> Result<T, String> {
    match std::panic::catch_unwind(AssertUnwindSafe(f)) {
        Ok(r) => r,
        Err(p) => Err(format!("panicked: {}", panic_msg(p))),
    }
}

// ----------------------------------------------------------- criterion 1

fn c1_reference_numbers() -> Outcome {
    pass(
        "headline accuracies of the full-scale system this artifact miniaturizes \
         (64.1 exact / 73.2 aliased; 66.0 / 75.1 at 0% detection noise) are not \
         reproducible here by design — they require an 80k-program corpus, rendered \
         first-person video, a vision encoder, and a pretrained language model. \
         This gate therefore scores properties and qualitative trends (criteria 2-10)",
    )
}

// ----------------------------------------------------------- criterion 2

fn c2_tokenizer() -> Outcome {
    let start = Instant::now();
    let world = WorldConfig::default();
    let vis = VisVocab::new(world.q, world.m);

    // Forward direction: every constructible (percepts, action) pair must
    // survive detokenize ∘ tokenize unchanged.
    let mut pairs = 0usize;
    for action in 0..world.m {
        for bits in 0..(1u32 << world.q) {
            let percepts =
                PerceptVector((0..world.q).map(|i| bits >> i & 1 == 1).collect());
            let id = match vis.tokenize(&percepts, action) {
                Ok(id) => id,
                Err(e) => return fail(format!("tokenize({bits:06b}, {action}) failed: {e}")),
            };
            let (p2, a2) = match vis.detokenize(id) {
                Ok(pa) => pa,
                Err(e) => return fail(format!("detokenize({id}) failed: {e}")),
            };
            if p2.0 != percepts.0 || a2 != action {
                return fail(format!(
                    "round-trip mismatch: ({bits:06b}, {action}) → id {id} → ({:?}, {a2})",
                    p2.0
                ));
            }
            pairs += 1;
        }
    }

    // Reverse direction: scan every payload pattern in the 2^(q+m) block.
    // Exactly the patterns with a one-hot action field may decode, and each
    // decodable id must re-encode to itself.
    let mut decodable = 0usize;
    let mut rejected = 0usize;
    for psi in 0..(1u32 << (world.q + world.m)) {
        let id = PAYLOAD_OFFSET + psi;
        match vis.detokenize(id) {
            Ok((p, a)) => {
                decodable += 1;
                match vis.tokenize(&p, a) {
                    Ok(back) if back == id => {}
                    Ok(back) => return fail(format!("id {id} re-encoded to {back}")),
                    Err(e) => return fail(format!("id {id} decoded but re-encode failed: {e}")),
                }
            }
            Err(_) => rejected += 1,
        }
    }
    if decodable != pairs {
        return fail(format!(
            "{decodable} payload ids decode but only {pairs} pairs are constructible"
        ));
    }

    timed(
        true,
        format!(
            "all {pairs} constructible (percept, action) pairs round-trip; full \
             {}-id payload scan: {decodable} decodable, {rejected} malformed rejected",
            1u32 << (world.q + world.m)
        ),
        start,
        BUDGET_TOKENIZER,
    )
}

// ----------------------------------------------------------- criterion 3

fn c3_dsl_roundtrip() -> Outcome {
    let start = Instant::now();
    let dsl = DslConfig::default();
    let weights = SampleWeights::default();
    let vocab = ProgramVocab::new(&dsl);
    const N: u64 = 10_000;
    for i in 0..N {
        let ast = sample_program(mix(&[0xacce, 0xc3, i]), &dsl, &weights);
        let src = pretty_print(&ast);
        match parse(&src, &dsl) {
            Ok(back) if back == ast => {}
            Ok(_) => {
                return fail(format!("program {i}: parse(pretty_print) changed the AST:\n  {src}"))
            }
            Err(e) => return fail(format!("program {i}: reparse failed ({e}):\n  {src}")),
        }
        let toks = vocab.to_tokens(&ast);
        match vocab.from_tokens(&toks) {
            Ok(back) if back == ast => {}
            Ok(_) => {
                return fail(format!("program {i}: token round-trip changed the AST:\n  {src}"))
            }
            Err(e) => return fail(format!("program {i}: from_tokens failed ({e}):\n  {src}")),
        }
    }
    timed(
        true,
        format!("{N} sampled programs: source and token round-trips identical, zero failures"),
        start,
        BUDGET_DSL,
    )
}

// ----------------------------------------------------------- criterion 4

fn c4_alias_soundness() -> Outcome {
    let start = Instant::now();
    let dsl = DslConfig::default();
    let weights = SampleWeights::default();
    let world = WorldConfig::default();
    let exec = ExecConfig::default();
    let rules = AliasRuleSet::default();
    let vocab = ProgramVocab::new(&dsl);
    const N: u64 = 1_000;
    const TRIALS: usize = 50;
    let mut edges_total = 0usize;
    for i in 0..N {
        if i % 200 == 0 && i > 0 {
            eprintln!("   closure {i}/{N} ({edges_total} edges so far)");
        }
        let root = sample_program(mix(&[0xacce, 0xc4, i]), &dsl, &weights);
        // Breadth-first over the same bounded closure the scorer uses: every
        // generated rewrite edge gets a behavioral-equivalence check, even
        // when the child is a duplicate or the size cap has been reached.
        let mut seen: HashSet<Vec<u32>> = HashSet::new();
        seen.insert(vocab.to_tokens(&root));
        let mut frontier = vec![root];
        for _ in 0..rules.max_depth {
            let mut next = Vec::new();
            for parent in &frontier {
                for child in one_step_rewrites(parent, &dsl, &rules) {
                    edges_total += 1;
                    if !behavioral_eq(parent, &child, &world, exec.step_budget, TRIALS) {
                        return fail(format!(
                            "behavioral counterexample (program {i}):\n  parent: {}\n  child:  {}",
                            pretty_print(parent),
                            pretty_print(&child)
                        ));
                    }
                    if seen.len() < rules.max_size && seen.insert(vocab.to_tokens(&child)) {
                        next.push(child);
                    }
                }
            }
            frontier = next;
            if frontier.is_empty() {
                break;
            }
        }
    }
    timed(
        true,
        format!(
            "{N} closures, {edges_total} rewrite edges, behavioral_eq over {TRIALS} seeded \
             initial states per edge, zero counterexamples"
        ),
        start,
        BUDGET_ALIAS,
    )
}

// ----------------------------------------------------------- criterion 5

fn c5_gradcheck() -> Outcome {
    let start = Instant::now();
    // Tiny shape: d_model 8, one head, one block each side. Small enough
    // that two f64 forwards per sampled coordinate stay cheap.
    let cfg = ModelConfig {
        src_vocab: 16,
        tgt_vocab: 12,
        d_model: 8,
        n_heads: 1,
        n_enc_blocks: 1,
        n_dec_blocks: 1,
        d_ff: 16,
        dropout: 0.0,
        max_src_len: 6,
        max_tgt_len: 4,
    };
    // Mixed-length batch so padding and loss masking are on the checked path.
    let batch = Batch {
        src: arr2(&[[1u32, 5, 9, 13, 2, 0], [1, 8, 3, 2, 0, 0]]),
        src_mask: arr2(&[
            [true, true, true, true, true, false],
            [true, true, true, true, false, false],
        ]),
        tgt_in: arr2(&[[1u32, 4, 7, 9], [1, 6, 2, 0]]),
        tgt_out: arr2(&[[4u32, 7, 9, 2], [6, 2, 0, 0]]),
    };
    let report = grad_check(&cfg, &batch, 200, 0x5eed);
    timed(
        report.passed(1e-3),
        format!(
            "{} sampled coordinates across all parameter groups vs central differences, \
             max relative error {:.2e} (tolerance 1e-3)",
            report.n_checked, report.max_rel_err
        ),
        start,
        BUDGET_GRADCHECK,
    )
}

// ----------------------------------------------------------- criterion 6

fn bits_equal(a: &ndarray::Array3<f32>, b: &ndarray::Array3<f32>) -> bool {
    a.iter().zip(b.iter()).all(|(x, y)| x.to_bits() == y.to_bits())
}

fn c6_causality_padding() -> Outcome {
    let cfg = ModelConfig {
        src_vocab: 20,
        tgt_vocab: 12,
        d_model: 16,
        n_heads: 2,
        n_enc_blocks: 1,
        n_dec_blocks: 1,
        d_ff: 32,
        dropout: 0.0,
        max_src_len: 24,
        max_tgt_len: 8,
    };
    let params = init_params::<f32>(&cfg, 0xc6);
    let fwd = |b: &Batch| forward::<f32>(&params, &cfg, b, None).0;

    // (a) Decoder causality: rewriting tgt_in strictly after position t must
    // leave logits at positions ≤ t bitwise unchanged.
    let src = arr2(&[[1u32, 5, 9, 13, 17]]);
    let mask = Array2::from_elem((1, 5), true);
    let tgt_in = arr2(&[[1u32, 4, 7, 9, 6, 3]]);
    let tgt_out = arr2(&[[4u32, 7, 9, 6, 3, 2]]);
    let base = Batch {
        src: src.clone(),
        src_mask: mask.clone(),
        tgt_in: tgt_in.clone(),
        tgt_out: tgt_out.clone(),
    };
    let logits0 = fwd(&base);
    for t in 0..5usize {
        let mut alt = tgt_in.clone();
        for j in (t + 1)..alt.ncols() {
            alt[[0, j]] = (alt[[0, j]] + 5) % cfg.tgt_vocab as u32;
        }
        let logits1 = fwd(&Batch {
            src: src.clone(),
            src_mask: mask.clone(),
            tgt_in: alt,
            tgt_out: tgt_out.clone(),
        });
        for pos in 0..=t {
            for v in 0..cfg.tgt_vocab {
                if logits0[[0, pos, v]].to_bits() != logits1[[0, pos, v]].to_bits() {
                    return fail(format!(
                        "causality: substitution after t={t} changed logits[{pos}][{v}]: \
                         {} vs {}",
                        logits0[[0, pos, v]],
                        logits1[[0, pos, v]]
                    ));
                }
            }
        }
    }

    // (b1) Batchmate independence: row 0's logits must not depend on row 1's
    // content (same shapes, bitwise).
    let tgt2_in = arr2(&[[1u32, 4, 7, 9], [1, 5, 8, 2]]);
    let tgt2_out = arr2(&[[4u32, 7, 9, 2], [5, 8, 2, 0]]);
    let la = fwd(&Batch {
        src: arr2(&[[1u32, 5, 9, 13, 17, 2], [3, 3, 3, 3, 3, 3]]),
        src_mask: Array2::from_elem((2, 6), true),
        tgt_in: tgt2_in.clone(),
        tgt_out: tgt2_out.clone(),
    });
    let lb = fwd(&Batch {
        src: arr2(&[[1u32, 5, 9, 13, 17, 2], [7, 11, 2, 19, 8, 14]]),
        src_mask: Array2::from_elem((2, 6), true),
        tgt_in: arr2(&[[1u32, 4, 7, 9], [1, 9, 10, 4]]),
        tgt_out: arr2(&[[4u32, 7, 9, 2], [9, 10, 4, 0]]),
    });
    for pos in 0..la.shape()[1] {
        for v in 0..cfg.tgt_vocab {
            if la[[0, pos, v]].to_bits() != lb[[0, pos, v]].to_bits() {
                return fail(format!(
                    "batchmate leak: row 1 content changed row 0 logits[{pos}][{v}]"
                ));
            }
        }
    }

    // (b2) Masked-content invariance: rewriting token ids under mask=false
    // positions (same length) must leave all logits bitwise unchanged.
    let maskc = arr2(&[[true, true, true, true, true, true, false, false, false, false]]);
    let lc = fwd(&Batch {
        src: arr2(&[[1u32, 5, 9, 13, 17, 2, 0, 0, 0, 0]]),
        src_mask: maskc.clone(),
        tgt_in: tgt_in.clone(),
        tgt_out: tgt_out.clone(),
    });
    let ld = fwd(&Batch {
        src: arr2(&[[1u32, 5, 9, 13, 17, 2, 7, 3, 19, 11]]),
        src_mask: maskc,
        tgt_in: tgt_in.clone(),
        tgt_out: tgt_out.clone(),
    });
    if !bits_equal(&lc, &ld) {
        return fail("masked-content invariance: ids under mask=false changed the logits");
    }

    // (c) Pad extension: appending masked padding columns may reorder float
    // reductions inside the matrix kernels, so this comparison uses a 1e-5
    // absolute tolerance plus per-position argmax equality instead of bits.
    let le = fwd(&Batch {
        src: arr2(&[[1u32, 5, 9, 13, 17, 2, 6, 10, 14, 18]]),
        src_mask: Array2::from_elem((1, 10), true),
        tgt_in: tgt_in.clone(),
        tgt_out: tgt_out.clone(),
    });
    let mut long_src = Array2::zeros((1, 18));
    let mut long_mask = Array2::from_elem((1, 18), false);
    for (j, &id) in [1u32, 5, 9, 13, 17, 2, 6, 10, 14, 18].iter().enumerate() {
        long_src[[0, j]] = id;
        long_mask[[0, j]] = true;
    }
    let lf = fwd(&Batch { src: long_src, src_mask: long_mask, tgt_in, tgt_out });
    let mut max_diff = 0.0f32;
    for pos in 0..le.shape()[1] {
        let mut arg_e = 0;
        let mut arg_f = 0;
        for v in 0..cfg.tgt_vocab {
            max_diff = max_diff.max((le[[0, pos, v]] - lf[[0, pos, v]]).abs());
            if le[[0, pos, v]] > le[[0, pos, arg_e]] {
                arg_e = v;
            }
            if lf[[0, pos, v]] > lf[[0, pos, arg_f]] {
                arg_f = v;
            }
        }
        if arg_e != arg_f {
            return fail(format!("pad extension flipped the argmax at position {pos}"));
        }
    }
    if max_diff > 1e-5 {
        return fail(format!("pad extension moved logits by {max_diff:.2e} > 1e-5"));
    }

    pass(format!(
        "decoder causality and batchmate/masked-content invariance bitwise-exact; \
         pad extension within {max_diff:.1e} (tolerance 1e-5) with identical argmax"
    ))
}

// ------------------------------------------------- criteria 7 and 10 (run)

struct OverfitArtifacts {
    token_acc: f64,
    report: EvalReport,
    report_json: String,
    metrics_json: String,
    params_bytes: Vec<u8>,
    train_bytes: Vec<u8>,
}

fn overfit_run(tag: &str) -> Result<OverfitArtifacts, String> {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let gen = GenConfig {
        k: 10,
        n_train: 200,
        n_test: 1,
        seed: OVERFIT_GEN_SEED,
        ..GenConfig::default()
    };
    eprintln!("   [{tag}] generating the 200-entry dataset (k=10, seed {OVERFIT_GEN_SEED})…");
    let ds = build_dataset(&gen).map_err(|e| e.to_string())?;
    let vis = VisVocab::new(gen.world.q, gen.world.m);
    let vocab = ProgramVocab::new(&gen.dsl);
    let cfg = ModelConfig {
        src_vocab: vis.vocab_size(),
        tgt_vocab: vocab.size(),
        d_model: 32,
        n_heads: 4,
        n_enc_blocks: 1,
        n_dec_blocks: 1,
        d_ff: 128,
        dropout: 0.0,
        max_src_len: l_max(gen.k, gen.exec.t_max),
        max_tgt_len: gen.max_program_tokens,
    };
    let tc = TrainConfig {
        steps: OVERFIT_STEPS,
        batch_size: 16,
        peak_lr: 1.5e-3,
        warmup: 100,
        grad_clip: 1.0,
        optim: OptimConfig::default(),
        eval_interval: 100,
        train_noise: 0.0,
        seed: OVERFIT_TRAIN_SEED,
    };
    let mut state = TrainState::new(cfg.clone(), tc.seed);
    let mut metric_lines: Vec<String> = Vec::new();
    train(&mut state, &tc, &ds.train, &ds.train, &vis, |m| {
        metric_lines.push(serde_json::to_string(m).expect("metric record serializes"));
        if m.step % 400 == 0 {
            eprintln!(
                "   [{tag}] step {}/{}  train_token_acc {:.3}",
                m.step, tc.steps, m.train_token_acc
            );
        }
    })
    .map_err(|e| e.to_string())?;

    // Scored on the final-step parameters, on the training set itself: the
    // criterion is memorization capacity, not generalization.
    let (_, stats) =
        eval_loss(&state.params, &cfg, &ds.train, &vis, tc.batch_size).map_err(|e| e.to_string())?;
    let report = evaluate(
        &state.params,
        &cfg,
        &ds.train,
        &vis,
        &gen.dsl,
        &AliasRuleSet::default(),
        &NoiseSpec::clean(0),
        DecodeMode::Greedy,
    )
    .map_err(|e| e.to_string())?;

    let manifest_hash = config_hash(&ds.manifest);
    let ppath = dir.path().join("model.ckpt");
    save_params(
        &ppath,
        &cfg,
        &state.params,
        &CkptMeta {
            step: state.step,
            init_seed: state.init_seed,
            dataset_manifest_hash: Some(manifest_hash.clone()),
        },
    )
    .map_err(|e| e.to_string())?;
    let tpath = dir.path().join("train_state.ckpt");
    save_train_state(&tpath, &state, Some(manifest_hash)).map_err(|e| e.to_string())?;

    Ok(OverfitArtifacts {
        token_acc: stats.accuracy(),
        report_json: serde_json::to_string(&report).expect("report serializes"),
        report,
        metrics_json: metric_lines.join("\n"),
        params_bytes: fs::read(&ppath).map_err(|e| e.to_string())?,
        train_bytes: fs::read(&tpath).map_err(|e| e.to_string())?,
    })
}

fn c7_overfit(arts: &Result<OverfitArtifacts, String>, elapsed: f64) -> Outcome {
    let a = match arts {
        Ok(a) => a,
        Err(e) => return fail(format!("overfit run failed: {e}")),
    };
    let thresholds =
        a.token_acc >= 0.95 && a.report.acc_exact >= 0.90 && elapsed <= BUDGET_OVERFIT;
    let mut detail = format!(
        "teacher-forced token acc {:.4} (need ≥0.95), greedy exact {:.4} (need ≥0.90) \
         on the 200-entry training set in {} steps ({elapsed:.0}s, budget {:.0}s)",
        a.token_acc, a.report.acc_exact, OVERFIT_STEPS, BUDGET_OVERFIT
    );
    let baselines_ok = match (OVERFIT_BASELINE_TOKEN_ACC, OVERFIT_BASELINE_EXACT) {
        (Some(bt), Some(be)) => {
            let hit = (a.token_acc - bt).abs() < 1e-12 && (a.report.acc_exact - be).abs() < 1e-12;
            if hit {
                detail.push_str("; matches recorded regression baselines");
            } else {
                detail.push_str(&format!(
                    "; DRIFT from recorded baselines token {bt:.4} / exact {be:.4} — \
                     re-freeze only after an intentional behavior change"
                ));
            }
            hit
        }
        _ => {
            detail.push_str("; regression baselines not recorded yet (first bring-up)");
            true
        }
    };
    Outcome { pass: thresholds && baselines_ok, detail }
}

fn c10_determinism(
    first: &Result<OverfitArtifacts, String>,
    second: &Result<OverfitArtifacts, String>,
) -> Outcome {
    let (a, b) = match (first, second) {
        (Ok(a), Ok(b)) => (a, b),
        (Err(e), _) => return fail(format!("first overfit run failed: {e}")),
        (_, Err(e)) => return fail(format!("repeat overfit run failed: {e}")),
    };
    let params_eq = a.params_bytes == b.params_bytes;
    let train_eq = a.train_bytes == b.train_bytes;
    let report_eq = a.report_json == b.report_json;
    let metrics_eq = a.metrics_json == b.metrics_json;
    if params_eq && train_eq && report_eq && metrics_eq {
        pass(format!(
            "same-seed repeat is byte-identical: params checkpoint ({} B), train-state \
             checkpoint ({} B), evaluation report, and the full metric stream",
            a.params_bytes.len(),
            a.train_bytes.len()
        ))
    } else {
        fail(format!(
            "same-seed repeat diverged: params {}, train state {}, report {}, metrics {}",
            if params_eq { "identical" } else { "DIFFER" },
            if train_eq { "identical" } else { "DIFFER" },
            if report_eq { "identical" } else { "DIFFER" },
            if metrics_eq { "identical" } else { "DIFFER" },
        ))
    }
}

// ------------------------------------------------- criteria 8 and 9 (run)

struct DeskArtifacts {
    table: AblateTable,
    reports: Vec<EvalReport>,
}

fn desk_run() -> Result<DeskArtifacts, String> {
    let gen = GenConfig::default();
    eprintln!(
        "   [desk] generating the dataset: {} train / {} test, k={} (seed {})…",
        gen.n_train, gen.n_test, gen.k, gen.seed
    );
    let ds = build_dataset(&gen).map_err(|e| e.to_string())?;
    let vis = VisVocab::new(gen.world.q, gen.world.m);
    let vocab = ProgramVocab::new(&gen.dsl);
    let cfg = ModelConfig::desk(vis.vocab_size(), vocab.size(), l_max(gen.k, gen.exec.t_max));
    let tc = TrainConfig {
        steps: DESK_STEPS,
        batch_size: DESK_BATCH,
        peak_lr: DESK_PEAK_LR,
        warmup: DESK_WARMUP,
        grad_clip: 1.0,
        optim: OptimConfig::default(),
        eval_interval: 100,
        train_noise: DESK_TRAIN_NOISE,
        seed: DESK_SEED,
    };
    // Tail carve for early-stopping validation, mirroring the trainer CLI;
    // the held-out test split stays untouched until the ablation below.
    let n_val = gen.n_train / 20;
    let (tr, val) = ds.train.split_at(ds.train.len() - n_val);
    eprintln!(
        "   [desk] training the desk model: {} steps, batch {}, train_noise {}…",
        tc.steps, tc.batch_size, tc.train_noise
    );
    let mut state = TrainState::new(cfg.clone(), tc.seed);
    let t = Instant::now();
    train(&mut state, &tc, tr, val, &vis, |m| {
        if m.step % 200 == 0 {
            eprintln!(
                "   [desk] step {}/{}  train_acc {:.3}  val_acc {}  ({:.0}s)",
                m.step,
                tc.steps,
                m.train_token_acc,
                m.val_token_acc.map(|v| format!("{v:.3}")).unwrap_or_else(|| "-".into()),
                t.elapsed().as_secs_f64()
            );
        }
    })
    .map_err(|e| e.to_string())?;

    eprintln!(
        "   [desk] ablating ε ∈ {{0, 0.1, 0.2}} × seeds {{1, 2, 3}} over the {}-entry \
         test split (greedy)…",
        ds.test.len()
    );
    let table = ablate(
        state.eval_params(),
        &cfg,
        &ds.test,
        &vis,
        &gen.dsl,
        &AliasRuleSet::default(),
        &[0.0, 0.1, 0.2],
        &[1, 2, 3],
        DecodeMode::Greedy,
    )
    .map_err(|e| e.to_string())?;
    eprint!("{}", table.render());
    let reports = table.rows.iter().flat_map(|r| r.reports.clone()).collect();
    Ok(DeskArtifacts { table, reports })
}

fn c9_noise_trend(desk: &Result<DeskArtifacts, String>, elapsed: f64) -> Outcome {
    let d = match desk {
        Ok(d) => d,
        Err(e) => return fail(format!("desk experiment failed: {e}")),
    };
    let r = &d.table.rows;
    if r.len() != 3 {
        return fail(format!("expected 3 ablation rows, found {}", r.len()));
    }
    let mono_exact = r[0].mean_exact >= r[1].mean_exact && r[1].mean_exact >= r[2].mean_exact;
    let mono_alias = r[0].mean_alias >= r[1].mean_alias && r[1].mean_alias >= r[2].mean_alias;
    let graceful_exact = r[2].mean_exact > 0.5 * r[0].mean_exact;
    let graceful_alias = r[2].mean_alias > 0.5 * r[0].mean_alias;
    let within = elapsed <= BUDGET_DESK;
    let ok = mono_exact && mono_alias && graceful_exact && graceful_alias && within;
    Outcome {
        pass: ok,
        detail: format!(
            "mean exact {:.4}/{:.4}/{:.4}, alias {:.4}/{:.4}/{:.4} at ε=0/0.1/0.2 over 3 seeds; \
             non-increasing: exact {} alias {}; ε=0.2 > 0.5×ε=0: exact {} alias {} \
             ({elapsed:.0}s incl. training, budget {:.0}s{})",
            r[0].mean_exact,
            r[1].mean_exact,
            r[2].mean_exact,
            r[0].mean_alias,
            r[1].mean_alias,
            r[2].mean_alias,
            if mono_exact { "yes" } else { "NO" },
            if mono_alias { "yes" } else { "NO" },
            if graceful_exact { "yes" } else { "NO" },
            if graceful_alias { "yes" } else { "NO" },
            BUDGET_DESK,
            if within { "" } else { " EXCEEDED" }
        ),
    }
}

fn c8_alias_dominates(
    overfit: &Result<OverfitArtifacts, String>,
    desk: &Result<DeskArtifacts, String>,
) -> Outcome {
    let d = match desk {
        Ok(d) => d,
        Err(e) => return fail(format!("desk experiment failed: {e}")),
    };
    // Every report produced by the gate: the 9 ablation cells plus the
    // overfit report when available.
    let mut reports: Vec<&EvalReport> = d.reports.iter().collect();
    if let Ok(a) = overfit {
        reports.push(&a.report);
    }
    let mut min_margin = f64::INFINITY;
    for r in &reports {
        if r.alias_count < r.exact_count {
            return fail(format!(
                "invariant broken: alias_count {} < exact_count {} (ε={}, seed {})",
                r.alias_count, r.exact_count, r.epsilon, r.noise_seed
            ));
        }
        min_margin = min_margin.min(r.acc_alias - r.acc_exact);
    }
    pass(format!(
        "acc_alias ≥ acc_exact on all {} evaluation reports (smallest margin {:+.4})",
        reports.len(),
        min_margin
    ))
}

// ------------------------------------------------------------------ main

fn main() {
    let total = Instant::now();
    eprintln!(
        "acceptance gate: 10 criteria; the training-based ones (7, 9, 10) dominate the runtime."
    );

    let mut results: Vec<(usize, Outcome)> = Vec::new();
    results.push((1, run_guarded("criterion 1: reference-numbers statement", c1_reference_numbers)));
    results.push((2, run_guarded("criterion 2: tokenizer exhaustive round-trip", c2_tokenizer)));
    results.push((3, run_guarded("criterion 3: DSL round-trips on 10,000 programs", c3_dsl_roundtrip)));
    results.push((4, run_guarded("criterion 4: alias-rewrite behavioral soundness", c4_alias_soundness)));
    results.push((5, run_guarded("criterion 5: finite-difference gradient check", c5_gradcheck)));
    results.push((6, run_guarded("criterion 6: decoder causality and padding invariance", c6_causality_padding)));

    eprintln!("── criterion 7 experiment: overfit sanity run");
    let t7 = Instant::now();
    let overfit = guarded(|| overfit_run("overfit"));
    let overfit_secs = t7.elapsed().as_secs_f64();
    eprintln!("   overfit run finished ({overfit_secs:.0}s)");

    eprintln!("── criterion 9 experiment: desk-scale training + noise ablation");
    let t9 = Instant::now();
    let desk = guarded(desk_run);
    let desk_secs = t9.elapsed().as_secs_f64();
    eprintln!("   desk experiment finished ({desk_secs:.0}s)");

    eprintln!("── criterion 10 experiment: same-seed repeat of the overfit run");
    let rerun = guarded(|| overfit_run("repeat"));

    results.push((7, c7_overfit(&overfit, overfit_secs)));
    results.push((8, c8_alias_dominates(&overfit, &desk)));
    results.push((9, c9_noise_trend(&desk, desk_secs)));
    results.push((10, c10_determinism(&overfit, &rerun)));
    results.sort_by_key(|(n, _)| *n);

    println!();
    let mut failed: Vec<usize> = Vec::new();
    for (n, out) in &results {
        println!("[{n:2}/10] {}  {}", if out.pass { "PASS" } else { "FAIL" }, out.detail);
        if !out.pass {
            failed.push(*n);
        }
    }
    println!();
    if failed.is_empty() {
        println!(
            "acceptance: 10/10 criteria passed ({:.0}s total)",
            total.elapsed().as_secs_f64()
        );
    } else {
        println!(
            "acceptance: {}/10 criteria passed; FAILED: {} ({:.0}s total)",
            10 - failed.len(),
            failed.iter().map(|n| n.to_string()).collect::<Vec<_>>().join(", "),
            total.elapsed().as_secs_f64()
        );
        std::process::exit(1);
    }
}
