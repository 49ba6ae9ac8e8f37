//! Program sampling and dataset persistence.
//!
//! On disk a dataset is a directory: `train.jsonl.gz`, `test.jsonl.gz`, and
//! `manifest.json`. Each JSONL line is one entry; the manifest pins the
//! config, counts, format version, and sha-256 of each split's
//! uncompressed bytes.

use crate::dsl::{
    pretty_print, Cond, DslConfig, ProgramAst, ProgramVocab, Statement,
};
use crate::exec::{
    coverage_of, generate_demo_set, DemoSet, Demonstration, ExecConfig, ExecError, Terminated,
};
use crate::rng::{mix, CounterRng};
use crate::vislang::{VisVocab, TOKENIZER_CONVENTION};
use crate::world::{PerceptVector, WorldConfig, WorldError, WorldState};
use flate2::read::GzDecoder;
use flate2::write::GzEncoder;
use flate2::Compression;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::collections::HashSet;
use std::io::{Read, Write};
use std::path::Path;
use thiserror::Error;

pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("corrupt dataset: {0}")]
    Corrupt(String),
    #[error("dataset format version {found}, this build reads {expected}")]
    VersionMismatch { found: u32, expected: u32 },
    #[error(
        "sampling budget exhausted: {sampled} draws admitted only {admitted} of {wanted} programs"
    )]
    Budget {
        sampled: usize,
        admitted: usize,
        wanted: usize,
    },
    #[error(transparent)]
    World(#[from] WorldError),
}

/// Per-production sampling weights. Statement weights are relative;
/// likewise the condition weights. `body_continue` is the geometric
/// continuation probability (mean body length 1/(1−p)).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SampleWeights {
    pub action: f64,
    pub repeat: f64,
    pub while_: f64,
    pub if_: f64,
    pub ifelse: f64,
    pub body_continue: f64,
    pub cond_percept: f64,
    pub cond_not: f64,
    pub cond_and: f64,
    pub cond_or: f64,
}

impl Default for SampleWeights {
    fn default() -> Self {
        SampleWeights {
            action: 0.5,
            repeat: 0.15,
            while_: 0.1,
            if_: 0.15,
            ifelse: 0.1,
            body_continue: 0.6, // mean body length 2.5
            cond_percept: 0.6,
            cond_not: 0.2,
            cond_and: 0.1,
            cond_or: 0.1,
        }
    }
}

/// Conditions may nest at most this deep when sampled (statement nesting
/// has its own configured limit; the grammar itself does not bound cond
/// depth, so the sampler must).
const COND_DEPTH_CAP: usize = 3;

fn sample_cond(rng: &mut CounterRng, cfg: &DslConfig, w: &SampleWeights, depth: usize) -> Cond {
    if depth >= COND_DEPTH_CAP {
        return Cond::Percept(rng.below(cfg.q as u64) as usize);
    }
    match rng.weighted(&[w.cond_percept, w.cond_not, w.cond_and, w.cond_or]) {
        0 => Cond::Percept(rng.below(cfg.q as u64) as usize),
        1 => Cond::Not(Box::new(sample_cond(rng, cfg, w, depth + 1))),
        2 => Cond::And(
            Box::new(sample_cond(rng, cfg, w, depth + 1)),
            Box::new(sample_cond(rng, cfg, w, depth + 1)),
        ),
        _ => Cond::Or(
            Box::new(sample_cond(rng, cfg, w, depth + 1)),
            Box::new(sample_cond(rng, cfg, w, depth + 1)),
        ),
    }
}

fn sample_body(
    rng: &mut CounterRng,
    cfg: &DslConfig,
    w: &SampleWeights,
    depth: usize,
    remaining: &mut usize,
) -> Vec<Statement> {
    let mut body = Vec::new();
    loop {
        if *remaining == 0 {
            if body.is_empty() {
                // Bodies must be non-empty; a lone action is the cheapest.
                body.push(Statement::Action(rng.below(cfg.m as u64) as usize));
            }
            return body;
        }
        *remaining -= 1;
        let can_nest = depth < cfg.limits.max_nest && *remaining > 0;
        let kind = if can_nest {
            rng.weighted(&[w.action, w.repeat, w.while_, w.if_, w.ifelse])
        } else {
            0
        };
        let stmt = match kind {
            0 => Statement::Action(rng.below(cfg.m as u64) as usize),
            1 => Statement::Repeat {
                // Sampled counts live in [2, max_repeat]; 1 is parse-legal
                // but a pointless wrapper.
                count: 2 + rng.below(cfg.limits.max_repeat as u64 - 1) as u32,
                body: sample_body(rng, cfg, w, depth + 1, remaining),
            },
            2 => Statement::While {
                cond: sample_cond(rng, cfg, w, 0),
                body: sample_body(rng, cfg, w, depth + 1, remaining),
            },
            3 => Statement::If {
                cond: sample_cond(rng, cfg, w, 0),
                then_body: sample_body(rng, cfg, w, depth + 1, remaining),
            },
            _ => Statement::IfElse {
                cond: sample_cond(rng, cfg, w, 0),
                then_body: sample_body(rng, cfg, w, depth + 1, remaining),
                else_body: sample_body(rng, cfg, w, depth + 1, remaining),
            },
        };
        body.push(stmt);
        if rng.next_f64() >= w.body_continue {
            return body;
        }
    }
}

/// Grammar-directed program sampling; deterministic in `seed`.
pub fn sample_program(seed: u64, cfg: &DslConfig, weights: &SampleWeights) -> ProgramAst {
    for attempt in 0..64u64 {
        let mut rng = CounterRng::derive(seed, attempt);
        let mut remaining = cfg.limits.max_stmts;
        let ast = ProgramAst::new(sample_body(&mut rng, cfg, weights, 1, &mut remaining));
        if ast.validate(cfg).is_ok() {
            return ast;
        }
    }
    unreachable!("sampler respects limits by construction")
}

/// One stored demonstration: replay seed, (percept-bit-string, action)
/// steps, termination flag.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StoredDemo {
    pub seed: u64,
    pub steps: Vec<(String, usize)>,
    pub terminated: Terminated,
}

impl StoredDemo {
    pub fn to_demonstration(&self) -> Result<Demonstration, DatasetError> {
        let steps = self
            .steps
            .iter()
            .map(|(bits, a)| {
                PerceptVector::from_bit_string(bits)
                    .map(|p| (p, *a))
                    .ok_or_else(|| DatasetError::Corrupt(format!("bad percept bits {bits:?}")))
            })
            .collect::<Result<Vec<_>, _>>()?;
        Ok(Demonstration {
            steps,
            terminated: self.terminated,
        })
    }

    fn from_demonstration(demo: &Demonstration, seed: u64) -> StoredDemo {
        StoredDemo {
            seed,
            steps: demo
                .steps
                .iter()
                .map(|(p, a)| (p.to_bit_string(), *a))
                .collect(),
            terminated: demo.terminated,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DatasetEntry {
    pub program_text: String,
    pub program_tokens: Vec<u32>,
    pub demos: Vec<StoredDemo>,
}

impl DatasetEntry {
    pub fn demonstrations(&self) -> Result<Vec<Demonstration>, DatasetError> {
        self.demos.iter().map(StoredDemo::to_demonstration).collect()
    }

    pub fn episode_seeds(&self) -> Vec<u64> {
        self.demos.iter().map(|d| d.seed).collect()
    }
}

/// Everything needed to regenerate or validate the dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub format_version: u32,
    pub tokenizer_convention: String,
    pub world: WorldConfig,
    pub dsl: DslConfig,
    pub weights: SampleWeights,
    pub exec: ExecConfig,
    pub k: usize,
    pub seed: u64,
    pub n_train: usize,
    pub n_test: usize,
    /// Programs rejected as coverage-Unsatisfiable during generation.
    pub rejected: usize,
    /// Duplicate canonical forms skipped during generation.
    pub duplicates: usize,
    /// Programs skipped for exceeding `max_program_tokens`.
    pub oversize: usize,
    /// Longest admitted program token sequence (≤ max_program_tokens).
    pub max_program_tokens: usize,
    pub program_vocab_size: usize,
    pub vis_vocab_size: usize,
    pub sha256_train: String,
    pub sha256_test: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub manifest: DatasetManifest,
    pub train: Vec<DatasetEntry>,
    pub test: Vec<DatasetEntry>,
}

/// Generation parameters for [`build_dataset`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GenConfig {
    pub world: WorldConfig,
    pub dsl: DslConfig,
    pub weights: SampleWeights,
    pub exec: ExecConfig,
    pub k: usize,
    pub n_train: usize,
    pub n_test: usize,
    pub seed: u64,
    /// Sampling stops with `Budget` after `budget_factor · (n_train+n_test)`
    /// draws.
    pub budget_factor: usize,
    /// Programs whose token sequence (with specials) exceeds this are
    /// skipped, keeping every target inside the decoder window.
    pub max_program_tokens: usize,
}

impl Default for GenConfig {
    fn default() -> Self {
        let world = WorldConfig::default();
        let dsl = DslConfig::default();
        GenConfig {
            world,
            dsl,
            weights: SampleWeights::default(),
            exec: ExecConfig::default(),
            k: 25,
            n_train: 5000,
            n_test: 500,
            seed: 7,
            budget_factor: 40,
            max_program_tokens: 64,
        }
    }
}

impl GenConfig {
    pub fn validate(&self) -> Result<(), DatasetError> {
        self.world.validate()?;
        if self.dsl.q != self.world.q || self.dsl.m != self.world.m {
            return Err(DatasetError::Corrupt(format!(
                "dsl (q={}, m={}) disagrees with world (q={}, m={})",
                self.dsl.q, self.dsl.m, self.world.q, self.world.m
            )));
        }
        if self.k < 1 || self.n_train < 1 || self.n_test < 1 {
            return Err(DatasetError::Corrupt(
                "k, n_train, n_test must all be ≥ 1".into(),
            ));
        }
        Ok(())
    }
}

/// Hash of a token sequence, used to key each program's episode seeds so a
/// given program always receives the same demos regardless of when it is
/// drawn.
fn tokens_key(tokens: &[u32]) -> u64 {
    let words: Vec<u64> = tokens.iter().map(|&t| t as u64).collect();
    mix(&words)
}

/// Samples, deduplicates, demonstrates, and splits programs. Train is
/// filled first, then test; the canonical-token dedup set spans both splits
/// so they are disjoint by construction.
pub fn build_dataset(cfg: &GenConfig) -> Result<Dataset, DatasetError> {
    build_dataset_jobs(cfg, 1)
}

/// One sampled draw after the cheap sequential phase. `Kept` draws carry
/// the program whose demo set is still to be generated.
enum Draw {
    Duplicate,
    Oversize,
    Kept { ast: ProgramAst, tokens: Vec<u32> },
}

/// [`build_dataset`] with a worker-parallelism bound.
///
/// The draw stream is processed in blocks: deduplication and the length
/// filter run sequentially in draw order (they depend only on the token
/// stream), demo-set generation for the surviving draws fans out across
/// `jobs` workers (each set's seed is a pure function of the program), and
/// admission replays the block in draw order. Output is byte-identical for
/// every `jobs` value; the final block may generate a few demo sets past
/// the stopping point, which are discarded.
pub fn build_dataset_jobs(cfg: &GenConfig, jobs: usize) -> Result<Dataset, DatasetError> {
    cfg.validate()?;
    let jobs = jobs.max(1);
    let vocab = ProgramVocab::new(&cfg.dsl);
    let wanted = cfg.n_train + cfg.n_test;
    let budget = cfg.budget_factor.saturating_mul(wanted);
    let mut seen: HashSet<Vec<u32>> = HashSet::new();
    let mut train = Vec::with_capacity(cfg.n_train);
    let mut test = Vec::with_capacity(cfg.n_test);
    let mut rejected = 0usize;
    let mut duplicates = 0usize;
    let mut oversize = 0usize;
    let mut longest = 0usize;
    let block = (jobs * 8).max(32);
    let mut block_start = 0usize;
    'blocks: loop {
        if train.len() + test.len() == wanted {
            break;
        }
        // Phase 1: sample a block of draws and apply the order-dependent
        // cheap filters.
        let mut drawn: Vec<Draw> = Vec::with_capacity(block);
        for draw_idx in block_start..block_start + block {
            let prog_seed = mix(&[cfg.seed, 0x5a17, draw_idx as u64]);
            let ast = sample_program(prog_seed, &cfg.dsl, &cfg.weights);
            let tokens = vocab.to_tokens(&ast);
            if !seen.insert(tokens.clone()) {
                drawn.push(Draw::Duplicate);
            } else if tokens.len() > cfg.max_program_tokens {
                drawn.push(Draw::Oversize);
            } else {
                drawn.push(Draw::Kept { ast, tokens });
            }
        }
        // Phase 2: demo sets for the kept draws, fanned out over workers.
        let kept: Vec<(usize, &ProgramAst, &Vec<u32>)> = drawn
            .iter()
            .enumerate()
            .filter_map(|(i, d)| match d {
                Draw::Kept { ast, tokens } => Some((i, ast, tokens)),
                _ => None,
            })
            .collect();
        let mut outcomes: Vec<Option<Result<DemoSet, ExecError>>> = Vec::new();
        outcomes.resize_with(block, || None);
        let chunk = kept.len().div_ceil(jobs.min(kept.len()).max(1)).max(1);
        std::thread::scope(|scope| {
            let mut slots = outcomes.as_mut_slice();
            let mut consumed = 0usize;
            for piece in kept.chunks(chunk) {
                // Hand each worker the outcome slots its draws land in.
                let first = piece[0].0;
                let last = piece[piece.len() - 1].0;
                let (_, rest) = slots.split_at_mut(first - consumed);
                let (mine, rest) = rest.split_at_mut(last - first + 1);
                slots = rest;
                consumed = last + 1;
                scope.spawn(move || {
                    for &(i, ast, tokens) in piece {
                        let set_seed = mix(&[cfg.seed, 0xd305, tokens_key(tokens)]);
                        mine[i - first] =
                            Some(generate_demo_set(ast, &cfg.world, &cfg.exec, cfg.k, set_seed));
                    }
                });
            }
        });
        // Phase 3: admission in draw order.
        for (offset, draw) in drawn.into_iter().enumerate() {
            if train.len() + test.len() == wanted {
                break 'blocks;
            }
            let draw_idx = block_start + offset;
            if draw_idx >= budget {
                return Err(DatasetError::Budget {
                    sampled: draw_idx,
                    admitted: train.len() + test.len(),
                    wanted,
                });
            }
            let tokens = match draw {
                Draw::Duplicate => {
                    duplicates += 1;
                    continue;
                }
                Draw::Oversize => {
                    oversize += 1;
                    continue;
                }
                Draw::Kept { tokens, .. } => tokens,
            };
            match outcomes[offset].take().expect("kept draw has an outcome") {
                Ok(set) => {
                    longest = longest.max(tokens.len());
                    let entry = DatasetEntry {
                        program_text: pretty_print(&set.program),
                        program_tokens: tokens,
                        demos: set
                            .demos
                            .iter()
                            .zip(&set.episode_seeds)
                            .map(|(d, &s)| StoredDemo::from_demonstration(d, s))
                            .collect(),
                    };
                    if train.len() < cfg.n_train {
                        train.push(entry);
                    } else {
                        test.push(entry);
                    }
                }
                Err(ExecError::Unsatisfiable { .. }) => rejected += 1,
                Err(ExecError::World(e)) => return Err(e.into()),
            }
        }
        block_start += block;
    }
    let manifest = DatasetManifest {
        format_version: FORMAT_VERSION,
        tokenizer_convention: TOKENIZER_CONVENTION.into(),
        world: cfg.world.clone(),
        dsl: cfg.dsl.clone(),
        weights: cfg.weights.clone(),
        exec: cfg.exec.clone(),
        k: cfg.k,
        seed: cfg.seed,
        n_train: train.len(),
        n_test: test.len(),
        rejected,
        duplicates,
        oversize,
        max_program_tokens: longest,
        program_vocab_size: vocab.size(),
        vis_vocab_size: VisVocab::new(cfg.dsl.q, cfg.dsl.m).vocab_size(),
        sha256_train: hash_entries(&train),
        sha256_test: hash_entries(&test),
    };
    Ok(Dataset {
        manifest,
        train,
        test,
    })
}

fn entries_to_jsonl(entries: &[DatasetEntry]) -> Vec<u8> {
    let mut out = Vec::new();
    for e in entries {
        serde_json::to_writer(&mut out, e).expect("entry serialization is infallible");
        out.push(b'\n');
    }
    out
}

fn hash_entries(entries: &[DatasetEntry]) -> String {
    let bytes = entries_to_jsonl(entries);
    format!("{:x}", Sha256::digest(&bytes))
}

fn write_gz(path: &Path, bytes: &[u8]) -> Result<(), DatasetError> {
    // flate2 writes mtime=0 by default, keeping output byte-stable.
    let mut enc = GzEncoder::new(Vec::new(), Compression::default());
    enc.write_all(bytes)?;
    let gz = enc.finish()?;
    atomic_write(path, &gz)
}

/// Temp-file-plus-rename so readers never observe partial writes.
pub fn atomic_write(path: &Path, bytes: &[u8]) -> Result<(), DatasetError> {
    let dir = path.parent().unwrap_or_else(|| Path::new("."));
    std::fs::create_dir_all(dir)?;
    let tmp = dir.join(format!(
        ".{}.tmp",
        path.file_name()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_else(|| "artifact".into())
    ));
    std::fs::write(&tmp, bytes)?;
    std::fs::rename(&tmp, path)?;
    Ok(())
}

pub fn write_dataset(ds: &Dataset, dir: &Path) -> Result<(), DatasetError> {
    std::fs::create_dir_all(dir)?;
    write_gz(&dir.join("train.jsonl.gz"), &entries_to_jsonl(&ds.train))?;
    write_gz(&dir.join("test.jsonl.gz"), &entries_to_jsonl(&ds.test))?;
    let manifest =
        serde_json::to_vec_pretty(&ds.manifest).expect("manifest serialization is infallible");
    atomic_write(&dir.join("manifest.json"), &manifest)?;
    Ok(())
}

fn read_gz_lines(path: &Path) -> Result<Vec<DatasetEntry>, DatasetError> {
    let file = std::fs::File::open(path)?;
    let mut text = String::new();
    GzDecoder::new(file)
        .read_to_string(&mut text)
        .map_err(|e| DatasetError::Corrupt(format!("{}: {e}", path.display())))?;
    text.lines()
        .map(|line| {
            serde_json::from_str(line)
                .map_err(|e| DatasetError::Corrupt(format!("{}: {e}", path.display())))
        })
        .collect()
}

/// Loads and validates a dataset directory: format version, per-split
/// hashes, counts, token round-trips, and a 1-in-100 demo replay
/// spot-check.
pub fn load_dataset(dir: &Path) -> Result<Dataset, DatasetError> {
    let manifest_bytes = std::fs::read(dir.join("manifest.json"))?;
    let manifest: DatasetManifest = serde_json::from_slice(&manifest_bytes)
        .map_err(|e| DatasetError::Corrupt(format!("manifest.json: {e}")))?;
    if manifest.format_version != FORMAT_VERSION {
        return Err(DatasetError::VersionMismatch {
            found: manifest.format_version,
            expected: FORMAT_VERSION,
        });
    }
    if manifest.tokenizer_convention != TOKENIZER_CONVENTION {
        return Err(DatasetError::Corrupt(format!(
            "tokenizer convention {:?} unsupported (this build: {:?})",
            manifest.tokenizer_convention, TOKENIZER_CONVENTION
        )));
    }
    let train = read_gz_lines(&dir.join("train.jsonl.gz"))?;
    let test = read_gz_lines(&dir.join("test.jsonl.gz"))?;
    for (name, entries, n, hash) in [
        ("train", &train, manifest.n_train, &manifest.sha256_train),
        ("test", &test, manifest.n_test, &manifest.sha256_test),
    ] {
        if entries.len() != n {
            return Err(DatasetError::Corrupt(format!(
                "{name}: {} entries, manifest says {n}",
                entries.len()
            )));
        }
        let got = hash_entries(entries);
        if got != *hash {
            return Err(DatasetError::Corrupt(format!(
                "{name}: content hash {got} != manifest {hash}"
            )));
        }
    }
    let ds = Dataset {
        manifest,
        train,
        test,
    };
    validate_entries(&ds)?;
    Ok(ds)
}

fn validate_entries(ds: &Dataset) -> Result<(), DatasetError> {
    let vocab = ProgramVocab::new(&ds.manifest.dsl);
    for (idx, entry) in ds.train.iter().chain(ds.test.iter()).enumerate() {
        let ast = crate::dsl::parse(&entry.program_text, &ds.manifest.dsl).map_err(|e| {
            DatasetError::Corrupt(format!("entry {idx}: program does not parse: {e}"))
        })?;
        if vocab.to_tokens(&ast) != entry.program_tokens {
            return Err(DatasetError::Corrupt(format!(
                "entry {idx}: token sequence disagrees with program text"
            )));
        }
        if entry.demos.len() != ds.manifest.k {
            return Err(DatasetError::Corrupt(format!(
                "entry {idx}: {} demos, manifest k={}",
                entry.demos.len(),
                ds.manifest.k
            )));
        }
        // Replay spot-check on a 1% sample (always including entry 0).
        if idx % 100 == 0 {
            let seeds = entry.episode_seeds();
            let report =
                coverage_of(&ast, &ds.manifest.world, &seeds, ds.manifest.exec.step_budget)?;
            if !report.complete {
                return Err(DatasetError::Corrupt(format!(
                    "entry {idx}: stored demo set no longer coverage-complete"
                )));
            }
            for demo in &entry.demos {
                let stored = demo.to_demonstration()?;
                let initial = WorldState::init(&ds.manifest.world, demo.seed)?;
                let replay = crate::exec::run_program(
                    &ast,
                    &initial,
                    &ds.manifest.world,
                    ds.manifest.exec.step_budget,
                )?
                .truncated(ds.manifest.exec.t_max);
                if replay != stored {
                    return Err(DatasetError::Corrupt(format!(
                        "entry {idx}: demo replay mismatch (seed {})",
                        demo.seed
                    )));
                }
            }
        }
    }
    Ok(())
}
