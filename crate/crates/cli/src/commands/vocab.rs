//! `vocab`: print the program token-id table and the visual-token
//! convention. The output is a compatibility contract for stored artifacts.

use demosynth_core::dsl::ProgramVocab;
use demosynth_core::vislang::{
    l_max, VisVocab, TOKENIZER_CONVENTION, VIS_END, VIS_PAD, VIS_SEP, VIS_START,
};
use serde::Serialize;

use crate::config::load_config;
use crate::{CliError, VocabArgs, VocabFormat};

#[derive(Serialize)]
struct TokenRow {
    id: u32,
    text: String,
}

#[derive(Serialize)]
struct Specials {
    pad: u32,
    start: u32,
    sep: u32,
    end: u32,
}

#[derive(Serialize)]
struct VisualDump {
    size: usize,
    q: usize,
    m: usize,
    specials: Specials,
    payload_offset: u32,
    convention: &'static str,
    encoding: &'static str,
    l_max: usize,
}

#[derive(Serialize)]
struct ProgramDump {
    size: usize,
    tokens: Vec<TokenRow>,
}

#[derive(Serialize)]
struct VocabDump {
    program: ProgramDump,
    visual: VisualDump,
}

const ENCODING: &str = "token id = payload_offset + ψ, ψ = Σ pa_n·2^n: \
                        percept n in bit n (n < q), action a one-hot in bit q+a";

pub fn run(a: VocabArgs) -> Result<(), CliError> {
    let cfg = load_config(a.config.as_deref())?;
    cfg.validate()?;
    let vocab = ProgramVocab::new(&cfg.gen.dsl);
    let vis = VisVocab::new(cfg.gen.world.q, cfg.gen.world.m);

    let tokens: Vec<TokenRow> = (0..vocab.size() as u32)
        .map(|id| TokenRow {
            id,
            text: vocab.token_text(id).expect("id < size"),
        })
        .collect();
    let dump = VocabDump {
        program: ProgramDump {
            size: vocab.size(),
            tokens,
        },
        visual: VisualDump {
            size: vis.vocab_size(),
            q: vis.q,
            m: vis.m,
            specials: Specials {
                pad: VIS_PAD,
                start: VIS_START,
                sep: VIS_SEP,
                end: VIS_END,
            },
            payload_offset: VIS_END + 1,
            convention: TOKENIZER_CONVENTION,
            encoding: ENCODING,
            l_max: l_max(cfg.gen.k, cfg.gen.exec.t_max),
        },
    };

    match a.format {
        VocabFormat::Json => {
            println!(
                "{}",
                serde_json::to_string_pretty(&dump).expect("dump serializes")
            );
        }
        VocabFormat::Text => {
            println!("program tokens ({} ids):", dump.program.size);
            for row in &dump.program.tokens {
                println!("  {:>3}  {}", row.id, row.text);
            }
            let v = &dump.visual;
            println!();
            println!("visual tokens ({} ids, q={}, m={}):", v.size, v.q, v.m);
            println!(
                "  specials: <pad>={} <start>={} <sep>={} <end>={}",
                v.specials.pad, v.specials.start, v.specials.sep, v.specials.end
            );
            println!("  {}", v.encoding);
            println!("  convention: {}", v.convention);
            println!(
                "  l_max(k={}, t_max={}) = {}",
                cfg.gen.k, cfg.gen.exec.t_max, v.l_max
            );
        }
    }
    Ok(())
}
