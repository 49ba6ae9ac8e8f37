//! `version`: tool version plus every on-disk format contract.

use demosynth_core::dataset::FORMAT_VERSION;
use demosynth_core::model::CKPT_VERSION;
use demosynth_core::vislang::TOKENIZER_CONVENTION;

use crate::CliError;

pub fn run() -> Result<(), CliError> {
    println!("demosynth {}", env!("CARGO_PKG_VERSION"));
    println!("dataset format v{FORMAT_VERSION}");
    println!("checkpoint format v{CKPT_VERSION}");
    println!("tokenizer convention {TOKENIZER_CONVENTION}");
    Ok(())
}
