use demosynth_core::dataset::{build_dataset, GenConfig};
use std::time::Instant;

fn main() {
    let cfg = GenConfig {
        n_train: 200,
        n_test: 20,
        ..GenConfig::default()
    };
    let t0 = Instant::now();
    let ds = build_dataset(&cfg).unwrap();
    let dt = t0.elapsed();
    println!(
        "built {} entries in {:.2?} ({:.1} ms/entry); rejected={} duplicates={}",
        ds.train.len() + ds.test.len(),
        dt,
        dt.as_millis() as f64 / (ds.train.len() + ds.test.len()) as f64,
        ds.manifest.rejected,
        ds.manifest.duplicates
    );
    let lens: Vec<usize> = ds
        .train
        .iter()
        .flat_map(|e| e.demos.iter().map(|d| d.steps.len()))
        .collect();
    let total: usize = lens.iter().sum();
    let max = lens.iter().max().unwrap();
    println!(
        "demo lengths: mean {:.2}, max {max}, total steps {total}",
        total as f64 / lens.len() as f64
    );
    let tok_lens: Vec<usize> = ds.train.iter().map(|e| e.program_tokens.len()).collect();
    println!(
        "program token lengths: mean {:.1}, max {}",
        tok_lens.iter().sum::<usize>() as f64 / tok_lens.len() as f64,
        tok_lens.iter().max().unwrap()
    );
}
