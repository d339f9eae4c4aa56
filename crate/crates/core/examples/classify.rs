//! Decides the directive kind of every loop with the built-in static probe.
//!
//! `cargo run --example classify -- path/to/file.c`

use std::path::PathBuf;

use offload_tuner::classify::{classify_program, StaticProbe, VerdictStatus};
use offload_tuner::pipeline;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let path = std::env::args().nth(1).map(PathBuf::from).unwrap_or_else(|| {
        PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures/classify/corpus.c")
    });
    let program = pipeline::load_sources(&[path])?;
    let verdicts = classify_program(&program, &StaticProbe)?;
    for v in &verdicts.verdicts {
        let shape = program.loops.get(v.loop_id).map(|l| l.shape);
        match &v.status {
            VerdictStatus::Eligible(kind) => println!("loop {:>3} {:?}: {}", v.loop_id.0, shape.unwrap(), kind.pragma()),
            VerdictStatus::Ineligible(why) => println!("loop {:>3} {:?}: ineligible ({why})", v.loop_id.0, shape.unwrap()),
        }
    }
    println!("gene length {}", verdicts.gene_len());
    Ok(())
}
