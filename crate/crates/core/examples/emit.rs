//! Writes the annotated source for a genome to stdout.
//!
//! `cargo run --example emit -- [file.c] [genome]`

use std::path::PathBuf;

use offload_tuner::classify::{classify_program, StaticProbe};
use offload_tuner::emit::emit_variant;
use offload_tuner::ga::Genome;
use offload_tuner::model::FileId;
use offload_tuner::pipeline;
use offload_tuner::transfer::Planner;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut args = std::env::args().skip(1);
    let path = args.next().map(PathBuf::from).unwrap_or_else(|| {
        PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures/safety/stencil.c")
    });
    let program = pipeline::load_sources(&[path.clone()])?;
    let verdicts = classify_program(&program, &StaticProbe)?;
    let gene_map = verdicts.gene_map();
    let genome = match args.next() {
        Some(g) => g.parse::<Genome>().map_err(|_| "genome must be a 0/1 string")?,
        None => Genome::ones(gene_map.len()),
    };
    let plan = Planner::new(&program, gene_map.clone()).plan(&genome)?;
    let variant = emit_variant(&program, &genome, &gene_map, &verdicts.kind_map(), &plan)?;
    print!("{}", variant.text(&FileId::new(path.display().to_string())).unwrap_or_default());
    eprintln!("{} compute pragmas", variant.gpu_pragma_count());
    Ok(())
}
