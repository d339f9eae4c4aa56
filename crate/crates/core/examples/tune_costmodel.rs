//! Runs the genetic search against an analytic cost model and prints the
//! best time per generation.
//!
//! `cargo run --release --example tune_costmodel -- [file.c model.json] [seed]`

use std::path::PathBuf;

use offload_tuner::classify::{classify_program, StaticProbe};
use offload_tuner::eval::{CostModel, CostModelEvaluator};
use offload_tuner::ga::{run_ga, GAConfig, Genome};
use offload_tuner::pipeline;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let fixtures = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures/costmodel");
    let (src, model) = match args.as_slice() {
        [s, m, ..] => (PathBuf::from(s), PathBuf::from(m)),
        _ => (fixtures.join("himeno.c"), fixtures.join("himeno.json")),
    };
    let seed = args.get(2).map_or(Ok(0), |s| s.parse())?;
    let program = pipeline::load_sources(&[src])?;
    let gene_map = classify_program(&program, &StaticProbe)?.gene_map();
    let model = CostModel::from_json(&std::fs::read_to_string(model)?)?;
    let evaluator = CostModelEvaluator::new(&program, gene_map.clone(), model)?;
    let baseline = evaluator.time(&Genome::zeros(gene_map.len()))?;
    let config = GAConfig {
        rng_seed: seed,
        ..GAConfig::default()
    };
    let out = run_ga(&config, gene_map.len(), &evaluator)?;
    for r in &out.records {
        println!("gen {:>3} best {:.4} s {}", r.generation, r.best_time_s, r.best_genome);
    }
    println!(
        "baseline {baseline:.4} s, best {:.4} s, {:.2}x after {} evaluations",
        out.best.measured_time_s,
        baseline / out.best.measured_time_s,
        out.evaluations
    );
    Ok(())
}
