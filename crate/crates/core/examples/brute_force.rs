//! Exhaustive optimum under a cost model, for comparison with the search.

use std::path::PathBuf;

use offload_tuner::classify::{classify_program, StaticProbe};
use offload_tuner::eval::{brute_force_optimum, CostModel, CostModelEvaluator, PlanMode};
use offload_tuner::pipeline;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let fixtures = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures/costmodel");
    let program = pipeline::load_sources(&[fixtures.join("himeno.c")])?;
    let gene_map = classify_program(&program, &StaticProbe)?.gene_map();
    let model = CostModel::from_json(&std::fs::read_to_string(fixtures.join("himeno.json"))?)?;
    for mode in [PlanMode::PerSite, PlanMode::Batched] {
        let ev = CostModelEvaluator::new(&program, gene_map.clone(), model.clone())?.with_mode(mode);
        let (genome, t) = brute_force_optimum(&ev)?;
        println!("{mode:?}: {genome} {t:.4} s over {} genomes", 1u64 << gene_map.len());
    }
    Ok(())
}
