//! Shows per-site and batched transfer plans for a genome.
//!
//! `cargo run --example plan_transfers -- [file.c] [genome]`

use std::path::PathBuf;

use offload_tuner::classify::{classify_program, StaticProbe};
use offload_tuner::ga::Genome;
use offload_tuner::pipeline;
use offload_tuner::transfer::{Planner, TransferPlan};

fn show(title: &str, plan: &TransferPlan) {
    println!("{title}: {} events", plan.events());
    for e in &plan.entries {
        println!(
            "  {:<12} {:?} statements {}..{} sites {:?}",
            e.var.as_str(),
            e.direction,
            e.region_span[0],
            e.region_span[1],
            e.sites.iter().map(|s| s.0).collect::<Vec<_>>()
        );
    }
}

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut args = std::env::args().skip(1);
    let path = args.next().map(PathBuf::from).unwrap_or_else(|| {
        PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures/costmodel/batch3.c")
    });
    let program = pipeline::load_sources(&[path])?;
    let verdicts = classify_program(&program, &StaticProbe)?;
    let planner = Planner::new(&program, verdicts.gene_map());
    let genome = match args.next() {
        Some(g) => g.parse::<Genome>().map_err(|_| "genome must be a 0/1 string")?,
        None => Genome::ones(planner.gene_len()),
    };
    let per_site = planner.plan_transfers(&genome)?;
    let regions = planner.regions(&genome)?;
    show("per site", &per_site);
    show("batched", &planner.hoist_and_batch(&per_site, &regions));
    Ok(())
}
