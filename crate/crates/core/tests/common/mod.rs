#![allow(dead_code)]

pub mod interp;

use std::path::PathBuf;

use offload_tuner::classify::{classify_program, StaticProbe, Verdicts};
use offload_tuner::emit::emit_variant;
use offload_tuner::ga::Genome;
use offload_tuner::model::{FileId, Program};
use offload_tuner::transfer::Planner;

/// Relative tolerance for floating results; integers compare exactly.
pub const FLOAT_TOL: f64 = 1e-12;

pub const SAFETY_FIXTURES: [&str; 5] = ["stencil.c", "histogram.c", "calls.c", "locals.c", "matrix.c"];

pub fn fixture(rel: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures").join(rel)
}

pub fn read_fixture(rel: &str) -> String {
    std::fs::read_to_string(fixture(rel)).unwrap_or_else(|e| panic!("{rel}: {e}"))
}

/// Parses a single-file fixture under the id `name`.
pub fn load(rel: &str) -> (String, Program) {
    let name = rel.rsplit('/').next().unwrap().to_string();
    let program = Program::from_sources([(FileId::new(name.clone()), read_fixture(rel))]).expect("fixture parses");
    (name, program)
}

pub fn classify(program: &Program) -> Verdicts {
    classify_program(program, &StaticProbe).expect("static probe")
}

/// Emits the variant for `genome` and compares its interpreted run with
/// the unannotated program.
pub fn check_genome(name: &str, program: &Program, verdicts: &Verdicts, genome: &Genome, original: &interp::Outcome) -> Result<(), String> {
    let gene_map = verdicts.gene_map();
    let plan = Planner::new(program, gene_map.clone())
        .plan(genome)
        .map_err(|e| e.to_string())?;
    let variant = emit_variant(program, genome, &gene_map, &verdicts.kind_map(), &plan).map_err(|e| e.to_string())?;
    let text = variant.text(&FileId::new(name)).ok_or("variant has no text")?;
    let run = interp::run_sources(&[(name, text)]).map_err(|e| format!("{genome}: {e}\n{text}"))?;
    original.compare(&run, FLOAT_TOL).map_err(|e| format!("{genome}: {e}\n{text}"))
}

/// Runs every genome of a fixture; returns the failures.
pub fn exhaustive_safety(rel: &str) -> (usize, Vec<String>) {
    let (name, program) = load(rel);
    let verdicts = classify(&program);
    let original = interp::run_sources(&[(&name, &read_fixture(rel))]).expect("original runs");
    let len = verdicts.gene_len();
    let mut failures = Vec::new();
    for value in 0..(1u64 << len) {
        let genome = Genome::from_index(value, len);
        if let Err(e) = check_genome(&name, &program, &verdicts, &genome, &original) {
            failures.push(e);
        }
    }
    (1 << len, failures)
}

/// Annotated text of a single-file fixture for `genome`.
pub fn emit_text(rel: &str, genome: &str) -> String {
    let (name, program) = load(rel);
    let verdicts = classify(&program);
    let genome: Genome = genome.parse().unwrap();
    let gene_map = verdicts.gene_map();
    let plan = Planner::new(&program, gene_map.clone()).plan(&genome).unwrap();
    let variant = emit_variant(&program, &genome, &gene_map, &verdicts.kind_map(), &plan).unwrap();
    variant.text(&FileId::new(name)).unwrap().to_string()
}

/// `(fixture, genome)` pairs with committed emitter output.
pub const GOLDEN_PAIRS: [(&str, &str); 10] = [
    ("safety/stencil.c", "111"),
    ("safety/stencil.c", "011"),
    ("safety/histogram.c", "1011"),
    ("safety/calls.c", "1111"),
    ("safety/locals.c", "111111"),
    ("safety/locals.c", "010110"),
    ("safety/matrix.c", "1010110"),
    ("costmodel/batch3.c", "111"),
    ("costmodel/himeno.c", "1100011011000"),
    ("classify/corpus.c", "11010101"),
];

pub fn golden_path(rel: &str, genome: &str) -> PathBuf {
    let stem = rel.rsplit('/').next().unwrap().trim_end_matches(".c");
    fixture(&format!("golden/{stem}_{genome}.c"))
}

/// Compares a pair against its golden file, rewriting it when
/// `UPDATE_GOLDEN` is set. Also checks that stripping the insertions gives
/// back the input.
pub fn check_golden(rel: &str, genome: &str) -> Result<(), String> {
    let (name, program) = load(rel);
    let verdicts = classify(&program);
    let genome: Genome = genome.parse().map_err(|_| "bad genome".to_string())?;
    let gene_map = verdicts.gene_map();
    let plan = Planner::new(&program, gene_map.clone()).plan(&genome).map_err(|e| e.to_string())?;
    let variant = emit_variant(&program, &genome, &gene_map, &verdicts.kind_map(), &plan).map_err(|e| e.to_string())?;
    let file = FileId::new(name);
    let text = variant.text(&file).unwrap();
    if variant.stripped(&file).as_deref() != Some(read_fixture(rel).as_str()) {
        return Err(format!("{rel} {genome}: stripping does not restore the input"));
    }
    let path = golden_path(rel, &genome.to_string());
    if std::env::var_os("UPDATE_GOLDEN").is_some() {
        std::fs::create_dir_all(path.parent().unwrap()).unwrap();
        std::fs::write(&path, text).unwrap();
    }
    let golden = std::fs::read_to_string(&path).map_err(|e| format!("{}: {e}", path.display()))?;
    if golden != text {
        return Err(format!("{rel} {genome}: differs from {}", path.display()));
    }
    Ok(())
}

/// Checks `count` pseudo-random genomes of a fixture (xorshift from `seed`).
pub fn sampled_safety(rel: &str, count: usize, seed: u64) -> Vec<String> {
    let (name, program) = load(rel);
    let verdicts = classify(&program);
    let original = interp::run_sources(&[(&name, &read_fixture(rel))]).expect("original runs");
    let mut x = seed.max(1);
    let mut failures = Vec::new();
    for _ in 0..count {
        let bits: Vec<bool> = (0..verdicts.gene_len())
            .map(|_| {
                x ^= x << 13;
                x ^= x >> 7;
                x ^= x << 17;
                x & 1 == 1
            })
            .collect();
        if let Err(e) = check_genome(&name, &program, &verdicts, &Genome::new(bits), &original) {
            failures.push(e);
        }
    }
    failures
}
