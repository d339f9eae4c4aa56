//! End-to-end acceptance checks. Prints one PASS/FAIL line per criterion and
//! exits non-zero when any criterion fails.

mod common;

use std::collections::HashMap;
use std::sync::Mutex;
use std::time::Instant;

use offload_tuner::classify::{DirectiveKind, VerdictStatus};
use offload_tuner::eval::{
    brute_force_optimum, evaluate_costmodel, Capability, CostModel, CostModelEvaluator, EnvironmentError, Evaluator,
    LoopCost, MeasuredTime, VarCost,
};
use offload_tuner::ga::{evaluate_with_cache, fitness, mutate, run_ga, EvalCache, GAConfig, Genome};
use offload_tuner::model::{LoopId, LoopShape, Program, VarKey};
use offload_tuner::pipeline::{run_pipeline, ToolConfig};
use offload_tuner::transfer::{Planner, TransferDirection};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// GA best must be within this fraction of the exhaustive optimum.
const ORACLE_GAP: f64 = 0.05;
const ORACLE_SEEDS: u64 = 10;
const ORACLE_MIN_HITS: usize = 9;
const ORACLE_BUDGET_S: f64 = 60.0;
const FT_MIN_RATIO: f64 = 5.0;
const FT_BASELINE_S: f64 = 31.3;
const FT_REACHABLE_S: f64 = 5.8;
const CALIBRATION_TOL: f64 = 1e-9;
const FITNESS_TOL: f64 = 1e-12;
const ELITISM_SEEDS: u64 = 100;
const CACHE_RUNS: u64 = 50;
const BATCH_TOL: f64 = 1e-12;
const FLIP_BITS: usize = 100_000;
const FLIP_RATE: f64 = 0.05;
const FLIP_BOUNDS: (f64, f64) = (0.045, 0.055);

type Outcome = Result<String, String>;

fn main() {
    let criteria: [(&str, fn() -> Outcome); 10] = [
        ("ga-vs-oracle", ga_vs_oracle),
        ("calibrated-ratio", calibrated_ratio),
        ("fitness-law", fitness_law),
        ("elitism-monotonicity", elitism_monotonicity),
        ("cache-soundness", cache_soundness),
        ("planner-safety", planner_safety),
        ("batching-profit", batching_profit),
        ("emitter-goldens", emitter_goldens),
        ("classification-table", classification_table),
        ("mutation-rate", mutation_rate),
    ];
    let mut failed = 0;
    for (i, (name, check)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let result = std::panic::catch_unwind(check).unwrap_or_else(|p| {
            Err(p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_else(|| "panicked".into()))
        });
        let secs = start.elapsed().as_secs_f64();
        match result {
            Ok(detail) => println!("PASS {:>2} {name}: {detail} [{secs:.1}s]", i + 1),
            Err(detail) => {
                failed += 1;
                println!("FAIL {:>2} {name}: {detail} [{secs:.1}s]", i + 1);
            }
        }
    }
    println!("acceptance: {} passed, {failed} failed", criteria.len() - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}

fn cost_model(rel: &str) -> CostModel {
    CostModel::from_json(&common::read_fixture(rel)).expect("cost model fixture")
}

fn costmodel_evaluator<'p>(program: &'p Program, model: CostModel) -> CostModelEvaluator<'p> {
    let gene_map = common::classify(program).gene_map();
    CostModelEvaluator::new(program, gene_map, model).expect("model covers the program")
}

fn ga_vs_oracle() -> Outcome {
    let start = Instant::now();
    let (_, program) = common::load("costmodel/himeno.c");
    let evaluator = costmodel_evaluator(&program, cost_model("costmodel/himeno.json"));
    let len = evaluator.planner().gene_len();
    if len != 13 {
        return Err(format!("fixture has {len} genes, expected 13"));
    }
    let (opt_genome, opt) = brute_force_optimum(&evaluator).map_err(|e| e.to_string())?;
    let mut hits = 0;
    let mut worst = 0.0f64;
    for seed in 0..ORACLE_SEEDS {
        let config = GAConfig {
            population: 10,
            generations: 10,
            crossover_rate: 0.9,
            mutation_rate: 0.05,
            rng_seed: seed,
            ..GAConfig::default()
        };
        let out = run_ga(&config, len, &evaluator).map_err(|e| e.to_string())?;
        let t = out.best.measured_time_s;
        if t < opt {
            return Err(format!("seed {seed}: GA time {t} beats the exhaustive optimum {opt}"));
        }
        let gap = t / opt - 1.0;
        worst = worst.max(gap);
        if gap <= ORACLE_GAP {
            hits += 1;
        }
    }
    let secs = start.elapsed().as_secs_f64();
    let detail = format!(
        "{hits}/{ORACLE_SEEDS} seeds within {:.0}% of optimum {opt:.4}s ({opt_genome}), worst gap {:.2}%, {secs:.1}s",
        ORACLE_GAP * 100.0,
        worst * 100.0
    );
    if hits >= ORACLE_MIN_HITS && secs < ORACLE_BUDGET_S {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn calibrated_ratio() -> Outcome {
    let (_, program) = common::load("costmodel/ft.c");
    let model = cost_model("costmodel/ft.json");
    let verdicts = common::classify(&program);
    let gene_map = verdicts.gene_map();
    if (program.loops.iter().count(), gene_map.len()) != (82, 65) {
        return Err(format!("fixture has {} loops, {} eligible", program.loops.iter().count(), gene_map.len()));
    }
    let evaluator = CostModelEvaluator::new(&program, gene_map.clone(), model.clone()).map_err(|e| e.to_string())?;
    let baseline = evaluator.time(&Genome::zeros(65)).map_err(|e| e.to_string())?;
    // Per-loop cheaper side; the calibration targets this genome.
    let reachable = Genome::new(gene_map.iter().map(|id| model.loops[&id.0].gpu_s < model.loops[&id.0].cpu_s).collect());
    let reachable_t = evaluator.time(&reachable).map_err(|e| e.to_string())?;
    if (baseline - FT_BASELINE_S).abs() > CALIBRATION_TOL || (reachable_t - FT_REACHABLE_S).abs() > CALIBRATION_TOL {
        return Err(format!("calibration drifted: baseline {baseline}, reachable {reachable_t}"));
    }
    let config = format!(
        r#"{{"inputs": ["{}"], "evaluator": {{"kind": "costmodel", "model": "{}"}}, "ga": {{"population": 30, "generations": 20}}}}"#,
        common::fixture("costmodel/ft.c").display(),
        common::fixture("costmodel/ft.json").display()
    );
    let config = ToolConfig::from_json(&config).map_err(|e| e.to_string())?;
    let report = run_pipeline(&config).map_err(|e| e.to_string())?;
    let detail = format!(
        "improvement {:.3}x (baseline {:.3}s, best {:.4}s, reachable {FT_REACHABLE_S}s, {} evaluations)",
        report.improvement_ratio, report.baseline_time_s, report.best_time_s, report.evaluations
    );
    if report.improvement_ratio >= FT_MIN_RATIO {
        Ok(detail)
    } else {
        Err(detail)
    }
}

struct Fixed(MeasuredTime);

impl Evaluator for Fixed {
    fn capability(&self) -> Capability {
        Capability {
            max_concurrency: 1,
            deterministic: true,
        }
    }

    fn measure(&self, _: &Genome) -> Result<MeasuredTime, EnvironmentError> {
        Ok(self.0.clone())
    }
}

fn fitness_law() -> Outcome {
    let mut worst = 0.0f64;
    for t in [0.001, 1.0, 31.3, 1000.0] {
        let f = fitness(t).map_err(|e| e.to_string())?;
        worst = worst.max((f - t.powf(-0.5)).abs());
    }
    if worst > FITNESS_TOL {
        return Err(format!("max deviation {worst:e}"));
    }
    let config = GAConfig::default();
    let genome = Genome::zeros(4);
    let timed = evaluate_with_cache(&genome, &Fixed(MeasuredTime::Timeout), &mut EvalCache::new(), &config)
        .map_err(|e| e.to_string())?;
    let expected = fitness(1000.0).unwrap();
    if timed.fitness != expected || timed.measured_time_s != 1000.0 || !timed.timed_out {
        return Err(format!("timeout maps to fitness {} at {}s", timed.fitness, timed.measured_time_s));
    }
    Ok(format!("max deviation {worst:.1e}, timeout fitness {expected}"))
}

/// Cost model over `program` with random loop and transfer costs.
fn random_model(program: &Program, rng: &mut ChaCha8Rng) -> CostModel {
    let gene_map = common::classify(program).gene_map();
    let loops = gene_map
        .iter()
        .map(|id| {
            (
                id.0,
                LoopCost {
                    cpu_s: rng.gen_range(0.0..2.0),
                    gpu_s: rng.gen_range(0.0..2.0),
                },
            )
        })
        .collect();
    let vars = program
        .refs
        .iter()
        .map(|r| (r.key.as_str().to_string(), VarCost { bytes: rng.gen_range(0.0..4e8) }))
        .collect();
    CostModel {
        overhead_s: rng.gen_range(0.0..1.0),
        loops,
        vars,
        bandwidth_bytes_per_s: 8e9,
        latency_s: 1e-5,
    }
}

fn elitism_monotonicity() -> Outcome {
    let (_, program) = common::load("costmodel/himeno.c");
    let mut violations = 0;
    let mut generations = 0;
    for seed in 0..ELITISM_SEEDS {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let evaluator = costmodel_evaluator(&program, random_model(&program, &mut rng));
        let config = GAConfig {
            population: 8,
            generations: 8,
            rng_seed: seed,
            ..GAConfig::default()
        };
        let out = run_ga(&config, evaluator.planner().gene_len(), &evaluator).map_err(|e| e.to_string())?;
        generations += out.records.len();
        violations += out.records.windows(2).filter(|w| w[1].best_time_s > w[0].best_time_s).count();
    }
    let detail = format!("{violations} violations over {ELITISM_SEEDS} seeds, {generations} generations");
    if violations == 0 {
        Ok(detail)
    } else {
        Err(detail)
    }
}

struct Counting<'a> {
    inner: &'a dyn Evaluator,
    calls: Mutex<HashMap<Genome, usize>>,
}

impl Evaluator for Counting<'_> {
    fn capability(&self) -> Capability {
        self.inner.capability()
    }

    fn measure(&self, genome: &Genome) -> Result<MeasuredTime, EnvironmentError> {
        *self.calls.lock().unwrap().entry(genome.clone()).or_default() += 1;
        self.inner.measure(genome)
    }
}

fn cache_soundness() -> Outcome {
    let (_, program) = common::load("safety/locals.c");
    let mut repeated = 0;
    let mut calls = 0;
    let mut slots = 0;
    for run in 0..CACHE_RUNS {
        let mut rng = ChaCha8Rng::seed_from_u64(1000 + run);
        let evaluator = costmodel_evaluator(&program, random_model(&program, &mut rng));
        let counting = Counting {
            inner: &evaluator,
            calls: Mutex::new(HashMap::new()),
        };
        let config = GAConfig {
            population: 10,
            generations: 10,
            rng_seed: run,
            ..GAConfig::default()
        };
        let out = run_ga(&config, evaluator.planner().gene_len(), &counting).map_err(|e| e.to_string())?;
        let counts = counting.calls.into_inner().unwrap();
        repeated += counts.values().filter(|&&c| c > 1).count();
        let total: usize = counts.values().sum();
        if total != out.evaluations {
            return Err(format!("run {run}: {total} evaluator calls but {} reported", out.evaluations));
        }
        calls += total;
        slots += out.records.iter().map(|r| r.individuals.len()).sum::<usize>();
    }
    let detail = format!("{repeated} repeated genomes; {calls} evaluator calls for {slots} individuals over {CACHE_RUNS} runs");
    if repeated == 0 {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn planner_safety() -> Outcome {
    let mut total = 0;
    let mut problems = Vec::new();
    for f in common::SAFETY_FIXTURES {
        let (runs, failures) = common::exhaustive_safety(&format!("safety/{f}"));
        total += runs;
        if let Some(first) = failures.first() {
            problems.push(format!("{f}: {} of {runs} differ; first: {}", failures.len(), first.lines().next().unwrap_or("")));
        }
    }
    if problems.is_empty() {
        Ok(format!(
            "{total} genomes over {} fixtures match the unannotated runs (float tol {:e})",
            common::SAFETY_FIXTURES.len(),
            common::FLOAT_TOL
        ))
    } else {
        Err(problems.join("; "))
    }
}

fn batching_profit() -> Outcome {
    let (_, program) = common::load("costmodel/batch3.c");
    let model = cost_model("costmodel/batch3.json");
    let gene_map = common::classify(&program).gene_map();
    let planner = Planner::new(&program, gene_map.clone());
    let genome = Genome::ones(gene_map.len());
    let per_site = planner.plan_transfers(&genome).map_err(|e| e.to_string())?;
    let regions = planner.regions(&genome).map_err(|e| e.to_string())?;
    let batched = planner.hoist_and_batch(&per_site, &regions);
    let a = VarKey::global("a");
    let copy_ins = |plan: &offload_tuner::transfer::TransferPlan| {
        plan.entries
            .iter()
            .filter(|e| e.var == a && e.direction == TransferDirection::CopyIn)
            .count()
    };
    let (before, after) = (copy_ins(&per_site), copy_ins(&batched));
    let t_before = evaluate_costmodel(&genome, &gene_map, &per_site, &model).map_err(|e| e.to_string())?;
    let t_after = evaluate_costmodel(&genome, &gene_map, &batched, &model).map_err(|e| e.to_string())?;
    let per_event = model.event_cost("a").map_err(|e| e.to_string())?;
    let drop = t_before - t_after;
    let detail = format!(
        "CopyIn events {before} -> {after}, time drop {drop:.9}s vs 2 x {per_event:.9}s"
    );
    if before == 3 && after == 1 && (drop - 2.0 * per_event).abs() <= BATCH_TOL * t_before.max(1.0) {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn emitter_goldens() -> Outcome {
    let errors: Vec<String> = common::GOLDEN_PAIRS
        .iter()
        .filter_map(|(rel, genome)| common::check_golden(rel, genome).err())
        .collect();
    if errors.is_empty() {
        Ok(format!("{} pairs byte-identical, stripping restores every input", common::GOLDEN_PAIRS.len()))
    } else {
        Err(errors.join("; "))
    }
}

enum Expected {
    Kind(DirectiveKind),
    Rejected(&'static str),
}

fn classification_table() -> Outcome {
    use DirectiveKind::*;
    use Expected::*;
    use LoopShape::*;
    let table: [(LoopShape, Expected); 12] = [
        (SingleLoop, Kind(Kernels)),
        (TightlyNestedOuter, Kind(Kernels)),
        (TightlyNestedInner, Kind(ParallelLoop)),
        (NonTightlyNested, Kind(ParallelLoop)),
        (SingleLoop, Kind(Kernels)),
        (SingleLoop, Kind(ParallelLoopVector)),
        (SingleLoop, Rejected("loop-carried dependence")),
        (SingleLoop, Rejected("call to")),
        (SingleLoop, Rejected("break statement")),
        (TightlyNestedOuter, Rejected("loop-carried dependence")),
        (TightlyNestedInner, Kind(ParallelLoop)),
        (SingleLoop, Kind(Kernels)),
    ];
    let (_, program) = common::load("classify/corpus.c");
    let verdicts = common::classify(&program);
    if verdicts.verdicts.len() != table.len() {
        return Err(format!("{} loops, table has {}", verdicts.verdicts.len(), table.len()));
    }
    let mut mismatches = Vec::new();
    for (i, (shape, expected)) in table.iter().enumerate() {
        let id = LoopId(i as u32);
        let actual_shape = program.loops.get(id).unwrap().shape;
        let status = &verdicts.verdicts[i].status;
        let ok = actual_shape == *shape
            && match (expected, status) {
                (Kind(k), VerdictStatus::Eligible(a)) => k == a,
                (Rejected(cause), VerdictStatus::Ineligible(reason)) => reason.contains(cause),
                _ => false,
            };
        if !ok {
            mismatches.push(format!("loop {i}: {actual_shape:?} {status:?}"));
        }
    }
    if mismatches.is_empty() {
        Ok(format!("{} verdicts match", table.len()))
    } else {
        Err(mismatches.join("; "))
    }
}

fn mutation_rate() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let genome = Genome::zeros(100);
    let mut flips = 0;
    for _ in 0..FLIP_BITS / genome.len() {
        flips += mutate(&genome, FLIP_RATE, &mut rng).popcount();
    }
    let rate = flips as f64 / FLIP_BITS as f64;
    let detail = format!("{flips} flips over {FLIP_BITS} bits, rate {rate:.5}");
    if (FLIP_BOUNDS.0..=FLIP_BOUNDS.1).contains(&rate) {
        Ok(detail)
    } else {
        Err(detail)
    }
}
