//! Genetic search over offload patterns.
//!
//! One seeded [`ChaCha8Rng`] drives the whole run. Call order per run:
//!
//! 1. initialization: `M × gene_len` draws of `gen::<bool>()`, genome by
//!    genome, bit 0 first;
//! 2. per generation after evaluation, until `M` individuals exist:
//!    two roulette draws (`gen::<f64>()` each), one crossover draw
//!    (`gen::<f64>()`), a cut draw (`gen_range(1..len)`) only when crossing,
//!    then one `gen::<f64>()` per bit of the first child followed by the
//!    second child. When a single slot remains it takes one roulette draw
//!    and is filled by a plain copy.
//!
//! Evaluation itself consumes no randomness.

use std::cmp::Ordering;
use std::collections::HashMap;
use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

use crate::eval::{EnvironmentError, Evaluator, MeasuredTime};

/// Bit vector over eligible loops; bit `i` drives the `i`-th eligible loop.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Genome {
    bits: Vec<bool>,
}

impl Genome {
    pub fn new(bits: Vec<bool>) -> Self {
        Genome { bits }
    }

    pub fn zeros(len: usize) -> Self {
        Genome { bits: vec![false; len] }
    }

    pub fn ones(len: usize) -> Self {
        Genome { bits: vec![true; len] }
    }

    /// Genome whose string form is the `len`-digit binary numeral of `value`.
    pub fn from_index(value: u64, len: usize) -> Self {
        Genome {
            bits: (0..len).map(|i| value >> (len - 1 - i) & 1 == 1).collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.bits.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bits.is_empty()
    }

    pub fn get(&self, i: usize) -> bool {
        self.bits[i]
    }

    pub fn set(&mut self, i: usize, value: bool) {
        self.bits[i] = value;
    }

    pub fn iter(&self) -> impl Iterator<Item = bool> + '_ {
        self.bits.iter().copied()
    }

    pub fn bits(&self) -> &[bool] {
        &self.bits
    }

    pub fn popcount(&self) -> usize {
        self.bits.iter().filter(|b| **b).count()
    }

    pub fn complement(&self) -> Genome {
        Genome {
            bits: self.bits.iter().map(|b| !b).collect(),
        }
    }
}

impl fmt::Display for Genome {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for b in &self.bits {
            f.write_str(if *b { "1" } else { "0" })?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("genome strings contain only '0' and '1'")]
pub struct GenomeParseError;

impl FromStr for Genome {
    type Err = GenomeParseError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        s.chars()
            .map(|c| match c {
                '0' => Ok(false),
                '1' => Ok(true),
                _ => Err(GenomeParseError),
            })
            .collect::<Result<Vec<_>, _>>()
            .map(Genome::new)
    }
}

impl Serialize for Genome {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for Genome {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let text = String::deserialize(d)?;
        text.parse().map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GAConfig {
    pub population: usize,
    pub generations: usize,
    pub crossover_rate: f64,
    pub mutation_rate: f64,
    pub timeout_s: f64,
    pub penalty_time_s: f64,
    pub rng_seed: u64,
    pub elitism_count: usize,
}

impl Default for GAConfig {
    fn default() -> Self {
        GAConfig {
            population: 10,
            generations: 10,
            crossover_rate: 0.9,
            mutation_rate: 0.05,
            timeout_s: 180.0,
            penalty_time_s: 1000.0,
            rng_seed: 0,
            elitism_count: 1,
        }
    }
}

impl GAConfig {
    pub fn validate(&self) -> Result<(), GaError> {
        let bad = |m: &str| Err(GaError::InvalidConfig(m.to_string()));
        if self.population == 0 {
            return bad("population must be positive");
        }
        if self.generations == 0 {
            return bad("generations must be positive");
        }
        if !(0.0..=1.0).contains(&self.crossover_rate) {
            return bad("crossover_rate must lie in [0, 1]");
        }
        if !(0.0..=1.0).contains(&self.mutation_rate) {
            return bad("mutation_rate must lie in [0, 1]");
        }
        if !(self.timeout_s > 0.0) || !(self.penalty_time_s > 0.0) {
            return bad("timeout_s and penalty_time_s must be positive");
        }
        if self.elitism_count > self.population {
            return bad("elitism_count exceeds population");
        }
        Ok(())
    }
}

#[derive(Debug, Error)]
pub enum GaError {
    #[error("no offloadable loops")]
    ZeroGeneLength,
    #[error("fitness is undefined for time {0}")]
    Domain(f64),
    #[error("genome lengths differ: {0} vs {1}")]
    LengthMismatch(usize, usize),
    #[error("invalid GA configuration: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Environment(#[from] EnvironmentError),
}

/// `t^(-1/2)`.
pub fn fitness(time_s: f64) -> Result<f64, GaError> {
    if time_s > 0.0 && time_s.is_finite() {
        Ok(1.0 / time_s.sqrt())
    } else {
        Err(GaError::Domain(time_s))
    }
}

pub fn init_population(gene_len: usize, size: usize, rng: &mut impl Rng) -> Result<Vec<Genome>, GaError> {
    if gene_len == 0 {
        return Err(GaError::ZeroGeneLength);
    }
    Ok((0..size)
        .map(|_| Genome::new((0..gene_len).map(|_| rng.gen::<bool>()).collect()))
        .collect())
}

/// Index drawn with probability proportional to `fitness[i]`.
pub fn select_roulette(fitness: &[f64], rng: &mut impl Rng) -> usize {
    let total: f64 = fitness.iter().sum();
    let mut x = rng.gen::<f64>() * total;
    for (i, f) in fitness.iter().enumerate() {
        if x < *f {
            return i;
        }
        x -= f;
    }
    fitness.len() - 1
}

pub fn crossover(a: &Genome, b: &Genome, pc: f64, rng: &mut impl Rng) -> Result<(Genome, Genome), GaError> {
    if a.len() != b.len() {
        return Err(GaError::LengthMismatch(a.len(), b.len()));
    }
    let crossing = rng.gen::<f64>() < pc;
    if !crossing || a.len() < 2 {
        return Ok((a.clone(), b.clone()));
    }
    let cut = rng.gen_range(1..a.len());
    Ok((crossover_at(a, b, cut), crossover_at(b, a, cut)))
}

/// First `cut` bits of `a`, the rest from `b`.
pub fn crossover_at(a: &Genome, b: &Genome, cut: usize) -> Genome {
    Genome::new(a.bits[..cut].iter().chain(&b.bits[cut..]).copied().collect())
}

pub fn mutate(genome: &Genome, pm: f64, rng: &mut impl Rng) -> Genome {
    Genome::new(genome.bits.iter().map(|b| if rng.gen::<f64>() < pm { !b } else { *b }).collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EvalSource {
    Fresh,
    Cache,
    Penalty,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Individual {
    pub genome: Genome,
    /// Seconds, with timeouts already replaced by the penalty time.
    pub measured_time_s: f64,
    pub fitness: f64,
    pub eval_source: EvalSource,
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub timed_out: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub diagnostic: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerationRecord {
    pub generation: usize,
    pub individuals: Vec<Individual>,
    pub best_genome: Genome,
    pub best_time_s: f64,
}

#[derive(Debug, Clone)]
struct CachedResult {
    time_s: f64,
    penalty: bool,
    timed_out: bool,
    diagnostic: Option<String>,
}

/// Measurements by genome; one evaluator call per distinct genome.
#[derive(Debug, Default)]
pub struct EvalCache {
    entries: HashMap<Genome, CachedResult>,
    invocations: usize,
}

impl EvalCache {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Evaluator calls made through this cache.
    pub fn invocations(&self) -> usize {
        self.invocations
    }

    pub fn contains(&self, genome: &Genome) -> bool {
        self.entries.contains_key(genome)
    }

    fn store(&mut self, genome: Genome, measured: MeasuredTime, config: &GAConfig) {
        let result = match measured {
            MeasuredTime::Seconds(t) if t > 0.0 && t <= config.timeout_s => CachedResult {
                time_s: t,
                penalty: false,
                timed_out: false,
                diagnostic: None,
            },
            MeasuredTime::Seconds(t) if t > config.timeout_s => CachedResult {
                time_s: config.penalty_time_s,
                penalty: false,
                timed_out: true,
                diagnostic: None,
            },
            MeasuredTime::Seconds(t) => CachedResult {
                time_s: config.penalty_time_s,
                penalty: true,
                timed_out: false,
                diagnostic: Some(format!("non-positive time {t}")),
            },
            MeasuredTime::Timeout => CachedResult {
                time_s: config.penalty_time_s,
                penalty: false,
                timed_out: true,
                diagnostic: None,
            },
            MeasuredTime::Failure(d) => CachedResult {
                time_s: config.penalty_time_s,
                penalty: true,
                timed_out: false,
                diagnostic: Some(d),
            },
        };
        self.entries.insert(genome, result);
    }

    fn individual(&self, genome: &Genome, fresh: bool) -> Individual {
        let r = &self.entries[genome];
        Individual {
            genome: genome.clone(),
            measured_time_s: r.time_s,
            fitness: 1.0 / r.time_s.sqrt(),
            eval_source: if r.penalty {
                EvalSource::Penalty
            } else if fresh {
                EvalSource::Fresh
            } else {
                EvalSource::Cache
            },
            timed_out: r.timed_out,
            diagnostic: r.diagnostic.clone(),
        }
    }
}

/// Evaluates one genome, consulting and filling `cache`.
pub fn evaluate_with_cache(
    genome: &Genome,
    evaluator: &dyn Evaluator,
    cache: &mut EvalCache,
    config: &GAConfig,
) -> Result<Individual, GaError> {
    let fresh = !cache.contains(genome);
    if fresh {
        let measured = evaluator.measure(genome)?;
        cache.invocations += 1;
        cache.store(genome.clone(), measured, config);
    }
    Ok(cache.individual(genome, fresh))
}

/// Evaluates a population; uncached genomes are measured concurrently up
/// to the evaluator's capacity and committed in population order.
pub fn evaluate_population(
    population: &[Genome],
    evaluator: &dyn Evaluator,
    cache: &mut EvalCache,
    config: &GAConfig,
) -> Result<Vec<Individual>, GaError> {
    let mut pending: Vec<&Genome> = Vec::new();
    for g in population {
        if !cache.contains(g) && !pending.contains(&g) {
            pending.push(g);
        }
    }
    let capacity = evaluator.capability().max_concurrency.max(1);
    for chunk in pending.chunks(capacity) {
        let results: Vec<Result<MeasuredTime, EnvironmentError>> = if chunk.len() == 1 {
            vec![evaluator.measure(chunk[0])]
        } else {
            std::thread::scope(|s| {
                let handles: Vec<_> = chunk.iter().map(|g| s.spawn(move || evaluator.measure(g))).collect();
                handles.into_iter().map(|h| h.join().expect("evaluator panicked")).collect()
            })
        };
        for (g, r) in chunk.iter().zip(results) {
            cache.invocations += 1;
            cache.store((*g).clone(), r?, config);
        }
    }
    let mut seen = std::collections::HashSet::new();
    Ok(population
        .iter()
        .map(|g| {
            let fresh = pending.contains(&g) && seen.insert(g.clone());
            cache.individual(g, fresh)
        })
        .collect())
}

/// Lower time wins; equal times go to the lower genome value.
pub fn better(a: &Individual, b: &Individual) -> Ordering {
    a.measured_time_s
        .total_cmp(&b.measured_time_s)
        .then_with(|| a.genome.cmp(&b.genome))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GaOutcome {
    /// Best individual over all generations.
    pub best: Individual,
    pub records: Vec<GenerationRecord>,
    pub evaluations: usize,
}

impl GaOutcome {
    /// One JSON object per generation, newline-terminated.
    pub fn records_jsonl(&self) -> String {
        let mut out = String::new();
        for r in &self.records {
            out.push_str(&serde_json::to_string(r).expect("records serialize"));
            out.push('\n');
        }
        out
    }
}

pub fn run_ga(config: &GAConfig, gene_len: usize, evaluator: &dyn Evaluator) -> Result<GaOutcome, GaError> {
    let mut cache = EvalCache::new();
    run_ga_with_cache(config, gene_len, evaluator, &mut cache)
}

pub fn run_ga_with_cache(
    config: &GAConfig,
    gene_len: usize,
    evaluator: &dyn Evaluator,
    cache: &mut EvalCache,
) -> Result<GaOutcome, GaError> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.rng_seed);
    let mut population = init_population(gene_len, config.population, &mut rng)?;
    let mut best: Option<Individual> = None;
    let mut records = Vec::with_capacity(config.generations);
    for generation in 0..config.generations {
        let individuals = evaluate_population(&population, evaluator, cache, config)?;
        let gen_best = individuals.iter().min_by(|a, b| better(a, b)).expect("population is non-empty");
        if best.as_ref().map_or(true, |b| gen_best.measured_time_s < b.measured_time_s) {
            best = Some(gen_best.clone());
        }
        let b = best.as_ref().unwrap();
        log::debug!("generation {generation}: best {} {:.6} s", b.genome, b.measured_time_s);
        records.push(GenerationRecord {
            generation,
            individuals: individuals.clone(),
            best_genome: b.genome.clone(),
            best_time_s: b.measured_time_s,
        });
        if generation + 1 == config.generations {
            break;
        }
        population = next_generation(&individuals, config, &mut rng)?;
    }
    Ok(GaOutcome {
        best: best.unwrap(),
        records,
        evaluations: cache.invocations(),
    })
}

fn next_generation(individuals: &[Individual], config: &GAConfig, rng: &mut ChaCha8Rng) -> Result<Vec<Genome>, GaError> {
    let mut ranked: Vec<&Individual> = individuals.iter().collect();
    ranked.sort_by(|a, b| better(a, b));
    let mut next: Vec<Genome> = ranked
        .iter()
        .take(config.elitism_count)
        .map(|i| i.genome.clone())
        .collect();
    let fitness: Vec<f64> = individuals.iter().map(|i| i.fitness).collect();
    while next.len() < config.population {
        if config.population - next.len() == 1 {
            let i = select_roulette(&fitness, rng);
            next.push(individuals[i].genome.clone());
            break;
        }
        let a = &individuals[select_roulette(&fitness, rng)].genome;
        let b = &individuals[select_roulette(&fitness, rng)].genome;
        let (c1, c2) = crossover(a, b, config.crossover_rate, rng)?;
        next.push(mutate(&c1, config.mutation_rate, rng));
        next.push(mutate(&c2, config.mutation_rate, rng));
    }
    Ok(next)
}
