//! Genetic algorithm over blends of two parent genomes.
//!
//! The population starts as convex combinations `a * theta1 + (1 - a) * theta2`
//! with one scalar `a` per individual. Each generation runs tournament
//! selection of `K` parents, blend crossover with one scalar per child,
//! per-coordinate Gaussian mutation, and keeps the elite unchanged. The best
//! individual ever seen is returned.
//!
//! All random draws happen on the calling thread, in a fixed order, from the
//! named streams in [`GaStreams`]. Fitness evaluation may run in parallel
//! without affecting any result.

use std::io::Write;

use rand::seq::index;
use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::genome::{ensure_compatible, Genome};
use crate::nn::pairwise_sum;
use crate::rng::GaStreams;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GaConfig {
    pub population_size: usize,
    pub generations: usize,
    pub parents_per_generation: usize,
    pub mutation_rate: f64,
    pub mutation_sigma: f64,
    pub tournament_size: usize,
    pub elite_count: usize,
    pub seed: u64,
    /// Put exact copies of both parents into the initial population.
    pub seed_endpoints: bool,
    /// Evaluate fitness on the rayon pool. Never changes results.
    pub parallel_fitness: bool,
}

impl Default for GaConfig {
    fn default() -> Self {
        GaConfig {
            population_size: 20,
            generations: 20,
            parents_per_generation: 4,
            mutation_rate: 0.02,
            mutation_sigma: 0.01,
            tournament_size: 3,
            elite_count: 1,
            seed: 0,
            seed_endpoints: true,
            parallel_fitness: true,
        }
    }
}

impl GaConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidConfig(msg));
        let n = self.population_size;
        if self.generations == 0 {
            return bad("generations must be positive".into());
        }
        if self.elite_count == 0 || self.elite_count >= n {
            return bad(format!(
                "elite_count must satisfy 1 <= elite_count < population_size ({} vs {n})",
                self.elite_count
            ));
        }
        let k = self.parents_per_generation;
        if k == 0 || !k.is_multiple_of(2) || k > n {
            return bad(format!(
                "parents_per_generation must be a positive even number <= population_size, got {k}"
            ));
        }
        if self.tournament_size == 0 || self.tournament_size > n {
            return bad(format!(
                "tournament_size must lie in 1..={n}, got {}",
                self.tournament_size
            ));
        }
        if !(0.0..=1.0).contains(&self.mutation_rate) {
            return bad(format!(
                "mutation_rate must lie in [0, 1], got {}",
                self.mutation_rate
            ));
        }
        if !(self.mutation_sigma >= 0.0 && self.mutation_sigma.is_finite()) {
            return bad(format!(
                "mutation_sigma must be >= 0, got {}",
                self.mutation_sigma
            ));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Individual {
    pub id: u64,
    pub genome: Genome,
    pub fitness: Option<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Population {
    members: Vec<Individual>,
    next_id: u64,
    generation: usize,
}

impl Population {
    /// Wraps genomes as unevaluated individuals with ids `0..n`.
    pub fn from_genomes(genomes: impl IntoIterator<Item = Genome>) -> Self {
        let mut pop = Population {
            members: Vec::new(),
            next_id: 0,
            generation: 0,
        };
        for g in genomes {
            pop.push_new(g);
        }
        pop
    }

    fn push_new(&mut self, genome: Genome) {
        self.members.push(Individual {
            id: self.next_id,
            genome,
            fitness: None,
        });
        self.next_id += 1;
    }

    pub fn members(&self) -> &[Individual] {
        &self.members
    }

    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    /// Number of completed generations.
    pub fn generation(&self) -> usize {
        self.generation
    }

    /// Cached fitness values; errors on the first missing one.
    pub fn fitness(&self) -> Result<Vec<f64>> {
        self.members
            .iter()
            .enumerate()
            .map(|(index, ind)| ind.fitness.ok_or(Error::UncachedFitness { index }))
            .collect()
    }

    /// Member indices from best to worst; equal fitness keeps index order.
    pub fn ranked(&self) -> Result<Vec<usize>> {
        let fit = self.fitness()?;
        let mut order: Vec<usize> = (0..fit.len()).collect();
        order.sort_by(|&a, &b| fit[b].total_cmp(&fit[a]).then(a.cmp(&b)));
        Ok(order)
    }

    pub fn best(&self) -> Result<&Individual> {
        let ranked = self.ranked()?;
        let first = ranked.first().ok_or(Error::EmptyDataset)?;
        Ok(&self.members[*first])
    }

    fn record(&self) -> Result<GenerationRecord> {
        let fit = self.fitness()?;
        let best = self.best()?;
        Ok(GenerationRecord {
            generation: self.generation,
            best_fitness: best.fitness.unwrap(),
            mean_fitness: pairwise_sum(&fit) / fit.len() as f64,
            best_individual_id: best.id,
        })
    }
}

/// Scores a genome; higher is better. Must be deterministic.
pub trait FitnessFn: Sync {
    fn fitness(&self, genome: &Genome) -> Result<f64>;
}

impl<F> FitnessFn for F
where
    F: Fn(&Genome) -> Result<f64> + Sync,
{
    fn fitness(&self, genome: &Genome) -> Result<f64> {
        self(genome)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GenerationRecord {
    pub generation: usize,
    pub best_fitness: f64,
    pub mean_fitness: f64,
    pub best_individual_id: u64,
}

/// `b + w * (a - b)` per coordinate, exact at `w = 0`, `w = 1` and where
/// `a == b`, and clamped so the result never leaves `[min(a, b), max(a, b)]`.
pub fn blend(a: &Genome, b: &Genome, w: f64) -> Result<Genome> {
    ensure_compatible(a, b)?;
    if w == 1.0 {
        return Ok(a.clone());
    }
    let mut child = b.clone();
    for (c, &x) in child.values_mut().iter_mut().zip(a.values()) {
        *c = lerp(x, *c, w);
    }
    Ok(child)
}

#[inline]
fn lerp(a: f64, b: f64, w: f64) -> f64 {
    (b + w * (a - b)).clamp(a.min(b), a.max(b))
}

/// Initial population. With `seed_endpoints`, members 0 and 1 are exact
/// copies of `theta1` and `theta2`; every other member draws one
/// `alpha ~ U[0, 1)` from `rng`.
pub fn init_population(
    theta1: &Genome,
    theta2: &Genome,
    cfg: &GaConfig,
    rng: &mut impl Rng,
) -> Result<Population> {
    ensure_compatible(theta1, theta2)?;
    let mut genomes = Vec::with_capacity(cfg.population_size);
    for i in 0..cfg.population_size {
        let g = match (cfg.seed_endpoints, i) {
            (true, 0) => theta1.clone(),
            (true, 1) => theta2.clone(),
            _ => blend(theta1, theta2, rng.random::<f64>())?,
        };
        genomes.push(g);
    }
    Ok(Population::from_genomes(genomes))
}

/// Fills every missing fitness. Cached values are left alone.
pub fn evaluate<F: FitnessFn + ?Sized>(
    population: &mut Population,
    fitness_fn: &F,
    parallel: bool,
) -> Result<Vec<f64>> {
    let pending: Vec<usize> = population
        .members
        .iter()
        .enumerate()
        .filter(|(_, ind)| ind.fitness.is_none())
        .map(|(i, _)| i)
        .collect();

    let score = |&i: &usize| -> Result<f64> {
        let value = fitness_fn
            .fitness(&population.members[i].genome)
            .map_err(|e| Error::Fitness {
                index: i,
                source: Box::new(e),
            })?;
        if !value.is_finite() {
            return Err(Error::NonFiniteFitness { index: i, value });
        }
        Ok(value)
    };

    let scores: Result<Vec<f64>> = if parallel {
        par_map(&pending, score)
    } else {
        pending.iter().map(score).collect()
    };
    for (i, s) in pending.iter().zip(scores?) {
        population.members[*i].fitness = Some(s);
    }
    population.fitness()
}

#[cfg(feature = "parallel")]
fn par_map<F>(items: &[usize], f: F) -> Result<Vec<f64>>
where
    F: Fn(&usize) -> Result<f64> + Sync,
{
    use rayon::prelude::*;
    items.par_iter().map(&f).collect()
}

#[cfg(not(feature = "parallel"))]
fn par_map<F>(items: &[usize], f: F) -> Result<Vec<f64>>
where
    F: Fn(&usize) -> Result<f64> + Sync,
{
    items.iter().map(f).collect()
}

/// `k` independent tournaments. Each samples `t` distinct members and
/// returns the index of the fittest, lower index on ties.
pub fn tournament_select(
    population: &Population,
    t: usize,
    k: usize,
    rng: &mut impl Rng,
) -> Result<Vec<usize>> {
    let fit = population.fitness()?;
    let n = fit.len();
    if t == 0 || t > n {
        return Err(Error::InvalidConfig(format!(
            "tournament_size must lie in 1..={n}, got {t}"
        )));
    }
    let mut winners = Vec::with_capacity(k);
    for _ in 0..k {
        let contenders = index::sample(rng, n, t);
        let mut best = contenders.index(0);
        for c in contenders.iter().skip(1) {
            if fit[c] > fit[best] || (fit[c] == fit[best] && c < best) {
                best = c;
            }
        }
        winners.push(best);
    }
    Ok(winners)
}

/// Child `beta * a + (1 - beta) * b` with a single `beta ~ U[0, 1)`.
pub fn crossover(parent_a: &Genome, parent_b: &Genome, rng: &mut impl Rng) -> Result<Genome> {
    ensure_compatible(parent_a, parent_b)?;
    let beta = rng.random::<f64>();
    blend(parent_a, parent_b, beta)
}

/// Adds `N(0, sigma^2)` noise to each coordinate with probability `rate`.
/// Draws go coordinate by coordinate: a uniform for the coin, then a normal
/// only if the coin hits. No draws at all when `rate == 0` or `sigma == 0`.
///
/// Panics if `rate` is outside `[0, 1]` or `sigma` is negative.
pub fn mutate(mut child: Genome, rate: f64, sigma: f64, rng: &mut impl Rng) -> Genome {
    assert!(
        (0.0..=1.0).contains(&rate),
        "mutation rate {rate} outside [0, 1]"
    );
    assert!(
        sigma >= 0.0 && sigma.is_finite(),
        "mutation sigma {sigma} invalid"
    );
    if rate == 0.0 || sigma == 0.0 {
        return child;
    }
    let noise = Normal::new(0.0, sigma).expect("sigma validated");
    for v in child.values_mut() {
        if rng.random::<f64>() < rate {
            *v += noise.sample(rng);
        }
    }
    child
}

/// One generation: selection, `N - elite_count` offspring from random
/// parent pairs, elites carried over with their cached fitness.
///
/// Draw order: all `K` tournaments on the selection stream; then per child,
/// the parent pair and `beta` on the crossover stream and its mutations on
/// the mutation stream.
pub fn step_generation<F: FitnessFn + ?Sized>(
    population: Population,
    cfg: &GaConfig,
    fitness_fn: &F,
    streams: &mut GaStreams,
) -> Result<(Population, GenerationRecord)> {
    let mut population = population;
    if population.len() != cfg.population_size {
        return Err(Error::InvalidConfig(format!(
            "population has {} members, config says {}",
            population.len(),
            cfg.population_size
        )));
    }
    evaluate(&mut population, fitness_fn, cfg.parallel_fitness)?;

    let ranked = population.ranked()?;
    let parents = tournament_select(
        &population,
        cfg.tournament_size,
        cfg.parents_per_generation,
        &mut streams.selection,
    )?;

    let mut next = Population {
        members: ranked[..cfg.elite_count]
            .iter()
            .map(|&i| population.members[i].clone())
            .collect(),
        next_id: population.next_id,
        generation: population.generation + 1,
    };
    for _ in cfg.elite_count..cfg.population_size {
        let pair = index::sample(&mut streams.crossover, parents.len(), 2);
        let a = &population.members[parents[pair.index(0)]].genome;
        let b = &population.members[parents[pair.index(1)]].genome;
        let child = crossover(a, b, &mut streams.crossover)?;
        let child = mutate(
            child,
            cfg.mutation_rate,
            cfg.mutation_sigma,
            &mut streams.mutation,
        );
        next.push_new(child);
    }
    evaluate(&mut next, fitness_fn, cfg.parallel_fitness)?;
    let record = next.record()?;
    Ok((next, record))
}

#[derive(Clone, Debug, PartialEq)]
pub struct MegaOutcome {
    /// Fittest individual seen in any generation, including the initial one.
    pub best: Individual,
    pub history: Vec<GenerationRecord>,
    pub final_population: Population,
}

impl MegaOutcome {
    pub fn best_fitness(&self) -> f64 {
        self.best.fitness.expect("best is always evaluated")
    }
}

/// Full run from two compatible parents. Deterministic in `cfg.seed`.
pub fn run_mega<F: FitnessFn + ?Sized>(
    theta1: &Genome,
    theta2: &Genome,
    cfg: &GaConfig,
    fitness_fn: &F,
) -> Result<MegaOutcome> {
    cfg.validate()?;
    ensure_compatible(theta1, theta2)?;
    let mut streams = GaStreams::from_seed(cfg.seed);
    let mut population = init_population(theta1, theta2, cfg, &mut streams.init)?;
    evaluate(&mut population, fitness_fn, cfg.parallel_fitness)?;
    let mut best = population.best()?.clone();
    let mut history = Vec::with_capacity(cfg.generations);

    for _ in 0..cfg.generations {
        let (next, record) = step_generation(population, cfg, fitness_fn, &mut streams)?;
        let candidate = next.best()?;
        if candidate.fitness > best.fitness {
            best = candidate.clone();
        }
        history.push(record);
        population = next;
    }
    Ok(MegaOutcome {
        best,
        history,
        final_population: population,
    })
}

pub const HISTORY_CSV_HEADER: &str = "generation,best_fitness,mean_fitness";

/// One row per generation under [`HISTORY_CSV_HEADER`].
pub fn write_history_csv(history: &[GenerationRecord], mut out: impl Write) -> std::io::Result<()> {
    writeln!(out, "{HISTORY_CSV_HEADER}")?;
    for r in history {
        writeln!(
            out,
            "{},{},{}",
            r.generation, r.best_fitness, r.mean_fitness
        )?;
    }
    Ok(())
}
