//! Genetic optimization of the hormone parameter set: elite selection plus
//! mutation, crossover, and fresh random candidates.

use rand::Rng as _;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;

use crate::engine;
use crate::error::{Error, Result};
use crate::hormone::ParameterSet;
use crate::rng;
use crate::scenario::Scenario;

/// Gene layout: eta0, eta, alpha, epsilon, m, c, t, maxhops.
pub const GENE_COUNT: usize = 8;

/// Per-gene [lo, hi] bounds. They bracket the shipped defaults with
/// headroom; maxhops is evolved as a real and rounded on decode.
pub const GENE_BOUNDS: [(f64, f64); GENE_COUNT] = [
    (0.0, 10.0), // eta0
    (0.0, 10.0), // eta
    (0.0, 1.0),  // alpha
    (0.0, 1.0),  // epsilon
    (0.0, 1.0),  // m
    (0.3, 0.9),  // c
    (0.0, 1.0),  // t
    (2.0, 20.0), // maxhops
];

pub const GENE_NAMES: [&str; GENE_COUNT] = ["eta0", "eta", "alpha", "epsilon", "m", "c", "t", "maxhops"];

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Genome {
    pub genes: [f64; GENE_COUNT],
}

impl Genome {
    pub fn random(rng: &mut rng::Rng) -> Self {
        let mut genes = [0.0; GENE_COUNT];
        for (g, &(lo, hi)) in genes.iter_mut().zip(&GENE_BOUNDS) {
            *g = rng.random_range(lo..=hi);
        }
        Genome { genes }
    }

    pub fn from_params(p: &ParameterSet) -> Self {
        Genome {
            genes: [p.eta0, p.eta, p.alpha, p.epsilon, p.m, p.c, p.t, p.maxhops as f64],
        }
    }

    pub fn decode(&self) -> ParameterSet {
        ParameterSet {
            eta0: self.genes[0],
            eta: self.genes[1],
            alpha: self.genes[2],
            epsilon: self.genes[3],
            m: self.genes[4],
            c: self.genes[5],
            t: self.genes[6],
            maxhops: self.genes[7].round().max(1.0) as u32,
        }
    }

    pub fn within_bounds(&self) -> bool {
        self.genes.iter().zip(&GENE_BOUNDS).all(|(&g, &(lo, hi))| g >= lo && g <= hi)
    }

    fn clamp(&mut self) {
        for (g, &(lo, hi)) in self.genes.iter_mut().zip(&GENE_BOUNDS) {
            *g = g.clamp(lo, hi);
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct GaConfig {
    pub population_size: usize,
    pub elite_count: usize,
    pub mutant_count: usize,
    pub crossover_count: usize,
    pub fresh_count: usize,
    pub generations: usize,
    /// Gaussian mutation spread as a fraction of each gene's range.
    pub mutation_sigma: f64,
    /// Independent simulation runs averaged per fitness evaluation.
    pub seeds_per_eval: usize,
}

impl Default for GaConfig {
    fn default() -> Self {
        GaConfig {
            population_size: 20,
            elite_count: 5,
            mutant_count: 6,
            crossover_count: 6,
            fresh_count: 3,
            generations: 30,
            mutation_sigma: 0.10,
            seeds_per_eval: 3,
        }
    }
}

impl GaConfig {
    pub fn validate(&self) -> Result<()> {
        if self.elite_count < 1 {
            return Err(Error::config("elite_count must be >= 1"));
        }
        if self.elite_count + self.mutant_count + self.crossover_count + self.fresh_count
            != self.population_size
        {
            return Err(Error::config(
                "elite + mutant + crossover + fresh must equal population_size",
            ));
        }
        if self.elite_count > self.population_size {
            return Err(Error::config("elite_count exceeds population size"));
        }
        if self.generations < 1 || self.seeds_per_eval < 1 {
            return Err(Error::config("generations and seeds_per_eval must be >= 1"));
        }
        Ok(())
    }
}

/// Client satisfaction: the number of keyword slots fulfilled within their
/// deadline, averaged over `seeds_per_eval` runs with shared evaluation
/// seeds. A scenario that fails to set up scores 0.
pub fn fitness(genome: &Genome, scenario: &Scenario, seeds_per_eval: usize) -> f64 {
    let mut total = 0.0;
    for i in 0..seeds_per_eval {
        let mut s = scenario.clone();
        s.params = genome.decode();
        s.seed = rng::derive_seed(scenario.seed, "ga-eval", i as u64);
        match engine::run(s) {
            Ok(out) => total += out.log.fulfilled_slots() as f64,
            Err(e) => {
                log::warn!("fitness run failed, scoring 0: {e}");
                return 0.0;
            }
        }
    }
    total / seeds_per_eval as f64
}

/// Next generation: elites verbatim (best fitness first, ties by index),
/// then mutated elites, uniform-gene crossovers of two distinct elites, and
/// fresh random genomes.
pub fn evolve(
    population: &[Genome],
    fitnesses: &[f64],
    config: &GaConfig,
    rng: &mut rng::Rng,
) -> Result<Vec<Genome>> {
    config.validate()?;
    if population.len() != config.population_size || fitnesses.len() != population.len() {
        return Err(Error::config("population/fitness size mismatch"));
    }
    let mut order: Vec<usize> = (0..population.len()).collect();
    order.sort_by(|&a, &b| fitnesses[b].partial_cmp(&fitnesses[a]).unwrap().then(a.cmp(&b)));
    let elites: Vec<Genome> = order.iter().take(config.elite_count).map(|&i| population[i]).collect();

    let mut next = elites.clone();
    for _ in 0..config.mutant_count {
        let parent = elites[rng.random_range(0..elites.len())];
        let mut child = parent;
        for (g, &(lo, hi)) in child.genes.iter_mut().zip(&GENE_BOUNDS) {
            let sigma = config.mutation_sigma * (hi - lo);
            if sigma > 0.0 {
                let noise = Normal::new(0.0, sigma).expect("valid normal").sample(rng);
                *g += noise;
            }
        }
        child.clamp();
        next.push(child);
    }
    for _ in 0..config.crossover_count {
        let (pa, pb) = if elites.len() > 1 {
            // Two distinct elite parents.
            let ai = rng.random_range(0..elites.len());
            let mut bi = rng.random_range(0..elites.len() - 1);
            if bi >= ai {
                bi += 1;
            }
            (elites[ai], elites[bi])
        } else {
            (elites[0], elites[0])
        };
        let mut child = pa;
        for (i, g) in child.genes.iter_mut().enumerate() {
            if rng.random::<bool>() {
                *g = pb.genes[i];
            }
        }
        child.clamp();
        next.push(child);
    }
    for _ in 0..config.fresh_count {
        next.push(Genome::random(rng));
    }
    debug_assert_eq!(next.len(), config.population_size);
    Ok(next)
}

/// Per-generation record for the optimization history CSV.
#[derive(Debug, Clone, Copy)]
pub struct GenerationRecord {
    pub generation: usize,
    pub best_fitness: f64,
    pub mean_fitness: f64,
    pub best_genome: Genome,
}

pub struct OptimizeResult {
    pub best: Genome,
    pub best_fitness: f64,
    pub history: Vec<GenerationRecord>,
}

/// Runs the full loop: random initial population, elite-selection
/// generations, best-ever tracking. Fitness evaluations run in parallel
/// (shared-nothing engines).
pub fn optimize(scenario: &Scenario, config: &GaConfig, seed: u64) -> Result<OptimizeResult> {
    config.validate()?;
    scenario.validate()?;
    let mut rng = rng::stream(seed, "ga");
    let mut population: Vec<Genome> =
        (0..config.population_size).map(|_| Genome::random(&mut rng)).collect();
    let mut best: Option<(Genome, f64)> = None;
    let mut history = Vec::with_capacity(config.generations);

    for generation in 0..config.generations {
        let fitnesses: Vec<f64> = population
            .par_iter()
            .map(|g| fitness(g, scenario, config.seeds_per_eval))
            .collect();
        let (gen_best_idx, gen_best) = fitnesses
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.partial_cmp(b.1).unwrap().then(b.0.cmp(&a.0)))
            .map(|(i, &f)| (i, f))
            .expect("population is never empty");
        if best.as_ref().map_or(true, |&(_, f)| gen_best > f) {
            best = Some((population[gen_best_idx], gen_best));
        }
        let mean = fitnesses.iter().sum::<f64>() / fitnesses.len() as f64;
        let best_ever = best.as_ref().unwrap();
        history.push(GenerationRecord {
            generation,
            best_fitness: best_ever.1,
            mean_fitness: mean,
            best_genome: best_ever.0,
        });
        log::info!("generation {generation}: best {:.1}, mean {mean:.1}", best_ever.1);
        if generation + 1 < config.generations {
            population = evolve(&population, &fitnesses, config, &mut rng)?;
        }
    }
    let (best, best_fitness) = best.expect("at least one generation ran");
    Ok(OptimizeResult { best, best_fitness, history })
}
