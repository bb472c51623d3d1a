//! Generational genetic programming over [`ExprTree`]s.
//!
//! Every offspring slot draws from its own ChaCha stream keyed by
//! (seed, generation, slot), so results do not depend on the worker count.

use std::cmp::Ordering;
use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use thiserror::Error;

use crate::expr::{ExprTree, Node, NodeId, Op, DEFAULT_DEPTH_CAP};
use crate::problems::{fmt_real, Dataset};

/// Fitness assigned to programs whose evaluation was not finite.
pub const WORST_FITNESS: f64 = f64::INFINITY;

const MAX_PLACEMENT_ATTEMPTS: usize = 8;
const SUBTREE_MUTATION_DEPTH: usize = 4;
const PROBABILITY_SUM_TOL: f64 = 1e-12;
pub const MAX_PARSIMONY: f64 = 1e-6;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GpError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("dataset: {0}")]
    Data(String),
    #[error("worker pool: {0}")]
    Pool(String),
}

#[derive(Debug, Clone, PartialEq)]
pub struct GpConfig {
    pub population_size: usize,
    pub generations: usize,
    pub tournament_size: usize,
    pub crossover_p: f64,
    pub subtree_p: f64,
    pub point_p: f64,
    pub hoist_p: f64,
    pub reproduction_p: f64,
    pub parsimony_coefficient: f64,
    pub erc_range: (f64, f64),
    pub init_depth: (usize, usize),
    pub depth_cap: usize,
    /// Run stops once the best raw fitness reaches this value.
    pub fitness_stop: f64,
    pub seed: u64,
    pub n_runs: usize,
    /// Per-node replacement probability of point mutation.
    pub point_replace_p: f64,
    pub function_set: Vec<Op>,
    /// Evaluation threads; `None` uses the global rayon pool.
    pub workers: Option<usize>,
}

impl Default for GpConfig {
    fn default() -> Self {
        GpConfig {
            population_size: 4000,
            generations: 30,
            tournament_size: 20,
            crossover_p: 0.65,
            subtree_p: 0.12,
            point_p: 0.10,
            hoist_p: 0.05,
            reproduction_p: 0.08,
            parsimony_coefficient: 1e-6,
            erc_range: (-5.0, 5.0),
            init_depth: (2, 6),
            depth_cap: DEFAULT_DEPTH_CAP,
            fitness_stop: 1e-16,
            seed: 0,
            n_runs: 5,
            point_replace_p: 0.05,
            function_set: Op::ALL.to_vec(),
            workers: None,
        }
    }
}

impl GpConfig {
    pub fn validate(&self) -> Result<(), GpError> {
        let fail = |m: String| Err(GpError::Config(m));
        let probs = [
            ("crossover_p", self.crossover_p),
            ("subtree_p", self.subtree_p),
            ("point_p", self.point_p),
            ("hoist_p", self.hoist_p),
            ("reproduction_p", self.reproduction_p),
            ("point_replace_p", self.point_replace_p),
        ];
        for (name, p) in probs {
            if !(0.0..=1.0).contains(&p) {
                return fail(format!("{name} = {p} is not a probability"));
            }
        }
        let sum: f64 = probs[..5].iter().map(|(_, p)| p).sum();
        if (sum - 1.0).abs() > PROBABILITY_SUM_TOL {
            return fail(format!("operator probabilities sum to {sum}, expected 1"));
        }
        if !(0.0..=MAX_PARSIMONY).contains(&self.parsimony_coefficient) {
            return fail(format!(
                "parsimony_coefficient = {} outside [0, {MAX_PARSIMONY}]",
                self.parsimony_coefficient
            ));
        }
        if self.population_size == 0 {
            return fail("population_size must be at least 1".into());
        }
        if self.tournament_size == 0 || self.tournament_size > self.population_size {
            return fail(format!(
                "tournament_size = {} must lie in [1, population_size = {}]",
                self.tournament_size, self.population_size
            ));
        }
        let (lo, hi) = self.erc_range;
        if !lo.is_finite() || !hi.is_finite() || lo > hi {
            return fail(format!("erc_range [{lo}, {hi}] is not a finite interval"));
        }
        let (dlo, dhi) = self.init_depth;
        if dlo > dhi || dhi > self.depth_cap {
            return fail(format!("init_depth [{dlo}, {dhi}] must be ordered and within depth_cap {}", self.depth_cap));
        }
        if self.fitness_stop.is_nan() {
            return fail("fitness_stop is NaN".into());
        }
        if self.n_runs == 0 {
            return fail("n_runs must be at least 1".into());
        }
        if self.function_set.is_empty() {
            return fail("function_set is empty".into());
        }
        if self.workers == Some(0) {
            return fail("workers must be at least 1".into());
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Individual {
    pub tree: ExprTree,
    pub raw_fitness: f64,
    pub penalized_fitness: f64,
}

impl Individual {
    pub fn evaluate(tree: ExprTree, data: &Dataset, parsimony: f64) -> Self {
        let (raw_fitness, penalized_fitness) = fitness(&tree, data, parsimony);
        Individual { tree, raw_fitness, penalized_fitness }
    }

    pub fn length(&self) -> usize {
        self.tree.len()
    }

    /// Selection order: penalized fitness, then length.
    pub fn rank_cmp(&self, other: &Individual) -> Ordering {
        self.penalized_fitness.total_cmp(&other.penalized_fitness).then(self.length().cmp(&other.length()))
    }
}

/// Mean absolute error and its parsimony-penalized version.
pub fn fitness(tree: &ExprTree, data: &Dataset, parsimony: f64) -> (f64, f64) {
    let mut stack = Vec::with_capacity(tree.depth() + 2);
    let mut sum = 0.0;
    for (row, &t) in data.inputs.iter().zip(&data.target) {
        let v = tree.evaluate_with(row, &mut stack);
        sum += (v - t).abs();
    }
    let raw = sum / data.n_rows() as f64;
    if !raw.is_finite() {
        return (WORST_FITNESS, WORST_FITNESS);
    }
    (raw, raw + parsimony * tree.len() as f64)
}

/// Deterministic RNG for one (generation, slot) pair. Generation 0 is initialization.
pub fn slot_rng(seed: u64, generation: u64, slot: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream((generation << 32) | (slot & 0xffff_ffff));
    rng
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum InitMethod {
    Full,
    Grow,
}

fn random_leaf<R: Rng + ?Sized>(config: &GpConfig, n_inputs: usize, rng: &mut R) -> Node {
    if rng.gen_bool(0.5) {
        Node::Variable(rng.gen_range(0..n_inputs))
    } else {
        let (lo, hi) = config.erc_range;
        Node::Constant(if lo == hi { lo } else { rng.gen_range(lo..=hi) })
    }
}

fn random_op<R: Rng + ?Sized>(config: &GpConfig, rng: &mut R) -> Op {
    config.function_set[rng.gen_range(0..config.function_set.len())]
}

fn grow_nodes<R: Rng + ?Sized>(
    nodes: &mut Vec<Node>,
    depth: usize,
    max_depth: usize,
    method: InitMethod,
    config: &GpConfig,
    n_inputs: usize,
    rng: &mut R,
) {
    let internal = depth < max_depth
        && match method {
            InitMethod::Full => true,
            InitMethod::Grow => depth == 0 || rng.gen_bool(0.5),
        };
    if !internal {
        nodes.push(random_leaf(config, n_inputs, rng));
        return;
    }
    let op = random_op(config, rng);
    let at = nodes.len();
    nodes.push(Node::Constant(0.0));
    let left = nodes.len();
    grow_nodes(nodes, depth + 1, max_depth, method, config, n_inputs, rng);
    let right = nodes.len();
    grow_nodes(nodes, depth + 1, max_depth, method, config, n_inputs, rng);
    nodes[at] = Node::Binary { op, left: NodeId(left), right: NodeId(right) };
}

/// A random tree of depth at most `max_depth`; exactly `max_depth` for `Full`.
pub fn random_tree<R: Rng + ?Sized>(
    config: &GpConfig,
    n_inputs: usize,
    max_depth: usize,
    method: InitMethod,
    rng: &mut R,
) -> ExprTree {
    let mut nodes = Vec::new();
    grow_nodes(&mut nodes, 0, max_depth, method, config, n_inputs, rng);
    ExprTree::from_nodes(nodes).expect("generated trees are well formed")
}

/// Ramped half-and-half: even slots use full, odd slots grow, depths cycle over `init_depth`.
pub fn init_population(config: &GpConfig, n_inputs: usize) -> Result<Vec<ExprTree>, GpError> {
    config.validate()?;
    if n_inputs == 0 {
        return Err(GpError::Data("at least one input column is required".into()));
    }
    let (lo, hi) = config.init_depth;
    let ramp = hi - lo + 1;
    Ok((0..config.population_size)
        .into_par_iter()
        .map(|slot| {
            let mut rng = slot_rng(config.seed, 0, slot as u64);
            let method = if slot % 2 == 0 { InitMethod::Full } else { InitMethod::Grow };
            let depth = lo + (slot / 2) % ramp;
            random_tree(config, n_inputs, depth, method, &mut rng)
        })
        .collect())
}

/// Index of the winner of a size-`k` tournament drawn with replacement.
pub fn tournament<R: Rng + ?Sized>(population: &[Individual], k: usize, rng: &mut R) -> usize {
    let mut best = rng.gen_range(0..population.len());
    for _ in 1..k {
        let c = rng.gen_range(0..population.len());
        match population[c].rank_cmp(&population[best]) {
            Ordering::Less => best = c,
            Ordering::Equal if c < best => best = c,
            _ => {}
        }
    }
    best
}

pub fn crossover<R: Rng + ?Sized>(parent: &ExprTree, donor: &ExprTree, depth_cap: usize, rng: &mut R) -> ExprTree {
    let at = parent.random_subtree(rng);
    for _ in 0..MAX_PLACEMENT_ATTEMPTS {
        let graft = donor.subtree(donor.random_subtree(rng));
        if let Ok(child) = parent.replace_subtree(at, &graft, depth_cap) {
            return child;
        }
    }
    parent.clone()
}

pub fn subtree_mutation<R: Rng + ?Sized>(
    parent: &ExprTree,
    config: &GpConfig,
    n_inputs: usize,
    rng: &mut R,
) -> ExprTree {
    let at = parent.random_subtree(rng);
    for _ in 0..MAX_PLACEMENT_ATTEMPTS {
        let fresh = random_tree(config, n_inputs, SUBTREE_MUTATION_DEPTH, InitMethod::Grow, rng);
        if let Ok(child) = parent.replace_subtree(at, &fresh, config.depth_cap) {
            return child;
        }
    }
    parent.clone()
}

/// Resamples each node with probability `config.point_replace_p`, keeping arity.
pub fn point_mutation<R: Rng + ?Sized>(parent: &ExprTree, config: &GpConfig, n_inputs: usize, rng: &mut R) -> ExprTree {
    let mut child = parent.clone();
    for i in 0..parent.len() {
        if !rng.gen_bool(config.point_replace_p) {
            continue;
        }
        let id = NodeId(i);
        let node = match *parent.node(id) {
            Node::Binary { left, right, .. } => Node::Binary { op: random_op(config, rng), left, right },
            Node::Constant(_) => {
                let (lo, hi) = config.erc_range;
                Node::Constant(if lo == hi { lo } else { rng.gen_range(lo..=hi) })
            }
            Node::Variable(_) => Node::Variable(rng.gen_range(0..n_inputs)),
        };
        child = child.with_node(id, node);
    }
    child
}

pub fn hoist_mutation<R: Rng + ?Sized>(parent: &ExprTree, rng: &mut R) -> ExprTree {
    let at = parent.random_subtree(rng);
    let outer = parent.subtree(at);
    let inner = outer.subtree(outer.random_subtree(rng));
    parent.replace_subtree(at, &inner, usize::MAX).expect("hoisting never deepens a tree")
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum GeneticOp {
    Crossover,
    Subtree,
    Point,
    Hoist,
    Reproduction,
}

pub fn draw_operator<R: Rng + ?Sized>(config: &GpConfig, rng: &mut R) -> GeneticOp {
    let u: f64 = rng.gen();
    let mut acc = config.crossover_p;
    if u < acc {
        return GeneticOp::Crossover;
    }
    acc += config.subtree_p;
    if u < acc {
        return GeneticOp::Subtree;
    }
    acc += config.point_p;
    if u < acc {
        return GeneticOp::Point;
    }
    acc += config.hoist_p;
    if u < acc {
        return GeneticOp::Hoist;
    }
    GeneticOp::Reproduction
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StopReason {
    GenerationLimit,
    FitnessThreshold,
}

impl StopReason {
    pub fn as_str(self) -> &'static str {
        match self {
            StopReason::GenerationLimit => "generation_limit",
            StopReason::FitnessThreshold => "fitness_threshold",
        }
    }
}

/// Best-so-far individual after a generation (0 is the initial population).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GenerationRecord {
    pub generation: usize,
    pub best_raw: f64,
    pub best_penalized: f64,
    pub best_length: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunResult {
    pub best: Individual,
    pub history: Vec<GenerationRecord>,
    pub seed: u64,
    pub generations_run: usize,
    pub stop_reason: StopReason,
}

impl RunResult {
    pub fn fitness_history(&self) -> Vec<f64> {
        self.history.iter().map(|r| r.best_penalized).collect()
    }

    /// `generation,best_raw,best_penalized,best_length`
    pub fn history_csv(&self) -> String {
        let mut out = String::from("generation,best_raw,best_penalized,best_length\n");
        for r in &self.history {
            out.push_str(&format!(
                "{},{},{},{}\n",
                r.generation,
                fmt_real(r.best_raw),
                fmt_real(r.best_penalized),
                r.best_length
            ));
        }
        out
    }

    /// Writes `run_<seed>.csv` and `best_<seed>.txt` into `dir`.
    pub fn write_artifacts(&self, dir: &Path, names: &[&str]) -> io::Result<Vec<PathBuf>> {
        fs::create_dir_all(dir)?;
        let csv = dir.join(format!("run_{}.csv", self.seed));
        let txt = dir.join(format!("best_{}.txt", self.seed));
        fs::write(&csv, self.history_csv())?;
        fs::write(&txt, format!("{}\n", self.best.tree.to_canonical_string(names)))?;
        Ok(vec![csv, txt])
    }
}

fn check_data(data: &Dataset) -> Result<(), GpError> {
    data.validate().map_err(|e| GpError::Data(e.to_string()))
}

fn breed(config: &GpConfig, data: &Dataset, population: &[Individual], generation: usize, slot: usize) -> Individual {
    let mut rng = slot_rng(config.seed, generation as u64, slot as u64);
    let parent = &population[tournament(population, config.tournament_size, &mut rng)].tree;
    let n_inputs = data.n_inputs();
    let tree = match draw_operator(config, &mut rng) {
        GeneticOp::Crossover => {
            let donor = &population[tournament(population, config.tournament_size, &mut rng)].tree;
            crossover(parent, donor, config.depth_cap, &mut rng)
        }
        GeneticOp::Subtree => subtree_mutation(parent, config, n_inputs, &mut rng),
        GeneticOp::Point => point_mutation(parent, config, n_inputs, &mut rng),
        GeneticOp::Hoist => hoist_mutation(parent, &mut rng),
        GeneticOp::Reproduction => parent.clone(),
    };
    Individual::evaluate(tree, data, config.parsimony_coefficient)
}

fn population_best(population: &[Individual]) -> &Individual {
    population.iter().min_by(|a, b| a.rank_cmp(b)).expect("population is nonempty")
}

fn evolve_inner(config: &GpConfig, data: &Dataset) -> RunResult {
    let trees = init_population(config, data.n_inputs()).expect("validated by caller");
    let mut population: Vec<Individual> =
        trees.into_par_iter().map(|t| Individual::evaluate(t, data, config.parsimony_coefficient)).collect();
    let mut best = population_best(&population).clone();
    let record = |g: usize, b: &Individual| GenerationRecord {
        generation: g,
        best_raw: b.raw_fitness,
        best_penalized: b.penalized_fitness,
        best_length: b.length(),
    };
    let mut history = vec![record(0, &best)];
    let mut generation = 0;
    let mut stop_reason = StopReason::GenerationLimit;
    while generation < config.generations {
        if best.raw_fitness <= config.fitness_stop {
            stop_reason = StopReason::FitnessThreshold;
            break;
        }
        generation += 1;
        population = (0..config.population_size)
            .into_par_iter()
            .map(|slot| breed(config, data, &population, generation, slot))
            .collect();
        let gen_best = population_best(&population);
        if gen_best.rank_cmp(&best) == Ordering::Less {
            best = gen_best.clone();
        }
        history.push(record(generation, &best));
    }
    if stop_reason == StopReason::GenerationLimit && best.raw_fitness <= config.fitness_stop {
        stop_reason = StopReason::FitnessThreshold;
    }
    RunResult { best, history, seed: config.seed, generations_run: generation, stop_reason }
}

fn with_workers<T: Send>(workers: Option<usize>, f: impl FnOnce() -> T + Send) -> Result<T, GpError> {
    match workers {
        None => Ok(f()),
        Some(n) => {
            let pool =
                rayon::ThreadPoolBuilder::new().num_threads(n).build().map_err(|e| GpError::Pool(e.to_string()))?;
            Ok(pool.install(f))
        }
    }
}

/// One seeded run.
pub fn evolve(config: &GpConfig, data: &Dataset) -> Result<RunResult, GpError> {
    config.validate()?;
    check_data(data)?;
    with_workers(config.workers, || evolve_inner(config, data))
}

#[derive(Debug, Clone, PartialEq)]
pub struct MultiRun {
    pub runs: Vec<RunResult>,
    pub best_index: usize,
}

impl MultiRun {
    pub fn best(&self) -> &RunResult {
        &self.runs[self.best_index]
    }
}

/// `n_runs` runs with seeds seed, seed+1, ...; best is the lowest penalized fitness.
pub fn multi_run(config: &GpConfig, data: &Dataset) -> Result<MultiRun, GpError> {
    config.validate()?;
    check_data(data)?;
    let runs = with_workers(config.workers, || {
        (0..config.n_runs)
            .map(|r| {
                let cfg = GpConfig { seed: config.seed.wrapping_add(r as u64), ..config.clone() };
                evolve_inner(&cfg, data)
            })
            .collect::<Vec<_>>()
    })?;
    let best_index =
        (0..runs.len()).min_by(|&a, &b| runs[a].best.rank_cmp(&runs[b].best).then(a.cmp(&b))).expect("n_runs >= 1");
    Ok(MultiRun { runs, best_index })
}
