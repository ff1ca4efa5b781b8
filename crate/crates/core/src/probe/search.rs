//! Fixed-length pass-sequence search maximizing mean relative instruction
//! reduction over a group of programs.

use std::collections::{BTreeMap, BTreeSet};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::driver::OptimizerDriver;
use super::{FailurePolicy, ProbeError, Program};
use crate::ir::{instruction_count, parse_ir};

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SearchMethod {
    #[default]
    Greedy,
    Genetic,
}

impl std::fmt::Display for SearchMethod {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            SearchMethod::Greedy => "greedy",
            SearchMethod::Genetic => "genetic",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeneticParams {
    pub population: usize,
    pub tournament: usize,
    pub elitism: usize,
}

impl Default for GeneticParams {
    fn default() -> Self {
        Self {
            population: 32,
            tournament: 4,
            elitism: 2,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchConfig {
    pub length: usize,
    pub method: SearchMethod,
    /// Distinct sequence evaluations allowed; `None` picks a method default.
    pub budget: Option<usize>,
    pub seed: u64,
    pub policy: FailurePolicy,
    pub genetic: GeneticParams,
}

impl SearchConfig {
    pub fn new(length: usize, method: SearchMethod, seed: u64) -> Self {
        Self {
            length,
            method,
            budget: None,
            seed,
            policy: FailurePolicy::ZeroFill,
            genetic: GeneticParams::default(),
        }
    }

    fn effective_budget(&self, pool: usize) -> usize {
        self.budget.unwrap_or(match self.method {
            SearchMethod::Greedy => self.length * pool,
            SearchMethod::Genetic => self.genetic.population * 50,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchOutcome {
    pub passes: Vec<String>,
    pub score: f64,
    pub evaluations: usize,
    /// Stopped because the budget ran out rather than by finishing.
    pub budget_exhausted: bool,
}

/// Scores pass sequences (as pool indices) against a fixed program group.
pub struct Evaluator<'a> {
    driver: &'a OptimizerDriver,
    programs: Vec<(&'a str, u64)>,
    pool: &'a [String],
    policy: FailurePolicy,
    memo: BTreeMap<Vec<usize>, f64>,
    pub evaluations: usize,
}

impl<'a> Evaluator<'a> {
    pub fn new(
        driver: &'a OptimizerDriver,
        programs: &'a [Program],
        pool: &'a [String],
        policy: FailurePolicy,
    ) -> Result<Self, ProbeError> {
        let programs = programs
            .iter()
            .map(|p| Ok((p.text.as_str(), instruction_count(&parse_ir(&p.text)?))))
            .collect::<Result<Vec<_>, ProbeError>>()?;
        Ok(Self {
            driver,
            programs,
            pool,
            policy,
            memo: BTreeMap::new(),
            evaluations: 0,
        })
    }

    fn program_score(&self, text: &str, orig: u64, seq: &[usize]) -> Result<f64, ProbeError> {
        let passes: Vec<&str> = seq.iter().map(|&i| self.pool[i].as_str()).collect();
        let optimized = self
            .driver
            .apply_passes(text.as_bytes(), &passes)
            .map_err(ProbeError::from)
            .and_then(|out| Ok(instruction_count(&parse_ir(&String::from_utf8_lossy(&out))?)));
        match (optimized, self.policy) {
            (Ok(opt), _) => Ok((orig as f64 - opt as f64) / (orig.max(1) as f64)),
            (Err(e), FailurePolicy::Strict) => Err(e),
            (Err(e), FailurePolicy::ZeroFill) => {
                log::warn!("sequence {passes:?} failed during search, scored as no change: {e}");
                Ok(0.0)
            }
        }
    }

    /// Scores every sequence not seen before; returns the number newly evaluated.
    pub fn evaluate(&mut self, seqs: &[Vec<usize>]) -> Result<usize, ProbeError> {
        let fresh: Vec<&Vec<usize>> = seqs
            .iter()
            .filter(|s| !self.memo.contains_key(*s))
            .collect::<BTreeSet<_>>()
            .into_iter()
            .collect();
        let n = self.programs.len();
        let per_pair: Vec<f64> = (0..fresh.len() * n)
            .into_par_iter()
            .map(|k| {
                let (text, orig) = self.programs[k % n];
                self.program_score(text, orig, fresh[k / n])
            })
            .collect::<Result<_, _>>()?;
        for (i, seq) in fresh.iter().enumerate() {
            let mean = per_pair[i * n..(i + 1) * n].iter().sum::<f64>() / n as f64;
            self.memo.insert((*seq).clone(), mean);
        }
        self.evaluations += fresh.len();
        Ok(fresh.len())
    }

    pub fn score(&self, seq: &[usize]) -> Option<f64> {
        self.memo.get(seq).copied()
    }

    pub fn seen(&self, seq: &[usize]) -> bool {
        self.memo.contains_key(seq)
    }

    /// Best evaluated sequence of the given length: highest score, then
    /// lexicographically smallest index vector.
    pub fn best_of_length(&self, len: usize) -> Option<(Vec<usize>, f64)> {
        self.memo
            .iter()
            .filter(|(s, _)| s.len() == len)
            .fold(None, |best: Option<(&Vec<usize>, f64)>, (s, &v)| match best {
                Some((_, bv)) if bv >= v => best,
                _ => Some((s, v)),
            })
            .map(|(s, v)| (s.clone(), v))
    }
}

/// Finds one length-`cfg.length` sequence for `programs`.
pub fn search_probe(
    driver: &OptimizerDriver,
    programs: &[Program],
    pool: &[String],
    cfg: &SearchConfig,
) -> Result<SearchOutcome, ProbeError> {
    if programs.is_empty() {
        return Err(ProbeError::EmptyCluster);
    }
    if pool.is_empty() {
        return Err(ProbeError::EmptyPool);
    }
    if cfg.length == 0 {
        return Err(ProbeError::ZeroLength);
    }
    let mut eval = Evaluator::new(driver, programs, pool, cfg.policy)?;
    let budget = cfg.effective_budget(pool.len()).max(1);
    let (seq, exhausted) = match cfg.method {
        SearchMethod::Greedy => greedy(&mut eval, pool.len(), cfg.length, budget)?,
        SearchMethod::Genetic => genetic(&mut eval, pool.len(), cfg, budget)?,
    };
    let score = eval.score(&seq).expect("returned sequence was evaluated");
    Ok(SearchOutcome {
        passes: seq.iter().map(|&i| pool[i].clone()).collect(),
        score,
        evaluations: eval.evaluations,
        budget_exhausted: exhausted,
    })
}

fn greedy(eval: &mut Evaluator<'_>, pool: usize, length: usize, budget: usize) -> Result<(Vec<usize>, bool), ProbeError> {
    let mut prefix: Vec<usize> = Vec::with_capacity(length);
    let mut exhausted = false;
    while prefix.len() < length {
        let remaining = budget.saturating_sub(eval.evaluations);
        let mut candidates: Vec<Vec<usize>> = Vec::new();
        let mut new_needed = 0;
        for p in 0..pool {
            let mut c = prefix.clone();
            c.push(p);
            if !eval.seen(&c) {
                if new_needed == remaining {
                    exhausted = true;
                    break;
                }
                new_needed += 1;
            }
            candidates.push(c);
        }
        if candidates.is_empty() {
            break;
        }
        eval.evaluate(&candidates)?;
        let mut best = 0;
        for (i, c) in candidates.iter().enumerate() {
            if eval.score(c).unwrap() > eval.score(&candidates[best]).unwrap() {
                best = i;
            }
        }
        prefix = candidates.swap_remove(best);
        if exhausted {
            break;
        }
    }
    if prefix.len() < length {
        // Out of budget: repeat the last choice to reach the fixed length.
        let fill = prefix.last().copied().unwrap_or(0);
        prefix.resize(length, fill);
        eval.evaluate(std::slice::from_ref(&prefix))?;
    }
    Ok((prefix, exhausted))
}

fn space_size(pool: usize, length: usize) -> Option<u128> {
    (pool as u128).checked_pow(u32::try_from(length).ok()?)
}

/// Odometer successor in base `pool`, last gene least significant.
fn next_sequence(seq: &mut [usize], pool: usize) {
    for g in seq.iter_mut().rev() {
        *g += 1;
        if *g < pool {
            return;
        }
        *g = 0;
    }
}

/// Perturbs `child` until it is neither evaluated nor already queued.
/// Returns false when no unseen sequence exists.
fn make_novel(
    child: &mut Vec<usize>,
    eval: &Evaluator<'_>,
    queued: &BTreeSet<Vec<usize>>,
    pool: usize,
    space: Option<u128>,
    rng: &mut ChaCha8Rng,
) -> bool {
    let novel = |c: &Vec<usize>| !eval.seen(c) && !queued.contains(c);
    for _ in 0..16 {
        if novel(child) {
            return true;
        }
        let pos = rng.gen_range(0..child.len());
        child[pos] = rng.gen_range(0..pool);
    }
    if novel(child) {
        return true;
    }
    match space {
        Some(size) if size <= 1_000_000 => {
            for _ in 0..size {
                next_sequence(child, pool);
                if novel(child) {
                    return true;
                }
            }
            false
        }
        // Space too large to scan; a duplicate costs nothing (memoized).
        _ => true,
    }
}

fn genetic(
    eval: &mut Evaluator<'_>,
    pool: usize,
    cfg: &SearchConfig,
    budget: usize,
) -> Result<(Vec<usize>, bool), ProbeError> {
    let params = &cfg.genetic;
    let length = cfg.length;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let space = space_size(pool, length);
    let pop_size = params.population.max(2);
    let mutation_rate = 1.0 / length as f64;

    let mut queued = BTreeSet::new();
    let mut initial = Vec::new();
    while initial.len() < pop_size.min(budget) {
        let mut g: Vec<usize> = (0..length).map(|_| rng.gen_range(0..pool)).collect();
        if !make_novel(&mut g, eval, &queued, pool, space, &mut rng) {
            break;
        }
        queued.insert(g.clone());
        initial.push(g);
    }
    eval.evaluate(&initial)?;
    let mut population = initial;

    let exhausted_space = |eval: &Evaluator<'_>| space.is_some_and(|s| eval.memo.len() as u128 >= s);
    while eval.evaluations < budget && !exhausted_space(eval) {
        population.sort_by(|a, b| {
            let (sa, sb) = (eval.score(a).unwrap(), eval.score(b).unwrap());
            sb.total_cmp(&sa).then_with(|| a.cmp(b))
        });
        let mut next: Vec<Vec<usize>> = population.iter().take(params.elitism.min(population.len())).cloned().collect();
        let mut children = Vec::new();
        let mut queued = BTreeSet::new();
        let mut stuck = false;
        while next.len() + children.len() < pop_size && eval.evaluations + children.len() < budget {
            let a = tournament(&population, eval, params.tournament, &mut rng);
            let b = tournament(&population, eval, params.tournament, &mut rng);
            let cut = if length > 1 { rng.gen_range(1..length) } else { length };
            let mut child: Vec<usize> = a[..cut].iter().chain(&b[cut..]).copied().collect();
            for g in child.iter_mut() {
                if rng.gen::<f64>() < mutation_rate {
                    *g = rng.gen_range(0..pool);
                }
            }
            if !make_novel(&mut child, eval, &queued, pool, space, &mut rng) {
                stuck = true;
                break;
            }
            queued.insert(child.clone());
            children.push(child);
        }
        if children.is_empty() {
            break;
        }
        eval.evaluate(&children)?;
        next.extend(children);
        population = next;
        if stuck {
            break;
        }
    }
    let exhausted = eval.evaluations >= budget && !exhausted_space(eval);
    let (best, _) = eval.best_of_length(length).expect("at least one evaluated sequence");
    Ok((best, exhausted))
}

fn tournament<'p>(population: &'p [Vec<usize>], eval: &Evaluator<'_>, size: usize, rng: &mut ChaCha8Rng) -> &'p [usize] {
    let mut best = rng.gen_range(0..population.len());
    for _ in 1..size.max(1) {
        let c = rng.gen_range(0..population.len());
        let (sc, sb) = (eval.score(&population[c]).unwrap(), eval.score(&population[best]).unwrap());
        if sc > sb || (sc == sb && c < best) {
            best = c;
        }
    }
    &population[best]
}
