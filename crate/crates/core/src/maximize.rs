//! Maximizers for the batch objective: brute force (oracle), naive greedy,
//! lazy greedy, stochastic ("lazier than lazy") greedy, and the partitioned
//! two-stage mini-batch selection built on it.
//!
//! All of them break ties between equal gains in favour of the lowest
//! dataset index, so greedy variants are directly comparable.

use std::cmp::Ordering;
use std::collections::BinaryHeap;
use std::time::{Duration, Instant};

use rayon::prelude::*;

use crate::dataset::partition;
use crate::error::{Error, Result};
use crate::objective::{Objective, SelectionState, TraceStep};
use crate::rng::Rng;

/// Largest number of ordered tuples the chain-mode brute force will enumerate.
pub const BRUTE_FORCE_MAX_TUPLES: u128 = 5040;
/// Largest number of subsets the set-mode brute force will enumerate.
pub const BRUTE_FORCE_MAX_SUBSETS: u128 = 20_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MaximizerKind {
    BruteForceChain,
    BruteForceSet,
    Greedy,
    LazyGreedy,
    Ltlg,
    Partitioned,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BruteForceMode {
    /// Best ordered tuple by chain value.
    Chain,
    /// Best subset by set value.
    Set,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SelectionResult {
    pub indices: Vec<usize>,
    pub chain_value: f64,
    pub set_value: f64,
    pub gain_evaluations: u64,
    pub wall_time: Duration,
    /// Per-pick gains of the final selection stage.
    pub trace: Vec<TraceStep>,
}

impl SelectionResult {
    fn from_state(state: &SelectionState<'_>, gain_evaluations: u64, started: Instant) -> Self {
        let indices = state.selected().to_vec();
        let set_value = state.objective().set_value(&indices);
        Self {
            indices,
            chain_value: state.chain_value(),
            set_value,
            gain_evaluations,
            wall_time: started.elapsed(),
            trace: state.trace().to_vec(),
        }
    }
}

#[inline]
fn better(gain: f64, index: usize, best: Option<(f64, usize, usize)>) -> bool {
    match best {
        None => true,
        Some((g, i, _)) => gain > g || (gain == g && index < i),
    }
}

/// Naive greedy rounds on an existing state until it holds `b` points (or the pool runs out).
fn greedy_rounds(state: &mut SelectionState<'_>, b: usize, evals: &mut u64) {
    let pool_len = state.pool().len();
    let target = b.min(pool_len).min(state.capacity());
    while state.selected().len() < target {
        let mut best: Option<(f64, usize, usize)> = None;
        for pos in 0..pool_len {
            if state.is_chosen_at(pos) {
                continue;
            }
            let g = state.gain_at(pos);
            *evals += 1;
            let idx = state.index_at(pos);
            if better(g, idx, best) {
                best = Some((g, idx, pos));
            }
        }
        let (_, _, pos) = best.expect("pool not exhausted");
        state.commit_at(pos);
    }
}

/// Greedy: every round scans the whole remaining pool for the best gain.
pub fn greedy(objective: &Objective<'_>, pool: &[usize], b: usize) -> SelectionResult {
    let started = Instant::now();
    let b = b.min(pool.len());
    let mut state = objective.state(pool, b);
    let mut evals = 0;
    greedy_rounds(&mut state, b, &mut evals);
    SelectionResult::from_state(&state, evals, started)
}

struct HeapEntry {
    bound: f64,
    index: usize,
    pos: usize,
    round: usize,
}

impl PartialEq for HeapEntry {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for HeapEntry {}

impl PartialOrd for HeapEntry {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for HeapEntry {
    fn cmp(&self, other: &Self) -> Ordering {
        // max-heap on bound, lowest index first among equal bounds
        self.bound
            .total_cmp(&other.bound)
            .then_with(|| other.index.cmp(&self.index))
    }
}

/// Lazy greedy with stale upper bounds in a max-heap. Matches [`greedy`]
/// pick for pick whenever gains only shrink as the selection grows.
pub fn lazy_greedy(objective: &Objective<'_>, pool: &[usize], b: usize) -> SelectionResult {
    let started = Instant::now();
    let b = b.min(pool.len());
    let mut state = objective.state(pool, b);
    let mut evals = 0u64;
    let mut heap: BinaryHeap<HeapEntry> = (0..pool.len())
        .map(|pos| {
            evals += 1;
            HeapEntry {
                bound: state.gain_at(pos),
                index: state.index_at(pos),
                pos,
                round: 0,
            }
        })
        .collect();
    let mut round = 0;
    while state.selected().len() < b {
        let top = heap.pop().expect("pool not exhausted");
        if top.round == round {
            state.commit_at(top.pos);
            round += 1;
        } else {
            evals += 1;
            heap.push(HeapEntry {
                bound: state.gain_at(top.pos),
                round,
                ..top
            });
        }
    }
    SelectionResult::from_state(&state, evals, started)
}

/// Stochastic greedy rounds: each round samples `min(s, remaining)` unselected
/// pool members without replacement and commits the best of them.
fn ltlg_rounds(state: &mut SelectionState<'_>, b: usize, s: usize, rng: &mut Rng, evals: &mut u64) {
    let mut remaining: Vec<usize> = (0..state.pool().len()).filter(|&p| !state.is_chosen_at(p)).collect();
    let target = b.min(state.capacity()).min(state.selected().len() + remaining.len());
    let s = s.max(1);
    while state.selected().len() < target {
        let k = s.min(remaining.len());
        // partial Fisher-Yates: the first k slots become the sample
        for i in 0..k {
            let j = i + rng.below(remaining.len() - i);
            remaining.swap(i, j);
        }
        let mut best: Option<(f64, usize, usize)> = None;
        for (slot, &pos) in remaining[..k].iter().enumerate() {
            let g = state.gain_at(pos);
            *evals += 1;
            let idx = state.index_at(pos);
            if better(g, idx, best) {
                best = Some((g, idx, slot));
            }
        }
        let (_, _, slot) = best.expect("non-empty sample");
        let pos = remaining.swap_remove(slot);
        state.commit_at(pos);
    }
}

/// Lazier-than-lazy greedy with sample size `s` per round.
pub fn ltlg(objective: &Objective<'_>, pool: &[usize], b: usize, s: usize, rng: &mut Rng) -> SelectionResult {
    let started = Instant::now();
    let b = b.min(pool.len());
    let mut state = objective.state(pool, b);
    let mut evals = 0;
    ltlg_rounds(&mut state, b, s, rng, &mut evals);
    SelectionResult::from_state(&state, evals, started)
}

fn partition_rng(rng: &Rng) -> Rng {
    rng.fork_named("partition")
}

fn partition_stage_rng(rng: &Rng, part: usize) -> Rng {
    rng.fork_named("partition-ltlg").fork(part as u64)
}

fn merge_stage_rng(rng: &Rng) -> Rng {
    rng.fork_named("merge-ltlg")
}

/// Two-stage partitioned selection: split `ground` into `m` random balanced
/// parts, pick up to `b` per part with stochastic greedy (in parallel on the
/// current rayon pool), merge the picks in partition order and pick the
/// final `b` from the merged set with the same sample size `s`.
///
/// The result depends only on the inputs and `rng`'s seed, never on thread count.
pub fn get_mini_batch(
    objective: &Objective<'_>,
    ground: &[usize],
    b: usize,
    m: usize,
    s: usize,
    rng: &Rng,
) -> Result<SelectionResult> {
    if b == 0 {
        return Err(Error::Config("batch size must be positive".into()));
    }
    if b > ground.len() {
        return Err(Error::Config(format!(
            "batch size {b} exceeds ground set of {} points",
            ground.len()
        )));
    }
    let started = Instant::now();
    let parts = partition(ground, m, &mut partition_rng(rng))?;
    let stage_one: Vec<(Vec<usize>, u64)> = parts
        .par_iter()
        .enumerate()
        .map(|(i, part)| {
            let take = b.min(part.len());
            let mut state = objective.state(part, take);
            let mut evals = 0;
            ltlg_rounds(&mut state, take, s, &mut partition_stage_rng(rng, i), &mut evals);
            (state.selected().to_vec(), evals)
        })
        .collect();
    let mut evals: u64 = stage_one.iter().map(|(_, e)| e).sum();
    let merged: Vec<usize> = stage_one.into_iter().flat_map(|(picked, _)| picked).collect();

    let mut state = objective.state(&merged, b);
    ltlg_rounds(
        &mut state,
        b,
        s.min(merged.len()),
        &mut merge_stage_rng(rng),
        &mut evals,
    );
    Ok(SelectionResult::from_state(&state, evals, started))
}

fn falling_factorial(n: usize, k: usize) -> u128 {
    (0..k).fold(1u128, |acc, i| acc.saturating_mul((n - i) as u128))
}

fn binomial(n: usize, k: usize) -> u128 {
    let k = k.min(n - k);
    (0..k).fold(1u128, |acc, i| acc * (n - i) as u128 / (i as u128 + 1))
}

fn chain_search(state: &SelectionState<'_>, b: usize, best: &mut Option<(f64, Vec<usize>)>, evals: &mut u64) {
    if state.selected().len() == b {
        let v = state.chain_value();
        let improves = match best {
            None => true,
            Some((bv, _)) => v > *bv,
        };
        if improves {
            *best = Some((v, state.selected().to_vec()));
        }
        return;
    }
    for pos in 0..state.pool().len() {
        if state.is_chosen_at(pos) {
            continue;
        }
        let mut next = state.clone();
        next.commit_at(pos);
        *evals += 1;
        chain_search(&next, b, best, evals);
    }
}

/// Exhaustive optimum: best ordered tuple (chain mode) or best subset (set mode).
pub fn brute_force(
    objective: &Objective<'_>,
    pool: &[usize],
    b: usize,
    mode: BruteForceMode,
) -> Result<SelectionResult> {
    let started = Instant::now();
    let b = b.min(pool.len());
    let n = pool.len();
    match mode {
        BruteForceMode::Chain => {
            let count = falling_factorial(n, b);
            if count > BRUTE_FORCE_MAX_TUPLES {
                return Err(Error::InstanceTooLarge(format!("{count} ordered {b}-tuples of {n}")));
            }
            // enumerate in ascending-index order so ties keep the lexicographically first tuple
            let mut sorted = pool.to_vec();
            sorted.sort_unstable();
            let root = objective.state(&sorted, b);
            let mut best = None;
            let mut evals = 0;
            chain_search(&root, b, &mut best, &mut evals);
            let (_, indices) = best.unwrap_or((0.0, Vec::new()));
            let mut state = objective.state(&indices, b);
            for &i in &indices {
                state.commit(i)?;
            }
            Ok(SelectionResult::from_state(&state, evals, started))
        }
        BruteForceMode::Set => {
            let count = binomial(n, b);
            if count > BRUTE_FORCE_MAX_SUBSETS {
                return Err(Error::InstanceTooLarge(format!("{count} subsets of size {b} from {n}")));
            }
            let mut sorted = pool.to_vec();
            sorted.sort_unstable();
            let mut combo: Vec<usize> = (0..b).collect();
            let mut best: Option<(f64, Vec<usize>)> = None;
            let mut evals = 0u64;
            loop {
                let subset: Vec<usize> = combo.iter().map(|&c| sorted[c]).collect();
                let v = objective.set_value(&subset);
                evals += 1;
                if best.as_ref().is_none_or(|(bv, _)| v > *bv) {
                    best = Some((v, subset));
                }
                // next combination in lexicographic order
                let Some(i) = (0..b).rev().find(|&i| combo[i] != i + n - b) else {
                    break;
                };
                combo[i] += 1;
                for j in i + 1..b {
                    combo[j] = combo[j - 1] + 1;
                }
            }
            let (_, indices) = best.unwrap_or((0.0, Vec::new()));
            let mut state = objective.state(&indices, b);
            for &i in &indices {
                state.commit(i)?;
            }
            Ok(SelectionResult::from_state(&state, evals, started))
        }
    }
}

/// `(1 − 1/e)`.
pub fn greedy_bound() -> f64 {
    1.0 - (-1.0f64).exp()
}

/// Approximation factor guaranteed for the partitioned selection:
/// `(1 − 1/e)² / min(m, b) · (1 − 1/e − ε)`.
pub fn partitioned_bound(m: usize, b: usize, epsilon: f64) -> f64 {
    let g = greedy_bound();
    g * g / m.min(b) as f64 * (g - epsilon)
}
