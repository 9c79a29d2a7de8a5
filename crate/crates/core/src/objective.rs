//! The four-term batch objective and its incremental selection state.
//!
//! A marginal gain is `λ1·U(a) + λ2·red(a, S) + λ3·MC(a) + λ4·FM(a | S)`, where
//! `red(a, S)` is the normalized minimum distance from `a` to the selection
//! (`r_max` for an empty selection) and `FM` is either the cached modular score
//! or the set-mode square-root gain.

use std::collections::HashMap;

use crate::config::{FmMode, ObjectiveWeights};
use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::scoring::{feature_match_set_gain, ScoreCache};

/// Read-only view tying a dataset, its score cache and the weights together.
/// Cheap to copy; acts as the factory for [`SelectionState`]s.
#[derive(Debug, Clone, Copy)]
pub struct Objective<'a> {
    dataset: &'a Dataset,
    cache: &'a ScoreCache,
    weights: &'a ObjectiveWeights,
}

impl<'a> Objective<'a> {
    pub fn new(dataset: &'a Dataset, cache: &'a ScoreCache, weights: &'a ObjectiveWeights) -> Result<Self> {
        if cache.len() != dataset.len() {
            return Err(Error::DimensionMismatch(format!(
                "score cache covers {} points, dataset has {}",
                cache.len(),
                dataset.len()
            )));
        }
        Ok(Self {
            dataset,
            cache,
            weights,
        })
    }

    pub fn dataset(&self) -> &'a Dataset {
        self.dataset
    }

    pub fn cache(&self) -> &'a ScoreCache {
        self.cache
    }

    pub fn weights(&self) -> &'a ObjectiveWeights {
        self.weights
    }

    pub fn len(&self) -> usize {
        self.dataset.len()
    }

    pub fn is_empty(&self) -> bool {
        self.dataset.is_empty()
    }

    #[inline]
    pub(crate) fn row(&self, i: usize) -> &'a [f64] {
        self.dataset.feature(i).to_slice().expect("row-major features")
    }

    #[inline]
    fn fixed_row(&self, i: usize) -> Option<&'a [f64]> {
        self.dataset
            .fixed_features()
            .map(|ff| ff.row(i).to_slice().expect("row-major fixed features"))
    }

    /// Raw metric distance between two points.
    #[inline]
    pub fn distance(&self, i: usize, j: usize) -> f64 {
        self.cache.metric.distance(self.row(i), self.row(j))
    }

    /// Distance divided by the redundancy scale, clamped to `[0, 1]`.
    #[inline]
    pub fn normalized_distance(&self, raw: f64) -> f64 {
        (raw / self.cache.redundancy_scale).clamp(0.0, 1.0)
    }

    /// Terms that do not depend on the selection.
    #[inline]
    fn modular_part(&self, a: usize) -> f64 {
        let w = self.weights;
        let mut g = w.lambda1 * self.cache.u_scores[a] + w.lambda3 * self.cache.mc_scores[a];
        if w.fm_mode == FmMode::Modular {
            g += w.lambda4 * self.cache.fm_scores[a];
        }
        g
    }

    /// Fresh state over `pool` that may hold up to `capacity` points.
    pub fn state(&self, pool: &[usize], capacity: usize) -> SelectionState<'a> {
        SelectionState::new(*self, pool, capacity)
    }

    /// State over the whole dataset.
    pub fn full_state(&self, capacity: usize) -> SelectionState<'a> {
        let pool: Vec<usize> = (0..self.len()).collect();
        self.state(&pool, capacity)
    }

    /// Sum of marginal gains when inserting `sequence` in order, starting empty.
    pub fn chain_value(&self, sequence: &[usize]) -> Result<f64> {
        let mut seen = std::collections::HashSet::with_capacity(sequence.len());
        for &i in sequence {
            if i >= self.len() {
                return Err(Error::NotInPool(i));
            }
            if !seen.insert(i) {
                return Err(Error::DuplicateIndex(i));
            }
        }
        let mut state = self.state(sequence, sequence.len());
        for &i in sequence {
            state.commit(i)?;
        }
        Ok(state.chain_value())
    }

    /// Order-free value: modular sums, set-mode feature match on the summed
    /// fixed features, and `λ2 · Σ_i min_{j≠i}` normalized distance (a lone
    /// point contributes `r_max`). Empty sets are worth 0.
    pub fn set_value(&self, set: &[usize]) -> f64 {
        if set.is_empty() {
            return 0.0;
        }
        let w = self.weights;
        let mut value: f64 = set.iter().map(|&a| self.modular_part(a)).sum();
        if w.fm_mode == FmMode::Set && w.lambda4 != 0.0 {
            if let Some(ff) = self.dataset.fixed_features() {
                let mut acc = vec![0.0; ff.ncols()];
                for &a in set {
                    for (s, m) in acc.iter_mut().zip(ff.row(a)) {
                        *s += m;
                    }
                }
                let total: f64 = acc.iter().map(|s| s.sqrt()).sum();
                value += w.lambda4 * total / self.cache.fm_scale;
            }
        }
        if w.lambda2 != 0.0 {
            let red: f64 = if set.len() == 1 {
                w.r_max
            } else {
                set.iter()
                    .map(|&i| {
                        let nearest = set
                            .iter()
                            .filter(|&&j| j != i)
                            .map(|&j| self.distance(i, j))
                            .fold(f64::INFINITY, f64::min);
                        self.normalized_distance(nearest)
                    })
                    .sum()
            };
            value += w.lambda2 * red;
        }
        value
    }
}

/// One committed pick.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TraceStep {
    pub index: usize,
    pub gain: f64,
    pub chain_value: f64,
}

/// Incremental state of a greedy-style selection over a fixed candidate pool.
///
/// `min_dist` holds, for every unselected pool member, its exact minimum raw
/// distance to the selection; every commit refreshes it with one distance
/// evaluation per unselected member.
#[derive(Debug, Clone)]
pub struct SelectionState<'a> {
    objective: Objective<'a>,
    pool: Vec<usize>,
    position: HashMap<usize, usize>,
    min_dist: Vec<f64>,
    chosen: Vec<bool>,
    selected: Vec<usize>,
    fm_acc: Vec<f64>,
    chain_value: f64,
    capacity: usize,
    trace: Vec<TraceStep>,
}

impl<'a> SelectionState<'a> {
    fn new(objective: Objective<'a>, pool: &[usize], capacity: usize) -> Self {
        let position = pool.iter().enumerate().map(|(p, &i)| (i, p)).collect();
        let fm_dims = match objective.weights.fm_mode {
            FmMode::Set => objective.dataset.n_fixed(),
            FmMode::Modular => 0,
        };
        Self {
            objective,
            pool: pool.to_vec(),
            position,
            min_dist: vec![f64::INFINITY; pool.len()],
            chosen: vec![false; pool.len()],
            selected: Vec::with_capacity(capacity),
            fm_acc: vec![0.0; fm_dims],
            chain_value: 0.0,
            capacity,
            trace: Vec::with_capacity(capacity),
        }
    }

    pub fn objective(&self) -> Objective<'a> {
        self.objective
    }

    pub fn pool(&self) -> &[usize] {
        &self.pool
    }

    pub fn selected(&self) -> &[usize] {
        &self.selected
    }

    pub fn chain_value(&self) -> f64 {
        self.chain_value
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn is_full(&self) -> bool {
        self.selected.len() >= self.capacity
    }

    pub fn trace(&self) -> &[TraceStep] {
        &self.trace
    }

    pub fn fm_accumulator(&self) -> &[f64] {
        &self.fm_acc
    }

    fn position_of(&self, a: usize) -> Result<usize> {
        self.position.get(&a).copied().ok_or(Error::NotInPool(a))
    }

    /// Current minimum raw distance from pool member `a` to the selection;
    /// `None` while nothing is selected.
    pub fn min_dist(&self, a: usize) -> Result<Option<f64>> {
        let p = self.position_of(a)?;
        Ok((!self.selected.is_empty()).then_some(self.min_dist[p]))
    }

    #[inline]
    pub(crate) fn is_chosen_at(&self, pos: usize) -> bool {
        self.chosen[pos]
    }

    #[inline]
    pub(crate) fn index_at(&self, pos: usize) -> usize {
        self.pool[pos]
    }

    /// Redundancy contribution before weighting.
    #[inline]
    fn redundancy_at(&self, pos: usize) -> f64 {
        if self.selected.is_empty() {
            self.objective.weights.r_max
        } else {
            self.objective.normalized_distance(self.min_dist[pos])
        }
    }

    #[inline]
    pub(crate) fn gain_at(&self, pos: usize) -> f64 {
        let obj = &self.objective;
        let w = obj.weights;
        let a = self.pool[pos];
        let mut g = obj.modular_part(a);
        if w.lambda2 != 0.0 {
            g += w.lambda2 * self.redundancy_at(pos);
        }
        if w.fm_mode == FmMode::Set && w.lambda4 != 0.0 {
            if let Some(row) = obj.fixed_row(a) {
                g += w.lambda4 * feature_match_set_gain(&self.fm_acc, row) / obj.cache.fm_scale;
            }
        }
        g
    }

    /// Gain of adding pool member `a`; does not change the state.
    pub fn marginal_gain(&self, a: usize) -> Result<f64> {
        let p = self.position_of(a)?;
        if self.chosen[p] {
            return Err(Error::AlreadySelected(a));
        }
        Ok(self.gain_at(p))
    }

    /// Redundancy term alone (unweighted) for pool member `a`.
    pub fn redundancy_gain(&self, a: usize) -> Result<f64> {
        let p = self.position_of(a)?;
        Ok(self.redundancy_at(p))
    }

    pub(crate) fn commit_at(&mut self, pos: usize) -> f64 {
        debug_assert!(!self.chosen[pos]);
        let gain = self.gain_at(pos);
        let a = self.pool[pos];
        self.chosen[pos] = true;
        self.selected.push(a);
        self.chain_value += gain;
        self.trace.push(TraceStep {
            index: a,
            gain,
            chain_value: self.chain_value,
        });

        let obj = self.objective;
        let xa = obj.row(a);
        let metric = obj.cache.metric;
        for (p, &i) in self.pool.iter().enumerate() {
            if !self.chosen[p] {
                let d = metric.distance(obj.row(i), xa);
                if d < self.min_dist[p] {
                    self.min_dist[p] = d;
                }
            }
        }
        if !self.fm_acc.is_empty() {
            if let Some(row) = obj.fixed_row(a) {
                for (s, m) in self.fm_acc.iter_mut().zip(row) {
                    *s += m;
                }
            }
        }
        gain
    }

    /// Add pool member `a`, returning the gain credited to the chain value.
    pub fn commit(&mut self, a: usize) -> Result<f64> {
        let p = self.position_of(a)?;
        if self.chosen[p] {
            return Err(Error::AlreadySelected(a));
        }
        if self.is_full() {
            return Err(Error::CapacityExceeded(self.capacity));
        }
        Ok(self.commit_at(p))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::MetricChoice;
    use crate::metrics::MetricKind;
    use crate::rng::Rng;
    use crate::synth::random_instance;
    use approx::assert_abs_diff_eq;
    use ndarray::{array, Array1};

    fn cache_for(ds: &Dataset, w: &ObjectiveWeights) -> ScoreCache {
        ScoreCache::compute(ds, w, 0, &Rng::new(0)).unwrap()
    }

    fn duplicate_pair() -> Dataset {
        Dataset::new(
            array![[0.0, 0.0], [0.0, 0.0], [10.0, 0.0]],
            array![[0.5, 0.5], [0.5, 0.5], [0.5, 0.5]],
            vec![0, 0, 1],
            None,
        )
        .unwrap()
    }

    #[test]
    fn single_term_gain_on_empty_state() {
        let ds = random_instance(1, 6, 3);
        let w = ObjectiveWeights::with_lambdas(1.0, 0.0, 0.0, 0.0);
        let mut cache = cache_for(&ds, &w);
        cache.u_scores[2] = 0.7;
        let obj = Objective::new(&ds, &cache, &w).unwrap();
        let state = obj.full_state(2);
        assert_abs_diff_eq!(state.marginal_gain(2).unwrap(), 0.7, epsilon = 1e-15);
    }

    #[test]
    fn duplicate_has_zero_redundancy() {
        let ds = duplicate_pair();
        let w = ObjectiveWeights::with_lambdas(0.0, 1.0, 0.0, 0.0);
        let cache = cache_for(&ds, &w);
        let obj = Objective::new(&ds, &cache, &w).unwrap();
        let mut state = obj.full_state(2);
        let first = state.commit(0).unwrap();
        assert_eq!(first, 1.0);
        assert_eq!(state.marginal_gain(1).unwrap(), 0.0);
        state.commit(1).unwrap();
        assert_eq!(state.chain_value(), 1.0);
        assert!(matches!(state.commit(2), Err(Error::CapacityExceeded(2))));
        assert!(matches!(state.marginal_gain(0), Err(Error::AlreadySelected(0))));
        assert_eq!(obj.set_value(&[0, 1]), 0.0);
    }

    /// Independent recomputation of every term from raw data.
    fn direct_gain(ds: &Dataset, w: &ObjectiveWeights, a: usize, selected: &[usize]) -> f64 {
        let n = ds.len();
        let entropy = |i: usize| -> f64 {
            ds.probs()
                .row(i)
                .iter()
                .filter(|p| **p > 0.0)
                .map(|p| -p * p.ln())
                .sum()
        };
        let mean: Array1<f64> = ds
            .features()
            .rows()
            .into_iter()
            .fold(Array1::zeros(ds.dim()), |acc, r| acc + r)
            / n as f64;
        let mc = |i: usize| -> f64 {
            let x = ds.feature(i);
            let cos = x.dot(&mean) / (x.dot(&x).sqrt() * mean.dot(&mean).sqrt());
            (1.0 + cos) / 2.0
        };
        let fm = |i: usize| -> f64 { ds.fixed_features().unwrap().row(i).iter().map(|v| v.sqrt()).sum() };
        let norm = |f: &dyn Fn(usize) -> f64, i: usize| -> f64 {
            let all: Vec<f64> = (0..n).map(f).collect();
            let lo = all.iter().cloned().fold(f64::INFINITY, f64::min);
            let hi = all.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            (f(i) - lo) / (hi - lo)
        };
        let euclid = |i: usize, j: usize| -> f64 {
            ds.feature(i)
                .iter()
                .zip(ds.feature(j).iter())
                .map(|(x, y)| (x - y).powi(2))
                .sum::<f64>()
                .sqrt()
        };
        let mut scale = 0.0f64;
        for i in 0..n {
            for j in i + 1..n {
                scale = scale.max(euclid(i, j));
            }
        }
        let red = if selected.is_empty() {
            w.r_max
        } else {
            (selected.iter().map(|&j| euclid(a, j)).fold(f64::INFINITY, f64::min) / scale).min(1.0)
        };
        w.lambda1 * norm(&entropy, a) + w.lambda2 * red + w.lambda3 * norm(&mc, a) + w.lambda4 * norm(&fm, a)
    }

    #[test]
    fn planar_gain_matches_direct_formula() {
        let ds = random_instance(77, 5, 2);
        let w = ObjectiveWeights::with_lambdas(0.25, 0.25, 0.25, 0.25);
        let cache = cache_for(&ds, &w);
        let obj = Objective::new(&ds, &cache, &w).unwrap();
        for s in 0..5 {
            let mut state = obj.full_state(2);
            state.commit(s).unwrap();
            for a in (0..5).filter(|&a| a != s) {
                assert_abs_diff_eq!(
                    state.marginal_gain(a).unwrap(),
                    direct_gain(&ds, &w, a, &[s]),
                    epsilon = 1e-12
                );
            }
        }
        // first pick
        let state = obj.full_state(1);
        for a in 0..5 {
            assert_abs_diff_eq!(
                state.marginal_gain(a).unwrap(),
                direct_gain(&ds, &w, a, &[]),
                epsilon = 1e-12
            );
        }
    }

    #[test]
    fn min_dist_tracks_brute_force() {
        for seed in 0..20 {
            let ds = random_instance(seed, 15, 4);
            let metric = [
                MetricChoice::Euclidean,
                MetricChoice::Cosine,
                MetricChoice::Correlation,
                MetricChoice::Gaussian,
            ][seed as usize % 4];
            let w = ObjectiveWeights {
                metric,
                ..Default::default()
            };
            let cache = cache_for(&ds, &w);
            let obj = Objective::new(&ds, &cache, &w).unwrap();
            let mut rng = Rng::new(seed);
            let mut order: Vec<usize> = (0..15).collect();
            rng.shuffle(&mut order);
            let mut state = obj.full_state(6);
            for k in 0..6 {
                state.commit(order[k]).unwrap();
                let picked = &order[..=k];
                for &c in &order[k + 1..] {
                    let brute = picked
                        .iter()
                        .map(|&j| cache.metric.distance(obj.row(c), obj.row(j)))
                        .fold(f64::INFINITY, f64::min);
                    assert_abs_diff_eq!(state.min_dist(c).unwrap().unwrap(), brute, epsilon = 1e-12);
                }
            }
        }
    }

    #[test]
    fn chain_value_examples() {
        let ds = random_instance(5, 8, 3);
        let w = ObjectiveWeights::default();
        let cache = cache_for(&ds, &w);
        let obj = Objective::new(&ds, &cache, &w).unwrap();
        assert_eq!(obj.chain_value(&[]).unwrap(), 0.0);
        let a = 3;
        let expected = w.lambda1 * cache.u_scores[a]
            + w.lambda2 * w.r_max
            + w.lambda3 * cache.mc_scores[a]
            + w.lambda4 * cache.fm_scores[a];
        assert_abs_diff_eq!(obj.chain_value(&[a]).unwrap(), expected, epsilon = 1e-12);
        assert_abs_diff_eq!(obj.set_value(&[a]), expected, epsilon = 1e-12);
        // Pairs already differ: the chain credits r_max + d, the set 2d.
        let d = obj.normalized_distance(obj.distance(a, 6));
        assert_abs_diff_eq!(
            obj.chain_value(&[a, 6]).unwrap() - obj.set_value(&[a, 6]),
            w.lambda2 * (w.r_max - d),
            epsilon = 1e-12
        );
        assert!(matches!(obj.chain_value(&[1, 2, 1]), Err(Error::DuplicateIndex(1))));
    }

    #[test]
    fn set_value_matches_direct_formula() {
        let ds = random_instance(9, 8, 3);
        let mut rng = Rng::new(4);
        for fm_mode in [FmMode::Modular, FmMode::Set] {
            let mut w = ObjectiveWeights::with_lambdas(0.3, 0.4, 0.2, 0.5);
            w.fm_mode = fm_mode;
            let cache = cache_for(&ds, &w);
            let obj = Objective::new(&ds, &cache, &w).unwrap();
            for _ in 0..10 {
                let mut all: Vec<usize> = (0..8).collect();
                rng.shuffle(&mut all);
                let s = &all[..4];
                let modular: f64 = s
                    .iter()
                    .map(|&i| {
                        w.lambda1 * cache.u_scores[i]
                            + w.lambda3 * cache.mc_scores[i]
                            + if fm_mode == FmMode::Modular {
                                w.lambda4 * cache.fm_scores[i]
                            } else {
                                0.0
                            }
                    })
                    .sum();
                let fm_set = if fm_mode == FmMode::Set {
                    let ff = ds.fixed_features().unwrap();
                    let total: f64 = (0..ff.ncols())
                        .map(|u| s.iter().map(|&i| ff[[i, u]]).sum::<f64>().sqrt())
                        .sum();
                    w.lambda4 * total / cache.fm_scale
                } else {
                    0.0
                };
                let mut red = 0.0;
                for &i in s {
                    let mut best = f64::INFINITY;
                    for &j in s {
                        if i != j {
                            let d: f64 = ds
                                .feature(i)
                                .iter()
                                .zip(ds.feature(j).iter())
                                .map(|(x, y)| (x - y).powi(2))
                                .sum::<f64>()
                                .sqrt();
                            best = best.min(d);
                        }
                    }
                    red += (best / cache.redundancy_scale).min(1.0);
                }
                assert_abs_diff_eq!(obj.set_value(s), modular + fm_set + w.lambda2 * red, epsilon = 1e-12);
            }
        }
    }

    #[test]
    fn gains_nonnegative_and_chain_monotone() {
        for seed in 0..30 {
            let ds = random_instance(seed, 12, 3);
            let w = ObjectiveWeights {
                fm_mode: if seed % 2 == 0 { FmMode::Set } else { FmMode::Modular },
                ..Default::default()
            };
            let cache = cache_for(&ds, &w);
            let obj = Objective::new(&ds, &cache, &w).unwrap();
            let mut state = obj.full_state(12);
            let mut last = 0.0;
            for a in 0..12 {
                for b in a..12 {
                    assert!(state.marginal_gain(b).unwrap() >= 0.0);
                }
                state.commit(a).unwrap();
                assert!(state.chain_value() >= last);
                last = state.chain_value();
            }
        }
    }

    #[test]
    fn set_mode_gains_diminish() {
        for seed in 0..30 {
            let ds = random_instance(100 + seed, 10, 3);
            let mut w = ObjectiveWeights::with_lambdas(0.3, 0.6, 0.2, 0.7);
            w.fm_mode = FmMode::Set;
            let cache = cache_for(&ds, &w);
            let obj = Objective::new(&ds, &cache, &w).unwrap();
            let mut small = obj.full_state(10);
            let mut big = obj.full_state(10);
            small.commit(0).unwrap();
            for i in 0..4 {
                big.commit(i).unwrap();
            }
            for a in 4..10 {
                assert!(small.marginal_gain(a).unwrap() >= big.marginal_gain(a).unwrap() - 1e-12);
            }
        }
    }

    #[test]
    fn objective_rejects_mismatched_cache() {
        let ds = random_instance(1, 5, 2);
        let other = random_instance(1, 6, 2);
        let w = ObjectiveWeights::default();
        let cache = cache_for(&other, &w);
        assert!(Objective::new(&ds, &cache, &w).is_err());
        assert!(matches!(cache.metric, MetricKind::Euclidean));
    }
}
