//! Baseline batch samplers: uniform epoch shuffling and rank-based loss sampling.

use crate::rng::Rng;

/// Draw `b` distinct indices, favouring high-loss points.
///
/// Points are ranked by descending loss (ties broken randomly); rank `r` of
/// `n` gets weight `exponent^(−r/n)`, i.e. `1 / exp(ln(exponent) · r / n)`.
/// Sampling without replacement uses exponential keys `ln(u) / w`, which is
/// equivalent to successive weighted draws.
pub fn loss_based_sample(losses: &[f64], b: usize, rng: &mut Rng, exponent: f64) -> Vec<usize> {
    let n = losses.len();
    let b = b.min(n);
    let mut order: Vec<usize> = (0..n).collect();
    rng.shuffle(&mut order);
    order.sort_by(|&i, &j| losses[j].total_cmp(&losses[i]));
    let decay = exponent.max(1.0).ln() / n as f64;
    let mut keyed: Vec<(f64, usize)> = order
        .iter()
        .enumerate()
        .map(|(rank, &i)| {
            let weight = (-decay * rank as f64).exp();
            let u = 1.0 - rng.unit();
            (u.ln() / weight, i)
        })
        .collect();
    keyed.sort_by(|a, b| b.0.total_cmp(&a.0));
    keyed.truncate(b);
    keyed.into_iter().map(|(_, i)| i).collect()
}

/// Uniform sampling without replacement within an epoch: a fresh permutation
/// per epoch, consumed in consecutive chunks.
#[derive(Debug, Clone)]
pub struct EpochShuffler {
    order: Vec<usize>,
    cursor: usize,
}

impl EpochShuffler {
    pub fn new(n: usize) -> Self {
        Self {
            order: (0..n).collect(),
            cursor: n,
        }
    }

    pub fn start_epoch(&mut self, rng: &mut Rng) {
        self.order.sort_unstable();
        rng.shuffle(&mut self.order);
        self.cursor = 0;
    }

    pub fn next_batch(&mut self, b: usize) -> Vec<usize> {
        let end = (self.cursor + b).min(self.order.len());
        let batch = self.order[self.cursor..end].to_vec();
        self.cursor = end;
        batch
    }
}
