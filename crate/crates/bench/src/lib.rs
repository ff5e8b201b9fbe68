//! Seeded fixtures for the kernel benchmarks.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rankood::rank_stats::ExplicitRpm;
use rankood::RankTarget;

/// Column-stochastic `candidates x ranks` table for predicted class 0.
pub fn random_rpm(candidates: usize, ranks: usize, seed: u64) -> ExplicitRpm {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut p = vec![vec![0.0; ranks]; candidates];
    for j in 0..ranks {
        let raw: Vec<f64> = (0..candidates).map(|_| rng.gen()).collect();
        let s: f64 = raw.iter().sum();
        for (row, v) in p.iter_mut().zip(raw) {
            row[j] = v / s;
        }
    }
    ExplicitRpm::new(0, (1..=candidates).collect(), &p, 1).expect("valid by construction")
}

/// Logits plus a full target over a shuffled class order.
pub fn random_ranking(classes: usize, seed: u64) -> (Vec<f64>, RankTarget) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let logits = (0..classes).map(|_| rng.gen_range(-4.0..4.0)).collect();
    let mut order: Vec<usize> = (0..classes).collect();
    for i in (1..classes).rev() {
        order.swap(i, rng.gen_range(0..=i));
    }
    (logits, RankTarget::full(order).expect("distinct classes"))
}

/// Two overlapping score samples.
pub fn random_scores(n: usize, seed: u64) -> (Vec<f64>, Vec<f64>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let id = (0..n).map(|_| rng.gen_range(0.0..1.5)).collect();
    let ood = (0..n).map(|_| rng.gen_range(-0.5..1.0)).collect();
    (id, ood)
}
