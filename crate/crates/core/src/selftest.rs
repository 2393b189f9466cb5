//! Built-in consistency checks run by the `selftest` command.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::distill::StudentEmbedding;
use crate::losses::{embedding_loss, focal_loss, grad_check, huber_loss, FocalParams, HuberParams};
use crate::metrics::{clear_metrics, idf1};
use crate::oracle::{brute_force_assignment, clear_oracle, idf1_oracle, random_small_scenario};
use crate::tracker::hungarian::{hungarian, CostMatrix};

#[derive(Debug, Clone, PartialEq)]
pub struct CheckResult {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

pub const GRAD_TOLERANCE: f64 = 1e-4;
const EPS: f64 = 1e-6;

/// Worst relative gradient error of the focal loss over `n` random points.
pub fn focal_grad_error(n: usize, seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let params = FocalParams::default();
    let mut worst: f64 = 0.0;
    for _ in 0..n {
        let positive = rng.random_bool(0.5);
        let p = rng.random_range(0.01..0.99);
        let f = |x: &[f64]| {
            let (l, g) = focal_loss(x[0], positive, &params);
            (l, vec![g])
        };
        worst = worst.max(grad_check(f, &[vec![p]], EPS));
    }
    worst
}

/// Same for the Huber loss, sampling residuals at least `10 * EPS` away from
/// the kink at `|r| = delta`.
pub fn huber_grad_error(n: usize, seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let params = HuberParams::default();
    let mut worst: f64 = 0.0;
    let mut done = 0;
    while done < n {
        let target = rng.random_range(-1.0..1.0);
        let r: f64 = rng.random_range(-0.5..0.5);
        if (r.abs() - params.delta).abs() < 10.0 * EPS || r.abs() < 10.0 * EPS {
            continue;
        }
        let f = |x: &[f64]| {
            let (l, g) = huber_loss(x[0], target, &params);
            (l, vec![g])
        };
        worst = worst.max(grad_check(f, &[vec![target + r]], EPS));
        done += 1;
    }
    worst
}

/// Same for the mean squared L2 embedding loss on batches of random vectors.
pub fn embedding_grad_error(n: usize, seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst: f64 = 0.0;
    for _ in 0..n {
        let pairs = rng.random_range(1..4usize);
        let dim = rng.random_range(1..9usize);
        let targets: Vec<StudentEmbedding> = (0..pairs)
            .map(|_| StudentEmbedding((0..dim).map(|_| rng.random_range(-1.0..1.0)).collect()))
            .collect();
        let x: Vec<f64> = (0..pairs * dim)
            .map(|_| rng.random_range(-1.0..1.0))
            .collect();
        let f = |x: &[f64]| {
            let preds: Vec<StudentEmbedding> = x
                .chunks(dim)
                .map(|c| StudentEmbedding(c.to_vec()))
                .collect();
            let (l, g) = embedding_loss(&preds, &targets).expect("matching shapes");
            (l, g.concat())
        };
        worst = worst.max(grad_check(f, &[x], EPS));
    }
    worst
}

/// Number of random matrices (each side at most `max_dim`) whose Hungarian
/// cost differs from the exhaustive optimum.
pub fn hungarian_mismatches(trials: usize, max_dim: usize, seed: u64) -> usize {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut bad = 0;
    for _ in 0..trials {
        let n = rng.random_range(1..=max_dim);
        let m = rng.random_range(1..=max_dim);
        let rows: Vec<Vec<f64>> = (0..n)
            .map(|_| (0..m).map(|_| rng.random_range(0..100) as f64).collect())
            .collect();
        let c = CostMatrix::from_rows(&rows);
        let a = hungarian(&c);
        let (best, size) = brute_force_assignment(&c);
        if a.len() != size || c.total(&a) != best {
            bad += 1;
        }
    }
    bad
}

/// Number of random small scenarios where CLEAR or IDF1 disagree with the
/// exhaustive oracles.
pub fn metric_mismatches(trials: usize, seed: u64) -> usize {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut bad = 0;
    for _ in 0..trials {
        let (g, h) = random_small_scenario(&mut rng);
        let fast = clear_metrics(&g, &h, 0.5);
        let slow = clear_oracle(&g, &h, 0.5);
        let same = (fast.fp, fast.fn_, fast.idsw, fast.mt, fast.ml)
            == (slow.fp, slow.fn_, slow.idsw, slow.mt, slow.ml)
            && fast.mota == slow.mota()
            && idf1(&g, &h, 0.5).idf1 == idf1_oracle(&g, &h, 0.5);
        if !same {
            bad += 1;
        }
    }
    bad
}

pub fn run_all(seed: u64) -> Vec<CheckResult> {
    let grad = |name, worst: f64| CheckResult {
        name,
        passed: worst < GRAD_TOLERANCE,
        detail: format!("max relative error {worst:.3e}"),
    };
    let count = |name, bad: usize, of: usize| CheckResult {
        name,
        passed: bad == 0,
        detail: format!("{bad} of {of} disagree"),
    };
    vec![
        grad("focal gradient", focal_grad_error(100, seed)),
        grad("huber gradient", huber_grad_error(100, seed)),
        grad("embedding gradient", embedding_grad_error(100, seed)),
        count(
            "hungarian vs exhaustive",
            hungarian_mismatches(200, 6, seed),
            200,
        ),
        count("metrics vs exhaustive", metric_mismatches(200, seed), 200),
    ]
}
