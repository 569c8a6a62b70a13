//! Seeded random problem instances.

use probattn::{Matrix, MixtureModel, PriorSpec, QueryBatch, Result};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Independent generator for instance `index` of a suite.
pub fn rng_for(seed: u64, suite: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream((suite << 32) | index);
    rng
}

pub fn matrix(rng: &mut impl Rng, rows: usize, cols: usize, range: f64) -> Matrix {
    let data = (0..rows * cols).map(|_| rng.random_range(-range..=range)).collect();
    Matrix::from_vec(rows, cols, data).expect("sizes agree")
}

/// Row-stochastic matrix with a random zero pattern (the diagonal always kept).
pub fn stochastic(rng: &mut impl Rng, n: usize, sparse: bool) -> Matrix {
    let mut pi = Matrix::zeros(n, n);
    for i in 0..n {
        let row = pi.row_mut(i);
        for (j, p) in row.iter_mut().enumerate() {
            let keep = !sparse || i == j || rng.random_bool(0.6);
            *p = if keep { rng.random_range(0.05..1.0) } else { 0.0 };
        }
        let s: f64 = row.iter().sum();
        row.iter_mut().for_each(|p| *p /= s);
    }
    pi
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PriorKind {
    Uniform,
    Magnitude,
    Explicit,
    SparseExplicit,
}

impl PriorKind {
    pub const ALL: [PriorKind; 4] = [
        PriorKind::Uniform,
        PriorKind::Magnitude,
        PriorKind::Explicit,
        PriorKind::SparseExplicit,
    ];

    pub fn build(self, rng: &mut impl Rng, n: usize) -> PriorSpec {
        match self {
            PriorKind::Uniform => PriorSpec::Uniform,
            PriorKind::Magnitude => PriorSpec::Magnitude,
            PriorKind::Explicit => PriorSpec::Explicit { pi: stochastic(rng, n, false) },
            PriorKind::SparseExplicit => PriorSpec::Explicit { pi: stochastic(rng, n, true) },
        }
    }
}

pub struct Shape {
    pub n: usize,
    pub d: usize,
    pub m: usize,
}

impl Shape {
    pub fn random(rng: &mut impl Rng, max_n: usize, max_d: usize, max_m: usize) -> Shape {
        Shape {
            n: rng.random_range(1..=max_n),
            d: rng.random_range(1..=max_d),
            m: rng.random_range(1..=max_m),
        }
    }
}

/// A model with per-unit precisions in `[0.3, 2]` and entries in `[-2, 2]`.
/// With `zero_betas`, some value precisions are exactly zero (never all).
pub fn model(rng: &mut impl Rng, shape: &Shape, prior: PriorKind, zero_betas: bool) -> Result<MixtureModel> {
    let keys = matrix(rng, shape.n, shape.d, 2.0);
    let means = matrix(rng, shape.n, shape.m, 2.0);
    let alphas = (0..shape.n).map(|_| rng.random_range(0.3..2.0)).collect();
    let mut betas: Vec<f64> = (0..shape.n)
        .map(|_| {
            if zero_betas && rng.random_bool(0.3) {
                0.0
            } else {
                rng.random_range(0.3..2.0)
            }
        })
        .collect();
    if betas.iter().all(|&b| b == 0.0) {
        betas[0] = 1.0;
    }
    let prior = prior.build(rng, shape.n);
    MixtureModel::new(keys, alphas, means, betas, prior)
}

pub fn queries(rng: &mut impl Rng, count: usize, d: usize) -> QueryBatch {
    QueryBatch::new(matrix(rng, count, d, 2.0))
}
