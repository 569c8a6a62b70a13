//! The generative mixture over queries and values.
//!
//! Unit `j` owns a key `ξ_j` with precision `α_j` for the query Gaussian and an
//! expected value `μ_j` with precision `β_j` for the value Gaussian. A query
//! issued at unit `i` picks unit `j` with prior probability `π_ij`, which is
//! described by [`PriorSpec`].

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::numeric::softmax_in_place;
use crate::position::{GridShape, RelativePE};

/// How the mixing proportions `π_ij` are obtained.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "variant", rename_all = "snake_case")]
pub enum PriorSpec {
    /// `π_ij = 1/n`.
    Uniform,
    /// `π_j ∝ exp(α_j/2 ‖ξ_j‖² + β_j/2 ‖μ_j‖²)`, derived from the current parameters.
    /// This is the prior under which MAP value inference reduces to dot-product attention.
    Magnitude,
    /// Row-stochastic `n×n` matrix.
    Explicit { pi: Matrix },
    /// Prior tied to the relative position of units on a grid.
    PositionAware(PositionPrior),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum PositionPrior {
    /// Relative position embeddings entering both the query likelihood and the prior.
    Embedding(RelativePE),
    /// `π_ij ∝ exp(-dist(i, j) / scale)` with Euclidean grid distance.
    GridDistance(GridDistancePrior),
}

/// Distance-decay prior over grid units.
///
/// With `radius = Some(r)` the support of row `i` is the square window of
/// Chebyshev radius `r` around `i`, clipped at the grid border; units outside
/// the window have prior probability exactly zero.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridDistancePrior {
    pub grid: GridShape,
    pub scale: f64,
    pub radius: Option<usize>,
}

impl GridDistancePrior {
    pub fn new(grid: GridShape, scale: f64, radius: Option<usize>) -> Result<Self> {
        if !(scale > 0.0 && scale.is_finite()) {
            return Err(Error::InvalidPrior(format!(
                "grid distance scale must be positive, got {scale}"
            )));
        }
        Ok(GridDistancePrior {
            grid,
            scale,
            radius,
        })
    }
}

impl PriorSpec {
    /// `π_ij ∝ exp(-dist(i, j) / scale)` over every pair of grid units.
    pub fn grid_distance(grid: GridShape, scale: f64) -> Result<Self> {
        Ok(PriorSpec::PositionAware(PositionPrior::GridDistance(
            GridDistancePrior::new(grid, scale, None)?,
        )))
    }

    /// Windowed variant of [`PriorSpec::grid_distance`].
    pub fn local_grid_distance(grid: GridShape, scale: f64, radius: usize) -> Result<Self> {
        Ok(PriorSpec::PositionAware(PositionPrior::GridDistance(
            GridDistancePrior::new(grid, scale, Some(radius))?,
        )))
    }

    /// Materializes a distance-decay prior as an explicit row-stochastic matrix.
    pub fn explicit_from_distances(distances: &Matrix) -> Result<Self> {
        if distances.rows() != distances.cols() {
            return Err(Error::InvalidPrior("distance matrix must be square".into()));
        }
        let mut pi = distances.clone();
        for i in 0..pi.rows() {
            let row = pi.row_mut(i);
            for x in row.iter_mut() {
                *x = -*x;
            }
            softmax_in_place(row).ok_or(Error::AllZeroRow { row: i })?;
        }
        Ok(PriorSpec::Explicit { pi })
    }
}

/// Per-unit parameters of the query/value mixture. Immutable once built;
/// adaptation produces new models.
#[derive(Clone, Debug, PartialEq)]
pub struct MixtureModel {
    keys: Matrix,
    key_precisions: Vec<f64>,
    value_means: Matrix,
    value_precisions: Vec<f64>,
    prior: PriorSpec,
}

impl MixtureModel {
    pub fn new(
        keys: Matrix,
        key_precisions: Vec<f64>,
        value_means: Matrix,
        value_precisions: Vec<f64>,
        prior: PriorSpec,
    ) -> Result<Self> {
        let n = keys.rows();
        if n == 0 {
            return Err(Error::EmptyModel);
        }
        let check_len = |what, got: usize| {
            if got == n {
                Ok(())
            } else {
                Err(Error::DimensionMismatch {
                    what,
                    expected: n,
                    got,
                })
            }
        };
        check_len("key precisions", key_precisions.len())?;
        check_len("value means", value_means.rows())?;
        check_len("value precisions", value_precisions.len())?;
        if !keys.all_finite() || !value_means.all_finite() {
            return Err(Error::InvalidConfig(
                "keys and value means must be finite".into(),
            ));
        }
        for (unit, &a) in key_precisions.iter().enumerate() {
            if !(a > 0.0 && a.is_finite()) {
                return Err(Error::InvalidPrecision {
                    which: "key",
                    unit,
                    value: a,
                });
            }
        }
        for (unit, &b) in value_precisions.iter().enumerate() {
            if !(b >= 0.0 && b.is_finite()) {
                return Err(Error::InvalidPrecision {
                    which: "value",
                    unit,
                    value: b,
                });
            }
        }
        validate_prior(&prior, n, keys.cols())?;
        Ok(MixtureModel {
            keys,
            key_precisions,
            value_means,
            value_precisions,
            prior,
        })
    }

    /// Model in the constrained regime: shared precisions and the magnitude prior.
    pub fn constrained(keys: Matrix, value_means: Matrix, alpha: f64, beta: f64) -> Result<Self> {
        let n = keys.rows();
        MixtureModel::new(
            keys,
            vec![alpha; n],
            value_means,
            vec![beta; n],
            PriorSpec::Magnitude,
        )
    }

    #[inline]
    pub fn n(&self) -> usize {
        self.keys.rows()
    }

    #[inline]
    pub fn d(&self) -> usize {
        self.keys.cols()
    }

    #[inline]
    pub fn m(&self) -> usize {
        self.value_means.cols()
    }

    pub fn keys(&self) -> &Matrix {
        &self.keys
    }

    #[inline]
    pub fn key(&self, j: usize) -> &[f64] {
        self.keys.row(j)
    }

    pub fn key_precisions(&self) -> &[f64] {
        &self.key_precisions
    }

    #[inline]
    pub fn alpha(&self, j: usize) -> f64 {
        self.key_precisions[j]
    }

    pub fn value_means(&self) -> &Matrix {
        &self.value_means
    }

    #[inline]
    pub fn value_mean(&self, j: usize) -> &[f64] {
        self.value_means.row(j)
    }

    pub fn value_precisions(&self) -> &[f64] {
        &self.value_precisions
    }

    #[inline]
    pub fn beta(&self, j: usize) -> f64 {
        self.value_precisions[j]
    }

    pub fn prior(&self) -> &PriorSpec {
        &self.prior
    }

    pub fn with_keys(&self, keys: Matrix) -> Result<Self> {
        self.rebuild(|m| m.keys = keys)
    }

    pub fn with_key_precisions(&self, alphas: Vec<f64>) -> Result<Self> {
        self.rebuild(|m| m.key_precisions = alphas)
    }

    pub fn with_value_means(&self, means: Matrix) -> Result<Self> {
        self.rebuild(|m| m.value_means = means)
    }

    pub fn with_value_precisions(&self, betas: Vec<f64>) -> Result<Self> {
        self.rebuild(|m| m.value_precisions = betas)
    }

    pub fn with_prior(&self, prior: PriorSpec) -> Result<Self> {
        self.rebuild(|m| m.prior = prior)
    }

    fn rebuild(&self, f: impl FnOnce(&mut MixtureModel)) -> Result<Self> {
        let mut next = self.clone();
        f(&mut next);
        MixtureModel::new(
            next.keys,
            next.key_precisions,
            next.value_means,
            next.value_precisions,
            next.prior,
        )
    }

    /// Common key precision, if all units share one.
    pub fn uniform_alpha(&self) -> Option<f64> {
        uniform(&self.key_precisions)
    }

    /// Common value precision, if all units share one.
    pub fn uniform_beta(&self) -> Option<f64> {
        uniform(&self.value_precisions)
    }

    pub(crate) fn check_unit(&self, j: usize) -> Result<()> {
        if j < self.n() {
            Ok(())
        } else {
            Err(Error::UnitOutOfRange {
                index: j,
                len: self.n(),
            })
        }
    }
}

fn uniform(xs: &[f64]) -> Option<f64> {
    let first = *xs.first()?;
    xs.iter().all(|&x| x == first).then_some(first)
}

fn validate_prior(prior: &PriorSpec, n: usize, d: usize) -> Result<()> {
    match prior {
        PriorSpec::Uniform | PriorSpec::Magnitude => Ok(()),
        PriorSpec::Explicit { pi } => {
            if pi.rows() != n || pi.cols() != n {
                return Err(Error::InvalidPrior(format!(
                    "explicit prior must be {n}x{n}, got {}x{}",
                    pi.rows(),
                    pi.cols()
                )));
            }
            for (i, row) in pi.iter_rows().enumerate() {
                if row.iter().any(|&p| !(p >= 0.0 && p.is_finite())) {
                    return Err(Error::InvalidPrior(format!(
                        "row {i} has a negative or non-finite entry"
                    )));
                }
                let total: f64 = row.iter().sum();
                if (total - 1.0).abs() > 1e-9 {
                    return Err(Error::InvalidPrior(format!(
                        "row {i} sums to {total}, expected 1"
                    )));
                }
            }
            Ok(())
        }
        PriorSpec::PositionAware(PositionPrior::GridDistance(g)) => {
            if g.grid.len() != n {
                return Err(Error::InvalidPrior(format!(
                    "grid {}x{} does not cover {n} units",
                    g.grid.height, g.grid.width
                )));
            }
            GridDistancePrior::new(g.grid, g.scale, g.radius).map(|_| ())
        }
        PriorSpec::PositionAware(PositionPrior::Embedding(pe)) => {
            if pe.grid().len() != n {
                return Err(Error::InvalidPrior(format!(
                    "embedding grid {}x{} does not cover {n} units",
                    pe.grid().height,
                    pe.grid().width
                )));
            }
            if pe.dim() != d {
                return Err(Error::DimensionMismatch {
                    what: "position embedding",
                    expected: d,
                    got: pe.dim(),
                });
            }
            Ok(())
        }
    }
}

/// `n` query vectors of dimension `d`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct QueryBatch(Matrix);

impl QueryBatch {
    pub fn new(queries: Matrix) -> Self {
        QueryBatch(queries)
    }

    pub fn from_rows<R: AsRef<[f64]>>(rows: &[R]) -> Result<Self> {
        Matrix::from_rows(rows).map(QueryBatch)
    }

    pub fn len(&self) -> usize {
        self.0.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.0.rows() == 0
    }

    pub fn dim(&self) -> usize {
        self.0.cols()
    }

    #[inline]
    pub fn get(&self, i: usize) -> &[f64] {
        self.0.row(i)
    }

    pub fn as_matrix(&self) -> &Matrix {
        &self.0
    }

    pub fn into_matrix(self) -> Matrix {
        self.0
    }

    pub(crate) fn check_against(&self, model: &MixtureModel) -> Result<()> {
        if self.dim() != model.d() && !self.is_empty() {
            return Err(Error::DimensionMismatch {
                what: "query",
                expected: model.d(),
                got: self.dim(),
            });
        }
        Ok(())
    }

    /// Queries indexed by unit must cover every unit.
    pub(crate) fn check_per_unit(&self, model: &MixtureModel) -> Result<()> {
        self.check_against(model)?;
        if self.len() != model.n() {
            return Err(Error::DimensionMismatch {
                what: "query count",
                expected: model.n(),
                got: self.len(),
            });
        }
        Ok(())
    }
}

/// `n` value vectors of dimension `m`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ValueBatch(Matrix);

impl ValueBatch {
    pub fn new(values: Matrix) -> Self {
        ValueBatch(values)
    }

    pub fn from_rows<R: AsRef<[f64]>>(rows: &[R]) -> Result<Self> {
        Matrix::from_rows(rows).map(ValueBatch)
    }

    pub fn len(&self) -> usize {
        self.0.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.0.rows() == 0
    }

    pub fn dim(&self) -> usize {
        self.0.cols()
    }

    #[inline]
    pub fn get(&self, i: usize) -> &[f64] {
        self.0.row(i)
    }

    pub fn as_matrix(&self) -> &Matrix {
        &self.0
    }

    pub fn into_matrix(self) -> Matrix {
        self.0
    }
}

/// Row-stochastic responsibility matrix: entry `(i, j)` is the posterior
/// probability that unit `j` generated the observation at unit `i`.
#[derive(Clone, Debug, PartialEq)]
pub struct AttentionWeights(Matrix);

impl AttentionWeights {
    /// Softmax over each row of a logit matrix.
    pub fn from_logits(mut logits: Matrix) -> Result<Self> {
        for i in 0..logits.rows() {
            softmax_in_place(logits.row_mut(i)).ok_or(Error::AllZeroRow { row: i })?;
        }
        Ok(AttentionWeights(logits))
    }

    pub(crate) fn from_normalized(weights: Matrix) -> Self {
        AttentionWeights(weights)
    }

    pub fn rows(&self) -> usize {
        self.0.rows()
    }

    pub fn cols(&self) -> usize {
        self.0.cols()
    }

    pub fn row(&self, i: usize) -> &[f64] {
        self.0.row(i)
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.0.get(i, j)
    }

    pub fn as_matrix(&self) -> &Matrix {
        &self.0
    }

    pub fn into_matrix(self) -> Matrix {
        self.0
    }
}
