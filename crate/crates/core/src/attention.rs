//! Responsibilities and MAP value inference.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::model::{AttentionWeights, MixtureModel, QueryBatch, ValueBatch};
use crate::numeric::{log_gaussian, log_sum_exp, softmax_in_place, sq_dist};
use crate::scoring::{check_rows, magnitude_log_prior, PriorTerms, Scorer};

/// Result of [`em_value_inference`].
#[derive(Clone, Debug, PartialEq)]
pub struct EmResult {
    pub value: Vec<f64>,
    /// `log p(v^t | q)` up to a constant, for `t = 0..=iters`.
    pub trace: Vec<f64>,
}

fn check_dim(what: &'static str, expected: usize, got: usize) -> Result<()> {
    if expected == got {
        Ok(())
    } else {
        Err(Error::DimensionMismatch { what, expected, got })
    }
}

/// Magnitude prior `π_j ∝ exp(α/2 ‖ξ_j‖² + β/2 ‖μ_j‖²)` for a model with shared precisions.
pub fn magnitude_prior(model: &MixtureModel) -> Result<Vec<f64>> {
    if model.uniform_alpha().is_none() {
        return Err(Error::NonUniformPrecision { which: "key" });
    }
    if model.uniform_beta().is_none() {
        return Err(Error::NonUniformPrecision { which: "value" });
    }
    Ok(magnitude_log_prior(model, model.keys(), model.value_means(), true)
        .into_iter()
        .map(f64::exp)
        .collect())
}

/// `log N(q | ξ_j, 1/α_j I)`.
pub fn query_log_likelihood(q: &[f64], j: usize, model: &MixtureModel) -> Result<f64> {
    model.check_unit(j)?;
    check_dim("query", model.d(), q.len())?;
    Ok(log_gaussian(sq_dist(q, model.key(j)), model.alpha(j), model.d()))
}

/// `log N(v | μ_j, 1/β_j I)`; undefined in the `β_j = 0` limit.
pub fn value_log_likelihood(v: &[f64], j: usize, model: &MixtureModel) -> Result<f64> {
    model.check_unit(j)?;
    check_dim("value", model.m(), v.len())?;
    let beta = model.beta(j);
    if beta == 0.0 {
        return Err(Error::DegeneratePrecision {
            unit: j,
            reason: "value precision is zero",
        });
    }
    Ok(log_gaussian(sq_dist(v, model.value_mean(j)), beta, model.m()))
}

/// Posterior responsibilities `w_ij`. Without `values` every `β_j` is treated as zero.
pub fn responsibilities(
    queries: &QueryBatch,
    model: &MixtureModel,
    values: Option<&ValueBatch>,
) -> Result<AttentionWeights> {
    queries.check_against(model)?;
    if let Some(v) = values {
        check_dim("value count", queries.len(), v.len())?;
        if !v.is_empty() {
            check_dim("value", model.m(), v.dim())?;
        }
    }
    let prior = PriorTerms::build(model, model.keys(), model.value_means(), values.is_some());
    check_rows(&prior, queries.len(), model.n())?;
    let scorer = Scorer::of(model, &prior);
    let n = model.n();
    let mut out = Matrix::zeros(queries.len(), n);
    let mut units = Vec::new();
    let mut w = Vec::new();
    for i in 0..queries.len() {
        scorer.support(i, &mut units);
        scorer.row_weights(i, queries.get(i), values.map(|v| v.get(i)), &units, &mut w)?;
        let row = out.row_mut(i);
        for (&j, &wj) in units.iter().zip(&w) {
            row[j] = wj;
        }
    }
    Ok(AttentionWeights::from_normalized(out))
}

/// Dot-product attention `softmax(α Q Kᵀ) M`, the MAP value under the
/// magnitude prior with shared `α` and `β → 0`.
pub fn standard_attention(queries: &QueryBatch, model: &MixtureModel) -> Result<ValueBatch> {
    let alpha = model
        .uniform_alpha()
        .ok_or(Error::NonUniformPrecision { which: "key" })?;
    queries.check_against(model)?;
    let mut out = Matrix::zeros(queries.len(), model.m());
    let mut logits = vec![0.0; model.n()];
    for i in 0..queries.len() {
        let q = queries.get(i);
        for (l, k) in logits.iter_mut().zip(model.keys().iter_rows()) {
            *l = alpha * crate::numeric::dot(k, q);
        }
        softmax_in_place(&mut logits).ok_or(Error::AllZeroRow { row: i })?;
        let row = out.row_mut(i);
        for (w, mu) in logits.iter().zip(model.value_means().iter_rows()) {
            for (o, x) in row.iter_mut().zip(mu) {
                *o += w * x;
            }
        }
    }
    Ok(ValueBatch::new(out))
}

/// `Σ_j w_ij μ_j` with query-only responsibilities, evaluated row by row so
/// the weight matrix is never materialized.
pub fn mixture_readout(queries: &QueryBatch, model: &MixtureModel) -> Result<ValueBatch> {
    queries.check_against(model)?;
    let prior = PriorTerms::build(model, model.keys(), model.value_means(), false);
    check_rows(&prior, queries.len(), model.n())?;
    let scorer = Scorer::of(model, &prior);
    let m = model.m();
    let mut out = Matrix::zeros(queries.len(), m);
    if m == 0 {
        return Ok(ValueBatch::new(out));
    }
    out.as_mut_slice()
        .par_chunks_mut(m)
        .enumerate()
        .try_for_each_init(
            || (Vec::new(), Vec::new()),
            |(units, w), (i, row)| -> Result<()> {
                scorer.support(i, units);
                scorer.row_weights(i, queries.get(i), None, units, w)?;
                for (&j, &wj) in units.iter().zip(w.iter()) {
                    for (o, x) in row.iter_mut().zip(model.value_mean(j)) {
                        *o += wj * x;
                    }
                }
                Ok(())
            },
        )?;
    Ok(ValueBatch::new(out))
}

/// Row-sparse query-only responsibilities, kept for repeated readouts of
/// value means that change while keys, precisions and prior stay put.
pub(crate) struct ReadoutWeights {
    offsets: Vec<usize>,
    units: Vec<u32>,
    weights: Vec<f32>,
}

impl std::fmt::Debug for ReadoutWeights {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("ReadoutWeights").field("entries", &self.weights.len()).finish()
    }
}

impl ReadoutWeights {
    /// `None` when the support holds more than `max_entries` pairs.
    pub(crate) fn build(queries: &QueryBatch, model: &MixtureModel, max_entries: usize) -> Result<Option<Self>> {
        queries.check_against(model)?;
        let prior = PriorTerms::build(model, model.keys(), model.value_means(), false);
        check_rows(&prior, queries.len(), model.n())?;
        let scorer = Scorer::of(model, &prior);
        let mut offsets = Vec::with_capacity(queries.len() + 1);
        offsets.push(0);
        let mut units = Vec::new();
        for i in 0..queries.len() {
            scorer.support(i, &mut units);
            let total = offsets[i] + units.len();
            if total > max_entries {
                return Ok(None);
            }
            offsets.push(total);
        }
        let rows: Vec<(Vec<u32>, Vec<f32>)> = (0..queries.len())
            .into_par_iter()
            .map_init(
                || (Vec::new(), Vec::new()),
                |(units, w), i| -> Result<(Vec<u32>, Vec<f32>)> {
                    scorer.support(i, units);
                    scorer.row_weights(i, queries.get(i), None, units, w)?;
                    Ok((units.iter().map(|&j| j as u32).collect(), w.iter().map(|&x| x as f32).collect()))
                },
            )
            .collect::<Result<_>>()?;
        let mut units = Vec::with_capacity(offsets[queries.len()]);
        let mut weights = Vec::with_capacity(offsets[queries.len()]);
        for (u, w) in rows {
            units.extend(u);
            weights.extend(w);
        }
        Ok(Some(ReadoutWeights { offsets, units, weights }))
    }

    /// `Σ_j w_ij μ_j` for every row.
    pub(crate) fn apply(&self, values: &Matrix) -> Matrix {
        let m = values.cols();
        let rows = self.offsets.len() - 1;
        let mut out = Matrix::zeros(rows, m);
        if m == 0 {
            return out;
        }
        if m == 1 {
            let v = values.as_slice();
            out.as_mut_slice().par_iter_mut().enumerate().for_each(|(i, o)| {
                let span = self.offsets[i]..self.offsets[i + 1];
                *o = self.units[span.clone()]
                    .iter()
                    .zip(&self.weights[span])
                    .map(|(&j, &w)| w as f64 * v[j as usize])
                    .sum();
            });
            return out;
        }
        out.as_mut_slice().par_chunks_mut(m).enumerate().for_each(|(i, row)| {
            let span = self.offsets[i]..self.offsets[i + 1];
            for (&j, &w) in self.units[span.clone()].iter().zip(&self.weights[span]) {
                for (o, x) in row.iter_mut().zip(values.row(j as usize)) {
                    *o += w as f64 * x;
                }
            }
        });
        out
    }
}

/// Iterative MAP estimate of the value at row `row` for query `q`, starting
/// from `init`. Units with `β_j = 0` carry no value factor and drop out of the
/// M-step.
pub fn em_value_inference(
    q: &[f64],
    row: usize,
    model: &MixtureModel,
    init: &[f64],
    iters: usize,
) -> Result<EmResult> {
    check_dim("query", model.d(), q.len())?;
    check_dim("initial value", model.m(), init.len())?;
    if iters == 0 {
        return Err(Error::InvalidConfig("EM needs at least one iteration".into()));
    }
    if model.value_precisions().iter().all(|&b| b == 0.0) {
        return Err(Error::DegeneratePrecision {
            unit: 0,
            reason: "every value precision is zero",
        });
    }
    let prior = PriorTerms::build(model, model.keys(), model.value_means(), true);
    if prior.row_dependent() {
        model.check_unit(row)?;
    }
    let scorer = Scorer::of(model, &prior);
    let mut units = Vec::new();
    scorer.support(row, &mut units);

    let mut v = init.to_vec();
    let mut trace = Vec::with_capacity(iters + 1);
    let mut w = Vec::new();
    for t in 0..=iters {
        let lse = scorer.row_weights(row, q, Some(&v), &units, &mut w)?;
        trace.push(lse);
        if t == iters {
            break;
        }
        let mut num = vec![0.0; v.len()];
        let mut den = 0.0;
        for (&j, &wj) in units.iter().zip(&w) {
            let wb = wj * model.beta(j);
            if wb > 0.0 {
                den += wb;
                for (n, mu) in num.iter_mut().zip(model.value_mean(j)) {
                    *n += wb * mu;
                }
            }
        }
        if !(den > 0.0) {
            return Err(Error::DegeneratePrecision {
                unit: row,
                reason: "responsibility-weighted value precision vanished",
            });
        }
        for (x, n) in v.iter_mut().zip(&num) {
            *x = n / den;
        }
    }
    Ok(EmResult { value: v, trace })
}

/// `Σ_i log Σ_j π_ij p(q_i | u_j)`.
pub fn query_marginal_log_likelihood(queries: &QueryBatch, model: &MixtureModel) -> Result<f64> {
    queries.check_against(model)?;
    let prior = PriorTerms::build(model, model.keys(), model.value_means(), false);
    check_rows(&prior, queries.len(), model.n())?;
    let scorer = Scorer::of(model, &prior);
    let mut units = Vec::new();
    let mut logits = Vec::new();
    let mut total = 0.0;
    for i in 0..queries.len() {
        scorer.support(i, &mut units);
        scorer.row_logits(i, queries.get(i), None, &units, &mut logits)?;
        total += log_sum_exp(&logits);
    }
    Ok(total)
}
