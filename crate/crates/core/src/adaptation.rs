//! Inference-time EM updates of model parameters.
//!
//! Key and key-precision updates are driven by the observed queries alone.
//! Value-side updates are driven by externally fixed values at a subset of
//! units, each paired with the query observed at that unit.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::model::{MixtureModel, PositionPrior, PriorSpec, QueryBatch};
use crate::numeric::{softmax_in_place, sq_dist};
use crate::scoring::{check_rows, PriorTerms, Scorer};

/// Center of the Gaussian prior on keys and value means.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Anchor {
    /// The parameters of the previous iteration.
    #[default]
    Previous,
    /// The parameters the adaptation started from.
    Initial,
}

/// Dimension factor in the value-precision update numerator.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub enum BetaDimFactor {
    /// `m/2`, the value dimension.
    #[default]
    #[serde(rename = "m", alias = "value")]
    Value,
    /// `d/2`, the query dimension.
    #[serde(rename = "d", alias = "query")]
    Query,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AdaptationConfig {
    #[serde(alias = "θ_xi", alias = "θ_ξ")]
    pub theta_xi: f64,
    #[serde(alias = "θ_alpha1")]
    pub theta_alpha1: f64,
    #[serde(alias = "θ_alpha2")]
    pub theta_alpha2: f64,
    #[serde(alias = "θ_mu", alias = "θ_μ")]
    pub theta_mu: f64,
    #[serde(alias = "θ_beta1")]
    pub theta_beta1: f64,
    #[serde(alias = "θ_beta2")]
    pub theta_beta2: f64,
    #[serde(alias = "θ_pi", alias = "θ_π")]
    pub theta_pi: f64,
    pub key_iters: usize,
    pub alpha_iters: usize,
    pub value_iters: usize,
    pub beta_iters: usize,
    pub prior_iters: usize,
    pub anchor: Anchor,
    pub beta_dim_factor: BetaDimFactor,
    /// Keep the magnitude prior at its initial value instead of recomputing
    /// it from the current parameters every iteration.
    pub freeze_magnitude_prior: bool,
}

impl Default for AdaptationConfig {
    fn default() -> Self {
        AdaptationConfig {
            theta_xi: 0.0,
            theta_alpha1: 1.0,
            theta_alpha2: 1.0,
            theta_mu: 1.0,
            theta_beta1: 1.0,
            theta_beta2: 1.0,
            theta_pi: 1.0,
            key_iters: 0,
            alpha_iters: 0,
            value_iters: 0,
            beta_iters: 0,
            prior_iters: 0,
            anchor: Anchor::Previous,
            beta_dim_factor: BetaDimFactor::Value,
            freeze_magnitude_prior: false,
        }
    }
}

impl AdaptationConfig {
    pub fn validate(&self) -> Result<()> {
        let check = |name: &str, v: f64, strict: bool| {
            let ok = v.is_finite() && if strict { v > 0.0 } else { v >= 0.0 };
            if ok {
                Ok(())
            } else {
                let bound = if strict { "> 0" } else { ">= 0" };
                Err(Error::InvalidConfig(format!("{name} must be finite and {bound}, got {v}")))
            }
        };
        check("theta_xi", self.theta_xi, false)?;
        check("theta_mu", self.theta_mu, false)?;
        check("theta_alpha1", self.theta_alpha1, self.alpha_iters > 0)?;
        check("theta_alpha2", self.theta_alpha2, false)?;
        check("theta_beta1", self.theta_beta1, self.beta_iters > 0)?;
        check("theta_beta2", self.theta_beta2, false)?;
        check("theta_pi", self.theta_pi, true)?;
        Ok(())
    }
}

/// Annotator-provided values at a subset of units.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FixedValues {
    indices: Vec<usize>,
    values: Matrix,
}

impl FixedValues {
    pub fn new(indices: Vec<usize>, values: Matrix) -> Result<Self> {
        if indices.len() != values.rows() {
            return Err(Error::DimensionMismatch {
                what: "fixed value count",
                expected: indices.len(),
                got: values.rows(),
            });
        }
        let mut seen = indices.clone();
        seen.sort_unstable();
        if seen.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::InvalidConfig("fixed value indices must be distinct".into()));
        }
        Ok(FixedValues { indices, values })
    }

    pub fn from_pairs<V: AsRef<[f64]>>(pairs: &[(usize, V)]) -> Result<Self> {
        let indices = pairs.iter().map(|(i, _)| *i).collect();
        let rows: Vec<&[f64]> = pairs.iter().map(|(_, v)| v.as_ref()).collect();
        FixedValues::new(indices, Matrix::from_rows(&rows)?)
    }

    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }

    pub fn indices(&self) -> &[usize] {
        &self.indices
    }

    pub fn values(&self) -> &Matrix {
        &self.values
    }

    pub fn iter(&self) -> impl Iterator<Item = (usize, &[f64])> {
        self.indices.iter().copied().zip(self.values.iter_rows())
    }

    fn check(&self, model: &MixtureModel) -> Result<()> {
        if self.is_empty() {
            return Err(Error::InvalidConfig("no fixed values to propagate".into()));
        }
        if self.values.cols() != model.m() {
            return Err(Error::DimensionMismatch {
                what: "fixed value",
                expected: model.m(),
                got: self.values.cols(),
            });
        }
        for &i in &self.indices {
            model.check_unit(i)?;
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Step {
    Keys,
    Alphas,
    Values,
    Betas,
    Priors,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FlagKind {
    /// Zero prior precision and vanishing total responsibility; the unit kept its parameter.
    DegenerateDenominator,
    /// The update would have produced a non-positive or non-finite precision; the unit kept its value.
    NonPositivePrecision,
}

/// A per-unit update that was rejected.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct UnitFlag {
    pub step: Step,
    pub unit: usize,
    pub iteration: usize,
    pub kind: FlagKind,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Adapted {
    pub model: MixtureModel,
    pub flags: Vec<UnitFlag>,
}

fn need_iters(name: &str, iters: usize) -> Result<()> {
    if iters == 0 {
        Err(Error::InvalidConfig(format!("{name} must be at least 1")))
    } else {
        Ok(())
    }
}

fn magnitude_frozen(model: &MixtureModel, cfg: &AdaptationConfig) -> bool {
    matches!(model.prior(), PriorSpec::Magnitude) && cfg.freeze_magnitude_prior
}

/// Per-unit sums of responsibilities over a set of rows.
struct Totals {
    weight: Vec<f64>,
    reached: Vec<bool>,
}

impl Totals {
    fn new(n: usize) -> Self {
        Totals {
            weight: vec![0.0; n],
            reached: vec![false; n],
        }
    }
}

/// Visits query-only responsibilities of every query row.
fn visit_query_rows(
    scorer: &Scorer<'_>,
    queries: &QueryBatch,
    mut f: impl FnMut(usize, &[usize], &[f64]),
) -> Result<()> {
    let mut units = Vec::new();
    let mut w = Vec::new();
    for i in 0..queries.len() {
        scorer.support(i, &mut units);
        scorer.row_weights(i, queries.get(i), None, &units, &mut w)?;
        f(i, &units, &w);
    }
    Ok(())
}

/// Support and `log π_ij + log p(q_i | u_j)` of the fixed rows, reused across
/// value-side iterations when neither depends on the value parameters.
struct FixedRows {
    units: Vec<Vec<usize>>,
    base: Vec<Vec<f64>>,
}

impl FixedRows {
    fn build(scorer: &Scorer<'_>, queries: &QueryBatch, fixed: &FixedValues) -> Result<Self> {
        let mut units = Vec::with_capacity(fixed.len());
        let mut base = Vec::with_capacity(fixed.len());
        for &i in fixed.indices() {
            let mut u = Vec::new();
            let mut b = Vec::new();
            scorer.support(i, &mut u);
            scorer.row_logits(i, queries.get(i), None, &u, &mut b)?;
            units.push(u);
            base.push(b);
        }
        Ok(FixedRows { units, base })
    }
}

/// Visits responsibilities (query and value factors) of every fixed row.
/// `f` receives the row's position in `fixed`, its support and its weights.
fn visit_fixed_rows(
    model: &MixtureModel,
    values: &Matrix,
    betas: &[f64],
    queries: &QueryBatch,
    fixed: &FixedValues,
    cache: Option<&FixedRows>,
    frozen: Option<&PriorTerms<'_>>,
    mut f: impl FnMut(usize, &[usize], &[f64]),
) -> Result<()> {
    let mut w = Vec::new();
    if let Some(cache) = cache {
        let prior = frozen.expect("cached rows come with their prior");
        let scorer = Scorer::of(model, prior).with_values(values).with_betas(betas);
        for (pos, (i, v)) in fixed.iter().enumerate() {
            let units = &cache.units[pos];
            w.clear();
            w.extend_from_slice(&cache.base[pos]);
            for (o, &j) in w.iter_mut().zip(units) {
                *o += scorer.value_ll(v, j);
            }
            softmax_in_place(&mut w).ok_or(Error::AllZeroRow { row: i })?;
            f(pos, units, &w);
        }
        return Ok(());
    }
    let rebuilt;
    let prior = match frozen {
        Some(p) => p,
        None => {
            rebuilt = PriorTerms::build(model, model.keys(), values, true);
            &rebuilt
        }
    };
    let scorer = Scorer::of(model, prior).with_values(values).with_betas(betas);
    let mut units = Vec::new();
    for (pos, (i, v)) in fixed.iter().enumerate() {
        scorer.support(i, &mut units);
        scorer.row_weights(i, queries.get(i), Some(v), &units, &mut w)?;
        f(pos, &units, &w);
    }
    Ok(())
}

/// EM update of the keys from the observed queries.
pub fn adapt_keys(model: &MixtureModel, queries: &QueryBatch, cfg: &AdaptationConfig) -> Result<Adapted> {
    cfg.validate()?;
    need_iters("key_iters", cfg.key_iters)?;
    queries.check_against(model)?;
    let mut flags = Vec::new();
    let keys = key_pass(model, queries, cfg, &mut flags)?;
    Ok(Adapted {
        model: model.with_keys(keys)?,
        flags,
    })
}

fn key_pass(model: &MixtureModel, queries: &QueryBatch, cfg: &AdaptationConfig, flags: &mut Vec<UnitFlag>) -> Result<Matrix> {
    let (n, d) = (model.n(), model.d());
    let initial = model.keys();
    let frozen = PriorTerms::build(model, initial, model.value_means(), false);
    check_rows(&frozen, queries.len(), n)?;
    let freeze = magnitude_frozen(model, cfg);
    let mut keys = initial.clone();
    for t in 0..cfg.key_iters {
        let rebuilt;
        let prior = if freeze {
            &frozen
        } else {
            rebuilt = PriorTerms::build(model, &keys, model.value_means(), false);
            &rebuilt
        };
        let scorer = Scorer::of(model, prior).with_keys(&keys);
        let mut totals = Totals::new(n);
        let mut weighted = Matrix::zeros(n, d);
        visit_query_rows(&scorer, queries, |i, units, w| {
            let q = queries.get(i);
            for (&k, &wk) in units.iter().zip(w) {
                totals.reached[k] = true;
                totals.weight[k] += wk;
                for (acc, x) in weighted.row_mut(k).iter_mut().zip(q) {
                    *acc += wk * x;
                }
            }
        })?;
        let mut next = keys.clone();
        for k in 0..n {
            if !totals.reached[k] {
                continue;
            }
            let alpha = model.alpha(k);
            let den = cfg.theta_xi + alpha * totals.weight[k];
            if cfg.theta_xi == 0.0 && !(den > 0.0) {
                flags.push(UnitFlag {
                    step: Step::Keys,
                    unit: k,
                    iteration: t,
                    kind: FlagKind::DegenerateDenominator,
                });
                continue;
            }
            let anchor = match cfg.anchor {
                Anchor::Previous => keys.row(k),
                Anchor::Initial => initial.row(k),
            };
            let out = next.row_mut(k);
            for ((o, a), s) in out.iter_mut().zip(anchor).zip(weighted.row(k)) {
                *o = (cfg.theta_xi * a + alpha * s) / den;
            }
        }
        keys = next;
    }
    Ok(keys)
}

/// Gamma-MAP update of the key precisions from the observed queries.
pub fn adapt_alphas(model: &MixtureModel, queries: &QueryBatch, cfg: &AdaptationConfig) -> Result<Adapted> {
    cfg.validate()?;
    need_iters("alpha_iters", cfg.alpha_iters)?;
    queries.check_against(model)?;
    let mut flags = Vec::new();
    let alphas = alpha_pass(model, queries, cfg, &mut flags)?;
    Ok(Adapted {
        model: model.with_key_precisions(alphas)?,
        flags,
    })
}

fn alpha_pass(model: &MixtureModel, queries: &QueryBatch, cfg: &AdaptationConfig, flags: &mut Vec<UnitFlag>) -> Result<Vec<f64>> {
    let (n, d) = (model.n(), model.d());
    let frozen = PriorTerms::build(model, model.keys(), model.value_means(), false);
    check_rows(&frozen, queries.len(), n)?;
    let freeze = magnitude_frozen(model, cfg);
    let mut alphas = model.key_precisions().to_vec();
    for t in 0..cfg.alpha_iters {
        // the magnitude prior depends on α as well
        let rebuilt;
        let prior = if freeze {
            &frozen
        } else {
            let view = model.with_key_precisions(alphas.clone())?;
            rebuilt = PriorTerms::Magnitude(crate::scoring::magnitude_log_prior(
                &view,
                model.keys(),
                model.value_means(),
                false,
            ));
            if matches!(model.prior(), PriorSpec::Magnitude) {
                &rebuilt
            } else {
                &frozen
            }
        };
        let scorer = Scorer::of(model, prior).with_alphas(&alphas);
        let mut totals = Totals::new(n);
        let mut dispersion = vec![0.0; n];
        visit_query_rows(&scorer, queries, |i, units, w| {
            let q = queries.get(i);
            for (&k, &wk) in units.iter().zip(w) {
                totals.reached[k] = true;
                totals.weight[k] += wk;
                dispersion[k] += wk * 0.5 * sq_dist(q, model.key(k));
            }
        })?;
        let mut next = alphas.clone();
        for k in 0..n {
            if !totals.reached[k] {
                continue;
            }
            let num = cfg.theta_alpha1 + 0.5 * d as f64 * totals.weight[k] - 1.0;
            let den = cfg.theta_alpha2 + dispersion[k];
            let a = num / den;
            if a > 0.0 && a.is_finite() {
                next[k] = a;
            } else {
                flags.push(UnitFlag {
                    step: Step::Alphas,
                    unit: k,
                    iteration: t,
                    kind: FlagKind::NonPositivePrecision,
                });
            }
        }
        alphas = next;
    }
    Ok(alphas)
}

/// EM propagation of fixed values into the value means.
pub fn propagate_values(
    model: &MixtureModel,
    queries: &QueryBatch,
    fixed: &FixedValues,
    cfg: &AdaptationConfig,
) -> Result<Adapted> {
    cfg.validate()?;
    need_iters("value_iters", cfg.value_iters)?;
    queries.check_per_unit(model)?;
    fixed.check(model)?;
    let mut flags = Vec::new();
    let means = value_pass(model, queries, fixed, cfg, &mut flags)?;
    Ok(Adapted {
        model: model.with_value_means(means)?,
        flags,
    })
}

fn value_side_cache<'a>(
    model: &'a MixtureModel,
    queries: &QueryBatch,
    fixed: &FixedValues,
    cfg: &AdaptationConfig,
) -> Result<(Option<FixedRows>, Option<PriorTerms<'a>>)> {
    let depends_on_values = match model.prior() {
        PriorSpec::Magnitude => !cfg.freeze_magnitude_prior,
        PriorSpec::PositionAware(PositionPrior::Embedding(_)) => true,
        _ => false,
    };
    if depends_on_values {
        return Ok((None, None));
    }
    let prior = PriorTerms::build(model, model.keys(), model.value_means(), true);
    let rows = FixedRows::build(&Scorer::of(model, &prior), queries, fixed)?;
    Ok((Some(rows), Some(prior)))
}

fn value_pass(
    model: &MixtureModel,
    queries: &QueryBatch,
    fixed: &FixedValues,
    cfg: &AdaptationConfig,
    flags: &mut Vec<UnitFlag>,
) -> Result<Matrix> {
    let (n, m) = (model.n(), model.m());
    let (cache, frozen) = value_side_cache(model, queries, fixed, cfg)?;
    let initial = model.value_means();
    let betas = model.value_precisions();
    let mut means = initial.clone();
    for t in 0..cfg.value_iters {
        let mut totals = Totals::new(n);
        let mut weighted = Matrix::zeros(n, m);
        visit_fixed_rows(model, &means, betas, queries, fixed, cache.as_ref(), frozen.as_ref(), |pos, units, w| {
            let v = fixed.values().row(pos);
            for (&k, &wk) in units.iter().zip(w) {
                totals.reached[k] = true;
                totals.weight[k] += wk;
                for (acc, x) in weighted.row_mut(k).iter_mut().zip(v) {
                    *acc += wk * x;
                }
            }
        })?;
        let mut next = means.clone();
        for k in 0..n {
            let beta = betas[k];
            if !totals.reached[k] || beta == 0.0 {
                continue;
            }
            let den = cfg.theta_mu + beta * totals.weight[k];
            if cfg.theta_mu == 0.0 && !(den > 0.0) {
                flags.push(UnitFlag {
                    step: Step::Values,
                    unit: k,
                    iteration: t,
                    kind: FlagKind::DegenerateDenominator,
                });
                continue;
            }
            let anchor = match cfg.anchor {
                Anchor::Previous => means.row(k),
                Anchor::Initial => initial.row(k),
            };
            let out = next.row_mut(k);
            for ((o, a), s) in out.iter_mut().zip(anchor).zip(weighted.row(k)) {
                *o = (cfg.theta_mu * a + beta * s) / den;
            }
        }
        means = next;
    }
    Ok(means)
}

/// Gamma-MAP update of the value precisions from the fixed values.
pub fn update_betas(
    model: &MixtureModel,
    queries: &QueryBatch,
    fixed: &FixedValues,
    cfg: &AdaptationConfig,
) -> Result<Adapted> {
    cfg.validate()?;
    need_iters("beta_iters", cfg.beta_iters)?;
    queries.check_per_unit(model)?;
    fixed.check(model)?;
    let mut flags = Vec::new();
    let betas = beta_pass(model, queries, fixed, cfg, &mut flags)?;
    Ok(Adapted {
        model: model.with_value_precisions(betas)?,
        flags,
    })
}

fn beta_pass(
    model: &MixtureModel,
    queries: &QueryBatch,
    fixed: &FixedValues,
    cfg: &AdaptationConfig,
    flags: &mut Vec<UnitFlag>,
) -> Result<Vec<f64>> {
    let n = model.n();
    let dim = match cfg.beta_dim_factor {
        BetaDimFactor::Value => model.m(),
        BetaDimFactor::Query => model.d(),
    } as f64;
    let means = model.value_means();
    let magnitude = matches!(model.prior(), PriorSpec::Magnitude) && !cfg.freeze_magnitude_prior;
    let (cache, frozen) = value_side_cache(model, queries, fixed, cfg)?;
    let mut betas = model.value_precisions().to_vec();
    for t in 0..cfg.beta_iters {
        let mut totals = Totals::new(n);
        let mut dispersion = vec![0.0; n];
        let mut visit = |pos: usize, units: &[usize], w: &[f64]| {
            let v = fixed.values().row(pos);
            for (&k, &wk) in units.iter().zip(w) {
                totals.reached[k] = true;
                totals.weight[k] += wk;
                dispersion[k] += wk * 0.5 * sq_dist(v, means.row(k));
            }
        };
        if magnitude {
            // the magnitude prior depends on β
            let view = model.with_value_precisions(betas.clone())?;
            visit_fixed_rows(&view, means, &betas, queries, fixed, None, None, &mut visit)?;
        } else {
            visit_fixed_rows(model, means, &betas, queries, fixed, cache.as_ref(), frozen.as_ref(), &mut visit)?;
        }
        let mut next = betas.clone();
        for k in 0..n {
            if !totals.reached[k] || betas[k] == 0.0 {
                continue;
            }
            let num = cfg.theta_beta1 + 0.5 * dim * totals.weight[k] - 1.0;
            let den = cfg.theta_beta2 + dispersion[k];
            let b = num / den;
            if b > 0.0 && b.is_finite() {
                next[k] = b;
            } else {
                flags.push(UnitFlag {
                    step: Step::Betas,
                    unit: k,
                    iteration: t,
                    kind: FlagKind::NonPositivePrecision,
                });
            }
        }
        betas = next;
    }
    Ok(betas)
}

/// Dirichlet-MAP update of the mixing proportions. Rows at fixed units use
/// responsibilities with the value factor, all other rows use query-only
/// responsibilities. The result is an explicit prior whose rows keep the
/// support of the input prior.
pub fn update_priors(
    model: &MixtureModel,
    queries: &QueryBatch,
    fixed: &FixedValues,
    cfg: &AdaptationConfig,
) -> Result<Adapted> {
    cfg.validate()?;
    need_iters("prior_iters", cfg.prior_iters)?;
    queries.check_per_unit(model)?;
    if !fixed.is_empty() {
        fixed.check(model)?;
    }
    let model = prior_pass(model, queries, fixed, cfg)?;
    Ok(Adapted { model, flags: Vec::new() })
}

fn prior_pass(model: &MixtureModel, queries: &QueryBatch, fixed: &FixedValues, cfg: &AdaptationConfig) -> Result<MixtureModel> {
    let n = model.n();
    let mut value_at: Vec<Option<usize>> = vec![None; n];
    for (pos, &i) in fixed.indices().iter().enumerate() {
        value_at[i] = Some(pos);
    }
    let extra = cfg.theta_pi - 1.0;
    let mut current = model.clone();
    for _ in 0..cfg.prior_iters {
        let query_prior = PriorTerms::build(&current, current.keys(), current.value_means(), false);
        let value_prior = PriorTerms::build(&current, current.keys(), current.value_means(), true);
        let query_scorer = Scorer::of(&current, &query_prior);
        let value_scorer = Scorer::of(&current, &value_prior);
        let mut pi = Matrix::zeros(n, n);
        let mut units = Vec::new();
        let mut w = Vec::new();
        for i in 0..n {
            let q = queries.get(i);
            match value_at[i] {
                Some(pos) => {
                    value_scorer.support(i, &mut units);
                    value_scorer.row_weights(i, q, Some(fixed.values().row(pos)), &units, &mut w)?;
                }
                None => {
                    query_scorer.support(i, &mut units);
                    query_scorer.row_weights(i, q, None, &units, &mut w)?;
                }
            }
            let total = 1.0 + units.len() as f64 * extra;
            let row = pi.row_mut(i);
            for (&k, &wk) in units.iter().zip(&w) {
                let num = wk + extra;
                if num < 0.0 {
                    return Err(Error::NegativeMass { row: i, unit: k });
                }
                row[k] = num / total;
            }
        }
        current = current.with_prior(PriorSpec::Explicit { pi })?;
    }
    Ok(current)
}

/// One combined adaptation pass: keys, key precisions, value means, value
/// precisions and mixing proportions, in that order, each step enabled by a
/// positive iteration count. Value-side steps are skipped without fixed values.
pub fn adapt(
    model: &MixtureModel,
    queries: &QueryBatch,
    fixed: Option<&FixedValues>,
    cfg: &AdaptationConfig,
) -> Result<Adapted> {
    cfg.validate()?;
    queries.check_against(model)?;
    let mut flags = Vec::new();
    let mut current = model.clone();
    if cfg.key_iters > 0 {
        let keys = key_pass(&current, queries, cfg, &mut flags)?;
        current = current.with_keys(keys)?;
    }
    if cfg.alpha_iters > 0 {
        let alphas = alpha_pass(&current, queries, cfg, &mut flags)?;
        current = current.with_key_precisions(alphas)?;
    }
    let fixed = fixed.filter(|f| !f.is_empty());
    if let Some(fixed) = fixed {
        if cfg.value_iters > 0 || cfg.beta_iters > 0 {
            queries.check_per_unit(&current)?;
            fixed.check(&current)?;
        }
        if cfg.value_iters > 0 {
            let means = value_pass(&current, queries, fixed, cfg, &mut flags)?;
            current = current.with_value_means(means)?;
        }
        if cfg.beta_iters > 0 {
            let betas = beta_pass(&current, queries, fixed, cfg, &mut flags)?;
            current = current.with_value_precisions(betas)?;
        }
    }
    if cfg.prior_iters > 0 {
        queries.check_per_unit(&current)?;
        let empty = FixedValues::new(Vec::new(), Matrix::zeros(0, current.m()))?;
        current = prior_pass(&current, queries, fixed.unwrap_or(&empty), cfg)?;
    }
    Ok(Adapted { model: current, flags })
}
