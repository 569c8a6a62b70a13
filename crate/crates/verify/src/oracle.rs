//! Direct double-double evaluation of the model formulas, written
//! independently of the core implementation.

use probattn::adaptation::{Anchor, BetaDimFactor};
use probattn::{Axis, GridShape, MixtureModel, PeTable, PositionPrior, PriorSpec, RelativePE};

use crate::dd::Dd;

pub type Vector = Vec<Dd>;

pub fn lift(xs: &[f64]) -> Vector {
    xs.iter().map(|&x| Dd::from(x)).collect()
}

pub fn lower(xs: &[Dd]) -> Vec<f64> {
    xs.iter().map(|x| x.to_f64()).collect()
}

fn sq_norm(a: &[Dd]) -> Dd {
    a.iter().map(|x| x.sqr()).sum()
}

fn sq_dist(a: &[Dd], b: &[Dd]) -> Dd {
    a.iter().zip(b).map(|(x, y)| (*x - *y).sqr()).sum()
}

fn dot(a: &[Dd], b: &[Dd]) -> Dd {
    a.iter().zip(b).map(|(x, y)| *x * *y).sum()
}

/// `log N(x | mean, 1/precision I)` with `sq = ‖x - mean‖²`.
pub fn log_gaussian(sq: Dd, precision: Dd, dim: usize) -> Dd {
    (precision / (Dd::PI * 2.0)).ln() * (dim as f64 * 0.5) - precision * sq * 0.5
}

pub fn log_sum_exp(xs: &[Dd]) -> Dd {
    let m = xs.iter().copied().fold(Dd::from(f64::NEG_INFINITY), Dd::max);
    if !m.is_finite() {
        return m;
    }
    m + xs.iter().map(|&x| (x - m).exp()).sum::<Dd>().ln()
}

/// Normalized weights from optional logits; `None` marks zero prior mass.
fn normalize(logits: &[Option<Dd>]) -> Vector {
    let present: Vec<Dd> = logits.iter().flatten().copied().collect();
    let z = log_sum_exp(&present);
    logits
        .iter()
        .map(|l| l.map_or(Dd::ZERO, |l| (l - z).exp()))
        .collect()
}

#[derive(Clone, Debug)]
pub enum Prior {
    Uniform,
    Magnitude,
    Explicit(Vec<Vector>),
}

/// Model parameters in extended precision.
#[derive(Clone, Debug)]
pub struct Model {
    pub keys: Vec<Vector>,
    pub alphas: Vector,
    pub means: Vec<Vector>,
    pub betas: Vector,
    pub prior: Prior,
}

impl Model {
    /// `None` for priors without an oracle counterpart here.
    pub fn from_model(model: &MixtureModel) -> Option<Model> {
        let prior = match model.prior() {
            PriorSpec::Uniform => Prior::Uniform,
            PriorSpec::Magnitude => Prior::Magnitude,
            PriorSpec::Explicit { pi } => Prior::Explicit(pi.iter_rows().map(lift).collect()),
            PriorSpec::PositionAware(_) => return None,
        };
        Some(Model {
            keys: model.keys().iter_rows().map(lift).collect(),
            alphas: lift(model.key_precisions()),
            means: model.value_means().iter_rows().map(lift).collect(),
            betas: lift(model.value_precisions()),
            prior,
        })
    }

    pub fn n(&self) -> usize {
        self.keys.len()
    }

    /// `log π_ij`, `None` outside the support. The magnitude prior includes
    /// the `β‖μ‖²` terms only when `with_values`.
    pub fn log_prior_row(&self, i: usize, with_values: bool) -> Vec<Option<Dd>> {
        let n = self.n();
        match &self.prior {
            Prior::Uniform => vec![Some(-Dd::from(n).ln()); n],
            Prior::Magnitude => {
                let logits: Vector = (0..n)
                    .map(|j| {
                        let mut l = self.alphas[j] * sq_norm(&self.keys[j]) * 0.5;
                        if with_values && self.betas[j] > Dd::ZERO {
                            l += self.betas[j] * sq_norm(&self.means[j]) * 0.5;
                        }
                        l
                    })
                    .collect();
                let z = log_sum_exp(&logits);
                logits.into_iter().map(|l| Some(l - z)).collect()
            }
            Prior::Explicit(pi) => pi[i]
                .iter()
                .map(|&p| if p > Dd::ZERO { Some(p.ln()) } else { None })
                .collect(),
        }
    }

    pub fn query_ll(&self, q: &[Dd], j: usize) -> Dd {
        log_gaussian(sq_dist(q, &self.keys[j]), self.alphas[j], q.len())
    }

    pub fn value_ll(&self, v: &[Dd], j: usize) -> Dd {
        log_gaussian(sq_dist(v, &self.means[j]), self.betas[j], v.len())
    }

    /// Per-unit log joint of row `i`; the value factor is added for units
    /// with positive value precision.
    pub fn row_logits(&self, i: usize, q: &[Dd], v: Option<&[Dd]>) -> Vec<Option<Dd>> {
        self.log_prior_row(i, v.is_some())
            .into_iter()
            .enumerate()
            .map(|(j, p)| {
                p.map(|p| {
                    let mut l = p + self.query_ll(q, j);
                    if let Some(v) = v {
                        if self.betas[j] > Dd::ZERO {
                            l += self.value_ll(v, j);
                        }
                    }
                    l
                })
            })
            .collect()
    }

    pub fn row_weights(&self, i: usize, q: &[Dd], v: Option<&[Dd]>) -> Vector {
        normalize(&self.row_logits(i, q, v))
    }

    pub fn row_in_support(&self, i: usize) -> Vec<bool> {
        self.log_prior_row(i, false).iter().map(Option::is_some).collect()
    }
}

pub fn magnitude_prior(model: &Model) -> Vec<f64> {
    let logits: Vec<Option<Dd>> = Model {
        prior: Prior::Magnitude,
        ..model.clone()
    }
    .log_prior_row(0, true);
    logits.into_iter().map(|l| l.unwrap().exp().to_f64()).collect()
}

pub fn responsibilities(model: &Model, queries: &[Vector], values: Option<&[Vector]>) -> Vec<Vec<f64>> {
    (0..queries.len())
        .map(|i| lower(&model.row_weights(i, &queries[i], values.map(|v| v[i].as_slice()))))
        .collect()
}

/// `softmax(α Q Kᵀ) M`.
pub fn standard_attention(keys: &[Vector], means: &[Vector], alpha: f64, queries: &[Vector]) -> Vec<Vec<f64>> {
    let m = means.first().map_or(0, Vec::len);
    queries
        .iter()
        .map(|q| {
            let logits: Vec<Option<Dd>> = keys.iter().map(|k| Some(dot(k, q) * alpha)).collect();
            let w = normalize(&logits);
            let mut out = vec![Dd::ZERO; m];
            for (wj, mu) in w.iter().zip(means) {
                for (o, x) in out.iter_mut().zip(mu) {
                    *o += *wj * *x;
                }
            }
            lower(&out)
        })
        .collect()
}

pub fn marginal_ll(model: &Model, queries: &[Vector]) -> Dd {
    (0..queries.len())
        .map(|i| {
            let logits: Vector = model.row_logits(i, &queries[i], None).into_iter().flatten().collect();
            log_sum_exp(&logits)
        })
        .sum()
}

/// `log p(v | q)` for the row at unit `i`.
pub fn value_posterior(model: &Model, i: usize, q: &[Dd], v: &[Dd]) -> Dd {
    let logits: Vector = model.row_logits(i, q, Some(v)).into_iter().flatten().collect();
    log_sum_exp(&logits)
}

/// One EM step of MAP value inference.
pub fn em_step(model: &Model, i: usize, q: &[Dd], v: &[Dd]) -> Vector {
    let w = model.row_weights(i, q, Some(v));
    let mut num = vec![Dd::ZERO; v.len()];
    let mut den = Dd::ZERO;
    for (j, wj) in w.iter().enumerate() {
        let wb = *wj * model.betas[j];
        den += wb;
        for (n, mu) in num.iter_mut().zip(&model.means[j]) {
            *n += wb * *mu;
        }
    }
    num.into_iter().map(|x| x / den).collect()
}

/// Fixed pairs `(unit, value)` for the value-side updates.
pub type Fixed = [(usize, Vector)];

/// Responsibilities summed per unit, with a flag for units inside some row's support.
struct Totals {
    weight: Vector,
    reached: Vec<bool>,
}

impl Totals {
    fn new(n: usize) -> Self {
        Totals {
            weight: vec![Dd::ZERO; n],
            reached: vec![false; n],
        }
    }

    fn add(&mut self, support: &[bool], w: &[Dd]) {
        for k in 0..w.len() {
            if support[k] {
                self.reached[k] = true;
                self.weight[k] += w[k];
            }
        }
    }
}

pub struct KeyUpdate {
    pub theta: f64,
    pub anchor: Anchor,
    pub iters: usize,
    pub freeze_magnitude: bool,
}

/// Keys after `iters` EM updates
/// `ξ_k ← (θ a_k + α_k Σ_i w_ik q_i) / (θ + α_k Σ_i w_ik)`.
pub fn adapt_keys(model: &Model, queries: &[Vector], cfg: &KeyUpdate) -> Vec<Vector> {
    let n = model.n();
    let mut current = model.clone();
    let frozen_prior = frozen_magnitude(model, false);
    for _ in 0..cfg.iters {
        let scoring = match (&frozen_prior, cfg.freeze_magnitude) {
            (Some(p), true) => Model {
                prior: p.clone(),
                ..current.clone()
            },
            _ => current.clone(),
        };
        let mut totals = Totals::new(n);
        let mut sums = vec![vec![Dd::ZERO; queries[0].len()]; n];
        for (i, q) in queries.iter().enumerate() {
            let w = scoring.row_weights(i, q, None);
            totals.add(&scoring.row_in_support(i), &w);
            for k in 0..n {
                for (s, x) in sums[k].iter_mut().zip(q) {
                    *s += w[k] * *x;
                }
            }
        }
        let mut next = current.keys.clone();
        for k in 0..n {
            let den = current.alphas[k] * totals.weight[k] + cfg.theta;
            if !totals.reached[k] || !(den > Dd::ZERO) {
                continue;
            }
            let anchor = match cfg.anchor {
                Anchor::Previous => &current.keys[k],
                Anchor::Initial => &model.keys[k],
            };
            for c in 0..next[k].len() {
                next[k][c] = (anchor[c] * cfg.theta + current.alphas[k] * sums[k][c]) / den;
            }
        }
        current.keys = next;
    }
    current.keys
}

/// An explicit prior equal to the model's magnitude prior at its current parameters.
fn frozen_magnitude(model: &Model, with_values: bool) -> Option<Prior> {
    match model.prior {
        Prior::Magnitude => {
            let row: Vector = model.log_prior_row(0, with_values).into_iter().map(|l| l.unwrap().exp()).collect();
            Some(Prior::Explicit(vec![row; model.n()]))
        }
        _ => None,
    }
}

pub struct GammaUpdate {
    pub theta1: f64,
    pub theta2: f64,
    pub iters: usize,
}

/// `α_k ← (θ₁ + (d/2) Σ w_ik − 1) / (θ₂ + Σ w_ik ½‖q_i − ξ_k‖²)`; non-positive
/// results keep the previous value.
pub fn adapt_alphas(model: &Model, queries: &[Vector], cfg: &GammaUpdate) -> Vector {
    let n = model.n();
    let d = queries[0].len() as f64;
    let mut current = model.clone();
    for _ in 0..cfg.iters {
        let mut totals = Totals::new(n);
        let mut disp = vec![Dd::ZERO; n];
        for (i, q) in queries.iter().enumerate() {
            let w = current.row_weights(i, q, None);
            totals.add(&current.row_in_support(i), &w);
            for k in 0..n {
                disp[k] += w[k] * sq_dist(q, &current.keys[k]) * 0.5;
            }
        }
        let mut next = current.alphas.clone();
        for k in 0..n {
            if !totals.reached[k] {
                continue;
            }
            let a = (totals.weight[k] * (0.5 * d) + cfg.theta1 - 1.0) / (disp[k] + cfg.theta2);
            if a > Dd::ZERO && a.is_finite() {
                next[k] = a;
            }
        }
        current.alphas = next;
    }
    current.alphas
}

fn fixed_weights(model: &Model, queries: &[Vector], fixed: &Fixed) -> Vec<(Vec<bool>, Vector)> {
    fixed
        .iter()
        .map(|(i, v)| (model.row_in_support(*i), model.row_weights(*i, &queries[*i], Some(v))))
        .collect()
}

pub struct MeanUpdate {
    pub theta: f64,
    pub anchor: Anchor,
    pub iters: usize,
}

/// `μ_k ← (θ a_k + β_k Σ_fixed w_ik v_i) / (θ + β_k Σ_fixed w_ik)` for `β_k > 0`.
pub fn propagate_values(model: &Model, queries: &[Vector], fixed: &Fixed, cfg: &MeanUpdate) -> Vec<Vector> {
    let n = model.n();
    let m = fixed[0].1.len();
    let mut current = model.clone();
    for _ in 0..cfg.iters {
        let mut totals = Totals::new(n);
        let mut sums = vec![vec![Dd::ZERO; m]; n];
        for ((support, w), (_, v)) in fixed_weights(&current, queries, fixed).iter().zip(fixed) {
            totals.add(support, w);
            for k in 0..n {
                for (s, x) in sums[k].iter_mut().zip(v) {
                    *s += w[k] * *x;
                }
            }
        }
        let mut next = current.means.clone();
        for k in 0..n {
            let beta = current.betas[k];
            let den = beta * totals.weight[k] + cfg.theta;
            if !totals.reached[k] || beta == Dd::ZERO || !(den > Dd::ZERO) {
                continue;
            }
            let anchor = match cfg.anchor {
                Anchor::Previous => &current.means[k],
                Anchor::Initial => &model.means[k],
            };
            for c in 0..m {
                next[k][c] = (anchor[c] * cfg.theta + beta * sums[k][c]) / den;
            }
        }
        current.means = next;
    }
    current.means
}

/// `β_k ← (θ₁ + (D/2) Σ_fixed w_ik − 1) / (θ₂ + ½ Σ_fixed w_ik ‖v_i − μ_k‖²)`
/// for `β_k > 0`, with `D` the value or query dimension.
pub fn update_betas(model: &Model, queries: &[Vector], fixed: &Fixed, cfg: &GammaUpdate, factor: BetaDimFactor) -> Vector {
    let n = model.n();
    let dim = match factor {
        BetaDimFactor::Value => fixed[0].1.len(),
        BetaDimFactor::Query => queries[0].len(),
    } as f64;
    let mut current = model.clone();
    for _ in 0..cfg.iters {
        let mut totals = Totals::new(n);
        let mut disp = vec![Dd::ZERO; n];
        for ((support, w), (_, v)) in fixed_weights(&current, queries, fixed).iter().zip(fixed) {
            totals.add(support, w);
            for k in 0..n {
                disp[k] += w[k] * sq_dist(v, &current.means[k]) * 0.5;
            }
        }
        let mut next = current.betas.clone();
        for k in 0..n {
            if !totals.reached[k] || current.betas[k] == Dd::ZERO {
                continue;
            }
            let b = (totals.weight[k] * (0.5 * dim) + cfg.theta1 - 1.0) / (disp[k] + cfg.theta2);
            if b > Dd::ZERO && b.is_finite() {
                next[k] = b;
            }
        }
        current.betas = next;
    }
    current.betas
}

/// `π_ik ← (w_ik + θ − 1) / (Σ_k w_ik + |support_i| (θ − 1))`; rows at fixed
/// units include the value factor. Returns the final prior matrix.
pub fn update_priors(model: &Model, queries: &[Vector], fixed: &Fixed, theta: f64, iters: usize) -> Vec<Vec<f64>> {
    let n = model.n();
    let mut current = model.clone();
    for _ in 0..iters {
        let mut pi = vec![vec![Dd::ZERO; n]; n];
        for i in 0..n {
            let value = fixed.iter().find(|(k, _)| *k == i).map(|(_, v)| v.as_slice());
            let w = current.row_weights(i, &queries[i], value);
            let support = current.row_in_support(i);
            let count = support.iter().filter(|&&s| s).count();
            let total: Dd = w.iter().copied().sum::<Dd>() + (theta - 1.0) * count as f64;
            for k in 0..n {
                if support[k] {
                    pi[i][k] = (w[k] + theta - 1.0) / total;
                }
            }
        }
        current.prior = Prior::Explicit(pi);
    }
    match current.prior {
        Prior::Explicit(pi) => pi.iter().map(|r| lower(r)).collect(),
        _ => unreachable!("iters >= 1"),
    }
}

/// `Σ_fixed log Σ_j π_ij p(q_i | u_j) p(v_i | u_j)`.
pub fn joint_ll(model: &Model, queries: &[Vector], fixed: &Fixed) -> Dd {
    fixed.iter().map(|(i, v)| value_posterior(model, *i, &queries[*i], v)).sum()
}

pub fn penalty(theta: f64, params: &[Vector], anchor: &[Vector]) -> Dd {
    params.iter().zip(anchor).map(|(p, a)| sq_dist(p, a)).sum::<Dd>() * (0.5 * theta)
}

/// Embedding pair `(r^q, r^k)` for the offset from unit `i` to unit `j`.
pub fn embeddings(pe: &RelativePE, i: usize, j: usize) -> (Vector, Vector) {
    let grid = pe.grid();
    let (ri, ci) = grid.coords(i);
    let (rj, cj) = grid.coords(j);
    let dh = rj as isize - ri as isize;
    let dw = cj as isize - ci as isize;
    let lookup = |t: &PeTable| -> Vector {
        let hi = (dh + grid.height as isize - 1) as usize;
        let wi = (dw + grid.width as isize - 1) as usize;
        match t {
            PeTable::Full { table } => lift(table.row(hi * (2 * grid.width - 1) + wi)),
            PeTable::Factored { height, width } => {
                height.row(hi).iter().zip(width.row(wi)).map(|(a, b)| Dd::from(*a) + *b).collect()
            }
        }
    };
    (lookup(pe.query_table()), lookup(pe.key_table()))
}

/// `log N(q | (ξ + r^q)/2, 1/(2α) I)`.
pub fn pe_query_ll(q: &[Dd], key: &[Dd], alpha: Dd, rq: &[Dd]) -> Dd {
    let mean: Vector = key.iter().zip(rq).map(|(k, r)| (*k + *r) * 0.5).collect();
    log_gaussian(sq_dist(q, &mean), alpha * 2.0, q.len())
}

/// `log N(ξ | r^k, 1/α I) + α/2 (2‖ξ‖² + ‖r^q‖² + ‖r^k‖²) + β/2 ‖μ‖²`.
pub fn pe_prior(key: &[Dd], alpha: Dd, mean: &[Dd], beta: Dd, rq: &[Dd], rk: &[Dd]) -> Dd {
    let mut out = log_gaussian(sq_dist(key, rk), alpha, key.len())
        + alpha * 0.5 * (sq_norm(key) * 2.0 + sq_norm(rq) + sq_norm(rk));
    if beta > Dd::ZERO {
        out += beta * 0.5 * sq_norm(mean);
    }
    out
}

/// Output of unit `i` attending over `units`, with `values` playing the role of `μ`.
fn pe_attend(model: &Model, pe: &RelativePE, q: &[Dd], i: usize, units: &[usize], values: &[Vector]) -> Vec<f64> {
    let logits: Vec<Option<Dd>> = units
        .iter()
        .map(|&j| {
            let (rq, rk) = embeddings(pe, i, j);
            Some(
                pe_prior(&model.keys[j], model.alphas[j], &values[j], model.betas[j], &rq, &rk)
                    + pe_query_ll(q, &model.keys[j], model.alphas[j], &rq),
            )
        })
        .collect();
    let w = normalize(&logits);
    let m = values.first().map_or(0, Vec::len);
    let mut out = vec![Dd::ZERO; m];
    for (wj, &j) in w.iter().zip(units) {
        for (o, x) in out.iter_mut().zip(&values[j]) {
            *o += *wj * *x;
        }
    }
    lower(&out)
}

pub fn pe_attention(model: &Model, pe: &RelativePE, queries: &[Vector]) -> Vec<Vec<f64>> {
    let units: Vec<usize> = (0..model.n()).collect();
    (0..model.n())
        .map(|i| pe_attend(model, pe, &queries[i], i, &units, &model.means))
        .collect()
}

/// One axial block by brute force over each pixel's clipped window.
pub fn axial(model: &Model, pe: &RelativePE, features: &[Vector], values: &[Vector], axis: Axis, context: usize) -> Vec<Vec<f64>> {
    let grid: GridShape = pe.grid();
    (0..grid.len())
        .map(|i| {
            let (r, c) = grid.coords(i);
            let units: Vec<usize> = match axis {
                Axis::Height => (0..grid.height).filter(|&rr| rr.abs_diff(r) <= context).map(|rr| grid.index(rr, c)).collect(),
                Axis::Width => (0..grid.width).filter(|&cc| cc.abs_diff(c) <= context).map(|cc| grid.index(r, cc)).collect(),
            };
            pe_attend(model, pe, &features[i], i, &units, values)
        })
        .collect()
}

/// The embedding prior's model in extended precision; its own prior field is unused.
pub fn embedding_model(model: &MixtureModel) -> Option<(Model, &RelativePE)> {
    match model.prior() {
        PriorSpec::PositionAware(PositionPrior::Embedding(pe)) => {
            let plain = model.with_prior(PriorSpec::Uniform).ok()?;
            Some((Model::from_model(&plain)?, pe))
        }
        _ => None,
    }
}
