//! Per-row log-score evaluation shared by inference and adaptation.
//!
//! A row is a query observed at unit `i`; its score for unit `j` is
//! `log π_ij + log p(q | u_j)`, optionally plus the value log-likelihood.
//! Priors with restricted support (windowed grid priors, zero entries of an
//! explicit prior) only enumerate units with positive prior mass.

use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::model::{GridDistancePrior, MixtureModel, PositionPrior, PriorSpec};
use crate::numeric::{log_gaussian, log_sum_exp, sq_dist, sq_norm};
use crate::position::{pe_prior_term, pe_query_term, GridShape, RelativePE};

pub(crate) enum PriorTerms<'a> {
    Uniform(f64),
    Magnitude(Vec<f64>),
    Explicit(&'a Matrix),
    Grid(GridTerms),
    Embedding(&'a RelativePE),
}

pub(crate) struct GridTerms {
    grid: GridShape,
    scale: f64,
    radius: Option<usize>,
    /// `-dist/scale` for every offset of the window, row-major.
    window: Vec<f64>,
    /// Rows (columns) sharing the same clipping of the window share a class.
    row_class: Vec<usize>,
    col_class: Vec<usize>,
    col_classes: usize,
    /// Log normalizer of the clipped window, per (row class, column class).
    lse: Vec<f64>,
}

/// Groups positions along an axis of length `len` by the window extent
/// `(before, after)` left after clipping.
fn clip_classes(len: usize, r: usize) -> (Vec<usize>, Vec<(usize, usize)>) {
    let mut extents: Vec<(usize, usize)> = Vec::new();
    let class = (0..len)
        .map(|p| {
            let e = (p.min(r), (len - 1 - p).min(r));
            match extents.iter().position(|&x| x == e) {
                Some(k) => k,
                None => {
                    extents.push(e);
                    extents.len() - 1
                }
            }
        })
        .collect();
    (class, extents)
}

impl GridTerms {
    fn new(grid: GridShape, scale: f64, radius: Option<usize>) -> Self {
        let mut terms = GridTerms {
            grid,
            scale,
            radius,
            window: Vec::new(),
            row_class: Vec::new(),
            col_class: Vec::new(),
            col_classes: 0,
            lse: Vec::new(),
        };
        let Some(r) = radius else { return terms };
        let span = 2 * r + 1;
        terms.window = (0..span * span)
            .map(|k| {
                let (dr, dc) = ((k / span) as f64 - r as f64, (k % span) as f64 - r as f64);
                -(dr * dr + dc * dc).sqrt() / scale
            })
            .collect();
        let (row_class, row_ext) = clip_classes(grid.height, r);
        let (col_class, col_ext) = clip_classes(grid.width, r);
        let mut lp = Vec::new();
        for &(up, down) in &row_ext {
            for &(left, right) in &col_ext {
                lp.clear();
                for a in r - up..=r + down {
                    lp.extend_from_slice(&terms.window[a * span + r - left..=a * span + r + right]);
                }
                terms.lse.push(log_sum_exp(&lp));
            }
        }
        terms.row_class = row_class;
        terms.col_class = col_class;
        terms.col_classes = col_ext.len();
        terms
    }

    /// `log π_ij` for the row at grid position `(ri, ci)`.
    fn row_terms(&self, i: usize, units: &[usize], out: &mut Vec<f64>) {
        let (ri, ci) = self.grid.coords(i);
        match self.radius {
            Some(r) => {
                let span = 2 * r + 1;
                let z = self.lse[self.row_class[ri] * self.col_classes + self.col_class[ci]];
                out.extend(units.iter().map(|&j| {
                    let (rj, cj) = self.grid.coords(j);
                    let (a, b) = (rj + r - ri, cj + r - ci);
                    self.window[a * span + b] - z
                }));
            }
            None => {
                let start = out.len();
                out.extend(units.iter().map(|&j| {
                    let (rj, cj) = self.grid.coords(j);
                    let dr = rj as f64 - ri as f64;
                    let dc = cj as f64 - ci as f64;
                    -(dr * dr + dc * dc).sqrt() / self.scale
                }));
                let z = log_sum_exp(&out[start..]);
                for o in &mut out[start..] {
                    *o -= z;
                }
            }
        }
    }
}

impl<'a> PriorTerms<'a> {
    /// `keys` and `value_means` supply the parameters entering the magnitude
    /// prior; `use_beta` switches its `β‖μ‖²` contributions on.
    pub(crate) fn build(model: &'a MixtureModel, keys: &Matrix, value_means: &Matrix, use_beta: bool) -> Self {
        match model.prior() {
            PriorSpec::Uniform => PriorTerms::Uniform(-(model.n() as f64).ln()),
            PriorSpec::Magnitude => {
                PriorTerms::Magnitude(magnitude_log_prior(model, keys, value_means, use_beta))
            }
            PriorSpec::Explicit { pi } => PriorTerms::Explicit(pi),
            PriorSpec::PositionAware(PositionPrior::GridDistance(GridDistancePrior {
                grid,
                scale,
                radius,
            })) => PriorTerms::Grid(GridTerms::new(*grid, *scale, *radius)),
            PriorSpec::PositionAware(PositionPrior::Embedding(pe)) => PriorTerms::Embedding(pe),
        }
    }

    /// Whether `log π_ij` depends on the row index.
    pub(crate) fn row_dependent(&self) -> bool {
        !matches!(self, PriorTerms::Uniform(_) | PriorTerms::Magnitude(_))
    }
}

pub(crate) fn magnitude_log_prior(model: &MixtureModel, keys: &Matrix, value_means: &Matrix, use_beta: bool) -> Vec<f64> {
    let mut logits: Vec<f64> = (0..model.n())
        .map(|j| {
            let mut l = 0.5 * model.alpha(j) * sq_norm(keys.row(j));
            let beta = model.beta(j);
            if use_beta && beta > 0.0 {
                l += 0.5 * beta * sq_norm(value_means.row(j));
            }
            l
        })
        .collect();
    let z = log_sum_exp(&logits);
    for l in &mut logits {
        *l -= z;
    }
    logits
}

/// Scores rows against a model whose keys, precisions and value means may
/// be overridden (adaptation iterates on these without rebuilding the model).
pub(crate) struct Scorer<'a> {
    model: &'a MixtureModel,
    keys: &'a Matrix,
    alphas: &'a [f64],
    values: &'a Matrix,
    betas: &'a [f64],
    prior: &'a PriorTerms<'a>,
    /// `d/2 ln(α_j/2π)` and `m/2 ln(β_j/2π)`.
    alpha_norm: Vec<f64>,
    beta_norm: Vec<f64>,
}

fn normalizers(precisions: &[f64], dim: usize) -> Vec<f64> {
    precisions
        .iter()
        .map(|&p| if p > 0.0 { log_gaussian(0.0, p, dim) } else { 0.0 })
        .collect()
}

impl<'a> Scorer<'a> {
    pub(crate) fn of(model: &'a MixtureModel, prior: &'a PriorTerms<'a>) -> Self {
        Scorer {
            model,
            keys: model.keys(),
            alphas: model.key_precisions(),
            values: model.value_means(),
            betas: model.value_precisions(),
            prior,
            alpha_norm: normalizers(model.key_precisions(), model.d()),
            beta_norm: normalizers(model.value_precisions(), model.m()),
        }
    }

    pub(crate) fn with_keys(mut self, keys: &'a Matrix) -> Self {
        self.keys = keys;
        self
    }

    pub(crate) fn with_alphas(mut self, alphas: &'a [f64]) -> Self {
        self.alphas = alphas;
        self.alpha_norm = normalizers(alphas, self.model.d());
        self
    }

    pub(crate) fn with_values(mut self, values: &'a Matrix) -> Self {
        self.values = values;
        self
    }

    pub(crate) fn with_betas(mut self, betas: &'a [f64]) -> Self {
        self.betas = betas;
        self.beta_norm = normalizers(betas, self.model.m());
        self
    }

    /// `log N(v | μ_j, 1/β_j I)` for `β_j > 0`, zero otherwise.
    #[inline]
    pub(crate) fn value_ll(&self, v: &[f64], j: usize) -> f64 {
        let beta = self.betas[j];
        if beta > 0.0 {
            self.beta_norm[j] - 0.5 * beta * sq_dist(v, self.values.row(j))
        } else {
            0.0
        }
    }

    pub(crate) fn n(&self) -> usize {
        self.model.n()
    }

    /// Units with positive prior mass for row `i`, in ascending order.
    pub(crate) fn support(&self, i: usize, out: &mut Vec<usize>) {
        out.clear();
        match self.prior {
            PriorTerms::Explicit(pi) => {
                out.extend(pi.row(i).iter().enumerate().filter(|(_, &p)| p > 0.0).map(|(j, _)| j));
            }
            PriorTerms::Grid(GridTerms {
                grid,
                radius: Some(r),
                ..
            }) => {
                let (row, col) = grid.coords(i);
                let (r0, r1) = (row.saturating_sub(*r), (row + r).min(grid.height - 1));
                let (c0, c1) = (col.saturating_sub(*r), (col + r).min(grid.width - 1));
                for rr in r0..=r1 {
                    out.extend((c0..=c1).map(|cc| grid.index(rr, cc)));
                }
            }
            _ => out.extend(0..self.n()),
        }
    }

    /// `log π_ij + log p(q | u_j)` for each `j` in `units`. With `value`, the
    /// value log-likelihood of units with `β_j > 0` is added as well.
    pub(crate) fn row_logits(&self, i: usize, q: &[f64], value: Option<&[f64]>, units: &[usize], out: &mut Vec<f64>) -> Result<()> {
        out.clear();
        let d = q.len();
        match self.prior {
            PriorTerms::Uniform(lp) => {
                out.extend(units.iter().map(|&j| lp + self.query_ll(q, j)));
            }
            PriorTerms::Magnitude(lp) => {
                out.extend(units.iter().map(|&j| lp[j] + self.query_ll(q, j)));
            }
            PriorTerms::Explicit(pi) => {
                let row = pi.row(i);
                out.extend(units.iter().map(|&j| row[j].ln() + self.query_ll(q, j)));
            }
            PriorTerms::Grid(g) => {
                g.row_terms(i, units, out);
                for (o, &j) in out.iter_mut().zip(units) {
                    *o += self.query_ll(q, j);
                }
            }
            PriorTerms::Embedding(pe) => {
                let mut rq = vec![0.0; d];
                let mut rk = vec![0.0; d];
                let mut priors = Vec::with_capacity(units.len());
                for &j in units {
                    pe.write_query(i, j, &mut rq)?;
                    pe.write_key(i, j, &mut rk)?;
                    let (key, alpha) = (self.keys.row(j), self.alphas[j]);
                    let beta = if value.is_some() { self.betas[j] } else { 0.0 };
                    priors.push(pe_prior_term(key, alpha, self.values.row(j), beta, &rq, &rk));
                    out.push(pe_query_term(q, key, alpha, &rq));
                }
                let z = log_sum_exp(&priors);
                for (o, p) in out.iter_mut().zip(&priors) {
                    *o += p - z;
                }
            }
        }
        if let Some(v) = value {
            for (o, &j) in out.iter_mut().zip(units) {
                *o += self.value_ll(v, j);
            }
        }
        Ok(())
    }

    #[inline]
    fn query_ll(&self, q: &[f64], j: usize) -> f64 {
        self.alpha_norm[j] - 0.5 * self.alphas[j] * sq_dist(q, self.keys.row(j))
    }

    /// Normalized responsibilities of `units` for row `i`; returns the log
    /// normalizer. `out` receives the weights.
    pub(crate) fn row_weights(&self, i: usize, q: &[f64], value: Option<&[f64]>, units: &[usize], out: &mut Vec<f64>) -> Result<f64> {
        self.row_logits(i, q, value, units, out)?;
        crate::numeric::softmax_in_place(out).ok_or(Error::AllZeroRow { row: i })
    }
}

/// Rows of queries must line up with units when the prior depends on the row.
pub(crate) fn check_rows(prior: &PriorTerms<'_>, rows: usize, n: usize) -> Result<()> {
    if prior.row_dependent() && rows != n {
        return Err(Error::DimensionMismatch {
            what: "query count for a position-dependent prior",
            expected: n,
            got: rows,
        });
    }
    Ok(())
}
