//! Relative position embeddings folded into the per-unit query likelihood and
//! the mixture prior, plus axial attention over 2-D grids.
//!
//! For a query at unit `i` and a key at unit `j` with relative offset
//! `δ = pos(j) - pos(i)`, the query likelihood becomes
//! `N(q | (ξ_j + r^q_δ)/2, 1/(2α_j) I)` and the prior logit becomes
//! `log N(ξ_j | r^k_δ, 1/α_j I) + α_j/2 (2‖ξ_j‖² + ‖r^q_δ‖² + ‖r^k_δ‖²) + β_j/2 ‖μ_j‖²`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::model::MixtureModel;
use crate::numeric::{log_gaussian, softmax_in_place, sq_dist, sq_norm};

/// Default half-width of the axial context window, in pixels.
pub const DEFAULT_AXIAL_CONTEXT: usize = 64;

/// Row-major 2-D grid of units; unit `i` sits at `(i / width, i % width)`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct GridShape {
    pub height: usize,
    pub width: usize,
}

impl GridShape {
    pub fn new(height: usize, width: usize) -> Result<Self> {
        if height == 0 || width == 0 {
            return Err(Error::ShapeMismatch(format!(
                "grid dimensions must be positive, got {height}x{width}"
            )));
        }
        Ok(GridShape { height, width })
    }

    /// A 1-D grid of `len` units laid out along the width axis.
    pub fn line(len: usize) -> Result<Self> {
        GridShape::new(1, len)
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.height * self.width
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    #[inline]
    pub fn coords(&self, i: usize) -> (usize, usize) {
        (i / self.width, i % self.width)
    }

    #[inline]
    pub fn index(&self, row: usize, col: usize) -> usize {
        row * self.width + col
    }

    pub fn transpose(&self) -> GridShape {
        GridShape {
            height: self.width,
            width: self.height,
        }
    }

    pub(crate) fn offset(&self, i: usize, j: usize) -> (isize, isize) {
        let (ri, ci) = self.coords(i);
        let (rj, cj) = self.coords(j);
        (rj as isize - ri as isize, cj as isize - ci as isize)
    }
}

/// Table of embeddings indexed by relative offset.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "variant", rename_all = "snake_case")]
pub enum PeTable {
    /// One vector per 2-D offset, `(2H-1)(2W-1)` rows ordered by `(δh, δw)` ascending.
    Full { table: Matrix },
    /// `r_(δh,δw) = height[δh] + width[δw]`, with `2H-1` and `2W-1` rows.
    Factored { height: Matrix, width: Matrix },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PeLayout {
    Full,
    Factored,
}

impl PeTable {
    fn dim(&self) -> usize {
        match self {
            PeTable::Full { table } => table.cols(),
            PeTable::Factored { height, .. } => height.cols(),
        }
    }

    fn validate(&self, grid: GridShape) -> Result<()> {
        let (span_h, span_w) = (2 * grid.height - 1, 2 * grid.width - 1);
        match self {
            PeTable::Full { table } => {
                if table.rows() != span_h * span_w {
                    return Err(Error::ShapeMismatch(format!(
                        "full embedding table needs {} rows for a {}x{} grid, got {}",
                        span_h * span_w,
                        grid.height,
                        grid.width,
                        table.rows()
                    )));
                }
            }
            PeTable::Factored { height, width } => {
                if height.rows() != span_h || width.rows() != span_w {
                    return Err(Error::ShapeMismatch(format!(
                        "factored tables need {span_h} and {span_w} rows, got {} and {}",
                        height.rows(),
                        width.rows()
                    )));
                }
                if height.cols() != width.cols() {
                    return Err(Error::DimensionMismatch {
                        what: "factored width table",
                        expected: height.cols(),
                        got: width.cols(),
                    });
                }
            }
        }
        Ok(())
    }

    fn write(&self, grid: GridShape, dh: isize, dw: isize, out: &mut [f64]) -> Result<()> {
        let (h, w) = (grid.height as isize, grid.width as isize);
        if dh.abs() >= h || dw.abs() >= w {
            return Err(Error::OffsetOutOfRange { dh, dw });
        }
        let (ih, iw) = ((dh + h - 1) as usize, (dw + w - 1) as usize);
        match self {
            PeTable::Full { table } => {
                out.copy_from_slice(table.row(ih * (2 * grid.width - 1) + iw));
            }
            PeTable::Factored { height, width } => {
                for ((o, a), b) in out.iter_mut().zip(height.row(ih)).zip(width.row(iw)) {
                    *o = a + b;
                }
            }
        }
        Ok(())
    }

    fn random(grid: GridShape, d: usize, layout: PeLayout, scale: f64, rng: &mut ChaCha8Rng) -> Self {
        let mut fill = |rows: usize| {
            let data = (0..rows * d)
                .map(|_| rng.random_range(-scale..=scale))
                .collect();
            Matrix::from_vec(rows, d, data).expect("sized")
        };
        let (span_h, span_w) = (2 * grid.height - 1, 2 * grid.width - 1);
        match layout {
            PeLayout::Full => PeTable::Full {
                table: fill(span_h * span_w),
            },
            PeLayout::Factored => PeTable::Factored {
                height: fill(span_h),
                width: fill(span_w),
            },
        }
    }

    fn to_full(&self, grid: GridShape) -> PeTable {
        let (span_h, span_w) = (2 * grid.height - 1, 2 * grid.width - 1);
        let d = self.dim();
        let mut table = Matrix::zeros(span_h * span_w, d);
        for ih in 0..span_h {
            for iw in 0..span_w {
                let dh = ih as isize - (grid.height as isize - 1);
                let dw = iw as isize - (grid.width as isize - 1);
                self.write(grid, dh, dw, table.row_mut(ih * span_w + iw))
                    .expect("offset within table");
            }
        }
        PeTable::Full { table }
    }

    fn transposed(&self, grid: GridShape) -> PeTable {
        match self {
            PeTable::Factored { height, width } => PeTable::Factored {
                height: width.clone(),
                width: height.clone(),
            },
            PeTable::Full { table } => {
                let t = grid.transpose();
                let (span_h, span_w) = (2 * t.height - 1, 2 * t.width - 1);
                let mut out = Matrix::zeros(table.rows(), table.cols());
                for ih in 0..span_h {
                    for iw in 0..span_w {
                        // offset (a, b) on the transposed grid is (b, a) on the original
                        let src = iw * (2 * grid.width - 1) + ih;
                        out.row_mut(ih * span_w + iw).copy_from_slice(table.row(src));
                    }
                }
                PeTable::Full { table: out }
            }
        }
    }
}

/// Query-side and key-side relative embeddings for one grid.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RelativePeRepr", into = "RelativePeRepr")]
pub struct RelativePE {
    grid: GridShape,
    query: PeTable,
    key: PeTable,
}

#[derive(Serialize, Deserialize)]
struct RelativePeRepr {
    grid: GridShape,
    height_offsets: [isize; 2],
    width_offsets: [isize; 2],
    query: PeTable,
    key: PeTable,
}

impl TryFrom<RelativePeRepr> for RelativePE {
    type Error = Error;

    fn try_from(r: RelativePeRepr) -> Result<Self> {
        let pe = RelativePE::new(r.grid, r.query, r.key)?;
        let (h, w) = (r.grid.height as isize, r.grid.width as isize);
        if r.height_offsets != [1 - h, h - 1] || r.width_offsets != [1 - w, w - 1] {
            return Err(Error::Format(
                "position embedding offset ranges do not match the grid".into(),
            ));
        }
        Ok(pe)
    }
}

impl From<RelativePE> for RelativePeRepr {
    fn from(pe: RelativePE) -> Self {
        let (h, w) = (pe.grid.height as isize, pe.grid.width as isize);
        RelativePeRepr {
            grid: pe.grid,
            height_offsets: [1 - h, h - 1],
            width_offsets: [1 - w, w - 1],
            query: pe.query,
            key: pe.key,
        }
    }
}

impl RelativePE {
    pub fn new(grid: GridShape, query: PeTable, key: PeTable) -> Result<Self> {
        GridShape::new(grid.height, grid.width)?;
        query.validate(grid)?;
        key.validate(grid)?;
        if query.dim() != key.dim() {
            return Err(Error::DimensionMismatch {
                what: "key embedding",
                expected: query.dim(),
                got: key.dim(),
            });
        }
        Ok(RelativePE { grid, query, key })
    }

    pub fn zeros(grid: GridShape, d: usize, layout: PeLayout) -> Result<Self> {
        let (span_h, span_w) = (2 * grid.height - 1, 2 * grid.width - 1);
        let table = || match layout {
            PeLayout::Full => PeTable::Full {
                table: Matrix::zeros(span_h * span_w, d),
            },
            PeLayout::Factored => PeTable::Factored {
                height: Matrix::zeros(span_h, d),
                width: Matrix::zeros(span_w, d),
            },
        };
        RelativePE::new(grid, table(), table())
    }

    /// Tables with entries drawn uniformly from `[-scale, scale]`.
    pub fn random(grid: GridShape, d: usize, layout: PeLayout, scale: f64, seed: u64) -> Result<Self> {
        GridShape::new(grid.height, grid.width)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let query = PeTable::random(grid, d, layout, scale, &mut rng);
        let key = PeTable::random(grid, d, layout, scale, &mut rng);
        RelativePE::new(grid, query, key)
    }

    pub fn grid(&self) -> GridShape {
        self.grid
    }

    pub fn dim(&self) -> usize {
        self.query.dim()
    }

    pub fn query_table(&self) -> &PeTable {
        &self.query
    }

    pub fn key_table(&self) -> &PeTable {
        &self.key
    }

    /// Same embeddings expressed as full offset tables.
    pub fn to_full(&self) -> RelativePE {
        RelativePE {
            grid: self.grid,
            query: self.query.to_full(self.grid),
            key: self.key.to_full(self.grid),
        }
    }

    /// Embeddings for the transposed grid.
    pub fn transposed(&self) -> RelativePE {
        RelativePE {
            grid: self.grid.transpose(),
            query: self.query.transposed(self.grid),
            key: self.key.transposed(self.grid),
        }
    }

    fn offset(&self, i: usize, j: usize) -> Result<(isize, isize)> {
        let n = self.grid.len();
        for idx in [i, j] {
            if idx >= n {
                return Err(Error::UnitOutOfRange { index: idx, len: n });
            }
        }
        Ok(self.grid.offset(i, j))
    }

    pub(crate) fn write_query(&self, i: usize, j: usize, out: &mut [f64]) -> Result<()> {
        let (dh, dw) = self.offset(i, j)?;
        self.query.write(self.grid, dh, dw, out)
    }

    pub(crate) fn write_key(&self, i: usize, j: usize, out: &mut [f64]) -> Result<()> {
        let (dh, dw) = self.offset(i, j)?;
        self.key.write(self.grid, dh, dw, out)
    }

    /// `r^q_{j-i}`.
    pub fn query_embedding(&self, i: usize, j: usize) -> Result<Vec<f64>> {
        let mut out = vec![0.0; self.dim()];
        self.write_query(i, j, &mut out)?;
        Ok(out)
    }

    /// `r^k_{j-i}`.
    pub fn key_embedding(&self, i: usize, j: usize) -> Result<Vec<f64>> {
        let mut out = vec![0.0; self.dim()];
        self.write_key(i, j, &mut out)?;
        Ok(out)
    }
}

/// Query log-likelihood with the query-side embedding folded into the mean.
pub(crate) fn pe_query_term(q: &[f64], key: &[f64], alpha: f64, rq: &[f64]) -> f64 {
    let sq: f64 = q
        .iter()
        .zip(key)
        .zip(rq)
        .map(|((q, k), r)| {
            let diff = q - 0.5 * (k + r);
            diff * diff
        })
        .sum();
    log_gaussian(sq, 2.0 * alpha, q.len())
}

/// Unnormalized log prior with key-side and query-side embeddings.
pub(crate) fn pe_prior_term(key: &[f64], alpha: f64, value: &[f64], beta: f64, rq: &[f64], rk: &[f64]) -> f64 {
    let value_term = if beta > 0.0 { 0.5 * beta * sq_norm(value) } else { 0.0 };
    log_gaussian(sq_dist(key, rk), alpha, key.len())
        + 0.5 * alpha * (2.0 * sq_norm(key) + sq_norm(rq) + sq_norm(rk))
        + value_term
}

fn check_pe(model: &MixtureModel, pe: &RelativePE) -> Result<()> {
    if pe.grid.len() != model.n() {
        return Err(Error::ShapeMismatch(format!(
            "embedding grid has {} units, model has {}",
            pe.grid.len(),
            model.n()
        )));
    }
    if pe.dim() != model.d() {
        return Err(Error::DimensionMismatch {
            what: "position embedding",
            expected: model.d(),
            got: pe.dim(),
        });
    }
    Ok(())
}

/// `log N(q | (ξ_j + r^q_{j-i})/2, 1/(2α_j) I)`.
pub fn pe_query_log_likelihood(
    q: &[f64],
    j: usize,
    i: usize,
    model: &MixtureModel,
    pe: &RelativePE,
) -> Result<f64> {
    check_pe(model, pe)?;
    model.check_unit(j)?;
    if q.len() != model.d() {
        return Err(Error::DimensionMismatch {
            what: "query",
            expected: model.d(),
            got: q.len(),
        });
    }
    let rq = pe.query_embedding(i, j)?;
    Ok(pe_query_term(q, model.key(j), model.alpha(j), &rq))
}

/// Unnormalized `log π_ij` under the embedding prior.
pub fn pe_prior_logits(i: usize, j: usize, model: &MixtureModel, pe: &RelativePE) -> Result<f64> {
    check_pe(model, pe)?;
    model.check_unit(j)?;
    let rq = pe.query_embedding(i, j)?;
    let rk = pe.key_embedding(i, j)?;
    Ok(pe_prior_term(
        model.key(j),
        model.alpha(j),
        model.value_mean(j),
        model.beta(j),
        &rq,
        &rk,
    ))
}

/// Attention with position-aware weights `w_ij ∝ exp(prior_ij + query_ij)` and
/// output `Σ_j w_ij μ_j`. Requires shared precisions.
pub fn pe_attention(queries: &crate::QueryBatch, model: &MixtureModel, pe: &RelativePE) -> Result<crate::ValueBatch> {
    if model.uniform_alpha().is_none() {
        return Err(Error::NonUniformPrecision { which: "key" });
    }
    if model.uniform_beta().is_none() {
        return Err(Error::NonUniformPrecision { which: "value" });
    }
    pe_attention_general(queries, model, pe)
}

/// [`pe_attention`] without the shared-precision requirement.
pub fn pe_attention_general(
    queries: &crate::QueryBatch,
    model: &MixtureModel,
    pe: &RelativePE,
) -> Result<crate::ValueBatch> {
    check_pe(model, pe)?;
    queries.check_per_unit(model)?;
    let n = model.n();
    let units: Vec<usize> = (0..n).collect();
    let mut out = Matrix::zeros(n, model.m());
    for i in 0..n {
        attend_row(
            queries.get(i),
            i,
            &units,
            model,
            model.value_means(),
            pe,
            out.row_mut(i),
        )?;
    }
    Ok(crate::ValueBatch::new(out))
}

fn attend_row(
    q: &[f64],
    i: usize,
    units: &[usize],
    model: &MixtureModel,
    values: &Matrix,
    pe: &RelativePE,
    out: &mut [f64],
) -> Result<()> {
    let d = model.d();
    let mut rq = vec![0.0; d];
    let mut rk = vec![0.0; d];
    let mut logits = Vec::with_capacity(units.len());
    for &j in units {
        pe.write_query(i, j, &mut rq)?;
        pe.write_key(i, j, &mut rk)?;
        let (key, alpha) = (model.key(j), model.alpha(j));
        logits.push(
            pe_prior_term(key, alpha, values.row(j), model.beta(j), &rq, &rk)
                + pe_query_term(q, key, alpha, &rq),
        );
    }
    softmax_in_place(&mut logits).ok_or(Error::AllZeroRow { row: i })?;
    out.fill(0.0);
    for (&j, w) in units.iter().zip(&logits) {
        for (o, v) in out.iter_mut().zip(values.row(j)) {
            *o += w * v;
        }
    }
    Ok(())
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Axis {
    Height,
    Width,
}

/// One axial attention block. `context` is the largest absolute offset a
/// pixel attends to along `axis`; the window is clipped at the border.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct AxialConfig {
    pub grid: GridShape,
    pub context: usize,
    pub axis: Axis,
}

impl AxialConfig {
    pub fn new(grid: GridShape, axis: Axis, context: usize) -> Result<Self> {
        GridShape::new(grid.height, grid.width)?;
        let len = match axis {
            Axis::Height => grid.height,
            Axis::Width => grid.width,
        };
        if context > len {
            return Err(Error::InvalidConfig(format!(
                "axial context {context} exceeds axis length {len}"
            )));
        }
        Ok(AxialConfig { grid, context, axis })
    }

    /// The default context, shortened to the axis length on small grids.
    pub fn with_default_context(grid: GridShape, axis: Axis) -> Result<Self> {
        let len = match axis {
            Axis::Height => grid.height,
            Axis::Width => grid.width,
        };
        AxialConfig::new(grid, axis, DEFAULT_AXIAL_CONTEXT.min(len))
    }
}

/// Attention along one axis: every pixel attends over the pixels of its column
/// (`Height`) or row (`Width`) within the context window. `features` are the
/// per-pixel queries (`H·W × d`), `values` replace the model's expected values
/// (`H·W × m`); keys and precisions come from `model`.
pub fn axial_attention(
    features: &Matrix,
    values: &Matrix,
    model: &MixtureModel,
    cfg: &AxialConfig,
    pe: &RelativePE,
) -> Result<Matrix> {
    let grid = cfg.grid;
    let n = grid.len();
    if features.rows() != n || values.rows() != n || model.n() != n {
        return Err(Error::ShapeMismatch(format!(
            "axial attention over {}x{} needs {n} features, values and units; got {}, {}, {}",
            grid.height,
            grid.width,
            features.rows(),
            values.rows(),
            model.n()
        )));
    }
    if pe.grid != grid {
        return Err(Error::ShapeMismatch(
            "position embedding grid differs from the axial grid".into(),
        ));
    }
    if features.cols() != model.d() {
        return Err(Error::DimensionMismatch {
            what: "feature",
            expected: model.d(),
            got: features.cols(),
        });
    }
    check_pe(model, pe)?;
    let ctx = cfg.context;
    let mut out = Matrix::zeros(n, values.cols());
    let mut units = Vec::new();
    for i in 0..n {
        let (r, c) = grid.coords(i);
        units.clear();
        match cfg.axis {
            Axis::Height => {
                let lo = r.saturating_sub(ctx);
                let hi = (r + ctx).min(grid.height - 1);
                units.extend((lo..=hi).map(|rr| grid.index(rr, c)));
            }
            Axis::Width => {
                let lo = c.saturating_sub(ctx);
                let hi = (c + ctx).min(grid.width - 1);
                units.extend((lo..=hi).map(|cc| grid.index(r, cc)));
            }
        }
        attend_row(features.row(i), i, &units, model, values, pe, out.row_mut(i))?;
    }
    Ok(out)
}

/// Consecutive axial blocks, each consuming the previous block's output as
/// values. `[Height, Width]` is the corrective self-attention head layout.
pub fn axial_stack(
    features: &Matrix,
    values: &Matrix,
    model: &MixtureModel,
    grid: GridShape,
    context: usize,
    axes: &[Axis],
    pe: &RelativePE,
) -> Result<Matrix> {
    let mut current = values.clone();
    for &axis in axes {
        let len = match axis {
            Axis::Height => grid.height,
            Axis::Width => grid.width,
        };
        let cfg = AxialConfig::new(grid, axis, context.min(len))?;
        current = axial_attention(features, &current, model, &cfg, pe)?;
    }
    Ok(current)
}
