//! Python bindings: mixture models, attention, online adaptation, position
//! embeddings and interactive segmentation sessions.
//!
//! Matrices cross the boundary as lists of rows (any nested sequence of
//! floats is accepted, including 2-D numpy arrays). Configs and priors are
//! dicts with the same fields as the JSON configs of the CLI and service.

use std::collections::BTreeMap;
use std::path::PathBuf;

use ::probattn as core;
use ::probattn::playground::{self, BBox, ClickEvent, ImageTensor, Mask, Polarity, SessionConfig};
use ::probattn::{AdaptationConfig, Adapted, FixedValues, Matrix, PositionPrior, PriorSpec, QueryBatch, ValueBatch};
use pyo3::exceptions::{PyIndexError, PyOSError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::{PyBytes, PyDict, PyString};
use pythonize::{depythonize, pythonize};

fn err(e: core::Error) -> PyErr {
    match e {
        core::Error::Io(e) => PyOSError::new_err(e.to_string()),
        core::Error::OutOfBounds { .. } => PyIndexError::new_err(e.to_string()),
        other => PyValueError::new_err(other.to_string()),
    }
}

fn serde_err(e: impl std::fmt::Display) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn matrix(rows: Vec<Vec<f64>>) -> PyResult<Matrix> {
    if rows.is_empty() {
        return Err(PyValueError::new_err("matrix has no rows"));
    }
    Matrix::from_rows(&rows).map_err(err)
}

fn queries(rows: Vec<Vec<f64>>) -> PyResult<QueryBatch> {
    Ok(QueryBatch::new(matrix(rows)?))
}

fn fixed_values(fixed: BTreeMap<usize, Vec<f64>>) -> PyResult<FixedValues> {
    let pairs: Vec<(usize, Vec<f64>)> = fixed.into_iter().collect();
    FixedValues::from_pairs(&pairs).map_err(err)
}

fn from_dict<T: serde::de::DeserializeOwned + Default>(obj: Option<&Bound<'_, PyAny>>) -> PyResult<T> {
    match obj {
        None => Ok(T::default()),
        Some(o) if o.is_none() => Ok(T::default()),
        Some(o) => depythonize(o).map_err(serde_err),
    }
}

fn to_py<'py, T: serde::Serialize>(py: Python<'py>, value: &T) -> PyResult<Bound<'py, PyAny>> {
    pythonize(py, value).map_err(serde_err)
}

/// `"uniform"`, `"magnitude"`, a [`RelativePE`], a prior dict such as
/// `{"variant": "explicit", "pi": [[...]]}`, or a row-stochastic matrix.
fn prior_spec(obj: Option<&Bound<'_, PyAny>>) -> PyResult<PriorSpec> {
    let Some(obj) = obj.filter(|o| !o.is_none()) else {
        return Ok(PriorSpec::Uniform);
    };
    if let Ok(name) = obj.downcast::<PyString>() {
        return match name.to_str()? {
            "uniform" => Ok(PriorSpec::Uniform),
            "magnitude" => Ok(PriorSpec::Magnitude),
            other => Err(PyValueError::new_err(format!("unknown prior {other:?}"))),
        };
    }
    if let Ok(pe) = obj.downcast::<RelativePE>() {
        return Ok(PriorSpec::PositionAware(PositionPrior::Embedding(pe.borrow().inner.clone())));
    }
    if obj.downcast::<PyDict>().is_ok() {
        return depythonize(obj).map_err(serde_err);
    }
    let pi: Vec<Vec<f64>> = obj.extract()?;
    Ok(PriorSpec::Explicit { pi: matrix(pi)? })
}

#[pyclass(module = "probattn", frozen)]
#[derive(Clone)]
struct MixtureModel {
    inner: core::MixtureModel,
}

#[pymethods]
impl MixtureModel {
    /// Per-unit precisions default to 1.
    #[new]
    #[pyo3(signature = (keys, value_means, alphas=None, betas=None, prior=None))]
    fn new(
        keys: Vec<Vec<f64>>,
        value_means: Vec<Vec<f64>>,
        alphas: Option<Vec<f64>>,
        betas: Option<Vec<f64>>,
        prior: Option<&Bound<'_, PyAny>>,
    ) -> PyResult<Self> {
        let n = keys.len();
        let inner = core::MixtureModel::new(
            matrix(keys)?,
            alphas.unwrap_or_else(|| vec![1.0; n]),
            matrix(value_means)?,
            betas.unwrap_or_else(|| vec![1.0; n]),
            prior_spec(prior)?,
        )
        .map_err(err)?;
        Ok(MixtureModel { inner })
    }

    /// Shared precisions and the magnitude prior.
    #[staticmethod]
    #[pyo3(signature = (keys, value_means, alpha=1.0, beta=1.0))]
    fn constrained(keys: Vec<Vec<f64>>, value_means: Vec<Vec<f64>>, alpha: f64, beta: f64) -> PyResult<Self> {
        let inner = core::MixtureModel::constrained(matrix(keys)?, matrix(value_means)?, alpha, beta).map_err(err)?;
        Ok(MixtureModel { inner })
    }

    #[staticmethod]
    fn from_json(text: &str) -> PyResult<Self> {
        Ok(MixtureModel {
            inner: core::container::from_json(text).map_err(err)?,
        })
    }

    fn to_json(&self) -> PyResult<String> {
        core::container::to_json(&self.inner).map_err(err)
    }

    fn with_prior(&self, prior: &Bound<'_, PyAny>) -> PyResult<Self> {
        Ok(MixtureModel {
            inner: self.inner.with_prior(prior_spec(Some(prior))?).map_err(err)?,
        })
    }

    #[getter]
    fn n(&self) -> usize {
        self.inner.n()
    }

    #[getter]
    fn d(&self) -> usize {
        self.inner.d()
    }

    #[getter]
    fn m(&self) -> usize {
        self.inner.m()
    }

    #[getter]
    fn keys(&self) -> Vec<Vec<f64>> {
        self.inner.keys().to_rows()
    }

    #[getter]
    fn value_means(&self) -> Vec<Vec<f64>> {
        self.inner.value_means().to_rows()
    }

    #[getter]
    fn alphas(&self) -> Vec<f64> {
        self.inner.key_precisions().to_vec()
    }

    #[getter]
    fn betas(&self) -> Vec<f64> {
        self.inner.value_precisions().to_vec()
    }

    #[getter]
    fn prior<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyAny>> {
        to_py(py, self.inner.prior())
    }

    fn __eq__(&self, other: &Self) -> bool {
        self.inner == other.inner
    }

    fn __repr__(&self) -> String {
        format!("MixtureModel(n={}, d={}, m={})", self.inner.n(), self.inner.d(), self.inner.m())
    }
}

/// Validated adaptation settings; keyword names match the JSON config.
#[pyclass(module = "probattn", frozen)]
#[derive(Clone)]
struct AdaptationSettings {
    inner: AdaptationConfig,
}

#[pymethods]
impl AdaptationSettings {
    #[new]
    #[pyo3(signature = (**kwargs))]
    fn new(kwargs: Option<&Bound<'_, PyDict>>) -> PyResult<Self> {
        let inner: AdaptationConfig = from_dict(kwargs.map(|k| k.as_any()))?;
        inner.validate().map_err(err)?;
        Ok(AdaptationSettings { inner })
    }

    fn to_dict<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyAny>> {
        to_py(py, &self.inner)
    }

    fn __repr__(&self) -> String {
        format!("AdaptationConfig({})", serde_json::to_string(&self.inner).unwrap_or_default())
    }
}

fn adaptation_config(obj: Option<&Bound<'_, PyAny>>) -> PyResult<AdaptationConfig> {
    if let Some(s) = obj.and_then(|o| o.downcast::<AdaptationSettings>().ok()) {
        return Ok(s.get().inner.clone());
    }
    let cfg: AdaptationConfig = from_dict(obj)?;
    cfg.validate().map_err(err)?;
    Ok(cfg)
}

fn adapted<'py>(py: Python<'py>, out: Adapted) -> PyResult<(MixtureModel, Bound<'py, PyAny>)> {
    Ok((MixtureModel { inner: out.model }, to_py(py, &out.flags)?))
}

#[pyclass(module = "probattn", frozen)]
#[derive(Clone)]
struct RelativePE {
    inner: core::RelativePE,
}

#[pymethods]
impl RelativePE {
    /// Gaussian tables with standard deviation `scale`.
    #[staticmethod]
    #[pyo3(signature = (height, width, dim, layout="factored", scale=1.0, seed=0))]
    fn random(height: usize, width: usize, dim: usize, layout: &str, scale: f64, seed: u64) -> PyResult<Self> {
        let layout = match layout {
            "full" => core::PeLayout::Full,
            "factored" => core::PeLayout::Factored,
            other => return Err(PyValueError::new_err(format!("unknown layout {other:?}"))),
        };
        let grid = core::GridShape::new(height, width).map_err(err)?;
        Ok(RelativePE {
            inner: core::RelativePE::random(grid, dim, layout, scale, seed).map_err(err)?,
        })
    }

    /// The same embeddings as one table per 2-D offset.
    fn to_full(&self) -> Self {
        RelativePE {
            inner: self.inner.to_full(),
        }
    }

    #[getter]
    fn shape(&self) -> (usize, usize) {
        let g = self.inner.grid();
        (g.height, g.width)
    }

    #[getter]
    fn dim(&self) -> usize {
        self.inner.dim()
    }

    fn __repr__(&self) -> String {
        let g = self.inner.grid();
        format!("RelativePE(shape=({}, {}), dim={})", g.height, g.width, self.inner.dim())
    }
}

/// Attention weights `w_ij`; with `values` the value factor is included.
#[pyfunction]
#[pyo3(signature = (queries, model, values=None))]
fn responsibilities(
    queries: Vec<Vec<f64>>,
    model: &MixtureModel,
    values: Option<Vec<Vec<f64>>>,
) -> PyResult<Vec<Vec<f64>>> {
    let values = values.map(|v| matrix(v).map(ValueBatch::new)).transpose()?;
    let w = core::responsibilities(&self::queries(queries)?, &model.inner, values.as_ref()).map_err(err)?;
    Ok(w.as_matrix().to_rows())
}

#[pyfunction]
fn standard_attention(queries: Vec<Vec<f64>>, model: &MixtureModel) -> PyResult<Vec<Vec<f64>>> {
    let out = core::standard_attention(&self::queries(queries)?, &model.inner).map_err(err)?;
    Ok(out.as_matrix().to_rows())
}

/// `Σ_j w_ij μ_j` with query-only weights under the model's prior.
#[pyfunction]
fn mixture_readout(queries: Vec<Vec<f64>>, model: &MixtureModel) -> PyResult<Vec<Vec<f64>>> {
    let out = core::mixture_readout(&self::queries(queries)?, &model.inner).map_err(err)?;
    Ok(out.as_matrix().to_rows())
}

#[pyfunction]
fn magnitude_prior(model: &MixtureModel) -> PyResult<Vec<f64>> {
    core::magnitude_prior(&model.inner).map_err(err)
}

#[pyfunction]
fn query_marginal_log_likelihood(queries: Vec<Vec<f64>>, model: &MixtureModel) -> PyResult<f64> {
    core::query_marginal_log_likelihood(&self::queries(queries)?, &model.inner).map_err(err)
}

/// MAP value for query `q` at row `row`; returns `(value, objective trace)`.
#[pyfunction]
#[pyo3(signature = (q, row, model, init, iters=50))]
fn em_value_inference(
    q: Vec<f64>,
    row: usize,
    model: &MixtureModel,
    init: Vec<f64>,
    iters: usize,
) -> PyResult<(Vec<f64>, Vec<f64>)> {
    let out = core::em_value_inference(&q, row, &model.inner, &init, iters).map_err(err)?;
    Ok((out.value, out.trace))
}

/// Combined pass over the steps enabled in `config`; `fixed` maps unit index
/// to value. Returns `(model, flags)`.
#[pyfunction]
#[pyo3(signature = (model, queries, fixed=None, config=None))]
fn adapt<'py>(
    py: Python<'py>,
    model: &MixtureModel,
    queries: Vec<Vec<f64>>,
    fixed: Option<BTreeMap<usize, Vec<f64>>>,
    config: Option<&Bound<'py, PyAny>>,
) -> PyResult<(MixtureModel, Bound<'py, PyAny>)> {
    let fixed = fixed.map(fixed_values).transpose()?;
    let cfg = adaptation_config(config)?;
    let out = core::adapt(&model.inner, &self::queries(queries)?, fixed.as_ref(), &cfg).map_err(err)?;
    adapted(py, out)
}

#[pyfunction]
#[pyo3(signature = (model, queries, config=None))]
fn adapt_keys<'py>(
    py: Python<'py>,
    model: &MixtureModel,
    queries: Vec<Vec<f64>>,
    config: Option<&Bound<'py, PyAny>>,
) -> PyResult<(MixtureModel, Bound<'py, PyAny>)> {
    let out = core::adapt_keys(&model.inner, &self::queries(queries)?, &adaptation_config(config)?).map_err(err)?;
    adapted(py, out)
}

#[pyfunction]
#[pyo3(signature = (model, queries, config=None))]
fn adapt_alphas<'py>(
    py: Python<'py>,
    model: &MixtureModel,
    queries: Vec<Vec<f64>>,
    config: Option<&Bound<'py, PyAny>>,
) -> PyResult<(MixtureModel, Bound<'py, PyAny>)> {
    let out = core::adapt_alphas(&model.inner, &self::queries(queries)?, &adaptation_config(config)?).map_err(err)?;
    adapted(py, out)
}

type FixedStep = fn(&core::MixtureModel, &QueryBatch, &FixedValues, &AdaptationConfig) -> core::Result<Adapted>;

fn fixed_step<'py>(
    py: Python<'py>,
    step: FixedStep,
    model: &MixtureModel,
    queries: Vec<Vec<f64>>,
    fixed: BTreeMap<usize, Vec<f64>>,
    config: Option<&Bound<'py, PyAny>>,
) -> PyResult<(MixtureModel, Bound<'py, PyAny>)> {
    let out = step(&model.inner, &self::queries(queries)?, &fixed_values(fixed)?, &adaptation_config(config)?)
        .map_err(err)?;
    adapted(py, out)
}

#[pyfunction]
#[pyo3(signature = (model, queries, fixed, config=None))]
fn propagate_values<'py>(
    py: Python<'py>,
    model: &MixtureModel,
    queries: Vec<Vec<f64>>,
    fixed: BTreeMap<usize, Vec<f64>>,
    config: Option<&Bound<'py, PyAny>>,
) -> PyResult<(MixtureModel, Bound<'py, PyAny>)> {
    fixed_step(py, core::propagate_values, model, queries, fixed, config)
}

#[pyfunction]
#[pyo3(signature = (model, queries, fixed, config=None))]
fn update_betas<'py>(
    py: Python<'py>,
    model: &MixtureModel,
    queries: Vec<Vec<f64>>,
    fixed: BTreeMap<usize, Vec<f64>>,
    config: Option<&Bound<'py, PyAny>>,
) -> PyResult<(MixtureModel, Bound<'py, PyAny>)> {
    fixed_step(py, core::update_betas, model, queries, fixed, config)
}

#[pyfunction]
#[pyo3(signature = (model, queries, fixed, config=None))]
fn update_priors<'py>(
    py: Python<'py>,
    model: &MixtureModel,
    queries: Vec<Vec<f64>>,
    fixed: BTreeMap<usize, Vec<f64>>,
    config: Option<&Bound<'py, PyAny>>,
) -> PyResult<(MixtureModel, Bound<'py, PyAny>)> {
    fixed_step(py, core::update_priors, model, queries, fixed, config)
}

/// Position-aware attention over the grid of `pe`, one query per unit.
/// `shared=False` lifts the shared-precision requirement.
#[pyfunction]
#[pyo3(signature = (queries, model, pe, shared=true))]
fn pe_attention(queries: Vec<Vec<f64>>, model: &MixtureModel, pe: &RelativePE, shared: bool) -> PyResult<Vec<Vec<f64>>> {
    let q = self::queries(queries)?;
    let out = if shared {
        core::pe_attention(&q, &model.inner, &pe.inner)
    } else {
        core::pe_attention_general(&q, &model.inner, &pe.inner)
    }
    .map_err(err)?;
    Ok(out.as_matrix().to_rows())
}

/// One axial pass along `axis` (`"height"` or `"width"`) over the grid of `pe`.
#[pyfunction]
#[pyo3(signature = (features, values, model, pe, axis, context))]
fn axial_attention(
    features: Vec<Vec<f64>>,
    values: Vec<Vec<f64>>,
    model: &MixtureModel,
    pe: &RelativePE,
    axis: &str,
    context: usize,
) -> PyResult<Vec<Vec<f64>>> {
    let axis = match axis {
        "height" => core::Axis::Height,
        "width" => core::Axis::Width,
        other => return Err(PyValueError::new_err(format!("unknown axis {other:?}"))),
    };
    let cfg = core::AxialConfig::new(pe.inner.grid(), axis, context).map_err(err)?;
    let out = core::axial_attention(&matrix(features)?, &matrix(values)?, &model.inner, &cfg, &pe.inner).map_err(err)?;
    Ok(out.to_rows())
}

fn load_image(obj: &Bound<'_, PyAny>) -> PyResult<ImageTensor> {
    if let Ok(bytes) = obj.downcast::<PyBytes>() {
        return ImageTensor::decode(bytes.as_bytes()).map_err(err);
    }
    let path: PathBuf = obj.extract()?;
    ImageTensor::open(path).map_err(err)
}

fn load_mask(obj: &Bound<'_, PyAny>) -> PyResult<Mask> {
    if let Ok(bytes) = obj.downcast::<PyBytes>() {
        return Mask::decode(bytes.as_bytes()).map_err(err);
    }
    if let Ok(path) = obj.extract::<PathBuf>() {
        return Mask::open(path).map_err(err);
    }
    let rows: Vec<Vec<bool>> = obj.extract()?;
    let (h, w) = (rows.len(), rows.first().map_or(0, Vec::len));
    Mask::new(h, w, rows.into_iter().flatten().collect()).map_err(err)
}

fn mask_rows(mask: &Mask) -> Vec<Vec<bool>> {
    mask.data().chunks(mask.width()).map(<[bool]>::to_vec).collect()
}

/// Interactive binary segmentation of one image. `image` and `gt` are PNG
/// bytes or paths (`gt` may also be a nested list of booleans); `bbox` is
/// `(top, left, bottom, right)`, half-open.
#[pyclass(module = "probattn")]
struct SegmentationSession {
    inner: playground::SegmentationSession,
}

#[pymethods]
impl SegmentationSession {
    #[new]
    #[pyo3(signature = (image, gt=None, bbox=None, config=None))]
    fn new(
        image: &Bound<'_, PyAny>,
        gt: Option<&Bound<'_, PyAny>>,
        bbox: Option<(usize, usize, usize, usize)>,
        config: Option<&Bound<'_, PyAny>>,
    ) -> PyResult<Self> {
        let image = load_image(image)?;
        let gt = gt.filter(|g| !g.is_none()).map(load_mask).transpose()?;
        let bbox = bbox.map(|(t, l, b, r)| BBox::new(t, l, b, r)).transpose().map_err(err)?;
        let config: SessionConfig = from_dict(config)?;
        let inner = playground::init_session(&image, gt.as_ref(), bbox, &config).map_err(err)?;
        Ok(SegmentationSession { inner })
    }

    /// Fixes a disk of `radius` (the config's click radius when omitted).
    #[pyo3(signature = (row, col, positive=true, radius=None))]
    fn click(&mut self, py: Python<'_>, row: usize, col: usize, positive: bool, radius: Option<usize>) -> PyResult<()> {
        let click = ClickEvent {
            row,
            col,
            polarity: if positive { Polarity::Positive } else { Polarity::Negative },
            radius: radius.unwrap_or(self.inner.config().click_radius),
        };
        let inner = &mut self.inner;
        py.allow_threads(|| inner.apply_click(click)).map_err(err)
    }

    fn undo(&mut self, py: Python<'_>) -> PyResult<()> {
        let inner = &mut self.inner;
        py.allow_threads(|| inner.undo()).map_err(err)
    }

    /// Replaces the config; with `replay` the clicks are re-run under it.
    #[pyo3(signature = (config, replay=true))]
    fn set_config(&mut self, py: Python<'_>, config: &Bound<'_, PyAny>, replay: bool) -> PyResult<()> {
        let config: SessionConfig = depythonize(config).map_err(serde_err)?;
        let inner = &mut self.inner;
        py.allow_threads(|| inner.set_config(config, replay)).map_err(err)
    }

    /// The simulated annotator's next click as `(row, col, positive)`, or
    /// `None` once the mask matches the ground truth.
    fn suggest_click(&self) -> PyResult<Option<(usize, usize, bool)>> {
        let gt = self
            .inner
            .ground_truth()
            .ok_or_else(|| PyValueError::new_err("session has no ground truth"))?;
        let action = playground::simulate_annotator(self.inner.predict_mask(), gt, self.inner.config().click_radius)
            .map_err(err)?;
        Ok(match action {
            playground::AnnotatorAction::Click(c) => Some((c.row, c.col, c.polarity == Polarity::Positive)),
            playground::AnnotatorAction::Done => None,
        })
    }

    #[getter]
    fn mask(&self) -> Vec<Vec<bool>> {
        mask_rows(self.inner.predict_mask())
    }

    #[getter]
    fn shape(&self) -> (usize, usize) {
        (self.inner.height(), self.inner.width())
    }

    #[getter]
    fn iou(&self) -> Option<f64> {
        self.inner.iou()
    }

    #[getter]
    fn iou_history(&self) -> Vec<f64> {
        self.inner.iou_history().to_vec()
    }

    #[getter]
    fn clicks<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyAny>> {
        to_py(py, &self.inner.clicks())
    }

    #[getter]
    fn config<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyAny>> {
        to_py(py, self.inner.config())
    }

    /// The model after the latest value propagation.
    #[getter]
    fn model(&self) -> MixtureModel {
        MixtureModel {
            inner: self.inner.model().clone(),
        }
    }

    fn __repr__(&self) -> String {
        format!(
            "SegmentationSession(shape=({}, {}), clicks={})",
            self.inner.height(),
            self.inner.width(),
            self.inner.clicks().len()
        )
    }
}

/// Writes a synthetic dataset and returns the manifest path.
#[pyfunction]
#[pyo3(signature = (out_dir, count=20, size=64, seed=0))]
fn write_synthetic_dataset(out_dir: PathBuf, count: usize, size: usize, seed: u64) -> PyResult<PathBuf> {
    playground::write_dataset(out_dir, count, size, seed).map_err(err)
}

#[pyfunction]
fn iou(mask: &Bound<'_, PyAny>, gt: &Bound<'_, PyAny>) -> PyResult<f64> {
    playground::iou(&load_mask(mask)?, &load_mask(gt)?).map_err(err)
}

#[pymodule]
#[pyo3(name = "probattn")]
fn probattn_module(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("__version__", env!("CARGO_PKG_VERSION"))?;
    m.add_class::<MixtureModel>()?;
    m.add("AdaptationConfig", m.py().get_type::<AdaptationSettings>())?;
    m.add_class::<RelativePE>()?;
    m.add_class::<SegmentationSession>()?;
    m.add_function(wrap_pyfunction!(responsibilities, m)?)?;
    m.add_function(wrap_pyfunction!(standard_attention, m)?)?;
    m.add_function(wrap_pyfunction!(mixture_readout, m)?)?;
    m.add_function(wrap_pyfunction!(magnitude_prior, m)?)?;
    m.add_function(wrap_pyfunction!(query_marginal_log_likelihood, m)?)?;
    m.add_function(wrap_pyfunction!(em_value_inference, m)?)?;
    m.add_function(wrap_pyfunction!(adapt, m)?)?;
    m.add_function(wrap_pyfunction!(adapt_keys, m)?)?;
    m.add_function(wrap_pyfunction!(adapt_alphas, m)?)?;
    m.add_function(wrap_pyfunction!(propagate_values, m)?)?;
    m.add_function(wrap_pyfunction!(update_betas, m)?)?;
    m.add_function(wrap_pyfunction!(update_priors, m)?)?;
    m.add_function(wrap_pyfunction!(pe_attention, m)?)?;
    m.add_function(wrap_pyfunction!(axial_attention, m)?)?;
    m.add_function(wrap_pyfunction!(write_synthetic_dataset, m)?)?;
    m.add_function(wrap_pyfunction!(iou, m)?)?;
    Ok(())
}
