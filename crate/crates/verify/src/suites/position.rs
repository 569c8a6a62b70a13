use probattn::{
    axial_attention, pe_attention, pe_prior_logits, pe_query_log_likelihood, AxialConfig, Axis, GridShape,
    MixtureModel, PeLayout, PositionPrior, PriorSpec, RelativePE, Result,
};
use rand::Rng;

use super::{lift_queries, lift_rows};
use crate::instances::{self, rng_for};
use crate::oracle;
use crate::{Check, Metric};

const SUITE_POSITION: u64 = 20;

/// A grid model with shared precisions and the embedding prior.
pub(crate) fn grid_model(rng: &mut impl Rng, grid: GridShape, d: usize, m: usize, layout: PeLayout) -> Result<(MixtureModel, RelativePE)> {
    let n = grid.len();
    let keys = instances::matrix(rng, n, d, 1.0);
    let means = instances::matrix(rng, n, m, 1.0);
    let alpha = rng.random_range(0.3..1.5);
    let beta = if rng.random_bool(0.5) { 0.0 } else { rng.random_range(0.3..1.5) };
    let pe = RelativePE::random(grid, d, layout, 0.8, rng.random())?;
    let prior = PriorSpec::PositionAware(PositionPrior::Embedding(pe.clone()));
    let model = MixtureModel::new(keys, vec![alpha; n], means, vec![beta; n], prior)?;
    Ok((model, pe))
}

pub(crate) fn random_grid(rng: &mut impl Rng, k: u64) -> Result<GridShape> {
    if k.is_multiple_of(2) {
        GridShape::line(rng.random_range(1..=16))
    } else {
        GridShape::new(rng.random_range(1..=8), rng.random_range(1..=8))
    }
}

pub(crate) fn formulas(check: &mut Check<'_>) -> Result<()> {
    check.set_tolerance(1e-9);
    check.covers("position-aware query log-likelihood matches direct evaluation");
    check.covers("embedding prior logits match direct evaluation");
    check.covers("position-aware attention matches direct evaluation (1-D L ≤ 16, 2-D up to 8×8, full and factored tables)");
    check.covers("axial attention matches per-slice direct evaluation");
    let seed = check.opts().seed;
    for k in 0..40u64 {
        let mut rng = rng_for(seed, SUITE_POSITION, k);
        let grid = random_grid(&mut rng, k)?;
        let layout = if k % 4 < 2 { PeLayout::Full } else { PeLayout::Factored };
        let d = rng.random_range(1..=4);
        let m = rng.random_range(1..=3);
        let (model, pe) = grid_model(&mut rng, grid, d, m, layout)?;
        let (om, _) = oracle::embedding_model(&model).expect("embedding prior");
        let n = grid.len();
        let queries = instances::queries(&mut rng, n, d);
        let oq = lift_queries(&queries);
        let label = |what: &'static str| move || format!("{what}, {}x{} {layout:?} instance {k}", grid.height, grid.width);
        check.case();

        for _ in 0..5 {
            let (i, j) = (rng.random_range(0..n), rng.random_range(0..n));
            let (rq, rk) = oracle::embeddings(&pe, i, j);
            let want = oracle::pe_query_ll(&oq[i], &om.keys[j], om.alphas[j], &rq).to_f64();
            check.compare(&label("query log-likelihood"), pe_query_log_likelihood(queries.get(i), j, i, &model, &pe)?, want, Metric::Rel);
            let want = oracle::pe_prior(&om.keys[j], om.alphas[j], &om.means[j], om.betas[j], &rq, &rk).to_f64();
            check.compare(&label("prior logit"), pe_prior_logits(i, j, &model, &pe)?, want, Metric::Rel);
        }

        let got = pe_attention(&queries, &model, &pe)?;
        check.compare_rows(&label("attention"), &got.as_matrix().to_rows(), &oracle::pe_attention(&om, &pe, &oq), Metric::Rel);

        let values = instances::matrix(&mut rng, n, m, 1.0);
        for axis in [Axis::Height, Axis::Width] {
            let len = if axis == Axis::Height { grid.height } else { grid.width };
            let context = rng.random_range(0..=len);
            let cfg = AxialConfig::new(grid, axis, context)?;
            let got = axial_attention(queries.as_matrix(), &values, &model, &cfg, &pe)?;
            let want = oracle::axial(&om, &pe, &oq, &lift_rows(&values), axis, context);
            check.compare_rows(&label("axial"), &got.to_rows(), &want, Metric::Rel);
        }
    }
    Ok(())
}
