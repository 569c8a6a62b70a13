use probattn::{
    em_value_inference, magnitude_prior, query_log_likelihood, query_marginal_log_likelihood, responsibilities,
    standard_attention, value_log_likelihood, Matrix, MixtureModel, Result, ValueBatch,
};
use rand::Rng;

use super::{lift_queries, lift_rows};
use crate::instances::{self, rng_for, PriorKind, Shape};
use crate::oracle::{self, lift, Model};
use crate::{Check, Metric};

const SUITE_CORE: u64 = 1;
const SUITE_BETA: u64 = 2;
const SUITE_GRID: u64 = 3;

pub(crate) fn formulas(check: &mut Check<'_>) -> Result<()> {
    check.set_tolerance(1e-10);
    check.covers("magnitude prior matches direct evaluation");
    check.covers("query and value log-likelihoods match the Gaussian log density");
    check.covers("responsibilities match direct evaluation");
    check.covers("standard attention matches textbook softmax(αQKᵀ)M");
    check.covers("query marginal log-likelihood matches direct summation");
    check.covers("EM value iterates match direct evaluation");
    let seed = check.opts().seed;

    // n = 2, α = 1, β = 0, ‖ξ₂‖² = 2 ln 3
    let r = (2.0 * 3f64.ln()).sqrt();
    let model = MixtureModel::constrained(Matrix::from_rows(&[[0.0], [r]])?, Matrix::zeros(2, 1), 1.0, 0.0)?;
    let want = oracle::magnitude_prior(&Model::from_model(&model).expect("plain prior"));
    check.case();
    check.compare_all(&|| "magnitude prior n=2".into(), &magnitude_prior(&model)?, &want, Metric::Rel);
    check.compare_all(&|| "magnitude prior n=2 closed form".into(), &want, &[0.25, 0.75], Metric::Rel);

    // d = 1, q = 1, ξ = 0, α = 1 and m = 1, v = 2, μ = 0, β = 1
    let scalar = MixtureModel::constrained(Matrix::zeros(1, 1), Matrix::zeros(1, 1), 1.0, 1.0)?;
    let half_log = 0.5 * (1.0 / (2.0 * std::f64::consts::PI)).ln();
    check.case();
    check.compare(&|| "scalar query log-likelihood".into(), query_log_likelihood(&[1.0], 0, &scalar)?, half_log - 0.5, Metric::Rel);
    check.compare(&|| "scalar value log-likelihood".into(), value_log_likelihood(&[2.0], 0, &scalar)?, half_log - 2.0, Metric::Rel);

    for k in 0..60u64 {
        let mut rng = rng_for(seed, SUITE_CORE, k);
        let shape = Shape::random(&mut rng, 8, 5, 3);
        let kind = PriorKind::ALL[k as usize % 4];
        let model = instances::model(&mut rng, &shape, kind, true)?;
        let om = Model::from_model(&model).expect("plain prior");
        let queries = instances::queries(&mut rng, shape.n, shape.d);
        let oq = lift_queries(&queries);
        let values = ValueBatch::new(instances::matrix(&mut rng, shape.n, shape.m, 2.0));
        let ov = lift_rows(values.as_matrix());
        check.case();
        let label = |what: &'static str| move || format!("{what}, instance {k} ({kind:?})");

        let j = rng.random_range(0..shape.n);
        check.compare(&label("query log-likelihood"), query_log_likelihood(queries.get(0), j, &model)?, om.query_ll(&oq[0], j).to_f64(), Metric::Rel);
        if model.beta(j) > 0.0 {
            check.compare(&label("value log-likelihood"), value_log_likelihood(values.get(0), j, &model)?, om.value_ll(&ov[0], j).to_f64(), Metric::Rel);
        }

        let w = responsibilities(&queries, &model, None)?;
        check.compare_rows(&label("query-only responsibilities"), &w.as_matrix().to_rows(), &oracle::responsibilities(&om, &oq, None), Metric::Abs);
        let w = responsibilities(&queries, &model, Some(&values))?;
        check.compare_rows(&label("joint responsibilities"), &w.as_matrix().to_rows(), &oracle::responsibilities(&om, &oq, Some(&ov)), Metric::Abs);

        check.compare(&label("marginal log-likelihood"), query_marginal_log_likelihood(&queries, &model)?, oracle::marginal_ll(&om, &oq).to_f64(), Metric::Rel);

        let carriers: Vec<usize> = (0..shape.n).filter(|&j| model.beta(j) > 0.0).collect();
        let row = carriers[rng.random_range(0..carriers.len())];
        let init = values.get(row);
        let em = em_value_inference(queries.get(row), row, &model, init, 5)?;
        let mut v = lift(init);
        for t in 0..=5 {
            check.compare(&label("EM objective trace"), em.trace[t], oracle::value_posterior(&om, row, &oq[row], &v).to_f64(), Metric::Rel);
            if t < 5 {
                v = oracle::em_step(&om, row, &oq[row], &v);
            }
        }
        check.compare_all(&label("EM value"), &em.value, &oracle::lower(&v), Metric::Rel);

        let alpha = rng.random_range(0.2..1.5);
        let constrained = MixtureModel::constrained(model.keys().clone(), model.value_means().clone(), alpha, 0.0)?;
        let want = oracle::standard_attention(&lift_rows(model.keys()), &lift_rows(model.value_means()), alpha, &oq);
        check.compare_rows(&label("standard attention"), &standard_attention(&queries, &constrained)?.as_matrix().to_rows(), &want, Metric::Rel);
        let cm = MixtureModel::constrained(model.keys().clone(), model.value_means().clone(), alpha, 0.7)?;
        check.compare_all(&label("magnitude prior"), &magnitude_prior(&cm)?, &oracle::magnitude_prior(&Model::from_model(&cm).expect("plain")), Metric::Rel);
    }
    Ok(())
}

/// EM inference with vanishing value precision reduces to dot-product attention.
pub(crate) fn beta_limit(check: &mut Check<'_>) -> Result<()> {
    check.set_tolerance(1e-6);
    check.set_time_limit(5.0);
    check.covers("β→0 consistency: one EM step with β = 1e-8 equals standard attention (100 instances)");
    let opts = check.opts().clone();
    for k in 0..100u64 {
        let mut rng = rng_for(opts.seed, SUITE_BETA, k);
        let shape = Shape::random(&mut rng, opts.max_n, opts.max_d, opts.max_m);
        let alpha = rng.random_range(0.2..2.0);
        let keys = instances::matrix(&mut rng, shape.n, shape.d, 2.0);
        let means = instances::matrix(&mut rng, shape.n, shape.m, 2.0);
        let model = MixtureModel::constrained(keys, means, alpha, 1e-8)?;
        let queries = instances::queries(&mut rng, 3, shape.d);
        let expected = standard_attention(&queries, &model)?;
        check.case();
        for i in 0..queries.len() {
            let init = instances::matrix(&mut rng, 1, shape.m, 2.0);
            let em = em_value_inference(queries.get(i), 0, &model, init.row(0), 1)?;
            let err = em
                .value
                .iter()
                .zip(expected.get(i))
                .map(|(a, b)| (check.observe(*a) - b).abs())
                .fold(0.0, f64::max);
            check.error(&|| format!("instance {k} query {i}"), err, 1e-6);
        }
    }
    Ok(())
}

fn log_posterior(model: &MixtureModel, lp: &[f64], q: &[f64], v: f64) -> f64 {
    let terms: Vec<f64> = (0..model.n())
        .map(|j| {
            let beta = model.beta(j);
            let dv = v - model.value_mean(j)[0];
            let value = 0.5 * (beta / (2.0 * std::f64::consts::PI)).ln() - 0.5 * beta * dv * dv;
            lp[j] + query_log_likelihood(q, j, model).expect("valid unit") + value
        })
        .collect();
    let m = terms.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    m + terms.iter().map(|t| (t - m).exp()).sum::<f64>().ln()
}

/// Fixed points of EM value inference coincide with local maxima of
/// `p(v | q)` found by exhaustive search on a grid of step 1e-4.
pub(crate) fn grid_search(check: &mut Check<'_>) -> Result<()> {
    const STEP: f64 = 1e-4;
    const LIMIT: f64 = 10.0;
    check.set_tolerance(1e-3);
    check.covers("EM fixed points match grid-search maxima of p(v|q) (m = 1, n ≤ 4, 50 instances)");
    let seed = check.opts().seed;
    let points = (2.0 * LIMIT / STEP).round() as usize + 1;
    for k in 0..50u64 {
        let mut rng = rng_for(seed, SUITE_GRID, k);
        let n = rng.random_range(1..=4);
        let d = rng.random_range(1..=3);
        let keys = instances::matrix(&mut rng, n, d, 2.0);
        let means = instances::matrix(&mut rng, n, 1, 5.0);
        let alphas = (0..n).map(|_| rng.random_range(0.3..2.0)).collect();
        let betas = (0..n).map(|_| rng.random_range(0.5..3.0)).collect();
        let kind = [PriorKind::Uniform, PriorKind::Magnitude, PriorKind::Explicit][k as usize % 3];
        let prior = kind.build(&mut rng, n);
        let model = MixtureModel::new(keys, alphas, means, betas, prior)?;
        let q = instances::matrix(&mut rng, 1, d, 2.0).row(0).to_vec();
        let om = Model::from_model(&model).expect("plain prior");
        let lp: Vec<f64> = om.log_prior_row(0, true).iter().map(|l| l.map_or(f64::NEG_INFINITY, |l| l.to_f64())).collect();
        let grid: Vec<f64> = (0..points).map(|p| log_posterior(&model, &lp, &q, -LIMIT + p as f64 * STEP)).collect();
        let maxima: Vec<f64> = (1..points - 1)
            .filter(|&p| grid[p] >= grid[p - 1] && grid[p] >= grid[p + 1])
            .map(|p| -LIMIT + p as f64 * STEP)
            .collect();
        check.case();
        if maxima.is_empty() {
            check.fail(format!("instance {k}: no interior grid maximum"));
            continue;
        }
        for &start in &maxima {
            let em = em_value_inference(&q, 0, &model, &[start], 5000)?;
            check.compare(&|| format!("instance {k}: EM from grid maximum {start}"), em.value[0], start, Metric::Abs);
        }
        let init = rng.random_range(-LIMIT..LIMIT);
        let em = em_value_inference(&q, 0, &model, &[init], 5000)?;
        let v = check.observe(em.value[0]);
        let nearest = maxima.iter().map(|m| (m - v).abs()).fold(f64::INFINITY, f64::min);
        check.error(&|| format!("instance {k}: EM from {init} reached {v}"), nearest, 1e-3);
    }
    Ok(())
}
