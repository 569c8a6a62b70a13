use probattn::{
    adapt, adapt_keys, axial_attention, magnitude_prior, pe_attention, propagate_values, responsibilities,
    AdaptationConfig, Anchor, AxialConfig, Axis, FixedValues, GridShape, Matrix, MixtureModel, PeLayout,
    PositionPrior, PriorSpec, QueryBatch, Result,
};
use rand::seq::SliceRandom;
use rand::Rng;

use super::adaptation::instance;
use super::position::{grid_model, random_grid};
use crate::instances::{self, rng_for, PriorKind, Shape};
use crate::{Check, Metric};

const SUITE_INVARIANTS: u64 = 30;

fn permute_rows(m: &Matrix, perm: &[usize]) -> Matrix {
    let rows: Vec<&[f64]> = perm.iter().map(|&p| m.row(p)).collect();
    Matrix::from_rows(&rows).expect("same width")
}

fn shift(m: &Matrix, by: &[f64]) -> Matrix {
    let rows: Vec<Vec<f64>> = m.iter_rows().map(|r| r.iter().zip(by).map(|(x, s)| x + s).collect()).collect();
    Matrix::from_rows(&rows).expect("same width")
}

/// Unit indices of the transposed grid, in the original grid's order.
fn transpose_index(grid: GridShape) -> Vec<usize> {
    let t = grid.transpose();
    (0..grid.len())
        .map(|i| {
            let (r, c) = grid.coords(i);
            t.index(c, r)
        })
        .collect()
}

fn inverse(perm: &[usize]) -> Vec<usize> {
    let mut inv = vec![0; perm.len()];
    for (i, &p) in perm.iter().enumerate() {
        inv[p] = i;
    }
    inv
}

fn bits_equal(a: &[f64], b: &[f64]) -> bool {
    a.len() == b.len() && a.iter().zip(b).all(|(x, y)| x.to_bits() == y.to_bits())
}

pub(crate) fn run(check: &mut Check<'_>) -> Result<()> {
    const TIGHT: f64 = 1e-12;
    check.set_tolerance(TIGHT);
    check.covers("responsibility rows sum to one");
    check.covers("translating queries and keys together leaves responsibilities unchanged");
    check.covers("permuting units permutes the magnitude prior and responsibilities");
    check.covers("1-D translation equivariance of axial attention away from the border");
    check.covers("factored and full embedding tables give identical attention");
    check.covers("axial attention along the height equals attention along the width of the transposed grid");
    check.covers("a huge key prior weight leaves keys at their anchor");
    check.covers("fixing every unit to a constant propagates that constant with θ = 0");
    check.covers("adaptation steps leave parameters they do not update bit-identical");
    let opts = check.opts().clone();

    for k in 0..60u64 {
        let mut rng = rng_for(opts.seed, SUITE_INVARIANTS, k);
        let shape = Shape::random(&mut rng, opts.max_n, opts.max_d, opts.max_m);
        let kind = PriorKind::ALL[k as usize % 4];
        let inst = instance(&mut rng, &shape, kind, true)?;
        let (model, queries) = (&inst.model, &inst.queries);
        let label = |what: &'static str| move || format!("{what}, instance {k} ({kind:?})");
        check.case();

        let w = responsibilities(queries, model, None)?;
        for i in 0..w.rows() {
            check.compare(&label("row sum"), w.row(i).iter().sum(), 1.0, Metric::Abs);
        }

        if kind == PriorKind::Uniform {
            let by: Vec<f64> = (0..shape.d).map(|_| rng.random_range(-3.0..3.0)).collect();
            let moved = model.with_keys(shift(model.keys(), &by))?;
            let moved_q = QueryBatch::new(shift(queries.as_matrix(), &by));
            let w2 = responsibilities(&moved_q, &moved, None)?;
            check.compare_rows(&label("translation"), &w2.as_matrix().to_rows(), &w.as_matrix().to_rows(), Metric::Abs);
        }

        let mut perm: Vec<usize> = (0..shape.n).collect();
        perm.shuffle(&mut rng);
        let alpha = rng.random_range(0.3..2.0);
        let cm = MixtureModel::constrained(model.keys().clone(), model.value_means().clone(), alpha, 0.5)?;
        let pm = MixtureModel::constrained(permute_rows(cm.keys(), &perm), permute_rows(cm.value_means(), &perm), alpha, 0.5)?;
        let prior = magnitude_prior(&cm)?;
        let want: Vec<f64> = perm.iter().map(|&p| prior[p]).collect();
        check.compare_all(&label("permuted magnitude prior"), &magnitude_prior(&pm)?, &want, Metric::Abs);
        let w = responsibilities(queries, &cm, None)?;
        let wp = responsibilities(queries, &pm, None)?;
        for i in 0..queries.len() {
            let want: Vec<f64> = perm.iter().map(|&p| w.get(i, p)).collect();
            check.compare_all(&label("permuted responsibilities"), wp.row(i), &want, Metric::Abs);
        }

        // a prior weight of 1e12 pins the keys to their anchor
        let cfg = AdaptationConfig {
            theta_xi: 1e12,
            key_iters: 3,
            anchor: Anchor::Initial,
            ..AdaptationConfig::default()
        };
        let pinned = adapt_keys(model, queries, &cfg)?.model;
        check.compare_tol(&label("θ_ξ = 1e12 keys"), pinned.keys().max_abs_diff(model.keys()), 0.0, Metric::Abs, 1e-10);

        let c: Vec<f64> = (0..shape.m).map(|_| rng.random_range(-2.0..2.0)).collect();
        let all = FixedValues::new((0..shape.n).collect(), Matrix::from_rows(&vec![c.clone(); shape.n])?)?;
        let cfg = AdaptationConfig {
            theta_mu: 0.0,
            value_iters: 2,
            ..AdaptationConfig::default()
        };
        let spread = propagate_values(model, queries, &all, &cfg)?.model;
        for j in 0..shape.n {
            if model.beta(j) > 0.0 {
                check.compare_all(&label("constant propagation"), spread.value_mean(j), &c, Metric::Abs);
            } else {
                check.check(&label("β = 0 mean kept under constant propagation"), bits_equal(spread.value_mean(j), model.value_mean(j)));
            }
        }

        let keys_only = AdaptationConfig {
            theta_xi: 0.5,
            key_iters: 2,
            ..AdaptationConfig::default()
        };
        let after = adapt(model, queries, Some(&inst.fixed), &keys_only)?.model;
        check.check(
            &label("key step keeps α, μ, β, π"),
            bits_equal(after.key_precisions(), model.key_precisions())
                && bits_equal(after.value_means().as_slice(), model.value_means().as_slice())
                && bits_equal(after.value_precisions(), model.value_precisions())
                && after.prior() == model.prior(),
        );
        let values_only = AdaptationConfig {
            theta_mu: 0.5,
            value_iters: 2,
            theta_beta1: 2.0,
            beta_iters: 1,
            ..AdaptationConfig::default()
        };
        let after = adapt(model, queries, Some(&inst.fixed), &values_only)?.model;
        let mut kept = bits_equal(after.keys().as_slice(), model.keys().as_slice())
            && bits_equal(after.key_precisions(), model.key_precisions())
            && after.prior() == model.prior();
        for j in 0..shape.n {
            if model.beta(j) == 0.0 {
                kept &= bits_equal(after.value_mean(j), model.value_mean(j)) && after.beta(j) == 0.0;
            }
        }
        check.check(&label("value steps keep ξ, α, π and β = 0 units"), kept);
    }

    for k in 0..30u64 {
        let mut rng = rng_for(opts.seed, SUITE_INVARIANTS, 1000 + k);
        let grid = random_grid(&mut rng, k)?;
        let d = rng.random_range(1..=3);
        let m = rng.random_range(1..=2);
        let (model, pe) = grid_model(&mut rng, grid, d, m, PeLayout::Factored)?;
        let n = grid.len();
        let queries = instances::queries(&mut rng, n, d);
        let label = |what: &'static str| move || format!("{what}, {}x{} instance {k}", grid.height, grid.width);
        check.case();

        let full = pe.to_full();
        let full_model = model.with_prior(PriorSpec::PositionAware(PositionPrior::Embedding(full.clone())))?;
        let a = pe_attention(&queries, &model, &pe)?;
        let b = pe_attention(&queries, &full_model, &full)?;
        check.compare_rows(&label("factored vs full"), &a.as_matrix().to_rows(), &b.as_matrix().to_rows(), Metric::Abs);

        let values = instances::matrix(&mut rng, n, m, 1.0);
        let context = rng.random_range(0..=grid.height);
        let out = axial_attention(queries.as_matrix(), &values, &model, &AxialConfig::new(grid, Axis::Height, context)?, &pe)?;
        let to_t = transpose_index(grid);
        let from_t = inverse(&to_t);
        let tpe = pe.transposed();
        let tmodel = MixtureModel::new(
            permute_rows(model.keys(), &from_t),
            from_t.iter().map(|&p| model.alpha(p)).collect(),
            permute_rows(model.value_means(), &from_t),
            from_t.iter().map(|&p| model.beta(p)).collect(),
            PriorSpec::PositionAware(PositionPrior::Embedding(tpe.clone())),
        )?;
        let tout = axial_attention(
            &permute_rows(queries.as_matrix(), &from_t),
            &permute_rows(&values, &from_t),
            &tmodel,
            &AxialConfig::new(grid.transpose(), Axis::Width, context)?,
            &tpe,
        )?;
        check.compare_rows(&label("axial transpose"), &permute_rows(&tout, &to_t).to_rows(), &out.to_rows(), Metric::Abs);
    }

    for k in 0..30u64 {
        let mut rng = rng_for(opts.seed, SUITE_INVARIANTS, 2000 + k);
        let len = rng.random_range(4..=16);
        let grid = GridShape::line(len)?;
        let d = rng.random_range(1..=3);
        let (model, pe) = grid_model(&mut rng, grid, d, 1, PeLayout::Full)?;
        let context = rng.random_range(0..=(len - 2) / 2);
        let features = instances::matrix(&mut rng, len, d, 1.0);
        let values = instances::matrix(&mut rng, len, 1, 1.0);
        let moved = |m: &Matrix, fill: &[f64]| -> Matrix {
            let rows: Vec<&[f64]> = (0..len).map(|i| if i == 0 { fill } else { m.row(i - 1) }).collect();
            Matrix::from_rows(&rows).expect("same width")
        };
        let fill: Vec<f64> = (0..d).map(|_| rng.random_range(-1.0..1.0)).collect();
        let shifted = MixtureModel::new(
            moved(model.keys(), &fill),
            model.key_precisions().to_vec(),
            moved(model.value_means(), &[0.3]),
            model.value_precisions().to_vec(),
            model.prior().clone(),
        )?;
        let cfg = AxialConfig::new(grid, Axis::Width, context)?;
        let out = axial_attention(&features, &values, &model, &cfg, &pe)?;
        let sout = axial_attention(&moved(&features, &fill), &moved(&values, &[0.3]), &shifted, &cfg, &pe)?;
        check.case();
        for i in context..len - 1 - context {
            check.compare(&|| format!("1-D translation, length {len} context {context} position {i}"), sout.get(i + 1, 0), out.get(i, 0), Metric::Abs);
        }
    }
    Ok(())
}
