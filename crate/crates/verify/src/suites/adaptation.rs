use probattn::{
    adapt_alphas, adapt_keys, em_value_inference, propagate_values, update_betas, update_priors, AdaptationConfig,
    Anchor, BetaDimFactor, FixedValues, Matrix, MixtureModel, PriorSpec, QueryBatch, Result,
};
use rand::seq::index::sample;
use rand::Rng;

use super::{lift_queries, lift_rows};
use crate::instances::{self, rng_for, PriorKind, Shape};
use crate::oracle::{self, lift, GammaUpdate, KeyUpdate, MeanUpdate, Model, Vector};
use crate::{Check, Metric};

const SUITE_FORMULAS: u64 = 10;
const SUITE_EM: u64 = 11;
const SUITE_KEYS: u64 = 12;
const SUITE_VALUES: u64 = 13;

pub(crate) struct Instance {
    pub model: MixtureModel,
    pub oracle: Model,
    pub queries: QueryBatch,
    pub lifted: Vec<Vector>,
    pub fixed: FixedValues,
    pub fixed_oracle: Vec<(usize, Vector)>,
}

pub(crate) fn instance(rng: &mut impl Rng, shape: &Shape, kind: PriorKind, zero_betas: bool) -> Result<Instance> {
    let model = instances::model(rng, shape, kind, zero_betas)?;
    let queries = instances::queries(rng, shape.n, shape.d);
    let count = rng.random_range(1..=shape.n);
    let mut units = sample(rng, shape.n, count).into_vec();
    units.sort_unstable();
    let values = instances::matrix(rng, count, shape.m, 2.0);
    let fixed_oracle = units.iter().zip(values.iter_rows()).map(|(&i, v)| (i, lift(v))).collect();
    let fixed = FixedValues::new(units, values)?;
    Ok(Instance {
        oracle: Model::from_model(&model).expect("plain prior"),
        lifted: lift_queries(&queries),
        model,
        queries,
        fixed,
        fixed_oracle,
    })
}

fn anchor(k: u64) -> Anchor {
    if k.is_multiple_of(2) {
        Anchor::Previous
    } else {
        Anchor::Initial
    }
}

pub(crate) fn formulas(check: &mut Check<'_>) -> Result<()> {
    check.set_tolerance(1e-9);
    check.covers("key update matches direct evaluation (50 instances)");
    check.covers("key precision update matches direct evaluation (50 instances)");
    check.covers("value propagation matches direct evaluation (50 instances)");
    check.covers("value precision update matches direct evaluation (50 instances)");
    check.covers("mixing proportion update matches direct evaluation (50 instances)");
    let opts = check.opts().clone();
    for k in 0..50u64 {
        let mut rng = rng_for(opts.seed, SUITE_FORMULAS, k);
        let shape = Shape::random(&mut rng, opts.max_n, opts.max_d, opts.max_m);
        let kind = PriorKind::ALL[k as usize % 4];
        let inst = instance(&mut rng, &shape, kind, true)?;
        let label = |what: &'static str| move || format!("{what}, instance {k} ({kind:?})");
        check.case();

        let cfg = AdaptationConfig {
            theta_xi: rng.random_range(0.0..2.0),
            key_iters: 3,
            anchor: anchor(k),
            freeze_magnitude_prior: k % 4 == 1,
            ..AdaptationConfig::default()
        };
        let got = adapt_keys(&inst.model, &inst.queries, &cfg)?.model;
        let want = oracle::adapt_keys(
            &inst.oracle,
            &inst.lifted,
            &KeyUpdate {
                theta: cfg.theta_xi,
                anchor: cfg.anchor,
                iters: cfg.key_iters,
                freeze_magnitude: cfg.freeze_magnitude_prior,
            },
        );
        check.compare_rows(&label("keys"), &got.keys().to_rows(), &lower_rows(&want), Metric::Rel);

        let cfg = AdaptationConfig {
            theta_alpha1: rng.random_range(1.0..3.0),
            theta_alpha2: rng.random_range(0.5..2.0),
            alpha_iters: 3,
            ..AdaptationConfig::default()
        };
        let got = adapt_alphas(&inst.model, &inst.queries, &cfg)?.model;
        let want = oracle::adapt_alphas(&inst.oracle, &inst.lifted, &gamma(cfg.theta_alpha1, cfg.theta_alpha2, cfg.alpha_iters));
        check.compare_all(&label("key precisions"), got.key_precisions(), &oracle::lower(&want), Metric::Rel);

        let cfg = AdaptationConfig {
            theta_mu: rng.random_range(0.0..2.0),
            value_iters: 3,
            anchor: anchor(k + 1),
            ..AdaptationConfig::default()
        };
        let got = propagate_values(&inst.model, &inst.queries, &inst.fixed, &cfg)?.model;
        let want = oracle::propagate_values(
            &inst.oracle,
            &inst.lifted,
            &inst.fixed_oracle,
            &MeanUpdate {
                theta: cfg.theta_mu,
                anchor: cfg.anchor,
                iters: cfg.value_iters,
            },
        );
        check.compare_rows(&label("value means"), &got.value_means().to_rows(), &lower_rows(&want), Metric::Rel);

        let factor = if k % 3 == 0 { BetaDimFactor::Query } else { BetaDimFactor::Value };
        let cfg = AdaptationConfig {
            theta_beta1: rng.random_range(1.0..3.0),
            theta_beta2: rng.random_range(0.5..2.0),
            beta_iters: 2,
            beta_dim_factor: factor,
            ..AdaptationConfig::default()
        };
        let got = update_betas(&inst.model, &inst.queries, &inst.fixed, &cfg)?.model;
        let want = oracle::update_betas(
            &inst.oracle,
            &inst.lifted,
            &inst.fixed_oracle,
            &gamma(cfg.theta_beta1, cfg.theta_beta2, cfg.beta_iters),
            factor,
        );
        check.compare_all(&label("value precisions"), got.value_precisions(), &oracle::lower(&want), Metric::Rel);

        let cfg = AdaptationConfig {
            theta_pi: rng.random_range(1.0..2.0),
            prior_iters: 2,
            ..AdaptationConfig::default()
        };
        let got = update_priors(&inst.model, &inst.queries, &inst.fixed, &cfg)?.model;
        let want = oracle::update_priors(&inst.oracle, &inst.lifted, &inst.fixed_oracle, cfg.theta_pi, cfg.prior_iters);
        match got.prior() {
            PriorSpec::Explicit { pi } => check.compare_rows(&label("mixing proportions"), &pi.to_rows(), &want, Metric::Abs),
            other => check.fail(format!("instance {k}: prior update returned {other:?}")),
        }
    }
    Ok(())
}

fn gamma(theta1: f64, theta2: f64, iters: usize) -> GammaUpdate {
    GammaUpdate { theta1, theta2, iters }
}

fn lower_rows(rows: &[Vector]) -> Vec<Vec<f64>> {
    rows.iter().map(|r| oracle::lower(r)).collect()
}

fn fixed_prior(k: u64) -> PriorKind {
    [PriorKind::Uniform, PriorKind::Explicit, PriorKind::SparseExplicit][k as usize % 3]
}

/// Records a decrease of a sequence beyond `slack` (relative to magnitude).
fn nondecreasing(check: &mut Check<'_>, label: &dyn Fn() -> String, seq: &[f64], slack: f64) {
    for t in 1..seq.len() {
        let prev = seq[t - 1];
        let cur = check.observe(seq[t]);
        let drop = (prev - cur) / prev.abs().max(1.0);
        check.error(&|| format!("{} step {t}: {prev} -> {cur}", label()), drop.max(0.0), slack);
    }
}

pub(crate) fn monotonicity(check: &mut Check<'_>) -> Result<()> {
    const SLACK: f64 = 1e-10;
    check.set_tolerance(SLACK);
    check.set_time_limit(30.0);
    check.covers("EM value inference never decreases log p(v|q) (1000 instances, mixed β)");
    check.covers("key updates with θ = 0 never decrease the query marginal likelihood (100 instances)");
    check.covers("key updates anchored at the initial keys never decrease the penalized objective (100 instances)");
    check.covers("value propagation never decreases the penalized fixed-value likelihood (100 instances)");
    let opts = check.opts().clone();

    for k in 0..1000u64 {
        let mut rng = rng_for(opts.seed, SUITE_EM, k);
        let shape = Shape::random(&mut rng, opts.max_n, opts.max_d, opts.max_m);
        let kind = PriorKind::ALL[k as usize % 4];
        let model = instances::model(&mut rng, &shape, kind, true)?;
        let q = instances::matrix(&mut rng, 1, shape.d, 2.0);
        let init = instances::matrix(&mut rng, 1, shape.m, 3.0);
        let carriers: Vec<usize> = (0..shape.n).filter(|&j| model.beta(j) > 0.0).collect();
        let row = carriers[rng.random_range(0..carriers.len())];
        check.case();
        let em = em_value_inference(q.row(0), row, &model, init.row(0), 20)?;
        nondecreasing(check, &|| format!("EM instance {k}"), &em.trace, SLACK);
    }

    const STEPS: usize = 8;
    for k in 0..100u64 {
        let mut rng = rng_for(opts.seed, SUITE_KEYS, k);
        let shape = Shape::random(&mut rng, opts.max_n, opts.max_d, opts.max_m);
        let inst = instance(&mut rng, &shape, fixed_prior(k), true)?;
        check.case();

        let mut current = inst.model.clone();
        let mut trace = vec![oracle::marginal_ll(&inst.oracle, &inst.lifted).to_f64()];
        let cfg = AdaptationConfig {
            key_iters: 1,
            ..AdaptationConfig::default()
        };
        for _ in 0..STEPS {
            current = adapt_keys(&current, &inst.queries, &cfg)?.model;
            let om = Model::from_model(&current).expect("plain prior");
            trace.push(oracle::marginal_ll(&om, &inst.lifted).to_f64());
        }
        nondecreasing(check, &|| format!("keys θ=0 instance {k}"), &trace, SLACK);

        let theta = rng.random_range(0.1..3.0);
        let initial = lift_rows(inst.model.keys());
        let objective = |keys: &Matrix| -> f64 {
            let om = Model::from_model(&inst.model.with_keys(keys.clone()).expect("same shape")).expect("plain prior");
            let keys = lift_rows(keys);
            (oracle::marginal_ll(&om, &inst.lifted) - oracle::penalty(theta, &keys, &initial)).to_f64()
        };
        let mut trace = vec![objective(inst.model.keys())];
        for t in 1..=STEPS {
            let cfg = AdaptationConfig {
                theta_xi: theta,
                key_iters: t,
                anchor: Anchor::Initial,
                ..AdaptationConfig::default()
            };
            trace.push(objective(adapt_keys(&inst.model, &inst.queries, &cfg)?.model.keys()));
        }
        nondecreasing(check, &|| format!("keys θ={theta} initial anchor, instance {k}"), &trace, SLACK);
    }

    for k in 0..100u64 {
        let mut rng = rng_for(opts.seed, SUITE_VALUES, k);
        let shape = Shape::random(&mut rng, opts.max_n, opts.max_d, opts.max_m);
        let inst = instance(&mut rng, &shape, fixed_prior(k), true)?;
        check.case();
        let theta = rng.random_range(0.0..3.0);
        let initial = lift_rows(inst.model.value_means());
        let objective = |means: &Matrix| -> f64 {
            let om = Model::from_model(&inst.model.with_value_means(means.clone()).expect("same shape")).expect("plain prior");
            let means = lift_rows(means);
            (oracle::joint_ll(&om, &inst.lifted, &inst.fixed_oracle) - oracle::penalty(theta, &means, &initial)).to_f64()
        };
        let mut trace = vec![objective(inst.model.value_means())];
        for t in 1..=STEPS {
            let cfg = AdaptationConfig {
                theta_mu: theta,
                value_iters: t,
                anchor: Anchor::Initial,
                ..AdaptationConfig::default()
            };
            trace.push(objective(propagate_values(&inst.model, &inst.queries, &inst.fixed, &cfg)?.model.value_means()));
        }
        nondecreasing(check, &|| format!("values θ={theta}, instance {k}"), &trace, SLACK);
    }
    Ok(())
}
