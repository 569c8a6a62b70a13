use probattn::{
    adapt_alphas, adapt_keys, em_value_inference, magnitude_prior, propagate_values, query_log_likelihood,
    query_marginal_log_likelihood, responsibilities, standard_attention, update_betas, update_priors,
    value_log_likelihood, AdaptationConfig, FixedValues, Matrix, MixtureModel, PriorSpec, QueryBatch,
};
use std::f64::consts::PI;

fn model(keys: &[&[f64]], alphas: &[f64], means: &[&[f64]], betas: &[f64], prior: PriorSpec) -> MixtureModel {
    MixtureModel::new(
        Matrix::from_rows(keys).unwrap(),
        alphas.to_vec(),
        Matrix::from_rows(means).unwrap(),
        betas.to_vec(),
        prior,
    )
    .unwrap()
}

fn close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol
}

#[test]
fn magnitude_prior_is_uniform_at_origin() {
    let m = MixtureModel::constrained(Matrix::zeros(5, 3), Matrix::zeros(5, 2), 0.7, 1.3).unwrap();
    for p in magnitude_prior(&m).unwrap() {
        assert!(close(p, 0.2, 1e-15));
    }
    let single = MixtureModel::constrained(Matrix::from_rows(&[[4.0, -1.0]]).unwrap(), Matrix::zeros(1, 1), 2.0, 0.5).unwrap();
    assert_eq!(magnitude_prior(&single).unwrap(), vec![1.0]);
}

#[test]
fn magnitude_prior_needs_shared_precisions() {
    let m = model(&[&[0.0], &[1.0]], &[1.0, 2.0], &[&[0.0], &[0.0]], &[1.0, 1.0], PriorSpec::Magnitude);
    assert!(magnitude_prior(&m).is_err());
}

#[test]
fn query_likelihood_vanishes_at_unit_normalizer() {
    for d in [1, 2, 7] {
        let key = vec![0.3; d];
        let m = model(&[&key], &[2.0 * PI], &[&[0.0]], &[1.0], PriorSpec::Uniform);
        assert!(close(query_log_likelihood(&key, 0, &m).unwrap(), 0.0, 1e-14));
    }
}

#[test]
fn query_likelihood_decreases_with_distance() {
    let m = model(&[&[0.0, 0.0]], &[1.5], &[&[0.0]], &[1.0], PriorSpec::Uniform);
    let mut last = f64::INFINITY;
    for r in 0..20 {
        let q = [r as f64 * 0.5, 0.0];
        let ll = query_log_likelihood(&q, 0, &m).unwrap();
        assert!(ll < last);
        last = ll;
    }
}

#[test]
fn value_likelihood_vanishes_at_unit_normalizer_and_falls_with_precision() {
    let m = model(&[&[0.0]], &[1.0], &[&[1.0, -1.0]], &[2.0 * PI], PriorSpec::Uniform);
    assert!(close(value_log_likelihood(&[1.0, -1.0], 0, &m).unwrap(), 0.0, 1e-14));
    let v = [2.0, -1.0];
    let lls: Vec<f64> = [1.0, 10.0, 100.0, 1000.0]
        .iter()
        .map(|&b| value_log_likelihood(&v, 0, &m.with_value_precisions(vec![b]).unwrap()).unwrap())
        .collect();
    assert!(lls[3] < lls[2] && lls[2] < lls[1]);
}

#[test]
fn value_likelihood_undefined_without_precision() {
    let m = model(&[&[0.0]], &[1.0], &[&[1.0]], &[0.0], PriorSpec::Uniform);
    assert!(value_log_likelihood(&[1.0], 0, &m).is_err());
}

#[test]
fn single_unit_takes_all_responsibility() {
    let m = model(&[&[1.0, 2.0]], &[0.5], &[&[3.0]], &[1.0], PriorSpec::Uniform);
    let q = QueryBatch::from_rows(&[[9.0, -4.0], [0.0, 0.0]]).unwrap();
    let w = responsibilities(&q, &m, None).unwrap();
    assert_eq!(w.row(0), &[1.0]);
    assert_eq!(w.row(1), &[1.0]);
}

#[test]
fn identical_units_share_evenly() {
    let m = model(&[&[1.0], &[1.0], &[1.0], &[1.0]], &[0.8; 4], &[&[2.0][..]; 4], &[0.4; 4], PriorSpec::Uniform);
    let q = QueryBatch::from_rows(&[[-3.0], [0.5]]).unwrap();
    for i in 0..2 {
        for &x in responsibilities(&q, &m, None).unwrap().row(i) {
            assert!(close(x, 0.25, 1e-15));
        }
    }
}

#[test]
fn explicit_prior_zeros_stay_zero() {
    let pi = Matrix::from_rows(&[[1.0, 0.0], [0.5, 0.5]]).unwrap();
    let m = model(&[&[0.0], &[0.1]], &[1.0, 1.0], &[&[0.0], &[0.0]], &[1.0, 1.0], PriorSpec::Explicit { pi });
    let q = QueryBatch::from_rows(&[[0.1], [0.1]]).unwrap();
    let w = responsibilities(&q, &m, None).unwrap();
    assert_eq!(w.row(0), &[1.0, 0.0]);
    assert!(w.row(1)[1] > w.row(1)[0]);
}

#[test]
fn standard_attention_single_unit_and_equal_keys() {
    let one = MixtureModel::constrained(Matrix::from_rows(&[[1.0, 1.0]]).unwrap(), Matrix::from_rows(&[[5.0, -2.0]]).unwrap(), 1.0, 0.0).unwrap();
    let q = QueryBatch::from_rows(&[[3.0, 0.0], [-8.0, 2.0]]).unwrap();
    let out = standard_attention(&q, &one).unwrap();
    assert_eq!(out.get(0), &[5.0, -2.0]);
    assert_eq!(out.get(1), &[5.0, -2.0]);

    let means = Matrix::from_rows(&[[1.0], [2.0], [6.0]]).unwrap();
    let eq = MixtureModel::constrained(Matrix::filled(3, 2, 0.4), means, 2.0, 0.0).unwrap();
    let out = standard_attention(&q, &eq).unwrap();
    assert!(close(out.get(0)[0], 3.0, 1e-14) && close(out.get(1)[0], 3.0, 1e-14));
}

#[test]
fn em_single_unit_converges_in_one_step() {
    let m = model(&[&[0.0]], &[1.0], &[&[2.5, -1.0]], &[0.7], PriorSpec::Uniform);
    let em = em_value_inference(&[4.0], 0, &m, &[100.0, 100.0], 1).unwrap();
    assert_eq!(em.value, vec![2.5, -1.0]);
    assert_eq!(em.trace.len(), 2);
    assert!(em.trace[1] >= em.trace[0]);
}

#[test]
fn em_small_precision_matches_dot_product_attention() {
    let keys = Matrix::from_rows(&[[0.5, -1.0], [1.0, 0.2], [-0.3, 0.8]]).unwrap();
    let means = Matrix::from_rows(&[[1.0], [-2.0], [0.5]]).unwrap();
    let eps = 1e-8;
    let m = MixtureModel::constrained(keys, means, 1.2, eps).unwrap();
    let q = [0.4, 0.1];
    let em = em_value_inference(&q, 0, &m, &[3.0], 1).unwrap();
    let std = standard_attention(&QueryBatch::from_rows(&[q]).unwrap(), &m).unwrap();
    assert!(close(em.value[0], std.get(0)[0], 1e-6));
}

#[test]
fn em_needs_a_value_carrier() {
    let m = model(&[&[0.0]], &[1.0], &[&[1.0]], &[0.0], PriorSpec::Uniform);
    assert!(em_value_inference(&[0.0], 0, &m, &[0.0], 3).is_err());
    let m = m.with_value_precisions(vec![1.0]).unwrap();
    assert!(em_value_inference(&[0.0], 0, &m, &[0.0], 0).is_err());
}

#[test]
fn marginal_likelihood_examples() {
    let m = model(&[&[0.2, 0.4]], &[2.0 * PI], &[&[0.0]], &[1.0], PriorSpec::Uniform);
    let q = QueryBatch::from_rows(&[[0.2, 0.4]]).unwrap();
    assert!(close(query_marginal_log_likelihood(&q, &m).unwrap(), 0.0, 1e-14));

    let m = model(&[&[0.0], &[1.0]], &[1.0, 0.5], &[&[0.0], &[0.0]], &[1.0, 1.0], PriorSpec::Uniform);
    let once = query_marginal_log_likelihood(&QueryBatch::from_rows(&[[0.3], [2.0]]).unwrap(), &m).unwrap();
    let twice = query_marginal_log_likelihood(&QueryBatch::from_rows(&[[0.3], [2.0], [0.3]]).unwrap(), &m).unwrap();
    let single = query_marginal_log_likelihood(&QueryBatch::from_rows(&[[0.3]]).unwrap(), &m).unwrap();
    assert!(close(twice - once, single, 1e-13));
}

fn queries(rows: &[&[f64]]) -> QueryBatch {
    QueryBatch::new(Matrix::from_rows(rows).unwrap())
}

#[test]
fn key_prior_weight_pins_keys() {
    let m = model(&[&[0.0, 1.0], &[2.0, -1.0]], &[1.0, 1.0], &[&[0.0], &[0.0]], &[1.0, 1.0], PriorSpec::Uniform);
    let q = queries(&[&[5.0, 5.0], &[-3.0, 2.0], &[1.0, 1.0]]);
    let cfg = AdaptationConfig {
        theta_xi: 1e12,
        key_iters: 3,
        ..AdaptationConfig::default()
    };
    let out = adapt_keys(&m, &q, &cfg).unwrap().model;
    assert!(out.keys().max_abs_diff(m.keys()) < 1e-6);
}

#[test]
fn single_key_moves_to_query_mean() {
    let m = model(&[&[10.0, 10.0]], &[0.5], &[&[0.0]], &[1.0], PriorSpec::Uniform);
    let q = queries(&[&[1.0, 2.0], &[3.0, -2.0], &[2.0, 3.0]]);
    let cfg = AdaptationConfig {
        key_iters: 1,
        ..AdaptationConfig::default()
    };
    let out = adapt_keys(&m, &q, &cfg).unwrap().model;
    assert!(close(out.key(0)[0], 2.0, 1e-14) && close(out.key(0)[1], 1.0, 1e-14));
}

#[test]
fn key_precision_grows_without_dispersion_and_shrinks_under_strong_prior() {
    let m = model(&[&[1.0], &[50.0]], &[0.5, 0.5], &[&[0.0], &[0.0]], &[1.0, 1.0], PriorSpec::Uniform);
    let q = queries(&[&[1.0], &[1.0], &[1.0], &[1.0]]);
    let cfg = AdaptationConfig {
        theta_alpha1: 1.0,
        theta_alpha2: 0.1,
        alpha_iters: 1,
        ..AdaptationConfig::default()
    };
    let out = adapt_alphas(&m, &q, &cfg).unwrap().model;
    assert!(out.alpha(0) > m.alpha(0));
    let cfg = AdaptationConfig {
        theta_alpha2: 1e9,
        ..cfg
    };
    let out = adapt_alphas(&m, &q, &cfg).unwrap().model;
    assert!(out.alpha(0) < 1e-8);
}

#[test]
fn value_prior_weight_pins_means() {
    let m = model(&[&[0.0], &[1.0]], &[1.0, 1.0], &[&[0.5], &[-0.5]], &[1.0, 1.0], PriorSpec::Uniform);
    let q = queries(&[&[0.0], &[1.0]]);
    let fixed = FixedValues::from_pairs(&[(0, [4.0])]).unwrap();
    let cfg = AdaptationConfig {
        theta_mu: 1e12,
        value_iters: 3,
        ..AdaptationConfig::default()
    };
    let out = propagate_values(&m, &q, &fixed, &cfg).unwrap().model;
    assert!(out.value_means().max_abs_diff(m.value_means()) < 1e-6);
}

#[test]
fn single_mean_jumps_to_fixed_value() {
    let m = model(&[&[0.0]], &[1.0], &[&[-3.0, 1.0]], &[0.2], PriorSpec::Uniform);
    let fixed = FixedValues::from_pairs(&[(0, [2.0, 5.0])]).unwrap();
    let cfg = AdaptationConfig {
        theta_mu: 0.0,
        value_iters: 1,
        ..AdaptationConfig::default()
    };
    let out = propagate_values(&m, &queries(&[&[0.7]]), &fixed, &cfg).unwrap().model;
    assert_eq!(out.value_mean(0), &[2.0, 5.0]);
}

#[test]
fn value_precision_without_dispersion() {
    let m = model(&[&[0.0]], &[1.0], &[&[1.0, 2.0, 3.0]], &[0.4], PriorSpec::Uniform);
    let fixed = FixedValues::from_pairs(&[(0, [1.0, 2.0, 3.0])]).unwrap();
    let cfg = AdaptationConfig {
        theta_beta1: 2.5,
        theta_beta2: 1.0,
        beta_iters: 1,
        ..AdaptationConfig::default()
    };
    let out = update_betas(&m, &queries(&[&[0.0]]), &fixed, &cfg).unwrap().model;
    // θ₁ + (m/2)·Σw − 1 with Σw = 1, m = 3
    assert!(close(out.beta(0), 2.5 + 1.5 - 1.0, 1e-14));
    let cfg = AdaptationConfig {
        theta_beta1: 1.0,
        theta_beta2: 1e12,
        ..cfg
    };
    let out = update_betas(&m, &queries(&[&[0.0]]), &fixed, &cfg).unwrap().model;
    assert!(out.beta(0) > 0.0 && out.beta(0) < 1e-10);
}

#[test]
fn mixing_proportions_follow_responsibilities() {
    let m = model(&[&[0.0], &[1.0], &[3.0]], &[1.0; 3], &[&[0.0][..]; 3], &[1.0; 3], PriorSpec::Uniform);
    let q = queries(&[&[0.2], &[1.5], &[2.0]]);
    let empty = FixedValues::new(Vec::new(), Matrix::zeros(0, 1)).unwrap();
    let cfg = AdaptationConfig {
        theta_pi: 1.0,
        prior_iters: 1,
        ..AdaptationConfig::default()
    };
    let out = update_priors(&m, &q, &empty, &cfg).unwrap().model;
    let w = responsibilities(&q, &m, None).unwrap();
    let PriorSpec::Explicit { pi } = out.prior() else { panic!("explicit prior expected") };
    assert!(pi.max_abs_diff(w.as_matrix()) < 1e-15);

    let cfg = AdaptationConfig {
        theta_pi: 1e12,
        ..cfg
    };
    let out = update_priors(&m, &q, &empty, &cfg).unwrap().model;
    let PriorSpec::Explicit { pi } = out.prior() else { panic!("explicit prior expected") };
    assert!(pi.as_slice().iter().all(|&p| close(p, 1.0 / 3.0, 1e-9)));
}

#[test]
fn invalid_prior_weights_rejected() {
    let m = model(&[&[0.0]], &[1.0], &[&[0.0]], &[1.0], PriorSpec::Uniform);
    let cfg = AdaptationConfig {
        theta_mu: -1.0,
        value_iters: 1,
        ..AdaptationConfig::default()
    };
    let fixed = FixedValues::from_pairs(&[(0, [1.0])]).unwrap();
    assert!(propagate_values(&m, &queries(&[&[0.0]]), &fixed, &cfg).is_err());
    let cfg = AdaptationConfig {
        theta_pi: 0.0,
        ..AdaptationConfig::default()
    };
    assert!(cfg.validate().is_err());
}
