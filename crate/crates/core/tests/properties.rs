use probattn::{
    adapt, container, em_value_inference, responsibilities, standard_attention, update_priors, AdaptationConfig,
    FixedValues, Matrix, MixtureModel, PriorSpec, QueryBatch,
};
use proptest::prelude::*;

#[derive(Debug, Clone)]
struct Case {
    model: MixtureModel,
    queries: QueryBatch,
    values: Matrix,
}

fn matrix(rows: usize, cols: usize) -> impl Strategy<Value = Matrix> {
    prop::collection::vec(-3.0..3.0f64, rows * cols).prop_map(move |v| Matrix::from_vec(rows, cols, v).unwrap())
}

fn stochastic(n: usize) -> impl Strategy<Value = Matrix> {
    prop::collection::vec(0.01..1.0f64, n * n).prop_map(move |mut v| {
        for row in v.chunks_mut(n) {
            let s: f64 = row.iter().sum();
            row.iter_mut().for_each(|x| *x /= s);
        }
        Matrix::from_vec(n, n, v).unwrap()
    })
}

fn case() -> impl Strategy<Value = Case> {
    (1usize..7, 1usize..5, 1usize..4, 0u8..3).prop_flat_map(|(n, d, m, kind)| {
        let prior = match kind {
            0 => Just(PriorSpec::Uniform).boxed(),
            1 => Just(PriorSpec::Magnitude).boxed(),
            _ => stochastic(n).prop_map(|pi| PriorSpec::Explicit { pi }).boxed(),
        };
        (
            matrix(n, d),
            prop::collection::vec(0.2..2.0f64, n),
            matrix(n, m),
            prop::collection::vec(prop_oneof![Just(0.0), 0.2..2.0f64], n),
            prior,
            matrix(n, d),
            matrix(n, m),
        )
            .prop_map(|(keys, alphas, means, mut betas, prior, q, values)| {
                betas[0] = betas[0].max(0.5);
                Case {
                    model: MixtureModel::new(keys, alphas, means, betas, prior).unwrap(),
                    queries: QueryBatch::new(q),
                    values,
                }
            })
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn responsibilities_are_distributions(c in case()) {
        let w = responsibilities(&c.queries, &c.model, None).unwrap();
        for i in 0..w.rows() {
            let row = w.row(i);
            prop_assert!(row.iter().all(|&x| (0.0..=1.0).contains(&x)));
            prop_assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn common_translation_keeps_uniform_weights(c in case(), shift in -5.0..5.0f64) {
        let model = c.model.with_prior(PriorSpec::Uniform).unwrap();
        let moved = |m: &Matrix| {
            let rows: Vec<Vec<f64>> = m.iter_rows().map(|r| r.iter().map(|x| x + shift).collect()).collect();
            Matrix::from_rows(&rows).unwrap()
        };
        let w = responsibilities(&c.queries, &model, None).unwrap();
        let w2 = responsibilities(&QueryBatch::new(moved(c.queries.as_matrix())), &model.with_keys(moved(model.keys())).unwrap(), None).unwrap();
        prop_assert!(w.as_matrix().max_abs_diff(w2.as_matrix()) < 1e-9);
    }

    #[test]
    fn dot_product_attention_stays_in_hull(c in case(), alpha in 0.1..3.0f64) {
        let m = MixtureModel::constrained(c.model.keys().clone(), c.model.value_means().clone(), alpha, 0.0).unwrap();
        let out = standard_attention(&c.queries, &m).unwrap();
        for col in 0..m.m() {
            let vals: Vec<f64> = m.value_means().iter_rows().map(|r| r[col]).collect();
            let lo = vals.iter().copied().fold(f64::INFINITY, f64::min);
            let hi = vals.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            for i in 0..out.len() {
                let x = out.get(i)[col];
                prop_assert!(x >= lo - 1e-12 && x <= hi + 1e-12);
            }
        }
    }

    #[test]
    fn em_objective_never_drops(c in case(), row_pick in 0usize..100) {
        let carriers: Vec<usize> = (0..c.model.n()).filter(|&j| c.model.beta(j) > 0.0).collect();
        let row = carriers[row_pick % carriers.len()];
        let em = em_value_inference(c.queries.get(row), row, &c.model, c.values.row(row), 15).unwrap();
        for t in 1..em.trace.len() {
            prop_assert!(em.trace[t] >= em.trace[t - 1] - 1e-10 * em.trace[t - 1].abs().max(1.0));
        }
    }

    #[test]
    fn adaptation_keeps_parameters_valid(c in case(), theta in 0.0..2.0f64) {
        let n = c.model.n();
        let fixed = FixedValues::new(vec![0], Matrix::from_rows(&[c.values.row(0)]).unwrap()).unwrap();
        let cfg = AdaptationConfig {
            theta_xi: theta,
            theta_mu: theta,
            key_iters: 2,
            alpha_iters: 2,
            value_iters: 2,
            beta_iters: 2,
            theta_beta1: 2.0,
            ..AdaptationConfig::default()
        };
        let out = adapt(&c.model, &c.queries, Some(&fixed), &cfg).unwrap().model;
        prop_assert_eq!(out.n(), n);
        prop_assert!(out.keys().as_slice().iter().all(|x| x.is_finite()));
        prop_assert!(out.value_means().as_slice().iter().all(|x| x.is_finite()));
        prop_assert!(out.key_precisions().iter().all(|&a| a > 0.0 && a.is_finite()));
        for j in 0..n {
            prop_assert_eq!(out.beta(j) == 0.0, c.model.beta(j) == 0.0);
        }
    }

    #[test]
    fn prior_update_rows_are_stochastic(c in case(), theta in 1.0..5.0f64) {
        let fixed = FixedValues::new(vec![0], Matrix::from_rows(&[c.values.row(0)]).unwrap()).unwrap();
        let cfg = AdaptationConfig { theta_pi: theta, prior_iters: 2, ..AdaptationConfig::default() };
        let out = update_priors(&c.model, &c.queries, &fixed, &cfg).unwrap().model;
        let PriorSpec::Explicit { pi } = out.prior() else { panic!("explicit prior expected") };
        for row in pi.iter_rows() {
            prop_assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn container_round_trip_is_exact(c in case()) {
        let text = container::to_json(&c.model).unwrap();
        prop_assert_eq!(container::from_json(&text).unwrap(), c.model);
    }
}
