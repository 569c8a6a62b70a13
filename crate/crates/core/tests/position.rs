use probattn::{
    axial_attention, axial_stack, pe_attention, pe_attention_general, responsibilities, AxialConfig, Axis, GridShape,
    Matrix, MixtureModel, PeLayout, PositionPrior, PriorSpec, QueryBatch, RelativePE,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> Matrix {
    Matrix::from_vec(rows, cols, (0..rows * cols).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap()
}

fn embedding_model(grid: GridShape, d: usize, m: usize, layout: PeLayout, seed: u64) -> (MixtureModel, RelativePE, QueryBatch) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = grid.len();
    let pe = RelativePE::random(grid, d, layout, 0.5, seed).unwrap();
    let model = MixtureModel::new(
        random(&mut rng, n, d),
        vec![0.9; n],
        random(&mut rng, n, m),
        vec![0.6; n],
        PriorSpec::PositionAware(PositionPrior::Embedding(pe.clone())),
    )
    .unwrap();
    let q = QueryBatch::new(random(&mut rng, n, d));
    (model, pe, q)
}

#[test]
fn full_window_axial_equals_line_attention() {
    let grid = GridShape::line(9).unwrap();
    let (model, pe, q) = embedding_model(grid, 3, 2, PeLayout::Full, 4);
    let cfg = AxialConfig::new(grid, Axis::Width, 9).unwrap();
    let axial = axial_attention(q.as_matrix(), model.value_means(), &model, &cfg, &pe).unwrap();
    let full = pe_attention(&q, &model, &pe).unwrap();
    assert!(axial.max_abs_diff(full.as_matrix()) < 1e-12);
}

#[test]
fn single_row_height_pass_is_identity() {
    let grid = GridShape::new(1, 6).unwrap();
    let (model, pe, q) = embedding_model(grid, 2, 1, PeLayout::Factored, 9);
    let values = Matrix::from_rows(&[[1.0], [2.0], [3.0], [4.0], [5.0], [6.0]]).unwrap();
    let out = axial_stack(q.as_matrix(), &values, &model, grid, 3, &[Axis::Height], &pe).unwrap();
    assert_eq!(out, values);
}

#[test]
fn translation_on_a_line() {
    let len = 12;
    let grid = GridShape::line(len).unwrap();
    let (model, pe, q) = embedding_model(grid, 2, 1, PeLayout::Full, 21);
    let shift = |m: &Matrix| {
        let rows: Vec<&[f64]> = (0..len).map(|i| m.row(i.saturating_sub(1))).collect();
        Matrix::from_rows(&rows).unwrap()
    };
    let moved = MixtureModel::new(
        shift(model.keys()),
        model.key_precisions().to_vec(),
        shift(model.value_means()),
        model.value_precisions().to_vec(),
        model.prior().clone(),
    )
    .unwrap();
    let ctx = 3;
    let cfg = AxialConfig::new(grid, Axis::Width, ctx).unwrap();
    let a = axial_attention(q.as_matrix(), model.value_means(), &model, &cfg, &pe).unwrap();
    let b = axial_attention(&shift(q.as_matrix()), moved.value_means(), &moved, &cfg, &pe).unwrap();
    for i in ctx..len - 1 - ctx {
        assert!((a.get(i, 0) - b.get(i + 1, 0)).abs() < 1e-9, "position {i}");
    }
}

#[test]
fn factored_and_full_tables_agree() {
    let grid = GridShape::new(4, 5).unwrap();
    let (model, pe, q) = embedding_model(grid, 3, 2, PeLayout::Factored, 5);
    let full = pe.to_full();
    let a = pe_attention(&q, &model, &pe).unwrap();
    let b = pe_attention(&q, &model, &full).unwrap();
    assert!(a.as_matrix().max_abs_diff(b.as_matrix()) < 1e-12);
    let cfg = AxialConfig::new(grid, Axis::Height, 2).unwrap();
    let a = axial_attention(q.as_matrix(), model.value_means(), &model, &cfg, &pe).unwrap();
    let b = axial_attention(q.as_matrix(), model.value_means(), &model, &cfg, &full).unwrap();
    assert!(a.max_abs_diff(&b) < 1e-12);
}

#[test]
fn shared_precision_required_by_pe_attention() {
    let grid = GridShape::line(3).unwrap();
    let (model, pe, q) = embedding_model(grid, 2, 1, PeLayout::Full, 1);
    let uneven = model.with_key_precisions(vec![0.5, 1.0, 1.5]).unwrap();
    assert!(pe_attention(&q, &uneven, &pe).is_err());
    assert!(pe_attention_general(&q, &uneven, &pe).is_ok());
}

/// `π_ij ∝ exp(-‖p_i - p_j‖ / scale)` over the Chebyshev window, built by hand.
fn windowed_prior(grid: GridShape, scale: f64, radius: Option<usize>) -> Matrix {
    let n = grid.len();
    let mut pi = Matrix::zeros(n, n);
    for i in 0..n {
        let (ri, ci) = grid.coords(i);
        for j in 0..n {
            let (rj, cj) = grid.coords(j);
            let (dr, dc) = (ri.abs_diff(rj), ci.abs_diff(cj));
            if radius.is_none_or(|r| dr.max(dc) <= r) {
                pi.set(i, j, (-((dr * dr + dc * dc) as f64).sqrt() / scale).exp());
            }
        }
        let s: f64 = pi.row(i).iter().sum();
        pi.row_mut(i).iter_mut().for_each(|p| *p /= s);
    }
    pi
}

#[test]
fn grid_distance_prior_matches_explicit_matrix() {
    let grid = GridShape::new(5, 7).unwrap();
    let n = grid.len();
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let keys = random(&mut rng, n, 2);
    let q = QueryBatch::new(random(&mut rng, n, 2));
    for (scale, radius) in [(2.0, None), (1.5, Some(1)), (3.0, Some(2)), (0.7, Some(10))] {
        let prior = match radius {
            Some(r) => PriorSpec::local_grid_distance(grid, scale, r).unwrap(),
            None => PriorSpec::grid_distance(grid, scale).unwrap(),
        };
        let m = MixtureModel::new(keys.clone(), vec![1.0; n], Matrix::zeros(n, 1), vec![0.0; n], prior).unwrap();
        let explicit = m
            .with_prior(PriorSpec::Explicit {
                pi: windowed_prior(grid, scale, radius),
            })
            .unwrap();
        let a = responsibilities(&q, &m, None).unwrap();
        let b = responsibilities(&q, &explicit, None).unwrap();
        assert!(a.as_matrix().max_abs_diff(b.as_matrix()) < 1e-12, "scale {scale} radius {radius:?}");
    }
}
