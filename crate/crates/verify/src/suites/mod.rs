pub(crate) mod adaptation;
pub(crate) mod core;
pub(crate) mod invariants;
pub(crate) mod position;

use probattn::{Matrix, QueryBatch};

use crate::oracle::{lift, Vector};

pub(crate) fn lift_rows(m: &Matrix) -> Vec<Vector> {
    m.iter_rows().map(lift).collect()
}

pub(crate) fn lift_queries(q: &QueryBatch) -> Vec<Vector> {
    lift_rows(q.as_matrix())
}
