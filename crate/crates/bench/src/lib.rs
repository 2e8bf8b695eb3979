//! Deterministic fixtures shared by the solver benchmarks.

use awar::{assemble_task, build_e, class_weights, Dataset, Label, PseudoLabels, QpProblem, TransferTask};
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

/// Two Gaussian blobs in `d` dimensions, labels alternating.
pub fn blobs(rng: &mut ChaCha8Rng, rows: usize, d: usize, shift: f64) -> (DMatrix<f64>, Vec<Label>) {
    let y: Vec<Label> = (0..rows).map(|i| if i % 2 == 0 { Label::Pos } else { Label::Neg }).collect();
    let x = DMatrix::from_fn(rows, d, |i, j| {
        let z: f64 = rng.sample(StandardNormal);
        let centre = if j == 0 { y[i].value() * shift } else { 0.0 };
        z + centre
    });
    (x, y)
}

/// Transfer task with `n` source, `m_l` labeled and `m_u` unlabeled target rows,
/// its loss weights and random pseudo labels for the pool.
pub fn transfer_task(n: usize, m_l: usize, m_u: usize, d: usize, seed: u64) -> (TransferTask, DVector<f64>, PseudoLabels) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (xs, ys) = blobs(&mut rng, n, d, 1.5);
    let (xt, yt) = blobs(&mut rng, m_l, d, 1.0);
    let (xu, _) = blobs(&mut rng, m_u, d, 1.0);
    let task = assemble_task(
        &Dataset::labeled("source", xs, ys).unwrap(),
        &Dataset::labeled("target", xt, yt).unwrap(),
        &Dataset::unlabeled("pool", xu).unwrap(),
    )
    .unwrap();
    let e = build_e(&task, &class_weights(&task, 2.0).unwrap()).unwrap();
    let pseudo = PseudoLabels::new((0..m_u).map(|_| if rng.random_bool(0.5) { Label::Pos } else { Label::Neg }).collect());
    (task, e, pseudo)
}

/// Box-constrained random convex QP with one equality row, `n` variables.
pub fn box_qp(n: usize, seed: u64) -> QpProblem {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let f = DMatrix::from_fn(n, n, |_, _| rng.sample::<f64, _>(StandardNormal));
    let p = &f * f.transpose() / n as f64 + DMatrix::identity(n, n) * 1e-3;
    let q = DVector::from_fn(n, |_, _| rng.sample::<f64, _>(StandardNormal));
    let mut g = DMatrix::zeros(2 * n, n);
    for i in 0..n {
        g[(i, i)] = 1.0;
        g[(n + i, i)] = -1.0;
    }
    let h = DVector::from_element(2 * n, 1.0);
    QpProblem::new(p, q)
        .unwrap()
        .with_inequalities(g, h)
        .unwrap()
        .with_equalities(DMatrix::from_element(1, n, 1.0), DVector::zeros(1))
        .unwrap()
}
