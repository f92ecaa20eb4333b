use serde::{Deserialize, Serialize};

use super::params::{DenseGrad, Gradients, ModelParams, RowGrads};
use crate::linalg::Matrix;

/// Guard added to `√acc` in the AdaGrad denominator.
pub const ADAGRAD_EPS: f64 = 1e-8;

/// Elementwise AdaGrad: `acc += g²; θ −= lr·g / (√acc + ε)`.
pub fn adagrad_update(theta: &mut [f64], acc: &mut [f64], grad: &[f64], lr: f64) {
    for ((t, a), &g) in theta.iter_mut().zip(acc.iter_mut()).zip(grad) {
        *a += g * g;
        *t -= lr * g / (a.sqrt() + ADAGRAD_EPS);
    }
}

/// Squared-gradient accumulators with the layout of [`ModelParams`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdagradState {
    pub ent: [Matrix; 2],
    pub rel: [Matrix; 2],
    pub cls: Matrix,
    pub w_o: Vec<f64>,
    pub b_o: Vec<f64>,
    pub w_m: Vec<f64>,
    pub b_m: Vec<f64>,
    pub w_a: Vec<f64>,
}

impl AdagradState {
    pub fn zeros_like(p: &ModelParams) -> Self {
        let z = |m: &Matrix| Matrix::zeros(m.rows(), m.cols());
        AdagradState {
            ent: [z(&p.ent1), z(&p.ent2)],
            rel: [z(&p.rel1), z(&p.rel2)],
            cls: z(&p.cls),
            w_o: vec![0.0; p.w_o.as_slice().len()],
            b_o: vec![0.0; p.b_o.len()],
            w_m: vec![0.0; p.w_m.as_slice().len()],
            b_m: vec![0.0; p.b_m.len()],
            w_a: vec![0.0; p.w_a.as_slice().len()],
        }
    }
}

fn step_rows(table: &mut Matrix, acc: &mut Matrix, g: &RowGrads, lr: f64) {
    for (r, grad) in g.iter() {
        adagrad_update(table.row_mut(r), acc.row_mut(r), grad, lr);
    }
}

fn step_dense(theta: &mut [f64], acc: &mut [f64], g: &DenseGrad, lr: f64) {
    if g.touched {
        adagrad_update(theta, acc, &g.data, lr);
    }
}

/// Applies one AdaGrad step for every tensor the gradient touched.
pub fn adagrad_step(p: &mut ModelParams, g: &Gradients, state: &mut AdagradState, lr: f64) {
    let [acc_e1, acc_e2] = &mut state.ent;
    step_rows(&mut p.ent1, acc_e1, &g.ent[0], lr);
    step_rows(&mut p.ent2, acc_e2, &g.ent[1], lr);
    let [acc_r1, acc_r2] = &mut state.rel;
    step_rows(&mut p.rel1, acc_r1, &g.rel[0], lr);
    step_rows(&mut p.rel2, acc_r2, &g.rel[1], lr);
    step_rows(&mut p.cls, &mut state.cls, &g.cls, lr);
    step_dense(p.w_o.as_mut_slice(), &mut state.w_o, &g.w_o, lr);
    step_dense(&mut p.b_o, &mut state.b_o, &g.b_o, lr);
    step_dense(p.w_m.as_mut_slice(), &mut state.w_m, &g.w_m, lr);
    step_dense(&mut p.b_m, &mut state.b_m, &g.b_m, lr);
    step_dense(p.w_a.as_mut_slice(), &mut state.w_a, &g.w_a, lr);
}
