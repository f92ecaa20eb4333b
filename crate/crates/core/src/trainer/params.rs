use std::collections::BTreeMap;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::kg::Side;
use crate::linalg::{normalize, Matrix};

/// Every learnable tensor.
///
/// `w_m` maps entity space into class space, so it is stored as
/// `d_o × d_e` and applied as `w_m · e`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    pub ent1: Matrix,
    pub ent2: Matrix,
    pub rel1: Matrix,
    pub rel2: Matrix,
    pub cls: Matrix,
    pub w_o: Matrix,
    pub b_o: Vec<f64>,
    pub w_m: Matrix,
    pub b_m: Vec<f64>,
    pub w_a: Matrix,
}

/// Table sizes needed to allocate [`ModelParams`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Shape {
    pub entities: [usize; 2],
    pub relations: [usize; 2],
    pub classes: usize,
    pub d_e: usize,
    pub d_o: usize,
}

fn uniform_rows<R: Rng>(rows: usize, dim: usize, rng: &mut R) -> Matrix {
    let bound = 6.0 / (dim as f64).sqrt();
    let mut m = Matrix::zeros(rows, dim);
    for r in 0..rows {
        let row = m.row_mut(r);
        for x in row.iter_mut() {
            *x = rng.gen_range(-bound..bound);
        }
        normalize(row);
    }
    m
}

impl ModelParams {
    /// Uniform `(−6/√d, 6/√d)` rows scaled to unit length; identity-like
    /// transforms and zero biases.
    pub fn random<R: Rng>(shape: Shape, rng: &mut R) -> Self {
        let Shape { d_e, d_o, .. } = shape;
        ModelParams {
            ent1: uniform_rows(shape.entities[0], d_e, rng),
            ent2: uniform_rows(shape.entities[1], d_e, rng),
            rel1: uniform_rows(shape.relations[0], d_e, rng),
            rel2: uniform_rows(shape.relations[1], d_e, rng),
            cls: uniform_rows(shape.classes, d_o, rng),
            w_o: Matrix::identity_like(d_o, d_o),
            b_o: vec![0.0; d_o],
            w_m: Matrix::identity_like(d_o, d_e),
            b_m: vec![0.0; d_o],
            w_a: Matrix::identity_like(d_e, d_e),
        }
    }

    pub fn shape(&self) -> Shape {
        Shape {
            entities: [self.ent1.rows(), self.ent2.rows()],
            relations: [self.rel1.rows(), self.rel2.rows()],
            classes: self.cls.rows(),
            d_e: self.ent1.cols(),
            d_o: self.cls.cols(),
        }
    }

    pub fn entities(&self, side: Side) -> &Matrix {
        match side {
            Side::Left => &self.ent1,
            Side::Right => &self.ent2,
        }
    }

    pub fn entities_mut(&mut self, side: Side) -> &mut Matrix {
        match side {
            Side::Left => &mut self.ent1,
            Side::Right => &mut self.ent2,
        }
    }

    pub fn relations(&self, side: Side) -> &Matrix {
        match side {
            Side::Left => &self.rel1,
            Side::Right => &self.rel2,
        }
    }

    pub fn is_finite(&self) -> bool {
        [
            &self.ent1, &self.ent2, &self.rel1, &self.rel2, &self.cls, &self.w_o, &self.w_m,
            &self.w_a,
        ]
        .iter()
        .all(|m| m.is_finite())
            && self.b_o.iter().chain(&self.b_m).all(|v| v.is_finite())
    }

    /// Overwrites rows that have a pre-computed vector.
    pub fn override_rows(table: &mut Matrix, vectors: &[Option<Vec<f64>>]) -> usize {
        let mut n = 0;
        for (r, v) in vectors.iter().enumerate() {
            if let Some(v) = v {
                table.row_mut(r).copy_from_slice(v);
                n += 1;
            }
        }
        n
    }
}

/// Sparse per-row gradient for an embedding table.
#[derive(Debug, Clone, Default)]
pub struct RowGrads {
    width: usize,
    rows: BTreeMap<usize, Vec<f64>>,
}

impl RowGrads {
    pub fn new(width: usize) -> Self {
        RowGrads {
            width,
            rows: BTreeMap::new(),
        }
    }

    pub fn row(&mut self, r: usize) -> &mut [f64] {
        let w = self.width;
        self.rows.entry(r).or_insert_with(|| vec![0.0; w])
    }

    pub fn add(&mut self, r: usize, coef: f64, v: &[f64]) {
        crate::linalg::axpy(self.row(r), coef, v);
    }

    pub fn get(&self, r: usize) -> Option<&[f64]> {
        self.rows.get(&r).map(Vec::as_slice)
    }

    pub fn iter(&self) -> impl Iterator<Item = (usize, &[f64])> {
        self.rows.iter().map(|(&r, v)| (r, v.as_slice()))
    }

    pub fn touched(&self) -> impl Iterator<Item = usize> + '_ {
        self.rows.keys().copied()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }
}

/// Dense gradient for a transform; `touched` is false until written.
#[derive(Debug, Clone, Default)]
pub struct DenseGrad {
    pub data: Vec<f64>,
    pub touched: bool,
}

impl DenseGrad {
    pub fn new(len: usize) -> Self {
        DenseGrad {
            data: vec![0.0; len],
            touched: false,
        }
    }

    pub fn slice_mut(&mut self) -> &mut [f64] {
        self.touched = true;
        &mut self.data
    }
}

/// Gradient of one loss with the layout of [`ModelParams`].
#[derive(Debug, Clone)]
pub struct Gradients {
    pub ent: [RowGrads; 2],
    pub rel: [RowGrads; 2],
    pub cls: RowGrads,
    pub w_o: DenseGrad,
    pub b_o: DenseGrad,
    pub w_m: DenseGrad,
    pub b_m: DenseGrad,
    pub w_a: DenseGrad,
}

pub(crate) fn side_index(side: Side) -> usize {
    match side {
        Side::Left => 0,
        Side::Right => 1,
    }
}

impl Gradients {
    pub fn zeros_like(p: &ModelParams) -> Self {
        let s = p.shape();
        Gradients {
            ent: [RowGrads::new(s.d_e), RowGrads::new(s.d_e)],
            rel: [RowGrads::new(s.d_e), RowGrads::new(s.d_e)],
            cls: RowGrads::new(s.d_o),
            w_o: DenseGrad::new(s.d_o * s.d_o),
            b_o: DenseGrad::new(s.d_o),
            w_m: DenseGrad::new(s.d_o * s.d_e),
            b_m: DenseGrad::new(s.d_o),
            w_a: DenseGrad::new(s.d_e * s.d_e),
        }
    }

    pub fn ent(&mut self, side: Side) -> &mut RowGrads {
        &mut self.ent[side_index(side)]
    }

    pub fn rel(&mut self, side: Side) -> &mut RowGrads {
        &mut self.rel[side_index(side)]
    }
}
