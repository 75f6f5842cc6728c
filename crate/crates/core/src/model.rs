//! A trainable model: entity/relation tables, a composition kind, and Harmony parameters.

use rand::Rng;
use rand_distr::StandardNormal;

use crate::composition::{compose_slices, CompositionKind, Dims};
use crate::error::{check_dim, Error, Result};
use crate::harmony::{self, HarmonyParams, LambdaMode};
use crate::kb::Triplet;
use crate::rng::rng_for;
use crate::tensor::{norm, DenseVector, SymmetricMatrix};

/// Row-major dense matrix of embedding rows.
#[derive(Debug, Clone, PartialEq)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Matrix {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        check_dim("matrix data", rows * cols, data.len())?;
        Ok(Matrix { rows, cols, data })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn row_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }
}

/// Entity and relation embedding matrices.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingTable {
    pub entities: Matrix,
    pub relations: Matrix,
}

impl EmbeddingTable {
    /// Rows drawn uniformly on the unit sphere.
    pub fn random_unit(n_entities: usize, n_relations: usize, dims: Dims, seed: u64) -> Self {
        let mut rng = rng_for(&[seed, 0x1417]);
        let mut sample = |rows: usize, cols: usize| {
            let mut m = Matrix::zeros(rows, cols);
            for i in 0..rows {
                let row = m.row_mut(i);
                loop {
                    row.iter_mut().for_each(|v| *v = rng.sample(StandardNormal));
                    let n = norm(row);
                    if n > 1e-12 {
                        row.iter_mut().for_each(|v| *v /= n);
                        break;
                    }
                }
            }
            m
        };
        let entities = sample(n_entities, dims.entity);
        let relations = sample(n_relations, dims.relation);
        EmbeddingTable {
            entities,
            relations,
        }
    }
}

fn normalize_rows(m: &mut Matrix, what: &str) -> Result<()> {
    for i in 0..m.rows() {
        let row = m.row_mut(i);
        let n = norm(row);
        if !(n > 0.0) || !n.is_finite() {
            return Err(Error::Invalid(format!("{what} row {i} has zero or non-finite norm")));
        }
        row.iter_mut().for_each(|v| *v /= n);
    }
    Ok(())
}

/// Rescales every entity and relation row to unit Euclidean norm.
pub fn normalize_embeddings(table: &mut EmbeddingTable) -> Result<()> {
    normalize_rows(&mut table.entities, "entity")?;
    normalize_rows(&mut table.relations, "relation")
}

/// Shape and mode of a model, independent of its learned values.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ModelSpec {
    pub kind: CompositionKind,
    pub dims: Dims,
    pub lambda: LambdaMode,
    /// Norm-bound slack; `None` uses the default fraction of lambda.
    pub epsilon: Option<f64>,
}

impl ModelSpec {
    pub fn new(kind: CompositionKind, dims: Dims, lambda: LambdaMode) -> Result<Self> {
        dims.validate(kind)?;
        Ok(ModelSpec {
            kind,
            dims,
            lambda,
            epsilon: None,
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Model {
    pub kind: CompositionKind,
    pub dims: Dims,
    pub embeddings: EmbeddingTable,
    pub harmony: HarmonyParams,
}

impl Model {
    /// Unit-sphere embeddings with `W = 0`, `b = 0`.
    pub fn init(spec: &ModelSpec, n_entities: usize, n_relations: usize, seed: u64) -> Result<Self> {
        spec.dims.validate(spec.kind)?;
        let embeddings = EmbeddingTable::random_unit(n_entities, n_relations, spec.dims, seed);
        Self::from_parts(spec, embeddings, SymmetricMatrix::zeros(spec.dims.hidden), DenseVector::zeros(spec.dims.hidden))
    }

    pub fn from_parts(spec: &ModelSpec, embeddings: EmbeddingTable, w: SymmetricMatrix, b: DenseVector) -> Result<Self> {
        spec.dims.validate(spec.kind)?;
        check_dim("entity embedding width", spec.dims.entity, embeddings.entities.cols())?;
        check_dim("relation embedding width", spec.dims.relation, embeddings.relations.cols())?;
        let mut harmony = HarmonyParams::new(w, b, spec.lambda)?;
        if let Some(eps) = spec.epsilon {
            harmony = harmony.with_epsilon(eps)?;
        }
        Ok(Model {
            kind: spec.kind,
            dims: spec.dims,
            embeddings,
            harmony,
        })
    }

    pub fn spec(&self) -> ModelSpec {
        ModelSpec {
            kind: self.kind,
            dims: self.dims,
            lambda: self.harmony.lambda(),
            epsilon: Some(self.harmony.epsilon()),
        }
    }

    pub fn n_entities(&self) -> usize {
        self.embeddings.entities.rows()
    }

    pub fn n_relations(&self) -> usize {
        self.embeddings.relations.rows()
    }

    fn check_triplet(&self, t: &Triplet) -> Result<()> {
        if t.left >= self.n_entities() || t.right >= self.n_entities() || t.rel >= self.n_relations() {
            return Err(Error::Invalid(format!("triplet {t:?} outside model vocabulary")));
        }
        Ok(())
    }

    pub fn entity(&self, id: usize) -> &[f64] {
        self.embeddings.entities.row(id)
    }

    pub fn relation(&self, id: usize) -> &[f64] {
        self.embeddings.relations.row(id)
    }

    pub(crate) fn compose_raw(&self, t: &Triplet) -> Result<Vec<f64>> {
        self.check_triplet(t)?;
        compose_slices(self.kind, self.entity(t.left), self.relation(t.rel), self.entity(t.right))
    }

    /// The type embedding `x = f_comp(e_l, r, e_r)`.
    pub fn compose(&self, t: &Triplet) -> Result<DenseVector> {
        self.compose_raw(t).map(DenseVector::from_vec_unchecked)
    }

    /// Score of an already composed embedding.
    pub fn score_embedding(&self, x: &[f64]) -> Result<f64> {
        if self.kind.is_baseline() {
            Ok(x.iter().sum())
        } else {
            check_dim("score input", self.dims.hidden, x.len())?;
            harmony::score_and_state(x, &self.harmony).map(|(s, _)| s)
        }
    }

    pub fn score(&self, t: &Triplet) -> Result<f64> {
        let x = self.compose_raw(t)?;
        self.score_embedding(&x)
    }

    /// The same model with a different faithfulness mode (e.g. type scoring with `Infinite`).
    pub fn with_lambda(&self, lambda: LambdaMode) -> Result<Model> {
        let mut m = self.clone();
        m.harmony = self.harmony.with_lambda(lambda)?;
        Ok(m)
    }

    /// Rounds every parameter to single precision, as a checkpoint stores it.
    pub fn quantize(&mut self) {
        let q = |v: &mut f64| *v = *v as f32 as f64;
        self.embeddings.entities.as_mut_slice().iter_mut().for_each(q);
        self.embeddings.relations.as_mut_slice().iter_mut().for_each(q);
        let d = self.dims.hidden;
        let w: Vec<f64> = self.harmony.w().as_slice().iter().map(|v| *v as f32 as f64).collect();
        let b: Vec<f64> = self.harmony.b().iter().map(|v| *v as f32 as f64).collect();
        self.harmony
            .set_weights(SymmetricMatrix::from_row_major(d, w).expect("rounding keeps symmetry"))
            .expect("same dimension");
        self.harmony
            .set_bias(DenseVector::from_vec_unchecked(b))
            .expect("same dimension");
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn normalize_examples() {
        let mut t = EmbeddingTable {
            entities: Matrix::from_vec(2, 2, vec![3.0, 4.0, 0.6, 0.8]).unwrap(),
            relations: Matrix::from_vec(1, 2, vec![0.0, -2.0]).unwrap(),
        };
        normalize_embeddings(&mut t).unwrap();
        assert_eq!(t.entities.row(0), &[0.6, 0.8]);
        assert!((t.entities.row(1)[0] - 0.6).abs() < 1e-12 && (t.entities.row(1)[1] - 0.8).abs() < 1e-12);
        assert_eq!(t.relations.row(0), &[0.0, -1.0]);

        let mut bad = EmbeddingTable {
            entities: Matrix::from_vec(1, 2, vec![0.0, 0.0]).unwrap(),
            relations: Matrix::zeros(0, 2),
        };
        assert!(normalize_embeddings(&mut bad).is_err());
    }

    #[test]
    fn random_tables_are_unit_norm() {
        let t = EmbeddingTable::random_unit(30, 4, Dims::square(7), 11);
        for m in [&t.entities, &t.relations] {
            for i in 0..m.rows() {
                assert!((norm(m.row(i)) - 1.0).abs() < 1e-12);
            }
        }
        assert_eq!(t, EmbeddingTable::random_unit(30, 4, Dims::square(7), 11));
    }

    #[test]
    fn fresh_harmonic_model_scores_like_its_base() {
        // W = 0, b = 0: the infinite-lambda score is 0 and finite lambda gives 0 too
        let spec = ModelSpec::new(CompositionKind::HHolE, Dims::square(8), LambdaMode::Finite(1.0)).unwrap();
        let m = Model::init(&spec, 5, 2, 1).unwrap();
        assert!(m.score(&Triplet::new(0, 1, 3)).unwrap().abs() < 1e-12);
        assert!(m.score(&Triplet::new(0, 2, 3)).is_err());
    }
}
