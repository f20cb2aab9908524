//! The categorical embedding model: object vectors, morphism matrices, and
//! the fuzzy-morphism link probabilities built from them.
//!
//! A morphism head f scores the directed pair (a, b) with the bilinear logit
//! z(a -f-> b) = v_b^T M_f v_a; heads are aggregated (log-sum-exp by default)
//! and squashed by a sigmoid into the linking probability P(a -> b).

use crate::error::{Error, Result};
use crate::linalg::{self, dot, outer, Matrix};
use crate::rng::Rng;
use crate::scalar::Scalar;

/// Aggregator choice for combining per-morphism logits.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AggregatorKind {
    LogSumExp,
    /// One hidden tanh layer of the given width.
    Mlp { hidden: usize },
}

#[derive(Debug, Clone, PartialEq)]
pub struct MlpAggregator<S> {
    /// hidden x n_mor input weights.
    pub w1: Matrix<S>,
    pub b1: Vec<S>,
    /// Output weights, one per hidden unit.
    pub w2: Vec<S>,
    pub b2: S,
}

impl<S: Scalar> MlpAggregator<S> {
    pub fn hidden(&self) -> usize {
        self.b1.len()
    }

    pub fn forward(&self, logits: &[S]) -> S {
        let mut z = self.b2;
        for h in 0..self.hidden() {
            let pre = dot(self.w1.row(h), logits) + self.b1[h];
            z += self.w2[h] * pre.tanh();
        }
        z
    }

    pub fn param_count(&self) -> usize {
        self.w1.rows() * self.w1.cols() + self.b1.len() + self.w2.len() + 1
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Aggregator<S> {
    LogSumExp,
    Mlp(MlpAggregator<S>),
}

impl<S: Scalar> Aggregator<S> {
    pub fn kind(&self) -> AggregatorKind {
        match self {
            Aggregator::LogSumExp => AggregatorKind::LogSumExp,
            Aggregator::Mlp(m) => AggregatorKind::Mlp { hidden: m.hidden() },
        }
    }

    pub fn aggregate(&self, logits: &[S]) -> Result<S> {
        match self {
            Aggregator::LogSumExp => linalg::logsumexp(logits),
            Aggregator::Mlp(m) => Ok(m.forward(logits)),
        }
    }

    pub fn param_count(&self) -> usize {
        match self {
            Aggregator::LogSumExp => 0,
            Aggregator::Mlp(m) => m.param_count(),
        }
    }
}

/// One morphism head, either a dense d x d matrix or the query/key factored
/// form M = Q^T K with Q and K of shape r x d.
#[derive(Debug, Clone, PartialEq)]
pub enum MorphismParam<S> {
    Dense(Matrix<S>),
    LowRank { q: Matrix<S>, k: Matrix<S> },
}

impl<S: Scalar> MorphismParam<S> {
    /// Materializes the d x d matrix.
    pub fn matrix(&self) -> Matrix<S> {
        match self {
            MorphismParam::Dense(m) => m.clone(),
            MorphismParam::LowRank { q, k } => {
                q.transpose().matmul(k).expect("factor shapes agree")
            }
        }
    }

    pub fn param_count(&self) -> usize {
        match self {
            MorphismParam::Dense(m) => m.rows() * m.cols(),
            MorphismParam::LowRank { q, k } => q.rows() * q.cols() + k.rows() * k.cols(),
        }
    }
}

/// Shape and options for a fresh model.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ModelShape {
    pub dim: usize,
    pub n_mor: usize,
    pub aggregator: AggregatorKind,
    pub hypersphere: bool,
    /// `Some(r)` selects the rank-r query/key factorization.
    pub morphism_rank: Option<usize>,
}

impl Default for ModelShape {
    fn default() -> Self {
        ModelShape {
            dim: 16,
            n_mor: 4,
            aggregator: AggregatorKind::LogSumExp,
            hypersphere: true,
            morphism_rank: None,
        }
    }
}

/// Object and morphism embeddings of one category.
#[derive(Debug, Clone, PartialEq)]
pub struct CategoryModel<S> {
    objects: Matrix<S>,
    morphisms: Vec<MorphismParam<S>>,
    aggregator: Aggregator<S>,
    hypersphere: bool,
}

/// Per-morphism logits plus their aggregate for one directed pair.
#[derive(Debug, Clone, PartialEq)]
pub struct LogitBreakdown<S> {
    pub per_morphism: Vec<S>,
    pub aggregate: S,
}

impl<S: Scalar> CategoryModel<S> {
    /// Seeded initialization: object rows are an isotropic Gaussian
    /// normalized to the unit sphere; morphism entries are Gaussian with
    /// standard deviation 1/sqrt(d), which keeps initial logits O(1).
    pub fn init(n_obj: usize, shape: &ModelShape, rng: &mut Rng) -> Result<Self> {
        if shape.dim == 0 || shape.n_mor == 0 {
            return Err(Error::InvalidArgument(
                "model needs dim >= 1 and n_mor >= 1".into(),
            ));
        }
        let d = shape.dim;
        let mut objects = Matrix::gaussian(n_obj, d, 1.0, rng);
        for a in 0..n_obj {
            linalg::normalize(objects.row_mut(a));
        }
        let scale = 1.0 / (d as f64).sqrt();
        let morphisms = (0..shape.n_mor)
            .map(|_| match shape.morphism_rank {
                None => MorphismParam::Dense(Matrix::gaussian(d, d, scale, rng)),
                Some(r) => MorphismParam::LowRank {
                    q: Matrix::gaussian(r, d, scale, rng),
                    k: Matrix::gaussian(r, d, scale, rng),
                },
            })
            .collect();
        let aggregator = match shape.aggregator {
            AggregatorKind::LogSumExp => Aggregator::LogSumExp,
            AggregatorKind::Mlp { hidden } => {
                let w1_scale = 1.0 / (shape.n_mor as f64).sqrt();
                let w1 = Matrix::gaussian(hidden, shape.n_mor, w1_scale, rng);
                let b1 = vec![S::zero(); hidden];
                let w2_scale = 1.0 / (hidden as f64).sqrt();
                let w2 = (0..hidden)
                    .map(|_| S::from_f64(w2_scale * rng.next_gauss()))
                    .collect();
                Aggregator::Mlp(MlpAggregator {
                    w1,
                    b1,
                    w2,
                    b2: S::zero(),
                })
            }
        };
        Ok(CategoryModel {
            objects,
            morphisms,
            aggregator,
            hypersphere: shape.hypersphere,
        })
    }

    pub fn from_parts(
        objects: Matrix<S>,
        morphisms: Vec<MorphismParam<S>>,
        aggregator: Aggregator<S>,
        hypersphere: bool,
    ) -> Result<Self> {
        if morphisms.is_empty() {
            return Err(Error::InvalidArgument("need at least one morphism".into()));
        }
        let d = objects.cols();
        for (f, m) in morphisms.iter().enumerate() {
            let ok = match m {
                MorphismParam::Dense(m) => m.rows() == d && m.cols() == d,
                MorphismParam::LowRank { q, k } => {
                    q.cols() == d && k.cols() == d && q.rows() == k.rows()
                }
            };
            if !ok {
                return Err(Error::ShapeMismatch(format!(
                    "morphism {f} does not match object dimension {d}"
                )));
            }
        }
        if let Aggregator::Mlp(m) = &aggregator {
            if m.w1.cols() != morphisms.len()
                || m.w1.rows() != m.b1.len()
                || m.w2.len() != m.b1.len()
            {
                return Err(Error::ShapeMismatch("mlp aggregator shapes".into()));
            }
        }
        let model = CategoryModel {
            objects,
            morphisms,
            aggregator,
            hypersphere,
        };
        model.check_finite()?;
        Ok(model)
    }

    fn check_finite(&self) -> Result<()> {
        let finite = self.objects.data().iter().all(|x| x.is_finite())
            && self.morphisms.iter().all(|m| match m {
                MorphismParam::Dense(m) => m.data().iter().all(|x| x.is_finite()),
                MorphismParam::LowRank { q, k } => {
                    q.data().iter().all(|x| x.is_finite())
                        && k.data().iter().all(|x| x.is_finite())
                }
            });
        if finite {
            Ok(())
        } else {
            Err(Error::InvalidArgument("non-finite model parameters".into()))
        }
    }

    pub fn n_obj(&self) -> usize {
        self.objects.rows()
    }

    pub fn dim(&self) -> usize {
        self.objects.cols()
    }

    pub fn n_mor(&self) -> usize {
        self.morphisms.len()
    }

    pub fn hypersphere(&self) -> bool {
        self.hypersphere
    }

    pub fn objects(&self) -> &Matrix<S> {
        &self.objects
    }

    pub fn objects_mut(&mut self) -> &mut Matrix<S> {
        &mut self.objects
    }

    pub fn object(&self, a: usize) -> Result<&[S]> {
        if a >= self.n_obj() {
            return Err(Error::IndexOutOfRange {
                what: "object id",
                index: a,
                bound: self.n_obj(),
            });
        }
        Ok(self.objects.row(a))
    }

    pub fn morphisms(&self) -> &[MorphismParam<S>] {
        &self.morphisms
    }

    pub fn morphisms_mut(&mut self) -> &mut [MorphismParam<S>] {
        &mut self.morphisms
    }

    pub fn aggregator(&self) -> &Aggregator<S> {
        &self.aggregator
    }

    pub fn aggregator_mut(&mut self) -> &mut Aggregator<S> {
        &mut self.aggregator
    }

    /// Materialized d x d matrix of head `f`.
    pub fn morphism_matrix(&self, f: usize) -> Result<Matrix<S>> {
        self.morphisms
            .get(f)
            .map(MorphismParam::matrix)
            .ok_or(Error::IndexOutOfRange {
                what: "morphism id",
                index: f,
                bound: self.n_mor(),
            })
    }

    /// z(a -f-> b) = v_b^T M_f v_a.
    pub fn morphism_logit(&self, a: usize, f: usize, b: usize) -> Result<S> {
        let va = self.object(a)?;
        let vb = self.object(b)?;
        let m = self.morphisms.get(f).ok_or(Error::IndexOutOfRange {
            what: "morphism id",
            index: f,
            bound: self.n_mor(),
        })?;
        Ok(bilinear(m, vb, va))
    }

    /// Per-morphism logits and their aggregate for the directed pair (a, b).
    pub fn link_logit(&self, a: usize, b: usize) -> Result<LogitBreakdown<S>> {
        let va = self.object(a)?;
        let vb = self.object(b)?;
        let per_morphism: Vec<S> = self
            .morphisms
            .iter()
            .map(|m| bilinear(m, vb, va))
            .collect();
        let aggregate = self.aggregator.aggregate(&per_morphism)?;
        Ok(LogitBreakdown {
            per_morphism,
            aggregate,
        })
    }

    /// P(a -> b) = sigmoid(z(a -> b)).
    pub fn link_prob(&self, a: usize, b: usize) -> Result<S> {
        Ok(linalg::sigmoid(self.link_logit(a, b)?.aggregate))
    }

    /// Renormalizes every object row to the unit sphere.
    pub fn renormalize_objects(&mut self) {
        for a in 0..self.objects.rows() {
            linalg::normalize(self.objects.row_mut(a));
        }
    }

    pub fn param_count(&self) -> usize {
        self.objects.rows() * self.objects.cols()
            + self
                .morphisms
                .iter()
                .map(MorphismParam::param_count)
                .sum::<usize>()
            + self.aggregator.param_count()
    }

    /// Flattens all trainable parameters: objects row-major, morphisms head
    /// by head (dense row-major; low-rank Q then K), then MLP aggregator
    /// parameters (w1 row-major, b1, w2, b2).
    pub fn flatten_params(&self) -> Vec<S> {
        let mut out = Vec::with_capacity(self.param_count());
        out.extend_from_slice(self.objects.data());
        for m in &self.morphisms {
            match m {
                MorphismParam::Dense(m) => out.extend_from_slice(m.data()),
                MorphismParam::LowRank { q, k } => {
                    out.extend_from_slice(q.data());
                    out.extend_from_slice(k.data());
                }
            }
        }
        if let Aggregator::Mlp(m) = &self.aggregator {
            out.extend_from_slice(m.w1.data());
            out.extend_from_slice(&m.b1);
            out.extend_from_slice(&m.w2);
            out.push(m.b2);
        }
        out
    }

    /// Inverse of [`flatten_params`](Self::flatten_params).
    pub fn set_params(&mut self, params: &[S]) -> Result<()> {
        if params.len() != self.param_count() {
            return Err(Error::ShapeMismatch(format!(
                "expected {} parameters, got {}",
                self.param_count(),
                params.len()
            )));
        }
        let mut pos = 0;
        let take = |pos: &mut usize, n: usize| {
            let s = &params[*pos..*pos + n];
            *pos += n;
            s
        };
        let n = self.objects.data().len();
        self.objects.data_mut().copy_from_slice(take(&mut pos, n));
        for m in &mut self.morphisms {
            match m {
                MorphismParam::Dense(m) => {
                    let n = m.data().len();
                    m.data_mut().copy_from_slice(take(&mut pos, n));
                }
                MorphismParam::LowRank { q, k } => {
                    let nq = q.data().len();
                    q.data_mut().copy_from_slice(take(&mut pos, nq));
                    let nk = k.data().len();
                    k.data_mut().copy_from_slice(take(&mut pos, nk));
                }
            }
        }
        if let Aggregator::Mlp(m) = &mut self.aggregator {
            let n = m.w1.data().len();
            m.w1.data_mut().copy_from_slice(take(&mut pos, n));
            let n = m.b1.len();
            m.b1.copy_from_slice(take(&mut pos, n));
            let n = m.w2.len();
            m.w2.copy_from_slice(take(&mut pos, n));
            m.b2 = take(&mut pos, 1)[0];
        }
        Ok(())
    }
}

/// v_b^T M v_a without materializing low-rank heads.
fn bilinear<S: Scalar>(m: &MorphismParam<S>, vb: &[S], va: &[S]) -> S {
    match m {
        MorphismParam::Dense(m) => {
            let mut z = S::zero();
            for (i, &bi) in vb.iter().enumerate() {
                if bi == S::zero() {
                    continue;
                }
                z += bi * dot(m.row(i), va);
            }
            z
        }
        MorphismParam::LowRank { q, k } => {
            let qb = q.matvec(vb).expect("shape checked at construction");
            let ka = k.matvec(va).expect("shape checked at construction");
            dot(&qb, &ka)
        }
    }
}

/// Identity morphism of an object: the projector v v^T / |v|^2.
pub fn identity_morphism<S: Scalar>(v: &[S]) -> Result<Matrix<S>> {
    let n2 = dot(v, v);
    if n2 <= S::zero() {
        return Err(Error::ZeroVector);
    }
    let mut p = outer(v, v);
    p.scale_in_place(S::one() / n2);
    Ok(p)
}

/// Composition of morphisms as the matrix product M_g M_f.
pub fn compose<S: Scalar>(m_g: &Matrix<S>, m_f: &Matrix<S>) -> Result<Matrix<S>> {
    if !m_g.is_square() || !m_f.is_square() || m_g.cols() != m_f.rows() {
        return Err(Error::ShapeMismatch(format!(
            "compose needs square matrices of equal dimension, got {}x{} and {}x{}",
            m_g.rows(),
            m_g.cols(),
            m_f.rows(),
            m_f.cols()
        )));
    }
    m_g.matmul(m_f)
}

/// Factors a morphism as a query/key pair with Q^T K = M. The attention
/// correspondence is trivial under the convention Q = I, K = M.
pub fn as_query_key<S: Scalar>(m: &Matrix<S>) -> (Matrix<S>, Matrix<S>) {
    (Matrix::identity(m.rows()), m.clone())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{logsumexp, sigmoid};

    fn unit(dim: usize, axis: usize) -> Vec<f64> {
        let mut v = vec![0.0; dim];
        v[axis] = 1.0;
        v
    }

    fn small_model(n_obj: usize, d: usize, n_mor: usize, seed: u64) -> CategoryModel<f64> {
        let shape = ModelShape {
            dim: d,
            n_mor,
            ..ModelShape::default()
        };
        CategoryModel::init(n_obj, &shape, &mut Rng::new(seed)).unwrap()
    }

    #[test]
    fn morphism_logit_identity_on_aligned_units() {
        let objects = Matrix::from_rows(&[unit(3, 0), unit(3, 0)]).unwrap();
        let model = CategoryModel::from_parts(
            objects,
            vec![MorphismParam::Dense(Matrix::identity(3))],
            Aggregator::LogSumExp,
            true,
        )
        .unwrap();
        assert_eq!(model.morphism_logit(0, 0, 1).unwrap(), 1.0);
    }

    #[test]
    fn morphism_logit_orthogonal_is_zero() {
        let objects = Matrix::from_rows(&[unit(3, 0), unit(3, 1)]).unwrap();
        let model = CategoryModel::from_parts(
            objects,
            vec![MorphismParam::Dense(Matrix::identity(3))],
            Aggregator::LogSumExp,
            true,
        )
        .unwrap();
        // v_b is orthogonal to M v_a.
        assert_eq!(model.morphism_logit(0, 0, 1).unwrap(), 0.0);
    }

    #[test]
    fn morphism_logit_matches_triple_loop_oracle() {
        let model = small_model(5, 4, 3, 21);
        for a in 0..5 {
            for b in 0..5 {
                for f in 0..3 {
                    let m = model.morphism_matrix(f).unwrap();
                    let va = model.object(a).unwrap();
                    let vb = model.object(b).unwrap();
                    // Independent naive evaluation.
                    let mut expect = 0.0;
                    for i in 0..4 {
                        for j in 0..4 {
                            expect += vb[i] * m.get(i, j) * va[j];
                        }
                    }
                    let got = model.morphism_logit(a, f, b).unwrap();
                    assert!((got - expect).abs() < 1e-14);
                }
            }
        }
    }

    #[test]
    fn morphism_logit_low_rank_matches_materialized() {
        let shape = ModelShape {
            dim: 6,
            n_mor: 2,
            morphism_rank: Some(3),
            ..ModelShape::default()
        };
        let model: CategoryModel<f64> = CategoryModel::init(4, &shape, &mut Rng::new(8)).unwrap();
        for f in 0..2 {
            let m = model.morphism_matrix(f).unwrap();
            for a in 0..4 {
                for b in 0..4 {
                    let va = model.object(a).unwrap();
                    let vb = model.object(b).unwrap();
                    let expect = dot(vb, &m.matvec(va).unwrap());
                    let got = model.morphism_logit(a, f, b).unwrap();
                    assert!((got - expect).abs() < 1e-14);
                }
            }
        }
    }

    #[test]
    fn link_logit_aggregates_with_logsumexp() {
        let model = small_model(6, 4, 3, 22);
        for a in 0..6 {
            for b in 0..6 {
                let breakdown = model.link_logit(a, b).unwrap();
                let per: Vec<f64> = (0..3)
                    .map(|f| model.morphism_logit(a, f, b).unwrap())
                    .collect();
                assert_eq!(breakdown.per_morphism, per);
                assert!((breakdown.aggregate - logsumexp(&per).unwrap()).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn link_logit_single_zero_head() {
        let objects = Matrix::from_rows(&[unit(2, 0), unit(2, 1)]).unwrap();
        let model = CategoryModel::from_parts(
            objects,
            vec![MorphismParam::Dense(Matrix::identity(2))],
            Aggregator::LogSumExp,
            true,
        )
        .unwrap();
        assert_eq!(model.link_logit(0, 1).unwrap().aggregate, 0.0);
    }

    #[test]
    fn link_logit_two_zero_heads_is_ln2() {
        let objects = Matrix::from_rows(&[unit(2, 0), unit(2, 1)]).unwrap();
        let zero = MorphismParam::Dense(Matrix::identity(2));
        let model = CategoryModel::from_parts(
            objects,
            vec![zero.clone(), zero],
            Aggregator::LogSumExp,
            true,
        )
        .unwrap();
        let z = model.link_logit(0, 1).unwrap().aggregate;
        assert!((z - 2.0f64.ln()).abs() < 1e-15);
    }

    #[test]
    fn link_logit_permutation_invariant() {
        let model = small_model(4, 5, 4, 23);
        let base = model.link_logit(0, 1).unwrap();
        // Reverse the morphism stack and compare aggregates.
        let mut morphs = model.morphisms().to_vec();
        morphs.reverse();
        let permuted = CategoryModel::from_parts(
            model.objects().clone(),
            morphs,
            Aggregator::LogSumExp,
            true,
        )
        .unwrap();
        let z = permuted.link_logit(0, 1).unwrap().aggregate;
        assert!((z - base.aggregate).abs() < 1e-12);
    }

    #[test]
    fn link_logit_monotone_in_each_head() {
        let per = [0.3f64, -0.7, 1.1];
        let base = logsumexp(&per).unwrap();
        for f in 0..3 {
            let mut bumped = per;
            bumped[f] += 0.5;
            let z = logsumexp(&bumped).unwrap();
            assert!(z > base);
            assert!(sigmoid(z) > sigmoid(base));
        }
    }

    #[test]
    fn link_prob_values() {
        let objects = Matrix::from_rows(&[unit(2, 0), unit(2, 1)]).unwrap();
        let model = CategoryModel::from_parts(
            objects,
            vec![MorphismParam::Dense(Matrix::identity(2))],
            Aggregator::LogSumExp,
            true,
        )
        .unwrap();
        // Aggregate logit 0 for the orthogonal pair.
        assert_eq!(model.link_prob(0, 1).unwrap(), 0.5);
        // Aligned unit vectors under the identity head: sigmoid(1).
        assert!((model.link_prob(0, 0).unwrap() - sigmoid(1.0)).abs() < 1e-12);
        let p = model.link_prob(0, 1).unwrap();
        assert!((p + (1.0 - p) - 1.0).abs() < 1e-15);
    }

    #[test]
    fn mlp_aggregator_runs_and_differs_from_lse() {
        let shape = ModelShape {
            dim: 4,
            n_mor: 3,
            aggregator: AggregatorKind::Mlp { hidden: 5 },
            ..ModelShape::default()
        };
        let model: CategoryModel<f64> = CategoryModel::init(4, &shape, &mut Rng::new(31)).unwrap();
        let breakdown = model.link_logit(0, 1).unwrap();
        let lse = logsumexp(&breakdown.per_morphism).unwrap();
        assert!(breakdown.aggregate.is_finite());
        assert!((breakdown.aggregate - lse).abs() > 1e-12);
    }

    #[test]
    fn identity_morphism_is_axis_projector() {
        let p = identity_morphism(&unit(4, 0)).unwrap();
        let mut expect = Matrix::<f64>::zeros(4, 4);
        expect.set(0, 0, 1.0);
        assert_eq!(p, expect);
        // The formula is scale invariant.
        let p2 = identity_morphism(&[2.0, 0.0, 0.0, 0.0]).unwrap();
        assert!(p.frob_dist(&p2) < 1e-15);
    }

    #[test]
    fn identity_morphism_projects_and_is_idempotent() {
        let mut rng = Rng::new(24);
        for _ in 0..10 {
            let v: Vec<f64> = (0..5).map(|_| rng.next_gauss()).collect();
            let p = identity_morphism(&v).unwrap();
            let pv = p.matvec(&v).unwrap();
            let diff: f64 = pv.iter().zip(&v).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
            assert!(diff < 1e-12);
            let pp = p.matmul(&p).unwrap();
            assert!(pp.frob_dist(&p) < 1e-12);
            // P w stays on span(v) for arbitrary w: P(Pw) = Pw.
            let w: Vec<f64> = (0..5).map(|_| rng.next_gauss()).collect();
            let pw = p.matvec(&w).unwrap();
            let ppw = p.matvec(&pw).unwrap();
            let d: f64 = ppw.iter().zip(&pw).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
            assert!(d < 1e-12);
        }
    }

    #[test]
    fn identity_morphism_rejects_zero_vector() {
        assert_eq!(
            identity_morphism(&[0.0f64, 0.0]).unwrap_err(),
            Error::ZeroVector
        );
    }

    #[test]
    fn compose_identity_law_and_associativity() {
        let mut rng = Rng::new(25);
        let m = Matrix::<f64>::gaussian(4, 4, 1.0, &mut rng);
        let i = Matrix::identity(4);
        assert!(compose(&i, &m).unwrap().frob_dist(&m) < 1e-15);
        assert!(compose(&m, &i).unwrap().frob_dist(&m) < 1e-15);
        for _ in 0..5 {
            let h = Matrix::<f64>::gaussian(4, 4, 1.0, &mut rng);
            let g = Matrix::<f64>::gaussian(4, 4, 1.0, &mut rng);
            let f = Matrix::<f64>::gaussian(4, 4, 1.0, &mut rng);
            let left = compose(&compose(&h, &g).unwrap(), &f).unwrap();
            let right = compose(&h, &compose(&g, &f).unwrap()).unwrap();
            assert!(left.frob_dist(&right) < 1e-12);
        }
    }

    #[test]
    fn compose_rotations_adds_angles() {
        let rot = |t: f64| {
            Matrix::from_rows(&[vec![t.cos(), -t.sin()], vec![t.sin(), t.cos()]]).unwrap()
        };
        let a = 0.7;
        let b = 1.1;
        let ab = compose(&rot(b), &rot(a)).unwrap();
        assert!(ab.frob_dist(&rot(a + b)) < 1e-12);
    }

    #[test]
    fn compose_shape_mismatch() {
        let a = Matrix::<f64>::identity(3);
        let b = Matrix::<f64>::identity(4);
        assert!(matches!(compose(&a, &b), Err(Error::ShapeMismatch(_))));
    }

    #[test]
    fn query_key_factorization_reconstructs() {
        let i = Matrix::<f64>::identity(3);
        let (q, k) = as_query_key(&i);
        assert_eq!(q, Matrix::identity(3));
        assert_eq!(k, i);

        let mut rng = Rng::new(26);
        let m = Matrix::<f64>::gaussian(5, 5, 1.0, &mut rng);
        let (q, k) = as_query_key(&m);
        let back = q.transpose().matmul(&k).unwrap();
        assert!(back.frob_dist(&m) < 1e-14);
    }

    #[test]
    fn flatten_set_params_round_trip() {
        for rank in [None, Some(2)] {
            for agg in [AggregatorKind::LogSumExp, AggregatorKind::Mlp { hidden: 3 }] {
                let shape = ModelShape {
                    dim: 4,
                    n_mor: 2,
                    aggregator: agg,
                    hypersphere: true,
                    morphism_rank: rank,
                };
                let model: CategoryModel<f64> =
                    CategoryModel::init(5, &shape, &mut Rng::new(27)).unwrap();
                let params = model.flatten_params();
                assert_eq!(params.len(), model.param_count());
                let mut other: CategoryModel<f64> =
                    CategoryModel::init(5, &shape, &mut Rng::new(99)).unwrap();
                other.set_params(&params).unwrap();
                assert_eq!(other, model);
            }
        }
    }

    #[test]
    fn index_errors() {
        let model = small_model(3, 4, 2, 28);
        assert!(matches!(
            model.morphism_logit(3, 0, 0),
            Err(Error::IndexOutOfRange { .. })
        ));
        assert!(matches!(
            model.morphism_logit(0, 2, 0),
            Err(Error::IndexOutOfRange { .. })
        ));
        assert!(matches!(
            model.link_prob(0, 9),
            Err(Error::IndexOutOfRange { .. })
        ));
    }

    #[test]
    fn init_is_on_the_sphere_and_deterministic() {
        let a = small_model(10, 8, 3, 5);
        let b = small_model(10, 8, 3, 5);
        assert_eq!(a, b);
        for i in 0..10 {
            let n = linalg::norm(a.object(i).unwrap());
            assert!((n - 1.0).abs() < 1e-9);
        }
    }
}
