//! Functorial learning: fit an orthogonal map between two trained categories
//! by aligning their morphism matrices, plus a handful of supervised object
//! pairs, then rank translations by cosine score.
//!
//! The structure loss sum_f ||M_F(f) V - V M_f||^2 is invariant under which
//! target head plays M_F(f), so the head correspondence is re-estimated by
//! discrete matching interleaved with the continuous descent. Orthogonality
//! is maintained by a polar retraction after every gradient step.

use crate::category::CategoryModel;
use crate::error::{Error, Result};
use crate::linalg::{self, dot, norm, outer, Matrix};
use crate::rng::Rng;
use crate::scalar::Scalar;

/// Orthogonal functor between a source and a target category.
#[derive(Debug, Clone, PartialEq)]
pub struct FunctorModel<S> {
    /// d x d orthogonal transform acting on source embeddings.
    pub v: Matrix<S>,
    /// Source head f corresponds to target head `matching[f]`.
    pub matching: Vec<usize>,
    /// Alignment weight used during the fit.
    pub lambda: f64,
}

/// Supervised object correspondences (source id, target id).
#[derive(Debug, Clone, PartialEq, Default)]
pub struct AlignmentSet {
    pairs: Vec<(usize, usize)>,
}

impl AlignmentSet {
    pub fn new(pairs: Vec<(usize, usize)>) -> Result<Self> {
        let mut seen = std::collections::BTreeSet::new();
        for &(src, _) in &pairs {
            if !seen.insert(src) {
                return Err(Error::InvalidArgument(format!(
                    "duplicate source id {src} in alignment set"
                )));
            }
        }
        Ok(AlignmentSet { pairs })
    }

    pub fn pairs(&self) -> &[(usize, usize)] {
        &self.pairs
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FunctorConfig {
    pub lr: f64,
    pub steps: usize,
    pub seed: u64,
    pub lambda: f64,
    /// Morphism matching is refreshed every this many steps.
    pub refresh_every: usize,
    /// Independent random starts; each also runs with its determinant
    /// flipped, and a Procrustes warm start is added when supervision exists.
    pub restarts: usize,
}

impl Default for FunctorConfig {
    fn default() -> Self {
        FunctorConfig {
            lr: 0.05,
            steps: 2000,
            seed: 0,
            lambda: 1.0,
            refresh_every: 50,
            restarts: 3,
        }
    }
}

fn check_same_dim<S: Scalar>(src: &CategoryModel<S>, tgt: &CategoryModel<S>) -> Result<usize> {
    if src.dim() != tgt.dim() {
        return Err(Error::ShapeMismatch(format!(
            "source dimension {} != target dimension {}",
            src.dim(),
            tgt.dim()
        )));
    }
    Ok(src.dim())
}

/// sum_f ||M_{matching[f]} V - V M_f||_F^2 over all source heads.
pub fn structure_loss<S: Scalar>(
    v: &Matrix<S>,
    src: &CategoryModel<S>,
    tgt: &CategoryModel<S>,
    matching: &[usize],
) -> Result<S> {
    check_same_dim(src, tgt)?;
    if matching.len() != src.n_mor() {
        return Err(Error::UnmatchedHead(matching.len()));
    }
    let mut loss = S::zero();
    for (f, &t) in matching.iter().enumerate() {
        if t >= tgt.n_mor() {
            return Err(Error::UnmatchedHead(f));
        }
        let ms = src.morphism_matrix(f)?;
        let mt = tgt.morphism_matrix(t)?;
        let r = mt.matmul(v)?.sub(&v.matmul(&ms)?)?;
        let n = r.frob_norm();
        loss += n * n;
    }
    Ok(loss)
}

/// sum over aligned pairs of ||v_target - V v_source||^2.
pub fn alignment_loss<S: Scalar>(
    v: &Matrix<S>,
    src: &CategoryModel<S>,
    tgt: &CategoryModel<S>,
    aligned: &AlignmentSet,
) -> Result<S> {
    let mut loss = S::zero();
    for &(a, b) in aligned.pairs() {
        let va = src.object(a)?;
        let vb = tgt.object(b)?;
        let va_mapped = v.matvec(va)?;
        loss += va_mapped
            .iter()
            .zip(vb)
            .map(|(&x, &y)| (x - y) * (x - y))
            .sum::<S>();
    }
    Ok(loss)
}

fn pair_cost<S: Scalar>(
    v: &Matrix<S>,
    ms: &Matrix<S>,
    mt: &Matrix<S>,
) -> Result<S> {
    let r = mt.matmul(v)?.sub(&v.matmul(ms)?)?;
    let n = r.frob_norm();
    Ok(n * n)
}

/// Assigns each source head a distinct target head minimizing the structure
/// loss given V: exhaustive over permutations up to 6 heads, greedy
/// minimum-cost assignment above that. Ties break toward the lowest index.
pub fn match_morphisms<S: Scalar>(
    src: &CategoryModel<S>,
    tgt: &CategoryModel<S>,
    v: &Matrix<S>,
) -> Result<Vec<usize>> {
    check_same_dim(src, tgt)?;
    let n = src.n_mor();
    if n != tgt.n_mor() {
        return Err(Error::HeadCountMismatch {
            src: n,
            tgt: tgt.n_mor(),
        });
    }
    let src_mats: Vec<Matrix<S>> = (0..n).map(|f| src.morphism_matrix(f).unwrap()).collect();
    let tgt_mats: Vec<Matrix<S>> = (0..n).map(|t| tgt.morphism_matrix(t).unwrap()).collect();
    let mut cost = vec![vec![S::zero(); n]; n];
    for (f, ms) in src_mats.iter().enumerate() {
        for (t, mt) in tgt_mats.iter().enumerate() {
            cost[f][t] = pair_cost(v, ms, mt)?;
        }
    }

    if n <= 6 {
        // Lexicographic permutation scan; strict improvement keeps the first
        // (lowest) permutation on ties.
        let mut best: Option<(S, Vec<usize>)> = None;
        let mut perm: Vec<usize> = (0..n).collect();
        loop {
            let total: S = perm.iter().enumerate().map(|(f, &t)| cost[f][t]).sum();
            if best.as_ref().map_or(true, |(b, _)| total < *b) {
                best = Some((total, perm.clone()));
            }
            if !next_permutation(&mut perm) {
                break;
            }
        }
        Ok(best.expect("at least one permutation").1)
    } else {
        let mut matching = vec![usize::MAX; n];
        let mut used_src = vec![false; n];
        let mut used_tgt = vec![false; n];
        for _ in 0..n {
            let mut best: Option<(S, usize, usize)> = None;
            for f in 0..n {
                if used_src[f] {
                    continue;
                }
                for t in 0..n {
                    if used_tgt[t] {
                        continue;
                    }
                    if best.as_ref().map_or(true, |&(b, _, _)| cost[f][t] < b) {
                        best = Some((cost[f][t], f, t));
                    }
                }
            }
            let (_, f, t) = best.expect("unassigned pair exists");
            matching[f] = t;
            used_src[f] = true;
            used_tgt[t] = true;
        }
        Ok(matching)
    }
}

fn next_permutation(perm: &mut [usize]) -> bool {
    let n = perm.len();
    if n < 2 {
        return false;
    }
    let mut i = n - 1;
    while i > 0 && perm[i - 1] >= perm[i] {
        i -= 1;
    }
    if i == 0 {
        return false;
    }
    let mut j = n - 1;
    while perm[j] <= perm[i - 1] {
        j -= 1;
    }
    perm.swap(i - 1, j);
    perm[i..].reverse();
    true
}

#[derive(Debug, Clone)]
pub struct FunctorOutcome<S> {
    pub functor: FunctorModel<S>,
    /// Total loss before each step of the selected run.
    pub loss_trace: Vec<f64>,
    /// Largest ||V^T V - I||_F observed after any retraction.
    pub max_orthogonality_residual: f64,
}

/// Spectral relaxation of the structure equations for a fixed matching: the
/// bottom eigenvector of sum_f A_f^T A_f with A_f = Mt_f (x) I - I (x) Ms_f^T
/// solves min ||vec(V)|| = 1, retracted back to the orthogonal manifold.
/// Exact on a planted conjugation.
fn spectral_start<S: Scalar>(
    src: &CategoryModel<S>,
    tgt: &CategoryModel<S>,
    matching: &[usize],
) -> Result<Matrix<S>> {
    let d = src.dim();
    let eye = Matrix::identity(d);
    let mut h = Matrix::zeros(d * d, d * d);
    for (f, &t) in matching.iter().enumerate() {
        let ms = src.morphism_matrix(f)?;
        let mt = tgt.morphism_matrix(t)?;
        let a = linalg::kron(&mt, &eye)?.sub(&linalg::kron(&eye, &ms.transpose())?)?;
        h.add_in_place(&a.transpose().matmul(&a)?);
    }
    let (lambda, vecs) = linalg::sym_eig(&h)?;
    let mut arg = 0;
    for (i, &l) in lambda.iter().enumerate() {
        if l < lambda[arg] {
            arg = i;
        }
    }
    let w = vecs.column(arg);
    linalg::polar_retract(&Matrix::from_vec(d, d, w)?)
}

/// Orthogonal Procrustes fit of the given pairs: polar factor of the
/// cross-covariance of the paired embeddings. Fewer pairs than dimensions
/// leave the cross-covariance rank deficient; a tiny fixed-seed jitter then
/// completes the unconstrained directions deterministically.
fn procrustes_of_pairs<S: Scalar>(
    src: &CategoryModel<S>,
    tgt: &CategoryModel<S>,
    pairs: &[(usize, usize)],
) -> Result<Matrix<S>> {
    let d = src.dim();
    let mut cross = Matrix::zeros(d, d);
    for &(a, b) in pairs {
        cross.add_in_place(&outer(tgt.object(b)?, src.object(a)?));
    }
    match linalg::polar_retract(&cross) {
        Ok(v) => Ok(v),
        Err(Error::SingularInput) => {
            let scale = 1e-6 * (1.0 + cross.frob_norm().as_f64());
            let jitter = Matrix::gaussian(d, d, scale, &mut Rng::new(0xC0FFEE));
            linalg::polar_retract(&cross.add(&jitter)?)
        }
        Err(e) => Err(e),
    }
}

/// Iterated Procrustes seeded by the supervised pairs: each round maps every
/// source object through V, collects mutual nearest neighbours as pseudo
/// pairs, and refits. Supervised pairs always stay in the set.
fn refined_procrustes_start<S: Scalar>(
    src: &CategoryModel<S>,
    tgt: &CategoryModel<S>,
    aligned: &AlignmentSet,
) -> Result<Matrix<S>> {
    let fm_of = |v: Matrix<S>| FunctorModel {
        v,
        matching: Vec::new(),
        lambda: 0.0,
    };
    let mut v = procrustes_of_pairs(src, tgt, aligned.pairs())?;
    for _ in 0..5 {
        let fm = fm_of(v.clone());
        // Forward best match for every source object.
        let mut fwd = vec![0usize; src.n_obj()];
        for a in 0..src.n_obj() {
            fwd[a] = translate(&fm, src, tgt, a, 1)?[0].0;
        }
        // Backward best match through V^T.
        let back_fm = FunctorModel {
            v: fm.v.transpose(),
            matching: Vec::new(),
            lambda: 0.0,
        };
        let mut pairs: Vec<(usize, usize)> = aligned.pairs().to_vec();
        let supervised: std::collections::BTreeSet<usize> =
            aligned.pairs().iter().map(|&(a, _)| a).collect();
        for a in 0..src.n_obj() {
            if supervised.contains(&a) {
                continue;
            }
            let b = fwd[a];
            let back = translate(&back_fm, tgt, src, b, 1)?[0].0;
            if back == a {
                pairs.push((a, b));
            }
        }
        v = procrustes_of_pairs(src, tgt, &pairs)?;
    }
    Ok(v)
}

/// Fits V by gradient descent on structure + lambda * alignment loss with a
/// polar retraction after every step. The descent is restarted from several
/// deterministic seeds, each paired with its reflection into the other
/// component of the orthogonal group (the objective can hold strict local
/// minima, and a planted map lives in only one determinant class); with
/// supervision, Procrustes and mutual-nearest-neighbour refined starts join
/// the candidate set, and a spectral start solves the relaxed structure
/// equations under an estimated matching. Unsupervised fits keep the run
/// with the lowest final loss; supervised fits keep the run that fits the
/// supervised anchors best (the structure term alone can prefer a spurious
/// intertwiner when morphism spectra are nearly degenerate).
/// Deterministic in `cfg.seed`.
pub fn train_functor<S: Scalar>(
    src: &CategoryModel<S>,
    tgt: &CategoryModel<S>,
    aligned: &AlignmentSet,
    cfg: &FunctorConfig,
) -> Result<FunctorOutcome<S>> {
    let d = check_same_dim(src, tgt)?;
    for &(a, b) in aligned.pairs() {
        src.object(a)?;
        tgt.object(b)?;
    }
    if !(cfg.lr > 0.0) {
        return Err(Error::InvalidArgument("lr must be positive".into()));
    }
    let mut rng = Rng::new(cfg.seed);
    let mut starts: Vec<Matrix<S>> = Vec::new();
    if !aligned.is_empty() {
        // Procrustes warm start: nearest orthogonal matrix to the aligned
        // cross-covariance, jittered to full rank when supervision is thin.
        let mut cross = Matrix::zeros(d, d);
        for &(a, b) in aligned.pairs() {
            cross.add_in_place(&outer(tgt.object(b)?, src.object(a)?));
        }
        let jitter_scale = 1e-3 * (1.0 + cross.frob_norm().as_f64());
        let jittered = cross.add(&Matrix::gaussian(d, d, jitter_scale, &mut rng))?;
        if let Ok(v) = linalg::polar_retract(&jittered) {
            starts.push(v);
        }
        if let Ok(v) = refined_procrustes_start(src, tgt, aligned) {
            starts.push(v);
        }
    }
    for _ in 0..cfg.restarts.max(1) {
        starts.push(linalg::polar_retract(&Matrix::gaussian(
            d, d, 1.0, &mut rng,
        ))?);
    }
    // Spectral starts from the matchings the existing candidates imply.
    let mut matchings: Vec<Vec<usize>> = Vec::new();
    if src.n_mor() == tgt.n_mor() {
        for v in starts.iter().take(2) {
            let m = match_morphisms(src, tgt, v)?;
            if !matchings.contains(&m) {
                matchings.push(m);
            }
        }
        for m in &matchings {
            if let Ok(v) = spectral_start(src, tgt, m) {
                starts.push(v);
            }
        }
    }

    let mut best: Option<((f64, f64), FunctorOutcome<S>)> = None;
    for start in starts {
        let mut flipped = start.clone();
        for j in 0..d {
            flipped.set(0, j, -flipped.get(0, j));
        }
        for v0 in [start, flipped] {
            let run = descend(src, tgt, aligned, cfg, v0)?;
            let total = total_loss(
                &run.functor.v,
                src,
                tgt,
                &run.functor.matching,
                aligned,
                cfg.lambda,
            )?
            .as_f64();
            let score = if aligned.is_empty() {
                (total, total)
            } else {
                let anchor = alignment_loss(&run.functor.v, src, tgt, aligned)?.as_f64();
                (anchor, total)
            };
            if best.as_ref().map_or(true, |&(b, _)| score < b) {
                best = Some((score, run));
            }
        }
    }
    Ok(best.expect("at least one candidate run").1)
}

fn total_loss<S: Scalar>(
    v: &Matrix<S>,
    src: &CategoryModel<S>,
    tgt: &CategoryModel<S>,
    matching: &[usize],
    aligned: &AlignmentSet,
    lambda: f64,
) -> Result<S> {
    Ok(structure_loss(v, src, tgt, matching)?
        + S::from_f64(lambda) * alignment_loss(v, src, tgt, aligned)?)
}

struct LossAndGrad<S> {
    loss: S,
    grad: Matrix<S>,
}

fn eval_loss_grad<S: Scalar>(
    v: &Matrix<S>,
    src_mats: &[Matrix<S>],
    tgt_mats: &[Matrix<S>],
    matching: &[usize],
    src: &CategoryModel<S>,
    tgt: &CategoryModel<S>,
    aligned: &AlignmentSet,
    lambda: S,
) -> Result<LossAndGrad<S>> {
    let mut grad = Matrix::zeros(v.rows(), v.cols());
    let mut loss = S::zero();
    for (f, &t) in matching.iter().enumerate() {
        let ms = &src_mats[f];
        let mt = &tgt_mats[t];
        let r = mt.matmul(v)?.sub(&v.matmul(ms)?)?;
        let n = r.frob_norm();
        loss += n * n;
        // d/dV ||Mt V - V Ms||^2 = 2 (Mt^T R - R Ms^T).
        let g = mt.transpose().matmul(&r)?.sub(&r.matmul(&ms.transpose())?)?;
        grad.add_in_place(&g.scale(S::from_f64(2.0)));
    }
    for &(a, b) in aligned.pairs() {
        let va = src.object(a)?;
        let vb = tgt.object(b)?;
        let mapped = v.matvec(va)?;
        let resid: Vec<S> = mapped.iter().zip(vb).map(|(&x, &y)| x - y).collect();
        loss += lambda * dot(&resid, &resid);
        grad.add_in_place(&outer(&resid, va).scale(S::from_f64(2.0) * lambda));
    }
    Ok(LossAndGrad { loss, grad })
}

/// Gradient descent with a polar retraction after every trial step and
/// Armijo backtracking on the step length, so the descent is monotone at any
/// morphism scale. `cfg.lr` is the initial trial step; it shrinks on
/// rejection and relaxes back on acceptance.
fn descend<S: Scalar>(
    src: &CategoryModel<S>,
    tgt: &CategoryModel<S>,
    aligned: &AlignmentSet,
    cfg: &FunctorConfig,
    mut v: Matrix<S>,
) -> Result<FunctorOutcome<S>> {
    let lambda = S::from_f64(cfg.lambda);
    let lr_max = cfg.lr * 64.0;
    let mut lr = cfg.lr;
    let mut matching = match_morphisms(src, tgt, &v)?;
    let src_mats: Vec<Matrix<S>> = (0..src.n_mor())
        .map(|f| src.morphism_matrix(f).unwrap())
        .collect();
    let tgt_mats: Vec<Matrix<S>> = (0..tgt.n_mor())
        .map(|t| tgt.morphism_matrix(t).unwrap())
        .collect();

    let mut loss_trace = Vec::with_capacity(cfg.steps);
    let mut max_res = v.orthogonality_residual().as_f64();
    let mut state = eval_loss_grad(&v, &src_mats, &tgt_mats, &matching, src, tgt, aligned, lambda)?;
    for step in 0..cfg.steps {
        if cfg.refresh_every > 0 && step > 0 && step % cfg.refresh_every == 0 {
            // Re-matching only ever lowers the structure term.
            matching = match_morphisms(src, tgt, &v)?;
            state =
                eval_loss_grad(&v, &src_mats, &tgt_mats, &matching, src, tgt, aligned, lambda)?;
        }
        let loss_f = state.loss.as_f64();
        if !loss_f.is_finite() {
            return Err(Error::NonFiniteLoss(format!(
                "functor loss {loss_f} at step {step}"
            )));
        }
        loss_trace.push(loss_f);
        let gnorm2 = {
            let n = state.grad.frob_norm();
            n * n
        };
        if gnorm2 == S::zero() {
            continue;
        }
        let mut accepted = false;
        for _ in 0..40 {
            let trial = linalg::polar_retract(&v.sub(&state.grad.scale(S::from_f64(lr)))?)?;
            let trial_state = eval_loss_grad(
                &trial, &src_mats, &tgt_mats, &matching, src, tgt, aligned, lambda,
            )?;
            // Armijo sufficient decrease against the Euclidean gradient norm.
            if trial_state.loss <= state.loss - S::from_f64(1e-4 * lr) * gnorm2 {
                max_res = max_res.max(trial.orthogonality_residual().as_f64());
                v = trial;
                state = trial_state;
                accepted = true;
                lr = (lr * 2.0).min(lr_max);
                break;
            }
            lr *= 0.5;
            if lr < 1e-14 {
                break;
            }
        }
        if !accepted {
            // Stationary up to step-size underflow.
            break;
        }
    }
    // Final matching reflects the returned V.
    matching = match_morphisms(src, tgt, &v)?;
    loss_trace.push(total_loss(&v, src, tgt, &matching, aligned, cfg.lambda)?.as_f64());
    Ok(FunctorOutcome {
        functor: FunctorModel {
            v,
            matching,
            lambda: cfg.lambda,
        },
        loss_trace,
        max_orthogonality_residual: max_res,
    })
}

/// Refined Procrustes start, exposed for diagnostics and tests.
#[doc(hidden)]
pub fn refined_procrustes_start_for_tests<S: Scalar>(
    src: &CategoryModel<S>,
    tgt: &CategoryModel<S>,
    aligned: &AlignmentSet,
) -> Result<Matrix<S>> {
    refined_procrustes_start(src, tgt, aligned)
}

/// Single-start descent, exposed for diagnostics and tests.
#[doc(hidden)]
pub fn train_functor_from_start_for_tests<S: Scalar>(
    src: &CategoryModel<S>,
    tgt: &CategoryModel<S>,
    aligned: &AlignmentSet,
    cfg: &FunctorConfig,
    start: Matrix<S>,
) -> Result<FunctorOutcome<S>> {
    descend(src, tgt, aligned, cfg, start)
}

/// Ranks target objects by cosine similarity against V v_a, descending, ties
/// toward the lower target id.
pub fn translate<S: Scalar>(
    fm: &FunctorModel<S>,
    src: &CategoryModel<S>,
    tgt: &CategoryModel<S>,
    a: usize,
    topk: usize,
) -> Result<Vec<(usize, S)>> {
    if topk == 0 {
        return Err(Error::InvalidArgument("topk must be >= 1".into()));
    }
    let mapped = fm.v.matvec(src.object(a)?)?;
    let mapped_norm = norm(&mapped);
    let mut scored: Vec<(usize, S)> = (0..tgt.n_obj())
        .map(|b| {
            let vb = tgt.object(b).expect("b < n_obj");
            let denom = mapped_norm * norm(vb);
            let score = if denom > S::zero() {
                dot(&mapped, vb) / denom
            } else {
                -S::one()
            };
            (b, score)
        })
        .collect();
    scored.sort_by(|&(ia, sa), &(ib, sb)| {
        sb.partial_cmp(&sa)
            .expect("finite scores")
            .then(ia.cmp(&ib))
    });
    scored.truncate(topk);
    Ok(scored)
}

/// Residuals of the functor axioms under an orthogonal V: identity morphisms
/// map to identity morphisms and composition is preserved.
#[derive(Debug, Clone, PartialEq)]
pub struct AxiomResiduals {
    pub id_residual: f64,
    pub comp_residual: f64,
}

pub fn functor_axiom_check<S: Scalar>(
    v: &Matrix<S>,
    src: &CategoryModel<S>,
) -> Result<AxiomResiduals> {
    let res = v.orthogonality_residual().as_f64();
    if res >= 1e-8 {
        return Err(Error::NotOrthogonal { residual: res });
    }
    if v.rows() != src.dim() {
        return Err(Error::ShapeMismatch(format!(
            "functor is {}x{} but category dimension is {}",
            v.rows(),
            v.cols(),
            src.dim()
        )));
    }
    let vt = v.transpose();

    let mut id_residual = 0.0f64;
    for a in 0..src.n_obj() {
        let va = src.object(a)?;
        let p_src = crate::category::identity_morphism(va)?;
        let mapped = v.matvec(va)?;
        let p_mapped = crate::category::identity_morphism(&mapped)?;
        let conj = v.matmul(&p_src)?.matmul(&vt)?;
        id_residual = id_residual.max(p_mapped.frob_dist(&conj).as_f64());
    }

    let n = src.n_mor();
    let pairs: Vec<(usize, usize)> = if n * n <= 64 {
        (0..n).flat_map(|f| (0..n).map(move |g| (f, g))).collect()
    } else {
        let mut rng = Rng::new(0xAC5_10A1);
        (0..64)
            .map(|_| (rng.next_index(n), rng.next_index(n)))
            .collect()
    };
    let mut comp_residual = 0.0f64;
    for (f, g) in pairs {
        let mf = src.morphism_matrix(f)?;
        let mg = src.morphism_matrix(g)?;
        let lhs = v.matmul(&mg.matmul(&mf)?)?.matmul(&vt)?;
        let rhs = v
            .matmul(&mg)?
            .matmul(&vt)?
            .matmul(&v.matmul(&mf)?.matmul(&vt)?)?;
        comp_residual = comp_residual.max(lhs.frob_dist(&rhs).as_f64());
    }
    Ok(AxiomResiduals {
        id_residual,
        comp_residual,
    })
}
