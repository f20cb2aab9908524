//! Tensor-bifunctor fusion: a row-orthonormal operator that projects the
//! Kronecker feature space back to the model space, trained so composites
//! link to their contexts and so fusion order does not matter, plus the
//! bootstrap coarse-graining rounds built on it.

use std::collections::BTreeMap;

use crate::category::{Aggregator, CategoryModel};
use crate::corpus::{pair_distribution, ConcurrenceCorpus, Scope};
use crate::error::{Error, Result};
use crate::linalg::{self, dot, kron, kron_vec, norm, sigmoid, softplus, Matrix};
use crate::rng::Rng;
use crate::scalar::Scalar;

/// Fusion operator: a d x d^2 matrix with orthonormal rows, so its transpose
/// is a right inverse on the retained subspace.
#[derive(Debug, Clone, PartialEq)]
pub struct FusionOperator<S> {
    theta: Matrix<S>,
}

impl<S: Scalar> FusionOperator<S> {
    /// Seeded Gaussian start, retracted onto the row-orthonormal manifold.
    pub fn init(dim: usize, rng: &mut Rng) -> Result<Self> {
        if dim == 0 {
            return Err(Error::InvalidArgument("fusion dimension must be >= 1".into()));
        }
        let theta = row_orthonormalize(&Matrix::gaussian(dim, dim * dim, 1.0, rng))?;
        Ok(FusionOperator { theta })
    }

    /// Wraps an existing operator; rows must already be orthonormal.
    pub fn from_matrix(theta: Matrix<S>) -> Result<Self> {
        let d = theta.rows();
        if theta.cols() != d * d {
            return Err(Error::ShapeMismatch(format!(
                "fusion operator must be d x d^2, got {}x{}",
                theta.rows(),
                theta.cols()
            )));
        }
        let res = row_orthonormality_residual(&theta);
        if res.as_f64() >= 1e-8 {
            return Err(Error::NotOrthogonal {
                residual: res.as_f64(),
            });
        }
        Ok(FusionOperator { theta })
    }

    pub fn theta(&self) -> &Matrix<S> {
        &self.theta
    }

    pub fn dim(&self) -> usize {
        self.theta.rows()
    }

    /// v_{a (x) b} = Theta (v_a kron v_b), renormalized when asked (the
    /// hypersphere convention).
    pub fn fuse_objects(&self, va: &[S], vb: &[S], renormalize: bool) -> Result<Vec<S>> {
        let d = self.dim();
        if va.len() != d || vb.len() != d {
            return Err(Error::ShapeMismatch(format!(
                "fuse_objects expects length-{d} vectors, got {} and {}",
                va.len(),
                vb.len()
            )));
        }
        let mut out = self.theta.matvec(&kron_vec(va, vb))?;
        if renormalize {
            if norm(&out) == S::zero() {
                return Err(Error::ZeroVector);
            }
            linalg::normalize(&mut out);
        }
        Ok(out)
    }

    /// M_{f (x) g} = Theta (M_f kron M_g) Theta^T, together with the residual
    /// ||M_{f(x)g} Theta - Theta (M_f kron M_g)||_F of the defining relation,
    /// which vanishes exactly when the image of Theta^T is invariant under
    /// the Kronecker factor.
    pub fn fuse_morphisms(&self, mf: &Matrix<S>, mg: &Matrix<S>) -> Result<(Matrix<S>, S)> {
        let d = self.dim();
        for m in [mf, mg] {
            if m.rows() != d || m.cols() != d {
                return Err(Error::ShapeMismatch(format!(
                    "fuse_morphisms expects {d}x{d} matrices, got {}x{}",
                    m.rows(),
                    m.cols()
                )));
            }
        }
        let big = kron(mf, mg)?;
        let theta_big = self.theta.matmul(&big)?;
        let fused = theta_big.matmul(&self.theta.transpose())?;
        let residual = fused.matmul(&self.theta)?.frob_dist(&theta_big);
        Ok((fused, residual))
    }

    /// Mean over triples of the gap between the two fusion bracketings,
    /// ||Theta(Theta(u kron v) kron w) - Theta(u kron Theta(v kron w))||.
    pub fn associativity_residual(&self, triples: &[(Vec<S>, Vec<S>, Vec<S>)]) -> Result<S> {
        if triples.is_empty() {
            return Err(Error::InvalidArgument(
                "associativity_residual needs at least one triple".into(),
            ));
        }
        let mut total = S::zero();
        for (u, v, w) in triples {
            let r = self.bracketing_gap(u, v, w)?;
            total += norm(&r);
        }
        Ok(total / S::from_usize(triples.len()))
    }

    /// Theta(Theta(u kron v) kron w) - Theta(u kron Theta(v kron w)), raw
    /// (no renormalization).
    fn bracketing_gap(&self, u: &[S], v: &[S], w: &[S]) -> Result<Vec<S>> {
        let left_inner = self.fuse_objects(u, v, false)?;
        let left = self.fuse_objects(&left_inner, w, false)?;
        let right_inner = self.fuse_objects(v, w, false)?;
        let right = self.fuse_objects(u, &right_inner, false)?;
        Ok(left
            .iter()
            .zip(&right)
            .map(|(&a, &b)| a - b)
            .collect())
    }
}

/// ||Theta Theta^T - I_d||_F.
pub fn row_orthonormality_residual<S: Scalar>(theta: &Matrix<S>) -> S {
    let gram = theta
        .matmul(&theta.transpose())
        .expect("gram of theta is square");
    gram.frob_dist(&Matrix::identity(theta.rows()))
}

/// Retraction onto row-orthonormal matrices: Theta <- (Theta Theta^T)^{-1/2}
/// Theta.
pub fn row_orthonormalize<S: Scalar>(theta: &Matrix<S>) -> Result<Matrix<S>> {
    let gram = theta.matmul(&theta.transpose())?;
    let (lambda, u) = linalg::sym_eig(&gram)?;
    let lmax = lambda.iter().cloned().fold(S::zero(), S::max);
    let tol = lmax * S::epsilon() * S::from_usize(theta.rows().max(1)) * S::from_f64(16.0);
    if lambda.iter().any(|&l| l <= tol) {
        return Err(Error::SingularInput);
    }
    // U diag(1/sqrt(lambda)) U^T.
    let d = theta.rows();
    let mut inv_sqrt = Matrix::zeros(d, d);
    for i in 0..d {
        for j in 0..d {
            let mut acc = S::zero();
            for k in 0..d {
                acc += u.get(i, k) * u.get(j, k) / lambda[k].sqrt();
            }
            inv_sqrt.set(i, j, acc);
        }
    }
    inv_sqrt.matmul(theta)
}

#[derive(Debug, Clone, PartialEq)]
pub struct FusionConfig {
    pub steps: usize,
    pub lr: f64,
    /// Weight of the associativity penalty.
    pub mu: f64,
    pub seed: u64,
    /// Composite-context samples per step.
    pub pairs_per_step: usize,
    /// Negatives per composite-context sample.
    pub k_neg: usize,
    /// Random fusion-order triples per step.
    pub triples_per_step: usize,
}

impl Default for FusionConfig {
    fn default() -> Self {
        FusionConfig {
            steps: 2000,
            lr: 0.02,
            mu: 1.0,
            seed: 0,
            pairs_per_step: 16,
            k_neg: 5,
            triples_per_step: 8,
        }
    }
}

#[derive(Debug, Clone)]
pub struct FusionOutcome<S> {
    pub op: FusionOperator<S>,
    /// Total objective per step.
    pub loss_trace: Vec<f64>,
    /// Concurrence component per step.
    pub concurrence_trace: Vec<f64>,
}

/// Trains the fusion operator against a frozen category model: composites
/// built from co-occurring pairs are pushed to link with their scope
/// contexts, and triples fused in both orders penalize associativity gaps.
/// Theta is retracted to row-orthonormal after every step. The step length
/// decays as 1/sqrt(step), shrinking the stochastic-gradient floor so the
/// associativity residual keeps contracting late in training.
pub fn train_fusion<S: Scalar>(
    model: &CategoryModel<S>,
    corpus: &ConcurrenceCorpus,
    cfg: &FusionConfig,
) -> Result<FusionOutcome<S>> {
    if !(cfg.lr > 0.0) {
        return Err(Error::InvalidArgument("lr must be positive".into()));
    }
    if corpus.n_tokens() != model.n_obj() {
        return Err(Error::ShapeMismatch(format!(
            "corpus has {} tokens but model has {} objects",
            corpus.n_tokens(),
            model.n_obj()
        )));
    }
    let stats = pair_distribution(corpus)?;
    let neg_cdf: Vec<f64> = {
        let mut acc = 0.0;
        stats
            .marginals()
            .iter()
            .map(|&p| {
                acc += p;
                acc
            })
            .collect()
    };
    // Scopes able to supply a pair plus one context token.
    let eligible: Vec<&Scope> = corpus.scopes().iter().filter(|s| s.len() >= 3).collect();
    let d = model.dim();
    let mut rng = Rng::new(cfg.seed);
    let mut op = FusionOperator::init(d, &mut rng)?;
    let morph_mats: Vec<Matrix<S>> = (0..model.n_mor())
        .map(|f| model.morphism_matrix(f).unwrap())
        .collect();

    let mut loss_trace = Vec::with_capacity(cfg.steps);
    let mut concurrence_trace = Vec::with_capacity(cfg.steps);
    let mut initial_loss = None;
    let mut high_streak = 0usize;
    let mu = S::from_f64(cfg.mu);

    for step in 0..cfg.steps {
        let mut grad = Matrix::zeros(d, d * d);
        let mut conc_loss = S::zero();
        let n_pairs = if eligible.is_empty() { 0 } else { cfg.pairs_per_step };
        for _ in 0..n_pairs {
            let scope = eligible[rng.next_index(eligible.len())];
            let (a, b, c) = pick_three(scope, &mut rng);
            conc_loss += composite_sample_grad(
                model, &morph_mats, &op, a, b, c, &neg_cdf, cfg.k_neg, &mut rng, &mut grad,
            )?;
        }
        if n_pairs > 0 {
            conc_loss /= S::from_usize(n_pairs);
            grad.scale_in_place(S::one() / S::from_usize(n_pairs));
        }

        // Penalty mu * (mean ||r||)^2: the square sits outside the mean, so
        // per-triple gradients are normalized by their residual norm and the
        // pull does not vanish quadratically near associativity.
        let mut assoc_residual = S::zero();
        let n_triples = if model.n_obj() >= 3 { cfg.triples_per_step } else { 0 };
        if n_triples > 0 && cfg.mu != 0.0 {
            let mut norm_grad = Matrix::zeros(d, d * d);
            for _ in 0..n_triples {
                let (i, j, k) = pick_three_ids(model.n_obj(), &mut rng);
                let u = model.object(i)?.to_vec();
                let v = model.object(j)?.to_vec();
                let w = model.object(k)?.to_vec();
                let mut g_sq = Matrix::zeros(d, d * d);
                let loss_sq = assoc_triple_grad(&op, &u, &v, &w, &mut g_sq)?;
                let r_norm = loss_sq.sqrt();
                if r_norm > S::zero() {
                    assoc_residual += r_norm;
                    // d||r||/dTheta = (d||r||^2/dTheta) / (2||r||).
                    g_sq.scale_in_place(S::one() / (S::from_f64(2.0) * r_norm));
                    norm_grad.add_in_place(&g_sq);
                }
            }
            assoc_residual /= S::from_usize(n_triples);
            // d/dTheta [mu (mean ||r||)^2] = 2 mu mean||r|| * mean(d||r||/dTheta).
            norm_grad.scale_in_place(
                S::from_f64(2.0) * mu * assoc_residual / S::from_usize(n_triples),
            );
            grad.add_in_place(&norm_grad);
        }

        let total = conc_loss + mu * assoc_residual * assoc_residual;
        let total_f = total.as_f64();
        if !total_f.is_finite() {
            return Err(Error::NonFiniteLoss(format!(
                "fusion loss {total_f} at step {step}"
            )));
        }
        loss_trace.push(total_f);
        concurrence_trace.push(conc_loss.as_f64());
        let init = *initial_loss.get_or_insert(total_f);
        if total_f > 10.0 * init.max(1e-12) {
            high_streak += 1;
            if high_streak >= 100 {
                return Err(Error::NonFiniteLoss(format!(
                    "fusion loss {total_f} stayed above 10x its initial value {init} for 100 steps"
                )));
            }
        } else {
            high_streak = 0;
        }

        let timescale = (cfg.steps / 10).max(1) as f64;
        let lr_t = cfg.lr / (1.0 + step as f64 / timescale).sqrt();
        let stepped = op.theta.sub(&grad.scale(S::from_f64(lr_t)))?;
        op = FusionOperator {
            theta: row_orthonormalize(&stepped)?,
        };
    }
    Ok(FusionOutcome {
        op,
        loss_trace,
        concurrence_trace,
    })
}

/// Three distinct positions of a scope's token list.
fn pick_three(scope: &Scope, rng: &mut Rng) -> (usize, usize, usize) {
    let n = scope.len();
    let (i, j, k) = pick_three_ids(n, rng);
    (scope[i].0, scope[j].0, scope[k].0)
}

fn pick_three_ids(n: usize, rng: &mut Rng) -> (usize, usize, usize) {
    debug_assert!(n >= 3);
    let i = rng.next_index(n);
    let mut j = rng.next_index(n - 1);
    if j >= i {
        j += 1;
    }
    let mut k = rng.next_index(n - 2);
    let (lo, hi) = if i < j { (i, j) } else { (j, i) };
    if k >= lo {
        k += 1;
    }
    if k >= hi {
        k += 1;
    }
    (i, j, k)
}

/// Loss and Theta-gradient of one composite-context sample: fuse (a, b),
/// score the context c as positive and `k_neg` marginal draws as negatives.
#[allow(clippy::too_many_arguments)]
fn composite_sample_grad<S: Scalar>(
    model: &CategoryModel<S>,
    morph_mats: &[Matrix<S>],
    op: &FusionOperator<S>,
    a: usize,
    b: usize,
    c: usize,
    neg_cdf: &[f64],
    k_neg: usize,
    rng: &mut Rng,
    grad: &mut Matrix<S>,
) -> Result<S> {
    let va = model.object(a)?;
    let vb = model.object(b)?;
    let tensor = kron_vec(va, vb);
    let raw = op.theta.matvec(&tensor)?;
    let raw_norm = norm(&raw);
    let renorm = model.hypersphere();
    if renorm && raw_norm == S::zero() {
        return Err(Error::ZeroVector);
    }
    let fused: Vec<S> = if renorm {
        raw.iter().map(|&x| x / raw_norm).collect()
    } else {
        raw.clone()
    };

    let mut loss = S::zero();
    let mut g_fused = vec![S::zero(); fused.len()];
    let score_target = |x: usize, positive: bool,
                            g_fused: &mut Vec<S>|
     -> Result<S> {
        let vx = model.object(x)?;
        let logits: Vec<S> = morph_mats
            .iter()
            .map(|m| dot(vx, &m.matvec(&fused).expect("dims agree")))
            .collect();
        let z = model.aggregator().aggregate(&logits)?;
        let p = sigmoid(z);
        let dz = if positive { p - S::one() } else { p };
        let dl: Vec<S> = match model.aggregator() {
            Aggregator::LogSumExp => logits.iter().map(|&l| (l - z).exp()).collect(),
            Aggregator::Mlp(mlp) => {
                let mut dl = vec![S::zero(); logits.len()];
                for h in 0..mlp.hidden() {
                    let pre = dot(mlp.w1.row(h), &logits) + mlp.b1[h];
                    let t = pre.tanh();
                    let dpre = mlp.w2[h] * (S::one() - t * t);
                    for f in 0..logits.len() {
                        dl[f] += mlp.w1.get(h, f) * dpre;
                    }
                }
                dl
            }
        };
        for (f, m) in morph_mats.iter().enumerate() {
            let coef = dz * dl[f];
            if coef == S::zero() {
                continue;
            }
            let mt_vx = m.tr_matvec(vx)?;
            for (g, &mv) in g_fused.iter_mut().zip(&mt_vx) {
                *g += coef * mv;
            }
        }
        Ok(if positive { softplus(-z) } else { softplus(z) })
    };

    loss += score_target(c, true, &mut g_fused)?;
    for _ in 0..k_neg {
        let neg = sample_cdf(neg_cdf, rng.next_f64());
        loss += score_target(neg, false, &mut g_fused)?;
    }

    // Back through the renormalization to the raw Theta output.
    let g_raw: Vec<S> = if renorm {
        let proj = dot(&fused, &g_fused);
        g_fused
            .iter()
            .zip(&fused)
            .map(|(&g, &f)| (g - proj * f) / raw_norm)
            .collect()
    } else {
        g_fused
    };
    for (i, &gi) in g_raw.iter().enumerate() {
        if gi == S::zero() {
            continue;
        }
        let row = grad.row_mut(i);
        for (j, &tj) in tensor.iter().enumerate() {
            row[j] += gi * tj;
        }
    }
    Ok(loss)
}

fn sample_cdf(cdf: &[f64], u: f64) -> usize {
    cdf.partition_point(|&c| c <= u).min(cdf.len() - 1)
}

/// Squared bracketing gap of one triple and its Theta-gradient.
fn assoc_triple_grad<S: Scalar>(
    op: &FusionOperator<S>,
    u: &[S],
    v: &[S],
    w: &[S],
    grad: &mut Matrix<S>,
) -> Result<S> {
    let d = op.dim();
    let x = kron_vec(u, v);
    let p = op.theta.matvec(&x)?;
    let y = kron_vec(&p, w);
    let q = op.theta.matvec(&y)?;
    let m = kron_vec(v, w);
    let nn = op.theta.matvec(&m)?;
    let s = kron_vec(u, &nn);
    let t = op.theta.matvec(&s)?;
    let r: Vec<S> = q.iter().zip(&t).map(|(&a, &b)| a - b).collect();
    let loss = dot(&r, &r);

    // h = Theta^T r backs both inner fusions.
    let h = op.theta.tr_matvec(&r)?;
    let two = S::from_f64(2.0);
    // Direct terms: d||r||^2/dTheta += 2 (r y^T - r s^T).
    for i in 0..d {
        let ri = two * r[i];
        if ri == S::zero() {
            continue;
        }
        let row = grad.row_mut(i);
        for j in 0..y.len() {
            row[j] += ri * (y[j] - s[j]);
        }
    }
    // Left bracketing inner term: g_p[i] = 2 sum_j h[i*d+j] w[j].
    let mut g_p = vec![S::zero(); d];
    for i in 0..d {
        let base = i * d;
        g_p[i] = two * dot(&h[base..base + d], w);
    }
    for i in 0..d {
        if g_p[i] == S::zero() {
            continue;
        }
        let row = grad.row_mut(i);
        for (j, &xj) in x.iter().enumerate() {
            row[j] += g_p[i] * xj;
        }
    }
    // Right bracketing inner term: g_n[j] = 2 sum_i u[i] h[i*d+j], sign -.
    let mut g_n = vec![S::zero(); d];
    for (i, &ui) in u.iter().enumerate() {
        let base = i * d;
        for j in 0..d {
            g_n[j] += two * ui * h[base + j];
        }
    }
    for i in 0..d {
        if g_n[i] == S::zero() {
            continue;
        }
        let row = grad.row_mut(i);
        for (j, &mj) in m.iter().enumerate() {
            row[j] -= g_n[i] * mj;
        }
    }
    Ok(loss)
}

/// One composite object: its parts, its id in the augmented vocabulary, and
/// the vector fused from the parts.
#[derive(Debug, Clone, PartialEq)]
pub struct CompositeEntry<S> {
    pub left: usize,
    pub right: usize,
    pub id: usize,
    pub name: String,
    pub vector: Vec<S>,
}

/// Composite vocabulary accumulated over bootstrap rounds. Ids continue the
/// base vocabulary, and every entry references only earlier ids, so the
/// structure is a DAG by construction.
#[derive(Debug, Clone, PartialEq)]
pub struct CompositeVocab<S> {
    base_len: usize,
    entries: Vec<CompositeEntry<S>>,
}

impl<S: Scalar> CompositeVocab<S> {
    pub fn new(base_len: usize) -> Self {
        CompositeVocab {
            base_len,
            entries: Vec::new(),
        }
    }

    pub fn base_len(&self) -> usize {
        self.base_len
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn entries(&self) -> &[CompositeEntry<S>] {
        &self.entries
    }

    pub fn get(&self, id: usize) -> Option<&CompositeEntry<S>> {
        id.checked_sub(self.base_len).and_then(|i| self.entries.get(i))
    }

    pub fn find(&self, left: usize, right: usize) -> Option<usize> {
        self.entries
            .iter()
            .find(|e| e.left == left && e.right == right)
            .map(|e| e.id)
    }

    fn push(&mut self, left: usize, right: usize, name: String, vector: Vec<S>) -> usize {
        let id = self.base_len + self.entries.len();
        self.entries.push(CompositeEntry {
            left,
            right,
            id,
            name,
            vector,
        });
        id
    }

    /// Text export, one line per composite: `name = left (x) right`.
    pub fn export_text(&self, base_vocab: &[String]) -> String {
        let mut names: Vec<&str> = base_vocab.iter().map(String::as_str).collect();
        let mut out = String::new();
        for e in &self.entries {
            out.push_str(&format!(
                "{} = {} ⊗ {}\n",
                e.name, names[e.left], names[e.right]
            ));
            names.push(&e.name);
        }
        out
    }
}

#[derive(Debug, Clone)]
pub struct BootstrapOutcome<S> {
    /// Prior composites plus everything formed this round.
    pub composites: CompositeVocab<S>,
    /// Corpus rewritten for the next round, vocabulary extended with the new
    /// composite tokens.
    pub corpus: ConcurrenceCorpus,
}

/// One coarse-graining round: in every scope, the highest-probability linked
/// ordered pair at or above `tau` (ties toward the lowest id pair) is
/// replaced by its composite token, whose vector is fused from the parts.
/// A pure function of its inputs.
pub fn bootstrap_round<S: Scalar>(
    model: &CategoryModel<S>,
    op: &FusionOperator<S>,
    corpus: &ConcurrenceCorpus,
    prior: &CompositeVocab<S>,
    tau: f64,
) -> Result<BootstrapOutcome<S>> {
    if !(tau > 0.0 && tau < 1.0) {
        return Err(Error::InvalidThreshold(tau));
    }
    if prior.base_len() != model.n_obj() {
        return Err(Error::ShapeMismatch(format!(
            "composite vocabulary is rooted at {} objects but the model has {}",
            prior.base_len(),
            model.n_obj()
        )));
    }
    if corpus.n_tokens() != prior.base_len() + prior.len() {
        return Err(Error::ShapeMismatch(format!(
            "corpus has {} tokens but base + composites is {}",
            corpus.n_tokens(),
            prior.base_len() + prior.len()
        )));
    }
    if op.dim() != model.dim() {
        return Err(Error::ShapeMismatch(format!(
            "fusion operator dimension {} != model dimension {}",
            op.dim(),
            model.dim()
        )));
    }
    let tau = S::from_f64(tau);
    let morph_mats: Vec<Matrix<S>> = (0..model.n_mor())
        .map(|f| model.morphism_matrix(f).unwrap())
        .collect();
    let mut composites = prior.clone();
    let mut vocab: Vec<String> = corpus.vocab().to_vec();
    let mut new_scopes: Vec<Scope> = Vec::with_capacity(corpus.scopes().len());

    let resolve = |composites: &CompositeVocab<S>, id: usize| -> Vec<S> {
        if id < model.n_obj() {
            model.object(id).expect("base id").to_vec()
        } else {
            composites.get(id).expect("composite id").vector.clone()
        }
    };

    for scope in corpus.scopes() {
        let ids: Vec<usize> = scope.iter().map(|&(id, _)| id).collect();
        let vectors: Vec<Vec<S>> = ids.iter().map(|&id| resolve(&composites, id)).collect();
        // Best ordered pair by linking probability; ties toward lowest pair.
        let mut best: Option<(S, usize, usize)> = None;
        for (i, _) in ids.iter().enumerate() {
            for (j, _) in ids.iter().enumerate() {
                if i == j {
                    continue;
                }
                let logits: Vec<S> = morph_mats
                    .iter()
                    .map(|m| dot(&vectors[j], &m.matvec(&vectors[i]).expect("dims agree")))
                    .collect();
                let z = model.aggregator().aggregate(&logits)?;
                let p = sigmoid(z);
                if p < tau {
                    continue;
                }
                let better = match best {
                    None => true,
                    Some((bp, bi, bj)) => {
                        p > bp || (p == bp && (ids[i], ids[j]) < (ids[bi], ids[bj]))
                    }
                };
                if better {
                    best = Some((p, i, j));
                }
            }
        }
        match best {
            None => new_scopes.push(scope.clone()),
            Some((_, i, j)) => {
                let (left, right) = (ids[i], ids[j]);
                let comp_id = match composites.find(left, right) {
                    Some(id) => id,
                    None => {
                        let fused = op.fuse_objects(
                            &vectors[i],
                            &vectors[j],
                            model.hypersphere(),
                        )?;
                        let name = format!("({}⊗{})", vocab[left], vocab[right]);
                        let id = composites.push(left, right, name.clone(), fused);
                        vocab.push(name);
                        id
                    }
                };
                let mut counts: BTreeMap<usize, u32> =
                    scope.iter().map(|&(id, c)| (id, c)).collect();
                for part in [left, right] {
                    match counts.get_mut(&part) {
                        Some(c) if *c > 1 => *c -= 1,
                        Some(_) => {
                            counts.remove(&part);
                        }
                        None => unreachable!("pair members come from the scope"),
                    }
                }
                *counts.entry(comp_id).or_insert(0) += 1;
                new_scopes.push(counts.into_iter().collect());
            }
        }
    }
    let corpus = ConcurrenceCorpus::from_scopes(vocab, new_scopes)?;
    Ok(BootstrapOutcome { composites, corpus })
}
