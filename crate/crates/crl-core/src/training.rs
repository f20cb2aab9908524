//! Negative-sampling training of category models.
//!
//! Positives (a, b) are drawn from the joint pair distribution and contrasted
//! with negatives b' drawn from the marginal (optionally tempered by an
//! exponent). The paper-side objective is maximized; this module minimizes
//! its negation, so the loss is non-negative and 0 only at P(pos) = 1,
//! P(neg) = 0.

use crate::category::{
    Aggregator, AggregatorKind, CategoryModel, MlpAggregator, ModelShape, MorphismParam,
};
use crate::corpus::{pair_distribution, ConcurrenceCorpus, PairStats, PmiTable};
use crate::error::{Error, Result};
use crate::linalg::{dot, sigmoid, softplus, Matrix};
use crate::rng::Rng;
use crate::scalar::Scalar;

/// Logits are clamped to this magnitude before sigmoid/log in the loss;
/// numerically inert below 30 and prevents log(0) above it. Gradient softmax
/// weights use the raw logits.
pub const LOGIT_CLAMP: f64 = 30.0;

/// Object-embedding initialization.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum InitKind {
    /// Seeded isotropic Gaussian rows, normalized.
    Gaussian,
    /// Rows from the PCA of the corpus PMI matrix, normalized. Data-driven
    /// and seed-independent, so independently trained runs share a common
    /// geometry up to the orthogonal gauge; this is what makes two models of
    /// relabeled corpora alignable by an orthogonal functor.
    PmiSpectral,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum OptimizerKind {
    Sgd,
    Adam { beta1: f64, beta2: f64, eps: f64 },
}

impl OptimizerKind {
    pub fn adam_default() -> Self {
        OptimizerKind::Adam {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub d: usize,
    pub n_mor: usize,
    /// Negatives per positive.
    pub k_neg: usize,
    pub lr: f64,
    pub steps: usize,
    pub batch: usize,
    pub seed: u64,
    pub optimizer: OptimizerKind,
    pub hypersphere: bool,
    /// Negative distribution p_N proportional to p(b')^neg_exponent; 1.0 is
    /// the marginal itself, 0.0 is uniform over the vocabulary.
    pub neg_exponent: f64,
    pub aggregator: AggregatorKind,
    pub morphism_rank: Option<usize>,
    pub init: InitKind,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            d: 16,
            n_mor: 4,
            k_neg: 5,
            lr: 5e-3,
            steps: 20_000,
            batch: 128,
            seed: 0,
            optimizer: OptimizerKind::adam_default(),
            hypersphere: true,
            neg_exponent: 1.0,
            aggregator: AggregatorKind::LogSumExp,
            morphism_rank: None,
            init: InitKind::Gaussian,
        }
    }
}

impl TrainConfig {
    pub fn model_shape(&self) -> ModelShape {
        ModelShape {
            dim: self.d,
            n_mor: self.n_mor,
            aggregator: self.aggregator,
            hypersphere: self.hypersphere,
            morphism_rank: self.morphism_rank,
        }
    }

    fn validate(&self) -> Result<()> {
        if self.d == 0 || self.n_mor == 0 || self.k_neg == 0 || self.batch == 0 {
            return Err(Error::InvalidArgument(
                "d, n_mor, k_neg and batch must all be >= 1".into(),
            ));
        }
        if !(self.lr > 0.0) {
            return Err(Error::InvalidArgument("lr must be positive".into()));
        }
        Ok(())
    }
}

/// One sampled batch: positive pairs plus `k_neg` negatives per positive.
#[derive(Debug, Clone, PartialEq)]
pub struct Batch {
    pub positives: Vec<(usize, usize)>,
    pub negatives: Vec<Vec<usize>>,
}

/// Inverse-CDF sampler over the fixed (sorted) pair ordering of a
/// [`PairStats`], plus the negative-token distribution.
pub struct BatchSampler {
    pair_cdf: Vec<f64>,
    pairs: Vec<(usize, usize)>,
    neg_cdf: Vec<f64>,
    k_neg: usize,
    batch: usize,
}

impl BatchSampler {
    pub fn new(stats: &PairStats, cfg: &TrainConfig) -> Result<Self> {
        cfg.validate()?;
        if stats.support().is_empty() {
            return Err(Error::NoPairs);
        }
        let pair_cdf = cumulative(stats.joint_values());
        let neg_weights: Vec<f64> = stats
            .marginals()
            .iter()
            .map(|&p| p.powf(cfg.neg_exponent))
            .collect();
        let total: f64 = neg_weights.iter().sum();
        if !(total > 0.0) {
            return Err(Error::NoPairs);
        }
        let neg_cdf = cumulative(&neg_weights.iter().map(|w| w / total).collect::<Vec<_>>());
        Ok(BatchSampler {
            pair_cdf,
            pairs: stats.support().to_vec(),
            neg_cdf,
            k_neg: cfg.k_neg,
            batch: cfg.batch,
        })
    }

    pub fn sample(&self, rng: &mut Rng) -> Batch {
        let mut positives = Vec::with_capacity(self.batch);
        let mut negatives = Vec::with_capacity(self.batch);
        for _ in 0..self.batch {
            let p = self.pairs[sample_cdf(&self.pair_cdf, rng.next_f64())];
            positives.push(p);
            negatives.push(
                (0..self.k_neg)
                    .map(|_| sample_cdf(&self.neg_cdf, rng.next_f64()))
                    .collect(),
            );
        }
        Batch {
            positives,
            negatives,
        }
    }
}

fn cumulative(probs: &[f64]) -> Vec<f64> {
    let mut acc = 0.0;
    probs
        .iter()
        .map(|&p| {
            acc += p;
            acc
        })
        .collect()
}

fn sample_cdf(cdf: &[f64], u: f64) -> usize {
    cdf.partition_point(|&c| c <= u).min(cdf.len() - 1)
}

/// Draws one batch: positives by inverse CDF over the sorted pair support,
/// negatives i.i.d. from p_N. Deterministic in the generator state.
pub fn sample_batch(stats: &PairStats, cfg: &TrainConfig, rng: &mut Rng) -> Result<Batch> {
    Ok(BatchSampler::new(stats, cfg)?.sample(rng))
}

fn clamp_logit<S: Scalar>(z: S) -> S {
    let c = S::from_f64(LOGIT_CLAMP);
    if z > c {
        c
    } else if z < -c {
        -c
    } else {
        z
    }
}

/// Mean negative log-likelihood of the batch under the model:
/// -(1/B) sum [ log P(a->b) + sum_b' log(1 - P(a->b')) ].
pub fn nce_loss<S: Scalar>(model: &CategoryModel<S>, batch: &Batch) -> Result<S> {
    if batch.positives.is_empty() {
        return Err(Error::InvalidArgument("empty batch".into()));
    }
    let mut loss = S::zero();
    for (&(a, b), negs) in batch.positives.iter().zip(&batch.negatives) {
        let z = clamp_logit(model.link_logit(a, b)?.aggregate);
        // -log sigmoid(z) = softplus(-z)
        loss += softplus(-z);
        for &bn in negs {
            let zn = clamp_logit(model.link_logit(a, bn)?.aggregate);
            // -log(1 - sigmoid(z)) = softplus(z)
            loss += softplus(zn);
        }
    }
    Ok(loss / S::from_usize(batch.positives.len()))
}

/// Gradients in the same shapes as the model parameters. The morphism slots
/// reuse [`MorphismParam`] purely as shape-matched buffers.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients<S> {
    pub objects: Matrix<S>,
    pub morphisms: Vec<MorphismParam<S>>,
    pub aggregator: Option<MlpAggregator<S>>,
}

impl<S: Scalar> Gradients<S> {
    fn zeros_like(model: &CategoryModel<S>) -> Self {
        let d = model.dim();
        let morphisms = model
            .morphisms()
            .iter()
            .map(|m| match m {
                MorphismParam::Dense(_) => MorphismParam::Dense(Matrix::zeros(d, d)),
                MorphismParam::LowRank { q, .. } => MorphismParam::LowRank {
                    q: Matrix::zeros(q.rows(), d),
                    k: Matrix::zeros(q.rows(), d),
                },
            })
            .collect();
        let aggregator = match model.aggregator() {
            Aggregator::LogSumExp => None,
            Aggregator::Mlp(m) => Some(MlpAggregator {
                w1: Matrix::zeros(m.w1.rows(), m.w1.cols()),
                b1: vec![S::zero(); m.b1.len()],
                w2: vec![S::zero(); m.w2.len()],
                b2: S::zero(),
            }),
        };
        Gradients {
            objects: Matrix::zeros(model.n_obj(), d),
            morphisms,
            aggregator,
        }
    }

    /// Same layout as [`CategoryModel::flatten_params`].
    pub fn flatten(&self) -> Vec<S> {
        let mut out = Vec::new();
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
        if let Some(m) = &self.aggregator {
            out.extend_from_slice(m.w1.data());
            out.extend_from_slice(&m.b1);
            out.extend_from_slice(&m.w2);
            out.push(m.b2);
        }
        out
    }
}

/// Analytic gradient of [`nce_loss`]. For every sampled pair the aggregate
/// logit gradient is sigmoid(z) - 1 for positives and sigmoid(z) for
/// negatives; it distributes over heads through the aggregator (softmax
/// weights in log-sum-exp mode) and then through the bilinear form.
pub fn grad_nce<S: Scalar>(model: &CategoryModel<S>, batch: &Batch) -> Result<Gradients<S>> {
    if batch.positives.is_empty() {
        return Err(Error::InvalidArgument("empty batch".into()));
    }
    let mut grads = Gradients::zeros_like(model);
    let scale = S::one() / S::from_usize(batch.positives.len());
    for (&(a, b), negs) in batch.positives.iter().zip(&batch.negatives) {
        accumulate_pair(model, &mut grads, a, b, true, scale)?;
        for &bn in negs {
            accumulate_pair(model, &mut grads, a, bn, false, scale)?;
        }
    }
    Ok(grads)
}

fn accumulate_pair<S: Scalar>(
    model: &CategoryModel<S>,
    grads: &mut Gradients<S>,
    a: usize,
    b: usize,
    positive: bool,
    scale: S,
) -> Result<()> {
    let breakdown = model.link_logit(a, b)?;
    let z = breakdown.aggregate;
    let p = sigmoid(z);
    let dz = if positive { p - S::one() } else { p } * scale;
    if dz == S::zero() {
        return Ok(());
    }

    // dz/dl_f through the aggregator, and aggregator parameter gradients.
    let n_mor = model.n_mor();
    let logits = &breakdown.per_morphism;
    let head_weights: Vec<S> = match model.aggregator() {
        Aggregator::LogSumExp => logits.iter().map(|&l| (l - z).exp()).collect(),
        Aggregator::Mlp(m) => {
            let agg_grads = grads.aggregator.as_mut().expect("mlp gradient buffer");
            let hidden = m.hidden();
            let mut dl = vec![S::zero(); n_mor];
            for h in 0..hidden {
                let pre = dot(m.w1.row(h), logits) + m.b1[h];
                let t = pre.tanh();
                let dpre = m.w2[h] * (S::one() - t * t);
                agg_grads.w2[h] += dz * t;
                agg_grads.b1[h] += dz * dpre;
                for f in 0..n_mor {
                    let w = agg_grads.w1.get(h, f) + dz * dpre * logits[f];
                    agg_grads.w1.set(h, f, w);
                    dl[f] += m.w1.get(h, f) * dpre;
                }
            }
            agg_grads.b2 += dz;
            dl
        }
    };

    let d = model.dim();
    let mut grad_va = vec![S::zero(); d];
    let mut grad_vb = vec![S::zero(); d];
    {
        let va = model.object(a)?;
        let vb = model.object(b)?;
        for f in 0..n_mor {
            // head_weights[f] is dz/dl_f for either aggregator.
            let coef = dz * head_weights[f];
            if coef == S::zero() {
                continue;
            }
            match (&model.morphisms()[f], &mut grads.morphisms[f]) {
                (MorphismParam::Dense(m), MorphismParam::Dense(gm)) => {
                    m.matvec_axpy(coef, va, &mut grad_vb);
                    m.tr_matvec_axpy(coef, vb, &mut grad_va);
                    gm.rank_one_update(coef, vb, va);
                }
                (MorphismParam::LowRank { q, k }, MorphismParam::LowRank { q: gq, k: gk }) => {
                    let k_va = k.matvec(va)?;
                    let q_vb = q.matvec(vb)?;
                    q.tr_matvec_axpy(coef, &k_va, &mut grad_vb);
                    k.tr_matvec_axpy(coef, &q_vb, &mut grad_va);
                    gq.rank_one_update(coef, &k_va, vb);
                    gk.rank_one_update(coef, &q_vb, va);
                }
                _ => unreachable!("gradient buffers mirror the model"),
            }
        }
    }
    for (g, &x) in grads.objects.row_mut(a).iter_mut().zip(&grad_va) {
        *g += x;
    }
    for (g, &x) in grads.objects.row_mut(b).iter_mut().zip(&grad_vb) {
        *g += x;
    }
    Ok(())
}

/// Central finite differences of `f` at `x`.
pub fn central_difference<S: Scalar>(
    mut f: impl FnMut(&[S]) -> Result<S>,
    x: &[S],
    h: S,
) -> Result<Vec<S>> {
    if !(h > S::zero()) {
        return Err(Error::InvalidArgument("step size must be positive".into()));
    }
    let mut xs = x.to_vec();
    let mut out = Vec::with_capacity(x.len());
    let two_h = S::from_f64(2.0) * h;
    for i in 0..x.len() {
        let orig = xs[i];
        xs[i] = orig + h;
        let up = f(&xs)?;
        xs[i] = orig - h;
        let down = f(&xs)?;
        xs[i] = orig;
        out.push((up - down) / two_h);
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq)]
pub struct FiniteDiffReport {
    pub max_rel_err: f64,
    pub coords_checked: usize,
    /// Set when the step underflows against the parameter magnitude; the
    /// reported error is then unreliable.
    pub degenerate_step: bool,
}

/// Verifies [`grad_nce`] against central differences on every coordinate, or
/// on a seeded 10^4-coordinate subset for larger models. The relative error
/// denominator is max(1e-8, |analytic| + |numeric|).
pub fn finite_diff_check<S: Scalar>(
    model: &CategoryModel<S>,
    batch: &Batch,
    h: f64,
) -> Result<FiniteDiffReport> {
    if !(h > 0.0) {
        return Err(Error::InvalidArgument("step size must be positive".into()));
    }
    let params = model.flatten_params();
    let analytic = grad_nce(model, batch)?.flatten();
    let n = params.len();
    const MAX_COORDS: usize = 10_000;
    let coords: Vec<usize> = if n <= MAX_COORDS {
        (0..n).collect()
    } else {
        let mut rng = Rng::new(0x0F1D1FF);
        let mut perm = rng.permutation(n);
        perm.truncate(MAX_COORDS);
        perm
    };

    let hs = S::from_f64(h);
    let mut probe = model.clone();
    let mut xs = params.clone();
    let mut max_rel = 0.0f64;
    let mut degenerate = false;
    for &i in &coords {
        let orig = xs[i];
        if orig + hs == orig || orig - hs == orig {
            degenerate = true;
        }
        xs[i] = orig + hs;
        probe.set_params(&xs)?;
        let up = nce_loss(&probe, batch)?.as_f64();
        xs[i] = orig - hs;
        probe.set_params(&xs)?;
        let down = nce_loss(&probe, batch)?.as_f64();
        xs[i] = orig;
        let numeric = (up - down) / (2.0 * h);
        let a = analytic[i].as_f64();
        let rel = (a - numeric).abs() / (a.abs() + numeric.abs()).max(1e-8);
        if rel > max_rel {
            max_rel = rel;
        }
    }
    Ok(FiniteDiffReport {
        max_rel_err: max_rel,
        coords_checked: coords.len(),
        degenerate_step: degenerate,
    })
}

struct Optimizer<S> {
    kind: OptimizerKind,
    m: Vec<S>,
    v: Vec<S>,
    t: i32,
}

impl<S: Scalar> Optimizer<S> {
    fn new(kind: OptimizerKind, n: usize) -> Self {
        let stateful = matches!(kind, OptimizerKind::Adam { .. });
        Optimizer {
            kind,
            m: vec![S::zero(); if stateful { n } else { 0 }],
            v: vec![S::zero(); if stateful { n } else { 0 }],
            t: 0,
        }
    }

    fn step(&mut self, params: &mut [S], grads: &[S], lr: f64) {
        let lr = S::from_f64(lr);
        match self.kind {
            OptimizerKind::Sgd => {
                for (p, &g) in params.iter_mut().zip(grads) {
                    *p -= lr * g;
                }
            }
            OptimizerKind::Adam { beta1, beta2, eps } => {
                self.t += 1;
                let b1 = S::from_f64(beta1);
                let b2 = S::from_f64(beta2);
                let eps = S::from_f64(eps);
                let corr1 = S::one() - S::from_f64(beta1.powi(self.t));
                let corr2 = S::one() - S::from_f64(beta2.powi(self.t));
                for i in 0..params.len() {
                    let g = grads[i];
                    self.m[i] = b1 * self.m[i] + (S::one() - b1) * g;
                    self.v[i] = b2 * self.v[i] + (S::one() - b2) * g * g;
                    let mhat = self.m[i] / corr1;
                    let vhat = self.v[i] / corr2;
                    params[i] -= lr * mhat / (vhat.sqrt() + eps);
                }
            }
        }
    }
}

#[derive(Debug, Clone)]
pub struct TrainOutcome<S> {
    pub model: CategoryModel<S>,
    /// Loss before each update, one entry per step.
    pub loss_trace: Vec<f64>,
}

/// Trains a fresh model on the corpus pair statistics. Deterministic in
/// `cfg.seed`: initialization and every batch draw flow from one generator.
pub fn train_category<S: Scalar>(
    corpus: &ConcurrenceCorpus,
    cfg: &TrainConfig,
) -> Result<TrainOutcome<S>> {
    cfg.validate()?;
    let stats = pair_distribution(corpus)?;
    let spectral = match cfg.init {
        InitKind::Gaussian => None,
        InitKind::PmiSpectral => Some(spectral_objects::<S>(corpus, cfg.d)?),
    };
    train_category_impl(corpus.n_tokens(), &stats, cfg, spectral)
}

/// Same as [`train_category`] but over precomputed stats; always uses the
/// Gaussian initialization (the spectral one needs the corpus).
pub fn train_category_on_stats<S: Scalar>(
    n_obj: usize,
    stats: &PairStats,
    cfg: &TrainConfig,
) -> Result<TrainOutcome<S>> {
    train_category_impl(n_obj, stats, cfg, None)
}

/// Unit-norm object rows from the PCA of the PMI matrix, padded with zero
/// columns when d exceeds the vocabulary size.
fn spectral_objects<S: Scalar>(corpus: &ConcurrenceCorpus, d: usize) -> Result<Matrix<S>> {
    let n = corpus.n_tokens();
    let k = d.min(n);
    let emb = crate::corpus::pmi_embed(corpus, k)?;
    let mut objects = Matrix::zeros(n, d);
    for a in 0..n {
        for j in 0..k {
            objects.set(a, j, S::from_f64(emb.get(a, j)));
        }
        crate::linalg::normalize(objects.row_mut(a));
    }
    Ok(objects)
}

fn train_category_impl<S: Scalar>(
    n_obj: usize,
    stats: &PairStats,
    cfg: &TrainConfig,
    spectral: Option<Matrix<S>>,
) -> Result<TrainOutcome<S>> {
    cfg.validate()?;
    let sampler = BatchSampler::new(stats, cfg)?;
    let mut rng = Rng::new(cfg.seed);
    let mut model: CategoryModel<S> = CategoryModel::init(n_obj, &cfg.model_shape(), &mut rng)?;
    if let Some(objects) = spectral {
        // Replace the Gaussian rows; isolated tokens (zero PMI row) keep the
        // seeded Gaussian direction so every row stays unit.
        for a in 0..n_obj {
            if crate::linalg::norm(objects.row(a)) > S::zero() {
                model
                    .objects_mut()
                    .row_mut(a)
                    .copy_from_slice(objects.row(a));
            }
        }
    }
    let mut optimizer = Optimizer::new(cfg.optimizer, model.param_count());
    let mut params = model.flatten_params();
    let mut loss_trace = Vec::with_capacity(cfg.steps);
    let mut initial_loss = None;
    let mut high_loss_streak = 0usize;

    for step in 0..cfg.steps {
        let batch = sampler.sample(&mut rng);
        let loss = nce_loss(&model, &batch)?.as_f64();
        loss_trace.push(loss);
        if !loss.is_finite() {
            return Err(Error::NonFiniteLoss(format!("loss {loss} at step {step}")));
        }
        let init = *initial_loss.get_or_insert(loss);
        if loss > 10.0 * init.max(1e-12) {
            high_loss_streak += 1;
            if high_loss_streak >= 100 {
                return Err(Error::NonFiniteLoss(format!(
                    "loss {loss} stayed above 10x its initial value {init} for 100 steps (step {step})"
                )));
            }
        } else {
            high_loss_streak = 0;
        }
        let grads = grad_nce(&model, &batch)?;
        optimizer.step(&mut params, &grads.flatten(), cfg.lr);
        model.set_params(&params)?;
        if cfg.hypersphere {
            model.renormalize_objects();
            params.copy_from_slice(&model.flatten_params());
        }
    }
    Ok(TrainOutcome { model, loss_trace })
}

/// Fit of the aggregate logits against PMI over the observed support.
#[derive(Debug, Clone, PartialEq)]
pub struct PmiFitReport {
    pub pearson: f64,
    /// Mean |z - PMI|.
    pub mean_abs_err: f64,
    /// Mean |z + log k - PMI|; the negative-sampling optimum with k negatives
    /// is z = PMI - log k, so this is the calibrated comparison.
    pub mean_abs_err_shifted: f64,
    pub log_k_shift: f64,
}

/// Compares z(a -> b) with PMI(a, b) over every observed pair. Pearson
/// correlation is invariant under the log-k shift, so one correlation serves
/// both the raw and shifted readings; both mean absolute errors are reported.
pub fn pmi_fit_report<S: Scalar>(
    model: &CategoryModel<S>,
    stats: &PairStats,
    pmi_table: &PmiTable,
    k_neg: usize,
) -> Result<PmiFitReport> {
    if stats.support().is_empty() {
        return Err(Error::NoPairs);
    }
    let mut zs = Vec::with_capacity(stats.support().len());
    let mut pmis = Vec::with_capacity(stats.support().len());
    for &(a, b) in stats.support() {
        let z = model.link_logit(a, b)?.aggregate.as_f64();
        let p = pmi_table
            .get(a, b)
            .expect("pmi table covers the stats support");
        zs.push(z);
        pmis.push(p);
    }
    let shift = (k_neg.max(1) as f64).ln();
    let n = zs.len() as f64;
    let mae = zs
        .iter()
        .zip(&pmis)
        .map(|(z, p)| (z - p).abs())
        .sum::<f64>()
        / n;
    let mae_shifted = zs
        .iter()
        .zip(&pmis)
        .map(|(z, p)| (z + shift - p).abs())
        .sum::<f64>()
        / n;
    Ok(PmiFitReport {
        pearson: pearson(&zs, &pmis),
        mean_abs_err: mae,
        mean_abs_err_shifted: mae_shifted,
        log_k_shift: shift,
    })
}

/// Pearson correlation; 0 when either side is constant.
pub fn pearson(xs: &[f64], ys: &[f64]) -> f64 {
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let mut cov = 0.0;
    let mut vx = 0.0;
    let mut vy = 0.0;
    for (x, y) in xs.iter().zip(ys) {
        cov += (x - mx) * (y - my);
        vx += (x - mx) * (x - mx);
        vy += (y - my) * (y - my);
    }
    if vx <= 0.0 || vy <= 0.0 {
        return 0.0;
    }
    cov / (vx * vy).sqrt()
}
