//! Acceptance suite: one test per release criterion, each printing a PASS
//! line with the measured value. Run with
//! `cargo test -p crl-cli --test acceptance -- --nocapture`.

use std::collections::{BTreeMap, BTreeSet};
use std::time::Instant;

use crl_core::category::{Aggregator, CategoryModel, ModelShape, MorphismParam};
use crl_core::corpus::{
    gen_synthetic, pair_distribution, parse_formula, pmi, ConcurrenceCorpus, CorpusMode,
    SyntheticSpec,
};
use crl_core::error::Error;
use crl_core::functor::{
    functor_axiom_check, structure_loss, train_functor, translate, AlignmentSet, FunctorConfig,
};
use crl_core::fusion::{
    bootstrap_round, row_orthonormality_residual, train_fusion, CompositeVocab, FusionConfig,
    FusionOperator,
};
use crl_core::linalg::{self, Matrix};
use crl_core::rng::Rng;
use crl_core::training::{pmi_fit_report, train_category, InitKind, TrainConfig};
use crl_core::Real;

use crl_cli::eval::eval_translation;
use crl_cli::grad_check_sweep;
use crl_cli::model_file::{load_model, save_model, ModelBundle};

fn seeded_model(n_obj: usize, d: usize, n_mor: usize, seed: u64) -> CategoryModel<Real> {
    let shape = ModelShape {
        dim: d,
        n_mor,
        ..ModelShape::default()
    };
    CategoryModel::init(n_obj, &shape, &mut Rng::new(seed)).unwrap()
}

/// Criterion 1: analytic gradients match central finite differences to 1e-4
/// over 100 seeded configurations covering both aggregators, hypersphere
/// on/off, and the low-rank morphism option.
#[test]
fn criterion_01_gradient_correctness() {
    let t0 = Instant::now();
    let worst = grad_check_sweep(100, 0, 1e-5).unwrap();
    let elapsed = t0.elapsed();
    assert!(worst < 1e-4, "max relative error {worst}");
    assert!(elapsed.as_secs() < 30, "took {elapsed:?}");
    println!("[PASS] criterion 1: gradient max relative error {worst:.3e} (< 1e-4) in {elapsed:?}");
}

/// Criterion 2: training on the standard synthetic corpus recovers PMI with
/// Pearson correlation at least 0.90 between aggregate logits and PMI over
/// the observed support.
#[test]
fn criterion_02_pmi_recovery() {
    let t0 = Instant::now();
    let spec = SyntheticSpec::standard(30, 5, 5000, 42);
    let corpus = gen_synthetic(&spec).unwrap().source;
    let cfg = TrainConfig {
        d: 16,
        n_mor: 4,
        k_neg: 5,
        lr: 5e-3,
        steps: 20_000,
        batch: 128,
        seed: 1,
        ..TrainConfig::default()
    };
    let out = train_category::<Real>(&corpus, &cfg).unwrap();
    let stats = pair_distribution(&corpus).unwrap();
    let table = pmi(&stats);
    let report = pmi_fit_report(&out.model, &stats, &table, cfg.k_neg).unwrap();
    let elapsed = t0.elapsed();
    assert!(
        report.pearson >= 0.90,
        "pearson {} below 0.90",
        report.pearson
    );
    assert!(elapsed.as_secs() < 300, "took {elapsed:?}");
    println!(
        "[PASS] criterion 2: PMI recovery pearson {:.4} (>= 0.90), mae raw {:.4} / log-k-shifted {:.4}, in {elapsed:?}",
        report.pearson, report.mean_abs_err, report.mean_abs_err_shifted
    );
}

/// Criterion 3: the functor axioms hold to 1e-9 for orthogonal maps over 100
/// seeded categories.
#[test]
fn criterion_03_functor_axioms() {
    let t0 = Instant::now();
    let mut worst_id = 0.0f64;
    let mut worst_comp = 0.0f64;
    for seed in 0..100u64 {
        let mut rng = Rng::new(seed);
        let d = 3 + (seed % 6) as usize;
        let n_mor = 1 + (seed % 4) as usize;
        let model = seeded_model(6, d, n_mor, seed + 500);
        let v = linalg::polar_retract(&Matrix::<Real>::gaussian(d, d, 1.0, &mut rng)).unwrap();
        let res = functor_axiom_check(&v, &model).unwrap();
        worst_id = worst_id.max(res.id_residual);
        worst_comp = worst_comp.max(res.comp_residual);
    }
    let elapsed = t0.elapsed();
    assert!(worst_id < 1e-9, "identity residual {worst_id}");
    assert!(worst_comp < 1e-9, "composition residual {worst_comp}");
    assert!(elapsed.as_secs() < 10, "took {elapsed:?}");
    println!(
        "[PASS] criterion 3: functor axiom residuals id {worst_id:.2e}, comp {worst_comp:.2e} (< 1e-9) in {elapsed:?}"
    );
}

/// Criterion 4: a target built by conjugating the source with a seeded
/// orthogonal map and permuting heads is recovered by the unsupervised fit:
/// structure loss below 1e-6 and the planted permutation recovered.
#[test]
fn criterion_04_planted_functor_recovery() {
    let t0 = Instant::now();
    let src = seeded_model(12, 6, 4, 24);
    let r = linalg::polar_retract(&Matrix::<Real>::gaussian(6, 6, 1.0, &mut Rng::new(25))).unwrap();
    let perm = vec![1usize, 3, 0, 2];
    let objects = src.objects().matmul(&r.transpose()).unwrap();
    let mut morphs = vec![MorphismParam::Dense(Matrix::zeros(1, 1)); 4];
    for f in 0..4 {
        let m = src.morphism_matrix(f).unwrap();
        let conj = r.matmul(&m).unwrap().matmul(&r.transpose()).unwrap();
        morphs[perm[f]] = MorphismParam::Dense(conj);
    }
    let tgt = CategoryModel::from_parts(objects, morphs, Aggregator::LogSumExp, true).unwrap();
    let cfg = FunctorConfig {
        lr: 0.02,
        steps: 3000,
        seed: 26,
        lambda: 0.0,
        refresh_every: 25,
        restarts: 3,
    };
    let out = train_functor(&src, &tgt, &AlignmentSet::default(), &cfg).unwrap();
    let loss = structure_loss(&out.functor.v, &src, &tgt, &out.functor.matching).unwrap();
    let elapsed = t0.elapsed();
    assert!(loss < 1e-6, "structure loss {loss}");
    assert_eq!(out.functor.matching, perm, "planted permutation not recovered");
    assert!(elapsed.as_secs() < 120, "took {elapsed:?}");
    println!(
        "[PASS] criterion 4: planted functor recovered, structure loss {loss:.2e} (< 1e-6), matching {:?}, in {elapsed:?}",
        out.functor.matching
    );
}

/// Shared protocol for criterion 5: train twin models, fit the functor on 15
/// supervised pairs at lambda = 1, and score held-out top-1/top-3.
fn translation_run(
    source: &ConcurrenceCorpus,
    twin: &ConcurrenceCorpus,
    alignment: &[usize],
    seed: u64,
) -> (f64, f64) {
    let train_cfg = |s: u64| TrainConfig {
        d: 16,
        n_mor: 1,
        k_neg: 5,
        lr: 2e-3,
        steps: 20_000,
        batch: 256,
        seed: s,
        init: InitKind::PmiSpectral,
        ..TrainConfig::default()
    };
    let src = train_category::<Real>(source, &train_cfg(seed)).unwrap().model;
    let tgt = train_category::<Real>(twin, &train_cfg(1000 + seed)).unwrap().model;

    // 15 seeded supervised pairs from the gold alignment.
    let n = alignment.len();
    let perm = Rng::new(2000 + seed).permutation(n);
    let sup: Vec<(usize, usize)> = perm.iter().take(15).map(|&i| (i, alignment[i])).collect();
    let sup_sources: BTreeSet<usize> = sup.iter().map(|&(s, _)| s).collect();
    let aligned = AlignmentSet::new(sup).unwrap();
    let cfg = FunctorConfig {
        lr: 0.05,
        steps: 200,
        seed: 2000 + seed,
        lambda: 1.0,
        refresh_every: 50,
        restarts: 3,
    };
    let out = train_functor(&src, &tgt, &aligned, &cfg).unwrap();

    let mut predictions = Vec::new();
    let truth: BTreeMap<String, String> = (0..n)
        .map(|s| (format!("s{s}"), format!("t{}", alignment[s])))
        .collect();
    let supervised: BTreeSet<String> = sup_sources.iter().map(|s| format!("s{s}")).collect();
    for s in 0..n {
        let ranked = translate(&out.functor, &src, &tgt, s, 3).unwrap();
        predictions.push((
            format!("s{s}"),
            ranked.iter().map(|&(b, _)| format!("t{b}")).collect(),
        ));
    }
    let report = eval_translation(&predictions, &truth, &supervised, 3).unwrap();
    assert_eq!(report.evaluated, n - 15);
    (report.top1, report.top3)
}

fn median(values: &mut [f64]) -> f64 {
    values.sort_by(|a, b| a.partial_cmp(b).unwrap());
    values[values.len() / 2]
}

/// Criterion 5: semi-supervised translation on the synthetic twin corpora,
/// 15 supervised pairs, lambda = 1 -> held-out top-1 >= 0.70 and top-3 >=
/// 0.85 as the median over 5 seeds. (The paper's reported operating point on
/// its unavailable compound dataset, 57 of 89 correct, stands as reference
/// only.)
#[test]
fn criterion_05_semi_supervised_translation() {
    let t0 = Instant::now();
    let spec = SyntheticSpec::standard(60, 6, 4000, 42);
    let twins = gen_synthetic(&spec).unwrap();
    // Twin token ids equal their vocabulary index by construction.
    let mut top1s = Vec::new();
    let mut top3s = Vec::new();
    for seed in 1..=5u64 {
        let (top1, top3) = translation_run(&twins.source, &twins.twin, &twins.alignment, seed);
        println!("  seed {seed}: held-out top1 {top1:.4}, top3 {top3:.4}");
        top1s.push(top1);
        top3s.push(top3);
    }
    let m1 = median(&mut top1s);
    let m3 = median(&mut top3s);
    let elapsed = t0.elapsed();
    assert!(m1 >= 0.70, "median top-1 {m1} below 0.70");
    assert!(m3 >= 0.85, "median top-3 {m3} below 0.85");
    assert!(elapsed.as_secs() < 600, "took {elapsed:?}");
    println!(
        "[PASS] criterion 5: translation median top-1 {m1:.4} (>= 0.70), top-3 {m3:.4} (>= 0.85) over 5 seeds in {elapsed:?}"
    );
}

/// Criterion 6: the orthogonality invariant holds after every retraction of
/// a full 1000-step functor fit.
#[test]
fn criterion_06_orthogonality_invariant() {
    let t0 = Instant::now();
    let src = seeded_model(30, 16, 4, 61);
    let tgt = seeded_model(30, 16, 4, 62);
    let aligned = AlignmentSet::new((0..15).map(|i| (i, i)).collect()).unwrap();
    let cfg = FunctorConfig {
        lr: 0.05,
        steps: 1000,
        seed: 63,
        lambda: 1.0,
        refresh_every: 50,
        restarts: 1,
    };
    let out = train_functor(&src, &tgt, &aligned, &cfg).unwrap();
    let elapsed = t0.elapsed();
    assert!(
        out.max_orthogonality_residual < 1e-8,
        "worst residual {}",
        out.max_orthogonality_residual
    );
    assert!(elapsed.as_secs() < 60, "took {elapsed:?}");
    println!(
        "[PASS] criterion 6: max ||V^T V - I||_F {:.2e} (< 1e-8) across a 1000-step fit in {elapsed:?}",
        out.max_orthogonality_residual
    );
}

/// Criterion 7: fusion training reduces the mean associativity residual to
/// at most a tenth of its value at initialization; at d = 1 the residual is
/// exactly zero.
#[test]
fn criterion_07_associativity() {
    let t0 = Instant::now();
    let spec = SyntheticSpec::standard(30, 5, 5000, 42);
    let corpus = gen_synthetic(&spec).unwrap().source;
    let cfg = TrainConfig {
        d: 16,
        n_mor: 4,
        k_neg: 5,
        lr: 5e-3,
        steps: 5000,
        batch: 128,
        seed: 1,
        ..TrainConfig::default()
    };
    let model = train_category::<Real>(&corpus, &cfg).unwrap().model;

    // Fixed seeded evaluation triples of distinct objects.
    let mut rng = Rng::new(12345);
    let n = model.n_obj();
    let mut triples = Vec::new();
    for _ in 0..200 {
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
        triples.push((
            model.object(i).unwrap().to_vec(),
            model.object(j).unwrap().to_vec(),
            model.object(k).unwrap().to_vec(),
        ));
    }
    let fcfg = FusionConfig {
        steps: 40_000,
        lr: 0.02,
        mu: 100.0,
        seed: 7,
        pairs_per_step: 16,
        k_neg: 5,
        triples_per_step: 32,
    };
    let init = FusionOperator::init(model.dim(), &mut Rng::new(fcfg.seed)).unwrap();
    let before = init.associativity_residual(&triples).unwrap();
    let out = train_fusion(&model, &corpus, &fcfg).unwrap();
    let after = out.op.associativity_residual(&triples).unwrap();
    assert!(
        after <= before / 10.0,
        "associativity {after} not a tenth of init {before}"
    );
    assert!(row_orthonormality_residual(out.op.theta()) < 1e-8);

    // d = 1 on the hypersphere: inputs are +-1 and the residual vanishes
    // exactly.
    let op1 =
        FusionOperator::from_matrix(Matrix::from_vec(1, 1, vec![-1.0f64]).unwrap()).unwrap();
    let unit_triples: Vec<(Vec<f64>, Vec<f64>, Vec<f64>)> = (0..8)
        .map(|i| {
            let sign = |b: usize| if (i >> b) & 1 == 0 { 1.0 } else { -1.0 };
            (vec![sign(0)], vec![sign(1)], vec![sign(2)])
        })
        .collect();
    assert_eq!(op1.associativity_residual(&unit_triples).unwrap(), 0.0);
    let elapsed = t0.elapsed();
    assert!(elapsed.as_secs() < 300, "took {elapsed:?}");
    println!(
        "[PASS] criterion 7: associativity residual {before:.4} -> {after:.4} (ratio {:.3} <= 0.1), d=1 residual exactly 0, in {elapsed:?}",
        after / before
    );
}

fn planted_hierarchy_corpus() -> ConcurrenceCorpus {
    // A and B always co-occur with C as their context; C also roams widely
    // over random fillers, and random filler triples keep every other pair
    // near the independence baseline.
    let mut rng = Rng::new(99);
    let n_fill = 40usize;
    let mut pick2 = |rng: &mut Rng| {
        let i = rng.next_index(n_fill);
        let mut j = rng.next_index(n_fill - 1);
        if j >= i {
            j += 1;
        }
        (i, j)
    };
    let mut lines: Vec<String> = Vec::new();
    for _ in 0..200 {
        lines.push("A B C".to_string());
    }
    for _ in 0..1200 {
        let (i, j) = pick2(&mut rng);
        lines.push(format!("C f{i:02} f{j:02}"));
    }
    for _ in 0..3000 {
        let (i, j) = pick2(&mut rng);
        let mut k = rng.next_index(n_fill - 2);
        let (lo, hi) = if i < j { (i, j) } else { (j, i) };
        if k >= lo {
            k += 1;
        }
        if k >= hi {
            k += 1;
        }
        lines.push(format!("f{i:02} f{j:02} f{k:02}"));
    }
    for i in (1..lines.len()).rev() {
        let j = rng.next_index(i + 1);
        lines.swap(i, j);
    }
    let text = lines.join("\n");
    ConcurrenceCorpus::from_text(&text, CorpusMode::Tokens, false).unwrap()
}

/// Criterion 8: bootstrap coarse-graining on a planted hierarchy. Round 1
/// fuses the always-co-occurring pair (A, B) in every scope holding both and
/// nothing else; round 2 fuses the composite with its context C.
#[test]
fn criterion_08_bootstrap_coarse_graining() {
    let t0 = Instant::now();
    let corpus = planted_hierarchy_corpus();
    let a = corpus.token_id("A").unwrap();
    let b = corpus.token_id("B").unwrap();
    let c = corpus.token_id("C").unwrap();
    let cfg = TrainConfig {
        d: 16,
        n_mor: 4,
        k_neg: 1,
        lr: 5e-3,
        steps: 15_000,
        batch: 256,
        seed: 5,
        ..TrainConfig::default()
    };
    let model = train_category::<Real>(&corpus, &cfg).unwrap().model;
    let fcfg = FusionConfig {
        steps: 20_000,
        lr: 0.02,
        mu: 0.0,
        seed: 7,
        pairs_per_step: 32,
        k_neg: 1,
        triples_per_step: 0,
    };
    let fusion = train_fusion(&model, &corpus, &fcfg).unwrap();

    let prior = CompositeVocab::new(model.n_obj());
    let round1 = bootstrap_round(&model, &fusion.op, &corpus, &prior, 0.8).unwrap();
    assert_eq!(
        round1.composites.len(),
        1,
        "round 1 formed {:?}",
        round1
            .composites
            .entries()
            .iter()
            .map(|e| &e.name)
            .collect::<Vec<_>>()
    );
    let comp = &round1.composites.entries()[0];
    let parts = {
        let mut p = [comp.left, comp.right];
        p.sort_unstable();
        p
    };
    assert_eq!(parts, {
        let mut p = [a, b];
        p.sort_unstable();
        p
    });
    let eligible = corpus
        .scopes()
        .iter()
        .filter(|s| s.iter().any(|&(id, _)| id == a) && s.iter().any(|&(id, _)| id == b))
        .count();
    let rewritten = round1
        .corpus
        .scopes()
        .iter()
        .filter(|s| s.iter().any(|&(id, _)| id == comp.id))
        .count();
    assert_eq!(eligible, 200);
    assert_eq!(
        rewritten, eligible,
        "composite formed in {rewritten} of {eligible} eligible scopes"
    );

    let round2 =
        bootstrap_round(&model, &fusion.op, &round1.corpus, &round1.composites, 0.8).unwrap();
    let deep = round2
        .composites
        .entries()
        .iter()
        .find(|e| {
            let mut p = [e.left, e.right];
            p.sort_unstable();
            p == {
                let mut q = [comp.id, c];
                q.sort_unstable();
                q
            }
        })
        .unwrap_or_else(|| {
            panic!(
                "round 2 did not fuse the composite with C; formed {:?}",
                round2
                    .composites
                    .entries()
                    .iter()
                    .skip(1)
                    .map(|e| &e.name)
                    .collect::<Vec<_>>()
            )
        });
    let elapsed = t0.elapsed();
    assert!(elapsed.as_secs() < 180, "took {elapsed:?}");
    println!(
        "[PASS] criterion 8: round 1 formed {} in all {eligible} eligible scopes, round 2 formed {}, in {elapsed:?}",
        comp.name, deep.name
    );
}

/// Criterion 9: the formula parser handles the reference formulas (the
/// nested one traced by hand: K4 then one Fe, six C, six N) and raises the
/// specified errors on malformed input.
#[test]
fn criterion_09_formula_parser() {
    let t0 = Instant::now();
    let cases: &[(&str, &[(&str, u64)])] = &[
        ("NaCl", &[("Na", 1), ("Cl", 1)]),
        ("Ca(OH)2", &[("Ca", 1), ("O", 2), ("H", 2)]),
        ("H2SO4", &[("H", 2), ("S", 1), ("O", 4)]),
        ("K4(Fe(CN)6)", &[("K", 4), ("Fe", 1), ("C", 6), ("N", 6)]),
    ];
    for &(formula, expected) in cases {
        let parsed = parse_formula(formula).unwrap();
        let want: BTreeMap<String, u64> = expected
            .iter()
            .map(|&(e, n)| (e.to_string(), n))
            .collect();
        assert_eq!(parsed, want, "formula {formula}");
    }
    assert_eq!(parse_formula("Mg(").unwrap_err(), Error::UnbalancedParens);
    assert_eq!(parse_formula("Na)Cl").unwrap_err(), Error::UnbalancedParens);
    assert_eq!(parse_formula("H0").unwrap_err(), Error::ZeroCount);
    assert!(matches!(
        parse_formula("xenon"),
        Err(Error::UnknownToken { .. })
    ));
    let elapsed = t0.elapsed();
    assert!(elapsed.as_secs() < 1, "took {elapsed:?}");
    println!("[PASS] criterion 9: formula parser examples and error cases in {elapsed:?}");
}

/// Criterion 10: identical seeded pipelines produce byte-identical files,
/// the model container round-trips bit-for-bit, and corrupted files are
/// rejected with the specified errors.
#[test]
fn criterion_10_determinism_and_persistence() {
    let t0 = Instant::now();
    let dir = std::env::temp_dir().join("crl_acceptance_c10");
    std::fs::create_dir_all(&dir).unwrap();
    let run = |tag: &str| -> (Vec<u8>, Vec<u8>, Vec<u8>) {
        let corpus = dir.join(format!("{tag}.txt"));
        let model = dir.join(format!("{tag}.model"));
        let trace = dir.join(format!("{tag}.csv"));
        let code = crl_cli::run_command([
            "gen-synth".to_string(),
            "--seed".into(),
            "9".into(),
            "--objects".into(),
            "12".into(),
            "--roles".into(),
            "3".into(),
            "--scopes".into(),
            "150".into(),
            "--out".into(),
            corpus.display().to_string(),
        ]);
        assert_eq!(code, 0);
        let code = crl_cli::run_command([
            "train".to_string(),
            "--corpus".into(),
            corpus.display().to_string(),
            "--d".into(),
            "6".into(),
            "--heads".into(),
            "2".into(),
            "--steps".into(),
            "300".into(),
            "--batch".into(),
            "16".into(),
            "--seed".into(),
            "4".into(),
            "--out".into(),
            model.display().to_string(),
            "--trace".into(),
            trace.display().to_string(),
        ]);
        assert_eq!(code, 0);
        (
            std::fs::read(&model).unwrap(),
            std::fs::read(&trace).unwrap(),
            std::fs::read(dir.join(format!("{tag}.model.manifest"))).unwrap(),
        )
    };
    let (m1, t1, mf1) = run("one");
    let (m2, t2, mf2) = run("two");
    assert_eq!(m1, m2, "model files differ across identical runs");
    assert_eq!(t1, t2, "loss traces differ across identical runs");
    assert_eq!(mf1, mf2, "manifests differ across identical runs");

    // Bit-exact round trip.
    let path = dir.join("one.model");
    let bundle = load_model(&path).unwrap();
    let copy = dir.join("copy.model");
    save_model(&bundle, &copy).unwrap();
    assert_eq!(std::fs::read(&path).unwrap(), std::fs::read(&copy).unwrap());
    let reloaded = load_model(&copy).unwrap();
    assert_eq!(reloaded, bundle);

    // Corrupted-file rejection: magic, truncated payload, header shape lie.
    let bytes = std::fs::read(&path).unwrap();
    let bad = dir.join("bad.model");
    let mut magic = bytes.clone();
    magic[0..4].copy_from_slice(b"XXXX");
    std::fs::write(&bad, &magic).unwrap();
    assert_eq!(load_model(&bad).unwrap_err(), Error::BadMagic);

    std::fs::write(&bad, &bytes[..bytes.len() - 8]).unwrap();
    assert!(matches!(
        load_model(&bad).unwrap_err(),
        Error::TruncatedPayload { .. }
    ));

    let header_len = u32::from_le_bytes(bytes[4..8].try_into().unwrap()) as usize;
    let header = std::str::from_utf8(&bytes[8..8 + header_len]).unwrap();
    let lied = header.replace("n_mor=2", "n_mor=3");
    let mut out = Vec::new();
    out.extend_from_slice(b"CRL1");
    out.extend_from_slice(&(lied.len() as u32).to_le_bytes());
    out.extend_from_slice(lied.as_bytes());
    out.extend_from_slice(&bytes[8 + header_len..]);
    std::fs::write(&bad, &out).unwrap();
    assert!(matches!(
        load_model(&bad).unwrap_err(),
        Error::ShapeMismatch(_) | Error::TruncatedPayload { .. }
    ));

    let elapsed = t0.elapsed();
    assert!(elapsed.as_secs() < 60, "took {elapsed:?}");
    println!(
        "[PASS] criterion 10: byte-identical pipelines, bit-exact round trip, corrupted files rejected, in {elapsed:?}"
    );
}
