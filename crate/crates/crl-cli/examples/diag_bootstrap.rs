use crl_core::category::CategoryModel;
use crl_core::corpus::{pair_distribution, ConcurrenceCorpus, CorpusMode};
use crl_core::fusion::*;
use crl_core::rng::Rng;
use crl_core::training::{train_category, InitKind, TrainConfig};

fn planted_corpus() -> String {
    // A and B always co-occur (with C in half their scopes); C also appears
    // widely with random fillers, and a deep pool of random filler triples
    // keeps every other pair near the independence baseline.
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
    let mut text = String::new();
    for l in lines {
        text.push_str(&l);
        text.push('\n');
    }
    text
}

fn main() {
    let corpus =
        ConcurrenceCorpus::from_text(&planted_corpus(), CorpusMode::Tokens, false).unwrap();
    let cfg = TrainConfig {
        d: 16,
        n_mor: 4,
        k_neg: 1,
        lr: 5e-3,
        steps: 15000,
        batch: 256,
        seed: 5,
        init: InitKind::Gaussian,
        ..TrainConfig::default()
    };
    let t0 = std::time::Instant::now();
    let out = train_category::<f64>(&corpus, &cfg).unwrap();
    let model: CategoryModel<f64> = out.model;
    let a = corpus.token_id("A").unwrap();
    let b = corpus.token_id("B").unwrap();
    let c = corpus.token_id("C").unwrap();
    let f0 = corpus.token_id("f00").unwrap();
    println!(
        "P(A->B) {:.3} P(B->A) {:.3} P(A->C) {:.3} P(C->f00) {:.3} P(f00->f07) {:.3} [{:?}]",
        model.link_prob(a, b).unwrap(),
        model.link_prob(b, a).unwrap(),
        model.link_prob(a, c).unwrap(),
        model.link_prob(c, f0).unwrap(),
        model.link_prob(f0, corpus.token_id("f07").unwrap()).unwrap(),
        t0.elapsed()
    );
    let stats = pair_distribution(&corpus).unwrap();
    let _ = stats;

    let fcfg = FusionConfig {
        steps: 20000,
        lr: 0.02,
        mu: 0.0,
        seed: 7,
        pairs_per_step: 32,
        k_neg: 1,
        triples_per_step: 0,
    };
    let t0 = std::time::Instant::now();
    let fused = train_fusion(&model, &corpus, &fcfg).unwrap();
    let ct = &fused.concurrence_trace;
    println!(
        "fusion trained [{:?}] conc: start {:.4} mid {:.4} end {:.4}",
        t0.elapsed(),
        ct[0],
        ct[ct.len() / 2],
        ct[ct.len() - 1]
    );

    let prior = CompositeVocab::new(model.n_obj());
    let round1 = bootstrap_round(&model, &fused.op, &corpus, &prior, 0.8).unwrap();
    println!("round1 composites: {:?}",
        round1.composites.entries().iter().map(|e| (&e.name, e.left, e.right)).collect::<Vec<_>>());
    let eligible = corpus.scopes().iter().filter(|s| {
        s.iter().any(|&(id, _)| id == a) && s.iter().any(|&(id, _)| id == b)
    }).count();
    let comp_id = round1
        .composites
        .entries()
        .iter()
        .find(|e| {
            (e.left == a && e.right == b) || (e.left == b && e.right == a)
        })
        .map(|e| e.id)
        .expect("A-B composite formed");
    let rewritten = round1.corpus.scopes().iter().filter(|s| s.iter().any(|&(id, _)| id == comp_id)).count();
    println!("eligible scopes {eligible}, rewritten {rewritten}");

    // Probe the composite-to-C link before round 2.
    let centry = round1.composites.get(comp_id).unwrap().clone();
    {
        use crl_core::linalg::{dot, sigmoid};
        let vc = model.object(c).unwrap();
        let logits: Vec<f64> = (0..model.n_mor())
            .map(|f| {
                let m = model.morphism_matrix(f).unwrap();
                dot(vc, &m.matvec(&centry.vector).unwrap())
            })
            .collect();
        let z = model.aggregator().aggregate(&logits).unwrap();
        let logits_rev: Vec<f64> = (0..model.n_mor())
            .map(|f| {
                let m = model.morphism_matrix(f).unwrap();
                dot(&centry.vector, &m.matvec(vc).unwrap())
            })
            .collect();
        let z_rev = model.aggregator().aggregate(&logits_rev).unwrap();
        println!("P(comp->C) {:.3} P(C->comp) {:.3}", sigmoid(z), sigmoid(z_rev));
    }
    let round2 = bootstrap_round(&model, &fused.op, &round1.corpus, &round1.composites, 0.8).unwrap();
    println!("round2 composites: {:?}",
        round2.composites.entries().iter().map(|e| (&e.name, e.left, e.right)).collect::<Vec<_>>());
}
