use crl_cli::model_file::load_model;
use crl_core::functor::*;
use crl_core::linalg::{dot, norm, Matrix};
use crl_core::rng::Rng;
use std::path::Path;

fn main() {
    let args: Vec<String> = std::env::args().collect();
    let a = load_model(Path::new(&args[1])).unwrap();
    let b = load_model(Path::new(&args[2])).unwrap();
    let gold = std::fs::read_to_string(&args[3]).unwrap();
    let align_seed: u64 = args[4].parse().unwrap();
    let mut pairs = Vec::new();
    for line in gold.lines().skip(1) {
        let (s, t) = line.split_once(',').unwrap();
        pairs.push((
            a.vocab.iter().position(|v| v == s).unwrap(),
            b.vocab.iter().position(|v| v == t).unwrap(),
        ));
    }
    let perm = Rng::new(align_seed).permutation(pairs.len());
    let sup: Vec<(usize, usize)> = perm.iter().take(15).map(|&i| pairs[i]).collect();
    let sup_set: std::collections::BTreeSet<usize> = sup.iter().map(|&(s, _)| s).collect();
    let aligned = AlignmentSet::new(sup).unwrap();

    let top1_of = |v: &Matrix<f64>| -> f64 {
        let (mut hit, mut n) = (0usize, 0usize);
        for &(s, t) in &pairs {
            if sup_set.contains(&s) { continue; }
            n += 1;
            let mapped = v.matvec(a.model.object(s).unwrap()).unwrap();
            let mut best = (f64::MIN, 0usize);
            for cand in 0..b.model.n_obj() {
                let vc = b.model.object(cand).unwrap();
                let c = dot(&mapped, vc) / (norm(&mapped) * norm(vc));
                if c > best.0 { best = (c, cand); }
            }
            if best.1 == t { hit += 1; }
        }
        hit as f64 / n as f64
    };

    let refined = refined_procrustes_start_for_tests(&a.model, &b.model, &aligned).unwrap();
    println!("refined start: top1 {:.3} align {:.3}", top1_of(&refined),
        alignment_loss(&refined, &a.model, &b.model, &aligned).unwrap());
    let cfg = FunctorConfig { lr: 0.05, steps: 2000, seed: align_seed, lambda: 1.0, refresh_every: 50, restarts: 3 };
    let run = train_functor_from_start_for_tests(&a.model, &b.model, &aligned, &cfg, refined).unwrap();
    println!("after descent: top1 {:.3} align {:.3} struct {:.3}",
        top1_of(&run.functor.v),
        alignment_loss(&run.functor.v, &a.model, &b.model, &aligned).unwrap(),
        structure_loss(&run.functor.v, &a.model, &b.model, &run.functor.matching).unwrap());
}
