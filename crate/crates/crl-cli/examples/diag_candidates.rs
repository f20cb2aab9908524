use crl_cli::model_file::load_model;
use crl_core::functor::*;
use crl_core::linalg::{self, dot, norm, outer, Matrix};
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
        let si = a.vocab.iter().position(|v| v == s).unwrap();
        let ti = b.vocab.iter().position(|v| v == t).unwrap();
        pairs.push((si, ti));
    }
    // same supervised selection as cmd_align
    let perm = Rng::new(align_seed).permutation(pairs.len());
    let sup: Vec<(usize, usize)> = perm.iter().take(15).map(|&i| pairs[i]).collect();
    let sup_set: std::collections::BTreeSet<usize> = sup.iter().map(|&(s, _)| s).collect();
    let aligned = AlignmentSet::new(sup.clone()).unwrap();
    let d = a.model.dim();

    let top1_of = |v: &Matrix<f64>| -> f64 {
        let mut hit = 0usize;
        let mut n = 0usize;
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

    // Reproduce the candidate list of train_functor manually.
    let cfg = FunctorConfig { lr: 0.05, steps: 2000, seed: align_seed, lambda: 1.0, refresh_every: 50, restarts: 3 };
    let mut rng = Rng::new(cfg.seed);
    let mut starts: Vec<(String, Matrix<f64>)> = Vec::new();
    let mut cross = Matrix::<f64>::zeros(d, d);
    for &(s, t) in aligned.pairs() {
        cross.add_in_place(&outer(b.model.object(t).unwrap(), a.model.object(s).unwrap()));
    }
    let jitter = 1e-3 * (1.0 + cross.frob_norm());
    let jit = cross.add(&Matrix::gaussian(d, d, jitter, &mut rng)).unwrap();
    starts.push(("procrustes15".into(), linalg::polar_retract(&jit).unwrap()));
    for r in 0..3 {
        starts.push((format!("random{r}"), linalg::polar_retract(&Matrix::gaussian(d, d, 1.0, &mut rng)).unwrap()));
    }
    for (name, v0) in starts {
        for flip in [false, true] {
            let mut v = v0.clone();
            if flip { for j in 0..d { v.set(0, j, -v.get(0, j)); } }
            let out = train_functor_from_start_for_tests(&a.model, &b.model, &aligned, &cfg, v).unwrap();
            let st = structure_loss(&out.functor.v, &a.model, &b.model, &out.functor.matching).unwrap();
            let al = alignment_loss(&out.functor.v, &a.model, &b.model, &aligned).unwrap();
            println!("{name}{}: total {:.2} struct {:.2} align {:.3} top1 {:.3}",
                if flip { "-flip" } else { "" }, st + al, st, al, top1_of(&out.functor.v));
        }
    }
}
