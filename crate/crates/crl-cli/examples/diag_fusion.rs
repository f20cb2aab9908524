use crl_cli::model_file::load_model;
use crl_core::corpus::{ConcurrenceCorpus, CorpusMode};
use crl_core::fusion::*;
use crl_core::rng::Rng;
use std::path::Path;

fn main() {
    let args: Vec<String> = std::env::args().collect();
    let bundle = load_model(Path::new(&args[1])).unwrap();
    let corpus = ConcurrenceCorpus::load(Path::new(&args[2]), CorpusMode::Tokens, false).unwrap();
    let steps: usize = args[3].parse().unwrap();
    let mu: f64 = args[4].parse().unwrap();
    let lr: f64 = args[5].parse().unwrap();
    let model = &bundle.model;
    let cfg = FusionConfig { steps, lr, mu, seed: 7, pairs_per_step: args.get(6).map(|x| x.parse().unwrap()).unwrap_or(16), k_neg: 5, triples_per_step: 32 };

    // Fixed evaluation triples from distinct objects.
    let mut rng = Rng::new(12345);
    let n = model.n_obj();
    let mut triples = Vec::new();
    for _ in 0..200 {
        let i = rng.next_index(n);
        let mut j = rng.next_index(n - 1); if j >= i { j += 1; }
        let mut k = rng.next_index(n - 2);
        let (lo, hi) = if i < j { (i, j) } else { (j, i) };
        if k >= lo { k += 1; }
        if k >= hi { k += 1; }
        triples.push((
            model.object(i).unwrap().to_vec(),
            model.object(j).unwrap().to_vec(),
            model.object(k).unwrap().to_vec(),
        ));
    }
    let init = FusionOperator::init(model.dim(), &mut Rng::new(cfg.seed)).unwrap();
    let before = init.associativity_residual(&triples).unwrap();
    let t0 = std::time::Instant::now();
    let out = train_fusion(model, &corpus, &cfg).unwrap();
    let after = out.op.associativity_residual(&triples).unwrap();
    println!(
        "assoc before {before:.4} after {after:.4} ratio {:.3} (need <= 0.1); ortho {:.2e}; {:?}",
        after / before,
        row_orthonormality_residual(out.op.theta()),
        t0.elapsed()
    );
}
