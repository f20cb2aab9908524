use crl_cli::model_file::load_model;
use crl_core::linalg::{self, outer, Matrix};
use std::path::Path;

fn main() {
    let args: Vec<String> = std::env::args().collect();
    let a = load_model(Path::new(&args[1])).unwrap();
    let b = load_model(Path::new(&args[2])).unwrap();
    let gold = std::fs::read_to_string(&args[3]).unwrap();
    let mut pairs = Vec::new();
    for line in gold.lines().skip(1) {
        let (s, t) = line.split_once(',').unwrap();
        let si = a.vocab.iter().position(|v| v == s).unwrap();
        let ti = b.vocab.iter().position(|v| v == t).unwrap();
        pairs.push((si, ti));
    }
    let d = a.model.dim();
    let mut cross = Matrix::<f64>::zeros(d, d);
    for &(s, t) in &pairs {
        cross.add_in_place(&outer(b.model.object(t).unwrap(), a.model.object(s).unwrap()));
    }
    let v = linalg::polar_retract(&cross).unwrap();
    // Residual per pair and cosine top-1 accuracy over all pairs.
    let mut err = 0.0;
    let mut top1 = 0;
    for &(s, t) in &pairs {
        let mapped = v.matvec(a.model.object(s).unwrap()).unwrap();
        let vt = b.model.object(t).unwrap();
        err += mapped.iter().zip(vt).map(|(x, y)| (x - y) * (x - y)).sum::<f64>();
        let mut best = (f64::MIN, 0usize);
        for cand in 0..b.model.n_obj() {
            let vc = b.model.object(cand).unwrap();
            let c = linalg::dot(&mapped, vc) / (linalg::norm(&mapped) * linalg::norm(vc));
            if c > best.0 { best = (c, cand); }
        }
        if best.1 == t { top1 += 1; }
    }
    println!("full-procrustes: mean sq residual {:.4} (unit vectors), top1 {}/{}",
        err / pairs.len() as f64, top1, pairs.len());
}
