use crl_cli::model_file::load_model;
use crl_core::functor::{alignment_loss, match_morphisms, structure_loss, AlignmentSet};
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
    let v_star = linalg::polar_retract(&cross).unwrap();
    let m_star = match_morphisms(&a.model, &b.model, &v_star).unwrap();
    let s_star = structure_loss(&v_star, &a.model, &b.model, &m_star).unwrap();
    let sup = AlignmentSet::new(pairs[..15].to_vec()).unwrap();
    let a_star = alignment_loss(&v_star, &a.model, &b.model, &sup).unwrap();
    println!("at true V*: structure {s_star:.2} alignment(15) {a_star:.4} total {:.2}", s_star + a_star);

    // Compare with the fitted functor if provided.
    if args.len() > 4 {
        let f = load_model(Path::new(&args[4])).unwrap();
        let v = f.functor.unwrap();
        let m = match_morphisms(&a.model, &b.model, &v).unwrap();
        let s = structure_loss(&v, &a.model, &b.model, &m).unwrap();
        let al = alignment_loss(&v, &a.model, &b.model, &sup).unwrap();
        println!("at fitted V: structure {s:.2} alignment(15) {al:.4} total {:.2}", s + al);
        println!("||V - V*||_F = {:.3}", v.frob_dist(&v_star));
    }
    // Head norms for context.
    for f in 0..a.model.n_mor() {
        let ms = a.model.morphism_matrix(f).unwrap();
        let mt = b.model.morphism_matrix(m_star[f]).unwrap();
        println!("head {f}->{}: ||Ms|| {:.2} ||Mt|| {:.2}", m_star[f], ms.frob_norm(), mt.frob_norm());
    }
}
