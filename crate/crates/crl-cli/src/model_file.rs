//! Self-describing binary model container.
//!
//! Layout: 4 magic bytes `CRL1`, a little-endian u32 header length, a UTF-8
//! `key=value` header (shape metadata, section offsets, the embedded
//! vocabulary), then a payload of row-major little-endian f64 sections:
//! objects, morphisms, optional MLP aggregator parameters, optional functor
//! V, optional fusion Theta. Offsets are relative to the payload start and
//! must tile it exactly; loading is bit-exact.

use std::collections::BTreeMap;
use std::io::{Read, Write};
use std::path::Path;

use crl_core::category::{
    Aggregator, AggregatorKind, CategoryModel, MlpAggregator, MorphismParam,
};
use crl_core::error::{Error, Result};
use crl_core::linalg::Matrix;
use crl_core::Real;

pub const MAGIC: &[u8; 4] = b"CRL1";

/// Everything one model file carries.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelBundle {
    pub vocab: Vec<String>,
    pub seed: u64,
    pub model: CategoryModel<Real>,
    /// Orthogonal functor V, when this bundle was produced by `align`.
    pub functor: Option<Matrix<Real>>,
    /// Functor head matching, present iff `functor` is.
    pub functor_matching: Vec<usize>,
    /// Alignment weight the functor was fitted with (f64 bits in the header).
    pub functor_lambda: Option<f64>,
    /// Fusion operator Theta (d x d^2), when produced by `fuse`.
    pub fusion: Option<Matrix<Real>>,
}

impl ModelBundle {
    pub fn new(vocab: Vec<String>, seed: u64, model: CategoryModel<Real>) -> Self {
        ModelBundle {
            vocab,
            seed,
            model,
            functor: None,
            functor_matching: Vec::new(),
            functor_lambda: None,
            fusion: None,
        }
    }

    /// Exact parameter count of everything in the bundle:
    /// n_obj*d + morphisms (n_mor*d^2 dense, 2*n_mor*r*d factored) +
    /// aggregator parameters + d^2 for a functor + d^3 for a fusion operator.
    pub fn count_params(&self) -> u64 {
        let mut total = self.model.param_count() as u64;
        if self.functor.is_some() {
            let d = self.model.dim() as u64;
            total += d * d;
        }
        if self.fusion.is_some() {
            let d = self.model.dim() as u64;
            total += d * d * d;
        }
        total
    }
}

fn aggregator_tag(agg: &Aggregator<Real>) -> String {
    match agg.kind() {
        AggregatorKind::LogSumExp => "logsumexp".into(),
        AggregatorKind::Mlp { hidden } => format!("mlp:{hidden}"),
    }
}

fn section_push(out: &mut Vec<u8>, values: &[Real]) -> (usize, usize) {
    let off = out.len();
    for v in values {
        out.extend_from_slice(&v.to_le_bytes());
    }
    (off, out.len() - off)
}

pub fn save_model(bundle: &ModelBundle, path: &Path) -> Result<()> {
    let model = &bundle.model;
    if bundle.vocab.len() != model.n_obj() {
        return Err(Error::ShapeMismatch(format!(
            "vocabulary has {} entries but the model has {} objects",
            bundle.vocab.len(),
            model.n_obj()
        )));
    }
    for tok in &bundle.vocab {
        if tok.is_empty() || tok.chars().any(char::is_whitespace) {
            return Err(Error::InvalidArgument(format!(
                "token {tok:?} cannot be embedded in a model header"
            )));
        }
    }
    if bundle.functor.is_some() && bundle.functor_matching.len() != model.n_mor() {
        return Err(Error::ShapeMismatch(
            "functor matching must cover every morphism head".into(),
        ));
    }

    let mut payload = Vec::new();
    let mut sections: Vec<(String, usize, usize)> = Vec::new();

    let (off, len) = section_push(&mut payload, model.objects().data());
    sections.push(("objects".into(), off, len));

    let mut morph_values = Vec::new();
    let mut rank_tag = "dense".to_string();
    for m in model.morphisms() {
        match m {
            MorphismParam::Dense(m) => morph_values.extend_from_slice(m.data()),
            MorphismParam::LowRank { q, k } => {
                rank_tag = q.rows().to_string();
                morph_values.extend_from_slice(q.data());
                morph_values.extend_from_slice(k.data());
            }
        }
    }
    let (off, len) = section_push(&mut payload, &morph_values);
    sections.push(("morphisms".into(), off, len));

    if let Aggregator::Mlp(mlp) = model.aggregator() {
        let mut agg_values = Vec::new();
        agg_values.extend_from_slice(mlp.w1.data());
        agg_values.extend_from_slice(&mlp.b1);
        agg_values.extend_from_slice(&mlp.w2);
        agg_values.push(mlp.b2);
        let (off, len) = section_push(&mut payload, &agg_values);
        sections.push(("aggparams".into(), off, len));
    }
    if let Some(v) = &bundle.functor {
        let (off, len) = section_push(&mut payload, v.data());
        sections.push(("functor".into(), off, len));
    }
    if let Some(theta) = &bundle.fusion {
        let (off, len) = section_push(&mut payload, theta.data());
        sections.push(("fusion".into(), off, len));
    }

    let mut header = String::new();
    header.push_str("version=1\n");
    header.push_str(&format!("dim={}\n", model.dim()));
    header.push_str(&format!("n_obj={}\n", model.n_obj()));
    header.push_str(&format!("n_mor={}\n", model.n_mor()));
    header.push_str(&format!("aggregator={}\n", aggregator_tag(model.aggregator())));
    header.push_str(&format!("hypersphere={}\n", u8::from(model.hypersphere())));
    header.push_str(&format!("seed={}\n", bundle.seed));
    header.push_str(&format!("morphism_rank={rank_tag}\n"));
    if bundle.functor.is_some() {
        let matching: Vec<String> = bundle
            .functor_matching
            .iter()
            .map(ToString::to_string)
            .collect();
        header.push_str(&format!("functor_matching={}\n", matching.join(",")));
        let lambda = bundle.functor_lambda.unwrap_or(1.0);
        header.push_str(&format!("functor_lambda_bits={:016x}\n", lambda.to_bits()));
    }
    let section_list: Vec<String> = sections
        .iter()
        .map(|(name, off, len)| format!("{name}:{off}:{len}"))
        .collect();
    header.push_str(&format!("sections={}\n", section_list.join(",")));
    header.push_str(&format!("vocab={}\n", bundle.vocab.join(" ")));

    let mut out = Vec::with_capacity(8 + header.len() + payload.len());
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&u32::try_from(header.len()).map_err(|_| {
        Error::InvalidArgument("header exceeds the u32 length field".into())
    })?.to_le_bytes());
    out.extend_from_slice(header.as_bytes());
    out.extend_from_slice(&payload);

    let mut file = std::fs::File::create(path)?;
    file.write_all(&out)?;
    Ok(())
}

fn header_field<'a>(fields: &'a BTreeMap<&str, &str>, key: &str) -> Result<&'a str> {
    fields
        .get(key)
        .copied()
        .ok_or_else(|| Error::ShapeMismatch(format!("model header is missing {key}")))
}

fn parse_num<T: std::str::FromStr>(what: &str, s: &str) -> Result<T> {
    s.parse()
        .map_err(|_| Error::ShapeMismatch(format!("bad {what} value {s:?} in model header")))
}

fn take_section(payload: &[u8], off: usize, len: usize, count: usize) -> Result<Vec<Real>> {
    if len != count * 8 {
        return Err(Error::ShapeMismatch(format!(
            "section of {len} bytes cannot hold {count} values"
        )));
    }
    let end = off
        .checked_add(len)
        .ok_or_else(|| Error::ShapeMismatch("section offset overflow".into()))?;
    if end > payload.len() {
        return Err(Error::TruncatedPayload {
            expected: end,
            found: payload.len(),
        });
    }
    Ok(payload[off..end]
        .chunks_exact(8)
        .map(|c| Real::from_le_bytes(c.try_into().expect("8-byte chunk")))
        .collect())
}

pub fn load_model(path: &Path) -> Result<ModelBundle> {
    let mut bytes = Vec::new();
    std::fs::File::open(path)?.read_to_end(&mut bytes)?;
    if bytes.len() < 8 || &bytes[0..4] != MAGIC {
        return Err(Error::BadMagic);
    }
    let header_len = u32::from_le_bytes(bytes[4..8].try_into().expect("4 bytes")) as usize;
    if bytes.len() < 8 + header_len {
        return Err(Error::TruncatedPayload {
            expected: 8 + header_len,
            found: bytes.len(),
        });
    }
    let header = std::str::from_utf8(&bytes[8..8 + header_len])
        .map_err(|_| Error::ShapeMismatch("model header is not UTF-8".into()))?;
    let payload = &bytes[8 + header_len..];

    let mut fields: BTreeMap<&str, &str> = BTreeMap::new();
    for line in header.lines() {
        if line.is_empty() {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| Error::ShapeMismatch(format!("bad header line {line:?}")))?;
        fields.insert(k, v);
    }

    let dim: usize = parse_num("dim", header_field(&fields, "dim")?)?;
    let n_obj: usize = parse_num("n_obj", header_field(&fields, "n_obj")?)?;
    let n_mor: usize = parse_num("n_mor", header_field(&fields, "n_mor")?)?;
    let seed: u64 = parse_num("seed", header_field(&fields, "seed")?)?;
    let hypersphere = match header_field(&fields, "hypersphere")? {
        "0" => false,
        "1" => true,
        other => {
            return Err(Error::ShapeMismatch(format!(
                "bad hypersphere flag {other:?}"
            )))
        }
    };
    let agg_tag = header_field(&fields, "aggregator")?;
    let rank_tag = header_field(&fields, "morphism_rank")?;
    let vocab_str = header_field(&fields, "vocab")?;
    let vocab: Vec<String> = if vocab_str.is_empty() {
        Vec::new()
    } else {
        vocab_str.split(' ').map(str::to_string).collect()
    };
    if vocab.len() != n_obj {
        return Err(Error::ShapeMismatch(format!(
            "vocabulary lists {} tokens but n_obj is {n_obj}",
            vocab.len()
        )));
    }

    let mut sections: BTreeMap<String, (usize, usize)> = BTreeMap::new();
    let mut cursor = 0usize;
    for part in header_field(&fields, "sections")?.split(',') {
        let bits: Vec<&str> = part.split(':').collect();
        if bits.len() != 3 {
            return Err(Error::ShapeMismatch(format!("bad section entry {part:?}")));
        }
        let off: usize = parse_num("section offset", bits[1])?;
        let len: usize = parse_num("section length", bits[2])?;
        if off != cursor {
            return Err(Error::ShapeMismatch(format!(
                "section {part:?} is not contiguous (expected offset {cursor})"
            )));
        }
        cursor = off + len;
        sections.insert(bits[0].to_string(), (off, len));
    }
    match cursor.cmp(&payload.len()) {
        std::cmp::Ordering::Greater => {
            return Err(Error::TruncatedPayload {
                expected: cursor,
                found: payload.len(),
            })
        }
        std::cmp::Ordering::Less => {
            return Err(Error::ShapeMismatch(format!(
                "payload has {} trailing bytes beyond the declared sections",
                payload.len() - cursor
            )))
        }
        std::cmp::Ordering::Equal => {}
    }

    let (off, len) = *sections
        .get("objects")
        .ok_or_else(|| Error::ShapeMismatch("missing objects section".into()))?;
    let objects = Matrix::from_vec(n_obj, dim, take_section(payload, off, len, n_obj * dim)?)?;

    let (off, len) = *sections
        .get("morphisms")
        .ok_or_else(|| Error::ShapeMismatch("missing morphisms section".into()))?;
    let morphisms: Vec<MorphismParam<Real>> = if rank_tag == "dense" {
        let values = take_section(payload, off, len, n_mor * dim * dim)?;
        values
            .chunks_exact(dim * dim)
            .map(|c| Ok(MorphismParam::Dense(Matrix::from_vec(dim, dim, c.to_vec())?)))
            .collect::<Result<_>>()?
    } else {
        let rank: usize = parse_num("morphism_rank", rank_tag)?;
        let values = take_section(payload, off, len, n_mor * 2 * rank * dim)?;
        values
            .chunks_exact(2 * rank * dim)
            .map(|c| {
                Ok(MorphismParam::LowRank {
                    q: Matrix::from_vec(rank, dim, c[..rank * dim].to_vec())?,
                    k: Matrix::from_vec(rank, dim, c[rank * dim..].to_vec())?,
                })
            })
            .collect::<Result<_>>()?
    };

    let aggregator = if agg_tag == "logsumexp" {
        Aggregator::LogSumExp
    } else if let Some(h) = agg_tag.strip_prefix("mlp:") {
        let hidden: usize = parse_num("mlp width", h)?;
        let (off, len) = *sections
            .get("aggparams")
            .ok_or_else(|| Error::ShapeMismatch("missing aggparams section".into()))?;
        let values = take_section(payload, off, len, hidden * n_mor + 2 * hidden + 1)?;
        let (w1_vals, rest) = values.split_at(hidden * n_mor);
        let (b1, rest) = rest.split_at(hidden);
        let (w2, b2) = rest.split_at(hidden);
        Aggregator::Mlp(MlpAggregator {
            w1: Matrix::from_vec(hidden, n_mor, w1_vals.to_vec())?,
            b1: b1.to_vec(),
            w2: w2.to_vec(),
            b2: b2[0],
        })
    } else {
        return Err(Error::ShapeMismatch(format!(
            "unknown aggregator {agg_tag:?}"
        )));
    };

    let functor = match sections.get("functor") {
        Some(&(off, len)) => Some(Matrix::from_vec(
            dim,
            dim,
            take_section(payload, off, len, dim * dim)?,
        )?),
        None => None,
    };
    let fusion = match sections.get("fusion") {
        Some(&(off, len)) => Some(Matrix::from_vec(
            dim,
            dim * dim,
            take_section(payload, off, len, dim * dim * dim)?,
        )?),
        None => None,
    };
    let functor_matching = match fields.get("functor_matching") {
        Some(s) if !s.is_empty() => s
            .split(',')
            .map(|t| parse_num::<usize>("matching entry", t))
            .collect::<Result<Vec<usize>>>()?,
        _ => Vec::new(),
    };
    let functor_lambda = match fields.get("functor_lambda_bits") {
        Some(s) => Some(f64::from_bits(
            u64::from_str_radix(s, 16)
                .map_err(|_| Error::ShapeMismatch("bad functor_lambda_bits".into()))?,
        )),
        None => None,
    };

    let model = CategoryModel::from_parts(objects, morphisms, aggregator, hypersphere)?;
    Ok(ModelBundle {
        vocab,
        seed,
        model,
        functor,
        functor_matching,
        functor_lambda,
        fusion,
    })
}
