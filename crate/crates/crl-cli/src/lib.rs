//! `crl` command-line interface: corpus statistics, category training,
//! functor alignment, translation reports, fusion, and bootstrap
//! coarse-graining, with deterministic seeded runs and a run manifest next
//! to every output.

pub mod eval;
pub mod model_file;

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};

use crl_core::category::{AggregatorKind, CategoryModel, ModelShape};
use crl_core::corpus::{
    self, gen_synthetic, pair_distribution, ConcurrenceCorpus, CorpusMode, SyntheticSpec,
};
use crl_core::error::Error as CoreError;
use crl_core::functor::{translate, AlignmentSet, FunctorConfig, FunctorModel};
use crl_core::fusion::{
    bootstrap_round, train_fusion, CompositeVocab, FusionConfig, FusionOperator,
};
use crl_core::rng::Rng;
use crl_core::training::{
    finite_diff_check, pmi_fit_report, train_category, InitKind, OptimizerKind, TrainConfig,
};
use crl_core::Real;

use eval::eval_translation;
use model_file::{load_model, save_model, ModelBundle};

/// Formats a float with 17 significant digits, enough to round-trip f64.
pub fn fmt_real(x: f64) -> String {
    format!("{x:.16e}")
}

#[derive(Debug)]
enum CliError {
    Usage(String),
    Runtime(String),
}

impl From<CoreError> for CliError {
    fn from(e: CoreError) -> Self {
        CliError::Runtime(e.to_string())
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Runtime(e.to_string())
    }
}

type CliResult<T> = std::result::Result<T, CliError>;

#[derive(Parser, Debug)]
#[command(
    name = "crl",
    version,
    about = "Categorical representation learning toolkit",
    args_override_self = true
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Generate a synthetic corpus, its relabeled twin, and the gold alignment.
    GenSynth(GenSynthArgs),
    /// Export the pairwise PMI table of a corpus.
    Pmi(PmiArgs),
    /// Export per-token coordinates from PCA of the PMI matrix.
    PmiEmbed(PmiEmbedArgs),
    /// Train object and morphism embeddings on a corpus.
    Train(TrainArgs),
    /// Fit an orthogonal functor between two trained models.
    Align(AlignArgs),
    /// Rank translations through a fitted functor.
    Translate(TranslateArgs),
    /// Train the fusion operator on top of a trained model.
    Fuse(FuseArgs),
    /// Run bootstrap coarse-graining rounds.
    Bootstrap(BootstrapArgs),
    /// Score a predictions file against a gold alignment.
    Eval(EvalArgs),
    /// Verify analytic gradients against finite differences.
    GradCheck(GradCheckArgs),
    /// Print the exact parameter count of a model file.
    CountParams(CountParamsArgs),
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq, Eq)]
enum ModeArg {
    Tokens,
    Formula,
}

impl From<ModeArg> for CorpusMode {
    fn from(m: ModeArg) -> Self {
        match m {
            ModeArg::Tokens => CorpusMode::Tokens,
            ModeArg::Formula => CorpusMode::Formula,
        }
    }
}

#[derive(Args, Debug)]
struct CorpusArgs {
    /// Corpus file, one scope per line.
    #[arg(long)]
    corpus: PathBuf,
    /// Line interpretation.
    #[arg(long, value_enum, default_value = "tokens")]
    mode: ModeArg,
    /// Keep within-scope multiplicities instead of collapsing to 1.
    #[arg(long)]
    weighted: bool,
}

impl CorpusArgs {
    fn load(&self) -> CliResult<ConcurrenceCorpus> {
        Ok(ConcurrenceCorpus::load(
            &self.corpus,
            self.mode.into(),
            self.weighted,
        )?)
    }
}

#[derive(Args, Debug)]
struct GenSynthArgs {
    #[arg(long, default_value_t = 42)]
    seed: u64,
    #[arg(long, default_value_t = 60)]
    objects: usize,
    #[arg(long, default_value_t = 6)]
    roles: usize,
    #[arg(long, default_value_t = 4000)]
    scopes: usize,
    #[arg(long, default_value_t = 3)]
    scope_min: usize,
    #[arg(long, default_value_t = 6)]
    scope_max: usize,
    /// Source corpus output path.
    #[arg(long)]
    out: PathBuf,
    /// Twin corpus output path.
    #[arg(long)]
    twin: Option<PathBuf>,
    /// Gold alignment CSV output path (source_token,target_token).
    #[arg(long)]
    align: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct PmiArgs {
    #[command(flatten)]
    corpus: CorpusArgs,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct PmiEmbedArgs {
    #[command(flatten)]
    corpus: CorpusArgs,
    /// Number of principal components.
    #[arg(long, default_value_t = 3)]
    k: usize,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct TrainArgs {
    #[command(flatten)]
    corpus: CorpusArgs,
    #[arg(long, default_value_t = 16)]
    d: usize,
    #[arg(long, default_value_t = 4)]
    heads: usize,
    #[arg(long, default_value_t = 5)]
    k_neg: usize,
    #[arg(long, default_value_t = 5e-3)]
    lr: f64,
    #[arg(long, default_value_t = 20_000)]
    steps: usize,
    #[arg(long, default_value_t = 128)]
    batch: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// adam or sgd.
    #[arg(long, default_value = "adam")]
    optimizer: String,
    /// logsumexp or mlp:<hidden>.
    #[arg(long, default_value = "logsumexp")]
    aggregator: String,
    /// Disable unit-norm object embeddings.
    #[arg(long)]
    no_hypersphere: bool,
    #[arg(long, default_value_t = 1.0)]
    neg_exponent: f64,
    /// Rank of the optional query/key morphism factorization.
    #[arg(long)]
    rank: Option<usize>,
    /// Object initialization: gaussian or pmi (PCA of the PMI matrix).
    #[arg(long, default_value = "gaussian")]
    init: String,
    #[arg(long)]
    out: PathBuf,
    /// Loss trace CSV (step,loss).
    #[arg(long)]
    trace: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct AlignArgs {
    #[arg(long)]
    src: PathBuf,
    #[arg(long)]
    tgt: PathBuf,
    /// Gold alignment CSV; supervised pairs are drawn from it.
    #[arg(long)]
    gold: Option<PathBuf>,
    /// Number of supervised pairs sampled from the gold alignment.
    #[arg(long, default_value_t = 15)]
    pairs: usize,
    #[arg(long, default_value_t = 1.0)]
    lambda: f64,
    #[arg(long, default_value_t = 2000)]
    steps: usize,
    #[arg(long, default_value_t = 0.05)]
    lr: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Morphism re-matching interval in steps.
    #[arg(long, default_value_t = 50)]
    refresh: usize,
    #[arg(long, default_value_t = 3)]
    restarts: usize,
    /// Output: the source bundle extended with the fitted functor.
    #[arg(long)]
    out: PathBuf,
    /// Write the chosen supervised pairs to this CSV.
    #[arg(long)]
    sup_out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct TranslateArgs {
    /// Model file carrying the source category and the functor.
    #[arg(long)]
    functor: PathBuf,
    /// Target model file.
    #[arg(long)]
    tgt: PathBuf,
    #[arg(long, default_value_t = 3)]
    topk: usize,
    /// Gold alignment CSV; when given, an evaluation report is written.
    #[arg(long)]
    eval: Option<PathBuf>,
    /// Supervised pairs CSV to flag and exclude from accuracy.
    #[arg(long)]
    supervised: Option<PathBuf>,
    /// Translate a single token instead of the whole vocabulary.
    #[arg(long)]
    token: Option<String>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct FuseArgs {
    #[arg(long)]
    model: PathBuf,
    #[command(flatten)]
    corpus: CorpusArgs,
    #[arg(long, default_value_t = 2000)]
    steps: usize,
    #[arg(long, default_value_t = 0.02)]
    lr: f64,
    /// Associativity penalty weight.
    #[arg(long, default_value_t = 1.0)]
    mu: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 16)]
    pairs_per_step: usize,
    #[arg(long, default_value_t = 5)]
    k_neg: usize,
    #[arg(long, default_value_t = 8)]
    triples: usize,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct BootstrapArgs {
    /// Model file with a fusion operator.
    #[arg(long)]
    model: PathBuf,
    #[command(flatten)]
    corpus: CorpusArgs,
    #[arg(long, default_value_t = 0.8)]
    tau: f64,
    #[arg(long, default_value_t = 1)]
    rounds: usize,
    #[arg(long)]
    out_corpus: PathBuf,
    #[arg(long)]
    out_composites: PathBuf,
}

#[derive(Args, Debug)]
struct EvalArgs {
    /// Predictions CSV: source_token,rank1,rank2,...
    #[arg(long)]
    pred: PathBuf,
    #[arg(long)]
    gold: PathBuf,
    #[arg(long)]
    supervised: Option<PathBuf>,
    #[arg(long, default_value_t = 3)]
    k: usize,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct GradCheckArgs {
    #[arg(long, default_value_t = 100)]
    configs: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 1e-5)]
    step: f64,
    #[arg(long, default_value_t = 1e-4)]
    max_err: f64,
}

#[derive(Args, Debug)]
struct CountParamsArgs {
    #[arg(long)]
    model: PathBuf,
}

/// Entry point used by the binary and by tests. Exit codes: 0 success,
/// 1 usage error, 2 runtime error.
pub fn run_command<I>(args: I) -> i32
where
    I: IntoIterator,
    I::Item: Into<String>,
{
    let raw: Vec<String> = args.into_iter().map(Into::into).collect();
    let merged = match merge_config(raw) {
        Ok(v) => v,
        Err(CliError::Usage(msg)) | Err(CliError::Runtime(msg)) => {
            eprintln!("error: {msg}");
            return 1;
        }
    };
    let mut argv = vec!["crl".to_string()];
    argv.extend(merged);
    let cli = match Cli::try_parse_from(&argv) {
        Ok(cli) => cli,
        Err(e) => {
            let benign = matches!(
                e.kind(),
                clap::error::ErrorKind::DisplayHelp | clap::error::ErrorKind::DisplayVersion
            );
            let _ = e.print();
            return i32::from(!benign);
        }
    };
    match dispatch(cli, &argv) {
        Ok(()) => 0,
        Err(CliError::Usage(msg)) => {
            eprintln!("usage error: {msg}");
            1
        }
        Err(CliError::Runtime(msg)) => {
            eprintln!("error: {msg}");
            2
        }
    }
}

/// Splices `key=value` lines from a `--config` file in as flags right after
/// the subcommand; explicit flags win because later occurrences override.
fn merge_config(raw: Vec<String>) -> CliResult<Vec<String>> {
    let mut config_path: Option<PathBuf> = None;
    let mut rest: Vec<String> = Vec::with_capacity(raw.len());
    let mut it = raw.into_iter();
    while let Some(arg) = it.next() {
        if arg == "--config" {
            match it.next() {
                Some(p) => config_path = Some(PathBuf::from(p)),
                None => return Err(CliError::Usage("--config needs a file path".into())),
            }
        } else if let Some(p) = arg.strip_prefix("--config=") {
            config_path = Some(PathBuf::from(p));
        } else {
            rest.push(arg);
        }
    }
    let Some(path) = config_path else {
        return Ok(rest);
    };
    if rest.is_empty() {
        return Err(CliError::Usage("--config requires a subcommand".into()));
    }
    let text = std::fs::read_to_string(&path)
        .map_err(|e| CliError::Usage(format!("cannot read config {}: {e}", path.display())))?;
    let mut injected = vec![rest[0].clone()];
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (key, value) = line.split_once('=').ok_or_else(|| {
            CliError::Usage(format!(
                "config line {} is not key=value: {line:?}",
                lineno + 1
            ))
        })?;
        let key = key.trim();
        let value = value.trim();
        match value {
            "true" => injected.push(format!("--{key}")),
            "false" => {}
            _ => {
                injected.push(format!("--{key}"));
                injected.push(value.to_string());
            }
        }
    }
    injected.extend(rest.into_iter().skip(1));
    Ok(injected)
}

fn dispatch(cli: Cli, argv: &[String]) -> CliResult<()> {
    match cli.command {
        Command::GenSynth(a) => cmd_gen_synth(a, argv),
        Command::Pmi(a) => cmd_pmi(a, argv),
        Command::PmiEmbed(a) => cmd_pmi_embed(a, argv),
        Command::Train(a) => cmd_train(a, argv),
        Command::Align(a) => cmd_align(a, argv),
        Command::Translate(a) => cmd_translate(a, argv),
        Command::Fuse(a) => cmd_fuse(a, argv),
        Command::Bootstrap(a) => cmd_bootstrap(a, argv),
        Command::Eval(a) => cmd_eval(a, argv),
        Command::GradCheck(a) => cmd_grad_check(a),
        Command::CountParams(a) => cmd_count_params(a),
    }
}

/// FNV-1a over the effective argument vector.
fn config_hash(args: &[String]) -> u64 {
    let mut h = 0xcbf2_9ce4_8422_2325u64;
    for arg in args {
        for b in arg.bytes() {
            h ^= u64::from(b);
            h = h.wrapping_mul(0x0000_0100_0000_01B3);
        }
        h ^= 0x1f;
        h = h.wrapping_mul(0x0000_0100_0000_01B3);
    }
    h
}

/// Writes `<out>.manifest` recording the command, effective argument hash,
/// seed, and version. Content is a pure function of the invocation.
fn write_manifest(out: &Path, command: &str, seed: Option<u64>, argv: &[String]) -> CliResult<()> {
    let mut text = String::new();
    let _ = writeln!(text, "command={command}");
    let _ = writeln!(text, "version={}", env!("CARGO_PKG_VERSION"));
    let _ = writeln!(text, "format=CRL1");
    if let Some(seed) = seed {
        let _ = writeln!(text, "seed={seed}");
    }
    let _ = writeln!(text, "config_hash={:016x}", config_hash(&argv[1..]));
    let _ = writeln!(text, "args={}", argv[1..].join(" "));
    let mut path = out.as_os_str().to_owned();
    path.push(".manifest");
    std::fs::write(PathBuf::from(path), text)?;
    Ok(())
}

fn write_file(path: &Path, content: &str) -> CliResult<()> {
    std::fs::write(path, content)?;
    Ok(())
}

fn cmd_gen_synth(a: GenSynthArgs, argv: &[String]) -> CliResult<()> {
    let spec = SyntheticSpec {
        scope_size_range: (a.scope_min, a.scope_max),
        ..SyntheticSpec::standard(a.objects, a.roles, a.scopes, a.seed)
    };
    let out = gen_synthetic(&spec)?;
    write_file(&a.out, &out.source.to_text())?;
    if let Some(twin_path) = &a.twin {
        write_file(twin_path, &out.twin.to_text())?;
    }
    if let Some(align_path) = &a.align {
        let mut csv = String::from("source_token,target_token\n");
        for (src_id, &tgt_id) in out.alignment.iter().enumerate() {
            let _ = writeln!(
                csv,
                "{},{}",
                out.source.vocab()[src_id],
                out.twin.vocab()[tgt_id]
            );
        }
        write_file(align_path, &csv)?;
    }
    write_manifest(&a.out, "gen-synth", Some(a.seed), argv)?;
    println!(
        "gen-synth: {} objects, {} scopes -> {}",
        a.objects,
        a.scopes,
        a.out.display()
    );
    Ok(())
}

fn cmd_pmi(a: PmiArgs, argv: &[String]) -> CliResult<()> {
    let corpus = a.corpus.load()?;
    let stats = pair_distribution(&corpus)?;
    let table = corpus::pmi(&stats);
    let mut csv = String::from("token_a,token_b,pmi\n");
    for ((x, y), v) in table.iter() {
        let _ = writeln!(
            csv,
            "{},{},{}",
            corpus.vocab()[x],
            corpus.vocab()[y],
            fmt_real(v)
        );
    }
    write_file(&a.out, &csv)?;
    write_manifest(&a.out, "pmi", None, argv)?;
    println!("pmi: {} support pairs -> {}", table.len(), a.out.display());
    Ok(())
}

fn cmd_pmi_embed(a: PmiEmbedArgs, argv: &[String]) -> CliResult<()> {
    let corpus = a.corpus.load()?;
    let emb = corpus::pmi_embed(&corpus, a.k)?;
    let mut csv = String::from("token");
    for i in 1..=a.k {
        let _ = write!(csv, ",c{i}");
    }
    csv.push('\n');
    for (row, tok) in corpus.vocab().iter().enumerate() {
        csv.push_str(tok);
        for col in 0..a.k {
            let _ = write!(csv, ",{}", fmt_real(emb.get(row, col)));
        }
        csv.push('\n');
    }
    write_file(&a.out, &csv)?;
    write_manifest(&a.out, "pmi-embed", None, argv)?;
    println!(
        "pmi-embed: {} tokens x {} components -> {}",
        corpus.n_tokens(),
        a.k,
        a.out.display()
    );
    Ok(())
}

fn parse_aggregator(s: &str) -> CliResult<AggregatorKind> {
    if s == "logsumexp" {
        Ok(AggregatorKind::LogSumExp)
    } else if let Some(h) = s.strip_prefix("mlp:") {
        let hidden: usize = h
            .parse()
            .map_err(|_| CliError::Usage(format!("bad mlp width in aggregator {s:?}")))?;
        Ok(AggregatorKind::Mlp { hidden })
    } else {
        Err(CliError::Usage(format!(
            "aggregator must be logsumexp or mlp:<hidden>, got {s:?}"
        )))
    }
}

fn parse_init(s: &str) -> CliResult<InitKind> {
    match s {
        "gaussian" => Ok(InitKind::Gaussian),
        "pmi" => Ok(InitKind::PmiSpectral),
        other => Err(CliError::Usage(format!(
            "init must be gaussian or pmi, got {other:?}"
        ))),
    }
}

fn parse_optimizer(s: &str) -> CliResult<OptimizerKind> {
    match s {
        "adam" => Ok(OptimizerKind::adam_default()),
        "sgd" => Ok(OptimizerKind::Sgd),
        other => Err(CliError::Usage(format!(
            "optimizer must be adam or sgd, got {other:?}"
        ))),
    }
}

fn cmd_train(a: TrainArgs, argv: &[String]) -> CliResult<()> {
    let corpus = a.corpus.load()?;
    let cfg = TrainConfig {
        d: a.d,
        n_mor: a.heads,
        k_neg: a.k_neg,
        lr: a.lr,
        steps: a.steps,
        batch: a.batch,
        seed: a.seed,
        optimizer: parse_optimizer(&a.optimizer)?,
        hypersphere: !a.no_hypersphere,
        neg_exponent: a.neg_exponent,
        aggregator: parse_aggregator(&a.aggregator)?,
        morphism_rank: a.rank,
        init: parse_init(&a.init)?,
    };
    let outcome = train_category::<Real>(&corpus, &cfg)?;
    let stats = pair_distribution(&corpus)?;
    let table = corpus::pmi(&stats);
    let report = pmi_fit_report(&outcome.model, &stats, &table, cfg.k_neg)?;

    let bundle = ModelBundle::new(corpus.vocab().to_vec(), a.seed, outcome.model);
    save_model(&bundle, &a.out)?;
    if let Some(trace_path) = &a.trace {
        let mut csv = String::from("step,loss\n");
        for (step, loss) in outcome.loss_trace.iter().enumerate() {
            let _ = writeln!(csv, "{step},{}", fmt_real(*loss));
        }
        write_file(trace_path, &csv)?;
    }
    write_manifest(&a.out, "train", Some(a.seed), argv)?;
    println!(
        "train: {} steps, final loss {:.6}, pmi pearson {:.4} (mae {:.4}, shifted {:.4}) -> {}",
        outcome.loss_trace.len(),
        outcome.loss_trace.last().copied().unwrap_or(f64::NAN),
        report.pearson,
        report.mean_abs_err,
        report.mean_abs_err_shifted,
        a.out.display()
    );
    Ok(())
}

fn read_gold(path: &Path) -> CliResult<Vec<(String, String)>> {
    let text = std::fs::read_to_string(path)?;
    let mut pairs = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line == "source_token,target_token" {
            continue;
        }
        let (s, t) = line.split_once(',').ok_or_else(|| {
            CliError::Runtime(format!(
                "gold line {} is not source,target: {line:?}",
                lineno + 1
            ))
        })?;
        pairs.push((s.trim().to_string(), t.trim().to_string()));
    }
    Ok(pairs)
}

fn token_id(vocab: &[String], tok: &str, what: &str) -> CliResult<usize> {
    vocab
        .iter()
        .position(|v| v == tok)
        .ok_or_else(|| CliError::Runtime(format!("{what} token {tok:?} is not in the vocabulary")))
}

fn cmd_align(a: AlignArgs, argv: &[String]) -> CliResult<()> {
    let src = load_model(&a.src)?;
    let tgt = load_model(&a.tgt)?;
    let mut supervised_pairs: Vec<(String, String)> = Vec::new();
    let aligned = match (&a.gold, a.pairs) {
        (Some(gold_path), n) if n > 0 => {
            let gold = read_gold(gold_path)?;
            if gold.len() < n {
                return Err(CliError::Runtime(format!(
                    "gold alignment has {} pairs, need {n}",
                    gold.len()
                )));
            }
            let perm = Rng::new(a.seed).permutation(gold.len());
            let mut ids = Vec::with_capacity(n);
            for &i in perm.iter().take(n) {
                let (s, t) = &gold[i];
                ids.push((
                    token_id(&src.vocab, s, "source")?,
                    token_id(&tgt.vocab, t, "target")?,
                ));
                supervised_pairs.push((s.clone(), t.clone()));
            }
            AlignmentSet::new(ids)?
        }
        _ => AlignmentSet::default(),
    };
    let cfg = FunctorConfig {
        lr: a.lr,
        steps: a.steps,
        seed: a.seed,
        lambda: a.lambda,
        refresh_every: a.refresh,
        restarts: a.restarts,
    };
    let outcome = crl_core::functor::train_functor(&src.model, &tgt.model, &aligned, &cfg)?;
    println!(
        "align: final loss {:.6e}, max orthogonality residual {:.3e}, matching {:?}",
        outcome.loss_trace.last().copied().unwrap_or(f64::NAN),
        outcome.max_orthogonality_residual,
        outcome.functor.matching
    );
    let mut bundle = src;
    bundle.functor = Some(outcome.functor.v);
    bundle.functor_matching = outcome.functor.matching;
    bundle.functor_lambda = Some(outcome.functor.lambda);
    save_model(&bundle, &a.out)?;
    if let Some(sup_path) = &a.sup_out {
        let mut csv = String::from("source_token,target_token\n");
        for (s, t) in &supervised_pairs {
            let _ = writeln!(csv, "{s},{t}");
        }
        write_file(sup_path, &csv)?;
    }
    write_manifest(&a.out, "align", Some(a.seed), argv)?;
    Ok(())
}

fn cmd_translate(a: TranslateArgs, argv: &[String]) -> CliResult<()> {
    let src = load_model(&a.functor)?;
    let tgt = load_model(&a.tgt)?;
    let v = src.functor.clone().ok_or_else(|| {
        CliError::Runtime("the --functor model file carries no functor section".into())
    })?;
    let fm = FunctorModel {
        v,
        matching: src.functor_matching.clone(),
        lambda: src.functor_lambda.unwrap_or(1.0),
    };

    let source_tokens: Vec<String> = match (&a.token, &a.eval) {
        (Some(tok), _) => vec![tok.clone()],
        (None, Some(gold_path)) => read_gold(gold_path)?.into_iter().map(|(s, _)| s).collect(),
        (None, None) => src.vocab.clone(),
    };
    let mut predictions: Vec<(String, Vec<String>)> = Vec::with_capacity(source_tokens.len());
    for tok in &source_tokens {
        let id = token_id(&src.vocab, tok, "source")?;
        let ranked = translate(&fm, &src.model, &tgt.model, id, a.topk)?;
        predictions.push((
            tok.clone(),
            ranked.iter().map(|&(b, _)| tgt.vocab[b].clone()).collect(),
        ));
    }

    match &a.eval {
        Some(gold_path) => {
            let truth: BTreeMap<String, String> = read_gold(gold_path)?.into_iter().collect();
            let supervised: BTreeSet<String> = match &a.supervised {
                Some(p) => read_gold(p)?.into_iter().map(|(s, _)| s).collect(),
                None => BTreeSet::new(),
            };
            let report = eval_translation(&predictions, &truth, &supervised, a.topk)?;
            write_file(&a.out, &report.to_csv())?;
            println!(
                "translate: evaluated {} tokens, top1 {:.4}, top{} {:.4} (green {}, yellow {}, red {})",
                report.evaluated,
                report.top1,
                report.k,
                report.top3,
                report.green,
                report.yellow,
                report.red
            );
        }
        None => {
            let mut csv = String::from("source_token");
            for i in 1..=a.topk {
                let _ = write!(csv, ",rank{i}");
            }
            csv.push('\n');
            for (tok, preds) in &predictions {
                csv.push_str(tok);
                for i in 0..a.topk {
                    csv.push(',');
                    if let Some(p) = preds.get(i) {
                        csv.push_str(p);
                    }
                }
                csv.push('\n');
            }
            write_file(&a.out, &csv)?;
            println!(
                "translate: wrote top-{} predictions for {} tokens -> {}",
                a.topk,
                predictions.len(),
                a.out.display()
            );
        }
    }
    write_manifest(&a.out, "translate", None, argv)?;
    Ok(())
}

/// Reindexes corpus scopes onto the model vocabulary by token name.
fn remap_corpus(corpus: &ConcurrenceCorpus, vocab: &[String]) -> CliResult<ConcurrenceCorpus> {
    let map: Vec<usize> = corpus
        .vocab()
        .iter()
        .map(|tok| token_id(vocab, tok, "corpus"))
        .collect::<CliResult<_>>()?;
    let scopes = corpus
        .scopes()
        .iter()
        .map(|scope| {
            let mut s: Vec<(usize, u32)> = scope.iter().map(|&(id, c)| (map[id], c)).collect();
            s.sort_unstable_by_key(|&(id, _)| id);
            s
        })
        .collect();
    Ok(ConcurrenceCorpus::from_scopes(vocab.to_vec(), scopes)?)
}

fn cmd_fuse(a: FuseArgs, argv: &[String]) -> CliResult<()> {
    let mut bundle = load_model(&a.model)?;
    let corpus = remap_corpus(&a.corpus.load()?, &bundle.vocab)?;
    let cfg = FusionConfig {
        steps: a.steps,
        lr: a.lr,
        mu: a.mu,
        seed: a.seed,
        pairs_per_step: a.pairs_per_step,
        k_neg: a.k_neg,
        triples_per_step: a.triples,
    };
    let outcome = train_fusion(&bundle.model, &corpus, &cfg)?;
    println!(
        "fuse: {} steps, final loss {:.6}",
        outcome.loss_trace.len(),
        outcome.loss_trace.last().copied().unwrap_or(f64::NAN),
    );
    bundle.fusion = Some(outcome.op.theta().clone());
    save_model(&bundle, &a.out)?;
    write_manifest(&a.out, "fuse", Some(a.seed), argv)?;
    Ok(())
}

fn cmd_bootstrap(a: BootstrapArgs, argv: &[String]) -> CliResult<()> {
    let bundle = load_model(&a.model)?;
    let theta = bundle.fusion.clone().ok_or_else(|| {
        CliError::Runtime("the model file carries no fusion operator; run `crl fuse` first".into())
    })?;
    let op = FusionOperator::from_matrix(theta)?;
    let mut corpus = remap_corpus(&a.corpus.load()?, &bundle.vocab)?;
    let mut composites = CompositeVocab::new(bundle.model.n_obj());
    for round in 1..=a.rounds.max(1) {
        let out = bootstrap_round(&bundle.model, &op, &corpus, &composites, a.tau)?;
        let new = out.composites.len() - composites.len();
        println!("bootstrap round {round}: {new} new composites");
        composites = out.composites;
        corpus = out.corpus;
        if new == 0 {
            break;
        }
    }
    write_file(&a.out_corpus, &corpus.to_text())?;
    write_file(&a.out_composites, &composites.export_text(&bundle.vocab))?;
    write_manifest(&a.out_corpus, "bootstrap", None, argv)?;
    println!(
        "bootstrap: {} composites total -> {}",
        composites.len(),
        a.out_composites.display()
    );
    Ok(())
}

fn cmd_eval(a: EvalArgs, argv: &[String]) -> CliResult<()> {
    let text = std::fs::read_to_string(&a.pred)?;
    let mut predictions: Vec<(String, Vec<String>)> = Vec::new();
    for line in text.lines() {
        let line = line.trim();
        if line.is_empty() || line.starts_with("source_token") || line.starts_with("summary,") {
            continue;
        }
        let mut parts = line.split(',');
        let tok = parts.next().unwrap_or_default().to_string();
        let preds: Vec<String> = parts
            .take(a.k)
            .map(str::to_string)
            .filter(|p| !p.is_empty())
            .collect();
        predictions.push((tok, preds));
    }
    let truth: BTreeMap<String, String> = read_gold(&a.gold)?.into_iter().collect();
    let supervised: BTreeSet<String> = match &a.supervised {
        Some(p) => read_gold(p)?.into_iter().map(|(s, _)| s).collect(),
        None => BTreeSet::new(),
    };
    let report = eval_translation(&predictions, &truth, &supervised, a.k)?;
    write_file(&a.out, &report.to_csv())?;
    write_manifest(&a.out, "eval", None, argv)?;
    println!(
        "eval: top1 {:.4}, top{} {:.4} over {} tokens",
        report.top1, report.k, report.top3, report.evaluated
    );
    Ok(())
}

/// Seeded sweep of random configurations comparing analytic gradients to
/// central finite differences; returns the worst relative error. Covers both
/// aggregators, hypersphere on/off, and the low-rank morphism option.
pub fn grad_check_sweep(configs: usize, seed: u64, h: f64) -> crl_core::Result<f64> {
    let mut rng = Rng::new(seed);
    let mut worst = 0.0f64;
    for i in 0..configs {
        let d = rng.next_in_range(2, 8);
        let n_mor = rng.next_in_range(1, 4);
        let n_obj = rng.next_in_range(4, 12);
        let batch = rng.next_in_range(1, 16);
        let k_neg = rng.next_in_range(1, 4);
        let aggregator = if i % 2 == 0 {
            AggregatorKind::LogSumExp
        } else {
            AggregatorKind::Mlp {
                hidden: rng.next_in_range(2, 4),
            }
        };
        let hypersphere = (i / 2) % 2 == 0;
        let morphism_rank = if i % 5 == 4 {
            Some(rng.next_in_range(1, d))
        } else {
            None
        };
        let shape = ModelShape {
            dim: d,
            n_mor,
            aggregator,
            hypersphere,
            morphism_rank,
        };
        let model: CategoryModel<Real> = CategoryModel::init(n_obj, &shape, &mut rng)?;
        let batch = crl_core::training::Batch {
            positives: (0..batch)
                .map(|_| (rng.next_index(n_obj), rng.next_index(n_obj)))
                .collect(),
            negatives: (0..batch)
                .map(|_| (0..k_neg).map(|_| rng.next_index(n_obj)).collect())
                .collect(),
        };
        let report = finite_diff_check(&model, &batch, h)?;
        worst = worst.max(report.max_rel_err);
    }
    Ok(worst)
}

fn cmd_grad_check(a: GradCheckArgs) -> CliResult<()> {
    let worst = grad_check_sweep(a.configs, a.seed, a.step)?;
    println!(
        "grad-check: max relative error {worst:.3e} over {} configurations (threshold {:.1e})",
        a.configs, a.max_err
    );
    if worst < a.max_err {
        Ok(())
    } else {
        Err(CliError::Runtime(format!(
            "gradient check failed: {worst:.3e} >= {:.1e}",
            a.max_err
        )))
    }
}

fn cmd_count_params(a: CountParamsArgs) -> CliResult<()> {
    let bundle = load_model(&a.model)?;
    let m = &bundle.model;
    println!(
        "objects: {} x {} = {}",
        m.n_obj(),
        m.dim(),
        m.n_obj() * m.dim()
    );
    let morph: usize = m
        .morphisms()
        .iter()
        .map(crl_core::category::MorphismParam::param_count)
        .sum();
    println!("morphisms: {} heads = {morph}", m.n_mor());
    let agg = m.aggregator().param_count();
    if agg > 0 {
        println!("aggregator: {agg}");
    }
    if bundle.functor.is_some() {
        println!("functor: {}", m.dim() * m.dim());
    }
    if bundle.fusion.is_some() {
        println!("fusion: {}", m.dim() * m.dim() * m.dim());
    }
    println!("total: {}", bundle.count_params());
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn config_hash_is_stable() {
        let a = vec!["train".to_string(), "--seed".into(), "42".into()];
        assert_eq!(config_hash(&a), config_hash(&a.clone()));
        let b = vec!["train".to_string(), "--seed".into(), "43".into()];
        assert_ne!(config_hash(&a), config_hash(&b));
        // Separator prevents concatenation collisions.
        let c = vec!["ab".to_string(), "c".into()];
        let d = vec!["a".to_string(), "bc".into()];
        assert_ne!(config_hash(&c), config_hash(&d));
    }

    #[test]
    fn merge_config_injects_before_user_flags() {
        let dir = std::env::temp_dir().join("crl_cli_tests");
        std::fs::create_dir_all(&dir).unwrap();
        let cfg = dir.join("train.cfg");
        std::fs::write(&cfg, "seed=1\nweighted=true\n# comment\n\nd=8\n").unwrap();
        let merged = merge_config(vec![
            "train".into(),
            "--config".into(),
            cfg.display().to_string(),
            "--seed".into(),
            "2".into(),
        ])
        .unwrap();
        assert_eq!(
            merged,
            vec![
                "train".to_string(),
                "--seed".into(),
                "1".into(),
                "--weighted".into(),
                "--d".into(),
                "8".into(),
                "--seed".into(),
                "2".into(),
            ]
        );
    }

    #[test]
    fn unknown_subcommand_is_usage_error() {
        assert_eq!(run_command(["frobnicate"]), 1);
    }

    #[test]
    fn fmt_real_has_17_significant_digits() {
        let s = fmt_real(std::f64::consts::LN_2);
        assert_eq!(s, "6.9314718055994529e-1");
        let back: f64 = s.parse().unwrap();
        assert_eq!(back, std::f64::consts::LN_2);
    }
}
