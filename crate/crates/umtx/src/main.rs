use std::collections::BTreeMap;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use umtx::config::{PipelineConfig, SymmetrizationMode, TuneSetting};
use umtx::formats;
use umtx::parallel::ParallelDecoder;
use umtx::pipeline::{self, RunOptions, Runner};
use umtx::{Error, Result};
use umtx_core::aligner::{AlignParams, BidirectionalAligner};
use umtx_core::backtrans::{translate_corpus, tune, Direction, Provenance, System};
use umtx_core::cipher::{generate, CipherConfig};
use umtx_core::decoder::{DecoderParams, FeatureWeights};
use umtx_core::lm::{count_ngrams, estimate_kn};
use umtx_core::mteval::corpus_bleu;
use umtx_core::phrasevec::{build_phrase_vocab, train_sgns, EmbeddingMatrix};
use umtx_core::ptable::{induce_unsupervised, TableProvenance};
use umtx_core::synthfix::{
    ne_posttreat, ne_pretreat, reorder_augment, strip_untranslated, DiacriticProfile, NePolicy, PretreatConfig, UNK,
};
use umtx_core::textproc::{
    apply_truecase, filter_by_length, filter_language, tokenize, train_langid, train_truecaser, LengthFilter, Sentence,
    Verdict,
};
use umtx_core::xmap::{
    frequency_seed, identical_seed, normalize_embeddings, numeral_seed, self_learning_map, structural_seed, MapConfig,
    Retrieval,
};

#[derive(Parser)]
#[command(name = "umtx", version, about = "Unsupervised phrase-based MT toolkit")]
struct Cli {
    /// Global seed.
    #[arg(long, global = true, default_value_t = 1)]
    seed: u64,
    /// Decoder worker threads; 0 uses every core.
    #[arg(long, global = true, default_value_t = 1)]
    workers: usize,
    /// Reuse pipeline stages already recorded in the workspace manifest.
    #[arg(long, global = true)]
    resume: bool,
    /// Workspace root for pipeline commands.
    #[arg(long, global = true, env = "UMTX_WORKSPACE")]
    workspace: Option<PathBuf>,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Tokenize, truecase and filter a corpus.
    Preprocess(PreprocessArgs),
    /// Train phrase embeddings.
    Embed(EmbedArgs),
    /// Map two embedding spaces into a shared one.
    Map(MapArgs),
    /// Induce a phrase table from mapped embeddings.
    Table(TableArgs),
    /// Estimate a Kneser-Ney language model.
    Lm(LmArgs),
    /// Word-align a bitext.
    Align(AlignArgs),
    /// Translate stdin to stdout.
    Decode(DecodeArgs),
    /// MERT on a dev set.
    Tune(TuneArgs),
    /// Run the pipeline through back-translation and system selection.
    Backtranslate(BacktranslateArgs),
    /// Repair a synthetic bitext read from stdin.
    Fix(FixArgs),
    /// Corpus BLEU of a hypothesis file against a reference file.
    Bleu(BleuArgs),
    /// Run the whole pipeline.
    Pipeline(PipelineArgs),
    /// Write a generated cipher language pair.
    GenCipher(GenCipherArgs),
}

#[derive(Args)]
struct PreprocessArgs {
    input: PathBuf,
    output: PathBuf,
    #[arg(long, default_value_t = 3)]
    min_len: usize,
    #[arg(long, default_value_t = 80)]
    max_len: usize,
    /// Apply this truecase model.
    #[arg(long)]
    truecase: Option<PathBuf>,
    /// Train a truecase model on the input, save it here and apply it.
    #[arg(long, conflicts_with = "truecase")]
    train_truecase: Option<PathBuf>,
    /// Keep only sentences identified as this label.
    #[arg(long, requires = "langid")]
    keep_lang: Option<String>,
    /// Language-id model (TSV).
    #[arg(long)]
    langid: Option<PathBuf>,
    /// Train the language-id model from LABEL=CORPUS pairs and save it to
    /// `--langid` first.
    #[arg(long = "langid-train", value_name = "LABEL=CORPUS", requires = "langid")]
    langid_train: Vec<String>,
    #[arg(long, default_value_t = 3)]
    langid_order: usize,
}

#[derive(Args)]
struct EmbedArgs {
    corpus: PathBuf,
    /// Vectors in word2vec text format.
    #[arg(long)]
    out: PathBuf,
    /// Phrase vocabulary TSV.
    #[arg(long)]
    vocab_out: PathBuf,
    #[arg(long, default_value_t = 5)]
    window: usize,
    #[arg(long, default_value_t = 300)]
    dim: usize,
    #[arg(long, default_value_t = 10)]
    neg: usize,
    #[arg(long, default_value_t = 5)]
    epochs: usize,
    #[arg(long, num_args = 3, value_names = ["UNI", "BI", "TRI"], default_values_t = [200_000, 400_000, 400_000])]
    caps: Vec<usize>,
}

#[derive(Clone, Copy, ValueEnum)]
enum SeedArg {
    Identical,
    Numeral,
    Frequency,
    Structural,
}

#[derive(Args)]
struct MapArgs {
    src: PathBuf,
    tgt: PathBuf,
    #[arg(long)]
    out_src: PathBuf,
    #[arg(long)]
    out_tgt: PathBuf,
    /// Induced dictionary TSV.
    #[arg(long)]
    dict_out: Option<PathBuf>,
    #[arg(long = "seed-dict", value_enum, default_value = "identical")]
    seed_dict: SeedArg,
    /// Pairs for the frequency and structural seeds.
    #[arg(long, default_value_t = 100)]
    seed_size: usize,
    #[arg(long, default_value_t = 10)]
    csls_k: usize,
    #[arg(long, default_value_t = 50)]
    max_iters: usize,
    /// Only the first N rows take part in dictionary induction.
    #[arg(long)]
    cutoff: Option<usize>,
}

#[derive(Args)]
struct TableArgs {
    src: PathBuf,
    tgt: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(short, default_value_t = 100)]
    k: usize,
    #[arg(long, default_value_t = 0.1)]
    temperature: f64,
    #[arg(long, value_enum, default_value = "csls")]
    retrieval: RetrievalArg,
    #[arg(long, default_value_t = 10)]
    csls_k: usize,
}

#[derive(Clone, Copy, ValueEnum)]
enum RetrievalArg {
    Nn,
    Csls,
}

#[derive(Args)]
struct LmArgs {
    corpus: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 5)]
    order: usize,
}

#[derive(Clone, Copy, ValueEnum)]
enum HeuristicArg {
    Intersection,
    Union,
    Gdfa,
}

impl From<HeuristicArg> for SymmetrizationMode {
    fn from(h: HeuristicArg) -> Self {
        match h {
            HeuristicArg::Intersection => SymmetrizationMode::Intersection,
            HeuristicArg::Union => SymmetrizationMode::Union,
            HeuristicArg::Gdfa => SymmetrizationMode::GrowDiagFinalAnd,
        }
    }
}

#[derive(Args)]
struct AlignArgs {
    src: PathBuf,
    tgt: PathBuf,
    /// Pharaoh-format output.
    #[arg(long)]
    out: PathBuf,
    #[arg(long, value_enum, default_value = "gdfa")]
    heuristic: HeuristicArg,
    #[arg(long, default_value_t = 5)]
    iterations: usize,
}

#[derive(Args)]
struct SystemArgs {
    /// Phrase table (Moses format).
    table: PathBuf,
    /// Target language model (ARPA).
    lm: PathBuf,
    /// key=value feature weights; defaults when absent.
    #[arg(long)]
    weights: Option<PathBuf>,
    #[arg(long, default_value_t = 100)]
    beam: usize,
    /// Distortion limit; 0 is monotone.
    #[arg(long, default_value_t = 6)]
    dl: usize,
    #[arg(long, default_value_t = 20)]
    max_options: usize,
}

impl SystemArgs {
    fn load(&self) -> Result<(System, umtx_core::lm::ArpaLM)> {
        let table = formats::read_moses(formats::open(&self.table)?, &self.table.display().to_string(), TableProvenance::Extracted)?;
        let lm = formats::read_arpa(formats::open(&self.lm)?, &self.lm.display().to_string())?;
        let weights = match &self.weights {
            Some(p) => formats::read_weights(formats::open(p)?, &p.display().to_string())?,
            None => FeatureWeights::default(),
        };
        let params = DecoderParams {
            beam_size: self.beam,
            distortion_limit: Some(self.dl),
            max_options: self.max_options,
            ..DecoderParams::default()
        };
        let sys = System {
            direction: Direction::AtoB,
            table,
            weights,
            params,
            provenance: Provenance::Initial,
        };
        Ok((sys, lm))
    }
}

#[derive(Args)]
struct DecodeArgs {
    #[command(flatten)]
    system: SystemArgs,
    /// Write an n-best list of this size to `--nbest-out`.
    #[arg(long, requires = "nbest_out")]
    nbest: Option<usize>,
    #[arg(long)]
    nbest_out: Option<PathBuf>,
}

#[derive(Args)]
struct TuneArgs {
    #[command(flatten)]
    system: SystemArgs,
    dev_src: PathBuf,
    dev_ref: PathBuf,
    #[arg(long)]
    weights_out: PathBuf,
    #[arg(long, default_value_t = 100)]
    nbest: usize,
    #[arg(long, default_value_t = 10)]
    rounds: usize,
}

#[derive(Clone, Copy, ValueEnum)]
enum TuneArg {
    Off,
    Authentic,
    Synthetic,
}

#[derive(Args)]
struct BacktranslateArgs {
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    iters: Option<usize>,
    #[arg(long)]
    subset: Option<usize>,
    #[arg(long, value_enum)]
    tune: Option<TuneArg>,
}

#[derive(Args)]
struct FixArgs {
    /// Mask target tokens carrying source-language diacritics.
    #[arg(long)]
    strip_untranslated: bool,
    /// Diacritic profile; `czech` or a literal character set.
    #[arg(long, default_value = "czech")]
    profile: String,
    /// Double the corpus with window-shuffled target copies.
    #[arg(long)]
    reorder: bool,
    #[arg(long, default_value_t = 5)]
    window: usize,
    /// NE pre-treatment with spans over the source side (TSV).
    #[arg(long, requires = "alignments")]
    ne_spans: Option<PathBuf>,
    /// NE post-treatment with spans over the target (hypothesis) side.
    #[arg(long, requires = "alignments", conflicts_with = "ne_spans")]
    post_spans: Option<PathBuf>,
    /// Pharaoh alignments, one line per bitext line.
    #[arg(long)]
    alignments: Option<PathBuf>,
    /// NE policy table; the built-in one when absent.
    #[arg(long)]
    policy: Option<PathBuf>,
    #[arg(long, default_value_t = 3)]
    lev_threshold: usize,
}

#[derive(Args)]
struct BleuArgs {
    hyp: PathBuf,
    reference: PathBuf,
    #[arg(long, conflicts_with = "uncased")]
    cased: bool,
    #[arg(long)]
    uncased: bool,
}

#[derive(Args)]
struct PipelineArgs {
    /// TOML configuration; the desk cipher preset when absent.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Print the resolved configuration and exit.
    #[arg(long)]
    print_config: bool,
}

#[derive(Args)]
struct GenCipherArgs {
    #[arg(long)]
    out_dir: PathBuf,
    #[arg(long, default_value_t = 200)]
    vocab: usize,
    #[arg(long, default_value_t = 20_000)]
    sentences: usize,
    #[arg(long, default_value_t = 500)]
    dev: usize,
    #[arg(long, default_value_t = 0)]
    names: usize,
    #[arg(long, default_value_t = 0.0)]
    reorder_prob: f64,
}

fn name(p: &Path) -> String {
    p.display().to_string()
}

fn read_lines(path: &Path) -> Result<Vec<Sentence>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Ok(text.lines().enumerate().map(|(i, l)| tokenize(l, i)).collect())
}

fn save<F: FnOnce(&mut std::io::BufWriter<std::fs::File>) -> Result<()>>(path: &Path, f: F) -> Result<()> {
    let mut w = formats::create(path)?;
    f(&mut w)?;
    w.flush().map_err(|e| Error::io(path, e))
}

fn load_vectors(p: &Path) -> Result<EmbeddingMatrix> {
    formats::read_word2vec(formats::open(p)?, &name(p))
}

fn stdout_err(e: std::io::Error) -> Error {
    Error::io("<stdout>", e)
}

fn run(cli: Cli) -> Result<()> {
    match cli.cmd {
        Cmd::Preprocess(a) => {
            let mut corpus = read_lines(&a.input)?;
            if let Some(p) = &a.train_truecase {
                let m = train_truecaser(&corpus)?;
                save(p, |w| formats::write_truecase(w, &m))?;
                corpus = corpus.iter().map(|s| apply_truecase(s, &m)).collect();
            } else if let Some(p) = &a.truecase {
                let m = formats::read_truecase(formats::open(p)?, &name(p))?;
                corpus = corpus.iter().map(|s| apply_truecase(s, &m)).collect();
            }
            let filter = LengthFilter {
                min_tokens: a.min_len,
                max_tokens: a.max_len,
            };
            corpus.retain(|s| filter_by_length(s, filter) == Verdict::Keep);
            if let Some(model_path) = &a.langid {
                if !a.langid_train.is_empty() {
                    let mut labeled = BTreeMap::new();
                    for spec in &a.langid_train {
                        let (label, path) = spec
                            .split_once('=')
                            .ok_or_else(|| Error::Config(format!("expected LABEL=CORPUS, got {spec:?}")))?;
                        labeled.insert(label.to_string(), read_lines(Path::new(path))?);
                    }
                    let refs: BTreeMap<String, &Vec<Sentence>> = labeled.iter().map(|(k, v)| (k.clone(), v)).collect();
                    let m = train_langid(&refs, a.langid_order)?;
                    save(model_path, |w| formats::write_langid(w, &m))?;
                }
                if let Some(label) = &a.keep_lang {
                    let m = formats::read_langid(formats::open(model_path)?, &name(model_path))?;
                    corpus = filter_language(&corpus, &m, label).into_iter().cloned().collect();
                }
            }
            formats::write_corpus_file(&a.output, &corpus)
        }
        Cmd::Embed(a) => {
            let corpus = formats::read_corpus_file(&a.corpus)?;
            let caps = [a.caps[0], a.caps[1], a.caps[2]];
            let vocab = build_phrase_vocab(&corpus, caps)?;
            let cfg = umtx_core::phrasevec::SgnsConfig {
                window: a.window,
                dim: a.dim,
                negatives: a.neg,
                epochs: a.epochs,
                seed: cli.seed,
                ..umtx_core::phrasevec::SgnsConfig::paper(cli.seed)
            };
            let (m, report) = train_sgns(&corpus, &vocab, &cfg)?;
            if !report.untrained.is_empty() {
                log::warn!("{} phrases never occurred and keep random vectors", report.untrained.len());
            }
            save(&a.vocab_out, |w| formats::write_phrase_vocab(w, &vocab))?;
            save(&a.out, |w| formats::write_word2vec(w, &m))
        }
        Cmd::Map(a) => {
            let x = normalize_embeddings(&load_vectors(&a.src)?)?;
            let z = normalize_embeddings(&load_vectors(&a.tgt)?)?;
            let n = a.seed_size.min(x.rows()).min(z.rows());
            let seed = match a.seed_dict {
                SeedArg::Identical => identical_seed(&x.labels, &z.labels),
                SeedArg::Numeral => numeral_seed(&x.labels, &z.labels),
                SeedArg::Frequency => frequency_seed(x.rows(), z.rows(), n),
                SeedArg::Structural => structural_seed(&x, &z, n, a.csls_k)?,
            };
            if seed.is_empty() {
                return Err(Error::Config("seed dictionary is empty; try --seed-dict frequency".into()));
            }
            let cfg = MapConfig {
                max_iters: a.max_iters,
                final_retrieval: Retrieval::Csls { k: a.csls_k },
                cutoff: a.cutoff,
                ..MapConfig::default()
            };
            let sol = self_learning_map(&x, &z, &seed, &cfg)?;
            let xm = EmbeddingMatrix::new(x.labels.clone(), x.vectors.matmul(&sol.wx));
            let zm = EmbeddingMatrix::new(z.labels.clone(), z.vectors.matmul(&sol.wz));
            save(&a.out_src, |w| formats::write_word2vec(w, &xm))?;
            save(&a.out_tgt, |w| formats::write_word2vec(w, &zm))?;
            if let Some(p) = &a.dict_out {
                let pairs: Vec<(String, String)> = sol
                    .final_dictionary
                    .iter()
                    .map(|&(i, j)| (x.labels[i].clone(), z.labels[j].clone()))
                    .collect();
                save(p, |w| formats::write_dictionary(w, &pairs))?;
            }
            Ok(())
        }
        Cmd::Table(a) => {
            let retrieval = match a.retrieval {
                RetrievalArg::Nn => Retrieval::Nn,
                RetrievalArg::Csls => Retrieval::Csls { k: a.csls_k },
            };
            let t = induce_unsupervised(&load_vectors(&a.src)?, &load_vectors(&a.tgt)?, a.k, a.temperature, retrieval)?;
            save(&a.out, |w| formats::write_moses(w, &t))
        }
        Cmd::Lm(a) => {
            let corpus = formats::read_corpus_file(&a.corpus)?;
            let (lm, _) = estimate_kn(&count_ngrams(&corpus, a.order)?)?;
            save(&a.out, |w| formats::write_arpa(w, &lm))
        }
        Cmd::Align(a) => {
            let src = formats::read_corpus_file(&a.src)?;
            let tgt = formats::read_corpus_file(&a.tgt)?;
            if src.len() != tgt.len() {
                return Err(Error::Format("source and target differ in line count".into()));
            }
            let bitext: Vec<(Sentence, Sentence)> = src.into_iter().zip(tgt).collect();
            let params = AlignParams {
                iterations: a.iterations,
                ..AlignParams::default()
            };
            let aligner = BidirectionalAligner::train(&bitext, params)?;
            let h = SymmetrizationMode::from(a.heuristic).into();
            let links: Vec<_> = bitext.iter().map(|(s, t)| aligner.align(s, t, h)).collect();
            save(&a.out, |w| formats::write_pharaoh(w, &links))
        }
        Cmd::Decode(a) => {
            let (sys, lm) = a.system.load()?;
            let input = formats::read_corpus(std::io::stdin().lock(), "<stdin>")?;
            let dec = ParallelDecoder::new(cli.workers).map_err(|e| Error::Config(e.to_string()))?;
            let (out, failures) = translate_corpus(&dec, &sys, &lm, &input);
            if failures > 0 {
                log::warn!("{failures} sentences failed to decode and were copied");
            }
            formats::write_corpus(&mut std::io::stdout().lock(), &out)?;
            if let (Some(n), Some(path)) = (a.nbest, &a.nbest_out) {
                let params = DecoderParams { nbest: n, ..sys.params };
                use umtx_core::backtrans::BatchDecoder;
                let lists: Vec<_> = dec
                    .decode_batch(&input, &sys.table, &lm, &sys.weights, &params)
                    .into_iter()
                    .map(|r| r.unwrap_or_default())
                    .collect();
                save(path, |w| formats::write_nbest(w, &lists))?;
            }
            Ok(())
        }
        Cmd::Tune(a) => {
            let (sys, lm) = a.system.load()?;
            let src = formats::read_corpus_file(&a.dev_src)?;
            let refs = formats::read_corpus_file(&a.dev_ref)?;
            let dec = ParallelDecoder::new(cli.workers).map_err(|e| Error::Config(e.to_string()))?;
            let mert = umtx_core::decoder::mert::MertConfig {
                rounds: a.rounds,
                seed: cli.seed,
                ..Default::default()
            };
            let (w, trace) = tune(&dec, &sys, &lm, &src, &refs, &mert, a.nbest)?;
            for (i, b) in trace.iter().enumerate() {
                eprintln!("round {i}: pool BLEU {b:.2}");
            }
            save(&a.weights_out, |out| formats::write_weights(out, &w))
        }
        Cmd::Backtranslate(a) => {
            let mut cfg = load_config(a.config.as_deref(), cli.seed)?;
            if let Some(n) = a.iters {
                cfg.backtranslate.iterations = n;
            }
            if let Some(n) = a.subset {
                cfg.backtranslate.subset = n;
            }
            if let Some(t) = a.tune {
                cfg.backtranslate.tune = match t {
                    TuneArg::Off => TuneSetting::Off,
                    TuneArg::Authentic => TuneSetting::Authentic,
                    TuneArg::Synthetic => TuneSetting::Synthetic,
                };
            }
            cfg.validate()?;
            let root = workspace(&cli.workspace, &cfg)?;
            let dec = ParallelDecoder::new(cli.workers).map_err(|e| Error::Config(e.to_string()))?;
            let mut r = Runner::open(&root, cfg.to_toml(), cli.resume)?;
            pipeline::stage_data(&mut r, &cfg)?;
            pipeline::stage_preprocess(&mut r, &cfg)?;
            for lang in [pipeline::LANG_A, pipeline::LANG_B] {
                pipeline::stage_embed(&mut r, &cfg, lang)?;
            }
            pipeline::stage_map(&mut r, &cfg)?;
            pipeline::stage_table(&mut r, &cfg)?;
            for lang in [pipeline::LANG_A, pipeline::LANG_B] {
                pipeline::stage_lm(&mut r, &cfg, lang)?;
            }
            pipeline::stage_initial(&mut r, &cfg, &dec)?;
            pipeline::stage_backtranslate(&mut r, &cfg, &dec)?;
            pipeline::stage_select(&mut r, &cfg)?;
            for row in pipeline::read_records(&root)? {
                println!("{}\t{}\t{:.2}", row.iteration, row.direction.name(), row.dev_bleu);
            }
            Ok(())
        }
        Cmd::Fix(a) => run_fix(&a, cli.seed),
        Cmd::Bleu(a) => {
            let hyp = formats::read_corpus_file(&a.hyp)?;
            let reference = formats::read_corpus_file(&a.reference)?;
            let h: Vec<&Vec<String>> = hyp.iter().map(|s| &s.tokens).collect();
            let r: Vec<&Vec<String>> = reference.iter().map(|s| &s.tokens).collect();
            let report = corpus_bleu(&h, &r, a.cased)?;
            print!("{}", formats::bleu_report_text(&report));
            Ok(())
        }
        Cmd::Pipeline(a) => {
            let cfg = load_config(a.config.as_deref(), cli.seed)?;
            if a.print_config {
                print!("{}", cfg.to_toml());
                return Ok(());
            }
            let root = workspace(&cli.workspace, &cfg)?;
            let m = pipeline::run_pipeline(
                &cfg,
                &root,
                RunOptions {
                    workers: cli.workers,
                    resume: cli.resume,
                },
            )?;
            if let Some(e) = m.latest("eval") {
                for (k, v) in &e.metrics {
                    println!("{k}\t{v:.4}");
                }
            }
            Ok(())
        }
        Cmd::GenCipher(a) => {
            let p = generate(&CipherConfig {
                vocab_size: a.vocab,
                sentences: a.sentences,
                dev_size: a.dev,
                names: a.names,
                reorder_prob: a.reorder_prob,
                seed: cli.seed,
                ..CipherConfig::default()
            })?;
            let d = &a.out_dir;
            formats::write_corpus_file(&d.join("mono.a.txt"), &p.mono_a)?;
            formats::write_corpus_file(&d.join("mono.b.txt"), &p.mono_b)?;
            formats::write_corpus_file(&d.join("dev.a.txt"), &p.dev_a)?;
            formats::write_corpus_file(&d.join("dev.b.txt"), &p.dev_b)?;
            let pairs: Vec<(String, String)> = p.key.into_iter().collect();
            save(&d.join("key.tsv"), |w| formats::write_dictionary(w, &pairs))
        }
    }
}

fn run_fix(a: &FixArgs, seed: u64) -> Result<()> {
    let (mut src, mut tgt) = formats::read_bitext(std::io::stdin().lock(), "<stdin>")?;
    let mut counts = BTreeMap::new();
    if a.strip_untranslated {
        let profile = if a.profile == "czech" {
            DiacriticProfile::czech()
        } else {
            DiacriticProfile::new(a.profile.chars())?
        };
        let (t, n) = strip_untranslated(&src, &tgt, &profile, UNK)?;
        tgt = t;
        counts.insert("masked", n);
    }
    let policy = match &a.policy {
        Some(p) => formats::read_policy(formats::open(p)?, &name(p))?,
        None => NePolicy::default(),
    };
    if let Some(spans_path) = a.ne_spans.as_ref().or(a.post_spans.as_ref()) {
        let spans = formats::read_ne_spans(formats::open(spans_path)?, &name(spans_path))?;
        let links_path = a.alignments.as_ref().expect("clap enforces --alignments");
        let links = formats::read_pharaoh(formats::open(links_path)?, &name(links_path))?;
        if a.ne_spans.is_some() {
            let cfg = PretreatConfig {
                lev_threshold: (a.lev_threshold > 0).then_some(a.lev_threshold),
                ..PretreatConfig::default()
            };
            let report = ne_pretreat(&src, &tgt, &spans, &links, &policy, &cfg)?;
            counts.insert("ne_replaced", report.log.len());
            tgt = report.sentences;
        } else {
            if links.len() != tgt.len() {
                return Err(Error::Format("alignment and bitext line counts differ".into()));
            }
            let mut replaced = 0;
            for i in 0..tgt.len() {
                let mine: Vec<_> = spans.iter().filter(|s| s.sentence == i).cloned().collect();
                if mine.is_empty() {
                    continue;
                }
                let local: Vec<_> = mine.into_iter().map(|s| umtx_core::synthfix::NeSpan { sentence: 0, ..s }).collect();
                let report = ne_posttreat(&src[i], &tgt[i], &links[i], &local, &policy)?;
                replaced += report.log.len();
                tgt[i].tokens = report.sentences[0].tokens.clone();
            }
            counts.insert("ne_replaced", replaced);
        }
    }
    if a.reorder {
        tgt = reorder_augment(&tgt, a.window, seed)?;
        src = src.iter().chain(&src).cloned().collect();
    }
    for (k, v) in counts {
        eprintln!("{k}\t{v}");
    }
    let mut out = std::io::stdout().lock();
    formats::write_bitext(&mut out, &src, &tgt)?;
    out.flush().map_err(stdout_err)
}

fn load_config(path: Option<&Path>, seed: u64) -> Result<PipelineConfig> {
    let mut cfg = match path {
        Some(p) => PipelineConfig::load(p)?,
        None => PipelineConfig::cipher_desk(),
    };
    if path.is_none() || seed != 1 {
        cfg.seed = seed;
    }
    Ok(cfg)
}

fn workspace(flag: &Option<PathBuf>, cfg: &PipelineConfig) -> Result<PathBuf> {
    flag.clone()
        .or_else(|| cfg.workspace.clone())
        .ok_or_else(|| Error::Config("no workspace: pass --workspace or set UMTX_WORKSPACE".into()))
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("umtx: {e}");
            ExitCode::FAILURE
        }
    }
}
