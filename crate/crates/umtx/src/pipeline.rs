//! End-to-end pipeline over a workspace directory.
//!
//! Each stage reads its inputs from disk and writes its outputs to disk, so
//! a stage whose config hash and input digests are unchanged can be skipped
//! by checking the manifest alone.

use std::collections::BTreeMap;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use log::info;
use sha2::{Digest, Sha256};
use umtx_core::aligner::{BidirectionalAligner, Symmetrization};
use umtx_core::backtrans::{
    run_backtranslation, select_best, translate_corpus, tune, Direction, IterationRecord, Provenance, Side, System,
};
use umtx_core::cipher::{decipher, decipherment_accuracy, generate};
use umtx_core::decoder::{DecoderParams, FeatureWeights};
use umtx_core::lm::{count_ngrams, estimate_kn, ArpaLM};
use umtx_core::mteval::corpus_bleu;
use umtx_core::phrasevec::{build_phrase_vocab, train_sgns, EmbeddingMatrix};
use umtx_core::ptable::{induce_unsupervised, PhraseTable, TableProvenance};
use umtx_core::synthfix::{
    ne_pretreat, reorder_augment, strip_untranslated, tag_nes_default, DiacriticProfile, NePolicy, NeSpan, UNK,
};
use umtx_core::textproc::{
    apply_truecase, classify_language, filter_by_length, tokenize, train_langid, train_truecaser, Sentence, Verdict,
};
use umtx_core::xmap::{
    frequency_seed, identical_seed, normalize_embeddings, numeral_seed, self_learning_map, structural_seed,
};

use crate::config::{DataSource, PipelineConfig, SeedMode};
use crate::error::{Error, Result};
use crate::formats;
use crate::manifest::{self, artifact, Artifact, Manifest, StageRecord, StageStatus, MANIFEST_FILE};
use crate::parallel::ParallelDecoder;

pub const LANG_A: &str = "a";
pub const LANG_B: &str = "b";

/// The four synthetic-corpus variants, in the order they build on each other.
pub const VARIANTS: [&str; 4] = ["baseline", "nocz", "reordered", "ner"];

#[derive(Debug, Clone, Copy)]
pub struct RunOptions {
    pub workers: usize,
    /// Reuse stages recorded in an existing manifest.
    pub resume: bool,
}

impl Default for RunOptions {
    fn default() -> Self {
        RunOptions { workers: 1, resume: true }
    }
}

/// Per-stage seed derived from the global one.
pub fn stage_seed(global: u64, stage: &str) -> u64 {
    let d = Sha256::digest(format!("{global}/{stage}").as_bytes());
    u64::from_le_bytes(d[..8].try_into().expect("8 bytes"))
}

/// Key for recognizing an unchanged stage: the stage name plus whatever
/// configuration it reads.
fn config_hash<T: std::fmt::Debug>(stage: &str, parts: &T) -> String {
    manifest::sha256_hex(format!("{stage}\n{parts:?}").as_bytes())
}

/// What a stage body reports back.
#[derive(Debug, Default)]
pub struct StageOutput {
    pub metrics: BTreeMap<String, f64>,
    pub notes: BTreeMap<String, String>,
    /// Outputs only known once the stage has run.
    pub extra_outputs: Vec<String>,
}

impl StageOutput {
    fn metric(mut self, k: &str, v: f64) -> Self {
        self.metrics.insert(k.to_string(), v);
        self
    }

    fn note(mut self, k: &str, v: impl Into<String>) -> Self {
        self.notes.insert(k.to_string(), v.into());
        self
    }
}

pub struct Runner {
    pub root: PathBuf,
    pub manifest: Manifest,
    resume: bool,
    /// Names of stages actually executed in this run.
    pub executed: Vec<String>,
}

impl Runner {
    pub fn open(root: &Path, config_text: String, resume: bool) -> Result<Self> {
        std::fs::create_dir_all(root).map_err(|e| Error::io(root, e))?;
        let path = root.join(MANIFEST_FILE);
        let manifest = if resume && path.exists() {
            let mut m = Manifest::load(&path)?;
            m.config = config_text;
            m
        } else {
            Manifest::new(config_text)
        };
        Ok(Runner {
            root: root.to_path_buf(),
            manifest,
            resume,
            executed: Vec::new(),
        })
    }

    pub fn path(&self, rel: &str) -> PathBuf {
        self.root.join(rel)
    }

    fn save(&self) -> Result<()> {
        self.manifest.save(&self.root.join(MANIFEST_FILE))
    }

    /// Runs `body` unless an identical earlier run is recorded. Outputs are
    /// workspace-relative paths.
    pub fn stage<F>(&mut self, name: &str, hash: String, seed: u64, inputs: &[&str], outputs: &[&str], body: F) -> Result<()>
    where
        F: FnOnce(&Path) -> Result<StageOutput>,
    {
        let start = Instant::now();
        let ins: Vec<Artifact> = inputs
            .iter()
            .map(|p| artifact(&self.root, &self.path(p)))
            .collect::<Result<_>>()?;
        if self.resume && self.manifest.reusable(&self.root, name, &hash, &ins).is_some() {
            info!("stage {name}: up to date");
            return manifest::log_timing(&self.root, name, start.elapsed().as_secs_f64(), true);
        }
        info!("stage {name}: running");
        for o in outputs {
            let p = self.path(o);
            if let Some(dir) = p.parent() {
                std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
            }
        }
        let mut record = StageRecord {
            name: name.to_string(),
            status: StageStatus::Done,
            config_hash: hash,
            seed,
            inputs: ins,
            outputs: Vec::new(),
            metrics: BTreeMap::new(),
            notes: BTreeMap::new(),
            error: None,
        };
        match body(&self.root) {
            Ok(out) => {
                record.outputs = outputs
                    .iter()
                    .copied()
                    .chain(out.extra_outputs.iter().map(String::as_str))
                    .map(|p| artifact(&self.root, &self.path(p)))
                    .collect::<Result<_>>()?;
                record.metrics = out.metrics;
                record.notes = out.notes;
                self.manifest.push(record);
                self.executed.push(name.to_string());
                self.save()?;
                manifest::log_timing(&self.root, name, start.elapsed().as_secs_f64(), false)
            }
            Err(e) => {
                record.status = StageStatus::Failed;
                record.error = Some(e.to_string());
                self.manifest.push(record);
                self.save()?;
                Err(e)
            }
        }
    }
}

fn read(root: &Path, rel: &str) -> Result<Vec<Sentence>> {
    formats::read_corpus_file(&root.join(rel))
}

fn write(root: &Path, rel: &str, c: &[Sentence]) -> Result<()> {
    formats::write_corpus_file(&root.join(rel), c)
}

fn with_writer(root: &Path, rel: &str, f: impl FnOnce(&mut dyn Write) -> Result<()>) -> Result<()> {
    let path = root.join(rel);
    let mut w = formats::create(&path)?;
    f(&mut w)?;
    w.flush().map_err(|e| Error::io(&path, e))
}

fn with_reader<T>(root: &Path, rel: &str, f: impl FnOnce(std::io::BufReader<std::fs::File>, &str) -> Result<T>) -> Result<T> {
    let path = root.join(rel);
    f(formats::open(&path)?, &path.display().to_string())
}

pub fn load_lm(root: &Path, rel: &str) -> Result<ArpaLM> {
    with_reader(root, rel, formats::read_arpa)
}

pub fn load_table(root: &Path, rel: &str, provenance: TableProvenance) -> Result<PhraseTable> {
    with_reader(root, rel, |r, n| formats::read_moses(r, n, provenance))
}

pub fn load_weights(root: &Path, rel: &str) -> Result<FeatureWeights> {
    with_reader(root, rel, formats::read_weights)
}

fn side_name(d: Direction) -> (&'static str, &'static str) {
    match d {
        Direction::AtoB => (LANG_A, LANG_B),
        Direction::BtoA => (LANG_B, LANG_A),
    }
}

fn params_for(cfg: &PipelineConfig, iteration: usize) -> DecoderParams {
    if iteration == 0 {
        cfg.initial_params()
    } else {
        cfg.decoder_params()
    }
}

/// Rows in `bt/records.tsv`.
#[derive(Debug, Clone, PartialEq)]
pub struct RecordRow {
    pub iteration: usize,
    pub direction: Direction,
    pub dev_bleu: f64,
    pub synthetic_size: usize,
    pub failures: usize,
}

pub fn record_files(iteration: usize, d: Direction) -> (String, String) {
    (
        format!("bt/{iteration}.{}.moses", d.name()),
        format!("bt/{iteration}.{}.weights", d.name()),
    )
}

pub fn read_records(root: &Path) -> Result<Vec<RecordRow>> {
    let text = std::fs::read_to_string(root.join("bt/records.tsv")).map_err(|e| Error::io(root.join("bt/records.tsv"), e))?;
    text.lines()
        .enumerate()
        .skip(1)
        .map(|(i, l)| {
            let c: Vec<&str> = l.split('\t').collect();
            let bad = || Error::parse("bt/records.tsv", i + 1, "malformed record");
            if c.len() != 5 {
                return Err(bad());
            }
            Ok(RecordRow {
                iteration: c[0].parse().map_err(|_| bad())?,
                direction: match c[1] {
                    "a2b" => Direction::AtoB,
                    "b2a" => Direction::BtoA,
                    _ => return Err(bad()),
                },
                dev_bleu: c[2].parse().map_err(|_| bad())?,
                synthetic_size: c[3].parse().map_err(|_| bad())?,
                failures: c[4].parse().map_err(|_| bad())?,
            })
        })
        .collect()
}

/// Runs every stage in order and returns the manifest.
pub fn run_pipeline(cfg: &PipelineConfig, root: &Path, opts: RunOptions) -> Result<Manifest> {
    cfg.validate()?;
    let mut r = Runner::open(root, cfg.to_toml(), opts.resume)?;
    let dec = ParallelDecoder::new(opts.workers).map_err(|e| Error::Config(format!("worker pool: {e}")))?;
    stage_data(&mut r, cfg)?;
    stage_preprocess(&mut r, cfg)?;
    for lang in [LANG_A, LANG_B] {
        stage_embed(&mut r, cfg, lang)?;
    }
    stage_map(&mut r, cfg)?;
    stage_table(&mut r, cfg)?;
    for lang in [LANG_A, LANG_B] {
        stage_lm(&mut r, cfg, lang)?;
    }
    stage_initial(&mut r, cfg, &dec)?;
    stage_backtranslate(&mut r, cfg, &dec)?;
    stage_select(&mut r, cfg)?;
    stage_translate(&mut r, cfg, &dec)?;
    stage_fix(&mut r, cfg)?;
    stage_eval(&mut r, cfg, &dec)?;
    Ok(r.manifest)
}

pub fn stage_data(r: &mut Runner, cfg: &PipelineConfig) -> Result<()> {
    // the global seed itself, so `gen-cipher --seed N` writes the same pair
    let seed = cfg.seed;
    let hash = config_hash("data", &(&cfg.data, seed));
    let mut outputs = vec!["raw/mono.a.txt", "raw/mono.b.txt", "raw/dev.a.txt", "raw/dev.b.txt"];
    match cfg.data.source {
        DataSource::Cipher => {
            outputs.push("raw/key.tsv");
            r.stage("data", hash, seed, &[], &outputs, |root| {
                let c = cfg.cipher();
                let p = generate(&c)?;
                write(root, "raw/mono.a.txt", &p.mono_a)?;
                write(root, "raw/mono.b.txt", &p.mono_b)?;
                write(root, "raw/dev.a.txt", &p.dev_a)?;
                write(root, "raw/dev.b.txt", &p.dev_b)?;
                let pairs: Vec<(String, String)> = p.key.into_iter().collect();
                with_writer(root, "raw/key.tsv", |w| formats::write_dictionary(w, &pairs))?;
                Ok(StageOutput::default()
                    .metric("sentences", c.sentences as f64)
                    .note("source", "cipher"))
            })
        }
        DataSource::Files => {
            let d = &cfg.data;
            let mut copies: Vec<(PathBuf, &str)> = vec![
                (d.mono_src.clone().expect("validated"), "raw/mono.a.txt"),
                (d.mono_tgt.clone().expect("validated"), "raw/mono.b.txt"),
            ];
            let mut dev = Vec::new();
            for (p, rel) in [(&d.dev_src, "raw/dev.a.txt"), (&d.dev_tgt, "raw/dev.b.txt")] {
                if let Some(p) = p {
                    dev.push((p.clone(), rel));
                }
            }
            if dev.len() == 1 {
                return Err(Error::Config("data.dev_src and data.dev_tgt must be given together".into()));
            }
            copies.extend(dev);
            if let Some(p) = &d.ne_spans {
                copies.push((p.clone(), "raw/ne.b.tsv"));
            }
            let outputs: Vec<&str> = copies.iter().map(|c| c.1).collect();
            r.stage("data", hash, seed, &[], &outputs, |root| {
                for (src, rel) in &copies {
                    std::fs::copy(src, root.join(rel)).map_err(|e| Error::io(src, e))?;
                }
                Ok(StageOutput::default().note("source", "files"))
            })
        }
    }
}

fn has_dev(root: &Path) -> bool {
    root.join("raw/dev.a.txt").exists()
}

fn tokenize_lines(root: &Path, rel: &str) -> Result<Vec<Sentence>> {
    let text = std::fs::read_to_string(root.join(rel)).map_err(|e| Error::io(root.join(rel), e))?;
    Ok(text.lines().enumerate().map(|(i, l)| tokenize(l, i)).collect())
}

pub fn stage_preprocess(r: &mut Runner, cfg: &PipelineConfig) -> Result<()> {
    let dev = has_dev(&r.root);
    let mut inputs = vec!["raw/mono.a.txt", "raw/mono.b.txt"];
    let mut outputs = vec!["prep/mono.a.txt", "prep/mono.b.txt", "prep/truecase.a.tsv", "prep/truecase.b.tsv"];
    if dev {
        inputs.extend(["raw/dev.a.txt", "raw/dev.b.txt"]);
        outputs.extend(["prep/dev.a.txt", "prep/dev.b.txt"]);
    }
    if cfg.preprocess.language_filter {
        outputs.push("prep/langid.tsv");
    }
    let hash = config_hash("preprocess", &cfg.preprocess);
    r.stage("preprocess", hash, 0, &inputs, &outputs, |root| {
        let p = &cfg.preprocess;
        let mut sides = BTreeMap::new();
        let mut models = BTreeMap::new();
        let mut out = StageOutput::default().note("order", "tokenize,truecase,length,language");
        for lang in [LANG_A, LANG_B] {
            let raw = tokenize_lines(root, &format!("raw/mono.{lang}.txt"))?;
            let tc = train_truecaser(&raw)?;
            with_writer(root, &format!("prep/truecase.{lang}.tsv"), |w| formats::write_truecase(w, &tc))?;
            let cased: Vec<Sentence> = if p.truecase { raw.iter().map(|s| apply_truecase(s, &tc)).collect() } else { raw };
            let before = cased.len();
            let kept: Vec<Sentence> = cased
                .into_iter()
                .filter(|s| filter_by_length(s, cfg.length_filter()) == Verdict::Keep)
                .collect();
            out = out.metric(&format!("length_dropped.{lang}"), (before - kept.len()) as f64);
            sides.insert(lang.to_string(), kept);
            models.insert(lang, tc);
        }
        if p.language_filter {
            let labeled: BTreeMap<String, &Vec<Sentence>> = sides.iter().map(|(k, v)| (k.clone(), v)).collect();
            let model = train_langid(&labeled, p.langid_order)?;
            with_writer(root, "prep/langid.tsv", |w| formats::write_langid(w, &model))?;
            for (lang, corpus) in sides.iter_mut() {
                let before = corpus.len();
                corpus.retain(|s| classify_language(s, &model).0 == lang);
                out = out.metric(&format!("language_dropped.{lang}"), (before - corpus.len()) as f64);
            }
        }
        for (lang, corpus) in &sides {
            if corpus.is_empty() {
                return Err(Error::Config(format!("no sentences left on side {lang} after filtering")));
            }
            out = out.metric(&format!("sentences.{lang}"), corpus.len() as f64);
            write(root, &format!("prep/mono.{lang}.txt"), corpus)?;
        }
        if dev {
            for lang in [LANG_A, LANG_B] {
                let raw = tokenize_lines(root, &format!("raw/dev.{lang}.txt"))?;
                let tc = &models[lang];
                let cased: Vec<Sentence> = if p.truecase { raw.iter().map(|s| apply_truecase(s, tc)).collect() } else { raw };
                write(root, &format!("prep/dev.{lang}.txt"), &cased)?;
            }
        }
        Ok(out)
    })
}

pub fn stage_embed(r: &mut Runner, cfg: &PipelineConfig, lang: &str) -> Result<()> {
    let name = format!("embed.{lang}");
    let seed = stage_seed(cfg.seed, &name);
    let hash = config_hash(&name, &(&cfg.embed, seed));
    let input = format!("prep/mono.{lang}.txt");
    let vocab = format!("emb/vocab.{lang}.tsv");
    let vectors = format!("emb/vectors.{lang}.txt");
    r.stage(&name, hash, seed, &[&input], &[&vocab, &vectors], |root| {
        let corpus = read(root, &input)?;
        let v = build_phrase_vocab(&corpus, cfg.embed.caps)?;
        let (m, report) = train_sgns(&corpus, &v, &cfg.sgns(seed))?;
        with_writer(root, &vocab, |w| formats::write_phrase_vocab(w, &v))?;
        with_writer(root, &vectors, |w| formats::write_word2vec(w, &m))?;
        Ok(StageOutput::default()
            .metric("phrases", v.len() as f64)
            .metric("untrained", report.untrained.len() as f64))
    })
}

fn unigram_rows(root: &Path, lang: &str) -> Result<usize> {
    let v = with_reader(root, &format!("emb/vocab.{lang}.tsv"), formats::read_phrase_vocab)?;
    Ok(v.entries.iter().filter(|e| e.order == 1).count())
}

pub fn stage_map(r: &mut Runner, cfg: &PipelineConfig) -> Result<()> {
    let hash = config_hash("map", &cfg.map);
    let inputs = ["emb/vocab.a.tsv", "emb/vocab.b.tsv", "emb/vectors.a.txt", "emb/vectors.b.txt"];
    let outputs = ["map/mapped.a.txt", "map/mapped.b.txt", "map/seed.tsv", "map/dictionary.tsv"];
    r.stage("map", hash, 0, &inputs, &outputs, |root| {
        let load = |lang: &str| -> Result<EmbeddingMatrix> {
            let m = with_reader(root, &format!("emb/vectors.{lang}.txt"), formats::read_word2vec)?;
            Ok(normalize_embeddings(&m)?)
        };
        let (x, z) = (load(LANG_A)?, load(LANG_B)?);
        let (ua, ub) = (unigram_rows(root, LANG_A)?, unigram_rows(root, LANG_B)?);
        let m = &cfg.map;
        let seed = match m.seed_dictionary {
            SeedMode::Identical => identical_seed(&x.labels, &z.labels),
            SeedMode::Numeral => numeral_seed(&x.labels, &z.labels),
            SeedMode::Frequency => frequency_seed(ua, ub, m.seed_size),
            SeedMode::Structural => structural_seed(&x, &z, m.seed_size.min(ua).min(ub), m.csls_k)?,
        };
        if seed.is_empty() {
            return Err(Error::Config(format!(
                "the {:?} seed dictionary is empty for this language pair; choose another map.seed_dictionary",
                m.seed_dictionary
            )));
        }
        let label_pairs = |pairs: &[(usize, usize)]| -> Vec<(String, String)> {
            pairs.iter().map(|&(i, j)| (x.labels[i].clone(), z.labels[j].clone())).collect()
        };
        with_writer(root, "map/seed.tsv", |w| formats::write_dictionary(w, &label_pairs(&seed.pairs)))?;
        let sol = self_learning_map(&x, &z, &seed, &cfg.map_config(ua.min(ub)))?;
        let xm = EmbeddingMatrix::new(x.labels.clone(), x.vectors.matmul(&sol.wx));
        let zm = EmbeddingMatrix::new(z.labels.clone(), z.vectors.matmul(&sol.wz));
        with_writer(root, "map/mapped.a.txt", |w| formats::write_word2vec(w, &xm))?;
        with_writer(root, "map/mapped.b.txt", |w| formats::write_word2vec(w, &zm))?;
        with_writer(root, "map/dictionary.tsv", |w| {
            formats::write_dictionary(w, &label_pairs(&sol.final_dictionary))
        })?;
        Ok(StageOutput::default()
            .metric("seed_pairs", seed.len() as f64)
            .metric("iterations", sol.objective_trace.len() as f64)
            .metric("objective", sol.objective_trace.last().copied().unwrap_or(0.0))
            .note("retrieval", format!("inner=nn final=csls{}", m.csls_k)))
    })
}

pub fn stage_table(r: &mut Runner, cfg: &PipelineConfig) -> Result<()> {
    let hash = config_hash("table", &(&cfg.table, cfg.map.csls_k));
    r.stage(
        "table",
        hash,
        0,
        &["map/mapped.a.txt", "map/mapped.b.txt"],
        &["table/a2b.moses", "table/b2a.moses"],
        |root| {
            let x = with_reader(root, "map/mapped.a.txt", formats::read_word2vec)?;
            let z = with_reader(root, "map/mapped.b.txt", formats::read_word2vec)?;
            let t = &cfg.table;
            let ab = induce_unsupervised(&x, &z, t.k, t.temperature, cfg.table_retrieval())?;
            let ba = induce_unsupervised(&z, &x, t.k, t.temperature, cfg.table_retrieval())?;
            with_writer(root, "table/a2b.moses", |w| formats::write_moses(w, &ab))?;
            with_writer(root, "table/b2a.moses", |w| formats::write_moses(w, &ba))?;
            Ok(StageOutput::default()
                .metric("sources.a2b", ab.len() as f64)
                .metric("sources.b2a", ba.len() as f64)
                .metric("temperature", t.temperature))
        },
    )
}

pub fn stage_lm(r: &mut Runner, cfg: &PipelineConfig, lang: &str) -> Result<()> {
    let name = format!("lm.{lang}");
    let input = format!("prep/mono.{lang}.txt");
    let output = format!("lm/{lang}.arpa");
    r.stage(&name, config_hash(&name, &cfg.lm), 0, &[&input], &[&output], |root| {
        let (lm, report) = estimate_kn(&count_ngrams(&read(root, &input)?, cfg.lm.order)?)?;
        with_writer(root, &output, |w| formats::write_arpa(w, &lm))?;
        let mut out = StageOutput::default().metric("fallback_orders", report.fallback_orders.len() as f64);
        for (k, d) in report.discounts.iter().enumerate() {
            out = out.metric(&format!("discount.{}", k + 1), *d);
        }
        Ok(out)
    })
}

fn dev_bleu(hyps: &[Sentence], refs: &[Sentence]) -> Result<f64> {
    let h: Vec<&Vec<String>> = hyps.iter().map(|s| &s.tokens).collect();
    let r: Vec<&Vec<String>> = refs.iter().map(|s| &s.tokens).collect();
    Ok(corpus_bleu(&h, &r, false)?.bleu)
}

pub fn stage_initial(r: &mut Runner, cfg: &PipelineConfig, dec: &ParallelDecoder) -> Result<()> {
    let seed = stage_seed(cfg.seed, "initial");
    let hash = config_hash("initial", &(&cfg.decode, &cfg.tune, seed));
    let dev = has_dev(&r.root);
    let mut inputs = vec!["table/a2b.moses", "table/b2a.moses", "lm/a.arpa", "lm/b.arpa"];
    if dev {
        inputs.extend(["prep/dev.a.txt", "prep/dev.b.txt"]);
    }
    r.stage("initial", hash, seed, &inputs, &["init/a2b.weights", "init/b2a.weights"], |root| {
        let mut out = StageOutput::default();
        for d in [Direction::AtoB, Direction::BtoA] {
            let (from, to) = side_name(d);
            let mut sys = System {
                direction: d,
                table: load_table(root, &format!("table/{}.moses", d.name()), TableProvenance::Unsupervised)?,
                weights: FeatureWeights::default(),
                params: cfg.initial_params(),
                provenance: Provenance::Initial,
            };
            let lm = load_lm(root, &format!("lm/{to}.arpa"))?;
            if dev {
                let src = read(root, &format!("prep/dev.{from}.txt"))?;
                let refs = read(root, &format!("prep/dev.{to}.txt"))?;
                if cfg.tune.initial {
                    let mert = cfg.mert(seed ^ d as u64);
                    sys.weights = tune(dec, &sys, &lm, &src, &refs, &mert, cfg.tune.nbest)?.0;
                }
                let (hyps, _) = translate_corpus(dec, &sys, &lm, &src);
                out = out.metric(&format!("dev_bleu.{}", d.name()), dev_bleu(&hyps, &refs)?);
            }
            with_writer(root, &format!("init/{}.weights", d.name()), |w| formats::write_weights(w, &sys.weights))?;
        }
        Ok(out)
    })
}

pub fn stage_backtranslate(r: &mut Runner, cfg: &PipelineConfig, dec: &ParallelDecoder) -> Result<()> {
    if !has_dev(&r.root) {
        return Err(Error::Config("back-translation needs a dev set to score iterations".into()));
    }
    let seed = stage_seed(cfg.seed, "backtranslate");
    let hash = config_hash(
        "backtranslate",
        &(&cfg.decode, &cfg.tune, &cfg.align, &cfg.backtranslate, seed),
    );
    let inputs = [
        "prep/mono.a.txt",
        "prep/mono.b.txt",
        "prep/dev.a.txt",
        "prep/dev.b.txt",
        "lm/a.arpa",
        "lm/b.arpa",
        "table/a2b.moses",
        "table/b2a.moses",
        "init/a2b.weights",
        "init/b2a.weights",
    ];
    // Per-record files depend on when the divergence guard fires, so the
    // stage reports them itself.
    r.stage("backtranslate", hash, seed, &inputs, &["bt/records.tsv"], |root| run_bt(root, cfg, dec, seed))
}

fn run_bt(root: &Path, cfg: &PipelineConfig, dec: &ParallelDecoder, seed: u64) -> Result<StageOutput> {
    let mono_a = read(root, "prep/mono.a.txt")?;
    let mono_b = read(root, "prep/mono.b.txt")?;
    let dev_a = read(root, "prep/dev.a.txt")?;
    let dev_b = read(root, "prep/dev.b.txt")?;
    let lm_a = load_lm(root, "lm/a.arpa")?;
    let lm_b = load_lm(root, "lm/b.arpa")?;
    let initial = |d: Direction| -> Result<System> {
        Ok(System {
            direction: d,
            table: load_table(root, &format!("table/{}.moses", d.name()), TableProvenance::Unsupervised)?,
            weights: load_weights(root, &format!("init/{}.weights", d.name()))?,
            params: cfg.initial_params(),
            provenance: Provenance::Initial,
        })
    };
    let a = Side {
        mono: &mono_a,
        lm: &lm_a,
        dev: &dev_a,
    };
    let b = Side {
        mono: &mono_b,
        lm: &lm_b,
        dev: &dev_b,
    };
    let outcome = run_backtranslation(
        dec,
        initial(Direction::AtoB)?,
        initial(Direction::BtoA)?,
        &a,
        &b,
        &cfg.bt_config(seed),
    )?;
    let mut tsv = String::from("iteration\tdirection\tdev_bleu\tsynthetic_size\tfailures\n");
    let mut out = StageOutput::default().metric("halted_early", outcome.halted_early as u8 as f64);
    for rec in &outcome.records {
        let (t, w) = record_files(rec.iteration, rec.direction);
        with_writer(root, &t, |wr| formats::write_moses(wr, &rec.system.table))?;
        with_writer(root, &w, |wr| formats::write_weights(wr, &rec.system.weights))?;
        out.extra_outputs.extend([t, w]);
        tsv.push_str(&format!(
            "{}\t{}\t{}\t{}\t{}\n",
            rec.iteration,
            rec.direction.name(),
            rec.dev_bleu,
            rec.synthetic_size,
            rec.translation_failures
        ));
        out = out.metric(&format!("dev_bleu.{}.{}", rec.iteration, rec.direction.name()), rec.dev_bleu);
    }
    std::fs::write(root.join("bt/records.tsv"), tsv).map_err(|e| Error::io(root.join("bt/records.tsv"), e))?;
    Ok(out)
}

/// Rebuilds iteration records from disk.
pub fn load_records(root: &Path, cfg: &PipelineConfig) -> Result<Vec<IterationRecord>> {
    read_records(root)?
        .into_iter()
        .map(|row| {
            let (t, w) = record_files(row.iteration, row.direction);
            let provenance = if row.iteration == 0 { TableProvenance::Unsupervised } else { TableProvenance::Extracted };
            Ok(IterationRecord {
                iteration: row.iteration,
                direction: row.direction,
                synthetic_size: row.synthetic_size,
                translation_failures: row.failures,
                dev_bleu: row.dev_bleu,
                system: System {
                    direction: row.direction,
                    table: load_table(root, &t, provenance)?,
                    weights: load_weights(root, &w)?,
                    params: params_for(cfg, row.iteration),
                    provenance: if row.iteration == 0 {
                        Provenance::Initial
                    } else {
                        Provenance::Iteration(row.iteration)
                    },
                },
            })
        })
        .collect()
}

pub fn stage_select(r: &mut Runner, cfg: &PipelineConfig) -> Result<()> {
    let inputs: Vec<String> = r
        .manifest
        .latest("backtranslate")
        .map(|rec| rec.outputs.iter().map(|a| a.path.clone()).collect())
        .unwrap_or_default();
    let in_refs: Vec<&str> = inputs.iter().map(String::as_str).collect();
    let outputs = ["best/a2b.moses", "best/a2b.weights", "best/b2a.moses", "best/b2a.weights", "best/selection.txt"];
    let hash = config_hash("select", &(&cfg.decode, "dev-bleu"));
    r.stage("select", hash, 0, &in_refs, &outputs, |root| {
        let records = load_records(root, cfg)?;
        let mut out = StageOutput::default();
        let mut selection = String::new();
        for d in [Direction::AtoB, Direction::BtoA] {
            let mine: Vec<IterationRecord> = records.iter().filter(|x| x.direction == d).cloned().collect();
            let best = select_best(&mine)?;
            with_writer(root, &format!("best/{}.moses", d.name()), |w| formats::write_moses(w, &best.system.table))?;
            with_writer(root, &format!("best/{}.weights", d.name()), |w| {
                formats::write_weights(w, &best.system.weights)
            })?;
            selection.push_str(&format!("{}={}\n", d.name(), best.iteration));
            out = out
                .metric(&format!("iteration.{}", d.name()), best.iteration as f64)
                .metric(&format!("dev_bleu.{}", d.name()), best.dev_bleu);
        }
        std::fs::write(root.join("best/selection.txt"), selection).map_err(|e| Error::io(root.join("best/selection.txt"), e))?;
        Ok(out)
    })
}

/// Selected system for a direction, rebuilt from `best/`.
pub fn load_best(root: &Path, cfg: &PipelineConfig, d: Direction) -> Result<System> {
    let text = std::fs::read_to_string(root.join("best/selection.txt")).map_err(|e| Error::io(root.join("best/selection.txt"), e))?;
    let iteration = text
        .lines()
        .find_map(|l| l.strip_prefix(&format!("{}=", d.name())))
        .and_then(|v| v.trim().parse::<usize>().ok())
        .ok_or_else(|| Error::parse("best/selection.txt", 0, format!("no entry for {}", d.name())))?;
    let provenance = if iteration == 0 { TableProvenance::Unsupervised } else { TableProvenance::Extracted };
    Ok(System {
        direction: d,
        table: load_table(root, &format!("best/{}.moses", d.name()), provenance)?,
        weights: load_weights(root, &format!("best/{}.weights", d.name()))?,
        params: params_for(cfg, iteration),
        provenance: if iteration == 0 {
            Provenance::Initial
        } else {
            Provenance::Iteration(iteration)
        },
    })
}

/// Translates the full B corpus into A with the selected B→A system, one
/// checkpointed chunk at a time.
pub fn stage_translate(r: &mut Runner, cfg: &PipelineConfig, dec: &ParallelDecoder) -> Result<()> {
    let n = read(&r.root, "prep/mono.b.txt")?.len();
    let chunk = cfg.backtranslate.chunk_size;
    let hash = config_hash("translate", &(&cfg.decode, chunk));
    let system_inputs = ["prep/mono.b.txt", "lm/a.arpa", "best/b2a.moses", "best/b2a.weights", "best/selection.txt"];
    let mut chunk_files = Vec::new();
    for (i, start) in (0..n).step_by(chunk).enumerate() {
        let end = (start + chunk).min(n);
        let rel = format!("synth/chunks/{i:05}.txt");
        let name = format!("translate.{i:05}");
        r.stage(&name, hash.clone(), 0, &system_inputs, &[&rel], |root| {
            let mono = read(root, "prep/mono.b.txt")?;
            let sys = load_best(root, cfg, Direction::BtoA)?;
            let lm = load_lm(root, "lm/a.arpa")?;
            let (hyps, failures) = translate_corpus(dec, &sys, &lm, &mono[start..end]);
            write(root, &rel, &hyps)?;
            Ok(StageOutput::default().metric("failures", failures as f64).metric("lines", (end - start) as f64))
        })?;
        chunk_files.push(rel);
    }
    let in_refs: Vec<&str> = chunk_files.iter().map(String::as_str).collect();
    r.stage("translate", hash, 0, &in_refs, &["synth/b2a.a.txt"], |root| {
        let mut all = Vec::with_capacity(n);
        for f in &chunk_files {
            all.extend(read(root, f)?);
        }
        write(root, "synth/b2a.a.txt", &all)?;
        Ok(StageOutput::default().metric("lines", all.len() as f64))
    })
}

fn doubled_spans(spans: &[NeSpan], n: usize) -> Vec<NeSpan> {
    let mut out = spans.to_vec();
    out.extend(spans.iter().map(|s| NeSpan {
        sentence: s.sentence + n,
        ..s.clone()
    }));
    out
}

/// The four synthetic corpora: raw back-translation, untranslated words
/// masked, window-reordered, and NE-treated. Side `a` is synthetic, side
/// `b` authentic.
pub fn stage_fix(r: &mut Runner, cfg: &PipelineConfig) -> Result<()> {
    let seed = stage_seed(cfg.seed, "fix");
    let hash = config_hash("fix", &(&cfg.fix, &cfg.align, seed));
    let mut inputs = vec!["prep/mono.b.txt".to_string(), "synth/b2a.a.txt".to_string()];
    if r.root.join("raw/ne.b.tsv").exists() {
        inputs.push("raw/ne.b.tsv".into());
    }
    if let Some(p) = &cfg.fix.policy {
        let dst = "fix/policy.tsv";
        std::fs::create_dir_all(r.root.join("fix")).map_err(|e| Error::io(r.root.join("fix"), e))?;
        std::fs::copy(p, r.root.join(dst)).map_err(|e| Error::io(p, e))?;
        inputs.push(dst.into());
    }
    let mut outputs: Vec<String> = VARIANTS
        .iter()
        .flat_map(|v| [format!("fix/{v}.a.txt"), format!("fix/{v}.b.txt")])
        .collect();
    outputs.extend(["fix/ne.b.tsv".to_string(), "fix/ner.log.tsv".to_string()]);
    let in_refs: Vec<&str> = inputs.iter().map(String::as_str).collect();
    let out_refs: Vec<&str> = outputs.iter().map(String::as_str).collect();
    r.stage("fix", hash, seed, &in_refs, &out_refs, |root| {
        let auth = read(root, "prep/mono.b.txt")?;
        let synth = read(root, "synth/b2a.a.txt")?;
        let n = auth.len();
        let profile = if cfg.fix.diacritics.is_empty() {
            DiacriticProfile::czech()
        } else {
            DiacriticProfile::new(cfg.fix.diacritics.chars())?
        };
        write(root, "fix/baseline.a.txt", &synth)?;
        write(root, "fix/baseline.b.txt", &auth)?;

        let (nocz, stripped) = strip_untranslated(&auth, &synth, &profile, UNK)?;
        write(root, "fix/nocz.a.txt", &nocz)?;
        write(root, "fix/nocz.b.txt", &auth)?;

        let reordered = reorder_augment(&nocz, cfg.fix.reorder_window, seed)?;
        let auth2: Vec<Sentence> = auth.iter().chain(&auth).cloned().collect();
        write(root, "fix/reordered.a.txt", &reordered)?;
        write(root, "fix/reordered.b.txt", &auth2)?;

        let spans: Vec<NeSpan> = if root.join("raw/ne.b.tsv").exists() {
            with_reader(root, "raw/ne.b.tsv", formats::read_ne_spans)?
        } else {
            auth.iter().enumerate().flat_map(|(i, s)| tag_nes_default(s, i, None)).collect()
        };
        with_writer(root, "fix/ne.b.tsv", |w| formats::write_ne_spans(w, &spans))?;
        let policy = if root.join("fix/policy.tsv").exists() {
            with_reader(root, "fix/policy.tsv", formats::read_policy)?
        } else {
            NePolicy::default()
        };
        let bitext: Vec<(Sentence, Sentence)> = auth2.iter().cloned().zip(reordered.iter().cloned()).collect();
        let aligner = BidirectionalAligner::train(&bitext, cfg.table_config().align)?;
        let heuristic: Symmetrization = cfg.fix.ne_symmetrization.into();
        let alignments: Vec<_> = bitext.iter().map(|(s, t)| aligner.align(s, t, heuristic)).collect();
        let report = ne_pretreat(&auth2, &reordered, &doubled_spans(&spans, n), &alignments, &policy, &cfg.pretreat())?;
        write(root, "fix/ner.a.txt", &report.sentences)?;
        write(root, "fix/ner.b.txt", &auth2)?;
        with_writer(root, "fix/ner.log.tsv", |w| {
            for rep in &report.log {
                writeln!(w, "{}\t{}\t{}\t{}\t{}", rep.sentence, rep.start, rep.end, rep.action, rep.tokens.join(" "))
                    .map_err(|e| Error::Format(e.to_string()))?;
            }
            Ok(())
        })?;
        Ok(StageOutput::default()
            .metric("untranslated_masked", stripped as f64)
            .metric("ne_spans", spans.len() as f64)
            .metric("ne_replacements", report.log.len() as f64)
            .metric("ne_trusted", report.trusted as f64)
            .metric("ne_unaligned", report.unaligned as f64)
            .metric("ne_overlaps", report.overlaps.len() as f64)
            .note("sequence", VARIANTS.join(",")))
    })
}

pub fn stage_eval(r: &mut Runner, cfg: &PipelineConfig, dec: &ParallelDecoder) -> Result<()> {
    let cipher = r.root.join("raw/key.tsv").exists();
    let mut inputs = vec![
        "prep/dev.a.txt",
        "prep/dev.b.txt",
        "lm/a.arpa",
        "lm/b.arpa",
        "best/a2b.moses",
        "best/a2b.weights",
        "best/b2a.moses",
        "best/b2a.weights",
        "best/selection.txt",
        "prep/mono.b.txt",
        "synth/b2a.a.txt",
    ];
    if cipher {
        inputs.push("raw/key.tsv");
    }
    r.stage("eval", config_hash("eval", &cfg.decode), 0, &inputs, &["eval/report.txt"], |root| {
        let mut out = StageOutput::default();
        let mut report = String::new();
        for d in [Direction::AtoB, Direction::BtoA] {
            let (from, to) = side_name(d);
            let sys = load_best(root, cfg, d)?;
            let lm = load_lm(root, &format!("lm/{to}.arpa"))?;
            let src = read(root, &format!("prep/dev.{from}.txt"))?;
            let refs = read(root, &format!("prep/dev.{to}.txt"))?;
            let (hyps, _) = translate_corpus(dec, &sys, &lm, &src);
            let h: Vec<&Vec<String>> = hyps.iter().map(|s| &s.tokens).collect();
            let rr: Vec<&Vec<String>> = refs.iter().map(|s| &s.tokens).collect();
            let rep = corpus_bleu(&h, &rr, false)?;
            report.push_str(&format!("[{}]\n", d.name()));
            report.push_str(&formats::bleu_report_text(&rep));
            out = out.metric(&format!("dev_bleu.{}", d.name()), rep.bleu);
            if cipher && d == Direction::BtoA {
                let key: BTreeMap<String, String> = with_reader(root, "raw/key.tsv", formats::read_dictionary)?.into_iter().collect();
                let dev_acc = decipherment_accuracy(&hyps, &refs)?;
                let mono = read(root, "prep/mono.b.txt")?;
                let synth = read(root, "synth/b2a.a.txt")?;
                let full_acc = decipherment_accuracy(&synth, &decipher(&key, &mono))?;
                report.push_str(&format!("decipherment_dev={dev_acc:.6}\ndecipherment_full={full_acc:.6}\n"));
                out = out.metric("decipherment_dev", dev_acc).metric("decipherment_full", full_acc);
            }
        }
        std::fs::write(root.join("eval/report.txt"), report).map_err(|e| Error::io(root.join("eval/report.txt"), e))?;
        Ok(out)
    })
}
