//! Pipeline configuration: a versioned TOML file with one table per stage.
//!
//! Every key has a default, so an empty file is valid. Unknown keys are
//! rejected. [`PipelineConfig::default`] carries the published settings;
//! [`PipelineConfig::cipher_desk`] is the preset for the bundled cipher pair.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use umtx_core::aligner::{AlignParams, Symmetrization};
use umtx_core::backtrans::{BtConfig, TableConfig, TuneMode};
use umtx_core::cipher::CipherConfig;
use umtx_core::decoder::mert::MertConfig;
use umtx_core::decoder::DecoderParams;
use umtx_core::phrasevec::SgnsConfig;
use umtx_core::synthfix::PretreatConfig;
use umtx_core::textproc::LengthFilter;
use umtx_core::xmap::{MapConfig, Retrieval};

use crate::error::{Error, Result};

pub const CONFIG_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PipelineConfig {
    pub version: u32,
    pub seed: u64,
    /// Overridden by `UMTX_WORKSPACE` and `--workspace`.
    pub workspace: Option<PathBuf>,
    pub data: DataConfig,
    pub preprocess: PreprocessConfig,
    pub embed: EmbedConfig,
    pub map: MapSection,
    pub table: TableSection,
    pub lm: LmConfig,
    pub decode: DecodeConfig,
    pub tune: TuneConfig,
    pub align: AlignConfig,
    pub backtranslate: BacktransConfig,
    pub fix: FixConfig,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DataSource {
    /// Generate a word-substitution cipher pair.
    Cipher,
    /// Read corpora from the paths below.
    Files,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DataConfig {
    pub source: DataSource,
    /// Monolingual source-language corpus (language A).
    pub mono_src: Option<PathBuf>,
    /// Monolingual target-language corpus (language B).
    pub mono_tgt: Option<PathBuf>,
    pub dev_src: Option<PathBuf>,
    pub dev_tgt: Option<PathBuf>,
    /// Optional NE spans over `mono_tgt`, TSV.
    pub ne_spans: Option<PathBuf>,
    pub cipher: CipherSection,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CipherSection {
    pub vocab_size: usize,
    pub sentences: usize,
    pub dev_size: usize,
    pub min_len: usize,
    pub max_len: usize,
    pub branching: usize,
    pub zipf: f64,
    pub names: usize,
    pub reorder_prob: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PreprocessConfig {
    pub min_len: usize,
    pub max_len: usize,
    pub truecase: bool,
    /// Drop sentences the language identifier assigns to the other side.
    pub language_filter: bool,
    pub langid_order: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EmbedConfig {
    pub window: usize,
    pub dim: usize,
    pub negatives: usize,
    pub epochs: usize,
    pub initial_lr: f64,
    pub min_lr: f64,
    /// Vocabulary caps for unigrams, bigrams and trigrams.
    pub caps: [usize; 3],
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SeedMode {
    Identical,
    Numeral,
    Frequency,
    Structural,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MapSection {
    pub seed_dictionary: SeedMode,
    /// Pairs for the frequency and structural seeds.
    pub seed_size: usize,
    pub csls_k: usize,
    pub max_iters: usize,
    pub tol: f64,
    /// Restrict dictionary induction to unigrams.
    pub unigram_cutoff: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RetrievalMode {
    Nn,
    Csls,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TableSection {
    pub k: usize,
    pub temperature: f64,
    pub retrieval: RetrievalMode,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LmConfig {
    pub order: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DecodeConfig {
    pub beam: usize,
    /// Distortion limit after initialization; the initial system is monotone.
    pub distortion_limit: usize,
    pub max_options: usize,
    pub unk_cost: f64,
    /// Beam for the initial monotone system.
    pub initial_beam: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TuneConfig {
    pub rounds: usize,
    pub random_restarts: usize,
    pub random_directions: usize,
    pub min_gain: f64,
    pub nbest: usize,
    /// Tune the initial system on the authentic dev set.
    pub initial: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SymmetrizationMode {
    Intersection,
    Union,
    GrowDiagFinalAnd,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AlignConfig {
    pub iterations: usize,
    pub lambda: f64,
    pub p0: f64,
    pub symmetrization: SymmetrizationMode,
    pub max_phrase_len: usize,
    pub table_limit: usize,
    pub lexical: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TuneSetting {
    Off,
    Authentic,
    Synthetic,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BacktransConfig {
    pub iterations: usize,
    pub subset: usize,
    pub tune: TuneSetting,
    pub synthetic_dev_size: usize,
    pub divergence_delta: f64,
    /// Sentences per checkpointed chunk when translating the full corpus.
    pub chunk_size: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FixConfig {
    /// `0` disables the distance check.
    pub lev_threshold: usize,
    pub reorder_window: usize,
    pub delete_removed: bool,
    /// Characters marking untranslated source-language words; empty selects
    /// the Czech profile.
    pub diacritics: String,
    /// Alignment symmetrization used for NE projection.
    pub ne_symmetrization: SymmetrizationMode,
    /// NE policy table (TSV); the built-in table when unset.
    pub policy: Option<PathBuf>,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            version: CONFIG_VERSION,
            seed: 1,
            workspace: None,
            data: DataConfig::default(),
            preprocess: PreprocessConfig::default(),
            embed: EmbedConfig::default(),
            map: MapSection::default(),
            table: TableSection::default(),
            lm: LmConfig::default(),
            decode: DecodeConfig::default(),
            tune: TuneConfig::default(),
            align: AlignConfig::default(),
            backtranslate: BacktransConfig::default(),
            fix: FixConfig::default(),
        }
    }
}

impl Default for DataConfig {
    fn default() -> Self {
        DataConfig {
            source: DataSource::Files,
            mono_src: None,
            mono_tgt: None,
            dev_src: None,
            dev_tgt: None,
            ne_spans: None,
            cipher: CipherSection::default(),
        }
    }
}

impl Default for CipherSection {
    fn default() -> Self {
        let c = CipherConfig::default();
        CipherSection {
            vocab_size: c.vocab_size,
            sentences: c.sentences,
            dev_size: c.dev_size,
            min_len: c.min_len,
            max_len: c.max_len,
            branching: c.branching,
            zipf: c.zipf,
            names: c.names,
            reorder_prob: c.reorder_prob,
        }
    }
}

impl Default for PreprocessConfig {
    fn default() -> Self {
        let f = LengthFilter::default();
        PreprocessConfig {
            min_len: f.min_tokens,
            max_len: f.max_tokens,
            truecase: true,
            language_filter: true,
            langid_order: 3,
        }
    }
}

impl Default for EmbedConfig {
    fn default() -> Self {
        let s = SgnsConfig::paper(0);
        EmbedConfig {
            window: s.window,
            dim: s.dim,
            negatives: s.negatives,
            epochs: s.epochs,
            initial_lr: s.initial_lr,
            min_lr: s.min_lr,
            caps: [200_000, 400_000, 400_000],
        }
    }
}

impl Default for MapSection {
    fn default() -> Self {
        MapSection {
            seed_dictionary: SeedMode::Identical,
            seed_size: 100,
            csls_k: 10,
            max_iters: 50,
            tol: 1e-6,
            unigram_cutoff: true,
        }
    }
}

impl Default for TableSection {
    fn default() -> Self {
        TableSection {
            k: 100,
            temperature: 0.1,
            retrieval: RetrievalMode::Csls,
        }
    }
}

impl Default for LmConfig {
    fn default() -> Self {
        LmConfig { order: 5 }
    }
}

impl Default for DecodeConfig {
    fn default() -> Self {
        let p = DecoderParams::default();
        DecodeConfig {
            beam: p.beam_size,
            distortion_limit: p.distortion_limit.unwrap_or(0),
            max_options: p.max_options,
            unk_cost: p.unk_cost,
            initial_beam: p.beam_size,
        }
    }
}

impl Default for TuneConfig {
    fn default() -> Self {
        let m = MertConfig::default();
        TuneConfig {
            rounds: m.rounds,
            random_restarts: m.random_restarts,
            random_directions: m.random_directions,
            min_gain: m.min_gain,
            nbest: 100,
            initial: false,
        }
    }
}

impl Default for AlignConfig {
    fn default() -> Self {
        let a = AlignParams::default();
        let t = TableConfig::default();
        AlignConfig {
            iterations: a.iterations,
            lambda: a.lambda,
            p0: a.p0,
            symmetrization: SymmetrizationMode::GrowDiagFinalAnd,
            max_phrase_len: t.max_phrase_len,
            table_limit: t.table_limit,
            lexical: t.lexical,
        }
    }
}

impl Default for BacktransConfig {
    fn default() -> Self {
        let b = BtConfig::default();
        BacktransConfig {
            iterations: b.iterations,
            subset: b.subset_size,
            tune: TuneSetting::Synthetic,
            synthetic_dev_size: b.synthetic_dev_size,
            divergence_delta: b.divergence_delta,
            chunk_size: 10_000,
        }
    }
}

impl Default for FixConfig {
    fn default() -> Self {
        FixConfig {
            lev_threshold: 3,
            reorder_window: 5,
            delete_removed: false,
            diacritics: String::new(),
            ne_symmetrization: SymmetrizationMode::Intersection,
            policy: None,
        }
    }
}

impl PipelineConfig {
    /// Desk-scale preset for the generated cipher pair, sized to finish in
    /// minutes on one core.
    pub fn cipher_desk() -> Self {
        let mut c = PipelineConfig::default();
        c.data.source = DataSource::Cipher;
        c.preprocess.min_len = 1;
        c.preprocess.truecase = false;
        c.preprocess.language_filter = false;
        c.embed.dim = 32;
        c.embed.caps = [2000, 1000, 1000];
        c.map.seed_dictionary = SeedMode::Frequency;
        c.table.k = 10;
        c.decode.beam = 20;
        c.decode.initial_beam = 20;
        c.decode.max_options = 10;
        // The cipher has no reordering noise.
        c.decode.distortion_limit = 0;
        c.tune.nbest = 50;
        c.backtranslate.iterations = 2;
        c.backtranslate.subset = 5000;
        c.backtranslate.tune = TuneSetting::Authentic;
        c
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let c: PipelineConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        c.validate()?;
        Ok(c)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml(&text)
    }

    /// Canonical serialization; also what the manifest records.
    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(m.to_string()));
        if self.version != CONFIG_VERSION {
            return Err(Error::Config(format!(
                "unsupported config version {} (expected {CONFIG_VERSION})",
                self.version
            )));
        }
        if self.preprocess.min_len > self.preprocess.max_len {
            return bad("preprocess.min_len exceeds preprocess.max_len");
        }
        if self.embed.caps.contains(&0) {
            return bad("embed.caps must be positive");
        }
        if self.table.k == 0 || !(self.table.temperature > 0.0) {
            return bad("table.k and table.temperature must be positive");
        }
        if self.lm.order == 0 {
            return bad("lm.order must be positive");
        }
        if self.decode.beam == 0 || self.decode.initial_beam == 0 || self.decode.max_options == 0 {
            return bad("decoder beams and max_options must be positive");
        }
        if self.backtranslate.chunk_size == 0 {
            return bad("backtranslate.chunk_size must be positive");
        }
        if self.backtranslate.subset == 0 {
            return bad("backtranslate.subset must be positive");
        }
        if self.data.source == DataSource::Files && (self.data.mono_src.is_none() || self.data.mono_tgt.is_none()) {
            return bad("data.mono_src and data.mono_tgt are required when data.source = \"files\"");
        }
        self.sgns(0).validate()?;
        Ok(())
    }

    pub fn cipher(&self) -> CipherConfig {
        let c = &self.data.cipher;
        CipherConfig {
            vocab_size: c.vocab_size,
            sentences: c.sentences,
            dev_size: c.dev_size,
            min_len: c.min_len,
            max_len: c.max_len,
            branching: c.branching,
            zipf: c.zipf,
            names: c.names,
            reorder_prob: c.reorder_prob,
            seed: self.seed,
        }
    }

    pub fn length_filter(&self) -> LengthFilter {
        LengthFilter {
            min_tokens: self.preprocess.min_len,
            max_tokens: self.preprocess.max_len,
        }
    }

    pub fn sgns(&self, seed: u64) -> SgnsConfig {
        let e = &self.embed;
        SgnsConfig {
            window: e.window,
            dim: e.dim,
            negatives: e.negatives,
            epochs: e.epochs,
            initial_lr: e.initial_lr,
            min_lr: e.min_lr,
            seed,
        }
    }

    pub fn map_config(&self, unigrams: usize) -> MapConfig {
        MapConfig {
            max_iters: self.map.max_iters,
            tol: self.map.tol,
            inner: Retrieval::Nn,
            final_retrieval: Retrieval::Csls { k: self.map.csls_k },
            cutoff: self.map.unigram_cutoff.then_some(unigrams),
        }
    }

    pub fn table_retrieval(&self) -> Retrieval {
        match self.table.retrieval {
            RetrievalMode::Nn => Retrieval::Nn,
            RetrievalMode::Csls => Retrieval::Csls { k: self.map.csls_k },
        }
    }

    pub fn initial_params(&self) -> DecoderParams {
        DecoderParams {
            beam_size: self.decode.initial_beam,
            max_options: self.decode.max_options,
            unk_cost: self.decode.unk_cost,
            ..DecoderParams::monotone()
        }
    }

    pub fn decoder_params(&self) -> DecoderParams {
        DecoderParams {
            beam_size: self.decode.beam,
            distortion_limit: Some(self.decode.distortion_limit),
            nbest: 1,
            max_options: self.decode.max_options,
            unk_cost: self.decode.unk_cost,
        }
    }

    pub fn mert(&self, seed: u64) -> MertConfig {
        MertConfig {
            rounds: self.tune.rounds,
            random_restarts: self.tune.random_restarts,
            random_directions: self.tune.random_directions,
            min_gain: self.tune.min_gain,
            seed,
        }
    }

    pub fn table_config(&self) -> TableConfig {
        TableConfig {
            align: AlignParams {
                iterations: self.align.iterations,
                lambda: self.align.lambda,
                p0: self.align.p0,
            },
            symmetrization: self.align.symmetrization.into(),
            max_phrase_len: self.align.max_phrase_len,
            table_limit: self.align.table_limit,
            lexical: self.align.lexical,
        }
    }

    pub fn bt_config(&self, seed: u64) -> BtConfig {
        BtConfig {
            iterations: self.backtranslate.iterations,
            subset_size: self.backtranslate.subset,
            synthetic_dev_size: self.backtranslate.synthetic_dev_size,
            tune: match self.backtranslate.tune {
                TuneSetting::Off => TuneMode::Off,
                TuneSetting::Authentic => TuneMode::Authentic,
                TuneSetting::Synthetic => TuneMode::Synthetic,
            },
            mert: self.mert(seed),
            nbest: self.tune.nbest,
            params: self.decoder_params(),
            table: self.table_config(),
            divergence_delta: self.backtranslate.divergence_delta,
            seed,
        }
    }

    pub fn pretreat(&self) -> PretreatConfig {
        PretreatConfig {
            lev_threshold: (self.fix.lev_threshold > 0).then_some(self.fix.lev_threshold),
            delete_removed: self.fix.delete_removed,
            ..PretreatConfig::default()
        }
    }
}

impl From<SymmetrizationMode> for Symmetrization {
    fn from(m: SymmetrizationMode) -> Self {
        match m {
            SymmetrizationMode::Intersection => Symmetrization::Intersection,
            SymmetrizationMode::Union => Symmetrization::Union,
            SymmetrizationMode::GrowDiagFinalAnd => Symmetrization::GrowDiagFinalAnd,
        }
    }
}
