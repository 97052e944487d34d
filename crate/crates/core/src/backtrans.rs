//! Iterative back-translation: each direction's system translates its
//! source-language monolingual data, and the synthetic pairs train the
//! opposite direction.

use alloc::string::String;
use alloc::vec::Vec;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::aligner::{AlignParams, Alignment, BidirectionalAligner, Symmetrization};
use crate::decoder::mert::{mert_tune, Candidate, MertConfig};
use crate::decoder::{decode, DecoderParams, FeatureWeights, NBestList};
use crate::lm::ArpaLM;
use crate::mteval::corpus_bleu;
use crate::ptable::{extract_corpus, score_extracted, LexicalTable, PhraseTable};
use crate::textproc::Sentence;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Direction {
    AtoB,
    BtoA,
}

impl Direction {
    pub fn reverse(self) -> Direction {
        match self {
            Direction::AtoB => Direction::BtoA,
            Direction::BtoA => Direction::AtoB,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Direction::AtoB => "a2b",
            Direction::BtoA => "b2a",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Provenance {
    Initial,
    Iteration(usize),
}

/// Everything needed to decode, except the target-side LM.
#[derive(Debug, Clone, PartialEq)]
pub struct System {
    pub direction: Direction,
    pub table: PhraseTable,
    pub weights: FeatureWeights,
    pub params: DecoderParams,
    pub provenance: Provenance,
}

/// Decodes a batch of sentences. The default implementation is sequential;
/// callers may plug in a parallel one. Results must not depend on the
/// implementation.
pub trait BatchDecoder {
    fn decode_batch(
        &self,
        src: &[Sentence],
        table: &PhraseTable,
        lm: &ArpaLM,
        w: &FeatureWeights,
        params: &DecoderParams,
    ) -> Vec<Result<NBestList>>;
}

#[derive(Debug, Clone, Copy, Default)]
pub struct Sequential;

impl BatchDecoder for Sequential {
    fn decode_batch(
        &self,
        src: &[Sentence],
        table: &PhraseTable,
        lm: &ArpaLM,
        w: &FeatureWeights,
        params: &DecoderParams,
    ) -> Vec<Result<NBestList>> {
        src.iter().map(|s| decode(&s.tokens, table, lm, w, params)).collect()
    }
}

/// Best translations; a sentence the decoder fails on is copied verbatim.
/// Returns the output and the number of such failures.
pub fn translate_corpus<D: BatchDecoder>(
    dec: &D,
    system: &System,
    lm: &ArpaLM,
    corpus: &[Sentence],
) -> (Vec<Sentence>, usize) {
    let params = DecoderParams {
        nbest: 1,
        ..system.params
    };
    let mut failures = 0;
    let out = dec
        .decode_batch(corpus, &system.table, lm, &system.weights, &params)
        .into_iter()
        .zip(corpus)
        .map(|(r, s)| match r {
            Ok(list) if !list.is_empty() => Sentence::new(list[0].tokens.clone(), s.line_index),
            _ => {
                failures += 1;
                s.clone()
            }
        })
        .collect();
    (out, failures)
}

/// Uncased corpus BLEU of the system on a parallel dev set.
pub fn evaluate<D: BatchDecoder>(
    dec: &D,
    system: &System,
    lm: &ArpaLM,
    dev_src: &[Sentence],
    dev_ref: &[Sentence],
) -> Result<f64> {
    let (hyps, _) = translate_corpus(dec, system, lm, dev_src);
    let h: Vec<&Vec<String>> = hyps.iter().map(|s| &s.tokens).collect();
    let r: Vec<&Vec<String>> = dev_ref.iter().map(|s| &s.tokens).collect();
    Ok(corpus_bleu(&h, &r, false)?.bleu)
}

/// MERT on a dev set; returns the tuned weights and the accepted pool-BLEU
/// trace.
pub fn tune<D: BatchDecoder>(
    dec: &D,
    system: &System,
    lm: &ArpaLM,
    dev_src: &[Sentence],
    dev_ref: &[Sentence],
    mert: &MertConfig,
    nbest: usize,
) -> Result<(FeatureWeights, Vec<f64>)> {
    if dev_src.len() != dev_ref.len() {
        return Err(Error::LengthMismatch {
            what: "dev source vs reference",
            left: dev_src.len(),
            right: dev_ref.len(),
        });
    }
    let refs: Vec<Vec<String>> = dev_ref.iter().map(|s| s.tokens.clone()).collect();
    let params = DecoderParams {
        nbest,
        ..system.params
    };
    let outcome = mert_tune(&refs, &system.weights.0, mert, |w| {
        let fw = FeatureWeights::from_slice(w)?;
        dec.decode_batch(dev_src, &system.table, lm, &fw, &params)
            .into_iter()
            .map(|r| {
                r.map(|list| {
                    list.into_iter()
                        .map(|e| (e.tokens, e.features.to_vec()))
                        .collect::<Vec<Candidate>>()
                })
            })
            .collect()
    })?;
    Ok((FeatureWeights::from_slice(&outcome.weights)?, outcome.trace))
}

/// Seeded uniform sample without replacement, kept in corpus order.
pub fn sample_subset(corpus: &[Sentence], n: usize, seed: u64) -> Result<Vec<Sentence>> {
    if n > corpus.len() {
        return Err(Error::invalid("subset larger than the corpus"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut idx = rand::seq::index::sample(&mut rng, corpus.len(), n).into_vec();
    idx.sort_unstable();
    Ok(idx.into_iter().map(|i| corpus[i].clone()).collect())
}

#[derive(Debug, Clone, PartialEq)]
pub struct TableConfig {
    pub align: AlignParams,
    pub symmetrization: Symmetrization,
    pub max_phrase_len: usize,
    /// Candidates kept per source phrase.
    pub table_limit: usize,
    pub lexical: bool,
}

impl Default for TableConfig {
    fn default() -> Self {
        TableConfig {
            align: AlignParams::default(),
            symmetrization: Symmetrization::GrowDiagFinalAnd,
            max_phrase_len: 3,
            table_limit: 20,
            lexical: true,
        }
    }
}

/// Word-aligns a (source, target) bitext, extracts phrase pairs and scores
/// them.
pub fn train_table(src: &[Sentence], tgt: &[Sentence], cfg: &TableConfig) -> Result<(PhraseTable, Vec<Alignment>)> {
    if src.len() != tgt.len() {
        return Err(Error::LengthMismatch {
            what: "bitext sides",
            left: src.len(),
            right: tgt.len(),
        });
    }
    let bitext: Vec<(Sentence, Sentence)> = src.iter().cloned().zip(tgt.iter().cloned()).collect();
    let aligner = BidirectionalAligner::train(&bitext, cfg.align)?;
    let alignments: Vec<Alignment> = bitext
        .iter()
        .map(|(s, t)| aligner.align(s, t, cfg.symmetrization))
        .collect();
    let lex = if cfg.lexical {
        Some(LexicalTable::build(&bitext, &alignments)?)
    } else {
        None
    };
    let pairs = extract_corpus(&bitext, &alignments, cfg.max_phrase_len, lex.as_ref())?;
    let mut table = score_extracted(&pairs, cfg.lexical)?;
    table.prune(cfg.table_limit);
    Ok((table, alignments))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TuneMode {
    Off,
    /// Tune on the authentic dev set.
    Authentic,
    /// Tune on back-translated held-out monolingual sentences.
    Synthetic,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BtConfig {
    pub iterations: usize,
    pub subset_size: usize,
    /// Held-out monolingual sentences per side for synthetic tuning.
    pub synthetic_dev_size: usize,
    pub tune: TuneMode,
    pub mert: MertConfig,
    pub nbest: usize,
    /// Decoder settings for systems trained on synthetic data.
    pub params: DecoderParams,
    pub table: TableConfig,
    /// Halt after two consecutive dev-BLEU drops larger than this.
    pub divergence_delta: f64,
    pub seed: u64,
}

impl Default for BtConfig {
    fn default() -> Self {
        BtConfig {
            iterations: 3,
            subset_size: 10_000,
            synthetic_dev_size: 500,
            tune: TuneMode::Off,
            mert: MertConfig::default(),
            nbest: 50,
            params: DecoderParams::default(),
            table: TableConfig::default(),
            divergence_delta: 3.0,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct IterationRecord {
    pub iteration: usize,
    pub direction: Direction,
    pub synthetic_size: usize,
    pub translation_failures: usize,
    pub dev_bleu: f64,
    pub system: System,
}

/// Monolingual data and LM for one language, plus its side of the dev set.
pub struct Side<'a> {
    pub mono: &'a [Sentence],
    pub lm: &'a ArpaLM,
    pub dev: &'a [Sentence],
}

/// Trains the reverse of `current` from `current`'s translations of
/// `subset`. `from` is the language `current` translates out of, `to` the
/// one it translates into. Tuning data, when used, is given as (source,
/// reference) for the new system.
#[allow(clippy::too_many_arguments)]
pub fn run_bt_iteration<D: BatchDecoder>(
    dec: &D,
    current: &System,
    from: &Side,
    to: &Side,
    subset: &[Sentence],
    tuning: Option<(&[Sentence], &[Sentence])>,
    iteration: usize,
    cfg: &BtConfig,
) -> Result<IterationRecord> {
    if subset.is_empty() {
        return Err(Error::Empty("back-translation subset"));
    }
    let (synthetic, failures) = translate_corpus(dec, current, to.lm, subset);
    let (table, _) = train_table(&synthetic, subset, &cfg.table)?;
    let mut system = System {
        direction: current.direction.reverse(),
        table,
        weights: current.weights,
        params: cfg.params,
        provenance: Provenance::Iteration(iteration),
    };
    if let Some((dev_src, dev_ref)) = tuning {
        let mert = MertConfig {
            seed: cfg.mert.seed ^ (iteration as u64) << 8 ^ system.direction as u64,
            ..cfg.mert
        };
        system.weights = tune(dec, &system, from.lm, dev_src, dev_ref, &mert, cfg.nbest)?.0;
    }
    let dev_bleu = evaluate(dec, &system, from.lm, to.dev, from.dev)?;
    Ok(IterationRecord {
        iteration,
        direction: system.direction,
        synthetic_size: synthetic.len(),
        translation_failures: failures,
        dev_bleu,
        system,
    })
}

/// Highest dev BLEU; ties go to the earlier record.
pub fn select_best(records: &[IterationRecord]) -> Result<&IterationRecord> {
    let mut best: Option<&IterationRecord> = None;
    for r in records {
        if best.is_none_or(|b| r.dev_bleu > b.dev_bleu) {
            best = Some(r);
        }
    }
    best.ok_or(Error::Empty("iteration records"))
}

/// Tracks consecutive large drops in dev BLEU for one direction.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DivergenceGuard {
    pub delta: f64,
    last: Option<f64>,
    strikes: usize,
}

impl DivergenceGuard {
    pub fn new(delta: f64) -> Self {
        DivergenceGuard {
            delta,
            last: None,
            strikes: 0,
        }
    }

    /// Feeds the next BLEU; true once two consecutive drops exceed `delta`.
    pub fn observe(&mut self, bleu: f64) -> bool {
        if let Some(prev) = self.last {
            if prev - bleu > self.delta {
                self.strikes += 1;
            } else {
                self.strikes = 0;
            }
        }
        self.last = Some(bleu);
        self.strikes >= 2
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BtOutcome {
    /// Initial systems first, then both directions per iteration.
    pub records: Vec<IterationRecord>,
    pub halted_early: bool,
}

fn held_out<'s>(mono: &'s [Sentence], n: usize) -> (&'s [Sentence], &'s [Sentence]) {
    let n = n.min(mono.len() / 2);
    mono.split_at(mono.len() - n)
}

/// Records the initial systems and runs `cfg.iterations` rounds, each
/// producing a new system for both directions.
pub fn run_backtranslation<D: BatchDecoder>(
    dec: &D,
    initial_ab: System,
    initial_ba: System,
    a: &Side,
    b: &Side,
    cfg: &BtConfig,
) -> Result<BtOutcome> {
    if initial_ab.direction != Direction::AtoB || initial_ba.direction != Direction::BtoA {
        return Err(Error::invalid("initial systems must cover a2b and b2a"));
    }
    let synth_n = if cfg.tune == TuneMode::Synthetic { cfg.synthetic_dev_size } else { 0 };
    let (pool_a, held_a) = held_out(a.mono, synth_n);
    let (pool_b, held_b) = held_out(b.mono, synth_n);
    let mut records = Vec::new();
    let mut guards = [DivergenceGuard::new(cfg.divergence_delta); 2];
    for sys in [&initial_ab, &initial_ba] {
        let (src, tgt) = if sys.direction == Direction::AtoB { (a, b) } else { (b, a) };
        let bleu = evaluate(dec, sys, tgt.lm, src.dev, tgt.dev)?;
        guards[sys.direction as usize].observe(bleu);
        records.push(IterationRecord {
            iteration: 0,
            direction: sys.direction,
            synthetic_size: 0,
            translation_failures: 0,
            dev_bleu: bleu,
            system: sys.clone(),
        });
    }
    let mut ab = initial_ab;
    let mut ba = initial_ba;
    let mut halted = false;
    for it in 1..=cfg.iterations {
        let seed = cfg.seed.wrapping_add(it as u64);
        let subset_a = sample_subset(pool_a, cfg.subset_size.min(pool_a.len()), seed)?;
        let subset_b = sample_subset(pool_b, cfg.subset_size.min(pool_b.len()), seed ^ 0x5bd1e995)?;
        // New b2a from ab's output on A, new a2b from ba's output on B.
        let synth_for_ba;
        let synth_for_ab;
        let tuning_ba = match cfg.tune {
            TuneMode::Off => None,
            TuneMode::Authentic => Some((b.dev, a.dev)),
            TuneMode::Synthetic => {
                synth_for_ba = translate_corpus(dec, &ab, b.lm, held_a).0;
                Some((&synth_for_ba[..], held_a))
            }
        };
        let tuning_ab = match cfg.tune {
            TuneMode::Off => None,
            TuneMode::Authentic => Some((a.dev, b.dev)),
            TuneMode::Synthetic => {
                synth_for_ab = translate_corpus(dec, &ba, a.lm, held_b).0;
                Some((&synth_for_ab[..], held_b))
            }
        };
        let new_ba = run_bt_iteration(dec, &ab, a, b, &subset_a, tuning_ba, it, cfg)?;
        let new_ab = run_bt_iteration(dec, &ba, b, a, &subset_b, tuning_ab, it, cfg)?;
        let stop_ab = guards[Direction::AtoB as usize].observe(new_ab.dev_bleu);
        let stop_ba = guards[Direction::BtoA as usize].observe(new_ba.dev_bleu);
        ab = new_ab.system.clone();
        ba = new_ba.system.clone();
        records.push(new_ab);
        records.push(new_ba);
        if stop_ab || stop_ba {
            halted = it < cfg.iterations;
            break;
        }
    }
    Ok(BtOutcome {
        records,
        halted_early: halted,
    })
}
