//! Sentence-parallel decoding.

use rayon::prelude::*;
use rayon::ThreadPool;
use umtx_core::backtrans::BatchDecoder;
use umtx_core::decoder::{decode, DecoderParams, FeatureWeights, NBestList};
use umtx_core::lm::ArpaLM;
use umtx_core::ptable::PhraseTable;
use umtx_core::textproc::Sentence;
use umtx_core::Result;

/// Decodes sentences on a dedicated rayon pool. Output order and content do
/// not depend on the worker count.
pub struct ParallelDecoder {
    pool: ThreadPool,
}

impl ParallelDecoder {
    /// `workers == 0` uses one thread per core.
    pub fn new(workers: usize) -> std::result::Result<Self, rayon::ThreadPoolBuildError> {
        let pool = rayon::ThreadPoolBuilder::new().num_threads(workers).build()?;
        Ok(ParallelDecoder { pool })
    }

    pub fn workers(&self) -> usize {
        self.pool.current_num_threads()
    }

    /// Runs `f` inside the decoder's pool.
    pub fn install<R: Send>(&self, f: impl FnOnce() -> R + Send) -> R {
        self.pool.install(f)
    }
}

impl BatchDecoder for ParallelDecoder {
    fn decode_batch(
        &self,
        src: &[Sentence],
        table: &PhraseTable,
        lm: &ArpaLM,
        w: &FeatureWeights,
        params: &DecoderParams,
    ) -> Vec<Result<NBestList>> {
        self.pool.install(|| {
            src.par_iter()
                .map(|s| decode(&s.tokens, table, lm, w, params))
                .collect()
        })
    }
}
