//! Algorithms for unsupervised phrase-based machine translation.
//!
//! The crate is `no_std` (it needs `alloc`) and performs no IO. File formats,
//! pipeline orchestration and the command line live in the `umtx` crate.
//!
//! Stages, in pipeline order:
//!
//! * [`textproc`]: tokenization, truecasing, length and language filtering
//! * [`phrasevec`]: n-gram vocabulary and skip-gram phrase embeddings
//! * [`xmap`]: self-learning orthogonal mapping into a shared space
//! * [`ptable`]: unsupervised phrase-table induction and phrase extraction
//! * [`lm`]: interpolated Kneser-Ney n-gram language models
//! * [`aligner`]: fast_align-style IBM Model 2 and symmetrization
//! * [`decoder`]: phrase-based stack decoding and MERT
//! * [`backtrans`]: iterative back-translation and model selection
//! * [`synthfix`]: synthetic-corpus repair and output post-processing
//! * [`mteval`]: BLEU

#![no_std]
#![forbid(unsafe_code)]

extern crate alloc;

pub mod aligner;
pub mod backtrans;
pub mod cipher;
pub mod decoder;
mod error;
pub mod linalg;
pub mod lm;
pub mod mteval;
pub mod phrasevec;
pub mod ptable;
pub mod synthfix;
pub mod textproc;
pub mod vocab;
pub mod xmap;

pub use error::{Error, Result};

/// Hash map with a fixed hasher, so iteration order is reproducible run to run.
pub type FxMap<K, V> = hashbrown::HashMap<K, V, rustc_hash::FxBuildHasher>;
pub type FxSet<K> = hashbrown::HashSet<K, rustc_hash::FxBuildHasher>;
