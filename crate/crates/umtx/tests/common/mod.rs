#![allow(dead_code)]

use std::collections::BTreeMap;
use std::path::Path;

use umtx::config::PipelineConfig;

/// A cipher run small enough to finish in seconds.
pub const TINY: &str = r#"
seed = 3
[data]
source = "cipher"
[data.cipher]
vocab_size = 40
sentences = 1500
dev_size = 80
names = 5
[preprocess]
min_len = 1
truecase = false
language_filter = false
[embed]
dim = 16
caps = [200, 200, 200]
[map]
seed_dictionary = "frequency"
seed_size = 20
[table]
k = 5
[lm]
order = 3
[decode]
beam = 10
initial_beam = 10
distortion_limit = 2
max_options = 5
[tune]
rounds = 3
random_restarts = 3
nbest = 10
[backtranslate]
iterations = 1
subset = 500
tune = "authentic"
chunk_size = 600
"#;

pub fn tiny() -> PipelineConfig {
    PipelineConfig::from_toml(TINY).unwrap()
}

/// Every file under `root` except the wall-clock log, keyed by relative
/// path.
pub fn snapshot(root: &Path) -> BTreeMap<String, Vec<u8>> {
    let mut out = BTreeMap::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(dir) = stack.pop() {
        for e in std::fs::read_dir(&dir).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
                continue;
            }
            let rel = p.strip_prefix(root).unwrap().to_string_lossy().replace('\\', "/");
            if rel == umtx::manifest::TIMINGS_FILE {
                continue;
            }
            out.insert(rel, std::fs::read(&p).unwrap());
        }
    }
    out
}
