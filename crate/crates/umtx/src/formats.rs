//! Text formats for every artifact the pipeline reads or writes.
//!
//! Readers take any [`BufRead`] plus a name used in error messages; the
//! `*_file` helpers wrap paths. Floats are written in Rust's shortest
//! round-trip form, so write → read is exact.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use umtx_core::aligner::Alignment;
use umtx_core::decoder::{FeatureWeights, NBestEntry, FEATURE_NAMES, NUM_FEATURES};
use umtx_core::linalg::Matrix;
use umtx_core::lm::ArpaLM;
use umtx_core::mteval::BleuReport;
use umtx_core::phrasevec::{EmbeddingMatrix, PhraseEntry, PhraseVocab, MAX_ORDER};
use umtx_core::ptable::{PhraseCandidate, PhraseTable, TableProvenance};
use umtx_core::synthfix::{NePolicy, NeSpan, NeType, PostAction, PreAction};
use umtx_core::textproc::{LangIdModel, Sentence, TruecaseModel};
use umtx_core::FxMap;

use crate::error::{Error, Result};

pub fn open(path: &Path) -> Result<BufReader<File>> {
    File::open(path).map(BufReader::new).map_err(|e| Error::io(path, e))
}

pub fn create(path: &Path) -> Result<BufWriter<File>> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    File::create(path).map(BufWriter::new).map_err(|e| Error::io(path, e))
}

fn name_of(path: &Path) -> String {
    path.display().to_string()
}

fn wio(e: std::io::Error) -> Error {
    Error::Format(format!("write failed: {e}"))
}

/// Numbered lines (1-based), failing on IO errors.
fn lines<'a, R: BufRead + 'a>(r: R, src: &'a str) -> impl Iterator<Item = Result<(usize, String)>> + 'a {
    r.lines()
        .enumerate()
        .map(move |(i, l)| l.map(|l| (i + 1, l)).map_err(|e| Error::parse(src, i + 1, e.to_string())))
}

fn num<T: std::str::FromStr>(s: &str, src: &str, line: usize, what: &str) -> Result<T> {
    s.trim()
        .parse()
        .map_err(|_| Error::parse(src, line, format!("bad {what}: {s:?}")))
}

// ---- corpora ----

/// One whitespace-tokenized sentence per line.
pub fn read_corpus<R: BufRead>(r: R, src: &str) -> Result<Vec<Sentence>> {
    lines(r, src)
        .map(|l| {
            let (n, text) = l?;
            let toks: Vec<&str> = text.split_whitespace().collect();
            Ok(Sentence::new(toks.into_iter().map(String::from).collect(), n - 1))
        })
        .collect()
}

pub fn write_corpus<W: Write + ?Sized>(w: &mut W, corpus: &[Sentence]) -> Result<()> {
    for s in corpus {
        writeln!(w, "{}", s.join()).map_err(wio)?;
    }
    Ok(())
}

pub fn read_corpus_file(path: &Path) -> Result<Vec<Sentence>> {
    read_corpus(open(path)?, &name_of(path))
}

pub fn write_corpus_file(path: &Path, corpus: &[Sentence]) -> Result<()> {
    let mut w = create(path)?;
    write_corpus(&mut w, corpus)?;
    w.flush().map_err(|e| Error::io(path, e))
}

/// `src ||| tgt` lines.
pub fn read_bitext<R: BufRead>(r: R, src: &str) -> Result<(Vec<Sentence>, Vec<Sentence>)> {
    let mut a = Vec::new();
    let mut b = Vec::new();
    for l in lines(r, src) {
        let (n, text) = l?;
        let (s, t) = text
            .split_once(" ||| ")
            .ok_or_else(|| Error::parse(src, n, "expected \"src ||| tgt\""))?;
        a.push(Sentence::from_spaced(s));
        b.push(Sentence::from_spaced(t));
        a.last_mut().unwrap().line_index = n - 1;
        b.last_mut().unwrap().line_index = n - 1;
    }
    Ok((a, b))
}

pub fn write_bitext<W: Write + ?Sized>(w: &mut W, src: &[Sentence], tgt: &[Sentence]) -> Result<()> {
    if src.len() != tgt.len() {
        return Err(Error::Format("bitext sides differ in length".into()));
    }
    for (s, t) in src.iter().zip(tgt) {
        writeln!(w, "{} ||| {}", s.join(), t.join()).map_err(wio)?;
    }
    Ok(())
}

// ---- textproc models ----

const TRUECASE_HEADER: &str = "#umtx-truecase\tv1";
const LANGID_HEADER: &str = "#umtx-langid\tv1";

pub fn write_truecase<W: Write + ?Sized>(w: &mut W, m: &TruecaseModel) -> Result<()> {
    writeln!(w, "{TRUECASE_HEADER}").map_err(wio)?;
    for (casing, count) in m.entries.values() {
        writeln!(w, "{casing}\t{casing}\t{count}").map_err(wio)?;
    }
    Ok(())
}

/// Lines `word\tCasing\tcount`; the key is the lowercased first column.
pub fn read_truecase<R: BufRead>(r: R, src: &str) -> Result<TruecaseModel> {
    let mut m = TruecaseModel::default();
    for l in lines(r, src) {
        let (n, text) = l?;
        if n == 1 {
            if text != TRUECASE_HEADER {
                return Err(Error::parse(src, n, "missing truecase header"));
            }
            continue;
        }
        let cols: Vec<&str> = text.split('\t').collect();
        if cols.len() != 3 {
            return Err(Error::parse(src, n, "expected 3 tab-separated columns"));
        }
        let count = num(cols[2], src, n, "count")?;
        m.entries.insert(cols[0].to_lowercase(), (cols[1].to_string(), count));
    }
    Ok(m)
}

/// Header, then `#prior`/`#unseen` lines per label, then
/// `label\tngram\tlogprob` rows.
pub fn write_langid<W: Write + ?Sized>(w: &mut W, m: &LangIdModel) -> Result<()> {
    writeln!(w, "{LANGID_HEADER}\t{}", m.order).map_err(wio)?;
    for (i, label) in m.labels.iter().enumerate() {
        writeln!(w, "#prior\t{label}\t{}", m.log_priors[i]).map_err(wio)?;
        writeln!(w, "#unseen\t{label}\t{}", m.unseen[i]).map_err(wio)?;
    }
    for (i, label) in m.labels.iter().enumerate() {
        let mut rows: Vec<(&String, &f64)> = m.tables[i].iter().collect();
        rows.sort_by(|a, b| a.0.cmp(b.0));
        for (g, p) in rows {
            writeln!(w, "{label}\t{g}\t{p}").map_err(wio)?;
        }
    }
    Ok(())
}

pub fn read_langid<R: BufRead>(r: R, src: &str) -> Result<LangIdModel> {
    let mut order = 0;
    let mut labels: Vec<String> = Vec::new();
    let mut priors = Vec::new();
    let mut unseen = Vec::new();
    let mut tables: Vec<FxMap<String, f64>> = Vec::new();
    let index = |labels: &[String], l: &str, n: usize| {
        labels
            .iter()
            .position(|x| x == l)
            .ok_or_else(|| Error::parse(src, n, format!("unknown label {l:?}")))
    };
    for l in lines(r, src) {
        let (n, text) = l?;
        let cols: Vec<&str> = text.split('\t').collect();
        if n == 1 {
            if cols.len() != 3 || format!("{}\t{}", cols[0], cols[1]) != LANGID_HEADER {
                return Err(Error::parse(src, n, "missing langid header"));
            }
            order = num(cols[2], src, n, "order")?;
            continue;
        }
        if cols.len() != 3 {
            return Err(Error::parse(src, n, "expected 3 tab-separated columns"));
        }
        let v: f64 = num(cols[2], src, n, "log probability")?;
        match cols[0] {
            "#prior" => {
                labels.push(cols[1].to_string());
                priors.push(v);
                unseen.push(f64::NEG_INFINITY);
                tables.push(FxMap::default());
            }
            "#unseen" => unseen[index(&labels, cols[1], n)?] = v,
            label => {
                let i = index(&labels, label, n)?;
                tables[i].insert(cols[1].to_string(), v);
            }
        }
    }
    Ok(LangIdModel {
        order,
        labels,
        log_priors: priors,
        tables,
        unseen,
    })
}

// ---- phrase vocabulary and embeddings ----

pub fn write_phrase_vocab<W: Write + ?Sized>(w: &mut W, v: &PhraseVocab) -> Result<()> {
    writeln!(w, "#umtx-phrase-vocab\tv1\t{} {} {}", v.caps[0], v.caps[1], v.caps[2]).map_err(wio)?;
    for e in &v.entries {
        writeln!(w, "{}\t{}\t{}", e.phrase, e.order, e.frequency).map_err(wio)?;
    }
    Ok(())
}

pub fn read_phrase_vocab<R: BufRead>(r: R, src: &str) -> Result<PhraseVocab> {
    let mut caps = [0usize; MAX_ORDER];
    let mut entries = Vec::new();
    for l in lines(r, src) {
        let (n, text) = l?;
        let cols: Vec<&str> = text.split('\t').collect();
        if n == 1 {
            if cols.len() != 3 || cols[0] != "#umtx-phrase-vocab" {
                return Err(Error::parse(src, n, "missing phrase-vocab header"));
            }
            let cs: Vec<&str> = cols[2].split(' ').collect();
            if cs.len() != MAX_ORDER {
                return Err(Error::parse(src, n, "expected three caps"));
            }
            for (c, s) in caps.iter_mut().zip(cs) {
                *c = num(s, src, n, "cap")?;
            }
            continue;
        }
        if cols.len() != 3 {
            return Err(Error::parse(src, n, "expected 3 tab-separated columns"));
        }
        entries.push(PhraseEntry {
            phrase: cols[0].to_string(),
            order: num(cols[1], src, n, "order")?,
            frequency: num(cols[2], src, n, "frequency")?,
        });
    }
    Ok(PhraseVocab::from_entries(entries, caps)?)
}

/// Phrase labels with tokens joined by underscores.
pub fn word2vec_label(phrase: &str) -> String {
    phrase.replace(' ', "_")
}

/// Inverse of [`word2vec_label`] for tokens without underscores; underscores
/// at the edges or doubled stay literal.
pub fn phrase_from_word2vec(label: &str) -> String {
    let parts: Vec<&str> = label.split('_').collect();
    if parts.len() > 1 && parts.iter().all(|p| !p.is_empty()) {
        parts.join(" ")
    } else {
        label.to_string()
    }
}

pub fn write_word2vec<W: Write + ?Sized>(w: &mut W, m: &EmbeddingMatrix) -> Result<()> {
    writeln!(w, "{} {}", m.rows(), m.dim()).map_err(wio)?;
    for r in 0..m.rows() {
        write!(w, "{}", word2vec_label(&m.labels[r])).map_err(wio)?;
        for v in m.row(r) {
            write!(w, " {v}").map_err(wio)?;
        }
        writeln!(w).map_err(wio)?;
    }
    Ok(())
}

pub fn read_word2vec<R: BufRead>(r: R, src: &str) -> Result<EmbeddingMatrix> {
    let mut it = lines(r, src);
    let (n, header) = it.next().ok_or_else(|| Error::parse(src, 1, "empty file"))??;
    let hs: Vec<&str> = header.split_whitespace().collect();
    if hs.len() != 2 {
        return Err(Error::parse(src, n, "expected \"<count> <dim>\""));
    }
    let rows: usize = num(hs[0], src, n, "count")?;
    let dim: usize = num(hs[1], src, n, "dim")?;
    let mut labels = Vec::with_capacity(rows);
    let mut data = Vec::with_capacity(rows * dim);
    for l in it {
        let (n, text) = l?;
        let mut parts = text.split(' ');
        let label = parts.next().unwrap_or_default();
        let before = data.len();
        for p in parts {
            data.push(num::<f64>(p, src, n, "vector component")?);
        }
        if data.len() - before != dim {
            return Err(Error::parse(src, n, format!("expected {dim} components")));
        }
        labels.push(phrase_from_word2vec(label));
    }
    if labels.len() != rows {
        return Err(Error::parse(src, rows + 1, format!("expected {rows} rows, found {}", labels.len())));
    }
    Ok(EmbeddingMatrix::new(labels, Matrix::from_rows(rows, dim, data)))
}

pub fn write_dictionary<W: Write + ?Sized>(w: &mut W, pairs: &[(String, String)]) -> Result<()> {
    for (s, t) in pairs {
        writeln!(w, "{s}\t{t}").map_err(wio)?;
    }
    Ok(())
}

pub fn read_dictionary<R: BufRead>(r: R, src: &str) -> Result<Vec<(String, String)>> {
    lines(r, src)
        .map(|l| {
            let (n, text) = l?;
            let (s, t) = text
                .split_once('\t')
                .ok_or_else(|| Error::parse(src, n, "expected two tab-separated phrases"))?;
            Ok((s.to_string(), t.to_string()))
        })
        .collect()
}

// ---- language model ----

pub fn write_arpa<W: Write + ?Sized>(w: &mut W, lm: &ArpaLM) -> Result<()> {
    let entries = lm.entries();
    writeln!(w, "\n\\data\\").map_err(wio)?;
    for k in 1..=lm.order {
        writeln!(w, "ngram {k}={}", entries.iter().filter(|e| e.0.len() == k).count()).map_err(wio)?;
    }
    for k in 1..=lm.order {
        writeln!(w, "\n\\{k}-grams:").map_err(wio)?;
        for (words, p, bo) in entries.iter().filter(|e| e.0.len() == k) {
            if k < lm.order {
                writeln!(w, "{p}\t{}\t{bo}", words.join(" ")).map_err(wio)?;
            } else {
                writeln!(w, "{p}\t{}", words.join(" ")).map_err(wio)?;
            }
        }
    }
    writeln!(w, "\n\\end\\").map_err(wio)?;
    Ok(())
}

pub fn read_arpa<R: BufRead>(r: R, src: &str) -> Result<ArpaLM> {
    let mut counts: Vec<usize> = Vec::new();
    let mut entries = Vec::new();
    let mut section: Option<usize> = None;
    let mut in_data = false;
    let mut ended = false;
    for l in lines(r, src) {
        let (n, text) = l?;
        let t = text.trim();
        if t.is_empty() {
            continue;
        }
        if t == "\\data\\" {
            in_data = true;
            continue;
        }
        if t == "\\end\\" {
            ended = true;
            break;
        }
        if let Some(rest) = t.strip_prefix('\\').and_then(|x| x.strip_suffix("-grams:")) {
            section = Some(num(rest, src, n, "section order")?);
            in_data = false;
            continue;
        }
        if in_data {
            let rest = t
                .strip_prefix("ngram ")
                .ok_or_else(|| Error::parse(src, n, "expected \"ngram k=count\""))?;
            let (k, c) = rest
                .split_once('=')
                .ok_or_else(|| Error::parse(src, n, "expected \"ngram k=count\""))?;
            let k: usize = num(k, src, n, "order")?;
            if k != counts.len() + 1 {
                return Err(Error::parse(src, n, "ngram counts out of order"));
            }
            counts.push(num(c, src, n, "count")?);
            continue;
        }
        let k = section.ok_or_else(|| Error::parse(src, n, "entry outside an n-gram section"))?;
        let cols: Vec<&str> = text.split('\t').collect();
        if cols.len() < 2 || cols.len() > 3 {
            return Err(Error::parse(src, n, "expected \"logp\\tngram[\\tbackoff]\""));
        }
        let words: Vec<String> = cols[1].split(' ').map(String::from).collect();
        if words.len() != k {
            return Err(Error::parse(src, n, format!("expected a {k}-gram")));
        }
        let p = num(cols[0], src, n, "log probability")?;
        let bo = if cols.len() == 3 { num(cols[2], src, n, "backoff")? } else { 0.0 };
        entries.push((words, p, bo));
    }
    if !ended {
        return Err(Error::parse(src, 0, "missing \\end\\"));
    }
    for (k, &c) in counts.iter().enumerate() {
        let found = entries.iter().filter(|e| e.0.len() == k + 1).count();
        if found != c {
            return Err(Error::parse(src, 0, format!("header promises {c} {}-grams, found {found}", k + 1)));
        }
    }
    Ok(ArpaLM::from_entries(counts.len(), entries)?)
}

// ---- phrase tables ----

fn check_phrase(p: &str) -> Result<()> {
    if p.contains('|') || p.contains('\n') || p.is_empty() {
        return Err(Error::Format(format!("phrase {p:?} cannot be written to a phrase table")));
    }
    Ok(())
}

/// `src ||| tgt ||| p(t|s) p(s|t) [lex(t|s) lex(s|t)]`, source phrases in
/// order, candidates best first.
pub fn write_moses<W: Write + ?Sized>(w: &mut W, t: &PhraseTable) -> Result<()> {
    for (src, list) in &t.entries {
        check_phrase(src)?;
        for c in list {
            check_phrase(&c.target)?;
            write!(w, "{src} ||| {} ||| {} {}", c.target, c.forward, c.backward).map_err(wio)?;
            if let Some((lf, lb)) = c.lexical {
                write!(w, " {lf} {lb}").map_err(wio)?;
            }
            writeln!(w).map_err(wio)?;
        }
    }
    Ok(())
}

pub fn read_moses<R: BufRead>(r: R, src_name: &str, provenance: TableProvenance) -> Result<PhraseTable> {
    let mut table = PhraseTable::new(provenance);
    for l in lines(r, src_name) {
        let (n, text) = l?;
        let parts: Vec<&str> = text.split(" ||| ").collect();
        if parts.len() != 3 {
            return Err(Error::parse(src_name, n, "expected \"src ||| tgt ||| scores\""));
        }
        let scores: Vec<f64> = parts[2]
            .split_whitespace()
            .map(|s| num(s, src_name, n, "score"))
            .collect::<Result<_>>()?;
        if scores.len() != 2 && scores.len() != 4 {
            return Err(Error::parse(src_name, n, "expected 2 or 4 scores"));
        }
        if scores[..2].iter().any(|&p| !(p > 0.0 && p <= 1.0)) {
            return Err(Error::parse(src_name, n, "phrase probabilities must lie in (0, 1]"));
        }
        let list = table.entries.entry(parts[0].to_string()).or_default();
        list.push(PhraseCandidate {
            target: parts[1].to_string(),
            forward: scores[0],
            backward: scores[1],
            lexical: (scores.len() == 4).then(|| (scores[2], scores[3])),
        });
    }
    Ok(table)
}

// ---- alignments ----

pub fn pharaoh_line(a: &Alignment) -> String {
    a.links
        .iter()
        .map(|(s, t)| format!("{s}-{t}"))
        .collect::<Vec<_>>()
        .join(" ")
}

pub fn parse_pharaoh(line: &str, src: &str, n: usize) -> Result<Alignment> {
    line.split_whitespace()
        .map(|tok| {
            let (s, t) = tok
                .split_once('-')
                .ok_or_else(|| Error::parse(src, n, format!("bad link {tok:?}")))?;
            Ok((num(s, src, n, "link")?, num(t, src, n, "link")?))
        })
        .collect::<Result<Vec<_>>>()
        .map(Alignment::from_links)
}

pub fn write_pharaoh<W: Write + ?Sized>(w: &mut W, alignments: &[Alignment]) -> Result<()> {
    for a in alignments {
        writeln!(w, "{}", pharaoh_line(a)).map_err(wio)?;
    }
    Ok(())
}

pub fn read_pharaoh<R: BufRead>(r: R, src: &str) -> Result<Vec<Alignment>> {
    lines(r, src)
        .map(|l| {
            let (n, text) = l?;
            parse_pharaoh(&text, src, n)
        })
        .collect()
}

// ---- decoder artifacts ----

pub fn write_nbest<W: Write + ?Sized>(w: &mut W, lists: &[Vec<NBestEntry>]) -> Result<()> {
    for (i, list) in lists.iter().enumerate() {
        for e in list {
            let feats: Vec<String> = e.features.iter().map(|f| f.to_string()).collect();
            writeln!(w, "{i} ||| {} ||| {} ||| {}", e.text(), feats.join(" "), e.score).map_err(wio)?;
        }
    }
    Ok(())
}

/// Parsed n-best line: sentence id, tokens, features, score.
pub type NBestLine = (usize, Vec<String>, Vec<f64>, f64);

pub fn read_nbest<R: BufRead>(r: R, src: &str) -> Result<Vec<NBestLine>> {
    lines(r, src)
        .map(|l| {
            let (n, text) = l?;
            let parts: Vec<&str> = text.split(" ||| ").collect();
            if parts.len() != 4 {
                return Err(Error::parse(src, n, "expected 4 \" ||| \"-separated fields"));
            }
            let feats = parts[2]
                .split_whitespace()
                .map(|s| num(s, src, n, "feature"))
                .collect::<Result<Vec<f64>>>()?;
            Ok((
                num(parts[0], src, n, "sentence id")?,
                parts[1].split_whitespace().map(String::from).collect(),
                feats,
                num(parts[3], src, n, "score")?,
            ))
        })
        .collect()
}

pub fn write_weights<W: Write + ?Sized>(w: &mut W, weights: &FeatureWeights) -> Result<()> {
    for (name, v) in FEATURE_NAMES.iter().zip(weights.0) {
        writeln!(w, "{name}={v}").map_err(wio)?;
    }
    Ok(())
}

/// `name=value` lines; every feature must appear exactly once.
pub fn read_weights<R: BufRead>(r: R, src: &str) -> Result<FeatureWeights> {
    let mut vals: [Option<f64>; NUM_FEATURES] = [None; NUM_FEATURES];
    for l in lines(r, src) {
        let (n, text) = l?;
        let t = text.trim();
        if t.is_empty() || t.starts_with('#') {
            continue;
        }
        let (k, v) = t
            .split_once('=')
            .ok_or_else(|| Error::parse(src, n, "expected key=value"))?;
        let i = FEATURE_NAMES
            .iter()
            .position(|f| *f == k.trim())
            .ok_or_else(|| Error::parse(src, n, format!("unknown feature {k:?}")))?;
        if vals[i].replace(num(v, src, n, "weight")?).is_some() {
            return Err(Error::parse(src, n, format!("duplicate feature {k:?}")));
        }
    }
    let mut w = [0.0; NUM_FEATURES];
    for (i, v) in vals.iter().enumerate() {
        w[i] = v.ok_or_else(|| Error::parse(src, 0, format!("missing feature {}", FEATURE_NAMES[i])))?;
    }
    Ok(FeatureWeights::from_slice(&w)?)
}

// ---- synthfix artifacts ----

pub fn write_ne_spans<W: Write + ?Sized>(w: &mut W, spans: &[NeSpan]) -> Result<()> {
    for s in spans {
        writeln!(w, "{}\t{}\t{}\t{}\t{}", s.sentence, s.start, s.end, s.kind.name(), s.surface).map_err(wio)?;
    }
    Ok(())
}

pub fn read_ne_spans<R: BufRead>(r: R, src: &str) -> Result<Vec<NeSpan>> {
    lines(r, src)
        .map(|l| {
            let (n, text) = l?;
            let cols: Vec<&str> = text.splitn(5, '\t').collect();
            if cols.len() != 5 {
                return Err(Error::parse(src, n, "expected 5 tab-separated columns"));
            }
            let (start, end): (usize, usize) = (num(cols[1], src, n, "start")?, num(cols[2], src, n, "end")?);
            if start >= end {
                return Err(Error::parse(src, n, "empty span"));
            }
            Ok(NeSpan {
                sentence: num(cols[0], src, n, "sentence index")?,
                start,
                end,
                kind: NeType::parse(cols[3]).map_err(|e| Error::parse(src, n, e.to_string()))?,
                surface: cols[4].to_string(),
            })
        })
        .collect()
}

pub fn write_policy<W: Write + ?Sized>(w: &mut W, p: &NePolicy) -> Result<()> {
    writeln!(w, "#type\tpre_action\tpost_action").map_err(wio)?;
    for t in NeType::ALL {
        writeln!(w, "{}\t{}\t{}", t.name(), p.pre(t).name(), p.post(t).name()).map_err(wio)?;
    }
    Ok(())
}

/// All eight types must be listed.
pub fn read_policy<R: BufRead>(r: R, src: &str) -> Result<NePolicy> {
    let mut p = NePolicy::all_ignore();
    let mut seen = std::collections::BTreeSet::new();
    for l in lines(r, src) {
        let (n, text) = l?;
        if text.starts_with('#') || text.trim().is_empty() {
            continue;
        }
        let cols: Vec<&str> = text.split('\t').collect();
        if cols.len() != 3 {
            return Err(Error::parse(src, n, "expected type, pre_action, post_action"));
        }
        let e = |x: umtx_core::Error| Error::parse(src, n, x.to_string());
        let t = NeType::parse(cols[0]).map_err(e)?;
        p.set(t, PreAction::parse(cols[1]).map_err(e)?, PostAction::parse(cols[2]).map_err(e)?);
        seen.insert(t);
    }
    if seen.len() != NeType::ALL.len() {
        return Err(Error::parse(src, 0, "policy must list all eight NE types"));
    }
    Ok(p)
}

// ---- reports ----

/// `key=value` lines.
pub fn bleu_report_text(r: &BleuReport) -> String {
    let mut m = BTreeMap::new();
    m.insert("bleu", format!("{:.4}", r.bleu));
    for (i, p) in r.precisions.iter().enumerate() {
        m.insert(["p1", "p2", "p3", "p4"][i], format!("{p:.6}"));
    }
    m.insert("bp", format!("{:.6}", r.brevity_penalty));
    m.insert("hyp_len", r.hyp_len.to_string());
    m.insert("ref_len", r.ref_len.to_string());
    m.insert("cased", r.cased.to_string());
    m.insert("tokenizer", "umtx".to_string());
    m.iter().map(|(k, v)| format!("{k}={v}\n")).collect()
}
