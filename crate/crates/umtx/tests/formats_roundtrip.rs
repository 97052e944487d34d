use std::io::Cursor;

use proptest::prelude::*;
use umtx::formats::*;
use umtx_core::aligner::Alignment;
use umtx_core::decoder::{FeatureWeights, NUM_FEATURES};
use umtx_core::linalg::Matrix;
use umtx_core::lm::{count_ngrams, estimate_kn, score_sentence};
use umtx_core::phrasevec::{build_phrase_vocab, EmbeddingMatrix};
use umtx_core::ptable::{PhraseCandidate, PhraseTable, TableProvenance};
use umtx_core::synthfix::{NePolicy, NeSpan, NeType, PostAction, PreAction};
use umtx_core::textproc::Sentence;

fn bytes(f: impl FnOnce(&mut Vec<u8>)) -> Vec<u8> {
    let mut v = Vec::new();
    f(&mut v);
    v
}

fn corpus(lines: &[&str]) -> Vec<Sentence> {
    lines.iter().map(|l| Sentence::from_spaced(l)).collect()
}

#[test]
fn arpa_round_trip_is_exact() {
    let c = corpus(&["a b c a", "b c d", "c a b b a", "d d a", "a"]);
    for order in 1..=4 {
        let (lm, _) = estimate_kn(&count_ngrams(&c, order).unwrap()).unwrap();
        let text = bytes(|w| write_arpa(w, &lm).unwrap());
        let back = read_arpa(Cursor::new(&text), "mem").unwrap();
        let mut a = lm.entries();
        let mut b = back.entries();
        a.sort_by(|x, y| x.0.cmp(&y.0));
        b.sort_by(|x, y| x.0.cmp(&y.0));
        // bit-for-bit, not approximately
        assert_eq!(a.len(), b.len());
        for (x, y) in a.iter().zip(&b) {
            assert_eq!(x.0, y.0);
            assert_eq!(x.1.to_bits(), y.1.to_bits());
            assert_eq!(x.2.to_bits(), y.2.to_bits());
        }
        assert_eq!(bytes(|w| write_arpa(w, &back).unwrap()), text);
        for s in &c {
            assert_eq!(score_sentence(&lm, s).to_bits(), score_sentence(&back, s).to_bits());
        }
    }
}

#[test]
fn arpa_rejects_broken_files() {
    let (lm, _) = estimate_kn(&count_ngrams(&corpus(&["a b"]), 2).unwrap()).unwrap();
    let text = String::from_utf8(bytes(|w| write_arpa(w, &lm).unwrap())).unwrap();
    assert!(read_arpa(Cursor::new(text.replace("\\end\\", "")), "x").is_err());
    assert!(read_arpa(Cursor::new(text.replace("ngram 1=", "ngram 1=9")), "x").is_err());
}

fn phrase() -> impl Strategy<Value = String> {
    prop::collection::vec("[a-zá-ž]{1,5}", 1..4).prop_map(|v| v.join(" "))
}

proptest! {
    #[test]
    fn moses_round_trip(
        rows in prop::collection::btree_map(phrase(), prop::collection::btree_map(phrase(), (1e-12f64..=1.0, 1e-12f64..=1.0), 1..4), 1..6),
        lexical in any::<bool>(),
    ) {
        let mut t = PhraseTable::new(TableProvenance::Extracted);
        for (s, cands) in &rows {
            for (tgt, &(f, b)) in cands {
                t.insert(s.clone(), PhraseCandidate {
                    target: tgt.clone(),
                    forward: f,
                    backward: b,
                    lexical: lexical.then_some((f / 2.0, b / 3.0)),
                });
            }
        }
        let text = bytes(|w| write_moses(w, &t).unwrap());
        let back = read_moses(Cursor::new(&text), "mem", TableProvenance::Extracted).unwrap();
        prop_assert_eq!(back, t);
    }

    #[test]
    fn weights_round_trip(v in prop::collection::vec(-10.0f64..10.0, NUM_FEATURES)) {
        let w = FeatureWeights::from_slice(&v).unwrap();
        let text = bytes(|o| write_weights(o, &w).unwrap());
        prop_assert_eq!(read_weights(Cursor::new(&text), "mem").unwrap(), w);
    }

    #[test]
    fn pharaoh_round_trip(links in prop::collection::vec(prop::collection::btree_set((0usize..30, 0usize..30), 0..10), 1..5)) {
        let als: Vec<Alignment> = links.into_iter().map(Alignment::from_links).collect();
        let text = bytes(|w| write_pharaoh(w, &als).unwrap());
        prop_assert_eq!(read_pharaoh(Cursor::new(&text), "mem").unwrap(), als);
    }
}

#[test]
fn moses_rejects_bad_probabilities_with_line_numbers() {
    let err = read_moses(Cursor::new("a ||| b ||| 0.5 0.5\nc ||| d ||| 0 1\n"), "t.moses", TableProvenance::Extracted)
        .unwrap_err()
        .to_string();
    assert!(err.starts_with("t.moses:2:"), "{err}");
}

#[test]
fn corpus_bitext_and_vectors_round_trip() {
    let c = corpus(&["ahoj světe", "", "x y z"]);
    let text = bytes(|w| write_corpus(w, &c).unwrap());
    let back = read_corpus(Cursor::new(&text), "mem").unwrap();
    assert_eq!(back.iter().map(|s| &s.tokens).collect::<Vec<_>>(), c.iter().map(|s| &s.tokens).collect::<Vec<_>>());

    let d = corpus(&["a", "b", "c"]);
    let text = bytes(|w| write_bitext(w, &c, &d).unwrap());
    let (s, t) = read_bitext(Cursor::new(&text), "mem").unwrap();
    assert_eq!(s.len(), 3);
    assert_eq!(t[2].tokens, vec!["c"]);

    let vocab = build_phrase_vocab(&corpus(&["a b c", "a b"]), [10, 10, 10]).unwrap();
    let text = bytes(|w| write_phrase_vocab(w, &vocab).unwrap());
    assert_eq!(read_phrase_vocab(Cursor::new(&text), "mem").unwrap(), vocab);

    let m = EmbeddingMatrix::new(
        vec!["a".into(), "a b".into()],
        Matrix::from_rows(2, 3, vec![0.1, -2.5e-7, 3.0, 1.0 / 3.0, 0.0, -1.0]),
    );
    let text = bytes(|w| write_word2vec(w, &m).unwrap());
    let back = read_word2vec(Cursor::new(&text), "mem").unwrap();
    assert_eq!(back.labels, m.labels);
    assert_eq!(back.vectors, m.vectors);
}

#[test]
fn ne_tables_round_trip() {
    let spans = vec![
        NeSpan { sentence: 0, start: 1, end: 3, kind: NeType::Personal, surface: "Werner Söllner".into() },
        NeSpan { sentence: 4, start: 0, end: 1, kind: NeType::Geographical, surface: "Brno".into() },
    ];
    let text = bytes(|w| write_ne_spans(w, &spans).unwrap());
    assert_eq!(read_ne_spans(Cursor::new(&text), "mem").unwrap(), spans);

    let mut p = NePolicy::default();
    p.set(NeType::Media, PreAction::Remove, PostAction::Copy);
    let text = bytes(|w| write_policy(w, &p).unwrap());
    assert_eq!(read_policy(Cursor::new(&text), "mem").unwrap(), p);
}
