//! OCR quality metrics: character error rate, word error rate and the
//! position-independent word error rate, plus micro-averaged corpus reports.
//!
//! Edits are counted as the operations that turn the hypothesis (OCR output)
//! into the reference (ground truth): an *insertion* is a reference token the
//! hypothesis lacks, a *deletion* is a surplus hypothesis token.

use std::collections::HashMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum MetricsError {
    #[error("reference text is empty but the hypothesis is not")]
    EmptyReference,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct EditCounts {
    pub insertions: usize,
    pub substitutions: usize,
    pub deletions: usize,
}

impl EditCounts {
    pub fn total(&self) -> usize {
        self.insertions + self.substitutions + self.deletions
    }
}

impl std::ops::Add for EditCounts {
    type Output = EditCounts;

    fn add(self, rhs: Self) -> Self {
        EditCounts {
            insertions: self.insertions + rhs.insertions,
            substitutions: self.substitutions + rhs.substitutions,
            deletions: self.deletions + rhs.deletions,
        }
    }
}

#[derive(Clone, Copy)]
enum Step {
    Match,
    Substitute,
    Insert,
    Delete,
}

/// Minimum unit-cost alignment between `reference` and `hypothesis`.
///
/// The forward pass keeps two rows of costs and one step code per cell. At
/// each cell a free match wins outright; otherwise ties are resolved in the
/// order substitution, insertion, deletion, which fixes the counts returned
/// by the backtrace.
pub fn edit_counts<T: PartialEq>(reference: &[T], hypothesis: &[T]) -> EditCounts {
    let (n, m) = (reference.len(), hypothesis.len());
    let cols = m + 1;
    let mut steps = vec![Step::Match; (n + 1) * cols];
    let mut prev: Vec<usize> = (0..=m).collect();
    let mut cur = vec![0usize; cols];
    steps[1..cols].fill(Step::Delete);
    for i in 1..=n {
        cur[0] = i;
        steps[i * cols] = Step::Insert;
        for j in 1..=m {
            let diag = prev[j - 1];
            let (cost, step) = if reference[i - 1] == hypothesis[j - 1] {
                (diag, Step::Match)
            } else {
                let mut best = (diag + 1, Step::Substitute);
                if prev[j] + 1 < best.0 {
                    best = (prev[j] + 1, Step::Insert);
                }
                if cur[j - 1] + 1 < best.0 {
                    best = (cur[j - 1] + 1, Step::Delete);
                }
                best
            };
            cur[j] = cost;
            steps[i * cols + j] = step;
        }
        std::mem::swap(&mut prev, &mut cur);
    }

    let mut counts = EditCounts::default();
    let (mut i, mut j) = (n, m);
    while i > 0 || j > 0 {
        match steps[i * cols + j] {
            Step::Match => {
                i -= 1;
                j -= 1;
            }
            Step::Substitute => {
                counts.substitutions += 1;
                i -= 1;
                j -= 1;
            }
            Step::Insert => {
                counts.insertions += 1;
                i -= 1;
            }
            Step::Delete => {
                counts.deletions += 1;
                j -= 1;
            }
        }
    }
    counts
}

/// Whitespace tokenization; punctuation stays attached and case is kept.
pub fn tokenize_words(text: &str) -> Vec<&str> {
    text.split_whitespace().collect()
}

fn ratio(errors: usize, n: usize, hyp_empty: bool) -> Result<f64, MetricsError> {
    match (n, hyp_empty) {
        (0, true) => Ok(0.0),
        (0, false) => Err(MetricsError::EmptyReference),
        _ => Ok(errors as f64 / n as f64),
    }
}

/// Character error rate over Unicode scalar values.
pub fn cer(reference: &str, hypothesis: &str) -> Result<f64, MetricsError> {
    let r: Vec<char> = reference.chars().collect();
    let h: Vec<char> = hypothesis.chars().collect();
    ratio(edit_counts(&r, &h).total(), r.len(), h.is_empty())
}

/// Word error rate; can exceed 1 when the hypothesis is much longer.
pub fn wer(reference: &str, hypothesis: &str) -> Result<f64, MetricsError> {
    let r = tokenize_words(reference);
    let h = tokenize_words(hypothesis);
    ratio(edit_counts(&r, &h).total(), r.len(), h.is_empty())
}

/// Bag-of-words error count: `max(|ref|, |hyp|) - matched`, where matched
/// sums `min(count_ref, count_hyp)` over distinct words.
pub fn position_independent_errors(reference: &[&str], hypothesis: &[&str]) -> usize {
    let mut bag: HashMap<&str, usize> = HashMap::new();
    for w in reference {
        *bag.entry(w).or_default() += 1;
    }
    let mut matched = 0;
    for w in hypothesis {
        if let Some(c) = bag.get_mut(w) {
            if *c > 0 {
                *c -= 1;
                matched += 1;
            }
        }
    }
    reference.len().max(hypothesis.len()) - matched
}

/// Position-independent word error rate.
pub fn per(reference: &str, hypothesis: &str) -> Result<f64, MetricsError> {
    let r = tokenize_words(reference);
    let h = tokenize_words(hypothesis);
    ratio(position_independent_errors(&r, &h), r.len(), h.is_empty())
}

/// Optional text normalisation applied to both sides before scoring. Off by
/// default; case and punctuation differences count as errors.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Normalization {
    pub lowercase: bool,
    pub strip_punctuation: bool,
}

impl Normalization {
    pub fn apply(&self, text: &str) -> String {
        let mut out: String = if self.strip_punctuation {
            text.chars().filter(|c| !c.is_ascii_punctuation() && !is_unicode_punct(*c)).collect()
        } else {
            text.to_owned()
        };
        if self.lowercase {
            out = out.to_lowercase();
        }
        out
    }

    pub fn is_identity(&self) -> bool {
        !self.lowercase && !self.strip_punctuation
    }
}

fn is_unicode_punct(c: char) -> bool {
    matches!(c, '\u{2010}'..='\u{2027}' | '\u{2030}'..='\u{205E}' | '\u{3000}'..='\u{303F}')
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalResult {
    pub char_edits: EditCounts,
    pub char_count: usize,
    pub word_edits: EditCounts,
    pub word_count: usize,
    pub per_errors: usize,
    pub cer: f64,
    pub wer: f64,
    pub per: f64,
}

/// Score one hypothesis against its reference at both granularities.
pub fn evaluate_pair(reference: &str, hypothesis: &str) -> Result<EvalResult, MetricsError> {
    let rc: Vec<char> = reference.chars().collect();
    let hc: Vec<char> = hypothesis.chars().collect();
    let rw = tokenize_words(reference);
    let hw = tokenize_words(hypothesis);
    let char_edits = edit_counts(&rc, &hc);
    let word_edits = edit_counts(&rw, &hw);
    let per_errors = position_independent_errors(&rw, &hw);
    Ok(EvalResult {
        cer: ratio(char_edits.total(), rc.len(), hc.is_empty())?,
        wer: ratio(word_edits.total(), rw.len(), hw.is_empty())?,
        per: ratio(per_errors, rw.len(), hw.is_empty())?,
        char_edits,
        char_count: rc.len(),
        word_edits,
        word_count: rw.len(),
        per_errors,
    })
}

pub fn evaluate_pair_with(
    reference: &str,
    hypothesis: &str,
    norm: &Normalization,
) -> Result<EvalResult, MetricsError> {
    if norm.is_identity() {
        evaluate_pair(reference, hypothesis)
    } else {
        evaluate_pair(&norm.apply(reference), &norm.apply(hypothesis))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DocumentEval {
    pub id: String,
    #[serde(flatten)]
    pub outcome: DocumentOutcome,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DocumentOutcome {
    Scored(EvalResult),
    Error(String),
}

/// Per-document results plus micro averages (summed edits over summed
/// reference lengths). Averages are `None` when their denominator is zero.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorpusReport {
    pub documents: Vec<DocumentEval>,
    pub document_count: usize,
    pub char_edits: EditCounts,
    pub char_count: usize,
    pub word_edits: EditCounts,
    pub word_count: usize,
    pub per_errors: usize,
    pub cer: Option<f64>,
    pub wer: Option<f64>,
    pub per: Option<f64>,
}

impl CorpusReport {
    pub fn from_documents(documents: Vec<DocumentEval>) -> Self {
        let mut char_edits = EditCounts::default();
        let mut word_edits = EditCounts::default();
        let (mut char_count, mut word_count, mut per_errors) = (0, 0, 0);
        for doc in &documents {
            if let DocumentOutcome::Scored(r) = &doc.outcome {
                char_edits = char_edits + r.char_edits;
                word_edits = word_edits + r.word_edits;
                char_count += r.char_count;
                word_count += r.word_count;
                per_errors += r.per_errors;
            }
        }
        let avg = |e: usize, n: usize| (n > 0).then(|| e as f64 / n as f64);
        CorpusReport {
            document_count: documents.len(),
            cer: avg(char_edits.total(), char_count),
            wer: avg(word_edits.total(), word_count),
            per: avg(per_errors, word_count),
            documents,
            char_edits,
            char_count,
            word_edits,
            word_count,
            per_errors,
        }
    }

    pub fn failures(&self) -> impl Iterator<Item = &DocumentEval> {
        self.documents.iter().filter(|d| matches!(d.outcome, DocumentOutcome::Error(_)))
    }
}

/// Evaluate `(id, reference, hypothesis)` triples in parallel. A bad document
/// is reported in place and does not abort the corpus.
pub fn evaluate_corpus<S: AsRef<str> + Sync>(pairs: &[(S, S, S)], norm: &Normalization) -> CorpusReport {
    let documents = pairs
        .par_iter()
        .map(|(id, r, h)| DocumentEval {
            id: id.as_ref().to_owned(),
            outcome: match evaluate_pair_with(r.as_ref(), h.as_ref(), norm) {
                Ok(res) => DocumentOutcome::Scored(res),
                Err(e) => DocumentOutcome::Error(e.to_string()),
            },
        })
        .collect();
    CorpusReport::from_documents(documents)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn chars(s: &str) -> Vec<char> {
        s.chars().collect()
    }

    // Plain recursion over suffixes, independent of the table-based version.
    fn naive_distance(a: &[char], b: &[char]) -> usize {
        match (a.split_first(), b.split_first()) {
            (None, _) => b.len(),
            (_, None) => a.len(),
            (Some((x, ra)), Some((y, rb))) => {
                if x == y {
                    naive_distance(ra, rb)
                } else {
                    1 + naive_distance(ra, rb).min(naive_distance(a, rb)).min(naive_distance(ra, b))
                }
            }
        }
    }

    #[test]
    fn edit_count_examples() {
        assert_eq!(edit_counts(&chars("abc"), &chars("abc")), EditCounts::default());
        assert_eq!(
            edit_counts(&chars("abc"), &chars("axc")),
            EditCounts { insertions: 0, substitutions: 1, deletions: 0 }
        );
        assert_eq!(naive_distance(&chars("abc"), &chars("axc")), 1);
        assert_eq!(
            edit_counts(&tokenize_words("the cat sat"), &tokenize_words("the cat")),
            EditCounts { insertions: 1, substitutions: 0, deletions: 0 }
        );
        assert_eq!(
            edit_counts(&chars("ab"), &chars("abxy")),
            EditCounts { insertions: 0, substitutions: 0, deletions: 2 }
        );
    }

    #[test]
    fn tie_prefers_substitution() {
        // "ab" vs "ba": two substitutions or one insertion + one deletion,
        // both cost 2; the substitution path is taken.
        assert_eq!(
            edit_counts(&chars("ab"), &chars("ba")),
            EditCounts { insertions: 0, substitutions: 2, deletions: 0 }
        );
    }

    #[test]
    fn cer_examples() {
        assert_eq!(cer("abc", "abc").unwrap(), 0.0);
        assert_eq!(cer("abc", "axc").unwrap(), 1.0 / 3.0);
        assert_eq!(cer("abc", "").unwrap(), 1.0);
        assert_eq!(cer("", "").unwrap(), 0.0);
        assert_eq!(cer("", "x"), Err(MetricsError::EmptyReference));
        // case and punctuation count
        assert_eq!(cer("Abc.", "abc").unwrap(), 0.5);
    }

    #[test]
    fn tokenize_examples() {
        assert_eq!(tokenize_words("Hello, world"), vec!["Hello,", "world"]);
        assert!(tokenize_words("").is_empty());
        assert_eq!(tokenize_words("a\n b\tc"), vec!["a", "b", "c"]);
    }

    #[test]
    fn wer_examples() {
        assert_eq!(wer("the cat sat", "the cat sat").unwrap(), 0.0);
        assert_eq!(wer("the cat sat", "").unwrap(), 1.0);
        assert_eq!(wer("a b", "b a").unwrap(), 1.0);
        assert_eq!(wer("a", "a b c d").unwrap(), 3.0);
        assert_eq!(wer("  ", "x"), Err(MetricsError::EmptyReference));
    }

    #[test]
    fn per_examples() {
        assert_eq!(per("a b", "b a").unwrap(), 0.0);
        assert_eq!(per("a b c", "a b").unwrap(), 1.0 / 3.0);
        assert_eq!(per("a", "a a a").unwrap(), 2.0);
        // disjoint texts: PER equals WER
        assert_eq!(per("a b", "c d e").unwrap(), wer("a b", "c d e").unwrap());
    }

    #[test]
    fn evaluate_pair_examples() {
        let same = evaluate_pair("Hello there", "Hello there").unwrap();
        assert_eq!((same.cer, same.wer, same.per), (0.0, 0.0, 0.0));

        let r = evaluate_pair("ab cd", "ab").unwrap();
        assert_eq!(r.cer, 3.0 / 5.0);
        assert_eq!(r.char_edits.total(), naive_distance(&chars("ab cd"), &chars("ab")));
        assert_eq!(r.wer, 0.5);
        assert_eq!(r.per, 0.5);
        assert_eq!((r.char_count, r.word_count), (5, 2));

        assert_eq!(evaluate_pair("", "x"), Err(MetricsError::EmptyReference));
    }

    #[test]
    fn normalization_toggle() {
        let n = Normalization { lowercase: true, strip_punctuation: true };
        assert_eq!(n.apply("Hello, World!"), "hello world");
        let r = evaluate_pair_with("Hello, World!", "hello world", &n).unwrap();
        assert_eq!(r.cer, 0.0);
        let strict = evaluate_pair_with("Hello, World!", "hello world", &Normalization::default()).unwrap();
        assert!(strict.cer > 0.0);
    }

    #[test]
    fn corpus_examples() {
        let one = evaluate_corpus(&[("d1", "abc", "axc")], &Normalization::default());
        assert_eq!(one.document_count, 1);
        assert_eq!(one.cer, Some(1.0 / 3.0));

        let two = evaluate_corpus(&[("a", "abcd", "abcd"), ("b", "wxyz", "")], &Normalization::default());
        assert_eq!(two.cer, Some(0.5));

        let empty: [(&str, &str, &str); 0] = [];
        let none = evaluate_corpus(&empty, &Normalization::default());
        assert_eq!(none.document_count, 0);
        assert_eq!((none.cer, none.wer, none.per), (None, None, None));

        let with_bad = evaluate_corpus(&[("ok", "a b", "a b"), ("bad", "", "junk")], &Normalization::default());
        assert_eq!(with_bad.document_count, 2);
        assert_eq!(with_bad.failures().count(), 1);
        assert_eq!(with_bad.wer, Some(0.0));
    }

    #[test]
    fn corpus_report_serializes_outcomes() {
        let report = evaluate_corpus(&[("x", "", "y")], &Normalization::default());
        let json = serde_json::to_value(&report).unwrap();
        assert_eq!(json["documents"][0]["id"], "x");
        assert!(json["documents"][0]["error"].is_string());
        assert!(json["cer"].is_null());
    }

    fn small_text() -> impl Strategy<Value = String> {
        proptest::collection::vec(prop_oneof!["a", "b", "c", " ", "ab", "\n"], 0..10).prop_map(|v| v.concat())
    }

    proptest! {
        #[test]
        fn total_matches_recursive_oracle(a in "[abc]{0,8}", b in "[abc]{0,8}") {
            let (a, b) = (chars(&a), chars(&b));
            prop_assert_eq!(edit_counts(&a, &b).total(), naive_distance(&a, &b));
        }

        #[test]
        fn swapping_sides_swaps_insertions_and_deletions(a in "[abcd]{0,12}", b in "[abcd]{0,12}") {
            let (a, b) = (chars(&a), chars(&b));
            let fwd = edit_counts(&a, &b);
            let back = edit_counts(&b, &a);
            prop_assert_eq!(fwd.total(), back.total());
            // sizes fix the insert/delete imbalance
            prop_assert_eq!(fwd.insertions as i64 - fwd.deletions as i64, a.len() as i64 - b.len() as i64);
            prop_assert_eq!(back.insertions as i64 - back.deletions as i64, b.len() as i64 - a.len() as i64);
        }

        #[test]
        fn triangle_inequality(a in "[ab]{0,8}", b in "[ab]{0,8}", c in "[ab]{0,8}") {
            let (a, b, c) = (chars(&a), chars(&b), chars(&c));
            prop_assert!(edit_counts(&a, &c).total() <= edit_counts(&a, &b).total() + edit_counts(&b, &c).total());
        }

        #[test]
        fn per_never_exceeds_wer(r in small_text(), h in small_text()) {
            if let (Ok(p), Ok(w)) = (per(&r, &h), wer(&r, &h)) {
                prop_assert!(p <= w);
            }
        }

        #[test]
        fn corpus_micro_average_is_count_ratio(
            docs in proptest::collection::vec(("[a-c ]{1,10}", "[a-c ]{0,10}"), 1..6)
        ) {
            let triples: Vec<(String, String, String)> = docs
                .iter()
                .enumerate()
                .map(|(i, (r, h))| (i.to_string(), r.clone(), h.clone()))
                .collect();
            let report = evaluate_corpus(&triples, &Normalization::default());
            let (mut e, mut n) = (0, 0);
            for d in &report.documents {
                if let DocumentOutcome::Scored(r) = &d.outcome {
                    e += r.char_edits.total();
                    n += r.char_count;
                }
            }
            prop_assert_eq!(report.cer, (n > 0).then(|| e as f64 / n as f64));
        }
    }
}
