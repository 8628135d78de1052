//! Labeled bag-of-words corpora and their line-oriented text format.
//!
//! A corpus file holds one document per line:
//!
//! ```text
//! <label>\t<id>:<count> <id>:<count> ...
//! ```
//!
//! where `<label>` is `0`, `1` or `?` (unlabeled). Term strings live in a
//! separate vocabulary file with one term per line; the line number is the id.
//! Trailing whitespace is ignored, every other deviation is an error.

use std::collections::HashMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};

/// Ordered set of distinct terms; a term's id is its position.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Vocabulary {
    terms: Vec<String>,
    index: HashMap<String, usize>,
}

impl Vocabulary {
    pub fn new(terms: Vec<String>) -> Result<Self> {
        if terms.is_empty() {
            return Err(Error::invalid("empty vocabulary"));
        }
        let mut index = HashMap::with_capacity(terms.len());
        for (id, term) in terms.iter().enumerate() {
            if term.is_empty() {
                return Err(Error::invalid(format!("empty term at id {id}")));
            }
            if index.insert(term.clone(), id).is_some() {
                return Err(Error::invalid(format!("duplicate term {term:?}")));
            }
        }
        Ok(Self { terms, index })
    }

    /// Vocabulary of placeholder terms `w0 .. w{size-1}`.
    pub fn synthetic(size: usize) -> Result<Self> {
        Self::new((0..size).map(|i| format!("w{i}")).collect())
    }

    pub fn len(&self) -> usize {
        self.terms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn term(&self, id: usize) -> Option<&str> {
        self.terms.get(id).map(String::as_str)
    }

    pub fn id(&self, term: &str) -> Option<usize> {
        self.index.get(term).copied()
    }

    pub fn terms(&self) -> &[String] {
        &self.terms
    }
}

/// Sparse count histogram with an optional binary label.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Document {
    entries: Vec<(usize, u32)>,
    label: Option<bool>,
    token_total: u64,
}

impl Document {
    /// Builds a document from `(term id, count)` pairs in any order.
    /// Zero counts and repeated ids are rejected.
    pub fn new(mut entries: Vec<(usize, u32)>, label: Option<bool>) -> Result<Self> {
        entries.sort_unstable_by_key(|&(id, _)| id);
        for pair in entries.windows(2) {
            if pair[0].0 == pair[1].0 {
                return Err(Error::invalid(format!("duplicate term id {}", pair[0].0)));
            }
        }
        if let Some(&(id, _)) = entries.iter().find(|&&(_, c)| c == 0) {
            return Err(Error::invalid(format!("count for term id {id} must be positive")));
        }
        let token_total = entries.iter().map(|&(_, c)| u64::from(c)).sum();
        Ok(Self {
            entries,
            label,
            token_total,
        })
    }

    /// Builds a document from a list of token ids, counting repeats.
    pub fn from_tokens(tokens: &[usize], label: Option<bool>) -> Self {
        let mut counts: HashMap<usize, u32> = HashMap::new();
        for &t in tokens {
            *counts.entry(t).or_default() += 1;
        }
        Self::new(counts.into_iter().collect(), label).expect("counts are positive and unique")
    }

    /// `(term id, count)` pairs sorted by id.
    pub fn entries(&self) -> &[(usize, u32)] {
        &self.entries
    }

    pub fn label(&self) -> Option<bool> {
        self.label
    }

    pub fn set_label(&mut self, label: Option<bool>) {
        self.label = label;
    }

    pub fn token_total(&self) -> u64 {
        self.token_total
    }

    /// Number of distinct terms.
    pub fn nnz(&self) -> usize {
        self.entries.len()
    }

    pub fn max_id(&self) -> Option<usize> {
        self.entries.last().map(|&(id, _)| id)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Corpus {
    vocabulary: Vocabulary,
    documents: Vec<Document>,
}

impl Corpus {
    pub fn new(vocabulary: Vocabulary, documents: Vec<Document>) -> Result<Self> {
        let v = vocabulary.len();
        for (d, doc) in documents.iter().enumerate() {
            if let Some(id) = doc.max_id().filter(|&id| id >= v) {
                return Err(Error::invalid(format!(
                    "document {d}: term id {id} out of range for vocabulary of size {v}"
                )));
            }
        }
        Ok(Self {
            vocabulary,
            documents,
        })
    }

    pub fn vocabulary(&self) -> &Vocabulary {
        &self.vocabulary
    }

    pub fn vocab_size(&self) -> usize {
        self.vocabulary.len()
    }

    pub fn documents(&self) -> &[Document] {
        &self.documents
    }

    pub fn len(&self) -> usize {
        self.documents.len()
    }

    pub fn is_empty(&self) -> bool {
        self.documents.is_empty()
    }

    pub fn is_fully_labeled(&self) -> bool {
        self.documents.iter().all(|d| d.label.is_some())
    }

    /// Labels as 0/1 values; errors if any document is unlabeled.
    pub fn labels(&self) -> Result<Vec<bool>> {
        self.documents
            .iter()
            .enumerate()
            .map(|(d, doc)| {
                doc.label
                    .ok_or_else(|| Error::invalid(format!("document {d} has no label")))
            })
            .collect()
    }

    /// New corpus over the same vocabulary holding the documents at `indices`.
    pub fn subset(&self, indices: &[usize]) -> Corpus {
        Corpus {
            vocabulary: self.vocabulary.clone(),
            documents: indices.iter().map(|&i| self.documents[i].clone()).collect(),
        }
    }
}

/// Parses a vocabulary file: one term per line, trailing whitespace ignored.
pub fn parse_vocabulary(text: &str) -> Result<Vocabulary> {
    let mut terms = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let term = raw.trim_end();
        if term.is_empty() {
            return Err(Error::parse(i + 1, "empty term"));
        }
        terms.push(term.to_owned());
    }
    if terms.is_empty() {
        return Err(Error::Format("empty vocabulary".into()));
    }
    let mut seen = HashMap::with_capacity(terms.len());
    for (i, term) in terms.iter().enumerate() {
        if let Some(first) = seen.insert(term.as_str(), i) {
            return Err(Error::parse(
                i + 1,
                format!("duplicate term {term:?} (first on line {})", first + 1),
            ));
        }
    }
    Vocabulary::new(terms)
}

fn parse_label(field: &str, line: usize) -> Result<Option<bool>> {
    match field {
        "0" => Ok(Some(false)),
        "1" => Ok(Some(true)),
        "?" => Ok(None),
        other => Err(Error::parse(line, format!("label must be 0, 1 or ?, got {other:?}"))),
    }
}

/// Parses a single corpus line against a vocabulary of `vocab_size` terms.
pub fn parse_document_line(raw: &str, vocab_size: usize, line: usize) -> Result<Document> {
    let text = raw.trim_end();
    if text.is_empty() {
        return Err(Error::parse(line, "blank line"));
    }
    let (label_field, rest) = match text.split_once('\t') {
        Some((l, r)) => (l, Some(r)),
        None => (text, None),
    };
    let label = parse_label(label_field, line)?;
    let mut entries = Vec::new();
    if let Some(rest) = rest {
        for pair in rest.split(' ') {
            let (id_s, count_s) = pair
                .split_once(':')
                .ok_or_else(|| Error::parse(line, format!("expected <id>:<count>, got {pair:?}")))?;
            let id: usize = id_s
                .parse()
                .map_err(|_| Error::parse(line, format!("invalid term id {id_s:?}")))?;
            if id >= vocab_size {
                return Err(Error::parse(
                    line,
                    format!("term id {id} out of range for vocabulary of size {vocab_size}"),
                ));
            }
            let count: i64 = count_s
                .parse()
                .map_err(|_| Error::parse(line, format!("invalid count {count_s:?}")))?;
            if count <= 0 {
                return Err(Error::parse(line, format!("count must be positive, got {count}")));
            }
            let count = u32::try_from(count)
                .map_err(|_| Error::parse(line, format!("count {count} too large")))?;
            entries.push((id, count));
        }
    }
    Document::new(entries, label).map_err(|e| Error::parse(line, e.to_string()))
}

/// Parses the documents of a corpus file.
pub fn parse_documents(text: &str, vocab_size: usize) -> Result<Vec<Document>> {
    let docs = text
        .lines()
        .enumerate()
        .map(|(i, raw)| parse_document_line(raw, vocab_size, i + 1))
        .collect::<Result<Vec<_>>>()?;
    if docs.is_empty() {
        return Err(Error::Format("no documents".into()));
    }
    Ok(docs)
}

pub fn parse_corpus(text: &str, vocabulary: Vocabulary) -> Result<Corpus> {
    let docs = parse_documents(text, vocabulary.len())?;
    Corpus::new(vocabulary, docs)
}

fn read(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

fn with_path(path: &Path, err: Error) -> Error {
    match err {
        Error::Parse { line, msg } => Error::Format(format!("{}:{line}: {msg}", path.display())),
        Error::Format(msg) => Error::Format(format!("{}: {msg}", path.display())),
        other => other,
    }
}

pub fn load_vocabulary(path: impl AsRef<Path>) -> Result<Vocabulary> {
    let path = path.as_ref();
    parse_vocabulary(&read(path)?).map_err(|e| with_path(path, e))
}

/// Vocabulary file conventionally stored next to a corpus file.
pub fn sibling_vocabulary_path(corpus_path: &Path) -> PathBuf {
    corpus_path
        .parent()
        .unwrap_or_else(|| Path::new("."))
        .join("vocab.txt")
}

/// Loads a corpus whose vocabulary is `vocab.txt` in the same directory.
pub fn load_corpus(path: impl AsRef<Path>) -> Result<Corpus> {
    let path = path.as_ref();
    load_corpus_with_vocabulary(path, sibling_vocabulary_path(path))
}

pub fn load_corpus_with_vocabulary(
    path: impl AsRef<Path>,
    vocab_path: impl AsRef<Path>,
) -> Result<Corpus> {
    let vocabulary = load_vocabulary(vocab_path)?;
    let path = path.as_ref();
    parse_corpus(&read(path)?, vocabulary).map_err(|e| with_path(path, e))
}

pub fn format_document(doc: &Document) -> String {
    let mut out = String::new();
    out.push(match doc.label {
        Some(true) => '1',
        Some(false) => '0',
        None => '?',
    });
    out.push('\t');
    for (i, &(id, count)) in doc.entries.iter().enumerate() {
        if i > 0 {
            out.push(' ');
        }
        let _ = write!(out, "{id}:{count}");
    }
    out
}

pub fn format_corpus(corpus: &Corpus) -> String {
    let mut out = String::new();
    for doc in &corpus.documents {
        out.push_str(&format_document(doc));
        out.push('\n');
    }
    out
}

/// Writes the document lines of `corpus`; the vocabulary is written separately.
pub fn write_corpus(corpus: &Corpus, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, format_corpus(corpus)).map_err(|e| Error::io(path, e))
}

pub fn write_vocabulary(vocabulary: &Vocabulary, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut out = String::new();
    for term in &vocabulary.terms {
        out.push_str(term);
        out.push('\n');
    }
    fs::write(path, out).map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn vocab(n: usize) -> Vocabulary {
        Vocabulary::synthetic(n).unwrap()
    }

    #[test]
    fn parses_labeled_line() {
        let c = parse_corpus("1\t0:3 5:1\n", vocab(6)).unwrap();
        assert_eq!(c.len(), 1);
        let d = &c.documents()[0];
        assert_eq!(d.entries(), &[(0, 3), (5, 1)]);
        assert_eq!(d.label(), Some(true));
        assert_eq!(d.token_total(), 4);
    }

    #[test]
    fn empty_file_has_no_documents() {
        let err = parse_corpus("", vocab(3)).unwrap_err();
        assert!(err.to_string().contains("no documents"));
    }

    #[test]
    fn errors_report_line_numbers() {
        let err = parse_corpus("1\t0:1\n0\t7:2\n", vocab(6)).unwrap_err();
        assert!(matches!(err, Error::Parse { line: 2, .. }), "{err}");
        let err = parse_corpus("1\t0:0\n", vocab(6)).unwrap_err();
        assert!(matches!(err, Error::Parse { line: 1, .. }));
        let err = parse_corpus("1\t0:-2\n", vocab(6)).unwrap_err();
        assert!(err.to_string().contains("positive"));
        let err = parse_corpus("2\t0:1\n", vocab(6)).unwrap_err();
        assert!(err.to_string().contains("label"));
    }

    #[test]
    fn rejects_repairs() {
        for bad in [
            "1\t0:1  1:1\n",
            "1 0:1\n",
            " 1\t0:1\n",
            "1\t0:1\n\n1\t1:1\n",
            "1\t0:1 0:2\n",
            "1\t0-1\n",
        ] {
            assert!(parse_corpus(bad, vocab(3)).is_err(), "{bad:?} accepted");
        }
    }

    #[test]
    fn trailing_whitespace_is_ignored() {
        let c = parse_corpus("0\t1:2 2:1  \t\r\n?\t0:1\n", vocab(3)).unwrap();
        assert_eq!(c.documents()[0].token_total(), 3);
        assert_eq!(c.documents()[1].label(), None);
    }

    #[test]
    fn unlabeled_document_uses_sentinel() {
        let doc = Document::new(vec![(2, 1), (0, 4)], None).unwrap();
        assert_eq!(format_document(&doc), "?\t0:4 2:1");
    }

    #[test]
    fn two_documents_keep_order() {
        let v = vocab(4);
        let docs = vec![
            Document::new(vec![(3, 1)], Some(true)).unwrap(),
            Document::new(vec![(1, 2)], Some(false)).unwrap(),
        ];
        let c = Corpus::new(v, docs).unwrap();
        assert_eq!(format_corpus(&c), "1\t3:1\n0\t1:2\n");
    }

    #[test]
    fn file_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let v = vocab(5);
        let docs = vec![
            Document::new(vec![(4, 2), (0, 1)], Some(false)).unwrap(),
            Document::new(vec![(2, 9)], None).unwrap(),
        ];
        let c = Corpus::new(v, docs).unwrap();
        write_vocabulary(c.vocabulary(), dir.path().join("vocab.txt")).unwrap();
        write_corpus(&c, dir.path().join("train.txt")).unwrap();
        let back = load_corpus(dir.path().join("train.txt")).unwrap();
        assert_eq!(back, c);
    }

    #[test]
    fn vocabulary_rejects_duplicates_and_blanks() {
        assert!(parse_vocabulary("a\nb\na\n").is_err());
        assert!(parse_vocabulary("a\n\nb\n").is_err());
        assert!(parse_vocabulary("").is_err());
        let v = parse_vocabulary("alpha \nbeta\n").unwrap();
        assert_eq!(v.id("alpha"), Some(0));
        assert_eq!(v.term(1), Some("beta"));
    }

    #[test]
    fn missing_vocabulary_is_io_error() {
        let dir = tempfile::tempdir().unwrap();
        fs::write(dir.path().join("c.txt"), "1\t0:1\n").unwrap();
        assert!(matches!(load_corpus(dir.path().join("c.txt")), Err(Error::Io { .. })));
    }

    proptest::proptest! {
        #[test]
        fn formatted_corpus_parses_back(
            docs in proptest::collection::vec(
                (
                    proptest::collection::btree_map(0usize..20, 1u32..1000, 1..8),
                    proptest::option::of(proptest::bool::ANY),
                ),
                1..10,
            ),
        ) {
            let docs: Vec<Document> = docs
                .into_iter()
                .map(|(m, y)| Document::new(m.into_iter().collect(), y).unwrap())
                .collect();
            let c = Corpus::new(vocab(20), docs).unwrap();
            let back = parse_corpus(&format_corpus(&c), vocab(20)).unwrap();
            proptest::prop_assert_eq!(back, c);
        }

        #[test]
        fn vocabulary_round_trips(terms in proptest::collection::btree_set("[a-z][a-z0-9_]{0,6}", 1..20)) {
            let text: String = terms.iter().map(|t| format!("{t}\n")).collect();
            let v = parse_vocabulary(&text).unwrap();
            proptest::prop_assert_eq!(v.len(), terms.len());
            for (i, t) in terms.iter().enumerate() {
                proptest::prop_assert_eq!(v.id(t), Some(i));
            }
        }

        #[test]
        fn parser_never_panics(text in "[0-9?\t: \n-]{0,60}") {
            let _ = parse_corpus(&text, vocab(5));
        }
    }
}

