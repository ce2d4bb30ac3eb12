//! Embedding store, QA and corpus JSON-lines files, and candidate pooling.
//!
//! Embedding store layout (little-endian):
//!
//! ```text
//! "SRSE" | u32 version = 1 | u32 dim | u64 count
//! count × dim f32, row-major
//! count × (u16 byte length, UTF-8 id)
//! ```
//!
//! Query vectors are stored under the QA example id; document vectors under
//! the document id.

use std::collections::{HashMap, HashSet};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fsutil::{put_f32s, read_file, write_atomic, ByteReader};
use crate::numcore::SeededRng;

pub const STORE_MAGIC: &[u8; 4] = b"SRSE";
pub const STORE_VERSION: u32 = 1;

/// Id-indexed table of fixed-dimension vectors.
///
/// Values are rounded to `f32` on insertion so an in-memory store is always
/// identical to its serialized form.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingStore {
    dim: usize,
    ids: Vec<String>,
    index: HashMap<String, usize>,
    data: Vec<f64>,
}

impl EmbeddingStore {
    pub fn new(dim: usize) -> Self {
        Self {
            dim,
            ids: Vec::new(),
            index: HashMap::new(),
            data: Vec::new(),
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn ids(&self) -> &[String] {
        &self.ids
    }

    pub fn push(&mut self, id: impl Into<String>, vector: &[f64]) -> Result<()> {
        let id = id.into();
        if vector.len() != self.dim {
            return Err(Error::Shape(format!(
                "vector for {id} has dim {}, store has dim {}",
                vector.len(),
                self.dim
            )));
        }
        if !vector.iter().all(|x| x.is_finite() && (*x as f32).is_finite()) {
            return Err(Error::Data(format!("vector for {id} has non-finite values")));
        }
        if id.len() > u16::MAX as usize {
            return Err(Error::Data(format!("id longer than {} bytes", u16::MAX)));
        }
        if self.index.contains_key(&id) {
            return Err(Error::Data(format!("duplicate id {id}")));
        }
        self.index.insert(id.clone(), self.ids.len());
        self.ids.push(id);
        self.data.extend(vector.iter().map(|&x| x as f32 as f64));
        Ok(())
    }

    pub fn get(&self, id: &str) -> Option<&[f64]> {
        self.index.get(id).map(|&i| self.row(i))
    }

    /// Like [`get`](Self::get) but reports the missing id as a data error.
    pub fn require(&self, id: &str) -> Result<&[f64]> {
        self.get(id)
            .ok_or_else(|| Error::Data(format!("no embedding for id {id}")))
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &[f64])> {
        self.ids.iter().enumerate().map(|(i, id)| (id.as_str(), self.row(i)))
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(20 + self.data.len() * 4);
        out.extend_from_slice(STORE_MAGIC);
        out.extend_from_slice(&STORE_VERSION.to_le_bytes());
        out.extend_from_slice(&(self.dim as u32).to_le_bytes());
        out.extend_from_slice(&(self.len() as u64).to_le_bytes());
        put_f32s(&mut out, &self.data);
        for id in &self.ids {
            out.extend_from_slice(&(id.len() as u16).to_le_bytes());
            out.extend_from_slice(id.as_bytes());
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = ByteReader::new(bytes);
        if r.take(4, "magic")? != STORE_MAGIC {
            return Err(Error::format("magic", "expected \"SRSE\" at offset 0"));
        }
        let version = r.u32("version")?;
        if version != STORE_VERSION {
            return Err(Error::format("version", format!("unsupported version {version} at offset 4")));
        }
        let dim = r.u32("dim")? as usize;
        let count = r.u64("count")?;
        if dim == 0 && count > 0 {
            return Err(Error::format("dim", "dim 0 with non-empty store"));
        }
        let count = usize::try_from(count).map_err(|_| Error::format("count", "too large"))?;
        let values = count
            .checked_mul(dim)
            .ok_or_else(|| Error::format("count", "count × dim overflows"))?;
        // Cheap bound before allocating: vectors alone need this many bytes.
        if values.saturating_mul(4) > r.remaining() {
            return Err(Error::format(
                "vectors",
                format!(
                    "truncated at offset {}: {count} vectors of dim {dim} need {} bytes, {} left",
                    r.position(),
                    values.saturating_mul(4),
                    r.remaining()
                ),
            ));
        }
        let data = r.f32s(values, "vectors")?;
        let mut store = Self::new(dim);
        store.data = data;
        store.ids.reserve(count);
        for i in 0..count {
            let offset = r.position();
            let len = r.u16("id table")? as usize;
            let raw = r.take(len, "id table")?;
            let id = std::str::from_utf8(raw)
                .map_err(|_| Error::format("id table", format!("invalid UTF-8 in id {i} at offset {offset}")))?
                .to_owned();
            if store.index.insert(id.clone(), i).is_some() {
                return Err(Error::format("id table", format!("duplicate id {id:?} at offset {offset}")));
            }
            store.ids.push(id);
        }
        if r.remaining() != 0 {
            return Err(Error::format(
                "trailing bytes",
                format!("{} unexpected bytes at offset {}", r.remaining(), r.position()),
            ));
        }
        Ok(store)
    }
}

pub fn write_embedding_store(store: &EmbeddingStore, path: &Path) -> Result<()> {
    write_atomic(path, &store.to_bytes())
}

pub fn read_embedding_store(path: &Path) -> Result<EmbeddingStore> {
    EmbeddingStore::from_bytes(&read_file(path)?)
}

/// One question with its gold document and candidate pool.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QAExample {
    pub id: String,
    pub question: String,
    pub answer: String,
    pub gold_doc_id: String,
    pub candidate_doc_ids: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub difficulty: Option<f64>,
}

impl QAExample {
    pub fn validate(&self) -> Result<()> {
        let mut seen = HashSet::new();
        for c in &self.candidate_doc_ids {
            if !seen.insert(c.as_str()) {
                return Err(Error::Data(format!("example {}: duplicate candidate {c}", self.id)));
            }
        }
        if !seen.contains(self.gold_doc_id.as_str()) {
            return Err(Error::Data(format!(
                "example {}: gold document {} not among candidates",
                self.id, self.gold_doc_id
            )));
        }
        Ok(())
    }

    pub fn gold_index(&self) -> Result<usize> {
        self.candidate_doc_ids
            .iter()
            .position(|c| *c == self.gold_doc_id)
            .ok_or_else(|| {
                Error::Data(format!(
                    "example {}: gold document {} not among candidates",
                    self.id, self.gold_doc_id
                ))
            })
    }
}

/// A corpus document.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorpusDoc {
    pub id: String,
    pub text: String,
}

fn parse_jsonl<T: serde::de::DeserializeOwned>(text: &str, what: &str) -> Result<Vec<T>> {
    text.lines()
        .enumerate()
        .filter(|(_, line)| !line.trim().is_empty())
        .map(|(i, line)| {
            serde_json::from_str(line).map_err(|e| Error::Data(format!("{what} line {}: {e}", i + 1)))
        })
        .collect()
}

fn to_jsonl<T: Serialize>(records: &[T]) -> Vec<u8> {
    let mut out = Vec::new();
    for r in records {
        serde_json::to_writer(&mut out, r).expect("records serialize");
        out.push(b'\n');
    }
    out
}

fn read_text(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

/// Parses QA JSON-lines; errors cite the 1-based line number or example id.
pub fn parse_qa_jsonl(text: &str) -> Result<Vec<QAExample>> {
    let examples: Vec<QAExample> = parse_jsonl(text, "QA")?;
    let mut ids = HashSet::new();
    for e in &examples {
        e.validate()?;
        if !ids.insert(e.id.as_str()) {
            return Err(Error::Data(format!("duplicate example id {}", e.id)));
        }
    }
    Ok(examples)
}

pub fn load_qa_jsonl(path: &Path) -> Result<Vec<QAExample>> {
    parse_qa_jsonl(&read_text(path)?)
}

pub fn write_qa_jsonl(examples: &[QAExample], path: &Path) -> Result<()> {
    write_atomic(path, &to_jsonl(examples))
}

pub fn load_corpus_jsonl(path: &Path) -> Result<Vec<CorpusDoc>> {
    let docs: Vec<CorpusDoc> = parse_jsonl(&read_text(path)?, "corpus")?;
    let mut ids = HashSet::new();
    for d in &docs {
        if !ids.insert(d.id.as_str()) {
            return Err(Error::Data(format!("duplicate corpus id {}", d.id)));
        }
    }
    Ok(docs)
}

pub fn write_corpus_jsonl(docs: &[CorpusDoc], path: &Path) -> Result<()> {
    write_atomic(path, &to_jsonl(docs))
}

/// Gold plus `n - 1` distractors drawn uniformly without replacement from
/// the rest of the corpus, returned in shuffled order.
pub fn build_candidate_pool(gold: &str, corpus_ids: &[String], n: usize, rng: &mut SeededRng) -> Result<Vec<String>> {
    if n == 0 {
        return Err(Error::Argument("candidate pool size must be >= 1".into()));
    }
    let mut seen = HashSet::new();
    let mut others: Vec<&str> = Vec::with_capacity(corpus_ids.len());
    let mut has_gold = false;
    for id in corpus_ids {
        if !seen.insert(id.as_str()) {
            continue;
        }
        if id == gold {
            has_gold = true;
        } else {
            others.push(id);
        }
    }
    if !has_gold {
        return Err(Error::Data(format!("gold document {gold} not in corpus")));
    }
    if others.len() + 1 < n {
        return Err(Error::Data(format!(
            "corpus has {} distinct documents, pool needs {n}",
            others.len() + 1
        )));
    }
    // Partial Fisher-Yates: the first n-1 slots become a uniform sample.
    for i in 0..n - 1 {
        let j = i + rng.below(others.len() - i);
        others.swap(i, j);
    }
    let mut pool: Vec<String> = std::iter::once(gold)
        .chain(others[..n - 1].iter().copied())
        .map(str::to_owned)
        .collect();
    rng.shuffle(&mut pool);
    Ok(pool)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample_store() -> EmbeddingStore {
        let mut rng = SeededRng::new(11);
        let mut s = EmbeddingStore::new(4);
        for i in 0..3 {
            let v: Vec<f64> = (0..4).map(|_| rng.gaussian()).collect();
            s.push(format!("doc-{i}"), &v).unwrap();
        }
        s
    }

    #[test]
    fn store_round_trip() {
        let s = sample_store();
        let bytes = s.to_bytes();
        let back = EmbeddingStore::from_bytes(&bytes).unwrap();
        assert_eq!(back, s);
        assert_eq!(back.to_bytes(), bytes);
    }

    #[test]
    fn empty_store_is_valid() {
        let s = EmbeddingStore::new(8);
        let back = EmbeddingStore::from_bytes(&s.to_bytes()).unwrap();
        assert!(back.is_empty());
        assert_eq!(back.dim(), 8);
    }

    #[test]
    fn corrupt_stores_are_rejected() {
        let bytes = sample_store().to_bytes();
        let mut bad = bytes.clone();
        bad[1] ^= 0xff;
        assert!(EmbeddingStore::from_bytes(&bad).unwrap_err().to_string().contains("magic"));
        let mut bad = bytes.clone();
        bad[4] = 9;
        assert!(EmbeddingStore::from_bytes(&bad).unwrap_err().to_string().contains("version"));
        let err = EmbeddingStore::from_bytes(&bytes[..40]).unwrap_err();
        assert!(err.to_string().contains("vectors"), "{err}");
        let err = EmbeddingStore::from_bytes(&bytes[..bytes.len() - 2]).unwrap_err();
        assert!(err.to_string().contains("id table"), "{err}");
    }

    #[test]
    fn duplicate_ids_rejected() {
        let mut s = EmbeddingStore::new(2);
        s.push("a", &[1.0, 0.0]).unwrap();
        assert!(s.push("a", &[0.0, 1.0]).is_err());
        // Forge a file with a duplicated id.
        let mut t = EmbeddingStore::new(2);
        t.push("a", &[1.0, 0.0]).unwrap();
        t.push("b", &[0.0, 1.0]).unwrap();
        let mut bytes = t.to_bytes();
        let n = bytes.len();
        bytes[n - 1] = b'a';
        let err = EmbeddingStore::from_bytes(&bytes).unwrap_err();
        assert!(err.to_string().contains("duplicate"), "{err}");
    }

    #[test]
    fn qa_parsing() {
        let good = r#"{"id":"q1","question":"?","answer":"a","gold_doc_id":"d1","candidate_doc_ids":["d0","d1"]}
{"id":"q2","question":"?","answer":"b","gold_doc_id":"d2","candidate_doc_ids":["d2","d3"]}
"#;
        let ex = parse_qa_jsonl(good).unwrap();
        assert_eq!(ex.len(), 2);
        assert_eq!(ex[0].id, "q1");
        assert_eq!(ex[1].id, "q2");

        let missing = r#"{"id":"q1","question":"?","answer":"a","candidate_doc_ids":["d0","d1"]}"#;
        let err = parse_qa_jsonl(missing).unwrap_err().to_string();
        assert!(err.contains("line 1") && err.contains("gold_doc_id"), "{err}");

        let absent = r#"{"id":"q9","question":"?","answer":"a","gold_doc_id":"dx","candidate_doc_ids":["d0","d1"]}"#;
        let err = parse_qa_jsonl(absent).unwrap_err().to_string();
        assert!(err.contains("q9"), "{err}");

        assert!(parse_qa_jsonl("{not json}\n").unwrap_err().to_string().contains("line 1"));
    }

    #[test]
    fn forced_pool_uses_whole_corpus() {
        let corpus: Vec<String> = (0..8).map(|i| format!("d{i}")).collect();
        let mut rng = SeededRng::new(5);
        let mut pool = build_candidate_pool("d3", &corpus, 8, &mut rng).unwrap();
        pool.sort();
        assert_eq!(pool, corpus);
        assert!(build_candidate_pool("d3", &corpus, 9, &mut rng).is_err());
        assert!(build_candidate_pool("zz", &corpus, 4, &mut rng).is_err());
    }

    #[test]
    fn gold_appears_exactly_once() {
        let corpus: Vec<String> = (0..30).map(|i| format!("d{i}")).collect();
        let mut rng = SeededRng::new(6);
        for _ in 0..200 {
            let pool = build_candidate_pool("d7", &corpus, 8, &mut rng).unwrap();
            assert_eq!(pool.iter().filter(|p| *p == "d7").count(), 1);
            let distinct: HashSet<_> = pool.iter().collect();
            assert_eq!(distinct.len(), 8);
        }
    }
}
