//! Retrieval baseline: chunk the context, rank chunks against the question
//! with a pluggable embedder, and check whether every supporting fact lands
//! in the top k.

use std::collections::{BTreeMap, HashMap};
use std::ops::Range;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::DatasetRecord;
use crate::text::split_sentences;
use crate::tokenizer::words;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Chunking {
    Sentence,
    /// Consecutive windows of this many word tokens.
    Tokens(usize),
}

impl Chunking {
    pub const TOKENS512: Chunking = Chunking::Tokens(512);

    pub fn label(self) -> String {
        match self {
            Chunking::Sentence => "sentence".into(),
            Chunking::Tokens(n) => format!("tokens{n}"),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Chunk {
    pub text: String,
    /// Character (code point) span in the context.
    pub span: Range<usize>,
}

/// Sparse vector as `(dimension, value)` pairs sorted by dimension.
pub type Embedding = Vec<(usize, f64)>;

/// Maps chunks and a query to vectors compared by cosine similarity. The
/// chunks of one document are passed together so corpus statistics can be
/// fitted per document.
pub trait Embedder: Sync {
    fn embed(&self, chunks: &[&str], query: &str) -> (Vec<Embedding>, Embedding);
}

/// TF-IDF over lowercased word tokens with smoothed idf
/// `ln((1 + n) / (1 + df)) + 1`, fitted on the chunks of one document.
#[derive(Clone, Copy, Debug, Default)]
pub struct TfIdf;

fn terms(text: &str) -> impl Iterator<Item = String> + '_ {
    words(text)
        .filter(|w| w.chars().any(char::is_alphanumeric))
        .map(str::to_lowercase)
}

impl Embedder for TfIdf {
    fn embed(&self, chunks: &[&str], query: &str) -> (Vec<Embedding>, Embedding) {
        let mut vocab: HashMap<String, usize> = HashMap::new();
        let mut df: Vec<usize> = Vec::new();
        let counts: Vec<BTreeMap<usize, f64>> = chunks
            .iter()
            .map(|c| {
                let mut tf = BTreeMap::new();
                for t in terms(c) {
                    let next = vocab.len();
                    let id = *vocab.entry(t).or_insert(next);
                    if id == df.len() {
                        df.push(0);
                    }
                    *tf.entry(id).or_insert(0.0) += 1.0;
                }
                for &id in tf.keys() {
                    df[id] += 1;
                }
                tf
            })
            .collect();
        let n = chunks.len() as f64;
        let idf: Vec<f64> = df.iter().map(|&d| ((1.0 + n) / (1.0 + d as f64)).ln() + 1.0).collect();
        let weigh = |tf: BTreeMap<usize, f64>| -> Embedding {
            let mut v: Embedding = tf.into_iter().map(|(i, c)| (i, c * idf[i])).collect();
            let norm = v.iter().map(|x| x.1 * x.1).sum::<f64>().sqrt();
            if norm > 0.0 {
                v.iter_mut().for_each(|x| x.1 /= norm);
            }
            v
        };
        let mut q = BTreeMap::new();
        for t in terms(query) {
            if let Some(&id) = vocab.get(&t) {
                *q.entry(id).or_insert(0.0) += 1.0;
            }
        }
        (counts.into_iter().map(weigh).collect(), weigh(q))
    }
}

fn dot(a: &Embedding, b: &Embedding) -> f64 {
    let (mut i, mut j, mut s) = (0, 0, 0.0);
    while i < a.len() && j < b.len() {
        match a[i].0.cmp(&b[j].0) {
            std::cmp::Ordering::Less => i += 1,
            std::cmp::Ordering::Greater => j += 1,
            std::cmp::Ordering::Equal => {
                s += a[i].1 * b[j].1;
                i += 1;
                j += 1;
            }
        }
    }
    s
}

fn cosine(a: &Embedding, b: &Embedding) -> f64 {
    let na = dot(a, a).sqrt();
    let nb = dot(b, b).sqrt();
    if na == 0.0 || nb == 0.0 {
        0.0
    } else {
        dot(a, b) / (na * nb)
    }
}

/// Splits `context` into chunks with character spans.
pub fn chunk(context: &str, chunking: Chunking) -> Vec<Chunk> {
    let chars: Vec<(usize, char)> = context.char_indices().collect();
    let char_of = |byte: usize| chars.partition_point(|&(b, _)| b < byte);
    match chunking {
        Chunking::Sentence => {
            // Sentences are located in order; split_sentences only collapses
            // whitespace, and contexts are single-spaced.
            let mut from = 0;
            let mut out = Vec::new();
            for s in split_sentences(context) {
                let at = context[from..].find(&s).map_or(from, |i| from + i);
                let start = char_of(at);
                from = at + s.len();
                out.push(Chunk {
                    span: start..char_of(from),
                    text: s,
                });
            }
            out
        }
        Chunking::Tokens(n) => {
            let n = n.max(1);
            let base = context.as_ptr() as usize;
            let toks: Vec<Range<usize>> = words(context)
                .map(|w| {
                    let b = w.as_ptr() as usize - base;
                    b..b + w.len()
                })
                .collect();
            toks.chunks(n)
                .map(|c| {
                    let (b0, b1) = (c[0].start, c.last().expect("non-empty").end);
                    Chunk {
                        text: context[b0..b1].to_string(),
                        span: char_of(b0)..char_of(b1),
                    }
                })
                .collect()
        }
    }
}

/// Chunk indices ranked by similarity to the question, best first; ties
/// keep document order.
pub fn rank(chunks: &[Chunk], question: &str, embedder: &dyn Embedder) -> Vec<usize> {
    let texts: Vec<&str> = chunks.iter().map(|c| c.text.as_str()).collect();
    let (vecs, q) = embedder.embed(&texts, question);
    let scores: Vec<f64> = vecs.iter().map(|v| cosine(v, &q)).collect();
    let mut order: Vec<usize> = (0..chunks.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]).then(a.cmp(&b)));
    order
}

/// Smallest k whose top-k chunks cover every supporting fact, or `None`
/// when some supporting fact is not covered by any chunk.
pub fn hit_depth(record: &DatasetRecord, chunks: &[Chunk], order: &[usize]) -> Option<usize> {
    let mut rank_of = vec![0; chunks.len()];
    for (r, &i) in order.iter().enumerate() {
        rank_of[i] = r;
    }
    let text: Vec<char> = record.context.chars().collect();
    let mut depth = 0;
    for &s in &record.supporting {
        let start = record.fact_offsets[s];
        let span = start..start + record.facts[s].chars().count();
        let covering: Vec<usize> = chunks
            .iter()
            .enumerate()
            .filter(|(_, c)| c.span.start < span.end && span.start < c.span.end)
            .map(|(i, _)| i)
            .collect();
        // Whitespace between consecutive token windows belongs to neither.
        let skip_ws = |mut at: usize| {
            while at < span.end && text.get(at).is_some_and(|c| c.is_whitespace()) {
                at += 1;
            }
            at
        };
        let covered = covering.iter().map(|c| &chunks[*c].span).fold(span.start, |at, sp| {
            let at = skip_ws(at);
            if sp.start <= at {
                at.max(sp.end)
            } else {
                at
            }
        });
        if covering.is_empty() || covered < span.end {
            return None;
        }
        depth = depth.max(covering.iter().map(|&i| rank_of[i] + 1).max().expect("non-empty"));
    }
    Some(depth)
}

/// The top-k chunks and whether they contain all supporting facts.
pub fn retrieve_topk(
    record: &DatasetRecord,
    chunking: Chunking,
    k: usize,
    embedder: &dyn Embedder,
) -> (Vec<Chunk>, bool) {
    let chunks = chunk(&record.context, chunking);
    let order = rank(&chunks, &record.question, embedder);
    let hit = hit_depth(record, &chunks, &order).is_some_and(|d| d <= k.max(1));
    let top = order.iter().take(k.max(1)).map(|&i| chunks[i].clone()).collect();
    (top, hit)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RecallRow {
    pub chunking: String,
    pub length: usize,
    pub k: usize,
    pub recall: f64,
    pub n: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RetrievalReport {
    pub rows: Vec<RecallRow>,
}

impl RetrievalReport {
    pub fn recall(&self, chunking: Chunking, length: usize, k: usize) -> Option<f64> {
        let label = chunking.label();
        self.rows
            .iter()
            .find(|r| r.chunking == label && r.length == length && r.k == k)
            .map(|r| r.recall)
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("chunking,length,k,recall,n\n");
        for r in &self.rows {
            out.push_str(&format!("{},{},{},{:.6},{}\n", r.chunking, r.length, r.k, r.recall, r.n));
        }
        out
    }
}

/// Recall@k per context length for each chunking and k.
pub fn recall_at_k(
    records: &[DatasetRecord],
    chunkings: &[Chunking],
    ks: &[usize],
    embedder: &dyn Embedder,
) -> RetrievalReport {
    let mut rows = Vec::new();
    for &c in chunkings {
        let depths: Vec<(usize, Option<usize>)> = records
            .par_iter()
            .map(|r| {
                let chunks = chunk(&r.context, c);
                let order = rank(&chunks, &r.question, embedder);
                (r.target_tokens, hit_depth(r, &chunks, &order))
            })
            .collect();
        let mut by_len: BTreeMap<usize, Vec<Option<usize>>> = BTreeMap::new();
        for (len, d) in depths {
            by_len.entry(len).or_default().push(d);
        }
        for (&length, ds) in &by_len {
            for &k in ks {
                let hits = ds.iter().filter(|d| d.is_some_and(|d| d <= k)).count();
                rows.push(RecallRow {
                    chunking: c.label(),
                    length,
                    k,
                    recall: hits as f64 / ds.len() as f64,
                    n: ds.len(),
                });
            }
        }
    }
    RetrievalReport { rows }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::world::TaskId;

    fn record(context: &str, facts: &[&str], supporting: &[usize], question: &str) -> DatasetRecord {
        let offsets = facts
            .iter()
            .map(|f| context[..context.find(f).unwrap()].chars().count())
            .collect();
        DatasetRecord {
            id: "r".into(),
            task: TaskId::Qa1,
            target_tokens: 0,
            context: context.into(),
            question: question.into(),
            answer: String::new(),
            facts: facts.iter().map(|f| f.to_string()).collect(),
            fact_offsets: offsets,
            supporting: supporting.to_vec(),
            seed: 0,
        }
    }

    #[test]
    fn sentence_chunks_have_spans() {
        let ctx = "Rain fell. Mary moved to the hallway. Dogs ran.";
        let cs = chunk(ctx, Chunking::Sentence);
        assert_eq!(cs.len(), 3);
        assert_eq!(cs[1].text, "Mary moved to the hallway.");
        assert_eq!(cs[1].span, 11..37);
    }

    #[test]
    fn token_windows_cover_everything() {
        let ctx = "a b c d e f g";
        let cs = chunk(ctx, Chunking::Tokens(3));
        let texts: Vec<&str> = cs.iter().map(|c| c.text.as_str()).collect();
        assert_eq!(texts, vec!["a b c", "d e f", "g"]);
    }

    #[test]
    fn named_fact_ranks_first() {
        let ctx = "Rain fell on the roof. Mary moved to the hallway. Dogs ran home.";
        let r = record(ctx, &["Mary moved to the hallway."], &[0], "Where is Mary?");
        let (top, hit) = retrieve_topk(&r, Chunking::Sentence, 1, &TfIdf);
        assert!(hit);
        assert_eq!(top[0].text, "Mary moved to the hallway.");
    }

    #[test]
    fn k_beyond_chunks_always_hits() {
        let ctx = "One. Two. John went to the garden. Three.";
        let r = record(ctx, &["John went to the garden."], &[0], "Where is Mary?");
        assert!(retrieve_topk(&r, Chunking::Sentence, 4, &TfIdf).1);
    }

    #[test]
    fn straddling_fact_needs_both_windows() {
        let ctx = "x x x Mary moved to the hallway.";
        let r = record(ctx, &["Mary moved to the hallway."], &[0], "zzz");
        let cs = chunk(ctx, Chunking::Tokens(5));
        let order: Vec<usize> = (0..cs.len()).collect();
        assert_eq!(hit_depth(&r, &cs, &order), Some(2));
    }
}
