//! Memory-state and attention analysis of one document.

use serde::{Deserialize, Serialize};

use crate::dataset::DatasetRecord;
use crate::encode::{prompt_ids, split_prompt};
use crate::error::{Error, Result};
use crate::rmt::{Mode, RmtModel, SegmentLayout};
use crate::tensor::{Scalar, Tensor};
use crate::tokenizer::Tokenizer;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Metric {
    #[default]
    Euclidean,
    /// `1 - cosine similarity`.
    Cosine,
}

fn distance<T: Scalar>(a: &Tensor<T>, b: &Tensor<T>, metric: Metric) -> f64 {
    let pairs = a.data().iter().zip(b.data()).map(|(x, y)| (x.as_f64(), y.as_f64()));
    match metric {
        Metric::Euclidean => pairs.map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt(),
        Metric::Cosine => {
            let (mut ab, mut aa, mut bb) = (0.0, 0.0, 0.0);
            for (x, y) in pairs {
                ab += x * y;
                aa += x * x;
                bb += y * y;
            }
            if aa == 0.0 || bb == 0.0 {
                1.0
            } else {
                1.0 - ab / (aa.sqrt() * bb.sqrt())
            }
        }
    }
}

/// Pairwise distances between flattened memory states.
pub fn memory_distance_matrix<T: Scalar>(states: &[Tensor<T>], metric: Metric) -> Result<Vec<Vec<f64>>> {
    if states.is_empty() {
        return Err(Error::EmptyArchive);
    }
    let n = states.len();
    let mut d = vec![vec![0.0; n]; n];
    for i in 0..n {
        for j in i + 1..n {
            let v = distance(&states[i], &states[j], metric);
            d[i][j] = v;
            d[j][i] = v;
        }
    }
    Ok(d)
}

pub fn matrix_csv(m: &[Vec<f64>]) -> String {
    let mut out = String::new();
    for row in m {
        let cells: Vec<String> = row.iter().map(|v| format!("{v:.6}")).collect();
        out.push_str(&cells.join(","));
        out.push('\n');
    }
    out
}

/// A record's prompt split into segments, with the `(segment, text row)`
/// of every token of every fact.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SegmentedDocument {
    pub segments: Vec<Vec<usize>>,
    pub fact_tokens: Vec<Vec<(usize, usize)>>,
}

impl SegmentedDocument {
    pub fn new(tok: &Tokenizer, record: &DatasetRecord, segment_len: usize) -> Result<Self> {
        let segments = split_prompt(&prompt_ids(tok, record), segment_len)?;
        let mut starts = Vec::with_capacity(segments.len());
        let mut acc = 0;
        for s in &segments {
            starts.push(acc);
            acc += s.len();
        }
        let locate = |i: usize| {
            let seg = starts.partition_point(|&s| s <= i) - 1;
            (seg, i - starts[seg])
        };
        let chars: Vec<char> = record.context.chars().collect();
        let fact_tokens = record
            .facts
            .iter()
            .zip(&record.fact_offsets)
            .map(|(f, &off)| {
                let prefix: String = chars[..off.min(chars.len())].iter().collect();
                let first = tok.count(&prefix);
                (first..first + tok.count(f)).filter(|&i| i < acc).map(locate).collect()
            })
            .collect();
        Ok(Self { segments, fact_tokens })
    }

    /// Whether segment `s` holds any token of any fact.
    pub fn has_fact(&self, s: usize) -> bool {
        self.fact_tokens.iter().flatten().any(|&(seg, _)| seg == s)
    }

    pub fn fact_segments(&self) -> Vec<usize> {
        (0..self.segments.len()).filter(|&s| self.has_fact(s)).collect()
    }
}

/// Memory states `[M^0, .., M^n]` after streaming every prompt segment.
pub fn memory_states<T: Scalar>(model: &RmtModel<T>, mode: Mode, doc: &SegmentedDocument) -> Result<Vec<Tensor<T>>> {
    let carry = model.run_prefix(mode, &doc.segments)?;
    let mut states = carry.archive.states;
    states.push(carry.memory);
    Ok(states)
}

/// Consecutive-state distances split by segment content.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct MemoryChange {
    pub fact: Vec<f64>,
    pub background: Vec<f64>,
}

impl MemoryChange {
    pub fn mean_fact(&self) -> f64 {
        mean(&self.fact)
    }

    pub fn mean_background(&self) -> f64 {
        mean(&self.background)
    }

    pub fn extend(&mut self, other: MemoryChange) {
        self.fact.extend(other.fact);
        self.background.extend(other.background);
    }
}

fn mean(xs: &[f64]) -> f64 {
    if xs.is_empty() {
        f64::NAN
    } else {
        xs.iter().sum::<f64>() / xs.len() as f64
    }
}

/// `D[t, t+1]` for every segment `t` before the question segment, sorted by
/// whether segment `t` carries a fact.
pub fn memory_change(distances: &[Vec<f64>], doc: &SegmentedDocument) -> MemoryChange {
    let mut out = MemoryChange::default();
    let last = doc.segments.len().saturating_sub(1);
    for t in 0..last.min(distances.len().saturating_sub(1)) {
        let d = distances[t][t + 1];
        if doc.has_fact(t) {
            out.fact.push(d);
        } else {
            out.background.push(d);
        }
    }
    out
}

/// Attention probabilities of one layer and head over a composed segment.
#[derive(Clone, Debug, PartialEq)]
pub struct AttentionMap {
    pub segment: usize,
    pub layer: usize,
    pub head: usize,
    pub labels: Vec<&'static str>,
    pub weights: Vec<Vec<f64>>,
}

impl AttentionMap {
    pub fn to_csv(&self) -> String {
        let cols: Vec<String> = self.labels.iter().enumerate().map(|(i, l)| format!("{l}:{i}")).collect();
        let mut out = format!("row,{}\n", cols.join(","));
        for (i, row) in self.weights.iter().enumerate() {
            let cells: Vec<String> = row.iter().map(|v| format!("{v:.6}")).collect();
            out.push_str(&format!("{},{}\n", cols[i], cells.join(",")));
        }
        out
    }
}

/// Attention maps of every layer and head for the selected segments, with
/// the layout of each segment.
pub fn export_attention_maps<T: Scalar>(
    model: &RmtModel<T>,
    mode: Mode,
    doc: &SegmentedDocument,
    segments: &[usize],
) -> Result<Vec<(AttentionMap, SegmentLayout)>> {
    let mut out = Vec::new();
    for &s in segments {
        if s >= doc.segments.len() {
            return Err(Error::IndexOutOfRange {
                index: s,
                len: doc.segments.len(),
            });
        }
        let carry = model.run_prefix(mode, &doc.segments[..s])?;
        let (maps, layout) = model.trace_segment(mode, &carry, &doc.segments[s])?;
        let labels = layout.labels();
        for (layer, heads) in maps.into_iter().enumerate() {
            for (head, p) in heads.into_iter().enumerate() {
                let weights = (0..p.rows())
                    .map(|r| p.row(r).iter().map(|v| v.as_f64()).collect())
                    .collect();
                out.push((
                    AttentionMap {
                        segment: s,
                        layer,
                        head,
                        labels: labels.clone(),
                        weights,
                    },
                    layout.clone(),
                ));
            }
        }
    }
    Ok(out)
}

/// Mean attention mass that write-memory rows put on fact-token columns,
/// and the mass a uniform row would put there.
pub fn write_mass_on_facts(map: &AttentionMap, layout: &SegmentLayout, doc: &SegmentedDocument) -> (f64, f64) {
    let cols: Vec<usize> = doc
        .fact_tokens
        .iter()
        .flatten()
        .filter(|&&(seg, _)| seg == map.segment)
        .map(|&(_, row)| layout.text.start + row)
        .collect();
    let rows = layout.write.clone();
    let mass = rows
        .clone()
        .map(|r| cols.iter().map(|&c| map.weights[r][c]).sum::<f64>())
        .sum::<f64>()
        / rows.len() as f64;
    let uniform = rows.map(|r| cols.len() as f64 / (r + 1) as f64).sum::<f64>() / layout.write.len() as f64;
    (mass, uniform)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn distances_symmetric_with_zero_diagonal() {
        let s: Vec<Tensor<f64>> = (0..4)
            .map(|i| Tensor::from_fn(&[2, 3], |j| (i * j) as f64 * 0.5))
            .collect();
        let d = memory_distance_matrix(&s, Metric::Euclidean).unwrap();
        for i in 0..4 {
            assert_eq!(d[i][i], 0.0);
            for j in 0..4 {
                assert_eq!(d[i][j], d[j][i]);
            }
        }
        let direct: f64 = (0..6).map(|j| (j as f64 * 0.5).powi(2)).sum::<f64>().sqrt();
        assert!((d[0][1] - direct).abs() < 1e-12);
        assert!(memory_distance_matrix::<f64>(&[], Metric::Euclidean).is_err());
    }

    #[test]
    fn cosine_distance_of_parallel_states_is_zero() {
        let a = Tensor::<f64>::from_fn(&[1, 3], |j| j as f64 + 1.0);
        let b = Tensor::<f64>::from_fn(&[1, 3], |j| 2.0 * (j as f64 + 1.0));
        let d = memory_distance_matrix(&[a, b], Metric::Cosine).unwrap();
        assert!(d[0][1].abs() < 1e-12);
    }
}
