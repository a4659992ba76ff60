//! Background text: one document per UTF-8 file, split into sentences.

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::text::split_sentences;

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct BackgroundCorpus {
    pub documents: Vec<Vec<String>>,
}

/// Position of the next sentence to hand out.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Cursor {
    pub doc: usize,
    pub sentence: usize,
}

impl BackgroundCorpus {
    /// Documents with no sentences are dropped.
    pub fn from_texts<S: AsRef<str>>(texts: &[S]) -> Result<Self> {
        let documents: Vec<Vec<String>> = texts
            .iter()
            .map(|t| split_sentences(t.as_ref()))
            .filter(|d| !d.is_empty())
            .collect();
        if documents.is_empty() {
            return Err(Error::EmptyCorpus);
        }
        Ok(Self { documents })
    }

    /// Every regular file in `dir`, in file-name order.
    pub fn load_dir(dir: &Path) -> Result<Self> {
        let mut paths: Vec<_> = fs::read_dir(dir)?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.is_file())
            .collect();
        paths.sort();
        let mut texts = Vec::with_capacity(paths.len());
        for p in &paths {
            let bytes = fs::read(p)?;
            let text = String::from_utf8(bytes)
                .map_err(|e| Error::Invalid(format!("{} is not UTF-8: {e}", p.display())))?;
            texts.push(text);
        }
        Self::from_texts(&texts)
    }

    pub fn num_sentences(&self) -> usize {
        self.documents.iter().map(Vec::len).sum()
    }

    pub fn sentences(&self) -> impl Iterator<Item = &str> {
        self.documents.iter().flatten().map(String::as_str)
    }

    pub fn get(&self, c: Cursor) -> &str {
        &self.documents[c.doc][c.sentence]
    }

    /// Cursor of the `k`-th sentence in corpus order.
    pub fn cursor_at(&self, mut k: usize) -> Cursor {
        k %= self.num_sentences();
        for (doc, d) in self.documents.iter().enumerate() {
            if k < d.len() {
                return Cursor { doc, sentence: k };
            }
            k -= d.len();
        }
        unreachable!()
    }

    /// Next sentence in natural order, moving on to the next document (and
    /// wrapping to the first) at the end of one.
    pub fn advance(&self, c: Cursor) -> Cursor {
        if c.sentence + 1 < self.documents[c.doc].len() {
            Cursor {
                doc: c.doc,
                sentence: c.sentence + 1,
            }
        } else {
            Cursor {
                doc: (c.doc + 1) % self.documents.len(),
                sentence: 0,
            }
        }
    }
}
