//! Word-level and GPT-2 style byte-level BPE tokenizers.

use std::collections::{BTreeMap, HashMap};
use std::fs;
use std::path::Path;
use std::sync::LazyLock;

use regex::Regex;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const PAD: &str = "<pad>";
pub const EOS: &str = "<eos>";
pub const UNK: &str = "<unk>";
/// Separates the question from the answer.
pub const QUESTION_MARK: &str = "<q>";

static WORD: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"[\p{L}\p{N}_]+(?:['\u{2019}][\p{L}\p{N}_]+)*|[^\s]").unwrap());

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Word,
    Bpe,
}

/// On-disk form, also embedded in checkpoints.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TokenizerFile {
    pub mode: Mode,
    pub tokens: Vec<String>,
    #[serde(default)]
    pub merges: Vec<(String, String)>,
}

#[derive(Clone, Debug)]
pub struct Tokenizer {
    mode: Mode,
    tokens: Vec<String>,
    index: HashMap<String, usize>,
    ranks: HashMap<(String, String), usize>,
    merges: Vec<(String, String)>,
    pub pad: usize,
    pub eos: usize,
    pub unk: usize,
    pub question: usize,
}

/// Split text into word-level tokens.
pub fn words(text: &str) -> impl Iterator<Item = &str> {
    WORD.find_iter(text).map(|m| m.as_str())
}

fn attaches_left(t: &str) -> bool {
    matches!(t, "." | "," | "!" | "?" | ";" | ":" | ")" | "]" | "}")
}

fn attaches_right(t: &str) -> bool {
    matches!(t, "(" | "[" | "{")
}

impl Tokenizer {
    /// Word-level tokenizer over `vocab` (specials are prepended when absent).
    pub fn word_level<S: AsRef<str>>(vocab: &[S]) -> Self {
        let mut tokens: Vec<String> = [PAD, EOS, UNK, QUESTION_MARK].iter().map(|s| s.to_string()).collect();
        for w in vocab {
            let w = w.as_ref();
            if !tokens.iter().any(|t| t == w) {
                tokens.push(w.to_string());
            }
        }
        Self::from_parts(Mode::Word, tokens, Vec::new()).expect("specials are present")
    }

    fn from_parts(mode: Mode, tokens: Vec<String>, merges: Vec<(String, String)>) -> Result<Self> {
        let index: HashMap<String, usize> = tokens.iter().enumerate().map(|(i, t)| (t.clone(), i)).collect();
        if index.len() != tokens.len() {
            return Err(Error::Invalid("duplicate token in vocabulary".into()));
        }
        let special = |s: &str| {
            index
                .get(s)
                .copied()
                .ok_or_else(|| Error::Invalid(format!("vocabulary lacks special token {s}")))
        };
        let (pad, eos, unk, question) = (special(PAD)?, special(EOS)?, special(UNK)?, special(QUESTION_MARK)?);
        let ranks = merges.iter().enumerate().map(|(i, m)| (m.clone(), i)).collect();
        Ok(Self {
            mode,
            tokens,
            index,
            ranks,
            merges,
            pad,
            eos,
            unk,
            question,
        })
    }

    /// Byte-level BPE from a GPT-2 style `vocab.json` and `merges.txt`.
    /// Specials missing from the vocabulary are appended; `<|endoftext|>`
    /// doubles as end-of-sequence when present.
    pub fn load_bpe(vocab_json: &Path, merges_txt: &Path) -> Result<Self> {
        let raw: BTreeMap<String, usize> = serde_json::from_str(&fs::read_to_string(vocab_json)?)?;
        let mut tokens = vec![String::new(); raw.len()];
        for (t, i) in raw {
            if i >= tokens.len() || !tokens[i].is_empty() {
                return Err(Error::Invalid(format!("{}: ids are not a dense range", vocab_json.display())));
            }
            tokens[i] = t;
        }
        let eos_alias = tokens.iter().position(|t| t == "<|endoftext|>");
        if let Some(i) = eos_alias {
            tokens[i] = EOS.to_string();
        }
        for s in [PAD, EOS, UNK, QUESTION_MARK] {
            if !tokens.iter().any(|t| t == s) {
                tokens.push(s.to_string());
            }
        }
        let mut merges = Vec::new();
        for (n, line) in fs::read_to_string(merges_txt)?.lines().enumerate() {
            if line.starts_with("#version") || line.trim().is_empty() {
                continue;
            }
            let mut parts = line.split(' ');
            match (parts.next(), parts.next(), parts.next()) {
                (Some(a), Some(b), None) => merges.push((a.to_string(), b.to_string())),
                _ => {
                    return Err(Error::Parse {
                        path: merges_txt.to_path_buf(),
                        line: n + 1,
                        msg: "expected two space-separated symbols".into(),
                    })
                }
            }
        }
        Self::from_parts(Mode::Bpe, tokens, merges)
    }

    pub fn to_file(&self) -> TokenizerFile {
        TokenizerFile {
            mode: self.mode,
            tokens: self.tokens.clone(),
            merges: self.merges.clone(),
        }
    }

    pub fn from_file(f: TokenizerFile) -> Result<Self> {
        Self::from_parts(f.mode, f.tokens, f.merges)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, serde_json::to_string(&self.to_file())?)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_file(serde_json::from_str(&fs::read_to_string(path)?)?)
    }

    pub fn mode(&self) -> Mode {
        self.mode
    }

    pub fn vocab_size(&self) -> usize {
        self.tokens.len()
    }

    pub fn id(&self, token: &str) -> Option<usize> {
        self.index.get(token).copied()
    }

    pub fn token(&self, id: usize) -> Option<&str> {
        self.tokens.get(id).map(String::as_str)
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    pub fn is_special(&self, id: usize) -> bool {
        id == self.pad || id == self.eos || id == self.unk || id == self.question
    }

    pub fn encode(&self, text: &str) -> Vec<usize> {
        match self.mode {
            Mode::Word => words(text).map(|w| self.id(w).unwrap_or(self.unk)).collect(),
            Mode::Bpe => {
                let mut out = Vec::new();
                for piece in pretokenize(text) {
                    let mapped: String = piece.bytes().map(byte_char).collect();
                    for sym in self.bpe(&mapped) {
                        out.push(self.id(&sym).unwrap_or(self.unk));
                    }
                }
                out
            }
        }
    }

    /// Token count of `text`; equals `encode(text).len()`.
    pub fn count(&self, text: &str) -> usize {
        match self.mode {
            Mode::Word => words(text).count(),
            Mode::Bpe => self.encode(text).len(),
        }
    }

    /// Tokens a sentence adds when appended after a space-joined context.
    pub fn count_appended(&self, sentence: &str, first: bool) -> usize {
        match (self.mode, first) {
            (Mode::Bpe, false) => self.count(&format!(" {sentence}")),
            _ => self.count(sentence),
        }
    }

    pub fn decode(&self, ids: &[usize]) -> String {
        match self.mode {
            Mode::Word => {
                let mut out = String::new();
                let mut glue = true;
                for &id in ids {
                    let t = self.token(id).unwrap_or(UNK);
                    if !glue && !attaches_left(t) {
                        out.push(' ');
                    }
                    out.push_str(t);
                    glue = attaches_right(t);
                }
                out
            }
            Mode::Bpe => {
                let mut bytes = Vec::new();
                for &id in ids {
                    let t = self.token(id).unwrap_or(UNK);
                    if self.is_special(id) {
                        bytes.extend_from_slice(t.as_bytes());
                        continue;
                    }
                    for c in t.chars() {
                        match char_byte(c) {
                            Some(b) => bytes.push(b),
                            None => bytes.extend_from_slice(c.to_string().as_bytes()),
                        }
                    }
                }
                String::from_utf8_lossy(&bytes).into_owned()
            }
        }
    }

    fn bpe(&self, word: &str) -> Vec<String> {
        let mut syms: Vec<String> = word.chars().map(|c| c.to_string()).collect();
        loop {
            let best = syms
                .windows(2)
                .enumerate()
                .filter_map(|(i, w)| self.ranks.get(&(w[0].clone(), w[1].clone())).map(|&r| (r, i)))
                .min();
            let Some((_, i)) = best else { break };
            let (a, b) = (syms[i].clone(), syms[i + 1].clone());
            let mut merged = Vec::with_capacity(syms.len());
            let mut j = 0;
            while j < syms.len() {
                if j + 1 < syms.len() && syms[j] == a && syms[j + 1] == b {
                    merged.push(format!("{a}{b}"));
                    j += 2;
                } else {
                    merged.push(syms[j].clone());
                    j += 1;
                }
            }
            syms = merged;
        }
        syms
    }
}

/// Build a word-level vocabulary: every token of `task_sentences`, then the
/// `top_k` most frequent remaining corpus tokens (ties broken by token).
pub fn build_vocab<S: AsRef<str>, T: AsRef<str>>(corpus: &[S], task_sentences: &[T], top_k: usize) -> Tokenizer {
    let mut vocab: Vec<String> = Vec::new();
    let mut seen = std::collections::HashSet::new();
    for s in task_sentences {
        for w in words(s.as_ref()) {
            if seen.insert(w.to_string()) {
                vocab.push(w.to_string());
            }
        }
    }
    vocab.sort();
    let mut counts: HashMap<&str, usize> = HashMap::new();
    for s in corpus {
        for w in words(s.as_ref()) {
            *counts.entry(w).or_default() += 1;
        }
    }
    let mut ranked: Vec<(&str, usize)> = counts.into_iter().filter(|(w, _)| !seen.contains(*w)).collect();
    ranked.sort_by(|a, b| b.1.cmp(&a.1).then(a.0.cmp(b.0)));
    vocab.extend(ranked.into_iter().take(top_k).map(|(w, _)| w.to_string()));
    Tokenizer::word_level(&vocab)
}

/// GPT-2 byte-to-unicode table: printable bytes map to themselves, the rest
/// to code points from 256 up.
fn byte_char(b: u8) -> char {
    static TABLE: LazyLock<[char; 256]> = LazyLock::new(|| {
        let mut t = ['\0'; 256];
        let mut n = 0u32;
        for b in 0..=255u8 {
            let printable = (b'!'..=b'~').contains(&b) || (0xA1..=0xAC).contains(&b) || (0xAE..=0xFF).contains(&b);
            t[b as usize] = if printable {
                b as char
            } else {
                n += 1;
                char::from_u32(255 + n).unwrap()
            };
        }
        t
    });
    TABLE[b as usize]
}

fn char_byte(c: char) -> Option<u8> {
    static INV: LazyLock<HashMap<char, u8>> = LazyLock::new(|| (0..=255u8).map(|b| (byte_char(b), b)).collect());
    INV.get(&c).copied()
}

#[derive(PartialEq, Clone, Copy)]
enum Class {
    Letter,
    Number,
    Space,
    Other,
}

fn class(c: char) -> Class {
    if c.is_alphabetic() {
        Class::Letter
    } else if c.is_numeric() {
        Class::Number
    } else if c.is_whitespace() {
        Class::Space
    } else {
        Class::Other
    }
}

/// GPT-2 pre-tokenization, written out by hand because the pattern's
/// `\s+(?!\S)` lookahead is not supported by the regex crate.
pub fn pretokenize(text: &str) -> Vec<&str> {
    const CONTRACTIONS: [&str; 7] = ["'s", "'t", "'re", "'ve", "'m", "'ll", "'d"];
    let idx: Vec<(usize, char)> = text.char_indices().collect();
    let byte_at = |k: usize| idx.get(k).map_or(text.len(), |p| p.0);
    let mut out = Vec::new();
    let mut k = 0;
    while k < idx.len() {
        let rest = &text[idx[k].0..];
        if let Some(c) = CONTRACTIONS.iter().find(|c| rest.starts_with(**c)) {
            let end = k + c.chars().count();
            out.push(&text[idx[k].0..byte_at(end)]);
            k = end;
            continue;
        }
        let c = idx[k].1;
        let mut start = k;
        let mut cls = class(c);
        if c == ' ' && k + 1 < idx.len() && class(idx[k + 1].1) != Class::Space {
            start = k;
            k += 1;
            cls = class(idx[k].1);
        }
        if cls == Class::Space {
            let mut j = k;
            while j < idx.len() && class(idx[j].1) == Class::Space {
                j += 1;
            }
            // Leave the last whitespace char for the following token.
            let end = if j < idx.len() && j - k > 1 { j - 1 } else { j };
            out.push(&text[idx[start].0..byte_at(end)]);
            k = end;
            continue;
        }
        let mut j = k + 1;
        while j < idx.len() && class(idx[j].1) == cls {
            j += 1;
        }
        out.push(&text[idx[start].0..byte_at(j)]);
        k = j;
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn word_round_trip() {
        let t = build_vocab(&["the cat sat."], &["Mary moved to the hallway.", "Where is Mary?"], 10);
        let s = "Mary moved to the hallway. Where is Mary?";
        let ids = t.encode(s);
        assert!(!ids.contains(&t.unk));
        assert_eq!(t.decode(&ids), s);
        assert_eq!(t.count(s), ids.len());
    }

    #[test]
    fn unknown_word_maps_to_unk() {
        let t = Tokenizer::word_level(&["a"]);
        assert_eq!(t.encode("a zebra"), vec![t.id("a").unwrap(), t.unk]);
    }

    #[test]
    fn top_k_zero_is_task_words_only() {
        let t = build_vocab(&["lots of corpus words here"], &["Mary moved."], 0);
        assert_eq!(t.vocab_size(), 4 + 3);
    }

    #[test]
    fn pretokenize_matches_gpt2_rules() {
        assert_eq!(pretokenize("Hello  world\n"), vec!["Hello", " ", " world", "\n"]);
        assert_eq!(pretokenize("it's 3.5!"), vec!["it", "'s", " 3", ".", "5", "!"]);
        assert_eq!(pretokenize("a\n\nb"), vec!["a", "\n", "\n", "b"]);
        assert_eq!(pretokenize(" 'x"), vec![" '", "x"]);
    }

    #[test]
    fn byte_table_is_a_bijection() {
        let chars: std::collections::HashSet<char> = (0..=255u8).map(byte_char).collect();
        assert_eq!(chars.len(), 256);
        assert_eq!(byte_char(b' '), '\u{120}');
        assert_eq!(byte_char(b'A'), 'A');
    }
}
