//! Hides task facts among background sentences at a token budget.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::BackgroundCorpus;
use crate::error::{Error, Result};
use crate::tokenizer::Tokenizer;
use crate::world::TaskSample;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Placement {
    #[default]
    Uniform,
    /// All facts inside quarter `q` (1..=4) of the token span.
    Quartile(u8),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct MixSpec {
    pub target_tokens: usize,
    pub placement: Placement,
    pub seed: u64,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct MixedSample {
    pub task: TaskSample,
    /// Facts and background sentences joined by single spaces. The question
    /// is not part of it; it always follows the context.
    pub text: String,
    /// Character (code point) offsets of each fact in `text`.
    pub fact_char_offsets: Vec<usize>,
    /// Tokens of `text` plus tokens of the question.
    pub token_count: usize,
    pub target_tokens: usize,
    pub background_sentences: usize,
    pub seed: u64,
}

impl MixedSample {
    /// Fact sentences read back from `text` at their offsets.
    pub fn extract_facts(&self) -> Vec<String> {
        let chars: Vec<char> = self.text.chars().collect();
        self.fact_char_offsets
            .iter()
            .zip(&self.task.facts)
            .map(|(&o, f)| chars[o..(o + f.text.chars().count()).min(chars.len())].iter().collect())
            .collect()
    }

    /// The full model input: context followed by the question.
    pub fn input_text(&self) -> String {
        if self.text.is_empty() {
            self.task.question.clone()
        } else {
            format!("{} {}", self.text, self.task.question)
        }
    }
}

/// Budget of the no-noise condition: facts and question only.
pub const NO_NOISE: usize = 0;

/// Hide `sample`'s facts in background text so that context plus question
/// fill at most `spec.target_tokens` tokens. Background sentences are taken
/// in corpus order from a seeded random start until the next one would not
/// fit; no sentence is ever truncated. A budget of [`NO_NOISE`] keeps only
/// the facts.
pub fn mix(sample: &TaskSample, corpus: &BackgroundCorpus, spec: &MixSpec, tok: &Tokenizer) -> Result<MixedSample> {
    if let Placement::Quartile(q) = spec.placement {
        if !(1..=4).contains(&q) {
            return Err(Error::Quartile {
                quartile: q as usize,
                reason: "quartile must be in 1..=4".into(),
            });
        }
    }
    let fact_lens: Vec<usize> = sample.facts.iter().map(|f| tok.count_appended(&f.text, false)).collect();
    let question_len = tok.count_appended(&sample.question, false);
    let needed = fact_lens.iter().sum::<usize>() + question_len;
    let budget = if spec.target_tokens == NO_NOISE { needed } else { spec.target_tokens };
    if budget < needed {
        return Err(Error::Budget {
            budget: spec.target_tokens,
            needed,
        });
    }

    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let total = corpus.num_sentences();
    let mut cursor = corpus.cursor_at(rng.random_range(0..total));
    let mut remaining = budget - needed;
    let mut background: Vec<(&str, usize)> = Vec::new();
    while remaining > 0 {
        if background.len() == total {
            return Err(Error::CorpusExhausted);
        }
        let s = corpus.get(cursor);
        let len = tok.count_appended(s, false);
        if len > remaining {
            break;
        }
        background.push((s, len));
        remaining -= len;
        cursor = corpus.advance(cursor);
    }

    let k = background.len();
    let n = sample.facts.len();
    let (lo_gap, hi_gap) = match spec.placement {
        Placement::Uniform => (0, k),
        Placement::Quartile(q) => quartile_gaps(q as usize, &background, &fact_lens, needed)?,
    };
    let mut gaps: Vec<usize> = (0..n).map(|_| rng.random_range(lo_gap..=hi_gap)).collect();
    gaps.sort_unstable();

    let mut text = String::new();
    let mut chars = 0usize;
    let mut offsets = Vec::with_capacity(n);
    let mut append = |s: &str, text: &mut String| -> usize {
        if !text.is_empty() {
            text.push(' ');
            chars += 1;
        }
        let at = chars;
        text.push_str(s);
        chars += s.chars().count();
        at
    };
    let mut f = 0;
    for g in 0..=k {
        while f < n && gaps[f] == g {
            offsets.push(append(&sample.facts[f].text, &mut text));
            f += 1;
        }
        if g < k {
            append(background[g].0, &mut text);
        }
    }

    let token_count = tok.count(&text) + tok.count_appended(&sample.question, text.is_empty());
    Ok(MixedSample {
        task: sample.clone(),
        text,
        fact_char_offsets: offsets,
        token_count,
        target_tokens: spec.target_tokens,
        background_sentences: k,
        seed: spec.seed,
    })
}

/// Inclusive gap range keeping every fact inside quarter `q` of the final
/// token span: gap `g` puts a fact after the first `g` background sentences.
fn quartile_gaps(q: usize, background: &[(&str, usize)], fact_lens: &[usize], needed: usize) -> Result<(usize, usize)> {
    let total = needed + background.iter().map(|b| b.1).sum::<usize>();
    let facts: usize = fact_lens.iter().sum();
    let mut prefix = Vec::with_capacity(background.len() + 1);
    prefix.push(0usize);
    for b in background {
        prefix.push(prefix.last().unwrap() + b.1);
    }
    let lo = prefix.iter().position(|&p| 4 * p >= (q - 1) * total);
    let hi = prefix.iter().rposition(|&p| 4 * (p + facts) <= q * total);
    match (lo, hi) {
        (Some(lo), Some(hi)) if lo <= hi => Ok((lo, hi)),
        _ => Err(Error::Quartile {
            quartile: q,
            reason: format!("{facts} fact tokens do not fit in a quarter of {total} tokens"),
        }),
    }
}

/// [`mix`] with every fact inside quarter `quartile` of the context.
pub fn place_at_depth(
    sample: &TaskSample,
    corpus: &BackgroundCorpus,
    quartile: u8,
    tok: &Tokenizer,
    budget: usize,
    seed: u64,
) -> Result<MixedSample> {
    let spec = MixSpec {
        target_tokens: budget,
        placement: Placement::Quartile(quartile),
        seed,
    };
    mix(sample, corpus, &spec, tok)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tokenizer::build_vocab;
    use crate::world::{gen_task, template_sentences, TaskId};

    fn setup() -> (BackgroundCorpus, Tokenizer) {
        let texts = [
            "The rain fell on the quiet town. A dog barked twice. Nobody answered the door.",
            "Ships left the harbour at dawn. The sea was calm and grey. Gulls followed them out.",
        ];
        let corpus = BackgroundCorpus::from_texts(&texts).unwrap();
        let sents: Vec<&str> = corpus.sentences().collect();
        let tok = build_vocab(&sents, &template_sentences(), 100);
        (corpus, tok)
    }

    #[test]
    fn no_noise_budget_has_no_background() {
        let (corpus, tok) = setup();
        let s = gen_task(TaskId::Qa1, 4, 1).unwrap();
        let need: usize = s.facts.iter().map(|f| tok.count(&f.text)).sum::<usize>() + tok.count(&s.question);
        let spec = MixSpec {
            target_tokens: need,
            placement: Placement::Uniform,
            seed: 3,
        };
        let m = mix(&s, &corpus, &spec, &tok).unwrap();
        assert_eq!(m.background_sentences, 0);
        assert_eq!(m.token_count, need);
        assert_eq!(m.text, s.fact_texts().join(" "));
    }

    #[test]
    fn budget_is_respected_and_facts_recovered() {
        let (corpus, tok) = setup();
        let s = gen_task(TaskId::Qa2, 6, 9).unwrap();
        let spec = MixSpec {
            target_tokens: 70,
            placement: Placement::Uniform,
            seed: 5,
        };
        let m = mix(&s, &corpus, &spec, &tok).unwrap();
        assert!(m.token_count <= 70);
        assert!(m.background_sentences > 0);
        assert_eq!(tok.count(&m.input_text()), m.token_count);
        assert_eq!(m.extract_facts(), s.fact_texts());
    }

    #[test]
    fn too_small_budget_is_an_error() {
        let (corpus, tok) = setup();
        let s = gen_task(TaskId::Qa1, 4, 1).unwrap();
        let spec = MixSpec {
            target_tokens: 5,
            placement: Placement::Uniform,
            seed: 0,
        };
        assert!(matches!(mix(&s, &corpus, &spec, &tok), Err(Error::Budget { .. })));
    }

    #[test]
    fn exhausted_corpus_is_an_error() {
        let (corpus, tok) = setup();
        let s = gen_task(TaskId::Qa1, 2, 1).unwrap();
        let spec = MixSpec {
            target_tokens: 10_000,
            placement: Placement::Uniform,
            seed: 0,
        };
        assert!(matches!(mix(&s, &corpus, &spec, &tok), Err(Error::CorpusExhausted)));
    }

    #[test]
    fn bad_quartile_is_rejected() {
        let (corpus, tok) = setup();
        let s = gen_task(TaskId::Qa1, 2, 1).unwrap();
        assert!(place_at_depth(&s, &corpus, 5, &tok, 60, 0).is_err());
        assert!(place_at_depth(&s, &corpus, 0, &tok, 60, 0).is_err());
    }
}
