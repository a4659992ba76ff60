//! Turns dataset records into token segments for the recurrent model.
//!
//! The prompt is `context question <q>`, split into segments from the end so
//! that only the first segment can be short. The last segment holds at most
//! `segment_len - ANSWER_RESERVE` prompt tokens; the reserve is room for the
//! answer tokens fed back during training and greedy decoding.

use crate::dataset::DatasetRecord;
use crate::error::{Error, Result};
use crate::rmt::Document;
use crate::tokenizer::{Mode, Tokenizer};

pub const ANSWER_RESERVE: usize = 8;

/// Prompt token ids: context, question and the question marker.
pub fn prompt_ids(tok: &Tokenizer, record: &DatasetRecord) -> Vec<usize> {
    let mut ids = tok.encode(&record.input_text());
    ids.push(tok.question);
    ids
}

/// Answer token ids as they follow the question marker.
pub fn answer_ids(tok: &Tokenizer, answer: &str) -> Vec<usize> {
    match tok.mode() {
        Mode::Word => tok.encode(answer),
        Mode::Bpe => tok.encode(&format!(" {answer}")),
    }
}

fn check_len(segment_len: usize) -> Result<()> {
    if segment_len <= ANSWER_RESERVE {
        return Err(Error::Config(format!(
            "segment_len {segment_len} must exceed the answer reserve of {ANSWER_RESERVE}"
        )));
    }
    Ok(())
}

/// Segments needed for a prompt of `prompt_len` tokens.
pub fn segments_for_prompt(prompt_len: usize, segment_len: usize) -> usize {
    let last = segment_len - ANSWER_RESERVE;
    1 + prompt_len.saturating_sub(last).div_ceil(segment_len)
}

/// Largest context-plus-question token budget that fits in `n` segments.
pub fn tokens_for_segments(n: usize, segment_len: usize) -> usize {
    n * segment_len - ANSWER_RESERVE - 1
}

pub fn split_prompt(prompt: &[usize], segment_len: usize) -> Result<Vec<Vec<usize>>> {
    check_len(segment_len)?;
    let last = (segment_len - ANSWER_RESERVE).min(prompt.len());
    let (head, tail) = prompt.split_at(prompt.len() - last);
    let mut segments: Vec<Vec<usize>> = head.rchunks(segment_len).rev().map(<[usize]>::to_vec).collect();
    segments.push(tail.to_vec());
    Ok(segments)
}

/// Training document: the answer is appended to the last segment and every
/// answer token, plus the closing end-of-sequence, is a target.
pub fn encode_train(tok: &Tokenizer, record: &DatasetRecord, segment_len: usize) -> Result<Document> {
    let answer = answer_ids(tok, &record.answer);
    if answer.is_empty() || answer.len() > ANSWER_RESERVE {
        return Err(Error::Invalid(format!(
            "answer `{}` encodes to {} tokens; expected 1..={ANSWER_RESERVE}",
            record.answer,
            answer.len()
        )));
    }
    let mut segments = split_prompt(&prompt_ids(tok, record), segment_len)?;
    let last = segments.last_mut().expect("at least one segment");
    let start = last.len() - 1;
    last.extend_from_slice(&answer);
    let targets = answer
        .iter()
        .chain(std::iter::once(&tok.eos))
        .enumerate()
        .map(|(i, &t)| (start + i, t))
        .collect();
    Ok(Document { segments, targets })
}
