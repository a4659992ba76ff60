//! Prompts for external LLM evaluation, one template per task.

use crate::error::{Error, Result};
use crate::world::TaskId;

const QA1: &str = include_str!("prompts/qa1.txt");
const QA2: &str = include_str!("prompts/qa2.txt");
const QA3: &str = include_str!("prompts/qa3.txt");
const QA4: &str = include_str!("prompts/qa4.txt");
const QA5: &str = include_str!("prompts/qa5.txt");

pub fn template(task: TaskId) -> &'static str {
    match task {
        TaskId::Qa1 => QA1,
        TaskId::Qa2 => QA2,
        TaskId::Qa3 => QA3,
        TaskId::Qa4 => QA4,
        TaskId::Qa5 => QA5,
    }
}

/// The task template with `context` and `question` substituted. Each slot
/// occurs once, so substitution is a single left-to-right pass and braces in
/// the inputs are never re-expanded.
pub fn build_prompt(task: TaskId, context: &str, question: &str) -> String {
    let t = template(task);
    let (head, rest) = t.split_once("{context}").expect("template has a context slot");
    let (mid, tail) = rest.split_once("{question}").expect("template has a question slot");
    let mut out = String::with_capacity(t.len() + context.len() + question.len());
    out.push_str(head);
    out.push_str(context);
    out.push_str(mid);
    out.push_str(question);
    out.push_str(tail);
    out
}

/// [`build_prompt`] for a task given by name.
pub fn build_prompt_named(task: &str, context: &str, question: &str) -> Result<String> {
    let task: TaskId = task.parse().map_err(|_| Error::UnknownTask(task.to_string()))?;
    Ok(build_prompt(task, context, question))
}
