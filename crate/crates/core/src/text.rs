//! Sentence segmentation shared by the mixer and retrieval chunking.

fn is_terminal(c: char) -> bool {
    matches!(c, '.' | '!' | '?')
}

fn is_closer(c: char) -> bool {
    matches!(c, '"' | '\'' | ')' | ']' | '\u{2019}' | '\u{201D}')
}

/// Split on `.`, `!` or `?` (optionally followed by closing quotes or
/// brackets) when the next character is whitespace or the end of text.
/// Delimiters stay with their sentence; whitespace runs inside a sentence
/// are collapsed to one space.
pub fn split_sentences(text: &str) -> Vec<String> {
    let chars: Vec<char> = text.chars().collect();
    let mut out = Vec::new();
    let mut cur = String::new();
    let mut i = 0;
    let mut push = |cur: &mut String| {
        let s = cur.split_whitespace().collect::<Vec<_>>().join(" ");
        if !s.is_empty() {
            out.push(s);
        }
        cur.clear();
    };
    while i < chars.len() {
        let c = chars[i];
        cur.push(c);
        i += 1;
        if is_terminal(c) {
            while i < chars.len() && (is_terminal(chars[i]) || is_closer(chars[i])) {
                cur.push(chars[i]);
                i += 1;
            }
            if i == chars.len() || chars[i].is_whitespace() {
                push(&mut cur);
            }
        }
    }
    push(&mut cur);
    out
}
