use super::document::Sentence;

/// Naive sentence splitter and tokenizer.
///
/// Sentences end at `.`, `!` or `?` when followed by whitespace and then an
/// uppercase letter or a digit. Tokens are whitespace-separated runs with
/// every punctuation character split off as its own token. Offsets are in
/// characters and start at `base`.
pub fn fallback_tokenize(raw: &str) -> Vec<Sentence> {
    tokenize_from(raw, 0, 0)
}

pub(crate) fn tokenize_from(raw: &str, base: usize, first_index: usize) -> Vec<Sentence> {
    let chars: Vec<char> = raw.chars().collect();
    let mut sentences = Vec::new();
    let mut start = 0;
    let mut i = 0;
    while i < chars.len() {
        if matches!(chars[i], '.' | '!' | '?') && ends_sentence(&chars, i) {
            push_sentence(&chars, start, i + 1, base, first_index, &mut sentences);
            start = i + 1;
        }
        i += 1;
    }
    push_sentence(&chars, start, chars.len(), base, first_index, &mut sentences);
    sentences
}

fn ends_sentence(chars: &[char], i: usize) -> bool {
    let mut j = i + 1;
    if j >= chars.len() || !chars[j].is_whitespace() {
        return false;
    }
    while j < chars.len() && chars[j].is_whitespace() {
        j += 1;
    }
    j < chars.len() && (chars[j].is_uppercase() || chars[j].is_ascii_digit())
}

fn push_sentence(
    chars: &[char],
    from: usize,
    to: usize,
    base: usize,
    first_index: usize,
    out: &mut Vec<Sentence>,
) {
    let mut tokens = Vec::new();
    let mut offsets = Vec::new();
    let mut i = from;
    while i < to {
        let c = chars[i];
        if c.is_whitespace() {
            i += 1;
        } else if is_punct(c) {
            tokens.push(c.to_string());
            offsets.push((base + i, base + i + 1));
            i += 1;
        } else {
            let s = i;
            while i < to && !chars[i].is_whitespace() && !is_punct(chars[i]) {
                i += 1;
            }
            tokens.push(chars[s..i].iter().collect());
            offsets.push((base + s, base + i));
        }
    }
    if tokens.is_empty() {
        return;
    }
    let char_span = (offsets[0].0, offsets[offsets.len() - 1].1);
    out.push(Sentence {
        index: first_index + out.len(),
        tokens,
        offsets,
        char_span,
    });
}

fn is_punct(c: char) -> bool {
    !c.is_alphanumeric() && !c.is_whitespace()
}
