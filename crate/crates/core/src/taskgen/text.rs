use std::collections::BTreeMap;

use crate::tensorstore::Span;

/// Appends text while tracking character offsets of labeled pieces.
#[derive(Debug, Clone, Default)]
pub struct PromptBuilder {
    text: String,
    chars: usize,
    segments: BTreeMap<String, Vec<Span>>,
}

impl PromptBuilder {
    pub fn new() -> Self {
        Self::default()
    }

    /// Current length in characters.
    pub fn pos(&self) -> usize {
        self.chars
    }

    pub fn push(&mut self, s: &str) -> Span {
        let start = self.chars;
        self.text.push_str(s);
        self.chars += s.chars().count();
        Span::new(start, self.chars)
    }

    /// Appends `s` and records it under `role`.
    pub fn push_seg(&mut self, role: &str, s: &str) -> Span {
        let span = self.push(s);
        self.mark(role, span);
        span
    }

    pub fn mark(&mut self, role: &str, span: Span) {
        self.segments
            .entry(role.to_string())
            .or_default()
            .push(span);
    }

    /// Records `[start, pos)` under `role`.
    pub fn close(&mut self, role: &str, start: usize) -> Span {
        let span = Span::new(start, self.chars);
        self.mark(role, span);
        span
    }

    pub fn finish(self) -> (String, BTreeMap<String, Vec<Span>>) {
        (self.text, self.segments)
    }
}

/// Lowercases, drops punctuation and collapses whitespace.
pub fn normalize_text(s: &str) -> String {
    let cleaned: String = s
        .chars()
        .map(|c| {
            if c.is_alphanumeric() || c.is_whitespace() {
                c.to_lowercase().next().unwrap_or(c)
            } else {
                ' '
            }
        })
        .collect();
    cleaned.split_whitespace().collect::<Vec<_>>().join(" ")
}

/// English word for small counts used in narratives.
pub fn number_word(n: usize) -> String {
    const WORDS: [&str; 21] = [
        "zero",
        "one",
        "two",
        "three",
        "four",
        "five",
        "six",
        "seven",
        "eight",
        "nine",
        "ten",
        "eleven",
        "twelve",
        "thirteen",
        "fourteen",
        "fifteen",
        "sixteen",
        "seventeen",
        "eighteen",
        "nineteen",
        "twenty",
    ];
    WORDS
        .get(n)
        .map_or_else(|| n.to_string(), |w| w.to_string())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensorstore::char_slice;

    #[test]
    fn builder_spans_count_chars() {
        let mut b = PromptBuilder::new();
        b.push("é: ");
        let s = b.push_seg("x", "Oliver");
        let (text, segs) = b.finish();
        assert_eq!(s, Span::new(3, 9));
        assert_eq!(char_slice(&text, segs["x"][0]), "Oliver");
    }

    #[test]
    fn normalization() {
        assert_eq!(
            normalize_text("  Oliver is\tReading, a book. "),
            "oliver is reading a book"
        );
    }
}
