//! Word and sentence segmentation shared by retrieval and metrics.

/// Case-folded words with leading and trailing punctuation removed.
pub fn words(text: &str) -> Vec<String> {
    text.split_whitespace()
        .map(|w| w.trim_matches(|c: char| !c.is_alphanumeric()).to_lowercase())
        .filter(|w| !w.is_empty())
        .collect()
}

/// Splits after `.`, `!` or `?` followed by whitespace or the end of text.
pub fn split_sentences(text: &str) -> Vec<String> {
    let mut out = Vec::new();
    let mut start = 0;
    let mut chars = text.char_indices().peekable();
    while let Some((i, c)) = chars.next() {
        if !matches!(c, '.' | '!' | '?') {
            continue;
        }
        let boundary = match chars.peek() {
            None => true,
            Some((_, next)) => next.is_whitespace(),
        };
        if boundary {
            let end = i + c.len_utf8();
            push_trimmed(&mut out, &text[start..end]);
            start = end;
        }
    }
    push_trimmed(&mut out, &text[start..]);
    out
}

fn push_trimmed(out: &mut Vec<String>, segment: &str) {
    let s = segment.trim();
    if !s.is_empty() {
        out.push(s.to_string());
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn words_fold_case_and_strip_punctuation() {
        assert_eq!(words("Built in 1889, (Paris)!"), ["built", "in", "1889", "paris"]);
        assert!(words("  ... ").is_empty());
    }

    #[test]
    fn sentences() {
        assert_eq!(split_sentences("A b. C d."), ["A b.", "C d."]);
        assert_eq!(split_sentences("No terminator"), ["No terminator"]);
        assert_eq!(
            split_sentences("Built in 1889. It is 330 m tall! Really?"),
            ["Built in 1889.", "It is 330 m tall!", "Really?"]
        );
        assert_eq!(split_sentences("v1.2 is out. ok"), ["v1.2 is out.", "ok"]);
        assert!(split_sentences("  ").is_empty());
    }
}
