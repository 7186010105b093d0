//! Tokenization shared by dialogues, corpus captions and search queries.

/// Lowercases, splits on whitespace and strips ASCII punctuation.
///
/// Tokens that read as numbers (`-30`, `0.5`) keep their sign and decimal
/// point so that numeric arguments survive as single copyable tokens.
/// Tokens left empty after stripping are dropped.
pub fn tokenize(text: &str) -> Vec<String> {
    text.split_whitespace()
        .filter_map(|raw| {
            let lower = raw.to_lowercase();
            let trimmed = lower.trim_matches(|c: char| c.is_ascii_punctuation() && c != '-' && c != '.');
            let trimmed = trimmed.trim_end_matches('.');
            if is_number(trimmed) {
                return Some(trimmed.to_string());
            }
            let cleaned: String = lower.chars().filter(|c| !c.is_ascii_punctuation() || *c == '_').collect();
            (!cleaned.is_empty()).then_some(cleaned)
        })
        .collect()
}

/// `-?digits(.digits)?`
pub fn is_number(token: &str) -> bool {
    let body = token.strip_prefix('-').unwrap_or(token);
    let (whole, frac) = match body.split_once('.') {
        Some((w, f)) => (w, Some(f)),
        None => (body, None),
    };
    !whole.is_empty()
        && whole.bytes().all(|b| b.is_ascii_digit())
        && frac.is_none_or(|f| !f.is_empty() && f.bytes().all(|b| b.is_ascii_digit()))
}

/// Search normalization: [`tokenize`] followed by plural folding (a trailing
/// `s` is dropped from tokens longer than three characters).
pub fn normalize_search_tokens<S: AsRef<str>>(tokens: &[S]) -> Vec<String> {
    tokens
        .iter()
        .flat_map(|t| tokenize(t.as_ref()))
        .map(|t| fold_plural(&t))
        .collect()
}

pub fn fold_plural(token: &str) -> String {
    if token.chars().count() > 3 && token.ends_with('s') {
        token[..token.len() - 1].to_string()
    } else {
        token.to_string()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn strips_punctuation_and_lowercases() {
        assert_eq!(tokenize("Find me a RED scooter, please!"), ["find", "me", "a", "red", "scooter", "please"]);
        assert_eq!(tokenize("Is this fine?"), ["is", "this", "fine"]);
        assert_eq!(tokenize("don't"), ["dont"]);
        assert_eq!(tokenize(" ... "), Vec::<String>::new());
    }

    #[test]
    fn numbers_stay_whole() {
        assert_eq!(tokenize("by -30 percent."), ["by", "-30", "percent"]);
        assert_eq!(tokenize("intensity 0.5, ok"), ["intensity", "0.5", "ok"]);
        assert_eq!(tokenize("(40)"), ["40"]);
        assert_eq!(tokenize("sky-blue"), ["skyblue"]);
    }

    #[test]
    fn plural_folding() {
        assert_eq!(normalize_search_tokens(&["Scooters", "bus", "cats", "glass"]), ["scooter", "bus", "cat", "glas"]);
    }
}
