/// Splits free text into identifier-like tokens: maximal runs of
/// alphanumerics and underscores.
pub fn split_words(text: &str) -> impl Iterator<Item = &str> {
    text.split(|c: char| !(c.is_alphanumeric() || c == '_'))
        .filter(|w| !w.is_empty())
}

/// Camel-case and underscore splitting with the unsplit form kept.
pub fn tokenize_identifier(token: &str) -> Vec<String> {
    tokenize_identifier_with(token, true)
}

/// Splits `token` on underscores and camel-case boundaries and lowercases the
/// pieces. When `keep_unsplit` is set and more than one piece came out, the
/// lowercased original token is appended.
pub fn tokenize_identifier_with(token: &str, keep_unsplit: bool) -> Vec<String> {
    let mut parts: Vec<String> = Vec::new();
    for chunk in token.split('_').filter(|c| !c.is_empty()) {
        split_camel(chunk, &mut parts);
    }
    if keep_unsplit && parts.len() > 1 {
        parts.push(token.to_lowercase());
    }
    parts
}

fn split_camel(chunk: &str, out: &mut Vec<String>) {
    let chars: Vec<char> = chunk.chars().collect();
    let mut start = 0;
    for i in 1..chars.len() {
        let prev = chars[i - 1];
        let cur = chars[i];
        let lower_to_upper = (prev.is_lowercase() || prev.is_ascii_digit()) && cur.is_uppercase();
        // XMLParser -> XML | Parser
        let acronym_end = prev.is_uppercase()
            && cur.is_uppercase()
            && chars.get(i + 1).is_some_and(|n| n.is_lowercase());
        if lower_to_upper || acronym_end {
            out.push(chars[start..i].iter().collect::<String>().to_lowercase());
            start = i;
        }
    }
    if start < chars.len() {
        out.push(chars[start..].iter().collect::<String>().to_lowercase());
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn camel_case() {
        assert_eq!(
            tokenize_identifier("GarbageCollectorThread"),
            vec!["garbage", "collector", "thread", "garbagecollectorthread"]
        );
    }

    #[test]
    fn underscore() {
        assert_eq!(
            tokenize_identifier("node_modules"),
            vec!["node", "modules", "node_modules"]
        );
    }

    #[test]
    fn no_boundary() {
        assert_eq!(tokenize_identifier("Auditor"), vec!["auditor"]);
    }

    #[test]
    fn acronyms_and_digits() {
        assert_eq!(
            tokenize_identifier("XMLParser"),
            vec!["xml", "parser", "xmlparser"]
        );
        assert_eq!(
            tokenize_identifier("Base64Encoder"),
            vec!["base64", "encoder", "base64encoder"]
        );
        assert_eq!(tokenize_identifier("MAX_SIZE"), vec!["max", "size", "max_size"]);
    }

    #[test]
    fn without_unsplit() {
        assert_eq!(
            tokenize_identifier_with("waitEntrylogFlushed", false),
            vec!["wait", "entrylog", "flushed"]
        );
    }

    #[test]
    fn splits_text() {
        let words: Vec<_> = split_words("if (a.isReady()) { foo_bar += 2; }").collect();
        assert_eq!(words, vec!["if", "a", "isReady", "foo_bar", "2"]);
    }

    proptest! {
        #[test]
        fn idempotent_on_single_word_outputs(token in "[A-Za-z][A-Za-z0-9_]{0,20}") {
            for piece in tokenize_identifier(&token) {
                if piece.chars().all(|c| c.is_lowercase() || c.is_ascii_digit()) {
                    prop_assert_eq!(tokenize_identifier(&piece), vec![piece.clone()]);
                }
            }
        }

        #[test]
        fn outputs_are_lowercase(token in "[A-Za-z_]{1,24}") {
            for piece in tokenize_identifier(&token) {
                prop_assert_eq!(piece.to_lowercase(), piece);
            }
        }
    }
}
