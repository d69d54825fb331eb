use std::collections::BTreeSet;

const ENGLISH_STOPWORDS: &str = include_str!("../../data/stopwords.txt");
const JAVA_KEYWORDS: &str = include_str!("../../data/java_keywords.txt");

/// A set of lowercase tokens loaded from a plain-text list.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct WordList(BTreeSet<String>);

impl WordList {
    pub fn english_stopwords() -> Self {
        parse_word_list(ENGLISH_STOPWORDS)
    }

    pub fn java_keywords() -> Self {
        parse_word_list(JAVA_KEYWORDS)
    }

    pub fn contains(&self, word: &str) -> bool {
        self.0.contains(word)
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

impl<S: Into<String>> FromIterator<S> for WordList {
    fn from_iter<I: IntoIterator<Item = S>>(iter: I) -> Self {
        Self(iter.into_iter().map(|s| s.into().to_lowercase()).collect())
    }
}

/// One token per line; `#` starts a comment; blank lines ignored.
pub fn parse_word_list(text: &str) -> WordList {
    text.lines()
        .map(|l| l.split('#').next().unwrap_or("").trim())
        .filter(|l| !l.is_empty())
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_comments_and_blanks() {
        let list = parse_word_list("# header\nFoo\n\n  bar  # trailing\n");
        assert_eq!(list.len(), 2);
        assert!(list.contains("foo"));
        assert!(list.contains("bar"));
    }

    #[test]
    fn shipped_lists_load() {
        assert!(WordList::english_stopwords().contains("should"));
        assert!(WordList::java_keywords().contains("for"));
        assert!(!WordList::java_keywords().contains("auditor"));
    }
}
