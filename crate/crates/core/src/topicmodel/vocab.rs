use indexmap::IndexSet;

/// Bijection between terms and dense ids `0..len`, in insertion order.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Vocabulary {
    terms: IndexSet<String>,
}

impl Vocabulary {
    /// `None` if `terms` contains duplicates.
    pub fn from_terms(terms: Vec<String>) -> Option<Self> {
        let n = terms.len();
        let set: IndexSet<String> = terms.into_iter().collect();
        (set.len() == n).then_some(Self { terms: set })
    }

    /// Returns true when the term was new.
    pub fn insert(&mut self, term: &str) -> bool {
        if self.terms.contains(term) {
            return false;
        }
        self.terms.insert(term.to_owned())
    }

    pub fn id(&self, term: &str) -> Option<usize> {
        self.terms.get_index_of(term)
    }

    pub fn term(&self, id: usize) -> Option<&str> {
        self.terms.get_index(id).map(String::as_str)
    }

    pub fn len(&self) -> usize {
        self.terms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = &str> {
        self.terms.iter().map(String::as_str)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn dense_ids_in_insertion_order() {
        let mut v = Vocabulary::default();
        assert!(v.insert("b"));
        assert!(v.insert("a"));
        assert!(!v.insert("b"));
        assert_eq!(v.id("b"), Some(0));
        assert_eq!(v.id("a"), Some(1));
        assert_eq!(v.term(1), Some("a"));
        assert_eq!(v.len(), 2);
    }

    #[test]
    fn duplicates_rejected() {
        assert!(Vocabulary::from_terms(vec!["x".into(), "x".into()]).is_none());
    }
}
