//! Text folding and token-set similarity shared by extraction and matching.

use std::collections::BTreeSet;

use unicode_normalization::char::is_combining_mark;
use unicode_normalization::UnicodeNormalization;

/// Fixed English stop-word list used for relaxed queries, key generation and
/// venue comparison. Exactly 50 words.
pub const STOP_WORDS: [&str; 50] = [
    "a", "about", "an", "and", "are", "as", "at", "based", "be", "been", "between", "but", "by",
    "can", "do", "does", "for", "from", "how", "in", "into", "is", "it", "its", "no", "not", "of",
    "on", "or", "our", "over", "than", "that", "the", "their", "these", "this", "those",
    "through", "to", "toward", "towards", "under", "using", "via", "was", "we", "what", "which",
    "with",
];

/// Venue abbreviations expanded before venue similarity is computed.
pub const VENUE_ABBREVIATIONS: [(&str, &str); 24] = [
    ("acad", "academy"),
    ("adv", "advances"),
    ("am", "american"),
    ("ann", "annals"),
    ("assoc", "association"),
    ("biol", "biology"),
    ("chem", "chemistry"),
    ("comput", "computing"),
    ("conf", "conference"),
    ("eng", "engineering"),
    ("inf", "information"),
    ("int", "international"),
    ("intl", "international"),
    ("j", "journal"),
    ("lett", "letters"),
    ("med", "medicine"),
    ("natl", "national"),
    ("phys", "physics"),
    ("proc", "proceedings"),
    ("res", "research"),
    ("rev", "review"),
    ("sci", "science"),
    ("soc", "society"),
    ("trans", "transactions"),
];

pub fn is_stop_word(word: &str) -> bool {
    STOP_WORDS.binary_search(&word).is_ok()
}

/// NFKC, strip diacritics, lowercase.
pub fn fold(s: &str) -> String {
    let compat: String = s.nfkc().collect();
    compat
        .nfd()
        .filter(|c| !is_combining_mark(*c))
        .flat_map(char::to_lowercase)
        .collect()
}

/// Folded alphanumeric tokens; punctuation acts as a separator.
pub fn tokens(s: &str) -> Vec<String> {
    fold(s)
        .split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
        .map(str::to_owned)
        .collect()
}

pub fn content_words(s: &str) -> Vec<String> {
    tokens(s).into_iter().filter(|t| !is_stop_word(t)).collect()
}

/// Token-set Jaccard similarity. Two empty sets score 0.
pub fn jaccard<T: Ord>(a: &BTreeSet<T>, b: &BTreeSet<T>) -> f64 {
    let union = a.union(b).count();
    if union == 0 {
        return 0.0;
    }
    a.intersection(b).count() as f64 / union as f64
}

pub fn title_similarity(a: &str, b: &str) -> f64 {
    let a: BTreeSet<String> = tokens(a).into_iter().collect();
    let b: BTreeSet<String> = tokens(b).into_iter().collect();
    jaccard(&a, &b)
}

fn venue_tokens(s: &str) -> BTreeSet<String> {
    tokens(s)
        .into_iter()
        .map(|t| {
            match VENUE_ABBREVIATIONS.binary_search_by(|(abbr, _)| abbr.cmp(&t.as_str())) {
                Ok(i) => VENUE_ABBREVIATIONS[i].1.to_owned(),
                Err(_) => t,
            }
        })
        .filter(|t| !is_stop_word(t))
        .collect()
}

pub fn venue_similarity(a: &str, b: &str) -> f64 {
    jaccard(&venue_tokens(a), &venue_tokens(b))
}

/// Lowercase ASCII approximation used for citation keys.
pub fn ascii_fold(s: &str) -> String {
    fold(s).chars().filter(char::is_ascii_alphanumeric).collect()
}

/// Collapse runs of whitespace to single spaces and trim.
pub fn squash_whitespace(s: &str) -> String {
    s.split_whitespace().collect::<Vec<_>>().join(" ")
}
