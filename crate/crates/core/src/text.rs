//! Tokenization and stemming shared by every scoring path.
//!
//! A token is a maximal run of alphanumeric characters taken from the
//! NFC-normalized, lowercased input. Corpus statistics (document lengths,
//! document frequencies), BM25+, term matching and the quality metrics all
//! go through [`tokenize`], so they agree on what a "word" is.

use std::collections::HashSet;

use unicode_normalization::UnicodeNormalization;

/// Splits `text` into lowercase alphanumeric tokens.
pub fn tokenize(text: &str) -> Vec<String> {
    let normalized: String = text.nfc().collect::<String>().to_lowercase();
    let mut tokens = Vec::new();
    let mut current = String::new();
    for ch in normalized.chars() {
        if ch.is_alphanumeric() {
            current.push(ch);
        } else if !current.is_empty() {
            tokens.push(std::mem::take(&mut current));
        }
    }
    if !current.is_empty() {
        tokens.push(current);
    }
    tokens
}

/// Canonical key for a (possibly multi-word) term: its tokens joined by a
/// single space.
pub fn term_key(term: &str) -> String {
    tokenize(term).join(" ")
}

pub fn token_set(text: &str) -> HashSet<String> {
    tokenize(text).into_iter().collect()
}

/// Jaccard similarity of two token sets. Two empty sets are identical (1.0).
pub fn jaccard<T: Eq + std::hash::Hash>(a: &HashSet<T>, b: &HashSet<T>) -> f64 {
    if a.is_empty() && b.is_empty() {
        return 1.0;
    }
    let inter = a.intersection(b).count();
    let union = a.len() + b.len() - inter;
    inter as f64 / union as f64
}

// Ordered longest-first within each group so that e.g. "ations" wins over "s".
const SUFFIXES: &[(&str, &str)] = &[
    ("ational", "ate"),
    ("ations", "ate"),
    ("ation", "ate"),
    ("nesses", ""),
    ("ments", ""),
    ("ities", ""),
    ("ingly", ""),
    ("ness", ""),
    ("ment", ""),
    ("ings", ""),
    ("ity", ""),
    ("ies", "y"),
    ("ing", ""),
    ("ed", ""),
    ("ly", ""),
    ("s", ""),
];

const MIN_STEM: usize = 3;

/// Suffix-stripping stemmer.
///
/// Strips the first matching suffix from a fixed table as long as at least
/// three characters remain, then undoubles a trailing consonant pair
/// ("admitted" -> "admitt" -> "admit"). Words ending in "ss" keep their
/// final "s". Non-ASCII words are returned unchanged.
pub fn stem(word: &str) -> String {
    if !word.is_ascii() || word.len() <= MIN_STEM {
        return word.to_string();
    }
    for (suffix, replacement) in SUFFIXES {
        if let Some(base) = word.strip_suffix(suffix) {
            if base.len() < MIN_STEM || (*suffix == "s" && base.ends_with('s')) {
                continue;
            }
            let mut out = format!("{base}{replacement}");
            let bytes = out.as_bytes();
            let n = bytes.len();
            if replacement.is_empty()
                && n > MIN_STEM
                && bytes[n - 1] == bytes[n - 2]
                && !b"aeioulsz".contains(&bytes[n - 1])
            {
                out.pop();
            }
            return out;
        }
    }
    word.to_string()
}

pub fn stem_all(tokens: &[String]) -> Vec<String> {
    tokens.iter().map(|t| stem(t)).collect()
}

/// True when `needle` occurs as a contiguous run inside `haystack`.
pub fn contains_run<T: PartialEq>(haystack: &[T], needle: &[T]) -> bool {
    if needle.is_empty() {
        return false;
    }
    haystack.windows(needle.len()).any(|w| w == needle)
}
