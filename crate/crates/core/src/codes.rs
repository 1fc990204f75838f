//! Canonical legal codes and the citation grammar built on them.
//!
//! Normalization table, applied in order:
//!
//! 1. NFC-normalize, uppercase, NFC-normalize again.
//! 2. Split on every non-alphanumeric character; empty segments vanish.
//! 3. Drop locator words: `ART`, `ARTS`, `ARTICLE`, `ARTICLES`, `SEC`,
//!    `SECT`, `SECTION`, `SECTIONS`, `PARA`, `PARAGRAPH`, `ABS`, `NO`, `NR`.
//! 4. Move alphabetic segments of two or more letters (the code family,
//!    e.g. `CC`) in front of the remaining segments, keeping relative order
//!    inside both groups. Single letters stay with the locators (`2(b)`).
//! 5. Join with `-`.
//!
//! So `"art. 1382, CC"`, `"CC 1382"` and `"cc-1382"` all become `CC-1382`.

use unicode_normalization::UnicodeNormalization;

const LOCATOR_WORDS: &[&str] = &[
    "ART", "ARTS", "ARTICLE", "ARTICLES", "SEC", "SECT", "SECTION", "SECTIONS", "PARA",
    "PARAGRAPH", "ABS", "NO", "NR",
];

/// Canonical form of a legal code. Idempotent; empty input gives `""`.
pub fn normalize_code(raw: &str) -> String {
    let upper: String = raw.nfc().collect::<String>().to_uppercase().nfc().collect();
    let segments: Vec<&str> = upper
        .split(|c: char| !c.is_alphanumeric())
        .filter(|s| !s.is_empty() && !LOCATOR_WORDS.contains(s))
        .collect();
    let (family, locators): (Vec<&str>, Vec<&str>) = segments
        .into_iter()
        .partition(|s| s.chars().nth(1).is_some() && s.chars().all(char::is_alphabetic));
    family
        .into_iter()
        .chain(locators)
        .collect::<Vec<_>>()
        .join("-")
}

pub fn segments(code: &str) -> Vec<&str> {
    if code.is_empty() {
        Vec::new()
    } else {
        code.split('-').collect()
    }
}

pub fn is_normalized(code: &str) -> bool {
    !code.is_empty() && normalize_code(code) == code
}

/// A `[...]`-delimited fragment found in free text.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CitationFragment<'a> {
    pub text: &'a str,
    /// Offset of the opening bracket.
    pub start: usize,
}

impl<'a> CitationFragment<'a> {
    /// The bracketed code when the fragment is syntactically a citation,
    /// i.e. `[` + normalized code + `]`.
    pub fn code(&self) -> Option<&'a str> {
        let inner = self.text.strip_prefix('[')?.strip_suffix(']')?;
        is_normalized(inner).then_some(inner)
    }
}

/// Finds citation-like fragments. A fragment opens at `[` and runs to the
/// next `]`; if a newline or another `[` comes first, the fragment is
/// unclosed and ends there.
pub fn citation_fragments(text: &str) -> Vec<CitationFragment<'_>> {
    let mut out = Vec::new();
    let mut rest = 0;
    while let Some(pos) = text[rest..].find('[') {
        let start = rest + pos;
        let after = start + 1;
        let tail = &text[after..];
        let end = match tail.find([']', '[', '\n']) {
            Some(i) if tail[i..].starts_with(']') => after + i + 1,
            Some(i) => after + i,
            None => text.len(),
        };
        out.push(CitationFragment {
            text: text[start..end].trim_end(),
            start,
        });
        rest = end;
    }
    out
}
