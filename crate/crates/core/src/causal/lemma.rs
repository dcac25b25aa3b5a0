//! A small suffix-stripping lemmatizer.
//!
//! Suffixes are removed repeatedly until none applies, so the result is a
//! fixed point: `lemmatize(lemmatize(w)) == lemmatize(w)`. The output is a
//! matching key, not a dictionary form ("pregnancy" and "pregnant" both map
//! to "pregn").

const MIN_STEM: usize = 3;

/// `(suffix, replacement)`, tried in order; the first applicable rule wins.
const RULES: &[(&str, &str)] = &[
    ("ies", "y"),
    ("ied", "y"),
    ("ancy", ""),
    ("ency", ""),
    ("ness", ""),
    ("ment", ""),
    ("ings", ""),
    ("ing", ""),
    ("ion", ""),
    ("ers", ""),
    ("er", ""),
    ("ant", ""),
    ("ent", ""),
    ("ed", ""),
    ("es", ""),
    ("ly", ""),
    ("s", ""),
    ("e", ""),
];

fn strip_once(word: &str) -> Option<String> {
    for &(suffix, replacement) in RULES {
        let Some(stem) = word.strip_suffix(suffix) else { continue };
        if stem.chars().count() < MIN_STEM {
            continue;
        }
        if suffix == "s" && (stem.ends_with('s') || stem.ends_with('u') || stem.ends_with('i')) {
            continue;
        }
        return Some(format!("{stem}{replacement}"));
    }
    None
}

/// Lowercases `word` and strips suffixes to a fixed point.
pub fn lemmatize(word: &str) -> String {
    let mut current = word.to_lowercase();
    while let Some(next) = strip_once(&current) {
        if next == current {
            break;
        }
        current = next;
    }
    current
}
