use unicode_normalization::char::is_combining_mark;
use unicode_normalization::UnicodeNormalization;

/// Normalizes a place name for index lookups: lowercase, strip diacritics,
/// trim and collapse internal whitespace to single spaces.
pub fn normalize_name(s: &str) -> String {
    let lowered = s.to_lowercase();
    let mut out = String::with_capacity(lowered.len());
    let mut pending_space = false;
    for c in lowered.nfd().filter(|c| !is_combining_mark(*c)) {
        if c.is_whitespace() {
            pending_space = !out.is_empty();
            continue;
        }
        if pending_space {
            out.push(' ');
            pending_space = false;
        }
        match fold_letter(c) {
            Some(folded) => out.push_str(folded),
            None => out.push(c),
        }
    }
    out
}

/// Latin letters that have no canonical decomposition.
fn fold_letter(c: char) -> Option<&'static str> {
    Some(match c {
        'ł' => "l",
        'ø' => "o",
        'đ' => "d",
        'ð' => "d",
        'ı' => "i",
        'æ' => "ae",
        'œ' => "oe",
        'ß' => "ss",
        'þ' => "th",
        _ => return None,
    })
}

/// Name with spaces, hyphens and apostrophes removed, the form a place name
/// takes when written as a hashtag.
pub fn compact_name(normalized: &str) -> String {
    normalized
        .chars()
        .filter(|c| !matches!(c, ' ' | '-' | '\''))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn folds_case_diacritics_and_space() {
        assert_eq!(normalize_name("  São   Paulo "), "sao paulo");
        assert_eq!(normalize_name("MÜNCHEN"), "munchen");
        assert_eq!(normalize_name("Łódź"), "lodz");
        assert_eq!(normalize_name("İstanbul"), "istanbul");
        assert_eq!(normalize_name("Saint-Étienne"), "saint-etienne");
        assert_eq!(normalize_name("Ελλάδα"), "ελλαδα");
        assert_eq!(normalize_name(""), "");
    }

    #[test]
    fn compact_drops_separators() {
        assert_eq!(compact_name("united kingdom"), "unitedkingdom");
        assert_eq!(compact_name("stoke-on-trent"), "stokeontrent");
    }
}
