//! Word tokenization shared by corpus statistics and the readability formulae.

/// Characters stripped from token edges. Anything that is not a letter or a
/// digit counts as punctuation here.
fn is_punct(c: char) -> bool {
    !c.is_alphanumeric()
}

/// Splits on whitespace, strips leading/trailing punctuation and drops tokens
/// that consist only of punctuation.
pub fn words(text: &str) -> Vec<&str> {
    text.split_whitespace()
        .map(|tok| tok.trim_matches(is_punct))
        .filter(|tok| !tok.is_empty())
        .collect()
}

/// Number of Unicode scalar values in a (punctuation-stripped) word.
pub fn char_len(word: &str) -> usize {
    word.chars().count()
}
