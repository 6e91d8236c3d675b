//! Whitespace token rules shared by the corpus filter and the classifier
//! preprocessor.

pub fn is_hashtag(token: &str) -> bool {
    token.starts_with('#')
}

pub fn is_mention(token: &str) -> bool {
    token.starts_with('@')
}

/// `http://`, `https://` or a bare `t.co/` link.
pub fn is_url(token: &str) -> bool {
    let lower = token.to_lowercase();
    lower.starts_with("http://") || lower.starts_with("https://") || lower.starts_with("t.co/")
}

/// Tokens that do not count as words: hashtags, mentions and URLs.
pub fn is_markup(token: &str) -> bool {
    is_hashtag(token) || is_mention(token) || is_url(token)
}

pub fn count_plain_words(text: &str) -> usize {
    text.split_whitespace().filter(|t| !is_markup(t)).count()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn markup_rules() {
        assert!(is_url("https://x.pl/a"));
        assert!(is_url("HTTP://X"));
        assert!(is_url("t.co/abc"));
        assert!(!is_url("tco/abc"));
        assert!(is_hashtag("#tsue"));
        assert!(is_mention("@ktoś"));
        assert_eq!(count_plain_words("tylko #tag @user http://a.b c d e f g"), 6);
        assert_eq!(count_plain_words("#tag a b @user c d t.co/x e"), 5);
    }
}
