//! Normalization and tokenization for mixed Chinese/Latin text.
//!
//! Every component that compares text (the classifier, the BM25 index and
//! anchor matching) goes through [`normalize`] and [`tokenize`], so two
//! strings that differ only in width, case or spacing are treated alike.
//!
//! Tokenization has two paths:
//!
//! - maximal runs of Latin letters and digits become one word token each;
//! - a maximal run of `n` CJK characters contributes its `n` unigrams
//!   followed by its `n - 1` bigrams.
//!
//! Everything else (whitespace, punctuation, symbols) separates tokens and is
//! dropped.

use unicode_normalization::UnicodeNormalization;

/// Tokens of one normalized string.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct TokenList {
    pub tokens: Vec<String>,
    /// Length of the tokenized input, in chars.
    pub source_len: usize,
}

impl TokenList {
    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = &str> {
        self.tokens.iter().map(String::as_str)
    }
}

/// Canonical form used for indexing and matching.
///
/// NFKC (which also folds full-width forms), CJK punctuation mapped to ASCII,
/// lowercase, whitespace runs collapsed to one space, trimmed.
pub fn normalize(text: &str) -> String {
    let mut current = fold_once(text);
    // Case mapping can produce sequences NFKC rewrites again (and vice versa);
    // iterate to a fixed point so normalize stays idempotent.
    for _ in 0..4 {
        let next = fold_once(&current);
        if next == current {
            break;
        }
        current = next;
    }
    collapse_whitespace(&current)
}

fn fold_once(text: &str) -> String {
    let composed: String = text.nfkc().collect();
    let mut out = String::with_capacity(composed.len());
    for c in composed.chars() {
        match map_cjk_punct(c) {
            Some(mapped) => out.push(mapped),
            None => out.extend(c.to_lowercase()),
        }
    }
    out
}

/// Punctuation NFKC leaves alone but which has an obvious half-width twin.
fn map_cjk_punct(c: char) -> Option<char> {
    let mapped = match c {
        '。' | '｡' => '.',
        '、' | '､' => ',',
        '「' | '」' | '『' | '』' | '“' | '”' | '〝' | '〞' => '"',
        '‘' | '’' => '\'',
        '【' | '〔' | '〖' => '[',
        '】' | '〕' | '〗' => ']',
        '《' | '〈' => '<',
        '》' | '〉' => '>',
        '〜' => '~',
        '・' => '·',
        _ => return None,
    };
    Some(mapped)
}

fn collapse_whitespace(text: &str) -> String {
    let mut out = String::with_capacity(text.len());
    for word in text.split_whitespace() {
        if !out.is_empty() {
            out.push(' ');
        }
        out.push_str(word);
    }
    out
}

/// True for ideographs, kana and hangul syllables.
pub fn is_cjk(c: char) -> bool {
    matches!(c as u32,
        0x3040..=0x30FF      // hiragana, katakana
        | 0x3400..=0x4DBF    // extension A
        | 0x4E00..=0x9FFF    // unified ideographs
        | 0xAC00..=0xD7AF    // hangul syllables
        | 0xF900..=0xFAFF    // compatibility ideographs
        | 0x20000..=0x2FA1F  // extensions B onwards
    )
}

fn is_word_char(c: char) -> bool {
    c.is_alphanumeric() && !is_cjk(c)
}

#[derive(Clone, Copy, PartialEq, Eq)]
enum Run {
    None,
    Word,
    Cjk,
}

/// Splits normalized text into word tokens and CJK uni/bigrams.
pub fn tokenize(text: &str) -> TokenList {
    let mut tokens = Vec::new();
    let mut word = String::new();
    let mut cjk: Vec<char> = Vec::new();
    let mut state = Run::None;
    let mut source_len = 0;

    for c in text.chars() {
        source_len += 1;
        let kind = if is_cjk(c) {
            Run::Cjk
        } else if is_word_char(c) {
            Run::Word
        } else {
            Run::None
        };
        if kind != state {
            flush(&mut tokens, &mut word, &mut cjk);
            state = kind;
        }
        match kind {
            Run::Word => word.push(c),
            Run::Cjk => cjk.push(c),
            Run::None => {}
        }
    }
    flush(&mut tokens, &mut word, &mut cjk);
    TokenList { tokens, source_len }
}

fn flush(tokens: &mut Vec<String>, word: &mut String, cjk: &mut Vec<char>) {
    if !word.is_empty() {
        tokens.push(std::mem::take(word));
    }
    if !cjk.is_empty() {
        tokens.extend(cjk.iter().map(|c| c.to_string()));
        tokens.extend(cjk.windows(2).map(|w| w.iter().collect::<String>()));
        cjk.clear();
    }
}

/// `tokenize(normalize(text))`.
pub fn analyze(text: &str) -> TokenList {
    tokenize(&normalize(text))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn normalize_examples() {
        assert_eq!(normalize("  Wang\u{3000}Wei "), "wang wei");
        assert_eq!(normalize("ＡＩ助手"), "ai助手");
        assert_eq!(normalize(""), "");
        assert_eq!(normalize("你好，世界。"), "你好,世界.");
        assert_eq!(normalize("a \t\n b"), "a b");
    }

    #[test]
    fn tokenize_examples() {
        let toks = tokenize("wang wei是摄影师").tokens;
        assert_eq!(
            toks,
            ["wang", "wei", "是", "摄", "影", "师", "是摄", "摄影", "影师"]
        );
        assert_eq!(tokenize("bm25").tokens, ["bm25"]);
        assert_eq!(tokenize("摄影").tokens, ["摄", "影", "摄影"]);
        assert!(tokenize("").is_empty());
        assert!(tokenize(" ,.!? ").is_empty());
    }

    #[test]
    fn source_len_counts_chars() {
        assert_eq!(tokenize("摄影 ab").source_len, 5);
    }

    #[test]
    fn punctuation_splits_runs() {
        assert_eq!(tokenize("北京,上海").tokens, ["北", "京", "北京", "上", "海", "上海"]);
        assert_eq!(tokenize("e-mail").tokens, ["e", "mail"]);
    }

    fn mixed_text() -> impl Strategy<Value = String> {
        proptest::collection::vec(
            prop_oneof![
                Just(' '),
                Just('\u{3000}'),
                Just('，'),
                Just('。'),
                Just('Ａ'),
                Just('Ｚ'),
                Just('１'),
                proptest::char::range('a', 'z'),
                proptest::char::range('A', 'Z'),
                proptest::char::range('0', '9'),
                proptest::char::range('\u{4e00}', '\u{4e40}'),
                proptest::char::range('!', '/'),
            ],
            0..40,
        )
        .prop_map(|cs| cs.into_iter().collect())
    }

    proptest! {
        #[test]
        fn normalize_is_idempotent(s in any::<String>()) {
            let once = normalize(&s);
            prop_assert_eq!(normalize(&once), once);
        }

        #[test]
        fn normalize_idempotent_on_mixed(s in mixed_text()) {
            let once = normalize(&s);
            prop_assert_eq!(tokenize(&normalize(&once)), tokenize(&once));
        }

        #[test]
        fn pure_cjk_count(s in "[\u{4e00}-\u{9fa5}]{1,30}") {
            let n = s.chars().count();
            let toks = tokenize(&s);
            prop_assert_eq!(toks.len(), 2 * n - 1);
            for t in toks.iter() {
                let len = t.chars().count();
                prop_assert!(len == 1 || len == 2);
            }
        }

        #[test]
        fn tokens_are_clean(s in mixed_text()) {
            let toks = analyze(&s);
            for t in toks.iter() {
                prop_assert!(!t.is_empty());
                prop_assert!(t.chars().all(|c| c.is_alphanumeric()));
            }
        }
    }
}
