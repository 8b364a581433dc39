use once_cell::sync::Lazy;
use regex::Regex;

use crate::protocol::{Stance, StanceValue};

static TOKEN: Lazy<Regex> = Lazy::new(|| Regex::new(r"(?i)\b(yes|no)\b").unwrap());

fn first_sentence(text: &str) -> &str {
    let text = text.trim_start();
    match text.find(['.', '!', '?', '\n']) {
        Some(end) => &text[..end],
        None => text,
    }
}

/// First standalone "yes" or "no" in the first sentence, case-insensitive;
/// anything else is Unsure. The rationale is always the full text.
pub fn parse_stance(text: &str) -> Stance {
    let value = TOKEN
        .find(first_sentence(text))
        .map(|m| {
            if m.as_str().eq_ignore_ascii_case("yes") {
                StanceValue::Yes
            } else {
                StanceValue::No
            }
        })
        .unwrap_or(StanceValue::Unsure);
    Stance::new(value, text)
}
