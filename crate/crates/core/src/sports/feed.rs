//! Newline-delimited JSON match feeds, one [`FeedEvent`] per line.

use thiserror::Error;

use super::FeedEvent;

#[derive(Debug, Error, PartialEq)]
pub enum FeedParseError {
    #[error("feed is not UTF-8: {0}")]
    Encoding(String),
    #[error("feed line {line}: {message}")]
    Line { line: usize, message: String },
}

/// Parses a feed. Blank lines are skipped; line numbers in errors are
/// 1-based.
pub fn parse_feed(bytes: &[u8]) -> Result<Vec<FeedEvent>, FeedParseError> {
    let text = std::str::from_utf8(bytes).map_err(|e| FeedParseError::Encoding(e.to_string()))?;
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            serde_json::from_str(l).map_err(|e| FeedParseError::Line {
                line: i + 1,
                message: e.to_string(),
            })
        })
        .collect()
}

pub fn serialize_feed(events: &[FeedEvent]) -> String {
    let mut out = String::new();
    for e in events {
        out.push_str(&serde_json::to_string(e).expect("feed events serialize"));
        out.push('\n');
    }
    out
}
