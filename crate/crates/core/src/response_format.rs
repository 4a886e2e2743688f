//! Think/answer template parsing, Verilog extraction and the format reward.
//!
//! A well-formed response looks like
//!
//! ```text
//! <think>
//! ...reasoning...
//! </think>
//! <answer>
//! ...code and explanation...
//! </answer>
//! ```
//!
//! Each tag sits on its own line. By default horizontal whitespace around a
//! tag is tolerated; [`FormatConfig::strict_newlines`] demands the literal
//! template instead.

use serde::{Deserialize, Serialize};

const THINK_OPEN: &str = "<think>";
const THINK_CLOSE: &str = "</think>";
const ANSWER_OPEN: &str = "<answer>";
const ANSWER_CLOSE: &str = "</answer>";

/// Knobs for the template matcher and the code extractor.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct FormatConfig {
    /// Require `<think>\n…\n</think>\n<answer>\n…\n</answer>` byte for byte
    /// (an optional single trailing newline is allowed).
    pub strict_newlines: bool,
    /// Accept arbitrary text before `<think>`.
    pub allow_preamble: bool,
    /// When the format check fails, still search the raw text for code.
    pub lenient_extraction: bool,
}

/// Result of matching a response against the template.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct ParsedResponse {
    pub think_text: Option<String>,
    pub answer_text: Option<String>,
    pub code: Option<String>,
    pub format_ok: bool,
    /// Raw text kept for lenient extraction.
    #[serde(skip)]
    raw: String,
}

impl ParsedResponse {
    pub fn raw(&self) -> &str {
        &self.raw
    }
}

/// Renders reasoning and answer into the canonical template.
pub fn render_response(think: &str, answer: &str) -> String {
    format!("{THINK_OPEN}\n{think}\n{THINK_CLOSE}\n{ANSWER_OPEN}\n{answer}\n{ANSWER_CLOSE}")
}

/// Parses with default configuration.
pub fn parse_response(raw: &str) -> ParsedResponse {
    parse_response_with(raw, &FormatConfig::default())
}

pub fn parse_response_with(raw: &str, config: &FormatConfig) -> ParsedResponse {
    let think = find_all(raw, THINK_OPEN);
    let think_end = find_all(raw, THINK_CLOSE);
    let answer = find_all(raw, ANSWER_OPEN);
    let answer_end = find_all(raw, ANSWER_CLOSE);

    let think_text = first_block(raw, &think, &think_end, THINK_OPEN.len());
    let answer_text = first_block(raw, &answer, &answer_end, ANSWER_OPEN.len());

    let exactly_one = think.len() == 1 && think_end.len() == 1 && answer.len() == 1 && answer_end.len() == 1;
    let mut format_ok = false;
    if exactly_one {
        let (t0, t1, a0, a1) = (think[0], think_end[0], answer[0], answer_end[0]);
        let ordered = t0 < t1 && t1 < a0 && a0 < a1;
        if ordered {
            let layout_ok = if config.strict_newlines {
                strict_layout(raw, t0, t1, a0, a1, config.allow_preamble)
            } else {
                relaxed_layout(raw, t0, t1, a0, a1, config.allow_preamble)
            };
            let non_empty = think_text.as_deref().is_some_and(|s| !s.trim().is_empty())
                && answer_text.as_deref().is_some_and(|s| !s.trim().is_empty());
            format_ok = layout_ok && non_empty;
        }
    }

    let mut parsed = ParsedResponse {
        think_text,
        answer_text,
        code: None,
        format_ok,
        raw: raw.to_string(),
    };
    parsed.code = extract_verilog_with(&parsed, config);
    parsed
}

/// Verilog from the answer block (default configuration).
pub fn extract_verilog(parsed: &ParsedResponse) -> Option<String> {
    extract_verilog_with(parsed, &FormatConfig::default())
}

pub fn extract_verilog_with(parsed: &ParsedResponse, config: &FormatConfig) -> Option<String> {
    if parsed.format_ok {
        return parsed.answer_text.as_deref().and_then(find_code);
    }
    if config.lenient_extraction {
        return find_code(&parsed.raw);
    }
    None
}

/// Searches `text` for the first fenced block, then for a `module … endmodule` span.
pub fn find_code(text: &str) -> Option<String> {
    fenced_block(text).or_else(|| module_span(text)).map(str::to_string)
}

/// 1 when the response follows the template, otherwise 0.
pub fn format_reward(parsed: &ParsedResponse) -> u8 {
    u8::from(parsed.format_ok)
}

fn find_all(haystack: &str, needle: &str) -> Vec<usize> {
    haystack.match_indices(needle).map(|(i, _)| i).collect()
}

/// Content of the first open/close pair, without the line breaks that separate
/// it from the tag lines.
fn first_block(raw: &str, opens: &[usize], closes: &[usize], open_len: usize) -> Option<String> {
    let open = *opens.first()?;
    let close = *closes.iter().find(|&&c| c > open)?;
    let mut start = open + open_len;
    // rest of the opening tag's line
    let after = &raw[start..close];
    let skip = after.len() - after.trim_start_matches(is_hspace).len();
    if after[skip..].starts_with("\r\n") {
        start += skip + 2;
    } else if after[skip..].starts_with('\n') {
        start += skip + 1;
    }
    // line that holds the closing tag
    let before = &raw[start.min(close)..close];
    let trimmed = before.trim_end_matches(is_hspace);
    let mut end = start.min(close) + trimmed.len();
    if trimmed.ends_with("\r\n") {
        end -= 2;
    } else if trimmed.ends_with('\n') {
        end -= 1;
    }
    if end < start {
        return Some(String::new());
    }
    Some(raw[start..end].to_string())
}

fn is_hspace(c: char) -> bool {
    c == ' ' || c == '\t'
}

fn only_ws(s: &str) -> bool {
    s.chars().all(char::is_whitespace)
}

/// Tag at `pos` of length `len` must be alone on its line, up to horizontal whitespace.
fn own_line(raw: &str, pos: usize, len: usize) -> bool {
    let line_start = raw[..pos].rfind('\n').map_or(0, |i| i + 1);
    let line_end = raw[pos + len..].find('\n').map_or(raw.len(), |i| pos + len + i);
    raw[line_start..pos].trim_matches(is_hspace).is_empty()
        && raw[pos + len..line_end].trim_end_matches('\r').trim_matches(is_hspace).is_empty()
}

fn relaxed_layout(raw: &str, t0: usize, t1: usize, a0: usize, a1: usize, allow_preamble: bool) -> bool {
    let tags_alone = own_line(raw, t0, THINK_OPEN.len())
        && own_line(raw, t1, THINK_CLOSE.len())
        && own_line(raw, a0, ANSWER_OPEN.len())
        && own_line(raw, a1, ANSWER_CLOSE.len());
    let preamble_ok = allow_preamble || only_ws(&raw[..t0]);
    tags_alone && preamble_ok && only_ws(&raw[t1 + THINK_CLOSE.len()..a0]) && only_ws(&raw[a1 + ANSWER_CLOSE.len()..])
}

fn strict_layout(raw: &str, t0: usize, t1: usize, a0: usize, a1: usize, allow_preamble: bool) -> bool {
    let preamble_ok = if allow_preamble {
        t0 == 0 || raw[..t0].ends_with('\n')
    } else {
        t0 == 0
    };
    let tail = &raw[a1 + ANSWER_CLOSE.len()..];
    preamble_ok
        && raw[t0 + THINK_OPEN.len()..].starts_with('\n')
        && raw[..t1].ends_with('\n')
        && &raw[t1 + THINK_CLOSE.len()..a0] == "\n"
        && raw[a0 + ANSWER_OPEN.len()..].starts_with('\n')
        && raw[..a1].ends_with('\n')
        && (tail.is_empty() || tail == "\n")
}

fn fenced_block(text: &str) -> Option<&str> {
    let open = text.find("```")?;
    let after_fence = open + 3;
    let body_start = after_fence + text[after_fence..].find('\n')? + 1;
    let close = body_start + text[body_start..].find("```")?;
    let body = &text[body_start..close];
    Some(body.strip_suffix('\n').map(|b| b.strip_suffix('\r').unwrap_or(b)).unwrap_or(body))
}

fn is_word_byte(b: u8) -> bool {
    b.is_ascii_alphanumeric() || b == b'_' || b == b'$'
}

fn find_word(text: &str, word: &str, from: usize) -> Option<usize> {
    let bytes = text.as_bytes();
    let mut at = from;
    while let Some(i) = text[at..].find(word) {
        let pos = at + i;
        let end = pos + word.len();
        let left_ok = pos == 0 || !is_word_byte(bytes[pos - 1]);
        let right_ok = end == bytes.len() || !is_word_byte(bytes[end]);
        if left_ok && right_ok {
            return Some(pos);
        }
        at = pos + 1;
    }
    None
}

fn module_span(text: &str) -> Option<&str> {
    let start = find_word(text, "module", 0)?;
    let end = find_word(text, "endmodule", start)?;
    Some(&text[start..end + "endmodule".len()])
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn well_formed_template() {
        let p = parse_response("<think>\nreason\n</think>\n<answer>\ncode\n</answer>");
        assert!(p.format_ok);
        assert_eq!(p.think_text.as_deref(), Some("reason"));
        assert_eq!(p.answer_text.as_deref(), Some("code"));
        assert_eq!(format_reward(&p), 1);
    }

    #[test]
    fn reversed_order_fails() {
        let p = parse_response("<answer>\nx\n</answer>\n<think>\ny\n</think>");
        assert!(!p.format_ok);
    }

    #[test]
    fn unterminated_answer_fails() {
        let p = parse_response("<think>\na\n</think>\n<answer>\nb");
        assert!(!p.format_ok);
        assert_eq!(p.answer_text, None);
    }

    #[test]
    fn empty_string_scores_zero() {
        assert_eq!(format_reward(&parse_response("")), 0);
    }

    #[test]
    fn duplicated_think_blocks_fail() {
        let text = "<think>\na\n</think>\n<think>\nb\n</think>\n<answer>\nc\n</answer>";
        assert_eq!(format_reward(&parse_response(text)), 0);
    }

    #[test]
    fn nested_tags_fail() {
        let text = "<think>\n<think>\na\n</think>\n</think>\n<answer>\nc\n</answer>";
        assert!(!parse_response(text).format_ok);
    }

    #[test]
    fn horizontal_whitespace_tolerated_unless_strict() {
        let text = "  <think>  \nr\n\t</think>\n<answer>\t\nc\n</answer>  \n";
        assert!(parse_response(text).format_ok);
        let strict = FormatConfig { strict_newlines: true, ..Default::default() };
        assert!(!parse_response_with(text, &strict).format_ok);
        let exact = "<think>\nr\n</think>\n<answer>\nc\n</answer>\n";
        assert!(parse_response_with(exact, &strict).format_ok);
    }

    #[test]
    fn tags_must_be_on_their_own_line() {
        let text = "<think>reason</think>\n<answer>\ncode\n</answer>";
        assert!(!parse_response(text).format_ok);
    }

    #[test]
    fn preamble_rejected_by_default() {
        let text = "Sure!\n<think>\nr\n</think>\n<answer>\nc\n</answer>";
        assert!(!parse_response(text).format_ok);
        let cfg = FormatConfig { allow_preamble: true, ..Default::default() };
        assert!(parse_response_with(text, &cfg).format_ok);
    }

    #[test]
    fn blank_blocks_fail() {
        assert!(!parse_response("<think>\n\n</think>\n<answer>\nc\n</answer>").format_ok);
        assert!(!parse_response("<think>\n</think>\n<answer>\nc\n</answer>").format_ok);
    }

    fn answer(text: &str) -> ParsedResponse {
        parse_response(&render_response("r", text))
    }

    #[test]
    fn extracts_fenced_code() {
        let p = answer("```verilog\nmodule m; endmodule\n```");
        assert_eq!(extract_verilog(&p).as_deref(), Some("module m; endmodule"));
    }

    #[test]
    fn extracts_module_span_without_fence() {
        let p = answer("here: module a(input x, output y); assign y=x; endmodule done");
        assert_eq!(
            extract_verilog(&p).as_deref(),
            Some("module a(input x, output y); assign y=x; endmodule")
        );
    }

    #[test]
    fn no_code_is_absent() {
        assert_eq!(extract_verilog(&answer("no code here")), None);
    }

    #[test]
    fn lenient_extraction_only_when_enabled() {
        let raw = "module a(input x, output y); assign y = x; endmodule";
        assert_eq!(parse_response(raw).code, None);
        let cfg = FormatConfig { lenient_extraction: true, ..Default::default() };
        let p = parse_response_with(raw, &cfg);
        assert!(!p.format_ok);
        assert_eq!(p.code.as_deref(), Some(raw));
    }

    #[test]
    fn module_keyword_inside_identifier_is_ignored() {
        assert_eq!(find_code("submodule x endmodule"), None);
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        fn no_tags(s: &str) -> bool {
            ![THINK_OPEN, THINK_CLOSE, ANSWER_OPEN, ANSWER_CLOSE].iter().any(|t| s.contains(t))
        }

        proptest! {
            #[test]
            fn parse_is_total(text in "\\PC*") {
                let p = parse_response(&text);
                prop_assert!(format_reward(&p) <= 1);
                if p.format_ok {
                    prop_assert!(p.think_text.as_deref().is_some_and(|s| !s.is_empty()));
                    prop_assert!(p.answer_text.as_deref().is_some_and(|s| !s.is_empty()));
                }
            }

            #[test]
            fn render_then_parse_round_trips(a in "[^<\r]{0,40}(<[a-z/]{0,6})?[^<\r]{0,20}", b in "\\PC{0,60}") {
                prop_assume!(no_tags(&a) && no_tags(&b));
                let p = parse_response(&render_response(&a, &b));
                prop_assert_eq!(p.think_text.as_deref(), Some(a.as_str()));
                prop_assert_eq!(p.answer_text.as_deref(), Some(b.as_str()));
                prop_assert_eq!(p.format_ok, !a.trim().is_empty() && !b.trim().is_empty());
            }

            #[test]
            fn extracted_code_is_substring_of_answer(body in "[ -~\\n]{0,80}") {
                let p = parse_response(&render_response("r", &body));
                if let Some(code) = &p.code {
                    prop_assert!(p.answer_text.as_deref().unwrap().contains(code.as_str()));
                }
            }
        }
    }
}
