use stforge_st::{parse_source, tokenize, TokenKind};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ExtractError {
    #[error("reply contains no fenced code block and is not valid Structured Text")]
    NoCodeFound,
}

/// Contents of the first fenced code block, without the fence lines.
///
/// Without any fence, the whole reply is accepted only if it lexes and parses
/// with zero diagnostics and holds at least one token that is not a comment.
pub fn extract_code_block(text: &str) -> Result<String, ExtractError> {
    if let Some(code) = first_fence(text) {
        return Ok(code);
    }
    let lexed = tokenize(text);
    let has_code = lexed.tokens.iter().any(|t| t.kind != TokenKind::Comment);
    if has_code && lexed.diagnostics.is_empty() && parse_source(text).diagnostics.is_empty() {
        return Ok(text.trim().to_string());
    }
    Err(ExtractError::NoCodeFound)
}

fn first_fence(text: &str) -> Option<String> {
    let open = text.find("```")?;
    let after_open = &text[open + 3..];
    // The opening line may carry a language tag; code starts on the next line.
    let body_start = match after_open.find('\n') {
        Some(nl) if !after_open[..nl].contains("```") => nl + 1,
        _ => {
            // Single-line fence: ```x := 1;```
            let end = after_open.find("```")?;
            return Some(after_open[..end].trim().to_string());
        }
    };
    let body = &after_open[body_start..];
    let end = close_fence(body).unwrap_or(body.len());
    let code = &body[..end];
    Some(code.strip_suffix('\n').map(|c| c.strip_suffix('\r').unwrap_or(c)).unwrap_or(code).to_string())
}

/// Offset of the closing fence: a line whose trimmed start is ```.
fn close_fence(body: &str) -> Option<usize> {
    let mut offset = 0;
    for line in body.split_inclusive('\n') {
        if line.trim_start().starts_with("```") {
            return Some(offset);
        }
        offset += line.len();
    }
    None
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn first_fence_wins() {
        let t = "Here is code:\n```\nx := 1;\n```\nHope it helps";
        assert_eq!(extract_code_block(t).unwrap(), "x := 1;");
    }

    #[test]
    fn language_tag_is_skipped() {
        let t = "```iecst\nPROGRAM P\nEND_PROGRAM\n```\n```\nother\n```";
        assert_eq!(extract_code_block(t).unwrap(), "PROGRAM P\nEND_PROGRAM");
    }

    #[test]
    fn bare_valid_st_is_accepted() {
        let t = "PROGRAM P\nVAR x : INT; END_VAR\nx := 1;\nEND_PROGRAM\n";
        assert_eq!(extract_code_block(t).unwrap(), t.trim());
    }

    #[test]
    fn prose_is_rejected() {
        assert_eq!(extract_code_block("I cannot help with that request."), Err(ExtractError::NoCodeFound));
        assert_eq!(extract_code_block(""), Err(ExtractError::NoCodeFound));
        assert_eq!(extract_code_block("(* only a comment *)"), Err(ExtractError::NoCodeFound));
    }

    #[test]
    fn unterminated_fence_takes_the_rest() {
        assert_eq!(extract_code_block("```st\nx := 1;\ny := 2;").unwrap(), "x := 1;\ny := 2;");
    }

    #[test]
    fn inline_fence() {
        assert_eq!(extract_code_block("use ```x := 1;``` here").unwrap(), "x := 1;");
    }

    #[test]
    fn code_is_kept_verbatim() {
        let code = "  a := 1;\n\n\tb := 2;  ";
        let t = format!("```\n{code}\n```");
        assert_eq!(extract_code_block(&t).unwrap(), code);
    }
}
