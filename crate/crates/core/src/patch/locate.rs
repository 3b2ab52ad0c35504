use serde::{Deserialize, Serialize};

/// A function definition found by [`locate_functions`]. Lines are 1-based and
/// inclusive, from the first line of the signature to the closing brace.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FunctionSpan {
    pub name: String,
    pub start_line: usize,
    pub end_line: usize,
}

impl FunctionSpan {
    pub fn contains(&self, line: usize) -> bool {
        (self.start_line..=self.end_line).contains(&line)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum LocateError {
    #[error("unbalanced braces near line {line}")]
    Unbalanced { line: usize },
    #[error("unterminated comment or literal starting at line {line}")]
    Unterminated { line: usize },
}

const NOT_FUNCTIONS: &[&str] = &[
    "if", "while", "for", "switch", "return", "sizeof", "do", "else", "case",
];

/// Name of the function a top-level header declares, if it looks like one.
fn function_name(header: &str) -> Option<String> {
    let first = header.split_whitespace().next()?;
    if matches!(first, "struct" | "enum" | "union" | "typedef" | "extern") && !header.contains('(')
    {
        return None;
    }
    let paren = header.find('(')?;
    if header[..paren].contains('=') {
        return None;
    }
    let before = header[..paren].trim_end();
    let start = before
        .rfind(|c: char| !(c.is_alphanumeric() || c == '_'))
        .map_or(0, |i| i + 1);
    let name = &before[start..];
    if name.is_empty()
        || name.starts_with(|c: char| c.is_ascii_digit())
        || NOT_FUNCTIONS.contains(&name)
    {
        return None;
    }
    if !header.trim_end().ends_with(')') && !header.contains(')') {
        return None;
    }
    Some(name.to_string())
}

#[derive(Clone, Copy, PartialEq)]
enum State {
    Code,
    Block(usize),
    Line,
    Str(char, usize),
    Preproc,
}

/// Finds top-level C-like function definitions by brace balancing.
///
/// A definition is a `{` at nesting depth zero whose preceding top-level
/// text starts at column 0 and has the shape `... name(...)`. Comments,
/// string and character literals and preprocessor lines are skipped. The
/// result is approximate by design; files it cannot balance are an error.
pub fn locate_functions(text: &str) -> Result<Vec<FunctionSpan>, LocateError> {
    let mut spans = Vec::new();
    let mut depth = 0usize;
    let mut state = State::Code;
    let mut header = String::new();
    let mut header_line: Option<usize> = None;
    let mut header_col0 = false;
    let mut open: Option<(String, usize)> = None;

    for (idx, raw) in text.split('\n').enumerate() {
        let lineno = idx + 1;
        let chars: Vec<char> = raw.chars().collect();
        if state == State::Line {
            state = State::Code;
        }
        if state == State::Code && raw.trim_start().starts_with('#') {
            state = State::Preproc;
        }
        if state == State::Preproc {
            if !raw.trim_end().ends_with('\\') {
                state = State::Code;
            }
            continue;
        }
        let mut i = 0;
        while i < chars.len() {
            let c = chars[i];
            let next = chars.get(i + 1).copied();
            match state {
                State::Block(_) => {
                    if c == '*' && next == Some('/') {
                        state = State::Code;
                        i += 1;
                    }
                }
                State::Str(q, _) => {
                    if c == '\\' {
                        i += 1;
                    } else if c == q {
                        state = State::Code;
                    }
                }
                State::Line | State::Preproc => break,
                State::Code => match c {
                    '/' if next == Some('*') => {
                        state = State::Block(lineno);
                        i += 1;
                    }
                    '/' if next == Some('/') => {
                        state = State::Line;
                        break;
                    }
                    '"' | '\'' => {
                        state = State::Str(c, lineno);
                        if depth == 0 {
                            header.push(c);
                        }
                    }
                    '{' => {
                        if depth == 0 {
                            open = if header_col0 {
                                function_name(header.trim()).zip(header_line)
                            } else {
                                None
                            };
                            header.clear();
                            header_line = None;
                        }
                        depth += 1;
                    }
                    '}' => {
                        if depth == 0 {
                            return Err(LocateError::Unbalanced { line: lineno });
                        }
                        depth -= 1;
                        if depth == 0 {
                            if let Some((name, start_line)) = open.take() {
                                spans.push(FunctionSpan {
                                    name,
                                    start_line,
                                    end_line: lineno,
                                });
                            }
                            header.clear();
                            header_line = None;
                        }
                    }
                    ';' if depth == 0 => {
                        header.clear();
                        header_line = None;
                    }
                    _ if depth == 0 => {
                        if header_line.is_none() && !c.is_whitespace() {
                            header_line = Some(lineno);
                            header_col0 = i == 0;
                        }
                        header.push(c);
                    }
                    _ => {}
                },
            }
            i += 1;
        }
        if let State::Str(_, start) = state {
            // C literals do not span lines without a backslash continuation.
            if !raw.ends_with('\\') {
                return Err(LocateError::Unterminated { line: start });
            }
        }
        if depth == 0 && header_line.is_some() {
            header.push(' ');
        }
    }
    if let State::Block(start) = state {
        return Err(LocateError::Unterminated { line: start });
    }
    if depth != 0 {
        return Err(LocateError::Unbalanced {
            line: text.split('\n').count(),
        });
    }
    Ok(spans)
}
