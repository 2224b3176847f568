use super::diagnostics::{DiagCode, Diagnostic, Pos, Span};

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Tok {
    Ident(String),
    Keyword(&'static str),
    /// Digits only; sign handling happens in the parser so that the most
    /// negative integer can be written.
    Int(String),
    Str(String),
    Punct(&'static str),
    Eof,
}

pub const KEYWORDS: [&str; 19] = [
    "app",
    "input",
    "title",
    "device",
    "number",
    "string",
    "bool",
    "enum",
    "def",
    "if",
    "else",
    "switch",
    "case",
    "default",
    "subscribe",
    "runIn",
    "runEvery",
    "true",
    "false",
];

// Longest first so that `==` wins over `=`.
const PUNCT: [&str; 22] = [
    "==", "!=", "<=", ">=", "&&", "||", "(", ")", "{", "}", ",", ":", ".", "=", "<", ">", "!", "+", "-", "*", "?", ";",
];

#[derive(Debug, Clone)]
pub struct Token {
    pub tok: Tok,
    pub span: Span,
}

#[allow(dead_code)]
pub fn is_keyword(s: &str) -> bool {
    KEYWORDS.contains(&s)
}

pub fn tokenize(src: &str) -> Result<Vec<Token>, Diagnostic> {
    let mut lx = Lexer { src, pos: Pos { line: 1, col: 1, offset: 0 } };
    let mut out = Vec::new();
    loop {
        lx.skip_trivia();
        let start = lx.pos;
        let Some(c) = lx.peek() else {
            out.push(Token { tok: Tok::Eof, span: Span::new(start, start) });
            return Ok(out);
        };
        let tok = if c.is_ascii_alphabetic() || c == '_' {
            let text = lx.take_while(|c| c.is_ascii_alphanumeric() || c == '_');
            match KEYWORDS.iter().find(|k| **k == text) {
                Some(k) => Tok::Keyword(k),
                None => Tok::Ident(text.to_string()),
            }
        } else if c.is_ascii_digit() {
            let text = lx.take_while(|c| c.is_ascii_digit());
            if lx.peek().is_some_and(|c| c.is_ascii_alphabetic() || c == '_') {
                return Err(Diagnostic::error(DiagCode::Syntax, Span::new(start, lx.pos), "malformed number"));
            }
            Tok::Int(text.to_string())
        } else if c == '"' {
            Tok::Str(lx.string(start)?)
        } else if let Some(p) = PUNCT.iter().find(|p| lx.rest().starts_with(**p)) {
            for _ in 0..p.len() {
                lx.bump();
            }
            Tok::Punct(p)
        } else {
            lx.bump();
            return Err(Diagnostic::error(
                DiagCode::Syntax,
                Span::new(start, lx.pos),
                format!("unexpected character {c:?}"),
            ));
        };
        out.push(Token { tok, span: Span::new(start, lx.pos) });
    }
}

struct Lexer<'a> {
    src: &'a str,
    pos: Pos,
}

impl<'a> Lexer<'a> {
    fn rest(&self) -> &'a str {
        &self.src[self.pos.offset..]
    }

    fn peek(&self) -> Option<char> {
        self.rest().chars().next()
    }

    fn bump(&mut self) -> Option<char> {
        let c = self.peek()?;
        self.pos.offset += c.len_utf8();
        if c == '\n' {
            self.pos.line += 1;
            self.pos.col = 1;
        } else {
            self.pos.col += 1;
        }
        Some(c)
    }

    fn take_while(&mut self, f: impl Fn(char) -> bool) -> &'a str {
        let start = self.pos.offset;
        while self.peek().is_some_and(&f) {
            self.bump();
        }
        &self.src[start..self.pos.offset]
    }

    fn skip_trivia(&mut self) {
        loop {
            if self.peek().is_some_and(char::is_whitespace) {
                self.bump();
            } else if self.rest().starts_with("//") {
                while self.peek().is_some_and(|c| c != '\n') {
                    self.bump();
                }
            } else {
                return;
            }
        }
    }

    fn string(&mut self, start: Pos) -> Result<String, Diagnostic> {
        self.bump();
        let mut out = String::new();
        loop {
            match self.bump() {
                None | Some('\n') => {
                    return Err(Diagnostic::error(
                        DiagCode::Syntax,
                        Span::new(start, self.pos),
                        "unterminated string literal",
                    ))
                }
                Some('"') => return Ok(out),
                Some('\\') => match self.bump() {
                    Some('"') => out.push('"'),
                    Some('\\') => out.push('\\'),
                    Some('n') => out.push('\n'),
                    Some('t') => out.push('\t'),
                    _ => {
                        return Err(Diagnostic::error(
                            DiagCode::Syntax,
                            Span::new(start, self.pos),
                            "invalid escape in string literal",
                        ))
                    }
                },
                Some(c) => out.push(c),
            }
        }
    }
}
