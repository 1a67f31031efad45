use alloc::string::String;
use alloc::vec::Vec;

use super::{DslError, SourceSpan};

#[derive(Debug, Clone, PartialEq)]
pub(crate) enum Tok {
    Ident(String),
    Str(String),
    Int(i64),
    Float(f64),
    Eq,
    LParen,
    RParen,
    LBrace,
    RBrace,
    Comma,
    Arrow,
    Eof,
}

impl Tok {
    pub(crate) fn describe(&self) -> String {
        match self {
            Tok::Ident(s) => alloc::format!("identifier `{s}`"),
            Tok::Str(s) => alloc::format!("string {s:?}"),
            Tok::Int(v) => alloc::format!("integer {v}"),
            Tok::Float(v) => alloc::format!("float {v:?}"),
            Tok::Eq => "`=`".into(),
            Tok::LParen => "`(`".into(),
            Tok::RParen => "`)`".into(),
            Tok::LBrace => "`{`".into(),
            Tok::RBrace => "`}`".into(),
            Tok::Comma => "`,`".into(),
            Tok::Arrow => "`->`".into(),
            Tok::Eof => "end of input".into(),
        }
    }
}

pub(crate) fn is_ident_start(c: char) -> bool {
    c.is_ascii_alphabetic() || c == '_'
}

pub(crate) fn is_ident_continue(c: char) -> bool {
    c.is_ascii_alphanumeric() || matches!(c, '_' | '.' | '#' | '+')
}

struct Cursor<'a> {
    src: &'a str,
    pos: usize,
    line: u32,
    col: u32,
}

impl Cursor<'_> {
    fn peek(&self) -> Option<char> {
        self.src[self.pos..].chars().next()
    }

    fn peek2(&self) -> Option<char> {
        let mut it = self.src[self.pos..].chars();
        it.next();
        it.next()
    }

    fn bump(&mut self) -> Option<char> {
        let c = self.peek()?;
        self.pos += c.len_utf8();
        if c == '\n' {
            self.line += 1;
            self.col = 1;
        } else {
            self.col += 1;
        }
        Some(c)
    }

    fn span_from(&self, start: (usize, u32, u32)) -> SourceSpan {
        SourceSpan {
            line: start.1,
            column: start.2,
            start: start.0,
            end: self.pos,
        }
    }
}

pub(crate) fn tokenize(src: &str) -> Result<Vec<(Tok, SourceSpan)>, DslError> {
    let mut c = Cursor {
        src,
        pos: 0,
        line: 1,
        col: 1,
    };
    let mut out = Vec::new();
    loop {
        // whitespace and line comments
        loop {
            match (c.peek(), c.peek2()) {
                (Some(ch), _) if ch.is_whitespace() => {
                    c.bump();
                }
                (Some('/'), Some('/')) => {
                    while let Some(ch) = c.peek() {
                        if ch == '\n' {
                            break;
                        }
                        c.bump();
                    }
                }
                _ => break,
            }
        }
        let start = (c.pos, c.line, c.col);
        let Some(ch) = c.peek() else {
            out.push((Tok::Eof, c.span_from(start)));
            return Ok(out);
        };
        let tok = match ch {
            '=' => single(&mut c, Tok::Eq),
            '(' => single(&mut c, Tok::LParen),
            ')' => single(&mut c, Tok::RParen),
            '{' => single(&mut c, Tok::LBrace),
            '}' => single(&mut c, Tok::RBrace),
            ',' => single(&mut c, Tok::Comma),
            '-' if c.peek2() == Some('>') => {
                c.bump();
                c.bump();
                Tok::Arrow
            }
            '"' => lex_string(&mut c, start)?,
            '-' | '0'..='9' => lex_number(&mut c, start)?,
            ch if is_ident_start(ch) => {
                let mut s = String::new();
                while let Some(ch) = c.peek().filter(|ch| is_ident_continue(*ch)) {
                    s.push(ch);
                    c.bump();
                }
                Tok::Ident(s)
            }
            other => {
                c.bump();
                return Err(DslError::Syntax {
                    span: c.span_from(start),
                    expected: alloc::vec!["a token".into()],
                    found: alloc::format!("character {other:?}"),
                });
            }
        };
        out.push((tok, c.span_from(start)));
    }
}

fn single(c: &mut Cursor<'_>, t: Tok) -> Tok {
    c.bump();
    t
}

fn lex_string(c: &mut Cursor<'_>, start: (usize, u32, u32)) -> Result<Tok, DslError> {
    c.bump();
    let mut s = String::new();
    loop {
        let Some(ch) = c.bump() else {
            return Err(DslError::Syntax {
                span: c.span_from(start),
                expected: alloc::vec!["`\"`".into()],
                found: "end of input".into(),
            });
        };
        match ch {
            '"' => return Ok(Tok::Str(s)),
            '\\' => {
                let esc = c.bump();
                s.push(match esc {
                    Some('n') => '\n',
                    Some('t') => '\t',
                    Some('r') => '\r',
                    Some('"') => '"',
                    Some('\\') => '\\',
                    other => {
                        return Err(DslError::Syntax {
                            span: c.span_from(start),
                            expected: alloc::vec!["escape (\\n \\t \\r \\\" \\\\)".into()],
                            found: alloc::format!("{other:?}"),
                        })
                    }
                });
            }
            ch => s.push(ch),
        }
    }
}

fn lex_number(c: &mut Cursor<'_>, start: (usize, u32, u32)) -> Result<Tok, DslError> {
    let begin = c.pos;
    if c.peek() == Some('-') {
        c.bump();
    }
    let digits = |c: &mut Cursor<'_>| {
        let mut n = 0;
        while c.peek().is_some_and(|d| d.is_ascii_digit()) {
            c.bump();
            n += 1;
        }
        n
    };
    let mut float = false;
    let mut ok = digits(c) > 0;
    if c.peek() == Some('.') && c.peek2().is_some_and(|d| d.is_ascii_digit()) {
        c.bump();
        digits(c);
        float = true;
    }
    if matches!(c.peek(), Some('e' | 'E')) {
        c.bump();
        if matches!(c.peek(), Some('+' | '-')) {
            c.bump();
        }
        ok &= digits(c) > 0;
        float = true;
    }
    let text = &c.src[begin..c.pos];
    let bad = |c: &Cursor<'_>| DslError::Syntax {
        span: c.span_from(start),
        expected: alloc::vec!["number".into()],
        found: alloc::format!("`{text}`"),
    };
    if !ok {
        return Err(bad(c));
    }
    if float {
        text.parse::<f64>().map(Tok::Float).map_err(|_| bad(c))
    } else {
        text.parse::<i64>().map(Tok::Int).map_err(|_| bad(c))
    }
}
