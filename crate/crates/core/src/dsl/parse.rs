use alloc::collections::BTreeSet;
use alloc::string::String;
use alloc::vec::Vec;

use super::lex::{tokenize, Tok};
use super::{kind_from_keyword, Ast, Attr, DslError, EdgeDecl, GraphDecl, NodeDecl, SourceSpan};
use crate::graph::AttrValue;

/// Parses `.agraph` text. Checks ids are unique and declared before use,
/// kinds are known, and edges are not repeated; graph references are
/// resolved later by [`super::lower`].
pub fn parse(text: &str) -> Result<Ast, DslError> {
    let toks = tokenize(text)?;
    let mut p = Parser { toks, pos: 0 };
    let mut graphs = Vec::new();
    loop {
        if matches!(p.peek(), Tok::Eof) && !graphs.is_empty() {
            break;
        }
        graphs.push(p.graph()?);
    }
    Ok(Ast { graphs })
}

struct Parser {
    toks: Vec<(Tok, SourceSpan)>,
    pos: usize,
}

struct Scope {
    ids: BTreeSet<String>,
    edges: BTreeSet<(String, String)>,
}

impl Parser {
    fn peek(&self) -> &Tok {
        &self.toks[self.pos].0
    }

    fn peek_at(&self, k: usize) -> &Tok {
        let i = (self.pos + k).min(self.toks.len() - 1);
        &self.toks[i].0
    }

    fn span(&self) -> SourceSpan {
        self.toks[self.pos].1
    }

    fn advance(&mut self) -> (Tok, SourceSpan) {
        let t = self.toks[self.pos].clone();
        if self.pos + 1 < self.toks.len() {
            self.pos += 1;
        }
        t
    }

    fn error(&self, expected: &[&str]) -> DslError {
        DslError::Syntax {
            span: self.span(),
            expected: expected.iter().map(|s| String::from(*s)).collect(),
            found: self.peek().describe(),
        }
    }

    fn expect(&mut self, want: Tok, label: &str) -> Result<SourceSpan, DslError> {
        if *self.peek() == want {
            Ok(self.advance().1)
        } else {
            Err(self.error(&[label]))
        }
    }

    fn keyword(&mut self, kw: &str) -> Result<SourceSpan, DslError> {
        match self.peek() {
            Tok::Ident(s) if s == kw => Ok(self.advance().1),
            _ => Err(self.error(&[&alloc::format!("`{kw}`")])),
        }
    }

    /// Identifier or quoted string.
    fn name(&mut self, extra: &[&str]) -> Result<(String, SourceSpan), DslError> {
        match self.peek().clone() {
            Tok::Ident(s) | Tok::Str(s) => {
                let span = self.advance().1;
                Ok((s, span))
            }
            _ => {
                let mut expected = alloc::vec!["identifier"];
                expected.extend_from_slice(extra);
                Err(self.error(&expected))
            }
        }
    }

    fn graph(&mut self) -> Result<GraphDecl, DslError> {
        let start = self.keyword("graph")?;
        let (name, _) = self.name(&[])?;
        self.expect(Tok::LBrace, "`{`")?;
        let mut scope = Scope {
            ids: BTreeSet::new(),
            edges: BTreeSet::new(),
        };
        let mut g = GraphDecl {
            name,
            nodes: Vec::new(),
            edges: Vec::new(),
            span: start,
        };
        loop {
            match (self.peek(), self.peek_at(1)) {
                (Tok::RBrace, _) => {
                    let end = self.advance().1;
                    g.span.end = end.end;
                    return Ok(g);
                }
                (Tok::Ident(kw), next) if kw == "edge" && *next != Tok::Eq => {
                    let e = self.edge_decl(&mut scope)?;
                    g.edges.push(e);
                }
                (Tok::Ident(_) | Tok::Str(_), _) => {
                    let n = self.node_decl(&mut scope)?;
                    g.nodes.push(n);
                }
                _ => return Err(self.error(&["identifier", "`edge`", "`}`"])),
            }
        }
    }

    fn declared(&self, scope: &Scope, id: &str, span: SourceSpan) -> Result<(), DslError> {
        if scope.ids.contains(id) {
            Ok(())
        } else {
            Err(DslError::UndefinedId { id: id.into(), span })
        }
    }

    fn new_edge(scope: &mut Scope, src: &str, dst: &str, span: SourceSpan) -> Result<(), DslError> {
        if scope.edges.insert((src.into(), dst.into())) {
            Ok(())
        } else {
            Err(DslError::DuplicateEdge {
                src: src.into(),
                dst: dst.into(),
                span,
            })
        }
    }

    fn node_decl(&mut self, scope: &mut Scope) -> Result<NodeDecl, DslError> {
        let (id, start) = self.name(&[])?;
        if scope.ids.contains(&id) {
            return Err(DslError::DuplicateId { id, span: start });
        }
        self.expect(Tok::Eq, "`=`")?;
        let (kind, kind_span) = match self.peek().clone() {
            Tok::Ident(s) => (s, self.advance().1),
            _ => return Err(self.error(&["node kind"])),
        };
        if kind_from_keyword(&kind).is_none() {
            return Err(DslError::UnknownKind { kind, span: kind_span });
        }
        self.expect(Tok::LParen, "`(`")?;
        let mut operands = Vec::new();
        let mut end = loop {
            if *self.peek() == Tok::RParen {
                break self.advance().1;
            }
            let (src, span) = self.name(&["`)`"])?;
            self.declared(scope, &src, span)?;
            Self::new_edge(scope, &src, &id, span)?;
            operands.push(src);
            match self.peek() {
                Tok::Comma => {
                    self.advance();
                }
                Tok::RParen => {}
                _ => return Err(self.error(&["`,`", "`)`"])),
            }
        };
        let attrs = if *self.peek() == Tok::LBrace {
            let (attrs, close) = self.attrs()?;
            end = close;
            attrs
        } else {
            Vec::new()
        };
        scope.ids.insert(id.clone());
        Ok(NodeDecl {
            id,
            kind,
            operands,
            attrs,
            span: SourceSpan {
                end: end.end,
                ..start
            },
        })
    }

    fn edge_decl(&mut self, scope: &mut Scope) -> Result<EdgeDecl, DslError> {
        let start = self.keyword("edge")?;
        let (src, s_span) = self.name(&[])?;
        self.declared(scope, &src, s_span)?;
        self.expect(Tok::Arrow, "`->`")?;
        let (dst, d_span) = self.name(&[])?;
        self.declared(scope, &dst, d_span)?;
        let mut end = d_span;
        let attrs = if *self.peek() == Tok::LBrace {
            let (attrs, close) = self.attrs()?;
            end = close;
            attrs
        } else {
            Vec::new()
        };
        let span = SourceSpan {
            end: end.end,
            ..start
        };
        Self::new_edge(scope, &src, &dst, span)?;
        Ok(EdgeDecl {
            src,
            dst,
            attrs,
            span,
        })
    }

    fn attrs(&mut self) -> Result<(Vec<Attr>, SourceSpan), DslError> {
        self.expect(Tok::LBrace, "`{`")?;
        let mut attrs: Vec<Attr> = Vec::new();
        loop {
            if *self.peek() == Tok::RBrace {
                return Ok((attrs, self.advance().1));
            }
            let (key, span) = self.name(&["`}`"])?;
            self.expect(Tok::Eq, "`=`")?;
            let value = match self.peek().clone() {
                Tok::Int(v) => AttrValue::Int(v),
                Tok::Float(v) => AttrValue::Float(v),
                Tok::Str(s) => AttrValue::Str(s),
                Tok::Ident(s) if s == "true" => AttrValue::Bool(true),
                Tok::Ident(s) if s == "false" => AttrValue::Bool(false),
                _ => return Err(self.error(&["integer", "float", "string", "`true`", "`false`"])),
            };
            let vspan = self.advance().1;
            if attrs.iter().any(|a| a.key == key) {
                return Err(DslError::InvalidAttr {
                    key,
                    reason: "given more than once".into(),
                    span,
                });
            }
            attrs.push(Attr {
                key,
                value,
                span: SourceSpan {
                    end: vspan.end,
                    ..span
                },
            });
            match self.peek() {
                Tok::Comma => {
                    self.advance();
                }
                Tok::RBrace => {}
                _ => return Err(self.error(&["`,`", "`}`"])),
            }
        }
    }
}
