use std::collections::BTreeMap;

use super::diagnostics::{DiagCode, Diagnostic, Pos, Span};
use super::lexer::{tokenize, Tok, Token};
use super::{BinOp, Expr, ExprKind, FuncDef, InputDecl, InputKind, Literal, SourceUnit, Stmt, StmtKind, UnOp};

const MAX_DEPTH: usize = 200;

/// Parses HGL source. Stops at the first syntax error.
pub fn parse(source: &str) -> Result<SourceUnit, Vec<Diagnostic>> {
    let tokens = tokenize(source).map_err(|d| vec![d])?;
    let mut p = Parser { toks: tokens, i: 0, depth: 0, param: None };
    let mut unit = p.unit().map_err(|d| vec![d])?;
    unit.source_text = source.to_string();
    let dups = duplicate_names(&unit);
    if dups.is_empty() {
        Ok(unit)
    } else {
        Err(dups)
    }
}

/// Byte-level entry point: invalid UTF-8 is reported as a syntax error.
pub fn parse_bytes(bytes: &[u8]) -> Result<SourceUnit, Vec<Diagnostic>> {
    match std::str::from_utf8(bytes) {
        Ok(s) => parse(s),
        Err(e) => {
            let valid = &bytes[..e.valid_up_to()];
            let text = std::str::from_utf8(valid).unwrap_or_default();
            let line = 1 + text.matches('\n').count() as u32;
            let col = 1 + text.rsplit('\n').next().map_or(0, |l| l.chars().count()) as u32;
            let at = Pos { line, col, offset: e.valid_up_to() };
            Err(vec![Diagnostic::error(DiagCode::Syntax, Span::new(at, at), "source is not valid UTF-8")])
        }
    }
}

fn duplicate_names(unit: &SourceUnit) -> Vec<Diagnostic> {
    let mut seen: BTreeMap<&str, &'static str> = BTreeMap::new();
    let mut out = Vec::new();
    let names = unit
        .inputs
        .iter()
        .map(|i| (i.name.as_str(), "input", i.span))
        .chain(unit.functions.iter().map(|f| (f.name.as_str(), "function", f.span)));
    for (name, what, span) in names {
        if let Some(prev) = seen.insert(name, what) {
            out.push(Diagnostic::error(
                DiagCode::DuplicateName,
                span,
                format!("{what} `{name}` clashes with an earlier {prev} of the same name"),
            ));
        }
    }
    out
}

struct Parser {
    toks: Vec<Token>,
    i: usize,
    depth: usize,
    param: Option<String>,
}

type PResult<T> = Result<T, Diagnostic>;

impl Parser {
    fn peek(&self) -> &Tok {
        &self.toks[self.i].tok
    }

    fn peek_at(&self, n: usize) -> &Tok {
        &self.toks[(self.i + n).min(self.toks.len() - 1)].tok
    }

    fn span(&self) -> Span {
        self.toks[self.i].span
    }

    fn prev_span(&self) -> Span {
        self.toks[self.i.saturating_sub(1)].span
    }

    fn advance(&mut self) -> Token {
        let t = self.toks[self.i].clone();
        if self.i + 1 < self.toks.len() {
            self.i += 1;
        }
        t
    }

    fn error<T>(&self, expected: &str) -> PResult<T> {
        let found = match self.peek() {
            Tok::Ident(s) => format!("identifier `{s}`"),
            Tok::Keyword(k) => format!("keyword `{k}`"),
            Tok::Int(v) => format!("number {v}"),
            Tok::Str(s) => format!("string {s:?}"),
            Tok::Punct(p) => format!("`{p}`"),
            Tok::Eof => "end of input".to_string(),
        };
        Err(Diagnostic::error(DiagCode::Syntax, self.span(), format!("expected {expected}, found {found}")))
    }

    fn at_punct(&self, p: &str) -> bool {
        matches!(self.peek(), Tok::Punct(q) if *q == p)
    }

    fn at_kw(&self, k: &str) -> bool {
        matches!(self.peek(), Tok::Keyword(q) if *q == k)
    }

    fn punct(&mut self, p: &str) -> PResult<Span> {
        if self.at_punct(p) {
            Ok(self.advance().span)
        } else {
            self.error(&format!("`{p}`"))
        }
    }

    fn kw(&mut self, k: &str) -> PResult<Span> {
        if self.at_kw(k) {
            Ok(self.advance().span)
        } else {
            self.error(&format!("`{k}`"))
        }
    }

    fn ident(&mut self) -> PResult<(String, Span)> {
        match self.peek().clone() {
            Tok::Ident(s) => Ok((s, self.advance().span)),
            _ => self.error("identifier"),
        }
    }

    /// A member name after `.`; keywords are allowed there (`device.switch`).
    fn member(&mut self) -> PResult<(String, Span)> {
        match self.peek().clone() {
            Tok::Ident(s) => Ok((s, self.advance().span)),
            Tok::Keyword(k) => Ok((k.to_string(), self.advance().span)),
            _ => self.error("name"),
        }
    }

    fn string(&mut self) -> PResult<String> {
        match self.peek().clone() {
            Tok::Str(s) => {
                self.advance();
                Ok(s)
            }
            _ => self.error("string literal"),
        }
    }

    fn enter(&mut self) -> PResult<()> {
        self.depth += 1;
        if self.depth > MAX_DEPTH {
            return Err(Diagnostic::error(DiagCode::Syntax, self.span(), "nesting too deep"));
        }
        Ok(())
    }

    fn unit(&mut self) -> PResult<SourceUnit> {
        let header = self.span();
        if !self.at_kw("app") {
            return Err(Diagnostic::error(DiagCode::MissingAppHeader, header, "expected `app \"<name>\"` header"));
        }
        self.advance();
        let app_name = match self.peek().clone() {
            Tok::Str(s) if !s.trim().is_empty() => {
                self.advance();
                s
            }
            _ => {
                return Err(Diagnostic::error(
                    DiagCode::MissingAppHeader,
                    self.span(),
                    "app header needs a non-empty name",
                ))
            }
        };
        let mut inputs = Vec::new();
        while self.at_kw("input") {
            inputs.push(self.input()?);
        }
        let mut functions = Vec::new();
        while self.at_kw("def") {
            functions.push(self.func()?);
        }
        if *self.peek() != Tok::Eof {
            return self.error(if functions.is_empty() { "`input` or `def`" } else { "`def`" });
        }
        Ok(SourceUnit { app_name, inputs, functions, source_text: String::new() })
    }

    fn input(&mut self) -> PResult<InputDecl> {
        let start = self.kw("input")?;
        let (name, _) = self.ident()?;
        self.punct(":")?;
        let kind = match self.peek() {
            Tok::Keyword("device") => {
                self.advance();
                self.punct(".")?;
                InputKind::Device(self.member()?.0)
            }
            Tok::Keyword("number") => {
                self.advance();
                InputKind::Number
            }
            Tok::Keyword("string") => {
                self.advance();
                InputKind::Str
            }
            Tok::Keyword("bool") => {
                self.advance();
                InputKind::Bool
            }
            Tok::Keyword("enum") => {
                self.advance();
                self.punct("(")?;
                let mut values = vec![self.string()?];
                while self.at_punct(",") {
                    self.advance();
                    values.push(self.string()?);
                }
                self.punct(")")?;
                InputKind::Enum(values)
            }
            _ => return self.error("input kind"),
        };
        let title = if self.at_kw("title") {
            self.advance();
            Some(self.string()?)
        } else {
            None
        };
        Ok(InputDecl { name, kind, title, span: start.to(self.prev_span()) })
    }

    fn func(&mut self) -> PResult<FuncDef> {
        let start = self.kw("def")?;
        let (name, _) = self.ident()?;
        self.punct("(")?;
        let param = match self.peek().clone() {
            Tok::Ident(p) => {
                self.advance();
                Some(p)
            }
            _ => None,
        };
        self.punct(")")?;
        self.param = param.clone();
        let body = self.block()?;
        self.param = None;
        Ok(FuncDef { name, param, body, span: start.to(self.prev_span()) })
    }

    fn block(&mut self) -> PResult<Vec<Stmt>> {
        self.enter()?;
        self.punct("{")?;
        let mut body = Vec::new();
        while !self.at_punct("}") {
            if *self.peek() == Tok::Eof {
                return self.error("`}`");
            }
            body.push(self.stmt()?);
            while self.at_punct(";") {
                self.advance();
            }
        }
        self.advance();
        self.depth -= 1;
        Ok(body)
    }

    fn stmt(&mut self) -> PResult<Stmt> {
        let start = self.span();
        let kind = match self.peek().clone() {
            Tok::Keyword("subscribe") => {
                self.advance();
                self.punct("(")?;
                let (device, _) = self.ident()?;
                self.punct(",")?;
                let spec = self.string()?;
                self.punct(",")?;
                let (handler, _) = self.ident()?;
                self.punct(")")?;
                StmtKind::Subscribe { device, spec, handler }
            }
            Tok::Keyword(k @ ("runIn" | "runEvery")) => {
                self.advance();
                self.punct("(")?;
                let e = self.expr()?;
                self.punct(",")?;
                let (handler, _) = self.ident()?;
                self.punct(")")?;
                if k == "runIn" {
                    StmtKind::RunIn { delay: e, handler }
                } else {
                    StmtKind::RunEvery { period: e, handler }
                }
            }
            Tok::Keyword("if") => {
                self.advance();
                self.punct("(")?;
                let cond = self.expr()?;
                self.punct(")")?;
                let then_body = self.block()?;
                let else_body = if self.at_kw("else") {
                    self.advance();
                    Some(self.block()?)
                } else {
                    None
                };
                StmtKind::If { cond, then_body, else_body }
            }
            Tok::Keyword("switch") => self.switch()?,
            Tok::Ident(name) => match self.peek_at(1) {
                Tok::Punct(".") => {
                    self.advance();
                    self.advance();
                    let (command, _) = self.member()?;
                    let args = self.args()?;
                    if name == "api" {
                        StmtKind::Api { name: command, args }
                    } else {
                        StmtKind::Command { device: name, command, args }
                    }
                }
                Tok::Punct("=") => {
                    self.advance();
                    self.advance();
                    return self.assignment(name, start);
                }
                Tok::Punct("(") => {
                    self.advance();
                    self.advance();
                    self.punct(")")?;
                    StmtKind::Call { name }
                }
                _ => {
                    self.advance();
                    return self.error("`.`, `=` or `(` after identifier");
                }
            },
            _ => return self.error("statement"),
        };
        Ok(Stmt { kind, span: start.to(self.prev_span()) })
    }

    /// `x = e`, or `x = c ? a : b` which becomes a two-branch `if`.
    fn assignment(&mut self, target: String, start: Span) -> PResult<Stmt> {
        self.enter()?;
        let value = self.expr()?;
        let stmt = if self.at_punct("?") {
            self.advance();
            let then_value = self.expr()?;
            self.punct(":")?;
            let then_stmt =
                Stmt { span: then_value.span, kind: StmtKind::Assign { target: target.clone(), value: then_value } };
            let else_stmt = self.assignment(target, self.span())?;
            StmtKind::If { cond: value, then_body: vec![then_stmt], else_body: Some(vec![else_stmt]) }
        } else {
            StmtKind::Assign { target, value }
        };
        self.depth -= 1;
        Ok(Stmt { kind: stmt, span: start.to(self.prev_span()) })
    }

    fn switch(&mut self) -> PResult<StmtKind> {
        self.kw("switch")?;
        self.punct("(")?;
        let scrutinee = self.expr()?;
        self.punct(")")?;
        self.punct("{")?;
        let mut cases = Vec::new();
        while self.at_kw("case") {
            self.advance();
            let lit = self.literal()?;
            self.punct(":")?;
            cases.push((lit, self.block()?));
        }
        if cases.is_empty() {
            return self.error("`case`");
        }
        let default = if self.at_kw("default") {
            self.advance();
            self.punct(":")?;
            Some(self.block()?)
        } else {
            None
        };
        self.punct("}")?;
        Ok(StmtKind::Switch { scrutinee, cases, default })
    }

    fn literal(&mut self) -> PResult<Literal> {
        match self.peek().clone() {
            Tok::Str(s) => {
                self.advance();
                Ok(Literal::Str(s))
            }
            Tok::Keyword("true") => {
                self.advance();
                Ok(Literal::Bool(true))
            }
            Tok::Keyword("false") => {
                self.advance();
                Ok(Literal::Bool(false))
            }
            Tok::Int(d) => {
                let v = self.int_value(&d, false)?;
                self.advance();
                Ok(Literal::Int(v))
            }
            Tok::Punct("-") => {
                self.advance();
                match self.peek().clone() {
                    Tok::Int(d) => {
                        let v = self.int_value(&d, true)?;
                        self.advance();
                        Ok(Literal::Int(v))
                    }
                    _ => self.error("integer"),
                }
            }
            _ => self.error("literal"),
        }
    }

    fn int_value(&self, digits: &str, negative: bool) -> PResult<i64> {
        let text = if negative { format!("-{digits}") } else { digits.to_string() };
        text.parse::<i64>()
            .map_err(|_| Diagnostic::error(DiagCode::Syntax, self.span(), "integer literal out of range"))
    }

    fn args(&mut self) -> PResult<Vec<Expr>> {
        self.punct("(")?;
        let mut args = Vec::new();
        if !self.at_punct(")") {
            args.push(self.expr()?);
            while self.at_punct(",") {
                self.advance();
                args.push(self.expr()?);
            }
        }
        self.punct(")")?;
        Ok(args)
    }

    fn expr(&mut self) -> PResult<Expr> {
        self.binary(1)
    }

    fn binary_op(&self) -> Option<BinOp> {
        let Tok::Punct(p) = self.peek() else { return None };
        Some(match *p {
            "+" => BinOp::Add,
            "-" => BinOp::Sub,
            "*" => BinOp::Mul,
            "==" => BinOp::Eq,
            "!=" => BinOp::Ne,
            "<" => BinOp::Lt,
            "<=" => BinOp::Le,
            ">" => BinOp::Gt,
            ">=" => BinOp::Ge,
            "&&" => BinOp::And,
            "||" => BinOp::Or,
            _ => return None,
        })
    }

    // Precedence climbing; every binary level is left-associative.
    fn binary(&mut self, min_prec: u8) -> PResult<Expr> {
        self.enter()?;
        let mut lhs = self.unary()?;
        while let Some(op) = self.binary_op() {
            if op.precedence() < min_prec {
                break;
            }
            self.advance();
            let rhs = self.binary(op.precedence() + 1)?;
            let span = lhs.span.to(rhs.span);
            lhs = Expr::new(ExprKind::Binary(op, Box::new(lhs), Box::new(rhs)), span);
        }
        self.depth -= 1;
        Ok(lhs)
    }

    fn unary(&mut self) -> PResult<Expr> {
        let start = self.span();
        match self.peek() {
            Tok::Punct("!") => {
                self.advance();
                self.enter()?;
                let e = self.unary()?;
                self.depth -= 1;
                let span = start.to(e.span);
                Ok(Expr::new(ExprKind::Unary(UnOp::Not, Box::new(e)), span))
            }
            Tok::Punct("-") => {
                self.advance();
                if let Tok::Int(d) = self.peek().clone() {
                    let v = self.int_value(&d, true)?;
                    let span = start.to(self.advance().span);
                    return Ok(Expr::new(ExprKind::Int(v), span));
                }
                self.enter()?;
                let e = self.unary()?;
                self.depth -= 1;
                let span = start.to(e.span);
                // Negated constants are folded so that printing and reparsing agree.
                if let ExprKind::Int(v) = e.kind {
                    if let Some(n) = v.checked_neg() {
                        return Ok(Expr::new(ExprKind::Int(n), span));
                    }
                }
                Ok(Expr::new(ExprKind::Unary(UnOp::Neg, Box::new(e)), span))
            }
            _ => self.primary(),
        }
    }

    fn primary(&mut self) -> PResult<Expr> {
        let start = self.span();
        let kind = match self.peek().clone() {
            Tok::Int(d) => {
                let v = self.int_value(&d, false)?;
                self.advance();
                ExprKind::Int(v)
            }
            Tok::Str(s) => {
                self.advance();
                ExprKind::Str(s)
            }
            Tok::Keyword("true") => {
                self.advance();
                ExprKind::Bool(true)
            }
            Tok::Keyword("false") => {
                self.advance();
                ExprKind::Bool(false)
            }
            Tok::Punct("(") => {
                self.advance();
                let mut e = self.expr()?;
                self.punct(")")?;
                e.span = start.to(self.prev_span());
                return Ok(e);
            }
            Tok::Ident(name) => {
                self.advance();
                if self.at_punct(".") {
                    self.advance();
                    let (member, _) = self.ident()?;
                    if member == "current" {
                        self.punct("(")?;
                        let attribute = self.string()?;
                        self.punct(")")?;
                        ExprKind::AttrRead { device: name, attribute }
                    } else if member == "value" && (name == "evt" || self.param.as_deref() == Some(name.as_str())) {
                        ExprKind::EventValue
                    } else {
                        return Err(Diagnostic::error(
                            DiagCode::Syntax,
                            self.prev_span(),
                            format!("expected `.current(\"<attribute>\")` or `.value`, found `.{member}`"),
                        ));
                    }
                } else {
                    ExprKind::Var(name)
                }
            }
            _ => return self.error("expression"),
        };
        Ok(Expr::new(kind, start.to(self.prev_span())))
    }
}
