//! Symbolic terms and constraint literals, with their s-expression text form.
//!
//! Rule files store every term as an s-expression string such as
//! `(> (var t) (var threshold1))`, so the same text is used for hashing,
//! canonical ordering and serialization.

use std::cmp::Ordering;
use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

use crate::value::Value;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum CmpOp {
    Eq,
    Ne,
    Lt,
    Le,
    Gt,
    Ge,
}

impl CmpOp {
    pub const ALL: [CmpOp; 6] = [CmpOp::Eq, CmpOp::Ne, CmpOp::Lt, CmpOp::Le, CmpOp::Gt, CmpOp::Ge];

    /// Logical negation: `!(a < b)` is `a >= b`.
    pub fn negate(self) -> CmpOp {
        match self {
            CmpOp::Eq => CmpOp::Ne,
            CmpOp::Ne => CmpOp::Eq,
            CmpOp::Lt => CmpOp::Ge,
            CmpOp::Le => CmpOp::Gt,
            CmpOp::Gt => CmpOp::Le,
            CmpOp::Ge => CmpOp::Lt,
        }
    }

    /// The operator obtained by swapping operands: `a < b` is `b > a`.
    pub fn swap(self) -> CmpOp {
        match self {
            CmpOp::Eq => CmpOp::Eq,
            CmpOp::Ne => CmpOp::Ne,
            CmpOp::Lt => CmpOp::Gt,
            CmpOp::Le => CmpOp::Ge,
            CmpOp::Gt => CmpOp::Lt,
            CmpOp::Ge => CmpOp::Le,
        }
    }

    pub fn symbol(self) -> &'static str {
        match self {
            CmpOp::Eq => "==",
            CmpOp::Ne => "!=",
            CmpOp::Lt => "<",
            CmpOp::Le => "<=",
            CmpOp::Gt => ">",
            CmpOp::Ge => ">=",
        }
    }

    pub fn from_symbol(s: &str) -> Option<CmpOp> {
        CmpOp::ALL.into_iter().find(|op| op.symbol() == s)
    }

    pub fn holds(self, ord: Ordering) -> bool {
        match self {
            CmpOp::Eq => ord == Ordering::Equal,
            CmpOp::Ne => ord != Ordering::Equal,
            CmpOp::Lt => ord == Ordering::Less,
            CmpOp::Le => ord != Ordering::Greater,
            CmpOp::Gt => ord == Ordering::Greater,
            CmpOp::Ge => ord != Ordering::Less,
        }
    }

    pub fn is_ordering(self) -> bool {
        !matches!(self, CmpOp::Eq | CmpOp::Ne)
    }
}

impl fmt::Display for CmpOp {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.symbol())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum ArithOp {
    Add,
    Sub,
    Mul,
}

impl ArithOp {
    pub fn symbol(self) -> &'static str {
        match self {
            ArithOp::Add => "+",
            ArithOp::Sub => "-",
            ArithOp::Mul => "*",
        }
    }

    pub fn apply(self, a: i64, b: i64) -> Option<i64> {
        match self {
            ArithOp::Add => a.checked_add(b),
            ArithOp::Sub => a.checked_sub(b),
            ArithOp::Mul => a.checked_mul(b),
        }
    }
}

/// A symbolic term.
///
/// `Var` names either a symbolic input (user input or `state.<key>`) or an
/// SSA-renamed local; the enclosing rule set's input table tells them apart,
/// and locals always carry a defining data constraint.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum Term {
    Int(i64),
    Str(String),
    Bool(bool),
    Var(String),
    Attr { device: String, attribute: String },
    Event,
    Arith(ArithOp, Box<Term>, Box<Term>),
}

impl Term {
    pub fn var(name: impl Into<String>) -> Term {
        Term::Var(name.into())
    }

    pub fn attr(device: impl Into<String>, attribute: impl Into<String>) -> Term {
        Term::Attr { device: device.into(), attribute: attribute.into() }
    }

    pub fn str(s: impl Into<String>) -> Term {
        Term::Str(s.into())
    }

    pub fn constant(v: &Value) -> Term {
        match v {
            Value::Int(i) => Term::Int(*i),
            Value::Str(s) => Term::Str(s.clone()),
            Value::Bool(b) => Term::Bool(*b),
        }
    }

    pub fn as_const(&self) -> Option<Value> {
        match self {
            Term::Int(i) => Some(Value::Int(*i)),
            Term::Str(s) => Some(Value::Str(s.clone())),
            Term::Bool(b) => Some(Value::Bool(*b)),
            _ => None,
        }
    }

    pub fn is_const(&self) -> bool {
        matches!(self, Term::Int(_) | Term::Str(_) | Term::Bool(_))
    }

    pub fn mentions_event(&self) -> bool {
        match self {
            Term::Event => true,
            Term::Arith(_, a, b) => a.mentions_event() || b.mentions_event(),
            _ => false,
        }
    }

    pub fn collect_vars(&self, out: &mut BTreeSet<String>) {
        match self {
            Term::Var(v) => {
                out.insert(v.clone());
            }
            Term::Arith(_, a, b) => {
                a.collect_vars(out);
                b.collect_vars(out);
            }
            _ => {}
        }
    }

    pub fn collect_attrs(&self, out: &mut BTreeSet<(String, String)>) {
        match self {
            Term::Attr { device, attribute } => {
                out.insert((device.clone(), attribute.clone()));
            }
            Term::Arith(_, a, b) => {
                a.collect_attrs(out);
                b.collect_attrs(out);
            }
            _ => {}
        }
    }

    /// Applies `f` bottom-up to every node.
    pub fn map(&self, f: &mut impl FnMut(&Term) -> Option<Term>) -> Term {
        if let Some(t) = f(self) {
            return t;
        }
        match self {
            Term::Arith(op, a, b) => Term::Arith(*op, Box::new(a.map(f)), Box::new(b.map(f))),
            other => other.clone(),
        }
    }

    /// Folds integer arithmetic over constant operands.
    pub fn fold_constants(&self) -> Term {
        match self {
            Term::Arith(op, a, b) => {
                let (a, b) = (a.fold_constants(), b.fold_constants());
                if let (Term::Int(x), Term::Int(y)) = (&a, &b) {
                    if let Some(v) = op.apply(*x, *y) {
                        return Term::Int(v);
                    }
                }
                Term::Arith(*op, Box::new(a), Box::new(b))
            }
            other => other.clone(),
        }
    }

    pub fn sexpr(&self) -> String {
        self.to_string()
    }
}

impl fmt::Display for Term {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Term::Int(v) => write!(f, "{v}"),
            Term::Str(s) => write_quoted(f, s),
            Term::Bool(b) => write!(f, "{b}"),
            Term::Var(name) => write!(f, "(var {name})"),
            Term::Attr { device, attribute } => write!(f, "(attr {device} {attribute})"),
            Term::Event => f.write_str("(event)"),
            Term::Arith(op, a, b) => write!(f, "({} {a} {b})", op.symbol()),
        }
    }
}

fn write_quoted(f: &mut fmt::Formatter<'_>, s: &str) -> fmt::Result {
    f.write_str("\"")?;
    for c in s.chars() {
        match c {
            '"' => f.write_str("\\\"")?,
            '\\' => f.write_str("\\\\")?,
            '\n' => f.write_str("\\n")?,
            '\t' => f.write_str("\\t")?,
            c => write!(f, "{c}")?,
        }
    }
    f.write_str("\"")
}

/// A comparison literal. Negated literals are stored with the flipped operator,
/// so every stored literal is positive.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct ConstraintLit {
    pub lhs: Term,
    pub op: CmpOp,
    pub rhs: Term,
}

impl ConstraintLit {
    pub fn new(lhs: Term, op: CmpOp, rhs: Term) -> Self {
        ConstraintLit { lhs, op, rhs }
    }

    /// Builds a literal with constants moved to the right-hand side.
    pub fn normalized(lhs: Term, op: CmpOp, rhs: Term) -> Self {
        if lhs.is_const() && !rhs.is_const() {
            ConstraintLit { lhs: rhs, op: op.swap(), rhs: lhs }
        } else {
            ConstraintLit { lhs, op, rhs }
        }
    }

    pub fn negate(&self) -> Self {
        ConstraintLit { lhs: self.lhs.clone(), op: self.op.negate(), rhs: self.rhs.clone() }
    }

    pub fn mentions_event(&self) -> bool {
        self.lhs.mentions_event() || self.rhs.mentions_event()
    }

    pub fn collect_vars(&self, out: &mut BTreeSet<String>) {
        self.lhs.collect_vars(out);
        self.rhs.collect_vars(out);
    }

    pub fn collect_attrs(&self, out: &mut BTreeSet<(String, String)>) {
        self.lhs.collect_attrs(out);
        self.rhs.collect_attrs(out);
    }

    pub fn map_terms(&self, f: &mut impl FnMut(&Term) -> Option<Term>) -> Self {
        ConstraintLit { lhs: self.lhs.map(f), op: self.op, rhs: self.rhs.map(f) }
    }

    /// Evaluates a literal whose operands are both constants.
    pub fn eval_const(&self) -> Option<bool> {
        let (a, b) = (self.lhs.fold_constants().as_const()?, self.rhs.fold_constants().as_const()?);
        if a.sort() != b.sort() {
            return None;
        }
        if self.op.is_ordering() && a.sort() != crate::value::Sort::Int {
            return None;
        }
        Some(self.op.holds(a.cmp(&b)))
    }
}

impl fmt::Display for ConstraintLit {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({} {} {})", self.op.symbol(), self.lhs, self.rhs)
    }
}

/// `target = source`, recorded for each assignment and configuration binding.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct DataConstraint {
    pub target: Term,
    pub source: Term,
}

impl DataConstraint {
    pub fn new(target: Term, source: Term) -> Self {
        DataConstraint { target, source }
    }

    pub fn defined_name(&self) -> Option<&str> {
        match &self.target {
            Term::Var(v) => Some(v),
            _ => None,
        }
    }
}

impl fmt::Display for DataConstraint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "(= {} {})", self.target, self.source)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("malformed s-expression at offset {offset}: {message}")]
pub struct SexprError {
    pub offset: usize,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq)]
enum Sx {
    Atom(String),
    Quoted(String),
    List(Vec<Sx>),
}

struct SxReader<'a> {
    src: &'a str,
    pos: usize,
}

impl<'a> SxReader<'a> {
    fn err(&self, message: impl Into<String>) -> SexprError {
        SexprError { offset: self.pos, message: message.into() }
    }

    fn skip_ws(&mut self) {
        while let Some(c) = self.src[self.pos..].chars().next() {
            if c.is_whitespace() {
                self.pos += c.len_utf8();
            } else {
                break;
            }
        }
    }

    fn read(&mut self) -> Result<Sx, SexprError> {
        self.skip_ws();
        let Some(c) = self.src[self.pos..].chars().next() else {
            return Err(self.err("unexpected end of input"));
        };
        match c {
            '(' => {
                self.pos += 1;
                let mut items = Vec::new();
                loop {
                    self.skip_ws();
                    match self.src[self.pos..].chars().next() {
                        Some(')') => {
                            self.pos += 1;
                            return Ok(Sx::List(items));
                        }
                        Some(_) => items.push(self.read()?),
                        None => return Err(self.err("unclosed list")),
                    }
                }
            }
            ')' => Err(self.err("unexpected ')'")),
            '"' => {
                self.pos += 1;
                let mut out = String::new();
                let mut chars = self.src[self.pos..].char_indices();
                loop {
                    let Some((i, c)) = chars.next() else {
                        return Err(self.err("unterminated string"));
                    };
                    match c {
                        '"' => {
                            self.pos += i + 1;
                            return Ok(Sx::Quoted(out));
                        }
                        '\\' => match chars.next() {
                            Some((_, '"')) => out.push('"'),
                            Some((_, '\\')) => out.push('\\'),
                            Some((_, 'n')) => out.push('\n'),
                            Some((_, 't')) => out.push('\t'),
                            _ => return Err(self.err("bad escape")),
                        },
                        c => out.push(c),
                    }
                }
            }
            _ => {
                let start = self.pos;
                while let Some(c) = self.src[self.pos..].chars().next() {
                    if c.is_whitespace() || c == '(' || c == ')' || c == '"' {
                        break;
                    }
                    self.pos += c.len_utf8();
                }
                Ok(Sx::Atom(self.src[start..self.pos].to_string()))
            }
        }
    }

    fn read_all(src: &'a str) -> Result<Sx, SexprError> {
        let mut r = SxReader { src, pos: 0 };
        let sx = r.read()?;
        r.skip_ws();
        if r.pos != src.len() {
            return Err(r.err("trailing input"));
        }
        Ok(sx)
    }
}

fn term_from_sx(sx: &Sx) -> Result<Term, SexprError> {
    let bad = |m: &str| SexprError { offset: 0, message: m.to_string() };
    match sx {
        Sx::Quoted(s) => Ok(Term::Str(s.clone())),
        Sx::Atom(a) => match a.as_str() {
            "true" => Ok(Term::Bool(true)),
            "false" => Ok(Term::Bool(false)),
            _ => a.parse::<i64>().map(Term::Int).map_err(|_| bad(&format!("unexpected atom `{a}`"))),
        },
        Sx::List(items) => {
            let head = match items.first() {
                Some(Sx::Atom(h)) => h.as_str(),
                _ => return Err(bad("list without head symbol")),
            };
            let atom = |i: usize| match items.get(i) {
                Some(Sx::Atom(a)) => Ok(a.clone()),
                _ => Err(bad(&format!("`{head}` expects a name at position {i}"))),
            };
            match (head, items.len()) {
                ("var", 2) => Ok(Term::Var(atom(1)?)),
                ("attr", 3) => Ok(Term::Attr { device: atom(1)?, attribute: atom(2)? }),
                ("event", 1) => Ok(Term::Event),
                ("+" | "-" | "*", 3) => {
                    let op = match head {
                        "+" => ArithOp::Add,
                        "-" => ArithOp::Sub,
                        _ => ArithOp::Mul,
                    };
                    Ok(Term::Arith(op, Box::new(term_from_sx(&items[1])?), Box::new(term_from_sx(&items[2])?)))
                }
                _ => Err(bad(&format!("unknown term form `{head}`/{}", items.len() - 1))),
            }
        }
    }
}

fn binary_parts(sx: &Sx) -> Result<(&str, Term, Term), SexprError> {
    let bad = |m: &str| SexprError { offset: 0, message: m.to_string() };
    match sx {
        Sx::List(items) if items.len() == 3 => {
            let Sx::Atom(head) = &items[0] else {
                return Err(bad("expected operator"));
            };
            Ok((head.as_str(), term_from_sx(&items[1])?, term_from_sx(&items[2])?))
        }
        _ => Err(bad("expected a three-element list")),
    }
}

impl FromStr for Term {
    type Err = SexprError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        term_from_sx(&SxReader::read_all(s)?)
    }
}

impl FromStr for ConstraintLit {
    type Err = SexprError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let sx = SxReader::read_all(s)?;
        let (head, lhs, rhs) = binary_parts(&sx)?;
        let op = CmpOp::from_symbol(head)
            .ok_or_else(|| SexprError { offset: 0, message: format!("unknown comparison `{head}`") })?;
        Ok(ConstraintLit { lhs, op, rhs })
    }
}

impl FromStr for DataConstraint {
    type Err = SexprError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let sx = SxReader::read_all(s)?;
        let (head, target, source) = binary_parts(&sx)?;
        if head != "=" {
            return Err(SexprError { offset: 0, message: format!("expected `=`, found `{head}`") });
        }
        Ok(DataConstraint { target, source })
    }
}

macro_rules! sexpr_serde {
    ($ty:ty) => {
        impl Serialize for $ty {
            fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
                s.serialize_str(&self.to_string())
            }
        }

        impl<'de> Deserialize<'de> for $ty {
            fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
                let text = String::deserialize(d)?;
                text.parse().map_err(serde::de::Error::custom)
            }
        }
    };
}

sexpr_serde!(Term);
sexpr_serde!(ConstraintLit);
sexpr_serde!(DataConstraint);

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn literal_text_form() {
        let lit = ConstraintLit::new(Term::var("t"), CmpOp::Gt, Term::var("threshold1"));
        assert_eq!(lit.to_string(), "(> (var t) (var threshold1))");
        assert_eq!(lit.to_string().parse::<ConstraintLit>().unwrap(), lit);
    }

    #[test]
    fn strings_escape_and_parse_back() {
        let t = Term::str("I am \"coming\" home\\");
        assert_eq!(t.to_string().parse::<Term>().unwrap(), t);
    }

    #[test]
    fn data_constraint_round_trip() {
        let d = DataConstraint::new(Term::var("t"), Term::attr("tSensor", "temperature"));
        assert_eq!(d.to_string(), "(= (var t) (attr tSensor temperature))");
        assert_eq!(d.to_string().parse::<DataConstraint>().unwrap(), d);
    }

    #[test]
    fn negation_flips_operator() {
        for op in CmpOp::ALL {
            assert_eq!(op.negate().negate(), op);
            for ord in [Ordering::Less, Ordering::Equal, Ordering::Greater] {
                assert_ne!(op.holds(ord), op.negate().holds(ord));
                assert_eq!(op.holds(ord), op.swap().holds(ord.reverse()));
            }
        }
    }

    #[test]
    fn normalized_moves_constants_right() {
        let lit = ConstraintLit::normalized(Term::Int(30), CmpOp::Lt, Term::var("t"));
        assert_eq!(lit.to_string(), "(> (var t) 30)");
    }

    #[test]
    fn rejects_garbage() {
        assert!("(> (var t)".parse::<ConstraintLit>().is_err());
        assert!("(foo 1 2)".parse::<ConstraintLit>().is_err());
        assert!("(var)".parse::<Term>().is_err());
        assert!("1 2".parse::<Term>().is_err());
    }
}
