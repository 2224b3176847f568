//! HGL: the automation language analyzed by this crate.

mod diagnostics;
mod lexer;
mod parser;
mod printer;
mod validate;

pub use diagnostics::{DiagCode, Diagnostic, Pos, Severity, Span};
pub use parser::{parse, parse_bytes};
pub use printer::print_unit;
pub use validate::validate;

/// Names that resolve to built-in receivers rather than declared inputs.
pub const BUILTIN_RECEIVERS: [&str; 4] = ["location", "clock", "state", "api"];

/// Lifecycle entry points.
pub const ENTRY_POINTS: [&str; 3] = ["installed", "updated", "uninstalled"];

#[derive(Debug, Clone)]
pub struct SourceUnit {
    pub app_name: String,
    pub inputs: Vec<InputDecl>,
    pub functions: Vec<FuncDef>,
    pub source_text: String,
}

// Two units are equal when their syntax trees match; source text and spans
// are presentation details.
impl PartialEq for SourceUnit {
    fn eq(&self, other: &Self) -> bool {
        self.app_name == other.app_name && self.inputs == other.inputs && self.functions == other.functions
    }
}

impl SourceUnit {
    pub fn function(&self, name: &str) -> Option<&FuncDef> {
        self.functions.iter().find(|f| f.name == name)
    }

    pub fn input(&self, name: &str) -> Option<&InputDecl> {
        self.inputs.iter().find(|i| i.name == name)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum InputKind {
    Device(String),
    Number,
    Str,
    Bool,
    Enum(Vec<String>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct InputDecl {
    pub name: String,
    pub kind: InputKind,
    pub title: Option<String>,
    pub span: Span,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FuncDef {
    pub name: String,
    pub param: Option<String>,
    pub body: Vec<Stmt>,
    pub span: Span,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Stmt {
    pub kind: StmtKind,
    pub span: Span,
}

#[derive(Debug, Clone, PartialEq)]
pub enum StmtKind {
    Subscribe { device: String, spec: String, handler: String },
    RunIn { delay: Expr, handler: String },
    RunEvery { period: Expr, handler: String },
    Assign { target: String, value: Expr },
    Command { device: String, command: String, args: Vec<Expr> },
    Api { name: String, args: Vec<Expr> },
    Call { name: String },
    If { cond: Expr, then_body: Vec<Stmt>, else_body: Option<Vec<Stmt>> },
    Switch { scrutinee: Expr, cases: Vec<(Literal, Vec<Stmt>)>, default: Option<Vec<Stmt>> },
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
pub enum Literal {
    Int(i64),
    Str(String),
    Bool(bool),
}

impl Literal {
    pub fn to_value(&self) -> crate::value::Value {
        match self {
            Literal::Int(v) => crate::value::Value::Int(*v),
            Literal::Str(s) => crate::value::Value::Str(s.clone()),
            Literal::Bool(b) => crate::value::Value::Bool(*b),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Expr {
    pub kind: ExprKind,
    pub span: Span,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum UnOp {
    Not,
    Neg,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BinOp {
    Add,
    Sub,
    Mul,
    Eq,
    Ne,
    Lt,
    Le,
    Gt,
    Ge,
    And,
    Or,
}

impl BinOp {
    pub fn symbol(self) -> &'static str {
        match self {
            BinOp::Add => "+",
            BinOp::Sub => "-",
            BinOp::Mul => "*",
            BinOp::Eq => "==",
            BinOp::Ne => "!=",
            BinOp::Lt => "<",
            BinOp::Le => "<=",
            BinOp::Gt => ">",
            BinOp::Ge => ">=",
            BinOp::And => "&&",
            BinOp::Or => "||",
        }
    }

    /// Binding strength; larger binds tighter.
    pub fn precedence(self) -> u8 {
        match self {
            BinOp::Or => 1,
            BinOp::And => 2,
            BinOp::Eq | BinOp::Ne => 3,
            BinOp::Lt | BinOp::Le | BinOp::Gt | BinOp::Ge => 4,
            BinOp::Add | BinOp::Sub => 5,
            BinOp::Mul => 6,
        }
    }

    pub fn is_comparison(self) -> bool {
        matches!(self, BinOp::Eq | BinOp::Ne | BinOp::Lt | BinOp::Le | BinOp::Gt | BinOp::Ge)
    }

    pub fn is_logical(self) -> bool {
        matches!(self, BinOp::And | BinOp::Or)
    }

    pub fn cmp_op(self) -> Option<crate::term::CmpOp> {
        use crate::term::CmpOp;
        Some(match self {
            BinOp::Eq => CmpOp::Eq,
            BinOp::Ne => CmpOp::Ne,
            BinOp::Lt => CmpOp::Lt,
            BinOp::Le => CmpOp::Le,
            BinOp::Gt => CmpOp::Gt,
            BinOp::Ge => CmpOp::Ge,
            _ => return None,
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum ExprKind {
    Int(i64),
    Str(String),
    Bool(bool),
    Var(String),
    EventValue,
    AttrRead { device: String, attribute: String },
    Unary(UnOp, Box<Expr>),
    Binary(BinOp, Box<Expr>, Box<Expr>),
}

impl Expr {
    pub fn new(kind: ExprKind, span: Span) -> Self {
        Expr { kind, span }
    }

    /// Folds to an integer constant when the expression has no free symbols.
    pub fn const_int(&self) -> Option<i64> {
        match &self.kind {
            ExprKind::Int(v) => Some(*v),
            ExprKind::Unary(UnOp::Neg, e) => e.const_int()?.checked_neg(),
            ExprKind::Binary(op, a, b) => {
                let (a, b) = (a.const_int()?, b.const_int()?);
                match op {
                    BinOp::Add => a.checked_add(b),
                    BinOp::Sub => a.checked_sub(b),
                    BinOp::Mul => a.checked_mul(b),
                    _ => None,
                }
            }
            _ => None,
        }
    }
}

/// Visits every statement, including nested bodies, in source order.
pub fn walk_stmts<'a>(body: &'a [Stmt], f: &mut impl FnMut(&'a Stmt)) {
    for stmt in body {
        f(stmt);
        match &stmt.kind {
            StmtKind::If { then_body, else_body, .. } => {
                walk_stmts(then_body, f);
                if let Some(e) = else_body {
                    walk_stmts(e, f);
                }
            }
            StmtKind::Switch { cases, default, .. } => {
                for (_, b) in cases {
                    walk_stmts(b, f);
                }
                if let Some(d) = default {
                    walk_stmts(d, f);
                }
            }
            _ => {}
        }
    }
}

/// Visits every sub-expression of `e`, parents first.
pub fn walk_expr<'a>(e: &'a Expr, f: &mut impl FnMut(&'a Expr)) {
    f(e);
    match &e.kind {
        ExprKind::Unary(_, x) => walk_expr(x, f),
        ExprKind::Binary(_, a, b) => {
            walk_expr(a, f);
            walk_expr(b, f);
        }
        _ => {}
    }
}
