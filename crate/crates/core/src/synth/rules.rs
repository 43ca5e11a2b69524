//! Logical constraints: `condition => target := value`.
//!
//! Conditions are comparisons joined by `and`, `or`, `not` (or `&&`, `||`,
//! `!`) with parentheses. A comparison against a missing cell is false.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::table::{Cell, DataTable, Schema, VariableKind};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CmpOp {
    Eq,
    Ne,
    Lt,
    Le,
    Gt,
    Ge,
}

impl CmpOp {
    fn symbol(self) -> &'static str {
        match self {
            CmpOp::Eq => "==",
            CmpOp::Ne => "!=",
            CmpOp::Lt => "<",
            CmpOp::Le => "<=",
            CmpOp::Gt => ">",
            CmpOp::Ge => ">=",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Literal {
    Num(f64),
    Text(String),
}

impl Literal {
    fn text(&self) -> String {
        match self {
            Literal::Num(x) => format!("{x}"),
            Literal::Text(s) => s.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Condition {
    Compare {
        variable: String,
        op: CmpOp,
        value: Literal,
    },
    And(Box<Condition>, Box<Condition>),
    Or(Box<Condition>, Box<Condition>),
    Not(Box<Condition>),
}

impl fmt::Display for Condition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Condition::Compare { variable, op, value } => match value {
                Literal::Num(x) => write!(f, "{variable} {} {x}", op.symbol()),
                Literal::Text(s) => write!(f, "{variable} {} {s:?}", op.symbol()),
            },
            Condition::And(a, b) => write!(f, "({a} and {b})"),
            Condition::Or(a, b) => write!(f, "({a} or {b})"),
            Condition::Not(a) => write!(f, "not {a}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Token {
    Ident(String),
    Num(f64),
    Str(String),
    Op(CmpOp),
    And,
    Or,
    Not,
    Open,
    Close,
}

fn tokenize(src: &str) -> Result<Vec<Token>> {
    let err = |m: String| Error::Rule(format!("{m} in `{src}`"));
    let chars: Vec<char> = src.chars().collect();
    let mut out = Vec::new();
    let mut i = 0;
    while i < chars.len() {
        let c = chars[i];
        let next = chars.get(i + 1).copied();
        match c {
            c if c.is_whitespace() => i += 1,
            '(' => {
                out.push(Token::Open);
                i += 1;
            }
            ')' => {
                out.push(Token::Close);
                i += 1;
            }
            '&' if next == Some('&') => {
                out.push(Token::And);
                i += 2;
            }
            '|' if next == Some('|') => {
                out.push(Token::Or);
                i += 2;
            }
            '=' | '!' | '<' | '>' => {
                let (op, len) = match (c, next) {
                    ('=', Some('=')) => (Some(CmpOp::Eq), 2),
                    ('=', _) => (Some(CmpOp::Eq), 1),
                    ('!', Some('=')) => (Some(CmpOp::Ne), 2),
                    ('!', _) => (None, 1),
                    ('<', Some('=')) => (Some(CmpOp::Le), 2),
                    ('<', _) => (Some(CmpOp::Lt), 1),
                    ('>', Some('=')) => (Some(CmpOp::Ge), 2),
                    _ => (Some(CmpOp::Gt), 1),
                };
                out.push(op.map_or(Token::Not, Token::Op));
                i += len;
            }
            '"' | '\'' => {
                let end = chars[i + 1..]
                    .iter()
                    .position(|&d| d == c)
                    .ok_or_else(|| err("unterminated string".into()))?;
                out.push(Token::Str(chars[i + 1..i + 1 + end].iter().collect()));
                i += end + 2;
            }
            c if c.is_ascii_digit() || c == '-' || c == '.' => {
                let start = i;
                i += 1;
                while i < chars.len()
                    && (chars[i].is_ascii_alphanumeric()
                        || chars[i] == '.'
                        || (matches!(chars[i], '+' | '-') && matches!(chars[i - 1], 'e' | 'E')))
                {
                    i += 1;
                }
                let text: String = chars[start..i].iter().collect();
                let x = text.parse().map_err(|_| err(format!("bad number `{text}`")))?;
                out.push(Token::Num(x));
            }
            c if c.is_alphabetic() || c == '_' => {
                let start = i;
                while i < chars.len() && (chars[i].is_alphanumeric() || matches!(chars[i], '_' | '.')) {
                    i += 1;
                }
                let word: String = chars[start..i].iter().collect();
                out.push(match word.to_ascii_lowercase().as_str() {
                    "and" => Token::And,
                    "or" => Token::Or,
                    "not" => Token::Not,
                    _ => Token::Ident(word),
                });
            }
            c => return Err(err(format!("unexpected character `{c}`"))),
        }
    }
    Ok(out)
}

struct Parser<'a> {
    tokens: Vec<Token>,
    pos: usize,
    src: &'a str,
}

impl Parser<'_> {
    fn err(&self, m: &str) -> Error {
        Error::Rule(format!("{m} at token {} in `{}`", self.pos + 1, self.src))
    }

    fn peek(&self) -> Option<&Token> {
        self.tokens.get(self.pos)
    }

    fn bump(&mut self) -> Option<Token> {
        let t = self.tokens.get(self.pos).cloned();
        self.pos += 1;
        t
    }

    fn or(&mut self) -> Result<Condition> {
        let mut lhs = self.and()?;
        while self.peek() == Some(&Token::Or) {
            self.pos += 1;
            lhs = Condition::Or(Box::new(lhs), Box::new(self.and()?));
        }
        Ok(lhs)
    }

    fn and(&mut self) -> Result<Condition> {
        let mut lhs = self.unary()?;
        while self.peek() == Some(&Token::And) {
            self.pos += 1;
            lhs = Condition::And(Box::new(lhs), Box::new(self.unary()?));
        }
        Ok(lhs)
    }

    fn unary(&mut self) -> Result<Condition> {
        match self.bump() {
            Some(Token::Not) => Ok(Condition::Not(Box::new(self.unary()?))),
            Some(Token::Open) => {
                let inner = self.or()?;
                match self.bump() {
                    Some(Token::Close) => Ok(inner),
                    _ => Err(self.err("expected `)`")),
                }
            }
            Some(Token::Ident(variable)) => {
                let op = match self.bump() {
                    Some(Token::Op(op)) => op,
                    _ => return Err(self.err("expected a comparison operator")),
                };
                let value = match self.bump() {
                    Some(Token::Num(x)) => Literal::Num(x),
                    Some(Token::Str(s) | Token::Ident(s)) => Literal::Text(s),
                    _ => return Err(self.err("expected a value")),
                };
                Ok(Condition::Compare { variable, op, value })
            }
            _ => Err(self.err("expected a comparison, `not` or `(`")),
        }
    }
}

impl Condition {
    pub fn parse(src: &str) -> Result<Condition> {
        let mut p = Parser {
            tokens: tokenize(src)?,
            pos: 0,
            src,
        };
        let c = p.or()?;
        if p.pos < p.tokens.len() {
            return Err(p.err("unexpected trailing input"));
        }
        Ok(c)
    }

    /// Variables referenced, in order of appearance.
    pub fn variables(&self) -> Vec<&str> {
        let mut out = Vec::new();
        self.collect_vars(&mut out);
        out
    }

    fn collect_vars<'a>(&'a self, out: &mut Vec<&'a str>) {
        match self {
            Condition::Compare { variable, .. } => {
                if !out.contains(&variable.as_str()) {
                    out.push(variable);
                }
            }
            Condition::And(a, b) | Condition::Or(a, b) => {
                a.collect_vars(out);
                b.collect_vars(out);
            }
            Condition::Not(a) => a.collect_vars(out),
        }
    }
}

/// Overwrite `target` with `value` wherever `condition` holds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Rule {
    #[serde(rename = "when")]
    pub condition: String,
    pub target: String,
    pub value: String,
}

impl Rule {
    pub fn new(condition: impl Into<String>, target: impl Into<String>, value: impl Into<String>) -> Rule {
        Rule {
            condition: condition.into(),
            target: target.into(),
            value: value.into(),
        }
    }

    /// Resolve names, levels and the forced value against `schema`.
    pub fn compile(&self, schema: &Schema) -> Result<CompiledRule> {
        let cond = Condition::parse(&self.condition)?;
        let target = schema.index_of(&self.target)?;
        let def = schema.variable(target);
        let value = crate::table::parse_cell(def, &self.value)
            .map_err(|m| Error::Rule(format!("forced value for `{}`: {m}", self.target)))?;
        Ok(CompiledRule {
            expr: compile_expr(&cond, schema)?,
            target,
            value,
            variables: cond
                .variables()
                .iter()
                .map(|v| schema.index_of(v))
                .collect::<Result<_>>()?,
        })
    }
}

impl fmt::Display for Rule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} => {} := {}", self.condition, self.target, self.value)
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Expr {
    Num {
        var: usize,
        op: CmpOp,
        value: f64,
    },
    Cat {
        var: usize,
        equal: bool,
        category: usize,
        n_levels: usize,
    },
    And(Box<Expr>, Box<Expr>),
    Or(Box<Expr>, Box<Expr>),
    Not(Box<Expr>),
}

fn compile_expr(c: &Condition, schema: &Schema) -> Result<Expr> {
    Ok(match c {
        Condition::Compare { variable, op, value } => {
            let var = schema.index_of(variable)?;
            let def = schema.variable(var);
            match def.kind {
                VariableKind::Continuous => match value {
                    Literal::Num(x) => Expr::Num {
                        var,
                        op: *op,
                        value: *x,
                    },
                    Literal::Text(t) => {
                        return Err(Error::Rule(format!(
                            "`{variable}` is continuous but compared with text `{t}`"
                        )))
                    }
                },
                VariableKind::Categorical => {
                    let equal = match op {
                        CmpOp::Eq => true,
                        CmpOp::Ne => false,
                        _ => {
                            return Err(Error::Rule(format!(
                                "`{variable}` is categorical; only == and != apply"
                            )))
                        }
                    };
                    let text = value.text();
                    let category = def
                        .level_index(&text)
                        .map(|l| l as usize)
                        .or_else(|| def.missing_index(&text).map(|m| def.levels.len() + m as usize))
                        .ok_or_else(|| Error::Rule(format!("`{text}` is not a category of `{variable}`")))?;
                    Expr::Cat {
                        var,
                        equal,
                        category,
                        n_levels: def.levels.len(),
                    }
                }
            }
        }
        Condition::And(a, b) => Expr::And(Box::new(compile_expr(a, schema)?), Box::new(compile_expr(b, schema)?)),
        Condition::Or(a, b) => Expr::Or(Box::new(compile_expr(a, schema)?), Box::new(compile_expr(b, schema)?)),
        Condition::Not(a) => Expr::Not(Box::new(compile_expr(a, schema)?)),
    })
}

impl Expr {
    fn eval(&self, table: &DataTable, row: usize) -> bool {
        match self {
            Expr::Num { var, op, value } => match table.column_at(*var)[row] {
                Cell::Num(x) => match op {
                    CmpOp::Eq => x == *value,
                    CmpOp::Ne => x != *value,
                    CmpOp::Lt => x < *value,
                    CmpOp::Le => x <= *value,
                    CmpOp::Gt => x > *value,
                    CmpOp::Ge => x >= *value,
                },
                _ => false,
            },
            Expr::Cat {
                var,
                equal,
                category,
                n_levels,
            } => {
                let cell = table.column_at(*var)[row];
                // comparisons against missing cells are false unless the
                // literal names the missing code itself
                if cell.is_missing() && *category < *n_levels {
                    return false;
                }
                (cell.category(*n_levels) == Some(*category)) == *equal
            }
            Expr::And(a, b) => a.eval(table, row) && b.eval(table, row),
            Expr::Or(a, b) => a.eval(table, row) || b.eval(table, row),
            Expr::Not(a) => !a.eval(table, row),
        }
    }
}

/// A rule resolved against a schema.
#[derive(Debug, Clone, PartialEq)]
pub struct CompiledRule {
    expr: Expr,
    pub target: usize,
    pub value: Cell,
    /// Schema indices of the condition's variables.
    pub variables: Vec<usize>,
}

impl CompiledRule {
    pub fn holds(&self, table: &DataTable, row: usize) -> bool {
        self.expr.eval(table, row)
    }

    /// Rows where the condition holds.
    pub fn matching_rows(&self, table: &DataTable) -> Vec<usize> {
        (0..table.n_rows()).filter(|&r| self.holds(table, r)).collect()
    }

    /// Rows where the condition holds but the target differs from the value.
    pub fn violations(&self, table: &DataTable) -> usize {
        let col = table.column_at(self.target);
        (0..table.n_rows())
            .filter(|&r| self.holds(table, r) && col[r] != self.value)
            .count()
    }
}
