use std::collections::BTreeMap;

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::Zero;
use thiserror::Error;

use super::{validate, Diagnostic, Expr, Feature, FeatureModel, Group, GroupKind, Location, Term};
use crate::pb::Relation;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum UvlErrorKind {
    #[error("syntax error: {0}")]
    Syntax(String),
    #[error("inconsistent indentation")]
    Indentation,
    #[error("{0}")]
    Invalid(Diagnostic),
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
#[error("{line}:{col}: {kind}")]
pub struct UvlError {
    pub line: usize,
    pub col: usize,
    pub kind: UvlErrorKind,
}

/// Parses a model and rejects it if [`validate`] reports anything.
pub fn parse_uvl(text: &str) -> Result<FeatureModel, UvlError> {
    let (model, lines) = parse_with_lines(text)?;
    if let Some(d) = validate(&model).into_iter().next() {
        let line = match &d.location {
            Location::Feature(n) | Location::Group { feature: n, .. } => lines.features.get(n).copied().unwrap_or(0),
            Location::Constraint(i) => lines.constraints.get(*i).copied().unwrap_or(0),
        };
        return Err(UvlError { line, col: 1, kind: UvlErrorKind::Invalid(d) });
    }
    Ok(model)
}

/// Parses without validating references and bounds.
pub fn parse_uvl_unchecked(text: &str) -> Result<FeatureModel, UvlError> {
    parse_with_lines(text).map(|(m, _)| m)
}

#[derive(Default)]
struct LineMap {
    features: BTreeMap<String, usize>,
    constraints: Vec<usize>,
}

struct Line<'a> {
    indent: usize,
    text: &'a str,
    lineno: usize,
    offset: usize,
}

const KEYWORDS: &[&str] =
    &["features", "constraints", "optional", "mandatory", "or", "alternative", "cardinality", "sum", "avg"];

pub(super) fn is_keyword(s: &str) -> bool {
    KEYWORDS.contains(&s)
}

fn strip_comment(line: &str) -> &str {
    let mut in_quote = false;
    let bytes = line.as_bytes();
    for i in 0..bytes.len() {
        match bytes[i] {
            b'"' => in_quote = !in_quote,
            b'/' if !in_quote && bytes.get(i + 1) == Some(&b'/') => return &line[..i],
            _ => {}
        }
    }
    line
}

fn split_lines(text: &str) -> Result<Vec<Line<'_>>, UvlError> {
    let mut out = Vec::new();
    let mut indent_char: Option<char> = None;
    for (idx, raw) in text.lines().enumerate() {
        let lineno = idx + 1;
        let line = strip_comment(raw).trim_end();
        let content = line.trim_start();
        if content.is_empty() {
            continue;
        }
        let ws = &line[..line.len() - content.len()];
        for c in ws.chars() {
            match indent_char {
                None => indent_char = Some(c),
                Some(prev) if prev != c => {
                    return Err(UvlError { line: lineno, col: 1, kind: UvlErrorKind::Indentation });
                }
                _ => {}
            }
        }
        out.push(Line { indent: ws.chars().count(), text: content, lineno, offset: ws.len() });
    }
    Ok(out)
}

#[derive(Clone, Debug, PartialEq)]
enum Tok {
    Ident(String),
    Quoted(String),
    Num(BigRational),
    Sym(&'static str),
}

const SYMBOLS: &[&str] = &[
    "<=>", "=>", "==", "!=", ">=", "<=", "..", "&", "|", "!", "=", ">", "<", "+", "-", "*", "/", "(", ")", "[", "]",
    "{", "}", ",", ".",
];

fn lex(line: &Line<'_>) -> Result<Vec<(Tok, usize)>, UvlError> {
    let s = line.text;
    let bytes = s.as_bytes();
    let err = |i: usize, msg: String| UvlError {
        line: line.lineno,
        col: line.offset + i + 1,
        kind: UvlErrorKind::Syntax(msg),
    };
    let mut out = Vec::new();
    let mut i = 0;
    'outer: while i < bytes.len() {
        let c = bytes[i];
        if c.is_ascii_whitespace() {
            i += 1;
            continue;
        }
        if c == b'"' {
            let end = s[i + 1..].find('"').ok_or_else(|| err(i, "unterminated quoted name".into()))?;
            out.push((Tok::Quoted(s[i + 1..i + 1 + end].to_string()), i));
            i += end + 2;
            continue;
        }
        if c.is_ascii_digit() {
            let start = i;
            while i < bytes.len() && bytes[i].is_ascii_digit() {
                i += 1;
            }
            let int_end = i;
            if i + 1 < bytes.len() && bytes[i] == b'.' && bytes[i + 1].is_ascii_digit() {
                i += 1;
                while i < bytes.len() && bytes[i].is_ascii_digit() {
                    i += 1;
                }
            }
            let frac = if i > int_end { &s[int_end + 1..i] } else { "" };
            out.push((Tok::Num(parse_decimal(&s[start..int_end], frac)), start));
            continue;
        }
        if c.is_ascii_alphabetic() || c == b'_' {
            let start = i;
            while i < bytes.len() && (bytes[i].is_ascii_alphanumeric() || bytes[i] == b'_') {
                i += 1;
            }
            out.push((Tok::Ident(s[start..i].to_string()), start));
            continue;
        }
        for sym in SYMBOLS {
            if s[i..].starts_with(sym) {
                out.push((Tok::Sym(sym), i));
                i += sym.len();
                continue 'outer;
            }
        }
        let ch = s[i..].chars().next().unwrap_or('?');
        return Err(err(i, format!("unexpected character `{ch}`")));
    }
    Ok(out)
}

fn parse_decimal(int_part: &str, frac: &str) -> BigRational {
    let digits: BigInt = format!("{int_part}{frac}").parse().expect("digits only");
    let denom = BigInt::from(10u32).pow(frac.len() as u32);
    BigRational::new(digits, denom)
}

struct Cursor<'l, 'a> {
    line: &'l Line<'a>,
    toks: Vec<(Tok, usize)>,
    pos: usize,
}

impl<'l, 'a> Cursor<'l, 'a> {
    fn new(line: &'l Line<'a>) -> Result<Self, UvlError> {
        Ok(Cursor { line, toks: lex(line)?, pos: 0 })
    }

    fn peek(&self) -> Option<&Tok> {
        self.toks.get(self.pos).map(|(t, _)| t)
    }

    fn next(&mut self) -> Option<Tok> {
        let t = self.toks.get(self.pos).map(|(t, _)| t.clone());
        self.pos += 1;
        t
    }

    fn error(&self, msg: impl Into<String>) -> UvlError {
        let col = self
            .toks
            .get(self.pos)
            .map(|(_, c)| *c)
            .unwrap_or(self.line.text.len());
        UvlError { line: self.line.lineno, col: self.line.offset + col + 1, kind: UvlErrorKind::Syntax(msg.into()) }
    }

    fn eat(&mut self, sym: &str) -> bool {
        if matches!(self.peek(), Some(Tok::Sym(s)) if *s == sym) {
            self.pos += 1;
            true
        } else {
            false
        }
    }

    fn expect(&mut self, sym: &str) -> Result<(), UvlError> {
        if self.eat(sym) {
            Ok(())
        } else {
            Err(self.error(format!("expected `{sym}`")))
        }
    }

    fn done(&self) -> bool {
        self.pos >= self.toks.len()
    }

    fn expect_end(&self) -> Result<(), UvlError> {
        if self.done() {
            Ok(())
        } else {
            Err(self.error("unexpected trailing input"))
        }
    }

    fn name(&mut self) -> Result<String, UvlError> {
        match self.next() {
            Some(Tok::Ident(n)) if !is_keyword(&n) => Ok(n),
            Some(Tok::Quoted(n)) => Ok(n),
            _ => {
                self.pos -= 1;
                Err(self.error("expected a name"))
            }
        }
    }

    fn uint(&mut self) -> Result<u32, UvlError> {
        match self.next() {
            Some(Tok::Num(v)) if v.is_integer() => {
                u32::try_from(v.to_integer()).map_err(|_| self.error("bound too large"))
            }
            _ => {
                self.pos -= 1;
                Err(self.error("expected an integer"))
            }
        }
    }

    fn signed_number(&mut self) -> Result<BigRational, UvlError> {
        let neg = self.eat("-");
        match self.next() {
            Some(Tok::Num(v)) => Ok(if neg { -v } else { v }),
            _ => {
                self.pos -= 1;
                Err(self.error("expected a number"))
            }
        }
    }

    /// `[a..b]` or `[n]`, the opening bracket already consumed.
    fn bounds(&mut self) -> Result<(u32, u32), UvlError> {
        let a = self.uint()?;
        let b = if self.eat("..") { self.uint()? } else { a };
        self.expect("]")?;
        Ok((a, b))
    }
}

struct Parser<'a> {
    lines: Vec<Line<'a>>,
    pos: usize,
    map: LineMap,
}

fn parse_with_lines(text: &str) -> Result<(FeatureModel, LineMap), UvlError> {
    let mut p = Parser { lines: split_lines(text)?, pos: 0, map: LineMap::default() };
    let first = p.lines.first().ok_or(UvlError {
        line: 1,
        col: 1,
        kind: UvlErrorKind::Syntax("empty model".into()),
    })?;
    if first.text != "features" || first.indent != 0 {
        return Err(p.syntax_at(0, "expected `features`"));
    }
    p.pos = 1;
    let root_indent = match p.lines.get(1) {
        Some(l) if l.indent > 0 => l.indent,
        _ => return Err(p.syntax_at(p.pos.min(p.lines.len() - 1), "expected an indented root feature")),
    };
    let root = p.feature(root_indent)?;
    if let Some(l) = p.lines.get(p.pos) {
        if l.indent == root_indent {
            return Err(p.syntax_at(p.pos, "only one root feature is allowed"));
        }
    }
    let mut constraints = Vec::new();
    if p.pos < p.lines.len() {
        let l = &p.lines[p.pos];
        if l.indent != 0 || l.text != "constraints" {
            return Err(p.syntax_at(p.pos, "expected `constraints`"));
        }
        p.pos += 1;
        let mut indent = None;
        while p.pos < p.lines.len() {
            let l = &p.lines[p.pos];
            match indent {
                None if l.indent > 0 => indent = Some(l.indent),
                Some(i) if i == l.indent => {}
                _ => return Err(UvlError { line: l.lineno, col: 1, kind: UvlErrorKind::Indentation }),
            }
            let mut cur = Cursor::new(l)?;
            let node = expr_node(&mut cur, 0)?;
            cur.expect_end()?;
            let expr = to_expr(node).map_err(|m| UvlError { line: l.lineno, col: l.offset + 1, kind: UvlErrorKind::Syntax(m) })?;
            p.map.constraints.push(l.lineno);
            constraints.push(expr);
            p.pos += 1;
        }
    }
    Ok((FeatureModel { root, constraints }, p.map))
}

impl<'a> Parser<'a> {
    fn syntax_at(&self, idx: usize, msg: &str) -> UvlError {
        let l = &self.lines[idx];
        UvlError { line: l.lineno, col: l.offset + 1, kind: UvlErrorKind::Syntax(msg.into()) }
    }

    fn feature(&mut self, indent: usize) -> Result<Feature, UvlError> {
        let line = &self.lines[self.pos];
        let mut cur = Cursor::new(line)?;
        let mut f = Feature::new(cur.name()?);
        if cur.peek() == Some(&Tok::Ident("cardinality".into())) {
            cur.next();
            cur.expect("[")?;
            f.cardinality = Some(cur.bounds()?);
        }
        if cur.eat("{")
            && !cur.eat("}") {
                loop {
                    let key = cur.name()?;
                    let mut value = cur.signed_number()?;
                    if cur.eat("/") {
                        let d = cur.signed_number()?;
                        if d.is_zero() {
                            return Err(cur.error("zero denominator"));
                        }
                        value /= d;
                    }
                    if f.attributes.insert(key.clone(), value).is_some() {
                        return Err(cur.error(format!("duplicate attribute `{key}`")));
                    }
                    if cur.eat("}") {
                        break;
                    }
                    cur.expect(",")?;
                }
            }
        cur.expect_end()?;
        self.map.features.entry(f.name.clone()).or_insert(line.lineno);
        self.pos += 1;

        let group_indent = match self.lines.get(self.pos) {
            Some(l) if l.indent > indent => l.indent,
            _ => return Ok(f),
        };
        while let Some(l) = self.lines.get(self.pos) {
            if l.indent <= indent {
                break;
            }
            if l.indent != group_indent {
                return Err(UvlError { line: l.lineno, col: 1, kind: UvlErrorKind::Indentation });
            }
            f.groups.push(self.group(group_indent)?);
        }
        Ok(f)
    }

    fn group(&mut self, indent: usize) -> Result<Group, UvlError> {
        let line = &self.lines[self.pos];
        let mut cur = Cursor::new(line)?;
        let kind = match cur.next() {
            Some(Tok::Ident(k)) => match k.as_str() {
                "optional" => GroupKind::Optional,
                "mandatory" => GroupKind::Mandatory,
                "or" => GroupKind::Or,
                "alternative" => GroupKind::Alternative,
                "cardinality" => {
                    cur.expect("[")?;
                    let (a, b) = cur.bounds()?;
                    GroupKind::Card(a, b)
                }
                _ => {
                    cur.pos -= 1;
                    return Err(cur.error("expected a group keyword"));
                }
            },
            Some(Tok::Sym("[")) => {
                let (a, b) = cur.bounds()?;
                GroupKind::Card(a, b)
            }
            _ => {
                cur.pos -= 1;
                return Err(cur.error("expected a group keyword"));
            }
        };
        cur.expect_end()?;
        self.pos += 1;
        let mut children = Vec::new();
        let child_indent = match self.lines.get(self.pos) {
            Some(l) if l.indent > indent => l.indent,
            _ => return Err(self.syntax_at(self.pos - 1, "group without children")),
        };
        while let Some(l) = self.lines.get(self.pos) {
            if l.indent <= indent {
                break;
            }
            if l.indent != child_indent {
                return Err(UvlError { line: l.lineno, col: 1, kind: UvlErrorKind::Indentation });
            }
            children.push(self.feature(child_indent)?);
        }
        Ok(Group { kind, children })
    }
}

/// Untyped expression tree; typed into [`Expr`] / [`Term`] afterwards.
#[derive(Debug)]
enum Node {
    Name(String),
    Attr(String, String),
    Num(BigRational),
    Agg(bool, String),
    Not(Box<Node>),
    Neg(Box<Node>),
    Bin(&'static str, Box<Node>, Box<Node>),
}

fn binding_power(sym: &str) -> Option<(u8, u8)> {
    Some(match sym {
        "<=>" => (1, 2),
        "=>" => (4, 3),
        "|" => (5, 6),
        "&" => (7, 8),
        "==" | "=" | "!=" | ">=" | "<=" | ">" | "<" => (9, 10),
        "+" | "-" => (11, 12),
        "*" | "/" => (13, 14),
        _ => return None,
    })
}

fn expr_node(cur: &mut Cursor<'_, '_>, min_bp: u8) -> Result<Node, UvlError> {
    let mut lhs = match cur.next() {
        Some(Tok::Sym("!")) => Node::Not(Box::new(expr_node(cur, 15)?)),
        Some(Tok::Sym("-")) => Node::Neg(Box::new(expr_node(cur, 15)?)),
        Some(Tok::Sym("(")) => {
            let inner = expr_node(cur, 0)?;
            cur.expect(")")?;
            inner
        }
        Some(Tok::Num(v)) => Node::Num(v),
        Some(Tok::Ident(f)) if (f == "sum" || f == "avg") && cur.peek() == Some(&Tok::Sym("(")) => {
            cur.next();
            let attr = cur.name()?;
            cur.expect(")")?;
            Node::Agg(f == "sum", attr)
        }
        Some(Tok::Ident(n)) if !is_keyword(&n) => name_or_attr(cur, n)?,
        Some(Tok::Quoted(n)) => name_or_attr(cur, n)?,
        _ => {
            cur.pos -= 1;
            return Err(cur.error("expected an expression"));
        }
    };
    loop {
        let sym = match cur.peek() {
            Some(Tok::Sym(s)) => *s,
            _ => break,
        };
        let Some((l_bp, r_bp)) = binding_power(sym) else { break };
        if l_bp < min_bp {
            break;
        }
        cur.next();
        let rhs = expr_node(cur, r_bp)?;
        if matches!(sym, "==" | "=" | "!=" | ">=" | "<=" | ">" | "<") {
            if let Some(Tok::Sym(next)) = cur.peek() {
                if binding_power(next).is_some_and(|(l, _)| l == 9) {
                    return Err(cur.error("comparisons cannot be chained"));
                }
            }
        }
        lhs = Node::Bin(sym, Box::new(lhs), Box::new(rhs));
    }
    Ok(lhs)
}

fn name_or_attr(cur: &mut Cursor<'_, '_>, name: String) -> Result<Node, UvlError> {
    if cur.eat(".") {
        let attr = cur.name()?;
        Ok(Node::Attr(name, attr))
    } else {
        Ok(Node::Name(name))
    }
}

fn to_expr(node: Node) -> Result<Expr, String> {
    Ok(match node {
        Node::Name(n) => Expr::Feature(n),
        Node::Not(a) => Expr::not(to_expr(*a)?),
        Node::Bin(op, a, b) => match op {
            "&" => Expr::and(to_expr(*a)?, to_expr(*b)?),
            "|" => Expr::or(to_expr(*a)?, to_expr(*b)?),
            "=>" => Expr::implies(to_expr(*a)?, to_expr(*b)?),
            "<=>" => Expr::iff(to_expr(*a)?, to_expr(*b)?),
            cmp => {
                let rel = match cmp {
                    "==" | "=" => Relation::Eq,
                    "!=" => Relation::Ne,
                    ">=" => Relation::Ge,
                    "<=" => Relation::Le,
                    ">" => Relation::Gt,
                    "<" => Relation::Lt,
                    _ => return Err(format!("arithmetic `{cmp}` used as a boolean constraint")),
                };
                Expr::Cmp(rel, to_term(*a)?, to_term(*b)?)
            }
        },
        other => return Err(format!("{} used as a boolean constraint", describe(&other))),
    })
}

fn to_term(node: Node) -> Result<Term, String> {
    Ok(match node {
        Node::Num(v) => Term::Const(v),
        Node::Attr(f, a) => Term::Attr(f, a),
        Node::Agg(true, a) => Term::Sum(a),
        Node::Agg(false, a) => Term::Avg(a),
        Node::Neg(inner) => match *inner {
            Node::Num(v) => Term::Const(-v),
            other => Term::sub(Term::Const(BigRational::zero()), to_term(other)?),
        },
        Node::Bin(op, a, b) => {
            let (a, b) = (to_term(*a)?, to_term(*b)?);
            match op {
                "+" => Term::add(a, b),
                "-" => Term::sub(a, b),
                "*" => Term::mul(a, b),
                "/" => match (a, b) {
                    (Term::Const(n), Term::Const(d)) if !d.is_zero() => Term::Const(n / d),
                    (a, b) => Term::div(a, b),
                },
                _ => return Err(format!("boolean `{op}` used inside an arithmetic term")),
            }
        }
        other => return Err(format!("{} used inside an arithmetic term", describe(&other))),
    })
}

fn describe(node: &Node) -> String {
    match node {
        Node::Name(n) => format!("feature `{n}`"),
        Node::Attr(..) | Node::Num(_) | Node::Agg(..) | Node::Neg(_) => "arithmetic term".into(),
        Node::Not(_) => "negation".into(),
        Node::Bin(op, ..) => format!("`{op}` expression"),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures;

    #[test]
    fn basic_robot() {
        let m = parse_uvl(fixtures::ROBOT_BASIC).unwrap();
        assert_eq!(m.feature_count(), 11);
        assert_eq!(m.constraints.len(), 2);
        assert_eq!(
            m.constraints[0],
            Expr::implies(Expr::or(Expr::feature("AI"), Expr::feature("Maps")), Expr::feature("Camera"))
        );
    }

    #[test]
    fn expressive_robot() {
        let m = parse_uvl(fixtures::ROBOT_EXPRESSIVE).unwrap();
        let od = m.feature("Obstacle Detection").unwrap();
        assert_eq!(od.groups[0].kind, GroupKind::Card(1, 2));
        let es = m.feature("Extra Storage").unwrap();
        assert_eq!(es.cardinality, Some((1, 3)));
        let dust = m.feature("Dust storage").unwrap();
        assert_eq!(dust.attributes.len(), 2);
        assert_eq!(m.constraints.len(), 4);
        assert!(matches!(m.constraints[2], Expr::Cmp(Relation::Lt, Term::Sum(_), _)));
        assert!(matches!(m.constraints[3], Expr::Cmp(Relation::Le, Term::Add(..), _)));
    }

    #[test]
    fn root_only() {
        let m = parse_uvl("features\n    Root\n").unwrap();
        assert_eq!(m.feature_count(), 1);
        assert!(m.constraints.is_empty());
    }

    #[test]
    fn decimals_and_negatives() {
        let m = parse_uvl("features\n  r {w -1.25, v 3}\n").unwrap();
        assert_eq!(m.root.attributes["w"], BigRational::new((-125).into(), 100.into()));
        assert_eq!(m.root.attributes["v"], BigRational::from_integer(3.into()));
    }

    #[test]
    fn precedence() {
        let m = parse_uvl("features\n  a\n    optional\n      b\n      c\nconstraints\n  a | b & !c => c <=> a\n").unwrap();
        let b_and_not_c = Expr::and(Expr::feature("b"), Expr::not(Expr::feature("c")));
        let expected = Expr::iff(
            Expr::implies(Expr::or(Expr::feature("a"), b_and_not_c), Expr::feature("c")),
            Expr::feature("a"),
        );
        assert_eq!(m.constraints[0], expected);
    }

    #[test]
    fn errors_carry_locations() {
        let e = parse_uvl("features\n  r\n    optional\n      a\nconstraints\n  a => Zamera\n").unwrap_err();
        assert_eq!(e.line, 6);
        assert!(matches!(e.kind, UvlErrorKind::Invalid(ref d) if d.code == super::super::DiagCode::UnknownFeature));

        let e = parse_uvl("features\n  r\n    optional\n      a\n      a\n").unwrap_err();
        assert!(matches!(e.kind, UvlErrorKind::Invalid(ref d) if d.code == super::super::DiagCode::DuplicateFeature));

        let e = parse_uvl("features\n  r\n    [3..2]\n      a\n      b\n      c\n").unwrap_err();
        assert_eq!(e.line, 2);
        assert!(matches!(e.kind, UvlErrorKind::Invalid(ref d) if d.code == super::super::DiagCode::BoundsInverted));

        let e = parse_uvl("features\n  r\n    optional\n      a $\n").unwrap_err();
        assert_eq!((e.line, e.col), (4, 9));

        let e = parse_uvl("features\n  r\n    optional\n\ta\n").unwrap_err();
        assert_eq!(e.kind, UvlErrorKind::Indentation);

        let e = parse_uvl("features\n  r\n    optional\n      a\n     b\n").unwrap_err();
        assert_eq!(e.kind, UvlErrorKind::Indentation);

        let e = parse_uvl("features\n  r {c 1}\nconstraints\n  r.c + r\n").unwrap_err();
        assert!(matches!(e.kind, UvlErrorKind::Syntax(_)));

        let e = parse_uvl("features\n  r {c 1}\nconstraints\n  r.c < 1 < 2\n").unwrap_err();
        assert!(matches!(e.kind, UvlErrorKind::Syntax(_)));
    }
}
