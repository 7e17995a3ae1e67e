use std::fmt::{self, Write as _};

use num_bigint::BigInt;
use num_integer::Integer;
use num_rational::BigRational;
use num_traits::{One, Signed, Zero};

use super::parse::is_keyword;
use super::{Expr, Feature, FeatureModel, GroupKind, Term};
use crate::pb::Relation;

/// Returns `name` as written in model text, quoting when it is not a plain identifier.
pub fn quote_name(name: &str) -> String {
    let plain = name.chars().next().is_some_and(|c| c.is_ascii_alphabetic() || c == '_')
        && name.chars().all(|c| c.is_ascii_alphanumeric() || c == '_')
        && !is_keyword(name);
    if plain {
        name.to_string()
    } else {
        format!("\"{name}\"")
    }
}

/// Decimal rendering when the denominator allows it, `n/d` otherwise.
pub(super) fn number(v: &BigRational) -> String {
    let mut d = v.denom().clone();
    let two = BigInt::from(2);
    let five = BigInt::from(5);
    let mut twos = 0u32;
    let mut fives = 0u32;
    while d.is_even() {
        d /= &two;
        twos += 1;
    }
    while (&d % &five).is_zero() {
        d /= &five;
        fives += 1;
    }
    if !d.is_one() {
        return format!("{}/{}", v.numer(), v.denom());
    }
    let places = twos.max(fives);
    if places == 0 {
        return v.numer().to_string();
    }
    let scaled = (v * BigRational::from_integer(BigInt::from(10).pow(places))).to_integer();
    let digits = scaled.abs().to_string();
    let digits = format!("{:0>width$}", digits, width = places as usize + 1);
    let (int, frac) = digits.split_at(digits.len() - places as usize);
    let sign = if scaled.is_negative() { "-" } else { "" };
    format!("{sign}{int}.{frac}")
}

fn write_feature(out: &mut String, f: &Feature, depth: usize) {
    let pad = "    ".repeat(depth);
    let _ = write!(out, "{pad}{}", quote_name(&f.name));
    if let Some((a, b)) = f.cardinality {
        let _ = write!(out, " cardinality [{a}..{b}]");
    }
    if !f.attributes.is_empty() {
        let attrs: Vec<String> = f.attributes.iter().map(|(k, v)| format!("{} {}", quote_name(k), number(v))).collect();
        let _ = write!(out, " {{{}}}", attrs.join(", "));
    }
    out.push('\n');
    for g in &f.groups {
        let kw = match g.kind {
            GroupKind::Optional => "optional".to_string(),
            GroupKind::Mandatory => "mandatory".to_string(),
            GroupKind::Or => "or".to_string(),
            GroupKind::Alternative => "alternative".to_string(),
            GroupKind::Card(a, b) => format!("[{a}..{b}]"),
        };
        let _ = writeln!(out, "{pad}    {kw}");
        for c in &g.children {
            write_feature(out, c, depth + 2);
        }
    }
}

impl fmt::Display for FeatureModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut out = String::from("features\n");
        write_feature(&mut out, &self.root, 1);
        if !self.constraints.is_empty() {
            out.push_str("constraints\n");
            for c in &self.constraints {
                let _ = writeln!(out, "    {c}");
            }
        }
        f.write_str(&out)
    }
}

fn relation_token(r: Relation) -> &'static str {
    match r {
        Relation::Ge => ">=",
        Relation::Le => "<=",
        Relation::Gt => ">",
        Relation::Lt => "<",
        Relation::Eq => "==",
        Relation::Ne => "!=",
    }
}

struct Nested<'a, T>(&'a T);

impl fmt::Display for Nested<'_, Expr> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.0 {
            Expr::Feature(_) | Expr::Not(_) => write!(f, "{}", self.0),
            other => write!(f, "({other})"),
        }
    }
}

impl fmt::Display for Nested<'_, Term> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.0 {
            Term::Add(..) | Term::Sub(..) | Term::Mul(..) | Term::Div(..) => write!(f, "({})", self.0),
            Term::Const(v) if v.is_negative() || !v.is_integer() => write!(f, "({})", self.0),
            other => write!(f, "{other}"),
        }
    }
}

impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Expr::Feature(n) => f.write_str(&quote_name(n)),
            Expr::Not(a) => write!(f, "!{}", Nested(a.as_ref())),
            Expr::And(a, b) => write!(f, "{} & {}", Nested(a.as_ref()), Nested(b.as_ref())),
            Expr::Or(a, b) => write!(f, "{} | {}", Nested(a.as_ref()), Nested(b.as_ref())),
            Expr::Implies(a, b) => write!(f, "{} => {}", Nested(a.as_ref()), Nested(b.as_ref())),
            Expr::Iff(a, b) => write!(f, "{} <=> {}", Nested(a.as_ref()), Nested(b.as_ref())),
            Expr::Cmp(r, a, b) => write!(f, "{} {} {}", Nested(a), relation_token(*r), Nested(b)),
        }
    }
}

impl fmt::Display for Term {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Term::Const(v) if v.is_integer() => f.write_str(&number(v)),
            Term::Const(v) => {
                let s = number(v);
                match s.split_once('/') {
                    Some((n, d)) => write!(f, "{n} / {d}"),
                    None => f.write_str(&s),
                }
            }
            Term::Attr(n, a) => write!(f, "{}.{}", quote_name(n), quote_name(a)),
            Term::Sum(a) => write!(f, "sum({})", quote_name(a)),
            Term::Avg(a) => write!(f, "avg({})", quote_name(a)),
            Term::Add(a, b) => write!(f, "{} + {}", Nested(a.as_ref()), Nested(b.as_ref())),
            Term::Sub(a, b) => write!(f, "{} - {}", Nested(a.as_ref()), Nested(b.as_ref())),
            Term::Mul(a, b) => write!(f, "{} * {}", Nested(a.as_ref()), Nested(b.as_ref())),
            Term::Div(a, b) => write!(f, "{} / {}", Nested(a.as_ref()), Nested(b.as_ref())),
        }
    }
}
