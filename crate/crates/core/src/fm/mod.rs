//! Feature models: a UVL-like indentation-based input language covering group
//! types, group and feature cardinalities, attributes and attribute constraints.

mod parse;
mod print;

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use num_rational::BigRational;

use crate::pb::Relation;

pub use parse::{parse_uvl, parse_uvl_unchecked, UvlError, UvlErrorKind};
pub use print::quote_name;

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct FeatureModel {
    pub root: Feature,
    pub constraints: Vec<Expr>,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Feature {
    pub name: String,
    pub groups: Vec<Group>,
    /// Feature cardinality `[lower..upper]`.
    pub cardinality: Option<(u32, u32)>,
    pub attributes: BTreeMap<String, BigRational>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum GroupKind {
    Optional,
    Mandatory,
    Or,
    Alternative,
    Card(u32, u32),
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Group {
    pub kind: GroupKind,
    pub children: Vec<Feature>,
}

/// Boolean cross-tree expression.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Expr {
    Feature(String),
    Not(Box<Expr>),
    And(Box<Expr>, Box<Expr>),
    Or(Box<Expr>, Box<Expr>),
    Implies(Box<Expr>, Box<Expr>),
    Iff(Box<Expr>, Box<Expr>),
    Cmp(Relation, Term, Term),
}

/// Arithmetic term over attribute values.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Term {
    Const(BigRational),
    /// `feature.attribute`: the value if the feature is selected, else zero.
    Attr(String, String),
    Sum(String),
    Avg(String),
    Add(Box<Term>, Box<Term>),
    Sub(Box<Term>, Box<Term>),
    Mul(Box<Term>, Box<Term>),
    Div(Box<Term>, Box<Term>),
}

impl Feature {
    pub fn new(name: impl Into<String>) -> Feature {
        Feature { name: name.into(), groups: Vec::new(), cardinality: None, attributes: BTreeMap::new() }
    }

    pub fn with_group(mut self, kind: GroupKind, children: Vec<Feature>) -> Feature {
        self.groups.push(Group { kind, children });
        self
    }

    pub fn with_attr(mut self, name: &str, value: BigRational) -> Feature {
        self.attributes.insert(name.to_string(), value);
        self
    }

    pub fn with_cardinality(mut self, lower: u32, upper: u32) -> Feature {
        self.cardinality = Some((lower, upper));
        self
    }

    /// Pre-order traversal of this feature and its descendants.
    pub fn preorder(&self) -> Vec<&Feature> {
        let mut out = Vec::new();
        let mut stack = vec![self];
        while let Some(f) = stack.pop() {
            out.push(f);
            for g in f.groups.iter().rev() {
                for c in g.children.iter().rev() {
                    stack.push(c);
                }
            }
        }
        out
    }
}

impl FeatureModel {
    pub fn new(root: Feature) -> FeatureModel {
        FeatureModel { root, constraints: Vec::new() }
    }

    pub fn features(&self) -> Vec<&Feature> {
        self.root.preorder()
    }

    pub fn feature(&self, name: &str) -> Option<&Feature> {
        self.features().into_iter().find(|f| f.name == name)
    }

    pub fn feature_count(&self) -> usize {
        self.features().len()
    }
}

#[allow(clippy::should_implement_trait)]
impl Expr {
    pub fn feature(name: &str) -> Expr {
        Expr::Feature(name.to_string())
    }

    pub fn not(e: Expr) -> Expr {
        Expr::Not(Box::new(e))
    }

    pub fn and(a: Expr, b: Expr) -> Expr {
        Expr::And(Box::new(a), Box::new(b))
    }

    pub fn or(a: Expr, b: Expr) -> Expr {
        Expr::Or(Box::new(a), Box::new(b))
    }

    pub fn implies(a: Expr, b: Expr) -> Expr {
        Expr::Implies(Box::new(a), Box::new(b))
    }

    pub fn iff(a: Expr, b: Expr) -> Expr {
        Expr::Iff(Box::new(a), Box::new(b))
    }

    /// True when no comparison occurs in the expression.
    pub fn is_propositional(&self) -> bool {
        match self {
            Expr::Feature(_) => true,
            Expr::Not(a) => a.is_propositional(),
            Expr::And(a, b) | Expr::Or(a, b) | Expr::Implies(a, b) | Expr::Iff(a, b) => {
                a.is_propositional() && b.is_propositional()
            }
            Expr::Cmp(..) => false,
        }
    }

    pub fn leaf_count(&self) -> usize {
        match self {
            Expr::Feature(_) | Expr::Cmp(..) => 1,
            Expr::Not(a) => a.leaf_count(),
            Expr::And(a, b) | Expr::Or(a, b) | Expr::Implies(a, b) | Expr::Iff(a, b) => {
                a.leaf_count() + b.leaf_count()
            }
        }
    }

    fn visit<'a>(&'a self, feats: &mut Vec<&'a str>, terms: &mut Vec<&'a Term>) {
        match self {
            Expr::Feature(n) => feats.push(n),
            Expr::Not(a) => a.visit(feats, terms),
            Expr::And(a, b) | Expr::Or(a, b) | Expr::Implies(a, b) | Expr::Iff(a, b) => {
                a.visit(feats, terms);
                b.visit(feats, terms);
            }
            Expr::Cmp(_, l, r) => {
                terms.push(l);
                terms.push(r);
            }
        }
    }
}

#[allow(clippy::should_implement_trait)]
impl Term {
    pub fn constant(v: BigRational) -> Term {
        Term::Const(v)
    }

    pub fn attr(feature: &str, attr: &str) -> Term {
        Term::Attr(feature.to_string(), attr.to_string())
    }

    pub fn add(a: Term, b: Term) -> Term {
        Term::Add(Box::new(a), Box::new(b))
    }

    pub fn sub(a: Term, b: Term) -> Term {
        Term::Sub(Box::new(a), Box::new(b))
    }

    pub fn mul(a: Term, b: Term) -> Term {
        Term::Mul(Box::new(a), Box::new(b))
    }

    pub fn div(a: Term, b: Term) -> Term {
        Term::Div(Box::new(a), Box::new(b))
    }

    fn leaves<'a>(&'a self, out: &mut Vec<&'a Term>) {
        match self {
            Term::Add(a, b) | Term::Sub(a, b) | Term::Mul(a, b) | Term::Div(a, b) => {
                a.leaves(out);
                b.leaves(out);
            }
            leaf => out.push(leaf),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum DiagCode {
    DuplicateFeature,
    EmptyGroup,
    BoundsInverted,
    BoundExceedsChildren,
    ZeroUpperBound,
    RootCardinality,
    UnknownFeature,
    UnknownAttribute,
    EmptyAggregate,
}

impl DiagCode {
    pub fn as_str(self) -> &'static str {
        match self {
            DiagCode::DuplicateFeature => "duplicate feature",
            DiagCode::EmptyGroup => "empty group",
            DiagCode::BoundsInverted => "bounds inverted",
            DiagCode::BoundExceedsChildren => "bound exceeds children",
            DiagCode::ZeroUpperBound => "zero upper bound",
            DiagCode::RootCardinality => "root cardinality",
            DiagCode::UnknownFeature => "unknown feature",
            DiagCode::UnknownAttribute => "unknown attribute",
            DiagCode::EmptyAggregate => "empty aggregate",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Location {
    Feature(String),
    Group { feature: String, index: usize },
    Constraint(usize),
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Diagnostic {
    pub code: DiagCode,
    pub location: Location,
    pub message: String,
}

impl fmt::Display for Diagnostic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let at = match &self.location {
            Location::Feature(n) => format!("feature {}", quote_name(n)),
            Location::Group { feature, index } => format!("group {} of {}", index + 1, quote_name(feature)),
            Location::Constraint(i) => format!("constraint {}", i + 1),
        };
        write!(f, "{} at {}: {}", self.code.as_str(), at, self.message)
    }
}

/// Checks every structural and referential invariant of the model.
pub fn validate(m: &FeatureModel) -> Vec<Diagnostic> {
    let mut out = Vec::new();
    let mut seen = BTreeSet::new();
    let mut carriers: BTreeMap<&str, usize> = BTreeMap::new();
    let feature_diag = |code, name: &str, message: String| Diagnostic {
        code,
        location: Location::Feature(name.to_string()),
        message,
    };
    if m.root.cardinality.is_some() {
        out.push(feature_diag(DiagCode::RootCardinality, &m.root.name, "the root cannot carry a feature cardinality".into()));
    }
    for f in m.features() {
        if !seen.insert(f.name.as_str()) {
            out.push(feature_diag(DiagCode::DuplicateFeature, &f.name, "feature name used twice".into()));
        }
        for a in f.attributes.keys() {
            *carriers.entry(a.as_str()).or_default() += 1;
        }
        if let Some((a, b)) = f.cardinality {
            if a > b {
                out.push(feature_diag(DiagCode::BoundsInverted, &f.name, format!("cardinality [{a}..{b}]")));
            }
            if b == 0 {
                out.push(feature_diag(DiagCode::ZeroUpperBound, &f.name, "cardinality upper bound is 0".into()));
            }
        }
        for (index, g) in f.groups.iter().enumerate() {
            let loc = || Location::Group { feature: f.name.clone(), index };
            if g.children.is_empty() {
                out.push(Diagnostic { code: DiagCode::EmptyGroup, location: loc(), message: "group has no children".into() });
            }
            if let GroupKind::Card(a, b) = g.kind {
                if a > b {
                    out.push(Diagnostic { code: DiagCode::BoundsInverted, location: loc(), message: format!("group cardinality [{a}..{b}]") });
                } else if b as usize > g.children.len() {
                    out.push(Diagnostic {
                        code: DiagCode::BoundExceedsChildren,
                        location: loc(),
                        message: format!("upper bound {b} exceeds {} children", g.children.len()),
                    });
                }
            }
        }
    }
    let by_name: BTreeMap<&str, &Feature> = m.features().into_iter().map(|f| (f.name.as_str(), f)).collect();
    for (i, c) in m.constraints.iter().enumerate() {
        let diag = |code, message: String| Diagnostic { code, location: Location::Constraint(i), message };
        let mut feats = Vec::new();
        let mut terms = Vec::new();
        c.visit(&mut feats, &mut terms);
        for name in feats {
            if !by_name.contains_key(name) {
                out.push(diag(DiagCode::UnknownFeature, format!("no feature named {}", quote_name(name))));
            }
        }
        let mut leaves = Vec::new();
        for t in terms {
            t.leaves(&mut leaves);
        }
        for leaf in leaves {
            match leaf {
                Term::Attr(feature, attr) => match by_name.get(feature.as_str()) {
                    None => out.push(diag(DiagCode::UnknownFeature, format!("no feature named {}", quote_name(feature)))),
                    Some(f) if !f.attributes.contains_key(attr) => out.push(diag(
                        DiagCode::UnknownAttribute,
                        format!("{} has no attribute {}", quote_name(feature), quote_name(attr)),
                    )),
                    Some(_) => {}
                },
                Term::Avg(attr) if !carriers.contains_key(attr.as_str()) => {
                    out.push(diag(DiagCode::EmptyAggregate, format!("no feature carries {}", quote_name(attr))));
                }
                _ => {}
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use num_bigint::BigInt;

    fn int(v: i64) -> BigRational {
        BigRational::from_integer(BigInt::from(v))
    }

    #[test]
    fn inverted_group_bounds() {
        let mut root = Feature::new("r");
        root.groups.push(Group {
            kind: GroupKind::Card(3, 2),
            children: vec![Feature::new("a"), Feature::new("b"), Feature::new("c")],
        });
        let diags = validate(&FeatureModel::new(root));
        assert_eq!(diags.len(), 1);
        assert_eq!(diags[0].code, DiagCode::BoundsInverted);
        assert_eq!(diags[0].location, Location::Group { feature: "r".into(), index: 0 });
    }

    #[test]
    fn dangling_reference() {
        let root = Feature::new("Robot").with_group(GroupKind::Optional, vec![Feature::new("Camera")]);
        let mut m = FeatureModel::new(root);
        m.constraints.push(Expr::implies(Expr::feature("Robot"), Expr::feature("Zamera")));
        let diags = validate(&m);
        assert_eq!(diags.len(), 1);
        assert_eq!(diags[0].code, DiagCode::UnknownFeature);
        assert_eq!(diags[0].location, Location::Constraint(0));
    }

    #[test]
    fn attribute_checks() {
        let root = Feature::new("r").with_group(GroupKind::Optional, vec![Feature::new("a").with_attr("cost", int(2))]);
        let mut m = FeatureModel::new(root);
        m.constraints.push(Expr::Cmp(Relation::Ge, Term::attr("a", "weight"), Term::Const(int(1))));
        m.constraints.push(Expr::Cmp(Relation::Ge, Term::Avg("weight".into()), Term::Const(int(1))));
        m.constraints.push(Expr::Cmp(Relation::Ge, Term::Sum("cost".into()), Term::Const(int(1))));
        let codes: Vec<_> = validate(&m).into_iter().map(|d| d.code).collect();
        assert_eq!(codes, vec![DiagCode::UnknownAttribute, DiagCode::EmptyAggregate]);
    }

    #[test]
    fn structural_checks() {
        let root = Feature::new("r")
            .with_cardinality(1, 2)
            .with_group(GroupKind::Or, vec![])
            .with_group(GroupKind::Card(1, 3), vec![Feature::new("a").with_cardinality(0, 0), Feature::new("a")]);
        let codes: Vec<_> = validate(&FeatureModel::new(root)).into_iter().map(|d| d.code).collect();
        assert_eq!(
            codes,
            vec![
                DiagCode::RootCardinality,
                DiagCode::EmptyGroup,
                DiagCode::BoundExceedsChildren,
                DiagCode::ZeroUpperBound,
                DiagCode::DuplicateFeature,
            ]
        );
    }

    #[test]
    fn single_root_is_valid() {
        let m = FeatureModel::new(Feature::new("root"));
        assert!(validate(&m).is_empty());
        assert_eq!(m.feature_count(), 1);
    }
}
