//! Pseudo-Boolean constraints over Boolean literals.
//!
//! Constraints enter as [`RawConstraint`]s (rational coefficients, any of the six
//! comparison operators) and are normalized into [`NormConstraint`]s: positive
//! integer coefficients over literals with either `>=` or `!=`.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::ops::Not;

use num_bigint::BigInt;
use num_integer::Integer;
use num_rational::BigRational;
use num_traits::{One, Signed, Zero};
use serde::Serialize;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum PbError {
    #[error("variable x{var} exceeds the declared variable count {num_vars}")]
    VarOutOfRange { var: u32, num_vars: u32 },
    #[error("variable x{0} is unassigned")]
    Unassigned(u32),
    #[error("duplicate variable name `{0}`")]
    DuplicateName(String),
}

/// A Boolean variable, 1-based.
#[derive(Copy, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Debug)]
pub struct Var(u32);

#[allow(clippy::should_implement_trait)]
impl Var {
    /// Panics on index 0.
    pub fn new(index: u32) -> Var {
        assert!(index > 0, "variable indices are 1-based");
        Var(index)
    }

    pub fn index(self) -> u32 {
        self.0
    }

    pub fn pos(self) -> Lit {
        Lit { var: self, positive: true }
    }

    pub fn neg(self) -> Lit {
        Lit { var: self, positive: false }
    }

    pub fn lit(self, positive: bool) -> Lit {
        Lit { var: self, positive }
    }
}

impl fmt::Display for Var {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "x{}", self.0)
    }
}

#[derive(Copy, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Debug)]
pub struct Lit {
    var: Var,
    positive: bool,
}

impl Lit {
    pub fn new(var: Var, positive: bool) -> Lit {
        Lit { var, positive }
    }

    pub fn var(self) -> Var {
        self.var
    }

    pub fn is_positive(self) -> bool {
        self.positive
    }

    /// Signed DIMACS form: `3` for x3, `-3` for its negation.
    pub fn to_dimacs(self) -> i64 {
        let v = i64::from(self.var.0);
        if self.positive {
            v
        } else {
            -v
        }
    }

    pub fn from_dimacs(value: i64) -> Option<Lit> {
        if value == 0 {
            return None;
        }
        let idx = u32::try_from(value.unsigned_abs()).ok()?;
        Some(Lit { var: Var(idx), positive: value > 0 })
    }

    /// Truth value of this literal when its variable takes `value`.
    pub fn eval(self, value: bool) -> bool {
        value == self.positive
    }
}

impl Not for Lit {
    type Output = Lit;
    fn not(self) -> Lit {
        Lit { var: self.var, positive: !self.positive }
    }
}

impl fmt::Display for Lit {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.positive {
            write!(f, "{}", self.var)
        } else {
            write!(f, "~{}", self.var)
        }
    }
}

#[derive(Copy, Clone, PartialEq, Eq, Hash, Debug)]
pub enum Relation {
    Ge,
    Le,
    Gt,
    Lt,
    Eq,
    Ne,
}

impl Relation {
    pub const ALL: [Relation; 6] = [
        Relation::Ge,
        Relation::Le,
        Relation::Gt,
        Relation::Lt,
        Relation::Eq,
        Relation::Ne,
    ];

    pub fn holds<T: Ord>(self, lhs: &T, rhs: &T) -> bool {
        match self {
            Relation::Ge => lhs >= rhs,
            Relation::Le => lhs <= rhs,
            Relation::Gt => lhs > rhs,
            Relation::Lt => lhs < rhs,
            Relation::Eq => lhs == rhs,
            Relation::Ne => lhs != rhs,
        }
    }

    pub fn symbol(self) -> &'static str {
        match self {
            Relation::Ge => ">=",
            Relation::Le => "<=",
            Relation::Gt => ">",
            Relation::Lt => "<",
            Relation::Eq => "=",
            Relation::Ne => "!=",
        }
    }
}

#[derive(Copy, Clone, PartialEq, Eq, Hash, Debug)]
pub enum NormRelation {
    Ge,
    Ne,
}

/// Partial assignment of truth values to variables.
#[derive(Clone, PartialEq, Eq, Debug, Default)]
pub struct Assignment {
    values: Vec<Option<bool>>,
}

impl Assignment {
    pub fn new(num_vars: u32) -> Assignment {
        Assignment { values: vec![None; num_vars as usize] }
    }

    /// Total assignment over `num_vars` variables; bit `i` holds variable `i + 1`.
    pub fn from_bits(num_vars: u32, bits: u64) -> Assignment {
        Assignment {
            values: (0..num_vars).map(|i| Some(bits >> i & 1 == 1)).collect(),
        }
    }

    pub fn from_bools(values: &[bool]) -> Assignment {
        Assignment { values: values.iter().map(|&b| Some(b)).collect() }
    }

    pub fn set(&mut self, var: Var, value: bool) {
        let idx = var.0 as usize - 1;
        if idx >= self.values.len() {
            self.values.resize(idx + 1, None);
        }
        self.values[idx] = Some(value);
    }

    pub fn get(&self, var: Var) -> Option<bool> {
        self.values.get(var.0 as usize - 1).copied().flatten()
    }

    pub fn lit_value(&self, lit: Lit) -> Option<bool> {
        self.get(lit.var).map(|v| lit.eval(v))
    }
}

/// A linear constraint before normalization.
#[derive(Clone, PartialEq, Eq, Debug)]
pub struct RawConstraint {
    pub terms: Vec<(BigRational, Lit)>,
    pub relation: Relation,
    pub degree: BigRational,
}

impl RawConstraint {
    pub fn new(terms: Vec<(BigRational, Lit)>, relation: Relation, degree: BigRational) -> Self {
        RawConstraint { terms, relation, degree }
    }

    /// Integer-coefficient convenience constructor.
    pub fn from_ints(terms: &[(i64, Lit)], relation: Relation, degree: i64) -> Self {
        RawConstraint {
            terms: terms.iter().map(|&(c, l)| (int_ratio(c), l)).collect(),
            relation,
            degree: int_ratio(degree),
        }
    }

    pub fn vars(&self) -> BTreeSet<Var> {
        self.terms.iter().map(|(_, l)| l.var).collect()
    }

    /// Evaluates the constraint directly on rationals.
    pub fn evaluate(&self, a: &Assignment) -> Result<bool, PbError> {
        let mut lhs = BigRational::zero();
        for (c, l) in &self.terms {
            match a.lit_value(*l) {
                Some(true) => lhs += c,
                Some(false) => {}
                None => return Err(PbError::Unassigned(l.var.0)),
            }
        }
        Ok(self.relation.holds(&lhs, &self.degree))
    }

    fn by_var(&self) -> (BTreeMap<Var, BigRational>, BigRational) {
        // a * ~x == a - a * x
        let mut coefs: BTreeMap<Var, BigRational> = BTreeMap::new();
        let mut constant = BigRational::zero();
        for (c, l) in &self.terms {
            let entry = coefs.entry(l.var).or_insert_with(BigRational::zero);
            if l.positive {
                *entry += c;
            } else {
                *entry -= c;
                constant += c;
            }
        }
        coefs.retain(|_, c| !c.is_zero());
        (coefs, constant)
    }

    /// Rewrites the constraint into `>=` / `!=` constraints with integer
    /// coefficients over positive literals: duplicates are merged, denominators
    /// cleared by their positive LCM and the comparison operator converted.
    /// Coefficients may still be negative.
    pub fn to_ge_form(&self) -> Vec<RawConstraint> {
        let (coefs, constant) = self.by_var();
        let rhs = &self.degree - constant;
        let mut scale = rhs.denom().clone();
        for c in coefs.values() {
            scale = scale.lcm(c.denom());
        }
        let scale = BigRational::from_integer(scale);
        let ints: Vec<(BigInt, Var)> = coefs
            .iter()
            .map(|(v, c)| ((c * &scale).to_integer(), *v))
            .collect();
        let b = (rhs * &scale).to_integer();

        let make = |negate: bool, relation: Relation, degree: BigInt| RawConstraint {
            terms: ints
                .iter()
                .map(|(c, v)| {
                    let c = if negate { -c.clone() } else { c.clone() };
                    (BigRational::from_integer(c), v.pos())
                })
                .collect(),
            relation,
            degree: BigRational::from_integer(degree),
        };
        let one = BigInt::one();
        match self.relation {
            Relation::Ge => vec![make(false, Relation::Ge, b)],
            Relation::Le => vec![make(true, Relation::Ge, -b)],
            Relation::Gt => vec![make(false, Relation::Ge, b + one)],
            Relation::Lt => vec![make(true, Relation::Ge, -b + one)],
            Relation::Eq => vec![make(true, Relation::Ge, -b.clone()), make(false, Relation::Ge, b)],
            Relation::Ne => vec![make(false, Relation::Ne, b)],
        }
    }
}

pub fn int_ratio(v: i64) -> BigRational {
    BigRational::from_integer(BigInt::from(v))
}

/// Normalized constraint: positive integer coefficients, pairwise distinct
/// variables, relation `>=` or `!=`.
#[derive(Clone, PartialEq, Eq, Debug)]
pub struct NormConstraint {
    terms: Vec<(BigInt, Lit)>,
    relation: NormRelation,
    degree: BigInt,
    origin: usize,
}

impl NormConstraint {
    pub fn terms(&self) -> &[(BigInt, Lit)] {
        &self.terms
    }

    pub fn relation(&self) -> NormRelation {
        self.relation
    }

    pub fn degree(&self) -> &BigInt {
        &self.degree
    }

    /// Index of the raw constraint this one was derived from.
    pub fn origin(&self) -> usize {
        self.origin
    }

    pub fn with_origin(mut self, origin: usize) -> Self {
        self.origin = origin;
        self
    }

    pub fn coefficient_sum(&self) -> BigInt {
        self.terms.iter().map(|(c, _)| c).sum()
    }

    pub fn max_var(&self) -> Option<Var> {
        self.terms.iter().map(|(_, l)| l.var).max()
    }

    pub fn evaluate(&self, a: &Assignment) -> Result<bool, PbError> {
        let mut sum = BigInt::zero();
        for (c, l) in &self.terms {
            match a.lit_value(*l) {
                Some(true) => sum += c,
                Some(false) => {}
                None => return Err(PbError::Unassigned(l.var.0)),
            }
        }
        Ok(match self.relation {
            NormRelation::Ge => sum >= self.degree,
            NormRelation::Ne => sum != self.degree,
        })
    }

    /// Builds a normalized constraint from positive coefficients over distinct
    /// variables, reducing by the coefficient gcd and deciding trivial cases.
    fn build(mut terms: Vec<(BigInt, Lit)>, relation: NormRelation, degree: BigInt) -> Normalized {
        terms.retain(|(c, _)| !c.is_zero());
        terms.sort_by_key(|(_, l)| *l);
        debug_assert!(terms.iter().all(|(c, _)| c.is_positive()));
        debug_assert!(terms.windows(2).all(|w| w[0].1.var != w[1].1.var));
        let total: BigInt = terms.iter().map(|(c, _)| c).sum();
        match relation {
            NormRelation::Ge => {
                if !degree.is_positive() {
                    return Normalized::Trivial(true);
                }
                if degree > total {
                    return Normalized::Trivial(false);
                }
                let g = terms.iter().fold(BigInt::zero(), |g, (c, _)| g.gcd(c));
                let degree = if g > BigInt::one() {
                    for (c, _) in terms.iter_mut() {
                        *c /= &g;
                    }
                    degree.div_ceil(&g)
                } else {
                    degree
                };
                Normalized::Constraints(vec![NormConstraint { terms, relation, degree, origin: 0 }])
            }
            NormRelation::Ne => {
                if degree.is_negative() || degree > total {
                    return Normalized::Trivial(true);
                }
                if terms.is_empty() {
                    return Normalized::Trivial(!degree.is_zero());
                }
                let g = terms.iter().fold(BigInt::zero(), |g, (c, _)| g.gcd(c));
                if !degree.is_multiple_of(&g) {
                    return Normalized::Trivial(true);
                }
                for (c, _) in terms.iter_mut() {
                    *c /= &g;
                }
                let degree = degree / &g;
                Normalized::Constraints(vec![NormConstraint { terms, relation, degree, origin: 0 }])
            }
        }
    }
}

impl fmt::Display for NormConstraint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, (c, l)) in self.terms.iter().enumerate() {
            if i > 0 {
                write!(f, " + ")?;
            }
            write!(f, "{c} {l}")?;
        }
        let op = match self.relation {
            NormRelation::Ge => ">=",
            NormRelation::Ne => "!=",
        };
        write!(f, " {op} {}", self.degree)
    }
}

/// Outcome of normalizing a constraint.
#[derive(Clone, PartialEq, Eq, Debug)]
pub enum Normalized {
    /// The constraint is constant: always satisfied (`true`) or never (`false`).
    Trivial(bool),
    Constraints(Vec<NormConstraint>),
}

impl Normalized {
    fn and(self, other: Normalized) -> Normalized {
        match (self, other) {
            (Normalized::Trivial(false), _) | (_, Normalized::Trivial(false)) => {
                Normalized::Trivial(false)
            }
            (Normalized::Trivial(true), x) | (x, Normalized::Trivial(true)) => x,
            (Normalized::Constraints(mut a), Normalized::Constraints(b)) => {
                a.extend(b);
                Normalized::Constraints(a)
            }
        }
    }

    pub fn into_constraints(self) -> Option<Vec<NormConstraint>> {
        match self {
            Normalized::Trivial(true) => Some(Vec::new()),
            Normalized::Trivial(false) => None,
            Normalized::Constraints(cs) => Some(cs),
        }
    }
}

/// Normalizes a raw constraint. The conjunction of the results has exactly the
/// models of `raw`.
pub fn normalize(raw: &RawConstraint) -> Normalized {
    raw.to_ge_form()
        .into_iter()
        .map(|ge| {
            let relation = match ge.relation {
                Relation::Ge => NormRelation::Ge,
                Relation::Ne => NormRelation::Ne,
                _ => unreachable!("to_ge_form only yields >= and !="),
            };
            let mut degree = ge.degree.to_integer();
            let terms = ge
                .terms
                .iter()
                .map(|(c, l)| {
                    let c = c.to_integer();
                    if c.is_negative() {
                        // c*x == c - c*~x, so |c|*~x with the degree raised by |c|
                        degree -= &c;
                        (-c, !*l)
                    } else {
                        (c, *l)
                    }
                })
                .collect();
            NormConstraint::build(terms, relation, degree)
        })
        .fold(Normalized::Trivial(true), Normalized::and)
}

/// Converts a clause into `sum l_i >= 1`.
pub fn clause_to_pb(clause: &[Lit]) -> Normalized {
    let mut lits: Vec<Lit> = clause.to_vec();
    lits.sort();
    lits.dedup();
    if lits.windows(2).any(|w| w[0].var == w[1].var) {
        return Normalized::Trivial(true);
    }
    let terms = lits.into_iter().map(|l| (BigInt::one(), l)).collect();
    NormConstraint::build(terms, NormRelation::Ge, BigInt::one())
}

#[derive(Clone, Copy, PartialEq, Eq, Debug, Default, Serialize)]
pub struct FormulaStats {
    pub vars: u32,
    pub constraints: usize,
    pub literals: usize,
    pub aux_vars: usize,
}

/// Constraint and literal-occurrence counts of raw constraints.
pub fn raw_stats(raws: &[RawConstraint]) -> (usize, usize) {
    (raws.len(), raws.iter().map(|r| r.terms.len()).sum())
}

/// A conjunction of normalized constraints.
#[derive(Clone, PartialEq, Eq, Debug, Default)]
pub struct PbFormula {
    num_vars: u32,
    names: BTreeMap<Var, String>,
    constraints: Vec<NormConstraint>,
    aux: BTreeSet<Var>,
    unsat: bool,
    raw_count: usize,
}

impl PbFormula {
    pub fn new(num_vars: u32) -> PbFormula {
        PbFormula { num_vars, ..Default::default() }
    }

    /// The canonical contradiction over `num_vars` variables.
    pub fn unsatisfiable(num_vars: u32) -> PbFormula {
        PbFormula { num_vars, unsat: true, ..Default::default() }
    }

    pub fn num_vars(&self) -> u32 {
        self.num_vars
    }

    pub fn constraints(&self) -> &[NormConstraint] {
        &self.constraints
    }

    /// True when some constraint normalized to a constant contradiction.
    pub fn is_unsat(&self) -> bool {
        self.unsat
    }

    pub fn aux_vars(&self) -> &BTreeSet<Var> {
        &self.aux
    }

    pub fn name(&self, var: Var) -> Option<&str> {
        self.names.get(&var).map(String::as_str)
    }

    pub fn names(&self) -> &BTreeMap<Var, String> {
        &self.names
    }

    pub fn vars(&self) -> impl Iterator<Item = Var> {
        (1..=self.num_vars).map(Var)
    }

    fn check_var(&self, var: Var) -> Result<(), PbError> {
        if var.0 > self.num_vars {
            return Err(PbError::VarOutOfRange { var: var.0, num_vars: self.num_vars });
        }
        Ok(())
    }

    pub fn set_name(&mut self, var: Var, name: impl Into<String>) -> Result<(), PbError> {
        self.check_var(var)?;
        let name = name.into();
        if self.names.iter().any(|(v, n)| *v != var && *n == name) {
            return Err(PbError::DuplicateName(name));
        }
        self.names.insert(var, name);
        Ok(())
    }

    pub fn mark_aux(&mut self, var: Var) -> Result<(), PbError> {
        self.check_var(var)?;
        self.aux.insert(var);
        Ok(())
    }

    /// Normalizes `raw` and conjoins the result. Trivially true parts are
    /// dropped; a contradiction turns the whole formula unsatisfiable.
    pub fn add_raw(&mut self, raw: &RawConstraint) -> Result<(), PbError> {
        for (_, l) in &raw.terms {
            self.check_var(l.var)?;
        }
        let origin = self.raw_count;
        self.raw_count += 1;
        self.push(normalize(raw), origin);
        Ok(())
    }

    pub fn add_clause(&mut self, clause: &[Lit]) -> Result<(), PbError> {
        for l in clause {
            self.check_var(l.var)?;
        }
        let origin = self.raw_count;
        self.raw_count += 1;
        self.push(clause_to_pb(clause), origin);
        Ok(())
    }

    fn push(&mut self, n: Normalized, origin: usize) {
        match n.into_constraints() {
            None => {
                self.unsat = true;
                self.constraints.clear();
            }
            Some(cs) if !self.unsat => {
                self.constraints.extend(cs.into_iter().map(|c| c.with_origin(origin)));
            }
            Some(_) => {}
        }
    }

    pub fn evaluate(&self, a: &Assignment) -> Result<bool, PbError> {
        if self.unsat {
            return Ok(false);
        }
        for c in &self.constraints {
            if !c.evaluate(a)? {
                return Ok(false);
            }
        }
        Ok(true)
    }

    pub fn stats(&self) -> FormulaStats {
        FormulaStats {
            vars: self.num_vars,
            constraints: self.constraints.len(),
            literals: self.constraints.iter().map(|c| c.terms.len()).sum(),
            aux_vars: self.aux.len(),
        }
    }
}
