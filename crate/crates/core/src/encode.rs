//! Translation of feature models into pseudo-Boolean formulas.

use std::collections::{BTreeMap, BTreeSet};

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, Signed, Zero};
use thiserror::Error;

use crate::fm::{validate, Diagnostic, Expr, Feature, FeatureModel, GroupKind, Term};
use crate::pb::{normalize, int_ratio, Lit, NormRelation, Normalized, PbError, PbFormula, RawConstraint, Relation, Var};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum EncodeError {
    #[error("invalid model: {}", .0.iter().map(|d| d.to_string()).collect::<Vec<_>>().join("; "))]
    Invalid(Vec<Diagnostic>),
    #[error("unknown feature `{0}`")]
    UnknownFeature(String),
    #[error("feature `{0}` has no attribute `{1}`")]
    UnknownAttribute(String, String),
    #[error("no feature carries attribute `{0}`")]
    EmptyAggregate(String),
    #[error("division enumeration too large: divisor has {vars} variables, limit is {limit}")]
    DivisionTooLarge { vars: usize, limit: usize },
    #[error(transparent)]
    Formula(#[from] PbError),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct EncodeOptions {
    /// Largest number of divisor variables whose assignments are enumerated.
    pub division_limit: usize,
    /// Boolean constraints with at most this many leaves are converted by distribution.
    pub distribute_limit: usize,
}

impl Default for EncodeOptions {
    fn default() -> Self {
        EncodeOptions { division_limit: 12, distribute_limit: 8 }
    }
}

/// Variables assigned to features, clones and auxiliaries.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct VarMap {
    /// Every feature of the expanded model, clones included.
    pub features: BTreeMap<String, Var>,
    /// Features created by cardinality expansion.
    pub clones: BTreeSet<Var>,
    pub aux: BTreeSet<Var>,
    /// Original feature name to the variables of all its incarnations.
    pub incarnations: BTreeMap<String, Vec<Var>>,
}

impl VarMap {
    pub fn var(&self, name: &str) -> Option<Var> {
        self.features.get(name).copied()
    }
}

#[derive(Clone, Debug)]
pub struct Encoding {
    pub formula: PbFormula,
    pub vars: VarMap,
    /// Constraints before normalization, in emission order.
    pub raw: Vec<RawConstraint>,
    pub expanded: FeatureModel,
}

/// `constant + sum weight * var` plus the constraints defining introduced variables.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct LinearForm {
    pub constant: BigRational,
    pub terms: BTreeMap<Var, BigRational>,
    pub side: Vec<RawConstraint>,
    pub introduced: Vec<Var>,
}

impl LinearForm {
    pub fn constant(c: BigRational) -> LinearForm {
        LinearForm { constant: c, ..Default::default() }
    }

    pub fn var(v: Var, weight: BigRational) -> LinearForm {
        let mut f = LinearForm::default();
        f.add_term(v, weight);
        f
    }

    fn add_term(&mut self, v: Var, w: BigRational) {
        if w.is_zero() {
            return;
        }
        let e = self.terms.entry(v).or_insert_with(BigRational::zero);
        *e += w;
        if e.is_zero() {
            self.terms.remove(&v);
        }
    }

    fn absorb_side(&mut self, other: &mut LinearForm) {
        self.side.append(&mut other.side);
        self.introduced.append(&mut other.introduced);
    }

    fn plus(mut self, mut other: LinearForm, sign: bool) -> LinearForm {
        self.absorb_side(&mut other);
        if sign {
            self.constant += &other.constant;
        } else {
            self.constant -= &other.constant;
        }
        for (v, w) in other.terms {
            self.add_term(v, if sign { w } else { -w });
        }
        self
    }

    fn scaled(mut self, k: &BigRational) -> LinearForm {
        self.constant *= k;
        if k.is_zero() {
            self.terms.clear();
        } else {
            for w in self.terms.values_mut() {
                *w *= k;
            }
        }
        self
    }

    /// Evaluates the form, reading variable values from `value`.
    pub fn eval(&self, value: impl Fn(Var) -> bool) -> BigRational {
        let mut s = self.constant.clone();
        for (v, w) in &self.terms {
            if value(*v) {
                s += w;
            }
        }
        s
    }
}

fn coef_terms(terms: &[(i64, Var)]) -> Vec<(BigRational, Lit)> {
    terms.iter().map(|&(c, v)| (int_ratio(c), v.pos())).collect()
}

/// Constraints relating a parent to the children of one group.
pub fn encode_group(parent: Var, kind: GroupKind, children: &[Var]) -> Vec<RawConstraint> {
    let n = children.len() as i64;
    let with_parent = |p: i64, c: i64| {
        let mut t = vec![(p, parent)];
        t.extend(children.iter().map(|&v| (c, v)));
        coef_terms(&t)
    };
    let raw = |terms, relation, degree: i64| RawConstraint::new(terms, relation, int_ratio(degree));
    match kind {
        GroupKind::Optional => vec![raw(with_parent(n, -1), Relation::Ge, 0)],
        GroupKind::Mandatory => vec![raw(with_parent(n, -1), Relation::Eq, 0)],
        GroupKind::Or => vec![raw(with_parent(n, -1), Relation::Ge, 0), raw(with_parent(-1, 1), Relation::Ge, 0)],
        GroupKind::Alternative => vec![raw(with_parent(1, -1), Relation::Eq, 0)],
        GroupKind::Card(a, b) => {
            let only_children: Vec<(i64, Var)> = children.iter().map(|&v| (-1, v)).collect();
            vec![
                raw(with_parent(n, -1), Relation::Ge, 0),
                raw(with_parent(-i64::from(a), 1), Relation::Ge, 0),
                raw(coef_terms(&only_children), Relation::Ge, -i64::from(b)),
            ]
        }
    }
}

struct Expansion {
    model: FeatureModel,
    generated: BTreeSet<String>,
    incarnations: BTreeMap<String, Vec<String>>,
}

fn rename_subtree(f: &Feature, suffix: &str) -> Feature {
    let mut out = f.clone();
    let mut stack = vec![&mut out];
    while let Some(g) = stack.pop() {
        g.name = format!("{}{suffix}", g.name);
        for grp in g.groups.iter_mut() {
            stack.extend(grp.children.iter_mut());
        }
    }
    out
}

fn expand_feature(mut f: Feature, inc: &mut BTreeMap<String, Vec<String>>, generated: &mut BTreeSet<String>) -> Feature {
    for g in f.groups.iter_mut() {
        for c in g.children.iter_mut() {
            let child = std::mem::replace(c, Feature::new(""));
            *c = expand_feature(child, inc, generated);
        }
    }
    let Some((a, b)) = f.cardinality.take() else { return f };
    let names: BTreeSet<String> = f.preorder().into_iter().map(|g| g.name.clone()).collect();
    for list in inc.values_mut() {
        *list = list
            .iter()
            .flat_map(|x| {
                if names.contains(x) {
                    (1..=b).map(|i| format!("{x}#{i}")).collect()
                } else {
                    vec![x.clone()]
                }
            })
            .collect();
    }
    for n in &names {
        generated.remove(n);
    }
    let clones: Vec<Feature> = (1..=b).map(|i| rename_subtree(&f, &format!("#{i}"))).collect();
    for c in &clones {
        generated.extend(c.preorder().into_iter().map(|g| g.name.clone()));
    }
    let cr = Feature::new(format!("{}#cr", f.name)).with_group(GroupKind::Card(a, b), clones);
    generated.insert(cr.name.clone());
    cr
}

fn rewrite_expr(e: &Expr, inc: &BTreeMap<String, Vec<String>>) -> Expr {
    match e {
        Expr::Feature(n) => match inc.get(n) {
            Some(list) if list.len() != 1 || list[0] != *n => list
                .iter()
                .map(|x| Expr::feature(x))
                .reduce(Expr::or)
                .expect("at least one incarnation"),
            _ => e.clone(),
        },
        Expr::Not(a) => Expr::not(rewrite_expr(a, inc)),
        Expr::And(a, b) => Expr::and(rewrite_expr(a, inc), rewrite_expr(b, inc)),
        Expr::Or(a, b) => Expr::or(rewrite_expr(a, inc), rewrite_expr(b, inc)),
        Expr::Implies(a, b) => Expr::implies(rewrite_expr(a, inc), rewrite_expr(b, inc)),
        Expr::Iff(a, b) => Expr::iff(rewrite_expr(a, inc), rewrite_expr(b, inc)),
        Expr::Cmp(r, a, b) => Expr::Cmp(*r, rewrite_term(a, inc), rewrite_term(b, inc)),
    }
}

fn rewrite_term(t: &Term, inc: &BTreeMap<String, Vec<String>>) -> Term {
    match t {
        Term::Attr(n, a) => match inc.get(n) {
            Some(list) if list.len() != 1 || list[0] != *n => list
                .iter()
                .map(|x| Term::attr(x, a))
                .reduce(Term::add)
                .expect("at least one incarnation"),
            _ => t.clone(),
        },
        Term::Add(a, b) => Term::add(rewrite_term(a, inc), rewrite_term(b, inc)),
        Term::Sub(a, b) => Term::sub(rewrite_term(a, inc), rewrite_term(b, inc)),
        Term::Mul(a, b) => Term::mul(rewrite_term(a, inc), rewrite_term(b, inc)),
        Term::Div(a, b) => Term::div(rewrite_term(a, inc), rewrite_term(b, inc)),
        other => other.clone(),
    }
}

fn expand(m: &FeatureModel) -> Expansion {
    let mut inc: BTreeMap<String, Vec<String>> =
        m.features().into_iter().map(|f| (f.name.clone(), vec![f.name.clone()])).collect();
    let mut generated = BTreeSet::new();
    let root = expand_feature(m.root.clone(), &mut inc, &mut generated);
    let constraints = m.constraints.iter().map(|c| rewrite_expr(c, &inc)).collect();
    Expansion { model: FeatureModel { root, constraints }, generated, incarnations: inc }
}

/// Replaces every feature cardinality by a `Card` group over clones of the subtree.
pub fn expand_feature_cardinality(m: &FeatureModel) -> FeatureModel {
    expand(m).model
}

/// Propositional structure over resolved atoms.
#[derive(Clone, Debug)]
enum Prop {
    Const(bool),
    Lit(Lit),
    Not(Box<Prop>),
    And(Box<Prop>, Box<Prop>),
    Or(Box<Prop>, Box<Prop>),
    Implies(Box<Prop>, Box<Prop>),
    Iff(Box<Prop>, Box<Prop>),
}

impl Prop {
    fn leaves(&self) -> usize {
        match self {
            Prop::Const(_) | Prop::Lit(_) => 1,
            Prop::Not(a) => a.leaves(),
            Prop::And(a, b) | Prop::Or(a, b) | Prop::Implies(a, b) | Prop::Iff(a, b) => a.leaves() + b.leaves(),
        }
    }

    /// Removes constants below the top.
    fn simplify(self) -> Prop {
        use Prop::*;
        match self {
            Not(a) => match a.simplify() {
                Const(b) => Const(!b),
                Lit(l) => Lit(!l),
                Not(x) => *x,
                x => Not(Box::new(x)),
            },
            And(a, b) => match (a.simplify(), b.simplify()) {
                (Const(false), _) | (_, Const(false)) => Const(false),
                (Const(true), x) | (x, Const(true)) => x,
                (x, y) => And(Box::new(x), Box::new(y)),
            },
            Or(a, b) => match (a.simplify(), b.simplify()) {
                (Const(true), _) | (_, Const(true)) => Const(true),
                (Const(false), x) | (x, Const(false)) => x,
                (x, y) => Or(Box::new(x), Box::new(y)),
            },
            Implies(a, b) => Or(Box::new(Not(a)), b).simplify(),
            Iff(a, b) => match (a.simplify(), b.simplify()) {
                (Const(true), x) | (x, Const(true)) => x,
                (Const(false), x) | (x, Const(false)) => Not(Box::new(x)).simplify(),
                (x, y) => Iff(Box::new(x), Box::new(y)),
            },
            leaf => leaf,
        }
    }
}

/// Clauses of the distributive CNF of `p` (with polarity `pos`).
fn distribute(p: &Prop, pos: bool) -> Vec<Vec<Lit>> {
    match p {
        Prop::Const(b) => {
            if *b == pos {
                vec![]
            } else {
                vec![vec![]]
            }
        }
        Prop::Lit(l) => vec![vec![if pos { *l } else { !*l }]],
        Prop::Not(a) => distribute(a, !pos),
        Prop::And(a, b) | Prop::Or(a, b) => {
            let conj = matches!(p, Prop::And(..)) == pos;
            let (x, y) = (distribute(a, pos), distribute(b, pos));
            if conj {
                [x, y].concat()
            } else {
                cross(&x, &y)
            }
        }
        Prop::Implies(a, b) => {
            let (na, b) = (Prop::Not(a.clone()), (**b).clone());
            distribute(&Prop::Or(Box::new(na), Box::new(b)), pos)
        }
        Prop::Iff(a, b) => {
            let fwd = Prop::Implies(a.clone(), b.clone());
            let bwd = Prop::Implies(b.clone(), a.clone());
            distribute(&Prop::And(Box::new(fwd), Box::new(bwd)), pos)
        }
    }
}

fn cross(x: &[Vec<Lit>], y: &[Vec<Lit>]) -> Vec<Vec<Lit>> {
    let mut out = Vec::with_capacity(x.len() * y.len());
    for a in x {
        for b in y {
            out.push([a.as_slice(), b.as_slice()].concat());
        }
    }
    out
}

fn clause_raw(clause: &[Lit]) -> RawConstraint {
    RawConstraint::new(clause.iter().map(|&l| (BigRational::one(), l)).collect(), Relation::Ge, BigRational::one())
}

fn clean_clause(mut c: Vec<Lit>) -> Option<Vec<Lit>> {
    c.sort();
    c.dedup();
    if c.windows(2).any(|w| w[0].var() == w[1].var()) {
        None
    } else {
        Some(c)
    }
}

/// Incremental encoder over the expanded model.
pub struct Encoder {
    opts: EncodeOptions,
    vars: VarMap,
    next: u32,
    raw: Vec<RawConstraint>,
    attrs: BTreeMap<String, BTreeMap<String, BigRational>>,
    carriers: BTreeMap<String, Vec<(Var, BigRational)>>,
    conj_memo: BTreeMap<BTreeSet<Lit>, Var>,
    conj_sets: BTreeMap<Var, BTreeSet<Lit>>,
    expanded: FeatureModel,
}

impl Encoder {
    /// Expands `m` and assigns variables: original features in pre-order, then
    /// clones, auxiliaries later on demand.
    pub fn new(m: &FeatureModel, opts: EncodeOptions) -> Encoder {
        let exp = expand(m);
        let mut vars = VarMap::default();
        let mut next = 1u32;
        let features = exp.model.features();
        let (originals, clones): (Vec<&Feature>, Vec<&Feature>) =
            features.iter().partition(|f| !exp.generated.contains(&f.name));
        for f in originals.iter().chain(clones.iter()) {
            let v = Var::new(next);
            next += 1;
            vars.features.insert(f.name.clone(), v);
            if exp.generated.contains(&f.name) {
                vars.clones.insert(v);
            }
        }
        for (orig, names) in &exp.incarnations {
            vars.incarnations.insert(orig.clone(), names.iter().map(|n| vars.features[n]).collect());
        }
        let mut attrs = BTreeMap::new();
        let mut carriers: BTreeMap<String, Vec<(Var, BigRational)>> = BTreeMap::new();
        for f in &features {
            for (a, v) in &f.attributes {
                carriers.entry(a.clone()).or_default().push((vars.features[&f.name], v.clone()));
            }
            attrs.insert(f.name.clone(), f.attributes.clone());
        }
        Encoder {
            opts,
            vars,
            next,
            raw: Vec::new(),
            attrs,
            carriers,
            conj_memo: BTreeMap::new(),
            conj_sets: BTreeMap::new(),
            expanded: exp.model,
        }
    }

    pub fn vars(&self) -> &VarMap {
        &self.vars
    }

    pub fn expanded(&self) -> &FeatureModel {
        &self.expanded
    }

    fn fresh(&mut self) -> Var {
        let v = Var::new(self.next);
        self.next += 1;
        self.vars.aux.insert(v);
        v
    }

    fn feature_var(&self, name: &str) -> Result<Var, EncodeError> {
        self.vars.var(name).ok_or_else(|| EncodeError::UnknownFeature(name.to_string()))
    }

    fn lits_of(&self, l: Lit) -> BTreeSet<Lit> {
        match self.conj_sets.get(&l.var()) {
            Some(set) if l.is_positive() => set.clone(),
            _ => BTreeSet::from([l]),
        }
    }

    /// A variable equivalent to the conjunction of `lits`, or `None` when the
    /// conjunction is contradictory. Definitions are shared per literal set.
    fn conj(&mut self, lits: BTreeSet<Lit>, out: &mut LinearForm) -> Option<Var> {
        if lits.iter().any(|l| lits.contains(&!*l)) {
            return None;
        }
        if lits.len() == 1 {
            let l = *lits.iter().next().expect("one literal");
            if l.is_positive() {
                return Some(l.var());
            }
        }
        if let Some(&v) = self.conj_memo.get(&lits) {
            return Some(v);
        }
        let z = self.fresh();
        for &l in &lits {
            out.side.push(clause_raw(&[z.neg(), l]));
        }
        let mut back = vec![z.pos()];
        back.extend(lits.iter().map(|&l| !l));
        out.side.push(clause_raw(&back));
        out.introduced.push(z);
        self.conj_sets.insert(z, lits.clone());
        self.conj_memo.insert(lits, z);
        Some(z)
    }

    /// Linear form of an arithmetic term.
    pub fn compile_term(&mut self, t: &Term) -> Result<LinearForm, EncodeError> {
        Ok(match t {
            Term::Const(c) => LinearForm::constant(c.clone()),
            Term::Attr(f, a) => {
                let v = self.feature_var(f)?;
                let value = self.attrs[f]
                    .get(a)
                    .cloned()
                    .ok_or_else(|| EncodeError::UnknownAttribute(f.clone(), a.clone()))?;
                LinearForm::var(v, value)
            }
            Term::Sum(a) => self.sum(a),
            Term::Avg(a) => {
                let n = self.carriers.get(a).map_or(0, Vec::len);
                if n == 0 {
                    return Err(EncodeError::EmptyAggregate(a.clone()));
                }
                self.sum(a).scaled(&BigRational::new(BigInt::one(), BigInt::from(n)))
            }
            Term::Add(a, b) => self.compile_term(a)?.plus(self.compile_term(b)?, true),
            Term::Sub(a, b) => self.compile_term(a)?.plus(self.compile_term(b)?, false),
            Term::Mul(a, b) => {
                let (x, y) = (self.compile_term(a)?, self.compile_term(b)?);
                self.multiply(x, y)
            }
            Term::Div(a, b) => {
                let (x, y) = (self.compile_term(a)?, self.compile_term(b)?);
                self.divide(x, y)?
            }
        })
    }

    fn sum(&self, attr: &str) -> LinearForm {
        let mut f = LinearForm::default();
        for (v, w) in self.carriers.get(attr).into_iter().flatten() {
            f.add_term(*v, w.clone());
        }
        f
    }

    fn multiply(&mut self, mut x: LinearForm, mut y: LinearForm) -> LinearForm {
        let mut out = LinearForm::constant(&x.constant * &y.constant);
        out.absorb_side(&mut x);
        out.absorb_side(&mut y);
        for (v, w) in &x.terms {
            out.add_term(*v, w * &y.constant);
        }
        for (v, w) in &y.terms {
            out.add_term(*v, w * &x.constant);
        }
        for (xv, xw) in &x.terms {
            for (yv, yw) in &y.terms {
                let mut lits = self.lits_of(xv.pos());
                lits.extend(self.lits_of(yv.pos()));
                if let Some(z) = self.conj(lits, &mut out) {
                    out.add_term(z, xw * yw);
                }
            }
        }
        out
    }

    fn divide(&mut self, mut num: LinearForm, mut den: LinearForm) -> Result<LinearForm, EncodeError> {
        let ys: Vec<Var> = den.terms.keys().copied().collect();
        if ys.is_empty() {
            if den.constant.is_zero() {
                num.side.push(RawConstraint::new(vec![], Relation::Ge, BigRational::one()));
                num.absorb_side(&mut den);
                return Ok(num.scaled(&BigRational::zero()));
            }
            let k = den.constant.recip();
            num.absorb_side(&mut den);
            return Ok(num.scaled(&k));
        }
        if ys.len() > self.opts.division_limit {
            return Err(EncodeError::DivisionTooLarge { vars: ys.len(), limit: self.opts.division_limit });
        }
        let mut out = LinearForm::default();
        out.absorb_side(&mut num);
        out.absorb_side(&mut den);
        for bits in 0u64..(1u64 << ys.len()) {
            let s: Vec<Lit> = ys.iter().enumerate().map(|(i, y)| y.lit(bits >> i & 1 == 1)).collect();
            let mut value = den.constant.clone();
            for (i, y) in ys.iter().enumerate() {
                if bits >> i & 1 == 1 {
                    value += &den.terms[y];
                }
            }
            if value.is_zero() {
                let blocking: Vec<Lit> = s.iter().map(|&l| !l).collect();
                out.side.push(clause_raw(&blocking));
                continue;
            }
            let base: BTreeSet<Lit> = s.iter().flat_map(|&l| self.lits_of(l)).collect();
            if !num.constant.is_zero() {
                if let Some(e) = self.conj(base.clone(), &mut out) {
                    out.add_term(e, &num.constant / &value);
                }
            }
            for (x, k) in &num.terms {
                let mut lits = base.clone();
                lits.extend(self.lits_of(x.pos()));
                if let Some(e) = self.conj(lits, &mut out) {
                    out.add_term(e, k / &value);
                }
            }
        }
        Ok(out)
    }

    /// Raw constraints for `lhs op rhs`, side constraints first.
    pub fn encode_comparison(&mut self, lhs: LinearForm, op: Relation, rhs: LinearForm) -> Vec<RawConstraint> {
        let diff = lhs.plus(rhs, false);
        let mut out = diff.side.clone();
        let terms = diff.terms.iter().map(|(v, w)| (w.clone(), v.pos())).collect();
        out.push(RawConstraint::new(terms, op, -diff.constant));
        out
    }

    fn comparison_prop(&mut self, op: Relation, a: &Term, b: &Term) -> Result<Prop, EncodeError> {
        let (l, r) = (self.compile_term(a)?, self.compile_term(b)?);
        let mut raws = self.encode_comparison(l, op, r);
        let main = raws.pop().expect("main constraint");
        self.raw.extend(raws);
        Ok(match normalize(&main) {
            Normalized::Trivial(b) => Prop::Const(b),
            Normalized::Constraints(cs) => {
                let mut acc = Prop::Const(true);
                for c in cs {
                    let terms: Vec<(BigInt, Lit)> = c.terms().to_vec();
                    let sum = c.coefficient_sum();
                    let atom = match c.relation() {
                        NormRelation::Ge => self.reify_ge(&terms, c.degree().clone()),
                        NormRelation::Ne => {
                            let above = self.reify_ge(&terms, c.degree() + 1);
                            let flipped: Vec<(BigInt, Lit)> = terms.iter().map(|(k, l)| (k.clone(), !*l)).collect();
                            let below = self.reify_ge(&flipped, &sum - c.degree() + 1);
                            Prop::Or(Box::new(above), Box::new(below))
                        }
                    };
                    acc = Prop::And(Box::new(acc), Box::new(atom));
                }
                acc
            }
        })
    }

    /// An atom equivalent to `sum terms >= degree` over positive coefficients.
    fn reify_ge(&mut self, terms: &[(BigInt, Lit)], degree: BigInt) -> Prop {
        let sum: BigInt = terms.iter().map(|(k, _)| k).sum();
        if !degree.is_positive() {
            return Prop::Const(true);
        }
        if degree > sum {
            return Prop::Const(false);
        }
        let r = self.fresh();
        let to_raw = |ts: Vec<(BigInt, Lit)>, d: BigInt| {
            RawConstraint::new(
                ts.into_iter().map(|(k, l)| (BigRational::from_integer(k), l)).collect(),
                Relation::Ge,
                BigRational::from_integer(d),
            )
        };
        let mut fwd = terms.to_vec();
        fwd.push((degree.clone(), r.neg()));
        self.raw.push(to_raw(fwd, degree.clone()));
        let gap: BigInt = &sum - &degree + 1;
        let mut bwd: Vec<(BigInt, Lit)> = terms.iter().map(|(k, l)| (k.clone(), !*l)).collect();
        bwd.push((gap.clone(), r.pos()));
        self.raw.push(to_raw(bwd, gap));
        Prop::Lit(r.pos())
    }

    fn prop(&mut self, e: &Expr) -> Result<Prop, EncodeError> {
        let b = |x: Prop| Box::new(x);
        Ok(match e {
            Expr::Feature(n) => Prop::Lit(self.feature_var(n)?.pos()),
            Expr::Not(a) => Prop::Not(b(self.prop(a)?)),
            Expr::And(x, y) => Prop::And(b(self.prop(x)?), b(self.prop(y)?)),
            Expr::Or(x, y) => Prop::Or(b(self.prop(x)?), b(self.prop(y)?)),
            Expr::Implies(x, y) => Prop::Implies(b(self.prop(x)?), b(self.prop(y)?)),
            Expr::Iff(x, y) => Prop::Iff(b(self.prop(x)?), b(self.prop(y)?)),
            Expr::Cmp(op, x, y) => self.comparison_prop(*op, x, y)?,
        })
    }

    fn tseitin(&mut self, p: &Prop, clauses: &mut Vec<Vec<Lit>>) -> Lit {
        let (kind, a, b) = match p {
            Prop::Lit(l) => return *l,
            Prop::Not(a) => return !self.tseitin(a, clauses),
            Prop::Const(_) => unreachable!("constants are simplified away"),
            Prop::And(a, b) => (0, a, b),
            Prop::Or(a, b) => (1, a, b),
            Prop::Implies(a, b) => (2, a, b),
            Prop::Iff(a, b) => (3, a, b),
        };
        let mut x = self.tseitin(a, clauses);
        let y = self.tseitin(b, clauses);
        let g = self.fresh().pos();
        if kind == 2 {
            x = !x;
        }
        match kind {
            0 => {
                clauses.push(vec![!g, x]);
                clauses.push(vec![!g, y]);
                clauses.push(vec![g, !x, !y]);
            }
            1 | 2 => {
                clauses.push(vec![g, !x]);
                clauses.push(vec![g, !y]);
                clauses.push(vec![!g, x, y]);
            }
            _ => {
                clauses.push(vec![!g, !x, y]);
                clauses.push(vec![!g, x, !y]);
                clauses.push(vec![g, x, y]);
                clauses.push(vec![g, !x, !y]);
            }
        }
        g
    }

    /// Raw constraints enforcing a cross-tree constraint. Comparisons at the
    /// top level are emitted directly, nested ones through reified atoms.
    pub fn encode_constraint(&mut self, e: &Expr) -> Result<Vec<RawConstraint>, EncodeError> {
        let start = self.raw.len();
        self.constraint_into(e)?;
        Ok(self.raw[start..].to_vec())
    }

    fn constraint_into(&mut self, e: &Expr) -> Result<(), EncodeError> {
        match e {
            Expr::And(a, b) => {
                self.constraint_into(a)?;
                self.constraint_into(b)
            }
            Expr::Cmp(op, a, b) => {
                let (l, r) = (self.compile_term(a)?, self.compile_term(b)?);
                let raws = self.encode_comparison(l, *op, r);
                self.raw.extend(raws);
                Ok(())
            }
            _ => {
                let p = self.prop(e)?.simplify();
                let clauses = match p {
                    Prop::Const(true) => vec![],
                    Prop::Const(false) => vec![vec![]],
                    ref p if p.leaves() <= self.opts.distribute_limit => distribute(p, true),
                    ref p => {
                        let mut clauses = Vec::new();
                        let top = self.tseitin(p, &mut clauses);
                        clauses.push(vec![top]);
                        clauses
                    }
                };
                for c in clauses.into_iter().filter_map(clean_clause) {
                    self.raw.push(clause_raw(&c));
                }
                Ok(())
            }
        }
    }

    /// Root selection and all group constraints of the expanded model.
    pub fn encode_tree(&mut self) -> Vec<RawConstraint> {
        let start = self.raw.len();
        let root = self.vars.features[&self.expanded.root.name];
        self.raw.push(clause_raw(&[root.pos()]));
        let model = self.expanded.clone();
        for f in model.features() {
            let p = self.vars.features[&f.name];
            for g in &f.groups {
                let children: Vec<Var> = g.children.iter().map(|c| self.vars.features[&c.name]).collect();
                self.raw.extend(encode_group(p, g.kind, &children));
            }
        }
        self.raw[start..].to_vec()
    }

    /// Normalizes everything emitted so far into a formula.
    pub fn finish(self) -> Result<Encoding, EncodeError> {
        let mut formula = PbFormula::new(self.next - 1);
        for (name, v) in &self.vars.features {
            formula.set_name(*v, name.clone())?;
        }
        for v in &self.vars.aux {
            formula.mark_aux(*v)?;
        }
        for r in &self.raw {
            formula.add_raw(r)?;
        }
        Ok(Encoding { formula, vars: self.vars, raw: self.raw, expanded: self.expanded })
    }
}

/// Encodes a validated feature model. The model count of the formula equals the
/// number of configurations; auxiliary variables are functionally determined.
pub fn encode_feature_model(m: &FeatureModel) -> Result<Encoding, EncodeError> {
    encode_feature_model_with(m, EncodeOptions::default())
}

pub fn encode_feature_model_with(m: &FeatureModel, opts: EncodeOptions) -> Result<Encoding, EncodeError> {
    let diags = validate(m);
    if !diags.is_empty() {
        return Err(EncodeError::Invalid(diags));
    }
    let mut enc = Encoder::new(m, opts);
    enc.encode_tree();
    let constraints = enc.expanded.constraints.clone();
    for c in &constraints {
        enc.constraint_into(c)?;
    }
    enc.finish()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures;
    use crate::fm::parse_uvl;
    use crate::pb::{raw_stats, Assignment};

    fn v(i: u32) -> Var {
        Var::new(i)
    }

    fn rat(n: i64, d: i64) -> BigRational {
        BigRational::new(n.into(), d.into())
    }

    fn same_models(a: &[RawConstraint], b: &[RawConstraint], n: u32) -> bool {
        (0..1u64 << n).all(|bits| {
            let asg = Assignment::from_bits(n, bits);
            let ea = a.iter().all(|r| r.evaluate(&asg).unwrap());
            let eb = b.iter().all(|r| r.evaluate(&asg).unwrap());
            ea == eb
        })
    }

    #[test]
    fn group_shapes() {
        let opt = encode_group(v(1), GroupKind::Optional, &[v(2), v(3)]);
        assert_eq!(opt, vec![RawConstraint::from_ints(&[(2, v(1).pos()), (-1, v(2).pos()), (-1, v(3).pos())], Relation::Ge, 0)]);
        let alt = encode_group(v(1), GroupKind::Alternative, &[v(2), v(3), v(4)]);
        assert_eq!(raw_stats(&alt), (1, 4));
        assert_eq!(alt[0].relation, Relation::Eq);
        let card = encode_group(v(1), GroupKind::Card(1, 2), &[v(2), v(3), v(4)]);
        assert_eq!(raw_stats(&card), (3, 11));
        let expected = [
            RawConstraint::from_ints(&[(3, v(1).pos()), (-1, v(2).pos()), (-1, v(3).pos()), (-1, v(4).pos())], Relation::Ge, 0),
            RawConstraint::from_ints(&[(-1, v(1).pos()), (1, v(2).pos()), (1, v(3).pos()), (1, v(4).pos())], Relation::Ge, 0),
            RawConstraint::from_ints(&[(-1, v(2).pos()), (-1, v(3).pos()), (-1, v(4).pos())], Relation::Ge, -2),
        ];
        assert_eq!(card, expected);
        let mand = encode_group(v(1), GroupKind::Mandatory, &[v(2)]);
        let iff = [
            RawConstraint::from_ints(&[(1, v(1).neg()), (1, v(2).pos())], Relation::Ge, 1),
            RawConstraint::from_ints(&[(1, v(1).pos()), (1, v(2).neg())], Relation::Ge, 1),
        ];
        assert!(same_models(&mand, &iff, 2));
    }

    #[test]
    fn robot_cross_tree_clauses() {
        let m = parse_uvl(fixtures::ROBOT_BASIC).unwrap();
        let mut enc = Encoder::new(&m, EncodeOptions::default());
        let (ai, maps, cam) = (enc.vars().var("AI").unwrap(), enc.vars().var("Maps").unwrap(), enc.vars().var("Camera").unwrap());
        let raws = enc.encode_constraint(&m.constraints[0]).unwrap();
        let mut clauses: Vec<Vec<Lit>> = raws.iter().map(|r| r.terms.iter().map(|(_, l)| *l).collect()).collect();
        clauses.sort();
        let mut expected = vec![vec![maps.neg(), cam.pos()], vec![ai.neg(), cam.pos()]];
        for c in expected.iter_mut() {
            c.sort();
        }
        expected.sort();
        assert_eq!(clauses, expected);
        assert_eq!(enc.encode_constraint(&m.constraints[1]).unwrap().len(), 1);
        let double = Expr::not(Expr::not(Expr::feature("Maps")));
        assert_eq!(enc.encode_constraint(&double).unwrap(), vec![clause_raw(&[maps.pos()])]);
    }

    #[test]
    fn variable_order() {
        let m = parse_uvl(fixtures::ROBOT_EXPRESSIVE).unwrap();
        let enc = encode_feature_model(&m).unwrap();
        assert_eq!(enc.vars.var("Robot Vacuum"), Some(v(1)));
        let originals = enc.vars.features.values().filter(|x| !enc.vars.clones.contains(x)).count();
        assert_eq!(originals, 8);
        assert_eq!(enc.vars.clones.len(), 10);
        assert!(enc.vars.clones.iter().all(|c| c.index() > 8));
        assert!(enc.vars.aux.iter().all(|a| a.index() > 18));
        assert_eq!(enc.vars.incarnations["Dust storage"].len(), 3);
    }

    #[test]
    fn expansion_structure() {
        let m = parse_uvl(fixtures::ROBOT_EXPRESSIVE).unwrap();
        let x = expand_feature_cardinality(&m);
        assert!(x.features().iter().all(|f| f.cardinality.is_none()));
        let cr = x.feature("Extra Storage#cr").unwrap();
        assert_eq!(cr.groups[0].kind, GroupKind::Card(1, 3));
        for (i, c) in cr.groups[0].children.iter().enumerate() {
            assert_eq!(c.name, format!("Extra Storage#{}", i + 1));
            assert_eq!(c.groups[0].kind, GroupKind::Alternative);
            assert_eq!(c.groups[0].children[0].name, format!("Dust storage#{}", i + 1));
            assert_eq!(c.groups[0].children[0].attributes["space"], rat(2, 1));
        }
        assert!(crate::fm::validate(&x).is_empty());
    }

    #[test]
    fn attribute_terms() {
        let m = parse_uvl(fixtures::ROBOT_BASIC.replace("Maps\n", "Maps {cost 7}\n").as_str()).unwrap();
        let mut enc = Encoder::new(&m, EncodeOptions::default());
        let f = enc.compile_term(&Term::Sum("cost".into())).unwrap();
        assert_eq!(f.terms.len(), 1);
        assert_eq!(f.terms[&enc.vars().var("Maps").unwrap()], rat(7, 1));

        let m = parse_uvl(fixtures::ROBOT_EXPRESSIVE).unwrap();
        let mut enc = Encoder::new(&m, EncodeOptions::default());
        let total = enc.compile_term(&Term::Sum("cost".into())).unwrap();
        assert_eq!(total.terms.len(), 12);
        assert_eq!(total.terms.values().sum::<BigRational>(), rat(7 + 2 + 2 + 2 + 4 + 3 + 3 * (3 + 5), 1));
        let space = match &enc.expanded().constraints[3] {
            Expr::Cmp(_, t, _) => t.clone(),
            _ => unreachable!(),
        };
        let space = enc.compile_term(&space).unwrap();
        let dust = &enc.vars().incarnations["Dust storage"];
        let water = &enc.vars().incarnations["Water storage"];
        assert!(dust.iter().all(|d| space.terms[d] == rat(2, 1)));
        assert!(water.iter().all(|w| space.terms[w] == rat(4, 1)));
    }

    #[test]
    fn comparison_normal_forms() {
        let m = parse_uvl(fixtures::ROBOT_EXPRESSIVE).unwrap();
        let mut enc = Encoder::new(&m, EncodeOptions::default());
        let sum = enc.compile_term(&Term::Sum("cost".into())).unwrap();
        let raws = enc.encode_comparison(sum.clone(), Relation::Lt, LinearForm::constant(rat(15, 1)));
        let expected = RawConstraint::new(
            sum.terms.iter().map(|(v, w)| (-w.clone(), v.pos())).collect(),
            Relation::Ge,
            rat(-14, 1),
        );
        assert_eq!(normalize(&raws[0]), normalize(&expected));
    }

    fn tiny() -> FeatureModel {
        parse_uvl("features\n    r\n        optional\n            x {k 2, d 1}\n            y {k 3, d 1}\n").unwrap()
    }

    #[test]
    fn products() {
        let m = tiny();
        let mut enc = Encoder::new(&m, EncodeOptions::default());
        let t = Term::mul(Term::attr("x", "k"), Term::attr("y", "k"));
        let f = enc.compile_term(&t).unwrap();
        assert_eq!(f.introduced.len(), 1);
        assert_eq!(f.side.len(), 3);
        let z = f.introduced[0];
        assert_eq!(f.terms, BTreeMap::from([(z, rat(6, 1))]));
        let again = enc.compile_term(&t).unwrap();
        assert!(again.introduced.is_empty());
        assert_eq!(again.terms, f.terms);
        let square = enc.compile_term(&Term::mul(Term::attr("x", "k"), Term::attr("x", "k"))).unwrap();
        assert_eq!(square.terms, BTreeMap::from([(v(2), rat(4, 1))]));
    }

    #[test]
    fn quotient_matches_rational_value() {
        let m = tiny();
        let mut enc = Encoder::new(&m, EncodeOptions::default());
        let t = Term::div(Term::mul(Term::attr("x", "d"), Term::Const(rat(4, 1))), Term::add(Term::Const(rat(1, 1)), Term::attr("y", "d")));
        let f = enc.compile_term(&t).unwrap();
        assert_eq!(f.terms.values().cloned().collect::<BTreeSet<_>>(), BTreeSet::from([rat(4, 1), rat(2, 1)]));
        let n = enc.next - 1;
        for bits in 0..1u64 << n {
            let asg = Assignment::from_bits(n, bits);
            if !f.side.iter().all(|r| r.evaluate(&asg).unwrap()) {
                continue;
            }
            let val = |var: Var| asg.get(var).unwrap();
            let x = if val(v(2)) { 4 } else { 0 };
            let y = if val(v(3)) { 1 } else { 0 };
            assert_eq!(f.eval(val), rat(x, 1 + y));
        }
    }

    #[test]
    fn zero_divisor_is_blocked() {
        let m = parse_uvl(fixtures::DIVISION).unwrap();
        let enc = encode_feature_model(&m).unwrap();
        let (a, b) = (enc.vars.var("A").unwrap(), enc.vars.var("B").unwrap());
        let n = enc.formula.num_vars();
        for bits in 0..1u64 << n {
            let asg = Assignment::from_bits(n, bits);
            if !asg.get(a).unwrap() && !asg.get(b).unwrap() {
                assert!(!enc.formula.evaluate(&asg).unwrap());
            }
        }
    }

    #[test]
    fn constant_zero_divisor_is_unsat() {
        let m = parse_uvl("features\n    r {a 1}\nconstraints\n    r.a / (r.a - r.a) >= 0\n").unwrap();
        let enc = encode_feature_model(&m).unwrap();
        assert!(enc.formula.is_unsat());
    }

    #[test]
    fn division_limit() {
        let m = tiny();
        let mut enc = Encoder::new(&m, EncodeOptions { division_limit: 1, ..Default::default() });
        let t = Term::div(Term::Const(rat(1, 1)), Term::Sum("d".into()));
        assert_eq!(enc.compile_term(&t), Err(EncodeError::DivisionTooLarge { vars: 2, limit: 1 }));
    }

    #[test]
    fn nested_comparisons_are_reified() {
        let m = tiny();
        for op in Relation::ALL {
            for k in 0..=5 {
                let cmp = Expr::Cmp(op, Term::Sum("k".into()), Term::Const(rat(k, 1)));
                let e = Expr::or(Expr::not(Expr::feature("x")), cmp);
                let mut enc = Encoder::new(&m, EncodeOptions::default());
                let raws = enc.encode_constraint(&e).unwrap();
                let n = enc.next - 1;
                let mut count = 0;
                for bits in 0..1u64 << n {
                    let asg = Assignment::from_bits(n, bits);
                    if raws.iter().all(|r| r.evaluate(&asg).unwrap()) {
                        count += 1;
                        let (x, y) = (asg.get(v(2)).unwrap(), asg.get(v(3)).unwrap());
                        let s = 2 * i64::from(x) + 3 * i64::from(y);
                        assert!(!x || op.holds(&s, &k));
                    }
                }
                let expected = (0..8u32)
                    .filter(|bits| {
                        let (x, y) = (bits >> 1 & 1 == 1, bits >> 2 & 1 == 1);
                        let s = 2 * i64::from(x) + 3 * i64::from(y);
                        !x || op.holds(&s, &k)
                    })
                    .count();
                assert_eq!(count, expected, "{op:?} {k}");
            }
        }
    }

    #[test]
    fn tseitin_preserves_count() {
        let m = parse_uvl("features\n    r\n        optional\n            a\n            b\n            c\n").unwrap();
        let e = parse_uvl(
            "features\n    r\n        optional\n            a\n            b\n            c\nconstraints\n    (a <=> b) | (b & !c) | (c => a) | (a <=> (b <=> c)) | !r\n",
        )
        .unwrap()
        .constraints[0]
            .clone();
        for limit in [0, 100] {
            let mut enc = Encoder::new(&m, EncodeOptions { distribute_limit: limit, ..Default::default() });
            let raws = enc.encode_constraint(&e).unwrap();
            let n = enc.next - 1;
            let count = (0..1u64 << n)
                .filter(|&bits| raws.iter().all(|r| r.evaluate(&Assignment::from_bits(n, bits)).unwrap()))
                .count();
            let direct = (0..16u32)
                .filter(|bits| {
                    let [r, a, b, c] = [0, 1, 2, 3].map(|i| bits >> i & 1 == 1);
                    (a == b) || (b && !c) || (!c || a) || (a == (b == c)) || !r
                })
                .count();
            assert_eq!(count, direct, "limit {limit}");
        }
    }
}
