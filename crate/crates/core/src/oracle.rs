//! Brute-force reference semantics and seeded random instances.
//!
//! Nothing here goes through the encoder or the compiler.

use std::collections::BTreeMap;
use std::ops::RangeInclusive;

use num_bigint::{BigInt, BigUint};
use num_rational::BigRational;
use num_traits::{ToPrimitive, Zero};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::fm::{validate, Expr, Feature, FeatureModel, GroupKind, Term};
use crate::pb::{Assignment, PbError, PbFormula, RawConstraint, Relation, Var};

pub const MAX_PB_VARS: u32 = 25;
pub const MAX_FM_FEATURES: usize = 24;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum OracleError {
    #[error("{0} variables exceed the brute-force limit of {MAX_PB_VARS}")]
    TooManyVars(u32),
    #[error("{0} features after expansion exceed the brute-force limit of {MAX_FM_FEATURES}")]
    TooManyFeatures(usize),
    #[error("model references unknown feature or attribute `{0}`")]
    Unresolved(String),
    #[error(transparent)]
    Formula(#[from] PbError),
}

/// Number of satisfying assignments over all variables of `f`.
pub fn brute_count_pb(f: &PbFormula) -> Result<BigUint, OracleError> {
    let n = f.num_vars();
    if n > MAX_PB_VARS {
        return Err(OracleError::TooManyVars(n));
    }
    let mut count = 0u64;
    for bits in 0..1u64 << n {
        if f.evaluate(&Assignment::from_bits(n, bits))? {
            count += 1;
        }
    }
    Ok(count.into())
}

/// Same count computed from un-normalized constraints.
pub fn brute_count_raw(num_vars: u32, raws: &[RawConstraint]) -> Result<BigUint, OracleError> {
    if num_vars > MAX_PB_VARS {
        return Err(OracleError::TooManyVars(num_vars));
    }
    let mut count = 0u64;
    'next: for bits in 0..1u64 << num_vars {
        let a = Assignment::from_bits(num_vars, bits);
        for r in raws {
            if !r.evaluate(&a)? {
                continue 'next;
            }
        }
        count += 1;
    }
    Ok(count.into())
}

struct XFeature {
    origin: Option<String>,
    attrs: BTreeMap<String, BigRational>,
    groups: Vec<(GroupKind, Vec<XFeature>)>,
}

impl XFeature {
    fn size(&self) -> usize {
        1 + self.groups.iter().flat_map(|(_, c)| c).map(XFeature::size).sum::<usize>()
    }

    fn duplicate(&self) -> XFeature {
        XFeature {
            origin: self.origin.clone(),
            attrs: self.attrs.clone(),
            groups: self.groups.iter().map(|(k, c)| (*k, c.iter().map(XFeature::duplicate).collect())).collect(),
        }
    }
}

fn expand(f: &Feature) -> XFeature {
    let base = XFeature {
        origin: Some(f.name.clone()),
        attrs: f.attributes.clone(),
        groups: f.groups.iter().map(|g| (g.kind, g.children.iter().map(expand).collect())).collect(),
    };
    match f.cardinality {
        None => base,
        Some((a, b)) => XFeature {
            origin: None,
            attrs: BTreeMap::new(),
            groups: vec![(GroupKind::Card(a, b), (0..b).map(|_| base.duplicate()).collect())],
        },
    }
}

/// Flattened expanded tree: per feature its origin and attributes, indexed in pre-order.
struct Flat {
    origin: Vec<Option<String>>,
    attrs: Vec<BTreeMap<String, BigRational>>,
}

fn flatten(x: &XFeature, flat: &mut Flat) -> usize {
    let id = flat.origin.len();
    flat.origin.push(x.origin.clone());
    flat.attrs.push(x.attrs.clone());
    for (_, children) in &x.groups {
        for c in children {
            flatten(c, flat);
        }
    }
    id
}

/// Selection masks of the subtree at `x` (with index `id`) given that `x` is selected.
fn selections(x: &XFeature, id: usize) -> Vec<u32> {
    let mut acc = vec![1u32 << id];
    let mut next = id + 1;
    for (kind, children) in &x.groups {
        let mut kids = Vec::new();
        for c in children {
            kids.push(selections(c, next));
            next += c.size();
        }
        let n = kids.len();
        let mut group: Vec<u32> = Vec::new();
        for subset in 0..1u32 << n {
            let k = subset.count_ones() as usize;
            let ok = match kind {
                GroupKind::Optional => true,
                GroupKind::Mandatory => k == n,
                GroupKind::Or => k >= 1,
                GroupKind::Alternative => k == 1,
                GroupKind::Card(a, b) => k >= *a as usize && k <= *b as usize,
            };
            if !ok {
                continue;
            }
            let mut partial = vec![0u32];
            for (i, kid) in kids.iter().enumerate() {
                if subset >> i & 1 == 1 {
                    partial = partial.iter().flat_map(|p| kid.iter().map(move |m| p | m)).collect();
                }
            }
            group.extend(partial);
        }
        acc = acc.iter().flat_map(|a| group.iter().map(move |g| a | g)).collect();
    }
    acc
}

struct Semantics<'a> {
    flat: &'a Flat,
    mask: u32,
}

impl Semantics<'_> {
    fn selected(&self, i: usize) -> bool {
        self.mask >> i & 1 == 1
    }

    fn incarnations<'s>(&'s self, name: &'s str) -> impl Iterator<Item = usize> + 's {
        (0..self.flat.origin.len()).filter(move |&i| self.flat.origin[i].as_deref() == Some(name))
    }

    fn term(&self, t: &Term) -> Result<Option<BigRational>, OracleError> {
        let both = |a: &Term, b: &Term| -> Result<Option<(BigRational, BigRational)>, OracleError> {
            let (x, y) = (self.term(a)?, self.term(b)?);
            Ok(x.zip(y))
        };
        Ok(match t {
            Term::Const(c) => Some(c.clone()),
            Term::Attr(f, a) => {
                let mut sum = BigRational::zero();
                let mut found = false;
                for i in self.incarnations(f) {
                    let v = self.flat.attrs[i].get(a).ok_or_else(|| OracleError::Unresolved(format!("{f}.{a}")))?;
                    found = true;
                    if self.selected(i) {
                        sum += v;
                    }
                }
                if !found {
                    return Err(OracleError::Unresolved(f.clone()));
                }
                Some(sum)
            }
            Term::Sum(a) | Term::Avg(a) => {
                let mut sum = BigRational::zero();
                let mut carriers = 0i64;
                for (i, attrs) in self.flat.attrs.iter().enumerate() {
                    if let Some(v) = attrs.get(a) {
                        carriers += 1;
                        if self.selected(i) {
                            sum += v;
                        }
                    }
                }
                if carriers == 0 {
                    return Err(OracleError::Unresolved(a.clone()));
                }
                if matches!(t, Term::Avg(_)) {
                    sum /= BigRational::from_integer(carriers.into());
                }
                Some(sum)
            }
            Term::Add(a, b) => both(a, b)?.map(|(x, y)| x + y),
            Term::Sub(a, b) => both(a, b)?.map(|(x, y)| x - y),
            Term::Mul(a, b) => both(a, b)?.map(|(x, y)| x * y),
            Term::Div(a, b) => both(a, b)?.and_then(|(x, y)| (!y.is_zero()).then(|| x / y)),
        })
    }

    /// `None` when some division inside has a zero divisor.
    fn expr(&self, e: &Expr) -> Result<Option<bool>, OracleError> {
        let both = |a: &Expr, b: &Expr| -> Result<Option<(bool, bool)>, OracleError> {
            let (x, y) = (self.expr(a)?, self.expr(b)?);
            Ok(x.zip(y))
        };
        Ok(match e {
            Expr::Feature(n) => {
                let mut any = false;
                let mut found = false;
                for i in self.incarnations(n) {
                    found = true;
                    any |= self.selected(i);
                }
                if !found {
                    return Err(OracleError::Unresolved(n.clone()));
                }
                Some(any)
            }
            Expr::Not(a) => self.expr(a)?.map(|x| !x),
            Expr::And(a, b) => both(a, b)?.map(|(x, y)| x && y),
            Expr::Or(a, b) => both(a, b)?.map(|(x, y)| x || y),
            Expr::Implies(a, b) => both(a, b)?.map(|(x, y)| !x || y),
            Expr::Iff(a, b) => both(a, b)?.map(|(x, y)| x == y),
            Expr::Cmp(r, a, b) => match (self.term(a)?, self.term(b)?) {
                (Some(x), Some(y)) => Some(r.holds(&x, &y)),
                _ => None,
            },
        })
    }
}

/// Number of features after expanding feature cardinalities.
pub fn expanded_size(m: &FeatureModel) -> usize {
    expand(&m.root).size()
}

/// Number of valid configurations, counted over features and their clones.
pub fn brute_count_fm(m: &FeatureModel) -> Result<BigUint, OracleError> {
    let root = expand(&m.root);
    let n = root.size();
    if n > MAX_FM_FEATURES {
        return Err(OracleError::TooManyFeatures(n));
    }
    let mut flat = Flat { origin: Vec::new(), attrs: Vec::new() };
    flatten(&root, &mut flat);
    let mut count = 0u64;
    'next: for mask in selections(&root, 0) {
        let s = Semantics { flat: &flat, mask };
        for c in &m.constraints {
            if s.expr(c)? != Some(true) {
                continue 'next;
            }
        }
        count += 1;
    }
    Ok(count.into())
}

/// Pigeons into holes: each pigeon somewhere, at most one per hole.
pub fn pigeonhole(pigeons: u32, holes: u32) -> PbFormula {
    let v = |p: u32, h: u32| Var::new(p * holes + h + 1);
    let mut f = PbFormula::new(pigeons * holes);
    for p in 0..pigeons {
        let terms: Vec<(i64, _)> = (0..holes).map(|h| (1, v(p, h).pos())).collect();
        f.add_raw(&RawConstraint::from_ints(&terms, Relation::Ge, 1)).expect("declared vars");
    }
    for h in 0..holes {
        let terms: Vec<(i64, _)> = (0..pigeons).map(|p| (1, v(p, h).pos())).collect();
        f.add_raw(&RawConstraint::from_ints(&terms, Relation::Le, 1)).expect("declared vars");
    }
    f
}

/// An unsatisfiable pigeonhole core sharing constraints with `width` pairs of
/// heavily weighted padding variables.
pub fn hidden_core(width: u32, pigeons: u32) -> PbFormula {
    let holes = pigeons - 1;
    let core = pigeonhole(pigeons, holes);
    let offset = core.num_vars();
    let n = offset + 2 * width;
    let mut f = PbFormula::new(n);
    for c in core.constraints() {
        let terms: Vec<(BigRational, _)> =
            c.terms().iter().map(|(k, l)| (BigRational::from_integer(k.clone()), *l)).collect();
        let rel = match c.relation() {
            crate::pb::NormRelation::Ge => Relation::Ge,
            crate::pb::NormRelation::Ne => Relation::Ne,
        };
        f.add_raw(&RawConstraint::new(terms, rel, BigRational::from_integer(c.degree().clone()))).expect("declared vars");
    }
    // heavy weights on the padding make the score heuristic branch there first
    let mut link: Vec<(i64, _)> = (0..2 * width).map(|i| (5, Var::new(offset + i + 1).pos())).collect();
    link.push((1, Var::new(1).pos()));
    f.add_raw(&RawConstraint::from_ints(&link, Relation::Ge, 1)).expect("declared vars");
    for i in 0..width {
        let (a, b) = (Var::new(offset + 2 * i + 1), Var::new(offset + 2 * i + 2));
        let terms = [(5, a.pos()), (5, b.pos()), (1, Var::new(1 + i % offset).pos())];
        f.add_raw(&RawConstraint::from_ints(&terms, Relation::Ge, 5)).expect("declared vars");
    }
    f
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum Profile {
    /// Tree groups and propositional cross-tree constraints.
    #[default]
    Basic,
    /// One group cardinality and possibly a feature cardinality.
    Cardinality,
    /// Attributes with sums, products, quotients and averages.
    Attributes,
    All,
}

impl std::str::FromStr for Profile {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "basic" => Ok(Profile::Basic),
            "cardinality" => Ok(Profile::Cardinality),
            "attributes" => Ok(Profile::Attributes),
            "all" => Ok(Profile::All),
            other => Err(format!("unknown profile `{other}` (basic, cardinality, attributes, all)")),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct GenConfig {
    pub seed: u64,
    pub profile: Profile,
    /// Features before expansion, root included.
    pub features: RangeInclusive<usize>,
    pub max_expanded: usize,
    pub card_upper: u32,
    pub attr_values: RangeInclusive<i64>,
    pub constraints: RangeInclusive<usize>,
    /// Target constants are drawn around this share of the attainable total.
    pub expected_share: f64,
    pub vars: RangeInclusive<u32>,
    pub pb_constraints: RangeInclusive<usize>,
    pub max_terms: usize,
    pub max_coef: i64,
    /// Allow halves among pseudo-Boolean coefficients.
    pub fractions: bool,
}

impl Default for GenConfig {
    fn default() -> Self {
        GenConfig {
            seed: 1,
            profile: Profile::All,
            features: 4..=8,
            max_expanded: 12,
            card_upper: 3,
            attr_values: 0..=6,
            constraints: 1..=3,
            expected_share: 0.5,
            vars: 1..=12,
            pb_constraints: 1..=8,
            max_terms: 5,
            max_coef: 8,
            fractions: false,
        }
    }
}

impl GenConfig {
    pub fn with_seed(seed: u64) -> Self {
        GenConfig { seed, ..GenConfig::default() }
    }

    pub fn check(&self) -> Result<(), String> {
        let empty = |lo: i64, hi: i64, what: &str| if lo > hi { Err(format!("empty {what} range")) } else { Ok(()) };
        empty(*self.features.start() as i64, *self.features.end() as i64, "feature")?;
        empty(*self.attr_values.start(), *self.attr_values.end(), "attribute value")?;
        empty(*self.constraints.start() as i64, *self.constraints.end() as i64, "constraint")?;
        empty(*self.vars.start() as i64, *self.vars.end() as i64, "variable")?;
        empty(*self.pb_constraints.start() as i64, *self.pb_constraints.end() as i64, "pb constraint")?;
        if *self.features.start() == 0 || *self.vars.start() == 0 {
            return Err("need at least one feature and one variable".into());
        }
        if self.max_terms == 0 || self.max_coef <= 0 || self.card_upper < 2 {
            return Err("max_terms, max_coef and card_upper must be positive (card_upper at least 2)".into());
        }
        if *self.features.start() > self.max_expanded {
            return Err("max_expanded below the feature range".into());
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct PbInstance {
    pub num_vars: u32,
    pub constraints: Vec<RawConstraint>,
}

impl PbInstance {
    pub fn formula(&self) -> Result<PbFormula, PbError> {
        let mut f = PbFormula::new(self.num_vars);
        for c in &self.constraints {
            f.add_raw(c)?;
        }
        Ok(f)
    }
}

/// One random raw constraint over variables `1..=num_vars`.
pub fn random_raw(rng: &mut impl Rng, num_vars: u32, cfg: &GenConfig) -> RawConstraint {
    let mut vars: Vec<u32> = (1..=num_vars).collect();
    vars.shuffle(rng);
    let k = rng.gen_range(1..=cfg.max_terms.min(num_vars as usize));
    let mut terms = Vec::new();
    let mut total = 0i64;
    for &v in &vars[..k] {
        let mut c = rng.gen_range(1..=cfg.max_coef);
        total += c;
        if rng.gen_bool(0.35) {
            c = -c;
        }
        let coef = if cfg.fractions && rng.gen_bool(0.2) {
            BigRational::new(c.into(), 2.into())
        } else {
            BigRational::from_integer(c.into())
        };
        terms.push((coef, Var::new(v).lit(rng.gen_bool(0.7))));
    }
    // an occasional repeated variable exercises aggregation
    if k >= 2 && rng.gen_bool(0.1) {
        let (_, l) = terms[0].clone();
        terms.push((BigRational::from_integer(rng.gen_range(1..=cfg.max_coef).into()), l));
    }
    let relation = *Relation::ALL.choose(rng).expect("six relations");
    let degree = BigRational::from_integer(rng.gen_range(-total / 2..=total).into());
    RawConstraint::new(terms, relation, degree)
}

pub fn gen_random_pb(cfg: &GenConfig) -> PbInstance {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let num_vars = rng.gen_range(cfg.vars.clone());
    let m = rng.gen_range(cfg.pb_constraints.clone());
    let constraints = (0..m).map(|_| random_raw(&mut rng, num_vars, cfg)).collect();
    PbInstance { num_vars, constraints }
}

struct Draft {
    groups: Vec<Vec<(GroupKind, Vec<usize>)>>,
    cardinality: Vec<Option<(u32, u32)>>,
    attrs: Vec<BTreeMap<String, BigRational>>,
}

impl Draft {
    fn name(i: usize) -> String {
        if i == 0 {
            "Root".to_string()
        } else {
            format!("F{i}")
        }
    }

    fn build(&self, i: usize) -> Feature {
        let mut f = Feature::new(Draft::name(i));
        f.cardinality = self.cardinality[i];
        f.attributes = self.attrs[i].clone();
        for (kind, kids) in &self.groups[i] {
            f = f.with_group(*kind, kids.iter().map(|&k| self.build(k)).collect());
        }
        f
    }
}

fn int(v: i64) -> BigRational {
    BigRational::from_integer(BigInt::from(v))
}

fn basic_kind(rng: &mut impl Rng, len: usize) -> GroupKind {
    match rng.gen_range(0..4) {
        0 => GroupKind::Optional,
        1 => GroupKind::Mandatory,
        2 if len >= 2 => GroupKind::Or,
        3 if len >= 2 => GroupKind::Alternative,
        _ => GroupKind::Optional,
    }
}

fn card_kind(rng: &mut impl Rng, len: usize, upper: u32) -> GroupKind {
    let b = rng.gen_range(1..=(len as u32).min(upper).max(1));
    let a = rng.gen_range(0..=b);
    let a = if a == b && b > 1 { b - 1 } else { a };
    GroupKind::Card(a, b)
}

fn random_relation(rng: &mut impl Rng) -> Relation {
    *Relation::ALL.choose(rng).expect("six relations")
}

fn boolean_constraint(rng: &mut impl Rng, n: usize) -> Expr {
    let mut pick = || Expr::feature(&Draft::name(rng.gen_range(1..n)));
    let (a, b, c) = (pick(), pick(), pick());
    match rng.gen_range(0..5) {
        0 => Expr::implies(a, b),
        1 => Expr::not(Expr::and(a, b)),
        2 => Expr::or(a, Expr::not(b)),
        3 => Expr::iff(a, b),
        _ => Expr::implies(Expr::and(a, b), c),
    }
}

fn arith_constraint(rng: &mut impl Rng, d: &Draft, cfg: &GenConfig) -> Option<Expr> {
    let carriers = |attr: &str| -> Vec<usize> { (0..d.attrs.len()).filter(|&i| d.attrs[i].contains_key(attr)).collect() };
    let value = |i: usize, attr: &str| d.attrs[i][attr].to_integer().to_i64().unwrap_or(0).abs();
    let cost = carriers("cost");
    let w = carriers("w");
    if cost.is_empty() {
        return None;
    }
    let total: i64 = cost.iter().map(|&i| value(i, "cost")).sum();
    let attr = |i: usize, a: &str| Term::attr(&Draft::name(i), a);
    let share = |rng: &mut ChaCha8Rng, max: i64| -> i64 { (cfg.expected_share * max as f64).round() as i64 + rng.gen_range(-1..=1) };
    let mut local = ChaCha8Rng::seed_from_u64(rng.gen());
    let r = &mut local;
    let f = *cost.choose(r).expect("non-empty");
    let g = *cost.choose(r).expect("non-empty");
    let (lhs, max) = match r.gen_range(0..6) {
        0 => (Term::Sum("cost".into()), total),
        1 => (Term::add(attr(f, "cost"), attr(g, "cost")), value(f, "cost") + value(g, "cost")),
        2 if !w.is_empty() => {
            let h = *w.choose(r).expect("non-empty");
            (Term::mul(attr(f, "cost"), attr(h, "w")), value(f, "cost") * value(h, "w"))
        }
        3 if !w.is_empty() => {
            let h1 = *w.choose(r).expect("non-empty");
            let h2 = *w.choose(r).expect("non-empty");
            let k = r.gen_range(0..=3);
            let num = Term::add(attr(f, "cost"), Term::constant(int(k)));
            let den = if h1 == h2 { attr(h1, "w") } else { Term::add(attr(h1, "w"), attr(h2, "w")) };
            (Term::div(num, den), value(f, "cost") + k)
        }
        4 => (Term::Avg("cost".into()), total / cost.len().max(1) as i64),
        _ => (Term::sub(attr(f, "cost"), attr(g, "cost")), value(f, "cost")),
    };
    let c = share(r, max);
    Some(Expr::Cmp(random_relation(r), lhs, Term::constant(int(c))))
}

fn draft_model(rng: &mut ChaCha8Rng, cfg: &GenConfig) -> FeatureModel {
    let p = cfg.profile;
    let n = rng.gen_range(cfg.features.clone()).min(cfg.max_expanded).max(2);
    let mut d = Draft {
        groups: vec![Vec::new(); n],
        cardinality: vec![None; n],
        attrs: vec![BTreeMap::new(); n],
    };
    for i in 1..n {
        let par = rng.gen_range(0..i);
        let gi = if !d.groups[par].is_empty() && rng.gen_bool(0.7) {
            rng.gen_range(0..d.groups[par].len())
        } else {
            d.groups[par].push((GroupKind::Optional, Vec::new()));
            d.groups[par].len() - 1
        };
        d.groups[par][gi].1.push(i);
    }
    let mut slots: Vec<(usize, usize)> = Vec::new();
    for i in 0..n {
        for gi in 0..d.groups[i].len() {
            slots.push((i, gi));
        }
    }
    for &(i, gi) in &slots {
        let len = d.groups[i][gi].1.len();
        d.groups[i][gi].0 = if p == Profile::All && rng.gen_bool(0.3) {
            card_kind(rng, len, cfg.card_upper)
        } else {
            basic_kind(rng, len)
        };
    }
    if p == Profile::Cardinality {
        let &(i, gi) = slots.choose(rng).expect("at least one group");
        let len = d.groups[i][gi].1.len();
        d.groups[i][gi].0 = card_kind(rng, len, cfg.card_upper);
    }
    if matches!(p, Profile::Cardinality | Profile::All) {
        let tries = if p == Profile::All { 2 } else { 1 };
        for _ in 0..tries {
            if !rng.gen_bool(0.6) {
                continue;
            }
            let f = rng.gen_range(1..n);
            let b = rng.gen_range(2..=cfg.card_upper);
            let a = rng.gen_range(0..b);
            d.cardinality[f] = Some((a, b));
            let m = FeatureModel::new(d.build(0));
            if expanded_size(&m) > cfg.max_expanded {
                d.cardinality[f] = None;
            }
        }
    }
    if matches!(p, Profile::Attributes | Profile::All) {
        for i in 1..n {
            if rng.gen_bool(0.7) {
                d.attrs[i].insert("cost".into(), int(rng.gen_range(cfg.attr_values.clone())));
            }
            if rng.gen_bool(0.4) {
                d.attrs[i].insert("w".into(), int(rng.gen_range(cfg.attr_values.clone())));
            }
        }
        if (1..n).all(|i| !d.attrs[i].contains_key("cost")) {
            d.attrs[n - 1].insert("cost".into(), int(*cfg.attr_values.end()));
        }
    }
    let mut m = FeatureModel::new(d.build(0));
    let k = rng.gen_range(cfg.constraints.clone());
    for _ in 0..k {
        let arith = matches!(p, Profile::Attributes | Profile::All) && rng.gen_bool(0.7);
        let e = if arith { arith_constraint(rng, &d, cfg) } else { None };
        let e = match e {
            Some(e) if p == Profile::All && rng.gen_bool(0.3) => Expr::implies(Expr::feature(&Draft::name(rng.gen_range(1..n))), e),
            Some(e) => e,
            None => boolean_constraint(rng, n),
        };
        m.constraints.push(e);
    }
    m
}

/// A structurally valid random model, deterministic in `cfg.seed`.
pub fn gen_random_fm(cfg: &GenConfig) -> FeatureModel {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    loop {
        let m = draft_model(&mut rng, cfg);
        if validate(&m).is_empty() && expanded_size(&m) <= cfg.max_expanded {
            return m;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures;
    use crate::fm::parse_uvl;
    use crate::opb::parse_opb;

    #[test]
    fn pb_examples() {
        let f = parse_opb(fixtures::SMALL_OPB).unwrap();
        assert_eq!(brute_count_pb(&f).unwrap(), BigUint::from(3u32));
        assert_eq!(brute_count_pb(&PbFormula::new(4)).unwrap(), BigUint::from(16u32));
        let mut f = PbFormula::new(2);
        f.add_raw(&RawConstraint::from_ints(&[(1, Var::new(1).pos()), (1, Var::new(2).pos())], Relation::Ne, 1)).unwrap();
        assert_eq!(brute_count_pb(&f).unwrap(), BigUint::from(2u32));
        assert_eq!(brute_count_pb(&PbFormula::new(26)).unwrap_err(), OracleError::TooManyVars(26));
    }

    #[test]
    fn fm_examples() {
        let root = FeatureModel::new(Feature::new("r"));
        assert_eq!(brute_count_fm(&root).unwrap(), BigUint::from(1u32));
        let kids = (0..4).map(|i| Feature::new(format!("c{i}"))).collect();
        let m = FeatureModel::new(Feature::new("r").with_group(GroupKind::Card(2, 3), kids));
        assert_eq!(brute_count_fm(&m).unwrap(), BigUint::from(10u32));
    }

    #[test]
    fn robot_basic_by_hand() {
        // Navigation: Maps optional; Obstacle Detection alternates Camera and Sensor;
        // Cleaning or-group over Vacuum and Mop; Mop forces Water storage.
        let m = parse_uvl(fixtures::ROBOT_BASIC).unwrap();
        let count = brute_count_fm(&m).unwrap();
        assert_eq!(count, BigUint::from(hand_count_robot_basic()));
    }

    fn hand_count_robot_basic() -> u64 {
        let m = parse_uvl(fixtures::ROBOT_BASIC).unwrap();
        let names: Vec<String> = m.features().iter().map(|f| f.name.clone()).collect();
        let n = names.len();
        let idx = |s: &str| names.iter().position(|x| x == s).unwrap();
        let mut count = 0;
        for bits in 0..1u32 << n {
            let on = |s: &str| bits >> idx(s) & 1 == 1;
            let mut ok = on(&m.root.name);
            for f in m.features() {
                for g in &f.groups {
                    let k = g.children.iter().filter(|c| on(&c.name)).count();
                    if !on(&f.name) {
                        ok &= k == 0;
                        continue;
                    }
                    ok &= match g.kind {
                        GroupKind::Optional => true,
                        GroupKind::Mandatory => k == g.children.len(),
                        GroupKind::Or => k >= 1,
                        GroupKind::Alternative => k == 1,
                        GroupKind::Card(a, b) => k >= a as usize && k <= b as usize,
                    };
                }
            }
            ok &= !(on("AI") || on("Maps")) || on("Camera");
            ok &= !on("Mop Mode") || on("Water storage");
            count += u64::from(ok);
        }
        count
    }

    #[test]
    fn division_fixture() {
        let m = parse_uvl(fixtures::DIVISION).unwrap();
        assert_eq!(brute_count_fm(&m).unwrap(), BigUint::from(5u32));
    }

    #[test]
    fn feature_cardinality_expansion() {
        // r with optional x[1..2]: cr takes x's place, then one or two clones
        let m = FeatureModel::new(Feature::new("r").with_group(GroupKind::Optional, vec![Feature::new("x").with_cardinality(1, 2)]));
        assert_eq!(expanded_size(&m), 4);
        assert_eq!(brute_count_fm(&m).unwrap(), BigUint::from(4u32));
    }

    #[test]
    fn generators_are_deterministic_and_valid() {
        let cfg = GenConfig { features: 8..=8, ..GenConfig::with_seed(1) };
        let a = gen_random_fm(&cfg);
        assert_eq!(a, gen_random_fm(&cfg));
        assert!(validate(&a).is_empty());
        let mut seen = std::collections::BTreeSet::new();
        for seed in 1..=100 {
            seen.insert(gen_random_fm(&GenConfig::with_seed(seed)).to_string());
        }
        assert_eq!(seen.len(), 100);
        let pbs: std::collections::BTreeSet<String> =
            (1..=100).map(|s| format!("{:?}", gen_random_pb(&GenConfig::with_seed(s)))).collect();
        assert_eq!(pbs.len(), 100);
    }

    #[test]
    fn cardinality_profile_has_one_card_group() {
        for seed in 0..50 {
            let m = gen_random_fm(&GenConfig { profile: Profile::Cardinality, ..GenConfig::with_seed(seed) });
            let cards = m.features().iter().flat_map(|f| &f.groups).filter(|g| matches!(g.kind, GroupKind::Card(..))).count();
            assert_eq!(cards, 1, "{m}");
        }
    }

    #[test]
    fn pigeonhole_is_unsat() {
        assert_eq!(brute_count_pb(&pigeonhole(3, 2)).unwrap(), BigUint::zero());
        assert_eq!(brute_count_pb(&pigeonhole(2, 2)).unwrap(), BigUint::from(2u32));
        assert_eq!(brute_count_pb(&hidden_core(2, 3)).unwrap(), BigUint::zero());
    }
}
