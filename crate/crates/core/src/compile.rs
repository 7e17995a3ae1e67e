//! Exhaustive DPLL compilation of pseudo-Boolean formulas into d-DNNF.

use std::cmp::Reverse;
use std::collections::{BinaryHeap, HashMap};
use std::fmt::Debug;
use std::hash::Hash;
use std::ops::{AddAssign, Sub, SubAssign};
use std::time::{Duration, Instant};

use num_bigint::{BigInt, BigUint};
use num_traits::{Signed, ToPrimitive, Zero};
use serde::Serialize;
use thiserror::Error;

use crate::ddnnf::{Builder, Dnnf, DnnfError, NodeId};
use crate::pb::{Lit, NormRelation, PbFormula, Var};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum Heuristic {
    /// Prefer variables crossing a bisection of large components, then score.
    #[default]
    Cut,
    Score,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CompileOptions {
    pub cache: bool,
    pub learning: bool,
    pub heuristic: Heuristic,
    pub timeout: Option<Duration>,
    pub cache_limit: usize,
    pub learned_limit: usize,
    /// Components with more active constraints than this are bisected.
    pub cut_threshold: usize,
}

impl Default for CompileOptions {
    fn default() -> Self {
        CompileOptions {
            cache: true,
            learning: true,
            heuristic: Heuristic::Cut,
            timeout: None,
            cache_limit: 1 << 20,
            learned_limit: 100_000,
            cut_threshold: 16,
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize)]
pub struct CompileStats {
    pub decisions: u64,
    pub conflicts: u64,
    pub propagations: u64,
    pub cache_hits: u64,
    pub cache_entries: u64,
    pub learned: u64,
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum CompileError {
    #[error("compilation timed out")]
    Timeout,
    #[error(transparent)]
    Dnnf(#[from] DnnfError),
}

/// Compiles with default options.
pub fn compile(f: &PbFormula) -> Dnnf {
    compile_with(f, &CompileOptions { timeout: None, ..CompileOptions::default() })
        .expect("no deadline")
        .0
}

pub fn compile_with(f: &PbFormula, opts: &CompileOptions) -> Result<(Dnnf, CompileStats), CompileError> {
    if fits_i64(f) {
        Solver::<i64>::new(f, opts).run()
    } else {
        Solver::<BigInt>::new(f, opts).run()
    }
}

/// Model count over all variables of `f`.
pub fn count_direct(f: &PbFormula) -> BigUint {
    compile(f).count().expect("compiled circuits use declared variables only")
}

pub fn count_with(f: &PbFormula, opts: &CompileOptions) -> Result<BigUint, CompileError> {
    let (d, _) = compile_with(f, opts)?;
    Ok(d.count()?)
}

fn fits_i64(f: &PbFormula) -> bool {
    let limit = BigInt::from(1i64 << 60);
    f.constraints().iter().all(|c| c.coefficient_sum() + c.degree().abs() < limit)
}

trait Weight: Clone + Ord + Hash + Debug + Zero + Sub<Output = Self> + for<'a> AddAssign<&'a Self> + for<'a> SubAssign<&'a Self> {
    fn from_big(b: &BigInt) -> Self;
    fn as_f64(&self) -> f64;
}

impl Weight for i64 {
    fn from_big(b: &BigInt) -> Self {
        b.to_i64().expect("checked by fits_i64")
    }

    fn as_f64(&self) -> f64 {
        *self as f64
    }
}

impl Weight for BigInt {
    fn from_big(b: &BigInt) -> Self {
        b.clone()
    }

    fn as_f64(&self) -> f64 {
        self.to_f64().unwrap_or(f64::MAX)
    }
}

struct Con<W> {
    lits: Vec<Lit>,
    coefs: Vec<W>,
    degree: W,
    ne: bool,
    learned: bool,
    max_coef: W,
    true_sum: W,
    unassigned: W,
}

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
struct Key<W> {
    vars: Vec<u32>,
    cons: Vec<(u32, W)>,
}

#[derive(Clone, Debug)]
struct Comp {
    vars: Vec<Var>,
    cons: Vec<usize>,
}

enum Frame {
    /// Deciding `var` for a component; `hi` is set once the positive branch is done.
    Decide { comp: Comp, var: Var, hi: Option<NodeId> },
    /// Conjunction of a branch: fixed literals plus sub-components still pending.
    Split { children: Vec<NodeId>, pending: Vec<Comp>, mark: usize, uses: u64, undo: bool },
}

struct Solver<'o, W> {
    opts: &'o CompileOptions,
    num_vars: u32,
    unsat: bool,
    cons: Vec<Con<W>>,
    originals: usize,
    occ: Vec<Vec<(usize, usize)>>,
    value: Vec<Option<bool>>,
    level: Vec<u32>,
    reason: Vec<Option<usize>>,
    trail_pos: Vec<usize>,
    trail: Vec<Lit>,
    trail_lim: Vec<usize>,
    qhead: usize,
    bump: Vec<f64>,
    cache: HashMap<Key<W>, NodeId>,
    cache_log: Vec<Key<W>>,
    builder: Builder,
    stats: CompileStats,
    deadline: Option<Instant>,
    local: Vec<usize>,
    /// Conflicts and implications coming from learned clauses.
    learned_uses: u64,
}

impl<'o, W: Weight> Solver<'o, W> {
    fn new(f: &PbFormula, opts: &'o CompileOptions) -> Self {
        let n = f.num_vars() as usize;
        let mut s = Solver {
            opts,
            num_vars: f.num_vars(),
            unsat: f.is_unsat(),
            cons: Vec::new(),
            originals: f.constraints().len(),
            occ: vec![Vec::new(); n + 1],
            value: vec![None; n + 1],
            level: vec![0; n + 1],
            reason: vec![None; n + 1],
            trail_pos: vec![0; n + 1],
            trail: Vec::new(),
            trail_lim: Vec::new(),
            qhead: 0,
            bump: vec![0.0; n + 1],
            cache: HashMap::new(),
            cache_log: Vec::new(),
            builder: Builder::new(),
            stats: CompileStats::default(),
            deadline: opts.timeout.map(|t| Instant::now() + t),
            local: vec![0; n + 1],
            learned_uses: 0,
        };
        for c in f.constraints() {
            let lits: Vec<Lit> = c.terms().iter().map(|(_, l)| *l).collect();
            let coefs: Vec<W> = c.terms().iter().map(|(k, _)| W::from_big(k)).collect();
            s.push_con(lits, coefs, W::from_big(c.degree()), c.relation() == NormRelation::Ne, false);
        }
        s
    }

    fn push_con(&mut self, lits: Vec<Lit>, coefs: Vec<W>, degree: W, ne: bool, learned: bool) -> usize {
        let id = self.cons.len();
        let mut true_sum = W::zero();
        let mut unassigned = W::zero();
        let mut max_coef = W::zero();
        for (i, (l, k)) in lits.iter().zip(&coefs).enumerate() {
            let v = l.var().index() as usize;
            self.occ[v].push((id, i));
            match self.value[v] {
                // only assignments already propagated are reflected in counters
                Some(val) if self.trail_pos[v] < self.qhead => {
                    if l.eval(val) {
                        true_sum += k;
                    }
                }
                _ => unassigned += k,
            }
            if *k > max_coef {
                max_coef = k.clone();
            }
        }
        self.cons.push(Con { lits, coefs, degree, ne, learned, max_coef, true_sum, unassigned });
        id
    }

    fn val(&self, l: Lit) -> Option<bool> {
        self.value[l.var().index() as usize].map(|v| l.eval(v))
    }

    fn assign(&mut self, l: Lit, reason: Option<usize>) {
        let v = l.var().index() as usize;
        self.value[v] = Some(l.is_positive());
        self.level[v] = self.trail_lim.len() as u32;
        self.reason[v] = reason;
        self.trail_pos[v] = self.trail.len();
        self.trail.push(l);
    }

    fn active(&self, c: usize) -> bool {
        let con = &self.cons[c];
        if con.ne {
            let fixed = &con.true_sum;
            !(fixed > &con.degree || fixed.clone() + con.unassigned.clone() < con.degree.clone()) && !con.unassigned.is_zero()
        } else {
            con.true_sum < con.degree
        }
    }

    /// Unit propagation to fixpoint. Learned clauses only imply literals on
    /// variables inside `scope`.
    fn propagate(&mut self, scope: Option<&[Var]>) -> Result<(), usize> {
        while self.qhead < self.trail.len() {
            let lit = self.trail[self.qhead];
            self.qhead += 1;
            self.stats.propagations += 1;
            let v = lit.var().index() as usize;
            for &(c, i) in &self.occ[v] {
                let con = &mut self.cons[c];
                let k = &con.coefs[i];
                con.unassigned -= k;
                if con.lits[i] == lit {
                    con.true_sum += k;
                }
            }
            for oi in 0..self.occ[v].len() {
                let (c, i) = self.occ[v][oi];
                let con = &self.cons[c];
                if con.ne {
                    if con.unassigned.is_zero() && con.true_sum == con.degree {
                        self.learned_uses += u64::from(con.learned);
                        return Err(c);
                    }
                    continue;
                }
                if con.lits[i] == lit || con.true_sum >= con.degree {
                    continue;
                }
                let total = con.true_sum.clone() + con.unassigned.clone();
                if total < con.degree {
                    self.learned_uses += u64::from(con.learned);
                    return Err(c);
                }
                let slack = total - con.degree.clone();
                if slack >= con.max_coef {
                    continue;
                }
                let mut implied = Vec::new();
                for (j, l) in con.lits.iter().enumerate() {
                    if con.coefs[j] > slack && self.value[l.var().index() as usize].is_none() {
                        if con.learned {
                            if let Some(sc) = scope {
                                if sc.binary_search(&l.var()).is_err() {
                                    continue;
                                }
                            }
                        }
                        implied.push(*l);
                    }
                }
                let learned = con.learned;
                for l in implied {
                    if self.val(l).is_none() {
                        self.learned_uses += u64::from(learned);
                        self.assign(l, Some(c));
                    }
                }
            }
        }
        Ok(())
    }

    fn undo_to(&mut self, lim: usize) {
        while self.trail.len() > lim {
            let lit = self.trail.pop().expect("non-empty trail");
            let v = lit.var().index() as usize;
            if self.trail.len() < self.qhead {
                for &(c, i) in &self.occ[v] {
                    let con = &mut self.cons[c];
                    let k = &con.coefs[i];
                    con.unassigned += k;
                    if con.lits[i] == lit {
                        con.true_sum -= k;
                    }
                }
            }
            self.value[v] = None;
            self.reason[v] = None;
        }
        self.qhead = self.qhead.min(lim);
    }

    fn pop_level(&mut self) {
        let lim = self.trail_lim.pop().expect("a decision level");
        self.undo_to(lim);
    }

    /// Decisions the conflict depends on, found through implication reasons.
    fn analyze(&mut self, conflict: usize) {
        self.stats.conflicts += 1;
        if !self.opts.learning || self.stats.learned as usize >= self.opts.learned_limit {
            return;
        }
        let mut seen = vec![false; self.num_vars as usize + 1];
        let mut stack: Vec<usize> = Vec::new();
        let visit = |c: usize, before: usize, s: &Self, seen: &mut Vec<bool>, stack: &mut Vec<usize>| {
            for l in &s.cons[c].lits {
                let v = l.var().index() as usize;
                if s.value[v].is_some() && s.trail_pos[v] < before && s.level[v] > 0 && !seen[v] {
                    seen[v] = true;
                    stack.push(v);
                }
            }
        };
        visit(conflict, usize::MAX, self, &mut seen, &mut stack);
        let mut decisions = Vec::new();
        while let Some(v) = stack.pop() {
            match self.reason[v] {
                None => decisions.push(v),
                Some(r) => visit(r, self.trail_pos[v], self, &mut seen, &mut stack),
            }
        }
        if decisions.is_empty() {
            return;
        }
        decisions.sort_unstable();
        let lits: Vec<Lit> = decisions
            .iter()
            .map(|&v| !Lit::new(Var::new(v as u32), self.value[v].expect("assigned")))
            .collect();
        for &v in &decisions {
            self.bump[v] += 1.0;
        }
        let ones = vec![W::from_big(&BigInt::from(1)); lits.len()];
        self.push_con(lits, ones, W::from_big(&BigInt::from(1)), false, true);
        self.stats.learned += 1;
    }

    /// Splits the unassigned part of `parent` into connected components.
    fn components(&mut self, parent: &Comp) -> Vec<Comp> {
        for (i, v) in parent.vars.iter().enumerate() {
            self.local[v.index() as usize] = i;
        }
        let mut dsu: Vec<usize> = (0..parent.vars.len()).collect();
        fn find(d: &mut [usize], mut x: usize) -> usize {
            while d[x] != x {
                d[x] = d[d[x]];
                x = d[x];
            }
            x
        }
        let mut in_use = vec![false; parent.vars.len()];
        let mut anchored: Vec<(usize, usize)> = Vec::new();
        for &c in &parent.cons {
            if !self.active(c) {
                continue;
            }
            let mut first: Option<usize> = None;
            for l in &self.cons[c].lits {
                let v = l.var().index() as usize;
                if self.value[v].is_some() {
                    continue;
                }
                let x = self.local[v];
                in_use[x] = true;
                match first {
                    None => first = Some(x),
                    Some(f) => {
                        let (a, b) = (find(&mut dsu, f), find(&mut dsu, x));
                        if a != b {
                            dsu[a.max(b)] = a.min(b);
                        }
                    }
                }
            }
            if let Some(f) = first {
                anchored.push((c, f));
            }
        }
        let mut slot: HashMap<usize, usize> = HashMap::new();
        let mut comps: Vec<Comp> = Vec::new();
        for (i, v) in parent.vars.iter().enumerate() {
            if !in_use[i] {
                continue;
            }
            let r = find(&mut dsu, i);
            let s = *slot.entry(r).or_insert_with(|| {
                comps.push(Comp { vars: Vec::new(), cons: Vec::new() });
                comps.len() - 1
            });
            comps[s].vars.push(*v);
        }
        for (c, f) in anchored {
            let r = find(&mut dsu, f);
            comps[slot[&r]].cons.push(c);
        }
        comps
    }

    fn key(&self, comp: &Comp) -> Key<W> {
        Key {
            vars: comp.vars.iter().map(|v| v.index()).collect(),
            cons: comp
                .cons
                .iter()
                .map(|&c| (c as u32, self.cons[c].degree.clone() - self.cons[c].true_sum.clone()))
                .collect(),
        }
    }

    fn scores(&self, comp: &Comp) -> HashMap<u32, f64> {
        let mut score: HashMap<u32, f64> = comp.vars.iter().map(|v| (v.index(), self.bump[v.index() as usize])).collect();
        for &c in &comp.cons {
            let con = &self.cons[c];
            let rd = (con.degree.clone() - con.true_sum.clone()).as_f64().max(1.0);
            for (l, k) in con.lits.iter().zip(&con.coefs) {
                if self.value[l.var().index() as usize].is_none() {
                    *score.entry(l.var().index()).or_insert(0.0) += k.as_f64() / rd;
                }
            }
        }
        score
    }

    /// Variables crossing a greedy balanced bisection of the constraint hypergraph.
    fn cut_candidates(&mut self, comp: &Comp) -> Option<Vec<Var>> {
        let m = comp.cons.len();
        if m <= self.opts.cut_threshold {
            return None;
        }
        for (i, v) in comp.vars.iter().enumerate() {
            self.local[v.index() as usize] = i;
        }
        let mut edges: Vec<Vec<usize>> = vec![Vec::new(); comp.vars.len()];
        let mut members: Vec<Vec<usize>> = vec![Vec::new(); m];
        for (ci, &c) in comp.cons.iter().enumerate() {
            for l in &self.cons[c].lits {
                let v = l.var().index() as usize;
                if self.value[v].is_none() {
                    let x = self.local[v];
                    edges[x].push(ci);
                    members[ci].push(x);
                }
            }
        }
        let mut in_a = vec![false; m];
        let mut touch = vec![0usize; comp.vars.len()];
        let cost = |c: usize, touch: &[usize]| -> i64 {
            members[c]
                .iter()
                .map(|&x| {
                    if touch[x] == 0 {
                        i64::from(edges[x].len() > 1)
                    } else if touch[x] + 1 == edges[x].len() {
                        -1
                    } else {
                        0
                    }
                })
                .sum()
        };
        let mut heap: BinaryHeap<Reverse<(i64, usize)>> = BinaryHeap::new();
        let mut size = 0;
        let mut next_seed = 0;
        while size < m / 2 {
            let pick = loop {
                match heap.pop() {
                    Some(Reverse((k, c))) => {
                        if in_a[c] {
                            continue;
                        }
                        let now = cost(c, &touch);
                        if now != k {
                            heap.push(Reverse((now, c)));
                            continue;
                        }
                        break c;
                    }
                    None => {
                        while in_a[next_seed] {
                            next_seed += 1;
                        }
                        break next_seed;
                    }
                }
            };
            in_a[pick] = true;
            size += 1;
            for &x in &members[pick] {
                touch[x] += 1;
                for &c2 in &edges[x] {
                    if !in_a[c2] {
                        heap.push(Reverse((cost(c2, &touch), c2)));
                    }
                }
            }
        }
        let crossing: Vec<Var> = comp
            .vars
            .iter()
            .enumerate()
            .filter(|(x, _)| touch[*x] > 0 && touch[*x] < edges[*x].len())
            .map(|(_, v)| *v)
            .collect();
        (!crossing.is_empty()).then_some(crossing)
    }

    fn choose(&mut self, comp: &Comp) -> Var {
        let candidates = match self.opts.heuristic {
            Heuristic::Cut => self.cut_candidates(comp),
            Heuristic::Score => None,
        };
        let candidates = candidates.unwrap_or_else(|| comp.vars.clone());
        let scores = self.scores(comp);
        let mut best = candidates[0];
        let mut best_score = f64::NEG_INFINITY;
        for v in candidates {
            let s = scores.get(&v.index()).copied().unwrap_or(0.0);
            if s > best_score {
                best = v;
                best_score = s;
            }
        }
        best
    }

    /// Assigns `lit` at a new level; on success returns the split frame of the branch.
    fn branch(&mut self, comp: &Comp, lit: Lit) -> Option<Frame> {
        self.trail_lim.push(self.trail.len());
        let start = self.trail.len();
        self.assign(lit, None);
        if let Err(c) = self.propagate(Some(&comp.vars)) {
            self.analyze(c);
            self.pop_level();
            return None;
        }
        let children: Vec<NodeId> = self.trail[start..].iter().map(|&l| self.builder.lit(l)).collect();
        let mut pending = self.components(comp);
        pending.reverse();
        Some(Frame::Split { children, pending, mark: self.cache_log.len(), uses: self.learned_uses, undo: true })
    }

    fn lookup(&mut self, comp: &Comp) -> Option<NodeId> {
        if !self.opts.cache {
            return None;
        }
        let hit = self.cache.get(&self.key(comp)).copied();
        if hit.is_some() {
            self.stats.cache_hits += 1;
        }
        hit
    }

    fn store(&mut self, comp: &Comp, node: NodeId) {
        if !self.opts.cache || self.cache.len() >= self.opts.cache_limit {
            return;
        }
        let key = self.key(comp);
        if self.cache.insert(key.clone(), node).is_none() {
            self.cache_log.push(key);
        }
    }

    fn invalidate_since(&mut self, mark: usize) {
        for key in self.cache_log.drain(mark..) {
            self.cache.remove(&key);
        }
    }

    /// Starts work on a component: either a cached result or a new decision frame.
    fn open(&mut self, comp: Comp, stack: &mut Vec<Frame>) -> Result<Option<NodeId>, CompileError> {
        if let Some(hit) = self.lookup(&comp) {
            return Ok(Some(hit));
        }
        if let Some(d) = self.deadline {
            if Instant::now() >= d {
                return Err(CompileError::Timeout);
            }
        }
        self.stats.decisions += 1;
        let var = self.choose(&comp);
        let split = self.branch(&comp, var.pos());
        stack.push(Frame::Decide { comp, var, hi: None });
        Ok(match split {
            Some(f) => {
                stack.push(f);
                None
            }
            None => Some(Builder::FALSE),
        })
    }

    fn run(mut self) -> Result<(Dnnf, CompileStats), CompileError> {
        if self.unsat {
            return Ok((self.builder.finish(Builder::FALSE, self.num_vars), self.stats));
        }
        for c in 0..self.originals {
            let con = &self.cons[c];
            if con.ne || con.max_coef.is_zero() {
                continue;
            }
            let total = con.true_sum.clone() + con.unassigned.clone();
            if total < con.degree {
                return Ok((self.builder.finish(Builder::FALSE, self.num_vars), self.stats));
            }
            let slack = total - con.degree.clone();
            if slack < con.max_coef {
                let implied: Vec<Lit> = con
                    .lits
                    .iter()
                    .zip(&con.coefs)
                    .filter(|(_, k)| **k > slack)
                    .map(|(l, _)| *l)
                    .collect();
                for l in implied {
                    match self.val(l) {
                        None => self.assign(l, Some(c)),
                        Some(true) => {}
                        Some(false) => {
                            return Ok((self.builder.finish(Builder::FALSE, self.num_vars), self.stats));
                        }
                    }
                }
            }
        }
        if self.propagate(None).is_err() {
            self.stats.conflicts += 1;
            return Ok((self.builder.finish(Builder::FALSE, self.num_vars), self.stats));
        }
        let everything = Comp { vars: (1..=self.num_vars).map(Var::new).filter(|v| self.value[v.index() as usize].is_none()).collect(), cons: (0..self.originals).collect() };
        let children: Vec<NodeId> = self.trail.clone().into_iter().map(|l| self.builder.lit(l)).collect();
        let mut pending = self.components(&everything);
        pending.reverse();
        let mut stack = vec![Frame::Split { children, pending, mark: 0, uses: 0, undo: false }];
        let mut result: Option<NodeId> = None;
        loop {
            if let Some(node) = result.take() {
                match stack.last_mut() {
                    None => {
                        self.stats.cache_entries = self.cache.len() as u64;
                        let d = self.builder.finish(node, self.num_vars);
                        return Ok((d, self.stats));
                    }
                    Some(Frame::Split { children, mark, uses, undo, .. }) => {
                        if node == Builder::FALSE {
                            let (mark, undo) = (*mark, *undo);
                            // results that relied on learned clauses may depend on sibling components
                            if self.learned_uses > *uses {
                                self.invalidate_since(mark);
                            }
                            if undo {
                                self.pop_level();
                            }
                            stack.pop();
                            result = Some(Builder::FALSE);
                            continue;
                        }
                        children.push(node);
                    }
                    Some(Frame::Decide { hi, .. }) if hi.is_none() => {
                        *hi = Some(node);
                        let Some(Frame::Decide { comp, var, .. }) = stack.last() else { unreachable!() };
                        let (comp, var) = (comp.clone(), *var);
                        match self.branch(&comp, var.neg()) {
                            Some(f) => stack.push(f),
                            None => result = Some(Builder::FALSE),
                        }
                        continue;
                    }
                    Some(Frame::Decide { .. }) => {
                        let Some(Frame::Decide { comp, var, hi }) = stack.pop() else { unreachable!() };
                        let d = self.builder.decision(var, hi.expect("positive branch done"), node);
                        self.store(&comp, d);
                        result = Some(d);
                        continue;
                    }
                }
            }
            // the top frame is a split that can make progress
            let Some(Frame::Split { pending, .. }) = stack.last_mut() else { unreachable!() };
            match pending.pop() {
                Some(comp) => {
                    result = self.open(comp, &mut stack)?;
                }
                None => {
                    let Some(Frame::Split { children, undo, .. }) = stack.pop() else { unreachable!() };
                    if undo {
                        self.pop_level();
                    }
                    result = Some(self.builder.and(children));
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::opb::parse_opb;
    use crate::pb::{Assignment, RawConstraint, Relation};

    fn brute(f: &PbFormula) -> u64 {
        let n = f.num_vars();
        (0..1u64 << n).filter(|&b| f.evaluate(&Assignment::from_bits(n, b)).unwrap()).count() as u64
    }

    fn all_options() -> Vec<CompileOptions> {
        let mut out = Vec::new();
        for cache in [true, false] {
            for learning in [true, false] {
                for heuristic in [Heuristic::Cut, Heuristic::Score] {
                    out.push(CompileOptions { cache, learning, heuristic, cut_threshold: 1, ..Default::default() });
                }
            }
        }
        out
    }

    #[test]
    fn worked_example() {
        let f = parse_opb(crate::fixtures::SMALL_OPB).unwrap();
        let d = compile(&f);
        assert!(d.validate().is_valid());
        assert_eq!(d.count().unwrap(), BigUint::from(3u32));
        let models: Vec<u64> = d
            .enumerate_models(3, 10)
            .unwrap()
            .iter()
            .map(|a| (1..=3).map(|i| u64::from(a.get(Var::new(i)).unwrap()) << (i - 1)).sum())
            .collect();
        // x y z, x y ~z, x ~y z as bit patterns with x the lowest bit
        let mut expected = vec![0b101, 0b011, 0b111];
        expected.sort();
        let mut got = models.clone();
        got.sort();
        assert_eq!(got, expected);
    }

    #[test]
    fn forced_literal_sits_at_the_root() {
        use crate::ddnnf::Node;
        let f = parse_opb(crate::fixtures::SMALL_OPB).unwrap();
        let d = compile(&f);
        let Node::And(children) = d.node(d.root()) else { panic!("root is {:?}", d.node(d.root())) };
        assert!(children.iter().any(|&c| *d.node(c) == Node::Lit(Var::new(1).pos())));
        assert!(children.iter().any(|&c| matches!(d.node(c), Node::Or { var, .. } if *var == Var::new(2))));
    }

    #[test]
    fn trivial_formulas() {
        let f = PbFormula::new(3);
        assert_eq!(count_direct(&f), BigUint::from(8u32));
        let mut f = PbFormula::new(1);
        f.add_clause(&[Var::new(1).pos()]).unwrap();
        f.add_clause(&[Var::new(1).neg()]).unwrap();
        let d = compile(&f);
        assert_eq!(d.count().unwrap(), BigUint::zero());
        assert!(!d.is_satisfiable().unwrap());
    }

    #[test]
    fn propagation_example() {
        // 3x + 2y + z >= 5 forces x and y
        let mut f = PbFormula::new(3);
        let (x, y, z) = (Var::new(1), Var::new(2), Var::new(3));
        f.add_raw(&RawConstraint::from_ints(&[(3, x.pos()), (2, y.pos()), (1, z.pos())], Relation::Ge, 5)).unwrap();
        let d = compile(&f);
        let (_, stats) = compile_with(&f, &CompileOptions::default()).unwrap();
        assert_eq!(stats.decisions, 0);
        assert_eq!(d.count().unwrap(), BigUint::from(2u32));
    }

    #[test]
    fn not_equal_never_implies() {
        let mut f = PbFormula::new(2);
        f.add_raw(&RawConstraint::from_ints(&[(1, Var::new(1).pos()), (1, Var::new(2).pos())], Relation::Ne, 1)).unwrap();
        assert_eq!(count_direct(&f), BigUint::from(2u32));
    }

    #[test]
    fn satisfied_constraints_do_not_connect() {
        // x + y >= 1 is satisfied once x holds; y and z then only meet in y + z >= 1
        let (x, y, z, w) = (Var::new(1), Var::new(2), Var::new(3), Var::new(4));
        let mut f = PbFormula::new(4);
        f.add_clause(&[x.pos()]).unwrap();
        f.add_clause(&[x.pos(), y.pos()]).unwrap();
        f.add_clause(&[y.pos(), z.pos()]).unwrap();
        f.add_clause(&[w.pos(), y.neg()]).unwrap();
        let d = compile(&f);
        assert!(d.validate().is_valid());
        assert_eq!(d.count().unwrap(), BigUint::from(brute(&f)));
    }

    #[test]
    fn cache_hits_on_equal_residuals() {
        // residual of the chain is the same whichever way a is decided
        let text = "+1 x1 +1 x2 +1 x3 +1 x4 +1 x5 +1 x6 = 3 ;\n";
        let f = parse_opb(text).unwrap();
        let (_, with) = compile_with(&f, &CompileOptions::default()).unwrap();
        let (_, without) = compile_with(&f, &CompileOptions { cache: false, ..Default::default() }).unwrap();
        assert!(with.cache_hits > 0);
        assert_eq!(without.cache_hits, 0);
        assert!(with.decisions < without.decisions);
    }

    #[test]
    fn options_agree_on_small_formulas() {
        let texts = [
            "+2 x1 +1 x2 >= 2 ;\n+1 x2 +1 x3 >= 1 ;\n",
            "+1 x1 +1 x2 +1 x3 +1 x4 = 2 ;\n+1 x1 +1 x3 != 1 ;\n",
            "+3 x1 +2 x2 +2 x3 +1 x4 >= 4 ;\n-1 x1 -1 x4 >= -1 ;\n+1 x2 +1 x5 +1 x6 >= 2 ;\n",
            "+1 x1 +1 x2 >= 1 ;\n-1 x1 -1 x2 >= -1 ;\n+1 x2 +1 x3 >= 1 ;\n-1 x2 -1 x3 >= -1 ;\n+1 x3 +1 x1 >= 1 ;\n-1 x3 -1 x1 >= -1 ;\n",
        ];
        for t in texts {
            let f = parse_opb(t).unwrap();
            let expected = BigUint::from(brute(&f));
            for o in all_options() {
                let (d, _) = compile_with(&f, &o).unwrap();
                assert!(d.validate().is_valid(), "{t} {o:?}");
                assert_eq!(d.count().unwrap(), expected, "{t} {o:?}");
            }
        }
    }

    #[test]
    fn pigeonhole_learning() {
        let f = crate::oracle::pigeonhole(5, 4);
        let (_, on) = compile_with(&f, &CompileOptions::default()).unwrap();
        let (d, off) = compile_with(&f, &CompileOptions { learning: false, ..Default::default() }).unwrap();
        assert_eq!(d.count().unwrap(), BigUint::zero());
        assert!(on.conflicts <= off.conflicts);
    }

    #[test]
    fn big_coefficients() {
        let big = BigInt::from(10).pow(30);
        let f = {
            let mut f = PbFormula::new(3);
            let r = num_rational::BigRational::from_integer(big.clone());
            let terms = vec![(r.clone(), Var::new(1).pos()), (r.clone(), Var::new(2).pos()), (num_rational::BigRational::from_integer(1.into()), Var::new(3).pos())];
            f.add_raw(&RawConstraint::new(terms, Relation::Ge, r + num_rational::BigRational::from_integer(1.into()))).unwrap();
            f
        };
        assert!(!fits_i64(&f));
        assert_eq!(count_direct(&f), BigUint::from(brute(&f)));
    }

    #[test]
    fn timeout() {
        let f = crate::oracle::pigeonhole(9, 8);
        let o = CompileOptions { timeout: Some(Duration::from_millis(1)), learning: false, ..Default::default() };
        assert_eq!(compile_with(&f, &o).unwrap_err(), CompileError::Timeout);
    }
}
