//! d-DNNF circuits: construction, validation, counting and enumeration.

mod d4;

use std::collections::HashMap;
use std::fmt;

use num_bigint::BigUint;
use num_traits::{One, Zero};
use thiserror::Error;

use crate::pb::{Assignment, Lit, Var};

pub use d4::{read_d4, write_d4, D4Error};

pub type NodeId = usize;

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub enum Node {
    True,
    False,
    Lit(Lit),
    And(Vec<NodeId>),
    /// Decision on `var`: `hi` entails the positive literal, `lo` the negative one.
    Or { var: Var, hi: NodeId, lo: NodeId },
}

impl Node {
    pub fn children(&self) -> &[NodeId] {
        match self {
            Node::And(cs) => cs,
            _ => &[],
        }
    }

    fn for_each_child(&self, mut f: impl FnMut(NodeId)) {
        match self {
            Node::And(cs) => cs.iter().copied().for_each(&mut f),
            Node::Or { hi, lo, .. } => {
                f(*hi);
                f(*lo);
            }
            _ => {}
        }
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum DnnfError {
    #[error("node {node} references missing node {child}")]
    BadReference { node: NodeId, child: NodeId },
    #[error("cycle through node {0}")]
    Cycle(NodeId),
    #[error("variable count {n} is below the largest used variable {max_var}")]
    TooFewVars { n: u32, max_var: u32 },
    #[error("enumeration cap must be positive")]
    ZeroCap,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Dnnf {
    nodes: Vec<Node>,
    root: NodeId,
    num_vars: u32,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Violation {
    BadReference { node: NodeId, child: NodeId },
    Cycle { node: NodeId },
    VarOutOfRange { node: NodeId, var: Var },
    /// Two children of the And node share `var`.
    NotDecomposable { node: NodeId, var: Var },
    /// A branch of the Or node does not fix the decision literal.
    NotDeterministic { node: NodeId, var: Var },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::BadReference { node, child } => write!(f, "node {node}: missing child {child}"),
            Violation::Cycle { node } => write!(f, "node {node}: on a cycle"),
            Violation::VarOutOfRange { node, var } => write!(f, "node {node}: {var} out of range"),
            Violation::NotDecomposable { node, var } => write!(f, "node {node}: children share {var}"),
            Violation::NotDeterministic { node, var } => {
                write!(f, "node {node}: branches do not fix complementary literals of {var}")
            }
        }
    }
}

/// Result of [`Dnnf::validate`].
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Report {
    pub violations: Vec<Violation>,
}

impl Report {
    pub fn is_valid(&self) -> bool {
        self.violations.is_empty()
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
struct VarSet(Vec<u64>);

impl VarSet {
    fn new(n: u32) -> VarSet {
        VarSet(vec![0; (n as usize).div_ceil(64) + 1])
    }

    fn insert(&mut self, v: Var) {
        let i = v.index() as usize;
        self.0[i / 64] |= 1 << (i % 64);
    }

    fn union(&mut self, other: &VarSet) {
        for (a, b) in self.0.iter_mut().zip(&other.0) {
            *a |= b;
        }
    }

    fn first_common(&self, other: &VarSet) -> Option<Var> {
        self.0.iter().zip(&other.0).enumerate().find_map(|(i, (a, b))| {
            let x = a & b;
            (x != 0).then(|| Var::new((i * 64) as u32 + x.trailing_zeros()))
        })
    }

    fn len(&self) -> u32 {
        self.0.iter().map(|w| w.count_ones()).sum()
    }
}

impl Dnnf {
    /// Wraps raw nodes without checking them; see [`Dnnf::validate`].
    pub fn from_parts(nodes: Vec<Node>, root: NodeId, num_vars: u32) -> Dnnf {
        Dnnf { nodes, root, num_vars }
    }

    pub fn nodes(&self) -> &[Node] {
        &self.nodes
    }

    pub fn node(&self, id: NodeId) -> &Node {
        &self.nodes[id]
    }

    pub fn root(&self) -> NodeId {
        self.root
    }

    pub fn num_vars(&self) -> u32 {
        self.num_vars
    }

    /// Number of ⊤/⊥ nodes and internal nodes, excluding literal leaves.
    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn edge_count(&self) -> usize {
        self.nodes
            .iter()
            .map(|n| match n {
                Node::And(cs) => cs.len(),
                Node::Or { .. } => 2,
                _ => 0,
            })
            .sum()
    }

    pub fn max_var(&self) -> u32 {
        self.nodes
            .iter()
            .map(|n| match n {
                Node::Lit(l) => l.var().index(),
                Node::Or { var, .. } => var.index(),
                _ => 0,
            })
            .max()
            .unwrap_or(0)
    }

    /// Nodes reachable from the root, children before parents.
    fn topo(&self) -> Result<Vec<NodeId>, DnnfError> {
        let n = self.nodes.len();
        if self.root >= n {
            return Err(DnnfError::BadReference { node: self.root, child: self.root });
        }
        // 0 = unseen, 1 = on stack, 2 = done
        let mut state = vec![0u8; n];
        let mut order = Vec::with_capacity(n);
        let mut stack: Vec<(NodeId, usize)> = vec![(self.root, 0)];
        state[self.root] = 1;
        while let Some(top) = stack.last_mut() {
            let (id, next) = *top;
            let child = match &self.nodes[id] {
                Node::And(cs) => cs.get(next).copied(),
                Node::Or { hi, lo, .. } => [*hi, *lo].get(next).copied(),
                _ => None,
            };
            if let Some(c) = child {
                top.1 += 1;
                if c >= n {
                    return Err(DnnfError::BadReference { node: id, child: c });
                }
                match state[c] {
                    0 => {
                        state[c] = 1;
                        stack.push((c, 0));
                    }
                    1 => return Err(DnnfError::Cycle(c)),
                    _ => {}
                }
            } else {
                state[id] = 2;
                order.push(id);
                stack.pop();
            }
        }
        Ok(order)
    }

    fn var_sets(&self, order: &[NodeId], n: u32) -> HashMap<NodeId, VarSet> {
        let mut sets: HashMap<NodeId, VarSet> = HashMap::with_capacity(order.len());
        for &id in order {
            let mut s = VarSet::new(n);
            match &self.nodes[id] {
                Node::Lit(l) => s.insert(l.var()),
                Node::Or { var, .. } => s.insert(*var),
                _ => {}
            }
            self.nodes[id].for_each_child(|c| s.union(&sets[&c]));
            sets.insert(id, s);
        }
        sets
    }

    /// Whether `id` syntactically fixes `lit`: it is the literal, ⊥, or an And
    /// (transitively) containing it.
    fn fixes(&self, id: NodeId, lit: Lit) -> bool {
        let mut stack = vec![id];
        while let Some(x) = stack.pop() {
            match self.nodes.get(x) {
                Some(Node::Lit(l)) if *l == lit => return true,
                Some(Node::False) => return true,
                Some(Node::And(cs)) => stack.extend(cs.iter().copied().filter(|c| *c != x)),
                _ => {}
            }
        }
        false
    }

    /// Checks acyclicity, decomposability and decision determinism.
    pub fn validate(&self) -> Report {
        let mut violations = Vec::new();
        let order = match self.topo() {
            Ok(o) => o,
            Err(DnnfError::BadReference { node, child }) => {
                violations.push(Violation::BadReference { node, child });
                return Report { violations };
            }
            Err(DnnfError::Cycle(node)) => {
                violations.push(Violation::Cycle { node });
                return Report { violations };
            }
            Err(_) => unreachable!("topo only reports structure errors"),
        };
        let n = self.num_vars.max(self.max_var());
        for &id in &order {
            let var = match &self.nodes[id] {
                Node::Lit(l) => Some(l.var()),
                Node::Or { var, .. } => Some(*var),
                _ => None,
            };
            if let Some(v) = var {
                if v.index() > self.num_vars {
                    violations.push(Violation::VarOutOfRange { node: id, var: v });
                }
            }
        }
        let sets = self.var_sets(&order, n);
        for &id in &order {
            match &self.nodes[id] {
                Node::And(cs) => {
                    let mut seen = VarSet::new(n);
                    for c in cs {
                        if let Some(v) = seen.first_common(&sets[c]) {
                            violations.push(Violation::NotDecomposable { node: id, var: v });
                            break;
                        }
                        seen.union(&sets[c]);
                    }
                }
                Node::Or { var, hi, lo }
                    if (!self.fixes(*hi, var.pos()) || !self.fixes(*lo, var.neg())) => {
                        violations.push(Violation::NotDeterministic { node: id, var: *var });
                    }
                _ => {}
            }
        }
        Report { violations }
    }

    /// Number of models over variables `1..=n`.
    pub fn model_count(&self, n: u32) -> Result<BigUint, DnnfError> {
        let max_var = self.max_var();
        if n < max_var {
            return Err(DnnfError::TooFewVars { n, max_var });
        }
        let order = self.topo()?;
        let sets = self.var_sets(&order, n);
        let mut counts: HashMap<NodeId, BigUint> = HashMap::with_capacity(order.len());
        for &id in &order {
            let c = match &self.nodes[id] {
                Node::True | Node::Lit(_) => BigUint::one(),
                Node::False => BigUint::zero(),
                Node::And(cs) => cs.iter().fold(BigUint::one(), |acc, c| acc * &counts[c]),
                Node::Or { hi, lo, .. } => {
                    let width = sets[&id].len();
                    let scaled = |c: NodeId| &counts[&c] << (width - sets[&c].len()) as usize;
                    scaled(*hi) + scaled(*lo)
                }
            };
            counts.insert(id, c);
        }
        Ok(&counts[&self.root] << (n - sets[&self.root].len()) as usize)
    }

    /// [`Dnnf::model_count`] over the declared variables.
    pub fn count(&self) -> Result<BigUint, DnnfError> {
        self.model_count(self.num_vars)
    }

    fn sat_under(&self, order: &[NodeId], partial: &[Option<bool>], memo: &mut [bool]) -> bool {
        for &id in order {
            memo[id] = match &self.nodes[id] {
                Node::True => true,
                Node::False => false,
                Node::Lit(l) => match partial.get(l.var().index() as usize - 1).copied().flatten() {
                    Some(v) => l.eval(v),
                    None => true,
                },
                Node::And(cs) => cs.iter().all(|c| memo[*c]),
                Node::Or { hi, lo, .. } => memo[*hi] || memo[*lo],
            };
        }
        memo[self.root]
    }

    pub fn is_satisfiable(&self) -> Result<bool, DnnfError> {
        let order = self.topo()?;
        let mut memo = vec![false; self.nodes.len()];
        Ok(self.sat_under(&order, &[], &mut memo))
    }

    /// Up to `cap` models over `1..=n` in lexicographic order, variable 1 most
    /// significant and false before true.
    pub fn enumerate_models(&self, n: u32, cap: usize) -> Result<Vec<Assignment>, DnnfError> {
        if cap == 0 {
            return Err(DnnfError::ZeroCap);
        }
        let max_var = self.max_var();
        if n < max_var {
            return Err(DnnfError::TooFewVars { n, max_var });
        }
        let order = self.topo()?;
        let mut memo = vec![false; self.nodes.len()];
        let mut out = Vec::new();
        let mut partial: Vec<Option<bool>> = vec![None; n as usize];
        if !self.sat_under(&order, &partial, &mut memo) {
            return Ok(out);
        }
        // depth-first over variables; `depth` variables are fixed
        let mut depth = 0usize;
        loop {
            if depth == n as usize {
                out.push(Assignment::from_bools(&partial.iter().map(|v| v.unwrap_or(false)).collect::<Vec<_>>()));
                if out.len() == cap {
                    return Ok(out);
                }
                // backtrack to the deepest variable still at false whose true branch is open
                loop {
                    if depth == 0 {
                        return Ok(out);
                    }
                    depth -= 1;
                    if partial[depth] == Some(false) {
                        partial[depth] = Some(true);
                        if self.sat_under(&order, &partial, &mut memo) {
                            depth += 1;
                            break;
                        }
                    }
                    partial[depth] = None;
                }
                continue;
            }
            partial[depth] = Some(false);
            if self.sat_under(&order, &partial, &mut memo) {
                depth += 1;
                continue;
            }
            partial[depth] = Some(true);
            // satisfiable because the prefix was
            depth += 1;
        }
    }
}

/// Incremental construction with the usual ⊤/⊥ simplifications.
#[derive(Clone, Debug)]
pub struct Builder {
    nodes: Vec<Node>,
    lits: HashMap<Lit, NodeId>,
}

impl Default for Builder {
    fn default() -> Self {
        Builder::new()
    }
}

impl Builder {
    pub const TRUE: NodeId = 0;
    pub const FALSE: NodeId = 1;

    pub fn new() -> Builder {
        Builder { nodes: vec![Node::True, Node::False], lits: HashMap::new() }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn node(&self, id: NodeId) -> &Node {
        &self.nodes[id]
    }

    pub fn lit(&mut self, l: Lit) -> NodeId {
        if let Some(&id) = self.lits.get(&l) {
            return id;
        }
        let id = self.nodes.len();
        self.nodes.push(Node::Lit(l));
        self.lits.insert(l, id);
        id
    }

    /// Conjunction; drops ⊤, absorbs into ⊥, merges nested conjunctions.
    pub fn and(&mut self, children: impl IntoIterator<Item = NodeId>) -> NodeId {
        let mut flat = Vec::new();
        for c in children {
            match &self.nodes[c] {
                Node::True => {}
                Node::False => return Self::FALSE,
                Node::And(cs) => flat.extend_from_slice(cs),
                _ => flat.push(c),
            }
        }
        match flat.len() {
            0 => Self::TRUE,
            1 => flat[0],
            _ => {
                self.nodes.push(Node::And(flat));
                self.nodes.len() - 1
            }
        }
    }

    /// Decision node; a ⊥ branch collapses to the other one.
    pub fn decision(&mut self, var: Var, hi: NodeId, lo: NodeId) -> NodeId {
        match (hi, lo) {
            (Self::FALSE, x) | (x, Self::FALSE) => x,
            _ => {
                self.nodes.push(Node::Or { var, hi, lo });
                self.nodes.len() - 1
            }
        }
    }

    /// Keeps only nodes reachable from `root`, renumbered children first.
    pub fn finish(self, root: NodeId, num_vars: u32) -> Dnnf {
        compact(self.nodes, root, num_vars).expect("builder output is acyclic")
    }
}

/// Drops unreachable nodes and renumbers so that children precede parents.
pub(crate) fn compact(nodes: Vec<Node>, root: NodeId, num_vars: u32) -> Result<Dnnf, DnnfError> {
    let raw = Dnnf { nodes, root, num_vars };
    let order = raw.topo()?;
    let mut map = vec![usize::MAX; raw.nodes.len()];
    for (i, &id) in order.iter().enumerate() {
        map[id] = i;
    }
    let nodes = order
        .iter()
        .map(|&id| match &raw.nodes[id] {
            Node::And(cs) => Node::And(cs.iter().map(|c| map[*c]).collect()),
            Node::Or { var, hi, lo } => Node::Or { var: *var, hi: map[*hi], lo: map[*lo] },
            other => other.clone(),
        })
        .collect();
    Ok(Dnnf { nodes, root: map[root], num_vars })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn v(i: u32) -> Var {
        Var::new(i)
    }

    /// (y ∧ x) ∨ (¬y ∧ x ∧ z) with x = 1, y = 2, z = 3.
    pub(super) fn worked_example() -> Dnnf {
        let mut b = Builder::new();
        let (x, y, ny, z) = (b.lit(v(1).pos()), b.lit(v(2).pos()), b.lit(v(2).neg()), b.lit(v(3).pos()));
        let hi = b.and([y, x]);
        let lo = b.and([ny, x, z]);
        let root = b.decision(v(2), hi, lo);
        b.finish(root, 3)
    }

    fn brute(d: &Dnnf, n: u32) -> u64 {
        let order = d.topo().unwrap();
        let mut memo = vec![false; d.nodes.len()];
        (0..1u64 << n)
            .filter(|bits| {
                let partial: Vec<Option<bool>> = (0..n).map(|i| Some(bits >> i & 1 == 1)).collect();
                d.sat_under(&order, &partial, &mut memo)
            })
            .count() as u64
    }

    #[test]
    fn counts() {
        let d = worked_example();
        assert!(d.validate().is_valid());
        assert_eq!(d.count().unwrap(), BigUint::from(3u32));
        assert_eq!(brute(&d, 3), 3);
        assert_eq!(d.model_count(5).unwrap(), BigUint::from(12u32));
        assert!(matches!(d.model_count(2), Err(DnnfError::TooFewVars { .. })));

        let t = Builder::new().finish(Builder::TRUE, 4);
        assert_eq!(t.count().unwrap(), BigUint::from(16u32));
        let f = Builder::new().finish(Builder::FALSE, 4);
        assert_eq!(f.count().unwrap(), BigUint::zero());
        assert!(!f.is_satisfiable().unwrap());
        let mut b = Builder::new();
        let x = b.lit(v(1).pos());
        assert_eq!(b.finish(x, 2).count().unwrap(), BigUint::from(2u32));
    }

    #[test]
    fn simplifications() {
        let mut b = Builder::new();
        let x = b.lit(v(1).pos());
        assert_eq!(b.lit(v(1).pos()), x);
        assert_eq!(b.and([Builder::TRUE, x]), x);
        assert_eq!(b.and([Builder::FALSE, x]), Builder::FALSE);
        assert_eq!(b.and([]), Builder::TRUE);
        assert_eq!(b.decision(v(1), x, Builder::FALSE), x);
        let y = b.lit(v(2).pos());
        let xy = b.and([x, y]);
        let z = b.lit(v(3).pos());
        let all = b.and([xy, z]);
        assert_eq!(b.node(all), &Node::And(vec![x, y, z]));
    }

    #[test]
    fn enumeration() {
        let d = worked_example();
        let models: Vec<Vec<bool>> = d
            .enumerate_models(3, 10)
            .unwrap()
            .iter()
            .map(|a| (1..=3).map(|i| a.get(v(i)).unwrap()).collect())
            .collect();
        assert_eq!(models, vec![vec![true, false, true], vec![true, true, false], vec![true, true, true]]);
        assert_eq!(d.enumerate_models(3, 2).unwrap().len(), 2);
        assert_eq!(d.enumerate_models(3, 0), Err(DnnfError::ZeroCap));
        let f = Builder::new().finish(Builder::FALSE, 2);
        assert!(f.enumerate_models(2, 5).unwrap().is_empty());
        let t = Builder::new().finish(Builder::TRUE, 2);
        assert_eq!(t.enumerate_models(2, 10).unwrap().len(), 4);
    }

    #[test]
    fn violations() {
        // And(x, x ∨ y)
        let nodes = vec![
            Node::Lit(v(1).pos()),
            Node::Lit(v(1).neg()),
            Node::Lit(v(2).pos()),
            Node::And(vec![1, 2]),
            Node::Or { var: v(1), hi: 0, lo: 3 },
            Node::And(vec![0, 4]),
        ];
        let d = Dnnf::from_parts(nodes, 5, 2);
        assert_eq!(d.validate().violations, vec![Violation::NotDecomposable { node: 5, var: v(1) }]);

        let nodes = vec![Node::Lit(v(1).pos()), Node::Or { var: v(1), hi: 0, lo: 0 }];
        let d = Dnnf::from_parts(nodes, 1, 1);
        assert_eq!(d.validate().violations, vec![Violation::NotDeterministic { node: 1, var: v(1) }]);

        let d = Dnnf::from_parts(vec![Node::And(vec![1]), Node::And(vec![0])], 0, 1);
        assert!(matches!(d.validate().violations[..], [Violation::Cycle { .. }]));
        assert!(d.count().is_err());
    }
}
