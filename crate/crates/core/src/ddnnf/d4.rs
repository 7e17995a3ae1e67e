use std::collections::{BTreeSet, HashMap};
use std::fmt::Write as _;

use thiserror::Error;

use super::{compact, Dnnf, DnnfError, Node, NodeId};
use crate::pb::Lit;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum D4Error {
    #[error("line {line}: {msg}")]
    Syntax { line: usize, msg: String },
    #[error("line {line}: node {id} declared twice")]
    DuplicateNode { line: usize, id: usize },
    #[error("line {line}: edge references undeclared node {id}")]
    Dangling { line: usize, id: usize },
    #[error("no node 1")]
    MissingRoot,
    #[error("line {line}: node 1 has an incoming edge")]
    NonRootOne { line: usize },
    #[error("line {line}: or node {id} has {edges} edges, expected 2")]
    OrArity { line: usize, id: usize, edges: usize },
    #[error("line {line}: or node {id} has no complementary decision literal")]
    NoDecision { line: usize, id: usize },
    #[error("line {line}: true/false node {id} has outgoing edges")]
    LeafEdge { line: usize, id: usize },
    #[error(transparent)]
    Structure(#[from] DnnfError),
}

/// Where an edge into `node` points and which literals it carries.
fn resolve(d: &Dnnf, node: NodeId) -> (Option<NodeId>, Vec<Lit>) {
    match &d.nodes[node] {
        Node::Lit(l) => (None, vec![*l]),
        Node::And(cs) => {
            let (lits, rest): (Vec<NodeId>, Vec<NodeId>) =
                cs.iter().partition(|c| matches!(d.nodes[**c], Node::Lit(_)));
            if rest.len() > 1 {
                return (Some(node), vec![]);
            }
            let lits: Vec<Lit> = lits
                .iter()
                .map(|c| match d.nodes[*c] {
                    Node::Lit(l) => l,
                    _ => unreachable!(),
                })
                .collect();
            match rest.first() {
                None => (None, lits),
                Some(&c) => {
                    let (target, mut more) = resolve(d, c);
                    more.extend(lits);
                    (target, more)
                }
            }
        }
        Node::True => (None, vec![]),
        _ => (Some(node), vec![]),
    }
}

impl Dnnf {
    /// Equivalent circuit mentioning its highest declared variable, so that a
    /// d4 file, whose variable count is implicit, keeps the same model count.
    pub fn padded(&self) -> Dnnf {
        let n = self.num_vars;
        if n == 0 || self.max_var() >= n || matches!(self.nodes[self.root], Node::False) {
            return self.clone();
        }
        let v = crate::pb::Var::new(n);
        let mut nodes = self.nodes.clone();
        let base = nodes.len();
        nodes.push(Node::Lit(v.pos()));
        nodes.push(Node::Lit(v.neg()));
        nodes.push(Node::Or { var: v, hi: base, lo: base + 1 });
        nodes.push(Node::And(vec![self.root, base + 2]));
        Dnnf::from_parts(nodes, base + 3, n)
    }
}

/// Serializes in the d4 text format: node lines (root first, parents before
/// children) followed by edge lines.
pub fn write_d4(d: &Dnnf) -> String {
    let order = d.topo().expect("writing requires an acyclic circuit");
    let mut ids: HashMap<NodeId, usize> = HashMap::new();
    let mut declared = Vec::new();
    let mut edges: Vec<(NodeId, Option<NodeId>, Vec<Lit>)> = Vec::new();
    let mut needs_true = false;

    ids.insert(d.root, 1);
    declared.push(d.root);
    let mut targets: BTreeSet<NodeId> = BTreeSet::new();
    for &id in order.iter().rev() {
        if id != d.root && !targets.contains(&id) {
            continue;
        }
        if let std::collections::hash_map::Entry::Vacant(e) = ids.entry(id) {
            e.insert(declared.len() + 1);
            declared.push(id);
        }
        let outgoing: Vec<(Option<NodeId>, Vec<Lit>)> = match &d.nodes[id] {
            Node::Or { hi, lo, .. } => vec![resolve(d, *hi), resolve(d, *lo)],
            Node::And(cs) => {
                let mut lits = Vec::new();
                let mut out = Vec::new();
                for &c in cs {
                    match d.nodes[c] {
                        Node::Lit(l) => lits.push(l),
                        _ => out.push(resolve(d, c)),
                    }
                }
                match out.first_mut() {
                    Some(first) => first.1.extend(lits),
                    None => out.push((None, lits)),
                }
                out
            }
            Node::Lit(l) => vec![(None, vec![*l])],
            Node::True | Node::False => vec![],
        };
        for (target, lits) in outgoing {
            match target {
                Some(t) => {
                    targets.insert(t);
                }
                None => needs_true = true,
            }
            edges.push((id, target, lits));
        }
    }
    let true_id = declared.len() + 1;
    let mut out = String::new();
    for &id in &declared {
        let kind = match d.nodes[id] {
            Node::Or { .. } => 'o',
            Node::And(_) | Node::Lit(_) => 'a',
            Node::True => 't',
            Node::False => 'f',
        };
        let _ = writeln!(out, "{kind} {} 0", ids[&id]);
    }
    if needs_true {
        let _ = writeln!(out, "t {true_id} 0");
    }
    for (parent, target, lits) in edges {
        let child = target.map_or(true_id, |t| ids[&t]);
        let _ = write!(out, "{} {}", ids[&parent], child);
        for l in lits {
            let _ = write!(out, " {}", l.to_dimacs());
        }
        out.push_str(" 0\n");
    }
    out
}

#[derive(Clone, Copy, PartialEq, Eq)]
enum Kind {
    Or,
    And,
    True,
    False,
}

fn parse_int(tok: &str, line: usize) -> Result<i64, D4Error> {
    tok.parse().map_err(|_| D4Error::Syntax { line, msg: format!("expected an integer, found `{tok}`") })
}

/// Parses the d4 text format. The variable count is the largest variable used.
pub fn read_d4(text: &str) -> Result<Dnnf, D4Error> {
    let mut kinds: HashMap<usize, (Kind, usize)> = HashMap::new();
    let mut edges: Vec<(usize, usize, usize, Vec<Lit>)> = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        let toks: Vec<&str> = raw.split_whitespace().collect();
        let Some(&first) = toks.first() else { continue };
        if first == "c" {
            continue;
        }
        if toks.last() != Some(&"0") {
            return Err(D4Error::Syntax { line, msg: "line must end with 0".into() });
        }
        let kind = match first {
            "o" => Some(Kind::Or),
            "a" => Some(Kind::And),
            "t" => Some(Kind::True),
            "f" => Some(Kind::False),
            _ => None,
        };
        if let Some(kind) = kind {
            if toks.len() != 3 {
                return Err(D4Error::Syntax { line, msg: "node line must be `<kind> <id> 0`".into() });
            }
            let id = parse_int(toks[1], line)?;
            if id < 1 {
                return Err(D4Error::Syntax { line, msg: "node ids start at 1".into() });
            }
            if kinds.insert(id as usize, (kind, line)).is_some() {
                return Err(D4Error::DuplicateNode { line, id: id as usize });
            }
            continue;
        }
        if toks.len() < 3 {
            return Err(D4Error::Syntax { line, msg: "edge line must be `<parent> <child> [literals] 0`".into() });
        }
        let parent = parse_int(toks[0], line)?;
        let child = parse_int(toks[1], line)?;
        if parent < 1 || child < 1 {
            return Err(D4Error::Syntax { line, msg: "node ids start at 1".into() });
        }
        let mut lits = Vec::new();
        for t in &toks[2..toks.len() - 1] {
            let v = parse_int(t, line)?;
            let l = Lit::from_dimacs(v).ok_or(D4Error::Syntax { line, msg: "literal 0 inside an edge".into() })?;
            lits.push(l);
        }
        edges.push((line, parent as usize, child as usize, lits));
    }
    if !kinds.contains_key(&1) {
        return Err(D4Error::MissingRoot);
    }
    let mut out_edges: HashMap<usize, Vec<(usize, usize, Vec<Lit>)>> = HashMap::new();
    for (line, p, c, lits) in edges {
        for id in [p, c] {
            if !kinds.contains_key(&id) {
                return Err(D4Error::Dangling { line, id });
            }
        }
        if c == 1 {
            return Err(D4Error::NonRootOne { line });
        }
        if matches!(kinds[&p].0, Kind::True | Kind::False) {
            return Err(D4Error::LeafEdge { line, id: p });
        }
        out_edges.entry(p).or_default().push((line, c, lits));
    }

    let mut ids: Vec<usize> = kinds.keys().copied().collect();
    ids.sort_unstable();
    let index: HashMap<usize, NodeId> = ids.iter().enumerate().map(|(i, id)| (*id, i)).collect();
    let mut nodes: Vec<Node> = ids
        .iter()
        .map(|id| match kinds[id].0 {
            Kind::True => Node::True,
            Kind::False => Node::False,
            _ => Node::And(vec![]),
        })
        .collect();
    let mut lit_nodes: HashMap<Lit, NodeId> = HashMap::new();
    let mut num_vars = 0u32;
    let mut edge_node = |nodes: &mut Vec<Node>, child: usize, lits: &[Lit]| -> NodeId {
        let target = index[&child];
        if lits.is_empty() {
            return target;
        }
        let mut parts: Vec<NodeId> = lits
            .iter()
            .map(|l| {
                num_vars = num_vars.max(l.var().index());
                *lit_nodes.entry(*l).or_insert_with(|| {
                    nodes.push(Node::Lit(*l));
                    nodes.len() - 1
                })
            })
            .collect();
        if nodes[target] != Node::True {
            parts.push(target);
        }
        if parts.len() == 1 {
            return parts[0];
        }
        nodes.push(Node::And(parts));
        nodes.len() - 1
    };
    for id in &ids {
        let (kind, line) = kinds[id];
        let es = out_edges.remove(id).unwrap_or_default();
        match kind {
            Kind::And => {
                let children: Vec<NodeId> = es.iter().map(|(_, c, lits)| edge_node(&mut nodes, *c, lits)).collect();
                nodes[index[id]] = Node::And(children);
            }
            Kind::Or => {
                if es.len() != 2 {
                    return Err(D4Error::OrArity { line, id: *id, edges: es.len() });
                }
                let a = edge_node(&mut nodes, es[0].1, &es[0].2);
                let b = edge_node(&mut nodes, es[1].1, &es[1].2);
                nodes[index[id]] = Node::Or { var: crate::pb::Var::new(1), hi: a, lo: b };
            }
            _ => {}
        }
    }
    // decisions are resolved once every node exists
    let probe = Dnnf { nodes: nodes.clone(), root: index[&1], num_vars: 0 };
    for id in &ids {
        let (kind, line) = kinds[id];
        if kind != Kind::Or {
            continue;
        }
        let Node::Or { hi: a, lo: b, .. } = nodes[index[id]] else { unreachable!() };
        let fixed_a = probe.fixed_lits(a);
        let decision = fixed_a.iter().copied().filter(|l| probe.fixes(b, !*l)).min_by_key(|l| l.var());
        let Some(l) = decision else {
            return Err(D4Error::NoDecision { line, id: *id });
        };
        let (hi, lo) = if l.is_positive() { (a, b) } else { (b, a) };
        nodes[index[id]] = Node::Or { var: l.var(), hi, lo };
    }
    for n in &nodes {
        if let Node::Lit(l) = n {
            num_vars = num_vars.max(l.var().index());
        }
    }
    Ok(compact(nodes, index[&1], num_vars)?)
}

impl Dnnf {
    /// Literals reachable from `id` through conjunctions only.
    fn fixed_lits(&self, id: NodeId) -> Vec<Lit> {
        let mut out = Vec::new();
        let mut stack = vec![id];
        let mut seen = BTreeSet::new();
        while let Some(x) = stack.pop() {
            if !seen.insert(x) {
                continue;
            }
            match self.nodes.get(x) {
                Some(Node::Lit(l)) => out.push(*l),
                Some(Node::And(cs)) => stack.extend(cs.iter().copied()),
                _ => {}
            }
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::super::tests::worked_example;
    use super::super::Builder;
    use super::*;
    use crate::pb::Var;
    use num_bigint::BigUint;

    #[test]
    fn padding_keeps_the_count() {
        let d = Dnnf::from_parts(vec![Node::Lit(Var::new(1).pos())], 0, 4);
        let back = read_d4(&write_d4(&d.padded())).unwrap();
        assert_eq!(back.num_vars(), 4);
        assert_eq!(back.count().unwrap(), d.count().unwrap());
        assert!(d.padded().validate().is_valid());
    }

    #[test]
    fn worked_example_round_trip() {
        let d = worked_example();
        let text = write_d4(&d);
        assert_eq!(text, "o 1 0\nt 2 0\n1 2 2 1 0\n1 2 -2 1 3 0\n");
        let back = read_d4(&text).unwrap();
        assert!(back.validate().is_valid());
        assert_eq!(back.count().unwrap(), BigUint::from(3u32));
    }

    #[test]
    fn constants() {
        assert_eq!(write_d4(&Builder::new().finish(Builder::TRUE, 0)), "t 1 0\n");
        assert_eq!(write_d4(&Builder::new().finish(Builder::FALSE, 0)), "f 1 0\n");
        let mut b = Builder::new();
        let x = b.lit(Var::new(2).neg());
        let text = write_d4(&b.finish(x, 2));
        assert_eq!(text, "a 1 0\nt 2 0\n1 2 -2 0\n");
        let back = read_d4(&text).unwrap();
        assert_eq!(back.model_count(2).unwrap(), BigUint::from(2u32));
    }

    #[test]
    fn shared_and_nested() {
        let v = Var::new;
        let mut b = Builder::new();
        let (x1, nx1) = (b.lit(v(1).pos()), b.lit(v(1).neg()));
        let (x2, nx2) = (b.lit(v(2).pos()), b.lit(v(2).neg()));
        let (x3, nx3) = (b.lit(v(3).pos()), b.lit(v(3).neg()));
        let d2 = {
            let hi = b.and([x2]);
            b.decision(v(2), hi, nx2)
        };
        let d3 = b.decision(v(3), x3, nx3);
        let both = b.and([d2, d3]);
        let hi = b.and([x1, both]);
        let lo = b.and([nx1, d3]);
        let root = b.decision(v(1), hi, lo);
        let d = b.finish(root, 3);
        assert!(d.validate().is_valid());
        let back = read_d4(&write_d4(&d)).unwrap();
        assert!(back.validate().is_valid());
        assert_eq!(back.count().unwrap(), d.count().unwrap());
    }

    #[test]
    fn reader_errors() {
        assert!(matches!(read_d4("a 2 0\n"), Err(D4Error::MissingRoot)));
        assert!(matches!(read_d4("a 1 0\n1 3 0\n"), Err(D4Error::Dangling { line: 2, id: 3 })));
        assert!(matches!(read_d4("a 1 0\na 2 0\n2 1 0\n"), Err(D4Error::NonRootOne { line: 3 })));
        assert!(matches!(read_d4("o 1 0\nt 2 0\n1 2 1 0\n"), Err(D4Error::OrArity { .. })));
        assert!(matches!(read_d4("o 1 0\nt 2 0\n1 2 1 0\n1 2 2 0\n"), Err(D4Error::NoDecision { .. })));
        assert!(matches!(read_d4("a 1 0\na 1 0\n"), Err(D4Error::DuplicateNode { line: 2, id: 1 })));
        assert!(matches!(read_d4("a 1\n"), Err(D4Error::Syntax { line: 1, .. })));
        assert!(matches!(read_d4("a 1 0\na 2 0\na 3 0\n1 2 0\n2 3 0\n3 2 0\n"), Err(D4Error::Structure(DnnfError::Cycle(_)))));
    }
}
