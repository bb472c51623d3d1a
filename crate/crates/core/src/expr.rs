//! Expression trees: the genotype evolved by the GP engine.
//!
//! Nodes live in a flat arena stored in preorder. Every binary node keeps
//! explicit ids of its two children, and the layout invariant `left == id + 1`,
//! `right == end(left)` always holds, so every subtree occupies a contiguous
//! slice of the arena. Trees are immutable values; edits return new trees.

use std::fmt;

use rand::Rng;
use thiserror::Error;

/// Denominators with magnitude at or below this make [`Op::Div`] return 1.0.
pub const PROTECTED_DIV_EPS: f64 = 1e-6;

/// Hard cap on tree depth applied by the editing operators.
pub const DEFAULT_DEPTH_CAP: usize = 17;

/// Probability that [`ExprTree::random_subtree`] picks an internal node when
/// the tree has any.
pub const INTERNAL_NODE_BIAS: f64 = 0.9;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ExprError {
    #[error("tree depth {depth} exceeds cap {cap}")]
    DepthExceeded { depth: usize, cap: usize },
    #[error("node {0:?} is not part of the tree")]
    NoSuchNode(NodeId),
    #[error("structural audit failed: {0}")]
    Audit(String),
    #[error("parse error at byte {pos}: {msg}")]
    Parse { pos: usize, msg: String },
}

/// Index of a node inside an [`ExprTree`] arena.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct NodeId(pub usize);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Op {
    Add,
    Sub,
    Mul,
    /// Protected division, see [`protected_div`].
    Div,
}

impl Op {
    pub const ALL: [Op; 4] = [Op::Add, Op::Sub, Op::Mul, Op::Div];

    #[inline]
    pub fn apply(self, a: f64, b: f64) -> f64 {
        match self {
            Op::Add => a + b,
            Op::Sub => a - b,
            Op::Mul => a * b,
            Op::Div => protected_div(a, b),
        }
    }

    pub fn symbol(self) -> char {
        match self {
            Op::Add => '+',
            Op::Sub => '-',
            Op::Mul => '*',
            Op::Div => '/',
        }
    }

    pub fn from_symbol(c: char) -> Option<Op> {
        match c {
            '+' => Some(Op::Add),
            '-' => Some(Op::Sub),
            '*' => Some(Op::Mul),
            '/' => Some(Op::Div),
            _ => None,
        }
    }
}

#[inline]
pub fn protected_div(a: f64, b: f64) -> f64 {
    if b.abs() > PROTECTED_DIV_EPS {
        a / b
    } else {
        1.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Node {
    Constant(f64),
    Variable(usize),
    Binary { op: Op, left: NodeId, right: NodeId },
}

impl Node {
    pub fn is_leaf(&self) -> bool {
        !matches!(self, Node::Binary { .. })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExprTree {
    nodes: Vec<Node>,
    depth: usize,
}

impl ExprTree {
    pub fn constant(value: f64) -> Self {
        ExprTree { nodes: vec![Node::Constant(value)], depth: 0 }
    }

    pub fn variable(index: usize) -> Self {
        ExprTree { nodes: vec![Node::Variable(index)], depth: 0 }
    }

    pub fn binary(op: Op, left: &ExprTree, right: &ExprTree) -> Self {
        let mut nodes = Vec::with_capacity(1 + left.len() + right.len());
        let right_root = 1 + left.len();
        nodes.push(Node::Binary { op, left: NodeId(1), right: NodeId(right_root) });
        nodes.extend(left.nodes.iter().map(|n| shift(*n, 1)));
        nodes.extend(right.nodes.iter().map(|n| shift(*n, right_root)));
        ExprTree { nodes, depth: 1 + left.depth.max(right.depth) }
    }

    /// Builds a tree from a preorder node list, validating the layout.
    pub fn from_nodes(nodes: Vec<Node>) -> Result<Self, ExprError> {
        if nodes.is_empty() {
            return Err(ExprError::Audit("empty node list".into()));
        }
        let mut tree = ExprTree { nodes, depth: 0 };
        tree.depth = tree.compute_depth();
        tree.audit()?;
        Ok(tree)
    }

    pub fn root(&self) -> NodeId {
        NodeId(0)
    }

    pub fn nodes(&self) -> &[Node] {
        &self.nodes
    }

    pub fn node(&self, id: NodeId) -> &Node {
        &self.nodes[id.0]
    }

    /// Number of nodes.
    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    /// Always false; kept alongside `len` for API symmetry.
    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Maximum number of edges on a root-to-leaf path.
    pub fn depth(&self) -> usize {
        self.depth
    }

    pub fn contains(&self, id: NodeId) -> bool {
        id.0 < self.nodes.len()
    }

    /// One past the last arena index of the subtree rooted at `id`.
    pub fn subtree_end(&self, id: NodeId) -> usize {
        let mut cur = id.0;
        loop {
            match self.nodes[cur] {
                Node::Binary { right, .. } => cur = right.0,
                _ => return cur + 1,
            }
        }
    }

    /// Copies the subtree rooted at `id` into a standalone tree.
    pub fn subtree(&self, id: NodeId) -> ExprTree {
        let end = self.subtree_end(id);
        let nodes: Vec<Node> = self.nodes[id.0..end].iter().map(|n| unshift(*n, id.0)).collect();
        let mut t = ExprTree { nodes, depth: 0 };
        t.depth = t.compute_depth();
        t
    }

    pub fn variables(&self) -> impl Iterator<Item = usize> + '_ {
        self.nodes.iter().filter_map(|n| match n {
            Node::Variable(i) => Some(*i),
            _ => None,
        })
    }

    pub fn max_variable(&self) -> Option<usize> {
        self.variables().max()
    }

    pub fn has_variables(&self) -> bool {
        self.variables().next().is_some()
    }

    /// Evaluates the tree on one input row.
    pub fn evaluate(&self, row: &[f64]) -> f64 {
        let mut stack = Vec::with_capacity(self.depth + 2);
        self.evaluate_with(row, &mut stack)
    }

    /// Same as [`evaluate`](Self::evaluate) but reuses a caller-owned stack.
    pub fn evaluate_with(&self, row: &[f64], stack: &mut Vec<f64>) -> f64 {
        stack.clear();
        // Reverse preorder: both operands are on the stack when the operator is reached,
        // left on top.
        for node in self.nodes.iter().rev() {
            let v = match *node {
                Node::Constant(c) => c,
                Node::Variable(i) => row[i],
                Node::Binary { op, .. } => {
                    let l = stack.pop().expect("left operand");
                    let r = stack.pop().expect("right operand");
                    op.apply(l, r)
                }
            };
            stack.push(v);
        }
        stack.pop().expect("root value")
    }

    /// Picks a node, internal nodes with probability [`INTERNAL_NODE_BIAS`].
    pub fn random_subtree<R: Rng + ?Sized>(&self, rng: &mut R) -> NodeId {
        let internal = self.nodes.iter().filter(|n| !n.is_leaf()).count();
        if internal == 0 {
            return NodeId(0);
        }
        let leaves = self.nodes.len() - internal;
        let want_internal = rng.gen::<f64>() < INTERNAL_NODE_BIAS;
        let (count, pick_leaf) = if want_internal { (internal, false) } else { (leaves, true) };
        let k = rng.gen_range(0..count);
        let id = self
            .nodes
            .iter()
            .enumerate()
            .filter(|(_, n)| n.is_leaf() == pick_leaf)
            .nth(k)
            .map(|(i, _)| i)
            .expect("k < count");
        NodeId(id)
    }

    /// Returns a copy with the subtree at `at` replaced by `donor`.
    pub fn replace_subtree(&self, at: NodeId, donor: &ExprTree, depth_cap: usize) -> Result<ExprTree, ExprError> {
        if !self.contains(at) {
            return Err(ExprError::NoSuchNode(at));
        }
        let start = at.0;
        let end = self.subtree_end(at);
        let delta = donor.len() as isize - (end - start) as isize;
        let remap = |id: NodeId| -> NodeId {
            if id.0 >= end {
                NodeId((id.0 as isize + delta) as usize)
            } else {
                id
            }
        };
        let mut nodes = Vec::with_capacity((self.len() as isize + delta) as usize);
        for n in &self.nodes[..start] {
            nodes.push(match *n {
                Node::Binary { op, left, right } => Node::Binary { op, left: remap(left), right: remap(right) },
                leaf => leaf,
            });
        }
        nodes.extend(donor.nodes.iter().map(|n| shift(*n, start)));
        for n in &self.nodes[end..] {
            nodes.push(match *n {
                Node::Binary { op, left, right } => Node::Binary { op, left: remap(left), right: remap(right) },
                leaf => leaf,
            });
        }
        let mut tree = ExprTree { nodes, depth: 0 };
        tree.depth = tree.compute_depth();
        if tree.depth > depth_cap {
            return Err(ExprError::DepthExceeded { depth: tree.depth, cap: depth_cap });
        }
        Ok(tree)
    }

    /// Returns a copy with the node at `id` swapped for `node`. Arity must match.
    pub(crate) fn with_node(&self, id: NodeId, node: Node) -> ExprTree {
        debug_assert_eq!(self.nodes[id.0].is_leaf(), node.is_leaf());
        let mut t = self.clone();
        t.nodes[id.0] = node;
        t
    }

    fn compute_depth(&self) -> usize {
        let mut best = 0;
        let mut stack = vec![(0usize, 0usize)];
        while let Some((i, d)) = stack.pop() {
            best = best.max(d);
            if let Node::Binary { left, right, .. } = self.nodes[i] {
                stack.push((left.0, d + 1));
                stack.push((right.0, d + 1));
            }
        }
        best
    }

    /// Checks every structural invariant: arities, reachability of every node
    /// exactly once, the preorder layout, and the stored depth.
    pub fn audit(&self) -> Result<(), ExprError> {
        let n = self.nodes.len();
        if n == 0 {
            return Err(ExprError::Audit("empty tree".into()));
        }
        let mut seen = vec![false; n];
        let mut stack = vec![(0usize, 0usize)];
        let mut max_depth = 0;
        while let Some((i, d)) = stack.pop() {
            if i >= n {
                return Err(ExprError::Audit(format!("dangling child id {i}")));
            }
            if seen[i] {
                return Err(ExprError::Audit(format!("node {i} reached twice")));
            }
            seen[i] = true;
            max_depth = max_depth.max(d);
            match self.nodes[i] {
                Node::Binary { left, right, .. } => {
                    if left.0 != i + 1 {
                        return Err(ExprError::Audit(format!("node {i}: left child {} out of order", left.0)));
                    }
                    if left.0 >= n || right.0 >= n {
                        return Err(ExprError::Audit(format!("node {i}: child out of range")));
                    }
                    if right.0 != self.subtree_end(left) {
                        return Err(ExprError::Audit(format!("node {i}: right child {} out of order", right.0)));
                    }
                    stack.push((left.0, d + 1));
                    stack.push((right.0, d + 1));
                }
                Node::Constant(c) if !c.is_finite() => {
                    return Err(ExprError::Audit(format!("node {i}: non-finite constant")));
                }
                _ => {}
            }
        }
        if let Some(i) = seen.iter().position(|s| !s) {
            return Err(ExprError::Audit(format!("node {i} unreachable from root")));
        }
        if max_depth != self.depth {
            return Err(ExprError::Audit(format!("stored depth {} but recomputed {max_depth}", self.depth)));
        }
        Ok(())
    }

    /// Parenthesized infix text, e.g. `((d - 1.0) / (d + 1.0))`.
    pub fn to_canonical_string(&self, names: &[&str]) -> String {
        let mut out = String::new();
        self.write_node(NodeId(0), names, &mut out);
        out
    }

    fn write_node(&self, id: NodeId, names: &[&str], out: &mut String) {
        match self.nodes[id.0] {
            Node::Constant(c) => out.push_str(&format_number(c)),
            Node::Variable(i) => match names.get(i) {
                Some(name) => out.push_str(name),
                None => {
                    out.push('x');
                    out.push_str(&i.to_string());
                }
            },
            Node::Binary { op, left, right } => {
                out.push('(');
                self.write_node(left, names, out);
                out.push(' ');
                out.push(op.symbol());
                out.push(' ');
                self.write_node(right, names, out);
                out.push(')');
            }
        }
    }

    /// Parses the canonical grammar `expr := number | name | "(" expr op expr ")"`.
    pub fn parse(text: &str, names: &[&str]) -> Result<ExprTree, ExprError> {
        let mut p = Parser { src: text.as_bytes(), pos: 0, names };
        let tree = p.expr()?;
        p.skip_ws();
        if p.pos != p.src.len() {
            return Err(p.error("trailing input"));
        }
        Ok(tree)
    }
}

impl fmt::Display for ExprTree {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.to_canonical_string(&[]))
    }
}

/// Shortest round-trip decimal form; never more than 17 significant digits.
pub fn format_number(v: f64) -> String {
    format!("{v:?}")
}

fn shift(node: Node, by: usize) -> Node {
    match node {
        Node::Binary { op, left, right } => Node::Binary { op, left: NodeId(left.0 + by), right: NodeId(right.0 + by) },
        leaf => leaf,
    }
}

fn unshift(node: Node, by: usize) -> Node {
    match node {
        Node::Binary { op, left, right } => Node::Binary { op, left: NodeId(left.0 - by), right: NodeId(right.0 - by) },
        leaf => leaf,
    }
}

struct Parser<'a> {
    src: &'a [u8],
    pos: usize,
    names: &'a [&'a str],
}

impl Parser<'_> {
    fn error(&self, msg: &str) -> ExprError {
        ExprError::Parse { pos: self.pos, msg: msg.to_string() }
    }

    fn skip_ws(&mut self) {
        while self.pos < self.src.len() && self.src[self.pos].is_ascii_whitespace() {
            self.pos += 1;
        }
    }

    fn peek(&self) -> Option<u8> {
        self.src.get(self.pos).copied()
    }

    fn expr(&mut self) -> Result<ExprTree, ExprError> {
        self.skip_ws();
        match self.peek() {
            None => Err(self.error("unexpected end of input")),
            Some(b'(') => {
                self.pos += 1;
                let left = self.expr()?;
                self.skip_ws();
                let op = self
                    .peek()
                    .and_then(|c| Op::from_symbol(c as char))
                    .ok_or_else(|| self.error("expected operator"))?;
                self.pos += 1;
                let right = self.expr()?;
                self.skip_ws();
                if self.peek() != Some(b')') {
                    return Err(self.error("expected ')'"));
                }
                self.pos += 1;
                Ok(ExprTree::binary(op, &left, &right))
            }
            Some(c) if c.is_ascii_digit() || c == b'-' || c == b'+' || c == b'.' => self.number(),
            Some(_) => self.name(),
        }
    }

    fn token(&mut self) -> &str {
        let start = self.pos;
        while let Some(c) = self.peek() {
            if c.is_ascii_alphanumeric() || matches!(c, b'_' | b'^' | b'.' | b'-' | b'+') {
                // A sign is only part of the token right after an exponent marker or at its start.
                if matches!(c, b'-' | b'+') && self.pos != start && !matches!(self.src[self.pos - 1], b'e' | b'E') {
                    break;
                }
                self.pos += 1;
            } else {
                break;
            }
        }
        std::str::from_utf8(&self.src[start..self.pos]).unwrap_or("")
    }

    fn number(&mut self) -> Result<ExprTree, ExprError> {
        let start = self.pos;
        let tok = self.token().to_string();
        tok.parse::<f64>()
            .map(ExprTree::constant)
            .map_err(|_| ExprError::Parse { pos: start, msg: format!("bad number '{tok}'") })
    }

    fn name(&mut self) -> Result<ExprTree, ExprError> {
        let start = self.pos;
        let tok = self.token().to_string();
        if tok.is_empty() {
            return Err(self.error("expected expression"));
        }
        if let Some(i) = self.names.iter().position(|n| *n == tok) {
            return Ok(ExprTree::variable(i));
        }
        if let Some(i) = tok.strip_prefix('x').and_then(|s| s.parse::<usize>().ok()) {
            return Ok(ExprTree::variable(i));
        }
        Err(ExprError::Parse { pos: start, msg: format!("unknown variable '{tok}'") })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn x() -> ExprTree {
        ExprTree::variable(0)
    }
    fn c(v: f64) -> ExprTree {
        ExprTree::constant(v)
    }
    fn bin(op: Op, a: &ExprTree, b: &ExprTree) -> ExprTree {
        ExprTree::binary(op, a, b)
    }

    #[test]
    fn evaluate_leaves_and_arithmetic() {
        assert_eq!(c(3.0).evaluate(&[]), 3.0);
        assert_eq!(bin(Op::Add, &x(), &c(1.0)).evaluate(&[2.0]), 3.0);
        let u1 = bin(Op::Div, &bin(Op::Sub, &x(), &c(1.0)), &bin(Op::Add, &x(), &c(1.0)));
        assert_eq!(u1.evaluate(&[3.0]), 0.5);
        // operand order matters for non-commutative ops
        assert_eq!(bin(Op::Sub, &c(5.0), &x()).evaluate(&[2.0]), 3.0);
        assert_eq!(bin(Op::Div, &c(1.0), &c(4.0)).evaluate(&[]), 0.25);
    }

    #[test]
    fn protected_division_returns_one() {
        let t = bin(Op::Div, &c(7.0), &x());
        assert_eq!(t.evaluate(&[1e-6]), 1.0);
        assert_eq!(t.evaluate(&[-1e-7]), 1.0);
        assert_eq!(t.evaluate(&[0.0]), 1.0);
        assert_eq!(t.evaluate(&[2e-6]), 3.5e6);
    }

    #[test]
    fn random_subtree_single_leaf() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        assert_eq!(x().random_subtree(&mut rng), NodeId(0));
    }

    #[test]
    fn random_subtree_internal_bias() {
        let t = bin(Op::Add, &x(), &c(1.0));
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let hits = (0..10_000).filter(|_| t.random_subtree(&mut rng) == NodeId(0)).count();
        let frac = hits as f64 / 10_000.0;
        assert!((frac - 0.9).abs() <= 0.01, "root fraction {frac}");
    }

    #[test]
    fn random_subtree_in_range_for_full_tree() {
        let l = bin(Op::Mul, &x(), &c(2.0));
        let d2 = bin(Op::Add, &l, &l);
        let d3 = bin(Op::Sub, &d2, &d2);
        assert_eq!(d3.depth(), 3);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..1000 {
            assert!(d3.contains(d3.random_subtree(&mut rng)));
        }
    }

    #[test]
    fn replace_root_and_leaf() {
        let t = bin(Op::Add, &x(), &c(1.0));
        let donor = bin(Op::Mul, &x(), &x());
        assert_eq!(t.replace_subtree(NodeId(0), &donor, 17).unwrap(), donor);
        let left = t.replace_subtree(NodeId(1), &donor, 17).unwrap();
        assert_eq!(left, bin(Op::Add, &donor, &c(1.0)));
        let right = t.replace_subtree(NodeId(2), &donor, 17).unwrap();
        assert_eq!(right, bin(Op::Add, &x(), &donor));
        right.audit().unwrap();
        assert_eq!(right.len(), 5);
        assert_eq!(right.depth(), 2);
    }

    #[test]
    fn replace_rejects_over_cap() {
        let t = bin(Op::Add, &x(), &c(1.0));
        let donor = bin(Op::Mul, &x(), &x());
        let err = t.replace_subtree(NodeId(1), &donor, 1).unwrap_err();
        assert_eq!(err, ExprError::DepthExceeded { depth: 2, cap: 1 });
        assert!(t.replace_subtree(NodeId(9), &donor, 17).is_err());
    }

    #[test]
    fn canonical_strings() {
        assert_eq!(c(2.0).to_canonical_string(&[]), "2.0");
        assert_eq!(bin(Op::Sub, &x(), &c(1.0)).to_canonical_string(&["d"]), "(d - 1.0)");
        let t = bin(Op::Div, &bin(Op::Sub, &x(), &c(-1.5)), &ExprTree::variable(1));
        let s = t.to_canonical_string(&["eta", "log_eta"]);
        assert_eq!(s, "((eta - -1.5) / log_eta)");
        assert_eq!(ExprTree::parse(&s, &["eta", "log_eta"]).unwrap(), t);
    }

    #[test]
    fn parse_errors() {
        assert!(ExprTree::parse("(d + )", &["d"]).is_err());
        assert!(ExprTree::parse("(d % 1.0)", &["d"]).is_err());
        assert!(ExprTree::parse("q", &["d"]).is_err());
        assert!(ExprTree::parse("(d + 1.0) x", &["d"]).is_err());
        assert_eq!(ExprTree::parse("1e-7", &[]).unwrap(), c(1e-7));
    }

    #[test]
    fn audit_detects_broken_layout() {
        let bad = vec![Node::Binary { op: Op::Add, left: NodeId(1), right: NodeId(1) }, Node::Variable(0)];
        assert!(ExprTree::from_nodes(bad).is_err());
        let unreachable = vec![Node::Variable(0), Node::Constant(1.0)];
        assert!(ExprTree::from_nodes(unreachable).is_err());
    }

    #[test]
    fn subtree_extraction() {
        let inner = bin(Op::Mul, &x(), &c(3.0));
        let t = bin(Op::Sub, &c(1.0), &inner);
        assert_eq!(t.subtree(NodeId(2)), inner);
        assert_eq!(t.subtree_end(NodeId(0)), t.len());
    }
}
