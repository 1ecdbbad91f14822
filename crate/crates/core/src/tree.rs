//! Decision-tree policies.
//!
//! Internal nodes test one observation feature: numeric features with a strict
//! `feature > threshold`, categorical features with `feature == category`.
//! Leaves hold one Q-value per action plus visit and update counters. The node
//! arena is always stored in preorder with the root at index 0, so two trees
//! with the same shape and contents compare equal.
//!
//! # Text format
//!
//! ```text
//! tree  := leaf | "if" cond "then" tree "else" tree
//! cond  := feature ">" number | feature "==" (integer | string)
//! feature := "x" digits | name
//! leaf  := "leaf" [ "[" { key "=" value } "]" ]
//! key   := "action" | "visits" | "q"
//! ```
//!
//! `q` takes a comma-separated list of numbers. `action` is informational and
//! ignored when reading. A bare `leaf` gets zero Q-values. Whitespace and
//! newlines are insignificant; `#` starts a comment that runs to end of line.

use std::fmt::Write as _;

use rand::Rng;
use thiserror::Error;

use crate::env::{EnvSpec, FeatureKind};
use crate::rng::SimRng;

/// Hard limit on nesting accepted by the parser.
pub const MAX_PARSE_DEPTH: usize = 256;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TreeError {
    #[error("observation has no feature {feature} (length {len})")]
    MissingFeature { feature: usize, len: usize },
    #[error("feature {feature} value {value} is not a category id")]
    NotCategory { feature: usize, value: f64 },
    #[error("leaves disagree on action count ({0} vs {1})")]
    ActionCountMismatch(usize, usize),
    #[error("a leaf needs at least one action")]
    NoActions,
    #[error("parse error at byte {offset}: {message}")]
    Parse { offset: usize, message: String },
    #[error("condition on feature {feature} does not fit the observation schema: {reason}")]
    Schema { feature: usize, reason: String },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Condition {
    Greater { feature: usize, threshold: f64 },
    Equals { feature: usize, category: u32 },
}

impl Condition {
    pub fn feature(&self) -> usize {
        match *self {
            Condition::Greater { feature, .. } | Condition::Equals { feature, .. } => feature,
        }
    }

    pub fn holds(&self, obs: &[f64]) -> Result<bool, TreeError> {
        let f = self.feature();
        let v = *obs.get(f).ok_or(TreeError::MissingFeature { feature: f, len: obs.len() })?;
        match *self {
            Condition::Greater { threshold, .. } => Ok(v > threshold),
            Condition::Equals { category, .. } => {
                if v < 0.0 || v.fract() != 0.0 || !v.is_finite() {
                    return Err(TreeError::NotCategory { feature: f, value: v });
                }
                Ok(v as u64 == category as u64)
            }
        }
    }
}

/// Q-learning hyperparameters and leaf initialization range.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LearningConfig {
    pub alpha: f64,
    pub gamma: f64,
    pub epsilon: f64,
    pub q_init_low: f64,
    pub q_init_high: f64,
}

impl Default for LearningConfig {
    fn default() -> Self {
        LearningConfig { alpha: 0.1, gamma: 0.9, epsilon: 0.05, q_init_low: -1.0, q_init_high: 1.0 }
    }
}

impl LearningConfig {
    /// No learning, no exploration.
    pub fn frozen() -> Self {
        LearningConfig { alpha: 0.0, epsilon: 0.0, ..Default::default() }
    }

    pub fn validate(&self) -> Result<(), String> {
        for (name, v) in [("alpha", self.alpha), ("gamma", self.gamma), ("epsilon", self.epsilon)] {
            if !(0.0..=1.0).contains(&v) {
                return Err(format!("{name} = {v} is outside [0, 1]"));
            }
        }
        if !(self.q_init_low.is_finite() && self.q_init_high.is_finite() && self.q_init_low <= self.q_init_high) {
            return Err(format!("leaf init range [{}, {}] is invalid", self.q_init_low, self.q_init_high));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Leaf {
    q: Vec<f64>,
    visits: u64,
    updates: Vec<u64>,
}

impl Leaf {
    pub fn new(n_actions: usize) -> Self {
        Leaf::with_q(vec![0.0; n_actions])
    }

    pub fn with_q(q: Vec<f64>) -> Self {
        let n = q.len();
        Leaf { q, visits: 0, updates: vec![0; n] }
    }

    /// Leaf that always selects `action` greedily.
    pub fn constant(action: usize, n_actions: usize) -> Self {
        let mut q = vec![0.0; n_actions];
        q[action] = 1.0;
        Leaf::with_q(q)
    }

    pub fn q(&self) -> &[f64] {
        &self.q
    }

    pub fn visits(&self) -> u64 {
        self.visits
    }

    pub fn updates(&self) -> &[u64] {
        &self.updates
    }

    pub fn max_q(&self) -> f64 {
        self.q.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    /// Highest-valued action, lowest index on ties.
    pub fn greedy_action(&self) -> usize {
        let mut best = 0;
        for (i, &v) in self.q.iter().enumerate().skip(1) {
            if v > self.q[best] {
                best = i;
            }
        }
        best
    }
}

pub fn act_epsilon_greedy(leaf: &Leaf, epsilon: f64, rng: &mut SimRng) -> usize {
    if rng.gen::<f64>() < epsilon {
        rng.gen_range(0..leaf.q.len())
    } else {
        leaf.greedy_action()
    }
}

/// `Q(s,a) <- (1-alpha) Q(s,a) + alpha (r + gamma max_next)`; returns the new value.
pub fn q_update(leaf: &mut Leaf, action: usize, reward: f64, max_next: f64, alpha: f64, gamma: f64) -> f64 {
    let q = &mut leaf.q[action];
    *q = (1.0 - alpha) * *q + alpha * (reward + gamma * max_next);
    leaf.updates[action] += 1;
    *q
}

/// Owned recursive form, convenient for building and rewriting trees.
#[derive(Debug, Clone, PartialEq)]
pub enum TreeNode {
    Leaf(Leaf),
    Split { condition: Condition, yes: Box<TreeNode>, no: Box<TreeNode> },
}

impl TreeNode {
    pub fn split(condition: Condition, yes: TreeNode, no: TreeNode) -> Self {
        TreeNode::Split { condition, yes: Box::new(yes), no: Box::new(no) }
    }

    pub fn depth(&self) -> usize {
        match self {
            TreeNode::Leaf(_) => 0,
            TreeNode::Split { yes, no, .. } => 1 + yes.depth().max(no.depth()),
        }
    }

    pub fn size(&self) -> usize {
        match self {
            TreeNode::Leaf(_) => 1,
            TreeNode::Split { yes, no, .. } => 1 + yes.size() + no.size(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct NodeId(usize);

#[derive(Debug, Clone, PartialEq)]
enum Node {
    Leaf(Leaf),
    Split { condition: Condition, yes: usize, no: usize },
}

#[derive(Debug, Clone, PartialEq)]
pub struct DecisionTree {
    nodes: Vec<Node>,
    n_actions: usize,
}

impl DecisionTree {
    pub fn from_node(root: TreeNode) -> Result<Self, TreeError> {
        let mut nodes = Vec::with_capacity(root.size());
        let mut n_actions = None;
        flatten(root, &mut nodes, &mut n_actions)?;
        Ok(DecisionTree { nodes, n_actions: n_actions.expect("tree has a leaf") })
    }

    pub fn to_node(&self) -> TreeNode {
        self.subtree(0)
    }

    fn subtree(&self, i: usize) -> TreeNode {
        match &self.nodes[i] {
            Node::Leaf(l) => TreeNode::Leaf(l.clone()),
            Node::Split { condition, yes, no } => TreeNode::split(*condition, self.subtree(*yes), self.subtree(*no)),
        }
    }

    pub fn root(&self) -> NodeId {
        NodeId(0)
    }

    pub fn n_actions(&self) -> usize {
        self.n_actions
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn leaf_count(&self) -> usize {
        self.nodes.iter().filter(|n| matches!(n, Node::Leaf(_))).count()
    }

    pub fn depth(&self) -> usize {
        let mut depth = vec![0usize; self.nodes.len()];
        for i in (0..self.nodes.len()).rev() {
            if let Node::Split { yes, no, .. } = self.nodes[i] {
                depth[i] = 1 + depth[yes].max(depth[no]);
            }
        }
        depth[0]
    }

    pub fn leaves(&self) -> impl Iterator<Item = (NodeId, &Leaf)> {
        self.nodes.iter().enumerate().filter_map(|(i, n)| match n {
            Node::Leaf(l) => Some((NodeId(i), l)),
            Node::Split { .. } => None,
        })
    }

    pub fn conditions(&self) -> impl Iterator<Item = &Condition> {
        self.nodes.iter().filter_map(|n| match n {
            Node::Split { condition, .. } => Some(condition),
            Node::Leaf(_) => None,
        })
    }

    pub fn leaf(&self, id: NodeId) -> &Leaf {
        match &self.nodes[id.0] {
            Node::Leaf(l) => l,
            Node::Split { .. } => panic!("node {} is not a leaf", id.0),
        }
    }

    pub fn leaf_mut(&mut self, id: NodeId) -> &mut Leaf {
        match &mut self.nodes[id.0] {
            Node::Leaf(l) => l,
            Node::Split { .. } => panic!("node {} is not a leaf", id.0),
        }
    }

    /// Leaf reached by `obs`, without touching counters.
    pub fn route(&self, obs: &[f64]) -> Result<NodeId, TreeError> {
        let mut i = 0;
        loop {
            match &self.nodes[i] {
                Node::Leaf(_) => return Ok(NodeId(i)),
                Node::Split { condition, yes, no } => i = if condition.holds(obs)? { *yes } else { *no },
            }
        }
    }

    /// Routes `obs` to its leaf and counts the visit.
    pub fn traverse(&mut self, obs: &[f64]) -> Result<NodeId, TreeError> {
        let id = self.route(obs)?;
        self.leaf_mut(id).visits += 1;
        Ok(id)
    }

    pub fn greedy_action(&self, obs: &[f64]) -> Result<usize, TreeError> {
        Ok(self.leaf(self.route(obs)?).greedy_action())
    }

    pub fn total_visits(&self) -> u64 {
        self.leaves().map(|(_, l)| l.visits).sum()
    }

    pub fn reset_visits(&mut self) {
        for n in &mut self.nodes {
            if let Node::Leaf(l) = n {
                l.visits = 0;
            }
        }
    }

    /// Draws every Q-value uniformly from `[low, high]`.
    pub fn randomize_leaves(&mut self, rng: &mut SimRng, low: f64, high: f64) {
        for n in &mut self.nodes {
            if let Node::Leaf(l) = n {
                for q in &mut l.q {
                    *q = if low < high { rng.gen_range(low..=high) } else { low };
                }
            }
        }
    }

    fn subtree_visits(&self) -> Vec<u64> {
        let mut v = vec![0u64; self.nodes.len()];
        for i in (0..self.nodes.len()).rev() {
            v[i] = match &self.nodes[i] {
                Node::Leaf(l) => l.visits,
                Node::Split { yes, no, .. } => v[*yes] + v[*no],
            };
        }
        v
    }

    /// Replaces every split whose one branch was never reached by the other
    /// branch. Leaves that survive keep their Q-values and counters.
    pub fn prune_unreached(&self) -> DecisionTree {
        let visits = self.subtree_visits();
        let root = self.pruned(0, &visits);
        DecisionTree::from_node(root).expect("pruning keeps leaves consistent")
    }

    fn pruned(&self, i: usize, visits: &[u64]) -> TreeNode {
        match &self.nodes[i] {
            Node::Leaf(l) => TreeNode::Leaf(l.clone()),
            Node::Split { condition, yes, no } => match (visits[*yes], visits[*no]) {
                (0, n) if n > 0 => self.pruned(*no, visits),
                (y, 0) if y > 0 => self.pruned(*yes, visits),
                _ => TreeNode::split(*condition, self.pruned(*yes, visits), self.pruned(*no, visits)),
            },
        }
    }

    /// Checks every condition against the schema (feature index, kind, range).
    pub fn check_schema(&self, spec: &EnvSpec) -> Result<(), TreeError> {
        if self.n_actions != spec.action_count() {
            return Err(TreeError::ActionCountMismatch(self.n_actions, spec.action_count()));
        }
        for c in self.conditions() {
            let f = c.feature();
            let feature = spec.features().get(f).ok_or(TreeError::Schema { feature: f, reason: "no such feature".into() })?;
            match (c, &feature.kind) {
                (Condition::Greater { threshold, .. }, FeatureKind::Numeric { low, high }) => {
                    if !(threshold >= low && threshold <= high) {
                        return Err(TreeError::Schema { feature: f, reason: format!("threshold {threshold} outside [{low}, {high}]") });
                    }
                }
                (Condition::Equals { category, .. }, FeatureKind::Categorical { categories }) => {
                    if *category as usize >= categories.len() {
                        return Err(TreeError::Schema { feature: f, reason: format!("category {category} undefined") });
                    }
                }
                _ => return Err(TreeError::Schema { feature: f, reason: "comparison does not match feature kind".into() }),
            }
        }
        Ok(())
    }

    /// Structural comparison: shape, conditions, Q-values and visit counts.
    /// Per-action update counters are not part of the structure.
    pub fn same_structure(&self, other: &DecisionTree) -> bool {
        self.nodes.len() == other.nodes.len()
            && self.nodes.iter().zip(&other.nodes).all(|(a, b)| match (a, b) {
                (Node::Leaf(x), Node::Leaf(y)) => x.q == y.q && x.visits == y.visits,
                (Node::Split { condition: c1, yes: y1, no: n1 }, Node::Split { condition: c2, yes: y2, no: n2 }) => {
                    c1 == c2 && y1 == y2 && n1 == n2
                }
                _ => false,
            })
    }

    pub fn parse(text: &str, n_actions: usize, spec: Option<&EnvSpec>) -> Result<Self, TreeError> {
        if n_actions == 0 {
            return Err(TreeError::NoActions);
        }
        let mut p = Parser { lex: Lexer::new(text), n_actions, spec };
        let root = p.tree(0)?;
        match p.lex.next()? {
            None => DecisionTree::from_node(root),
            Some((off, tok)) => Err(TreeError::Parse { offset: off, message: format!("unexpected trailing {tok:?}") }),
        }
    }
}

fn flatten(node: TreeNode, nodes: &mut Vec<Node>, n_actions: &mut Option<usize>) -> Result<usize, TreeError> {
    let idx = nodes.len();
    match node {
        TreeNode::Leaf(l) => {
            if l.q.is_empty() {
                return Err(TreeError::NoActions);
            }
            match *n_actions {
                Some(n) if n != l.q.len() => return Err(TreeError::ActionCountMismatch(n, l.q.len())),
                _ => *n_actions = Some(l.q.len()),
            }
            nodes.push(Node::Leaf(l));
        }
        TreeNode::Split { condition, yes, no } => {
            nodes.push(Node::Split { condition, yes: 0, no: 0 });
            let y = flatten(*yes, nodes, n_actions)?;
            let n = flatten(*no, nodes, n_actions)?;
            nodes[idx] = Node::Split { condition, yes: y, no: n };
        }
    }
    Ok(idx)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExportFormat {
    Dot,
    Text,
}

impl std::str::FromStr for ExportFormat {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "dot" => Ok(ExportFormat::Dot),
            "text" | "txt" => Ok(ExportFormat::Text),
            other => Err(format!("unknown export format {other:?}")),
        }
    }
}

/// Serializes the tree. With a spec, features, categories and actions are
/// written by name.
pub fn export(tree: &DecisionTree, format: ExportFormat, spec: Option<&EnvSpec>) -> String {
    match format {
        ExportFormat::Text => {
            let mut out = String::new();
            write_text(tree, 0, 0, spec, &mut out);
            out
        }
        ExportFormat::Dot => write_dot(tree, spec),
    }
}

fn is_plain_name(name: &str) -> bool {
    let mut chars = name.chars();
    let head_ok = chars.next().is_some_and(|c| c.is_ascii_alphabetic() || c == '_');
    head_ok
        && chars.all(|c| c.is_ascii_alphanumeric() || c == '_')
        && !matches!(name, "if" | "then" | "else" | "leaf")
        && !index_name(name).is_some()
}

fn index_name(name: &str) -> Option<usize> {
    name.strip_prefix('x').filter(|d| !d.is_empty() && d.bytes().all(|b| b.is_ascii_digit()))?.parse().ok()
}

fn feature_label(feature: usize, spec: Option<&EnvSpec>) -> String {
    match spec.and_then(|s| s.features().get(feature)) {
        Some(f) if is_plain_name(&f.name) => f.name.clone(),
        _ => format!("x{feature}"),
    }
}

fn quote(s: &str) -> String {
    let mut out = String::with_capacity(s.len() + 2);
    out.push('"');
    for c in s.chars() {
        if c == '"' || c == '\\' {
            out.push('\\');
        }
        out.push(c);
    }
    out.push('"');
    out
}

fn condition_text(c: &Condition, spec: Option<&EnvSpec>) -> String {
    match *c {
        Condition::Greater { feature, threshold } => format!("{} > {threshold:?}", feature_label(feature, spec)),
        Condition::Equals { feature, category } => {
            let name = spec.and_then(|s| s.features().get(feature)).and_then(|f| match &f.kind {
                FeatureKind::Categorical { categories } => categories.get(category as usize),
                FeatureKind::Numeric { .. } => None,
            });
            match name {
                Some(n) => format!("{} == {}", feature_label(feature, spec), quote(n)),
                None => format!("{} == {category}", feature_label(feature, spec)),
            }
        }
    }
}

fn action_label(action: usize, spec: Option<&EnvSpec>) -> String {
    match spec.and_then(|s| s.action_names().get(action)) {
        Some(n) if is_plain_name(n) => n.clone(),
        _ => action.to_string(),
    }
}

fn write_text(tree: &DecisionTree, i: usize, indent: usize, spec: Option<&EnvSpec>, out: &mut String) {
    let pad = "    ".repeat(indent);
    match &tree.nodes[i] {
        Node::Leaf(l) => {
            let q: Vec<String> = l.q.iter().map(|v| format!("{v:?}")).collect();
            let _ = writeln!(out, "{pad}leaf [action={} visits={} q={}]", action_label(l.greedy_action(), spec), l.visits, q.join(","));
        }
        Node::Split { condition, yes, no } => {
            let _ = writeln!(out, "{pad}if {} then", condition_text(condition, spec));
            write_text(tree, *yes, indent + 1, spec, out);
            let _ = writeln!(out, "{pad}else");
            write_text(tree, *no, indent + 1, spec, out);
        }
    }
}

fn dot_escape(s: &str) -> String {
    s.replace('\\', "\\\\").replace('"', "\\\"")
}

fn write_dot(tree: &DecisionTree, spec: Option<&EnvSpec>) -> String {
    let mut out = String::from("digraph policy {\n    node [fontname=\"Helvetica\"];\n");
    for (i, node) in tree.nodes.iter().enumerate() {
        match node {
            Node::Leaf(l) => {
                let action = match spec.and_then(|s| s.action_names().get(l.greedy_action())) {
                    Some(n) => n.clone(),
                    None => l.greedy_action().to_string(),
                };
                let _ = writeln!(out, "    n{i} [shape=ellipse, label=\"{}\\nvisits={}\"];", dot_escape(&action), l.visits);
            }
            Node::Split { condition, yes, no } => {
                let _ = writeln!(out, "    n{i} [shape=box, label=\"{}\"];", dot_escape(&condition_text(condition, spec)));
                let _ = writeln!(out, "    n{i} -> n{yes} [label=\"true\"];");
                let _ = writeln!(out, "    n{i} -> n{no} [label=\"false\"];");
            }
        }
    }
    out.push_str("}\n");
    out
}

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Ident(String),
    Number(String),
    Str(String),
    Gt,
    EqEq,
    Eq,
    LBracket,
    RBracket,
    Comma,
}

struct Lexer<'a> {
    src: &'a str,
    pos: usize,
    peeked: Option<Option<(usize, Tok)>>,
}

impl<'a> Lexer<'a> {
    fn new(src: &'a str) -> Self {
        Lexer { src, pos: 0, peeked: None }
    }

    fn err(&self, offset: usize, message: impl Into<String>) -> TreeError {
        TreeError::Parse { offset, message: message.into() }
    }

    fn peek(&mut self) -> Result<Option<&(usize, Tok)>, TreeError> {
        if self.peeked.is_none() {
            let t = self.lex()?;
            self.peeked = Some(t);
        }
        Ok(self.peeked.as_ref().unwrap().as_ref())
    }

    fn next(&mut self) -> Result<Option<(usize, Tok)>, TreeError> {
        match self.peeked.take() {
            Some(t) => Ok(t),
            None => self.lex(),
        }
    }

    fn lex(&mut self) -> Result<Option<(usize, Tok)>, TreeError> {
        let bytes = self.src.as_bytes();
        loop {
            while self.pos < bytes.len() && bytes[self.pos].is_ascii_whitespace() {
                self.pos += 1;
            }
            if self.pos < bytes.len() && bytes[self.pos] == b'#' {
                while self.pos < bytes.len() && bytes[self.pos] != b'\n' {
                    self.pos += 1;
                }
                continue;
            }
            break;
        }
        let start = self.pos;
        let Some(&c) = bytes.get(start) else { return Ok(None) };
        let tok = match c {
            b'>' => {
                self.pos += 1;
                Tok::Gt
            }
            b'=' if bytes.get(start + 1) == Some(&b'=') => {
                self.pos += 2;
                Tok::EqEq
            }
            b'=' => {
                self.pos += 1;
                Tok::Eq
            }
            b'[' => {
                self.pos += 1;
                Tok::LBracket
            }
            b']' => {
                self.pos += 1;
                Tok::RBracket
            }
            b',' => {
                self.pos += 1;
                Tok::Comma
            }
            b'"' => {
                self.pos += 1;
                let mut s = String::new();
                let mut chars = self.src[self.pos..].char_indices();
                loop {
                    match chars.next() {
                        None => return Err(self.err(start, "unterminated string")),
                        Some((i, '"')) => {
                            self.pos += i + 1;
                            break;
                        }
                        Some((_, '\\')) => match chars.next() {
                            Some((_, e)) => s.push(e),
                            None => return Err(self.err(start, "unterminated string")),
                        },
                        Some((_, ch)) => s.push(ch),
                    }
                }
                Tok::Str(s)
            }
            b'-' | b'+' | b'.' | b'0'..=b'9' => {
                while self.pos < bytes.len() && (bytes[self.pos].is_ascii_alphanumeric() || matches!(bytes[self.pos], b'.' | b'-' | b'+')) {
                    self.pos += 1;
                }
                Tok::Number(self.src[start..self.pos].to_string())
            }
            c if c.is_ascii_alphabetic() || c == b'_' => {
                while self.pos < bytes.len() && (bytes[self.pos].is_ascii_alphanumeric() || bytes[self.pos] == b'_') {
                    self.pos += 1;
                }
                Tok::Ident(self.src[start..self.pos].to_string())
            }
            _ => {
                let ch = self.src[start..].chars().next().unwrap_or('?');
                return Err(self.err(start, format!("unexpected character {ch:?}")));
            }
        };
        Ok(Some((start, tok)))
    }
}

struct Parser<'a, 's> {
    lex: Lexer<'a>,
    n_actions: usize,
    spec: Option<&'s EnvSpec>,
}

impl Parser<'_, '_> {
    fn expect_next(&mut self, what: &str) -> Result<(usize, Tok), TreeError> {
        let end = self.lex.src.len();
        self.lex.next()?.ok_or_else(|| self.lex.err(end, format!("expected {what}, found end of input")))
    }

    fn keyword(&mut self, kw: &str) -> Result<(), TreeError> {
        match self.expect_next(kw)? {
            (_, Tok::Ident(s)) if s == kw => Ok(()),
            (off, t) => Err(self.lex.err(off, format!("expected `{kw}`, found {t:?}"))),
        }
    }

    fn tree(&mut self, depth: usize) -> Result<TreeNode, TreeError> {
        match self.expect_next("`if` or `leaf`")? {
            (off, _) if depth > MAX_PARSE_DEPTH => Err(self.lex.err(off, "tree nested too deeply")),
            (_, Tok::Ident(s)) if s == "leaf" => self.leaf(),
            (_, Tok::Ident(s)) if s == "if" => {
                let condition = self.condition()?;
                self.keyword("then")?;
                let yes = self.tree(depth + 1)?;
                self.keyword("else")?;
                let no = self.tree(depth + 1)?;
                Ok(TreeNode::split(condition, yes, no))
            }
            (off, t) => Err(self.lex.err(off, format!("expected `if` or `leaf`, found {t:?}"))),
        }
    }

    fn number(&self, off: usize, text: &str) -> Result<f64, TreeError> {
        match text.parse::<f64>() {
            Ok(v) if v.is_finite() => Ok(v),
            _ => Err(self.lex.err(off, format!("invalid number {text:?}"))),
        }
    }

    fn feature(&self, off: usize, name: &str) -> Result<usize, TreeError> {
        if let Some(i) = index_name(name) {
            return Ok(i);
        }
        self.spec
            .and_then(|s| s.features().iter().position(|f| f.name == name))
            .ok_or_else(|| self.lex.err(off, format!("unknown feature {name:?}")))
    }

    fn condition(&mut self) -> Result<Condition, TreeError> {
        let (off, tok) = self.expect_next("feature")?;
        let Tok::Ident(name) = tok else {
            return Err(self.lex.err(off, format!("expected feature, found {tok:?}")));
        };
        let feature = self.feature(off, &name)?;
        match self.expect_next("`>` or `==`")? {
            (_, Tok::Gt) => match self.expect_next("threshold")? {
                (o, Tok::Number(t)) => Ok(Condition::Greater { feature, threshold: self.number(o, &t)? }),
                (o, t) => Err(self.lex.err(o, format!("expected threshold, found {t:?}"))),
            },
            (_, Tok::EqEq) => match self.expect_next("category")? {
                (o, Tok::Number(t)) => match t.parse::<u32>() {
                    Ok(category) => Ok(Condition::Equals { feature, category }),
                    Err(_) => Err(self.lex.err(o, format!("invalid category id {t:?}"))),
                },
                (o, Tok::Str(s)) => {
                    let cat = self.spec.and_then(|sp| sp.features().get(feature)).and_then(|f| match &f.kind {
                        FeatureKind::Categorical { categories } => categories.iter().position(|c| *c == s),
                        FeatureKind::Numeric { .. } => None,
                    });
                    match cat {
                        Some(c) => Ok(Condition::Equals { feature, category: c as u32 }),
                        None => Err(self.lex.err(o, format!("unknown category {s:?}"))),
                    }
                }
                (o, t) => Err(self.lex.err(o, format!("expected category, found {t:?}"))),
            },
            (o, t) => Err(self.lex.err(o, format!("expected `>` or `==`, found {t:?}"))),
        }
    }

    fn leaf(&mut self) -> Result<TreeNode, TreeError> {
        let mut leaf = Leaf::new(self.n_actions);
        if !matches!(self.lex.peek()?, Some((_, Tok::LBracket))) {
            return Ok(TreeNode::Leaf(leaf));
        }
        self.lex.next()?;
        loop {
            let (off, tok) = self.expect_next("`]`")?;
            let key = match tok {
                Tok::RBracket => break,
                Tok::Ident(k) => k,
                t => return Err(self.lex.err(off, format!("expected annotation, found {t:?}"))),
            };
            match self.expect_next("`=`")? {
                (_, Tok::Eq) => {}
                (o, t) => return Err(self.lex.err(o, format!("expected `=`, found {t:?}"))),
            }
            match key.as_str() {
                "action" => match self.expect_next("action")? {
                    (_, Tok::Ident(_)) | (_, Tok::Number(_)) => {}
                    (o, t) => return Err(self.lex.err(o, format!("expected action, found {t:?}"))),
                },
                "visits" => match self.expect_next("visit count")? {
                    (o, Tok::Number(t)) => leaf.visits = t.parse().map_err(|_| self.lex.err(o, format!("invalid visit count {t:?}")))?,
                    (o, t) => return Err(self.lex.err(o, format!("expected visit count, found {t:?}"))),
                },
                "q" => {
                    let mut q = Vec::new();
                    loop {
                        match self.expect_next("q-value")? {
                            (o, Tok::Number(t)) => q.push(self.number(o, &t)?),
                            (o, t) => return Err(self.lex.err(o, format!("expected q-value, found {t:?}"))),
                        }
                        if matches!(self.lex.peek()?, Some((_, Tok::Comma))) {
                            self.lex.next()?;
                        } else {
                            break;
                        }
                    }
                    if q.len() != self.n_actions {
                        return Err(self.lex.err(off, format!("leaf has {} q-values, expected {}", q.len(), self.n_actions)));
                    }
                    let visits = leaf.visits;
                    leaf = Leaf::with_q(q);
                    leaf.visits = visits;
                }
                other => return Err(self.lex.err(off, format!("unknown leaf annotation {other:?}"))),
            }
        }
        Ok(TreeNode::Leaf(leaf))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::Feature;
    use crate::rng;
    use proptest::prelude::*;

    fn buy_spec() -> EnvSpec {
        EnvSpec::new(
            vec![Feature::numeric("A", 0.0, 20.0), Feature::categorical("mt", vec!["LT7".into(), "LT8p".into(), "LT7 INS".into()])],
            vec!["MAKE".into(), "BUY".into()],
            5,
            false,
        )
        .unwrap()
    }

    /// if A > 4 then BUY else MAKE
    fn outsourcing_tree() -> DecisionTree {
        DecisionTree::from_node(TreeNode::split(
            Condition::Greater { feature: 0, threshold: 4.0 },
            TreeNode::Leaf(Leaf::constant(1, 2)),
            TreeNode::Leaf(Leaf::constant(0, 2)),
        ))
        .unwrap()
    }

    #[test]
    fn strict_threshold_routing() {
        let mut t = outsourcing_tree();
        let buy = t.traverse(&[7.0, 0.0]).unwrap();
        assert_eq!(t.leaf(buy).greedy_action(), 1);
        let make = t.traverse(&[4.0, 0.0]).unwrap();
        assert_eq!(t.leaf(make).greedy_action(), 0);
        assert_eq!(t.total_visits(), 2);
    }

    #[test]
    fn single_leaf_catches_everything() {
        let mut t = DecisionTree::from_node(TreeNode::Leaf(Leaf::new(3))).unwrap();
        for x in [-1e9, 0.0, 3.5] {
            assert_eq!(t.traverse(&[x]).unwrap(), t.root());
        }
        assert_eq!(t.leaf(t.root()).visits(), 3);
    }

    #[test]
    fn categorical_routing_and_rejection() {
        let t = DecisionTree::from_node(TreeNode::split(
            Condition::Equals { feature: 1, category: 1 },
            TreeNode::Leaf(Leaf::constant(1, 2)),
            TreeNode::Leaf(Leaf::constant(0, 2)),
        ))
        .unwrap();
        assert_eq!(t.greedy_action(&[0.0, 1.0]).unwrap(), 1);
        assert_eq!(t.greedy_action(&[0.0, 2.0]).unwrap(), 0);
        assert!(t.route(&[0.0, 1.5]).is_err());
        assert!(t.route(&[0.0]).is_err());
    }

    #[test]
    fn greedy_selection_and_tie_break() {
        let mut r = rng::from_seed(0);
        assert_eq!(act_epsilon_greedy(&Leaf::with_q(vec![0.2, 0.9]), 0.0, &mut r), 1);
        assert_eq!(act_epsilon_greedy(&Leaf::with_q(vec![0.5, 0.5]), 0.0, &mut r), 0);
    }

    #[test]
    fn full_exploration_is_uniform() {
        let leaf = Leaf::with_q(vec![5.0, -1.0, 0.3]);
        let mut r = rng::from_seed(42);
        let n = 100_000usize;
        let mut counts = [0usize; 3];
        for _ in 0..n {
            counts[act_epsilon_greedy(&leaf, 1.0, &mut r)] += 1;
        }
        let p = 1.0 / 3.0;
        let sigma = (n as f64 * p * (1.0 - p)).sqrt();
        for c in counts {
            assert!((c as f64 - n as f64 * p).abs() <= 3.0 * sigma, "{counts:?}");
        }
    }

    #[test]
    fn bellman_update_values() {
        let mut l = Leaf::with_q(vec![0.0, 0.0]);
        assert!((q_update(&mut l, 0, 1.0, 0.0, 0.1, 0.9) - 0.1).abs() < 1e-12);
        assert_eq!(l.q()[1], 0.0);
        assert_eq!(l.updates(), &[1, 0]);

        let mut l = Leaf::with_q(vec![0.37]);
        assert_eq!(q_update(&mut l, 0, 5.0, 2.0, 0.0, 0.9), 0.37);

        let mut l = Leaf::with_q(vec![0.5, 3.0]);
        assert!((q_update(&mut l, 0, 0.0, 1.0, 0.5, 0.9) - 0.7).abs() < 1e-12);
        assert_eq!(l.q()[1], 3.0);
    }

    #[test]
    fn prune_drops_unvisited_branch() {
        let mut t = outsourcing_tree();
        t.traverse(&[9.0, 0.0]).unwrap();
        let p = t.prune_unreached();
        assert_eq!(p.node_count(), 1);
        assert_eq!(p.leaf(p.root()).greedy_action(), 1);
        assert_eq!(p.leaf(p.root()).visits(), 1);
    }

    #[test]
    fn prune_keeps_fully_visited_tree() {
        let mut t = outsourcing_tree();
        t.traverse(&[9.0, 0.0]).unwrap();
        t.traverse(&[1.0, 0.0]).unwrap();
        assert_eq!(t.prune_unreached(), t);
    }

    #[test]
    fn prune_is_bottom_up_to_fixpoint() {
        // if A > 4 then (if A > 10 then L1 else L2) else L3, only A=6 observed
        let mut t = DecisionTree::from_node(TreeNode::split(
            Condition::Greater { feature: 0, threshold: 4.0 },
            TreeNode::split(
                Condition::Greater { feature: 0, threshold: 10.0 },
                TreeNode::Leaf(Leaf::with_q(vec![0.1, 0.2])),
                TreeNode::Leaf(Leaf::with_q(vec![0.3, 0.4])),
            ),
            TreeNode::Leaf(Leaf::with_q(vec![0.5, 0.6])),
        ))
        .unwrap();
        t.traverse(&[6.0, 0.0]).unwrap();
        let p = t.prune_unreached();
        assert_eq!(p.node_count(), 1);
        assert_eq!(p.leaf(p.root()).q(), &[0.3, 0.4]);
    }

    #[test]
    fn text_export_names_and_round_trip() {
        let spec = buy_spec();
        let mut t = outsourcing_tree();
        t.traverse(&[7.0, 0.0]).unwrap();
        let text = export(&t, ExportFormat::Text, Some(&spec));
        assert_eq!(text, "if A > 4.0 then\n    leaf [action=BUY visits=1 q=0.0,1.0]\nelse\n    leaf [action=MAKE visits=0 q=1.0,0.0]\n");
        let back = DecisionTree::parse(&text, 2, Some(&spec)).unwrap();
        assert!(back.same_structure(&t));
        let plain = export(&t, ExportFormat::Text, None);
        assert!(plain.starts_with("if x0 > 4.0 then"));
        assert!(DecisionTree::parse(&plain, 2, None).unwrap().same_structure(&t));
    }

    #[test]
    fn categorical_names_with_spaces_round_trip() {
        let spec = buy_spec();
        let t = DecisionTree::from_node(TreeNode::split(
            Condition::Equals { feature: 1, category: 2 },
            TreeNode::Leaf(Leaf::constant(1, 2)),
            TreeNode::Leaf(Leaf::constant(0, 2)),
        ))
        .unwrap();
        let text = export(&t, ExportFormat::Text, Some(&spec));
        assert!(text.starts_with("if mt == \"LT7 INS\" then"));
        assert!(DecisionTree::parse(&text, 2, Some(&spec)).unwrap().same_structure(&t));
    }

    #[test]
    fn dot_export_is_deterministic() {
        let single = DecisionTree::from_node(TreeNode::Leaf(Leaf::constant(1, 2))).unwrap();
        let dot = export(&single, ExportFormat::Dot, None);
        assert_eq!(dot.matches("shape=").count(), 1);
        assert!(!dot.contains("->"));
        let t = outsourcing_tree();
        let a = export(&t, ExportFormat::Dot, Some(&buy_spec()));
        assert_eq!(a, export(&t, ExportFormat::Dot, Some(&buy_spec())));
        assert!(a.contains("label=\"A > 4.0\""));
        assert!(a.contains("n0 -> n1 [label=\"true\"]"));
    }

    #[test]
    fn bare_leaves_and_comments_parse() {
        let t = DecisionTree::parse("# policy\nif x0 > 0.5 then leaf else leaf", 3, None).unwrap();
        assert_eq!(t.leaf_count(), 2);
        assert_eq!(t.n_actions(), 3);
    }

    #[test]
    fn parse_errors() {
        for bad in [
            "",
            "if",
            "if x0 > then leaf else leaf",
            "if x0 > 1 leaf else leaf",
            "leaf leaf",
            "leaf [q=1]",
            "leaf [q=1,2,3]",
            "leaf [visits=-1]",
            "leaf [bogus=1]",
            "if foo > 1 then leaf else leaf",
            "if x0 == \"LT7\" then leaf else leaf",
            "if x0 > nan then leaf else leaf",
            "if x0 > inf then leaf else leaf",
            "leaf [q=\"a\",1]",
            "if x0 > 1 then leaf else leaf ]",
            "\"unterminated",
            "§",
        ] {
            assert!(DecisionTree::parse(bad, 2, None).is_err(), "accepted {bad:?}");
        }
    }

    #[test]
    fn deep_nesting_is_rejected_not_overflowed() {
        let text = "if x0 > 1 then ".repeat(100_000) + "leaf";
        assert!(matches!(DecisionTree::parse(&text, 2, None), Err(TreeError::Parse { .. })));
    }

    #[test]
    fn schema_check() {
        let spec = buy_spec();
        assert!(outsourcing_tree().check_schema(&spec).is_ok());
        let bad = DecisionTree::from_node(TreeNode::split(
            Condition::Greater { feature: 0, threshold: 40.0 },
            TreeNode::Leaf(Leaf::new(2)),
            TreeNode::Leaf(Leaf::new(2)),
        ))
        .unwrap();
        assert!(bad.check_schema(&spec).is_err());
        let kind = DecisionTree::from_node(TreeNode::split(
            Condition::Greater { feature: 1, threshold: 0.0 },
            TreeNode::Leaf(Leaf::new(2)),
            TreeNode::Leaf(Leaf::new(2)),
        ))
        .unwrap();
        assert!(kind.check_schema(&spec).is_err());
    }

    #[test]
    fn mismatched_leaves_rejected() {
        let r = DecisionTree::from_node(TreeNode::split(
            Condition::Greater { feature: 0, threshold: 0.0 },
            TreeNode::Leaf(Leaf::new(2)),
            TreeNode::Leaf(Leaf::new(3)),
        ));
        assert_eq!(r, Err(TreeError::ActionCountMismatch(2, 3)));
    }

    fn arb_tree() -> impl Strategy<Value = TreeNode> {
        let leaf = (prop::collection::vec(-5.0f64..5.0, 2), 0u64..5).prop_map(|(q, v)| {
            let mut l = Leaf::with_q(q);
            l.visits = v;
            TreeNode::Leaf(l)
        });
        leaf.prop_recursive(5, 32, 2, |inner| {
            (0usize..2, -3i32..12, inner.clone(), inner).prop_map(|(f, th, y, n)| {
                let condition = if f == 0 {
                    Condition::Greater { feature: 0, threshold: th as f64 / 2.0 }
                } else {
                    Condition::Equals { feature: 1, category: th.rem_euclid(3) as u32 }
                };
                TreeNode::split(condition, y, n)
            })
        })
    }

    proptest! {
        #[test]
        fn text_round_trip(node in arb_tree()) {
            let t = DecisionTree::from_node(node).unwrap();
            let text = export(&t, ExportFormat::Text, None);
            prop_assert!(DecisionTree::parse(&text, 2, None).unwrap().same_structure(&t));
            let named = export(&t, ExportFormat::Text, Some(&buy_spec()));
            prop_assert!(DecisionTree::parse(&named, 2, Some(&buy_spec())).unwrap().same_structure(&t));
        }

        #[test]
        fn exactly_one_leaf_per_observation(node in arb_tree(), a in -3i32..12, c in 0u32..3) {
            let mut t = DecisionTree::from_node(node).unwrap();
            t.reset_visits();
            let obs = [a as f64 / 2.0, c as f64];
            t.traverse(&obs).unwrap();
            prop_assert_eq!(t.total_visits(), 1);
            prop_assert_eq!(t.leaves().filter(|(_, l)| l.visits() == 1).count(), 1);
        }

        #[test]
        fn pruned_tree_agrees_on_observed_inputs(node in arb_tree(), xs in prop::collection::vec((-3i32..12, 0u32..3), 1..20)) {
            let mut t = DecisionTree::from_node(node).unwrap();
            t.reset_visits();
            let obs: Vec<[f64; 2]> = xs.iter().map(|&(a, c)| [a as f64 / 2.0, c as f64]).collect();
            for o in &obs { t.traverse(o).unwrap(); }
            let p = t.prune_unreached();
            prop_assert!(p.node_count() <= t.node_count());
            for o in &obs {
                prop_assert_eq!(p.greedy_action(o).unwrap(), t.greedy_action(o).unwrap());
                prop_assert_eq!(p.leaf(p.route(o).unwrap()).q(), t.leaf(t.route(o).unwrap()).q());
            }
        }

        #[test]
        fn q_update_fixpoint(q_other in -3.0f64..3.0, r in -2.0f64..2.0, max_next in -2.0f64..2.0, alpha in 0.0f64..=1.0) {
            let gamma = 0.9;
            let target = r + gamma * max_next;
            let mut l = Leaf::with_q(vec![target, q_other]);
            let v = q_update(&mut l, 0, r, max_next, alpha, gamma);
            prop_assert!((v - target).abs() <= 1e-12);
        }

        #[test]
        fn greedy_is_scale_invariant(q in prop::collection::vec(-5.0f64..5.0, 1..6), k in 0.01f64..100.0) {
            let a = Leaf::with_q(q.clone()).greedy_action();
            let b = Leaf::with_q(q.iter().map(|v| v * k).collect()).greedy_action();
            prop_assert_eq!(a, b);
        }
    }
}
