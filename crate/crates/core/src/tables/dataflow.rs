//! Rule-level dataflow graphs: cycle detection, stratification checks, the
//! one-shot rewrite of recursive differences, and two evaluators.
//!
//! # Text form
//!
//! One statement per line; `#` starts a comment.
//!
//! ```text
//! target <= expr        # merge into target this pass
//! target <+ expr        # merge into target at the end of the pass
//! target := expr        # replace target
//! twopset target neg y  # target is read as (its contents) - y
//! ```
//!
//! `expr` is `term (op term)*` with `op` one of `-`, `minus`, `+`, `union`,
//! evaluated left to right. A term is a table name or `count(name)`, the
//! latter producing the one-element set holding the size of `name`.
//!
//! Edges run from every table an expression reads to the rule's target.
//! Terms after `-` give negation edges, `count` gives aggregate edges, the
//! rest are monotone. Edges from `<+` rules are deferred.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use petgraph::algo::toposort;
use petgraph::graph::{DiGraph, NodeIndex};
use thiserror::Error;

use super::Datum;

/// Contents of every table during evaluation.
pub type Relations = BTreeMap<String, BTreeSet<Datum>>;

/// Pass cap for [`DataflowGraph::evaluate_stratified`].
pub const DEFAULT_PASS_CAP: usize = 10_000;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum DataflowError {
    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("unknown node `{0}`")]
    UnknownNode(String),
    #[error("no fixpoint after {0} passes")]
    Divergence(usize),
    #[error("graph is cyclic ({0}); one-shot evaluation needs an acyclic graph")]
    Cyclic(Cycle),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum EdgeKind {
    Monotone,
    Negation,
    Aggregate,
}

impl EdgeKind {
    pub fn is_monotone(self) -> bool {
        self == EdgeKind::Monotone
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
pub struct Edge {
    pub src: String,
    pub dst: String,
    pub kind: EdgeKind,
    pub deferred: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RuleOp {
    /// `<=`
    Merge,
    /// `<+`
    Defer,
    /// `:=`
    Assign,
}

impl RuleOp {
    fn symbol(self) -> &'static str {
        match self {
            RuleOp::Merge => "<=",
            RuleOp::Defer => "<+",
            RuleOp::Assign => ":=",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Term {
    Table(String),
    Count(String),
}

impl Term {
    fn table(&self) -> &str {
        match self {
            Term::Table(t) | Term::Count(t) => t,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SetOp {
    Union,
    Minus,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Expr {
    pub first: Term,
    pub rest: Vec<(SetOp, Term)>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Rule {
    pub target: String,
    pub op: RuleOp,
    pub expr: Expr,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum NodeKind {
    Table,
    /// Read as stored contents minus the union of `neg`.
    TwoPSet {
        neg: Vec<String>,
    },
}

/// A simple cycle, listed from its smallest node name.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
pub struct Cycle(pub Vec<String>);

impl fmt::Display for Cycle {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut path = self.0.clone();
        if let Some(first) = self.0.first() {
            path.push(first.clone());
        }
        f.write_str(&path.join(" -> "))
    }
}

impl Cycle {
    /// Consecutive `(src, dst)` pairs, closing back to the start.
    pub fn hops(&self) -> impl Iterator<Item = (&str, &str)> {
        let n = self.0.len();
        (0..n).map(move |i| (self.0[i].as_str(), self.0[(i + 1) % n].as_str()))
    }
}

/// Output of [`DataflowGraph::rewrite_one_shot`].
#[derive(Debug, Clone)]
pub struct Rewrite {
    pub graph: DataflowGraph,
    /// Tables turned into two-phase sets.
    pub rewritten: Vec<String>,
    /// Cycles still present afterwards.
    pub needs_stratification: Vec<Cycle>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Evaluation {
    pub relations: Relations,
    pub passes: usize,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct DataflowGraph {
    nodes: BTreeMap<String, NodeKind>,
    rules: Vec<Rule>,
    extra: Vec<Edge>,
}

fn is_ident(s: &str) -> bool {
    let mut chars = s.chars();
    matches!(chars.next(), Some(c) if c.is_ascii_alphabetic() || c == '_')
        && chars.all(|c| c.is_ascii_alphanumeric() || c == '_')
}

fn parse_term(tok: &str, line: usize) -> Result<Term, DataflowError> {
    let err = |msg: String| DataflowError::Parse { line, msg };
    if let Some(inner) = tok.strip_prefix("count(").and_then(|t| t.strip_suffix(')')) {
        if is_ident(inner) {
            return Ok(Term::Count(inner.to_owned()));
        }
        return Err(err(format!("bad count argument `{inner}`")));
    }
    if is_ident(tok) {
        Ok(Term::Table(tok.to_owned()))
    } else {
        Err(err(format!("expected a table name, found `{tok}`")))
    }
}

fn parse_expr(src: &str, line: usize) -> Result<Expr, DataflowError> {
    let toks: Vec<&str> = src.split_whitespace().collect();
    let Some((first, rest)) = toks.split_first() else {
        return Err(DataflowError::Parse {
            line,
            msg: "empty expression".into(),
        });
    };
    let mut expr = Expr {
        first: parse_term(first, line)?,
        rest: Vec::new(),
    };
    for pair in rest.chunks(2) {
        let op = match pair[0] {
            "-" | "minus" => SetOp::Minus,
            "+" | "union" => SetOp::Union,
            other => {
                return Err(DataflowError::Parse {
                    line,
                    msg: format!("expected an operator, found `{other}`"),
                })
            }
        };
        let Some(term) = pair.get(1) else {
            return Err(DataflowError::Parse {
                line,
                msg: "operator without right operand".into(),
            });
        };
        expr.rest.push((op, parse_term(term, line)?));
    }
    Ok(expr)
}

impl DataflowGraph {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn parse(text: &str) -> Result<Self, DataflowError> {
        let mut g = Self::new();
        for (i, raw) in text.lines().enumerate() {
            let line = i + 1;
            let stmt = raw.split('#').next().unwrap_or("").trim();
            if stmt.is_empty() {
                continue;
            }
            let words: Vec<&str> = stmt.split_whitespace().collect();
            if words[0] == "twopset" {
                match words.as_slice() {
                    ["twopset", x, "neg", ys @ ..] if is_ident(x) && !ys.is_empty() => {
                        if let Some(bad) = ys.iter().find(|y| !is_ident(y)) {
                            return Err(DataflowError::Parse {
                                line,
                                msg: format!("bad table name `{bad}`"),
                            });
                        }
                        g.declare_twopset(x, ys.iter().map(|y| y.to_string()).collect());
                    }
                    _ => {
                        return Err(DataflowError::Parse {
                            line,
                            msg: "expected `twopset NAME neg NAME...`".into(),
                        })
                    }
                }
                continue;
            }
            let (op, at) = [RuleOp::Merge, RuleOp::Defer, RuleOp::Assign]
                .into_iter()
                .find_map(|op| stmt.find(op.symbol()).map(|at| (op, at)))
                .ok_or_else(|| DataflowError::Parse {
                    line,
                    msg: "expected `<=`, `<+` or `:=`".into(),
                })?;
            let target = stmt[..at].trim();
            if !is_ident(target) {
                return Err(DataflowError::Parse {
                    line,
                    msg: format!("bad target `{target}`"),
                });
            }
            let expr = parse_expr(&stmt[at + 2..], line)?;
            g.add_rule(Rule {
                target: target.to_owned(),
                op,
                expr,
            });
        }
        Ok(g)
    }

    pub fn add_node(&mut self, name: &str) {
        self.nodes.entry(name.to_owned()).or_insert(NodeKind::Table);
    }

    pub fn declare_twopset(&mut self, name: &str, neg: Vec<String>) {
        for y in &neg {
            self.add_node(y);
        }
        self.nodes
            .insert(name.to_owned(), NodeKind::TwoPSet { neg });
    }

    pub fn add_rule(&mut self, rule: Rule) {
        self.add_node(&rule.target);
        self.add_node(rule.expr.first.table());
        for (_, t) in &rule.expr.rest {
            self.add_node(t.table());
        }
        self.rules.push(rule);
    }

    /// Adds an edge not backed by a textual rule. Both ends must exist.
    pub fn add_edge(&mut self, edge: Edge) -> Result<(), DataflowError> {
        for n in [&edge.src, &edge.dst] {
            if !self.nodes.contains_key(n) {
                return Err(DataflowError::UnknownNode(n.clone()));
            }
        }
        self.extra.push(edge);
        Ok(())
    }

    pub fn nodes(&self) -> impl Iterator<Item = (&str, &NodeKind)> {
        self.nodes.iter().map(|(k, v)| (k.as_str(), v))
    }

    pub fn node(&self, name: &str) -> Option<&NodeKind> {
        self.nodes.get(name)
    }

    pub fn rules(&self) -> &[Rule] {
        &self.rules
    }

    pub fn edges(&self) -> Vec<Edge> {
        let mut out = Vec::new();
        for r in &self.rules {
            let deferred = r.op == RuleOp::Defer;
            let mut push = |t: &Term, negated: bool| {
                let kind = match (t, negated) {
                    (Term::Count(_), _) => EdgeKind::Aggregate,
                    (Term::Table(_), true) => EdgeKind::Negation,
                    (Term::Table(_), false) => EdgeKind::Monotone,
                };
                out.push(Edge {
                    src: t.table().to_owned(),
                    dst: r.target.clone(),
                    kind,
                    deferred,
                });
            };
            push(&r.expr.first, false);
            for (op, t) in &r.expr.rest {
                push(t, *op == SetOp::Minus);
            }
        }
        for (x, kind) in &self.nodes {
            if let NodeKind::TwoPSet { neg } = kind {
                for y in neg {
                    out.push(Edge {
                        src: y.clone(),
                        dst: x.clone(),
                        kind: EdgeKind::Negation,
                        deferred: false,
                    });
                }
            }
        }
        out.extend(self.extra.iter().cloned());
        out.sort();
        out.dedup();
        out
    }

    fn successors(&self, edges: &[Edge]) -> BTreeMap<&str, BTreeSet<&str>> {
        let mut succ: BTreeMap<&str, BTreeSet<&str>> = self
            .nodes
            .keys()
            .map(|k| (k.as_str(), BTreeSet::new()))
            .collect();
        for e in edges {
            if let (Some((s, _)), Some((d, _))) = (
                self.nodes.get_key_value(&e.src),
                self.nodes.get_key_value(&e.dst),
            ) {
                succ.entry(s.as_str()).or_default().insert(d.as_str());
            }
        }
        succ
    }

    fn cycles_over(&self, edges: &[Edge]) -> Vec<Cycle> {
        let succ = self.successors(edges);
        let mut out = Vec::new();
        // Each simple cycle is found exactly once, from its smallest node,
        // by only walking through larger nodes.
        for &start in succ.keys() {
            let mut path = vec![start];
            let mut stack = vec![succ[start].iter()];
            while let Some(iter) = stack.last_mut() {
                match iter.next() {
                    Some(&next) if next == start => {
                        out.push(Cycle(path.iter().map(|s| s.to_string()).collect()));
                    }
                    Some(&next) if next > start && !path.contains(&next) => {
                        path.push(next);
                        stack.push(succ[next].iter());
                    }
                    Some(_) => {}
                    None => {
                        stack.pop();
                        path.pop();
                    }
                }
            }
        }
        out.sort();
        out
    }

    /// Every simple cycle, self-loops included.
    pub fn detect_cycles(&self) -> Vec<Cycle> {
        self.cycles_over(&self.edges())
    }

    /// Cycles that cannot be evaluated inside one tick: all hops are
    /// same-tick edges and at least one hop is non-monotone.
    pub fn stratification_conflicts(&self) -> Vec<Cycle> {
        let instant: Vec<Edge> = self.edges().into_iter().filter(|e| !e.deferred).collect();
        self.cycles_over(&instant)
            .into_iter()
            .filter(|c| {
                c.hops().any(|(s, d)| {
                    instant
                        .iter()
                        .any(|e| e.src == s && e.dst == d && !e.kind.is_monotone())
                })
            })
            .collect()
    }

    fn reaches(&self, from: &str, to: &str) -> bool {
        let edges = self.edges();
        let succ = self.successors(&edges);
        let mut seen = BTreeSet::new();
        let mut todo = vec![from];
        while let Some(n) = todo.pop() {
            if n == to {
                return true;
            }
            if seen.insert(n) {
                todo.extend(succ.get(n).into_iter().flatten().copied());
            }
        }
        false
    }

    /// Replaces each `X := X - Y...` (the only rule for X, with no Y
    /// depending on X) by a two-phase set node for X with negative side Y.
    pub fn rewrite_one_shot(&self) -> Rewrite {
        let mut graph = self.clone();
        let mut rewritten = Vec::new();
        for rule in &self.rules {
            let x = &rule.target;
            if rule.op != RuleOp::Assign || rule.expr.first != Term::Table(x.clone()) {
                continue;
            }
            let mut ys = Vec::new();
            for (op, t) in &rule.expr.rest {
                match (op, t) {
                    (SetOp::Minus, Term::Table(y)) if y != x => ys.push(y.clone()),
                    _ => {
                        ys.clear();
                        break;
                    }
                }
            }
            let sole = self.rules.iter().filter(|r| &r.target == x).count() == 1;
            if ys.is_empty() || !sole || ys.iter().any(|y| self.reaches(x, y)) {
                continue;
            }
            if matches!(self.nodes.get(x), Some(NodeKind::TwoPSet { .. })) {
                continue;
            }
            graph.rules.retain(|r| r != rule);
            graph.declare_twopset(x, ys);
            rewritten.push(x.clone());
        }
        let needs_stratification = graph.detect_cycles();
        Rewrite {
            graph,
            rewritten,
            needs_stratification,
        }
    }

    fn read(&self, rel: &Relations, name: &str) -> BTreeSet<Datum> {
        let stored = rel.get(name).cloned().unwrap_or_default();
        match self.nodes.get(name) {
            Some(NodeKind::TwoPSet { neg }) => {
                let dead: BTreeSet<&Datum> =
                    neg.iter().filter_map(|y| rel.get(y)).flatten().collect();
                stored.into_iter().filter(|d| !dead.contains(d)).collect()
            }
            _ => stored,
        }
    }

    fn eval_term(&self, rel: &Relations, t: &Term) -> BTreeSet<Datum> {
        match t {
            Term::Table(name) => self.read(rel, name),
            Term::Count(name) => BTreeSet::from([Datum::Int(self.read(rel, name).len() as i64)]),
        }
    }

    fn eval_expr(&self, rel: &Relations, e: &Expr) -> BTreeSet<Datum> {
        let mut acc = self.eval_term(rel, &e.first);
        for (op, t) in &e.rest {
            let rhs = self.eval_term(rel, t);
            match op {
                SetOp::Union => acc.extend(rhs),
                SetOp::Minus => acc.retain(|d| !rhs.contains(d)),
            }
        }
        acc
    }

    fn seed(&self, inputs: &Relations) -> Relations {
        let mut rel = inputs.clone();
        for n in self.nodes.keys() {
            rel.entry(n.clone()).or_default();
        }
        rel
    }

    /// Runs every rule, in order, once per pass until a pass changes
    /// nothing. `<+` results land at the end of their pass. The returned
    /// relations hold logical reads, so two-phase set nodes come back with
    /// their negative side applied.
    pub fn evaluate_stratified(
        &self,
        inputs: &Relations,
        cap: usize,
    ) -> Result<Evaluation, DataflowError> {
        let mut rel = self.seed(inputs);
        for pass in 1..=cap {
            let before = rel.clone();
            let mut deferred: Vec<(&str, BTreeSet<Datum>)> = Vec::new();
            for r in &self.rules {
                let v = self.eval_expr(&rel, &r.expr);
                match r.op {
                    RuleOp::Merge => rel.entry(r.target.clone()).or_default().extend(v),
                    RuleOp::Assign => {
                        rel.insert(r.target.clone(), v);
                    }
                    RuleOp::Defer => deferred.push((&r.target, v)),
                }
            }
            for (t, v) in deferred {
                rel.entry(t.to_owned()).or_default().extend(v);
            }
            if rel == before {
                return Ok(Evaluation {
                    relations: self.logical(&rel),
                    passes: pass,
                });
            }
        }
        Err(DataflowError::Divergence(cap))
    }

    /// Single pass in topological order. Fails on any cycle.
    pub fn evaluate_one_shot(&self, inputs: &Relations) -> Result<Evaluation, DataflowError> {
        let mut g: DiGraph<&str, ()> = DiGraph::new();
        let idx: BTreeMap<&str, NodeIndex> = self
            .nodes
            .keys()
            .map(|k| (k.as_str(), g.add_node(k.as_str())))
            .collect();
        for e in self.edges() {
            g.update_edge(idx[e.src.as_str()], idx[e.dst.as_str()], ());
        }
        let order = match toposort(&g, None) {
            Ok(order) => order,
            Err(_) => {
                let cycle = self.detect_cycles().into_iter().next();
                return Err(DataflowError::Cyclic(cycle.unwrap_or(Cycle(Vec::new()))));
            }
        };
        let mut rel = self.seed(inputs);
        for n in order {
            let name = g[n];
            for r in self.rules.iter().filter(|r| r.target == name) {
                let v = self.eval_expr(&rel, &r.expr);
                match r.op {
                    RuleOp::Assign => {
                        rel.insert(r.target.clone(), v);
                    }
                    RuleOp::Merge | RuleOp::Defer => {
                        rel.entry(r.target.clone()).or_default().extend(v)
                    }
                }
            }
        }
        Ok(Evaluation {
            relations: self.logical(&rel),
            passes: 1,
        })
    }

    fn logical(&self, rel: &Relations) -> Relations {
        rel.keys().map(|k| (k.clone(), self.read(rel, k))).collect()
    }
}

impl fmt::Display for Term {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Term::Table(t) => f.write_str(t),
            Term::Count(t) => write!(f, "count({t})"),
        }
    }
}

impl fmt::Display for DataflowGraph {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (x, kind) in &self.nodes {
            if let NodeKind::TwoPSet { neg } = kind {
                writeln!(f, "twopset {x} neg {}", neg.join(" "))?;
            }
        }
        for r in &self.rules {
            write!(f, "{} {} {}", r.target, r.op.symbol(), r.expr.first)?;
            for (op, t) in &r.expr.rest {
                let sym = match op {
                    SetOp::Union => "+",
                    SetOp::Minus => "-",
                };
                write!(f, " {sym} {t}")?;
            }
            writeln!(f)?;
        }
        Ok(())
    }
}
