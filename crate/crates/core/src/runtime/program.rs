use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::sync::Arc;

use crate::lattice::{DynLattice, Lattice};
use crate::tables::dataflow::{Edge, EdgeKind};
use crate::tables::DataflowGraph;

use super::{RuntimeError, StratificationError, WorkerId};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Persistence {
    /// Keeps its contents across ticks.
    Persistent,
    /// Emptied at the end of every tick.
    Scratch,
}

/// When a rule's output becomes visible.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Timing {
    /// `<=`: merged within the current tick, visible to later rules.
    Instant,
    /// `<+`: merged at the start of the next tick.
    Deferred,
}

/// One worker's tables, by name.
#[derive(Debug, Clone, Default)]
pub struct Tables(BTreeMap<String, Box<dyn DynLattice>>);

impl Tables {
    pub fn get_dyn(&self, name: &str) -> Option<&dyn DynLattice> {
        self.0.get(name).map(|b| b.as_ref())
    }

    pub fn get<L: Lattice>(&self, name: &str) -> Option<&L> {
        self.get_dyn(name).and_then(|t| t.downcast_ref::<L>())
    }

    /// Typed read that panics on a wrong name or type; for rule bodies,
    /// whose table references were validated when the program was built.
    pub fn expect<L: Lattice>(&self, name: &str) -> &L {
        self.get(name).unwrap_or_else(|| {
            panic!(
                "table `{name}` missing or not a {}",
                std::any::type_name::<L>()
            )
        })
    }

    pub(super) fn get_mut(&mut self, name: &str) -> Option<&mut Box<dyn DynLattice>> {
        self.0.get_mut(name)
    }

    pub(super) fn insert(&mut self, name: String, value: Box<dyn DynLattice>) {
        self.0.insert(name, value);
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.0.keys().map(String::as_str)
    }
}

pub type RuleBody = Arc<dyn Fn(&Tables) -> Box<dyn DynLattice> + Send + Sync>;

/// One message a channel wants to send.
#[derive(Debug, Clone)]
pub struct Outgoing {
    pub dst: WorkerId,
    pub token_id: u64,
    pub payload: Box<dyn DynLattice>,
}

/// What a channel's router may look at.
#[derive(Debug, Clone, Copy)]
pub struct RouteCtx<'a> {
    pub src: WorkerId,
    /// The workers present at start-up; key ownership is fixed to these.
    pub owners: &'a [WorkerId],
    /// Everyone registered so far.
    pub members: &'a [WorkerId],
}

pub type RouteFn = Arc<dyn Fn(&RouteCtx<'_>, &dyn DynLattice) -> Vec<Outgoing> + Send + Sync>;

#[derive(Clone)]
pub struct TableDecl {
    pub name: String,
    pub persistence: Persistence,
    pub proto: Box<dyn DynLattice>,
}

#[derive(Clone)]
pub struct RuleDecl {
    pub target: String,
    pub timing: Timing,
    pub sources: Vec<(String, EdgeKind)>,
    pub body: RuleBody,
}

#[derive(Clone)]
pub struct ChannelDecl {
    pub name: String,
    pub source: String,
    pub target: String,
    pub route: RouteFn,
}

/// The per-worker program every worker runs: tables, merge rules over
/// them, and channels that ship a scratch table's contents to other
/// workers' tables.
#[derive(Clone, Default)]
pub struct Program {
    pub(super) tables: Vec<TableDecl>,
    pub(super) rules: Vec<RuleDecl>,
    pub(super) channels: Vec<ChannelDecl>,
}

impl fmt::Debug for Program {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Program")
            .field(
                "tables",
                &self.tables.iter().map(|t| &t.name).collect::<Vec<_>>(),
            )
            .field("rules", &self.rules.len())
            .field(
                "channels",
                &self.channels.iter().map(|c| &c.name).collect::<Vec<_>>(),
            )
            .finish()
    }
}

impl Program {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn is_empty(&self) -> bool {
        self.tables.is_empty() && self.rules.is_empty() && self.channels.is_empty()
    }

    pub fn persistent(mut self, name: &str, proto: impl Lattice) -> Self {
        self.tables.push(TableDecl {
            name: name.to_owned(),
            persistence: Persistence::Persistent,
            proto: Box::new(proto),
        });
        self
    }

    pub fn scratch(mut self, name: &str, proto: impl Lattice) -> Self {
        self.tables.push(TableDecl {
            name: name.to_owned(),
            persistence: Persistence::Scratch,
            proto: Box::new(proto),
        });
        self
    }

    fn rule<L: Lattice>(
        mut self,
        target: &str,
        timing: Timing,
        sources: &[(&str, EdgeKind)],
        body: impl Fn(&Tables) -> L + Send + Sync + 'static,
    ) -> Self {
        self.rules.push(RuleDecl {
            target: target.to_owned(),
            timing,
            sources: sources.iter().map(|(s, k)| (s.to_string(), *k)).collect(),
            body: Arc::new(move |t| Box::new(body(t))),
        });
        self
    }

    /// `target <= body(sources)`.
    pub fn instant<L: Lattice>(
        self,
        target: &str,
        sources: &[(&str, EdgeKind)],
        body: impl Fn(&Tables) -> L + Send + Sync + 'static,
    ) -> Self {
        self.rule(target, Timing::Instant, sources, body)
    }

    /// `target <+ body(sources)`.
    pub fn deferred<L: Lattice>(
        self,
        target: &str,
        sources: &[(&str, EdgeKind)],
        body: impl Fn(&Tables) -> L + Send + Sync + 'static,
    ) -> Self {
        self.rule(target, Timing::Deferred, sources, body)
    }

    pub fn channel<L: Lattice>(
        mut self,
        name: &str,
        source: &str,
        target: &str,
        route: impl Fn(&RouteCtx<'_>, &L) -> Vec<Outgoing> + Send + Sync + 'static,
    ) -> Self {
        self.channels.push(ChannelDecl {
            name: name.to_owned(),
            source: source.to_owned(),
            target: target.to_owned(),
            route: Arc::new(move |ctx, v| match v.downcast_ref::<L>() {
                Some(v) => route(ctx, v),
                None => Vec::new(),
            }),
        });
        self
    }

    pub fn table(&self, name: &str) -> Option<&TableDecl> {
        self.tables.iter().find(|t| t.name == name)
    }

    /// Table-level dependency graph. Channel hops cross a tick boundary and
    /// count as deferred edges.
    pub fn dataflow(&self) -> DataflowGraph {
        let mut g = DataflowGraph::new();
        for t in &self.tables {
            g.add_node(&t.name);
        }
        let edges = self
            .rules
            .iter()
            .flat_map(|r| {
                r.sources.iter().map(|(s, k)| Edge {
                    src: s.clone(),
                    dst: r.target.clone(),
                    kind: *k,
                    deferred: r.timing == Timing::Deferred,
                })
            })
            .chain(self.channels.iter().map(|c| Edge {
                src: c.source.clone(),
                dst: c.target.clone(),
                kind: EdgeKind::Monotone,
                deferred: true,
            }));
        for e in edges {
            // unknown names are reported by `check`
            let _ = g.add_edge(e);
        }
        g
    }

    /// Validates table references and stratification.
    pub fn check(&self) -> Result<(), RuntimeError> {
        let names: BTreeSet<&str> = self.tables.iter().map(|t| t.name.as_str()).collect();
        let known = |n: &str| {
            if names.contains(n) {
                Ok(())
            } else {
                Err(RuntimeError::UnknownTable(n.to_owned()))
            }
        };
        for r in &self.rules {
            known(&r.target)?;
            for (s, _) in &r.sources {
                known(s)?;
            }
        }
        for c in &self.channels {
            known(&c.source)?;
            known(&c.target)?;
            if self.table(&c.source).map(|t| t.persistence) != Some(Persistence::Scratch) {
                return Err(RuntimeError::ChannelSource {
                    channel: c.name.clone(),
                    table: c.source.clone(),
                });
            }
        }
        if let Some(cycle) = self
            .dataflow()
            .stratification_conflicts()
            .into_iter()
            .next()
        {
            return Err(StratificationError { cycle }.into());
        }
        Ok(())
    }
}
