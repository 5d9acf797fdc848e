use std::fmt::{self, Write as _};
use std::io;
use std::path::Path;

use super::WorkerId;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum EventKind {
    Send,
    Dup,
    Deliver,
    Drop,
    Hold,
    Release,
    Partition,
    Heal,
    Join,
    Fail,
    Assign,
    Reassign,
    Complete,
    Aggregate,
    Gather,
}

impl EventKind {
    pub fn as_str(self) -> &'static str {
        match self {
            EventKind::Send => "send",
            EventKind::Dup => "dup",
            EventKind::Deliver => "deliver",
            EventKind::Drop => "drop",
            EventKind::Hold => "hold",
            EventKind::Release => "release",
            EventKind::Partition => "partition",
            EventKind::Heal => "heal",
            EventKind::Join => "join",
            EventKind::Fail => "fail",
            EventKind::Assign => "assign",
            EventKind::Reassign => "reassign",
            EventKind::Complete => "complete",
            EventKind::Aggregate => "aggregate",
            EventKind::Gather => "gather",
        }
    }
}

impl fmt::Display for EventKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Event {
    pub tick: u64,
    pub kind: EventKind,
    pub src: Option<WorkerId>,
    pub dst: Option<WorkerId>,
    pub token_id: Option<u64>,
    pub use_id: Option<u64>,
}

impl Event {
    pub fn is_cross_worker(&self) -> bool {
        matches!((self.src, self.dst), (Some(a), Some(b)) if a != b)
    }
}

impl fmt::Display for Event {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fn opt<T: fmt::Display>(v: Option<T>) -> String {
            v.map_or_else(|| "-".to_owned(), |v| v.to_string())
        }
        write!(
            f,
            "{},{},{},{},{},{}",
            self.tick,
            self.kind,
            opt(self.src),
            opt(self.dst),
            opt(self.token_id),
            opt(self.use_id)
        )
    }
}

/// Append-only record of everything the simulator did, one
/// `tick,event_kind,src,dst,token_id,use_id` line per event.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct EventLog {
    events: Vec<Event>,
}

impl EventLog {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn record(
        &mut self,
        tick: u64,
        kind: EventKind,
        src: Option<WorkerId>,
        dst: Option<WorkerId>,
        token_id: Option<u64>,
        use_id: Option<u64>,
    ) {
        self.events.push(Event {
            tick,
            kind,
            src,
            dst,
            token_id,
            use_id,
        });
    }

    pub fn events(&self) -> &[Event] {
        &self.events
    }

    pub fn len(&self) -> usize {
        self.events.len()
    }

    pub fn is_empty(&self) -> bool {
        self.events.is_empty()
    }

    pub fn of_kind(&self, kind: EventKind) -> impl Iterator<Item = &Event> {
        self.events.iter().filter(move |e| e.kind == kind)
    }

    pub fn count(&self, kind: EventKind) -> usize {
        self.of_kind(kind).count()
    }

    /// Events from index `from` onwards.
    pub fn since(&self, from: usize) -> &[Event] {
        &self.events[from.min(self.events.len())..]
    }

    pub fn render(&self) -> String {
        let mut out = String::with_capacity(self.events.len() * 32);
        for e in &self.events {
            let _ = writeln!(out, "{e}");
        }
        out
    }

    pub fn write_to(&self, path: &Path) -> io::Result<()> {
        std::fs::write(path, self.render())
    }
}
