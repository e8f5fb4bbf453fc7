//! Simulator traces: records, text encoding, and extraction of the
//! computation seen at each level of the stack.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::{self, Write as _};
use std::str::FromStr;

use crate::computation::{Computation, Label, MsgId, OpKind, OperationId, ProcId, ThreadId, Update, Value, Var};
use crate::error::{parse_err, Error, Result};
use crate::text::{parse_label, parse_msg_id, parse_update};

/// Local variables with this prefix belong to the broadcast runtime and are
/// hidden above the network level.
pub const PROTOCOL_VAR_PREFIX: &str = "net.";

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Role {
    /// Runs to completion; quiescence waits for it.
    Main,
    /// Infinite loop; may be left blocked on a receive at quiescence.
    Service,
}

impl fmt::Display for Role {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Role::Main => "main",
            Role::Service => "service",
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Outcome {
    Quiescent,
    BudgetExhausted,
    Deadlock,
}

impl fmt::Display for Outcome {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Outcome::Quiescent => "quiescent",
            Outcome::BudgetExhausted => "budget",
            Outcome::Deadlock => "deadlock",
        })
    }
}

impl FromStr for Outcome {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "quiescent" => Ok(Outcome::Quiescent),
            "budget" => Ok(Outcome::BudgetExhausted),
            "deadlock" => Ok(Outcome::Deadlock),
            _ => Err(Error::Sim(format!("unknown outcome {s:?}"))),
        }
    }
}

/// Zero-cost annotation emitted by thread code.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Mark {
    Bcast { update: Update, label: Label },
    Deliver { update: Update, label: Label },
    SpecRead { var: Var, value: Value },
    SpecWrite { var: Var, value: Value },
    /// Protocol state snapshot, e.g. `T r v` or `deq l ts src counter`.
    Aux { tag: String, values: Vec<i64> },
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Action {
    /// `from` is the record number of the write observed, `None` for the initial value.
    Read { var: Var, value: Value, from: Option<u64> },
    Write { var: Var, value: Value },
    Send { dst: ProcId, msg: MsgId, wire: String },
    Recv { src: ProcId, msg: MsgId, wire: String },
    Mark(Mark),
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Record {
    /// Strictly increasing across the trace.
    pub n: u64,
    pub proc: ProcId,
    pub thread: ThreadId,
    pub action: Action,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct InFlight {
    pub src: ProcId,
    pub dst: ProcId,
    pub msg: MsgId,
    pub circulating: bool,
    pub wire: String,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Level {
    Network,
    Pob,
    SpecTarget,
}

impl Level {
    fn annotation(self) -> &'static str {
        match self {
            Level::Network => "network",
            Level::Pob => "pob",
            Level::SpecTarget => "spec",
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Trace {
    /// Ordered `key value` pairs: seed, policy, and whatever the builder adds.
    pub header: Vec<(String, String)>,
    pub nprocs: u32,
    pub threads: Vec<(ProcId, ThreadId, Role)>,
    pub records: Vec<Record>,
    pub outcome: Option<Outcome>,
    /// Atomic actions executed (marks are free).
    pub steps: u64,
    pub in_flight: Vec<InFlight>,
}

impl Trace {
    pub fn header_value(&self, key: &str) -> Option<&str> {
        self.header.iter().find(|(k, _)| k == key).map(|(_, v)| v.as_str())
    }

    pub fn quiescent(&self) -> bool {
        self.outcome == Some(Outcome::Quiescent)
    }

    /// Levels whose annotations were recorded. Network is always available.
    pub fn levels(&self) -> BTreeSet<Level> {
        let mut out = BTreeSet::from([Level::Network]);
        for word in self.header_value("annotations").unwrap_or("").split(',') {
            match word {
                "pob" => {
                    out.insert(Level::Pob);
                }
                "spec" => {
                    out.insert(Level::SpecTarget);
                }
                _ => {}
            }
        }
        out
    }

    pub fn marks(&self) -> impl Iterator<Item = (&Record, &Mark)> {
        self.records.iter().filter_map(|r| match &r.action {
            Action::Mark(m) => Some((r, m)),
            _ => None,
        })
    }
}

impl fmt::Display for Mark {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Mark::Bcast { update, label } => write!(f, "B {update} {label}"),
            Mark::Deliver { update, label } => write!(f, "D {update} {label}"),
            Mark::SpecRead { var, value } => write!(f, "SR {var} {value}"),
            Mark::SpecWrite { var, value } => write!(f, "SW {var} {value}"),
            Mark::Aux { tag, values } => {
                write!(f, "A {tag}")?;
                for v in values {
                    write!(f, " {v}")?;
                }
                Ok(())
            }
        }
    }
}

impl fmt::Display for Action {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Action::Read { var, value, from } => match from {
                Some(n) => write!(f, "R {var} {value} from={n}"),
                None => write!(f, "R {var} {value} from=init"),
            },
            Action::Write { var, value } => write!(f, "W {var} {value}"),
            Action::Send { dst, msg, wire } => write!(f, "S {dst} {msg} {wire}"),
            Action::Recv { src, msg, wire } => write!(f, "V {src} {msg} {wire}"),
            Action::Mark(m) => m.fmt(f),
        }
    }
}

/// Byte-stable text rendering; `parse_trace` inverts it.
pub fn format_trace(t: &Trace) -> String {
    let mut out = String::from("# trace\n");
    for (k, v) in &t.header {
        let _ = writeln!(out, "{k} {v}");
    }
    let _ = writeln!(out, "procs {}", t.nprocs);
    for (p, th, role) in &t.threads {
        let _ = writeln!(out, "thread {p} {th} {role}");
    }
    out.push_str("---\n");
    for r in &t.records {
        let _ = writeln!(out, "{} {} {} {}", r.n, r.proc, r.thread, r.action);
    }
    out.push_str("---\n");
    if let Some(o) = t.outcome {
        let _ = writeln!(out, "outcome {o}");
    }
    let _ = writeln!(out, "steps {}", t.steps);
    for m in &t.in_flight {
        let kind = if m.circulating { "circ" } else { "held" };
        let _ = writeln!(out, "inflight {} {} {} {kind} {}", m.src, m.dst, m.msg, m.wire);
    }
    out
}

pub fn parse_trace(text: &str) -> Result<Trace> {
    let mut t = Trace::default();
    let mut section = 0;
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        if raw.starts_with('#') || raw.trim().is_empty() {
            continue;
        }
        if raw == "---" {
            section += 1;
            continue;
        }
        let (head, rest) = raw.split_once(' ').unwrap_or((raw, ""));
        match section {
            0 => match head {
                "procs" => t.nprocs = num(rest, line)?,
                "thread" => {
                    let f: Vec<&str> = rest.split_whitespace().collect();
                    if f.len() != 3 {
                        return Err(parse_err(line, "expected `thread proc thread role`"));
                    }
                    let role = match f[2] {
                        "main" => Role::Main,
                        "service" => Role::Service,
                        _ => return Err(parse_err(line, "unknown role")),
                    };
                    t.threads.push((ProcId(num(f[0], line)?), ThreadId(num(f[1], line)?), role));
                }
                _ => t.header.push((head.to_string(), rest.to_string())),
            },
            1 => t.records.push(parse_record(raw, line)?),
            _ => match head {
                "outcome" => t.outcome = Some(rest.parse().map_err(|_| parse_err(line, "bad outcome"))?),
                "steps" => t.steps = num(rest, line)?,
                "inflight" => {
                    let f: Vec<&str> = rest.splitn(5, ' ').collect();
                    if f.len() != 5 {
                        return Err(parse_err(line, "expected `inflight src dst msg kind wire`"));
                    }
                    t.in_flight.push(InFlight {
                        src: ProcId(num(f[0], line)?),
                        dst: ProcId(num(f[1], line)?),
                        msg: parse_msg_id(f[2]).ok_or_else(|| parse_err(line, "bad message id"))?,
                        circulating: f[3] == "circ",
                        wire: f[4].to_string(),
                    });
                }
                _ => return Err(parse_err(line, format!("unknown footer field {head:?}"))),
            },
        }
    }
    Ok(t)
}

fn num<T: FromStr>(s: &str, line: usize) -> Result<T> {
    s.trim()
        .parse()
        .map_err(|_| parse_err(line, format!("expected a number, found {s:?}")))
}

fn parse_record(raw: &str, line: usize) -> Result<Record> {
    let f: Vec<&str> = raw.splitn(6, ' ').collect();
    if f.len() < 5 {
        return Err(parse_err(line, "short trace record"));
    }
    let n = num(f[0], line)?;
    let proc = ProcId(num(f[1], line)?);
    let thread = ThreadId(num(f[2], line)?);
    let args: Vec<&str> = raw.split(' ').skip(4).collect();
    let arg = |i: usize| args.get(i).copied().ok_or_else(|| parse_err(line, "missing argument"));
    // wire text is everything after the message id
    let wire = || -> Result<String> {
        raw.splitn(7, ' ')
            .nth(6)
            .map(str::to_string)
            .ok_or_else(|| parse_err(line, "missing wire message"))
    };
    let bad = |what: &str| parse_err(line, format!("bad {what}"));
    let action = match f[3] {
        "R" => {
            let from = arg(2)?
                .strip_prefix("from=")
                .ok_or_else(|| bad("reads-from"))?;
            Action::Read {
                var: Var::new(arg(0)?),
                value: num(arg(1)?, line)?,
                from: if from == "init" { None } else { Some(num(from, line)?) },
            }
        }
        "W" => Action::Write {
            var: Var::new(arg(0)?),
            value: num(arg(1)?, line)?,
        },
        "S" => Action::Send {
            dst: ProcId(num(arg(0)?, line)?),
            msg: parse_msg_id(arg(1)?).ok_or_else(|| bad("message id"))?,
            wire: wire()?,
        },
        "V" => Action::Recv {
            src: ProcId(num(arg(0)?, line)?),
            msg: parse_msg_id(arg(1)?).ok_or_else(|| bad("message id"))?,
            wire: wire()?,
        },
        "B" | "D" => {
            let update = parse_update(arg(0)?).ok_or_else(|| bad("update"))?;
            let label = parse_label(arg(1)?).ok_or_else(|| bad("label"))?;
            Action::Mark(if f[3] == "B" {
                Mark::Bcast { update, label }
            } else {
                Mark::Deliver { update, label }
            })
        }
        "SR" | "SW" => {
            let var = Var::new(arg(0)?);
            let value = num(arg(1)?, line)?;
            Action::Mark(if f[3] == "SR" {
                Mark::SpecRead { var, value }
            } else {
                Mark::SpecWrite { var, value }
            })
        }
        "A" => Action::Mark(Mark::Aux {
            tag: arg(0)?.to_string(),
            values: args[1..].iter().map(|s| num(s, line)).collect::<Result<_>>()?,
        }),
        other => return Err(parse_err(line, format!("unknown trace action {other:?}"))),
    };
    Ok(Record {
        n,
        proc,
        thread,
        action,
    })
}

/// Builds the computation visible at `level`, preserving per-thread order.
///
/// Network: every local read/write plus sends and receives. Sends of
/// messages still circulating at the end of the run (a ring token) are
/// dropped; each is the last action of its thread, so the result is a
/// prefix of the run.
/// Pob: application-level reads/writes plus bcast/deliver marks.
/// SpecTarget: the specification reads/writes marked by the transform.
pub fn extract_computation(t: &Trace, level: Level) -> Result<Computation> {
    if !t.levels().contains(&level) {
        return Err(Error::Extract(format!(
            "trace has no {} annotations",
            level.annotation()
        )));
    }
    let mut c = Computation::new();
    for p in 0..t.nprocs {
        c.add_process(ProcId(p));
    }
    let circulating: BTreeSet<MsgId> = t
        .in_flight
        .iter()
        .filter(|m| m.circulating)
        .map(|m| m.msg)
        .collect();
    let mut writes: BTreeMap<u64, OperationId> = BTreeMap::new();
    for r in &t.records {
        let kind = match (&r.action, level) {
            (Action::Read { var, value, .. }, Level::Network) => OpKind::Read {
                var: var.clone(),
                value: *value,
            },
            (Action::Write { var, value }, Level::Network) => OpKind::Write {
                var: var.clone(),
                value: *value,
            },
            (Action::Read { var, value, .. }, Level::Pob) if !is_protocol_var(var) => OpKind::Read {
                var: var.clone(),
                value: *value,
            },
            (Action::Write { var, value }, Level::Pob) if !is_protocol_var(var) => OpKind::Write {
                var: var.clone(),
                value: *value,
            },
            (Action::Send { dst, msg, .. }, Level::Network) if !circulating.contains(msg) => OpKind::Send {
                src: r.proc,
                dst: *dst,
                msg: *msg,
            },
            (Action::Recv { src, msg, .. }, Level::Network) => OpKind::Recv {
                src: *src,
                dst: r.proc,
                msg: *msg,
            },
            (Action::Mark(Mark::Bcast { update, label }), Level::Pob) => OpKind::Bcast {
                update: update.clone(),
                label: *label,
            },
            (Action::Mark(Mark::Deliver { update, label }), Level::Pob) => OpKind::Deliver {
                update: update.clone(),
                label: *label,
            },
            (Action::Mark(Mark::SpecRead { var, value }), Level::SpecTarget) => OpKind::Read {
                var: var.clone(),
                value: *value,
            },
            (Action::Mark(Mark::SpecWrite { var, value }), Level::SpecTarget) => OpKind::Write {
                var: var.clone(),
                value: *value,
            },
            _ => continue,
        };
        let is_write = kind.is_write();
        let id = c.push(r.proc, r.thread, kind);
        if is_write {
            writes.insert(r.n, id);
        }
        if let Action::Read { from, .. } = &r.action {
            if level != Level::SpecTarget {
                let w = match from {
                    Some(n) => Some(*writes.get(n).ok_or_else(|| {
                        Error::Extract(format!("read at record {} observes unknown write {n}", r.n))
                    })?),
                    None => None,
                };
                c.set_reads_from(id, w);
            }
        }
    }
    Ok(c)
}

pub fn is_protocol_var(var: &Var) -> bool {
    var.as_str().starts_with(PROTOCOL_VAR_PREFIX)
}
