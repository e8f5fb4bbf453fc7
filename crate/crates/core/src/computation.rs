//! Operations, computations, and the validity / Extends / Agree predicates
//! that every consistency definition is assembled from.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::order::OrderRelation;
use crate::partition::PartitionSpec;

pub type Value = i64;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, serde::Serialize)]
pub struct ProcId(pub u32);

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, serde::Serialize)]
pub struct ThreadId(pub u32);

impl fmt::Display for ProcId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

impl fmt::Display for ThreadId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// Identity of an operation: its process, its thread, and its 0-based
/// position in that thread's issue sequence. Ordered lexicographically.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct OperationId {
    pub proc: ProcId,
    pub thread: ThreadId,
    pub index: u32,
}

impl OperationId {
    pub fn new(proc: u32, thread: u32, index: u32) -> Self {
        OperationId {
            proc: ProcId(proc),
            thread: ThreadId(thread),
            index,
        }
    }
}

impl fmt::Display for OperationId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}.{}.{}", self.proc, self.thread, self.index)
    }
}

/// A variable name. Cheap to clone.
#[derive(Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Var(Arc<str>);

impl Var {
    pub fn new(name: &str) -> Self {
        Var(Arc::from(name))
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Debug for Var {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

impl fmt::Display for Var {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl From<&str> for Var {
    fn from(s: &str) -> Self {
        Var::new(s)
    }
}

/// Broadcast label: a partition class index, or the null label.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Label {
    Null,
    Class(u32),
}

impl Label {
    pub fn is_null(self) -> bool {
        matches!(self, Label::Null)
    }
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Label::Null => f.write_str("_"),
            Label::Class(i) => write!(f, "{i}"),
        }
    }
}

/// Write update carried by a broadcast. `seq` is the issuing process's
/// write counter at issue time and makes each update object unique.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Update {
    pub var: Var,
    pub value: Value,
    pub source: ProcId,
    pub seq: u64,
}

impl fmt::Display for Update {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}:{}:{}", self.var, self.value, self.source, self.seq)
    }
}

/// Globally unique message identity: sender plus per-sender sequence number.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct MsgId {
    pub sender: ProcId,
    pub seq: u64,
}

impl fmt::Display for MsgId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}.{}", self.sender, self.seq)
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub enum OpKind {
    Read { var: Var, value: Value },
    Write { var: Var, value: Value },
    Bcast { update: Update, label: Label },
    Deliver { update: Update, label: Label },
    Send { src: ProcId, dst: ProcId, msg: MsgId },
    Recv { src: ProcId, dst: ProcId, msg: MsgId },
}

impl OpKind {
    pub fn is_write(&self) -> bool {
        matches!(self, OpKind::Write { .. })
    }

    pub fn is_read_write(&self) -> bool {
        matches!(self, OpKind::Read { .. } | OpKind::Write { .. })
    }

    pub fn var(&self) -> Option<&Var> {
        match self {
            OpKind::Read { var, .. } | OpKind::Write { var, .. } => Some(var),
            _ => None,
        }
    }
}

impl fmt::Display for OpKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            OpKind::Read { var, value } => write!(f, "R {var} {value}"),
            OpKind::Write { var, value } => write!(f, "W {var} {value}"),
            OpKind::Bcast { update, label } => write!(f, "B {update} {label}"),
            OpKind::Deliver { update, label } => write!(f, "D {update} {label}"),
            OpKind::Send { src, dst, msg } => write!(f, "S {src} {dst} {msg}"),
            OpKind::Recv { src, dst, msg } => write!(f, "V {src} {dst} {msg}"),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct Operation {
    pub id: OperationId,
    pub kind: OpKind,
}

impl fmt::Display for Operation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{} {} {} {}",
            self.id.proc, self.id.thread, self.id.index, self.kind
        )
    }
}

/// Per-thread sequences of completed operations.
///
/// `reads_from` optionally pins the write a read observed (`None` means
/// the initial value). Reads without an entry are matched against writes
/// by value.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Computation {
    threads: BTreeMap<(ProcId, ThreadId), Vec<Operation>>,
    procs: BTreeSet<ProcId>,
    initial: BTreeMap<Var, Value>,
    reads_from: BTreeMap<OperationId, Option<OperationId>>,
}

impl Computation {
    pub fn new() -> Self {
        Self::default()
    }

    /// Declares a process even if it issues no operations.
    pub fn add_process(&mut self, proc: ProcId) {
        self.procs.insert(proc);
    }

    /// Appends an operation to the end of `(proc, thread)` and returns its id.
    pub fn push(&mut self, proc: ProcId, thread: ThreadId, kind: OpKind) -> OperationId {
        self.procs.insert(proc);
        let seq = self.threads.entry((proc, thread)).or_default();
        let id = OperationId {
            proc,
            thread,
            index: seq.len() as u32,
        };
        seq.push(Operation { id, kind });
        id
    }

    pub fn set_initial(&mut self, var: Var, value: Value) {
        self.initial.insert(var, value);
    }

    pub fn initial_values(&self) -> &BTreeMap<Var, Value> {
        &self.initial
    }

    pub fn initial_value(&self, var: &Var) -> Value {
        self.initial.get(var).copied().unwrap_or(0)
    }

    pub fn set_reads_from(&mut self, read: OperationId, write: Option<OperationId>) {
        self.reads_from.insert(read, write);
    }

    pub fn reads_from(&self, read: OperationId) -> Option<Option<OperationId>> {
        self.reads_from.get(&read).copied()
    }

    pub fn processes(&self) -> impl Iterator<Item = ProcId> + '_ {
        self.procs.iter().copied()
    }

    pub fn threads(&self) -> impl Iterator<Item = ((ProcId, ThreadId), &[Operation])> {
        self.threads.iter().map(|(k, v)| (*k, v.as_slice()))
    }

    pub fn thread(&self, proc: ProcId, thread: ThreadId) -> &[Operation] {
        self.threads
            .get(&(proc, thread))
            .map(Vec::as_slice)
            .unwrap_or(&[])
    }

    pub fn get(&self, id: OperationId) -> Option<&Operation> {
        self.threads
            .get(&(id.proc, id.thread))
            .and_then(|seq| seq.get(id.index as usize))
    }

    /// Looks up an operation known to belong to this computation.
    pub fn op(&self, id: OperationId) -> &Operation {
        self.get(id)
            .unwrap_or_else(|| panic!("operation {id} is not part of the computation"))
    }

    /// All operations in id order.
    pub fn operations(&self) -> impl Iterator<Item = &Operation> {
        self.threads.values().flatten()
    }

    pub fn ids(&self) -> Vec<OperationId> {
        self.operations().map(|o| o.id).collect()
    }

    pub fn len(&self) -> usize {
        self.threads.values().map(Vec::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// True when some process runs more than one thread.
    pub fn is_multithreaded(&self) -> bool {
        let mut seen = BTreeSet::new();
        self.threads
            .iter()
            .filter(|(_, ops)| !ops.is_empty())
            .any(|((p, _), _)| !seen.insert(*p))
    }

    /// `(process, variable)` pairs for every write, for multi-writer analysis.
    pub fn write_sites(&self) -> Vec<(ProcId, Var)> {
        self.operations()
            .filter_map(|o| match &o.kind {
                OpKind::Write { var, .. } => Some((o.id.proc, var.clone())),
                _ => None,
            })
            .collect()
    }

    /// Variables mentioned by any read, write, or initial value.
    pub fn variables(&self) -> BTreeSet<Var> {
        self.operations()
            .filter_map(|o| o.kind.var().cloned())
            .chain(self.initial.keys().cloned())
            .collect()
    }
}

/// Union over threads of each thread's issue order.
pub fn program_order(c: &Computation) -> OrderRelation {
    let mut rel = OrderRelation::new(c.ids());
    for (_, ops) in c.threads() {
        for pair in ops.windows(2) {
            rel.add(pair[0].id, pair[1].id);
        }
    }
    rel
}

/// Operation-set selectors for [`project`].
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Selector<'a> {
    ByProcess(ProcId),
    AllWrites,
    /// Writes to class `i` (1-based) of the given partition.
    WritesToClass(&'a PartitionSpec, u32),
    /// Delivers carrying label `l`; the null label selects nothing.
    LabeledDelivers(Label),
}

pub fn project(c: &Computation, ops: &[OperationId], selector: &Selector<'_>) -> Result<Vec<OperationId>> {
    let class = match selector {
        Selector::WritesToClass(k, i) => Some(
            k.class(*i)
                .ok_or_else(|| Error::BadPartition(format!("no class with index {i}")))?,
        ),
        _ => None,
    };
    let keep = |op: &Operation| match selector {
        Selector::ByProcess(p) => op.id.proc == *p,
        Selector::AllWrites => op.kind.is_write(),
        Selector::WritesToClass(..) => match &op.kind {
            OpKind::Write { var, .. } => class.is_some_and(|cl| cl.contains(var)),
            _ => false,
        },
        Selector::LabeledDelivers(l) => match &op.kind {
            OpKind::Deliver { label, .. } => !l.is_null() && label == l,
            _ => false,
        },
    };
    Ok(ops
        .iter()
        .copied()
        .filter(|id| c.get(*id).is_some_and(keep))
        .collect())
}

/// True iff every per-object projection of `seq` satisfies the object's
/// sequential specification: variables return the most recent write (or
/// the initial value), messages are sent and received at most once, and
/// no update is delivered before its bcast or delivered twice.
pub fn valid_sequence<'a, I>(seq: I, initial: &BTreeMap<Var, Value>) -> bool
where
    I: IntoIterator<Item = &'a Operation>,
{
    let mut current: BTreeMap<&Var, Value> = BTreeMap::new();
    let mut sent = BTreeSet::new();
    let mut received = BTreeSet::new();
    let mut bcast = BTreeSet::new();
    let mut delivered = BTreeSet::new();
    for op in seq {
        match &op.kind {
            OpKind::Write { var, value } => {
                current.insert(var, *value);
            }
            OpKind::Read { var, value } => {
                let now = current
                    .get(var)
                    .copied()
                    .unwrap_or_else(|| initial.get(var).copied().unwrap_or(0));
                if now != *value {
                    return false;
                }
            }
            OpKind::Send { msg, .. } => {
                if !sent.insert(*msg) {
                    return false;
                }
            }
            OpKind::Recv { msg, .. } => {
                if !received.insert(*msg) {
                    return false;
                }
            }
            OpKind::Bcast { update, .. } => {
                if delivered.contains(update) || !bcast.insert(update) {
                    return false;
                }
            }
            OpKind::Deliver { update, .. } => {
                if !delivered.insert(update) {
                    return false;
                }
            }
        }
    }
    true
}

/// `Extends[A, R, T]`: every `t`-ordered pair inside `a` is `r`-ordered the same way.
pub fn extends(a: &[OperationId], r: &OrderRelation, t: &OrderRelation) -> bool {
    a.iter().all(|&x| {
        a.iter()
            .all(|&y| x == y || !t.contains(x, y) || r.contains(x, y))
    })
}

/// `Agree[A, R, T]`: `r` and `t` order every pair of `a` identically.
pub fn agree(a: &[OperationId], r: &OrderRelation, t: &OrderRelation) -> bool {
    a.iter()
        .all(|&x| a.iter().all(|&y| x == y || r.contains(x, y) == t.contains(x, y)))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn w(var: &str, value: Value) -> OpKind {
        OpKind::Write {
            var: var.into(),
            value,
        }
    }

    fn r(var: &str, value: Value) -> OpKind {
        OpKind::Read {
            var: var.into(),
            value,
        }
    }

    fn upd(v: Value) -> Update {
        Update {
            var: "x".into(),
            value: v,
            source: ProcId(0),
            seq: v as u64,
        }
    }

    fn op(kind: OpKind) -> Operation {
        Operation {
            id: OperationId::new(0, 0, 0),
            kind,
        }
    }

    #[test]
    fn program_order_single_thread_chain() {
        let mut c = Computation::new();
        let a = c.push(ProcId(0), ThreadId(0), w("x", 1));
        let b = c.push(ProcId(0), ThreadId(0), r("x", 1));
        let po = program_order(&c);
        assert_eq!(po.pairs(), vec![(a, b)]);
    }

    #[test]
    fn program_order_leaves_threads_of_one_process_unordered() {
        let mut c = Computation::new();
        c.push(ProcId(0), ThreadId(0), w("x", 1));
        c.push(ProcId(0), ThreadId(1), w("y", 1));
        assert!(program_order(&c).pairs().is_empty());
        assert!(program_order(&Computation::new()).pairs().is_empty());
    }

    #[test]
    fn project_selectors() {
        let mut c = Computation::new();
        let pw = c.push(ProcId(0), ThreadId(0), w("x", 1));
        let _qr = c.push(ProcId(1), ThreadId(0), r("x", 1));
        let py = c.push(ProcId(0), ThreadId(0), w("y", 2));
        let all = c.ids();
        assert_eq!(project(&c, &all, &Selector::AllWrites).unwrap(), vec![pw, py]);

        let k = PartitionSpec::new(vec![["x"].into_iter().map(Var::from).collect()]).unwrap();
        assert_eq!(
            project(&c, &all, &Selector::WritesToClass(&k, 1)).unwrap(),
            vec![pw]
        );
        assert!(matches!(
            project(&c, &all, &Selector::WritesToClass(&k, 2)),
            Err(Error::BadPartition(_))
        ));
    }

    #[test]
    fn project_null_label_selects_nothing() {
        let mut c = Computation::new();
        c.push(
            ProcId(0),
            ThreadId(0),
            OpKind::Deliver {
                update: upd(1),
                label: Label::Null,
            },
        );
        let all = c.ids();
        assert!(project(&c, &all, &Selector::LabeledDelivers(Label::Null))
            .unwrap()
            .is_empty());
    }

    #[test]
    fn validity_of_variables() {
        let init = BTreeMap::new();
        assert!(valid_sequence(&[op(w("x", 1)), op(r("x", 1))], &init));
        assert!(!valid_sequence(&[op(r("x", 1))], &init));
        let mut init = BTreeMap::new();
        init.insert(Var::from("x"), 1);
        assert!(valid_sequence(&[op(r("x", 1))], &init));
    }

    #[test]
    fn validity_of_updates() {
        let init = BTreeMap::new();
        let b = op(OpKind::Bcast {
            update: upd(1),
            label: Label::Class(1),
        });
        let d = op(OpKind::Deliver {
            update: upd(1),
            label: Label::Class(1),
        });
        assert!(!valid_sequence(&[d.clone(), b.clone()], &init));
        assert!(valid_sequence(&[b, d.clone()], &init));
        assert!(valid_sequence(std::slice::from_ref(&d), &init));
        assert!(!valid_sequence(&[d.clone(), d], &init));
    }

    #[test]
    fn validity_of_messages() {
        let init = BTreeMap::new();
        let m = MsgId {
            sender: ProcId(0),
            seq: 0,
        };
        let rv = op(OpKind::Recv {
            src: ProcId(0),
            dst: ProcId(1),
            msg: m,
        });
        assert!(valid_sequence(std::slice::from_ref(&rv), &init));
        assert!(!valid_sequence(&[rv.clone(), rv], &init));
    }

    #[test]
    fn extends_and_agree_basics() {
        let a = OperationId::new(0, 0, 0);
        let b = OperationId::new(0, 0, 1);
        let ab = OrderRelation::from_sequence(&[a, b]);
        let ba = OrderRelation::from_sequence(&[b, a]);
        let empty = OrderRelation::new(vec![a, b]);
        assert!(extends(&[a, b], &ba, &empty));
        assert!(extends(&[a, b], &ab, &ab));
        assert!(!extends(&[a, b], &ba, &ab));
        assert!(agree(&[a], &ab, &ba));
        assert!(agree(&[a, b], &ab, &ab));
        assert!(!agree(&[a, b], &ab, &ba));
    }
}
