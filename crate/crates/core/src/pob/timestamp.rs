//! Timestamp backend. Each broadcast gets a Lamport-style timestamp and a
//! per-source counter; labeled elements wait in a per-label priority queue
//! ordered by `(ts, src)` until every process is known to have moved past
//! their timestamp, unlabeled ones in a per-source FIFO.

use std::collections::{BTreeMap, VecDeque};

use crate::computation::{Label, ProcId, Update};
use crate::error::{Error, Result};
use crate::sim::{Ctx, Mark};

use super::WireMessage;

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct QueueElement {
    pub update: Update,
    pub ts: u64,
    pub counter: u64,
    pub src: ProcId,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Choice {
    Labeled(Label),
    Fifo(ProcId),
}

/// State owned by a process's deliver thread.
#[derive(Clone, Debug)]
pub struct TsState {
    me: ProcId,
    /// Last timestamp received from each process (own entry: own clock).
    pub t: Vec<u64>,
    /// Counter of the last element delivered from each source.
    pub counter: Vec<u64>,
    pub local_counter: u64,
    pub priority: BTreeMap<Label, BTreeMap<(u64, ProcId), QueueElement>>,
    pub fifo: Vec<VecDeque<QueueElement>>,
    strict: bool,
}

pub(super) async fn bcast(ctx: &Ctx<WireMessage>, update: Update, label: Label) {
    ctx.send(ctx.proc(), WireMessage::Lbr { update, label }).await;
}

async fn fifo_broadcast(ctx: &Ctx<WireMessage>, msg: WireMessage) {
    let me = ctx.proc();
    for q in ctx.procs().filter(|&q| q != me) {
        ctx.send(q, msg.clone()).await;
    }
}

fn t_mark(ctx: &Ctx<WireMessage>, r: ProcId, v: u64) {
    ctx.mark(Mark::Aux {
        tag: "T".into(),
        values: vec![r.0 as i64, v as i64],
    });
}

impl TsState {
    pub fn new(me: ProcId, nprocs: u32, labels: &[Label], strict: bool) -> Self {
        let n = nprocs as usize;
        TsState {
            me,
            t: vec![0; n],
            counter: vec![0; n],
            local_counter: 0,
            priority: labels
                .iter()
                .filter(|l| !l.is_null())
                .map(|&l| (l, BTreeMap::new()))
                .collect(),
            fifo: vec![VecDeque::new(); n],
            strict,
        }
    }

    pub fn can_extract(&self, l: Label) -> bool {
        let Some(qe) = self.priority.get(&l).and_then(|q| q.values().next()) else {
            return false;
        };
        let ts_ok = if self.strict {
            self.t.iter().all(|&t| qe.ts < t)
        } else {
            self.t.iter().all(|&t| qe.ts <= t)
        };
        qe.counter == self.counter[qe.src.0 as usize] + 1 && ts_ok
    }

    pub fn can_dequeue(&self, s: ProcId) -> bool {
        self.fifo[s.0 as usize]
            .front()
            .is_some_and(|qe| qe.counter == self.counter[qe.src.0 as usize] + 1)
    }

    /// The eligible labeled queue with the least `(ts, src)` head, else the
    /// eligible FIFO queue of the smallest source.
    pub fn choose(&self) -> Option<Choice> {
        let labeled = self
            .priority
            .iter()
            .filter(|(l, _)| self.can_extract(**l))
            .filter_map(|(l, q)| q.keys().next().map(|k| (*k, *l)))
            .min();
        if let Some((_, l)) = labeled {
            return Some(Choice::Labeled(l));
        }
        (0..self.fifo.len() as u32)
            .map(ProcId)
            .find(|&s| self.can_dequeue(s))
            .map(Choice::Fifo)
    }

    /// Removes the chosen element and records its counter as delivered.
    pub fn take(&mut self, c: Choice) -> (QueueElement, Label) {
        let (qe, l) = match c {
            Choice::Labeled(l) => {
                let q = self.priority.get_mut(&l).expect("chosen queue exists");
                (q.pop_first().expect("chosen queue is nonempty").1, l)
            }
            Choice::Fifo(s) => (
                self.fifo[s.0 as usize].pop_front().expect("chosen queue is nonempty"),
                Label::Null,
            ),
        };
        debug_assert_eq!(qe.counter, self.counter[qe.src.0 as usize] + 1);
        self.counter[qe.src.0 as usize] = qe.counter;
        (qe, l)
    }

    pub fn process_queue_element(&mut self, qe: QueueElement, l: Label, source: ProcId) {
        if l.is_null() {
            self.fifo[source.0 as usize].push_back(qe);
        } else {
            self.priority.entry(l).or_default().insert((qe.ts, qe.src), qe);
        }
    }

    /// Local broadcast request: stamp, enqueue, and return the element to
    /// forward to the other processes.
    pub fn on_lbr(&mut self, update: Update, l: Label) -> QueueElement {
        let me = self.me.0 as usize;
        self.t[me] += 1;
        self.local_counter += 1;
        let qe = QueueElement {
            update,
            ts: self.t[me],
            counter: self.local_counter,
            src: self.me,
        };
        self.process_queue_element(qe.clone(), l, self.me);
        qe
    }

    /// Ordering message from `s`. Returns the raised own clock when the
    /// element's timestamp exceeds it.
    pub fn on_ord(&mut self, l: Label, qe: QueueElement, s: ProcId) -> Option<u64> {
        let ts = qe.ts;
        self.t[s.0 as usize] = ts;
        self.process_queue_element(qe, l, s);
        let me = self.me.0 as usize;
        (ts > self.t[me]).then(|| {
            self.t[me] = ts;
            ts
        })
    }

    pub fn on_tsu(&mut self, ts: u64, q: ProcId) {
        self.t[q.0 as usize] = ts;
    }

    async fn handle_message(&mut self, ctx: &Ctx<WireMessage>) -> Result<()> {
        let (src, m) = ctx.recv_match(|_, _| true).await;
        match m {
            WireMessage::Lbr { update, label } => {
                let qe = self.on_lbr(update, label);
                t_mark(ctx, self.me, qe.ts);
                fifo_broadcast(ctx, WireMessage::Ord { label, qe }).await;
            }
            WireMessage::Tsu { ts, proc } => {
                self.on_tsu(ts, proc);
                t_mark(ctx, proc, ts);
            }
            WireMessage::Ord { label, qe } => {
                t_mark(ctx, src, qe.ts);
                if let Some(ts) = self.on_ord(label, qe, src) {
                    t_mark(ctx, self.me, ts);
                    fifo_broadcast(ctx, WireMessage::Tsu { ts, proc: self.me }).await;
                }
            }
            other => {
                return Err(Error::Protocol(format!(
                    "timestamp deliver thread at {} received {other}",
                    self.me
                )))
            }
        }
        Ok(())
    }

    pub(super) async fn deliver(&mut self, ctx: &Ctx<WireMessage>) -> Result<(Update, Label)> {
        loop {
            if let Some(c) = self.choose() {
                let (qe, l) = self.take(c);
                let label_code = match l {
                    Label::Null => 0,
                    Label::Class(i) => i as i64,
                };
                ctx.mark(Mark::Aux {
                    tag: "deq".into(),
                    values: vec![label_code, qe.ts as i64, qe.src.0 as i64, qe.counter as i64],
                });
                return Ok((qe.update, l));
            }
            self.handle_message(ctx).await?;
        }
    }
}
