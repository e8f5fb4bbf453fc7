//! Delivery order and the network causality relations.

use std::collections::{BTreeMap, BTreeSet};

use crate::computation::{program_order, Computation, Label, MsgId, OpKind, OperationId, ProcId, Update, Var, Value};
use crate::error::{Error, Result};
use crate::order::OrderRelation;

/// Pairs `(deliver u1, deliver u2)` at the same process whenever the bcast of
/// `u1` precedes the bcast of `u2` in program order.
pub fn del_order(c: &Computation) -> OrderRelation {
    let mut rel = OrderRelation::new(c.ids());
    let mut delivers: BTreeMap<(&Update, Label), Vec<OperationId>> = BTreeMap::new();
    for op in c.operations() {
        if let OpKind::Deliver { update, label } = &op.kind {
            delivers.entry((update, *label)).or_default().push(op.id);
        }
    }
    for (_, ops) in c.threads() {
        let bcasts: Vec<(&Update, Label)> = ops
            .iter()
            .filter_map(|o| match &o.kind {
                OpKind::Bcast { update, label } => Some((update, *label)),
                _ => None,
            })
            .collect();
        for (i, first) in bcasts.iter().enumerate() {
            for second in &bcasts[i + 1..] {
                let (Some(d1), Some(d2)) = (delivers.get(first), delivers.get(second)) else {
                    continue;
                };
                for &a in d1 {
                    for &b in d2 {
                        if a.proc == b.proc {
                            rel.add(a, b);
                        }
                    }
                }
            }
        }
    }
    rel
}

#[derive(Clone, Debug)]
pub struct CausalityRelations {
    pub message_order: OrderRelation,
    pub fifo_channel: OrderRelation,
    pub writes_into: OrderRelation,
    /// Closure of program order with the three relations above.
    pub happens_before: OrderRelation,
}

type Channel = (ProcId, ProcId, MsgId);

pub fn causality(c: &Computation) -> Result<CausalityRelations> {
    let ids = c.ids();
    let mut sends: BTreeMap<MsgId, (OperationId, ProcId, ProcId)> = BTreeMap::new();
    let mut recvs: BTreeMap<Channel, Vec<OperationId>> = BTreeMap::new();
    let mut writes: BTreeMap<(ProcId, &Var, Value), Vec<OperationId>> = BTreeMap::new();
    for op in c.operations() {
        match &op.kind {
            OpKind::Send { src, dst, msg } => {
                if sends.insert(*msg, (op.id, *src, *dst)).is_some() {
                    return Err(Error::Domain(format!("message {msg} is sent twice")));
                }
            }
            OpKind::Recv { src, dst, msg } => recvs.entry((*src, *dst, *msg)).or_default().push(op.id),
            OpKind::Write { var, value } => writes.entry((op.id.proc, var, *value)).or_default().push(op.id),
            _ => {}
        }
    }

    let mut message_order = OrderRelation::new(ids.clone());
    for (msg, &(s, src, dst)) in &sends {
        for &r in recvs.get(&(src, dst, *msg)).into_iter().flatten() {
            message_order.add(s, r);
        }
    }

    let mut fifo_channel = OrderRelation::new(ids.clone());
    for (_, ops) in c.threads() {
        let mut by_dst: BTreeMap<(ProcId, ProcId), Vec<MsgId>> = BTreeMap::new();
        for op in ops {
            if let OpKind::Send { src, dst, msg } = &op.kind {
                by_dst.entry((*src, *dst)).or_default().push(*msg);
            }
        }
        for ((src, dst), msgs) in by_dst {
            for (i, m1) in msgs.iter().enumerate() {
                for m2 in &msgs[i + 1..] {
                    let r1 = recvs.get(&(src, dst, *m1)).into_iter().flatten();
                    for &a in r1 {
                        for &b in recvs.get(&(src, dst, *m2)).into_iter().flatten() {
                            fifo_channel.add(a, b);
                        }
                    }
                }
            }
        }
    }

    // variables are local to a process
    let mut writes_into = OrderRelation::new(ids.clone());
    for op in c.operations() {
        let OpKind::Read { var, value } = &op.kind else { continue };
        match c.reads_from(op.id) {
            Some(Some(w)) => writes_into.add(w, op.id),
            Some(None) => {}
            None => {
                for &w in writes.get(&(op.id.proc, var, *value)).into_iter().flatten() {
                    writes_into.add(w, op.id);
                }
            }
        }
    }

    let mut happens_before = program_order(c);
    happens_before.union_with(&message_order);
    happens_before.union_with(&fifo_channel);
    happens_before.union_with(&writes_into);
    Ok(CausalityRelations {
        message_order,
        fifo_channel,
        writes_into,
        happens_before,
    })
}

/// Sends and receives as `(src, dst, msg)` sets, for the matching conjunct.
pub(crate) fn message_sets(c: &Computation) -> (BTreeSet<Channel>, BTreeSet<Channel>, bool) {
    let mut sent = BTreeSet::new();
    let mut recv = BTreeSet::new();
    let mut unique = true;
    for op in c.operations() {
        match &op.kind {
            OpKind::Send { src, dst, msg } => unique &= sent.insert((*src, *dst, *msg)),
            OpKind::Recv { src, dst, msg } => unique &= recv.insert((*src, *dst, *msg)),
            _ => {}
        }
    }
    (sent, recv, unique)
}
