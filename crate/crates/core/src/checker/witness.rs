//! Witness-sequence search shared by every consistency predicate.
//!
//! Each view is a set of operations with a base partial order; a solution
//! is one valid total order per view that extends its base. Agreement
//! classes couple the views: every class is a list of items (an item is the
//! set of operations that stand for the same thing in different views) and
//! all views must order the items of a class identically.
//!
//! Agreement is handled by committing a class order one item at a time.
//! Before each commitment every view is re-solved under the committed
//! prefix, which both prunes dead prefixes and proposes the next item.
//! Per-view search is a depth-first merge of the view's threads, memoising
//! failed `(placed set, variable state)` pairs.

use std::collections::{BTreeMap, HashMap, HashSet};

use fixedbitset::FixedBitSet;

use crate::computation::{Computation, OpKind, OperationId, ProcId, Value, Var};
use crate::order::OrderRelation;

/// One process's view: which operations it must order and what base order
/// its total order has to extend. The base may range over a larger domain.
#[derive(Clone, Debug)]
pub struct ViewInput<'a> {
    pub owner: ProcId,
    pub domain: Vec<OperationId>,
    pub base: &'a OrderRelation,
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct AgreementClass {
    pub items: Vec<Vec<OperationId>>,
}

/// Per-process witness sequences. Each sequence realises a total order.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct WitnessSet {
    pub views: BTreeMap<ProcId, Vec<OperationId>>,
}

impl WitnessSet {
    pub fn order(&self, p: ProcId) -> Option<OrderRelation> {
        self.views.get(&p).map(|s| OrderRelation::from_sequence(s))
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum SearchOutcome {
    Found(WitnessSet),
    NotFound,
    Exhausted,
}

/// Search-node budget. Every placement of an operation costs one node.
#[derive(Clone, Debug)]
pub struct Budget {
    pub limit: u64,
    pub used: u64,
}

impl Budget {
    pub fn new(limit: u64) -> Self {
        Budget { limit, used: 0 }
    }

    fn tick(&mut self) -> Result<(), Exhausted> {
        self.used += 1;
        if self.used > self.limit {
            Err(Exhausted)
        } else {
            Ok(())
        }
    }
}

#[derive(Debug)]
struct Exhausted;

pub fn witness_search(
    c: &Computation,
    views: &[ViewInput<'_>],
    agreement: &[AgreementClass],
    budget: &mut Budget,
) -> SearchOutcome {
    let prepared: Vec<Prepared> = views.iter().map(|v| Prepared::new(c, v, agreement)).collect();
    if prepared.iter().any(|p| !p.statically_valid) {
        return SearchOutcome::NotFound;
    }
    let mut engine = Engine {
        views: &prepared,
        agreement,
        before: item_precedence(&prepared, agreement),
        budget,
    };
    let mut committed = vec![Vec::new(); agreement.len()];
    match engine.commit(&mut committed) {
        Ok(Some(sols)) => {
            let mut w = WitnessSet::default();
            for (v, sol) in prepared.iter().zip(sols) {
                w.views
                    .insert(v.owner, sol.into_iter().map(|i| v.ops[i]).collect());
            }
            SearchOutcome::Found(w)
        }
        Ok(None) => SearchOutcome::NotFound,
        Err(Exhausted) => SearchOutcome::Exhausted,
    }
}

struct Prepared {
    owner: ProcId,
    ops: Vec<OperationId>,
    preds: Vec<FixedBitSet>,
    /// Operations grouped by thread, in index order.
    groups: Vec<Vec<usize>>,
    /// Whether each group is a chain under the base order.
    chained: Vec<bool>,
    group_of: Vec<(usize, usize)>,
    read: Vec<Option<(usize, Value)>>,
    write: Vec<Option<(usize, Value)>>,
    initial: Vec<Value>,
    item: Vec<Option<(usize, usize)>>,
    /// Per class, per item: this view's operation for it.
    item_op: Vec<Vec<Option<usize>>>,
    statically_valid: bool,
}

impl Prepared {
    fn new(c: &Computation, input: &ViewInput<'_>, agreement: &[AgreementClass]) -> Self {
        let mut ops = input.domain.clone();
        ops.sort();
        ops.dedup();
        let n = ops.len();
        let pos: HashMap<OperationId, usize> = ops.iter().enumerate().map(|(i, id)| (*id, i)).collect();
        let base_idx: Vec<Option<usize>> = ops.iter().map(|id| input.base.index_of(*id)).collect();

        let mut preds = vec![FixedBitSet::with_capacity(n); n];
        for i in 0..n {
            let Some(bi) = base_idx[i] else { continue };
            for j in 0..n {
                if let Some(bj) = base_idx[j] {
                    if input.base.contains_index(bj, bi) {
                        preds[i].insert(j);
                    }
                }
            }
        }

        let mut statically_valid = true;
        let mut vars: HashMap<Var, usize> = HashMap::new();
        let mut initial = Vec::new();
        let mut read = vec![None; n];
        let mut write = vec![None; n];
        let mut bcasts = HashMap::new();
        let mut delivers = HashMap::new();
        let mut sends = HashSet::new();
        let mut recvs = HashSet::new();
        for (i, id) in ops.iter().enumerate() {
            let mut var_index = |var: &Var| {
                *vars.entry(var.clone()).or_insert_with(|| {
                    initial.push(c.initial_value(var));
                    initial.len() - 1
                })
            };
            match &c.op(*id).kind {
                OpKind::Read { var, value } => read[i] = Some((var_index(var), *value)),
                OpKind::Write { var, value } => write[i] = Some((var_index(var), *value)),
                OpKind::Bcast { update, .. } => {
                    statically_valid &= bcasts.insert(update.clone(), i).is_none();
                }
                OpKind::Deliver { update, .. } => {
                    statically_valid &= delivers.insert(update.clone(), i).is_none();
                }
                OpKind::Send { msg, .. } => statically_valid &= sends.insert(*msg),
                OpKind::Recv { msg, .. } => statically_valid &= recvs.insert(*msg),
            }
        }
        // a deliver may not precede its own bcast
        for (update, &d) in &delivers {
            if let Some(&b) = bcasts.get(update) {
                preds[d].insert(b);
            }
        }

        let mut by_thread: BTreeMap<(ProcId, u32), Vec<usize>> = BTreeMap::new();
        for (i, id) in ops.iter().enumerate() {
            by_thread.entry((id.proc, id.thread.0)).or_default().push(i);
        }
        let groups: Vec<Vec<usize>> = by_thread.into_values().collect();
        let chained = groups
            .iter()
            .map(|g| g.windows(2).all(|w| preds[w[1]].contains(w[0])))
            .collect();
        let mut group_of = vec![(0, 0); n];
        for (gi, g) in groups.iter().enumerate() {
            for (k, &i) in g.iter().enumerate() {
                group_of[i] = (gi, k);
            }
        }

        let mut item = vec![None; n];
        let mut item_op = Vec::with_capacity(agreement.len());
        for (ci, class) in agreement.iter().enumerate() {
            let mut per_item = vec![None; class.items.len()];
            for (ii, members) in class.items.iter().enumerate() {
                for m in members {
                    if let Some(&i) = pos.get(m) {
                        if per_item[ii].is_some() {
                            statically_valid = false;
                        }
                        per_item[ii] = Some(i);
                        item[i] = Some((ci, ii));
                    }
                }
            }
            item_op.push(per_item);
        }

        Prepared {
            owner: input.owner,
            ops,
            preds,
            groups,
            chained,
            group_of,
            read,
            write,
            initial,
            item,
            item_op,
            statically_valid,
        }
    }

    /// One extra predecessor per operation, induced by committed prefixes.
    fn extra_preds(&self, committed: &[Vec<usize>]) -> Vec<Option<usize>> {
        let mut extra = vec![None; self.ops.len()];
        for (ci, order) in committed.iter().enumerate() {
            let mut last = None;
            let mut is_committed = vec![false; self.item_op[ci].len()];
            for &it in order {
                is_committed[it] = true;
                if let Some(op) = self.item_op[ci][it] {
                    extra[op] = last;
                    last = Some(op);
                }
            }
            for (it, op) in self.item_op[ci].iter().enumerate() {
                if let (Some(op), false) = (op, is_committed[it]) {
                    extra[*op] = last;
                }
            }
        }
        extra
    }

    fn solve(&self, extra: &[Option<usize>], budget: &mut Budget) -> Result<Option<Vec<usize>>, Exhausted> {
        ViewSearch::new(self, extra).run(budget)
    }
}

struct Frame {
    candidates: Vec<usize>,
    next: usize,
    placed: Option<(usize, Option<(usize, Value)>)>,
}

struct ViewSearch<'a> {
    view: &'a Prepared,
    extra: &'a [Option<usize>],
    placed: FixedBitSet,
    values: Vec<Value>,
    heads: Vec<usize>,
    seq: Vec<usize>,
    failed: HashSet<(FixedBitSet, Vec<Value>)>,
}

impl<'a> ViewSearch<'a> {
    fn new(view: &'a Prepared, extra: &'a [Option<usize>]) -> Self {
        ViewSearch {
            view,
            extra,
            placed: FixedBitSet::with_capacity(view.ops.len()),
            values: view.initial.clone(),
            heads: vec![0; view.groups.len()],
            seq: Vec::with_capacity(view.ops.len()),
            failed: HashSet::new(),
        }
    }

    fn enabled(&self, i: usize) -> bool {
        let v = self.view;
        !self.placed.contains(i)
            && v.preds[i].is_subset(&self.placed)
            && self.extra[i].is_none_or(|e| self.placed.contains(e))
            && v.read[i].is_none_or(|(var, val)| self.values[var] == val)
    }

    fn candidates(&self) -> Vec<usize> {
        let mut out = Vec::new();
        for (gi, g) in self.view.groups.iter().enumerate() {
            if self.view.chained[gi] {
                if let Some(&i) = g.get(self.heads[gi]) {
                    if self.enabled(i) {
                        out.push(i);
                    }
                }
            } else {
                out.extend(g.iter().copied().filter(|&i| self.enabled(i)));
            }
        }
        out.sort_unstable();
        out
    }

    fn place(&mut self, i: usize) -> Option<(usize, Value)> {
        self.placed.insert(i);
        self.seq.push(i);
        let (g, _) = self.view.group_of[i];
        if self.view.chained[g] {
            self.heads[g] += 1;
        }
        self.view.write[i].map(|(var, val)| {
            let old = self.values[var];
            self.values[var] = val;
            (var, old)
        })
    }

    fn unplace(&mut self, i: usize, undo: Option<(usize, Value)>) {
        self.placed.set(i, false);
        self.seq.pop();
        let (g, _) = self.view.group_of[i];
        if self.view.chained[g] {
            self.heads[g] -= 1;
        }
        if let Some((var, old)) = undo {
            self.values[var] = old;
        }
    }

    fn key(&self) -> (FixedBitSet, Vec<Value>) {
        (self.placed.clone(), self.values.clone())
    }

    fn run(mut self, budget: &mut Budget) -> Result<Option<Vec<usize>>, Exhausted> {
        let n = self.view.ops.len();
        let mut stack: Vec<Frame> = Vec::new();
        loop {
            if self.seq.len() == n {
                return Ok(Some(self.seq));
            }
            let candidates = if self.failed.contains(&self.key()) {
                Vec::new()
            } else {
                self.candidates()
            };
            stack.push(Frame {
                candidates,
                next: 0,
                placed: None,
            });
            // advance to the next untried child, backtracking as needed
            loop {
                let Some(top) = stack.last_mut() else {
                    return Ok(None);
                };
                if let Some((i, undo)) = top.placed.take() {
                    self.unplace(i, undo);
                }
                let top = stack.last_mut().expect("frame present");
                if top.next < top.candidates.len() {
                    let i = top.candidates[top.next];
                    top.next += 1;
                    budget.tick()?;
                    let undo = self.place(i);
                    stack.last_mut().expect("frame present").placed = Some((i, undo));
                    break;
                }
                let key = self.key();
                self.failed.insert(key);
                stack.pop();
            }
        }
    }
}

/// `before[c][a][b]`: some view's base forces item `a` of class `c` before item `b`.
fn item_precedence(views: &[Prepared], agreement: &[AgreementClass]) -> Vec<Vec<Vec<bool>>> {
    agreement
        .iter()
        .enumerate()
        .map(|(ci, class)| {
            let k = class.items.len();
            let mut before = vec![vec![false; k]; k];
            for v in views {
                for a in 0..k {
                    for b in 0..k {
                        if let (Some(oa), Some(ob)) = (v.item_op[ci][a], v.item_op[ci][b]) {
                            if a != b && v.preds[ob].contains(oa) {
                                before[a][b] = true;
                            }
                        }
                    }
                }
            }
            before
        })
        .collect()
}

struct Engine<'a, 'b> {
    views: &'a [Prepared],
    agreement: &'a [AgreementClass],
    before: Vec<Vec<Vec<bool>>>,
    budget: &'b mut Budget,
}

impl Engine<'_, '_> {
    fn commit(&mut self, committed: &mut Vec<Vec<usize>>) -> Result<Option<Vec<Vec<usize>>>, Exhausted> {
        let mut sols = Vec::with_capacity(self.views.len());
        for v in self.views {
            let extra = v.extra_preds(committed);
            match v.solve(&extra, self.budget)? {
                Some(s) => sols.push(s),
                None => return Ok(None),
            }
        }
        if self.solutions_agree(&sols) {
            return Ok(Some(sols));
        }
        let Some(ci) = (0..self.agreement.len()).find(|&ci| committed[ci].len() < self.agreement[ci].items.len())
        else {
            return Ok(Some(sols));
        };
        let k = self.agreement[ci].items.len();
        let mut done = vec![false; k];
        for &it in &committed[ci] {
            done[it] = true;
        }
        let mut candidates: Vec<usize> = (0..k)
            .filter(|&a| !done[a] && (0..k).all(|b| done[b] || b == a || !self.before[ci][b][a]))
            .collect();
        // propose items in the order the first solution placed them
        let rank = |it: usize| -> (usize, usize) {
            for (v, sol) in self.views.iter().zip(&sols) {
                if let Some(op) = v.item_op[ci][it] {
                    return (sol.iter().position(|&x| x == op).unwrap_or(usize::MAX), it);
                }
            }
            (usize::MAX, it)
        };
        candidates.sort_by_key(|&it| rank(it));
        for it in candidates {
            committed[ci].push(it);
            if let Some(found) = self.commit(committed)? {
                return Ok(Some(found));
            }
            committed[ci].pop();
        }
        Ok(None)
    }

    /// Whether every pair of solutions orders the shared items of each class identically.
    fn solutions_agree(&self, sols: &[Vec<usize>]) -> bool {
        for ci in 0..self.agreement.len() {
            let orders: Vec<Vec<usize>> = self
                .views
                .iter()
                .zip(sols)
                .map(|(v, sol)| {
                    sol.iter()
                        .filter_map(|&op| v.item[op].filter(|&(c, _)| c == ci).map(|(_, it)| it))
                        .collect()
                })
                .collect();
            for a in 0..orders.len() {
                for b in a + 1..orders.len() {
                    let in_b: HashSet<usize> = orders[b].iter().copied().collect();
                    let in_a: HashSet<usize> = orders[a].iter().copied().collect();
                    let ra: Vec<usize> = orders[a].iter().copied().filter(|x| in_b.contains(x)).collect();
                    let rb: Vec<usize> = orders[b].iter().copied().filter(|x| in_a.contains(x)).collect();
                    if ra != rb {
                        return false;
                    }
                }
            }
        }
        true
    }
}
