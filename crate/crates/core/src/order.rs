//! Finite binary relations over operation ids.
//!
//! An [`OrderRelation`] keeps the generating pairs it was built from and
//! computes the transitive closure lazily; every ordering query goes
//! through the closure.

use std::collections::{BTreeSet, HashMap};
use std::sync::OnceLock;

use fixedbitset::FixedBitSet;

use crate::computation::OperationId;

#[derive(Clone, Debug)]
pub struct OrderRelation {
    domain: Vec<OperationId>,
    index: HashMap<OperationId, usize>,
    edges: BTreeSet<(usize, usize)>,
    closure: OnceLock<Closure>,
}

#[derive(Clone, Debug)]
struct Closure {
    /// `reach[a]` holds every `b` with `a -> b` in the closure.
    reach: Vec<FixedBitSet>,
    acyclic: bool,
}

impl OrderRelation {
    /// An empty relation over `domain`. Duplicate ids are collapsed.
    pub fn new(domain: Vec<OperationId>) -> Self {
        let mut domain = domain;
        domain.sort();
        domain.dedup();
        let index = domain.iter().enumerate().map(|(i, id)| (*id, i)).collect();
        OrderRelation {
            domain,
            index,
            edges: BTreeSet::new(),
            closure: OnceLock::new(),
        }
    }

    /// The total order realised by `seq`.
    pub fn from_sequence(seq: &[OperationId]) -> Self {
        let mut rel = OrderRelation::new(seq.to_vec());
        for pair in seq.windows(2) {
            rel.add(pair[0], pair[1]);
        }
        rel
    }

    pub fn domain(&self) -> &[OperationId] {
        &self.domain
    }

    pub fn in_domain(&self, id: OperationId) -> bool {
        self.index.contains_key(&id)
    }

    pub fn index_of(&self, id: OperationId) -> Option<usize> {
        self.index.get(&id).copied()
    }

    /// Adds a generating pair. Both ends must already be in the domain.
    pub fn add(&mut self, a: OperationId, b: OperationId) {
        let (ia, ib) = match (self.index_of(a), self.index_of(b)) {
            (Some(ia), Some(ib)) => (ia, ib),
            _ => panic!("pair ({a}, {b}) outside the relation's domain"),
        };
        if self.edges.insert((ia, ib)) {
            self.closure = OnceLock::new();
        }
    }

    /// Adds every generating pair of `other` whose ends lie in this domain.
    pub fn union_with(&mut self, other: &OrderRelation) {
        for &(a, b) in &other.edges {
            let (a, b) = (other.domain[a], other.domain[b]);
            if self.in_domain(a) && self.in_domain(b) {
                self.add(a, b);
            }
        }
    }

    /// Generating pairs (not closed).
    pub fn generators(&self) -> impl Iterator<Item = (OperationId, OperationId)> + '_ {
        self.edges
            .iter()
            .map(|&(a, b)| (self.domain[a], self.domain[b]))
    }

    fn closure(&self) -> &Closure {
        self.closure.get_or_init(|| compute_closure(self.domain.len(), &self.edges))
    }

    /// Whether `a -> b` holds in the transitive closure.
    pub fn contains(&self, a: OperationId, b: OperationId) -> bool {
        match (self.index_of(a), self.index_of(b)) {
            (Some(ia), Some(ib)) => self.closure().reach[ia].contains(ib),
            _ => false,
        }
    }

    /// Closure membership by domain index.
    pub fn contains_index(&self, a: usize, b: usize) -> bool {
        self.closure().reach[a].contains(b)
    }

    /// All pairs of the transitive closure, in domain order.
    pub fn pairs(&self) -> Vec<(OperationId, OperationId)> {
        let c = self.closure();
        let mut out = Vec::new();
        for (a, row) in c.reach.iter().enumerate() {
            for b in row.ones() {
                out.push((self.domain[a], self.domain[b]));
            }
        }
        out
    }

    /// Linear in the generators; does not build the closure.
    pub fn is_acyclic(&self) -> bool {
        match self.closure.get() {
            Some(c) => c.acyclic,
            None => topological_order(self.domain.len(), &successors(self.domain.len(), &self.edges)).is_some(),
        }
    }

    /// Strict total order on the domain: irreflexive, and every pair of
    /// distinct elements is comparable.
    pub fn is_total(&self) -> bool {
        let n = self.domain.len();
        self.is_acyclic()
            && (0..n).all(|a| (0..n).all(|b| a == b || self.contains_index(a, b) || self.contains_index(b, a)))
    }

    /// Closure of this relation restricted to `sub`.
    pub fn restrict(&self, sub: &[OperationId]) -> OrderRelation {
        let mut rel = OrderRelation::new(sub.iter().copied().filter(|id| self.in_domain(*id)).collect());
        let dom = rel.domain.clone();
        for &a in &dom {
            for &b in &dom {
                if a != b && self.contains(a, b) {
                    rel.add(a, b);
                }
            }
        }
        rel
    }
}

fn successors(n: usize, edges: &BTreeSet<(usize, usize)>) -> Vec<Vec<usize>> {
    let mut succ = vec![Vec::new(); n];
    for &(a, b) in edges {
        succ[a].push(b);
    }
    succ
}

fn topological_order(n: usize, succ: &[Vec<usize>]) -> Option<Vec<usize>> {
    let mut indeg = vec![0usize; n];
    for &w in succ.iter().flatten() {
        indeg[w] += 1;
    }
    let mut order = Vec::with_capacity(n);
    let mut ready: Vec<usize> = (0..n).filter(|&i| indeg[i] == 0).collect();
    while let Some(v) = ready.pop() {
        order.push(v);
        for &w in &succ[v] {
            indeg[w] -= 1;
            if indeg[w] == 0 {
                ready.push(w);
            }
        }
    }
    (order.len() == n).then_some(order)
}

fn compute_closure(n: usize, edges: &BTreeSet<(usize, usize)>) -> Closure {
    let succ = successors(n, edges);
    let mut reach = vec![FixedBitSet::with_capacity(n); n];
    if let Some(order) = topological_order(n, &succ) {
        for &v in order.iter().rev() {
            let mut row = FixedBitSet::with_capacity(n);
            for &w in &succ[v] {
                row.insert(w);
                row.union_with(&reach[w]);
            }
            reach[v] = row;
        }
        return Closure {
            reach,
            acyclic: true,
        };
    }
    // cyclic: plain reachability from every node
    for (start, row) in reach.iter_mut().enumerate() {
        let mut stack = succ[start].clone();
        while let Some(v) = stack.pop() {
            if !row.put(v) {
                stack.extend(succ[v].iter().copied());
            }
        }
    }
    Closure {
        reach,
        acyclic: false,
    }
}
