//! Deterministic simulator of the network model.
//!
//! Processes own a local store shared by their threads and are connected by
//! reliable FIFO channels, one per ordered pair including self-channels.
//! Logical threads are futures polled with a no-op waker; each `await` on a
//! [`Ctx`] request is one atomic action, and everything between two awaits
//! is free. A seeded scheduler picks the next thread to act.

mod trace;

use std::cell::RefCell;
use std::collections::{BTreeMap, VecDeque};
use std::fmt;
use std::future::Future;
use std::pin::Pin;
use std::rc::Rc;
use std::task::{Context, Poll, Waker};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub use trace::{
    extract_computation, format_trace, is_protocol_var, parse_trace, Action, InFlight, Level, Mark, Outcome, Record,
    Role, Trace, PROTOCOL_VAR_PREFIX,
};

use crate::computation::{MsgId, ProcId, ThreadId, Value, Var};
use crate::error::{Error, Result};

/// Fairness floor factor: under [`Fairness::Floor`] a runnable thread waits
/// at most `FAIRNESS_FACTOR * |threads|` steps before it is forced to run.
pub const FAIRNESS_FACTOR: u64 = 16;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Fairness {
    /// Uniform random choice plus a round-robin floor.
    Floor,
    /// Uniform random choice only; spin loops may starve.
    Uniform,
}

impl fmt::Display for Fairness {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Fairness::Floor => write!(f, "random-floor{FAIRNESS_FACTOR}"),
            Fairness::Uniform => f.write_str("random"),
        }
    }
}

#[derive(Clone, Debug)]
pub struct SimConfig {
    pub seed: u64,
    pub max_steps: u64,
    pub fairness: Fairness,
    pub record_trace: bool,
}

impl SimConfig {
    pub fn new(seed: u64) -> Self {
        SimConfig {
            seed,
            max_steps: 500_000,
            fairness: Fairness::Floor,
            record_trace: true,
        }
    }
}

/// Payload carried by the simulated network.
pub trait Message: Clone + fmt::Display + 'static {
    /// Messages that circulate forever (a ring token) do not prevent quiescence.
    fn circulating(&self) -> bool {
        false
    }
}

type Pattern<M> = Rc<dyn Fn(ProcId, &M) -> bool>;

enum Request<M> {
    Read(Var),
    Write(Var, Value),
    Send(ProcId, M),
    Recv(Pattern<M>),
}

enum Reply<M> {
    Value(Value),
    Done,
    Msg(ProcId, M),
}

struct Slot<M> {
    request: Option<Request<M>>,
    reply: Option<Reply<M>>,
    marks: Vec<Mark>,
}

/// A thread's handle on the simulator.
pub struct Ctx<M> {
    slot: Rc<RefCell<Slot<M>>>,
    proc: ProcId,
    thread: ThreadId,
    nprocs: u32,
}

impl<M> Clone for Ctx<M> {
    fn clone(&self) -> Self {
        Ctx {
            slot: self.slot.clone(),
            proc: self.proc,
            thread: self.thread,
            nprocs: self.nprocs,
        }
    }
}

impl<M: Message> Ctx<M> {
    pub fn proc(&self) -> ProcId {
        self.proc
    }

    pub fn thread(&self) -> ThreadId {
        self.thread
    }

    pub fn nprocs(&self) -> u32 {
        self.nprocs
    }

    pub fn procs(&self) -> impl Iterator<Item = ProcId> {
        (0..self.nprocs).map(ProcId)
    }

    fn request(&self, r: Request<M>) -> Pending<M> {
        Pending {
            slot: self.slot.clone(),
            request: Some(r),
        }
    }

    pub async fn read(&self, var: &Var) -> Value {
        match self.request(Request::Read(var.clone())).await {
            Reply::Value(v) => v,
            _ => unreachable!("read answered with a non-value"),
        }
    }

    pub async fn write(&self, var: &Var, value: Value) {
        self.request(Request::Write(var.clone(), value)).await;
    }

    pub async fn send(&self, dst: ProcId, msg: M) {
        self.request(Request::Send(dst, msg)).await;
    }

    /// Blocks until some incoming channel head matches, then consumes the
    /// oldest such head.
    pub async fn recv_match(&self, pattern: impl Fn(ProcId, &M) -> bool + 'static) -> (ProcId, M) {
        match self.request(Request::Recv(Rc::new(pattern))).await {
            Reply::Msg(src, m) => (src, m),
            _ => unreachable!("recv answered without a message"),
        }
    }

    pub fn mark(&self, mark: Mark) {
        self.slot.borrow_mut().marks.push(mark);
    }
}

struct Pending<M> {
    slot: Rc<RefCell<Slot<M>>>,
    request: Option<Request<M>>,
}

// No field is structurally pinned.
impl<M> Unpin for Pending<M> {}

impl<M> Future for Pending<M> {
    type Output = Reply<M>;

    fn poll(self: Pin<&mut Self>, _cx: &mut Context<'_>) -> Poll<Reply<M>> {
        let this = self.get_mut();
        let mut slot = this.slot.borrow_mut();
        if let Some(r) = this.request.take() {
            slot.request = Some(r);
            return Poll::Pending;
        }
        match slot.reply.take() {
            Some(r) => Poll::Ready(r),
            None => Poll::Pending,
        }
    }
}

type Body = Pin<Box<dyn Future<Output = Result<()>>>>;

struct Thread<M> {
    proc: ProcId,
    id: ThreadId,
    role: Role,
    body: Option<Body>,
    slot: Rc<RefCell<Slot<M>>>,
    last_run: u64,
}

struct Queued<M> {
    msg: M,
    id: MsgId,
    sent_at: u64,
}

pub struct Sim<M: Message> {
    config: SimConfig,
    nprocs: u32,
    /// Per process: value and the record number of the last write.
    stores: Vec<BTreeMap<Var, (Value, Option<u64>)>>,
    channels: Vec<VecDeque<Queued<M>>>,
    threads: Vec<Thread<M>>,
    next_msg: Vec<u64>,
    trace: Trace,
    next_record: u64,
    rng: ChaCha8Rng,
}

impl<M: Message> Sim<M> {
    /// Processes are `procs`, which must be exactly `0..n` in some order.
    pub fn new(config: SimConfig, procs: &[ProcId]) -> Result<Self> {
        if config.max_steps == 0 {
            return Err(Error::Sim("max_steps must be positive".into()));
        }
        if procs.is_empty() {
            return Err(Error::Sim("no processes".into()));
        }
        let mut ids: Vec<u32> = procs.iter().map(|p| p.0).collect();
        ids.sort_unstable();
        if ids.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::Sim("duplicate process id".into()));
        }
        if ids.iter().enumerate().any(|(i, &p)| p != i as u32) {
            return Err(Error::Sim("process ids must be 0..n".into()));
        }
        let n = procs.len() as u32;
        let trace = Trace {
            header: vec![
                ("seed".into(), config.seed.to_string()),
                ("policy".into(), config.fairness.to_string()),
            ],
            nprocs: n,
            ..Trace::default()
        };
        Ok(Sim {
            rng: ChaCha8Rng::seed_from_u64(config.seed),
            config,
            nprocs: n,
            stores: vec![BTreeMap::new(); n as usize],
            channels: (0..n * n).map(|_| VecDeque::new()).collect(),
            threads: Vec::new(),
            next_msg: vec![0; n as usize],
            trace,
            next_record: 1,
        })
    }

    pub fn nprocs(&self) -> u32 {
        self.nprocs
    }

    pub fn channel_count(&self) -> usize {
        self.channels.len()
    }

    /// Appends a `key value` pair to the trace header.
    pub fn annotate(&mut self, key: &str, value: impl fmt::Display) {
        self.trace.header.push((key.to_string(), value.to_string()));
    }

    /// Declares a process-local variable with its initial value.
    pub fn declare(&mut self, proc: ProcId, var: Var, init: Value) {
        self.stores[proc.0 as usize].insert(var, (init, None));
    }

    pub fn spawn<F, Fut>(&mut self, proc: ProcId, role: Role, body: F) -> Result<ThreadId>
    where
        F: FnOnce(Ctx<M>) -> Fut,
        Fut: Future<Output = Result<()>> + 'static,
    {
        if proc.0 >= self.nprocs {
            return Err(Error::Sim(format!("no process {proc}")));
        }
        let id = ThreadId(self.threads.iter().filter(|t| t.proc == proc).count() as u32);
        let slot = Rc::new(RefCell::new(Slot {
            request: None,
            reply: None,
            marks: Vec::new(),
        }));
        let ctx = Ctx {
            slot: slot.clone(),
            proc,
            thread: id,
            nprocs: self.nprocs,
        };
        self.threads.push(Thread {
            proc,
            id,
            role,
            body: Some(Box::pin(body(ctx))),
            slot,
            last_run: 0,
        });
        self.trace.threads.push((proc, id, role));
        Ok(id)
    }

    fn record(&mut self, proc: ProcId, thread: ThreadId, action: Action) -> u64 {
        let n = self.next_record;
        self.next_record += 1;
        if self.config.record_trace {
            self.trace.records.push(Record {
                n,
                proc,
                thread,
                action,
            });
        }
        n
    }

    /// Polls thread `i` until it posts its next request or finishes.
    fn advance(&mut self, i: usize) -> Result<()> {
        let mut cx = Context::from_waker(Waker::noop());
        let poll = match self.threads[i].body.as_mut() {
            Some(body) => body.as_mut().poll(&mut cx),
            None => return Ok(()),
        };
        let (proc, id) = (self.threads[i].proc, self.threads[i].id);
        let marks = std::mem::take(&mut self.threads[i].slot.borrow_mut().marks);
        for m in marks {
            self.record(proc, id, Action::Mark(m));
        }
        match poll {
            Poll::Ready(Ok(())) => {
                self.threads[i].body = None;
                Ok(())
            }
            Poll::Ready(Err(e)) => Err(e),
            Poll::Pending if self.threads[i].slot.borrow().request.is_some() => Ok(()),
            Poll::Pending => Err(Error::Sim(format!(
                "thread {proc}.{id} suspended without a request"
            ))),
        }
    }

    fn chan(&self, src: u32, dst: u32) -> usize {
        (src * self.nprocs + dst) as usize
    }

    /// The incoming channel whose matching head was sent earliest.
    fn matching_head(&self, dst: ProcId, pattern: &Pattern<M>) -> Option<u32> {
        (0..self.nprocs)
            .filter_map(|s| {
                let q = self.channels[self.chan(s, dst.0)].front()?;
                pattern(ProcId(s), &q.msg).then_some((q.sent_at, s))
            })
            .min()
            .map(|(_, s)| s)
    }

    fn runnable(&self, i: usize) -> bool {
        let t = &self.threads[i];
        if t.body.is_none() {
            return false;
        }
        match &t.slot.borrow().request {
            Some(Request::Recv(p)) => self.matching_head(t.proc, p).is_some(),
            Some(_) => true,
            None => false,
        }
    }

    /// Main threads finished, service threads waiting to receive, and only
    /// circulating messages left in flight.
    fn quiescent(&self) -> bool {
        let threads_idle = self.threads.iter().all(|t| match t.role {
            Role::Main => t.body.is_none(),
            Role::Service => {
                t.body.is_none() || matches!(t.slot.borrow().request, Some(Request::Recv(_)))
            }
        });
        threads_idle && self.channels.iter().flatten().all(|q| q.msg.circulating())
    }

    fn pick(&mut self, runnable: &[usize], step: u64) -> usize {
        if self.config.fairness == Fairness::Floor {
            // forcing at W - |threads| bounds every wait by W even when
            // several threads fall due together
            let n = self.threads.len() as u64;
            let window = FAIRNESS_FACTOR * n - n;
            let overdue = runnable
                .iter()
                .copied()
                .filter(|&i| step - self.threads[i].last_run >= window)
                .min_by_key(|&i| (self.threads[i].last_run, i));
            if let Some(i) = overdue {
                return i;
            }
        }
        runnable[self.rng.gen_range(0..runnable.len())]
    }

    fn execute(&mut self, i: usize) -> Result<()> {
        let (proc, id) = (self.threads[i].proc, self.threads[i].id);
        let request = self.threads[i]
            .slot
            .borrow_mut()
            .request
            .take()
            .expect("runnable thread has a request");
        let reply = match request {
            Request::Read(var) => {
                let &(value, from) = self.stores[proc.0 as usize]
                    .get(&var)
                    .ok_or_else(|| Error::Sim(format!("process {proc} reads unknown variable {var}")))?;
                self.record(proc, id, Action::Read { var, value, from });
                Reply::Value(value)
            }
            Request::Write(var, value) => {
                if !self.stores[proc.0 as usize].contains_key(&var) {
                    return Err(Error::Sim(format!("process {proc} writes unknown variable {var}")));
                }
                let n = self.record(proc, id, Action::Write { var: var.clone(), value });
                self.stores[proc.0 as usize].insert(var, (value, Some(n)));
                Reply::Done
            }
            Request::Send(dst, msg) => {
                if dst.0 >= self.nprocs {
                    return Err(Error::Sim(format!("send to unknown process {dst}")));
                }
                self.next_msg[proc.0 as usize] += 1;
                let mid = MsgId {
                    sender: proc,
                    seq: self.next_msg[proc.0 as usize],
                };
                let wire = msg.to_string();
                let n = self.record(proc, id, Action::Send { dst, msg: mid, wire });
                let c = self.chan(proc.0, dst.0);
                self.channels[c].push_back(Queued {
                    msg,
                    id: mid,
                    sent_at: n,
                });
                Reply::Done
            }
            Request::Recv(pattern) => {
                let src = self.matching_head(proc, &pattern).expect("runnable recv has a head");
                let c = self.chan(src, proc.0);
                let q = self.channels[c].pop_front().expect("head exists");
                let wire = q.msg.to_string();
                self.record(
                    proc,
                    id,
                    Action::Recv {
                        src: ProcId(src),
                        msg: q.id,
                        wire,
                    },
                );
                Reply::Msg(ProcId(src), q.msg)
            }
        };
        self.threads[i].slot.borrow_mut().reply = Some(reply);
        self.advance(i)
    }

    /// Runs until quiescence, deadlock, or the step budget.
    pub fn run(mut self) -> Result<Trace> {
        for i in 0..self.threads.len() {
            self.advance(i)?;
        }
        let mut step = 0u64;
        let outcome = loop {
            if self.quiescent() {
                break Outcome::Quiescent;
            }
            let runnable: Vec<usize> = (0..self.threads.len()).filter(|&i| self.runnable(i)).collect();
            if runnable.is_empty() {
                break Outcome::Deadlock;
            }
            if step >= self.config.max_steps {
                break Outcome::BudgetExhausted;
            }
            let i = self.pick(&runnable, step);
            step += 1;
            self.threads[i].last_run = step;
            self.execute(i)?;
        };
        let mut trace = self.trace;
        trace.outcome = Some(outcome);
        trace.steps = step;
        let mut in_flight: Vec<(u64, InFlight)> = Vec::new();
        for s in 0..self.nprocs {
            for d in 0..self.nprocs {
                for q in &self.channels[(s * self.nprocs + d) as usize] {
                    in_flight.push((
                        q.sent_at,
                        InFlight {
                            src: ProcId(s),
                            dst: ProcId(d),
                            msg: q.id,
                            circulating: q.msg.circulating(),
                            wire: q.msg.to_string(),
                        },
                    ));
                }
            }
        }
        in_flight.sort_by_key(|(n, _)| *n);
        trace.in_flight = in_flight.into_iter().map(|(_, m)| m).collect();
        Ok(trace)
    }
}
