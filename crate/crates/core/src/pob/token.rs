//! Token-ring backend. One token per label circulates around the ring;
//! a labeled broadcast runs only while the local token thread holds the
//! door open, and waits for every process to acknowledge.
//!
//! Handshake: the guard opens the door and waits for the broadcaster to
//! close it; the broadcaster drops its request before closing. Waiting on
//! `need` instead lets back-to-back broadcasts hide the dropped request
//! from the guard, after which both sides spin forever.

use crate::computation::{Label, ProcId, Update, Var};
use crate::error::Result;
use crate::sim::{Ctx, Role, Sim, PROTOCOL_VAR_PREFIX};

use super::WireMessage;

pub fn need_token(l: Label) -> Var {
    Var::new(&format!("{PROTOCOL_VAR_PREFIX}need.{l}"))
}

pub fn door_open(l: Label) -> Var {
    Var::new(&format!("{PROTOCOL_VAR_PREFIX}door.{l}"))
}

pub fn next(p: ProcId, nprocs: u32) -> ProcId {
    ProcId((p.0 + 1) % nprocs)
}

/// Handshake flags start FALSE so the first broadcast waits for a grant.
pub fn install(sim: &mut Sim<WireMessage>, labels: &[Label]) -> Result<()> {
    for p in 0..sim.nprocs() {
        let p = ProcId(p);
        for &l in labels {
            sim.declare(p, need_token(l), 0);
            sim.declare(p, door_open(l), 0);
            sim.spawn(p, Role::Service, move |ctx| token_thread(ctx, l))?;
        }
    }
    Ok(())
}

async fn token_thread(ctx: Ctx<WireMessage>, l: Label) -> Result<()> {
    let next = next(ctx.proc(), ctx.nprocs());
    if ctx.proc() == ProcId(0) {
        ctx.send(next, WireMessage::Token { label: l }).await;
    }
    loop {
        pass_token(&ctx, l, next).await;
    }
}

async fn pass_token(ctx: &Ctx<WireMessage>, l: Label, next: ProcId) {
    let (need, door) = (need_token(l), door_open(l));
    ctx.recv_match(move |_, m| matches!(m, WireMessage::Token { label } if *label == l))
        .await;
    if ctx.read(&need).await != 0 {
        ctx.write(&door, 1).await;
        while ctx.read(&door).await != 0 {}
    }
    ctx.send(next, WireMessage::Token { label: l }).await;
}

pub(super) async fn bcast(ctx: &Ctx<WireMessage>, update: Update, label: Label) {
    if label.is_null() {
        bcastop(ctx, update, label).await;
    } else {
        protected_bcast(ctx, update, label).await;
    }
}

async fn protected_bcast(ctx: &Ctx<WireMessage>, update: Update, label: Label) {
    let (need, door) = (need_token(label), door_open(label));
    ctx.write(&need, 1).await;
    while ctx.read(&door).await == 0 {}
    bcastop(ctx, update, label).await;
    ctx.write(&need, 0).await;
    ctx.write(&door, 0).await;
}

async fn bcastop(ctx: &Ctx<WireMessage>, update: Update, label: Label) {
    for q in ctx.procs() {
        ctx.send(
            q,
            WireMessage::Message {
                update: update.clone(),
                label,
            },
        )
        .await;
    }
    if !label.is_null() {
        for _ in ctx.procs() {
            ctx.recv_match(|_, m| matches!(m, WireMessage::Ack)).await;
        }
    }
}

pub(super) async fn deliver(ctx: &Ctx<WireMessage>) -> (Update, Label) {
    let (src, m) = ctx
        .recv_match(|_, m| matches!(m, WireMessage::Message { .. }))
        .await;
    let WireMessage::Message { update, label } = m else {
        unreachable!("pattern admits only MESSAGE")
    };
    if !label.is_null() {
        ctx.send(src, WireMessage::Ack).await;
    }
    (update, label)
}
