//! Tagged point-to-point messaging between pipeline workers.

use std::collections::HashMap;
use std::sync::mpsc::{channel, Receiver, RecvTimeoutError, Sender};
use std::time::Duration;

use crate::error::{Error, Result};
use crate::field::SpatialField;

/// Message tag. Receives match on the exact tag, so messages may arrive in
/// any order.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Tag {
    /// Separates independent pipelines sharing the same workers, e.g. state
    /// and adjoint.
    pub channel: u8,
    pub block: usize,
    pub level: usize,
    pub iter: usize,
}

#[derive(Clone, Debug)]
pub enum Payload {
    Value(SpatialField),
    /// Last value a step will send in this block.
    Final { value: SpatialField, converged: bool },
    Abort(String),
}

pub trait Communicator {
    fn rank(&self) -> usize;
    fn size(&self) -> usize;
    fn send(&mut self, to: usize, tag: Tag, payload: Payload) -> Result<()>;
    fn recv(&mut self, from: usize, tag: Tag) -> Result<Payload>;
    /// Tells every other rank to give up.
    fn abort(&mut self, reason: &str);
}

/// Communicator for a single worker with no neighbours.
pub struct NullComm;

impl Communicator for NullComm {
    fn rank(&self) -> usize {
        0
    }

    fn size(&self) -> usize {
        1
    }

    fn send(&mut self, to: usize, _: Tag, _: Payload) -> Result<()> {
        Err(Error::Communication(format!("no peer {} in a single-worker run", to)))
    }

    fn recv(&mut self, from: usize, _: Tag) -> Result<Payload> {
        Err(Error::Communication(format!("no peer {} in a single-worker run", from)))
    }

    fn abort(&mut self, _: &str) {}
}

type Envelope = (usize, Tag, Payload);

/// In-process backend: one unbounded channel per rank.
pub struct ThreadComm {
    rank: usize,
    senders: Vec<Sender<Envelope>>,
    inbox: Receiver<Envelope>,
    pending: HashMap<(usize, Tag), Payload>,
    timeout: Duration,
}

/// Fully connected set of `n` in-process communicators.
pub fn thread_comms(n: usize, timeout: Duration) -> Vec<ThreadComm> {
    let (senders, inboxes): (Vec<_>, Vec<_>) = (0..n).map(|_| channel()).unzip();
    inboxes
        .into_iter()
        .enumerate()
        .map(|(rank, inbox)| ThreadComm {
            rank,
            senders: senders.clone(),
            inbox,
            pending: HashMap::new(),
            timeout,
        })
        .collect()
}

impl Communicator for ThreadComm {
    fn rank(&self) -> usize {
        self.rank
    }

    fn size(&self) -> usize {
        self.senders.len()
    }

    fn send(&mut self, to: usize, tag: Tag, payload: Payload) -> Result<()> {
        let s = self
            .senders
            .get(to)
            .ok_or_else(|| Error::Communication(format!("rank {} out of range", to)))?;
        // A closed inbox means the peer already finished its share of work;
        // nothing it could still consume is lost.
        let _ = s.send((self.rank, tag, payload));
        Ok(())
    }

    fn recv(&mut self, from: usize, tag: Tag) -> Result<Payload> {
        if let Some(p) = self.pending.remove(&(from, tag)) {
            return Ok(p);
        }
        loop {
            match self.inbox.recv_timeout(self.timeout) {
                Ok((_, _, Payload::Abort(reason))) => return Err(Error::Aborted(reason)),
                Ok((src, t, p)) if src == from && t == tag => return Ok(p),
                Ok((src, t, p)) => {
                    self.pending.insert((src, t), p);
                }
                Err(RecvTimeoutError::Timeout) => {
                    return Err(Error::Aborted(format!(
                        "rank {} timed out waiting for {:?} from rank {}",
                        self.rank, tag, from
                    )))
                }
                Err(RecvTimeoutError::Disconnected) => {
                    return Err(Error::Communication("all peers disconnected".into()))
                }
            }
        }
    }

    fn abort(&mut self, reason: &str) {
        for (r, s) in self.senders.iter().enumerate() {
            if r != self.rank {
                let tag = Tag {
                    channel: u8::MAX,
                    block: 0,
                    level: 0,
                    iter: 0,
                };
                let _ = s.send((self.rank, tag, Payload::Abort(reason.to_string())));
            }
        }
    }
}
