//! Fan-out of tick results to stream subscribers.
//!
//! Frames are kept in an append-only history. An ordered subscriber walks
//! the history with its own cursor, so it never loses a frame however slow
//! it is; a coalescing subscriber only ever takes the newest frame.

use std::sync::Arc;

use dras_core::ldm::Millis;
use dras_core::pipeline::TickOutput;
use parking_lot::RwLock;
use tokio::sync::watch;

#[derive(Debug)]
pub struct StreamHub {
    frames: RwLock<Vec<Arc<TickOutput>>>,
    published: watch::Sender<usize>,
}

impl Default for StreamHub {
    fn default() -> Self {
        Self { frames: RwLock::new(Vec::new()), published: watch::Sender::new(0) }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct Subscription {
    /// Deliver only the newest frame when several are pending.
    pub coalesce: bool,
    /// Start at the first frame with this timestamp or later instead of the
    /// live edge.
    pub from: Option<Millis>,
}

impl StreamHub {
    pub fn new() -> Arc<Self> {
        Arc::new(Self::default())
    }

    /// Append a frame. Frames older than the last published one are refused
    /// so the stream stays ordered by timestamp.
    pub fn publish(&self, tick: TickOutput) -> bool {
        let mut frames = self.frames.write();
        if frames.last().is_some_and(|last| tick.timestamp < last.timestamp) {
            log::warn!("dropping out-of-order frame t={}", tick.timestamp);
            return false;
        }
        frames.push(Arc::new(tick));
        let n = frames.len();
        drop(frames);
        self.published.send_replace(n);
        true
    }

    pub fn len(&self) -> usize {
        self.frames.read().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn last(&self) -> Option<Arc<TickOutput>> {
        self.frames.read().last().cloned()
    }

    pub fn subscribe(self: &Arc<Self>, sub: Subscription) -> Subscriber {
        let rx = self.published.subscribe();
        let frames = self.frames.read();
        let cursor = match sub.from {
            Some(t) => frames.partition_point(|f| f.timestamp < t),
            None => frames.len(),
        };
        drop(frames);
        Subscriber { hub: Arc::clone(self), rx, cursor, coalesce: sub.coalesce }
    }
}

pub struct Subscriber {
    hub: Arc<StreamHub>,
    rx: watch::Receiver<usize>,
    cursor: usize,
    coalesce: bool,
}

impl Subscriber {
    /// Wait for frames past the cursor. Returns them in order, or only the
    /// newest one when coalescing.
    pub async fn next_batch(&mut self) -> Vec<Arc<TickOutput>> {
        loop {
            let len = *self.rx.borrow_and_update();
            if self.cursor < len {
                let frames = self.hub.frames.read();
                let start = if self.coalesce { len - 1 } else { self.cursor };
                let batch = frames[start..len].to_vec();
                self.cursor = len;
                return batch;
            }
            if self.rx.changed().await.is_err() {
                // the hub owns the sender, so this only happens at teardown
                std::future::pending::<()>().await;
            }
        }
    }
}
