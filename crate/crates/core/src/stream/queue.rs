use std::collections::VecDeque;
use std::fmt;
use std::str::FromStr;
use std::sync::{Condvar, Mutex};
use std::time::Duration;

/// What a full queue does with a new item.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum OverloadPolicy {
    /// The producer waits for space.
    #[default]
    Block,
    /// The oldest droppable item is discarded to make room.
    DropOldest,
}

impl FromStr for OverloadPolicy {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().replace('-', "_").as_str() {
            "block" => Ok(Self::Block),
            "drop_oldest" => Ok(Self::DropOldest),
            other => Err(format!("unknown overload policy {other:?} (expected block or drop-oldest)")),
        }
    }
}

impl fmt::Display for OverloadPolicy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Block => "block",
            Self::DropOldest => "drop-oldest",
        })
    }
}

/// Outcome of a push.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Pushed {
    Queued,
    /// Queued after evicting one older item.
    Evicted,
    /// The queue was closed; the item was discarded.
    Closed,
}

struct State<T> {
    items: VecDeque<T>,
    closed: bool,
}

/// Multi-producer, single-consumer FIFO holding at most `capacity` items.
pub struct BoundedQueue<T> {
    state: Mutex<State<T>>,
    not_empty: Condvar,
    not_full: Condvar,
    capacity: usize,
    policy: OverloadPolicy,
}

impl<T> BoundedQueue<T> {
    pub fn new(capacity: usize, policy: OverloadPolicy) -> Self {
        Self {
            state: Mutex::new(State {
                items: VecDeque::with_capacity(capacity.min(4096)),
                closed: false,
            }),
            not_empty: Condvar::new(),
            not_full: Condvar::new(),
            capacity: capacity.max(1),
            policy,
        }
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn len(&self) -> usize {
        self.state.lock().expect("queue lock").items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Adds an item. Under `DropOldest`, only items for which `droppable`
    /// holds may be evicted; if none is, the push blocks like `Block`.
    pub fn push(&self, item: T, droppable: impl Fn(&T) -> bool) -> Pushed {
        let mut st = self.state.lock().expect("queue lock");
        let mut evicted = false;
        loop {
            if st.closed {
                return Pushed::Closed;
            }
            if st.items.len() < self.capacity {
                break;
            }
            if self.policy == OverloadPolicy::DropOldest {
                if let Some(i) = st.items.iter().position(&droppable) {
                    st.items.remove(i);
                    evicted = true;
                    continue;
                }
            }
            st = self.not_full.wait(st).expect("queue lock");
        }
        st.items.push_back(item);
        self.not_empty.notify_one();
        if evicted {
            Pushed::Evicted
        } else {
            Pushed::Queued
        }
    }

    /// Waits up to `timeout` for an item. `None` on timeout or when closed and drained.
    pub fn pop_timeout(&self, timeout: Duration) -> Option<T> {
        let mut st = self.state.lock().expect("queue lock");
        if st.items.is_empty() && !st.closed {
            st = self
                .not_empty
                .wait_timeout_while(st, timeout, |s| s.items.is_empty() && !s.closed)
                .expect("queue lock")
                .0;
        }
        let item = st.items.pop_front();
        if item.is_some() {
            self.not_full.notify_one();
        }
        item
    }

    /// Rejects further pushes and wakes every waiter.
    pub fn close(&self) {
        let mut st = self.state.lock().expect("queue lock");
        st.closed = true;
        self.not_empty.notify_all();
        self.not_full.notify_all();
    }

    pub fn is_closed(&self) -> bool {
        self.state.lock().expect("queue lock").closed
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::sync::Arc;

    #[test]
    fn drop_oldest_evicts_front() {
        let q = BoundedQueue::new(2, OverloadPolicy::DropOldest);
        assert_eq!(q.push(1, |_| true), Pushed::Queued);
        assert_eq!(q.push(2, |_| true), Pushed::Queued);
        assert_eq!(q.push(3, |_| true), Pushed::Evicted);
        assert_eq!(q.len(), 2);
        assert_eq!(q.pop_timeout(Duration::ZERO), Some(2));
        assert_eq!(q.pop_timeout(Duration::ZERO), Some(3));
        assert_eq!(q.pop_timeout(Duration::from_millis(1)), None);
    }

    #[test]
    fn drop_oldest_skips_protected_items() {
        let q = BoundedQueue::new(2, OverloadPolicy::DropOldest);
        q.push(10, |_| true);
        q.push(2, |_| true);
        assert_eq!(q.push(3, |x| *x < 10), Pushed::Evicted);
        assert_eq!(q.pop_timeout(Duration::ZERO), Some(10));
    }

    #[test]
    fn block_waits_for_space() {
        let q = Arc::new(BoundedQueue::new(1, OverloadPolicy::Block));
        q.push(1, |_| true);
        let q2 = Arc::clone(&q);
        let h = std::thread::spawn(move || q2.push(2, |_| true));
        std::thread::sleep(Duration::from_millis(20));
        assert_eq!(q.len(), 1);
        assert_eq!(q.pop_timeout(Duration::ZERO), Some(1));
        assert_eq!(h.join().unwrap(), Pushed::Queued);
        assert_eq!(q.pop_timeout(Duration::from_millis(100)), Some(2));
    }

    #[test]
    fn close_wakes_blocked_pushers() {
        let q = Arc::new(BoundedQueue::new(1, OverloadPolicy::Block));
        q.push(1, |_| true);
        let q2 = Arc::clone(&q);
        let h = std::thread::spawn(move || q2.push(2, |_| true));
        std::thread::sleep(Duration::from_millis(10));
        q.close();
        assert_eq!(h.join().unwrap(), Pushed::Closed);
        assert_eq!(q.pop_timeout(Duration::ZERO), Some(1));
        assert_eq!(q.pop_timeout(Duration::ZERO), None);
    }

    #[test]
    fn policy_parses() {
        assert_eq!("drop-oldest".parse::<OverloadPolicy>().unwrap(), OverloadPolicy::DropOldest);
        assert_eq!("BLOCK".parse::<OverloadPolicy>().unwrap(), OverloadPolicy::Block);
        assert!("spill".parse::<OverloadPolicy>().is_err());
    }
}
