use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Faults applied to outgoing messages on a test link.
#[derive(Debug, Clone, PartialEq)]
pub struct FaultConfig {
    pub seed: u64,
    /// Drop every n-th message.
    pub drop_every: Option<u64>,
    pub drop_probability: f64,
    pub duplicate_probability: f64,
    /// Probability of holding a message back until after the next one.
    pub reorder_probability: f64,
}

impl Default for FaultConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            drop_every: None,
            drop_probability: 0.0,
            duplicate_probability: 0.0,
            reorder_probability: 0.0,
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct FaultCounts {
    pub dropped: u64,
    pub duplicated: u64,
    pub reordered: u64,
}

/// Deterministic lossy link: same seed, same faults.
#[derive(Debug)]
pub struct FaultyLink {
    cfg: FaultConfig,
    rng: ChaCha8Rng,
    seen: u64,
    held: Option<Vec<u8>>,
    counts: FaultCounts,
}

impl FaultyLink {
    pub fn new(cfg: FaultConfig) -> Self {
        Self {
            rng: ChaCha8Rng::seed_from_u64(cfg.seed),
            cfg,
            seen: 0,
            held: None,
            counts: FaultCounts::default(),
        }
    }

    pub fn counts(&self) -> FaultCounts {
        self.counts
    }

    fn chance(&mut self, p: f64) -> bool {
        p > 0.0 && self.rng.gen_bool(p.min(1.0))
    }

    /// The buffers to put on the wire, in order, in place of `msg`.
    pub fn transmit(&mut self, msg: Vec<u8>) -> Vec<Vec<u8>> {
        self.seen += 1;
        let every = self.cfg.drop_every.is_some_and(|n| n > 0 && self.seen % n == 0);
        if every || self.chance(self.cfg.drop_probability) {
            self.counts.dropped += 1;
            return Vec::new();
        }
        if self.held.is_none() && self.chance(self.cfg.reorder_probability) {
            self.counts.reordered += 1;
            self.held = Some(msg);
            return Vec::new();
        }
        let mut out = vec![msg];
        if self.chance(self.cfg.duplicate_probability) {
            self.counts.duplicated += 1;
            out.push(out[0].clone());
        }
        out.extend(self.held.take());
        out
    }

    /// Releases a held-back message.
    pub fn flush(&mut self) -> Option<Vec<u8>> {
        self.held.take()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn drops_every_nth() {
        let mut link = FaultyLink::new(FaultConfig {
            drop_every: Some(3),
            ..FaultConfig::default()
        });
        let sent: Vec<usize> = (0..9u8).map(|i| link.transmit(vec![i]).len()).collect();
        assert_eq!(sent, vec![1, 1, 0, 1, 1, 0, 1, 1, 0]);
        assert_eq!(link.counts().dropped, 3);
    }

    #[test]
    fn reorder_swaps_neighbours() {
        let mut link = FaultyLink::new(FaultConfig {
            reorder_probability: 1.0,
            ..FaultConfig::default()
        });
        assert!(link.transmit(vec![1]).is_empty());
        assert_eq!(link.transmit(vec![2]), vec![vec![2], vec![1]]);
        assert!(link.transmit(vec![3]).is_empty());
        assert_eq!(link.flush(), Some(vec![3]));
    }

    #[test]
    fn duplicates_follow_original() {
        let mut link = FaultyLink::new(FaultConfig {
            duplicate_probability: 1.0,
            ..FaultConfig::default()
        });
        assert_eq!(link.transmit(vec![7]), vec![vec![7], vec![7]]);
    }
}
