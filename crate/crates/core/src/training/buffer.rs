use crate::episode::EpisodeRecord;
use rand::Rng;
use std::collections::VecDeque;

/// FIFO store of whole episodes.
#[derive(Clone, Debug)]
pub struct ReplayBuffer {
    episodes: VecDeque<EpisodeRecord>,
    capacity: usize,
    inserted: u64,
}

impl ReplayBuffer {
    pub fn new(capacity: usize) -> Self {
        assert!(capacity > 0, "replay capacity must be positive");
        Self {
            episodes: VecDeque::with_capacity(capacity.min(1024)),
            capacity,
            inserted: 0,
        }
    }

    /// Appends an episode, evicting the oldest one when full.
    pub fn push(&mut self, episode: EpisodeRecord) {
        if self.episodes.len() == self.capacity {
            self.episodes.pop_front();
        }
        self.episodes.push_back(episode);
        self.inserted += 1;
    }

    pub fn len(&self) -> usize {
        self.episodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.episodes.is_empty()
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    /// Episodes ever inserted, evicted ones included.
    pub fn inserted(&self) -> u64 {
        self.inserted
    }

    pub fn iter(&self) -> impl Iterator<Item = &EpisodeRecord> {
        self.episodes.iter()
    }

    /// `batch_size` distinct episodes drawn uniformly, or `None` while the
    /// buffer holds fewer than that.
    pub fn sample(&self, batch_size: usize, rng: &mut impl Rng) -> Option<Vec<&EpisodeRecord>> {
        if batch_size == 0 || self.episodes.len() < batch_size {
            return None;
        }
        let idx = rand::seq::index::sample(rng, self.episodes.len(), batch_size);
        Some(idx.iter().map(|i| &self.episodes[i]).collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::StepResult;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use std::collections::HashSet;

    fn episode(seed: u64) -> EpisodeRecord {
        let step = StepResult {
            obs: vec![vec![0.0]],
            state: vec![0.0],
            reward: 0.0,
            done: false,
            avail_actions: vec![vec![true]],
        };
        let mut ep = EpisodeRecord::start(seed, step.clone());
        ep.push(vec![0], StepResult { done: true, ..step });
        ep
    }

    #[test]
    fn evicts_oldest_at_capacity() {
        let mut buf = ReplayBuffer::new(3);
        for s in 0..5 {
            buf.push(episode(s));
        }
        assert_eq!(buf.len(), 3);
        assert_eq!(buf.inserted(), 5);
        let seeds: Vec<u64> = buf.iter().map(|e| e.seed).collect();
        assert_eq!(seeds, vec![2, 3, 4]);
    }

    #[test]
    fn samples_without_replacement() {
        let mut buf = ReplayBuffer::new(10);
        for s in 0..10 {
            buf.push(episode(s));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert!(buf.sample(11, &mut rng).is_none());
        for _ in 0..50 {
            let batch = buf.sample(7, &mut rng).unwrap();
            let distinct: HashSet<u64> = batch.iter().map(|e| e.seed).collect();
            assert_eq!(distinct.len(), 7);
        }
        let mut counts = [0usize; 10];
        for _ in 0..5000 {
            for e in buf.sample(2, &mut rng).unwrap() {
                counts[e.seed as usize] += 1;
            }
        }
        assert!(counts.iter().all(|&c| (800..1200).contains(&c)), "{counts:?}");
    }
}
