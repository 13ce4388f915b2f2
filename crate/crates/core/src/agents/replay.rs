use rand::Rng;

use crate::error::{ensure, Result};

/// Fixed-capacity ring buffer with uniform sampling.
#[derive(Debug, Clone)]
pub struct ReplayBuffer<T> {
    capacity: usize,
    items: Vec<T>,
    next: usize,
}

impl<T> ReplayBuffer<T> {
    pub fn new(capacity: usize) -> Result<Self> {
        ensure!(capacity > 0, "replay capacity must be positive");
        Ok(ReplayBuffer {
            capacity,
            items: Vec::with_capacity(capacity.min(1 << 16)),
            next: 0,
        })
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    /// Stores `item`, overwriting the oldest entry once full.
    pub fn push(&mut self, item: T) {
        if self.items.len() < self.capacity {
            self.items.push(item);
        } else {
            self.items[self.next] = item;
        }
        self.next = (self.next + 1) % self.capacity;
    }

    pub fn get(&self, index: usize) -> Option<&T> {
        self.items.get(index)
    }

    /// `batch` indices drawn uniformly, with replacement, from filled slots.
    pub fn sample_indices<R: Rng + ?Sized>(&self, batch: usize, rng: &mut R) -> Result<Vec<usize>> {
        ensure!(
            !self.items.is_empty(),
            "cannot sample from an empty replay buffer"
        );
        Ok((0..batch)
            .map(|_| rng.random_range(0..self.items.len()))
            .collect())
    }

    pub fn sample<'a, R: Rng + ?Sized>(&'a self, batch: usize, rng: &mut R) -> Result<Vec<&'a T>> {
        Ok(self
            .sample_indices(batch, rng)?
            .into_iter()
            .map(|i| &self.items[i])
            .collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn never_exceeds_capacity() {
        let mut buf = ReplayBuffer::new(3).unwrap();
        for i in 0..10 {
            buf.push(i);
            assert!(buf.len() <= 3);
        }
        let mut kept: Vec<_> = (0..3).map(|i| *buf.get(i).unwrap()).collect();
        kept.sort();
        assert_eq!(kept, vec![7, 8, 9]);
    }

    #[test]
    fn samples_only_filled_slots() {
        let mut buf = ReplayBuffer::new(100).unwrap();
        buf.push(1);
        buf.push(2);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert!(buf
            .sample_indices(50, &mut rng)
            .unwrap()
            .iter()
            .all(|&i| i < 2));
    }

    #[test]
    fn sampling_is_seed_deterministic() {
        let mut buf = ReplayBuffer::new(10).unwrap();
        (0..10).for_each(|i| buf.push(i));
        let a = buf
            .sample_indices(32, &mut ChaCha8Rng::seed_from_u64(5))
            .unwrap();
        let b = buf
            .sample_indices(32, &mut ChaCha8Rng::seed_from_u64(5))
            .unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn empty_buffer_rejects_sampling() {
        let buf: ReplayBuffer<u8> = ReplayBuffer::new(4).unwrap();
        assert!(buf
            .sample_indices(1, &mut ChaCha8Rng::seed_from_u64(0))
            .is_err());
        assert!(ReplayBuffer::<u8>::new(0).is_err());
    }
}
