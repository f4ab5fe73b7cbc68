use thiserror::Error;

const EMPTY: u32 = u32::MAX;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum CountError {
    #[error("topic {topic} outside [0, {topics})")]
    TopicOutOfRange { topic: u32, topics: usize },
    #[error("decrement of absent topic {0}")]
    Underflow(u32),
}

/// Topic -> count table for one document or one word, open addressing with
/// linear probing.
///
/// The capacity is the smallest power of two strictly larger than
/// `min(K, 2L)` for `L` counted assignments, so the table always keeps a free
/// slot. Topics whose count drops to zero are removed by backward shifting.
#[derive(Clone, Debug)]
pub struct SparseCounts {
    keys: Vec<u32>,
    vals: Vec<u32>,
    mask: usize,
    occupied: usize,
    total: u64,
    topics: usize,
}

impl SparseCounts {
    pub fn capacity_for(topics: usize, len: usize) -> usize {
        (topics.min(2 * len) + 1).next_power_of_two()
    }

    /// Empty table sized for `len` assignments over `topics` topics.
    pub fn with_len(topics: usize, len: usize) -> Self {
        let cap = Self::capacity_for(topics, len);
        Self {
            keys: vec![EMPTY; cap],
            vals: vec![0; cap],
            mask: cap - 1,
            occupied: 0,
            total: 0,
            topics,
        }
    }

    /// Clears and resizes for a new row or column, reusing the buffers.
    pub fn reset(&mut self, topics: usize, len: usize) {
        let cap = Self::capacity_for(topics, len);
        self.keys.clear();
        self.keys.resize(cap, EMPTY);
        self.vals.clear();
        self.vals.resize(cap, 0);
        self.mask = cap - 1;
        self.occupied = 0;
        self.total = 0;
        self.topics = topics;
    }

    pub fn from_assignments(assignments: &[u32], topics: usize) -> Result<Self, CountError> {
        let mut c = Self::with_len(topics, assignments.len());
        for &z in assignments {
            c.try_increment(z)?;
        }
        Ok(c)
    }

    #[inline]
    fn home(&self, topic: u32) -> usize {
        // multiply-shift mixing, then mask to the table
        let h = topic.wrapping_mul(0x9E37_79B1);
        (h ^ (h >> 15)) as usize & self.mask
    }

    #[inline]
    fn find(&self, topic: u32) -> (usize, bool) {
        let mut i = self.home(topic);
        loop {
            let k = self.keys[i];
            if k == topic {
                return (i, true);
            }
            if k == EMPTY {
                return (i, false);
            }
            i = (i + 1) & self.mask;
        }
    }

    #[inline]
    pub fn get(&self, topic: u32) -> u32 {
        match self.find(topic) {
            (i, true) => self.vals[i],
            _ => 0,
        }
    }

    pub fn try_increment(&mut self, topic: u32) -> Result<(), CountError> {
        if topic as usize >= self.topics {
            return Err(CountError::TopicOutOfRange {
                topic,
                topics: self.topics,
            });
        }
        self.increment(topic);
        Ok(())
    }

    /// Adds one occurrence of `topic`. Callers guarantee `topic < K` and that
    /// the table was sized for at least the resulting number of assignments
    /// or distinct topics.
    #[inline]
    pub fn increment(&mut self, topic: u32) {
        debug_assert!((topic as usize) < self.topics);
        let (i, found) = self.find(topic);
        if !found {
            debug_assert!(self.occupied < self.mask, "sparse count table overfull");
            self.keys[i] = topic;
            self.occupied += 1;
        }
        self.vals[i] += 1;
        self.total += 1;
    }

    pub fn decrement(&mut self, topic: u32) -> Result<(), CountError> {
        let (i, found) = self.find(topic);
        if !found {
            return Err(CountError::Underflow(topic));
        }
        self.total -= 1;
        self.vals[i] -= 1;
        if self.vals[i] == 0 {
            self.remove_at(i);
        }
        Ok(())
    }

    /// Backward-shift deletion keeps every probe chain gap-free.
    fn remove_at(&mut self, mut hole: usize) {
        self.occupied -= 1;
        let mut j = hole;
        loop {
            j = (j + 1) & self.mask;
            let k = self.keys[j];
            if k == EMPTY {
                break;
            }
            let home = self.home(k);
            // move k into the hole unless its home lies cyclically in (hole, j]
            let stays = if hole <= j {
                hole < home && home <= j
            } else {
                hole < home || home <= j
            };
            if !stays {
                self.keys[hole] = k;
                self.vals[hole] = self.vals[j];
                hole = j;
            }
        }
        self.keys[hole] = EMPTY;
        self.vals[hole] = 0;
    }

    /// Number of distinct topics present (K_d or K_w).
    pub fn distinct(&self) -> usize {
        self.occupied
    }

    /// Sum of all counts (L).
    pub fn total(&self) -> u64 {
        self.total
    }

    pub fn capacity(&self) -> usize {
        self.keys.len()
    }

    pub fn topics(&self) -> usize {
        self.topics
    }

    /// Non-zero `(topic, count)` pairs in table order.
    pub fn iter(&self) -> impl Iterator<Item = (u32, u32)> + '_ {
        self.keys
            .iter()
            .zip(&self.vals)
            .filter(|(&k, _)| k != EMPTY)
            .map(|(&k, &v)| (k, v))
    }

    /// Non-zero `(topic, count)` pairs sorted by topic id.
    pub fn sorted_into(&self, out: &mut Vec<(u32, u32)>) {
        out.clear();
        out.extend(self.iter());
        out.sort_unstable_by_key(|p| p.0);
    }

    pub fn to_dense(&self) -> Vec<u32> {
        let mut d = vec![0u32; self.topics];
        for (k, v) in self.iter() {
            d[k as usize] = v;
        }
        d
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn small_example_and_capacity() {
        let c = SparseCounts::from_assignments(&[0, 1, 1], 8).unwrap();
        assert_eq!(c.get(0), 1);
        assert_eq!(c.get(1), 2);
        assert_eq!(c.get(5), 0);
        assert_eq!(c.total(), 3);
        assert_eq!(c.distinct(), 2);
        // min{8, 6} = 6 -> 8
        assert_eq!(c.capacity(), 8);
    }

    #[test]
    fn capacity_rule() {
        assert_eq!(SparseCounts::capacity_for(4, 0), 1);
        assert_eq!(SparseCounts::capacity_for(1, 100), 2);
        assert_eq!(SparseCounts::capacity_for(1000, 3), 8);
        assert_eq!(SparseCounts::capacity_for(1000, 4), 16);
        assert_eq!(SparseCounts::capacity_for(1024, 5000), 2048);
    }

    #[test]
    fn empty_counts() {
        let c = SparseCounts::from_assignments(&[], 4).unwrap();
        assert_eq!(c.total(), 0);
        assert!((0..4).all(|k| c.get(k) == 0));
        assert_eq!(c.iter().count(), 0);
    }

    #[test]
    fn rejects_out_of_range() {
        assert_eq!(
            SparseCounts::from_assignments(&[0, 4], 4).unwrap_err(),
            CountError::TopicOutOfRange { topic: 4, topics: 4 }
        );
        let mut c = SparseCounts::with_len(4, 2);
        assert_eq!(c.decrement(1), Err(CountError::Underflow(1)));
    }

    #[test]
    fn one_topic() {
        let c = SparseCounts::from_assignments(&[0; 17], 1).unwrap();
        assert_eq!(c.get(0), 17);
        assert_eq!(c.to_dense(), vec![17]);
    }

    proptest! {
        #[test]
        fn equals_dense_histogram(topics in 1usize..300, zs in proptest::collection::vec(any::<u32>(), 0..400)) {
            let zs: Vec<u32> = zs.into_iter().map(|z| z % topics as u32).collect();
            let c = SparseCounts::from_assignments(&zs, topics).unwrap();
            let mut hist = vec![0u32; topics];
            for &z in &zs {
                hist[z as usize] += 1;
            }
            prop_assert_eq!(c.to_dense(), hist.clone());
            prop_assert_eq!(c.total(), zs.len() as u64);
            prop_assert_eq!(c.distinct(), hist.iter().filter(|&&h| h > 0).count());
            for k in 0..topics as u32 {
                prop_assert_eq!(c.get(k), hist[k as usize]);
            }
        }

        #[test]
        fn moves_keep_table_exact(
            topics in 1usize..64,
            zs in proptest::collection::vec(any::<u32>(), 1..200),
            moves in proptest::collection::vec((any::<usize>(), any::<u32>()), 0..400),
        ) {
            let mut zs: Vec<u32> = zs.into_iter().map(|z| z % topics as u32).collect();
            let mut c = SparseCounts::from_assignments(&zs, topics).unwrap();
            for (i, t) in moves {
                let i = i % zs.len();
                let t = t % topics as u32;
                c.decrement(zs[i]).unwrap();
                c.increment(t);
                zs[i] = t;
            }
            let mut hist = vec![0u32; topics];
            for &z in &zs {
                hist[z as usize] += 1;
            }
            prop_assert_eq!(c.to_dense(), hist);
            prop_assert!(c.distinct() < c.capacity());
        }
    }
}
