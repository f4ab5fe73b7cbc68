use thiserror::Error;

#[derive(Debug, Error, PartialEq, Eq)]
#[error("topic totals sum to {got}, corpus has {expected} tokens")]
pub struct ConservationError {
    pub expected: u64,
    pub got: u64,
}

/// Global topic counts `c_k`.
///
/// A phase reads the snapshot published at the previous phase boundary and
/// never sees the accumulator being filled during the phase itself.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct GlobalState {
    snapshot: Vec<u64>,
    token_total: u64,
}

impl GlobalState {
    pub fn new(topic_counts: Vec<u64>, token_total: u64) -> Result<Self, ConservationError> {
        check(&topic_counts, token_total)?;
        Ok(Self {
            snapshot: topic_counts,
            token_total,
        })
    }

    pub fn snapshot(&self) -> &[u64] {
        &self.snapshot
    }

    pub fn topics(&self) -> usize {
        self.snapshot.len()
    }

    pub fn token_total(&self) -> u64 {
        self.token_total
    }

    /// Replaces the snapshot with a phase's accumulated counts.
    pub fn publish(&mut self, accumulated: Vec<u64>) -> Result<(), ConservationError> {
        check(&accumulated, self.token_total)?;
        self.snapshot = accumulated;
        Ok(())
    }
}

fn check(counts: &[u64], expected: u64) -> Result<(), ConservationError> {
    let got = counts.iter().sum();
    if got != expected {
        return Err(ConservationError { expected, got });
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn publish_checks_conservation() {
        let mut g = GlobalState::new(vec![2, 3], 5).unwrap();
        assert_eq!(g.publish(vec![1, 1]), Err(ConservationError { expected: 5, got: 2 }));
        assert_eq!(g.snapshot(), &[2, 3]);
        g.publish(vec![5, 0]).unwrap();
        assert_eq!(g.snapshot(), &[5, 0]);
        assert!(GlobalState::new(vec![1], 2).is_err());
    }
}
