use std::collections::VecDeque;

use super::divergence::js_raw;
use crate::scalar::Scalar;
use crate::signal::SignalFrame;

/// A stored frame and the round it was inserted in.
#[derive(Debug, Clone, PartialEq)]
pub struct QueueEntry<T> {
    pub frame: SignalFrame<T>,
    pub round: u64,
}

/// Per-client FIFO replay store bounded by `capacity` samples, evicting so
/// that the stored label histogram moves toward uniform.
#[derive(Debug, Clone, PartialEq)]
pub struct ReplayQueue<T> {
    capacity: usize,
    classes: usize,
    entries: VecDeque<QueueEntry<T>>,
}

impl<T: Scalar> ReplayQueue<T> {
    pub fn new(capacity: usize, classes: usize) -> Self {
        Self {
            capacity,
            classes,
            entries: VecDeque::new(),
        }
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn entries(&self) -> impl Iterator<Item = &QueueEntry<T>> {
        self.entries.iter()
    }

    /// Appends `frames` in order, tagged with `round`. Never evicts.
    pub fn insert(&mut self, frames: &[SignalFrame<T>], round: u64) {
        self.entries.extend(frames.iter().map(|f| QueueEntry {
            frame: f.clone(),
            round,
        }));
    }

    pub fn label_counts(&self) -> Vec<usize> {
        let mut counts = vec![0; self.classes];
        for e in &self.entries {
            counts[e.frame.label as usize] += 1;
        }
        counts
    }

    /// JS divergence between the stored labels and uniform, `None` when empty.
    pub fn js_to_uniform(&self) -> Option<f64> {
        js_of_counts(&self.label_counts())
    }

    /// Removes frames until the queue fits its capacity, always taking the
    /// oldest frame of the most frequent class (lowest ordinal on ties).
    /// Removal also continues past the capacity bound while the label
    /// histogram is further from uniform than before eviction began, so an
    /// eviction never increases the JS divergence to uniform. Returns the
    /// removed frames in removal order.
    pub fn evict(&mut self) -> Vec<SignalFrame<T>> {
        let mut counts = self.label_counts();
        let pre = js_of_counts(&counts);
        let mut removed = Vec::new();
        loop {
            if self.entries.is_empty() {
                break;
            }
            let over = self.entries.len() > self.capacity;
            let worse = !removed.is_empty()
                && matches!((js_of_counts(&counts), pre), (Some(now), Some(p)) if now > p);
            if !over && !worse {
                break;
            }
            let class = argmax_first(&counts);
            let pos = self
                .entries
                .iter()
                .position(|e| e.frame.label as usize == class)
                .expect("class with positive count is stored");
            let e = self.entries.remove(pos).expect("position in range");
            counts[class] -= 1;
            removed.push(e.frame);
        }
        removed
    }

    /// Snapshot of every stored frame in FIFO order.
    pub fn contents(&self) -> Vec<SignalFrame<T>> {
        self.entries.iter().map(|e| e.frame.clone()).collect()
    }

    /// Stored frames inserted strictly before `round`.
    pub fn contents_before(&self, round: u64) -> Vec<SignalFrame<T>> {
        self.entries
            .iter()
            .filter(|e| e.round < round)
            .map(|e| e.frame.clone())
            .collect()
    }
}

fn argmax_first(counts: &[usize]) -> usize {
    let mut best = 0;
    for (i, &c) in counts.iter().enumerate() {
        if c > counts[best] {
            best = i;
        }
    }
    best
}

fn js_of_counts(counts: &[usize]) -> Option<f64> {
    let total: usize = counts.iter().sum();
    if total == 0 {
        return None;
    }
    let p: Vec<f64> = counts.iter().map(|&c| c as f64 / total as f64).collect();
    let u = vec![1.0 / counts.len() as f64; counts.len()];
    Some(js_raw(&p, &u))
}
