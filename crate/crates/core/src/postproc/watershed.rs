//! 4-connected component labelling and marker-controlled watershed.

use std::cmp::{Ordering, Reverse};
use std::collections::{BinaryHeap, VecDeque};

#[inline]
fn neighbours(p: usize, h: usize, w: usize) -> impl Iterator<Item = usize> {
    let (y, x) = (p / w, p % w);
    let up = (y > 0).then(|| p - w);
    let left = (x > 0).then(|| p - 1);
    let right = (x + 1 < w).then(|| p + 1);
    let down = (y + 1 < h).then(|| p + w);
    [up, left, right, down].into_iter().flatten()
}

/// Labels 4-connected components of `mask` as `1..=K` in row-major order of
/// their first pixel. Returns the labels and `K`.
pub fn connected_components(mask: &[bool], h: usize, w: usize) -> (Vec<u32>, u32) {
    assert_eq!(mask.len(), h * w);
    let mut labels = vec![0u32; h * w];
    let mut next = 0u32;
    let mut queue = VecDeque::new();
    for start in 0..h * w {
        if !mask[start] || labels[start] != 0 {
            continue;
        }
        next += 1;
        labels[start] = next;
        queue.push_back(start);
        while let Some(p) = queue.pop_front() {
            for q in neighbours(p, h, w) {
                if mask[q] && labels[q] == 0 {
                    labels[q] = next;
                    queue.push_back(q);
                }
            }
        }
    }
    (labels, next)
}

#[derive(Clone, Copy, PartialEq)]
struct Key {
    level: f64,
    index: usize,
}

impl Eq for Key {}

impl Ord for Key {
    fn cmp(&self, other: &Self) -> Ordering {
        self.level.total_cmp(&other.level).then(self.index.cmp(&other.index))
    }
}

impl PartialOrd for Key {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// Floods `landscape` from `markers` (nonzero = seed label) inside `mask`.
///
/// Pixels are processed in increasing `(level, row-major index)` order; each
/// processed pixel hands its label to unlabelled 4-neighbours in the mask.
/// Pixels outside the mask stay 0, and so do mask pixels that no marker can
/// reach.
pub fn watershed(landscape: &[f64], markers: &[u32], mask: &[bool], h: usize, w: usize) -> Vec<u32> {
    assert_eq!(landscape.len(), h * w);
    assert_eq!(markers.len(), h * w);
    assert_eq!(mask.len(), h * w);
    let mut labels: Vec<u32> = markers
        .iter()
        .zip(mask)
        .map(|(&m, &inside)| if inside { m } else { 0 })
        .collect();
    let mut heap = BinaryHeap::new();
    for (p, &l) in labels.iter().enumerate() {
        if l != 0 {
            heap.push(Reverse(Key {
                level: landscape[p],
                index: p,
            }));
        }
    }
    while let Some(Reverse(Key { index: p, .. })) = heap.pop() {
        let l = labels[p];
        for q in neighbours(p, h, w) {
            if mask[q] && labels[q] == 0 {
                labels[q] = l;
                heap.push(Reverse(Key {
                    level: landscape[q],
                    index: q,
                }));
            }
        }
    }
    labels
}
