//! The shared best-so-far cell.

use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Mutex;

use crate::series::SeriesId;

/// Best-so-far answer shared by all workers of one search: the smallest
/// squared distance seen plus the id that produced it.
///
/// Updates are compare-and-lower under a lock so the `(distance, id)` pair
/// stays consistent; reads for pruning go through a lock-free mirror of the
/// distance. The mirror is written after the pair, so a racing reader can
/// only ever observe a stale, *larger* bound, which prunes less and never
/// breaks exactness. The value is non-increasing over any execution.
pub struct SharedBsf {
    mirror: AtomicU64,
    state: Mutex<(f64, SeriesId)>,
}

impl SharedBsf {
    pub fn new(dist_sq: f64, id: SeriesId) -> Self {
        Self {
            mirror: AtomicU64::new(dist_sq.to_bits()),
            state: Mutex::new((dist_sq, id)),
        }
    }

    pub fn unset() -> Self {
        Self::new(f64::INFINITY, SeriesId::MAX)
    }

    /// Current squared bound. May lag the committed value by at most one
    /// in-flight update, and then only upward.
    #[inline]
    pub fn load_sq(&self) -> f64 {
        f64::from_bits(self.mirror.load(Ordering::Acquire))
    }

    /// Compare-and-lower. Accepts a strictly smaller distance, or an equal
    /// distance carried by a smaller id. Returns whether the state changed.
    pub fn update(&self, dist_sq: f64, id: SeriesId) -> bool {
        let mut state = self.state.lock().unwrap();
        let (cur, cur_id) = *state;
        if dist_sq < cur || (dist_sq == cur && id < cur_id) {
            *state = (dist_sq, id);
            self.mirror.store(dist_sq.to_bits(), Ordering::Release);
            true
        } else {
            false
        }
    }

    /// The committed `(squared distance, id)` pair.
    pub fn get(&self) -> (f64, SeriesId) {
        *self.state.lock().unwrap()
    }
}
