//! Process-wide diagnostic counters for numerical guard events.
//!
//! Counters only ever increase; callers interested in a particular operation
//! should compare snapshots taken before and after it.

use std::sync::atomic::{AtomicU64, Ordering};

#[derive(Debug, Default)]
pub struct Counters {
    logit_clamps: AtomicU64,
    clr_exp_clamps: AtomicU64,
    em_ridge_events: AtomicU64,
    warp_optimizer_fallbacks: AtomicU64,
    component_caps: AtomicU64,
    excluded_weight_candidates: AtomicU64,
    eigenvalue_floor_events: AtomicU64,
}

/// A point-in-time copy of all counters.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Snapshot {
    pub logit_clamps: u64,
    pub clr_exp_clamps: u64,
    pub em_ridge_events: u64,
    pub warp_optimizer_fallbacks: u64,
    pub component_caps: u64,
    pub excluded_weight_candidates: u64,
    pub eigenvalue_floor_events: u64,
}

impl Counters {
    pub fn snapshot(&self) -> Snapshot {
        Snapshot {
            logit_clamps: self.logit_clamps.load(Ordering::Relaxed),
            clr_exp_clamps: self.clr_exp_clamps.load(Ordering::Relaxed),
            em_ridge_events: self.em_ridge_events.load(Ordering::Relaxed),
            warp_optimizer_fallbacks: self.warp_optimizer_fallbacks.load(Ordering::Relaxed),
            component_caps: self.component_caps.load(Ordering::Relaxed),
            excluded_weight_candidates: self.excluded_weight_candidates.load(Ordering::Relaxed),
            eigenvalue_floor_events: self.eigenvalue_floor_events.load(Ordering::Relaxed),
        }
    }

    pub(crate) fn count_logit_clamps(&self, n: u64) {
        if n > 0 {
            self.logit_clamps.fetch_add(n, Ordering::Relaxed);
        }
    }

    pub(crate) fn count_clr_exp_clamps(&self, n: u64) {
        if n > 0 {
            self.clr_exp_clamps.fetch_add(n, Ordering::Relaxed);
        }
    }

    pub(crate) fn count_em_ridge_event(&self) {
        self.em_ridge_events.fetch_add(1, Ordering::Relaxed);
    }

    pub(crate) fn count_warp_optimizer_fallback(&self) {
        self.warp_optimizer_fallbacks.fetch_add(1, Ordering::Relaxed);
    }

    pub(crate) fn count_component_cap(&self) {
        self.component_caps.fetch_add(1, Ordering::Relaxed);
    }

    pub(crate) fn count_excluded_weight_candidate(&self) {
        self.excluded_weight_candidates.fetch_add(1, Ordering::Relaxed);
    }

    pub(crate) fn count_eigenvalue_floor(&self) {
        self.eigenvalue_floor_events.fetch_add(1, Ordering::Relaxed);
    }
}

/// Global counter instance.
pub fn counters() -> &'static Counters {
    static INSTANCE: std::sync::OnceLock<Counters> = std::sync::OnceLock::new();
    INSTANCE.get_or_init(Counters::default)
}
