//! Process-wide switch for outbound network calls, plus a counter of remote
//! requests actually sent. Offline runs deny the network and check the
//! counter stays at zero.

use std::sync::atomic::{AtomicBool, AtomicU64, Ordering};

static ALLOWED: AtomicBool = AtomicBool::new(true);
static SENT: AtomicU64 = AtomicU64::new(0);

pub fn deny_network() {
    ALLOWED.store(false, Ordering::SeqCst);
}

pub fn allow_network() {
    ALLOWED.store(true, Ordering::SeqCst);
}

pub fn network_allowed() -> bool {
    ALLOWED.load(Ordering::SeqCst)
}

/// Remote requests sent since process start.
pub fn remote_requests() -> u64 {
    SENT.load(Ordering::SeqCst)
}

pub(crate) fn record_request() {
    SENT.fetch_add(1, Ordering::SeqCst);
}
