//! Data (DT) sub-frame sizing and slot assignment.
//!
//! The base station knows only the *estimated number* of active users, not
//! their identities, so every one of the `K` users receives a slot each
//! frame. With `u` users assigned to a slot and `active` users in total, the
//! slot succeeds exactly when one of its `u` users is active; the expected
//! fraction of successful slots per DT length is the frame efficiency that
//! the offline table search maximizes.

use rand::seq::SliceRandom;
use rand::Rng;

use crate::stats::ln_binomial;

// ======================================================================
// Slot loads and success probability
// ======================================================================

/// Per-slot user counts for one DT sub-frame; heavier slots come first so
/// the extra users wait as little as possible.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SlotLoad {
    counts: Vec<u32>,
}

impl SlotLoad {
    /// Number of users assigned to each slot, in slot order.
    pub fn counts(&self) -> &[u32] {
        &self.counts
    }

    /// Number of DT slots.
    pub fn dt_len(&self) -> usize {
        self.counts.len()
    }
}

/// Splits `users` across `dt_len` slots as evenly as possible: the first
/// `users mod dt_len` slots carry `ceil(users / dt_len)` users, the rest
/// `floor(users / dt_len)`.
///
/// # Panics
///
/// Panics unless `1 <= dt_len <= users`.
pub fn users_per_slot(users: usize, dt_len: usize) -> SlotLoad {
    assert!(
        (1..=users).contains(&dt_len),
        "dt_len {dt_len} outside 1..={users}"
    );
    let base = (users / dt_len) as u32;
    let heavy = users % dt_len;
    let counts = (0..dt_len)
        .map(|l| if l < heavy { base + 1 } else { base })
        .collect();
    SlotLoad { counts }
}

/// Probability that a slot holding `assigned` of the `users` users sees
/// exactly one transmission when `active` users are active overall:
/// `assigned * C(users - assigned, active - 1) / C(users, active)`.
///
/// # Panics
///
/// Panics unless `active <= users` and `1 <= assigned <= users`.
pub fn success_prob(users: usize, active: usize, assigned: usize) -> f64 {
    assert!(active <= users, "active {active} exceeds users {users}");
    assert!(
        (1..=users).contains(&assigned),
        "assigned {assigned} outside 1..={users}"
    );
    if active == 0 {
        return 0.0;
    }
    let log_p = (assigned as f64).ln()
        + ln_binomial((users - assigned) as u64, (active - 1) as u64)
        - ln_binomial(users as u64, active as u64);
    log_p.exp().clamp(0.0, 1.0)
}

/// Expected fraction of successful slots in a DT sub-frame of `dt_len` slots
/// with `active` users active, under the [`users_per_slot`] allocation.
pub fn frame_efficiency(users: usize, active: usize, dt_len: usize) -> f64 {
    assert!(
        (1..=users).contains(&dt_len),
        "dt_len {dt_len} outside 1..={users}"
    );
    let base = users / dt_len;
    let heavy = users % dt_len;
    let mut total = (dt_len - heavy) as f64 * success_prob(users, active, base);
    if heavy > 0 {
        total += heavy as f64 * success_prob(users, active, base + 1);
    }
    total / dt_len as f64
}

// ======================================================================
// Optimal DT length
// ======================================================================

/// Relative margin below which two efficiencies count as tied. The
/// efficiency surface has exact plateaus -- `eta` is linear in `1/dt_len`
/// wherever `floor(users/dt_len)` is constant, with slope zero whenever the
/// two adjacent per-slot success probabilities coincide (e.g. 7 users, 4
/// active: `eta = 4/7` for every length from 4 up) -- and log-space
/// evaluation ripples such plateaus by a few ulps. The margin absorbs that
/// ripple so ties resolve deterministically toward the smaller length.
const TIE_MARGIN_REL: f64 = 1e-9;

fn clearly_better(candidate: f64, best: f64) -> bool {
    candidate > best + (best * TIE_MARGIN_REL).max(1e-15)
}

/// DT length maximizing [`frame_efficiency`] by exhaustive scan over
/// `1..=users`; ties break toward the smaller length (shorter frames, lower
/// latency). `active = 0` makes every length equally useless and returns 1.
pub fn optimal_dt_len(users: usize, active: usize) -> usize {
    assert!(active <= users, "active {active} exceeds users {users}");
    let mut best_len = 1;
    let mut best_eff = frame_efficiency(users, active, 1);
    for dt_len in 2..=users {
        let eff = frame_efficiency(users, active, dt_len);
        if clearly_better(eff, best_eff) {
            best_eff = eff;
            best_len = dt_len;
        }
    }
    best_len
}

/// Accelerated equivalent of [`optimal_dt_len`]: only O(sqrt(users))
/// evaluations instead of `users`.
///
/// For a fixed `base = floor(users/dt_len)` the efficiency is linear in
/// `1/dt_len`, so on each maximal run of lengths sharing a `base` the
/// maximum sits at an endpoint; walking the runs and scoring only their
/// endpoints therefore finds the global scan optimum. A plain ternary or
/// binary search is *not* sound here because of the zero-slope plateaus
/// described at [`TIE_MARGIN_REL`]. Kept as an optional fast path and
/// validated against the scan in tests; the table build uses the scan,
/// which is already cheap for realistic `users`.
pub fn optimal_dt_len_fast(users: usize, active: usize) -> usize {
    assert!(active <= users, "active {active} exceeds users {users}");
    if active == 0 {
        return 1;
    }
    let mut best_len = 1;
    let mut best_eff = frame_efficiency(users, active, 1);
    let mut lo = 1;
    while lo <= users {
        let base = users / lo;
        let hi = users / base; // largest length with the same base
        for dt_len in [lo, hi] {
            let eff = frame_efficiency(users, active, dt_len);
            if clearly_better(eff, best_eff) {
                best_eff = eff;
                best_len = dt_len;
            }
        }
        lo = hi + 1;
    }
    best_len
}

// ======================================================================
// Offline table and per-frame schedules
// ======================================================================

/// Optimal DT length and achieved efficiency for every possible activity
/// count, computed once offline.
#[derive(Clone, Debug, PartialEq)]
pub struct ScheduleTable {
    users: usize,
    dt_len: Vec<usize>,
    efficiency: Vec<f64>,
}

impl ScheduleTable {
    /// Builds the table for `users` via the exhaustive scan.
    pub fn build(users: usize) -> Self {
        assert!(users >= 1, "need at least one user");
        let mut dt_len = Vec::with_capacity(users + 1);
        let mut efficiency = Vec::with_capacity(users + 1);
        for active in 0..=users {
            let best = optimal_dt_len(users, active);
            dt_len.push(best);
            efficiency.push(frame_efficiency(users, active, best));
        }
        ScheduleTable {
            users,
            dt_len,
            efficiency,
        }
    }

    /// Number of users the table was built for.
    pub fn users(&self) -> usize {
        self.users
    }

    /// Optimal DT length for an estimated activity count.
    pub fn dt_len(&self, estimated: usize) -> usize {
        self.dt_len[estimated]
    }

    /// Efficiency achieved at the optimal DT length.
    pub fn efficiency(&self, estimated: usize) -> f64 {
        self.efficiency[estimated]
    }
}

/// Slot index (0-based, `0..dt_len`) for every user in one frame.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct FrameSchedule {
    slot_of_user: Vec<u16>,
    dt_len: usize,
}

impl FrameSchedule {
    /// Slot assigned to `user`.
    pub fn slot_of(&self, user: usize) -> usize {
        self.slot_of_user[user] as usize
    }

    /// DT sub-frame length in slots.
    pub fn dt_len(&self) -> usize {
        self.dt_len
    }

    /// Per-user slot indices.
    pub fn slots(&self) -> &[u16] {
        &self.slot_of_user
    }
}

/// Deals all `K` users into the slots of a fresh frame: the DT length comes
/// from the table at the estimated count, and a uniformly random permutation
/// realizes the per-slot multiplicities. Every user gets a slot whether or
/// not it is active, since the base station does not know identities.
pub fn build_schedule<R: Rng + ?Sized>(
    estimated: usize,
    table: &ScheduleTable,
    rng: &mut R,
) -> FrameSchedule {
    let dt_len = table.dt_len(estimated);
    let load = users_per_slot(table.users(), dt_len);
    let mut slot_of_user = Vec::with_capacity(table.users());
    for (slot, &count) in load.counts().iter().enumerate() {
        for _ in 0..count {
            slot_of_user.push(slot as u16);
        }
    }
    slot_of_user.shuffle(rng);
    FrameSchedule {
        slot_of_user,
        dt_len,
    }
}

// ======================================================================
// Tests
// ======================================================================
