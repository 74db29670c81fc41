//! Sender-side reliability over the lossy channel: timeout-driven resends
//! with a retry cap, at-least-once semantics. The receiver deduplicates.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::domain::Timestamp;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct RetransmitPolicy {
    pub timeout_ms: u64,
    pub max_retries: u32,
}

impl Default for RetransmitPolicy {
    fn default() -> Self {
        RetransmitPolicy { timeout_ms: 5_000, max_retries: 5 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum LinkStatus {
    Ok,
    LinkDegraded,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TimeoutAction {
    /// The seq was acked (or dropped) before its timer fired.
    Settled,
    /// Send the identical payload again; `attempt` counts resends from 1.
    Resend { attempt: u32 },
    /// Retries exhausted; the seq is abandoned and the link is degraded.
    Exhausted { newly_degraded: bool },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct AckOutcome {
    pub was_pending: bool,
    pub restored: bool,
}

/// Per-bin sender bookkeeping: resends already made for each unacked seq.
#[derive(Debug, Clone, PartialEq)]
pub struct SenderLink {
    policy: RetransmitPolicy,
    unacked: BTreeMap<u64, u32>,
    status: LinkStatus,
}

impl SenderLink {
    pub fn new(policy: RetransmitPolicy) -> Self {
        SenderLink { policy, unacked: BTreeMap::new(), status: LinkStatus::Ok }
    }

    pub fn status(&self) -> LinkStatus {
        self.status
    }

    pub fn policy(&self) -> RetransmitPolicy {
        self.policy
    }

    pub fn unacked(&self) -> impl Iterator<Item = u64> + '_ {
        self.unacked.keys().copied()
    }

    /// Registers a first transmission; the caller arms a timer for
    /// `now + timeout_ms`.
    pub fn on_send(&mut self, seq: u64) {
        self.unacked.entry(seq).or_insert(0);
    }

    pub fn on_ack(&mut self, seq: u64) -> AckOutcome {
        let was_pending = self.unacked.remove(&seq).is_some();
        let restored = self.status == LinkStatus::LinkDegraded;
        self.status = LinkStatus::Ok;
        AckOutcome { was_pending, restored }
    }

    pub fn on_timeout(&mut self, seq: u64) -> TimeoutAction {
        let Some(retries) = self.unacked.get_mut(&seq) else {
            return TimeoutAction::Settled;
        };
        if *retries < self.policy.max_retries {
            *retries += 1;
            TimeoutAction::Resend { attempt: *retries }
        } else {
            self.unacked.remove(&seq);
            let newly_degraded = self.status == LinkStatus::Ok;
            self.status = LinkStatus::LinkDegraded;
            TimeoutAction::Exhausted { newly_degraded }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ScheduledResend {
    pub seq: u64,
    pub at: Timestamp,
    pub attempt: u32,
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct RetransmitSchedule {
    pub resends: Vec<ScheduledResend>,
    /// When the last unacked seq gives up, if any do.
    pub degraded_at: Option<Timestamp>,
}

/// The resends that will happen if no ack ever arrives for the given
/// `seq -> first send time` set. Each seq is sent `1 + max_retries` times in
/// total, `timeout_ms` apart.
pub fn sender_retransmit(unacked: &BTreeMap<u64, Timestamp>, policy: RetransmitPolicy) -> RetransmitSchedule {
    assert!(policy.timeout_ms > 0, "timeout must be positive");
    let mut schedule = RetransmitSchedule::default();
    for (&seq, &sent_at) in unacked {
        for attempt in 1..=policy.max_retries {
            schedule.resends.push(ScheduledResend { seq, at: sent_at + attempt as u64 * policy.timeout_ms, attempt });
        }
        let gives_up = sent_at + (policy.max_retries as u64 + 1) * policy.timeout_ms;
        schedule.degraded_at = Some(schedule.degraded_at.map_or(gives_up, |t| t.min(gives_up)));
    }
    schedule.resends.sort_by_key(|r| (r.at, r.seq));
    schedule
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ack_before_timeout_means_no_resend() {
        let mut link = SenderLink::new(RetransmitPolicy::default());
        link.on_send(1);
        assert!(link.on_ack(1).was_pending);
        assert_eq!(link.on_timeout(1), TimeoutAction::Settled);
    }

    #[test]
    fn no_acks_gives_four_transmissions_with_three_retries() {
        let mut link = SenderLink::new(RetransmitPolicy { timeout_ms: 1_000, max_retries: 3 });
        link.on_send(7);
        let mut transmissions = 1;
        loop {
            match link.on_timeout(7) {
                TimeoutAction::Resend { .. } => transmissions += 1,
                TimeoutAction::Exhausted { newly_degraded } => {
                    assert!(newly_degraded);
                    break;
                }
                TimeoutAction::Settled => unreachable!(),
            }
        }
        assert_eq!(transmissions, 4);
        assert_eq!(link.status(), LinkStatus::LinkDegraded);
        // continues queueing new messages while degraded
        link.on_send(8);
        assert_eq!(link.unacked().collect::<Vec<_>>(), vec![8]);
        let out = link.on_ack(8);
        assert!(out.restored);
        assert_eq!(link.status(), LinkStatus::Ok);
    }

    #[test]
    fn schedule_matches_policy() {
        let policy = RetransmitPolicy { timeout_ms: 5_000, max_retries: 3 };
        let unacked = BTreeMap::from([(1, Timestamp(0)), (2, Timestamp(1_000))]);
        let s = sender_retransmit(&unacked, policy);
        assert_eq!(s.resends.len(), 6);
        let seq1: Vec<u64> = s.resends.iter().filter(|r| r.seq == 1).map(|r| r.at.0).collect();
        assert_eq!(seq1, vec![5_000, 10_000, 15_000]);
        assert_eq!(s.degraded_at, Some(Timestamp(20_000)));
        assert!(sender_retransmit(&BTreeMap::new(), policy).resends.is_empty());
    }
}
