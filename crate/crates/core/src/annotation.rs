//! Triple-check annotation workflow as an event-sourced state machine.
//!
//! Commands ([`Ledger::claim_next`], [`Ledger::submit`], [`Ledger::tick`])
//! validate against the current state and emit [`Event`]s; the state is only
//! ever changed by [`LedgerState::apply`], so folding the emitted log from an
//! empty state reproduces it exactly. Time is supplied by the caller in
//! milliseconds.
//!
//! A pair is finalized once a primary annotator and two verifiers, all
//! distinct, give the same non-skip decision. Verifiers annotate blind. Any
//! skip discards the pair as skipped; a verifier disagreeing with the primary
//! discards it as contested.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::benchmark::{LabelSource, PairLabel, PointPair, Scenario};

pub const DEFAULT_LEASE_MS: u64 = 10 * 60 * 1000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Decision {
    FirstCloser,
    SecondCloser,
    Skip,
}

impl Decision {
    fn label(self) -> Option<PairLabel> {
        match self {
            Decision::FirstCloser => Some(PairLabel::FirstCloser),
            Decision::SecondCloser => Some(PairLabel::SecondCloser),
            Decision::Skip => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Role {
    Primary,
    Verifier,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DiscardReason {
    Skipped,
    Contested,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "status")]
pub enum PairStatus {
    Queued,
    Claimed {
        annotator: String,
        lease_expiry: u64,
        role: Role,
    },
    AwaitingVerification,
    Finalized {
        label: PairLabel,
    },
    Discarded {
        reason: DiscardReason,
    },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AnnotationRecord {
    pub pair_id: String,
    pub annotator_id: String,
    pub decision: Decision,
    pub role: Role,
    pub timestamp: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PairEntry {
    pub pair: PointPair,
    pub status: PairStatus,
    pub records: Vec<AnnotationRecord>,
}

impl PairEntry {
    fn has_record_from(&self, annotator: &str) -> bool {
        self.records.iter().any(|r| r.annotator_id == annotator)
    }

    fn primary_decision(&self) -> Option<Decision> {
        self.records
            .iter()
            .find(|r| r.role == Role::Primary)
            .map(|r| r.decision)
    }

    fn verifier_count(&self) -> usize {
        self.records.iter().filter(|r| r.role == Role::Verifier).count()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "event")]
pub enum Event {
    AnnotatorRegistered {
        annotator_id: String,
    },
    Enqueued {
        pair: PointPair,
    },
    Claimed {
        pair_id: String,
        annotator_id: String,
        role: Role,
        at: u64,
        lease_expiry: u64,
    },
    LeaseExpired {
        pair_id: String,
        annotator_id: String,
        at: u64,
    },
    Submitted {
        record: AnnotationRecord,
    },
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum AnnotationError {
    #[error("unknown annotator `{0}`")]
    UnknownAnnotator(String),
    #[error("unknown pair `{0}`")]
    UnknownPair(String),
    #[error("lease on pair `{pair_id}` is not held by `{annotator_id}` (expired or reassigned)")]
    LeaseExpired { pair_id: String, annotator_id: String },
    #[error("`{annotator_id}` already annotated pair `{pair_id}`")]
    DuplicateSubmission { pair_id: String, annotator_id: String },
    #[error("pair `{0}` is already queued")]
    DuplicatePair(String),
    #[error("event log is inconsistent at event {index}: {reason}")]
    CorruptLog { index: u64, reason: &'static str },
}

impl AnnotationError {
    /// Stable machine-readable code.
    pub fn code(&self) -> &'static str {
        match self {
            AnnotationError::UnknownAnnotator(_) => "unknown_annotator",
            AnnotationError::UnknownPair(_) => "unknown_pair",
            AnnotationError::LeaseExpired { .. } => "lease_expired",
            AnnotationError::DuplicateSubmission { .. } => "duplicate_submission",
            AnnotationError::DuplicatePair(_) => "duplicate_pair",
            AnnotationError::CorruptLog { .. } => "corrupt_log",
        }
    }
}

/// Pure data folded from the event log.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct LedgerState {
    pub annotators: BTreeSet<String>,
    /// Pair ids in enqueue order.
    pub order: Vec<String>,
    pub pairs: BTreeMap<String, PairEntry>,
    pub events_applied: u64,
}

impl LedgerState {
    pub fn replay<'a>(events: impl IntoIterator<Item = &'a Event>) -> Result<Self, AnnotationError> {
        let mut state = LedgerState::default();
        for e in events {
            state.apply(e)?;
        }
        Ok(state)
    }

    pub fn apply(&mut self, event: &Event) -> Result<(), AnnotationError> {
        let index = self.events_applied;
        let corrupt = |reason| AnnotationError::CorruptLog { index, reason };
        match event {
            Event::AnnotatorRegistered { annotator_id } => {
                self.annotators.insert(annotator_id.clone());
            }
            Event::Enqueued { pair } => {
                if self.pairs.contains_key(&pair.pair_id) {
                    return Err(corrupt("pair enqueued twice"));
                }
                self.order.push(pair.pair_id.clone());
                self.pairs.insert(
                    pair.pair_id.clone(),
                    PairEntry {
                        pair: pair.clone(),
                        status: PairStatus::Queued,
                        records: Vec::new(),
                    },
                );
            }
            Event::Claimed {
                pair_id,
                annotator_id,
                role,
                lease_expiry,
                ..
            } => {
                let entry = self.pairs.get_mut(pair_id).ok_or(corrupt("claim of unknown pair"))?;
                let expected = match entry.status {
                    PairStatus::Queued => Role::Primary,
                    PairStatus::AwaitingVerification => Role::Verifier,
                    _ => return Err(corrupt("claim of unavailable pair")),
                };
                if expected != *role || entry.has_record_from(annotator_id) {
                    return Err(corrupt("claim with wrong role"));
                }
                entry.status = PairStatus::Claimed {
                    annotator: annotator_id.clone(),
                    lease_expiry: *lease_expiry,
                    role: *role,
                };
            }
            Event::LeaseExpired {
                pair_id, annotator_id, ..
            } => {
                let entry = self.pairs.get_mut(pair_id).ok_or(corrupt("expiry of unknown pair"))?;
                match &entry.status {
                    PairStatus::Claimed { annotator, role, .. } if annotator == annotator_id => {
                        entry.status = match role {
                            Role::Primary => PairStatus::Queued,
                            Role::Verifier => PairStatus::AwaitingVerification,
                        };
                    }
                    _ => return Err(corrupt("expiry of a lease that is not held")),
                }
            }
            Event::Submitted { record } => {
                let entry = self
                    .pairs
                    .get_mut(&record.pair_id)
                    .ok_or(corrupt("submission for unknown pair"))?;
                match &entry.status {
                    PairStatus::Claimed { annotator, role, .. }
                        if *annotator == record.annotator_id && *role == record.role => {}
                    _ => return Err(corrupt("submission without lease")),
                }
                let primary = entry.primary_decision();
                let verifiers = entry.verifier_count();
                entry.records.push(record.clone());
                entry.status = match (record.role, record.decision.label()) {
                    (_, None) => PairStatus::Discarded {
                        reason: DiscardReason::Skipped,
                    },
                    (Role::Primary, Some(_)) => PairStatus::AwaitingVerification,
                    (Role::Verifier, Some(label)) => {
                        if primary != Some(record.decision) {
                            PairStatus::Discarded {
                                reason: DiscardReason::Contested,
                            }
                        } else if verifiers + 1 >= 2 {
                            PairStatus::Finalized { label }
                        } else {
                            PairStatus::AwaitingVerification
                        }
                    }
                };
            }
        }
        self.events_applied += 1;
        Ok(())
    }

    pub fn entry(&self, pair_id: &str) -> Option<&PairEntry> {
        self.pairs.get(pair_id)
    }

    pub fn entries(&self) -> impl Iterator<Item = &PairEntry> {
        self.order.iter().map(move |id| &self.pairs[id])
    }

    pub fn progress(&self) -> Progress {
        let mut total = StatusCounts::default();
        let mut by_scenario: BTreeMap<Scenario, StatusCounts> = BTreeMap::new();
        for entry in self.pairs.values() {
            total.add(&entry.status);
            by_scenario.entry(entry.pair.scenario).or_default().add(&entry.status);
        }
        Progress {
            total,
            by_scenario: by_scenario
                .into_iter()
                .map(|(scenario, counts)| ScenarioProgress { scenario, counts })
                .collect(),
        }
    }

    /// Writes finalized and discarded outcomes back into benchmark pairs.
    /// Finalized pairs take their label; discarded pairs become `Skipped`.
    /// Both are sourced from human consensus. Returns how many pairs changed.
    pub fn export_labels(&self, pairs: &mut [PointPair]) -> usize {
        let mut changed = 0;
        for p in pairs.iter_mut() {
            let Some(entry) = self.pairs.get(&p.pair_id) else {
                continue;
            };
            let label = match entry.status {
                PairStatus::Finalized { label } => label,
                PairStatus::Discarded { .. } => PairLabel::Skipped,
                _ => continue,
            };
            p.label = label;
            p.label_source = LabelSource::HumanConsensus;
            changed += 1;
        }
        changed
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct StatusCounts {
    pub queued: usize,
    pub claimed: usize,
    pub awaiting_verification: usize,
    pub finalized: usize,
    pub discarded_skipped: usize,
    pub discarded_contested: usize,
}

impl StatusCounts {
    fn add(&mut self, status: &PairStatus) {
        match status {
            PairStatus::Queued => self.queued += 1,
            PairStatus::Claimed { .. } => self.claimed += 1,
            PairStatus::AwaitingVerification => self.awaiting_verification += 1,
            PairStatus::Finalized { .. } => self.finalized += 1,
            PairStatus::Discarded {
                reason: DiscardReason::Skipped,
            } => self.discarded_skipped += 1,
            PairStatus::Discarded {
                reason: DiscardReason::Contested,
            } => self.discarded_contested += 1,
        }
    }

    pub fn total(&self) -> usize {
        self.queued
            + self.claimed
            + self.awaiting_verification
            + self.finalized
            + self.discarded_skipped
            + self.discarded_contested
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScenarioProgress {
    pub scenario: Scenario,
    #[serde(flatten)]
    pub counts: StatusCounts,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Progress {
    pub total: StatusCounts,
    pub by_scenario: Vec<ScenarioProgress>,
}

/// A pair handed to an annotator.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Assignment {
    pub pair: PointPair,
    pub role: Role,
    pub lease_expiry: u64,
}

/// State plus the command layer. Every applied event is also kept in an
/// outbox until [`Ledger::drain_events`] hands it to the persistence layer.
#[derive(Debug, Clone)]
pub struct Ledger {
    state: LedgerState,
    outbox: Vec<Event>,
    lease_ms: u64,
}

impl Ledger {
    pub fn new(lease_ms: u64) -> Self {
        Self::from_state(LedgerState::default(), lease_ms)
    }

    pub fn from_state(state: LedgerState, lease_ms: u64) -> Self {
        Self {
            state,
            outbox: Vec::new(),
            lease_ms,
        }
    }

    pub fn state(&self) -> &LedgerState {
        &self.state
    }

    pub fn lease_ms(&self) -> u64 {
        self.lease_ms
    }

    pub fn drain_events(&mut self) -> Vec<Event> {
        core::mem::take(&mut self.outbox)
    }

    fn emit(&mut self, event: Event) -> Result<(), AnnotationError> {
        self.state.apply(&event)?;
        self.outbox.push(event);
        Ok(())
    }

    pub fn register(&mut self, annotator_id: &str) -> Result<(), AnnotationError> {
        if self.state.annotators.contains(annotator_id) {
            return Ok(());
        }
        self.emit(Event::AnnotatorRegistered {
            annotator_id: String::from(annotator_id),
        })
    }

    pub fn enqueue(&mut self, pair: PointPair) -> Result<(), AnnotationError> {
        if self.state.pairs.contains_key(&pair.pair_id) {
            return Err(AnnotationError::DuplicatePair(pair.pair_id));
        }
        self.emit(Event::Enqueued { pair })
    }

    /// Returns every lease whose expiry is at or before `now` to its prior status.
    pub fn tick(&mut self, now: u64) -> Result<usize, AnnotationError> {
        let expired: Vec<(String, String)> = self
            .state
            .entries()
            .filter_map(|e| match &e.status {
                PairStatus::Claimed {
                    annotator,
                    lease_expiry,
                    ..
                } if *lease_expiry <= now => Some((e.pair.pair_id.clone(), annotator.clone())),
                _ => None,
            })
            .collect();
        let n = expired.len();
        for (pair_id, annotator_id) in expired {
            self.emit(Event::LeaseExpired {
                pair_id,
                annotator_id,
                at: now,
            })?;
        }
        Ok(n)
    }

    fn check_annotator(&self, annotator_id: &str) -> Result<(), AnnotationError> {
        if self.state.annotators.contains(annotator_id) {
            Ok(())
        } else {
            Err(AnnotationError::UnknownAnnotator(String::from(annotator_id)))
        }
    }

    /// Hands `annotator_id` the first available pair in queue order: a queued
    /// pair as primary, or a pair awaiting verification that they have not
    /// touched. An annotator already holding a live lease gets that pair back.
    pub fn claim_next(&mut self, annotator_id: &str, now: u64) -> Result<Option<Assignment>, AnnotationError> {
        self.check_annotator(annotator_id)?;
        self.tick(now)?;
        for entry in self.state.entries() {
            if let PairStatus::Claimed {
                annotator,
                lease_expiry,
                role,
            } = &entry.status
            {
                if annotator == annotator_id {
                    return Ok(Some(Assignment {
                        pair: entry.pair.clone(),
                        role: *role,
                        lease_expiry: *lease_expiry,
                    }));
                }
            }
        }
        let pick = self.state.entries().find_map(|e| match e.status {
            PairStatus::Queued => Some((e.pair.pair_id.clone(), Role::Primary)),
            PairStatus::AwaitingVerification if !e.has_record_from(annotator_id) => {
                Some((e.pair.pair_id.clone(), Role::Verifier))
            }
            _ => None,
        });
        let Some((pair_id, role)) = pick else {
            return Ok(None);
        };
        let lease_expiry = now.saturating_add(self.lease_ms);
        self.emit(Event::Claimed {
            pair_id: pair_id.clone(),
            annotator_id: String::from(annotator_id),
            role,
            at: now,
            lease_expiry,
        })?;
        Ok(Some(Assignment {
            pair: self.state.pairs[&pair_id].pair.clone(),
            role,
            lease_expiry,
        }))
    }

    /// Records a decision from the current lease holder.
    pub fn submit(
        &mut self,
        annotator_id: &str,
        pair_id: &str,
        decision: Decision,
        now: u64,
    ) -> Result<PairStatus, AnnotationError> {
        self.check_annotator(annotator_id)?;
        let entry = self
            .state
            .pairs
            .get(pair_id)
            .ok_or_else(|| AnnotationError::UnknownPair(String::from(pair_id)))?;
        if entry.has_record_from(annotator_id) {
            return Err(AnnotationError::DuplicateSubmission {
                pair_id: String::from(pair_id),
                annotator_id: String::from(annotator_id),
            });
        }
        self.tick(now)?;
        let entry = &self.state.pairs[pair_id];
        let role = match &entry.status {
            PairStatus::Claimed { annotator, role, .. } if annotator == annotator_id => *role,
            _ => {
                return Err(AnnotationError::LeaseExpired {
                    pair_id: String::from(pair_id),
                    annotator_id: String::from(annotator_id),
                })
            }
        };
        self.emit(Event::Submitted {
            record: AnnotationRecord {
                pair_id: String::from(pair_id),
                annotator_id: String::from(annotator_id),
                decision,
                role,
                timestamp: now,
            },
        })?;
        Ok(self.state.pairs[pair_id].status.clone())
    }

    pub fn progress(&self) -> Progress {
        self.state.progress()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::benchmark::{Origin, Pixel};
    use alloc::format;
    use alloc::vec;

    fn pair(id: &str) -> PointPair {
        PointPair {
            pair_id: id.into(),
            image_id: "img".into(),
            p1: Pixel::new(0, 0),
            p2: Pixel::new(1, 1),
            scenario: Scenario::Outdoor,
            origin: Origin::AutoSampled,
            label: PairLabel::Unlabeled,
            label_source: LabelSource::None,
        }
    }

    fn ledger(pairs: usize) -> Ledger {
        let mut l = Ledger::new(1000);
        for a in ["a", "b", "c"] {
            l.register(a).unwrap();
        }
        for i in 0..pairs {
            l.enqueue(pair(&format!("p{i}"))).unwrap();
        }
        l
    }

    fn run(l: &mut Ledger, who: &str, d: Decision, now: u64) -> PairStatus {
        let a = l.claim_next(who, now).unwrap().unwrap();
        l.submit(who, &a.pair.pair_id, d, now + 1).unwrap()
    }

    #[test]
    fn triple_check_finalizes() {
        let mut l = ledger(1);
        assert_eq!(
            run(&mut l, "a", Decision::FirstCloser, 0),
            PairStatus::AwaitingVerification
        );
        assert_eq!(
            run(&mut l, "b", Decision::FirstCloser, 10),
            PairStatus::AwaitingVerification
        );
        assert_eq!(
            run(&mut l, "c", Decision::FirstCloser, 20),
            PairStatus::Finalized {
                label: PairLabel::FirstCloser
            }
        );
        let mut pairs = vec![pair("p0")];
        assert_eq!(l.state().export_labels(&mut pairs), 1);
        assert_eq!(pairs[0].label, PairLabel::FirstCloser);
        assert_eq!(pairs[0].label_source, LabelSource::HumanConsensus);
    }

    #[test]
    fn contested_and_skipped() {
        let mut l = ledger(2);
        run(&mut l, "a", Decision::FirstCloser, 0);
        assert_eq!(
            run(&mut l, "b", Decision::SecondCloser, 10),
            PairStatus::Discarded {
                reason: DiscardReason::Contested
            }
        );
        // p1: a skips as primary.
        assert_eq!(
            run(&mut l, "c", Decision::Skip, 20),
            PairStatus::Discarded {
                reason: DiscardReason::Skipped
            }
        );
        assert!(l.claim_next("a", 30).unwrap().is_none());
    }

    #[test]
    fn primary_never_verifies_own_pair() {
        let mut l = ledger(1);
        run(&mut l, "a", Decision::SecondCloser, 0);
        assert!(l.claim_next("a", 5).unwrap().is_none());
        let v = l.claim_next("b", 5).unwrap().unwrap();
        assert_eq!(v.role, Role::Verifier);
    }

    #[test]
    fn lease_expiry_requeues() {
        let mut l = ledger(1);
        let a = l.claim_next("a", 0).unwrap().unwrap();
        assert!(l.claim_next("b", 500).unwrap().is_none());
        let b = l.claim_next("b", 1000).unwrap().unwrap();
        assert_eq!(b.pair.pair_id, a.pair.pair_id);
        assert_eq!(
            l.submit("a", "p0", Decision::FirstCloser, 1001),
            Err(AnnotationError::LeaseExpired {
                pair_id: "p0".into(),
                annotator_id: "a".into()
            })
        );
        l.submit("b", "p0", Decision::FirstCloser, 1001).unwrap();
        assert!(matches!(
            l.submit("b", "p0", Decision::FirstCloser, 1002),
            Err(AnnotationError::DuplicateSubmission { .. })
        ));
    }

    #[test]
    fn reclaim_returns_held_pair() {
        let mut l = ledger(2);
        let first = l.claim_next("a", 0).unwrap().unwrap();
        let again = l.claim_next("a", 1).unwrap().unwrap();
        assert_eq!(first, again);
        assert_eq!(
            l.claim_next("zed", 1),
            Err(AnnotationError::UnknownAnnotator("zed".into()))
        );
    }

    #[test]
    fn progress_and_replay() {
        let mut l = ledger(3);
        let p = l.progress();
        assert_eq!(p.total.queued, 3);
        run(&mut l, "a", Decision::FirstCloser, 0);
        run(&mut l, "b", Decision::FirstCloser, 10);
        run(&mut l, "c", Decision::FirstCloser, 20);
        let p = l.progress();
        assert_eq!(p.total.finalized, 1);
        assert_eq!(p.total.queued, 2);
        let log = l.drain_events();
        let replayed = LedgerState::replay(&log).unwrap();
        assert_eq!(&replayed, l.state());
        assert_eq!(replayed.progress(), p);
    }
}
