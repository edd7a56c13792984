//! Abstract-unit cost metering and the three-prototype comparison harness.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::chain::{hash_header, ClientId, Hash32, MerkleTree, TransactionId};
use crate::relay::{Relay, RelayConfig, RelayError, SearchMode, StoreMode, ValidationMode};
use crate::sim::GeneratedChain;

#[derive(Debug, Error)]
pub enum CostError {
    #[error("header stream violates parent continuity at index {0}")]
    BadStream(usize),
    #[error("relay error during replay: {0}")]
    Relay(#[from] RelayError),
}

/// Metered event classes, roughly mirroring what a host chain charges for.
#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Debug, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub enum CostEventClass {
    StorageWrite,
    StorageDelete,
    StorageRead,
    HashEval,
    ValidatorInvocation,
}

/// Unit costs per event class plus the per-mode submission write counts.
/// Defaults are calibrated so the per-submission means of the three prototype
/// modes sit in the same ratios as a host-chain deployment; override via a
/// JSON config file when experimenting.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default, rename_all = "camelCase")]
pub struct CostSchedule {
    pub storage_write: u64,
    pub storage_delete: u64,
    pub storage_read: u64,
    pub hash_eval: u64,
    pub validator_invocation: u64,
    /// Storage words written per accepted submission: full header, no
    /// lock/junction bookkeeping.
    pub submit_writes_baseline: u64,
    /// Full header plus lock, submitter, branch, and junction metadata.
    pub submit_writes_full: u64,
    /// Content-addressable record: header hash, height, packed metadata.
    pub submit_writes_compact: u64,
}

impl Default for CostSchedule {
    fn default() -> Self {
        CostSchedule {
            storage_write: 46_000,
            storage_delete: 10_000,
            storage_read: 200,
            hash_eval: 60,
            validator_invocation: 3_000_000,
            submit_writes_baseline: 8,
            submit_writes_full: 12,
            submit_writes_compact: 6,
        }
    }
}

impl CostSchedule {
    pub fn unit_cost(&self, class: CostEventClass) -> u64 {
        match class {
            CostEventClass::StorageWrite => self.storage_write,
            CostEventClass::StorageDelete => self.storage_delete,
            CostEventClass::StorageRead => self.storage_read,
            CostEventClass::HashEval => self.hash_eval,
            CostEventClass::ValidatorInvocation => self.validator_invocation,
        }
    }
}

/// Running cost accumulator with an event trace.
#[derive(Clone, Debug, Default)]
pub struct CostMeter {
    pub schedule: CostSchedule,
    total: u64,
    counts: BTreeMap<CostEventClass, u64>,
    trace: Vec<(CostEventClass, u64)>,
}

impl CostMeter {
    pub fn new(schedule: CostSchedule) -> Self {
        CostMeter {
            schedule,
            ..Default::default()
        }
    }

    pub fn record(&mut self, class: CostEventClass, count: u64) {
        if count == 0 {
            return;
        }
        self.total += self.schedule.unit_cost(class) * count;
        *self.counts.entry(class).or_insert(0) += count;
        self.trace.push((class, count));
    }

    pub fn total(&self) -> u64 {
        self.total
    }

    pub fn count(&self, class: CostEventClass) -> u64 {
        self.counts.get(&class).copied().unwrap_or(0)
    }

    pub fn trace(&self) -> &[(CostEventClass, u64)] {
        &self.trace
    }
}

/// The three prototype configurations.
#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Debug, Serialize, Deserialize)]
pub enum PrototypeMode {
    Baseline,
    Testimonium1,
    Testimonium2,
}

impl PrototypeMode {
    pub fn relay_config(self) -> RelayConfig {
        match self {
            PrototypeMode::Baseline => RelayConfig {
                validation: ValidationMode::OnSubmission,
                store: StoreMode::Full,
                search: SearchMode::Naive,
            },
            PrototypeMode::Testimonium1 => RelayConfig {
                validation: ValidationMode::OnDemand,
                store: StoreMode::Full,
                search: SearchMode::Optimized,
            },
            PrototypeMode::Testimonium2 => RelayConfig {
                validation: ValidationMode::OnDemand,
                store: StoreMode::Compact,
                search: SearchMode::Optimized,
            },
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            PrototypeMode::Baseline => "baseline",
            PrototypeMode::Testimonium1 => "testimonium1",
            PrototypeMode::Testimonium2 => "testimonium2",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "baseline" => Some(PrototypeMode::Baseline),
            "t1" | "testimonium1" => Some(PrototypeMode::Testimonium1),
            "t2" | "testimonium2" => Some(PrototypeMode::Testimonium2),
            _ => None,
        }
    }
}

#[derive(Clone, Copy, PartialEq, Eq, Debug, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub enum OpClass {
    Submission,
    Verification,
    Dispute,
}

impl OpClass {
    pub fn label(self) -> &'static str {
        match self {
            OpClass::Submission => "submission",
            OpClass::Verification => "verification",
            OpClass::Dispute => "dispute",
        }
    }
}

/// One metered operation during a replay.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct CostRow {
    pub index: usize,
    pub mode: PrototypeMode,
    pub op_class: OpClass,
    pub cost: u64,
    pub visits: u64,
}

#[derive(Clone, Debug, Default, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct SeriesStats {
    pub count: usize,
    pub mean: f64,
    pub stddev: f64,
}

impl SeriesStats {
    pub fn from_series(series: &[u64]) -> Self {
        if series.is_empty() {
            return SeriesStats::default();
        }
        let n = series.len() as f64;
        let mean = series.iter().sum::<u64>() as f64 / n;
        // population standard deviation
        let var = series
            .iter()
            .map(|&x| {
                let d = x as f64 - mean;
                d * d
            })
            .sum::<f64>()
            / n;
        SeriesStats {
            count: series.len(),
            mean,
            stddev: var.sqrt(),
        }
    }
}

#[derive(Clone, Debug, Default, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct ModeSummary {
    pub submission: SeriesStats,
    pub verification: SeriesStats,
    pub dispute: SeriesStats,
    pub validator_invocations: u64,
    pub accepted_submissions: u64,
    pub disputes: u64,
    pub max_verification_visits: u64,
}

#[derive(Clone, Debug, Default, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct CostSummary {
    pub modes: BTreeMap<String, ModeSummary>,
    /// 100 * (1 - mean(mode)/mean(baseline)) for submission cost.
    pub submission_reduction_pct: BTreeMap<String, f64>,
}

#[derive(Clone, Debug, Default)]
pub struct CostReport {
    pub rows: Vec<CostRow>,
    pub summary: CostSummary,
}

impl CostReport {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("index,mode,opClass,cost,visits\n");
        for row in &self.rows {
            out.push_str(&format!(
                "{},{},{},{},{}\n",
                row.index,
                row.mode.label(),
                row.op_class.label(),
                row.cost,
                row.visits
            ));
        }
        out
    }
}

#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub enum Experiment {
    /// After each submission, verify a transaction inclusion on the fixed
    /// target block.
    Verification,
    /// After each submission, dispute the fixed target and restore the state.
    Dispute,
}

/// Parameters for [`run_comparison`].
pub struct ComparisonSpec {
    pub modes: Vec<PrototypeMode>,
    pub experiment: Experiment,
    /// Defaults to the genesis block.
    pub verification_target: Option<Hash32>,
    /// Defaults to the first stream header after genesis.
    pub dispute_target: Option<Hash32>,
    pub lock_period: u64,
    pub schedule: CostSchedule,
    /// Run the per-submission probe only every n-th submission.
    pub sample_every: usize,
}

impl Default for ComparisonSpec {
    fn default() -> Self {
        ComparisonSpec {
            modes: vec![
                PrototypeMode::Baseline,
                PrototypeMode::Testimonium1,
                PrototypeMode::Testimonium2,
            ],
            experiment: Experiment::Verification,
            verification_target: None,
            dispute_target: None,
            lock_period: 5,
            schedule: CostSchedule::default(),
            sample_every: 1,
        }
    }
}

const REQUESTER: ClientId = ClientId([0xfe; 20]);
const DISPUTER: ClientId = ClientId([0xfd; 20]);

/// Replays the stream into one relay instance per mode, probing verification
/// or dispute cost along the way.
pub fn run_comparison(chain: &GeneratedChain, spec: &ComparisonSpec) -> Result<CostReport, CostError> {
    let records = &chain.records;
    if records.is_empty() {
        return Err(CostError::BadStream(0));
    }
    // parent continuity check over the stream
    {
        let mut seen = std::collections::BTreeSet::new();
        seen.insert(records[0].hash);
        for (i, r) in records.iter().enumerate().skip(1) {
            if !seen.contains(&r.header.parent_hash) {
                return Err(CostError::BadStream(i));
            }
            seen.insert(r.hash);
        }
    }

    let genesis = &records[0];
    let verification_target = spec.verification_target.unwrap_or(genesis.hash);
    let dispute_target = spec
        .dispute_target
        .unwrap_or_else(|| records.get(1).map(|r| r.hash).unwrap_or(genesis.hash));

    // proof material for the verification probe
    let target_txs = chain
        .annotations
        .per_header
        .get(&verification_target)
        .map(|a| a.tx_ids.clone())
        .unwrap_or_default();
    let proof_material = if target_txs.is_empty() {
        None
    } else {
        let tree = MerkleTree::build(&target_txs).expect("non-empty");
        let proof = tree.prove(&target_txs[0]).expect("member");
        Some((target_txs[0], proof))
    };

    let mut rows = Vec::new();
    let mut summary = CostSummary::default();

    for &mode in &spec.modes {
        let validator = crate::chain::HeaderValidator::keyed(chain.annotations.validator_key);
        let mut relay = Relay::new(
            genesis.header.clone(),
            spec.lock_period,
            mode.relay_config(),
            validator,
            1,
            CostMeter::new(spec.schedule.clone()),
        );
        // everyone is funded generously; stake economics are not under test here
        let mut funded = std::collections::BTreeSet::new();
        for r in records {
            if funded.insert(r.submitter_hint) {
                relay
                    .ledger_mut()
                    .deposit_stake(r.submitter_hint, records.len() as u64 + 1)
                    .expect("positive deposit");
            }
        }
        relay
            .ledger_mut()
            .deposit_stake(REQUESTER, u32::MAX as u64)
            .expect("positive deposit");

        let mut submission_series = Vec::new();
        let mut verification_series = Vec::new();
        let mut dispute_series = Vec::new();
        let mut max_verification_visits = 0u64;
        let mut accepted = 0u64;
        let mut disputes = 0u64;

        for (i, record) in records.iter().enumerate().skip(1) {
            relay.advance_clock(1);
            let before = relay.meter().total();
            let ok = relay.submit_block_header(&record.header, record.submitter_hint)?;
            let cost = relay.meter().total() - before;
            if ok {
                accepted += 1;
            }
            rows.push(CostRow {
                index: i,
                mode,
                op_class: OpClass::Submission,
                cost,
                visits: 0,
            });
            submission_series.push(cost);

            if spec.sample_every != 0 && i % spec.sample_every == 0 {
                match spec.experiment {
                    Experiment::Verification => {
                        if let Some((tx, proof)) = &proof_material {
                            let full_header = relay.needs_full_header().then_some(&genesis.header);
                            let before = relay.meter().total();
                            let outcome = relay.verify_transaction_inclusion(
                                *tx,
                                verification_target,
                                0,
                                proof,
                                REQUESTER,
                                0,
                                full_header,
                            )?;
                            let cost = relay.meter().total() - before;
                            let visits = outcome.search_visits;
                            debug_assert!(outcome.accepted);
                            max_verification_visits = max_verification_visits.max(visits);
                            rows.push(CostRow {
                                index: i,
                                mode,
                                op_class: OpClass::Verification,
                                cost,
                                visits,
                            });
                            verification_series.push(cost);
                        }
                    }
                    Experiment::Dispute => {
                        // Baseline validates at submission and has no dispute path.
                        if mode != PrototypeMode::Baseline
                            && relay.contains_header(dispute_target)
                        {
                            // dispute-with-restore: measure on a clone, keep the original
                            let mut probe = relay.clone();
                            let before = probe.meter().total();
                            let removed = probe.force_dispute(dispute_target, DISPUTER)?;
                            let cost = probe.meter().total() - before;
                            disputes += 1;
                            rows.push(CostRow {
                                index: i,
                                mode,
                                op_class: OpClass::Dispute,
                                cost,
                                visits: removed.len() as u64,
                            });
                            dispute_series.push(cost);
                        }
                    }
                }
            }
        }

        summary.modes.insert(
            mode.label().to_string(),
            ModeSummary {
                submission: SeriesStats::from_series(&submission_series),
                verification: SeriesStats::from_series(&verification_series),
                dispute: SeriesStats::from_series(&dispute_series),
                validator_invocations: relay.meter().count(CostEventClass::ValidatorInvocation),
                accepted_submissions: accepted,
                disputes,
                max_verification_visits,
            },
        );
    }

    if let Some(base) = summary.modes.get(PrototypeMode::Baseline.label()).cloned() {
        if base.submission.mean > 0.0 {
            for (label, mode_summary) in &summary.modes {
                let pct = 100.0 * (1.0 - mode_summary.submission.mean / base.submission.mean);
                summary
                    .submission_reduction_pct
                    .insert(label.clone(), pct);
            }
        }
    }

    Ok(CostReport { rows, summary })
}

/// Replays a header stream and checks the relay's recorded junction set
/// against the generator's ground truth.
#[derive(Clone, Debug, Default, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct ReplayReport {
    pub submitted: usize,
    pub accepted: usize,
    pub rejected: Vec<usize>,
    pub junction_match: Option<bool>,
    pub missing_junctions: Vec<Hash32>,
    pub extra_junctions: Vec<Hash32>,
    pub main_chain_head: Hash32,
}

pub fn replay_dataset(
    chain: &GeneratedChain,
    relay: &mut Relay,
) -> Result<ReplayReport, CostError> {
    let mut report = ReplayReport::default();
    let mut funded = std::collections::BTreeSet::new();
    for r in &chain.records {
        if funded.insert(r.submitter_hint) {
            relay
                .ledger_mut()
                .deposit_stake(r.submitter_hint, chain.records.len() as u64 + 1)
                .expect("positive deposit");
        }
    }
    for (i, record) in chain.records.iter().enumerate().skip(1) {
        relay.advance_clock(1);
        debug_assert_eq!(hash_header(&record.header), record.hash);
        report.submitted += 1;
        if relay.submit_block_header(&record.header, record.submitter_hint)? {
            report.accepted += 1;
        } else {
            report.rejected.push(i);
        }
    }
    if chain.annotations.per_header.is_empty() {
        // a bare stream without ground truth: nothing to compare against
        report.junction_match = None;
    } else {
        let relay_junctions = relay.junction_set();
        let truth = &chain.annotations.junctions;
        report.missing_junctions = truth.difference(&relay_junctions).copied().collect();
        report.extra_junctions = relay_junctions.difference(truth).copied().collect();
        report.junction_match =
            Some(report.missing_junctions.is_empty() && report.extra_junctions.is_empty());
    }
    report.main_chain_head = relay.main_chain_head();
    Ok(report)
}

/// Convenience wrapper so a tx id is available where only proofs are built.
pub fn first_tx_of(chain: &GeneratedChain, block: Hash32) -> Option<TransactionId> {
    chain
        .annotations
        .per_header
        .get(&block)
        .and_then(|a| a.tx_ids.first().copied())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn meter_accumulates_linearly() {
        let mut meter = CostMeter::new(CostSchedule {
            storage_write: 20_000,
            ..Default::default()
        });
        meter.record(CostEventClass::HashEval, 0);
        assert_eq!(meter.total(), 0);
        meter.record(CostEventClass::ValidatorInvocation, 1);
        assert_eq!(meter.total(), 3_000_000);
        meter.record(CostEventClass::StorageWrite, 1);
        meter.record(CostEventClass::StorageWrite, 1);
        assert_eq!(meter.total(), 3_000_000 + 40_000);
        assert_eq!(meter.count(CostEventClass::StorageWrite), 2);
    }

    #[test]
    fn population_stddev() {
        let stats = SeriesStats::from_series(&[2, 4, 4, 4, 5, 5, 7, 9]);
        assert!((stats.mean - 5.0).abs() < 1e-9);
        assert!((stats.stddev - 2.0).abs() < 1e-9);
    }
}
