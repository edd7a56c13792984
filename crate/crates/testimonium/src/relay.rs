//! The relay state machine: optimistic submission, branch bookkeeping,
//! jump-based main-chain search, confirmation counting, disputes with
//! pruning, and both store modes.

use std::collections::{BTreeMap, BTreeSet};

use thiserror::Error;

use crate::chain::{
    hash_header, verify_merkle_proof, BlockHeader, ClientId, Hash32, HeaderValidator, MerkleProof,
    TransactionId,
};
use crate::cost::{CostEventClass, CostMeter};
use crate::incentives::{Amount, LedgerError, StakeLedger};

#[derive(Debug, Error, PartialEq, Eq)]
pub enum RelayError {
    #[error("unknown header {0}")]
    UnknownHeader(Hash32),
    #[error("junction {0} has no child with branch id {1}")]
    NoSuchChild(Hash32, u64),
    #[error("submitter has insufficient free stake")]
    InsufficientStake,
    #[error("supplied header bytes do not match the stored header hash")]
    HeaderIntegrity,
    #[error("ledger error: {0}")]
    Ledger(#[from] LedgerError),
}

#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub enum ValidationMode {
    OnSubmission,
    OnDemand,
}

#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub enum StoreMode {
    Full,
    Compact,
}

#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub enum SearchMode {
    Naive,
    Optimized,
}

#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub struct RelayConfig {
    pub validation: ValidationMode,
    pub store: StoreMode,
    pub search: SearchMode,
}

impl RelayConfig {
    /// Validation-on-demand, full store, optimized search.
    pub fn standard() -> Self {
        RelayConfig {
            validation: ValidationMode::OnDemand,
            store: StoreMode::Full,
            search: SearchMode::Optimized,
        }
    }
}

/// What the relay keeps per header. Compact mode drops the header body; the
/// map key doubles as the content address.
#[derive(Clone, Debug)]
pub enum HeaderRecord {
    Full(BlockHeader),
    Compact { block_height: u64 },
}

impl HeaderRecord {
    pub fn block_height(&self) -> u64 {
        match self {
            HeaderRecord::Full(h) => h.block_height,
            HeaderRecord::Compact { block_height } => *block_height,
        }
    }

    pub fn full(&self) -> Option<&BlockHeader> {
        match self {
            HeaderRecord::Full(h) => Some(h),
            HeaderRecord::Compact { .. } => None,
        }
    }
}

/// Relay-side bookkeeping per header.
#[derive(Clone, Debug)]
pub struct HeaderMeta {
    /// `None` means the header was never locked (genesis, or
    /// validation-on-submission mode).
    pub locked_until: Option<u64>,
    pub submitter: ClientId,
    /// Insertion order matters: confirmation counting follows the first child.
    pub children: Vec<Hash32>,
    pub branch_id: u64,
    /// Preceding branch junction, or the genesis hash.
    pub junction: Hash32,
    pub total_difficulty: u64,
    pub parent_hash: Hash32,
}

#[derive(Clone, Debug)]
pub struct StoredHeader {
    pub record: HeaderRecord,
    pub meta: HeaderMeta,
}

/// Result of the main-chain membership check.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct MembershipResult {
    pub on_main_chain: bool,
    /// Starting point for confirmation counting; absent on negative results.
    pub confirm_start: Option<Hash32>,
    /// Headers inspected by the search.
    pub visits: u64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct VerifyOutcome {
    pub accepted: bool,
    pub search_visits: u64,
}

#[derive(Clone, Debug)]
pub struct Relay {
    config: RelayConfig,
    lock_period: u64,
    clock: u64,
    headers: BTreeMap<Hash32, StoredHeader>,
    branch_heads: BTreeSet<Hash32>,
    main_chain_head: Hash32,
    last_branch_id: u64,
    genesis_hash: Hash32,
    validator: HeaderValidator,
    ledger: StakeLedger,
    meter: CostMeter,
    // release schedule: tick -> headers whose stake unlocks at that tick
    pending_unlocks: BTreeMap<u64, Vec<Hash32>>,
}

impl Relay {
    pub fn new(
        genesis: BlockHeader,
        lock_period: u64,
        config: RelayConfig,
        validator: HeaderValidator,
        required_stake_per_header: Amount,
        meter: CostMeter,
    ) -> Self {
        let genesis_hash = hash_header(&genesis);
        let total_difficulty = genesis.difficulty;
        let block_height = genesis.block_height;
        let record = match config.store {
            StoreMode::Full => HeaderRecord::Full(genesis),
            StoreMode::Compact => HeaderRecord::Compact { block_height },
        };
        let meta = HeaderMeta {
            locked_until: None,
            submitter: ClientId::SYSTEM,
            children: Vec::new(),
            branch_id: 0,
            junction: genesis_hash,
            total_difficulty,
            parent_hash: Hash32::ZERO,
        };
        let mut headers = BTreeMap::new();
        headers.insert(genesis_hash, StoredHeader { record, meta });
        let mut branch_heads = BTreeSet::new();
        branch_heads.insert(genesis_hash);
        Relay {
            config,
            lock_period,
            clock: 0,
            headers,
            branch_heads,
            main_chain_head: genesis_hash,
            last_branch_id: 0,
            genesis_hash,
            validator,
            ledger: StakeLedger::new(required_stake_per_header),
            meter,
            pending_unlocks: BTreeMap::new(),
        }
    }

    // --- accessors -------------------------------------------------------

    pub fn config(&self) -> RelayConfig {
        self.config
    }

    pub fn clock(&self) -> u64 {
        self.clock
    }

    pub fn lock_period(&self) -> u64 {
        self.lock_period
    }

    pub fn genesis_hash(&self) -> Hash32 {
        self.genesis_hash
    }

    pub fn main_chain_head(&self) -> Hash32 {
        self.main_chain_head
    }

    pub fn header_count(&self) -> usize {
        self.headers.len()
    }

    pub fn contains_header(&self, hash: Hash32) -> bool {
        self.headers.contains_key(&hash)
    }

    pub fn header_meta(&self, hash: Hash32) -> Option<&HeaderMeta> {
        self.headers.get(&hash).map(|s| &s.meta)
    }

    pub fn header_record(&self, hash: Hash32) -> Option<&HeaderRecord> {
        self.headers.get(&hash).map(|s| &s.record)
    }

    pub fn stored_hashes(&self) -> impl Iterator<Item = Hash32> + '_ {
        self.headers.keys().copied()
    }

    pub fn branch_heads(&self) -> &BTreeSet<Hash32> {
        &self.branch_heads
    }

    pub fn last_branch_id(&self) -> u64 {
        self.last_branch_id
    }

    pub fn ledger(&self) -> &StakeLedger {
        &self.ledger
    }

    pub fn ledger_mut(&mut self) -> &mut StakeLedger {
        &mut self.ledger
    }

    pub fn meter(&self) -> &CostMeter {
        &self.meter
    }

    /// Compact mode requires full header bytes at verification and dispute.
    pub fn needs_full_header(&self) -> bool {
        self.config.store == StoreMode::Compact
    }

    pub fn is_locked(&self, hash: Hash32) -> Option<bool> {
        self.headers.get(&hash).map(|s| self.locked(&s.meta))
    }

    /// Stored headers with two or more children.
    pub fn junction_set(&self) -> BTreeSet<Hash32> {
        self.headers
            .iter()
            .filter(|(_, s)| s.meta.children.len() >= 2)
            .map(|(h, _)| *h)
            .collect()
    }

    fn locked(&self, meta: &HeaderMeta) -> bool {
        meta.locked_until.is_some_and(|t| t >= self.clock)
    }

    fn get(&self, hash: Hash32) -> Result<&StoredHeader, RelayError> {
        self.headers.get(&hash).ok_or(RelayError::UnknownHeader(hash))
    }

    // --- clock -----------------------------------------------------------

    /// Advances the logical clock and returns expired stake locks to their
    /// submitters.
    pub fn advance_clock(&mut self, ticks: u64) {
        self.clock += ticks;
        let due: Vec<u64> = self
            .pending_unlocks
            .range(..=self.clock)
            .map(|(t, _)| *t)
            .collect();
        for t in due {
            for hash in self.pending_unlocks.remove(&t).unwrap_or_default() {
                // entry absent when the header was disputed and the stake
                // already moved to the disputer
                if self.ledger.locked_for(hash).is_some() {
                    self.ledger.release_stake(hash).expect("entry checked");
                }
            }
        }
    }

    // --- submission (optimistic acceptance, branch bookkeeping) ----------

    /// Returns `Ok(false)` for duplicates and unknown parents; errors leave
    /// the state untouched.
    pub fn submit_block_header(
        &mut self,
        header: &BlockHeader,
        submitter: ClientId,
    ) -> Result<bool, RelayError> {
        self.meter.record(CostEventClass::HashEval, 1);
        let hash = hash_header(header);
        self.meter.record(CostEventClass::StorageRead, 2);
        if self.headers.contains_key(&hash) {
            return Ok(false);
        }
        let parent_hash = header.parent_hash;
        let Some(parent) = self.headers.get(&parent_hash) else {
            return Ok(false);
        };
        let parent_td = parent.meta.total_difficulty;
        let parent_branch = parent.meta.branch_id;
        let parent_junction = parent.meta.junction;
        let parent_height = parent.record.block_height();

        if !self.ledger.can_lock(submitter) {
            return Err(RelayError::InsufficientStake);
        }

        if self.config.validation == ValidationMode::OnSubmission {
            self.meter.record(CostEventClass::ValidatorInvocation, 1);
            if !self.validator.is_valid(header, parent_hash, parent_height) {
                return Ok(false);
            }
        }

        let locked_until = match self.config.validation {
            ValidationMode::OnDemand => {
                self.ledger
                    .lock_stake_for_header(submitter, hash)
                    .expect("free stake checked above");
                let until = self.clock + self.lock_period;
                self.pending_unlocks.entry(until + 1).or_default().push(hash);
                Some(until)
            }
            ValidationMode::OnSubmission => None,
        };

        let writes = match self.config {
            RelayConfig {
                validation: ValidationMode::OnSubmission,
                ..
            } => self.meter.schedule.submit_writes_baseline,
            RelayConfig {
                store: StoreMode::Full,
                ..
            } => self.meter.schedule.submit_writes_full,
            RelayConfig {
                store: StoreMode::Compact,
                ..
            } => self.meter.schedule.submit_writes_compact,
        };
        self.meter.record(CostEventClass::StorageWrite, writes);

        let parent_mut = self.headers.get_mut(&parent_hash).unwrap();
        parent_mut.meta.children.push(hash);
        let parent_child_count = parent_mut.meta.children.len();
        let first_child = parent_mut.meta.children[0];

        self.branch_heads.insert(hash);
        let parent_was_head = self.branch_heads.remove(&parent_hash);
        let (branch_id, junction, rewrite_first_child) = if parent_was_head {
            (parent_branch, parent_junction, false)
        } else {
            self.last_branch_id += 1;
            // the parent just became a junction: rewrite the older subtree's
            // junction pointers
            (self.last_branch_id, parent_hash, parent_child_count == 2)
        };

        let record = match self.config.store {
            StoreMode::Full => HeaderRecord::Full(header.clone()),
            StoreMode::Compact => HeaderRecord::Compact {
                block_height: header.block_height,
            },
        };
        let meta = HeaderMeta {
            locked_until,
            submitter,
            children: Vec::new(),
            branch_id,
            junction,
            total_difficulty: parent_td + header.difficulty,
            parent_hash,
        };
        self.headers.insert(hash, StoredHeader { record, meta });

        if rewrite_first_child {
            self.set_junction(first_child, parent_hash)?;
        }
        self.recompute_main_chain_head();
        Ok(true)
    }

    /// Rewrites the junction pointer of `start` and every single-child
    /// descendant, stopping after the first header with 0 or >= 2 children.
    pub fn set_junction(&mut self, start: Hash32, junction: Hash32) -> Result<(), RelayError> {
        let mut current = start;
        loop {
            let stored = self
                .headers
                .get_mut(&current)
                .ok_or(RelayError::UnknownHeader(current))?;
            stored.meta.junction = junction;
            if self.config.search == SearchMode::Optimized {
                self.meter.record(CostEventClass::StorageWrite, 1);
            }
            if stored.meta.children.len() == 1 {
                current = stored.meta.children[0];
            } else {
                return Ok(());
            }
        }
    }

    /// Rewrites junction and branch id along the single-child chain from
    /// `start`, inclusive of the first junction or branch head reached.
    pub fn update_desc(
        &mut self,
        start: Hash32,
        junction: Hash32,
        branch_id: u64,
    ) -> Result<(), RelayError> {
        let mut current = start;
        loop {
            let stored = self
                .headers
                .get_mut(&current)
                .ok_or(RelayError::UnknownHeader(current))?;
            stored.meta.junction = junction;
            stored.meta.branch_id = branch_id;
            if self.config.search == SearchMode::Optimized {
                self.meter.record(CostEventClass::StorageWrite, 2);
            }
            if stored.meta.children.len() == 1 {
                current = stored.meta.children[0];
            } else {
                return Ok(());
            }
        }
    }

    fn recompute_main_chain_head(&mut self) {
        if self.branch_heads.is_empty() {
            self.main_chain_head = Hash32::ZERO;
            return;
        }
        let max_td = self
            .branch_heads
            .iter()
            .map(|h| self.headers[h].meta.total_difficulty)
            .max()
            .unwrap();
        let incumbent_wins = self
            .branch_heads
            .contains(&self.main_chain_head)
            && self
                .headers
                .get(&self.main_chain_head)
                .is_some_and(|s| s.meta.total_difficulty == max_td);
        if incumbent_wins {
            return;
        }
        // lowest hash among the maximal heads (BTreeSet iterates in order)
        self.main_chain_head = *self
            .branch_heads
            .iter()
            .find(|h| self.headers[*h].meta.total_difficulty == max_td)
            .unwrap();
    }

    // --- search ----------------------------------------------------------

    /// Jump-based membership check: visits only branch junctions between the
    /// main chain's head and the target's branch.
    pub fn is_part_of_main_chain(&mut self, block_hash: Hash32) -> Result<MembershipResult, RelayError> {
        let target = self.get(block_hash)?;
        let target_branch = target.meta.branch_id;
        let target_height = target.record.block_height();

        let mut current_hash = self.main_chain_head;
        let mut current = self.get(current_hash)?;
        let mut visits = 1u64;
        let mut confirm_start = None;
        if !self.locked(&current.meta) {
            confirm_start = Some(current_hash);
        }
        while current.meta.branch_id > target_branch {
            let old_branch = current.meta.branch_id;
            current_hash = current.meta.junction;
            current = self.get(current_hash)?;
            visits += 1;
            if confirm_start.is_none() && !self.locked(&current.meta) {
                confirm_start = Some(self.get_child_by_branch(current_hash, old_branch)?);
            }
        }
        let final_branch = current.meta.branch_id;
        let final_height = current.record.block_height();
        self.meter.record(CostEventClass::StorageRead, visits);
        let on_main_chain = final_branch >= target_branch && final_height >= target_height;
        Ok(MembershipResult {
            on_main_chain,
            confirm_start: if on_main_chain { confirm_start } else { None },
            visits,
        })
    }

    /// The unique child of `junction_hash` carrying `branch_id`.
    pub fn get_child_by_branch(
        &self,
        junction_hash: Hash32,
        branch_id: u64,
    ) -> Result<Hash32, RelayError> {
        let stored = self.get(junction_hash)?;
        stored
            .meta
            .children
            .iter()
            .copied()
            .find(|c| self.headers.get(c).is_some_and(|s| s.meta.branch_id == branch_id))
            .ok_or(RelayError::NoSuchChild(junction_hash, branch_id))
    }

    /// Baseline search: walks parent links from the main chain's head.
    /// Also serves as the test oracle for the jump-based search.
    pub fn naive_is_part_of_main_chain(
        &mut self,
        block_hash: Hash32,
    ) -> Result<(bool, u64), RelayError> {
        self.get(block_hash)?;
        let mut current = self.main_chain_head;
        let mut visits = 0u64;
        loop {
            visits += 1;
            if current == block_hash {
                self.meter.record(CostEventClass::StorageRead, visits);
                return Ok((true, visits));
            }
            if current == self.genesis_hash {
                self.meter.record(CostEventClass::StorageRead, visits);
                return Ok((false, visits));
            }
            current = self.get(current)?.meta.parent_hash;
        }
    }

    /// All failure modes answer `false`: unknown header, still locked, or
    /// not enough unlocked successors along the first-child chain.
    pub fn is_confirmed(&mut self, block_hash: Hash32, confirmations: u64) -> bool {
        let mut current = block_hash;
        let mut remaining = confirmations;
        loop {
            self.meter.record(CostEventClass::StorageRead, 1);
            let Some(stored) = self.headers.get(&current) else {
                return false;
            };
            if self.locked(&stored.meta) {
                return false;
            }
            if remaining == 0 {
                return true;
            }
            let Some(&child) = stored.meta.children.first() else {
                return false;
            };
            current = child;
            remaining -= 1;
        }
    }

    // --- verification ----------------------------------------------------

    /// On-relay SPV: membership, confirmations, Merkle proof, then fee
    /// transfer. In compact mode `full_header` must accompany the call and
    /// rehash to the stored content address.
    #[allow(clippy::too_many_arguments)]
    pub fn verify_transaction_inclusion(
        &mut self,
        tx: TransactionId,
        block_hash: Hash32,
        confirmations: u64,
        proof: &MerkleProof,
        requester: ClientId,
        fee: Amount,
        full_header: Option<&BlockHeader>,
    ) -> Result<VerifyOutcome, RelayError> {
        self.meter.record(CostEventClass::StorageRead, 1);
        let stored = self.get(block_hash)?;
        let target_height = stored.record.block_height();
        let target_locked = self.locked(&stored.meta);
        let submitter = stored.meta.submitter;
        let stored_root = stored.record.full().map(|h| h.merkle_root);
        let merkle_root = match stored_root {
            Some(root) => root,
            None => {
                let supplied = full_header.ok_or(RelayError::HeaderIntegrity)?;
                self.meter.record(CostEventClass::HashEval, 1);
                if hash_header(supplied) != block_hash {
                    return Err(RelayError::HeaderIntegrity);
                }
                supplied.merkle_root
            }
        };

        let (on_main, confirm_start, visits) = match self.config.search {
            SearchMode::Optimized => {
                let r = self.is_part_of_main_chain(block_hash)?;
                (r.on_main_chain, r.confirm_start, r.visits)
            }
            SearchMode::Naive => {
                let (b, v) = self.naive_is_part_of_main_chain(block_hash)?;
                (b, None, v)
            }
        };
        let reject = |visits| {
            Ok(VerifyOutcome {
                accepted: false,
                search_visits: visits,
            })
        };
        if !on_main || target_locked {
            return reject(visits);
        }

        // the jump search may have precomputed an unlocked starting point;
        // the distance already covered reduces the required confirmations
        let (start, required) = match confirm_start {
            Some(cs) => {
                let cs_height = self.get(cs)?.record.block_height();
                (cs, confirmations.saturating_sub(cs_height.saturating_sub(target_height)))
            }
            None => (block_hash, confirmations),
        };
        if !self.is_confirmed(start, required) {
            return reject(visits);
        }

        self.meter
            .record(CostEventClass::HashEval, proof.path.len() as u64 + 1);
        if !verify_merkle_proof(merkle_root, &tx, proof) {
            return reject(visits);
        }

        self.ledger.pay_verification_fee(requester, submitter, fee)?;
        Ok(VerifyOutcome {
            accepted: true,
            search_visits: visits,
        })
    }

    // --- disputes and pruning --------------------------------------------

    /// Validates a locked header on demand; on failure removes it together
    /// with all descendants and forfeits their stakes to the disputer.
    /// Headers past their lock period are deemed valid and cannot be
    /// disputed.
    pub fn dispute_header(
        &mut self,
        block_hash: Hash32,
        disputer: ClientId,
        full_header: Option<&BlockHeader>,
    ) -> Result<Vec<ClientId>, RelayError> {
        self.meter.record(CostEventClass::StorageRead, 2);
        let stored = self.get(block_hash)?;
        if !self.locked(&stored.meta) {
            return Ok(Vec::new());
        }
        let parent_hash = stored.meta.parent_hash;
        let parent_height = self.get(parent_hash)?.record.block_height();

        let maybe_full = self.get(block_hash)?.record.full().cloned();
        let header_for_validation: BlockHeader = match maybe_full {
            Some(h) => h,
            None => {
                let supplied = full_header.ok_or(RelayError::HeaderIntegrity)?;
                self.meter.record(CostEventClass::HashEval, 1);
                if hash_header(supplied) != block_hash {
                    return Err(RelayError::HeaderIntegrity);
                }
                supplied.clone()
            }
        };
        self.meter.record(CostEventClass::ValidatorInvocation, 1);
        if self
            .validator
            .is_valid(&header_for_validation, parent_hash, parent_height)
        {
            return Ok(Vec::new());
        }
        self.remove_branch(block_hash, disputer, true)
    }

    /// Dispute path that skips the lock and validity checks; used by the
    /// cost harness to measure pruning regardless of the validation result.
    pub fn force_dispute(
        &mut self,
        block_hash: Hash32,
        disputer: ClientId,
    ) -> Result<Vec<ClientId>, RelayError> {
        self.get(block_hash)?;
        self.meter.record(CostEventClass::ValidatorInvocation, 1);
        self.remove_branch(block_hash, disputer, false)
    }

    fn remove_branch(
        &mut self,
        block_hash: Hash32,
        disputer: ClientId,
        strict_reward: bool,
    ) -> Result<Vec<ClientId>, RelayError> {
        let parent_hash = self.get(block_hash)?.meta.parent_hash;
        let removed = self.prune_subtree(block_hash, None)?;

        // parent repair: a junction reduced to one child is a junction no more
        if let Some(parent) = self.headers.get(&parent_hash) {
            if parent.meta.children.len() == 1 {
                let child = parent.meta.children[0];
                let junction = parent.meta.junction;
                let branch_id = parent.meta.branch_id;
                self.update_desc(child, junction, branch_id)?;
            }
        }
        self.recompute_main_chain_head();

        let hashes: Vec<Hash32> = removed.iter().map(|(h, _)| *h).collect();
        if strict_reward {
            self.ledger.reward_disputer(disputer, &hashes)?;
        } else {
            let still_locked: Vec<Hash32> = hashes
                .into_iter()
                .filter(|h| self.ledger.locked_for(*h).is_some())
                .collect();
            self.ledger.reward_disputer(disputer, &still_locked)?;
        }
        Ok(removed.into_iter().map(|(_, s)| s).collect())
    }

    /// Depth-first removal of the subtree rooted at `block_hash`, children
    /// first. With a limit, removal stops at a consistent frontier and the
    /// operation is resumable.
    pub fn prune_branch(
        &mut self,
        block_hash: Hash32,
        limit: Option<usize>,
    ) -> Result<Vec<ClientId>, RelayError> {
        let removed = self.prune_subtree(block_hash, limit)?;
        self.recompute_main_chain_head();
        Ok(removed.into_iter().map(|(_, s)| s).collect())
    }

    fn prune_subtree(
        &mut self,
        block_hash: Hash32,
        limit: Option<usize>,
    ) -> Result<Vec<(Hash32, ClientId)>, RelayError> {
        self.get(block_hash)?;
        // iterative post-order: every header appears after its descendants,
        // so any prefix is a consistent removal frontier
        let mut order = Vec::new();
        let mut stack = vec![(block_hash, false)];
        while let Some((h, expanded)) = stack.pop() {
            if expanded {
                order.push(h);
                continue;
            }
            stack.push((h, true));
            for &c in self.headers[&h].meta.children.iter().rev() {
                stack.push((c, false));
            }
        }
        let take = limit.unwrap_or(order.len()).min(order.len());
        let mut removed = Vec::with_capacity(take);
        for &h in order.iter().take(take) {
            let stored = self.headers.remove(&h).unwrap();
            self.meter.record(CostEventClass::StorageDelete, 1);
            self.branch_heads.remove(&h);
            removed.push((h, stored.meta.submitter));
            if let Some(parent) = self.headers.get_mut(&stored.meta.parent_hash) {
                parent.meta.children.retain(|c| *c != h);
                if parent.meta.children.is_empty() {
                    self.branch_heads.insert(stored.meta.parent_hash);
                }
            }
        }
        Ok(removed)
    }

    // --- integrity -------------------------------------------------------

    /// Structural invariants; used by tests after every operation sequence.
    pub fn check_integrity(&self) -> Result<(), String> {
        if self.headers.is_empty() {
            return Ok(());
        }
        let childless: BTreeSet<Hash32> = self
            .headers
            .iter()
            .filter(|(_, s)| s.meta.children.is_empty())
            .map(|(h, _)| *h)
            .collect();
        if childless != self.branch_heads {
            return Err("branchHeads != set of childless headers".to_string());
        }
        if !self.branch_heads.contains(&self.main_chain_head) {
            return Err("mainChainHead is not a branch head".to_string());
        }
        let max_td = self
            .branch_heads
            .iter()
            .map(|h| self.headers[h].meta.total_difficulty)
            .max()
            .unwrap();
        if self.headers[&self.main_chain_head].meta.total_difficulty != max_td {
            return Err("mainChainHead does not have maximal total difficulty".to_string());
        }
        for (hash, stored) in &self.headers {
            if stored.meta.branch_id > self.last_branch_id {
                return Err(format!("{hash} has branch id beyond lastBranchId"));
            }
            if *hash != self.genesis_hash {
                let Some(parent) = self.headers.get(&stored.meta.parent_hash) else {
                    return Err(format!("{hash} has unknown parent"));
                };
                if !parent.meta.children.contains(hash) {
                    return Err(format!("{hash} missing from its parent's child list"));
                }
                if stored.meta.branch_id < parent.meta.branch_id {
                    return Err(format!("{hash} violates branch id monotonicity"));
                }
                if let (Some(h), Some(p)) = (stored.record.full(), parent.record.full()) {
                    if h.block_height != p.block_height + 1 {
                        return Err(format!("{hash} has discontinuous height"));
                    }
                    if stored.meta.total_difficulty
                        != parent.meta.total_difficulty + h.difficulty
                    {
                        return Err(format!("{hash} has inconsistent total difficulty"));
                    }
                }
            }
            for child in &stored.meta.children {
                let Some(c) = self.headers.get(child) else {
                    return Err(format!("{hash} lists unknown child {child}"));
                };
                if c.meta.parent_hash != *hash {
                    return Err(format!("{hash} child {child} disagrees about its parent"));
                }
            }
            let junction = stored.meta.junction;
            if junction != self.genesis_hash {
                let Some(j) = self.headers.get(&junction) else {
                    return Err(format!("{hash} has unknown junction {junction}"));
                };
                if j.meta.children.len() < 2 {
                    return Err(format!(
                        "{hash} junction {junction} has fewer than two children"
                    ));
                }
            }
        }
        Ok(())
    }

    // --- snapshot --------------------------------------------------------

    /// Deterministic canonical byte snapshot of relay plus ledger; two runs
    /// of the same scenario produce byte-identical snapshots.
    pub fn snapshot_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(b"TSTM1");
        out.push(match self.config.store {
            StoreMode::Full => 0,
            StoreMode::Compact => 1,
        });
        out.extend_from_slice(&self.clock.to_be_bytes());
        out.extend_from_slice(&self.lock_period.to_be_bytes());
        out.extend_from_slice(&self.last_branch_id.to_be_bytes());
        out.extend_from_slice(self.main_chain_head.as_bytes());
        out.extend_from_slice(self.genesis_hash.as_bytes());
        out.extend_from_slice(&(self.headers.len() as u64).to_be_bytes());
        for (hash, stored) in &self.headers {
            out.extend_from_slice(hash.as_bytes());
            match &stored.record {
                HeaderRecord::Full(h) => {
                    out.push(0);
                    let enc = crate::chain::encode_header(h);
                    out.extend_from_slice(&(enc.len() as u32).to_be_bytes());
                    out.extend_from_slice(&enc);
                }
                HeaderRecord::Compact { block_height } => {
                    out.push(1);
                    out.extend_from_slice(&block_height.to_be_bytes());
                }
            }
            match stored.meta.locked_until {
                Some(t) => {
                    out.push(1);
                    out.extend_from_slice(&t.to_be_bytes());
                }
                None => out.push(0),
            }
            out.extend_from_slice(&stored.meta.submitter.0);
            out.extend_from_slice(&stored.meta.branch_id.to_be_bytes());
            out.extend_from_slice(stored.meta.junction.as_bytes());
            out.extend_from_slice(&stored.meta.total_difficulty.to_be_bytes());
            out.extend_from_slice(stored.meta.parent_hash.as_bytes());
            out.extend_from_slice(&(stored.meta.children.len() as u32).to_be_bytes());
            for c in &stored.meta.children {
                out.extend_from_slice(c.as_bytes());
            }
        }
        // ledger maps are BTree-backed, so JSON serialization is stable
        out.extend_from_slice(&serde_json::to_vec(&self.ledger).expect("ledger serializes"));
        out
    }
}
