//! Stake deposits, per-header stake locking, dispute rewards, verification
//! fees, and the minimum-fee calculator.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::chain::{ClientId, Hash32};

pub type Amount = u64;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum LedgerError {
    #[error("deposit amount must be positive")]
    ZeroDeposit,
    #[error("insufficient free stake")]
    InsufficientStake,
    #[error("insufficient funds for fee payment")]
    InsufficientFunds,
    #[error("no locked stake recorded for header")]
    NoLockedStake,
    #[error("relay/ledger desync: removed header {0} has no locked stake entry")]
    Desync(Hash32),
    #[error("expected verification count must be at least 1")]
    NoVerifications,
}

/// Per-client balances plus the per-header stake lock table.
///
/// Lock, release, and reward are internal transfers; total units change only
/// through deposits, withdrawals, and fee inflows.
#[derive(Clone, Debug, Default, Serialize, Deserialize)]
pub struct StakeLedger {
    free: BTreeMap<ClientId, Amount>,
    locked_by_header: BTreeMap<Hash32, (ClientId, Amount)>,
    fees_earned: BTreeMap<ClientId, Amount>,
    pub required_stake_per_header: Amount,
}

impl StakeLedger {
    pub fn new(required_stake_per_header: Amount) -> Self {
        StakeLedger {
            required_stake_per_header,
            ..Default::default()
        }
    }

    pub fn free_balance(&self, client: ClientId) -> Amount {
        self.free.get(&client).copied().unwrap_or(0)
    }

    pub fn fees_earned(&self, client: ClientId) -> Amount {
        self.fees_earned.get(&client).copied().unwrap_or(0)
    }

    pub fn locked_for(&self, header: Hash32) -> Option<(ClientId, Amount)> {
        self.locked_by_header.get(&header).copied()
    }

    pub fn locked_total(&self) -> Amount {
        self.locked_by_header.values().map(|(_, a)| a).sum()
    }

    /// Sum of every unit tracked anywhere in the ledger.
    pub fn total_units(&self) -> Amount {
        self.free.values().sum::<Amount>()
            + self.locked_total()
            + self.fees_earned.values().sum::<Amount>()
    }

    pub fn deposit_stake(&mut self, client: ClientId, amount: Amount) -> Result<(), LedgerError> {
        if amount == 0 {
            return Err(LedgerError::ZeroDeposit);
        }
        *self.free.entry(client).or_insert(0) += amount;
        Ok(())
    }

    pub fn withdraw_stake(&mut self, client: ClientId, amount: Amount) -> Result<(), LedgerError> {
        let free = self.free.entry(client).or_insert(0);
        if amount > *free {
            return Err(LedgerError::InsufficientStake);
        }
        *free -= amount;
        Ok(())
    }

    pub fn can_lock(&self, client: ClientId) -> bool {
        self.free_balance(client) >= self.required_stake_per_header
    }

    pub fn lock_stake_for_header(
        &mut self,
        client: ClientId,
        header: Hash32,
    ) -> Result<(), LedgerError> {
        let required = self.required_stake_per_header;
        let free = self.free.entry(client).or_insert(0);
        if *free < required {
            return Err(LedgerError::InsufficientStake);
        }
        *free -= required;
        self.locked_by_header.insert(header, (client, required));
        Ok(())
    }

    /// Returns the stake to the submitter once the lock period passed
    /// without a dispute.
    pub fn release_stake(&mut self, header: Hash32) -> Result<(), LedgerError> {
        let (client, amount) = self
            .locked_by_header
            .remove(&header)
            .ok_or(LedgerError::NoLockedStake)?;
        *self.free.entry(client).or_insert(0) += amount;
        Ok(())
    }

    /// Credits the disputer with the locked stake of every removed header.
    /// A missing entry indicates the relay and the ledger disagree about
    /// which headers were locked.
    pub fn reward_disputer(
        &mut self,
        disputer: ClientId,
        removed_headers: &[Hash32],
    ) -> Result<Amount, LedgerError> {
        for h in removed_headers {
            if !self.locked_by_header.contains_key(h) {
                return Err(LedgerError::Desync(*h));
            }
        }
        let mut credited = 0;
        for h in removed_headers {
            let (_, amount) = self.locked_by_header.remove(h).unwrap();
            credited += amount;
        }
        *self.free.entry(disputer).or_insert(0) += credited;
        Ok(credited)
    }

    pub fn pay_verification_fee(
        &mut self,
        requester: ClientId,
        submitter: ClientId,
        fee: Amount,
    ) -> Result<(), LedgerError> {
        if fee == 0 {
            return Ok(());
        }
        let free = self.free.entry(requester).or_insert(0);
        if *free < fee {
            return Err(LedgerError::InsufficientFunds);
        }
        *free -= fee;
        *self.fees_earned.entry(submitter).or_insert(0) += fee;
        Ok(())
    }
}

/// Minimum-fee quote: `min_fee` is the smallest integer amount strictly
/// greater than `submission_cost / expected_verifications`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct FeeQuote {
    pub submission_cost: Amount,
    pub expected_verifications: u64,
    pub min_fee: Amount,
}

pub fn min_verification_fee(
    submission_cost: Amount,
    expected_verifications: u64,
) -> Result<FeeQuote, LedgerError> {
    if expected_verifications == 0 {
        return Err(LedgerError::NoVerifications);
    }
    Ok(FeeQuote {
        submission_cost,
        expected_verifications,
        min_fee: submission_cost / expected_verifications + 1,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(b: u8) -> ClientId {
        ClientId::from_byte(b)
    }

    fn h(b: u8) -> Hash32 {
        Hash32([b; 32])
    }

    #[test]
    fn deposit_and_withdraw() {
        let mut ledger = StakeLedger::new(1);
        assert_eq!(
            ledger.deposit_stake(c(1), 0).unwrap_err(),
            LedgerError::ZeroDeposit
        );
        ledger.deposit_stake(c(1), 3).unwrap();
        ledger.deposit_stake(c(1), 4).unwrap();
        assert_eq!(ledger.free_balance(c(1)), 7);
        ledger.withdraw_stake(c(1), 7).unwrap();
        assert_eq!(ledger.free_balance(c(1)), 0);
    }

    #[test]
    fn locked_stake_cannot_be_withdrawn() {
        let mut ledger = StakeLedger::new(4);
        ledger.deposit_stake(c(1), 10).unwrap();
        ledger.lock_stake_for_header(c(1), h(1)).unwrap();
        assert_eq!(
            ledger.withdraw_stake(c(1), 7).unwrap_err(),
            LedgerError::InsufficientStake
        );
        ledger.withdraw_stake(c(1), 6).unwrap();
    }

    #[test]
    fn lock_release_round_trip() {
        let mut ledger = StakeLedger::new(1);
        ledger.deposit_stake(c(1), 2).unwrap();
        ledger.lock_stake_for_header(c(1), h(1)).unwrap();
        ledger.lock_stake_for_header(c(1), h(2)).unwrap();
        assert_eq!(ledger.free_balance(c(1)), 0);
        assert_eq!(ledger.locked_total(), 2);
        ledger.release_stake(h(1)).unwrap();
        assert_eq!(ledger.free_balance(c(1)), 1);
        assert_eq!(
            ledger.release_stake(h(1)).unwrap_err(),
            LedgerError::NoLockedStake
        );
    }

    #[test]
    fn lock_with_no_free_stake_fails() {
        let mut ledger = StakeLedger::new(1);
        assert_eq!(
            ledger.lock_stake_for_header(c(1), h(1)).unwrap_err(),
            LedgerError::InsufficientStake
        );
    }

    #[test]
    fn disputer_reward_sums_locked_stakes() {
        let mut ledger = StakeLedger::new(1);
        for i in 1..=3 {
            ledger.deposit_stake(c(i), 1).unwrap();
            ledger.lock_stake_for_header(c(i), h(i)).unwrap();
        }
        let before = ledger.total_units();
        let credited = ledger.reward_disputer(c(9), &[h(1), h(2), h(3)]).unwrap();
        assert_eq!(credited, 3);
        assert_eq!(ledger.free_balance(c(9)), 3);
        assert_eq!(ledger.total_units(), before);
        // entries consumed: a later release fails
        assert_eq!(
            ledger.release_stake(h(1)).unwrap_err(),
            LedgerError::NoLockedStake
        );
        // empty removal list is a no-op
        assert_eq!(ledger.reward_disputer(c(9), &[]).unwrap(), 0);
    }

    #[test]
    fn disputer_recovers_own_stake() {
        let mut ledger = StakeLedger::new(2);
        ledger.deposit_stake(c(1), 2).unwrap();
        ledger.deposit_stake(c(2), 2).unwrap();
        ledger.lock_stake_for_header(c(1), h(1)).unwrap();
        ledger.lock_stake_for_header(c(2), h(2)).unwrap();
        ledger.reward_disputer(c(1), &[h(1), h(2)]).unwrap();
        assert_eq!(ledger.free_balance(c(1)), 4);
        assert_eq!(ledger.free_balance(c(2)), 0);
    }

    #[test]
    fn verification_fee_flows_to_submitter() {
        let mut ledger = StakeLedger::new(1);
        ledger.deposit_stake(c(1), 5).unwrap();
        ledger.pay_verification_fee(c(1), c(2), 2).unwrap();
        assert_eq!(ledger.free_balance(c(1)), 3);
        assert_eq!(ledger.fees_earned(c(2)), 2);
        // zero fee is a no-op
        ledger.pay_verification_fee(c(1), c(2), 0).unwrap();
        assert_eq!(ledger.fees_earned(c(2)), 2);
        assert_eq!(
            ledger.pay_verification_fee(c(1), c(2), 10).unwrap_err(),
            LedgerError::InsufficientFunds
        );
    }

    #[test]
    fn repeated_fees_cover_submission_cost() {
        let mut ledger = StakeLedger::new(1);
        ledger.deposit_stake(c(1), 1_000_000).unwrap();
        let quote = min_verification_fee(284_041, 10).unwrap();
        for _ in 0..10 {
            ledger
                .pay_verification_fee(c(1), c(2), quote.min_fee)
                .unwrap();
        }
        assert!(ledger.fees_earned(c(2)) > 284_041);
    }

    #[test]
    fn min_fee_worked_example() {
        let quote = min_verification_fee(284_041, 10).unwrap();
        assert_eq!(quote.min_fee, 28_405);
        assert_eq!(min_verification_fee(100, 1).unwrap().min_fee, 101);
        assert_eq!(
            min_verification_fee(100, 0).unwrap_err(),
            LedgerError::NoVerifications
        );
        // exact division still yields a strictly greater fee
        assert_eq!(min_verification_fee(10, 5).unwrap().min_fee, 3);
    }
}
