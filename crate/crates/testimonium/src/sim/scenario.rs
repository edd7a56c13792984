use std::collections::{BTreeMap, BTreeSet};

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};

use crate::chain::{hash_header, ClientId, Hash32, HeaderValidator, MerkleTree};
use crate::cost::CostMeter;
use crate::incentives::Amount;
use crate::relay::{Relay, RelayConfig};

use super::generate::{generate_chain, mint_child, ChainGenConfig, GeneratedChain};
use super::SimError;

/// BAR-model client classes.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub enum BehaviorClass {
    Altruistic,
    /// Joins an attack iff the bribe beats both the threshold and the
    /// expected protocol profit.
    Rational { bribe_threshold: Amount },
    /// Follows the attacker's script.
    Byzantine,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub enum Role {
    Submitter,
    Disputer,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ScenarioClient {
    pub id: ClientId,
    pub role: Role,
    pub behavior: BehaviorClass,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub enum Attack {
    None,
    /// Pay disputers to ignore invalid headers during their lock periods.
    DisputeBribe { bribe: Amount, budget: Amount },
    /// Pay submitters to stop submitting true headers.
    SubmissionBribe { bribe: Amount, budget: Amount },
    /// Mint validity-passing headers whose Merkle roots commit to
    /// transactions absent from the true chain.
    ValidButIllegalTx,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Scenario {
    pub generator: ChainGenConfig,
    pub clients: Vec<ScenarioClient>,
    pub attack: Attack,
    pub ticks_per_block: u64,
    pub lock_period: u64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct LogEvent {
    pub tick: u64,
    pub actor: String,
    pub action: String,
    pub outcome: String,
    pub cost: u64,
}

#[derive(Clone, Debug, Default, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct ScenarioOutcome {
    /// Some verification-usable state was reached on an invalid-lineage
    /// (or fabricated-content) header.
    pub poisoning_succeeded: bool,
    pub illegal_header_ever_usable: bool,
    pub attacker_ever_main_head: bool,
    pub relay_head_matches_true_head: bool,
    pub ledger_deltas: BTreeMap<ClientId, i64>,
    pub total_deposited: Amount,
    pub total_bribes_paid: Amount,
    pub final_total_units: Amount,
    pub events: Vec<LogEvent>,
}

const ATTACKER: ClientId = ClientId([0xaa; 20]);
const CLIENT_FUNDING: Amount = 1_000_000;

struct AttackerState {
    tip_hash: Hash32,
    tip_height: u64,
    headers: BTreeSet<Hash32>,
    started: bool,
}

/// Drives the relay tick by tick. Disputers see every relay submission
/// instantly; there is no network latency.
pub fn run_scenario(scenario: &Scenario) -> Result<ScenarioOutcome, SimError> {
    if !scenario
        .clients
        .iter()
        .any(|c| c.role == Role::Submitter)
        && scenario.attack == Attack::None
    {
        return Err(SimError::BadScenario("at least one submitter required".into()));
    }
    if scenario.ticks_per_block == 0 {
        return Err(SimError::BadScenario("ticksPerBlock must be >= 1".into()));
    }

    let chain: GeneratedChain = generate_chain(&ChainGenConfig {
        invalid_header_rate: 0.0,
        ..scenario.generator.clone()
    })?;
    let key = chain.annotations.validator_key;
    let validator = HeaderValidator::keyed(key);
    let genesis = chain.records[0].clone();
    let mut relay = Relay::new(
        genesis.header.clone(),
        scenario.lock_period,
        RelayConfig::standard(),
        validator.clone(),
        1,
        CostMeter::default(),
    );

    let mut events: Vec<LogEvent> = Vec::new();
    let mut rng = ChaCha20Rng::seed_from_u64(scenario.generator.random_seed ^ 0x5eed);

    let mut total_deposited: Amount = 0;
    let mut initial_free: BTreeMap<ClientId, Amount> = BTreeMap::new();
    let fund = |relay: &mut Relay, id: ClientId| {
        relay
            .ledger_mut()
            .deposit_stake(id, CLIENT_FUNDING)
            .expect("positive deposit");
    };
    for c in &scenario.clients {
        fund(&mut relay, c.id);
        total_deposited += CLIENT_FUNDING;
        initial_free.insert(c.id, CLIENT_FUNDING);
    }
    fund(&mut relay, ATTACKER);
    total_deposited += CLIENT_FUNDING;
    initial_free.insert(ATTACKER, CLIENT_FUNDING);

    let mut attacker = AttackerState {
        tip_hash: relay.genesis_hash(),
        tip_height: genesis.header.block_height,
        headers: BTreeSet::new(),
        started: false,
    };
    let mut invalid_lineage: BTreeSet<Hash32> = BTreeSet::new();
    let mut bribed: BTreeSet<ClientId> = BTreeSet::new();
    let mut bribes_paid: Amount = 0;
    let mut next_record = 1usize; // genesis is pre-loaded
    let mut outcome = ScenarioOutcome::default();

    let total_ticks =
        chain.records.len() as u64 * scenario.ticks_per_block + scenario.lock_period + 3;

    for tick in 1..=total_ticks {
        relay.advance_clock(1);

        // headers released by the source chain up to this tick
        let released = ((tick / scenario.ticks_per_block) as usize + 1).min(chain.records.len());

        // submitters act in declared order
        for client in scenario.clients.iter().filter(|c| c.role == Role::Submitter) {
            let joins_attack = match (client.behavior, scenario.attack) {
                (BehaviorClass::Altruistic, _) => false,
                (
                    BehaviorClass::Rational { bribe_threshold },
                    Attack::SubmissionBribe { bribe, budget },
                ) => {
                    if bribed.contains(&client.id) {
                        true
                    } else if attacker.started
                        && bribe > bribe_threshold
                        && bribes_paid + bribe <= budget
                    {
                        bribed.insert(client.id);
                        bribes_paid += bribe;
                        relay
                            .ledger_mut()
                            .deposit_stake(client.id, bribe)
                            .expect("positive bribe");
                        events.push(LogEvent {
                            tick,
                            actor: client.id.to_string(),
                            action: "acceptBribe".into(),
                            outcome: "stopsSubmitting".into(),
                            cost: 0,
                        });
                        true
                    } else {
                        false
                    }
                }
                (BehaviorClass::Rational { .. }, _) => false,
                (BehaviorClass::Byzantine, _) => true,
            };
            if joins_attack {
                continue;
            }
            while next_record < released {
                let record = &chain.records[next_record];
                let before = relay.meter().total();
                let ok = relay.submit_block_header(&record.header, client.id)?;
                events.push(LogEvent {
                    tick,
                    actor: client.id.to_string(),
                    action: "submit".into(),
                    outcome: if ok { "accepted" } else { "rejected" }.into(),
                    cost: relay.meter().total() - before,
                });
                next_record += 1;
            }
        }

        // attacker mints one header per block interval, at most as long as
        // the source chain runs
        if scenario.attack != Attack::None
            && tick % scenario.ticks_per_block == 0
            && tick <= chain.records.len() as u64 * scenario.ticks_per_block
        {
            if !attacker.started {
                attacker.started = true;
                // fork below the tip: the attacker offers an alternative
                // branch, competing with the honest child already in place
                let head = relay.main_chain_head();
                let parent = relay.header_meta(head).map(|m| m.parent_hash);
                let anchor = match parent {
                    Some(p) if relay.contains_header(p) => p,
                    _ => head,
                };
                attacker.tip_hash = anchor;
                attacker.tip_height = relay
                    .header_record(anchor)
                    .map(|r| r.block_height())
                    .unwrap_or(0);
            }
            let mut fake_tx = [0u8; 32];
            rng.fill_bytes(&mut fake_tx);
            let fake_root = MerkleTree::build(&[crate::chain::TransactionId(Hash32(fake_tx))])
                .expect("non-empty")
                .root();
            let (difficulty, minted_key) = match scenario.attack {
                // no proof-of-work to solve: mint heavy invalid headers fast
                Attack::DisputeBribe { .. } => (scenario.generator.difficulty_max * 3, None),
                // valid headers cannot exceed the honest network's rate or
                // weight, so the attacker's difficulty stays well below range
                _ => ((scenario.generator.difficulty_min / 2).max(1), Some(&key)),
            };
            let header = mint_child(
                attacker.tip_hash,
                attacker.tip_height,
                difficulty,
                tick,
                fake_root,
                minted_key,
            );
            let hash = hash_header(&header);
            let before = relay.meter().total();
            let ok = relay.submit_block_header(&header, ATTACKER)?;
            events.push(LogEvent {
                tick,
                actor: ATTACKER.to_string(),
                action: "submitAttackHeader".into(),
                outcome: if ok { "accepted" } else { "rejected" }.into(),
                cost: relay.meter().total() - before,
            });
            if ok {
                attacker.tip_hash = hash;
                attacker.tip_height += 1;
                attacker.headers.insert(hash);
                if minted_key.is_none() {
                    invalid_lineage.insert(hash);
                }
            }
        }

        // disputers act in declared order
        for client in scenario.clients.iter().filter(|c| c.role == Role::Disputer) {
            let joins_attack = match (client.behavior, scenario.attack) {
                (BehaviorClass::Altruistic, _) => false,
                (
                    BehaviorClass::Rational { bribe_threshold },
                    Attack::DisputeBribe { bribe, budget },
                ) => {
                    if bribed.contains(&client.id) {
                        true
                    } else {
                        // expected protocol profit: stakes forfeitable right now
                        let expected_reward = invalid_lineage
                            .iter()
                            .filter(|h| relay.is_locked(**h) == Some(true))
                            .count() as Amount
                            * relay.ledger().required_stake_per_header;
                        if bribe > bribe_threshold
                            && bribe > expected_reward
                            && bribes_paid + bribe <= budget
                        {
                            bribed.insert(client.id);
                            bribes_paid += bribe;
                            relay
                                .ledger_mut()
                                .deposit_stake(client.id, bribe)
                                .expect("positive bribe");
                            events.push(LogEvent {
                                tick,
                                actor: client.id.to_string(),
                                action: "acceptBribe".into(),
                                outcome: "stopsDisputing".into(),
                                cost: 0,
                            });
                            true
                        } else {
                            false
                        }
                    }
                }
                (BehaviorClass::Rational { .. }, _) => false,
                (BehaviorClass::Byzantine, _) => true,
            };
            if joins_attack {
                continue;
            }
            // dispute every locked invalid header currently stored
            loop {
                let target = invalid_lineage
                    .iter()
                    .copied()
                    .find(|h| relay.is_locked(*h) == Some(true));
                let Some(target) = target else { break };
                let before = relay.meter().total();
                let removed = relay.dispute_header(target, client.id, None)?;
                events.push(LogEvent {
                    tick,
                    actor: client.id.to_string(),
                    action: "dispute".into(),
                    outcome: format!("removed {} headers", removed.len()),
                    cost: relay.meter().total() - before,
                });
                if removed.is_empty() {
                    break;
                }
                // the attacker re-anchors on the honest chain after a prune
                attacker.started = false;
            }
        }

        // poisoning checks
        let head = relay.main_chain_head();
        if attacker.headers.contains(&head) {
            outcome.attacker_ever_main_head = true;
        }
        for h in &attacker.headers {
            if relay.is_locked(*h) == Some(false) {
                let usable = relay.is_part_of_main_chain(*h)?.on_main_chain;
                if usable {
                    outcome.illegal_header_ever_usable = true;
                }
            }
        }
    }

    outcome.poisoning_succeeded = outcome.illegal_header_ever_usable;
    outcome.relay_head_matches_true_head =
        relay.main_chain_head() == chain.annotations.true_head;
    for (id, initial) in &initial_free {
        let final_units = relay.ledger().free_balance(*id) + relay.ledger().fees_earned(*id);
        outcome
            .ledger_deltas
            .insert(*id, final_units as i64 - *initial as i64);
    }
    outcome.total_deposited = total_deposited;
    outcome.total_bribes_paid = bribes_paid;
    outcome.final_total_units = relay.ledger().total_units();
    outcome.events = events;
    Ok(outcome)
}
