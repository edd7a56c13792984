use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use testimonium::chain::{ClientId, Hash32, HeaderValidator, MerkleTree};
use testimonium::cost::{
    replay_dataset, run_comparison, ComparisonSpec, CostMeter, CostSchedule, Experiment,
    PrototypeMode,
};
use testimonium::dataset::{read_dataset, write_dataset};
use testimonium::relay::Relay;
use testimonium::sim::{
    generate_chain, run_scenario, Attack, BehaviorClass, ChainGenConfig, Role, Scenario,
    ScenarioClient,
};

#[derive(Parser)]
#[command(name = "testimonium", version, about = "Block-header relay simulator and cost meter")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct GenArgs {
    /// Number of headers, genesis included
    #[arg(long, default_value_t = 1000)]
    length: usize,
    /// Per-step probability of a side header
    #[arg(long, default_value_t = 0.02)]
    branch_probability: f64,
    /// Fraction of side headers minted invalid
    #[arg(long, default_value_t = 0.0)]
    invalid_rate: f64,
    /// Maximum fork depth below the tip
    #[arg(long, default_value_t = 5)]
    branch_max_depth: usize,
    #[arg(long, env = "TESTIMONIUM_SEED", default_value_t = 1)]
    seed: u64,
}

impl GenArgs {
    fn config(&self) -> ChainGenConfig {
        ChainGenConfig {
            length: self.length,
            branch_probability: self.branch_probability,
            invalid_header_rate: self.invalid_rate,
            branch_max_depth: self.branch_max_depth,
            random_seed: self.seed,
            ..Default::default()
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic header stream plus its ground-truth sidecar
    Generate {
        #[command(flatten)]
        gen: GenArgs,
        /// Output path; the sidecar lands at <out>.ann
        #[arg(long)]
        out: PathBuf,
    },
    /// Replay a dataset into a relay and check the recorded junctions
    Replay {
        #[arg(long)]
        dataset: PathBuf,
        /// baseline, t1, or t2
        #[arg(long, default_value = "t1")]
        mode: String,
        #[arg(long, default_value_t = 5)]
        lock_period: u64,
    },
    /// Replay into all three prototypes and report per-operation costs
    Compare {
        /// Existing dataset; omitted means generate on the fly
        #[arg(long)]
        dataset: Option<PathBuf>,
        #[command(flatten)]
        gen: GenArgs,
        /// verification or dispute
        #[arg(long, default_value = "verification")]
        experiment: String,
        /// Probe every n-th submission
        #[arg(long, default_value_t = 1)]
        sample_every: usize,
        #[arg(long, default_value_t = 5)]
        lock_period: u64,
        /// JSON file overriding the cost schedule
        #[arg(long)]
        schedule: Option<PathBuf>,
        /// Directory receiving costs.csv and summary.json
        #[arg(long)]
        report: Option<PathBuf>,
    },
    /// Run an adversarial scenario against the relay
    Attack {
        /// none, dispute-bribe, submission-bribe, or valid-but-illegal
        #[arg(long)]
        scenario: String,
        #[command(flatten)]
        gen: GenArgs,
        #[arg(long, default_value_t = 5)]
        lock_period: u64,
        #[arg(long, default_value_t = 50)]
        bribe: u64,
        #[arg(long, default_value_t = 500)]
        budget: u64,
        /// Drop the altruistic member of the attacked role
        #[arg(long, default_value_t = false)]
        no_altruist: bool,
        /// Directory receiving events.jsonl and summary.json
        #[arg(long)]
        report: Option<PathBuf>,
    },
    /// Replay a dataset, then verify a transaction inclusion on the relay
    Verify {
        #[arg(long)]
        dataset: PathBuf,
        /// Target block hash; defaults to the genesis block
        #[arg(long)]
        block: Option<String>,
        #[arg(long, default_value_t = 0)]
        confirmations: u64,
        #[arg(long, default_value = "t1")]
        mode: String,
        #[arg(long, default_value_t = 5)]
        lock_period: u64,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(ok) => {
            if ok {
                ExitCode::SUCCESS
            } else {
                ExitCode::from(1)
            }
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}

fn parse_mode(s: &str) -> Result<PrototypeMode, String> {
    PrototypeMode::parse(s).ok_or_else(|| format!("unknown mode '{s}'"))
}

/// `Ok(false)` means the command ran but its check failed (exit 1).
fn run(cli: Cli) -> Result<bool, Box<dyn std::error::Error>> {
    match cli.command {
        Command::Generate { gen, out } => {
            let chain = generate_chain(&gen.config())?;
            write_dataset(&out, &chain)?;
            println!(
                "wrote {} headers to {} ({} junctions, head {})",
                chain.records.len(),
                out.display(),
                chain.annotations.junctions.len(),
                chain.annotations.true_head
            );
            Ok(true)
        }
        Command::Replay {
            dataset,
            mode,
            lock_period,
        } => {
            let chain = read_dataset(&dataset)?;
            let mode = parse_mode(&mode)?;
            let validator = if chain.annotations.per_header.is_empty() {
                HeaderValidator::permissive()
            } else {
                HeaderValidator::keyed(chain.annotations.validator_key)
            };
            let mut relay = Relay::new(
                chain.records[0].header.clone(),
                lock_period,
                mode.relay_config(),
                validator,
                1,
                CostMeter::default(),
            );
            let report = replay_dataset(&chain, &mut relay)?;
            println!("{}", serde_json::to_string_pretty(&report)?);
            Ok(report.junction_match != Some(false))
        }
        Command::Compare {
            dataset,
            gen,
            experiment,
            sample_every,
            lock_period,
            schedule,
            report,
        } => {
            let chain = match dataset {
                Some(path) => read_dataset(&path)?,
                None => generate_chain(&gen.config())?,
            };
            let experiment = match experiment.as_str() {
                "verification" => Experiment::Verification,
                "dispute" => Experiment::Dispute,
                other => return Err(format!("unknown experiment '{other}'").into()),
            };
            let schedule = match schedule {
                Some(path) => serde_json::from_str(&fs::read_to_string(path)?)?,
                None => CostSchedule::default(),
            };
            let spec = ComparisonSpec {
                experiment,
                sample_every,
                lock_period,
                schedule,
                ..Default::default()
            };
            let cost_report = run_comparison(&chain, &spec)?;
            println!(
                "{}",
                serde_json::to_string_pretty(&cost_report.summary)?
            );
            if let Some(dir) = report {
                fs::create_dir_all(&dir)?;
                fs::write(dir.join("costs.csv"), cost_report.to_csv())?;
                fs::write(
                    dir.join("summary.json"),
                    serde_json::to_vec_pretty(&cost_report.summary)?,
                )?;
            }
            Ok(true)
        }
        Command::Attack {
            scenario,
            gen,
            lock_period,
            bribe,
            budget,
            no_altruist,
            report,
        } => {
            let attack = match scenario.as_str() {
                "none" => Attack::None,
                "dispute-bribe" => Attack::DisputeBribe { bribe, budget },
                "submission-bribe" => Attack::SubmissionBribe { bribe, budget },
                "valid-but-illegal" => Attack::ValidButIllegalTx,
                other => return Err(format!("unknown scenario '{other}'").into()),
            };
            let mut clients = Vec::new();
            let rational = BehaviorClass::Rational { bribe_threshold: 10 };
            let attacked_role = match attack {
                Attack::DisputeBribe { .. } => Role::Disputer,
                _ => Role::Submitter,
            };
            let mut next = 1u8;
            let mut add = |role, behavior, next: &mut u8| {
                clients.push(ScenarioClient {
                    id: ClientId::from_byte(0x10 + *next),
                    role,
                    behavior,
                });
                *next += 1;
            };
            for role in [Role::Submitter, Role::Disputer] {
                if !(no_altruist && role == attacked_role) {
                    add(role, BehaviorClass::Altruistic, &mut next);
                }
                if role == attacked_role {
                    add(role, rational, &mut next);
                    add(role, rational, &mut next);
                }
            }
            let scenario = Scenario {
                generator: gen.config(),
                clients,
                attack,
                ticks_per_block: 1,
                lock_period,
            };
            let outcome = run_scenario(&scenario)?;
            let mut summary = serde_json::to_value(&outcome)?;
            summary.as_object_mut().unwrap().remove("events");
            println!("{}", serde_json::to_string_pretty(&summary)?);
            if let Some(dir) = report {
                fs::create_dir_all(&dir)?;
                let mut events = String::new();
                for e in &outcome.events {
                    events.push_str(&serde_json::to_string(e)?);
                    events.push('\n');
                }
                fs::write(dir.join("events.jsonl"), events)?;
                fs::write(dir.join("summary.json"), serde_json::to_vec_pretty(&summary)?)?;
            }
            Ok(!outcome.poisoning_succeeded)
        }
        Command::Verify {
            dataset,
            block,
            confirmations,
            mode,
            lock_period,
        } => {
            let chain = read_dataset(&dataset)?;
            if chain.annotations.per_header.is_empty() {
                return Err("verification needs the ground-truth sidecar".into());
            }
            let mode = parse_mode(&mode)?;
            let validator = HeaderValidator::keyed(chain.annotations.validator_key);
            let mut relay = Relay::new(
                chain.records[0].header.clone(),
                lock_period,
                mode.relay_config(),
                validator,
                1,
                CostMeter::default(),
            );
            replay_dataset(&chain, &mut relay)?;
            // let every lock expire so confirmation counting can succeed
            relay.advance_clock(lock_period + 1);
            let target = match block {
                Some(s) => Hash32::from_hex(&s)?,
                None => chain.records[0].hash,
            };
            let txs = &chain
                .annotations
                .per_header
                .get(&target)
                .ok_or("target block is not in the dataset")?
                .tx_ids;
            let tree = MerkleTree::build(txs)?;
            let proof = tree.prove(&txs[0])?;
            let full = chain
                .records
                .iter()
                .find(|r| r.hash == target)
                .map(|r| &r.header);
            let requester = ClientId::from_byte(0xfe);
            relay.ledger_mut().deposit_stake(requester, 1_000)?;
            let outcome = relay.verify_transaction_inclusion(
                txs[0],
                target,
                confirmations,
                &proof,
                requester,
                0,
                if relay.needs_full_header() { full } else { None },
            )?;
            println!(
                "block {target}: inclusion {} ({} headers visited)",
                if outcome.accepted { "accepted" } else { "rejected" },
                outcome.search_visits
            );
            Ok(outcome.accepted)
        }
    }
}
