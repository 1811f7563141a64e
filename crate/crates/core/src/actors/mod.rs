//! Block-synchronous simulation of the device, the gateway and the two
//! third-party pools.
//!
//! Each tick, the gateway and the pools observe the chain through a logging
//! port and act, all queued messages are delivered until none remain, and
//! one block is mined. The device never receives a chain handle: everything
//! it learns arrives in its inbox.

mod sim;

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize, Serializer};
use thiserror::Error;

use crate::channel::{ChannelDescriptor, ChannelError};
use crate::crypto::MasterSeed;
use crate::game::{GameConfig, Split};
use crate::ledger::{OutPoint, Txid};

pub use sim::Simulation;

pub const DEFAULT_HORIZON: u64 = 200;
pub const DEFAULT_FUNDING_DEPTH: u64 = 6;

fn default_horizon() -> u64 {
    DEFAULT_HORIZON
}

fn default_funding_depth() -> u64 {
    DEFAULT_FUNDING_DEPTH
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum ActorRole {
    Device,
    Gateway,
    Publisher(usize),
    Watchdog(usize),
}

impl fmt::Display for ActorRole {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ActorRole::Device => write!(f, "device"),
            ActorRole::Gateway => write!(f, "gateway"),
            ActorRole::Publisher(i) => write!(f, "publisher.{i}"),
            ActorRole::Watchdog(i) => write!(f, "watchdog.{i}"),
        }
    }
}

impl Serialize for ActorRole {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Strategy {
    Honest,
    /// Publish the commitment of this revoked state instead of closing.
    PublishRevoked(u32),
    /// Drop transactions that hurt the gateway in exchange for this bribe,
    /// paid to the whole publisher pool.
    ColludePublisher(u64),
    /// Stay silent on a breach in exchange for this bribe, paid to the whole
    /// watchdog pool.
    ColludeWatchdog(u64),
    WatchdogSilent,
    PublisherDrop,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Strategies {
    pub device: Strategy,
    pub gateway: Strategy,
    pub publisher: Vec<Strategy>,
    pub watchdog: Vec<Strategy>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScenarioConfig {
    pub channel: ChannelDescriptor,
    /// Device balance of each successive state after the initial one.
    pub updates: Vec<u64>,
    pub strategies: Strategies,
    #[serde(default = "default_horizon")]
    pub horizon: u64,
    #[serde(default)]
    pub miner_fee: u64,
    /// Blocks the funding transaction needs before the channel is used.
    #[serde(default = "default_funding_depth")]
    pub funding_depth: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pool_seed: Option<MasterSeed>,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ScenarioError {
    #[error("invalid scenario: {0}")]
    ConfigInvalid(String),
    #[error("settlement not reached within {} blocks", .0.horizon)]
    HorizonExceeded(Box<ScenarioTrace>),
    #[error("trace has not settled")]
    Unsettled,
    #[error("channel: {0}")]
    Channel(#[from] ChannelError),
}

impl ScenarioConfig {
    /// Index of the last channel state.
    pub fn final_index(&self) -> u32 {
        self.updates.len() as u32 + 1
    }

    /// `(device, gateway)` balances of every state, starting at state 1.
    pub fn balances(&self) -> Vec<(u64, u64)> {
        let p = &self.channel.params;
        let cap = p.capacity();
        std::iter::once((p.omega_a, p.omega_b))
            .chain(self.updates.iter().map(|&a| (a, cap.saturating_sub(a))))
            .collect()
    }

    pub fn validate(&self) -> Result<(), ScenarioError> {
        let bad = |m: String| Err(ScenarioError::ConfigInvalid(m));
        let p = &self.channel.params;
        p.validate()?;
        if self.horizon == 0 || self.funding_depth == 0 {
            return bad("horizon and funding_depth must be positive".into());
        }
        if self.final_index() > p.max_states {
            return bad(format!("{} states exceed max_states {}", self.final_index(), p.max_states));
        }
        for &a in &self.updates {
            if a > p.capacity() {
                return bad(format!("update balance {a} exceeds capacity {}", p.capacity()));
            }
        }
        for (j, (a, b)) in self.balances().into_iter().enumerate() {
            if a < p.sigma1.saturating_add(self.miner_fee) || b < self.miner_fee {
                return bad(format!("state {} cannot fund its commitment fees", j + 1));
            }
        }
        let s = &self.strategies;
        if s.publisher.len() != p.k1 || s.watchdog.len() != p.k2 {
            return bad("one strategy per pool member required".into());
        }
        for (who, st) in [("device", s.device), ("gateway", s.gateway)] {
            match st {
                Strategy::Honest => {}
                Strategy::PublishRevoked(j) if j >= 1 && j < self.final_index() => {}
                Strategy::PublishRevoked(j) => return bad(format!("{who} cannot publish state {j}: not revoked")),
                other => return bad(format!("{who} cannot play {other:?}")),
            }
        }
        if s.device != Strategy::Honest && s.gateway != Strategy::Honest {
            return bad("at most one channel party may cheat".into());
        }
        for st in &s.publisher {
            if !matches!(st, Strategy::Honest | Strategy::PublisherDrop | Strategy::ColludePublisher(_)) {
                return bad(format!("publisher cannot play {st:?}"));
            }
        }
        for st in &s.watchdog {
            if !matches!(st, Strategy::Honest | Strategy::WatchdogSilent | Strategy::ColludeWatchdog(_)) {
                return bad(format!("watchdog cannot play {st:?}"));
            }
        }
        Ok(())
    }
}

/// Pool bribe if every member colludes for the same amount.
pub(crate) fn unanimous_bribe(members: &[Strategy]) -> Option<u64> {
    let first = match members.first()? {
        Strategy::ColludePublisher(b) | Strategy::ColludeWatchdog(b) => *b,
        _ => return None,
    };
    members
        .iter()
        .all(|s| matches!(s, Strategy::ColludePublisher(b) | Strategy::ColludeWatchdog(b) if *b == first))
        .then_some(first)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum TxLabel {
    Seed,
    Funding,
    MutualClose,
    CommitmentA(u32),
    CommitmentB(u32),
    BreachRemedy(u32),
    Recovery(u32),
    TimelockClaim,
    PoolClaim,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
#[serde(tag = "event", rename_all = "snake_case")]
pub enum EventKind {
    Block {
        height: u64,
        txids: Vec<Txid>,
    },
    Confirmed {
        txid: Txid,
        label: TxLabel,
        height: u64,
    },
    ChainRead {
        query: String,
    },
    Submit {
        txid: Txid,
        label: TxLabel,
        accepted: bool,
        #[serde(skip_serializing_if = "Option::is_none")]
        error: Option<String>,
    },
    Message {
        to: ActorRole,
        message: &'static str,
    },
    StateUpdated {
        index: u32,
        balance_a: u64,
        balance_b: u64,
    },
    Dropped {
        label: TxLabel,
        reason: &'static str,
    },
    Bribe {
        pool: &'static str,
        amount: u64,
    },
    Note {
        text: String,
    },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct TraceEvent {
    pub tick: u64,
    /// `None` for events emitted by the ledger itself.
    #[serde(serialize_with = "actor_or_ledger")]
    pub actor: Option<ActorRole>,
    #[serde(flatten)]
    pub kind: EventKind,
}

fn actor_or_ledger<S: Serializer>(a: &Option<ActorRole>, s: S) -> Result<S::Ok, S::Error> {
    match a {
        Some(a) => s.collect_str(a),
        None => s.serialize_str("ledger"),
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct OnChainTx {
    pub txid: Txid,
    pub label: TxLabel,
    pub height: u64,
    pub fee: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct UtxoRecord {
    pub outpoint: OutPoint,
    pub value: u64,
    pub owner: Option<ActorRole>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct BribeRecord {
    pub pool: &'static str,
    pub members: usize,
    pub amount: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ScenarioTrace {
    pub horizon: u64,
    pub terminated: bool,
    pub final_height: u64,
    pub events: Vec<TraceEvent>,
    pub on_chain: Vec<OnChainTx>,
    pub utxo: Vec<UtxoRecord>,
    pub bribes: Vec<BribeRecord>,
    pub seeded_value: u64,
    pub total_fees: u64,
}

impl ScenarioTrace {
    /// One JSON object per event, newline separated.
    pub fn to_json_lines(&self) -> String {
        let mut out = String::new();
        for e in &self.events {
            out.push_str(&serde_json::to_string(e).expect("events serialize"));
            out.push('\n');
        }
        out
    }

    /// Confirmed transactions other than coinbase seeds.
    pub fn channel_txs(&self) -> impl Iterator<Item = &OnChainTx> {
        self.on_chain.iter().filter(|t| t.label != TxLabel::Seed)
    }

    pub fn confirmed(&self, pred: impl Fn(TxLabel) -> bool) -> Option<&OnChainTx> {
        self.on_chain.iter().find(|t| pred(t.label))
    }
}

/// Final holdings per actor: owned unspent outputs plus off-chain bribes.
pub fn settle(trace: &ScenarioTrace, k1: usize, k2: usize) -> Result<BTreeMap<ActorRole, i64>, ScenarioError> {
    if !trace.terminated {
        return Err(ScenarioError::Unsettled);
    }
    let mut out: BTreeMap<ActorRole, i64> = [ActorRole::Device, ActorRole::Gateway]
        .into_iter()
        .chain((0..k1).map(ActorRole::Publisher))
        .chain((0..k2).map(ActorRole::Watchdog))
        .map(|a| (a, 0))
        .collect();
    for u in &trace.utxo {
        let owner = u.owner.ok_or(ScenarioError::Unsettled)?;
        *out.entry(owner).or_default() += u.value as i64;
    }
    for b in &trace.bribes {
        *out.entry(ActorRole::Gateway).or_default() -= b.amount as i64;
        let (share, rest) = (b.amount / b.members as u64, b.amount % b.members as u64);
        for i in 0..b.members {
            let role = if b.pool == "publisher" {
                ActorRole::Publisher(i)
            } else {
                ActorRole::Watchdog(i)
            };
            *out.entry(role).or_default() += (share + u64::from((i as u64) < rest)) as i64;
        }
    }
    Ok(out)
}

/// Sum of a pool's settled values.
pub fn pool_total(settled: &BTreeMap<ActorRole, i64>, publishers: bool) -> i64 {
    settled
        .iter()
        .filter(|(a, _)| matches!((a, publishers), (ActorRole::Publisher(_), true) | (ActorRole::Watchdog(_), false)))
        .map(|(_, v)| v)
        .sum()
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("device touched the chain at tick {}: {:?}", .0.tick, .0.kind)]
pub struct Violation(pub TraceEvent);

/// `Ok` iff no event shows the device reading or writing the chain.
pub fn device_interface_audit(trace: &ScenarioTrace) -> Result<(), Violation> {
    match trace.events.iter().find(|e| {
        e.actor == Some(ActorRole::Device) && matches!(e.kind, EventKind::ChainRead { .. } | EventKind::Submit { .. })
    }) {
        Some(e) => Err(Violation(e.clone())),
        None => Ok(()),
    }
}

pub fn run_scenario(config: &ScenarioConfig) -> Result<ScenarioTrace, ScenarioError> {
    Simulation::new(config)?.run()
}

/// Game whose states are the scenario's current state (`tx1`) and the
/// states most and least favourable to the gateway (`tx2`, `tx3`), with
/// bribes taken from colluding pools.
pub fn game_config(config: &ScenarioConfig) -> GameConfig {
    let p = &config.channel.params;
    let states: Vec<Split> = config
        .balances()
        .into_iter()
        .map(|(device, gateway)| Split {
            alpha: gateway,
            beta: device,
        })
        .collect();
    let current = *states.last().expect("at least one state");
    let max = *states.iter().max_by_key(|s| s.alpha).expect("non-empty");
    let min = *states.iter().min_by_key(|s| s.alpha).expect("non-empty");
    GameConfig {
        tx1: current,
        tx2: max,
        tx3: min,
        sigma1: p.sigma1,
        gamma1: p.gamma1,
        sigma2: unanimous_bribe(&config.strategies.publisher),
        gamma2: unanimous_bribe(&config.strategies.watchdog),
        k1: p.k1,
        k2: p.k2,
    }
}

#[cfg(test)]
mod tests;
