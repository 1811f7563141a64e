//! Channel construction and evolution between a device (party A) and a
//! gateway (party B).
//!
//! Every state `j` owns three key slots per party. Slot `a` receives the
//! timelocked to-self output, slot `b` receives the counterparty's
//! payment, and slot `c` is revealed to the counterparty when the state is
//! revoked. The device needs only its master seed and the current index to
//! re-derive all of its keys.

mod keys;
mod tx;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use keys::{default_pool_seed, PartyKeys, PoolKeys, StateKeys, StatePubkeys};
pub use tx::{
    attach_close_signatures, build_breach_remedy, build_commitment_pair, build_funding_tx, build_recovery_tx,
    commitment_tx_a, commitment_tx_b, mutual_close_tx, p2pkh_claim, pool_claim, recovery_tx_unsigned, recovery_witness,
    sign_input, timelock_claim, with_funding_witness, BreachTiming, ChannelSetup, CommitmentKeys, CommitmentPair,
    RecoverySignatures, SpendableInput,
};

use crate::crypto::{Keypair, MasterSeed, Party, SecretKey};
use crate::ledger::{OutPoint, Transaction};
use crate::script::MAX_MULTISIG_KEYS;
use crate::Rational;

pub const DEFAULT_MAX_STATES: u32 = 1024;

fn default_max_states() -> u32 {
    DEFAULT_MAX_STATES
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ChannelError {
    #[error("invalid channel parameters: {0}")]
    InvalidParams(String),
    #[error("insufficient funds: need {needed}, have {available}")]
    InsufficientFunds { needed: u64, available: u64 },
    #[error("value overflow")]
    ValueOverflow,
    #[error("state {0} outside the channel's key capacity")]
    StateExhausted(u32),
    #[error("budget exceeded: {0}")]
    BudgetExceeded(&'static str),
    #[error("channel closed")]
    ChannelClosed,
    #[error("channel not funded")]
    NotOpen,
    #[error("balance {0} outside channel capacity")]
    BalanceOutOfRange(u64),
    #[error("missing signature from {0:?}")]
    MissingSignature(Party),
    #[error("revocation window expired")]
    WindowExpired,
    #[error("state {0} is not revoked")]
    NotRevoked(u32),
    #[error("pool member {0} does not exist")]
    BadMemberIndex(usize),
    #[error("no states given")]
    EmptyStates,
    #[error("transaction is not a commitment of this channel")]
    UnknownCommitment,
}

/// Channel configuration fixed at open.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChannelParams {
    pub omega_a: u64,
    pub omega_b: u64,
    pub w: u32,
    pub k1: usize,
    pub k2: usize,
    pub sigma1: u64,
    pub gamma1: u64,
    #[serde(default = "default_max_states")]
    pub max_states: u32,
}

impl ChannelParams {
    pub fn capacity(&self) -> u64 {
        self.omega_a.saturating_add(self.omega_b)
    }

    pub fn validate(&self) -> Result<(), ChannelError> {
        let bad = |m: &str| Err(ChannelError::InvalidParams(m.to_string()));
        let capacity = self.omega_a.checked_add(self.omega_b).ok_or(ChannelError::ValueOverflow)?;
        if capacity == 0 {
            return bad("channel must hold funds");
        }
        if self.w == 0 {
            return bad("w must be at least 1");
        }
        for k in [self.k1, self.k2] {
            if k == 0 || k > MAX_MULTISIG_KEYS {
                return bad("pool sizes must be within 1..=15");
            }
        }
        if self.max_states == 0 {
            return bad("max_states must be at least 1");
        }
        match self.sigma1.checked_add(self.gamma1) {
            Some(f) if f < capacity => Ok(()),
            _ => bad("sigma1 + gamma1 must be below channel capacity"),
        }
    }
}

/// Channel descriptor: parameters plus both parties' master seeds.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChannelDescriptor {
    #[serde(flatten)]
    pub params: ChannelParams,
    pub master_seed_a: MasterSeed,
    pub master_seed_b: MasterSeed,
}

/// One channel state. Balances always sum to the channel capacity.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChannelState {
    pub index: u32,
    pub balance_a: u64,
    pub balance_b: u64,
    pub revoked: bool,
    /// A's slot-c secret, held by B once revoked.
    #[serde(skip)]
    pub revocation_secret_a: Option<SecretKey>,
    /// B's slot-c secret, held by A once revoked.
    #[serde(skip)]
    pub revocation_secret_b: Option<SecretKey>,
}

impl ChannelState {
    pub fn new(index: u32, balance_a: u64, balance_b: u64) -> Self {
        ChannelState {
            index,
            balance_a,
            balance_b,
            revoked: false,
            revocation_secret_a: None,
            revocation_secret_b: None,
        }
    }
}

/// Slot-c secrets the two parties exchange when revoking a state.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RevocationMessages {
    pub state_index: u32,
    pub from_a: SecretKey,
    pub from_b: SecretKey,
}

/// Everything the device persists: its seed, the current index and
/// balances. No derived secret is ever stored.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DeviceStorage {
    pub master_seed: MasterSeed,
    pub state_index: u32,
    pub balance_a: u64,
    pub balance_b: u64,
}

impl DeviceStorage {
    pub fn keys(&self) -> PartyKeys {
        PartyKeys::new(Party::A, self.master_seed)
    }
}

/// Lower bounds on the pool fees that make collusion unprofitable.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FeeBounds {
    pub ok: bool,
    pub sigma1_min: Rational,
    pub gamma1_min: Rational,
}

/// Smallest whole-satoshi value not below `r`.
pub fn ceil_sats(r: &Rational) -> i128 {
    r.ceil().to_integer()
}

/// `gap / k` as an exact rational.
pub fn fee_bound(gap: u64, k: usize) -> Rational {
    Rational::new(gap as i128, k as i128)
}

/// Fee floors over the balance spread of `states`. Fees must strictly
/// exceed the floors.
pub fn check_fee_bounds(params: &ChannelParams, states: &[ChannelState]) -> Result<FeeBounds, ChannelError> {
    let max = states.iter().map(|s| s.balance_a).max().ok_or(ChannelError::EmptyStates)?;
    let min = states.iter().map(|s| s.balance_a).min().ok_or(ChannelError::EmptyStates)?;
    let sigma1_min = fee_bound(max - min, params.k1);
    let gamma1_min = fee_bound(max - min, params.k2);
    let ok = Rational::from(params.sigma1 as i128) > sigma1_min && Rational::from(params.gamma1 as i128) > gamma1_min;
    Ok(FeeBounds {
        ok,
        sigma1_min,
        gamma1_min,
    })
}

/// Both parties' view of one channel. The actor simulation splits this into
/// separate device and gateway values; this type serves builders and tests
/// that need both sides at once.
#[derive(Debug, Clone)]
pub struct Channel {
    setup: ChannelSetup,
    keys_a: PartyKeys,
    keys_b: PartyKeys,
    publishers: PoolKeys,
    watchdogs: PoolKeys,
    funding: Option<OutPoint>,
    states: Vec<ChannelState>,
    closed: bool,
}

impl Channel {
    pub fn new(descriptor: &ChannelDescriptor, pool_seed: Option<MasterSeed>) -> Result<Self, ChannelError> {
        let params = descriptor.params;
        params.validate()?;
        let keys_a = PartyKeys::new(Party::A, descriptor.master_seed_a);
        let keys_b = PartyKeys::new(Party::B, descriptor.master_seed_b);
        let pool_seed = pool_seed.unwrap_or_else(|| default_pool_seed(&descriptor.master_seed_a, &descriptor.master_seed_b));
        let publishers = PoolKeys::publishers(pool_seed, params.k1);
        let watchdogs = PoolKeys::watchdogs(pool_seed, params.k2);
        let setup = ChannelSetup {
            params,
            funding_a: keys_a.funding().public_key,
            funding_b: keys_b.funding().public_key,
            close_a: keys_a.close().public_key,
            close_b: keys_b.close().public_key,
            publishers: publishers.pubkeys(),
            watchdogs: watchdogs.pubkeys(),
        };
        Ok(Channel {
            setup,
            keys_a,
            keys_b,
            publishers,
            watchdogs,
            funding: None,
            states: vec![ChannelState::new(1, params.omega_a, params.omega_b)],
            closed: false,
        })
    }

    pub fn setup(&self) -> &ChannelSetup {
        &self.setup
    }

    pub fn params(&self) -> &ChannelParams {
        &self.setup.params
    }

    pub fn keys_a(&self) -> &PartyKeys {
        &self.keys_a
    }

    pub fn keys_b(&self) -> &PartyKeys {
        &self.keys_b
    }

    pub fn publishers(&self) -> &PoolKeys {
        &self.publishers
    }

    pub fn watchdogs(&self) -> &PoolKeys {
        &self.watchdogs
    }

    pub fn funding(&self) -> Option<OutPoint> {
        self.funding
    }

    pub fn is_closed(&self) -> bool {
        self.closed
    }

    /// Records the confirmed funding output.
    pub fn open(&mut self, funding: OutPoint) {
        self.funding = Some(funding);
    }

    pub fn states(&self) -> &[ChannelState] {
        &self.states
    }

    pub fn state(&self, j: u32) -> Option<&ChannelState> {
        self.states.get((j as usize).checked_sub(1)?)
    }

    pub fn current(&self) -> &ChannelState {
        self.states.last().expect("channel always has a state")
    }

    pub fn device_storage(&self) -> DeviceStorage {
        let s = self.current();
        DeviceStorage {
            master_seed: *self.keys_a.seed(),
            state_index: s.index,
            balance_a: s.balance_a,
            balance_b: s.balance_b,
        }
    }

    /// Moves to state `j+1` with A holding `new_balance_a`, revoking state
    /// `j` by exchanging both slot-c secrets.
    pub fn update_state(&mut self, new_balance_a: u64) -> Result<(ChannelState, RevocationMessages), ChannelError> {
        if self.closed {
            return Err(ChannelError::ChannelClosed);
        }
        let capacity = self.setup.capacity();
        if new_balance_a > capacity {
            return Err(ChannelError::BalanceOutOfRange(new_balance_a));
        }
        let j = self.current().index;
        if j >= self.setup.params.max_states {
            return Err(ChannelError::StateExhausted(j + 1));
        }
        let msgs = RevocationMessages {
            state_index: j,
            from_a: self.keys_a.state(j).c.secret_key,
            from_b: self.keys_b.state(j).c.secret_key,
        };
        let old = self.states.last_mut().expect("channel always has a state");
        old.revoked = true;
        old.revocation_secret_a = Some(msgs.from_a);
        old.revocation_secret_b = Some(msgs.from_b);
        let next = ChannelState::new(j + 1, new_balance_a, capacity - new_balance_a);
        self.states.push(next.clone());
        Ok((next, msgs))
    }

    pub fn commitment_keys(&self, j: u32) -> CommitmentKeys {
        CommitmentKeys {
            a: self.keys_a.state(j).public(),
            b: self.keys_b.state(j).public(),
        }
    }

    pub fn commitment_pair(&self, j: u32, miner_fee: u64) -> Result<CommitmentPair, ChannelError> {
        let funding = self.funding.ok_or(ChannelError::NotOpen)?;
        let state = self.state(j).ok_or(ChannelError::StateExhausted(j))?;
        build_commitment_pair(
            &self.setup,
            &funding,
            state,
            &self.commitment_keys(j),
            &self.keys_a.funding(),
            &self.keys_b.funding(),
            miner_fee,
        )
    }

    /// Transaction 2 for the current state, signed by both parties.
    pub fn mutual_close(&mut self, relay_fee: bool, miner_fee: u64) -> Result<Transaction, ChannelError> {
        if self.closed {
            return Err(ChannelError::ChannelClosed);
        }
        let funding = self.funding.ok_or(ChannelError::NotOpen)?;
        let tx = mutual_close_tx(&self.setup, &funding, self.current(), relay_fee, miner_fee)?;
        let sig_a = sign_input(&tx, 0, &self.keys_a.funding());
        let sig_b = sign_input(&tx, 0, &self.keys_b.funding());
        let tx = attach_close_signatures(&tx, &self.setup, Some(sig_a), Some(sig_b))?;
        self.closed = true;
        Ok(tx)
    }

    fn find_commitment(&self, published: &Transaction, miner_fee: u64) -> Result<(&ChannelState, bool), ChannelError> {
        let txid = published.txid();
        for state in &self.states {
            let pair = self.commitment_pair(state.index, miner_fee);
            let Ok(pair) = pair else { continue };
            if pair.tx_a.txid() == txid || pair.complete_a(&self.setup, &self.keys_a.funding()).txid() == txid {
                return Ok((state, true));
            }
            if pair.tx_b.txid() == txid || pair.complete_b(&self.setup, &self.keys_b.funding()).txid() == txid {
                return Ok((state, false));
            }
        }
        Err(ChannelError::UnknownCommitment)
    }

    /// Punishment for a published revoked commitment. Against `tx_a` the
    /// gateway sweeps A's output; against `tx_b` the device recovers B's
    /// output through Transaction 5 with watchdog `member`.
    pub fn breach_remedy(
        &self,
        published: &Transaction,
        timing: BreachTiming,
        member: usize,
        miner_fee: u64,
    ) -> Result<Transaction, ChannelError> {
        let (state, is_a) = self.find_commitment(published, miner_fee)?;
        let j = state.index;
        if is_a {
            let device_c = state
                .revocation_secret_a
                .map(Keypair::from_secret)
                .ok_or(ChannelError::NotRevoked(j))?;
            build_breach_remedy(
                &self.setup,
                published,
                state,
                &self.keys_b.state(j).b,
                &device_c,
                &self.setup.close_b,
                timing,
                miner_fee,
            )
        } else {
            self.recovery(published, state, member, timing, miner_fee)
        }
    }

    fn recovery(
        &self,
        published_b: &Transaction,
        state: &ChannelState,
        member: usize,
        timing: BreachTiming,
        miner_fee: u64,
    ) -> Result<Transaction, ChannelError> {
        let j = state.index;
        if member >= self.watchdogs.size() {
            return Err(ChannelError::BadMemberIndex(member));
        }
        let gateway_c = state
            .revocation_secret_b
            .map(Keypair::from_secret)
            .ok_or(ChannelError::NotRevoked(j))?;
        build_recovery_tx(
            &self.setup,
            published_b,
            state,
            member,
            &self.watchdogs.member(member),
            &self.keys_a.state(j).b,
            &gateway_c,
            &self.keys_a.recovery(j).public_key,
            timing,
            miner_fee,
        )
    }
}

#[cfg(test)]
mod tests;
