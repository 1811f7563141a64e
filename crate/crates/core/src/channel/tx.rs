//! Builders for the five channel transactions. All builders are pure: they
//! take public material and keys explicitly and never touch a ledger.

use serde::{Deserialize, Serialize};

use super::{ChannelError, ChannelParams, ChannelState, StatePubkeys};
use crate::crypto::{Keypair, PublicKey, Signature};
use crate::ledger::{signing_digest, OutPoint, Transaction, TxInput, TxOutput};
use crate::script::{push, templates, Opcode, Script};

/// Public material both parties agree on when the channel opens.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChannelSetup {
    pub params: ChannelParams,
    pub funding_a: PublicKey,
    pub funding_b: PublicKey,
    pub close_a: PublicKey,
    pub close_b: PublicKey,
    pub publishers: Vec<PublicKey>,
    pub watchdogs: Vec<PublicKey>,
}

impl ChannelSetup {
    /// `2 <pk_A_FT> <pk_B_FT> 2 CHECKMULTISIG`
    pub fn funding_redeem(&self) -> Script {
        templates::multisig(2, &[self.funding_a, self.funding_b])
    }

    pub fn funding_locking(&self) -> Script {
        templates::p2sh(&self.funding_redeem())
    }

    /// `1 <pub_0> .. <pub_K1-1> K1 CHECKMULTISIG`
    pub fn publisher_locking(&self) -> Script {
        templates::multisig(1, &self.publishers)
    }

    pub fn capacity(&self) -> u64 {
        self.params.capacity()
    }
}

/// A P2PKH output owned by `key`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SpendableInput {
    pub outpoint: OutPoint,
    pub value: u64,
    pub key: Keypair,
}

/// Public keys of both parties for one state.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CommitmentKeys {
    pub a: StatePubkeys,
    pub b: StatePubkeys,
}

/// Both commitments of one state, each holding the counterparty's signature
/// over the funding input.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CommitmentPair {
    pub state_index: u32,
    pub tx_a: Transaction,
    pub tx_b: Transaction,
    /// B's funding signature over `tx_a`.
    pub sig_b_on_a: Signature,
    /// A's funding signature over `tx_b`.
    pub sig_a_on_b: Signature,
}

impl CommitmentPair {
    /// Completes `tx_a` with A's funding key. Any other key yields a
    /// transaction the ledger rejects.
    pub fn complete_a(&self, setup: &ChannelSetup, funding_a: &Keypair) -> Transaction {
        let sig = sign_input(&self.tx_a, 0, funding_a);
        with_funding_witness(&self.tx_a, setup, &sig, &self.sig_b_on_a)
    }

    /// Completes `tx_b` with B's funding key.
    pub fn complete_b(&self, setup: &ChannelSetup, funding_b: &Keypair) -> Transaction {
        let sig = sign_input(&self.tx_b, 0, funding_b);
        with_funding_witness(&self.tx_b, setup, &self.sig_a_on_b, &sig)
    }
}

pub fn sign_input(tx: &Transaction, index: usize, key: &Keypair) -> Signature {
    let digest = signing_digest(tx, index).expect("input index in range");
    key.sign(&digest.0)
}

/// `<sig_A> <sig_B> <redeem>` on input 0.
pub fn with_funding_witness(tx: &Transaction, setup: &ChannelSetup, sig_a: &Signature, sig_b: &Signature) -> Transaction {
    let mut tx = tx.clone();
    tx.inputs[0].unlocking = Script::new(vec![
        push(sig_a.0.to_vec()),
        push(sig_b.0.to_vec()),
        push(setup.funding_redeem().to_bytes()),
    ]);
    tx
}

fn p2pkh_to(pk: &PublicKey) -> Script {
    templates::p2pkh(&crate::crypto::hash160(&pk.0))
}

fn funding_input(funding: &OutPoint) -> TxInput {
    TxInput {
        previous: *funding,
        unlocking: Script::empty(),
        sequence: 0,
    }
}

fn check_state(setup: &ChannelSetup, state: &ChannelState) -> Result<(), ChannelError> {
    if state.index == 0 || state.index > setup.params.max_states {
        return Err(ChannelError::StateExhausted(state.index));
    }
    if state.balance_a.checked_add(state.balance_b) != Some(setup.capacity()) {
        return Err(ChannelError::BalanceOutOfRange(state.balance_a));
    }
    Ok(())
}

fn budget(value: u64, cost: u64, what: &'static str) -> Result<u64, ChannelError> {
    value.checked_sub(cost).ok_or(ChannelError::BudgetExceeded(what))
}

/// Transaction 1: locks both contributions behind the 2-of-2 P2SH output.
/// The gateway's inputs also pay the miner fee.
pub fn build_funding_tx(
    setup: &ChannelSetup,
    inputs_a: &[SpendableInput],
    inputs_b: &[SpendableInput],
    miner_fee: u64,
) -> Result<Transaction, ChannelError> {
    let p = &setup.params;
    let mut outputs = vec![TxOutput {
        value: setup.capacity(),
        locking: setup.funding_locking(),
    }];
    for (inputs, needed) in [(inputs_a, p.omega_a), (inputs_b, p.omega_b.saturating_add(miner_fee))] {
        let available = inputs.iter().try_fold(0u64, |s, i| s.checked_add(i.value)).ok_or(ChannelError::ValueOverflow)?;
        if available < needed {
            return Err(ChannelError::InsufficientFunds { needed, available });
        }
        if available > needed {
            outputs.push(TxOutput {
                value: available - needed,
                locking: p2pkh_to(&inputs[0].key.public_key),
            });
        }
    }
    let all: Vec<&SpendableInput> = inputs_a.iter().chain(inputs_b).collect();
    let mut tx = Transaction {
        inputs: all
            .iter()
            .map(|i| TxInput {
                previous: i.outpoint,
                unlocking: Script::empty(),
                sequence: 0,
            })
            .collect(),
        outputs,
        coinbase: None,
    };
    let sigs: Vec<Signature> = all.iter().enumerate().map(|(n, i)| sign_input(&tx, n, &i.key)).collect();
    for (n, (input, sig)) in all.iter().zip(sigs).enumerate() {
        tx.inputs[n].unlocking = templates::p2pkh_unlock(&sig, &input.key.public_key);
    }
    Ok(tx)
}

/// Transaction 3, publishable by A. Outputs: A's revocable balance minus the
/// publisher fee and miner fee, B's balance, the publisher-pool fee.
pub fn commitment_tx_a(
    setup: &ChannelSetup,
    funding: &OutPoint,
    state: &ChannelState,
    keys: &CommitmentKeys,
    miner_fee: u64,
) -> Result<Transaction, ChannelError> {
    check_state(setup, state)?;
    let p = &setup.params;
    let local = budget(state.balance_a, p.sigma1.saturating_add(miner_fee), "device balance below publisher fee")?;
    let h = |pk: &PublicKey| crate::crypto::hash160(&pk.0);
    Ok(Transaction {
        inputs: vec![funding_input(funding)],
        outputs: vec![
            TxOutput {
                value: local,
                locking: templates::revocable_local(p.w, &h(&keys.a.a), &h(&keys.b.b), &h(&keys.a.c)),
            },
            TxOutput {
                value: state.balance_b,
                locking: p2pkh_to(&keys.b.b),
            },
            TxOutput {
                value: p.sigma1,
                locking: setup.publisher_locking(),
            },
        ],
        coinbase: None,
    })
}

/// Transaction 4, publishable by B. Outputs: B's revocable balance minus the
/// miner fee, guarded by a watchdog on the revocation path; A's balance.
pub fn commitment_tx_b(
    setup: &ChannelSetup,
    funding: &OutPoint,
    state: &ChannelState,
    keys: &CommitmentKeys,
    miner_fee: u64,
) -> Result<Transaction, ChannelError> {
    check_state(setup, state)?;
    let p = &setup.params;
    let local = budget(state.balance_b, miner_fee, "gateway balance below miner fee")?;
    let h = |pk: &PublicKey| crate::crypto::hash160(&pk.0);
    Ok(Transaction {
        inputs: vec![funding_input(funding)],
        outputs: vec![
            TxOutput {
                value: local,
                locking: templates::revocable_watched(p.w, &h(&keys.b.a), &setup.watchdogs, &h(&keys.b.c), &h(&keys.a.b)),
            },
            TxOutput {
                value: state.balance_a,
                locking: p2pkh_to(&keys.a.b),
            },
        ],
        coinbase: None,
    })
}

/// Builds both commitments and the counterparty signatures over them.
pub fn build_commitment_pair(
    setup: &ChannelSetup,
    funding: &OutPoint,
    state: &ChannelState,
    keys: &CommitmentKeys,
    funding_a: &Keypair,
    funding_b: &Keypair,
    miner_fee: u64,
) -> Result<CommitmentPair, ChannelError> {
    let tx_a = commitment_tx_a(setup, funding, state, keys, miner_fee)?;
    let tx_b = commitment_tx_b(setup, funding, state, keys, miner_fee)?;
    Ok(CommitmentPair {
        state_index: state.index,
        sig_b_on_a: sign_input(&tx_a, 0, funding_b),
        sig_a_on_b: sign_input(&tx_b, 0, funding_a),
        tx_a,
        tx_b,
    })
}

/// Transaction 2 without signatures. With `relay_fee`, the device funds a
/// publisher-pool output of `sigma1` so a third party broadcasts the close.
pub fn mutual_close_tx(
    setup: &ChannelSetup,
    funding: &OutPoint,
    state: &ChannelState,
    relay_fee: bool,
    miner_fee: u64,
) -> Result<Transaction, ChannelError> {
    check_state(setup, state)?;
    let relay = if relay_fee { setup.params.sigma1 } else { 0 };
    let to_a = budget(state.balance_a, relay.saturating_add(miner_fee), "device balance below close fees")?;
    let mut outputs = vec![
        TxOutput {
            value: to_a,
            locking: p2pkh_to(&setup.close_a),
        },
        TxOutput {
            value: state.balance_b,
            locking: p2pkh_to(&setup.close_b),
        },
    ];
    if relay_fee {
        outputs.push(TxOutput {
            value: relay,
            locking: setup.publisher_locking(),
        });
    }
    Ok(Transaction {
        inputs: vec![funding_input(funding)],
        outputs,
        coinbase: None,
    })
}

/// Attaches both funding signatures to a close transaction.
pub fn attach_close_signatures(
    tx: &Transaction,
    setup: &ChannelSetup,
    sig_a: Option<Signature>,
    sig_b: Option<Signature>,
) -> Result<Transaction, ChannelError> {
    match (sig_a, sig_b) {
        (Some(a), Some(b)) => Ok(with_funding_witness(tx, setup, &a, &b)),
        (None, _) => Err(ChannelError::MissingSignature(crate::crypto::Party::A)),
        (_, None) => Err(ChannelError::MissingSignature(crate::crypto::Party::B)),
    }
}

/// Heights at which a revoked commitment confirmed and the remedy would be
/// mined.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BreachTiming {
    pub confirmation_height: u64,
    pub spend_height: u64,
}

impl BreachTiming {
    fn check(&self, w: u32) -> Result<(), ChannelError> {
        if self.spend_height.saturating_sub(self.confirmation_height) >= w as u64 {
            return Err(ChannelError::WindowExpired);
        }
        Ok(())
    }
}

/// Spends output 0 of a revoked `tx_a` through the revocation branch,
/// paying the whole value minus `miner_fee` to `beneficiary`.
pub fn build_breach_remedy(
    setup: &ChannelSetup,
    published_a: &Transaction,
    state: &ChannelState,
    gateway_b: &Keypair,
    device_c: &Keypair,
    beneficiary: &PublicKey,
    timing: BreachTiming,
    miner_fee: u64,
) -> Result<Transaction, ChannelError> {
    if !state.revoked {
        return Err(ChannelError::NotRevoked(state.index));
    }
    timing.check(setup.params.w)?;
    let value = published_a.outputs.first().ok_or(ChannelError::UnknownCommitment)?.value;
    let mut tx = Transaction {
        inputs: vec![TxInput {
            previous: published_a.outpoint(0),
            unlocking: Script::empty(),
            sequence: 0,
        }],
        outputs: vec![TxOutput {
            value: budget(value, miner_fee, "remedy value below miner fee")?,
            locking: p2pkh_to(beneficiary),
        }],
        coinbase: None,
    };
    let sig_b = sign_input(&tx, 0, gateway_b);
    let sig_c = sign_input(&tx, 0, device_c);
    tx.inputs[0].unlocking = Script::new(vec![
        push(sig_c.0.to_vec()),
        push(device_c.public_key.0.to_vec()),
        push(sig_b.0.to_vec()),
        push(gateway_b.public_key.0.to_vec()),
        Opcode::Const(0),
    ]);
    Ok(tx)
}

/// Transaction 5 without signatures. Outputs: the recovered value to A's
/// recovery key, `gamma1` to watchdog `member`, `sigma1` to the publisher pool.
pub fn recovery_tx_unsigned(
    setup: &ChannelSetup,
    published_b: &Transaction,
    member: usize,
    device_recovery: &PublicKey,
    miner_fee: u64,
) -> Result<Transaction, ChannelError> {
    let p = &setup.params;
    let watchdog = setup.watchdogs.get(member).ok_or(ChannelError::BadMemberIndex(member))?;
    let value = published_b.outputs.first().ok_or(ChannelError::UnknownCommitment)?.value;
    let cost = p.gamma1.saturating_add(p.sigma1).saturating_add(miner_fee);
    Ok(Transaction {
        inputs: vec![TxInput {
            previous: published_b.outpoint(0),
            unlocking: Script::empty(),
            sequence: 0,
        }],
        outputs: vec![
            TxOutput {
                value: budget(value, cost, "breached value below recovery fees")?,
                locking: p2pkh_to(device_recovery),
            },
            TxOutput {
                value: p.gamma1,
                locking: p2pkh_to(watchdog),
            },
            TxOutput {
                value: p.sigma1,
                locking: setup.publisher_locking(),
            },
        ],
        coinbase: None,
    })
}

/// Signatures the device contributes to a recovery transaction.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RecoverySignatures {
    pub device_b: (Signature, PublicKey),
    pub gateway_c: (Signature, PublicKey),
}

impl RecoverySignatures {
    pub fn sign(tx: &Transaction, device_b: &Keypair, gateway_c: &Keypair) -> Self {
        RecoverySignatures {
            device_b: (sign_input(tx, 0, device_b), device_b.public_key),
            gateway_c: (sign_input(tx, 0, gateway_c), gateway_c.public_key),
        }
    }
}

/// `<sig_A_b> <pk_A_b> <sig_B_c> <pk_B_c> <sig_watchdog> 0`
pub fn recovery_witness(sigs: &RecoverySignatures, watchdog_sig: &Signature) -> Script {
    Script::new(vec![
        push(sigs.device_b.0 .0.to_vec()),
        push(sigs.device_b.1 .0.to_vec()),
        push(sigs.gateway_c.0 .0.to_vec()),
        push(sigs.gateway_c.1 .0.to_vec()),
        push(watchdog_sig.0.to_vec()),
        Opcode::Const(0),
    ])
}

/// Fully signed Transaction 5 for a revoked `tx_b`.
#[allow(clippy::too_many_arguments)]
pub fn build_recovery_tx(
    setup: &ChannelSetup,
    published_b: &Transaction,
    state: &ChannelState,
    member: usize,
    watchdog: &Keypair,
    device_b: &Keypair,
    gateway_c: &Keypair,
    device_recovery: &PublicKey,
    timing: BreachTiming,
    miner_fee: u64,
) -> Result<Transaction, ChannelError> {
    if !state.revoked {
        return Err(ChannelError::NotRevoked(state.index));
    }
    timing.check(setup.params.w)?;
    let mut tx = recovery_tx_unsigned(setup, published_b, member, device_recovery, miner_fee)?;
    let sigs = RecoverySignatures::sign(&tx, device_b, gateway_c);
    let wsig = sign_input(&tx, 0, watchdog);
    tx.inputs[0].unlocking = recovery_witness(&sigs, &wsig);
    Ok(tx)
}

/// Spends output 0 of a commitment through its timelocked branch once W
/// blocks have passed.
pub fn timelock_claim(published: &Transaction, own_a: &Keypair, to: &PublicKey, w: u32, miner_fee: u64) -> Result<Transaction, ChannelError> {
    let value = published.outputs.first().ok_or(ChannelError::UnknownCommitment)?.value;
    let mut tx = Transaction {
        inputs: vec![TxInput {
            previous: published.outpoint(0),
            unlocking: Script::empty(),
            sequence: w,
        }],
        outputs: vec![TxOutput {
            value: budget(value, miner_fee, "timelocked value below miner fee")?,
            locking: p2pkh_to(to),
        }],
        coinbase: None,
    };
    let sig = sign_input(&tx, 0, own_a);
    tx.inputs[0].unlocking = templates::timelock_unlock(&sig, &own_a.public_key);
    Ok(tx)
}

/// Spends a 1-of-K pool output with one member's key.
pub fn pool_claim(pool_output: OutPoint, value: u64, member: &Keypair, miner_fee: u64) -> Result<Transaction, ChannelError> {
    let mut tx = Transaction {
        inputs: vec![TxInput {
            previous: pool_output,
            unlocking: Script::empty(),
            sequence: 0,
        }],
        outputs: vec![TxOutput {
            value: budget(value, miner_fee, "pool output below miner fee")?,
            locking: p2pkh_to(&member.public_key),
        }],
        coinbase: None,
    };
    let sig = sign_input(&tx, 0, member);
    tx.inputs[0].unlocking = Script::new(vec![push(sig.0.to_vec())]);
    Ok(tx)
}

/// Spends a P2PKH output.
pub fn p2pkh_claim(output: OutPoint, value: u64, key: &Keypair, to: &PublicKey, miner_fee: u64) -> Result<Transaction, ChannelError> {
    let mut tx = Transaction {
        inputs: vec![TxInput {
            previous: output,
            unlocking: Script::empty(),
            sequence: 0,
        }],
        outputs: vec![TxOutput {
            value: budget(value, miner_fee, "output below miner fee")?,
            locking: p2pkh_to(to),
        }],
        coinbase: None,
    };
    let sig = sign_input(&tx, 0, key);
    tx.inputs[0].unlocking = templates::p2pkh_unlock(&sig, &key.public_key);
    Ok(tx)
}
