use std::collections::{BTreeMap, VecDeque};

use super::{
    unanimous_bribe, ActorRole, BribeRecord, EventKind, OnChainTx, ScenarioConfig, ScenarioError, ScenarioTrace,
    Strategy, TraceEvent, TxLabel, UtxoRecord,
};
use crate::channel::{
    build_breach_remedy, build_funding_tx, commitment_tx_a, commitment_tx_b, mutual_close_tx, pool_claim,
    recovery_tx_unsigned, recovery_witness, sign_input, timelock_claim, with_funding_witness, BreachTiming, Channel,
    ChannelSetup, ChannelState, CommitmentKeys, PartyKeys, PoolKeys, RecoverySignatures, SpendableInput, StatePubkeys,
};
use crate::crypto::{hash160, Digest20, Keypair, SecretKey, Signature};
use crate::ledger::{Chain, OutPoint, Transaction, TxOutput, Txid};
use crate::script::{templates, Script};

#[derive(Debug, Clone)]
enum Msg {
    OpenChannel { input: OutPoint, value: u64, keys: StatePubkeys },
    FundingProposal { tx: Transaction, keys: StatePubkeys },
    FundingInputSigned { unlocking: Script },
    FundingSigned { tx: Transaction, sig_b_on_a: Signature },
    CommitmentSigned { sig_a_on_b: Signature },
    FundingLocked,
    Propose { index: u32, balance_a: u64, keys: StatePubkeys },
    Accept { index: u32, keys: StatePubkeys, sig_a_on_b: Signature },
    Commit { index: u32, sig_b_on_a: Signature, revoked_secret: SecretKey },
    Revoke { index: u32, secret: SecretKey },
    PresignedRecovery { state: u32, tx: Transaction, sigs: RecoverySignatures },
    CloseProposal { tx: Transaction, sig_b: Signature },
    CloseSigned { sig_a: Signature },
    Alert { state: u32, tx: Transaction },
    Publish { tx: Transaction, label: TxLabel },
}

impl Msg {
    fn name(&self) -> &'static str {
        match self {
            Msg::OpenChannel { .. } => "open_channel",
            Msg::FundingProposal { .. } => "funding_proposal",
            Msg::FundingInputSigned { .. } => "funding_input_signed",
            Msg::FundingSigned { .. } => "funding_signed",
            Msg::CommitmentSigned { .. } => "commitment_signed",
            Msg::FundingLocked => "funding_locked",
            Msg::Propose { .. } => "propose",
            Msg::Accept { .. } => "accept",
            Msg::Commit { .. } => "commit",
            Msg::Revoke { .. } => "revoke",
            Msg::PresignedRecovery { .. } => "presigned_recovery",
            Msg::CloseProposal { .. } => "close_proposal",
            Msg::CloseSigned { .. } => "close_signed",
            Msg::Alert { .. } => "alert",
            Msg::Publish { .. } => "publish",
        }
    }
}

#[derive(Debug, Clone)]
struct Envelope {
    from: ActorRole,
    to: ActorRole,
    msg: Msg,
}

/// Shared per-tick plumbing: event log and outgoing messages.
struct Net<'a> {
    tick: u64,
    events: &'a mut Vec<TraceEvent>,
    outbox: &'a mut VecDeque<Envelope>,
}

impl Net<'_> {
    fn log(&mut self, actor: ActorRole, kind: EventKind) {
        self.events.push(TraceEvent {
            tick: self.tick,
            actor: Some(actor),
            kind,
        });
    }

    fn send(&mut self, from: ActorRole, to: ActorRole, msg: Msg) {
        self.log(
            from,
            EventKind::Message {
                to,
                message: msg.name(),
            },
        );
        self.outbox.push_back(Envelope { from, to, msg });
    }
}

/// Logged chain access for actors allowed to see the ledger.
struct ChainPort<'a> {
    chain: &'a mut Chain,
    labels: &'a mut BTreeMap<Txid, TxLabel>,
}

impl ChainPort<'_> {
    fn read<T>(&self, net: &mut Net, actor: ActorRole, query: &str, f: impl FnOnce(&Chain) -> T) -> T {
        net.log(actor, EventKind::ChainRead { query: query.to_string() });
        f(self.chain)
    }

    fn submit(&mut self, net: &mut Net, actor: ActorRole, tx: Transaction, label: TxLabel) -> bool {
        let txid = tx.txid();
        let result = self.chain.submit(tx);
        net.log(
            actor,
            EventKind::Submit {
                txid,
                label,
                accepted: result.is_ok(),
                error: result.as_ref().err().map(|e| e.to_string()),
            },
        );
        if result.is_ok() {
            self.labels.insert(txid, label);
        }
        result.is_ok()
    }
}

fn p2pkh(pk: &crate::crypto::PublicKey) -> Script {
    templates::p2pkh(&hash160(&pk.0))
}

// ---- device ----------------------------------------------------------------

struct PendingUpdate {
    index: u32,
    balance_a: u64,
    gateway_keys: StatePubkeys,
}

struct Device {
    keys: PartyKeys,
    setup: ChannelSetup,
    miner_fee: u64,
    strategy: Strategy,
    wallet: SpendableInput,
    k2: usize,
    funding: Option<OutPoint>,
    funding_proposal: Option<Transaction>,
    index: u32,
    balance_a: u64,
    gateway_keys: Option<StatePubkeys>,
    sig_b_on_a: Option<Signature>,
    pending: Option<PendingUpdate>,
    locked: bool,
    /// Completed old commitments, kept only by a cheating device.
    archive: BTreeMap<u32, Transaction>,
    started: bool,
}

impl Device {
    const ROLE: ActorRole = ActorRole::Device;

    fn balance_b(&self) -> u64 {
        self.setup.capacity() - self.balance_a
    }

    fn state(&self, index: u32, balance_a: u64) -> ChannelState {
        ChannelState::new(index, balance_a, self.setup.capacity() - balance_a)
    }

    fn commitment_keys(&self, index: u32, gateway: StatePubkeys) -> CommitmentKeys {
        CommitmentKeys {
            a: self.keys.state(index).public(),
            b: gateway,
        }
    }

    fn step(&mut self, net: &mut Net) {
        if !self.started {
            self.started = true;
            let keys = self.keys.state(1).public();
            let msg = Msg::OpenChannel {
                input: self.wallet.outpoint,
                value: self.wallet.value,
                keys,
            };
            net.send(Self::ROLE, ActorRole::Gateway, msg);
        }
    }

    fn tx_b(&self, index: u32, balance_a: u64, gateway: StatePubkeys) -> Transaction {
        let funding = self.funding.expect("funded");
        commitment_tx_b(&self.setup, &funding, &self.state(index, balance_a), &self.commitment_keys(index, gateway), self.miner_fee)
            .expect("validated state")
    }

    fn tx_a(&self, index: u32, balance_a: u64, gateway: StatePubkeys) -> Transaction {
        let funding = self.funding.expect("funded");
        commitment_tx_a(&self.setup, &funding, &self.state(index, balance_a), &self.commitment_keys(index, gateway), self.miner_fee)
            .expect("validated state")
    }

    fn archive_current(&mut self) {
        if matches!(self.strategy, Strategy::PublishRevoked(_)) {
            let gw = self.gateway_keys.expect("keys known");
            let tx = self.tx_a(self.index, self.balance_a, gw);
            let own = sign_input(&tx, 0, &self.keys.funding());
            let done = with_funding_witness(&tx, &self.setup, &own, &self.sig_b_on_a.expect("signed"));
            self.archive.insert(self.index, done);
        }
    }

    fn handle(&mut self, net: &mut Net, from: ActorRole, msg: Msg) {
        match msg {
            Msg::FundingProposal { tx, keys } => {
                let i = tx
                    .inputs
                    .iter()
                    .position(|inp| inp.previous == self.wallet.outpoint)
                    .expect("proposal spends the device input");
                let sig = sign_input(&tx, i, &self.wallet.key);
                self.gateway_keys = Some(keys);
                self.funding_proposal = Some(tx);
                let unlocking = templates::p2pkh_unlock(&sig, &self.wallet.key.public_key);
                net.send(Self::ROLE, from, Msg::FundingInputSigned { unlocking });
            }
            Msg::FundingSigned { tx, sig_b_on_a } => {
                let proposal = self.funding_proposal.take().expect("proposal sent");
                assert_eq!(proposal.outputs, tx.outputs, "gateway altered the funding outputs");
                self.funding = Some(tx.outpoint(0));
                self.index = 1;
                self.balance_a = self.setup.params.omega_a;
                self.sig_b_on_a = Some(sig_b_on_a);
                let gw = self.gateway_keys.expect("keys known");
                let tx_b = self.tx_b(1, self.balance_a, gw);
                let sig_a_on_b = sign_input(&tx_b, 0, &self.keys.funding());
                net.send(Self::ROLE, from, Msg::CommitmentSigned { sig_a_on_b });
            }
            Msg::FundingLocked => self.locked = true,
            Msg::Propose { index, balance_a, keys } => {
                assert_eq!(index, self.index + 1, "updates are sequential");
                let tx_b = self.tx_b(index, balance_a, keys);
                let sig_a_on_b = sign_input(&tx_b, 0, &self.keys.funding());
                self.pending = Some(PendingUpdate {
                    index,
                    balance_a,
                    gateway_keys: keys,
                });
                let keys = self.keys.state(index).public();
                net.send(
                    Self::ROLE,
                    from,
                    Msg::Accept {
                        index,
                        keys,
                        sig_a_on_b,
                    },
                );
            }
            Msg::Commit {
                index,
                sig_b_on_a,
                revoked_secret,
            } => {
                let next = self.pending.take().expect("update in flight");
                assert_eq!(next.index, index);
                let old = self.index;
                let old_gw = self.gateway_keys.expect("keys known");
                let gateway_c = Keypair::from_secret(revoked_secret);
                assert_eq!(gateway_c.public_key, old_gw.c, "revealed secret matches the revoked state");
                self.archive_current();
                self.presign_recoveries(net, old, self.balance_a, old_gw, &gateway_c);
                self.index = index;
                self.balance_a = next.balance_a;
                self.gateway_keys = Some(next.gateway_keys);
                self.sig_b_on_a = Some(sig_b_on_a);
                net.log(
                    Self::ROLE,
                    EventKind::StateUpdated {
                        index,
                        balance_a: self.balance_a,
                        balance_b: self.balance_b(),
                    },
                );
                let secret = self.keys.state(old).c.secret_key;
                net.send(Self::ROLE, from, Msg::Revoke { index: old, secret });
            }
            Msg::CloseProposal { tx, sig_b } => match self.strategy {
                Strategy::PublishRevoked(j) => {
                    let tx = self.archive.get(&j).expect("archived revoked state").clone();
                    for i in 0..self.setup.params.k1 {
                        let msg = Msg::Publish {
                            tx: tx.clone(),
                            label: TxLabel::CommitmentA(j),
                        };
                        net.send(Self::ROLE, ActorRole::Publisher(i), msg);
                    }
                }
                _ => {
                    let expected = mutual_close_tx(
                        &self.setup,
                        &self.funding.expect("funded"),
                        &self.state(self.index, self.balance_a),
                        false,
                        self.miner_fee,
                    )
                    .expect("validated state");
                    assert_eq!(expected.outputs, tx.outputs, "close pays the current state");
                    let _ = sig_b;
                    let sig_a = sign_input(&tx, 0, &self.keys.funding());
                    net.send(Self::ROLE, from, Msg::CloseSigned { sig_a });
                }
            },
            Msg::Alert { state, tx } => {
                let rc = self.keys.recovery(state).public_key;
                assert_eq!(tx.outputs[0].locking, p2pkh(&rc), "recovery pays the device");
                for i in 0..self.setup.params.k1 {
                    let msg = Msg::Publish {
                        tx: tx.clone(),
                        label: TxLabel::Recovery(state),
                    };
                    net.send(Self::ROLE, ActorRole::Publisher(i), msg);
                }
            }
            other => unreachable!("device got {}", other.name()),
        }
    }

    /// Hands each watchdog a recovery for the revoked state, signed with
    /// the device's slot-b key and the gateway's revealed slot-c key.
    fn presign_recoveries(&self, net: &mut Net, index: u32, balance_a: u64, gw: StatePubkeys, gateway_c: &Keypair) {
        let tx_b = self.tx_b(index, balance_a, gw);
        let own_b = self.keys.state(index).b;
        let rc = self.keys.recovery(index).public_key;
        for member in 0..self.k2 {
            match recovery_tx_unsigned(&self.setup, &tx_b, member, &rc, self.miner_fee) {
                Ok(tx) => {
                    let sigs = RecoverySignatures::sign(&tx, &own_b, gateway_c);
                    let msg = Msg::PresignedRecovery { state: index, tx, sigs };
                    net.send(Self::ROLE, ActorRole::Watchdog(member), msg);
                }
                Err(e) => {
                    net.log(Self::ROLE, EventKind::Note { text: format!("no recovery for state {index}: {e}") });
                    return;
                }
            }
        }
    }
}

// ---- gateway ---------------------------------------------------------------

struct GwState {
    index: u32,
    balance_a: u64,
    device_keys: StatePubkeys,
    sig_a_on_b: Option<Signature>,
    device_secret: Option<SecretKey>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum GwPhase {
    Idle,
    Funding,
    AwaitDepth,
    Updating,
    Closing,
    Breaching,
    Done,
}

struct Gateway {
    keys: PartyKeys,
    setup: ChannelSetup,
    miner_fee: u64,
    strategy: Strategy,
    wallet: SpendableInput,
    funding_depth: u64,
    schedule: VecDeque<u64>,
    phase: GwPhase,
    funding_tx: Option<Transaction>,
    funding: Option<OutPoint>,
    device_input: Option<(OutPoint, u64)>,
    states: Vec<GwState>,
    in_flight: Option<u32>,
    close_tx: Option<Transaction>,
    /// Own commitment output awaiting its timelock: (commitment, state).
    csv_claim: Option<(Transaction, u32)>,
    remedied: bool,
}

impl Gateway {
    const ROLE: ActorRole = ActorRole::Gateway;

    fn current(&self) -> &GwState {
        self.states.last().expect("opened")
    }

    fn channel_state(&self, s: &GwState) -> ChannelState {
        let mut st = ChannelState::new(s.index, s.balance_a, self.setup.capacity() - s.balance_a);
        st.revoked = s.device_secret.is_some();
        st
    }

    fn commitment_keys(&self, s: &GwState) -> CommitmentKeys {
        CommitmentKeys {
            a: s.device_keys,
            b: self.keys.state(s.index).public(),
        }
    }

    fn commitments(&self, s: &GwState) -> (Transaction, Transaction) {
        let funding = self.funding.expect("funded");
        let st = self.channel_state(s);
        let keys = self.commitment_keys(s);
        let a = commitment_tx_a(&self.setup, &funding, &st, &keys, self.miner_fee).expect("validated state");
        let b = commitment_tx_b(&self.setup, &funding, &st, &keys, self.miner_fee).expect("validated state");
        (a, b)
    }

    fn propose_next(&mut self, net: &mut Net) {
        let Some(balance_a) = self.schedule.pop_front() else {
            return;
        };
        let index = self.current().index + 1;
        self.in_flight = Some(index);
        let keys = self.keys.state(index).public();
        self.states.push(GwState {
            index,
            balance_a,
            device_keys: keys,
            sig_a_on_b: None,
            device_secret: None,
        });
        net.send(Self::ROLE, ActorRole::Device, Msg::Propose { index, balance_a, keys });
    }

    fn step(&mut self, net: &mut Net, port: &mut ChainPort) {
        match self.phase {
            GwPhase::AwaitDepth => {
                let txid = self.funding.expect("funded").txid;
                let depth = port.read(net, Self::ROLE, "confirmation_depth(funding)", |c| c.confirmation_depth(&txid));
                if depth.unwrap_or(0) >= self.funding_depth {
                    self.phase = GwPhase::Updating;
                    net.send(Self::ROLE, ActorRole::Device, Msg::FundingLocked);
                    self.propose_next(net);
                }
            }
            GwPhase::Updating if self.in_flight.is_none() => {
                if !self.schedule.is_empty() {
                    self.propose_next(net);
                } else if let Strategy::PublishRevoked(j) = self.strategy {
                    self.publish_revoked(net, port, j);
                } else {
                    self.propose_close(net);
                }
            }
            GwPhase::Closing | GwPhase::Breaching | GwPhase::Done => self.watch(net, port),
            _ => {}
        }
    }

    fn propose_close(&mut self, net: &mut Net) {
        let st = self.channel_state(self.current());
        let tx = mutual_close_tx(&self.setup, &self.funding.expect("funded"), &st, false, self.miner_fee).expect("validated state");
        let sig_b = sign_input(&tx, 0, &self.keys.funding());
        self.close_tx = Some(tx.clone());
        self.phase = GwPhase::Closing;
        net.send(Self::ROLE, ActorRole::Device, Msg::CloseProposal { tx, sig_b });
    }

    fn publish_revoked(&mut self, net: &mut Net, port: &mut ChainPort, j: u32) {
        let s = &self.states[j as usize - 1];
        let (_, tx_b) = self.commitments(s);
        let own = sign_input(&tx_b, 0, &self.keys.funding());
        let tx = with_funding_witness(&tx_b, &self.setup, &s.sig_a_on_b.expect("countersigned"), &own);
        self.phase = GwPhase::Breaching;
        if port.submit(net, Self::ROLE, tx.clone(), TxLabel::CommitmentB(j)) {
            self.csv_claim = Some((tx, j));
        }
    }

    /// Watches the funding output and any own timelocked output.
    fn watch(&mut self, net: &mut Net, port: &mut ChainPort) {
        let funding = self.funding.expect("funded");
        let spend = port.read(net, Self::ROLE, "scan_for_spend(funding)", |c| c.scan_for_spend(&funding));
        if let Some((txid, height)) = spend {
            if !self.remedied && self.phase == GwPhase::Closing {
                self.try_remedy(net, port, txid, height);
            }
        }
        if let Some((commitment, j)) = self.csv_claim.clone() {
            let out = commitment.outpoint(0);
            let (conf, spent, tip) = port.read(net, Self::ROLE, "timelocked_output", |c| {
                (c.confirmed(&out.txid).map(|t| t.height), c.scan_for_spend(&out), c.height())
            });
            if spent.is_some() {
                self.csv_claim = None;
                self.phase = GwPhase::Done;
                net.log(Self::ROLE, EventKind::Note { text: format!("commitment {j} output taken by another spend") });
                return;
            }
            let in_mempool = port.read(net, Self::ROLE, "mempool", |c| c.mempool().iter().any(|t| t.inputs[0].previous == out));
            if let Some(conf) = conf {
                if !in_mempool && tip + 1 >= conf + self.setup.params.w as u64 {
                    let own_a = self.keys.state(j).a;
                    let claim = timelock_claim(&commitment, &own_a, &self.keys.close().public_key, self.setup.params.w, self.miner_fee)
                        .expect("budgeted");
                    port.submit(net, Self::ROLE, claim, TxLabel::TimelockClaim);
                }
            }
        }
    }

    fn try_remedy(&mut self, net: &mut Net, port: &mut ChainPort, txid: Txid, height: u64) {
        let published = port.read(net, Self::ROLE, "confirmed(spend)", |c| c.confirmed(&txid).map(|t| t.tx.clone()));
        let Some(published) = published else { return };
        if Some(&published) == self.close_tx.as_ref() || published.inputs[0].unlocking.is_empty() {
            return;
        }
        for s in &self.states {
            let (tx_a, _) = self.commitments(s);
            if tx_a.outputs != published.outputs {
                continue;
            }
            self.remedied = true;
            let Some(secret) = s.device_secret else {
                net.log(Self::ROLE, EventKind::Note { text: format!("device published current state {}", s.index) });
                return;
            };
            let timing = BreachTiming {
                confirmation_height: height,
                spend_height: port.read(net, Self::ROLE, "height", |c| c.height()) + 1,
            };
            let remedy = build_breach_remedy(
                &self.setup,
                &published,
                &self.channel_state(s),
                &self.keys.state(s.index).b,
                &Keypair::from_secret(secret),
                &self.keys.close().public_key,
                timing,
                self.miner_fee,
            );
            match remedy {
                Ok(tx) => {
                    port.submit(net, Self::ROLE, tx, TxLabel::BreachRemedy(s.index));
                }
                Err(e) => net.log(Self::ROLE, EventKind::Note { text: format!("remedy failed: {e}") }),
            }
            return;
        }
    }

    fn handle(&mut self, net: &mut Net, port: &mut ChainPort, from: ActorRole, msg: Msg) {
        match msg {
            Msg::OpenChannel { input, value, keys } => {
                self.device_input = Some((input, value));
                self.states.push(GwState {
                    index: 1,
                    balance_a: self.setup.params.omega_a,
                    device_keys: keys,
                    sig_a_on_b: None,
                    device_secret: None,
                });
                // the device's input is signed by the device; a placeholder key shapes the tx
                let device_input = SpendableInput {
                    outpoint: input,
                    value,
                    key: self.wallet.key,
                };
                let inputs_a: Vec<SpendableInput> = if value > 0 { vec![device_input] } else { vec![] };
                let tx = build_funding_tx(&self.setup, &inputs_a, &[self.wallet], self.miner_fee).expect("funded wallets");
                self.funding_tx = Some(tx.clone());
                self.phase = GwPhase::Funding;
                let keys = self.keys.state(1).public();
                net.send(Self::ROLE, from, Msg::FundingProposal { tx, keys });
            }
            Msg::FundingInputSigned { unlocking } => {
                let mut tx = self.funding_tx.take().expect("proposal sent");
                let (device_outpoint, _) = self.device_input.expect("device input known");
                for inp in tx.inputs.iter_mut() {
                    if inp.previous == device_outpoint {
                        inp.unlocking = unlocking.clone();
                    }
                }
                self.funding = Some(tx.outpoint(0));
                let s = self.channel_state(self.current());
                let keys = self.commitment_keys(self.current());
                let tx_a = commitment_tx_a(&self.setup, &tx.outpoint(0), &s, &keys, self.miner_fee).expect("validated state");
                let sig_b_on_a = sign_input(&tx_a, 0, &self.keys.funding());
                self.funding_tx = Some(tx.clone());
                net.send(Self::ROLE, from, Msg::FundingSigned { tx, sig_b_on_a });
            }
            Msg::CommitmentSigned { sig_a_on_b } => {
                self.states.last_mut().expect("opened").sig_a_on_b = Some(sig_a_on_b);
                let tx = self.funding_tx.clone().expect("funding built");
                if port.submit(net, Self::ROLE, tx, TxLabel::Funding) {
                    self.phase = GwPhase::AwaitDepth;
                }
            }
            Msg::Accept {
                index,
                keys,
                sig_a_on_b,
            } => {
                assert_eq!(self.in_flight, Some(index));
                let s = self.states.last_mut().expect("proposed");
                s.device_keys = keys;
                s.sig_a_on_b = Some(sig_a_on_b);
                let (tx_a, _) = self.commitments(self.current());
                let sig_b_on_a = sign_input(&tx_a, 0, &self.keys.funding());
                let revoked_secret = self.keys.state(index - 1).c.secret_key;
                net.send(
                    Self::ROLE,
                    from,
                    Msg::Commit {
                        index,
                        sig_b_on_a,
                        revoked_secret,
                    },
                );
            }
            Msg::Revoke { index, secret } => {
                let s = &mut self.states[index as usize - 1];
                assert_eq!(Keypair::from_secret(secret).public_key, s.device_keys.c, "device revealed its slot-c key");
                s.device_secret = Some(secret);
                self.in_flight = None;
            }
            Msg::CloseSigned { sig_a } => {
                let tx = self.close_tx.clone().expect("close proposed");
                let sig_b = sign_input(&tx, 0, &self.keys.funding());
                let signed = with_funding_witness(&tx, &self.setup, &sig_a, &sig_b);
                self.close_tx = Some(signed.clone());
                port.submit(net, Self::ROLE, signed, TxLabel::MutualClose);
                self.phase = GwPhase::Done;
            }
            other => unreachable!("gateway got {}", other.name()),
        }
        let _ = port;
    }

    fn pending(&self) -> bool {
        self.csv_claim.is_some() || !matches!(self.phase, GwPhase::Done | GwPhase::Closing | GwPhase::Breaching)
    }
}

// ---- pools -----------------------------------------------------------------

struct WatchdogPool {
    keys: PoolKeys,
    strategies: Vec<Strategy>,
    /// Presigned recoveries per member, keyed by the commitment they spend.
    held: Vec<BTreeMap<Txid, (u32, Transaction, RecoverySignatures)>>,
    handled: Vec<Txid>,
}

impl WatchdogPool {
    fn step(&mut self, net: &mut Net, port: &mut ChainPort, bribes: &mut Vec<BribeRecord>) {
        let watched: Vec<Txid> = self.held.iter().flat_map(|h| h.keys().copied()).collect();
        let Some(&breach) = watched.iter().find(|t| !self.handled.contains(t)) else {
            return;
        };
        let role0 = ActorRole::Watchdog(0);
        let seen = port.read(net, role0, "confirmed(revoked commitments)", |c| {
            watched.iter().find(|t| !self.handled.contains(t) && c.confirmed(t).is_some()).copied()
        });
        let _ = breach;
        let Some(breach) = seen else { return };
        self.handled.push(breach);
        if let Some(bribe) = unanimous_bribe(&self.strategies) {
            bribes.push(BribeRecord {
                pool: "watchdog",
                members: self.strategies.len(),
                amount: bribe,
            });
            net.log(role0, EventKind::Bribe { pool: "watchdog", amount: bribe });
            return;
        }
        for (i, st) in self.strategies.iter().enumerate() {
            let role = ActorRole::Watchdog(i);
            if !matches!(st, Strategy::Honest | Strategy::ColludeWatchdog(_)) {
                net.log(role, EventKind::Note { text: "silent".into() });
                continue;
            }
            let Some((state, tx, sigs)) = self.held[i].get(&breach).cloned() else {
                continue;
            };
            let mut tx = tx;
            let wsig = sign_input(&tx, 0, &self.keys.member(i));
            tx.inputs[0].unlocking = recovery_witness(&sigs, &wsig);
            net.send(role, ActorRole::Device, Msg::Alert { state, tx });
            return;
        }
    }

    fn handle(&mut self, member: usize, msg: Msg) {
        match msg {
            Msg::PresignedRecovery { state, tx, sigs } => {
                self.held[member].insert(tx.inputs[0].previous.txid, (state, tx, sigs));
            }
            other => unreachable!("watchdog got {}", other.name()),
        }
    }
}

struct PublisherPool {
    keys: PoolKeys,
    strategies: Vec<Strategy>,
    /// Transactions already routed by the pool, by txid.
    routed: Vec<Txid>,
    /// Submitted transactions carrying a pool output: (txid, submitting member).
    owed: Vec<(Txid, usize)>,
    /// Every pool-fee-carrying submission, kept for output attribution.
    claimed: Vec<(Txid, usize)>,
}

impl PublisherPool {
    fn harms_gateway(label: TxLabel) -> bool {
        matches!(label, TxLabel::Recovery(_))
    }

    fn handle(
        &mut self,
        net: &mut Net,
        port: &mut ChainPort,
        bribes: &mut Vec<BribeRecord>,
        member: usize,
        tx: Transaction,
        label: TxLabel,
        pool_locking: &Script,
    ) {
        let txid = tx.txid();
        if self.routed.contains(&txid) {
            return;
        }
        let _ = member;
        self.routed.push(txid);
        if Self::harms_gateway(label) {
            if let Some(bribe) = unanimous_bribe(&self.strategies) {
                bribes.push(BribeRecord {
                    pool: "publisher",
                    members: self.strategies.len(),
                    amount: bribe,
                });
                net.log(ActorRole::Publisher(0), EventKind::Bribe { pool: "publisher", amount: bribe });
                net.log(ActorRole::Publisher(0), EventKind::Dropped { label, reason: "collusion" });
                return;
            }
        }
        for (i, st) in self.strategies.iter().enumerate() {
            let role = ActorRole::Publisher(i);
            if matches!(st, Strategy::PublisherDrop) {
                net.log(role, EventKind::Dropped { label, reason: "denial of service" });
                continue;
            }
            let carries_fee = tx.outputs.iter().any(|o| &o.locking == pool_locking);
            if port.submit(net, role, tx.clone(), label) && carries_fee {
                self.owed.push((txid, i));
                self.claimed.push((txid, i));
            }
            return;
        }
    }

    fn step(&mut self, net: &mut Net, port: &mut ChainPort, pool_locking: &Script, miner_fee: u64) {
        let mut keep = Vec::new();
        for (txid, member) in std::mem::take(&mut self.owed) {
            let role = ActorRole::Publisher(member);
            let (confirmed, pending) = port.read(net, role, "confirmed(published)", |c| {
                (c.confirmed(&txid).map(|t| t.tx.clone()), c.mempool().iter().any(|t| t.txid() == txid))
            });
            let Some(tx) = confirmed else {
                if pending {
                    keep.push((txid, member));
                }
                continue;
            };
            for (i, out) in tx.outputs.iter().enumerate() {
                if &out.locking == pool_locking && out.value > miner_fee {
                    let claim = pool_claim(tx.outpoint(i as u32), out.value, &self.keys.member(member), miner_fee)
                        .expect("value above fee");
                    port.submit(net, role, claim, TxLabel::PoolClaim);
                }
            }
        }
        self.owed = keep;
    }
}

// ---- simulation ------------------------------------------------------------

/// One scenario run. The device is wired to its inbox only unless
/// [`Simulation::with_miswired_device`] grants it chain access, which
/// exists solely to exercise the isolation audit.
pub struct Simulation {
    config: ScenarioConfig,
    channel: Channel,
    chain: Chain,
    labels: BTreeMap<Txid, TxLabel>,
    events: Vec<TraceEvent>,
    queue: VecDeque<Envelope>,
    bribes: Vec<BribeRecord>,
    device: Device,
    gateway: Gateway,
    publishers: PublisherPool,
    watchdogs: WatchdogPool,
    seeds: Vec<Transaction>,
    device_reads_chain: bool,
}

impl Simulation {
    pub fn new(config: &ScenarioConfig) -> Result<Self, ScenarioError> {
        config.validate()?;
        let channel = Channel::new(&config.channel, config.pool_seed)?;
        let setup = channel.setup().clone();
        let p = setup.params;
        let fee = config.miner_fee;
        let dev_key = channel.keys_a().funding();
        let gw_key = channel.keys_b().funding();
        let seed = |nonce: u32, key: &Keypair, value: u64| {
            Transaction::coinbase(
                nonce,
                vec![TxOutput {
                    value,
                    locking: p2pkh(&key.public_key),
                }],
            )
        };
        let dev_seed = seed(1, &dev_key, p.omega_a);
        let gw_seed = seed(2, &gw_key, p.omega_b + fee);
        let device = Device {
            keys: channel.keys_a().clone(),
            setup: setup.clone(),
            miner_fee: fee,
            strategy: config.strategies.device,
            wallet: SpendableInput {
                outpoint: dev_seed.outpoint(0),
                value: p.omega_a,
                key: dev_key,
            },
            k2: p.k2,
            funding: None,
            funding_proposal: None,
            index: 0,
            balance_a: 0,
            gateway_keys: None,
            sig_b_on_a: None,
            pending: None,
            locked: false,
            archive: BTreeMap::new(),
            started: false,
        };
        let gateway = Gateway {
            keys: channel.keys_b().clone(),
            setup: setup.clone(),
            miner_fee: fee,
            strategy: config.strategies.gateway,
            wallet: SpendableInput {
                outpoint: gw_seed.outpoint(0),
                value: p.omega_b + fee,
                key: gw_key,
            },
            funding_depth: config.funding_depth,
            schedule: config.updates.iter().copied().collect(),
            phase: GwPhase::Idle,
            funding_tx: None,
            funding: None,
            device_input: None,
            states: Vec::new(),
            in_flight: None,
            close_tx: None,
            csv_claim: None,
            remedied: false,
        };
        let publishers = PublisherPool {
            keys: channel.publishers().clone(),
            strategies: config.strategies.publisher.clone(),
            routed: Vec::new(),
            owed: Vec::new(),
            claimed: Vec::new(),
        };
        let watchdogs = WatchdogPool {
            keys: channel.watchdogs().clone(),
            strategies: config.strategies.watchdog.clone(),
            held: vec![BTreeMap::new(); p.k2],
            handled: Vec::new(),
        };
        Ok(Simulation {
            config: config.clone(),
            channel,
            chain: Chain::new(),
            labels: BTreeMap::new(),
            events: Vec::new(),
            queue: VecDeque::new(),
            bribes: Vec::new(),
            device,
            gateway,
            publishers,
            watchdogs,
            seeds: vec![dev_seed, gw_seed],
            device_reads_chain: false,
        })
    }

    /// Test double: the device polls the chain every tick.
    pub fn with_miswired_device(mut self) -> Self {
        self.device_reads_chain = true;
        self
    }

    fn settled(&self) -> bool {
        let Some(funding) = self.gateway.funding else {
            return false;
        };
        self.chain.scan_for_spend(&funding).is_some()
            && self.chain.mempool().is_empty()
            && self.queue.is_empty()
            && !self.gateway.pending()
            && self.publishers.owed.is_empty()
    }

    fn deliver(&mut self, tick: u64) {
        let pool_locking = self.channel.setup().publisher_locking();
        while let Some(env) = self.queue.pop_front() {
            let mut net = Net {
                tick,
                events: &mut self.events,
                outbox: &mut self.queue,
            };
            let mut port = ChainPort {
                chain: &mut self.chain,
                labels: &mut self.labels,
            };
            match env.to {
                ActorRole::Device => self.device.handle(&mut net, env.from, env.msg),
                ActorRole::Gateway => self.gateway.handle(&mut net, &mut port, env.from, env.msg),
                ActorRole::Watchdog(i) => self.watchdogs.handle(i, env.msg),
                ActorRole::Publisher(i) => match env.msg {
                    Msg::Publish { tx, label } => {
                        self.publishers.handle(&mut net, &mut port, &mut self.bribes, i, tx, label, &pool_locking)
                    }
                    other => unreachable!("publisher got {}", other.name()),
                },
            }
        }
    }

    fn act(&mut self, tick: u64) {
        let pool_locking = self.channel.setup().publisher_locking();
        let mut net = Net {
            tick,
            events: &mut self.events,
            outbox: &mut self.queue,
        };
        let mut port = ChainPort {
            chain: &mut self.chain,
            labels: &mut self.labels,
        };
        if self.device_reads_chain {
            port.read(&mut net, ActorRole::Device, "height", |c| c.height());
        }
        if tick > 1 {
            self.device.step(&mut net);
        }
        self.gateway.step(&mut net, &mut port);
        self.watchdogs.step(&mut net, &mut port, &mut self.bribes);
        self.publishers.step(&mut net, &mut port, &pool_locking, self.config.miner_fee);
    }

    fn mine(&mut self, tick: u64) {
        let block = self.chain.mine_block();
        for txid in &block.txids {
            let label = self.labels.get(txid).copied().unwrap_or(TxLabel::Seed);
            self.events.push(TraceEvent {
                tick,
                actor: None,
                kind: EventKind::Confirmed {
                    txid: *txid,
                    label,
                    height: block.height,
                },
            });
        }
        self.events.push(TraceEvent {
            tick,
            actor: None,
            kind: EventKind::Block {
                height: block.height,
                txids: block.txids.clone(),
            },
        });
    }

    pub fn run(mut self) -> Result<ScenarioTrace, ScenarioError> {
        for seed in std::mem::take(&mut self.seeds) {
            self.chain.submit(seed).map_err(|e| ScenarioError::ConfigInvalid(e.to_string()))?;
        }
        let mut terminated = false;
        for tick in 1..=self.config.horizon {
            self.act(tick);
            self.deliver(tick);
            self.mine(tick);
            if self.settled() {
                terminated = true;
                break;
            }
        }
        let trace = self.into_trace(terminated);
        if trace.terminated {
            Ok(trace)
        } else {
            Err(ScenarioError::HorizonExceeded(Box::new(trace)))
        }
    }

    fn owners(&self) -> BTreeMap<Digest20, ActorRole> {
        let mut map = BTreeMap::new();
        let last = self.config.final_index();
        for (keys, role) in [(self.channel.keys_a(), ActorRole::Device), (self.channel.keys_b(), ActorRole::Gateway)] {
            let mut all = vec![keys.funding(), keys.close()];
            for j in 1..=last {
                let s = keys.state(j);
                all.extend([s.a, s.b, s.c, keys.recovery(j)]);
            }
            for k in all {
                map.insert(k.pubkey_hash(), role);
            }
        }
        for i in 0..self.config.channel.params.k1 {
            map.insert(self.channel.publishers().member(i).pubkey_hash(), ActorRole::Publisher(i));
        }
        for i in 0..self.config.channel.params.k2 {
            map.insert(self.channel.watchdogs().member(i).pubkey_hash(), ActorRole::Watchdog(i));
        }
        map
    }

    fn owner_of(&self, owners: &BTreeMap<Digest20, ActorRole>, out: &TxOutput, outpoint: &OutPoint) -> Option<ActorRole> {
        if out.locking == self.channel.setup().publisher_locking() {
            let member = self
                .publishers
                .claimed
                .iter()
                .find(|(t, _)| *t == outpoint.txid)
                .map(|(_, m)| *m)?;
            return Some(ActorRole::Publisher(member));
        }
        owners
            .iter()
            .find(|(h, _)| out.locking == templates::p2pkh(h))
            .map(|(_, r)| *r)
    }

    fn into_trace(self, terminated: bool) -> ScenarioTrace {
        let owners = self.owners();
        let on_chain = self
            .chain
            .blocks()
            .iter()
            .flat_map(|b| b.txids.iter().map(move |t| (b.height, *t)))
            .map(|(height, txid)| OnChainTx {
                txid,
                label: self.labels.get(&txid).copied().unwrap_or(TxLabel::Seed),
                height,
                fee: self.chain.confirmed(&txid).map_or(0, |c| c.fee),
            })
            .collect();
        let utxo = self
            .chain
            .utxo()
            .iter()
            .map(|(op, e)| UtxoRecord {
                outpoint: *op,
                value: e.output.value,
                owner: self.owner_of(&owners, &e.output, op),
            })
            .collect();
        ScenarioTrace {
            horizon: self.config.horizon,
            terminated,
            final_height: self.chain.height(),
            events: self.events,
            on_chain,
            utxo,
            bribes: self.bribes,
            seeded_value: self.chain.seeded_value(),
            total_fees: self.chain.total_fees(),
        }
    }
}
