use super::*;
use crate::crypto::{sha256, Keypair};
use crate::ledger::{Chain, TxOutput, ValidationError};
use crate::script::{execute, push, templates, ExecContext, Opcode, Script};

fn descriptor() -> ChannelDescriptor {
    ChannelDescriptor {
        params: ChannelParams {
            omega_a: 50_000,
            omega_b: 50_000,
            w: 6,
            k1: 5,
            k2: 5,
            sigma1: 12_000,
            gamma1: 12_000,
            max_states: DEFAULT_MAX_STATES,
        },
        master_seed_a: MasterSeed(sha256(b"device").0),
        master_seed_b: MasterSeed(sha256(b"gateway").0),
    }
}

fn seed(chain: &mut Chain, nonce: u32, key: &Keypair, value: u64) -> SpendableInput {
    let tx = Transaction::coinbase(
        nonce,
        vec![TxOutput {
            value,
            locking: templates::p2pkh(&key.pubkey_hash()),
        }],
    );
    let outpoint = tx.outpoint(0);
    chain.submit(tx).unwrap();
    SpendableInput {
        outpoint,
        value,
        key: *key,
    }
}

/// Funded channel on a fresh chain, funding confirmed at height 2.
fn funded() -> (Channel, Chain) {
    let mut ch = Channel::new(&descriptor(), None).unwrap();
    let mut chain = Chain::new();
    let a = seed(&mut chain, 1, &ch.keys_a().funding(), 50_000);
    let b = seed(&mut chain, 2, &ch.keys_b().funding(), 50_000);
    chain.mine_block();
    let tx = build_funding_tx(ch.setup(), &[a], &[b], 0).unwrap();
    let outpoint = tx.outpoint(0);
    chain.submit(tx).unwrap();
    chain.mine_block();
    ch.open(outpoint);
    (ch, chain)
}

fn mine_until(chain: &mut Chain, tip: u64) {
    while chain.height() < tip {
        chain.mine_block();
    }
}

#[test]
fn funding_tx_shapes() {
    let ch = Channel::new(&descriptor(), None).unwrap();
    let mut chain = Chain::new();
    let a = seed(&mut chain, 1, &ch.keys_a().funding(), 50_000);
    let b = seed(&mut chain, 2, &ch.keys_b().funding(), 50_000);
    chain.mine_block();
    let tx = build_funding_tx(ch.setup(), &[a], &[b], 0).unwrap();
    assert_eq!((tx.inputs.len(), tx.outputs.len()), (2, 1));
    assert_eq!(tx.outputs[0].value, 100_000);
    assert_eq!(tx.outputs[0].locking, templates::p2sh(&ch.setup().funding_redeem()));
    assert_eq!(chain.validate(&tx), Ok(0));

    let short = SpendableInput { value: 49_999, ..b };
    assert_eq!(
        build_funding_tx(ch.setup(), &[a], &[short], 0),
        Err(ChannelError::InsufficientFunds {
            needed: 50_000,
            available: 49_999
        })
    );
    let change = build_funding_tx(ch.setup(), &[a], &[b], 300).unwrap_err();
    assert!(matches!(change, ChannelError::InsufficientFunds { needed: 50_300, .. }));
}

#[test]
fn gateway_only_funding() {
    let mut d = descriptor();
    d.params.omega_a = 0;
    let ch = Channel::new(&d, None).unwrap();
    let mut chain = Chain::new();
    let b = seed(&mut chain, 1, &ch.keys_b().funding(), 60_000);
    chain.mine_block();
    let tx = build_funding_tx(ch.setup(), &[], &[b], 1_000).unwrap();
    assert_eq!(tx.inputs.len(), 1);
    assert_eq!(tx.outputs[1].value, 9_000);
    assert_eq!(chain.validate(&tx), Ok(1_000));
}

#[test]
fn params_validation() {
    let mut d = descriptor();
    d.params.w = 0;
    assert!(Channel::new(&d, None).is_err());
    let mut d = descriptor();
    d.params.k2 = 16;
    assert!(Channel::new(&d, None).is_err());
    let mut d = descriptor();
    d.params.sigma1 = 50_000;
    d.params.gamma1 = 50_000;
    assert!(Channel::new(&d, None).is_err());
}

#[test]
fn commitment_values_are_constant_sum() {
    let (mut ch, _) = funded();
    ch.update_state(60_000).unwrap();
    let pair = ch.commitment_pair(2, 0).unwrap();
    let values: Vec<u64> = pair.tx_a.outputs.iter().map(|o| o.value).collect();
    assert_eq!(values, vec![48_000, 40_000, 12_000]);
    let values: Vec<u64> = pair.tx_b.outputs.iter().map(|o| o.value).collect();
    assert_eq!(values, vec![40_000, 60_000]);

    let pair = ch.commitment_pair(2, 500).unwrap();
    assert_eq!(pair.tx_a.output_total(), Some(99_500));
    assert_eq!(pair.tx_b.output_total(), Some(99_500));
}

#[test]
fn commitment_budget_and_capacity() {
    let (mut ch, _) = funded();
    ch.update_state(11_999).unwrap();
    assert!(matches!(ch.commitment_pair(2, 0), Err(ChannelError::BudgetExceeded(_))));
    let mut d = descriptor();
    d.params.max_states = 2;
    let mut ch = Channel::new(&d, None).unwrap();
    ch.update_state(1).unwrap();
    assert_eq!(ch.update_state(2), Err(ChannelError::StateExhausted(3)));
}

#[test]
fn only_the_named_party_completes_a_commitment() {
    let (ch, chain) = funded();
    let pair = ch.commitment_pair(1, 0).unwrap();
    let setup = ch.setup();
    assert!(chain.validate(&pair.complete_a(setup, &ch.keys_a().funding())).is_ok());
    assert!(chain.validate(&pair.complete_b(setup, &ch.keys_b().funding())).is_ok());
    let swapped = pair.complete_a(setup, &ch.keys_b().funding());
    assert!(matches!(chain.validate(&swapped), Err(ValidationError::ScriptInvalid { .. })));
    let swapped = pair.complete_b(setup, &ch.keys_a().funding());
    assert!(matches!(chain.validate(&swapped), Err(ValidationError::ScriptInvalid { .. })));
}

#[test]
fn timelocked_branch_matures_after_w_blocks() {
    let (ch, mut chain) = funded();
    let pair = ch.commitment_pair(1, 0).unwrap();
    let tx_a = pair.complete_a(ch.setup(), &ch.keys_a().funding());
    chain.submit(tx_a.clone()).unwrap();
    chain.mine_block();
    let conf = chain.height();
    let own_a = ch.keys_a().state(1).a;
    let claim = timelock_claim(&tx_a, &own_a, &own_a.public_key, 6, 0).unwrap();
    mine_until(&mut chain, conf + 4);
    assert!(chain.validate(&claim).is_err(), "spend at conf + W - 1");
    chain.mine_block();
    assert!(chain.validate(&claim).is_ok(), "spend at conf + W");
}

#[test]
fn revocation_branch_needs_both_keys() {
    let (ch, _) = funded();
    let pair = ch.commitment_pair(1, 0).unwrap();
    let locking = &pair.tx_a.outputs[0].locking;
    let gw_b = ch.keys_b().state(1).b;
    let dev_c = ch.keys_a().state(1).c;
    let digest = sha256(b"spend");
    let ctx = ExecContext {
        signing_digest: digest,
        input_confirmation_height: 10,
        current_height: 11,
        input_sequence: 0,
    };
    let witness = |c: &Keypair, b: &Keypair| {
        Script::new(vec![
            push(c.sign(&digest.0).0.to_vec()),
            push(c.public_key.0.to_vec()),
            push(b.sign(&digest.0).0.to_vec()),
            push(b.public_key.0.to_vec()),
            Opcode::Const(0),
        ])
    };
    assert!(execute(&witness(&dev_c, &gw_b), locking, &ctx));
    let stranger = ch.keys_a().state(1).a;
    assert!(!execute(&witness(&stranger, &gw_b), locking, &ctx));
    assert!(!execute(&witness(&dev_c, &stranger), locking, &ctx));
}

#[test]
fn update_revokes_and_exchanges_secrets() {
    let (mut ch, _) = funded();
    let (s2, msgs) = ch.update_state(60_000).unwrap();
    assert_eq!((s2.index, s2.balance_a, s2.balance_b), (2, 60_000, 40_000));
    assert_eq!(msgs.state_index, 1);
    assert_eq!(Keypair::from_secret(msgs.from_a), ch.keys_a().state(1).c);
    assert_eq!(Keypair::from_secret(msgs.from_b), ch.keys_b().state(1).c);
    let (s3, _) = ch.update_state(80_000).unwrap();
    assert_eq!((s3.balance_a, s3.balance_b), (80_000, 20_000));
    assert!(ch.state(2).unwrap().revoked);
    assert!(!ch.current().revoked);

    let (same, _) = ch.update_state(80_000).unwrap();
    assert_eq!((same.index, same.balance_a), (4, 80_000));
    assert!(ch.state(3).unwrap().revoked);
    assert_eq!(ch.update_state(100_001), Err(ChannelError::BalanceOutOfRange(100_001)));
    for s in ch.states() {
        assert_eq!(s.balance_a + s.balance_b, 100_000);
        assert_eq!(s.revoked, s.revocation_secret_a.is_some() && s.revocation_secret_b.is_some());
    }
}

#[test]
fn mutual_close_outputs() {
    let (mut ch, chain) = funded();
    let unchanged = ch.clone().mutual_close(false, 0).unwrap();
    let values: Vec<u64> = unchanged.outputs.iter().map(|o| o.value).collect();
    assert_eq!(values, vec![50_000, 50_000]);

    ch.update_state(80_000).unwrap();
    let relayed = ch.clone().mutual_close(true, 0).unwrap();
    let values: Vec<u64> = relayed.outputs.iter().map(|o| o.value).collect();
    assert_eq!(values, vec![68_000, 20_000, 12_000]);

    let tx = ch.mutual_close(false, 250).unwrap();
    assert_eq!(tx.outputs[0].value, 79_750);
    assert_eq!(tx.outputs[1].value, 20_000);
    assert_eq!(chain.validate(&tx), Ok(250));
    assert!(ch.is_closed());
    assert_eq!(ch.update_state(1), Err(ChannelError::ChannelClosed));
    assert_eq!(ch.mutual_close(false, 0), Err(ChannelError::ChannelClosed));

    let unsigned = mutual_close_tx(ch.setup(), &ch.funding().unwrap(), ch.current(), false, 0).unwrap();
    let sig = sign_input(&unsigned, 0, &ch.keys_a().funding());
    assert_eq!(
        attach_close_signatures(&unsigned, ch.setup(), Some(sig), None),
        Err(ChannelError::MissingSignature(Party::B))
    );
}

#[test]
fn breach_remedy_against_revoked_device_commitment() {
    let (mut ch, mut chain) = funded();
    ch.update_state(70_000).unwrap();
    ch.update_state(40_000).unwrap();
    let revoked = ch.commitment_pair(2, 0).unwrap().complete_a(ch.setup(), &ch.keys_a().funding());
    chain.submit(revoked.clone()).unwrap();
    chain.mine_block();
    let conf = chain.height();
    let timing = |spend| BreachTiming {
        confirmation_height: conf,
        spend_height: spend,
    };
    let remedy = ch.breach_remedy(&revoked, timing(conf + 1), 0, 0).unwrap();
    assert_eq!(remedy.outputs[0].value, 70_000 - 12_000);
    assert!(chain.validate(&remedy).is_ok());
    assert_eq!(ch.breach_remedy(&revoked, timing(conf + 6), 0, 0), Err(ChannelError::WindowExpired));

    let current = ch.commitment_pair(3, 0).unwrap().complete_a(ch.setup(), &ch.keys_a().funding());
    assert_eq!(ch.breach_remedy(&current, timing(conf + 1), 0, 0), Err(ChannelError::NotRevoked(3)));
}

#[test]
fn recovery_against_revoked_gateway_commitment() {
    let (mut ch, mut chain) = funded();
    ch.update_state(20_000).unwrap();
    ch.update_state(70_000).unwrap();
    let revoked = ch.commitment_pair(2, 0).unwrap().complete_b(ch.setup(), &ch.keys_b().funding());
    let v = revoked.outputs[0].value;
    assert_eq!(v, 80_000);
    chain.submit(revoked.clone()).unwrap();
    chain.mine_block();
    let timing = BreachTiming {
        confirmation_height: chain.height(),
        spend_height: chain.height() + 1,
    };
    let rec = ch.breach_remedy(&revoked, timing, 3, 0).unwrap();
    let values: Vec<u64> = rec.outputs.iter().map(|o| o.value).collect();
    assert_eq!(values, vec![v - 24_000, 12_000, 12_000]);
    assert_eq!(rec.outputs[1].locking, templates::p2pkh(&ch.watchdogs().member(3).pubkey_hash()));
    assert!(chain.validate(&rec).is_ok());
    assert_eq!(ch.breach_remedy(&revoked, timing, 5, 0), Err(ChannelError::BadMemberIndex(5)));

    // drop the watchdog signature from the witness
    let mut stripped = rec.clone();
    let mut ops = stripped.inputs[0].unlocking.ops().to_vec();
    ops.remove(4);
    stripped.inputs[0].unlocking = Script::new(ops);
    assert!(matches!(chain.validate(&stripped), Err(ValidationError::ScriptInvalid { .. })));
}

#[test]
fn fee_bounds() {
    let p = descriptor().params;
    let states = [60_000, 80_000, 30_000].map(|a| ChannelState::new(1, a, 100_000 - a));
    let b = check_fee_bounds(&p, &states).unwrap();
    assert!(b.ok);
    assert_eq!(b.sigma1_min, Rational::from(10_000));
    assert_eq!(b.gamma1_min, Rational::from(10_000));
    let exact = ChannelParams { sigma1: 10_000, ..p };
    assert!(!check_fee_bounds(&exact, &states).unwrap().ok);
    let single = check_fee_bounds(&ChannelParams { sigma1: 1, gamma1: 1, ..p }, &states[..1]).unwrap();
    assert!(single.ok);
    assert_eq!(single.sigma1_min, Rational::from(0));
    assert_eq!(check_fee_bounds(&p, &[]), Err(ChannelError::EmptyStates));
    let odd = ChannelParams { k1: 3, ..p };
    let b = check_fee_bounds(&odd, &states).unwrap();
    assert_eq!(b.sigma1_min, Rational::new(50_000, 3));
    assert_eq!(ceil_sats(&b.sigma1_min), 16_667);
}

#[test]
fn device_storage_holds_no_derived_secret() {
    let (mut ch, _) = funded();
    for a in [60_000, 80_000, 30_000] {
        ch.update_state(a).unwrap();
    }
    let stored = serde_json::to_string(&ch.device_storage()).unwrap();
    let restored: DeviceStorage = serde_json::from_str(&stored).unwrap();
    assert_eq!(restored.state_index, 4);
    let keys = restored.keys();
    let mut secrets = vec![keys.funding().secret_key, keys.close().secret_key];
    for j in 1..=4 {
        let s = keys.state(j);
        secrets.extend([s.a.secret_key, s.b.secret_key, s.c.secret_key, keys.recovery(j).secret_key]);
        assert_eq!(s, ch.keys_a().state(j));
        let gw = ch.keys_b().state(j).c.secret_key;
        secrets.push(gw);
    }
    for sk in secrets {
        assert!(!stored.contains(&hex::encode(sk.to_bytes())));
    }
}

#[test]
fn descriptor_json_is_flat() {
    let json = serde_json::to_value(descriptor()).unwrap();
    for field in ["omega_a", "omega_b", "w", "k1", "k2", "sigma1", "gamma1", "max_states", "master_seed_a", "master_seed_b"] {
        assert!(json.get(field).is_some(), "{field}");
    }
    let mut without_max = json.clone();
    without_max.as_object_mut().unwrap().remove("max_states");
    let d: ChannelDescriptor = serde_json::from_value(without_max).unwrap();
    assert_eq!(d.params.max_states, DEFAULT_MAX_STATES);
}
