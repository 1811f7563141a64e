//! Deterministic single-chain ledger: transactions, blocks and the UTXO set.
//!
//! Heights are discrete ticks. A spend is evaluated at the height of the
//! block that would include it, so an output confirmed at height `h` and
//! locked for `W` blocks is first spendable in block `h + W`.
//!
//! Canonical transaction layout (all integers little-endian):
//!
//! ```text
//! kind:u8 (0 = standard, 1 = coinbase) [nonce:u32 if coinbase]
//! n_in:u32 { txid:[32] index:u32 script_len:u32 script sequence:u32 }*
//! n_out:u32 { value:u64 script_len:u32 script }*
//! ```

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::crypto::{sha256d, Digest32};
use crate::script::{try_execute, ExecContext, ExecError, Script};

pub type Txid = Digest32;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct OutPoint {
    pub txid: Txid,
    pub output_index: u32,
}

impl OutPoint {
    pub fn new(txid: Txid, output_index: u32) -> Self {
        OutPoint { txid, output_index }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TxInput {
    pub previous: OutPoint,
    pub unlocking: Script,
    /// Relative locktime claimed by this input; 0 claims none.
    pub sequence: u32,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TxOutput {
    pub value: u64,
    pub locking: Script,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Transaction {
    pub inputs: Vec<TxInput>,
    pub outputs: Vec<TxOutput>,
    /// `Some(nonce)` marks an exogenous seed transaction with no inputs.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub coinbase: Option<u32>,
}

impl Transaction {
    pub fn coinbase(nonce: u32, outputs: Vec<TxOutput>) -> Self {
        Transaction {
            inputs: Vec::new(),
            outputs,
            coinbase: Some(nonce),
        }
    }

    pub fn is_coinbase(&self) -> bool {
        self.coinbase.is_some()
    }

    pub fn serialize(&self) -> Vec<u8> {
        let mut out = Vec::new();
        match self.coinbase {
            Some(nonce) => {
                out.push(1);
                out.extend_from_slice(&nonce.to_le_bytes());
            }
            None => out.push(0),
        }
        out.extend_from_slice(&(self.inputs.len() as u32).to_le_bytes());
        for input in &self.inputs {
            out.extend_from_slice(&input.previous.txid.0);
            out.extend_from_slice(&input.previous.output_index.to_le_bytes());
            let script = input.unlocking.to_bytes();
            out.extend_from_slice(&(script.len() as u32).to_le_bytes());
            out.extend_from_slice(&script);
            out.extend_from_slice(&input.sequence.to_le_bytes());
        }
        out.extend_from_slice(&(self.outputs.len() as u32).to_le_bytes());
        for output in &self.outputs {
            out.extend_from_slice(&output.value.to_le_bytes());
            let script = output.locking.to_bytes();
            out.extend_from_slice(&(script.len() as u32).to_le_bytes());
            out.extend_from_slice(&script);
        }
        out
    }

    pub fn txid(&self) -> Txid {
        txid(self)
    }

    pub fn outpoint(&self, index: u32) -> OutPoint {
        OutPoint::new(self.txid(), index)
    }

    pub fn output_total(&self) -> Option<u64> {
        self.outputs.iter().try_fold(0u64, |acc, o| acc.checked_add(o.value))
    }
}

/// Identifier over the serialization with unlocking scripts blanked, so a
/// child presigned against an unsigned parent stays valid once the parent
/// is signed.
pub fn txid(tx: &Transaction) -> Txid {
    sha256d(&blanked(tx).serialize())
}

fn blanked(tx: &Transaction) -> Transaction {
    let mut blank = tx.clone();
    for input in &mut blank.inputs {
        input.unlocking = Script::empty();
    }
    blank
}

/// Digest every signer of `tx` commits to: the canonical serialization with
/// all unlocking scripts blanked.
pub fn signing_digest(tx: &Transaction, input_index: usize) -> Result<Digest32, LedgerError> {
    if input_index >= tx.inputs.len() {
        return Err(LedgerError::IndexOutOfRange(input_index));
    }
    Ok(sha256d(&blanked(tx).serialize()))
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum LedgerError {
    #[error("input index {0} out of range")]
    IndexOutOfRange(usize),
    #[error("size estimate needs at least one input and one output")]
    DomainError,
}

#[derive(Debug, Clone, PartialEq, Eq, Error, Serialize)]
pub enum ValidationError {
    #[error("missing utxo {0:?}")]
    MissingUtxo(OutPoint),
    #[error("script invalid on input {input_index}: {reason}")]
    ScriptInvalid {
        input_index: usize,
        #[serde(skip)]
        error: ExecError,
        reason: String,
    },
    #[error("double spend of {0:?}")]
    DoubleSpend(OutPoint),
    #[error("value overflow")]
    ValueOverflow,
    #[error("outputs exceed inputs")]
    NegativeFee,
    #[error("malformed transaction: {0}")]
    Malformed(&'static str),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct UtxoEntry {
    pub output: TxOutput,
    pub confirmation_height: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfirmedTx {
    pub tx: Transaction,
    pub height: u64,
    pub fee: u64,
    /// Confirmation height of each spent output, in input order.
    pub input_heights: Vec<u64>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Block {
    pub height: u64,
    pub txids: Vec<Txid>,
    pub fees: u64,
}

/// Overlay of pending spends/creations on top of the confirmed UTXO set.
#[derive(Default)]
struct View {
    created: BTreeMap<OutPoint, UtxoEntry>,
    spent: BTreeSet<OutPoint>,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct Chain {
    height: u64,
    blocks: Vec<Block>,
    utxo: BTreeMap<OutPoint, UtxoEntry>,
    confirmed: BTreeMap<Txid, ConfirmedTx>,
    spent_by: BTreeMap<OutPoint, (Txid, u64)>,
    mempool: Vec<Transaction>,
    seeded_value: u64,
    total_fees: u64,
    diagnostics: Vec<String>,
}

impl Chain {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn height(&self) -> u64 {
        self.height
    }

    pub fn blocks(&self) -> &[Block] {
        &self.blocks
    }

    pub fn mempool(&self) -> &[Transaction] {
        &self.mempool
    }

    pub fn utxo(&self) -> &BTreeMap<OutPoint, UtxoEntry> {
        &self.utxo
    }

    pub fn confirmed(&self, txid: &Txid) -> Option<&ConfirmedTx> {
        self.confirmed.get(txid)
    }

    pub fn confirmed_txs(&self) -> impl Iterator<Item = &ConfirmedTx> {
        self.blocks
            .iter()
            .flat_map(|b| b.txids.iter())
            .map(|id| &self.confirmed[id])
    }

    pub fn seeded_value(&self) -> u64 {
        self.seeded_value
    }

    pub fn total_fees(&self) -> u64 {
        self.total_fees
    }

    pub fn diagnostics(&self) -> &[String] {
        &self.diagnostics
    }

    /// Blocks on top of (and including) the one confirming `txid`.
    pub fn confirmation_depth(&self, txid: &Txid) -> Option<u64> {
        self.confirmed.get(txid).map(|c| self.height - c.height + 1)
    }

    /// Validates against the confirmed set plus everything already in the mempool.
    pub fn validate(&self, tx: &Transaction) -> Result<u64, ValidationError> {
        let spend_height = self.height + 1;
        let mut view = View::default();
        for pending in &self.mempool {
            // the mempool was valid when admitted; replay it into the view
            if self.check(&view, pending, spend_height).is_ok() {
                self.apply_to_view(&mut view, pending, spend_height);
            }
        }
        self.check(&view, tx, spend_height)
    }

    fn lookup<'a>(&'a self, view: &'a View, op: &OutPoint) -> Result<&'a UtxoEntry, ValidationError> {
        if view.spent.contains(op) || self.spent_by.contains_key(op) {
            return Err(ValidationError::DoubleSpend(*op));
        }
        view.created
            .get(op)
            .or_else(|| self.utxo.get(op))
            .ok_or(ValidationError::MissingUtxo(*op))
    }

    fn check(&self, view: &View, tx: &Transaction, spend_height: u64) -> Result<u64, ValidationError> {
        if tx.outputs.is_empty() {
            return Err(ValidationError::Malformed("no outputs"));
        }
        let out_total = tx.output_total().ok_or(ValidationError::ValueOverflow)?;
        if tx.is_coinbase() {
            if !tx.inputs.is_empty() {
                return Err(ValidationError::Malformed("coinbase with inputs"));
            }
            return Ok(0);
        }
        if tx.inputs.is_empty() {
            return Err(ValidationError::Malformed("no inputs"));
        }
        let mut seen = BTreeSet::new();
        let mut in_total = 0u64;
        for (i, input) in tx.inputs.iter().enumerate() {
            if !seen.insert(input.previous) {
                return Err(ValidationError::DoubleSpend(input.previous));
            }
            let entry = self.lookup(view, &input.previous)?;
            in_total = in_total
                .checked_add(entry.output.value)
                .ok_or(ValidationError::ValueOverflow)?;
            let ctx = ExecContext {
                signing_digest: signing_digest(tx, i).expect("index in range"),
                input_confirmation_height: entry.confirmation_height,
                current_height: spend_height,
                input_sequence: input.sequence,
            };
            try_execute(&input.unlocking, &entry.output.locking, &ctx).map_err(|error| {
                ValidationError::ScriptInvalid {
                    input_index: i,
                    reason: error.to_string(),
                    error,
                }
            })?;
        }
        in_total.checked_sub(out_total).ok_or(ValidationError::NegativeFee)
    }

    fn apply_to_view(&self, view: &mut View, tx: &Transaction, height: u64) {
        for input in &tx.inputs {
            view.spent.insert(input.previous);
            view.created.remove(&input.previous);
        }
        let id = tx.txid();
        for (i, output) in tx.outputs.iter().enumerate() {
            view.created.insert(
                OutPoint::new(id, i as u32),
                UtxoEntry {
                    output: output.clone(),
                    confirmation_height: height,
                },
            );
        }
    }

    /// Admits `tx` to the mempool if it is currently valid.
    pub fn submit(&mut self, tx: Transaction) -> Result<Txid, ValidationError> {
        self.validate(&tx)?;
        let id = tx.txid();
        self.mempool.push(tx);
        Ok(id)
    }

    /// Confirms every mempool transaction still valid at the new height, in
    /// FIFO order, and advances the tip.
    pub fn mine_block(&mut self) -> Block {
        let height = self.height + 1;
        let pending = std::mem::take(&mut self.mempool);
        let mut view = View::default();
        let mut accepted = Vec::new();
        for tx in pending {
            match self.check(&view, &tx, height) {
                Ok(fee) => {
                    self.apply_to_view(&mut view, &tx, height);
                    accepted.push((tx, fee));
                }
                Err(e) => self
                    .diagnostics
                    .push(format!("height {height}: dropped {}: {e}", tx.txid())),
            }
        }

        let mut block = Block {
            height,
            txids: Vec::with_capacity(accepted.len()),
            fees: 0,
        };
        for (tx, fee) in accepted {
            let id = tx.txid();
            let mut input_heights = Vec::with_capacity(tx.inputs.len());
            for input in &tx.inputs {
                let entry = self.utxo.remove(&input.previous).expect("validated input");
                input_heights.push(entry.confirmation_height);
                self.spent_by.insert(input.previous, (id, height));
            }
            for (i, output) in tx.outputs.iter().enumerate() {
                self.utxo.insert(
                    OutPoint::new(id, i as u32),
                    UtxoEntry {
                        output: output.clone(),
                        confirmation_height: height,
                    },
                );
            }
            if tx.is_coinbase() {
                self.seeded_value += tx.output_total().unwrap_or(0);
            }
            block.fees += fee;
            block.txids.push(id);
            self.confirmed.insert(
                id,
                ConfirmedTx {
                    tx,
                    height,
                    fee,
                    input_heights,
                },
            );
        }
        self.total_fees += block.fees;
        self.height = height;
        self.blocks.push(block.clone());
        block
    }

    /// Confirmed transaction spending `outpoint`, with its height.
    pub fn scan_for_spend(&self, outpoint: &OutPoint) -> Option<(Txid, u64)> {
        self.spent_by.get(outpoint).copied()
    }

    /// Context under which input `i` of a confirmed transaction was validated.
    pub fn recorded_context(&self, txid: &Txid, input_index: usize) -> Option<ExecContext> {
        let c = self.confirmed.get(txid)?;
        let input = c.tx.inputs.get(input_index)?;
        Some(ExecContext {
            signing_digest: signing_digest(&c.tx, input_index).ok()?,
            input_confirmation_height: c.input_heights[input_index],
            current_height: c.height,
            input_sequence: input.sequence,
        })
    }

    /// Locking script of the output spent by input `i` of a confirmed transaction.
    pub fn spent_output(&self, txid: &Txid, input_index: usize) -> Option<&TxOutput> {
        let c = self.confirmed.get(txid)?;
        let prev = c.tx.inputs.get(input_index)?.previous;
        self.confirmed
            .get(&prev.txid)
            .and_then(|p| p.tx.outputs.get(prev.output_index as usize))
    }

    pub fn report(&self) -> ChainReport {
        ChainReport {
            height: self.height,
            blocks: self
                .blocks
                .iter()
                .map(|b| BlockReport {
                    height: b.height,
                    txs: b
                        .txids
                        .iter()
                        .map(|id| TxReport {
                            txid: *id,
                            fee: self.confirmed[id].fee,
                            inputs: self.confirmed[id].tx.inputs.len(),
                            outputs: self.confirmed[id].tx.outputs.iter().map(|o| o.value).collect(),
                        })
                        .collect(),
                })
                .collect(),
            utxo: self
                .utxo
                .iter()
                .map(|(op, e)| UtxoReport {
                    outpoint: *op,
                    value: e.output.value,
                    height: e.confirmation_height,
                })
                .collect(),
            seeded_value: self.seeded_value,
            total_fees: self.total_fees,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ChainReport {
    pub height: u64,
    pub blocks: Vec<BlockReport>,
    pub utxo: Vec<UtxoReport>,
    pub seeded_value: u64,
    pub total_fees: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct BlockReport {
    pub height: u64,
    pub txs: Vec<TxReport>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct TxReport {
    pub txid: Txid,
    pub fee: u64,
    pub inputs: usize,
    pub outputs: Vec<u64>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct UtxoReport {
    pub outpoint: OutPoint,
    pub value: u64,
    pub height: u64,
}

/// Transaction size bracket `148 i + 34 o + 10 ± i` bytes.
pub fn estimate_size(num_inputs: u64, num_outputs: u64) -> Result<(u64, u64), LedgerError> {
    if num_inputs == 0 || num_outputs == 0 {
        return Err(LedgerError::DomainError);
    }
    let centre = 148 * num_inputs + 34 * num_outputs + 10;
    Ok((centre - num_inputs, centre + num_inputs))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::crypto::{derive_keypair, KeyPath, KeyRole, Keypair, MasterSeed, Party};
    use crate::script::templates::{p2pkh, p2pkh_unlock};
    use crate::script::parse_script;

    fn kp(n: u8) -> Keypair {
        derive_keypair(&MasterSeed([n; 32]), &KeyPath::new(Party::B, KeyRole::Close, 0, 0).unwrap())
    }

    fn seeded(owner: &Keypair, value: u64) -> (Chain, OutPoint) {
        let mut chain = Chain::new();
        let cb = Transaction::coinbase(0, vec![TxOutput { value, locking: p2pkh(&owner.pubkey_hash()) }]);
        let id = chain.submit(cb).unwrap();
        chain.mine_block();
        (chain, OutPoint::new(id, 0))
    }

    fn spend(from: OutPoint, owner: &Keypair, to: &Keypair, value: u64, sequence: u32) -> Transaction {
        let mut tx = Transaction {
            inputs: vec![TxInput { previous: from, unlocking: Script::empty(), sequence }],
            outputs: vec![TxOutput { value, locking: p2pkh(&to.pubkey_hash()) }],
            coinbase: None,
        };
        let d = signing_digest(&tx, 0).unwrap();
        tx.inputs[0].unlocking = p2pkh_unlock(&owner.sign(&d.0), &owner.public_key);
        tx
    }

    #[test]
    fn size_estimates() {
        assert_eq!(estimate_size(1, 2).unwrap(), (225, 227));
        assert_eq!(estimate_size(2, 2).unwrap(), (372, 376));
        assert_eq!(estimate_size(1, 1).unwrap(), (191, 193));
        assert_eq!(estimate_size(0, 1), Err(LedgerError::DomainError));
        assert_eq!(estimate_size(1, 0), Err(LedgerError::DomainError));
    }

    #[test]
    fn txid_determinism_and_sensitivity() {
        let (a, b) = (kp(1), kp(2));
        let t1 = spend(OutPoint::new(Digest32([9; 32]), 0), &a, &b, 10, 0);
        assert_eq!(t1.txid(), t1.clone().txid());
        let mut t2 = t1.clone();
        t2.outputs[0].value = 11;
        assert_ne!(t1.txid(), t2.txid());
    }

    #[test]
    fn signing_digest_blanks_unlocking() {
        let (a, b) = (kp(1), kp(2));
        let tx = spend(OutPoint::new(Digest32([9; 32]), 0), &a, &b, 10, 0);
        let mut blanked = tx.clone();
        blanked.inputs[0].unlocking = Script::empty();
        assert_eq!(signing_digest(&tx, 0).unwrap(), signing_digest(&blanked, 0).unwrap());
        assert_eq!(signing_digest(&tx, 1), Err(LedgerError::IndexOutOfRange(1)));

        let mut two = tx.clone();
        two.inputs.push(two.inputs[0].clone());
        two.inputs[1].previous.output_index = 1;
        assert_eq!(signing_digest(&two, 0).unwrap(), signing_digest(&two, 1).unwrap());

        let mut changed = tx.clone();
        changed.outputs[0].value = 9;
        assert_ne!(signing_digest(&tx, 0).unwrap(), signing_digest(&changed, 0).unwrap());
    }

    #[test]
    fn spend_mine_and_scan() {
        let (a, b) = (kp(1), kp(2));
        let (mut chain, op) = seeded(&a, 1_000);
        assert_eq!(chain.scan_for_spend(&op), None);
        let tx = spend(op, &a, &b, 900, 0);
        let id = chain.submit(tx).unwrap();
        assert_eq!(chain.scan_for_spend(&op), None, "mempool spends are not reported");
        let block = chain.mine_block();
        assert_eq!(block.height, 2);
        assert_eq!(block.fees, 100);
        assert_eq!(chain.scan_for_spend(&op), Some((id, 2)));
        assert_eq!(chain.utxo()[&OutPoint::new(id, 0)].confirmation_height, 2);
        assert_eq!(chain.confirmation_depth(&id), Some(1));
        chain.mine_block();
        assert_eq!(chain.confirmation_depth(&id), Some(2));
    }

    #[test]
    fn empty_block_advances_height_only() {
        let (mut chain, _) = seeded(&kp(1), 5);
        let before = chain.utxo().clone();
        chain.mine_block();
        assert_eq!(chain.height(), 2);
        assert_eq!(chain.utxo(), &before);
    }

    #[test]
    fn double_spend_in_mempool() {
        let (a, b, c) = (kp(1), kp(2), kp(3));
        let (mut chain, op) = seeded(&a, 1_000);
        chain.submit(spend(op, &a, &b, 1_000, 0)).unwrap();
        assert_eq!(
            chain.submit(spend(op, &a, &c, 1_000, 0)),
            Err(ValidationError::DoubleSpend(op))
        );
    }

    #[test]
    fn conflicting_mempool_txs_first_wins() {
        let (a, b, c) = (kp(1), kp(2), kp(3));
        let (mut chain, op) = seeded(&a, 1_000);
        let first = spend(op, &a, &b, 1_000, 0);
        let second = spend(op, &a, &c, 999, 0);
        // bypass submit to force both into the mempool
        chain.mempool.push(first.clone());
        chain.mempool.push(second.clone());
        let block = chain.mine_block();
        assert_eq!(block.txids, vec![first.txid()]);
        assert_eq!(chain.diagnostics().len(), 1);
        assert!(chain.confirmed(&second.txid()).is_none());
    }

    #[test]
    fn negative_fee_and_missing() {
        let (a, b) = (kp(1), kp(2));
        let (chain, op) = seeded(&a, 1_000);
        assert_eq!(chain.validate(&spend(op, &a, &b, 1_001, 0)), Err(ValidationError::NegativeFee));
        let ghost = OutPoint::new(Digest32([1; 32]), 0);
        assert_eq!(chain.validate(&spend(ghost, &a, &b, 1, 0)), Err(ValidationError::MissingUtxo(ghost)));
        let wrong_key = spend(op, &b, &a, 1, 0);
        assert!(matches!(
            chain.validate(&wrong_key),
            Err(ValidationError::ScriptInvalid { input_index: 0, .. })
        ));
    }

    #[test]
    fn chained_mempool_spend() {
        let (a, b, c) = (kp(1), kp(2), kp(3));
        let (mut chain, op) = seeded(&a, 1_000);
        let t1 = spend(op, &a, &b, 1_000, 0);
        let t2 = spend(t1.outpoint(0), &b, &c, 1_000, 0);
        chain.submit(t1).unwrap();
        chain.submit(t2.clone()).unwrap();
        chain.mine_block();
        assert_eq!(chain.utxo().len(), 1);
        assert!(chain.utxo().contains_key(&t2.outpoint(0)));
    }

    #[test]
    fn csv_locked_output() {
        let (a, b) = (kp(1), kp(2));
        let mut chain = Chain::new();
        let lock = parse_script(&format!(
            "6 CHECKSEQUENCEVERIFY DROP DUP HASH160 <{}> EQUALVERIFY CHECKSIG",
            a.pubkey_hash()
        ))
        .unwrap();
        let id = chain.submit(Transaction::coinbase(1, vec![TxOutput { value: 50, locking: lock }])).unwrap();
        chain.mine_block();
        let conf = chain.confirmed(&id).unwrap().height;
        let tx = spend(OutPoint::new(id, 0), &a, &b, 50, 6);
        // inclusion height = tip + 1
        while chain.height() + 1 < conf + 6 - 1 {
            chain.mine_block();
        }
        assert_eq!(chain.height() + 1, conf + 5);
        assert!(matches!(chain.validate(&tx), Err(ValidationError::ScriptInvalid { .. })));
        chain.mine_block();
        assert_eq!(chain.height() + 1, conf + 6);
        assert!(chain.validate(&tx).is_ok());
    }

    #[test]
    fn recorded_contexts_replay() {
        let (a, b) = (kp(1), kp(2));
        let (mut chain, op) = seeded(&a, 1_000);
        let id = chain.submit(spend(op, &a, &b, 1_000, 0)).unwrap();
        chain.mine_block();
        let ctx = chain.recorded_context(&id, 0).unwrap();
        let tx = &chain.confirmed(&id).unwrap().tx;
        let lock = &chain.spent_output(&id, 0).unwrap().locking;
        assert!(crate::script::execute(&tx.inputs[0].unlocking, lock, &ctx));
    }
}
