//! Stack-based script subset: textual grammar, canonical bytes, interpreter.
//!
//! Opcode byte table (values follow Bitcoin's numbering):
//!
//! | byte        | opcode                 |
//! |-------------|------------------------|
//! | `0x00`      | `0` (pushes empty)     |
//! | `0x01-0x4b` | push of that many bytes|
//! | `0x51-0x60` | `1` .. `16`            |
//! | `0x63`      | `IF`                   |
//! | `0x67`      | `ELSE`                 |
//! | `0x68`      | `ENDIF`                |
//! | `0x75`      | `DROP`                 |
//! | `0x76`      | `DUP`                  |
//! | `0x87`      | `EQUAL`                |
//! | `0x88`      | `EQUALVERIFY`          |
//! | `0xa9`      | `HASH160`              |
//! | `0xac`      | `CHECKSIG`             |
//! | `0xad`      | `CHECKSIGVERIFY`       |
//! | `0xae`      | `CHECKMULTISIG`        |
//! | `0xaf`      | `CHECKMULTISIGVERIFY`  |
//! | `0xb2`      | `CHECKSEQUENCEVERIFY`  |
//!
//! In text form, `CHECKSIG DROP` and `CHECKMULTISIG DROP` are read as their
//! `VERIFY` counterparts: dropping the result would otherwise check nothing.

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::crypto::{hash160, verify, Digest20, Digest32, PublicKey, Signature};

pub const MAX_SCRIPT_SIZE: usize = 10_000;
pub const MAX_STACK_DEPTH: usize = 1_000;
pub const MAX_PUSH: usize = 75;
pub const MAX_MULTISIG_KEYS: usize = 15;

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum Opcode {
    /// Data push of 1..=75 bytes.
    Push(Vec<u8>),
    /// Small integer 0..=16.
    Const(u8),
    Dup,
    Hash160,
    Equal,
    EqualVerify,
    CheckSig,
    CheckSigVerify,
    CheckMultiSig,
    CheckMultiSigVerify,
    CheckSequenceVerify,
    Drop,
    If,
    Else,
    EndIf,
}

impl Opcode {
    fn mnemonic(&self) -> Option<&'static str> {
        Some(match self {
            Opcode::Dup => "DUP",
            Opcode::Hash160 => "HASH160",
            Opcode::Equal => "EQUAL",
            Opcode::EqualVerify => "EQUALVERIFY",
            Opcode::CheckSig => "CHECKSIG",
            Opcode::CheckSigVerify => "CHECKSIGVERIFY",
            Opcode::CheckMultiSig => "CHECKMULTISIG",
            Opcode::CheckMultiSigVerify => "CHECKMULTISIGVERIFY",
            Opcode::CheckSequenceVerify => "CHECKSEQUENCEVERIFY",
            Opcode::Drop => "DROP",
            Opcode::If => "IF",
            Opcode::Else => "ELSE",
            Opcode::EndIf => "ENDIF",
            Opcode::Push(_) | Opcode::Const(_) => return None,
        })
    }

    fn byte(&self) -> u8 {
        match self {
            Opcode::Push(d) => d.len() as u8,
            Opcode::Const(0) => 0x00,
            Opcode::Const(n) => 0x50 + n,
            Opcode::If => 0x63,
            Opcode::Else => 0x67,
            Opcode::EndIf => 0x68,
            Opcode::Drop => 0x75,
            Opcode::Dup => 0x76,
            Opcode::Equal => 0x87,
            Opcode::EqualVerify => 0x88,
            Opcode::Hash160 => 0xa9,
            Opcode::CheckSig => 0xac,
            Opcode::CheckSigVerify => 0xad,
            Opcode::CheckMultiSig => 0xae,
            Opcode::CheckMultiSigVerify => 0xaf,
            Opcode::CheckSequenceVerify => 0xb2,
        }
    }

    fn from_byte(b: u8) -> Option<Opcode> {
        Some(match b {
            0x00 => Opcode::Const(0),
            0x51..=0x60 => Opcode::Const(b - 0x50),
            0x63 => Opcode::If,
            0x67 => Opcode::Else,
            0x68 => Opcode::EndIf,
            0x75 => Opcode::Drop,
            0x76 => Opcode::Dup,
            0x87 => Opcode::Equal,
            0x88 => Opcode::EqualVerify,
            0xa9 => Opcode::Hash160,
            0xac => Opcode::CheckSig,
            0xad => Opcode::CheckSigVerify,
            0xae => Opcode::CheckMultiSig,
            0xaf => Opcode::CheckMultiSigVerify,
            0xb2 => Opcode::CheckSequenceVerify,
            _ => return None,
        })
    }

    fn is_push(&self) -> bool {
        matches!(self, Opcode::Push(_) | Opcode::Const(_))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ParseError {
    #[error("unknown token `{0}`")]
    UnknownToken(String),
    #[error("unbalanced conditional")]
    UnbalancedConditional,
    #[error("push of {0} bytes exceeds {MAX_PUSH}")]
    PushTooLarge(usize),
    #[error("script of {0} bytes exceeds {MAX_SCRIPT_SIZE}")]
    ScriptTooLarge(usize),
    #[error("unknown opcode byte 0x{0:02x}")]
    UnknownOpcode(u8),
    #[error("truncated push")]
    Truncated,
    #[error("malformed multisig at opcode {0}")]
    BadMultisig(usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum VerifyKind {
    Equal,
    CheckSig,
    CheckMultiSig,
    Sequence,
    /// Script finished with an empty or false top of stack.
    EvalFalse,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ExecError {
    #[error("stack underflow")]
    StackUnderflow,
    #[error("verification failed: {0:?}")]
    VerifyFailed(VerifyKind),
    #[error("script error: {0}")]
    Script(String),
}

/// Ordered opcode sequence.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Default)]
pub struct Script(Vec<Opcode>);

impl Script {
    pub fn new(ops: Vec<Opcode>) -> Self {
        Script(ops)
    }

    pub fn empty() -> Self {
        Script(Vec::new())
    }

    pub fn ops(&self) -> &[Opcode] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn is_push_only(&self) -> bool {
        self.0.iter().all(Opcode::is_push)
    }

    /// Canonical byte encoding.
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        for op in &self.0 {
            out.push(op.byte());
            if let Opcode::Push(d) = op {
                out.extend_from_slice(d);
            }
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Script, ParseError> {
        if bytes.len() > MAX_SCRIPT_SIZE {
            return Err(ParseError::ScriptTooLarge(bytes.len()));
        }
        let mut ops = Vec::new();
        let mut i = 0;
        while i < bytes.len() {
            let b = bytes[i];
            i += 1;
            if (0x01..=0x4b).contains(&b) {
                let end = i + b as usize;
                if end > bytes.len() {
                    return Err(ParseError::Truncated);
                }
                ops.push(Opcode::Push(bytes[i..end].to_vec()));
                i = end;
            } else {
                ops.push(Opcode::from_byte(b).ok_or(ParseError::UnknownOpcode(b))?);
            }
        }
        let script = Script(ops);
        script.check_conditionals()?;
        Ok(script)
    }

    fn check_conditionals(&self) -> Result<(), ParseError> {
        let mut depth = 0usize;
        for op in &self.0 {
            match op {
                Opcode::If => depth += 1,
                Opcode::Else if depth == 0 => return Err(ParseError::UnbalancedConditional),
                Opcode::EndIf => {
                    depth = depth.checked_sub(1).ok_or(ParseError::UnbalancedConditional)?
                }
                _ => {}
            }
        }
        if depth != 0 {
            return Err(ParseError::UnbalancedConditional);
        }
        Ok(())
    }

    /// Resolves the `(m, n)` arity of every multisig opcode from the
    /// `m <pk>... n` pattern that precedes it.
    pub fn multisig_arities(&self) -> Result<Vec<(u8, u8)>, ParseError> {
        let mut out = Vec::new();
        for (idx, op) in self.0.iter().enumerate() {
            if !matches!(op, Opcode::CheckMultiSig | Opcode::CheckMultiSigVerify) {
                continue;
            }
            let bad = || ParseError::BadMultisig(idx);
            let n = match idx.checked_sub(1).map(|i| &self.0[i]) {
                Some(Opcode::Const(n)) => *n as usize,
                _ => return Err(bad()),
            };
            let m_idx = idx.checked_sub(2 + n).ok_or_else(bad)?;
            if !self.0[m_idx + 1..idx - 1]
                .iter()
                .all(|o| matches!(o, Opcode::Push(d) if d.len() == PublicKey::LEN))
            {
                return Err(bad());
            }
            let m = match &self.0[m_idx] {
                Opcode::Const(m) => *m as usize,
                _ => return Err(bad()),
            };
            if !(1 <= m && m <= n && n <= MAX_MULTISIG_KEYS) {
                return Err(bad());
            }
            out.push((m as u8, n as u8));
        }
        Ok(out)
    }

    /// The 20-byte hash if this is a `HASH160 <h> EQUAL` script-hash lock.
    pub fn p2sh_hash(&self) -> Option<Digest20> {
        match self.0.as_slice() {
            [Opcode::Hash160, Opcode::Push(h), Opcode::Equal] if h.len() == 20 => {
                Digest20::from_slice(h).ok()
            }
            _ => None,
        }
    }
}

impl fmt::Display for Script {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, op) in self.0.iter().enumerate() {
            if i > 0 {
                f.write_str(" ")?;
            }
            match op {
                Opcode::Push(d) => write!(f, "<{}>", hex::encode(d))?,
                Opcode::Const(n) => write!(f, "{n}")?,
                other => f.write_str(other.mnemonic().expect("non-push"))?,
            }
        }
        Ok(())
    }
}

impl std::str::FromStr for Script {
    type Err = ParseError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        parse_script(s)
    }
}

impl Serialize for Script {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&self.to_string())
    }
}

impl<'de> Deserialize<'de> for Script {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        parse_script(&s).map_err(serde::de::Error::custom)
    }
}

/// Builds a push, normalizing the empty push to `0`.
pub fn push(data: impl Into<Vec<u8>>) -> Opcode {
    let data = data.into();
    if data.is_empty() {
        Opcode::Const(0)
    } else {
        Opcode::Push(data)
    }
}

/// Pushes a non-negative number, using the small-integer opcodes where possible.
pub fn push_int(n: u64) -> Opcode {
    if n <= 16 {
        Opcode::Const(n as u8)
    } else {
        Opcode::Push(encode_num(n as i64))
    }
}

pub fn parse_script(text: &str) -> Result<Script, ParseError> {
    let mut ops: Vec<Opcode> = Vec::new();
    for token in text.split_whitespace() {
        let op = if let Some(inner) = token.strip_prefix('<').and_then(|t| t.strip_suffix('>')) {
            let data = hex::decode(inner).map_err(|_| ParseError::UnknownToken(token.to_string()))?;
            if data.len() > MAX_PUSH {
                return Err(ParseError::PushTooLarge(data.len()));
            }
            push(data)
        } else if let Ok(n) = token.parse::<u32>() {
            push_int(n as u64)
        } else {
            let upper = token.to_ascii_uppercase();
            let name = upper.strip_prefix("OP_").unwrap_or(&upper);
            match name {
                "DUP" => Opcode::Dup,
                "HASH160" => Opcode::Hash160,
                "EQUAL" => Opcode::Equal,
                "EQUALVERIFY" => Opcode::EqualVerify,
                "CHECKSIG" => Opcode::CheckSig,
                "CHECKSIGVERIFY" => Opcode::CheckSigVerify,
                "CHECKMULTISIG" => Opcode::CheckMultiSig,
                "CHECKMULTISIGVERIFY" => Opcode::CheckMultiSigVerify,
                "CHECKSEQUENCEVERIFY" | "CSV" => Opcode::CheckSequenceVerify,
                "DROP" => match ops.last() {
                    Some(Opcode::CheckSig) => {
                        *ops.last_mut().unwrap() = Opcode::CheckSigVerify;
                        continue;
                    }
                    Some(Opcode::CheckMultiSig) => {
                        *ops.last_mut().unwrap() = Opcode::CheckMultiSigVerify;
                        continue;
                    }
                    _ => Opcode::Drop,
                },
                "IF" => Opcode::If,
                "ELSE" => Opcode::Else,
                "ENDIF" => Opcode::EndIf,
                "FALSE" => Opcode::Const(0),
                "TRUE" => Opcode::Const(1),
                _ => return Err(ParseError::UnknownToken(token.to_string())),
            }
        };
        ops.push(op);
    }
    let script = Script(ops);
    script.check_conditionals()?;
    let size = script.to_bytes().len();
    if size > MAX_SCRIPT_SIZE {
        return Err(ParseError::ScriptTooLarge(size));
    }
    Ok(script)
}

/// Minimal little-endian sign-magnitude number encoding.
pub fn encode_num(n: i64) -> Vec<u8> {
    if n == 0 {
        return Vec::new();
    }
    let neg = n < 0;
    let mut abs = n.unsigned_abs();
    let mut out = Vec::new();
    while abs > 0 {
        out.push((abs & 0xff) as u8);
        abs >>= 8;
    }
    if out.last().unwrap() & 0x80 != 0 {
        out.push(if neg { 0x80 } else { 0x00 });
    } else if neg {
        *out.last_mut().unwrap() |= 0x80;
    }
    out
}

pub fn decode_num(bytes: &[u8]) -> Result<i64, ExecError> {
    if bytes.len() > 5 {
        return Err(ExecError::Script(format!("number of {} bytes", bytes.len())));
    }
    if bytes.is_empty() {
        return Ok(0);
    }
    let mut v: i64 = 0;
    for (i, b) in bytes.iter().enumerate() {
        v |= (*b as i64) << (8 * i);
    }
    let last = bytes.len() - 1;
    if bytes[last] & 0x80 != 0 {
        v &= !(0x80i64 << (8 * last));
        v = -v;
    }
    Ok(v)
}

fn truthy(v: &[u8]) -> bool {
    v.iter().enumerate().any(|(i, b)| {
        if i == v.len() - 1 {
            b & 0x7f != 0
        } else {
            *b != 0
        }
    })
}

/// Per-input context the interpreter needs from the ledger.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExecContext {
    /// Message CHECKSIG verifies against.
    pub signing_digest: Digest32,
    /// Height of the block that confirmed the output being spent.
    pub input_confirmation_height: u64,
    /// Height of the block that would include the spend.
    pub current_height: u64,
    /// Relative locktime declared on the spending input.
    pub input_sequence: u32,
}

impl ExecContext {
    fn age(&self) -> u64 {
        self.current_height.saturating_sub(self.input_confirmation_height)
    }
}

struct Machine<'a> {
    stack: Vec<Vec<u8>>,
    ctx: &'a ExecContext,
}

impl Machine<'_> {
    fn pop(&mut self) -> Result<Vec<u8>, ExecError> {
        self.stack.pop().ok_or(ExecError::StackUnderflow)
    }

    fn push(&mut self, v: Vec<u8>) -> Result<(), ExecError> {
        if self.stack.len() >= MAX_STACK_DEPTH {
            return Err(ExecError::Script("stack depth limit".into()));
        }
        self.stack.push(v);
        Ok(())
    }

    fn pop_count(&mut self, what: &str) -> Result<usize, ExecError> {
        let n = decode_num(&self.pop()?)?;
        usize::try_from(n).map_err(|_| ExecError::Script(format!("negative {what} count")))
    }

    fn check_sig(&self, sig: &[u8], pk: &[u8]) -> bool {
        let (Ok(sig), Ok(pk)) = (Signature::from_slice(sig), PublicKey::from_slice(pk)) else {
            return false;
        };
        verify(&pk, &self.ctx.signing_digest.0, &sig)
    }

    fn check_multisig(&mut self) -> Result<bool, ExecError> {
        let n = self.pop_count("key")?;
        if n > MAX_MULTISIG_KEYS {
            return Err(ExecError::Script(format!("{n} multisig keys")));
        }
        let mut keys = Vec::with_capacity(n);
        for _ in 0..n {
            keys.push(self.pop()?);
        }
        keys.reverse();
        let m = self.pop_count("signature")?;
        if m == 0 || m > n {
            return Err(ExecError::Script(format!("multisig {m}-of-{n}")));
        }
        let mut sigs = Vec::with_capacity(m);
        for _ in 0..m {
            sigs.push(self.pop()?);
        }
        sigs.reverse();
        // signatures must appear in key order
        let mut key_iter = keys.iter();
        for sig in &sigs {
            loop {
                match key_iter.next() {
                    Some(pk) if self.check_sig(sig, pk) => break,
                    Some(_) => continue,
                    None => return Ok(false),
                }
            }
        }
        Ok(true)
    }

    fn run(&mut self, script: &Script) -> Result<(), ExecError> {
        if script.to_bytes().len() > MAX_SCRIPT_SIZE {
            return Err(ExecError::Script("script size limit".into()));
        }
        // one entry per open IF: whether that branch is executing
        let mut exec: Vec<bool> = Vec::new();
        for op in script.ops() {
            let executing = exec.iter().all(|b| *b);
            match op {
                Opcode::If => {
                    let branch = if executing { truthy(&self.pop()?) } else { false };
                    exec.push(branch);
                    continue;
                }
                Opcode::Else => {
                    let top = exec
                        .last_mut()
                        .ok_or_else(|| ExecError::Script("ELSE without IF".into()))?;
                    *top = !*top;
                    continue;
                }
                Opcode::EndIf => {
                    exec.pop().ok_or_else(|| ExecError::Script("ENDIF without IF".into()))?;
                    continue;
                }
                _ if !executing => continue,
                _ => {}
            }
            match op {
                Opcode::Push(d) => self.push(d.clone())?,
                Opcode::Const(n) => self.push(encode_num(*n as i64))?,
                Opcode::Dup => {
                    let top = self.stack.last().ok_or(ExecError::StackUnderflow)?.clone();
                    self.push(top)?;
                }
                Opcode::Drop => {
                    self.pop()?;
                }
                Opcode::Hash160 => {
                    let v = self.pop()?;
                    self.push(hash160(&v).0.to_vec())?;
                }
                Opcode::Equal | Opcode::EqualVerify => {
                    let a = self.pop()?;
                    let b = self.pop()?;
                    if matches!(op, Opcode::EqualVerify) {
                        if a != b {
                            return Err(ExecError::VerifyFailed(VerifyKind::Equal));
                        }
                    } else {
                        self.push(encode_num((a == b) as i64))?;
                    }
                }
                Opcode::CheckSig | Opcode::CheckSigVerify => {
                    let pk = self.pop()?;
                    let sig = self.pop()?;
                    let ok = self.check_sig(&sig, &pk);
                    if matches!(op, Opcode::CheckSigVerify) {
                        if !ok {
                            return Err(ExecError::VerifyFailed(VerifyKind::CheckSig));
                        }
                    } else {
                        self.push(encode_num(ok as i64))?;
                    }
                }
                Opcode::CheckMultiSig | Opcode::CheckMultiSigVerify => {
                    let ok = self.check_multisig()?;
                    if matches!(op, Opcode::CheckMultiSigVerify) {
                        if !ok {
                            return Err(ExecError::VerifyFailed(VerifyKind::CheckMultiSig));
                        }
                    } else {
                        self.push(encode_num(ok as i64))?;
                    }
                }
                Opcode::CheckSequenceVerify => {
                    let w = decode_num(self.stack.last().ok_or(ExecError::StackUnderflow)?)?;
                    if w < 0 {
                        return Err(ExecError::Script("negative relative locktime".into()));
                    }
                    let w = w as u64;
                    if (self.ctx.input_sequence as u64) < w || self.ctx.age() < w {
                        return Err(ExecError::VerifyFailed(VerifyKind::Sequence));
                    }
                }
                Opcode::If | Opcode::Else | Opcode::EndIf => unreachable!(),
            }
        }
        if !exec.is_empty() {
            return Err(ExecError::Script("unbalanced conditional".into()));
        }
        Ok(())
    }

    fn top_is_true(&self) -> Result<(), ExecError> {
        match self.stack.last() {
            Some(v) if truthy(v) => Ok(()),
            _ => Err(ExecError::VerifyFailed(VerifyKind::EvalFalse)),
        }
    }
}

/// Runs `unlocking` then `locking` on a shared stack. Script-hash locks
/// additionally run the redeem script carried as the last unlocking push.
pub fn try_execute(unlocking: &Script, locking: &Script, ctx: &ExecContext) -> Result<(), ExecError> {
    if !unlocking.is_push_only() {
        return Err(ExecError::Script("unlocking script must be push-only".into()));
    }
    let mut m = Machine {
        stack: Vec::new(),
        ctx,
    };
    m.run(unlocking)?;
    let saved = m.stack.clone();
    m.run(locking)?;
    m.top_is_true()?;

    if locking.p2sh_hash().is_some() {
        m.stack = saved;
        let redeem_bytes = m.pop()?;
        let redeem = Script::from_bytes(&redeem_bytes).map_err(|e| ExecError::Script(e.to_string()))?;
        m.run(&redeem)?;
        m.top_is_true()?;
    }
    Ok(())
}

pub fn execute(unlocking: &Script, locking: &Script, ctx: &ExecContext) -> bool {
    try_execute(unlocking, locking, ctx).is_ok()
}

/// Script templates for the channel transactions.
pub mod templates {
    use super::*;

    /// `DUP HASH160 <h> EQUALVERIFY CHECKSIG`
    pub fn p2pkh(pubkey_hash: &Digest20) -> Script {
        Script::new(vec![
            Opcode::Dup,
            Opcode::Hash160,
            Opcode::Push(pubkey_hash.0.to_vec()),
            Opcode::EqualVerify,
            Opcode::CheckSig,
        ])
    }

    pub fn p2pkh_unlock(sig: &Signature, pk: &PublicKey) -> Script {
        Script::new(vec![Opcode::Push(sig.0.to_vec()), Opcode::Push(pk.0.to_vec())])
    }

    /// `HASH160 <hash160(redeem)> EQUAL`
    pub fn p2sh(redeem: &Script) -> Script {
        Script::new(vec![
            Opcode::Hash160,
            Opcode::Push(hash160(&redeem.to_bytes()).0.to_vec()),
            Opcode::Equal,
        ])
    }

    fn multisig_ops(m: u8, keys: &[PublicKey]) -> Vec<Opcode> {
        let mut ops = vec![Opcode::Const(m)];
        ops.extend(keys.iter().map(|k| Opcode::Push(k.0.to_vec())));
        ops.push(Opcode::Const(keys.len() as u8));
        ops
    }

    /// `m <pk1> ... <pkn> n CHECKMULTISIG`
    pub fn multisig(m: u8, keys: &[PublicKey]) -> Script {
        let mut ops = multisig_ops(m, keys);
        ops.push(Opcode::CheckMultiSig);
        Script::new(ops)
    }

    fn key_check(hash: &Digest20) -> [Opcode; 3] {
        [Opcode::Dup, Opcode::Hash160, Opcode::Push(hash.0.to_vec())]
    }

    /// Revocable to-self output of the commitment publishable by the device:
    ///
    /// `IF W CSV DROP DUP HASH160 <H(own_a)> EQUALVERIFY CHECKSIG
    ///  ELSE DUP HASH160 <H(counter_b)> EQUALVERIFY CHECKSIGVERIFY
    ///       DUP HASH160 <H(own_c)> EQUALVERIFY CHECKSIG ENDIF`
    pub fn revocable_local(w: u32, own_a: &Digest20, counter_b: &Digest20, own_c: &Digest20) -> Script {
        let mut ops = vec![Opcode::If, push_int(w as u64), Opcode::CheckSequenceVerify, Opcode::Drop];
        ops.extend(key_check(own_a));
        ops.extend([Opcode::EqualVerify, Opcode::CheckSig, Opcode::Else]);
        ops.extend(key_check(counter_b));
        ops.extend([Opcode::EqualVerify, Opcode::CheckSigVerify]);
        ops.extend(key_check(own_c));
        ops.extend([Opcode::EqualVerify, Opcode::CheckSig, Opcode::EndIf]);
        Script::new(ops)
    }

    /// Revocable to-self output of the commitment publishable by the gateway;
    /// the revocation path additionally needs one watchdog signature:
    ///
    /// `IF W CSV DROP DUP HASH160 <H(own_a)> EQUALVERIFY CHECKSIG
    ///  ELSE 1 <w0>..<wK> K CHECKMULTISIGVERIFY
    ///       DUP HASH160 <H(own_c)> EQUALVERIFY CHECKSIGVERIFY
    ///       DUP HASH160 <H(counter_b)> EQUALVERIFY CHECKSIG ENDIF`
    pub fn revocable_watched(
        w: u32,
        own_a: &Digest20,
        watchdogs: &[PublicKey],
        own_c: &Digest20,
        counter_b: &Digest20,
    ) -> Script {
        let mut ops = vec![Opcode::If, push_int(w as u64), Opcode::CheckSequenceVerify, Opcode::Drop];
        ops.extend(key_check(own_a));
        ops.extend([Opcode::EqualVerify, Opcode::CheckSig, Opcode::Else]);
        ops.extend(multisig_ops(1, watchdogs));
        ops.push(Opcode::CheckMultiSigVerify);
        ops.extend(key_check(own_c));
        ops.extend([Opcode::EqualVerify, Opcode::CheckSigVerify]);
        ops.extend(key_check(counter_b));
        ops.extend([Opcode::EqualVerify, Opcode::CheckSig, Opcode::EndIf]);
        Script::new(ops)
    }

    /// Witness selecting the timelocked branch.
    pub fn timelock_unlock(sig: &Signature, pk: &PublicKey) -> Script {
        Script::new(vec![
            Opcode::Push(sig.0.to_vec()),
            Opcode::Push(pk.0.to_vec()),
            Opcode::Const(1),
        ])
    }
}
