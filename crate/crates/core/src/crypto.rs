//! Hashing, signatures and deterministic key derivation.
//!
//! A device only needs to persist its master seed and the current state
//! index: every keypair it will ever use is recomputed from
//! `(master_seed, KeyPath)`.

use std::fmt;

use k256::ecdsa::signature::{Signer, Verifier};
use k256::ecdsa::{Signature as EcdsaSignature, SigningKey, VerifyingKey};
use ripemd::Ripemd160;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::Error;

macro_rules! hex_newtype {
    ($name:ident, $len:expr) => {
        #[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
        pub struct $name(pub [u8; $len]);

        impl $name {
            pub const LEN: usize = $len;

            pub fn as_bytes(&self) -> &[u8; $len] {
                &self.0
            }

            pub fn to_hex(&self) -> String {
                hex::encode(self.0)
            }

            pub fn from_hex(s: &str) -> Result<Self, Error> {
                let bytes = hex::decode(s.trim()).map_err(|e| Error::Hex(e.to_string()))?;
                Self::from_slice(&bytes)
            }

            pub fn from_slice(bytes: &[u8]) -> Result<Self, Error> {
                let arr: [u8; $len] = bytes.try_into().map_err(|_| {
                    Error::Hex(format!("expected {} bytes, got {}", $len, bytes.len()))
                })?;
                Ok($name(arr))
            }
        }

        impl fmt::Debug for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                write!(f, "{}({})", stringify!($name), self.to_hex())
            }
        }

        impl fmt::Display for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(&self.to_hex())
            }
        }

        impl Serialize for $name {
            fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
                s.serialize_str(&self.to_hex())
            }
        }

        impl<'de> Deserialize<'de> for $name {
            fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
                let s = String::deserialize(d)?;
                $name::from_hex(&s).map_err(serde::de::Error::custom)
            }
        }
    };
}

hex_newtype!(Digest20, 20);
hex_newtype!(Digest32, 32);
hex_newtype!(PublicKey, 33);
hex_newtype!(Signature, 64);
hex_newtype!(MasterSeed, 32);

/// 32-byte secret scalar. Debug output is redacted.
#[derive(Clone, Copy, PartialEq, Eq, Hash)]
pub struct SecretKey(pub(crate) [u8; 32]);

impl SecretKey {
    pub fn from_bytes(bytes: [u8; 32]) -> Result<Self, Error> {
        SigningKey::from_bytes(&bytes.into()).map_err(|_| Error::InvalidSecretKey)?;
        Ok(SecretKey(bytes))
    }

    pub fn to_bytes(&self) -> [u8; 32] {
        self.0
    }
}

impl fmt::Debug for SecretKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("SecretKey(..)")
    }
}

pub fn sha256(data: &[u8]) -> Digest32 {
    Digest32(Sha256::digest(data).into())
}

/// SHA-256 applied twice; used for transaction ids.
pub fn sha256d(data: &[u8]) -> Digest32 {
    sha256(&sha256(data).0)
}

/// RIPEMD-160 of SHA-256.
pub fn hash160(data: &[u8]) -> Digest20 {
    let inner = Sha256::digest(data);
    Digest20(Ripemd160::digest(inner).into())
}

/// Abstract signature scheme used by the script interpreter.
pub trait SignatureScheme {
    fn public_key(sk: &SecretKey) -> PublicKey;
    fn sign(sk: &SecretKey, message: &[u8]) -> Signature;
    fn verify(pk: &PublicKey, message: &[u8], sig: &Signature) -> bool;
}

/// ECDSA over secp256k1 with RFC 6979 nonces and compressed public keys.
pub struct Secp256k1Ecdsa;

impl SignatureScheme for Secp256k1Ecdsa {
    fn public_key(sk: &SecretKey) -> PublicKey {
        let signing = SigningKey::from_bytes(&sk.0.into()).expect("validated on construction");
        let point = signing.verifying_key().to_encoded_point(true);
        PublicKey::from_slice(point.as_bytes()).expect("compressed point is 33 bytes")
    }

    fn sign(sk: &SecretKey, message: &[u8]) -> Signature {
        let signing = SigningKey::from_bytes(&sk.0.into()).expect("validated on construction");
        let sig: EcdsaSignature = signing.sign(message);
        let sig = sig.normalize_s().unwrap_or(sig);
        Signature(sig.to_bytes().into())
    }

    fn verify(pk: &PublicKey, message: &[u8], sig: &Signature) -> bool {
        let Ok(vk) = VerifyingKey::from_sec1_bytes(&pk.0) else {
            return false;
        };
        let Ok(sig) = EcdsaSignature::from_slice(&sig.0) else {
            return false;
        };
        vk.verify(message, &sig).is_ok()
    }
}

/// Scheme used throughout the crate.
pub type DefaultScheme = Secp256k1Ecdsa;

pub fn sign(sk: &SecretKey, message: &[u8]) -> Signature {
    DefaultScheme::sign(sk, message)
}

pub fn verify(pk: &PublicKey, message: &[u8], sig: &Signature) -> bool {
    DefaultScheme::verify(pk, message, sig)
}

#[derive(Clone, Copy, PartialEq, Eq, Hash)]
pub struct Keypair {
    pub public_key: PublicKey,
    pub secret_key: SecretKey,
}

impl Keypair {
    pub fn from_secret(secret_key: SecretKey) -> Self {
        Keypair {
            public_key: DefaultScheme::public_key(&secret_key),
            secret_key,
        }
    }

    pub fn sign(&self, message: &[u8]) -> Signature {
        sign(&self.secret_key, message)
    }

    pub fn pubkey_hash(&self) -> Digest20 {
        hash160(&self.public_key.0)
    }
}

impl fmt::Debug for Keypair {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Keypair")
            .field("public_key", &self.public_key)
            .finish_non_exhaustive()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Party {
    A,
    B,
    ThirdPartyPub,
    ThirdPartyWatch,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum KeyRole {
    Funding,
    Close,
    /// Slot `a`: the timelocked to-self output of a commitment.
    StateA,
    /// Slot `b`: the immediate to-counterparty output and revocation co-key.
    StateB,
    /// Slot `c`: revealed to the counterparty when the state is revoked.
    StateC,
    ThirdPartyA,
    /// Recovery output key.
    ThirdPartyRc,
}

impl KeyRole {
    fn is_state(self) -> bool {
        matches!(self, KeyRole::StateA | KeyRole::StateB | KeyRole::StateC)
    }
}

/// Identifies one keypair under a master seed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct KeyPath {
    party: Party,
    role: KeyRole,
    state_index: u32,
    member_index: u16,
}

impl KeyPath {
    pub fn new(party: Party, role: KeyRole, state_index: u32, member_index: u16) -> Result<Self, Error> {
        if role.is_state() && state_index == 0 {
            return Err(Error::InvalidKeyPath("state roles need state_index >= 1"));
        }
        if matches!(role, KeyRole::Funding | KeyRole::Close) && state_index != 0 {
            return Err(Error::InvalidKeyPath("funding/close roles need state_index = 0"));
        }
        Ok(KeyPath {
            party,
            role,
            state_index,
            member_index,
        })
    }

    pub fn party(&self) -> Party {
        self.party
    }

    pub fn role(&self) -> KeyRole {
        self.role
    }

    pub fn state_index(&self) -> u32 {
        self.state_index
    }

    pub fn member_index(&self) -> u16 {
        self.member_index
    }

    /// Fixed 8-byte encoding: party | role | state_index (u32 LE) | member_index (u16 LE).
    pub fn encode(&self) -> [u8; 8] {
        let mut out = [0u8; 8];
        out[0] = self.party as u8;
        out[1] = self.role as u8;
        out[2..6].copy_from_slice(&self.state_index.to_le_bytes());
        out[6..8].copy_from_slice(&self.member_index.to_le_bytes());
        out
    }
}

/// child secret = SHA-256(master_seed || encode(path)), rehashed in the
/// negligible case that the digest is not a valid curve scalar.
pub fn derive_keypair(master_seed: &MasterSeed, path: &KeyPath) -> Keypair {
    let mut preimage = Vec::with_capacity(40);
    preimage.extend_from_slice(&master_seed.0);
    preimage.extend_from_slice(&path.encode());
    let mut candidate = sha256(&preimage).0;
    loop {
        if let Ok(sk) = SecretKey::from_bytes(candidate) {
            return Keypair::from_secret(sk);
        }
        candidate = sha256(&candidate).0;
    }
}

/// Derives a sub-seed for another actor from a parent seed and a tag.
pub fn derive_seed(parent: &MasterSeed, tag: &str) -> MasterSeed {
    let mut preimage = parent.0.to_vec();
    preimage.extend_from_slice(tag.as_bytes());
    MasterSeed(sha256(&preimage).0)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn path(party: Party, role: KeyRole, j: u32, m: u16) -> KeyPath {
        KeyPath::new(party, role, j, m).unwrap()
    }

    #[test]
    fn hash160_known_vectors() {
        assert_eq!(hash160(b"").to_hex(), "b472a266d0bd89c13706a4132ccfb16f7c3b9fcb");
        assert_eq!(hash160(b"abc").to_hex(), "bb1be98c142444d7a56aa3981c3942a978e4dc33");
        assert_eq!(hash160(b"abc"), hash160(b"abc"));
    }

    #[test]
    fn sha256d_of_empty() {
        // sha256(sha256("")) from coreutils/openssl
        assert_eq!(
            sha256d(b"").to_hex(),
            "5df6e0e2761359d30a8275058e299fcc0381534545f55cf43e41983f5d4c9456"
        );
    }

    #[test]
    fn derivation_is_deterministic_and_injective() {
        let seed = MasterSeed([7u8; 32]);
        let p = path(Party::A, KeyRole::StateA, 3, 0);
        assert_eq!(derive_keypair(&seed, &p), derive_keypair(&seed, &p));
        let q = path(Party::A, KeyRole::StateB, 3, 0);
        assert_ne!(
            derive_keypair(&seed, &p).secret_key,
            derive_keypair(&seed, &q).secret_key
        );
    }

    #[test]
    fn golden_zero_seed_funding_key() {
        let kp = derive_keypair(&MasterSeed([0u8; 32]), &path(Party::A, KeyRole::Funding, 0, 0));
        assert_eq!(kp.public_key.to_hex(), include_str!("../tests/golden/zero_seed_funding_pk.txt").trim());
    }

    #[test]
    fn key_path_rules() {
        assert!(KeyPath::new(Party::A, KeyRole::StateC, 0, 0).is_err());
        assert!(KeyPath::new(Party::B, KeyRole::Close, 1, 0).is_err());
        assert!(KeyPath::new(Party::B, KeyRole::Close, 0, 0).is_ok());
        assert!(KeyPath::new(Party::ThirdPartyWatch, KeyRole::ThirdPartyA, 0, 4).is_ok());
    }

    #[test]
    fn sign_verify() {
        let kp = derive_keypair(&MasterSeed([1u8; 32]), &path(Party::B, KeyRole::Close, 0, 0));
        let other = derive_keypair(&MasterSeed([2u8; 32]), &path(Party::B, KeyRole::Close, 0, 0));
        let msg = sha256(b"commitment");
        let sig = kp.sign(&msg.0);
        assert!(verify(&kp.public_key, &msg.0, &sig));
        assert!(!verify(&other.public_key, &msg.0, &sig));
        let mut flipped = msg.0;
        flipped[0] ^= 1;
        assert!(!verify(&kp.public_key, &flipped, &sig));
        assert_eq!(sig, kp.sign(&msg.0), "signatures are deterministic");
    }

    #[test]
    fn secret_key_debug_is_redacted() {
        let kp = derive_keypair(&MasterSeed([1u8; 32]), &path(Party::A, KeyRole::Close, 0, 0));
        let dbg = format!("{:?}", kp);
        assert!(!dbg.contains(&hex::encode(kp.secret_key.to_bytes())));
    }
}
