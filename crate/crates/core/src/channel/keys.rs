use serde::{Deserialize, Serialize};

use crate::crypto::{derive_keypair, sha256, KeyPath, KeyRole, Keypair, MasterSeed, Party, PublicKey};

/// All keys one channel party can derive from its master seed.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PartyKeys {
    party: Party,
    seed: MasterSeed,
}

impl PartyKeys {
    pub fn new(party: Party, seed: MasterSeed) -> Self {
        PartyKeys { party, seed }
    }

    pub fn party(&self) -> Party {
        self.party
    }

    pub fn seed(&self) -> &MasterSeed {
        &self.seed
    }

    fn derive(&self, role: KeyRole, state: u32) -> Keypair {
        let path = KeyPath::new(self.party, role, state, 0).expect("roles used with valid indices");
        derive_keypair(&self.seed, &path)
    }

    pub fn funding(&self) -> Keypair {
        self.derive(KeyRole::Funding, 0)
    }

    pub fn close(&self) -> Keypair {
        self.derive(KeyRole::Close, 0)
    }

    /// Slot keys `a`, `b`, `c` for state `j >= 1`.
    pub fn state(&self, j: u32) -> StateKeys {
        StateKeys {
            a: self.derive(KeyRole::StateA, j),
            b: self.derive(KeyRole::StateB, j),
            c: self.derive(KeyRole::StateC, j),
        }
    }

    /// Key receiving the recovered value of a breached state `j`.
    pub fn recovery(&self, j: u32) -> Keypair {
        self.derive(KeyRole::ThirdPartyRc, j)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct StateKeys {
    pub a: Keypair,
    pub b: Keypair,
    pub c: Keypair,
}

impl StateKeys {
    pub fn public(&self) -> StatePubkeys {
        StatePubkeys {
            a: self.a.public_key,
            b: self.b.public_key,
            c: self.c.public_key,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct StatePubkeys {
    pub a: PublicKey,
    pub b: PublicKey,
    pub c: PublicKey,
}

/// Keys of a third-party pool (publishers or watchdogs).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PoolKeys {
    party: Party,
    seed: MasterSeed,
    size: usize,
}

impl PoolKeys {
    pub fn publishers(seed: MasterSeed, size: usize) -> Self {
        PoolKeys {
            party: Party::ThirdPartyPub,
            seed,
            size,
        }
    }

    pub fn watchdogs(seed: MasterSeed, size: usize) -> Self {
        PoolKeys {
            party: Party::ThirdPartyWatch,
            seed,
            size,
        }
    }

    pub fn size(&self) -> usize {
        self.size
    }

    pub fn member(&self, i: usize) -> Keypair {
        let path = KeyPath::new(self.party, KeyRole::ThirdPartyA, 0, i as u16).expect("valid member path");
        derive_keypair(&self.seed, &path)
    }

    pub fn pubkeys(&self) -> Vec<PublicKey> {
        (0..self.size).map(|i| self.member(i).public_key).collect()
    }
}

/// Seed for the third-party pools when a scenario does not pin one.
pub fn default_pool_seed(seed_a: &MasterSeed, seed_b: &MasterSeed) -> MasterSeed {
    let mut pre = Vec::with_capacity(64 + 17);
    pre.extend_from_slice(&seed_a.0);
    pre.extend_from_slice(&seed_b.0);
    pre.extend_from_slice(b"third-party-pools");
    MasterSeed(sha256(&pre).0)
}
