//! Hashing, identities, and signatures.
//!
//! SHA3-256 is the only hash. Signatures are Ed25519, which is deterministic
//! and lets key pairs be derived straight from a 32-byte seed.

use std::fmt;
use std::str::FromStr;

use ed25519_dalek::{Signer, SigningKey, VerifyingKey};
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use sha3::{Digest as _, Sha3_256};

use crate::codec::{Canonical, CodecError, Decoder, Encoder};

/// Number of hash bytes that make up an account address.
pub const ADDRESS_BYTES: usize = 20;

macro_rules! hex_bytes {
    ($(#[$meta:meta])* $name:ident, $len:expr) => {
        $(#[$meta])*
        #[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
        pub struct $name(pub [u8; $len]);

        impl $name {
            pub const LEN: usize = $len;

            pub fn as_bytes(&self) -> &[u8; $len] {
                &self.0
            }

            pub fn from_slice(bytes: &[u8]) -> Option<Self> {
                bytes.try_into().ok().map(Self)
            }

            pub fn to_hex(&self) -> String {
                hex::encode(self.0)
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

        impl FromStr for $name {
            type Err = String;

            fn from_str(s: &str) -> Result<Self, Self::Err> {
                let s = s.strip_prefix("0x").unwrap_or(s);
                let bytes = hex::decode(s).map_err(|e| e.to_string())?;
                Self::from_slice(&bytes).ok_or_else(|| {
                    format!("expected {} bytes, got {}", $len, bytes.len())
                })
            }
        }

        impl Serialize for $name {
            fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
                serializer.serialize_str(&self.to_hex())
            }
        }

        impl<'de> Deserialize<'de> for $name {
            fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
                let s = String::deserialize(deserializer)?;
                s.parse().map_err(serde::de::Error::custom)
            }
        }

        impl Canonical for $name {
            fn encode(&self, enc: &mut Encoder) {
                enc.bytes(&self.0);
            }

            fn decode(dec: &mut Decoder<'_>) -> Result<Self, CodecError> {
                dec.array::<$len>().map(Self)
            }
        }
    };
}

hex_bytes!(
    /// SHA3-256 output.
    Digest,
    32
);
hex_bytes!(
    /// Account address: the first 20 bytes of `hash(pk)`, left-padded with zeros.
    EntityId,
    32
);
hex_bytes!(
    /// Ed25519 verification key bytes.
    PublicKey,
    32
);
hex_bytes!(Signature, 64);
hex_bytes!(
    /// Requester-chosen key-service identifier.
    Nonce,
    16
);

impl Digest {
    pub const ZERO: Digest = Digest([0; 32]);

    /// First eight bytes in hex.
    pub fn short(&self) -> String {
        hex::encode(&self.0[..8])
    }
}

pub fn hash(data: &[u8]) -> Digest {
    Digest(Sha3_256::digest(data).into())
}

/// Hash of the canonical encoding of a sequence of byte fields.
pub fn hash_fields(fields: &[&[u8]]) -> Digest {
    let mut enc = Encoder::new();
    for f in fields {
        enc.bytes(f);
    }
    hash(&enc.finish())
}

impl EntityId {
    pub fn from_public_key(pk: &PublicKey) -> Self {
        let digest = hash(pk.as_bytes());
        let mut id = [0u8; 32];
        id[32 - ADDRESS_BYTES..].copy_from_slice(&digest.0[..ADDRESS_BYTES]);
        EntityId(id)
    }

    /// A well-formed address has its 12 leading padding bytes zeroed.
    pub fn is_well_formed(&self) -> bool {
        self.0[..32 - ADDRESS_BYTES].iter().all(|b| *b == 0)
    }

    /// Short form used in logs and tables: `0x` plus the 20 address bytes.
    pub fn short(&self) -> String {
        format!("0x{}", hex::encode(&self.0[32 - ADDRESS_BYTES..]))
    }
}

pub struct KeyPair {
    signing: SigningKey,
    pub pk: PublicKey,
}

impl KeyPair {
    pub fn from_seed(seed: &[u8; 32]) -> Self {
        let signing = SigningKey::from_bytes(seed);
        let pk = PublicKey(signing.verifying_key().to_bytes());
        Self { signing, pk }
    }

    pub fn id(&self) -> EntityId {
        EntityId::from_public_key(&self.pk)
    }

    pub fn sign(&self, msg: &[u8]) -> Signature {
        Signature(self.signing.sign(msg).to_bytes())
    }
}

impl Clone for KeyPair {
    fn clone(&self) -> Self {
        Self::from_seed(&self.signing.to_bytes())
    }
}

impl fmt::Debug for KeyPair {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("KeyPair").field("pk", &self.pk).finish_non_exhaustive()
    }
}

pub fn keygen(seed: &[u8; 32]) -> KeyPair {
    KeyPair::from_seed(seed)
}

pub fn sign(keys: &KeyPair, msg: &[u8]) -> Signature {
    keys.sign(msg)
}

/// Malformed keys or signatures verify as `false`.
pub fn verify(pk: &PublicKey, msg: &[u8], sig: &Signature) -> bool {
    let Ok(vk) = VerifyingKey::from_bytes(pk.as_bytes()) else {
        return false;
    };
    let sig = ed25519_dalek::Signature::from_bytes(sig.as_bytes());
    vk.verify_strict(msg, &sig).is_ok()
}
