//! Inner-product functional encryption over the Ristretto group.
//!
//! DDH-style single-input scheme: `msk = (s_1..s_n)`, `mpk = (s_i·G)`,
//! a ciphertext of `x` is `(r·G, r·h_i + x_i·G)`, and the key for `y` is the
//! scalar `Σ y_i s_i`. Decryption yields `⟨x, y⟩·G` and recovers the small
//! exponent with [`dlog::solve_bounded`].
//!
//! Multi-owner publishing uses an [`EncryptionEpoch`]: the authority fixes one
//! shared randomness `r` and hands owner `i` the slot key `(i, r·G, r·h_i)`,
//! so independently produced slot ciphertexts assemble into a single
//! [`FeCiphertext`]. A slot key encrypts exactly one plaintext.

pub mod dlog;

use curve25519_dalek::ristretto::{CompressedRistretto, RistrettoPoint};
use curve25519_dalek::scalar::Scalar;
use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha20Rng;
use thiserror::Error;

use crate::codec::{Canonical, CodecError, Decoder, Encoder};

/// Upper limit on `n·B²`, the largest inner product decryption must recover.
pub const MAX_PRODUCT_RANGE: u128 = 1 << 32;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum FeError {
    #[error("slot count must be at least 1")]
    NoSlots,
    #[error("bound must be at least 1")]
    ZeroBound,
    #[error("n·B² = {0} exceeds the recoverable range 2^32")]
    BoundTooLarge(u128),
    #[error("expected vector of length {expected}, got {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("entry {index} = {value} outside [-{bound}, {bound}]")]
    EntryOutOfBound { index: usize, value: i64, bound: u64 },
    #[error("slot {slot} outside 0..{slots}")]
    SlotOutOfRange { slot: usize, slots: usize },
    #[error("decrypted value is not a discrete log within ±{0}")]
    DlogOutOfRange(u64),
    #[error("decode: {0}")]
    Decode(#[from] CodecError),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MasterPublicKey {
    pub bound: u64,
    pub slots: Vec<RistrettoPoint>,
}

#[derive(Clone, PartialEq, Eq)]
pub struct MasterSecretKey {
    bound: u64,
    scalars: Vec<Scalar>,
}

impl std::fmt::Debug for MasterSecretKey {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("MasterSecretKey").field("slots", &self.scalars.len()).finish_non_exhaustive()
    }
}

#[derive(Debug, Clone)]
pub struct FeMasterKeys {
    pub mpk: MasterPublicKey,
    pub msk: MasterSecretKey,
}

impl FeMasterKeys {
    pub fn slots(&self) -> usize {
        self.mpk.slots.len()
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FeCiphertext {
    pub randomness: RistrettoPoint,
    pub slots: Vec<RistrettoPoint>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FeFunctionalKey {
    pub y: Vec<i64>,
    pub sk: Scalar,
}

/// Shared encryption randomness held by the authority.
#[derive(Clone)]
pub struct EncryptionEpoch {
    r: Scalar,
    pub base: RistrettoPoint,
}

/// The public material every entity receives: master public key plus the epoch base `r·G`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CommonPublicKey {
    pub mpk: MasterPublicKey,
    pub epoch_base: RistrettoPoint,
}

/// Slot-restricted encryption material for one data owner.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct OwnerKey {
    pub slot: usize,
    pub bound: u64,
    pub epoch_base: RistrettoPoint,
    pub mask: RistrettoPoint,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SlotCiphertext {
    pub slot: usize,
    pub point: RistrettoPoint,
}

fn rng_from(seed: &[u8; 32], domain: &[u8]) -> ChaCha20Rng {
    let mut material = seed.to_vec();
    material.extend_from_slice(domain);
    ChaCha20Rng::from_seed(crate::crypto::hash(&material).0)
}

fn random_scalar(rng: &mut ChaCha20Rng) -> Scalar {
    let mut wide = [0u8; 64];
    rng.fill_bytes(&mut wide);
    Scalar::from_bytes_mod_order_wide(&wide)
}

pub(crate) fn scalar_from_i64(v: i64) -> Scalar {
    if v >= 0 {
        Scalar::from(v as u64)
    } else {
        -Scalar::from(v.unsigned_abs())
    }
}

fn check_vector(v: &[i64], n: usize, bound: u64) -> Result<(), FeError> {
    if v.len() != n {
        return Err(FeError::DimensionMismatch { expected: n, found: v.len() });
    }
    check_entries(v, bound)
}

fn check_entries(v: &[i64], bound: u64) -> Result<(), FeError> {
    match v.iter().position(|e| e.unsigned_abs() > bound) {
        Some(index) => Err(FeError::EntryOutOfBound { index, value: v[index], bound }),
        None => Ok(()),
    }
}

/// `n·B²`, the decryption search radius.
pub fn product_range(n: usize, bound: u64) -> u128 {
    n as u128 * bound as u128 * bound as u128
}

pub fn setup(n: usize, bound: u64, seed: &[u8; 32]) -> Result<FeMasterKeys, FeError> {
    if n == 0 {
        return Err(FeError::NoSlots);
    }
    if bound == 0 {
        return Err(FeError::ZeroBound);
    }
    let range = product_range(n, bound);
    if range > MAX_PRODUCT_RANGE {
        return Err(FeError::BoundTooLarge(range));
    }
    let mut rng = rng_from(seed, b"ipfe/setup");
    let scalars: Vec<Scalar> = (0..n).map(|_| random_scalar(&mut rng)).collect();
    let slots = scalars.iter().map(RistrettoPoint::mul_base).collect();
    Ok(FeMasterKeys { mpk: MasterPublicKey { bound, slots }, msk: MasterSecretKey { bound, scalars } })
}

pub fn derive_key(msk: &MasterSecretKey, y: &[i64]) -> Result<FeFunctionalKey, FeError> {
    check_vector(y, msk.scalars.len(), msk.bound)?;
    let sk = msk.scalars.iter().zip(y).map(|(s, yi)| s * scalar_from_i64(*yi)).sum();
    Ok(FeFunctionalKey { y: y.to_vec(), sk })
}

pub fn encrypt(mpk: &MasterPublicKey, x: &[i64], seed: &[u8; 32]) -> Result<FeCiphertext, FeError> {
    check_vector(x, mpk.slots.len(), mpk.bound)?;
    let r = random_scalar(&mut rng_from(seed, b"ipfe/encrypt"));
    let slots =
        mpk.slots.iter().zip(x).map(|(h, xi)| h * r + RistrettoPoint::mul_base(&scalar_from_i64(*xi))).collect();
    Ok(FeCiphertext { randomness: RistrettoPoint::mul_base(&r), slots })
}

pub fn decrypt(key: &FeFunctionalKey, ct: &FeCiphertext, mpk: &MasterPublicKey) -> Result<i64, FeError> {
    let n = mpk.slots.len();
    check_vector(&key.y, n, mpk.bound)?;
    if ct.slots.len() != n {
        return Err(FeError::DimensionMismatch { expected: n, found: ct.slots.len() });
    }
    let combined: RistrettoPoint =
        ct.slots.iter().zip(&key.y).map(|(c, yi)| c * scalar_from_i64(*yi)).sum::<RistrettoPoint>()
            - ct.randomness * key.sk;
    // setup guarantees the range fits in u64
    let range = product_range(n, mpk.bound) as u64;
    dlog::solve_bounded(&combined, range).ok_or(FeError::DlogOutOfRange(range))
}

impl EncryptionEpoch {
    pub fn new(seed: &[u8; 32]) -> Self {
        let r = random_scalar(&mut rng_from(seed, b"ipfe/epoch"));
        Self { r, base: RistrettoPoint::mul_base(&r) }
    }

    pub fn common_key(&self, mpk: &MasterPublicKey) -> CommonPublicKey {
        CommonPublicKey { mpk: mpk.clone(), epoch_base: self.base }
    }

    pub fn owner_key(&self, mpk: &MasterPublicKey, slot: usize) -> Result<OwnerKey, FeError> {
        let h = mpk.slots.get(slot).ok_or(FeError::SlotOutOfRange { slot, slots: mpk.slots.len() })?;
        Ok(OwnerKey { slot, bound: mpk.bound, epoch_base: self.base, mask: h * self.r })
    }
}

impl OwnerKey {
    pub fn encrypt(&self, x: i64) -> Result<SlotCiphertext, FeError> {
        check_entries(&[x], self.bound)?;
        Ok(SlotCiphertext { slot: self.slot, point: self.mask + RistrettoPoint::mul_base(&scalar_from_i64(x)) })
    }
}

/// Joins one slot ciphertext per owner, in any order, into a full ciphertext.
pub fn assemble(epoch_base: RistrettoPoint, n: usize, parts: &[SlotCiphertext]) -> Result<FeCiphertext, FeError> {
    if parts.len() != n {
        return Err(FeError::DimensionMismatch { expected: n, found: parts.len() });
    }
    let mut slots: Vec<Option<RistrettoPoint>> = vec![None; n];
    for part in parts {
        match slots.get_mut(part.slot) {
            Some(cell @ None) => *cell = Some(part.point),
            _ => return Err(FeError::SlotOutOfRange { slot: part.slot, slots: n }),
        }
    }
    Ok(FeCiphertext { randomness: epoch_base, slots: slots.into_iter().map(Option::unwrap).collect() })
}

fn encode_point(enc: &mut Encoder, p: &RistrettoPoint) {
    enc.bytes(p.compress().as_bytes());
}

fn decode_point(dec: &mut Decoder<'_>) -> Result<RistrettoPoint, CodecError> {
    CompressedRistretto(dec.array::<32>()?)
        .decompress()
        .ok_or_else(|| CodecError::Invalid("not a Ristretto point".into()))
}

fn decode_scalar(dec: &mut Decoder<'_>) -> Result<Scalar, CodecError> {
    Option::from(Scalar::from_canonical_bytes(dec.array::<32>()?))
        .ok_or_else(|| CodecError::Invalid("non-canonical scalar".into()))
}

fn decode_slot(dec: &mut Decoder<'_>) -> Result<usize, CodecError> {
    usize::try_from(dec.u64()?).map_err(|_| CodecError::Invalid("slot index".into()))
}

impl Canonical for MasterPublicKey {
    fn encode(&self, enc: &mut Encoder) {
        enc.u64(self.bound).list(&self.slots, encode_point);
    }

    fn decode(dec: &mut Decoder<'_>) -> Result<Self, CodecError> {
        Ok(Self { bound: dec.u64()?, slots: dec.list(decode_point)? })
    }
}

impl Canonical for CommonPublicKey {
    fn encode(&self, enc: &mut Encoder) {
        enc.record(&self.mpk);
        encode_point(enc, &self.epoch_base);
    }

    fn decode(dec: &mut Decoder<'_>) -> Result<Self, CodecError> {
        Ok(Self { mpk: dec.record()?, epoch_base: decode_point(dec)? })
    }
}

impl Canonical for OwnerKey {
    fn encode(&self, enc: &mut Encoder) {
        enc.u64(self.slot as u64).u64(self.bound);
        encode_point(enc, &self.epoch_base);
        encode_point(enc, &self.mask);
    }

    fn decode(dec: &mut Decoder<'_>) -> Result<Self, CodecError> {
        Ok(Self {
            slot: decode_slot(dec)?,
            bound: dec.u64()?,
            epoch_base: decode_point(dec)?,
            mask: decode_point(dec)?,
        })
    }
}

impl Canonical for FeFunctionalKey {
    fn encode(&self, enc: &mut Encoder) {
        enc.list(&self.y, |e, v| {
            e.i64(*v);
        });
        enc.bytes(self.sk.as_bytes());
    }

    fn decode(dec: &mut Decoder<'_>) -> Result<Self, CodecError> {
        Ok(Self { y: dec.list(|d| d.i64())?, sk: decode_scalar(dec)? })
    }
}

impl Canonical for FeCiphertext {
    fn encode(&self, enc: &mut Encoder) {
        encode_point(enc, &self.randomness);
        enc.list(&self.slots, encode_point);
    }

    fn decode(dec: &mut Decoder<'_>) -> Result<Self, CodecError> {
        Ok(Self { randomness: decode_point(dec)?, slots: dec.list(decode_point)? })
    }
}

impl Canonical for SlotCiphertext {
    fn encode(&self, enc: &mut Encoder) {
        enc.u64(self.slot as u64);
        encode_point(enc, &self.point);
    }

    fn decode(dec: &mut Decoder<'_>) -> Result<Self, CodecError> {
        Ok(Self { slot: decode_slot(dec)?, point: decode_point(dec)? })
    }
}
