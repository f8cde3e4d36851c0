//! Keys, signatures and salted document commitments.
//!
//! Signatures are Ed25519 (deterministic, so golden vectors are stable).
//! Commitments are `SHA-256("DHPC1|" ‖ salt ‖ canonical_doc_bytes(doc))`.

use std::fmt::Write as _;

use ed25519_dalek::{Signer, SigningKey, VerifyingKey};
use rand::{CryptoRng, RngCore};
use sha2::{Digest as _, Sha256};
use thiserror::Error;

use crate::types::{
    ActorId, Commitment, Digest, EncodingError, MemberId, PublicKey, Role, Signature,
    TravelDocument,
};

pub const COMMITMENT_TAG: &[u8] = b"DHPC1|";
const MEMBER_ID_TAG: &[u8] = b"DHPID|";

#[derive(Debug, Error, PartialEq, Eq)]
pub enum CryptoError {
    #[error("malformed signing key")]
    MalformedKey,
    #[error(transparent)]
    Encoding(#[from] EncodingError),
}

/// SHA-256 over the concatenation of `parts`.
pub fn hash_parts(parts: &[&[u8]]) -> Digest {
    let mut h = Sha256::new();
    for p in parts {
        h.update(p);
    }
    Digest(h.finalize().into())
}

/// A signing key bound to the consortium identity it acts as.
#[derive(Clone)]
pub struct KeyPair {
    signing: SigningKey,
    owner: ActorId,
}

impl std::fmt::Debug for KeyPair {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("KeyPair")
            .field("owner", &self.owner)
            .finish_non_exhaustive()
    }
}

impl KeyPair {
    pub fn from_secret(role: Role, secret: &[u8]) -> Result<Self, CryptoError> {
        let secret: [u8; 32] = secret.try_into().map_err(|_| CryptoError::MalformedKey)?;
        let signing = SigningKey::from_bytes(&secret);
        let public_key = PublicKey(signing.verifying_key().to_bytes());
        Ok(Self {
            owner: ActorId {
                role,
                id: member_id_for(&public_key),
                public_key,
            },
            signing,
        })
    }

    pub fn generate<R: RngCore + CryptoRng>(role: Role, rng: &mut R) -> Self {
        let mut secret = [0u8; 32];
        rng.fill_bytes(&mut secret);
        Self::from_secret(role, &secret).expect("32-byte secret")
    }

    pub fn owner(&self) -> &ActorId {
        &self.owner
    }

    pub fn id(&self) -> MemberId {
        self.owner.id
    }

    pub fn role(&self) -> Role {
        self.owner.role
    }

    pub fn public(&self) -> PublicKey {
        self.owner.public_key
    }

    pub fn secret_bytes(&self) -> [u8; 32] {
        self.signing.to_bytes()
    }

    pub fn sign(&self, message: &[u8]) -> Signature {
        Signature(self.signing.sign(message).to_bytes())
    }

    /// Key file line: `role hex_id hex_pubkey hex_secret`.
    pub fn to_key_file(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(
            out,
            "{} {} {} {}",
            self.owner.role,
            self.owner.id,
            self.owner.public_key,
            hex::encode(self.secret_bytes())
        );
        out
    }

    pub fn from_key_file(text: &str) -> Result<Self, CryptoError> {
        let line = text
            .lines()
            .map(str::trim)
            .find(|l| !l.is_empty() && !l.starts_with('#'))
            .ok_or(CryptoError::MalformedKey)?;
        let fields: Vec<&str> = line.split_whitespace().collect();
        let [role, id, public, secret] = fields[..] else {
            return Err(CryptoError::MalformedKey);
        };
        let role: Role = role.parse()?;
        let secret = hex::decode(secret).map_err(|_| CryptoError::MalformedKey)?;
        let kp = Self::from_secret(role, &secret)?;
        if kp.owner.id.to_hex() != id || kp.owner.public_key.to_hex() != public {
            return Err(CryptoError::MalformedKey);
        }
        Ok(kp)
    }
}

/// Member identifiers are the first 16 bytes of a tagged hash of the key.
pub fn member_id_for(public_key: &PublicKey) -> MemberId {
    let d = hash_parts(&[MEMBER_ID_TAG, public_key.as_bytes()]);
    MemberId(d.0[..16].try_into().expect("16 bytes"))
}

/// Deterministic when `seed` is given, fresh from the OS otherwise.
pub fn keygen(role: Role, seed: Option<[u8; 32]>) -> KeyPair {
    match seed {
        Some(seed) => KeyPair::from_secret(role, &seed).expect("32-byte seed"),
        None => KeyPair::generate(role, &mut rand::rngs::OsRng),
    }
}

pub fn sign(secret: &[u8], message: &[u8]) -> Result<Signature, CryptoError> {
    let secret: [u8; 32] = secret.try_into().map_err(|_| CryptoError::MalformedKey)?;
    Ok(Signature(SigningKey::from_bytes(&secret).sign(message).to_bytes()))
}

/// Total: malformed keys or signatures are simply `false`.
pub fn verify_sig(public: &[u8], message: &[u8], signature: &[u8]) -> bool {
    let Ok(public) = <[u8; 32]>::try_from(public) else {
        return false;
    };
    let Ok(key) = VerifyingKey::from_bytes(&public) else {
        return false;
    };
    let Ok(sig) = ed25519_dalek::Signature::from_slice(signature) else {
        return false;
    };
    key.verify_strict(message, &sig).is_ok()
}

/// Per-passport commitment salt.
#[derive(Clone, Copy, PartialEq, Eq, Hash)]
pub struct Salt(pub [u8; 16]);

impl Salt {
    pub fn random() -> Self {
        Self::random_with(&mut rand::rngs::OsRng)
    }

    pub fn random_with<R: RngCore + CryptoRng>(rng: &mut R) -> Self {
        let mut s = [0u8; 16];
        rng.fill_bytes(&mut s);
        Salt(s)
    }

    pub fn as_bytes(&self) -> &[u8; 16] {
        &self.0
    }

    pub fn to_hex(&self) -> String {
        hex::encode(self.0)
    }
}

impl std::fmt::Debug for Salt {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "Salt({})", self.to_hex())
    }
}

pub fn commit(doc: &TravelDocument, salt: &Salt) -> Commitment {
    commit_bytes(&doc.canonical_bytes(), salt)
}

pub(crate) fn commit_bytes(doc_bytes: &[u8], salt: &Salt) -> Commitment {
    Commitment(hash_parts(&[COMMITMENT_TAG, salt.as_bytes(), doc_bytes]).0)
}

/// One line of a commitment test-vector file: `doc_hex salt_hex commitment_hex`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CommitmentVector {
    pub doc_bytes: Vec<u8>,
    pub salt: Salt,
    pub commitment: Commitment,
}

impl CommitmentVector {
    pub fn new(doc: &TravelDocument, salt: Salt) -> Self {
        Self {
            doc_bytes: doc.canonical_bytes(),
            salt,
            commitment: commit(doc, &salt),
        }
    }

    /// Recomputes the commitment from the stored document bytes and salt.
    pub fn holds(&self) -> bool {
        TravelDocument::from_canonical_bytes(&self.doc_bytes).is_ok()
            && commit_bytes(&self.doc_bytes, &self.salt) == self.commitment
    }

    pub fn to_line(&self) -> String {
        format!(
            "{} {} {}",
            hex::encode(&self.doc_bytes),
            self.salt.to_hex(),
            self.commitment
        )
    }
}

/// Parses a vector file; blank lines and `#` comments are skipped.
pub fn parse_commitment_vectors(text: &str) -> Result<Vec<CommitmentVector>, EncodingError> {
    text.lines()
        .map(str::trim)
        .filter(|l| !l.is_empty() && !l.starts_with('#'))
        .map(|line| {
            let fields: Vec<&str> = line.split(' ').collect();
            let [doc, salt, commitment] = fields[..] else {
                return Err(EncodingError::InvalidValue("test vector line"));
            };
            let doc_bytes =
                hex::decode(doc).map_err(|_| EncodingError::InvalidValue("test vector doc"))?;
            let salt: [u8; 16] = hex::decode(salt)
                .ok()
                .and_then(|s| s.try_into().ok())
                .ok_or(EncodingError::InvalidValue("test vector salt"))?;
            Ok(CommitmentVector {
                doc_bytes,
                salt: Salt(salt),
                commitment: Commitment::from_hex(commitment)?,
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use chrono::NaiveDate;
    use std::collections::HashSet;

    fn doc(num: &str) -> TravelDocument {
        TravelDocument::new(num, "GRC", NaiveDate::from_ymd_opt(2030, 1, 1).unwrap()).unwrap()
    }

    #[test]
    fn seeded_keygen_is_deterministic() {
        let a = keygen(Role::Thf, Some([5; 32]));
        let b = keygen(Role::Thf, Some([5; 32]));
        assert_eq!(a.owner(), b.owner());
        assert_eq!(a.secret_bytes(), b.secret_bytes());
    }

    #[test]
    fn fresh_keys_do_not_collide() {
        let keys: HashSet<PublicKey> = (0..10_000).map(|_| keygen(Role::Bm, None).public()).collect();
        assert_eq!(keys.len(), 10_000);
    }

    #[test]
    fn sign_verify_round_trip_and_rejections() {
        let kp = keygen(Role::Thf, Some([1; 32]));
        let other = keygen(Role::Thf, Some([2; 32]));
        let sig = sign(&kp.secret_bytes(), b"x").unwrap();
        assert_eq!(sig, kp.sign(b"x"));
        assert!(verify_sig(kp.public().as_bytes(), b"x", sig.as_bytes()));
        assert!(!verify_sig(other.public().as_bytes(), b"x", sig.as_bytes()));
        assert!(!verify_sig(kp.public().as_bytes(), b"y", sig.as_bytes()));
        assert_eq!(sign(&[0u8; 31], b"x"), Err(CryptoError::MalformedKey));
    }

    #[test]
    fn every_signature_bit_flip_fails() {
        let kp = keygen(Role::Thf, Some([1; 32]));
        let sig = kp.sign(b"message");
        for bit in 0..256 {
            let mut bad = sig.0;
            bad[bit / 8] ^= 1 << (bit % 8);
            assert!(!verify_sig(kp.public().as_bytes(), b"message", &bad), "bit {bit}");
        }
    }

    #[test]
    fn verify_is_total_on_garbage() {
        let kp = keygen(Role::Thf, Some([1; 32]));
        assert!(!verify_sig(kp.public().as_bytes(), b"m", &[]));
        assert!(!verify_sig(&[], b"m", &[0; 64]));
        assert!(!verify_sig(&[0xff; 32], b"m", &[0xff; 64]));
        assert!(!verify_sig(kp.public().as_bytes(), b"m", &[0; 65]));
    }

    #[test]
    fn commitment_is_deterministic_and_salt_sensitive() {
        let d = doc("AB1234567");
        let s = Salt([1; 16]);
        assert_eq!(commit(&d, &s), commit(&d, &s));
        let mut seen = HashSet::new();
        for _ in 0..10_000 {
            assert!(seen.insert(commit(&d, &Salt::random())));
        }
    }

    #[test]
    fn commitment_golden_vector() {
        // sha256 computed with Python's hashlib
        let c = commit(&doc("AB1234567"), &Salt([0; 16]));
        assert_eq!(
            c.to_hex(),
            "d1f6661069f9a7db435099262acb6313c24f5c75fac05550d28fdc8ae085e01a"
        );
    }

    #[test]
    fn key_file_round_trip() {
        let kp = keygen(Role::Hsa, Some([9; 32]));
        let back = KeyPair::from_key_file(&kp.to_key_file()).unwrap();
        assert_eq!(back.owner(), kp.owner());
        let line = kp.to_key_file();
        let fields: Vec<&str> = line.split_whitespace().collect();
        let wrong_id = format!("hsa {} {} {}", "00".repeat(16), fields[2], fields[3]);
        assert_eq!(KeyPair::from_key_file(&wrong_id).unwrap_err(), CryptoError::MalformedKey);
        assert!(KeyPair::from_key_file("hsa 00 11 22").is_err());
    }

    #[test]
    fn vector_lines_round_trip() {
        let v = CommitmentVector::new(&doc("ZZ99999"), Salt([4; 16]));
        let parsed = parse_commitment_vectors(&format!("{}\n", v.to_line())).unwrap();
        assert_eq!(parsed, vec![v.clone()]);
        assert!(parsed[0].holds());
    }
}
