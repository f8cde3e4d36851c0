//! Domain types and their canonical byte encodings.
//!
//! Every encoding here is big-endian and length-prefixed where lengths vary.
//! Signatures, commitments and Merkle leaves are computed over these bytes, so
//! they must never change shape without a version bump of the domain tags.

use std::collections::BTreeSet;
use std::fmt;

use chrono::{Datelike, NaiveDate};
use thiserror::Error;

/// Domain tag prefixed to the bytes an issuing facility signs.
pub const DHP_SIGNING_TAG: &[u8] = b"DHPv1|";

/// Test methods the consortium recognises out of the box.
pub const KNOWN_METHODS: &[&str] = &["RT-qPCR", "RT-LAMP", "RAT"];

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum EncodingError {
    #[error("invalid travel document: {0}")]
    InvalidDocument(String),
    #[error("test method code is {0} bytes, at most 255 allowed")]
    MethodTooLong(usize),
    #[error("invalid test method code {0:?}")]
    InvalidMethod(String),
    #[error("truncated input: needed {needed} bytes at offset {offset}")]
    Truncated { needed: usize, offset: usize },
    #[error("unexpected domain tag")]
    BadTag,
    #[error("{0} trailing bytes after value")]
    TrailingBytes(usize),
    #[error("invalid {0}")]
    InvalidValue(&'static str),
}

macro_rules! byte_newtype {
    ($(#[$meta:meta])* $name:ident, $len:expr) => {
        $(#[$meta])*
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

            pub fn from_hex(s: &str) -> Result<Self, EncodingError> {
                let raw = hex::decode(s.trim())
                    .map_err(|_| EncodingError::InvalidValue(stringify!($name)))?;
                Self::from_slice(&raw)
            }

            pub fn from_slice(raw: &[u8]) -> Result<Self, EncodingError> {
                <[u8; $len]>::try_from(raw)
                    .map(Self)
                    .map_err(|_| EncodingError::InvalidValue(stringify!($name)))
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
    };
}

byte_newtype!(
    /// A SHA-256 output.
    Digest,
    32
);
byte_newtype!(
    /// 16-byte consortium member identifier.
    MemberId,
    16
);
byte_newtype!(
    /// Ed25519 verification key bytes.
    PublicKey,
    32
);
byte_newtype!(
    /// Ed25519 signature bytes.
    Signature,
    64
);
byte_newtype!(
    /// Salted hash commitment to a travel document.
    Commitment,
    32
);

impl Digest {
    pub const ZERO: Digest = Digest([0u8; 32]);
}

/// UTC time in whole seconds since the Unix epoch.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
pub struct Timestamp(pub u64);

impl Timestamp {
    pub const HOUR: u64 = 3600;

    pub fn now() -> Self {
        let secs = std::time::SystemTime::now()
            .duration_since(std::time::UNIX_EPOCH)
            .map(|d| d.as_secs())
            .unwrap_or(0);
        Timestamp(secs)
    }

    pub fn secs(self) -> u64 {
        self.0
    }

    pub fn plus(self, secs: u64) -> Self {
        Timestamp(self.0.saturating_add(secs))
    }

    pub fn minus(self, secs: u64) -> Self {
        Timestamp(self.0.saturating_sub(secs))
    }
}

impl fmt::Display for Timestamp {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Role {
    Thf,
    Hsa,
    Bm,
    Citizen,
}

impl Role {
    pub fn code(self) -> u8 {
        match self {
            Role::Thf => 1,
            Role::Hsa => 2,
            Role::Bm => 3,
            Role::Citizen => 4,
        }
    }

    pub fn from_code(code: u8) -> Option<Role> {
        match code {
            1 => Some(Role::Thf),
            2 => Some(Role::Hsa),
            3 => Some(Role::Bm),
            4 => Some(Role::Citizen),
            _ => None,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Role::Thf => "thf",
            Role::Hsa => "hsa",
            Role::Bm => "bm",
            Role::Citizen => "citizen",
        }
    }
}

impl fmt::Display for Role {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for Role {
    type Err = EncodingError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "thf" => Ok(Role::Thf),
            "hsa" => Ok(Role::Hsa),
            "bm" => Ok(Role::Bm),
            "citizen" => Ok(Role::Citizen),
            _ => Err(EncodingError::InvalidValue("role")),
        }
    }
}

/// A consortium participant: its role, identifier and verification key.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct ActorId {
    pub role: Role,
    pub id: MemberId,
    pub public_key: PublicKey,
}

/// The machine-readable subset of a passport or identity card.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct TravelDocument {
    doc_number: String,
    issuing_country: String,
    expiry: NaiveDate,
}

impl TravelDocument {
    pub fn new(
        doc_number: impl Into<String>,
        issuing_country: impl Into<String>,
        expiry: NaiveDate,
    ) -> Result<Self, EncodingError> {
        let doc_number = doc_number.into();
        let issuing_country = issuing_country.into();
        if !(5..=20).contains(&doc_number.len())
            || !doc_number
                .bytes()
                .all(|b| b.is_ascii_uppercase() || b.is_ascii_digit())
        {
            return Err(EncodingError::InvalidDocument(format!(
                "document number {doc_number:?} must be 5-20 uppercase alphanumerics"
            )));
        }
        if issuing_country.len() != 3 || !issuing_country.bytes().all(|b| b.is_ascii_uppercase()) {
            return Err(EncodingError::InvalidDocument(format!(
                "issuing country {issuing_country:?} must be 3 uppercase letters"
            )));
        }
        Ok(Self {
            doc_number,
            issuing_country,
            expiry,
        })
    }

    /// Parses the `NUMBER:CTY:YYYY-MM-DD` form used on the command line.
    pub fn parse(s: &str) -> Result<Self, EncodingError> {
        let mut parts = s.trim().split(':');
        let (Some(num), Some(cty), Some(exp), None) =
            (parts.next(), parts.next(), parts.next(), parts.next())
        else {
            return Err(EncodingError::InvalidDocument(format!(
                "expected NUMBER:CTY:YYYY-MM-DD, got {s:?}"
            )));
        };
        let expiry = NaiveDate::parse_from_str(exp, "%Y-%m-%d")
            .map_err(|e| EncodingError::InvalidDocument(format!("expiry {exp:?}: {e}")))?;
        Self::new(num, cty, expiry)
    }

    pub fn doc_number(&self) -> &str {
        &self.doc_number
    }

    pub fn issuing_country(&self) -> &str {
        &self.issuing_country
    }

    pub fn expiry(&self) -> NaiveDate {
        self.expiry
    }

    /// Days since 1970-01-01; negative before the epoch.
    pub fn expiry_days(&self) -> i32 {
        self.expiry.num_days_from_ce() - epoch().num_days_from_ce()
    }

    /// `u16 len ‖ number ‖ country ‖ i32 days-since-epoch`, all big-endian.
    pub fn canonical_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(2 + self.doc_number.len() + 3 + 4);
        out.extend_from_slice(&(self.doc_number.len() as u16).to_be_bytes());
        out.extend_from_slice(self.doc_number.as_bytes());
        out.extend_from_slice(self.issuing_country.as_bytes());
        out.extend_from_slice(&self.expiry_days().to_be_bytes());
        out
    }

    pub fn from_canonical_bytes(bytes: &[u8]) -> Result<Self, EncodingError> {
        let mut r = Reader::new(bytes);
        let len = r.u16()? as usize;
        let number = std::str::from_utf8(r.take(len)?)
            .map_err(|_| EncodingError::InvalidDocument("number is not UTF-8".into()))?
            .to_owned();
        let country = std::str::from_utf8(r.take(3)?)
            .map_err(|_| EncodingError::InvalidDocument("country is not UTF-8".into()))?
            .to_owned();
        let days = r.u32()? as i32;
        r.finish()?;
        let expiry = epoch()
            .checked_add_signed(chrono::Duration::days(days as i64))
            .ok_or_else(|| EncodingError::InvalidDocument("expiry out of range".into()))?;
        Self::new(number, country, expiry)
    }
}

impl fmt::Display for TravelDocument {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{}:{}:{}",
            self.doc_number,
            self.issuing_country,
            self.expiry.format("%Y-%m-%d")
        )
    }
}

fn epoch() -> NaiveDate {
    NaiveDate::from_ymd_opt(1970, 1, 1).expect("valid epoch")
}

/// Free-function form of [`TravelDocument::canonical_bytes`].
pub fn canonical_doc_bytes(doc: &TravelDocument) -> Vec<u8> {
    doc.canonical_bytes()
}

/// A diagnostic test method such as `RT-qPCR`. Compared by exact bytes.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct TestMethod {
    code: String,
}

impl TestMethod {
    pub fn new(code: impl Into<String>) -> Result<Self, EncodingError> {
        let code = code.into();
        if code.len() > 255 {
            return Err(EncodingError::MethodTooLong(code.len()));
        }
        if code.is_empty() || code.chars().any(char::is_whitespace) {
            return Err(EncodingError::InvalidMethod(code));
        }
        Ok(Self { code })
    }

    pub fn code(&self) -> &str {
        &self.code
    }

    pub fn is_registry_known(&self) -> bool {
        KNOWN_METHODS.contains(&self.code.as_str())
    }
}

impl fmt::Display for TestMethod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.code)
    }
}

/// Bytes signed by the issuing facility:
/// `"DHPv1|" ‖ commitment ‖ result ‖ u64 tested_at ‖ u8 len ‖ method ‖ issuer`.
pub fn dhp_signing_bytes(
    commitment: &Commitment,
    result: bool,
    tested_at: Timestamp,
    method: &TestMethod,
    issuer: &MemberId,
) -> Vec<u8> {
    let code = method.code().as_bytes();
    let mut out = Vec::with_capacity(DHP_SIGNING_TAG.len() + 32 + 1 + 8 + 1 + code.len() + 16);
    out.extend_from_slice(DHP_SIGNING_TAG);
    out.extend_from_slice(commitment.as_bytes());
    out.push(u8::from(result));
    out.extend_from_slice(&tested_at.0.to_be_bytes());
    // TestMethod::new caps codes at 255 bytes.
    out.push(code.len() as u8);
    out.extend_from_slice(code);
    out.extend_from_slice(issuer.as_bytes());
    out
}

/// The on-ledger health passport record.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct HealthPassport {
    pub commitment: Commitment,
    /// `true` means the holder tested risk-free.
    pub result: bool,
    pub tested_at: Timestamp,
    pub method: TestMethod,
    pub issuer: MemberId,
    pub issuer_signature: Signature,
}

impl HealthPassport {
    pub fn signing_bytes(&self) -> Vec<u8> {
        dhp_signing_bytes(
            &self.commitment,
            self.result,
            self.tested_at,
            &self.method,
            &self.issuer,
        )
    }

    /// Signing bytes followed by the 64-byte signature. Self-delimiting.
    pub fn canonical_bytes(&self) -> Vec<u8> {
        let mut out = self.signing_bytes();
        out.extend_from_slice(self.issuer_signature.as_bytes());
        out
    }

    pub fn from_canonical_bytes(bytes: &[u8]) -> Result<Self, EncodingError> {
        let mut r = Reader::new(bytes);
        let rec = Self::read(&mut r)?;
        r.finish()?;
        Ok(rec)
    }

    pub(crate) fn read(r: &mut Reader<'_>) -> Result<Self, EncodingError> {
        if r.take(DHP_SIGNING_TAG.len())? != DHP_SIGNING_TAG {
            return Err(EncodingError::BadTag);
        }
        let commitment = Commitment(r.array()?);
        let result = match r.u8()? {
            0 => false,
            1 => true,
            _ => return Err(EncodingError::InvalidValue("result byte")),
        };
        let tested_at = Timestamp(r.u64()?);
        let len = r.u8()? as usize;
        let code = std::str::from_utf8(r.take(len)?)
            .map_err(|_| EncodingError::InvalidValue("method code"))?;
        let method = TestMethod::new(code)?;
        let issuer = MemberId(r.array()?);
        let issuer_signature = Signature(r.array()?);
        Ok(Self {
            commitment,
            result,
            tested_at,
            method,
            issuer,
            issuer_signature,
        })
    }
}

/// Entry conditions enforced by a destination country.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct HygienePolicy {
    accepted_methods: BTreeSet<String>,
    max_test_age_hours: u64,
    require_risk_free: bool,
}

impl HygienePolicy {
    pub const DEFAULT_MAX_AGE_HOURS: u64 = 72;

    pub fn new<I, S>(accepted_methods: I, max_test_age_hours: u64) -> Result<Self, EncodingError>
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let accepted_methods: BTreeSet<String> =
            accepted_methods.into_iter().map(Into::into).collect();
        if accepted_methods.is_empty() {
            return Err(EncodingError::InvalidValue("policy: accepted_methods is empty"));
        }
        if let Some(bad) = accepted_methods
            .iter()
            .find(|m| TestMethod::new(m.as_str()).is_err())
        {
            return Err(EncodingError::InvalidMethod(bad.clone()));
        }
        if max_test_age_hours == 0 {
            return Err(EncodingError::InvalidValue("policy: max_test_age_hours must be > 0"));
        }
        Ok(Self {
            accepted_methods,
            max_test_age_hours,
            require_risk_free: true,
        })
    }

    pub fn with_require_risk_free(mut self, require: bool) -> Self {
        self.require_risk_free = require;
        self
    }

    pub fn accepts(&self, method: &TestMethod) -> bool {
        self.accepted_methods.contains(method.code())
    }

    pub fn accepted_methods(&self) -> impl Iterator<Item = &str> {
        self.accepted_methods.iter().map(String::as_str)
    }

    pub fn max_test_age_hours(&self) -> u64 {
        self.max_test_age_hours
    }

    pub fn max_test_age_secs(&self) -> u64 {
        self.max_test_age_hours.saturating_mul(Timestamp::HOUR)
    }

    pub fn require_risk_free(&self) -> bool {
        self.require_risk_free
    }
}

impl Default for HygienePolicy {
    /// RT-qPCR only, 72 hour window.
    fn default() -> Self {
        Self::new(["RT-qPCR"], Self::DEFAULT_MAX_AGE_HOURS).expect("valid default policy")
    }
}

/// Cursor over canonical bytes.
pub(crate) struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    pub(crate) fn new(buf: &'a [u8]) -> Self {
        Self { buf, pos: 0 }
    }

    pub(crate) fn take(&mut self, n: usize) -> Result<&'a [u8], EncodingError> {
        if self.buf.len() - self.pos < n {
            return Err(EncodingError::Truncated {
                needed: n,
                offset: self.pos,
            });
        }
        let out = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(out)
    }

    pub(crate) fn array<const N: usize>(&mut self) -> Result<[u8; N], EncodingError> {
        Ok(self.take(N)?.try_into().expect("length checked"))
    }

    pub(crate) fn u8(&mut self) -> Result<u8, EncodingError> {
        Ok(self.take(1)?[0])
    }

    pub(crate) fn u16(&mut self) -> Result<u16, EncodingError> {
        Ok(u16::from_be_bytes(self.array()?))
    }

    pub(crate) fn u32(&mut self) -> Result<u32, EncodingError> {
        Ok(u32::from_be_bytes(self.array()?))
    }

    pub(crate) fn u64(&mut self) -> Result<u64, EncodingError> {
        Ok(u64::from_be_bytes(self.array()?))
    }

    pub(crate) fn remaining(&self) -> usize {
        self.buf.len() - self.pos
    }

    pub(crate) fn finish(self) -> Result<(), EncodingError> {
        match self.remaining() {
            0 => Ok(()),
            n => Err(EncodingError::TrailingBytes(n)),
        }
    }
}
