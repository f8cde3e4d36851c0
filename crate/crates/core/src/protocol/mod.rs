//! Actor-level flows: citizen registration, facility issuance, authority
//! registration, member verification and manifest audits.

mod audit;
mod issue;
mod policy;
mod verify;
mod wallet;

pub use audit::{audit_manifest, parse_manifest, AuditError, AuditReport, ManifestEntry};
pub use issue::{hsa_register, thf_issue, thf_issue_with_rng, PendingDhp};
pub use policy::{check_policy, parse_policy, policy_to_text, ViolationReason};
pub use verify::{bm_verify, OutcomeStatus, VerificationOutcome, VerificationReceipt};
pub use wallet::{register_citizen, CitizenWallet};

use thiserror::Error;

use crate::ledger::LedgerError;
use crate::types::{EncodingError, Role};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ProtocolError {
    #[error("test result is not risk-free; no passport is issued")]
    NotRiskFree,
    #[error("a {0} key cannot issue passports")]
    NotAuthorizedIssuer(Role),
    #[error("tested_at lies in the future")]
    FutureTimestamp,
    #[error("a {0} key is not a verifying consortium member")]
    NotABlockchainMember(Role),
    #[error(transparent)]
    Ledger(#[from] LedgerError),
    #[error(transparent)]
    Encoding(#[from] EncodingError),
}
