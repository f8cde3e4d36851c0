use chrono::NaiveDate;

use crate::crypto::{keygen, KeyPair};
use crate::ledger::{ChainState, DhpToken, LookupError};
use crate::types::{EncodingError, Role, TravelDocument};

/// What the traveller's app holds: the document, a device key and the tokens
/// of passports issued so far.
#[derive(Debug, Clone)]
pub struct CitizenWallet {
    pub doc: TravelDocument,
    pub wallet_key: KeyPair,
    tokens: Vec<DhpToken>,
}

pub fn register_citizen(doc: TravelDocument) -> CitizenWallet {
    CitizenWallet {
        doc,
        wallet_key: keygen(Role::Citizen, None),
        tokens: Vec::new(),
    }
}

impl CitizenWallet {
    pub fn from_fields(
        doc_number: &str,
        issuing_country: &str,
        expiry: NaiveDate,
    ) -> Result<Self, EncodingError> {
        Ok(register_citizen(TravelDocument::new(
            doc_number,
            issuing_country,
            expiry,
        )?))
    }

    pub fn tokens(&self) -> &[DhpToken] {
        &self.tokens
    }

    /// Keeps the token only if it opens a record with this wallet's document.
    pub fn accept_token(&mut self, token: DhpToken, chain: &ChainState) -> Result<(), LookupError> {
        chain.lookup_by_token(&token, &self.doc)?;
        self.tokens.push(token);
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn expiry() -> NaiveDate {
        NaiveDate::from_ymd_opt(2032, 6, 30).unwrap()
    }

    #[test]
    fn fresh_wallet_has_no_tokens() {
        let w = CitizenWallet::from_fields("P1234567", "FRA", expiry()).unwrap();
        assert!(w.tokens().is_empty());
        assert_eq!(w.wallet_key.role(), Role::Citizen);
    }

    #[test]
    fn repeat_registration_yields_independent_keys() {
        let a = CitizenWallet::from_fields("P1234567", "FRA", expiry()).unwrap();
        let b = CitizenWallet::from_fields("P1234567", "FRA", expiry()).unwrap();
        assert_ne!(a.wallet_key.public(), b.wallet_key.public());
    }

    #[test]
    fn invalid_document_is_rejected() {
        assert!(matches!(
            CitizenWallet::from_fields("X99", "FRA", expiry()),
            Err(EncodingError::InvalidDocument(_))
        ));
    }
}
