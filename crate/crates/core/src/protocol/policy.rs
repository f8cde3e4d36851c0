//! Entry-policy evaluation and the policy config file.
//!
//! ```text
//! # comments allowed
//! accepted_methods = RT-qPCR,RT-LAMP
//! max_test_age_hours = 72
//! require_risk_free = true
//! ```
//!
//! `max_test_age_hours` is a recency window: a test taken at most that many
//! hours before the check passes, the boundary included. Destinations that
//! instead demand a minimum lead time are not expressible here.

use thiserror::Error;

use crate::types::{EncodingError, HealthPassport, HygienePolicy, Timestamp};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Error)]
pub enum ViolationReason {
    #[error("result is not risk-free")]
    NotRiskFree,
    #[error("test method not accepted")]
    MethodNotAccepted,
    #[error("test is too old")]
    TestTooOld,
    #[error("test is dated after the check")]
    TestInFuture,
}

impl ViolationReason {
    pub fn code(self) -> u8 {
        match self {
            ViolationReason::NotRiskFree => 1,
            ViolationReason::MethodNotAccepted => 2,
            ViolationReason::TestTooOld => 3,
            ViolationReason::TestInFuture => 4,
        }
    }

    pub fn from_code(code: u8) -> Option<Self> {
        match code {
            1 => Some(ViolationReason::NotRiskFree),
            2 => Some(ViolationReason::MethodNotAccepted),
            3 => Some(ViolationReason::TestTooOld),
            4 => Some(ViolationReason::TestInFuture),
            _ => None,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            ViolationReason::NotRiskFree => "NotRiskFree",
            ViolationReason::MethodNotAccepted => "MethodNotAccepted",
            ViolationReason::TestTooOld => "TestTooOld",
            ViolationReason::TestInFuture => "TestInFuture",
        }
    }
}

pub fn check_policy(
    dhp: &HealthPassport,
    policy: &HygienePolicy,
    at: Timestamp,
) -> Result<(), ViolationReason> {
    if policy.require_risk_free() && !dhp.result {
        return Err(ViolationReason::NotRiskFree);
    }
    if !policy.accepts(&dhp.method) {
        return Err(ViolationReason::MethodNotAccepted);
    }
    if dhp.tested_at > at {
        return Err(ViolationReason::TestInFuture);
    }
    if at.0 - dhp.tested_at.0 > policy.max_test_age_secs() {
        return Err(ViolationReason::TestTooOld);
    }
    Ok(())
}

pub fn parse_policy(text: &str) -> Result<HygienePolicy, EncodingError> {
    let mut methods: Option<Vec<String>> = None;
    let mut max_age: Option<u64> = None;
    let mut risk_free = true;
    for raw in text.lines() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (key, value) = line
            .split_once('=')
            .ok_or(EncodingError::InvalidValue("policy line without '='"))?;
        match key.trim() {
            "accepted_methods" => {
                methods = Some(
                    value
                        .split(',')
                        .map(str::trim)
                        .filter(|m| !m.is_empty())
                        .map(str::to_owned)
                        .collect(),
                )
            }
            "max_test_age_hours" => {
                max_age = Some(
                    value
                        .trim()
                        .parse()
                        .map_err(|_| EncodingError::InvalidValue("max_test_age_hours"))?,
                )
            }
            "require_risk_free" => {
                risk_free = value
                    .trim()
                    .parse()
                    .map_err(|_| EncodingError::InvalidValue("require_risk_free"))?
            }
            _ => return Err(EncodingError::InvalidValue("unknown policy key")),
        }
    }
    let methods = methods.ok_or(EncodingError::InvalidValue("policy: accepted_methods missing"))?;
    let max_age = max_age.ok_or(EncodingError::InvalidValue("policy: max_test_age_hours missing"))?;
    Ok(HygienePolicy::new(methods, max_age)?.with_require_risk_free(risk_free))
}

pub fn policy_to_text(policy: &HygienePolicy) -> String {
    format!(
        "accepted_methods = {}\nmax_test_age_hours = {}\nrequire_risk_free = {}\n",
        policy.accepted_methods().collect::<Vec<_>>().join(","),
        policy.max_test_age_hours(),
        policy.require_risk_free()
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::types::{Commitment, MemberId, Signature, TestMethod};

    const AT: Timestamp = Timestamp(1_700_000_000);
    const H: u64 = 3600;

    fn dhp(method: &str, tested_at: Timestamp, result: bool) -> HealthPassport {
        HealthPassport {
            commitment: Commitment([0; 32]),
            result,
            tested_at,
            method: TestMethod::new(method).unwrap(),
            issuer: MemberId([0; 16]),
            issuer_signature: Signature([0; 64]),
        }
    }

    #[test]
    fn recent_accepted_test_passes() {
        let p = HygienePolicy::default();
        assert_eq!(check_policy(&dhp("RT-qPCR", AT.minus(10 * H), true), &p, AT), Ok(()));
    }

    #[test]
    fn window_boundary_is_inclusive() {
        let p = HygienePolicy::default();
        assert_eq!(check_policy(&dhp("RT-qPCR", AT.minus(72 * H), true), &p, AT), Ok(()));
        assert_eq!(
            check_policy(&dhp("RT-qPCR", AT.minus(72 * H + 1), true), &p, AT),
            Err(ViolationReason::TestTooOld)
        );
        assert_eq!(check_policy(&dhp("RT-qPCR", AT, true), &p, AT), Ok(()));
    }

    #[test]
    fn violations() {
        let p = HygienePolicy::default();
        assert_eq!(
            check_policy(&dhp("RT-qPCR", AT.plus(1), true), &p, AT),
            Err(ViolationReason::TestInFuture)
        );
        assert_eq!(
            check_policy(&dhp("RAT", AT.minus(H), true), &p, AT),
            Err(ViolationReason::MethodNotAccepted)
        );
        assert_eq!(
            check_policy(&dhp("RT-qPCR", AT.minus(H), false), &p, AT),
            Err(ViolationReason::NotRiskFree)
        );
        // method codes compare byte-for-byte
        assert_eq!(
            check_policy(&dhp("rt-qpcr", AT.minus(H), true), &p, AT),
            Err(ViolationReason::MethodNotAccepted)
        );
    }

    #[test]
    fn config_text_round_trip() {
        let text = "# entry rules\naccepted_methods = RT-qPCR, RT-LAMP\nmax_test_age_hours=48\nrequire_risk_free = true\n";
        let p = parse_policy(text).unwrap();
        assert_eq!(p.max_test_age_hours(), 48);
        assert_eq!(p.accepted_methods().collect::<Vec<_>>(), vec!["RT-LAMP", "RT-qPCR"]);
        assert_eq!(parse_policy(&policy_to_text(&p)).unwrap(), p);
    }

    #[test]
    fn malformed_config_is_rejected() {
        assert!(parse_policy("accepted_methods = RT-qPCR\n").is_err());
        assert!(parse_policy("accepted_methods = \nmax_test_age_hours = 72").is_err());
        assert!(parse_policy("accepted_methods = RT-qPCR\nmax_test_age_hours = 0").is_err());
        assert!(parse_policy("accepted_methods = RT-qPCR\nmax_test_age_hours = -3").is_err());
        assert!(parse_policy("colour = blue").is_err());
    }
}
