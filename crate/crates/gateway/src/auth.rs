//! Password credentials with lockout, and bearer sessions.

use std::collections::HashMap;

use educhain_core::hash::digest_sha256;
use educhain_core::{AccountId, Role};
use rand::{CryptoRng, RngCore};

pub const DEFAULT_LOCKOUT_THRESHOLD: u32 = 10;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum AuthError {
    #[error("bad credentials")]
    BadCredentials,
    #[error("account locked")]
    AccountLocked,
}

#[derive(Clone, Debug)]
struct Credential {
    salt: [u8; 16],
    digest: [u8; 32],
    failures: u32,
}

fn salted(salt: &[u8; 16], password: &str) -> [u8; 32] {
    let mut input = salt.to_vec();
    input.extend_from_slice(password.as_bytes());
    digest_sha256(&input).0
}

/// Constant-time equality over fixed-size digests.
fn same(a: &[u8; 32], b: &[u8; 32]) -> bool {
    a.iter().zip(b).fold(0u8, |acc, (x, y)| acc | (x ^ y)) == 0
}

/// Salted SHA-256 password digests. An account locks after `threshold`
/// consecutive failures and stays locked until its password is reset.
#[derive(Clone, Debug)]
pub struct PasswordStore {
    creds: HashMap<AccountId, Credential>,
    threshold: u32,
}

impl PasswordStore {
    pub fn new(threshold: u32) -> Self {
        PasswordStore {
            creds: HashMap::new(),
            threshold,
        }
    }

    pub fn set_password<R: RngCore + CryptoRng>(&mut self, rng: &mut R, account: AccountId, password: &str) {
        let mut salt = [0u8; 16];
        rng.fill_bytes(&mut salt);
        self.creds.insert(
            account,
            Credential {
                salt,
                digest: salted(&salt, password),
                failures: 0,
            },
        );
    }

    pub fn contains(&self, account: &AccountId) -> bool {
        self.creds.contains_key(account)
    }

    pub fn is_locked(&self, account: &AccountId) -> bool {
        self.creds
            .get(account)
            .map_or(false, |c| c.failures >= self.threshold)
    }

    /// Unknown accounts fail exactly like a wrong password.
    pub fn check(&mut self, account: &AccountId, password: &str) -> Result<(), AuthError> {
        let threshold = self.threshold;
        let Some(c) = self.creds.get_mut(account) else {
            let _ = salted(&[0; 16], password);
            return Err(AuthError::BadCredentials);
        };
        if c.failures >= threshold {
            return Err(AuthError::AccountLocked);
        }
        if same(&salted(&c.salt, password), &c.digest) {
            c.failures = 0;
            Ok(())
        } else {
            c.failures += 1;
            if c.failures >= threshold {
                Err(AuthError::AccountLocked)
            } else {
                Err(AuthError::BadCredentials)
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Session {
    pub token: String,
    pub account: AccountId,
    pub role: Role,
    pub subject_id: String,
    pub expiry: u64,
}

#[derive(Clone, Debug, Default)]
pub struct SessionStore {
    sessions: HashMap<String, Session>,
}

impl SessionStore {
    /// Issues a session with a fresh 32-byte random token.
    pub fn issue<R: RngCore + CryptoRng>(
        &mut self,
        rng: &mut R,
        account: AccountId,
        role: Role,
        subject_id: String,
        expiry: u64,
    ) -> Session {
        let mut bytes = [0u8; 32];
        rng.fill_bytes(&mut bytes);
        let session = Session {
            token: hex::encode(bytes),
            account,
            role,
            subject_id,
            expiry,
        };
        self.sessions.insert(session.token.clone(), session.clone());
        session
    }

    /// The live session for `token`; expired sessions are dropped.
    pub fn get(&mut self, token: &str, now: u64) -> Option<Session> {
        match self.sessions.get(token) {
            Some(s) if now < s.expiry => Some(s.clone()),
            Some(_) => {
                self.sessions.remove(token);
                None
            }
            None => None,
        }
    }

    pub fn revoke(&mut self, token: &str) -> bool {
        self.sessions.remove(token).is_some()
    }

    pub fn len(&self) -> usize {
        self.sessions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sessions.is_empty()
    }
}
