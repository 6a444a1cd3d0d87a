//! Static bearer tokens.
//!
//! The token file is TOML:
//!
//! ```toml
//! [[token]]
//! token = "s3cret"
//! principal = "alice"
//! role = "researcher"
//! expires_at = "2030-01-01T00:00:00Z"   # optional
//! ```
//!
//! Participants are anonymous: the package download and result upload
//! endpoints take no token. A `participant` token is accepted there too but
//! grants nothing on researcher endpoints.

use std::collections::HashMap;
use std::path::Path;

use chrono::{DateTime, Utc};
use psytest_core::{ApiError, ErrorCode};
use serde::Deserialize;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Role {
    Researcher,
    Participant,
}

#[derive(Debug, Clone, PartialEq, Eq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TokenEntry {
    pub token: String,
    pub principal: String,
    pub role: Role,
    #[serde(default)]
    pub expires_at: Option<DateTime<Utc>>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct TokenFile {
    #[serde(default)]
    token: Vec<TokenEntry>,
}

#[derive(Debug, thiserror::Error)]
pub enum TokenFileError {
    #[error("reading token file: {0}")]
    Io(#[from] std::io::Error),
    #[error("parsing token file: {0}")]
    Parse(#[from] toml::de::Error),
    #[error("token for {0:?} appears more than once")]
    Duplicate(String),
}

#[derive(Debug, Clone, Default)]
pub struct TokenStore {
    by_token: HashMap<String, TokenEntry>,
}

/// An authenticated researcher.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Researcher(pub String);

impl TokenStore {
    pub fn new(entries: impl IntoIterator<Item = TokenEntry>) -> Result<Self, TokenFileError> {
        let mut by_token = HashMap::new();
        for e in entries {
            if by_token.contains_key(&e.token) {
                return Err(TokenFileError::Duplicate(e.principal));
            }
            by_token.insert(e.token.clone(), e);
        }
        Ok(Self { by_token })
    }

    pub fn parse(text: &str) -> Result<Self, TokenFileError> {
        let file: TokenFile = toml::from_str(text)?;
        Self::new(file.token)
    }

    pub fn load(path: &Path) -> Result<Self, TokenFileError> {
        Self::parse(&std::fs::read_to_string(path)?)
    }

    /// Resolves an `Authorization` header value to a researcher.
    pub fn researcher(
        &self,
        authorization: Option<&str>,
        now: DateTime<Utc>,
    ) -> Result<Researcher, ApiError> {
        let token = authorization
            .and_then(|h| h.strip_prefix("Bearer "))
            .map(str::trim)
            .filter(|t| !t.is_empty())
            .ok_or_else(|| ApiError::new(ErrorCode::AuthRequired, "bearer token required"))?;
        let entry = self
            .by_token
            .get(token)
            .ok_or_else(|| ApiError::new(ErrorCode::AuthRequired, "unknown token"))?;
        if entry.expires_at.is_some_and(|exp| exp <= now) {
            return Err(ApiError::new(ErrorCode::AuthExpired, "token expired"));
        }
        match entry.role {
            Role::Researcher => Ok(Researcher(entry.principal.clone())),
            Role::Participant => Err(ApiError::new(
                ErrorCode::AuthForbidden,
                "participant tokens cannot use researcher endpoints",
            )),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const FILE: &str = r#"
        [[token]]
        token = "r1"
        principal = "alice"
        role = "researcher"

        [[token]]
        token = "old"
        principal = "bob"
        role = "researcher"
        expires_at = "2020-01-01T00:00:00Z"

        [[token]]
        token = "p1"
        principal = "kiosk"
        role = "participant"
    "#;

    #[test]
    fn resolves_roles_and_expiry() {
        let store = TokenStore::parse(FILE).unwrap();
        let now = Utc::now();
        assert_eq!(store.researcher(Some("Bearer r1"), now).unwrap().0, "alice");
        let code = |h: Option<&str>| store.researcher(h, now).unwrap_err().code;
        assert_eq!(code(None), ErrorCode::AuthRequired);
        assert_eq!(code(Some("Basic r1")), ErrorCode::AuthRequired);
        assert_eq!(code(Some("Bearer nope")), ErrorCode::AuthRequired);
        assert_eq!(code(Some("Bearer old")), ErrorCode::AuthExpired);
        assert_eq!(code(Some("Bearer p1")), ErrorCode::AuthForbidden);
    }

    #[test]
    fn duplicate_tokens_rejected() {
        let text = "[[token]]\ntoken='a'\nprincipal='x'\nrole='researcher'\n[[token]]\ntoken='a'\nprincipal='y'\nrole='researcher'\n";
        assert!(matches!(TokenStore::parse(text), Err(TokenFileError::Duplicate(_))));
    }
}
