//! Department to node routing with a single fallback.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum RouteError {
    #[error("no node available for department `{0}`")]
    NoNodeAvailable(String),
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct RouteTable {
    pub routes: BTreeMap<String, String>,
    pub fallback: String,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Routed {
    pub node: String,
    pub failover: bool,
}

impl RouteTable {
    pub fn new(fallback: impl Into<String>) -> Self {
        RouteTable {
            routes: BTreeMap::new(),
            fallback: fallback.into(),
        }
    }

    pub fn with(mut self, department: impl Into<String>, node: impl Into<String>) -> Self {
        self.routes.insert(department.into(), node.into());
        self
    }

    /// The mapped node, or the fallback once when the mapped node is down.
    /// `None` selects the fallback directly.
    pub fn route(&self, department: Option<&str>, is_up: impl Fn(&str) -> bool) -> Result<Routed, RouteError> {
        let Some(dept) = department else {
            return if is_up(&self.fallback) {
                Ok(Routed {
                    node: self.fallback.clone(),
                    failover: false,
                })
            } else {
                Err(RouteError::NoNodeAvailable("(default)".into()))
            };
        };
        let node = self
            .routes
            .get(dept)
            .ok_or_else(|| RouteError::NoNodeAvailable(dept.to_owned()))?;
        if is_up(node) {
            Ok(Routed {
                node: node.clone(),
                failover: false,
            })
        } else if is_up(&self.fallback) {
            Ok(Routed {
                node: self.fallback.clone(),
                failover: true,
            })
        } else {
            Err(RouteError::NoNodeAvailable(dept.to_owned()))
        }
    }
}
