//! HTTP/JSON front end for a university's private chain nodes.
//!
//! Users authenticate with a password and receive a bearer session. Writes
//! are transactions signed client-side; the gateway checks the session,
//! the role table in [`authz`] and the chain's own permission rules before
//! routing the transaction to the department's node. `/verify` is public
//! and answers from the verifier's consortium log view.

pub mod api;
pub mod auth;
pub mod authz;
pub mod backend;
pub mod config;
pub mod route;
pub mod server;

pub use api::{ApiError, ApiRequest, ApiResponse, Gateway, GatewaySettings};
pub use authz::{access, Access, Endpoint, Principal};
pub use backend::{Backend, LocalBackend};
pub use config::GatewayConfig;
pub use route::{RouteError, RouteTable, Routed};
