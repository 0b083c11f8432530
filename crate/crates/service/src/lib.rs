//! Rating sessions for expert face validation: a durable store plus the
//! HTTP API the rating UI talks to.

pub mod api;
pub mod store;

pub use api::{router, serve};
pub use store::{NewRating, NewSession, RatingRecord, RatingSession, RatingStore, StoreError};
