//! Synthetic maritime distress-call ("chatter") generation toolkit.
//!
//! The crate wires together the pieces needed to bootstrap a training
//! dataset of SMCP-style radio dialogues from public datasets:
//!
//! - [`geo`] ingests shoreline polygons, a gazetteer and AIS vessel
//!   records, and answers geospatial queries in nautical miles;
//! - [`verbalize`] converts numbers and coordinates to and from the
//!   spoken style used on the radio ("three eight degrees ...");
//! - [`context`] samples realistic distress contexts from the geodata;
//! - [`rouge`] provides Rouge-L similarity for deduplication;
//! - [`filters`] is the 26-filter compliance gate deciding whether a
//!   generated dialogue is valid;
//! - [`gateway`] talks to a text-completion backend (HTTP or scripted
//!   replay);
//! - [`selfinstruct`] runs the iterative generate-filter-grow loop and
//!   exports training data;
//! - [`eval`] scores datasets with the four-metric framework;
//! - [`config`] and [`cli`] expose everything as a command-line tool.

pub mod cli;
pub mod config;
pub mod context;
pub mod eval;
pub mod filters;
pub mod gateway;
pub mod geo;
pub mod rouge;
pub mod selfinstruct;
pub mod verbalize;
