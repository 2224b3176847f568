//! Cross-app interference analysis for home automation apps.
//!
//! The pipeline is: parse and validate an app ([`lang`]), enumerate its paths
//! into trigger-condition-action rules ([`symex`]), bind the rules to a home's
//! devices ([`rules`], [`config`]), and check rule pairs for interference
//! ([`detector`]) with a finite-domain solver ([`solver`]).

pub mod catalog;
pub mod config;
pub mod detector;
pub mod lang;
pub mod merge;
pub mod rules;
pub mod session;
pub mod solver;
pub mod symex;
pub mod term;
pub mod value;
