//! Pseudo-Boolean knowledge compilation for feature models.
//!
//! Feature models are encoded into pseudo-Boolean formulas ([`encode`]), which are
//! compiled into d-DNNF circuits ([`compile`]) supporting exact counting and enumeration
//! ([`ddnnf`]).

pub mod compile;
pub mod ddnnf;
pub mod encode;
pub mod fixtures;
pub mod fm;
pub mod opb;
pub mod oracle;
pub mod pb;
