//! Fire-sale externalities and efficient bank holdings in a leverage-targeting
//! economy.

pub mod efficient;
pub mod error;
pub mod liquidation;
pub mod model;
pub mod montecarlo;
pub mod numerics;
pub mod scenarios;
pub mod statics;
pub mod validation;

pub use error::{Error, ErrorKind, Result};
pub use model::{AssetUniverse, BankingSector, MarketCaps, MarketModel};
pub use numerics::Matrix;
