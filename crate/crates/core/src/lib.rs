pub mod claims;
pub mod duality;
pub mod error;
pub mod exec;
pub mod model;
pub mod quadrature;
pub mod roots;
pub mod simulate;
pub mod verify;
