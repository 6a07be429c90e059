pub mod creatures;
pub mod numeric;
pub mod relational;
pub mod connections;
pub mod conditions;
pub mod products;
pub mod family;
pub mod suites;
pub mod cli;
