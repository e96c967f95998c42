pub mod corpus;
pub mod densemos;
pub mod dsp;
pub mod exec;
pub mod ratings;
pub mod stats;
