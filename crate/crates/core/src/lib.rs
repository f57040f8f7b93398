pub mod benchmark;
pub mod channel;
pub mod control;
pub mod error;
pub mod network;
pub mod ocdr;
pub mod qos;
pub mod scenario;
pub mod scheme;
pub mod sim;
pub mod special;
pub mod sweep;
pub mod tcdr;
pub mod topology;
