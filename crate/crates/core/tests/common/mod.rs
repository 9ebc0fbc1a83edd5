pub mod oracles;
pub mod physics;
