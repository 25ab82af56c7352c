pub mod basis;
pub mod disk;
pub mod forward;
pub mod geometry;
pub mod harness;
pub mod locate;
pub mod mcmc;
pub mod specfun;
