pub mod bus;
pub mod ctrl;
pub mod kin;
pub mod model;
pub mod ops;
pub mod plant;
pub mod stack;
