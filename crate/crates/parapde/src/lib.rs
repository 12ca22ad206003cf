pub mod autodiff;
pub mod network;
pub mod numerics;
