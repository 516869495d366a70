pub mod augment;
pub mod eval;
pub mod fuse;
pub mod gradcheck;
pub mod visdiff;
