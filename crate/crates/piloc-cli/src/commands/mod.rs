pub mod eval;
pub mod genmaps;
pub mod replay;
pub mod train;
pub mod util;
