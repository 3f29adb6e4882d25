pub mod attack;
pub mod bench;
pub mod run;
pub mod select_sim;
