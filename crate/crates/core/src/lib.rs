pub mod ahc;
pub mod cli;
pub mod autodiff;
pub mod data;
pub mod evaluator;
pub mod forecaster;
pub mod search;
pub mod searchspace;
