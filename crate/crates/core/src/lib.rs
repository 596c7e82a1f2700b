pub mod adversary;
pub mod algebra;
pub mod evaluator;
pub mod gp;
pub mod instance;
pub mod mdp;
pub mod program;
pub mod report;
pub mod scp;
