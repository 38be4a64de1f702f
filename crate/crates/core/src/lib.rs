pub mod error;
pub mod finite_eq;
pub mod linalg;
pub mod model;
pub mod scenarios;
pub mod lqr_exo;
pub mod sebeu_lq;
pub mod simulate;
pub mod epsnash;
pub mod cli;
