// index loops mirror the tensor notation of the formulas
#![allow(clippy::needless_range_loop)]

pub mod chart;
pub mod cli;
pub mod curves;
pub mod deform;
pub mod exprlang;
pub mod gauss;
pub mod gallery;
pub mod linalg;
pub mod moduli;
pub mod ode;
pub mod sbrana;
