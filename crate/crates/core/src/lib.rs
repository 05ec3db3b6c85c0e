//! Ergodic optimization for expanding maps of the interval: transfer-operator
//! eigendata, involution kernels, calibrated subactions on both sides of the
//! duality, and the piecewise-analytic structure of the calibrated subaction.

pub mod dynamics;
pub mod grid;
pub mod potential;
pub mod transfer;
pub mod kernel;
pub mod maxergodic;
pub mod piecewise;
pub mod config;
pub mod output;
pub mod pipeline;
pub mod example2;
pub mod run;
