//! Fit configuration shared by the robust stages and the baselines.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::losses::LossSpec;
use crate::mscale::DEFAULT_SCALE_TOL;

/// Observations per leaf for base learners.
pub const DEFAULT_MIN_NODE: usize = 7;
/// Consecutive zero steps that end the second stage.
pub const DEFAULT_PLATEAU: usize = 25;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoostConfig {
    pub depth: usize,
    pub min_node: usize,
    pub gamma: f64,
    pub t1_max: usize,
    pub t2_max: usize,
    /// Iteration budget for single-stage baselines.
    pub t_max: usize,
    pub rho0: LossSpec,
    pub rho1: LossSpec,
    pub scale_tol: f64,
    pub init_depths: Vec<usize>,
    pub init_min_nodes: Vec<usize>,
    pub plateau_patience: Option<usize>,
}

impl BoostConfig {
    /// Defaults for base learners of the given depth.
    pub fn for_depth(depth: usize) -> Self {
        let shallow = depth <= 1;
        Self {
            depth,
            min_node: DEFAULT_MIN_NODE,
            gamma: 1.0,
            t1_max: if shallow { 500 } else { 300 },
            t2_max: if shallow { 1000 } else { 500 },
            t_max: if shallow { 1500 } else { 800 },
            rho0: LossSpec::tukey_scale(),
            rho1: LossSpec::tukey_efficient(),
            scale_tol: DEFAULT_SCALE_TOL,
            init_depths: vec![0, 1, 2, 3, 4],
            init_min_nodes: vec![10, 20, 30],
            plateau_patience: Some(DEFAULT_PLATEAU),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.depth == 0 {
            return Err(Error::InvalidArgument("base learner depth must be at least 1".into()));
        }
        if self.min_node == 0 {
            return Err(Error::InvalidArgument("min_node must be at least 1".into()));
        }
        if !(self.gamma > 0.0 && self.gamma <= 1.0) {
            return Err(Error::InvalidArgument(format!(
                "gamma must lie in (0, 1], got {}",
                self.gamma
            )));
        }
        self.rho0.validate()?;
        self.rho1.validate()?;
        if !self.rho0.is_bounded() || self.rho0.kappa > self.rho0.sup() {
            return Err(Error::InvalidArgument(
                "scale loss must be bounded with kappa ≤ sup rho".into(),
            ));
        }
        if !(self.scale_tol > 0.0) {
            return Err(Error::InvalidArgument("scale tolerance must be positive".into()));
        }
        if !self.init_depths.contains(&0) {
            return Err(Error::InvalidArgument("initializer depths must include 0".into()));
        }
        if self.init_min_nodes.is_empty() || self.init_min_nodes.contains(&0) {
            return Err(Error::InvalidArgument(
                "initializer min_node values must be positive".into(),
            ));
        }
        Ok(())
    }
}

impl Default for BoostConfig {
    fn default() -> Self {
        Self::for_depth(1)
    }
}
