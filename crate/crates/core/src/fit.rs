//! Uniform entry point over every training method.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::baselines::{baseline_train, BaselineMethod, BaselineSpec};
use crate::boosting::{Ensemble, FitTrace};
use crate::config::BoostConfig;
use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::mstage::refine_sorted;
use crate::sboost::sboost_train_sorted;
use crate::tree::{select_init_tree, SortedFeatures};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    RrBoost,
    SBoost,
    L2,
    Lad,
    MBoost,
    Robloss,
}

impl Method {
    pub const ALL: [Method; 6] = [
        Method::RrBoost,
        Method::SBoost,
        Method::L2,
        Method::Lad,
        Method::MBoost,
        Method::Robloss,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Method::RrBoost => "rrboost",
            Method::SBoost => "sboost",
            Method::L2 => "l2",
            Method::Lad => "lad",
            Method::MBoost => "mboost",
            Method::Robloss => "robloss",
        }
    }

    fn baseline(self) -> Option<BaselineMethod> {
        match self {
            Method::L2 => Some(BaselineMethod::L2),
            Method::Lad => Some(BaselineMethod::Lad),
            Method::MBoost => Some(BaselineMethod::MBoost),
            Method::Robloss => Some(BaselineMethod::Robloss),
            _ => None,
        }
    }

    pub fn is_robust_two_stage(self) -> bool {
        matches!(self, Method::RrBoost | Method::SBoost)
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Method::ALL
            .into_iter()
            .find(|m| m.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| Error::InvalidArgument(format!("unknown method '{s}'")))
    }
}

#[derive(Debug, Clone)]
pub struct FitOutcome {
    pub method: Method,
    pub ensemble: Ensemble,
    pub trace: FitTrace,
}

/// Fits `method` on `train`, early-stopping on `val`.
pub fn fit(method: Method, train: &Dataset, val: &Dataset, config: &BoostConfig) -> Result<FitOutcome> {
    let mut out = fit_many(&[method], train, val, config)?;
    Ok(out.remove(0))
}

/// Fits several methods, sharing the first stage between the two robust ones.
pub fn fit_many(methods: &[Method], train: &Dataset, val: &Dataset, config: &BoostConfig) -> Result<Vec<FitOutcome>> {
    config.validate()?;
    if train.n_features() != val.n_features() {
        return Err(Error::Data(format!(
            "training data has {} features but validation data has {}",
            train.n_features(),
            val.n_features()
        )));
    }
    let needs_stage1 = methods.iter().any(|m| m.is_robust_two_stage());
    let sorted = needs_stage1.then(|| SortedFeatures::new(&train.x));
    let stage1 = match &sorted {
        Some(sorted) => {
            let init = select_init_tree(train, val, &config.init_depths, &config.init_min_nodes)?;
            Some(sboost_train_sorted(train, sorted, val, init.tree, config)?)
        }
        None => None,
    };
    let mut out = Vec::with_capacity(methods.len());
    for &method in methods {
        let (ensemble, trace) = match (method, &stage1, &sorted) {
            (Method::SBoost, Some(s1), _) => (s1.ensemble.clone(), s1.trace.clone()),
            (Method::RrBoost, Some(s1), Some(sorted)) => refine_sorted(train, sorted, val, s1, config)?,
            _ => {
                let b = method.baseline().expect("baseline method");
                baseline_train(train, val, &BaselineSpec::new(b, config))?
            }
        };
        out.push(FitOutcome {
            method,
            ensemble,
            trace,
        });
    }
    Ok(out)
}
