use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::flow::{FillDist, TradeIntensitySpec};
use crate::model::RenewalDist;

pub const PARAMS_SCHEMA_VERSION: &str = "renewal-mm.params/1";

/// Side of the book relative to the last jump direction: `Strong` is the side
/// the price last moved towards (`+`), `Weak` the opposite one (`-`).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Side {
    Strong,
    Weak,
}

impl Side {
    pub const BOTH: [Side; 2] = [Side::Strong, Side::Weak];

    pub fn sign(self) -> f64 {
        match self {
            Side::Strong => 1.0,
            Side::Weak => -1.0,
        }
    }

    pub fn sign_i64(self) -> i64 {
        match self {
            Side::Strong => 1,
            Side::Weak => -1,
        }
    }

    pub fn from_sign(sign: i64) -> Side {
        if sign > 0 {
            Side::Strong
        } else {
            Side::Weak
        }
    }

    pub fn index(self) -> usize {
        match self {
            Side::Strong => 0,
            Side::Weak => 1,
        }
    }
}

/// All model primitives.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    /// Half-spread; one tick is `2 * delta`.
    pub delta: f64,
    /// Correlation of consecutive jump directions, in `[-1, 1)`.
    pub alpha: f64,
    /// Inter-arrival law when the next jump continues the last direction.
    pub dist_plus: RenewalDist,
    /// Inter-arrival law when the next jump reverts the last direction.
    pub dist_minus: RenewalDist,
    pub lambda_spec: TradeIntensitySpec,
    /// Correlation between trade side and last jump direction, in `(-1, 1)`.
    pub rho: f64,
    pub fill_plus: FillDist,
    pub fill_minus: FillDist,
    pub lot_size: u32,
    pub fee: f64,
    pub eta: f64,
    pub horizon: f64,
}

#[derive(Serialize, Deserialize)]
struct ParamsDocument {
    schema_version: String,
    #[serde(flatten)]
    params: ModelParams,
}

impl ModelParams {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidParams(m));
        if !(self.delta.is_finite() && self.delta > 0.0) {
            return bad(format!("delta must be > 0, got {}", self.delta));
        }
        if !(self.alpha >= -1.0 && self.alpha < 1.0) {
            return bad(format!("alpha must lie in [-1, 1), got {}", self.alpha));
        }
        if !(self.rho > -1.0 && self.rho < 1.0) {
            return bad(format!("rho must lie in (-1, 1), got {}", self.rho));
        }
        if !(self.fee.is_finite() && self.fee >= 0.0) {
            return bad(format!("fee must be >= 0, got {}", self.fee));
        }
        if self.lot_size < 1 {
            return bad("lot size must be >= 1".into());
        }
        if !(self.eta.is_finite() && self.eta >= 0.0) {
            return bad(format!("eta must be >= 0, got {}", self.eta));
        }
        if !(self.horizon.is_finite() && self.horizon >= 0.0) {
            return bad(format!("horizon must be >= 0, got {}", self.horizon));
        }
        self.dist_plus.validate()?;
        self.dist_minus.validate()?;
        self.lambda_spec.validate()?;
        for (name, f) in [("fill_plus", &self.fill_plus), ("fill_minus", &self.fill_minus)] {
            if f.lot_size() != self.lot_size {
                return bad(format!(
                    "{name} covers {{0..{}}} but lot size is {}",
                    f.lot_size(),
                    self.lot_size
                ));
            }
        }
        Ok(())
    }

    pub fn dist(&self, side: Side) -> &RenewalDist {
        match side {
            Side::Strong => &self.dist_plus,
            Side::Weak => &self.dist_minus,
        }
    }

    pub fn fill(&self, side: Side) -> &FillDist {
        match side {
            Side::Strong => &self.fill_plus,
            Side::Weak => &self.fill_minus,
        }
    }

    /// Probability that the next jump is on `side`, i.e. `(1 ± alpha) / 2`.
    pub fn jump_side_weight(&self, side: Side) -> f64 {
        0.5 * (1.0 + side.sign() * self.alpha)
    }

    /// Probability that a trade hits `side`, i.e. `(1 ± rho) / 2`.
    pub fn trade_side_weight(&self, side: Side) -> f64 {
        0.5 * (1.0 + side.sign() * self.rho)
    }

    /// Mean of the pooled inter-arrival law.
    pub fn mean_inter_arrival(&self) -> f64 {
        Side::BOTH
            .iter()
            .map(|&s| self.jump_side_weight(s) * self.dist(s).mean())
            .sum()
    }

    pub fn to_json(&self) -> Result<String> {
        let doc = ParamsDocument {
            schema_version: PARAMS_SCHEMA_VERSION.to_string(),
            params: self.clone(),
        };
        Ok(serde_json::to_string_pretty(&doc)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let value: serde_json::Value = serde_json::from_str(text)?;
        Self::from_json_value(value)
    }

    pub fn from_json_value(value: serde_json::Value) -> Result<Self> {
        match value.get("schema_version").and_then(|v| v.as_str()) {
            Some(PARAMS_SCHEMA_VERSION) => {}
            Some(other) => {
                return Err(Error::Schema(format!(
                    "params schema {other}, expected {PARAMS_SCHEMA_VERSION}"
                )))
            }
            None => return Err(Error::Schema("params document lacks schema_version".into())),
        }
        let doc: ParamsDocument = serde_json::from_value(value)?;
        doc.params.validate()?;
        Ok(doc.params)
    }

    /// SHA-256 over the compact canonical JSON encoding.
    pub fn hash(&self) -> String {
        let doc = ParamsDocument {
            schema_version: PARAMS_SCHEMA_VERSION.to_string(),
            params: self.clone(),
        };
        let canonical = serde_json::to_vec(&doc).expect("params always serialize");
        hex::encode(Sha256::digest(&canonical))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::testing::weibull_exp_params;

    #[test]
    fn json_round_trip() {
        let p = weibull_exp_params();
        let text = p.to_json().unwrap();
        assert!(text.contains(PARAMS_SCHEMA_VERSION));
        assert_eq!(ModelParams::from_json(&text).unwrap(), p);
    }

    #[test]
    fn schema_version_is_enforced() {
        let p = weibull_exp_params();
        let text = p.to_json().unwrap().replace(PARAMS_SCHEMA_VERSION, "other/9");
        assert!(matches!(ModelParams::from_json(&text), Err(Error::Schema(_))));
    }

    #[test]
    fn invariants_rejected() {
        let base = weibull_exp_params();
        let cases: Vec<Box<dyn Fn(&mut ModelParams)>> = vec![
            Box::new(|p| p.alpha = 1.0),
            Box::new(|p| p.rho = -1.0),
            Box::new(|p| p.delta = 0.0),
            Box::new(|p| p.fee = -0.1),
            Box::new(|p| p.eta = -1.0),
            Box::new(|p| p.lot_size = 3),
        ];
        for mutate in cases {
            let mut p = base.clone();
            mutate(&mut p);
            assert!(p.validate().is_err());
        }
    }

    #[test]
    fn hash_tracks_every_field() {
        let p = weibull_exp_params();
        let h = p.hash();
        assert_eq!(h, p.clone().hash());
        let mut q = p.clone();
        q.fee += 1e-9;
        assert_ne!(q.hash(), h);
        let mut q = p.clone();
        q.horizon *= 2.0;
        assert_ne!(q.hash(), h);
    }
}
