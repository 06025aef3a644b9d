use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Distribution of the executed quantity of a posted order of `L` lots when a
/// small trade hits its side; support `{0, ..., L}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "FillDistRepr", into = "FillDistRepr")]
pub struct FillDist {
    pmf: Vec<f64>,
    cdf: Vec<f64>,
    first_moment: f64,
    second_moment: f64,
}

#[derive(Serialize, Deserialize)]
struct FillDistRepr {
    pmf: Vec<f64>,
}

impl TryFrom<FillDistRepr> for FillDist {
    type Error = Error;
    fn try_from(r: FillDistRepr) -> Result<Self> {
        FillDist::new(r.pmf)
    }
}

impl From<FillDist> for FillDistRepr {
    fn from(f: FillDist) -> Self {
        FillDistRepr { pmf: f.pmf }
    }
}

impl FillDist {
    pub fn new(pmf: Vec<f64>) -> Result<Self> {
        if pmf.len() < 2 {
            return Err(Error::InvalidParams(
                "fill pmf must cover {0, ..., L} with L >= 1".into(),
            ));
        }
        if pmf.iter().any(|p| !(p.is_finite() && *p >= 0.0)) {
            return Err(Error::InvalidParams("fill pmf entries must be >= 0".into()));
        }
        let total: f64 = pmf.iter().sum();
        if (total - 1.0).abs() > 1e-12 {
            return Err(Error::InvalidParams(format!(
                "fill pmf sums to {total}, expected 1"
            )));
        }
        let mut cdf = Vec::with_capacity(pmf.len());
        let mut acc = 0.0;
        for p in &pmf {
            acc += p;
            cdf.push(acc);
        }
        let first_moment = pmf.iter().enumerate().map(|(k, p)| k as f64 * p).sum();
        let second_moment = pmf
            .iter()
            .enumerate()
            .map(|(k, p)| (k * k) as f64 * p)
            .sum();
        Ok(FillDist {
            pmf,
            cdf,
            first_moment,
            second_moment,
        })
    }

    /// Every posted lot is always filled.
    pub fn full(lot_size: u32) -> Self {
        let mut pmf = vec![0.0; lot_size as usize + 1];
        pmf[lot_size as usize] = 1.0;
        FillDist::new(pmf).expect("degenerate pmf is valid")
    }

    pub fn uniform(lot_size: u32) -> Self {
        let n = lot_size as usize + 1;
        FillDist::new(vec![1.0 / n as f64; n]).expect("uniform pmf is valid")
    }

    pub fn lot_size(&self) -> u32 {
        (self.pmf.len() - 1) as u32
    }

    pub fn pmf(&self) -> &[f64] {
        &self.pmf
    }

    /// First moment of the executed quantity.
    pub fn mean(&self) -> f64 {
        self.first_moment
    }

    /// Second (raw) moment of the executed quantity.
    pub fn second_moment(&self) -> f64 {
        self.second_moment
    }

    pub fn draw<R: Rng + ?Sized>(&self, rng: &mut R) -> u32 {
        let u: f64 = rng.gen();
        let last = self.pmf.len() - 1;
        // Rounding can leave cdf[last] a hair below 1.
        self.cdf[..last].partition_point(|&c| c <= u) as u32
    }
}
