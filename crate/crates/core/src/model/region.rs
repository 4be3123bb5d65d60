//! Covariate regions: cartesian products of per-dimension interval unions.

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};

/// Closed interval `[lo, hi]`; either end may be infinite.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Interval {
    pub lo: f64,
    pub hi: f64,
}

impl Interval {
    pub fn new(lo: f64, hi: f64) -> Self {
        Self { lo, hi }
    }

    pub fn everything() -> Self {
        Self::new(f64::NEG_INFINITY, f64::INFINITY)
    }

    #[inline]
    pub fn contains(&self, v: f64) -> bool {
        self.lo <= v && v <= self.hi
    }

    pub fn is_everything(&self) -> bool {
        self.lo == f64::NEG_INFINITY && self.hi == f64::INFINITY
    }

    /// Grow outward by `step` times the half-width. A half-infinite interval moves its
    /// finite end by `step * max(|end|, 1)`.
    fn enlarge(&mut self, step: f64) {
        match (self.lo.is_finite(), self.hi.is_finite()) {
            (true, true) => {
                let d = step * 0.5 * (self.hi - self.lo);
                self.lo -= d;
                self.hi += d;
            }
            (true, false) => self.lo -= step * self.lo.abs().max(1.0),
            (false, true) => self.hi += step * self.hi.abs().max(1.0),
            (false, false) => {}
        }
    }
}

// JSON has no infinities, so infinite ends are written as null.
impl Serialize for Interval {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        let lo = self.lo.is_finite().then_some(self.lo);
        let hi = self.hi.is_finite().then_some(self.hi);
        (lo, hi).serialize(s)
    }
}

impl<'de> Deserialize<'de> for Interval {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let (lo, hi) = <(Option<f64>, Option<f64>)>::deserialize(d)?;
        Ok(Interval::new(
            lo.unwrap_or(f64::NEG_INFINITY),
            hi.unwrap_or(f64::INFINITY),
        ))
    }
}

/// Allowed values of one covariate inside a region.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DimRange {
    Unbounded,
    Intervals(Vec<Interval>),
}

impl DimRange {
    #[inline]
    pub fn contains(&self, v: f64) -> bool {
        match self {
            DimRange::Unbounded => true,
            DimRange::Intervals(iv) => iv.iter().any(|i| i.contains(v)),
        }
    }

    /// The intervals this range covers; `Unbounded` becomes the whole line.
    pub fn intervals(&self) -> Vec<Interval> {
        match self {
            DimRange::Unbounded => vec![Interval::everything()],
            DimRange::Intervals(iv) => iv.clone(),
        }
    }

    pub fn is_unbounded(&self) -> bool {
        match self {
            DimRange::Unbounded => true,
            DimRange::Intervals(iv) => iv.len() == 1 && iv[0].is_everything(),
        }
    }
}

/// The recovery region `C_A`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Region {
    pub dims: Vec<DimRange>,
}

impl Region {
    /// All of `R^p`.
    pub fn unbounded(p: usize) -> Self {
        Self {
            dims: vec![DimRange::Unbounded; p],
        }
    }

    /// A single box `prod_j [lo_j, hi_j]`.
    pub fn cuboid(bounds: &[(f64, f64)]) -> Self {
        Self {
            dims: bounds
                .iter()
                .map(|&(lo, hi)| DimRange::Intervals(vec![Interval::new(lo, hi)]))
                .collect(),
        }
    }

    pub fn dim(&self) -> usize {
        self.dims.len()
    }

    pub fn is_unbounded(&self) -> bool {
        self.dims.iter().all(DimRange::is_unbounded)
    }

    #[inline]
    pub fn contains(&self, x: &[f64]) -> bool {
        self.dims.iter().zip(x).all(|(d, v)| d.contains(*v))
    }

    pub fn validate(&self, p: usize) -> Result<()> {
        if self.dims.len() != p {
            return Err(Error::Spec(format!(
                "region has {} dimensions, model has {p}",
                self.dims.len()
            )));
        }
        for (j, d) in self.dims.iter().enumerate() {
            if let DimRange::Intervals(iv) = d {
                if iv.is_empty() {
                    return Err(Error::Spec(format!("dimension {} has no intervals", j + 1)));
                }
                for i in iv {
                    if i.lo.is_nan() || i.hi.is_nan() || !(i.lo < i.hi) {
                        return Err(Error::Spec(format!(
                            "dimension {}: interval [{}, {}] needs lo < hi",
                            j + 1,
                            i.lo,
                            i.hi
                        )));
                    }
                }
                if iv.windows(2).any(|w| !(w[0].hi < w[1].lo)) {
                    return Err(Error::Spec(format!(
                        "dimension {}: intervals must be sorted and disjoint",
                        j + 1
                    )));
                }
            }
        }
        Ok(())
    }

    /// Single-interval bounds per dimension, if the region is a cuboid.
    pub fn bounds(&self) -> Option<Vec<(f64, f64)>> {
        self.dims
            .iter()
            .map(|d| match d {
                DimRange::Unbounded => Some((f64::NEG_INFINITY, f64::INFINITY)),
                DimRange::Intervals(iv) if iv.len() == 1 => Some((iv[0].lo, iv[0].hi)),
                DimRange::Intervals(_) => None,
            })
            .collect()
    }

    /// Uniform outward enlargement of every finite endpoint; overlapping intervals merge.
    pub fn enlarged(&self, step: f64) -> Region {
        let dims = self
            .dims
            .iter()
            .map(|d| match d {
                DimRange::Unbounded => DimRange::Unbounded,
                DimRange::Intervals(iv) => {
                    let mut grown: Vec<Interval> = iv
                        .iter()
                        .map(|i| {
                            let mut i = *i;
                            i.enlarge(step);
                            i
                        })
                        .collect();
                    grown.sort_by(|a, b| a.lo.total_cmp(&b.lo));
                    let mut merged: Vec<Interval> = Vec::with_capacity(grown.len());
                    for i in grown {
                        match merged.last_mut() {
                            Some(last) if i.lo <= last.hi => last.hi = last.hi.max(i.hi),
                            _ => merged.push(i),
                        }
                    }
                    DimRange::Intervals(merged)
                }
            })
            .collect();
        Region { dims }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn membership_is_conjunction() {
        let r = Region::cuboid(&[(0.0, 1.0), (-1.0, 1.0)]);
        assert!(r.contains(&[0.5, 0.0]));
        assert!(r.contains(&[1.0, -1.0]));
        assert!(!r.contains(&[0.5, 2.0]));
        assert!(!r.contains(&[-0.1, 0.0]));
    }

    #[test]
    fn unions_and_validation() {
        let r = Region {
            dims: vec![DimRange::Intervals(vec![Interval::new(0.0, 1.0), Interval::new(2.0, 3.0)])],
        };
        assert!(r.validate(1).is_ok());
        assert!(r.contains(&[2.5]) && !r.contains(&[1.5]));
        let overlapping = Region {
            dims: vec![DimRange::Intervals(vec![Interval::new(0.0, 2.0), Interval::new(1.0, 3.0)])],
        };
        assert!(overlapping.validate(1).is_err());
        assert!(Region::cuboid(&[(1.0, 1.0)]).validate(1).is_err());
        assert!(Region::unbounded(2).validate(1).is_err());
    }

    #[test]
    fn enlargement_is_symmetric_and_merges() {
        let r = Region::cuboid(&[(1.0, 3.0)]).enlarged(0.05);
        assert_eq!(r.bounds().unwrap(), vec![(0.95, 3.05)]);
        let u = Region {
            dims: vec![DimRange::Intervals(vec![Interval::new(0.0, 1.0), Interval::new(1.04, 2.0)])],
        }
        .enlarged(0.05);
        let merged = u.dims[0].intervals();
        assert_eq!(merged.len(), 1);
        assert!((merged[0].lo + 0.025).abs() < 1e-12 && (merged[0].hi - 2.024).abs() < 1e-12);
        let half = Region::cuboid(&[(2.0, f64::INFINITY)]).enlarged(0.05);
        assert_eq!(half.bounds().unwrap()[0].0, 1.9);
    }

    #[test]
    fn json_uses_null_for_infinite_ends() {
        let r = Region::cuboid(&[(0.0, f64::INFINITY)]);
        let s = serde_json::to_string(&r).unwrap();
        assert_eq!(s, r#"{"dims":[{"intervals":[[0.0,null]]}]}"#);
        let back: Region = serde_json::from_str(&s).unwrap();
        assert_eq!(back, r);
        let u: Region = serde_json::from_str(r#"{"dims":["unbounded"]}"#).unwrap();
        assert!(u.is_unbounded());
    }
}
