//! Depth error metrics: MAE and RMSE on depth, iMAE and iRMSE on inverse depth.

use std::fmt::Write as _;

use crate::error::{Error, Result};
use crate::grid::{ensure_same_dims, DepthMap, Mask};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MetricReport {
    /// Meters.
    pub mae: f64,
    /// Meters.
    pub rmse: f64,
    /// Inverse meters.
    pub imae: f64,
    /// Inverse meters.
    pub irmse: f64,
    pub evaluated_pixels: usize,
}

/// Display units for metric output. Values are always computed in meters.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum Unit {
    #[default]
    Meters,
    /// Millimeters for depth errors, inverse kilometers for inverse-depth errors.
    Millimeters,
}

impl Unit {
    /// Both conversions (m to mm, 1/m to 1/km) are a factor of 1000.
    pub fn scale(self) -> f64 {
        match self {
            Unit::Meters => 1.0,
            Unit::Millimeters => 1000.0,
        }
    }
}

impl std::str::FromStr for Unit {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "m" => Ok(Unit::Meters),
            "mm" => Ok(Unit::Millimeters),
            other => Err(Error::InvalidArgument(format!(
                "unknown unit {other:?} (expected m or mm)"
            ))),
        }
    }
}

pub const CSV_HEADER: &str = "mae,rmse,imae,irmse,evaluated_pixels";

impl MetricReport {
    /// Metric columns in the same order and formatting as the solver trace.
    pub fn csv_fields(&self, unit: Unit) -> String {
        let s = unit.scale();
        format!(
            "{},{},{},{}",
            self.mae * s,
            self.rmse * s,
            self.imae * s,
            self.irmse * s
        )
    }

    pub fn to_csv(&self, unit: Unit) -> String {
        let mut out = String::new();
        writeln!(out, "{CSV_HEADER}").unwrap();
        writeln!(out, "{},{}", self.csv_fields(unit), self.evaluated_pixels).unwrap();
        out
    }
}

/// Evaluates `pred` against `gt` on the pixels selected by `mask`.
pub fn evaluate(pred: &DepthMap, gt: &DepthMap, mask: &Mask) -> Result<MetricReport> {
    ensure_same_dims(pred.dims(), gt.dims())?;
    ensure_same_dims(pred.dims(), mask.dims())?;
    let mut n = 0usize;
    let (mut abs, mut sq, mut iabs, mut isq) = (0.0, 0.0, 0.0, 0.0);
    for ((&p, &g), &m) in pred.values().iter().zip(gt.values()).zip(mask.bits()) {
        if !m {
            continue;
        }
        if !(p > 0.0 && g > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "non-positive depth in evaluation mask (pred {p}, gt {g})"
            )));
        }
        let e = p - g;
        let ie = 1.0 / p - 1.0 / g;
        abs += e.abs();
        sq += e * e;
        iabs += ie.abs();
        isq += ie * ie;
        n += 1;
    }
    if n == 0 {
        return Err(Error::InvalidDomain("evaluation mask is empty".into()));
    }
    let k = n as f64;
    Ok(MetricReport {
        mae: abs / k,
        rmse: (sq / k).sqrt(),
        imae: iabs / k,
        irmse: (isq / k).sqrt(),
        evaluated_pixels: n,
    })
}
