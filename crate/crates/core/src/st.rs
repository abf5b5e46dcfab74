//! Skin temperature statistics on the raw window.

use crate::dictionary::{def, FeatureDef};
use crate::dsp::{stats, DspError};

pub const ST_FEATURES: [FeatureDef; 6] = [
    def("mean", "degC", "mean skin temperature"),
    def("std", "degC", "standard deviation of skin temperature"),
    def("min", "degC", "minimum skin temperature"),
    def("max", "degC", "maximum skin temperature"),
    def("range", "degC", "skin temperature range"),
    def("slope", "degC/s", "least-squares slope of skin temperature"),
];

pub fn extract_st_features(w: &[f64], fs_hz: f64) -> Result<[f64; 6], DspError> {
    Ok([
        stats::mean(w)?,
        stats::std(w)?,
        stats::min(w)?,
        stats::max(w)?,
        stats::range(w)?,
        stats::slope(w, fs_hz)?,
    ])
}
