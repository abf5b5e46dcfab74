//! Names and units of every feature column, in matrix order.

use serde::Serialize;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct FeatureDef {
    pub name: &'static str,
    pub unit: &'static str,
    pub description: &'static str,
}

pub(crate) const fn def(name: &'static str, unit: &'static str, description: &'static str) -> FeatureDef {
    FeatureDef {
        name,
        unit,
        description,
    }
}

/// Signal groups in fused order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SignalGroup {
    Eda,
    Bvp,
    St,
}

impl SignalGroup {
    pub const ALL: [SignalGroup; 3] = [SignalGroup::Eda, SignalGroup::Bvp, SignalGroup::St];

    pub fn as_str(self) -> &'static str {
        match self {
            SignalGroup::Eda => "eda",
            SignalGroup::Bvp => "bvp",
            SignalGroup::St => "st",
        }
    }

    pub fn features(self) -> &'static [FeatureDef] {
        match self {
            SignalGroup::Eda => &crate::eda::EDA_FEATURES,
            SignalGroup::Bvp => &crate::bvp::BVP_FEATURES,
            SignalGroup::St => &crate::st::ST_FEATURES,
        }
    }

    pub fn width(self) -> usize {
        self.features().len()
    }

    /// Column range of this group inside the fused vector.
    pub fn fused_range(self) -> std::ops::Range<usize> {
        let start: usize = SignalGroup::ALL
            .iter()
            .take_while(|g| **g != self)
            .map(|g| g.width())
            .sum();
        start..start + self.width()
    }
}

impl std::fmt::Display for SignalGroup {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for SignalGroup {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "eda" => Ok(Self::Eda),
            "bvp" => Ok(Self::Bvp),
            "st" => Ok(Self::St),
            other => Err(format!("unknown signal `{other}` (eda|bvp|st)")),
        }
    }
}

pub const FUSED_WIDTH: usize = 72;

/// The fused dictionary with each column name prefixed by its signal group.
pub fn fused_columns() -> Vec<String> {
    SignalGroup::ALL
        .iter()
        .flat_map(|g| g.features().iter().map(move |f| format!("{}_{}", g, f.name)))
        .collect()
}

/// Machine-readable dictionary: one object per fused column.
pub fn dictionary_json() -> serde_json::Value {
    let mut index = 0;
    let mut cols = Vec::new();
    for g in SignalGroup::ALL {
        for f in g.features() {
            cols.push(serde_json::json!({
                "index": index,
                "column": format!("{}_{}", g, f.name),
                "signal": g.as_str(),
                "name": f.name,
                "unit": f.unit,
                "description": f.description,
            }));
            index += 1;
        }
    }
    serde_json::json!({
        "std_convention": "population (ddof=0)",
        "kurtosis_convention": "Fisher excess",
        "hrv_bands_hz": {"vlf": [0.003, 0.04], "lf": [0.04, 0.15], "hf": [0.15, 0.4]},
        "columns": cols,
    })
}
