//! The 22-feature universe shared by every workflow.
//!
//! Each feature has a fixed exposure class that decides where it may appear:
//! subjective bedside inputs and the small direct objective snapshot are
//! visible from the start, retrievable keys only through the acquisition
//! loop. Values are always patient data; names and domains are task metadata.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use serde_json::Value;

/// How a feature is exposed to the staged workflow.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Exposure {
    SubjectiveDirect,
    ObjectiveDirect,
    ObjectiveRetrievable,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum ClinicalDomain {
    Hemodynamic,
    Monitoring,
    Sofa,
    Perfusion,
    Renal,
    Pressor,
    Oxygenation,
    General,
    Inflammation,
    Rhythm,
    Pain,
    Sedation,
}

/// Storage shape of a feature value.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ValueShape {
    Integer,
    Real,
    Flag,
    Token,
    RassWindow,
}

macro_rules! feature_names {
    ($( $variant:ident => $name:literal, $exposure:ident, $domain:ident, $shape:ident, $desc:literal; )*) => {
        /// One of the 22 feature identifiers, in canonical rendering order.
        #[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
        pub enum FeatureName {
            $( $variant, )*
        }

        impl FeatureName {
            pub const ALL: [FeatureName; 22] = [ $( FeatureName::$variant, )* ];

            pub fn as_str(self) -> &'static str {
                match self {
                    $( FeatureName::$variant => $name, )*
                }
            }

            pub fn exposure(self) -> Exposure {
                match self {
                    $( FeatureName::$variant => Exposure::$exposure, )*
                }
            }

            pub fn domain(self) -> ClinicalDomain {
                match self {
                    $( FeatureName::$variant => ClinicalDomain::$domain, )*
                }
            }

            pub fn shape(self) -> ValueShape {
                match self {
                    $( FeatureName::$variant => ValueShape::$shape, )*
                }
            }

            /// Value-independent description; safe to show a remote model.
            pub fn description(self) -> &'static str {
                match self {
                    $( FeatureName::$variant => $desc, )*
                }
            }
        }

        impl FromStr for FeatureName {
            type Err = UnknownFeature;

            fn from_str(s: &str) -> Result<Self, Self::Err> {
                match s {
                    $( $name => Ok(FeatureName::$variant), )*
                    other => Err(UnknownFeature(other.to_string())),
                }
            }
        }
    };
}

feature_names! {
    PainMaxLast1h => "pain_max_last1h", SubjectiveDirect, Pain, Integer,
        "Highest bedside pain score charted in the prior hour (0-10).";
    RassWindowLast1h => "rass_window_last1h", SubjectiveDirect, Sedation, RassWindow,
        "Max, min and count of RASS observations in the prior hour.";
    MapMedianLast1h => "map_median_last1h", ObjectiveDirect, Hemodynamic, Real,
        "Median mean arterial pressure over the prior hour (mmHg).";
    HrMedianLast1h => "hr_median_last1h", ObjectiveDirect, Hemodynamic, Real,
        "Median heart rate over the prior hour (beats/min).";
    HasMapCoverageLast1h => "has_map_coverage_last1h", ObjectiveDirect, Monitoring, Flag,
        "Whether any MAP measurement covers the prior hour.";
    MapCoveredMinutesLast1h => "map_covered_minutes_last1h", ObjectiveRetrievable, Monitoring, Integer,
        "Minutes of the prior hour covered by a carried-forward MAP reading.";
    MapLowMinutesLast1hThr65 => "map_low_minutes_last1h_thr65", ObjectiveDirect, Hemodynamic, Integer,
        "Minutes of the prior hour with MAP below 65 mmHg.";
    MapLowMinutesLast1hThr60 => "map_low_minutes_last1h_thr60", ObjectiveDirect, Hemodynamic, Integer,
        "Minutes of the prior hour with MAP below 60 mmHg.";
    SofaTotal => "sofa_total", ObjectiveDirect, Sofa, Integer,
        "Total SOFA score at the evaluation hour (0-24).";
    SofaResp => "sofa_resp", ObjectiveRetrievable, Sofa, Integer,
        "Respiratory SOFA component (0-4).";
    SofaCoag => "sofa_coag", ObjectiveRetrievable, Sofa, Integer,
        "Coagulation SOFA component (0-4).";
    SofaLiver => "sofa_liver", ObjectiveRetrievable, Sofa, Integer,
        "Liver SOFA component (0-4).";
    SofaCardiovascular => "sofa_cardiovascular", ObjectiveDirect, Sofa, Integer,
        "Cardiovascular SOFA component (0-4).";
    SofaCns => "sofa_cns", ObjectiveRetrievable, Sofa, Integer,
        "Central nervous system SOFA component (0-4).";
    SofaRenal => "sofa_renal", ObjectiveRetrievable, Sofa, Integer,
        "Renal SOFA component (0-4).";
    LactateLatest6h => "lactate_latest_6h", ObjectiveRetrievable, Perfusion, Real,
        "Most recent lactate within 6 hours (mmol/L).";
    UrineOutputMlkghr6h => "urine_output_mlkghr_6h", ObjectiveRetrievable, Renal, Real,
        "Weight-normalized urine output rate over 6 hours (mL/kg/h).";
    NorepiEqDoseMax1h => "norepi_eq_dose_max_1h", ObjectiveRetrievable, Pressor, Real,
        "Maximum norepinephrine-equivalent dose in the prior hour (mcg/kg/min).";
    Spo2Latest1h => "spo2_latest_1h", ObjectiveRetrievable, Oxygenation, Real,
        "Most recent SpO2 within 1 hour (%).";
    TemperatureLatest4h => "temperature_latest_4h", ObjectiveRetrievable, General, Real,
        "Most recent temperature within 4 hours (Celsius).";
    WbcLatest24h => "wbc_latest_24h", ObjectiveRetrievable, Inflammation, Real,
        "Most recent white blood cell count within 24 hours (K/uL).";
    RhythmRecent6h => "rhythm_recent_6h", ObjectiveRetrievable, Rhythm, Token,
        "Most recent charted cardiac rhythm within 6 hours.";
}

impl FeatureName {
    pub fn with_exposure(exposure: Exposure) -> impl Iterator<Item = FeatureName> {
        Self::ALL.into_iter().filter(move |f| f.exposure() == exposure)
    }

    /// Keys the acquisition loop may request.
    pub fn is_requestable(self) -> bool {
        self.exposure() != Exposure::SubjectiveDirect
    }
}

impl fmt::Display for FeatureName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl Serialize for FeatureName {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.serialize_str(self.as_str())
    }
}

impl<'de> Deserialize<'de> for FeatureName {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("unknown feature key `{0}`")]
pub struct UnknownFeature(pub String);

/// Range-and-count summary of RASS observations.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RassWindow {
    pub max: i32,
    pub min: i32,
    pub n: u32,
}

/// A feature value, with missing data kept explicit.
#[derive(Debug, Clone, PartialEq)]
pub enum FeatureValue {
    Missing,
    Integer(i64),
    Real(f64),
    Flag(bool),
    Token(String),
    Rass(RassWindow),
}

impl FeatureValue {
    pub fn is_missing(&self) -> bool {
        matches!(self, FeatureValue::Missing)
    }

    /// Numeric view for threshold rules; `None` for missing or non-numeric values.
    pub fn as_f64(&self) -> Option<f64> {
        match self {
            FeatureValue::Integer(v) => Some(*v as f64),
            FeatureValue::Real(v) => Some(*v),
            _ => None,
        }
    }

    pub fn as_flag(&self) -> Option<bool> {
        match self {
            FeatureValue::Flag(b) => Some(*b),
            _ => None,
        }
    }

    /// Rendering used in local prompts. Missing values render as `N/A`.
    pub fn render(&self) -> String {
        match self {
            FeatureValue::Missing => "N/A".to_string(),
            FeatureValue::Integer(v) => v.to_string(),
            FeatureValue::Real(v) => render_real(*v),
            FeatureValue::Flag(b) => b.to_string(),
            FeatureValue::Token(s) => s.clone(),
            FeatureValue::Rass(w) => format!("max={} min={} n={}", w.max, w.min, w.n),
        }
    }

    pub fn to_json(&self) -> Value {
        match self {
            FeatureValue::Missing => Value::Null,
            FeatureValue::Integer(v) => Value::from(*v),
            FeatureValue::Real(v) => serde_json::Number::from_f64(*v)
                .map(Value::Number)
                .unwrap_or(Value::Null),
            FeatureValue::Flag(b) => Value::Bool(*b),
            FeatureValue::Token(s) => Value::String(s.clone()),
            FeatureValue::Rass(w) => serde_json::json!({ "max": w.max, "min": w.min, "n": w.n }),
        }
    }

    pub fn from_json(name: FeatureName, value: &Value) -> Result<Self, String> {
        if value.is_null() {
            return Ok(FeatureValue::Missing);
        }
        let bad = || format!("feature `{name}` has malformed value {value}");
        match name.shape() {
            ValueShape::Integer => value.as_i64().map(FeatureValue::Integer).ok_or_else(bad),
            ValueShape::Real => value.as_f64().map(FeatureValue::Real).ok_or_else(bad),
            ValueShape::Flag => value.as_bool().map(FeatureValue::Flag).ok_or_else(bad),
            ValueShape::Token => value
                .as_str()
                .map(|s| FeatureValue::Token(s.to_string()))
                .ok_or_else(bad),
            ValueShape::RassWindow => serde_json::from_value::<RassWindow>(value.clone())
                .map(FeatureValue::Rass)
                .map_err(|_| bad()),
        }
    }
}

/// Shortest round-trip rendering, always with a fractional part.
pub fn render_real(v: f64) -> String {
    if v.is_finite() && v.fract() == 0.0 && v.abs() < 1e15 {
        format!("{v:.1}")
    } else {
        format!("{v}")
    }
}

/// Complete 22-key feature vector of one sample.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMap(BTreeMap<FeatureName, FeatureValue>);

impl FeatureMap {
    /// Builds a map with every key present; absent keys become `Missing`.
    pub fn from_partial(mut values: BTreeMap<FeatureName, FeatureValue>) -> Self {
        for name in FeatureName::ALL {
            values.entry(name).or_insert(FeatureValue::Missing);
        }
        FeatureMap(values)
    }

    pub fn get(&self, name: FeatureName) -> &FeatureValue {
        // every key is inserted at construction
        &self.0[&name]
    }

    pub fn set(&mut self, name: FeatureName, value: FeatureValue) {
        self.0.insert(name, value);
    }

    pub fn iter(&self) -> impl Iterator<Item = (FeatureName, &FeatureValue)> {
        self.0.iter().map(|(k, v)| (*k, v))
    }

    pub fn to_json(&self) -> Value {
        let mut obj = serde_json::Map::new();
        for (name, value) in self.iter() {
            obj.insert(name.as_str().to_string(), value.to_json());
        }
        Value::Object(obj)
    }

    /// Parses a JSON object that must carry exactly the 22 keys.
    pub fn from_json(value: &Value) -> Result<Self, String> {
        let obj = value.as_object().ok_or("features must be a JSON object")?;
        let mut out = BTreeMap::new();
        for (key, v) in obj {
            let name: FeatureName = key.parse().map_err(|e: UnknownFeature| e.to_string())?;
            out.insert(name, FeatureValue::from_json(name, v)?);
        }
        if out.len() != FeatureName::ALL.len() {
            let missing: Vec<_> = FeatureName::ALL
                .iter()
                .filter(|n| !out.contains_key(n))
                .map(|n| n.as_str())
                .collect();
            return Err(format!("features object lacks keys: {}", missing.join(", ")));
        }
        Ok(FeatureMap(out))
    }
}

/// A subset of features visible at some point in the staged workflow.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct FeatureView(BTreeMap<FeatureName, FeatureValue>);

impl FeatureView {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn from_map(map: &FeatureMap, names: impl IntoIterator<Item = FeatureName>) -> Self {
        FeatureView(names.into_iter().map(|n| (n, map.get(n).clone())).collect())
    }

    pub fn insert(&mut self, name: FeatureName, value: FeatureValue) {
        self.0.insert(name, value);
    }

    /// `Missing` for keys that are absent from the view as well as for missing values.
    pub fn get(&self, name: FeatureName) -> &FeatureValue {
        self.0.get(&name).unwrap_or(&FeatureValue::Missing)
    }

    pub fn number(&self, name: FeatureName) -> Option<f64> {
        self.get(name).as_f64()
    }

    pub fn contains(&self, name: FeatureName) -> bool {
        self.0.contains_key(&name)
    }

    pub fn iter(&self) -> impl Iterator<Item = (FeatureName, &FeatureValue)> {
        self.0.iter().map(|(k, v)| (*k, v))
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}
