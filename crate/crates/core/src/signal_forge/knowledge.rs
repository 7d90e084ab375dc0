//! Knowledge-site records normalized to fixed property schemas.

use std::fmt;

use indexmap::IndexMap;
use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

use super::SignalTuple;

/// Value recorded for every property the source does not provide.
pub const NO_INFO: &str = "No corresponding information";

#[rustfmt::skip]
const ELEMENTS: &[&str] = &[
    "H", "He", "Li", "Be", "B", "C", "N", "O", "F", "Ne", "Na", "Mg", "Al", "Si", "P", "S", "Cl",
    "Ar", "K", "Ca", "Sc", "Ti", "V", "Cr", "Mn", "Fe", "Co", "Ni", "Cu", "Zn", "Ga", "Ge", "As",
    "Se", "Br", "Kr", "Rb", "Sr", "Y", "Zr", "Nb", "Mo", "Tc", "Ru", "Rh", "Pd", "Ag", "Cd", "In",
    "Sn", "Sb", "Te", "I", "Xe", "Cs", "Ba", "La", "Ce", "Pr", "Nd", "Pm", "Sm", "Eu", "Gd", "Tb",
    "Dy", "Ho", "Er", "Tm", "Yb", "Lu", "Hf", "Ta", "W", "Re", "Os", "Ir", "Pt", "Au", "Hg", "Tl",
    "Pb", "Bi", "Po", "At", "Rn", "Fr", "Ra", "Ac", "Th", "Pa", "U", "Np", "Pu", "Am", "Cm", "Bk",
    "Cf", "Es", "Fm", "Md", "No", "Lr", "Rf", "Db", "Sg", "Bh", "Hs", "Mt", "Ds", "Rg", "Cn", "Nh",
    "Fl", "Mc", "Lv", "Ts", "Og",
];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SchemaKind {
    Mineral,
    Earthquake,
    Sediment,
    FossilOntology,
    FossilCalibration,
}

impl SchemaKind {
    pub fn parse(s: &str) -> Result<Self, KnowledgeError> {
        Ok(match s {
            "mineral" => SchemaKind::Mineral,
            "earthquake" => SchemaKind::Earthquake,
            "sediment" => SchemaKind::Sediment,
            "fossil_ontology" => SchemaKind::FossilOntology,
            "fossil_calibration" => SchemaKind::FossilCalibration,
            other => return Err(KnowledgeError::UnknownSchema(other.to_string())),
        })
    }

    pub fn as_str(self) -> &'static str {
        match self {
            SchemaKind::Mineral => "mineral",
            SchemaKind::Earthquake => "earthquake",
            SchemaKind::Sediment => "sediment",
            SchemaKind::FossilOntology => "fossil_ontology",
            SchemaKind::FossilCalibration => "fossil_calibration",
        }
    }

    /// Property keys in output order.
    pub fn properties(self) -> &'static [&'static str] {
        match self {
            SchemaKind::Mineral => &[
                "Mineral",
                "Colour",
                "Lustre",
                "Specific Gravity",
                "Crystal System",
                "Hardness",
                "Name",
                "Chemical Element",
                "Type locality",
                "General Appearance",
                "Place of Conservation",
                "References",
            ],
            SchemaKind::Earthquake => &[
                "Name",
                "Location",
                "Origin Time",
                "Minimum Distance",
                "Azimuthal Gap",
                "Moment",
                "Magnitude",
                "Depth",
                "Percent DC",
                "Messages Issued",
                "Magnitude Estimates",
                "Nearby Cities",
            ],
            SchemaKind::Sediment => &[
                "Lab ID",
                "Submitter",
                "Date submitted",
                "State",
                "Country",
                "Location",
                "Location Precision",
                "Source",
                "Chemical Element",
            ],
            SchemaKind::FossilOntology => &["Lineage", "Age", "Locality", "GPS", "House", "References"],
            SchemaKind::FossilCalibration => &[
                "Name",
                "Lineage",
                "Minimum age",
                "Maximum age",
                "Locality",
                "Geological age",
                "Calibration",
                "Reference",
            ],
        }
    }

    /// Property holding the record's own name, if the schema has one.
    pub fn name_key(self) -> Option<&'static str> {
        match self {
            SchemaKind::Mineral => Some("Mineral"),
            SchemaKind::Earthquake | SchemaKind::FossilCalibration => Some("Name"),
            SchemaKind::Sediment => Some("Lab ID"),
            SchemaKind::FossilOntology => None,
        }
    }

    fn list_keys(self) -> &'static [&'static str] {
        match self {
            SchemaKind::Mineral => &["References", "Chemical Element"],
            SchemaKind::Earthquake => &["Nearby Cities"],
            SchemaKind::Sediment => &["Chemical Element"],
            SchemaKind::FossilOntology => &["References"],
            SchemaKind::FossilCalibration => &[],
        }
    }
}

impl fmt::Display for SchemaKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum KnowledgeError {
    #[error("unknown schema kind {0}")]
    UnknownSchema(String),
    #[error("record is not a JSON object")]
    NotAnObject,
    #[error("{0} record has no name")]
    MissingName(SchemaKind),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum PropertyValue {
    Text(String),
    List(Vec<String>),
}

impl PropertyValue {
    pub fn missing() -> Self {
        PropertyValue::Text(NO_INFO.to_string())
    }

    pub fn is_missing(&self) -> bool {
        matches!(self, PropertyValue::Text(s) if s == NO_INFO)
    }

    /// List items joined with ", ".
    pub fn display(&self) -> String {
        match self {
            PropertyValue::Text(s) => s.clone(),
            PropertyValue::List(v) => v.join(", "),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct KnowledgeRecord {
    pub schema_kind: SchemaKind,
    pub name: String,
    pub entries: IndexMap<String, PropertyValue>,
}

fn scalar_text(v: &Value) -> Option<String> {
    let s = match v {
        Value::String(s) => s.trim().to_string(),
        Value::Number(n) => n.to_string(),
        Value::Bool(b) => b.to_string(),
        _ => return None,
    };
    (!s.is_empty() && s != NO_INFO).then_some(s)
}

fn to_property(v: Option<&Value>, list: bool) -> PropertyValue {
    let Some(v) = v else {
        return PropertyValue::missing();
    };
    if let Value::Array(items) = v {
        let items: Vec<String> = items.iter().filter_map(scalar_text).collect();
        return match (items.len(), list) {
            (0, _) => PropertyValue::missing(),
            (_, true) => PropertyValue::List(items),
            (_, false) => PropertyValue::Text(items.join(", ")),
        };
    }
    match scalar_text(v) {
        Some(s) if list => PropertyValue::List(vec![s]),
        Some(s) => PropertyValue::Text(s),
        None => PropertyValue::missing(),
    }
}

/// Element symbols of a chemical formula in order of first appearance.
/// Two-letter symbols win over one-letter ones; characters that start no
/// valid symbol are ignored.
pub fn formula_elements(formula: &str) -> Vec<String> {
    let chars: Vec<char> = formula.chars().collect();
    let mut out: Vec<String> = Vec::new();
    let mut i = 0;
    while i < chars.len() {
        if !chars[i].is_ascii_uppercase() {
            i += 1;
            continue;
        }
        let two: Option<String> = chars
            .get(i + 1)
            .filter(|c| c.is_ascii_lowercase())
            .map(|c| format!("{}{}", chars[i], c));
        let (sym, len) = match two {
            Some(t) if ELEMENTS.contains(&t.as_str()) => (t, 2),
            _ => (chars[i].to_string(), 1),
        };
        if ELEMENTS.contains(&sym.as_str()) && !out.contains(&sym) {
            out.push(sym);
        }
        i += len;
    }
    out
}

/// Percent value of an analysis entry: numbers are percent, strings may carry
/// `%`, `wt%` or `ppm`. Below-detection values (`<...`) yield `None`.
fn percent(v: &Value) -> Option<f64> {
    match v {
        Value::Number(n) => n.as_f64(),
        Value::String(s) => {
            let s = s.trim();
            if s.starts_with('<') {
                return None;
            }
            if let Some(p) = s.strip_suffix("ppm") {
                return p.trim().parse::<f64>().ok().map(|x| x / 10_000.0);
            }
            let s = s.trim_end_matches('%').trim_end_matches("wt").trim();
            s.parse().ok()
        }
        Value::Object(o) => {
            let value = o.get("value")?.as_f64()?;
            match o.get("unit").and_then(Value::as_str) {
                Some("ppm") => Some(value / 10_000.0),
                _ => Some(value),
            }
        }
        _ => None,
    }
}

/// Elements of analysed species at 1% or more, each species contributing
/// its leading element.
fn major_elements(analysis: &Value) -> Vec<String> {
    let mut out: Vec<String> = Vec::new();
    let Value::Object(species) = analysis else {
        return out;
    };
    for (sp, v) in species {
        if percent(v).is_some_and(|p| p >= 1.0) {
            if let Some(el) = formula_elements(sp).into_iter().next() {
                if !out.contains(&el) {
                    out.push(el);
                }
            }
        }
    }
    out
}

/// Maps a raw snapshot object onto the schema. The record name comes from a
/// top-level `"name"`, else from the schema's name property.
pub fn normalize_knowledge(raw: &Value, kind: SchemaKind) -> Result<KnowledgeRecord, KnowledgeError> {
    let obj = raw.as_object().ok_or(KnowledgeError::NotAnObject)?;
    let name = obj
        .get("name")
        .and_then(scalar_text)
        .or_else(|| kind.name_key().and_then(|k| obj.get(k)).and_then(scalar_text))
        .ok_or(KnowledgeError::MissingName(kind))?;

    let mut entries = IndexMap::new();
    for &key in kind.properties() {
        let list = kind.list_keys().contains(&key);
        let mut value = to_property(obj.get(key), list);
        if value.is_missing() {
            value = derived(obj, kind, key).unwrap_or(value);
        }
        if Some(key) == kind.name_key() && value.is_missing() {
            value = PropertyValue::Text(name.clone());
        }
        entries.insert(key.to_string(), value);
    }
    Ok(KnowledgeRecord {
        schema_kind: kind,
        name,
        entries,
    })
}

fn derived(obj: &serde_json::Map<String, Value>, kind: SchemaKind, key: &str) -> Option<PropertyValue> {
    match (kind, key) {
        (SchemaKind::Mineral, "Chemical Element") => {
            let formula = obj
                .get("Chemical Formula")
                .or_else(|| obj.get("Formula"))
                .and_then(scalar_text)?;
            let els = formula_elements(&formula);
            (!els.is_empty()).then_some(PropertyValue::List(els))
        }
        (SchemaKind::Sediment, "Location") => {
            let lat = obj.get("Original Latitude").and_then(scalar_text)?;
            let lon = obj.get("Original Longitude").and_then(scalar_text)?;
            Some(PropertyValue::Text(format!("{lat}, {lon}")))
        }
        (SchemaKind::Sediment, "Chemical Element") => {
            let els = major_elements(obj.get("Chemical analysis")?);
            (!els.is_empty()).then_some(PropertyValue::List(els))
        }
        _ => None,
    }
}

/// One metaearth tuple per informative property. The name property is the
/// tuple's object and is not repeated as a property.
pub fn record_to_tuples(record: &KnowledgeRecord) -> Vec<SignalTuple> {
    let provenance = format!("{}:{}", record.schema_kind, record.name);
    record
        .entries
        .iter()
        .filter(|(k, v)| Some(k.as_str()) != record.schema_kind.name_key() && !v.is_missing())
        .map(|(k, v)| {
            SignalTuple::new(
                "metaearth",
                [
                    ("key", k.clone()),
                    ("object", record.name.clone()),
                    ("value", v.display()),
                ],
                &provenance,
            )
        })
        .collect()
}
