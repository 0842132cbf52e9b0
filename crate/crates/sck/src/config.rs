//! Analysis configuration file: maps logical roles to column names and
//! carries dataset-level flags.
//!
//! ```toml
//! [columns]
//! z = "eligible"
//! d = "enrolled"
//! y = "employed"
//! covariates = ["age", "income"]
//! stratum = "site"        # optional
//! cluster = "household"   # optional
//!
//! [options]
//! y_binary = true         # default
//! tau_known = 0.5         # optional design assignment probability
//! ```

use crate::data::ColumnMapping;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ColumnsSection {
    pub z: String,
    pub d: String,
    pub y: String,
    #[serde(default)]
    pub covariates: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub stratum: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cluster: Option<String>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct OptionsSection {
    #[serde(default = "default_true")]
    pub y_binary: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tau_known: Option<f64>,
}

impl Default for OptionsSection {
    fn default() -> Self {
        OptionsSection { y_binary: true, tau_known: None }
    }
}

fn default_true() -> bool {
    true
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AnalysisConfig {
    pub columns: ColumnsSection,
    #[serde(default)]
    pub options: OptionsSection,
}

impl AnalysisConfig {
    pub fn parse(text: &str) -> Result<Self, toml::de::Error> {
        toml::from_str(text)
    }

    /// Fallback used when no configuration file is given: columns named
    /// literally `z`, `d`, `y`, no covariates.
    pub fn default_names() -> Self {
        AnalysisConfig {
            columns: ColumnsSection {
                z: "z".into(),
                d: "d".into(),
                y: "y".into(),
                covariates: Vec::new(),
                stratum: None,
                cluster: None,
            },
            options: OptionsSection::default(),
        }
    }

    pub fn mapping(&self) -> ColumnMapping {
        ColumnMapping {
            z: self.columns.z.clone(),
            d: self.columns.d.clone(),
            y: self.columns.y.clone(),
            covariates: self.columns.covariates.clone(),
            stratum: self.columns.stratum.clone(),
            cluster: self.columns.cluster.clone(),
            y_binary: self.options.y_binary,
            tau_known: self.options.tau_known,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_a_full_config() {
        let text = r#"
            [columns]
            z = "eligible"
            d = "enrolled"
            y = "employed"
            covariates = ["age"]
            stratum = "site"

            [options]
            y_binary = false
            tau_known = 0.4
        "#;
        let cfg = AnalysisConfig::parse(text).unwrap();
        assert_eq!(cfg.columns.z, "eligible");
        assert_eq!(cfg.columns.stratum.as_deref(), Some("site"));
        assert!(!cfg.options.y_binary);
        assert_eq!(cfg.options.tau_known, Some(0.4));
        let mapping = cfg.mapping();
        assert_eq!(mapping.covariates, vec!["age".to_string()]);
    }

    #[test]
    fn options_default_to_binary_outcome() {
        let text = "[columns]\nz = \"z\"\nd = \"d\"\ny = \"y\"\n";
        let cfg = AnalysisConfig::parse(text).unwrap();
        assert!(cfg.options.y_binary);
        assert!(cfg.options.tau_known.is_none());
    }
}
