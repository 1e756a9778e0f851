//! Shared pieces of the JSON experiment configs.

use std::path::Path;

use anyhow::{bail, Context, Result};
use flashread_core::channel::VoltageModel;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

/// The two reference pages; means are shared, the worn page is noisier.
pub const FRESH: (f64, f64, f64, f64) = (1.0, 0.12, 2.0, 0.22);
pub const WORN: (f64, f64, f64, f64) = (1.0, 0.18, 2.0, 0.32);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NamedPage {
    Fresh,
    Worn,
}

/// Either `"fresh"`, `"worn"` or explicit gaussian level parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum PageSpec {
    Named(NamedPage),
    Custom { mu1: f64, sigma1: f64, mu2: f64, sigma2: f64 },
}

impl Default for PageSpec {
    fn default() -> Self {
        PageSpec::Named(NamedPage::Fresh)
    }
}

impl PageSpec {
    pub fn params(&self) -> (f64, f64, f64, f64) {
        match *self {
            PageSpec::Named(NamedPage::Fresh) => FRESH,
            PageSpec::Named(NamedPage::Worn) => WORN,
            PageSpec::Custom { mu1, sigma1, mu2, sigma2 } => (mu1, sigma1, mu2, sigma2),
        }
    }

    pub fn model(&self) -> Result<VoltageModel> {
        let (m1, s1, m2, s2) = self.params();
        Ok(VoltageModel::slc(m1, s1, m2, s2)?)
    }

    pub fn label(&self) -> String {
        match self {
            PageSpec::Named(NamedPage::Fresh) => "fresh".into(),
            PageSpec::Named(NamedPage::Worn) => "worn".into(),
            PageSpec::Custom { .. } => "custom".into(),
        }
    }
}

/// Reads a JSON config, or returns the default when no path is given.
pub fn load<T: DeserializeOwned + Default>(path: Option<&Path>) -> Result<T> {
    match path {
        None => Ok(T::default()),
        Some(p) => {
            let text = std::fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?;
            serde_json::from_str(&text).with_context(|| format!("parsing {}", p.display()))
        }
    }
}

pub fn check_trials(trials: usize) -> Result<()> {
    if trials == 0 {
        bail!("trials must be at least 1");
    }
    Ok(())
}

pub fn check_sorted(thresholds: &[f64]) -> Result<()> {
    if thresholds.is_empty() || thresholds.windows(2).any(|w| !(w[0] < w[1])) {
        bail!("thresholds must be nonempty and strictly increasing: {thresholds:?}");
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn page_specs_parse() {
        let p: PageSpec = serde_json::from_str("\"worn\"").unwrap();
        assert_eq!(p.params(), WORN);
        let p: PageSpec = serde_json::from_str(r#"{"mu1":1,"sigma1":0.1,"mu2":2,"sigma2":0.2}"#).unwrap();
        assert_eq!(p.params(), (1.0, 0.1, 2.0, 0.2));
        assert!(serde_json::from_str::<PageSpec>("\"old\"").is_err());
    }
}
