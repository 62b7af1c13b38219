//! The fixed, published feature manifest and the alias map for reported names.

use std::sync::OnceLock;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

use super::firstorder::FIRST_ORDER_FEATURES;
use super::glcm::GLCM_FEATURES;
use super::glrlm::GLRLM_FEATURES;
use super::glszm::GLSZM_FEATURES;
use super::wavelet::SubBand;

pub const MANIFEST_LEN: usize = 375;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FeatureSpec {
    pub name: String,
    pub family: String,
    /// `None` for the original volume.
    pub subband: Option<String>,
    /// Family-qualified formula identifier.
    pub formula: String,
}

/// GLCM features kept for a sub-band.
pub fn subband_glcm(sb: SubBand) -> Vec<&'static str> {
    let keep_sum_average = matches!(sb.name().as_str(), "LLL" | "LLH" | "LHL");
    GLCM_FEATURES
        .iter()
        .copied()
        .filter(|&f| keep_sum_average || f != "SumAverage")
        .collect()
}

/// GLRLM features kept for a sub-band.
pub fn subband_glrlm(sb: SubBand) -> Vec<&'static str> {
    let full = !sb.high.iter().any(|&h| h);
    GLRLM_FEATURES
        .iter()
        .copied()
        .filter(|&f| full || (f != "GrayLevelNonUniformity" && f != "RunLengthNonUniformity"))
        .collect()
}

fn spec(name: String, family: &str, subband: Option<String>, feature: &str) -> FeatureSpec {
    FeatureSpec {
        name,
        family: family.to_string(),
        subband,
        formula: format!("{family}.{feature}"),
    }
}

fn build() -> Vec<FeatureSpec> {
    let mut out = Vec::with_capacity(MANIFEST_LEN);
    let original: [(&str, &[&str]); 4] = [
        ("firstorder", &FIRST_ORDER_FEATURES),
        ("glcm", &GLCM_FEATURES),
        ("glrlm", &GLRLM_FEATURES),
        ("glszm", &GLSZM_FEATURES),
    ];
    for (family, names) in original {
        for f in names {
            out.push(spec(format!("{family}_{f}"), family, None, f));
        }
    }
    for sb in SubBand::all() {
        let band = sb.name();
        for f in subband_glcm(sb) {
            out.push(spec(format!("{band}_glcm_{f}"), "glcm", Some(band.clone()), f));
        }
        for f in subband_glrlm(sb) {
            out.push(spec(format!("{band}_glrlm_{f}"), "glrlm", Some(band.clone()), f));
        }
    }
    out
}

pub fn manifest() -> &'static [FeatureSpec] {
    static M: OnceLock<Vec<FeatureSpec>> = OnceLock::new();
    M.get_or_init(build)
}

pub fn feature_names() -> Vec<String> {
    manifest().iter().map(|s| s.name.clone()).collect()
}

/// Startup check: exact length and unique names.
pub fn check_manifest() -> Result<()> {
    let m = manifest();
    if m.len() != MANIFEST_LEN {
        return Err(Error::Config(format!("feature manifest has {} entries, expected {MANIFEST_LEN}", m.len())));
    }
    let mut names: Vec<&str> = m.iter().map(|s| s.name.as_str()).collect();
    names.sort_unstable();
    if let Some(w) = names.windows(2).find(|w| w[0] == w[1]) {
        return Err(Error::Config(format!("duplicate feature name {}", w[0])));
    }
    Ok(())
}

pub fn manifest_json() -> String {
    serde_json::to_string_pretty(manifest()).expect("manifest serializes")
}

/// Reference feature list in its legacy spelling (`glm`, `glrmlm`, starred shorthands, bare names).
pub const REPORTED_FEATURES: [&str; 24] = [
    "HLL_glm_ClusterProminence",
    "LHL_glm_Idmn",
    "Maximum",
    "Energy",
    "LLL_glm_Imc1",
    "HLL_glm_Correlation",
    "LLH_glm_Correlation",
    "LHH_glm_ClusterShade",
    "*LongRunLowGrayLevelEmphasis",
    "HLH_glm_ClusterShade",
    "Idn",
    "LLH_glm_ClusterShade",
    "LargeAreaHighGrayLevelEmphasis",
    "*ShortRunHighGrayLevelEmphasis",
    "Idmn",
    "GrayLevelVariance",
    "HHH_glm_ClusterShade",
    "LLL_glm_Imc2",
    "LLL_glrmlm_RunEntropy",
    "LLH_glm_ClusterProminence",
    "*DifferenceVariance",
    "Imc2",
    "LLL_glm_Correlation",
    "Imc1",
];

/// Maps a reported name onto its manifest name. Handles the `glm`/`glrmlm`
/// prefixes, the starred footnote names and bare original-volume names.
pub fn resolve_alias(name: &str) -> Option<String> {
    let starred = match name {
        "*LongRunLowGrayLevelEmphasis" => Some("HLH_glrlm_LongRunLowGrayLevelEmphasis"),
        "*ShortRunHighGrayLevelEmphasis" => Some("LHH_glrlm_ShortRunHighGrayLevelEmphasis"),
        "*DifferenceVariance" => Some("HLL_glcm_DifferenceVariance"),
        _ => None,
    };
    let candidate = if let Some(s) = starred {
        s.to_string()
    } else if name.contains('_') {
        name.replacen("_glrmlm_", "_glrlm_", 1).replacen("_glm_", "_glcm_", 1)
    } else {
        let family = match name {
            "Maximum" | "Energy" => "firstorder",
            "Idn" | "Idmn" | "Imc1" | "Imc2" => "glcm",
            "GrayLevelVariance" => "glrlm",
            "LargeAreaHighGrayLevelEmphasis" => "glszm",
            _ => return None,
        };
        format!("{family}_{name}")
    };
    manifest().iter().any(|s| s.name == candidate).then_some(candidate)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn manifest_is_exact() {
        check_manifest().unwrap();
        let m = manifest();
        assert_eq!(m.iter().filter(|s| s.subband.is_none()).count(), 74);
        let per_band = |b: &str| m.iter().filter(|s| s.subband.as_deref() == Some(b)).count();
        assert_eq!(per_band("LLL"), 40);
        assert_eq!(per_band("LHL"), 38);
        assert_eq!(per_band("HHH"), 37);
        assert_eq!(m[0].name, "firstorder_Energy");
    }

    #[test]
    fn reported_names_resolve() {
        for name in REPORTED_FEATURES {
            assert!(resolve_alias(name).is_some(), "{name}");
        }
        assert_eq!(resolve_alias("HLL_glm_ClusterProminence").unwrap(), "HLL_glcm_ClusterProminence");
        assert_eq!(resolve_alias("LLL_glrmlm_RunEntropy").unwrap(), "LLL_glrlm_RunEntropy");
        assert_eq!(resolve_alias("Imc1").unwrap(), "glcm_Imc1");
        assert!(resolve_alias("NotAFeature").is_none());
    }

    #[test]
    fn json_round_trip() {
        let back: Vec<FeatureSpec> = serde_json::from_str(&manifest_json()).unwrap();
        assert_eq!(back, manifest());
    }
}
