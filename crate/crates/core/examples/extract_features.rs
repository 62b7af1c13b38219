//! The 375-feature texture vector of one phantom, with a few of the
//! GGO-sensitive features compared across severity classes.

use lungmtl::phantom::{generate_for_class, PhantomSpec};
use lungmtl::radiomics::{extract_all, TextureConfig, MANIFEST_LEN};
use lungmtl::seed::stream;
use lungmtl::table::Severity;
use std::time::Instant;

fn main() -> lungmtl::Result<()> {
    let spec = PhantomSpec::default();
    let cfg = TextureConfig::default();
    let shown = [
        "firstorder_Mean",
        "firstorder_90Percentile",
        "glrlm_GrayLevelVariance",
        "glcm_JointEntropy",
        "HLL_glcm_ClusterProminence",
    ];
    println!("{MANIFEST_LEN} features per case");
    println!("class,{},undefined,ms", shown.join(","));
    for (i, class) in Severity::ALL.into_iter().enumerate() {
        let mut rng = stream(i as u64, "extract-example");
        let case = generate_for_class(&spec, class, &mut rng)?;
        let t = Instant::now();
        let fv = extract_all(&format!("{class:?}"), &case.volume, &case.truth, &cfg)?;
        let ms = t.elapsed().as_millis();
        let vals: Vec<String> = shown.iter().map(|n| format!("{:.4}", fv.get(n).unwrap_or(f64::NAN))).collect();
        println!("{class:?},{},{},{ms}", vals.join(","), fv.undefined().len());
    }
    Ok(())
}
