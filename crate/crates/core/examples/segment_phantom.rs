//! Classical threshold masks versus snake-refined masks on phantoms whose GGO
//! blobs sit on the lung surface, where thresholding cuts them away.

use lungmtl::metrics::confusion;
use lungmtl::phantom::{generate_case, PhantomSpec};
use lungmtl::seed::stream;
use lungmtl::seg::{classical_lung_mask, refine_mask, RefineConfig};
use rand::Rng;

fn main() -> lungmtl::Result<()> {
    let n: u64 = std::env::args().nth(1).and_then(|a| a.parse().ok()).unwrap_or(6);
    let spec = PhantomSpec {
        edge_adjacent: true,
        ..PhantomSpec::default()
    };
    let cfg = RefineConfig::default();
    println!("case,blobs,dice_classical,dice_refined,ggo_recovery,warnings");
    for i in 0..n {
        let mut rng = stream(i, "segment-example");
        let blobs = rng.random_range(1..=8);
        let case = generate_case(&spec, blobs, &mut rng)?;
        let classical = classical_lung_mask(&case.volume)?.mask;
        let (refined, report) = refine_mask(&case.volume, &classical, &cfg)?;
        let before = confusion(&classical, &case.truth)?.dice();
        let after = confusion(&refined, &case.truth)?.dice();
        let ggo = confusion(&refined, &case.ggo)?;
        let recovery = ggo.tp as f64 / (ggo.tp + ggo.fn_).max(1) as f64;
        println!("{i},{blobs},{before:.4},{after:.4},{recovery:.3},{}", report.warnings.len());
    }
    Ok(())
}
