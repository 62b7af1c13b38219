//! Welch's ANOVA on a phantom cohort's features: features ranked by severity
//! p-value, and the same table after shuffling the labels.

use lungmtl::analysis::{significance_table, welch_anova, Grouping};
use lungmtl::phantom::{generate_planned, plan_cohort, PhantomSpec};
use lungmtl::radiomics::{extract_all, feature_names, TextureConfig};
use lungmtl::seed::stream;
use lungmtl::table::FeatureTable;
use rand::seq::SliceRandom;
use rayon::prelude::*;

fn main() -> lungmtl::Result<()> {
    let w = welch_anova(&[vec![1.0, 2.0, 3.0], vec![2.0, 3.0, 4.0], vec![3.0, 4.0, 5.0]])?;
    println!("groups 1-3, 2-4, 3-5: F = {:.4}, df = ({}, {:.3}), p = {:.5}", w.statistic, w.df1, w.df2, w.p_value);

    let n: usize = std::env::args().nth(1).and_then(|a| a.parse().ok()).unwrap_or(90);
    let spec = PhantomSpec::default();
    let plans = plan_cohort(n, [0.4, 0.4, 0.2], 3)?;
    let rows = plans
        .par_iter()
        .map(|p| {
            let c = generate_planned(&spec, p)?;
            Ok((extract_all(&p.case_id, &c.volume, &c.truth, &TextureConfig::default())?.values, c.labels))
        })
        .collect::<lungmtl::Result<Vec<_>>>()?;
    let mut table = FeatureTable::new(feature_names());
    for (p, (v, l)) in plans.iter().zip(rows) {
        table.push(p.case_id.as_str(), v, l)?;
    }
    let report = significance_table(&table, None)?;
    println!("\n{n} cases, top severity features:");
    for r in report.ranked(Grouping::Severity).iter().take(8) {
        let s = r.result(Grouping::Severity).unwrap();
        println!("  {:<40} F = {:>9.2}  p = {:.2e}", r.feature, s.statistic, s.p_value);
    }
    for g in Grouping::ALL {
        println!("p < 0.001 for {}: {:.1}%", g.key(), 100.0 * report.significant_fraction(g));
    }
    let mut shuffled = table.clone();
    shuffled.labels.shuffle(&mut stream(3, "shuffle"));
    let null = significance_table(&shuffled, None)?;
    println!(
        "after shuffling labels, p < 0.001 for severity: {:.1}%",
        100.0 * null.significant_fraction(Grouping::Severity)
    );
    Ok(())
}
