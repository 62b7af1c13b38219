//! Train the shared-trunk multitask network on phantom features with each
//! loss mode and print validation loss and AUC per task.

use lungmtl::mtl::{train, Dataset, LossMode, TrainConfig};
use lungmtl::phantom::{generate_planned, plan_cohort, stratified_split, PhantomSpec, Split};
use lungmtl::radiomics::{extract_all, feature_names, TextureConfig};
use lungmtl::table::FeatureTable;
use rayon::prelude::*;

fn main() -> lungmtl::Result<()> {
    let n: usize = std::env::args().nth(1).and_then(|a| a.parse().ok()).unwrap_or(150);
    let spec = PhantomSpec::default();
    let plans = plan_cohort(n, [0.4, 0.4, 0.2], 11)?;
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
    let nat: Vec<bool> = table.labels.iter().map(|l| l.covid_nat).collect();
    let split = stratified_split(&nat, 0.7, 11)?;
    let pick = |s: Split| (0..n).filter(|&i| split[i] == s).collect::<Vec<_>>();
    let data = Dataset::from_tables(&table.subset(&pick(Split::Train)), &table.subset(&pick(Split::Test)))?;
    println!("mode,epochs_run,val_loss_ct,val_loss_nat,val_loss_sev,auc_ct,auc_nat,auc_sev");
    for mode in LossMode::ALL {
        let cfg = TrainConfig {
            loss_mode: mode,
            seed: 1,
            ..TrainConfig::default()
        };
        let (_, h) = train(&data, &cfg)?;
        match h.last() {
            Some(r) => println!(
                "{mode},{},{:.4},{:.4},{:.4},{:.3},{:.3},{:.3}{}",
                h.epochs.len(),
                r.val_loss[0],
                r.val_loss[1],
                r.val_loss[2],
                r.val_metrics[0].auc,
                r.val_metrics[1].auc,
                r.val_metrics[2].auc,
                if h.is_diverged() { " (diverged)" } else { "" }
            ),
            None => println!("{mode},0,diverged in the first epoch"),
        }
    }
    Ok(())
}
