//! Pruning-ratio sweeps written as CSV.
//!
//! Rows are ordered by ratio, then trial, then regime, matching the order
//! of the config lists. Trials run in parallel; each derives its scene from
//! `(master seed, trial index)` so the file does not depend on scheduling.

use std::fs::File;
use std::io::{BufWriter, Read, Write};
use std::path::Path;

use rayon::prelude::*;
use sqap_core::pruner::{PruneConfig, Strategies};

use crate::config::Config;
use crate::error::{HarnessError, Result};
use crate::pipeline::{RunOptions, RunRecord, Trial};
use crate::scene::SceneSpec;

/// Runs every `(ratio, trial, regime)` combination of the sweep section.
pub fn sweep_records(cfg: &Config) -> Result<Vec<RunRecord>> {
    let regimes = cfg.regimes()?;
    let opts: Vec<RunOptions> = regimes
        .iter()
        .map(|&r| RunOptions::from_config(cfg, r, Strategies::Full))
        .collect::<Result<_>>()?;
    let ratios = &cfg.sweep.ratios;
    let base = cfg.prune_config();

    // per trial: rows[ratio][regime]
    let per_trial: Vec<Vec<Vec<RunRecord>>> = (0..cfg.sweep.seeds as u64)
        .into_par_iter()
        .map(|trial| trial_rows(cfg, trial, ratios, &base, &opts))
        .collect();

    let mut rows = Vec::with_capacity(ratios.len() * per_trial.len() * opts.len());
    for ri in 0..ratios.len() {
        for trial in &per_trial {
            rows.extend(trial[ri].iter().cloned());
        }
    }
    Ok(rows)
}

fn trial_rows(
    cfg: &Config,
    trial: u64,
    ratios: &[f64],
    base: &PruneConfig,
    opts: &[RunOptions],
) -> Vec<Vec<RunRecord>> {
    let fail_all = |seed: u64, e: &HarnessError| {
        ratios
            .iter()
            .map(|&ratio| opts.iter().map(|o| RunRecord::failed(ratio, seed, o, e)).collect())
            .collect()
    };
    let spec = match SceneSpec::for_trial(cfg, trial) {
        Ok(s) => s,
        Err(e) => return fail_all(0, &e),
    };
    let prepared = match Trial::prepare(&spec, &opts[0]) {
        Ok(t) => t,
        Err(e) => return fail_all(spec.seed, &e),
    };
    let attention: Vec<_> = opts
        .iter()
        .map(|o| prepared.attention(o).map_err(|e| e.to_string()))
        .collect();
    ratios
        .iter()
        .map(|&ratio| {
            let prune = PruneConfig { ratio, ..*base };
            opts.iter()
                .zip(&attention)
                .map(|(o, att)| match att {
                    Ok(att) => match prepared.evaluate(att, &prune, o) {
                        Ok(out) => out.record,
                        Err(e) => RunRecord::failed(ratio, spec.seed, o, e),
                    },
                    Err(e) => RunRecord::failed(ratio, spec.seed, o, e),
                })
                .collect()
        })
        .collect()
}

pub fn write_csv<W: Write>(records: &[RunRecord], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(RunRecord::HEADER)?;
    for r in records {
        w.write_record(r.to_fields())?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_csv<R: Read>(input: R) -> Result<Vec<RunRecord>> {
    let mut rdr = csv::Reader::from_reader(input);
    let header: Vec<String> = rdr.headers()?.iter().map(str::to_owned).collect();
    if header != RunRecord::HEADER {
        return Err(HarnessError::Config(format!("unexpected CSV header {header:?}")));
    }
    rdr.records()
        .map(|rec| {
            let rec = rec?;
            let fields: Vec<&str> = rec.iter().collect();
            RunRecord::from_fields(&fields).map_err(HarnessError::Config)
        })
        .collect()
}

/// Runs the sweep and writes it to `path`. Returns the number of rows.
pub fn sweep(cfg: &Config, path: &Path) -> Result<usize> {
    let records = sweep_records(cfg)?;
    let file = BufWriter::new(File::create(path)?);
    write_csv(&records, file)?;
    Ok(records.len())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny() -> Config {
        let mut cfg = Config::default();
        cfg.scene.d_model = 32;
        cfg.scene.outlier_channels = vec![(2, 30.0)];
        cfg.sweep.seeds = 3;
        cfg.sweep.ratios = vec![0.3, 0.6];
        cfg
    }

    #[test]
    fn row_count_and_order() {
        let cfg = tiny();
        let rows = sweep_records(&cfg).unwrap();
        assert_eq!(rows.len(), 2 * 3 * 3);
        assert!(rows.iter().all(RunRecord::is_ok));
        assert!(rows[..9].iter().all(|r| r.ratio == 0.3));
        let regimes: Vec<&str> = rows[..3].iter().map(|r| r.regime.as_str()).collect();
        assert_eq!(regimes, ["fp", "naive", "hadamard"]);
        assert_eq!(rows[0].seed, rows[9].seed);
        assert!(rows
            .iter()
            .all(|r| r.final_size == if r.ratio == 0.3 { 179 } else { 102 }));
    }

    #[test]
    fn zero_seeds_gives_header_only() {
        let mut cfg = tiny();
        cfg.sweep.seeds = 0;
        let mut buf = Vec::new();
        write_csv(&sweep_records(&cfg).unwrap(), &mut buf).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap().lines().count(), 1);
    }

    #[test]
    fn malformed_scene_gives_error_rows() {
        let mut cfg = tiny();
        cfg.scene.outlier_channels = vec![(1000, 2.0)];
        let rows = sweep_records(&cfg).unwrap();
        assert_eq!(rows.len(), 18);
        assert!(rows
            .iter()
            .all(|r| r.error.as_deref().unwrap().contains("outlier channel")));
    }

    #[test]
    fn csv_roundtrip_is_byte_stable() {
        let mut rows = sweep_records(&tiny()).unwrap();
        rows.push(RunRecord::failed(
            0.5,
            1,
            &RunOptions::from_config(&tiny(), sqap_core::attention::Regime::QuantNaive, Strategies::Full).unwrap(),
            "line\nbreak, \"quoted\"",
        ));
        let mut first = Vec::new();
        write_csv(&rows, &mut first).unwrap();
        let back = read_csv(first.as_slice()).unwrap();
        let mut second = Vec::new();
        write_csv(&back, &mut second).unwrap();
        assert_eq!(first, second);
    }
}
