use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use chrono::{Duration, NaiveDate};

use volforecast::config::RunConfig;
use volforecast::evalharness::{
    fit_model, ingest_stage, run_experiment, FitContext, FittedModel, ModelId, MANIFEST, REPORTS_DIR,
};
use volforecast::marketdata::{assemble_panel, normalize, Panel};
use volforecast::par::Execution;
use volforecast::synth::{synth_daily, write_synth_klines, SynthConfig};

const MODELS: &[&str] = &["har", "ar7", "rfsv", "qrh_coin", "blend", "lstm7ret"];

fn d(s: &str) -> NaiveDate {
    NaiveDate::parse_from_str(s, "%Y-%m-%d").unwrap()
}

fn config() -> RunConfig {
    let mut cfg = RunConfig::default();
    cfg.ranges.train_start = "2020-01-01".into();
    cfg.ranges.train_end = "2021-08-31".into();
    cfg.ranges.test_start = "2021-09-01".into();
    cfg.ranges.test_end = "2021-11-30".into();
    cfg.models.list = MODELS.iter().map(|s| s.to_string()).collect();
    cfg.lstm.epochs = 2;
    cfg.lstm.ensemble_size = 2;
    cfg.evaluate.sweep_baseline = String::new();
    cfg.evaluate.sensitivity_model = "lstm7ret".into();
    cfg.synth = SynthConfig {
        coins: 3,
        days: 700,
        seed: 5,
        ..SynthConfig::default()
    };
    cfg
}

fn panel(cfg: &RunConfig) -> Panel {
    let (daily, _) = synth_daily(&cfg.synth, Execution::Parallel).unwrap();
    let (train, test) = cfg.ranges().unwrap();
    normalize(assemble_panel(&daily, train, test, 100).unwrap().0).0
}

fn fit_all(cfg: &RunConfig, panel: &Panel) -> BTreeMap<String, FittedModel> {
    let ctx = FitContext {
        config: cfg,
        top_coins: None,
        exec: Execution::Parallel,
    };
    let mut done = BTreeMap::new();
    for name in MODELS {
        let id: ModelId = name.parse().unwrap();
        let m = fit_model(id, panel, &ctx, &done).unwrap();
        done.insert(name.to_string(), m);
    }
    done
}

#[test]
fn forecasts_use_only_earlier_rows_and_fits_only_training_rows() {
    let cfg = config();
    let p = panel(&cfg);
    let fitted = fit_all(&cfg, &p);

    // Scrambling every test row must leave the fitted models untouched.
    let mut scrambled = p.clone();
    for c in &mut scrambled.coins {
        for obs in c.days.iter_mut().filter(|o| p.test.contains(o.date)) {
            obs.sigma *= 3.0;
            obs.ret = -obs.ret + 0.01;
        }
    }
    assert_eq!(fit_all(&cfg, &scrambled), fitted);

    let mut checked = 0;
    for (name, model) in &fitted {
        for c in &p.coins {
            for obs in c.rows_in(&p.test).step_by(7) {
                let full = model.forecast_at(c, obs.date);
                let past = model.forecast_at(&c.truncated_before(obs.date), obs.date);
                assert_eq!(
                    full.map(f64::to_bits),
                    past.map(f64::to_bits),
                    "{name} {} {}",
                    c.coin,
                    obs.date
                );
                checked += full.is_some() as usize;
            }
        }
    }
    assert!(checked > 50, "only {checked} forecasts audited");
}

#[test]
fn forecasts_never_cross_a_gap() {
    let cfg = config();
    let mut p = panel(&cfg);
    let gap = d("2021-09-10");
    for c in &mut p.coins {
        c.days.retain(|o| o.date != gap);
    }
    let fitted = fit_all(&cfg, &p);
    let after = gap + Duration::days(1);
    for (name, m) in &fitted {
        for c in &p.coins {
            assert!(
                m.forecast_at(c, after).is_none(),
                "{name} forecast across the gap for {}",
                c.coin
            );
        }
    }
}

fn read_dir_bytes(dir: &Path) -> BTreeMap<String, Vec<u8>> {
    let mut out = BTreeMap::new();
    for e in fs::read_dir(dir).unwrap() {
        let p = e.unwrap().path();
        out.insert(
            p.file_name().unwrap().to_string_lossy().into_owned(),
            fs::read(&p).unwrap(),
        );
    }
    out
}

#[test]
fn experiment_is_reproducible_and_complete() {
    let tmp = tempfile::tempdir().unwrap();
    let mut cfg = config();
    cfg.data.klines_dir = tmp.path().join("klines");
    write_synth_klines(&cfg.synth, &cfg.data.klines_dir, Execution::Parallel).unwrap();

    let mut reports = Vec::new();
    for run in ["a", "b"] {
        cfg.data.out_dir = tmp.path().join(run);
        ingest_stage(&cfg).unwrap();
        let out = run_experiment(&cfg).unwrap();
        for m in MODELS {
            for c in 0..3 {
                let coin = SynthConfig::coin_name(c);
                assert!(out.report.ratio(m, &coin).is_some(), "{m}/{coin} missing");
            }
        }
        assert!(out.sweep.is_none());
        assert!(cfg.data.out_dir.join(MANIFEST).is_file());
        reports.push(read_dir_bytes(&cfg.data.out_dir.join(REPORTS_DIR)));
    }
    assert_eq!(reports[0], reports[1]);
}
