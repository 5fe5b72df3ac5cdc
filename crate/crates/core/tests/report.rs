use std::collections::BTreeMap;
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use replaylab::config::StudyKind;
use replaylab::envs::EnvSpec;
use replaylab::experiments::stats::percentile_summary;
use replaylab::experiments::{Comparison, ImprovementStats, RunResult, ScoreTable, StudyOutput, VariantSpec};
use replaylab::report::{
    cell_annotation, emit_report, read_csv, SummaryRow, BARS_SVG, HEATMAP_SVG, SUMMARY_CSV,
};
use replaylab::Error;

fn run(variant: &str, env: &str, capacity: u64, seed: u64, score: f64) -> RunResult {
    RunResult {
        variant: variant.into(),
        variant_spec: VariantSpec::dqn(),
        env: env.into(),
        env_spec: EnvSpec::default(),
        capacity,
        oldest_age: capacity as f64 / 4.0,
        ratio: 0.25,
        seed,
        run_seed: seed,
        offline: false,
        returns: vec![score / 2.0, score],
        final_score: Some(score),
        env_steps: 100,
        gradient_steps: 25,
        diverged: None,
    }
}

fn scores(offset: f64, seeds: usize) -> ScoreTable {
    ["a", "b", "c", "d", "e"]
        .iter()
        .enumerate()
        .map(|(i, env)| {
            let xs = (0..seeds)
                .map(|s| 1.0 + i as f64 * 0.3 + offset * (s as f64 + 1.0))
                .collect();
            (env.to_string(), xs)
        })
        .collect()
}

fn comparison(study: &str, variant: &str, capacity: u64, age: f64, shift: f64, skipped: bool) -> Comparison {
    let mut rng = ChaCha8Rng::seed_from_u64(capacity ^ age as u64);
    let stats = (!skipped)
        .then(|| ImprovementStats::compute(&scores(0.0, 3), &scores(shift, 3), 200, &mut rng).unwrap());
    Comparison {
        study: study.into(),
        group: "capacity".into(),
        variant: variant.into(),
        base_variant: variant.into(),
        capacity,
        base_capacity: 1000,
        oldest_age: age,
        ratio: age / capacity as f64,
        skipped,
        stats,
        distribution: Vec::new(),
    }
}

fn grid_output() -> StudyOutput {
    let mut comparisons = Vec::new();
    for (i, capacity) in [1000u64, 5000, 25000].into_iter().enumerate() {
        for (j, age) in [250.0, 1250.0].into_iter().enumerate() {
            let skipped = i == 0 && j == 0;
            let shift = 0.05 * i as f64 - 0.02 * j as f64;
            comparisons.push(comparison("grid", "dqn", capacity, age, shift, skipped));
        }
    }
    StudyOutput {
        study: StudyKind::Grid,
        runs: vec![run("dqn", "a", 1000, 0, 1.0), run("dqn", "a", 5000, 0, 1.5)],
        comparisons,
    }
}

fn additive_output() -> StudyOutput {
    let comparisons = ["dqn+nstep", "dqn+per", "dqn+adam", "dqn+c51"]
        .iter()
        .enumerate()
        .map(|(k, v)| comparison("additive", v, 10_000, 2500.0, 0.1 * k as f64 - 0.1, false))
        .collect();
    StudyOutput {
        study: StudyKind::Additive,
        runs: vec![run("dqn+nstep", "a", 1000, 0, 1.0)],
        comparisons,
    }
}

/// Every `(attribute, value)` pair on elements carrying `class="{class}"`.
fn elements(svg: &str, class: &str) -> Vec<BTreeMap<String, String>> {
    svg.lines()
        .filter(|l| l.contains(&format!("class=\"{class}\"")))
        .map(|l| {
            let mut attrs = BTreeMap::new();
            for part in l.split("\" ") {
                if let Some((k, v)) = part.rsplit_once("=\"") {
                    let key = k.rsplit(' ').next().unwrap().to_string();
                    attrs.insert(key, v.trim_end_matches("\"/>").trim_end_matches('"').to_string());
                }
            }
            if let Some(text) = l.split('>').nth(1) {
                attrs.insert("text".into(), text.trim_end_matches("</text").to_string());
            }
            attrs
        })
        .collect()
}

fn summary(dir: &Path) -> Vec<SummaryRow> {
    read_csv(&dir.join(SUMMARY_CSV)).unwrap()
}

#[test]
fn heatmap_annotations_equal_csv_medians() {
    let dir = tempfile::tempdir().unwrap();
    emit_report(&grid_output(), dir.path()).unwrap();
    let rows = summary(dir.path());
    let svg = std::fs::read_to_string(dir.path().join(HEATMAP_SVG)).unwrap();
    let cells: Vec<String> = elements(&svg, "cell")
        .into_iter()
        .map(|a| a["text"].clone())
        .collect();
    assert_eq!(cells.len(), rows.len());
    for (cell, row) in cells.iter().zip(&rows) {
        assert_eq!(cell, &cell_annotation(row));
        match row.median {
            Some(m) => assert_eq!(cell, &format!("{m:.1}%")),
            None => assert_eq!(cell, "skipped"),
        }
    }
    assert!(cells.contains(&"skipped".to_string()));
}

#[test]
fn bars_match_percentile_summary() {
    let out = additive_output();
    let dir = tempfile::tempdir().unwrap();
    emit_report(&out, dir.path()).unwrap();
    let svg = std::fs::read_to_string(dir.path().join(BARS_SVG)).unwrap();
    let bars = elements(&svg, "bar");
    let whiskers = elements(&svg, "whisker");
    assert_eq!(bars.len(), 4);
    assert_eq!(whiskers.len(), 4);
    for ((c, bar), whisker) in out.comparisons.iter().zip(&bars).zip(&whiskers) {
        let per_env: Vec<f64> = c.stats.as_ref().unwrap().per_env.values().copied().collect();
        let (p25, p50, p75) = percentile_summary(&per_env).unwrap();
        assert_eq!(bar["data-median"].parse::<f64>().unwrap(), p50);
        assert_eq!(whisker["data-p25"].parse::<f64>().unwrap(), p25);
        assert_eq!(whisker["data-p75"].parse::<f64>().unwrap(), p75);
    }
}

#[test]
fn identical_inputs_give_identical_bytes() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let out = grid_output();
    let files = emit_report(&out, a.path()).unwrap();
    emit_report(&out, b.path()).unwrap();
    assert!(files.len() >= 6);
    for f in files {
        let name = f.file_name().unwrap();
        assert_eq!(
            std::fs::read(&f).unwrap(),
            std::fs::read(b.path().join(name)).unwrap(),
            "{name:?}"
        );
    }
}

#[test]
fn unwritable_directory_is_an_io_error() {
    let dir = tempfile::tempdir().unwrap();
    let file = dir.path().join("plain-file");
    std::fs::write(&file, "x").unwrap();
    let err = emit_report(&grid_output(), &file.join("out")).unwrap_err();
    assert!(matches!(err, Error::Io { .. }), "{err:?}");
}

#[test]
fn empty_results_are_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let out = StudyOutput {
        study: StudyKind::Train,
        runs: Vec::new(),
        comparisons: Vec::new(),
    };
    assert!(emit_report(&out, dir.path()).is_err());
}
