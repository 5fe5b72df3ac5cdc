//! Result files and static SVG charts.
//!
//! Charts are drawn only from the emitted CSV files, so every plotted number
//! can be traced to a row of raw output.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::experiments::{Comparison, RunResult, StudyOutput};

pub const RESULTS_JSONL: &str = "results.jsonl";
pub const RESULTS_CSV: &str = "results.csv";
pub const SUMMARY_CSV: &str = "summary.csv";
pub const IMPROVEMENTS_CSV: &str = "improvements.csv";
pub const CURVES_CSV: &str = "curves.csv";
pub const HEATMAP_SVG: &str = "heatmap.svg";
pub const BARS_SVG: &str = "bars.svg";
pub const CURVES_SVG: &str = "curves.svg";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ResultRow {
    pub study: String,
    pub variant: String,
    pub env: String,
    pub capacity: u64,
    pub oldest_age: f64,
    pub ratio: f64,
    pub seed: u64,
    pub final_score: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub study: String,
    pub group: String,
    pub variant: String,
    pub base_variant: String,
    pub capacity: u64,
    pub base_capacity: u64,
    pub oldest_age: f64,
    pub ratio: f64,
    pub skipped: bool,
    pub envs: usize,
    pub excluded: usize,
    pub median: Option<f64>,
    pub p25: Option<f64>,
    pub p75: Option<f64>,
    pub bootstrap_mean: Option<f64>,
    pub bootstrap_std: Option<f64>,
    pub ci_low: Option<f64>,
    pub ci_high: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ImprovementRow {
    pub study: String,
    pub group: String,
    pub variant: String,
    pub env: String,
    pub improvement: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CurveRow {
    pub study: String,
    pub variant: String,
    pub env: String,
    pub capacity: u64,
    pub seed: u64,
    pub iteration: usize,
    pub value: f64,
}

impl SummaryRow {
    pub fn from_comparison(c: &Comparison) -> Self {
        let s = c.stats.as_ref();
        Self {
            study: c.study.clone(),
            group: c.group.clone(),
            variant: c.variant.clone(),
            base_variant: c.base_variant.clone(),
            capacity: c.capacity,
            base_capacity: c.base_capacity,
            oldest_age: c.oldest_age,
            ratio: c.ratio,
            skipped: c.skipped,
            envs: s.map_or(0, |s| s.per_env.len()),
            excluded: s.map_or(0, |s| s.excluded.len()),
            median: s.map(|s| s.median),
            p25: s.map(|s| s.p25),
            p75: s.map(|s| s.p75),
            bootstrap_mean: s.map(|s| s.bootstrap_mean),
            bootstrap_std: s.map(|s| s.bootstrap_std),
            ci_low: s.map(|s| s.ci_low),
            ci_high: s.map(|s| s.ci_high),
        }
    }
}

fn write_csv<T: Serialize>(path: &Path, rows: &[T]) -> Result<()> {
    let file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = csv::Writer::from_writer(file);
    for r in rows {
        w.serialize(r)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn read_csv<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<Vec<T>> {
    let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    csv::Reader::from_reader(file)
        .deserialize()
        .map(|row| row.map_err(Error::from))
        .collect()
}

fn result_rows(study: &str, runs: &[RunResult]) -> Vec<ResultRow> {
    runs.iter()
        .map(|r| ResultRow {
            study: study.into(),
            variant: r.variant.clone(),
            env: r.env.clone(),
            capacity: r.capacity,
            oldest_age: r.oldest_age,
            ratio: r.ratio,
            seed: r.seed,
            final_score: r.final_score,
        })
        .collect()
}

fn offline_tag(r: &RunResult) -> String {
    if r.offline {
        format!("{} (offline)", r.variant)
    } else {
        r.variant.clone()
    }
}

/// Writes the raw and aggregate files for one study and returns their paths.
pub fn write_results(out: &StudyOutput, dir: &Path) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let study = out.study.as_str();
    let mut written = Vec::new();

    let path = dir.join(RESULTS_JSONL);
    let mut text = String::new();
    for r in &out.runs {
        let mut v = serde_json::to_value(r)?;
        v.as_object_mut()
            .expect("run result is an object")
            .insert("study".into(), study.into());
        text.push_str(&serde_json::to_string(&v)?);
        text.push('\n');
    }
    fs::write(&path, text).map_err(|e| Error::io(&path, e))?;
    written.push(path);

    let mut rows = result_rows(study, &out.runs);
    for (row, r) in rows.iter_mut().zip(&out.runs) {
        row.variant = offline_tag(r);
    }
    let path = dir.join(RESULTS_CSV);
    write_csv(&path, &rows)?;
    written.push(path);

    let path = dir.join(CURVES_CSV);
    let curves: Vec<CurveRow> = out
        .runs
        .iter()
        .flat_map(|r| {
            r.returns.iter().enumerate().map(move |(i, &v)| CurveRow {
                study: study.into(),
                variant: offline_tag(r),
                env: r.env.clone(),
                capacity: r.capacity,
                seed: r.seed,
                iteration: i,
                value: v,
            })
        })
        .collect();
    write_csv(&path, &curves)?;
    written.push(path);

    if !out.comparisons.is_empty() {
        let path = dir.join(SUMMARY_CSV);
        let rows: Vec<SummaryRow> = out.comparisons.iter().map(SummaryRow::from_comparison).collect();
        write_csv(&path, &rows)?;
        written.push(path);

        let path = dir.join(IMPROVEMENTS_CSV);
        let rows: Vec<ImprovementRow> = out
            .comparisons
            .iter()
            .flat_map(|c| {
                c.stats.iter().flat_map(move |s| {
                    s.per_env.iter().map(move |(env, &v)| ImprovementRow {
                        study: c.study.clone(),
                        group: c.group.clone(),
                        variant: c.variant.clone(),
                        env: env.clone(),
                        improvement: v,
                    })
                })
            })
            .collect();
        write_csv(&path, &rows)?;
        written.push(path);
    }
    Ok(written)
}

/// Writes result files, then charts drawn from them.
pub fn emit_report(out: &StudyOutput, dir: &Path) -> Result<Vec<PathBuf>> {
    if out.runs.is_empty() {
        return Err(Error::EmptyInput("report"));
    }
    let mut written = write_results(out, dir)?;
    written.extend(render_charts(dir)?);
    Ok(written)
}

/// Draws every chart whose source CSV exists in `dir`.
pub fn render_charts(dir: &Path) -> Result<Vec<PathBuf>> {
    let mut written = Vec::new();
    let summary = dir.join(SUMMARY_CSV);
    if summary.exists() {
        let rows: Vec<SummaryRow> = read_csv(&summary)?;
        let (grid, other): (Vec<_>, Vec<_>) = rows.into_iter().partition(|r| r.study == "grid");
        if !grid.is_empty() {
            let path = dir.join(HEATMAP_SVG);
            fs::write(&path, heatmap_svg(&grid)).map_err(|e| Error::io(&path, e))?;
            written.push(path);
        }
        if !other.is_empty() {
            let path = dir.join(BARS_SVG);
            fs::write(&path, bars_svg(&other)).map_err(|e| Error::io(&path, e))?;
            written.push(path);
        }
    }
    let curves = dir.join(CURVES_CSV);
    if curves.exists() {
        let rows: Vec<CurveRow> = read_csv(&curves)?;
        if !rows.is_empty() {
            let path = dir.join(CURVES_SVG);
            fs::write(&path, curves_svg(&rows)).map_err(|e| Error::io(&path, e))?;
            written.push(path);
        }
    }
    Ok(written)
}

/// Text used for a heatmap cell; the same string the tests compare with the CSV.
pub fn cell_annotation(row: &SummaryRow) -> String {
    match (row.skipped, row.median) {
        (true, _) => "skipped".into(),
        (false, Some(m)) => format!("{m:.1}%"),
        (false, None) => "n/a".into(),
    }
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

fn svg_open(w: f64, h: f64) -> String {
    format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{w}\" height=\"{h}\" viewBox=\"0 0 {w} {h}\" font-family=\"sans-serif\" font-size=\"12\">\n\
         <rect width=\"{w}\" height=\"{h}\" fill=\"white\"/>\n"
    )
}

/// Diverging blue-white-red for a percent change clipped to +-`scale`.
fn diverging(v: f64, scale: f64) -> String {
    let t = (v / scale).clamp(-1.0, 1.0);
    let (r, g, b) = if t >= 0.0 {
        (
            255.0 * (1.0 - t) + 33.0 * t,
            255.0 * (1.0 - t) + 102.0 * t,
            255.0 * (1.0 - t) + 172.0 * t,
        )
    } else {
        let t = -t;
        (
            255.0 * (1.0 - t) + 178.0 * t,
            255.0 * (1.0 - t) + 24.0 * t,
            255.0 * (1.0 - t) + 43.0 * t,
        )
    };
    format!("rgb({},{},{})", r.round(), g.round(), b.round())
}

pub fn heatmap_svg(rows: &[SummaryRow]) -> String {
    let mut caps: Vec<u64> = rows.iter().map(|r| r.capacity).collect();
    caps.sort_unstable();
    caps.dedup();
    let mut ages: Vec<f64> = rows.iter().map(|r| r.oldest_age).collect();
    ages.sort_by(f64::total_cmp);
    ages.dedup();
    let scale = rows
        .iter()
        .filter_map(|r| r.median)
        .fold(1.0f64, |m, v| m.max(v.abs()));
    let (cw, ch, left, top) = (110.0, 50.0, 110.0, 50.0);
    let w = left + cw * caps.len() as f64 + 20.0;
    let h = top + ch * ages.len() as f64 + 50.0;
    let mut s = svg_open(w, h);
    let _ = writeln!(
        s,
        "<text x=\"{}\" y=\"20\" text-anchor=\"middle\" font-size=\"14\">median improvement vs baseline cell</text>",
        w / 2.0
    );
    for (i, c) in caps.iter().enumerate() {
        let _ = writeln!(
            s,
            "<text x=\"{}\" y=\"{}\" text-anchor=\"middle\">{c}</text>",
            left + cw * (i as f64 + 0.5),
            top + ch * ages.len() as f64 + 18.0
        );
    }
    let _ = writeln!(
        s,
        "<text x=\"{}\" y=\"{}\" text-anchor=\"middle\">replay capacity</text>",
        left + cw * caps.len() as f64 / 2.0,
        h - 10.0
    );
    for (j, a) in ages.iter().enumerate() {
        let _ = writeln!(
            s,
            "<text x=\"{}\" y=\"{}\" text-anchor=\"end\">age {a}</text>",
            left - 8.0,
            top + ch * (j as f64 + 0.5) + 4.0
        );
    }
    for r in rows {
        let i = caps
            .iter()
            .position(|&c| c == r.capacity)
            .expect("capacity listed");
        let j = ages.iter().position(|&a| a == r.oldest_age).expect("age listed");
        let fill = match (r.skipped, r.median) {
            (false, Some(m)) => diverging(m, scale),
            _ => "rgb(220,220,220)".into(),
        };
        let (x, y) = (left + cw * i as f64, top + ch * j as f64);
        let _ = writeln!(
            s,
            "<rect x=\"{x}\" y=\"{y}\" width=\"{cw}\" height=\"{ch}\" fill=\"{fill}\" stroke=\"black\" stroke-width=\"0.5\"/>"
        );
        let _ = writeln!(
            s,
            "<text class=\"cell\" x=\"{}\" y=\"{}\" text-anchor=\"middle\">{}</text>",
            x + cw / 2.0,
            y + ch / 2.0 - 2.0,
            cell_annotation(r)
        );
        let _ = writeln!(
            s,
            "<text x=\"{}\" y=\"{}\" text-anchor=\"middle\" font-size=\"10\">ratio {}</text>",
            x + cw / 2.0,
            y + ch / 2.0 + 13.0,
            r.ratio
        );
    }
    s.push_str("</svg>\n");
    s
}

pub fn bars_svg(rows: &[SummaryRow]) -> String {
    let values: Vec<f64> = rows
        .iter()
        .flat_map(|r| [r.median, r.p25, r.p75])
        .flatten()
        .chain([0.0])
        .collect();
    let lo = values.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = values.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let span = if hi > lo { hi - lo } else { 1.0 };
    let (lo, hi) = (lo - 0.05 * span, hi + 0.05 * span);
    let (bw, left, top, ph) = (60.0, 70.0, 40.0, 300.0);
    let w = left + bw * rows.len() as f64 + 20.0;
    let h = top + ph + 150.0;
    let y = |v: f64| top + ph * (hi - v) / (hi - lo);
    let mut s = svg_open(w, h);
    let _ = writeln!(
        s,
        "<text x=\"{}\" y=\"20\" text-anchor=\"middle\" font-size=\"14\">median improvement (whiskers p25-p75)</text>",
        w / 2.0
    );
    let _ = writeln!(
        s,
        "<line x1=\"{left}\" y1=\"{0}\" x2=\"{1}\" y2=\"{0}\" stroke=\"black\"/>",
        y(0.0),
        w - 10.0
    );
    for k in 0..=4 {
        let v = lo + (hi - lo) * k as f64 / 4.0;
        let _ = writeln!(
            s,
            "<text x=\"{}\" y=\"{}\" text-anchor=\"end\" font-size=\"10\">{v:.1}%</text>",
            left - 6.0,
            y(v) + 3.0
        );
    }
    for (i, r) in rows.iter().enumerate() {
        let cx = left + bw * (i as f64 + 0.5);
        if let Some(m) = r.median {
            let (y0, y1) = (y(0.0).min(y(m)), y(0.0).max(y(m)));
            let _ = writeln!(
                s,
                "<rect class=\"bar\" x=\"{}\" y=\"{y0}\" width=\"{}\" height=\"{}\" fill=\"{}\" data-median=\"{m}\"/>",
                cx - bw * 0.35,
                bw * 0.7,
                y1 - y0,
                if m >= 0.0 { "rgb(33,102,172)" } else { "rgb(178,24,43)" }
            );
        }
        if let (Some(p25), Some(p75)) = (r.p25, r.p75) {
            let _ = writeln!(
                s,
                "<line class=\"whisker\" x1=\"{cx}\" y1=\"{}\" x2=\"{cx}\" y2=\"{}\" stroke=\"black\" data-p25=\"{p25}\" data-p75=\"{p75}\"/>",
                y(p25),
                y(p75)
            );
            for p in [p25, p75] {
                let _ = writeln!(
                    s,
                    "<line x1=\"{x0}\" y1=\"{yp}\" x2=\"{x1}\" y2=\"{yp}\" stroke=\"black\"/>",
                    x0 = cx - 8.0,
                    yp = y(p),
                    x1 = cx + 8.0
                );
            }
        }
        let label = if r.group == "capacity" {
            r.variant.clone()
        } else {
            format!("{} {}", r.group, r.variant)
        };
        let ly = top + ph + 12.0;
        let _ = writeln!(
            s,
            "<text x=\"{cx}\" y=\"{ly}\" text-anchor=\"end\" font-size=\"10\" transform=\"rotate(-45 {cx} {ly})\">{}</text>",
            escape(&label)
        );
    }
    s.push_str("</svg>\n");
    s
}

const PALETTE: [&str; 8] = [
    "#1b9e77", "#d95f02", "#7570b3", "#e7298a", "#66a61e", "#e6ab02", "#a6761d", "#666666",
];

pub fn curves_svg(rows: &[CurveRow]) -> String {
    // env -> series (variant, capacity) -> seed -> points
    let mut panels: BTreeMap<&str, BTreeMap<(String, u64), BTreeMap<u64, Vec<(usize, f64)>>>> =
        BTreeMap::new();
    for r in rows {
        panels
            .entry(&r.env)
            .or_default()
            .entry((r.variant.clone(), r.capacity))
            .or_default()
            .entry(r.seed)
            .or_default()
            .push((r.iteration, r.value));
    }
    let mut series_keys: Vec<(String, u64)> = panels.values().flat_map(|p| p.keys().cloned()).collect();
    series_keys.sort();
    series_keys.dedup();
    let (pw, ph, gap, left, top) = (360.0, 220.0, 60.0, 60.0, 40.0);
    let cols = panels.len().clamp(1, 3);
    let nrows = panels.len().div_ceil(cols);
    let legend_h = 16.0 * series_keys.len() as f64 + 20.0;
    let w = left + (pw + gap) * cols as f64;
    let h = top + (ph + gap) * nrows as f64 + legend_h;
    let mut s = svg_open(w, h);
    let _ = writeln!(
        s,
        "<text x=\"{}\" y=\"20\" text-anchor=\"middle\" font-size=\"14\">evaluation return (thin: seeds, thick: mean)</text>",
        w / 2.0
    );
    for (k, (env, series)) in panels.iter().enumerate() {
        let (ox, oy) = (
            left + (pw + gap) * (k % cols) as f64,
            top + (ph + gap) * (k / cols) as f64,
        );
        let pts = series.values().flat_map(|seeds| seeds.values().flatten());
        let (mut vmin, mut vmax, mut imax) = (f64::INFINITY, f64::NEG_INFINITY, 1usize);
        for &(i, v) in pts {
            vmin = vmin.min(v);
            vmax = vmax.max(v);
            imax = imax.max(i);
        }
        if vmax <= vmin {
            vmax = vmin + 1.0;
        }
        let px = |i: usize| ox + pw * i as f64 / imax as f64;
        let py = |v: f64| oy + ph * (vmax - v) / (vmax - vmin);
        let _ = writeln!(
            s,
            "<rect x=\"{ox}\" y=\"{oy}\" width=\"{pw}\" height=\"{ph}\" fill=\"none\" stroke=\"black\" stroke-width=\"0.5\"/>"
        );
        let _ = writeln!(
            s,
            "<text x=\"{}\" y=\"{}\" text-anchor=\"middle\">{}</text>",
            ox + pw / 2.0,
            oy - 6.0,
            escape(env)
        );
        for (v, yv) in [(vmin, py(vmin)), (vmax, py(vmax))] {
            let _ = writeln!(
                s,
                "<text x=\"{}\" y=\"{}\" text-anchor=\"end\" font-size=\"10\">{v:.2}</text>",
                ox - 4.0,
                yv + 3.0
            );
        }
        for (key, seeds) in series {
            let color = PALETTE[series_keys.iter().position(|k| k == key).unwrap_or(0) % PALETTE.len()];
            let mut sums: BTreeMap<usize, (f64, usize)> = BTreeMap::new();
            for points in seeds.values() {
                let path: Vec<String> = points
                    .iter()
                    .map(|&(i, v)| format!("{:.2},{:.2}", px(i), py(v)))
                    .collect();
                let _ = writeln!(
                    s,
                    "<polyline points=\"{}\" fill=\"none\" stroke=\"{color}\" stroke-width=\"0.6\" stroke-opacity=\"0.5\"/>",
                    path.join(" ")
                );
                for &(i, v) in points {
                    let e = sums.entry(i).or_insert((0.0, 0));
                    e.0 += v;
                    e.1 += 1;
                }
            }
            let mean: Vec<String> = sums
                .iter()
                .map(|(&i, &(t, n))| format!("{:.2},{:.2}", px(i), py(t / n as f64)))
                .collect();
            let _ = writeln!(
                s,
                "<polyline points=\"{}\" fill=\"none\" stroke=\"{color}\" stroke-width=\"2\"/>",
                mean.join(" ")
            );
        }
    }
    let ly = top + (ph + gap) * nrows as f64;
    for (i, (variant, cap)) in series_keys.iter().enumerate() {
        let color = PALETTE[i % PALETTE.len()];
        let y = ly + 16.0 * i as f64;
        let _ = writeln!(
            s,
            "<line x1=\"{left}\" y1=\"{y}\" x2=\"{}\" y2=\"{y}\" stroke=\"{color}\" stroke-width=\"2\"/>",
            left + 24.0
        );
        let _ = writeln!(
            s,
            "<text x=\"{}\" y=\"{}\">{} capacity {cap}</text>",
            left + 30.0,
            y + 4.0,
            escape(variant)
        );
    }
    s.push_str("</svg>\n");
    s
}

/// Plain-text table of a study's comparisons.
pub fn summary_table(out: &StudyOutput) -> String {
    let mut s = String::new();
    if out.comparisons.is_empty() {
        let mut by: BTreeMap<(String, String), Vec<f64>> = BTreeMap::new();
        for r in &out.runs {
            if let Some(v) = r.final_score {
                by.entry((offline_tag(r), r.env.clone())).or_default().push(v);
            }
        }
        let _ = writeln!(s, "{:<28} {:<32} {:>6} {:>10}", "variant", "env", "runs", "mean");
        for ((v, e), xs) in by {
            let m = xs.iter().sum::<f64>() / xs.len() as f64;
            let _ = writeln!(s, "{v:<28} {e:<32} {:>6} {m:>10.4}", xs.len());
        }
        return s;
    }
    let _ = writeln!(
        s,
        "{:<14} {:<24} {:>9} {:>9} {:>9} {:>20}",
        "group", "variant", "median%", "p25%", "p75%", "95% CI"
    );
    for c in &out.comparisons {
        match (&c.stats, c.skipped) {
            (_, true) => {
                let _ = writeln!(s, "{:<14} {:<24} skipped (ratio {})", c.group, c.variant, c.ratio);
            }
            (Some(st), false) => {
                let _ = writeln!(
                    s,
                    "{:<14} {:<24} {:>9.2} {:>9.2} {:>9.2} {:>20}",
                    c.group,
                    c.variant,
                    st.median,
                    st.p25,
                    st.p75,
                    format!("[{:.2}, {:.2}]", st.ci_low, st.ci_high)
                );
            }
            (None, false) => {
                let _ = writeln!(s, "{:<14} {:<24} no usable scores", c.group, c.variant);
            }
        }
    }
    s
}
