//! CSV output for sweeps and the .dat/SVG figure data derived from it.
//!
//! Reals are written with six decimals. `metrics.csv` and `runs.csv` hold
//! one row per run (metrics over the evaluation window); `period` in
//! `metrics.csv` is the number of simulated periods. `timeline.csv` follows
//! the first run of the sweep.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::sweep::{mean, stderr, RunSummary};

pub const METRICS_HEADER: [&str; 10] = [
    "scenario",
    "policy",
    "event_type",
    "entry_level",
    "seed",
    "period",
    "total_catches",
    "energy_efficiency",
    "awake_ticks",
    "event_ticks",
];

pub const RUNS_HEADER: [&str; 18] = [
    "scenario",
    "policy",
    "event_type",
    "entry_level",
    "charging_ratio",
    "state_duration",
    "seed",
    "periods",
    "eval_periods",
    "total_catches",
    "catches_per_period",
    "energy_efficiency",
    "awake_ticks",
    "event_ticks",
    "phase1_passes",
    "learning_episodes",
    "first_converged",
    "last_converged",
];

pub const CONVERGENCE_HEADER: [&str; 11] = [
    "scenario",
    "policy",
    "seed",
    "charging_ratio",
    "record",
    "shape",
    "entry_level",
    "learn_order",
    "episodes_to_converge",
    "global_episode",
    "passes",
];

pub const TIMELINE_HEADER: [&str; 4] = ["period", "phase", "catches", "misses"];

pub const PLOTS: [&str; 5] = [
    "conv-vs-ratio",
    "conv-per-entry",
    "perf-by-type",
    "state-duration",
    "adaptation",
];

fn real(x: f64) -> String {
    format!("{x:.6}")
}

fn opt<T: ToString>(x: Option<T>) -> String {
    x.map_or_else(String::new, |v| v.to_string())
}

fn csv_err(e: csv::Error) -> Error {
    Error::Io(e.to_string())
}

fn writer(dir: &Path, name: &str, header: &[&str]) -> Result<csv::Writer<std::fs::File>> {
    let mut w = csv::Writer::from_path(dir.join(name)).map_err(csv_err)?;
    w.write_record(header).map_err(csv_err)?;
    Ok(w)
}

/// Writes metrics.csv, runs.csv, convergence.csv and timeline.csv into
/// `dir` (created if missing). Returns the paths written.
pub fn emit_csv(runs: &[RunSummary], dir: &Path) -> Result<Vec<PathBuf>> {
    std::fs::create_dir_all(dir)?;

    let mut m = writer(dir, "metrics.csv", &METRICS_HEADER)?;
    let mut r = writer(dir, "runs.csv", &RUNS_HEADER)?;
    let mut c = writer(dir, "convergence.csv", &CONVERGENCE_HEADER)?;
    for run in runs {
        let k = &run.key;
        let x = &run.metrics;
        m.write_record([
            k.scenario.clone(),
            k.policy.to_string(),
            k.event_type.to_string(),
            k.entry.to_string(),
            k.seed.to_string(),
            run.periods.to_string(),
            x.total_catches.to_string(),
            real(x.energy_efficiency),
            x.awake_ticks.to_string(),
            x.event_ticks.to_string(),
        ])
        .map_err(csv_err)?;
        r.write_record([
            k.scenario.clone(),
            k.policy.to_string(),
            k.event_type.to_string(),
            k.entry.to_string(),
            real(k.charging_ratio),
            k.state_duration.to_string(),
            k.seed.to_string(),
            run.periods.to_string(),
            x.periods.to_string(),
            x.total_catches.to_string(),
            real(x.catches_per_period()),
            real(x.energy_efficiency),
            x.awake_ticks.to_string(),
            x.event_ticks.to_string(),
            opt(run.convergence.phase1_passes.first()),
            run.convergence.learning_episodes.to_string(),
            opt(run.first_converged()),
            opt(run.last_converged()),
        ])
        .map_err(csv_err)?;
        for (i, passes) in run.convergence.phase1_passes.iter().enumerate() {
            c.write_record([
                k.scenario.clone(),
                k.policy.to_string(),
                k.seed.to_string(),
                real(k.charging_ratio),
                "phase1".into(),
                String::new(),
                String::new(),
                (i + 1).to_string(),
                String::new(),
                String::new(),
                passes.to_string(),
            ])
            .map_err(csv_err)?;
        }
        for e in &run.convergence.entries {
            c.write_record([
                k.scenario.clone(),
                k.policy.to_string(),
                k.seed.to_string(),
                real(k.charging_ratio),
                "entry".into(),
                crate::world::steps_string(&e.shape.0),
                e.entry_level.to_string(),
                e.learn_order.to_string(),
                e.episodes_to_converge.to_string(),
                e.global_episode.to_string(),
                String::new(),
            ])
            .map_err(csv_err)?;
        }
    }

    let mut t = writer(dir, "timeline.csv", &TIMELINE_HEADER)?;
    if let Some(run) = runs.first() {
        for row in &run.timeline {
            t.write_record([
                row.period.to_string(),
                opt(row.phase),
                row.catches.to_string(),
                row.misses.to_string(),
            ])
            .map_err(csv_err)?;
        }
    }
    for w in [&mut m, &mut r, &mut c, &mut t] {
        w.flush()?;
    }
    Ok(["metrics.csv", "runs.csv", "convergence.csv", "timeline.csv"]
        .iter()
        .map(|n| dir.join(n))
        .collect())
}

/// Rows of a CSV file as maps from column name to value.
fn read_rows(path: &Path) -> Result<Vec<BTreeMap<String, String>>> {
    let mut rd = csv::Reader::from_path(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
    let header = rd.headers().map_err(csv_err)?.clone();
    rd.records()
        .map(|rec| {
            let rec = rec.map_err(csv_err)?;
            Ok(header
                .iter()
                .map(String::from)
                .zip(rec.iter().map(String::from))
                .collect())
        })
        .collect()
}

fn field<T: std::str::FromStr>(row: &BTreeMap<String, String>, key: &str) -> Result<T> {
    let v = row
        .get(key)
        .ok_or_else(|| Error::Io(format!("missing column `{key}`")))?;
    v.parse()
        .map_err(|_| Error::Io(format!("bad value `{v}` in column `{key}`")))
}

/// Figure data: one header comment, then whitespace-separated columns.
#[derive(Clone, Debug, PartialEq)]
pub struct PlotData {
    pub id: String,
    pub columns: Vec<String>,
    /// Row labels (first column) and numeric values.
    pub rows: Vec<(String, Vec<f64>)>,
}

impl PlotData {
    pub fn to_dat(&self) -> String {
        let mut o = format!("# {}\n# {}\n", self.id, self.columns.join(" "));
        for (label, vals) in &self.rows {
            let vals: Vec<String> = vals.iter().map(|v| real(*v)).collect();
            let _ = writeln!(o, "{label} {}", vals.join(" "));
        }
        o
    }
}

fn group_mean_stderr(pairs: Vec<(String, f64)>) -> Vec<(String, Vec<f64>)> {
    let mut order: Vec<String> = Vec::new();
    let mut groups: BTreeMap<String, Vec<f64>> = BTreeMap::new();
    for (k, v) in pairs {
        if !groups.contains_key(&k) {
            order.push(k.clone());
        }
        groups.entry(k).or_default().push(v);
    }
    order
        .into_iter()
        .map(|k| {
            let v = &groups[&k];
            (k, vec![mean(v), stderr(v)])
        })
        .collect()
}

/// Builds the figure data for `id` from the CSVs in `dir`.
pub fn plot_data(dir: &Path, id: &str) -> Result<PlotData> {
    let data = match id {
        "conv-vs-ratio" => {
            let rows = read_rows(&dir.join("convergence.csv"))?;
            let mut pairs = Vec::new();
            for r in rows
                .iter()
                .filter(|r| r["record"] == "phase1" && r["learn_order"] == "1")
            {
                pairs.push((r["charging_ratio"].clone(), field::<f64>(r, "passes")?));
            }
            let mut rows = group_mean_stderr(pairs);
            rows.sort_by(|a, b| a.0.parse::<f64>().unwrap_or(0.0).total_cmp(&b.0.parse().unwrap_or(0.0)));
            PlotData {
                id: id.into(),
                columns: vec!["charging_ratio".into(), "mean_passes".into(), "stderr".into()],
                rows,
            }
        }
        "conv-per-entry" => {
            let rows = read_rows(&dir.join("convergence.csv"))?;
            let mut by_level: BTreeMap<usize, Vec<f64>> = BTreeMap::new();
            let mut by_order: BTreeMap<usize, Vec<f64>> = BTreeMap::new();
            for r in rows.iter().filter(|r| r["record"] == "entry") {
                let eps: f64 = field(r, "episodes_to_converge")?;
                by_level.entry(field(r, "entry_level")?).or_default().push(eps);
                by_order.entry(field(r, "learn_order")?).or_default().push(eps);
            }
            let n = by_level.keys().chain(by_order.keys()).copied().max().unwrap_or(0);
            let stats =
                |m: &BTreeMap<usize, Vec<f64>>, i: usize| m.get(&i).map_or([0.0, 0.0], |v| [mean(v), stderr(v)]);
            PlotData {
                id: id.into(),
                columns: ["index", "level_mean", "level_stderr", "order_mean", "order_stderr"]
                    .map(String::from)
                    .to_vec(),
                rows: (1..=n)
                    .map(|i| {
                        let mut v = stats(&by_level, i).to_vec();
                        v.extend(stats(&by_order, i));
                        (i.to_string(), v)
                    })
                    .collect(),
            }
        }
        "perf-by-type" => {
            let rows = read_rows(&dir.join("metrics.csv"))?;
            let mut policies: Vec<String> = Vec::new();
            let mut cells: Vec<(String, String)> = Vec::new();
            let mut acc: BTreeMap<(String, String, String), (Vec<f64>, Vec<f64>)> = BTreeMap::new();
            for r in &rows {
                let p = r["policy"].clone();
                if !policies.contains(&p) {
                    policies.push(p.clone());
                }
                let cell = (r["event_type"].clone(), r["entry_level"].clone());
                if !cells.contains(&cell) {
                    cells.push(cell.clone());
                }
                let e = acc.entry((cell.0, cell.1, p)).or_default();
                e.0.push(field(r, "total_catches")?);
                e.1.push(field(r, "energy_efficiency")?);
            }
            let mut columns = vec!["event_type/entry_level".to_string()];
            columns.extend(policies.iter().map(|p| format!("{p}_catches")));
            columns.extend(policies.iter().map(|p| format!("{p}_efficiency")));
            let rows = cells
                .iter()
                .map(|(ty, lv)| {
                    let get = |p: &String| acc.get(&(ty.clone(), lv.clone(), p.clone()));
                    let mut v: Vec<f64> = policies.iter().map(|p| get(p).map_or(0.0, |e| mean(&e.0))).collect();
                    v.extend(policies.iter().map(|p| get(p).map_or(0.0, |e| mean(&e.1))));
                    (format!("{ty}/E{lv}"), v)
                })
                .collect();
            PlotData {
                id: id.into(),
                columns,
                rows,
            }
        }
        "state-duration" => {
            let rows = read_rows(&dir.join("runs.csv"))?;
            let mut pairs = Vec::new();
            for r in &rows {
                pairs.push((r["state_duration"].clone(), field::<f64>(r, "catches_per_period")?));
            }
            PlotData {
                id: id.into(),
                columns: vec![
                    "state_duration".into(),
                    "mean_catches_per_period".into(),
                    "stderr".into(),
                ],
                rows: group_mean_stderr(pairs),
            }
        }
        "adaptation" => {
            let rows = read_rows(&dir.join("timeline.csv"))?;
            let rows = rows
                .iter()
                .map(|r| {
                    let phase = r["phase"].parse::<f64>().unwrap_or(0.0);
                    Ok((
                        r["period"].clone(),
                        vec![phase, field(r, "catches")?, field(r, "misses")?],
                    ))
                })
                .collect::<Result<Vec<_>>>()?;
            PlotData {
                id: id.into(),
                columns: ["period", "phase", "catches", "misses"].map(String::from).to_vec(),
                rows,
            }
        }
        _ => {
            return Err(Error::UnknownPlot {
                name: id.into(),
                valid: PLOTS.join(", "),
            })
        }
    };
    if data.rows.is_empty() {
        return Err(Error::Io(format!("no data for plot `{id}` in {}", dir.display())));
    }
    Ok(data)
}

/// Writes `<id>.dat` and `<id>.svg` into `dir`.
pub fn emit_plot(dir: &Path, id: &str) -> Result<Vec<PathBuf>> {
    let data = plot_data(dir, id)?;
    let dat = dir.join(format!("{id}.dat"));
    std::fs::write(&dat, data.to_dat())?;
    let svg = dir.join(format!("{id}.svg"));
    std::fs::write(&svg, render_svg(&data))?;
    Ok(vec![dat, svg])
}

const W: f64 = 720.0;
const H: f64 = 400.0;
const PAD: f64 = 50.0;
const COLORS: [&str; 6] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b"];

fn esc(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

fn frame(title: &str, y_max: f64) -> String {
    let mut o = format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{W}\" height=\"{H}\" font-family=\"sans-serif\" font-size=\"11\">\n\
         <rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n\
         <text x=\"{}\" y=\"20\" text-anchor=\"middle\" font-size=\"14\">{}</text>\n",
        W / 2.0,
        esc(title)
    );
    let _ = writeln!(
        o,
        "<line x1=\"{PAD}\" y1=\"{0}\" x2=\"{1}\" y2=\"{0}\" stroke=\"black\"/><line x1=\"{PAD}\" y1=\"{PAD}\" x2=\"{PAD}\" y2=\"{0}\" stroke=\"black\"/>",
        H - PAD,
        W - PAD
    );
    for i in 0..=4 {
        let v = y_max * i as f64 / 4.0;
        let y = H - PAD - (H - 2.0 * PAD) * i as f64 / 4.0;
        let _ = writeln!(
            o,
            "<text x=\"{}\" y=\"{y:.1}\" text-anchor=\"end\">{}</text>",
            PAD - 4.0,
            fmt_tick(v)
        );
    }
    o
}

fn fmt_tick(v: f64) -> String {
    if v.abs() >= 100.0 || v == v.trunc() {
        format!("{v:.0}")
    } else {
        format!("{v:.2}")
    }
}

fn legend(o: &mut String, names: &[String]) {
    for (i, n) in names.iter().enumerate() {
        let x = PAD + 10.0 + 120.0 * i as f64;
        let c = COLORS[i % COLORS.len()];
        let _ = writeln!(
            o,
            "<rect x=\"{x}\" y=\"30\" width=\"10\" height=\"10\" fill=\"{c}\"/><text x=\"{}\" y=\"39\">{}</text>",
            x + 14.0,
            esc(n)
        );
    }
}

/// Grouped bars: one group per row, one bar per series.
pub fn bar_svg(title: &str, groups: &[String], series: &[(String, Vec<f64>)]) -> String {
    let y_max = series
        .iter()
        .flat_map(|s| s.1.iter().copied())
        .fold(0.0, f64::max)
        .max(f64::MIN_POSITIVE);
    let mut o = frame(title, y_max);
    let names: Vec<String> = series.iter().map(|s| s.0.clone()).collect();
    legend(&mut o, &names);
    let gw = (W - 2.0 * PAD) / groups.len().max(1) as f64;
    let bw = gw * 0.8 / series.len().max(1) as f64;
    for (g, name) in groups.iter().enumerate() {
        let gx = PAD + gw * g as f64 + gw * 0.1;
        for (s, (_, vals)) in series.iter().enumerate() {
            let v = vals.get(g).copied().unwrap_or(0.0);
            let h = (H - 2.0 * PAD) * v / y_max;
            let _ = writeln!(
                o,
                "<rect x=\"{:.1}\" y=\"{:.1}\" width=\"{bw:.1}\" height=\"{h:.1}\" fill=\"{}\"/>",
                gx + bw * s as f64,
                H - PAD - h,
                COLORS[s % COLORS.len()]
            );
        }
        let _ = writeln!(
            o,
            "<text x=\"{:.1}\" y=\"{}\" text-anchor=\"middle\" font-size=\"9\">{}</text>",
            gx + gw * 0.4,
            H - PAD + 14.0,
            esc(name)
        );
    }
    o.push_str("</svg>\n");
    o
}

/// Polylines over a shared numeric x axis.
pub fn line_svg(title: &str, xs: &[f64], series: &[(String, Vec<f64>)]) -> String {
    let y_max = series
        .iter()
        .flat_map(|s| s.1.iter().copied())
        .fold(0.0, f64::max)
        .max(f64::MIN_POSITIVE);
    let (x0, x1) = xs
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &x| (a.min(x), b.max(x)));
    let span = if x1 > x0 { x1 - x0 } else { 1.0 };
    let mut o = frame(title, y_max);
    let names: Vec<String> = series.iter().map(|s| s.0.clone()).collect();
    legend(&mut o, &names);
    for (s, (_, vals)) in series.iter().enumerate() {
        let pts: Vec<String> = xs
            .iter()
            .zip(vals)
            .map(|(x, y)| {
                let px = PAD + (W - 2.0 * PAD) * (x - x0) / span;
                let py = H - PAD - (H - 2.0 * PAD) * y / y_max;
                format!("{px:.1},{py:.1}")
            })
            .collect();
        let _ = writeln!(
            o,
            "<polyline fill=\"none\" stroke=\"{}\" stroke-width=\"1.5\" points=\"{}\"/>",
            COLORS[s % COLORS.len()],
            pts.join(" ")
        );
    }
    for (x, anchor) in [(x0, "start"), (x1, "end")] {
        let px = PAD + (W - 2.0 * PAD) * (x - x0) / span;
        let _ = writeln!(
            o,
            "<text x=\"{px:.1}\" y=\"{}\" text-anchor=\"{anchor}\">{}</text>",
            H - PAD + 14.0,
            fmt_tick(x)
        );
    }
    o.push_str("</svg>\n");
    o
}

fn column(data: &PlotData, i: usize) -> Vec<f64> {
    data.rows.iter().map(|r| r.1.get(i).copied().unwrap_or(0.0)).collect()
}

pub fn render_svg(data: &PlotData) -> String {
    let labels: Vec<String> = data.rows.iter().map(|r| r.0.clone()).collect();
    let xs: Vec<f64> = labels.iter().map(|l| l.parse().unwrap_or(0.0)).collect();
    match data.id.as_str() {
        "conv-vs-ratio" => line_svg(
            "Phase-1 passes vs charging ratio",
            &xs,
            &[("mean passes".into(), column(data, 0))],
        ),
        "conv-per-entry" => bar_svg(
            "Episodes to converge",
            &labels,
            &[
                ("by entry level".into(), column(data, 0)),
                ("by learning order".into(), column(data, 2)),
            ],
        ),
        "perf-by-type" => {
            let n = (data.columns.len() - 1) / 2;
            let series: Vec<(String, Vec<f64>)> = (0..n)
                .map(|i| {
                    (
                        data.columns[1 + i].trim_end_matches("_catches").to_string(),
                        column(data, i),
                    )
                })
                .collect();
            bar_svg("Total catches by event type and entry level", &labels, &series)
        }
        "state-duration" => bar_svg(
            "Catches per period by state duration",
            &labels,
            &[("catches".into(), column(data, 0))],
        ),
        _ => line_svg(
            "Adaptation timeline",
            &xs,
            &[("catches".into(), column(data, 1)), ("misses".into(), column(data, 2))],
        ),
    }
}
