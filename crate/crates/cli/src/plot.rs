//! Turns experiment CSVs back into SVG figures. The CSV kind is detected
//! from its header row.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use crate::svg::{Plot, Series, Style};
use crate::HarnessError;

/// A parsed CSV: header plus numeric cells (`None` for empty cells).
#[derive(Debug, Clone)]
pub struct NumericCsv {
    pub header: Vec<String>,
    pub rows: Vec<Vec<Option<f64>>>,
}

impl NumericCsv {
    pub fn column(&self, name: &str) -> Option<usize> {
        self.header.iter().position(|h| h == name)
    }

    fn pairs(&self, x: usize, y: usize) -> Vec<(f64, f64)> {
        self.rows.iter().filter_map(|r| Some((r[x]?, r[y]?))).collect()
    }
}

pub fn read_csv(path: &Path) -> Result<NumericCsv, HarnessError> {
    let parse_err = |line: u64, msg: String| HarnessError::Parse {
        path: path.to_path_buf(),
        line,
        msg,
    };
    let bytes = fs::read(path).map_err(|e| HarnessError::io(path, e))?;
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(bytes.as_slice());
    let header: Vec<String> = rdr
        .headers()
        .map_err(|e| parse_err(1, e.to_string()))?
        .iter()
        .map(str::to_string)
        .collect();
    let mut rows = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| {
            let line = e.position().map_or(0, |p| p.line());
            parse_err(line, e.to_string())
        })?;
        let line = rec.position().map_or(0, |p| p.line());
        let row = rec
            .iter()
            .map(|cell| {
                if cell.is_empty() {
                    Ok(None)
                } else {
                    cell.parse::<f64>()
                        .map(Some)
                        .map_err(|_| parse_err(line, format!("not a number: '{cell}'")))
                }
            })
            .collect::<Result<Vec<_>, _>>()?;
        rows.push(row);
    }
    Ok(NumericCsv { header, rows })
}

/// Builds the figure for a CSV, or `None` for an unrecognized header.
pub fn figure_for(name: &str, csv: &NumericCsv) -> Option<Plot> {
    let col = |n: &str| csv.column(n);
    if let (Some(n), Some(en), Some(el)) = (col("n"), col("median_err_n"), col("median_err_l2")) {
        return Some(Plot {
            title: "Evaluation error vs sample size".into(),
            x_label: "n".into(),
            y_label: "median error".into(),
            log_x: true,
            log_y: true,
            series: vec![
                Series {
                    label: "empirical norm".into(),
                    points: csv.pairs(n, en),
                    style: Style::Line,
                },
                Series {
                    label: "L2(mu0 x pi)".into(),
                    points: csv.pairs(n, el),
                    style: Style::Dashed,
                },
            ],
        });
    }
    if let (Some(a), Some(k), Some(g)) = (col("exponent"), col("k"), col("smoothed_gap")) {
        let r = col("smoothed_reward")?;
        let has_gap = csv.rows.iter().any(|row| row[g].is_some());
        let y = if has_gap { g } else { r };
        let mut groups: BTreeMap<u64, Vec<(f64, f64)>> = BTreeMap::new();
        let mut order = Vec::new();
        for row in &csv.rows {
            let (Some(av), Some(kv), Some(yv)) = (row[a], row[k], row[y]) else {
                continue;
            };
            let key = av.to_bits();
            if !groups.contains_key(&key) {
                order.push(av);
            }
            groups.entry(key).or_default().push((kv, yv));
        }
        return Some(Plot {
            title: "Step-size schedule sweep".into(),
            x_label: "iteration k".into(),
            y_label: if has_gap { "smoothed optimality gap" } else { "smoothed reward" }.into(),
            log_x: false,
            log_y: has_gap,
            series: order
                .iter()
                .map(|&av| Series {
                    label: format!("a={av}"),
                    points: groups.remove(&av.to_bits()).unwrap_or_default(),
                    style: Style::Line,
                })
                .collect(),
        });
    }
    if let (Some(k), Some(g), Some(rw), Some(b)) = (col("k"), col("gap"), col("reward_mean"), col("bound")) {
        let gaps = csv.pairs(k, g);
        let mut series = Vec::new();
        let log_y = !gaps.is_empty();
        if gaps.is_empty() {
            series.push(Series {
                label: "reward".into(),
                points: csv.pairs(k, rw),
                style: Style::Line,
            });
        } else {
            series.push(Series {
                label: "gap".into(),
                points: gaps,
                style: Style::Line,
            });
            series.push(Series {
                label: "bound".into(),
                points: csv.pairs(k, b),
                style: Style::Dashed,
            });
        }
        return Some(Plot {
            title: format!("Training ({name})"),
            x_label: "iteration k".into(),
            y_label: if log_y { "optimality gap" } else { "episode return" }.into(),
            log_x: false,
            log_y,
            series,
        });
    }
    if let (Some(t), Some(s)) = (col("t"), col("step_norm")) {
        let mut series = vec![Series {
            label: "step norm".into(),
            points: csv.pairs(t, s),
            style: Style::Line,
        }];
        if let Some(e) = col("error_vs_closed_form") {
            series.push(Series {
                label: "error vs closed form".into(),
                points: csv.pairs(t, e),
                style: Style::Dashed,
            });
        }
        return Some(Plot {
            title: "Kernel TD convergence".into(),
            x_label: "iteration t".into(),
            y_label: "empirical norm".into(),
            log_x: false,
            log_y: true,
            series,
        });
    }
    if let (Some(n), Some(e)) = (col("n"), col("err_n")) {
        return Some(Plot {
            title: "Evaluation error per run".into(),
            x_label: "n".into(),
            y_label: "error".into(),
            log_x: true,
            log_y: true,
            series: vec![Series {
                label: "err_n".into(),
                points: csv.pairs(n, e),
                style: Style::Markers,
            }],
        });
    }
    None
}

/// Plots every recognized CSV under `input` (a file or a directory) into
/// `out`, returning the SVG paths written.
pub fn plot_path(input: &Path, out: &Path) -> Result<Vec<PathBuf>, HarnessError> {
    let files: Vec<PathBuf> = if input.is_dir() {
        let mut v: Vec<PathBuf> = fs::read_dir(input)
            .map_err(|e| HarnessError::io(input, e))?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.extension().is_some_and(|x| x == "csv"))
            .collect();
        v.sort();
        v
    } else {
        vec![input.to_path_buf()]
    };
    fs::create_dir_all(out).map_err(|e| HarnessError::io(out, e))?;
    let mut written = Vec::new();
    for f in files {
        let csv = read_csv(&f)?;
        let stem = f.file_stem().and_then(|s| s.to_str()).unwrap_or("plot").to_string();
        let Some(plot) = figure_for(&stem, &csv) else {
            log::info!("no figure for {}", f.display());
            continue;
        };
        let path = out.join(format!("{stem}.svg"));
        fs::write(&path, plot.render()).map_err(|e| HarnessError::io(&path, e))?;
        written.push(path);
    }
    Ok(written)
}
