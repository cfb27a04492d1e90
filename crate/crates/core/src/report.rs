//! Comparison rows and their table, CSV and JSON renderings.

use std::io::{self, Write};

use serde::{Deserialize, Serialize};

/// Fixed CSV header.
pub const CSV_HEADER: &str = "topology,link,icn_norm,icn_mbps,gicn_norm,gicn_mbps,exact_norm,sim_norm,sim_ci,gicn_pcol,sim_pcol,sim_pcol_ci";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Format {
    #[default]
    Table,
    Csv,
    Json,
}

impl std::str::FromStr for Format {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "table" => Ok(Format::Table),
            "csv" => Ok(Format::Csv),
            "json" => Ok(Format::Json),
            other => Err(format!(
                "unknown format `{other}` (expected table, csv or json)"
            )),
        }
    }
}

/// One link's figures. Missing models are `None`; `*_mbps` fields are the
/// normalized values times the report's rate constant.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
pub struct LinkRow {
    pub link: String,
    pub icn_norm: Option<f64>,
    pub icn_mbps: Option<f64>,
    pub gicn_norm: Option<f64>,
    pub gicn_mbps: Option<f64>,
    pub exact_norm: Option<f64>,
    pub exact_mbps: Option<f64>,
    pub sim_norm: Option<f64>,
    pub sim_mbps: Option<f64>,
    pub sim_ci: Option<f64>,
    pub gicn_pcol: Option<f64>,
    pub exact_pcol: Option<f64>,
    pub sim_pcol: Option<f64>,
    pub sim_pcol_ci: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub topology: String,
    pub rate_mbps: f64,
    pub links: Vec<LinkRow>,
}

impl ReportRow {
    pub fn new(topology: impl Into<String>, link_ids: &[String], rate_mbps: f64) -> Self {
        ReportRow {
            topology: topology.into(),
            rate_mbps,
            links: link_ids
                .iter()
                .map(|id| LinkRow {
                    link: id.clone(),
                    ..LinkRow::default()
                })
                .collect(),
        }
    }

    pub fn set_icn(&mut self, th: &[f64]) {
        let rate = self.rate_mbps;
        for (row, &t) in self.links.iter_mut().zip(th) {
            row.icn_norm = Some(t);
            row.icn_mbps = Some(t * rate);
        }
    }

    pub fn set_gicn(&mut self, th: &[f64], pcol: &[f64]) {
        let rate = self.rate_mbps;
        for ((row, &t), &p) in self.links.iter_mut().zip(th).zip(pcol) {
            row.gicn_norm = Some(t);
            row.gicn_mbps = Some(t * rate);
            row.gicn_pcol = Some(p);
        }
    }

    pub fn set_exact(&mut self, th: &[f64], pcol: &[f64]) {
        let rate = self.rate_mbps;
        for ((row, &t), &p) in self.links.iter_mut().zip(th).zip(pcol) {
            row.exact_norm = Some(t);
            row.exact_mbps = Some(t * rate);
            row.exact_pcol = Some(p);
        }
    }

    /// Simulated values with optional confidence half-widths.
    pub fn set_sim(
        &mut self,
        th: &[f64],
        pcol: &[f64],
        th_ci: Option<&[f64]>,
        pcol_ci: Option<&[f64]>,
    ) {
        let rate = self.rate_mbps;
        for (k, row) in self.links.iter_mut().enumerate() {
            row.sim_norm = Some(th[k]);
            row.sim_mbps = Some(th[k] * rate);
            row.sim_pcol = Some(pcol[k]);
            row.sim_ci = th_ci.map(|c| c[k]);
            row.sim_pcol_ci = pcol_ci.map(|c| c[k]);
        }
    }
}

pub fn emit_report(rows: &[ReportRow], format: Format, sink: &mut dyn Write) -> io::Result<()> {
    match format {
        Format::Csv => write_csv(rows, sink),
        Format::Json => {
            serde_json::to_writer_pretty(&mut *sink, rows)?;
            writeln!(sink)
        }
        Format::Table => write_table(rows, sink),
    }
}

fn cell(v: Option<f64>) -> String {
    v.map(|x| format!("{x:.6}")).unwrap_or_default()
}

fn write_csv(rows: &[ReportRow], sink: &mut dyn Write) -> io::Result<()> {
    writeln!(sink, "{CSV_HEADER}")?;
    for row in rows {
        for l in &row.links {
            let fields = [
                csv_escape(&row.topology),
                csv_escape(&l.link),
                cell(l.icn_norm),
                cell(l.icn_mbps),
                cell(l.gicn_norm),
                cell(l.gicn_mbps),
                cell(l.exact_norm),
                cell(l.sim_norm),
                cell(l.sim_ci),
                cell(l.gicn_pcol),
                cell(l.sim_pcol),
                cell(l.sim_pcol_ci),
            ];
            writeln!(sink, "{}", fields.join(","))?;
        }
    }
    Ok(())
}

fn csv_escape(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

type Column = (&'static str, fn(&LinkRow) -> Option<String>);

fn plus_minus(v: Option<f64>, ci: Option<f64>, digits: usize) -> Option<String> {
    v.map(|x| match ci {
        Some(h) => format!("{x:.digits$} ±{h:.digits$}"),
        None => format!("{x:.digits$}"),
    })
}

const COLUMNS: [Column; 9] = [
    ("ICN Mbps", |l| l.icn_mbps.map(|x| format!("{x:.4}"))),
    ("GICN Mbps", |l| l.gicn_mbps.map(|x| format!("{x:.4}"))),
    ("exact Mbps", |l| l.exact_mbps.map(|x| format!("{x:.4}"))),
    ("sim Mbps", |l| {
        let rate = match (l.sim_mbps, l.sim_norm) {
            (Some(m), Some(n)) if n != 0.0 => m / n,
            _ => 0.0,
        };
        plus_minus(l.sim_mbps, l.sim_ci.map(|h| h * rate), 4)
    }),
    ("ICN norm", |l| l.icn_norm.map(|x| format!("{x:.4}"))),
    ("GICN norm", |l| l.gicn_norm.map(|x| format!("{x:.4}"))),
    ("GICN pcol", |l| l.gicn_pcol.map(|x| format!("{x:.4}"))),
    ("exact pcol", |l| l.exact_pcol.map(|x| format!("{x:.4}"))),
    ("sim pcol", |l| plus_minus(l.sim_pcol, l.sim_pcol_ci, 4)),
];

fn write_table(rows: &[ReportRow], sink: &mut dyn Write) -> io::Result<()> {
    let used: Vec<&Column> = COLUMNS
        .iter()
        .filter(|(_, f)| rows.iter().flat_map(|r| &r.links).any(|l| f(l).is_some()))
        .collect();
    let mut grid: Vec<Vec<String>> = Vec::new();
    let mut header = vec!["topology".to_string(), "link".to_string()];
    header.extend(used.iter().map(|(h, _)| h.to_string()));
    grid.push(header);
    for row in rows {
        for l in &row.links {
            let mut line = vec![row.topology.clone(), l.link.clone()];
            line.extend(used.iter().map(|(_, f)| f(l).unwrap_or_else(|| "-".into())));
            grid.push(line);
        }
    }
    let widths: Vec<usize> = (0..grid[0].len())
        .map(|c| grid.iter().map(|r| r[c].chars().count()).max().unwrap_or(0))
        .collect();
    for (k, line) in grid.iter().enumerate() {
        let cells: Vec<String> = line
            .iter()
            .zip(&widths)
            .enumerate()
            .map(|(c, (s, &w))| {
                if c < 2 {
                    format!("{s:<w$}")
                } else {
                    format!("{s:>w$}")
                }
            })
            .collect();
        writeln!(sink, "{}", cells.join("  ").trim_end())?;
        if k == 0 {
            let total = widths.iter().sum::<usize>() + 2 * (widths.len() - 1);
            writeln!(sink, "{}", "-".repeat(total))?;
        }
    }
    Ok(())
}
