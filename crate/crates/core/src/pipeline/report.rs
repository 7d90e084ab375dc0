//! Corpus statistics table and emission estimate.

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StatsRow {
    pub source: String,
    pub block_num: u64,
    pub token_num: u64,
    pub item_num: u64,
    /// Share of each batch, 0..=1.
    pub batch_ratio: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct StatsTotals {
    pub block_num: u64,
    pub token_num: u64,
    pub item_num: u64,
}

pub fn stats_totals(rows: &[StatsRow]) -> StatsTotals {
    StatsTotals {
        block_num: rows.iter().map(|r| r.block_num).sum(),
        token_num: rows.iter().map(|r| r.token_num).sum(),
        item_num: rows.iter().map(|r| r.item_num).sum(),
    }
}

/// `1234567` → `"1,234,567"`.
pub fn thousands(n: u64) -> String {
    let digits = n.to_string();
    let mut out = String::with_capacity(digits.len() + digits.len() / 3);
    for (i, c) in digits.chars().enumerate() {
        if i > 0 && (digits.len() - i).is_multiple_of(3) {
            out.push(',');
        }
        out.push(c);
    }
    out
}

fn percent(r: Option<f64>) -> String {
    match r {
        None => "-".into(),
        Some(r) => {
            let p = r * 100.0;
            if (p - p.round()).abs() < 1e-9 {
                format!("{:.0}%", p)
            } else {
                format!("{:.2}%", p)
            }
        }
    }
}

/// Plain-text table with one row per source and a totals row.
pub fn report_stats(rows: &[StatsRow]) -> String {
    let header = ["Dataset", "#blockNum", "#tokenNum", "#itemNum", "#batchRatio"];
    let mut table: Vec<[String; 5]> = vec![header.map(String::from)];
    for r in rows {
        table.push([
            r.source.clone(),
            thousands(r.block_num),
            thousands(r.token_num),
            thousands(r.item_num),
            percent(r.batch_ratio),
        ]);
    }
    let t = stats_totals(rows);
    table.push([
        "Total".into(),
        thousands(t.block_num),
        thousands(t.token_num),
        thousands(t.item_num),
        "-".into(),
    ]);
    let widths: Vec<usize> = (0..5)
        .map(|c| table.iter().map(|row| row[c].chars().count()).max().unwrap_or(0))
        .collect();
    let mut out = String::new();
    for (i, row) in table.iter().enumerate() {
        let cells: Vec<String> = row
            .iter()
            .enumerate()
            .map(|(c, s)| {
                if c == 0 {
                    format!("{:<w$}", s, w = widths[c])
                } else {
                    format!("{:>w$}", s, w = widths[c])
                }
            })
            .collect();
        out.push_str(cells.join("  ").trim_end());
        out.push('\n');
        if i == 0 || i == table.len() - 2 {
            out.push_str(&"-".repeat(widths.iter().sum::<usize>() + 8));
            out.push('\n');
        }
    }
    out
}

#[derive(Debug, Error, Clone, PartialEq)]
#[error("{name} must be a finite non-negative number, got {value}")]
pub struct EmissionError {
    pub name: &'static str,
    pub value: f64,
}

/// kg CO2 = accelerator hours × TDP (kW) × grid intensity (kg/kWh).
pub fn estimate_emissions(accelerator_hours: f64, tdp_kw: f64, intensity_kg_per_kwh: f64) -> Result<f64, EmissionError> {
    for (name, value) in [
        ("accelerator hours", accelerator_hours),
        ("TDP", tdp_kw),
        ("carbon intensity", intensity_kg_per_kwh),
    ] {
        if !(value.is_finite() && value >= 0.0) {
            return Err(EmissionError { name, value });
        }
    }
    Ok(accelerator_hours * tdp_kw * intensity_kg_per_kwh)
}

/// Combined TDP × intensity factor (kg per accelerator hour) implied by a
/// reported total.
pub fn back_solve_factor(total_kg: f64, accelerator_hours: f64) -> f64 {
    total_kg / accelerator_hours
}
