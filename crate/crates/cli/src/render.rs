//! Text, CSV and JSON renderings of analysis results.

use serde::Serialize;
use vcomp::anova::{AnovaTable, ComponentEstimate, SourcePower};

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum Format {
    Text,
    Csv,
    Json,
}

/// Short human form of a number: integers exact, others to six significant digits.
pub fn num(v: f64) -> String {
    if !v.is_finite() {
        return format!("{v}");
    }
    if v == v.trunc() && v.abs() < 1e15 {
        return format!("{}", v as i64);
    }
    let mag = v.abs().log10().floor() as i32;
    if !(-4..15).contains(&mag) {
        return format!("{v:.5e}");
    }
    let decimals = (5 - mag).max(0) as usize;
    let s = format!("{v:.decimals$}");
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.').to_owned()
    } else {
        s
    }
}

fn opt(v: Option<f64>) -> String {
    v.map(num).unwrap_or_default()
}

/// Left-aligned columns padded by character count.
fn columns(rows: &[Vec<String>]) -> String {
    let width = rows[0].len();
    let widths: Vec<usize> = (0..width)
        .map(|c| rows.iter().map(|r| r[c].chars().count()).max().unwrap_or(0))
        .collect();
    let mut out = String::new();
    for r in rows {
        let mut line = String::new();
        for (c, cell) in r.iter().enumerate() {
            line.push_str(cell);
            if c + 1 < width {
                line.extend(std::iter::repeat_n(
                    ' ',
                    widths[c] - cell.chars().count() + 2,
                ));
            }
        }
        out.push_str(line.trim_end());
        out.push('\n');
    }
    out
}

const HEADER: [&str; 8] = ["Source", "Df", "SS", "MS", "EMS", "F", "Denominator", "p"];

pub fn table_text(
    table: &AnovaTable,
    components: &Result<Vec<ComponentEstimate>, String>,
) -> String {
    let mut rows = vec![HEADER.iter().map(|s| s.to_string()).collect::<Vec<_>>()];
    for r in &table.rows {
        rows.push(vec![
            r.source.clone(),
            r.df.to_string(),
            num(r.ss),
            num(r.ms),
            r.ems.to_string(),
            opt(r.f),
            r.denominator.clone().unwrap_or_default(),
            opt(r.p_value),
        ]);
    }
    rows.push(vec![
        "Total".into(),
        table.total_df.to_string(),
        num(table.total_ss),
    ]);
    for r in rows.iter_mut() {
        r.resize(HEADER.len(), String::new());
    }
    let mut out = columns(&rows);
    out.push('\n');
    match components {
        Ok(est) => {
            out.push_str("Variance components (method of moments)\n");
            let mut rows = vec![vec![
                "Component".to_string(),
                "Estimate".into(),
                "Raw".into(),
            ]];
            for e in est {
                let note = if e.truncated { " (truncated at 0)" } else { "" };
                rows.push(vec![
                    e.component.clone(),
                    format!("{}{note}", num(e.estimate)),
                    num(e.raw),
                ]);
            }
            out.push_str(&columns(&rows));
        }
        Err(msg) => out.push_str(&format!("Variance components not identifiable: {msg}\n")),
    }
    out
}

pub fn table_csv(table: &AnovaTable) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(HEADER).expect("in-memory write");
    let full = |v: Option<f64>| v.map(|x| format!("{x}")).unwrap_or_default();
    for r in &table.rows {
        w.write_record([
            r.source.clone(),
            r.df.to_string(),
            format!("{}", r.ss),
            format!("{}", r.ms),
            r.ems.to_string(),
            full(r.f),
            r.denominator.clone().unwrap_or_default(),
            full(r.p_value),
        ])
        .expect("in-memory write");
    }
    w.write_record([
        "Total".into(),
        table.total_df.to_string(),
        format!("{}", table.total_ss),
        "".into(),
        "".into(),
        "".into(),
        "".into(),
        "".into(),
    ])
    .expect("in-memory write");
    String::from_utf8(w.into_inner().expect("in-memory flush")).expect("utf-8 output")
}

#[derive(Serialize)]
struct JsonRow<'a> {
    source: &'a str,
    df: usize,
    ss: f64,
    ms: f64,
    ems: String,
    f: Option<f64>,
    denominator: Option<&'a str>,
    p_value: Option<f64>,
}

#[derive(Serialize)]
struct JsonTable<'a> {
    observations: usize,
    rows: Vec<JsonRow<'a>>,
    total_df: usize,
    total_ss: f64,
    components: Option<&'a [ComponentEstimate]>,
    components_error: Option<&'a str>,
}

pub fn table_json(
    table: &AnovaTable,
    components: &Result<Vec<ComponentEstimate>, String>,
) -> String {
    let doc = JsonTable {
        observations: table.observations,
        rows: table
            .rows
            .iter()
            .map(|r| JsonRow {
                source: &r.source,
                df: r.df,
                ss: r.ss,
                ms: r.ms,
                ems: r.ems.to_string(),
                f: r.f,
                denominator: r.denominator.as_deref(),
                p_value: r.p_value,
            })
            .collect(),
        total_df: table.total_df,
        total_ss: table.total_ss,
        components: components.as_ref().ok().map(Vec::as_slice),
        components_error: components.as_ref().err().map(String::as_str),
    };
    json(&doc)
}

pub fn power(rows: &[SourcePower], alpha: f64, format: Format) -> String {
    match format {
        Format::Text => {
            let mut table = vec![vec![
                "Source".to_string(),
                "Denominator".into(),
                format!("Power at alpha={alpha}"),
            ]];
            table.extend(
                rows.iter()
                    .map(|p| vec![p.source.clone(), p.denominator.clone(), num(p.power)]),
            );
            columns(&table)
        }
        Format::Csv => {
            let mut w = csv::Writer::from_writer(Vec::new());
            w.write_record(["source", "denominator", "alpha", "power"])
                .expect("in-memory write");
            for p in rows {
                w.write_record([
                    p.source.clone(),
                    p.denominator.clone(),
                    format!("{alpha}"),
                    format!("{}", p.power),
                ])
                .expect("in-memory write");
            }
            String::from_utf8(w.into_inner().expect("in-memory flush")).expect("utf-8 output")
        }
        Format::Json => json(&serde_json::json!({ "alpha": alpha, "sources": rows })),
    }
}

pub fn json<T: Serialize>(value: &T) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("serializable");
    s.push('\n');
    s
}
