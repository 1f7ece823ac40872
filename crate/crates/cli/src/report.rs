//! Figures and the markdown report, always rendered from the CSV files on
//! disk so every figure shows exactly the numbers of its backing table.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use crate::error::CliError;
use crate::plot;

type Result<T> = std::result::Result<T, CliError>;

/// Stage outputs the report reads when they exist.
pub const SOURCES: [&str; 13] = [
    "market_summary.json",
    "monthly.csv",
    "delta_by_hour.csv",
    "cluster_summary.json",
    "shares.csv",
    "most_present.csv",
    "performance.csv",
    "characteristics.csv",
    "yearly_csr.csv",
    "labels.csv",
    "backtest_report.json",
    "cases.csv",
    "hourly_profit.csv",
];

/// Rows shown per table in report.md.
const MAX_ROWS: usize = 30;

pub struct Table {
    pub file: String,
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    fn col(&self, name: &str) -> Result<usize> {
        self.header
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| CliError::Data(format!("{}: no column `{name}`", self.file)))
    }

    fn num(&self, row: usize, col: usize) -> Result<f64> {
        let v = &self.rows[row][col];
        v.parse()
            .map_err(|_| CliError::Data(format!("{}: row {}: `{v}` is not a number", self.file, row + 2)))
    }
}

/// `None` when the file does not exist.
pub fn read_table(dir: &Path, file: &str) -> Result<Option<Table>> {
    let path = dir.join(file);
    if !path.is_file() {
        return Ok(None);
    }
    let mut rdr = csv::Reader::from_path(&path)?;
    let header = rdr.headers()?.iter().map(str::to_string).collect();
    let rows = rdr
        .records()
        .map(|r| r.map(|r| r.iter().map(str::to_string).collect()))
        .collect::<std::result::Result<_, _>>()?;
    Ok(Some(Table {
        file: file.to_string(),
        header,
        rows,
    }))
}

fn bars(t: &Table, label: &str, value: &str) -> Result<Vec<(String, f64)>> {
    let (l, v) = (t.col(label)?, t.col(value)?);
    (0..t.rows.len()).map(|i| Ok((t.rows[i][l].clone(), t.num(i, v)?))).collect()
}

/// Panels keyed by the `key` column, points `(x, y)`.
fn panels(t: &Table, key: &str, x: &str, y: &str) -> Result<Vec<(String, Vec<(f64, f64)>)>> {
    let (k, xi, yi) = (t.col(key)?, t.col(x)?, t.col(y)?);
    let mut m: BTreeMap<String, Vec<(f64, f64)>> = BTreeMap::new();
    for i in 0..t.rows.len() {
        m.entry(t.rows[i][k].clone()).or_default().push((t.num(i, xi)?, t.num(i, yi)?));
    }
    Ok(m.into_iter().collect())
}

/// Monthly cleared energy and net profit, from monthly.csv.
pub fn monthly_figures(dir: &Path) -> Result<Vec<(&'static str, String)>> {
    let Some(t) = read_table(dir, "monthly.csv")? else {
        return Ok(Vec::new());
    };
    Ok(vec![
        (
            "fig_monthly_energy.svg",
            plot::bar_chart("Cleared energy per month", "MWh", &bars(&t, "month", "cleared_mwh")?),
        ),
        (
            "fig_monthly_profit.svg",
            plot::bar_chart("Net profit per month", "$", &bars(&t, "month", "net_profit")?),
        ),
    ])
}

/// Price distance by hour of day, one panel per participant, from delta_by_hour.csv.
pub fn delta_figure(dir: &Path) -> Result<Option<(&'static str, String)>> {
    let Some(t) = read_table(dir, "delta_by_hour.csv")? else {
        return Ok(None);
    };
    let p = panels(&t, "participant_id", "hour", "delta")?;
    Ok(Some((
        "fig_delta_by_hour.svg",
        plot::scatter_panels("Price distance by hour", "hour", "delta ($/MWh)", (0.0, 23.0), &p),
    )))
}

/// Strategy shares per participant from shares.csv; omitted when the table is empty.
pub fn shares_figure(dir: &Path) -> Result<Option<(&'static str, String)>> {
    let Some(t) = read_table(dir, "shares.csv")? else {
        return Ok(None);
    };
    if t.rows.is_empty() {
        return Ok(None);
    }
    let series = ["price_forecasting", "self_scheduling", "opportunistic", "other"];
    let cols = series.iter().map(|s| t.col(s)).collect::<Result<Vec<_>>>()?;
    let id = t.col("participant_id")?;
    let cats: Vec<String> = t.rows.iter().map(|r| r[id].clone()).collect();
    let values = (0..t.rows.len())
        .map(|i| cols.iter().map(|&c| t.num(i, c)).collect())
        .collect::<Result<Vec<Vec<f64>>>>()?;
    Ok(Some((
        "fig_strategy_shares.svg",
        plot::stacked_bars("Strategy shares per participant", "share of bids", &cats, &series, &values),
    )))
}

/// Net profit of cleared backtest trades by hour, one panel per node, from hourly_profit.csv.
pub fn hourly_profit_figure(dir: &Path) -> Result<Option<(&'static str, String)>> {
    let Some(t) = read_table(dir, "hourly_profit.csv")? else {
        return Ok(None);
    };
    let p = panels(&t, "node_id", "hour", "net_profit")?;
    Ok(Some((
        "fig_hourly_profit.svg",
        plot::scatter_panels("Cleared trade profit by hour", "hour", "net profit ($)", (0.0, 23.0), &p),
    )))
}

fn md_table(s: &mut String, t: &Table) {
    let _ = writeln!(s, "| {} |", t.header.join(" | "));
    let _ = writeln!(s, "|{}", "---|".repeat(t.header.len()));
    for r in t.rows.iter().take(MAX_ROWS) {
        let _ = writeln!(s, "| {} |", r.join(" | "));
    }
    if t.rows.len() > MAX_ROWS {
        let _ = writeln!(s, "\n{} more rows in `{}`.", t.rows.len() - MAX_ROWS, t.file);
    }
    s.push('\n');
}

fn section(s: &mut String, dir: &Path, title: &str, file: &str) -> Result<()> {
    if let Some(t) = read_table(dir, file)? {
        let _ = writeln!(s, "### {title}\n\nFrom `{file}`.\n");
        if t.rows.is_empty() {
            s.push_str("No rows.\n\n");
        } else {
            md_table(s, &t);
        }
    }
    Ok(())
}

fn json(dir: &Path, file: &str) -> Result<Option<serde_json::Value>> {
    let path = dir.join(file);
    if !path.is_file() {
        return Ok(None);
    }
    Ok(Some(serde_json::from_slice(&std::fs::read(path)?)?))
}

fn figure(s: &mut String, dir: &Path, file: &str, caption: &str) {
    if dir.join(file).is_file() {
        let _ = writeln!(s, "![{caption}]({file})\n");
    }
}

/// report.md over whatever stage outputs exist in `dir`.
pub fn render_markdown(dir: &Path, seed: u64) -> Result<String> {
    let mut s = String::from("# Run report\n\n");
    let _ = writeln!(s, "Seed: {seed}\n");

    if let Some(v) = json(dir, "market_summary.json")? {
        s.push_str("## Market\n\n");
        for k in ["price_records", "bids", "cleared_bids", "dropped_unsettleable_bids", "participant_count", "active_node_count"] {
            let _ = writeln!(s, "- {k}: {}", v[k]);
        }
        s.push('\n');
        figure(&mut s, dir, "fig_monthly_energy.svg", "cleared energy per month");
        figure(&mut s, dir, "fig_monthly_profit.svg", "net profit per month");
        section(&mut s, dir, "Monthly totals", "monthly.csv")?;
    }

    if dir.join("delta_by_hour.csv").is_file() || dir.join("cluster_summary.json").is_file() {
        s.push_str("## Strategies\n\n");
        figure(&mut s, dir, "fig_delta_by_hour.svg", "price distance by hour");
        if let Some(v) = json(dir, "cluster_summary.json")? {
            let _ = writeln!(s, "- clustering status: {}", v["status"].as_str().unwrap_or("?"));
            let _ = writeln!(s, "- clusters: {}", v["n_clusters"]);
            if !v["noise"].is_null() {
                let _ = writeln!(s, "- noise bids: {}", v["noise"]);
            }
            if v["planted_agreement"].is_number() {
                let _ = writeln!(s, "- agreement with planted archetypes: {}", v["planted_agreement"]);
            }
            s.push('\n');
        }
        figure(&mut s, dir, "fig_strategy_shares.svg", "strategy shares");
        section(&mut s, dir, "Strategy shares", "shares.csv")?;
    }

    if dir.join("most_present.csv").is_file() {
        s.push_str("## Participants\n\n");
        section(&mut s, dir, "Most-present participants", "most_present.csv")?;
        section(&mut s, dir, "Bid characteristics", "characteristics.csv")?;
        section(&mut s, dir, "Cleared-to-submitted ratio by year", "yearly_csr.csv")?;
        section(&mut s, dir, "Performance", "performance.csv")?;
    }

    if let Some(t) = read_table(dir, "labels.csv")? {
        s.push_str("## Node labels\n\n");
        let (d, sp) = (t.col("demand_cb")?, t.col("supply_cb")?);
        let count = |c: usize| t.rows.iter().filter(|r| r[c] == "true").count();
        let _ = writeln!(
            s,
            "{} nodes scored, {} demand-labeled, {} supply-labeled.\n",
            t.rows.len(),
            count(d),
            count(sp)
        );
    }

    if let Some(v) = json(dir, "backtest_report.json")? {
        s.push_str("## Backtest\n\n");
        let sm = &v["summary"];
        for k in ["evaluation_days", "labeled_nodes", "cleared_days", "n_bids", "n_cleared", "net_profit", "csr", "lpr"] {
            let _ = writeln!(s, "- {k}: {}", sm[k]);
        }
        s.push('\n');
        section(&mut s, dir, "Cases", "cases.csv")?;
        figure(&mut s, dir, "fig_hourly_profit.svg", "cleared trade profit by hour");
    }
    Ok(s)
}
