//! Matplotlib script emission. Scripts embed the aggregated series and the
//! path of the CSV they came from; nothing is plotted in-process.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use super::suite::RunRow;
use crate::error::Result;

pub const GAP_SCRIPT: &str = "gap_vs_iteration.py";
pub const COST_SCRIPT: &str = "cost_vs_horizon.py";

fn py_list(v: &[f64]) -> String {
    let items: Vec<String> = v.iter().map(|x| if x.is_finite() { format!("{x:.6}") } else { "float('nan')".into() }).collect();
    format!("[{}]", items.join(", "))
}

fn first_seen<T: PartialEq + Clone>(items: impl Iterator<Item = T>) -> Vec<T> {
    let mut out: Vec<T> = Vec::new();
    for i in items {
        if !out.contains(&i) {
            out.push(i);
        }
    }
    out
}

/// Mean GAP per iteration for each (function, policy), in first-seen order.
pub fn mean_gap_curves(rows: &[RunRow]) -> Vec<(String, String, Vec<f64>)> {
    let keys = first_seen(rows.iter().map(|r| (r.function.clone(), r.policy.clone())));
    keys.into_iter()
        .map(|(f, p)| {
            let sel: Vec<&RunRow> = rows.iter().filter(|r| r.function == f && r.policy == p).collect();
            let last = sel.iter().map(|r| r.iteration).max().unwrap_or(0);
            let curve = (0..=last)
                .map(|it| {
                    let g: Vec<f64> = sel.iter().filter(|r| r.iteration == it).map(|r| r.gap).collect();
                    if g.is_empty() { f64::NAN } else { g.iter().sum::<f64>() / g.len() as f64 }
                })
                .collect();
            (f, p, curve)
        })
        .collect()
}

/// Mean proposal wall-clock per rollout horizon for each function.
pub fn mean_cost_by_horizon(rows: &[RunRow]) -> Vec<(String, Vec<(usize, f64)>)> {
    let functions = first_seen(rows.iter().map(|r| r.function.clone()));
    functions
        .into_iter()
        .map(|f| {
            let mut horizons: Vec<usize> = rows
                .iter()
                .filter(|r| r.function == f && r.wall_ms.is_some())
                .filter_map(|r| r.policy.strip_prefix("rollout-h").and_then(|h| h.parse().ok()))
                .collect();
            horizons.sort_unstable();
            horizons.dedup();
            let pts = horizons
                .into_iter()
                .map(|h| {
                    let name = format!("rollout-h{h}");
                    let ms: Vec<f64> =
                        rows.iter().filter(|r| r.function == f && r.policy == name).filter_map(|r| r.wall_ms).collect();
                    (h, ms.iter().sum::<f64>() / ms.len() as f64)
                })
                .collect();
            (f, pts)
        })
        .filter(|(_, pts): &(String, Vec<(usize, f64)>)| !pts.is_empty())
        .collect()
}

fn header(source: &str, title: &str) -> String {
    format!(
        "# Generated by `bench plots`; regenerate instead of editing.\n# {title}\n# source: {source}\n\
         import matplotlib\nmatplotlib.use(\"Agg\")\nimport matplotlib.pyplot as plt\n\nSOURCE = {source:?}\n"
    )
}

pub fn gap_script(rows: &[RunRow], source: &str) -> String {
    let mut s = header(source, "mean GAP against BO iteration, one curve per policy");
    let curves = mean_gap_curves(rows);
    if curves.is_empty() {
        s.push_str("# warning: the results contain no runs; the plot is empty\n");
    }
    s.push_str("CURVES = {\n");
    for f in first_seen(curves.iter().map(|c| c.0.clone())) {
        let _ = writeln!(s, "    {f:?}: {{");
        for (_, p, c) in curves.iter().filter(|c| c.0 == f) {
            let _ = writeln!(s, "        {p:?}: {},", py_list(c));
        }
        s.push_str("    },\n");
    }
    s.push_str(
        "}\n\nfig, axes = plt.subplots(1, max(len(CURVES), 1), figsize=(5 * max(len(CURVES), 1), 4), squeeze=False)\n\
         for ax, (function, curves) in zip(axes[0], CURVES.items()):\n\
         \x20   for policy, gaps in curves.items():\n\
         \x20       ax.plot(range(len(gaps)), gaps, marker=\"o\", markersize=3, label=policy)\n\
         \x20   ax.set_title(function)\n\
         \x20   ax.set_xlabel(\"iteration\")\n\
         \x20   ax.set_ylabel(\"mean GAP\")\n\
         \x20   ax.set_ylim(0, 1)\n\
         \x20   ax.legend()\n\
         fig.tight_layout()\n\
         fig.savefig(\"gap_vs_iteration.png\", dpi=150)\n",
    );
    s
}

pub fn cost_script(rows: &[RunRow], source: &str) -> String {
    let mut s = header(source, "mean proposal wall-clock against rollout horizon");
    let costs = mean_cost_by_horizon(rows);
    if costs.is_empty() {
        s.push_str("# warning: no timed rollout runs (run with --timing on); the plot is empty\n");
    }
    s.push_str("COSTS = {\n");
    for (f, pts) in &costs {
        let hs: Vec<String> = pts.iter().map(|p| p.0.to_string()).collect();
        let ms: Vec<f64> = pts.iter().map(|p| p.1).collect();
        let _ = writeln!(s, "    {f:?}: ([{}], {}),", hs.join(", "), py_list(&ms));
    }
    s.push_str(
        "}\n\nfig, ax = plt.subplots(figsize=(5, 4))\n\
         for function, (horizons, ms) in COSTS.items():\n\
         \x20   ax.plot(horizons, ms, marker=\"o\", label=function)\n\
         ax.set_xlabel(\"horizon h\")\n\
         ax.set_ylabel(\"mean proposal time [ms]\")\n\
         ax.set_yscale(\"log\")\n\
         if COSTS:\n\
         \x20   ax.legend()\n\
         fig.tight_layout()\n\
         fig.savefig(\"cost_vs_horizon.png\", dpi=150)\n",
    );
    s
}

/// Writes both scripts into `out_dir` and returns their paths.
pub fn emit_plots(rows: &[RunRow], source: &Path, out_dir: &Path) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(out_dir)?;
    let src = source.display().to_string();
    let gap = out_dir.join(GAP_SCRIPT);
    fs::write(&gap, gap_script(rows, &src))?;
    let cost = out_dir.join(COST_SCRIPT);
    fs::write(&cost, cost_script(rows, &src))?;
    Ok(vec![gap, cost])
}
