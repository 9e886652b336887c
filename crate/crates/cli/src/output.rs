use std::fmt::Write as _;
use std::path::Path;

use anyhow::{Context, Result};
use serde_json::Value;

/// Long-format curve table: one row per (series, n).
#[derive(Debug, Default, Clone)]
pub struct Curves {
    rows: Vec<(String, usize, f64, Option<f64>)>,
}

impl Curves {
    pub fn push(&mut self, series: &str, n: usize, value: f64, bound: Option<f64>) {
        self.rows.push((series.to_string(), n, value, bound));
    }

    pub fn series(&mut self, series: &str, ns: &[usize], values: &[f64], bounds: Option<&[f64]>) {
        for (i, (&n, &v)) in ns.iter().zip(values).enumerate() {
            self.push(series, n, v, bounds.and_then(|b| b.get(i).copied()));
        }
    }

    pub fn render(&self, hash: &str, seed: u64) -> String {
        let mut s = format!("# config_hash={hash} seed={seed}\nseries,n,value,bound\n");
        for (series, n, v, b) in &self.rows {
            let bound = b.map(|x| format!("{x:e}")).unwrap_or_default();
            let _ = writeln!(s, "{series},{n},{v:e},{bound}");
        }
        s
    }
}

pub fn write(dir: &Path, stem: &str, json: &Value, csv: Option<String>) -> Result<()> {
    std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    let json_path = dir.join(format!("{stem}.json"));
    let mut text = serde_json::to_string_pretty(json)?;
    text.push('\n');
    std::fs::write(&json_path, text).with_context(|| format!("writing {}", json_path.display()))?;
    if let Some(body) = csv {
        let p = dir.join(format!("{stem}.csv"));
        std::fs::write(&p, body).with_context(|| format!("writing {}", p.display()))?;
    }
    Ok(())
}
