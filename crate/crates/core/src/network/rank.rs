use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::ard::BusApiReport;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RankingRow {
    pub bus: u32,
    pub api: f64,
    pub branch: String,
    pub scr_proxy: f64,
    pub dominant_mode_hz: f64,
}

/// A pair ranked in opposite order by the two indicators: `stronger` has the
/// larger SCR proxy yet the larger API.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DiscordantPair {
    pub stronger: u32,
    pub weaker: u32,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Ranking {
    /// Sorted by descending API, ties by bus id.
    pub rows: Vec<RankingRow>,
    /// Rank correlation between API and grid weakness (`-scr_proxy`); 1 when
    /// the API ordering equals the SCR ordering.
    pub spearman: f64,
    pub discordant: Vec<DiscordantPair>,
}

impl Ranking {
    pub fn new(reports: &[BusApiReport], scr: &[f64]) -> Self {
        let mut rows: Vec<RankingRow> = reports
            .iter()
            .zip(scr)
            .map(|(r, &s)| {
                let (mode, api) = r.critical();
                RankingRow {
                    bus: r.bus_id,
                    api: r.bus_api,
                    branch: api.branch.as_str().to_string(),
                    scr_proxy: s,
                    dominant_mode_hz: mode.frequency_hz,
                }
            })
            .collect();
        rows.sort_by(|a, b| b.api.total_cmp(&a.api).then(a.bus.cmp(&b.bus)));
        let api: Vec<f64> = rows.iter().map(|r| r.api).collect();
        let weak: Vec<f64> = rows.iter().map(|r| -r.scr_proxy).collect();
        let spearman = spearman(&api, &weak);
        let mut discordant = Vec::new();
        for i in 0..rows.len() {
            for j in (i + 1)..rows.len() {
                let (a, b) = (&rows[i], &rows[j]);
                if a.api > b.api && a.scr_proxy > b.scr_proxy {
                    discordant.push(DiscordantPair {
                        stronger: a.bus,
                        weaker: b.bus,
                    });
                }
            }
        }
        Ranking {
            rows,
            spearman,
            discordant,
        }
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("bus,api,branch,scr_proxy,dominant_mode_hz\n");
        for r in &self.rows {
            let _ = writeln!(out, "{},{},{},{},{}", r.bus, r.api, r.branch, r.scr_proxy, r.dominant_mode_hz);
        }
        out
    }
}

/// Average ranks, ties sharing the mean position.
fn ranks(x: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..x.len()).collect();
    idx.sort_by(|&a, &b| x[a].total_cmp(&x[b]));
    let mut r = vec![0.0; x.len()];
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && x[idx[j + 1]] == x[idx[i]] {
            j += 1;
        }
        let avg = (i + j) as f64 / 2.0 + 1.0;
        for k in i..=j {
            r[idx[k]] = avg;
        }
        i = j + 1;
    }
    r
}

/// Spearman rank correlation (Pearson correlation of average ranks). NaN
/// when either input is constant.
pub fn spearman(x: &[f64], y: &[f64]) -> f64 {
    assert_eq!(x.len(), y.len());
    let (rx, ry) = (ranks(x), ranks(y));
    let n = rx.len() as f64;
    let (mx, my) = (rx.iter().sum::<f64>() / n, ry.iter().sum::<f64>() / n);
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in rx.iter().zip(&ry) {
        sxy += (a - mx) * (b - my);
        sxx += (a - mx) * (a - mx);
        syy += (b - my) * (b - my);
    }
    sxy / (sxx * syy).sqrt()
}
