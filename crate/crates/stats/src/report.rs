//! Analysis reports over a set of trials, as plain-text tables and CSV.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use crate::io::TrialRow;
use crate::taguchi::ResponseTable;
use crate::{
    anova_one_way, anova_two_way, moods_median, shapiro_wilk, taguchi_analyze, tukey_hsd, DisplayMode, Expertise,
    Haptics, Objective, OrthogonalArray, Result, Subscale,
};

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Report {
    pub text: String,
    pub csv: String,
}

/// The two trial metrics the analyses run over.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Metric {
    Blocks,
    Energy,
}

impl Metric {
    pub const ALL: [Metric; 2] = [Metric::Blocks, Metric::Energy];

    pub fn name(self) -> &'static str {
        match self {
            Metric::Blocks => "blocks transferred N",
            Metric::Energy => "energy per block E [J]",
        }
    }

    pub fn key(self) -> &'static str {
        match self {
            Metric::Blocks => "N",
            Metric::Energy => "E",
        }
    }

    /// More blocks is better, less energy is better.
    pub fn objective(self) -> Objective {
        match self {
            Metric::Blocks => Objective::LargerIsBetter,
            Metric::Energy => Objective::SmallerIsBetter,
        }
    }

    pub fn value(self, row: &TrialRow) -> Option<f64> {
        match self {
            Metric::Blocks => Some(row.blocks as f64),
            Metric::Energy => row.energy,
        }
    }
}

/// Configuration key sorted display, haptics, expertise.
type Config = (DisplayMode, Haptics, Expertise);

fn label((d, h, e): Config) -> String {
    format!("{d}-{h}-{e}")
}

fn by_config(rows: &[TrialRow], metric: Metric) -> BTreeMap<Config, Vec<f64>> {
    let mut map: BTreeMap<Config, Vec<f64>> = BTreeMap::new();
    for r in rows {
        if let Some(v) = metric.value(r) {
            map.entry((r.display, r.haptics, r.expertise)).or_default().push(v);
        }
    }
    map
}

fn response_table(out: &mut Report, metric: Metric, title: &str, design: &OrthogonalArray, table: &ResponseTable) {
    let _ = writeln!(out.text, "Response Table for {title} ({})", metric.name());
    let _ = write!(out.text, "{:<7}", "Level");
    for f in &design.factors {
        let _ = write!(out.text, "{f:>20}");
    }
    out.text.push('\n');
    for level in 0..2 {
        let _ = write!(out.text, "{:<7}", level + 1);
        for f in 0..design.factors.len() {
            let _ = write!(out.text, "{:>20.4}", table.levels[f][level]);
        }
        out.text.push('\n');
    }
    let _ = write!(out.text, "{:<7}", "Delta");
    for d in &table.delta {
        let _ = write!(out.text, "{d:>20.4}");
    }
    let _ = write!(out.text, "\n{:<7}", "Rank");
    for r in &table.rank {
        let _ = write!(out.text, "{r:>20}");
    }
    out.text.push_str("\n\n");
    for (f, name) in design.factors.iter().enumerate() {
        let _ = writeln!(
            out.csv,
            "{},{},{},{},{},{},{}",
            metric.key(),
            title,
            name,
            table.levels[f][0],
            table.levels[f][1],
            table.delta[f],
            table.rank[f]
        );
    }
}

/// L4 response tables (means, StDev, SNR) for N and E.
///
/// Trials from configurations outside the L4 array are ignored here.
pub fn taguchi_report(rows: &[TrialRow]) -> Result<Report> {
    let design = OrthogonalArray::l4();
    let mut out = Report { csv: "metric,table,factor,level1,level2,delta,rank\n".into(), ..Default::default() };
    for metric in Metric::ALL {
        let mut responses = vec![Vec::new(); design.runs()];
        for (config, values) in by_config(rows, metric) {
            if let Some(run) = OrthogonalArray::l4_run(config.0, config.1, config.2) {
                responses[run].extend(values);
            }
        }
        match taguchi_analyze(&design, &responses, metric.objective()) {
            Ok(result) => {
                response_table(&mut out, metric, "Means", &design, &result.means);
                if let Some(sd) = &result.stdevs {
                    response_table(&mut out, metric, "StDev", &design, sd);
                }
                response_table(&mut out, metric, "SNR", &design, &result.snr);
            }
            Err(e) => {
                let _ = writeln!(out.text, "Taguchi analysis of {} not available: {e}\n", metric.name());
            }
        }
    }
    Ok(out)
}

fn star(p: f64, alpha: f64) -> &'static str {
    if p < alpha {
        " *"
    } else {
        ""
    }
}

/// Normality checks, ANOVA per expertise stratum, between-strata ANOVA and
/// Tukey grouping over all configurations, for N and E.
pub fn anova_report(rows: &[TrialRow], alpha: f64) -> Result<Report> {
    let mut out = Report { csv: "metric,analysis,term,statistic,df1,df2,p\n".into(), ..Default::default() };
    for metric in Metric::ALL {
        let cells = by_config(rows, metric);
        let _ = writeln!(out.text, "== {} ==", metric.name());

        let _ = writeln!(out.text, "Shapiro-Wilk normality");
        for (&config, values) in &cells {
            match shapiro_wilk(values) {
                Ok(sw) => {
                    let _ = writeln!(out.text, "  {:<10} n={:<3} W={:.4} p={:.4}{}", label(config), values.len(), sw.w, sw.p, star(sw.p, alpha));
                    let _ = writeln!(out.csv, "{},shapiro,{},{},{},,{}", metric.key(), label(config), sw.w, values.len(), sw.p);
                }
                Err(e) => {
                    let _ = writeln!(out.text, "  {:<10} n={:<3} n/a ({e})", label(config), values.len());
                }
            }
        }

        for expertise in Expertise::LEVELS {
            let grid: Vec<Vec<Vec<f64>>> = DisplayMode::LEVELS
                .iter()
                .map(|&d| Haptics::LEVELS.iter().map(|&h| cells.get(&(d, h, expertise)).cloned().unwrap_or_default()).collect())
                .collect();
            match anova_two_way(&grid) {
                Ok(a) => {
                    let _ = writeln!(out.text, "Two-way ANOVA display x haptics, expertise {expertise}");
                    for (term, eff) in [("display", a.factor_a), ("haptics", a.factor_b), ("display*haptics", a.interaction)] {
                        let _ = writeln!(out.text, "  {term:<16} F({}, {})={:.3} p={:.4}{}", eff.df, a.df_error, eff.f, eff.p, star(eff.p, alpha));
                        let _ = writeln!(out.csv, "{},anova2_{expertise},{term},{},{},{},{}", metric.key(), eff.f, eff.df, a.df_error, eff.p);
                    }
                }
                Err(_) => {
                    let groups: Vec<(Config, Vec<f64>)> = cells
                        .iter()
                        .filter(|(c, _)| c.2 == expertise)
                        .map(|(&c, v)| (c, v.clone()))
                        .collect();
                    let values: Vec<Vec<f64>> = groups.iter().map(|g| g.1.clone()).collect();
                    if let Ok(a) = anova_one_way(&values) {
                        let names: Vec<String> = groups.iter().map(|g| label(g.0)).collect();
                        let _ = writeln!(
                            out.text,
                            "One-way ANOVA over {} (expertise {expertise})\n  F({}, {})={:.3} p={:.4}{}",
                            names.join(", "),
                            a.between.df,
                            a.df_error,
                            a.between.f,
                            a.between.p,
                            star(a.between.p, alpha)
                        );
                        let _ = writeln!(out.csv, "{},anova1_{expertise},configuration,{},{},{},{}", metric.key(), a.between.f, a.between.df, a.df_error, a.between.p);
                    }
                }
            }
        }

        let strata: Vec<Vec<f64>> = Expertise::LEVELS
            .iter()
            .map(|&e| cells.iter().filter(|(c, _)| c.2 == e).flat_map(|(_, v)| v.iter().copied()).collect())
            .collect();
        if let Ok(a) = anova_one_way(&strata) {
            let _ = writeln!(out.text, "Between-strata ANOVA (B vs E)\n  F({}, {})={:.3} p={:.4}{}", a.between.df, a.df_error, a.between.f, a.between.p, star(a.between.p, alpha));
            let _ = writeln!(out.csv, "{},anova1_strata,expertise,{},{},{},{}", metric.key(), a.between.f, a.between.df, a.df_error, a.between.p);
        }

        let configs: Vec<Config> = cells.keys().copied().collect();
        let groups: Vec<Vec<f64>> = cells.values().cloned().collect();
        if let Ok(a) = anova_one_way(&groups) {
            // harmonic mean of group sizes when unbalanced
            let n_h = groups.len() as f64 / groups.iter().map(|g| 1.0 / g.len() as f64).sum::<f64>();
            let n_eff = n_h.round().max(1.0) as usize;
            if let Ok(t) = tukey_hsd(&a.group_means, a.ms_error, a.df_error, n_eff, alpha) {
                let _ = writeln!(out.text, "Tukey grouping (alpha={alpha}, q={:.3}, HSD={:.4})", t.q_crit, t.hsd);
                let mut order: Vec<usize> = (0..configs.len()).collect();
                order.sort_by(|&i, &j| a.group_means[j].total_cmp(&a.group_means[i]));
                for i in order {
                    let _ = writeln!(out.text, "  {:<10} mean={:>10.4}  {}", label(configs[i]), a.group_means[i], t.letters[i]);
                    let _ = writeln!(out.csv, "{},tukey_group,{},{},,,{}", metric.key(), label(configs[i]), a.group_means[i], t.letters[i]);
                }
                for p in t.pairs.iter().filter(|p| p.significant) {
                    let _ = writeln!(out.text, "  {} vs {}: diff={:.4} p={:.4}", label(configs[p.i]), label(configs[p.j]), p.diff, p.p);
                    let _ = writeln!(out.csv, "{},tukey_pair,{} vs {},{},,,{}", metric.key(), label(configs[p.i]), label(configs[p.j]), p.diff, p.p);
                }
            }
        }
        out.text.push('\n');
    }
    Ok(out)
}

/// Mood's median test per adjusted TLX subscale across configurations.
pub fn tlx_report(rows: &[TrialRow]) -> Result<Report> {
    let mut out = Report { csv: "subscale,chi2,df,p\n".into(), ..Default::default() };
    let _ = writeln!(out.text, "Mood's median test on adjusted workload (weight x rating)");
    for sc in Subscale::ALL {
        let mut groups: BTreeMap<Config, Vec<f64>> = BTreeMap::new();
        for r in rows {
            if let Some(t) = r.tlx {
                groups
                    .entry((r.display, r.haptics, r.expertise))
                    .or_default()
                    .push(t.adjusted().adjusted[sc.index()]);
            }
        }
        let groups: Vec<Vec<f64>> = groups.into_values().collect();
        match moods_median(&groups) {
            Ok(m) => {
                let _ = writeln!(out.text, "  {sc}: chi2={:.3} df={} p={:.4}{}", m.chi2, m.df, m.p, star(m.p, 0.05));
                let _ = writeln!(out.csv, "{sc},{},{},{}", m.chi2, m.df, m.p);
            }
            Err(e) => {
                let _ = writeln!(out.text, "  {sc}: n/a ({e})");
            }
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::TlxResponse;

    fn synthetic() -> Vec<TrialRow> {
        let configs = [
            (DisplayMode::Screen, Haptics::Off, Expertise::Beginner, 2.0),
            (DisplayMode::Screen, Haptics::On, Expertise::Experienced, 5.0),
            (DisplayMode::MixedReality, Haptics::Off, Expertise::Experienced, 5.5),
            (DisplayMode::MixedReality, Haptics::On, Expertise::Beginner, 3.0),
            (DisplayMode::Screen, Haptics::Off, Expertise::Experienced, 4.5),
            (DisplayMode::MixedReality, Haptics::On, Expertise::Experienced, 6.0),
        ];
        let mut rows = Vec::new();
        for (ci, &(display, haptics, expertise, base)) in configs.iter().enumerate() {
            for rep in 0..5 {
                let jitter: f64 = [-1.0, 0.0, 1.0, 0.0, 1.0][rep];
                let blocks = (base + jitter).max(1.0) as usize;
                rows.push(TrialRow {
                    participant: format!("p{ci}{rep}"),
                    expertise,
                    display,
                    haptics,
                    duration: 80.0,
                    blocks,
                    energy: Some(100.0 + 10.0 * ci as f64 + 3.0 * rep as f64),
                    tlx: Some(TlxResponse::new([10.0 * rep as f64 + ci as f64; 6], [3, 3, 3, 2, 2, 2]).unwrap()),
                });
            }
        }
        rows
    }

    #[test]
    fn reports_render() {
        let rows = synthetic();
        let t = taguchi_report(&rows).unwrap();
        assert!(t.text.contains("Response Table for Means"));
        assert!(t.text.contains("Response Table for SNR"));
        assert_eq!(t.csv.lines().count(), 1 + 2 * 3 * 3);

        let a = anova_report(&rows, 0.05).unwrap();
        assert!(a.text.contains("Two-way ANOVA display x haptics, expertise E"));
        assert!(a.text.contains("One-way ANOVA over"));
        assert!(a.text.contains("Tukey grouping"));

        let m = tlx_report(&rows).unwrap();
        assert_eq!(m.csv.lines().count(), 7);
    }
}
