use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use anyhow::{bail, Result};
use esmos_core::corpus::{corpus_stats, load_manifest, CorpusStats};
use esmos_core::ratings::read_ratings;
use esmos_core::stats::{
    bin_by_mos, group_scores, icc_2_1, krippendorff_alpha, kruskal_wallis, mos_table, studentized_range_critical,
    tukey_hsd, AlphaMetric, GroupBy, GroupStats, KwResult, RangeDf, RatingMatrix, TukeyResult,
};
use serde::Serialize;

use crate::report::{self, write_atomic, Outcome};
use crate::{AlphaKind, Grouping, StatsArgs};

#[derive(Serialize)]
struct Agreement {
    metric: AlphaMetric,
    n_raters: usize,
    n_groups: usize,
    krippendorff_alpha: Outcome<f64>,
    icc_2_1: Outcome<f64>,
}

#[derive(Serialize)]
struct Kruskal {
    group_by: GroupBy,
    n_groups: usize,
    #[serde(flatten)]
    result: Outcome<KwResult>,
}

#[derive(Serialize)]
struct Bin {
    bin: usize,
    groups: Vec<String>,
    n: usize,
    mean: f64,
}

#[derive(Serialize)]
struct Tukey {
    bins: Vec<Bin>,
    /// Critical q at the 0.05 level for this many bins.
    q_crit_05: Outcome<f64>,
    result: Outcome<TukeyResult>,
}

#[derive(Serialize)]
struct StatsReport {
    group_by: GroupBy,
    corpus: CorpusStats,
    mos: Vec<GroupStats>,
    agreement: Outcome<Agreement>,
    kruskal_wallis: Kruskal,
    tukey: Outcome<Tukey>,
}

fn grouping(g: Grouping) -> GroupBy {
    match g {
        Grouping::System => GroupBy::System,
        Grouping::Speaker => GroupBy::Speaker,
    }
}

pub fn run(args: StatsArgs, report_path: Option<&Path>) -> Result<()> {
    let manifest = load_manifest(&args.manifest)?;
    let ratings = read_ratings(&args.ratings)?;
    if ratings.is_empty() {
        bail!("{} contains no ratings", args.ratings.display());
    }
    let by = grouping(args.group_by);
    let metric = match args.alpha_metric {
        AlphaKind::Interval => AlphaMetric::Interval,
        AlphaKind::Ordinal => AlphaMetric::Ordinal,
    };

    let scores = group_scores(&ratings, &manifest, by)?;
    let mos = mos_table(&scores)?;

    let agreement = RatingMatrix::from_ratings(&ratings, &manifest, by)
        .map(|m| Agreement {
            metric,
            n_raters: m.n_raters(),
            n_groups: m.n_groups(),
            krippendorff_alpha: krippendorff_alpha(&m, metric).into(),
            icc_2_1: icc_2_1(&m).into(),
        })
        .into();

    let kw_by = grouping(args.kw_group_by);
    let kw_groups = group_scores(&ratings, &manifest, kw_by)?;
    let kruskal = Kruskal {
        group_by: kw_by,
        n_groups: kw_groups.len(),
        result: kruskal_wallis(&kw_groups.values().cloned().collect::<Vec<_>>()).into(),
    };

    let bins = bin_by_mos(&mos, args.bins);
    let tukey = bins
        .as_ref()
        .map(|assignment| {
            let mut members: Vec<(Vec<String>, Vec<f64>)> = vec![Default::default(); args.bins];
            for (group, &b) in assignment {
                members[b].0.push(group.clone());
                members[b].1.extend(&scores[group]);
            }
            let bins = members
                .iter()
                .enumerate()
                .map(|(bin, (groups, s))| Bin {
                    bin,
                    groups: groups.clone(),
                    n: s.len(),
                    mean: s.iter().sum::<f64>() / s.len() as f64,
                })
                .collect();
            let pooled: Vec<Vec<f64>> = members.into_iter().map(|(_, s)| s).collect();
            Tukey {
                bins,
                q_crit_05: studentized_range_critical(0.05, args.bins, RangeDf::Infinite).into(),
                result: tukey_hsd(&pooled).into(),
            }
        })
        .into();

    let plot_path = args.plot_csv.clone().unwrap_or_else(|| args.out.with_extension("csv"));
    let empty = BTreeMap::new();
    let bin_of = bins.as_ref().unwrap_or(&empty);
    let mut csv = String::new();
    let key = match by {
        GroupBy::System => "system",
        GroupBy::Speaker => "speaker",
    };
    writeln!(csv, "{key},mean,sd,bin")?;
    for g in &mos {
        let bin = bin_of.get(&g.group).map_or(String::new(), usize::to_string);
        writeln!(csv, "{},{},{},{bin}", csv_field(&g.group), g.mean, g.sd)?;
    }
    write_atomic(&plot_path, csv.as_bytes())?;

    let result = StatsReport {
        group_by: by,
        corpus: corpus_stats(&manifest, Some(&ratings)),
        mos,
        agreement,
        kruskal_wallis: kruskal,
        tukey,
    };
    report::write(report_path.unwrap_or(&args.out), "stats", &result)
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}
