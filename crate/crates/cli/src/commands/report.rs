use std::collections::BTreeMap;

use xprobe::msesearch::{read_mses_jsonl, MseRecord};
use xprobe::report::{
    aggregate, bar_chart_svg, export_sag_dot, line_chart_svg, percent_explained, write_stats_csv, write_stats_json,
    SagNodes, Series, SizeHistogram,
};
use xprobe::subexplain::{read_counts_csv, read_nodes_jsonl};

use crate::config::RunConfig;
use crate::dataset::image_ids;
use crate::error::CliError;
use crate::models::model_names;
use crate::output::{write_atomic, write_text};

/// Builds the report from files the other commands wrote. Loads no models.
pub fn run(config: &RunConfig) -> Result<(), CliError> {
    let images = image_ids(config)?;
    let grid_size = config.grid.rows * config.grid.cols;
    let max_n = config.report.max_n.unwrap_or(grid_size);
    let out = config.output_dir.join("report");
    let mut stats = Vec::new();
    let mut explained = Vec::new();
    let names = model_names(config)?;
    // one table needs one set of columns; models without counts get blanks
    let counted = names.iter().any(|m| config.output_dir.join(m).join("subexp_counts.csv").exists());
    let thresholds = if counted { config.count.thresholds.clone() } else { Vec::new() };

    for model in names {
        let dir = config.output_dir.join(&model);
        let mses = dir.join("mses.jsonl");
        if !mses.exists() {
            return Err(CliError::Config(format!("{} is missing; run `xprobe mse` first", mses.display())));
        }
        let records = read_mses_jsonl(&mses)?;
        let counts_path = dir.join("subexp_counts.csv");
        let row = if counts_path.exists() {
            aggregate(&model, &images, &records, &read_counts_csv(&counts_path)?, &thresholds)
        } else {
            let mut row = aggregate(&model, &images, &records, &[], &thresholds);
            row.sub_means.fill(None);
            row
        };
        stats.push(row);

        let hist = SizeHistogram::from_records(&records, grid_size);
        let freq: Vec<f64> = hist.frequencies.iter().map(|&f| f as f64).collect();
        write_text(
            &out.join(&model).join("size_hist.svg"),
            &bar_chart_svg(&format!("{model}: explanation sizes"), "patches", "explanations", &freq),
        )?;
        explained.push((model.clone(), percent_explained(&images, &records, max_n)));

        let nodes_path = dir.join("subexp_nodes.jsonl");
        if nodes_path.exists() {
            write_dots(config, &model, &records, &read_nodes_jsonl(&nodes_path)?)?;
        }
    }

    write_atomic(&out.join("mse_stats.csv"), |w| Ok(write_stats_csv(w, &stats)?))?;
    write_atomic(&out.join("mse_stats.json"), |w| Ok(write_stats_json(w, &stats)?))?;
    write_atomic(&out.join("percent_explained.csv"), |w| {
        write!(w, "n")?;
        for (model, _) in &explained {
            write!(w, ",{model}")?;
        }
        writeln!(w)?;
        for n in 0..max_n {
            write!(w, "{}", n + 1)?;
            for (_, curve) in &explained {
                write!(w, ",{}", curve[n])?;
            }
            writeln!(w)?;
        }
        Ok(())
    })?;
    let series: Vec<Series<'_>> = explained
        .iter()
        .map(|(model, curve)| Series {
            label: model,
            points: curve.iter().enumerate().map(|(i, v)| ((i + 1) as f64, *v)).collect(),
        })
        .collect();
    write_text(
        &out.join("percent_explained.svg"),
        &line_chart_svg("Images explained within n patches", "n", "% of images", &series),
    )?;
    eprintln!("report for {} models written to {}", stats.len(), out.display());
    Ok(())
}

fn write_dots(
    config: &RunConfig,
    model: &str,
    records: &[MseRecord],
    nodes: &BTreeMap<(String, u64), Vec<xprobe::subexplain::SubExplanationNode>>,
) -> Result<(), CliError> {
    let mut by_image: BTreeMap<&str, (Vec<MseRecord>, SagNodes)> = BTreeMap::new();
    for r in records {
        let entry = by_image.entry(r.image_id.as_str()).or_default();
        entry.0.push(r.clone());
        if let Some(n) = nodes.get(&(r.image_id.clone(), r.patches.bits())) {
            entry.1.insert(r.patches.bits(), n.clone());
        }
    }
    let dir = config.output_dir.join("report").join("dot").join(model);
    for (image, (roots, sag)) in by_image {
        let dot = export_sag_dot(image, &roots, &sag, config.report.max_children);
        write_text(&dir.join(format!("{image}.dot")), &dot)?;
    }
    Ok(())
}
