use std::collections::BTreeMap;

use xprobe::msesearch::MseRecord;
use xprobe::subexplain::{count_image, write_counts_csv, write_nodes_jsonl};

use crate::commands::mse::read_records;
use crate::context::Context;
use crate::error::CliError;
use crate::output::write_atomic;

pub fn run(ctx: &Context) -> Result<(), CliError> {
    let config = &ctx.config.count;
    for model in &ctx.models {
        let mut by_image: BTreeMap<String, Vec<MseRecord>> = BTreeMap::new();
        for record in read_records(ctx, model.name())? {
            by_image.entry(record.image_id.clone()).or_default().push(record);
        }
        if let Some(unknown) = by_image.keys().find(|id| !ctx.subjects.iter().any(|s| s.id() == id.as_str())) {
            return Err(CliError::Config(format!(
                "{}: explanations for image `{unknown}`, which is not in the dataset",
                model.name()
            )));
        }
        let scorer = ctx.scorer(model);
        let results = ctx.per_image(|_, subject| {
            let roots = by_image.get(subject.id()).cloned().unwrap_or_default();
            let (count, trees) = count_image(&scorer, subject, &roots, config)?;
            ctx.release(model, subject);
            Ok((roots, count, trees))
        })?;
        let counts: Vec<_> = results.iter().map(|(_, c, _)| c.clone()).collect();
        let roots: Vec<MseRecord> = results.iter().flat_map(|(r, _, _)| r.clone()).collect();
        let trees: Vec<_> = results.into_iter().flat_map(|(_, _, t)| t).collect();
        let dir = ctx.model_dir(model.name());
        write_atomic(&dir.join("subexp_counts.csv"), |w| Ok(write_counts_csv(w, config, &counts)?))?;
        write_atomic(&dir.join("subexp_nodes.jsonl"), |w| Ok(write_nodes_jsonl(w, &roots, &trees)?))?;
        eprintln!("{}: counted sub-explanations for {} images", model.name(), counts.len());
    }
    ctx.save_caches()
}
