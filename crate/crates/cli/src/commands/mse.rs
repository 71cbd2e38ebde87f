use std::fs::File;

use xprobe::msesearch::{find_mses, write_mses_jsonl, MseRecord};
use xprobe::report::{aggregate, write_stats_csv};

use crate::context::Context;
use crate::error::CliError;
use crate::output::write_atomic;

pub fn run(ctx: &Context) -> Result<(), CliError> {
    let ids: Vec<String> = ctx.subjects.iter().map(|s| s.id().to_string()).collect();
    for model in &ctx.models {
        let scorer = ctx.scorer(model);
        let per_image = ctx.per_image(|_, subject| {
            let found = find_mses(&scorer, subject, &ctx.config.beam);
            ctx.release(model, subject);
            found
        })?;
        let records: Vec<MseRecord> = per_image.into_iter().flatten().collect();
        let dir = ctx.model_dir(model.name());
        write_atomic(&dir.join("mses.jsonl"), |w| Ok(write_mses_jsonl(w, &records)?))?;
        let stats = aggregate(model.name(), &ids, &records, &[], &[]);
        write_atomic(&dir.join("mse_stats.csv"), |w| Ok(write_stats_csv(w, &[stats])?))?;
        eprintln!("{}: {} explanations over {} images", model.name(), records.len(), ids.len());
    }
    ctx.save_caches()
}

pub fn read_records(ctx: &Context, model: &str) -> Result<Vec<MseRecord>, CliError> {
    let path = ctx.model_dir(model).join("mses.jsonl");
    if File::open(&path).is_err() {
        return Err(CliError::Config(format!(
            "{} is missing; run `xprobe mse` first",
            path.display()
        )));
    }
    Ok(xprobe::msesearch::read_mses_jsonl(&path)?)
}
