use rayon::prelude::*;
use xprobe::crosstest::{
    check_maps, embedding_svg, kernel_pca_embed, matrix_row, write_embedding_csv, write_matrix_csv, CrossTestMatrix,
    MapSet,
};
use xprobe::saliency::CurveOptions;

use crate::commands::maps::maps_for;
use crate::config::MapSource;
use crate::context::Context;
use crate::error::CliError;
use crate::output::{write_atomic, write_text};

pub fn run(ctx: &Context) -> Result<(), CliError> {
    let options = CurveOptions {
        steps: ctx.config.saliency.steps,
        upsampling: ctx.config.saliency.upsampling,
    };
    let dataset_id = ctx.config.dataset_id.clone().unwrap_or_default();
    let names: Vec<String> = ctx.models.iter().map(|m| m.name().to_string()).collect();

    let mut maps = MapSet::new();
    for model in &ctx.models {
        for (subject, map) in ctx.subjects.iter().zip(maps_for(ctx, model)?) {
            maps.insert((model.name().to_string(), subject.id().to_string()), map);
        }
    }
    check_maps(&names, &maps, &ctx.subjects)?;

    // rows are independent; collect keeps evaluator order
    let rows = ctx.install(|| {
        ctx.models
            .par_iter()
            .map(|m| matrix_row(&ctx.scorer(m), &names, &maps, &ctx.subjects, &options, &dataset_id))
            .collect::<Result<Vec<_>, _>>()
    })?;
    let (ins, del) = rows.into_iter().unzip();
    let method = match &ctx.config.saliency.maps {
        MapSource::Randomized(_) => "randomized",
        MapSource::Files { .. } => "files",
    };
    let matrix = CrossTestMatrix {
        models: names,
        ins,
        del,
        dataset_id,
        map_method: method.to_string(),
    };
    let out = &ctx.config.output_dir;
    write_atomic(&out.join("crosstest_ins.csv"), |w| Ok(write_matrix_csv(w, &matrix.models, &matrix.ins)?))?;
    write_atomic(&out.join("crosstest_del.csv"), |w| Ok(write_matrix_csv(w, &matrix.models, &matrix.del)?))?;
    ctx.save_caches()?;

    let c = &ctx.config.crosstest;
    let embedding = kernel_pca_embed(&matrix, c.channel, c.kernel, c.dims)?;
    write_atomic(&out.join("embedding.csv"), |w| Ok(write_embedding_csv(w, &embedding)?))?;
    write_text(&out.join("embedding.svg"), &embedding_svg(&embedding))?;
    eprintln!("cross-tested {} models on {} images", matrix.models.len(), ctx.subjects.len());
    Ok(())
}
