use xprobe::oracle::Subject;
use xprobe::saliency::{encode_attribution, generate_randomized_map, load_attribution, AttributionMap, RandomizedMapConfig};
use xprobe::Error;

use crate::config::MapSource;
use crate::context::{derived_seed, Context};
use crate::error::CliError;
use crate::models::Model;

/// One map per image for `model` as generator, in dataset order. Generated
/// maps are also written under `<out>/maps/<model>/`.
pub fn maps_for(ctx: &Context, model: &Model) -> Result<Vec<AttributionMap>, CliError> {
    match &ctx.config.saliency.maps {
        MapSource::Randomized(base) => {
            let scorer = ctx.scorer(model);
            let maps = ctx.per_image(|_, subject| {
                let (class, _) = scorer.predicted_class(subject)?;
                let config = RandomizedMapConfig {
                    seed: derived_seed(ctx.config.seed ^ base.seed, model.name(), subject.id()),
                    ..*base
                };
                generate_randomized_map(&scorer, subject, class, &config)
            })?;
            let dir = ctx.config.output_dir.join("maps").join(model.name());
            for (subject, map) in ctx.subjects.iter().zip(&maps) {
                let path = dir.join(format!("{}.fmap", subject.id()));
                crate::output::write_atomic(&path, |w| Ok(w.write_all(&encode_attribution(map))?))?;
            }
            Ok(maps)
        }
        MapSource::Files { dir } => ctx
            .subjects
            .iter()
            .map(|s| load_map(dir, model.name(), s))
            .collect(),
    }
}

fn load_map(dir: &std::path::Path, generator: &str, subject: &Subject) -> Result<AttributionMap, CliError> {
    let base = dir.join(generator);
    for ext in ["fmap", "png"] {
        let path = base.join(format!("{}.{ext}", subject.id()));
        if path.is_file() {
            return Ok(load_attribution(&path)?.with_source(generator));
        }
    }
    Err(CliError::Runtime(Error::MissingMap {
        generator: generator.to_string(),
        image: subject.id().to_string(),
    }))
}
