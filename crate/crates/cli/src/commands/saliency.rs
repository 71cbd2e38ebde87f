use xprobe::imaging::Direction;
use xprobe::report::{line_chart_svg, Series};
use xprobe::saliency::{auc, calibrate_model, normalize_score, perturbation_curve, CurveOptions, PerturbationCurve};

use crate::commands::maps::maps_for;
use crate::context::Context;
use crate::error::CliError;
use crate::output::{write_atomic, write_text};

/// Self-evaluation: each model's own maps scored by the same model.
pub fn run(ctx: &Context) -> Result<(), CliError> {
    let options = CurveOptions {
        steps: ctx.config.saliency.steps,
        upsampling: ctx.config.saliency.upsampling,
    };
    let dataset_id = ctx.config.dataset_id.clone().unwrap_or_default();
    for model in &ctx.models {
        let maps = maps_for(ctx, model)?;
        let scorer = ctx.scorer(model);
        let calibration = ctx.install(|| calibrate_model(&scorer, &ctx.subjects, &dataset_id))?;
        let curves = ctx.per_image(|i, subject| {
            let (class, _) = scorer.predicted_class(subject)?;
            let ins = perturbation_curve(&scorer, subject, &maps[i], class, Direction::Insertion, &options)?;
            let del = perturbation_curve(&scorer, subject, &maps[i], class, Direction::Deletion, &options)?;
            ctx.release(model, subject);
            Ok((class, ins, del))
        })?;

        let dir = ctx.model_dir(model.name());
        write_atomic(&dir.join("saliency.csv"), |w| {
            let mut csv = csv::Writer::from_writer(w);
            csv.write_record(["image_id", "class", "ins_auc", "del_auc", "ins_norm", "del_norm"])?;
            for (subject, (class, ins, del)) in ctx.subjects.iter().zip(&curves) {
                let (a_ins, a_del) = (auc(ins), auc(del));
                csv.write_record([
                    subject.id().to_string(),
                    class.to_string(),
                    a_ins.to_string(),
                    a_del.to_string(),
                    normalize_score(a_ins, &calibration)?.to_string(),
                    normalize_score(a_del, &calibration)?.to_string(),
                ])?;
            }
            csv.flush()?;
            Ok(())
        })?;
        write_atomic(&dir.join("calibration.json"), |w| Ok(serde_json::to_writer_pretty(w, &calibration).map_err(xprobe::Error::from)?))?;

        let mean = |pick: fn(&(xprobe::oracle::ClassLabel, PerturbationCurve, PerturbationCurve)) -> &PerturbationCurve| {
            let steps = options.steps;
            (0..=steps)
                .map(|t| {
                    let m = curves.iter().map(|c| pick(c).confidences[t]).sum::<f64>() / curves.len() as f64;
                    (t as f64 / steps as f64, m)
                })
                .collect::<Vec<_>>()
        };
        let svg = line_chart_svg(
            &format!("{}: mean perturbation curves", model.name()),
            "fraction of pixels",
            "confidence",
            &[
                Series {
                    label: "insertion",
                    points: mean(|c| &c.1),
                },
                Series {
                    label: "deletion",
                    points: mean(|c| &c.2),
                },
            ],
        );
        write_text(&dir.join("curves.svg"), &svg)?;
        eprintln!("{}: scored {} maps", model.name(), curves.len());
    }
    ctx.save_caches()
}
