use std::path::PathBuf;

use rayon::prelude::*;
use sha2::{Digest, Sha256};
use xprobe::imaging::make_grid;
use xprobe::oracle::{Scorer, Subject};

use crate::config::RunConfig;
use crate::dataset;
use crate::error::CliError;
use crate::models::{load_models, Model};

/// Everything a scoring command needs: models with caches, prepared images
/// and the worker pool.
pub struct Context {
    pub config: RunConfig,
    pub models: Vec<Model>,
    pub subjects: Vec<Subject>,
    pool: rayon::ThreadPool,
}

impl Context {
    pub fn new(config: RunConfig) -> Result<Self, CliError> {
        let models = load_models(&config)?;
        let size = config.input_size;
        let grid = make_grid(size, size, config.grid.rows, config.grid.cols)?;
        let subjects = dataset::load(&config)?
            .images
            .into_iter()
            .map(|(id, image)| Subject::new(id, image, grid, config.baseline))
            .collect::<Result<Vec<_>, _>>()?;
        let mut pool = rayon::ThreadPoolBuilder::new();
        if let Some(jobs) = config.jobs {
            pool = pool.num_threads(jobs);
        }
        let pool = pool
            .build()
            .map_err(|e| CliError::Config(format!("cannot start {:?} workers: {e}", config.jobs)))?;
        Ok(Self {
            config,
            models,
            subjects,
            pool,
        })
    }

    pub fn scorer<'a>(&self, model: &'a Model) -> Scorer<'a> {
        Scorer::new(model.oracle.as_ref(), &model.cache)
    }

    /// Runs `f` over every image in parallel; results keep dataset order.
    pub fn per_image<T: Send>(
        &self,
        f: impl Fn(usize, &Subject) -> Result<T, xprobe::Error> + Sync,
    ) -> Result<Vec<T>, CliError> {
        Ok(self.pool.install(|| {
            self.subjects
                .par_iter()
                .enumerate()
                .map(|(i, s)| f(i, s))
                .collect::<Result<Vec<_>, _>>()
        })?)
    }

    pub fn install<T: Send>(&self, f: impl FnOnce() -> T + Send) -> T {
        self.pool.install(f)
    }

    pub fn model_dir(&self, model: &str) -> PathBuf {
        self.config.output_dir.join(model)
    }

    /// Frees cached entries for an image once a command is done with it,
    /// unless the cache is persisted.
    pub fn release(&self, model: &Model, subject: &Subject) {
        if self.config.cache_dir.is_none() {
            model.cache.evict_image(subject.digest());
        }
    }

    pub fn save_caches(&self) -> Result<(), CliError> {
        self.models.iter().try_for_each(Model::save_cache)
    }
}

/// Per-(model, image) seed derived from the run seed.
pub fn derived_seed(seed: u64, model: &str, image: &str) -> u64 {
    let mut h = Sha256::new();
    h.update(seed.to_le_bytes());
    h.update(model.as_bytes());
    h.update([0]);
    h.update(image.as_bytes());
    u64::from_le_bytes(h.finalize()[..8].try_into().expect("8 bytes"))
}
