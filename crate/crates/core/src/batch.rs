//! Running one pipeline over many documents.
//!
//! Documents are independent: each gets its own tracer, and the traces of
//! successful documents are merged in input order once every document is
//! done. With the `parallel` feature documents are spread over a rayon pool;
//! without it, or with one worker, they run one after the other.

use thiserror::Error;

use crate::pipeline::{Pipeline, PipelineError, Slots};
use crate::provenance::{ProvError, Tracer, VerbosityLevel};

#[derive(Debug, Error)]
pub enum BatchError {
    #[error("workers must be at least 1")]
    NoWorkers,
    #[error("cannot start worker pool: {0}")]
    Pool(String),
    #[error(transparent)]
    Prov(#[from] ProvError),
}

#[derive(Debug)]
pub struct BatchResult {
    /// One entry per input, in input order.
    pub outputs: Vec<Result<Slots, PipelineError>>,
    /// Merged trace of the documents that succeeded.
    pub tracer: Tracer,
}

impl BatchResult {
    pub fn failures(&self) -> impl Iterator<Item = (usize, &PipelineError)> {
        self.outputs
            .iter()
            .enumerate()
            .filter_map(|(i, r)| r.as_ref().err().map(|e| (i, e)))
    }
}

fn run_one(pipeline: &Pipeline, inputs: Slots, level: VerbosityLevel) -> (Result<Slots, PipelineError>, Tracer) {
    let mut tracer = Tracer::new(level);
    let out = pipeline.run(inputs, Some(&mut tracer));
    (out, tracer)
}

fn collect(
    level: VerbosityLevel,
    runs: Vec<(Result<Slots, PipelineError>, Tracer)>,
) -> Result<BatchResult, BatchError> {
    let mut tracer = Tracer::new(level);
    let mut outputs = Vec::with_capacity(runs.len());
    for (out, t) in runs {
        if out.is_ok() {
            tracer.merge(t)?;
        }
        outputs.push(out);
    }
    Ok(BatchResult { outputs, tracer })
}

/// Run documents one after the other on the calling thread.
pub fn run_batch_sequential(
    pipeline: &Pipeline,
    inputs: Vec<Slots>,
    level: VerbosityLevel,
) -> Result<BatchResult, BatchError> {
    let runs = inputs.into_iter().map(|i| run_one(pipeline, i, level)).collect();
    collect(level, runs)
}

/// Run documents on `workers` threads. Results and the merged trace are in
/// input order whatever the number of workers.
#[cfg(feature = "parallel")]
pub fn run_batch(
    pipeline: &Pipeline,
    inputs: Vec<Slots>,
    workers: usize,
    level: VerbosityLevel,
) -> Result<BatchResult, BatchError> {
    use rayon::prelude::*;

    match workers {
        0 => Err(BatchError::NoWorkers),
        1 => run_batch_sequential(pipeline, inputs, level),
        n => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(n)
                .build()
                .map_err(|e| BatchError::Pool(e.to_string()))?;
            let runs = pool.install(|| {
                inputs
                    .into_par_iter()
                    .map(|i| run_one(pipeline, i, level))
                    .collect()
            });
            collect(level, runs)
        }
    }
}

#[cfg(not(feature = "parallel"))]
pub fn run_batch(
    pipeline: &Pipeline,
    inputs: Vec<Slots>,
    workers: usize,
    level: VerbosityLevel,
) -> Result<BatchResult, BatchError> {
    if workers == 0 {
        return Err(BatchError::NoWorkers);
    }
    if workers > 1 {
        log::debug!("built without the parallel feature; running {workers} workers' load sequentially");
    }
    run_batch_sequential(pipeline, inputs, level)
}

#[cfg(test)]
mod tests {
    use std::collections::HashMap;

    use super::*;
    use crate::model::{Document, Metadata};
    use crate::pipeline::{PipelineSpec, PipelineStep, Registry, Value};
    use crate::provenance::build_graph;

    fn pipeline() -> Pipeline {
        let spec = PipelineSpec::new(
            "p",
            &["docs"],
            &["brat", "clean"],
            vec![
                PipelineStep::new("split_sentences", &["docs"], &["sentences"]),
                PipelineStep::new("deidentify", &["sentences"], &["clean"]),
                PipelineStep::new("match_dates", &["sentences"], &["dates"]),
                PipelineStep::new("emit_brat", &["docs", "dates"], &["brat"]),
            ],
        );
        Pipeline::compile(&spec, &Registry::with_builtins()).unwrap()
    }

    fn inputs(n: usize) -> Vec<Slots> {
        (0..n)
            .map(|i| {
                let text = format!("Vu le {}/03/2020 par Dr Martin. Revu le 2 avril 2021.", 1 + i % 28);
                HashMap::from([("docs".to_string(), vec![Value::Document(Document::new(text, Metadata::new()))])])
            })
            .collect()
    }

    fn brat(r: &BatchResult) -> Vec<String> {
        r.outputs
            .iter()
            .map(|o| match &o.as_ref().unwrap()["brat"][0] {
                Value::Text { text, .. } => text.clone(),
                _ => unreachable!(),
            })
            .collect()
    }

    #[test]
    fn workers_agree() {
        let p = pipeline();
        let seq = run_batch_sequential(&p, inputs(12), VerbosityLevel::Full).unwrap();
        let par = run_batch(&p, inputs(12), 4, VerbosityLevel::Full).unwrap();
        assert_eq!(brat(&seq), brat(&par));
        assert!(brat(&seq)[0].contains("\tdate "));
        let (g1, g4) = (build_graph(&seq.tracer).unwrap(), build_graph(&par.tracer).unwrap());
        assert_eq!(g1.counts(), g4.counts());
        assert!(g1.is_isomorphic(&g4));
    }

    #[test]
    fn failures_are_isolated() {
        let p = pipeline();
        let mut docs = inputs(3);
        docs[1].insert("docs".into(), vec![Value::text("not a document")]);
        let r = run_batch(&p, docs, 2, VerbosityLevel::Steps).unwrap();
        assert_eq!(r.failures().map(|(i, _)| i).collect::<Vec<_>>(), [1]);
        assert_eq!(r.outputs.iter().filter(|o| o.is_ok()).count(), 2);
        assert!(run_batch(&p, inputs(1), 0, VerbosityLevel::None).is_err());
    }
}
