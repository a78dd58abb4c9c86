//! Acceptance run: one PASS/FAIL line per criterion, non-zero exit on any
//! failure.

#[path = "../../core/tests/support/span_oracle.rs"]
mod span_oracle;

use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};
use std::fs;
use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use cliniflow::batch::{run_batch, run_batch_sequential};
use cliniflow::eval::{align_entities, score, MatchSpec, Scores};
use cliniflow::io::{canonicalize_brat, emit_brat, parse_brat, ConvertError};
use cliniflow::model::{Annotation, Document, Entity, Metadata};
use cliniflow::pipeline::{Pipeline, PipelineSpec, PipelineStep, Registry, Slots, Value};
use cliniflow::provenance::{build_graph, export_prov, parse_prov_json, ExportFormat, GraphCounts, Tracer, VerbosityLevel};
use cliniflow::span::Span;
use cliniflow_cli::run_cli;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::json;

type Outcome = Result<String, String>;

fn root() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../..")
}

fn demo() -> PathBuf {
    root().join("demo")
}

fn p(path: &Path) -> &str {
    path.to_str().expect("utf-8 path")
}

fn cli(args: &[&str]) -> (i32, String, String) {
    let (mut out, mut err) = (Vec::new(), Vec::new());
    let mut argv = vec!["cliniflow"];
    argv.extend(args);
    let code = run_cli(argv, &mut out, &mut err);
    (code, String::from_utf8_lossy(&out).into_owned(), String::from_utf8_lossy(&err).into_owned())
}

fn demo_documents() -> Vec<(String, Document)> {
    let mut files: Vec<PathBuf> = fs::read_dir(demo().join("corpus"))
        .expect("demo corpus")
        .map(|e| e.unwrap().path())
        .filter(|p| p.extension().is_some_and(|x| x == "txt"))
        .collect();
    files.sort();
    files
        .iter()
        .map(|f| {
            let stem = f.file_stem().unwrap().to_string_lossy().into_owned();
            (stem, Document::new(fs::read_to_string(f).unwrap(), Metadata::new()))
        })
        .collect()
}

fn doc_slots(key: &str, doc: &Document) -> Slots {
    HashMap::from([(key.to_string(), vec![Value::Document(doc.clone())])])
}

fn dictionary_step(input: &str, output: &str) -> PipelineStep {
    PipelineStep::new("match_dictionary", &[input], &[output])
        .with_params(json!({"dictionary_path": p(&demo().join("drugs.csv"))}))
}

// 1. span algebra against the character-provenance oracle
fn span_oracle() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed);
    let (mut steps, mut failures) = (0, Vec::new());
    for i in 0..10_000 {
        match span_oracle::run_sequence(&mut rng, 200, 20) {
            Ok(n) => steps += n,
            Err(e) => failures.push(format!("sequence {i}: {e}")),
        }
    }
    let secs = start.elapsed().as_secs_f64();
    let detail = format!("10000 sequences, {steps} steps, {} failures, {secs:.1} s", failures.len());
    if failures.is_empty() && secs < 60.0 {
        Ok(detail)
    } else {
        Err(format!("{detail}; first: {}", failures.first().map_or("-", String::as_str)))
    }
}

// 2. entities found on de-identified text still slice the raw document
fn non_destructive() -> Outcome {
    let spec = PipelineSpec::new(
        "preprocess_then_ner",
        &["docs"],
        &["clean", "drugs"],
        vec![
            PipelineStep::new("split_sentences", &["docs"], &["sentences"]),
            PipelineStep::new("deidentify", &["sentences"], &["clean"]),
            dictionary_step("clean", "drugs"),
        ],
    );
    let pipeline = Pipeline::compile(&spec, &Registry::with_builtins()).map_err(|e| e.to_string())?;
    let (mut checked, mut altered, mut mismatches) = (0, 0, Vec::new());
    for (stem, doc) in demo_documents() {
        let out = pipeline.run(doc_slots("docs", &doc), None).map_err(|e| format!("{stem}: {e}"))?;
        altered += out["clean"]
            .iter()
            .filter_map(Value::as_annotation)
            .filter_map(Annotation::as_segment)
            .filter(|s| s.has_modified_span())
            .count();
        for v in &out["drugs"] {
            let Some(e) = v.as_annotation().and_then(Annotation::as_segment) else { continue };
            if e.has_modified_span() {
                continue;
            }
            checked += 1;
            let raw = doc.slice(&e.normalized_spans(), "");
            if raw != e.text {
                mismatches.push(format!("{stem}: {:?} vs {raw:?}", e.text));
            }
        }
    }
    let detail = format!("{checked} entities checked, {altered} de-identified sentences, {} mismatches", mismatches.len());
    if mismatches.is_empty() && checked > 0 && altered > 0 {
        Ok(detail)
    } else {
        Err(format!("{detail} {mismatches:?}"))
    }
}

fn fixture_dir(kind: &str) -> PathBuf {
    root().join("crates/core/tests/fixtures/brat").join(kind)
}

fn line_of(e: &ConvertError) -> Option<usize> {
    match e {
        ConvertError::MalformedLine { line, .. } | ConvertError::SurfaceMismatch { line, .. } => Some(*line),
        _ => None,
    }
}

// 3. brat emit(parse(x)) == canonical(x); malformed files fail on the right line
fn brat_round_trip() -> Outcome {
    let mut anns: Vec<PathBuf> = fs::read_dir(fixture_dir("valid"))
        .map_err(|e| e.to_string())?
        .map(|e| e.unwrap().path())
        .filter(|p| p.extension().is_some_and(|x| x == "ann"))
        .collect();
    anns.sort();
    let mut bad = Vec::new();
    for ann_path in &anns {
        let ann = fs::read_to_string(ann_path).unwrap();
        let text = fs::read_to_string(ann_path.with_extension("txt")).unwrap();
        let ok = parse_brat(&ann, &text)
            .and_then(|d| emit_brat(&Document::new(text.as_str(), Metadata::new()), &d.annotations))
            .is_ok_and(|out| out == canonicalize_brat(&ann));
        if !ok {
            bad.push(ann_path.file_name().unwrap().to_string_lossy().into_owned());
        }
    }
    let expected = fs::read_to_string(fixture_dir("malformed").join("expected.tsv")).map_err(|e| e.to_string())?;
    let mut rejected = 0;
    for l in expected.lines() {
        let (stem, line) = l.split_once('\t').ok_or("bad expected.tsv")?;
        let line: usize = line.parse().map_err(|_| "bad expected.tsv")?;
        let d = fixture_dir("malformed");
        let ann = fs::read_to_string(d.join(format!("{stem}.ann"))).unwrap();
        let text = fs::read_to_string(d.join(format!("{stem}.txt"))).unwrap();
        match parse_brat(&ann, &text) {
            Err(e) if line_of(&e) == Some(line) => rejected += 1,
            other => bad.push(format!("{stem}: {other:?}")),
        }
    }
    let detail = format!("{}/{} valid files identical, {rejected}/10 malformed rejected on the expected line", anns.len() - bad.len().min(anns.len()), anns.len());
    if bad.is_empty() && anns.len() == 30 && rejected == 10 {
        Ok(detail)
    } else {
        Err(format!("{detail}; {bad:?}"))
    }
}

// 4. orange emits .ann files; black scores both matchers; dictionary wins
fn demo_runs(tmp: &Path) -> Outcome {
    let start = Instant::now();
    let corpus = demo().join("corpus");
    let n_docs = demo_documents().len();
    let orange_out = tmp.join("demo/orange");
    let (code, _, err) = cli(&[
        "run", "--pipeline-path", p(&demo().join("orange.json")), "--input-dir", p(&corpus), "--output-dir", p(&orange_out),
    ]);
    if code != 0 {
        return Err(format!("orange run exited {code}: {err}"));
    }
    let n_ann = fs::read_dir(&orange_out).map_err(|e| e.to_string())?.count();
    let black_out = tmp.join("demo/black");
    let (code, _, err) = cli(&[
        "run", "--pipeline-path", p(&demo().join("black.json")), "--input-dir", p(&corpus), "--output-dir", p(&black_out),
    ]);
    if code != 0 {
        return Err(format!("black run exited {code}: {err}"));
    }
    let json_out = tmp.join("demo/comparison.json");
    let (code, table, err) = cli(&[
        "eval",
        "--pred-dir", p(&black_out.join("dictionary")),
        "--pred-dir", p(&black_out.join("regex")),
        "--ref-dir", p(&demo().join("ref")),
        "--text-dir", p(&corpus),
        "--json-out", p(&json_out),
    ]);
    if code != 0 {
        return Err(format!("eval exited {code}: {err}"));
    }
    let secs = start.elapsed().as_secs_f64();
    let v: serde_json::Value = serde_json::from_str(&fs::read_to_string(&json_out).unwrap()).map_err(|e| e.to_string())?;
    let (fd, fr) = (v["a"]["micro"]["f1"].as_f64().unwrap_or(0.0), v["b"]["micro"]["f1"].as_f64().unwrap_or(1.0));
    println!("{table}");
    let detail = format!(
        "{n_ann} .ann files for {n_docs} documents; micro-F1 dictionary {fd:.4} vs regex {fr:.4}; {secs:.2} s"
    );
    if n_docs >= 20 && n_ann == n_docs && fd > fr && table.contains("winner: dictionary") && secs < 10.0 {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn random_entities(rng: &mut ChaCha8Rng) -> Vec<Entity> {
    let n = rng.gen_range(0..12);
    (0..n)
        .map(|_| {
            let label = *["Drug", "Date", "Dose"].choose(rng).unwrap();
            let mut ranges = Vec::new();
            let mut at = rng.gen_range(0..80);
            for _ in 0..rng.gen_range(1..=2) {
                let len = rng.gen_range(1..10);
                ranges.push((at, at + len));
                at += len + rng.gen_range(1..5);
            }
            let spans: Vec<Span> = ranges.iter().map(|&(s, e)| Span::original(s, e)).collect();
            let len: usize = ranges.iter().map(|(s, e)| e - s).sum();
            Entity::new(label, "x".repeat(len), spans).unwrap()
        })
        .collect()
}

fn entity(label: &str, s: usize, e: usize) -> Entity {
    Entity::new(label, "x".repeat(e - s), vec![Span::original(s, e)]).unwrap()
}

// 5. metric arithmetic and properties
fn evaluation() -> Outcome {
    let refs = vec![entity("Drug", 0, 8), entity("Drug", 20, 28), entity("Dose", 30, 36)];
    let preds = vec![entity("Drug", 0, 8), entity("Drug", 20, 28), entity("Drug", 40, 45)];
    let m = score(&align_entities(&preds, &refs, &MatchSpec::exact())).micro;
    let two_thirds = 2.0 / 3.0;
    if (m.tp, m.fp, m.fn_) != (2, 1, 1) || [m.precision, m.recall, m.f1].iter().any(|v| (v - two_thirds).abs() > 1e-9) {
        return Err(format!("constructed corpus scored {m:?}"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let specs = [MatchSpec::exact(), MatchSpec::overlap(0.5).unwrap(), MatchSpec::overlap(0.2).unwrap().label_sensitive(false)];
    for i in 0..1000 {
        let (a, b) = (random_entities(&mut rng), random_entities(&mut rng));
        let spec = &specs[i % specs.len()];
        let ab = score(&align_entities(&a, &b, spec)).micro;
        let ba = score(&align_entities(&b, &a, spec)).micro;
        if ab.precision != ba.recall || ab.recall != ba.precision || ab.f1 != ba.f1 {
            return Err(format!("symmetry broken on set {i}: {ab:?} / {ba:?}"));
        }
        let selfm = align_entities(&a, &a, &MatchSpec::exact());
        let s: Scores = score(&selfm).micro;
        if selfm.matches.len() != a.len() || (!a.is_empty() && (s.precision, s.recall, s.f1) != (1.0, 1.0, 1.0)) {
            return Err(format!("self-match broken on set {i}: {s:?}"));
        }
    }
    Ok("tp=2 fp=1 fn=1 gives p=r=f1=2/3; symmetry and self-match hold on 1000 random sets".into())
}

fn orange_spec(extra_outputs: &[&str]) -> PipelineSpec {
    let mut spec = PipelineSpec::load(&demo().join("orange.json")).expect("orange config");
    spec.outputs.extend(extra_outputs.iter().map(|s| s.to_string()));
    spec
}

fn compile_demo(spec: &PipelineSpec) -> Result<Pipeline, String> {
    let mut reg = Registry::with_builtins();
    reg.set_base_dir(demo());
    Pipeline::compile(spec, &reg).map_err(|e| e.to_string())
}

/// Entity, activity and edge counts straight from the trace records.
fn recount(tracer: &Tracer) -> GraphCounts {
    let recs = tracer.records();
    let generator: HashMap<&str, &str> = recs.iter().map(|r| (r.data_item_id.as_str(), r.activity_id.as_str())).collect();
    let mut entities = HashSet::new();
    let (mut used, mut generated, mut derived, mut informed) = (HashSet::new(), HashSet::new(), HashSet::new(), HashSet::new());
    for r in recs {
        entities.insert(r.data_item_id.as_str());
        generated.insert((r.data_item_id.as_str(), r.activity_id.as_str()));
        for s in &r.source_ids {
            entities.insert(s.as_str());
            used.insert((r.activity_id.as_str(), s.as_str()));
            derived.insert((r.data_item_id.as_str(), s.as_str()));
            if let Some(&g) = generator.get(s.as_str()) {
                if g != r.activity_id {
                    informed.insert((r.activity_id.as_str(), g));
                }
            }
        }
    }
    GraphCounts {
        entities: entities.len(),
        activities: tracer.activities().count(),
        used: used.len(),
        generated: generated.len(),
        derived: derived.len(),
        informed: informed.len(),
    }
}

// 6. provenance graph of a full-verbosity run
fn provenance() -> Outcome {
    let pipeline = compile_demo(&orange_spec(&["drugs_context"]))?;
    let docs: Vec<Slots> = demo_documents().iter().map(|(_, d)| doc_slots("docs", d)).collect();
    let batch = run_batch(&pipeline, docs, 2, VerbosityLevel::Full).map_err(|e| e.to_string())?;
    let mut outputs = Vec::new();
    for o in &batch.outputs {
        let slots = o.as_ref().map_err(|e| e.to_string())?;
        outputs.extend(slots["drugs_context"].iter().chain(&slots["brat"]).map(|v| v.id().to_owned()));
    }
    let graph = build_graph(&batch.tracer).map_err(|e| e.to_string())?;
    let exported = export_prov(&graph, ExportFormat::ProvJson);
    let parsed = parse_prov_json(&exported).map_err(|e| e.to_string())?;
    parsed.topological_order().map_err(|e| format!("exported graph: {e}"))?;

    let json: serde_json::Value = serde_json::from_str(&exported).map_err(|e| e.to_string())?;
    let mut gen_count: HashMap<String, usize> = HashMap::new();
    for rec in json["wasGeneratedBy"].as_object().ok_or("no wasGeneratedBy")?.values() {
        let ent = rec["prov:entity"].as_str().ok_or("wasGeneratedBy without entity")?;
        *gen_count.entry(ent.trim_start_matches("cf:").to_string()).or_default() += 1;
    }
    if let Some(o) = outputs.iter().find(|o| gen_count.get(o.as_str()).copied() != Some(1)) {
        return Err(format!("output {o} has {:?} wasGeneratedBy edges", gen_count.get(o.as_str())));
    }
    let (got, want) = (parsed.counts(), recount(&batch.tracer));
    if got != want {
        return Err(format!("exported counts {got:?} differ from recount {want:?}"));
    }
    let steps = build_graph(&batch.tracer.project(VerbosityLevel::Steps).map_err(|e| e.to_string())?)
        .map_err(|e| e.to_string())?;
    let full_flat = graph.flatten();
    let full_entities: BTreeSet<&String> = full_flat.entities.iter().collect();
    let steps_flat = steps.flatten();
    if let Some(e) = steps_flat.entities.iter().find(|e| !full_entities.contains(e)) {
        return Err(format!("steps-level entity {e} missing from the full graph"));
    }
    Ok(format!(
        "acyclic; {} outputs with one wasGeneratedBy each; counts {} entities / {} activities / {} edges match; steps graph {} entities within full {}",
        outputs.len(),
        got.entities,
        got.activities,
        got.used + got.generated + got.derived + got.informed,
        steps_flat.entities.len(),
        full_entities.len()
    ))
}

fn read_dir_bytes(dir: &Path) -> BTreeMap<String, Vec<u8>> {
    fs::read_dir(dir)
        .map(|rd| {
            rd.map(|e| e.unwrap().path())
                .map(|p| (p.file_name().unwrap().to_string_lossy().into_owned(), fs::read(&p).unwrap()))
                .collect()
        })
        .unwrap_or_default()
}

// 7. repeated and parallel runs agree
fn determinism(tmp: &Path) -> Outcome {
    let corpus = demo().join("corpus");
    let mut outs = Vec::new();
    let mut graphs = Vec::new();
    for (name, workers) in [("w1a", "1"), ("w1b", "1"), ("w4", "4")] {
        let out = tmp.join("det").join(name);
        let prov = tmp.join("det").join(format!("{name}.prov.json"));
        let (code, _, err) = cli(&[
            "run", "--pipeline-path", p(&demo().join("orange.json")), "--input-dir", p(&corpus),
            "--output-dir", p(&out), "--workers", workers, "--prov-level", "full", "--prov-out", p(&prov),
        ]);
        if code != 0 {
            return Err(format!("{name} exited {code}: {err}"));
        }
        outs.push(read_dir_bytes(&out));
        graphs.push(parse_prov_json(&fs::read_to_string(&prov).unwrap()).map_err(|e| e.to_string())?);
    }
    if outs[0].is_empty() || outs[0] != outs[1] || outs[0] != outs[2] {
        return Err("annotation outputs differ between runs".into());
    }
    if !graphs[0].is_isomorphic(&graphs[1]) || !graphs[0].is_isomorphic(&graphs[2]) {
        return Err("provenance graphs are not isomorphic".into());
    }

    // same check through the library, including a nested pipeline
    let black = compile_demo(&PipelineSpec::load(&demo().join("black.json")).map_err(|e| e.to_string())?)?;
    let docs: Vec<Slots> = demo_documents().iter().map(|(_, d)| doc_slots("docs", d)).collect();
    let seq = run_batch_sequential(&black, docs.clone(), VerbosityLevel::Full).map_err(|e| e.to_string())?;
    let par = run_batch(&black, docs, 4, VerbosityLevel::Full).map_err(|e| e.to_string())?;
    let texts = |r: &cliniflow::batch::BatchResult| -> Vec<String> {
        r.outputs
            .iter()
            .flat_map(|o| {
                let s = o.as_ref().unwrap();
                ["dictionary", "regex"].map(|k| match &s[k][0] {
                    Value::Text { text, .. } => text.clone(),
                    _ => String::new(),
                })
            })
            .collect()
    };
    let (g1, g4) = (
        build_graph(&seq.tracer).map_err(|e| e.to_string())?,
        build_graph(&par.tracer).map_err(|e| e.to_string())?,
    );
    if texts(&seq) != texts(&par) || !g1.is_isomorphic(&g4) {
        return Err("nested pipeline differs between 1 and 4 workers".into());
    }
    Ok(format!(
        "{} files byte-identical over 2 sequential runs and 4 workers; provenance graphs isomorphic (incl. nested)",
        outs[0].len()
    ))
}

/// Annotation content without ids.
fn shape(values: &[Value]) -> Vec<String> {
    values
        .iter()
        .map(|v| match v {
            Value::Annotation(Annotation::Segment(s) | Annotation::Entity(s)) => {
                let attrs: Vec<String> = s.attributes.iter().map(|a| format!("{}={}", a.label, a.value)).collect();
                format!("{}|{}|{}|{:?}|{}", v.kind(), s.label, s.text, s.spans, attrs.join(","))
            }
            Value::Annotation(Annotation::Relation(r)) => format!("relation|{}", r.label),
            Value::Text { text, .. } => format!("text|{text}"),
            Value::Document(d) => format!("document|{}", d.text()),
        })
        .collect()
}

fn random_document(rng: &mut ChaCha8Rng, pool: &[String]) -> String {
    let filler = ["Dr Martin", "12/03/2020", "3 mars 2021", "01 23 45 67 89", "sans", "pas de", "aspirine", "Héparine", "toux", "\n", "mg", "!", "?"];
    let mut parts = Vec::new();
    for _ in 0..rng.gen_range(1..8) {
        if rng.gen_bool(0.6) {
            parts.push(pool.choose(rng).unwrap().clone());
        } else {
            parts.push(filler.choose(rng).unwrap().to_string());
        }
    }
    parts.join(if rng.gen_bool(0.5) { " " } else { ". " })
}

// 8. nesting shared preprocessing changes nothing
fn composition() -> Outcome {
    let preprocess = PipelineSpec::new(
        "preprocess",
        &["docs"],
        &["clean"],
        vec![
            PipelineStep::new("split_sentences", &["docs"], &["sentences"]),
            PipelineStep::new("deidentify", &["sentences"], &["clean"]),
        ],
    );
    let tail = |clean: &str| {
        vec![
            dictionary_step(clean, "drugs"),
            PipelineStep::new("detect_context", &[clean, "drugs"], &["drugs_ctx"]),
            PipelineStep::new("match_dates", &[clean], &["dates"]),
        ]
    };
    let mut nested = PipelineSpec::new("nested", &["docs"], &["clean", "drugs_ctx", "dates"], vec![PipelineStep::new("preprocess", &["docs"], &["clean"])]);
    nested.steps.extend(tail("clean"));
    nested.pipelines.push(preprocess.clone());
    let mut flat = PipelineSpec::new("flat", &["docs"], &["clean", "drugs_ctx", "dates"], preprocess.steps.clone());
    flat.steps.extend(tail("clean"));
    let (nested, flat) = (compile_demo(&nested)?, compile_demo(&flat)?);

    let pool: Vec<String> = demo_documents()
        .iter()
        .flat_map(|(_, d)| d.text().split(". ").map(str::to_owned).collect::<Vec<_>>())
        .collect();
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let mut compared = 0;
    for i in 0..100 {
        let doc = Document::new(random_document(&mut rng, &pool), Metadata::new());
        let a = flat.run(doc_slots("docs", &doc), None).map_err(|e| format!("doc {i} flat: {e}"))?;
        let b = nested.run(doc_slots("docs", &doc), None).map_err(|e| format!("doc {i} nested: {e}"))?;
        for key in ["clean", "drugs_ctx", "dates"] {
            if shape(&a[key]) != shape(&b[key]) {
                return Err(format!("doc {i}: output {key} differs"));
            }
            compared += a[key].len();
        }
    }
    Ok(format!("100 random documents, {compared} output items structurally identical"))
}

fn main() {
    let tmp = tempfile::tempdir().expect("temp dir");
    let criteria: Vec<(&str, Box<dyn Fn() -> Outcome>)> = vec![
        ("span algebra oracle", Box::new(span_oracle)),
        ("non-destructive end-to-end", Box::new(non_destructive)),
        ("brat round trip", Box::new(brat_round_trip)),
        ("pipeline reproduction", Box::new(|| demo_runs(tmp.path()))),
        ("evaluation arithmetic", Box::new(evaluation)),
        ("provenance graph", Box::new(provenance)),
        ("determinism and parallel safety", Box::new(|| determinism(tmp.path()))),
        ("composition equivalence", Box::new(composition)),
    ];
    let mut failed = 0;
    let mut lines = Vec::new();
    for (i, (name, check)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let result = check();
        let took = start.elapsed();
        let line = match result {
            Ok(d) => format!("PASS criterion {}: {name}: {d} [{}]", i + 1, fmt_time(took)),
            Err(d) => {
                failed += 1;
                format!("FAIL criterion {}: {name}: {d} [{}]", i + 1, fmt_time(took))
            }
        };
        println!("{line}");
        lines.push(line);
    }
    println!("\nsummary:");
    for l in &lines {
        println!("{}", l.split(": ").take(2).collect::<Vec<_>>().join(": "));
    }
    if failed > 0 {
        std::process::exit(1);
    }
}

fn fmt_time(d: Duration) -> String {
    format!("{:.2} s", d.as_secs_f64())
}

