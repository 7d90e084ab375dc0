//! Acceptance checks. Prints one PASS/FAIL line per criterion and exits
//! non-zero if any fails.

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::panic::{self, AssertUnwindSafe};
use std::path::{Path, PathBuf};
use std::process::{Command, ExitCode};
use std::time::{Duration, Instant};

use geodata::caption_linker::{
    classify_mentions, find_referring_sentences, link_captions, split_sentences, stream_sentences, Classification,
    ExternalReason, LinkerConfig, PairKind, Sentence,
};
use geodata::corpus_builder::{apportion, plan_batches, slice_stream, verify_blocks, SourceStats};
use geodata::doc_model::{parse_structured_xml, validate_document, ObjectKind, Table};
use geodata::fsutil::{file_stem, list_files};
use geodata::md_emitter::{emit_markdown, read_markdown_table, scan_spans, table_to_markdown, SpanSidecar, SpecialKind};
use geodata::pipeline::{back_solve_factor, estimate_emissions, report_stats, stats_totals, StatsRow};
use geodata::signal_forge::{
    normalize_knowledge, render_pair, PropertyValue, SchemaKind, SignalTuple, TemplateBank, VariantChoice, FAMILIES,
    NO_INFO,
};
use geodata::tokenizer::{ReferenceTokenizer, Tokenizer};
use geodata::tool_trace::{
    compute_loss_mask, mask_oracle_sum, parse_partial_trace, render_tool_prompt, MaskPolicy, ToolDescriptor, ToolTrace,
    TraceStep, FINAL_THOUGHT,
};
use geodata::StructuredDocument;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::Value;

type Outcome = Result<String, String>;
type Check = (&'static str, fn() -> Outcome);

macro_rules! ensure {
    ($cond:expr, $($msg:tt)+) => {
        let ok: bool = $cond;
        if !ok {
            return Err(format!($($msg)+));
        }
    };
}

fn fixtures() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../fixtures")
}

fn corpus_docs() -> Vec<(String, StructuredDocument)> {
    list_files(&fixtures().join("corpus/tei"), "xml")
        .unwrap()
        .into_iter()
        .map(|p| {
            let xml = fs::read_to_string(&p).unwrap();
            (file_stem(&p), parse_structured_xml(&xml).unwrap().document)
        })
        .collect()
}

fn ac1() -> Outcome {
    let t0 = Instant::now();
    let docs = corpus_docs();
    ensure!(docs.len() == 50, "expected 50 documents, found {}", docs.len());
    for (stem, doc) in &docs {
        ensure!(validate_document(doc).is_empty(), "{stem}: invalid document");
        let e = emit_markdown(doc).map_err(|e| format!("{stem}: {e}"))?;
        let text = &e.output.text;
        for kind in SpecialKind::ALL {
            ensure!(
                text.matches(kind.start_token()).count() == text.matches(kind.end_token()).count(),
                "{stem}: unbalanced {kind:?}"
            );
        }
        let captioned = doc.figures.iter().filter(|f| !f.caption_missing).count();
        ensure!(
            text.matches(SpecialKind::Figure.start_token()).count() == captioned && !text.contains("figures/"),
            "{stem}: figure content other than captions"
        );
        let sidecar = SpanSidecar::new(&doc.doc_id, &e);
        let back: SpanSidecar = serde_json::from_str(&serde_json::to_string(&sidecar).unwrap()).unwrap();
        back.validate(text).map_err(|e| format!("{stem}: {e}"))?;
        ensure!(scan_spans(text).ok().as_ref() == Some(&e.output.spans), "{stem}: span scan differs");
    }
    let took = t0.elapsed();
    ensure!(took < Duration::from_secs(10), "took {took:?}");
    Ok(format!("50 docs in {:.2}s", took.as_secs_f64()))
}

fn ac2() -> Outcome {
    const ALPHABET: &[char] = &['a', 'b', 'Z', '0', ' ', '|', '\\', '\n', '\r', '-', ':', 'é'];
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    for n in 0..1000 {
        let (rows, cols) = (rng.random_range(1..=20), rng.random_range(1..=20));
        let grid: Vec<Vec<String>> = (0..rows)
            .map(|_| {
                (0..cols)
                    .map(|_| {
                        let len = rng.random_range(0..8);
                        (0..len).map(|_| ALPHABET[rng.random_range(0..ALPHABET.len())]).collect()
                    })
                    .collect()
            })
            .collect();
        let table = Table {
            index: 1,
            caption: String::new(),
            grid: grid.clone(),
            empty: false,
        };
        let md = table_to_markdown(&table).map_err(|e| format!("grid {n}: {e}"))?;
        let back = read_markdown_table(&md).map_err(|e| format!("grid {n}: {e}"))?;
        ensure!(back == grid, "grid {n} did not round-trip");
    }
    Ok("1000 grids".into())
}

fn ac3() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for n in 0..200 {
        let bs = rng.random_range(2..=64);
        let records: Vec<Vec<u32>> = (0..rng.random_range(0..30))
            .map(|_| (0..rng.random_range(0..100)).map(|_| rng.random_range(3..500)).collect())
            .collect();
        let mut stream = Vec::new();
        let mut starts = Vec::new();
        for r in &records {
            starts.push(stream.len());
            stream.extend(r);
            stream.push(2);
        }
        let (blocks, stats) = slice_stream(&stream, &starts, "s", bs);
        ensure!(verify_blocks(&blocks, &stream, bs), "stream {n}: verify_blocks failed");
        ensure!(blocks.iter().all(|b| b.ids.len() == bs), "stream {n}: short block");
        ensure!(stats.dropped_tokens < bs as u64, "stream {n}: dropped {}", stats.dropped_tokens);
        ensure!(
            stats.block_num * bs as u64 + stats.dropped_tokens == stats.token_num,
            "stream {n}: counts do not add up"
        );
    }
    let rows = [
        ("GeoCorpus", 25_743_070, 52_721_798_004, 5_548_479, 0.8),
        ("ArXiv", 6_691_886, 13_704_981_558, 742_835, 0.1),
        ("Codedata", 6_066_725, 12_424_652_670, 3_456_887, 0.1),
    ]
    .map(|(s, b, t, i, r)| StatsRow {
        source: s.into(),
        block_num: b,
        token_num: t,
        item_num: i,
        batch_ratio: Some(r),
    });
    let totals = stats_totals(&rows);
    ensure!(
        (totals.block_num, totals.token_num, totals.item_num) == (38_501_681, 78_851_432_232, 9_748_201),
        "totals {totals:?}"
    );
    let table = report_stats(&rows);
    let total_line = table.lines().find(|l| l.starts_with("Total")).unwrap_or_default();
    ensure!(
        total_line.split_whitespace().collect::<Vec<_>>() == ["Total", "38,501,681", "78,851,432,232", "9,748,201", "-"],
        "total line {total_line:?}"
    );
    let implied = totals.token_num.div_ceil(2048);
    let gap = totals.block_num - implied;
    ensure!(gap <= 5, "reported blocks exceed ceil(tokens/2048) by {gap}");
    Ok(format!("200 streams; table totals match; block gap {gap}"))
}

fn ac4() -> Outcome {
    let per = apportion(&[8.0, 1.0, 1.0], 4096);
    ensure!(per == [3277, 410, 409], "apportioned {per:?}");
    let stats: Vec<SourceStats> = ["geocorpus", "arxiv", "code"]
        .iter()
        .map(|s| SourceStats::from_counts(s, 1, 3277 * 10_000 * 2048, 2048))
        .collect();
    let weights = [("geocorpus", 8.0), ("arxiv", 1.0), ("code", 1.0)].map(|(s, w)| (s.to_string(), w));
    let plan = plan_batches(&stats, &weights, 4096, 10_000, 11).map_err(|e| e.to_string())?;
    let shares = plan.realized_shares();
    for (got, want) in shares.iter().zip([0.8, 0.1, 0.1]) {
        ensure!((got - want).abs() * 100.0 < 0.1, "share {got} vs {want}");
    }
    let again = plan_batches(&stats, &weights, 4096, 10_000, 11).map_err(|e| e.to_string())?;
    ensure!(plan == again && plan.block_order(1) == again.block_order(1), "equal seeds gave different plans");
    Ok(format!("(3277, 410, 409); shares {:.4}/{:.4}/{:.4}", shares[0], shares[1], shares[2]))
}

fn ac5() -> Outcome {
    let bank = TemplateBank::bundled();
    ensure!(bank.len() == 95, "bank has {} templates", bank.len());
    const DIGEST: &str = "29c4129a8e61f42b4ba02a52cb8b504394219dad75442a360a103a13fe139901";
    ensure!(bank.digest() == DIGEST, "digest {}", bank.digest());
    for family in FAMILIES {
        let slots = bank.required_slots(family).ok_or(format!("missing family {family}"))?;
        let tuple = SignalTuple::new(family, slots.iter().map(|s| (s.to_string(), format!("<{s}>"))), "t");
        for v in 1..=5 {
            render_pair(&bank, &tuple, VariantChoice::Fixed(v)).map_err(|e| format!("{family} v{v}: {e}"))?;
        }
    }
    let tuple = SignalTuple::new(
        "deepliterature.abstract.title",
        [("input", "Plate motion drives quakes."), ("output", "Plate tectonics")],
        "t",
    );
    let p = render_pair(&bank, &tuple, VariantChoice::Fixed(1)).map_err(|e| e.to_string())?;
    ensure!(
        p.instruction == "What is a suitable title for this geoscience paragraph: Plate motion drives quakes.",
        "instruction {:?}",
        p.instruction
    );
    Ok("95 templates render; digest frozen".into())
}

fn ac6() -> Outcome {
    let read = |f: &str| -> Vec<Value> {
        serde_json::from_str(&fs::read_to_string(fixtures().join("knowledge").join(f)).unwrap()).unwrap()
    };
    let minerals = read("minerals.json");
    let rec = normalize_knowledge(&minerals[0], SchemaKind::Mineral).map_err(|e| e.to_string())?;
    let want = PropertyValue::List(["Na", "Pb", "C", "O", "H"].map(String::from).to_vec());
    ensure!(rec.entries["Chemical Element"] == want, "elements {:?}", rec.entries["Chemical Element"]);
    let given = minerals[0].as_object().unwrap();
    let mut absent = 0;
    for k in SchemaKind::Mineral.properties() {
        if !given.contains_key(*k) && *k != "Chemical Element" {
            ensure!(rec.entries[*k] == PropertyValue::Text(NO_INFO.into()), "{k} = {:?}", rec.entries[*k]);
            absent += 1;
        }
    }
    let sed = normalize_knowledge(&read("sediments.json")[0], SchemaKind::Sediment).map_err(|e| e.to_string())?;
    let want = PropertyValue::List(["Si", "Al", "Fe", "K"].map(String::from).to_vec());
    ensure!(sed.entries["Chemical Element"] == want, "sediment elements {:?}", sed.entries["Chemical Element"]);
    Ok(format!("{absent} absent properties filled"))
}

fn sents(texts: &[&str]) -> Vec<Sentence> {
    let mut pos = 0;
    texts
        .iter()
        .map(|t| {
            let s = Sentence {
                text: t.to_string(),
                start: pos,
                end: pos + t.len(),
            };
            pos += t.len() + 1;
            s
        })
        .collect()
}

fn ac7() -> Outcome {
    let cfg = LinkerConfig::default();
    let m = find_referring_sentences(&sents(&["Results in Fig1.", "Fig11 shows noise."]), ObjectKind::Figure, 1, 12, &cfg);
    ensure!(m.len() == 1 && m[0].sentence.text == "Results in Fig1.", "Fig1 matched {m:?}");
    let s = split_sentences("The sites are listed in the table. 2 of them are coastal. Unrelated.");
    let m = find_referring_sentences(&s, ObjectKind::Table, 2, 3, &cfg);
    ensure!(
        m.len() == 1 && m[0].spans_two_sentences && m[0].sentence.text == "The sites are listed in the table. 2 of them are coastal.",
        "tail keyword {m:?}"
    );
    let m = find_referring_sentences(&sents(&["shown in Fig 7."]), ObjectKind::Figure, 7, 4, &cfg);
    ensure!(m.len() == 1 && m[0].reason == Some(ExternalReason::ExceedsCount), "exceeds count {m:?}");
    let m = find_referring_sentences(&sents(&["see Fig 3 of Smith et al."]), ObjectKind::Figure, 3, 5, &cfg);
    ensure!(m.len() == 1 && m[0].reason == Some(ExternalReason::OfProximity), "of proximity {m:?}");

    // Reconcile against the mentions planted by the corpus generator.
    let mentions: Vec<Value> = fs::read_to_string(fixtures().join("corpus/mentions.jsonl"))
        .unwrap()
        .lines()
        .map(|l| serde_json::from_str(l).unwrap())
        .collect();
    let docs: BTreeMap<String, StructuredDocument> = corpus_docs().into_iter().collect();
    let kind_of = |m: &Value| if m["kind"] == "figure" { ObjectKind::Figure } else { ObjectKind::Table };
    let ext = LinkerConfig {
        extended_keywords: true,
        ..LinkerConfig::default()
    };
    let mut got = BTreeSet::new();
    for (stem, doc) in &docs {
        for p in link_captions(doc, &ext) {
            if p.pair_kind == PairKind::CaptionReferringSentence {
                got.insert((stem.clone(), p.kind, p.index, p.counterpart));
            }
        }
    }
    let mut want = BTreeSet::new();
    let mut externals = 0;
    for m in &mentions {
        let (stem, index, sentence) = (m["doc"].as_str().unwrap(), m["index"].as_u64().unwrap() as u32, m["sentence"].as_str().unwrap());
        let doc = &docs[stem];
        let kind = kind_of(m);
        if m["expect"] == "internal" {
            let captioned = match kind {
                ObjectKind::Figure => doc.figures.iter().any(|f| f.index == index && !f.caption_missing),
                _ => doc.tables.iter().any(|t| t.index == index && !t.caption.is_empty()),
            };
            if captioned {
                want.insert((stem.to_string(), kind, index, sentence.to_string()));
            }
        } else {
            let found: Vec<_> = classify_mentions(&stream_sentences(doc), kind, doc.figures.len() as u32, &ext)
                .into_iter()
                .filter(|r| r.index == index && r.sentence.text.contains(sentence))
                .collect();
            ensure!(
                !found.is_empty() && found.iter().all(|r| r.classification == Classification::External),
                "{stem}: {sentence:?} not external"
            );
            externals += 1;
        }
    }
    ensure!(got == want, "linker found {} pairs, oracle {}", got.len(), want.len());
    Ok(format!("4 edge cases; {} pairs and {externals} externals reconcile", got.len()))
}

fn words(rng: &mut ChaCha8Rng, prefix: &str) -> String {
    let n = rng.random_range(1..8);
    (0..n)
        .map(|_| match rng.random_range(0..6) {
            0 => "{".to_string(),
            1 => "\",".to_string(),
            _ => {
                let len = rng.random_range(1..7);
                let w: String = (0..len).map(|_| rng.random_range(b'a'..=b'z') as char).collect();
                format!("{prefix}{w}")
            }
        })
        .collect::<Vec<_>>()
        .join(" ")
}

fn random_trace(rng: &mut ChaCha8Rng) -> ToolTrace {
    let steps = (0..rng.random_range(0..4))
        .map(|_| TraceStep {
            thought: words(rng, "t"),
            action: words(rng, "a").replace(' ', "_"),
            action_input: words(rng, "i"),
            observation: words(rng, "zobs"),
        })
        .collect();
    ToolTrace {
        question: words(rng, "q"),
        steps,
        final_thought: if rng.random_bool(0.5) { FINAL_THOUGHT.into() } else { String::new() },
        final_answer: words(rng, "f"),
    }
}

fn ac8() -> Outcome {
    let tok = ReferenceTokenizer::new();
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    for n in 0..500 {
        let t = random_trace(&mut rng);
        let prompt = format!("Question: {}\nThought:", t.question);
        let s = compute_loss_mask(&prompt, &t, &tok, 1 << 20, MaskPolicy::default());
        let sum: usize = s.mask.iter().map(|&m| m as usize).sum();
        let oracle = mask_oracle_sum(&t, &tok);
        ensure!(sum == oracle, "trace {n}: mask {sum} vs oracle {oracle}");
        for (id, m) in s.ids.iter().zip(&s.mask) {
            ensure!(!(*m == 1 && tok.decode(&[*id]).starts_with("zobs")), "trace {n}: observation token trained");
        }
    }
    let tools: Vec<ToolDescriptor> =
        serde_json::from_str(&fs::read_to_string(fixtures().join("tools/tools.json")).unwrap()).unwrap();
    let long = ToolTrace {
        question: "How do geologists study fossils?".into(),
        steps: vec![TraceStep {
            thought: "search".into(),
            action: "search_geoscience_paper".into(),
            action_input: "fossils".into(),
            observation: "rock ".repeat(3000),
        }],
        final_thought: FINAL_THOUGHT.into(),
        final_answer: "dating".into(),
    };
    let prompt = render_tool_prompt(&tools, &long.question).map_err(|e| e.to_string())?;
    let s = compute_loss_mask(&prompt, &long, &tok, 2048, MaskPolicy::default());
    ensure!(s.truncated && s.ids.len() == 2048 && s.mask.len() == 2048, "truncated to {}", s.ids.len());
    let p = parse_partial_trace(
        "Question: \"What is the weather in New York 3M years ago?\"\nThought: \"weather\"\nAction: \"geo_search\"\nAction Input: \"New York, Weather, 3M years\"",
    )
    .map_err(|e| e.to_string())?;
    ensure!(p.steps.first().map(|s| s.action.as_str()) == Some("geo_search"), "example parsed to {p:?}");
    Ok("500 traces; truncation at 2048; example action geo_search".into())
}

fn ac9() -> Outcome {
    let hours = 1_488_137.26;
    let factor = (back_solve_factor(212_000.0, hours) * 1e5).round() / 1e5;
    let kg = estimate_emissions(hours, factor, 1.0).map_err(|e| e.to_string())?;
    let rel = (kg - 212_000.0).abs() / 212_000.0;
    ensure!(rel < 0.005, "{kg} kg is {:.3}% off", rel * 100.0);
    Ok(format!("factor {factor} kg/h gives {:.2} t", kg / 1000.0))
}

fn tree(root: &Path) -> BTreeMap<PathBuf, Vec<u8>> {
    fn walk(root: &Path, dir: &Path, out: &mut BTreeMap<PathBuf, Vec<u8>>) {
        for e in fs::read_dir(dir).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                walk(root, &p, out);
            } else {
                out.insert(p.strip_prefix(root).unwrap().to_path_buf(), fs::read(&p).unwrap());
            }
        }
    }
    let mut out = BTreeMap::new();
    walk(root, root, &mut out);
    out
}

fn ac10() -> Outcome {
    let t0 = Instant::now();
    let tmp = tempfile::tempdir().map_err(|e| e.to_string())?;
    let mut trees = Vec::new();
    for name in ["a", "b"] {
        let out = tmp.path().join(name);
        let status = Command::new(env!("CARGO_BIN_EXE_geodata"))
            .arg("--manifest")
            .arg(fixtures().join("manifest.json"))
            .arg("--out")
            .arg(&out)
            .arg("run")
            .output()
            .map_err(|e| e.to_string())?;
        ensure!(status.status.success(), "run {name} failed: {}", String::from_utf8_lossy(&status.stderr));
        trees.push(tree(&out));
    }
    let took = t0.elapsed();
    ensure!(trees[0] == trees[1], "output trees differ");
    ensure!(took < Duration::from_secs(120), "took {took:?}");
    Ok(format!("{} files identical; {:.1}s", trees[0].len(), took.as_secs_f64()))
}

fn main() -> ExitCode {
    let checks: [Check; 10] = [
        ("AC1 special-token protocol", ac1),
        ("AC2 table round trip", ac2),
        ("AC3 blocking identity", ac3),
        ("AC4 batch mixing", ac4),
        ("AC5 template bank", ac5),
        ("AC6 knowledge normalization", ac6),
        ("AC7 referring sentences", ac7),
        ("AC8 loss masks", ac8),
        ("AC9 emissions", ac9),
        ("AC10 determinism", ac10),
    ];
    panic::set_hook(Box::new(|_| {}));
    let mut failed = 0;
    for (name, f) in checks {
        let outcome = panic::catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|p| {
            Err(p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_else(|| "panicked".into()))
        });
        match outcome {
            Ok(detail) => println!("PASS {name}: {detail}"),
            Err(why) => {
                failed += 1;
                println!("FAIL {name}: {why}");
            }
        }
    }
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
