mod common;

use std::fs;

use geodata::signal_forge::{
    draw_variant, normalize_knowledge, record_to_tuples, render_pair, wiki_sections_to_tuples,
    PropertyValue, SchemaKind, SignalTuple, TemplateBank, VariantChoice, FAMILIES, NO_INFO, PLACEHOLDERS,
    WIKI_SUMMARY_FAMILY,
};
use proptest::prelude::*;
use serde_json::Value;

use common::fixtures;

/// sha256 of crates/core/assets/template_bank.json, computed with Python's hashlib.
const BANK_SHA256: &str = "29c4129a8e61f42b4ba02a52cb8b504394219dad75442a360a103a13fe139901";

fn knowledge(file: &str) -> Vec<Value> {
    serde_json::from_str(&fs::read_to_string(fixtures().join("knowledge").join(file)).unwrap()).unwrap()
}

#[test]
fn every_template_renders() {
    let bank = TemplateBank::bundled();
    assert_eq!(bank.len(), 95);
    assert_eq!(bank.digest(), BANK_SHA256);
    for family in FAMILIES {
        let slots = bank.required_slots(family).unwrap();
        let tuple = SignalTuple::new(family, slots.iter().map(|s| (s.to_string(), format!("<{s}>"))), "t");
        for v in 1..=5 {
            let p = render_pair(&bank, &tuple, VariantChoice::Fixed(v)).unwrap();
            for ph in PLACEHOLDERS {
                let raw = format!("[{ph}]");
                assert!(!p.instruction.contains(&raw) && !p.output.contains(&raw), "{family} v{v}");
            }
        }
    }
}

#[test]
fn worked_title_example() {
    let bank = TemplateBank::bundled();
    let t = bank.template("deepliterature.abstract.title", 1).unwrap();
    assert_eq!(t.input_pattern, "What is a suitable title for this geoscience paragraph: [input]");
    let tuple = SignalTuple::new(
        "deepliterature.abstract.title",
        [("input", "Plate motion drives quakes."), ("output", "Plate tectonics")],
        "t",
    );
    let p = render_pair(&bank, &tuple, VariantChoice::Fixed(1)).unwrap();
    assert_eq!(p.instruction, "What is a suitable title for this geoscience paragraph: Plate motion drives quakes.");
    assert_eq!(p.output, "The title can be 'Plate tectonics'");
}

#[test]
fn variant_histogram_within_binomial_bounds() {
    // 100 draws per seed at p = 0.2: each count lies in [10, 31] with
    // probability above 0.99 (binomial quantiles).
    for seed in [1u64, 7, 42] {
        let mut counts = [0u32; 5];
        for i in 0..100 {
            counts[(draw_variant(seed, i) - 1) as usize] += 1;
        }
        for c in counts {
            assert!((10..=31).contains(&c), "seed {seed}: {counts:?}");
        }
    }
}

#[test]
fn abellaite_fixture() {
    let raw = knowledge("minerals.json");
    let rec = normalize_knowledge(&raw[0], SchemaKind::Mineral).unwrap();
    assert_eq!(rec.name, "Abellaite");
    let els = &rec.entries["Chemical Element"];
    assert_eq!(els, &PropertyValue::List(["Na", "Pb", "C", "O", "H"].map(String::from).to_vec()));
    let absent: Vec<&str> = SchemaKind::Mineral
        .properties()
        .iter()
        .copied()
        .filter(|k| !raw[0].as_object().unwrap().contains_key(*k) && *k != "Chemical Element")
        .collect();
    assert_eq!(absent, ["Specific Gravity", "Name", "Place of Conservation"]);
    for k in absent {
        assert_eq!(rec.entries[k], PropertyValue::Text(NO_INFO.into()), "{k}");
    }
    let tuples = record_to_tuples(&rec);
    assert!(tuples
        .iter()
        .any(|t| t.bindings["key"] == "Hardness" && t.bindings["object"] == "Abellaite" && t.bindings["value"] == "2.5"));
    assert!(tuples.iter().all(|t| t.bindings["value"] != NO_INFO));
}

#[test]
fn nameless_record_is_rejected() {
    let raw = knowledge("minerals.json");
    assert!(normalize_knowledge(&raw[2], SchemaKind::Mineral).is_err());
}

#[test]
fn sediment_excludes_minor_species() {
    let raw = knowledge("sediments.json");
    let rec = normalize_knowledge(&raw[0], SchemaKind::Sediment).unwrap();
    assert_eq!(rec.entries["Location"], PropertyValue::Text("39.1, -117.2".into()));
    // CaO 0.8%, MnO 0.09%, Ba 650 ppm and Zn below detection are all under 1%.
    assert_eq!(
        rec.entries["Chemical Element"],
        PropertyValue::List(["Si", "Al", "Fe", "K"].map(String::from).to_vec())
    );
}

#[test]
fn wiki_fixture_fulltext_is_concatenation() {
    #[derive(serde::Deserialize)]
    struct Page {
        title: String,
        #[serde(rename = "abstract")]
        abstract_text: String,
        sections: Vec<geodata::signal_forge::WikiSectionTriple>,
    }
    let pages: Vec<Page> =
        serde_json::from_str(&fs::read_to_string(fixtures().join("wiki/pages.json")).unwrap()).unwrap();
    for page in &pages {
        let tuples = wiki_sections_to_tuples(&page.title, &page.sections, &page.abstract_text);
        assert_eq!(tuples.len(), page.sections.len() + 1);
        let summary = tuples.last().unwrap();
        assert_eq!(summary.family, WIKI_SUMMARY_FAMILY);
        let mut expected = String::new();
        for (i, s) in page.sections.iter().enumerate() {
            if i > 0 {
                expected.push_str("\n\n");
            }
            expected.push_str(&s.paragraph);
        }
        assert!(summary.bindings.values().any(|v| v == &expected));
        assert_eq!(summary.allow_empty, page.sections.is_empty());
    }
}

proptest! {
    #[test]
    fn rendering_never_leaves_placeholders(
        family in proptest::sample::select(FAMILIES.to_vec()),
        variant in 1u8..=5,
        text in "[a-zA-Z][a-zA-Z0-9 ,.]{0,40}",
    ) {
        let bank = TemplateBank::bundled();
        let slots = bank.required_slots(family).unwrap();
        let tuple = SignalTuple::new(family, slots.iter().map(|s| (s.to_string(), text.clone())), "p");
        let p = render_pair(&bank, &tuple, VariantChoice::Fixed(variant)).unwrap();
        for ph in PLACEHOLDERS {
            let raw = format!("[{ph}]");
            prop_assert!(!p.instruction.contains(&raw));
            prop_assert!(!p.output.contains(&raw));
        }
    }
}
