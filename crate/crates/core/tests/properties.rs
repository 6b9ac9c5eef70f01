//! Invariants over generated programs and instances.

mod common;

use proptest::prelude::*;

use protoflow::dsl::DslSpec;
use protoflow::eval::{kv_similarity, to_canonical, Metric};
use protoflow::execution::{check_partial, make_model, simulate, ResourceDeclarations};
use protoflow::extractor::ExtractorGateway;
use protoflow::flow::analyze_flow;
use protoflow::pdg::{build_pdg, check_duality, EdgeKind};
use protoflow::program::DslProgram;
use protoflow::synthesis::{synthesize, SynthesisConfig};

use common::oracles;

fn mix() -> DslSpec {
    DslSpec::from_toml_str(oracles::MIX).unwrap()
}

fn linear(seed: u64) -> DslProgram {
    // twenty instructions: reuse the generator and drop its control blocks
    let mut p = DslProgram::default();
    let mut k = seed;
    while p.instructions.len() < 20 {
        p.instructions.extend(oracles::random_program(k).instructions);
        k = k.wrapping_add(7919);
    }
    p.instructions.truncate(20);
    p
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(96))]

    #[test]
    fn dependences_match_path_enumeration(seed in any::<u64>()) {
        let p = oracles::random_program(seed);
        let flow = analyze_flow(&p, &mix(), &ExtractorGateway::rule()).unwrap();
        prop_assert_eq!(flow.dependences, oracles::reaching_pairs(&p));
    }

    #[test]
    fn linear_dependences_match_path_enumeration(seed in any::<u64>()) {
        let p = linear(seed);
        let flow = analyze_flow(&p, &mix(), &ExtractorGateway::rule()).unwrap();
        prop_assert_eq!(flow.dependences, oracles::reaching_pairs(&p));
    }

    #[test]
    fn dependences_point_forward_outside_loops(seed in any::<u64>()) {
        let p = oracles::random_program(seed);
        let flow = analyze_flow(&p, &mix(), &ExtractorGateway::rule()).unwrap();
        let looped = |i: usize, j: usize| {
            p.controls.iter().any(|c| c.kind == protoflow::program::ControlKind::Loop && c.contains(i) && c.contains(j))
        };
        for &(i, j) in &flow.dependences {
            prop_assert!(i < j || looped(i, j), "({}, {}) runs backwards", i, j);
        }
    }

    #[test]
    fn graphs_of_random_programs_are_dual(seed in any::<u64>()) {
        let p = oracles::random_program(seed);
        let flow = analyze_flow(&p, &mix(), &ExtractorGateway::rule()).unwrap();
        let pdg = build_pdg(&p, &flow, "mix", seed).unwrap();
        let report = check_duality(&pdg);
        prop_assert!(report.holds(), "{:?}", report.problems);
        // every dependence labels some op edge
        for &(i, j) in &flow.dependences {
            prop_assert!(pdg.op_edges.iter().any(|e| e.from == i && e.to == j && e.reagent.is_some()));
        }
    }

    #[test]
    fn forward_edges_are_acyclic(seed in any::<u64>()) {
        let p = oracles::random_program(seed);
        let flow = analyze_flow(&p, &mix(), &ExtractorGateway::rule()).unwrap();
        let pdg = build_pdg(&p, &flow, "mix", 0).unwrap();
        for e in pdg.op_edges.iter().filter(|e| matches!(e.kind, EdgeKind::Sequential | EdgeKind::Skip)) {
            prop_assert!(e.from < e.to, "{:?}", e);
        }
    }

    #[test]
    fn simulated_prefixes_stay_partially_satisfying(seed in any::<u64>(), cut in 0usize..12) {
        let p = oracles::random_program(seed);
        let spec = mix();
        let flow = analyze_flow(&p, &spec, &ExtractorGateway::rule()).unwrap();
        let pdg = build_pdg(&p, &flow, "mix", 0).unwrap();
        let model = make_model(&p, &pdg, &[], &ResourceDeclarations::default(), &spec).unwrap();
        let (mut trace, _) = simulate(&model, seed).unwrap();
        let again = simulate(&model, seed).unwrap().0;
        prop_assert_eq!(&trace, &again);
        trace.steps.truncate(cut);
        prop_assert!(check_partial(&trace, &model).partially_satisfying);
    }

    #[test]
    fn listing_round_trips(seed in any::<u64>()) {
        let p = oracles::random_program(seed);
        let back = DslProgram::from_listing(&p.to_listing()).unwrap();
        prop_assert_eq!(back.instructions, p.instructions);
    }

    #[test]
    fn synthesis_never_beats_exhaustive_search(seed in 0u64..10_000) {
        let bench = DslSpec::from_toml_str(oracles::BENCH).unwrap();
        let seq = oracles::random_instance(seed);
        let cfg = SynthesisConfig { seed, restarts: 2, ..SynthesisConfig::default() };
        let got = synthesize(&seq, &bench, &cfg).unwrap();
        prop_assert!(got.score >= oracles::brute_force_minimum(&seq, &bench, &cfg) - 1e-9);
    }

    #[test]
    fn similarity_is_bounded_and_reflexive(a in any::<u64>(), b in any::<u64>()) {
        let (x, y) = (to_canonical(&oracles::random_program(a)), to_canonical(&oracles::random_program(b)));
        for metric in [Metric::Exact, Metric::RougeL, Metric::Bleu] {
            let s = kv_similarity(&x, &y, metric);
            prop_assert!((0.0..=1.0).contains(&s), "{:?} gave {}", metric, s);
            prop_assert!((kv_similarity(&x, &x, metric) - 1.0).abs() < 1e-12);
        }
    }
}
