use caise_core::eval::{accuracy, accuracy_lists, command_match, EvalItem};
use caise_core::{parse_command, Command};
use proptest::prelude::*;

fn c(s: &str) -> Command {
    parse_command(s).unwrap()
}

/// Ten predictions against ground truth; six match under the relaxed rules.
const TEN_CASES: [(Option<&str>, &str); 10] = [
    (Some("[search glass juice]"), "[search juice glass]"),
    (Some("[adjust_color red 0.1]"), "[adjust_color red 0.9]"),
    (Some("[rotate 90]"), "[rotate 90]"),
    (Some("[image_cutout]"), "[image_cutout]"),
    (Some("[adjust_attr contrast 20]"), "[adjust_attr contrast 20]"),
    (Some("[adjust_attr brightness -30]"), "[adjust_attr brightness -30]"),
    (Some("[adjust_attr brightness 30]"), "[adjust_attr brightness -30]"),
    (None, "[rotate 45]"),
    (Some("[search red bus]"), "[search red scooter]"),
    (Some("[adjust_color pink 0.5]"), "[adjust_color purple 0.5]"),
];

#[test]
fn ten_case_fixture_scores_sixty() {
    let preds: Vec<Option<Command>> = TEN_CASES.iter().map(|(p, _)| p.map(c)).collect();
    let gts: Vec<Command> = TEN_CASES.iter().map(|(_, g)| c(g)).collect();
    let ids: Vec<String> = (0..10).map(|i| format!("d{}", i / 4)).collect();
    let report = accuracy_lists(&preds, &gts, &ids).unwrap();
    assert_eq!(report.correct, 6);
    assert_eq!(report.total, 60.0);
    // d0 = cases 0..4 all correct, d1 = 4..8 has misses, d2 = 8..10 all wrong.
    assert_eq!(report.dialogues, 3);
    assert_eq!(report.dialogues_all_correct, 1);
}

fn any_command() -> impl Strategy<Value = Command> {
    prop_oneof![
        prop::collection::vec(prop::sample::select(vec!["red", "bus", "glass", "juice"]), 1..4).prop_map(|q| Command::search(q).unwrap()),
        (0..9usize, 0..=10u16).prop_map(|(i, m)| Command::color(caise_core::ColorName::ALL[i], caise_core::Intensity::from_millis(m * 100).unwrap())),
        (-2..=2i32).prop_map(|v| Command::brightness(v * 10).unwrap()),
        (0..=2i32).prop_map(|v| Command::contrast(v * 10).unwrap()),
        (0..=2i32).prop_map(|v| Command::rotate(v * 90).unwrap()),
        Just(Command::ImageCutout),
    ]
}

proptest! {
    #[test]
    fn match_is_reflexive(a in any_command()) {
        prop_assert!(command_match(Some(&a), &a));
    }

    #[test]
    fn match_is_symmetric(a in any_command(), b in any_command()) {
        prop_assert_eq!(command_match(Some(&a), &b), command_match(Some(&b), &a));
    }

    #[test]
    fn accuracy_is_permutation_invariant(
        pairs in prop::collection::vec((any_command(), any_command(), 0..4u8), 1..30),
        seed in any::<u64>(),
    ) {
        let items: Vec<EvalItem> = pairs
            .iter()
            .map(|(p, g, d)| EvalItem { dialogue_id: format!("d{d}"), pred: Some(p.clone()), gt: g.clone() })
            .collect();
        let mut shuffled = items.clone();
        let n = shuffled.len();
        let mut s = seed;
        for i in (1..n).rev() {
            s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            shuffled.swap(i, (s >> 33) as usize % (i + 1));
        }
        let a = accuracy(&items);
        let b = accuracy(&shuffled);
        prop_assert_eq!(a.correct, b.correct);
        prop_assert_eq!(&a.per_type, &b.per_type);
        prop_assert_eq!(a.dialogues_all_correct, b.dialogues_all_correct);
        prop_assert!(a.dialogue_success <= 100.0);
        prop_assert_eq!(a.per_type.values().map(|t| t.count).sum::<usize>(), a.count);
    }
}
