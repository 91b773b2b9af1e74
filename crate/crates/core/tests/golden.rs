mod common;

use common::{golden, golden_cases};

fn check(name: &str) {
    let (_, rendered) = golden_cases().into_iter().find(|(n, _)| *n == name).unwrap();
    assert_eq!(rendered, golden(name), "{name} differs from the checked-in file");
}

#[test]
fn observation_template() {
    check("observation.txt");
}

#[test]
fn observation_without_objects() {
    check("observation_empty.txt");
}

#[test]
fn system_principle() {
    check("system_principle.txt");
}

#[test]
fn tie_break_prompt() {
    check("tie_break.txt");
}

#[test]
fn plan_prompt() {
    check("plan_prompt.txt");
}

#[test]
fn plan_request_carries_the_principle_as_system_message() {
    use flexnav_core::plan::{build_plan_prompt, NavHistory};
    let messages = build_plan_prompt("P", "I", &NavHistory::default(), &common::hallway_observation(), None, false);
    assert_eq!(messages[0].role, "system");
    assert_eq!(messages[0].content, "P");
    assert_eq!(messages[1].role, "user");
}
