//! Shared support for the integration suites.

/// Prints one PASS/FAIL line per criterion before asserting, so failed runs
/// still show a complete scoreboard.
pub fn report(name: &str, pass: bool, detail: String) {
    let tag = if pass { "PASS" } else { "FAIL" };
    println!("[{tag}] {name}: {detail}");
    assert!(pass, "{name}: {detail}");
}
