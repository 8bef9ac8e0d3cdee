#![allow(dead_code)]

use educhain_sim::{bundled, parse_scenario, run_scenario, NetworkConfig, RunReport, Runner, Testbed};

pub fn cfg(seed: u64) -> NetworkConfig {
    NetworkConfig {
        seed,
        ..NetworkConfig::default()
    }
}

/// Runs a bundled scenario under `seed`.
pub fn run_bundled(name: &str, seed: u64) -> (RunReport, Testbed) {
    let s = bundled(name).unwrap_or_else(|| panic!("no bundled scenario {name}"));
    run_scenario(cfg(seed), &s).expect("scenario config is valid")
}

/// Runs scenario text on an existing testbed.
pub fn run_text(tb: &mut Testbed, text: &str) -> RunReport {
    let s = parse_scenario(text).expect("scenario parses");
    let report = Runner::new(tb).run(&s);
    assert!(report.passed(), "{}", report.render());
    report
}

/// One staff member `T1` owning `CS101` (2023-Fall) and `n` graded students `G000..`.
pub fn graded_testbed(seed: u64, n: usize) -> Testbed {
    let mut tb = Testbed::build(cfg(seed)).unwrap();
    run_text(
        &mut tb,
        &format!(
            "@0 staff id=T1 name=Teacher dept=cs\n@0 cohort prefix=G count={n}\n@0 settle max=20000\n\
             @0 course id=CS101 title=Intro term=2023-Fall owner=T1\n@0 settle\n\
             @0 grade-cohort prefix=G count={n} course=CS101 term=2023-Fall by=T1\n@0 settle max=20000\n"
        ),
    );
    tb
}
