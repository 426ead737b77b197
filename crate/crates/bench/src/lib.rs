//! Fixtures shared by the criterion benches.

use risisac::optimizer::Instance;
use risisac::ScenarioConfig;

/// Default scenario with `m` RIS elements and a light rate load, so every
/// subproblem in the benches is feasible.
pub fn instance(m: usize, seed: u64) -> Instance {
    let config = ScenarioConfig {
        ris_elements: m,
        rate_k_bps: 5e5,
        ..Default::default()
    };
    Instance::build(&config, seed).expect("bench scenario is valid")
}

#[cfg(test)]
mod tests {
    #[test]
    fn fixtures_build() {
        for m in [16, 32, 64] {
            assert_eq!(super::instance(m, 1).channels.h_ris_k[0].len(), m);
        }
    }
}
