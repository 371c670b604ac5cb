use powgate_core::clock::ManualClock;
use powgate_core::policy::Difficulty;
use powgate_core::puzzle::store::{RejectReason, SeedStore, StoreConfig, VerifyOutcome};
use powgate_core::puzzle::{self, PuzzleSolution};
use powgate_core::wire;
use proptest::prelude::*;
use rand::rngs::StdRng;
use rand::SeedableRng;

const IP: &str = "192.0.2.9";

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn issue_solve_verify_accepts(d in 0u32..=12, seed: u64, now in 0u64..4_000_000_000) {
        let store = SeedStore::new(StoreConfig::default());
        let clock = ManualClock::new(now);
        let mut rng = StdRng::seed_from_u64(seed);
        let challenge = store.issue(IP, Difficulty::new(d).unwrap(), &clock, &mut rng).unwrap();
        let solved = puzzle::solve(&challenge, IP).unwrap();
        // the solution survives its trip through the header encoding
        let header = wire::format_solution_header(&solved.solution);
        let presented = wire::parse_solution_header(&header).unwrap();
        prop_assert_eq!(store.verify(&presented, IP, &clock), VerifyOutcome::Accept);
        prop_assert_eq!(
            store.verify(&presented, IP, &clock),
            VerifyOutcome::Reject(RejectReason::Replayed)
        );
    }

    #[test]
    fn smaller_nonces_never_verify(seed: u64) {
        let store = SeedStore::new(StoreConfig::default());
        let clock = ManualClock::new(1);
        let mut rng = StdRng::seed_from_u64(seed);
        let challenge = store.issue(IP, Difficulty::new(6).unwrap(), &clock, &mut rng).unwrap();
        let solved = puzzle::solve(&challenge, IP).unwrap();
        for nonce in 0..solved.solution.nonce {
            let s = PuzzleSolution { nonce, ..solved.solution.clone() };
            prop_assert_eq!(store.verify(&s, IP, &clock), VerifyOutcome::Reject(RejectReason::BadHash));
        }
    }
}

#[test]
fn ipv6_clients_round_trip() {
    let store = SeedStore::new(StoreConfig::default());
    let clock = ManualClock::new(50);
    let ip = "2001:db8::42";
    let c = store
        .issue(ip, Difficulty::new(8).unwrap(), &clock, &mut StdRng::seed_from_u64(8))
        .unwrap();
    let s = puzzle::solve(&c, ip).unwrap().solution;
    assert_eq!(store.verify(&s, ip, &clock), VerifyOutcome::Accept);
}
