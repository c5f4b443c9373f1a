//! Opened-block counts and byte sizes against the brute-force oracle in
//! `tests/oracle/posme_oracle.py`.

use posme::engine::gen;
use posme::params::{blocks_per_challenge, RunParams};
use posme::{prove, Digest, Strictness};
use serde_json::Value;

fn counting() -> Value {
    let v: Value = serde_json::from_str(include_str!("fixtures/vectors.json")).unwrap();
    v["counting"].clone()
}

fn num(v: &Value) -> u64 {
    v.as_u64().unwrap()
}

#[test]
fn per_challenge_counts_match_oracle() {
    let c = counting();
    let seed: Digest = c["seed"].as_str().unwrap().parse().unwrap();
    let run = RunParams::new(num(&c["dim"]) as u32, num(&c["k"]), num(&c["d"]) as u32).unwrap();
    let (log, _) = gen(&seed, &run).unwrap();
    let q = num(&c["q"]) as u32;
    for case in c["depths"].as_array().unwrap() {
        let r = num(&case["r"]) as u32;
        let proof = prove(&log, q, r, Strictness::Toy).unwrap();
        let steps: Vec<u64> = proof.witnesses.iter().map(|w| w.step.step).collect();
        let expect_steps: Vec<u64> = c["challenges"]
            .as_array()
            .unwrap()
            .iter()
            .map(num)
            .collect();
        assert_eq!(steps, expect_steps);

        let bound = blocks_per_challenge(run.reads as u64, r);
        assert_eq!(bound, num(&case["bound"]));
        for (i, w) in proof.witnesses.iter().enumerate() {
            let opened = w.opened_blocks() as u64;
            assert_eq!(
                opened,
                num(&case["opened_blocks"][i]),
                "R={r} challenge {i}"
            );
            assert!(opened <= bound);
            if case["saturated"][i].as_bool().unwrap() {
                assert_eq!(opened, bound);
            }
        }
        assert_eq!(
            proof.to_bytes().len() as u64,
            num(&case["proof_bytes"]),
            "R={r}"
        );
    }
}

#[test]
fn bound_values() {
    assert_eq!(blocks_per_challenge(8, 1), 9);
    assert_eq!(blocks_per_challenge(8, 2), 81);
    assert_eq!(blocks_per_challenge(8, 3), 657);
}

#[test]
fn dense_runs_saturate_the_bound() {
    // At rho = 16 almost every block has been written before it is read.
    let run = RunParams::with_density(6, 16, 8).unwrap();
    let (log, _) = gen(&Digest([3; 32]), &run).unwrap();
    let proof = prove(&log, 16, 3, Strictness::Toy).unwrap();
    let b = blocks_per_challenge(8, 3);
    let at_bound = proof
        .witnesses
        .iter()
        .filter(|w| w.opened_blocks() as u64 == b)
        .count();
    assert!(proof
        .witnesses
        .iter()
        .all(|w| w.opened_blocks() as u64 <= b));
    assert!(at_bound > 0);
}

#[test]
fn proof_bytes_are_stable() {
    let run = RunParams::with_density(6, 4, 4).unwrap();
    let (log, _) = gen(&Digest([0x5a; 32]), &run).unwrap();
    let bytes = prove(&log, 4, 2, Strictness::Toy).unwrap().to_bytes();
    let again = prove(
        &gen(&Digest([0x5a; 32]), &run).unwrap().0,
        4,
        2,
        Strictness::Toy,
    )
    .unwrap()
    .to_bytes();
    assert_eq!(bytes, again);
    assert_eq!(
        blake3::hash(&bytes).to_hex().as_str(),
        include_str!("fixtures/golden_proof.b3").trim()
    );
}
