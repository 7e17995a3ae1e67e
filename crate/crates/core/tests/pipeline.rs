use num_bigint::BigUint;

use pbkc::compile::count_direct;
use pbkc::encode::encode_feature_model;
use pbkc::fixtures;
use pbkc::fm::parse_uvl;
use pbkc::opb::{parse_opb, write_opb};
use pbkc::oracle::brute_count_fm;

// configuration counts established by the oracle and frozen here
const COUNTS: [(&str, &str, u32); 3] = [
    ("robot_basic", fixtures::ROBOT_BASIC, 51),
    ("robot_expressive", fixtures::ROBOT_EXPRESSIVE, 161),
    ("division", fixtures::DIVISION, 5),
];

#[test]
fn fixture_counts() {
    for (name, text, want) in COUNTS {
        let m = parse_uvl(text).unwrap();
        assert_eq!(brute_count_fm(&m).unwrap(), BigUint::from(want), "{name}");
        let enc = encode_feature_model(&m).unwrap();
        assert_eq!(count_direct(&enc.formula), BigUint::from(want), "{name}");
    }
}

#[test]
fn encodings_survive_opb() {
    for (name, text, want) in COUNTS {
        let enc = encode_feature_model(&parse_uvl(text).unwrap()).unwrap();
        let back = parse_opb(&write_opb(&enc.formula)).unwrap();
        assert_eq!(back.aux_vars(), enc.formula.aux_vars(), "{name}");
        assert_eq!(count_direct(&back), BigUint::from(want), "{name}");
    }
}

#[test]
fn feature_cardinality_clone_names() {
    let enc = encode_feature_model(&parse_uvl(fixtures::ROBOT_EXPRESSIVE).unwrap()).unwrap();
    for n in ["Extra Storage#cr", "Extra Storage#1", "Extra Storage#3"] {
        assert!(enc.vars.var(n).is_some(), "{n}");
    }
    assert!(enc.vars.var("Extra Storage").is_none());
}
