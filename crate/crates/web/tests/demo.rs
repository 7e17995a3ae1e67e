use pbkc_web::{card_group, opb_to_ddnnf, uvl_count};

#[test]
fn card_group_report() {
    let r = card_group(10, 2, 5).unwrap();
    let binom = |n: u64, k: u64| (0..k).fold(1u64, |acc, i| acc * (n - i) / (i + 1));
    assert_eq!(r.count, (2..=5).map(|k| binom(10, k)).sum::<u64>().to_string());
    assert_eq!((r.constraints, r.literals), (3, 32));
    assert!(card_group(3, 2, 4).is_err());
}

#[test]
fn opb_compiles_to_d4() {
    let c = opb_to_ddnnf(pbkc::fixtures::SMALL_OPB).unwrap();
    assert_eq!(c.count, "3");
    let back = pbkc::ddnnf::read_d4(&c.d4).unwrap();
    assert_eq!(back.count().unwrap().to_string(), "3");
    assert!(opb_to_ddnnf("+1 x1 >= ;").is_err());
}

#[test]
fn uvl_counts() {
    assert_eq!(uvl_count(pbkc::fixtures::ROBOT_BASIC).unwrap().count, "51");
    assert_eq!(uvl_count(pbkc::fixtures::DIVISION).unwrap().count, "5");
    assert!(uvl_count("features\n    a\n  b\n").is_err());
}
