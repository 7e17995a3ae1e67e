use num_bigint::BigUint;
use num_rational::BigRational;
use proptest::prelude::*;

use pbkc::compile::{compile_with, CompileOptions, Heuristic};
use pbkc::ddnnf::{read_d4, write_d4};
use pbkc::encode::encode_feature_model;
use pbkc::fm::parse_uvl;
use pbkc::opb::{parse_opb, write_opb};
use pbkc::oracle::{brute_count_fm, brute_count_pb, gen_random_fm, GenConfig, Profile};
use pbkc::pb::{clause_to_pb, normalize, Assignment, Lit, PbFormula, RawConstraint, Relation, Var};

fn raw_constraint(max_vars: u32) -> impl Strategy<Value = RawConstraint> {
    let term = (-8i64..=8, prop::bool::weighted(0.2), 1..=max_vars, any::<bool>());
    (prop::collection::vec(term, 0..6), 0..6usize, -20i64..=20, prop::bool::weighted(0.2)).prop_map(
        |(terms, rel, degree, half)| {
            let terms = terms
                .into_iter()
                .map(|(c, h, v, pos)| (BigRational::new(c.into(), if h { 2 } else { 1 }.into()), Var::new(v).lit(pos)))
                .collect();
            let degree = BigRational::new(degree.into(), if half { 2 } else { 1 }.into());
            RawConstraint::new(terms, Relation::ALL[rel], degree)
        },
    )
}

fn formula(max_vars: u32) -> impl Strategy<Value = (PbFormula, Vec<RawConstraint>)> {
    prop::collection::vec(raw_constraint(max_vars), 0..6).prop_map(move |raws| {
        let mut f = PbFormula::new(max_vars);
        for r in &raws {
            f.add_raw(r).expect("variables in range");
        }
        (f, raws)
    })
}

fn all_assignments(n: u32) -> impl Iterator<Item = Assignment> {
    (0..1u64 << n).map(move |b| Assignment::from_bits(n, b))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn normalization_preserves_models(raw in raw_constraint(6)) {
        let norm = normalize(&raw).into_constraints();
        for a in all_assignments(6) {
            let want = raw.evaluate(&a).unwrap();
            let got = norm.as_ref().is_some_and(|cs| cs.iter().all(|c| c.evaluate(&a).unwrap()));
            prop_assert_eq!(got, want);
        }
    }

    #[test]
    fn normalized_constraints_are_canonical(raw in raw_constraint(6)) {
        for c in normalize(&raw).into_constraints().unwrap_or_default() {
            prop_assert!(c.terms().iter().all(|(k, _)| k > &0.into()));
            let vars: Vec<Var> = c.terms().iter().map(|(_, l)| l.var()).collect();
            let mut sorted = vars.clone();
            sorted.sort();
            sorted.dedup();
            prop_assert_eq!(sorted.len(), vars.len());
        }
    }

    #[test]
    fn clauses_become_at_least_one(lits in prop::collection::vec((1..=5u32, any::<bool>()), 0..6)) {
        let clause: Vec<Lit> = lits.iter().map(|&(v, p)| Var::new(v).lit(p)).collect();
        let norm = clause_to_pb(&clause).into_constraints();
        for a in all_assignments(5) {
            let want = clause.iter().any(|l| a.lit_value(*l) == Some(true));
            let got = norm.as_ref().is_some_and(|cs| cs.iter().all(|c| c.evaluate(&a).unwrap()));
            prop_assert_eq!(got, want);
        }
    }

    #[test]
    fn opb_round_trip((f, _) in formula(5)) {
        let back = parse_opb(&write_opb(&f)).unwrap();
        prop_assert_eq!(back.num_vars(), f.num_vars());
        for a in all_assignments(5) {
            prop_assert_eq!(back.evaluate(&a).unwrap(), f.evaluate(&a).unwrap());
        }
    }

    #[test]
    fn compiled_count_matches_brute_force((f, raws) in formula(7)) {
        let want = brute_count_pb(&f).unwrap();
        let direct = all_assignments(7).filter(|a| raws.iter().all(|r| r.evaluate(a).unwrap())).count();
        prop_assert_eq!(&want, &BigUint::from(direct));
        for o in [
            CompileOptions::default(),
            CompileOptions { cache: false, learning: false, ..Default::default() },
            CompileOptions { heuristic: Heuristic::Score, ..Default::default() },
            CompileOptions { cut_threshold: 1, ..Default::default() },
        ] {
            let (d, _) = compile_with(&f, &o).unwrap();
            prop_assert!(d.validate().is_valid());
            prop_assert_eq!(d.count().unwrap(), want.clone());
            let back = read_d4(&write_d4(&d.padded())).unwrap();
            prop_assert_eq!(back.count().unwrap(), want.clone());
        }
    }

    #[test]
    fn enumeration_agrees_with_counting((f, _) in formula(6)) {
        let (d, _) = compile_with(&f, &CompileOptions::default()).unwrap();
        let models = d.enumerate_models(6, 64).unwrap();
        prop_assert_eq!(BigUint::from(models.len()), d.count().unwrap());
        for m in &models {
            prop_assert!(f.evaluate(m).unwrap());
        }
        let mut sorted = models.clone();
        sorted.dedup();
        prop_assert_eq!(sorted.len(), models.len());
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn models_print_and_parse_back(seed in any::<u64>(), p in 0..4usize) {
        let profile = [Profile::Basic, Profile::Cardinality, Profile::Attributes, Profile::All][p];
        let m = gen_random_fm(&GenConfig { profile, ..GenConfig::with_seed(seed) });
        prop_assert_eq!(parse_uvl(&m.to_string()).unwrap(), m);
    }

    #[test]
    fn basic_models_encode_to_equal_counts(seed in any::<u64>()) {
        let m = gen_random_fm(&GenConfig { profile: Profile::Basic, ..GenConfig::with_seed(seed) });
        let enc = encode_feature_model(&m).unwrap();
        prop_assert_eq!(brute_count_fm(&m).unwrap(), brute_count_pb(&enc.formula).unwrap());
    }
}
