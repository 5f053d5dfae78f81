use std::collections::BTreeSet;
use std::path::PathBuf;

use proptest::prelude::*;

use bridgerec::data::{
    load_domain, make_split, overlap_users, DomainDataset, Format, IdMap, RatingTriple,
};
use bridgerec::Error;

fn fixture(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures").join(name)
}

fn triple(u: &str, i: &str, r: f64, t: u64) -> RatingTriple {
    RatingTriple {
        user: u.into(),
        item: i.into(),
        rating: r,
        timestamp: t,
    }
}

#[test]
fn loads_csv_and_json_lines() {
    let movies = load_domain(&fixture("movies.csv"), Format::Csv).unwrap();
    assert_eq!((movies.users.len(), movies.items.len(), movies.len()), (3, 3, 4));
    let books = load_domain(&fixture("books.jsonl"), Format::from_path(&fixture("books.jsonl"))).unwrap();
    assert_eq!(books.len(), 2);
    assert_eq!(books.triple(1), triple("B", "b2", 4.0, 1_400_000_100));
}

#[test]
fn malformed_row_names_line() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("bad.csv");
    std::fs::write(&p, "user,item,rating,timestamp\nA,x,5,1\nB,y,oops,2\n").unwrap();
    match load_domain(&p, Format::Csv) {
        Err(Error::Parse { line, .. }) => assert_eq!(line, 3),
        other => panic!("{other:?}"),
    }
}

#[test]
fn out_of_range_ratings_are_counted() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("range.csv");
    std::fs::write(&p, "user,item,rating,timestamp\nA,x,6,1\nB,y,3,2\nC,z,-1,3\n").unwrap();
    match load_domain(&p, Format::Csv) {
        Err(Error::RatingOutOfRange { count, first_line }) => assert_eq!((count, first_line), (2, 2)),
        other => panic!("{other:?}"),
    }
}

#[test]
fn fixture_split_is_deterministic() {
    let src = load_domain(&fixture("movies.csv"), Format::Csv).unwrap();
    let tgt = load_domain(&fixture("music.csv"), Format::Csv).unwrap();
    assert_eq!(overlap_users(&src, &tgt).len(), 3);
    let a = make_split(&src, &tgt, 0.3, 5).unwrap();
    let b = make_split(&src, &tgt, 0.3, 5).unwrap();
    assert_eq!(a.to_json().unwrap(), b.to_json().unwrap());
    assert_eq!(a.test_users.len(), 1);
}

/// Both ways of halving an odd-length history; the documented one gives the
/// cold side the extra rating.
#[test]
fn odd_histories_give_cold_the_extra_rating() {
    let src = DomainDataset::from_triples((0..4).map(|u| triple(&format!("u{u}"), "s", 3.0, 0))).unwrap();
    let tgt = DomainDataset::from_triples((0..4).flat_map(|u| {
        (0..5).map(move |r| triple(&format!("u{u}"), &format!("t{r}"), 3.0, 100 - r as u64))
    }))
    .unwrap();
    let split = make_split(&src, &tgt, 0.5, 1).unwrap();
    for t in &split.test_users {
        let n = t.cold.len() + t.warm.len();
        let (floor, ceil) = (n / 2, n.div_ceil(2));
        assert_ne!(floor, ceil);
        assert_eq!(t.cold.len(), ceil);
        assert_eq!(t.warm.len(), n - ceil);
        let max_cold = t.cold.iter().map(|&i| tgt.ratings[i].timestamp).max().unwrap();
        let min_warm = t.warm.iter().map(|&i| tgt.ratings[i].timestamp).min().unwrap();
        assert!(max_cold <= min_warm);
    }
}

#[test]
fn short_users_are_flagged() {
    let src = DomainDataset::from_triples([triple("a", "s", 1.0, 0), triple("b", "s", 1.0, 0)]).unwrap();
    let tgt = DomainDataset::from_triples([triple("a", "t", 1.0, 0), triple("b", "t", 1.0, 0)]).unwrap();
    let split = make_split(&src, &tgt, 0.5, 0).unwrap();
    assert_eq!(split.short_users.len(), 1);
    assert!(split.test_users[0].warm.is_empty());
}

#[test]
fn bad_beta_and_shared_items() {
    let src = DomainDataset::from_triples([triple("a", "x", 1.0, 0), triple("b", "y", 1.0, 0)]).unwrap();
    let tgt = DomainDataset::from_triples([triple("a", "z", 1.0, 0), triple("b", "w", 1.0, 0)]).unwrap();
    assert!(matches!(make_split(&src, &tgt, 1.5, 0), Err(Error::InvalidArgument { name: "beta", .. })));
    assert!(matches!(make_split(&src, &tgt, 0.0, 0), Err(Error::InvalidArgument { .. })));
    let clash = DomainDataset::from_triples([triple("a", "x", 1.0, 0), triple("b", "w", 1.0, 0)]).unwrap();
    assert!(matches!(make_split(&src, &clash, 0.5, 0), Err(Error::SharedItems(_))));
}

fn domains() -> impl Strategy<Value = (DomainDataset, DomainDataset)> {
    let rating = (0usize..12, 0usize..6, 0u64..50, 0.0f64..=5.0);
    (
        proptest::collection::vec(rating.clone(), 2..60),
        proptest::collection::vec(rating, 2..80),
    )
        .prop_map(|(s, t)| {
            let mk = |v: Vec<(usize, usize, u64, f64)>, p: &str| {
                DomainDataset::from_triples(
                    v.into_iter()
                        .map(|(u, i, ts, r)| triple(&format!("u{u}"), &format!("{p}{i}"), r, ts)),
                )
                .unwrap()
            };
            (mk(s, "s"), mk(t, "t"))
        })
}

proptest! {
    #[test]
    fn split_invariants((src, tgt) in domains(), beta in 0.05f64..0.95, seed in 0u64..1000) {
        let overlap = overlap_users(&src, &tgt);
        prop_assume!(overlap.len() >= 2);
        let split = make_split(&src, &tgt, beta, seed).unwrap();
        let test: BTreeSet<String> = split.test_users.iter().map(|t| t.user.clone()).collect();
        let train: BTreeSet<String> = split.train_overlap_users.iter().cloned().collect();
        prop_assert!(test.is_disjoint(&train));
        prop_assert_eq!(test.union(&train).cloned().collect::<BTreeSet<_>>(), overlap.clone());
        let expected = ((beta * overlap.len() as f64).round() as usize).clamp(1, overlap.len() - 1);
        prop_assert_eq!(test.len(), expected);

        let pool: BTreeSet<usize> = split.target_training_pool(&tgt).into_iter().collect();
        for t in &split.test_users {
            let u = tgt.users.index(&t.user).unwrap();
            let all: Vec<usize> = (0..tgt.len()).filter(|&i| tgt.ratings[i].user == u).collect();
            prop_assert_eq!(t.cold.len() + t.warm.len(), all.len());
            prop_assert!(t.cold.len().abs_diff(t.warm.len()) <= 1);
            prop_assert!(t.cold.iter().chain(&t.warm).all(|i| !pool.contains(i)));
            if let (Some(c), Some(w)) = (
                t.cold.iter().map(|&i| tgt.ratings[i].timestamp).max(),
                t.warm.iter().map(|&i| tgt.ratings[i].timestamp).min(),
            ) {
                prop_assert!(c <= w);
            }
        }
        let again = make_split(&src, &tgt, beta, seed).unwrap();
        prop_assert_eq!(split.to_json().unwrap(), again.to_json().unwrap());
    }

    #[test]
    fn id_map_round_trip(ids in proptest::collection::vec("[a-z0-9]{1,6}", 0..40)) {
        let mut map = IdMap::new();
        for id in &ids {
            map.intern(id);
        }
        for i in 0..map.len() {
            let id = map.id(i).unwrap().to_string();
            prop_assert_eq!(map.index(&id), Some(i));
        }
        for id in &ids {
            prop_assert_eq!(map.id(map.index(id).unwrap()), Some(id.as_str()));
        }
        let json = serde_json::to_string(&map).unwrap();
        let back: IdMap = serde_json::from_str(&json).unwrap();
        prop_assert_eq!(back, map);
    }
}
