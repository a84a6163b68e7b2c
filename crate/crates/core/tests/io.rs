use filament_core::io::{emit_plot_data, fmt_f64, parse_kv, read_csv, write_csv, Manifest, RunConfig};
use filament_core::verify::{all_ids, Check, CRITERIA};
use proptest::prelude::*;
use std::collections::BTreeMap;

fn cfg(command: &str, pairs: &[(&str, &str)]) -> filament_core::Result<RunConfig> {
    RunConfig::from_map(command, pairs.iter().map(|(k, v)| (k.to_string(), v.to_string())).collect())
}

#[test]
fn key_value_files() {
    let m = parse_kv("# comment\na = 0.25\nt-min = 1e-3   # trailing\n\nroute=synthesis\n").unwrap();
    assert_eq!(m.len(), 3);
    assert_eq!(m["a"], "0.25");
    assert_eq!(m["t_min"], "1e-3");
    assert_eq!(m["route"], "synthesis");
    assert!(parse_kv("just a line").is_err());
    assert!(parse_kv(" = 3").is_err());
}

#[test]
fn config_defaults_depend_on_the_command() {
    let s = cfg("selfsimilar", &[]).unwrap();
    assert_eq!((s.half_width, s.h), (40.0, 0.005));
    let e = cfg("evolve", &[]).unwrap();
    assert_eq!((e.half_width, e.h), (20.0, 0.05));
    assert_eq!(e.out, std::path::PathBuf::from("out/evolve"));
    let n = cfg("nls", &[("a", "0.3"), ("method", "x")]).unwrap();
    assert_eq!(n.a, 0.3);
    assert_eq!(n.extra_str("method", "all"), "x");
    assert!(n.extra_f64("method", 1.0).is_err());
}

#[test]
fn config_validation() {
    for bad in [
        ("selfsimilar", ("a", "0")),
        ("selfsimilar", ("a", "-1")),
        ("selfsimilar", ("a", "nan")),
        ("nls", ("gamma", "0.3")),
        ("evolve", ("ratio", "1.5")),
        ("evolve", ("t_min", "2")),
        ("trace", ("h", "0")),
        ("trace", ("a", "abc")),
    ] {
        assert!(cfg(bad.0, &[bad.1]).is_err(), "{bad:?}");
    }
    assert!(cfg("linear-j", &[("a", "0")]).is_ok());
    assert!(cfg("bogus", &[]).is_err());
}

#[test]
fn hash_ignores_the_output_directory() {
    let a = cfg("trace", &[("out", "/tmp/x")]).unwrap();
    let b = cfg("trace", &[("out", "/tmp/y")]).unwrap();
    assert_eq!(a.hash(), b.hash());
    assert_ne!(a.hash(), cfg("trace", &[("a", "0.6")]).unwrap().hash());
    assert_eq!(a.hash().len(), 64);
}

#[test]
fn manifest_is_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let c = cfg("selfsimilar", &[]).unwrap();
    write_csv(&dir.path().join("b.csv"), &["x", "y"], vec![vec![1.0, 2.0]]).unwrap();
    write_csv(&dir.path().join("sub/a.csv"), &["x"], vec![vec![0.5]]).unwrap();
    let m1 = Manifest::collect(&c, dir.path()).unwrap();
    m1.write(dir.path()).unwrap();
    let m2 = Manifest::collect(&c, dir.path()).unwrap();
    assert_eq!(m1, m2);
    let paths: Vec<&str> = m1.files.iter().map(|f| f.path.as_str()).collect();
    assert_eq!(paths, vec!["b.csv", "sub/a.csv"]);
}

#[test]
fn csv_and_plot_errors() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("t.csv");
    assert!(write_csv(&p, &["x", "y"], vec![vec![1.0]]).is_err());
    write_csv(&p, &["x", "y"], vec![vec![1.0, 2.0]]).unwrap();
    assert!(read_csv(&p, &["x", "z"]).is_err());
    let q = dir.path().join("p.dat");
    assert!(emit_plot_data(&q, &[], &["x", "y"], &[]).is_err());
    assert!(emit_plot_data(&q, &[], &["x"], &[vec![1.0]]).is_err());
    assert!(emit_plot_data(&q, &[], &["x", "y"], &[vec![1.0]]).is_err());
    emit_plot_data(&q, &["note"], &["x", "y"], &[vec![1.0, 2.0]]).unwrap();
    let text = std::fs::read_to_string(&q).unwrap();
    assert!(text.starts_with("# note\n# x y\n"));
}

#[test]
fn checks_report_signed_margins() {
    let c = Check::at_most("err", 0.5, 1.0);
    assert!(c.passed && c.margin == 0.5);
    assert!(!Check::at_least("rate", 0.4, 0.5).passed);
    assert!(Check::at_least("rate", 0.5, 0.5).passed);
    assert!(!Check::above("ratio", 10.0, 10.0).passed);
    assert_eq!(all_ids(), (1..=11).collect::<Vec<_>>());
    assert!(CRITERIA.iter().all(|(_, _, budget)| *budget > 0.0));
}

proptest! {
    #[test]
    fn csv_round_trip_is_lossless(v in prop::collection::vec(prop::num::f64::NORMAL | prop::num::f64::SUBNORMAL | prop::num::f64::ZERO, 1..40)) {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("r.csv");
        write_csv(&p, &["v"], v.iter().map(|x| vec![*x])).unwrap();
        let back: Vec<f64> = read_csv(&p, &["v"]).unwrap().into_iter().map(|r| r[0]).collect();
        prop_assert_eq!(back.iter().map(|x| x.to_bits()).collect::<Vec<_>>(), v.iter().map(|x| x.to_bits()).collect::<Vec<_>>());
    }

    #[test]
    fn formatted_values_parse_back(x in any::<f64>().prop_filter("finite", |x| x.is_finite())) {
        prop_assert_eq!(fmt_f64(x).parse::<f64>().unwrap().to_bits(), x.to_bits());
    }

    #[test]
    fn kv_keys_are_normalized(key in "[a-z][a-z_-]{0,10}", val in "[0-9.]{1,8}") {
        let m: BTreeMap<String, String> = parse_kv(&format!("{key} = {val}\n")).unwrap();
        prop_assert_eq!(m.get(&key.replace('-', "_")), Some(&val));
    }
}
