use std::io::Write;
use std::process::{Command, Output};

fn leoisl(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_leoisl")).args(args).output().expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8(o.stderr.clone()).unwrap()
}

#[test]
fn propagate_lists_every_satellite() {
    let o = leoisl(&["propagate", "--epoch", "100"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let out = stdout(&o);
    let mut lines = out.lines();
    assert_eq!(lines.next(), Some("sat_id,plane,slot,x_km,y_km,z_km,vx_km_s,vy_km_s,vz_km_s"));
    assert_eq!(lines.count(), 120);
}

#[test]
fn dynamic_topology_respects_the_cap() {
    let o = leoisl(&["topology", "--mode", "dynamic", "--max-isls", "2"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let out = stdout(&o);
    let mut degree = std::collections::HashMap::new();
    for line in out.lines().skip(1) {
        let f: Vec<&str> = line.split(',').collect();
        assert_eq!(f[3], "isl_laser");
        *degree.entry(f[1].to_string()).or_insert(0) += 1;
        *degree.entry(f[2].to_string()).or_insert(0) += 1;
    }
    assert!(!degree.is_empty() && degree.values().all(|&d| d <= 2));
}

#[test]
fn topology_with_ground_adds_rf_links() {
    let o = leoisl(&["topology", "--with-ground"]);
    let out = stdout(&o);
    for class in ["ground_to_sat", "sat_to_air", "isl_laser"] {
        assert!(out.contains(class), "missing {class}");
    }
}

#[test]
fn route_reports_path_fields() {
    let o = leoisl(&["route", "--src", "GS-Beijing", "--dst", "AC-01", "--metric", "hops"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let out = stdout(&o);
    for key in ["path: GS-Beijing", "hops:", "distance_km:", "delay_s:", "bottleneck_bps:"] {
        assert!(out.contains(key), "missing {key} in {out}");
    }
}

#[test]
fn unknown_node_is_an_input_error() {
    let o = leoisl(&["route", "--src", "nowhere", "--dst", "S0-0"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("nowhere"));
}

#[test]
fn bad_scenario_names_line_and_field() {
    let mut f = tempfile::NamedTempFile::new().unwrap();
    write!(f, "seeds = [1]\n[constellation]\nnum_planes = 0\n").unwrap();
    let o = leoisl(&["propagate", "-s", f.path().to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
    let err = stderr(&o);
    assert!(err.contains("line 3") && err.contains("constellation.num_planes"), "{err}");
}

#[test]
fn bad_flags_exit_with_one() {
    assert_eq!(leoisl(&["ifc-sweep", "--isls", "3..1"]).status.code(), Some(1));
    assert_eq!(leoisl(&["ifc-sweep", "--modes", "fastest"]).status.code(), Some(1));
    assert_eq!(leoisl(&["no-such-command"]).status.code(), Some(1));
    assert_eq!(leoisl(&["--help"]).status.code(), Some(0));
}

#[test]
fn sdp_mhp_reports_fraction() {
    let o = leoisl(&["sdp-mhp", "--pairs", "30", "--epochs", "2", "--seed", "9"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let out = stdout(&o);
    let fraction: f64 = out.lines().find_map(|l| l.strip_prefix("fraction: ")).unwrap().parse().unwrap();
    assert!((0.0..=1.0).contains(&fraction));
    assert_eq!(out.lines().filter(|l| l.starts_with("epoch ")).count(), 2);
}

#[test]
fn hops_reads_pair_file() {
    let mut f = tempfile::NamedTempFile::new().unwrap();
    write!(f, "pair_id,lat_a,lon_a,lat_b,lon_b\nbj-hk,39.9,116.4,22.3,114.2\n").unwrap();
    let o = leoisl(&["hops", "--pairs", f.path().to_str().unwrap(), "--epochs", "3"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let out = stdout(&o);
    assert!(out.starts_with("pair_id,epoch_s,min_hops,max_hops,mean_hops,spread\n"));
    assert_eq!(out.lines().filter(|l| l.starts_with("bj-hk,")).count(), 3);
}

#[test]
fn sweep_csv_is_deterministic() {
    let args = ["ifc-sweep", "--isls", "1..2", "--modes", "optimized,equal", "--seeds", "2"];
    let (a, b) = (leoisl(&args), leoisl(&args));
    assert!(a.status.success(), "{}", stderr(&a));
    assert_eq!(a.stdout, b.stdout);
    let out = stdout(&a);
    assert!(out.starts_with("max_isls,mode,seed,epoch_s,avg_delay_s,delivered,undelivered\n"));
    // 2 caps x 2 modes x 2 seeds x 3 epochs.
    assert_eq!(out.lines().count(), 1 + 24);
}
