use std::fs;
use std::path::Path;
use std::process::{Command, Output};

const SMALL: &str = "\
# small network
[topology]
num_r = 10
num_u = 60
u_outbound = 4
r_outbound = 3

[adversary]
enabled = true
num_spy_r = 1
connections_per_r = 2

[workload]
num_txs = 20

[run]
seed = 42
";

fn relaysim(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_relaysim"))
        .args(args)
        .output()
        .expect("spawn")
}

fn write(dir: &Path, name: &str, body: &str) -> String {
    let p = dir.join(name);
    fs::write(&p, body).unwrap();
    p.display().to_string()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

#[test]
fn run_twice_gives_identical_files() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write(tmp.path(), "a.cfg", SMALL);
    let mut outs = Vec::new();
    for i in 0..2 {
        let out = tmp.path().join(format!("out{i}"));
        let o = relaysim(&["run", &cfg, "--trace", "--out", out.to_str().unwrap()]);
        assert!(o.status.success(), "{}", stderr(&o));
        let mut files = Vec::new();
        for name in ["report.json", "observations.csv", "topology.txt", "trace.txt"] {
            files.push(fs::read(out.join(name)).unwrap());
        }
        outs.push(files);
    }
    assert_eq!(outs[0], outs[1]);
    let csv = String::from_utf8(outs[0][1].clone()).unwrap();
    assert!(csv.starts_with("txid,observed_at,from_node,msg_kind\n"));
    // --seed changes the outcome.
    let out = tmp.path().join("other");
    let o = relaysim(&["run", &cfg, "--seed", "7", "--out", out.to_str().unwrap()]);
    assert!(o.status.success());
    assert_ne!(fs::read(out.join("report.json")).unwrap(), outs[0][0]);
    assert!(!out.join("trace.txt").exists());
}

#[test]
fn misspelled_key_is_a_config_error() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write(tmp.path(), "bad.cfg", "[protocol]\nproxyy_set_size = 4\n");
    for cmd in ["validate", "run", "sweep"] {
        let o = relaysim(&[cmd, &cfg]);
        assert_eq!(o.status.code(), Some(1), "{cmd}");
        let e = stderr(&o);
        assert!(e.contains("proxyy_set_size"), "{e}");
        assert!(e.contains("line 2"), "{e}");
    }
    let cfg = write(tmp.path(), "range.cfg", "protocol.p = 1.5\n");
    assert_eq!(relaysim(&["validate", &cfg]).status.code(), Some(1));
}

#[test]
fn missing_files_are_io_errors() {
    let tmp = tempfile::tempdir().unwrap();
    let gone = tmp.path().join("nope.cfg");
    let o = relaysim(&["run", gone.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("nope.cfg"));
    let o = relaysim(&["report", tmp.path().join("nodir").to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn validate_prints_effective_config() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write(tmp.path(), "a.cfg", SMALL);
    let o = relaysim(&["validate", &cfg]);
    assert!(o.status.success());
    let text = String::from_utf8(o.stdout).unwrap();
    assert!(text.contains("topology.num_r = 10"));
    assert!(text.contains("protocol.proxy_set_size = 4"));
    // The printed form is itself a valid config.
    let again = write(tmp.path(), "b.cfg", &text);
    let o2 = relaysim(&["validate", &again]);
    assert_eq!(String::from_utf8(o2.stdout).unwrap(), text);
}

#[test]
fn sweep_then_report_round_trips() {
    let tmp = tempfile::tempdir().unwrap();
    let body = format!("{SMALL}\n[sweep]\np = 0.8, 0.5\n\n[run]\nreplicas = 3\n");
    let cfg = write(tmp.path(), "s.cfg", &body.replace("[run]\nseed = 42\n", ""));
    let out = tmp.path().join("sweep");
    let o = relaysim(&["sweep", &cfg, "--jobs", "3", "--out", out.to_str().unwrap()]);
    assert!(o.status.success(), "{}", stderr(&o));
    let csv = fs::read_to_string(out.join("sweep.csv")).unwrap();
    let mut lines = csv.lines();
    assert_eq!(
        lines.next(),
        Some("run,cell,replica,seed,mode,p,u_outbound,num_spy_r,metric,value")
    );
    let mut groups: Vec<(String, String)> = lines
        .map(|l| {
            let f: Vec<&str> = l.split(',').collect();
            (f[1].to_string(), f[2].to_string())
        })
        .collect();
    groups.dedup();
    assert_eq!(groups.len(), 6);
    assert!(csv.contains(",median_t90,"));
    assert_eq!(fs::read_dir(out.join("runs")).unwrap().count(), 6);

    fs::remove_file(out.join("sweep.csv")).unwrap();
    let o = relaysim(&["report", out.to_str().unwrap()]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert_eq!(fs::read_to_string(out.join("sweep.csv")).unwrap(), csv);

    // Same sweep with a different job count writes the same CSV.
    let out2 = tmp.path().join("sweep2");
    let o = relaysim(&["sweep", &cfg, "--jobs", "1", "--out", out2.to_str().unwrap()]);
    assert!(o.status.success());
    assert_eq!(fs::read_to_string(out2.join("sweep.csv")).unwrap(), csv);
}

#[test]
fn corrupt_report_is_reported() {
    let tmp = tempfile::tempdir().unwrap();
    fs::create_dir_all(tmp.path().join("runs")).unwrap();
    write(&tmp.path().join("runs"), "cell0000_rep0000.json", "{ not json");
    let o = relaysim(&["report", tmp.path().to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("cell0000_rep0000.json"));
}
