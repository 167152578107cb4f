use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use fprdo::eval::synthetic_image;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_fprdo"))
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().unwrap()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

struct Work {
    dir: tempfile::TempDir,
}

impl Work {
    fn new() -> Self {
        let w = Work {
            dir: tempfile::tempdir().unwrap(),
        };
        synthetic_image(72, 56, 9).unwrap().save_pgm(w.path("in.pgm")).unwrap();
        let out = run(&["gen-weights", "--out", s(&w.path("w.bin")), "--seed", "1"]);
        assert!(out.status.success());
        w
    }

    fn path(&self, name: &str) -> PathBuf {
        self.dir.path().join(name)
    }
}

#[test]
fn encode_then_decode_matches_reconstruction() {
    let w = Work::new();
    for metric in ["sse", "idse", "fd"] {
        let bit = w.path(&format!("{metric}.bit"));
        let rec = w.path(&format!("{metric}.rec.pgm"));
        let dec = w.path(&format!("{metric}.dec.pgm"));
        let out = run(&[
            "encode", "--in", s(&w.path("in.pgm")), "--out", s(&bit), "--metric", metric,
            "--weights", s(&w.path("w.bin")), "--qp", "30", "--recon", s(&rec),
            "--decisions-csv", s(&w.path("d.csv")),
        ]);
        assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
        assert!(String::from_utf8_lossy(&out.stdout).contains("bits="));
        assert!(run(&["decode", "--in", s(&bit), "--out", s(&dec)]).status.success());
        assert_eq!(std::fs::read(&rec).unwrap(), std::fs::read(&dec).unwrap());
        let log = std::fs::read_to_string(w.path("d.csv")).unwrap();
        assert!(log.starts_with("index,mode,distortion,rate_bits,cost"));
        // 5 x 4 blocks after padding to 80 x 64
        assert_eq!(log.lines().count(), 1 + 20);
    }
}

#[test]
fn encode_is_deterministic() {
    let w = Work::new();
    let enc = |name: &str| {
        let p = w.path(name);
        let out = run(&[
            "encode", "--in", s(&w.path("in.pgm")), "--out", s(&p), "--metric", "idse",
            "--weights", s(&w.path("w.bin")), "--seed", "3", "--threads", "2",
        ]);
        assert!(out.status.success());
        std::fs::read(p).unwrap()
    };
    assert_eq!(enc("a.bit"), enc("b.bit"));
}

#[test]
fn sweep_and_bdrate() {
    let w = Work::new();
    for (metric, csv) in [("sse", "sse.csv"), ("idse", "idse.csv")] {
        let out = run(&[
            "sweep", "--in", s(&w.path("in.pgm")), "--metric", metric, "--weights", s(&w.path("w.bin")),
            "--curve-csv", s(&w.path(csv)), "--dat", s(&w.path("c.dat")),
        ]);
        assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    }
    let out = run(&["bdrate", "--anchor", s(&w.path("sse.csv")), "--test", s(&w.path("sse.csv"))]);
    assert!(out.status.success());
    assert!(String::from_utf8_lossy(&out.stdout).starts_with("bd_rate_percent=0.0000"));
    let out = run(&[
        "bdrate", "--anchor", s(&w.path("sse.csv")), "--test", s(&w.path("idse.csv")), "--axis", "neg-idse",
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let out = run(&["sweep", "--in", s(&w.path("in.pgm")), "--qps", "30,28"]);
    assert_eq!(out.status.code(), Some(3));
}

#[test]
fn importance_and_sidecar() {
    let w = Work::new();
    let imp = w.path("imp.pgm");
    let out = run(&["importance", "--in", s(&w.path("in.pgm")), "--out", s(&imp), "--weights", s(&w.path("w.bin"))]);
    assert!(out.status.success());
    assert!(std::fs::read(&imp).unwrap().starts_with(b"P5"));
    let out = run(&[
        "encode", "--in", s(&w.path("in.pgm")), "--out", s(&w.path("x.bit")), "--metric", "idse",
        "--weights", s(&w.path("w.bin")), "--sidecar", s(&w.path("sj.bin")),
    ]);
    assert!(out.status.success());
    assert!(std::fs::read(w.path("sj.bin")).unwrap().starts_with(b"FPSJ"));
}

#[test]
fn flops_reports_ratio() {
    let out = run(&["flops", "--h", "768", "--w", "768", "--hr", "224", "--wr", "224", "--nr", "2", "--ell", "2"]);
    assert!(out.status.success());
    assert!(String::from_utf8_lossy(&out.stdout).contains("ratio=7.0531"));
}

#[test]
fn exit_codes() {
    let w = Work::new();
    assert_eq!(run(&["--help"]).status.code(), Some(0));
    assert_eq!(run(&["no-such-command"]).status.code(), Some(1));
    assert_eq!(run(&["encode", "--in", s(&w.path("in.pgm"))]).status.code(), Some(1));
    let needs_weights = run(&["encode", "--in", s(&w.path("in.pgm")), "--out", s(&w.path("o.bit")), "--metric", "fd"]);
    assert_eq!(needs_weights.status.code(), Some(1));
    assert_eq!(run(&["decode", "--in", s(&w.path("missing.bit")), "--out", s(&w.path("o.pgm"))]).status.code(), Some(2));
    std::fs::write(w.path("junk.bit"), b"not a bitstream").unwrap();
    assert_eq!(run(&["decode", "--in", s(&w.path("junk.bit")), "--out", s(&w.path("o.pgm"))]).status.code(), Some(3));
    let bad_qp = run(&["encode", "--in", s(&w.path("in.pgm")), "--out", s(&w.path("o.bit")), "--qp", "99"]);
    assert_eq!(bad_qp.status.code(), Some(3));
    assert!(!String::from_utf8_lossy(&bad_qp.stderr).is_empty());
}
