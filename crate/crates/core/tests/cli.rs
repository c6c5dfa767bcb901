use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};
use std::sync::atomic::{AtomicBool, AtomicUsize, Ordering};
use std::sync::Arc;

use transplant_bench::detector::{load_detections, to_record_line, StubDetector};
use transplant_bench::sweep::enumerate_translations;
use transplant_bench::{DetectionSet, ImageBuffer};

fn tb<I, S>(args: I) -> Output
where
    I: IntoIterator<Item = S>,
    S: AsRef<std::ffi::OsStr>,
{
    Command::new(env!("CARGO_BIN_EXE_transplant-bench"))
        .args(args)
        .env("TRANSPLANT_BENCH_HTTP_TIMEOUT_MS", "2000")
        .output()
        .unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn ok(o: Output) -> Output {
    assert!(o.status.success(), "exit {:?}: {}", o.status.code(), stderr(&o));
    o
}

struct Corpus {
    _dir: tempfile::TempDir,
    root: PathBuf,
}

impl Corpus {
    fn new() -> Self {
        let dir = tempfile::tempdir().unwrap();
        let root = dir.path().to_path_buf();
        ok(tb(["synth", "--out", root.join("corpus").to_str().unwrap(), "--images", "3"]));
        Corpus { _dir: dir, root }
    }

    fn annotations(&self) -> String {
        self.root.join("corpus/annotations.json").display().to_string()
    }

    fn images(&self) -> String {
        self.root.join("corpus/images").display().to_string()
    }

    fn out(&self, name: &str) -> String {
        self.root.join(name).display().to_string()
    }

    fn generate(&self, out: &str, extra: &[&str]) -> Output {
        let mut args = vec![
            "generate".to_string(),
            "--annotations".into(),
            self.annotations(),
            "--images".into(),
            self.images(),
            "--out".into(),
            out.into(),
        ];
        args.extend(extra.iter().map(|s| s.to_string()));
        tb(args)
    }
}

fn lines(path: impl AsRef<Path>) -> usize {
    fs::read_to_string(path).unwrap().lines().count()
}

#[test]
fn missing_annotations_exit_2_and_name_the_path() {
    let o = tb(["generate", "--annotations", "/no/such/annotations.json", "--images", "/tmp", "--out", "/tmp/x"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("/no/such/annotations.json"));
}

#[test]
fn bad_flags_exit_2() {
    assert_eq!(tb(["run", "--out", "/tmp/none", "--detector", "yolo"]).status.code(), Some(2));
    assert_eq!(tb(["frobnicate"]).status.code(), Some(2));
    let c = Corpus::new();
    assert_eq!(c.generate(&c.out("g"), &["--stride", "0"]).status.code(), Some(2));
    assert_eq!(c.generate(&c.out("g"), &["--base-image", "99"]).status.code(), Some(2));
}

#[test]
fn generate_run_score_single_sweep() {
    let c = Corpus::new();
    let out = c.out("sweep");
    ok(c.generate(&out, &["--base-image", "1", "--instance", "5", "--stride", "7"]));
    let ann: serde_json::Value = serde_json::from_str(&fs::read_to_string(c.annotations()).unwrap()).unwrap();
    let inst = ann["annotations"].as_array().unwrap().iter().find(|a| a["id"] == 5).unwrap();
    let (w, h) = (inst["bbox"][2].as_u64().unwrap() as u32, inst["bbox"][3].as_u64().unwrap() as u32);
    let expected = enumerate_translations((160, 120), (w, h), 7).unwrap().len() + 1;
    assert_eq!(lines(Path::new(&out).join("manifest.jsonl")), expected);
    assert_eq!(fs::read_dir(Path::new(&out).join("images")).unwrap().count(), expected);

    ok(tb(["run", "--out", &out, "--detector", "stub"]));
    assert_eq!(lines(Path::new(&out).join("detections.jsonl")), expected);
    assert!(!Path::new(&out).join("detections.partial.jsonl").exists());

    let o = ok(tb(["score", "--out", &out, "--threshold", "0", "--tau", "0.5"]));
    let table = String::from_utf8(o.stdout).unwrap();
    assert!(table.starts_with("variant"));
    let csv = fs::read_to_string(Path::new(&out).join("report/affected_table.csv")).unwrap();
    assert_eq!(csv.lines().next().unwrap(), "variant,tau_0.5,denominator");
    assert_eq!(csv.lines().count(), 5);
    assert_eq!(lines(Path::new(&out).join("report/records.jsonl")), expected - 1);
}

#[test]
fn duplicate_mode_keeps_source_on_base() {
    let c = Corpus::new();
    let out = c.out("dup");
    ok(c.generate(&out, &["--base-image", "2", "--duplicate", "--stride", "20"]));
    for line in fs::read_to_string(Path::new(&out).join("manifest.jsonl")).unwrap().lines() {
        let v: serde_json::Value = serde_json::from_str(line).unwrap();
        assert_eq!(v["base_image_id"], v["source_image_id"]);
    }
}

#[test]
fn same_seed_same_manifest() {
    let c = Corpus::new();
    let (a, b) = (c.out("a"), c.out("b"));
    ok(c.generate(&a, &["--seed", "5", "--stride", "15"]));
    ok(c.generate(&b, &["--seed", "5", "--stride", "15", "--jobs", "1"]));
    let ma = fs::read_to_string(Path::new(&a).join("manifest.jsonl")).unwrap();
    let mb = fs::read_to_string(Path::new(&b).join("manifest.jsonl")).unwrap();
    assert_eq!(ma.replace(&a, ""), mb.replace(&b, ""));
}

#[test]
fn file_backend_missing_case_names_it() {
    let c = Corpus::new();
    let out = c.out("f");
    ok(c.generate(&out, &["--base-image", "1", "--stride", "30"]));
    let dets = Path::new(&c.root).join("partial.jsonl");
    fs::write(&dets, format!("{}\n", to_record_line(&DetectionSet::new("original-b1", "ext", vec![])))).unwrap();
    let o = tb(["run", "--out", &out, "--detector", &format!("file:{}", dets.display())]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("transplant-b1-"), "{}", stderr(&o));
}

#[test]
fn score_errors() {
    let c = Corpus::new();
    let out = c.out("s");
    ok(c.generate(&out, &["--base-image", "1", "--stride", "30"]));
    ok(tb(["run", "--out", &out, "--detector", "stub"]));
    let det_path = Path::new(&out).join("detections.jsonl");
    let text = fs::read_to_string(&det_path).unwrap();

    let without_null: String = text.lines().filter(|l| !l.contains("\"original-b1\"")).map(|l| format!("{l}\n")).collect();
    let p = Path::new(&c.root).join("no-null.jsonl");
    fs::write(&p, without_null).unwrap();
    let o = tb(["score", "--out", &out, "--detections", p.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("null case"), "{}", stderr(&o));

    let mixed = text.replacen("\"stub-v1\"", "\"other\"", 1);
    let p = Path::new(&c.root).join("mixed.jsonl");
    fs::write(&p, mixed).unwrap();
    let o = tb(["score", "--out", &out, "--detections", p.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("several detectors"));

    assert_eq!(tb(["score", "--out", &out, "--tau", "1.5"]).status.code(), Some(2));
}

/// Mock inference service; fails with 500 once `budget` requests were served
/// while `healthy` is false.
fn spawn_service(healthy: Arc<AtomicBool>, budget: usize) -> String {
    let server = tiny_http::Server::http("127.0.0.1:0").unwrap();
    let port = server.server_addr().to_ip().unwrap().port();
    let served = Arc::new(AtomicUsize::new(0));
    std::thread::spawn(move || {
        for mut req in server.incoming_requests() {
            let mut body = Vec::new();
            std::io::Read::read_to_end(req.as_reader(), &mut body).unwrap();
            let n = served.fetch_add(1, Ordering::SeqCst);
            if !healthy.load(Ordering::SeqCst) && n >= budget {
                let _ = req.respond(tiny_http::Response::from_string("down").with_status_code(500));
                continue;
            }
            let case_id = req.url().split_once("case_id=").unwrap().1.to_string();
            let img = ImageBuffer::decode_png(&body).unwrap();
            let set = DetectionSet::new(case_id, "stub-v1", StubDetector.detect_image(&img));
            let _ = req.respond(tiny_http::Response::from_string(to_record_line(&set)));
        }
    });
    format!("http:127.0.0.1:{port}")
}

#[test]
fn http_backend_resumes_and_matches_stub_reports() {
    let c = Corpus::new();
    let out = c.out("h");
    ok(c.generate(&out, &["--base-image", "1", "--stride", "12"]));
    let total = lines(Path::new(&out).join("manifest.jsonl"));

    let healthy = Arc::new(AtomicBool::new(false));
    let spec = spawn_service(healthy.clone(), 10);
    let o = tb(["run", "--out", &out, "--detector", &spec, "--jobs", "2"]);
    assert_eq!(o.status.code(), Some(1));
    let partial = Path::new(&out).join("detections.partial.jsonl");
    let done = lines(&partial);
    assert!(done >= 1 && done < total, "{done} of {total}");
    assert!(!Path::new(&out).join("detections.jsonl").exists());

    healthy.store(true, Ordering::SeqCst);
    let o = ok(tb(["run", "--out", &out, "--detector", &spec, "--jobs", "2"]));
    assert!(stderr(&o).contains("resuming"));
    assert_eq!(lines(Path::new(&out).join("detections.jsonl")), total);
    ok(tb(["score", "--out", &out, "--threshold", "0"]));

    let stub_out = c.out("h-stub");
    ok(c.generate(&stub_out, &["--base-image", "1", "--stride", "12"]));
    ok(tb(["run", "--out", &stub_out, "--detector", "stub"]));
    ok(tb(["score", "--out", &stub_out, "--threshold", "0"]));
    for f in ["affected_table.csv", "affected_by_image.csv", "records.jsonl", "exemplars.json"] {
        let a = fs::read(Path::new(&out).join("report").join(f)).unwrap();
        let b = fs::read(Path::new(&stub_out).join("report").join(f)).unwrap();
        assert_eq!(a, b, "{f}");
    }
    let http_sets = load_detections(&Path::new(&out).join("detections.jsonl")).unwrap().sets;
    let stub_sets = load_detections(&Path::new(&stub_out).join("detections.jsonl")).unwrap().sets;
    assert_eq!(http_sets, stub_sets);
}

#[test]
fn http_service_down_exits_nonzero_and_keeps_state() {
    let c = Corpus::new();
    let out = c.out("down");
    ok(c.generate(&out, &["--base-image", "1", "--stride", "40"]));
    let port = std::net::TcpListener::bind("127.0.0.1:0").unwrap().local_addr().unwrap().port();
    let o = tb(["run", "--out", &out, "--detector", &format!("http:127.0.0.1:{port}")]);
    assert_eq!(o.status.code(), Some(1));
    assert!(Path::new(&out).join("detections.partial.jsonl").exists());
}

#[test]
fn ablate_variants() {
    let c = Corpus::new();
    let ann = c.annotations();
    let imgs = c.images();
    let base = ImageBuffer::open(&Path::new(&imgs).join("000001.png")).unwrap();
    let run = |variant: &str, extra: &[&str], name: &str| -> Output {
        let out = c.out(name);
        let mut args: Vec<String> = ["ablate", "--annotations", &ann, "--images", &imgs, "--instance", "1", "--variant", variant, "--out", &out]
            .iter()
            .map(|s| s.to_string())
            .collect();
        args.extend(extra.iter().map(|s| s.to_string()));
        tb(args)
    };

    ok(run("outside-zero", &["--box", "0,0,160,120"], "full.png"));
    assert_eq!(ImageBuffer::open(Path::new(&c.out("full.png"))).unwrap(), base);

    ok(run("mask-only", &[], "mask.png"));
    let ann_doc: serde_json::Value = serde_json::from_str(&fs::read_to_string(&ann).unwrap()).unwrap();
    let b = &ann_doc["annotations"][0]["bbox"];
    let (x0, y0) = (b[0].as_u64().unwrap() as u32, b[1].as_u64().unwrap() as u32);
    let (x1, y1) = (x0 + b[2].as_u64().unwrap() as u32, y0 + b[3].as_u64().unwrap() as u32);
    let masked = ImageBuffer::open(Path::new(&c.out("mask.png"))).unwrap();
    for y in 0..120 {
        for x in 0..160 {
            if !(x0..x1).contains(&x) || !(y0..y1).contains(&y) {
                assert_eq!(masked.pixel(x, y), [0, 0, 0]);
            }
        }
    }

    ok(run("mask-plus-noise", &["--seed", "9"], "n1.png"));
    ok(run("mask-plus-noise", &["--seed", "9"], "n2.png"));
    assert_eq!(fs::read(c.out("n1.png")).unwrap(), fs::read(c.out("n2.png")).unwrap());

    assert_eq!(run("outside-zero", &["--box", "500,500,600,600"], "bad.png").status.code(), Some(2));
}

fn chain_file(dir: &Path) -> PathBuf {
    let p = dir.join("chain.jsonl");
    let rec = serde_json::json!({
        "case_id": "chain",
        "detector_id": "hand",
        "detections": [
            {"box": [0.0, 0.0, 10.5, 10.0], "score": 0.9, "category_id": 1, "category_name": "a"},
            {"box": [0.0, 0.0, 20.0, 10.0], "score": 0.8, "category_id": 1, "category_name": "a"},
            {"box": [9.5, 0.0, 20.0, 10.0], "score": 0.7, "category_id": 1, "category_name": "a"},
            {"box": [100.0, 100.0, 110.0, 110.0], "score": 0.6, "category_id": 1, "category_name": "a"}
        ]
    });
    fs::write(&p, format!("{rec}\n")).unwrap();
    p
}

#[test]
fn nms_probe_reports_chain_reaction() {
    let dir = tempfile::tempdir().unwrap();
    let p = chain_file(dir.path());
    let o = ok(tb(["nms-probe", "--detections", p.to_str().unwrap(), "--index", "0"]));
    let v: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(v["kept_before"], serde_json::json!([0, 2, 3]));
    assert_eq!(v["kept_after"], serde_json::json!([1, 3]));
    assert_eq!(v["newly_suppressed"], serde_json::json!([2]));

    let o = ok(tb(["nms-probe", "--detections", p.to_str().unwrap(), "--index", "3"]));
    let v: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(v["kept_diff"], serde_json::json!([3]));

    assert_eq!(tb(["nms-probe", "--detections", p.to_str().unwrap(), "--index", "4"]).status.code(), Some(2));
}
