use std::path::{Path, PathBuf};
use std::process::{Command, Output};
use std::sync::OnceLock;

use latent_edit::formats;
use latent_edit::manifest::ArtifactManifest;
use latent_edit::world::LatentShape;
use nalgebra::{DMatrix, DVector};

const SMALL: [&str; 8] = [
    "--samples=400",
    "--classifier-iterations=50",
    "--judge-iterations=50",
    "--transformer-iterations=60",
    "--eval-samples=30",
    "--count=5",
    "--seed=3",
    "--force",
];

fn bin() -> Command {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_latent-edit"));
    cmd.env_remove("LATENT_EDIT_ROOT").env("RUST_LOG", "error");
    cmd
}

fn run_in(root: &Path, args: &[&str]) -> Output {
    bin().arg("--root").arg(root).args(args).output().expect("binary runs")
}

fn ok(root: &Path, args: &[&str]) -> String {
    let out = run_in(root, args);
    assert!(out.status.success(), "{args:?} failed: {}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout).unwrap()
}

fn fails(root: &Path, args: &[&str]) -> String {
    let out = run_in(root, args);
    assert!(!out.status.success(), "{args:?} unexpectedly succeeded");
    String::from_utf8(out.stderr).unwrap()
}

fn small(extra: &[&'static str]) -> Vec<&'static str> {
    extra.iter().copied().chain(SMALL).collect()
}

fn train_small(root: &Path) {
    ok(root, &small(&["gen-world"]));
    ok(root, &small(&["train-classifier"]));
    ok(root, &small(&["train-judge"]));
    ok(root, &small(&["train-transformer", "--attribute", "smile,beard", "--jobs", "2"]));
}

/// A trained run shared by tests that only read from it.
fn trained() -> &'static Path {
    static ROOT: OnceLock<PathBuf> = OnceLock::new();
    ROOT.get_or_init(|| {
        let dir = tempfile::tempdir().unwrap().keep();
        train_small(&dir);
        dir
    })
}

fn fixture(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures").join(name)
}

fn shape() -> LatentShape {
    LatentShape::new(4, 4).unwrap()
}

#[test]
fn gen_world_writes_dataset_schema() {
    let dir = tempfile::tempdir().unwrap();
    ok(dir.path(), &["gen-world"]);
    let csv = std::fs::read_to_string(dir.path().join("dataset.csv")).unwrap();
    let header: Vec<&str> = csv.lines().next().unwrap().split(',').collect();
    assert_eq!(header.iter().filter(|h| h.starts_with("attr_")).count(), 8);
    assert_eq!(header.iter().filter(|h| h.starts_with("w_")).count(), 16);
    assert_eq!(csv.lines().count(), 4001);
    let manifest = ArtifactManifest::load(dir.path()).unwrap();
    assert_eq!(manifest.artifacts["dataset.csv"].details["train_rows"], 3600);
    assert_eq!(manifest.artifacts["dataset.csv"].details["test_rows"], 400);
    let config = latent_edit::config::RunConfig::load(&dir.path().join("config.json")).unwrap();
    assert_eq!(config.seed, 7);
}

#[test]
fn reruns_reproduce_artifact_hashes() {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    for root in [a.path(), b.path()] {
        train_small(root);
        ok(root, &small(&["eval", "--attribute", "smile,beard"]));
        ok(root, &small(&["ablate", "--attribute", "smile"]));
    }
    let hashes = |root: &Path| -> Vec<(String, String)> {
        ArtifactManifest::load(root).unwrap().artifacts.into_iter().map(|(k, v)| (k, v.sha256)).collect()
    };
    let first = hashes(a.path());
    assert!(first.len() > 15);
    assert_eq!(first, hashes(b.path()));
}

#[test]
fn missing_prerequisites_are_named() {
    let dir = tempfile::tempdir().unwrap();
    let err = fails(dir.path(), &["train-classifier"]);
    assert!(err.contains("world.json"), "{err}");
    ok(dir.path(), &small(&["gen-world"]));
    let err = fails(dir.path(), &small(&["train-transformer"]));
    assert!(err.contains("missing prerequisite") && err.contains("classifier.json"), "{err}");
}

#[test]
fn outputs_are_not_overwritten_without_force() {
    let dir = tempfile::tempdir().unwrap();
    ok(dir.path(), &["--samples=100", "gen-world"]);
    let err = fails(dir.path(), &["--samples=100", "gen-world"]);
    assert!(err.contains("--force"), "{err}");
    ok(dir.path(), &["--samples=100", "gen-world", "--force"]);
}

#[test]
fn flags_override_the_config_file() {
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("run.json");
    std::fs::write(&config, r#"{"seed": 11, "dataset": {"samples": 300}}"#).unwrap();
    let root = dir.path().join("run");
    let out = ok(&root, &["--config", config.to_str().unwrap(), "--samples=200", "gen-world"]);
    assert!(out.contains("samples 200"), "{out}");
    let saved = latent_edit::config::RunConfig::load(&root.join("config.json")).unwrap();
    assert_eq!((saved.seed, saved.dataset.samples), (11, 200));
}

#[test]
fn loss_log_has_one_row_per_interval() {
    let dir = tempfile::tempdir().unwrap();
    ok(dir.path(), &["--samples=200", "gen-world"]);
    ok(dir.path(), &["--classifier-iterations=70", "train-classifier"]);
    let log = std::fs::read_to_string(dir.path().join("classifier_loss.csv")).unwrap();
    assert_eq!(log.lines().count(), 1 + 7);
}

#[test]
fn empty_edit_script_returns_the_input() {
    let root = trained();
    let out_dir = tempfile::tempdir().unwrap();
    let input = root.join("test_latents.csv");
    let output = out_dir.path().join("same.csv");
    ok(root, &["edit", "--input", input.to_str().unwrap(), "--output", output.to_str().unwrap()]);
    let a = formats::decode_latents(&std::fs::read(&input).unwrap(), shape()).unwrap();
    let b = formats::decode_latents(&std::fs::read(&output).unwrap(), shape()).unwrap();
    assert_eq!(a.rows, b.rows);
}

#[test]
fn fixed_displacement_edits_round_trip() {
    let root = trained();
    let out_dir = tempfile::tempdir().unwrap();
    let input = root.join("test_latents.csv");
    let output = out_dir.path().join("round.csv");
    ok(root, &["edit", "--input", input.to_str().unwrap(), "--output", output.to_str().unwrap(), "--fixed-displacement", "smile:1.0", "smile:-1.0"]);
    let text = std::fs::read_to_string(&output).unwrap();
    assert!(text.starts_with("# script: smile:1 smile:-1\n"), "{}", &text[..80]);
    assert!(text.contains("# mode: fixed_at_source"));
    let a = formats::decode_latents(&std::fs::read(&input).unwrap(), shape()).unwrap();
    let b = formats::decode_latents(text.as_bytes(), shape()).unwrap();
    for ((_, x), (_, y)) in a.rows.iter().zip(&b.rows) {
        for (u, v) in x.flat().iter().zip(y.flat()) {
            assert!((u - v).abs() <= 1e-10);
        }
    }

    let inter = out_dir.path().join("inter.csv");
    ok(root, &["edit", "--input", input.to_str().unwrap(), "--output", inter.to_str().unwrap(), "--intermediates", "beard:0.5", "smile:2"]);
    let table = formats::decode_latents(&std::fs::read(&inter).unwrap(), shape()).unwrap();
    assert_eq!(table.key_names, ["index", "step"]);
    assert_eq!(table.rows.len(), 3 * a.rows.len());
}

#[test]
fn unknown_attribute_lists_known_names() {
    let root = trained();
    let out_dir = tempfile::tempdir().unwrap();
    let input = root.join("test_latents.csv");
    let err = fails(root, &["edit", "--input", input.to_str().unwrap(), "--output", out_dir.path().join("x.csv").to_str().unwrap(), "freckles:1"]);
    assert!(err.contains("freckles"), "{err}");
    for name in ["smile", "mouth_open", "narrow_eyes", "cheekbones", "bangs", "eyeglasses", "beard", "makeup"] {
        assert!(err.contains(name), "{name} missing from: {err}");
    }
}

#[test]
fn edit_refuses_to_overwrite_its_input() {
    let root = trained();
    let copy = tempfile::tempdir().unwrap();
    let input = copy.path().join("codes.csv");
    std::fs::copy(root.join("test_latents.csv"), &input).unwrap();
    let before = std::fs::read(&input).unwrap();
    let err = fails(root, &["edit", "--force", "--input", input.to_str().unwrap(), "--output", input.to_str().unwrap(), "smile:1"]);
    assert!(err.contains("overwrite"), "{err}");
    assert_eq!(std::fs::read(&input).unwrap(), before);
}

#[test]
fn sweep_writes_count_rows_per_code() {
    let root = trained();
    let out_dir = tempfile::tempdir().unwrap();
    let input = root.join("test_latents.csv");
    let output = out_dir.path().join("sweep.csv");
    let stdout = ok(root, &["sweep", "--input", input.to_str().unwrap(), "--output", output.to_str().unwrap(), "--attribute", "beard", "--count=5"]);
    assert!(stdout.contains("5 factors"), "{stdout}");
    let text = std::fs::read_to_string(&output).unwrap();
    assert!(text.contains("# factors: 0.4 0.8 1.2 1.6 2"), "{text:.200}");
    let rows = formats::decode_latents(text.as_bytes(), shape()).unwrap().rows.len();
    let codes = formats::decode_latents(&std::fs::read(&input).unwrap(), shape()).unwrap().rows.len();
    assert_eq!(rows, 5 * codes);
}

#[test]
fn eval_and_ablation_reports() {
    let dir = tempfile::tempdir().unwrap();
    let root = dir.path();
    train_small(root);
    ok(root, &small(&["eval", "--attribute", "smile,beard"]));
    let eval = std::fs::read(root.join("eval.csv")).unwrap();
    let rows = formats::decode_report(&eval).unwrap();
    for name in ["smile", "beard"] {
        let mine: Vec<_> = rows.iter().filter(|r| r.attribute == name).collect();
        assert_eq!(mine.len(), 5 + 1);
        assert_eq!(mine[0].factor, 0.0);
    }
    ok(root, &small(&["ablate", "--attribute", "beard"]));
    let ablation = std::fs::read(root.join("ablation.csv")).unwrap();
    let mut scenarios: Vec<String> = formats::decode_report(&ablation).unwrap().into_iter().map(|r| r.scenario).collect();
    scenarios.dedup();
    assert_eq!(scenarios, ["full", "no_attr", "no_rec"]);

    ok(root, &small(&["eval", "--attribute", "smile,beard"]));
    ok(root, &small(&["ablate", "--attribute", "beard"]));
    assert_eq!(std::fs::read(root.join("eval.csv")).unwrap(), eval);
    assert_eq!(std::fs::read(root.join("ablation.csv")).unwrap(), ablation);
}

#[test]
fn corrupted_artifacts_fail_loudly() {
    let dir = tempfile::tempdir().unwrap();
    ok(dir.path(), &["--samples=100", "gen-world"]);
    let world = dir.path().join("world.json");
    let mut bytes = std::fs::read(&world).unwrap();
    bytes.push(b' ');
    std::fs::write(&world, bytes).unwrap();
    let err = fails(dir.path(), &["train-classifier"]);
    assert!(err.contains("hash mismatch"), "{err}");
}

#[test]
fn blend_with_empty_mask_copies_the_target() {
    let dir = tempfile::tempdir().unwrap();
    let mut mask = b"P5\n8 8\n255\n".to_vec();
    mask.extend([0u8; 64]);
    std::fs::write(dir.path().join("empty.pgm"), mask).unwrap();
    let out = dir.path().join("out.ppm");
    ok(dir.path(), &[
        "blend",
        fixture("source.ppm").to_str().unwrap(),
        fixture("target.ppm").to_str().unwrap(),
        dir.path().join("empty.pgm").to_str().unwrap(),
        out.to_str().unwrap(),
    ]);
    assert_eq!(std::fs::read(out).unwrap(), std::fs::read(fixture("target.ppm")).unwrap());
}

#[test]
fn blend_matches_golden_fixture() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out.ppm");
    ok(dir.path(), &[
        "blend",
        fixture("source.ppm").to_str().unwrap(),
        fixture("target.ppm").to_str().unwrap(),
        fixture("mask.pgm").to_str().unwrap(),
        out.to_str().unwrap(),
    ]);
    let got = std::fs::read(out).unwrap();
    let want = std::fs::read(fixture("golden.ppm")).unwrap();
    assert_eq!(got.len(), want.len());
    let header = b"P6\n8 8\n255\n".len();
    assert_eq!(got[..header], want[..header]);
    for (i, (a, b)) in got[header..].iter().zip(&want[header..]).enumerate() {
        assert!(a.abs_diff(*b) <= 1, "byte {i}: {a} vs {b}");
    }
}

#[test]
fn malformed_image_reports_byte_offset() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.ppm");
    let mut bytes = std::fs::read(fixture("target.ppm")).unwrap();
    bytes.truncate(bytes.len() - 10);
    std::fs::write(&bad, bytes).unwrap();
    let err = fails(dir.path(), &[
        "blend",
        fixture("source.ppm").to_str().unwrap(),
        bad.to_str().unwrap(),
        fixture("mask.pgm").to_str().unwrap(),
        dir.path().join("out.ppm").to_str().unwrap(),
    ]);
    assert!(err.contains("malformed PNM at byte 193"), "{err}");
    assert!(!dir.path().join("out.ppm").exists());
}

#[test]
fn tiny_sigma_leaves_tracks_unchanged() {
    let dir = tempfile::tempdir().unwrap();
    let track = dir.path().join("track.csv");
    let mut csv = String::from("frame,point,x,y\n");
    for t in 0..15 {
        for p in 0..3 {
            csv += &format!("{t},{p},{},{}\n", (t * 7 + p * 13) % 29, 0.37 * (t * t) as f64 - p as f64);
        }
    }
    std::fs::write(&track, &csv).unwrap();
    let out = dir.path().join("smooth.csv");
    ok(dir.path(), &["smooth", track.to_str().unwrap(), out.to_str().unwrap(), "--sigma", "1e-6"]);
    let a = formats::decode_landmarks(csv.as_bytes()).unwrap();
    let b = formats::decode_landmarks(&std::fs::read(&out).unwrap()).unwrap();
    for (u, v) in a.coords().iter().zip(b.coords()) {
        assert!((u[0] - v[0]).abs() <= 1e-9 && (u[1] - v[1]).abs() <= 1e-9);
    }
    let mask = dir.path().join("mask.pgm");
    ok(dir.path(), &["mask", out.to_str().unwrap(), mask.to_str().unwrap(), "--frame", "4", "--height", "32", "--width", "32"]);
    assert!(formats::read_mask(&mask).unwrap().count() > 0);
}

fn fixture_planes() -> (Vec<u8>, Vec<u8>, Vec<bool>) {
    let (h, w) = (8usize, 8usize);
    let mut source = Vec::new();
    let mut target = Vec::new();
    for y in 0..h {
        for x in 0..w {
            for c in 0..3 {
                target.push((20 + 15 * x + 9 * y + 30 * c) as u8);
                source.push((((x * 37 + y * 53 + c * 71) % 11) * 20 + 15) as u8);
            }
        }
    }
    let mask = (0..h * w).map(|i| (2..6).contains(&(i / w)) && (1..6).contains(&(i % w)) || i == 6 * w + 3).collect();
    (source, target, mask)
}

/// Writes the blend fixtures, with the golden output from a dense LU solve
/// of each channel. Run with `--ignored` to regenerate.
#[test]
#[ignore]
fn generate_blend_fixture() {
    let (h, w) = (8usize, 8usize);
    let (source, target, mask) = fixture_planes();
    let unknowns: Vec<usize> = (0..h * w).filter(|&p| mask[p]).collect();
    let mut golden = target.clone();
    for c in 0..3 {
        let s = |p: usize| source[3 * p + c] as f64 / 255.0;
        let t = |p: usize| target[3 * p + c] as f64 / 255.0;
        let m = unknowns.len();
        let mut a = DMatrix::<f64>::zeros(m, m);
        let mut b = DVector::<f64>::zeros(m);
        for (row, &p) in unknowns.iter().enumerate() {
            a[(row, row)] = 4.0;
            for q in [p - w, p + w, p - 1, p + 1] {
                b[row] += s(p) - s(q);
                match unknowns.iter().position(|&u| u == q) {
                    Some(col) => a[(row, col)] = -1.0,
                    None => b[row] += t(q),
                }
            }
        }
        let f = a.lu().solve(&b).unwrap();
        for (row, &p) in unknowns.iter().enumerate() {
            golden[3 * p + c] = (f[row].clamp(0.0, 1.0) * 255.0).round() as u8;
        }
    }
    let ppm = |data: &[u8]| [b"P6\n8 8\n255\n".as_slice(), data].concat();
    let pgm = [b"P5\n8 8\n255\n".as_slice(), &mask.iter().map(|&m| if m { 255 } else { 0 }).collect::<Vec<u8>>()].concat();
    std::fs::create_dir_all(fixture("")).unwrap();
    std::fs::write(fixture("source.ppm"), ppm(&source)).unwrap();
    std::fs::write(fixture("target.ppm"), ppm(&target)).unwrap();
    std::fs::write(fixture("mask.pgm"), pgm).unwrap();
    std::fs::write(fixture("golden.ppm"), ppm(&golden)).unwrap();
}
