mod common;

use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use zscfc::image::{load_npy, save_image};
use zscfc::{load_image, Image};

fn zscfc(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_zscfc")).args(args).output().unwrap()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn write_fixture(dir: &Path, name: &str, img: &Image) -> String {
    let path = dir.join(name);
    save_image(img, &path).unwrap();
    path.to_str().unwrap().to_string()
}

#[test]
fn denoise_is_byte_identical_across_runs() {
    let dir = tempfile::tempdir().unwrap();
    let input = write_fixture(dir.path(), "in.png", &common::cartoon(48));
    let a = dir.path().join("a.png");
    let b = dir.path().join("b.png");
    for out in [&a, &b] {
        let o = zscfc(&["denoise", &input, s(out), "--seed", "7", "--iters", "20"]);
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    }
    assert_eq!(fs::read(&a).unwrap(), fs::read(&b).unwrap());
    assert_eq!(fs::read(dir.path().join("a.loss.csv")).unwrap(), fs::read(dir.path().join("b.loss.csv")).unwrap());
}

#[test]
fn loss_trace_echoes_the_configuration() {
    let dir = tempfile::tempdir().unwrap();
    let input = write_fixture(dir.path(), "in.png", &common::cartoon(40));
    let out = dir.path().join("out.png");
    let ckpt = dir.path().join("net.ckpt");
    let o = zscfc(&[
        "denoise", &input, s(&out), "--fc", "0.05,0.07,0.1", "--weights", "0.5,2,0.5", "--iters", "5", "--checkpoint",
        s(&ckpt),
    ]);
    assert!(o.status.success());
    let trace = fs::read_to_string(dir.path().join("out.loss.csv")).unwrap();
    let header: Vec<&str> = trace.lines().filter(|l| l.starts_with('#')).collect();
    assert!(header.iter().any(|l| l.contains("fc=0.05,0.07,0.1") && l.contains("weights=0.5,2,0.5") && l.contains("iters=5")));
    let rows: Vec<&str> = trace.lines().filter(|l| !l.starts_with('#')).collect();
    assert_eq!(rows[0], "iteration,cons1,cons2,reg,total");
    assert_eq!(rows.len(), 6);
    assert!(rows[1].starts_with("1,"));
    let net = zscfc::net::load_checkpoint(&ckpt).unwrap();
    assert_eq!(net.param_count(), 1488);
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let missing = dir.path().join("missing.png");
    let out = dir.path().join("out.png");
    let o = zscfc(&["denoise", s(&missing), s(&out)]);
    assert_eq!(o.status.code(), Some(1));
    assert!(!o.stderr.is_empty());

    let input = write_fixture(dir.path(), "in.png", &common::cartoon(40));
    assert_eq!(zscfc(&["denoise", &input, s(&out), "--iters", "nope"]).status.code(), Some(2));
    assert_eq!(zscfc(&["denoise", &input, s(&out), "--depth", "4"]).status.code(), Some(2));
    assert_eq!(zscfc(&["denoise", &input, s(&out), "--lr", "1e308", "--iters", "3"]).status.code(), Some(3));
    assert_eq!(zscfc(&["frobnicate"]).status.code(), Some(2));

    let small = write_fixture(dir.path(), "small.png", &common::cartoon(16));
    assert_eq!(zscfc(&["denoise", &small, s(&out)]).status.code(), Some(1));
}

#[test]
fn noise_command_hits_the_requested_std() {
    let dir = tempfile::tempdir().unwrap();
    let input = write_fixture(dir.path(), "clean.png", &Image::filled(128, 128, 3, 0.5).unwrap());
    let out = dir.path().join("noisy.png");
    let o = zscfc(&["noise", "--kind", "pink", "--std", "0.1176", "--seed", "1", &input, s(&out)]);
    assert!(o.status.success());
    let raw = load_npy(dir.path().join("noisy.npy")).unwrap();
    let clean = load_image(&input).unwrap();
    let measured = zscfc::measure_noise_std(&raw, &clean).unwrap();
    assert!((measured / (30.0 / 255.0) - 1.0).abs() < 0.02, "{measured}");
    let stdout = String::from_utf8(o.stdout).unwrap();
    assert!(stdout.contains("kind,std,corr_length,seed,measured_std"));

    let o = zscfc(&["noise", "--std", "30/255", &input, s(&out)]);
    assert!(o.status.success());
}

#[test]
fn decompose_dumps_reconstruct_the_input() {
    let dir = tempfile::tempdir().unwrap();
    let input = write_fixture(dir.path(), "img.png", &common::cartoon(64));
    let outdir = dir.path().join("bands");
    let o = zscfc(&["decompose", &input, "--fc", "0.05,0.07,0.1", s(&outdir)]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let mut sum = load_npy(outdir.join("lfs1.npy")).unwrap();
    for name in ["hfs1", "hfs2", "hfs3"] {
        assert!(outdir.join(format!("{name}.png")).exists());
        sum = zscfc::image_add(&sum, &load_npy(outdir.join(format!("{name}.npy"))).unwrap()).unwrap();
    }
    assert!(outdir.join("lfs1.png").exists());
    assert!(sum.max_abs_diff(&load_image(&input).unwrap()).unwrap() <= 1e-9);
}

#[test]
fn theory_reports_the_bound() {
    let dir = tempfile::tempdir().unwrap();
    let chart = write_fixture(dir.path(), "chart.png", &common::edge_chart(256));
    let o = zscfc(&["theory", "--Lc", "3", &chart]);
    assert!(o.status.success());
    let text = String::from_utf8(o.stdout).unwrap();
    let mut lines = text.lines().filter(|l| !l.starts_with('#'));
    let header: Vec<&str> = lines.next().unwrap().split(',').collect();
    let row: Vec<&str> = lines.next().unwrap().split(',').collect();
    let col = header.iter().position(|h| *h == "rho_noise_bound").unwrap();
    let bound: f64 = row[col].parse().unwrap();
    assert!((bound - 4.31e-4).abs() < 1e-6);

    let o = zscfc(&["theory", "--Lc", "3", "--format", "jsonl", &chart]);
    let v: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(v["noise_kind"], "correlated");
}

#[test]
fn metrics_row() {
    let dir = tempfile::tempdir().unwrap();
    let a = write_fixture(dir.path(), "a.png", &common::cartoon(32));
    let o = zscfc(&["metrics", &a, &a]);
    let text = String::from_utf8(o.stdout).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], "path_a,path_b,psnr,ssim");
    assert!(lines[1].ends_with(",99.0000000,1.00000000"), "{}", lines[1]);
}

#[test]
fn alpha_channel_is_reported() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("rgba.png");
    let file = fs::File::create(&p).unwrap();
    let mut enc = png::Encoder::new(std::io::BufWriter::new(file), 16, 16);
    enc.set_color(png::ColorType::Rgba);
    enc.set_depth(png::BitDepth::Eight);
    let px: Vec<u8> = (0..256).flat_map(|i| [i as u8, 40, 90, 128]).collect();
    enc.write_header().unwrap().write_image_data(&px).unwrap();
    let o = zscfc(&["metrics", s(&p), s(&p)]);
    assert!(o.status.success());
    assert!(String::from_utf8(o.stderr).unwrap().contains("alpha channel ignored"));
}

#[test]
fn bench_writes_one_record_per_image_plus_summary() {
    let dir = tempfile::tempdir().unwrap();
    let mut manifest = String::from("# clean images\n");
    for i in 0..5 {
        let name = format!("c{i}.png");
        write_fixture(dir.path(), &name, &common::cartoon(40 + 2 * i));
        manifest.push_str(&name);
        manifest.push('\n');
    }
    let mpath = dir.path().join("set.txt");
    fs::write(&mpath, manifest).unwrap();
    let out = dir.path().join("bench.csv");
    let o = zscfc(&["bench", s(&mpath), s(&out), "--noise", "pink", "--std", "25/255", "--iters", "3", "--jobs", "2"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let text = fs::read_to_string(&out).unwrap();
    let rows: Vec<&str> = text.lines().filter(|l| !l.starts_with('#')).collect();
    assert!(rows[0].starts_with("image,noise_std,psnr_noisy"));
    assert_eq!(rows.len(), 1 + 5 + 1);
    assert!(rows[6].starts_with("mean,"));
    for (i, r) in rows[1..6].iter().enumerate() {
        assert!(r.contains(&format!("c{i}.png")), "records keep manifest order");
        assert!(r.ends_with(&format!(",3,{i}")));
    }

    let bad = dir.path().join("bad.txt");
    fs::write(&bad, "a.png,b.png,c.png\n").unwrap();
    assert_eq!(zscfc(&["bench", s(&bad), s(&out)]).status.code(), Some(2));
}

#[test]
fn bench_pairs_without_clean_leave_metrics_blank() {
    let dir = tempfile::tempdir().unwrap();
    write_fixture(dir.path(), "n.png", &common::cartoon(40));
    let mpath = dir.path().join("set.txt");
    fs::write(&mpath, "n.png\n").unwrap();
    let out = dir.path().join("bench.csv");
    assert!(zscfc(&["bench", s(&mpath), s(&out), "--iters", "2"]).status.success());
    let text = fs::read_to_string(&out).unwrap();
    let row = text.lines().find(|l| l.contains("n.png")).unwrap();
    assert!(row.contains(",,,,,"), "{row}");
}

#[test]
fn version_names_the_config_hash() {
    let o = zscfc(&["--version"]);
    assert!(o.status.success());
    let text = String::from_utf8(o.stdout).unwrap();
    assert!(text.contains(env!("CARGO_PKG_VERSION")));
    assert!(text.contains(&zscfc::cli::default_config_hash()));
}
