mod common;

use std::fs;
use std::path::Path;

use audsae::synth::SyntheticConfig;
use audsae::FactorTable;
use common::{assert_same_tree, audsae, fixture, small_config, without_timestamps};

fn s(p: &Path) -> String {
    p.display().to_string()
}

fn stderr(o: &std::process::Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn json(p: &Path) -> serde_json::Value {
    serde_json::from_str(&fs::read_to_string(p).unwrap()).unwrap()
}

const FAST_SAE: [&str; 6] = ["--sae-epochs", "3", "--sae-patience", "3", "--probe-epochs", "40"];

#[test]
fn missing_manifest_is_invalid_input_and_names_the_path() {
    let dir = tempfile::tempdir().unwrap();
    let missing = dir.path().join("nope.json");
    let out = audsae(["probe", "--manifest", &s(&missing), "--out", &s(&dir.path().join("o"))]);
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains(&s(&missing)), "{}", stderr(&out));
}

#[test]
fn unknown_flag_is_invalid_input() {
    assert_eq!(audsae(["sweep", "--no-such-flag"]).status.code(), Some(2));
}

#[test]
fn probe_on_separable_fixture_is_perfect_and_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = SyntheticConfig {
        extra_active: 0,
        ..small_config()
    };
    let fx = fixture(dir.path(), &cfg, 1);
    let run = |out: &Path| {
        audsae([
            "probe",
            "--manifest",
            &s(&fx.manifests[0]),
            "--out",
            &s(out),
            "--seed",
            "3",
            "--lr",
            "0.01",
        ])
    };
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    assert_eq!(run(&a).status.code(), Some(0));
    assert_eq!(run(&b).status.code(), Some(0));
    let probe = json(&a.join("layer1/raw/probe.json"));
    assert_eq!(probe["test_acc"].as_f64(), Some(1.0));
    assert!(a.join("layer1/raw/config.json").is_file());
    let csv = fs::read_to_string(a.join("probe.csv")).unwrap();
    assert_eq!(csv.lines().next(), Some("layer,sparsity,val_acc,test_acc,n_train,n_test,seed"));
    assert_same_tree(&a, &b);
}

#[test]
fn sweep_rows_resume_and_report() {
    let dir = tempfile::tempdir().unwrap();
    let fx = fixture(dir.path(), &small_config(), 2);
    let out = dir.path().join("run");
    let mut args: Vec<String> = vec!["sweep".into()];
    for m in &fx.manifests {
        args.extend(["--manifest".into(), s(m)]);
    }
    args.extend(
        [
            "--out",
            &s(&out),
            "--sparsities",
            "0.95,0.99",
            "--latent",
            "2048",
            "--seed",
            "5",
            "--factors",
            &s(&fx.factors),
            "--family-map",
            &s(&fx.family_map),
        ]
        .map(String::from),
    );
    args.extend(FAST_SAE.map(String::from));
    let first = audsae(&args);
    assert_eq!(first.status.code(), Some(0), "{}", stderr(&first));

    let mut rdr = csv::Reader::from_path(out.join("sweep.csv")).unwrap();
    let headers: Vec<String> = rdr.headers().unwrap().iter().map(String::from).collect();
    assert_eq!(headers, ["layer", "sparsity", "k", "best_val_mse", "test_mse", "probe_test_acc"]);
    let rows: Vec<csv::StringRecord> = rdr.records().map(Result::unwrap).collect();
    assert_eq!(rows.len(), 4);
    let ks: Vec<&str> = rows.iter().filter(|r| &r[0] == "layer1").map(|r| &r[2]).collect();
    assert_eq!(ks, ["102", "20"]);
    for cell in ["layer1/raw", "layer1/0.95", "layer2/0.99"] {
        let d = out.join(cell);
        for f in ["config.json", "probe.json", "disentangle.json", "result.json"] {
            assert!(d.join(f).is_file(), "{cell}/{f}");
        }
    }
    assert!(out.join("layer1/0.95/sae.ckpt").is_file());

    // Rerun: nothing is retrained.
    let ckpt = out.join("layer1/0.95/sae.ckpt");
    let result = out.join("layer2/0.99/result.json");
    let mtimes = |p: &Path| fs::metadata(p).unwrap().modified().unwrap();
    let (m_ckpt, m_result) = (mtimes(&ckpt), mtimes(&result));
    std::thread::sleep(std::time::Duration::from_millis(20));
    let sweep_csv = fs::read(out.join("sweep.csv")).unwrap();
    assert_eq!(audsae(&args).status.code(), Some(0));
    assert_eq!(mtimes(&ckpt), m_ckpt);
    assert_eq!(mtimes(&result), m_result);
    assert_eq!(fs::read(out.join("sweep.csv")).unwrap(), sweep_csv);

    // An interrupted cell (no result.json) is redone and reproduces itself.
    let probe_before = fs::read(out.join("layer2/0.99/probe.json")).unwrap();
    fs::remove_file(&result).unwrap();
    assert_eq!(audsae(&args).status.code(), Some(0));
    assert!(mtimes(&result) > m_result);
    assert_eq!(
        without_timestamps(&fs::read(out.join("layer2/0.99/probe.json")).unwrap()),
        without_timestamps(&probe_before)
    );

    // A changed configuration refuses to mix into the same tree.
    let mut changed = args.clone();
    let at = changed.iter().position(|a| a == "--seed").unwrap() + 1;
    changed[at] = "6".into();
    assert_eq!(audsae(&changed).status.code(), Some(2));

    let rep = audsae(["report", "--run", &s(&out)]);
    assert_eq!(rep.status.code(), Some(0), "{}", stderr(&rep));
    let report = out.join("report");
    let summary = fs::read_to_string(report.join("summary.csv")).unwrap();
    assert_eq!(summary.lines().count(), 1 + 4);
    assert!(summary.starts_with("layer,sparsity,k,n_latent,best_val_mse,test_mse,probe_val_acc,probe_test_acc,"));
    for name in [
        "accuracy_vs_layer.svg",
        "accuracy_vs_sparsity.svg",
        "mse_vs_sparsity.svg",
        "completeness_entropy.svg",
        "disentangle_vs_sparsity.svg",
    ] {
        let text = fs::read_to_string(report.join(name)).unwrap();
        roxmltree::Document::parse(&text).unwrap_or_else(|e| panic!("{name}: {e}"));
    }
    let acc = fs::read_to_string(report.join("accuracy_vs_sparsity.svg")).unwrap();
    let doc = roxmltree::Document::parse(&acc).unwrap();
    let polylines: Vec<_> = doc.descendants().filter(|n| n.has_tag_name("polyline")).collect();
    assert_eq!(polylines.len(), 2);
    let series: Vec<_> = polylines.iter().map(|n| n.attribute("data-series").unwrap()).collect();
    assert_eq!(series, ["layer1", "layer2"]);
    let dashed = doc
        .descendants()
        .filter(|n| n.attribute("class") == Some("reference") && n.attribute("stroke-dasharray").is_some())
        .count();
    assert_eq!(dashed, 2);
}

#[test]
fn sweep_is_identical_across_job_counts() {
    let dir = tempfile::tempdir().unwrap();
    let fx = fixture(dir.path(), &small_config(), 1);
    let run = |out: &Path, jobs: &str| {
        let mut args: Vec<String> = [
            "sweep",
            "--manifest",
            &s(&fx.manifests[0]),
            "--out",
            &s(out),
            "--sparsities",
            "0.75,0.9",
            "--latent",
            "48",
            "--jobs",
            jobs,
            "--factors",
            &s(&fx.factors),
        ]
        .map(String::from)
        .to_vec();
        args.extend(FAST_SAE.map(String::from));
        audsae(&args)
    };
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    let oa = run(&a, "1");
    assert_eq!(oa.status.code(), Some(0), "{}", stderr(&oa));
    assert_eq!(run(&b, "3").status.code(), Some(0));
    assert_same_tree(&a, &b);
}

#[test]
fn sweep_rejects_bad_grids() {
    let dir = tempfile::tempdir().unwrap();
    let fx = fixture(dir.path(), &small_config(), 1);
    for grid in ["", "0.9,0.8", "0.5,1.0"] {
        let out = audsae([
            "sweep",
            "--manifest",
            &s(&fx.manifests[0]),
            "--out",
            &s(&dir.path().join("o")),
            "--sparsities",
            grid,
        ]);
        assert_eq!(out.status.code(), Some(2), "grid {grid:?}");
    }
    // N must exceed D.
    let out = audsae([
        "sweep",
        "--manifest",
        &s(&fx.manifests[0]),
        "--out",
        &s(&dir.path().join("o")),
        "--latent",
        "16",
    ]);
    assert_eq!(out.status.code(), Some(2));
}

/// Factors that are exact linear functions of the embeddings, plus one that
/// is independent noise.
fn planted_factors(dir: &Path, fx: &common::Fixture) -> std::path::PathBuf {
    let emb = &fx.corpus.embeddings;
    let mut rng = audsae::numerics::Rng::new(99);
    let mut values = Vec::new();
    for i in 0..emb.rows() {
        let r = emb.row(i);
        values.push(2.0 * r[0] as f64 - r[3] as f64 + 1.0);
        values.push(rng.normal());
    }
    let t = FactorTable::new(
        fx.corpus.ids.clone(),
        vec!["F0semitoneFrom27.5Hz_sma3nz_amean".into(), "noise".into()],
        values,
    )
    .unwrap();
    let p = dir.join("planted.csv");
    t.save_csv(&p).unwrap();
    p
}

#[test]
fn disentangle_finds_planted_factor_and_is_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let fx = fixture(dir.path(), &small_config(), 1);
    let factors = planted_factors(dir.path(), &fx);
    let run = |out: &Path| {
        audsae([
            "disentangle",
            "--manifest",
            &s(&fx.manifests[0]),
            "--factors",
            &s(&factors),
            "--out",
            &s(out),
            "--split",
            "all",
        ])
    };
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    let oa = run(&a);
    assert_eq!(oa.status.code(), Some(0), "{}", stderr(&oa));
    assert_eq!(run(&b).status.code(), Some(0));
    let report = json(&a.join("disentangle.json"));
    let factors = report["factors"].as_array().unwrap();
    let planted = factors.iter().find(|f| f["name"] == "F0semitoneFrom27.5Hz_sma3nz_amean").unwrap();
    assert!(planted["r2"].as_f64().unwrap() >= 0.99, "{planted}");
    assert_eq!(planted["family"], "pitch");
    assert_eq!(report["unmapped_factors"], serde_json::json!(["noise"]));
    assert!(a.join("importance.atns").is_file());
    assert_same_tree(&a, &b);
}

#[test]
fn disentangle_unknown_factor_id_lists_it() {
    let dir = tempfile::tempdir().unwrap();
    let fx = fixture(dir.path(), &small_config(), 1);
    let mut text = fs::read_to_string(&fx.factors).unwrap();
    let cols = text.lines().next().unwrap().split(',').count();
    text.push_str(&format!("ghost_utt{}\n", ",1.0".repeat(cols - 1)));
    let bad = dir.path().join("bad.csv");
    fs::write(&bad, text).unwrap();
    let out = audsae([
        "disentangle",
        "--manifest",
        &s(&fx.manifests[0]),
        "--factors",
        &s(&bad),
        "--out",
        &s(&dir.path().join("o")),
    ]);
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains("ghost_utt"), "{}", stderr(&out));

    // Test rows without factor values are listed too.
    let t = FactorTable::load_csv(&fx.factors).unwrap();
    let keep: Vec<usize> = (1..t.num_rows()).collect();
    let f = t.num_factors();
    let values: Vec<f64> = keep.iter().flat_map(|&i| t.values[i * f..(i + 1) * f].to_vec()).collect();
    let ids: Vec<String> = keep.iter().map(|&i| t.ids[i].clone()).collect();
    let short = dir.path().join("short.csv");
    FactorTable::new(ids, t.names.clone(), values).unwrap().save_csv(&short).unwrap();
    let out = audsae([
        "disentangle",
        "--manifest",
        &s(&fx.manifests[0]),
        "--factors",
        &s(&short),
        "--out",
        &s(&dir.path().join("o2")),
        "--split",
        "all",
    ]);
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains(&t.ids[0]), "{}", stderr(&out));
}

#[test]
fn train_eval_and_probe_a_checkpoint() {
    let dir = tempfile::tempdir().unwrap();
    let fx = fixture(dir.path(), &small_config(), 1);
    let out = dir.path().join("run");
    let m = format!("l1={}", s(&fx.manifests[0]));
    let o = audsae([
        "sae-train", "--manifest", &m, "--out", &s(&out), "--sparsity", "0.9", "--latent", "64",
        "--sae-epochs", "5",
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let ckpt = out.join("l1/0.9/sae.ckpt");
    let (model, header) = audsae::sae::load_checkpoint(&ckpt).unwrap();
    assert_eq!((model.n_latent(), model.k, header.sparsity), (64, 6, 0.9));
    let train = json(&out.join("l1/0.9/train.json"));
    assert_eq!(train["val_mse"].as_array().unwrap().len(), 5);

    let o = audsae(["sae-eval", "--manifest", &m, "--checkpoint", &s(&ckpt)]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let eval = json(&out.join("l1/0.9/eval.json"));
    let printed: f64 = String::from_utf8_lossy(&o.stdout).trim().parse().unwrap();
    assert_eq!(eval["mse"].as_f64(), Some(printed));
    assert_eq!(eval["n"].as_u64(), Some(40));

    let o = audsae([
        "probe", "--manifest", &m, "--checkpoint", &s(&ckpt), "--out", &s(&out), "--probe-epochs", "20",
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert_eq!(json(&out.join("l1/0.9/probe.json"))["sparsity"].as_f64(), Some(0.9));

    let o = audsae(["sae-eval", "--manifest", &m, "--checkpoint", &s(&dir.path().join("none.ckpt"))]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn report_needs_completed_cells() {
    let dir = tempfile::tempdir().unwrap();
    let empty = dir.path().join("empty");
    fs::create_dir_all(empty.join("layer1/0.9")).unwrap();
    assert_eq!(audsae(["report", "--run", &s(&empty)]).status.code(), Some(2));
    assert_eq!(
        audsae(["report", "--run", &s(&dir.path().join("missing"))]).status.code(),
        Some(2)
    );
}

fn write_result(dir: &Path, layer: &str, sparsity: Option<f64>, mse: Option<f64>, acc: f64) {
    let cell = audsae::cli::CellResult {
        layer: layer.into(),
        sparsity,
        k: sparsity.map(|s| audsae::sparsity_to_k(s, 100).unwrap()),
        n_latent: sparsity.map(|_| 100),
        best_val_mse: mse,
        test_mse: mse,
        probe_val_acc: acc,
        probe_test_acc: acc,
        n_train: 10,
        n_test: 5,
        seed: 0,
        top10_r2_mean: None,
        top10_completeness_mean: None,
        timestamp: "2026-01-01T00:00:00Z".into(),
    };
    let d = dir.join(layer).join(sparsity.map_or("raw".into(), |s| s.to_string()));
    fs::create_dir_all(&d).unwrap();
    fs::write(d.join("result.json"), serde_json::to_string(&cell).unwrap()).unwrap();
}

#[test]
fn report_scales_and_orders() {
    let dir = tempfile::tempdir().unwrap();
    let run = dir.path().join("run");
    for layer in ["layer10", "layer2"] {
        write_result(&run, layer, None, None, 0.8);
        write_result(&run, layer, Some(0.75), Some(0.001), 0.79);
        write_result(&run, layer, Some(0.99), Some(0.5), 0.7);
    }
    assert_eq!(audsae(["report", "--run", &s(&run)]).status.code(), Some(0));
    let summary = fs::read_to_string(run.join("report/summary.csv")).unwrap();
    let layers: Vec<&str> = summary.lines().skip(1).map(|l| l.split(',').next().unwrap()).collect();
    assert_eq!(layers, ["layer2", "layer2", "layer10", "layer10"]);
    let mse = fs::read_to_string(run.join("report/mse_vs_sparsity.svg")).unwrap();
    assert!(mse.contains("test MSE (log)"));
    let baseline = fs::read_to_string(run.join("report/baseline.csv")).unwrap();
    assert_eq!(baseline.lines().count(), 3);

    // Narrow range: linear axis.
    let run2 = dir.path().join("run2");
    write_result(&run2, "l", Some(0.75), Some(0.1), 0.5);
    write_result(&run2, "l", Some(0.9), Some(0.5), 0.5);
    assert_eq!(audsae(["report", "--run", &s(&run2)]).status.code(), Some(0));
    let mse = fs::read_to_string(run2.join("report/mse_vs_sparsity.svg")).unwrap();
    assert!(!mse.contains("(log)"));
}
