//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! non-zero if any criterion fails.
//!
//! Set `DMIMO_ACCEPTANCE_DIR` to keep the dataset and trained models between
//! runs; otherwise everything is rebuilt in a temporary directory.

use std::path::{Path, PathBuf};
use std::process::{Command, ExitCode};
use std::time::Instant;

use dmimo_adv::attack::Threat;
use dmimo_adv::bench::{
    model_quality, AttackKind, CampaignSpec, EvalContext, EvalReport, ModelRole, ScenarioRow, ScenarioSpec,
    SweepAxis,
};
use dmimo_adv::features::FeatureVector;
use dmimo_adv::mmf::{solve_mmf, SolverConfig};
use dmimo_adv::nn::{input_gradient, sum_se_with_gradient, train, Activation, GradientRequest, MlpModel, Objective, TrainConfig};
use dmimo_adv::radio::{compute_se, compute_sinr, BetaMatrix};
use dmimo_adv::rng::{stream, Domain};
use dmimo_adv::scenario::{gen_dataset_mmf, sample_scenario, Dataset, DatasetOptions, NetworkConfig};
use rand::Rng;

const INSTANCES: usize = 2000;
const EVAL_SEED: u64 = 4242;

struct Outcome {
    id: usize,
    name: &'static str,
    pass: bool,
    detail: String,
}

fn report(outcomes: &mut Vec<Outcome>, id: usize, name: &'static str, pass: bool, detail: String) {
    println!("{} [{id}] {name}: {detail}", if pass { "PASS" } else { "FAIL" });
    outcomes.push(Outcome { id, name, pass, detail });
}

fn artifacts() -> (PathBuf, Option<tempfile::TempDir>) {
    match std::env::var_os("DMIMO_ACCEPTANCE_DIR") {
        Some(dir) => {
            std::fs::create_dir_all(&dir).expect("cache dir");
            (PathBuf::from(dir), None)
        }
        None => {
            let tmp = tempfile::tempdir().expect("temp dir");
            (tmp.path().to_path_buf(), Some(tmp))
        }
    }
}

fn dataset(dir: &Path) -> Dataset {
    let path = dir.join("dataset.bin");
    if let Ok(ds) = Dataset::load(&path) {
        return ds;
    }
    let t = Instant::now();
    let ds = gen_dataset_mmf(&NetworkConfig::default(), &DatasetOptions::default(), &SolverConfig::default())
        .expect("dataset generation");
    eprintln!("generated {} samples in {:.0?}", ds.samples.len(), t.elapsed());
    ds.save(&path).expect("save dataset");
    ds
}

fn trained(dir: &Path, name: &str, hidden: &[usize], init_seed: u64, ds: &Dataset) -> MlpModel {
    let path = dir.join(name);
    if let Ok(m) = MlpModel::load(&path) {
        return m;
    }
    let mut widths = vec![ds.config.dim()];
    widths.extend_from_slice(hidden);
    widths.push(ds.config.dim());
    let model = MlpModel::new(&widths, Activation::Silu, Activation::Sigmoid, ds.feature_stats.clone(), init_seed)
        .expect("model");
    let t = Instant::now();
    let out = train(model, ds, &TrainConfig::default()).expect("training");
    eprintln!(
        "trained {name} in {:.0?}: best epoch {} of {}, validation MSE {:.3e}",
        t.elapsed(),
        out.best_epoch,
        out.history.len(),
        out.best_val_loss()
    );
    out.model.save(&path).expect("save model");
    out.model
}

/// Joint standard error of two independent-looking estimates.
fn joint(a: f64, b: f64) -> f64 {
    (a * a + b * b).sqrt()
}

fn metric(row: &ScenarioRow, name: &str) -> (f64, f64) {
    let m = row.metric(name).expect("metric");
    (m.value, m.bootstrap_se)
}

fn row<'a>(r: &'a EvalReport, kind: AttackKind, role: ModelRole, f: f64, eps: f64) -> &'a ScenarioRow {
    r.rows
        .iter()
        .find(|x| {
            x.scenario.kind == kind
                && (kind == AttackKind::Gaussian || x.scenario.crafted_with == role)
                && x.scenario.malicious_fraction == f
                && x.scenario.epsilon == eps
        })
        .expect("scenario row")
}

fn clean(r: &EvalReport) -> &ScenarioRow {
    r.find(&ScenarioSpec::clean()).expect("clean row")
}

/// `values[i+1] ≤ values[i] + tol·joint SE`.
fn non_increasing(values: &[(f64, f64)], tol: f64) -> bool {
    values.windows(2).all(|w| w[1].0 <= w[0].0 + tol * joint(w[0].1, w[1].1))
}

fn fmt(values: &[(f64, f64)]) -> String {
    values.iter().map(|(v, s)| format!("{v:.4}±{s:.4}")).collect::<Vec<_>>().join(" ")
}

fn criterion_oracle() -> (bool, String) {
    let config = NetworkConfig::default();
    let cfg = SolverConfig::default();
    let mut worst = 0.0f64;
    for i in 0..500 {
        let (_, beta) = sample_scenario(&config, 9001, i).expect("scenario");
        let sol = solve_mmf(&beta, config.total_power, config.noise_power, &cfg).expect("solve");
        let sinr = compute_sinr(&beta, &sol.eta, config.total_power, config.noise_power).expect("sinr");
        let lo = sinr.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = sinr.iter().copied().fold(0.0, f64::max);
        worst = worst.max((hi - lo) / lo);
    }
    let mut grid_gap = 0.0f64;
    for seed in 0..4 {
        let mut rng = stream(seed, Domain::Scenario, 77);
        let db: Vec<f64> = (0..4).map(|_| rng.gen_range(-125.0..-95.0)).collect();
        let beta = BetaMatrix::from_db(2, 2, &db).expect("beta");
        let sol = solve_mmf(&beta, config.total_power, config.noise_power, &cfg).expect("solve");
        let solver = compute_se(&sol.sinr).expect("se").into_iter().fold(f64::INFINITY, f64::min);
        let grid = grid_optimum(&beta, config.total_power, config.noise_power, 60);
        grid_gap = grid_gap.max((solver - grid).abs() / grid);
    }
    (
        worst <= 1e-3 && grid_gap <= 0.01,
        format!("max relative SINR spread {worst:.2e} over 500 instances; 2x2 grid gap {:.3}%", 100.0 * grid_gap),
    )
}

fn grid_optimum(beta: &BetaMatrix, p: f64, noise: f64, n: usize) -> f64 {
    let pairs: Vec<(f64, f64)> = (0..=n)
        .flat_map(|i| (0..=n - i).map(move |j| (i as f64 / n as f64, j as f64 / n as f64)))
        .collect();
    let mut best = 0.0f64;
    for &(a, b) in &pairs {
        for &(c, d) in &pairs {
            let nu = [a, b, c, d];
            let mut worst = f64::INFINITY;
            for k in 0..2 {
                let coherent: f64 = (0..2).map(|m| (nu[m * 2 + k] * beta.get(m, k)).sqrt()).sum();
                let interference: f64 = (0..2).map(|m| (nu[m * 2] + nu[m * 2 + 1]) * beta.get(m, k)).sum();
                worst = worst.min((1.0 + p * coherent * coherent / (p * interference + noise)).log2());
            }
            best = best.max(worst);
        }
    }
    best
}

fn criterion_gradients(ds: &Dataset, models: [&MlpModel; 2]) -> (bool, String) {
    let c = &ds.config;
    let mut worst = 0.0f64;
    for pair in 0..20u64 {
        let model = models[(pair % 2) as usize];
        let mut rng = stream(pair, Domain::Pool, 555);
        let test = ds.test();
        let x_db = test[rng.gen_range(0..test.len())].beta.to_db();
        let belief = &test[rng.gen_range(0..test.len())].beta;
        let x = model.feature_stats().standardize_db(&x_db).expect("standardize");
        let req = GradientRequest {
            x: FeatureVector { x: x.clone() },
            objective: Objective::SumSe,
            beta_belief: belief.clone(),
            total_power: c.total_power,
            noise_power: c.noise_power,
        };
        let g = input_gradient(model, &req).expect("gradient");
        let j = |v: &[f64]| {
            let nu = model.forward(v).expect("forward");
            sum_se_with_gradient(belief, &nu, c.total_power, c.noise_power).expect("objective").0
        };
        let h = 1e-5;
        let fd: Vec<f64> = (0..x.len())
            .map(|i| {
                let (mut up, mut down) = (x.clone(), x.clone());
                up[i] += h;
                down[i] -= h;
                (j(&up) - j(&down)) / (2.0 * h)
            })
            .collect();
        let diff = g.iter().zip(&fd).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
        let scale = fd.iter().map(|b| b * b).sum::<f64>().sqrt().max(1e-12);
        worst = worst.max(diff / scale);
    }
    (worst < 1e-4, format!("worst relative error {worst:.2e} over 20 model/input pairs"))
}

fn cli_pipeline(bin: &str, dir: &Path) -> Vec<u8> {
    let run = |args: &[&str]| {
        let status = Command::new(bin).args(args).output().expect("spawn CLI");
        assert!(status.status.success(), "{args:?}: {}", String::from_utf8_lossy(&status.stderr));
    };
    let p = |name: &str| dir.join(name).to_string_lossy().into_owned();
    run(&["gen-data", "--samples", "120", "--train-fraction", "0.75", "--seed", "31", "--out", &p("ds.bin")]);
    run(&["train", "--data", &p("ds.bin"), "--hidden", "32,16", "--epochs", "3", "--init-seed", "1", "--out", &p("orig.model")]);
    run(&["train", "--data", &p("ds.bin"), "--hidden", "16", "--epochs", "3", "--init-seed", "2", "--out", &p("surr.model")]);
    let spec = serde_json::json!({
        "dataset": p("ds.bin"),
        "original_model": p("orig.model"),
        "surrogate_model": p("surr.model"),
        "instances": 20,
        "output_dir": p("out"),
        "seed": 17,
        "campaign": {
            "threat": "malicious_rus",
            "malicious_fraction": 0.5,
            "kinds": ["gaussian", "fgsm", "bim", "m_uap"],
            "crafted_with": ["surrogate", "original"],
            "epsilons": [4.0, 8.0],
            "uap_samples": 8
        }
    });
    std::fs::write(dir.join("spec.json"), serde_json::to_string_pretty(&spec).unwrap()).unwrap();
    run(&["attack", "--spec", &p("spec.json")]);
    let mut bytes = Vec::new();
    for f in ["ds.bin", "orig.model", "surr.model", "out/report.json", "out/metrics.csv", "out/cdf.csv"] {
        bytes.extend(std::fs::read(dir.join(f)).expect("artifact"));
    }
    bytes
}

fn main() -> ExitCode {
    let start = Instant::now();
    let mut outcomes = Vec::new();
    let (dir, _guard) = artifacts();

    let (pass, detail) = criterion_oracle();
    report(&mut outcomes, 1, "oracle correctness", pass, detail);

    let ds = dataset(&dir);
    let original = trained(&dir, "original.model", &[512, 256, 128], 1, &ds);
    let surrogate = trained(&dir, "surrogate.model", &[256, 128], 2, &ds);

    let (pass, detail) = criterion_gradients(&ds, [&original, &surrogate]);
    report(&mut outcomes, 2, "gradient fidelity", pass, detail);

    let (analytic, orig_q) = model_quality(&ds, &original).expect("quality");
    let (_, surr_q) = model_quality(&ds, &surrogate).expect("quality");
    let (ro, rs) = (orig_q / analytic, surr_q / analytic);
    report(
        &mut outcomes,
        3,
        "clean model quality",
        ro >= 0.85 && rs >= 0.80,
        format!("median min-SE analytic {analytic:.4}, original {orig_q:.4} ({:.1}%), surrogate {surr_q:.4} ({:.1}%)", 100.0 * ro, 100.0 * rs),
    );

    let ctx = EvalContext::new(&ds.config, &original, &surrogate, &ds, INSTANCES, EVAL_SEED).expect("context");
    let mut reports: Vec<EvalReport> = Vec::new();

    let full = ctx
        .run_campaign(&CampaignSpec {
            kinds: vec![AttackKind::Gaussian, AttackKind::MUap],
            crafted_with: vec![ModelRole::Surrogate, ModelRole::Original],
            ..CampaignSpec::default()
        })
        .expect("full campaign");
    let base = metric(clean(&full), "median_se");
    let gauss = metric(row(&full, AttackKind::Gaussian, ModelRole::Surrogate, 1.0, 8.0), "median_se");
    let uap_s = metric(row(&full, AttackKind::MUap, ModelRole::Surrogate, 1.0, 8.0), "median_se");
    let uap_o = metric(row(&full, AttackKind::MUap, ModelRole::Original, 1.0, 8.0), "median_se");
    let margin = (gauss.0 - uap_s.0) / joint(gauss.1, uap_s.1);
    report(
        &mut outcomes,
        4,
        "attack dominance",
        uap_s.0 < gauss.0 && margin >= 3.0,
        format!(
            "median SE clean {:.4}, Gaussian {}, surrogate m-UAP {}; margin {margin:.1} SE over {INSTANCES} instances",
            base.0,
            fmt(&[gauss]),
            fmt(&[uap_s])
        ),
    );

    let (deg_o, deg_s) = (base.0 - uap_o.0, base.0 - uap_s.0);
    report(
        &mut outcomes,
        5,
        "white-box vs black-box",
        deg_o >= deg_s - joint(uap_o.1, uap_s.1),
        format!("median SE degradation original-crafted {deg_o:.4}, surrogate-crafted {deg_s:.4}"),
    );
    reports.push(full);

    let fractions = [0.25, 0.5, 0.75, 1.0];
    let mut ok6 = true;
    let mut detail6 = Vec::new();
    for (threat, tag) in [(Threat::MaliciousRus, "RU"), (Threat::MaliciousUes, "UE")] {
        let r = ctx
            .sweep(
                &CampaignSpec {
                    threat,
                    include_clean: false,
                    ..CampaignSpec::default()
                },
                SweepAxis::MaliciousFraction,
                &fractions,
            )
            .expect("fraction sweep");
        for name in ["median_se", "p5_se"] {
            let series = |kind| -> Vec<(f64, f64)> {
                fractions.iter().map(|&f| metric(row(&r, kind, ModelRole::Surrogate, f, 8.0), name)).collect()
            };
            let (u, g) = (series(AttackKind::MUap), series(AttackKind::Gaussian));
            let mono = non_increasing(&u, 1.0) && non_increasing(&g, 1.0);
            let below = u.iter().zip(&g).all(|(a, b)| a.0 <= b.0);
            ok6 &= mono && below;
            detail6.push(format!("{tag} {name} m-UAP [{}] Gaussian [{}]", fmt(&u), fmt(&g)));
        }
        reports.push(r);
    }
    report(&mut outcomes, 6, "partial-knowledge trends", ok6, detail6.join("; "));

    let eps = [2.0, 4.0, 8.0, 12.0, 16.0];
    let r = ctx
        .sweep(
            &CampaignSpec {
                kinds: vec![AttackKind::MUap],
                include_clean: false,
                ..CampaignSpec::default()
            },
            SweepAxis::Epsilon,
            &eps,
        )
        .expect("epsilon sweep");
    let series: Vec<(f64, f64)> =
        eps.iter().map(|&e| metric(row(&r, AttackKind::MUap, ModelRole::Surrogate, 1.0, e), "median_se")).collect();
    report(&mut outcomes, 7, "epsilon sweep", non_increasing(&series, 1.0), format!("median SE [{}]", fmt(&series)));
    reports.push(r);

    let r = ctx
        .sweep(
            &CampaignSpec {
                threat: Threat::MaliciousRus,
                malicious_fraction: 0.5,
                kinds: vec![AttackKind::MUap],
                ..CampaignSpec::default()
            },
            SweepAxis::Epsilon,
            &eps,
        )
        .expect("EE sweep");
    let clean_ee = clean(&r).mean_ee();
    let drops: Vec<f64> = eps
        .iter()
        .map(|&e| 1.0 - row(&r, AttackKind::MUap, ModelRole::Surrogate, 0.5, e).mean_ee() / clean_ee)
        .collect();
    let at8 = drops[2];
    let grows = drops.windows(2).all(|w| w[1] > w[0]);
    report(
        &mut outcomes,
        8,
        "EE degradation",
        at8 >= 0.05 && grows,
        format!(
            "mean EE reduction with half the RUs malicious over ε {eps:?}: [{}]",
            drops.iter().map(|d| format!("{:.1}%", 100.0 * d)).collect::<Vec<_>>().join(" ")
        ),
    );
    reports.push(r);

    let checks: usize = reports.iter().flat_map(|r| &r.rows).map(|x| x.budget_checks).sum();
    let violations: usize = reports.iter().flat_map(|r| &r.rows).map(|x| x.budget_violations).sum();
    report(
        &mut outcomes,
        9,
        "budget and mask safety",
        violations == 0 && checks > 0,
        format!("{violations} violations in {checks} emitted perturbations"),
    );

    let bin = env!("CARGO_BIN_EXE_dmimo-adv");
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    let (ba, bb) = (cli_pipeline(bin, a.path()), cli_pipeline(bin, b.path()));
    let fresh = ctx.run_campaign(&CampaignSpec::default()).expect("rerun");
    let again = ctx.run_campaign(&CampaignSpec::default()).expect("rerun");
    let same = ba == bb && fresh.to_json().unwrap() == again.to_json().unwrap();
    report(
        &mut outcomes,
        10,
        "determinism",
        same,
        format!("two CLI pipeline runs {} ({} bytes); in-process reports {}", if ba == bb { "identical" } else { "differ" }, ba.len(), fresh.fingerprint_hash()),
    );

    let failed: Vec<String> = outcomes.iter().filter(|o| !o.pass).map(|o| format!("[{}] {}", o.id, o.name)).collect();
    println!(
        "acceptance: {}/{} criteria passed in {:.0?}",
        outcomes.len() - failed.len(),
        outcomes.len(),
        start.elapsed()
    );
    if failed.is_empty() {
        ExitCode::SUCCESS
    } else {
        for o in outcomes.iter().filter(|o| !o.pass) {
            eprintln!("failed [{}] {}: {}", o.id, o.name, o.detail);
        }
        ExitCode::FAILURE
    }
}
