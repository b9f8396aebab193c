//! Acceptance suite: one PASS/FAIL line per criterion, non-zero exit if
//! any criterion fails. Runs without the libtest harness.

use std::collections::BTreeMap;
use std::fs;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::{Path, PathBuf};
use std::process::Command;
use std::time::{Duration, Instant};

use fairlens_core::anova::{analyze, type2_anova_design};
use fairlens_core::bootstrap::{bootstrap_wls, BootstrapConfig, Coverage};
use fairlens_core::calibrate::{calibrate_detectors, calibrate_threshold, DetectorConfig, Orientation};
use fairlens_core::fmt::sci5;
use fairlens_core::matching::{downsample_matched, matched_subset, CategorySemantics, MatchSpec};
use fairlens_core::numstats::{
    chi2_cdf, chi2_sf, f_cdf, f_sf, normal_cdf, normal_sf, t_cdf, t_sf, wls_fit, DesignMatrix, Estimability,
    Observation, WlsFit,
};
use fairlens_core::posthoc::{holm_correct, lsmeans, wald_contrast, LsMeanMode, WaldDistribution};
use fairlens_core::rng::substream;
use fairlens_core::single_factor::{weighted_oneway_anova, weighted_welch_t, WelchOptions};
use fairlens_core::synth::{generate, LevelCoupling, PlantedEffect, SynthSpec};
use fairlens_core::{aggregate_groups, Attribute, AttributeSchema, DecisionRecord, Label};
use rand::Rng;
use rand_distr::{Distribution, Normal};

type Check = Result<String, String>;
type Criterion = (&'static str, fn() -> Check);

fn ensure(ok: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if ok {
        Ok(())
    } else {
        Err(msg())
    }
}

fn within(name: &str, got: f64, want: f64, tol: f64) -> Result<(), String> {
    ensure((got - want).abs() <= tol, || format!("{name}: got {got}, want {want} (tol {tol:e})"))
}

fn budget(elapsed: Duration, limit: Duration) -> Result<(), String> {
    ensure(elapsed <= limit, || format!("runtime {elapsed:?} exceeds {limit:?}"))
}

fn workspace_file(rel: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join(rel)
}

fn criterion_1_holm() -> Check {
    let start = Instant::now();
    let roberta = holm_correct(&[2.1314e-3, 4.7512e-3], 10).map_err(|e| e.to_string())?;
    let binoculars_raw = [8.4083e-17, 3.4660e-12, 8.6122e-12, 2.7460e-9];
    let binoculars = holm_correct(&binoculars_raw, 10).map_err(|e| e.to_string())?;
    let elapsed = start.elapsed();

    for (got, want) in roberta.iter().zip(["2.1314e-02", "4.2761e-02"]) {
        ensure(sci5(*got) == want, || format!("chatgpt-roberta: {} != {want}", sci5(*got)))?;
    }
    for ((p, q), m) in binoculars_raw.iter().zip(&binoculars).zip([10.0, 9.0, 8.0, 7.0]) {
        ensure(((q / p) - m).abs() <= 1e-12 * m, || format!("binoculars: {q:e}/{p:e} is not x{m}"))?;
    }
    budget(elapsed, Duration::from_millis(1))?;
    let printed: Vec<String> = binoculars.iter().map(|&q| sci5(q)).collect();
    Ok(format!("roberta {:?}, binoculars {printed:?}, {elapsed:?}", roberta.iter().map(|&q| sci5(q)).collect::<Vec<_>>()))
}

/// A fit carrying the given coefficients on the four-factor coding.
fn coefficient_fit(schema: &AttributeSchema, coefficients: &[(&str, f64)]) -> WlsFit {
    let names: Vec<String> = schema.names().map(String::from).collect();
    let observations: Vec<Observation> = schema.attributes()[0]
        .levels
        .iter()
        .flat_map(|a| {
            let s = &schema.attributes()[1..];
            s[0].levels.iter().flat_map(move |b| {
                s[1].levels.iter().flat_map(move |c| {
                    s[2].levels.iter().map(move |d| Observation {
                        levels: vec![a.clone(), b.clone(), c.clone(), d.clone()],
                        weight: 1.0,
                        response: 0.0,
                    })
                })
            })
        })
        .collect();
    let design = DesignMatrix::from_observations(schema, &names, &observations, &names).expect("design");
    let beta = design
        .columns
        .iter()
        .map(|c| {
            coefficients
                .iter()
                .find(|(label, _)| *label == c.label)
                .map(|&(_, b)| b)
                .unwrap_or_else(|| panic!("no coefficient for {}", c.label))
        })
        .collect::<Vec<f64>>();
    let p = beta.len();
    WlsFit {
        columns: design.columns,
        factors: design.factors,
        beta,
        cov_beta: None,
        estimability: vec![Estimability::Estimated; p],
        aliased_columns: vec![],
        rss_weighted: 0.0,
        n_obs: observations.len(),
        rank: p,
        df_resid: observations.len() - p,
        sigma2: None,
        fitted: vec![],
    }
}

fn four_factor_schema() -> AttributeSchema {
    AttributeSchema::new(vec![
        Attribute::with_default_reference("cefr", &["A2_0", "B1_1", "B1_2", "B2_0", "XX_0"]),
        Attribute::with_default_reference("Sex", &["F", "M"]),
        Attribute::with_default_reference(
            "academic_genre",
            &["Humanities", "Life Sciences", "Sciences & Technology", "Social Sciences"],
        ),
        Attribute::with_default_reference("language_env", &["EFL", "ESL", "NS"]),
    ])
    .expect("schema")
}

fn criterion_2_lsmeans_identity() -> Check {
    let schema = four_factor_schema();
    let binoculars = coefficient_fit(
        &schema,
        &[
            ("Intercept", 0.9482),
            ("C(cefr)[T.B1_1]", -0.0039),
            ("C(cefr)[T.B1_2]", -0.0007),
            ("C(cefr)[T.B2_0]", 0.0025),
            ("C(cefr)[T.XX_0]", -0.0501),
            ("C(Sex)[T.M]", 0.0010),
            ("C(academic_genre)[T.Life Sciences]", -0.0075),
            ("C(academic_genre)[T.Sciences & Technology]", 0.0016),
            ("C(academic_genre)[T.Social Sciences]", 0.0016),
            ("C(language_env)[T.ESL]", -0.0144),
            ("C(language_env)[T.NS]", -0.0501),
        ],
    );
    let detectgpt = coefficient_fit(
        &schema,
        &[
            ("Intercept", 0.7944),
            ("C(cefr)[T.B1_1]", 0.0127),
            ("C(cefr)[T.B1_2]", 0.0284),
            ("C(cefr)[T.B2_0]", 0.0345),
            ("C(cefr)[T.XX_0]", -0.0223),
            ("C(Sex)[T.M]", -0.0068),
            ("C(academic_genre)[T.Life Sciences]", -0.0397),
            ("C(academic_genre)[T.Sciences & Technology]", -0.0185),
            ("C(academic_genre)[T.Social Sciences]", -0.0060),
            ("C(language_env)[T.ESL]", -0.0077),
            ("C(language_env)[T.NS]", -0.0223),
        ],
    );
    let lookup = |fit: &WlsFit, factor: &str, level: &str| -> f64 {
        lsmeans(fit, factor, LsMeanMode::ReferenceProfile)
            .expect("lsmeans")
            .into_iter()
            .find(|c| c.level == level)
            .and_then(|c| c.adjusted_mean)
            .expect("level present")
    };
    let targets = [
        (&binoculars, "cefr", "B1_1", 0.9443),
        (&binoculars, "cefr", "B1_2", 0.9475),
        (&binoculars, "cefr", "B2_0", 0.9507),
        (&binoculars, "cefr", "XX_0", 0.8981),
        (&binoculars, "language_env", "ESL", 0.9337),
        (&detectgpt, "academic_genre", "Humanities", 0.7944),
    ];
    let failures: Vec<String> = targets
        .iter()
        .filter_map(|&(fit, factor, level, want)| {
            let got = lookup(fit, factor, level);
            ((got - want).abs() > 5e-5).then(|| format!("{factor}={level}: {got:.6} vs printed {want}"))
        })
        .collect();
    if failures.is_empty() {
        Ok(format!("{} LSMeans within 5e-5", targets.len()))
    } else {
        Err(failures.join("; "))
    }
}

fn coupled_spec(seed: u64, n_per_cell: usize) -> SynthSpec {
    SynthSpec {
        schema: four_factor_schema(),
        n_per_cell,
        human_score_mean: 0.0,
        human_score_sd: 1.0,
        ai_score_mean: 2.0,
        ai_score_sd: 1.0,
        effects: vec![],
        couplings: vec![LevelCoupling {
            attribute_a: "cefr".into(),
            level_a: "XX_0".into(),
            attribute_b: "language_env".into(),
            level_b: "NS".into(),
        }],
        detectors: vec!["d".into()],
        generator_id: "synth-gen".into(),
        seed,
    }
}

fn decisions_for(spec: &SynthSpec) -> Vec<DecisionRecord> {
    let (records, _) = generate(spec).expect("synthetic data");
    let configs: Vec<DetectorConfig> = spec
        .detectors
        .iter()
        .map(|d| DetectorConfig::new(d.as_str(), Orientation::HigherIsAi, 0.05).expect("config"))
        .collect();
    calibrate_detectors(&records, &configs)
        .expect("calibration")
        .into_iter()
        .flat_map(|(_, d)| d)
        .collect()
}

fn criterion_3_aliasing() -> Check {
    let spec = coupled_spec(3, 40);
    let decisions = decisions_for(&spec);
    let factors: Vec<String> = spec.schema.names().map(String::from).collect();
    let table = aggregate_groups(&decisions, &spec.schema, &factors).map_err(|e| e.to_string())?;
    let fit = analyze(&table, &factors, &spec.schema, 0.05).map_err(|e| e.to_string())?.fit;
    let xx = fit.column_index("C(cefr)[T.XX_0]").ok_or("no XX_0 column")?;
    let ns = fit.column_index("C(language_env)[T.NS]").ok_or("no NS column")?;
    ensure(fit.aliased_columns == ["C(language_env)[T.NS]"], || {
        format!("aliased columns {:?}", fit.aliased_columns)
    })?;
    within("beta XX_0 vs NS", fit.beta[xx], fit.beta[ns], 1e-9)?;
    let w = |factor: &str, a: &str, b: &str| {
        wald_contrast(&fit, factor, a, b, WaldDistribution::ChiSquare1).map(|c| c.wald_stat)
    };
    let cefr = w("cefr", "A2_0", "XX_0").map_err(|e| e.to_string())?;
    let env = w("language_env", "EFL", "NS").map_err(|e| e.to_string())?;
    within("Wald A2_0 vs XX_0 against EFL vs NS", cefr, env, 1e-9)?;
    Ok(format!("beta {:.4} on both labels, W = {cefr:.4} on both contrasts", fit.beta[xx]))
}

fn criterion_4_two_group_oracle() -> Check {
    let g1 = [(0.6, 1.0), (0.8, 1.0)];
    let g2 = [(0.4, 1.0), (0.4, 1.0)];
    let welch = weighted_welch_t(&g1, &g2, WelchOptions::default()).map_err(|e| e.to_string())?;
    within("Welch t", welch.t_stat, 4.242641, 1e-5)?;
    within("Welch df", welch.df_approx, 1.0, 1e-5)?;
    within("Welch p", welch.p_two_sided, 0.147363, 1e-5)?;

    let groups = BTreeMap::from([("g1".to_string(), g1.to_vec()), ("g2".to_string(), g2.to_vec())]);
    let oneway = weighted_oneway_anova(&groups, 0.05).map_err(|e| e.to_string())?;
    within("one-way F", oneway.f_stat.unwrap_or(f64::NAN), 9.0, 1e-5)?;
    within("one-way p", oneway.p_value.unwrap_or(f64::NAN), 0.095466, 1e-5)?;

    let schema = AttributeSchema::new(vec![Attribute::with_default_reference("G", &["g1", "g2"])]).expect("schema");
    let names = vec!["G".to_string()];
    let obs: Vec<Observation> = [("g1", 0.6), ("g1", 0.8), ("g2", 0.4), ("g2", 0.4)]
        .iter()
        .map(|&(l, y)| Observation { levels: vec![l.into()], weight: 1.0, response: y })
        .collect();
    let design = DesignMatrix::from_observations(&schema, &names, &obs, &names).map_err(|e| e.to_string())?;
    let fit = wls_fit(&design).map_err(|e| e.to_string())?;
    let row = type2_anova_design(&design, &fit, &names, 0.05).map_err(|e| e.to_string())?.rows.remove(0);
    within("Type II F", row.f_stat.unwrap_or(f64::NAN), 9.0, 1e-5)?;
    within("Type II p", row.p_value.unwrap_or(f64::NAN), 0.095466, 1e-5)?;
    within("partial R^2", row.partial_r2.unwrap_or(f64::NAN), 0.8182, 1e-4)?;
    Ok(format!(
        "t = {:.6}, df = {}, p = {:.6}; F = {:.4}, p = {:.6}, R2 = {:.4}",
        welch.t_stat,
        welch.df_approx,
        welch.p_two_sided,
        row.f_stat.unwrap_or(f64::NAN),
        row.p_value.unwrap_or(f64::NAN),
        row.partial_r2.unwrap_or(f64::NAN)
    ))
}

fn criterion_5_distributions() -> Check {
    let start = Instant::now();
    let grid = fs::read_to_string(workspace_file("../core/tests/data/dist_grid.csv")).map_err(|e| e.to_string())?;
    let num = |s: &str| s.parse::<f64>().map_err(|e| format!("`{s}`: {e}"));
    let mut worst = 0.0f64;
    let mut n = 0;
    for line in grid.lines().skip(1) {
        let f: Vec<&str> = line.split(',').collect();
        let x = num(f[1])?;
        let got = match f[0] {
            "t" => t_cdf(x, num(f[2])?),
            "f" => f_cdf(x, num(f[2])?, num(f[3])?),
            "chi2" => chi2_cdf(x, num(f[2])?),
            _ => Ok(normal_cdf(x)),
        }
        .map_err(|e| e.to_string())?;
        let err = (got - num(f[4])?).abs();
        ensure(err <= 1e-10, || format!("{line}: error {err:e}"))?;
        worst = worst.max(err);
        n += 1;
    }
    ensure(n == 50, || format!("grid has {n} points"))?;

    let mut rng = substream(5, 0);
    let mut worst_identity = 0.0f64;
    for _ in 0..1000 {
        let t: f64 = rng.random_range(-8.0..8.0);
        let d: f64 = rng.random_range(1.0..1000.0);
        let a = f_sf(t * t, 1.0, d).map_err(|e| e.to_string())?;
        let b = 2.0 * t_sf(t.abs(), d).map_err(|e| e.to_string())?;
        let z: f64 = rng.random_range(-8.0..8.0);
        let c = chi2_sf(z * z, 1.0).map_err(|e| e.to_string())?;
        let e = 2.0 * normal_sf(z.abs());
        worst_identity = worst_identity.max((a - b).abs()).max((c - e).abs());
    }
    ensure(worst_identity <= 1e-10, || format!("identity error {worst_identity:e}"))?;
    let elapsed = start.elapsed();
    budget(elapsed, Duration::from_secs(1))?;
    Ok(format!("grid max error {worst:.1e}, identity max error {worst_identity:.1e}, {elapsed:?}"))
}

fn recovery_spec(seed: u64) -> SynthSpec {
    SynthSpec {
        schema: AttributeSchema::new(vec![
            Attribute::with_default_reference("G", &["g0", "g1", "g2"]),
            Attribute::with_default_reference("H", &["h0", "h1"]),
            Attribute::with_default_reference("K", &["k0", "k1", "k2"]),
        ])
        .expect("schema"),
        n_per_cell: 500,
        human_score_mean: 0.0,
        human_score_sd: 1.0,
        ai_score_mean: 2.5,
        ai_score_sd: 1.0,
        effects: vec![PlantedEffect { attribute: "G".into(), level: "g2".into(), shift: -0.35, detector: None }],
        couplings: vec![],
        detectors: vec!["d".into()],
        generator_id: "synth-gen".into(),
        seed,
    }
}

fn criterion_6_planted_recovery() -> Check {
    let start = Instant::now();
    let runs = 200u64;
    let factors = ["G", "H", "K"];
    let mut rejections = [0usize; 3];
    let mut gap_total = 0.0;
    for seed in 0..runs {
        let spec = recovery_spec(seed);
        let decisions = decisions_for(&spec);
        let table = aggregate_groups(&decisions, &spec.schema, &factors).map_err(|e| e.to_string())?;
        let anova = analyze(&table, &factors, &spec.schema, 0.05).map_err(|e| e.to_string())?.anova;
        for (i, f) in factors.iter().enumerate() {
            rejections[i] += usize::from(anova.row(f).is_some_and(|r| r.significant));
        }
        let acc = |level: &str| {
            let rows: Vec<_> = decisions.iter().filter(|d| d.attributes["G"] == level).collect();
            rows.iter().filter(|d| d.correct).count() as f64 / rows.len() as f64
        };
        gap_total += (acc("g0") + acc("g1")) / 2.0 - acc("g2");
    }
    let elapsed = start.elapsed();
    let rate = rejections.map(|r| r as f64 / runs as f64);
    let gap = gap_total / runs as f64;
    let detail = format!(
        "gap {gap:.4}, power {:.3}, null rates H {:.3} K {:.3}, {elapsed:.1?}",
        rate[0], rate[1], rate[2]
    );
    ensure(gap >= 0.05, || format!("planted gap {gap:.4} < 0.05; {detail}"))?;
    ensure(rate[0] >= 0.95, || format!("power below 0.95; {detail}"))?;
    for r in &rate[1..] {
        ensure((0.02..=0.10).contains(r), || format!("null rate outside [0.02, 0.10]; {detail}"))?;
    }
    budget(elapsed, Duration::from_secs(60))?;
    Ok(detail)
}

fn criterion_7_fpr_tightness() -> Check {
    let start = Instant::now();
    let config = DetectorConfig::new("d", Orientation::HigherIsAi, 0.05).map_err(|e| e.to_string())?;
    let mut rng = substream(7, 0);
    let normal = Normal::new(0.0, 1.0).expect("unit normal");
    for sample in 0..1000 {
        let n = rng.random_range(20..=5000usize);
        let scores: Vec<f64> = (0..n).map(|_| normal.sample(&mut rng)).collect();
        let r = calibrate_threshold(&scores, &config).map_err(|e| e.to_string())?;
        let fpr = scores.iter().filter(|&&s| s > r.tau).count() as f64 / n as f64;
        ensure(fpr <= 0.05 && fpr >= 0.05 - 1.0 / n as f64, || {
            format!("sample {sample} (n = {n}): achieved FPR {fpr}")
        })?;
    }
    let elapsed = start.elapsed();
    budget(elapsed, Duration::from_secs(5))?;
    Ok(format!("1000 samples, {elapsed:.1?}"))
}

fn random_decisions(rng: &mut impl Rng, schema: &AttributeSchema) -> Vec<DecisionRecord> {
    let n = rng.random_range(1..400);
    (0..n)
        .map(|i| {
            let attributes = schema
                .attributes()
                .iter()
                .map(|a| (a.name.clone(), a.levels[rng.random_range(0..a.levels.len())].clone()))
                .collect();
            let correct = rng.random_bool(0.8);
            DecisionRecord {
                text_id: format!("t{i:05}"),
                detector_id: "d".into(),
                true_label: Label::Ai,
                predicted_label: if correct { Label::Ai } else { Label::Human },
                correct,
                attributes,
            }
        })
        .collect()
}

fn criterion_8_matching() -> Check {
    let start = Instant::now();
    let schema = AttributeSchema::new(vec![
        Attribute::with_default_reference("M", &["m0", "m1", "m2"]),
        Attribute::with_default_reference("P", &["p0", "p1", "p2"]),
        Attribute::with_default_reference("Q", &["q0", "q1"]),
    ])
    .expect("schema");
    let mut rng = substream(8, 0);
    for dataset in 0..500u64 {
        let decisions = random_decisions(&mut rng, &schema);
        let spec = MatchSpec {
            main_feature: "M".into(),
            control_features: vec!["P".into(), "Q".into()],
            seed: dataset,
            semantics: CategorySemantics::Declared,
        };
        let subset = matched_subset(&decisions, &spec, &schema).map_err(|e| e.to_string())?;
        let down = downsample_matched(&decisions, &spec, &schema).map_err(|e| e.to_string())?;
        let fail = |what: &str| format!("dataset {dataset}: {what}");

        let combo = |d: &DecisionRecord| (d.attributes["P"].clone(), d.attributes["Q"].clone());
        let mut spans: BTreeMap<_, BTreeMap<String, usize>> = BTreeMap::new();
        for d in &subset {
            *spans.entry(combo(d)).or_default().entry(d.attributes["M"].clone()).or_default() += 1;
        }
        ensure(spans.values().all(|c| c.len() == 3), || fail("subset combo misses a category"))?;

        let mut counts: BTreeMap<_, BTreeMap<String, usize>> = BTreeMap::new();
        for d in &down {
            *counts.entry(combo(d)).or_default().entry(d.attributes["M"].clone()).or_default() += 1;
        }
        for c in counts.values() {
            let first = *c.values().next().expect("non-empty");
            ensure(c.len() == 3 && c.values().all(|&n| n == first), || fail("unequal downsample counts"))?;
        }

        let mut pool: BTreeMap<&str, usize> = BTreeMap::new();
        for d in &subset {
            *pool.entry(d.text_id.as_str()).or_default() += 1;
        }
        for d in &down {
            let slot = pool.get_mut(d.text_id.as_str()).filter(|n| **n > 0).ok_or_else(|| fail("not a sub-multiset"))?;
            *slot -= 1;
        }

        let again = downsample_matched(&decisions, &spec, &schema).map_err(|e| e.to_string())?;
        let bytes = |v: &[DecisionRecord]| serde_json::to_vec(v).expect("serializable");
        ensure(bytes(&again) == bytes(&down), || fail("downsample not deterministic"))?;
    }
    let elapsed = start.elapsed();
    budget(elapsed, Duration::from_secs(10))?;
    Ok(format!("500 datasets, {elapsed:.1?}"))
}

/// Decisions whose correctness follows a known additive model.
fn additive_decisions(seed: u64, schema: &AttributeSchema) -> Vec<DecisionRecord> {
    let base = 0.8;
    let a_effect = [0.0, -0.05, 0.06];
    let b_effect = [0.0, -0.04];
    let mut rng = substream(seed, 9);
    let mut out = Vec::new();
    for (ai, a) in schema.attributes()[0].levels.iter().enumerate() {
        for (bi, b) in schema.attributes()[1].levels.iter().enumerate() {
            for _ in 0..150 {
                let correct = rng.random_bool(base + a_effect[ai] + b_effect[bi]);
                out.push(DecisionRecord {
                    text_id: format!("t{:05}", out.len()),
                    detector_id: "d".into(),
                    true_label: Label::Ai,
                    predicted_label: if correct { Label::Ai } else { Label::Human },
                    correct,
                    attributes: BTreeMap::from([("A".into(), a.clone()), ("B".into(), b.clone())]),
                });
            }
        }
    }
    out
}

fn criterion_9_bootstrap() -> Check {
    let start = Instant::now();
    let schema = AttributeSchema::new(vec![
        Attribute::with_default_reference("A", &["a0", "a1", "a2"]),
        Attribute::with_default_reference("B", &["b0", "b1"]),
    ])
    .expect("schema");
    let factors = ["A", "B"];
    let reps = 100u64;
    let mut within_ci: BTreeMap<String, usize> = BTreeMap::new();
    for rep in 0..reps {
        let decisions = additive_decisions(rep, &schema);
        let config = BootstrapConfig { replicates: 500, seed: 1000 + rep };
        let report = bootstrap_wls(&decisions, &factors, &schema, config).map_err(|e| e.to_string())?;
        for p in &report.parameters {
            *within_ci.entry(p.parameter.clone()).or_default() += usize::from(p.coverage == Coverage::WithinCi);
        }
    }
    let worst = within_ci.values().copied().min().unwrap_or(0) as f64 / reps as f64;
    ensure(within_ci.len() == 4, || format!("expected 4 parameters, got {within_ci:?}"))?;
    ensure(worst >= 0.90, || format!("coverage {worst:.2} < 0.90: {within_ci:?}"))?;

    let decisions = additive_decisions(reps, &schema);
    let config = BootstrapConfig { replicates: 500, seed: 77 };
    let run_with = |threads: usize| {
        let pool = rayon::ThreadPoolBuilder::new().num_threads(threads).build().expect("thread pool");
        pool.install(|| bootstrap_wls(&decisions, &factors, &schema, config))
            .map(|r| serde_json::to_vec(&r).expect("serializable"))
            .map_err(|e| e.to_string())
    };
    ensure(run_with(1)? == run_with(4)?, || "serial and parallel reports differ".into())?;
    let elapsed = start.elapsed();
    budget(elapsed, Duration::from_secs(120))?;
    Ok(format!("min coverage {worst:.2} over {} parameters, serial == parallel, {elapsed:.1?}", within_ci.len()))
}

fn audit(out: &Path, threads: usize) -> Result<(), String> {
    let status = Command::new(env!("CARGO_BIN_EXE_fairlens"))
        .args(["audit", "--config"])
        .arg(workspace_file("tests/fixtures/run.json"))
        .arg("--out")
        .arg(out)
        .env("FAIRLENS_THREADS", threads.to_string())
        .output()
        .map_err(|e| e.to_string())?;
    ensure(status.status.success(), || {
        format!("audit exited with {}: {}", status.status, String::from_utf8_lossy(&status.stderr))
    })
}

fn directory_bytes(dir: &Path) -> Result<BTreeMap<String, Vec<u8>>, String> {
    let mut files = BTreeMap::new();
    for entry in fs::read_dir(dir).map_err(|e| e.to_string())? {
        let path = entry.map_err(|e| e.to_string())?.path();
        let name = path.file_name().expect("file name").to_string_lossy().into_owned();
        files.insert(name, fs::read(&path).map_err(|e| e.to_string())?);
    }
    Ok(files)
}

fn criterion_10_end_to_end() -> Check {
    let tmp = tempfile::tempdir().map_err(|e| e.to_string())?;
    let runs = [("t1-a", 1), ("t1-b", 1), ("t8", 8)];
    let mut outputs = Vec::new();
    for (name, threads) in runs {
        let dir = tmp.path().join(name);
        audit(&dir, threads)?;
        outputs.push((name, directory_bytes(&dir)?));
    }
    let (_, reference) = &outputs[0];
    ensure(reference.len() >= 10, || format!("only {} files written", reference.len()))?;
    for (name, files) in &outputs[1..] {
        ensure(files.keys().eq(reference.keys()), || format!("{name}: different file set"))?;
        for (file, bytes) in files {
            ensure(&reference[file] == bytes, || format!("{name}: {file} differs"))?;
        }
    }
    Ok(format!("{} files identical across 2 runs and 1 vs 8 threads", reference.len()))
}

fn main() {
    let criteria: [Criterion; 10] = [
        ("Holm arithmetic", criterion_1_holm),
        ("LSMeans identity", criterion_2_lsmeans_identity),
        ("aliasing signature", criterion_3_aliasing),
        ("two-group oracle", criterion_4_two_group_oracle),
        ("distribution accuracy", criterion_5_distributions),
        ("planted-effect recovery", criterion_6_planted_recovery),
        ("FPR calibration tightness", criterion_7_fpr_tightness),
        ("matching invariants", criterion_8_matching),
        ("bootstrap coverage", criterion_9_bootstrap),
        ("end-to-end determinism", criterion_10_end_to_end),
    ];
    let mut failed = 0;
    for (i, (name, check)) in criteria.iter().enumerate() {
        let outcome = catch_unwind(AssertUnwindSafe(check)).unwrap_or_else(|_| Err("panicked".into()));
        match outcome {
            Ok(detail) => println!("PASS criterion {:>2} {name}: {detail}", i + 1),
            Err(detail) => {
                failed += 1;
                println!("FAIL criterion {:>2} {name}: {detail}", i + 1);
            }
        }
    }
    println!("acceptance: {} passed, {failed} failed", criteria.len() - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
