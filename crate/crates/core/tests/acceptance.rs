//! Acceptance suite. Runs every criterion, prints one PASS/FAIL line each and
//! exits nonzero if any fails.

use std::collections::BTreeSet;
use std::path::Path;
use std::process::Command;
use std::time::Instant;

use ndarray::{Array1, Array2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use ibsc::config::PipelineParams;
use ibsc::construction::plan::assignment_costs;
use ibsc::construction::{assign_primary_sources, attribute_difference, class_similarity, pairwise_stats};
use ibsc::eval::Strategy;
use ibsc::linear::{train_l1_linear, TrainParams};
use ibsc::pipeline;
use ibsc::relation::{build_relation_matrix, row_f1, RelationParams};
use ibsc::screening::{dissimilarity_attribute, dissimilarity_feature, CentroidReference, DissimilarityVector, Space};
use ibsc::synth::{generate, SynthConfig};
use ibsc::{class_centroids, AttributeTable, SplitSpec};

type Outcome = Result<String, String>;
type Criterion<'a> = (&'static str, Box<dyn Fn() -> Outcome + 'a>);

fn family(seed: u64, sigma_noise: f64) -> SynthConfig {
    SynthConfig {
        k_s: 20,
        k_u: 5,
        d: 12,
        g: 8,
        e: 32,
        n_c: 30,
        sigma_noise,
        attr_noise: 0.0,
        seed,
    }
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

fn check(ok: bool, detail: String) -> Outcome {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn relation_recovery() -> Outcome {
    let mut noisy = Vec::new();
    let mut clean = Vec::new();
    let mut slowest: f64 = 0.0;
    for seed in 0..5 {
        for (sigma, out) in [(0.3, &mut noisy), (0.0, &mut clean)] {
            let data = generate(&family(seed, sigma)).map_err(|e| e.to_string())?;
            let t = Instant::now();
            let fit = build_relation_matrix(
                &data.dataset,
                &data.attrs,
                &data.split,
                &RelationParams {
                    seed,
                    ..RelationParams::default()
                },
            )
            .map_err(|e| e.to_string())?;
            slowest = slowest.max(t.elapsed().as_secs_f64());
            out.push(mean(&row_f1(&fit.relation, &data.truth).map_err(|e| e.to_string())?));
        }
    }
    let noisy_mean = mean(&noisy);
    let clean_exact = clean.iter().all(|&f| f == 1.0);
    check(
        noisy_mean >= 0.80 && clean_exact && slowest <= 60.0,
        format!("mean F1 at sigma 0.3 = {noisy_mean:.4} (>= 0.80), F1 at sigma 0 = {clean:?} (all 1.0), slowest fit {slowest:.1}s (<= 60s)"),
    )
}

/// Mean top-1 accuracy per strategy over ten seeds of the synthetic family.
fn strategy_means() -> Result<[f64; 5], String> {
    let mut sums = [0.0; 5];
    for seed in 0..10u64 {
        let data = generate(&family(seed, 0.3)).map_err(|e| e.to_string())?;
        let params = PipelineParams {
            seed,
            ..PipelineParams::default()
        };
        let out = pipeline::run(&data.dataset, &data.attrs, &data.split, &params).map_err(|e| e.to_string())?;
        let report = out
            .evaluate(&data.dataset, &data.attrs, &data.split, &params, &Strategy::ALL, serde_json::Value::Null)
            .map_err(|e| e.to_string())?;
        for (i, s) in Strategy::ALL.iter().enumerate() {
            sums[i] += report.top1(*s).ok_or("missing strategy")?;
        }
    }
    Ok(sums.map(|s| s / 10.0))
}

fn screening_ordering(m: &[f64; 5]) -> Outcome {
    let (ibsc, ibsc_s) = (m[3], m[4]);
    check(
        ibsc_s >= ibsc - 0.02,
        format!("mean top1 IBSC_S {ibsc_s:.4} >= IBSC {ibsc:.4} - 0.02"),
    )
}

fn construction_ordering(m: &[f64; 5]) -> Outcome {
    let [m1, m2, m3, ibsc, ibsc_s] = *m;
    check(
        ibsc >= m2 && ibsc >= m3 && ibsc_s >= m1,
        format!("IBSC {ibsc:.4} >= M2 {m2:.4} and M3 {m3:.4}; IBSC_S {ibsc_s:.4} >= M1 {m1:.4}"),
    )
}

fn random_table(rng: &mut ChaCha8Rng, k: usize, d: usize) -> AttributeTable {
    let binary = Array2::from_shape_fn((k, d), |_| u8::from(rng.gen_bool(0.5)));
    let continuous = Array2::from_shape_fn((k, d), |_| rng.gen_range(0.0..1.0));
    AttributeTable::new(continuous, binary, (0..k).map(|c| format!("c{c}")).collect()).unwrap()
}

/// Minimal total over all injective maps, summed in row order.
fn brute_force(costs: &[Vec<f64>]) -> f64 {
    fn rec(costs: &[Vec<f64>], row: usize, used: &mut [bool], partial: &mut Vec<usize>, best: &mut f64) {
        if row == costs.len() {
            let total = partial.iter().enumerate().map(|(i, &j)| costs[i][j]).sum::<f64>();
            *best = best.min(total);
            return;
        }
        for j in 0..used.len() {
            if !used[j] {
                used[j] = true;
                partial.push(j);
                rec(costs, row + 1, used, partial, best);
                partial.pop();
                used[j] = false;
            }
        }
    }
    let mut best = f64::INFINITY;
    rec(costs, 0, &mut vec![false; costs[0].len()], &mut Vec::new(), &mut best);
    best
}

fn assignment_oracle() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    for instance in 0..50 {
        let ku = rng.gen_range(1..=6);
        let ks = rng.gen_range(ku.max(2)..=10);
        let d = rng.gen_range(2..=8);
        let attrs = random_table(&mut rng, ks + ku, d);
        let split = SplitSpec::new((0..ks).collect(), (ks..ks + ku).collect()).unwrap();
        let stats = pairwise_stats(&attrs).map_err(|e| e.to_string())?;
        let costs = assignment_costs(&attrs, &stats, &split).map_err(|e| e.to_string())?;
        let map = assign_primary_sources(&attrs, &stats, &split).map_err(|e| e.to_string())?;
        let used: BTreeSet<_> = map.values().collect();
        if used.len() != ku {
            return Err(format!("instance {instance}: assignment is not injective"));
        }
        let solved: f64 = map.values().enumerate().map(|(row, &s)| costs[row][s]).sum();
        let best = brute_force(&costs);
        if solved != best {
            return Err(format!("instance {instance}: cost {solved} vs brute force {best}"));
        }
    }
    Ok("50 instances match brute-force enumeration exactly".into())
}

fn standardization_identities() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut worst: f64 = 0.0;
    for _ in 0..20 {
        let k = rng.gen_range(3..=30);
        let d = rng.gen_range(1..=40);
        let attrs = random_table(&mut rng, k, d);
        let stats = pairwise_stats(&attrs).map_err(|e| e.to_string())?;
        let mut phi = Vec::new();
        let mut psi = Vec::new();
        for i in 0..k {
            for j in i + 1..k {
                phi.push(class_similarity(&attrs, &stats, i, j).unwrap());
                psi.push(attribute_difference(&attrs, &stats, i, j).unwrap());
            }
        }
        for v in [&phi, &psi] {
            let m = mean(v);
            let sd = (v.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / v.len() as f64).sqrt();
            worst = worst.max(m.abs()).max((sd - 1.0).abs());
        }
    }
    check(worst <= 1e-9, format!("max |mean| and |std - 1| over 20 tables = {worst:.2e}"))
}

fn dissimilarity_identities() -> Outcome {
    let data = generate(&family(6, 0.3)).map_err(|e| e.to_string())?;
    let (attrs, split, dataset) = (&data.attrs, &data.split, &data.dataset);
    let centroids = class_centroids(dataset, split.seen()).map_err(|e| e.to_string())?;
    let reference = CentroidReference::new(&centroids).map_err(|e| e.to_string())?;
    let mut worst_sum: f64 = 0.0;

    // Self-dissimilarity, in both spaces, for every seen class.
    for (pos, &s) in split.seen().iter().enumerate() {
        let da = dissimilarity_attribute(attrs, split, s).map_err(|e| e.to_string())?;
        let df = dissimilarity_feature(centroids[&s].view(), &reference).map_err(|e| e.to_string())?;
        if da.values[pos] != 0.0 || df.values[pos] != 0.0 {
            return Err(format!("class {s}: self entry is not zero"));
        }
        for v in [&da, &df] {
            worst_sum = worst_sum.max((v.values.iter().sum::<f64>() - 1.0).abs());
        }
    }
    for r in 0..dataset.n() {
        let df = dissimilarity_feature(dataset.row(r), &reference).map_err(|e| e.to_string())?;
        worst_sum = worst_sum.max((df.values.iter().sum::<f64>() - 1.0).abs());
    }
    if worst_sum > 1e-9 {
        return Err(format!("normalized vectors sum to 1 within {worst_sum:.2e} only"));
    }

    // Raw distances are squared distances over θ²; any positive rescaling of
    // the raw vector through θ² must leave the normalized vector unchanged.
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    for _ in 0..200 {
        let squared: Vec<f64> = (0..rng.gen_range(2..30)).map(|_| rng.gen_range(0.0..50.0)).collect();
        let base = DissimilarityVector::from_squared(squared.clone(), 1.0, Space::Feature).unwrap();
        let c: f64 = 10f64.powf(rng.gen_range(-8.0..8.0));
        let scaled = DissimilarityVector::from_squared(squared.clone(), 1.0 / c, Space::Feature).unwrap();
        if scaled.values != base.values {
            return Err(format!("normalized vector changed under raw scaling by {c}"));
        }
        let p2 = 2f64.powi(rng.gen_range(-30..30));
        let doubled =
            DissimilarityVector::from_squared(squared.iter().map(|v| v * p2).collect(), 1.0, Space::Feature).unwrap();
        if doubled.values != base.values {
            return Err(format!("normalized vector changed under distance scaling by {p2}"));
        }
    }

    // Rescaling the whole feature space by a power of two.
    let scale = 8.0;
    let scaled_centroids = centroids.iter().map(|(&c, v)| (c, v * scale)).collect();
    let scaled_ref = CentroidReference::new(&scaled_centroids).unwrap();
    for r in 0..dataset.n() {
        let a = dissimilarity_feature(dataset.row(r), &reference).unwrap();
        let x: Array1<f64> = dataset.row(r).to_owned() * scale;
        let b = dissimilarity_feature(x.view(), &scaled_ref).unwrap();
        if a.values != b.values {
            return Err(format!("row {r}: feature-space profile changed under rescaling"));
        }
    }
    Ok(format!(
        "self entries 0 in both spaces, sums within {worst_sum:.1e} of 1, normalized vectors bit-identical under rescaling"
    ))
}

/// Squared-hinge loss mean plus λ‖w‖₁ on raw (unstandardized) columns.
fn primal(x: &Array2<f64>, y: &[bool], w: &[f64], b: f64, lambda: f64) -> f64 {
    let loss: f64 = x
        .rows()
        .into_iter()
        .zip(y)
        .map(|(r, &yi)| {
            let f = r.iter().zip(w).map(|(a, c)| a * c).sum::<f64>() + b;
            let m = 1.0 - if yi { f } else { -f };
            if m > 0.0 {
                m * m
            } else {
                0.0
            }
        })
        .sum::<f64>()
        / y.len() as f64;
    loss + lambda * w.iter().map(|v| v.abs()).sum::<f64>()
}

/// Dense grid search over `(w, b)` with successive zooming around the best
/// grid point. `w` has one or two entries.
fn grid_minimum(x: &Array2<f64>, y: &[bool], lambda: f64) -> f64 {
    let p = x.ncols();
    let mut center = vec![0.0; p + 1];
    // λ‖w‖₁ cannot exceed the loss at zero, which is at most 1.
    let mut half = 1.0 / lambda + 4.0;
    let steps = 40i32;
    let mut best = f64::INFINITY;
    for _ in 0..60 {
        let h = half / f64::from(steps / 2);
        let mut best_point = center.clone();
        let mut point = vec![0.0; p + 1];
        let total = (steps + 1).pow(p as u32 + 1);
        for idx in 0..total {
            let mut rest = idx;
            for (k, slot) in point.iter_mut().enumerate() {
                *slot = center[k] + h * f64::from(rest % (steps + 1) - steps / 2);
                rest /= steps + 1;
            }
            let f = primal(x, y, &point[..p], point[p], lambda);
            if f < best {
                best = f;
                best_point = point.clone();
            }
        }
        center = best_point;
        half *= 0.5;
    }
    best
}

fn solver_oracle() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut worst: f64 = 0.0;
    for problem in 0..20 {
        let p = rng.gen_range(1..=2);
        let n = rng.gen_range(6..=40);
        let x = Array2::from_shape_fn((n, p), |_| rng.gen_range(-2.0..2.0));
        let w_true: Vec<f64> = (0..p).map(|_| rng.gen_range(-2.0..2.0)).collect();
        let mut y: Vec<bool> = x
            .rows()
            .into_iter()
            .map(|r| r.iter().zip(&w_true).map(|(a, b)| a * b).sum::<f64>() + rng.gen_range(-0.8..0.8) > 0.0)
            .collect();
        y[0] = true;
        y[1] = false;
        let lambda = rng.gen_range(0.01..0.5);
        let params = TrainParams {
            lambda,
            standardize: false,
            seed: problem,
            ..TrainParams::default()
        };
        let model = train_l1_linear(x.view(), &y, &params).map_err(|e| e.to_string())?;
        let solved = primal(&x, &y, model.weights(), model.bias(), lambda);
        let grid = grid_minimum(&x, &y, lambda);
        let rel = (solved - grid).abs() / grid.abs().max(1e-12);
        worst = worst.max(rel);
        if rel > 1e-4 {
            return Err(format!("problem {problem}: solver {solved} vs grid {grid} (relative {rel:.2e})"));
        }
        let huge = train_l1_linear(
            x.view(),
            &y,
            &TrainParams {
                lambda: 1e6,
                ..params
            },
        )
        .map_err(|e| e.to_string())?;
        if huge.weights().iter().any(|&w| w != 0.0) {
            return Err(format!("problem {problem}: lambda 1e6 left nonzero weights {:?}", huge.weights()));
        }
    }
    Ok(format!(
        "20 problems within {worst:.2e} relative of the grid minimum; lambda 1e6 gives zero weights"
    ))
}

fn splice_conservation() -> Outcome {
    let data = generate(&family(8, 0.3)).map_err(|e| e.to_string())?;
    let params = PipelineParams {
        seed: 8,
        ..PipelineParams::default()
    };
    let out = pipeline::run(&data.dataset, &data.attrs, &data.split, &params).map_err(|e| e.to_string())?;
    let mut checked = 0usize;
    let mut donors = 0usize;
    for samples in out.constructed().values() {
        for s in samples {
            for (j, &v) in s.feature.iter().enumerate() {
                let source = s.source_of(j).ok_or("constructed sample has a drawn value")?;
                if v != data.dataset.row(source)[j] {
                    return Err(format!("sample from base {} dim {j} does not match row {source}", s.base_sample));
                }
                checked += 1;
                donors += usize::from(source != s.base_sample);
            }
        }
    }
    check(
        donors > 0,
        format!("{checked} values match their base or donor row exactly ({donors} from donors)"),
    )
}

const DETERMINISM_ARTIFACTS: &[&str] = &[
    "relation.bin",
    "constructed.csv",
    "constructed_provenance.csv",
    "screened.csv",
    "eval_report.json",
    "compare_report.json",
];

fn run_cli(config: &Path, out: &Path) -> Result<(), String> {
    let status = Command::new(env!("CARGO_BIN_EXE_ibsc"))
        .args(["pipeline", "--config"])
        .arg(config)
        .arg("--out")
        .arg(out)
        .arg("--seed")
        .arg("9")
        .stdout(std::process::Stdio::null())
        .status()
        .map_err(|e| e.to_string())?;
    if status.success() {
        Ok(())
    } else {
        Err(format!("pipeline exited with {status}"))
    }
}

fn determinism() -> Outcome {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let config = dir.path().join("run.cfg");
    std::fs::write(
        &config,
        "seed = 1\n[synth]\nk_s = 20\nk_u = 5\nd = 12\ng = 8\ne = 32\nn_c = 30\nsigma_noise = 0.3\n",
    )
    .map_err(|e| e.to_string())?;
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    run_cli(&config, &a)?;
    run_cli(&config, &b)?;
    for name in DETERMINISM_ARTIFACTS {
        let x = std::fs::read(a.join(name)).map_err(|e| format!("{name}: {e}"))?;
        let y = std::fs::read(b.join(name)).map_err(|e| format!("{name}: {e}"))?;
        if x != y {
            return Err(format!("{name} differs between runs"));
        }
    }
    Ok(format!("{} artifacts byte-identical across two runs", DETERMINISM_ARTIFACTS.len()))
}

fn main() {
    let start = Instant::now();
    let means = strategy_means();
    let criteria: Vec<Criterion> = vec![
        ("relation recovery", Box::new(relation_recovery)),
        ("screening ordering", Box::new(|| screening_ordering(means.as_ref().map_err(Clone::clone)?))),
        ("construction ordering", Box::new(|| construction_ordering(means.as_ref().map_err(Clone::clone)?))),
        ("assignment oracle", Box::new(assignment_oracle)),
        ("standardization identities", Box::new(standardization_identities)),
        ("dissimilarity identities", Box::new(dissimilarity_identities)),
        ("solver oracle", Box::new(solver_oracle)),
        ("splice conservation", Box::new(splice_conservation)),
        ("determinism", Box::new(determinism)),
    ];
    let mut failed = 0;
    for (i, (name, run)) in criteria.iter().enumerate() {
        match run() {
            Ok(detail) => println!("criterion {} {name}: PASS ({detail})", i + 1),
            Err(detail) => {
                failed += 1;
                println!("criterion {} {name}: FAIL ({detail})", i + 1);
            }
        }
    }
    println!(
        "acceptance: {} passed, {failed} failed in {:.1}s",
        criteria.len() - failed,
        start.elapsed().as_secs_f64()
    );
    if failed > 0 {
        std::process::exit(1);
    }
}
