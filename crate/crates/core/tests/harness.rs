use std::collections::HashSet;
use std::path::Path;
use std::sync::Arc;

use eigopt::eig::NoiseModel;
use eigopt::harness::*;
use eigopt::models::{DiffusionConfig, DiffusionModel, ForwardModel};
use eigopt::optim::{rm_sample_seed, saa_sample_seed, lower_bound_seed};
use eigopt::polychaos::{total_order_index_set, AffineMap, PCExpansion};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn linear_config(seed: u64) -> ExperimentConfig {
    ExperimentConfig {
        algorithm: vec![Algorithm::Rm, Algorithm::Saa],
        n_list: vec![5, 20],
        m_list: vec![3, 10],
        runs: 4,
        seed,
        requality_n: 200,
        requality_m: 50,
        model: ModelChoice::LinearGaussian {
            alpha: 0.5,
            lower: -1.0,
            upper: 1.0,
        },
        timing: false,
        ..ExperimentConfig::default()
    }
}

fn run(config: &ExperimentConfig) -> ExperimentMatrixResult {
    let setup = config.model.resolve(Path::new(".")).unwrap();
    run_matrix(config, &setup).unwrap()
}

fn report_bytes(result: &ExperimentMatrixResult) -> Vec<Vec<u8>> {
    let dir = tempfile::tempdir().unwrap();
    emit_reports(result, dir.path()).unwrap();
    REPORT_FILES
        .iter()
        .map(|f| std::fs::read(dir.path().join(f)).unwrap())
        .collect()
}

#[test]
fn constant_model_single_replicate() {
    let config = ExperimentConfig {
        algorithm: vec![Algorithm::Rm],
        n_list: vec![4],
        m_list: vec![3],
        runs: 1,
        requality_n: 50,
        requality_m: 20,
        model: ModelChoice::Constant {
            outputs: vec![0.3, 0.7],
        },
        ..ExperimentConfig::default()
    };
    let r = run(&config);
    assert_eq!(r.cells.len(), 1);
    assert_eq!(r.cells[0].replicates.len(), 1);
    assert_eq!(r.cells[0].replicates[0].u_hat, 0.0);
    assert_eq!(r.u_ref(), Some(0.0));
}

#[test]
fn reports_round_trip() {
    let mut config = linear_config(3);
    config.timing = true;
    let r = run(&config);
    let dir = tempfile::tempdir().unwrap();
    emit_reports(&r, dir.path()).unwrap();
    let back = read_reports(dir.path()).unwrap();
    assert_eq!(back, r);
}

#[test]
fn empty_result_gives_header_only_files() {
    let config = linear_config(1);
    let empty = ExperimentMatrixResult {
        config: config.clone(),
        cells: vec![CellResult {
            algorithm: Algorithm::Saa,
            n: 5,
            m: 3,
            replicates: vec![],
            gaps: vec![],
            failures: vec![],
        }],
    };
    let dir = tempfile::tempdir().unwrap();
    emit_reports(&empty, dir.path()).unwrap();
    let designs = std::fs::read_to_string(dir.path().join("designs.csv")).unwrap();
    assert_eq!(designs, "algorithm,N,M,t,x,y,termination,iters,wall_s\n");
    let gaps = std::fs::read_to_string(dir.path().join("gaps.csv")).unwrap();
    assert_eq!(gaps, "N,M,t,upper,lower,gap,variance\n");
    let mse = std::fs::read_to_string(dir.path().join("mse_vs_time.csv")).unwrap();
    assert_eq!(mse, "algorithm,N,M,mean_runtime_s,mse\nsaa,5,3,,\n");
    let summary: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("summary.json")).unwrap()).unwrap();
    assert!(summary["U_ref"].is_null());
    assert_eq!(read_reports(dir.path()).unwrap(), empty);
}

#[test]
fn mse_columns_and_values() {
    let r = run(&linear_config(9));
    let dir = tempfile::tempdir().unwrap();
    emit_reports(&r, dir.path()).unwrap();
    let mut rdr = csv::Reader::from_path(dir.path().join("mse_vs_time.csv")).unwrap();
    let header: Vec<String> = rdr.headers().unwrap().iter().map(String::from).collect();
    assert_eq!(header, ["algorithm", "N", "M", "mean_runtime_s", "mse"]);
    let u_ref = r.u_ref().unwrap();
    let rows: Vec<csv::StringRecord> = rdr.records().map(Result::unwrap).collect();
    assert_eq!(rows.len(), r.cells.len());
    for (row, cell) in rows.iter().zip(&r.cells) {
        let mse: f64 = row[4].parse().unwrap();
        let direct = cell.u_hats().iter().map(|u| (u - u_ref).powi(2)).sum::<f64>() / cell.u_hats().len() as f64;
        assert_eq!(mse, direct);
    }
}

#[test]
fn mse_matches_independent_formula() {
    let mut rng = ChaCha8Rng::seed_from_u64(44);
    for _ in 0..100 {
        let n = rng.random_range(1..40);
        let v: Vec<f64> = (0..n).map(|_| rng.random_range(-3.0..3.0)).collect();
        let u_ref = rng.random_range(-3.0..3.0);
        // expanded form: E[u²] - 2 u_ref E[u] + u_ref²
        let m1 = v.iter().sum::<f64>() / n as f64;
        let m2 = v.iter().map(|x| x * x).sum::<f64>() / n as f64;
        let oracle = m2 - 2.0 * u_ref * m1 + u_ref * u_ref;
        assert!((mse_of_cell(&v, u_ref).unwrap() - oracle).abs() < 1e-10);
    }
}

#[test]
fn gaps_hold_rowwise() {
    let r = run(&linear_config(5));
    let mut seen = 0;
    for cell in r.cells.iter().filter(|c| c.algorithm == Algorithm::Saa) {
        for g in &cell.gaps {
            assert_eq!(g.gap, g.upper - g.lower);
            seen += 1;
        }
    }
    assert!(seen > 0);
}

#[test]
fn identical_reports_for_any_thread_count() {
    let config = linear_config(17);
    let one = rayon::ThreadPoolBuilder::new()
        .num_threads(1)
        .build()
        .unwrap()
        .install(|| report_bytes(&run(&config)));
    let three = rayon::ThreadPoolBuilder::new()
        .num_threads(3)
        .build()
        .unwrap()
        .install(|| report_bytes(&run(&config)));
    assert_eq!(one, three);
}

#[test]
fn requality_seeds_disjoint_from_optimization_seeds() {
    let config = linear_config(23);
    let mut optimization = HashSet::new();
    let mut evaluation = HashSet::new();
    for &alg in &config.algorithm {
        for &n in &config.n_list {
            for &m in &config.m_list {
                let cs = cell_seed(config.seed, alg, n, m);
                for t in 0..config.runs {
                    optimization.insert(saa_sample_seed(cs, t));
                    optimization.insert(lower_bound_seed(cs, t));
                    for k in 1..=config.rm.max_iters {
                        optimization.insert(rm_sample_seed(cs, t, k));
                    }
                    evaluation.insert(requality_seed(config.seed, alg, n, m, t));
                }
            }
        }
    }
    assert!(optimization.is_disjoint(&evaluation));
}

fn constant_surrogate(values: &[f64]) -> PCExpansion {
    let set = total_order_index_set(4, 0).unwrap();
    let maps = vec![AffineMap::from_interval(0.0, 1.0).unwrap(); 4];
    PCExpansion::new(set, 2, maps, values.len(), values.to_vec(), false).unwrap()
}

#[test]
fn posterior_flat_for_constant_surrogate() {
    let s = constant_surrogate(&[0.4, 0.2]);
    let noise = NoiseModel::uniform(2, 0.1, 0.1).unwrap();
    let p = posterior_map(&s, &noise, &[0.5, 0.5], &[0.41, 0.1], 21).unwrap();
    assert!(p.density.iter().all(|&v| (v - 1.0).abs() < 1e-12));
    assert!((p.integrate(|_, _| 1.0) - 1.0).abs() < 1e-12);
}

#[test]
fn posterior_reports_severe_mismatch() {
    let s = constant_surrogate(&[0.0]);
    let noise = NoiseModel::uniform(1, 0.01, 0.0).unwrap();
    let err = posterior_map(&s, &noise, &[0.5, 0.5], &[100.0], 11).unwrap_err();
    assert!(matches!(err, HarnessError::Posterior(_)));
}

fn benchmark_surrogate() -> PCExpansion {
    build_diffusion_surrogate(&SurrogateSpec::default()).unwrap().0
}

#[test]
fn posterior_peaks_at_generating_grid_point() {
    let s = benchmark_surrogate();
    let noise = NoiseModel::uniform(5, 0.1, 0.0).unwrap();
    let k = 26;
    let (i0, j0) = (7, 18);
    let theta = [i0 as f64 / (k - 1) as f64, j0 as f64 / (k - 1) as f64];
    let d = [0.0, 1.0];
    let y = s.value(&theta, &d).unwrap();
    let p = posterior_map(&s, &noise, &d, &y, k).unwrap();
    assert_eq!(p.argmax(), (i0, j0));
}

#[test]
fn posterior_concentrates_on_ring_around_sensor() {
    let s = benchmark_surrogate();
    let noise = benchmark_noise(5);
    let truth = DiffusionModel::new(DiffusionConfig::default()).unwrap();
    let source = [0.09, 0.22];
    let sensor = [0.0, 0.0];
    let y = truth.value(&source, &sensor).unwrap();
    let p = posterior_map(&s, &noise, &sensor, &y, 101).unwrap();
    let r = |x: f64, y: f64| (x * x + y * y).sqrt();
    let mean_r = p.integrate(r);
    let sd_r = (p.integrate(|x, y| (r(x, y) - mean_r).powi(2))).sqrt();
    let angle = |x: f64, y: f64| y.atan2(x);
    let mean_a = p.integrate(angle);
    let sd_arc = (p.integrate(|x, y| (angle(x, y) - mean_a).powi(2))).sqrt() * mean_r;
    let r_true = r(source[0], source[1]);
    let prior = PosteriorGrid {
        xs: p.xs.clone(),
        ys: p.ys.clone(),
        density: vec![1.0; p.density.len()],
    };
    let prior_mean_r = prior.integrate(r);
    let prior_sd_r = (prior.integrate(|x, y| (r(x, y) - prior_mean_r).powi(2))).sqrt();
    // narrow in radius, spread along the arc, and the ring passes through the source
    assert!(sd_r < sd_arc, "sd_r {sd_r}, arc spread {sd_arc}");
    assert!(sd_r < 0.25 * prior_sd_r, "sd_r {sd_r}, prior {prior_sd_r}");
    assert!((r_true - mean_r).abs() < 2.0 * sd_r, "r_true {r_true}, mean {mean_r} ± {sd_r}");
}

#[test]
fn mse_improves_from_smallest_to_largest_cell() {
    let config = ExperimentConfig {
        algorithm: vec![Algorithm::Rm],
        n_list: vec![1, 101],
        m_list: vec![2, 101],
        runs: 20,
        seed: 2,
        requality_n: 1001,
        requality_m: 1001,
        timing: false,
        ..ExperimentConfig::default()
    };
    let setup = ExperimentSetup::from_surrogate(Arc::new(benchmark_surrogate())).unwrap();
    let r = run_matrix(&config, &setup).unwrap();
    let mse = |n, m| {
        let c = r.cells.iter().find(|c| c.n == n && c.m == m).unwrap();
        r.cell_mse(c).unwrap()
    };
    assert!(mse(101, 101) < mse(1, 2), "{} vs {}", mse(101, 101), mse(1, 2));
}
