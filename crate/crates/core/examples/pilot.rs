use std::time::Instant;
use kofilter::sim::{run_experiment, ExperimentConfig};
use kofilter::path::ModelKind;
use kofilter::filter::Variant;
use kofilter::ako::ScheduleKind;

fn main() {
    // criterion-1-shaped: sparse linear, KO+, uniform, k=5
    for (label, sparsity, model) in [
        ("sparse-linear", 20, ModelKind::Linear),
        ("pure-null-linear", 0, ModelKind::Linear),
        ("sparse-logistic", 20, ModelKind::Logistic),
    ] {
        let cfg = ExperimentConfig {
            n: 200,
            p: 100,
            rho: 0.5,
            sparsity,
            snr: 5.0,
            sigma2: 1.0,
            model,
            q_grid: vec![0.1, 0.2],
            variant: Variant::KoPlus,
            schedule_kind: ScheduleKind::Uniform,
            k: 5,
            reps: 5,
            master_seed: 1,
            shrinkage: 0.0,
        };
        let t = Instant::now();
        let res = run_experiment(&cfg).unwrap();
        let dt = t.elapsed().as_secs_f64();
        println!("{label}: {} reps in {:.2}s => {:.2}s/rep; excluded={}", cfg.reps, dt, dt / cfg.reps as f64, res.excluded.len());
        for c in &res.cells {
            println!("  q={} {:?} fdr={:.3} power={:?}", c.q, c.method, c.mean_fdr, c.mean_power);
        }
    }
}
