//! End-to-end acceptance checks. Runs as a plain binary so every criterion
//! prints one PASS/FAIL line regardless of output capture.

use std::io::{BufRead, BufReader, BufWriter};
use std::net::{TcpListener, TcpStream};
use std::panic::{self, AssertUnwindSafe};
use std::process::ExitCode;
use std::thread;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use rlstm_core::bench::{self, Arm, BenchConfig};
use rlstm_core::engine::{self, EngineConfig, OnlineSession, PredictionRecord, Trainer};
use rlstm_core::feed;
use rlstm_core::geo::{Dataset, DatasetRole, GeoPoint, Trajectory};
use rlstm_core::metrics::{aggregate, axis_errors, error_3d, two_step_average, RecordErrors, StepError};
use rlstm_core::nn::{Arch, Dense, LstmCell, LstmState, NetKind, Network, Parameters, RnnCell};
use rlstm_core::optim::{grad_check, mse_loss, TrainConfig};
use rlstm_core::predictor::{Checkpoint, ModelKind, PredictorModel};
use rlstm_core::preprocess::NormStats;
use rlstm_core::report;
use rlstm_core::synth::{synth_generate, synthetic_suite, ShapeKind, ShapeParams, SuiteConfig};

const FD_STEP: f64 = 1e-6;
const GRAD_TOL: f64 = 1e-4;

type Outcome = Result<String, String>;

fn ensure(cond: bool, msg: impl Into<String>) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg.into())
    }
}

fn rand_vec(rng: &mut ChaCha8Rng, n: usize, scale: f64) -> Vec<f64> {
    (0..n).map(|_| rng.random_range(-scale..scale)).collect()
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn randomize<P: Parameters>(p: &mut P, rng: &mut ChaCha8Rng, scale: f64) {
    let flat = rand_vec(rng, p.num_params(), scale);
    p.copy_from_flat(&flat).unwrap();
}

fn check_params<P: Parameters + Clone>(p: &P, analytic: &P, loss: impl Fn(&P) -> f64) -> f64 {
    let mut probe = p.clone();
    grad_check(
        |flat| {
            probe.copy_from_flat(flat).unwrap();
            loss(&probe)
        },
        &p.to_flat(),
        &analytic.to_flat(),
        FD_STEP,
    )
    .unwrap()
}

fn check_input(x: &[f64], analytic: &[f64], loss: impl Fn(&[f64]) -> f64) -> f64 {
    grad_check(loss, x, analytic, FD_STEP).unwrap()
}

fn random_window(rng: &mut ChaCha8Rng, w: usize) -> Vec<[f64; 3]> {
    (0..w)
        .map(|_| [rng.random_range(-2.0..2.0), rng.random_range(-2.0..2.0), rng.random_range(-2.0..2.0)])
        .collect()
}

fn criterion_gradients() -> Outcome {
    let mut worst = [0.0f64; 6];
    let arch = Arch::default();
    for seed in 0..20u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(1000 + seed);

        let mut d = Dense::init(5, 7, &mut rng);
        randomize(&mut d, &mut rng, 0.8);
        let x = rand_vec(&mut rng, 7, 1.5);
        let r = rand_vec(&mut rng, 5, 1.0);
        let (_, cache) = d.forward(&x).unwrap();
        let mut g = Dense::zeros(5, 7);
        let dx = d.backward(cache, &r, &mut g).unwrap();
        let e1 = check_params(&d, &g, |p| dot(&p.forward(&x).unwrap().0, &r));
        let e2 = check_input(&x, &dx, |xi| dot(&d.forward(xi).unwrap().0, &r));
        worst[0] = worst[0].max(e1).max(e2);

        let mut c = RnnCell::init(3, 6, &mut rng);
        randomize(&mut c, &mut rng, 0.8);
        let x = rand_vec(&mut rng, 3, 1.5);
        let h = rand_vec(&mut rng, 6, 0.9);
        let r = rand_vec(&mut rng, 6, 1.0);
        let (_, cache) = c.forward(&x, &h).unwrap();
        let mut g = RnnCell::zeros(3, 6);
        let (dx, dh) = c.backward(cache, &r, &mut g).unwrap();
        let e1 = check_params(&c, &g, |p| dot(&p.forward(&x, &h).unwrap().0, &r));
        let e2 = check_input(&x, &dx, |xi| dot(&c.forward(xi, &h).unwrap().0, &r));
        let e3 = check_input(&h, &dh, |hi| dot(&c.forward(&x, hi).unwrap().0, &r));
        worst[1] = worst[1].max(e1).max(e2).max(e3);

        let mut l = LstmCell::init(3, 6, &mut rng);
        randomize(&mut l, &mut rng, 0.8);
        let x = rand_vec(&mut rng, 3, 1.5);
        let st = LstmState {
            h: rand_vec(&mut rng, 6, 0.9),
            c: rand_vec(&mut rng, 6, 1.5),
        };
        let rh = rand_vec(&mut rng, 6, 1.0);
        let rc = rand_vec(&mut rng, 6, 1.0);
        let lstm_loss = |cell: &LstmCell, x: &[f64], s: &LstmState| {
            let (out, _) = cell.forward(x, s).unwrap();
            dot(&out.h, &rh) + dot(&out.c, &rc)
        };
        let (_, cache) = l.forward(&x, &st).unwrap();
        let mut g = LstmCell::zeros(3, 6);
        let (dx, dh, dc) = l.backward(cache, &rh, &rc, &mut g).unwrap();
        let e1 = check_params(&l, &g, |p| lstm_loss(p, &x, &st));
        let e2 = check_input(&x, &dx, |xi| lstm_loss(&l, xi, &st));
        let e3 = check_input(&st.h, &dh, |hi| {
            lstm_loss(&l, &x, &LstmState { h: hi.to_vec(), c: st.c.clone() })
        });
        let e4 = check_input(&st.c, &dc, |ci| {
            lstm_loss(&l, &x, &LstmState { h: st.h.clone(), c: ci.to_vec() })
        });
        worst[2] = worst[2].max(e1).max(e2).max(e3).max(e4);

        // whole networks under a random linear read-out
        let window = random_window(&mut rng, arch.window);
        let r6: [f64; 6] = std::array::from_fn(|_| rng.random_range(-1.0..1.0));
        for (slot, kind) in [(3, NetKind::BiLstm), (4, NetKind::Mlp)] {
            let net = Network::init(kind, &arch, seed).unwrap();
            let (_, cache) = net.forward(&window).unwrap();
            let grads = net.backward(cache, &r6).unwrap();
            let e = check_params(&net, &grads, |p| dot(&p.forward(&window).unwrap().0, &r6));
            worst[slot] = worst[slot].max(e);
        }

        // predictor plus loss; the single-target loss is exercised on the
        // cheaper recurrent models
        let targets = random_window(&mut rng, 2);
        for kind in [ModelKind::Mlp, ModelKind::Rnn, ModelKind::Lstm, ModelKind::BiLstm] {
            let model = PredictorModel::new(kind, &arch, seed).unwrap();
            let counts: &[usize] = match kind {
                ModelKind::Rnn | ModelKind::Lstm => &[2, 1],
                _ => &[2],
            };
            for &n in counts {
                let (_, grads) = model.loss_and_grad(&window, &targets[..n]).unwrap();
                let net = model.network().unwrap();
                let mut probe = model.clone();
                let e = grad_check(
                    |flat| {
                        probe.network_mut().unwrap().copy_from_flat(flat).unwrap();
                        let out = probe.predict_normalized(&window).unwrap();
                        let pred: Vec<[f64; 3]> = (0..n).map(|h| [out[3 * h], out[3 * h + 1], out[3 * h + 2]]).collect();
                        mse_loss(&pred, &targets[..n]).unwrap().0
                    },
                    &net.to_flat(),
                    &grads.to_flat(),
                    FD_STEP,
                )
                .unwrap();
                worst[5] = worst[5].max(e);
            }
        }
    }
    let labels = ["dense", "rnn-cell", "lstm-cell", "bilstm", "mlp", "predictor+loss"];
    let summary = labels
        .iter()
        .zip(worst)
        .map(|(l, w)| format!("{l} {w:.1e}"))
        .collect::<Vec<_>>()
        .join(", ");
    ensure(worst.iter().all(|&w| w < GRAD_TOL), format!("max rel err over tolerance: {summary}"))?;
    Ok(format!("max rel err {summary}"))
}

fn criterion_metrics() -> Outcome {
    let close = |a: f64, b: f64| (a - b).abs() < 1e-9;
    let (x, y, z) = axis_errors(&GeoPoint::new(30.5, 120.2, 100.0), &GeoPoint::new(30.4, 120.0, 90.0));
    ensure(close(x, 0.1) && close(y, 0.2) && close(z, 10.0), "axis_errors example")?;
    let p = GeoPoint::new(12.0, -3.5, 40.0);
    ensure(axis_errors(&p, &p) == (0.0, 0.0, 0.0), "axis_errors identity")?;

    ensure(error_3d(1.0, 0.0, 0.0) == 114_100.0, "1 deg lat must be exactly 114100 m")?;
    ensure(error_3d(0.0, 1.0, 0.0) == 89_900.0, "1 deg lon must be exactly 89900 m")?;
    ensure(error_3d(0.0, 0.0, 5.0) == 5.0, "altitude only")?;
    let mixed = (1.141f64.powi(2) + 0.899f64.powi(2) + 1.0).sqrt();
    ensure(close(error_3d(1e-5, 1e-5, 1.0), mixed) && close(mixed, 1.7635424576686551), "mixed example")?;

    let a = StepError { jx: 0.1, jy: 0.0, jz: 0.0, j3d: 4.0 };
    let b = StepError { jx: -0.1, jy: 0.0, jz: 0.0, j3d: 6.0 };
    let m = two_step_average(&a, &b);
    ensure(close(m.j3d, 5.0) && close(m.jx, 0.0), "two-step average")?;
    ensure(two_step_average(&a, &a) == a, "two-step identity")?;

    let origin = GeoPoint::new(30.0, 114.0, 100.0);
    let rec = |t: usize, d: f64| {
        let actual = [origin, origin];
        let predicted = [GeoPoint::new(30.0 + d, 114.0, 100.0); 2];
        PredictionRecord {
            t,
            predicted,
            realized: Some(actual),
            errors: Some(RecordErrors::new(&predicted, &actual)),
        }
    };
    let r = aggregate(&[rec(17, 1.0), rec(18, 3.0)]).map_err(|e| e.to_string())?;
    ensure(close(r.mean_jx, 2.0) && r.n == 2 && r.w == 17, "aggregate mean")?;
    ensure(close(r.mse_alpha, (1.0 + 1.0 + 9.0 + 9.0) / 12.0), "aggregate alpha")?;
    ensure(close(r.mean_j3d_m, 2.0 * 114_100.0), "aggregate j3d")?;
    let z = aggregate(&[rec(20, 0.0)]).map_err(|e| e.to_string())?;
    ensure(z.mean_j3d_m == 0.0 && z.mse_alpha == 0.0, "aggregate zeros")?;
    ensure(aggregate(&[]).is_err(), "aggregate of nothing must fail")?;

    // independent summation of alpha over hand-filled errors
    let hand = [
        [(1e-4, -2e-4, 3.0), (2e-4, 1e-4, -1.0)],
        [(-5e-5, 0.0, 0.5), (0.0, 3e-5, 2.5)],
        [(1e-5, 1e-5, -4.0), (-2e-5, 4e-5, 0.25)],
    ];
    let recs: Vec<PredictionRecord> = hand
        .iter()
        .enumerate()
        .map(|(i, pair)| {
            let actual = [origin, origin];
            let predicted = pair.map(|(dx, dy, dz)| GeoPoint::new(origin.lat + dx, origin.lon + dy, origin.alt + dz));
            PredictionRecord {
                t: 17 + i,
                predicted,
                realized: Some(actual),
                errors: Some(RecordErrors::new(&predicted, &actual)),
            }
        })
        .collect();
    let r = aggregate(&recs).map_err(|e| e.to_string())?;
    let mut total = 0.0;
    for rec in &recs {
        for k in 0..2 {
            let (dx, dy, dz) = axis_errors(&rec.predicted[k], &rec.realized.unwrap()[k]);
            total += dx * dx + dy * dy + dz * dz;
        }
    }
    ensure((r.mse_alpha - total / 18.0).abs() < 1e-12, "alpha by independent summation")?;
    Ok("all examples within 1e-9, per-degree constants exact".into())
}

fn criterion_normalization() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(77);
    let mut worst = (0.0f64, 0.0f64, 0.0f64);
    let mut constant = 0;
    for i in 0..100u64 {
        let kind = ShapeKind::ALL[i as usize % 3];
        let params = ShapeParams {
            origin: GeoPoint::new(rng.random_range(-60.0..60.0), rng.random_range(-170.0..170.0), rng.random_range(10.0..3000.0)),
            speed: rng.random_range(2.0..40.0),
            interval: rng.random_range(1.0..4.0),
            heading_deg: rng.random_range(0.0..360.0),
            radius: rng.random_range(50.0..800.0),
            climb_rate: if kind == ShapeKind::Helix { rng.random_range(0.2..3.0) } else { 0.0 },
            ..ShapeParams::default()
        };
        // half of the arcs are noise-free, so its altitude is exactly constant
        let noise = if kind == ShapeKind::Arc && i % 2 == 0 { 0.0 } else { rng.random_range(0.1..3.0) };
        let n = rng.random_range(20..60);
        let traj = synth_generate("n", kind, &params, n, noise, i).map_err(|e| e.to_string())?;
        let pos = traj.positions();
        let stats = NormStats::compute(&pos).map_err(|e| e.to_string())?;
        let z = stats.normalize_all(&pos);
        let flat_alt = pos.iter().all(|p| p.alt == pos[0].alt);
        for d in 0..3 {
            let col: Vec<f64> = z.iter().map(|v| v[d]).collect();
            let mean = col.iter().sum::<f64>() / n as f64;
            let sd = (col.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n as f64).sqrt();
            worst.0 = worst.0.max(mean.abs());
            if d == 2 && flat_alt {
                ensure(
                    stats.sigma[2] == 1.0 && col.iter().all(|v| v.abs() < 1e-9),
                    "constant altitude must use sigma 1",
                )?;
            } else {
                worst.1 = worst.1.max((sd - 1.0).abs());
            }
        }
        constant += flat_alt as usize;
        for (p, v) in pos.iter().zip(&z) {
            let back = stats.denormalize(v);
            let err = (back.lat - p.lat).abs().max((back.lon - p.lon).abs()).max((back.alt - p.alt).abs());
            worst.2 = worst.2.max(err);
        }
    }
    ensure(constant > 0, "no constant-altitude trajectory was generated")?;
    ensure(worst.0 < 1e-9, format!("|mean| {:.1e}", worst.0))?;
    ensure(worst.1 < 1e-9, format!("|sigma-1| {:.1e}", worst.1))?;
    ensure(worst.2 < 1e-9, format!("round trip {:.1e}", worst.2))?;
    Ok(format!(
        "|mean| {:.1e}, |sigma-1| {:.1e}, round trip {:.1e}, {constant} constant-altitude",
        worst.0, worst.1, worst.2
    ))
}

fn trace_traj(n: usize, seed: u64) -> Trajectory {
    synth_generate("trace", ShapeKind::Helix, &ShapeParams::default(), n, 1.0, seed).unwrap()
}

fn criterion_algorithm_trace() -> Outcome {
    let cfg = EngineConfig::default();
    let arch = Arch::default();
    let train1 = Dataset::new(vec![trace_traj(30, 1)], DatasetRole::Train).unwrap();
    let mut tr = Trainer::new(PredictorModel::new(ModelKind::Lstm, &arch, 3).unwrap());
    engine::pretrain(&mut tr, &train1, &cfg, 5).map_err(|e| e.to_string())?;
    ensure(tr.train_steps() == 600, format!("pretrain on one trajectory took {} steps", tr.train_steps()))?;
    let mut three = Vec::new();
    for (i, n) in [30, 25, 40].into_iter().enumerate() {
        let mut t = trace_traj(n, i as u64 + 1);
        t.uav_id = format!("trace-{i}");
        three.push(t);
    }
    let train3 = Dataset::new(three, DatasetRole::Train).unwrap();
    let mut tr3 = Trainer::new(PredictorModel::new(ModelKind::Lstm, &arch, 3).unwrap());
    engine::pretrain(&mut tr3, &train3, &cfg, 5).map_err(|e| e.to_string())?;
    ensure(
        tr3.train_steps() == 600 * train3.len() as u64,
        format!("pretrain on {} trajectories took {} steps", train3.len(), tr3.train_steps()),
    )?;

    let traj = trace_traj(30, 9);
    let mut session = OnlineSession::new(tr.clone(), cfg.clone(), 11).map_err(|e| e.to_string())?;
    let mut first_prediction = None;
    let mut records = Vec::new();
    for (i, p) in traj.points.iter().enumerate() {
        let t = i + 1;
        let before = session.trainer().train_steps();
        records.extend(session.push(p.pos).map_err(|e| e.to_string())?);
        let delta = session.trainer().train_steps() - before;
        let expected = if t > 16 { 300 } else { 0 };
        ensure(delta == expected, format!("step t={t} ran {delta} train steps"))?;
        if delta > 0 && first_prediction.is_none() {
            first_prediction = Some(t);
        }
    }
    records.extend(session.finish());
    ensure(first_prediction == Some(17), format!("first prediction at {first_prediction:?}"))?;
    ensure(records.first().map(|r| r.t) == Some(17), "first record is not t=17")?;

    let full = engine::run_trajectory(&tr, &traj, &cfg, 11).map_err(|e| e.to_string())?;
    ensure(full == records, "session and run_trajectory disagree")?;
    ensure(full.iter().filter(|r| r.errors.is_some()).count() == 12, "expected 12 realized records")?;
    for cut in [19, 22, 26, 29] {
        let part = engine::run_trajectory(&tr, &traj.truncated(cut), &cfg, 11).map_err(|e| e.to_string())?;
        for r in &part {
            let f = full.iter().find(|x| x.t == r.t).expect("same steps");
            ensure(f.predicted == r.predicted, format!("prediction at t={} changed after truncation to {cut}", r.t))?;
            if r.errors.is_some() {
                ensure(f == r, format!("record t={} changed after truncation to {cut}", r.t))?;
            }
        }
    }
    let mut altered = traj.clone();
    for p in &mut altered.points[23..] {
        p.pos.alt += 100.0;
        p.pos.lat += 0.001;
    }
    let alt = engine::run_trajectory(&tr, &altered, &cfg, 11).map_err(|e| e.to_string())?;
    for (a, b) in full.iter().zip(&alt).filter(|(a, _)| a.t <= 23) {
        ensure(a.predicted == b.predicted, format!("future points changed prediction at t={}", a.t))?;
    }
    Ok("600 pretrain steps per trajectory, first prediction t=17, 300 steps per online step, causal".into())
}

fn criterion_ordering() -> Outcome {
    let (train, test) = synthetic_suite(&SuiteConfig::default()).map_err(|e| e.to_string())?;
    let cfg = BenchConfig {
        repeats: 10,
        arms: vec![Arm::new(ModelKind::Lstm), Arm::frozen(ModelKind::Lstm), Arm::new(ModelKind::Persistence)],
        ..BenchConfig::default()
    };
    let rep = bench::run_benchmark(&train, &test, &cfg).map_err(|e| e.to_string())?;
    let overall = |m: &str| rep.model(m).map(|s| s.mean_j3d_m).unwrap();
    let shape = |m: &str, s: &str| rep.subset_mean(m, |id| id.starts_with(&format!("{s}-"))).unwrap();
    let (lstm, frozen, pers) = (overall("lstm"), overall("lstm-frozen"), overall("persistence"));
    let arc = (shape("lstm", "arc"), shape("persistence", "arc"));
    let helix = (shape("lstm", "helix"), shape("persistence", "helix"));
    let line = (shape("lstm", "line"), shape("persistence", "line"));
    let detail = format!(
        "lstm {lstm:.2} m, lstm-frozen {frozen:.2} m, persistence {pers:.2} m; \
         arc {:.2} vs {:.2}, helix {:.2} vs {:.2}, line {:.2} vs {:.2}",
        arc.0, arc.1, helix.0, helix.1, line.0, line.1
    );
    let mut failed = Vec::new();
    if lstm >= frozen {
        failed.push("lstm >= lstm-frozen");
    }
    if arc.0 >= arc.1 {
        failed.push("arc: lstm >= persistence");
    }
    if helix.0 >= helix.1 {
        failed.push("helix: lstm >= persistence");
    }
    if failed.is_empty() {
        Ok(detail)
    } else {
        Err(format!("{}; {detail}", failed.join(", ")))
    }
}

fn criterion_convergence() -> Outcome {
    let arch = Arch::default();
    let mut counts = Vec::new();
    for kind in [ModelKind::Lstm, ModelKind::Mlp] {
        let mut ok = 0;
        for seed in 0..100u64 {
            let shape = ShapeKind::ALL[seed as usize % 3];
            let traj = synth_generate("c", shape, &ShapeParams::default(), 18, 1.0, seed).unwrap();
            let pos = traj.positions();
            let z = NormStats::compute(&pos).unwrap().normalize_all(&pos);
            let (window, targets) = (&z[..16], &z[16..18]);
            let mut model = PredictorModel::new(kind, &arch, seed).unwrap();
            let mut opt = model.new_optimizer().unwrap();
            let initial = model.loss_and_grad(window, targets).unwrap().0;
            for _ in 0..300 {
                model.train_step(window, targets, &mut opt, 0.01, None).unwrap();
            }
            let last = model.loss_and_grad(window, targets).unwrap().0;
            if last * 10.0 <= initial {
                ok += 1;
            }
        }
        counts.push((kind, ok));
    }
    let detail = counts
        .iter()
        .map(|(k, n)| format!("{k} {n}/100"))
        .collect::<Vec<_>>()
        .join(", ");
    ensure(counts.iter().all(|&(_, n)| n >= 95), format!("too few 10x reductions: {detail}"))?;
    Ok(format!("10x loss reduction in {detail}"))
}

fn criterion_determinism() -> Outcome {
    let suite = SuiteConfig {
        seeds_per_shape: 2,
        train_per_shape: 1,
        ..SuiteConfig::default()
    };
    let (train, test) = synthetic_suite(&suite).map_err(|e| e.to_string())?;
    let cfg = BenchConfig {
        repeats: 2,
        arms: vec![Arm::new(ModelKind::Lstm), Arm::new(ModelKind::Rnn), Arm::new(ModelKind::Persistence)],
        engine: EngineConfig {
            train: TrainConfig {
                iterations: 10,
                ..TrainConfig::default()
            },
            ..EngineConfig::default()
        },
        ..BenchConfig::default()
    };
    let render = |threads: usize| {
        let pool = rayon::ThreadPoolBuilder::new().num_threads(threads).build().unwrap();
        let rep = pool.install(|| bench::run_benchmark(&train, &test, &cfg)).unwrap();
        [
            rep.to_json(),
            report::models_csv(&rep),
            report::trajectories_csv(&rep),
            report::model_bar_svg(&rep),
            report::trajectory_bar_svg(&rep),
        ]
    };
    let a = render(1);
    ensure(a == render(1), "repeated bench output differs")?;
    ensure(a == render(4), "bench output depends on worker count")?;

    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let traj = trace_traj(22, 4);
    let ecfg = EngineConfig {
        train: TrainConfig {
            iterations: 20,
            ..TrainConfig::default()
        },
        ..EngineConfig::default()
    };
    let pos = traj.positions();
    let stats = NormStats::compute(&pos).unwrap();
    for kind in ModelKind::ALL {
        let mut tr = Trainer::new(PredictorModel::new(kind, &Arch::default(), 8).unwrap());
        let train1 = Dataset::new(vec![trace_traj(20, 1)], DatasetRole::Train).unwrap();
        engine::pretrain(&mut tr, &train1, &ecfg, 2).map_err(|e| e.to_string())?;
        let (model, opt) = tr.clone().into_parts();
        let path = dir.path().join(format!("{kind}.json"));
        model.to_checkpoint(opt.as_ref()).save(&path).map_err(|e| e.to_string())?;
        let (loaded, lopt) = PredictorModel::from_checkpoint(Checkpoint::load(&path).map_err(|e| e.to_string())?)
            .map_err(|e| e.to_string())?;
        let before = model.predict_window(&pos[pos.len() - 16..], &stats).unwrap();
        let after = loaded.predict_window(&pos[pos.len() - 16..], &stats).unwrap();
        ensure(
            before.0.to_array().map(f64::to_bits) == after.0.to_array().map(f64::to_bits)
                && before.1.to_array().map(f64::to_bits) == after.1.to_array().map(f64::to_bits),
            format!("{kind}: prediction changed after checkpoint round trip"),
        )?;
        let resumed = Trainer::with_optimizer(loaded, lopt);
        let x = engine::run_trajectory(&tr, &traj, &ecfg, 5).map_err(|e| e.to_string())?;
        let y = engine::run_trajectory(&resumed, &traj, &ecfg, 5).map_err(|e| e.to_string())?;
        ensure(x == y, format!("{kind}: online run changed after checkpoint round trip"))?;
    }
    Ok("bench bytes identical across runs and worker counts; checkpoints bit-exact for all kinds".into())
}

fn read_records(stream: TcpStream) -> Vec<(Instant, String)> {
    BufReader::new(stream)
        .lines()
        .map(|l| (Instant::now(), l.unwrap()))
        .collect()
}

fn criterion_feed() -> Outcome {
    let train = Dataset::new(vec![trace_traj(24, 1)], DatasetRole::Train).unwrap();
    let cfg = EngineConfig::default();
    let mut tr = Trainer::new(PredictorModel::new(ModelKind::Lstm, &Arch::default(), 6).unwrap());
    engine::pretrain(&mut tr, &train, &cfg, 1).map_err(|e| e.to_string())?;
    let traj = trace_traj(30, 12);
    let offline = engine::run_trajectory(&tr, &traj, &cfg, 21).map_err(|e| e.to_string())?;

    let listener = TcpListener::bind("127.0.0.1:0").map_err(|e| e.to_string())?;
    let addr = listener.local_addr().unwrap();
    let records = feed::feed_records(&traj);
    let sender = thread::spawn(move || {
        let (stream, _) = listener.accept().unwrap();
        feed::replay(&records, BufWriter::new(stream), Duration::from_millis(2500), 1000.0).unwrap()
    });
    let stream = TcpStream::connect(addr).map_err(|e| e.to_string())?;
    let mut out = Vec::new();
    let session = OnlineSession::new(tr.clone(), cfg.clone(), 21).map_err(|e| e.to_string())?;
    let summary = feed::predict_stream(BufReader::new(stream), &mut out, session).map_err(|e| e.to_string())?;
    sender.join().unwrap();
    let online: Vec<PredictionRecord> = String::from_utf8(out)
        .unwrap()
        .lines()
        .map(|l| serde_json::from_str(l).unwrap())
        .collect();
    ensure(summary.realized == 12, format!("{} realized records", summary.realized))?;
    ensure(online == offline, "feed records differ from offline run")?;
    let bits = |r: &[PredictionRecord]| serde_json::to_string(r).unwrap();
    ensure(bits(&online) == bits(&offline), "feed records differ in serialized form")?;

    // pacing at real time
    let listener = TcpListener::bind("127.0.0.1:0").map_err(|e| e.to_string())?;
    let addr = listener.local_addr().unwrap();
    let few: Vec<_> = feed::feed_records(&traj).into_iter().take(4).collect();
    let sender = thread::spawn(move || {
        let (stream, _) = listener.accept().unwrap();
        feed::replay(&few, BufWriter::new(stream), Duration::from_millis(2500), 1.0).unwrap()
    });
    let lines = read_records(TcpStream::connect(addr).map_err(|e| e.to_string())?);
    sender.join().unwrap();
    ensure(lines.len() == 4, "pacing run lost lines")?;
    let gaps: Vec<f64> = lines.windows(2).map(|w| (w[1].0 - w[0].0).as_secs_f64()).collect();
    for g in &gaps {
        ensure((g - 2.5).abs() <= 0.25, format!("inter-line gap {g:.3} s outside 2.5 s +/- 10%"))?;
    }
    Ok(format!(
        "12 realized records bit-identical to offline; gaps {}",
        gaps.iter().map(|g| format!("{g:.3}s")).collect::<Vec<_>>().join(" ")
    ))
}

fn main() -> ExitCode {
    let criteria: [(&str, fn() -> Outcome); 8] = [
        ("gradient correctness", criterion_gradients),
        ("metric oracles", criterion_metrics),
        ("normalization", criterion_normalization),
        ("online loop trace", criterion_algorithm_trace),
        ("ordering on synthetic suite", criterion_ordering),
        ("convergence oracle", criterion_convergence),
        ("determinism and persistence", criterion_determinism),
        ("feed equivalence", criterion_feed),
    ];
    let filter: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    panic::set_hook(Box::new(|_| {}));
    let mut failures = 0;
    for (i, (name, run)) in criteria.iter().enumerate() {
        let id = (i + 1).to_string();
        if !filter.is_empty() && !filter.iter().any(|f| *f == id || name.contains(f.as_str())) {
            continue;
        }
        let start = Instant::now();
        let outcome = panic::catch_unwind(AssertUnwindSafe(run)).unwrap_or_else(|p| {
            let msg = p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_else(|| "panic".into());
            Err(format!("panicked: {msg}"))
        });
        let secs = start.elapsed().as_secs_f64();
        match outcome {
            Ok(detail) => println!("criterion {id} {name}: PASS ({secs:.1}s) {detail}"),
            Err(detail) => {
                failures += 1;
                println!("criterion {id} {name}: FAIL ({secs:.1}s) {detail}");
            }
        }
    }
    if failures == 0 {
        ExitCode::SUCCESS
    } else {
        println!("{failures} criteria failed");
        ExitCode::FAILURE
    }
}
