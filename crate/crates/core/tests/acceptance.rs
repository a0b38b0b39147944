mod common;

use std::collections::BTreeSet;
use std::io::Write;
use std::path::Path;

use aec_core::asr_proxy::{make_keyword_corpus, proxy_error_rate, train_proxy, ProxyArch, ProxyRecognizer};
use aec_core::autodiff::{AdamConfig, ParamStore, Real, Tape};
use aec_core::baselines::{
    all_ones_mse, apply_mask_erase, oracle_mask, subband_nlms_erase, train_irm_predictor, IrmPredictor, NlmsConfig,
};
use aec_core::data::specaug::{augment_inputs, draw_masks};
use aec_core::data::{
    build_dataset, spec_augment, synthesize, DatasetPlan, EchoStyle, ExampleRecord, SourcePool, SpecAugmentConfig,
    Split, SplitCounts, Stem, UtteranceExample,
};
use aec_core::eval::{erle, run_experiment, run_experiment_with_threads, sdr, Artifacts, ExperimentMatrix, ProxySpec};
use aec_core::neural::loss::{latent_loss_tape, spectral_loss_tape};
use aec_core::neural::model::{forward_tape, is_trainable, stack, Mode};
use aec_core::neural::{
    infer, init_params, lambda_at, latent_loss, sampling_mask, spectral_loss, train, FeatureStats, LossSchedule,
    ModelConfig, NeuralAec, TrainConfig, TrainState,
};
use aec_core::room::convolve::direct_convolve;
use aec_core::room::{compute_rir, sample_room_config, RoomConfig, RoomConstraints, SourceKind};
use aec_core::seed::rng_for;
use aec_core::signal::{
    griffin_lim, istft, stft, xcorr_align, LogMelFrames, MelConfig, Role, StftConfig,
};
use aec_core::RunConfig;
use common::{neural_meta, noise, small_set, split_of, tiny_model, tiny_proxy, wave, RATE};
use ndarray::Array2;
use rand::Rng;

/// Outcome of one criterion: a verdict plus the measurements behind it.
struct Verdict {
    failures: Vec<String>,
    notes: Vec<String>,
}

impl Verdict {
    fn new() -> Self {
        Verdict { failures: Vec::new(), notes: Vec::new() }
    }

    fn check(&mut self, ok: bool, what: impl Into<String>) {
        let what = what.into();
        if ok {
            self.notes.push(what);
        } else {
            self.failures.push(what);
        }
    }

    fn passed(&self) -> bool {
        self.failures.is_empty()
    }
}

/// Written past the test harness's output capture so every line shows up
/// in the run log.
fn report(n: usize, name: &str, v: &Verdict) {
    let status = if v.passed() { "PASS" } else { "FAIL" };
    let detail = if v.passed() { v.notes.join("; ") } else { format!("failed: {}", v.failures.join("; ")) };
    let mut out = std::io::stdout().lock();
    writeln!(out, "criterion {n} {name}: {status} ({detail})").unwrap();
    out.flush().unwrap();
}

fn shifted(src: &[f32], lag: i64, len: usize) -> Vec<f32> {
    (0..len)
        .map(|n| {
            let j = n as i64 - lag;
            if j >= 0 && (j as usize) < src.len() {
                src[j as usize]
            } else {
                0.0
            }
        })
        .collect()
}

fn dsp_core() -> Verdict {
    let mut v = Verdict::new();
    let cfg = StftConfig::default();
    let mut worst_snr = f64::INFINITY;
    for seed in 0..20u64 {
        let x = noise(8000 + 731 * seed as usize, seed);
        let y = istft(&stft(&wave(x.clone(), Role::Probe), &cfg).unwrap()).unwrap();
        let (mut s, mut e) = (0.0f64, 0.0f64);
        for i in cfg.window_len..x.len() - cfg.window_len {
            s += (x[i] as f64).powi(2);
            e += (x[i] as f64 - y.samples()[i] as f64).powi(2);
        }
        worst_snr = worst_snr.min(10.0 * (s / e.max(1e-300)).log10());
    }
    v.check(worst_snr >= 50.0, format!("round-trip SNR min {worst_snr:.1} dB"));

    let mut worst_sc: f64 = 0.0;
    let mut monotone = true;
    for seed in 0..10u64 {
        let x = aec_core::data::source::speech_like(2.0, RATE, &mut rng_for(seed, "gl", 0));
        for w in [x, wave(noise(32_000, 500 + seed), Role::Probe)] {
            let out = griffin_lim(&stft(&w, &cfg).unwrap().magnitude(), &cfg, RATE, 60).unwrap();
            monotone &= out.convergence.windows(2).all(|p| p[1] <= p[0] + 1e-6);
            worst_sc = worst_sc.max(*out.convergence.last().unwrap());
        }
    }
    v.check(monotone, "Griffin-Lim error non-increasing");
    v.check(worst_sc <= 0.1, format!("Griffin-Lim error after 60 iterations max {worst_sc:.4}"));

    let hits = (0..100u64)
        .filter(|&i| {
            let lag = (i as i64 * 37 % 801) - 400;
            let src = noise(5000, 100 + i);
            xcorr_align(&wave(shifted(&src, lag, 5000), Role::Probe), &wave(src, Role::Reference), 800).unwrap() == lag
        })
        .count();
    v.check(hits == 100, format!("xcorr lags {hits}/100"));
    v
}

fn room_simulator() -> Verdict {
    let mut v = Verdict::new();
    let c = RoomConstraints::default();
    let (mut sum, mut in_bounds) = (0.0, 0);
    for seed in 0..1000 {
        let r = sample_room_config(seed, &c).unwrap();
        let (d, e) = (r.target_distance(), r.target_elevation_deg());
        if (0.25..=8.0).contains(&d) && (45.0..=135.0).contains(&e) && r.validate().is_ok() {
            in_bounds += 1;
        }
        sum += d;
    }
    let mean = sum / 1000.0;
    v.check(in_bounds == 1000, format!("{in_bounds}/1000 rooms within distance and elevation bounds"));
    v.check((2.3..=2.7).contains(&mean), format!("mean distance {mean:.3} m"));

    let c2 = RoomConstraints { max_image_order: 2, ..c };
    let worst = (0..200u64)
        .map(|seed| {
            let room = sample_room_config(seed, &c2).unwrap();
            let rir = compute_rir(&room, SourceKind::TargetPath, RATE).unwrap();
            let exact = room.target_distance() / room.speed_of_sound * RATE as f64;
            (rir.nonzero_taps()[0].0 as f64 - exact).abs()
        })
        .fold(0.0, f64::max);
    v.check(worst <= 1.0, format!("direct-path delay error max {worst:.2} samples"));

    let room = RoomConfig {
        dimensions: [4.0, 6.0, 2.8],
        mic_position: [1.0, 2.0, 1.0],
        loudspeaker_position: [1.0, 2.0, 0.95],
        target_position: [2.5, 4.0, 1.7],
        absorption: 0.5,
        max_image_order: 1,
        speed_of_sound: 343.0,
    };
    let [x, y, z] = room.target_position;
    let [lx, ly, lz] = room.dimensions;
    let images = [
        ([x, y, z], 1.0),
        ([-x, y, z], 0.5),
        ([2.0 * lx - x, y, z], 0.5),
        ([x, -y, z], 0.5),
        ([x, 2.0 * ly - y, z], 0.5),
        ([x, y, -z], 0.5),
        ([x, y, 2.0 * lz - z], 0.5),
    ];
    let mut expected = vec![0.0f64; 512];
    for (p, g) in images {
        let d = aec_core::room::config::distance(&p, &room.mic_position);
        expected[(d / 343.0 * RATE as f64).round() as usize] += g / d;
    }
    let want: Vec<(usize, f64)> = expected.iter().enumerate().filter(|(_, v)| **v != 0.0).map(|(i, v)| (i, *v)).collect();
    let got = compute_rir(&room, SourceKind::TargetPath, RATE).unwrap().nonzero_taps();
    let taps_match = got.len() == want.len()
        && got.iter().zip(&want).all(|((gi, gv), (wi, wv))| gi == wi && (*gv as f64 - wv).abs() < 1e-6);
    v.check(taps_match, format!("{} first-order fixture taps", want.len()));
    v
}

fn db(a: f64, b: f64) -> f64 {
    10.0 * (a / b).log10()
}

fn mixing() -> Verdict {
    let mut v = Verdict::new();
    let set = small_set(3, SplitCounts { train: 24, dev: 3, test: 18 }, 24, true);
    let mut worst: f64 = 0.0;
    let mut ranges_ok = true;
    for (rec, ex) in &set {
        let s = ex.stem(Stem::ReverberantTarget).unwrap().power();
        let n = ex.stem(Stem::Noise).unwrap().power();
        let e = ex.stem(Stem::EchoedReference).unwrap().power();
        worst = worst.max((db(s, n) - rec.tnr_db).abs()).max((db(s, e) - rec.terr_db).abs());
        ranges_ok &= rec.tnr_db > 0.0 && rec.tnr_db < 20.0;
        ranges_ok &= match rec.split {
            Split::Train => rec.terr_db > -20.0 && rec.terr_db < 0.0,
            _ => [0.0, -5.0, -10.0].contains(&rec.terr_db),
        };
    }
    v.check(worst <= 0.1, format!("TNR/TERR error max {worst:.4} dB"));
    v.check(ranges_ok, "training ranges (0, 20) and (-20, 0) dB, eval levels in {0, -5, -10} dB");
    let levels: BTreeSet<i64> = set.iter().filter(|(r, _)| r.split.is_eval()).map(|(r, _)| r.terr_db as i64).collect();
    v.check(levels == [-10, -5, 0].into_iter().collect(), format!("eval TERR levels {levels:?}"));
    v
}

fn ramp(frames: usize, bins: usize) -> LogMelFrames {
    LogMelFrames {
        frames: Array2::from_shape_fn((frames, bins), |(i, j)| 1.0 + (i * bins + j) as f32 * 1e-3),
        mel_config: MelConfig { num_mels: bins, ..MelConfig::default() },
    }
}

fn specaugment() -> Verdict {
    let mut v = Verdict::new();
    let cfg = SpecAugmentConfig::default();
    let (mut max_bins, mut max_frames, mut max_fm, mut max_tm) = (0, 0, 0, 0);
    for seed in 0..10_000u64 {
        let (freq, time) = draw_masks(&cfg, 100, 80, seed);
        max_fm = max_fm.max(freq.len());
        max_tm = max_tm.max(time.len());
        max_bins = max_bins.max(freq.iter().map(|s| s.width).sum::<usize>());
        max_frames = max_frames.max(time.iter().map(|s| s.width).sum::<usize>());
    }
    v.check(max_bins <= 27 && max_fm <= 2, format!("frequency: {max_bins} bins over {max_fm} masks at most"));
    v.check(max_frames <= 5 && max_tm <= 10, format!("time: {max_frames}/100 frames over {max_tm} masks at most"));

    let feats = ramp(120, 80);
    let identity = (0..200).all(|s| spec_augment(&feats, &SpecAugmentConfig::disabled(), s) == feats);
    v.check(identity, "zero budget is identity");

    let p = ramp(120, 24);
    let r = ramp(120, 24);
    let untouched = (0..200).all(|s| augment_inputs(&p, &r, &cfg, s).0.frames == p.frames);
    let reference_masked = (0..200).any(|s| augment_inputs(&p, &r, &cfg, s).1.frames != r.frames);
    v.check(untouched && reference_masked, "reference-only channel leaves probe features unchanged");
    v
}

/// Examples at TERR −10 dB and the training split for the baseline checks.
fn baseline_data(cfg: &RunConfig) -> (Vec<UtteranceExample>, Vec<UtteranceExample>, Vec<UtteranceExample>) {
    let pool = SourcePool::generate(&cfg.sources, cfg.seed).unwrap();
    let plan = DatasetPlan {
        counts: SplitCounts { train: 64, dev: 0, test: 150 },
        ..cfg.dataset.clone()
    };
    let set = synthesize(&pool, &plan, &cfg.room, &cfg.synth_settings(), derive(cfg, "baselines")).unwrap();
    let at_minus_ten = set.iter().filter(|(r, _)| r.split == Split::Test && r.terr_db == -10.0).map(|(_, e)| e.clone()).collect();
    (split_of(&set, Split::Train), split_of(&set, Split::Test), at_minus_ten)
}

fn derive(cfg: &RunConfig, label: &str) -> u64 {
    aec_core::seed::derive_seed(cfg.seed, label, 0)
}

fn baselines(cfg: &RunConfig) -> (Verdict, IrmPredictor) {
    let mut v = Verdict::new();
    let mut worst = f64::INFINITY;
    for seed in 0..20 {
        let mut rng = rng_for(seed, "echo-path", 0);
        let x: Vec<f32> = (0..48_000).map(|_| rng.random_range(-0.5f32..0.5)).collect();
        let h: Vec<f32> = (0..20).map(|_| rng.random_range(-0.5f32..0.5)).collect();
        let y = direct_convolve(&x, &h)[..48_000].to_vec();
        let p = wave(y, Role::Probe);
        let e = subband_nlms_erase(&p, &wave(x, Role::Reference), &NlmsConfig::default()).unwrap();
        let after: Vec<bool> = (0..p.len()).map(|i| i >= 32_000).collect();
        worst = worst.min(erle(&p, &e, &after).unwrap());
    }
    v.check(worst >= 20.0, format!("NLMS ERLE after 2 s min {worst:.1} dB over 20 seeds"));

    let (train_set, held_out, minus_ten) = baseline_data(cfg);
    let gains: Vec<f64> = minus_ten
        .iter()
        .map(|e| {
            let residual = e.stem(Stem::Residual).unwrap();
            let mask = oracle_mask(residual, e.stem(Stem::EchoedReference).unwrap(), &cfg.stft, &cfg.irm.irm).unwrap();
            let probe = e.stem(Stem::Probe).unwrap();
            let out = apply_mask_erase(probe, &mask, &cfg.stft).unwrap();
            sdr(&out, residual).unwrap() - sdr(probe, residual).unwrap()
        })
        .collect();
    let gain = gains.iter().sum::<f64>() / gains.len() as f64;
    v.check(
        gains.len() == 50 && gain >= 10.0,
        format!("oracle IRM SDR gain at -10 dB {gain:.2} dB over {} examples (beta {})", gains.len(), cfg.irm.irm.exponent),
    );

    let pred = train_irm_predictor(&train_set, &cfg.irm, &cfg.stft, cfg.mix.max_lag, cfg.irm_seed(), "").unwrap();
    let learned = pred.mse(&held_out).unwrap();
    let ones = all_ones_mse(&held_out, &cfg.stft, &cfg.irm.irm).unwrap();
    v.check(learned < ones, format!("IRM predictor held-out MSE {learned:.4} vs all-ones {ones:.4}"));
    (v, pred)
}

fn jitter<F: Real>(params: &mut ParamStore<F>, seed: u64) {
    let mut rng = rng_for(seed, "jitter", 0);
    for (name, v) in params.iter_mut() {
        if is_trainable(name) {
            v.mapv_inplace(|x| x + F::from_f64c(rng.random_range(-0.2..0.2)));
        }
    }
}

/// Largest relative error between tape gradients and central differences,
/// and the number of tensors covered.
fn gradient_check() -> (f64, usize, usize) {
    let m = 4;
    let cfg = tiny_model(m);
    let (t, batch) = (5, 2);
    let proxy = tiny_proxy(ProxyArch::A, m, 3);
    let stats = FeatureStats {
        input_mean: (0..2 * m).map(|i| -3.0 + 0.1 * i as f32).collect(),
        input_std: (0..2 * m).map(|i| 1.5 + 0.05 * i as f32).collect(),
        output_mean: (0..m).map(|i| -4.0 + 0.2 * i as f32).collect(),
        output_std: (0..m).map(|i| 2.0 - 0.1 * i as f32).collect(),
        floor: MelConfig::default().floor_value(),
    };
    let mut base: ParamStore<f64> = init_params(&cfg, &stats, 11).cast::<f64>();
    jitter(&mut base, 12);
    let mut rng = rng_for(1, "grad-check", 0);
    let inputs = Array2::from_shape_fn((t * batch, 2 * m), |_| rng.random_range(-7.0..-1.0));
    let targets = Array2::from_shape_fn((t * batch, m), |_| rng.random_range(-7.0..-1.0));
    let masks = vec![vec![false, true, false, true, true], vec![true, false, false, true, false]];

    let run = |params: &ParamStore<f64>, want_grads: bool| -> (f64, Option<ParamStore<f64>>) {
        let mut tape = Tape::<f64>::new();
        let p = params.bind(&mut tape, is_trainable);
        let x = tape.constant(inputs.clone());
        let fwd = forward_tape(&mut tape, &cfg, &p, x, Some(&targets), &masks, batch, Mode::Train { dropout_seed: 9 }, None);
        let y = tape.constant(targets.clone());
        let s = spectral_loss_tape(&mut tape, fwd.y_pre, fwd.y_post, y);
        let l = latent_loss_tape(&mut tape, &proxy, fwd.y_post, y, batch);
        let l = tape.scale(l, 0.7);
        let loss = tape.add(s, l);
        let v = tape.scalar(loss);
        (v, want_grads.then(|| params.collect_grads(&p, &tape.backward(loss))))
    };
    let grads = run(&base, true).1.unwrap();
    let eps = 1e-6;
    let (mut worst, mut tensors, mut total) = (0.0f64, 0, 0);
    for (name, value) in base.iter() {
        if !is_trainable(name) {
            continue;
        }
        total += 1;
        let g = grads.expect(name);
        let n = value.len();
        let picks: Vec<usize> = if n <= 6 { (0..n).collect() } else { (0..6).map(|k| k * (n - 1) / 5).collect() };
        let mut ok = true;
        for flat in picks {
            let idx = (flat / value.ncols(), flat % value.ncols());
            let mut plus = base.clone();
            plus.get_mut(name).unwrap()[idx] += eps;
            let mut minus = base.clone();
            minus.get_mut(name).unwrap()[idx] -= eps;
            let numeric = (run(&plus, false).0 - run(&minus, false).0) / (2.0 * eps);
            let rel = (g[idx] - numeric).abs() / g[idx].abs().max(numeric.abs()).max(1e-7);
            worst = worst.max(rel);
            ok &= rel <= 1e-4;
        }
        tensors += ok as usize;
    }
    (worst, tensors, total)
}

fn neural_model() -> Verdict {
    let mut v = Verdict::new();
    let (worst, ok, total) = gradient_check();
    v.check(ok == total && total > 0, format!("gradient check {ok}/{total} tensors, max rel err {worst:.2e}"));

    let s = LossSchedule::default();
    let anchors = [lambda_at(0, &s), lambda_at(s.ramp_steps / 2, &s), lambda_at(s.ramp_steps, &s)];
    v.check(anchors == [0.0, 0.005, 0.01], format!("lambda anchors {anchors:?}"));

    let halves = (0..500u64).all(|seed| {
        let t = (seed as usize * 13) % 301;
        sampling_mask(seed, t).iter().filter(|&&b| b).count() == t / 2
    });
    v.check(halves, "sampling masks have floor(T/2) true entries");

    let m = 8;
    let cfg = tiny_model(m);
    let ex = split_of(&small_set(32, SplitCounts { train: 6, dev: 0, test: 0 }, m, false), Split::Train);
    let proxy = tiny_proxy(ProxyArch::B, m, 3);
    let before = proxy.clone();
    let sched = LossSchedule { lambda_final: 0.5, ramp_steps: 4 };
    let tc = TrainConfig { batch_size: 4, max_steps: 8, seed: 5, ..TrainConfig::default() };
    let (a, la) = train(&ex, &cfg, &tc, &sched, Some(&proxy), None, |_, _| {}).unwrap();
    v.check(proxy == before, "frozen proxy unchanged by training");
    let (b, lb) = train(&ex, &cfg, &tc, &sched, Some(&proxy), None, |_, _| {}).unwrap();
    let bits = |l: &[aec_core::neural::LogRecord]| l.iter().map(|r| (r.spectral.to_bits(), r.latent.to_bits())).collect::<Vec<_>>();
    v.check(a == b && bits(&la) == bits(&lb), "seeded training bitwise reproducible");

    let m = 24;
    let cfg = ModelConfig { mel_dim: m, ..ModelConfig::default() };
    let ex = split_of(&small_set(35, SplitCounts { train: 8, dev: 0, test: 0 }, m, false), Split::Train);
    let tc = TrainConfig {
        batch_size: 8,
        max_steps: 300,
        seed: 1,
        specaugment: None,
        adam: AdamConfig { lr: 3e-3, ..AdamConfig::default() },
        ..TrainConfig::default()
    };
    let loss = |params: &ParamStore<f32>| -> f64 {
        ex.iter()
            .map(|e| {
                let (pre, post) = infer(&stack(&e.probe_feats.frames, &e.reference_feats.frames).unwrap(), params, &cfg).unwrap();
                spectral_loss(&pre, &post, &e.target_feats.frames).unwrap()
            })
            .sum::<f64>()
            / ex.len() as f64
    };
    let start = TrainState::fresh(&ex, &cfg, &tc);
    let initial = loss(&start.params);
    let (end, _) = train(&ex, &cfg, &tc, &LossSchedule::default(), None, Some(start), |_, _| {}).unwrap();
    let reduction = 1.0 - loss(&end.params) / initial;
    v.check(reduction >= 0.9, format!("8-example overfit reduces spectral loss by {:.1} %", 100.0 * reduction));
    v
}

struct Desk {
    cfg: RunConfig,
    proxies: [ProxyRecognizer; 2],
    train_set: Vec<(ExampleRecord, UtteranceExample)>,
    full: TrainState,
    no_latent: TrainState,
}

fn desk_models() -> Desk {
    let cfg = RunConfig::desk();
    let corpus = make_keyword_corpus(cfg.proxy_corpus_seed(), cfg.proxy.classes, cfg.proxy.per_class, cfg.sources.sample_rate);
    let feats = corpus.features(&cfg.stft, &cfg.mel).unwrap();
    let proxy = |arch: ProxyArch| {
        train_proxy(&feats, &corpus.labels, cfg.proxy.classes, arch, cfg.proxy.train_config(arch), &cfg.stft, &cfg.mel, cfg.proxy_seed(arch)).unwrap()
    };
    let proxies = [proxy(ProxyArch::A), proxy(ProxyArch::B)];
    let pool = SourcePool::generate(&cfg.sources, cfg.seed).unwrap();
    let settings = aec_core::data::SynthSettings { keep_waveforms: false, ..cfg.synth_settings() };
    let set = synthesize(&pool, &cfg.dataset, &cfg.room, &settings, cfg.seed).unwrap();
    let train_ex = split_of(&set, Split::Train);
    let tc = cfg.train_config();
    let fit = |lambda: f64, proxy: Option<&ProxyRecognizer>| {
        let sched = LossSchedule { lambda_final: lambda, ..cfg.loss_schedule };
        train(&train_ex, &cfg.model, &tc, &sched, proxy, None, |_, _| {}).unwrap().0
    };
    let full = fit(cfg.loss_schedule.lambda_final, Some(&proxies[0]));
    let no_latent = fit(0.0, None);
    Desk { cfg, proxies, train_set: set, full, no_latent }
}

fn end_to_end(d: &Desk) -> Verdict {
    let mut v = Verdict::new();
    let test: Vec<&UtteranceExample> = d.train_set.iter().filter(|(r, _)| r.split == Split::Test && r.terr_db == 0.0).map(|(_, e)| e).collect();
    let labels: Vec<usize> = test.iter().map(|e| e.label.unwrap()).collect();
    let probe: Vec<Array2<f32>> = test.iter().map(|e| e.probe_feats.frames.clone()).collect();
    let target: Vec<Array2<f32>> = test.iter().map(|e| e.target_feats.frames.clone()).collect();
    let erase = |s: &TrainState| -> Vec<Array2<f32>> {
        test.iter()
            .map(|e| infer(&stack(&e.probe_feats.frames, &e.reference_feats.frames).unwrap(), &s.params, &d.cfg.model).unwrap().1)
            .collect()
    };
    let (full, plain) = (erase(&d.full), erase(&d.no_latent));
    for (name, p) in ["A", "B"].iter().zip(&d.proxies) {
        let err = |x: &[Array2<f32>]| proxy_error_rate(x, &labels, p);
        let latent = |x: &[Array2<f32>]| x.iter().zip(&target).map(|(a, t)| latent_loss(a, t, p).unwrap()).sum::<f64>() / x.len() as f64;
        let (ep, ef, e0) = (err(&probe), err(&full), err(&plain));
        v.check(ef < ep && e0 < ep, format!("proxy {name} error probe {ep:.3}, lambda>0 {ef:.3}, lambda=0 {e0:.3}"));
        v.check(ef <= e0, format!("proxy {name} error lambda>0 <= lambda=0"));
        let (lf, l0) = (latent(&full), latent(&plain));
        v.check(lf < l0, format!("proxy {name} latent MSE lambda>0 {lf:.4} vs lambda=0 {l0:.4}"));
    }
    v.notes.insert(0, format!("{} test examples at 0 dB", test.len()));
    v
}

/// Saves every checkpoint of the standard matrix. The ladder rows below
/// the two desk models are trained for fewer steps.
fn write_artifacts(d: &Desk, pred: &IrmPredictor, dir: &Path, ladder_steps: u64) -> Artifacts {
    let cfg = &d.cfg;
    let mut art = Artifacts::default();
    for (name, p) in ["a", "b"].iter().zip(&d.proxies) {
        let path = dir.join(format!("proxy_{name}.ckpt"));
        p.save(&path).unwrap();
        art.proxies.push(ProxySpec { name: name.to_string(), checkpoint: path });
    }
    let irm = dir.join("irm.ckpt");
    pred.save(&irm).unwrap();
    art.irm_predictor = Some(irm);

    let tc = cfg.train_config();
    let full_sched = cfg.loss_schedule;
    let zero = LossSchedule { lambda_final: 0.0, ..full_sched };
    let save = |name: &str, state: &TrainState, tc: TrainConfig, sched: LossSchedule, latent: bool| {
        let path = dir.join(format!("{name}.ckpt"));
        NeuralAec::from_state(neural_meta(cfg.model, tc, sched, cfg.mel, latent), state).save(&path).unwrap();
        Some(path)
    };
    art.neural_full = save("neural_full", &d.full, tc.clone(), full_sched, true);
    art.neural_no_latent = save("neural_no_latent", &d.no_latent, tc.clone(), zero, false);

    let short = TrainConfig { max_steps: ladder_steps, specaugment: None, ..tc };
    let all: Vec<UtteranceExample> = split_of(&d.train_set, Split::Train);
    let replayed: Vec<UtteranceExample> = d
        .train_set
        .iter()
        .filter(|(r, _)| r.split == Split::Train && r.echo_style == EchoStyle::Replayed)
        .map(|(_, e)| e.clone())
        .collect();
    for (name, set) in [("neural_no_specaugment", &all), ("neural_no_synthetic", &replayed)] {
        let (state, _) = train(set, &cfg.model, &short, &zero, None, None, |_, _| {}).unwrap();
        let path = save(name, &state, short.clone(), zero, false);
        if name == "neural_no_specaugment" {
            art.neural_no_specaugment = path;
        } else {
            art.neural_no_synthetic = path;
        }
    }
    art
}

fn reporting(d: &Desk, pred: &IrmPredictor) -> Verdict {
    let mut v = Verdict::new();
    let work = tempfile::tempdir().unwrap();
    let data = work.path().join("data");
    let cfg = &d.cfg;
    let plan = DatasetPlan {
        counts: SplitCounts { train: 0, dev: 0, test: 9 },
        ..cfg.dataset.clone()
    };
    let pool = SourcePool::generate(&cfg.sources, derive(cfg, "report-pool")).unwrap();
    build_dataset(&pool, &plan, &cfg.room, &cfg.synth_settings(), derive(cfg, "report-data"), &cfg.hash(), &data).unwrap();
    let art = write_artifacts(d, pred, work.path(), 300);
    let matrix = ExperimentMatrix::standard(&art);
    let first = run_experiment(&matrix, &data).unwrap();
    let second = run_experiment_with_threads(&matrix, &data, 2).unwrap();

    let systems = [
        "probe",
        "subband_nlms",
        "irm_oracle",
        "irm_predicted",
        "neural_full",
        "neural_no_latent",
        "neural_no_latent_no_specaugment",
        "neural_no_latent_no_specaugment_no_synthetic",
    ];
    let complete = systems.iter().all(|s| [0.0, -5.0, -10.0].iter().all(|&t| first.cell(s, t).is_some_and(|c| c.examples == 3)));
    v.check(complete && first.aggregates.len() == 24, format!("{} systems x 3 TERR levels, {} cells", systems.len(), first.aggregates.len()));
    v.check(first.to_json() == second.to_json() && first.to_csv() == second.to_csv(), "JSON and CSV byte-identical across reruns");
    v
}

#[test]
fn acceptance_criteria() {
    let mut passed = Vec::new();
    let mut record = |n: usize, name: &str, v: Verdict| {
        report(n, name, &v);
        passed.push((n, v.passed()));
    };
    record(1, "dsp core", dsp_core());
    record(2, "room simulator", room_simulator());
    record(3, "mixing", mixing());
    record(4, "specaugment", specaugment());
    let desk = RunConfig::desk();
    let (v5, pred) = baselines(&desk);
    record(5, "baselines", v5);
    record(6, "neural model", neural_model());
    let models = desk_models();
    record(7, "end-to-end direction", end_to_end(&models));
    record(8, "reporting", reporting(&models, &pred));
    let failed: Vec<usize> = passed.iter().filter(|(_, ok)| !ok).map(|(n, _)| *n).collect();
    assert!(failed.is_empty(), "failed criteria: {failed:?}");
}
