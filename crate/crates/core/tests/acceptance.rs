//! Acceptance run: one PASS/FAIL line per criterion, non-zero exit on any
//! failure. Run with `cargo test -p duetlite-core --test acceptance`.

use std::process::ExitCode;
use std::time::Instant;

use duetlite_core::flow::{compare_splits_with, Session};
use duetlite_core::he::segment_context;
use duetlite_core::selftest::{he_oracle_check, ntt_roundtrip, ntt_schoolbook};
use duetlite_core::{
    chain_for_depth, gen_weights, mnist, required_depth, run_flow_with, split_model, ComparisonReport, FlowConfig,
    MnistImage, Model64, SplitPoint,
};
use duetlite_node::transport::TransportKind;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;

type Outcome = Result<String, String>;

const N: usize = 8192;

fn ensure(ok: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if ok {
        Ok(())
    } else {
        Err(msg())
    }
}

fn cfg(split: SplitPoint, seed: u64) -> FlowConfig {
    FlowConfig {
        split_point: split,
        poly_degree: N,
        seed,
        ..FlowConfig::default()
    }
}

fn modulus_selection(model: &Model64) -> Outcome {
    let mut parts = Vec::new();
    for (split, want) in [(SplitPoint::Conv2, 140), (SplitPoint::Fc1Act, 88)] {
        let shapes = split_model(model, split).map_err(|e| e.to_string())?.server_shapes();
        let depth = required_depth(&shapes).map_err(|e| e.to_string())?;
        let chain = chain_for_depth(depth);
        let bits: u32 = chain.iter().sum();
        let ctx = segment_context(&shapes, N, 26).map_err(|e| e.to_string())?;
        ensure(bits == want && ctx.total_modulus_bits() == want, || {
            format!("{split}: chain {chain:?} = {bits} bits, context {} bits, want {want}", ctx.total_modulus_bits())
        })?;
        parts.push(format!("{split} {chain:?} = {bits}"));
    }
    Ok(parts.join(", "))
}

fn size_ordering(c: &ComparisonReport) -> Outcome {
    let (big, small) = (c.conv2.fresh_ciphertext_bytes, c.fc1_act.fresh_ciphertext_bytes);
    ensure(small < big && (0.55..=0.65).contains(&c.size_ratio), || {
        format!("fresh ciphertext {small} B vs {big} B, ratio {:.4}", c.size_ratio)
    })?;
    Ok(format!("fresh ciphertext {small} B (88-bit) vs {big} B (140-bit), ratio {:.4}", c.size_ratio))
}

fn compute_tradeoff(c: &ComparisonReport) -> Outcome {
    let msg = format!(
        "DS compute {:.1} ms (conv2) vs {:.2} ms (fc1_act), median of {} over {} images: {:.1}x",
        c.conv2.ds_compute_ms, c.fc1_act.ds_compute_ms, c.repeats, c.images, c.ds_speedup
    );
    ensure(c.ds_speedup >= 5.0, || msg.clone())?;
    Ok(msg)
}

fn ntt_exactness() -> Outcome {
    let a = ntt_roundtrip(&[8, 1024, 8192], 20, 21)?;
    let b = ntt_schoolbook(8, 1000, 22)?;
    Ok(format!("{a}; {b}"))
}

fn end_to_end(model: &Model64, images: &[(usize, MnistImage)]) -> Outcome {
    let c = compare_splits_with(&cfg(SplitPoint::Conv2, 0), model, images, 1).map_err(|e| e.to_string())?;
    let mut parts = Vec::new();
    let mut ok = true;
    for s in [&c.conv2, &c.fc1_act] {
        ok &= s.argmax_agreement * 100 >= 95 * s.images && s.max_abs_error <= 5e-2;
        parts.push(format!(
            "{} agrees on {}/{}, max |logit error| {:.2e}",
            s.split_point, s.argmax_agreement, s.images, s.max_abs_error
        ));
    }
    ensure(ok, || parts.join("; "))?;
    Ok(parts.join("; "))
}

fn protocol_suite() -> Outcome {
    let results = duetlite_node::selftest::run_all(1.0);
    let failed: Vec<String> = results
        .iter()
        .filter_map(|(name, r)| r.as_ref().err().map(|e| format!("{name}: {e}")))
        .collect();
    ensure(failed.is_empty(), || failed.join("; "))?;
    Ok(results.iter().map(|(name, _)| *name).collect::<Vec<_>>().join(", "))
}

fn privacy_structure(model: &Model64, images: &[MnistImage]) -> Outcome {
    let mut rng = ChaCha20Rng::seed_from_u64(2024);
    let mut scanned = (0usize, 0usize);
    for run in 0..20 {
        let split = SplitPoint::SUPPORTED[run % 2];
        let transport = if rng.gen_bool(0.5) { TransportKind::Tcp } else { TransportKind::InMemory };
        let c = FlowConfig {
            transport,
            ..cfg(split, rng.gen())
        };
        let session = Session::open(&c, model).map_err(|e| format!("run {run}: {e}"))?;
        let (i, j) = (rng.gen_range(0..images.len()), rng.gen_range(0..images.len()));
        session.infer(&images[i], i).map_err(|e| format!("run {run}: {e}"))?;
        session.infer(&images[j], j).map_err(|e| format!("run {run}: {e}"))?;
        let audit = session.privacy_audit(&[&images[i], &images[j]]);
        ensure(audit.is_clean(), || {
            format!("run {run} ({split}, images {i}, {j}): {:?} {:?}", audit.ds_hits, audit.do_weight_hits)
        })?;
        scanned.0 += audit.ds_bytes_scanned;
        scanned.1 += audit.do_bytes_scanned;
    }
    Ok(format!(
        "20 flows clean; {:.1} MB scanned on the DS side, {:.1} MB received by the DO",
        scanned.0 as f64 / 1e6,
        scanned.1 as f64 / 1e6
    ))
}

fn reproducibility(model: &Model64, images: &[MnistImage]) -> Outcome {
    let mut parts = Vec::new();
    for (split, idx) in [(SplitPoint::Conv2, 17), (SplitPoint::Fc1Act, 42)] {
        let run = || run_flow_with(&cfg(split, 77), model, &images[idx], idx).map_err(|e| e.to_string());
        let (a, b) = (run()?.reproducible_bytes(), run()?.reproducible_bytes());
        ensure(a == b, || format!("{split}: serialized reports differ"))?;
        parts.push(format!("{split} {} B identical", a.len()));
    }
    Ok(parts.join(", "))
}

fn main() -> ExitCode {
    let (ip, lp) = match mnist::locate(mnist::default_dir()) {
        Ok(p) => p,
        Err(e) => {
            println!("FAIL setup: {e}");
            return ExitCode::FAILURE;
        }
    };
    let images = mnist::load_mnist(ip, lp).expect("MNIST sample parses");
    let model = gen_weights(0);
    let first: Vec<(usize, MnistImage)> = images.iter().cloned().enumerate().take(100).collect();

    let mut comparison: Option<Result<ComparisonReport, String>> = None;
    let mut compare = |model: &Model64| -> Result<ComparisonReport, String> {
        comparison
            .get_or_insert_with(|| {
                compare_splits_with(&cfg(SplitPoint::Conv2, 0), model, &first[..3], 3).map_err(|e| e.to_string())
            })
            .clone()
    };

    let mut failures = 0;
    let mut report = |n: usize, title: &str, start: Instant, outcome: Outcome| {
        let secs = start.elapsed().as_secs_f64();
        match outcome {
            Ok(msg) => println!("PASS criterion {n} ({title}, {secs:.1} s): {msg}"),
            Err(msg) => {
                failures += 1;
                println!("FAIL criterion {n} ({title}, {secs:.1} s): {msg}");
            }
        }
    };

    let t = Instant::now();
    report(1, "modulus selection", t, modulus_selection(&model));
    let t = Instant::now();
    report(2, "ciphertext size ordering", t, compare(&model).and_then(|c| size_ordering(&c)));
    let t = Instant::now();
    report(3, "compute trade-off", t, compare(&model).and_then(|c| compute_tradeoff(&c)));
    let t = Instant::now();
    report(4, "HE oracle equivalence", t, he_oracle_check(N, 1000, 23));
    let t = Instant::now();
    report(5, "NTT exactness", t, ntt_exactness());
    let t = Instant::now();
    report(6, "end-to-end correctness", t, end_to_end(&model, &first));
    let t = Instant::now();
    report(7, "protocol suite", t, protocol_suite());
    let t = Instant::now();
    report(8, "privacy structure", t, privacy_structure(&model, &images));
    let t = Instant::now();
    report(9, "reproducibility", t, reproducibility(&model, &images));

    if failures == 0 {
        println!("acceptance: 9/9 criteria passed");
        ExitCode::SUCCESS
    } else {
        println!("acceptance: {failures} of 9 criteria failed");
        ExitCode::FAILURE
    }
}
