use duetlite_core::flow::{argmax, Session};
use duetlite_core::report::{emit_flow, render_csv, FLOW_SCHEMA};
use duetlite_core::{
    direct_inference, gen_weights, mnist, run_flow, run_flow_with, FlowConfig, FlowReport, MnistImage, OutputFormat,
    Processor, SplitPoint,
};

fn sample() -> Vec<MnistImage> {
    let (i, l) = mnist::locate(mnist::default_dir()).unwrap();
    mnist::load_mnist(i, l).unwrap()
}

fn cfg(split: SplitPoint, poly_degree: usize, seed: u64) -> FlowConfig {
    FlowConfig {
        split_point: split,
        poly_degree,
        seed,
        ..FlowConfig::default()
    }
}

fn steps(r: &FlowReport, p: Processor) -> Vec<&str> {
    r.rows.iter().filter(|x| x.processor == p).map(|x| x.forward_step.as_str()).collect()
}

#[test]
fn conv2_split_rows_at_full_size() {
    let imgs = sample();
    let r = run_flow_with(&cfg(SplitPoint::Conv2, 8192, 0), &gen_weights(0), &imgs[0], 0).unwrap();
    assert_eq!(r.schema, FLOW_SCHEMA);
    assert_eq!(steps(&r, Processor::DO), ["Input Data", "Conv1", "Conv2", "Encrypt Signal"]);
    assert_eq!(steps(&r, Processor::DS), ["FC1", "Sq. Activation", "FC2"]);
    assert!(r.ds_rows().all(|x| x.modulus_bits == Some(140)));
    assert_eq!(r.row("Encrypt Signal").unwrap().modulus_bits, Some(140));
    assert_eq!(r.chain.prime_bits, [31, 26, 26, 26, 31]);
    let levels: Vec<_> = r.ds_rows().map(|x| x.level.unwrap()).collect();
    assert_eq!(levels, [3, 2, 1]);
    assert_eq!(r.row("Input Data").unwrap().payload_bytes, 6 + 12 + 4 * 784);
    assert_eq!(r.row("Conv2").unwrap().payload_bytes, 6 + 4 + 4 * 392);
    assert_eq!(r.result.reference_predicted, argmax(&r.result.reference_logits));
    assert_eq!(r.result.predicted, r.result.reference_predicted);
    assert!(r.result.max_abs_error < 5e-2, "{}", r.result.max_abs_error);
}

#[test]
fn fc1_act_split_rows_at_full_size() {
    let imgs = sample();
    let r = run_flow_with(&cfg(SplitPoint::Fc1Act, 8192, 0), &gen_weights(0), &imgs[1], 1).unwrap();
    assert_eq!(
        steps(&r, Processor::DO),
        ["Input Data", "Conv1", "Conv2", "FC1", "Sq. Activation", "Encrypt Signal"]
    );
    assert_eq!(steps(&r, Processor::DS), ["FC2"]);
    assert!(r.ds_rows().all(|x| x.modulus_bits == Some(88)));
    assert_eq!(r.chain.prime_bits, [31, 26, 31]);
    assert_eq!(r.result.predicted, r.result.reference_predicted);
    assert!(r.result.max_abs_error < 5e-2);
}

#[test]
fn nodes_do_not_change_the_numbers() {
    let imgs = sample();
    let m = gen_weights(2);
    for (split, idx) in [(SplitPoint::Conv2, 4), (SplitPoint::Fc1Act, 9)] {
        let c = cfg(split, 1024, 5);
        let via_nodes = run_flow_with(&c, &m, &imgs[idx], idx).unwrap().result.logits;
        let direct = direct_inference(&c, &m, &imgs[idx], idx).unwrap();
        assert_eq!(via_nodes.len(), 10);
        for (a, b) in via_nodes.iter().zip(&direct) {
            assert!((a - b).abs() <= 1e-9, "{split}: {a} vs {b}");
        }
    }
}

#[test]
fn same_seeds_give_identical_reports() {
    let imgs = sample();
    let m = gen_weights(0);
    let c = cfg(SplitPoint::Conv2, 1024, 9);
    let a = run_flow_with(&c, &m, &imgs[7], 7).unwrap();
    let b = run_flow_with(&c, &m, &imgs[7], 7).unwrap();
    assert_eq!(a.reproducible_bytes(), b.reproducible_bytes());
    let other = run_flow_with(&cfg(SplitPoint::Conv2, 1024, 10), &m, &imgs[7], 7).unwrap();
    assert_ne!(a.reproducible_bytes(), other.reproducible_bytes());
}

#[test]
fn renderings_agree() {
    let imgs = sample();
    let r = run_flow_with(&cfg(SplitPoint::Fc1Act, 1024, 0), &gen_weights(0), &imgs[0], 0).unwrap();

    let csv = render_csv(&[(SplitPoint::Fc1Act, &r.rows)]);
    let mut reader = csv::Reader::from_reader(csv.as_bytes());
    let headers = reader.headers().unwrap().clone();
    assert_eq!(&headers[0], "split_point");
    let records: Vec<_> = reader.records().map(Result::unwrap).collect();
    assert_eq!(records.len(), r.rows.len());
    assert_eq!(&records.last().unwrap()[1], "FC2");

    let table = emit_flow(&r, OutputFormat::Table);
    let body_lines = table.lines().filter(|l| l.starts_with("| ")).count();
    assert_eq!(body_lines, r.rows.len() + 1);
    assert!(table.contains("KB = 1000 bytes."));
    assert_eq!(table.lines().filter(|l| l.starts_with('=')).count(), 1);

    let json = emit_flow(&r, OutputFormat::Json);
    let back: FlowReport = serde_json::from_str(&json).unwrap();
    assert_eq!(back, r);
}

#[test]
fn privacy_audit_is_clean_and_detects_leaks() {
    let imgs = sample();
    let session = Session::open(&cfg(SplitPoint::Conv2, 1024, 3), &gen_weights(0)).unwrap();
    session.infer(&imgs[2], 2).unwrap();
    session.infer(&imgs[3], 3).unwrap();
    let audit = session.privacy_audit(&[&imgs[2], &imgs[3]]);
    assert!(audit.ds_frames > 0 && audit.ds_bytes_scanned > 0 && audit.do_bytes_scanned > 0);
    assert!(audit.is_clean(), "{:?} {:?}", audit.ds_hits, audit.do_weight_hits);

    // Negative control: plant the image on the DS and the audit must see it.
    let leaked: Vec<u8> = imgs[3].to_tensor::<f64>().data().iter().flat_map(|x| x.to_le_bytes()).collect();
    session
        .scientist()
        .with_node(|n| n.put_local(leaked, "ciphertext", "planted", &[]))
        .unwrap();
    let audit = session.privacy_audit(&[&imgs[2], &imgs[3]]);
    assert!(audit.ds_hits.iter().any(|h| h.needle == "image f64"));
}

#[test]
fn sessions_serve_several_images() {
    let dir = mnist::default_dir();
    let c = FlowConfig {
        image_index: 10,
        image_count: 3,
        mnist_dir: Some(dir),
        ..cfg(SplitPoint::Fc1Act, 1024, 0)
    };
    let reports = run_flow(&c).unwrap();
    let idx: Vec<usize> = reports.iter().map(|r| r.result.image_index).collect();
    assert_eq!(idx, [10, 11, 12]);
    assert!(reports.iter().all(|r| r.setup == reports[0].setup));

    let out_of_range = FlowConfig {
        image_index: 199,
        image_count: 2,
        ..c
    };
    assert!(matches!(run_flow(&out_of_range), Err(duetlite_core::DuetError::Config(_))));
}

#[test]
fn unsupported_parameters_are_configuration_errors() {
    let m = gen_weights(0);
    let img = &sample()[0];
    let err = run_flow_with(&cfg(SplitPoint::Conv2, 512, 0), &m, img, 0).unwrap_err();
    assert!(matches!(err, duetlite_core::DuetError::Config(_)));
    assert_eq!(err.exit_code(), 1);
    let err = run_flow_with(&cfg(SplitPoint::Conv1, 1024, 0), &m, img, 0).unwrap_err();
    assert!(matches!(err, duetlite_core::DuetError::Split(_)));
}
