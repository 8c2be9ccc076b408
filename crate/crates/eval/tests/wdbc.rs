use kish_eval::{
    default_dataset_path, gaussian_sd, histogram_csv, leave_one_out_f1, load_wdbc, project_2d,
    quantize, distance_distribution, EvalConfig, Mode,
};

#[test]
fn canonical_counts() {
    let raw = load_wdbc(default_dataset_path()).unwrap();
    assert_eq!(raw.len(), 569);
    assert_eq!(raw.malignant(), 212);
    assert_eq!(raw.benign(), 357);
    assert_eq!(raw.dim(), 30);
}

#[test]
fn first_axis_separates_classes() {
    let raw = load_wdbc(default_dataset_path()).unwrap();
    let p = project_2d(&raw);
    assert!(p.ridge.is_none());
    // Best single threshold on axis 1, either orientation.
    let mut xs: Vec<(f64, u8)> = p.points.iter().map(|q| q[0]).zip(raw.labels.iter().copied()).collect();
    xs.sort_by(|a, b| a.0.total_cmp(&b.0));
    let total1 = raw.malignant();
    let mut best = 0;
    let mut ones_below = 0;
    for i in 0..=xs.len() {
        let zeros_below = i - ones_below;
        let correct = zeros_below + (total1 - ones_below);
        best = best.max(correct).max(xs.len() - correct);
        if i < xs.len() {
            ones_below += xs[i].1 as usize;
        }
    }
    let acc = best as f64 / xs.len() as f64;
    assert!(acc >= 0.9, "accuracy {acc}");
}

#[test]
fn plain_f1_near_reference() {
    let raw = load_wdbc(default_dataset_path()).unwrap();
    let p = project_2d(&raw);
    for g in [150, 200] {
        let db = quantize(&p.points, &raw.labels, g).unwrap();
        assert_eq!(db.malignant(), 212);
        let cfg = EvalConfig { k: 13, repetitions: 1, seed: 0, mode: Mode::Plain };
        let r = leave_one_out_f1(&db, &cfg).unwrap();
        assert!((r.f1 - 0.98).abs() <= 0.01, "grid {g}: F1 {}", r.f1);
        let again = leave_one_out_f1(&db, &cfg).unwrap();
        assert_eq!(r.predictions, again.predictions);
    }
}

#[test]
fn wdbc_distance_histograms() {
    let raw = load_wdbc(default_dataset_path()).unwrap();
    let p = project_2d(&raw);
    let db = quantize(&p.points, &raw.labels, 100).unwrap();
    for q in [0usize, 100, 400] {
        let d = distance_distribution(&db, &db.points[q]);
        let diag = gaussian_sd(&d);
        assert!(!diag.degenerate && diag.sd > 0.0 && diag.sd < 1.0);
        let csv = histogram_csv(&d);
        let total: u64 = csv.lines().skip(1).map(|l| l.split(',').nth(1).unwrap().parse::<u64>().unwrap()).sum();
        assert_eq!(total, 569);
    }
}
