use hbe_core::evaluation::{binary_metrics, evaluate_record, merge_to_5};
use hbe_core::models::{load_bundle, EvalHead};
use hbe_core::record_io::{load_record, BeatLabel};
use hbe_core::training::label_record;

fn main() {
    let args: Vec<String> = std::env::args().collect();
    let data = std::path::Path::new(&args[1]);
    let bundle_dir = std::path::Path::new(&args[2]);
    let id: u32 = args[3].parse().unwrap();
    let rec = load_record(data, id).unwrap();
    let labeled = label_record(&rec).unwrap();
    let bundle = load_bundle(bundle_dir).unwrap();
    for head in [EvalHead::Blend, EvalHead::AlphaOnly, EvalHead::BetaOnly] {
        let eval = evaluate_record(&labeled, rec.sampling_rate, &bundle, head).unwrap();
        let cm5 = merge_to_5(&eval.cm7);
        let veb = binary_metrics(&cm5, BeatLabel::V);
        let sveb = binary_metrics(&cm5, BeatLabel::S);
        println!(
            "{head:?}: {} beats, acc7 {:.3}, VEB F1 {:?}, SVEB F1 {:?}",
            eval.beats_evaluated,
            eval.cm7.accuracy().unwrap_or(f64::NAN),
            veb.f1.map(|v| (v * 1000.0).round() / 1000.0),
            sveb.f1.map(|v| (v * 1000.0).round() / 1000.0)
        );
    }
}
