use hbe_core::evaluation::*;
use hbe_core::models::{EvalHead, ModelConfig};
use hbe_core::training::TrainConfig;
use std::collections::BTreeMap;

fn main() {
    let args: Vec<String> = std::env::args().collect();
    let ids: Vec<u32> = args[1].split(',').map(|s| s.parse().unwrap()).collect();
    let seed: u64 = args[2].parse().unwrap();
    let epochs: usize = args[3].parse().unwrap();
    let variants: Vec<String> = args[4].split(',').map(String::from).collect();
    let spec = ProtocolSpec { name: "probe".into(), records: ids.clone() };
    let split = hbe_core::record_io::DatasetSplit::standard();
    let mut records = BTreeMap::new();
    for id in ids.iter().chain(&split.global_records) {
        records.insert(*id, hbe_core::synth::generate_record(*id, 1800.0).unwrap());
    }
    let labeled = label_records(&records).unwrap();
    let rate = 360.0;
    let mcfg = ModelConfig::default();
    let tcfg = TrainConfig { seed, epochs, blend_epochs: 25, global_per_class: 120, ..TrainConfig::default() };
    let (bundles, _) = train_protocol(&spec, &labeled, rate, &mcfg, &tcfg).unwrap();
    let base = run_protocol(&spec, &labeled, &bundles, rate, EvalHead::Blend).unwrap();
    println!("baseline: VEB F1 {:.4} SVEB F1 {:.4} acc7 {:.4}",
        base.veb.f1.unwrap(), base.sveb.f1.unwrap(), base.cm7.accuracy().unwrap());
    for vname in &variants {
        let variant = AblationVariant::from_name(vname).unwrap();
        let res = if variant.head_only() {
            let (_, _, head) = ablation_setup(variant, &mcfg, &tcfg);
            run_protocol(&spec, &labeled, &bundles, rate, head).unwrap()
        } else {
            let (vm, vt, head) = ablation_setup(variant, &mcfg, &tcfg);
            let (vb, _) = train_protocol(&spec, &labeled, rate, &vm, &vt).unwrap();
            run_protocol(&spec, &labeled, &vb, rate, head).unwrap()
        };
        println!("{vname}: VEB F1 {:.4} ({:+.4}) SVEB F1 {:.4} ({:+.4})",
            res.veb.f1.unwrap(), res.veb.f1.unwrap() - base.veb.f1.unwrap(),
            res.sveb.f1.unwrap(), res.sveb.f1.unwrap() - base.sveb.f1.unwrap());
    }
}
