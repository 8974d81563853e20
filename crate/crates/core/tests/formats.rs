use impulsive_noise::baselines::{BgMemoryParams, ClassAParams};
use impulsive_noise::chain::{ChainConfig, StatesPerSystem, SystemConfig};
use impulsive_noise::format::{
    read_params, read_trace, read_trace_from, write_params, write_trace, write_trace_to,
    FormatError, ModelParams, ParamsFile,
};
use impulsive_noise::NoiseTrace;
use proptest::prelude::*;

fn chain_strategy() -> impl Strategy<Value = ChainConfig> {
    (
        prop::bool::ANY,
        0.01f64..10.0,
        0.0f64..0.5,
        prop::array::uniform3(0.0f64..0.003),
        1.0f64..1e10,
        prop::array::uniform3((0.1f64..3.0, 0.001f64..5.0, 0.001f64..0.5)),
    )
        .prop_map(|(six, bg, stay, entry, rate, sys)| {
            let mut mean = 0.0;
            ChainConfig {
                states_per_system: if six {
                    StatesPerSystem::Six
                } else {
                    StatesPerSystem::Four
                },
                background_variance: bg,
                stay_prob: stay,
                entry_probs: entry,
                sampling_rate_hz: rate,
                systems: sys.map(|(step, var, exit)| {
                    mean += step;
                    SystemConfig {
                        amplitude_mean: mean,
                        amplitude_variance: var,
                        exit_prob: exit,
                    }
                }),
            }
        })
}

fn model_strategy() -> impl Strategy<Value = ModelParams> {
    prop_oneof![
        chain_strategy().prop_map(ModelParams::Chain),
        (
            0.0f64..=1.0,
            0.0f64..1.0,
            0.01f64..5.0,
            1.0f64..100.0,
            1.0f64..1e10
        )
            .prop_map(
                |(b, i, v0, ratio, rate)| ModelParams::BgMemory(BgMemoryParams {
                    background_stay_prob: b,
                    impulse_stay_prob: i,
                    background_variance: v0,
                    impulse_variance: v0 * (1.0 + ratio),
                    sampling_rate_hz: rate,
                })
            ),
        (1e-4f64..100.0, 1e-4f64..10.0, 0.01f64..100.0, 1.0f64..1e10)
            .prop_map(|(a, g, v, rate)| ModelParams::ClassA(ClassAParams::new(a, g, v, rate))),
    ]
}

proptest! {
    #[test]
    fn any_trace_round_trips_bit_exactly(bits in prop::collection::vec(any::<u32>(), 0..2000), rate in 1e-3f64..1e12) {
        let samples: Vec<f32> = bits.into_iter().map(f32::from_bits).collect();
        let trace = NoiseTrace::new(samples, rate);
        let mut bytes = Vec::new();
        write_trace_to(&mut bytes, &trace).unwrap();
        prop_assert_eq!(bytes.len(), 24 + 4 * trace.len());
        let back = read_trace_from(bytes.as_slice()).unwrap();
        prop_assert_eq!(back.sampling_rate_hz().to_bits(), rate.to_bits());
        let a: Vec<u32> = back.samples().iter().map(|x| x.to_bits()).collect();
        let b: Vec<u32> = trace.samples().iter().map(|x| x.to_bits()).collect();
        prop_assert_eq!(a, b);
    }

    #[test]
    fn any_truncation_is_reported_at_its_offset(len in 1usize..200, cut in 1usize..100) {
        let trace = NoiseTrace::new(vec![1.0; len], 1.0);
        let mut bytes = Vec::new();
        write_trace_to(&mut bytes, &trace).unwrap();
        let keep = bytes.len().saturating_sub(cut).max(4);
        bytes.truncate(keep);
        match read_trace_from(bytes.as_slice()) {
            Err(FormatError::TruncatedFile { offset }) => prop_assert_eq!(offset, keep as u64),
            other => prop_assert!(false, "{:?}", other),
        }
    }

    #[test]
    fn params_round_trip_byte_identically(model in model_strategy()) {
        let file = ParamsFile::new(model);
        let text = file.to_toml().unwrap();
        let back = ParamsFile::from_toml(&text).unwrap();
        prop_assert_eq!(&back, &file);
        prop_assert_eq!(back.to_toml().unwrap(), text);
    }
}

#[test]
fn files_on_disk_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let trace = NoiseTrace::from_f64(
        &(0..1_000_000)
            .map(|i| (i as f64 * 0.001).sin())
            .collect::<Vec<_>>(),
        5e9,
    );
    let path = dir.path().join("t.impn");
    write_trace(&path, &trace).unwrap();
    assert_eq!(std::fs::metadata(&path).unwrap().len(), 24 + 4_000_000);
    assert_eq!(read_trace(&path).unwrap(), trace);

    let params = ParamsFile::new(ModelParams::ClassA(ClassAParams::new(0.1, 0.01, 1.0, 5e9)));
    let ppath = dir.path().join("p.toml");
    write_params(&ppath, &params).unwrap();
    assert_eq!(read_params(&ppath).unwrap(), params);
}
