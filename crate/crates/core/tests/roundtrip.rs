use mrr_core::domain::{AgeGroups, OccasionProbs, SurvivalCoefficients};
use mrr_core::io::{parse_dataset, read_dataset, save_dataset, write_dataset};
use mrr_core::kernels::{InitialDistribution, KernelParams};
use mrr_core::simulation::{simulate_dataset, SimConfig};
use mrr_core::study::{scenario_config, soay_like_config};
use proptest::prelude::*;

fn config(seed: u64, missingness: f64, groups: bool) -> SimConfig {
    let (age_groups, survival, kernel) = if groups {
        (
            AgeGroups::lamb_yearling_adult_senior(),
            vec![
                SurvivalCoefficients { intercept: -4.0, slope: 0.3 },
                SurvivalCoefficients { intercept: -3.0, slope: 0.25 },
                SurvivalCoefficients { intercept: -2.0, slope: 0.2 },
                SurvivalCoefficients { intercept: -4.0, slope: 0.2 },
            ],
            KernelParams::RandomWalkDrift { mu: vec![0.8; 4], sigma: vec![1.0; 4] },
        )
    } else {
        (
            AgeGroups::single(),
            vec![SurvivalCoefficients { intercept: -2.0, slope: 0.15 }],
            KernelParams::IidNormal { mean: 20.0, sd: 3.0 },
        )
    };
    SimConfig {
        individuals: 40,
        occasions: 7,
        age_groups,
        survival,
        kernel,
        initial: InitialDistribution::Normal { mean: 16.0, sd: 2.0 },
        recapture: OccasionProbs::Constant(0.6),
        recovery: OccasionProbs::Constant(0.4),
        missingness,
        initial_missingness: missingness / 2.0,
        seed,
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn simulated_data_survives_the_file_format(seed in 0u64..10_000, missingness in 0.0f64..0.9, groups: bool) {
        let data = simulate_dataset(&config(seed, missingness, groups)).unwrap().dataset;
        let mut buf = Vec::new();
        write_dataset(&data, &mut buf).unwrap();
        let back = parse_dataset(buf.as_slice()).unwrap();
        prop_assert_eq!(back.checksum(), data.checksum());
        prop_assert_eq!(&back, &data);

        let mut again = Vec::new();
        write_dataset(&back, &mut again).unwrap();
        prop_assert_eq!(buf, again);
    }
}

#[test]
fn study_scenarios_round_trip_through_files() {
    let dir = tempfile::tempdir().unwrap();
    for (i, cfg) in
        [scenario_config(1, 200, 10, 5).unwrap(), scenario_config(4, 200, 10, 6).unwrap(), soay_like_config(3)]
            .iter()
            .enumerate()
    {
        let data = simulate_dataset(cfg).unwrap().dataset;
        let path = dir.path().join(format!("d{i}.csv"));
        save_dataset(&data, &path).unwrap();
        assert_eq!(read_dataset(&path).unwrap(), data);
    }
}
