mod common;

use chrono::Duration;
use common::utc;
use proptest::prelude::*;
use solnet::eval::{compute_metrics, destination_point, haversine_km, skill_score};
use solnet::ingest::{Resolution, TimeSeries, Unit, PV};
use solnet::series::{apply_scaler, build_windows, fit_scaler, invert_scaler, ScalerMode, WindowConfig};

fn pv_series(values: &[f64]) -> TimeSeries {
    let rows: Vec<_> = values
        .iter()
        .enumerate()
        .map(|(i, v)| (utc(2019, 1, 1) + Duration::hours(i as i64), vec![*v], true))
        .collect();
    TimeSeries::from_rows(Resolution::Hourly, &[(PV, Unit::Kilowatt)], &rows).unwrap()
}

proptest! {
    #[test]
    fn metric_ordering(pairs in prop::collection::vec((-1e3f64..1e3, -1e3f64..1e3), 1..200)) {
        let (p, a): (Vec<f64>, Vec<f64>) = pairs.into_iter().unzip();
        let m = compute_metrics(&p, &a).unwrap();
        prop_assert!(m.rmse >= m.mae);
        prop_assert!(m.mae >= m.mbe.abs());
    }

    #[test]
    fn perfect_forecast_scores_zero(a in prop::collection::vec(0.0f64..3.0, 1..100)) {
        let m = compute_metrics(&a, &a).unwrap();
        prop_assert_eq!((m.rmse, m.mae, m.mbe), (0.0, 0.0, 0.0));
        prop_assert_eq!(skill_score(m.rmse, 0.5).unwrap(), -100.0);
    }

    #[test]
    fn scaler_round_trip_and_monotone(values in prop::collection::vec(0.0f64..5.0, 2..300), peak in 0.5f64..10.0) {
        prop_assume!(values.iter().cloned().fold(f64::MIN, f64::max) > values.iter().cloned().fold(f64::MAX, f64::min));
        let ts = pv_series(&values);
        for mode in [ScalerMode::Source, ScalerMode::Target] {
            let st = fit_scaler(&ts, mode, peak).unwrap();
            let scaled = apply_scaler(&ts, &st).unwrap();
            let y = scaled.values(PV).unwrap();
            for (i, j) in (0..values.len()).zip(1..values.len()) {
                if values[i] < values[j] {
                    prop_assert!(y[i] < y[j]);
                }
            }
            prop_assert!(y.iter().all(|v| (-1e-12..=1.0 + 1e-12).contains(v)));
            let back = invert_scaler(&scaled, &st).unwrap();
            for (x, z) in values.iter().zip(back.values(PV).unwrap()) {
                prop_assert!((x - z).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn target_mode_never_lowers_the_bound(values in prop::collection::vec(0.0f64..5.0, 2..100), peak in 0.5f64..10.0) {
        prop_assume!(values.iter().any(|v| *v != values[0]));
        let ts = pv_series(&values);
        let src = fit_scaler(&ts, ScalerMode::Source, peak).unwrap();
        let tgt = fit_scaler(&ts, ScalerMode::Target, peak).unwrap();
        let (s, t) = (src.get(PV).unwrap(), tgt.get(PV).unwrap());
        prop_assert_eq!(s.min, t.min);
        prop_assert_eq!(t.max, s.max.max(0.86 * peak));
    }

    #[test]
    fn windows_never_look_ahead(
        len in 30usize..400,
        lags in 1usize..48,
        horizon in 1usize..30,
        stride in 1usize..30,
        gaps in prop::collection::vec(0usize..400, 0..5),
    ) {
        let rows: Vec<_> = (0..len)
            .map(|i| (utc(2019, 1, 1) + Duration::hours(i as i64), vec![(i % 24) as f64], !gaps.contains(&i)))
            .collect();
        let ts = TimeSeries::from_rows(Resolution::Hourly, &[(PV, Unit::Kilowatt)], &rows).unwrap();
        let cfg = WindowConfig { lags, horizon, stride_hours: stride, ..WindowConfig::default() };
        if let Ok(set) = build_windows(&ts, None, &cfg) {
            for s in &set.samples {
                prop_assert_eq!(s.input_times.len(), lags);
                prop_assert_eq!(s.target_times.len(), horizon);
                prop_assert!(s.input_times.iter().max() < s.target_times.iter().min());
                let clean = s
                    .input_times
                    .iter()
                    .chain(&s.target_times)
                    .all(|t| !gaps.contains(&((*t - utc(2019, 1, 1)).num_hours() as usize)));
                prop_assert!(clean);
            }
        }
    }

    #[test]
    fn destination_distance_is_consistent(
        lat in -80.0f64..80.0,
        lon in -179.0f64..179.0,
        bearing in 0.0f64..360.0,
        d in 1.0f64..2000.0,
    ) {
        let (la, lo) = destination_point(lat, lon, bearing, d);
        prop_assert!((haversine_km(lat, lon, la, lo) - d).abs() / d < 1e-6);
    }
}
