use bowley::files::{read_scenarios, read_weather, read_yields, write_scenarios, write_weather, write_yields};
use bowley::Error;
use bowley_core::dataio::{synth_generate, WeatherRecord, YieldRecord, INDEX_NAMES};
use bowley_core::game::ScenarioSet;

#[test]
fn scenarios_round_trip_with_and_without_weather() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("s.csv");
    for s in [
        synth_generate(4, 12, 0.5, 3).unwrap(),
        ScenarioSet::from_losses(&[0.0, 2.0, 5.0, 20.0], &[0.4, 0.3, 0.2, 0.1]).unwrap(),
    ] {
        write_scenarios(&path, &s).unwrap();
        assert_eq!(read_scenarios(&path).unwrap(), s);
    }
    let header = std::fs::read_to_string(&path).unwrap();
    assert!(header.starts_with("id,prob,loss\n"));
}

#[test]
fn scenario_header_must_match_the_grid_layout() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("s.csv");
    std::fs::write(&path, "id,prob,loss,r1_m1\n0,1,3,0.5\n").unwrap();
    assert!(matches!(read_scenarios(&path), Err(Error::Data { line: 1, .. })));
    std::fs::write(&path, "id,prob,loss\n0,1,abc\n").unwrap();
    let e = read_scenarios(&path).unwrap_err();
    assert!(matches!(e, Error::Data { line: 2, .. }), "{e}");
    assert_eq!(e.exit_code(), 2);
}

#[test]
fn yields_and_weather_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let yields = vec![
        YieldRecord { county: "a".into(), year: 2001, yield_value: 150.5 },
        YieldRecord { county: "a".into(), year: 2002, yield_value: 160.0 },
    ];
    let y = dir.path().join("yields.csv");
    write_yields(&y, &yields).unwrap();
    assert_eq!(read_yields(&y).unwrap(), yields);
    assert!(std::fs::read_to_string(&y).unwrap().starts_with("county,year,yield"));

    let weather: Vec<WeatherRecord> = [2001, 2002]
        .iter()
        .map(|&year| WeatherRecord {
            county: "a".into(),
            year,
            values: (0..24).map(|k| year as f64 + k as f64 / 4.0).collect(),
        })
        .collect();
    let w = dir.path().join("weather.csv");
    write_weather(&w, &weather, 2).unwrap();
    assert_eq!(read_weather(&w, 2).unwrap(), weather);
}

#[test]
fn weather_rows_may_be_named_and_must_be_complete() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("weather.csv");
    let months = (1..=12).map(|m| format!("m{m}")).collect::<Vec<_>>().join(",");
    let ones = ["1"; 12].join(",");
    let body = format!(
        "county,year,index,{months}\na,2001,{},{ones}\na,2001,2,{ones}\n",
        INDEX_NAMES[0]
    );
    std::fs::write(&path, &body).unwrap();
    assert_eq!(read_weather(&path, 2).unwrap()[0].values, vec![1.0; 24]);
    // a third row is expected but absent
    assert!(matches!(read_weather(&path, 3), Err(Error::Data { .. })));
    std::fs::write(&path, format!("{body}a,2001,2,{ones}\n")).unwrap();
    assert!(matches!(read_weather(&path, 2), Err(Error::Data { line: 4, .. })));
}
