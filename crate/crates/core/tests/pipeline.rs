//! End-to-end runs and the files they leave behind.

use fanet_core::simulator::{compare, emit_report, read_report, run_pipeline, square_area, PlannerChoice, RunReport, SimOptions, SquareAreaConfig, TopoChoice};

fn table_one(seed: u64) -> Vec<RunReport> {
    let scenario = square_area(&SquareAreaConfig::table_one(), seed);
    compare(&scenario, &PlannerChoice::Heuristic, seed, &SimOptions::default()).unwrap()
}

#[test]
fn two_uavs_share_one_link() {
    let scenario = square_area(&SquareAreaConfig { n_slots: 12, ..SquareAreaConfig::table_one().with_uavs(2) }, 5);
    let report = run_pipeline(&scenario, &PlannerChoice::Heuristic, TopoChoice::Ctop, 5, &SimOptions::default()).unwrap();
    assert_eq!(report.slots.len(), 13);
    for s in &report.slots {
        assert_eq!(s.edges, vec![[0, 1]]);
        assert_eq!(s.hops, Some(1.0));
        assert!(s.throughput_bps > 0.0);
    }
    // the lone survivor is its own largest component
    assert_eq!(report.connectivity_rate, 1.0);
    assert!(report.violations.is_empty(), "{:?}", report.violations);
}

#[test]
fn written_files_agree_with_report() {
    let dir = tempfile::tempdir().unwrap();
    for report in table_one(3) {
        let sub = dir.path().join(format!("{:?}", report.config.topology));
        std::fs::create_dir_all(&sub).unwrap();
        emit_report(&report, &sub).unwrap();
        assert_eq!(read_report(&sub.join("report.json")).unwrap(), report);

        let mut metrics = csv::Reader::from_path(sub.join("metrics.csv")).unwrap();
        let rows: Vec<csv::StringRecord> = metrics.records().map(Result::unwrap).collect();
        assert_eq!(rows.len(), report.slots.len());
        let total: f64 = rows.iter().map(|r| r[3].parse::<f64>().unwrap()).sum();
        assert!((total - report.throughput_total_bps).abs() <= 1e-9 * report.throughput_total_bps);
        for (row, slot) in rows.iter().zip(&report.slots) {
            assert_eq!(row[2].parse::<usize>().unwrap(), slot.edges.len());
            match slot.hops {
                Some(h) => assert_eq!(row[4].parse::<f64>().unwrap(), h),
                None => assert_eq!(&row[4], "inf"),
            }
        }

        let edges = csv::Reader::from_path(sub.join("edges.csv")).unwrap().records().count();
        assert_eq!(edges, report.slots.iter().map(|s| s.edges.len()).sum::<usize>());

        let powers: Vec<csv::StringRecord> = csv::Reader::from_path(sub.join("powers.csv")).unwrap().records().map(Result::unwrap).collect();
        assert_eq!(powers.len(), report.config.num_uavs * report.slots.len());
        for row in &powers {
            let (n, a): (usize, usize) = (row[0].parse().unwrap(), row[1].parse().unwrap());
            assert_eq!(row[2].parse::<f64>().unwrap(), report.powers_w[a][n]);
        }
    }
}

#[test]
fn mtp_goes_dark_while_ctop_stays_connected() {
    let reports = table_one(7);
    let ctop = reports.iter().find(|r| r.config.topology == TopoChoice::Ctop).unwrap();
    let mtp = reports.iter().find(|r| r.config.topology == TopoChoice::Mtp).unwrap();
    assert!(ctop.inf_hop_slots().is_empty());
    let dark = mtp.inf_hop_slots();
    let first = *dark.first().expect("MTP depletes within the mission");
    // once a UAV is silent it stays isolated
    assert_eq!(dark, (first..mtp.slots.len()).collect::<Vec<_>>());
    assert_eq!(mtp.average_hops, None);
    let earliest = mtp.depleted_at.iter().flatten().min().copied();
    assert_eq!(earliest, Some(first));
    let scenario = square_area(&SquareAreaConfig::table_one(), 7);
    for (spent, uav) in ctop.energy_j.iter().zip(&scenario.uavs) {
        assert!(*spent <= uav.e_max_j + 1e-9);
    }
}

#[test]
fn report_json_round_trips() {
    for report in table_one(9) {
        let text = report.to_json();
        assert!(text.ends_with('\n'));
        assert_eq!(RunReport::from_json(&text).unwrap(), report);
    }
}
