use serde::{Deserialize, Serialize};

use super::scenario::{run_once, RunResult, Scenario};
use super::NetsimError;
use crate::protocol::FramingProfile;
use crate::synth::RoomSpec;

/// Aggregate over repeated runs of one scenario under one framing profile.
/// Latency statistics pool every object of every repeat; room50,
/// throughput and loss are means over repeats; traffic totals are sums.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub scenario: String,
    pub framing: String,
    pub limit_profile: String,
    pub participants: usize,
    pub objects: usize,
    pub repeats: usize,
    pub latency_mean_ms: f64,
    pub latency_std_ms: f64,
    pub room50_s: f64,
    pub room50_std_s: f64,
    pub throughput_bytes_per_s: f64,
    pub packet_loss_fraction: f64,
    pub up_datagrams: u64,
    pub up_bytes: u64,
    pub down_datagrams: u64,
    pub down_bytes: u64,
    pub retransmissions: u64,
}

fn mean_std(xs: &[f64]) -> (f64, f64) {
    if xs.is_empty() {
        return (0.0, 0.0);
    }
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    (mean, (xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n).sqrt())
}

pub fn aggregate(sc: &Scenario, runs: &[RunResult]) -> Result<MetricsReport, NetsimError> {
    let first = runs.first().ok_or(NetsimError::EmptyReport)?;
    let pooled: Vec<f64> = runs.iter().flat_map(|r| r.latencies_ms.iter().copied()).collect();
    let (latency_mean_ms, latency_std_ms) = mean_std(&pooled);
    let room50: Vec<f64> = runs.iter().map(|r| r.room50_s).collect();
    let (room50_s, room50_std_s) = mean_std(&room50);
    let n = runs.len() as f64;
    Ok(MetricsReport {
        scenario: sc.name.clone(),
        framing: first.framing.to_string(),
        limit_profile: sc.limit()?.to_string(),
        participants: sc.participants,
        objects: first.object_count,
        repeats: runs.len(),
        latency_mean_ms,
        latency_std_ms,
        room50_s,
        room50_std_s,
        throughput_bytes_per_s: runs.iter().map(|r| r.throughput_bytes_per_s).sum::<f64>() / n,
        packet_loss_fraction: runs.iter().map(|r| r.packet_loss_fraction).sum::<f64>() / n,
        up_datagrams: runs.iter().map(|r| r.totals.up_datagrams).sum(),
        up_bytes: runs.iter().map(|r| r.totals.up_bytes).sum(),
        down_datagrams: runs.iter().map(|r| r.totals.down_datagrams).sum(),
        down_bytes: runs.iter().map(|r| r.totals.down_bytes).sum(),
        retransmissions: runs.iter().map(|r| r.retransmissions).sum(),
    })
}

/// Runs each seed once and aggregates.
pub fn run_seeds(
    sc: &Scenario,
    rooms: &[RoomSpec],
    framing: FramingProfile,
    seeds: &[u64],
) -> Result<(MetricsReport, Vec<RunResult>), NetsimError> {
    let runs = seeds.iter().map(|&s| run_once(sc, rooms, framing, s)).collect::<Result<Vec<_>, _>>()?;
    Ok((aggregate(sc, &runs)?, runs))
}

/// `repeats` runs with seeds 1..=repeats.
pub fn run_scenario(
    sc: &Scenario,
    rooms: &[RoomSpec],
    framing: FramingProfile,
    repeats: usize,
) -> Result<MetricsReport, NetsimError> {
    let seeds: Vec<u64> = (1..=repeats as u64).collect();
    run_seeds(sc, rooms, framing, &seeds).map(|(r, _)| r)
}

pub const TABLE_HEADERS: [&str; 13] = [
    "scenario",
    "framing",
    "participants",
    "objects",
    "latency_mean_ms",
    "latency_std_ms",
    "room50_s",
    "throughput_Bps",
    "loss",
    "dgrams_up",
    "dgrams_down",
    "bytes_up",
    "bytes_down",
];

/// Table cells for one report; floats at fixed precision.
pub fn table_row(r: &MetricsReport) -> Vec<String> {
    vec![
        r.scenario.clone(),
        r.framing.clone(),
        r.participants.to_string(),
        r.objects.to_string(),
        format!("{:.3}", r.latency_mean_ms),
        format!("{:.3}", r.latency_std_ms),
        format!("{:.3}", r.room50_s),
        format!("{:.1}", r.throughput_bytes_per_s),
        format!("{:.4}", r.packet_loss_fraction),
        r.up_datagrams.to_string(),
        r.down_datagrams.to_string(),
        r.up_bytes.to_string(),
        r.down_bytes.to_string(),
    ]
}

/// Aligned text table, one row per report.
pub fn render_report(reports: &[MetricsReport]) -> Result<String, NetsimError> {
    if reports.is_empty() {
        return Err(NetsimError::EmptyReport);
    }
    let rows: Vec<Vec<String>> = reports.iter().map(table_row).collect();
    let widths: Vec<usize> = (0..TABLE_HEADERS.len())
        .map(|c| rows.iter().map(|r| r[c].len()).chain([TABLE_HEADERS[c].len()]).max().unwrap_or(0))
        .collect();
    let line = |cells: Vec<&str>| {
        cells
            .iter()
            .zip(&widths)
            .enumerate()
            .map(|(i, (c, w))| if i < 2 { format!("{c:<w$}") } else { format!("{c:>w$}") })
            .collect::<Vec<_>>()
            .join("  ")
            .trim_end()
            .to_string()
    };
    let mut out = vec![line(TABLE_HEADERS.to_vec())];
    out.push(widths.iter().map(|w| "-".repeat(*w)).collect::<Vec<_>>().join("  "));
    for r in &rows {
        out.push(line(r.iter().map(String::as_str).collect()));
    }
    Ok(out.join("\n") + "\n")
}

pub fn write_csv(reports: &[MetricsReport]) -> Result<String, NetsimError> {
    if reports.is_empty() {
        return Err(NetsimError::EmptyReport);
    }
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in reports {
        w.serialize(r).map_err(|e| NetsimError::Io(e.to_string()))?;
    }
    String::from_utf8(w.into_inner().map_err(|e| NetsimError::Io(e.to_string()))?)
        .map_err(|e| NetsimError::Io(e.to_string()))
}

pub fn read_csv(text: &str) -> Result<Vec<MetricsReport>, NetsimError> {
    csv::Reader::from_reader(text.as_bytes())
        .deserialize()
        .collect::<Result<Vec<MetricsReport>, _>>()
        .map_err(|e| NetsimError::Io(e.to_string()))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> MetricsReport {
        MetricsReport {
            scenario: "SD1".into(),
            framing: "plain".into(),
            limit_profile: "photon".into(),
            participants: 2,
            objects: 90,
            repeats: 5,
            latency_mean_ms: 2.512_345,
            latency_std_ms: 0.071,
            room50_s: 0.494_1,
            room50_std_s: 0.000_2,
            throughput_bytes_per_s: 7_421.25,
            packet_loss_fraction: 0.0,
            up_datagrams: 1200,
            up_bytes: 80_000,
            down_datagrams: 1100,
            down_bytes: 76_000,
            retransmissions: 0,
        }
    }

    #[test]
    fn csv_round_trip() {
        let reports = vec![sample(), MetricsReport { framing: "framed".into(), ..sample() }];
        let text = write_csv(&reports).unwrap();
        assert_eq!(read_csv(&text).unwrap(), reports);
    }

    #[test]
    fn table_agrees_with_csv() {
        let r = sample();
        let table = render_report(std::slice::from_ref(&r)).unwrap();
        let lines: Vec<&str> = table.lines().collect();
        assert_eq!(lines.len(), 3);
        let cells: Vec<&str> = lines[2].split_whitespace().collect();
        let back = &read_csv(&write_csv(std::slice::from_ref(&r)).unwrap()).unwrap()[0];
        assert_eq!(cells, table_row(back));
        assert_eq!(cells[4].parse::<f64>().unwrap(), (back.latency_mean_ms * 1e3).round() / 1e3);
    }

    #[test]
    fn empty_is_an_error() {
        assert_eq!(render_report(&[]), Err(NetsimError::EmptyReport));
        assert!(write_csv(&[]).is_err());
    }
}
