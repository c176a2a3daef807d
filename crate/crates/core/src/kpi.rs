//! KPIs (PRR, throughput), CSV export and parameter sweeps.

use std::io::{Read, Write};
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::engine::{run, RunReport};
use crate::error::{Error, Result};
use crate::link::TrafficClass;
use crate::scenario::{AllocMode, Duplex, ScenarioConfig};

impl RunReport {
    /// Successful (packet, receiver) pairs over intended pairs for the A2A
    /// packets counted after warm-up; `None` when none were counted.
    pub fn prr(&self) -> Option<f64> {
        (self.a2a.receiver_pairs > 0).then(|| self.a2a.success_pairs as f64 / self.a2a.receiver_pairs as f64)
    }

    /// Delivered unique-packet bits per counted second, in Mbps.
    pub fn throughput_mbps(&self, class: TrafficClass) -> f64 {
        if self.counted_duration_s <= 0.0 {
            return 0.0;
        }
        self.class(class).delivered_bits as f64 / self.counted_duration_s / 1e6
    }
}

/// One CSV row: the swept parameters of a run and its KPIs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KpiRecord {
    pub run_id: String,
    pub seed: u64,
    pub alloc_mode: AllocMode,
    pub n_agvs: usize,
    pub period_ms: u32,
    pub harq: bool,
    pub duplex: Duplex,
    pub prr: Option<f64>,
    pub throughput_a2a_mbps: f64,
    pub throughput_a2i_mbps: f64,
    pub generated: u64,
    pub delivered: u64,
    pub expired: u64,
}

pub fn run_id(cfg: &ScenarioConfig) -> String {
    format!(
        "{}-k{}-p{}-{}-{}-s{}",
        cfg.mac.alloc_mode,
        cfg.layout.n_group_agvs,
        cfg.traffic.packet_period_ms,
        if cfg.mac.harq_enabled { "harq" } else { "noharq" },
        cfg.mac.duplex,
        cfg.run.seed
    )
}

impl KpiRecord {
    /// Counters cover A2A traffic, matching the PRR column.
    pub fn from_report(report: &RunReport) -> Self {
        let cfg = &report.config;
        Self {
            run_id: run_id(cfg),
            seed: cfg.run.seed,
            alloc_mode: cfg.mac.alloc_mode,
            n_agvs: cfg.layout.n_group_agvs,
            period_ms: cfg.traffic.packet_period_ms,
            harq: cfg.mac.harq_enabled,
            duplex: cfg.mac.duplex,
            prr: report.prr(),
            throughput_a2a_mbps: report.throughput_mbps(TrafficClass::A2aCam),
            throughput_a2i_mbps: report.throughput_mbps(TrafficClass::A2iData),
            generated: report.a2a.generated,
            delivered: report.a2a.delivered,
            expired: report.a2a.expired,
        }
    }
}

pub fn write_csv<W: Write>(records: &[KpiRecord], out: W) -> Result<()> {
    let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(out);
    w.write_record([
        "run_id",
        "seed",
        "alloc_mode",
        "n_agvs",
        "period_ms",
        "harq",
        "duplex",
        "prr",
        "throughput_a2a_mbps",
        "throughput_a2i_mbps",
        "generated",
        "delivered",
        "expired",
    ])?;
    for r in records {
        w.serialize(r)?;
    }
    w.flush().map_err(|e| Error::Csv(e.into()))?;
    Ok(())
}

/// Writes a header row and one row per record.
pub fn export_csv(records: &[KpiRecord], path: &Path) -> Result<()> {
    let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    write_csv(records, std::io::BufWriter::new(file))
}

pub fn parse_csv<R: Read>(input: R) -> Result<Vec<KpiRecord>> {
    csv::Reader::from_reader(input)
        .deserialize()
        .map(|r| r.map_err(Error::from))
        .collect()
}

pub fn read_csv(path: &Path) -> Result<Vec<KpiRecord>> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    parse_csv(file)
}

/// Cross product of swept parameters on top of a base configuration.
#[derive(Debug, Clone, PartialEq)]
pub struct Sweep {
    pub base: ScenarioConfig,
    pub modes: Vec<AllocMode>,
    pub agvs: Vec<usize>,
    pub periods_ms: Vec<u32>,
    pub harq: Vec<bool>,
    pub duplex: Vec<Duplex>,
    pub seeds: Vec<u64>,
}

impl Sweep {
    /// A sweep that runs only the base configuration.
    pub fn single(base: ScenarioConfig) -> Self {
        Self {
            modes: vec![base.mac.alloc_mode],
            agvs: vec![base.layout.n_group_agvs],
            periods_ms: vec![base.traffic.packet_period_ms],
            harq: vec![base.mac.harq_enabled],
            duplex: vec![base.mac.duplex],
            seeds: vec![base.run.seed],
            base,
        }
    }

    /// Every configuration of the sweep, in row order.
    pub fn configs(&self) -> Vec<ScenarioConfig> {
        let mut out = Vec::new();
        for &mode in &self.modes {
            for &k in &self.agvs {
                for &p in &self.periods_ms {
                    for &h in &self.harq {
                        for &d in &self.duplex {
                            for &s in &self.seeds {
                                let mut c = self.base.clone();
                                c.mac.alloc_mode = mode;
                                c.layout.n_group_agvs = k;
                                c.traffic.packet_period_ms = p;
                                c.mac.harq_enabled = h;
                                c.mac.duplex = d;
                                c.run.seed = s;
                                out.push(c);
                            }
                        }
                    }
                }
            }
        }
        out
    }

    /// Validates every configuration, then runs them in parallel. Rows come
    /// back in [`Sweep::configs`] order whatever the completion order.
    pub fn run(&self) -> Result<Vec<KpiRecord>> {
        let configs = self.configs();
        for c in &configs {
            c.validate()?;
        }
        configs
            .par_iter()
            .map(|c| run(c).map(|r| KpiRecord::from_report(&r)))
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::engine::ClassCounters;

    fn report(success: u64, pairs: u64, bits: u64, duration: f64) -> RunReport {
        RunReport {
            config: ScenarioConfig::default(),
            a2a: ClassCounters {
                success_pairs: success,
                receiver_pairs: pairs,
                delivered_bits: bits,
                ..Default::default()
            },
            a2i: ClassCounters::default(),
            counted_duration_s: duration,
            wall_time_s: 0.0,
        }
    }

    #[test]
    fn prr_counts_pairs() {
        assert_eq!(report(30, 30, 0, 1.0).prr(), Some(1.0));
        assert_eq!(report(27, 30, 0, 1.0).prr(), Some(0.9));
        assert_eq!(report(0, 0, 0, 1.0).prr(), None);
    }

    #[test]
    fn throughput_arithmetic() {
        let r = report(0, 0, 100 * 2400, 1.0);
        assert!((r.throughput_mbps(TrafficClass::A2aCam) - 0.24).abs() < 1e-12);
        assert_eq!(r.throughput_mbps(TrafficClass::A2iData), 0.0);
        assert_eq!(report(0, 0, 0, 0.0).throughput_mbps(TrafficClass::A2aCam), 0.0);
    }

    fn record(prr: Option<f64>) -> KpiRecord {
        KpiRecord {
            run_id: "mode2-k4-p10-noharq-half-s1".into(),
            seed: 1,
            alloc_mode: AllocMode::Mode2,
            n_agvs: 4,
            period_ms: 10,
            harq: false,
            duplex: Duplex::Half,
            prr,
            throughput_a2a_mbps: 0.96,
            throughput_a2i_mbps: 3.5,
            generated: 100,
            delivered: 99,
            expired: 0,
        }
    }

    #[test]
    fn empty_export_is_header_only() {
        let mut buf = Vec::new();
        write_csv(&[], &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(
            text,
            "run_id,seed,alloc_mode,n_agvs,period_ms,harq,duplex,prr,throughput_a2a_mbps,throughput_a2i_mbps,generated,delivered,expired\n"
        );
        assert!(parse_csv(text.as_bytes()).unwrap().is_empty());
    }

    #[test]
    fn round_trip_and_absent_prr() {
        let recs = vec![record(Some(0.9975)), record(None)];
        let mut buf = Vec::new();
        write_csv(&recs, &mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert_eq!(text.lines().count(), 3);
        assert!(text.lines().nth(2).unwrap().contains(",half,,0.96,"));
        assert_eq!(parse_csv(buf.as_slice()).unwrap(), recs);
    }

    #[test]
    fn unwritable_destination_names_path() {
        let path = Path::new("/nonexistent-dir/out.csv");
        let err = export_csv(&[], path).unwrap_err();
        assert!(err.to_string().contains("/nonexistent-dir/out.csv"));
    }

    #[test]
    fn sweep_cardinality() {
        let mut s = Sweep::single(ScenarioConfig::default());
        s.modes = vec![AllocMode::Random, AllocMode::Mode2];
        s.agvs = vec![4, 6, 8];
        s.seeds = (1..=5).collect();
        assert_eq!(s.configs().len(), 30);
    }
}
