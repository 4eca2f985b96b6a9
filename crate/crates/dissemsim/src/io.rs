//! File formats: network JSON, result CSVs, the run manifest and JSON-lines
//! event traces.

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use dissem_core::engine::{Event, EventKind, Observer, Occupancy};
use dissem_core::topology::{build_counterexample, build_symmetric, Link, NetworkSpec, NodeId};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::experiments::{
    path, star, HydroReport, ImpulseReport, InstabilityReport, MetricSummary, MndfResult,
    ReshufflingReport,
};

/// On-disk network: `{nodes, arrival_rates, links: [{from, to, capacity}]}`
/// with 0-based node indices.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NetworkFile {
    pub nodes: usize,
    pub arrival_rates: Vec<f64>,
    pub links: Vec<LinkRecord>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LinkRecord {
    pub from: usize,
    pub to: usize,
    pub capacity: f64,
}

impl NetworkFile {
    pub fn from_spec(net: &NetworkSpec) -> Self {
        Self {
            nodes: net.node_count(),
            arrival_rates: net.arrival_rates().to_vec(),
            links: net
                .links()
                .map(|l| LinkRecord {
                    from: l.from.0,
                    to: l.to.0,
                    capacity: l.capacity,
                })
                .collect(),
        }
    }

    pub fn to_spec(&self) -> std::result::Result<NetworkSpec, String> {
        if self.arrival_rates.len() != self.nodes {
            return Err(format!(
                "{} arrival rates for {} nodes",
                self.arrival_rates.len(),
                self.nodes
            ));
        }
        let links = self
            .links
            .iter()
            .map(|l| Link {
                from: NodeId(l.from),
                to: NodeId(l.to),
                capacity: l.capacity,
            })
            .collect();
        NetworkSpec::new(self.arrival_rates.clone(), links).map_err(|e| e.to_string())
    }
}

pub fn read_network(path: &Path) -> Result<NetworkSpec> {
    let text = fs::read_to_string(path).map_err(|source| Error::NetworkFile {
        path: path.into(),
        source,
    })?;
    let format = |reason: String| Error::NetworkFormat {
        path: path.into(),
        reason,
    };
    let file: NetworkFile = serde_json::from_str(&text).map_err(|e| format(e.to_string()))?;
    file.to_spec().map_err(format)
}

pub fn write_network(path: &Path, net: &NetworkSpec) -> Result<()> {
    let text = serde_json::to_string_pretty(&NetworkFile::from_spec(net))?;
    fs::write(path, text + "\n").map_err(|source| Error::Output {
        path: path.into(),
        source,
    })
}

/// Builtin network names understood by [`resolve_network`].
pub const BUILTIN_NETWORKS: [&str; 4] = ["symmetric", "counterexample", "star", "path"];

/// A builtin network (sized by `n`, loaded by `lambda` or `epsilon`) or
/// else a JSON file.
pub fn resolve_network(name: &str, n: usize, lambda: f64, epsilon: f64) -> Result<NetworkSpec> {
    match name {
        "symmetric" => Ok(build_symmetric(n, lambda)?),
        "counterexample" => Ok(build_counterexample(epsilon)?),
        "star" => star(n, lambda),
        "path" => path(n, lambda),
        _ => {
            let p = Path::new(name);
            if p.exists() {
                read_network(p)
            } else {
                Err(Error::UnknownNetwork(name.into()))
            }
        }
    }
}

fn output_error(path: &Path) -> impl FnOnce(std::io::Error) -> Error + '_ {
    move |source| Error::Output {
        path: path.into(),
        source,
    }
}

/// Writes `rows` with a header to `dir/name`.
pub fn write_csv<T: Serialize>(dir: &Path, name: &str, rows: impl IntoIterator<Item = T>) -> Result<PathBuf> {
    let path = dir.join(name);
    let file = File::create(&path).map_err(output_error(&path))?;
    let mut w = csv::Writer::from_writer(BufWriter::new(file));
    for r in rows {
        w.serialize(r)?;
    }
    w.flush().map_err(output_error(&path))?;
    Ok(path)
}

#[derive(Debug, Serialize)]
pub struct SummaryRow {
    pub discipline: String,
    #[serde(rename = "N")]
    pub n: usize,
    pub lambda: Option<f64>,
    pub metric: &'static str,
    pub mean: f64,
    pub variance: Option<f64>,
    pub stderr: Option<f64>,
    pub replications: usize,
    pub horizon: f64,
    pub warmup: f64,
    pub seed0: u64,
}

/// Long-format summary rows: one per discipline and metric.
pub fn summary_rows(s: &MetricSummary, horizon: f64, warmup: f64, seed0: u64) -> Vec<SummaryRow> {
    let mut stats = vec![
        ("distinct", s.distinct),
        ("undelivered", s.undelivered),
        ("aoi", s.aoi),
    ];
    if let Some(sd) = s.slowdown {
        stats.push(("slowdown", sd));
    }
    let mut rows: Vec<SummaryRow> = stats
        .into_iter()
        .map(|(metric, st)| SummaryRow {
            discipline: s.discipline.to_string(),
            n: s.n,
            lambda: s.lambda,
            metric,
            mean: st.mean,
            variance: Some(st.variance),
            stderr: Some(st.stderr),
            replications: st.count,
            horizon,
            warmup,
            seed0,
        })
        .collect();
    if let Some(v) = s.sojourn_variance {
        rows.push(SummaryRow {
            discipline: s.discipline.to_string(),
            n: s.n,
            lambda: s.lambda,
            metric: "sojourn_variance",
            mean: v,
            variance: None,
            stderr: None,
            replications: s.distinct.count,
            horizon,
            warmup,
            seed0,
        });
    }
    rows
}

#[derive(Debug, Serialize)]
pub struct ProfileRow {
    pub discipline: String,
    #[serde(rename = "N")]
    pub n: usize,
    pub lambda: f64,
    pub x: f64,
    #[serde(rename = "R")]
    pub r: f64,
    pub stderr: f64,
    pub n_packets: u64,
}

pub fn profile_rows(m: &MndfResult, lambda: f64) -> impl Iterator<Item = ProfileRow> + '_ {
    m.profile.points.iter().map(move |p| ProfileRow {
        discipline: m.summary.discipline.to_string(),
        n: m.summary.n,
        lambda,
        x: p.x,
        r: p.r,
        stderr: p.stderr,
        n_packets: m.profile.n_packets,
    })
}

#[derive(Debug, Serialize)]
pub struct HistogramRow {
    pub discipline: String,
    #[serde(rename = "N")]
    pub n: usize,
    pub left: f64,
    pub right: f64,
    pub count: u64,
    pub density: f64,
}

pub fn histogram_rows(m: &MndfResult) -> impl Iterator<Item = HistogramRow> + '_ {
    let w = m.histogram.width;
    m.histogram.bins().map(move |(left, count, density)| HistogramRow {
        discipline: m.summary.discipline.to_string(),
        n: m.summary.n,
        left,
        right: left + w,
        count,
        density,
    })
}

#[derive(Debug, Serialize)]
pub struct PoissonRow {
    #[serde(rename = "N")]
    pub n: usize,
    pub lambda: f64,
    pub predicted: f64,
    pub psi_hat: f64,
    pub psi_stderr: f64,
    pub tv: f64,
    pub lag1: Option<f64>,
    pub slowdown: f64,
    pub slowdown_stderr: f64,
    pub slowdown_predicted: f64,
}

impl From<&ReshufflingReport> for PoissonRow {
    fn from(r: &ReshufflingReport) -> Self {
        Self {
            n: r.n,
            lambda: r.lambda,
            predicted: r.predicted,
            psi_hat: r.psi_hat,
            psi_stderr: r.psi_runs.stderr,
            tv: r.tv,
            lag1: r.lag1,
            slowdown: r.slowdown.mean,
            slowdown_stderr: r.slowdown.stderr,
            slowdown_predicted: r.slowdown_target(),
        }
    }
}

#[derive(Debug, Serialize)]
pub struct UsefulCountRow {
    #[serde(rename = "N")]
    pub n: usize,
    pub lambda: f64,
    pub k: usize,
    pub frequency: f64,
    pub poisson: f64,
}

pub fn useful_count_rows(r: &ReshufflingReport) -> Vec<UsefulCountRow> {
    let total = r.histogram.total().max(1) as f64;
    r.histogram
        .counts()
        .iter()
        .enumerate()
        .map(|(k, &c)| UsefulCountRow {
            n: r.n,
            lambda: r.lambda,
            k,
            frequency: c as f64 / total,
            poisson: dissem_core::metrics::poisson_pmf(k as u32, r.psi_hat),
        })
        .collect()
}

#[derive(Debug, Serialize)]
pub struct StageProfileRow {
    #[serde(rename = "N")]
    pub n: usize,
    pub lambda: f64,
    pub x: f64,
    pub phi: f64,
    pub predicted: f64,
}

pub fn stage_profile_rows(r: &ReshufflingReport) -> impl Iterator<Item = StageProfileRow> + '_ {
    r.stage_profile.iter().map(move |&(x, phi)| StageProfileRow {
        n: r.n,
        lambda: r.lambda,
        x,
        phi,
        predicted: r.predicted * x,
    })
}

#[derive(Debug, Serialize)]
pub struct ImpulseRow {
    pub discipline: String,
    pub x: f64,
    pub time: f64,
    pub stderr: f64,
}

/// Simulated curves followed by the limiting curve (`discipline = hydro`).
pub fn impulse_rows(r: &ImpulseReport) -> Vec<ImpulseRow> {
    let mut rows = vec![];
    for c in [&r.rs, &r.ru] {
        for k in 0..c.x.len() {
            let s = c.summary(k).expect("at least two replications");
            rows.push(ImpulseRow {
                discipline: c.discipline.to_string(),
                x: c.x[k],
                time: s.mean,
                stderr: s.stderr,
            });
        }
    }
    rows.extend(hydro_time_rows(&r.hydro, 200).into_iter().map(|(x, time)| ImpulseRow {
        discipline: "hydro".into(),
        x,
        time,
        stderr: 0.0,
    }));
    rows
}

/// `(x, time)` samples of the limiting impulse curve, with both ends of
/// the jump at `1/2`.
pub fn hydro_time_rows(s: &dissem_core::hydro::ImpulseSolution, points: usize) -> Vec<(f64, f64)> {
    let mut rows = vec![];
    for k in 0..=points {
        let x = k as f64 / points as f64;
        rows.push((x, s.time_to(x)));
        if 2 * k == points {
            rows.push((x, x + s.c));
        }
    }
    rows
}

#[derive(Debug, Serialize)]
pub struct InstabilityRow {
    pub discipline: String,
    pub time: f64,
    pub total_packets: f64,
    pub node_queue: f64,
}

pub fn instability_rows(r: &InstabilityReport) -> impl Iterator<Item = InstabilityRow> + '_ {
    (0..r.times.len()).map(move |k| InstabilityRow {
        discipline: r.discipline.to_string(),
        time: r.times[k],
        total_packets: r.total_packets[k],
        node_queue: r.node_queue[k],
    })
}

#[derive(Debug, Serialize)]
pub struct DensityRow {
    pub t: f64,
    pub x: f64,
    pub xi: f64,
}

/// Snapshots on `[0, 1]`, every `stride`-th cell.
pub fn density_rows(r: &HydroReport, stride: usize) -> Vec<DensityRow> {
    let mut rows = vec![];
    for (&t, g) in r.times.iter().zip(&r.snapshots) {
        let h = g.h();
        for (k, &xi) in g.unit_values().iter().enumerate().step_by(stride.max(1)) {
            rows.push(DensityRow {
                t,
                x: (k as f64 + 0.5) * h,
                xi,
            });
        }
    }
    rows
}

/// Provenance record. The only file carrying a timestamp.
#[derive(Debug, Serialize)]
pub struct Manifest<'a, C: Serialize> {
    pub tool: &'static str,
    pub version: &'static str,
    pub subcommand: &'a str,
    pub config: &'a C,
    pub files: Vec<String>,
    pub created_unix: u64,
}

pub fn write_manifest<C: Serialize>(dir: &Path, subcommand: &str, config: &C, files: &[PathBuf]) -> Result<PathBuf> {
    let m = Manifest {
        tool: env!("CARGO_PKG_NAME"),
        version: env!("CARGO_PKG_VERSION"),
        subcommand,
        config,
        files: files
            .iter()
            .filter_map(|p| p.file_name().map(|f| f.to_string_lossy().into_owned()))
            .collect(),
        created_unix: SystemTime::now()
            .duration_since(UNIX_EPOCH)
            .map(|d| d.as_secs())
            .unwrap_or(0),
    };
    let path = dir.join("manifest.json");
    let text = serde_json::to_string_pretty(&m)?;
    fs::write(&path, text + "\n").map_err(output_error(&path))?;
    Ok(path)
}

#[derive(Debug, Serialize)]
struct TraceLine {
    time: f64,
    kind: &'static str,
    node_or_link: Option<Vec<usize>>,
    packet_id: Option<u64>,
    stage_after: Option<u32>,
}

/// Observer writing one JSON object per event. The first write error is
/// kept and reported by [`TraceWriter::finish`].
#[derive(Debug)]
pub struct TraceWriter<W: Write> {
    out: W,
    error: Option<std::io::Error>,
}

impl<W: Write> TraceWriter<W> {
    pub fn new(out: W) -> Self {
        Self { out, error: None }
    }

    pub fn finish(mut self) -> std::io::Result<W> {
        if let Some(e) = self.error.take() {
            return Err(e);
        }
        self.out.flush()?;
        Ok(self.out)
    }

    fn line(&mut self, e: &Event) {
        if self.error.is_some() {
            return;
        }
        let (kind, node_or_link) = match e.kind {
            EventKind::Arrival { node, .. } => ("arrival", Some(vec![node.0])),
            EventKind::Epoch { from, to, .. } => ("epoch", Some(vec![from.0, to.0])),
            EventKind::Shuffled { .. } => ("shuffle", None),
        };
        let t = TraceLine {
            time: e.time,
            kind,
            node_or_link,
            packet_id: e.kind.packet().map(|p| p.0),
            stage_after: e.kind.stage_after(),
        };
        let r = serde_json::to_writer(&mut self.out, &t)
            .map_err(std::io::Error::from)
            .and_then(|_| self.out.write_all(b"\n"));
        if let Err(err) = r {
            self.error = Some(err);
        }
    }
}

impl<S: Occupancy + ?Sized, W: Write> Observer<S> for TraceWriter<W> {
    fn event(&mut self, e: &Event, _state: &S) {
        self.line(e);
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn network_round_trip() {
        let net = build_counterexample(0.05).unwrap();
        let f = NetworkFile::from_spec(&net);
        let text = serde_json::to_string(&f).unwrap();
        let back: NetworkFile = serde_json::from_str(&text).unwrap();
        assert_eq!(back, f);
        let again = back.to_spec().unwrap();
        assert_eq!(NetworkFile::from_spec(&again), f);
    }

    #[test]
    fn network_rejects_mismatch() {
        let f = NetworkFile {
            nodes: 3,
            arrival_rates: vec![0.1, 0.2],
            links: vec![],
        };
        assert!(f.to_spec().is_err());
    }

    #[test]
    fn unknown_network_name() {
        assert!(matches!(
            resolve_network("no-such-net", 3, 0.1, 0.05),
            Err(Error::UnknownNetwork(_))
        ));
    }

    #[test]
    fn trace_lines() {
        use dissem_core::engine::{PacketId, SystemState};
        let mut w = TraceWriter::new(Vec::new());
        let s = SystemState::empty(2);
        let e = Event {
            time: 0.5,
            kind: EventKind::Arrival {
                node: NodeId(1),
                packet: PacketId(7),
            },
        };
        Observer::<SystemState>::event(&mut w, &e, &s);
        let out = String::from_utf8(w.finish().unwrap()).unwrap();
        assert_eq!(
            out,
            "{\"time\":0.5,\"kind\":\"arrival\",\"node_or_link\":[1],\"packet_id\":7,\"stage_after\":1}\n"
        );
    }

    #[test]
    fn hydro_rows_include_jump() {
        let s = dissem_core::hydro::impulse_solution(5.0).unwrap();
        let rows = hydro_time_rows(&s, 4);
        assert_eq!(rows, vec![(0.0, 0.0), (0.25, 0.25), (0.5, 0.5), (0.5, 5.5), (0.75, 5.75), (1.0, 6.0)]);
    }
}
