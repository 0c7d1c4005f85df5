//! Machine-readable output: JSON documents with a schema version, and TSV.
//!
//! Computed reals are written with 17 significant digits, so they parse back to
//! the same `f64`. Non-finite values become `null` in JSON and `NA` in TSV.

use serde::ser::{SerializeSeq, Serializer};
use serde::Serialize;
use serde_json::value::RawValue;

use crate::sim::SimulationReport;

pub const SCHEMA_VERSION: u32 = 1;

/// `x` with 17 significant digits, or `None` when not finite.
pub fn format_real(x: f64) -> Option<String> {
    x.is_finite().then(|| format!("{x:.16e}"))
}

pub fn real<S: Serializer>(x: &f64, s: S) -> Result<S::Ok, S::Error> {
    match format_real(*x) {
        Some(text) => RawValue::from_string(text)
            .map_err(serde::ser::Error::custom)?
            .serialize(s),
        None => s.serialize_none(),
    }
}

pub fn real_opt<S: Serializer>(x: &Option<f64>, s: S) -> Result<S::Ok, S::Error> {
    match x {
        Some(x) => real(x, s),
        None => s.serialize_none(),
    }
}

pub fn real_vec<S: Serializer>(xs: &[f64], s: S) -> Result<S::Ok, S::Error> {
    struct Real(f64);
    impl Serialize for Real {
        fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
            real(&self.0, s)
        }
    }
    let mut seq = s.serialize_seq(Some(xs.len()))?;
    for &x in xs {
        seq.serialize_element(&Real(x))?;
    }
    seq.end()
}

/// Pretty JSON with a trailing newline. Top-level documents carry a
/// `schema_version` field of their own.
pub fn to_json<T: Serialize>(doc: &T) -> String {
    let mut text = serde_json::to_string_pretty(doc).expect("report types serialize infallibly");
    text.push('\n');
    text
}

#[derive(Serialize)]
struct Reports<'a> {
    schema_version: u32,
    reports: &'a [SimulationReport],
}

pub fn simulation_json(reports: &[SimulationReport]) -> String {
    to_json(&Reports {
        schema_version: SCHEMA_VERSION,
        reports,
    })
}

pub const TSV_HEADER: &str = "d\trho_or_spec\tmethod\talpha\tfdr_direct\tse_direct\tfdr_loo\tse_loo\tpower\treps\tseed";

fn tsv_real(x: f64) -> String {
    format_real(x).unwrap_or_else(|| "NA".to_string())
}

/// One row per scenario under [`TSV_HEADER`].
pub fn simulation_tsv(reports: &[SimulationReport]) -> String {
    let mut out = String::from(TSV_HEADER);
    out.push('\n');
    for r in reports {
        let g = &r.digest;
        let power = r.power.map_or_else(|| "NA".to_string(), |p| tsv_real(p.mean));
        let row = [
            g.dimension.to_string(),
            g.structure.clone(),
            g.method.clone(),
            tsv_real(g.alpha),
            tsv_real(r.direct.mean_fdp),
            tsv_real(r.direct.std_error),
            tsv_real(r.leave_one_out.mean_fdp),
            tsv_real(r.leave_one_out.std_error),
            power,
            g.replications.to_string(),
            g.seed.to_string(),
        ];
        out.push_str(&row.join("\t"));
        out.push('\n');
    }
    out
}

/// Human-readable summary with wall times, for stderr.
pub fn footer(reports: &[SimulationReport]) -> String {
    let total: f64 = reports.iter().map(|r| r.wall_time.as_secs_f64()).sum();
    let failures: u64 = reports.iter().map(|r| r.failures).sum();
    let invalid = reports.iter().filter(|r| !r.valid).count();
    format!(
        "# {} scenario(s), {failures} failed replication(s), {invalid} invalid run(s), wall time {total:.2} s",
        reports.len()
    )
}
