//! CSV and JSON output. Every number is written with 17 significant digits so
//! files read back bit-exactly.

use std::fs;
use std::path::Path;

use rollscape_core::avgflow::AvgTrajectory;
use rollscape_core::continuation::{BranchPoint, CollapseTable, Fold};
use rollscape_core::model::hamiltonian;
use rollscape_core::pulse::PulseSolution;
use rollscape_core::rolls::{FloquetData, RollFamily};
use rollscape_core::svf::SVFGrid;
use serde::Serialize;

use crate::error::{CliError, CliResult};

/// Coefficients `a_0..a_8` exported per roll.
pub const ROLL_CSV_COEFFS: usize = 9;

pub fn num(x: f64) -> String {
    if x.is_nan() {
        "NaN".into()
    } else if x.is_infinite() {
        if x > 0.0 { "inf" } else { "-inf" }.into()
    } else {
        format!("{x:.16e}")
    }
}

pub fn opt(x: Option<f64>) -> String {
    x.map(num).unwrap_or_default()
}

pub fn parse_num(s: &str) -> CliResult<f64> {
    s.trim()
        .parse::<f64>()
        .map_err(|e| CliError::Format(format!("bad number {s:?}: {e}")))
}

fn writer(path: &Path) -> CliResult<csv::Writer<fs::File>> {
    let file = fs::File::create(path).map_err(|e| CliError::io(path, e))?;
    Ok(csv::Writer::from_writer(file))
}

fn write_rows<I>(path: &Path, header: &[&str], rows: I) -> CliResult<()>
where
    I: IntoIterator<Item = Vec<String>>,
{
    let mut w = writer(path)?;
    w.write_record(header)?;
    for row in rows {
        w.write_record(&row)?;
    }
    w.flush().map_err(|e| CliError::io(path, e))
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> CliResult<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text).map_err(|e| CliError::io(path, e))
}

pub fn write_text(path: &Path, text: &str) -> CliResult<()> {
    fs::write(path, text).map_err(|e| CliError::io(path, e))
}

/// Columns `mu, h, p, alpha, a_0..a_8, residual`; unsolved nodes have empty fields.
pub fn write_roll_family(
    path: &Path,
    family: &RollFamily,
    floquet: &[Option<FloquetData>],
) -> CliResult<()> {
    let mut header = vec!["mu".to_string(), "h".into(), "p".into(), "alpha".into()];
    header.extend((0..ROLL_CSV_COEFFS).map(|k| format!("a_{k}")));
    header.push("residual".into());
    let header: Vec<&str> = header.iter().map(String::as_str).collect();
    let nh = family.h_values.len();
    let rows = family.nodes.iter().enumerate().map(|(idx, node)| {
        let (mu, h) = (family.mu_values[idx / nh], family.h_values[idx % nh]);
        let mut row = vec![num(mu), num(h)];
        match node {
            Some(r) => {
                row.push(num(r.period));
                row.push(opt(floquet
                    .get(idx)
                    .and_then(|f| f.as_ref())
                    .map(|f| f.alpha)));
                row.extend((0..ROLL_CSV_COEFFS).map(|k| opt(r.cosine_coeffs.get(k).copied())));
                row.push(num(r.residual_norm));
            }
            None => row.extend(std::iter::repeat_n(String::new(), ROLL_CSV_COEFFS + 3)),
        }
        row
    });
    write_rows(path, &header, rows)
}

/// Long format `mu, h, S, E, p, residual`.
pub fn write_svf_grid(path: &Path, grid: &SVFGrid) -> CliResult<()> {
    let nh = grid.h_values.len();
    let rows = (0..grid.s.len()).map(|idx| {
        vec![
            num(grid.mu_values[idx / nh]),
            num(grid.h_values[idx % nh]),
            opt(grid.s[idx]),
            opt(grid.e[idx]),
            opt(grid.p[idx]),
            opt(grid.identity_residual[idx]),
        ]
    });
    write_rows(path, &["mu", "h", "S", "E", "p", "residual"], rows)
}

pub fn write_trajectory(path: &Path, t: &AvgTrajectory) -> CliResult<()> {
    let rows = t
        .x_samples
        .iter()
        .zip(&t.h_samples)
        .map(|(x, h)| vec![num(*x), num(*h)]);
    write_rows(path, &["x", "h"], rows)
}

/// Columns `r, u1, u2, u3, u4, H`.
pub fn write_profile(path: &Path, p: &PulseSolution) -> CliResult<()> {
    let rows = p.mesh.iter().zip(&p.profile).map(|(r, u)| {
        let mut row = vec![num(*r)];
        row.extend(u.0.iter().map(|v| num(*v)));
        row.push(num(hamiltonian(u, &p.params)));
        row
    });
    write_rows(path, &["r", "u1", "u2", "u3", "u4", "H"], rows)
}

pub const BRANCH_HEADER: [&str; 6] = ["s", "mu", "measure", "plateau", "h_center", "fold"];

pub fn write_branch(path: &Path, points: &[BranchPoint]) -> CliResult<()> {
    let rows = points.iter().map(|p| {
        vec![
            num(p.arc_s),
            num(p.mu),
            num(p.measure),
            num(p.plateau),
            num(p.h_at_center),
            u8::from(p.fold).to_string(),
        ]
    });
    write_rows(path, &BRANCH_HEADER, rows)
}

pub fn read_branch(path: &Path) -> CliResult<Vec<BranchPoint>> {
    let mut r = csv::Reader::from_path(path)?;
    let header: Vec<String> = r.headers()?.iter().map(str::to_string).collect();
    if header != BRANCH_HEADER {
        return Err(CliError::Format(format!(
            "{}: unexpected header {header:?}",
            path.display()
        )));
    }
    r.records()
        .map(|rec| {
            let rec = rec?;
            Ok(BranchPoint {
                arc_s: parse_num(&rec[0])?,
                mu: parse_num(&rec[1])?,
                measure: parse_num(&rec[2])?,
                plateau: parse_num(&rec[3])?,
                h_at_center: parse_num(&rec[4])?,
                fold: match &rec[5] {
                    "1" => true,
                    "0" => false,
                    other => return Err(CliError::Format(format!("bad fold flag {other:?}"))),
                },
            })
        })
        .collect()
}

pub fn write_folds(path: &Path, folds: &[Fold]) -> CliResult<()> {
    let rows = folds.iter().map(|f| {
        vec![
            format!("{:?}", f.kind).to_lowercase(),
            num(f.arc_s),
            num(f.mu),
            num(f.measure),
            num(f.plateau),
            num(f.dmu_ds),
        ]
    });
    write_rows(
        path,
        &["kind", "s", "mu", "measure", "plateau", "dmu_ds"],
        rows,
    )
}

pub fn write_collapse(path: &Path, t: &CollapseTable) -> CliResult<()> {
    let rows = t.pairs.iter().enumerate().map(|(k, p)| {
        vec![
            k.to_string(),
            num(p.width),
            num(p.midpoint),
            num(p.plateau),
            num(p.distance),
        ]
    });
    write_rows(
        path,
        &["pair", "width", "midpoint", "plateau", "distance"],
        rows,
    )
}

pub fn write_table(path: &Path, header: &[&str], rows: Vec<Vec<String>>) -> CliResult<()> {
    write_rows(path, header, rows)
}
