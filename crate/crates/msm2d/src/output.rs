//! Trace serialization, summary statistics, and plot-ready data files.
//!
//! The evolution hands over an immutable [`Trace`]; this module writes it
//! as a CSV (`trace.csv`, canceled segments in `trace_canceled.csv`),
//! derives loop statistics from it, and emits two-column data files with
//! the applied field on the abscissa for the two standard hysteresis
//! plots (volume fraction and mean magnetization).

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use thiserror::Error;

use crate::config::FieldProtocol;
use crate::energy::EnergyModel;
use crate::evolution::{SampleRecord, Trace};

#[derive(Debug, Error)]
pub enum OutputError {
    #[error("writing {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> OutputError + '_ {
    move |source| OutputError::Io { path: path.display().to_string(), source }
}

/// Column header of `trace.csv` and `trace_canceled.csv`.
pub const TRACE_HEADER: &str = "i,t,Hx,Hy,vol_frac,mx_avg,my_avg,E_matrix,E_particle,\
                                E_zeeman,E_demag,E_anis,E_total,D_step,Diss_acc,est_lo,est_hi,backtracked";

/// Write one record as a CSV row; floats use the shortest representation
/// that round-trips exactly, so reloading reproduces every column bit for
/// bit.
fn write_row(w: &mut impl Write, model: &EnergyModel, r: &SampleRecord) -> std::io::Result<()> {
    let vf = model.volume_fraction(&r.state);
    let m = model.average_magnetization(&r.state);
    let b = &r.breakdown;
    writeln!(
        w,
        "{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{}",
        r.index,
        r.time,
        r.h.x,
        r.h.y,
        vf,
        m.x,
        m.y,
        b.matrix,
        b.particle,
        b.zeeman,
        b.demag,
        b.anisotropy,
        b.total,
        r.step_dissipation,
        r.accumulated_dissipation,
        r.estimate.lower,
        r.estimate.upper,
        u8::from(r.backtracked),
    )
}

fn write_csv(model: &EnergyModel, records: &[SampleRecord], path: &Path) -> Result<(), OutputError> {
    let mut w = BufWriter::new(File::create(path).map_err(io_err(path))?);
    writeln!(w, "{TRACE_HEADER}").map_err(io_err(path))?;
    for r in records {
        write_row(&mut w, model, r).map_err(io_err(path))?;
    }
    w.flush().map_err(io_err(path))
}

/// Write `trace.csv` (accepted samples) and, when any backtracking
/// episode archived work, `trace_canceled.csv` with the same schema.
pub fn write_trace(model: &EnergyModel, trace: &Trace, dir: &Path) -> Result<(), OutputError> {
    write_csv(model, &trace.samples, &dir.join("trace.csv"))?;
    if !trace.canceled.is_empty() {
        write_csv(model, &trace.canceled, &dir.join("trace_canceled.csv"))?;
    }
    Ok(())
}

/// Write the two plot files `volfrac_vs_H.dat` and `mx_vs_H.dat`
/// (signed field coordinate, then ordinate), ordered by step index so
/// the loop orientation survives.
pub fn emit_plot_data(
    model: &EnergyModel,
    trace: &Trace,
    protocol: &FieldProtocol,
    dir: &Path,
) -> Result<(), OutputError> {
    let path = dir.join("volfrac_vs_H.dat");
    let mut w = BufWriter::new(File::create(&path).map_err(io_err(&path))?);
    for r in &trace.samples {
        writeln!(w, "{} {}", protocol.abscissa(r.h), model.volume_fraction(&r.state))
            .map_err(io_err(&path))?;
    }
    w.flush().map_err(io_err(&path))?;

    let path = dir.join("mx_vs_H.dat");
    let mut w = BufWriter::new(File::create(&path).map_err(io_err(&path))?);
    for r in &trace.samples {
        writeln!(w, "{} {}", protocol.abscissa(r.h), model.average_magnetization(&r.state).x)
            .map_err(io_err(&path))?;
    }
    w.flush().map_err(io_err(&path))
}

/// Loop statistics of a completed run.
#[derive(Debug, Clone, PartialEq)]
pub struct SummaryStats {
    /// Field magnitude at which the volume fraction first leaves its
    /// initial value by more than 0.01; `None` when the transformation
    /// is blocked for the whole protocol.
    pub switching_field_up: Option<f64>,
    /// Spread of the volume fraction over the last closed field cycle.
    pub loop_amplitude: f64,
    /// Volume fraction at the first zero field after the initial leg.
    pub remanent_fraction: f64,
    /// Difference of the principal macroscopic strains at peak field;
    /// present only when the macroscopic strain was free to evolve.
    pub spontaneous_strain: Option<f64>,
    /// The protocol contains no closed cycle; loop statistics were
    /// computed over the whole trace instead.
    pub partial: bool,
}

impl SummaryStats {
    /// The transformation never moved past the detection threshold.
    pub fn blocked(&self) -> bool {
        self.switching_field_up.is_none()
    }
}

/// Spread of a volume-fraction series.
fn spread(vf: &[f64]) -> f64 {
    let lo = vf.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = vf.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if hi >= lo {
        hi - lo
    } else {
        0.0
    }
}

/// Compute loop statistics from an accepted trace.
///
/// The switching threshold on the volume fraction is 0.01; loop
/// statistics use the protocol's trailing closed cycle when it has one,
/// otherwise the whole trace with the `partial` flag set.
pub fn summarize(model: &EnergyModel, trace: &Trace, protocol: &FieldProtocol) -> SummaryStats {
    let vf: Vec<f64> =
        trace.samples.iter().map(|r| model.volume_fraction(&r.state)).collect();
    let vf0 = vf.first().copied().unwrap_or(0.5);

    let switching = trace
        .samples
        .iter()
        .zip(&vf)
        .find(|(_, &v)| (v - vf0).abs() > 0.01)
        .map(|(r, _)| r.h.norm());

    // Loop statistics over the trailing closed field cycle.
    let (cycle_vf, partial) = match protocol.cycle_len {
        Some(len) if vf.len() > len => (&vf[vf.len() - len - 1..], false),
        _ => (&vf[..], true),
    };
    let loop_amplitude = spread(cycle_vf);

    // Remanence: the first of the lowest-field samples after the first leg.
    let first_leg_end = protocol.leg_ends.first().copied().unwrap_or(0);
    let mut remanent_fraction = vf0;
    let mut lowest = f64::INFINITY;
    for (r, &v) in trace.samples.iter().zip(&vf).skip(first_leg_end + 1) {
        if r.h.norm() < lowest {
            lowest = r.h.norm();
            remanent_fraction = v;
        }
    }

    // Principal-strain difference at the strongest field reached.
    let spontaneous_strain = trace
        .samples
        .iter()
        .max_by(|a, b| a.h.norm().total_cmp(&b.h.norm()))
        .filter(|r| r.state.macro_strain != nalgebra::Matrix2::zeros())
        .map(|r| {
            let a = 0.5 * (r.state.macro_strain + r.state.macro_strain.transpose());
            let eig = a.symmetric_eigenvalues();
            eig.max() - eig.min()
        });

    SummaryStats {
        switching_field_up: switching,
        loop_amplitude,
        remanent_fraction,
        spontaneous_strain,
        partial,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::SimulationConfig;
    use crate::evolution::{EstimateInterval, StopReason};
    use crate::geometry::State;
    use nalgebra::Vector2;
    use std::fs;

    fn test_model() -> EnergyModel {
        let mut config = SimulationConfig::default();
        config.solver.n_boundary_segments = 16;
        EnergyModel::new(config).unwrap()
    }

    /// A record with the given offset state and field; energies are
    /// arbitrary full-precision doubles to exercise the serialization.
    fn record(model: &EnergyModel, i: usize, hx: f64, offset: f64) -> SampleRecord {
        let mut state = State::initial(&model.config);
        state.offset = offset;
        let breakdown = crate::energy::EnergyBreakdown {
            matrix: 0.1 + i as f64 / 3.0,
            particle: 1.0 / 7.0,
            zeeman: -hx * 0.31,
            demag: 0.01 * (i as f64).sin(),
            anisotropy: 0.002,
            total: 0.1 + i as f64 / 3.0 + 1.0 / 7.0 - hx * 0.31,
        };
        SampleRecord {
            index: i,
            time: i as f64,
            h: Vector2::new(hx, 0.0),
            state,
            breakdown,
            step_dissipation: 0.001 * i as f64,
            accumulated_dissipation: 0.001 * (i * i) as f64,
            estimate: EstimateInterval {
                lower: -0.1,
                upper: 0.1,
                actual: 0.0,
                tol: 1e-3,
            },
            comparison_bound: 0.0,
            backtracked: i == 3,
            seed_id: 0,
            stop: StopReason::Converged,
            iterations: 7,
        }
    }

    fn trace_of(records: Vec<SampleRecord>) -> Trace {
        Trace { samples: records, canceled: Vec::new(), episodes: 0, budget_exhausted: false }
    }

    #[test]
    fn empty_trace_writes_a_header_only_file() {
        let model = test_model();
        let dir = tempfile::tempdir().unwrap();
        write_trace(&model, &trace_of(Vec::new()), dir.path()).unwrap();
        let text = fs::read_to_string(dir.path().join("trace.csv")).unwrap();
        assert_eq!(text.lines().count(), 1);
        assert_eq!(text.lines().next().unwrap(), TRACE_HEADER);
        assert!(!dir.path().join("trace_canceled.csv").exists());
    }

    #[test]
    fn row_count_matches_the_record_count() {
        let model = test_model();
        let records: Vec<_> =
            (0..7).map(|i| record(&model, i, 0.2 * i as f64, 0.03 * i as f64)).collect();
        let dir = tempfile::tempdir().unwrap();
        write_trace(&model, &trace_of(records), dir.path()).unwrap();
        let text = fs::read_to_string(dir.path().join("trace.csv")).unwrap();
        assert_eq!(text.lines().count(), 1 + 7);
    }

    #[test]
    fn reloading_the_csv_reproduces_the_volume_fraction_bit_exactly() {
        let model = test_model();
        // Awkward offsets so the volume fractions carry full mantissas.
        let records: Vec<_> = (0..9)
            .map(|i| record(&model, i, 0.1 * i as f64, 0.0371 * (i as f64 + 0.1).sin()))
            .collect();
        let expected: Vec<f64> =
            records.iter().map(|r| model.volume_fraction(&r.state)).collect();
        let dir = tempfile::tempdir().unwrap();
        write_trace(&model, &trace_of(records), dir.path()).unwrap();
        let text = fs::read_to_string(dir.path().join("trace.csv")).unwrap();
        let reloaded: Vec<f64> = text
            .lines()
            .skip(1)
            .map(|line| line.split(',').nth(4).unwrap().parse::<f64>().unwrap())
            .collect();
        assert_eq!(reloaded.len(), expected.len());
        for (a, b) in reloaded.iter().zip(&expected) {
            assert_eq!(a.to_bits(), b.to_bits());
        }
    }

    #[test]
    fn canceled_records_get_their_own_file() {
        let model = test_model();
        let mut trace = trace_of(vec![record(&model, 0, 0.0, 0.0)]);
        trace.canceled = vec![record(&model, 1, 0.2, 0.01), record(&model, 2, 0.4, 0.02)];
        let dir = tempfile::tempdir().unwrap();
        write_trace(&model, &trace, dir.path()).unwrap();
        let text = fs::read_to_string(dir.path().join("trace_canceled.csv")).unwrap();
        assert_eq!(text.lines().count(), 1 + 2);
    }

    #[test]
    fn plot_files_have_a_monotone_first_leg_and_bounded_magnetization() {
        let model = test_model();
        let mut config = model.config.clone();
        config.protocol.steps_per_leg = 3;
        let protocol = config.build_protocol();
        let records: Vec<_> = (0..protocol.len())
            .map(|i| {
                let mut r = record(&model, i, 0.0, 0.02 * i as f64);
                r.h = protocol.h(i);
                r
            })
            .collect();
        let dir = tempfile::tempdir().unwrap();
        emit_plot_data(&model, &trace_of(records), &protocol, dir.path()).unwrap();

        let vf_text = fs::read_to_string(dir.path().join("volfrac_vs_H.dat")).unwrap();
        let rows: Vec<Vec<f64>> = vf_text
            .lines()
            .map(|l| l.split_whitespace().map(|v| v.parse().unwrap()).collect())
            .collect();
        assert_eq!(rows.len(), protocol.len());
        for pair in rows[..=protocol.leg_ends[0]].windows(2) {
            assert!(pair[1][0] >= pair[0][0], "first-leg abscissa not monotone");
        }

        let mx_text = fs::read_to_string(dir.path().join("mx_vs_H.dat")).unwrap();
        let mut mx_rows = 0;
        for line in mx_text.lines() {
            let mx: f64 = line.split_whitespace().nth(1).unwrap().parse().unwrap();
            assert!((-1.0..=1.0).contains(&mx), "mean magnetization {mx} out of range");
            mx_rows += 1;
        }
        assert_eq!(mx_rows, protocol.len());
    }

    #[test]
    fn summary_detects_switching_remanence_and_loop_amplitude() {
        let model = test_model();
        let mut config = model.config.clone();
        config.protocol.steps_per_leg = 2;
        let protocol = config.build_protocol();
        assert_eq!(protocol.len(), 11);
        // Offsets chosen so the volume fraction rises on the first leg,
        // keeps a remanent shift at the first field zero, and cycles.
        let offsets = [0.0, 0.0, 0.12, 0.12, 0.08, -0.05, -0.12, -0.08, 0.02, 0.1, 0.12];
        let records: Vec<_> = offsets
            .iter()
            .enumerate()
            .map(|(i, &off)| {
                let mut r = record(&model, i, 0.0, off);
                r.h = protocol.h(i);
                r
            })
            .collect();
        let vf: Vec<f64> =
            records.iter().map(|r| model.volume_fraction(&r.state)).collect();
        let trace = trace_of(records);
        let stats = summarize(&model, &trace, &protocol);

        // First deviation beyond 0.01 happens at sample 2 (offset 0.12).
        assert!(!stats.blocked());
        assert_eq!(stats.switching_field_up.unwrap(), protocol.h(2).norm());
        // Remanence is read at the first zero field after leg 0: sample 4.
        assert_eq!(stats.remanent_fraction, vf[4]);
        // The closed cycle spans the last 8 steps (samples 2..=10).
        let cycle = &vf[2..];
        let expect = cycle.iter().copied().fold(f64::NEG_INFINITY, f64::max)
            - cycle.iter().copied().fold(f64::INFINITY, f64::min);
        assert_eq!(stats.loop_amplitude, expect);
        assert!(!stats.partial);
        assert!(stats.spontaneous_strain.is_none());
        // Same trace, same stats.
        assert_eq!(stats, summarize(&model, &trace, &protocol));
    }

    #[test]
    fn flat_runs_are_reported_blocked_and_short_protocols_partial() {
        let model = test_model();
        let mut config = model.config.clone();
        config.protocol.kind = crate::config::ProtocolKind::Custom;
        config.protocol.samples =
            Some(vec![(0.0, 0.0, 0.0), (1.0, 0.5, 0.0), (2.0, 1.0, 0.0)]);
        let protocol = config.build_protocol();
        let records: Vec<_> = (0..protocol.len())
            .map(|i| {
                let mut r = record(&model, i, 0.0, 1e-5 * i as f64);
                r.h = protocol.h(i);
                r
            })
            .collect();
        let stats = summarize(&model, &trace_of(records), &protocol);
        assert!(stats.blocked());
        assert!(stats.partial);
        assert!(stats.loop_amplitude < 1e-3);
    }

    #[test]
    fn spontaneous_strain_reads_the_principal_strain_difference_at_peak() {
        let model = test_model();
        let mut config = model.config.clone();
        config.protocol.steps_per_leg = 1;
        let protocol = config.build_protocol();
        let records: Vec<_> = (0..protocol.len())
            .map(|i| {
                let mut r = record(&model, i, 0.0, 0.0);
                r.h = protocol.h(i);
                if protocol.h(i).norm() == 1.0 {
                    r.state.macro_strain =
                        nalgebra::Matrix2::new(0.013, 0.0, 0.0, -0.013);
                }
                r
            })
            .collect();
        let stats = summarize(&model, &trace_of(records), &protocol);
        let strain = stats.spontaneous_strain.unwrap();
        assert!((strain - 0.026).abs() < 1e-12, "principal strain difference {strain}");
    }
}
