use std::io::{Read, Write};

use nalgebra::{Quaternion, UnitQuaternion, Vector3};
use thiserror::Error;

use super::{Event, EventKind, EventLog};
use crate::filter::QuadrupedState;
use crate::se3::{Covariance6, Pose};

#[derive(Debug, Error)]
pub enum EventLogError {
    #[error("event log row {row}: {message}")]
    Row { row: usize, message: String },
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

const POSE_FIELDS: [&str; 7] = ["x", "y", "z", "qw", "qx", "qy", "qz"];
const COV_FIELDS: [&str; 6] = ["x", "y", "z", "roll", "pitch", "yaw"];
const FEET: [&str; 4] = ["lf", "rf", "lh", "rh"];
const COLUMNS: usize = 2 + 7 + 7 + 6 + 12 + 4;

fn header() -> Vec<String> {
    let mut h = vec!["k".to_string(), "type".to_string()];
    h.extend(POSE_FIELDS.iter().map(|f| format!("gt_{f}")));
    h.extend(POSE_FIELDS.iter().map(|f| format!("odom_{f}")));
    h.extend(COV_FIELDS.iter().map(|f| format!("cov_{f}")));
    for foot in FEET {
        h.extend(["x", "y", "z"].iter().map(|a| format!("{foot}_{a}")));
    }
    h.extend(FEET.iter().map(|f| format!("contact_{f}")));
    h
}

fn pose_array(p: &Pose) -> [f64; 7] {
    let q = p.orientation.quaternion();
    [p.position.x, p.position.y, p.position.z, q.w, q.i, q.j, q.k]
}

/// Write `log` as CSV. Floats use the shortest representation that reads back exactly.
pub fn write_event_log<W: Write>(sink: W, log: &EventLog) -> Result<(), EventLogError> {
    let mut writer = csv::Writer::from_writer(sink);
    writer.write_record(header())?;
    for e in log {
        let m = &e.measured;
        let mut row = vec![e.k.to_string(), e.kind.as_str().to_string()];
        row.extend(pose_array(&e.ground_truth).iter().map(f64::to_string));
        row.extend(pose_array(&m.odom_pose).iter().map(f64::to_string));
        row.extend(m.odom_cov.diagonal().iter().map(f64::to_string));
        row.extend(m.foot_in_base.iter().flat_map(|f| f.iter().map(f64::to_string).collect::<Vec<_>>()));
        row.extend(m.contact.iter().map(|c| if *c { "1" } else { "0" }.to_string()));
        writer.write_record(&row)?;
    }
    writer.flush().map_err(csv::Error::from)?;
    Ok(())
}

/// Read a log written by [`write_event_log`]; timestamps are `k * phase_duration`.
pub fn read_event_log<R: Read>(source: R, phase_duration: f64) -> Result<EventLog, EventLogError> {
    let mut reader = csv::Reader::from_reader(source);
    let mut log = Vec::new();
    for (i, record) in reader.records().enumerate() {
        let row = i + 1;
        let bad = |message: String| EventLogError::Row { row, message };
        let record = record?;
        if record.len() != COLUMNS {
            return Err(bad(format!("expected {COLUMNS} columns, found {}", record.len())));
        }
        let k: usize = record[0].trim().parse().map_err(|_| bad(format!("invalid step index {:?}", &record[0])))?;
        let kind = match record[1].trim() {
            "walk" => EventKind::Walk,
            "probe" => EventKind::Probe,
            other => return Err(bad(format!("unknown event type {other:?}"))),
        };
        let values = (2..2 + 7 + 7 + 6 + 12)
            .map(|c| {
                let v: f64 = record[c].trim().parse().map_err(|_| bad(format!("column {c}: invalid number {:?}", &record[c])))?;
                if v.is_finite() {
                    Ok(v)
                } else {
                    Err(bad(format!("column {c}: value is not finite")))
                }
            })
            .collect::<Result<Vec<f64>, _>>()?;
        let pose = |v: &[f64]| -> Result<Pose, EventLogError> {
            let q = Quaternion::new(v[3], v[4], v[5], v[6]);
            if (q.norm() - 1.0).abs() > 1e-9 {
                return Err(bad(format!("quaternion norm {} is not 1", q.norm())));
            }
            // keep stored values bit-exact rather than renormalizing
            Ok(Pose::new(Vector3::new(v[0], v[1], v[2]), UnitQuaternion::new_unchecked(q)))
        };
        let ground_truth = pose(&values[0..7])?;
        let odom_pose = pose(&values[7..14])?;
        let mut diag = [0.0; 6];
        diag.copy_from_slice(&values[14..20]);
        let odom_cov = Covariance6::from_diagonal(diag).map_err(|e| bad(format!("covariance: {e}")))?;
        let foot_in_base = [0, 1, 2, 3].map(|f| Vector3::new(values[20 + 3 * f], values[21 + 3 * f], values[22 + 3 * f]));
        let mut contact = [false; 4];
        for (f, c) in contact.iter_mut().enumerate() {
            *c = match record[COLUMNS - 4 + f].trim() {
                "1" => true,
                "0" => false,
                other => return Err(bad(format!("contact flag must be 0 or 1, found {other:?}"))),
            };
        }
        log.push(Event {
            k,
            kind,
            ground_truth,
            measured: QuadrupedState { odom_pose, odom_cov, foot_in_base, contact, timestamp: k as f64 * phase_duration },
        });
    }
    Ok(log)
}
