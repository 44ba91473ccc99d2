use std::io::Write;

use serde::{Deserialize, Serialize};

use super::Particle;

/// One row of the per-step particle dump.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ParticleRow {
    pub step: usize,
    pub particle_id: usize,
    pub x: f64,
    pub y: f64,
    pub z: f64,
    pub yaw: f64,
    pub weight: f64,
    pub parent: usize,
}

/// Append `particles` as CSV rows `step, particle_id, x, y, z, yaw, weight, parent`.
pub fn write_particle_dump<W: Write>(sink: W, step: usize, particles: &[Particle], header: bool) -> csv::Result<()> {
    let mut writer = csv::WriterBuilder::new().has_headers(header).from_writer(sink);
    for (i, p) in particles.iter().enumerate() {
        writer.serialize(ParticleRow {
            step,
            particle_id: i,
            x: p.pose.position.x,
            y: p.pose.position.y,
            z: p.pose.position.z,
            yaw: p.pose.yaw(),
            weight: p.weight,
            parent: p.parent,
        })?;
    }
    writer.flush()?;
    Ok(())
}
