//! SVG snapshots of the world.
//!
//! World coordinates map onto a square canvas of side `S` pixels with
//! `px = (x + h) * S / (2h)` and `py = (h - y) * S / (2h)`, where `h` is the
//! world half extent, so the world centre lands on the canvas centre and
//! `+y` points up.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geom::Vec2;
use crate::scenario::{EpisodeTrace, RoleAssignment};
use crate::world::WorldState;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Palette {
    pub vip: String,
    pub bodyguard: String,
    pub bystander: String,
    pub landmark: String,
    pub goal: String,
    pub background: String,
}

impl Default for Palette {
    fn default() -> Self {
        Palette {
            vip: "brown".into(),
            bodyguard: "blue".into(),
            bystander: "red".into(),
            landmark: "gray".into(),
            goal: "green".into(),
            background: "white".into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RenderStyle {
    pub canvas_size: u32,
    pub world_half_extent: f64,
    pub palette: Palette,
}

impl Default for RenderStyle {
    fn default() -> Self {
        RenderStyle {
            canvas_size: 600,
            world_half_extent: 1.5,
            palette: Palette::default(),
        }
    }
}

impl RenderStyle {
    pub fn to_canvas(&self, p: Vec2) -> (f64, f64) {
        let h = self.world_half_extent;
        let k = self.canvas_size as f64 / (2.0 * h);
        ((p.x + h) * k, (h - p.y) * k)
    }

    fn scale(&self) -> f64 {
        self.canvas_size as f64 / (2.0 * self.world_half_extent)
    }
}

fn circle(doc: &mut String, class: &str, c: (f64, f64), r: f64, fill: &str) {
    let _ = writeln!(
        doc,
        r#"<circle class="{class}" cx="{:.3}" cy="{:.3}" r="{:.3}" fill="{fill}"/>"#,
        c.0, c.1, r
    );
}

/// One SVG document with a circle per landmark and per agent.
pub fn render_frame(state: &WorldState, roles: &RoleAssignment, style: &RenderStyle) -> String {
    let s = style.canvas_size;
    let pal = &style.palette;
    let mut doc = String::new();
    doc.push_str("<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n");
    let _ = writeln!(
        doc,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{s}" height="{s}" viewBox="0 0 {s} {s}">"#
    );
    let _ = writeln!(doc, r#"<rect width="{s}" height="{s}" fill="{}"/>"#, pal.background);
    for (j, l) in state.landmarks.iter().enumerate() {
        let (class, fill) = if j == roles.vip_goal_landmark {
            ("goal", &pal.goal)
        } else {
            ("landmark", &pal.landmark)
        };
        circle(&mut doc, class, style.to_canvas(l.position), l.radius * style.scale(), fill);
    }
    for (i, a) in state.agents.iter().enumerate() {
        let (class, fill) = if i == roles.vip_index {
            ("vip", &pal.vip)
        } else if roles.bodyguard_indices.contains(&i) {
            ("bodyguard", &pal.bodyguard)
        } else {
            ("bystander", &pal.bystander)
        };
        circle(&mut doc, class, style.to_canvas(a.position), a.radius * style.scale(), fill);
    }
    let _ = writeln!(
        doc,
        r#"<text x="8" y="20" font-family="monospace" font-size="14">step {}</text>"#,
        state.step_index
    );
    doc.push_str("</svg>\n");
    doc
}

/// Writes `frame_NNNN.svg` for every `stride`-th record into `out_dir`.
pub fn render_trajectory(
    trace: &EpisodeTrace,
    style: &RenderStyle,
    stride: usize,
    out_dir: &Path,
) -> Result<Vec<PathBuf>> {
    if stride == 0 {
        return Err(Error::contract("frame stride must be >= 1"));
    }
    std::fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    trace
        .records
        .iter()
        .step_by(stride)
        .map(|r| {
            let path = out_dir.join(format!("frame_{:04}.svg", r.state.step_index));
            std::fs::write(&path, render_frame(&r.state, &trace.roles, style))
                .map_err(|e| Error::io(&path, e))?;
            Ok(path)
        })
        .collect()
}
