//! Layer mosaic: one row per layer (layer 0 on top), one square per head,
//! each square split into a 3×3 grid with one sub-cell per role. Heads are
//! ordered within a row by how many of the nine roles they carry.

use std::fmt::Write as _;

use super::ReportError;
use crate::analysis::{sorted_layer, RoleAssignmentMatrix};
use crate::score::HeadCoord;
use crate::sieve::RoleId;

#[derive(Debug, Clone, PartialEq)]
pub struct MosaicStyle {
    /// Side of one head square in px; sub-cells are a third of it.
    pub cell_px: u32,
    pub gap_px: u32,
    pub margin_px: u32,
    pub label_px: u32,
    pub background: String,
    /// Fill of unassigned sub-cells.
    pub gray: String,
    /// One colour per role, in sub-cell order.
    pub palette: Vec<String>,
    pub legend: bool,
}

impl Default for MosaicStyle {
    fn default() -> Self {
        MosaicStyle {
            cell_px: 30,
            gap_px: 4,
            margin_px: 10,
            label_px: 36,
            background: "#ffffff".into(),
            gray: "#d9d9d9".into(),
            palette: [
                "#1f77b4", "#aec7e8", "#2ca02c", "#ff7f0e", "#ffbb78", "#d62728", "#9467bd",
                "#8c564b", "#e377c2",
            ]
            .iter()
            .map(|s| s.to_string())
            .collect(),
            legend: true,
        }
    }
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
        .replace('"', "&quot;")
}

/// Renders `m` as an SVG mosaic over exactly nine roles.
///
/// Sub-cell `i` (row-major in the 3×3 grid) shows `roles[i]`; roles the
/// matrix never tested stay gray.
pub fn emit_mosaic_svg(
    m: &RoleAssignmentMatrix,
    roles: &[RoleId],
    style: &MosaicStyle,
) -> Result<String, ReportError> {
    if roles.len() != 9 {
        return Err(ReportError::RoleSetMismatch(format!(
            "mosaic needs 9 roles, got {}",
            roles.len()
        )));
    }
    if style.palette.len() < roles.len() {
        return Err(ReportError::RoleSetMismatch(format!(
            "palette has {} colours for {} roles",
            style.palette.len(),
            roles.len()
        )));
    }
    for (i, r) in roles.iter().enumerate() {
        if roles[..i].contains(r) {
            return Err(ReportError::RoleSetMismatch(format!("duplicate role {r}")));
        }
    }

    let cell = style.cell_px;
    let sub = cell / 3;
    let pitch = cell + style.gap_px;
    let grid_x = style.margin_px + style.label_px;
    let grid_y = style.margin_px;
    let grid_w = m.heads as u32 * pitch;
    let grid_h = m.layers as u32 * pitch;
    let legend_row = 18;
    let legend_h = if style.legend {
        10 + legend_row * roles.len() as u32
    } else {
        0
    };
    let width = (grid_x + grid_w + style.margin_px).max(grid_x + 160);
    let height = grid_y + grid_h + legend_h + style.margin_px;

    let mut svg = String::new();
    let _ = writeln!(svg, r#"<?xml version="1.0" encoding="UTF-8"?>"#);
    let _ = writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" viewBox="0 0 {width} {height}">"#
    );
    let _ = writeln!(
        svg,
        r#"<rect x="0" y="0" width="{width}" height="{height}" fill="{}"/>"#,
        escape(&style.background)
    );
    for layer in 0..m.layers {
        let y = grid_y + layer as u32 * pitch;
        let _ = writeln!(
            svg,
            r#"<text x="{}" y="{}" font-family="sans-serif" font-size="11" text-anchor="end">L{layer}</text>"#,
            grid_x - 6,
            y + cell / 2 + 4
        );
        for (slot, (head, _)) in sorted_layer(m, layer, roles).into_iter().enumerate() {
            let x = grid_x + slot as u32 * pitch;
            let c = HeadCoord::new(layer, head);
            let _ = writeln!(svg, r#"<g id="L{layer}H{head}">"#);
            for (i, role) in roles.iter().enumerate() {
                let fill = if m.has_role(c, role) {
                    &style.palette[i]
                } else {
                    &style.gray
                };
                let _ = writeln!(
                    svg,
                    r#"<rect x="{}" y="{}" width="{sub}" height="{sub}" fill="{}"/>"#,
                    x + (i as u32 % 3) * sub,
                    y + (i as u32 / 3) * sub,
                    escape(fill)
                );
            }
            let _ = writeln!(svg, "</g>");
        }
    }
    if style.legend {
        let y0 = grid_y + grid_h + 10;
        for (i, role) in roles.iter().enumerate() {
            let y = y0 + i as u32 * legend_row;
            let _ = writeln!(
                svg,
                r#"<rect x="{grid_x}" y="{y}" width="12" height="12" fill="{}"/>"#,
                escape(&style.palette[i])
            );
            let _ = writeln!(
                svg,
                r#"<text x="{}" y="{}" font-family="sans-serif" font-size="11">{} ({}, {})</text>"#,
                grid_x + 18,
                y + 10,
                escape(&role.to_string()),
                i / 3,
                i % 3
            );
        }
    }
    svg.push_str("</svg>\n");
    Ok(svg)
}
