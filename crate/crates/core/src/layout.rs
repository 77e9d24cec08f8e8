//! Seat-aware panel placement on the table surface.
//!
//! Panels are axis-aligned rectangles on an integer grid. New panels land on
//! the feasible grid position closest to the seat of whoever opened them;
//! physical objects on the table push overlapping panels elsewhere, or hide
//! them when nothing fits.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[cfg(feature = "parallel")]
use rayon::prelude::*;

pub type PanelId = u32;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum LayoutError {
    #[error("no free position for a {w}x{h} panel")]
    NoSpace { w: i64, h: i64 },
    #[error("{w}x{h} does not fit on a {width}x{height} surface")]
    TooLarge { w: i64, h: i64, width: i64, height: i64 },
    #[error("rectangle {0:?} is not inside the surface")]
    OutOfBounds(Rect),
    #[error("unknown panel {0}")]
    UnknownPanel(PanelId),
    #[error("panel {0} would overlap another panel or an object")]
    WouldOverlap(PanelId),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Rect {
    pub x: i64,
    pub y: i64,
    pub w: i64,
    pub h: i64,
}

impl Rect {
    pub fn new(x: i64, y: i64, w: i64, h: i64) -> Self {
        Rect { x, y, w, h }
    }

    /// Positive-area intersection; rectangles sharing an edge do not overlap.
    pub fn overlaps(&self, o: &Rect) -> bool {
        self.x < o.x + o.w && o.x < self.x + self.w && self.y < o.y + o.h && o.y < self.y + self.h
    }

    pub fn overlap_area(&self, o: &Rect) -> i64 {
        let w = (self.x + self.w).min(o.x + o.w) - self.x.max(o.x);
        let h = (self.y + self.h).min(o.y + o.h) - self.y.max(o.y);
        w.max(0) * h.max(0)
    }

    pub fn within(&self, width: i64, height: i64) -> bool {
        self.x >= 0 && self.y >= 0 && self.w > 0 && self.h > 0 && self.x + self.w <= width && self.y + self.h <= height
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SeatSide {
    Left,
    Right,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Panel {
    pub id: PanelId,
    pub rect: Rect,
    /// Degrees, one of 0, 90, 180, 270.
    pub rotation: u16,
    pub owner: SeatSide,
    pub hidden: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SurfaceLayout {
    pub width: i64,
    pub height: i64,
    pub grid_step: i64,
    pub obstacles: Vec<Rect>,
    pub panels: BTreeMap<PanelId, Panel>,
    next_id: PanelId,
}

/// What happened to each panel disturbed by an obstacle change.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(tag = "outcome", rename_all = "lowercase")]
pub enum Relocation {
    Moved { id: PanelId, to: Rect },
    Hidden { id: PanelId },
}

impl SurfaceLayout {
    pub fn new(width: i64, height: i64, grid_step: i64) -> Self {
        assert!(
            width > 0 && height > 0 && grid_step > 0,
            "surface and grid must be positive"
        );
        SurfaceLayout {
            width,
            height,
            grid_step,
            obstacles: Vec::new(),
            panels: BTreeMap::new(),
            next_id: 1,
        }
    }

    /// Midpoint of the table edge nearest the given sofa side, in doubled
    /// coordinates so it stays integral.
    pub fn anchor2(&self, seat: SeatSide) -> (i64, i64) {
        match seat {
            SeatSide::Left => (0, self.height),
            SeatSide::Right => (2 * self.width, self.height),
        }
    }

    /// Candidate offsets along one axis: every grid multiple that fits, plus
    /// the flush-to-far-edge position.
    pub fn axis_candidates(extent: i64, size: i64, step: i64) -> Vec<i64> {
        let max = extent - size;
        if max < 0 {
            return Vec::new();
        }
        let mut out: Vec<i64> = (0..=max / step).map(|k| k * step).collect();
        if out.last() != Some(&max) {
            out.push(max);
        }
        out
    }

    pub fn visible_panels(&self) -> impl Iterator<Item = &Panel> {
        self.panels.values().filter(|p| !p.hidden)
    }

    fn is_free(&self, r: &Rect, ignore: Option<PanelId>) -> bool {
        self.obstacles.iter().all(|o| !o.overlaps(r))
            && self
                .visible_panels()
                .filter(|p| Some(p.id) != ignore)
                .all(|p| !p.rect.overlaps(r))
    }

    fn best_in_row(
        &self,
        y: i64,
        w: i64,
        h: i64,
        xs: &[i64],
        anchor: (i64, i64),
        ignore: Option<PanelId>,
    ) -> Option<(i64, i64, i64)> {
        xs.iter()
            .filter(|&&x| self.is_free(&Rect::new(x, y, w, h), ignore))
            .map(|&x| {
                let dx = 2 * x + w - anchor.0;
                let dy = 2 * y + h - anchor.1;
                (dx * dx + dy * dy, y, x)
            })
            .min()
    }

    /// Scans every grid candidate for the feasible rect whose centre is
    /// closest to the seat anchor; ties go to smaller y, then smaller x.
    pub fn find_spot_sequential(&self, w: i64, h: i64, seat: SeatSide, ignore: Option<PanelId>) -> Option<Rect> {
        let xs = Self::axis_candidates(self.width, w, self.grid_step);
        let ys = Self::axis_candidates(self.height, h, self.grid_step);
        let anchor = self.anchor2(seat);
        ys.iter()
            .filter_map(|&y| self.best_in_row(y, w, h, &xs, anchor, ignore))
            .min()
            .map(|(_, y, x)| Rect::new(x, y, w, h))
    }

    #[cfg(feature = "parallel")]
    pub fn find_spot_parallel(&self, w: i64, h: i64, seat: SeatSide, ignore: Option<PanelId>) -> Option<Rect> {
        let xs = Self::axis_candidates(self.width, w, self.grid_step);
        let ys = Self::axis_candidates(self.height, h, self.grid_step);
        let anchor = self.anchor2(seat);
        ys.par_iter()
            .filter_map(|&y| self.best_in_row(y, w, h, &xs, anchor, ignore))
            .min()
            .map(|(_, y, x)| Rect::new(x, y, w, h))
    }

    pub fn find_spot(&self, w: i64, h: i64, seat: SeatSide, ignore: Option<PanelId>) -> Option<Rect> {
        #[cfg(feature = "parallel")]
        {
            self.find_spot_parallel(w, h, seat, ignore)
        }
        #[cfg(not(feature = "parallel"))]
        {
            self.find_spot_sequential(w, h, seat, ignore)
        }
    }

    fn check_size(&self, w: i64, h: i64) -> Result<(), LayoutError> {
        if w <= 0 || h <= 0 || w > self.width || h > self.height {
            return Err(LayoutError::TooLarge {
                w,
                h,
                width: self.width,
                height: self.height,
            });
        }
        Ok(())
    }

    pub fn place_panel(&mut self, w: i64, h: i64, seat: SeatSide) -> Result<PanelId, LayoutError> {
        self.check_size(w, h)?;
        let rect = self.find_spot(w, h, seat, None).ok_or(LayoutError::NoSpace { w, h })?;
        let id = self.next_id;
        self.next_id += 1;
        self.panels.insert(
            id,
            Panel {
                id,
                rect,
                rotation: 0,
                owner: seat,
                hidden: false,
            },
        );
        Ok(id)
    }

    pub fn remove_panel(&mut self, id: PanelId) -> Result<Panel, LayoutError> {
        self.panels.remove(&id).ok_or(LayoutError::UnknownPanel(id))
    }

    /// Re-places `id` with its current footprint and owner, hiding it when
    /// nothing fits.
    fn relocate(&mut self, id: PanelId) -> Relocation {
        let p = &self.panels[&id];
        let (w, h, owner) = (p.rect.w, p.rect.h, p.owner);
        match self.find_spot(w, h, owner, Some(id)) {
            Some(to) => {
                let p = self.panels.get_mut(&id).expect("panel exists");
                p.rect = to;
                p.hidden = false;
                Relocation::Moved { id, to }
            }
            None => {
                self.panels.get_mut(&id).expect("panel exists").hidden = true;
                Relocation::Hidden { id }
            }
        }
    }

    pub fn add_obstacle(&mut self, rect: Rect) -> Result<Vec<Relocation>, LayoutError> {
        if !rect.within(self.width, self.height) {
            return Err(LayoutError::OutOfBounds(rect));
        }
        self.obstacles.push(rect);
        let hit: Vec<PanelId> = self
            .visible_panels()
            .filter(|p| p.rect.overlaps(&rect))
            .map(|p| p.id)
            .collect();
        // displaced panels must not count as occupying their old spot
        for id in &hit {
            self.panels.get_mut(id).expect("panel exists").hidden = true;
        }
        Ok(hit.into_iter().map(|id| self.relocate(id)).collect())
    }

    /// Removes one obstacle equal to `rect` and gives hidden panels another
    /// chance, in id order. Returns `None` when no such obstacle exists.
    pub fn remove_obstacle(&mut self, rect: Rect) -> Option<Vec<Relocation>> {
        let pos = self.obstacles.iter().position(|o| *o == rect)?;
        self.obstacles.remove(pos);
        let hidden: Vec<PanelId> = self.panels.values().filter(|p| p.hidden).map(|p| p.id).collect();
        Some(
            hidden
                .into_iter()
                .map(|id| self.relocate(id))
                .filter(|r| matches!(r, Relocation::Moved { .. }))
                .collect(),
        )
    }

    fn clamp(&self, r: Rect) -> Rect {
        Rect {
            x: r.x.clamp(0, self.width - r.w),
            y: r.y.clamp(0, self.height - r.h),
            ..r
        }
    }

    fn try_set(&mut self, id: PanelId, rect: Rect, rotation: u16) -> Result<Rect, LayoutError> {
        if !self.panels.contains_key(&id) {
            return Err(LayoutError::UnknownPanel(id));
        }
        self.check_size(rect.w, rect.h)?;
        let rect = self.clamp(rect);
        if !self.is_free(&rect, Some(id)) {
            return Err(LayoutError::WouldOverlap(id));
        }
        let p = self.panels.get_mut(&id).expect("checked above");
        p.rect = rect;
        p.rotation = rotation;
        p.hidden = false;
        Ok(rect)
    }

    /// Moves (and possibly resizes) a panel, clamped into the surface.
    pub fn move_panel(&mut self, id: PanelId, rect: Rect) -> Result<Rect, LayoutError> {
        let rotation = self.panels.get(&id).ok_or(LayoutError::UnknownPanel(id))?.rotation;
        self.try_set(id, rect, rotation)
    }

    /// Rotates by quarter turns about the panel centre; odd turns swap the
    /// footprint's width and height.
    pub fn rotate_panel(&mut self, id: PanelId, quarter_turns: i32) -> Result<Rect, LayoutError> {
        let p = self.panels.get(&id).ok_or(LayoutError::UnknownPanel(id))?;
        let turns = quarter_turns.rem_euclid(4) as u16;
        let rotation = (p.rotation + 90 * turns) % 360;
        let r = p.rect;
        let rect = if turns % 2 == 1 {
            Rect {
                x: (2 * r.x + r.w - r.h).div_euclid(2),
                y: (2 * r.y + r.h - r.w).div_euclid(2),
                w: r.h,
                h: r.w,
            }
        } else {
            r
        };
        self.try_set(id, rect, rotation)
    }

    /// Every layout invariant, checked pairwise.
    pub fn check_invariants(&self) -> Result<(), String> {
        let visible: Vec<&Panel> = self.visible_panels().collect();
        for p in &visible {
            if !p.rect.within(self.width, self.height) {
                return Err(format!("panel {} out of bounds", p.id));
            }
            if ![0, 90, 180, 270].contains(&p.rotation) {
                return Err(format!("panel {} has rotation {}", p.id, p.rotation));
            }
            if let Some(o) = self.obstacles.iter().find(|o| o.overlap_area(&p.rect) > 0) {
                return Err(format!("panel {} overlaps object {o:?}", p.id));
            }
        }
        for (i, a) in visible.iter().enumerate() {
            for b in &visible[i + 1..] {
                if a.rect.overlap_area(&b.rect) > 0 {
                    return Err(format!("panels {} and {} overlap", a.id, b.id));
                }
            }
        }
        Ok(())
    }
}
