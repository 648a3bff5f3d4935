//! Dataset interventions: treatment-effect label repair, equalized base
//! rates, discrimination doubling and Spanish-fluency selection bias.
//!
//! All interventions are pure: they return a new [`Dataset`] with
//! provenance `Resampled` and an entry appended to its trail.

use std::io::Write;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::data::{AgeGroup, ApplicantRecord, Dataset, TrailEntry};
use crate::metrics::round_count;
use crate::rng::stream;

#[derive(Debug, Error, PartialEq)]
pub enum RepairError {
    #[error("{scores} scores for {records} records")]
    LengthMismatch { records: usize, scores: usize },
    #[error("ran out of {pool} before rates were equalized (residual gap {residual_gap})")]
    ExhaustedCandidates { pool: &'static str, residual_gap: f64 },
    #[error("infeasible target: {0}")]
    InfeasibleTarget(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum FlipDirection {
    PosToNegYoung,
    NegToPosOlder,
    /// Mirrored repair, used only when Older applicants are favoured.
    PosToNegOlder,
    NegToPosYoung,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Flip {
    pub index: usize,
    pub direction: FlipDirection,
    pub tau: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RepairLog {
    pub flips: Vec<Flip>,
    pub iterations: usize,
    pub final_gap: f64,
}

impl RepairLog {
    pub fn flipped_indices(&self) -> Vec<usize> {
        self.flips.iter().map(|f| f.index).collect()
    }

    pub fn write_csv(&self, out: impl Write) -> std::io::Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["iteration", "record_index", "direction", "tau_hat"])?;
        for (k, f) in self.flips.iter().enumerate() {
            w.write_record([
                (k / 2).to_string(),
                f.index.to_string(),
                format!("{:?}", f.direction),
                format!("{}", f.tau),
            ])?;
        }
        w.flush()
    }
}

/// Young-minus-older callback gap scaled by `n_young * n_older`, so that a
/// paired flip moves it by exactly `n_young + n_older`.
fn scaled_gap(yp: usize, ny: usize, op: usize, no: usize) -> i128 {
    yp as i128 * no as i128 - op as i128 * ny as i128
}

/// Iteratively flips the Young callback with the largest effect to a
/// non-callback and the Older non-callback with the smallest effect to a
/// callback, until the Young rate exceeds the Older rate by no more than
/// `1/n_young + 1/n_older`, the effect of one paired flip. Ties go to the
/// lowest record index.
///
/// When the Older group is favoured the roles swap: the Older callback with
/// the smallest effect and the Young non-callback with the largest effect
/// are flipped until the Older lead is within the same tolerance.
pub fn repair_labels_ite(data: &Dataset, tau: &[f64]) -> Result<(Dataset, RepairLog), RepairError> {
    if tau.len() != data.len() {
        return Err(RepairError::LengthMismatch {
            records: data.len(),
            scores: tau.len(),
        });
    }
    let c = data.group_counts();
    let (ny, no) = (c.young(), c.older());
    let (mut yp, mut op) = (c.young_pos, c.older_pos);
    let mut records = data.records.clone();
    let mut flips = Vec::new();
    let step = (ny + no) as i128;
    let gap = |yp: usize, op: usize| {
        if ny == 0 || no == 0 {
            0.0
        } else {
            yp as f64 / ny as f64 - op as f64 / no as f64
        }
    };

    if ny > 0 && no > 0 {
        let favoured_young = scaled_gap(yp, ny, op, no) > 0;
        // (group, label) pools to pull from, and whether larger effects go first
        let (down, up) = if favoured_young {
            ((AgeGroup::Young, true), (AgeGroup::Older, false))
        } else {
            ((AgeGroup::Older, true), (AgeGroup::Young, false))
        };
        let pool = |(g, y): (AgeGroup, bool), descending: bool| {
            let mut p: Vec<usize> = (0..records.len())
                .filter(|&i| records[i].age_group == g && records[i].callback == y)
                .collect();
            p.sort_by(|&a, &b| {
                let o = if descending {
                    tau[b].total_cmp(&tau[a])
                } else {
                    tau[a].total_cmp(&tau[b])
                };
                o.then(a.cmp(&b))
            });
            p
        };
        let down_pool = pool(down, favoured_young);
        let up_pool = pool(up, !favoured_young);
        let (down_dir, up_dir) = if favoured_young {
            (FlipDirection::PosToNegYoung, FlipDirection::NegToPosOlder)
        } else {
            (FlipDirection::PosToNegOlder, FlipDirection::NegToPosYoung)
        };
        let mut k = 0;
        loop {
            let s = scaled_gap(yp, ny, op, no);
            if s.abs() <= step {
                break;
            }
            let (Some(&i), Some(&j)) = (down_pool.get(k), up_pool.get(k)) else {
                return Err(RepairError::ExhaustedCandidates {
                    pool: if down_pool.len() <= k { "callbacks to remove" } else { "non-callbacks to promote" },
                    residual_gap: gap(yp, op),
                });
            };
            records[i].callback = false;
            records[j].callback = true;
            if favoured_young {
                yp -= 1;
                op += 1;
            } else {
                op -= 1;
                yp += 1;
            }
            flips.push(Flip {
                index: i,
                direction: down_dir,
                tau: tau[i],
            });
            flips.push(Flip {
                index: j,
                direction: up_dir,
                tau: tau[j],
            });
            k += 1;
        }
    }

    let log = RepairLog {
        iterations: flips.len() / 2,
        final_gap: gap(yp, op),
        flips,
    };
    let out = data.resampled(
        records,
        TrailEntry {
            operation: "repair_labels_ite".into(),
            parameters: format!("iterations={}", log.iterations),
            seed: None,
            records_affected: log.flips.len(),
        },
    );
    Ok((out, log))
}

/// Result of a deletion intervention.
#[derive(Debug, Clone, PartialEq)]
pub struct Resampled {
    pub data: Dataset,
    /// Indices (into the input) of deleted records, ascending.
    pub removed: Vec<usize>,
    /// Set when the intervention declined to act.
    pub warning: Option<String>,
}

fn delete(data: &Dataset, mut removed: Vec<usize>, entry: TrailEntry) -> Resampled {
    removed.sort_unstable();
    let mut keep = vec![true; data.len()];
    for &i in &removed {
        keep[i] = false;
    }
    let records: Vec<ApplicantRecord> = data
        .records
        .iter()
        .zip(&keep)
        .filter(|(_, &k)| k)
        .map(|(r, _)| r.clone())
        .collect();
    Resampled {
        data: data.resampled(records, entry),
        removed,
        warning: None,
    }
}

fn shuffled_members(data: &Dataset, group: AgeGroup, label: bool, seed: u64, name: &str) -> Vec<usize> {
    let mut m: Vec<usize> = (0..data.len())
        .filter(|&i| data.records[i].age_group == group && data.records[i].callback == label)
        .collect();
    m.shuffle(&mut stream(seed, name, 0));
    m
}

/// Deletes random Older non-callbacks until the Older callback rate first
/// reaches the Young rate. If the Older rate is already higher, returns the
/// input unchanged with a warning.
pub fn equalize_base_rate(data: &Dataset, seed: u64) -> Resampled {
    let c = data.group_counts();
    let (yp, ny, op, no) = (c.young_pos as u128, c.young() as u128, c.older_pos as u128, c.older() as u128);
    // smallest m with op / (no - m) >= yp / ny
    let m = if no == 0 || ny == 0 || yp == 0 || op * ny >= yp * no {
        0
    } else {
        (no - op * ny / yp) as usize
    };
    let entry = |m: usize| TrailEntry {
        operation: "equalize_base_rate".into(),
        parameters: String::new(),
        seed: Some(seed),
        records_affected: m,
    };
    if ny > 0 && no > 0 && op * ny > yp * no {
        let mut r = delete(data, Vec::new(), entry(0));
        r.warning = Some("older callback rate already exceeds young; nothing removed".into());
        return r;
    }
    let mut pool = shuffled_members(data, AgeGroup::Older, false, seed, "equalize-base-rate");
    pool.truncate(m);
    delete(data, pool, entry(m))
}

/// Deletes random Older callbacks until the gap first reaches `target_gap`.
pub fn double_discrimination(data: &Dataset, target_gap: f64, seed: u64) -> Result<Resampled, RepairError> {
    let c = data.group_counts();
    if c.young() == 0 || c.older() == 0 {
        return Err(RepairError::InfeasibleTarget("both age groups must be present".into()));
    }
    let young_rate = c.young_rate();
    let gap_after = |m: usize| {
        let left = c.older() - m;
        young_rate - if left == 0 { 0.0 } else { (c.older_pos - m) as f64 / left as f64 }
    };
    if target_gap < gap_after(0) {
        return Err(RepairError::InfeasibleTarget(format!(
            "target {target_gap} is below the current gap {}",
            gap_after(0)
        )));
    }
    let m = (0..=c.older_pos)
        .find(|&m| gap_after(m) >= target_gap)
        .ok_or_else(|| {
            RepairError::InfeasibleTarget(format!(
                "removing every older callback only reaches a gap of {}",
                gap_after(c.older_pos)
            ))
        })?;
    let mut pool = shuffled_members(data, AgeGroup::Older, true, seed, "double-discrimination");
    pool.truncate(m);
    Ok(delete(
        data,
        pool,
        TrailEntry {
            operation: "double_discrimination".into(),
            parameters: format!("target_gap={target_gap}"),
            seed: Some(seed),
            records_affected: m,
        },
    ))
}

/// Target Spanish-fluency shares per age group.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BiasTarget {
    pub p_spanish_young: f64,
    pub p_spanish_old: f64,
    /// Always honoured; kept for the record.
    pub preserve_spanish_callback_rate: bool,
}

impl BiasTarget {
    /// Shares `m + x/2` (Young) and `m - x/2` (Older) around the overall
    /// Spanish share `m`; `x = 0` keeps each group's current share, which
    /// makes it an exact no-op.
    pub fn disparity(data: &Dataset, x: f64) -> BiasTarget {
        let share = |g: Option<AgeGroup>| {
            let (mut s, mut t) = (0usize, 0usize);
            for r in &data.records {
                if g.is_none_or(|g| r.age_group == g) {
                    t += 1;
                    s += usize::from(r.spanish);
                }
            }
            s as f64 / t.max(1) as f64
        };
        if x == 0.0 {
            return BiasTarget {
                p_spanish_young: share(Some(AgeGroup::Young)),
                p_spanish_old: share(Some(AgeGroup::Older)),
                preserve_spanish_callback_rate: true,
            };
        }
        let m = share(None);
        BiasTarget {
            p_spanish_young: m + x / 2.0,
            p_spanish_old: m - x / 2.0,
            preserve_spanish_callback_rate: true,
        }
    }
}

const BIAS_TOLERANCE: f64 = 0.01;

/// Record counts for one (age, spanish) cell.
#[derive(Debug, Clone, Copy, Default)]
struct Cell {
    pos: usize,
    neg: usize,
}

impl Cell {
    fn total(&self) -> usize {
        self.pos + self.neg
    }
}

/// Deletes records so that P(spanish | Young) and P(spanish | Older) hit
/// the target while the callback rate among Spanish speakers and among
/// non-speakers each stays within 0.01 of its original value.
///
/// Per age group the largest subsample with the target Spanish share is
/// kept. Within each Spanish stratum the kept callbacks are first
/// allocated proportionally to each age cell's own callback rate, then
/// shifted across the two cells (within their capacity) until the stratum
/// rate matches the original. Which records go is random within each of
/// the eight (age, spanish, callback) cells.
pub fn inject_selection_bias(data: &Dataset, target: &BiasTarget, seed: u64) -> Result<Resampled, RepairError> {
    let targets = [target.p_spanish_young, target.p_spanish_old];
    if targets.iter().any(|p| !(0.0..=1.0).contains(p)) {
        return Err(RepairError::InfeasibleTarget(format!(
            "Spanish shares {:?} outside [0, 1]",
            targets
        )));
    }
    // cells[age][spanish]
    let mut cells = [[Cell::default(); 2]; 2];
    for r in &data.records {
        let cell = &mut cells[age_ix(r.age_group)][usize::from(r.spanish)];
        if r.callback {
            cell.pos += 1;
        } else {
            cell.neg += 1;
        }
    }

    // kept size per (age, spanish)
    let mut keep_total = [[0usize; 2]; 2];
    for a in 0..2 {
        let p = targets[a];
        let (n0, n1) = (cells[a][0].total() as f64, cells[a][1].total() as f64);
        if n0 + n1 == 0.0 {
            continue;
        }
        let current = n1 / (n0 + n1);
        if (current - p).abs() < 1e-12 {
            keep_total[a] = [cells[a][0].total(), cells[a][1].total()];
            continue;
        }
        let size = if p <= 0.0 {
            n0
        } else if p >= 1.0 {
            n1
        } else {
            (n1 / p).min(n0 / (1.0 - p))
        };
        let k1 = round_count(p * size).min(cells[a][1].total());
        let k0 = round_count((1.0 - p) * size).min(cells[a][0].total());
        if k0 + k1 == 0 {
            return Err(RepairError::InfeasibleTarget(format!("no records left in age group {a}")));
        }
        keep_total[a] = [k0, k1];
    }

    // kept callbacks per (age, spanish)
    let mut keep_pos = [[0usize; 2]; 2];
    for s in 0..2 {
        let orig_pos = cells[0][s].pos + cells[1][s].pos;
        let orig_total = cells[0][s].total() + cells[1][s].total();
        let kept_total = keep_total[0][s] + keep_total[1][s];
        if kept_total == 0 {
            continue;
        }
        let want = round_count(orig_pos as f64 / orig_total as f64 * kept_total as f64);
        let mut lo = [0usize; 2];
        let mut hi = [0usize; 2];
        for a in 0..2 {
            let t = keep_total[a][s];
            lo[a] = t.saturating_sub(cells[a][s].neg);
            hi[a] = t.min(cells[a][s].pos);
            let own = if cells[a][s].total() == 0 {
                0.0
            } else {
                cells[a][s].pos as f64 / cells[a][s].total() as f64
            };
            keep_pos[a][s] = round_count(own * t as f64).clamp(lo[a], hi[a]);
        }
        // shift the surplus or deficit onto cells with room, larger cell first
        let mut order = [0usize, 1];
        order.sort_by_key(|&a| std::cmp::Reverse(keep_total[a][s]));
        for &a in &order {
            let have: usize = keep_pos[0][s] + keep_pos[1][s];
            if have < want {
                keep_pos[a][s] = (keep_pos[a][s] + (want - have)).min(hi[a]);
            } else if have > want {
                keep_pos[a][s] = keep_pos[a][s].saturating_sub(have - want).max(lo[a]);
            }
        }
    }

    // verify both constraints before touching any record
    for a in 0..2 {
        let t = keep_total[a][0] + keep_total[a][1];
        let share = keep_total[a][1] as f64 / t.max(1) as f64;
        if t > 0 && (share - targets[a]).abs() > BIAS_TOLERANCE {
            return Err(RepairError::InfeasibleTarget(format!(
                "Spanish share {share:.4} misses target {:.4}",
                targets[a]
            )));
        }
    }
    for s in 0..2 {
        let orig = (cells[0][s].pos + cells[1][s].pos) as f64 / (cells[0][s].total() + cells[1][s].total()).max(1) as f64;
        let kept_total = keep_total[0][s] + keep_total[1][s];
        let kept = (keep_pos[0][s] + keep_pos[1][s]) as f64 / kept_total.max(1) as f64;
        if kept_total > 0 && (kept - orig).abs() > BIAS_TOLERANCE {
            return Err(RepairError::InfeasibleTarget(format!(
                "callback rate in Spanish stratum {s} would move from {orig:.4} to {kept:.4}"
            )));
        }
    }

    let mut removed = Vec::new();
    for a in 0..2 {
        let group = if a == 0 { AgeGroup::Young } else { AgeGroup::Older };
        for s in 0..2 {
            for (label, keep) in [(true, keep_pos[a][s]), (false, keep_total[a][s] - keep_pos[a][s])] {
                let mut members: Vec<usize> = (0..data.len())
                    .filter(|&i| {
                        let r = &data.records[i];
                        r.age_group == group && usize::from(r.spanish) == s && r.callback == label
                    })
                    .collect();
                let cell_id = (a * 4 + s * 2 + usize::from(label)) as u64;
                members.shuffle(&mut stream(seed, "selection-bias", cell_id));
                removed.extend_from_slice(&members[keep.min(members.len())..]);
            }
        }
    }
    let affected = removed.len();
    Ok(delete(
        data,
        removed,
        TrailEntry {
            operation: "inject_selection_bias".into(),
            parameters: format!(
                "p_spanish_young={} p_spanish_old={}",
                target.p_spanish_young, target.p_spanish_old
            ),
            seed: Some(seed),
            records_affected: affected,
        },
    ))
}

fn age_ix(g: AgeGroup) -> usize {
    match g {
        AgeGroup::Young => 0,
        AgeGroup::Older => 1,
    }
}
