//! Context matrices and action vectors fed to the flow.
//!
//! A context row is `[dir_x, dir_y, log_dist, border, robot]`: the unit
//! direction to an entity, its log-scaled distance, and a one-hot label that
//! is `(1, 0)` for points on the area border and `(0, 1)` for other robots.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::Rng;
use thiserror::Error;

use crate::adversaries::AgentKind;
use crate::geometry::{nearest_boundary_points, ConvexPolygon, Vec2};
use crate::rng;
use crate::sim::RunRecord;

/// Row width of a context matrix.
pub const CONTEXT_DIM: usize = 5;
/// Width of an encoded action.
pub const ACTION_DIM: usize = 3;
/// Additive offset inside the logarithm (m).
pub const LOG_EPS: f64 = 1e-3;
/// Reference distance (m) normalizing the log scale.
pub const LOG_REF_DISTANCE: f64 = 12.0;
/// Displacements shorter than this encode as the zero action.
pub const ZERO_ACTION: f64 = 1e-9;

const LABEL_BORDER: [f64; 2] = [1.0, 0.0];
const LABEL_ROBOT: [f64; 2] = [0.0, 1.0];

#[derive(Debug, Error)]
pub enum FeatureError {
    #[error("non-finite action {0:?}")]
    NonFinite(Vec2),
    #[error("robot index {0} out of range")]
    BadIndex(usize),
    #[error("I/O error: {0}")]
    Io(#[from] std::io::Error),
    #[error("malformed feature file: {0}")]
    Format(String),
}

/// Variable-length set of distance features for one robot at one step.
#[derive(Debug, Clone, PartialEq)]
pub struct Context {
    pub rows: Vec<[f64; CONTEXT_DIM]>,
}

impl Context {
    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    /// Randomly permutes the rows in place.
    pub fn shuffle<R: Rng + ?Sized>(&mut self, rng: &mut R) {
        self.rows.shuffle(rng);
    }

    /// Rows with the two label columns swapped (border ↔ robot).
    pub fn with_swapped_labels(&self) -> Context {
        Context {
            rows: self
                .rows
                .iter()
                .map(|r| [r[0], r[1], r[2], r[4], r[3]])
                .collect(),
        }
    }
}

/// `[a_x/‖a‖, a_y/‖a‖, ‖a‖/a_max]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ActionVec(pub [f64; ACTION_DIM]);

/// Log-scaled distance feature, monotone in `d`.
#[inline]
pub fn scale_distance(d: f64) -> f64 {
    (LOG_EPS + d).ln() / LOG_REF_DISTANCE.ln()
}

/// Direction / relative-magnitude encoding of a displacement. The magnitude is
/// not clamped, so physically impossible jumps stay visible.
pub fn encode_action(a: Vec2, a_max: f64) -> Result<ActionVec, FeatureError> {
    if !a.is_finite() {
        return Err(FeatureError::NonFinite(a));
    }
    let n = a.norm();
    if n < ZERO_ACTION {
        return Ok(ActionVec([0.0; 3]));
    }
    Ok(ActionVec([a.x / n, a.y / n, n / a_max]))
}

/// Inverse of [`encode_action`]; the direction is re-normalized first.
pub fn decode_action(v: ActionVec, a_max: f64) -> Vec2 {
    let dir = Vec2::new(v.0[0], v.0[1]);
    match dir.normalized() {
        Some(u) => u * (v.0[2] * a_max),
        None => Vec2::ZERO,
    }
}

fn feature_row(from: Vec2, to: Vec2, label: [f64; 2]) -> [f64; CONTEXT_DIM] {
    let d = to - from;
    let n = d.norm();
    let (ux, uy) = if n < ZERO_ACTION { (0.0, 0.0) } else { (d.x / n, d.y / n) };
    [ux, uy, scale_distance(n), label[0], label[1]]
}

/// Context of `robot` given everybody's broadcast positions. Rows are ordered
/// as other robots (index order), area corners, edge feet; call
/// [`Context::shuffle`] to randomize. `active` (if given) drops excluded robots.
pub fn build_context(
    robot: usize,
    positions: &[Vec2],
    area: &ConvexPolygon,
    active: Option<&[bool]>,
) -> Result<Context, FeatureError> {
    let own = *positions.get(robot).ok_or(FeatureError::BadIndex(robot))?;
    let mut rows = Vec::with_capacity(positions.len() - 1 + 2 * area.len());
    for (j, p) in positions.iter().enumerate() {
        if j != robot && active.is_none_or(|a| a[j]) {
            rows.push(feature_row(own, *p, LABEL_ROBOT));
        }
    }
    for q in nearest_boundary_points(own, area) {
        rows.push(feature_row(own, q, LABEL_BORDER));
    }
    Ok(Context { rows })
}

/// One (context, action) pair with its provenance.
#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub episode: u64,
    pub step: u32,
    pub robot: u32,
    pub kind: AgentKind,
    pub action: ActionVec,
    pub context: Context,
}

/// Stream tag for context shuffling.
const SHUFFLE_TAG: u64 = 0x5348_5546;

/// Shuffled context of robot `i` at step `t` of a run, built from the
/// broadcast positions of the agents in `active` (all agents if `None`).
/// Rows are permuted with a stream derived from `(seed, episode, t, i)`.
pub fn context_at(
    run: &RunRecord,
    t: usize,
    i: usize,
    active: Option<&[bool]>,
    seed: u64,
) -> Result<Context, FeatureError> {
    let mut context = build_context(i, &run.communicated[t], &run.area, active)?;
    let mut r = rng::stream(seed, &[SHUFFLE_TAG, run.episode, t as u64, i as u64]);
    context.shuffle(&mut r);
    Ok(context)
}

/// Featurizes every communicated action of a run. With `normal_only`,
/// antagonists are skipped.
pub fn featurize_run(
    run: &RunRecord,
    a_max: f64,
    seed: u64,
    normal_only: bool,
) -> Result<Vec<Sample>, FeatureError> {
    let mut out = Vec::new();
    for t in 0..run.steps {
        for i in 0..run.n_robots() {
            let kind = run.specs[i].kind();
            if normal_only && kind.is_antagonist() {
                continue;
            }
            out.push(Sample {
                episode: run.episode,
                step: t as u32,
                robot: i as u32,
                kind,
                action: encode_action(run.actions[t][i], a_max)?,
                context: context_at(run, t, i, None, seed)?,
            });
        }
    }
    Ok(out)
}

const TENSOR_MAGIC: &[u8; 4] = b"SGFT";
/// Version of the binary feature-tensor layout.
pub const TENSOR_VERSION: u32 = 1;

fn kind_code(k: AgentKind) -> u32 {
    match k {
        AgentKind::Normal => 0,
        AgentKind::BruteForce => 1,
        AgentKind::Sneaky => 2,
        AgentKind::Weibull => 3,
        AgentKind::AggressiveWeibull => 4,
        AgentKind::Spoofing => 5,
    }
}

fn kind_from_code(c: u32) -> Result<AgentKind, FeatureError> {
    Ok(match c {
        0 => AgentKind::Normal,
        1 => AgentKind::BruteForce,
        2 => AgentKind::Sneaky,
        3 => AgentKind::Weibull,
        4 => AgentKind::AggressiveWeibull,
        5 => AgentKind::Spoofing,
        _ => return Err(FeatureError::Format(format!("unknown agent kind code {c}"))),
    })
}

/// Writes samples in the little-endian binary layout:
///
/// ```text
/// magic "SGFT" | version u32 | n_samples u64
/// per sample: episode u64 | step u32 | robot u32 | kind u32 | n_s u32
///             | action 3×f64 | context n_s×5 f64 (row-major)
/// ```
pub fn write_samples(path: &Path, samples: &[Sample]) -> Result<(), FeatureError> {
    let mut w = BufWriter::new(File::create(path)?);
    w.write_all(TENSOR_MAGIC)?;
    w.write_all(&TENSOR_VERSION.to_le_bytes())?;
    w.write_all(&(samples.len() as u64).to_le_bytes())?;
    for s in samples {
        w.write_all(&s.episode.to_le_bytes())?;
        w.write_all(&s.step.to_le_bytes())?;
        w.write_all(&s.robot.to_le_bytes())?;
        w.write_all(&kind_code(s.kind).to_le_bytes())?;
        w.write_all(&(s.context.len() as u32).to_le_bytes())?;
        for v in s.action.0 {
            w.write_all(&v.to_le_bytes())?;
        }
        for row in &s.context.rows {
            for v in row {
                w.write_all(&v.to_le_bytes())?;
            }
        }
    }
    w.flush()?;
    Ok(())
}

fn read_array<const N: usize>(r: &mut impl Read) -> Result<[u8; N], FeatureError> {
    let mut b = [0u8; N];
    r.read_exact(&mut b).map_err(|e| match e.kind() {
        std::io::ErrorKind::UnexpectedEof => FeatureError::Format("truncated file".into()),
        _ => FeatureError::Io(e),
    })?;
    Ok(b)
}

fn read_f64(r: &mut impl Read) -> Result<f64, FeatureError> {
    Ok(f64::from_le_bytes(read_array::<8>(r)?))
}

fn read_u32(r: &mut impl Read) -> Result<u32, FeatureError> {
    Ok(u32::from_le_bytes(read_array::<4>(r)?))
}

/// Reads a file written by [`write_samples`].
pub fn read_samples(path: &Path) -> Result<Vec<Sample>, FeatureError> {
    let mut r = BufReader::new(File::open(path)?);
    if &read_array::<4>(&mut r)? != TENSOR_MAGIC {
        return Err(FeatureError::Format("bad magic".into()));
    }
    let version = read_u32(&mut r)?;
    if version != TENSOR_VERSION {
        return Err(FeatureError::Format(format!("unsupported version {version}")));
    }
    let n = u64::from_le_bytes(read_array::<8>(&mut r)?) as usize;
    let mut out = Vec::with_capacity(n.min(1 << 24));
    for _ in 0..n {
        let episode = u64::from_le_bytes(read_array::<8>(&mut r)?);
        let step = read_u32(&mut r)?;
        let robot = read_u32(&mut r)?;
        let kind = kind_from_code(read_u32(&mut r)?)?;
        let n_s = read_u32(&mut r)? as usize;
        let action = ActionVec([read_f64(&mut r)?, read_f64(&mut r)?, read_f64(&mut r)?]);
        let mut rows = Vec::with_capacity(n_s);
        for _ in 0..n_s {
            let mut row = [0.0; CONTEXT_DIM];
            for v in &mut row {
                *v = read_f64(&mut r)?;
            }
            rows.push(row);
        }
        out.push(Sample {
            episode,
            step,
            robot,
            kind,
            action,
            context: Context { rows },
        });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn action_encoding() {
        let v = encode_action(Vec2::new(0.3, 0.4), 1.2).unwrap();
        assert!((v.0[0] - 0.6).abs() < 1e-15 && (v.0[1] - 0.8).abs() < 1e-15);
        assert!((v.0[2] - 0.5 / 1.2).abs() < 1e-15);
        assert!((v.0[2] - 0.41667).abs() < 1e-5);
        assert_eq!(encode_action(Vec2::ZERO, 1.2).unwrap().0, [0.0; 3]);
        assert_eq!(encode_action(Vec2::new(1.2, 0.0), 1.2).unwrap().0[2], 1.0);
        assert!(encode_action(Vec2::new(f64::NAN, 0.0), 1.2).is_err());
        // Jumps beyond a_max are not clamped.
        assert!((encode_action(Vec2::new(6.0, 0.0), 1.2).unwrap().0[2] - 5.0).abs() < 1e-12);
    }

    #[test]
    fn action_decoding() {
        let a = decode_action(ActionVec([0.6, 0.8, 0.5 / 1.2]), 1.2);
        assert!(a.dist(Vec2::new(0.3, 0.4)) < 1e-12);
        assert_eq!(decode_action(ActionVec([0.0; 3]), 1.2), Vec2::ZERO);
    }

    #[test]
    fn context_counts_and_labels() {
        let area = ConvexPolygon::rectangle(0.0, 0.0, 1.0, 1.0).unwrap();
        let pos = [Vec2::new(0.5, 0.5), Vec2::new(0.2, 0.7)];
        let ctx = build_context(0, &pos, &area, None).unwrap();
        assert_eq!(ctx.len(), 9);
        assert_eq!(&ctx.rows[0][3..], &[0.0, 1.0]);
        assert!(ctx.rows[1..].iter().all(|r| r[3..] == [1.0, 0.0]));
        // Edge feet from the center: axis directions, equal magnitudes.
        let feet = &ctx.rows[5..];
        let dirs: Vec<(f64, f64)> = feet.iter().map(|r| (r[0], r[1])).collect();
        assert_eq!(dirs, vec![(0.0, -1.0), (1.0, 0.0), (0.0, 1.0), (-1.0, 0.0)]);
        assert!(feet.iter().all(|r| (r[2] - feet[0][2]).abs() < 1e-15));
        assert!(build_context(5, &pos, &area, None).is_err());
    }

    #[test]
    fn coincident_robot_gives_degenerate_row() {
        let area = ConvexPolygon::rectangle(0.0, 0.0, 1.0, 1.0).unwrap();
        let pos = [Vec2::new(0.5, 0.5), Vec2::new(0.5, 0.5)];
        let ctx = build_context(0, &pos, &area, None).unwrap();
        assert_eq!(ctx.rows[0], [0.0, 0.0, scale_distance(0.0), 0.0, 1.0]);
    }

    #[test]
    fn excluded_robots_are_dropped() {
        let area = ConvexPolygon::rectangle(0.0, 0.0, 1.0, 1.0).unwrap();
        let pos = [Vec2::new(0.5, 0.5), Vec2::new(0.2, 0.7), Vec2::new(0.8, 0.2)];
        let ctx = build_context(0, &pos, &area, Some(&[true, false, true])).unwrap();
        assert_eq!(ctx.len(), 1 + 8);
    }

    #[test]
    fn shuffling_is_seeded() {
        let area = ConvexPolygon::rectangle(0.0, 0.0, 3.0, 3.0).unwrap();
        let pos: Vec<Vec2> = (0..5).map(|i| Vec2::new(0.5 * i as f64 + 0.2, 1.0)).collect();
        let base = build_context(2, &pos, &area, None).unwrap();
        let mut a = base.clone();
        let mut b = base.clone();
        a.shuffle(&mut ChaCha8Rng::seed_from_u64(1));
        b.shuffle(&mut ChaCha8Rng::seed_from_u64(1));
        assert_eq!(a, b);
        assert_ne!(a, base);
    }
}
