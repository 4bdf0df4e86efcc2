use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use super::{frame_key, VehicleSeries};
use crate::error::{invalid, Result};

/// Begin/end thresholds of the hysteresis rule.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct HysteresisThresholds {
    pub begin_thw: f64,
    pub begin_gap: f64,
    pub end_thw: f64,
    pub end_gap: f64,
}

impl Default for HysteresisThresholds {
    fn default() -> Self {
        Self {
            begin_thw: 2.0,
            begin_gap: 20.0,
            end_thw: 4.0,
            end_gap: 40.0,
        }
    }
}

impl HysteresisThresholds {
    fn begins(&self, thw: f64, gap: f64) -> bool {
        thw <= self.begin_thw || gap <= self.begin_gap
    }

    fn ends(&self, thw: f64, gap: f64) -> bool {
        thw > self.end_thw && gap > self.end_gap
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpisodeSample {
    pub t: f64,
    pub v_lead: f64,
    pub a_lead: f64,
    pub v_ego: f64,
    pub gap: f64,
}

impl EpisodeSample {
    /// Time headway; unbounded when the follower stands still.
    pub fn thw(&self) -> f64 {
        if self.v_ego > 0.0 {
            self.gap / self.v_ego
        } else {
            f64::INFINITY
        }
    }
}

/// A contiguous stretch in which one follower interacts with one leader.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InteractionEpisode {
    pub follower_id: u64,
    pub leader_id: u64,
    pub start_time: f64,
    /// Time of the last sample inside the episode.
    pub end_time: f64,
    pub samples: Vec<EpisodeSample>,
}

impl InteractionEpisode {
    pub fn duration(&self) -> f64 {
        self.end_time - self.start_time
    }
}

/// Initial situation `x = [v_L, a_L, v_E, ln g]` and the leader's next `n`
/// speeds `y`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SituationPair {
    pub x: [f64; 4],
    pub y: Vec<f64>,
}

/// Anchor spacing and future horizon of the pairs cut from an episode.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PairSpec {
    pub stride: f64,
    pub horizon: usize,
    pub dt: f64,
}

impl Default for PairSpec {
    fn default() -> Self {
        Self {
            stride: 1.0,
            horizon: 50,
            dt: 0.1,
        }
    }
}

impl PairSpec {
    /// `⌊(duration - n dt) / stride⌋ + 1`, or 0 when the episode is shorter
    /// than the horizon.
    pub fn pair_count(&self, episode: &InteractionEpisode) -> usize {
        let span = episode.duration() - self.horizon as f64 * self.dt;
        if episode.samples.is_empty() || span < -1e-9 {
            0
        } else {
            ((span + 1e-9) / self.stride).floor() as usize + 1
        }
    }
}

fn steps(length: f64, period: f64, what: &str) -> Result<usize> {
    let r = length / period;
    let k = r.round();
    if k < 1.0 || (r - k).abs() > 1e-6 {
        return Err(invalid(format!(
            "{what} {length} s is not a multiple of the sampling period {period} s"
        )));
    }
    Ok(k as usize)
}

/// Cuts pairs at episode-relative anchors `0, stride, 2 stride, ...`. A pair
/// at anchor `t` needs samples at `t + k dt` for `k = 1..=n`.
pub fn build_situation_pairs(
    episode: &InteractionEpisode,
    spec: &PairSpec,
) -> Result<Vec<SituationPair>> {
    let s = &episode.samples;
    if s.len() < 2 || spec.horizon == 0 {
        return Ok(Vec::new());
    }
    let period = s[1].t - s[0].t;
    let stride = steps(spec.stride, period, "stride")?;
    let dt = steps(spec.dt, period, "future step")?;
    let reach = spec.horizon * dt;
    let mut pairs = Vec::new();
    let mut a = 0;
    while a + reach < s.len() {
        let x0 = &s[a];
        pairs.push(SituationPair {
            x: [x0.v_lead, x0.a_lead, x0.v_ego, x0.gap.ln()],
            y: (1..=spec.horizon).map(|k| s[a + k * dt].v_lead).collect(),
        });
        a += stride;
    }
    Ok(pairs)
}

struct Lookup<'a> {
    by_frame: HashMap<(u64, i64), &'a super::TrajectorySample>,
}

impl<'a> Lookup<'a> {
    fn new(series: &'a [VehicleSeries]) -> Self {
        let by_frame = series
            .iter()
            .flat_map(|s| s.samples.iter())
            .map(|x| ((x.vehicle_id, frame_key(x.time)), x))
            .collect();
        Self { by_frame }
    }

    /// Follower sample joined with its leader's state at the same frame.
    fn observe(&self, f: &super::TrajectorySample) -> Option<(u64, EpisodeSample)> {
        let leader = f.leader_id?;
        let gap = f.gap.filter(|g| *g > 0.0)?;
        let l = self.by_frame.get(&(leader, frame_key(f.time)))?;
        if l.lane_id != f.lane_id {
            return None;
        }
        Some((
            leader,
            EpisodeSample {
                t: f.time,
                v_lead: l.speed,
                a_lead: l.accel,
                v_ego: f.speed,
                gap,
            },
        ))
    }
}

/// Segments follower/leader interactions with the hysteresis rule.
///
/// An episode opens at the first sample with `THW <= begin_thw` or
/// `gap <= begin_gap`. It closes before the first sample where
/// `THW > end_thw` and `gap > end_gap`, where the leader changes, where the
/// leader's state is missing, or where the follower's log skips a frame.
pub fn extract_interactions(
    series: &[VehicleSeries],
    thresholds: &HysteresisThresholds,
) -> Vec<InteractionEpisode> {
    let lookup = Lookup::new(series);
    let mut episodes = Vec::new();
    for s in series {
        let period = s
            .samples
            .windows(2)
            .map(|w| w[1].time - w[0].time)
            .fold(f64::INFINITY, f64::min);
        let mut open: Option<InteractionEpisode> = None;
        let mut prev_t = f64::NEG_INFINITY;
        for f in &s.samples {
            let contiguous = f.time - prev_t <= 1.5 * period;
            prev_t = f.time;
            let obs = lookup.observe(f);
            if let Some(ep) = open.as_mut() {
                let keeps = match &obs {
                    Some((leader, x)) => {
                        contiguous && *leader == ep.leader_id && !thresholds.ends(x.thw(), x.gap)
                    }
                    None => false,
                };
                if keeps {
                    let x = obs.as_ref().map(|o| o.1).expect("checked above");
                    ep.end_time = x.t;
                    ep.samples.push(x);
                    continue;
                }
                episodes.extend(open.take());
            }
            if let Some((leader, x)) = obs {
                if thresholds.begins(x.thw(), x.gap) {
                    open = Some(InteractionEpisode {
                        follower_id: s.vehicle_id,
                        leader_id: leader,
                        start_time: x.t,
                        end_time: x.t,
                        samples: vec![x],
                    });
                }
            }
        }
        episodes.extend(open);
    }
    episodes
}
