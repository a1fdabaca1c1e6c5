//! Parent-selection metrics.
//!
//! Both metrics decrease monotonically towards the base station. The
//! location metric adds a penalty to candidates lying in the direction where
//! the node has recently lost neighbours, steering around a failed area.

use crate::scalar::{angle_between, mean_bearing, Point, Scalar};
use crate::topology::NodeId;

use super::config::{Metric, ProtocolConfig};
use super::message::Hops;

/// A neighbour that answered REQUEST with a route.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ParentCandidate<S = f64> {
    pub neighbor: NodeId,
    pub hops: Hops,
    pub neighbor_parent: NodeId,
    pub position: Option<Point<S>>,
}

/// What the metric needs to know about the selecting node.
#[derive(Debug, Clone, Default)]
pub struct MetricView<S = f64> {
    pub position: Option<Point<S>>,
    /// Positions of neighbours recently detected as failed.
    pub failed_positions: Vec<Point<S>>,
}

/// Whether `candidate` lies within `half_angle_deg` of the mean bearing of
/// the failed neighbours, seen from `origin`.
pub fn in_failed_cone<S: Scalar>(
    origin: Point<S>,
    failed: &[Point<S>],
    candidate: Point<S>,
    half_angle_deg: S,
) -> bool {
    let Some(mean) = mean_bearing(failed.iter().map(|p| origin.bearing_to(p))) else {
        return false;
    };
    let half = half_angle_deg.to_radians();
    angle_between(origin.bearing_to(&candidate), mean) <= half
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Score {
    pub value: u64,
    /// LOCATION was requested but positions were missing.
    pub fell_back: bool,
}

/// Lower is better; ties are broken by node id by the caller.
///
/// Panics if the candidate's hops are infinite.
pub fn metric_score<S: Scalar>(
    candidate: &ParentCandidate<S>,
    view: &MetricView<S>,
    config: &ProtocolConfig,
) -> Score {
    let hops = u64::from(
        candidate
            .hops
            .finite()
            .expect("candidates advertise finite hops"),
    );
    match config.metric {
        Metric::Hop => Score {
            value: hops,
            fell_back: false,
        },
        Metric::Location => match (view.position, candidate.position) {
            (Some(me), Some(them)) => {
                let cone = S::from_f64_lossy(config.location_cone_deg);
                let penalty = if in_failed_cone(me, &view.failed_positions, them, cone) {
                    u64::from(config.location_penalty)
                } else {
                    0
                };
                Score {
                    value: hops + penalty,
                    fell_back: false,
                }
            }
            _ => Score {
                value: hops,
                fell_back: true,
            },
        },
    }
}

/// Best candidate by (score, id).
pub fn best_candidate<'a, S: Scalar>(
    candidates: impl IntoIterator<Item = &'a ParentCandidate<S>>,
    view: &MetricView<S>,
    config: &ProtocolConfig,
) -> Option<(&'a ParentCandidate<S>, Score)> {
    candidates
        .into_iter()
        .map(|c| (c, metric_score(c, view, config)))
        .min_by_key(|(c, s)| (s.value, c.neighbor))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cand(id: u32, hops: u32, pos: Option<(f64, f64)>) -> ParentCandidate {
        ParentCandidate {
            neighbor: NodeId(id),
            hops: Hops::Finite(hops),
            neighbor_parent: NodeId(0),
            position: pos.map(|(x, y)| Point::new(x, y)),
        }
    }

    #[test]
    fn hop_metric_prefers_fewer_hops() {
        let cfg = ProtocolConfig::default();
        let view = MetricView::default();
        let cs = [cand(7, 3, None), cand(8, 2, None)];
        let (best, score) = best_candidate(&cs, &view, &cfg).unwrap();
        assert_eq!(best.neighbor, NodeId(8));
        assert_eq!(score.value, 2);
    }

    #[test]
    fn location_penalises_failed_direction() {
        let cfg = ProtocolConfig {
            metric: Metric::Location,
            location_penalty: 4,
            ..Default::default()
        };
        let view = MetricView {
            position: Some(Point::new(0.0, 0.0)),
            failed_positions: vec![Point::new(10.0, 0.0), Point::new(10.0, 2.0)],
        };
        let east = cand(3, 2, Some((12.0, 1.0)));
        let west = cand(4, 2, Some((-10.0, 0.0)));
        assert_eq!(metric_score(&east, &view, &cfg).value, 6);
        assert_eq!(metric_score(&west, &view, &cfg).value, 2);
        let cs = [east, west];
        assert_eq!(
            best_candidate(&cs, &view, &cfg).unwrap().0.neighbor,
            NodeId(4)
        );
    }

    #[test]
    fn location_without_failures_is_hop() {
        let cfg = ProtocolConfig {
            metric: Metric::Location,
            ..Default::default()
        };
        let view = MetricView {
            position: Some(Point::new(0.0, 0.0)),
            failed_positions: vec![],
        };
        let c = cand(3, 5, Some((1.0, 1.0)));
        assert_eq!(
            metric_score(&c, &view, &cfg),
            Score {
                value: 5,
                fell_back: false
            }
        );
        let blind = MetricView::<f64>::default();
        assert_eq!(
            metric_score(&c, &blind, &cfg),
            Score {
                value: 5,
                fell_back: true
            }
        );
    }

    #[test]
    fn cone_is_generic_over_precision() {
        let o = Point::new(0.0f32, 0.0);
        let failed = [Point::new(0.0f32, 5.0)];
        assert!(in_failed_cone(o, &failed, Point::new(1.0, 5.0), 60.0));
        assert!(!in_failed_cone(o, &failed, Point::new(5.0, -1.0), 60.0));
        // exactly on the boundary: 60 degrees off the failed bearing
        let edge = Point::new(60f64.to_radians().sin(), 60f64.to_radians().cos());
        assert!(in_failed_cone(
            Point::new(0.0, 0.0),
            &[Point::new(0.0, 1.0)],
            edge,
            60.0 + 1e-9
        ));
    }
}
