//! Human-motion state diagram and constrained sequence decoding.

use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::features::{nn_classify, Classification, Dims, FeatureModel, NnOptions};
use crate::pbc::{MotionSegment, SegmentSource};
use crate::radon::MotionKind;
use crate::sim::Direction;

/// Motion classes I to XV.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum ClassId {
    I = 1,
    II,
    III,
    IV,
    V,
    VI,
    VII,
    VIII,
    IX,
    X,
    XI,
    XII,
    XIII,
    XIV,
    XV,
}

impl ClassId {
    pub const ALL: [ClassId; 15] = [
        ClassId::I,
        ClassId::II,
        ClassId::III,
        ClassId::IV,
        ClassId::V,
        ClassId::VI,
        ClassId::VII,
        ClassId::VIII,
        ClassId::IX,
        ClassId::X,
        ClassId::XI,
        ClassId::XII,
        ClassId::XIII,
        ClassId::XIV,
        ClassId::XV,
    ];

    const NUMERALS: [&'static str; 15] = [
        "I", "II", "III", "IV", "V", "VI", "VII", "VIII", "IX", "X", "XI", "XII", "XIII", "XIV",
        "XV",
    ];

    pub fn number(self) -> u8 {
        self as u8
    }

    pub fn from_number(n: u8) -> Result<Self> {
        ClassId::ALL
            .get((n as usize).wrapping_sub(1))
            .copied()
            .ok_or_else(|| Error::UnknownClass(n.to_string()))
    }

    pub fn numeral(self) -> &'static str {
        Self::NUMERALS[self as usize - 1]
    }
}

impl fmt::Display for ClassId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.numeral())
    }
}

impl FromStr for ClassId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::NUMERALS
            .iter()
            .position(|n| *n == s)
            .map(|i| ClassId::ALL[i])
            .ok_or_else(|| Error::UnknownClass(s.to_string()))
    }
}

/// Posture of the subject.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Posture {
    Walking,
    Standing,
    Sitting,
    Laying,
}

impl Posture {
    fn abbrev(self) -> &'static str {
        match self {
            Posture::Walking => "WS",
            Posture::Standing => "StS",
            Posture::Sitting => "SiS",
            Posture::Laying => "LS",
        }
    }
}

/// A node of the state diagram. Sitting carries no group.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Node {
    pub posture: Posture,
    pub group: Option<Direction>,
}

impl Node {
    pub const WS_T: Node = Node::new(Posture::Walking, Some(Direction::Toward));
    pub const WS_A: Node = Node::new(Posture::Walking, Some(Direction::Away));
    pub const STS_T: Node = Node::new(Posture::Standing, Some(Direction::Toward));
    pub const STS_A: Node = Node::new(Posture::Standing, Some(Direction::Away));
    pub const LS_T: Node = Node::new(Posture::Laying, Some(Direction::Toward));
    pub const LS_A: Node = Node::new(Posture::Laying, Some(Direction::Away));
    pub const SIS: Node = Node::new(Posture::Sitting, None);

    pub const ALL: [Node; 7] = [
        Node::WS_T,
        Node::WS_A,
        Node::STS_T,
        Node::STS_A,
        Node::SIS,
        Node::LS_T,
        Node::LS_A,
    ];

    pub const fn new(posture: Posture, group: Option<Direction>) -> Self {
        Self { posture, group }
    }

    pub fn walking(dir: Direction) -> Self {
        Node::new(Posture::Walking, Some(dir))
    }

    pub fn is_walking(self) -> bool {
        self.posture == Posture::Walking
    }

    /// Every node except the two walking ones.
    pub fn in_place_nodes() -> Vec<Node> {
        Node::ALL
            .iter()
            .copied()
            .filter(|n| !n.is_walking())
            .collect()
    }
}

impl fmt::Display for Node {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.group {
            Some(Direction::Toward) => write!(f, "{}_T", self.posture.abbrev()),
            Some(Direction::Away) => write!(f, "{}_A", self.posture.abbrev()),
            None => f.write_str(self.posture.abbrev()),
        }
    }
}

impl FromStr for Node {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Node::ALL
            .iter()
            .copied()
            .find(|n| n.to_string() == s)
            .ok_or_else(|| Error::Format(format!("unknown state `{s}`")))
    }
}

/// Orientation constraint of a motion class.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ClassDirection {
    Toward,
    Away,
    Either,
}

impl ClassDirection {
    pub fn as_str(self) -> &'static str {
        match self {
            ClassDirection::Toward => "toward",
            ClassDirection::Away => "away",
            ClassDirection::Either => "either",
        }
    }
}

/// One labelled motion and the transitions it performs.
#[derive(Debug, Clone, PartialEq)]
pub struct MotionClass {
    pub id: ClassId,
    pub name: &'static str,
    pub edges: Vec<(Node, Node)>,
    pub direction: ClassDirection,
    pub merged_with_translation: bool,
}

/// Time direction of a query or a decode pass.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TimeDirection {
    Forward,
    Backward,
}

impl TimeDirection {
    pub fn as_str(self) -> &'static str {
        match self {
            TimeDirection::Forward => "forward",
            TimeDirection::Backward => "backward",
        }
    }
}

impl fmt::Display for TimeDirection {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for TimeDirection {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "forward" => Ok(TimeDirection::Forward),
            "backward" => Ok(TimeDirection::Backward),
            other => Err(Error::Format(format!("unknown time direction `{other}`"))),
        }
    }
}

/// States, labelled edges and the unlabelled group changes.
#[derive(Debug, Clone, PartialEq)]
pub struct StateDiagram {
    pub classes: Vec<MotionClass>,
    /// Turning while standing.
    pub turn_edges: Vec<(Node, Node)>,
    /// Starting to walk away, which no class covers; the turn is implicit.
    pub unclassified_edges: Vec<(Node, Node)>,
}

impl Default for StateDiagram {
    fn default() -> Self {
        Self::standard()
    }
}

impl StateDiagram {
    /// The fifteen-class diagram.
    pub fn standard() -> Self {
        use ClassDirection as D;
        use ClassId::*;
        let c = |id, name, edges: &[(Node, Node)], direction, merged| MotionClass {
            id,
            name,
            edges: edges.to_vec(),
            direction,
            merged_with_translation: merged,
        };
        let classes = vec![
            c(
                I,
                "T-Walking-Stop/Bent",
                &[(Node::WS_T, Node::STS_T)],
                D::Toward,
                true,
            ),
            c(
                II,
                "T-Walking-Fall",
                &[(Node::WS_T, Node::LS_T)],
                D::Toward,
                true,
            ),
            c(
                III,
                "A-Walking-Stop/Bent",
                &[(Node::WS_A, Node::STS_A)],
                D::Away,
                true,
            ),
            c(
                IV,
                "A-Walking-Fall",
                &[(Node::WS_A, Node::LS_A)],
                D::Away,
                true,
            ),
            c(
                V,
                "Sitting down",
                &[(Node::STS_T, Node::SIS), (Node::STS_A, Node::SIS)],
                D::Either,
                false,
            ),
            c(
                VI,
                "T-Bending w. Standing",
                &[(Node::STS_T, Node::STS_T)],
                D::Toward,
                false,
            ),
            c(
                VII,
                "A-Bending w. Standing",
                &[(Node::STS_A, Node::STS_A)],
                D::Away,
                false,
            ),
            c(
                VIII,
                "T-Falling f. Standing",
                &[(Node::STS_T, Node::LS_T)],
                D::Toward,
                false,
            ),
            c(
                IX,
                "A-Falling f. Standing",
                &[(Node::STS_A, Node::LS_A)],
                D::Away,
                false,
            ),
            c(
                X,
                "T-Standing f. Falling",
                &[(Node::LS_T, Node::STS_T)],
                D::Toward,
                false,
            ),
            c(
                XI,
                "A-Standing f. Falling",
                &[(Node::LS_A, Node::STS_A)],
                D::Away,
                false,
            ),
            c(
                XII,
                "Standing f. Sitting",
                &[(Node::SIS, Node::STS_T)],
                D::Toward,
                false,
            ),
            c(
                XIII,
                "Bending w. Sitting",
                &[(Node::SIS, Node::SIS)],
                D::Toward,
                false,
            ),
            c(
                XIV,
                "Standing up - Walking",
                &[(Node::SIS, Node::WS_T)],
                D::Toward,
                true,
            ),
            c(
                XV,
                "Start Walking",
                &[(Node::STS_T, Node::WS_T)],
                D::Toward,
                true,
            ),
        ];
        Self {
            classes,
            turn_edges: vec![(Node::STS_T, Node::STS_A), (Node::STS_A, Node::STS_T)],
            unclassified_edges: vec![(Node::STS_T, Node::WS_A), (Node::STS_A, Node::WS_A)],
        }
    }

    pub fn class(&self, id: ClassId) -> &MotionClass {
        self.classes
            .iter()
            .find(|c| c.id == id)
            .expect("every class id is in the diagram")
    }

    /// Classes leaving `node` (forward) or entering it (backward).
    ///
    /// Walking nodes see only the classes merged with translation; other
    /// nodes see only in-place classes, since transitions to or from walking
    /// are handled at Radon breakpoints. Entering a standing node backward
    /// considers both groups, as the orientation before a turn is unknown.
    pub fn class_set_at(&self, node: Node, dir: TimeDirection) -> Vec<ClassId> {
        let targets: Vec<Node> = match (dir, node.posture) {
            (TimeDirection::Backward, Posture::Standing) => vec![Node::STS_T, Node::STS_A],
            _ => vec![node],
        };
        let mut out: Vec<ClassId> = self
            .classes
            .iter()
            .filter(|c| c.merged_with_translation == node.is_walking())
            .filter(|c| {
                c.edges.iter().any(|&(from, to)| match dir {
                    TimeDirection::Forward => from == node,
                    TimeDirection::Backward => targets.contains(&to),
                })
            })
            .map(|c| c.id)
            .collect();
        out.sort();
        out
    }

    /// Union of [`Self::class_set_at`] over several nodes.
    pub fn class_set_union(&self, nodes: &[Node], dir: TimeDirection) -> Vec<ClassId> {
        let set: BTreeSet<ClassId> = nodes
            .iter()
            .flat_map(|&n| self.class_set_at(n, dir))
            .collect();
        set.into_iter().collect()
    }

    /// Nodes reached by `classes` from any of `from` (forward), or the nodes
    /// they start from when ending in any of `from` (backward).
    pub fn step(&self, from: &[Node], classes: &[ClassId], dir: TimeDirection) -> Vec<Node> {
        let mut out = BTreeSet::new();
        for &id in classes {
            for &(a, b) in &self.class(id).edges {
                match dir {
                    TimeDirection::Forward if from.contains(&a) => {
                        out.insert(b);
                    }
                    TimeDirection::Backward if from.contains(&b) || self.turn_reaches(from, b) => {
                        out.insert(a);
                    }
                    _ => {}
                }
            }
        }
        out.into_iter().collect()
    }

    fn turn_reaches(&self, nodes: &[Node], n: Node) -> bool {
        self.turn_edges
            .iter()
            .any(|&(a, b)| a == n && nodes.contains(&b))
    }

    /// Whether `id` has an edge `from -> to`, allowing a turn at the end of
    /// a standing state.
    pub fn connects(&self, from: Node, id: ClassId, to: Node) -> bool {
        self.class(id)
            .edges
            .iter()
            .any(|&(a, b)| a == from && (b == to || self.turn_edges.contains(&(b, to))))
    }

    pub fn to_json(&self) -> Result<String> {
        #[derive(Serialize)]
        struct EdgeJson {
            class: String,
            number: u8,
            name: &'static str,
            from: String,
            to: String,
            direction: &'static str,
            merged_with_translation: bool,
        }
        #[derive(Serialize)]
        struct PairJson {
            from: String,
            to: String,
        }
        #[derive(Serialize)]
        struct DiagramJson {
            states: Vec<String>,
            edges: Vec<EdgeJson>,
            turn_edges: Vec<PairJson>,
            unclassified_edges: Vec<PairJson>,
        }
        let pairs = |v: &[(Node, Node)]| {
            v.iter()
                .map(|(a, b)| PairJson {
                    from: a.to_string(),
                    to: b.to_string(),
                })
                .collect()
        };
        let doc = DiagramJson {
            states: Node::ALL.iter().map(|n| n.to_string()).collect(),
            edges: self
                .classes
                .iter()
                .flat_map(|c| {
                    c.edges.iter().map(move |(a, b)| EdgeJson {
                        class: c.id.to_string(),
                        number: c.id.number(),
                        name: c.name,
                        from: a.to_string(),
                        to: b.to_string(),
                        direction: c.direction.as_str(),
                        merged_with_translation: c.merged_with_translation,
                    })
                })
                .collect(),
            turn_edges: pairs(&self.turn_edges),
            unclassified_edges: pairs(&self.unclassified_edges),
        };
        Ok(serde_json::to_string_pretty(&doc)?)
    }
}

/// A named classifier: a fixed class set with its own feature dims.
#[derive(Debug, Clone, PartialEq)]
pub struct ClassifierSpec {
    pub id: u8,
    pub classes: Vec<ClassId>,
    pub dims: Dims,
    /// Known to miss its classes often enough that the next query should
    /// consider every state it could have led to.
    pub expand_after: bool,
}

/// Classifiers 1 to 11. Class sets that match none of them get id 0.
#[derive(Debug, Clone, PartialEq)]
pub struct ClassifierRegistry {
    pub entries: Vec<ClassifierSpec>,
    pub fallback_dims: Dims,
}

impl Default for ClassifierRegistry {
    fn default() -> Self {
        use ClassId::*;
        let e = |id, classes: &[ClassId], d_md, d_rm, expand_after| {
            let mut classes = classes.to_vec();
            classes.sort();
            ClassifierSpec {
                id,
                classes,
                dims: Dims { d_md, d_rm },
                expand_after,
            }
        };
        Self {
            entries: vec![
                e(1, &[I, II], 2, 1, true),
                e(2, &[V, VI, VIII, X], 6, 2, false),
                e(3, &[XIV, XV], 14, 4, false),
                e(4, &[VI, VII, X, XI, XII], 7, 2, false),
                e(5, &[V, VI, VIII], 6, 2, false),
                e(6, &[XII, XIII], 14, 4, false),
                e(7, &[V, XIII], 14, 4, false),
                e(8, &[III, IV], 10, 2, true),
                e(9, &[V, VII, IX, XI], 10, 2, true),
                e(10, &[V, VII, IX, XI, XII, XIII], 10, 2, true),
                e(11, &[V, VI, VII, VIII, IX, XI, XII, XIII], 10, 2, false),
            ],
            fallback_dims: Dims::default(),
        }
    }
}

impl ClassifierRegistry {
    /// Registry id for a class set, 0 if none matches.
    pub fn lookup(&self, classes: &[ClassId]) -> u8 {
        let mut key = classes.to_vec();
        key.sort();
        key.dedup();
        self.entries
            .iter()
            .find(|e| e.classes == key)
            .map_or(0, |e| e.id)
    }

    pub fn get(&self, id: u8) -> Option<&ClassifierSpec> {
        self.entries.iter().find(|e| e.id == id)
    }

    pub fn dims(&self, id: u8) -> Dims {
        self.get(id).map_or(self.fallback_dims, |e| e.dims)
    }

    pub fn expand_after(&self, id: u8) -> bool {
        self.get(id).is_some_and(|e| e.expand_after)
    }

    /// Replace the dims of one classifier.
    pub fn set_dims(&mut self, id: u8, dims: Dims) -> Result<()> {
        let e = self
            .entries
            .iter_mut()
            .find(|e| e.id == id)
            .ok_or_else(|| Error::InvalidParams(format!("no classifier with id {id}")))?;
        e.dims = dims;
        Ok(())
    }
}

/// Labels plus the registry id of the matching classifier.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ClassSet {
    pub classes: Vec<ClassId>,
    pub classifier_id: u8,
}

/// Class-set query for one state. With `expand`, the query runs over every
/// state the base set could lead to (forward) or come from (backward).
pub fn class_set(
    diagram: &StateDiagram,
    registry: &ClassifierRegistry,
    node: Node,
    dir: TimeDirection,
    expand: bool,
) -> ClassSet {
    let base = diagram.class_set_at(node, dir);
    let classes = if expand {
        let reach = diagram.step(&[node], &base, dir);
        diagram.class_set_union(&reach, dir)
    } else {
        base
    };
    ClassSet {
        classifier_id: registry.lookup(&classes),
        classes,
    }
}

/// Where a classified event sits relative to the Radon timeline.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EventContext {
    /// Walking merged into the following in-place motion.
    Entry,
    /// In-place motion merged into the following walk.
    Exit,
    /// Isolated in-place burst.
    InPlace,
}

impl EventContext {
    pub fn as_str(self) -> &'static str {
        match self {
            EventContext::Entry => "entry",
            EventContext::Exit => "exit",
            EventContext::InPlace => "inplace",
        }
    }
}

/// Something that labels a segment from a restricted class set.
pub trait EventClassifier {
    fn classify(
        &self,
        segment: usize,
        classes: &[ClassId],
        classifier_id: u8,
    ) -> Result<Classification>;
}

/// Returns a fixed label per segment with full confidence.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct StubClassifier {
    pub labels: Vec<Option<ClassId>>,
}

impl EventClassifier for StubClassifier {
    fn classify(
        &self,
        segment: usize,
        _classes: &[ClassId],
        _classifier_id: u8,
    ) -> Result<Classification> {
        let label = self.labels.get(segment).copied().flatten().ok_or_else(|| {
            Error::DecodeInconsistency {
                segment,
                reason: "stub has no label for this segment".into(),
            }
        })?;
        Ok(Classification {
            label,
            margin: 1.0,
            distance: 0.0,
        })
    }
}

/// Nearest-neighbor classification of precomputed fused feature vectors,
/// using the dims registered for each classifier.
pub struct NnEventClassifier<'a> {
    pub model: &'a FeatureModel,
    /// Full-dims fused vector per segment, `None` for segments without a snippet.
    pub features: Vec<Option<Vec<f64>>>,
    pub registry: &'a ClassifierRegistry,
    pub k: usize,
}

impl EventClassifier for NnEventClassifier<'_> {
    fn classify(
        &self,
        segment: usize,
        classes: &[ClassId],
        classifier_id: u8,
    ) -> Result<Classification> {
        let query = self
            .features
            .get(segment)
            .and_then(|f| f.as_ref())
            .ok_or_else(|| Error::DecodeInconsistency {
                segment,
                reason: "no snippet for this segment".into(),
            })?;
        let dims = self.registry.dims(classifier_id);
        let dims = Dims {
            d_md: dims.d_md.min(self.model.d_md),
            d_rm: dims.d_rm.min(self.model.d_rm),
        };
        nn_classify(query, self.model, classes, &NnOptions { k: self.k, dims })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DecoderOptions {
    /// Margin below which the next query is expanded.
    pub tau: f64,
    pub registry: ClassifierRegistry,
}

impl Default for DecoderOptions {
    fn default() -> Self {
        Self {
            tau: 0.05,
            registry: ClassifierRegistry::default(),
        }
    }
}

/// One classified (or unclassifiable) event.
#[derive(Debug, Clone, PartialEq)]
pub struct DecodedEvent {
    /// Index into the segment list.
    pub segment: usize,
    pub onset: f64,
    pub offset: f64,
    pub context: EventContext,
    /// Classes the classifier chose from.
    pub classes: Vec<ClassId>,
    pub classifier_id: u8,
    pub label: Option<ClassId>,
    pub margin: f64,
    /// State after the event, in time order.
    pub state_after: Option<Node>,
    /// Whether the following query was expanded because of this event.
    pub expanded: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DecodedTimeline {
    pub direction: TimeDirection,
    /// State before the first event, in time order.
    pub initial: Option<Node>,
    /// Events in time order, whichever direction they were decoded in.
    pub events: Vec<DecodedEvent>,
}

impl DecodedTimeline {
    /// Initial state followed by every state after an event.
    pub fn state_trace(&self) -> Vec<Node> {
        self.initial
            .iter()
            .copied()
            .chain(self.events.iter().filter_map(|e| e.state_after))
            .collect()
    }

    pub fn labels(&self) -> Vec<Option<ClassId>> {
        self.events.iter().map(|e| e.label).collect()
    }

    /// Whether two consecutive in-place events carry the same label.
    pub fn has_repeated_in_place(&self) -> bool {
        let mut last = None;
        for e in &self.events {
            match e.context {
                EventContext::InPlace => {
                    if e.label.is_some() && e.label == last {
                        return true;
                    }
                    last = e.label;
                }
                _ => last = None,
            }
        }
        false
    }

    pub fn event_for(&self, segment: usize) -> Option<&DecodedEvent> {
        self.events.iter().find(|e| e.segment == segment)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Step {
    Span {
        dir: Option<Direction>,
    },
    Event {
        segment: usize,
        context: EventContext,
    },
}

/// Order segments along the Radon timeline: each Radon interval, the merged
/// event at the breakpoint before it, and the in-place events inside it.
fn plan(segments: &[MotionSegment]) -> Vec<Step> {
    let spans: Vec<usize> = (0..segments.len())
        .filter(|&i| segments[i].source == SegmentSource::Radon)
        .collect();
    let mut used = vec![false; segments.len()];
    let mut steps = Vec::new();

    for (n, &si) in spans.iter().enumerate() {
        let span = &segments[si];
        if n > 0 {
            let prev = &segments[spans[n - 1]];
            let t = span.onset;
            let want = match (prev.kind, span.kind) {
                (MotionKind::Translation, MotionKind::InPlace) => {
                    Some((MotionKind::InPlace, EventContext::Entry))
                }
                (MotionKind::InPlace, MotionKind::Translation) => {
                    Some((MotionKind::Translation, EventContext::Exit))
                }
                _ => None,
            };
            if let Some((kind, context)) = want {
                let found = (0..segments.len())
                    .filter(|&i| {
                        !used[i]
                            && segments[i].source == SegmentSource::Merged
                            && segments[i].kind == kind
                    })
                    .min_by(|&a, &b| {
                        let da = window_distance(segments[a].capture, t);
                        let db = window_distance(segments[b].capture, t);
                        da.total_cmp(&db)
                    });
                if let Some(i) = found {
                    used[i] = true;
                    steps.push(Step::Event {
                        segment: i,
                        context,
                    });
                }
            }
        }
        steps.push(Step::Span {
            dir: match span.kind {
                MotionKind::Translation => span.direction,
                MotionKind::InPlace => None,
            },
        });
        if span.kind == MotionKind::InPlace {
            let mut inside: Vec<usize> = (0..segments.len())
                .filter(|&i| {
                    let s = &segments[i];
                    let mid = 0.5 * (s.onset + s.offset);
                    !used[i]
                        && s.source == SegmentSource::Pbc
                        && mid >= span.onset
                        && mid <= span.offset
                })
                .collect();
            inside.sort_by(|&a, &b| segments[a].onset.total_cmp(&segments[b].onset));
            for i in inside {
                used[i] = true;
                steps.push(Step::Event {
                    segment: i,
                    context: EventContext::InPlace,
                });
            }
        }
    }
    steps
}

fn window_distance((a, b): (f64, f64), t: f64) -> f64 {
    if t < a {
        a - t
    } else if t > b {
        t - b
    } else {
        0.0
    }
}

fn span_nodes(dir: Option<Direction>) -> Vec<Node> {
    match dir {
        Some(d) => vec![Node::walking(d)],
        None => Node::in_place_nodes(),
    }
}

fn single(nodes: &[Node]) -> Option<Node> {
    match nodes {
        [n] => Some(*n),
        _ => None,
    }
}

struct Decoder<'a, C: EventClassifier + ?Sized> {
    diagram: &'a StateDiagram,
    opts: &'a DecoderOptions,
    classifier: &'a C,
    segments: &'a [MotionSegment],
}

impl<C: EventClassifier + ?Sized> Decoder<'_, C> {
    /// Candidate classes for an event given the plausible states on the
    /// already-decoded side. Merged events are anchored on the walking state
    /// the Radon timeline observed.
    fn candidates(
        &self,
        context: EventContext,
        walk: Option<Direction>,
        plausible: &[Node],
        dir: TimeDirection,
    ) -> Vec<ClassId> {
        match (context, walk) {
            (EventContext::Entry, Some(d)) => self
                .diagram
                .class_set_at(Node::walking(d), TimeDirection::Forward),
            (EventContext::Exit, Some(d)) => self
                .diagram
                .class_set_at(Node::walking(d), TimeDirection::Backward),
            (EventContext::InPlace, _) => self.diagram.class_set_union(plausible, dir),
            _ => Vec::new(),
        }
    }

    fn classify(
        &self,
        segment: usize,
        set: &[ClassId],
        exclude: Option<ClassId>,
    ) -> Result<Option<(Vec<ClassId>, u8, Classification)>> {
        let classifier_id = self.opts.registry.lookup(set);
        let allowed: Vec<ClassId> = set
            .iter()
            .copied()
            .filter(|&c| Some(c) != exclude)
            .collect();
        if allowed.is_empty() {
            return Ok(None);
        }
        let c = self.classifier.classify(segment, &allowed, classifier_id)?;
        if !allowed.contains(&c.label) {
            return Err(Error::DecodeInconsistency {
                segment,
                reason: format!(
                    "class {} is not reachable here (allowed: {})",
                    c.label,
                    join(&allowed)
                ),
            });
        }
        Ok(Some((allowed, classifier_id, c)))
    }

    fn expand(&self, classifier_id: u8, margin: f64) -> bool {
        margin < self.opts.tau || self.opts.registry.expand_after(classifier_id)
    }

    fn forward(&self) -> Result<DecodedTimeline> {
        let steps = plan(self.segments);
        let mut plausible: Vec<Node> = Vec::new();
        let mut initial = None;
        let mut last_in_place: Option<ClassId> = None;
        let mut events = Vec::new();

        for (n, step) in steps.iter().enumerate() {
            match *step {
                Step::Span { dir } => {
                    if dir.is_some() || n == 0 {
                        plausible = span_nodes(dir);
                    }
                    if dir.is_some() {
                        last_in_place = None;
                    }
                    if n == 0 {
                        initial = single(&plausible);
                    }
                }
                Step::Event { segment, context } => {
                    let seg = &self.segments[segment];
                    let set =
                        self.candidates(context, seg.direction, &plausible, TimeDirection::Forward);
                    let exclude = if context == EventContext::InPlace {
                        last_in_place
                    } else {
                        None
                    };
                    let mut ev = DecodedEvent {
                        segment,
                        onset: seg.onset,
                        offset: seg.offset,
                        context,
                        classes: set.clone(),
                        classifier_id: self.opts.registry.lookup(&set),
                        label: None,
                        margin: 0.0,
                        state_after: None,
                        expanded: false,
                    };
                    match self.classify(segment, &set, exclude)? {
                        Some((allowed, id, c)) => {
                            let from = match context {
                                EventContext::Entry => vec![Node::walking(
                                    seg.direction.expect("entry has a direction"),
                                )],
                                EventContext::Exit => self.diagram.step(
                                    &seg.direction
                                        .map(Node::walking)
                                        .into_iter()
                                        .collect::<Vec<_>>(),
                                    &[c.label],
                                    TimeDirection::Backward,
                                ),
                                EventContext::InPlace => plausible.clone(),
                            };
                            let to = self.diagram.step(&from, &[c.label], TimeDirection::Forward);
                            let to = match context {
                                EventContext::Exit => {
                                    seg.direction.map(Node::walking).into_iter().collect()
                                }
                                _ => to,
                            };
                            if to.is_empty() {
                                return Err(Error::DecodeInconsistency {
                                    segment,
                                    reason: format!(
                                        "class {} has no edge from {}",
                                        c.label,
                                        join(&from)
                                    ),
                                });
                            }
                            ev.classes = allowed.clone();
                            ev.classifier_id = id;
                            ev.label = Some(c.label);
                            ev.margin = c.margin;
                            ev.state_after = single(&to);
                            ev.expanded =
                                context != EventContext::Exit && self.expand(id, c.margin);
                            plausible = if ev.expanded {
                                self.diagram.step(&from, &allowed, TimeDirection::Forward)
                            } else {
                                to
                            };
                            if context == EventContext::InPlace {
                                last_in_place = Some(c.label);
                            }
                        }
                        None => {
                            if let (EventContext::Exit, Some(d)) = (context, seg.direction) {
                                plausible = vec![Node::walking(d)];
                                ev.state_after = Some(Node::walking(d));
                            }
                        }
                    }
                    events.push(ev);
                }
            }
        }
        Ok(DecodedTimeline {
            direction: TimeDirection::Forward,
            initial,
            events,
        })
    }

    fn backward(&self) -> Result<DecodedTimeline> {
        let steps = plan(self.segments);
        let mut plausible: Vec<Node> = Vec::new();
        let mut next_in_place: Option<ClassId> = None;
        let mut events = Vec::new();
        let mut initial = None;

        for (n, step) in steps.iter().enumerate().rev() {
            match *step {
                Step::Span { dir } => {
                    if dir.is_some() || n + 1 == steps.len() {
                        plausible = span_nodes(dir);
                    }
                    if dir.is_some() {
                        next_in_place = None;
                    }
                    if n == 0 {
                        initial = single(&plausible);
                    }
                }
                Step::Event { segment, context } => {
                    let seg = &self.segments[segment];
                    let set = self.candidates(
                        context,
                        seg.direction,
                        &plausible,
                        TimeDirection::Backward,
                    );
                    let exclude = if context == EventContext::InPlace {
                        next_in_place
                    } else {
                        None
                    };
                    let mut ev = DecodedEvent {
                        segment,
                        onset: seg.onset,
                        offset: seg.offset,
                        context,
                        classes: set.clone(),
                        classifier_id: self.opts.registry.lookup(&set),
                        label: None,
                        margin: 0.0,
                        state_after: None,
                        expanded: false,
                    };
                    match self.classify(segment, &set, exclude)? {
                        Some((allowed, id, c)) => {
                            // nodes the event may end in, seen from the later side
                            let after: Vec<Node> = match context {
                                EventContext::Exit => {
                                    seg.direction.map(Node::walking).into_iter().collect()
                                }
                                EventContext::Entry => {
                                    let from: Vec<Node> =
                                        seg.direction.map(Node::walking).into_iter().collect();
                                    self.diagram.step(&from, &[c.label], TimeDirection::Forward)
                                }
                                EventContext::InPlace => plausible.clone(),
                            };
                            let before =
                                self.diagram
                                    .step(&after, &[c.label], TimeDirection::Backward);
                            if before.is_empty() {
                                return Err(Error::DecodeInconsistency {
                                    segment,
                                    reason: format!(
                                        "class {} has no edge into {}",
                                        c.label,
                                        join(&after)
                                    ),
                                });
                            }
                            let landed =
                                self.diagram
                                    .step(&before, &[c.label], TimeDirection::Forward);
                            ev.classes = allowed.clone();
                            ev.classifier_id = id;
                            ev.label = Some(c.label);
                            ev.margin = c.margin;
                            ev.state_after = single(&landed);
                            ev.expanded =
                                context != EventContext::Entry && self.expand(id, c.margin);
                            plausible = match context {
                                EventContext::Entry => {
                                    seg.direction.map(Node::walking).into_iter().collect()
                                }
                                _ if ev.expanded => {
                                    self.diagram.step(&after, &allowed, TimeDirection::Backward)
                                }
                                _ => before,
                            };
                            if context == EventContext::InPlace {
                                next_in_place = Some(c.label);
                            }
                        }
                        None => {
                            if let (EventContext::Exit, Some(d)) = (context, seg.direction) {
                                ev.state_after = Some(Node::walking(d));
                                plausible = self
                                    .diagram
                                    .unclassified_edges
                                    .iter()
                                    .filter(|&&(_, b)| b == Node::walking(d))
                                    .map(|&(a, _)| a)
                                    .collect();
                            }
                        }
                    }
                    events.push(ev);
                }
            }
        }
        events.reverse();
        Ok(DecodedTimeline {
            direction: TimeDirection::Backward,
            initial,
            events,
        })
    }
}

fn join<T: fmt::Display>(items: &[T]) -> String {
    items
        .iter()
        .map(|i| i.to_string())
        .collect::<Vec<_>>()
        .join(",")
}

/// Greedy decode in time order.
pub fn decode_forward<C: EventClassifier + ?Sized>(
    segments: &[MotionSegment],
    classifier: &C,
    diagram: &StateDiagram,
    opts: &DecoderOptions,
) -> Result<DecodedTimeline> {
    Decoder {
        diagram,
        opts,
        classifier,
        segments,
    }
    .forward()
}

/// Greedy decode from the last observed state back to the first.
pub fn decode_backward<C: EventClassifier + ?Sized>(
    segments: &[MotionSegment],
    classifier: &C,
    diagram: &StateDiagram,
    opts: &DecoderOptions,
) -> Result<DecodedTimeline> {
    Decoder {
        diagram,
        opts,
        classifier,
        segments,
    }
    .backward()
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReconcileRow {
    pub segment: usize,
    pub onset: f64,
    pub offset: f64,
    pub forward: Option<ClassId>,
    pub backward: Option<ClassId>,
    pub agree: bool,
    pub forward_margin: f64,
    pub backward_margin: f64,
    pub state_after: Option<Node>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReconcileReport {
    pub rows: Vec<ReconcileRow>,
}

impl ReconcileReport {
    /// Fraction of rows on which both passes agree; 1 when there are none.
    pub fn agreement_rate(&self) -> f64 {
        if self.rows.is_empty() {
            return 1.0;
        }
        self.rows.iter().filter(|r| r.agree).count() as f64 / self.rows.len() as f64
    }
}

/// Side-by-side forward and backward opinions per event segment.
pub fn reconcile(fwd: &DecodedTimeline, bwd: &DecodedTimeline) -> ReconcileReport {
    let mut segs: Vec<usize> = fwd
        .events
        .iter()
        .chain(&bwd.events)
        .map(|e| e.segment)
        .collect();
    segs.sort();
    segs.dedup();
    let rows = segs
        .into_iter()
        .map(|s| {
            let f = fwd.event_for(s);
            let b = bwd.event_for(s);
            let any = f.or(b).expect("segment came from one of the timelines");
            let forward = f.and_then(|e| e.label);
            let backward = b.and_then(|e| e.label);
            ReconcileRow {
                segment: s,
                onset: any.onset,
                offset: any.offset,
                forward,
                backward,
                agree: forward == backward,
                forward_margin: f.map_or(0.0, |e| e.margin),
                backward_margin: b.map_or(0.0, |e| e.margin),
                state_after: f
                    .and_then(|e| e.state_after)
                    .or(b.and_then(|e| e.state_after)),
            }
        })
        .collect();
    ReconcileReport { rows }
}
