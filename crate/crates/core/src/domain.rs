//! Board geometry, the pairwise relation algebra, constraints and actions.
//!
//! The four destination bins form a 2x2 grid in the overhead frame. A bin is
//! encoded as two bits (row, column), so the relation between two bins is the
//! XOR of their codes and composing relations is XOR as well: the relation set
//! is the Klein four-group with `SameBin` as identity.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{DomainError, ParseError};

/// Every location on the table.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BinId {
    TopLeft,
    TopRight,
    BottomLeft,
    BottomRight,
    AreaP1,
    AreaP2,
    Common,
}

impl BinId {
    pub const ALL: [BinId; 7] = [
        BinId::TopLeft,
        BinId::TopRight,
        BinId::BottomLeft,
        BinId::BottomRight,
        BinId::AreaP1,
        BinId::AreaP2,
        BinId::Common,
    ];

    /// Destination bins in the fixed TL, TR, BL, BR order.
    pub const DESTINATIONS: [BinId; 4] = [
        BinId::TopLeft,
        BinId::TopRight,
        BinId::BottomLeft,
        BinId::BottomRight,
    ];

    pub fn is_destination(self) -> bool {
        self.dest_code().is_some()
    }

    /// Two-bit code `row << 1 | col` for destination bins.
    pub fn dest_code(self) -> Option<u8> {
        match self {
            BinId::TopLeft => Some(0),
            BinId::TopRight => Some(1),
            BinId::BottomLeft => Some(2),
            BinId::BottomRight => Some(3),
            _ => None,
        }
    }

    pub fn from_dest_code(code: u8) -> BinId {
        BinId::DESTINATIONS[(code & 3) as usize]
    }

    pub fn name(self) -> &'static str {
        match self {
            BinId::TopLeft => "top_left",
            BinId::TopRight => "top_right",
            BinId::BottomLeft => "bottom_left",
            BinId::BottomRight => "bottom_right",
            BinId::AreaP1 => "area_p1",
            BinId::AreaP2 => "area_p2",
            BinId::Common => "common",
        }
    }
}

impl fmt::Display for BinId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for BinId {
    type Err = ParseError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        BinId::ALL
            .into_iter()
            .find(|b| b.name() == s.trim())
            .ok_or_else(|| ParseError::UnknownBin(s.trim().to_string()))
    }
}

/// A set of destination bins as a 4-bit mask indexed by `dest_code`.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct BinSet(pub u8);

impl BinSet {
    pub const EMPTY: BinSet = BinSet(0);
    pub const ALL: BinSet = BinSet(0b1111);

    pub fn single(bin: BinId) -> BinSet {
        match bin.dest_code() {
            Some(c) => BinSet(1 << c),
            None => BinSet::EMPTY,
        }
    }

    pub fn contains(self, bin: BinId) -> bool {
        bin.dest_code().is_some_and(|c| self.0 & (1 << c) != 0)
    }

    pub fn insert(&mut self, bin: BinId) {
        if let Some(c) = bin.dest_code() {
            self.0 |= 1 << c;
        }
    }

    pub fn remove(&mut self, bin: BinId) {
        if let Some(c) = bin.dest_code() {
            self.0 &= !(1 << c);
        }
    }

    pub fn len(self) -> usize {
        self.0.count_ones() as usize
    }

    pub fn is_empty(self) -> bool {
        self.0 == 0
    }

    pub fn union(self, other: BinSet) -> BinSet {
        BinSet(self.0 | other.0)
    }

    pub fn intersection(self, other: BinSet) -> BinSet {
        BinSet(self.0 & other.0)
    }

    pub fn difference(self, other: BinSet) -> BinSet {
        BinSet(self.0 & !other.0)
    }

    pub fn is_subset(self, other: BinSet) -> bool {
        self.0 & !other.0 == 0
    }

    /// The single member, if there is exactly one.
    pub fn only(self) -> Option<BinId> {
        (self.len() == 1).then(|| BinId::from_dest_code(self.0.trailing_zeros() as u8))
    }

    /// Members in TL, TR, BL, BR order.
    pub fn iter(self) -> impl Iterator<Item = BinId> {
        BinId::DESTINATIONS
            .into_iter()
            .filter(move |b| self.contains(*b))
    }

    /// Translate every member by a relation (the group acts on bins by XOR).
    pub fn shifted(self, rel: Relation) -> BinSet {
        let mut out = BinSet::EMPTY;
        for b in self.iter() {
            out.insert(rel.apply(b));
        }
        out
    }
}

impl fmt::Display for BinSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let names: Vec<&str> = self.iter().map(BinId::name).collect();
        write!(f, "{{{}}}", names.join(", "))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PlayerId {
    P1,
    P2,
}

impl PlayerId {
    pub const BOTH: [PlayerId; 2] = [PlayerId::P1, PlayerId::P2];

    pub fn other(self) -> PlayerId {
        match self {
            PlayerId::P1 => PlayerId::P2,
            PlayerId::P2 => PlayerId::P1,
        }
    }

    pub fn index(self) -> usize {
        match self {
            PlayerId::P1 => 0,
            PlayerId::P2 => 1,
        }
    }

    pub fn area(self) -> BinId {
        match self {
            PlayerId::P1 => BinId::AreaP1,
            PlayerId::P2 => BinId::AreaP2,
        }
    }

    /// Destination bins on this player's side of the table.
    pub fn near_bins(self) -> BinSet {
        match self {
            PlayerId::P1 => BinSet(0b1100),
            PlayerId::P2 => BinSet(0b0011),
        }
    }

    pub fn reaches(self, bin: BinId) -> bool {
        match bin {
            BinId::Common => true,
            BinId::AreaP1 => self == PlayerId::P1,
            BinId::AreaP2 => self == PlayerId::P2,
            dest => self.near_bins().contains(dest),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            PlayerId::P1 => "p1",
            PlayerId::P2 => "p2",
        }
    }
}

impl fmt::Display for PlayerId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for PlayerId {
    type Err = ParseError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim() {
            "p1" => Ok(PlayerId::P1),
            "p2" => Ok(PlayerId::P2),
            other => Err(ParseError::Malformed(format!("unknown player `{other}`"))),
        }
    }
}

/// The fixed reach set of a player.
pub fn reachable_bins(player: PlayerId) -> Vec<BinId> {
    BinId::ALL
        .into_iter()
        .filter(|b| player.reaches(*b))
        .collect()
}

/// Exclusive pairwise relation between two destination bins.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
#[repr(u8)]
pub enum Relation {
    SameBin = 0,
    SameRow = 1,
    SameCol = 2,
    SameDiag = 3,
}

impl Relation {
    pub const ALL: [Relation; 4] = [
        Relation::SameBin,
        Relation::SameRow,
        Relation::SameCol,
        Relation::SameDiag,
    ];

    pub fn code(self) -> u8 {
        self as u8
    }

    pub fn from_code(code: u8) -> Relation {
        Relation::ALL[(code & 3) as usize]
    }

    /// Group composition: if x~y is `self` and y~z is `other`, x~z is the result.
    pub fn compose(self, other: Relation) -> Relation {
        Relation::from_code(self.code() ^ other.code())
    }

    /// The bin standing in this relation to `bin`.
    pub fn apply(self, bin: BinId) -> BinId {
        match bin.dest_code() {
            Some(c) => BinId::from_dest_code(c ^ self.code()),
            None => bin,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Relation::SameBin => "same_bin",
            Relation::SameRow => "same_row",
            Relation::SameCol => "same_col",
            Relation::SameDiag => "same_diag",
        }
    }

    fn from_name(s: &str) -> Option<Relation> {
        Relation::ALL.into_iter().find(|r| r.name() == s)
    }
}

impl fmt::Display for Relation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

pub fn compose(r1: Relation, r2: Relation) -> Relation {
    r1.compose(r2)
}

/// Relation implied by the 2x2 geometry in the overhead frame.
pub fn relation_between(a: BinId, b: BinId) -> Result<Relation, DomainError> {
    let ca = a.dest_code().ok_or(DomainError::InvalidBin(a))?;
    let cb = b.dest_code().ok_or(DomainError::InvalidBin(b))?;
    Ok(Relation::from_code(ca ^ cb))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct ObjectId(pub u8);

impl ObjectId {
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

/// A pair rule or an object-to-bin grounding.
///
/// Pair rules are stored with `a < b`, so `(A,B,r)` and `(B,A,r)` compare equal.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Constraint {
    Pair {
        a: ObjectId,
        b: ObjectId,
        rel: Relation,
    },
    InBin {
        object: ObjectId,
        bin: BinId,
    },
}

impl Constraint {
    pub fn pair(a: ObjectId, b: ObjectId, rel: Relation) -> Result<Constraint, DomainError> {
        if a == b {
            return Err(DomainError::SelfPair);
        }
        let (a, b) = if a < b { (a, b) } else { (b, a) };
        Ok(Constraint::Pair { a, b, rel })
    }

    pub fn in_bin(object: ObjectId, bin: BinId) -> Result<Constraint, DomainError> {
        if !bin.is_destination() {
            return Err(DomainError::InvalidBin(bin));
        }
        Ok(Constraint::InBin { object, bin })
    }

    pub fn involves(&self, o: ObjectId) -> bool {
        match *self {
            Constraint::Pair { a, b, .. } => a == o || b == o,
            Constraint::InBin { object, .. } => object == o,
        }
    }

    pub fn objects(&self) -> Vec<ObjectId> {
        match *self {
            Constraint::Pair { a, b, .. } => vec![a, b],
            Constraint::InBin { object, .. } => vec![object],
        }
    }

    /// Whether a full assignment (object index -> destination bin) satisfies this.
    pub fn holds_in(&self, assignment: &[BinId]) -> bool {
        match *self {
            Constraint::Pair { a, b, rel } => {
                relation_between(assignment[a.index()], assignment[b.index()]).ok() == Some(rel)
            }
            Constraint::InBin { object, bin } => assignment[object.index()] == bin,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Action {
    Move {
        object: ObjectId,
        from: BinId,
        to: BinId,
    },
    Share(Constraint),
    Ask(ObjectId),
    Pass,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ActionKind {
    Move,
    Share,
    Ask,
    Pass,
}

impl Action {
    pub fn kind(&self) -> ActionKind {
        match self {
            Action::Move { .. } => ActionKind::Move,
            Action::Share(_) => ActionKind::Share,
            Action::Ask(_) => ActionKind::Ask,
            Action::Pass => ActionKind::Pass,
        }
    }

    /// Tie-break rank: move < share < ask < pass.
    pub fn priority(&self) -> u8 {
        self.kind() as u8
    }
}

/// Object names of one puzzle; converts between ids and canonical text.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Objects(Vec<String>);

impl Objects {
    pub fn new(names: Vec<String>) -> Result<Objects, DomainError> {
        for (i, n) in names.iter().enumerate() {
            let ok = !n.is_empty()
                && n.chars().all(|c| c.is_ascii_alphanumeric() || c == '_')
                && Relation::from_name(n).is_none()
                && n.parse::<BinId>().is_err();
            if !ok || names[..i].contains(n) {
                return Err(DomainError::BadObjectName(n.clone()));
            }
        }
        if names.len() > crate::MAX_OBJECTS {
            return Err(DomainError::TooManyObjects(names.len()));
        }
        Ok(Objects(names))
    }

    /// `A`, `B`, ... for `n` objects.
    pub fn letters(n: usize) -> Objects {
        Objects(
            (0..n)
                .map(|i| ((b'A' + i as u8) as char).to_string())
                .collect(),
        )
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn ids(&self) -> impl Iterator<Item = ObjectId> {
        (0..self.0.len() as u8).map(ObjectId)
    }

    pub fn names(&self) -> &[String] {
        &self.0
    }

    pub fn name(&self, id: ObjectId) -> &str {
        &self.0[id.index()]
    }

    pub fn lookup(&self, name: &str) -> Result<ObjectId, ParseError> {
        let name = name.trim();
        self.0
            .iter()
            .position(|n| n == name)
            .map(|i| ObjectId(i as u8))
            .ok_or_else(|| ParseError::UnknownObject(name.to_string()))
    }

    pub fn constraint_text(&self, c: &Constraint) -> String {
        match *c {
            Constraint::Pair { a, b, rel } => {
                format!("{}({},{})", rel.name(), self.name(a), self.name(b))
            }
            Constraint::InBin { object, bin } => format!("in_bin({},{})", self.name(object), bin),
        }
    }

    pub fn action_text(&self, a: &Action) -> String {
        match *a {
            Action::Move { object, from, to } => {
                format!("move({}, {}, {})", self.name(object), from, to)
            }
            Action::Share(c) => format!("share({})", self.constraint_text(&c)),
            Action::Ask(o) => format!("ask({})", self.name(o)),
            Action::Pass => "pass".to_string(),
        }
    }

    pub fn parse_constraint(&self, text: &str) -> Result<Constraint, ParseError> {
        let (head, args) = split_call(text)?;
        let args = split_args(args);
        if args.len() != 2 {
            return Err(ParseError::Malformed(text.trim().to_string()));
        }
        if head == "in_bin" {
            let object = self.lookup(args[0])?;
            let bin: BinId = args[1].parse()?;
            return Constraint::in_bin(object, bin).map_err(|_| ParseError::NotDestination(bin));
        }
        let rel = Relation::from_name(head)
            .ok_or_else(|| ParseError::Malformed(text.trim().to_string()))?;
        let a = self.lookup(args[0])?;
        let b = self.lookup(args[1])?;
        Constraint::pair(a, b, rel).map_err(|_| ParseError::Malformed(text.trim().to_string()))
    }

    pub fn parse_action(&self, text: &str) -> Result<Action, ParseError> {
        let t = text.trim();
        if t == "pass" {
            return Ok(Action::Pass);
        }
        let (head, inner) = split_call(t)?;
        match head {
            "move" => {
                let args = split_args(inner);
                if args.len() != 3 {
                    return Err(ParseError::Malformed(t.to_string()));
                }
                Ok(Action::Move {
                    object: self.lookup(args[0])?,
                    from: args[1].parse()?,
                    to: args[2].parse()?,
                })
            }
            "share" => Ok(Action::Share(self.parse_constraint(inner)?)),
            "ask" => {
                let args = split_args(inner);
                if args.len() != 1 {
                    return Err(ParseError::Malformed(t.to_string()));
                }
                Ok(Action::Ask(self.lookup(args[0])?))
            }
            _ => Err(ParseError::Malformed(t.to_string())),
        }
    }
}

/// `head(inner)` with whitespace tolerated around every token.
fn split_call(text: &str) -> Result<(&str, &str), ParseError> {
    let t = text.trim();
    let open = t
        .find('(')
        .ok_or_else(|| ParseError::Malformed(t.to_string()))?;
    if !t.ends_with(')') {
        return Err(ParseError::Malformed(t.to_string()));
    }
    Ok((t[..open].trim(), &t[open + 1..t.len() - 1]))
}

fn split_args(inner: &str) -> Vec<&str> {
    if inner.trim().is_empty() {
        return Vec::new();
    }
    inner.split(',').map(str::trim).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    const D: [BinId; 4] = BinId::DESTINATIONS;

    #[test]
    fn relation_examples() {
        use BinId::*;
        assert_eq!(
            relation_between(BottomLeft, BottomRight).unwrap(),
            Relation::SameRow
        );
        assert_eq!(
            relation_between(TopLeft, BottomLeft).unwrap(),
            Relation::SameCol
        );
        assert_eq!(
            relation_between(TopLeft, BottomRight).unwrap(),
            Relation::SameDiag
        );
        assert_eq!(
            relation_between(TopLeft, TopLeft).unwrap(),
            Relation::SameBin
        );
        assert_eq!(
            relation_between(Common, TopLeft),
            Err(DomainError::InvalidBin(Common))
        );
    }

    #[test]
    fn compose_matches_enumeration() {
        // Independent check: for each (r1, r2) collect every x~z seen across all
        // triples and require a single value equal to `compose`.
        for r1 in Relation::ALL {
            for r2 in Relation::ALL {
                let mut seen = Vec::new();
                for x in D {
                    for y in D {
                        for z in D {
                            if relation_between(x, y).unwrap() == r1
                                && relation_between(y, z).unwrap() == r2
                            {
                                let r = relation_between(x, z).unwrap();
                                if !seen.contains(&r) {
                                    seen.push(r);
                                }
                            }
                        }
                    }
                }
                assert_eq!(seen, vec![compose(r1, r2)], "{r1} o {r2}");
            }
        }
        assert_eq!(
            compose(Relation::SameBin, Relation::SameRow),
            Relation::SameRow
        );
        assert_eq!(
            compose(Relation::SameRow, Relation::SameCol),
            Relation::SameDiag
        );
        assert_eq!(
            compose(Relation::SameRow, Relation::SameRow),
            Relation::SameBin
        );
    }

    #[test]
    fn reach_sets() {
        use BinId::*;
        assert_eq!(
            reachable_bins(PlayerId::P1),
            vec![BottomLeft, BottomRight, AreaP1, Common]
        );
        assert_eq!(
            reachable_bins(PlayerId::P2),
            vec![TopLeft, TopRight, AreaP2, Common]
        );
        for b in D {
            let n = PlayerId::BOTH.iter().filter(|p| p.reaches(b)).count();
            assert_eq!(n, 1);
        }
    }

    #[test]
    fn pair_rule_is_symmetric() {
        let a = ObjectId(0);
        let b = ObjectId(1);
        assert_eq!(
            Constraint::pair(a, b, Relation::SameRow).unwrap(),
            Constraint::pair(b, a, Relation::SameRow).unwrap()
        );
        assert!(Constraint::pair(a, a, Relation::SameBin).is_err());
        assert!(Constraint::in_bin(a, BinId::Common).is_err());
    }

    #[test]
    fn canonical_text_round_trip() {
        let objs = Objects::letters(3);
        for text in [
            "move(A, area_p1, bottom_left)",
            "share(same_row(A,B))",
            "share(in_bin(C,top_left))",
            "ask(B)",
            "pass",
        ] {
            let a = objs.parse_action(text).unwrap();
            assert_eq!(objs.action_text(&a), text);
        }
        let spaced = objs
            .parse_action("  move( B ,common,  bottom_right )")
            .unwrap();
        assert_eq!(objs.action_text(&spaced), "move(B, common, bottom_right)");
        assert!(objs.parse_action("move(B)").is_err());
        assert!(objs.parse_action("move(Z, common, top_left)").is_err());
        assert!(objs.parse_action("share(in_bin(A,common))").is_err());
        assert!(objs.parse_action("jump").is_err());
    }

    #[test]
    fn object_names_validated() {
        assert!(Objects::new(vec!["bear".into(), "duck".into()]).is_ok());
        assert!(Objects::new(vec!["a b".into()]).is_err());
        assert!(Objects::new(vec!["x".into(), "x".into()]).is_err());
        assert!(Objects::new(vec!["common".into()]).is_err());
    }

    #[test]
    fn binset_shift_is_group_action() {
        let s = BinSet::single(BinId::TopLeft).union(BinSet::single(BinId::BottomLeft));
        assert_eq!(
            s.shifted(Relation::SameRow),
            BinSet::single(BinId::TopRight).union(BinSet::single(BinId::BottomRight))
        );
        assert_eq!(
            BinSet::single(BinId::BottomRight).only(),
            Some(BinId::BottomRight)
        );
        assert_eq!(BinSet::ALL.only(), None);
    }
}
