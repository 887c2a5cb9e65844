//! Episode runner, metrics with standard errors, the error table and the
//! action-space pairing matrix.

use std::collections::BTreeMap;
use std::io::{BufRead, Write};
use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::agents::Policy;
use crate::domain::{ActionKind, PlayerId};
use crate::engine::{
    replay_record, ActionSpaceConfig, GameState, GameStatus, Outcome, TurnMeta, TurnRecord,
    TurnRecordWire,
};
use crate::error::{HarnessError, PolicyError};
use crate::planner::plan_optimal;
use crate::puzzle::{PuzzleFile, PuzzleInstance};
use crate::verifier::{best_of_n, ErrorLabel, TurnContext, VerifierStack};

/// Parameters shared by every episode of a run.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct EpisodeSpec {
    pub configs: [ActionSpaceConfig; 2],
    pub stack: VerifierStack,
    pub n_samples: usize,
    pub step_limit: u32,
    pub seed: u64,
}

impl EpisodeSpec {
    pub fn new(configs: [ActionSpaceConfig; 2], stack: VerifierStack) -> EpisodeSpec {
        EpisodeSpec {
            configs,
            stack,
            n_samples: 4,
            step_limit: crate::DEFAULT_STEP_LIMIT,
            seed: 0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpisodeRecord {
    pub puzzle: PuzzleFile,
    pub n_objects: usize,
    pub configs: [ActionSpaceConfig; 2],
    pub stack: VerifierStack,
    pub n_samples: usize,
    pub step_limit: u32,
    pub seed: u64,
    pub policies: [String; 2],
    pub turns: Vec<TurnRecordWire>,
    pub status: GameStatus,
    pub step_count: u32,
    pub optimal_steps: u32,
    pub subgoal_fraction: f64,
    /// Set when a policy transport failed; such episodes are excluded from metrics.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub invalid: Option<String>,
}

impl EpisodeRecord {
    pub fn is_valid(&self) -> bool {
        self.invalid.is_none()
    }

    /// Re-applies every turn and returns the final state.
    pub fn replay(&self) -> Result<GameState, HarnessError> {
        let puzzle = Arc::new(PuzzleInstance::try_from(self.puzzle.clone())?);
        let mut g = GameState::new(puzzle.clone(), self.configs, self.step_limit);
        for w in &self.turns {
            let r = TurnRecord::from_wire(w, &puzzle.objects)?;
            replay_record(&mut g, &r).map_err(HarnessError::Replay)?;
        }
        Ok(g)
    }

    fn corrected_steps(&self) -> usize {
        self.turns
            .iter()
            .filter(|t| t.meta.as_ref().is_some_and(|m| m.corrected))
            .count()
    }
}

/// Kind of a canonical action text.
pub fn kind_of_text(text: &str) -> Option<ActionKind> {
    let t = text.trim_start();
    if t.starts_with("move") {
        Some(ActionKind::Move)
    } else if t.starts_with("share") {
        Some(ActionKind::Share)
    } else if t.starts_with("ask") {
        Some(ActionKind::Ask)
    } else if t.starts_with("pass") {
        Some(ActionKind::Pass)
    } else {
        None
    }
}

/// One turn for the player to move: sample candidates, filter with
/// best-of-n, apply (or forfeit), and attach the bookkeeping to the record.
pub fn play_turn(
    g: &mut GameState,
    policy: &mut dyn Policy,
    stack: VerifierStack,
    n_samples: usize,
) -> Result<Outcome, PolicyError> {
    let (sel, labels, blind, raw) = {
        let ctx = TurnContext::new(g);
        let raw = policy.propose(&ctx.obs, n_samples.max(1))?;
        let sel = best_of_n(&ctx, &raw, stack);
        let labels = ctx.classify_errors(sel.action.as_ref(), None);
        let blind = sel
            .action
            .as_ref()
            .is_some_and(|a| ctx.view().is_blind_guess(a));
        (sel, labels, blind, raw)
    };
    let mut meta = TurnMeta {
        candidates: raw,
        chosen: sel.chosen,
        corrected: sel.corrected,
        candidate_labels: sel.candidate_labels,
        labels,
        rationale: None,
    };
    let outcome = if sel.legal {
        let action = sel.action.expect("legal selections carry an action");
        g.apply(action)
            .expect("selection was checked against the engine")
    } else {
        g.forfeit(sel.action, meta.labels.clone(), None)
            .expect("game is running")
    };
    if outcome == Outcome::RejectedPlacement
        && blind
        && !meta.labels.contains(&ErrorLabel::WrongRandomGuess)
    {
        meta.labels.push(ErrorLabel::WrongRandomGuess);
        meta.labels.sort();
    }
    g.history.last_mut().expect("turn recorded").meta = Some(meta);
    Ok(outcome)
}

/// Plays one game: sample candidates, filter with best-of-n, apply.
pub fn run_episode(
    puzzle: &Arc<PuzzleInstance>,
    policies: [&mut dyn Policy; 2],
    spec: &EpisodeSpec,
    optimal_steps: Option<u32>,
) -> EpisodeRecord {
    let [p1, p2] = policies;
    let names = [p1.name(), p2.name()];
    let pols: [&mut dyn Policy; 2] = [p1, p2];
    let optimal = optimal_steps
        .unwrap_or_else(|| plan_optimal(puzzle, spec.configs).map_or(0, |t| t.step_count() as u32));
    let mut g = GameState::new(puzzle.clone(), spec.configs, spec.step_limit);
    let mut invalid = None;
    while g.status == GameStatus::Running {
        let actor = g.turn;
        if let Err(e) = play_turn(
            &mut g,
            &mut *pols[actor.index()],
            spec.stack,
            spec.n_samples,
        ) {
            invalid = Some(e.to_string());
            break;
        }
    }
    let objs = g.objects().clone();
    EpisodeRecord {
        puzzle: PuzzleFile::from(puzzle.as_ref()),
        n_objects: puzzle.n_objects(),
        configs: spec.configs,
        stack: spec.stack,
        n_samples: spec.n_samples,
        step_limit: spec.step_limit,
        seed: spec.seed,
        policies: names,
        turns: g.history.iter().map(|r| r.to_wire(&objs)).collect(),
        status: g.status,
        step_count: g.step_count,
        optimal_steps: optimal,
        subgoal_fraction: g.subgoal_fraction(),
        invalid,
    }
}

/// Builds the policy for one seat of one episode.
pub type PolicyFactory<'a> = dyn Fn(PlayerId, u64) -> Box<dyn Policy> + Sync + 'a;

/// Runs every puzzle in parallel; episode `i` uses seed `spec.seed + i`.
pub fn run_batch(
    pool: &[Arc<PuzzleInstance>],
    spec: &EpisodeSpec,
    factory: &PolicyFactory<'_>,
) -> Vec<EpisodeRecord> {
    pool.par_iter()
        .enumerate()
        .map(|(i, puzzle)| {
            let seed = spec.seed.wrapping_add(i as u64);
            let mut a = factory(PlayerId::P1, seed);
            let mut b = factory(PlayerId::P2, seed);
            let spec = EpisodeSpec { seed, ..*spec };
            run_episode(puzzle, [a.as_mut(), b.as_mut()], &spec, None)
        })
        .collect()
}

/// Mean with standard error (sample stddev / sqrt(n)).
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Stat {
    pub mean: f64,
    pub se: f64,
    pub n: usize,
}

impl Stat {
    pub fn of(xs: &[f64]) -> Option<Stat> {
        let n = xs.len();
        if n == 0 {
            return None;
        }
        let mean = xs.iter().sum::<f64>() / n as f64;
        let se = if n > 1 {
            let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
            var.sqrt() / (n as f64).sqrt()
        } else {
            0.0
        };
        Some(Stat { mean, se, n })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricsRow {
    pub episodes: usize,
    /// Percent solved.
    pub sr: Stat,
    /// Mean fraction of objects placed at termination, in percent.
    pub sub_r: Stat,
    /// Mean step ratio over solved episodes.
    pub step_r: Option<Stat>,
    /// Percent of steps where the verifier replaced the first sample.
    pub corr_r: Option<Stat>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub overall: MetricsRow,
    pub by_objects: BTreeMap<usize, MetricsRow>,
    pub invalid_episodes: usize,
}

fn row(records: &[&EpisodeRecord]) -> Option<MetricsRow> {
    let sr: Vec<f64> = records
        .iter()
        .map(|r| {
            if r.status == GameStatus::Solved {
                100.0
            } else {
                0.0
            }
        })
        .collect();
    let sub: Vec<f64> = records.iter().map(|r| 100.0 * r.subgoal_fraction).collect();
    let step: Vec<f64> = records
        .iter()
        .filter(|r| r.status == GameStatus::Solved && r.optimal_steps > 0)
        .map(|r| r.step_count as f64 / r.optimal_steps as f64)
        .collect();
    let verified: Vec<&&EpisodeRecord> = records.iter().filter(|r| r.stack.is_active()).collect();
    let corr: Vec<f64> = verified
        .iter()
        .flat_map(|r| {
            let c = r.corrected_steps();
            let s = r.turns.len();
            std::iter::repeat_n(100.0, c).chain(std::iter::repeat_n(0.0, s - c))
        })
        .collect();
    Some(MetricsRow {
        episodes: records.len(),
        sr: Stat::of(&sr)?,
        sub_r: Stat::of(&sub)?,
        step_r: Stat::of(&step),
        corr_r: if verified.is_empty() {
            None
        } else {
            Stat::of(&corr)
        },
    })
}

pub fn compute_metrics(records: &[EpisodeRecord]) -> Result<MetricsReport, HarnessError> {
    let valid: Vec<&EpisodeRecord> = records.iter().filter(|r| r.is_valid()).collect();
    let overall = row(&valid).ok_or(HarnessError::EmptyBatch)?;
    let mut groups: BTreeMap<usize, Vec<&EpisodeRecord>> = BTreeMap::new();
    for r in &valid {
        groups.entry(r.n_objects).or_default().push(r);
    }
    let by_objects = groups
        .into_iter()
        .filter_map(|(n, rs)| row(&rs).map(|r| (n, r)))
        .collect();
    Ok(MetricsReport {
        overall,
        by_objects,
        invalid_episodes: records.len() - valid.len(),
    })
}

/// Column order of the metrics CSV.
pub const METRICS_COLUMNS: [&str; 11] = [
    "group",
    "episodes",
    "sr",
    "sr_se",
    "sub_r",
    "sub_r_se",
    "step_r",
    "step_r_se",
    "corr_r",
    "corr_r_se",
    "invalid",
];

pub fn write_metrics_csv(w: impl Write, report: &MetricsReport) -> Result<(), HarnessError> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(METRICS_COLUMNS)?;
    let opt = |s: &Option<Stat>, f: fn(&Stat) -> f64| {
        s.as_ref()
            .map_or("n/a".to_string(), |s| format!("{:.4}", f(s)))
    };
    let mut emit = |group: String, r: &MetricsRow, invalid: usize| -> Result<(), csv::Error> {
        out.write_record([
            group,
            r.episodes.to_string(),
            format!("{:.4}", r.sr.mean),
            format!("{:.4}", r.sr.se),
            format!("{:.4}", r.sub_r.mean),
            format!("{:.4}", r.sub_r.se),
            opt(&r.step_r, |s| s.mean),
            opt(&r.step_r, |s| s.se),
            opt(&r.corr_r, |s| s.mean),
            opt(&r.corr_r, |s| s.se),
            invalid.to_string(),
        ])
    };
    emit("all".into(), &report.overall, report.invalid_episodes)?;
    for (n, r) in &report.by_objects {
        emit(format!("{n}_objects"), r, 0)?;
    }
    out.flush()?;
    Ok(())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ErrorRow {
    pub label: ErrorLabel,
    pub count: usize,
    /// Errors / total steps, percent.
    pub pct_total: f64,
    pub relevant: ActionKind,
    pub relevant_count: usize,
    /// Errors / steps of the relevant action type, percent.
    pub pct_relevant: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ErrorTable {
    pub rows: Vec<ErrorRow>,
    pub total_steps: usize,
    pub no_error_pct: f64,
}

fn pct(a: usize, b: usize) -> f64 {
    if b == 0 {
        0.0
    } else {
        100.0 * a as f64 / b as f64
    }
}

/// Per-label rates over all consumed steps and over the relevant action type.
/// A label is counted once per action even when several apply.
pub fn error_table(records: &[EpisodeRecord]) -> ErrorTable {
    let mut counts: BTreeMap<ErrorLabel, usize> = BTreeMap::new();
    let mut kinds: BTreeMap<ActionKind, usize> = BTreeMap::new();
    let mut total = 0;
    let mut clean = 0;
    for t in records
        .iter()
        .filter(|r| r.is_valid())
        .flat_map(|r| &r.turns)
    {
        total += 1;
        if let Some(k) = t.action.as_deref().and_then(kind_of_text) {
            *kinds.entry(k).or_default() += 1;
        }
        let mut labels = t
            .meta
            .as_ref()
            .map(|m| m.labels.clone())
            .unwrap_or_default();
        labels.sort();
        labels.dedup();
        if labels.is_empty() {
            clean += 1;
        }
        for l in labels {
            *counts.entry(l).or_default() += 1;
        }
    }
    if total == 0 {
        return ErrorTable {
            rows: Vec::new(),
            total_steps: 0,
            no_error_pct: 0.0,
        };
    }
    let rows = ErrorLabel::ALL
        .into_iter()
        .map(|label| {
            let count = counts.get(&label).copied().unwrap_or(0);
            let relevant = label.relevant_kind();
            let relevant_count = kinds.get(&relevant).copied().unwrap_or(0);
            ErrorRow {
                label,
                count,
                pct_total: pct(count, total),
                relevant,
                relevant_count,
                pct_relevant: pct(count, relevant_count),
            }
        })
        .collect();
    ErrorTable {
        rows,
        total_steps: total,
        no_error_pct: pct(clean, total),
    }
}

/// Column order of the error CSV.
pub const ERROR_COLUMNS: [&str; 6] = [
    "label",
    "count",
    "pct_total_steps",
    "relevant_action",
    "relevant_count",
    "pct_relevant",
];

pub fn write_error_csv(w: impl Write, table: &ErrorTable) -> Result<(), HarnessError> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(ERROR_COLUMNS)?;
    for r in &table.rows {
        out.write_record([
            r.label.name().to_string(),
            r.count.to_string(),
            format!("{:.2}", r.pct_total),
            format!("{:?}", r.relevant).to_lowercase(),
            r.relevant_count.to_string(),
            format!("{:.2}", r.pct_relevant),
        ])?;
    }
    out.write_record([
        "no_error",
        "",
        &format!("{:.2}", table.no_error_pct),
        "",
        "",
        "",
    ])?;
    out.write_record([
        "total_actions",
        &table.total_steps.to_string(),
        "",
        "",
        "",
        "",
    ])?;
    out.flush()?;
    Ok(())
}

impl ErrorTable {
    /// Two-ratio text rendering, one label per line: `label  a.bc% / d.ef%`.
    pub fn render(&self) -> String {
        let mut s = String::new();
        for r in &self.rows {
            s.push_str(&format!(
                "{:<26}{:>6.2}% / {:>6.2}%\n",
                r.label.name(),
                r.pct_total,
                r.pct_relevant
            ));
        }
        s.push_str(&format!("{:<26}{:>6.2}%\n", "no_error", self.no_error_pct));
        s.push_str(&format!("{:<26}{:>7}\n", "total_actions", self.total_steps));
        s
    }
}

/// A cell of the pairing matrix.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MatrixRow {
    pub pairing: [ActionSpaceConfig; 2],
    pub stack: VerifierStack,
    pub report: MetricsReport,
    /// Set for pairings that behave like another one.
    pub equivalent_to: Option<[ActionSpaceConfig; 2]>,
}

/// Pairings that reduce to another: a provide-only partner of a silent player
/// behaves like provide-and-seek, and seek-only facing none is silent play.
pub fn equivalent_pairing(pair: [ActionSpaceConfig; 2]) -> Option<[ActionSpaceConfig; 2]> {
    use ActionSpaceConfig as C;
    let mut p = pair;
    p.sort();
    match p {
        [C::ProvideOnly, C::None] => Some([C::ProvideAndSeek, C::None]),
        [C::SeekOnly, C::None] => Some([C::None, C::None]),
        _ => None,
    }
}

/// The four asymmetric pairings evaluated by default.
pub fn default_asymmetric_pairings() -> Vec<[ActionSpaceConfig; 2]> {
    use ActionSpaceConfig as C;
    vec![
        [C::ProvideAndSeek, C::ProvideOnly],
        [C::ProvideAndSeek, C::SeekOnly],
        [C::ProvideAndSeek, C::None],
        [C::ProvideOnly, C::SeekOnly],
    ]
}

/// Runs each (pairing, stack) cell over the pool. Asymmetric pairings are
/// played in both seatings and pooled, which averages the two equally sized runs.
pub fn run_matrix(
    pool: &[Arc<PuzzleInstance>],
    pairings: &[[ActionSpaceConfig; 2]],
    stacks: &[VerifierStack],
    base: &EpisodeSpec,
    factory: &PolicyFactory<'_>,
) -> Result<Vec<MatrixRow>, HarnessError> {
    let mut rows = Vec::new();
    for &pairing in pairings {
        for &stack in stacks {
            let mut seats = vec![pairing];
            if pairing[0] != pairing[1] {
                seats.push([pairing[1], pairing[0]]);
            }
            let mut records = Vec::new();
            for configs in seats {
                let spec = EpisodeSpec {
                    configs,
                    stack,
                    ..*base
                };
                records.extend(run_batch(pool, &spec, factory));
            }
            rows.push(MatrixRow {
                pairing,
                stack,
                report: compute_metrics(&records)?,
                equivalent_to: equivalent_pairing(pairing),
            });
        }
    }
    Ok(rows)
}

pub fn write_episodes(mut w: impl Write, records: &[EpisodeRecord]) -> Result<(), HarnessError> {
    for r in records {
        serde_json::to_writer(&mut w, r)?;
        w.write_all(b"\n")?;
    }
    Ok(())
}

pub fn read_episodes(r: impl BufRead) -> Result<Vec<EpisodeRecord>, HarnessError> {
    let mut out = Vec::new();
    for line in r.lines() {
        let line = line?;
        if !line.trim().is_empty() {
            out.push(serde_json::from_str(&line)?);
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::agents::{FixedPolicy, GreedyAgent};
    use ActionSpaceConfig as C;

    fn p0() -> Arc<PuzzleInstance> {
        Arc::new(PuzzleInstance::fixture_p0())
    }

    fn record(status: GameStatus, steps: u32, optimal: u32, sub: f64) -> EpisodeRecord {
        EpisodeRecord {
            puzzle: PuzzleFile::from(&PuzzleInstance::fixture_p0()),
            n_objects: 2,
            configs: [C::ProvideAndSeek; 2],
            stack: VerifierStack::None,
            n_samples: 1,
            step_limit: 30,
            seed: 0,
            policies: ["a".into(), "b".into()],
            turns: Vec::new(),
            status,
            step_count: steps,
            optimal_steps: optimal,
            subgoal_fraction: sub,
            invalid: None,
        }
    }

    #[test]
    fn greedy_self_play_on_p0() {
        let spec = EpisodeSpec::new([C::ProvideAndSeek; 2], VerifierStack::Reasoning);
        let (mut a, mut b) = (GreedyAgent, GreedyAgent);
        let r = run_episode(&p0(), [&mut a, &mut b], &spec, None);
        assert_eq!(r.status, GameStatus::Solved);
        assert_eq!(r.optimal_steps, 5);
        let m = compute_metrics(std::slice::from_ref(&r)).unwrap();
        assert_eq!(m.overall.corr_r.unwrap().mean, 0.0);
        assert_eq!(r.replay().unwrap().status, GameStatus::Solved);
    }

    #[test]
    fn always_asking_under_none_hits_the_limit() {
        let spec = EpisodeSpec::new([C::None; 2], VerifierStack::Reasoning);
        let mut a = FixedPolicy("<ACTION>ask(A)</ACTION>".into());
        let mut b = FixedPolicy("<ACTION>ask(A)</ACTION>".into());
        let r = run_episode(&p0(), [&mut a, &mut b], &spec, None);
        assert_eq!(r.status, GameStatus::LimitReached);
        assert_eq!(r.step_count, 30);
        assert_eq!(r.subgoal_fraction, 0.0);
        assert!(r.turns.iter().all(|t| t.action.as_deref() == Some("pass")));

        let spec = EpisodeSpec::new([C::None; 2], VerifierStack::None);
        let r = run_episode(&p0(), [&mut a, &mut b], &spec, None);
        assert!(r
            .turns
            .iter()
            .all(|t| matches!(t.outcome, Outcome::IllegalNoOp { .. })));
        assert_eq!(r.replay().unwrap().step_count, 30);
    }

    #[test]
    fn metric_arithmetic() {
        let m = compute_metrics(&[record(GameStatus::Solved, 15, 10, 1.0)]).unwrap();
        assert!((m.overall.step_r.unwrap().mean - 1.5).abs() < 1e-12);
        assert!(m.overall.corr_r.is_none());
        let rs = vec![
            record(GameStatus::Solved, 5, 5, 1.0),
            record(GameStatus::Solved, 5, 5, 1.0),
            record(GameStatus::LimitReached, 30, 5, 0.5),
            record(GameStatus::LimitReached, 30, 5, 0.0),
        ];
        let m = compute_metrics(&rs).unwrap();
        assert!((m.overall.sr.mean - 50.0).abs() < 1e-12);
        // Sample stddev of [100,100,0,0] is 57.735; divided by 2.
        assert!((m.overall.sr.se - 28.867513459481287).abs() < 1e-9);
        assert!(matches!(
            compute_metrics(&[]),
            Err(HarnessError::EmptyBatch)
        ));
    }

    #[test]
    fn error_table_empty_and_csv_shape() {
        let t = error_table(&[]);
        assert!(t.rows.is_empty());
        let mut buf = Vec::new();
        write_error_csv(
            &mut buf,
            &error_table(&[record(GameStatus::Solved, 1, 1, 1.0)]),
        )
        .unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("label,count,pct_total_steps"));
    }

    #[test]
    fn equivalences() {
        assert_eq!(
            equivalent_pairing([C::None, C::ProvideOnly]),
            Some([C::ProvideAndSeek, C::None])
        );
        assert_eq!(
            equivalent_pairing([C::SeekOnly, C::None]),
            Some([C::None, C::None])
        );
        assert_eq!(equivalent_pairing([C::ProvideAndSeek, C::SeekOnly]), None);
    }

    #[test]
    fn matrix_runs_both_seatings() {
        let pool = vec![p0()];
        let base = EpisodeSpec::new([C::None; 2], VerifierStack::Reasoning);
        let factory = |_p: PlayerId, _s: u64| -> Box<dyn Policy> { Box::new(GreedyAgent) };
        let rows = run_matrix(
            &pool,
            &[[C::ProvideAndSeek, C::SeekOnly]],
            &[VerifierStack::Reasoning],
            &base,
            &factory,
        )
        .unwrap();
        assert_eq!(rows.len(), 1);
        assert_eq!(rows[0].report.overall.episodes, 2);
    }
}
