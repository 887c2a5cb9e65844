//! C ABI for the puzzle engine.
//!
//! Handles are opaque and owned by the caller, who releases them with the
//! matching `_free`. Every fallible call returns an [`EpStatus`]; on failure
//! `ep_last_error_message` describes the error for the calling thread.
//! Strings returned through `char **` out-parameters are released with
//! `ep_string_free`.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::sync::Arc;

use einstein_core::engine::{ActionSpaceConfig, GameState, GameStatus, Outcome};
use einstein_core::error::EngineError;
use einstein_core::planner::plan_optimal;
use einstein_core::protocol::render_observation_text;
use einstein_core::puzzle::{generate_puzzle, PuzzleFile, PuzzleInstance};
use einstein_core::verifier::{TurnContext, VerifierStack};
use einstein_core::PlayerId;

#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum EpStatus {
    Ok = 0,
    NullArgument = 1,
    InvalidArgument = 2,
    ParseError = 3,
    IllegalAction = 4,
    NotYourTurn = 5,
    GameOver = 6,
    PlanFailed = 7,
    Panic = 99,
}

#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum EpOutcome {
    Accepted = 0,
    RejectedPlacement = 1,
    IllegalNoOp = 2,
}

#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum EpGameStatus {
    Running = 0,
    Solved = 1,
    LimitReached = 2,
}

/// A generated or loaded puzzle.
pub struct EpPuzzle {
    inner: Arc<PuzzleInstance>,
}

/// A game in progress.
pub struct EpGame {
    inner: GameState,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_error(msg: impl Into<String>) {
    let s = CString::new(msg.into().replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = s);
}

type Res<T> = Result<T, (EpStatus, String)>;

fn guard(f: impl FnOnce() -> Res<()>) -> EpStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            set_error("");
            EpStatus::Ok
        }
        Ok(Err((status, msg))) => {
            set_error(msg);
            status
        }
        Err(_) => {
            set_error("internal panic");
            EpStatus::Panic
        }
    }
}

fn null(what: &str) -> (EpStatus, String) {
    (EpStatus::NullArgument, format!("{what} is null"))
}

unsafe fn read_str<'a>(p: *const c_char, what: &str) -> Res<&'a str> {
    if p.is_null() {
        return Err(null(what));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| (EpStatus::InvalidArgument, format!("{what} is not UTF-8")))
}

unsafe fn write_out<T>(out: *mut T, v: T, what: &str) -> Res<()> {
    if out.is_null() {
        return Err(null(what));
    }
    *out = v;
    Ok(())
}

fn to_c(s: String) -> *mut c_char {
    CString::new(s.replace('\0', " "))
        .unwrap_or_default()
        .into_raw()
}

fn config(s: &str) -> Res<ActionSpaceConfig> {
    s.parse()
        .map_err(|e: einstein_core::error::ParseError| (EpStatus::InvalidArgument, e.to_string()))
}

/// Message for the last failed call on this thread; empty after a success.
/// The pointer stays valid until the next call on the same thread.
#[no_mangle]
pub extern "C" fn ep_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

/// # Safety
/// `s` must come from this library or be null.
#[no_mangle]
pub unsafe extern "C" fn ep_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// # Safety
/// `out` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn ep_puzzle_generate(
    n_objects: u32,
    seed: u64,
    out: *mut *mut EpPuzzle,
) -> EpStatus {
    guard(|| {
        let p = generate_puzzle(n_objects as usize, seed)
            .map_err(|e| (EpStatus::InvalidArgument, e.to_string()))?;
        let h = Box::into_raw(Box::new(EpPuzzle { inner: Arc::new(p) }));
        write_out(out, h, "out").inspect_err(|_| drop(Box::from_raw(h)))
    })
}

/// # Safety
/// `json` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn ep_puzzle_from_json(
    json: *const c_char,
    out: *mut *mut EpPuzzle,
) -> EpStatus {
    guard(|| {
        let text = read_str(json, "json")?;
        let file: PuzzleFile =
            serde_json::from_str(text).map_err(|e| (EpStatus::ParseError, e.to_string()))?;
        let p =
            PuzzleInstance::try_from(file).map_err(|e| (EpStatus::ParseError, e.to_string()))?;
        p.validate()
            .map_err(|e| (EpStatus::InvalidArgument, e.to_string()))?;
        let h = Box::into_raw(Box::new(EpPuzzle { inner: Arc::new(p) }));
        write_out(out, h, "out").inspect_err(|_| drop(Box::from_raw(h)))
    })
}

/// # Safety
/// `puzzle` must be a live handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn ep_puzzle_to_json(
    puzzle: *const EpPuzzle,
    out: *mut *mut c_char,
) -> EpStatus {
    guard(|| {
        let p = puzzle.as_ref().ok_or_else(|| null("puzzle"))?;
        let text = serde_json::to_string(&PuzzleFile::from(p.inner.as_ref()))
            .map_err(|e| (EpStatus::InvalidArgument, e.to_string()))?;
        let s = to_c(text);
        write_out(out, s, "out").inspect_err(|_| ep_string_free(s))
    })
}

/// # Safety
/// `puzzle` must come from this library or be null.
#[no_mangle]
pub unsafe extern "C" fn ep_puzzle_free(puzzle: *mut EpPuzzle) {
    if !puzzle.is_null() {
        drop(Box::from_raw(puzzle));
    }
}

/// Starts a game. Configs are `provide_and_seek`, `provide_only`,
/// `seek_only`, `none` or their short forms.
///
/// # Safety
/// Pointers must be valid; the puzzle may be freed afterwards.
#[no_mangle]
pub unsafe extern "C" fn ep_game_new(
    puzzle: *const EpPuzzle,
    config_p1: *const c_char,
    config_p2: *const c_char,
    step_limit: u32,
    out: *mut *mut EpGame,
) -> EpStatus {
    guard(|| {
        let p = puzzle.as_ref().ok_or_else(|| null("puzzle"))?;
        let c1 = config(read_str(config_p1, "config_p1")?)?;
        let c2 = config(read_str(config_p2, "config_p2")?)?;
        if step_limit == 0 {
            return Err((
                EpStatus::InvalidArgument,
                "step_limit must be positive".into(),
            ));
        }
        let g = GameState::new(p.inner.clone(), [c1, c2], step_limit);
        let h = Box::into_raw(Box::new(EpGame { inner: g }));
        write_out(out, h, "out").inspect_err(|_| drop(Box::from_raw(h)))
    })
}

/// # Safety
/// `game` must come from this library or be null.
#[no_mangle]
pub unsafe extern "C" fn ep_game_free(game: *mut EpGame) {
    if !game.is_null() {
        drop(Box::from_raw(game));
    }
}

/// Applies a canonical action for the player to move. An illegal action
/// leaves the game unchanged and returns `IllegalAction`.
///
/// # Safety
/// Pointers must be valid; `outcome` may be null.
#[no_mangle]
pub unsafe extern "C" fn ep_game_apply(
    game: *mut EpGame,
    action: *const c_char,
    outcome: *mut EpOutcome,
) -> EpStatus {
    guard(|| {
        let g = game.as_mut().ok_or_else(|| null("game"))?;
        let text = read_str(action, "action")?;
        let a = g
            .inner
            .objects()
            .parse_action(text)
            .map_err(|e| (EpStatus::ParseError, e.to_string()))?;
        let o = g.inner.apply(a).map_err(|e| match e {
            EngineError::NotYourTurn(_) => (EpStatus::NotYourTurn, e.to_string()),
            EngineError::GameOver => (EpStatus::GameOver, e.to_string()),
            EngineError::Illegal(_) => (EpStatus::IllegalAction, e.to_string()),
        })?;
        if !outcome.is_null() {
            *outcome = match o {
                Outcome::Accepted => EpOutcome::Accepted,
                Outcome::RejectedPlacement => EpOutcome::RejectedPlacement,
                Outcome::IllegalNoOp { .. } => EpOutcome::IllegalNoOp,
            };
        }
        Ok(())
    })
}

/// # Safety
/// Pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn ep_game_status(game: *const EpGame, out: *mut EpGameStatus) -> EpStatus {
    guard(|| {
        let g = game.as_ref().ok_or_else(|| null("game"))?;
        let s = match g.inner.status {
            GameStatus::Running => EpGameStatus::Running,
            GameStatus::Solved => EpGameStatus::Solved,
            GameStatus::LimitReached => EpGameStatus::LimitReached,
        };
        write_out(out, s, "out")
    })
}

/// Steps consumed so far; 0 for a null handle.
///
/// # Safety
/// `game` must be a live handle or null.
#[no_mangle]
pub unsafe extern "C" fn ep_game_step_count(game: *const EpGame) -> u32 {
    game.as_ref().map_or(0, |g| g.inner.step_count)
}

/// Fraction of objects at their goal; negative for a null handle.
///
/// # Safety
/// `game` must be a live handle or null.
#[no_mangle]
pub unsafe extern "C" fn ep_game_subgoal_fraction(game: *const EpGame) -> f64 {
    game.as_ref().map_or(-1.0, |g| g.inner.subgoal_fraction())
}

/// Full state snapshot as JSON.
///
/// # Safety
/// Pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn ep_game_state_json(
    game: *const EpGame,
    out: *mut *mut c_char,
) -> EpStatus {
    guard(|| {
        let g = game.as_ref().ok_or_else(|| null("game"))?;
        let text = serde_json::to_string(&g.inner.snapshot())
            .map_err(|e| (EpStatus::InvalidArgument, e.to_string()))?;
        let s = to_c(text);
        write_out(out, s, "out").inspect_err(|_| ep_string_free(s))
    })
}

/// Prompt text for player 1 or 2.
///
/// # Safety
/// Pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn ep_game_observation_text(
    game: *const EpGame,
    player: u32,
    out: *mut *mut c_char,
) -> EpStatus {
    guard(|| {
        let g = game.as_ref().ok_or_else(|| null("game"))?;
        let p = match player {
            1 => PlayerId::P1,
            2 => PlayerId::P2,
            _ => {
                return Err((
                    EpStatus::InvalidArgument,
                    format!("player must be 1 or 2, got {player}"),
                ))
            }
        };
        let s = to_c(render_observation_text(&g.inner.observation(p)));
        write_out(out, s, "out").inspect_err(|_| ep_string_free(s))
    })
}

/// Runs a verifier stack on raw policy output for the player to move and
/// writes the failure labels as a JSON array (empty when it passes).
/// Unparseable output yields `["format_following"]`.
///
/// # Safety
/// Pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn ep_verify_action(
    game: *const EpGame,
    stack: *const c_char,
    output: *const c_char,
    out: *mut *mut c_char,
) -> EpStatus {
    guard(|| {
        let g = game.as_ref().ok_or_else(|| null("game"))?;
        let stack: VerifierStack =
            read_str(stack, "stack")?
                .parse()
                .map_err(|e: einstein_core::error::ParseError| {
                    (EpStatus::InvalidArgument, e.to_string())
                })?;
        let text = read_str(output, "output")?;
        if g.inner.status != GameStatus::Running {
            return Err((EpStatus::GameOver, "game is over".into()));
        }
        let ctx = TurnContext::new(&g.inner);
        let labels: Vec<&str> = match einstein_core::protocol::parse_action(g.inner.objects(), text)
        {
            Ok(a) => ctx
                .verify(stack, &a)
                .labels
                .iter()
                .map(|l| l.name())
                .collect(),
            Err(_) => vec!["format_following"],
        };
        let s = to_c(serde_json::to_string(&labels).expect("labels serialize"));
        write_out(out, s, "out").inspect_err(|_| ep_string_free(s))
    })
}

/// Optimal joint plan as a trajectory JSON object.
///
/// # Safety
/// Pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn ep_plan_optimal(
    puzzle: *const EpPuzzle,
    config_p1: *const c_char,
    config_p2: *const c_char,
    out: *mut *mut c_char,
) -> EpStatus {
    guard(|| {
        let p = puzzle.as_ref().ok_or_else(|| null("puzzle"))?;
        let c1 = config(read_str(config_p1, "config_p1")?)?;
        let c2 = config(read_str(config_p2, "config_p2")?)?;
        let t =
            plan_optimal(&p.inner, [c1, c2]).map_err(|e| (EpStatus::PlanFailed, e.to_string()))?;
        let text = serde_json::to_string(&t.to_file())
            .map_err(|e| (EpStatus::InvalidArgument, e.to_string()))?;
        let s = to_c(text);
        write_out(out, s, "out").inspect_err(|_| ep_string_free(s))
    })
}
