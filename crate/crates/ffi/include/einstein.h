#ifndef EINSTEIN_H
#define EINSTEIN_H

/* Generated by cbindgen; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum EpGameStatus {
  EP_GAME_STATUS_RUNNING = 0,
  EP_GAME_STATUS_SOLVED = 1,
  EP_GAME_STATUS_LIMIT_REACHED = 2,
} EpGameStatus;

typedef enum EpOutcome {
  EP_OUTCOME_ACCEPTED = 0,
  EP_OUTCOME_REJECTED_PLACEMENT = 1,
  EP_OUTCOME_ILLEGAL_NO_OP = 2,
} EpOutcome;

typedef enum EpStatus {
  EP_STATUS_OK = 0,
  EP_STATUS_NULL_ARGUMENT = 1,
  EP_STATUS_INVALID_ARGUMENT = 2,
  EP_STATUS_PARSE_ERROR = 3,
  EP_STATUS_ILLEGAL_ACTION = 4,
  EP_STATUS_NOT_YOUR_TURN = 5,
  EP_STATUS_GAME_OVER = 6,
  EP_STATUS_PLAN_FAILED = 7,
  EP_STATUS_PANIC = 99,
} EpStatus;

/**
 * A game in progress.
 */
typedef struct EpGame EpGame;

/**
 * A generated or loaded puzzle.
 */
typedef struct EpPuzzle EpPuzzle;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message for the last failed call on this thread; empty after a success.
 * The pointer stays valid until the next call on the same thread.
 */
const char *ep_last_error_message(void);

/**
 * # Safety
 * `s` must come from this library or be null.
 */
void ep_string_free(char *s);

/**
 * # Safety
 * `out` must be a valid pointer.
 */
enum EpStatus ep_puzzle_generate(uint32_t n_objects, uint64_t seed, struct EpPuzzle **out);

/**
 * # Safety
 * `json` must be a NUL-terminated string and `out` a valid pointer.
 */
enum EpStatus ep_puzzle_from_json(const char *json, struct EpPuzzle **out);

/**
 * # Safety
 * `puzzle` must be a live handle and `out` a valid pointer.
 */
enum EpStatus ep_puzzle_to_json(const struct EpPuzzle *puzzle, char **out);

/**
 * # Safety
 * `puzzle` must come from this library or be null.
 */
void ep_puzzle_free(struct EpPuzzle *puzzle);

/**
 * Starts a game. Configs are `provide_and_seek`, `provide_only`,
 * `seek_only`, `none` or their short forms.
 *
 * # Safety
 * Pointers must be valid; the puzzle may be freed afterwards.
 */
enum EpStatus ep_game_new(const struct EpPuzzle *puzzle,
                          const char *config_p1,
                          const char *config_p2,
                          uint32_t step_limit,
                          struct EpGame **out);

/**
 * # Safety
 * `game` must come from this library or be null.
 */
void ep_game_free(struct EpGame *game);

/**
 * Applies a canonical action for the player to move. An illegal action
 * leaves the game unchanged and returns `IllegalAction`.
 *
 * # Safety
 * Pointers must be valid; `outcome` may be null.
 */
enum EpStatus ep_game_apply(struct EpGame *game, const char *action, enum EpOutcome *outcome);

/**
 * # Safety
 * Pointers must be valid.
 */
enum EpStatus ep_game_status(const struct EpGame *game, enum EpGameStatus *out);

/**
 * Steps consumed so far; 0 for a null handle.
 *
 * # Safety
 * `game` must be a live handle or null.
 */
uint32_t ep_game_step_count(const struct EpGame *game);

/**
 * Fraction of objects at their goal; negative for a null handle.
 *
 * # Safety
 * `game` must be a live handle or null.
 */
double ep_game_subgoal_fraction(const struct EpGame *game);

/**
 * Full state snapshot as JSON.
 *
 * # Safety
 * Pointers must be valid.
 */
enum EpStatus ep_game_state_json(const struct EpGame *game, char **out);

/**
 * Prompt text for player 1 or 2.
 *
 * # Safety
 * Pointers must be valid.
 */
enum EpStatus ep_game_observation_text(const struct EpGame *game, uint32_t player, char **out);

/**
 * Runs a verifier stack on raw policy output for the player to move and
 * writes the failure labels as a JSON array (empty when it passes).
 * Unparseable output yields `["format_following"]`.
 *
 * # Safety
 * Pointers must be valid.
 */
enum EpStatus ep_verify_action(const struct EpGame *game,
                               const char *stack,
                               const char *output,
                               char **out);

/**
 * Optimal joint plan as a trajectory JSON object.
 *
 * # Safety
 * Pointers must be valid.
 */
enum EpStatus ep_plan_optimal(const struct EpPuzzle *puzzle,
                              const char *config_p1,
                              const char *config_p2,
                              char **out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* EINSTEIN_H */
