/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#ifndef ONUW_H
#define ONUW_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum OnuwStatus {
  ONUW_STATUS_OK = 0,
  /**
   * A required pointer argument was null.
   */
  ONUW_STATUS_NULL_POINTER = 1,
  ONUW_STATUS_INVALID_ARGUMENT = 2,
  /**
   * The game rules rejected the action.
   */
  ONUW_STATUS_GAME_RULE = 3,
  ONUW_STATUS_IO = 4,
  ONUW_STATUS_MODEL = 5,
  ONUW_STATUS_PLANNER = 6,
  /**
   * Rust code panicked; the handle involved should be freed.
   */
  ONUW_STATUS_PANIC = 7,
} OnuwStatus;

typedef enum OnuwPhase {
  ONUW_PHASE_NIGHT = 0,
  ONUW_PHASE_DISCUSSION = 1,
  ONUW_PHASE_VOTING = 2,
  ONUW_PHASE_FINISHED = 3,
} OnuwPhase;

typedef enum OnuwTeam {
  ONUW_TEAM_VILLAGE = 0,
  ONUW_TEAM_WEREWOLF = 1,
} OnuwTeam;

/**
 * One game in progress.
 */
typedef struct OnuwGame OnuwGame;

/**
 * A belief model.
 */
typedef struct OnuwModel OnuwModel;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Library version as a static nul-terminated string.
 */
const char *onuw_version(void);

/**
 * Message of the last failed call on this thread, or null after a
 * successful call. Valid until the next call into the library.
 */
const char *onuw_last_error(void);

/**
 * # Safety
 * `s` must be null or a string returned by this library, freed once.
 */
void onuw_string_free(char *s);

/**
 * Deals a new five-player game from `seed`.
 *
 * # Safety
 * `out` must be a valid pointer.
 */
enum OnuwStatus onuw_game_new(uint64_t seed, struct OnuwGame **out);

/**
 * # Safety
 * `game` must be null or a handle from [`onuw_game_new`], freed once.
 */
void onuw_game_free(struct OnuwGame *game);

/**
 * # Safety
 * Pointers must be valid.
 */
enum OnuwStatus onuw_game_num_players(const struct OnuwGame *game, size_t *out);

/**
 * # Safety
 * Pointers must be valid.
 */
enum OnuwStatus onuw_game_phase(const struct OnuwGame *game, enum OnuwPhase *out);

/**
 * Resolves the night with seeded uniform choices for every seat.
 *
 * # Safety
 * `game` must be valid.
 */
enum OnuwStatus onuw_game_resolve_random_night(struct OnuwGame *game);

/**
 * Seat whose turn it is to speak. Fails outside the discussion.
 *
 * # Safety
 * Pointers must be valid.
 */
enum OnuwStatus onuw_game_current_speaker(const struct OnuwGame *game, size_t *out);

/**
 * Records a statement; its intentions are parsed from `text`.
 *
 * # Safety
 * `game` must be valid and `text` a nul-terminated string.
 */
enum OnuwStatus onuw_game_say(struct OnuwGame *game,
                              size_t speaker,
                              const char *text,
                              uint8_t face,
                              uint8_t tone);

/**
 * # Safety
 * `game` must be valid.
 */
enum OnuwStatus onuw_game_vote(struct OnuwGame *game, size_t voter, size_t target);

/**
 * Winning team of a finished game.
 *
 * # Safety
 * Pointers must be valid.
 */
enum OnuwStatus onuw_game_winner(const struct OnuwGame *game, enum OnuwTeam *out);

/**
 * Full game log as JSON, including hidden cards and night actions.
 *
 * # Safety
 * Pointers must be valid; free the string with [`onuw_string_free`].
 */
enum OnuwStatus onuw_game_log_json(const struct OnuwGame *game, char **out);

/**
 * Loads a checkpoint directory.
 *
 * # Safety
 * `path` must be a nul-terminated string and `out` valid.
 */
enum OnuwStatus onuw_model_load(const char *path, struct OnuwModel **out);

/**
 * Randomly initialized five-player model, mainly for tests and benchmarks.
 *
 * # Safety
 * `out` must be valid.
 */
enum OnuwStatus onuw_model_init(size_t hidden,
                                size_t layers,
                                size_t heads,
                                uint64_t seed,
                                struct OnuwModel **out);

/**
 * # Safety
 * `model` must be null or a handle from this library, freed once.
 */
void onuw_model_free(struct OnuwModel *model);

/**
 * # Safety
 * Pointers must be valid.
 */
enum OnuwStatus onuw_model_num_players(const struct OnuwModel *model, size_t *out);

/**
 * Writes the belief matrix after the game's dialogue, row-major, into
 * `out[0..len]` with `len == n * n`. Before any statement the matrix is
 * uniform.
 *
 * # Safety
 * Handles must be valid and `out` must point to `len` doubles.
 */
enum OnuwStatus onuw_model_belief(const struct OnuwModel *model,
                                  const struct OnuwGame *game,
                                  double *out,
                                  size_t len);

/**
 * Plans `agent`'s next statement after the game's dialogue with MCTS.
 * The result is JSON with `text`, `actions`, `face`, `tone` and `reward`.
 *
 * # Safety
 * Handles must be valid; free the string with [`onuw_string_free`].
 */
enum OnuwStatus onuw_plan_json(const struct OnuwModel *model,
                               const struct OnuwGame *game,
                               size_t agent,
                               size_t iterations,
                               uint64_t seed,
                               char **out);

/**
 * Runs a team-mode tournament of offline agents and returns the match
 * report as JSON. Kinds are `"scripted"` or `"react"`.
 *
 * # Safety
 * Strings must be nul-terminated; free the result with
 * [`onuw_string_free`].
 */
enum OnuwStatus onuw_simulate_json(size_t games,
                                   uint64_t seed,
                                   const char *village_agent,
                                   const char *werewolf_agent,
                                   char **out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* ONUW_H */
