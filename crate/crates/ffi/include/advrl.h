#ifndef ADVRL_H
#define ADVRL_H

/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Result of every fallible call.
 */
typedef enum AdvrlStatus {
  ADVRL_STATUS_OK = 0,
  /**
   * A required pointer argument was NULL.
   */
  ADVRL_STATUS_NULL_POINTER = 1,
  /**
   * A string argument was not valid UTF-8.
   */
  ADVRL_STATUS_INVALID_UTF8 = 2,
  /**
   * Input failed to parse or validate, or an operation precondition failed.
   */
  ADVRL_STATUS_INVALID_INPUT = 3,
  /**
   * The request is well-formed but declined as computationally out of scope.
   */
  ADVRL_STATUS_SCOPE_REFUSAL = 4,
  /**
   * Internal failure; the library caught a panic.
   */
  ADVRL_STATUS_INTERNAL = 5,
} AdvrlStatus;

/**
 * Planned attack with its values.
 */
typedef struct AdvrlAttack AdvrlAttack;

/**
 * Attack feasibility sets for one model.
 */
typedef struct AdvrlConstraints AdvrlConstraints;

/**
 * Planned defense with its values.
 */
typedef struct AdvrlDefense AdvrlDefense;

/**
 * Validated environment.
 */
typedef struct AdvrlModel AdvrlModel;

/**
 * Victim policy.
 */
typedef struct AdvrlPolicy AdvrlPolicy;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Name of the last error on this thread (e.g. `"RowNotStochastic"`), or
 * NULL. Valid until the next failing call on the same thread.
 */
const char *advrl_last_error_name(void);

/**
 * Message of the last error on this thread, or NULL.
 */
const char *advrl_last_error_message(void);

/**
 * Library version; static storage.
 */
const char *advrl_version(void);

/**
 * Free a string returned by this library. NULL is ignored.
 *
 * # Safety
 * `s` must come from this library and not have been freed.
 */
void advrl_string_free(char *s);

/**
 * Parse and validate an environment.
 *
 * # Safety
 * `json` must be a NUL-terminated string; `out` must be writable.
 */
enum AdvrlStatus advrl_model_from_json(const char *json, struct AdvrlModel **out);

/**
 * # Safety
 * `model` must come from this library and not have been freed. NULL is ignored.
 */
void advrl_model_free(struct AdvrlModel *model);

/**
 * Sizes of a model's index sets. Any of the outputs may be NULL.
 *
 * # Safety
 * `model` must be a live handle; non-NULL outputs must be writable.
 */
enum AdvrlStatus advrl_model_sizes(const struct AdvrlModel *model,
                                   uintptr_t *states,
                                   uintptr_t *observations,
                                   uintptr_t *actions,
                                   uintptr_t *rewards);

/**
 * Parse a victim policy for `model` and check it fits.
 *
 * # Safety
 * `model` must be a live handle, `json` NUL-terminated, `out` writable.
 */
enum AdvrlStatus advrl_policy_from_json(const struct AdvrlModel *model,
                                        const char *json,
                                        struct AdvrlPolicy **out);

/**
 * # Safety
 * `policy` must come from this library and not have been freed. NULL is ignored.
 */
void advrl_policy_free(struct AdvrlPolicy *policy);

/**
 * Expected value of `policy` on `model` under the initial distribution.
 *
 * # Safety
 * Handles must be live; `out` writable.
 */
enum AdvrlStatus advrl_evaluate_policy(const struct AdvrlModel *model,
                                       const struct AdvrlPolicy *policy,
                                       double *out);

/**
 * Build feasibility sets for `model` from a constraint-rules document.
 *
 * # Safety
 * `model` must be a live handle, `json` NUL-terminated, `out` writable.
 */
enum AdvrlStatus advrl_constraints_from_json(const struct AdvrlModel *model,
                                             const char *json,
                                             struct AdvrlConstraints **out);

/**
 * # Safety
 * `constraints` must come from this library and not have been freed. NULL is ignored.
 */
void advrl_constraints_free(struct AdvrlConstraints *constraints);

/**
 * Optimal attack on `policy`. NULL `constraints` means no attacks; NULL
 * `objective_json` means `negate_reward`.
 *
 * # Safety
 * Non-NULL handles must be live, strings NUL-terminated, `out` writable.
 */
enum AdvrlStatus advrl_plan_attack(const struct AdvrlModel *model,
                                   const struct AdvrlPolicy *policy,
                                   const struct AdvrlConstraints *constraints,
                                   const char *objective_json,
                                   double epsilon,
                                   struct AdvrlAttack **out);

/**
 * Attacker objective and victim value of a planned attack. Either output may be NULL.
 *
 * # Safety
 * `attack` must be a live handle; non-NULL outputs writable.
 */
enum AdvrlStatus advrl_attack_values(const struct AdvrlAttack *attack,
                                     double *objective_value,
                                     double *victim_value);

/**
 * Attack solution as JSON; free with [`advrl_string_free`].
 *
 * # Safety
 * `attack` must be a live handle; `out` writable.
 */
enum AdvrlStatus advrl_attack_to_json(const struct AdvrlAttack *attack, char **out);

/**
 * # Safety
 * `attack` must come from this library and not have been freed. NULL is ignored.
 */
void advrl_attack_free(struct AdvrlAttack *attack);

/**
 * Robust defense. Finite-horizon models use backward induction (`zero_sum`
 * nonzero selects the zero-sum recursion); discounted models solve the
 * zero-sum game. Observation attacks are refused with `SCOPE_REFUSAL`.
 *
 * # Safety
 * Non-NULL handles must be live, strings NUL-terminated, `out` writable.
 */
enum AdvrlStatus advrl_plan_defense(const struct AdvrlModel *model,
                                    const struct AdvrlConstraints *constraints,
                                    const char *objective_json,
                                    int32_t zero_sum,
                                    double epsilon,
                                    struct AdvrlDefense **out);

/**
 * Victim and attacker values of a defense. Either output may be NULL.
 *
 * # Safety
 * `defense` must be a live handle; non-NULL outputs writable.
 */
enum AdvrlStatus advrl_defense_values(const struct AdvrlDefense *defense,
                                      double *victim_value,
                                      double *attacker_value);

/**
 * Defense solution as JSON; free with [`advrl_string_free`].
 *
 * # Safety
 * `defense` must be a live handle; `out` writable.
 */
enum AdvrlStatus advrl_defense_to_json(const struct AdvrlDefense *defense, char **out);

/**
 * # Safety
 * `defense` must come from this library and not have been freed. NULL is ignored.
 */
void advrl_defense_free(struct AdvrlDefense *defense);

/**
 * Run a grid-world scenario and write its values (clean, attacked, defense)
 * to the outputs. NULL `layout_json` means the built-in reference layout;
 * `surface` is one of `perceived_state`, `true_state`, `action`, `reward`.
 * The defense value is NaN when the defense step is skipped.
 *
 * # Safety
 * Strings must be NUL-terminated; outputs writable.
 */
enum AdvrlStatus advrl_gridworld_values(const char *layout_json,
                                        const char *surface,
                                        double *clean_value,
                                        double *attacked_value,
                                        double *defense_value);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* ADVRL_H */
