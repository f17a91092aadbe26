#ifndef TELEOP_H
#define TELEOP_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum TeleopConvention {
  /**
   * x right, y up, z forward.
   */
  TELEOP_CONVENTION_UNITY_LH_YUP = 0,
  TELEOP_CONVENTION_ANCHOR_RH_YUP = 1,
  /**
   * x forward, y left, z up.
   */
  TELEOP_CONVENTION_ROS_RH_ZUP = 2,
} TeleopConvention;

typedef enum TeleopMode {
  TELEOP_MODE_NONE = 0,
  TELEOP_MODE_FOLLOW = 1,
  TELEOP_MODE_SELECT = 2,
  TELEOP_MODE_ARM = 3,
} TeleopMode;

typedef enum TeleopStatus {
  TELEOP_STATUS_OK = 0,
  TELEOP_STATUS_NULL_POINTER = 1,
  TELEOP_STATUS_INVALID_ARGUMENT = 2,
  /**
   * A command or request was refused; see the last error for the reason.
   */
  TELEOP_STATUS_REJECTED = 3,
  TELEOP_STATUS_PROTOCOL = 4,
  /**
   * The output buffer is too small; the needed size was written back.
   */
  TELEOP_STATUS_BUFFER_TOO_SMALL = 5,
  /**
   * Nothing available yet.
   */
  TELEOP_STATUS_EMPTY = 6,
  TELEOP_STATUS_PANIC = 7,
} TeleopStatus;

/**
 * Incremental frame decoder.
 */
typedef struct TeleopDecoder TeleopDecoder;

/**
 * Operator-side mode machine with default configuration.
 */
typedef struct TeleopModes TeleopModes;

/**
 * Simulated robot with default limits, starting at the world origin.
 */
typedef struct TeleopRobot TeleopRobot;

typedef struct TeleopVec3 {
  double x;
  double y;
  double z;
} TeleopVec3;

typedef struct TeleopQuat {
  double x;
  double y;
  double z;
  double w;
} TeleopQuat;

typedef struct TeleopTransform {
  struct TeleopVec3 pos;
  struct TeleopQuat rot;
  enum TeleopConvention convention;
} TeleopTransform;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Copies the calling thread's last error message into `buf` as a
 * NUL-terminated string, truncating to fit. Returns the full message
 * length in bytes, excluding the terminator.
 *
 * # Safety
 * `buf` must be null or point to `cap` writable bytes.
 */
size_t teleop_last_error(char *buf, size_t cap);

/**
 * # Safety
 * `out` must be a valid pointer.
 */
enum TeleopStatus teleop_convert_point(struct TeleopVec3 p,
                                       enum TeleopConvention from,
                                       enum TeleopConvention to,
                                       struct TeleopVec3 *out);

/**
 * # Safety
 * `out` must be a valid pointer.
 */
enum TeleopStatus teleop_convert_transform(struct TeleopTransform t,
                                           enum TeleopConvention to,
                                           struct TeleopTransform *out);

/**
 * `a ∘ b`. Both must share a convention.
 *
 * # Safety
 * `out` must be a valid pointer.
 */
enum TeleopStatus teleop_compose(struct TeleopTransform a,
                                 struct TeleopTransform b,
                                 struct TeleopTransform *out);

/**
 * # Safety
 * `out` must be a valid pointer.
 */
enum TeleopStatus teleop_invert(struct TeleopTransform t, struct TeleopTransform *out);

/**
 * Yaw-only quaternion facing `(dx, dy)` in the robot ground plane.
 *
 * # Safety
 * `out` must be a valid pointer.
 */
enum TeleopStatus teleop_heading_quat(double dx, double dy, struct TeleopQuat *out);

/**
 * Hand pose seen from the head: `inv(world_head) ∘ world_vrobot`.
 *
 * # Safety
 * `out` must be a valid pointer.
 */
enum TeleopStatus teleop_head_to_hand(struct TeleopTransform world_head,
                                      struct TeleopTransform world_vrobot,
                                      struct TeleopTransform *out);

/**
 * # Safety
 * `out` must be a valid pointer.
 */
enum TeleopStatus teleop_init_vrobot(struct TeleopTransform world_head,
                                     struct TeleopTransform hand_offset,
                                     struct TeleopTransform *out);

/**
 * Encodes one frame into `buf`. `written` receives the frame size, or
 * the size needed when the result is `BufferTooSmall`.
 *
 * # Safety
 * `topic` must be a NUL-terminated string; `payload` must point to
 * `payload_len` readable bytes (or be null when the length is 0); `buf` must
 * point to `cap` writable bytes; `written` must be valid.
 */
enum TeleopStatus teleop_encode_frame(const char *topic,
                                      const uint8_t *payload,
                                      size_t payload_len,
                                      uint8_t *buf,
                                      size_t cap,
                                      size_t *written);

struct TeleopDecoder *teleop_decoder_new(void);

/**
 * # Safety
 * `dec` must come from [`teleop_decoder_new`] and not be used afterwards.
 */
void teleop_decoder_free(struct TeleopDecoder *dec);

/**
 * Feeds bytes in any chunking. A malformed stream returns `Protocol` and
 * the decoder refuses further input.
 *
 * # Safety
 * `dec` must be a live decoder; `bytes` must point to `len` readable bytes.
 */
enum TeleopStatus teleop_decoder_feed(struct TeleopDecoder *dec, const uint8_t *bytes, size_t len);

/**
 * Pops the next decoded frame. The topic is written NUL-terminated.
 * Returns `Empty` when no complete frame is buffered and `BufferTooSmall`
 * (frame kept, sizes written back) when either buffer cannot hold it.
 *
 * # Safety
 * `dec` must be a live decoder; buffers must hold their stated capacities;
 * the length pointers must be valid.
 */
enum TeleopStatus teleop_decoder_next(struct TeleopDecoder *dec,
                                      char *topic,
                                      size_t topic_cap,
                                      size_t *topic_len,
                                      uint8_t *payload,
                                      size_t payload_cap,
                                      size_t *payload_len);

struct TeleopModes *teleop_modes_new(void);

/**
 * # Safety
 * `m` must come from [`teleop_modes_new`] and not be used afterwards.
 */
void teleop_modes_free(struct TeleopModes *m);

/**
 * Dispatches one voice command. `head` is the head pose in the headset
 * world; `cursor` is the gaze hit or null. Returns `Rejected` with the
 * reason code as the last error when the command is refused.
 *
 * # Safety
 * `m` must be live; `text` NUL-terminated; `head` valid; `cursor` null or valid.
 */
enum TeleopStatus teleop_modes_dispatch(struct TeleopModes *m,
                                        const char *text,
                                        const struct TeleopTransform *head,
                                        const struct TeleopVec3 *cursor);

/**
 * # Safety
 * `m` must be a live mode context.
 */
enum TeleopMode teleop_modes_current(const struct TeleopModes *m);

/**
 * # Safety
 * `m` must be a live mode context.
 */
bool teleop_modes_is_active(const struct TeleopModes *m);

struct TeleopRobot *teleop_robot_new(void);

/**
 * # Safety
 * `r` must come from [`teleop_robot_new`] and not be used afterwards.
 */
void teleop_robot_free(struct TeleopRobot *r);

/**
 * Basic robot command such as `claim`, `power on`, `stand`, `spin left`.
 *
 * # Safety
 * `r` must be live; `cmd` NUL-terminated.
 */
enum TeleopStatus teleop_robot_command(struct TeleopRobot *r, const char *cmd);

/**
 * Body goal relative to the current body pose.
 *
 * # Safety
 * `r` must be live.
 */
enum TeleopStatus teleop_robot_go_to_pose(struct TeleopRobot *r,
                                          struct TeleopVec3 pos,
                                          struct TeleopQuat quat);

/**
 * Hand goal in the body frame. A negative `duration` means "not given"
 * and falls back to the legacy fixed duration.
 *
 * # Safety
 * `r` must be live.
 */
enum TeleopStatus teleop_robot_gripper_pos(struct TeleopRobot *r,
                                           struct TeleopTransform hand,
                                           double duration);

/**
 * Advances the simulation by `dt` seconds.
 *
 * # Safety
 * `r` must be live.
 */
enum TeleopStatus teleop_robot_step(struct TeleopRobot *r, double dt);

/**
 * # Safety
 * `r` must be live; `out` valid.
 */
enum TeleopStatus teleop_robot_body(const struct TeleopRobot *r, struct TeleopTransform *out);

/**
 * Hand pose in the body frame.
 *
 * # Safety
 * `r` must be live; `out` valid.
 */
enum TeleopStatus teleop_robot_hand(const struct TeleopRobot *r, struct TeleopTransform *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* TELEOP_H */
