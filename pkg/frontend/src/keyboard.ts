/** Keyboard decoding: raw key values to semantic review actions. */

import type { RemovalReason } from "./api.js";

export type KeyAction =
  | { kind: "keep" }
  | { kind: "begin-remove" }
  | { kind: "reason"; reason: RemovalReason }
  | { kind: "cancel" }
  | { kind: "next" }
  | { kind: "prev" }
  | { kind: "zoom" }
  | { kind: "none" };

const REASON_KEYS: Record<string, RemovalReason> = {
  i: "inappropriate",
  t: "text_screenshot",
  u: "under_exposed",
  d: "duplicate",
  o: "other",
};

export const BROWSE_HINT =
  "K keep · R remove · arrows move · Z zoom";
export const REASON_HINT =
  "reason? I inappropriate · T text/screenshot · U under-exposed · D duplicate · O other · Esc cancel";

/**
 * Two-layer layout: after R the next key must pick a removal reason
 * (or Esc to back out), so the reason layer shadows everything else.
 */
export function decodeKey(key: string, awaitingReason: boolean): KeyAction {
  const k = key.length === 1 ? key.toLowerCase() : key;
  if (awaitingReason) {
    const reason = REASON_KEYS[k];
    if (reason !== undefined) return { kind: "reason", reason };
    if (k === "Escape") return { kind: "cancel" };
    return { kind: "none" };
  }
  switch (k) {
    case "k":
      return { kind: "keep" };
    case "r":
      return { kind: "begin-remove" };
    case "ArrowRight":
    case "ArrowDown":
      return { kind: "next" };
    case "ArrowLeft":
    case "ArrowUp":
      return { kind: "prev" };
    case "z":
      return { kind: "zoom" };
    default:
      return { kind: "none" };
  }
}
