/**
 * Consent gates everything: until the participant explicitly accepts the
 * policy, no data-bearing view renders and no data request is issued.
 * The decision persists, so an accepted client never re-prompts.
 */

import { Clock, KeyValueStore } from "./support.js";

const STORAGE_KEY = "sensediary.consent";

export type ConsentStatus = "absent" | "accepted" | "declined";

export const POLICY_TEXT = `This app records context data from this device: location cells,
weather, ambient light segments, movement, steps, phone un/lock,
headphone plug state, battery level, nearby wifi and bluetooth as
salted one-way digests, call/music/photo/notification metadata, and
per-hour app usage and traffic. Identifying values never leave the
device in raw form; everything is stored under a random pseudonym that
cannot be linked to your email. Your study enrollment (email) lives in
a separate registry with no connection to the telemetry. You can stop
collection at any time by declining here or requesting deletion; data
collection and upload start only after you accept.`;

export class ConsentGate {
  constructor(private store: KeyValueStore, private clock: Clock) {}

  status(): ConsentStatus {
    const raw = this.store.get(STORAGE_KEY);
    if (raw === null) return "absent";
    const parsed = JSON.parse(raw);
    return parsed.accepted ? "accepted" : "declined";
  }

  acceptedAt(): number | null {
    const raw = this.store.get(STORAGE_KEY);
    if (raw === null) return null;
    const parsed = JSON.parse(raw);
    return parsed.accepted ? parsed.accepted_at : null;
  }

  accept(): void {
    if (this.status() === "accepted") return; // never silently reset
    this.store.set(
      STORAGE_KEY,
      JSON.stringify({ accepted: true, accepted_at: this.clock.nowMs() }),
    );
  }

  decline(): void {
    if (this.status() === "accepted") return;
    this.store.set(STORAGE_KEY, JSON.stringify({ accepted: false }));
  }

  dataCallsAllowed(): boolean {
    return this.status() === "accepted";
  }
}

/**
 * Wraps a fetch-like function so that no request can leave the client
 * while consent is anything but accepted. Data views use only this.
 */
export function consentGuardedFetch(
  gate: ConsentGate,
  fetchFn: (url: string, init?: RequestInit) => Promise<Response>,
): (url: string, init?: RequestInit) => Promise<Response> {
  return (url, init) => {
    if (!gate.dataCallsAllowed()) {
      return Promise.reject(new Error("consent not accepted: data calls are disabled"));
    }
    return fetchFn(url, init);
  };
}
