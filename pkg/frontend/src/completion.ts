/**
 * Study completion: the button appears only once the study window has
 * elapsed; the compliance rate is computed locally from the session
 * calendar (the backend cannot and must not do it), reported as a bare
 * met/unmet flag, and the issued participation code is shown and kept.
 */

import { AlreadyReportedError, ServiceApi } from "./api.js";
import { compliance } from "./questionnaire.js";
import { Clock, KeyValueStore } from "./support.js";

const CODE_KEY = "sensediary.participation_code";

export interface StudyWindow {
  startDateIso: string; // first study day
  lengthDays: number;
  threshold: number;
}

export type CompletionOutcome =
  | { kind: "code"; code: string; rate: number }
  | { kind: "ineligible"; rate: number };

export function dayCount(window: StudyWindow, todayIso: string): number {
  const start = Date.parse(window.startDateIso + "T00:00:00Z");
  const today = Date.parse(todayIso + "T00:00:00Z");
  return Math.floor((today - start) / 86_400_000);
}

/** Hidden until the full study window has elapsed. */
export function completionButtonVisible(window: StudyWindow, clock: Clock): boolean {
  const start = Date.parse(window.startDateIso + "T00:00:00Z");
  return clock.nowMs() >= start + window.lengthDays * 86_400_000;
}

export function completedDatesInWindow(window: StudyWindow, completed: string[]): number {
  const start = Date.parse(window.startDateIso + "T00:00:00Z");
  const end = start + window.lengthDays * 86_400_000;
  return completed.filter((iso) => {
    const t = Date.parse(iso + "T00:00:00Z");
    return t >= start && t < end;
  }).length;
}

export class CompletionFlow {
  constructor(
    private api: ServiceApi,
    private window: StudyWindow,
    private store: KeyValueStore,
  ) {}

  storedCode(): string | null {
    return this.store.get(CODE_KEY);
  }

  localCompliance(completedDates: string[]): { rate: number; met: boolean } {
    const count = completedDatesInWindow(this.window, completedDates);
    return compliance(count, this.window.lengthDays, this.window.threshold);
  }

  async run(participantToken: string, completedDates: string[]): Promise<CompletionOutcome> {
    const { rate, met } = this.localCompliance(completedDates);
    const stored = this.storedCode();
    if (stored !== null) {
      return { kind: "code", code: stored, rate };
    }
    let code: string | null;
    try {
      code = await this.api.reportCompletion(participantToken, met);
    } catch (error) {
      if (error instanceof AlreadyReportedError && error.participationCode) {
        code = error.participationCode; // backend kept it; show it again
      } else {
        throw error;
      }
    }
    if (code === null) {
      return { kind: "ineligible", rate };
    }
    this.store.set(CODE_KEY, code);
    return { kind: "code", code, rate };
  }
}
