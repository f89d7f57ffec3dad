/**
 * One-question-at-a-time wizard with resume.
 *
 * Exactly one item is presented per screen (no scrolling through the
 * instrument). The session persists to storage after every answer, so
 * closing the tab mid-questionnaire and coming back restores the cursor.
 * Back navigation only moves the view; recorded answers are never lost.
 */

import {
  Item,
  QuestionnaireDef,
  Session,
  VersionMismatchError,
  answeredCount,
  newSession,
  nextItem,
  progress,
  validateResponse,
} from "./questionnaire.js";
import { Clock, KeyValueStore } from "./support.js";

function storageKey(dateIso: string): string {
  return `sensediary.session.${dateIso}`;
}

export interface WizardScreen {
  item: Item | null; // exactly one item, or null when the session is done
  index: number; // 0-based position of the shown item
  total: number;
  progress: number; // answered / total, drives the progress bar
  reviewing: boolean; // true when looking back at an answered item
  existingAnswer: number | string | null;
}

export class Wizard {
  readonly session: Session;
  private viewIndex: number;

  constructor(
    private def: QuestionnaireDef,
    private store: KeyValueStore,
    private clock: Clock,
    private dateIso: string,
  ) {
    const stored = this.store.get(storageKey(dateIso));
    if (stored !== null) {
      const session = JSON.parse(stored) as Session;
      if (session.version !== def.version) {
        throw new VersionMismatchError(session.version, def.version);
      }
      this.session = session;
    } else {
      this.session = newSession(def, clock.nowMs());
    }
    this.viewIndex = Math.min(answeredCount(this.session), def.items.length);
  }

  screen(): WizardScreen {
    const cursor = answeredCount(this.session);
    const done = this.viewIndex >= this.def.items.length;
    const item = done ? null : this.def.items[this.viewIndex];
    return {
      item,
      index: this.viewIndex,
      total: this.def.items.length,
      progress: progress(this.session, this.def),
      reviewing: !done && this.viewIndex < cursor,
      existingAnswer: item ? this.session.answers[item.id] ?? null : null,
    };
  }

  isCompleted(): boolean {
    return this.session.completed_at !== null;
  }

  /** Record a response for the shown item; advances to the next screen. */
  answer(response: number | string): string | null {
    const shown = this.screen().item;
    if (shown === null) return "questionnaire already completed";
    const problem = validateResponse(shown, response);
    if (problem !== null) return problem;
    this.session.answers[shown.id] = response;
    if (
      answeredCount(this.session) === this.def.items.length &&
      this.session.completed_at === null
    ) {
      this.session.completed_at = this.clock.nowMs();
    }
    this.persist();
    this.viewIndex = Math.min(answeredCount(this.session), this.def.items.length);
    return null;
  }

  /** Step back to review an earlier item; answers stay recorded. */
  back(): void {
    if (this.viewIndex > 0) this.viewIndex -= 1;
  }

  forward(): void {
    const cursor = answeredCount(this.session);
    if (this.viewIndex < cursor && this.viewIndex < this.def.items.length) {
      this.viewIndex += 1;
    }
  }

  private persist(): void {
    this.store.set(storageKey(this.dateIso), JSON.stringify(this.session));
  }
}

export function resumeOrStart(
  def: QuestionnaireDef,
  store: KeyValueStore,
  clock: Clock,
  dateIso: string,
): Wizard {
  return new Wizard(def, store, clock, dateIso);
}

export { nextItem };
