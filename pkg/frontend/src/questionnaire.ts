/**
 * Questionnaire definition/session types matching the backend's JSON
 * formats, plus the client-side compliance computation. Sessions stay on
 * this device; only the met/unmet flag ever reaches the backend.
 */

export type ItemKind = "likert5" | "single_choice" | "free_text";

export interface Item {
  id: string;
  prompt: string;
  kind: ItemKind;
  reverse_keyed: boolean;
  options: string[];
}

export interface QuestionnaireDef {
  version: number;
  items: Item[];
  scales: Record<string, number[]>;
}

export interface Session {
  version: number;
  started_at: number;
  answers: Record<string, number | string>;
  completed_at: number | null;
}

export class VersionMismatchError extends Error {
  constructor(sessionVersion: number, defVersion: number) {
    super(`session is for version ${sessionVersion}, definition is ${defVersion}`);
    this.name = "VersionMismatchError";
  }
}

export function parseQuestionnaire(text: string): QuestionnaireDef {
  const raw = JSON.parse(text);
  return {
    version: raw.version,
    items: raw.items.map((it: Record<string, unknown>) => ({
      id: it.id as string,
      prompt: it.prompt as string,
      kind: it.kind as ItemKind,
      reverse_keyed: Boolean(it.reverse_keyed),
      options: (it.options as string[]) ?? [],
    })),
    scales: raw.scales ?? {},
  };
}

export function newSession(def: QuestionnaireDef, nowMs: number): Session {
  return { version: def.version, started_at: nowMs, answers: {}, completed_at: null };
}

export function answeredCount(session: Session): number {
  return Object.keys(session.answers).length;
}

export function progress(session: Session, def: QuestionnaireDef): number {
  if (session.version !== def.version) throw new VersionMismatchError(session.version, def.version);
  if (def.items.length === 0) return 1;
  return answeredCount(session) / def.items.length;
}

export function nextItem(session: Session, def: QuestionnaireDef): Item | null {
  if (session.version !== def.version) throw new VersionMismatchError(session.version, def.version);
  const cursor = answeredCount(session);
  return cursor >= def.items.length ? null : def.items[cursor];
}

export function validateResponse(item: Item, response: number | string): string | null {
  if (item.kind === "likert5") {
    if (typeof response !== "number" || !Number.isInteger(response) || response < 1 || response > 5) {
      return "pick a value from 1 to 5";
    }
  } else if (item.kind === "single_choice") {
    if (typeof response !== "string" || !item.options.includes(response)) {
      return "pick one of the listed options";
    }
  } else if (typeof response !== "string") {
    return "enter some text";
  }
  return null;
}

export function scoreScales(session: Session, def: QuestionnaireDef): Record<string, number> {
  if (session.completed_at === null) throw new Error("session not completed");
  const scores: Record<string, number> = {};
  for (const [name, indices] of Object.entries(def.scales)) {
    let total = 0;
    for (const index of indices) {
      const item = def.items[index];
      const response = session.answers[item.id] as number;
      total += item.reverse_keyed ? 6 - response : response;
    }
    scores[name] = total / indices.length;
  }
  return scores;
}

/** Same semantics as the device-side compliance rule: rate >= threshold. */
export function compliance(
  completedDayCount: number,
  lengthDays: number,
  threshold: number,
): { rate: number; met: boolean } {
  const rate = completedDayCount / lengthDays;
  return { rate, met: rate >= threshold };
}
